//! Exact stochastic simulation of an age-structured prey–predator system in
//! which each predator alternates between a searching and a manipulating
//! status, with spell durations drawn from general (possibly non-exponential,
//! prey-density-dependent) distributions.
//!
//! The crate bundles four layers:
//!
//! * [`hazards`] / [`demography`] — the interaction-time laws (hazard,
//!   survival, exact samplers, means) and the age-dependent birth/death rates.
//! * [`responses`] — the macroscopic functional response `phi(x)` and predator
//!   growth rate `psi(x)` computed from the laws, with closed forms for the
//!   classical Holling presets.
//! * [`ibm`] — the event-driven individual-based simulator under the slow–fast
//!   scaling `(K1, K2)`, recording scaled trajectories and the age–status
//!   occupation measure.
//! * [`ode`] / [`harness`] — the limiting two-dimensional dynamical system
//!   (integration, conservation law, equilibria, Jacobians) and a convergence
//!   harness that measures how fast the scaled simulator approaches it.
//!
//! The `predprey` binary exposes all of this behind JSON experiment configs;
//! see [`config`] for the schema and the built-in presets.

pub mod artifacts;
pub mod config;
pub mod demography;

pub mod harness;
pub mod hazards;
pub mod ibm;
pub mod ode;
pub mod quad;
pub mod responses;
pub mod stats;

pub use demography::{DemographyRates, RateCurve, StatusDemography};
pub use hazards::{DensityMap, InteractionLaw, StatusTag, XRange};
