//! Macroscopic functional response `phi(x)` and predator growth rate `psi(x)`.
//!
//! `phi(x) = 1 / (E[T_S(x)] + E[T_M(x)])` is the per-predator prey consumption
//! rate. `psi(x)` averages the net demographic growth accumulated over one
//! search-manipulate cycle:
//!
//! ```text
//! psi(x) = phi(x) * sum_r int_0^{a_inf} lambda_r(a) p_r(x, a) da
//! ```
//!
//! which equals `E[int_0^{T} lambda] / E[cycle]` by Fubini on the survival
//! representation. Presets with known algebra additionally carry
//! [`ClosedResponses`] so the ODE side can use exact derivatives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demography::DemographyRates;
use crate::hazards::{DomainError, InteractionLaw, StatusTag, XRange, TAIL_SURVIVAL};
use crate::quad;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("mean interaction times must be positive and finite on the density range: {0}")]
    DegenerateMeanTime(String),
    #[error("demographic curve is not finite everywhere")]
    UnboundedDemography,
    #[error("psi is not integrable at x = {x}")]
    NonIntegrableGrowth { x: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Interaction laws plus demography, restricted to a prey-density interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseModel {
    law_search: InteractionLaw,
    law_manipulate: InteractionLaw,
    rates: DemographyRates,
    x_range: XRange,
}

impl ResponseModel {
    pub fn new(
        law_search: InteractionLaw,
        law_manipulate: InteractionLaw,
        rates: DemographyRates,
        x_range: XRange,
    ) -> Result<Self, ModelError> {
        let model = ResponseModel {
            law_search,
            law_manipulate,
            rates,
            x_range,
        };
        for curve in [&model.rates.search, &model.rates.manipulate] {
            let finite = match curve {
                crate::demography::StatusDemography::Split { gamma, beta } => {
                    gamma.is_finite_everywhere() && beta.is_finite_everywhere()
                }
                crate::demography::StatusDemography::Net { lambda } => {
                    lambda.is_finite_everywhere()
                }
            };
            if !finite {
                return Err(ModelError::UnboundedDemography);
            }
        }
        // Spot-check the response pair on a probe grid.
        for x in x_range.probe_grid(17) {
            let cycle = model.mean_cycle(x)?;
            if !(cycle > 0.0) || !cycle.is_finite() {
                return Err(ModelError::DegenerateMeanTime(format!(
                    "E[T_S + T_M] = {cycle} at x = {x}"
                )));
            }
            let psi = model.psi(x)?;
            if !psi.is_finite() {
                return Err(ModelError::NonIntegrableGrowth { x });
            }
        }
        Ok(model)
    }

    pub fn law(&self, status: StatusTag) -> &InteractionLaw {
        match status {
            StatusTag::Search => &self.law_search,
            StatusTag::Manipulate => &self.law_manipulate,
        }
    }

    pub fn rates(&self) -> &DemographyRates {
        &self.rates
    }

    pub fn x_range(&self) -> XRange {
        self.x_range
    }

    fn mean_cycle(&self, x: f64) -> Result<f64, DomainError> {
        Ok(self.law_search.mean_time(x)? + self.law_manipulate.mean_time(x)?)
    }

    /// Functional response via the mean spell lengths (closed forms preferred).
    pub fn phi(&self, x: f64) -> Result<f64, DomainError> {
        Ok(1.0 / self.mean_cycle(x)?)
    }

    /// Functional response via quadrature of `int (p_S + p_M) da` only.
    pub fn phi_quadrature(&self, x: f64) -> Result<f64, DomainError> {
        let denom = self.law_search.mean_time_quadrature(x)?
            + self.law_manipulate.mean_time_quadrature(x)?;
        Ok(1.0 / denom)
    }

    /// Net growth accumulated per unit time, by quadrature of
    /// `lambda_r(a) p_r(x, a)` with the same tail policy as the means.
    pub fn psi(&self, x: f64) -> Result<f64, DomainError> {
        let mut acc = 0.0;
        for status in StatusTag::ALL {
            acc += self.growth_integral(status, x)?;
        }
        Ok(self.phi(x)? * acc)
    }

    /// `int_0^{a_inf} lambda_r(a) p_r(x, a) da` for one status.
    pub fn growth_integral(&self, status: StatusTag, x: f64) -> Result<f64, DomainError> {
        let law = self.law(status);
        if law.is_zero() {
            return Ok(0.0);
        }
        law.survival(x, 0.0)?; // domain check
        let dem = self.rates.status(status);
        let a_end = law.a_max(x);
        let cut = if a_end.is_finite() {
            a_end
        } else {
            law.age_where_survival_below(x, TAIL_SURVIVAL)
        };
        Ok(quad::integrate(
            |a| dem.net_growth(a) * law.survival_unchecked(x, a),
            0.0,
            cut,
            quad::REL_TOL,
        ))
    }

    /// The weighted-mean shortcut, valid when both net growth curves are
    /// constant: `(l_S E[T_S] + l_M E[T_M]) / (E[T_S] + E[T_M])`.
    pub fn psi_weighted_mean(&self, x: f64) -> Option<Result<f64, DomainError>> {
        let l_s = self.rates.search.constant_net()?;
        let l_m = self.rates.manipulate.constant_net()?;
        Some((|| {
            let ts = self.law_search.mean_time(x)?;
            let tm = self.law_manipulate.mean_time(x)?;
            Ok((l_s * ts + l_m * tm) / (ts + tm))
        })())
    }

    /// Row-per-x evaluation for reporting; per-point failures are flagged.
    pub fn response_table(&self, grid: &[f64]) -> Vec<ResponseRow> {
        grid.iter()
            .map(|&x| match (self.phi(x), self.psi(x)) {
                (Ok(phi), Ok(psi)) => ResponseRow {
                    x,
                    phi,
                    psi,
                    error: None,
                },
                (Err(e), _) | (_, Err(e)) => ResponseRow {
                    x,
                    phi: f64::NAN,
                    psi: f64::NAN,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }

    /// Numerical diagnostics mirroring the standing assumptions: mean times
    /// bounded away from zero, an integrability proxy for the hazard growth,
    /// and bounded demographic rates.
    pub fn check_assumptions(&self) -> AssumptionsReport {
        let grid = self.x_range.probe_grid(9);
        let mut min_mean = [f64::INFINITY; 2];
        for status in StatusTag::ALL {
            for &x in &grid {
                if let Ok(m) = self.law(status).mean_time(x) {
                    min_mean[status.index()] = min_mean[status.index()].min(m);
                } else {
                    min_mean[status.index()] = f64::NAN;
                }
            }
        }
        // A zero manipulate law is an allowed degenerate case.
        let mean_ok = StatusTag::ALL.iter().all(|s| {
            let m = min_mean[s.index()];
            m.is_finite() && (m > 0.0 || self.law(*s).is_zero())
        });

        let mut integrability = [IntegrabilityCheck::default(); 2];
        for status in StatusTag::ALL {
            integrability[status.index()] = self.integrability_proxy(status, &grid);
        }
        let integrable = integrability.iter().all(|c| c.pass);

        let sup_birth = self.rates.sup_birth();
        let sup_death = self.rates.sup_death();
        let demography_ok = sup_birth.is_finite() && sup_death.is_finite();

        AssumptionsReport {
            min_mean_time_search: min_mean[0],
            min_mean_time_manipulate: min_mean[1],
            mean_times_positive: mean_ok,
            integrability,
            sup_birth_rate: sup_birth,
            sup_death_rate: sup_death,
            demography_bounded: demography_ok,
            pass: mean_ok && integrable && demography_ok,
        }
    }

    /// Numerical proxy for the integrability assumption:
    /// `int (1 + sup_x alpha_r) exp(-int inf_x alpha_r / 2) da` finite, probed
    /// over the density grid. Divergence shows up as a non-decaying integrand
    /// at ever larger cutoffs.
    fn integrability_proxy(&self, status: StatusTag, grid: &[f64]) -> IntegrabilityCheck {
        let law = self.law(status);
        if law.is_zero() {
            return IntegrabilityCheck {
                value: 0.0,
                pass: true,
            };
        }
        let sup_hazard = |a: f64| {
            grid.iter()
                .map(|&x| law.hazard_unchecked(a, x))
                .fold(0.0f64, f64::max)
        };
        let inf_cum_half = |a: f64| {
            grid.iter()
                .map(|&x| law.cumulative_hazard_unchecked(0.0, a, x))
                .fold(f64::INFINITY, f64::min)
                / 2.0
        };
        let a_sup = law.a_max_sup();
        let integrand = |a: f64| (1.0 + sup_hazard(a)) * (-inf_cum_half(a)).exp();

        let mut total = 0.0;
        let mut left = 0.0;
        let mut width = if a_sup.is_finite() { a_sup / 8.0 } else { 1.0 };
        for _ in 0..64 {
            let right = (left + width).min(a_sup);
            let piece = quad::integrate(&integrand, left, right, 1e-8);
            total += piece;
            left = right;
            if left >= a_sup {
                return IntegrabilityCheck { value: total, pass: true };
            }
            if piece.abs() <= 1e-10 * (1.0 + total.abs()) {
                return IntegrabilityCheck { value: total, pass: true };
            }
            width *= 1.5;
        }
        IntegrabilityCheck {
            value: total,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseRow {
    pub x: f64,
    pub phi: f64,
    pub psi: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IntegrabilityCheck {
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionsReport {
    pub min_mean_time_search: f64,
    pub min_mean_time_manipulate: f64,
    pub mean_times_positive: bool,
    pub integrability: [IntegrabilityCheck; 2],
    pub sup_birth_rate: f64,
    pub sup_death_rate: f64,
    pub demography_bounded: bool,
    pub pass: bool,
}

/// Hard-coded response algebra for the built-in presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClosedResponses {
    /// `phi = c x`, `psi = lambda_S` (no manipulation).
    HollingI { c: f64, lambda_s: f64 },
    /// `phi = c x / (1 + t0 c x)`.
    HollingII {
        c: f64,
        t0: f64,
        lambda_s: f64,
        lambda_m: f64,
    },
    /// `phi = c x^2 / (1 + t0 c x^2)`.
    HollingIII {
        c: f64,
        t0: f64,
        lambda_s: f64,
        lambda_m: f64,
    },
    /// `phi = sqrt(x) / (c + t0 sqrt(x))` (mean search time `c / sqrt(x)`).
    NearestPrey {
        c: f64,
        t0: f64,
        lambda_s: f64,
        lambda_m: f64,
    },
    /// `phi = c x`, `psi = -a + b x`: the classical Lotka–Volterra pair. No
    /// individual-based counterpart exists (psi is an average of bounded
    /// per-age growth rates, so it can never be unbounded in x); this preset
    /// only drives the ODE layer.
    LotkaVolterra { c: f64, a: f64, b: f64 },
    /// `phi = c x`, `psi = -a + b c x / (decay + c x)`: exponential search
    /// with age-penalized growth `lambda_S(u) = -a + b e^{-decay u}` and no
    /// manipulation.
    AgePenalty { c: f64, a: f64, b: f64, decay: f64 },
}

impl ClosedResponses {
    pub fn phi(&self, x: f64) -> f64 {
        match *self {
            ClosedResponses::HollingI { c, .. } => c * x,
            ClosedResponses::HollingII { c, t0, .. } => c * x / (1.0 + t0 * c * x),
            ClosedResponses::HollingIII { c, t0, .. } => c * x * x / (1.0 + t0 * c * x * x),
            ClosedResponses::NearestPrey { c, t0, .. } => {
                let s = x.sqrt();
                s / (c + t0 * s)
            }
            ClosedResponses::LotkaVolterra { c, .. } => c * x,
            ClosedResponses::AgePenalty { c, .. } => c * x,
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match *self {
            ClosedResponses::HollingI { lambda_s, .. } => lambda_s,
            ClosedResponses::HollingII {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let w = t0 * c * x / (1.0 + t0 * c * x);
                lambda_s + (lambda_m - lambda_s) * w
            }
            ClosedResponses::HollingIII {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let w = t0 * c * x * x / (1.0 + t0 * c * x * x);
                lambda_s + (lambda_m - lambda_s) * w
            }
            ClosedResponses::NearestPrey {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let s = x.sqrt();
                let w = t0 * s / (c + t0 * s);
                lambda_s + (lambda_m - lambda_s) * w
            }
            ClosedResponses::LotkaVolterra { a, b, .. } => -a + b * x,
            ClosedResponses::AgePenalty { c, a, b, decay } => -a + b * c * x / (decay + c * x),
        }
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        match *self {
            ClosedResponses::HollingI { c, .. }
            | ClosedResponses::LotkaVolterra { c, .. }
            | ClosedResponses::AgePenalty { c, .. } => c,
            ClosedResponses::HollingII { c, t0, .. } => {
                let d = 1.0 + t0 * c * x;
                c / (d * d)
            }
            ClosedResponses::HollingIII { c, t0, .. } => {
                let d = 1.0 + t0 * c * x * x;
                2.0 * c * x / (d * d)
            }
            ClosedResponses::NearestPrey { c, t0, .. } => {
                let s = x.sqrt();
                let d = c + t0 * s;
                c / (2.0 * s * d * d)
            }
        }
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        match *self {
            ClosedResponses::HollingI { .. } => 0.0,
            ClosedResponses::HollingII {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let d = 1.0 + t0 * c * x;
                (lambda_m - lambda_s) * t0 * c / (d * d)
            }
            ClosedResponses::HollingIII {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let d = 1.0 + t0 * c * x * x;
                (lambda_m - lambda_s) * 2.0 * t0 * c * x / (d * d)
            }
            ClosedResponses::NearestPrey {
                c,
                t0,
                lambda_s,
                lambda_m,
            } => {
                let s = x.sqrt();
                let d = c + t0 * s;
                (lambda_m - lambda_s) * t0 * c / (2.0 * s * d * d)
            }
            ClosedResponses::LotkaVolterra { b, .. } => b,
            ClosedResponses::AgePenalty { c, b, decay, .. } => {
                let d = decay + c * x;
                b * c * decay / (d * d)
            }
        }
    }

    /// `Some(c)` when `phi(x) = c x` exactly (conservation-law presets).
    pub fn linear_phi_coeff(&self) -> Option<f64> {
        match *self {
            ClosedResponses::HollingI { c, .. }
            | ClosedResponses::LotkaVolterra { c, .. }
            | ClosedResponses::AgePenalty { c, .. } => Some(c),
            _ => None,
        }
    }

    /// Closed antiderivative of `psi(v) / v`, used by the conservation law.
    pub fn psi_over_v_antiderivative(&self, v: f64) -> Option<f64> {
        match *self {
            ClosedResponses::HollingI { lambda_s, .. } => Some(lambda_s * v.ln()),
            ClosedResponses::LotkaVolterra { a, b, .. } => Some(-a * v.ln() + b * v),
            ClosedResponses::AgePenalty { c, a, b, decay } => {
                Some(-a * v.ln() + b * (decay + c * v).ln())
            }
            _ => None,
        }
    }
}

/// A model-backed response pair, a closed-form pair, or both (presets).
/// Evaluation prefers the model (the quadrature route); derivatives prefer
/// the registered closed forms and fall back to central differences.
#[derive(Debug, Clone)]
pub struct ResponseSet {
    model: Option<ResponseModel>,
    closed: Option<ClosedResponses>,
}

impl ResponseSet {
    pub fn from_model(model: ResponseModel) -> Self {
        ResponseSet {
            model: Some(model),
            closed: None,
        }
    }

    pub fn from_closed(closed: ClosedResponses) -> Self {
        ResponseSet {
            model: None,
            closed: Some(closed),
        }
    }

    pub fn with_closed(model: ResponseModel, closed: ClosedResponses) -> Self {
        ResponseSet {
            model: Some(model),
            closed: Some(closed),
        }
    }

    pub fn model(&self) -> Option<&ResponseModel> {
        self.model.as_ref()
    }

    pub fn closed(&self) -> Option<&ClosedResponses> {
        self.closed.as_ref()
    }

    pub fn x_range(&self) -> XRange {
        self.model
            .as_ref()
            .map(|m| m.x_range())
            .unwrap_or_default()
    }

    pub fn phi(&self, x: f64) -> Result<f64, DomainError> {
        match (&self.model, &self.closed) {
            (Some(m), _) => m.phi(x),
            (None, Some(c)) => Ok(c.phi(x)),
            (None, None) => unreachable!("empty response set"),
        }
    }

    pub fn psi(&self, x: f64) -> Result<f64, DomainError> {
        match (&self.model, &self.closed) {
            (Some(m), _) => m.psi(x),
            (None, Some(c)) => Ok(c.psi(x)),
            (None, None) => unreachable!("empty response set"),
        }
    }

    pub fn phi_prime(&self, x: f64) -> Result<f64, DomainError> {
        if let Some(c) = &self.closed {
            return Ok(c.phi_prime(x));
        }
        self.central_diff(x, |m, x| m.phi(x))
    }

    pub fn psi_prime(&self, x: f64) -> Result<f64, DomainError> {
        if let Some(c) = &self.closed {
            return Ok(c.psi_prime(x));
        }
        self.central_diff(x, |m, x| m.psi(x))
    }

    fn central_diff(
        &self,
        x: f64,
        f: impl Fn(&ResponseModel, f64) -> Result<f64, DomainError>,
    ) -> Result<f64, DomainError> {
        let m = self.model.as_ref().expect("empty response set");
        let h = 1e-6 * (1.0 + x.abs());
        Ok((f(m, x + h)? - f(m, x - h)?) / (2.0 * h))
    }

    pub fn linear_phi_coeff(&self) -> Option<f64> {
        self.closed.as_ref().and_then(|c| c.linear_phi_coeff())
    }
}
