//! Density-dependent interaction-time distributions.
//!
//! A predator in status `r` with `x` preys around finishes its current spell
//! at age-dependent rate `alpha_r(a, x)`. Each law exposes the hazard, its
//! integral, the survival function `p_r(x, a) = exp(-int_0^a alpha)`, an exact
//! sampler and the mean spell length. Density dependence enters through
//! [`DensityMap`]s applied to the family parameters (rate, support end, shape,
//! scale, ...).

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::quad;

/// Survival level below which infinite-support integrals are truncated; the
/// remainder is added back as a hazard-bounded tail estimate.
pub const TAIL_SURVIVAL: f64 = 1e-12;

/// Predator status: searching for a prey or manipulating a caught one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusTag {
    Search,
    Manipulate,
}

impl StatusTag {
    pub const ALL: [StatusTag; 2] = [StatusTag::Search, StatusTag::Manipulate];

    /// The other status.
    pub fn complement(self) -> StatusTag {
        match self {
            StatusTag::Search => StatusTag::Manipulate,
            StatusTag::Manipulate => StatusTag::Search,
        }
    }

    pub fn index(self) -> usize {
        match self {
            StatusTag::Search => 0,
            StatusTag::Manipulate => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StatusTag::Search => "search",
            StatusTag::Manipulate => "manipulate",
        }
    }
}

/// Admissible prey-density interval on which laws are validated and queried.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XRange {
    pub min: f64,
    pub max: f64,
}

impl Default for XRange {
    fn default() -> Self {
        // Mirrors the localization window used by the limit theorem.
        XRange {
            min: 1e-6,
            max: 1e6,
        }
    }
}

impl XRange {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Log-spaced probe grid including both endpoints.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..n)
            .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// How a scalar law parameter depends on the prey density `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum DensityMap {
    /// `c`
    Constant { c: f64 },
    /// `c / x`
    Reciprocal { c: f64 },
    /// `c / x^2`
    ReciprocalSquare { c: f64 },
    /// `c / sqrt(x)`
    ReciprocalSqrt { c: f64 },
    /// `a + b x`
    Affine { a: f64, b: f64 },
}

impl DensityMap {
    pub fn constant(c: f64) -> Self {
        DensityMap::Constant { c }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DensityMap::Constant { c } => c,
            DensityMap::Reciprocal { c } => c / x,
            DensityMap::ReciprocalSquare { c } => c / (x * x),
            DensityMap::ReciprocalSqrt { c } => c / x.sqrt(),
            DensityMap::Affine { a, b } => a + b * x,
        }
    }

    /// All map kinds are monotone in `x`, so extrema sit at the endpoints.
    fn range_on(&self, r: &XRange) -> (f64, f64) {
        let (u, v) = (self.eval(r.min), self.eval(r.max));
        (u.min(v), u.max(v))
    }

    fn is_strictly_positive_on(&self, r: &XRange) -> bool {
        let (lo, _) = self.range_on(r);
        lo > 0.0 && lo.is_finite() || matches!(self, DensityMap::Constant { c } if *c > 0.0)
    }
}

/// Exponential laws may be parameterized by their rate or by their mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpParam {
    Rate(DensityMap),
    Mean(DensityMap),
}

impl ExpParam {
    fn rate(&self, x: f64) -> f64 {
        match self {
            ExpParam::Rate(m) => m.eval(x),
            ExpParam::Mean(m) => 1.0 / m.eval(x),
        }
    }
}

/// Tabulated hazard samples: `values[i][j]` is the hazard at `x_grid[i]`,
/// `ages[j]`, interpolated bilinearly and extended by its edge values
/// (constant in age beyond the last knot, constant in `x` outside the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHazard {
    pub ages: Vec<f64>,
    /// Empty means the table does not depend on the prey density.
    pub x_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TableHazard {
    fn validate(&self) -> Result<(), LawError> {
        let err = |m: &str| Err(LawError::Table(m.to_string()));
        if self.ages.len() < 2 {
            return err("need at least two age knots");
        }
        if !self.ages.windows(2).all(|w| w[1] > w[0]) || self.ages[0] < 0.0 {
            return err("age knots must be nonnegative and strictly increasing");
        }
        if !self.x_grid.windows(2).all(|w| w[1] > w[0]) {
            return err("x grid must be strictly increasing");
        }
        let rows = if self.x_grid.is_empty() {
            1
        } else {
            self.x_grid.len()
        };
        if self.values.len() != rows {
            return err("one hazard row per x-grid point expected");
        }
        for row in &self.values {
            if row.len() != self.ages.len() {
                return err("hazard row length must match the age knots");
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return err("hazard values must be finite and nonnegative");
            }
        }
        Ok(())
    }

    /// Hazard row at density `x` (linear in `x`, clamped at the grid edges).
    fn row_at(&self, x: f64) -> Vec<f64> {
        if self.x_grid.is_empty() || self.values.len() == 1 {
            return self.values[0].clone();
        }
        if x <= self.x_grid[0] {
            return self.values[0].clone();
        }
        if x >= *self.x_grid.last().unwrap() {
            return self.values.last().unwrap().clone();
        }
        let i = self.x_grid.partition_point(|g| *g <= x) - 1;
        let w = (x - self.x_grid[i]) / (self.x_grid[i + 1] - self.x_grid[i]);
        self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect()
    }
}

/// Piecewise-linear hazard in age for one fixed density, with constant
/// extension on both sides. All cumulative quantities are exact integrals of
/// the interpolant.
#[derive(Debug, Clone)]
struct TableSlice {
    ages: Vec<f64>,
    values: Vec<f64>,
}

impl TableSlice {
    fn hazard(&self, a: f64) -> f64 {
        let ages = &self.ages;
        if a <= ages[0] {
            return self.values[0];
        }
        if a >= *ages.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let i = ages.partition_point(|g| *g <= a) - 1;
        let w = (a - ages[i]) / (ages[i + 1] - ages[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn cumulative(&self, a0: f64, a1: f64) -> f64 {
        debug_assert!(a1 >= a0);
        // Trapezoid rule is exact for a piecewise-linear integrand as long as
        // every knot between a0 and a1 is a breakpoint.
        let mut total = 0.0;
        let mut left = a0;
        let mut h_left = self.hazard(a0);
        for (knot, _) in self.ages.iter().zip(&self.values) {
            if *knot <= left {
                continue;
            }
            if *knot >= a1 {
                break;
            }
            let h = self.hazard(*knot);
            total += 0.5 * (h_left + h) * (knot - left);
            left = *knot;
            h_left = h;
        }
        total + 0.5 * (h_left + self.hazard(a1)) * (a1 - left)
    }

    /// Smallest `s >= 0` with `cumulative(a, a + s) = budget`, or infinity if
    /// the hazard cannot absorb the budget.
    fn invert(&self, a: f64, budget: f64) -> f64 {
        if budget <= 0.0 {
            return 0.0;
        }
        let a_last = *self.ages.last().unwrap();
        let h_last = *self.values.last().unwrap();
        let to_last = if a < a_last {
            self.cumulative(a, a_last)
        } else {
            0.0
        };
        let (mut lo, mut hi);
        if budget > to_last {
            // Constant-hazard tail beyond the table.
            if h_last <= 0.0 {
                return f64::INFINITY;
            }
            return a_last.max(a) - a + (budget - to_last) / h_last;
        } else {
            lo = 0.0;
            hi = a_last - a;
        }
        // Bisection on the exact cumulative integral.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cumulative(a, a + mid) < budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + hi) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum LawKind {
    /// Degenerate zero-length spell (no manipulate phase / Holling type I).
    Zero,
    Exponential { param: ExpParam },
    /// Uniform on `[0, upper(x)]`.
    Uniform { upper: DensityMap },
    /// Standard Pareto: hazard `k(x)/a` on `a >= z(x)`, zero below.
    Pareto { shape: DensityMap, scale: DensityMap },
    LogNormal { mu: DensityMap, sigma: DensityMap },
    Table(TableHazard),
}

#[derive(Debug, Error)]
pub enum LawError {
    #[error("parameter `{name}` must stay strictly positive and finite on the admissible density range")]
    NonPositiveParam { name: &'static str },
    #[error("pareto shape k(x) = {shape} at x = {x} has a divergent mean interaction time (k must exceed 1)")]
    DivergentMean { shape: f64, x: f64 },
    #[error("table hazard: {0}")]
    Table(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("age {age} outside the support [0, {a_max})")]
    AgeOutOfRange { age: f64, a_max: f64 },
    #[error("prey density {x} outside the admissible range [{min}, {max}]")]
    DensityOutOfRange { x: f64, min: f64, max: f64 },
}

/// One interaction-time distribution together with the density range on which
/// it was validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLaw {
    kind: LawKind,
    x_range: XRange,
}

impl InteractionLaw {
    /// Spell of length zero: completion is immediate. Mean 0, no support.
    pub fn zero() -> Self {
        InteractionLaw {
            kind: LawKind::Zero,
            x_range: XRange::default(),
        }
    }

    pub fn exponential_rate(rate: DensityMap, x_range: XRange) -> Result<Self, LawError> {
        if !rate.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "rate" });
        }
        Ok(InteractionLaw {
            kind: LawKind::Exponential {
                param: ExpParam::Rate(rate),
            },
            x_range,
        })
    }

    pub fn exponential_mean(mean: DensityMap, x_range: XRange) -> Result<Self, LawError> {
        if !mean.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "mean" });
        }
        Ok(InteractionLaw {
            kind: LawKind::Exponential {
                param: ExpParam::Mean(mean),
            },
            x_range,
        })
    }

    pub fn uniform(upper: DensityMap, x_range: XRange) -> Result<Self, LawError> {
        if !upper.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "upper" });
        }
        Ok(InteractionLaw {
            kind: LawKind::Uniform { upper },
            x_range,
        })
    }

    pub fn pareto(shape: DensityMap, scale: DensityMap, x_range: XRange) -> Result<Self, LawError> {
        if !shape.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "k" });
        }
        if !scale.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "z" });
        }
        // Fail fast on configurations with E[T] = infinity: the functional
        // response would vanish and the averaging regime breaks down.
        for x in x_range.probe_grid(65) {
            let k = shape.eval(x);
            if k <= 1.0 {
                return Err(LawError::DivergentMean { shape: k, x });
            }
        }
        Ok(InteractionLaw {
            kind: LawKind::Pareto { shape, scale },
            x_range,
        })
    }

    pub fn log_normal(mu: DensityMap, sigma: DensityMap, x_range: XRange) -> Result<Self, LawError> {
        // mu lives on the log scale and may take any sign; sigma must not.
        if !sigma.is_strictly_positive_on(&x_range) {
            return Err(LawError::NonPositiveParam { name: "sigma" });
        }
        Ok(InteractionLaw {
            kind: LawKind::LogNormal { mu, sigma },
            x_range,
        })
    }

    pub fn table(table: TableHazard, x_range: XRange) -> Result<Self, LawError> {
        table.validate()?;
        Ok(InteractionLaw {
            kind: LawKind::Table(table),
            x_range,
        })
    }

    pub fn x_range(&self) -> XRange {
        self.x_range
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, LawKind::Zero)
    }

    /// End of the support `a_inf` at density `x` (infinite for unbounded laws).
    pub fn a_max(&self, x: f64) -> f64 {
        match &self.kind {
            LawKind::Zero => 0.0,
            LawKind::Uniform { upper } => upper.eval(x),
            _ => f64::INFINITY,
        }
    }

    /// Supremum of `a_max` over the admissible density range.
    pub fn a_max_sup(&self) -> f64 {
        match &self.kind {
            LawKind::Zero => 0.0,
            LawKind::Uniform { upper } => upper.range_on(&self.x_range).1,
            _ => f64::INFINITY,
        }
    }

    fn check_x(&self, x: f64) -> Result<(), DomainError> {
        if self.x_range.contains(x) {
            Ok(())
        } else {
            Err(DomainError::DensityOutOfRange {
                x,
                min: self.x_range.min,
                max: self.x_range.max,
            })
        }
    }

    /// The jump rate `alpha_r(a, x)`.
    pub fn hazard(&self, a: f64, x: f64) -> Result<f64, DomainError> {
        self.check_x(x)?;
        let a_max = self.a_max(x);
        if a < 0.0 || a >= a_max {
            return Err(DomainError::AgeOutOfRange { age: a, a_max });
        }
        Ok(self.hazard_unchecked(a, x))
    }

    /// Hazard without domain checks; used by the simulator where `x` follows
    /// the process and boundary values are taken as limits (`x = 0` allowed).
    pub(crate) fn hazard_unchecked(&self, a: f64, x: f64) -> f64 {
        match &self.kind {
            LawKind::Zero => f64::INFINITY,
            LawKind::Exponential { param } => param.rate(x),
            LawKind::Uniform { upper } => 1.0 / (upper.eval(x) - a),
            LawKind::Pareto { shape, scale } => {
                if a >= scale.eval(x) {
                    shape.eval(x) / a
                } else {
                    0.0
                }
            }
            LawKind::LogNormal { mu, sigma } => {
                let (m, s) = (mu.eval(x), sigma.eval(x));
                if a <= 0.0 {
                    return 0.0;
                }
                let z = (a.ln() - m) / s;
                let density = (-0.5 * z * z).exp() / (a * s * (2.0 * std::f64::consts::PI).sqrt());
                let surv = normal_tail(z);
                if surv <= 0.0 {
                    f64::INFINITY
                } else {
                    density / surv
                }
            }
            LawKind::Table(t) => TableSlice {
                ages: t.ages.clone(),
                values: t.row_at(x),
            }
            .hazard(a),
        }
    }

    /// `int_{a0}^{a1} alpha_r(u, x) du`. Returns infinity when `a1` hits the
    /// end of a bounded support.
    pub fn cumulative_hazard(&self, a0: f64, a1: f64, x: f64) -> Result<f64, DomainError> {
        self.check_x(x)?;
        let a_max = self.a_max(x);
        if a0 < 0.0 || a1 < a0 || a1 > a_max {
            return Err(DomainError::AgeOutOfRange {
                age: if a0 < 0.0 { a0 } else { a1 },
                a_max,
            });
        }
        Ok(self.cumulative_hazard_unchecked(a0, a1, x))
    }

    pub(crate) fn cumulative_hazard_unchecked(&self, a0: f64, a1: f64, x: f64) -> f64 {
        if a1 <= a0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::Zero => f64::INFINITY,
            LawKind::Exponential { param } => param.rate(x) * (a1 - a0),
            LawKind::Uniform { upper } => {
                let b = upper.eval(x);
                if a1 >= b {
                    f64::INFINITY
                } else {
                    ((b - a0) / (b - a1)).ln()
                }
            }
            LawKind::Pareto { shape, scale } => {
                let z = scale.eval(x);
                if a1 <= z {
                    0.0
                } else {
                    shape.eval(x) * (a1 / a0.max(z)).ln()
                }
            }
            LawKind::LogNormal { .. } => {
                quad::integrate(|u| self.hazard_unchecked(u, x), a0, a1, quad::REL_TOL)
            }
            LawKind::Table(t) => TableSlice {
                ages: t.ages.clone(),
                values: t.row_at(x),
            }
            .cumulative(a0, a1),
        }
    }

    /// Survival function `p_r(x, a) = exp(-int_0^a alpha)`.
    pub fn survival(&self, x: f64, a: f64) -> Result<f64, DomainError> {
        self.check_x(x)?;
        let a_max = self.a_max(x);
        if a < 0.0 || a > a_max {
            return Err(DomainError::AgeOutOfRange { age: a, a_max });
        }
        Ok(self.survival_unchecked(x, a))
    }

    pub(crate) fn survival_unchecked(&self, x: f64, a: f64) -> f64 {
        if a <= 0.0 {
            return 1.0;
        }
        match &self.kind {
            LawKind::Zero => 0.0,
            LawKind::Exponential { param } => (-param.rate(x) * a).exp(),
            LawKind::Uniform { upper } => {
                let b = upper.eval(x);
                ((b - a) / b).max(0.0)
            }
            LawKind::Pareto { shape, scale } => {
                let z = scale.eval(x);
                if a <= z {
                    1.0
                } else {
                    (z / a).powf(shape.eval(x))
                }
            }
            LawKind::LogNormal { mu, sigma } => {
                normal_tail((a.ln() - mu.eval(x)) / sigma.eval(x))
            }
            LawKind::Table(_) => (-self.cumulative_hazard_unchecked(0.0, a, x)).exp(),
        }
    }

    /// Exact sample of the spell length `T_r(x)`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match &self.kind {
            LawKind::Zero => 0.0,
            LawKind::Exponential { param } => exp1(rng) / param.rate(x),
            LawKind::Uniform { upper } => upper.eval(x) * rng.random::<f64>(),
            LawKind::Pareto { shape, scale } => {
                let u: f64 = rng.random();
                scale.eval(x) * (1.0 - u).powf(-1.0 / shape.eval(x))
            }
            LawKind::LogNormal { mu, sigma } => {
                let u = positive_unit(rng);
                (mu.eval(x) + sigma.eval(x) * normal_quantile(u)).exp()
            }
            LawKind::Table(t) => {
                let slice = TableSlice {
                    ages: t.ages.clone(),
                    values: t.row_at(x),
                };
                slice.invert(0.0, exp1(rng))
            }
        }
    }

    /// Residual spell length from age `a` that consumes `budget` of cumulative
    /// hazard, i.e. the smallest `s` with `int_a^{a+s} alpha = budget`.
    /// Infinite when the remaining hazard mass is below the budget.
    pub(crate) fn invert_remaining(&self, a: f64, x: f64, budget: f64) -> f64 {
        if budget <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            LawKind::Zero => 0.0,
            LawKind::Exponential { param } => budget / param.rate(x),
            LawKind::Uniform { upper } => {
                let b = upper.eval(x);
                if a >= b {
                    return 0.0;
                }
                (b - a) * (-(-budget).exp_m1())
            }
            LawKind::Pareto { shape, scale } => {
                let start = a.max(scale.eval(x));
                start * (budget / shape.eval(x)).exp() - a
            }
            LawKind::LogNormal { mu, sigma } => {
                let (m, s) = (mu.eval(x), sigma.eval(x));
                let target = self.survival_unchecked(x, a) * (-budget).exp();
                if target <= 0.0 {
                    return f64::INFINITY;
                }
                let y = (m + s * normal_tail_quantile(target)).exp();
                (y - a).max(0.0)
            }
            LawKind::Table(t) => TableSlice {
                ages: t.ages.clone(),
                values: t.row_at(x),
            }
            .invert(a, budget),
        }
    }

    /// Mean spell length `E[T_r(x)] = int_0^{a_inf} p_r(x, a) da`, using the
    /// family's closed form where one exists.
    pub fn mean_time(&self, x: f64) -> Result<f64, DomainError> {
        self.check_x(x)?;
        Ok(match self.closed_form_mean(x) {
            Some(m) => m,
            None => self.mean_time_quadrature_unchecked(x),
        })
    }

    pub fn closed_form_mean(&self, x: f64) -> Option<f64> {
        match &self.kind {
            LawKind::Zero => Some(0.0),
            LawKind::Exponential { param } => Some(1.0 / param.rate(x)),
            LawKind::Uniform { upper } => Some(0.5 * upper.eval(x)),
            LawKind::Pareto { shape, scale } => {
                let k = shape.eval(x);
                Some(scale.eval(x) * k / (k - 1.0))
            }
            LawKind::LogNormal { mu, sigma } => {
                let s = sigma.eval(x);
                Some((mu.eval(x) + 0.5 * s * s).exp())
            }
            LawKind::Table(_) => None,
        }
    }

    /// Quadrature route for the mean: integrates the survival function with
    /// tail truncation at [`TAIL_SURVIVAL`]. Returns infinity when the tail
    /// hazard vanishes and the integral diverges.
    pub fn mean_time_quadrature(&self, x: f64) -> Result<f64, DomainError> {
        self.check_x(x)?;
        Ok(self.mean_time_quadrature_unchecked(x))
    }

    fn mean_time_quadrature_unchecked(&self, x: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let a_max = self.a_max(x);
        if a_max.is_finite() {
            return quad::integrate(|a| self.survival_unchecked(x, a), 0.0, a_max, quad::REL_TOL);
        }
        let Some(cut) = self.tail_cutoff(x) else {
            return f64::INFINITY;
        };
        let body = quad::integrate(|a| self.survival_unchecked(x, a), 0.0, cut, quad::REL_TOL);
        // Remaining mass is at most p(cut)/inf-tail-hazard; with p(cut) below
        // TAIL_SURVIVAL this is far under the quadrature tolerance.
        let h = self.hazard_unchecked(cut, x);
        let tail = if h > 0.0 {
            self.survival_unchecked(x, cut) / h
        } else {
            f64::INFINITY
        };
        if tail.is_finite() {
            body + tail
        } else {
            f64::INFINITY
        }
    }

    /// First age (by doubling from the law's scale) where the survival drops
    /// below `TAIL_SURVIVAL`; `None` when it never does within 2^60 scales,
    /// which signals a divergent mean.
    fn tail_cutoff(&self, x: f64) -> Option<f64> {
        let scale = match self.closed_form_mean(x) {
            Some(m) if m.is_finite() && m > 0.0 => m,
            _ => 1.0,
        };
        let mut a = scale;
        for _ in 0..60 {
            if self.survival_unchecked(x, a) < TAIL_SURVIVAL {
                return Some(a);
            }
            a *= 2.0;
        }
        None
    }

    /// Age at which the survival first falls below `eps` (bisection between
    /// doubling brackets); the support end for bounded laws if that is sooner.
    pub fn age_where_survival_below(&self, x: f64, eps: f64) -> f64 {
        let a_max = self.a_max(x);
        if self.is_zero() {
            return 0.0;
        }
        if a_max.is_finite() && self.survival_unchecked(x, a_max) >= eps {
            return a_max;
        }
        let mut hi = match self.closed_form_mean(x) {
            Some(m) if m.is_finite() && m > 0.0 => m,
            _ => 1.0,
        };
        let mut lo = 0.0;
        for _ in 0..200 {
            if self.survival_unchecked(x, hi.min(a_max)) < eps {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        let mut hi = hi.min(a_max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.survival_unchecked(x, mid) < eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Standard normal upper tail probability.
fn normal_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF.
fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of [`normal_tail`]: the `z` with upper tail probability `q`.
fn normal_tail_quantile(q: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * q)
}

/// Standard Exp(1) draw from one uniform.
pub(crate) fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

fn positive_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn range() -> XRange {
        XRange::default()
    }

    fn exp_identity() -> InteractionLaw {
        // rate lambda(x) = x
        InteractionLaw::exponential_rate(DensityMap::Affine { a: 0.0, b: 1.0 }, range()).unwrap()
    }

    fn uniform01() -> InteractionLaw {
        InteractionLaw::uniform(DensityMap::constant(1.0), range()).unwrap()
    }

    fn pareto21() -> InteractionLaw {
        InteractionLaw::pareto(DensityMap::constant(2.0), DensityMap::constant(1.0), range())
            .unwrap()
    }

    fn lognormal(mu: f64, sigma: f64) -> InteractionLaw {
        InteractionLaw::log_normal(DensityMap::constant(mu), DensityMap::constant(sigma), range())
            .unwrap()
    }

    #[test]
    fn hazard_examples() {
        assert_eq!(exp_identity().hazard(3.7, 2.0).unwrap(), 2.0);
        assert!((uniform01().hazard(0.5, 4.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((pareto21().hazard(4.0, 7.0).unwrap() - 0.5).abs() < 1e-14);
        // Below the Pareto scale the hazard is flat zero.
        assert_eq!(pareto21().hazard(0.5, 7.0).unwrap(), 0.0);
    }

    #[test]
    fn hazard_domain_errors() {
        let u = uniform01();
        assert!(matches!(
            u.hazard(1.0, 2.0),
            Err(DomainError::AgeOutOfRange { .. })
        ));
        assert!(matches!(
            u.hazard(0.5, 1e9),
            Err(DomainError::DensityOutOfRange { .. })
        ));
    }

    #[test]
    fn cumulative_hazard_examples() {
        let law = InteractionLaw::exponential_rate(DensityMap::constant(2.0), range()).unwrap();
        assert!((law.cumulative_hazard(0.0, 3.0, 1.0).unwrap() - 6.0).abs() < 1e-12);

        let u = uniform01();
        let h = u.cumulative_hazard(0.0, 0.5, 1.0).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(u.cumulative_hazard(0.0, 1.0, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn lognormal_cumulative_hazard_matches_trapezoid_oracle() {
        // Oracle: fixed-grid trapezoid refinement of the hazard at 1e6 points.
        // For LogNormal(0, 1) the exact value is -ln(survival(1)) = ln 2.
        let law = lognormal(0.0, 1.0);
        let n = 1_000_000usize;
        let mut acc = 0.0;
        let mut prev = law.hazard_unchecked(0.0, 1.0);
        for i in 1..=n {
            let a = i as f64 / n as f64;
            let h = law.hazard_unchecked(a, 1.0);
            acc += 0.5 * (prev + h) / n as f64;
            prev = h;
        }
        let quadrature = law.cumulative_hazard(0.0, 1.0, 1.0).unwrap();
        assert!((quadrature - acc).abs() < 1e-8, "gk {quadrature} vs trapezoid {acc}");
        assert!((quadrature - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn survival_examples() {
        let exp = InteractionLaw::exponential_rate(DensityMap::constant(1.0), range()).unwrap();
        assert_eq!(exp.survival(1.0, 0.0).unwrap(), 1.0);
        assert!((uniform01().survival(1.0, 0.25).unwrap() - 0.75).abs() < 1e-14);
        assert!((pareto21().survival(1.0, 2.0).unwrap() - 0.25).abs() < 1e-14);
        assert_eq!(uniform01().survival(1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn survival_via_cumulative_matches_closed_form() {
        // The two routes must agree to 1e-8 wherever a closed form exists.
        let laws = [
            exp_identity(),
            uniform01(),
            pareto21(),
            lognormal(0.3, 0.8),
        ];
        for law in &laws {
            for x in [0.5, 1.0, 3.0] {
                let a_hi = law.a_max(x).min(6.0);
                for i in 0..20 {
                    let a = a_hi * (i as f64 + 0.5) / 20.5;
                    let direct = law.survival(x, a).unwrap();
                    let via = (-law.cumulative_hazard(0.0, a, x).unwrap()).exp();
                    assert!(
                        (direct - via).abs() <= 1e-8,
                        "{law:?} at a={a}, x={x}: {direct} vs {via}"
                    );
                }
            }
        }
    }

    #[test]
    fn mean_time_examples() {
        assert!((exp_identity().mean_time(2.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((uniform01().mean_time(1.0).unwrap() - 0.5).abs() < 1e-14);
        let ln05 = lognormal(0.0, 0.5);
        assert!((ln05.mean_time(1.0).unwrap() - (0.125f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn mean_quadrature_matches_closed_forms() {
        let laws = [exp_identity(), uniform01(), pareto21(), lognormal(0.0, 0.5)];
        for law in &laws {
            for x in [0.7, 2.0, 10.0] {
                let closed = law.mean_time(x).unwrap();
                let quadrature = law.mean_time_quadrature(x).unwrap();
                assert!(
                    ((closed - quadrature) / closed).abs() < 1e-6,
                    "{law:?} x={x}: {closed} vs {quadrature}"
                );
            }
        }
    }

    #[test]
    fn pareto_divergent_mean_rejected() {
        let err = InteractionLaw::pareto(
            DensityMap::constant(0.9),
            DensityMap::constant(1.0),
            range(),
        );
        assert!(matches!(err, Err(LawError::DivergentMean { .. })));
    }

    #[test]
    fn table_hazard_matches_constant_rate() {
        // A flat table is an exponential in disguise.
        let t = TableHazard {
            ages: vec![0.0, 1.0, 2.0],
            x_grid: vec![],
            values: vec![vec![0.7, 0.7, 0.7]],
        };
        let law = InteractionLaw::table(t, range()).unwrap();
        assert!((law.hazard(0.3, 1.0).unwrap() - 0.7).abs() < 1e-14);
        assert!((law.cumulative_hazard(0.0, 5.0, 1.0).unwrap() - 3.5).abs() < 1e-12);
        assert!((law.mean_time(1.0).unwrap() - 1.0 / 0.7).abs() < 1e-6);
    }

    #[test]
    fn table_hazard_bilinear_in_x() {
        let t = TableHazard {
            ages: vec![0.0, 1.0],
            x_grid: vec![1.0, 2.0],
            values: vec![vec![1.0, 1.0], vec![3.0, 3.0]],
        };
        let law = InteractionLaw::table(t, range()).unwrap();
        assert!((law.hazard(0.5, 1.5).unwrap() - 2.0).abs() < 1e-14);
        // Constant extension outside the grid.
        assert!((law.hazard(0.5, 0.2).unwrap() - 1.0).abs() < 1e-14);
        assert!((law.hazard(0.5, 9.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn table_with_vanishing_tail_has_divergent_mean() {
        let t = TableHazard {
            ages: vec![0.0, 1.0],
            x_grid: vec![],
            values: vec![vec![1.0, 0.0]],
        };
        let law = InteractionLaw::table(t, range()).unwrap();
        assert!(law.mean_time(1.0).unwrap().is_infinite());
    }

    #[test]
    fn zero_law_degenerates() {
        let z = InteractionLaw::zero();
        assert_eq!(z.mean_time(1.0).unwrap(), 0.0);
        assert_eq!(z.survival_unchecked(1.0, 0.5), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(z.sample(1.0, &mut rng), 0.0);
    }

    #[test]
    fn uniform_sampler_support_and_mean() {
        let law = uniform01();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = law.sample(1.0, &mut rng);
            assert!((0.0..1.0).contains(&t));
            sum += t;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn pareto_sampler_mean_within_three_se() {
        let law = pareto21();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| law.sample(1.0, &mut rng)).collect();
        let mean = stats::mean(&samples);
        let se = stats::standard_error(&samples);
        assert!(
            (mean - 2.0).abs() < 3.0 * se,
            "mean {mean}, se {se} (zk/(k-1) = 2)"
        );
    }

    #[test]
    fn exponential_sampler_ks() {
        // One-sample KS against 1 - e^{-4a} at the 99% critical value.
        let law = exp_identity();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| law.sample(4.0, &mut rng)).collect();
        let ecdf = stats::Ecdf::new(samples);
        let d = stats::ks_one_sample(&ecdf, |a| 1.0 - (-4.0 * a).exp());
        assert!(d < stats::ks_critical_99(n), "d = {d}");
    }

    #[test]
    fn sampler_survival_dkw_consistency() {
        // Empirical survival from 1e5 draws stays inside the 99% DKW band of
        // the analytic survival at 20 probe ages, for every family.
        let laws = [
            exp_identity(),
            uniform01(),
            pareto21(),
            lognormal(0.0, 1.0),
            InteractionLaw::table(
                TableHazard {
                    ages: vec![0.0, 0.5, 1.5],
                    x_grid: vec![],
                    values: vec![vec![0.2, 1.4, 2.0]],
                },
                range(),
            )
            .unwrap(),
        ];
        let x = 1.3;
        let n = 100_000;
        let band = stats::dkw_band(n, 0.01);
        for (li, law) in laws.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + li as u64);
            let samples: Vec<f64> = (0..n).map(|_| law.sample(x, &mut rng)).collect();
            let ecdf = stats::Ecdf::new(samples);
            let a_hi = law.age_where_survival_below(x, 0.05);
            for i in 1..=20 {
                let a = a_hi * i as f64 / 20.0;
                let emp = 1.0 - ecdf.eval(a);
                let exact = law.survival_unchecked(x, a);
                assert!(
                    (emp - exact).abs() <= band,
                    "law {li} at a={a}: |{emp} - {exact}| > {band}"
                );
            }
        }
    }

    #[test]
    fn invert_remaining_consistency() {
        // invert_remaining is the inverse of cumulative_hazard from any age.
        let laws = [
            exp_identity(),
            uniform01(),
            pareto21(),
            lognormal(0.1, 0.7),
            InteractionLaw::table(
                TableHazard {
                    ages: vec![0.0, 1.0, 3.0],
                    x_grid: vec![],
                    values: vec![vec![0.5, 2.0, 1.0]],
                },
                range(),
            )
            .unwrap(),
        ];
        for law in &laws {
            for x in [0.8, 2.5] {
                for (a_frac, budget) in [(0.0, 0.3), (0.2, 1.0), (0.6, 2.2)] {
                    let a = a_frac * law.a_max(x).min(4.0);
                    let s = law.invert_remaining(a, x, budget);
                    if !s.is_finite() {
                        continue;
                    }
                    let back = law.cumulative_hazard_unchecked(a, a + s, x);
                    assert!(
                        (back - budget).abs() < 1e-9 * (1.0 + budget),
                        "{law:?} a={a} x={x}: {back} vs {budget}"
                    );
                }
            }
        }
    }

    #[test]
    fn monotone_density_dependence_of_mean() {
        // Reciprocal-family means must strictly decrease in x.
        let laws = [
            InteractionLaw::exponential_mean(DensityMap::Reciprocal { c: 1.0 }, range()).unwrap(),
            InteractionLaw::exponential_mean(DensityMap::ReciprocalSquare { c: 2.0 }, range())
                .unwrap(),
            InteractionLaw::exponential_mean(DensityMap::ReciprocalSqrt { c: 0.7 }, range())
                .unwrap(),
            InteractionLaw::uniform(DensityMap::Reciprocal { c: 3.0 }, range()).unwrap(),
        ];
        for law in &laws {
            let grid = XRange { min: 0.1, max: 50.0 }.probe_grid(24);
            for w in grid.windows(2) {
                assert!(
                    law.mean_time(w[1]).unwrap() < law.mean_time(w[0]).unwrap(),
                    "{law:?} not decreasing between {} and {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_law() -> impl Strategy<Value = InteractionLaw> {
            prop_oneof![
                (0.2f64..4.0).prop_map(|r| InteractionLaw::exponential_rate(
                    DensityMap::constant(r),
                    XRange::default()
                )
                .unwrap()),
                (0.5f64..5.0).prop_map(|b| InteractionLaw::uniform(
                    DensityMap::constant(b),
                    XRange::default()
                )
                .unwrap()),
                ((1.2f64..4.0), (0.5f64..2.0)).prop_map(|(k, z)| InteractionLaw::pareto(
                    DensityMap::constant(k),
                    DensityMap::constant(z),
                    XRange::default()
                )
                .unwrap()),
                ((-0.5f64..0.5), (0.3f64..1.2)).prop_map(|(m, s)| InteractionLaw::log_normal(
                    DensityMap::constant(m),
                    DensityMap::constant(s),
                    XRange::default()
                )
                .unwrap()),
            ]
        }

        proptest! {
            #[test]
            fn cumulative_hazard_is_additive(
                law in arb_law(),
                x in 0.5f64..10.0,
                fracs in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
            ) {
                let a_hi = law.a_max(x).min(8.0) * 0.999;
                let mut pts = [fracs.0 * a_hi, fracs.1 * a_hi, fracs.2 * a_hi];
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let [a0, a1, a2] = pts;
                let whole = law.cumulative_hazard(a0, a2, x).unwrap();
                let split = law.cumulative_hazard(a0, a1, x).unwrap()
                    + law.cumulative_hazard(a1, a2, x).unwrap();
                prop_assert!((whole - split).abs() <= 1e-9 * (1.0 + whole.abs()));
            }

            #[test]
            fn survival_starts_at_one_and_decreases(
                law in arb_law(),
                x in 0.5f64..10.0,
            ) {
                prop_assert_eq!(law.survival(x, 0.0).unwrap(), 1.0);
                let a_hi = law.a_max(x).min(10.0) * 0.999;
                let mut last = 1.0;
                for i in 1..=16 {
                    let a = a_hi * i as f64 / 16.0;
                    let s = law.survival(x, a).unwrap();
                    prop_assert!(s <= last + 1e-12);
                    prop_assert!((0.0..=1.0).contains(&s));
                    last = s;
                }
            }

            #[test]
            fn hazard_nonnegative(law in arb_law(), x in 0.5f64..10.0, frac in 0.0f64..0.999) {
                let a = frac * law.a_max(x).min(10.0);
                prop_assert!(law.hazard(a, x).unwrap() >= 0.0);
            }
        }
    }
}
