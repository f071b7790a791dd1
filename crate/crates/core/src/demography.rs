//! Age- and status-dependent predator birth/death rates and scalar prey rates.
//!
//! Per-status demography is given either as a `(gamma, beta)` pair of rate
//! curves or directly as a net growth curve `lambda = gamma - beta`; the net
//! form is split as `gamma = max(lambda, 0)`, `beta = max(-lambda, 0)` so the
//! simulator always sees genuine nonnegative event rates while the response
//! integrals see the signed curve unchanged.

use serde::{Deserialize, Serialize};

use crate::hazards::StatusTag;

/// Scalar age-dependent curve. When used as a birth or death rate the value
/// is clipped below at zero; signed accessors never clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateCurve {
    Constant { value: f64 },
    /// `v(u) = -A + B e^{-C u}` with `C > 0`.
    ExpDecay {
        #[serde(rename = "A")]
        a: f64,
        #[serde(rename = "B")]
        b: f64,
        #[serde(rename = "C")]
        c: f64,
    },
    /// Linear interpolation through `(age, value)` knots, constant beyond the
    /// last knot and before the first.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl RateCurve {
    pub fn constant(value: f64) -> Self {
        RateCurve::Constant { value }
    }

    /// Unclipped value `v(age)`.
    pub fn signed_at(&self, age: f64) -> f64 {
        match self {
            RateCurve::Constant { value } => *value,
            RateCurve::ExpDecay { a, b, c } => -a + b * (-c * age).exp(),
            RateCurve::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                if age <= knots[0].0 {
                    return knots[0].1;
                }
                if age >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let i = knots.partition_point(|(u, _)| *u <= age) - 1;
                let (u0, v0) = knots[i];
                let (u1, v1) = knots[i + 1];
                v0 + (v1 - v0) * (age - u0) / (u1 - u0)
            }
        }
    }

    /// Value clipped below at zero, the form fed to the simulator.
    pub fn rate_at(&self, age: f64) -> f64 {
        self.signed_at(age).max(0.0)
    }

    /// Exact integral of the unclipped curve over `[0, age]`.
    pub fn integral_signed(&self, age: f64) -> f64 {
        match self {
            RateCurve::Constant { value } => value * age,
            RateCurve::ExpDecay { a, b, c } => -a * age + b / c * (1.0 - (-c * age).exp()),
            RateCurve::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                let mut total = 0.0;
                let mut u_prev = 0.0;
                let mut v_prev = self.signed_at(0.0);
                for &(u, v) in knots {
                    if u <= 0.0 {
                        continue;
                    }
                    let (u, v) = if u >= age { (age, self.signed_at(age)) } else { (u, v) };
                    total += 0.5 * (v_prev + v) * (u - u_prev);
                    u_prev = u;
                    v_prev = v;
                    if u >= age {
                        return total;
                    }
                }
                total + v_prev * (age - u_prev)
            }
        }
    }

    /// Certified supremum of the clipped rate over all ages. Both the constant
    /// and exponential-decay forms attain their extrema at `age = 0` or in the
    /// limit; the piecewise form at a knot.
    pub fn sup_rate(&self) -> f64 {
        match self {
            RateCurve::Constant { value } => value.max(0.0),
            RateCurve::ExpDecay { a, b, .. } => (b - a).max(-a).max(0.0),
            RateCurve::PiecewiseLinear { knots } => knots
                .iter()
                .map(|(_, v)| *v)
                .fold(0.0f64, f64::max),
        }
    }

    /// Certified supremum of `max(-v, 0)` (the death-rate side of a net curve).
    pub fn sup_neg_part(&self) -> f64 {
        match self {
            RateCurve::Constant { value } => (-value).max(0.0),
            RateCurve::ExpDecay { a, b, .. } => (a - b).max(*a).max(0.0),
            RateCurve::PiecewiseLinear { knots } => knots
                .iter()
                .map(|(_, v)| -*v)
                .fold(0.0f64, f64::max),
        }
    }

    pub fn is_finite_everywhere(&self) -> bool {
        match self {
            RateCurve::Constant { value } => value.is_finite(),
            RateCurve::ExpDecay { a, b, c } => a.is_finite() && b.is_finite() && *c > 0.0,
            RateCurve::PiecewiseLinear { knots } => {
                knots.iter().all(|(u, v)| u.is_finite() && v.is_finite())
                    && knots.windows(2).all(|w| w[1].0 > w[0].0)
            }
        }
    }
}

/// Demography of one predator status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusDemography {
    Split { gamma: RateCurve, beta: RateCurve },
    /// Net growth curve, split as `gamma = max(v,0)`, `beta = max(-v,0)`.
    Net { lambda: RateCurve },
}

impl StatusDemography {
    pub fn birth_rate(&self, age: f64) -> f64 {
        match self {
            StatusDemography::Split { gamma, .. } => gamma.rate_at(age),
            StatusDemography::Net { lambda } => lambda.signed_at(age).max(0.0),
        }
    }

    pub fn death_rate(&self, age: f64) -> f64 {
        match self {
            StatusDemography::Split { beta, .. } => beta.rate_at(age),
            StatusDemography::Net { lambda } => (-lambda.signed_at(age)).max(0.0),
        }
    }

    /// Signed net growth `lambda(age) = gamma(age) - beta(age)`, never clipped.
    pub fn net_growth(&self, age: f64) -> f64 {
        match self {
            StatusDemography::Split { gamma, beta } => gamma.signed_at(age) - beta.signed_at(age),
            StatusDemography::Net { lambda } => lambda.signed_at(age),
        }
    }

    /// `Lambda(age) = int_0^age lambda(u) du`, closed form per curve kind.
    pub fn integrated_net_growth(&self, age: f64) -> f64 {
        match self {
            StatusDemography::Split { gamma, beta } => {
                gamma.integral_signed(age) - beta.integral_signed(age)
            }
            StatusDemography::Net { lambda } => lambda.integral_signed(age),
        }
    }

    pub fn sup_birth(&self) -> f64 {
        match self {
            StatusDemography::Split { gamma, .. } => gamma.sup_rate(),
            StatusDemography::Net { lambda } => lambda.sup_rate(),
        }
    }

    pub fn sup_death(&self) -> f64 {
        match self {
            StatusDemography::Split { beta, .. } => beta.sup_rate(),
            StatusDemography::Net { lambda } => lambda.sup_neg_part(),
        }
    }

    /// True when the net growth is the same constant at every age.
    pub fn constant_net(&self) -> Option<f64> {
        let probe = self.net_growth(0.0);
        let is_const = match self {
            StatusDemography::Split { gamma, beta } => {
                matches!(gamma, RateCurve::Constant { .. })
                    && matches!(beta, RateCurve::Constant { .. })
            }
            StatusDemography::Net { lambda } => matches!(lambda, RateCurve::Constant { .. }),
        };
        is_const.then_some(probe)
    }
}

/// Full demography: per-status predator curves plus scalar prey rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographyRates {
    pub search: StatusDemography,
    pub manipulate: StatusDemography,
    pub prey_gamma: f64,
    pub prey_beta: f64,
}

impl DemographyRates {
    /// Demography with no predator births or deaths.
    pub fn inert(prey_gamma: f64, prey_beta: f64) -> Self {
        DemographyRates {
            search: StatusDemography::Net {
                lambda: RateCurve::constant(0.0),
            },
            manipulate: StatusDemography::Net {
                lambda: RateCurve::constant(0.0),
            },
            prey_gamma,
            prey_beta,
        }
    }

    pub fn status(&self, status: StatusTag) -> &StatusDemography {
        match status {
            StatusTag::Search => &self.search,
            StatusTag::Manipulate => &self.manipulate,
        }
    }

    pub fn net_growth(&self, status: StatusTag, age: f64) -> f64 {
        self.status(status).net_growth(age)
    }

    pub fn integrated_net_growth(&self, status: StatusTag, age: f64) -> f64 {
        self.status(status).integrated_net_growth(age)
    }

    /// Global thinning bounds over both statuses.
    pub fn sup_birth(&self) -> f64 {
        self.search.sup_birth().max(self.manipulate.sup_birth())
    }

    pub fn sup_death(&self) -> f64 {
        self.search.sup_death().max(self.manipulate.sup_death())
    }

    pub fn prey_net(&self) -> f64 {
        self.prey_gamma - self.prey_beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_at_examples() {
        assert_eq!(RateCurve::constant(0.3).rate_at(17.0), 0.3);
        let decay = RateCurve::ExpDecay { a: 1.0, b: 3.0, c: 1.0 };
        assert!((decay.rate_at(0.0) - 2.0).abs() < 1e-14);
        // Far out the curve sits at -A; the rate view clips to zero.
        assert_eq!(decay.rate_at(1e3), 0.0);
        assert!((decay.signed_at(1e3) + 1.0).abs() < 1e-12);
        let pl = RateCurve::PiecewiseLinear { knots: vec![(0.0, 0.0), (1.0, 2.0)] };
        assert!((pl.rate_at(0.5) - 1.0).abs() < 1e-14);
        assert_eq!(pl.rate_at(5.0), 2.0);
    }

    #[test]
    fn net_growth_examples() {
        let d = StatusDemography::Split {
            gamma: RateCurve::constant(2.0),
            beta: RateCurve::constant(0.5),
        };
        assert!((d.net_growth(3.2) - 1.5).abs() < 1e-14);

        let only_beta = StatusDemography::Split {
            gamma: RateCurve::constant(0.0),
            beta: RateCurve::ExpDecay { a: -0.5, b: 1.0, c: 2.0 },
        };
        assert!((only_beta.net_growth(0.7) + only_beta.status_death(0.7)).abs() < 1e-14);

        // lambda(a) = -1 + 2 e^{-a} crosses zero at ln 2.
        let net = StatusDemography::Net {
            lambda: RateCurve::ExpDecay { a: 1.0, b: 2.0, c: 1.0 },
        };
        assert!(net.net_growth(std::f64::consts::LN_2).abs() < 1e-14);
    }

    impl StatusDemography {
        fn status_death(&self, age: f64) -> f64 {
            match self {
                StatusDemography::Split { beta, .. } => beta.signed_at(age),
                StatusDemography::Net { lambda } => -lambda.signed_at(age),
            }
        }
    }

    #[test]
    fn integrated_net_growth_examples() {
        let const2 = StatusDemography::Net { lambda: RateCurve::constant(2.0) };
        assert!((const2.integrated_net_growth(3.0) - 6.0).abs() < 1e-14);

        // Lambda(a) = -A a + (B/C)(1 - e^{-Ca}); with A=B=C=1 the limit of
        // Lambda(a) + a is 1.
        let decay = StatusDemography::Net {
            lambda: RateCurve::ExpDecay { a: 1.0, b: 1.0, c: 1.0 },
        };
        let a = 60.0;
        assert!((decay.integrated_net_growth(a) + a - 1.0).abs() < 1e-12);

        let tri = StatusDemography::Net {
            lambda: RateCurve::PiecewiseLinear { knots: vec![(0.0, 0.0), (2.0, 2.0)] },
        };
        assert!((tri.integrated_net_growth(2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_integral_with_extension() {
        let pl = RateCurve::PiecewiseLinear { knots: vec![(0.0, 1.0), (1.0, 3.0)] };
        // Trapezoid up to the knot, constant extension afterwards.
        assert!((pl.integral_signed(1.0) - 2.0).abs() < 1e-14);
        assert!((pl.integral_signed(2.0) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn finite_difference_matches_derivative() {
        let curves = [
            StatusDemography::Net { lambda: RateCurve::ExpDecay { a: 0.7, b: 2.0, c: 1.3 } },
            StatusDemography::Split {
                gamma: RateCurve::constant(1.1),
                beta: RateCurve::ExpDecay { a: -0.2, b: 0.5, c: 0.4 },
            },
        ];
        let h = 1e-6;
        for d in &curves {
            for age in [0.1, 0.9, 3.4] {
                let fd = (d.integrated_net_growth(age + h) - d.integrated_net_growth(age)) / h;
                assert!(
                    (fd - d.net_growth(age)).abs() <= 1e-5,
                    "fd {fd} vs lambda {}",
                    d.net_growth(age)
                );
            }
        }
    }

    #[test]
    fn net_split_is_consistent() {
        // gamma - beta from the derived split reproduces the net curve.
        let net = StatusDemography::Net {
            lambda: RateCurve::ExpDecay { a: 1.0, b: 3.0, c: 0.7 },
        };
        for age in [0.0, 0.4, 1.0, 2.5, 10.0] {
            let diff = net.birth_rate(age) - net.death_rate(age);
            assert!((diff - net.net_growth(age)).abs() < 1e-14);
            assert!(net.birth_rate(age) >= 0.0 && net.death_rate(age) >= 0.0);
        }
    }

    #[test]
    fn sup_bounds_dominate() {
        let d = DemographyRates {
            search: StatusDemography::Net {
                lambda: RateCurve::ExpDecay { a: 1.0, b: 3.0, c: 1.0 },
            },
            manipulate: StatusDemography::Split {
                gamma: RateCurve::PiecewiseLinear { knots: vec![(0.0, 0.2), (2.0, 1.4)] },
                beta: RateCurve::constant(0.3),
            },
            prey_gamma: 1.0,
            prey_beta: 0.5,
        };
        for status in StatusTag::ALL {
            let dem = d.status(status);
            for i in 0..200 {
                let age = i as f64 * 0.05;
                assert!(dem.birth_rate(age) <= d.sup_birth() + 1e-12);
                assert!(dem.death_rate(age) <= d.sup_death() + 1e-12);
            }
        }
        assert!((d.prey_net() - 0.5).abs() < 1e-14);
    }
}
