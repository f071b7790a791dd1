//! Convergence experiments against the limiting dynamical system.
//!
//! A study fixes a preset model, a ladder of `(K1, K2)` scales with strictly
//! increasing `lambda_K = K1/K2`, a horizon and a replica count. For every
//! rung it measures, per replica,
//!
//! * the sup-norm distance of the scaled trajectories `(Xi^K, Y^K)` to the
//!   ODE solution, and
//! * total-variation and L1 distances between the empirical occupation
//!   measure and its limit density `y(t) p_r(x(t), a) phi(x(t)) dt da`.
//!
//! Replica medians are the headline statistic: they are robust against the
//! rare near-extinction excursion at the small rungs.

use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

use crate::hazards::StatusTag;
use crate::ibm::{
    self, derive_seed, InitialAges, OccupationMeasure, RecordingConfig, ReplicaConfig,
    ScalingConfig, SimMode, Trajectory,
};
use crate::ode::{LimitSystem, OdeSolution};
use crate::quad;
use crate::responses::ResponseModel;
use crate::stats;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trajectory and ODE solution are on different time grids")]
    GridMismatch,
    #[error("occupation measures use different bins")]
    BinningMismatch,
    #[error("the K ladder must have strictly increasing lambda_K = K1/K2")]
    LadderNotIncreasing,
    #[error("study model error: {0}")]
    Model(String),
    #[error("ode integration failed: {0}")]
    Ode(String),
}

/// Study definition; `run_study` owns execution and reporting.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub ladder: Vec<(f64, f64)>,
    pub t_end: f64,
    pub replicas: usize,
    pub seed_root: u64,
    pub x0: f64,
    pub y0: f64,
    pub recording: RecordingConfig,
    pub mode: SimMode,
    pub ode_rel_tol: f64,
}

impl ConvergenceStudy {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let lambdas: Vec<f64> = self.ladder.iter().map(|(k1, k2)| k1 / k2).collect();
        if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::LadderNotIncreasing);
        }
        Ok(())
    }
}

/// Limit occupation density integrated over the harness bins:
/// `mass[r][t_bin][age_bin] = int_bin y(t) phi(x(t)) p_r(x(t), a) dt da`,
/// with the overflow bin carrying the whole tail above `a_cap`.
#[derive(Debug, Clone, Serialize)]
pub struct LimitOccupation {
    pub t_edges: Vec<f64>,
    pub age_edges: Vec<f64>,
    pub mass: [Vec<Vec<f64>>; 2],
    /// Max over probe times of `|sum_r int p_r phi da - 1|`.
    pub normalization_deviation: f64,
}

/// Gauss–Legendre 4-point weights on [-1, 1].
const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

/// Build the limit occupation on the same bins as an IBM run, from a dense
/// ODE solution.
pub fn limit_occupation(
    model: &ResponseModel,
    ode: &OdeSolution,
    t_edges: &[f64],
    age_edges: &[f64],
) -> Result<LimitOccupation, HarnessError> {
    let t_bins = t_edges.len() - 1;
    let age_bins = age_edges.len() - 1;
    let a_cap = age_edges[age_bins];
    let mut mass = [
        vec![vec![0.0; age_bins + 1]; t_bins],
        vec![vec![0.0; age_bins + 1]; t_bins],
    ];
    let mut norm_dev = 0.0f64;

    for ti in 0..t_bins {
        let (lo, hi) = (t_edges[ti], t_edges[ti + 1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (gx, gw) in GL4_X.iter().zip(GL4_W) {
            let t = mid + half * gx;
            let (x, y) = ode.eval(t);
            let phi = model.phi(x).map_err(|e| HarnessError::Model(e.to_string()))?;
            let mut slice_total = 0.0;
            for status in StatusTag::ALL {
                let law = model.law(status);
                let s = status.index();
                if law.is_zero() {
                    continue;
                }
                let mean = law
                    .mean_time(x)
                    .map_err(|e| HarnessError::Model(e.to_string()))?;
                let mut within = 0.0;
                for ai in 0..age_bins {
                    let seg = bin_survival_integral(law, x, age_edges[ai], age_edges[ai + 1]);
                    within += seg;
                    mass[s][ti][ai] += gw * half * y * phi * seg;
                }
                // Overflow bin: the exact remainder of the mean.
                let tail = (mean - within).max(0.0);
                mass[s][ti][age_bins] += gw * half * y * phi * tail;
                slice_total += phi * mean;
            }
            norm_dev = norm_dev.max((slice_total - 1.0).abs());
            let _ = a_cap;
        }
    }
    Ok(LimitOccupation {
        t_edges: t_edges.to_vec(),
        age_edges: age_edges.to_vec(),
        mass,
        normalization_deviation: norm_dev,
    })
}

/// `int_{a0}^{a1} p_r(x, a) da`, closed form for exponential laws, adaptive
/// quadrature otherwise.
fn bin_survival_integral(
    law: &crate::hazards::InteractionLaw,
    x: f64,
    a0: f64,
    a1: f64,
) -> f64 {
    let a_max = law.a_max(x);
    let hi = a1.min(a_max);
    if hi <= a0 {
        return 0.0;
    }
    quad::integrate(|a| law.survival_unchecked(x, a), a0, hi, 1e-10)
}

/// Sup-norm distances `(sup |Xi - x|, sup |Y_total - y|)` on a common grid.
pub fn trajectory_error(
    trajectory: &Trajectory,
    ode: &OdeSolution,
) -> Result<(f64, f64), HarnessError> {
    if trajectory.times.len() != ode.times.len()
        || trajectory
            .times
            .iter()
            .zip(&ode.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
        || trajectory.xi.len() != trajectory.times.len()
    {
        return Err(HarnessError::GridMismatch);
    }
    let sup_x = trajectory
        .xi
        .iter()
        .zip(&ode.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let sup_y = trajectory
        .y_total
        .iter()
        .zip(&ode.y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok((sup_x, sup_y))
}

/// Distances between an empirical occupation measure and the limit: per
/// status, the mean over t-slices of the total-variation distance between
/// the per-slice age distributions, plus the unnormalized L1 mass distance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceReport {
    pub tv: [f64; 2],
    pub l1: [f64; 2],
    pub slices_used: usize,
    pub empty: bool,
}

pub fn occupation_distance(
    empirical: &OccupationMeasure,
    limit: &LimitOccupation,
) -> Result<DistanceReport, HarnessError> {
    if empirical.t_edges.len() != limit.t_edges.len()
        || empirical.age_edges.len() != limit.age_edges.len()
    {
        return Err(HarnessError::BinningMismatch);
    }
    let t_bins = empirical.t_bins();
    let mut tv = [0.0f64; 2];
    let mut l1 = [0.0f64; 2];
    let mut used = [0usize; 2];
    for s in 0..2 {
        for ti in 0..t_bins {
            let emp = &empirical.mass[s][ti];
            let lim = &limit.mass[s][ti];
            let emp_total: f64 = emp.iter().sum();
            let lim_total: f64 = lim.iter().sum();
            l1[s] += emp
                .iter()
                .zip(lim)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            if emp_total > 0.0 && lim_total > 0.0 {
                let slice_tv = 0.5
                    * emp
                        .iter()
                        .zip(lim)
                        .map(|(a, b)| (a / emp_total - b / lim_total).abs())
                        .sum::<f64>();
                tv[s] += slice_tv;
                used[s] += 1;
            }
        }
        if used[s] > 0 {
            tv[s] /= used[s] as f64;
        }
    }
    let slices_used = used[0].max(used[1]);
    Ok(DistanceReport {
        tv,
        l1,
        slices_used,
        empty: empirical.total_mass() == 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicaRow {
    pub k1: f64,
    pub k2: f64,
    pub replica: usize,
    pub sup_err_x: f64,
    pub sup_err_y: f64,
    pub tv_search: f64,
    pub tv_manipulate: f64,
    pub l1_search: f64,
    pub l1_manipulate: f64,
    pub seconds: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RungReport {
    pub k1: f64,
    pub k2: f64,
    pub lambda: f64,
    pub median_err_x: f64,
    pub median_err_y: f64,
    pub median_tv_search: f64,
    pub median_tv_manipulate: f64,
    pub p10_err_x: f64,
    pub p90_err_x: f64,
    pub mean_seconds: f64,
    pub aborted: usize,
}

#[derive(Debug, Serialize)]
pub struct StudyReport {
    pub rungs: Vec<RungReport>,
    pub rows: Vec<ReplicaRow>,
    pub normalization_deviation: f64,
    pub seed_root: u64,
    pub t_end: f64,
    pub replicas: usize,
    /// Strict decrease of the replica-median errors along the ladder.
    pub monotone_err_x: bool,
    pub monotone_err_y: bool,
    pub monotone_tv: bool,
}

/// Integrate the ODE once, run every rung and replica (in parallel), and
/// aggregate per-rung medians. Deterministic for a fixed `seed_root`.
pub fn run_study(
    model: &ResponseModel,
    study: &ConvergenceStudy,
) -> Result<StudyReport, HarnessError> {
    study.validate()?;
    let system = LimitSystem::new(
        crate::responses::ResponseSet::from_model(model.clone()),
        model.rates().prey_net(),
    )
    .map_err(|e| HarnessError::Model(e.to_string()))?;
    let grid: Vec<f64> = (0..=study.recording.sample_points)
        .map(|i| study.t_end * i as f64 / study.recording.sample_points as f64)
        .collect();
    let ode = system
        .integrate(study.x0, study.y0, &grid, study.ode_rel_tol, false)
        .map_err(|e| HarnessError::Ode(e.to_string()))?;

    // Common age cap so every rung shares the limit-measure bins.
    let a_cap = study
        .recording
        .a_cap
        .unwrap_or_else(|| ibm::default_age_cap(model, study.x0));
    let mut recording = study.recording.clone();
    recording.a_cap = Some(a_cap);
    let t_edges: Vec<f64> = (0..=recording.t_bins)
        .map(|i| study.t_end * i as f64 / recording.t_bins as f64)
        .collect();
    let age_edges: Vec<f64> = (0..=recording.age_bins)
        .map(|i| a_cap * i as f64 / recording.age_bins as f64)
        .collect();
    let limit = limit_occupation(model, &ode, &t_edges, &age_edges)?;

    let jobs: Vec<(usize, usize)> = (0..study.ladder.len())
        .flat_map(|r| (0..study.replicas).map(move |i| (r, i)))
        .collect();
    let rows: Vec<ReplicaRow> = jobs
        .par_iter()
        .map(|&(rung, replica)| {
            let (k1, k2) = study.ladder[rung];
            let cfg = ReplicaConfig {
                scaling: ScalingConfig::new(k1, k2),
                x0: study.x0,
                y0: study.y0,
                t_end: study.t_end,
                initial: InitialAges::AllZero,
                mode: study.mode,
                recording: recording.clone(),
                hard_cap: ibm::DEFAULT_HARD_CAP,
            };
            let seed = derive_seed(derive_seed(study.seed_root, rung as u64), replica as u64);
            let start = Instant::now();
            let out = cfg.run_one(model, seed).expect("replica init");
            let seconds = start.elapsed().as_secs_f64();
            let aborted = out.aborted.is_some();
            let (sup_x, sup_y) = if aborted {
                (f64::NAN, f64::NAN)
            } else {
                trajectory_error(&out.trajectory, &ode).expect("common grid")
            };
            let dist = occupation_distance(&out.occupation, &limit).expect("common bins");
            ReplicaRow {
                k1,
                k2,
                replica,
                sup_err_x: sup_x,
                sup_err_y: sup_y,
                tv_search: dist.tv[0],
                tv_manipulate: dist.tv[1],
                l1_search: dist.l1[0],
                l1_manipulate: dist.l1[1],
                seconds,
                aborted,
            }
        })
        .collect();

    let mut rungs = Vec::new();
    for (r, &(k1, k2)) in study.ladder.iter().enumerate() {
        let mine: Vec<&ReplicaRow> = rows
            .iter()
            .filter(|row| row.k1 == k1 && row.k2 == k2 && !row.aborted)
            .collect();
        let _ = r;
        let pick = |f: fn(&ReplicaRow) -> f64| -> Vec<f64> { mine.iter().map(|r| f(r)).collect() };
        let err_x = pick(|r| r.sup_err_x);
        let err_y = pick(|r| r.sup_err_y);
        let tv_s = pick(|r| r.tv_search);
        let tv_m = pick(|r| r.tv_manipulate);
        let secs = pick(|r| r.seconds);
        rungs.push(RungReport {
            k1,
            k2,
            lambda: k1 / k2,
            median_err_x: stats::median(&err_x),
            median_err_y: stats::median(&err_y),
            median_tv_search: stats::median(&tv_s),
            median_tv_manipulate: stats::median(&tv_m),
            p10_err_x: stats::quantile(&err_x, 0.1),
            p90_err_x: stats::quantile(&err_x, 0.9),
            mean_seconds: stats::mean(&secs),
            aborted: study.replicas - mine.len(),
        });
    }
    let strictly_dec = |f: fn(&RungReport) -> f64| rungs.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let monotone_err_x = strictly_dec(|r| r.median_err_x);
    let monotone_err_y = strictly_dec(|r| r.median_err_y);
    let monotone_tv = strictly_dec(|r| r.median_tv_search)
        && strictly_dec(|r| r.median_tv_manipulate);
    Ok(StudyReport {
        rungs,
        rows,
        normalization_deviation: limit.normalization_deviation,
        seed_root: study.seed_root,
        t_end: study.t_end,
        replicas: study.replicas,
        monotone_err_x,
        monotone_err_y,
        monotone_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demography::{DemographyRates, RateCurve, StatusDemography};
    use crate::hazards::{DensityMap, InteractionLaw, XRange};
    use crate::responses::ResponseSet;

    fn holling2_model() -> ResponseModel {
        ResponseModel::new(
            InteractionLaw::exponential_rate(
                DensityMap::Affine { a: 0.0, b: 1.0 },
                XRange::default(),
            )
            .unwrap(),
            InteractionLaw::exponential_mean(DensityMap::constant(1.0), XRange::default())
                .unwrap(),
            DemographyRates {
                search: StatusDemography::Net {
                    lambda: RateCurve::constant(-1.0),
                },
                manipulate: StatusDemography::Net {
                    lambda: RateCurve::constant(1.0),
                },
                prey_gamma: 1.0,
                prey_beta: 0.0,
            },
            XRange::default(),
        )
        .unwrap()
    }

    fn short_ode(model: &ResponseModel, t_end: f64, n: usize) -> OdeSolution {
        let system = LimitSystem::new(
            ResponseSet::from_model(model.clone()),
            model.rates().prey_net(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        system.integrate(2.0, 1.0, &grid, 1e-9, false).unwrap()
    }

    #[test]
    fn trajectory_error_basics() {
        let model = holling2_model();
        let ode = short_ode(&model, 1.0, 10);
        let traj = Trajectory {
            times: ode.times.clone(),
            xi: ode.x.clone(),
            y_total: ode.y.clone(),
            y_search: vec![0.0; ode.times.len()],
            y_manipulate: vec![0.0; ode.times.len()],
            age_snapshots: None,
        };
        let (ex, ey) = trajectory_error(&traj, &ode).unwrap();
        assert_eq!((ex, ey), (0.0, 0.0));

        let shifted = Trajectory {
            xi: ode.x.iter().map(|v| v + 0.25).collect(),
            ..traj.clone()
        };
        let (ex, ey) = trajectory_error(&shifted, &ode).unwrap();
        assert!((ex - 0.25).abs() < 1e-12 && ey == 0.0);

        let bad = Trajectory {
            times: traj.times[..5].to_vec(),
            xi: traj.xi[..5].to_vec(),
            y_total: traj.y_total[..5].to_vec(),
            y_search: vec![0.0; 5],
            y_manipulate: vec![0.0; 5],
            age_snapshots: None,
        };
        assert!(matches!(
            trajectory_error(&bad, &ode),
            Err(HarnessError::GridMismatch)
        ));
    }

    #[test]
    fn limit_occupation_normalizes() {
        // sum_r int p_r phi da = 1 per t-slice, to grid-quadrature accuracy.
        let model = holling2_model();
        let ode = short_ode(&model, 2.0, 40);
        let t_edges: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64 / 10.0).collect();
        let a_cap = ibm::default_age_cap(&model, 2.0);
        let age_edges: Vec<f64> = (0..=25).map(|i| a_cap * i as f64 / 25.0).collect();
        let lim = limit_occupation(&model, &ode, &t_edges, &age_edges).unwrap();
        assert!(
            lim.normalization_deviation <= 1e-6,
            "deviation {}",
            lim.normalization_deviation
        );
        // Mass per t-slice integrates y(t) dt.
        let slice0: f64 = lim.mass[0][0].iter().sum::<f64>() + lim.mass[1][0].iter().sum::<f64>();
        let y_avg = (ode.eval(0.1).1 + ode.eval(0.0).1) / 2.0;
        assert!((slice0 - y_avg * 0.2).abs() < 0.01, "{slice0} vs {}", y_avg * 0.2);
    }

    #[test]
    fn occupation_distance_identities() {
        let model = holling2_model();
        let ode = short_ode(&model, 1.0, 20);
        let t_edges: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
        let age_edges: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let lim = limit_occupation(&model, &ode, &t_edges, &age_edges).unwrap();
        // The limit compared to itself vanishes.
        let as_emp = OccupationMeasure {
            t_edges: lim.t_edges.clone(),
            age_edges: lim.age_edges.clone(),
            mass: lim.mass.clone(),
            integral_count: 0.0,
        };
        let d = occupation_distance(&as_emp, &lim).unwrap();
        assert!(d.tv[0] < 1e-14 && d.tv[1] < 1e-14);
        assert!(d.l1[0] < 1e-14 && d.l1[1] < 1e-14);
    }

    #[test]
    fn tv_of_point_mass_vs_uniform() {
        // All mass in one bin against a uniform limit over n bins: 1 - 1/n.
        let n = 8usize;
        let t_edges = vec![0.0, 1.0];
        let age_edges: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let uniform = vec![vec![1.0; n]; 1];
        let mut point = vec![vec![0.0; n]; 1];
        point[0][3] = 4.2;
        let lim = LimitOccupation {
            t_edges: t_edges.clone(),
            age_edges: age_edges.clone(),
            mass: [uniform.clone(), uniform],
            normalization_deviation: 0.0,
        };
        let emp = OccupationMeasure {
            t_edges,
            age_edges,
            mass: [point.clone(), point],
            integral_count: 0.0,
        };
        let d = occupation_distance(&emp, &lim).unwrap();
        let want = 1.0 - 1.0 / n as f64;
        assert!((d.tv[0] - want).abs() < 1e-12, "{} vs {want}", d.tv[0]);
    }

    #[test]
    fn ladder_must_increase() {
        let study = ConvergenceStudy {
            ladder: vec![(100.0, 10.0), (1000.0, 100.0)],
            t_end: 1.0,
            replicas: 1,
            seed_root: 1,
            x0: 2.0,
            y0: 1.0,
            recording: RecordingConfig::default(),
            mode: SimMode::Accrued,
            ode_rel_tol: 1e-9,
        };
        assert!(matches!(
            study.validate(),
            Err(HarnessError::LadderNotIncreasing)
        ));
    }

    #[test]
    fn one_rung_study_smoke_and_determinism() {
        let model = holling2_model();
        let study = ConvergenceStudy {
            ladder: vec![(200.0, 10.0)],
            t_end: 1.0,
            replicas: 2,
            seed_root: 5,
            x0: 2.0,
            y0: 1.0,
            recording: RecordingConfig {
                sample_points: 50,
                t_bins: 5,
                age_bins: 10,
                a_cap: None,
                age_snapshots: false,
            },
            mode: SimMode::Accrued,
            ode_rel_tol: 1e-9,
        };
        let a = run_study(&model, &study).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.rungs.len(), 1);
        assert!(a.rungs[0].median_err_x.is_finite());
        let b = run_study(&model, &study).unwrap();
        assert_eq!(
            serde_json::to_string(&StudyRowsOnly(&a.rows)).unwrap(),
            serde_json::to_string(&StudyRowsOnly(&b.rows)).unwrap()
        );
    }

    /// Rows without the timing column, for the determinism comparison.
    struct StudyRowsOnly<'a>(&'a [ReplicaRow]);
    impl serde::Serialize for StudyRowsOnly<'_> {
        fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            use serde::ser::SerializeSeq;
            let mut seq = s.serialize_seq(Some(self.0.len()))?;
            for r in self.0 {
                seq.serialize_element(&(
                    r.k1, r.k2, r.replica, r.sup_err_x, r.sup_err_y, r.tv_search,
                    r.tv_manipulate, r.aborted,
                ))?;
            }
            seq.end()
        }
    }
}
