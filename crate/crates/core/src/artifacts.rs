//! CSV/JSON artifact writers. Every file is written atomically (temp file in
//! the target directory, then rename) so interrupted runs never leave
//! truncated artifacts behind.

use std::fs;
use std::io;
use std::path::Path;

use crate::config::TimingsMode;
use crate::harness::StudyReport;
use crate::ibm::{EventCounters, OccupationMeasure, Trajectory};
use crate::ode::{Equilibrium, OdeSolution};
use crate::responses::ResponseRow;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(&format!(".tmp.{}", std::process::id()));
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, bytes)?;
    fs::rename(&tmp_path, path)
}

/// Shortest round-trip float formatting; stable across runs of the same
/// binary, which is what the byte-identical determinism contract needs.
fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn responses_csv(rows: &[ResponseRow]) -> String {
    let mut out = String::from("x,phi,psi\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", fmt(r.x), fmt(r.phi), fmt(r.psi)));
    }
    out
}

pub fn trajectory_csv(t: &Trajectory) -> String {
    let mut out = String::from("t,xi,y_total,y_search,y_manipulate\n");
    for i in 0..t.xi.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(t.times[i]),
            fmt(t.xi[i]),
            fmt(t.y_total[i]),
            fmt(t.y_search[i]),
            fmt(t.y_manipulate[i]),
        ));
    }
    out
}

pub fn ode_csv(sol: &OdeSolution) -> String {
    let with_conservation = sol.conservation.is_some();
    let mut out = String::from(if with_conservation {
        "t,x,y,conservation\n"
    } else {
        "t,x,y\n"
    });
    for i in 0..sol.times.len() {
        out.push_str(&fmt(sol.times[i]));
        out.push(',');
        out.push_str(&fmt(sol.x[i]));
        out.push(',');
        out.push_str(&fmt(sol.y[i]));
        if let Some(cons) = &sol.conservation {
            out.push(',');
            out.push_str(&fmt(cons[i]));
        }
        out.push('\n');
    }
    out
}

pub fn occupation_json(occ: &OccupationMeasure) -> serde_json::Value {
    serde_json::json!({
        "t_bins": occ.t_edges,
        "age_bins": occ.age_edges,
        "mass": {
            "search": occ.mass[0],
            "manipulate": occ.mass[1],
        },
        "integral_count": occ.integral_count,
    })
}

pub fn events_json(counters: &EventCounters, aborted: Option<&str>) -> serde_json::Value {
    let mut v = serde_json::to_value(counters).unwrap();
    v["aborted"] = match aborted {
        Some(r) => serde_json::Value::String(r.to_string()),
        None => serde_json::Value::Null,
    };
    v
}

pub fn equilibrium_json(eq: Option<&Equilibrium>) -> serde_json::Value {
    match eq {
        None => serde_json::json!({ "found": false }),
        Some(eq) => serde_json::json!({
            "found": true,
            "x": eq.x,
            "y": eq.y,
            "jacobian": eq.jacobian,
            "eigenvalues": eq.eigenvalues.iter()
                .map(|(re, im)| serde_json::json!({"re": re, "im": im}))
                .collect::<Vec<_>>(),
        }),
    }
}

pub fn study_csv(report: &StudyReport, timings: TimingsMode) -> String {
    let mut out = String::from("K1,K2,replica,sup_err_x,sup_err_y,tv_S,tv_M,seconds\n");
    for r in &report.rows {
        let seconds = match timings {
            TimingsMode::Wall => r.seconds,
            TimingsMode::Exclude => 0.0,
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt(r.k1),
            fmt(r.k2),
            r.replica,
            fmt(r.sup_err_x),
            fmt(r.sup_err_y),
            fmt(r.tv_search),
            fmt(r.tv_manipulate),
            fmt(seconds),
        ));
    }
    out
}

pub fn study_json(report: &StudyReport, timings: TimingsMode) -> serde_json::Value {
    let rungs: Vec<serde_json::Value> = report
        .rungs
        .iter()
        .map(|r| {
            serde_json::json!({
                "K1": r.k1,
                "K2": r.k2,
                "lambda": r.lambda,
                "median_err_x": r.median_err_x,
                "median_err_y": r.median_err_y,
                "median_tv_search": r.median_tv_search,
                "median_tv_manipulate": r.median_tv_manipulate,
                "p10_err_x": r.p10_err_x,
                "p90_err_x": r.p90_err_x,
                "mean_seconds": match timings {
                    TimingsMode::Wall => serde_json::json!(r.mean_seconds),
                    TimingsMode::Exclude => serde_json::json!(null),
                },
                "aborted": r.aborted,
            })
        })
        .collect();
    serde_json::json!({
        "seed_root": report.seed_root,
        "T": report.t_end,
        "replicas": report.replicas,
        "limit_normalization_deviation": report.normalization_deviation,
        "monotone_err_x": report.monotone_err_x,
        "monotone_err_y": report.monotone_err_y,
        "monotone_tv": report.monotone_tv,
        "rungs": rungs,
    })
}

pub fn to_json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).unwrap();
    s.push('\n');
    s.into_bytes()
}
