//! JSON experiment configs, built-in presets and their diagnostics.
//!
//! The schema is strict: unknown keys are rejected and the error names the
//! offending JSON path. A model is either a named preset (with optional
//! parameter overrides) or an explicit `law_S` / `law_M` / `demography`
//! triple.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demography::{DemographyRates, RateCurve, StatusDemography};
use crate::hazards::{DensityMap, InteractionLaw, LawError, TableHazard, XRange};
use crate::ibm::SimMode;
use crate::responses::{ClosedResponses, ModelError, ResponseModel, ResponseSet};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at .{path}: {message}")]
    Schema { path: String, message: String },
    #[error("config error at .{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Responses,
    Simulate,
    Ode,
    Study,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingsMode {
    /// Artifacts carry a zero seconds column so reruns are byte-identical.
    #[default]
    Exclude,
    /// Record wall-clock seconds (artifacts then differ between runs).
    Wall,
}

/// Top-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses: Option<ResponsesCmd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateCmd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeCmd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyCmd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Parameter overrides for presets (`c`, `t0`, rate levels, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PresetParams>,
    #[serde(rename = "law_S", default, skip_serializing_if = "Option::is_none")]
    pub law_search: Option<LawConfig>,
    #[serde(rename = "law_M", default, skip_serializing_if = "Option::is_none")]
    pub law_manipulate: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demography: Option<DemographyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_range: Option<[f64; 2]>,
}

impl ModelConfig {
    pub fn preset(name: &str) -> Self {
        ModelConfig {
            preset: Some(name.to_string()),
            params: None,
            law_search: None,
            law_manipulate: None,
            demography: None,
            x_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(rename = "lambda_S", default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    #[serde(rename = "lambda_M", default, skip_serializing_if = "Option::is_none")]
    pub lambda_m: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prey_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prey_beta: Option<f64>,
}

/// Interaction-law fragment, e.g.
/// `{"kind": "pareto", "k": {"map": "constant", "c": 2.0}, "z": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    Zero,
    Exponential {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<DensityMap>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<DensityMap>,
    },
    Uniform {
        upper: DensityMap,
    },
    Pareto {
        k: DensityMap,
        z: DensityMap,
    },
    LogNormal {
        mu: DensityMap,
        sigma: DensityMap,
    },
    Table {
        ages: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        x_grid: Vec<f64>,
        hazard: HazardRows,
    },
}

/// Table hazards accept one flat row (x-independent) or one row per x-grid
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HazardRows {
    Flat(Vec<f64>),
    PerDensity(Vec<Vec<f64>>),
}

impl LawConfig {
    pub fn build(&self, x_range: XRange, path: &str) -> Result<InteractionLaw, ConfigError> {
        let wrap = |r: Result<InteractionLaw, LawError>| {
            r.map_err(|e| ConfigError::invalid(path, e.to_string()))
        };
        match self {
            LawConfig::Zero => Ok(InteractionLaw::zero()),
            LawConfig::Exponential { rate, mean } => match (rate, mean) {
                (Some(r), None) => wrap(InteractionLaw::exponential_rate(*r, x_range)),
                (None, Some(m)) => wrap(InteractionLaw::exponential_mean(*m, x_range)),
                _ => Err(ConfigError::invalid(
                    path,
                    "exponential law takes exactly one of `rate` or `mean`",
                )),
            },
            LawConfig::Uniform { upper } => wrap(InteractionLaw::uniform(*upper, x_range)),
            LawConfig::Pareto { k, z } => wrap(InteractionLaw::pareto(*k, *z, x_range)),
            LawConfig::LogNormal { mu, sigma } => {
                wrap(InteractionLaw::log_normal(*mu, *sigma, x_range))
            }
            LawConfig::Table {
                ages,
                x_grid,
                hazard,
            } => {
                let values = match hazard {
                    HazardRows::Flat(row) => vec![row.clone()],
                    HazardRows::PerDensity(rows) => rows.clone(),
                };
                wrap(InteractionLaw::table(
                    TableHazard {
                        ages: ages.clone(),
                        x_grid: x_grid.clone(),
                        values,
                    },
                    x_range,
                ))
            }
        }
    }
}

/// Demography fragment: per status either a `(gamma, beta)` pair or a `lambda`
/// net curve, plus scalar prey rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographyConfig {
    #[serde(rename = "gamma_S", default, skip_serializing_if = "Option::is_none")]
    pub gamma_s: Option<RateCurve>,
    #[serde(rename = "beta_S", default, skip_serializing_if = "Option::is_none")]
    pub beta_s: Option<RateCurve>,
    #[serde(rename = "lambda_S", default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<RateCurve>,
    #[serde(rename = "gamma_M", default, skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<RateCurve>,
    #[serde(rename = "beta_M", default, skip_serializing_if = "Option::is_none")]
    pub beta_m: Option<RateCurve>,
    #[serde(rename = "lambda_M", default, skip_serializing_if = "Option::is_none")]
    pub lambda_m: Option<RateCurve>,
    pub prey_gamma: f64,
    pub prey_beta: f64,
}

impl DemographyConfig {
    fn build(&self, path: &str) -> Result<DemographyRates, ConfigError> {
        let status = |gamma: &Option<RateCurve>,
                      beta: &Option<RateCurve>,
                      lambda: &Option<RateCurve>,
                      label: &str|
         -> Result<StatusDemography, ConfigError> {
            match (gamma, beta, lambda) {
                (Some(g), Some(b), None) => Ok(StatusDemography::Split {
                    gamma: g.clone(),
                    beta: b.clone(),
                }),
                (None, None, Some(l)) => Ok(StatusDemography::Net { lambda: l.clone() }),
                (None, None, None) => Ok(StatusDemography::Net {
                    lambda: RateCurve::constant(0.0),
                }),
                _ => Err(ConfigError::invalid(
                    path,
                    format!(
                        "status {label}: give either gamma_{label} and beta_{label}, or lambda_{label}"
                    ),
                )),
            }
        };
        Ok(DemographyRates {
            search: status(&self.gamma_s, &self.beta_s, &self.lambda_s, "S")?,
            manipulate: status(&self.gamma_m, &self.beta_m, &self.lambda_m, "M")?,
            prey_gamma: self.prey_gamma,
            prey_beta: self.prey_beta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsesCmd {
    pub grid: GridSpec,
}

impl Default for ResponsesCmd {
    fn default() -> Self {
        ResponsesCmd {
            grid: GridSpec::Range {
                min: 0.1,
                max: 5.0,
                points: 50,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { min: f64, max: f64, points: usize },
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range { min, max, points } => {
                if *points <= 1 {
                    return vec![*min];
                }
                (0..*points)
                    .map(|i| min + (max - min) * i as f64 / (*points as f64 - 1.0))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateCmd {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_y0")]
    pub y0: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sample_points")]
    pub sample_points: usize,
    #[serde(default = "default_t_bins")]
    pub t_bins: usize,
    #[serde(default = "default_age_bins")]
    pub age_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_cap: Option<f64>,
    #[serde(default)]
    pub age_snapshots: bool,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    #[serde(default = "default_hard_cap")]
    pub hard_cap: u64,
    /// `"zero"` or an interaction-law fragment with bounded support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_age: Option<InitialAgeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialAgeConfig {
    Keyword(String),
    Law(LawConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeCmd {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_y0")]
    pub y0: f64,
    #[serde(default = "default_ode_tol")]
    pub tolerance: f64,
    #[serde(default = "default_ode_points")]
    pub sample_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium_bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCmd {
    #[serde(default = "default_ladder")]
    pub ladder: Vec<[f64; 2]>,
    #[serde(rename = "T", default = "default_study_t")]
    pub t: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_seed")]
    pub seed_root: u64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default = "default_y0")]
    pub y0: f64,
    #[serde(default = "default_sample_points")]
    pub sample_points: usize,
    #[serde(default = "default_t_bins")]
    pub t_bins: usize,
    #[serde(default = "default_age_bins")]
    pub age_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_cap: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    #[serde(default)]
    pub timings: TimingsMode,
}

impl Default for StudyCmd {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn default_x0() -> f64 {
    2.0
}
fn default_y0() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    1
}
fn default_sample_points() -> usize {
    200
}
fn default_t_bins() -> usize {
    20
}
fn default_age_bins() -> usize {
    30
}
fn default_mode() -> SimMode {
    SimMode::Accrued
}
fn default_hard_cap() -> u64 {
    crate::ibm::DEFAULT_HARD_CAP
}
fn default_ode_tol() -> f64 {
    1e-9
}
fn default_ode_points() -> usize {
    500
}
fn default_study_t() -> f64 {
    5.0
}
fn default_replicas() -> usize {
    20
}
fn default_ladder() -> Vec<[f64; 2]> {
    vec![[100.0, 10.0], [1000.0, 32.0], [10000.0, 100.0]]
}

/// Parse a JSON experiment config with path-qualified error messages.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema {
            path: if path == "." { String::new() } else { path },
            message: e.inner().to_string(),
        }
    })
}

pub fn parse_config_file(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Holling1,
    Holling2,
    Holling3,
    LotkaVolterra,
    AgePenalty,
    NearestPrey,
}

impl PresetKind {
    pub const NAMES: [(&'static str, PresetKind); 6] = [
        ("holling1", PresetKind::Holling1),
        ("holling2", PresetKind::Holling2),
        ("holling3", PresetKind::Holling3),
        ("lotka_volterra", PresetKind::LotkaVolterra),
        ("age_penalty", PresetKind::AgePenalty),
        ("nearest_prey", PresetKind::NearestPrey),
    ];

    pub fn from_name(name: &str) -> Option<PresetKind> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, k)| *k)
    }

    pub fn name(&self) -> &'static str {
        Self::NAMES.iter().find(|(_, k)| k == self).unwrap().0
    }
}

/// A fully resolved experiment: the response set, the prey net rate, and the
/// config echo with every default filled in.
#[derive(Debug)]
pub struct Experiment {
    pub command: CommandKind,
    pub set: ResponseSet,
    pub preset: Option<PresetKind>,
    pub prey_net: f64,
    pub resolved: ExperimentConfig,
}

/// Validate a parsed config and construct the model behind it.
pub fn resolve(config: &ExperimentConfig) -> Result<Experiment, ConfigError> {
    let mut resolved = config.clone();
    // Per-command sections, with defaults filled for the echo.
    match config.command {
        CommandKind::Responses => {
            resolved.responses.get_or_insert_with(ResponsesCmd::default);
        }
        CommandKind::Simulate => {
            if resolved.simulate.is_none() {
                return Err(ConfigError::invalid(
                    "simulate.T",
                    "the simulate command needs a `simulate` section with K1, K2 and T",
                ));
            }
        }
        CommandKind::Ode => {
            if resolved.ode.is_none() {
                return Err(ConfigError::invalid(
                    "ode.T",
                    "the ode command needs an `ode` section with the horizon T",
                ));
            }
        }
        CommandKind::Study => {
            resolved.study.get_or_insert_with(StudyCmd::default);
        }
    }
    let (set, preset, prey_net) = build_model(&config.model)?;
    if matches!(config.command, CommandKind::Simulate | CommandKind::Study) && set.model().is_none()
    {
        return Err(ConfigError::invalid(
            "model.preset",
            format!(
                "preset `{}` has no individual-based counterpart (psi(x) = -A + Bx is not a \
                 bounded per-age growth average); use it with the ode or responses commands",
                preset.map(|p| p.name()).unwrap_or("?")
            ),
        ));
    }
    malformed_sections(config)?;
    Ok(Experiment {
        command: config.command,
        set,
        preset,
        prey_net,
        resolved,
    })
}

fn malformed_sections(config: &ExperimentConfig) -> Result<(), ConfigError> {
    if let Some(sim) = &config.simulate {
        for (name, v) in [("K1", sim.k1), ("K2", sim.k2), ("T", sim.t)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::invalid(
                    &format!("simulate.{name}"),
                    "must be positive and finite",
                ));
            }
        }
    }
    if let Some(ode) = &config.ode {
        if !(ode.t > 0.0) {
            return Err(ConfigError::invalid("ode.T", "must be positive"));
        }
    }
    if let Some(study) = &config.study {
        if study.replicas == 0 {
            return Err(ConfigError::invalid("study.replicas", "need at least one"));
        }
        let lambdas: Vec<f64> = study.ladder.iter().map(|[k1, k2]| k1 / k2).collect();
        if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::invalid(
                "study.ladder",
                "lambda_K = K1/K2 must strictly increase along the ladder",
            ));
        }
    }
    Ok(())
}

/// Build the response set from a model config (preset or explicit laws).
pub fn build_model(
    model: &ModelConfig,
) -> Result<(ResponseSet, Option<PresetKind>, f64), ConfigError> {
    if let Some(name) = &model.preset {
        let Some(kind) = PresetKind::from_name(name) else {
            return Err(ConfigError::invalid(
                "model.preset",
                format!(
                    "unknown preset `{name}`; available: {}",
                    PresetKind::NAMES
                        .iter()
                        .map(|(n, _)| *n)
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ));
        };
        if model.law_search.is_some() || model.law_manipulate.is_some() || model.demography.is_some()
        {
            return Err(ConfigError::invalid(
                "model",
                "give either a preset or explicit laws and demography, not both",
            ));
        }
        let params = model.params.unwrap_or_default();
        let x_range = model
            .x_range
            .map(|[min, max]| XRange { min, max })
            .unwrap_or_default();
        let (set, prey_net) = build_preset(kind, &params, x_range)
            .map_err(|e| ConfigError::invalid("model.preset", e.to_string()))?;
        return Ok((set, Some(kind), prey_net));
    }
    let (Some(law_s), Some(law_m), Some(dem)) = (
        &model.law_search,
        &model.law_manipulate,
        &model.demography,
    ) else {
        return Err(ConfigError::invalid(
            "model",
            "an explicit model needs law_S, law_M and demography (or use a preset)",
        ));
    };
    if model.params.is_some() {
        return Err(ConfigError::invalid(
            "model.params",
            "parameter overrides only apply to presets",
        ));
    }
    let x_range = model
        .x_range
        .map(|[min, max]| XRange { min, max })
        .unwrap_or_default();
    let rates = dem.build("model.demography")?;
    let prey_net = rates.prey_net();
    let m = ResponseModel::new(
        law_s.build(x_range, "model.law_S")?,
        law_m.build(x_range, "model.law_M")?,
        rates,
        x_range,
    )
    .map_err(|e: ModelError| ConfigError::invalid("model", e.to_string()))?;
    Ok((ResponseSet::from_model(m), None, prey_net))
}

fn build_preset(
    kind: PresetKind,
    p: &PresetParams,
    x_range: XRange,
) -> Result<(ResponseSet, f64), ModelError> {
    let c = p.c.unwrap_or(1.0);
    let t0 = p.t0.unwrap_or(1.0);
    let prey_gamma = p.prey_gamma.unwrap_or(1.0);
    let prey_beta = p.prey_beta.unwrap_or(0.0);
    let prey_net = prey_gamma - prey_beta;
    let exp_search_rate = |c: f64| {
        InteractionLaw::exponential_rate(DensityMap::Affine { a: 0.0, b: c }, x_range)
            .expect("preset law")
    };
    let exp_mean = |t0: f64| {
        InteractionLaw::exponential_mean(DensityMap::Constant { c: t0 }, x_range)
            .expect("preset law")
    };
    let net = |v: f64| StatusDemography::Net {
        lambda: RateCurve::constant(v),
    };
    let rates = |l_s: StatusDemography, l_m: StatusDemography| DemographyRates {
        search: l_s,
        manipulate: l_m,
        prey_gamma,
        prey_beta,
    };
    match kind {
        PresetKind::Holling1 => {
            let lambda_s = p.lambda_s.unwrap_or(1.0);
            let model = ResponseModel::new(
                exp_search_rate(c),
                InteractionLaw::zero(),
                rates(net(lambda_s), net(0.0)),
                x_range,
            )?;
            Ok((
                ResponseSet::with_closed(model, ClosedResponses::HollingI { c, lambda_s }),
                prey_net,
            ))
        }
        PresetKind::Holling2 => {
            let lambda_s = p.lambda_s.unwrap_or(-1.0);
            let lambda_m = p.lambda_m.unwrap_or(1.0);
            let model = ResponseModel::new(
                exp_search_rate(c),
                exp_mean(t0),
                rates(net(lambda_s), net(lambda_m)),
                x_range,
            )?;
            Ok((
                ResponseSet::with_closed(
                    model,
                    ClosedResponses::HollingII {
                        c,
                        t0,
                        lambda_s,
                        lambda_m,
                    },
                ),
                prey_net,
            ))
        }
        PresetKind::Holling3 => {
            let lambda_s = p.lambda_s.unwrap_or(-1.0);
            let lambda_m = p.lambda_m.unwrap_or(1.0);
            let mean_s = InteractionLaw::exponential_mean(
                DensityMap::ReciprocalSquare { c: 1.0 / c },
                x_range,
            )
            .expect("preset law");
            let model = ResponseModel::new(
                mean_s,
                exp_mean(t0),
                rates(net(lambda_s), net(lambda_m)),
                x_range,
            )?;
            Ok((
                ResponseSet::with_closed(
                    model,
                    ClosedResponses::HollingIII {
                        c,
                        t0,
                        lambda_s,
                        lambda_m,
                    },
                ),
                prey_net,
            ))
        }
        PresetKind::LotkaVolterra => {
            let a = p.a.unwrap_or(1.0);
            let b = p.b.unwrap_or(1.0);
            Ok((
                ResponseSet::from_closed(ClosedResponses::LotkaVolterra { c, a, b }),
                prey_net,
            ))
        }
        PresetKind::AgePenalty => {
            let a = p.a.unwrap_or(1.0);
            let b = p.b.unwrap_or(1.0);
            let decay = p.c_decay.unwrap_or(1.0);
            let model = ResponseModel::new(
                exp_search_rate(c),
                InteractionLaw::zero(),
                rates(
                    StatusDemography::Net {
                        lambda: RateCurve::ExpDecay { a, b, c: decay },
                    },
                    net(0.0),
                ),
                x_range,
            )?;
            Ok((
                ResponseSet::with_closed(model, ClosedResponses::AgePenalty { c, a, b, decay }),
                prey_net,
            ))
        }
        PresetKind::NearestPrey => {
            let lambda_s = p.lambda_s.unwrap_or(-1.0);
            let lambda_m = p.lambda_m.unwrap_or(1.0);
            let mean_s =
                InteractionLaw::exponential_mean(DensityMap::ReciprocalSqrt { c }, x_range)
                    .expect("preset law");
            let model = ResponseModel::new(
                mean_s,
                exp_mean(t0),
                rates(net(lambda_s), net(lambda_m)),
                x_range,
            )?;
            Ok((
                ResponseSet::with_closed(
                    model,
                    ClosedResponses::NearestPrey {
                        c,
                        t0,
                        lambda_s,
                        lambda_m,
                    },
                ),
                prey_net,
            ))
        }
    }
}

/// Diagnostics attached to the `responses` command output: assumption checks,
/// closed-form agreement, and for the age-penalty preset a note quantifying
/// how far the alternative printed growth form strays from the quadrature.
pub fn preset_diagnostics(experiment: &Experiment) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    if let Some(model) = experiment.set.model() {
        out.insert(
            "assumptions".into(),
            serde_json::to_value(model.check_assumptions()).unwrap(),
        );
        if let Some(closed) = experiment.set.closed() {
            let grid = model.x_range().probe_grid(33);
            let grid: Vec<f64> = grid.into_iter().filter(|x| (0.05..=20.0).contains(x)).collect();
            let mut max_phi = 0.0f64;
            let mut max_psi = 0.0f64;
            for &x in &grid {
                if let (Ok(pq), Ok(sq)) = (model.phi_quadrature(x), model.psi(x)) {
                    max_phi = max_phi.max(((pq - closed.phi(x)) / closed.phi(x)).abs());
                    max_psi = max_psi.max((sq - closed.psi(x)).abs());
                }
            }
            out.insert(
                "closed_form_agreement".into(),
                serde_json::json!({
                    "max_rel_dev_phi": max_phi,
                    "max_abs_dev_psi": max_psi,
                }),
            );
        }
    }
    if let (Some(PresetKind::AgePenalty), Some(model)) =
        (experiment.preset, experiment.set.model())
    {
        let Some(&ClosedResponses::AgePenalty { c, a, b, decay }) = experiment.set.closed() else {
            unreachable!()
        };
        // Alternative growth form in circulation: psi_alt = -A + B(cx)^2/(C c x + 1).
        // It exceeds the hard bound psi <= sup lambda_S = B - A for large x,
        // while the quadrature (and the survival-representation algebra)
        // give psi = -A + B c x/(C + c x).
        let mut worst = (0.0f64, 0.0f64);
        for &x in &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let alt = -a + b * (c * x) * (c * x) / (decay * c * x + 1.0);
            let quadrature = model.psi(x).unwrap_or(f64::NAN);
            let dev = (alt - quadrature).abs();
            if dev > worst.0 {
                worst = (dev, x);
            }
        }
        out.insert(
            "growth_form_note".into(),
            serde_json::json!({
                "used": "psi(x) = -A + B c x / (C + c x)",
                "alternative_printed_form": "psi(x) = -A + B (c x)^2 / (C c x + 1)",
                "bound": format!("psi(x) <= sup lambda_S = B - A = {}", b - a),
                "max_abs_deviation": worst.0,
                "at_x": worst.1,
                "verdict": "alternative form diverges linearly and violates the growth bound; not used",
            }),
        );
    }
    serde_json::Value::Object(out)
}
