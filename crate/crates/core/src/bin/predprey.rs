//! Command-line front end: JSON experiment configs in, CSV/JSON artifacts out.
//!
//! Subcommands: `responses` (phi/psi table), `simulate` (one scaled IBM run),
//! `ode` (limit system integration + equilibrium report), `study` (the full
//! convergence ladder). Flags override the corresponding config fields;
//! `--dump-config` echoes the fully resolved config, which reparses to an
//! identical experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use predprey::artifacts::{self, to_json_bytes, write_atomic};
use predprey::config::{
    self, CommandKind, ConfigError, Experiment, ExperimentConfig, GridSpec, InitialAgeConfig,
    ModelConfig, OdeCmd, ResponsesCmd, SimulateCmd, StudyCmd, TimingsMode,
};
use predprey::harness::{self, ConvergenceStudy};
use predprey::ibm::{self, InitialAges, RecordingConfig, ScalingConfig, SimMode, SimState};
use predprey::ode::LimitSystem;
use predprey::responses::ResponseSet;

#[derive(Parser)]
#[command(name = "predprey", about = "Age-structured prey-predator simulator", version)]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Print errors as machine-readable JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Worker threads for replica-parallel commands (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the resolved config to stdout and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone, Default)]
struct ModelFlags {
    /// Built-in preset: holling1, holling2, holling3, lotka_volterra,
    /// age_penalty, nearest_prey.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Evaluate the functional response phi and growth rate psi on a grid.
    Responses {
        #[command(flatten)]
        model: ModelFlags,
        /// Comma-separated x values ("0.5,1,2") or "min:max:points".
        #[arg(long)]
        grid: Option<String>,
    },
    /// One individual-based run: trajectory, occupation measure, event log.
    Simulate {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long = "K1")]
        k1: Option<f64>,
        #[arg(long = "K2")]
        k2: Option<f64>,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// accrued (default) or requeue (reference mode).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Integrate the limiting ODE; conservation and equilibrium reports.
    Ode {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Convergence study along a (K1, K2) ladder.
    Study {
        #[command(flatten)]
        model: ModelFlags,
        /// Ladder as "K1:K2,K1:K2,...".
        #[arg(long)]
        ladder: Option<String>,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        seed_root: Option<u64>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        y0: Option<f64>,
        /// exclude (default; byte-stable artifacts) or wall.
        #[arg(long)]
        timings: Option<String>,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            emit_error("config", &msg, json_errors);
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            emit_error("runtime", &msg, json_errors);
            ExitCode::from(2)
        }
    }
}

fn emit_error(kind: &str, message: &str, json: bool) {
    if json {
        eprintln!(
            "{}",
            serde_json::json!({ "error": { "kind": kind, "message": message } })
        );
    } else {
        eprintln!("error ({kind}): {message}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => config::parse_config_file(path)?,
        None => {
            let Some(command) = &cli.command else {
                return Err(CliError::Config(
                    "no subcommand and no --config given".into(),
                ));
            };
            skeleton_config(command)?
        }
    };
    if let Some(command) = &cli.command {
        apply_flags(&mut config, command)?;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = Some(dir.to_string_lossy().into_owned());
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(threads) = config.threads {
        // Ignore failure: the global pool can only be installed once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let experiment = config::resolve(&config)?;
    if cli.dump_config {
        println!(
            "{}",
            serde_json::to_string_pretty(&experiment.resolved).unwrap()
        );
        return Ok(());
    }
    let out_dir = PathBuf::from(
        experiment
            .resolved
            .out_dir
            .clone()
            .unwrap_or_else(|| "out".to_string()),
    );
    execute(&experiment, &out_dir)
}

fn skeleton_config(command: &Command) -> Result<ExperimentConfig, CliError> {
    let (kind, preset) = match command {
        Command::Responses { model, .. } => (CommandKind::Responses, &model.preset),
        Command::Simulate { model, .. } => (CommandKind::Simulate, &model.preset),
        Command::Ode { model, .. } => (CommandKind::Ode, &model.preset),
        Command::Study { model, .. } => (CommandKind::Study, &model.preset),
    };
    let Some(name) = preset else {
        return Err(CliError::Config(
            "without --config, --preset is required".into(),
        ));
    };
    Ok(ExperimentConfig {
        command: kind,
        model: ModelConfig::preset(name),
        out_dir: None,
        threads: None,
        responses: None,
        simulate: None,
        ode: None,
        study: None,
    })
}

fn parse_mode(s: &str) -> Result<SimMode, CliError> {
    match s {
        "accrued" => Ok(SimMode::Accrued),
        "requeue" => Ok(SimMode::Requeue),
        other => Err(CliError::Config(format!(
            "unknown mode `{other}` (accrued or requeue)"
        ))),
    }
}

fn parse_timings(s: &str) -> Result<TimingsMode, CliError> {
    match s {
        "exclude" => Ok(TimingsMode::Exclude),
        "wall" => Ok(TimingsMode::Wall),
        other => Err(CliError::Config(format!(
            "unknown timings mode `{other}` (exclude or wall)"
        ))),
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, CliError> {
    if let Some((lo, rest)) = s.split_once(':') {
        let (hi, n) = rest
            .split_once(':')
            .ok_or_else(|| CliError::Config("grid range is min:max:points".into()))?;
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad grid number `{v}`")))
        };
        return Ok(GridSpec::Range {
            min: parse(lo)?,
            max: parse(hi)?,
            points: n
                .parse()
                .map_err(|_| CliError::Config(format!("bad grid point count `{n}`")))?,
        });
    }
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    Ok(GridSpec::List(values.map_err(|_| {
        CliError::Config(format!("bad grid list `{s}`"))
    })?))
}

fn parse_ladder(s: &str) -> Result<Vec<[f64; 2]>, CliError> {
    s.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| CliError::Config("ladder entries are K1:K2".into()))?;
            let k1 = a
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad K1 `{a}`")))?;
            let k2 = b
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad K2 `{b}`")))?;
            Ok([k1, k2])
        })
        .collect()
}

fn apply_flags(config: &mut ExperimentConfig, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Responses { model, grid } => {
            config.command = CommandKind::Responses;
            override_preset(config, model);
            if let Some(g) = grid {
                let section = config.responses.get_or_insert_with(ResponsesCmd::default);
                section.grid = parse_grid(g)?;
            }
        }
        Command::Simulate {
            model,
            k1,
            k2,
            t,
            x0,
            y0,
            seed,
            mode,
        } => {
            config.command = CommandKind::Simulate;
            override_preset(config, model);
            if config.simulate.is_none() {
                let (Some(k1), Some(k2), Some(t)) = (k1, k2, t) else {
                    return Err(CliError::Config(
                        "simulate needs --K1, --K2 and --T (or a config file section)".into(),
                    ));
                };
                config.simulate = Some(SimulateCmd {
                    k1: *k1,
                    k2: *k2,
                    t: *t,
                    x0: x0.unwrap_or(2.0),
                    y0: y0.unwrap_or(1.0),
                    seed: seed.unwrap_or(1),
                    sample_points: 200,
                    t_bins: 20,
                    age_bins: 30,
                    a_cap: None,
                    age_snapshots: false,
                    mode: SimMode::Accrued,
                    hard_cap: ibm::DEFAULT_HARD_CAP,
                    initial_age: None,
                });
            }
            let section = config.simulate.as_mut().unwrap();
            if let Some(v) = k1 {
                section.k1 = *v;
            }
            if let Some(v) = k2 {
                section.k2 = *v;
            }
            if let Some(v) = t {
                section.t = *v;
            }
            if let Some(v) = x0 {
                section.x0 = *v;
            }
            if let Some(v) = y0 {
                section.y0 = *v;
            }
            if let Some(v) = seed {
                section.seed = *v;
            }
            if let Some(v) = mode {
                section.mode = parse_mode(v)?;
            }
        }
        Command::Ode {
            model,
            t,
            x0,
            y0,
            tolerance,
        } => {
            config.command = CommandKind::Ode;
            override_preset(config, model);
            if config.ode.is_none() {
                let Some(t) = t else {
                    return Err(CliError::Config(
                        "ode needs --T (or a config file section)".into(),
                    ));
                };
                config.ode = Some(OdeCmd {
                    t: *t,
                    x0: x0.unwrap_or(2.0),
                    y0: y0.unwrap_or(1.0),
                    tolerance: tolerance.unwrap_or(1e-9),
                    sample_points: 500,
                    equilibrium_bracket: None,
                });
            }
            let section = config.ode.as_mut().unwrap();
            if let Some(v) = t {
                section.t = *v;
            }
            if let Some(v) = x0 {
                section.x0 = *v;
            }
            if let Some(v) = y0 {
                section.y0 = *v;
            }
            if let Some(v) = tolerance {
                section.tolerance = *v;
            }
        }
        Command::Study {
            model,
            ladder,
            t,
            replicas,
            seed_root,
            x0,
            y0,
            timings,
        } => {
            config.command = CommandKind::Study;
            override_preset(config, model);
            let section = config.study.get_or_insert_with(StudyCmd::default);
            if let Some(l) = ladder {
                section.ladder = parse_ladder(l)?;
            }
            if let Some(v) = t {
                section.t = *v;
            }
            if let Some(v) = replicas {
                section.replicas = *v;
            }
            if let Some(v) = seed_root {
                section.seed_root = *v;
            }
            if let Some(v) = x0 {
                section.x0 = *v;
            }
            if let Some(v) = y0 {
                section.y0 = *v;
            }
            if let Some(v) = timings {
                section.timings = parse_timings(v)?;
            }
        }
    }
    Ok(())
}

fn override_preset(config: &mut ExperimentConfig, model: &ModelFlags) {
    if let Some(preset) = &model.preset {
        config.model = ModelConfig::preset(preset);
    }
}

fn execute(experiment: &Experiment, out_dir: &PathBuf) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Runtime(format!("cannot write artifact: {e}"));
    match experiment.command {
        CommandKind::Responses => {
            let section = experiment.resolved.responses.as_ref().unwrap();
            let grid = section.grid.points();
            let rows = match experiment.set.model() {
                Some(m) => m.response_table(&grid),
                None => grid
                    .iter()
                    .map(|&x| predprey::responses::ResponseRow {
                        x,
                        phi: experiment.set.phi(x).unwrap_or(f64::NAN),
                        psi: experiment.set.psi(x).unwrap_or(f64::NAN),
                        error: None,
                    })
                    .collect(),
            };
            write_atomic(
                &out_dir.join("responses.csv"),
                artifacts::responses_csv(&rows).as_bytes(),
            )
            .map_err(io_err)?;
            write_atomic(
                &out_dir.join("diagnostics.json"),
                &to_json_bytes(&config::preset_diagnostics(experiment)),
            )
            .map_err(io_err)?;
            eprintln!(
                "responses: {} rows -> {}",
                rows.len(),
                out_dir.join("responses.csv").display()
            );
        }
        CommandKind::Simulate => {
            let section = experiment.resolved.simulate.as_ref().unwrap();
            let model = experiment.set.model().expect("checked in resolve");
            let initial = match &section.initial_age {
                None => InitialAges::AllZero,
                Some(InitialAgeConfig::Keyword(k)) if k == "zero" => InitialAges::AllZero,
                Some(InitialAgeConfig::Keyword(k)) => {
                    return Err(CliError::Config(format!(
                        "unknown initial_age keyword `{k}`"
                    )))
                }
                Some(InitialAgeConfig::Law(law)) => {
                    let built = law
                        .build(model.x_range(), "simulate.initial_age")
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    InitialAges::Sampled(built)
                }
            };
            let mut state = SimState::init(
                ScalingConfig::new(section.k1, section.k2),
                section.x0,
                section.y0,
                &initial,
                section.mode,
                section.seed,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            state.set_hard_cap(section.hard_cap);
            let recording = RecordingConfig {
                sample_points: section.sample_points,
                t_bins: section.t_bins,
                age_bins: section.age_bins,
                a_cap: section.a_cap,
                age_snapshots: section.age_snapshots,
            };
            let out = ibm::simulate(state, model, section.t, &recording);
            write_atomic(
                &out_dir.join("trajectory.csv"),
                artifacts::trajectory_csv(&out.trajectory).as_bytes(),
            )
            .map_err(io_err)?;
            write_atomic(
                &out_dir.join("occupation.json"),
                &to_json_bytes(&artifacts::occupation_json(&out.occupation)),
            )
            .map_err(io_err)?;
            let abort_label = out.aborted.map(|_| "population_cap");
            write_atomic(
                &out_dir.join("events.json"),
                &to_json_bytes(&artifacts::events_json(&out.counters, abort_label)),
            )
            .map_err(io_err)?;
            eprintln!(
                "simulate: {} events, final prey {}, predators {}",
                out.counters.events_total, out.final_prey, out.final_predators
            );
            if out.aborted.is_some() {
                return Err(CliError::Runtime(
                    "simulation aborted at the population cap; partial artifacts written".into(),
                ));
            }
        }
        CommandKind::Ode => {
            let section = experiment.resolved.ode.as_ref().unwrap();
            let system = LimitSystem::new(clone_set(&experiment.set), experiment.prey_net)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let grid: Vec<f64> = (0..=section.sample_points)
                .map(|i| section.t * i as f64 / section.sample_points as f64)
                .collect();
            let record_conservation = experiment.set.linear_phi_coeff().is_some();
            let sol = system
                .integrate(
                    section.x0,
                    section.y0,
                    &grid,
                    section.tolerance,
                    record_conservation,
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_atomic(&out_dir.join("ode.csv"), artifacts::ode_csv(&sol).as_bytes())
                .map_err(io_err)?;
            let eq = find_equilibrium(&system, section, experiment)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_atomic(
                &out_dir.join("equilibrium.json"),
                &to_json_bytes(&artifacts::equilibrium_json(eq.as_ref())),
            )
            .map_err(io_err)?;
            let drift = sol.conservation.as_ref().map(|c| {
                let l0 = c[0];
                c.iter().map(|v| (v - l0).abs()).fold(0.0f64, f64::max)
            });
            eprintln!("ode: {} steps, conservation drift {:?}", sol.steps, drift);
        }
        CommandKind::Study => {
            let section = experiment.resolved.study.as_ref().unwrap();
            let model = experiment.set.model().expect("checked in resolve");
            let study = ConvergenceStudy {
                ladder: section.ladder.iter().map(|[a, b]| (*a, *b)).collect(),
                t_end: section.t,
                replicas: section.replicas,
                seed_root: section.seed_root,
                x0: section.x0,
                y0: section.y0,
                recording: RecordingConfig {
                    sample_points: section.sample_points,
                    t_bins: section.t_bins,
                    age_bins: section.age_bins,
                    a_cap: section.a_cap,
                    age_snapshots: false,
                },
                mode: section.mode,
                ode_rel_tol: 1e-9,
            };
            let report =
                harness::run_study(model, &study).map_err(|e| CliError::Runtime(e.to_string()))?;
            write_atomic(
                &out_dir.join("study.csv"),
                artifacts::study_csv(&report, section.timings).as_bytes(),
            )
            .map_err(io_err)?;
            write_atomic(
                &out_dir.join("study.json"),
                &to_json_bytes(&artifacts::study_json(&report, section.timings)),
            )
            .map_err(io_err)?;
            for rung in &report.rungs {
                eprintln!(
                    "study rung K1={} K2={}: median sup|Xi - x| = {:.4}, median TV(S) = {:.4}",
                    rung.k1, rung.k2, rung.median_err_x, rung.median_tv_search
                );
            }
        }
    }
    Ok(())
}

fn clone_set(set: &ResponseSet) -> ResponseSet {
    set.clone()
}

fn find_equilibrium(
    system: &LimitSystem,
    section: &OdeCmd,
    experiment: &Experiment,
) -> Result<Option<predprey::ode::Equilibrium>, predprey::hazards::DomainError> {
    if let Some([lo, hi]) = section.equilibrium_bracket {
        return system.find_equilibrium(lo, hi);
    }
    // Scan a log grid for a sign change of psi.
    let range = experiment.set.x_range();
    let lo = range.min.max(1e-3);
    let hi = range.max.min(1e3);
    let grid: Vec<f64> = (0..=64)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 64.0).exp())
        .collect();
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        let v = experiment.set.psi(x)?;
        if let Some((x0, v0)) = prev {
            if v0 * v < 0.0 || v0 == 0.0 {
                return system.find_equilibrium(x0, x);
            }
        }
        prev = Some((x, v));
    }
    Ok(None)
}
