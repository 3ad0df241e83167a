//! Batch front end for the sensing library: design one configuration, sweep
//! a parameter into CSV curves, size a deployment from closed forms, or
//! self-check the closed forms against simulation.
//!
//! Exit codes: 0 on success, 1 when `validate` finds a violation, 2 for
//! configuration problems (bad flags, malformed config files, invalid
//! parameter combinations), 3 for runtime failures (solver breakdowns,
//! unwritable output paths).

mod checks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ris_sensing::channel::path_loss;
use ris_sensing::harness::{
    figure_preset, render_svg, run_convergence, run_experiment, write_convergence_csv,
    write_curve_csv, write_manifest, AlgorithmKind, CurveOutput, ExperimentConfig, FigurePreset,
    RunManifest, Scenario, SweepAxis,
};
use ris_sensing::math::PowerValue;
use ris_sensing::sizing::{
    compare_active_passive, elements_from_power_budget, min_elements_active, min_elements_passive,
    optimal_uniform_amplification, SizingInputs, Winner,
};
use ris_sensing::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ris-sense",
    version,
    about = "Detector design, parameter sweeps, and deployment sizing for RIS-aided spectrum sensing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design combiner, surface, and threshold for one channel draw; print JSON
    Solve(SolveArgs),
    /// Sweep one parameter into CSV curves with a run manifest and optional SVG
    Sweep(SweepArgs),
    /// Print closed-form element counts and the active-versus-passive verdict
    Size(SizeArgs),
    /// Check the closed forms against simulation; exit 1 on any violation
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    NoRis,
    Passive,
    ActiveOneStage,
    ActiveTwoStage,
}

impl From<AlgorithmArg> for AlgorithmKind {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::NoRis => AlgorithmKind::NoRis,
            AlgorithmArg::Passive => AlgorithmKind::Passive,
            AlgorithmArg::ActiveOneStage => AlgorithmKind::ActiveOneStage,
            AlgorithmArg::ActiveTwoStage => AlgorithmKind::ActiveTwoStage,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    N,
    M,
    Tau,
    P,
    PRisMax,
    PathlossExponent,
    PTotal,
    Distance,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::N => SweepAxis::N,
            AxisArg::M => SweepAxis::M,
            AxisArg::Tau => SweepAxis::Tau,
            AxisArg::P => SweepAxis::P,
            AxisArg::PRisMax => SweepAxis::PRisMax,
            AxisArg::PathlossExponent => SweepAxis::PathlossExponent,
            AxisArg::PTotal => SweepAxis::PTotal,
            AxisArg::Distance => SweepAxis::Distance,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Config file, TOML or JSON (the scenario section is used)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Design algorithm
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Channel seed; the noise seed defaults to seed + 1
    #[arg(long)]
    seed: Option<u64>,
    /// Receive antennas
    #[arg(long)]
    m: Option<usize>,
    /// Surface elements
    #[arg(long)]
    n: Option<usize>,
    /// Channel realization index to draw
    #[arg(long, default_value_t = 0)]
    realization: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Config file, TOML or JSON; flags below override its fields
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Design algorithm
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    /// Swept parameter
    #[arg(long, value_enum)]
    axis: Option<AxisArg>,
    /// Grid start; power axes also accept dBm, e.g. "5dBm"
    #[arg(long, value_name = "VALUE")]
    from: Option<String>,
    /// Grid end, same unit as --from
    #[arg(long, value_name = "VALUE")]
    to: Option<String>,
    /// Grid size; dBm endpoints space the grid evenly in dB
    #[arg(long)]
    points: Option<usize>,
    /// Noise trials per realization for the empirical overlay
    #[arg(long)]
    trials: Option<u64>,
    /// Channel draws averaged per grid point
    #[arg(long)]
    realizations: Option<usize>,
    /// Simulate detection and false-alarm rates next to the closed forms
    #[arg(long)]
    empirical: bool,
    /// Channel seed; the noise seed defaults to seed + 1
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV, manifest, and plots (default ".")
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Also write an SVG plot
    #[arg(long)]
    emit_plots: bool,
    /// Run a ready-made figure preset (3 through 12) instead of one sweep
    #[arg(long, value_name = "NUM")]
    figure: Option<u8>,
}

#[derive(Args)]
struct SizeArgs {
    /// Config file, TOML or JSON (scenario geometry and detector parameters)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Receive antennas; combining gain folds into the element magnitude
    #[arg(long)]
    m: Option<usize>,
    /// Element count for the equal-count comparison
    #[arg(long)]
    n: Option<usize>,
    /// Total deployment budget for affordable counts; watts or dBm
    #[arg(long, value_name = "VALUE")]
    p_total: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Size(a) => cmd_size(a),
        Command::Validate => {
            return if checks::run_all() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(failure_code(&e))
        }
    }
}

/// 2 for anything the caller can fix in the invocation or config file, 3 for
/// failures at run time.
fn failure_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Construction(_) => 2,
        _ => 3,
    }
}

/// Prints one line to stdout, treating a closed pipe as a normal end of
/// output rather than an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("could not read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
    }
}

fn apply_scenario_flags(
    sc: &mut Scenario,
    algorithm: Option<AlgorithmArg>,
    seed: Option<u64>,
    m: Option<usize>,
    n: Option<usize>,
) {
    if let Some(alg) = algorithm {
        sc.algorithm = alg.into();
    }
    if let Some(seed) = seed {
        sc.channel_seed = seed;
        sc.noise_seed = seed.wrapping_add(1);
    }
    if let Some(m) = m {
        sc.m = m;
    }
    if let Some(n) = n {
        sc.n = n;
    }
}

/// Parses a grid endpoint. A trailing "dBm" (any case) marks a power in dBm;
/// anything else reads as the axis's natural unit.
fn parse_endpoint(text: &str) -> Result<(f64, bool)> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (num, dbm) = match lower.strip_suffix("dbm") {
        Some(rest) => (rest.trim_end(), true),
        None => (lower.as_str(), false),
    };
    let v: f64 = num
        .parse()
        .map_err(|_| Error::Config(format!("could not parse '{t}' as a number")))?;
    Ok((v, dbm))
}

fn build_grid(from: &str, to: &str, points: usize, axis: SweepAxis) -> Result<Vec<f64>> {
    if points < 1 {
        return Err(Error::Config("--points must be at least 1".into()));
    }
    let (a, a_dbm) = parse_endpoint(from)?;
    let (b, b_dbm) = parse_endpoint(to)?;
    if a_dbm != b_dbm {
        return Err(Error::Config(
            "--from and --to must use the same unit".into(),
        ));
    }
    if a_dbm && !axis.is_power() {
        return Err(Error::Config(format!(
            "dBm endpoints only apply to power axes, not {}",
            axis.label()
        )));
    }
    let raw: Vec<f64> = if points == 1 {
        vec![a]
    } else {
        let step = (b - a) / (points - 1) as f64;
        (0..points).map(|i| a + step * i as f64).collect()
    };
    Ok(if a_dbm {
        raw.into_iter()
            .map(|d| PowerValue::from_dbm(d).watts())
            .collect()
    } else {
        raw
    })
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let mut sc = match &a.config {
        Some(p) => load_config(p)?.scenario,
        None => Scenario::default(),
    };
    apply_scenario_flags(&mut sc, a.algorithm, a.seed, a.m, a.n);
    sc.validate()?;
    let ch = sc.sample(a.realization)?;
    let sol = sc.solve(&ch)?;
    emit(&serde_json::to_string_pretty(&sol)?)?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if let Some(which) = a.figure {
        return run_figure(which, &a);
    }
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => {
            if a.axis.is_none() {
                return Err(Error::Config(
                    "sweep needs --config, --figure, or --axis with --from/--to/--points".into(),
                ));
            }
            ExperimentConfig::default()
        }
    };
    apply_scenario_flags(&mut cfg.scenario, a.algorithm, a.seed, None, None);
    if let Some(axis) = a.axis {
        cfg.axis = axis.into();
    }
    if a.from.is_some() || a.to.is_some() || a.points.is_some() {
        let (from, to, points) = match (&a.from, &a.to, a.points) {
            (Some(f), Some(t), Some(p)) => (f, t, p),
            _ => {
                return Err(Error::Config(
                    "--from, --to, and --points go together".into(),
                ))
            }
        };
        cfg.grid = build_grid(from, to, points, cfg.axis)?;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(r) = a.realizations {
        cfg.realizations = r;
    }
    if a.empirical {
        cfg.empirical = true;
    }
    if let Some(out) = &a.out {
        cfg.out_dir = Some(out.display().to_string());
    }
    if a.emit_plots {
        cfg.emit_plots = true;
    }
    cfg.validate()?;
    let curve = run_experiment(&cfg)?;
    let stem = format!(
        "sweep_{}_{}",
        cfg.axis.label(),
        cfg.scenario.algorithm.label()
    );
    let dir = out_dir(&cfg);
    write_curve_bundle(&dir, &stem, &cfg, &curve)?;
    if cfg.emit_plots {
        let svg = render_svg(&stem, &[(cfg.scenario.algorithm.label(), &curve)]);
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, svg)?;
        emit(&format!("wrote {}", path.display()))?;
    }
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(cfg.out_dir.as_deref().unwrap_or("."))
}

/// CSV plus manifest for one curve; prints where they went.
fn write_curve_bundle(
    dir: &Path,
    stem: &str,
    cfg: &ExperimentConfig,
    curve: &CurveOutput,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_curve_csv(&csv_path, curve)?;
    emit(&format!("wrote {}", csv_path.display()))?;
    let manifest_path = dir.join(format!("{stem}_manifest.json"));
    write_manifest(&manifest_path, &RunManifest::new(cfg)?)?;
    emit(&format!("wrote {}", manifest_path.display()))?;
    Ok(())
}

fn run_figure(which: u8, a: &SweepArgs) -> Result<()> {
    let preset = figure_preset(which)?;
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));
    match preset {
        FigurePreset::Sweep { name, curves } => {
            let mut rendered: Vec<(String, CurveOutput)> = Vec::new();
            for (label, mut cfg) in curves {
                if let Some(r) = a.realizations {
                    cfg.realizations = r;
                }
                if let Some(t) = a.trials {
                    cfg.trials = t;
                }
                if a.empirical {
                    cfg.empirical = true;
                }
                if let Some(seed) = a.seed {
                    cfg.scenario.channel_seed = seed;
                    cfg.scenario.noise_seed = seed.wrapping_add(1);
                }
                cfg.out_dir = Some(dir.display().to_string());
                cfg.emit_plots = a.emit_plots;
                cfg.validate()?;
                let curve = run_experiment(&cfg)?;
                write_curve_bundle(&dir, &format!("{name}_{label}"), &cfg, &curve)?;
                rendered.push((label, curve));
            }
            if a.emit_plots {
                let refs: Vec<(&str, &CurveOutput)> = rendered
                    .iter()
                    .map(|(l, c)| (l.as_str(), c))
                    .collect();
                let path = dir.join(format!("{name}.svg"));
                std::fs::write(&path, render_svg(&name, &refs))?;
                emit(&format!("wrote {}", path.display()))?;
            }
        }
        FigurePreset::Convergence {
            name,
            scenario,
            realizations,
        } => {
            let realizations = a.realizations.unwrap_or(realizations);
            let curves = run_convergence(&scenario, realizations)?;
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{name}.csv"));
            write_convergence_csv(&path, &curves)?;
            emit(&format!("wrote {}", path.display()))?;
        }
    }
    Ok(())
}

fn cmd_size(a: SizeArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    let mut sc = cfg.scenario.clone();
    apply_scenario_flags(&mut sc, None, None, a.m, a.n);
    sc.validate()?;

    // Worst-element anchors from the deployment geometry: the element-to-
    // terminal magnitude folds the M-antenna combining gain, the feed
    // magnitude is the transmitter-to-surface loss alone.
    let g = &sc.geometry;
    let pl_feed = path_loss(g.d_pt_ris(), g.exp_pt_ris, g.ref_gain_db, g.ref_distance)?;
    let pl_exit = path_loss(g.d_ris_st(), g.exp_ris_st, g.ref_gain_db, g.ref_distance)?;
    let h_min = (sc.m as f64 * pl_exit).sqrt();
    let hr_min = pl_feed.sqrt();
    let s = SizingInputs::new(sc.prm.clone(), h_min, hr_min)?;

    let n_passive = min_elements_passive(&s)?;
    let n_active = min_elements_active(&s)?;
    let gain = if n_active >= 1 {
        Some(optimal_uniform_amplification(&s, n_active)?)
    } else {
        None
    };
    let (winner, shortcut) = compare_active_passive(&s, sc.n, sc.n)?;
    let winner = match winner {
        Winner::ActiveWins => "active_wins",
        Winner::PassiveWins => "passive_wins",
    };

    let mut report = serde_json::json!({
        "worst_element": { "h_min": h_min, "hr_min": hr_min },
        "n_passive": n_passive,
        "n_active": n_active,
        "uniform_gain_at_n_active": gain,
        "equal_count": {
            "n": sc.n,
            "winner": winner,
            "count_shortcut_holds": shortcut,
        },
    });
    if let Some(text) = &a.p_total {
        let (v, dbm) = parse_endpoint(text)?;
        let p_total = if dbm {
            PowerValue::from_dbm(v)
        } else {
            PowerValue::from_watts(v)?
        };
        let (aff_pas, aff_act) = elements_from_power_budget(
            p_total,
            cfg.p_element_switch,
            cfg.p_element_bias,
            PowerValue::from_watts(sc.prm.p_ris_max)?,
        )?;
        report["affordable"] = serde_json::json!({
            "p_total_watts": p_total.watts(),
            "n_passive": aff_pas,
            "n_active": aff_act,
        });
    }
    emit(&serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
