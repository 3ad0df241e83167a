//! Parameter sweeps over seeded channel ensembles.
//!
//! A sweep fixes a base scenario and varies one axis over a grid. Channel
//! realizations are keyed by realization index alone, so every grid point
//! sees the same channel ensemble (and growing N or M extends a realization
//! instead of redrawing it); noise trials are keyed by (point, realization).
//! Realizations fan out to the thread pool and merge in index order, so the
//! output is a pure function of the config.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_monte_carlo, AlgorithmKind, Scenario};
use crate::channel::FadingModel;
use crate::math::PowerValue;
use crate::seeds;
use crate::sizing::elements_from_power_budget;
use crate::{Error, Result};

/// Which scenario parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Surface element count.
    N,
    /// Receive antenna count.
    M,
    /// Sensing duration, seconds.
    Tau,
    /// Transmit power, watts.
    P,
    /// Amplification power budget, watts.
    PRisMax,
    /// Common path-loss exponent applied to all three links.
    PathlossExponent,
    /// Total surface deployment budget, watts; element counts follow from
    /// the per-element power draws.
    PTotal,
    /// Surface-to-terminal distance, meters; the terminal slides along its
    /// axis to meet it.
    Distance,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            Self::N => "n",
            Self::M => "m",
            Self::Tau => "tau",
            Self::P => "p",
            Self::PRisMax => "p_ris_max",
            Self::PathlossExponent => "pathloss_exponent",
            Self::PTotal => "p_total",
            Self::Distance => "distance",
        }
    }

    /// Axes measured in watts; plots show them in dBm.
    pub fn is_power(self) -> bool {
        matches!(self, Self::P | Self::PRisMax | Self::PTotal)
    }
}

fn default_realizations() -> usize {
    20
}
fn default_trials() -> u64 {
    10_000
}
fn default_switch_power() -> PowerValue {
    PowerValue::from_dbm(-10.0)
}
fn default_bias_power() -> PowerValue {
    PowerValue::from_dbm(-5.0)
}

/// One sweep: a base scenario, an axis with its grid, and the averaging and
/// output knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub axis: SweepAxis,
    /// Strictly monotone, nonempty axis grid in the axis's natural unit.
    pub grid: Vec<f64>,
    /// Independent channel draws averaged per grid point.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Noise trials per realization when the empirical overlay is on.
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Adds simulated detection/false-alarm rates next to the closed forms.
    #[serde(default)]
    pub empirical: bool,
    /// Per-element switch and control power, for the `p_total` axis.
    #[serde(default = "default_switch_power")]
    pub p_element_switch: PowerValue,
    /// Per-element amplifier bias power, for the `p_total` axis.
    #[serde(default = "default_bias_power")]
    pub p_element_bias: PowerValue,
    /// Where the CLI writes CSV, manifest, and plots.
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub emit_plots: bool,
}

impl Default for ExperimentConfig {
    /// A single-point sweep over the default scenario's own element count.
    /// Exists so sparse config files can omit everything but what they change.
    fn default() -> Self {
        let sc = Scenario::default();
        let n = sc.n as f64;
        Self::new(sc, SweepAxis::N, vec![n])
    }
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, axis: SweepAxis, grid: Vec<f64>) -> Self {
        Self {
            scenario,
            axis,
            grid,
            realizations: default_realizations(),
            trials: default_trials(),
            empirical: false,
            p_element_switch: default_switch_power(),
            p_element_bias: default_bias_power(),
            out_dir: None,
            emit_plots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep grid contains a non-finite value".into()));
        }
        let up = self.grid.windows(2).all(|w| w[0] < w[1]);
        let down = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config("sweep grid must be strictly monotone".into()));
        }
        if self.realizations < 1 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.empirical && self.trials < 1 {
            return Err(Error::Config("empirical overlay needs at least one trial".into()));
        }
        for &v in &self.grid {
            self.scenario_at(v)?;
        }
        Ok(())
    }

    /// The base scenario with the axis set to `v`.
    pub fn scenario_at(&self, v: f64) -> Result<Scenario> {
        let mut sc = self.scenario.clone();
        match self.axis {
            SweepAxis::N => sc.n = count_value(v, "n")?,
            SweepAxis::M => sc.m = count_value(v, "m")?,
            SweepAxis::Tau => sc.prm.tau = v,
            SweepAxis::P => sc.prm.p = v,
            SweepAxis::PRisMax => sc.prm.p_ris_max = v,
            SweepAxis::PathlossExponent => {
                if !(v > 0.0) {
                    return Err(Error::Config(format!(
                        "path-loss exponent must be positive, got {v}"
                    )));
                }
                sc.geometry.exp_pt_ris = v;
                sc.geometry.exp_ris_st = v;
                sc.geometry.exp_pt_st = v;
            }
            SweepAxis::PTotal => {
                let (n_pas, n_act) = elements_from_power_budget(
                    PowerValue::from_watts(v)?,
                    self.p_element_switch,
                    self.p_element_bias,
                    PowerValue::from_watts(sc.prm.p_ris_max)?,
                )?;
                let affordable = match sc.algorithm {
                    AlgorithmKind::NoRis => sc.n,
                    AlgorithmKind::Passive => n_pas,
                    AlgorithmKind::ActiveOneStage | AlgorithmKind::ActiveTwoStage => n_act,
                };
                // A budget too small for a single element leaves the
                // direct link alone.
                if affordable == 0 {
                    sc.algorithm = AlgorithmKind::NoRis;
                } else {
                    sc.n = affordable;
                }
            }
            SweepAxis::Distance => {
                let dy = sc.geometry.ris[1] - sc.geometry.st[1];
                if !(v > dy.abs()) {
                    return Err(Error::Config(format!(
                        "surface-terminal distance must exceed the height gap {}, got {v}",
                        dy.abs()
                    )));
                }
                sc.geometry.st[0] = sc.geometry.ris[0] + (v * v - dy * dy).sqrt();
            }
        }
        sc.validate()?;
        Ok(sc)
    }
}

fn count_value(v: f64, name: &str) -> Result<usize> {
    let rounded = v.round();
    if !(v >= 0.5) || (v - rounded).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "axis {name} needs a positive integer grid, got {v}"
        )));
    }
    Ok(rounded as usize)
}

/// Averages at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub axis_value: f64,
    /// Closed-form rates averaged over realizations.
    pub analytic_pf: f64,
    pub analytic_pd: f64,
    /// Simulated rates, present when the empirical overlay is on.
    pub empirical_pf: Option<f64>,
    pub empirical_pd: Option<f64>,
    /// Pooled binomial standard errors of the simulated rates.
    pub stderr_pf: Option<f64>,
    pub stderr_pd: Option<f64>,
    pub realizations: usize,
    pub trials: u64,
    /// Solver warnings, tagged by realization index.
    pub diagnostics: Vec<String>,
}

/// One full sweep result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOutput {
    pub axis: SweepAxis,
    pub algorithm: AlgorithmKind,
    pub points: Vec<CurvePoint>,
}

struct RealizationResult {
    pf: f64,
    pd: f64,
    empirical: Option<(f64, f64, f64, f64)>,
    diagnostics: Vec<String>,
}

/// Runs the sweep: per grid point, solves `realizations` channel draws,
/// averages the closed-form rates, and optionally overlays simulated rates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CurveOutput> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.grid.len());
    for (pi, &v) in cfg.grid.iter().enumerate() {
        points.push(run_point(cfg, pi, v)?);
    }
    Ok(CurveOutput {
        axis: cfg.axis,
        algorithm: cfg.scenario.algorithm,
        points,
    })
}

fn run_point(cfg: &ExperimentConfig, pi: usize, v: f64) -> Result<CurvePoint> {
    let sc = cfg.scenario_at(v)?;
    let results: Vec<RealizationResult> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| -> Result<RealizationResult> {
            let ch = sc.sample(r as u64)?;
            let sol = sc.solve(&ch)?;
            let diagnostics = sol
                .warnings
                .iter()
                .map(|w| format!("r{r}: {w}"))
                .collect();
            let empirical = if cfg.empirical {
                let mut mc_sc = sc.clone();
                mc_sc.noise_seed = seeds::derive(sc.noise_seed, &[pi as u64, r as u64]);
                let est = run_monte_carlo(&mc_sc, &ch, &sol, cfg.trials)?;
                Some((est.pf, est.pd, est.stderr_pf, est.stderr_pd))
            } else {
                None
            };
            Ok(RealizationResult {
                pf: sol.pf,
                pd: sol.pd,
                empirical,
                diagnostics,
            })
        })
        .collect::<Result<_>>()?;

    let k = cfg.realizations as f64;
    let analytic_pf = results.iter().map(|r| r.pf).sum::<f64>() / k;
    let analytic_pd = results.iter().map(|r| r.pd).sum::<f64>() / k;
    let mut diagnostics: Vec<String> = Vec::new();
    for r in &results {
        diagnostics.extend(r.diagnostics.iter().cloned());
    }

    let mut point = CurvePoint {
        axis_value: v,
        analytic_pf,
        analytic_pd,
        empirical_pf: None,
        empirical_pd: None,
        stderr_pf: None,
        stderr_pd: None,
        realizations: cfg.realizations,
        trials: cfg.trials,
        diagnostics,
    };
    if cfg.empirical {
        let mut pf = 0.0;
        let mut pd = 0.0;
        let mut var_pf = 0.0;
        let mut var_pd = 0.0;
        for r in &results {
            let (epf, epd, se_pf, se_pd) = r.empirical.expect("overlay requested");
            pf += epf;
            pd += epd;
            var_pf += se_pf * se_pf;
            var_pd += se_pd * se_pd;
        }
        point.empirical_pf = Some(pf / k);
        point.empirical_pd = Some(pd / k);
        // Independent trials across realizations, so the variance of the
        // mean is the mean of variances over k.
        point.stderr_pf = Some((var_pf).sqrt() / k);
        point.stderr_pd = Some((var_pd).sqrt() / k);
    }
    Ok(point)
}

/// A ready-made experiment reproducing one simulation figure at desk scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FigurePreset {
    /// A family of sweep curves drawn on shared axes.
    Sweep {
        name: String,
        curves: Vec<(String, ExperimentConfig)>,
    },
    /// Per-iteration solver trajectories on a handful of realizations.
    Convergence {
        name: String,
        scenario: Scenario,
        realizations: usize,
    },
}

impl FigurePreset {
    pub fn name(&self) -> &str {
        match self {
            Self::Sweep { name, .. } | Self::Convergence { name, .. } => name,
        }
    }
}

fn dbm_grid(points: &[f64]) -> Vec<f64> {
    points.iter().map(|&d| PowerValue::from_dbm(d).watts()).collect()
}

fn base(algorithm: AlgorithmKind, m: usize, n: usize) -> Scenario {
    Scenario {
        m,
        n,
        algorithm,
        ..Default::default()
    }
}

/// Curve bundles numbered like the published figures (3 through 12):
/// convergence traces, the distance/fading study, element-count sweeps for
/// both surface types, then sensing time, transmit power, amplification
/// budget, path-loss exponent, and total deployment budget.
///
/// Grids and realization counts are sized for a desk run, not for print
/// quality.
pub fn figure_preset(which: u8) -> Result<FigurePreset> {
    let sweep = |name: &str, curves: Vec<(&str, ExperimentConfig)>| FigurePreset::Sweep {
        name: name.to_string(),
        curves: curves
            .into_iter()
            .map(|(l, c)| (l.to_string(), c))
            .collect(),
    };
    // Lighter averaging where every point runs a convex solver.
    let trim = |mut cfg: ExperimentConfig, realizations: usize| {
        cfg.realizations = realizations;
        cfg
    };
    match which {
        3 => Ok(FigurePreset::Convergence {
            name: "fig03_one_stage_convergence".into(),
            scenario: base(AlgorithmKind::ActiveOneStage, 8, 6),
            realizations: 4,
        }),
        4 => Ok(FigurePreset::Convergence {
            name: "fig04_two_stage_bisection".into(),
            scenario: base(AlgorithmKind::ActiveTwoStage, 8, 6),
            realizations: 4,
        }),
        5 => {
            let grid = vec![150.0, 250.0, 350.0, 450.0];
            let rayleigh = ExperimentConfig::new(
                base(AlgorithmKind::Passive, 8, 6),
                SweepAxis::Distance,
                grid.clone(),
            );
            let mut rician = rayleigh.clone();
            rician.scenario.fading = FadingModel::Rician { k_factor_db: 3.0 };
            rician.grid = grid;
            Ok(sweep(
                "fig05_passive_distance",
                vec![("rayleigh", rayleigh), ("rician_3db", rician)],
            ))
        }
        6 => {
            let grid: Vec<f64> = vec![10.0, 20.0, 40.0, 80.0, 120.0, 160.0, 200.0];
            let mk = |m: usize| {
                ExperimentConfig::new(base(AlgorithmKind::Passive, m, 6), SweepAxis::N, grid.clone())
            };
            Ok(sweep(
                "fig06_passive_elements",
                vec![("m16", mk(16)), ("m128", mk(128))],
            ))
        }
        7 => {
            let grid: Vec<f64> = vec![4.0, 8.0, 16.0, 24.0];
            let mk = |alg| {
                trim(
                    ExperimentConfig::new(base(alg, 16, 6), SweepAxis::N, grid.clone()),
                    2,
                )
            };
            Ok(sweep(
                "fig07_active_elements",
                vec![
                    ("one_stage", mk(AlgorithmKind::ActiveOneStage)),
                    ("two_stage", mk(AlgorithmKind::ActiveTwoStage)),
                ],
            ))
        }
        8 => {
            let grid = vec![2e-4, 6e-4, 1e-3, 1.6e-3];
            let mk = |alg, pf| {
                let mut cfg = trim(
                    ExperimentConfig::new(base(alg, 8, 6), SweepAxis::Tau, grid.clone()),
                    3,
                );
                cfg.scenario.prm.pf_max = pf;
                cfg
            };
            Ok(sweep(
                "fig08_sensing_time",
                vec![
                    ("one_stage_pf10", mk(AlgorithmKind::ActiveOneStage, 0.1)),
                    ("two_stage_pf10", mk(AlgorithmKind::ActiveTwoStage, 0.1)),
                    ("two_stage_pf20", mk(AlgorithmKind::ActiveTwoStage, 0.2)),
                ],
            ))
        }
        9 => {
            let grid = dbm_grid(&[5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
            let mk = |alg| ExperimentConfig::new(base(alg, 8, 6), SweepAxis::P, grid.clone());
            Ok(sweep(
                "fig09_transmit_power",
                vec![
                    ("no_ris", mk(AlgorithmKind::NoRis)),
                    ("passive", mk(AlgorithmKind::Passive)),
                    ("one_stage", trim(mk(AlgorithmKind::ActiveOneStage), 3)),
                ],
            ))
        }
        10 => {
            let grid = dbm_grid(&[-30.0, -20.0, -10.0, 0.0, 10.0]);
            let mk = |alg| ExperimentConfig::new(base(alg, 8, 6), SweepAxis::PRisMax, grid.clone());
            Ok(sweep(
                "fig10_surface_budget",
                vec![
                    ("no_ris", mk(AlgorithmKind::NoRis)),
                    ("passive", mk(AlgorithmKind::Passive)),
                    ("one_stage", trim(mk(AlgorithmKind::ActiveOneStage), 3)),
                    ("two_stage", trim(mk(AlgorithmKind::ActiveTwoStage), 3)),
                ],
            ))
        }
        11 => {
            let grid = vec![2.0, 2.5, 3.0, 3.5];
            let mk = |alg| {
                ExperimentConfig::new(base(alg, 8, 6), SweepAxis::PathlossExponent, grid.clone())
            };
            Ok(sweep(
                "fig11_pathloss_exponent",
                vec![
                    ("no_ris", mk(AlgorithmKind::NoRis)),
                    ("passive", mk(AlgorithmKind::Passive)),
                    ("one_stage", trim(mk(AlgorithmKind::ActiveOneStage), 3)),
                ],
            ))
        }
        12 => {
            let grid = dbm_grid(&[-6.0, -3.0, 0.0, 3.0, 6.0, 9.0]);
            let mk = |alg| ExperimentConfig::new(base(alg, 8, 6), SweepAxis::PTotal, grid.clone());
            Ok(sweep(
                "fig12_total_budget",
                vec![
                    ("no_ris", mk(AlgorithmKind::NoRis)),
                    ("passive", mk(AlgorithmKind::Passive)),
                    ("one_stage", trim(mk(AlgorithmKind::ActiveOneStage), 2)),
                ],
            ))
        }
        other => Err(Error::Config(format!(
            "no preset for figure {other}; available: 3 through 12"
        ))),
    }
}
