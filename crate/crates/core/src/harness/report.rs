//! Sweep artifacts: CSV curves, a JSON run manifest, and SVG plots.
//!
//! Every writer is deterministic: no timestamps, no machine identifiers, so
//! reruns of the same config produce byte-identical files.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::experiment::{CurveOutput, ExperimentConfig};
use super::{AlgorithmKind, Scenario};
use crate::active::{one_stage_solve_traced, two_stage_solve_traced};
use crate::Result;

/// Writes one curve as RFC-4180 CSV (CRLF rows, header first). Empirical
/// columns are empty when the overlay was off.
pub fn write_curve_csv(path: &Path, curve: &CurveOutput) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    wtr.write_record([
        curve.axis.label(),
        "analytic_pf",
        "analytic_pd",
        "empirical_pf",
        "empirical_pd",
        "stderr_pf",
        "stderr_pd",
        "realizations",
        "trials",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for pt in &curve.points {
        wtr.write_record([
            pt.axis_value.to_string(),
            pt.analytic_pf.to_string(),
            pt.analytic_pd.to_string(),
            opt(pt.empirical_pf),
            opt(pt.empirical_pd),
            opt(pt.stderr_pf),
            opt(pt.stderr_pd),
            pt.realizations.to_string(),
            pt.trials.to_string(),
        ])?;
    }
    wtr.flush().map_err(std::io::Error::from)?;
    Ok(())
}

/// What reproduces a run: the full config, its content hash, and the library
/// version that executed it. Seeds are surfaced redundantly so a reader can
/// grab them without digging into the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub channel_seed: u64,
    pub noise_seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        let digest = Sha256::digest(&canonical);
        let mut config_sha256 = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(config_sha256, "{byte:02x}").expect("hex into string");
        }
        Ok(Self {
            config: config.clone(),
            config_sha256,
            channel_seed: config.scenario.channel_seed,
            noise_seed: config.scenario.noise_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, manifest)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Per-iteration trajectory of one solver run, for the convergence figures.
/// The one-stage solver reports its surrogate objective and the detection
/// probability per accepted iterate; the two-stage solver reports each
/// probed detection target and whether it was certified feasible (1) or
/// refuted (0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub realization: usize,
    pub objective: Vec<f64>,
    pub pd: Vec<f64>,
}

/// Runs the scenario's solver on `realizations` channel draws and collects
/// the per-iteration trajectories.
pub fn run_convergence(sc: &Scenario, realizations: usize) -> Result<Vec<ConvergenceCurve>> {
    let mut curves = Vec::with_capacity(realizations);
    for r in 0..realizations {
        let ch = sc.sample(r as u64)?;
        let curve = match sc.algorithm {
            AlgorithmKind::ActiveTwoStage => {
                let (_, trace) = two_stage_solve_traced(&ch, &sc.prm)?;
                ConvergenceCurve {
                    realization: r,
                    objective: trace.probes.iter().map(|&(t, _)| t).collect(),
                    pd: trace
                        .probes
                        .iter()
                        .map(|&(_, ok)| if ok { 1.0 } else { 0.0 })
                        .collect(),
                }
            }
            _ => {
                let (_, trace) = one_stage_solve_traced(&ch, &sc.prm)?;
                ConvergenceCurve {
                    realization: r,
                    objective: trace.iterates.iter().map(|it| it.objective).collect(),
                    pd: trace.iterates.iter().map(|it| it.pd).collect(),
                }
            }
        };
        curves.push(curve);
    }
    Ok(curves)
}

pub fn write_convergence_csv(path: &Path, curves: &[ConvergenceCurve]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?;
    wtr.write_record(["realization", "step", "objective", "pd"])?;
    for curve in curves {
        for (i, (obj, pd)) in curve.objective.iter().zip(&curve.pd).enumerate() {
            wtr.write_record([
                curve.realization.to_string(),
                i.to_string(),
                obj.to_string(),
                pd.to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(std::io::Error::from)?;
    Ok(())
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const PLOT_W: f64 = 720.0;
const PLOT_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Renders detection-probability curves as a standalone SVG document.
/// Power axes are shown in dBm; everything else in its natural unit.
/// Empirical overlays, when present, appear as circles on the same color.
pub fn render_svg(title: &str, curves: &[(&str, &CurveOutput)]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let power_axis = curves
        .first()
        .map(|(_, c)| c.axis.is_power())
        .unwrap_or(false);
    let to_x = |v: f64| {
        if power_axis {
            10.0 * v.log10() + 30.0
        } else {
            v
        }
    };
    for (_, curve) in curves {
        xs.extend(curve.points.iter().map(|p| to_x(p.axis_value)));
    }
    let (mut x_lo, mut x_hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !x_lo.is_finite() || x_lo == x_hi {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    let px = |v: f64| MARGIN_L + (v - x_lo) / (x_hi - x_lo) * (PLOT_W - MARGIN_L - MARGIN_R);
    let py = |p: f64| PLOT_H - MARGIN_B - p.clamp(0.0, 1.0) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        PLOT_W / 2.0,
        escape(title)
    ));

    // Gridlines and y ticks at quarter steps.
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let y = py(p);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_L,
            PLOT_W - MARGIN_R
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{p}</text>\n",
            MARGIN_L - 8.0,
            y + 4.0
        ));
    }
    // X ticks.
    for k in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let x = px(v);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#999\"/>\n",
            PLOT_H - MARGIN_B,
            PLOT_H - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            PLOT_H - MARGIN_B + 20.0,
            fmt_tick(v)
        ));
    }
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        PLOT_H - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        PLOT_H - MARGIN_B,
        PLOT_W - MARGIN_R,
        PLOT_H - MARGIN_B
    ));
    let x_label = curves
        .first()
        .map(|(_, c)| match c.axis {
            a if a.is_power() => format!("{} (dBm)", a.label()),
            super::SweepAxis::Tau => "tau (s)".to_string(),
            super::SweepAxis::Distance => "distance (m)".to_string(),
            a => a.label().to_string(),
        })
        .unwrap_or_default();
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
        PLOT_H - 14.0,
        escape(&x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">detection probability</text>\n",
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0,
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0
    ));

    for (ci, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", px(to_x(p.axis_value)), py(p.analytic_pd)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for p in &curve.points {
            if let Some(pd) = p.empirical_pd {
                svg.push_str(&format!(
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"none\" stroke=\"{color}\"/>\n",
                    px(to_x(p.axis_value)),
                    py(pd)
                ));
            }
        }
        let ly = MARGIN_T + 16.0 + 18.0 * ci as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + 10.0,
            MARGIN_L + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\">{}</text>\n",
            MARGIN_L + 40.0,
            ly + 4.0,
            escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::super::experiment::{CurvePoint, SweepAxis};
    use super::*;
    use crate::detector::SensingParams;

    fn sample_curve(empirical: bool) -> CurveOutput {
        let mk = |v: f64, pd: f64| CurvePoint {
            axis_value: v,
            analytic_pf: 0.1,
            analytic_pd: pd,
            empirical_pf: empirical.then_some(0.099),
            empirical_pd: empirical.then_some(pd - 0.004),
            stderr_pf: empirical.then_some(0.003),
            stderr_pd: empirical.then_some(0.004),
            realizations: 2,
            trials: 1000,
            diagnostics: vec![],
        };
        CurveOutput {
            axis: SweepAxis::P,
            algorithm: AlgorithmKind::Passive,
            points: vec![mk(3.16e-3, 0.42), mk(1e-2, 0.61), mk(3.16e-2, 0.88)],
        }
    }

    #[test]
    fn csv_uses_crlf_and_round_trips() {
        let path = std::env::temp_dir().join(format!("curve_{}.csv", std::process::id()));
        write_curve_csv(&path, &sample_curve(true)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\r\n"));
        assert!(text.starts_with("p,analytic_pf,analytic_pd,empirical_pf"));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].get(0).unwrap().parse::<f64>().unwrap(), 1e-2);
        assert_eq!(rows[2].get(8).unwrap(), "1000");
        std::fs::remove_file(&path).ok();

        // Overlay off leaves the empirical cells empty.
        let path = std::env::temp_dir().join(format!("curve_dry_{}.csv", std::process::id()));
        write_curve_csv(&path, &sample_curve(false)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",,,,"));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn manifest_round_trips_and_hashes_the_config() {
        let cfg = ExperimentConfig::new(
            Scenario::default(),
            SweepAxis::Tau,
            vec![1e-3, 2e-3],
        );
        let manifest = RunManifest::new(&cfg).unwrap();
        assert_eq!(manifest.config_sha256.len(), 64);
        assert_eq!(manifest.channel_seed, cfg.scenario.channel_seed);
        assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));

        let path = std::env::temp_dir().join(format!("manifest_{}.json", std::process::id()));
        write_manifest(&path, &manifest).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back, manifest);
        std::fs::remove_file(&path).ok();

        // The hash pins content, not identity.
        let mut other = cfg.clone();
        other.grid.push(3e-3);
        assert_ne!(
            RunManifest::new(&other).unwrap().config_sha256,
            manifest.config_sha256
        );
    }

    #[test]
    fn svg_draws_one_polyline_per_curve() {
        let a = sample_curve(true);
        let b = sample_curve(false);
        let svg = render_svg("test plot", &[("alpha", &a), ("beta", &b)]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("alpha") && svg.contains("beta"));
        assert!(svg.contains("p (dBm)"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn convergence_runs_produce_monotone_one_stage_objectives() {
        let sc = Scenario {
            m: 3,
            n: 3,
            prm: SensingParams {
                tau: 1e-4,
                ..Default::default()
            },
            algorithm: AlgorithmKind::ActiveOneStage,
            channel_seed: 31,
            noise_seed: 32,
            ..Default::default()
        };
        let curves = run_convergence(&sc, 2).unwrap();
        assert_eq!(curves.len(), 2);
        for curve in &curves {
            assert!(!curve.objective.is_empty());
            for w in curve.objective.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
            }
        }

        let path = std::env::temp_dir().join(format!("conv_{}.csv", std::process::id()));
        write_convergence_csv(&path, &curves).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("realization,step,objective,pd"));
        std::fs::remove_file(&path).ok();
    }
}
