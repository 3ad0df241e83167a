//! Monte-Carlo validation and figure sweeps.
//!
//! A [`Scenario`] bundles geometry, fading, array sizes, detector
//! parameters, and the design algorithm, plus two independent seeds: one for
//! channel draws, one for noise trials. Every unit of work derives its own
//! seed from these, so results are identical regardless of execution order
//! or thread scheduling.
//!
//! The trial simulator works on the combiner output scalar. For a fixed
//! design the received vector enters the statistic only through
//! `y = w^H(...)`, a circularly symmetric Gaussian whose variance is the
//! signal power plus the (possibly surface-amplified) noise floor, so
//! drawing that scalar directly reproduces the exact law of the test
//! statistic at a fraction of the cost of materializing `M`-vectors.

mod experiment;
mod report;

pub use experiment::{
    figure_preset, run_experiment, CurveOutput, CurvePoint, ExperimentConfig, FigurePreset,
    SweepAxis,
};
pub use report::{
    render_svg, run_convergence, write_convergence_csv, write_curve_csv, write_manifest,
    ConvergenceCurve, RunManifest,
};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::active::{one_stage_solve, two_stage_solve};
use crate::channel::{sample_channels, ChannelRealization, FadingModel, SystemGeometry};
use crate::detector::{decide, test_statistic, Hypothesis, SensingParams, SensingSolution};
use crate::passive::{solve_no_ris, solve_passive};
use crate::seeds;
use crate::{Error, Result};

/// Which design procedure configures the combiner and the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// Direct link only, maximum-ratio combining.
    NoRis,
    /// Phase-only surface, alternating closed-form updates.
    Passive,
    /// Amplifying surface, joint surrogate ascent on the lifted variables.
    ActiveOneStage,
    /// Amplifying surface, bisection on the detection target.
    ActiveTwoStage,
}

impl AlgorithmKind {
    /// Amplifying surfaces inject their own thermal noise into the link.
    pub fn injects_surface_noise(self) -> bool {
        matches!(self, Self::ActiveOneStage | Self::ActiveTwoStage)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::NoRis => "no_ris",
            Self::Passive => "passive",
            Self::ActiveOneStage => "active_one_stage",
            Self::ActiveTwoStage => "active_two_stage",
        }
    }
}

/// One simulated deployment: where everything sits, how channels fade, how
/// large the arrays are, and which algorithm designs the sensing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub geometry: SystemGeometry,
    pub fading: FadingModel,
    /// Receive antennas at the terminal.
    pub m: usize,
    /// Surface elements.
    pub n: usize,
    pub prm: SensingParams,
    pub algorithm: AlgorithmKind,
    /// Seed for channel realizations; realization `r` derives its own.
    pub channel_seed: u64,
    /// Seed for noise trials, independent of the channel seed.
    pub noise_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            geometry: SystemGeometry::default(),
            fading: FadingModel::Rayleigh,
            m: 8,
            n: 6,
            prm: SensingParams::default(),
            algorithm: AlgorithmKind::Passive,
            channel_seed: 1,
            noise_seed: 2,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.prm.validate()?;
        if self.m < 1 || self.n < 1 {
            return Err(Error::Config(format!(
                "scenario needs m >= 1 and n >= 1, got m={} n={}",
                self.m, self.n
            )));
        }
        Ok(())
    }

    /// Channel draw for one realization index.
    pub fn sample(&self, realization: u64) -> Result<ChannelRealization> {
        sample_channels(
            &self.geometry,
            self.fading,
            self.m,
            self.n,
            seeds::derive(self.channel_seed, &[realization]),
        )
    }

    /// Runs the configured design algorithm on one realization.
    pub fn solve(&self, ch: &ChannelRealization) -> Result<SensingSolution> {
        match self.algorithm {
            AlgorithmKind::NoRis => solve_no_ris(ch, &self.prm),
            AlgorithmKind::Passive => solve_passive(ch, &self.prm),
            AlgorithmKind::ActiveOneStage => one_stage_solve(ch, &self.prm),
            AlgorithmKind::ActiveTwoStage => two_stage_solve(ch, &self.prm),
        }
    }
}

/// Trial frequencies and sample moments of the test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub trials: u64,
    /// Fraction of idle-transmitter trials declared active.
    pub pf: f64,
    /// Fraction of live-transmitter trials declared active.
    pub pd: f64,
    /// Binomial standard error `sqrt(pf (1 - pf) / trials)`.
    pub stderr_pf: f64,
    pub stderr_pd: f64,
    /// Sample mean of the statistic over idle trials.
    pub t_mean_h0: f64,
    /// Unbiased sample variance over idle trials.
    pub t_var_h0: f64,
    pub t_mean_h1: f64,
    pub t_var_h1: f64,
}

/// Simulates `trials` sensing windows under each hypothesis and runs the
/// designed detector on every one.
///
/// Each window draws `I` fresh combiner-output samples: noise only when the
/// transmitter is idle; signal, receiver noise, and (for an amplifying
/// surface) the surface's own amplified noise when it is live. The stream is
/// a pure function of `sc.noise_seed`.
pub fn run_monte_carlo(
    sc: &Scenario,
    ch: &ChannelRealization,
    sol: &SensingSolution,
    trials: u64,
) -> Result<MonteCarloEstimate> {
    if trials < 1 {
        return Err(Error::Domain("run_monte_carlo needs at least one trial".into()));
    }
    sc.validate()?;
    let samples = sc.prm.samples() as usize;

    let c = ch.combined(&sol.theta, &sol.rho);
    let a: Complex64 = sol.w.iter().zip(c.iter()).map(|(w, c)| w.conj() * c).sum();
    let leak2 = if sc.algorithm.injects_surface_noise() {
        let row = ch.amplified_noise_row(&sol.w, &sol.theta, &sol.rho);
        sc.prm.sigma2 * row.iter().map(|z| z.norm_sqr()).sum::<f64>()
    } else {
        0.0
    };

    // Combiner-output coefficients: the signal part keeps its complex
    // coupling, the two noise parts fold into one Gaussian of the summed
    // variance.
    let ca = a * (sc.prm.p / 2.0).sqrt();
    let cn1 = ((leak2 + sc.prm.delta2) / 2.0).sqrt();
    let cn0 = (sc.prm.delta2 / 2.0).sqrt();

    let mut rng = seeds::rng(sc.noise_seed);
    let mut block = vec![Complex64::new(0.0, 0.0); samples];
    let mut hits0 = 0u64;
    let mut hits1 = 0u64;
    let mut acc = MomentAccumulator::default();

    for _ in 0..trials {
        for y in block.iter_mut() {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            *y = Complex64::new(g1 * cn0, g2 * cn0);
        }
        let t0 = test_statistic(&block)?;
        if decide(t0, sol.epsilon) == Hypothesis::H1 {
            hits0 += 1;
        }

        for y in block.iter_mut() {
            let s1: f64 = rng.sample(StandardNormal);
            let s2: f64 = rng.sample(StandardNormal);
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            *y = Complex64::new(s1, s2) * ca + Complex64::new(g1 * cn1, g2 * cn1);
        }
        let t1 = test_statistic(&block)?;
        if decide(t1, sol.epsilon) == Hypothesis::H1 {
            hits1 += 1;
        }
        acc.push(t0, t1);
    }

    let pf = hits0 as f64 / trials as f64;
    let pd = hits1 as f64 / trials as f64;
    let (t_mean_h0, t_var_h0, t_mean_h1, t_var_h1) = acc.finish(trials);
    Ok(MonteCarloEstimate {
        trials,
        pf,
        pd,
        stderr_pf: (pf * (1.0 - pf) / trials as f64).sqrt(),
        stderr_pd: (pd * (1.0 - pd) / trials as f64).sqrt(),
        t_mean_h0,
        t_var_h0,
        t_mean_h1,
        t_var_h1,
    })
}

#[derive(Default)]
struct MomentAccumulator {
    s0: f64,
    q0: f64,
    s1: f64,
    q1: f64,
}

impl MomentAccumulator {
    fn push(&mut self, t0: f64, t1: f64) {
        self.s0 += t0;
        self.q0 += t0 * t0;
        self.s1 += t1;
        self.q1 += t1 * t1;
    }

    fn finish(&self, trials: u64) -> (f64, f64, f64, f64) {
        let k = trials as f64;
        let m0 = self.s0 / k;
        let m1 = self.s1 / k;
        let var = |q: f64, m: f64| {
            if trials > 1 {
                ((q - k * m * m) / (k - 1.0)).max(0.0)
            } else {
                0.0
            }
        };
        (m0, var(self.q0, m0), m1, var(self.q1, m1))
    }
}

/// Simulates the power the surface radiates while the transmitter is live,
/// with explicit per-element signal and noise draws, and returns the mean
/// per-window average and its standard error.
///
/// The mean should match `p ||diag(rho) h_r||^2 + sigma2 sum rho^2` (the
/// phase shifts drop out of the magnitude). Surfaces that inject no noise
/// are audited with the noise part absent.
pub fn surface_power_audit(
    sc: &Scenario,
    ch: &ChannelRealization,
    sol: &SensingSolution,
    trials: u64,
) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::Domain("surface_power_audit needs at least two trials".into()));
    }
    sc.validate()?;
    let samples = sc.prm.samples() as usize;
    let n = ch.n();
    let sqrt_p = sc.prm.p.sqrt();
    let half_sigma = (sc.prm.sigma2 / 2.0).sqrt();
    let noisy = sc.algorithm.injects_surface_noise();

    let mut rng = seeds::rng(seeds::derive(sc.noise_seed, &[u64::from(noisy)]));
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..trials {
        let mut window = 0.0;
        for _ in 0..samples {
            let s1: f64 = rng.sample(StandardNormal);
            let s2: f64 = rng.sample(StandardNormal);
            let s = Complex64::new(s1, s2) * std::f64::consts::FRAC_1_SQRT_2;
            for k in 0..n {
                let mut v = sqrt_p * s * ch.h_r[k];
                if noisy {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    v += Complex64::new(z1 * half_sigma, z2 * half_sigma);
                }
                window += sol.rho[k] * sol.rho[k] * v.norm_sqr();
            }
        }
        let avg = window / samples as f64;
        sum += avg;
        sumsq += avg * avg;
    }
    let k = trials as f64;
    let mean = sum / k;
    let var = ((sumsq - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok((mean, (var / k).sqrt()))
}
