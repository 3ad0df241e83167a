//! Energy detection at the secondary terminal.
//!
//! The terminal averages `I` received energy samples into the test statistic
//! `T = (1/I) sum |y(i)|^2` and compares it against a threshold. Under the
//! central limit theorem `T` is treated as Gaussian under both hypotheses,
//! which yields closed forms for the threshold, the false-alarm probability,
//! and the detection probability, for a passive surface (unit-modulus phase
//! shifts) and an active one (per-element amplification that also injects
//! amplified thermal noise into the link).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::math::{q_function, q_inverse, CVec};
use crate::{Error, Result};

/// Scenario-level sensing parameters. Powers are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingParams {
    /// Primary transmit power.
    pub p: f64,
    /// Noise power per receive antenna at the terminal.
    pub delta2: f64,
    /// Dynamic noise power per active-RIS element.
    pub sigma2: f64,
    /// Sensing duration, seconds.
    pub tau: f64,
    /// Sampling rate, hertz.
    pub fs: f64,
    /// False-alarm probability budget.
    pub pf_max: f64,
    /// Amplification power budget of the active surface.
    pub p_ris_max: f64,
    /// Prior probability that the transmitter is active.
    pub prob_h1: f64,
}

impl Default for SensingParams {
    /// Reference operating point: 20 dBm transmit power, -70 dBm noise at
    /// both the terminal and the surface, 1 ms sensing at 6 MHz (6000
    /// samples), a 0.1 false-alarm budget, a -10 dBm amplification budget,
    /// and an even transmit prior.
    fn default() -> Self {
        Self {
            p: 0.1,
            delta2: 1e-10,
            sigma2: 1e-10,
            tau: 1e-3,
            fs: 6e6,
            pf_max: 0.1,
            p_ris_max: 1e-4,
            prob_h1: 0.5,
        }
    }
}

impl SensingParams {
    /// Number of energy samples `I = round(tau * fs)`.
    pub fn samples(&self) -> u64 {
        (self.tau * self.fs).round() as u64
    }

    /// Checks the documented parameter ranges: positive powers where
    /// required, at least one sample, a false-alarm budget in (0, 0.5), and
    /// a prior in [0, 1].
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return fail(format!("transmit power must be >= 0, got {}", self.p));
        }
        if !(self.delta2 > 0.0 && self.delta2.is_finite()) {
            return fail(format!("noise power must be > 0, got {}", self.delta2));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return fail(format!("RIS noise power must be >= 0, got {}", self.sigma2));
        }
        if !(self.p_ris_max >= 0.0 && self.p_ris_max.is_finite()) {
            return fail(format!(
                "RIS power budget must be >= 0, got {}",
                self.p_ris_max
            ));
        }
        if self.samples() < 1 || !(self.tau > 0.0) || !(self.fs > 0.0) {
            return fail(format!(
                "tau * fs must round to at least one sample, got tau = {}, fs = {}",
                self.tau, self.fs
            ));
        }
        if !(self.pf_max > 0.0 && self.pf_max < 0.5) {
            return fail(format!(
                "false-alarm budget must lie in (0, 0.5), got {}",
                self.pf_max
            ));
        }
        if !(0.0..=1.0).contains(&self.prob_h1) {
            return fail(format!("prior must lie in [0, 1], got {}", self.prob_h1));
        }
        Ok(())
    }
}

/// Hypothesis decided by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Transmitter idle.
    H0,
    /// Transmitter active.
    H1,
}

/// First and second moments of the averaged-energy statistic under both
/// hypotheses, plus the derived signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    /// Mean of `T` under H0.
    pub u0: f64,
    /// Variance of `T` under H0 (`u0^2 / I` exactly).
    pub v0: f64,
    /// Mean of `T` under H1.
    pub u1: f64,
    /// Variance of `T` under H1.
    pub v1: f64,
    /// Signal-to-interference-plus-noise ratio at the combiner output.
    pub gamma: f64,
}

/// One solved sensing configuration: combiner, surface configuration,
/// threshold, and the resulting operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensingSolution {
    /// Unit-norm receive combiner, length `m`.
    pub w: CVec,
    /// Per-element phase shifts in [0, 2 pi), length `n`.
    pub theta: Vec<f64>,
    /// Per-element amplification gains (all ones for a passive surface,
    /// zeros when no surface is present), length `n`.
    pub rho: Vec<f64>,
    /// Detection threshold, watts.
    pub epsilon: f64,
    /// Output signal-to-interference-plus-noise ratio.
    pub gamma: f64,
    /// Analytic detection probability at the threshold.
    pub pd: f64,
    /// Analytic false-alarm probability at the threshold.
    pub pf: f64,
    /// Non-fatal solver observations (rank deficits, saturations, ...).
    pub warnings: Vec<String>,
}

/// Numerical floor/ceiling applied to reported probabilities so downstream
/// `Q^-1` and log transforms stay finite.
pub const PROB_CLAMP: f64 = 1e-16;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Averaged energy `T = (1/I) sum |y(i)|^2` of a sample block.
pub fn test_statistic(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("test_statistic needs at least one sample".into()));
    }
    Ok(samples.iter().map(|y| y.norm_sqr()).sum::<f64>() / samples.len() as f64)
}

/// Threshold comparison; the tie `T = epsilon` stays with H0.
pub fn decide(statistic: f64, epsilon: f64) -> Hypothesis {
    if statistic > epsilon {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    }
}

/// Smallest threshold meeting a false-alarm budget `pf`:
/// `epsilon = delta2 * (Q^-1(pf) / sqrt(I) + 1)`.
///
/// Accepts any `pf` in (0, 1); the scenario-level budget is stricter (see
/// [`SensingParams::validate`]).
pub fn design_threshold(prm: &SensingParams) -> Result<f64> {
    if !(prm.pf_max > 0.0 && prm.pf_max < 1.0) {
        return Err(Error::Domain(format!(
            "threshold design needs pf in (0, 1), got {}",
            prm.pf_max
        )));
    }
    if !(prm.delta2 > 0.0) {
        return Err(Error::Domain("threshold design needs delta2 > 0".into()));
    }
    let i = prm.samples();
    if i < 1 {
        return Err(Error::Domain("threshold design needs at least one sample".into()));
    }
    Ok(prm.delta2 * (q_inverse(prm.pf_max)? / (i as f64).sqrt() + 1.0))
}

/// False-alarm probability of threshold `epsilon`:
/// `Q((epsilon / delta2 - 1) * sqrt(I))`, clamped for reporting.
pub fn false_alarm_prob(epsilon: f64, prm: &SensingParams) -> Result<f64> {
    if !(prm.delta2 > 0.0) {
        return Err(Error::Domain("false_alarm_prob needs delta2 > 0".into()));
    }
    let i = prm.samples() as f64;
    Ok(clamp_prob(q_function(
        (epsilon / prm.delta2 - 1.0) * i.sqrt(),
    )))
}

/// Detection probability with a passive (or absent) surface at output SNR
/// `gamma`: `Q((epsilon/delta2 - gamma - 1) * sqrt(I) / (1 + gamma))`.
pub fn detection_prob_passive(gamma: f64, epsilon: f64, prm: &SensingParams) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be >= 0, got {gamma}")));
    }
    if !(prm.delta2 > 0.0) {
        return Err(Error::Domain("detection_prob needs delta2 > 0".into()));
    }
    let i = prm.samples() as f64;
    Ok(clamp_prob(q_function(
        (epsilon / prm.delta2 - gamma - 1.0) * i.sqrt() / (1.0 + gamma),
    )))
}

/// Detection probability with an active surface. The amplified surface noise
/// raises the effective noise floor at the combiner output:
/// `Q((epsilon / (leak + delta2) - gamma - 1) * sqrt(I) / (1 + gamma))` with
/// `leak = sigma2 * ||w^H H diag(rho e^{j theta})||^2`.
pub fn detection_prob_active(
    w: &CVec,
    theta: &[f64],
    rho: &[f64],
    ch: &ChannelRealization,
    epsilon: f64,
    prm: &SensingParams,
) -> Result<f64> {
    let stats = clt_moments_active(w, theta, rho, ch, prm)?;
    let i = prm.samples() as f64;
    // u1 = (gamma + 1) * noise floor, so the floor is u1 / (gamma + 1).
    let floor = stats.u1 / (stats.gamma + 1.0);
    Ok(clamp_prob(q_function(
        (epsilon / floor - stats.gamma - 1.0) * i.sqrt() / (1.0 + stats.gamma),
    )))
}

/// Moments of `T` for a passive surface with combiner `w` and phases
/// `theta`.
pub fn clt_moments_passive(
    w: &CVec,
    theta: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
) -> Result<DetectionStats> {
    let ones = vec![1.0; ch.n()];
    moments(w, theta, &ones, ch, prm, false)
}

/// Moments of `T` for an active surface with combiner `w`, phases `theta`,
/// and gains `rho`. The H1 variance is the full six-term expansion of
/// `E|y|^4 - (E|y|^2)^2` over the signal, surface-noise, and receiver-noise
/// powers.
pub fn clt_moments_active(
    w: &CVec,
    theta: &[f64],
    rho: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
) -> Result<DetectionStats> {
    moments(w, theta, rho, ch, prm, true)
}

fn moments(
    w: &CVec,
    theta: &[f64],
    rho: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
    active: bool,
) -> Result<DetectionStats> {
    if w.len() != ch.m() {
        return Err(Error::Domain(format!(
            "combiner length {} does not match {} antennas",
            w.len(),
            ch.m()
        )));
    }
    if theta.len() != ch.n() || rho.len() != ch.n() {
        return Err(Error::Domain(format!(
            "surface configuration needs {} phases and gains",
            ch.n()
        )));
    }
    if rho.iter().any(|&g| g < 0.0) {
        return Err(Error::Domain("gains must be non-negative".into()));
    }
    if !(prm.delta2 > 0.0) {
        return Err(Error::Domain("moments need delta2 > 0".into()));
    }
    let i = prm.samples() as f64;
    if i < 1.0 {
        return Err(Error::Domain("moments need at least one sample".into()));
    }

    let c = ch.combined(theta, rho);
    let mut wc = Complex64::new(0.0, 0.0);
    for k in 0..ch.m() {
        wc += w[k].conj() * c[k];
    }
    // Signal power, amplified-surface-noise power, receiver-noise power at
    // the combiner output.
    let sig = prm.p * wc.norm_sqr();
    let leak = if active {
        let row = ch.amplified_noise_row(w, theta, rho);
        prm.sigma2 * row.iter().map(|z| z.norm_sqr()).sum::<f64>()
    } else {
        0.0
    };
    let noise = prm.delta2;

    let u0 = noise;
    let v0 = noise * noise / i;
    let u1 = sig + leak + noise;
    // Six quadratic cross terms of (sig + leak + noise)^2, kept spelled out
    // to mirror the moment expansion term by term.
    let v1 = (sig * sig
        + leak * leak
        + noise * noise
        + 2.0 * sig * leak
        + 2.0 * sig * noise
        + 2.0 * leak * noise)
        / i;
    let gamma = sig / (leak + noise);
    Ok(DetectionStats {
        u0,
        v0,
        u1,
        v1,
        gamma,
    })
}
