//! Optimizers for surfaces whose elements amplify as well as phase-shift.
//!
//! Two algorithms attack the same design problem: choose a receive combiner
//! and per-element complex reflection gains that maximize detection
//! probability under the false-alarm cap and the surface power budget.
//! [`one_stage_solve`] lifts combiner and reflection into semidefinite
//! variables and ascends a penalized concave surrogate of the detection
//! objective. [`two_stage_solve`] bisects on a detection target and settles
//! each probe with alternating feasibility programs. Both lean on the
//! splitting solver in [`subproblem`].

mod one_stage;
pub mod subproblem;
mod two_stage;

pub use one_stage::{one_stage_solve, one_stage_solve_traced, ConvergenceTrace, IterateRecord};
pub use subproblem::{
    ConvexSubproblem, SolveOptions, SolverReport, SolverStatus, VarId, WarmState,
};
pub use two_stage::{two_stage_solve, two_stage_solve_traced, BisectionTrace};

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::channel::ChannelRealization;
use crate::detector::{self, SensingParams, SensingSolution};
use crate::math::{hermitian_eig, CMat, CVec, PowerValue};
use crate::{Error, Result};

/// Average power the surface radiates while amplifying, weighted by how
/// often it amplifies a live transmission:
/// `prob_h1 * pd * (p ||diag(rho e^{j theta}) h_r||^2 + sigma2 * sum rho^2)`.
pub fn amplification_power(
    theta: &[f64],
    rho: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
    pd: f64,
) -> Result<PowerValue> {
    if theta.len() != ch.n() || rho.len() != ch.n() {
        return Err(Error::Domain(format!(
            "surface configuration needs {} phases and gains",
            ch.n()
        )));
    }
    if !(0.0..=1.0).contains(&pd) {
        return Err(Error::Domain(format!("pd must lie in [0, 1], got {pd}")));
    }
    let mut reflected = 0.0;
    let mut injected = 0.0;
    for nn in 0..ch.n() {
        reflected += rho[nn] * rho[nn] * ch.h_r[nn].norm_sqr();
        injected += rho[nn] * rho[nn];
    }
    PowerValue::from_watts(prm.prob_h1 * pd * (prm.p * reflected + prm.sigma2 * injected))
}

/// Rayleigh-quotient sandwich on the budget-limited uniform scaling factor.
/// Raw values can exceed 1; the clamped pair caps them into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_clamped: f64,
    pub upper_clamped: f64,
}

/// Bounds from the diagonal quadratic form `x^H C x` with
/// `C = prob_h1 * (p diag(h_r)^H L^H L diag(h_r) + sigma2 L^H L)`: for any
/// unit-modulus phase profile the form lies in [N min c, N max c], so the
/// budget ratio lands in (P/(N max c), P/(N min c)). A zero smallest
/// diagonal makes the upper bound infinite.
pub fn pd_bounds_rayleigh(
    rho: &[f64],
    ch: &ChannelRealization,
    prm: &SensingParams,
) -> Result<PdBounds> {
    prm.validate()?;
    let n = ch.n();
    if rho.len() != n || n == 0 {
        return Err(Error::Domain(format!("expected {n} element gains")));
    }
    let diag = budget_diagonal(rho, ch, prm);
    let c_min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = diag.iter().cloned().fold(0.0f64, f64::max);
    let p = prm.p_ris_max;
    let lower = if c_max > 0.0 {
        p / (n as f64 * c_max)
    } else {
        f64::INFINITY
    };
    let upper = if c_min > 0.0 {
        p / (n as f64 * c_min)
    } else {
        f64::INFINITY
    };
    Ok(PdBounds {
        lower,
        upper,
        lower_clamped: lower.min(1.0),
        upper_clamped: upper.min(1.0),
    })
}

/// Diagonal of the power quadratic form: `prob_h1 (p |h_rn|^2 + sigma2) rho_n^2`.
pub(crate) fn budget_diagonal(rho: &[f64], ch: &ChannelRealization, prm: &SensingParams) -> Vec<f64> {
    (0..ch.n())
        .map(|nn| {
            prm.prob_h1 * (prm.p * ch.h_r[nn].norm_sqr() + prm.sigma2) * rho[nn] * rho[nn]
        })
        .collect()
}

/// Floor on the activity prior when it only scales the working units; a
/// zero prior would make the budget non-binding and the scaling infinite.
const PRIOR_FLOOR: f64 = 1e-9;

/// Channel, detector, and scaling data shared by both active algorithms.
/// Reflection gains are handled in units of `rho_ref`, the uniform
/// amplitude that saturates the relaxed power budget, so solver variables
/// stay near unit size regardless of the physical scales.
pub(crate) struct ActiveInstance<'a> {
    pub ch: &'a ChannelRealization,
    pub prm: &'a SensingParams,
    pub rho_ref: f64,
    /// Budget weights in normalized units; they sum to one.
    pub c_hat: Vec<f64>,
    pub epsilon: f64,
    pub sqrt_i: f64,
}

impl<'a> ActiveInstance<'a> {
    pub fn new(ch: &'a ChannelRealization, prm: &'a SensingParams) -> Result<Self> {
        prm.validate()?;
        if ch.m() == 0 || ch.n() == 0 {
            return Err(Error::DegenerateChannel(
                "active design needs at least one antenna and one element".into(),
            ));
        }
        if !(prm.p_ris_max > 0.0) {
            return Err(Error::Domain(
                "amplification budget must be positive".into(),
            ));
        }
        let n = ch.n() as f64;
        let mean_r = ch.h_r.iter().map(|h| h.norm_sqr()).sum::<f64>() / n;
        let denom = prm.p * mean_r + prm.sigma2;
        if !(denom > 0.0) {
            return Err(Error::DegenerateChannel(
                "surface neither reflects signal nor injects noise".into(),
            ));
        }
        let prior = prm.prob_h1.max(PRIOR_FLOOR);
        let rho_ref = (prm.p_ris_max / (prior * n * denom)).sqrt();
        let c_hat = ch
            .h_r
            .iter()
            .map(|h| (prm.p * h.norm_sqr() + prm.sigma2) / (n * denom))
            .collect();
        Ok(Self {
            ch,
            prm,
            rho_ref,
            c_hat,
            epsilon: detector::design_threshold(prm)?,
            sqrt_i: (prm.samples() as f64).sqrt(),
        })
    }

    /// The row vector `w^H H` as per-element entries.
    pub fn rows_through(&self, w: &CVec) -> Vec<Complex64> {
        (0..self.ch.n())
            .map(|nn| {
                (0..self.ch.m())
                    .map(|mm| w[mm].conj() * self.ch.h_mat[[mm, nn]])
                    .sum()
            })
            .collect()
    }

    /// Signal power `p |w^H (h_d + H diag(phi) h_r)|^2` and amplified-noise
    /// leak `sigma2 ||w^H H diag(phi)||^2` for physical gains `phi`.
    pub fn signal_and_leak(&self, w: &CVec, phi: &[Complex64]) -> (f64, f64) {
        let rows = self.rows_through(w);
        let mut a = Complex64::new(0.0, 0.0);
        for mm in 0..self.ch.m() {
            a += w[mm].conj() * self.ch.h_d[mm];
        }
        let mut leak = 0.0;
        for nn in 0..self.ch.n() {
            a += rows[nn] * phi[nn] * self.ch.h_r[nn];
            leak += (rows[nn] * phi[nn]).norm_sqr();
        }
        (self.prm.p * a.norm_sqr(), self.prm.sigma2 * leak)
    }

    /// Mean received energy under a live transmission; detection
    /// probability is monotone in it once the threshold is fixed.
    pub fn u1(&self, w: &CVec, phi: &[Complex64]) -> f64 {
        let (sig, leak) = self.signal_and_leak(w, phi);
        sig + leak + self.prm.delta2
    }

    pub fn pd_from_u1(&self, u1: f64) -> f64 {
        crate::math::q_function((self.epsilon - u1) * self.sqrt_i / u1)
    }

    pub fn gamma(&self, w: &CVec, phi: &[Complex64]) -> f64 {
        let (sig, leak) = self.signal_and_leak(w, phi);
        sig / (leak + self.prm.delta2)
    }

    /// Budget draw of the relaxed power constraint (detection weight
    /// dropped): `prob_h1 (p ||diag(phi) h_r||^2 + sigma2 ||phi||^2)`.
    pub fn relaxed_power(&self, phi: &[Complex64]) -> f64 {
        let mut reflected = 0.0;
        let mut injected = 0.0;
        for nn in 0..self.ch.n() {
            reflected += phi[nn].norm_sqr() * self.ch.h_r[nn].norm_sqr();
            injected += phi[nn].norm_sqr();
        }
        self.prm.prob_h1 * (self.prm.p * reflected + self.prm.sigma2 * injected)
    }

    /// Scales `phi` down onto the relaxed budget if it overshoots.
    pub fn cap_to_budget(&self, phi: &mut [Complex64]) {
        let drawn = self.relaxed_power(phi);
        if drawn > self.prm.p_ris_max && drawn > 0.0 {
            let s = (self.prm.p_ris_max / drawn).sqrt();
            for v in phi.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Wraps up an active design into the common solution record.
pub(crate) fn finish_solution(
    inst: &ActiveInstance,
    w: CVec,
    phi: &[Complex64],
    mut warnings: Vec<String>,
) -> Result<SensingSolution> {
    let theta: Vec<f64> = phi.iter().map(|v| v.arg().rem_euclid(TAU)).collect();
    let rho: Vec<f64> = phi.iter().map(|v| v.norm()).collect();
    let below = rho.iter().filter(|&&r| r <= 1.0).count();
    if below > 0 {
        warnings.push(format!(
            "{below} element gain(s) at or below unity: the surface attenuates there"
        ));
    }
    let gamma = inst.gamma(&w, phi);
    let pd = detector::detection_prob_active(&w, &theta, &rho, inst.ch, inst.epsilon, inst.prm)?;
    let pf = detector::false_alarm_prob(inst.epsilon, inst.prm)?;
    Ok(SensingSolution {
        w,
        theta,
        rho,
        epsilon: inst.epsilon,
        gamma,
        pd,
        pf,
        warnings,
    })
}

/// Unit-norm eigenvector of the top-left `dim` x `dim` block's largest
/// eigenvalue.
pub(crate) fn principal_block_eigvec(x: &CMat, dim: usize) -> Result<CVec> {
    let block = CMat::from_shape_fn((dim, dim), |(i, j)| x[[i, j]]);
    let (evals, basis) = hermitian_eig(&crate::math::hermitian_part(&block))?;
    let top = dim - 1;
    if !(evals[top] > 0.0) {
        return Err(Error::Solver("solution block collapsed to zero".into()));
    }
    let mut v = CVec::from_shape_fn(dim, |i| basis[[i, top]]);
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Solver("solution block collapsed to zero".into()));
    }
    v.mapv_inplace(|z| z / norm);
    Ok(v)
}

/// Relative trace-minus-top-eigenvalue gap of the top-left block; zero for
/// an exact rank-one matrix.
pub(crate) fn rank_one_deficit(x: &CMat, dim: usize) -> Result<f64> {
    let block = CMat::from_shape_fn((dim, dim), |(i, j)| x[[i, j]]);
    let (evals, _) = hermitian_eig(&crate::math::hermitian_part(&block))?;
    let tr: f64 = (0..dim).map(|i| block[[i, i]].re).sum();
    let top = evals[dim - 1];
    Ok(((tr - top) / tr.abs().max(f64::MIN_POSITIVE)).max(0.0))
}
