//! Detection-target bisection for the amplifying surface.
//!
//! The largest achievable detection probability is found by bisecting on a
//! target t and asking at each probe whether some design meets it: false
//! alarm at its cap, unit-norm combiner, detection probability at least t,
//! and the power budget weighted by t. A probe first tries the incumbent
//! design outright, then alternates two small feasibility programs, one
//! over the lifted combiner with the reflection fixed and one over the
//! lifted reflection with the combiner fixed. Extracted candidates count
//! only if they satisfy the physical constraints, so every feasible
//! verdict carries a witness design and the returned target is achieved.
//!
//! Both programs round exactly. The mean energy is a quadratic form in the
//! combiner, so the top eigenvector of its coefficient matrix is the best
//! combiner outright. On the reflection side the magnitude profile of any
//! feasible lifted matrix, rephased along the signal vector, has at least
//! the matrix's energy and the same budget draw, so a feasible program
//! always yields a feasible design.

use num_complex::Complex64;

use super::subproblem::{ConvexSubproblem, SolveOptions, SolverStatus, WarmState};
use super::{finish_solution, one_stage_solve, principal_block_eigvec, ActiveInstance};
use crate::channel::ChannelRealization;
use crate::detector::{SensingParams, SensingSolution};
use crate::math::{hermitian_eig, q_inverse, CMat, CVec};
use crate::Result;

/// Bisection never evaluates the quantile at its endpoints.
const T_CLAMP: f64 = 1e-6;
const T_TOL: f64 = 1e-3;
const MAX_ROUNDS: usize = 20;
/// Slack for declaring the physical constraints satisfied.
const FEAS_SLACK: f64 = 1e-6;

/// Probe history of one bisection run.
#[derive(Debug, Clone, Default)]
pub struct BisectionTrace {
    /// Every probed target with its verdict, in order.
    pub probes: Vec<(f64, bool)>,
    /// Certified target and the tightest refuted one.
    pub bracket: (f64, f64),
}

#[derive(Clone)]
struct Candidate {
    w: CVec,
    phi: Vec<Complex64>,
}

pub fn two_stage_solve(ch: &ChannelRealization, prm: &SensingParams) -> Result<SensingSolution> {
    Ok(two_stage_solve_traced(ch, prm)?.0)
}

pub fn two_stage_solve_traced(
    ch: &ChannelRealization,
    prm: &SensingParams,
) -> Result<(SensingSolution, BisectionTrace)> {
    let inst = ActiveInstance::new(ch, prm)?;
    // The single-loop design seeds the incumbent; its detection probability
    // certifies every target below it without touching the solver, which
    // also pins this algorithm at or above the other one.
    let seed = one_stage_solve(ch, prm)?;
    let phi: Vec<Complex64> = seed
        .rho
        .iter()
        .zip(&seed.theta)
        .map(|(&r, &t)| Complex64::from_polar(r, t))
        .collect();
    let mut incumbent = Candidate { w: seed.w, phi };

    let mut trace = BisectionTrace::default();
    let mut warm_w: Option<WarmState> = None;
    let mut warm_v: Option<WarmState> = None;
    let clamp_hi = 1.0 - T_CLAMP;
    let mut warnings: Vec<String> = Vec::new();

    // Saturated budgets end at the ceiling immediately.
    if let Some(c) = probe(&inst, clamp_hi, &incumbent, &mut warm_w, &mut warm_v)? {
        trace.probes.push((clamp_hi, true));
        trace.bracket = (clamp_hi, clamp_hi);
        return wrap_up(&inst, c, trace, warnings);
    }
    trace.probes.push((clamp_hi, false));

    let seeded = inst.pd_from_u1(inst.u1(&incumbent.w, &incumbent.phi));
    let mut t_lo = seeded.clamp(T_CLAMP, clamp_hi - T_TOL);
    if !feasible_at(&inst, &incumbent.w, &incumbent.phi, t_lo) {
        // The seed itself certifies nothing here; fall back to the floor.
        t_lo = T_CLAMP;
        match probe(&inst, t_lo, &incumbent, &mut warm_w, &mut warm_v)? {
            Some(c) => {
                trace.probes.push((t_lo, true));
                incumbent = c;
            }
            None => {
                trace.probes.push((t_lo, false));
                trace.bracket = (t_lo, t_lo);
                warnings.push(
                    "no detection target above the quantile clamp was certified feasible"
                        .into(),
                );
                return wrap_up(&inst, incumbent, trace, warnings);
            }
        }
    }
    let mut t_hi = clamp_hi;

    while t_hi - t_lo >= T_TOL {
        let mid = 0.5 * (t_lo + t_hi);
        match probe(&inst, mid, &incumbent, &mut warm_w, &mut warm_v)? {
            Some(c) => {
                incumbent = c;
                t_lo = mid;
                trace.probes.push((mid, true));
            }
            None => {
                t_hi = mid;
                trace.probes.push((mid, false));
            }
        }
    }
    trace.bracket = (t_lo, t_hi);
    wrap_up(&inst, incumbent, trace, warnings)
}

fn wrap_up(
    inst: &ActiveInstance,
    c: Candidate,
    trace: BisectionTrace,
    mut warnings: Vec<String>,
) -> Result<(SensingSolution, BisectionTrace)> {
    // Budget accounting with the achieved detection probability; the
    // bisection constrains the target-weighted draw, which is never larger.
    let pd = inst.pd_from_u1(inst.u1(&c.w, &c.phi));
    let drawn = pd * inst.relaxed_power(&c.phi);
    if drawn > inst.prm.p_ris_max * (1.0 + FEAS_SLACK) {
        warnings.push(format!(
            "amplification power at the achieved detection probability is {:.3e} W against a budget of {:.3e} W",
            drawn, inst.prm.p_ris_max
        ));
    }
    let sol = finish_solution(inst, c.w, &c.phi, warnings)?;
    Ok((sol, trace))
}

/// All physical constraints at target `t`: the false-alarm cap and the
/// unit-norm combiner hold by construction, so detection probability and
/// the target-weighted budget decide.
fn feasible_at(inst: &ActiveInstance, w: &CVec, phi: &[Complex64], t: f64) -> bool {
    let pd = inst.pd_from_u1(inst.u1(w, phi));
    if pd + FEAS_SLACK < t {
        return false;
    }
    budget_ok(inst, phi, t)
}

fn budget_ok(inst: &ActiveInstance, phi: &[Complex64], t: f64) -> bool {
    t * inst.relaxed_power(phi) <= inst.prm.p_ris_max * (1.0 + FEAS_SLACK)
}

/// One probe: incumbent fast path, then alternating feasibility programs.
/// Returns a witness design or nothing. A refusal of the reflection
/// program is decisive for the current combiner, so the round ends there.
fn probe(
    inst: &ActiveInstance,
    t: f64,
    incumbent: &Candidate,
    warm_w: &mut Option<WarmState>,
    warm_v: &mut Option<WarmState>,
) -> Result<Option<Candidate>> {
    if feasible_at(inst, &incumbent.w, &incumbent.phi, t) {
        return Ok(Some(incumbent.clone()));
    }
    let s = q_inverse(t)? + inst.sqrt_i;
    if s <= 0.0 {
        // Targets beyond the detector's saturation point: the required
        // mean energy would have to be negative.
        return Ok(None);
    }
    let mut w = incumbent.w.clone();
    let mut phi = incumbent.phi.clone();
    // The incumbent may overdraw this target's weighted budget; progress
    // only counts once the working pattern fits it.
    let mut fits = budget_ok(inst, &phi, t);
    let mut best = if fits {
        inst.u1(&w, &phi)
    } else {
        f64::NEG_INFINITY
    };

    for _ in 0..MAX_ROUNDS {
        for cand in combiner_candidates(inst, &phi, s, warm_w)? {
            if inst.u1(&cand, &phi) > inst.u1(&w, &phi) {
                w = cand;
            }
        }
        if fits && feasible_at(inst, &w, &phi, t) {
            return Ok(Some(Candidate { w, phi }));
        }

        match reflection_candidates(inst, &w, t, s, warm_v)? {
            None => return Ok(None),
            Some(cands) => {
                for cand in cands {
                    if !budget_ok(inst, &cand, t) {
                        continue;
                    }
                    if !fits || inst.u1(&w, &cand) > inst.u1(&w, &phi) {
                        phi = cand;
                        fits = true;
                    }
                }
            }
        }
        if !fits {
            return Ok(None);
        }
        if feasible_at(inst, &w, &phi, t) {
            return Ok(Some(Candidate { w, phi }));
        }

        let now = inst.u1(&w, &phi);
        if now <= best * (1.0 + 1e-12) {
            break;
        }
        best = now;
    }
    Ok(None)
}

/// Coefficient of the linear detection constraint on the lifted combiner:
/// the mean-energy matrix `(p c c^H + sigma2 G G^H) / delta2` for fixed
/// reflection gains, where `c` is the effective channel and `G = H diag(phi)`.
pub(crate) fn combiner_energy_matrix(inst: &ActiveInstance, phi: &[Complex64]) -> CMat {
    let m = inst.ch.m();
    let n = inst.ch.n();
    let mut c = inst.ch.h_d.clone();
    for nn in 0..n {
        let gain = phi[nn] * inst.ch.h_r[nn];
        for mm in 0..m {
            c[mm] += inst.ch.h_mat[[mm, nn]] * gain;
        }
    }
    CMat::from_shape_fn((m, m), |(i, j)| {
        let sig = inst.prm.p * c[i] * c[j].conj();
        let leak: Complex64 = (0..n)
            .map(|nn| {
                inst.ch.h_mat[[i, nn]]
                    * inst.ch.h_mat[[j, nn]].conj()
                    * (inst.prm.sigma2 * phi[nn].norm_sqr())
            })
            .sum();
        (sig + leak) / inst.prm.delta2
    })
}

/// Candidate combiners for fixed gains: the top eigenvector of the energy
/// matrix, which maximizes the quadratic form over the unit sphere, plus
/// whatever the lifted feasibility program extracts.
fn combiner_candidates(
    inst: &ActiveInstance,
    phi: &[Complex64],
    s: f64,
    warm: &mut Option<WarmState>,
) -> Result<Vec<CVec>> {
    let m = inst.ch.m();
    let a = combiner_energy_matrix(inst, phi);
    let mut cands = Vec::new();
    if let Ok((_, vecs)) = hermitian_eig(&a) {
        cands.push(vecs.column(m - 1).to_owned());
    }

    let mut p = ConvexSubproblem::new();
    let wt = p.add_var(m + 1)?;
    p.pin(wt, m, m, Complex64::new(1.0, 0.0))?;
    let idxs: Vec<usize> = (0..m).collect();
    p.trace_eq(wt, &idxs, 1.0)?;

    let ratio = (q_inverse(inst.prm.pf_max)? + inst.sqrt_i) / s;
    // Mean energy at least `ratio` in noise-floor units, as a halfspace.
    let mut neg = CMat::zeros((m + 1, m + 1));
    for i in 0..m {
        for j in 0..m {
            neg[[i, j]] = -a[[i, j]];
        }
    }
    p.halfspace(vec![(wt, neg)], 1.0 - ratio)?;

    let (xs, report, warm_next) = p.solve(SolveOptions::default(), warm.as_ref())?;
    *warm = Some(warm_next);
    if report.status != SolverStatus::Infeasible {
        if let Ok(v) = principal_block_eigvec(&xs[0], m) {
            cands.push(v);
        }
        let mut border = CVec::from_shape_fn(m, |i| xs[0][[i, m]]);
        let norm = border.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-9 {
            border.mapv_inplace(|z| z / norm);
            cands.push(border);
        }
    }
    Ok(cands)
}

/// Homogenized signal response for a fixed combiner, in noise-floor units:
/// reflected entries in reference-gain units, then the direct path.
pub(crate) fn signal_vector(inst: &ActiveInstance, w: &CVec) -> CVec {
    let n = inst.ch.n();
    let rows = inst.rows_through(w);
    let mut direct = Complex64::new(0.0, 0.0);
    for mm in 0..inst.ch.m() {
        direct += w[mm].conj() * inst.ch.h_d[mm];
    }
    let sp = (inst.prm.p / inst.prm.delta2).sqrt();
    CVec::from_shape_fn(n + 1, |k| {
        if k < n {
            (rows[k] * inst.ch.h_r[k]).conj() * sp * inst.rho_ref
        } else {
            direct.conj() * sp
        }
    })
}

/// Data of the linear detection constraint on the lifted reflection: a
/// PSD matrix over the homogenized gain vector whose quadratic form plus
/// one is the mean energy in noise-floor units.
pub(crate) fn reflection_energy_matrix(inst: &ActiveInstance, w: &CVec) -> CMat {
    let n = inst.ch.n();
    let rows = inst.rows_through(w);
    let h1 = signal_vector(inst, w);
    let sz2 = inst.prm.sigma2 / inst.prm.delta2 * inst.rho_ref * inst.rho_ref;
    CMat::from_shape_fn((n + 1, n + 1), |(i, j)| {
        let mut v = h1[i] * h1[j].conj();
        if i == j && i < n {
            v += rows[i].norm_sqr() * sz2;
        }
        v
    })
}

/// Uniform rescale onto the target-weighted budget boundary.
fn scaled_to_cap(inst: &ActiveInstance, t: f64, phi: &[Complex64]) -> Option<Vec<Complex64>> {
    let drawn = t * inst.relaxed_power(phi);
    if drawn <= 0.0 {
        return None;
    }
    let k = (inst.prm.p_ris_max / drawn).sqrt();
    Some(phi.iter().map(|v| v * k).collect())
}

/// Solves the reflection feasibility program for a fixed combiner at
/// target `t`. Returns candidate physical gain vectors; infeasibility here
/// is decisive for this combiner because the program relaxes the physical
/// constraint set.
fn reflection_candidates(
    inst: &ActiveInstance,
    w: &CVec,
    t: f64,
    s: f64,
    warm: &mut Option<WarmState>,
) -> Result<Option<Vec<Vec<Complex64>>>> {
    let n = inst.ch.n();
    let mut p = ConvexSubproblem::new();
    let vt = p.add_var(n + 2)?;
    p.pin(vt, n, n, Complex64::new(1.0, 0.0))?;
    p.pin(vt, n + 1, n + 1, Complex64::new(1.0, 0.0))?;
    p.pin(vt, n, n + 1, Complex64::new(1.0, 0.0))?;

    let a = reflection_energy_matrix(inst, w);
    let ratio = (q_inverse(inst.prm.pf_max)? + inst.sqrt_i) / s;
    let mut neg = CMat::zeros((n + 2, n + 2));
    for i in 0..=n {
        for j in 0..=n {
            neg[[i, j]] = -a[[i, j]];
        }
    }
    p.halfspace(vec![(vt, neg)], 1.0 - ratio)?;

    // Target-weighted budget on the element energies.
    let mut pow = CMat::zeros((n + 2, n + 2));
    for k in 0..n {
        pow[[k, k]] = Complex64::new(t * inst.c_hat[k], 0.0);
    }
    p.halfspace(vec![(vt, pow)], 1.0)?;

    let (xs, report, warm_next) = p.solve(SolveOptions::default(), warm.as_ref())?;
    *warm = Some(warm_next);
    if report.status == SolverStatus::Infeasible {
        return Ok(None);
    }

    let mut raw: Vec<Vec<Complex64>> = Vec::new();
    // Magnitudes from the diagonal, rephased along the signal vector: of
    // all patterns with this magnitude profile it has the largest mean
    // energy, and the budget draw depends on the magnitudes alone, so a
    // feasible lifted point rounds to a feasible design.
    let h1 = signal_vector(inst, w);
    let anchor = if h1[n].norm() > 0.0 { h1[n].arg() } else { 0.0 };
    raw.push(
        (0..n)
            .map(|k| {
                let mag = xs[0][[k, k]].re.max(0.0).sqrt();
                Complex64::from_polar(mag * inst.rho_ref, h1[k].arg() - anchor)
            })
            .collect(),
    );
    raw.push((0..n).map(|k| xs[0][[k, n + 1]] * inst.rho_ref).collect());
    if let Ok(top) = principal_block_eigvec(&xs[0], n + 1) {
        if top[n].norm() > 1e-9 {
            raw.push((0..n).map(|k| top[k] / top[n] * inst.rho_ref).collect());
        }
    }
    let mut cands = Vec::new();
    for c in raw {
        if let Some(capped) = scaled_to_cap(inst, t, &c) {
            cands.push(capped);
        }
        cands.push(c);
    }
    Ok(Some(cands))
}
