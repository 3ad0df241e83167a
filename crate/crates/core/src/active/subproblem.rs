//! Dense solver for the small concave semidefinite subproblems generated by
//! the active-surface algorithms.
//!
//! A problem is a set of Hermitian matrix variables with entry pins, entry
//! ties, trace equalities, linear inequalities, PSD cone membership, and a
//! concave objective built from linear terms, negated squared congruence
//! norms, and one joint concave quadratic over selected diagonal entries.
//! The solver is consensus operator splitting: each constraint family
//! projects onto its set, the objective enters through its exact proximal
//! map, and averaging enforces agreement. Every matrix here is tiny (at
//! most about 17 x 17), so eigendecomposition-based steps are cheap.

use num_complex::Complex64;

use crate::math::{hermitian_eig, hermitian_part, is_hermitian, CMat};
use crate::{Error, Result};

/// Handle to a declared matrix variable of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
struct Pin {
    var: usize,
    row: usize,
    col: usize,
    value: Complex64,
}

#[derive(Debug, Clone)]
struct Tie {
    a: (usize, usize, usize),
    b: (usize, usize, usize),
}

#[derive(Debug, Clone)]
struct TraceEq {
    var: usize,
    idxs: Vec<usize>,
    rhs: f64,
}

#[derive(Debug, Clone)]
struct Halfspace {
    terms: Vec<(usize, CMat)>,
    bound: f64,
    norm2: f64,
}

#[derive(Debug, Clone)]
struct Congruence {
    alpha: f64,
    basis: CMat,
    evals: Vec<f64>,
}

#[derive(Debug, Clone)]
struct QuadGroup {
    entries: Vec<(usize, usize)>,
    k: CMat,
    basis: CMat,
    evals: Vec<f64>,
}

/// Termination verdict of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    /// Fixed-point residuals and constraint violation below tolerance.
    Optimal,
    /// The violation-minimization phase bottomed out above tolerance: the
    /// constraint set is (numerically) empty.
    Infeasible,
    /// Iteration budget exhausted without a verdict.
    IterationCap,
}

/// Outcome summary of one solve.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolverStatus,
    /// Objective value at the returned point (0 for pure feasibility).
    pub objective: f64,
    /// Largest scaled constraint violation at the returned point.
    pub violation: f64,
    pub iterations: usize,
}

/// Consensus state carried between solves of structurally identical
/// problems (same variable dimensions and constraint-block layout).
#[derive(Debug, Clone)]
pub struct WarmState {
    z: Vec<CMat>,
    duals: Vec<Vec<CMat>>,
    rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative fixed-point residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

const RELAXATION: f64 = 1.6;
const RHO_CHECK_EVERY: usize = 25;
const RHO_BALANCE: f64 = 10.0;
const STALL_CHECKS: usize = 12;
const DIVERGENCE_NORM: f64 = 1e9;

/// One assembled subproblem. Build with the `add_*` methods, then call
/// [`ConvexSubproblem::solve`].
#[derive(Debug, Clone, Default)]
pub struct ConvexSubproblem {
    dims: Vec<usize>,
    pins: Vec<Pin>,
    ties: Vec<Tie>,
    traces: Vec<TraceEq>,
    halfspaces: Vec<Halfspace>,
    linear: Vec<Option<CMat>>,
    congruences: Vec<Option<Congruence>>,
    group: Option<QuadGroup>,
    claimed: Vec<(usize, usize, usize)>,
}

impl ConvexSubproblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a Hermitian `dim` x `dim` variable.
    pub fn add_var(&mut self, dim: usize) -> Result<VarId> {
        if dim == 0 {
            return Err(Error::Construction("variable dimension must be >= 1".into()));
        }
        self.dims.push(dim);
        self.linear.push(None);
        self.congruences.push(None);
        Ok(VarId(self.dims.len() - 1))
    }

    fn check_var(&self, v: VarId) -> Result<usize> {
        if v.0 >= self.dims.len() {
            return Err(Error::Construction(format!("undeclared variable {}", v.0)));
        }
        Ok(v.0)
    }

    fn check_entry(&self, v: usize, row: usize, col: usize) -> Result<()> {
        let d = self.dims[v];
        if row >= d || col >= d {
            return Err(Error::Construction(format!(
                "entry ({row}, {col}) outside {d} x {d} variable"
            )));
        }
        Ok(())
    }

    /// Claims an entry for the affine projection; the structured affine
    /// constraints must touch disjoint entries so their joint projection is
    /// exact.
    fn claim(&mut self, v: usize, row: usize, col: usize) -> Result<()> {
        let key = (v, row.min(col), row.max(col));
        if self.claimed.contains(&key) {
            return Err(Error::Construction(format!(
                "entry ({}, {}) of variable {v} is already constrained",
                key.1, key.2
            )));
        }
        self.claimed.push(key);
        Ok(())
    }

    /// Fixes one entry: `X[row, col] = value` (and the Hermitian mirror).
    pub fn pin(&mut self, v: VarId, row: usize, col: usize, value: Complex64) -> Result<()> {
        let v = self.check_var(v)?;
        self.check_entry(v, row, col)?;
        if row == col && value.im.abs() > 1e-12 * (1.0 + value.re.abs()) {
            return Err(Error::Construction(format!(
                "diagonal pin must be real, got {value}"
            )));
        }
        self.claim(v, row, col)?;
        self.pins.push(Pin { var: v, row, col, value });
        Ok(())
    }

    /// Requires `X_a[a_row, a_col] = X_b[b_row, b_col]`.
    pub fn tie(
        &mut self,
        a: VarId,
        (a_row, a_col): (usize, usize),
        b: VarId,
        (b_row, b_col): (usize, usize),
    ) -> Result<()> {
        let (a, b) = (self.check_var(a)?, self.check_var(b)?);
        self.check_entry(a, a_row, a_col)?;
        self.check_entry(b, b_row, b_col)?;
        self.claim(a, a_row, a_col)?;
        self.claim(b, b_row, b_col)?;
        self.ties.push(Tie {
            a: (a, a_row, a_col),
            b: (b, b_row, b_col),
        });
        Ok(())
    }

    /// Requires the sum of the listed diagonal entries to equal `rhs`.
    pub fn trace_eq(&mut self, v: VarId, idxs: &[usize], rhs: f64) -> Result<()> {
        let v = self.check_var(v)?;
        if idxs.is_empty() {
            return Err(Error::Construction("trace constraint needs indices".into()));
        }
        for &k in idxs {
            self.check_entry(v, k, k)?;
            self.claim(v, k, k)?;
        }
        self.traces.push(TraceEq {
            var: v,
            idxs: idxs.to_vec(),
            rhs,
        });
        Ok(())
    }

    /// Adds the inequality `sum_i Re<A_i, X_{v_i}> <= bound`. Coefficient
    /// matrices must be Hermitian.
    pub fn halfspace(&mut self, terms: Vec<(VarId, CMat)>, bound: f64) -> Result<()> {
        if terms.is_empty() {
            return Err(Error::Construction("halfspace needs at least one term".into()));
        }
        let mut resolved = Vec::with_capacity(terms.len());
        let mut norm2 = 0.0;
        for (v, a) in terms {
            let v = self.check_var(v)?;
            if a.nrows() != self.dims[v] || a.ncols() != self.dims[v] {
                return Err(Error::Construction(format!(
                    "halfspace coefficient is {} x {}, variable is {} x {}",
                    a.nrows(),
                    a.ncols(),
                    self.dims[v],
                    self.dims[v]
                )));
            }
            if !is_hermitian(&a, 1e-10) {
                return Err(Error::Construction(
                    "halfspace coefficient must be Hermitian".into(),
                ));
            }
            norm2 += a.iter().map(|z| z.norm_sqr()).sum::<f64>();
            resolved.push((v, a));
        }
        if !(norm2 > 0.0) {
            return Err(Error::Construction("halfspace coefficient is zero".into()));
        }
        self.halfspaces.push(Halfspace {
            terms: resolved,
            bound,
            norm2,
        });
        Ok(())
    }

    /// Adds `Re<C, X_v>` to the objective. Repeated calls accumulate.
    pub fn add_linear(&mut self, v: VarId, c: &CMat) -> Result<()> {
        let v = self.check_var(v)?;
        if c.nrows() != self.dims[v] || c.ncols() != self.dims[v] {
            return Err(Error::Construction("linear coefficient has wrong shape".into()));
        }
        if !is_hermitian(c, 1e-10) {
            return Err(Error::Construction(
                "linear coefficient must be Hermitian".into(),
            ));
        }
        match &mut self.linear[v] {
            Some(acc) => *acc = &*acc + c,
            slot => *slot = Some(c.clone()),
        }
        Ok(())
    }

    /// Adds `-(alpha/2) * ||S X_v S^H||_F^2` to the objective. At most one
    /// congruence term per variable.
    pub fn add_quad_congruence(&mut self, v: VarId, s: &CMat, alpha: f64) -> Result<()> {
        let v = self.check_var(v)?;
        if s.ncols() != self.dims[v] {
            return Err(Error::Construction(format!(
                "congruence map has {} columns, variable is {} x {}",
                s.ncols(),
                self.dims[v],
                self.dims[v]
            )));
        }
        if !(alpha > 0.0) {
            return Err(Error::Construction("congruence weight must be > 0".into()));
        }
        if self.congruences[v].is_some() {
            return Err(Error::Construction(
                "variable already has a congruence term".into(),
            ));
        }
        if let Some(g) = &self.group {
            if g.entries.iter().any(|&(gv, _)| gv == v) {
                return Err(Error::Construction(
                    "variable participates in the diagonal quadratic group".into(),
                ));
            }
        }
        // B = S^H S drives the proximal map; diagonalize it once.
        let d = self.dims[v];
        let mut b = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..s.nrows() {
                    acc += s[[k, i]].conj() * s[[k, j]];
                }
                b[[i, j]] = acc;
            }
        }
        let (evals, basis) = hermitian_eig(&hermitian_part(&b))?;
        self.congruences[v] = Some(Congruence { alpha, basis, evals });
        Ok(())
    }

    /// Adds `-(1/2) * psi^T K psi` where `psi` collects the listed diagonal
    /// entries. `K` must be Hermitian PSD with real entries. One group per
    /// problem.
    pub fn add_quad_group(&mut self, entries: &[(VarId, usize)], k: &CMat) -> Result<()> {
        if self.group.is_some() {
            return Err(Error::Construction("problem already has a quadratic group".into()));
        }
        if entries.is_empty() || k.nrows() != entries.len() || k.ncols() != entries.len() {
            return Err(Error::Construction(
                "group coupling matrix must match the entry count".into(),
            ));
        }
        if !is_hermitian(k, 1e-10) || k.iter().any(|z| z.im.abs() > 1e-10) {
            return Err(Error::Construction(
                "group coupling must be real symmetric".into(),
            ));
        }
        let mut resolved = Vec::with_capacity(entries.len());
        for &(v, idx) in entries {
            let v = self.check_var(v)?;
            self.check_entry(v, idx, idx)?;
            if self.congruences[v].is_some() {
                return Err(Error::Construction(
                    "variable already has a congruence term".into(),
                ));
            }
            if resolved.contains(&(v, idx)) {
                return Err(Error::Construction("duplicate group entry".into()));
            }
            resolved.push((v, idx));
        }
        let (evals, basis) = hermitian_eig(&hermitian_part(k))?;
        if evals.iter().any(|&l| l < -1e-9 * evals.last().copied().unwrap_or(0.0).max(1.0)) {
            return Err(Error::Construction(
                "group coupling must be positive semidefinite".into(),
            ));
        }
        self.group = Some(QuadGroup {
            entries: resolved,
            k: k.clone(),
            basis,
            evals,
        });
        Ok(())
    }

    fn has_objective(&self) -> bool {
        self.linear.iter().any(Option::is_some)
            || self.congruences.iter().any(Option::is_some)
            || self.group.is_some()
    }

    fn has_affine(&self) -> bool {
        !(self.pins.is_empty() && self.ties.is_empty() && self.traces.is_empty())
    }

    /// Objective value at a point.
    pub fn objective_value(&self, xs: &[CMat]) -> f64 {
        let mut f = 0.0;
        for (v, c) in self.linear.iter().enumerate() {
            if let Some(c) = c {
                f += re_inner(c, &xs[v]);
            }
        }
        for (v, cong) in self.congruences.iter().enumerate() {
            if let Some(cg) = cong {
                // ||S X S^H||^2 = sum_ij d_i d_j |(U^H X U)_ij|^2.
                let xt = congruence_transform(&cg.basis, &xs[v]);
                let mut s = 0.0;
                for i in 0..xt.nrows() {
                    for j in 0..xt.ncols() {
                        s += cg.evals[i] * cg.evals[j] * xt[[i, j]].norm_sqr();
                    }
                }
                f -= 0.5 * cg.alpha * s;
            }
        }
        if let Some(g) = &self.group {
            let psi: Vec<f64> = g.entries.iter().map(|&(v, i)| xs[v][[i, i]].re).collect();
            let mut q = 0.0;
            for i in 0..psi.len() {
                for j in 0..psi.len() {
                    q += psi[i] * g.k[[i, j]].re * psi[j];
                }
            }
            f -= 0.5 * q;
        }
        f
    }

    /// Largest scaled violation over all constraint families at a point.
    pub fn max_violation(&self, xs: &[CMat]) -> f64 {
        let mut worst = 0.0f64;
        for x in xs {
            if let Ok((evals, _)) = hermitian_eig(&hermitian_part(x)) {
                let scale = 1.0 + frob(x);
                worst = worst.max((-evals[0]).max(0.0) / scale);
            }
        }
        for p in &self.pins {
            let d = (xs[p.var][[p.row, p.col]] - p.value).norm();
            worst = worst.max(d / (1.0 + p.value.norm()));
        }
        for t in &self.ties {
            let a = xs[t.a.0][[t.a.1, t.a.2]];
            let b = xs[t.b.0][[t.b.1, t.b.2]];
            worst = worst.max((a - b).norm() / (1.0 + a.norm().max(b.norm())));
        }
        for t in &self.traces {
            let tr: f64 = t.idxs.iter().map(|&k| xs[t.var][[k, k]].re).sum();
            worst = worst.max((tr - t.rhs).abs() / (1.0 + t.rhs.abs()));
        }
        for h in &self.halfspaces {
            let val: f64 = h.terms.iter().map(|(v, a)| re_inner(a, &xs[*v])).sum();
            worst = worst.max((val - h.bound).max(0.0) / h.norm2.sqrt());
        }
        worst
    }

    /// Runs the splitting loop. Returns the consensus point, a report, and
    /// the final state for warm-starting a structurally identical problem.
    pub fn solve(
        &self,
        opts: SolveOptions,
        warm: Option<&WarmState>,
    ) -> Result<(Vec<CMat>, SolverReport, WarmState)> {
        let blocks = self.block_count(self.has_objective());
        let mut z: Vec<CMat> = self.dims.iter().map(|&d| CMat::zeros((d, d))).collect();
        let mut duals: Vec<Vec<CMat>> = vec![z.clone(); blocks];
        let mut rho = 1.0;
        if let Some(w) = warm {
            let dims_match = w.z.len() == z.len()
                && w.z.iter().zip(&z).all(|(a, b)| a.dim() == b.dim())
                && w.duals.len() == blocks;
            if dims_match {
                z = w.z.clone();
                duals = w.duals.clone();
                rho = w.rho;
            }
        }

        let mut used = 0;
        let (status, violation) =
            self.run(&mut z, &mut duals, &mut rho, opts, self.has_objective(), &mut used)?;

        // An optimization run that bottomed out feasibility-wise gets a
        // violation-only phase to decide whether the set itself is empty.
        let (status, violation) = if self.has_objective()
            && status == SolverStatus::Infeasible
        {
            let budget = (opts.max_iter - used.min(opts.max_iter)).clamp(500, 2_000);
            let mut fz = z.clone();
            let mut fduals = vec![fz.clone(); self.block_count(false)];
            let mut frho = 1.0;
            let mut fused = 0;
            let fopts = SolveOptions {
                tol: opts.tol,
                max_iter: budget,
            };
            let (fstatus, fviol) =
                self.run(&mut fz, &mut fduals, &mut frho, fopts, false, &mut fused)?;
            used += fused;
            match fstatus {
                SolverStatus::Optimal => (SolverStatus::IterationCap, violation),
                _ => (SolverStatus::Infeasible, fviol.min(violation)),
            }
        } else {
            (status, violation)
        };

        let report = SolverReport {
            status,
            objective: self.objective_value(&z),
            violation,
            iterations: used,
        };
        let warm_out = WarmState {
            z: z.clone(),
            duals,
            rho,
        };
        Ok((z, report, warm_out))
    }

    fn block_count(&self, with_objective: bool) -> usize {
        1 + usize::from(self.has_affine()) + self.halfspaces.len() + usize::from(with_objective)
    }

    fn run(
        &self,
        z: &mut Vec<CMat>,
        duals: &mut Vec<Vec<CMat>>,
        rho: &mut f64,
        opts: SolveOptions,
        with_objective: bool,
        used: &mut usize,
    ) -> Result<(SolverStatus, f64)> {
        let blocks = self.block_count(with_objective);
        if duals.len() != blocks {
            *duals = vec![z.clone(); blocks];
        }
        let feas_tol = 10.0 * opts.tol;
        let mut best_viol = f64::INFINITY;
        let mut stall = 0usize;
        let mut locals: Vec<Vec<CMat>> = vec![z.clone(); blocks];
        let mut primal = f64::INFINITY;
        let mut dual_res = f64::INFINITY;

        for it in 0..opts.max_iter {
            *used += 1;
            // Local steps against the current consensus point.
            for b in 0..blocks {
                let mut v: Vec<CMat> = (0..z.len()).map(|k| &z[k] - &duals[b][k]).collect();
                self.local_step(b, with_objective, *rho, &mut v)?;
                // Over-relaxation toward the previous consensus point.
                for k in 0..v.len() {
                    v[k] = v[k].mapv(|x| x * RELAXATION) + z[k].mapv(|x| x * (1.0 - RELAXATION));
                }
                locals[b] = v;
            }
            // Consensus average and dual updates.
            let mut z_new: Vec<CMat> = (0..z.len())
                .map(|k| {
                    let mut acc = CMat::zeros(z[k].dim());
                    for b in 0..blocks {
                        acc = acc + &locals[b][k] + &duals[b][k];
                    }
                    acc.mapv(|x| x / blocks as f64)
                })
                .collect();
            for m in z_new.iter_mut() {
                *m = hermitian_part(m);
            }
            let scale = 1.0 + z_new.iter().map(frob).sum::<f64>();
            primal = 0.0;
            for b in 0..blocks {
                let mut r2 = 0.0;
                for k in 0..z.len() {
                    let d = &locals[b][k] - &z_new[k];
                    r2 += d.iter().map(|x| x.norm_sqr()).sum::<f64>();
                    duals[b][k] = &duals[b][k] + &d;
                }
                primal = primal.max(r2.sqrt() / scale);
            }
            dual_res = {
                let mut s2 = 0.0;
                for k in 0..z.len() {
                    let d = &z_new[k] - &z[k];
                    s2 += d.iter().map(|x| x.norm_sqr()).sum::<f64>();
                }
                *rho * (blocks as f64).sqrt() * s2.sqrt() / scale
            };
            *z = z_new;

            if scale > DIVERGENCE_NORM {
                return Err(Error::Solver("consensus iteration diverged".into()));
            }

            if it % RHO_CHECK_EVERY == RHO_CHECK_EVERY - 1 {
                // Residual balancing; duals rescale against rho.
                if primal > RHO_BALANCE * dual_res && *rho < 1e4 {
                    *rho *= 2.0;
                    for db in duals.iter_mut() {
                        for m in db.iter_mut() {
                            *m = m.mapv(|x| x * 0.5);
                        }
                    }
                } else if dual_res > RHO_BALANCE * primal && *rho > 1e-4 {
                    *rho *= 0.5;
                    for db in duals.iter_mut() {
                        for m in db.iter_mut() {
                            *m = m.mapv(|x| x * 2.0);
                        }
                    }
                }
                // Stall bookkeeping on the true violation.
                let viol = self.max_violation(z);
                if viol < best_viol * (1.0 - 1e-3) {
                    best_viol = viol;
                    stall = 0;
                } else {
                    best_viol = best_viol.min(viol);
                    stall += 1;
                }
                if stall >= STALL_CHECKS && best_viol > feas_tol && dual_res <= primal {
                    return Ok((SolverStatus::Infeasible, viol));
                }
            }

            if primal <= opts.tol && dual_res <= opts.tol {
                let viol = self.max_violation(z);
                let status = if viol <= feas_tol {
                    SolverStatus::Optimal
                } else {
                    SolverStatus::Infeasible
                };
                return Ok((status, viol));
            }
        }
        let viol = self.max_violation(z);
        let status = if primal <= 10.0 * opts.tol && dual_res <= 10.0 * opts.tol && viol <= feas_tol
        {
            SolverStatus::Optimal
        } else {
            SolverStatus::IterationCap
        };
        Ok((status, viol))
    }

    /// Applies block `b`'s projection or proximal map to `v` in place.
    fn local_step(&self, b: usize, with_objective: bool, rho: f64, v: &mut [CMat]) -> Result<()> {
        let affine = usize::from(self.has_affine());
        if b == 0 {
            for m in v.iter_mut() {
                *m = project_psd_fast(m)?;
            }
            return Ok(());
        }
        if affine == 1 && b == 1 {
            self.project_affine(v);
            return Ok(());
        }
        let h_idx = b - 1 - affine;
        if h_idx < self.halfspaces.len() {
            let h = &self.halfspaces[h_idx];
            let val: f64 = h.terms.iter().map(|(vi, a)| re_inner(a, &v[*vi])).sum();
            if val > h.bound {
                let step = (val - h.bound) / h.norm2;
                for (vi, a) in &h.terms {
                    v[*vi] = &v[*vi] - &a.mapv(|x| x * step);
                }
            }
            return Ok(());
        }
        debug_assert!(with_objective);
        self.prox_objective(rho, v)?;
        Ok(())
    }

    fn project_affine(&self, v: &mut [CMat]) {
        for p in &self.pins {
            v[p.var][[p.row, p.col]] = p.value;
            v[p.var][[p.col, p.row]] = p.value.conj();
        }
        for t in &self.ties {
            let avg = 0.5 * (v[t.a.0][[t.a.1, t.a.2]] + v[t.b.0][[t.b.1, t.b.2]]);
            v[t.a.0][[t.a.1, t.a.2]] = avg;
            v[t.a.0][[t.a.2, t.a.1]] = avg.conj();
            v[t.b.0][[t.b.1, t.b.2]] = avg;
            v[t.b.0][[t.b.2, t.b.1]] = avg.conj();
        }
        for t in &self.traces {
            let tr: f64 = t.idxs.iter().map(|&k| v[t.var][[k, k]].re).sum();
            let shift = (t.rhs - tr) / t.idxs.len() as f64;
            for &k in &t.idxs {
                let re = v[t.var][[k, k]].re + shift;
                v[t.var][[k, k]] = Complex64::new(re, 0.0);
            }
        }
    }

    /// Exact maximizer of `objective - (rho/2) * sum ||X - v||^2`.
    fn prox_objective(&self, rho: f64, v: &mut [CMat]) -> Result<()> {
        for idx in 0..v.len() {
            if let Some(cg) = &self.congruences[idx] {
                // rho X + alpha B X B = C + rho V, solved in B's eigenbasis.
                let mut r = match &self.linear[idx] {
                    Some(c) => c + &v[idx].mapv(|x| x * rho),
                    None => v[idx].mapv(|x| x * rho),
                };
                r = congruence_transform(&cg.basis, &r);
                for i in 0..r.nrows() {
                    for j in 0..r.ncols() {
                        r[[i, j]] /= rho + cg.alpha * cg.evals[i] * cg.evals[j];
                    }
                }
                v[idx] = congruence_back(&cg.basis, &r);
            } else {
                if let Some(c) = &self.linear[idx] {
                    v[idx] = &v[idx] + &c.mapv(|x| x / rho);
                }
            }
        }
        if let Some(g) = &self.group {
            // Joint solve (K + rho I) psi = c + rho v over the group's
            // diagonal entries; their linear-rule values are overwritten.
            let n = g.entries.len();
            let mut rhs = vec![0.0; n];
            for (gi, &(vi, di)) in g.entries.iter().enumerate() {
                let c = self.linear[vi]
                    .as_ref()
                    .map(|c| c[[di, di]].re)
                    .unwrap_or(0.0);
                // v still holds the pre-prox input on these entries plus
                // c/rho from the linear rule; recover the input value.
                let v_in = v[vi][[di, di]].re - c / rho;
                rhs[gi] = c + rho * v_in;
            }
            // psi = U (U^H rhs ./ (lambda + rho)).
            let mut tmp = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += g.basis[[j, i]].re * rhs[j];
                }
                tmp[i] = acc / (g.evals[i] + rho);
            }
            for (gi, &(vi, di)) in g.entries.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += g.basis[[gi, i]].re * tmp[i];
                }
                v[vi][[di, di]] = Complex64::new(acc, 0.0);
                let _ = gi;
            }
        }
        Ok(())
    }
}

fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `U^H X U`.
fn congruence_transform(u: &CMat, x: &CMat) -> CMat {
    let n = u.nrows();
    let mut t = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += u[[k, i]].conj() * x[[k, j]];
            }
            t[[i, j]] = acc;
        }
    }
    let mut out = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += t[[i, k]] * u[[k, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// `U X U^H`.
fn congruence_back(u: &CMat, x: &CMat) -> CMat {
    let n = u.nrows();
    let mut t = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += u[[i, k]] * x[[k, j]];
            }
            t[[i, j]] = acc;
        }
    }
    let mut out = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += t[[i, k]] * u[[j, k]].conj();
            }
            out[[i, j]] = acc;
        }
    }
    out
}

fn project_psd_fast(a: &CMat) -> Result<CMat> {
    let h = hermitian_part(a);
    let (evals, basis) = hermitian_eig(&h)?;
    if evals[0] >= 0.0 {
        return Ok(h);
    }
    let n = h.nrows();
    let mut scaled = CMat::zeros((n, n));
    for j in 0..n {
        let l = evals[j].max(0.0);
        for i in 0..n {
            scaled[[i, j]] = basis[[i, j]] * l;
        }
    }
    let mut out = CMat::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += scaled[[i, k]] * basis[[j, k]].conj();
            }
            out[[i, j]] = acc;
        }
    }
    Ok(hermitian_part(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eye(n: usize) -> CMat {
        CMat::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    #[test]
    fn unit_trace_norm_minimizer_is_scaled_identity() {
        // max -||W||^2 s.t. Tr(W) = 1, W PSD: the symmetric point I/2.
        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        p.trace_eq(w, &[0, 1], 1.0).unwrap();
        p.add_quad_congruence(w, &eye(2), 2.0).unwrap();
        let (xs, report, _) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal, "{report:?}");
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!(
                    (xs[0][[i, j]] - c(want, 0.0)).norm() < 1e-4,
                    "W = {:?}",
                    xs[0]
                );
            }
        }
        assert!((report.objective + 0.5).abs() < 1e-4, "{}", report.objective);
        assert!(report.violation <= 1e-5);
    }

    #[test]
    fn contradictory_trace_demands_are_infeasible() {
        // Tr(W) = 1 with Re<I, W> >= 2 cannot hold.
        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        p.trace_eq(w, &[0, 1], 1.0).unwrap();
        p.halfspace(vec![(w, eye(2).mapv(|x| -x))], -2.0).unwrap();
        let (_, report, _) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(report.status, SolverStatus::Infeasible, "{report:?}");
        assert!(report.violation > 1e-5);
    }

    #[test]
    fn linear_objective_finds_the_top_eigendirection() {
        // max Re<diag(2,1), W> on the trace-one PSD set: puts all mass on
        // the first coordinate.
        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        p.trace_eq(w, &[0, 1], 1.0).unwrap();
        let mut cmat = CMat::zeros((2, 2));
        cmat[[0, 0]] = c(2.0, 0.0);
        cmat[[1, 1]] = c(1.0, 0.0);
        p.add_linear(w, &cmat).unwrap();
        let opts = SolveOptions {
            tol: 1e-7,
            ..Default::default()
        };
        let (xs, report, _) = p.solve(opts, None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal, "{report:?}");
        assert!((report.objective - 2.0).abs() < 1e-3, "{}", report.objective);
        assert!((xs[0][[0, 0]].re - 1.0).abs() < 1e-3);
    }

    /// Dense two-level grid over the trace-one PSD 2x2 set (a unit ball in
    /// the (x, y, z) parameterization W = (I + x sx + y sy + z sz) / 2).
    fn bloch_oracle(obj: impl Fn(&CMat) -> f64, feas: impl Fn(&CMat) -> bool) -> f64 {
        let w_of = |x: f64, y: f64, z: f64| {
            let mut w = CMat::zeros((2, 2));
            w[[0, 0]] = c((1.0 + z) / 2.0, 0.0);
            w[[1, 1]] = c((1.0 - z) / 2.0, 0.0);
            w[[0, 1]] = c(x / 2.0, -y / 2.0);
            w[[1, 0]] = c(x / 2.0, y / 2.0);
            w
        };
        let mut best = f64::NEG_INFINITY;
        let mut center = (0.0, 0.0, 0.0);
        let mut radius = 1.0f64;
        for level in 0..3 {
            let steps = if level == 0 { 21 } else { 15 };
            let mut local_best = f64::NEG_INFINITY;
            let mut local_center = center;
            for ix in 0..steps {
                for iy in 0..steps {
                    for iz in 0..steps {
                        let g = |k: usize| (k as f64 / (steps - 1) as f64) * 2.0 - 1.0;
                        let (x, y, z) = (
                            center.0 + radius * g(ix),
                            center.1 + radius * g(iy),
                            center.2 + radius * g(iz),
                        );
                        if x * x + y * y + z * z > 1.0 {
                            continue;
                        }
                        let w = w_of(x, y, z);
                        if !feas(&w) {
                            continue;
                        }
                        let f = obj(&w);
                        if f > local_best {
                            local_best = f;
                            local_center = (x, y, z);
                        }
                    }
                }
            }
            best = best.max(local_best);
            center = local_center;
            radius /= steps as f64 / 2.0;
        }
        best
    }

    #[test]
    fn matches_dense_grid_oracle_on_a_random_instance() {
        // Linear + congruence objective with one halfspace; the solver must
        // land within 1e-4 of a refined brute-force grid over the feasible
        // set.
        let mut rng = seeds::rng(2024);
        let mut cmat = CMat::zeros((2, 2));
        cmat[[0, 0]] = c(rng.random::<f64>(), 0.0);
        cmat[[1, 1]] = c(rng.random::<f64>(), 0.0);
        let off = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        cmat[[0, 1]] = off;
        cmat[[1, 0]] = off.conj();
        let mut amat = CMat::zeros((2, 2));
        amat[[0, 0]] = c(1.0, 0.0);
        amat[[1, 1]] = c(-0.3, 0.0);
        let bound = 0.45;

        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        p.trace_eq(w, &[0, 1], 1.0).unwrap();
        p.halfspace(vec![(w, amat.clone())], bound).unwrap();
        p.add_linear(w, &cmat).unwrap();
        p.add_quad_congruence(w, &eye(2), 1.0).unwrap();

        let opts = SolveOptions {
            tol: 1e-7,
            ..Default::default()
        };
        let (xs, report, _) = p.solve(opts, None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal, "{report:?}");

        let objective = |m: &CMat| {
            let lin: f64 = m
                .iter()
                .zip(cmat.iter())
                .map(|(x, cc)| (cc.conj() * x).re)
                .sum();
            let qn: f64 = m.iter().map(|x| x.norm_sqr()).sum();
            lin - 0.5 * qn
        };
        let feasible = |m: &CMat| {
            let val: f64 = m
                .iter()
                .zip(amat.iter())
                .map(|(x, aa)| (aa.conj() * x).re)
                .sum();
            val <= bound + 1e-9
        };
        let oracle = bloch_oracle(objective, feasible);
        assert!(
            (report.objective - oracle).abs() <= 1e-4,
            "solver {} vs oracle {oracle}",
            report.objective
        );
        assert!(p.max_violation(&xs) <= 1e-5);
    }

    #[test]
    fn pins_ties_and_traces_hold_at_the_solution() {
        let mut p = ConvexSubproblem::new();
        let a = p.add_var(3).unwrap();
        let b = p.add_var(2).unwrap();
        p.pin(a, 2, 2, c(1.0, 0.0)).unwrap();
        p.pin(b, 1, 1, c(1.0, 0.0)).unwrap();
        p.tie(a, (0, 2), b, (0, 1)).unwrap();
        p.trace_eq(a, &[0, 1], 1.0).unwrap();
        // Small pull on the tied entries so they move off zero.
        let mut cmat = CMat::zeros((3, 3));
        cmat[[0, 2]] = c(0.2, 0.1);
        cmat[[2, 0]] = c(0.2, -0.1);
        p.add_linear(a, &cmat).unwrap();
        p.add_quad_congruence(a, &eye(3), 1.0).unwrap();
        p.add_quad_congruence(b, &eye(2), 1.0).unwrap();
        let (xs, report, _) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal, "{report:?}");
        assert!((xs[0][[2, 2]] - c(1.0, 0.0)).norm() < 1e-5);
        assert!((xs[1][[1, 1]] - c(1.0, 0.0)).norm() < 1e-5);
        assert!((xs[0][[0, 2]] - xs[1][[0, 1]]).norm() < 1e-5);
        let tr = xs[0][[0, 0]].re + xs[0][[1, 1]].re;
        assert!((tr - 1.0).abs() < 1e-5);
        assert!(xs[0][[0, 2]].norm() > 1e-3, "tied entries never moved");
    }

    #[test]
    fn quad_group_prox_reaches_the_closed_form() {
        // max c^T psi - psi^T K psi / 2 over two 2x2 blocks' top-left
        // entries with PSD only: unconstrained optimum psi = K^-1 c as long
        // as it is nonnegative.
        let mut p = ConvexSubproblem::new();
        let b1 = p.add_var(2).unwrap();
        let b2 = p.add_var(2).unwrap();
        let mut k = CMat::zeros((2, 2));
        k[[0, 0]] = c(2.0, 0.0);
        k[[1, 1]] = c(1.0, 0.0);
        k[[0, 1]] = c(0.5, 0.0);
        k[[1, 0]] = c(0.5, 0.0);
        p.add_quad_group(&[(b1, 0), (b2, 0)], &k).unwrap();
        let mut c1 = CMat::zeros((2, 2));
        c1[[0, 0]] = c(1.0, 0.0);
        let mut c2 = CMat::zeros((2, 2));
        c2[[0, 0]] = c(0.7, 0.0);
        p.add_linear(b1, &c1).unwrap();
        p.add_linear(b2, &c2).unwrap();
        let (xs, report, _) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal, "{report:?}");
        // K^-1 c for K = [[2, .5], [.5, 1]], c = [1, .7]: det = 1.75.
        let want0 = (1.0 * 1.0 - 0.5 * 0.7) / 1.75;
        let want1 = (2.0 * 0.7 - 0.5 * 1.0) / 1.75;
        assert!((xs[0][[0, 0]].re - want0).abs() < 1e-4, "{:?}", xs[0]);
        assert!((xs[1][[0, 0]].re - want1).abs() < 1e-4, "{:?}", xs[1]);
    }

    #[test]
    fn warm_start_skips_the_transient() {
        let build = || {
            let mut p = ConvexSubproblem::new();
            let w = p.add_var(3).unwrap();
            p.trace_eq(w, &[0, 1, 2], 1.0).unwrap();
            p.add_quad_congruence(w, &eye(3), 2.0).unwrap();
            p
        };
        let p = build();
        let (_, cold, warm) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(cold.status, SolverStatus::Optimal);
        let (_, rewarmed, _) = p.solve(SolveOptions::default(), Some(&warm)).unwrap();
        assert_eq!(rewarmed.status, SolverStatus::Optimal);
        assert!(
            rewarmed.iterations <= 30 && rewarmed.iterations < cold.iterations,
            "cold {} warm {}",
            cold.iterations,
            rewarmed.iterations
        );
    }

    #[test]
    fn construction_rejects_malformed_problems() {
        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        // Out-of-range entry.
        assert!(p.pin(w, 2, 0, c(1.0, 0.0)).is_err());
        // Imaginary diagonal pin.
        assert!(p.pin(w, 0, 0, c(1.0, 0.5)).is_err());
        // Overlapping claims.
        p.pin(w, 0, 1, c(0.3, 0.0)).unwrap();
        assert!(p.pin(w, 1, 0, c(0.3, 0.0)).is_err());
        // Non-Hermitian coefficient.
        let mut bad = CMat::zeros((2, 2));
        bad[[0, 1]] = c(1.0, 0.0);
        assert!(p.halfspace(vec![(w, bad.clone())], 0.0).is_err());
        assert!(p.add_linear(w, &bad).is_err());
        // Undeclared variable from another problem.
        let mut other = ConvexSubproblem::new();
        let q0 = other.add_var(2).unwrap();
        let _ = q0;
        let ghost = VarId(7);
        assert!(p.trace_eq(ghost, &[0], 1.0).is_err());
        // Group on an off-diagonal entry is impossible by signature; a
        // congruence and group on the same variable is rejected.
        let mut p2 = ConvexSubproblem::new();
        let v2 = p2.add_var(2).unwrap();
        p2.add_quad_congruence(v2, &eye(2), 1.0).unwrap();
        let k1 = eye(1);
        assert!(p2.add_quad_group(&[(v2, 0)], &k1).is_err());
    }

    #[test]
    fn halfspace_binds_exactly_when_active() {
        // Pull toward large trace direction, cap it with a halfspace: the
        // optimum sits on the boundary.
        let mut p = ConvexSubproblem::new();
        let w = p.add_var(2).unwrap();
        p.add_linear(w, &eye(2)).unwrap();
        p.add_quad_congruence(w, &eye(2), 1.0).unwrap();
        p.halfspace(vec![(w, eye(2))], 0.8).unwrap();
        let (xs, report, _) = p.solve(SolveOptions::default(), None).unwrap();
        assert_eq!(report.status, SolverStatus::Optimal);
        let tr = xs[0][[0, 0]].re + xs[0][[1, 1]].re;
        // Unconstrained optimum would be I (trace 2); the cap holds at 0.8.
        assert!((tr - 0.8).abs() < 1e-4, "trace {tr}");
    }
}
