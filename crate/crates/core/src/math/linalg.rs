//! Dense complex linear algebra for the small Hermitian matrices that appear
//! in the beamforming subproblems (dimensions rarely exceed a few dozen).

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense row-major complex matrix.
pub type CMat = Array2<Complex64>;
/// Dense complex vector.
pub type CVec = Array1<Complex64>;

/// Maximum entry-wise deviation from Hermitian symmetry, relative to scale.
pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            let d = a[[i, j]] - a[[j, i]].conj();
            if d.norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Hermitian part `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    let n = a.nrows();
    CMat::from_shape_fn((n, n), |(i, j)| 0.5 * (a[[i, j]] + a[[j, i]].conj()))
}

/// Outer product `a b^H`.
pub fn outer(a: &CVec, b: &CVec) -> CMat {
    CMat::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

const HERMITIAN_TOL: f64 = 1e-12;

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the unitary matrix whose
/// columns are the matching eigenvectors, so `A = V diag(w) V^H`.
///
/// The input must be Hermitian within a 1e-12 relative symmetry residual;
/// use [`hermitian_part`] first when the matrix carries round-off skew.
pub fn hermitian_eig(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    if !is_hermitian(a, HERMITIAN_TOL) {
        return Err(Error::Domain(
            "hermitian_eig: input is not Hermitian within tolerance".into(),
        ));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros((0, 0))));
    }
    let mut m: Vec<Complex64> = a.iter().copied().collect();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    jacobi_diagonalize(&mut m, &mut v, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMat::from_shape_fn((n, n), |(i, j)| v[i * n + order[j]]);
    Ok((values, vectors))
}

/// In-place cyclic Jacobi on flat row-major storage. `m` ends numerically
/// diagonal; `v` accumulates the rotations.
fn jacobi_diagonalize(m: &mut [Complex64], v: &mut [Complex64], n: usize) -> Result<()> {
    let frob: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if frob == 0.0 {
        return Ok(());
    }
    let target = 1e-13 * frob;
    for _sweep in 0..64 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += 2.0 * m[p * n + q].norm_sqr();
                }
            }
            s.sqrt()
        };
        if off <= target {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                let abs = apq.norm();
                if abs <= 1e-300 {
                    continue;
                }
                // Phase factor turning the pivot real, then a real rotation
                // zeroing it (two-by-two symmetric Schur decomposition).
                let f = apq.conj() / abs;
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let tau = (aqq - app) / (2.0 * abs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sf = f * s;
                let cf = f * c;
                // Columns: A <- A U with U[p][p]=c, U[p][q]=s,
                // U[q][p]=-s f, U[q][q]=c f.
                for i in 0..n {
                    let x = m[i * n + p];
                    let y = m[i * n + q];
                    m[i * n + p] = c * x - sf * y;
                    m[i * n + q] = s * x + cf * y;
                }
                // Rows: A <- U^H A.
                for j in 0..n {
                    let x = m[p * n + j];
                    let y = m[q * n + j];
                    m[p * n + j] = c * x - sf.conj() * y;
                    m[q * n + j] = s * x + cf.conj() * y;
                }
                // Clean the pivot pair exactly; round-off keeps it tiny anyway.
                m[p * n + q] = Complex64::new(0.0, 0.0);
                m[q * n + p] = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let x = v[i * n + p];
                    let y = v[i * n + q];
                    v[i * n + p] = c * x - sf * y;
                    v[i * n + q] = s * x + cf * y;
                }
            }
        }
    }
    Err(Error::Solver(
        "jacobi_diagonalize: no convergence in 64 sweeps".into(),
    ))
}

/// Projection onto the positive semidefinite cone in Frobenius norm:
/// eigenvalues are clamped at zero and the matrix is rebuilt.
pub fn project_psd(a: &CMat) -> Result<CMat> {
    if !is_hermitian(a, HERMITIAN_TOL) {
        return Err(Error::Domain(
            "project_psd: input is not Hermitian within tolerance".into(),
        ));
    }
    let n = a.nrows();
    let (values, vectors) = hermitian_eig(a)?;
    let mut out = CMat::zeros((n, n));
    for (k, &w) in values.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let col = vectors.column(k);
        for i in 0..n {
            let wi = w * col[i];
            for j in 0..n {
                out[[i, j]] += wi * col[j].conj();
            }
        }
    }
    Ok(hermitian_part(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        let mut rng = seeds::rng(seed);
        let raw = CMat::from_shape_fn((n, n), |_| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        hermitian_part(&raw)
    }

    fn reconstruct(values: &[f64], vectors: &CMat) -> CMat {
        let n = vectors.nrows();
        let mut out = CMat::zeros((n, n));
        for (k, &w) in values.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] += w * vectors[[i, k]] * vectors[[j, k]].conj();
                }
            }
        }
        out
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let eye = CMat::eye(4);
        let (w, _) = hermitian_eig(&eye).unwrap();
        for x in w {
            assert!((x - 1.0).abs() < 1e-14);
        }
        let mut d = CMat::zeros((3, 3));
        d[[0, 0]] = Complex64::new(3.0, 0.0);
        d[[1, 1]] = Complex64::new(-1.0, 0.0);
        d[[2, 2]] = Complex64::new(0.5, 0.0);
        let (w, _) = hermitian_eig(&d).unwrap();
        assert!((w[0] + 1.0).abs() < 1e-14);
        assert!((w[1] - 0.5).abs() < 1e-14);
        assert!((w[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_matches_two_by_two_closed_form() {
        for seed in 0..50 {
            let a = random_hermitian(2, 1000 + seed);
            let (w, _) = hermitian_eig(&a).unwrap();
            let tr = a[[0, 0]].re + a[[1, 1]].re;
            let mid = 0.5 * (a[[0, 0]].re - a[[1, 1]].re);
            let disc = (mid * mid + a[[0, 1]].norm_sqr()).sqrt();
            let lo = 0.5 * tr - disc;
            let hi = 0.5 * tr + disc;
            assert!((w[0] - lo).abs() < 1e-12 * (1.0 + hi.abs()));
            assert!((w[1] - hi).abs() < 1e-12 * (1.0 + hi.abs()));
        }
    }

    #[test]
    fn eig_reconstructs_and_is_unitary() {
        for n in [1, 2, 3, 5, 9, 16] {
            let a = random_hermitian(n, 7 + n as u64);
            let (w, v) = hermitian_eig(&a).unwrap();
            let back = reconstruct(&w, &v);
            let norm = frobenius_norm(&a).max(1e-300);
            let mut err = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    err += (back[[i, j]] - a[[i, j]]).norm_sqr();
                }
            }
            assert!(
                err.sqrt() <= 1e-9 * norm,
                "reconstruction error {} at n = {n}",
                err.sqrt() / norm
            );
            // V^H V = I.
            for i in 0..n {
                for j in 0..n {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        dot += v[[k, i]].conj() * v[[k, j]];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).norm() < 1e-10, "V not unitary at n = {n}");
                }
            }
            // Residual per pair: ||A v - w v|| small.
            for k in 0..n {
                let col = v.column(k).to_owned();
                let av = a.dot(&col);
                let mut r = 0.0f64;
                for i in 0..n {
                    r += (av[i] - w[k] * col[i]).norm_sqr();
                }
                assert!(r.sqrt() <= 1e-9 * norm.max(1.0));
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut a = CMat::zeros((2, 2));
        a[[0, 1]] = Complex64::new(1.0, 0.0);
        assert!(hermitian_eig(&a).is_err());
        assert!(project_psd(&a).is_err());
    }

    #[test]
    fn psd_projection_examples() {
        let mut d = CMat::zeros((2, 2));
        d[[0, 0]] = Complex64::new(3.0, 0.0);
        d[[1, 1]] = Complex64::new(-2.0, 0.0);
        let p = project_psd(&d).unwrap();
        assert!((p[[0, 0]].re - 3.0).abs() < 1e-12);
        assert!(p[[1, 1]].norm() < 1e-12);
        assert!(p[[0, 1]].norm() < 1e-12);
    }

    #[test]
    fn psd_projection_fixes_psd_and_is_idempotent() {
        for seed in 0..10 {
            let g = random_hermitian(4, 300 + seed);
            // Gram matrix: PSD by construction.
            let psd = {
                let mut m = CMat::zeros((4, 4));
                for i in 0..4 {
                    for j in 0..4 {
                        let mut s = Complex64::new(0.0, 0.0);
                        for k in 0..4 {
                            s += g[[k, i]].conj() * g[[k, j]];
                        }
                        m[[i, j]] = s;
                    }
                }
                hermitian_part(&m)
            };
            let p = project_psd(&psd).unwrap();
            let mut err = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    err = err.max((p[[i, j]] - psd[[i, j]]).norm());
                }
            }
            assert!(err <= 1e-10 * frobenius_norm(&psd).max(1.0));

            let a = random_hermitian(4, 400 + seed);
            let p1 = project_psd(&a).unwrap();
            let p2 = project_psd(&p1).unwrap();
            let mut drift = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    drift = drift.max((p2[[i, j]] - p1[[i, j]]).norm());
                }
            }
            assert!(drift <= 1e-9 * frobenius_norm(&p1).max(1.0));
            let (w, _) = hermitian_eig(&p1).unwrap();
            assert!(w[0] >= -1e-10 * frobenius_norm(&a).max(1.0));
        }
    }

    #[test]
    fn psd_projection_is_nearest_among_random_candidates() {
        // The projection must be at least as close as any sampled PSD matrix.
        let a = random_hermitian(4, 99);
        let p = project_psd(&a).unwrap();
        let dist_p = {
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += (a[[i, j]] - p[[i, j]]).norm_sqr();
                }
            }
            s.sqrt()
        };
        for seed in 0..10_000u64 {
            let g = random_hermitian(4, 10_000 + seed);
            let cand = project_psd(&g).unwrap();
            let mut s = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    s += (a[[i, j]] - cand[[i, j]]).norm_sqr();
                }
            }
            assert!(
                s.sqrt() + 1e-12 >= dist_p,
                "candidate {seed} closer than projection"
            );
        }
    }

    #[test]
    fn psd_projection_is_nonexpansive() {
        for seed in 0..20 {
            let a = random_hermitian(5, 500 + seed);
            let b = random_hermitian(5, 600 + seed);
            let pa = project_psd(&a).unwrap();
            let pb = project_psd(&b).unwrap();
            let mut dp = 0.0;
            let mut dab = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    dp += (pa[[i, j]] - pb[[i, j]]).norm_sqr();
                    dab += (a[[i, j]] - b[[i, j]]).norm_sqr();
                }
            }
            assert!(dp.sqrt() <= dab.sqrt() * (1.0 + 1e-12));
        }
    }
}
