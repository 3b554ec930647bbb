//! Dense linear-algebra substrate shared by every other module.
//!
//! Thin wrappers over [`nalgebra`] factorizations with the error contracts
//! the rest of the crate relies on: thin SVD with a hard iteration cap,
//! orthonormal column-space bases with an explicit rank tolerance, symmetric
//! eigendecomposition with a symmetry check, and full-rank least squares.
//! Everything is `f64`; values are immutable after construction and all
//! functions are pure, so concurrent use needs no coordination.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Dense double-precision matrix. Constructors taking flat slices use
/// row-major order (`DMatrix::from_row_slice`).
pub type Mat = DMatrix<f64>;

/// Default relative rank cutoff: singular values below `1e-10 * sigma_max`
/// count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// SVD iteration budget, in QR sweeps. Exceeding it is an error, never a
/// silent partial result.
const SVD_MAX_SWEEPS: usize = 1000;

/// Thin singular value decomposition `m = U * diag(sigma) * V^T`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Orthonormal columns, `rows x k` with `k = min(rows, cols)`.
    pub left_vectors: Mat,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// Orthonormal columns, `cols x k`.
    pub right_vectors: Mat,
}

impl SvdResult {
    /// Reconstruct `U * diag(sigma) * V^T`.
    pub fn reconstruct(&self) -> Mat {
        let k = self.singular_values.len();
        let mut scaled = self.left_vectors.clone();
        for j in 0..k {
            scaled.column_mut(j).scale_mut(self.singular_values[j]);
        }
        &scaled * self.right_vectors.transpose()
    }
}

fn check_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite entries")))
    }
}

fn check_nonempty(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid(format!("{what} must have rows >= 1 and cols >= 1")));
    }
    Ok(())
}

/// Thin SVD with singular values sorted nonincreasing.
pub fn svd(m: &Mat) -> Result<SvdResult> {
    check_nonempty(m, "svd input")?;
    check_finite(m, "svd input")?;
    let max_iter = SVD_MAX_SWEEPS * m.nrows().min(m.ncols());
    let fact = m
        .clone()
        .try_svd(true, true, f64::EPSILON, max_iter)
        .ok_or_else(|| {
            Error::DecompositionFailure(format!(
                "SVD of {}x{} matrix did not converge within {SVD_MAX_SWEEPS} sweeps",
                m.nrows(),
                m.ncols()
            ))
        })?;
    let u = fact.u.expect("u requested");
    let v_t = fact.v_t.expect("v_t requested");
    let sigma: Vec<f64> = fact.singular_values.iter().copied().collect();

    // nalgebra does not guarantee an ordering; sort descending and permute
    // the vector columns to match.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("finite singular values"));
    let singular_values: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let left_vectors = Mat::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v = v_t.transpose();
    let right_vectors = Mat::from_columns(&order.iter().map(|&i| v.column(i)).collect::<Vec<_>>());

    Ok(SvdResult { left_vectors, singular_values, right_vectors })
}

/// Orthonormal basis of the column space of `m` at relative tolerance
/// `rank_tol`: keeps the left singular vectors whose singular value exceeds
/// `rank_tol * sigma_max`.
pub fn orthonormal_basis(m: &Mat, rank_tol: f64) -> Result<Mat> {
    if rank_tol <= 0.0 {
        return Err(Error::invalid("rank_tol must be positive"));
    }
    let fact = svd(m)?;
    let cutoff = rank_tol * fact.singular_values.first().copied().unwrap_or(0.0);
    let rank = fact.singular_values.iter().take_while(|&&s| s > cutoff && s > 0.0).count();
    if rank == 0 {
        return Err(Error::EmptySpan(format!(
            "matrix of size {}x{} is numerically zero",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(fact.left_vectors.columns(0, rank).into_owned())
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors in matching columns.
pub fn sym_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    check_nonempty(m, "sym_eigen input")?;
    check_finite(m, "sym_eigen input")?;
    if m.nrows() != m.ncols() {
        return Err(Error::shape(format!("sym_eigen needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let scale = m.norm().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "sym_eigen input is not symmetric: max |a - a^T| = {asym:.3e}"
        )));
    }
    // Work on the symmetrized matrix so tiny representational skew cannot
    // leak into the factorization.
    let sym = (m + m.transpose()) * 0.5;
    let n = sym.nrows();
    let eig = sym.try_symmetric_eigen(f64::EPSILON, SVD_MAX_SWEEPS * n).ok_or_else(|| {
        Error::DecompositionFailure(format!("symmetric eigendecomposition of {n}x{n} matrix did not converge"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors =
        Mat::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    Ok((values, vectors))
}

/// Least squares `argmin_X ||a X - b||_F` for full-column-rank `a`, via QR.
///
/// Rank deficiency at tolerance [`DEFAULT_RANK_TOL`] is an error; callers
/// that can tolerate it should fall back to [`lstsq_pinv`].
pub fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    check_nonempty(a, "lstsq design matrix")?;
    check_finite(a, "lstsq design matrix")?;
    check_finite(b, "lstsq rhs")?;
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!(
            "lstsq: a has {} rows but b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if a.nrows() < a.ncols() {
        return Err(Error::RankDeficient(format!(
            "lstsq: {}x{} system is underdetermined",
            a.nrows(),
            a.ncols()
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let max_diag = (0..a.ncols()).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let min_diag = (0..a.ncols()).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(min_diag > DEFAULT_RANK_TOL * max_diag) || max_diag == 0.0 {
        return Err(Error::RankDeficient(format!(
            "lstsq: design matrix rank-deficient (|r_min|/|r_max| = {:.3e})",
            if max_diag > 0.0 { min_diag / max_diag } else { 0.0 }
        )));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("lstsq: triangular solve failed".into()))
}

/// Minimum-norm least squares via the SVD pseudo-inverse; tolerates rank
/// deficiency by truncating singular values below `rank_tol * sigma_max`.
pub fn lstsq_pinv(a: &Mat, b: &Mat, rank_tol: f64) -> Result<Mat> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!(
            "lstsq_pinv: a has {} rows but b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let fact = svd(a)?;
    let cutoff = rank_tol * fact.singular_values.first().copied().unwrap_or(0.0);
    let utb = fact.left_vectors.transpose() * b;
    let mut scaled = utb;
    for (i, &s) in fact.singular_values.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        scaled.row_mut(i).scale_mut(inv);
    }
    Ok(&fact.right_vectors * scaled)
}

/// Eigenvalues of a small dense symmetric matrix, in place and without
/// allocation: Householder tridiagonalization then implicit-shift QL, values
/// only. `a` is `n x n` (either storage order; only symmetry matters) and is
/// destroyed; `d` and `e` are scratch of length `n`. On return `d` holds the
/// eigenvalues in ascending order.
///
/// This exists for per-signal hot loops (rho x rho Gram blocks) where the
/// allocating [`sym_eigen`] would dominate the runtime; for anything
/// user-facing, use [`sym_eigen`].
pub(crate) fn sym_eigenvalues_small(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    debug_assert!(a.len() >= n * n && d.len() >= n && e.len() >= n);
    if n == 0 {
        return;
    }
    if n == 1 {
        d[0] = a[0];
        return;
    }

    // Householder reduction to tridiagonal form (lower triangle).
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let mut f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                f = 0.0;
                for j in 0..=l {
                    let mut g2 = 0.0;
                    for k in 0..=j {
                        g2 += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g2 += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g2 / h;
                    f += e[j] * a[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let fj = a[i * n + j];
                    let gj = e[j] - hh * fj;
                    e[j] = gj;
                    for k in 0..=j {
                        a[j * n + k] -= fj * e[k] + gj * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
    }
    e[0] = 0.0;
    for i in 0..n {
        d[i] = a[i * n + i];
    }

    // Implicit-shift QL on the tridiagonal (d, e).
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                // Leave the (already near-converged) values as they are.
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut early = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let rr = (d[i] - g) * s + 2.0 * c * b;
                p = s * rr;
                d[i + 1] = g + p;
                g = c * rr - b;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d[..n].sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
}

/// Nuclear norm (sum of singular values) of a small matrix, allocation-free
/// given caller scratch: `gram` must hold `g^T g` (`n x n`), `d`/`e` are
/// length-`n` scratch.
pub(crate) fn nuclear_norm_from_gram(gram: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) -> f64 {
    sym_eigenvalues_small(gram, n, d, e);
    d[..n].iter().map(|&l| l.max(0.0).sqrt()).sum()
}
