//! Frame-theoretic diagnostics: analysis/synthesis operators, frame bounds,
//! coherence against the Welch bound, equiangular-tight-frame testing,
//! restricted-isometry constants and the ETF-target Gram penalty.
//!
//! Frames here are univariate (one column per element). Multivariate
//! dictionaries reach these diagnostics by flattening each atom column-wise
//! ([`Frame::from_dictionary`]).

use itertools::Itertools;

use crate::dictlearn::Dictionary;
use crate::linops::{self, Mat};
use crate::{Error, Result};

/// A finite frame: `M` elements as columns of an `N x M` matrix.
#[derive(Debug, Clone)]
pub struct Frame {
    columns: Mat,
    unit_norm: bool,
}

impl Frame {
    pub fn new(columns: Mat) -> Result<Self> {
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::invalid("a frame needs at least one nonzero-dimensional element"));
        }
        let unit_norm =
            (0..columns.ncols()).all(|j| (columns.column(j).norm() - 1.0).abs() <= 1e-12);
        Ok(Frame { columns, unit_norm })
    }

    /// Flatten a multivariate dictionary column-wise: atom `m` becomes the
    /// length `N * rho` column `m`. Unit Frobenius atoms flatten to unit
    /// columns, so the result is a unit-norm frame.
    pub fn from_dictionary(dict: &Dictionary) -> Result<Self> {
        let len = dict.sample_len() * dict.component_count();
        let mut columns = Mat::zeros(len, dict.len());
        for (m, atom) in dict.atoms().iter().enumerate() {
            columns.column_mut(m).copy_from_slice(atom.as_slice());
        }
        Frame::new(columns)
    }

    /// Ambient dimension `N`.
    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Element count `M`.
    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn columns(&self) -> &Mat {
        &self.columns
    }

    fn require_unit_norm(&self, what: &str) -> Result<()> {
        if !self.unit_norm {
            return Err(Error::invalid(format!("{what} needs a unit-norm frame")));
        }
        Ok(())
    }
}

/// Analysis (Bessel) operator: the inner products `(<w, u_i>)_i`.
pub fn analysis(frame: &Frame, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != frame.dim() {
        return Err(Error::shape(format!(
            "vector has length {}, frame elements have length {}",
            w.len(),
            frame.dim()
        )));
    }
    let wv = nalgebra::DVectorView::from_slice(w, w.len());
    Ok((frame.columns.transpose() * wv).iter().copied().collect())
}

/// Synthesis (pre-frame) operator: `sum_i c_i u_i`.
pub fn synthesis(frame: &Frame, coefficients: &[f64]) -> Result<Vec<f64>> {
    if coefficients.len() != frame.len() {
        return Err(Error::shape(format!(
            "{} coefficients for {} frame elements",
            coefficients.len(),
            frame.len()
        )));
    }
    let cv = nalgebra::DVectorView::from_slice(coefficients, coefficients.len());
    Ok((&frame.columns * cv).iter().copied().collect())
}

/// Optimal frame bounds `(b1, b2)`: the extreme eigenvalues of the frame
/// operator `S = sum_i u_i u_i^T`. A rank-deficient family is not a frame.
pub fn frame_operator_bounds(frame: &Frame) -> Result<(f64, f64)> {
    let s = frame.columns() * frame.columns().transpose();
    let (values, _) = linops::sym_eigen(&s)?;
    let b1 = values[0].max(0.0);
    let b2 = values[values.len() - 1].max(0.0);
    if b1 <= 1e-10 * b2.max(1.0) {
        return Err(Error::RankDeficient(
            "not a frame: the elements do not span the space (lower bound is zero)".into(),
        ));
    }
    Ok((b1, b2))
}

/// Coherence: largest absolute inner product between distinct elements,
/// normalized by their norms, in `[0, 1]`.
pub fn coherence(frame: &Frame) -> Result<f64> {
    let m = frame.len();
    if m < 2 {
        return Err(Error::invalid("coherence needs at least two frame elements"));
    }
    let norms: Vec<f64> = (0..m).map(|j| frame.columns.column(j).norm()).collect();
    if norms.iter().any(|&n| n <= f64::MIN_POSITIVE.sqrt()) {
        return Err(Error::invalid("coherence is undefined for zero frame elements"));
    }
    let mut best = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            let ip = frame.columns.column(i).dot(&frame.columns.column(j)).abs();
            best = best.max(ip / (norms[i] * norms[j]));
        }
    }
    Ok(best.min(1.0))
}

/// Welch lower bound on the coherence of `M` unit vectors in dimension `N`:
/// `sqrt((M - N) / (N (M - 1)))`.
pub fn welch_bound(m: usize, n: usize) -> Result<f64> {
    if n == 0 || m < 2 {
        return Err(Error::invalid("welch bound needs M >= 2 and N >= 1"));
    }
    if m < n {
        return Err(Error::invalid("welch bound needs M >= N (the formula turns negative)"));
    }
    Ok(((m - n) as f64 / (n as f64 * (m - 1) as f64)).sqrt())
}

/// Report of an equiangular-tight-frame test.
#[derive(Debug, Clone)]
pub struct EtfReport {
    pub is_etf: bool,
    pub equiangular: bool,
    pub tight: bool,
    pub coherence: f64,
    pub welch_bound: f64,
    /// `coherence - welch_bound` (zero exactly for an optimal Grassmannian
    /// frame; such frames need `M <= N(N+1)/2` and may not exist).
    pub coherence_gap: f64,
    /// Spread `max - min` of the pairwise absolute inner products.
    pub angle_spread: f64,
    pub frame_bounds: (f64, f64),
}

/// Test a unit-norm frame for equiangularity (all pairwise `|<u_i, u_j>|`
/// equal within `tol`) and tightness (`b1 = b2` within `tol`, relatively).
pub fn is_equiangular_tight(frame: &Frame, tol: f64) -> Result<EtfReport> {
    frame.require_unit_norm("equiangular-tight test")?;
    let m = frame.len();
    if m < 2 {
        return Err(Error::invalid("equiangular-tight test needs at least two elements"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            let ip = frame.columns.column(i).dot(&frame.columns.column(j)).abs();
            lo = lo.min(ip);
            hi = hi.max(ip);
        }
    }
    let (b1, b2) = frame_operator_bounds(frame)?;
    let equiangular = hi - lo <= tol;
    let tight = (b2 - b1).abs() <= tol * b2.max(1.0);
    let mu = coherence(frame)?;
    let welch = welch_bound(m, frame.dim())?;
    Ok(EtfReport {
        is_etf: equiangular && tight,
        equiangular,
        tight,
        coherence: mu,
        welch_bound: welch,
        coherence_gap: mu - welch,
        angle_spread: hi - lo,
        frame_bounds: (b1, b2),
    })
}

/// Guard for the exhaustive RIP search.
const RIP_SUBSET_CAP: f64 = 1e6;

/// Exact restricted-isometry constant of order `K` for a unit-norm frame:
/// the maximum over all `K`-subsets `S` of `||U_S^T U_S - I||_2`. Exhaustive
/// by design; refuses when `C(M, K)` exceeds `1e6`.
pub fn rip_constant_exact(frame: &Frame, k: usize) -> Result<f64> {
    frame.require_unit_norm("exact RIP constant")?;
    let m = frame.len();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("subset size {k} must be in [1, {m}]")));
    }
    let combos = binomial(m, k);
    if combos > RIP_SUBSET_CAP {
        return Err(Error::CombinatorialGuard(format!(
            "C({m}, {k}) = {combos:.3e} exceeds the exact-RIP cap of {RIP_SUBSET_CAP:.0e}"
        )));
    }
    let gram = frame.columns.transpose() * &frame.columns;
    let mut delta = 0.0f64;
    let mut sub = Mat::zeros(k, k);
    for subset in (0..m).combinations(k) {
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate() {
                sub[(a, b)] = gram[(i, j)] - if a == b { 1.0 } else { 0.0 };
            }
        }
        let (values, _) = linops::sym_eigen(&sub)?;
        let spectral = values[0].abs().max(values[values.len() - 1].abs());
        delta = delta.max(spectral);
    }
    Ok(delta)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
        if acc > 1e18 {
            return acc;
        }
    }
    acc
}

/// Gershgorin upper bound on the RIP constant: `(K - 1) * coherence`.
pub fn rip_gershgorin_bound(frame: &Frame, k: usize) -> Result<f64> {
    if k <= 1 {
        return Ok(0.0);
    }
    Ok((k - 1) as f64 * coherence(frame)?)
}

/// Distance of the Gram matrix to the nearest admissible ETF target `G`
/// (unit diagonal, off-diagonals bounded by `gram_cap` in magnitude):
/// a hinge penalty `sum_{i != j} max(0, |g_ij| - cap)^2 + sum_i (g_ii - 1)^2`.
/// `gram_cap` defaults to the Welch bound.
pub fn etf_penalty(frame: &Frame, gram_cap: Option<f64>) -> Result<f64> {
    let m = frame.len();
    let cap = match gram_cap {
        Some(c) => {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid("gram_cap must lie in [0, 1]"));
            }
            c
        }
        None => welch_bound(m, frame.dim())?,
    };
    let gram = frame.columns.transpose() * &frame.columns;
    let mut penalty = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                penalty += (gram[(i, i)] - 1.0).powi(2);
            } else {
                penalty += (gram[(i, j)].abs() - cap).max(0.0).powi(2);
            }
        }
    }
    Ok(penalty)
}
