//! Set-level distances between dictionaries: Hausdorff and Wasserstein over
//! a configurable ground distance, plus the paper-style rescaled scores.
//!
//! A dictionary maps to a weighted set of points: the spans of its atoms
//! (elements of a Grassmannian) for the subspace grounds, or the atoms
//! themselves for the Frobenius ground. Hausdorff compares supports;
//! Wasserstein solves exact optimal transport between the weights — the
//! Hungarian algorithm for uniform equal-cardinality sets, the
//! transportation simplex for general weights, and threshold bisection with
//! a max-flow feasibility check for `p = inf`. No entropic approximations.

mod assignment;
mod bottleneck;
mod simplex;

use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

use crate::dictlearn::Dictionary;
use crate::grassmann::{self, Subspace};
use crate::linops::{Mat, DEFAULT_RANK_TOL};
use crate::{Error, Result};

/// Closed enumeration of ground distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ground {
    Geodesic,
    Chordal,
    /// `sin(theta_max)`; pseudo-metric.
    Chordal2,
    Projection,
    /// `2 sin(theta_max / 2)`; pseudo-metric.
    Projection2,
    FubiniStudy,
    /// `min_k sin(theta_k)`; pseudo-distance.
    Spectral,
    BinetCauchy,
    /// Atom-level Euclidean distance; a metric of the embedding space but
    /// not of the Grassmannian (sign- and rotation-sensitive).
    Frobenius,
}

impl Ground {
    pub const ALL: [Ground; 9] = [
        Ground::Geodesic,
        Ground::Chordal,
        Ground::Chordal2,
        Ground::Projection,
        Ground::Projection2,
        Ground::FubiniStudy,
        Ground::Spectral,
        Ground::BinetCauchy,
        Ground::Frobenius,
    ];

    /// Whether the ground satisfies all three metric axioms on its domain.
    /// Axiom-dependent callers can refuse the pseudo-metrics.
    pub fn is_metric(self) -> bool {
        !matches!(self, Ground::Chordal2 | Ground::Projection2 | Ground::Spectral | Ground::Frobenius)
    }

    /// Ground distances that compare atoms directly instead of their spans.
    pub fn uses_atoms(self) -> bool {
        matches!(self, Ground::Frobenius)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ground::Geodesic => "geodesic",
            Ground::Chordal => "chordal",
            Ground::Chordal2 => "chordal2",
            Ground::Projection => "projection",
            Ground::Projection2 => "projection2",
            Ground::FubiniStudy => "fubini",
            Ground::Spectral => "spectral",
            Ground::BinetCauchy => "binetcauchy",
            Ground::Frobenius => "frobenius",
        }
    }

    /// Largest attainable value on `Gr(rho, .)` (or on unit-norm atom pairs
    /// restricted to the rescaling's domain for `frobenius`); used as the cap
    /// of [`normalized_score`].
    pub fn rescale_cap(self, rho: usize) -> f64 {
        let rho = rho as f64;
        match self {
            Ground::Geodesic => std::f64::consts::PI * rho.sqrt() / 2.0,
            Ground::Chordal => rho.sqrt(),
            Ground::Chordal2 => 1.0,
            Ground::Projection => std::f64::consts::SQRT_2 * rho.sqrt(),
            Ground::Projection2 => std::f64::consts::SQRT_2,
            Ground::FubiniStudy => std::f64::consts::FRAC_PI_2,
            Ground::Spectral => 1.0,
            Ground::BinetCauchy => 1.0,
            Ground::Frobenius => std::f64::consts::SQRT_2,
        }
    }

    /// Ground distance between two subspaces (all grounds except
    /// `frobenius`).
    pub fn between_subspaces(self, u: &Subspace, w: &Subspace) -> Result<f64> {
        match self {
            Ground::Geodesic => grassmann::geodesic(u, w),
            Ground::Chordal => grassmann::chordal(u, w),
            Ground::Chordal2 => grassmann::chordal_2norm(u, w),
            Ground::Projection => grassmann::projection(u, w),
            Ground::Projection2 => grassmann::projection_2norm(u, w),
            Ground::FubiniStudy => grassmann::fubini_study(u, w),
            Ground::Spectral => grassmann::spectral(u, w),
            Ground::BinetCauchy => grassmann::binet_cauchy(u, w),
            Ground::Frobenius => Err(Error::invalid("frobenius ground compares atoms, not subspaces")),
        }
    }
}

impl fmt::Display for Ground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ground {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ground::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown ground distance `{s}`")))
    }
}

/// Which set-level metric compares the point sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetMetric {
    Hausdorff,
    Wasserstein,
}

impl SetMetric {
    pub fn name(self) -> &'static str {
        match self {
            SetMetric::Hausdorff => "hausdorff",
            SetMetric::Wasserstein => "wasserstein",
        }
    }
}

impl fmt::Display for SetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SetMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hausdorff" => Ok(SetMetric::Hausdorff),
            "wasserstein" => Ok(SetMetric::Wasserstein),
            other => Err(Error::invalid(format!("unknown set metric `{other}`"))),
        }
    }
}

/// The points of a measure set: subspaces for Grassmannian grounds, raw
/// atoms for the Frobenius ground.
#[derive(Debug, Clone)]
pub enum SetPoints {
    Subspaces(Vec<Subspace>),
    Atoms(Vec<Mat>),
}

impl SetPoints {
    fn len(&self) -> usize {
        match self {
            SetPoints::Subspaces(v) => v.len(),
            SetPoints::Atoms(v) => v.len(),
        }
    }
}

/// A finite weighted point set (a discrete measure). Weights are
/// nonnegative and sum to one; multiset semantics, duplicate points are
/// kept.
#[derive(Debug, Clone)]
pub struct DiscreteMeasureSet {
    points: SetPoints,
    weights: Vec<f64>,
}

impl DiscreteMeasureSet {
    pub fn new(points: SetPoints, weights: Vec<f64>) -> Result<Self> {
        if points.len() == 0 {
            return Err(Error::EmptySet("a measure set needs at least one point".into()));
        }
        if weights.len() != points.len() {
            return Err(Error::shape(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasureSet { points, weights })
    }

    /// Uniform measure on the given points.
    pub fn uniform(points: SetPoints) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptySet("a measure set needs at least one point".into()));
        }
        let w = 1.0 / n as f64;
        DiscreteMeasureSet::new(points, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> &SetPoints {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A coupling between two discrete measures: nonnegative, row sums equal the
/// source weights, column sums the target weights (within `1e-9`).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    matrix: Mat,
}

impl TransportPlan {
    fn checked(matrix: Mat, source: &[f64], target: &[f64]) -> Result<Self> {
        for (i, &s) in source.iter().enumerate() {
            let row: f64 = matrix.row(i).iter().sum();
            if (row - s).abs() > 1e-9 {
                return Err(Error::invalid(format!("plan row {i} sums to {row}, expected {s}")));
            }
        }
        for (j, &t) in target.iter().enumerate() {
            let col: f64 = matrix.column(j).iter().sum();
            if (col - t).abs() > 1e-9 {
                return Err(Error::invalid(format!("plan column {j} sums to {col}, expected {t}")));
            }
        }
        if matrix.iter().any(|&x| x < -1e-12) {
            return Err(Error::invalid("plan has negative mass"));
        }
        Ok(TransportPlan { matrix })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }
}

/// Pairwise ground-distance matrix `D[i][j] = d(a_i, b_j)`.
pub fn pairwise_ground(
    set_a: &DiscreteMeasureSet,
    set_b: &DiscreteMeasureSet,
    ground: Ground,
) -> Result<Mat> {
    match (set_a.points(), set_b.points()) {
        (SetPoints::Atoms(pa), SetPoints::Atoms(pb)) => {
            if !ground.uses_atoms() {
                return Err(Error::invalid(format!(
                    "ground `{ground}` compares subspaces but the sets hold atoms"
                )));
            }
            fill_pairwise(pa.len(), pb.len(), |i, j| grassmann::atom_frobenius_distance(&pa[i], &pb[j]))
        }
        (SetPoints::Subspaces(pa), SetPoints::Subspaces(pb)) => {
            if ground.uses_atoms() {
                return Err(Error::invalid(
                    "frobenius ground compares atoms but the sets hold subspaces",
                ));
            }
            if ground == Ground::Chordal
                && pa.iter().chain(pb.iter()).map(Subspace::dim).all(|d| d == pa[0].dim())
            {
                // Projector embedding: build each projector once, then the
                // fill is a cheap Frobenius difference per pair.
                let proj_a: Vec<Mat> = pa.iter().map(Subspace::projector).collect();
                let proj_b: Vec<Mat> = pb.iter().map(Subspace::projector).collect();
                return fill_pairwise(pa.len(), pb.len(), |i, j| {
                    Ok((&proj_a[i] - &proj_b[j]).norm() / std::f64::consts::SQRT_2)
                });
            }
            fill_pairwise(pa.len(), pb.len(), |i, j| ground.between_subspaces(&pa[i], &pb[j]))
        }
        _ => Err(Error::invalid("cannot mix atom sets and subspace sets")),
    }
}

fn fill_pairwise<F>(rows: usize, cols: usize, f: F) -> Result<Mat>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let entries: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| (0..cols).map(|j| f(i, j)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut d = Mat::zeros(rows, cols);
    for (i, row) in entries.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

/// Hausdorff distance between the supports:
/// `max(max_i min_j D_ij, max_j min_i D_ij)`. Weights are ignored.
pub fn hausdorff(set_a: &DiscreteMeasureSet, set_b: &DiscreteMeasureSet, ground: Ground) -> Result<f64> {
    let d = pairwise_ground(set_a, set_b, ground)?;
    hausdorff_from_matrix(&d)
}

/// Hausdorff distance from a precomputed ground matrix.
pub fn hausdorff_from_matrix(d: &Mat) -> Result<f64> {
    if d.nrows() == 0 || d.ncols() == 0 {
        return Err(Error::EmptySet("hausdorff needs nonempty sets".into()));
    }
    let a_to_b = (0..d.nrows())
        .map(|i| d.row(i).iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let b_to_a = (0..d.ncols())
        .map(|j| d.column(j).iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    Ok(a_to_b.max(b_to_a))
}

/// Wasserstein distance of order `p` (use [`f64::INFINITY`] for the
/// bottleneck form).
pub fn wasserstein(
    set_a: &DiscreteMeasureSet,
    set_b: &DiscreteMeasureSet,
    ground: Ground,
    p: f64,
) -> Result<f64> {
    wasserstein_with_plan(set_a, set_b, ground, p).map(|(d, _)| d)
}

/// As [`wasserstein`], also returning the optimal coupling.
pub fn wasserstein_with_plan(
    set_a: &DiscreteMeasureSet,
    set_b: &DiscreteMeasureSet,
    ground: Ground,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    let d = pairwise_ground(set_a, set_b, ground)?;
    wasserstein_from_matrix(&d, set_a.weights(), set_b.weights(), p)
}

/// Wasserstein distance from a precomputed ground matrix and weights.
///
/// For `p >= 1` returns `(min_plan sum pi_ij D_ij^p)^(1/p)`; for
/// `0 < p < 1` the root is omitted (the powered cost is itself a metric);
/// for `p = inf` returns the exact bottleneck value.
pub fn wasserstein_from_matrix(
    d: &Mat,
    weights_a: &[f64],
    weights_b: &[f64],
    p: f64,
) -> Result<(f64, TransportPlan)> {
    if d.nrows() == 0 || d.ncols() == 0 {
        return Err(Error::EmptySet("wasserstein needs nonempty sets".into()));
    }
    if weights_a.len() != d.nrows() || weights_b.len() != d.ncols() {
        return Err(Error::shape("weights do not match the ground matrix"));
    }
    if p.is_nan() || p <= 0.0 {
        return Err(Error::invalid("wasserstein order p must be positive or infinite"));
    }
    if p.is_infinite() {
        let sol = bottleneck::solve(d, weights_a, weights_b)?;
        let plan = TransportPlan::checked(sol.plan, weights_a, weights_b)?;
        return Ok((sol.value, plan));
    }

    let powered = if (p - 1.0).abs() < 1e-15 { d.clone() } else { d.map(|x| x.powf(p)) };
    let n = d.nrows();
    let uniform = weights_a.len() == weights_b.len()
        && {
            let w = 1.0 / n as f64;
            weights_a.iter().chain(weights_b.iter()).all(|&x| (x - w).abs() <= 1e-15)
        };
    let (objective, plan) = if uniform {
        // Uniform equal-cardinality case is an assignment problem.
        let (col_of_row, total) = assignment::solve(&powered);
        let mut plan = Mat::zeros(n, n);
        for (i, &j) in col_of_row.iter().enumerate() {
            plan[(i, j)] = 1.0 / n as f64;
        }
        (total / n as f64, plan)
    } else {
        let sol = simplex::solve(&powered, weights_a, weights_b)?;
        (sol.objective, sol.plan)
    };
    let plan = TransportPlan::checked(plan, weights_a, weights_b)?;
    let value = if p >= 1.0 { objective.powf(1.0 / p) } else { objective };
    Ok((value.max(0.0), plan))
}

/// Distance between two dictionaries: atoms map to their spans (or stay
/// atoms for the Frobenius ground), uniform weights, then the chosen set
/// metric. `p` is only meaningful for Wasserstein.
pub fn dictionary_distance(
    dict_a: &Dictionary,
    dict_b: &Dictionary,
    ground: Ground,
    set_metric: SetMetric,
    p: f64,
) -> Result<f64> {
    if dict_a.sample_len() != dict_b.sample_len()
        || dict_a.component_count() != dict_b.component_count()
    {
        return Err(Error::shape("dictionaries have different atom shapes"));
    }
    let set_a = measure_set_of(dict_a, ground)?;
    let set_b = measure_set_of(dict_b, ground)?;
    match set_metric {
        SetMetric::Hausdorff => hausdorff(&set_a, &set_b, ground),
        SetMetric::Wasserstein => wasserstein(&set_a, &set_b, ground, p),
    }
}

/// The measure set a dictionary induces under a ground distance: uniform
/// weights over atom spans, or over the atoms themselves for `frobenius`.
pub fn measure_set_of(dict: &Dictionary, ground: Ground) -> Result<DiscreteMeasureSet> {
    if ground.uses_atoms() {
        DiscreteMeasureSet::uniform(SetPoints::Atoms(dict.atoms().to_vec()))
    } else {
        DiscreteMeasureSet::uniform(SetPoints::Subspaces(dict.subspaces(DEFAULT_RANK_TOL)?))
    }
}

/// Rescale a set distance into a percentage: `(cap - d) / cap * 100` with
/// the ground's maximal value as cap (`sqrt(rho)` for chordal, `sqrt(2)` for
/// frobenius, and analogous caps for the other grounds). Inputs outside
/// `[0, cap]` are an error.
pub fn normalized_score(d: f64, ground: Ground, rho: usize) -> Result<f64> {
    let cap = ground.rescale_cap(rho);
    if !d.is_finite() || d < -1e-9 || d > cap + 1e-9 {
        return Err(Error::invalid(format!(
            "distance {d} outside [0, {cap}] for ground `{ground}`"
        )));
    }
    Ok(((cap - d) / cap * 100.0).clamp(0.0, 100.0))
}
