//! Principal angles and ground distances between subspaces.
//!
//! A [`Subspace`] is a point of the Grassmannian `Gr(dim, ambient_dim)`,
//! stored as an orthonormal basis. All distances here derive from the
//! principal angles `0 <= theta_1 <= ... <= theta_k <= pi/2` between two
//! subspaces, obtained from the singular values of the cross-Gram of the
//! bases: `sigma_k = cos(theta_k)`.
//!
//! Grounds with a true-metric structure: geodesic, chordal, projection,
//! Fubini-Study, Binet-Cauchy. Pseudo-distances (they can vanish on distinct
//! subspaces or fail separability): chordal 2-norm, projection 2-norm,
//! spectral. The atom-level Frobenius distance is a metric of the embedding
//! space, not of the Grassmannian, and is sign- and rotation-sensitive.

use crate::linops::{self, Mat};
use crate::{Error, Result};

/// An element of `Gr(dim, ambient_dim)`: an `ambient_dim x dim` matrix with
/// orthonormal columns spanning the subspace.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Mat,
}

impl Subspace {
    /// Wrap an already-orthonormal basis. Fails if `basis^T basis` deviates
    /// from the identity by more than `1e-10` or if `dim` is not in
    /// `[1, ambient_dim]`.
    pub fn new(basis: Mat) -> Result<Self> {
        let (n, k) = (basis.nrows(), basis.ncols());
        if k == 0 || k > n {
            return Err(Error::shape(format!("subspace dim {k} must be in [1, {n}]")));
        }
        let gram = basis.transpose() * &basis;
        let dev = (&gram - Mat::identity(k, k)).amax();
        if dev > 1e-10 {
            return Err(Error::invalid(format!(
                "basis columns are not orthonormal (max deviation {dev:.3e})"
            )));
        }
        Ok(Subspace { basis })
    }

    /// Orthonormalize the columns of an arbitrary matrix and take their span;
    /// the subspace dimension is the numerical rank at `rank_tol`.
    pub fn from_span(m: &Mat, rank_tol: f64) -> Result<Self> {
        let basis = linops::orthonormal_basis(m, rank_tol)?;
        Ok(Subspace { basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Mat {
        &self.basis
    }

    /// Orthogonal projector `B B^T` onto the subspace.
    pub fn projector(&self) -> Mat {
        &self.basis * self.basis.transpose()
    }
}

/// Principal angles between two subspaces, radians, nondecreasing, all in
/// `[0, pi/2]`. There are `min(dim_u, dim_w)` of them.
#[derive(Debug, Clone)]
pub struct PrincipalAngles {
    angles: Vec<f64>,
    cosines: Vec<f64>,
}

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Cosines of the angles (the clamped singular values of the cross-Gram),
    /// nonincreasing.
    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

fn check_same_ambient(u: &Subspace, w: &Subspace) -> Result<()> {
    if u.ambient_dim() != w.ambient_dim() {
        return Err(Error::shape(format!(
            "subspaces live in different ambient spaces ({} vs {})",
            u.ambient_dim(),
            w.ambient_dim()
        )));
    }
    Ok(())
}

/// Principal angles from the SVD of the cross-Gram `U^T W`, singular values
/// clamped into `[0, 1]` before `acos`.
pub fn principal_angles(u: &Subspace, w: &Subspace) -> Result<PrincipalAngles> {
    check_same_ambient(u, w)?;
    let gram = u.basis().transpose() * w.basis();
    let fact = linops::svd(&gram)?;
    let cosines: Vec<f64> = fact.singular_values.iter().map(|&s| s.clamp(0.0, 1.0)).collect();
    let mut angles: Vec<f64> = cosines.iter().map(|&c| c.acos()).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    Ok(PrincipalAngles { angles, cosines })
}

/// Geodesic (arc-length) distance `||theta||_2`, in `[0, pi sqrt(k) / 2]`.
pub fn geodesic(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    Ok(pa.angles().iter().map(|t| t * t).sum::<f64>().sqrt())
}

/// Chordal distance `||sin theta||_2`.
///
/// For equal-dimension pairs this is evaluated through the projector
/// embedding `||U U^T - W W^T||_F / sqrt(2)`, which keeps full precision for
/// nearly identical spans (the angle and Gram forms lose half the digits
/// there); unequal dimensions fall back to the angle form.
pub fn chordal(u: &Subspace, w: &Subspace) -> Result<f64> {
    if u.dim() == w.dim() {
        chordal_via_projectors(u, w)
    } else {
        chordal_via_angles(u, w)
    }
}

/// Chordal distance from principal angles, `sqrt(sum sin^2 theta_k)`.
pub fn chordal_via_angles(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    Ok(pa.angles().iter().map(|t| t.sin().powi(2)).sum::<f64>().sqrt())
}

/// Chordal distance via the cross-Gram, `sqrt(k - ||U^T W||_F^2)`; equal
/// dimensions only.
pub fn chordal_via_gram(u: &Subspace, w: &Subspace) -> Result<f64> {
    check_same_ambient(u, w)?;
    if u.dim() != w.dim() {
        return Err(Error::shape("gram form of the chordal distance needs equal subspace dims"));
    }
    let gram = u.basis().transpose() * w.basis();
    Ok((u.dim() as f64 - gram.norm_squared()).max(0.0).sqrt())
}

/// Chordal distance via projectors, `||U U^T - W W^T||_F / sqrt(2)`; equal
/// dimensions only.
pub fn chordal_via_projectors(u: &Subspace, w: &Subspace) -> Result<f64> {
    check_same_ambient(u, w)?;
    if u.dim() != w.dim() {
        return Err(Error::shape("projector form of the chordal distance needs equal subspace dims"));
    }
    Ok((u.projector() - w.projector()).norm() / std::f64::consts::SQRT_2)
}

/// Chordal 2-norm `||sin theta||_inf = sin theta_max`. Pseudo-metric: it
/// vanishes whenever the largest principal angle does, even on distinct
/// subspaces of the pairs' shared directions.
pub fn chordal_2norm(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    Ok(pa.angles().last().map_or(0.0, |t| t.sin()))
}

/// Projection distance `2 sqrt(sum sin^2(theta_k / 2))`.
pub fn projection(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    Ok(2.0 * pa.angles().iter().map(|t| (t / 2.0).sin().powi(2)).sum::<f64>().sqrt())
}

/// Projection 2-norm `2 sin(theta_max / 2)` (operator-norm form).
/// Pseudo-metric.
pub fn projection_2norm(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    Ok(pa.angles().last().map_or(0.0, |t| 2.0 * (t / 2.0).sin()))
}

/// Fubini-Study distance `arccos(prod cos theta_k)` (the absolute
/// determinant of the cross-Gram, so basis orientation cannot flip the
/// sign); equal dimensions only.
pub fn fubini_study(u: &Subspace, w: &Subspace) -> Result<f64> {
    check_same_ambient(u, w)?;
    if u.dim() != w.dim() {
        return Err(Error::shape("fubini-study distance needs equal subspace dims"));
    }
    let pa = principal_angles(u, w)?;
    let prod: f64 = pa.cosines().iter().product();
    Ok(prod.clamp(0.0, 1.0).acos())
}

/// Spectral pseudo-distance `min_k sin theta_k = sqrt(1 - sigma_max^2)`.
/// Not a metric: it vanishes as soon as the subspaces share one direction.
pub fn spectral(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    let sigma_max = pa.cosines().first().copied().unwrap_or(0.0);
    Ok((1.0 - sigma_max * sigma_max).max(0.0).sqrt())
}

/// Binet-Cauchy distance `sqrt(1 - prod cos^2 theta_k)`.
pub fn binet_cauchy(u: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(u, w)?;
    let prod: f64 = pa.cosines().iter().map(|c| c * c).product();
    Ok((1.0 - prod).max(0.0).sqrt())
}

/// Frobenius distance between unit-norm multivariate atoms,
/// `sqrt(2 - 2 <a, b>_F)` with the inner product clamped into `[-1, 1]`.
/// Sign- and rotation-sensitive; a Euclidean metric, not a Grassmannian one.
pub fn atom_frobenius_distance(a: &Mat, b: &Mat) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::shape(format!(
            "atoms have different shapes ({}x{} vs {}x{})",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let ip = a.dot(b).clamp(-1.0, 1.0);
    Ok((2.0 - 2.0 * ip).max(0.0).sqrt())
}

/// Span of a multivariate atom as a subspace; the subspace dimension is the
/// numerical rank of the atom at `rank_tol`.
pub fn subspace_of(atom: &Mat, rank_tol: f64) -> Result<Subspace> {
    Subspace::from_span(atom, rank_tol).map_err(|e| match e {
        Error::EmptySpan(_) => Error::EmptySpan("atom is numerically zero".into()),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::DEFAULT_RANK_TOL;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn line(phi: f64) -> Subspace {
        Subspace::new(Mat::from_row_slice(2, 1, &[phi.cos(), phi.sin()])).unwrap()
    }

    fn coord_plane(n: usize, axes: &[usize]) -> Subspace {
        let mut m = Mat::zeros(n, axes.len());
        for (j, &ax) in axes.iter().enumerate() {
            m[(ax, j)] = 1.0;
        }
        Subspace::new(m).unwrap()
    }

    fn random_subspace(rng: &mut impl Rng, n: usize, k: usize) -> Subspace {
        loop {
            let m = Mat::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
            if let Ok(s) = Subspace::from_span(&m, DEFAULT_RANK_TOL) {
                if s.dim() == k {
                    return s;
                }
            }
        }
    }

    #[test]
    fn principal_angles_identical_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_subspace(&mut rng, 6, 3);
        let pa = principal_angles(&u, &u).unwrap();
        for &t in pa.angles() {
            assert!(t.abs() < 1e-7);
        }
    }

    #[test]
    fn principal_angles_planar_lines() {
        let pa = principal_angles(&line(0.0), &line(0.3)).unwrap();
        assert_eq!(pa.len(), 1);
        assert!((pa.angles()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn principal_angles_shared_and_orthogonal() {
        let u = coord_plane(4, &[0, 1]);
        let w = coord_plane(4, &[0, 2]);
        let pa = principal_angles(&u, &w).unwrap();
        assert!((pa.angles()[0] - 0.0).abs() < 1e-12);
        assert!((pa.angles()[1] - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn principal_angles_ambient_mismatch() {
        let u = coord_plane(3, &[0]);
        let w = coord_plane(4, &[0]);
        assert!(matches!(principal_angles(&u, &w), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn geodesic_cases() {
        let u = coord_plane(4, &[0, 1]);
        assert!(geodesic(&u, &u).unwrap() < 1e-7);
        let e1 = coord_plane(2, &[0]);
        let e2 = coord_plane(2, &[1]);
        assert!((geodesic(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-12);
        let w = coord_plane(4, &[2, 3]);
        assert!((geodesic(&u, &w).unwrap() - PI * SQRT_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn chordal_cases() {
        let u = coord_plane(4, &[0, 1]);
        let w = coord_plane(4, &[0, 2]);
        assert!(chordal(&u, &u).unwrap() < 1e-12);
        assert!((chordal(&u, &w).unwrap() - 1.0).abs() < 1e-12);
        let v = coord_plane(4, &[2, 3]);
        assert!((chordal(&u, &v).unwrap() - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn chordal_three_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u = random_subspace(&mut rng, 8, 3);
            let w = random_subspace(&mut rng, 8, 3);
            let a = chordal_via_angles(&u, &w).unwrap();
            let g = chordal_via_gram(&u, &w).unwrap();
            let p = chordal_via_projectors(&u, &w).unwrap();
            assert!((a - g).abs() < 1e-8, "angle {a} vs gram {g}");
            assert!((a - p).abs() < 1e-8, "angle {a} vs projector {p}");
        }
    }

    #[test]
    fn chordal_2norm_cases() {
        let u = coord_plane(3, &[0, 1]);
        let w = coord_plane(3, &[0, 2]);
        assert!(chordal_2norm(&u, &u).unwrap() < 1e-7);
        assert!((chordal_2norm(&u, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((chordal_2norm(&line(0.0), &line(0.4)).unwrap() - 0.4f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn projection_cases() {
        let e1 = coord_plane(2, &[0]);
        let e2 = coord_plane(2, &[1]);
        assert!(projection(&e1, &e1).unwrap() < 1e-7);
        assert!((projection(&e1, &e2).unwrap() - SQRT_2).abs() < 1e-12);
        assert!((projection(&line(0.0), &line(0.5)).unwrap() - 2.0 * 0.25f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn projection_2norm_cases() {
        let e1 = coord_plane(2, &[0]);
        let e2 = coord_plane(2, &[1]);
        assert!(projection_2norm(&e1, &e1).unwrap() < 1e-7);
        assert!((projection_2norm(&e1, &e2).unwrap() - SQRT_2).abs() < 1e-12);
        assert!((projection_2norm(&line(0.0), &line(0.5)).unwrap() - 2.0 * 0.25f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn fubini_study_cases() {
        let e1 = coord_plane(2, &[0]);
        let e2 = coord_plane(2, &[1]);
        assert!(fubini_study(&e1, &e1).unwrap() < 1e-7);
        assert!((fubini_study(&e1, &e2).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((fubini_study(&line(0.0), &line(0.3)).unwrap() - 0.3).abs() < 1e-9);
        let u = coord_plane(3, &[0, 1]);
        assert!(matches!(fubini_study(&u, &e1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn fubini_study_orientation_invariance() {
        // Flipping one basis column must not flip the determinant's sign.
        let u = coord_plane(3, &[0, 1]);
        let mut flipped = u.basis().clone();
        flipped.column_mut(0).scale_mut(-1.0);
        let w = Subspace::new(flipped).unwrap();
        assert!(fubini_study(&u, &w).unwrap() < 1e-7);
    }

    #[test]
    fn spectral_cases() {
        let u = coord_plane(4, &[0, 1]);
        let w = coord_plane(4, &[0, 2]);
        assert!(spectral(&u, &u).unwrap() < 1e-7);
        assert!(spectral(&u, &w).unwrap() < 1e-12, "shared direction gives 0");
        let e1 = coord_plane(2, &[0]);
        let e2 = coord_plane(2, &[1]);
        assert!((spectral(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binet_cauchy_cases() {
        let u = coord_plane(4, &[0, 1]);
        let w = coord_plane(4, &[0, 2]);
        assert!(binet_cauchy(&u, &u).unwrap() < 1e-7);
        assert!((binet_cauchy(&u, &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((binet_cauchy(&line(0.0), &line(0.3)).unwrap() - 0.3f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn atom_frobenius_cases() {
        let a = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(atom_frobenius_distance(&a, &a).unwrap() < 1e-6);
        assert!((atom_frobenius_distance(&a, &(-&a)).unwrap() - 2.0).abs() < 1e-12);
        assert!((atom_frobenius_distance(&a, &b).unwrap() - SQRT_2).abs() < 1e-12);
        let c = Mat::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(matches!(atom_frobenius_distance(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn subspace_of_cases() {
        // Orthonormal-column atom maps to its own span.
        let a = coord_plane(4, &[0, 2]).basis().clone();
        let s = subspace_of(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(chordal(&s, &coord_plane(4, &[0, 2])).unwrap() < 1e-12);

        // Duplicated column drops the rank by one.
        let mut dup = Mat::zeros(4, 3);
        dup[(0, 0)] = 1.0;
        dup[(1, 1)] = 1.0;
        dup[(0, 2)] = 1.0;
        let s = subspace_of(&dup, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(s.dim(), 2);

        // Rank-1 atom.
        let r1 = Mat::from_fn(4, 3, |i, _| if i == 1 { 2.0 } else { 0.0 });
        assert_eq!(subspace_of(&r1, DEFAULT_RANK_TOL).unwrap().dim(), 1);

        // Zero atom errors.
        assert!(matches!(subspace_of(&Mat::zeros(4, 3), DEFAULT_RANK_TOL), Err(Error::EmptySpan(_))));
    }

    #[test]
    fn right_invariance_under_linear_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let raw = Mat::from_fn(8, 3, |_, _| rng.gen_range(-1.0..1.0));
            let t = loop {
                let t = Mat::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
                if t.determinant().abs() > 0.1 {
                    break t;
                }
            };
            let u = subspace_of(&raw, DEFAULT_RANK_TOL).unwrap();
            let w = subspace_of(&(&raw * &t), DEFAULT_RANK_TOL).unwrap();
            assert!(chordal(&u, &w).unwrap() <= 1e-9, "chordal keeps full precision");
            assert!(geodesic(&u, &w).unwrap() <= 1e-6);
            assert!(projection(&u, &w).unwrap() <= 1e-6);
            assert!(fubini_study(&u, &w).unwrap() <= 1e-6);
            assert!(binet_cauchy(&u, &w).unwrap() <= 1e-6);
            assert!(spectral(&u, &w).unwrap() <= 1e-6);
            assert!(chordal_2norm(&u, &w).unwrap() <= 1e-6);
            assert!(projection_2norm(&u, &w).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn bounds_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let k = rng.gen_range(1..=3);
            let u = random_subspace(&mut rng, 8, k);
            let w = random_subspace(&mut rng, 8, k);
            let pa = principal_angles(&u, &w).unwrap();
            for pair in pa.angles().windows(2) {
                assert!(pair[0] <= pair[1] + 1e-12);
            }
            for &t in pa.angles() {
                assert!((-1e-12..=FRAC_PI_2 + 1e-12).contains(&t));
            }
            let kf = k as f64;
            let c = chordal(&u, &w).unwrap();
            let g = geodesic(&u, &w).unwrap();
            assert!(c <= kf.sqrt() + 1e-12);
            assert!(g <= PI * kf.sqrt() / 2.0 + 1e-12);
            assert!(c <= g + 1e-12, "sin t <= t implies chordal <= geodesic");
            assert!((0.0..=1.0 + 1e-12).contains(&binet_cauchy(&u, &w).unwrap()));
            assert!((0.0..=1.0 + 1e-12).contains(&spectral(&u, &w).unwrap()));
            assert!((0.0..=FRAC_PI_2 + 1e-12).contains(&fubini_study(&u, &w).unwrap()));
        }
    }

    #[test]
    fn metric_axioms_sample() {
        type D = fn(&Subspace, &Subspace) -> Result<f64>;
        let dists: [(&str, D); 4] = [
            ("geodesic", geodesic),
            ("chordal", chordal),
            ("fubini_study", fubini_study),
            ("binet_cauchy", binet_cauchy),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let u = random_subspace(&mut rng, 8, 3);
            let w = random_subspace(&mut rng, 8, 3);
            let z = random_subspace(&mut rng, 8, 3);
            for (name, d) in dists {
                let uw = d(&u, &w).unwrap();
                let wu = d(&w, &u).unwrap();
                let uz = d(&u, &z).unwrap();
                let zw = d(&z, &w).unwrap();
                assert!((uw - wu).abs() <= 1e-9, "{name} symmetry");
                assert!(uw <= uz + zw + 1e-9, "{name} triangle inequality");
                assert!(d(&u, &u).unwrap() <= 1e-6, "{name} identity");
            }
        }
    }
}
