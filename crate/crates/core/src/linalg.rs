//! Dense matrix substrate: thin SVD, symmetric eigendecomposition,
//! Moore-Penrose inverse, column-space projectors and numerical rank.
//!
//! The SVD and eigen kernels are nalgebra's (Golub-Kahan bidiagonalization
//! with implicit-shift QR, and symmetric tridiagonal QR). This module fixes
//! the ordering, sign and tolerance conventions the rest of the crate
//! relies on.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Every numerical tolerance used by the crate, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Convergence threshold handed to the SVD / eigen kernels.
    pub kernel_eps: f64,
    /// Iteration cap for the SVD / eigen kernels; `0` means unbounded.
    pub kernel_max_iter: usize,
    /// Relative asymmetry accepted by [`sym_eig`].
    pub symmetry_rel: f64,
    /// Singular values below `pinv_rel * d1` are inverted to zero.
    pub pinv_rel: f64,
    /// Singular values below `rank_rel * d1` do not count towards rank.
    pub rank_rel: f64,
    /// Slack when validating that weights are non-decreasing.
    pub weight_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kernel_eps: f64::EPSILON,
            kernel_max_iter: 10_000,
            symmetry_rel: 1e-8,
            pinv_rel: 1e-12,
            rank_rel: 1e-10,
            weight_order: 1e-12,
        }
    }
}

/// Thin SVD `m = u * diag(d) * v^T` with `h = min(rows, cols)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Matrix,
    pub d: Vector,
    pub v: Matrix,
}

impl Svd {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// `u * diag(values) * v^T`; `values` may be shorter than `d`.
    pub fn compose(&self, values: &[f64]) -> Matrix {
        let k = values.len().min(self.len());
        let mut scaled = self.u.columns(0, k).into_owned();
        for (j, &g) in values.iter().take(k).enumerate() {
            scaled.column_mut(j).scale_mut(g);
        }
        scaled * self.v.columns(0, k).transpose()
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(self.d.as_slice())
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        rank_of_values(self.d.as_slice(), rel_tol)
    }
}

/// Number of values strictly above `rel_tol * values[0]` (values sorted).
pub fn rank_of_values(values: &[f64], rel_tol: f64) -> usize {
    match values.first() {
        Some(&d1) if d1 > 0.0 => values.iter().filter(|&&d| d > rel_tol * d1).count(),
        _ => 0,
    }
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_nonempty(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return invalid(format!("empty {}x{} matrix", m.nrows(), m.ncols()));
    }
    Ok(())
}

/// Flip each column so its first entry of non-negligible magnitude is positive.
/// Returns the signs applied so paired factors can follow.
fn canonical_signs(m: &mut Matrix) -> Vec<f64> {
    let mut signs = Vec::with_capacity(m.ncols());
    for mut col in m.column_iter_mut() {
        let scale = col.amax();
        let sign = col
            .iter()
            .find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE))
            .map_or(1.0, |&x| if x < 0.0 { -1.0 } else { 1.0 });
        if sign < 0.0 {
            col.neg_mut();
        }
        signs.push(sign);
    }
    signs
}

pub fn thin_svd(m: &Matrix) -> Result<Svd> {
    thin_svd_with(m, &Tolerances::default())
}

pub fn thin_svd_with(m: &Matrix, tol: &Tolerances) -> Result<Svd> {
    ensure_nonempty(m)?;
    ensure_finite(m)?;
    let svd = SVD::try_new(m.clone(), true, true, tol.kernel_eps, tol.kernel_max_iter)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "SVD of {}x{} matrix did not converge in {} iterations",
                m.nrows(),
                m.ncols(),
                tol.kernel_max_iter
            ))
        })?;
    let mut u = svd.u.expect("u requested");
    let mut v = svd.v_t.expect("v requested").transpose();
    let d = svd.singular_values;
    let signs = canonical_signs(&mut u);
    for (j, s) in signs.into_iter().enumerate() {
        if s < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }
    Ok(Svd { u, d, v })
}

/// Singular values only, non-increasing.
pub fn singular_values(m: &Matrix) -> Result<Vector> {
    ensure_nonempty(m)?;
    ensure_finite(m)?;
    let tol = Tolerances::default();
    SVD::try_new(m.clone(), false, false, tol.kernel_eps, tol.kernel_max_iter)
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::Numerical("singular value iteration did not converge".into()))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.
pub fn sym_eig(m: &Matrix) -> Result<(Vector, Matrix)> {
    sym_eig_with(m, &Tolerances::default())
}

pub fn sym_eig_with(m: &Matrix, tol: &Tolerances) -> Result<(Vector, Matrix)> {
    ensure_nonempty(m)?;
    ensure_finite(m)?;
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = (m - m.transpose()).norm();
    let scale = m.norm();
    if asym > tol.symmetry_rel * scale {
        return Err(Error::NotSymmetric(asym / scale));
    }
    let eig = SymmetricEigen::try_new(m.clone(), tol.kernel_eps, tol.kernel_max_iter)
        .ok_or_else(|| Error::Numerical("symmetric eigen iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Vector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    canonical_signs(&mut vectors);
    Ok((values, vectors))
}

/// Moore-Penrose inverse; singular values `<= rel_tol * d1` are treated as zero.
pub fn pseudo_inverse(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return invalid(format!("pseudo-inverse tolerance must lie in (0, 1), got {rel_tol}"));
    }
    let svd = thin_svd(m)?;
    let r = svd.rank(rel_tol);
    let mut vs = svd.v.columns(0, r).into_owned();
    for j in 0..r {
        vs.column_mut(j).scale_mut(1.0 / svd.d[j]);
    }
    Ok(vs * svd.u.columns(0, r).transpose())
}

/// Orthogonal projector onto the column space of `x`.
pub fn projector(x: &Matrix) -> Result<Matrix> {
    let svd = thin_svd(x)?;
    let r = svd.rank(Tolerances::default().rank_rel);
    let ur = svd.u.columns(0, r);
    Ok(ur * ur.transpose())
}

pub fn matrix_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    Ok(rank_of_values(singular_values(m)?.as_slice(), rel_tol))
}

pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.norm_squared()
}

/// `||a - b||_F^2` without allocating the difference.
pub fn distance_sq(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_matrix;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_of_diagonal() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0]));
        let s = thin_svd(&m).unwrap();
        assert_eq!(s.d.as_slice(), &[3.0, 1.0]);
        assert_relative_eq!(s.u, Matrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(s.v, Matrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let s = thin_svd(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(s.d.as_slice(), &[0.0, 0.0]);
        assert_eq!(s.rank(1e-10), 0);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = normal_matrix(5, 3, &mut rng);
        let s = thin_svd(&m).unwrap();
        let err = (&m - s.reconstruct()).norm() / m.norm();
        assert!(err < 1e-10, "reconstruction error {err}");
        let (ev, _) = sym_eig(&(m.transpose() * &m)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(s.d[i] * s.d[i], ev[i], max_relative = 1e-10);
        }
        assert_relative_eq!(s.u.transpose() * &s.u, Matrix::identity(3, 3), epsilon = 1e-12);
        assert_relative_eq!(s.v.transpose() * &s.v, Matrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn wide_matrix_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = normal_matrix(3, 7, &mut rng);
        let s = thin_svd(&m).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (7, 3));
        assert!((&m - s.reconstruct()).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn svd_is_sign_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = normal_matrix(6, 4, &mut rng);
        let a = thin_svd(&m).unwrap();
        let b = thin_svd(&(-&m)).unwrap();
        for j in 0..4 {
            let first = a.u.column(j).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
        assert_eq!(a.u, b.u);
        assert_relative_eq!(a.v, -b.v, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert_eq!(thin_svd(&m), Err(Error::NonFinite));
        m[(0, 1)] = f64::INFINITY;
        assert_eq!(matrix_rank(&m, 1e-10), Err(Error::NonFinite));
    }

    #[test]
    fn eig_diagonal_and_identity() {
        let (ev, _) = sym_eig(&Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 4.0]))).unwrap();
        assert_eq!(ev.as_slice(), &[4.0, 1.0]);
        let (ev, vecs) = sym_eig(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(ev.as_slice(), &[1.0, 1.0, 1.0]);
        assert_relative_eq!(vecs.transpose() * vecs, Matrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn eig_residual_on_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = normal_matrix(3, 3, &mut rng);
        let m = &a + a.transpose();
        let (ev, v) = sym_eig(&m).unwrap();
        assert!(ev[0] >= ev[1] && ev[1] >= ev[2]);
        let lhs = &m * &v;
        let rhs = &v * Matrix::from_diagonal(&ev);
        assert!((lhs - rhs).norm() <= 1e-8 * m.norm());
        let t = v.transpose() * &m * &v;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(t[(i, j)].abs() < 1e-8 * m.norm());
                }
            }
        }
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::NotSymmetric(_))));
        let m = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig(&m), Err(Error::Shape(_))));
    }

    #[test]
    fn pinv_simple_cases() {
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudo_inverse(&m, 1e-12).unwrap();
        assert_relative_eq!(p, Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0])), epsilon = 1e-15);

        let m = Matrix::from_row_slice(2, 2, &[4.0, 7.0, 2.0, 6.0]);
        let inv = m.clone().try_inverse().unwrap();
        assert_relative_eq!(pseudo_inverse(&m, 1e-12).unwrap(), inv, epsilon = 1e-12);
        assert!(pseudo_inverse(&m, 0.0).is_err());
        assert!(pseudo_inverse(&m, 1.0).is_err());
    }

    #[test]
    fn pinv_penrose_identities_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = normal_matrix(4, 2, &mut rng) * normal_matrix(2, 3, &mut rng);
        assert_eq!(matrix_rank(&a, 1e-10).unwrap(), 2);
        let g = pseudo_inverse(&a, 1e-12).unwrap();
        let scale = a.norm() * g.norm();
        assert!((&a * &g * &a - &a).norm() <= 1e-8 * a.norm());
        assert!((&g * &a * &g - &g).norm() <= 1e-8 * g.norm());
        let ag = &a * &g;
        let ga = &g * &a;
        assert!((&ag - ag.transpose()).norm() <= 1e-8 * scale);
        assert!((&ga - ga.transpose()).norm() <= 1e-8 * scale);
    }

    #[test]
    fn projector_cases() {
        assert_relative_eq!(projector(&Matrix::identity(4, 4)).unwrap(), Matrix::identity(4, 4), epsilon = 1e-14);

        let x = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let p = projector(&x).unwrap();
        assert_relative_eq!(p, &x * x.transpose() / 9.0, epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = normal_matrix(8, 3, &mut rng) * normal_matrix(3, 5, &mut rng);
        let p = projector(&x).unwrap();
        assert!((p.trace() - 3.0).abs() < 1e-6);
        assert!((&p - p.transpose()).norm() < 1e-12);
        assert!((&p * &p - &p).norm() <= 1e-8 * 8.0);
        assert!((&p * &x - &x).norm() <= 1e-8 * x.norm());
        assert_eq!(matrix_rank(&p, 1e-10).unwrap(), 3);
    }

    #[test]
    fn rank_cases() {
        assert_eq!(matrix_rank(&Matrix::zeros(3, 4), 1e-10).unwrap(), 0);
        assert_eq!(matrix_rank(&Matrix::identity(3, 3), 1e-10).unwrap(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let c = 0.7 * normal_matrix(25, 10, &mut rng) * normal_matrix(25, 10, &mut rng).transpose();
            assert_eq!(matrix_rank(&c, 1e-10).unwrap(), 10);
        }
    }
}
