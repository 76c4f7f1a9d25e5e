//! SVD-thresholding operators and the adaptive nuclear norm.
//!
//! For `Y = U diag(d) V^T`:
//!
//! * hard:     `U diag(d_i 1{d_i > lambda}) V^T`, minimizes `||Y - C||^2 + lambda^2 rank(C)`
//! * soft:     `U diag((d_i - lambda)_+) V^T`, minimizes `1/2 ||Y - C||^2 + lambda ||C||_*`
//! * adaptive: `U diag((d_i - lambda w_i)_+) V^T`, globally minimizes
//!   `1/2 ||Y - C||^2 + lambda sum_i w_i d_i(C)` whenever `w` is non-decreasing,
//!   even though that penalty is not convex.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{distance_sq, singular_values, thin_svd, Matrix, Svd, Tolerances};

/// Non-negative, non-decreasing penalty weights.
///
/// An entry of `f64::INFINITY` marks a direction whose reference singular
/// value is zero: any positive penalty level forces it out of the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    values: Vec<f64>,
    gamma: Option<f64>,
}

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_order(&values, Tolerances::default().weight_order)?;
        Ok(Self { values, gamma: None })
    }

    pub fn uniform(len: usize) -> Self {
        Self { values: vec![1.0; len], gamma: Some(0.0) }
    }

    /// `w_i = d_i^(-gamma)`, with zero singular values flagged infinite.
    /// `gamma = 0` gives unit weights regardless of `d`.
    pub fn from_singular_values(d: &[f64], gamma: f64, rank_rel: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return invalid(format!("gamma must be a finite non-negative number, got {gamma}"));
        }
        if gamma == 0.0 {
            return Ok(Self::uniform(d.len()));
        }
        let d1 = d.first().copied().unwrap_or(0.0);
        let values = d
            .iter()
            .map(|&di| {
                if d1 > 0.0 && di > rank_rel * d1 {
                    di.powf(-gamma)
                } else {
                    f64::INFINITY
                }
            })
            .collect::<Vec<_>>();
        // d is sorted, so the powers are sorted up to rounding; clean the jitter.
        let mut clean = values;
        for i in 1..clean.len() {
            if clean[i] < clean[i - 1] {
                clean[i] = clean[i - 1];
            }
        }
        Ok(Self { values: clean, gamma: Some(gamma) })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn is_infinite(&self, i: usize) -> bool {
        self.values[i].is_infinite()
    }
}

fn validate_order(values: &[f64], slack: f64) -> Result<()> {
    for (i, &w) in values.iter().enumerate() {
        if w.is_nan() || w < 0.0 {
            return Err(Error::WeightOrder { index: i, prev: w, next: w });
        }
        if i > 0 {
            let prev = values[i - 1];
            if w < prev - slack * prev.abs().max(1.0) {
                return Err(Error::WeightOrder { index: i - 1, prev, next: w });
            }
        }
    }
    Ok(())
}

/// Weights driven by the singular values of `reference`.
pub fn adaptive_weights(reference: &Matrix, gamma: f64) -> Result<Weights> {
    let d = singular_values(reference)?;
    Weights::from_singular_values(d.as_slice(), gamma, Tolerances::default().rank_rel)
}

pub fn hard_values(d: &[f64], lambda: f64) -> Vec<f64> {
    d.iter().map(|&di| if di > lambda { di } else { 0.0 }).collect()
}

pub fn soft_values(d: &[f64], lambda: f64) -> Vec<f64> {
    d.iter().map(|&di| (di - lambda).max(0.0)).collect()
}

/// `(d_i - lambda w_i)_+`; weights beyond `w.len()` and infinite weights
/// zero the value when `lambda > 0`. At `lambda = 0` weights are ignored.
pub fn adaptive_values(d: &[f64], lambda: f64, w: &[f64]) -> Vec<f64> {
    if lambda == 0.0 {
        return d.to_vec();
    }
    d.iter()
        .enumerate()
        .map(|(i, &di)| match w.get(i) {
            Some(&wi) if wi.is_finite() => (di - lambda * wi).max(0.0),
            _ => 0.0,
        })
        .collect()
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        invalid(format!("penalty level must be finite and non-negative, got {lambda}"))
    }
}

/// Which operator to apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule<'a> {
    Hard(f64),
    Soft(f64),
    Adaptive(f64, &'a Weights),
}

/// Result of thresholding, with the spectra before and after.
#[derive(Debug, Clone)]
pub struct Thresholded {
    pub matrix: Matrix,
    pub original: Vec<f64>,
    pub thresholded: Vec<f64>,
    pub rank: usize,
    pub svd: Svd,
}

pub fn threshold(y: &Matrix, rule: Rule<'_>) -> Result<Thresholded> {
    let svd = thin_svd(y)?;
    let d = svd.d.as_slice();
    let values = match rule {
        Rule::Hard(l) => {
            check_lambda(l)?;
            hard_values(d, l)
        }
        Rule::Soft(l) => {
            check_lambda(l)?;
            soft_values(d, l)
        }
        Rule::Adaptive(l, w) => {
            check_lambda(l)?;
            if w.len() != d.len() {
                return Err(Error::Shape(format!(
                    "weight vector has length {}, expected min(rows, cols) = {}",
                    w.len(),
                    d.len()
                )));
            }
            validate_order(w.as_slice(), Tolerances::default().weight_order)?;
            adaptive_values(d, l, w.as_slice())
        }
    };
    let rank = values.iter().filter(|&&g| g > 0.0).count();
    Ok(Thresholded {
        matrix: svd.compose(&values),
        original: d.to_vec(),
        thresholded: values,
        rank,
        svd,
    })
}

pub fn hsvt(y: &Matrix, lambda: f64) -> Result<Matrix> {
    threshold(y, Rule::Hard(lambda)).map(|t| t.matrix)
}

pub fn ssvt(y: &Matrix, lambda: f64) -> Result<Matrix> {
    threshold(y, Rule::Soft(lambda)).map(|t| t.matrix)
}

pub fn asvt(y: &Matrix, lambda: f64, w: &Weights) -> Result<Matrix> {
    threshold(y, Rule::Adaptive(lambda, w)).map(|t| t.matrix)
}

/// `sum_i w_i d_i(c)` for arbitrary non-negative weights (no order needed).
/// An infinite weight contributes nothing on a numerically zero singular
/// value and `+inf` otherwise.
pub fn adaptive_nuclear_norm(c: &Matrix, w: &[f64]) -> Result<f64> {
    let d = singular_values(c)?;
    if w.len() != d.len() {
        return Err(Error::Shape(format!(
            "weight vector has length {}, expected {}",
            w.len(),
            d.len()
        )));
    }
    Ok(weighted_sum(d.as_slice(), w))
}

pub(crate) fn weighted_sum(d: &[f64], w: &[f64]) -> f64 {
    let zero = Tolerances::default().rank_rel * d.first().copied().unwrap_or(0.0);
    d.iter()
        .zip(w)
        .map(|(&di, &wi)| {
            if wi.is_infinite() {
                if di <= zero {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                wi * di
            }
        })
        .sum()
}

pub fn nuclear_norm(c: &Matrix) -> Result<f64> {
    Ok(singular_values(c)?.sum())
}

/// `||y - c||^2 + lambda^2 rank(c)`.
pub fn rank_penalized_objective(y: &Matrix, c: &Matrix, lambda: f64) -> Result<f64> {
    let d = singular_values(c)?;
    let r = crate::linalg::rank_of_values(d.as_slice(), Tolerances::default().rank_rel);
    Ok(distance_sq(y, c) + lambda * lambda * r as f64)
}

/// `1/2 ||y - c||^2 + lambda sum_i w_i d_i(c)`.
pub fn ann_objective(y: &Matrix, c: &Matrix, lambda: f64, w: &[f64]) -> Result<f64> {
    let pen = adaptive_nuclear_norm(c, w)?;
    let pen = if lambda == 0.0 { 0.0 } else { lambda * pen };
    Ok(0.5 * distance_sq(y, c) + pen)
}

/// `1/2 ||y - c||^2 + lambda ||c||_*`.
pub fn nuclear_objective(y: &Matrix, c: &Matrix, lambda: f64) -> Result<f64> {
    Ok(0.5 * distance_sq(y, c) + lambda * nuclear_norm(c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix_rank, sym_eig, Vector};
    use crate::rng::{normal_matrix, substream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&Vector::from_vec(v.to_vec()))
    }

    #[test]
    fn hsvt_examples() {
        assert_relative_eq!(hsvt(&diag(&[3.0, 1.0]), 2.0).unwrap(), diag(&[3.0, 0.0]), epsilon = 1e-14);
        let y = normal_matrix(4, 5, &mut substream(1, 0));
        assert_relative_eq!(hsvt(&y, 0.0).unwrap(), y, epsilon = 1e-12);
        // equality is dropped
        assert_relative_eq!(hsvt(&diag(&[3.0, 1.0]), 1.0).unwrap(), diag(&[3.0, 0.0]), epsilon = 1e-14);
    }

    /// Best rank-k approximation through the eigenvectors of `Y^T Y`,
    /// independent of the SVD route used by the operators.
    fn eckart_young(y: &Matrix, k: usize) -> Matrix {
        let (_, v) = sym_eig(&(y.transpose() * y)).unwrap();
        let vk = v.columns(0, k);
        y * vk * vk.transpose()
    }

    #[test]
    fn hsvt_beats_rank_k_candidates() {
        let mut rng = substream(2, 0);
        for _ in 0..20 {
            let y = normal_matrix(4, 4, &mut rng);
            let d = singular_values(&y).unwrap();
            let lambda = 0.5 * (d[0] + d[1]);
            let h = hsvt(&y, lambda).unwrap();
            assert_relative_eq!(h, eckart_young(&y, 1), epsilon = 1e-10);
            let obj = rank_penalized_objective(&y, &h, lambda).unwrap();
            for k in 0..=4 {
                let cand = eckart_young(&y, k);
                let other = rank_penalized_objective(&y, &cand, lambda).unwrap();
                assert!(obj <= other + 1e-9, "k={k}: {obj} > {other}");
            }
        }
    }

    #[test]
    fn ssvt_examples() {
        assert_relative_eq!(ssvt(&diag(&[3.0, 1.0]), 1.0).unwrap(), diag(&[2.0, 0.0]), epsilon = 1e-14);
        let y = normal_matrix(3, 4, &mut substream(3, 0));
        let d1 = thin_svd(&y).unwrap().d[0];
        assert_eq!(ssvt(&y, d1).unwrap().norm(), 0.0);
        assert_eq!(ssvt(&y, 2.0 * d1).unwrap().norm(), 0.0);
    }

    #[test]
    fn ssvt_is_locally_optimal() {
        let mut rng = substream(4, 0);
        let y = normal_matrix(3, 3, &mut rng);
        let lambda = 0.5;
        let c = ssvt(&y, lambda).unwrap();
        let base = nuclear_objective(&y, &c, lambda).unwrap();
        for _ in 0..1000 {
            let dir = normal_matrix(3, 3, &mut rng);
            for eps in [1e-3, 1e-4] {
                let moved = &c + &dir * eps;
                assert!(base <= nuclear_objective(&y, &moved, lambda).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn asvt_examples() {
        let w = Weights::new(vec![0.5, 1.0]).unwrap();
        assert_relative_eq!(asvt(&diag(&[4.0, 2.0]), 1.0, &w).unwrap(), diag(&[3.5, 1.0]), epsilon = 1e-14);

        let y = normal_matrix(4, 3, &mut substream(5, 0));
        assert_eq!(asvt(&y, 0.7, &Weights::uniform(3)).unwrap(), ssvt(&y, 0.7).unwrap());
    }

    #[test]
    fn asvt_rejects_bad_weights() {
        let y = diag(&[4.0, 2.0]);
        let bad = Weights { values: vec![1.0, 0.5], gamma: None };
        assert!(matches!(asvt(&y, 1.0, &bad), Err(Error::WeightOrder { .. })));
        assert!(matches!(Weights::new(vec![1.0, 0.5]), Err(Error::WeightOrder { .. })));
        assert!(matches!(Weights::new(vec![-1.0, 0.5]), Err(Error::WeightOrder { .. })));
        assert!(matches!(asvt(&y, 1.0, &Weights::uniform(3)), Err(Error::Shape(_))));
        assert!(asvt(&y, -1.0, &Weights::uniform(2)).is_err());
        // jitter inside the tolerance is accepted
        assert!(Weights::new(vec![1.0, 1.0 - 1e-14]).is_ok());
    }

    /// Objective at `U diag(g) V^T`, evaluated by forming the matrix.
    fn frame_objective(y: &Matrix, svd: &Svd, g: &[f64], lambda: f64, w: &[f64]) -> f64 {
        ann_objective(y, &svd.compose(g), lambda, w).unwrap()
    }

    #[test]
    fn asvt_beats_grid_and_random_rivals() {
        let mut rng = substream(6, 0);
        let y = normal_matrix(3, 3, &mut rng);
        let w = Weights::new(vec![0.2, 0.6, 1.5]).unwrap();
        let lambda = 1.0;
        let c = asvt(&y, lambda, &w).unwrap();
        let best = ann_objective(&y, &c, lambda, w.as_slice()).unwrap();
        let svd = thin_svd(&y).unwrap();
        let d1 = svd.d[0];
        let m = 24;
        for a in 0..=m {
            for b in 0..=m {
                for e in 0..=m {
                    let g = [a, b, e].map(|k| d1 * k as f64 / m as f64);
                    let rival = frame_objective(&y, &svd, &g, lambda, w.as_slice());
                    assert!(best <= rival + 1e-9);
                }
            }
        }
        for _ in 0..10_000 {
            let rival = &c + normal_matrix(3, 3, &mut rng) * 0.05;
            let value = ann_objective(&y, &rival, lambda, w.as_slice()).unwrap();
            assert!(best <= value + 1e-9);
        }
    }

    #[test]
    fn adaptive_nuclear_norm_counterexample_values() {
        let w = [1.0, 2.0];
        let c1 = diag(&[2.0, 1.0]);
        let c2 = diag(&[1.0, 2.0]);
        assert_relative_eq!(adaptive_nuclear_norm(&c1, &w).unwrap(), 4.0, epsilon = 1e-14);
        assert_relative_eq!(adaptive_nuclear_norm(&c2, &w).unwrap(), 4.0, epsilon = 1e-14);
        assert_relative_eq!(adaptive_nuclear_norm(&(-&c2), &w).unwrap(), 4.0, epsilon = 1e-14);
        let mid = (&c1 + &c2) / 2.0;
        assert_relative_eq!(adaptive_nuclear_norm(&mid, &w).unwrap(), 4.5, epsilon = 1e-14);
        let half_diff = (&c1 - &c2) / 2.0;
        assert_relative_eq!(adaptive_nuclear_norm(&half_diff, &w).unwrap(), 1.5, epsilon = 1e-14);

        let y = normal_matrix(3, 5, &mut substream(7, 0));
        assert_relative_eq!(
            adaptive_nuclear_norm(&y, &[1.0; 3]).unwrap(),
            nuclear_norm(&y).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn weights_from_singular_values() {
        let w = Weights::from_singular_values(&[4.0, 2.0, 1.0], 1.0, 1e-10).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.5, 1.0]);
        let w = Weights::from_singular_values(&[4.0, 2.0, 0.0], 0.0, 1e-10).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0, 1.0]);
        let w = Weights::from_singular_values(&[5.0, 3.0, 0.0], 2.0, 1e-10).unwrap();
        assert_relative_eq!(w.as_slice()[0], 0.04, epsilon = 1e-15);
        assert_relative_eq!(w.as_slice()[1], 1.0 / 9.0, epsilon = 1e-15);
        assert!(w.is_infinite(2));
        assert!(Weights::from_singular_values(&[1.0], -1.0, 1e-10).is_err());
    }

    #[test]
    fn infinite_weights_zero_their_direction() {
        let mut rng = substream(8, 0);
        for _ in 0..20 {
            // rank-2 reference: third singular value is zero
            let reference = normal_matrix(4, 2, &mut rng) * normal_matrix(2, 3, &mut rng);
            let w = adaptive_weights(&reference, 2.0).unwrap();
            assert!(w.is_infinite(2));
            let y = normal_matrix(4, 3, &mut rng) * 3.0;
            let t = threshold(&y, Rule::Adaptive(0.01, &w)).unwrap();
            assert_eq!(t.thresholded[2], 0.0);
            assert!(matrix_rank(&t.matrix, 1e-10).unwrap() <= 2);
            // lambda = 0 ignores weights entirely
            let t0 = threshold(&y, Rule::Adaptive(0.0, &w)).unwrap();
            assert_relative_eq!(t0.matrix, y, epsilon = 1e-11);
        }
    }

    #[test]
    fn adaptive_weights_from_matrix() {
        let w = adaptive_weights(&diag(&[4.0, 2.0, 1.0]), 1.0).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.5, 1.0]);
        assert_eq!(w.gamma(), Some(1.0));
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0..3.0f64, rows * cols)
            .prop_map(move |v| Matrix::from_vec(rows, cols, v))
    }

    fn sorted_weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0..2.0f64, len).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    }

    proptest! {
        #[test]
        fn asvt_spectrum_is_shifted_spectrum(
            y in matrix_strategy(4, 3),
            w in sorted_weights(3),
            lambda in 0.0..2.0f64,
        ) {
            let w = Weights::new(w).unwrap();
            let t = threshold(&y, Rule::Adaptive(lambda, &w)).unwrap();
            let got = singular_values(&t.matrix).unwrap();
            for i in 0..3 {
                let expect = (t.original[i] - lambda * w.as_slice()[i]).max(0.0);
                prop_assert!((got[i] - expect).abs() <= 1e-10 * (1.0 + t.original[0]));
            }
            for i in 1..3 {
                prop_assert!(t.thresholded[i] <= t.thresholded[i - 1]);
            }
        }

        #[test]
        fn asvt_shrinks_at_least_as_much_as_min_weight_ssvt(
            y in matrix_strategy(3, 4),
            w in sorted_weights(3),
            lambda in 0.0..2.0f64,
        ) {
            let w = Weights::new(w).unwrap();
            let a = singular_values(&asvt(&y, lambda, &w).unwrap()).unwrap();
            let s = singular_values(&ssvt(&y, lambda * w.as_slice()[0]).unwrap()).unwrap();
            for i in 0..3 {
                prop_assert!(a[i] <= s[i] + 1e-10);
            }
        }

        #[test]
        fn frobenius_equals_singular_value_energy(y in matrix_strategy(5, 3)) {
            let d = singular_values(&y).unwrap();
            let energy: f64 = d.iter().map(|x| x * x).sum();
            prop_assert!((energy - y.norm_squared()).abs() <= 1e-10 * y.norm_squared().max(1e-300));
        }

        #[test]
        fn von_neumann_trace_inequality(a in matrix_strategy(4, 3), b in matrix_strategy(4, 3)) {
            let da = singular_values(&a).unwrap();
            let db = singular_values(&b).unwrap();
            let bound: f64 = da.iter().zip(db.iter()).map(|(x, y)| x * y).sum();
            prop_assert!((&a * b.transpose()).trace() <= bound + 1e-8);
        }

        #[test]
        fn weyl_perturbation(a in matrix_strategy(4, 4), b in matrix_strategy(4, 4)) {
            let da = singular_values(&a).unwrap();
            let dab = singular_values(&(&a + &b)).unwrap();
            let db1 = singular_values(&b).unwrap()[0];
            for i in 0..4 {
                prop_assert!((dab[i] - da[i]).abs() <= db1 + 1e-10);
            }
        }

        #[test]
        fn non_increasing_weights_give_midpoint_convexity(
            a in matrix_strategy(3, 3),
            b in matrix_strategy(3, 3),
            mut w in sorted_weights(3),
        ) {
            w.reverse();
            let mid = adaptive_nuclear_norm(&((&a + &b) / 2.0), &w).unwrap();
            let avg = 0.5 * (adaptive_nuclear_norm(&a, &w).unwrap() + adaptive_nuclear_norm(&b, &w).unwrap());
            prop_assert!(mid <= avg + 1e-9);
        }
    }
}
