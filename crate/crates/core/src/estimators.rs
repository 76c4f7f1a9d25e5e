//! Regression estimators for `Y = X C + E`.
//!
//! Every closed-form estimator is a thresholding of the singular values of the
//! least-squares fit `P Y = X C_ls`. Writing `P Y = U diag(d) V^T`, a new set of
//! singular values `g` maps back to coefficients through
//! `C = C_ls V diag(g / d) V^T`, with `g_i / d_i` read as zero when `d_i = 0`.
//!
//! | method | criterion                                                  | values       |
//! |--------|------------------------------------------------------------|--------------|
//! | RSC    | `1/2 ||Y - XC||^2 + lambda rank(C)`                        | hard at `sqrt(2 lambda)` |
//! | ANN    | `1/2 ||Y - XC||^2 + lambda sum w_i d_i(XC)`                | `(d_i - lambda w_i)_+` |
//! | RoANN  | ANN `+ lambda2/2 sum d_i(XC)^2`                            | ANN `/ (1 + lambda2)` |
//! | RoRR   | `1/2 ||Y - XC||^2 + lambda rank(C) + lambda2/2 ||C||^2`    | RSC on ridge-augmented data |
//! | NNP    | `1/2 ||Y - XC||^2 + lambda ||C||_*`                        | proximal gradient |

use std::fmt;
use std::str::FromStr;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    distance_sq, ensure_finite, pseudo_inverse, rank_of_values, singular_values, sym_eig,
    thin_svd, Matrix, Svd, Tolerances,
};
use crate::threshold::{adaptive_values, hard_values, soft_values, weighted_sum, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ols,
    Rsc,
    Nnp,
    Ann,
    Rorr,
    Roann,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ols,
        Method::Rsc,
        Method::Nnp,
        Method::Ann,
        Method::Rorr,
        Method::Roann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Rsc => "rsc",
            Method::Nnp => "nnp",
            Method::Ann => "ann",
            Method::Rorr => "rorr",
            Method::Roann => "roann",
        }
    }

    pub fn uses_lambda2(self) -> bool {
        matches!(self, Method::Rorr | Method::Roann)
    }

    pub fn uses_gamma(self) -> bool {
        matches!(self, Method::Ann | Method::Roann)
    }

    pub fn is_tuned(self) -> bool {
        self != Method::Ols
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnpOptions {
    pub max_iter: usize,
    /// Stop once the relative change of the objective falls below this.
    pub tol: f64,
    /// Nesterov momentum (FISTA) instead of plain proximal gradient.
    pub accelerate: bool,
}

impl Default for NnpOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-7, accelerate: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub lambda: f64,
    pub lambda2: f64,
    pub gamma: f64,
    /// Fixed weights for ANN / RoANN; when absent they are `d(PY)^(-gamma)`.
    pub weights: Option<Weights>,
    pub nnp: NnpOptions,
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            lambda: 0.0,
            lambda2: 0.0,
            gamma: 0.0,
            weights: None,
            nnp: NnpOptions::default(),
        }
    }

    pub fn ols() -> Self {
        Self::new(Method::Ols)
    }

    pub fn rsc(lambda: f64) -> Self {
        Self { lambda, ..Self::new(Method::Rsc) }
    }

    pub fn nnp(lambda: f64) -> Self {
        Self { lambda, ..Self::new(Method::Nnp) }
    }

    pub fn ann(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma, ..Self::new(Method::Ann) }
    }

    pub fn rorr(lambda: f64, lambda2: f64) -> Self {
        Self { lambda, lambda2, ..Self::new(Method::Rorr) }
    }

    pub fn roann(lambda: f64, lambda2: f64, gamma: f64) -> Self {
        Self { lambda, lambda2, gamma, ..Self::new(Method::Roann) }
    }

    pub fn with_weights(mut self, weights: Weights) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    pub fn with_lambda2(&self, lambda2: f64) -> Self {
        Self { lambda2, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                invalid(format!("{name} must be finite and non-negative, got {v}"))
            }
        };
        finite_nonneg("lambda", self.lambda)?;
        finite_nonneg("lambda2", self.lambda2)?;
        finite_nonneg("gamma", self.gamma)?;
        if self.nnp.max_iter == 0 {
            return invalid("nnp max_iter must be at least 1");
        }
        if !(self.nnp.tol > 0.0) {
            return invalid(format!("nnp tol must be positive, got {}", self.nnp.tol));
        }
        if let Some(w) = &self.weights {
            Weights::new(w.as_slice().to_vec())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub coefficients: Matrix,
    pub fitted: Matrix,
    pub estimated_rank: usize,
    /// Singular values of the fitted matrix `X C_hat`, non-increasing.
    pub singular_values_fitted: Vec<f64>,
    pub lambda_used: f64,
    pub lambda2_used: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    /// NNP only: first-order optimality residual at the returned solution.
    pub optimality_residual: Option<f64>,
    /// Value of the method's own penalized criterion at the solution.
    pub objective: f64,
}

fn check_data(y: &Matrix, x: &Matrix) -> Result<()> {
    if y.nrows() != x.nrows() {
        return Err(Error::Shape(format!(
            "Y has {} rows but X has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    if y.is_empty() || x.is_empty() {
        return Err(Error::Shape("empty response or design matrix".into()));
    }
    ensure_finite(y)?;
    ensure_finite(x)
}

/// Least-squares fit and the SVD of its fitted values.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Minimum-norm LS coefficients `(X^T X)^- X^T Y`.
    pub coefficients: Matrix,
    /// `P Y = X C_ls`.
    pub fitted: Matrix,
    pub svd: Svd,
    /// Singular values of `P Y` with those below the rank tolerance set to 0.
    pub values: Vec<f64>,
    pub rank: usize,
    /// `C_ls V D^+`, so coefficients for values `g` are `basis diag(g) V^T`.
    basis: Matrix,
}

impl LeastSquares {
    pub fn new(y: &Matrix, x: &Matrix) -> Result<Self> {
        check_data(y, x)?;
        let tol = Tolerances::default();
        let coefficients = pseudo_inverse(x, tol.pinv_rel)? * y;
        let fitted = x * &coefficients;
        let svd = thin_svd(&fitted)?;
        let rank = svd.rank(tol.rank_rel);
        let mut values = svd.d.as_slice().to_vec();
        values[rank..].iter_mut().for_each(|d| *d = 0.0);
        let mut basis = &coefficients * svd.v.columns(0, rank);
        for j in 0..rank {
            basis.column_mut(j).scale_mut(1.0 / values[j]);
        }
        Ok(Self { coefficients, fitted, svd, values, rank, basis })
    }

    /// Coefficients whose fitted values have singular values `g` along the
    /// singular vectors of `P Y`.
    pub fn coefficients_for(&self, g: &[f64]) -> Matrix {
        if g == self.values.as_slice() {
            return self.coefficients.clone();
        }
        let k = self.rank.min(g.len());
        let mut scaled = self.basis.columns(0, k).into_owned();
        for j in 0..k {
            scaled.column_mut(j).scale_mut(g[j]);
        }
        scaled * self.svd.v.columns(0, k).transpose()
    }

    /// `lambda` beyond which ANN with these weights returns zero.
    fn ann_null_level(&self, weights: &Weights) -> f64 {
        let w = weights.as_slice();
        self.values
            .iter()
            .zip(w)
            .filter(|(d, w)| **d > 0.0 && w.is_finite() && **w > 0.0)
            .map(|(d, w)| d / w)
            .fold(0.0, f64::max)
    }
}

/// Which formula applies `(X^T X + lambda2 I)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RidgeRoute {
    /// Cholesky of the `p x p` Gram matrix.
    Direct,
    /// `1/l2 I - 1/l2^2 X^T (I + X X^T / l2)^{-1} X`, an `n x n` solve.
    Woodbury,
}

impl RidgeRoute {
    /// Woodbury once the predictors outnumber twice the samples.
    pub fn for_shape(n: usize, p: usize) -> Self {
        if p > 2 * n {
            RidgeRoute::Woodbury
        } else {
            RidgeRoute::Direct
        }
    }
}

fn cholesky(m: Matrix, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// `(X^T X + lambda2 I)^{-1} rhs` for `rhs` with `p` rows.
pub fn ridge_apply(x: &Matrix, lambda2: f64, rhs: &Matrix, route: RidgeRoute) -> Result<Matrix> {
    if !(lambda2 > 0.0 && lambda2.is_finite()) {
        return invalid(format!("ridge penalty must be positive, got {lambda2}"));
    }
    let (n, p) = x.shape();
    match route {
        RidgeRoute::Direct => {
            let gram = x.transpose() * x + Matrix::identity(p, p) * lambda2;
            Ok(cholesky(gram, "X^T X + lambda2 I")?.solve(rhs))
        }
        RidgeRoute::Woodbury => {
            let inner = Matrix::identity(n, n) + x * x.transpose() / lambda2;
            let inner = cholesky(inner, "I + X X^T / lambda2")?;
            let correction = x.transpose() * inner.solve(&(x * rhs));
            Ok(rhs / lambda2 - correction / (lambda2 * lambda2))
        }
    }
}

/// Ridge-augmented LS fit: the RSC machinery applied to
/// `Y* = [Y; 0]`, `X* = [X; sqrt(lambda2) I]`, through the `q x q` matrix
/// `Y*^T P* Y* = Y^T X C_ridge`.
#[derive(Debug, Clone)]
pub struct RidgeDecomposition {
    pub lambda2: f64,
    pub route: RidgeRoute,
    /// `(X^T X + lambda2 I)^{-1} X^T Y`.
    pub coefficients: Matrix,
    /// Singular values of `X* C_ridge` (square roots of the eigenvalues).
    pub values: Vec<f64>,
    /// Right singular vectors of `X* C_ridge`, all `q` of them.
    pub v: Matrix,
}

impl RidgeDecomposition {
    pub fn new(y: &Matrix, x: &Matrix, lambda2: f64) -> Result<Self> {
        Self::with_route(y, x, lambda2, RidgeRoute::for_shape(x.nrows(), x.ncols()))
    }

    pub fn with_route(y: &Matrix, x: &Matrix, lambda2: f64, route: RidgeRoute) -> Result<Self> {
        check_data(y, x)?;
        let xty = x.transpose() * y;
        let coefficients = ridge_apply(x, lambda2, &xty, route)?;
        let gram = xty.transpose() * &coefficients;
        let gram = (&gram + gram.transpose()) * 0.5;
        let (eigenvalues, v) = sym_eig(&gram)?;
        let values = eigenvalues.iter().map(|&e| e.max(0.0).sqrt()).collect();
        Ok(Self { lambda2, route, coefficients, values, v })
    }

    /// Number of directions kept at rank penalty `lambda`.
    pub fn kept(&self, lambda: f64) -> usize {
        if lambda == 0.0 {
            return self.values.len();
        }
        let cut = (2.0 * lambda).sqrt();
        self.values.iter().filter(|&&d| d > cut).count()
    }

    pub fn coefficients_for(&self, lambda: f64) -> Matrix {
        let k = self.kept(lambda);
        if k == self.values.len() {
            return self.coefficients.clone();
        }
        let vk = self.v.columns(0, k);
        &self.coefficients * vk * vk.transpose()
    }
}

#[derive(Debug, Clone)]
enum Engine {
    LeastSquares { ls: LeastSquares, weights: Option<Weights> },
    Ridge(RidgeDecomposition),
    Nnp { xtx: Matrix, xty: Matrix, step: f64 },
}

/// A prepared estimator: the expensive decomposition is computed once and
/// fits for any penalty level `lambda` are derived from it.
#[derive(Debug, Clone)]
pub struct FitPath {
    y: Matrix,
    x: Matrix,
    config: EstimatorConfig,
    engine: Engine,
}

impl FitPath {
    /// Prepares `config.method` at `config.lambda2` / `config.gamma` /
    /// `config.weights`; `config.lambda` is ignored here.
    pub fn new(y: &Matrix, x: &Matrix, config: &EstimatorConfig) -> Result<Self> {
        config.validate()?;
        check_data(y, x)?;
        let engine = match config.method {
            Method::Rorr if config.lambda2 > 0.0 => {
                Engine::Ridge(RidgeDecomposition::new(y, x, config.lambda2)?)
            }
            Method::Nnp => {
                let d1 = singular_values(x)?[0];
                Engine::Nnp { xtx: x.transpose() * x, xty: x.transpose() * y, step: d1 * d1 }
            }
            method => {
                let ls = LeastSquares::new(y, x)?;
                let weights = if method.uses_gamma() {
                    Some(match &config.weights {
                        Some(w) => {
                            if w.len() < ls.rank {
                                return Err(Error::Shape(format!(
                                    "{} weights supplied but P Y has rank {}",
                                    w.len(),
                                    ls.rank
                                )));
                            }
                            w.clone()
                        }
                        None => Weights::from_singular_values(
                            &ls.values,
                            config.gamma,
                            Tolerances::default().rank_rel,
                        )?,
                    })
                } else {
                    None
                };
                Engine::LeastSquares { ls, weights }
            }
        };
        Ok(Self { y: y.clone(), x: x.clone(), config: config.clone(), engine })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn least_squares(&self) -> Option<&LeastSquares> {
        match &self.engine {
            Engine::LeastSquares { ls, .. } => Some(ls),
            _ => None,
        }
    }

    pub fn weights(&self) -> Option<&Weights> {
        match &self.engine {
            Engine::LeastSquares { weights, .. } => weights.as_ref(),
            _ => None,
        }
    }

    /// Smallest `lambda` at which the estimate is the zero matrix
    /// (0 for OLS, which has no penalty).
    pub fn lambda_max(&self) -> f64 {
        match (&self.engine, self.config.method) {
            (_, Method::Ols) => 0.0,
            (Engine::LeastSquares { ls, .. }, Method::Rsc | Method::Rorr) => {
                0.5 * ls.values[0] * ls.values[0]
            }
            (Engine::LeastSquares { ls, weights: Some(w) }, _) => ls.ann_null_level(w),
            (Engine::Ridge(r), _) => 0.5 * r.values[0] * r.values[0],
            (Engine::Nnp { xty, .. }, _) => singular_values(xty).map(|d| d[0]).unwrap_or(0.0),
            (Engine::LeastSquares { .. }, _) => 0.0,
        }
    }

    pub fn fit(&self, lambda: f64) -> Result<FitResult> {
        self.fit_from(lambda, None)
    }

    /// Fits every `lambda`; NNP walks the path from large to small penalty,
    /// warm-starting each solve at the previous solution.
    pub fn fit_many(&self, lambdas: &[f64]) -> Vec<Result<FitResult>> {
        if !matches!(self.engine, Engine::Nnp { .. }) {
            return lambdas.iter().map(|&l| self.fit(l)).collect();
        }
        let mut order: Vec<usize> = (0..lambdas.len()).collect();
        order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
        let mut out: Vec<Option<Result<FitResult>>> = vec![None; lambdas.len()];
        let mut warm: Option<Matrix> = None;
        for i in order {
            let res = self.fit_from(lambdas[i], warm.as_ref());
            if let Ok(f) = &res {
                warm = Some(f.coefficients.clone());
            }
            out[i] = Some(res);
        }
        out.into_iter().map(|r| r.expect("every index visited")).collect()
    }

    fn fit_from(&self, lambda: f64, warm: Option<&Matrix>) -> Result<FitResult> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        let method = self.config.method;
        let lambda2 = self.config.lambda2;
        match &self.engine {
            Engine::LeastSquares { ls, weights } => {
                let (values, penalty) = match method {
                    Method::Ols => (ls.values.clone(), 0.0),
                    Method::Rsc | Method::Rorr => {
                        let g = hard_values(&ls.values, (2.0 * lambda).sqrt());
                        let r = g.iter().filter(|&&v| v > 0.0).count();
                        (g, lambda * r as f64)
                    }
                    Method::Ann | Method::Roann => {
                        let w = weights.as_ref().expect("ANN path carries weights").as_slice();
                        let g = adaptive_values(&ls.values, lambda, w);
                        let pen = if lambda == 0.0 { 0.0 } else { lambda * weighted_sum(&g, w) };
                        (g, pen)
                    }
                    Method::Nnp => unreachable!("NNP uses its own engine"),
                };
                let mut coefficients = ls.coefficients_for(&values);
                let mut values = values;
                let mut penalty = penalty;
                if method == Method::Roann && lambda2 > 0.0 {
                    let scale = 1.0 + lambda2;
                    coefficients /= scale;
                    values.iter_mut().for_each(|g| *g /= scale);
                    let w = weights.as_ref().expect("ANN path carries weights").as_slice();
                    penalty = if lambda == 0.0 { 0.0 } else { lambda * weighted_sum(&values, w) };
                    penalty += 0.5 * lambda2 * values.iter().map(|g| g * g).sum::<f64>();
                }
                let fitted = &self.x * &coefficients;
                let objective = 0.5 * distance_sq(&self.y, &fitted) + penalty;
                Ok(FitResult {
                    method,
                    estimated_rank: values.iter().filter(|&&g| g > 0.0).count(),
                    singular_values_fitted: values,
                    coefficients,
                    fitted,
                    lambda_used: lambda,
                    lambda2_used: method.uses_lambda2().then_some(lambda2),
                    iterations: None,
                    converged: true,
                    optimality_residual: None,
                    objective,
                })
            }
            Engine::Ridge(ridge) => {
                let coefficients = ridge.coefficients_for(lambda);
                let kept = ridge.kept(lambda);
                let fitted = &self.x * &coefficients;
                let objective = 0.5 * distance_sq(&self.y, &fitted)
                    + lambda * kept as f64
                    + 0.5 * lambda2 * coefficients.norm_squared();
                let sv = singular_values(&fitted)?;
                Ok(FitResult {
                    method,
                    estimated_rank: rank_of_values(sv.as_slice(), Tolerances::default().rank_rel),
                    singular_values_fitted: sv.as_slice().to_vec(),
                    coefficients,
                    fitted,
                    lambda_used: lambda,
                    lambda2_used: Some(lambda2),
                    iterations: None,
                    converged: true,
                    optimality_residual: None,
                    objective,
                })
            }
            Engine::Nnp { xtx, xty, step } => {
                let sol = nnp_solve(&self.y, &self.x, xtx, xty, *step, lambda, &self.config.nnp, warm)?;
                let fitted = &self.x * &sol.coefficients;
                let sv = singular_values(&fitted)?;
                let residual = nnp_optimality_residual(&self.y, &self.x, &sol.coefficients, lambda)?;
                Ok(FitResult {
                    method,
                    estimated_rank: rank_of_values(sv.as_slice(), Tolerances::default().rank_rel),
                    singular_values_fitted: sv.as_slice().to_vec(),
                    coefficients: sol.coefficients,
                    fitted,
                    lambda_used: lambda,
                    lambda2_used: None,
                    iterations: Some(sol.iterations),
                    converged: sol.converged,
                    optimality_residual: Some(residual),
                    objective: sol.objective,
                })
            }
        }
    }

    /// The method's penalized criterion evaluated at an arbitrary `c`.
    pub fn criterion(&self, c: &Matrix, lambda: f64) -> Result<f64> {
        if c.shape() != (self.x.ncols(), self.y.ncols()) {
            return Err(Error::Shape(format!(
                "coefficient matrix is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                self.x.ncols(),
                self.y.ncols()
            )));
        }
        let fitted = &self.x * c;
        let loss = 0.5 * distance_sq(&self.y, &fitted);
        let rank_tol = Tolerances::default().rank_rel;
        let lambda2 = self.config.lambda2;
        let pen = match self.config.method {
            Method::Ols => 0.0,
            Method::Rsc => lambda * rank_of_values(singular_values(c)?.as_slice(), rank_tol) as f64,
            Method::Rorr => {
                lambda * rank_of_values(singular_values(c)?.as_slice(), rank_tol) as f64
                    + 0.5 * lambda2 * c.norm_squared()
            }
            Method::Nnp => lambda * singular_values(c)?.sum(),
            Method::Ann | Method::Roann => {
                let d = singular_values(&fitted)?;
                let w = self.weights().expect("ANN path carries weights").as_slice();
                let mut pen = if lambda == 0.0 { 0.0 } else { lambda * weighted_sum(d.as_slice(), w) };
                if self.config.method == Method::Roann {
                    pen += 0.5 * lambda2 * d.iter().map(|g| g * g).sum::<f64>();
                }
                pen
            }
        };
        Ok(loss + pen)
    }
}

struct NnpSolution {
    coefficients: Matrix,
    iterations: usize,
    converged: bool,
    objective: f64,
}

/// Soft-thresholds the singular values of `z`; returns the result and its
/// nuclear norm.
fn prox_nuclear(z: &Matrix, level: f64) -> Result<(Matrix, f64)> {
    let svd = thin_svd(z)?;
    let g = soft_values(svd.d.as_slice(), level);
    let nuc = g.iter().sum();
    Ok((svd.compose(&g), nuc))
}

#[allow(clippy::too_many_arguments)]
fn nnp_solve(
    y: &Matrix,
    x: &Matrix,
    xtx: &Matrix,
    xty: &Matrix,
    lipschitz: f64,
    lambda: f64,
    opts: &NnpOptions,
    warm: Option<&Matrix>,
) -> Result<NnpSolution> {
    let (p, q) = (x.ncols(), y.ncols());
    let objective = |c: &Matrix, nuc: f64| 0.5 * distance_sq(y, &(x * c)) + lambda * nuc;
    let mut c = warm.cloned().unwrap_or_else(|| Matrix::zeros(p, q));
    if lipschitz == 0.0 {
        return Ok(NnpSolution { objective: objective(&c, 0.0), coefficients: c, iterations: 0, converged: true });
    }
    let scale_floor = 1e-14 * 0.5 * y.norm_squared();
    let mut f_old = objective(&c, singular_values(&c)?.sum());
    let mut momentum_point = c.clone();
    let mut t = 1.0_f64;
    for it in 1..=opts.max_iter {
        let base = if opts.accelerate { &momentum_point } else { &c };
        let grad = xtx * base - xty;
        let (next, nuc) = prox_nuclear(&(base - grad / lipschitz), lambda / lipschitz)?;
        let f_new = objective(&next, nuc);
        if opts.accelerate {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            momentum_point = &next + (&next - &c) * ((t - 1.0) / t_next);
            t = t_next;
        }
        c = next;
        let change = (f_old - f_new).abs();
        if change <= opts.tol * f_new.abs().max(scale_floor) {
            return Ok(NnpSolution { coefficients: c, iterations: it, converged: true, objective: f_new });
        }
        f_old = f_new;
    }
    Ok(NnpSolution { coefficients: c, iterations: opts.max_iter, converged: false, objective: f_old })
}

/// `max(0, d1(W) - lambda)` where `W` is the part of `X^T (Y - X C)` orthogonal
/// to both singular subspaces of `C`. Zero exactly when the off-support
/// subgradient condition of the nuclear norm holds.
pub fn nnp_optimality_residual(y: &Matrix, x: &Matrix, c: &Matrix, lambda: f64) -> Result<f64> {
    let g = x.transpose() * (y - x * c);
    let svd = thin_svd(c)?;
    let r = svd.rank(Tolerances::default().rank_rel);
    let (p, q) = c.shape();
    let ur = svd.u.columns(0, r);
    let vr = svd.v.columns(0, r);
    let left = Matrix::identity(p, p) - ur * ur.transpose();
    let right = Matrix::identity(q, q) - vr * vr.transpose();
    let w = left * g * right;
    Ok((singular_values(&w)?[0] - lambda).max(0.0))
}

/// `max { r : d_r > lambda^(1/(gamma+1)) }`, or 0 when no value qualifies.
pub fn estimate_rank(py_singular_values: &[f64], lambda: f64, gamma: f64) -> usize {
    let cut = lambda.powf(1.0 / (gamma + 1.0));
    py_singular_values.iter().rposition(|&d| d > cut).map_or(0, |i| i + 1)
}

pub fn fit(y: &Matrix, x: &Matrix, config: &EstimatorConfig) -> Result<FitResult> {
    FitPath::new(y, x, config)?.fit(config.lambda)
}

pub fn ols_fit(y: &Matrix, x: &Matrix) -> Result<FitResult> {
    fit(y, x, &EstimatorConfig::ols())
}

pub fn rsc_fit(y: &Matrix, x: &Matrix, lambda: f64) -> Result<FitResult> {
    fit(y, x, &EstimatorConfig::rsc(lambda))
}

pub fn ann_fit(
    y: &Matrix,
    x: &Matrix,
    lambda: f64,
    gamma: f64,
    weights: Option<&Weights>,
) -> Result<FitResult> {
    let mut cfg = EstimatorConfig::ann(lambda, gamma);
    cfg.weights = weights.cloned();
    fit(y, x, &cfg)
}

pub fn nnp_fit(y: &Matrix, x: &Matrix, lambda: f64, opts: &NnpOptions) -> Result<FitResult> {
    fit(y, x, &EstimatorConfig { nnp: *opts, ..EstimatorConfig::nnp(lambda) })
}

pub fn rorr_fit(y: &Matrix, x: &Matrix, lambda: f64, lambda2: f64) -> Result<FitResult> {
    fit(y, x, &EstimatorConfig::rorr(lambda, lambda2))
}

pub fn roann_fit(y: &Matrix, x: &Matrix, lambda: f64, lambda2: f64, gamma: f64) -> Result<FitResult> {
    fit(y, x, &EstimatorConfig::roann(lambda, lambda2, gamma))
}
