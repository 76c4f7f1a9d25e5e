//! Penalty selection: log-spaced grids, K-fold cross-validation and tuning
//! against an independent validation set.
//!
//! Both procedures run the same two-stage search. A coarse grid is scored,
//! then a finer grid spanning the winner's two neighbours is scored and its
//! minimizer returned. Ties go to the larger penalty.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorConfig, FitPath, FitResult, Method};
use crate::linalg::{distance_sq, Matrix};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    /// Strictly increasing.
    pub values: Vec<f64>,
    pub stage: u8,
}

impl LambdaGrid {
    /// A user-supplied grid: sorted, duplicates removed, every value finite
    /// and non-negative.
    pub fn explicit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return invalid("lambda grid is empty");
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!("lambda grid value {v} is not finite and non-negative"));
        }
        let mut values = values.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values, stage: 1 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `size` values `lambda_max * ratio^((size-1-i)/(size-1))`, ascending.
pub fn build_grid(lambda_max: f64, size: usize, lambda_min_ratio: f64) -> Result<LambdaGrid> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return invalid(format!("lambda_max must be positive and finite, got {lambda_max}"));
    }
    if size < 2 {
        return invalid(format!("grid size must be at least 2, got {size}"));
    }
    if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
        return invalid(format!("lambda_min_ratio must lie in (0, 1), got {lambda_min_ratio}"));
    }
    let last = (size - 1) as f64;
    let mut values: Vec<f64> = (0..size)
        .map(|i| lambda_max * lambda_min_ratio.powf((size - 1 - i) as f64 / last))
        .collect();
    values[size - 1] = lambda_max;
    Ok(LambdaGrid { values, stage: 1 })
}

/// Fine grid between `lo` and `hi` (log-spaced, or linear when `lo` is 0)
/// with `keep` merged in.
fn refine_grid(lo: f64, hi: f64, size: usize, keep: f64) -> LambdaGrid {
    let last = (size - 1) as f64;
    let mut values: Vec<f64> = if lo > 0.0 {
        let ratio = hi / lo;
        (0..size).map(|i| lo * ratio.powf(i as f64 / last)).collect()
    } else {
        (0..size).map(|i| lo + (hi - lo) * i as f64 / last).collect()
    };
    values[0] = lo;
    values[size - 1] = hi;
    values.push(keep);
    values.sort_by(f64::total_cmp);
    values.dedup();
    LambdaGrid { values, stage: 2 }
}

/// Rows assigned to `k` folds by a seeded shuffle; sizes differ by at most 1.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return invalid(format!("fold count must satisfy 2 <= k <= n = {n}, got {k}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, 0));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

/// Index of the smallest finite error; the last such index on ties.
fn argmin_last(errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &e) in errors.iter().enumerate() {
        if e.is_nan() {
            continue;
        }
        if best.is_none_or(|b| e <= errors[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_size: usize,
    pub lambda_min_ratio: f64,
    /// Points in the refinement grid; 0 disables the second stage.
    pub refine_size: usize,
    pub seed: u64,
    /// Ridge levels crossed with the lambda grid for RoRR / RoANN.
    pub lambda2_grid: Vec<f64>,
    /// Replaces the log-spaced first-stage grid when present.
    pub grid: Option<Vec<f64>>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            grid_size: 100,
            lambda_min_ratio: 1e-4,
            refine_size: 100,
            seed: 0,
            lambda2_grid: vec![0.0, 0.01, 0.1, 1.0, 10.0],
            grid: None,
        }
    }
}

impl CvOptions {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_none() {
            build_grid(1.0, self.grid_size, self.lambda_min_ratio)?;
        }
        if self.refine_size == 1 {
            return invalid("refinement grid needs at least 2 points (or 0 to disable)");
        }
        if self.lambda2_grid.is_empty() {
            return invalid("lambda2 grid is empty");
        }
        if let Some(v) = self.lambda2_grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return invalid(format!("lambda2 grid value {v} is not finite and non-negative"));
        }
        Ok(())
    }

    fn first_grid(&self, lambda_max: f64, method: Method) -> Result<LambdaGrid> {
        match &self.grid {
            Some(values) => LambdaGrid::explicit(values),
            None if method == Method::Ols || lambda_max <= 0.0 => LambdaGrid::explicit(&[0.0]),
            None => build_grid(lambda_max, self.grid_size, self.lambda_min_ratio),
        }
    }

    fn lambda2_levels(&self, config: &EstimatorConfig) -> Vec<f64> {
        if config.method.uses_lambda2() {
            let mut v = self.lambda2_grid.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        } else {
            vec![config.lambda2]
        }
    }
}

/// Outcome of the two-stage search at one ridge level.
#[derive(Debug, Clone, PartialEq)]
struct Search {
    grid: LambdaGrid,
    errors: Vec<f64>,
    refined: Option<(LambdaGrid, Vec<f64>)>,
    best_lambda: f64,
    best_error: f64,
}

/// `score` maps a grid to one error per value (NaN for invalid cells).
fn two_stage<F>(grid: LambdaGrid, refine_size: usize, score: F) -> Result<Search>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let errors = score(&grid.values);
    let i = argmin_last(&errors)
        .ok_or_else(|| Error::Numerical("every lambda in the grid failed to fit".into()))?;
    let winner = grid.values[i];
    let lo = grid.values[i.saturating_sub(1)];
    let hi = grid.values[(i + 1).min(grid.len() - 1)];
    if refine_size < 2 || lo == hi {
        let best_error = errors[i];
        return Ok(Search { grid, errors, refined: None, best_lambda: winner, best_error });
    }
    let fine = refine_grid(lo, hi, refine_size, winner);
    let fine_errors = score(&fine.values);
    let j = argmin_last(&fine_errors).expect("refined grid contains the first-stage winner");
    Ok(Search {
        best_lambda: fine.values[j],
        best_error: fine_errors[j],
        grid,
        errors,
        refined: Some((fine, fine_errors)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub grid: LambdaGrid,
    /// Mean held-out error per grid value; NaN where every fold failed.
    pub cv_errors: Vec<f64>,
    pub refined_grid: Option<LambdaGrid>,
    pub refined_errors: Option<Vec<f64>>,
    pub best_lambda: f64,
    pub best_lambda2: Option<f64>,
    pub best_error: f64,
    /// Held-out error of the zero predictor.
    pub null_error: f64,
    /// `best_error / null_error`; 1 matches the null model.
    pub relative_error: f64,
    pub fold_count: usize,
    pub fold_assignment_seed: u64,
    pub lambda2_grid: Option<Vec<f64>>,
    /// Best error reached at each ridge level.
    pub lambda2_errors: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

struct Fold {
    path: Option<FitPath>,
    x_test: Matrix,
    y_test: Matrix,
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    m.select_rows(rows)
}

fn heldout_error(fold: &Fold, fit: &FitResult) -> f64 {
    let q = fold.y_test.ncols() as f64;
    distance_sq(&fold.y_test, &(&fold.x_test * &fit.coefficients)) / (fold.y_test.nrows() as f64 * q)
}

fn fit_all(path: &FitPath, lambdas: &[f64]) -> Vec<Option<FitResult>> {
    path.fit_many(lambdas).into_iter().map(|r| r.ok()).collect()
}

fn fold_errors(fold: &Fold, lambdas: &[f64]) -> Vec<f64> {
    match &fold.path {
        None => vec![f64::NAN; lambdas.len()],
        Some(path) => fit_all(path, lambdas)
            .iter()
            .map(|f| f.as_ref().map_or(f64::NAN, |f| heldout_error(fold, f)))
            .collect(),
    }
}

/// Fold-averaged errors, skipping failed cells.
fn average(per_fold: &[Vec<f64>], len: usize) -> (Vec<f64>, usize) {
    let mut failed = 0;
    let means = (0..len)
        .map(|i| {
            let ok: Vec<f64> = per_fold.iter().map(|f| f[i]).filter(|e| !e.is_nan()).collect();
            failed += per_fold.len() - ok.len();
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().sum::<f64>() / ok.len() as f64
            }
        })
        .collect();
    (means, failed)
}

/// K-fold cross-validation of `config.method` over a two-stage lambda grid
/// (crossed with `opts.lambda2_grid` for RoRR / RoANN). Folds stay fixed
/// across the whole grid.
pub fn cross_validate(y: &Matrix, x: &Matrix, config: &EstimatorConfig, opts: &CvOptions) -> Result<CvReport> {
    opts.validate()?;
    config.validate()?;
    let n = y.nrows();
    if x.nrows() != n {
        return Err(Error::Shape(format!("Y has {n} rows but X has {}", x.nrows())));
    }
    let assignment = fold_assignment(n, opts.folds, opts.seed)?;
    let members: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.folds)
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == k);
            (train, test)
        })
        .collect();
    let null_error = members
        .iter()
        .map(|(_, test)| select_rows(y, test).norm_squared() / (test.len() * y.ncols()) as f64)
        .sum::<f64>()
        / opts.folds as f64;

    let mut warnings = Vec::new();
    let mut best: Option<(Search, f64)> = None;
    let mut lambda2_errors = Vec::new();
    let levels = opts.lambda2_levels(config);
    for &lambda2 in &levels {
        let cfg = config.with_lambda2(lambda2);
        let lambda_max = FitPath::new(y, x, &cfg)?.lambda_max();
        let grid = opts.first_grid(lambda_max, cfg.method)?;
        let folds: Vec<Fold> = members
            .par_iter()
            .map(|(train, test)| Fold {
                path: FitPath::new(&select_rows(y, train), &select_rows(x, train), &cfg).ok(),
                x_test: select_rows(x, test),
                y_test: select_rows(y, test),
            })
            .collect();
        for (k, f) in folds.iter().enumerate() {
            if f.path.is_none() {
                warnings.push(format!("lambda2={lambda2}: fold {k} could not be fitted and was excluded"));
            }
        }
        let failed_cells = std::cell::Cell::new(0usize);
        let search = two_stage(grid, opts.refine_size, |lambdas| {
            let per_fold: Vec<Vec<f64>> = folds.par_iter().map(|f| fold_errors(f, lambdas)).collect();
            let (means, failed) = average(&per_fold, lambdas.len());
            failed_cells.set(failed_cells.get() + failed);
            means
        })?;
        let failed = failed_cells.get();
        let healthy_folds = folds.iter().filter(|f| f.path.is_some()).count();
        let expected_missing = (opts.folds - healthy_folds)
            * (search.grid.len() + search.refined.as_ref().map_or(0, |r| r.0.len()));
        if failed > expected_missing {
            warnings.push(format!(
                "lambda2={lambda2}: {} (lambda, fold) cells failed to fit and were excluded",
                failed - expected_missing
            ));
        }
        lambda2_errors.push(search.best_error);
        if best.as_ref().is_none_or(|(b, _)| search.best_error <= b.best_error) {
            best = Some((search, lambda2));
        }
    }
    let (search, lambda2) = best.expect("at least one ridge level");
    let uses_l2 = config.method.uses_lambda2();
    let (refined_grid, refined_errors) = match search.refined {
        Some((g, e)) => (Some(g), Some(e)),
        None => (None, None),
    };
    Ok(CvReport {
        method: config.method,
        grid: search.grid,
        cv_errors: search.errors,
        refined_grid,
        refined_errors,
        best_lambda: search.best_lambda,
        best_lambda2: uses_l2.then_some(lambda2),
        best_error: search.best_error,
        null_error,
        relative_error: search.best_error / null_error,
        fold_count: opts.folds,
        fold_assignment_seed: opts.seed,
        lambda2_grid: uses_l2.then_some(levels),
        lambda2_errors: uses_l2.then_some(lambda2_errors),
        warnings,
    })
}

/// What a validation set scores candidate fits against.
#[derive(Debug, Clone)]
pub enum ValidationTarget<'a> {
    /// Held-out responses: `||Y_v - X_v C_hat||^2 / (n_v q)`.
    Responses { y: &'a Matrix, x: &'a Matrix },
    /// Known coefficients: `||X_v C - X_v C_hat||^2 / (n_v q)`.
    Truth { x: &'a Matrix, coefficients: &'a Matrix },
}

enum Scorer {
    Responses { y: Matrix, x: Matrix },
    Truth { gram: Matrix, coefficients: Matrix, rows: usize },
}

impl Scorer {
    fn new(target: &ValidationTarget<'_>, p: usize, q: usize) -> Result<Self> {
        let check = |x: &Matrix| {
            if x.ncols() != p {
                return Err(Error::Shape(format!("validation design has {} columns, expected {p}", x.ncols())));
            }
            Ok(())
        };
        match target {
            ValidationTarget::Responses { y, x } => {
                check(x)?;
                if y.nrows() != x.nrows() || y.ncols() != q {
                    return Err(Error::Shape("validation responses do not match the design".into()));
                }
                Ok(Scorer::Responses { y: (*y).clone(), x: (*x).clone() })
            }
            ValidationTarget::Truth { x, coefficients } => {
                check(x)?;
                if coefficients.shape() != (p, q) {
                    return Err(Error::Shape("true coefficients have the wrong shape".into()));
                }
                Ok(Scorer::Truth {
                    gram: x.transpose() * *x,
                    coefficients: (*coefficients).clone(),
                    rows: x.nrows(),
                })
            }
        }
    }

    fn score(&self, c_hat: &Matrix) -> f64 {
        match self {
            Scorer::Responses { y, x } => distance_sq(y, &(x * c_hat)) / (y.nrows() * y.ncols()) as f64,
            Scorer::Truth { gram, coefficients, rows } => {
                let diff = coefficients - c_hat;
                let total = diff.dot(&(gram * &diff));
                total.max(0.0) / (*rows * diff.ncols()) as f64
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub best_lambda: f64,
    pub best_lambda2: Option<f64>,
    pub valid_error: f64,
    pub grid: LambdaGrid,
    pub errors: Vec<f64>,
    /// Training-data fit at the selected penalties.
    pub fit: FitResult,
}

/// Selects the penalty whose training fit scores best on a validation set.
/// Uses the same two-stage grid (and ridge grid) as [`cross_validate`];
/// `opts.folds` and `opts.seed` are unused.
pub fn oracle_tune(
    y: &Matrix,
    x: &Matrix,
    config: &EstimatorConfig,
    target: &ValidationTarget<'_>,
    opts: &CvOptions,
) -> Result<OracleReport> {
    opts.validate()?;
    let scorer = Scorer::new(target, x.ncols(), y.ncols())?;
    let mut best: Option<(Search, f64, FitPath)> = None;
    for lambda2 in opts.lambda2_levels(config) {
        let path = FitPath::new(y, x, &config.with_lambda2(lambda2))?;
        let grid = opts.first_grid(path.lambda_max(), config.method)?;
        let search = two_stage(grid, opts.refine_size, |lambdas| {
            fit_all(&path, lambdas)
                .iter()
                .map(|f| f.as_ref().map_or(f64::NAN, |f| scorer.score(&f.coefficients)))
                .collect()
        })?;
        if best.as_ref().is_none_or(|(b, _, _)| search.best_error <= b.best_error) {
            best = Some((search, lambda2, path));
        }
    }
    let (search, lambda2, path) = best.expect("at least one ridge level");
    let fit = path.fit(search.best_lambda)?;
    Ok(OracleReport {
        best_lambda: search.best_lambda,
        best_lambda2: config.method.uses_lambda2().then_some(lambda2),
        valid_error: search.best_error,
        grid: search.grid,
        errors: search.errors,
        fit,
    })
}
