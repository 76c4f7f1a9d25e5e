//! Synthetic reduced-rank regression experiments.
//!
//! Model I draws the rows of `X` from `N(0, Gamma)` with `Gamma_ij = rho^|i-j|`.
//! Model II uses the rank-deficient design `X = X1 X2 Gamma^(1/2)` with
//! `X1` of size `n x r_x`. In both, `C = b C0 C1^T` has rank `r_star` and
//! `Y = X C + sigma E`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorConfig, FitPath, FitResult, Method};
use crate::linalg::{distance_sq, Matrix};
use crate::rng::{derive_seed, normal_matrix, substream, StreamRng};
use crate::tuning::{cross_validate, oracle_tune, CvOptions, ValidationTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    I,
    II,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::I => "I",
            Model::II => "II",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "I" | "i" => Ok(Model::I),
            "2" | "II" | "ii" => Ok(Model::II),
            other => invalid(format!("unknown model '{other}' (expected 1 or 2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r_star: usize,
    /// Design rank; Model I always has `min(n, p)`.
    pub r_x: usize,
    pub rho: f64,
    pub b: f64,
    pub sigma: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Scenario {
    /// `n = 100, p = q = 25, r* = 10`.
    pub fn model1(rho: f64, b: f64) -> Self {
        Self {
            model: Model::I,
            n: 100,
            p: 25,
            q: 25,
            r_star: 10,
            r_x: 25,
            rho,
            b,
            sigma: 1.0,
            replications: 100,
            seed: 0,
        }
    }

    /// `n = 20, p = 100, q = 25, r* = 5, r_x = 10`.
    pub fn model2(rho: f64, b: f64) -> Self {
        Self {
            model: Model::II,
            n: 20,
            p: 100,
            q: 25,
            r_star: 5,
            r_x: 10,
            rho,
            b,
            sigma: 1.0,
            replications: 100,
            seed: 0,
        }
    }

    pub fn default_for(model: Model) -> Self {
        match model {
            Model::I => Self::model1(0.1, 0.3),
            Model::II => Self::model2(0.5, 0.2),
        }
    }

    /// Rank of the generated design.
    pub fn design_rank(&self) -> usize {
        match self.model {
            Model::I => self.n.min(self.p),
            Model::II => self.r_x,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n), ("p", self.p), ("q", self.q), ("r_star", self.r_star)] {
            if v == 0 {
                return invalid(format!("{name} must be positive"));
            }
        }
        if self.replications == 0 {
            return invalid("replications must be positive");
        }
        if self.r_star > self.p.min(self.q) {
            return invalid(format!(
                "r_star = {} exceeds min(p, q) = {}",
                self.r_star,
                self.p.min(self.q)
            ));
        }
        if self.model == Model::II {
            if self.r_x == 0 || self.r_x > self.n.min(self.p) {
                return invalid(format!(
                    "r_x = {} must lie in [1, min(n, p) = {}]",
                    self.r_x,
                    self.n.min(self.p)
                ));
            }
            if self.r_star > self.r_x {
                return invalid(format!("r_star = {} exceeds r_x = {}", self.r_star, self.r_x));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return invalid(format!("rho = {} must lie in [0, 1)", self.rho));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return invalid(format!("b = {} must be positive", self.b));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return invalid(format!("sigma = {} must be positive", self.sigma));
        }
        Ok(())
    }
}

/// Lower Cholesky factor of the AR(1) correlation matrix `rho^|i-j|`.
pub fn ar1_cholesky(p: usize, rho: f64) -> Matrix {
    if rho == 0.0 {
        return Matrix::identity(p, p);
    }
    let s = (1.0 - rho * rho).sqrt();
    Matrix::from_fn(p, p, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        _ if j == 0 => rho.powi(i as i32),
        _ => rho.powi((i - j) as i32) * s,
    })
}

fn correlate(z: Matrix, rho: f64) -> Matrix {
    if rho == 0.0 {
        z
    } else {
        let l = ar1_cholesky(z.ncols(), rho);
        z * l.transpose()
    }
}

/// `b C0 C1^T` with i.i.d. standard normal `C0` (`p x r`) and `C1` (`q x r`).
pub fn gen_coefficients(p: usize, q: usize, r_star: usize, b: f64, rng: &mut StreamRng) -> Matrix {
    let c0 = normal_matrix(p, r_star, rng);
    let c1 = normal_matrix(q, r_star, rng);
    (c0 * c1.transpose()) * b
}

pub fn gen_design_model1(n: usize, p: usize, rho: f64, rng: &mut StreamRng) -> Matrix {
    correlate(normal_matrix(n, p, rng), rho)
}

pub fn gen_design_model2(n: usize, p: usize, r_x: usize, rho: f64, rng: &mut StreamRng) -> Matrix {
    let x1 = normal_matrix(n, r_x, rng);
    let x2 = normal_matrix(r_x, p, rng);
    correlate(x1 * x2, rho)
}

/// `100 ||C - C_hat||^2 / (p q)`.
pub fn smse_estimation(c_true: &Matrix, c_hat: &Matrix) -> Result<f64> {
    if c_true.shape() != c_hat.shape() {
        return Err(Error::Shape("coefficient matrices differ in shape".into()));
    }
    Ok(100.0 * distance_sq(c_true, c_hat) / c_true.len() as f64)
}

/// `100 ||X C - X C_hat||^2 / (n q)`.
pub fn smse_prediction(x: &Matrix, c_true: &Matrix, c_hat: &Matrix) -> Result<f64> {
    if c_true.shape() != c_hat.shape() || x.ncols() != c_true.nrows() {
        return Err(Error::Shape("design and coefficient shapes are incompatible".into()));
    }
    let diff = x * (c_true - c_hat);
    Ok(100.0 * diff.norm_squared() / diff.len() as f64)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Replication {
    pub x: Matrix,
    pub c: Matrix,
    pub y: Matrix,
    /// Independent design with the same law, `validation_factor * n` rows.
    pub x_valid: Option<Matrix>,
}

/// Rows in the oracle validation design per training row.
pub const VALIDATION_FACTOR: usize = 10;

/// Draws replication `index` of `scenario` from its own random stream.
/// For Model II the validation rows reuse the training `X2`, so they share
/// the training design's row space.
pub fn generate(scenario: &Scenario, index: u64, with_validation: bool) -> Replication {
    let s = scenario;
    let mut rng = substream(s.seed, index);
    let c = gen_coefficients(s.p, s.q, s.r_star, s.b, &mut rng);
    let (x, x2) = match s.model {
        Model::I => (gen_design_model1(s.n, s.p, s.rho, &mut rng), None),
        Model::II => {
            let x1 = normal_matrix(s.n, s.r_x, &mut rng);
            let x2 = normal_matrix(s.r_x, s.p, &mut rng);
            (correlate(&x1 * &x2, s.rho), Some(x2))
        }
    };
    let e = normal_matrix(s.n, s.q, &mut rng) * s.sigma;
    let y = &x * &c + e;
    let x_valid = with_validation.then(|| {
        let rows = VALIDATION_FACTOR * s.n;
        match x2 {
            None => gen_design_model1(rows, s.p, s.rho, &mut rng),
            Some(x2) => correlate(normal_matrix(rows, s.r_x, &mut rng) * x2, s.rho),
        }
    });
    Replication { x, c, y, x_valid }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tuning {
    /// K-fold cross-validation on the training data.
    Cv,
    /// Selection against the true signal on a large validation design.
    Oracle,
}

impl FromStr for Tuning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cv" => Ok(Tuning::Cv),
            "oracle" => Ok(Tuning::Oracle),
            other => invalid(format!("unknown tuning '{other}' (expected cv or oracle)")),
        }
    }
}

/// A labelled estimator, parsed from shorthand such as `ann2`, `rsc`,
/// `roann1` or `nnp`. The digits after `ann` / `roann` set `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub label: String,
    pub config: EstimatorConfig,
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = s.trim().to_ascii_lowercase();
        let gamma = |rest: &str| -> Result<f64> {
            if rest.is_empty() {
                return Ok(2.0);
            }
            rest.parse::<f64>()
                .ok()
                .filter(|g| *g >= 0.0 && g.is_finite())
                .ok_or_else(|| Error::InvalidArgument(format!("bad gamma in method label '{s}'")))
        };
        let config = if let Some(rest) = label.strip_prefix("roann") {
            EstimatorConfig::roann(0.0, 0.0, gamma(rest)?)
        } else if let Some(rest) = label.strip_prefix("ann") {
            EstimatorConfig::ann(0.0, gamma(rest)?)
        } else {
            EstimatorConfig::new(label.parse::<Method>()?)
        };
        Ok(MethodSpec { label, config })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outcome {
    est: f64,
    pred: f64,
    rank: usize,
    seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: String,
    pub rho: f64,
    pub b: f64,
    pub est_smse_mean: f64,
    pub est_smse_sd: f64,
    pub pred_smse_mean: f64,
    pub pred_smse_sd: f64,
    pub mean_rank: f64,
    pub pct_exact_rank: f64,
    /// Replications that produced a fit.
    pub replications: usize,
    pub failures: usize,
    /// Wall time per replication; not part of the serialized record.
    #[serde(skip)]
    pub mean_seconds: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let ss = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (m, (ss / (v.len() - 1) as f64).sqrt())
}

/// Tunes `spec` on one replication and returns the selected fit.
pub fn tune_and_fit(
    rep: &Replication,
    spec: &MethodSpec,
    tuning: Tuning,
    cv: &CvOptions,
) -> Result<FitResult> {
    match tuning {
        Tuning::Oracle => {
            let x_valid = rep
                .x_valid
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("oracle tuning needs a validation design".into()))?;
            let target = ValidationTarget::Truth { x: x_valid, coefficients: &rep.c };
            Ok(oracle_tune(&rep.y, &rep.x, &spec.config, &target, cv)?.fit)
        }
        Tuning::Cv => {
            let report = cross_validate(&rep.y, &rep.x, &spec.config, cv)?;
            let cfg = spec.config.with_lambda2(report.best_lambda2.unwrap_or(spec.config.lambda2));
            FitPath::new(&rep.y, &rep.x, &cfg)?.fit(report.best_lambda)
        }
    }
}

fn run_replication(
    scenario: &Scenario,
    index: u64,
    methods: &[MethodSpec],
    tuning: Tuning,
    cv: &CvOptions,
) -> Vec<Option<Outcome>> {
    let rep = generate(scenario, index, tuning == Tuning::Oracle);
    let cv = CvOptions { seed: derive_seed(cv.seed ^ scenario.seed, index), ..cv.clone() };
    methods
        .iter()
        .map(|spec| {
            let start = Instant::now();
            let fit = tune_and_fit(&rep, spec, tuning, &cv).ok()?;
            let seconds = start.elapsed().as_secs_f64();
            Some(Outcome {
                est: smse_estimation(&rep.c, &fit.coefficients).ok()?,
                pred: smse_prediction(&rep.x, &rep.c, &fit.coefficients).ok()?,
                rank: fit.estimated_rank,
                seconds,
            })
        })
        .collect()
}

/// Runs every replication of `scenario` (in parallel) and summarizes each
/// method. Replication `i` always uses random stream `i` of the scenario
/// seed, so results do not depend on the thread count.
pub fn run_experiment(
    scenario: &Scenario,
    methods: &[MethodSpec],
    tuning: Tuning,
    cv: &CvOptions,
) -> Result<Vec<ExperimentRow>> {
    scenario.validate()?;
    cv.validate()?;
    if methods.is_empty() {
        return invalid("no methods requested");
    }
    let outcomes: Vec<Vec<Option<Outcome>>> = (0..scenario.replications as u64)
        .into_par_iter()
        .map(|i| run_replication(scenario, i, methods, tuning, cv))
        .collect();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let ok: Vec<Outcome> = outcomes.iter().filter_map(|o| o[m]).collect();
            let (est_smse_mean, est_smse_sd) = mean_sd(&ok.iter().map(|o| o.est).collect::<Vec<_>>());
            let (pred_smse_mean, pred_smse_sd) = mean_sd(&ok.iter().map(|o| o.pred).collect::<Vec<_>>());
            let count = ok.len().max(1) as f64;
            let exact = ok.iter().filter(|o| o.rank == scenario.r_star).count();
            ExperimentRow {
                method: spec.label.clone(),
                rho: scenario.rho,
                b: scenario.b,
                est_smse_mean,
                est_smse_sd,
                pred_smse_mean,
                pred_smse_sd,
                mean_rank: ok.iter().map(|o| o.rank as f64).sum::<f64>() / count,
                pct_exact_rank: 100.0 * exact as f64 / count,
                replications: ok.len(),
                failures: scenario.replications - ok.len(),
                mean_seconds: ok.iter().map(|o| o.seconds).sum::<f64>() / count,
            }
        })
        .collect())
}
