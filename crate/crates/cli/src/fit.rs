use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use rankpen::tuning::cross_validate;
use rankpen::{CvOptions, EstimatorConfig, FitPath, FitResult, Method, NnpOptions, Weights};

use crate::failure::{Failure, Outcome};
use crate::io;
use crate::manifest::Outputs;

/// Fit a multivariate regression estimator, tuning lambda by K-fold CV
/// unless --lambda is given.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Response matrix Y (n x q, CSV).
    #[arg(long)]
    pub y: PathBuf,
    /// Design matrix X (n x p, CSV).
    #[arg(long)]
    pub x: PathBuf,
    /// One of ols, rsc, nnp, ann, rorr, roann.
    #[arg(long)]
    pub method: Method,
    /// Penalty level; omit to cross-validate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Ridge level for rorr / roann; omit to cross-validate over --lambda2-grid.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Weight exponent for ann / roann.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Explicit non-decreasing weights for ann / roann, one row or column.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long = "cv-folds", default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    /// Second-stage grid size; 0 keeps the first stage only.
    #[arg(long, default_value_t = 100)]
    pub refine_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_min_ratio: f64,
    #[arg(long, value_delimiter = ',')]
    pub lambda2_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5000)]
    pub nnp_max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub nnp_tol: f64,
    /// Use the accelerated (FISTA) NNP solver.
    #[arg(long)]
    pub accelerate: bool,
    /// Skip the first line of each input.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub y: PathBuf,
    pub x: PathBuf,
    pub header: bool,
    pub estimator: EstimatorConfig,
    /// Present when lambda is selected by cross-validation.
    pub cv: Option<CvOptions>,
}

#[derive(Debug, Serialize)]
struct FitRecord<'a> {
    method: Method,
    n: usize,
    p: usize,
    q: usize,
    tuned: bool,
    lambda_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda2_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    estimated_rank: usize,
    objective: f64,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimality_residual: Option<f64>,
    singular_values_fitted: &'a [f64],
}

pub fn resolve(args: &FitArgs) -> Outcome<FitConfig> {
    let mut estimator = EstimatorConfig::new(args.method);
    estimator.nnp = NnpOptions {
        max_iter: args.nnp_max_iter,
        tol: args.nnp_tol,
        accelerate: args.accelerate,
    };
    if args.method.uses_gamma() {
        estimator.gamma = args.gamma;
        if let Some(path) = &args.weights {
            estimator.weights = Some(Weights::new(io::read_vector(path)?)?);
        }
    } else if args.weights.is_some() {
        return Err(Failure::config("--weights applies only to ann and roann"));
    }
    if let Some(l2) = args.lambda2 {
        if !args.method.uses_lambda2() {
            return Err(Failure::config("--lambda2 applies only to rorr and roann"));
        }
        estimator.lambda2 = l2;
    }
    let tune = args.method.is_tuned() && args.lambda.is_none();
    if !tune {
        estimator.lambda = args.lambda.unwrap_or(0.0);
        if args.method.uses_lambda2() && args.lambda2.is_none() {
            return Err(Failure::config("a fixed --lambda with rorr / roann also needs --lambda2"));
        }
    }
    estimator.validate()?;
    let cv = tune.then(|| {
        let mut cv = CvOptions {
            folds: args.folds,
            grid_size: args.grid_size,
            lambda_min_ratio: args.lambda_min_ratio,
            refine_size: args.refine_size,
            seed: args.seed,
            ..CvOptions::default()
        };
        if let Some(l2) = args.lambda2 {
            cv.lambda2_grid = vec![l2];
        } else if let Some(grid) = &args.lambda2_grid {
            cv.lambda2_grid = grid.clone();
        }
        if !args.method.uses_lambda2() {
            cv.lambda2_grid = vec![0.0];
        }
        cv
    });
    if let Some(cv) = &cv {
        cv.validate()?;
    }
    Ok(FitConfig { y: args.y.clone(), x: args.x.clone(), header: args.header, estimator, cv })
}

pub fn run(cfg: &FitConfig, out: &mut Outputs) -> Outcome<FitResult> {
    let y = io::read_matrix(&cfg.y, cfg.header)?;
    let x = io::read_matrix(&cfg.x, cfg.header)?;
    out.input("y", &cfg.y)?;
    out.input("x", &cfg.x)?;
    let (estimator, report) = match &cfg.cv {
        Some(opts) => {
            let start = Instant::now();
            let report = cross_validate(&y, &x, &cfg.estimator, opts)?;
            out.time("cross_validation", start.elapsed().as_secs_f64());
            let mut chosen = cfg.estimator.with_lambda(report.best_lambda);
            if let Some(l2) = report.best_lambda2 {
                chosen.lambda2 = l2;
            }
            (chosen, Some(report))
        }
        None => (cfg.estimator.clone(), None),
    };
    let start = Instant::now();
    let fit = FitPath::new(&y, &x, &estimator)?.fit(estimator.lambda)?;
    out.time("fit", start.elapsed().as_secs_f64());

    out.write("coefficients.csv", &io::render_matrix(&fit.coefficients))?;
    out.write("fitted.csv", &io::render_matrix(&fit.fitted))?;
    out.write_toml(
        "fit.toml",
        &FitRecord {
            method: fit.method,
            n: x.nrows(),
            p: x.ncols(),
            q: y.ncols(),
            tuned: report.is_some(),
            lambda_used: fit.lambda_used,
            lambda2_used: fit.lambda2_used,
            gamma: estimator.method.uses_gamma().then_some(estimator.gamma),
            estimated_rank: fit.estimated_rank,
            objective: fit.objective,
            converged: fit.converged,
            iterations: fit.iterations,
            optimality_residual: fit.optimality_residual,
            singular_values_fitted: &fit.singular_values_fitted,
        },
    )?;
    if let Some(report) = &report {
        out.write_toml("cv.toml", report)?;
    }
    if !fit.converged {
        eprintln!("warning: solver stopped before convergence; see fit.toml");
    }
    Ok(fit)
}
