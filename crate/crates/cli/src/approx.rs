use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use rankpen::threshold::{adaptive_weights, threshold, Rule};
use rankpen::Weights;

use crate::failure::{Failure, Outcome};
use crate::io;
use crate::manifest::Outputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Hsvt,
    Ssvt,
    Asvt,
}

/// Threshold the singular values of a matrix.
#[derive(Debug, Args)]
pub struct ApproxArgs {
    /// Input matrix (CSV).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Operator,
    #[arg(long)]
    pub lambda: f64,
    /// Adaptive weights `d(input)^(-gamma)` for asvt.
    #[arg(long, conflicts_with = "weights")]
    pub gamma: Option<f64>,
    /// Explicit non-decreasing weights for asvt, one row or one column.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Skip the first line of the input.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub input: PathBuf,
    pub header: bool,
    pub method: Operator,
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ApproxRecord<'a> {
    method: Operator,
    lambda: f64,
    rows: usize,
    cols: usize,
    rank: usize,
    original_singular_values: &'a [f64],
    thresholded_singular_values: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<&'a [f64]>,
}

pub fn resolve(args: &ApproxArgs) -> Outcome<ApproxConfig> {
    let weights = args.weights.as_deref().map(io::read_vector).transpose()?;
    if args.method == Operator::Asvt && weights.is_none() && args.gamma.is_none() {
        return Err(Failure::config("asvt needs --gamma or --weights"));
    }
    if args.method != Operator::Asvt && (weights.is_some() || args.gamma.is_some()) {
        return Err(Failure::config("--gamma and --weights apply only to asvt"));
    }
    Ok(ApproxConfig {
        input: args.input.clone(),
        header: args.header,
        method: args.method,
        lambda: args.lambda,
        gamma: args.gamma,
        weights,
    })
}

pub fn run(cfg: &ApproxConfig, out: &mut Outputs) -> Outcome<()> {
    let y = io::read_matrix(&cfg.input, cfg.header)?;
    out.input("input", &cfg.input)?;
    let weights = match (cfg.method, &cfg.weights, cfg.gamma) {
        (Operator::Asvt, Some(w), _) => Some(Weights::new(w.clone())?),
        (Operator::Asvt, None, Some(g)) => Some(adaptive_weights(&y, g)?),
        (Operator::Asvt, None, None) => return Err(Failure::config("asvt needs gamma or weights")),
        _ => None,
    };
    let rule = match (cfg.method, &weights) {
        (Operator::Hsvt, _) => Rule::Hard(cfg.lambda),
        (Operator::Ssvt, _) => Rule::Soft(cfg.lambda),
        (Operator::Asvt, Some(w)) => Rule::Adaptive(cfg.lambda, w),
        (Operator::Asvt, None) => unreachable!(),
    };
    let t = threshold(&y, rule)?;
    out.write("approx.csv", &io::render_matrix(&t.matrix))?;
    out.write_toml(
        "approx.toml",
        &ApproxRecord {
            method: cfg.method,
            lambda: cfg.lambda,
            rows: y.nrows(),
            cols: y.ncols(),
            rank: t.rank,
            original_singular_values: &t.original,
            thresholded_singular_values: &t.thresholded,
            weights: weights.as_ref().map(|w| w.as_slice()),
        },
    )?;
    Ok(())
}
