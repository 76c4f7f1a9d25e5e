use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use rankpen::theory::{run_suite, Suite, SuiteConfig};
use rankpen::{CheckReport, Verdict};

use crate::failure::{Failure, Outcome};
use crate::manifest::Outputs;

/// Run Monte Carlo checks of the estimators' guarantees.
#[derive(Debug, Args)]
pub struct CheckArgs {
    /// optimality, convexity, rank-consistency, noise-spectrum,
    /// prediction-bound or all.
    #[arg(long, default_value = "all")]
    pub suite: Suite,
    /// Seed shared by every check.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    pub seed: u64,
    /// Trials for the rank-consistency and prediction-bound checks.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Noise level of the noise-spectrum check.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub noise_trials: Option<usize>,
    /// Random instances for the optimality check.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub perturbations: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Random instances for the thresholding-equivalence check.
    #[arg(long)]
    pub equivalence_instances: Option<usize>,
    /// Dimension of the convexity probe.
    #[arg(long)]
    pub convexity_h: Option<usize>,
    #[arg(long)]
    pub convexity_trials: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub suite: Suite,
    pub settings: SuiteConfig,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    suite: Suite,
    passed: usize,
    skipped: usize,
    failed: usize,
    checks: &'a [CheckReport],
}

pub fn resolve(args: &CheckArgs) -> Outcome<CheckConfig> {
    let mut s = SuiteConfig::default().with_seed(args.seed);
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut s.theory.delta, args.delta);
    set(&mut s.theory.theta, args.theta);
    set(&mut s.theory.a, args.a);
    set(&mut s.theory.m, args.m);
    set(&mut s.theory.gamma, args.gamma);
    set(&mut s.noise.sigma, args.sigma);
    let count = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    count(&mut s.theory.trials, args.trials);
    count(&mut s.noise.trials, args.noise_trials);
    count(&mut s.optimality.instances, args.instances);
    count(&mut s.optimality.perturbations, args.perturbations);
    count(&mut s.optimality.grid_points, args.grid_points);
    count(&mut s.equivalence.instances, args.equivalence_instances);
    count(&mut s.convexity.h, args.convexity_h);
    count(&mut s.convexity.trials, args.convexity_trials);
    s.theory.validate()?;
    if !(s.noise.sigma >= 0.0 && s.noise.sigma.is_finite()) {
        return Err(Failure::config(format!("sigma = {} must be finite and non-negative", s.noise.sigma)));
    }
    Ok(CheckConfig { suite: args.suite, settings: s })
}

pub fn render(checks: &[CheckReport]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{:<4} {:<28} empirical {:.6e}  bound {:.6e}  slack {:.3e}  trials {}",
            c.verdict, c.name, c.empirical, c.claimed_bound, c.slack, c.trials
        );
        for note in &c.notes {
            let _ = writeln!(s, "       {note}");
        }
    }
    s
}

pub fn run(cfg: &CheckConfig, out: &mut Outputs) -> Outcome<Vec<CheckReport>> {
    let start = Instant::now();
    let checks = run_suite(cfg.suite, &cfg.settings)?;
    out.time("checks", start.elapsed().as_secs_f64());
    let tally = |v: Verdict| checks.iter().filter(|c| c.verdict == v).count();
    let report = Report {
        suite: cfg.suite,
        passed: tally(Verdict::Pass),
        skipped: tally(Verdict::Skip),
        failed: tally(Verdict::Fail),
        checks: &checks,
    };
    out.write_toml("report.toml", &report)?;
    let text = render(&checks);
    out.write("report.txt", &text)?;
    print!("{text}");
    Ok(checks)
}
