use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use rankpen::simulation::{run_experiment, MethodSpec};
use rankpen::{CvOptions, ExperimentRow, Model, Scenario, Tuning};

use crate::failure::{Failure, Outcome};
use crate::manifest::Outputs;

/// Run a Model I / Model II simulation over a grid of (rho, b) values.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// 1 or 2.
    #[arg(long)]
    pub model: Model,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub rstar: Option<usize>,
    /// Design rank (Model II).
    #[arg(long)]
    pub rx: Option<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub b: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    pub seed: u64,
    /// Comma-separated labels such as ann2,ann0,rsc,nnp,rorr,roann2.
    #[arg(long, value_delimiter = ',', default_value = "ann2,rsc")]
    pub methods: Vec<String>,
    #[arg(long, default_value = "oracle")]
    pub tuning: Tuning,
    #[arg(long = "cv-folds", default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 100)]
    pub refine_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_min_ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// One scenario per (rho, b) pair, rho varying slowest.
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<MethodSpec>,
    pub tuning: Tuning,
    pub cv: CvOptions,
}

#[derive(Debug, Serialize)]
struct Results<'a> {
    model: Model,
    tuning: Tuning,
    groups: Vec<Group<'a>>,
}

#[derive(Debug, Serialize)]
struct Group<'a> {
    rho: f64,
    b: f64,
    scenario: &'a Scenario,
    rows: &'a [ExperimentRow],
}

pub fn resolve(args: &SimulateArgs) -> Outcome<SimulateConfig> {
    let base = Scenario::default_for(args.model);
    let mut scenarios = Vec::new();
    for &rho in &args.rho {
        for &b in &args.b {
            let s = Scenario {
                n: args.n.unwrap_or(base.n),
                p: args.p.unwrap_or(base.p),
                q: args.q.unwrap_or(base.q),
                r_star: args.rstar.unwrap_or(base.r_star),
                r_x: match args.model {
                    Model::I => args.rx.unwrap_or_else(|| args.n.unwrap_or(base.n).min(args.p.unwrap_or(base.p))),
                    Model::II => args.rx.unwrap_or(base.r_x),
                },
                rho,
                b,
                sigma: args.sigma,
                replications: args.reps.unwrap_or(base.replications),
                seed: args.seed,
                model: args.model,
            };
            s.validate().map_err(|e| Failure::input(format!("invalid scenario: {e}")))?;
            scenarios.push(s);
        }
    }
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<MethodSpec>())
        .collect::<Result<Vec<_>, _>>()?;
    if methods.is_empty() {
        return Err(Failure::config("no methods requested"));
    }
    let cv = CvOptions {
        folds: args.folds,
        grid_size: args.grid_size,
        refine_size: args.refine_size,
        lambda_min_ratio: args.lambda_min_ratio,
        seed: args.seed,
        ..CvOptions::default()
    };
    cv.validate()?;
    Ok(SimulateConfig { scenarios, methods, tuning: args.tuning, cv })
}

pub fn render_table(groups: &[(Scenario, Vec<ExperimentRow>)]) -> String {
    let mut s = String::new();
    for (scenario, rows) in groups {
        let _ = writeln!(
            s,
            "Model {}  n={} p={} q={} r*={} r_x={} rho={} b={} sigma={} reps={}",
            scenario.model,
            scenario.n,
            scenario.p,
            scenario.q,
            scenario.r_star,
            scenario.r_x,
            scenario.rho,
            scenario.b,
            scenario.sigma,
            scenario.replications
        );
        let _ = writeln!(
            s,
            "{:<8} {:>18} {:>18} {:>10} {:>8} {:>6}",
            "method", "est SMSE (sd)", "pred SMSE (sd)", "mean rank", "exact %", "fails"
        );
        for r in rows {
            let _ = writeln!(
                s,
                "{:<8} {:>18} {:>18} {:>10.2} {:>8.1} {:>6}",
                r.method,
                format!("{:.4} ({:.3})", r.est_smse_mean, r.est_smse_sd),
                format!("{:.4} ({:.3})", r.pred_smse_mean, r.pred_smse_sd),
                r.mean_rank,
                r.pct_exact_rank,
                r.failures
            );
        }
        s.push('\n');
    }
    s
}

pub fn run(cfg: &SimulateConfig, out: &mut Outputs) -> Outcome<Vec<(Scenario, Vec<ExperimentRow>)>> {
    let model = cfg
        .scenarios
        .first()
        .map(|s| s.model)
        .ok_or_else(|| Failure::config("no scenarios"))?;
    let mut groups = Vec::new();
    for scenario in &cfg.scenarios {
        scenario.validate().map_err(|e| Failure::input(format!("invalid scenario: {e}")))?;
        let start = Instant::now();
        let rows = run_experiment(scenario, &cfg.methods, cfg.tuning, &cfg.cv)?;
        out.time(format!("rho={} b={}", scenario.rho, scenario.b), start.elapsed().as_secs_f64());
        for r in &rows {
            out.time(
                format!("rho={} b={} {} seconds per replication", scenario.rho, scenario.b, r.method),
                r.mean_seconds,
            );
        }
        groups.push((scenario.clone(), rows));
    }
    let results = Results {
        model,
        tuning: cfg.tuning,
        groups: groups
            .iter()
            .map(|(s, rows)| Group { rho: s.rho, b: s.b, scenario: s, rows })
            .collect(),
    };
    out.write_toml("results.toml", &results)?;
    let table = render_table(&groups);
    out.write("results.txt", &table)?;
    print!("{table}");
    Ok(groups)
}
