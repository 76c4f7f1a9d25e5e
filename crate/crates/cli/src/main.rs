//! `rankpen`: singular-value penalized estimators from the command line.

mod approx;
mod check;
mod failure;
mod fit;
mod io;
mod manifest;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankpen::Verdict;

use crate::failure::{Failure, Outcome};
use crate::manifest::Outputs;

#[derive(Debug, Parser)]
#[command(name = "rankpen", version, about = "Low-rank matrix approximation and reduced-rank regression")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "RANKPEN_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Approx(approx::ApproxArgs),
    Fit(fit::FitArgs),
    Simulate(simulate::SimulateArgs),
    Check(check::CheckArgs),
    Rerun(RerunArgs),
}

/// Repeat a run from its manifest.
#[derive(Debug, Args)]
struct RerunArgs {
    /// A manifest.toml written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn approx_cmd(cfg: &approx::ApproxConfig, dir: &Path) -> Outcome<()> {
    let mut out = Outputs::create(dir)?;
    approx::run(cfg, &mut out)?;
    out.finish("approx", None, cfg)
}

fn fit_cmd(cfg: &fit::FitConfig, dir: &Path) -> Outcome<()> {
    let mut out = Outputs::create(dir)?;
    let fit = fit::run(cfg, &mut out)?;
    out.finish("fit", cfg.cv.as_ref().map(|c| c.seed), cfg)?;
    println!(
        "{}: lambda {} rank {} objective {}{}",
        fit.method,
        fit.lambda_used,
        fit.estimated_rank,
        fit.objective,
        if fit.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

fn simulate_cmd(cfg: &simulate::SimulateConfig, dir: &Path) -> Outcome<()> {
    let mut out = Outputs::create(dir)?;
    simulate::run(cfg, &mut out)?;
    out.finish("simulate", cfg.scenarios.first().map(|s| s.seed), cfg)
}

fn check_cmd(cfg: &check::CheckConfig, dir: &Path) -> Outcome<()> {
    let mut out = Outputs::create(dir)?;
    let checks = check::run(cfg, &mut out)?;
    out.finish("check", Some(cfg.settings.theory.seed), cfg)?;
    match checks.iter().filter(|c| c.verdict == Verdict::Fail).count() {
        0 => Ok(()),
        n => Err(Failure::Checks(n)),
    }
}

fn rerun(args: &RerunArgs) -> Outcome<()> {
    let path = &args.manifest;
    match manifest::command_of(path)?.as_str() {
        "approx" => approx_cmd(&manifest::load(path)?.config, &args.out),
        "fit" => fit_cmd(&manifest::load(path)?.config, &args.out),
        "simulate" => simulate_cmd(&manifest::load(path)?.config, &args.out),
        "check" => check_cmd(&manifest::load(path)?.config, &args.out),
        other => Err(Failure::input(format!("{}: unknown command '{other}'", path.display()))),
    }
}

fn dispatch(command: &Command) -> Outcome<()> {
    match command {
        Command::Approx(a) => approx_cmd(&approx::resolve(a)?, &a.out),
        Command::Fit(a) => fit_cmd(&fit::resolve(a)?, &a.out),
        Command::Simulate(a) => simulate_cmd(&simulate::resolve(a)?, &a.out),
        Command::Check(a) => check_cmd(&check::resolve(a)?, &a.out),
        Command::Rerun(a) => rerun(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("configuration error: --threads must be at least 1");
            return ExitCode::from(3);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("cannot start {threads} threads: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
