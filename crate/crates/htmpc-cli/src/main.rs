use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use htmpc::closed_loop::{
    self, emit, load_config, load_trace, prepare, verify_trace, ScenarioConfig,
};
use htmpc::plant::validate_assumption1;
use htmpc::reduction::validate_assumption2;

#[derive(Parser)]
#[command(
    name = "htmpc",
    version,
    about = "Hierarchical multirate tube MPC: validate, tune and simulate scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario and check the plant and reduced-model assumptions.
    Validate { config: PathBuf },
    /// Run the offline tuning chain and print its report.
    Tune {
        config: PathBuf,
        /// Sweep the slow period over `start:end:step` and print one summary line per value.
        #[arg(long, value_name = "A:B:STEP")]
        nl_sweep: Option<String>,
    },
    /// Tune, simulate and verify; writes trace.csv, slow.csv, report.json and config.json.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a directory written by `simulate`.
    Report { dir: PathBuf },
}

fn parse_sweep(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        bail!("--nl-sweep expects A:B:STEP, got `{s}`");
    };
    let (a, b, step) = (a.parse()?, b.parse()?, step.parse()?);
    if step == 0 || a == 0 || a > b {
        bail!("--nl-sweep needs 0 < A <= B and STEP > 0");
    }
    Ok((a, b, step))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(v)?
    )?;
    Ok(())
}

fn validate(cfg: &ScenarioConfig) -> Result<bool> {
    let problem = cfg.problem::<f64>()?;
    let a1 = validate_assumption1(&problem.sys);
    let a2 = validate_assumption2(&problem.rm, &problem.sys)?;
    let passed = a1.passed() && a2.passed();
    print_json(&json!({ "plant": a1, "reduced_model": a2, "passed": passed }))?;
    Ok(passed)
}

fn tune(cfg: &ScenarioConfig, sweep: Option<&str>) -> Result<bool> {
    let Some(sweep) = sweep else {
        let mut problem = cfg.problem::<f64>()?;
        problem.override_tuning = true;
        let prepared = prepare(&problem)?;
        let passed = prepared.assumption1.passed()
            && prepared.assumption2.passed()
            && prepared.tuned.report.passed;
        print_json(&json!({ "tuning": prepared.tuned.report, "passed": passed }))?;
        return Ok(passed);
    };
    let (a, b, step) = parse_sweep(sweep)?;
    println!(
        "{:>5} {:>12} {:>12} {:>12} {:>12} {:>7}",
        "N_L", "kappa", "max_chi", "sigma", "rho_w", "passed"
    );
    let mut all = true;
    for n_l in (a..=b).step_by(step) {
        let mut c = cfg.clone();
        c.timing.n_l = n_l;
        c.override_tuning = true;
        let row = c.problem::<f64>().and_then(|p| prepare(&p));
        match row {
            Ok(prep) => {
                let r = &prep.tuned.report;
                let chi = r.chi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                println!(
                    "{n_l:>5} {:>12.5e} {chi:>12.5e} {:>12.5e} {:>12.5e} {:>7}",
                    r.kappa, r.sigma_nl, r.rho_w, r.passed
                );
                all &= r.passed;
            }
            Err(e) => {
                println!("{n_l:>5} error: {e}");
                all = false;
            }
        }
    }
    Ok(all)
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<bool> {
    let problem = cfg.problem::<f64>()?;
    let prepared = prepare(&problem)?;
    let trace = closed_loop::run(
        &problem,
        &prepared,
        &cfg.schedule(),
        &cfg.x0,
        cfg.slow_steps,
    )?;
    let verdict = verify_trace(&trace, &prepared.tuned.report);
    let report = json!({
        "plant": prepared.assumption1,
        "reduced_model": prepared.assumption2,
        "tuning": prepared.tuned.report,
        "verdict": verdict,
        "events": trace.events,
        "failure": trace.failure,
        "initial_error": trace.initial_error,
        "final_error": trace.final_error,
    });
    emit(out, &trace, &report, cfg).with_context(|| format!("writing {}", out.display()))?;
    for c in &verdict.claims {
        let status = serde_json::to_value(c.status)?;
        println!(
            "claim {:<4} {:<15} {}",
            c.id,
            status.as_str().unwrap_or("?"),
            c.detail
        );
    }
    for e in &trace.events {
        println!("event {e}");
    }
    Ok(verdict.passed())
}

fn report(dir: &Path) -> Result<bool> {
    let files = load_trace(dir)?;
    let col_max = |name: &str| {
        files.slow.column(name).map(|v| {
            v.into_iter()
                .filter(|x| !x.is_nan())
                .fold(f64::NEG_INFINITY, f64::max)
        })
    };
    let margin_min = files
        .fast
        .headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("input_margin_"))
        .flat_map(|(i, _)| files.fast.rows.iter().map(move |r| r[i]))
        .fold(f64::INFINITY, f64::min);
    println!("fast steps          {}", files.fast.rows.len());
    println!("slow steps          {}", files.slow.rows.len());
    println!(
        "max ‖w̄‖             {:e}",
        col_max("w_norm").unwrap_or(f64::NAN)
    );
    println!(
        "rho_w               {:e}",
        col_max("rho_w").unwrap_or(f64::NAN)
    );
    println!("min input margin    {margin_min:e}");
    println!(
        "max rhs residual    {:e}",
        col_max("rhs_identity_residual").unwrap_or(f64::NAN)
    );
    let claims = files.report["verdict"]["claims"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let mut passed = !claims.is_empty();
    for c in &claims {
        let status = c["status"].as_str().unwrap_or("?");
        passed &= status == "pass";
        println!(
            "claim {:<4} {:<15} {}",
            c["id"].as_str().unwrap_or("?"),
            status,
            c["detail"].as_str().unwrap_or("")
        );
    }
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { config } => validate(&load_config(&config)?),
        Command::Tune { config, nl_sweep } => tune(&load_config(&config)?, nl_sweep.as_deref()),
        Command::Simulate { config, out } => simulate(&load_config(&config)?, &out),
        Command::Report { dir } => report(&dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
