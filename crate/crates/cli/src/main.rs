//! `jumptrunc`: run the strong-convergence, stability, boundedness and oracle
//! experiments, spot-check assumptions, and evaluate the rate formulas.
//!
//! Exit codes: 0 when every check passed, 1 when a numeric check failed,
//! 2 on usage or configuration errors.

mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use jumptrunc::analysis::{corollary_exponent, theoretical_rate_high, theoretical_rate_high_capped, theoretical_rate_low};
use jumptrunc::experiments::{check_assumptions, run_boundedness, run_convergence, run_oracle, run_stability, Artifacts};
use serde_json::json;

use config::{resolve, Format, RunArgs, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] jumptrunc::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use jumptrunc::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Domain(_) | E::Configuration(_) | E::Resource(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Truncated Euler-Maruyama experiments for SDEs with Brownian and Poisson noise.
#[derive(Debug, Parser)]
#[command(name = "jumptrunc", version, about)]
struct Cli {
    /// Worker threads; overrides JUMPTRUNC_THREADS. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Strong L^r errors against a fine reference and their log-log slope.
    Convergence(RunArgs),
    /// Mean-square decay of the second moment.
    Stability(RunArgs),
    /// Late-time second moment against the asymptotic bound.
    Boundedness(RunArgs),
    /// Plain and truncated schemes against the exact geometric jump-diffusion.
    Oracle(RunArgs),
    /// Sampled checks of the truncation policy and structural conditions of a preset.
    CheckAssumptions(CheckArgs),
    /// Evaluate the theoretical convergence rates.
    Rates(RatesArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct RatesArgs {
    /// Moment order r.
    #[arg(long)]
    r: f64,
    /// Growth exponent gamma of the high-moment rate.
    #[arg(long, requires = "p", conflicts_with = "gamma_bar")]
    gamma: Option<f64>,
    /// Moment bound p of the high-moment rate.
    #[arg(long, requires = "gamma")]
    p: Option<f64>,
    /// Truncation exponent eps; defaults to min(1/4, 1/p).
    #[arg(long, requires = "p")]
    eps: Option<f64>,
    /// Growth exponent of the low-moment rate (0 < r <= 2/(2 + gamma_bar)).
    #[arg(long)]
    gamma_bar: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

/// Shortest decimal form with at most 12 fractional digits.
fn number(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn rates(args: &RatesArgs) -> Result<(), CliError> {
    let report = match (args.gamma, args.p, args.gamma_bar) {
        (Some(gamma), Some(p), None) => {
            let rate = match args.eps {
                Some(eps) => theoretical_rate_high(args.r, gamma, p, eps)?,
                None => theoretical_rate_high_capped(args.r, gamma, p)?,
            };
            let eps = args.eps.unwrap_or(0.25f64.min(1.0 / p));
            let exponent = corollary_exponent(args.r, gamma, p, eps)?;
            json!({"rate": rate, "eps": eps, "exponent": exponent})
        }
        (None, None, Some(gb)) => {
            let (eps, rate) = theoretical_rate_low(args.r, gb)?;
            json!({"rate": rate, "eps": eps})
        }
        _ => {
            return Err(CliError::Usage(
                "give --gamma and --p (high-moment rate) or --gamma-bar (low-moment rate)".into(),
            ))
        }
    };
    match args.format {
        Format::Text => println!("{}", number(report["rate"].as_f64().unwrap_or(f64::NAN))),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default()),
    }
    Ok(())
}

fn report(artifacts: &Artifacts, format: Format) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&artifacts.summary).unwrap_or_default()),
        Format::Text => {
            let s = &artifacts.summary;
            println!("preset: {}", s["preset"].as_str().unwrap_or("?"));
            println!("experiment: {}", s["experiment"].as_str().unwrap_or("?"));
            for key in [
                "theory_rate",
                "fitted_slope",
                "theory_exponent",
                "fitted_exponent",
                "theory_bound",
                "continuous_bound",
                "limsup_estimate",
            ] {
                if let Some(v) = s.get(key).and_then(|v| v.as_f64()) {
                    println!("{key}: {}", number(v));
                }
            }
            if let Some(pass) = s["pass"].as_object() {
                for (k, v) in pass {
                    let state = match v.as_bool() {
                        Some(true) => "PASS",
                        Some(false) => "FAIL",
                        None => "n/a",
                    };
                    println!("check {k}: {state}");
                }
            }
            println!("artifacts: {}", artifacts.dir.display());
            println!("{}", if artifacts.passed { "PASS" } else { "FAIL" });
        }
    }
}

fn run_experiment(sub: Subcommand, args: &RunArgs) -> Result<bool, CliError> {
    let resolved = resolve(sub, args)?;
    let (spec, problem) = (&resolved.spec, &resolved.problem);
    let artifacts = match sub {
        Subcommand::Convergence => run_convergence(problem, spec)?,
        Subcommand::Stability => run_stability(problem, spec)?,
        Subcommand::Boundedness => run_boundedness(problem, spec)?,
        Subcommand::Oracle => run_oracle(spec)?,
    };
    report(&artifacts, resolved.format);
    Ok(artifacts.passed)
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("JUMPTRUNC_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("JUMPTRUNC_THREADS must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, CliError> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Convergence(a) => run_experiment(Subcommand::Convergence, a),
        Command::Stability(a) => run_experiment(Subcommand::Stability, a),
        Command::Boundedness(a) => run_experiment(Subcommand::Boundedness, a),
        Command::Oracle(a) => run_experiment(Subcommand::Oracle, a),
        Command::CheckAssumptions(a) => {
            let rep = check_assumptions(&a.preset).map_err(|e| match e {
                jumptrunc::Error::Configuration(m) => CliError::Usage(m),
                other => other.into(),
            })?;
            match a.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&rep).unwrap_or_default()),
                Format::Text => {
                    let flag = |b: bool| if b { "PASS" } else { "FAIL" };
                    println!("preset: {}", rep.preset);
                    println!("check policy: {}", flag(rep.policy.passed()));
                    for f in &rep.policy.failures {
                        println!("  {f}");
                    }
                    println!("check envelope: {} (worst ratio {})", flag(rep.envelope.passed), number(rep.envelope.worst_ratio));
                    println!("check phi_bound: {} (worst ratio {})", flag(rep.phi_bound_ok), number(rep.phi_bound_ratio));
                    if let (Some(ok), Some(e)) = (rep.khasminskii_ok, rep.khasminskii_max_excess) {
                        println!("check khasminskii: {} (max excess {})", flag(ok), number(e));
                    }
                    println!("{}", flag(rep.passed));
                }
            }
            Ok(rep.passed)
        }
        Command::Rates(a) => rates(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn number_formatting() {
        assert_eq!(number(0.15), "0.15");
        assert_eq!(number(1.0 / 12.0), "0.083333333333");
        assert_eq!(number(2.0), "2");
        assert_eq!(number(-0.0), "0");
    }

    #[test]
    fn help_documents_every_config_field() {
        let fields = serde_json::to_value(config::RunConfig::default()).unwrap();
        let fields = fields.as_object().unwrap();
        assert_eq!(fields.len(), 14);
        for sub in ["convergence", "stability", "boundedness", "oracle"] {
            let help = Cli::command()
                .find_subcommand_mut(sub)
                .unwrap()
                .render_long_help()
                .to_string();
            for name in fields.keys() {
                let flag = name.replace('_', "-");
                assert!(help.contains(&flag), "`{sub} --help` does not mention {name}");
            }
        }
    }

    #[test]
    fn schema_lists_every_config_field() {
        let schema_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
        let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
        let mut documented: Vec<&String> = schema["properties"].as_object().unwrap().keys().collect();
        let config = serde_json::to_value(config::RunConfig::default()).unwrap();
        let mut fields: Vec<&String> = config.as_object().unwrap().keys().collect();
        documented.sort();
        fields.sort();
        assert_eq!(documented, fields);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
