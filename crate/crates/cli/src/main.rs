use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twistbound_cli::scenario::{self, SchemaError};
use twistbound_cli::{EXIT_CHECK_FAILED, EXIT_OK, EXIT_SCHEMA};
use twistbound_core::sigma::{find_sigma, SigmaOptions, SigmaOutcome};
use twistbound_core::verify::Verdict;

#[derive(Parser)]
#[command(
    name = "twistbound",
    about = "Construct and verify twisted-gradient contraction certificates for degenerate diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the kinetic Fokker-Planck certificate for Hessian bounds (m, M).
    CertifyKfp {
        #[arg(long = "m")]
        m: f64,
        #[arg(long = "M")]
        big_m: f64,
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
        /// Write the certificate document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a constant Σ certifying the drift condition on Jacobian samples.
    FindSigma {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification scenario from a config file or a builtin.
    Run {
        #[arg(long, conflicts_with = "builtin")]
        config: Option<PathBuf>,
        #[arg(long)]
        builtin: Option<String>,
        /// Output directory for <name>.report.json and <name>.series.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads for check execution (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Summarize an existing report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = true)]
        summary: bool,
    },
}

/// Jacobian-sample source for `find-sigma`.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SigmaConfig {
    name: String,
    /// Explicit Jacobian matrices, row-major.
    #[serde(default)]
    jacobians: Vec<Vec<Vec<f64>>>,
    /// Or an operator sampled on a quasi-random ball.
    operator: Option<scenario::OperatorSpecForSigma>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    max_iters: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    eps_floor: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            if err.is::<SchemaError>() {
                eprintln!("error: {err}");
                ExitCode::from(EXIT_SCHEMA)
            } else {
                eprintln!("error: {err}");
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::CertifyKfp {
            m,
            big_m,
            slack,
            out,
        } => {
            let params = twistbound_core::kfp::solve_kfp_params(m, big_m, slack)?;
            let doc = toml::to_string_pretty(&params)?;
            match out {
                Some(path) => std::fs::write(path, doc)?,
                None => print!("{doc}"),
            }
            Ok(ExitCode::from(EXIT_OK))
        }
        Command::FindSigma { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| SchemaError(format!("cannot read {}: {e}", config.display())))?;
            let cfg: SigmaConfig = toml::from_str(&text)
                .map_err(|e| SchemaError(format!("config schema violation: {e}")))?;
            let jacobians = scenario::sigma_jacobians(&cfg.jacobians, &cfg.operator, cfg.samples, cfg.radius)?;
            let opts = SigmaOptions {
                max_iters: cfg.max_iters.unwrap_or(400),
                tol: cfg.tol.unwrap_or(1e-4),
                eps_floor: cfg.eps_floor.unwrap_or(1e-6),
                trace_gauge: None,
            };
            let outcome = find_sigma(&jacobians, &opts)?;
            let doc = serde_json::to_string_pretty(&outcome)?;
            match &out {
                Some(path) => std::fs::write(path, &doc)?,
                None => println!("{doc}"),
            }
            match outcome {
                SigmaOutcome::Certificate(cert) => {
                    eprintln!(
                        "{}: certified rate {:.6e} on {} samples",
                        cfg.name, cert.rate_a, cert.sample_size
                    );
                    Ok(ExitCode::from(EXIT_OK))
                }
                SigmaOutcome::Infeasible(rep) => {
                    eprintln!(
                        "{}: infeasible (best residual eigenvalue {:.6e})",
                        cfg.name, rep.best_phi
                    );
                    Ok(ExitCode::from(EXIT_CHECK_FAILED))
                }
            }
        }
        Command::Run {
            config,
            builtin,
            out,
            jobs,
        } => {
            if jobs > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build_global()
                    .ok();
            }
            let text = match (&config, &builtin) {
                (Some(path), None) => std::fs::read_to_string(path)
                    .map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?,
                (None, Some(name)) => scenario::builtin_scenario(name)
                    .ok_or_else(|| {
                        SchemaError(format!(
                            "unknown builtin '{name}'; available: {}",
                            scenario::builtin_names().join(", ")
                        ))
                    })?
                    .to_string(),
                _ => {
                    return Err(Box::new(SchemaError(
                        "exactly one of --config or --builtin is required".into(),
                    )))
                }
            };
            let report = scenario::run_scenario_str(&text)?;
            let (json_path, csv_path) = scenario::write_outputs(&report, &out)?;
            eprintln!(
                "{}: {} pass, {} fail, {} inconclusive, {} degenerate -> {}, {}",
                report.name,
                report.summary.pass,
                report.summary.fail,
                report.summary.inconclusive,
                report.summary.degenerate,
                json_path.display(),
                csv_path.display()
            );
            for check in &report.checks {
                if check.verdict == Verdict::Inconclusive {
                    eprintln!("  flagged inconclusive: {}", check.check_name);
                }
            }
            if report.any_failed() {
                Ok(ExitCode::from(EXIT_CHECK_FAILED))
            } else {
                Ok(ExitCode::from(EXIT_OK))
            }
        }
        Command::Report { input, summary } => {
            let text = std::fs::read_to_string(&input)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if summary {
                let name = value["name"].as_str().unwrap_or("?");
                println!("scenario: {name}");
                if let Some(checks) = value["checks"].as_array() {
                    println!("{:<28} {:<14} {:>14}", "check", "verdict", "margin");
                    for c in checks {
                        println!(
                            "{:<28} {:<14} {:>14.6e}",
                            c["check_name"].as_str().unwrap_or("?"),
                            c["verdict"].as_str().unwrap_or("?"),
                            c["margin"].as_f64().unwrap_or(f64::NAN)
                        );
                    }
                }
            }
            Ok(ExitCode::from(EXIT_OK))
        }
    }
}
