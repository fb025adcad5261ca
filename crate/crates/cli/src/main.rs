use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sfb_cli::config::{apply_overrides, parse_config, validate, Experiment};
use sfb_cli::runner::{run_audits, run_experiment, run_flow, write_flow, RunError};
use sfb_cli::ScenarioId;

#[derive(Parser)]
#[command(name = "sfb", version, about = "Stochastic forward-backward experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file.
    Run {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in scenario.
    Scenario {
        id: ScenarioId,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the scenario config instead of running it.
        #[arg(long)]
        print_config: bool,
    },
    /// Run the assumption audits of a config.
    Audit {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the mean flow of a config.
    Flow {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
        z0: Vec<f64>,
        #[arg(long = "T", value_name = "T")]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, overrides: &[String]) -> Result<Experiment, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })?;
    let exp = parse_config(&text)?;
    if overrides.is_empty() {
        return Ok(exp);
    }
    Ok(validate(apply_overrides(&exp.config, overrides)?)?)
}

fn out_dir(out: Option<PathBuf>, exp: &Experiment, fallback: &str) -> PathBuf {
    out.or_else(|| exp.config.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(fallback))
}

fn report_run(exp: &Experiment, out: &Path) -> Result<ExitCode, RunError> {
    let summary = run_experiment(exp, out)?;
    for p in &summary.predicates {
        let values: Vec<String> = p.values.iter().map(|v| format!("{v:.4e}")).collect();
        println!("{} {} (threshold {}): [{}]", if p.pass { "PASS" } else { "FAIL" }, p.name, p.threshold, values.join(", "));
    }
    println!("wrote {}", out.display());
    if summary.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("acceptance failed: {}", summary.failed().join(", "));
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, RunError> {
    match cli.command {
        Command::Run { config, overrides, out } => {
            let exp = load(&config, &overrides)?;
            let out = out_dir(out, &exp, "out");
            report_run(&exp, &out)
        }
        Command::Scenario { id, overrides, out, print_config } => {
            let config = apply_overrides(&id.config(), &overrides)?;
            let exp = validate(config)?;
            if print_config {
                print!("{}", sfb_cli::config::to_toml(&exp.config));
                return Ok(ExitCode::SUCCESS);
            }
            let out = out_dir(out, &exp, &format!("out/{id}"));
            report_run(&exp, &out)
        }
        Command::Audit { config, out } => {
            let exp = load(&config, &[])?;
            let out = out_dir(out, &exp, "out/audit");
            let reports = run_audits(&exp, &out)?;
            let mut failed = Vec::new();
            for r in &reports {
                println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.assumption);
                if !r.pass {
                    failed.push(r.assumption.clone());
                }
            }
            if failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("audits failed: {}", failed.join(", "));
                Ok(ExitCode::from(1))
            }
        }
        Command::Flow { config, z0, horizon, out } => {
            let exp = load(&config, &[])?;
            let flow = run_flow(&exp, &z0, horizon)?;
            let path = out_dir(out, &exp, "out/flow").join("flow.csv");
            write_flow(&flow, &path)?;
            let end: Vec<String> = flow.last().iter().map(|v| v.to_string()).collect();
            println!("z({horizon}) = [{}]", end.join(", "));
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
