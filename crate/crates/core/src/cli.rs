//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::axioms::{check_fap, check_hull_membership, check_markov, PropertyReport};
use crate::config::{Config, ConfigError};
use crate::integrate::mean_vector;
use crate::integrate::IntegrationOptions;
use crate::pipeline::{synthesize_with_trace, verify, Problem, QuadratureRule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "meanrule",
    version,
    about = "Shared-weight quadrature rules for systems of integrals"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a quadrature rule for the configured system.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Write the rule here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Print stage events as JSON lines on stderr.
        #[arg(long)]
        trace: bool,
        /// Scale weights to sum to the domain mass instead of 1.
        #[arg(long)]
        unnormalized: bool,
        /// Cell budget for adaptive integration.
        #[arg(long)]
        max_cells: Option<usize>,
    },
    /// Re-check a rule against its config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rule: PathBuf,
    },
    /// Print the mean vector E X.
    Integrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property check on the configured measure.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        property: Property,
        /// Thresholds for the Markov check.
        #[arg(long = "epsilon", num_args = 1.., default_values_t = [0.1, 0.5, 1.0])]
        epsilons: Vec<f64>,
        /// Predicate pairs for the additivity check.
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Property {
    Markov,
    Fap,
    Hull,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn numeric(message: impl ToString) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e)
    }
}

#[derive(Serialize)]
struct IntegrateOutput {
    target: Vec<f64>,
    error_estimate: Vec<f64>,
    function_evals: usize,
    total_mass: f64,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn load(path: &Path) -> Result<(Config, Problem), Failure> {
    let config = Config::from_path(path)?;
    let problem = config.problem()?;
    Ok((config, problem))
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut impl Write, err: &mut impl Write) -> Result<i32, Failure> {
    match command {
        Command::Synthesize {
            config,
            output,
            trace,
            unnormalized,
            max_cells,
        } => {
            let (_, mut problem) = load(&config)?;
            problem.unnormalized |= unnormalized;
            if let Some(cells) = max_cells {
                problem.max_cells = cells;
            }
            let rule = synthesize_with_trace(&problem, |event| {
                if trace {
                    let line = serde_json::to_string(&event).expect("plain data serializes");
                    let _ = writeln!(err, "{line}");
                }
            })
            .map_err(Failure::numeric)?;
            emit(&to_json(&rule), output.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Verify { config, rule } => {
            let (_, problem) = load(&config)?;
            let text = std::fs::read_to_string(&rule)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", rule.display())))?;
            let rule: QuadratureRule = serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("malformed rule: {e}")))?;
            let report = verify(&rule, &problem).map_err(|e| match e {
                crate::pipeline::VerifyError::Dimension(_) => Failure::usage(e),
                _ => Failure::numeric(e),
            })?;
            emit(&to_json(&report), None, out)?;
            Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Integrate { config } => {
            let (_, problem) = load(&config)?;
            let opts = IntegrationOptions {
                tol: problem.tolerance,
                max_cells: problem.max_cells,
            };
            let mean = mean_vector(&problem.functions, &problem.measure, &opts)
                .map_err(|e| Failure::numeric(format!("integrate stage: {e}")))?;
            let result = IntegrateOutput {
                target: mean.values,
                error_estimate: mean.error_estimate,
                function_evals: mean.function_evals,
                total_mass: mean.total_mass,
            };
            emit(&to_json(&result), None, out)?;
            Ok(EXIT_OK)
        }
        Command::Check {
            config,
            property,
            epsilons,
            trials,
        } => {
            let (_, problem) = load(&config)?;
            let report = run_check(&problem, property, &epsilons, trials)?;
            emit(&to_json(&report), None, out)?;
            Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

fn run_check(
    problem: &Problem,
    property: Property,
    epsilons: &[f64],
    trials: usize,
) -> Result<PropertyReport, Failure> {
    use crate::axioms::AxiomError;
    let classify = |e: AxiomError| match e {
        AxiomError::NegativeFunction { .. }
        | AxiomError::BadEpsilon(_)
        | AxiomError::NotDiscrete => Failure::usage(e),
        _ => Failure::numeric(e),
    };
    match property {
        Property::Markov => {
            let opts = IntegrationOptions {
                tol: problem.tolerance,
                max_cells: problem.max_cells,
            };
            let mut merged: Option<PropertyReport> = None;
            for f in &problem.functions {
                let r = check_markov(f, &problem.measure, epsilons, &opts).map_err(classify)?;
                merged = Some(match merged {
                    None => r,
                    Some(mut m) => {
                        m.cases_run += r.cases_run;
                        m.failures.extend(r.failures);
                        m.passed &= r.passed;
                        m
                    }
                });
            }
            Ok(merged.expect("config has at least one function"))
        }
        Property::Fap => check_fap(&problem.measure, trials, problem.seed).map_err(classify),
        Property::Hull => check_hull_membership(
            &problem.functions,
            &problem.measure,
            problem.tolerance,
            problem.resolution,
        )
        .map_err(classify),
    }
}

fn emit(text: &str, path: Option<&Path>, out: &mut impl Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Failure::numeric(format!("cannot write output: {e}"))),
    }
}
