//! Command-line front end.
//!
//! Every failure writes one line starting with `error[<kind>]:` to the error
//! stream. Exit codes: 0 success, 1 numerical non-convergence, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::harness::{run_experiment, write_outputs, ExperimentConfig, ExperimentError, InstanceSpec};
use crate::model::{Goal, ProblemInstance};
use crate::presets::{describe, preset, GoalKind, PRESET_NAMES};
use crate::rates::{self, RateError, RateKind, RateReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ikg", version, about = "Fixed-budget best, epsilon-good and feasible arm identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the rate and limiting allocation of a policy as JSON.
    Rates {
        #[command(flatten)]
        source: Source,
        /// kg, ikg or ttei (best-arm goals only; other goals use their iKG variant)
        #[arg(long)]
        policy: Option<String>,
        /// Best-arm share for ttei.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
    /// Run a macro-replication experiment and write CSVs into --out.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the built-in instances with their ground-truth targets.
    Presets,
    /// Exhaustive grid search for the rate-optimal allocation (k <= 5).
    Oracle {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// Built-in instance name.
    #[arg(long, conflicts_with = "instance", required_unless_present = "instance", requires = "goal")]
    preset: Option<String>,
    /// JSON file with {arms, goal, ranking_measure?, senses?}.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// bai, eps_good or feasible.
    #[arg(long)]
    goal: Option<String>,
}

/// Failure kinds, mapped to the error prefix and exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Numeric(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<RateError> for Failure {
    fn from(e: RateError) -> Self {
        match e {
            RateError::NotConverged { .. } | RateError::Bracket(_) => Failure::Numeric(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `argv` (including the program name) and runs the command.
pub fn dispatch<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {}", one_line(first));
            let _ = write!(err, "{text}");
            return EXIT_CONFIG;
        }
    };
    match run(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (tag, msg, code) = match f {
                Failure::Config(m) => ("config", m, EXIT_CONFIG),
                Failure::Io(m) => ("io", m, EXIT_CONFIG),
                Failure::Numeric(m) => ("numeric", m, EXIT_NUMERIC),
            };
            let _ = writeln!(err, "error[{tag}]: {}", one_line(&msg));
            code
        }
    }
}

fn load_instance(source: &Source) -> Result<(String, ProblemInstance), Failure> {
    let goal = source.goal.as_deref().map(str::parse::<GoalKind>).transpose().map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(name) = &source.preset {
        let goal = goal.ok_or_else(|| Failure::Config("--goal is required with --preset".into()))?;
        let inst = preset(name, goal).map_err(|e| Failure::Config(e.to_string()))?;
        return Ok((name.clone(), inst));
    }
    let path = source.instance.as_deref().expect("clap enforces one source");
    let text = read(path)?;
    let inst = InstanceSpec::from_json(&text)?.build()?;
    if let Some(goal) = goal {
        if goal != GoalKind::of(inst.goal()) {
            return Err(Failure::Config(format!("--goal {goal} disagrees with the goal in {}", path.display())));
        }
    }
    Ok(("custom".into(), inst))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn print_json(out: &mut dyn Write, report: &RateReport) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::Io(e.to_string()))
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Presets => {
            for name in PRESET_NAMES {
                for goal in GoalKind::ALL {
                    let inst = preset(name, goal).map_err(|e| Failure::Config(e.to_string()))?;
                    writeln!(out, "{}", describe(name, &inst)).map_err(|e| Failure::Io(e.to_string()))?;
                }
            }
            Ok(())
        }
        Command::Rates { source, policy, beta } => {
            let (_, inst) = load_instance(&source)?;
            let kind = match (inst.goal(), policy.as_deref()) {
                (Goal::BestArm, None | Some("ikg")) => RateKind::GammaIkg,
                (Goal::BestArm, Some("kg")) => RateKind::GammaKg,
                (Goal::BestArm, Some("ttei")) => RateKind::GammaTtei { beta },
                (Goal::EpsilonGood { .. }, None | Some("ikg_eps")) => RateKind::GammaEps,
                (Goal::Feasibility { .. }, None | Some("ikg_f")) => RateKind::GammaF,
                (goal, Some(p)) => {
                    return Err(Failure::Config(format!("no rate for policy `{p}` with goal {}", goal.short_name())))
                }
            };
            match rates::compute_rate(&inst, kind) {
                Ok(alloc) => print_json(out, &RateReport::new(kind.tag(), &alloc)),
                Err(RateError::NotConverged { allocation, .. }) => {
                    // residuals go to stdout so the partial answer is inspectable
                    print_json(out, &RateReport::new(kind.tag(), &allocation))?;
                    let r = &allocation.residuals;
                    Err(Failure::Numeric(format!(
                        "solver did not converge (simplex {:e}, balance {:?}, rate equality {:e})",
                        r.simplex, r.balance, r.rate_equality
                    )))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Oracle { source, grid, threads } => {
            let (_, inst) = load_instance(&source)?;
            let alloc = rates::brute_force_allocation(&inst, grid, threads)?;
            print_json(out, &RateReport::new("brute_force", &alloc))
        }
        Command::Run { config, out: dir, threads, seed } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)?;
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &dir)?;
            writeln!(out, "wrote {} and {}", dir.join("results.csv").display(), dir.join("sampling_rates.csv").display())
                .map_err(|e| Failure::Io(e.to_string()))
        }
    }
}
