use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hrc_core::io::{parse_csp_text, parse_dimacs_col};
use hrc_core::metrics::{emit_comparison, emit_report, ReportFormat};
use hrc_core::simnet::{run_async, run_synchronous, SimOutcome};
use hrc_core::{brute_force_solve, compare_reports, validate_instance, CspInstance, Outcome, Policy, SatStatus};

const EXIT_SATURATED: u8 = 0;
const EXIT_REFUTED: u8 = 1;
const EXIT_ERROR: u8 = 2;
const EXIT_TRUNCATED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "hrc", version, about = "Hyper-resolution consistency for distributed CSPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the multi-agent consistency algorithm on one instance.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Ekbm)]
        policy: PolicyArg,
        #[command(flatten)]
        sched: SchedArgs,
    },
    /// Run both policies under the same schedule and compare their counters.
    Compare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        sched: SchedArgs,
    },
    /// Check an instance for undeclared variables, empty domains and
    /// out-of-domain literals.
    Validate {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Solve by exhaustive enumeration.
    SolveOracle {
        #[command(flatten)]
        input: InputArgs,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Instance file: DIMACS `.col` (needs --colors) or CSP text.
    instance: PathBuf,
    /// Number of colors for DIMACS graph-coloring input.
    #[arg(long)]
    colors: Option<u32>,
}

#[derive(Args)]
struct SchedArgs {
    #[arg(long, value_enum, default_value_t = SchedulerArg::Sync)]
    scheduler: SchedulerArg,
    /// RNG seed for the async scheduler (required there, rejected for sync).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1_000)]
    max_rounds: u64,
    #[arg(long, default_value_t = 10_000_000)]
    max_events: u64,
    #[arg(long, default_value_t = 5)]
    max_delay: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Write the message trace as JSON lines to this path.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Baseline,
    Ekbm,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Baseline => Policy::Baseline,
            PolicyArg::Ekbm => Policy::Ekbm,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchedulerArg {
    Sync,
    Async,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

fn is_dimacs(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("col" | "dimacs"))
}

fn load(input: &InputArgs) -> Result<CspInstance> {
    let text =
        fs::read_to_string(&input.instance).with_context(|| format!("cannot read {}", input.instance.display()))?;
    if is_dimacs(&input.instance) || input.colors.is_some() {
        let colors = input.colors.context("DIMACS input needs --colors")?;
        let parsed = parse_dimacs_col(&text, colors)?;
        for w in &parsed.warnings {
            eprintln!("warning: {w}");
        }
        Ok(parsed.instance)
    } else {
        Ok(parse_csp_text(&text)?)
    }
}

impl SchedArgs {
    fn check(&self) -> Result<()> {
        match (self.scheduler, self.seed) {
            (SchedulerArg::Async, None) => bail!("--scheduler async requires --seed"),
            (SchedulerArg::Sync, Some(_)) => bail!("--seed only applies to --scheduler async"),
            _ => Ok(()),
        }
    }

    fn run(&self, inst: &CspInstance, policy: Policy) -> Result<SimOutcome> {
        Ok(match self.scheduler {
            SchedulerArg::Sync => run_synchronous(inst, policy, self.max_rounds)?,
            SchedulerArg::Async => run_async(
                inst,
                policy,
                self.seed.expect("checked"),
                self.max_delay,
                self.max_events,
            )?,
        })
    }
}

fn write_trace(path: &Path, runs: &[&SimOutcome]) -> Result<()> {
    let body: String = runs.iter().map(|r| r.trace.to_jsonl()).collect();
    fs::write(path, body).with_context(|| format!("cannot write trace to {}", path.display()))
}

fn cmd_run(input: &InputArgs, policy: Policy, sched: &SchedArgs) -> Result<u8> {
    sched.check()?;
    let inst = load(input)?;
    let out = sched.run(&inst, policy)?;
    print!("{}", emit_report(&out.report, sched.format.into()));
    if let Some(path) = &sched.trace {
        write_trace(path, &[&out])?;
    }
    Ok(match out.verdict.outcome {
        Outcome::Refuted => EXIT_REFUTED,
        Outcome::Saturated if out.truncated() => EXIT_TRUNCATED,
        Outcome::Saturated => EXIT_SATURATED,
    })
}

fn cmd_compare(input: &InputArgs, sched: &SchedArgs) -> Result<u8> {
    sched.check()?;
    let inst = load(input)?;
    let base = sched.run(&inst, Policy::Baseline)?;
    let ekbm = sched.run(&inst, Policy::Ekbm)?;
    let cmp = compare_reports(&base.report, &ekbm.report)?;
    print!("{}", emit_comparison(&cmp, sched.format.into()));
    if let Some(path) = &sched.trace {
        write_trace(path, &[&base, &ekbm])?;
    }
    Ok(if cmp.verdicts_agree { 0 } else { EXIT_MISMATCH })
}

fn cmd_validate(input: &InputArgs) -> Result<u8> {
    let text =
        fs::read_to_string(&input.instance).with_context(|| format!("cannot read {}", input.instance.display()))?;
    let parsed = if is_dimacs(&input.instance) || input.colors.is_some() {
        let colors = input.colors.context("DIMACS input needs --colors")?;
        parse_dimacs_col(&text, colors).map(|p| p.instance)
    } else {
        parse_csp_text(&text)
    };
    match parsed {
        Ok(inst) => match validate_instance(&inst) {
            Ok(()) => {
                println!("ok: {} variables, {} nogoods", inst.var_count(), inst.nogoods().len());
                Ok(0)
            }
            Err(violations) => {
                for v in violations {
                    println!("violation: {v}");
                }
                Ok(EXIT_ERROR)
            }
        },
        Err(e) => {
            println!("error: {e}");
            Ok(EXIT_ERROR)
        }
    }
}

fn cmd_solve_oracle(input: &InputArgs) -> Result<u8> {
    let inst = load(input)?;
    let r = brute_force_solve(&inst)?;
    match r.status {
        SatStatus::Sat => {
            let witness = r.witness.expect("sat has a witness");
            let assignment: Vec<String> = inst
                .vars()
                .zip(witness)
                .map(|(v, d)| format!("{}={d}", inst.label(v)))
                .collect();
            println!("sat models={} witness: {}", r.model_count, assignment.join(" "));
            Ok(EXIT_SATURATED)
        }
        SatStatus::Unsat => {
            println!("unsat models=0");
            Ok(EXIT_REFUTED)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { input, policy, sched } => cmd_run(input, (*policy).into(), sched),
        Command::Compare { input, sched } => cmd_compare(input, sched),
        Command::Validate { input } => cmd_validate(input),
        Command::SolveOracle { input } => cmd_solve_oracle(input),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
