use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hsmon_core::evaluation::{replay_trace, report_from_trace};
use hsmon_core::{run_evaluation, EvalOptions, PRReport, Scenario, Trace};

/// Synthesizes runtime model monitors for hybrid programs and evaluates them on
/// simulated episodes.
#[derive(Parser, Debug)]
#[command(name = "hsmon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive the arithmetic monitor formula of a scenario's program.
    Synth(SynthArgs),
    /// Monitor operations on recorded traces.
    Monitor {
        #[command(subcommand)]
        command: MonitorCommand,
    },
    /// Sandboxed simulation.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
    /// Recompute precision and recall from a trace CSV.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum MonitorCommand {
    /// Replay a monitor over the transitions of a trace CSV.
    Eval(EvalArgs),
}

#[derive(Subcommand, Debug)]
enum SimCommand {
    /// Run episodes and report precision and recall.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scenario file (`.hp`).
    #[arg(long)]
    model: PathBuf,
    /// Monitor kind: exact, control, disturbance, pairwise or rolling. Defaults to the scenario's.
    #[arg(long)]
    kind: Option<String>,
    /// Output `.mon` file; the formula is printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON-lines rule trace; defaults to the output path with extension `trace.jsonl`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    kind: Option<String>,
    /// Trace CSV as written by `sim run --out`.
    #[arg(long)]
    trace: PathBuf,
    /// Overrides the definition `D` (the disturbance or measurement bound).
    #[arg(long)]
    delta: Option<f64>,
    /// Trace CSV with the replayed verdicts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 if any transition violates the monitor.
    #[arg(long)]
    expect_clean: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Base seed; `HSMON_SEED` is used when omitted, then the scenario's.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kind: Option<String>,
    /// Trace CSV of all episodes.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary file; the summary is always printed as well.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Exit with status 1 if precision or recall falls outside the scenario's `[expectations]`.
    #[arg(long)]
    expect_clean: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

enum Outcome {
    Clean,
    Findings,
}

/// Writes to stdout, giving up silently if the reader has gone away.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn write_file(path: &Path, data: &str) -> Result<()> {
    std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let s = Scenario::load(&a.model)?;
    let kind = a.kind.unwrap_or_else(|| s.model_kind.clone());
    let m = s.monitor(&kind)?;
    let formula = format!("{}\n", m.formula);
    match &a.out {
        Some(out) => {
            write_file(out, &formula)?;
            let trace = a.trace.clone().unwrap_or_else(|| out.with_extension("trace.jsonl"));
            write_file(&trace, &m.report.trace_jsonl())?;
            eprintln!(
                "{} [{kind}]: {} residual quantifier(s), wrote {} and {}",
                s.name,
                m.report.residual_quantifiers,
                out.display(),
                trace.display()
            );
        }
        None => {
            say!("{}", m.formula);
            if let Some(trace) = &a.trace {
                write_file(trace, &m.report.trace_jsonl())?;
            }
        }
    }
    Ok(Outcome::Clean)
}

fn read_trace(path: &Path) -> Result<Trace> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Trace::read_csv(BufReader::new(f))?)
}

fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    trace.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn monitor_eval(a: EvalArgs) -> Result<Outcome> {
    let mut overrides = BTreeMap::new();
    if let Some(d) = a.delta {
        overrides.insert("D".to_string(), d);
    }
    let s = Scenario::load_with(&a.model, &overrides)?;
    let kind = a.kind.unwrap_or_else(|| s.model_kind.clone());
    let trace = read_trace(&a.trace)?;
    let rep = replay_trace(&s, &kind, &trace)?;
    if let Some(out) = &a.out {
        write_trace(out, &rep.trace)?;
    }
    say!("{} [{kind}]: {} transitions checked, {} violated", s.name, rep.checked, rep.violations);
    for (run, step) in &rep.first_violations {
        say!("  run {run}: first violation at step {step}");
    }
    Ok(if a.expect_clean && rep.violations > 0 { Outcome::Findings } else { Outcome::Clean })
}

fn within(v: Option<f64>, band: Option<(f64, f64)>) -> bool {
    match (v, band) {
        (_, None) => true,
        (Some(x), Some((lo, hi))) => lo <= x && x <= hi,
        (None, Some(_)) => false,
    }
}

fn sim_run(a: RunArgs) -> Result<Outcome> {
    let s = Scenario::load(&a.scenario)?;
    let mut opts = EvalOptions::from_scenario(&s).with_env_seed()?;
    if let Some(r) = a.runs {
        opts.runs = r;
    }
    if let Some(n) = a.steps {
        opts.steps = n;
    }
    if let Some(seed) = a.seed {
        opts.seed = seed;
    }
    if opts.runs == 0 || opts.steps == 0 {
        bail!("--runs and --steps must be positive");
    }
    opts.kind = a.kind;
    let (report, trace) = run_evaluation(&s, &opts)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        write_trace(out, &trace)?;
    }
    if let Some(path) = &a.summary {
        write_file(path, &format!("{json}\n"))?;
    }
    say!("{}", report.summary());
    say!("{json}");
    let met = within(report.precision, s.expectations.precision) && within(report.recall, s.expectations.recall);
    if !met {
        eprintln!("precision or recall outside the scenario's expectations");
    }
    Ok(if a.expect_clean && !met { Outcome::Findings } else { Outcome::Clean })
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let trace = read_trace(&a.trace)?;
    let mut rep: PRReport = report_from_trace(&trace);
    rep.scenario = a.trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    rep.monitor = "recorded".into();
    if a.json {
        say!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        say!("{}", rep.summary());
    }
    Ok(Outcome::Clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Monitor { command: MonitorCommand::Eval(a) } => monitor_eval(a),
        Command::Sim { command: SimCommand::Run(a) } => sim_run(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
