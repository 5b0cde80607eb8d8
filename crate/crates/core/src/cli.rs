//! The `tide` command line.
//!
//! Exit codes: 0 success, 1 findings or bad input, 2 usage error, 3
//! computation error. Human output prints rates as percentages with one
//! decimal; `--json` output keeps full precision.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::auv::{compute_auv, BootstrapConfig};
use crate::error::TideError;
use crate::loops::{class_ratios_from_report, entropy_split_from_report, loop_ratio, ActionClassifier};
use crate::memory::{memory_index, recall_lag, Alignment, PairedRuns};
use crate::model::{scan_run_log, write_run_log, ParseOptions, RunLog, StateIdentityConfig};
use crate::report::{
    build_comparison, format_percent, radar_normalize, write_report_bundle, ComparisonOptions, RadarOutput,
};
use crate::synth::{generate_synthetic_run, SynthSpec};

const SCHEMA_HELP: &str = "Run logs use the line-delimited schema tide-log/1.";

#[derive(Debug, Parser)]
#[command(name = "tide", version, about = "Trajectory diagnostics: AUV, loop ratio, memory index", after_help = SCHEMA_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check log files and print every finding
    #[command(after_help = SCHEMA_HELP)]
    Validate(ValidateArgs),
    /// Area under the success curve and final success rate
    #[command(after_help = SCHEMA_HELP)]
    Auv(AuvArgs),
    /// Loop ratio, loop action classes and entropy split
    #[command(after_help = SCHEMA_HELP)]
    Loops(LoopsArgs),
    /// Memory index and recall lag
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Cross-run comparison report bundle
    #[command(after_help = SCHEMA_HELP)]
    Compare(CompareArgs),
    /// Generate a synthetic run log from a JSON spec
    #[command(after_help = SCHEMA_HELP)]
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
#[command(after_help = SCHEMA_HELP)]
enum MemoryCommand {
    /// AUV(with memory) - AUV(without memory)
    #[command(after_help = SCHEMA_HELP)]
    Mi(MiArgs),
    /// Turns between observing a target object and interacting with it
    #[command(after_help = SCHEMA_HELP)]
    Lag(LagArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Also check states against this identity mode (cosine requires vector states)
    #[arg(long, value_name = "exact|cosine:THETA")]
    state_identity: Option<StateIdentityConfig>,
}

#[derive(Debug, Args)]
struct CiArgs {
    /// Bootstrap confidence level, e.g. 0.95
    #[arg(long, value_name = "CONF")]
    ci: Option<f64>,
    #[arg(long, default_value_t = 2000, requires = "ci")]
    resamples: usize,
    #[arg(long, default_value_t = 0, requires = "ci")]
    seed: u64,
}

impl CiArgs {
    fn config(&self) -> Option<BootstrapConfig> {
        self.ci.map(|confidence| BootstrapConfig {
            confidence,
            resamples: self.resamples,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args)]
struct AuvArgs {
    log: PathBuf,
    /// Horizon; defaults to the log header's t_max
    #[arg(long)]
    t_max: Option<usize>,
    #[command(flatten)]
    ci: CiArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct LoopsArgs {
    log: PathBuf,
    #[arg(long, default_value = "exact", value_name = "exact|cosine:THETA")]
    state_identity: StateIdentityConfig,
    /// TOML file of `[[rule]]` entries with `class` and `prefix` or `regex`
    #[arg(long, value_name = "FILE")]
    classes: Option<PathBuf>,
    /// Compare mean action entropy on loop and non-loop steps
    #[arg(long)]
    entropy: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct MiArgs {
    #[arg(long = "with", value_name = "LOG")]
    with_memory: PathBuf,
    #[arg(long = "without", value_name = "LOG")]
    without_memory: PathBuf,
    #[arg(long, default_value = "strict", value_name = "strict|intersect")]
    align: Alignment,
    /// Horizon; defaults to the shared header t_max
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct LagArgs {
    log: PathBuf,
    /// Report success and fail cohorts separately
    #[arg(long)]
    split: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = RadarOutput::DEFAULT_FLOOR)]
    radar_floor: f64,
    #[arg(long, default_value_t = RadarOutput::DEFAULT_CAP)]
    radar_cap: f64,
    /// Horizon for every run; defaults to each environment's shared header t_max
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long, default_value = "exact", value_name = "exact|cosine:THETA")]
    state_identity: StateIdentityConfig,
    #[arg(long, default_value = "intersect", value_name = "strict|intersect")]
    align: Alignment,
    #[command(flatten)]
    ci: CiArgs,
    /// Worker threads; output does not depend on this
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON synthetic-run spec
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    #[arg(long, value_name = "LOG")]
    out: PathBuf,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<TideError> for Failure {
    fn from(e: TideError) -> Self {
        let code = match e.root() {
            TideError::Io(_)
            | TideError::Parse(_)
            | TideError::Json(_)
            | TideError::MissingAnnotation { .. }
            | TideError::DimensionMismatch { .. }
            | TideError::StateKindMismatch
            | TideError::MismatchedHorizons { .. }
            | TideError::StrictAlignmentViolation(_)
            | TideError::NoCommonTasks
            | TideError::DuplicateRun { .. }
            | TideError::InvalidSpec(_) => 1,
            TideError::InvalidArgument(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 3,
            message: format!("writing output: {e}"),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let rendered = e.render().to_string();
            let _ = if informational {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return if informational { 0 } else { 2 };
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a, stdout, stderr),
        Command::Auv(a) => auv(a, stdout, stderr),
        Command::Loops(a) => loops(a, stdout, stderr),
        Command::Memory(MemoryCommand::Mi(a)) => mi(a, stdout, stderr),
        Command::Memory(MemoryCommand::Lag(a)) => lag(a, stdout, stderr),
        Command::Compare(a) => compare(a, stdout, stderr),
        Command::Synth(a) => synth(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "tide: {}", f.message);
            f.code
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Scans one log; prints its findings to `stderr` and fails if there are any.
fn load(path: &Path, options: &ParseOptions, stderr: &mut dyn Write) -> Result<RunLog, Failure> {
    let outcome = scan_run_log(open(path)?, options).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    for f in &outcome.findings {
        writeln!(stderr, "{}", finding_line(path, f))?;
    }
    outcome
        .run
        .ok_or_else(|| Failure::input(format!("{}: {} finding(s)", path.display(), outcome.findings.len())))
}

fn finding_line(path: &Path, f: &crate::model::LineFinding) -> String {
    let field = f.field.as_ref().map(|s| format!("{s}: ")).unwrap_or_default();
    format!("{}:{}: {}: {field}{}", path.display(), f.line, f.category, f.message)
}

fn print_json<T: Serialize>(value: &T, stdout: &mut dyn Write) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(TideError::from)?;
    writeln!(stdout, "{text}")?;
    Ok(())
}

fn validate(args: ValidateArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> CmdResult {
    let options = ParseOptions {
        state_identity: args.state_identity,
    };
    let mut any = false;
    for path in &args.logs {
        let outcome =
            scan_run_log(open(path)?, &options).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        for f in &outcome.findings {
            writeln!(stdout, "{}", finding_line(path, f))?;
        }
        match outcome.run {
            Some(run) => writeln!(
                stdout,
                "{}: ok ({} trajectories)",
                path.display(),
                run.trajectories.len()
            )?,
            None => any = true,
        }
    }
    Ok(if any { 1 } else { 0 })
}

fn auv(args: AuvArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let run = load(&args.log, &ParseOptions::default(), stderr)?;
    let t_max = args.t_max.unwrap_or(run.metadata.t_max);
    let result = compute_auv(&run, t_max, args.ci.config().as_ref())?;
    if args.json {
        print_json(&result, stdout)?;
        return Ok(0);
    }
    writeln!(
        stdout,
        "AUV {}  SR {}",
        format_percent(result.auv),
        format_percent(result.sr_final)
    )?;
    if let (Some(lo), Some(hi), Some(conf)) = (result.ci_low, result.ci_high, args.ci.ci) {
        writeln!(
            stdout,
            "CI {}% [{}, {}]",
            format_percent(conf),
            format_percent(lo),
            format_percent(hi)
        )?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct LoopsJson {
    state_identity: StateIdentityConfig,
    loop_ratio: f64,
    total_actions: usize,
    loop_action_count: usize,
    class_ratios: crate::loops::ActionClassRatios,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy: Option<crate::loops::EntropySplit>,
    trajectories: Vec<crate::loops::TrajectoryLoopEntry>,
}

fn loops(args: LoopsArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    args.state_identity.check()?;
    let options = ParseOptions {
        state_identity: Some(args.state_identity),
    };
    let run = load(&args.log, &options, stderr)?;
    let classifier = match &args.classes {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            ActionClassifier::from_toml(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => ActionClassifier::default(),
    };
    if args.entropy {
        for traj in &run.trajectories {
            if let Some(step) = traj.steps.iter().find(|s| s.entropy.is_none()) {
                return Err(TideError::MissingAnnotation {
                    task_id: traj.task_id.clone(),
                    rollout_idx: traj.rollout_idx,
                    field: format!("steps[{}].entropy", step.turn),
                }
                .into());
            }
        }
    }
    let report = loop_ratio(&run, &args.state_identity)?;
    let classes = class_ratios_from_report(&run, &report, |a| classifier.classify(a));
    let entropy = args.entropy.then(|| entropy_split_from_report(&run, &report));

    if args.json {
        print_json(
            &LoopsJson {
                state_identity: args.state_identity,
                loop_ratio: report.loop_ratio,
                total_actions: report.total_actions,
                loop_action_count: report.loop_action_count,
                class_ratios: classes,
                entropy,
                trajectories: report.trajectories,
            },
            stdout,
        )?;
        return Ok(0);
    }
    writeln!(
        stdout,
        "LR {}  loop actions {}/{}",
        format_percent(report.loop_ratio),
        report.loop_action_count,
        report.total_actions
    )?;
    for (class, ratio) in &classes.ratios {
        writeln!(stdout, "class {class} {}", format_percent(*ratio))?;
    }
    if let Some(e) = entropy {
        let show = |m: Option<f64>| m.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        writeln!(
            stdout,
            "entropy loop {} (n {})  non-loop {} (n {})",
            show(e.mean_loop),
            e.n_loop,
            show(e.mean_nonloop),
            e.n_nonloop
        )?;
        if e.has_empty_partition() {
            log::warn!("entropy split has an empty partition");
        }
    }
    Ok(0)
}

fn mi(args: MiArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let with_memory = load(&args.with_memory, &ParseOptions::default(), stderr)?;
    let without_memory = load(&args.without_memory, &ParseOptions::default(), stderr)?;
    let t_max = match args.t_max {
        Some(t) => t,
        None if with_memory.metadata.t_max == without_memory.metadata.t_max => with_memory.metadata.t_max,
        None => {
            return Err(TideError::MismatchedHorizons {
                expected: with_memory.metadata.t_max,
                found: without_memory.metadata.t_max,
            }
            .into())
        }
    };
    let pair = PairedRuns {
        with_memory: &with_memory,
        without_memory: &without_memory,
        alignment: args.align,
    };
    let result = memory_index(&pair, t_max)?;
    for (run_id, task) in &result.excluded {
        log::warn!("task {task} of run {run_id} excluded by alignment");
    }
    if args.json {
        print_json(&result, stdout)?;
        return Ok(0);
    }
    writeln!(stdout, "MI {}", format_percent(result.mi))?;
    writeln!(
        stdout,
        "AUV with {}  AUV without {}  tasks {}",
        format_percent(result.auv_with),
        format_percent(result.auv_without),
        result.n_common_tasks
    )?;
    Ok(0)
}

fn lag(args: LagArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let run = load(&args.log, &ParseOptions::default(), stderr)?;
    let dists = recall_lag(&run, args.split)?;
    if args.json {
        print_json(&dists, stdout)?;
        return Ok(0);
    }
    for d in &dists {
        let cohort = serde_json::to_value(d.cohort).map_err(TideError::from)?;
        let mean = d.mean.map_or_else(|| "NA".to_string(), |m| format!("{m:.4}"));
        writeln!(
            stdout,
            "cohort {}  n {}  mean {mean}",
            cohort.as_str().unwrap_or(""),
            d.lags.len()
        )?;
        for (lag, count) in d.histogram() {
            writeln!(stdout, "  lag {lag} {count}")?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct CompareConfig {
    command: &'static str,
    inputs: Vec<String>,
    t_max: Option<usize>,
    state_identity: StateIdentityConfig,
    alignment: Alignment,
    bootstrap: Option<BootstrapConfig>,
    radar_floor: f64,
    radar_cap: f64,
}

fn compare(args: CompareArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    args.state_identity.check()?;
    if args.threads == Some(0) {
        return Err(TideError::InvalidArgument("--threads must be positive".into()).into());
    }
    let options = ParseOptions {
        state_identity: Some(args.state_identity),
    };
    let mut runs = Vec::with_capacity(args.logs.len());
    for path in &args.logs {
        runs.push(load(path, &options, stderr)?);
    }
    let comparison = ComparisonOptions {
        t_max: args.t_max,
        state_identity: args.state_identity,
        alignment: args.align,
        bootstrap: args.ci.config(),
    };

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = args.threads {
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| Failure {
            code: 3,
            message: format!("thread pool: {e}"),
        })?
    };
    let table = pool.install(|| build_comparison(&runs, &comparison))?;
    let radar = radar_normalize(&table, args.radar_floor, args.radar_cap)?;
    for w in table.warnings.iter().chain(&radar.warnings) {
        log::warn!("{w}");
    }

    let out = args.out.display().to_string();
    let config = CompareConfig {
        command: "compare",
        inputs: args.logs.iter().map(|p| p.display().to_string()).collect(),
        t_max: args.t_max,
        state_identity: args.state_identity,
        alignment: args.align,
        bootstrap: comparison.bootstrap,
        radar_floor: args.radar_floor,
        radar_cap: args.radar_cap,
    };
    let written = write_report_bundle(&args.out, &table, &radar, &config)?;

    let pct = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), format_percent);
    for row in &table.rows {
        writeln!(
            stdout,
            "{}  {}  {}  SR {}  AUV {}  LR {}  MI {}",
            row.model_name,
            row.environment_name,
            row.memory_mode,
            format_percent(row.metrics.sr),
            format_percent(row.metrics.auv),
            pct(row.metrics.lr),
            pct(row.metrics.mi)
        )?;
    }
    writeln!(stdout, "wrote {} files to {out}", written.len())?;
    Ok(0)
}

fn synth(args: SynthArgs, stdout: &mut dyn Write) -> CmdResult {
    let text = fs::read_to_string(&args.spec).map_err(|e| Failure::input(format!("{}: {e}", args.spec.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", args.spec.display())))?;
    let run = generate_synthetic_run(&spec)?;
    let mut buf = Vec::new();
    write_run_log(&run, &mut buf)?;
    fs::write(&args.out, buf).map_err(|e| Failure::input(format!("{}: {e}", args.out.display())))?;
    writeln!(
        stdout,
        "wrote {} trajectories to {}",
        run.trajectories.len(),
        args.out.display()
    )?;
    Ok(0)
}
