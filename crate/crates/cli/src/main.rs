mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Sustainability analysis for IoT-enhanced business processes.
#[derive(Debug, Parser)]
#[command(name = "susbp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sustainability models.
    #[command(subcommand)]
    Model(ModelCommand),
    /// BPMN process models.
    #[command(subcommand)]
    Bpmn(BpmnCommand),
    /// XES event logs.
    #[command(subcommand)]
    Log(LogCommand),
    /// Sensor readings.
    #[command(subcommand)]
    Sense(SenseCommand),
    /// Sustainability indicators.
    #[command(subcommand)]
    Indicator(IndicatorCommand),
    /// Sustainability reports.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Generate a synthetic sensor stream with ground truth.
    Simulate(SimulateArgs),
    /// Serve live snapshots of a sensor feed over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Md,
    Text,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to a file instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Check a model file and list its violations.
    Validate {
        /// Model JSON file, `-` for stdin, or `bundled:hotel` / `bundled:phlebotomy`.
        model: String,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Subcommand)]
enum BpmnCommand {
    /// Extract fragments: one per hygiene task, or one from a node selection.
    Fragments(FragmentArgs),
}

#[derive(Debug, Args)]
pub struct FragmentArgs {
    /// BPMN 2.0 XML file or `bundled:hotel-bpmn` / `bundled:phlebotomy-bpmn`.
    pub bpmn: String,
    /// One single-node fragment per task with this name.
    #[arg(long, conflicts_with = "nodes")]
    pub activity: Option<String>,
    /// Node ids or unique task names forming one connected fragment.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Vec<String>,
    /// Value ids the fragment affects.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand)]
enum LogCommand {
    /// Per-activity duration statistics, or directly-follows counts.
    Stats(LogStatsArgs),
    /// Check each case against a normative sequence and hygiene rules.
    Conform(ConformArgs),
}

#[derive(Debug, Args)]
pub struct LogStatsArgs {
    /// XES file or `bundled:demo-log`.
    pub log: String,
    /// Restrict to these activities.
    #[arg(long)]
    pub activity: Vec<String>,
    /// Report directly-follows counts instead of durations.
    #[arg(long)]
    pub follows: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ConformArgs {
    /// XES file or `bundled:demo-log`.
    pub log: String,
    /// Normative spec JSON; the bundled blood-donation spec by default.
    #[arg(long, default_value = "bundled:phlebotomy-spec")]
    pub spec: String,
    /// Exit with status 1 when any case deviates.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand)]
enum SenseCommand {
    /// Validate readings against device schemas and summarise the series.
    Ingest(IngestArgs),
    /// Detect hand-hygiene episodes from scale and distance readings.
    Detect(DetectArgs),
    /// Energy per stay from smart plug and HVAC readings.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV or JSON-lines readings.
    pub readings: String,
    /// Device schema registry; the bundled one by default.
    #[arg(long)]
    pub schemas: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// CSV or JSON-lines readings; feed event lines are skipped.
    pub readings: String,
    /// Detection parameters: a JSON object, or a truth file with a `params` field.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub schemas: Option<String>,
    /// Scale device id; the only scale in the input by default.
    #[arg(long)]
    pub scale: Option<String>,
    /// Distance sensor id; the only distance sensor in the input by default.
    #[arg(long)]
    pub distance: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Smart plug readings.
    #[arg(long)]
    pub plug: String,
    /// HVAC controller readings.
    #[arg(long)]
    pub hvac: String,
    /// JSON list of stays `{start, end, n_guests, n_days}`.
    #[arg(long)]
    pub stays: String,
    #[arg(long)]
    pub schemas: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand)]
enum IndicatorCommand {
    /// Compute and classify an indicator.
    Compute(ComputeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndicatorKind {
    Mcfi,
    Cfid,
    Em,
    Hygiene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CfidModeArg {
    Aggregate,
    PerStay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Strict,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Case,
    Activity,
    Scenario,
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[arg(long, value_enum)]
    pub kind: IndicatorKind,
    #[arg(long, value_enum, default_value = "aggregate")]
    pub mode: CfidModeArg,
    #[arg(long, value_enum, default_value = "strict")]
    pub policy: PolicyArg,
    /// Appliance energy, kWh.
    #[arg(long)]
    pub e_app: Option<f64>,
    /// HVAC energy, kWh.
    #[arg(long)]
    pub e_hvac: Option<f64>,
    /// Emission factor, kg CO2e per kWh.
    #[arg(long)]
    pub ef: Option<f64>,
    /// Material emissions, kg CO2e.
    #[arg(long)]
    pub em: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub guests: u32,
    #[arg(long, default_value_t = 1)]
    pub days: u32,
    /// Mean satisfaction, normalised.
    #[arg(long)]
    pub s: Option<f64>,
    /// Mean friction, normalised.
    #[arg(long)]
    pub f: Option<f64>,
    /// Mean perceived time, normalised.
    #[arg(long)]
    pub p: Option<f64>,
    /// Survey CSV for MCFI.
    #[arg(long)]
    pub surveys: Option<String>,
    #[arg(long)]
    pub cards: Option<u32>,
    #[arg(long)]
    pub total_stays: Option<u32>,
    #[arg(long)]
    pub kg_per_card: Option<f64>,
    /// Episodes JSON (as written by `sense detect`).
    #[arg(long)]
    pub episodes: Option<String>,
    #[arg(long, value_enum, default_value = "case")]
    pub group_by: GroupArg,
    /// XES log whose `scenario` trace attribute labels cases.
    #[arg(long)]
    pub log: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Assemble a per-fragment sustainability report.
    Build(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: String,
    /// Fragment ids to assess.
    #[arg(long, value_delimiter = ',')]
    pub fragments: Vec<String>,
    /// JSON list of indicator values.
    #[arg(long)]
    pub values: Option<String>,
    /// XES log to check for conformance.
    #[arg(long)]
    pub log: Option<String>,
    #[arg(long, default_value = "bundled:phlebotomy-spec")]
    pub spec: String,
    /// JSON object of analyst notes by fragment id.
    #[arg(long)]
    pub notes: Option<String>,
    /// Report timestamp (RFC 3339); now by default.
    #[arg(long)]
    pub generated_at: Option<String>,
    /// Exit with status 1 when any assessment is flagged for review.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario script JSON.
    #[arg(long, required_unless_present_any = ["random", "study"])]
    pub script: Option<String>,
    /// Generate a random script from this seed.
    #[arg(long, conflicts_with = "script")]
    pub random: Option<u64>,
    /// Generate a study session with this many cases.
    #[arg(long, conflicts_with_all = ["script", "random"])]
    pub study: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines readings.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground truth JSON; printed to stdout when absent.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// `file:PATH` (or a plain path), `stdin`, or `tcp:PORT`.
    #[arg(long)]
    pub feed: String,
    /// Replay speed for file feeds.
    #[arg(long)]
    pub speed: Option<f64>,
    /// Session configuration JSON.
    #[arg(long)]
    pub config: Option<String>,
    /// Write episodes.xes and episodes.csv here when a file feed ends.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Model(ModelCommand::Validate { model, output }) => commands::model_validate(&model, &output),
        Command::Bpmn(BpmnCommand::Fragments(args)) => commands::bpmn_fragments(&args),
        Command::Log(LogCommand::Stats(args)) => commands::log_stats(&args),
        Command::Log(LogCommand::Conform(args)) => commands::log_conform(&args),
        Command::Sense(SenseCommand::Ingest(args)) => commands::sense_ingest(&args),
        Command::Sense(SenseCommand::Detect(args)) => commands::sense_detect(&args),
        Command::Sense(SenseCommand::Energy(args)) => commands::sense_energy(&args),
        Command::Indicator(IndicatorCommand::Compute(args)) => commands::indicator_compute(&args),
        Command::Report(ReportCommand::Build(args)) => commands::report_build(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Serve(args) => commands::serve(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<io::UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
