//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "verba",
    version,
    about = "Measure how language and embedding models read contract language"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank candidate fillers of a clause by embedding distance.
    Probe(ProbeArgs),
    /// Ask models for confidence in one or more propositions.
    Elicit(ElicitArgs),
    /// Repeat one question over models, temperatures and phrasings.
    Sweep(SweepArgs),
    /// Add evidence one item at a time and track each model's confidence.
    Ladder(LadderArgs),
    /// Check or replay a recorded capsule.
    Capsule {
        #[command(subcommand)]
        action: CapsuleAction,
    },
    /// Re-export the report stored in a capsule.
    Report(ReportArgs),
    /// Serve the session API on a local port.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CapsuleAction {
    /// Run every integrity check and list the results.
    Verify { file: PathBuf },
    /// Recompute the reports from the recorded responses.
    Replay {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TemplateChoice {
    Confidence,
    YesNo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationChoice {
    Mean,
    Median,
}

/// Options shared by every analysis command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Case document (JSON).
    #[arg(long)]
    pub case: PathBuf,
    /// JSON file whose keys mirror these flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use the deterministic offline backend.
    #[arg(long)]
    pub mock: bool,
    /// Use a table of canned responses (implies --mock).
    #[arg(long, value_name = "FILE")]
    pub mock_table: Option<PathBuf>,
    /// Skip writing a capsule.
    #[arg(long)]
    pub no_capsule: bool,
    #[arg(long, value_name = "DIR")]
    pub capsule_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Model as provider:model_id[:modality]; repeatable.
    #[arg(long = "model", value_name = "MODEL")]
    pub models: Vec<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent provider calls.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Probe spec (JSON): anchor_template, probes, models, optional reference.
    #[arg(long)]
    pub probes: PathBuf,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Free-text question; repeatable.
    #[arg(long = "question")]
    pub questions: Vec<String>,
    /// Reading label from the case; repeatable. Defaults to all readings.
    #[arg(long = "proposition")]
    pub propositions: Vec<String>,
    #[arg(long, value_enum)]
    pub template: Option<TemplateChoice>,
    #[arg(long)]
    pub reps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Seed question; defaults to the first reading.
    #[arg(long)]
    pub question: Option<String>,
    #[arg(long, value_enum)]
    pub template: Option<TemplateChoice>,
    #[arg(long)]
    pub temp_lo: Option<f64>,
    #[arg(long)]
    pub temp_hi: Option<f64>,
    #[arg(long)]
    pub temp_steps: Option<usize>,
    /// Number of phrasings of the question.
    #[arg(long)]
    pub variants: Option<usize>,
    /// Generate phrasings with this model instead of local frames.
    #[arg(long, value_name = "MODEL")]
    pub generator: Option<String>,
    #[arg(long)]
    pub reps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct LadderArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reading label; defaults to the first reading.
    #[arg(long)]
    pub proposition: Option<String>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationChoice>,
    #[arg(long)]
    pub reps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mock: bool,
    #[arg(long, value_name = "FILE")]
    pub mock_table: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub capsule_dir: Option<PathBuf>,
    /// Default models for new sessions; repeatable.
    #[arg(long = "model", value_name = "MODEL")]
    pub models: Vec<String>,
    #[arg(long)]
    pub reps: Option<u32>,
}
