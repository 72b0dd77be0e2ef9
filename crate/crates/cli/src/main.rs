//! `webstar` — pipeline orchestrator: generate a simulated site, collect
//! noisy teacher rollouts, grade and filter them step-by-step, augment
//! thoughts, export training datasets, and evaluate a toy policy.
//!
//! Exit codes: 0 ok, 1 usage, 2 input/schema error, 3 backend failure,
//! 4 partial failure (a failure report is written next to the output).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "webstar", version, about = "Step-level filtering pipeline for GUI-agent trajectories")]
pub struct Cli {
    /// Declarative TOML config file (flags > env > config).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for batch stages; outputs are identical at any value.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a deterministic simulated website plus a solvable task set.
    GenSite {
        #[command(flatten)]
        seed: SeedArg,
        /// Minimum page count (grown as needed so every task gets a leaf).
        #[arg(long, default_value_t = 24)]
        pages: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 8)]
        tasks: usize,
        /// Leaf page height in viewport multiples (1 = flat site).
        #[arg(long, default_value_t = 3)]
        scroll_pages: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the scripted noisy teacher over the site's tasks.
    Collect {
        #[arg(long)]
        site: PathBuf,
        /// Number of tasks to roll out (first N of the bundle).
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long, default_value_t = 16)]
        rollouts: usize,
        /// Suboptimal-action probability per step.
        #[arg(long)]
        noise: Option<f64>,
        /// Wrong-finish probability per step.
        #[arg(long)]
        irreversible: Option<f64>,
        #[arg(long, default_value_t = 100)]
        max_steps: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grade every step of every trajectory through a grader backend.
    Grade {
        #[arg(long = "in")]
        input: PathBuf,
        /// oracle (needs --site) or remote (needs backend config).
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long)]
        site: Option<PathBuf>,
        /// Image window w for grading context.
        #[arg(long)]
        window: Option<usize>,
        /// Directory for rendered/annotated screenshots (remote backend).
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate three-part thoughts for each step.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        /// template (offline, deterministic) or remote.
        #[arg(long, default_value = "template")]
        backend: String,
        #[arg(long)]
        site: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Regenerate thoughts even for steps that already have one.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trajectory-level filtering through a success judge.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "oracle")]
        judge: String,
        #[arg(long)]
        site: Option<PathBuf>,
        /// Case-insensitive final-answer matching.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
        /// Where to write judged-failed trajectories.
        #[arg(long)]
        dropped: Option<PathBuf>,
    },
    /// Export masked SFT records (webstar-sft/1).
    ExportSft {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        cutoff: Option<u8>,
        /// all_steps (trajectory-level baseline) or correct_steps.
        #[arg(long, default_value = "correct_steps")]
        mode: String,
        /// Drop loss=false records instead of emitting them flagged.
        #[arg(long)]
        drop_masked: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a balanced reward dataset (webscore/1).
    ExportReward {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        cutoff: Option<u8>,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score histogram, CDF, and retention statistics.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter/train/evaluate at several cutoffs under a fixed budget.
    SweepCutoff {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        site: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u8, 4, 5, 6, 8])]
        cutoffs: Vec<u8>,
        /// Fixed loss-bearing record budget per cutoff.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the count-based toy policy from SFT records.
    TrainToy {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        site: PathBuf,
        /// Honor the loss mask (step-level); false trains on all records.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        honor_mask: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy: k rollouts per task, Pass@1 (Pass@k).
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        site: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// 0 = twice the longest optimal path.
        #[arg(long, default_value_t = 0)]
        max_steps: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat-grade sampled steps and report variance statistics.
    AuditConsistency {
        #[arg(long = "in")]
        input: PathBuf,
        /// oracle (needs --site) or scripted (needs --scores).
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long)]
        site: Option<PathBuf>,
        /// Fixed score sequence for the scripted backend, e.g. 6,6,7,6,7.
        #[arg(long, value_delimiter = ',')]
        scores: Vec<u8>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Max number of steps to audit (front of the corpus).
        #[arg(long, default_value_t = 32)]
        steps: usize,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion matrix + agreement rate between two score lists.
    Agreement {
        /// JSON array of grader scores.
        #[arg(long, required_unless_present = "counts", requires = "reference")]
        grades: Option<PathBuf>,
        /// JSON array of reference scores.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Direct confusion counts tt,tf,ft,ff (reference-major).
        #[arg(long, value_delimiter = ',', conflicts_with = "grades")]
        counts: Option<Vec<u64>>,
        #[arg(long)]
        cutoff: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help/version are successful exits; anything else is usage.
            let _ = err.print();
            return match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
