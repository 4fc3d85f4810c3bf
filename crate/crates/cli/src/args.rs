use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "redupgan", version, about = "Reduplication learning with categorical-code GANs on raw audio")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config (key = value)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override, repeatable: --set train.steps=100
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
    /// Output directory [default: $REDUPGAN_OUT/<command> or ./redupgan-out/<command>]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the training corpus
    SynthCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["paper", "desk"])]
        preset: Option<String>,
    },
    /// Train a ciwgan or baregan model
    Train {
        #[command(flatten)]
        common: Common,
        /// Corpus directory (holding manifest.csv)
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = ["ciwgan", "baregan"])]
        mode: Option<String>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from this checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate and annotate outputs, optionally forcing latent variables
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Latent override, repeatable: --force c1=5 --force z7=-4
        #[arg(long, value_name = "VAR=VALUE")]
        force: Vec<String>,
    },
    /// Annotate every WAV file in a directory
    Annotate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Code forcing at [k,0] and [0,k] with Fisher tests per level
    Table2 {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "counts_only")]
        ckpt: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Statistics on given counts only
        #[arg(long)]
        counts_only: bool,
        /// Per level: bare_a,redup_a,bare_b,redup_b (a = [k,0], b = [0,k])
        #[arg(long, value_name = "A_BARE,A_REDUP,B_BARE,B_REDUP")]
        counts: Vec<String>,
    },
    /// Code interpolation sweeps with identical-pair analysis
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "counts_only")]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n_sets: usize,
        #[arg(long, default_value_t = 0.125)]
        increment: f64,
        #[arg(long, default_value_t = 1.5)]
        extent: f64,
        #[arg(long)]
        counts_only: bool,
        /// Sets whose base and reduplicated forms are identical
        #[arg(long, requires = "counts_only")]
        identical: Option<u64>,
        /// Sets with a change of reduplication verdict
        #[arg(long, requires = "counts_only")]
        transitions: Option<u64>,
    },
    /// Lasso probe from latent variables to an annotated outcome
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        /// s, redup or syllablesN
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Force an [s]-variable together with reduplication
    Wug {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "counts_only")]
        ckpt: Option<PathBuf>,
        /// ranking.csv from a probe run with outcome s
        #[arg(long)]
        probe: Option<PathBuf>,
        /// [s]-variable (default: top-ranked z in --probe)
        #[arg(long)]
        s_var: Option<String>,
        /// Forcing value (default: 5 with the sign of the estimate)
        #[arg(long, allow_hyphen_values = true)]
        s_value: Option<f64>,
        /// Reduplication override, repeatable: --force c2=7.25
        #[arg(long, value_name = "VAR=VALUE")]
        force: Vec<String>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// wug.json of another run to compare against
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        counts_only: bool,
        #[arg(long, requires = "counts_only")]
        hits: Option<u64>,
        #[arg(long, requires = "counts_only")]
        other_hits: Option<u64>,
        #[arg(long, requires = "counts_only")]
        other_n: Option<u64>,
    },
    /// Tune annotator thresholds on a labeled corpus
    CalibrateAnnotator {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Summarize a training or analysis directory
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthCorpus { .. } => "synth-corpus",
            Command::Train { .. } => "train",
            Command::Generate { .. } => "generate",
            Command::Annotate { .. } => "annotate",
            Command::Table2 { .. } => "table2",
            Command::Interpolate { .. } => "interpolate",
            Command::Probe { .. } => "probe",
            Command::Wug { .. } => "wug",
            Command::CalibrateAnnotator { .. } => "calibrate-annotator",
            Command::Report { .. } => "report",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::SynthCorpus { common, .. }
            | Command::Train { common, .. }
            | Command::Generate { common, .. }
            | Command::Annotate { common, .. }
            | Command::Table2 { common, .. }
            | Command::Interpolate { common, .. }
            | Command::Probe { common, .. }
            | Command::Wug { common, .. }
            | Command::CalibrateAnnotator { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}
