//! `teamdims`: command-line driver for the chat teamwork-dimension pipeline.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::OnOff;

#[derive(Debug, Parser)]
#[command(
    name = "teamdims",
    version,
    about = "Classify team chat messages into four teamwork dimensions"
)]
pub struct Cli {
    /// Project configuration (TOML); command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Print nothing except errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// Print progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize message texts with the lexicon and roster.
    Preprocess(PreprocessArgs),
    /// Detect rule features and append them as placeholder tokens.
    Featurize(FeaturizeArgs),
    /// Split a corpus into train, validation and test files.
    Split(SplitArgs),
    /// Train a random-forest or transformer model.
    Train(TrainArgs),
    /// Score one model on a labeled test set.
    Evaluate(EvaluateArgs),
    /// Score the four model-by-feature cells on one test set.
    Compare(CompareArgs),
    /// Predict the dimensions of a text or a corpus.
    Predict(PredictArgs),
    /// Cohen's kappa between annotators, or between a model and annotators.
    Agreement(AgreementArgs),
    /// Generate a labeled synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Rule file; the bundled lexicon when omitted.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// One participant name per line, masked as {{NAME}}.
    #[arg(long, value_name = "FILE")]
    pub roster: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Feature rule pack; the bundled pack when omitted.
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train, validation and test fractions.
    #[arg(long, value_name = "T,V,T", value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    /// Shuffle messages or whole teams.
    #[arg(long, value_name = "message|team")]
    pub unit: Option<String>,
    /// Directory for the three files; defaults to the input's directory.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelChoice {
    Rf,
    Transformer,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Validation split (required for the transformer).
    #[arg(long, value_name = "FILE")]
    pub val: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Train with or without rule features; the corpus's own state by default.
    #[arg(long, value_enum)]
    pub features: Option<OnOff>,
    /// Feature rule pack used when turning features on for an unfeaturized corpus.
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Random forest: trees per dimension.
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Transformer: checkpoint directory, id under $TEAMDIMS_CACHE, or tiny-random.
    #[arg(long, value_name = "ID")]
    pub encoder: Option<String>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Pick per-dimension thresholds on the validation split.
    #[arg(long)]
    pub tune_thresholds: bool,
    /// Never touch the network. Checkpoints are only read locally, so this
    /// changes nothing beyond being recorded.
    #[arg(long)]
    pub offline: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Four artifact directories (paths, or names under the artifact root).
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub grid: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Raw message text.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub text: Option<String>,
    /// Corpus to label.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// JSONL predictions for `--in`; stdout when omitted.
    #[arg(long, value_name = "FILE", requires = "input")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Human-labeled corpus.
    #[arg(long, value_name = "FILE")]
    pub unseen: PathBuf,
    /// Model artifact scored as a second rater; without it the corpus's
    /// second label set is compared with the first.
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Quotas such as `COD=50,MPM=50,CCF=50,TES=50,NONE=50`.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Add a second label set copying the first with this bit-flip probability.
    #[arg(long, value_name = "P")]
    pub flip_b: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| commands::run(&cli));
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let code = commands::exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
        Err(_) => {
            eprintln!("error: internal failure (see message above)");
            ExitCode::from(2)
        }
    }
}
