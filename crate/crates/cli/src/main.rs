//! `emplite`: prepare data, train, evaluate, and inspect emphasis models.

mod commands;
mod manifest;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emplite::Error;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError {
            code: 2,
            msg: format!("{}: {e}", path.display()),
        }
    }

    pub fn in_file(path: &Path, e: Error) -> Self {
        let mut c = CliError::from(e);
        c.msg = format!("{}: {}", path.display(), c.msg);
        c
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Parse { .. }
            | Error::Alignment(_)
            | Error::Integrity(_)
            | Error::Load { .. }
            | Error::TrainingIntegrity(_)
            | Error::DegenerateInput(_) => 3,
            Error::Numeric(_)
            | Error::Shape { .. }
            | Error::Rank(_)
            | Error::DegenerateMask
            | Error::OutOfRange { .. } => 4,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "emplite", version, about = "Word-emphasis selection for short texts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Hyperparameters shared by every command that trains.
#[derive(Args, Clone, Debug)]
pub struct TrainOpts {
    /// Architecture variant.
    #[arg(long, default_value = "emplite_full")]
    pub variant: String,
    /// Emphasis probability at or above which a token is labelled 1.
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// scale | concat_context
    #[arg(long, default_value = "scale")]
    pub attention_mode: String,
    /// Vector dimension expected in the embedding file.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Convert annotated files into canonical TSV with a POS column.
    Prepare {
        /// Input file; repeat for each split. Output keeps the file stem.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// emplite-tsv | semeval
        #[arg(long, default_value = "emplite-tsv")]
        format: String,
        /// SemEval column map, e.g. `token=1,annotations=2,pos=5,header=true`.
        #[arg(long)]
        columns: Option<String>,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        /// sidecar | builtin
        #[arg(long, default_value = "builtin")]
        pos: String,
    },
    /// Keep only the embedding-file lines for training-vocabulary words.
    SubsetGlove {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        glove: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        dim: usize,
    },
    /// Train one model and write an EMPL bundle.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Word-vector file (GloVe text format).
        #[arg(long)]
        glove: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Match_1..4 and average for a model or an external prediction file.
    Eval {
        #[arg(long, conflicts_with = "pred_file", required_unless_present = "pred_file")]
        model: Option<PathBuf>,
        /// `token<TAB>prob` lines, blank-line separated.
        #[arg(long)]
        pred_file: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Print key=value lines only.
        #[arg(long)]
        kv: bool,
        /// Also write the model's predictions here.
        #[arg(long, requires = "model")]
        save_pred: Option<PathBuf>,
    },
    /// Per-token probabilities for free text.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        text: Option<String>,
        /// One sentence per line.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Render probabilities as a coloured heatmap.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        text: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        /// ansi | html
        #[arg(long, default_value = "ansi")]
        style: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score several variants with one seed.
    Ablation {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        glove: Option<PathBuf>,
        /// Comma-separated variants, or `all`.
        #[arg(long, default_value = "all")]
        variants: String,
        /// Where the report and manifest go.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Train one model per labelling threshold and report dev scores.
    SweepThreshold {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        glove: Option<PathBuf>,
        /// `0.2,0.4,0.6` or an inclusive range `0.2..0.6` (step 0.1).
        #[arg(long, default_value = "0.2..0.6")]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Write an augmented copy of a training file.
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// remove_le1 | remove_ge1 | uppercase_word | reverse
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Augment, train, and score for each strategy and fraction.
    AugmentExperiment {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Scored split; defaults to the dev file.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        glove: Option<PathBuf>,
        /// Comma-separated strategies; `none` trains on the original data.
        #[arg(long, default_value = "none,remove_le1")]
        strategy: String,
        /// Comma-separated fractions in [0, 1].
        #[arg(long, default_value = "1.0")]
        fractions: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// POS share among all tokens and among emphasized tokens.
    PosStats {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        threshold: f64,
        /// sidecar | builtin
        #[arg(long, default_value = "sidecar")]
        pos: String,
        /// Rows to show per distribution.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write a synthetic corpus and matching word vectors.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Small corpus (400 words) instead of the full-size one.
        #[arg(long)]
        small: bool,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands as c;
    match cli.command {
        Command::Prepare {
            input,
            format,
            columns,
            output,
            pos,
        } => c::prepare(&input, &format, columns.as_deref(), &output, &pos),
        Command::SubsetGlove { train, glove, out, dim } => c::subset_glove(&train, &glove, &out, dim),
        Command::Train {
            train,
            dev,
            glove,
            out,
            opts,
        } => c::train(&train, dev.as_deref(), glove.as_deref(), &out, &opts),
        Command::Eval {
            model,
            pred_file,
            test,
            kv,
            save_pred,
        } => c::eval(model.as_deref(), pred_file.as_deref(), &test, kv, save_pred.as_deref()),
        Command::Predict { model, text, file } => c::predict(&model, text.as_deref(), file.as_deref()),
        Command::Heatmap {
            model,
            text,
            file,
            style,
            out,
        } => c::heatmap(&model, text.as_deref(), file.as_deref(), &style, out.as_deref()),
        Command::Ablation {
            train,
            dev,
            test,
            glove,
            variants,
            out,
            opts,
        } => c::ablation(&train, dev.as_deref(), &test, glove.as_deref(), &variants, &out, &opts),
        Command::SweepThreshold {
            train,
            dev,
            glove,
            values,
            out,
            opts,
        } => c::sweep_threshold(&train, &dev, glove.as_deref(), &values, &out, &opts),
        Command::Augment {
            input,
            strategy,
            fraction,
            seed,
            output,
        } => c::augment(&input, &strategy, fraction, seed, &output),
        Command::AugmentExperiment {
            train,
            dev,
            test,
            glove,
            strategy,
            fractions,
            out,
            opts,
        } => c::augment_experiment(
            &train,
            dev.as_deref(),
            test.as_deref(),
            glove.as_deref(),
            &strategy,
            &fractions,
            &out,
            &opts,
        ),
        Command::PosStats {
            train,
            threshold,
            pos,
            top,
        } => c::pos_stats(&train, threshold, &pos, top),
        Command::Synth { out_dir, small, seed } => c::synth(&out_dir, small, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
