//! `dswe`: one subcommand per pipeline stage.
//!
//! Exit codes: 0 on success, 1 when the data or processing fails, 2 on
//! usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "dswe", version, about = "Weak-label clinical text classifiers from keyword rules")]
pub struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads. 1 gives the reference single-threaded run.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic corpus with gold labels.
    Synth(SynthArgs),
    /// Weak-label a corpus with a rule file.
    Label(LabelArgs),
    /// Train skip-gram word embeddings on a corpus.
    Embed(EmbedArgs),
    /// Print the nearest neighbours of words in an embedding file.
    Neighbors(NeighborsArgs),
    /// Write feature vectors for each document.
    Featurize(FeaturizeArgs),
    /// Train a classifier on labeled records.
    Train(TrainArgs),
    /// Apply a trained model to a corpus.
    Predict(PredictArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Compare rules and weakly supervised models on a held-out split.
    Paradigm(ParadigmArgs),
    /// Evaluate methods at increasing training sizes.
    Curve(CurveArgs),
    /// List the documents on which two prediction sets disagree.
    Diff(DiffArgs),
    /// Re-run the command recorded for an artifact in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Label(_) => "label",
            Command::Embed(_) => "embed",
            Command::Neighbors(_) => "neighbors",
            Command::Featurize(_) => "featurize",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Paradigm(_) => "paradigm",
            Command::Curve(_) => "curve",
            Command::Diff(_) => "diff",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bank {
    Smoking,
    Fracture,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Number of documents.
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Bank::Smoking)]
    pub bank: Bank,
    /// Class prior as `label=p`; repeat for each class. Defaults to uniform.
    #[arg(long = "prior", value_parser = parse_prior)]
    pub priors: Vec<(String, f64)>,
    /// Rate of misspelled-keyword perturbations.
    #[arg(long, default_value_t = 0.0)]
    pub misspell: f64,
    /// Rate of cross-sentence-split perturbations.
    #[arg(long, default_value_t = 0.0)]
    pub split: f64,
    /// Rate of negation-scope-trap perturbations.
    #[arg(long, default_value_t = 0.0)]
    pub trap: f64,
    #[arg(long, default_value = "syn")]
    pub id_prefix: String,
    /// Perturbation side file; defaults to `<out stem>.perturb.jsonl`.
    #[arg(long)]
    pub perturb_out: Option<PathBuf>,
}

fn parse_prior(s: &str) -> Result<(String, f64), String> {
    let (label, p) = s.split_once('=').ok_or("expected `label=probability`")?;
    let p: f64 = p.parse().map_err(|e| format!("bad probability `{p}`: {e}"))?;
    if label.is_empty() {
        return Err("empty label".into());
    }
    Ok((label.to_owned(), p))
}

#[derive(Args, Debug, Serialize)]
pub struct LabelArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Also write the matching rule trace of each document.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EmbedArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Frequent-word subsampling threshold; 0 disables it.
    #[arg(long)]
    pub subsample: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Query word; repeat for several.
    #[arg(long = "word", required = true)]
    pub words: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturizerKind {
    Mean,
    Tfidf,
    Lda,
    Tokens,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Oov {
    Skip,
    Zero,
}

/// Inputs shared by the commands that fit a featurizer.
#[derive(Args, Debug, Serialize)]
pub struct FeatureArgs {
    /// Word embeddings for the mean featurizer and the CNN.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Oov::Skip)]
    pub oov: Oov,
    /// Topics for the LDA featurizer.
    #[arg(long, default_value_t = 100)]
    pub topics: usize,
    #[arg(long, default_value_t = 200)]
    pub lda_iterations: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FeaturizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub featurizer: FeaturizerKind,
    /// Corpus the tf-idf statistics or topics are fitted on; defaults to `--in`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Also save the fitted topic model.
    #[arg(long)]
    pub topics_out: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Rf,
    Cnn,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Labeled records, for example the output of `label`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long, value_enum)]
    pub featurizer: FeaturizerKind,
    /// Record field holding the training label.
    #[arg(long, default_value = "weak")]
    pub label_field: String,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// SVM regularization strength.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub svm_epochs: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub features_per_split: Option<usize>,
    #[arg(long)]
    pub no_bootstrap: bool,
    /// CNN window widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub cnn_epochs: Option<usize>,
    #[arg(long)]
    pub finetune: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Prediction records keyed by `id`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value = "pred")]
    pub pred_field: String,
    /// Corpus with gold labels.
    #[arg(long)]
    pub gold: PathBuf,
    /// Rule file naming the task and its positive class.
    #[arg(long)]
    pub rules: PathBuf,
    /// Method name written into the report.
    #[arg(long, default_value = "model")]
    pub method: String,
    #[arg(long, default_value = "unknown")]
    pub featurizer: String,
    #[arg(long, default_value_t = 0)]
    pub train_size: usize,
}

/// Options shared by `paradigm` and `curve`.
#[derive(Args, Debug, Serialize)]
pub struct ExperimentArgs {
    /// Corpus; test documents need gold labels.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Methods, comma separated: rules, cnn, svm-<feat>, rf-<feat>.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// JSON experiment configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ParadigmArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long)]
    pub train_size: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Training sizes, comma separated and strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = dswe::eval::DEFAULT_CURVE_SIZES)]
    pub sizes: Vec<usize>,
    /// Plot data file; defaults to `<out stem>.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DiffArgs {
    /// First prediction file.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long, default_value = "pred")]
    pub a_field: String,
    /// Second prediction file.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "pred")]
    pub b_field: String,
    /// Corpus holding the texts and any gold labels.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    /// Manifest file to read.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Artifact file name within the manifest.
    #[arg(long)]
    pub artifact: String,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    match commands::run(&cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
