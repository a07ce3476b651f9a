//! Experiment protocols: the paradigm comparison (rules against models
//! trained on the rules' weak labels) and the training-size curve.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{approximate_randomization, confusion, mcnemar, prf, ConfusionCounts, McNemar, Metric};
use crate::corpus::{Document, TokenizedDocument};
use crate::embeddings::{train_skipgram, EmbeddingTable, SkipgramConfig};
use crate::error::{Error, Result};
use crate::features::{fit_corpus_stats, fit_lda, CorpusStats, Featurizer, LdaConfig, OovPolicy, TopicModel};
use crate::models::{train_cnn, train_rf, train_svm, CnnHyper, Model, ModelArtifact, RfHyper, SvmHyper};
use crate::rng::{derive_seed, seeded};
use crate::rules::{ClassLabel, RuleSet, TraceEntry};

/// Vector featurizers for the SVM and random forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Mean,
    Tfidf,
    Lda,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mean => "mean",
            FeatureKind::Tfidf => "tfidf",
            FeatureKind::Lda => "lda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(FeatureKind::Mean),
            "tfidf" => Some(FeatureKind::Tfidf),
            "lda" => Some(FeatureKind::Lda),
            _ => None,
        }
    }
}

/// One compared system. Written as `rules`, `cnn`, or `<svm|rf>-<featurizer>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Rules,
    Svm(FeatureKind),
    Rf(FeatureKind),
    Cnn,
}

impl Method {
    pub fn featurizer_name(self) -> &'static str {
        match self {
            Method::Rules => "rules",
            Method::Svm(f) | Method::Rf(f) => f.name(),
            Method::Cnn => "tokens",
        }
    }

    /// Rules, SVM, RF and CNN, with mean-embedding features for the vector models.
    pub fn paradigm_default() -> Vec<Method> {
        vec![Method::Rules, Method::Svm(FeatureKind::Mean), Method::Rf(FeatureKind::Mean), Method::Cnn]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rules => f.write_str("rules"),
            Method::Cnn => f.write_str("cnn"),
            Method::Svm(k) => write!(f, "svm-{}", k.name()),
            Method::Rf(k) => write!(f, "rf-{}", k.name()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown method `{s}` (expected rules, cnn, svm-<feat> or rf-<feat>)"));
        match s {
            "rules" => return Ok(Method::Rules),
            "cnn" => return Ok(Method::Cnn),
            _ => {}
        }
        let (model, feat) = s.split_once('-').ok_or_else(bad)?;
        let feat = FeatureKind::parse(feat).ok_or_else(bad)?;
        match model {
            "svm" => Ok(Method::Svm(feat)),
            "rf" => Ok(Method::Rf(feat)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Text the skip-gram embeddings are trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingCorpus {
    /// The training documents of each cell.
    #[default]
    Train,
    /// Every document outside the test split, once per run. Labels are never
    /// read, so this stands in for a separate unlabeled corpus.
    Pool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub test_size: usize,
    /// Training documents; `None` uses every document not in the test split.
    pub train_size: Option<usize>,
    pub seed: u64,
    pub embedding: SkipgramConfig,
    pub embedding_corpus: EmbeddingCorpus,
    pub oov: OovPolicy,
    pub lda_topics: usize,
    pub lda_iterations: usize,
    pub svm: SvmHyper,
    pub rf: RfHyper,
    pub cnn: CnnHyper,
    /// Permutations for the approximate randomization cross-check.
    pub randomization_rounds: usize,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: Method::paradigm_default(),
            test_size: 500,
            train_size: None,
            seed: 1,
            embedding: SkipgramConfig::default(),
            embedding_corpus: EmbeddingCorpus::Train,
            oov: OovPolicy::Skip,
            lda_topics: 100,
            lda_iterations: 200,
            svm: SvmHyper::default(),
            rf: RfHyper::default(),
            cnn: CnnHyper::default(),
            randomization_rounds: 10_000,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub featurizer: String,
    pub ruleset: String,
    pub positive_class: ClassLabel,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub counts: ConfusionCounts,
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

impl EvalReport {
    pub fn score(
        method: &str,
        featurizer: &str,
        rules: &RuleSet,
        preds: &[ClassLabel],
        golds: &[ClassLabel],
        train_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let positive = positive_class(rules)?;
        let counts = confusion(preds, golds, &positive)?;
        let m = prf(&counts);
        Ok(Self {
            method: method.to_owned(),
            featurizer: featurizer.to_owned(),
            ruleset: rules.task.clone(),
            positive_class: positive,
            train_size,
            test_size: golds.len(),
            seed,
            counts,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        })
    }
}

/// Significance of one system against another on the same test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub mcnemar: McNemar,
    pub randomization_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParadigmResult {
    pub reports: Vec<EvalReport>,
    pub test_ids: Vec<String>,
    pub golds: Vec<ClassLabel>,
    /// Test-set predictions per method, aligned with `test_ids`.
    pub predictions: BTreeMap<String, Vec<ClassLabel>>,
    /// Every trained model against the rules.
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub reports: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub points: Vec<CurvePoint>,
}

/// The training sizes of the data-size experiment.
pub const DEFAULT_CURVE_SIZES: [usize; 5] = [1000, 2500, 5000, 10000, 20000];

pub fn positive_class(rules: &RuleSet) -> Result<ClassLabel> {
    rules
        .positive_label()
        .cloned()
        .ok_or_else(|| Error::InvalidConfig("rule set declares no class besides the default".into()))
}

/// Sort by id, shuffle with the split seed, and cut off the first
/// `test_size` documents as the test split. The remainder is the training
/// pool, in shuffled order. Every test document must carry a gold label.
pub fn split_corpus(docs: &[Document], test_size: usize, seed: u64) -> Result<(Vec<Document>, Vec<Document>)> {
    if test_size == 0 || test_size >= docs.len() {
        return Err(Error::InvalidConfig(format!(
            "test size {test_size} must be between 1 and the corpus size minus one ({})",
            docs.len().saturating_sub(1)
        )));
    }
    let mut sorted: Vec<Document> = docs.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted.shuffle(&mut seeded(derive_seed(seed, "split")));
    let pool = sorted.split_off(test_size);
    if let Some(d) = sorted.iter().find(|d| d.gold.is_none()) {
        return Err(Error::InvalidInput(format!("test document `{}` has no gold label", d.id)));
    }
    Ok((sorted, pool))
}

/// Featurizer inputs fitted on one training set.
#[derive(Default)]
pub struct FeatureAssets {
    pub embeddings: Option<EmbeddingTable>,
    pub stats: Option<CorpusStats>,
    pub topics: Option<TopicModel>,
}

impl FeatureAssets {
    /// Fit what `methods` need on `train`. `key` names the cell for seed
    /// derivation. Embeddings come from `shared` when given.
    pub fn fit(
        methods: &[Method],
        train: &[TokenizedDocument],
        cfg: &ExperimentConfig,
        key: &str,
        shared: Option<&EmbeddingTable>,
    ) -> Result<Self> {
        let needs = |k: FeatureKind| methods.iter().any(|m| matches!(m, Method::Svm(f) | Method::Rf(f) if *f == k));
        let mut assets = FeatureAssets::default();
        if needs_embeddings(methods) {
            assets.embeddings = Some(match shared {
                Some(t) => t.clone(),
                None => fit_embeddings(train, cfg, &format!("{key}/embeddings"))?,
            });
        }
        if needs(FeatureKind::Tfidf) {
            assets.stats = Some(fit_corpus_stats(train)?);
        }
        if needs(FeatureKind::Lda) {
            let lda = LdaConfig {
                iterations: cfg.lda_iterations,
                ..LdaConfig::new(cfg.lda_topics, derive_seed(cfg.seed, &format!("{key}/lda")))
            };
            assets.topics = Some(fit_lda(train, &lda)?);
        }
        Ok(assets)
    }

    pub fn featurizer(&self, kind: FeatureKind, oov: OovPolicy) -> Result<Featurizer> {
        let missing = || Error::InvalidConfig(format!("no fitted inputs for the `{}` featurizer", kind.name()));
        Ok(match kind {
            FeatureKind::Mean => Featurizer::Mean {
                table: self.embeddings.clone().ok_or_else(missing)?,
                oov,
            },
            FeatureKind::Tfidf => Featurizer::Tfidf {
                stats: self.stats.clone().ok_or_else(missing)?,
            },
            FeatureKind::Lda => Featurizer::Lda {
                model: self.topics.clone().ok_or_else(missing)?,
            },
        })
    }
}

fn needs_embeddings(methods: &[Method]) -> bool {
    methods
        .iter()
        .any(|m| matches!(m, Method::Cnn | Method::Svm(FeatureKind::Mean) | Method::Rf(FeatureKind::Mean)))
}

fn fit_embeddings(docs: &[TokenizedDocument], cfg: &ExperimentConfig, key: &str) -> Result<EmbeddingTable> {
    let sg = SkipgramConfig {
        seed: derive_seed(cfg.seed, key),
        ..cfg.embedding.clone()
    };
    let corpus: Vec<Vec<&str>> = docs.iter().map(|d| d.tokens.iter().map(String::as_str).collect()).collect();
    train_skipgram(&corpus, &sg)
}

/// Embeddings shared by every cell of a run, if the configuration asks for them.
fn pool_embeddings(pool: &[Document], cfg: &ExperimentConfig) -> Result<Option<EmbeddingTable>> {
    if cfg.embedding_corpus != EmbeddingCorpus::Pool || !needs_embeddings(&cfg.methods) {
        return Ok(None);
    }
    let docs: Vec<TokenizedDocument> = pool.iter().map(TokenizedDocument::from_document).collect();
    fit_embeddings(&docs, cfg, "pool/embeddings").map(Some)
}

/// Train one model on weak labels. `seed` replaces the model's configured
/// seed.
pub fn train_method(
    method: Method,
    train: &[TokenizedDocument],
    labels: &[ClassLabel],
    assets: &FeatureAssets,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ModelArtifact> {
    match method {
        Method::Rules => Err(Error::InvalidConfig("the rule labeler is not trained".into())),
        Method::Cnn => {
            let table = assets
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("the CNN needs word embeddings".into()))?;
            let hyper = CnnHyper { seed, ..cfg.cnn.clone() };
            ModelArtifact::new(Model::Cnn(train_cnn(train, labels, table, &hyper)?), Featurizer::Tokens)
        }
        Method::Svm(kind) | Method::Rf(kind) => {
            let featurizer = assets.featurizer(kind, cfg.oov)?;
            let x: Vec<_> = train.iter().map(|d| featurizer.vector(d).expect("vector featurizer")).collect();
            let model = if let Method::Svm(_) = method {
                Model::Svm(train_svm(&x, labels, &SvmHyper { seed, ..cfg.svm.clone() })?)
            } else {
                Model::Rf(train_rf(&x, labels, &RfHyper { seed, ..cfg.rf.clone() })?)
            };
            ModelArtifact::new(model, featurizer)
        }
    }
}

struct CellOutput {
    reports: Vec<EvalReport>,
    predictions: BTreeMap<String, Vec<ClassLabel>>,
}

/// Weak-label `train`, fit featurizers and models on it, and score every
/// method on `test`.
fn run_cell(
    train: &[Document],
    test: &[Document],
    rules: &RuleSet,
    cfg: &ExperimentConfig,
    key: &str,
    shared: Option<&EmbeddingTable>,
) -> Result<CellOutput> {
    let weak: Vec<ClassLabel> = rules
        .label_corpus(train, cfg.threads)?
        .into_iter()
        .map(|w| w.label)
        .collect();
    let train_tok: Vec<TokenizedDocument> = train.iter().map(TokenizedDocument::from_document).collect();
    let test_tok: Vec<TokenizedDocument> = test.iter().map(TokenizedDocument::from_document).collect();
    let golds: Vec<ClassLabel> = test
        .iter()
        .map(|d| ClassLabel::new(d.gold.clone().expect("checked by split_corpus")))
        .collect();
    let assets = FeatureAssets::fit(&cfg.methods, &train_tok, cfg, key, shared)?;

    let predict = |method: Method| -> Result<Vec<ClassLabel>> {
        if method == Method::Rules {
            return Ok(test.iter().map(|d| rules.apply_document(d).label).collect());
        }
        let seed = derive_seed(cfg.seed, &format!("{key}/{method}"));
        let artifact = train_method(method, &train_tok, &weak, &assets, cfg, seed)?;
        test_tok.iter().map(|d| artifact.predict(d).map(|p| p.label)).collect()
    };
    let preds: Vec<Result<Vec<ClassLabel>>> = if cfg.threads == Some(1) {
        cfg.methods.iter().map(|&m| predict(m)).collect()
    } else {
        cfg.methods.par_iter().map(|&m| predict(m)).collect()
    };

    let mut out = CellOutput {
        reports: Vec::new(),
        predictions: BTreeMap::new(),
    };
    for (&method, p) in cfg.methods.iter().zip(preds) {
        let p = p?;
        out.reports.push(EvalReport::score(
            &method.to_string(),
            method.featurizer_name(),
            rules,
            &p,
            &golds,
            train.len(),
            cfg.seed,
        )?);
        out.predictions.insert(method.to_string(), p);
    }
    Ok(out)
}

/// Run `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Split, weak-label the training part with `rules`, train every
/// configured model on the weak labels and evaluate all systems, the rules
/// included, against the gold test labels.
pub fn run_paradigm(docs: &[Document], rules: &RuleSet, cfg: &ExperimentConfig) -> Result<ParadigmResult> {
    with_threads(cfg.threads, || {
        let (test, pool) = split_corpus(docs, cfg.test_size, cfg.seed)?;
        let n = cfg.train_size.unwrap_or(pool.len());
        if n > pool.len() {
            return Err(Error::InvalidConfig(format!(
                "training size {n} exceeds the {} documents outside the test split",
                pool.len()
            )));
        }
        let shared = pool_embeddings(&pool, cfg)?;
        let train = &pool[..n];
        let cell = run_cell(train, &test, rules, cfg, &format!("paradigm/{n}"), shared.as_ref())?;
        let golds: Vec<ClassLabel> = test.iter().map(|d| ClassLabel::new(d.gold.clone().unwrap())).collect();

        let mut comparisons = Vec::new();
        if let Some(rule_preds) = cell.predictions.get("rules") {
            for (name, p) in &cell.predictions {
                if name == "rules" {
                    continue;
                }
                comparisons.push(Comparison {
                    a: name.clone(),
                    b: "rules".into(),
                    mcnemar: mcnemar(p, rule_preds, &golds)?,
                    randomization_p: approximate_randomization(
                        p,
                        rule_preds,
                        &golds,
                        cfg.randomization_rounds,
                        derive_seed(cfg.seed, &format!("randomization/{name}")),
                    )?,
                });
            }
        }
        Ok(ParadigmResult {
            reports: cell.reports,
            test_ids: test.iter().map(|d| d.id.clone()).collect(),
            golds,
            predictions: cell.predictions,
            comparisons,
        })
    })
}

/// Train on nested prefixes of one shuffled training pool and evaluate each
/// size on the same test split.
pub fn run_curve(docs: &[Document], rules: &RuleSet, cfg: &ExperimentConfig, sizes: &[usize]) -> Result<CurveReport> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::InvalidConfig("curve sizes must be positive and strictly increasing".into()));
    }
    with_threads(cfg.threads, || {
        let (test, pool) = split_corpus(docs, cfg.test_size, cfg.seed)?;
        let largest = *sizes.last().unwrap();
        if largest > pool.len() {
            return Err(Error::InvalidConfig(format!(
                "curve size {largest} exceeds the {} documents outside the test split",
                pool.len()
            )));
        }
        let shared = pool_embeddings(&pool, cfg)?;
        let mut points = Vec::with_capacity(sizes.len());
        for &size in sizes {
            let cell = run_cell(&pool[..size], &test, rules, cfg, &format!("curve/{size}"), shared.as_ref())?;
            points.push(CurvePoint {
                size,
                reports: cell.reports,
            });
        }
        Ok(CurveReport { points })
    })
}

impl CurveReport {
    /// Plot data as `size,method,precision,recall,f1`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "size,method,precision,recall,f1")?;
        for p in &self.points {
            for r in &p.reports {
                writeln!(out, "{},{},{},{},{}", p.size, r.method, r.precision, r.recall, r.f1)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// One document on which two systems disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffCase {
    pub id: String,
    pub pred_a: ClassLabel,
    pub pred_b: ClassLabel,
    pub gold: Option<ClassLabel>,
    /// What the rules matched in this document (empty if the default applied).
    pub rule_label: ClassLabel,
    pub trace: Vec<TraceEntry>,
    pub text: String,
}

/// List the documents where `preds_a` and `preds_b` differ, with the rule
/// trace of each.
pub fn diff_cases(
    preds_a: &[ClassLabel],
    preds_b: &[ClassLabel],
    golds: &[Option<ClassLabel>],
    docs: &[Document],
    rules: &RuleSet,
) -> Result<Vec<DiffCase>> {
    let n = docs.len();
    if preds_a.len() != n || preds_b.len() != n || golds.len() != n {
        return Err(Error::InvalidInput("diff inputs are not aligned with the corpus".into()));
    }
    Ok(docs
        .iter()
        .enumerate()
        .filter(|&(i, _)| preds_a[i] != preds_b[i])
        .map(|(i, d)| {
            let weak = rules.apply_document(d);
            DiffCase {
                id: d.id.clone(),
                pred_a: preds_a[i].clone(),
                pred_b: preds_b[i].clone(),
                gold: golds[i].clone(),
                rule_label: weak.label,
                trace: weak.trace,
                text: d.text.clone(),
            }
        })
        .collect())
}
