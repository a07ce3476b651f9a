use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, ValueEnum};
use serde_json::{json, Map, Value};

use dswe::corpus::{load_corpus, read_records, write_corpus, write_records};
use dswe::embeddings::{load_embeddings, save_embeddings, train_skipgram, SkipgramConfig};
use dswe::eval::{
    diff_cases, run_curve, run_paradigm, with_threads, EvalReport, ExperimentConfig, Method,
};
use dswe::features::{fit_corpus_stats, fit_lda, save_topic_model, Featurizer, LdaConfig, OovPolicy};
use dswe::manifest::{record_run, DirectoryManifest, ManifestBuilder};
use dswe::models::{train_cnn, train_rf, train_svm, CnnHyper, Model, ModelArtifact, RfHyper, SvmHyper};
use dswe::rng::derive_seed;
use dswe::synth::{synth_generate, PerturbationRates, SynthConfig, TemplateBank};
use dswe::{ClassLabel, Document, RuleSet, TokenizedDocument};

use crate::{
    Bank, Cli, Command, CurveArgs, DiffArgs, EmbedArgs, EvalArgs, ExperimentArgs, FeatureArgs, FeaturizeArgs,
    FeaturizerKind, LabelArgs, ModelKind, NeighborsArgs, Oov, ParadigmArgs, PredictArgs, ReplayArgs, SynthArgs,
    TrainArgs,
};

/// Files a command read and wrote, for its manifest.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Io {
    fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_owned());
        self
    }

    fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_owned());
        self
    }
}

/// Report a usage problem clap cannot see and exit with status 2.
fn usage(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, message).exit()
}

fn require_out(cli: &Cli) -> &Path {
    match &cli.out {
        Some(p) => p,
        None => Cli::command()
            .error(
                ErrorKind::MissingRequiredArgument,
                format!("`{}` requires --out <FILE>", cli.command.name()),
            )
            .exit(),
    }
}

pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let started = ManifestBuilder::new(cli.command.name());
    let io = match &cli.command {
        Command::Synth(a) => synth(cli, a)?,
        Command::Label(a) => label(cli, a)?,
        Command::Embed(a) => embed(cli, a)?,
        Command::Neighbors(a) => neighbors(cli, a)?,
        Command::Featurize(a) => featurize(cli, a)?,
        Command::Train(a) => train(cli, a)?,
        Command::Predict(a) => predict(cli, a)?,
        Command::Eval(a) => eval(cli, a)?,
        Command::Paradigm(a) => paradigm(cli, a)?,
        Command::Curve(a) => curve(cli, a)?,
        Command::Diff(a) => diff(cli, a)?,
        Command::Replay(a) => return replay(a),
    };
    if io.outputs.is_empty() {
        return Ok(());
    }
    let mut builder = started
        .config(&json!({ "argv": argv, "args": cli }))?
        .seed("master", cli.seed);
    for p in io.inputs {
        builder = builder.input(p);
    }
    for p in io.outputs {
        builder = builder.output(p);
    }
    record_run(&builder.finish()).context("writing the run manifest")?;
    Ok(())
}

fn read_rules(path: &Path) -> Result<RuleSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RuleSet::parse(&text).with_context(|| format!("rule file {}", path.display()))
}

fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn tokenized(docs: &[Document]) -> Vec<TokenizedDocument> {
    docs.iter().map(TokenizedDocument::from_document).collect()
}

/// `id -> field` over a line-delimited record file.
fn read_labels(path: &Path, field: &str) -> Result<(Vec<String>, HashMap<String, ClassLabel>)> {
    let records = read_records(path).with_context(|| format!("reading {}", path.display()))?;
    let mut order = Vec::with_capacity(records.len());
    let mut map = HashMap::with_capacity(records.len());
    for r in &records {
        let id = r
            .str_field("id")
            .ok_or_else(|| anyhow!("{}:{}: missing string field `id`", path.display(), r.line))?;
        let label = r
            .str_field(field)
            .ok_or_else(|| anyhow!("{}:{}: missing string field `{field}`", path.display(), r.line))?;
        if map.insert(id.to_owned(), ClassLabel::from(label)).is_some() {
            bail!("{}:{}: duplicate id `{id}`", path.display(), r.line);
        }
        order.push(id.to_owned());
    }
    Ok((order, map))
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<Io> {
    let out = require_out(cli);
    let bank = match a.bank {
        Bank::Smoking => TemplateBank::smoking(),
        Bank::Fracture => TemplateBank::fracture(),
    };
    let mut cfg = SynthConfig::new(bank, a.n, cli.seed);
    if !a.priors.is_empty() {
        cfg.class_priors = a.priors.clone();
    }
    cfg.perturbations = PerturbationRates {
        misspell: a.misspell,
        split: a.split,
        trap: a.trap,
    };
    cfg.id_prefix = a.id_prefix.clone();
    if let Err(e) = cfg.validate() {
        usage(e);
    }
    let corpus = synth_generate(&cfg)?;
    let side = a.perturb_out.clone().unwrap_or_else(|| out.with_extension("perturb.jsonl"));
    write_corpus(out, &corpus.documents)?;
    write_records(&side, &corpus.manifest)?;
    Ok(Io::default().output(out).output(&side))
}

fn label(cli: &Cli, a: &LabelArgs) -> Result<Io> {
    let out = require_out(cli);
    let rules = read_rules(&a.rules)?;
    let docs = read_corpus(&a.input)?;
    let records = read_records(&a.input)?;
    let weak = rules.label_corpus(&docs, cli.threads)?;
    let labeled: Vec<Map<String, Value>> = records
        .into_iter()
        .zip(&weak)
        .map(|(r, w)| {
            let mut fields = r.fields;
            fields.insert("weak".into(), Value::String(w.label.as_str().to_owned()));
            if a.trace {
                fields.insert("trace".into(), serde_json::to_value(&w.trace).expect("trace serializes"));
            }
            fields
        })
        .collect();
    write_records(out, &labeled)?;
    Ok(Io::default().input(&a.rules).input(&a.input).output(out))
}

fn embed(cli: &Cli, a: &EmbedArgs) -> Result<Io> {
    let out = require_out(cli);
    let d = SkipgramConfig::default();
    let cfg = SkipgramConfig {
        dim: a.dim.unwrap_or(d.dim),
        window: a.window.unwrap_or(d.window),
        negatives: a.negatives.unwrap_or(d.negatives),
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        min_count: a.min_count.unwrap_or(d.min_count),
        subsample_threshold: a.subsample.unwrap_or(d.subsample_threshold),
        seed: cli.seed,
    };
    let docs = tokenized(&read_corpus(&a.input)?);
    let sentences: Vec<Vec<&str>> = docs.iter().map(|d| d.tokens.iter().map(String::as_str).collect()).collect();
    let table = train_skipgram(&sentences, &cfg)?;
    save_embeddings(&table, out)?;
    Ok(Io::default().input(&a.input).output(out))
}

fn neighbors(cli: &Cli, a: &NeighborsArgs) -> Result<Io> {
    let table = load_embeddings(&a.embeddings).with_context(|| format!("loading {}", a.embeddings.display()))?;
    let mut rows = Vec::new();
    for w in &a.words {
        for (rank, (n, cos)) in table.nearest_neighbors(w, a.k)?.into_iter().enumerate() {
            println!("{w}\t{n}\t{cos:.6}");
            rows.push(json!({ "word": w, "rank": rank + 1, "neighbor": n, "cosine": cos }));
        }
    }
    let io = Io::default().input(&a.embeddings);
    match &cli.out {
        Some(out) => {
            write_records(out, &rows)?;
            Ok(io.output(out))
        }
        None => Ok(io),
    }
}

fn oov_policy(o: Oov) -> OovPolicy {
    match o {
        Oov::Skip => OovPolicy::Skip,
        Oov::Zero => OovPolicy::Zero,
    }
}

fn need_embeddings(f: &FeatureArgs, what: &str) -> PathBuf {
    f.embeddings
        .clone()
        .unwrap_or_else(|| usage(format!("{what} needs --embeddings <FILE>")))
}

/// Fit the featurizer named by `kind` on `fit_docs`.
fn build_featurizer(kind: FeaturizerKind, f: &FeatureArgs, fit_docs: &[TokenizedDocument], seed: u64) -> Result<Featurizer> {
    Ok(match kind {
        FeaturizerKind::Mean => {
            let path = need_embeddings(f, "the mean featurizer");
            Featurizer::Mean {
                table: load_embeddings(&path).with_context(|| format!("loading {}", path.display()))?,
                oov: oov_policy(f.oov),
            }
        }
        FeaturizerKind::Tfidf => Featurizer::Tfidf {
            stats: fit_corpus_stats(fit_docs)?,
        },
        FeaturizerKind::Lda => {
            let cfg = LdaConfig {
                iterations: f.lda_iterations,
                ..LdaConfig::new(f.topics, derive_seed(seed, "lda"))
            };
            Featurizer::Lda {
                model: fit_lda(fit_docs, &cfg)?,
            }
        }
        FeaturizerKind::Tokens => Featurizer::Tokens,
    })
}

fn featurize(cli: &Cli, a: &FeaturizeArgs) -> Result<Io> {
    let out = require_out(cli);
    let docs = tokenized(&read_corpus(&a.input)?);
    let fit_docs = match &a.fit {
        Some(p) => tokenized(&read_corpus(p)?),
        None => docs.clone(),
    };
    let featurizer = build_featurizer(a.featurizer, &a.features, &fit_docs, cli.seed)?;
    let rows: Vec<Value> = docs
        .iter()
        .map(|d| match featurizer.vector(d) {
            Some(v) => json!({ "id": d.doc_id, "features": v }),
            None => json!({ "id": d.doc_id, "tokens": d.tokens }),
        })
        .collect();
    write_records(out, &rows)?;
    let mut io = Io::default().input(&a.input);
    if let Some(p) = &a.fit {
        io = io.input(p);
    }
    if let Some(p) = &a.features.embeddings {
        io = io.input(p);
    }
    io = io.output(out);
    if let Some(p) = &a.topics_out {
        match &featurizer {
            Featurizer::Lda { model } => save_topic_model(model, p)?,
            _ => usage("--topics-out applies to the lda featurizer only"),
        }
        io = io.output(p);
    }
    Ok(io)
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<Io> {
    let out = require_out(cli);
    let consumes_tokens = a.model == ModelKind::Cnn;
    if consumes_tokens != (a.featurizer == FeaturizerKind::Tokens) {
        bail!(
            "model `{}` cannot be trained on `{}` features: the CNN reads token sequences (--featurizer tokens), \
             SVM and RF read fixed-length vectors (mean, tfidf or lda)",
            a.model.to_possible_value().unwrap().get_name(),
            a.featurizer.to_possible_value().unwrap().get_name()
        );
    }
    let docs = tokenized(&read_corpus(&a.input)?);
    let (order, by_id) = read_labels(&a.input, &a.label_field)?;
    debug_assert_eq!(order.len(), docs.len());
    let labels: Vec<ClassLabel> = docs.iter().map(|d| by_id[&d.doc_id].clone()).collect();
    let featurizer = build_featurizer(a.featurizer, &a.features, &docs, cli.seed)?;

    let model = with_threads(cli.threads, || {
        let vectors = || docs.iter().map(|d| featurizer.vector(d).expect("vector featurizer")).collect::<Vec<_>>();
        Ok(match a.model {
            ModelKind::Svm => {
                let d = SvmHyper::default();
                let hyper = SvmHyper {
                    lambda: a.lambda.unwrap_or(d.lambda),
                    epochs: a.svm_epochs.unwrap_or(d.epochs),
                    seed: cli.seed,
                    ..d
                };
                Model::Svm(train_svm(&vectors(), &labels, &hyper)?)
            }
            ModelKind::Rf => {
                let d = RfHyper::default();
                let hyper = RfHyper {
                    n_trees: a.trees.unwrap_or(d.n_trees),
                    max_depth: a.max_depth.or(d.max_depth),
                    min_leaf: a.min_leaf.unwrap_or(d.min_leaf),
                    features_per_split: a.features_per_split.or(d.features_per_split),
                    bootstrap: !a.no_bootstrap,
                    seed: cli.seed,
                };
                Model::Rf(train_rf(&vectors(), &labels, &hyper)?)
            }
            ModelKind::Cnn => {
                let path = need_embeddings(&a.features, "the CNN");
                let table = load_embeddings(&path)?;
                let d = CnnHyper::default();
                let hyper = CnnHyper {
                    widths: a.widths.clone().unwrap_or(d.widths),
                    filters: a.filters.unwrap_or(d.filters),
                    max_len: a.max_len.unwrap_or(d.max_len),
                    lr: a.lr.unwrap_or(d.lr),
                    batch: a.batch.unwrap_or(d.batch),
                    epochs: a.cnn_epochs.unwrap_or(d.epochs),
                    seed: cli.seed,
                    finetune_embeddings: a.finetune,
                };
                Model::Cnn(train_cnn(&docs, &labels, &table, &hyper)?)
            }
        })
    })?;
    ModelArtifact::new(model, featurizer)?.save(out)?;
    let mut io = Io::default().input(&a.input);
    if let Some(p) = &a.features.embeddings {
        io = io.input(p);
    }
    Ok(io.output(out))
}

fn predict(cli: &Cli, a: &PredictArgs) -> Result<Io> {
    let out = require_out(cli);
    let artifact = ModelArtifact::load(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let classes = artifact.model.classes().clone();
    let docs = tokenized(&read_corpus(&a.input)?);
    let mut rows = Vec::with_capacity(docs.len());
    for d in &docs {
        let p = artifact.predict(d)?;
        let scores: Map<String, Value> = classes
            .iter()
            .zip(&p.scores)
            .map(|(c, s)| (c.as_str().to_owned(), json!(s)))
            .collect();
        rows.push(json!({ "id": d.doc_id, "pred": p.label, "scores": scores }));
    }
    write_records(out, &rows)?;
    Ok(Io::default().input(&a.model).input(&a.input).output(out))
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<Io> {
    let rules = read_rules(&a.rules)?;
    let (_, preds_by_id) = read_labels(&a.pred, &a.pred_field)?;
    let docs = read_corpus(&a.gold)?;
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for d in docs.iter().filter(|d| d.gold.is_some()) {
        let p = preds_by_id
            .get(&d.id)
            .ok_or_else(|| anyhow!("no prediction for gold document `{}`", d.id))?;
        preds.push(p.clone());
        golds.push(ClassLabel::from(d.gold.as_deref().unwrap()));
    }
    if golds.is_empty() {
        bail!("{} holds no documents with gold labels", a.gold.display());
    }
    let report = EvalReport::score(&a.method, &a.featurizer, &rules, &preds, &golds, a.train_size, cli.seed)?;
    print_reports(std::slice::from_ref(&report));
    let io = Io::default().input(&a.pred).input(&a.gold).input(&a.rules);
    match &cli.out {
        Some(out) => {
            write_records(out, &[&report])?;
            Ok(io.output(out))
        }
        None => Ok(io),
    }
}

fn print_reports(reports: &[EvalReport]) {
    println!("{:<12} {:>6} {:>10} {:>10} {:>10}", "method", "train", "precision", "recall", "f1");
    for r in reports {
        println!(
            "{:<12} {:>6} {:>10} {:>10} {:>10}",
            r.method, r.train_size, r.precision, r.recall, r.f1
        );
    }
}

fn experiment_config(cli: &Cli, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing experiment config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(methods) = &a.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse::<Method>().unwrap_or_else(|e| usage(e)))
            .collect();
    }
    if let Some(n) = a.test_size {
        cfg.test_size = n;
    }
    cfg.seed = cli.seed;
    cfg.threads = cli.threads;
    Ok(cfg)
}

fn experiment_io(a: &ExperimentArgs) -> Io {
    let io = Io::default().input(&a.input).input(&a.rules);
    match &a.config {
        Some(p) => io.input(p),
        None => io,
    }
}

fn paradigm(cli: &Cli, a: &ParadigmArgs) -> Result<Io> {
    let out = require_out(cli);
    let mut cfg = experiment_config(cli, &a.experiment)?;
    if a.train_size.is_some() {
        cfg.train_size = a.train_size;
    }
    let rules = read_rules(&a.experiment.rules)?;
    let docs = read_corpus(&a.experiment.input)?;
    let result = run_paradigm(&docs, &rules, &cfg)?;

    print_reports(&result.reports);
    for c in &result.comparisons {
        println!(
            "{} vs {}: mcnemar b={} c={} p={:.6}; randomization p={:.6}",
            c.a, c.b, c.mcnemar.b, c.mcnemar.c, c.mcnemar.p_value, c.randomization_p
        );
    }
    let preds_path = out.with_extension("predictions.jsonl");
    let sig_path = out.with_extension("significance.jsonl");
    let pred_rows: Vec<Value> = result
        .test_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut row = Map::new();
            row.insert("id".into(), json!(id));
            row.insert("gold".into(), json!(result.golds[i]));
            for (m, p) in &result.predictions {
                row.insert(m.clone(), json!(p[i]));
            }
            Value::Object(row)
        })
        .collect();
    write_records(out, &result.reports)?;
    write_records(&preds_path, &pred_rows)?;
    write_records(&sig_path, &result.comparisons)?;
    Ok(experiment_io(&a.experiment).output(out).output(&preds_path).output(&sig_path))
}

fn curve(cli: &Cli, a: &CurveArgs) -> Result<Io> {
    let out = require_out(cli);
    let cfg = experiment_config(cli, &a.experiment)?;
    let rules = read_rules(&a.experiment.rules)?;
    let docs = read_corpus(&a.experiment.input)?;
    let report = run_curve(&docs, &rules, &cfg, &a.sizes)?;
    let reports: Vec<&EvalReport> = report.points.iter().flat_map(|p| &p.reports).collect();
    print_reports(&reports.iter().map(|r| (*r).clone()).collect::<Vec<_>>());
    let csv = a.csv.clone().unwrap_or_else(|| out.with_extension("csv"));
    write_records(out, &reports)?;
    report.save_csv(&csv)?;
    Ok(experiment_io(&a.experiment).output(out).output(&csv))
}

fn diff(cli: &Cli, a: &DiffArgs) -> Result<Io> {
    let rules = read_rules(&a.rules)?;
    let (order, preds_a) = read_labels(&a.a, &a.a_field)?;
    let (_, preds_b) = read_labels(&a.b, &a.b_field)?;
    let corpus = read_corpus(&a.input)?;
    let by_id: HashMap<&str, &Document> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut docs = Vec::with_capacity(order.len());
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    for id in &order {
        let d = by_id
            .get(id.as_str())
            .ok_or_else(|| anyhow!("document `{id}` from {} is not in the corpus", a.a.display()))?;
        let b = preds_b
            .get(id)
            .ok_or_else(|| anyhow!("document `{id}` has no prediction in {}", a.b.display()))?;
        docs.push((*d).clone());
        pa.push(preds_a[id].clone());
        pb.push(b.clone());
    }
    let golds: Vec<Option<ClassLabel>> = docs.iter().map(|d| d.gold.as_deref().map(ClassLabel::from)).collect();
    let cases = diff_cases(&pa, &pb, &golds, &docs, &rules)?;
    println!("{} of {} documents differ", cases.len(), docs.len());
    for c in &cases {
        let gold = c.gold.as_ref().map_or("-", ClassLabel::as_str);
        let matched: Vec<&str> = c.trace.iter().map(|t| t.pattern.as_str()).collect();
        println!("{}\ta={}\tb={}\tgold={}\trules={} [{}]", c.id, c.pred_a, c.pred_b, gold, c.rule_label, matched.join("; "));
    }
    let io = Io::default().input(&a.a).input(&a.b).input(&a.input).input(&a.rules);
    match &cli.out {
        Some(out) => {
            write_records(out, &cases)?;
            Ok(io.output(out))
        }
        None => Ok(io),
    }
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let manifest = DirectoryManifest::load(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let entry = manifest
        .runs
        .get(&a.artifact)
        .ok_or_else(|| anyhow!("{} has no entry for `{}`", a.manifest.display(), a.artifact))?;
    let argv: Vec<String> = serde_json::from_value(entry.config["argv"].clone())
        .context("manifest entry does not record the command line")?;
    let cli = Cli::try_parse_from(std::iter::once("dswe".to_owned()).chain(argv.iter().cloned()))
        .map_err(|e| anyhow!("recorded command line no longer parses: {e}"))?;
    run(&cli, &argv)
}
