use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::corpus::TokenizedDocument;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl LdaConfig {
    /// `alpha = 50/K`, `beta = 0.01`, 200 sweeps.
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            iterations: 200,
            alpha: 50.0 / k.max(1) as f64,
            beta: 0.01,
            seed,
        }
    }
}

/// Per-word topic distributions from a fitted LDA model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopicRepr")]
pub struct TopicModel {
    pub k: usize,
    vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// Row-major `vocab × k`.
    word_topic: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
struct TopicRepr {
    k: usize,
    vocab: Vec<String>,
    word_topic: Vec<f64>,
    iterations: usize,
    seed: u64,
}

impl TryFrom<TopicRepr> for TopicModel {
    type Error = Error;

    fn try_from(r: TopicRepr) -> Result<Self> {
        TopicModel::from_parts(r.k, r.vocab, r.word_topic, r.iterations, r.seed)
    }
}

impl TopicModel {
    fn from_parts(k: usize, vocab: Vec<String>, word_topic: Vec<f64>, iterations: usize, seed: u64) -> Result<Self> {
        if k < 2 || word_topic.len() != vocab.len() * k {
            return Err(Error::ModelFormat("topic model shape mismatch".into()));
        }
        if word_topic.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::ModelFormat("topic probabilities must be finite and non-negative".into()));
        }
        let index: HashMap<String, usize> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(Error::ModelFormat("duplicate word in topic model".into()));
        }
        Ok(Self { k, vocab, index, word_topic, iterations, seed })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn row(&self, w: usize) -> &[f64] {
        &self.word_topic[w * self.k..(w + 1) * self.k]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }
}

/// Collapsed Gibbs sampler state. Exposed so callers can observe counts
/// between sweeps.
pub struct GibbsSampler {
    cfg: LdaConfig,
    vocab: Vec<String>,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<usize>>,
    /// Row-major `vocab × k`.
    word_topic: Vec<usize>,
    topic_total: Vec<usize>,
    rng: Rng,
    probs: Vec<f64>,
    sweeps: usize,
}

impl GibbsSampler {
    pub fn new(corpus: &[TokenizedDocument], cfg: &LdaConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput("cannot fit LDA on an empty corpus".into()));
        }
        if cfg.k < 2 {
            return Err(Error::InvalidConfig("LDA needs at least 2 topics".into()));
        }
        if !(cfg.alpha > 0.0 && cfg.beta > 0.0) {
            return Err(Error::InvalidConfig("LDA priors must be positive".into()));
        }
        let vocab: Vec<String> = corpus
            .iter()
            .flat_map(|d| d.tokens.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if cfg.k > vocab.len() {
            return Err(Error::InvalidConfig(format!(
                "{} topics requested but the vocabulary has only {} words",
                cfg.k,
                vocab.len()
            )));
        }
        let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let docs: Vec<Vec<usize>> = corpus
            .iter()
            .map(|d| d.tokens.iter().map(|t| index[t.as_str()]).collect())
            .collect();

        let k = cfg.k;
        let mut rng = seeded(cfg.seed);
        let mut word_topic = vec![0; vocab.len() * k];
        let mut topic_total = vec![0; k];
        let mut doc_topic = Vec::with_capacity(docs.len());
        let mut assignments = Vec::with_capacity(docs.len());
        for doc in &docs {
            let mut dt = vec![0; k];
            let z: Vec<usize> = doc
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    dt[t] += 1;
                    word_topic[w * k + t] += 1;
                    topic_total[t] += 1;
                    t
                })
                .collect();
            doc_topic.push(dt);
            assignments.push(z);
        }
        Ok(Self {
            cfg: cfg.clone(),
            vocab,
            docs,
            assignments,
            doc_topic,
            word_topic,
            topic_total,
            rng,
            probs: vec![0.0; k],
            sweeps: 0,
        })
    }

    /// Resample every token's topic once.
    pub fn sweep(&mut self) {
        let k = self.cfg.k;
        let (alpha, beta) = (self.cfg.alpha, self.cfg.beta);
        let v_beta = self.vocab.len() as f64 * beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d][old] -= 1;
                self.word_topic[w * k + old] -= 1;
                self.topic_total[old] -= 1;

                let mut acc = 0.0;
                for t in 0..k {
                    acc += (self.doc_topic[d][t] as f64 + alpha)
                        * (self.word_topic[w * k + t] as f64 + beta)
                        / (self.topic_total[t] as f64 + v_beta);
                    self.probs[t] = acc;
                }
                let u = self.rng.gen::<f64>() * acc;
                let new = self.probs.partition_point(|&c| c <= u).min(k - 1);

                self.assignments[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.word_topic[w * k + new] += 1;
                self.topic_total[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    pub fn total_assignments(&self) -> usize {
        self.topic_total.iter().sum()
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }

    /// Normalize `count(w, k) + beta` over topics for every word.
    pub fn into_model(self) -> TopicModel {
        let k = self.cfg.k;
        let beta = self.cfg.beta;
        let mut word_topic = Vec::with_capacity(self.vocab.len() * k);
        for w in 0..self.vocab.len() {
            let row = &self.word_topic[w * k..(w + 1) * k];
            let z: f64 = row.iter().map(|&c| c as f64 + beta).sum();
            word_topic.extend(row.iter().map(|&c| (c as f64 + beta) / z));
        }
        let index = self.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        TopicModel {
            k,
            vocab: self.vocab,
            index,
            word_topic,
            iterations: self.sweeps,
            seed: self.cfg.seed,
        }
    }
}

/// Fit LDA by collapsed Gibbs sampling for `cfg.iterations` sweeps.
pub fn fit_lda(corpus: &[TokenizedDocument], cfg: &LdaConfig) -> Result<TopicModel> {
    let mut sampler = GibbsSampler::new(corpus, cfg)?;
    for _ in 0..cfg.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Mean of the word-topic rows over in-vocabulary tokens; the uniform
/// mixture for empty or all-OOV documents.
pub fn topic_feature(doc: &TokenizedDocument, model: &TopicModel) -> FeatureVector {
    let mut sum = vec![0.0; model.k];
    let mut n = 0usize;
    for t in &doc.tokens {
        if let Some(row) = model.get(t) {
            for (s, p) in sum.iter_mut().zip(row) {
                *s += p;
            }
            n += 1;
        }
    }
    if n == 0 {
        return FeatureVector::dense(vec![1.0 / model.k as f64; model.k]);
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    FeatureVector::dense(sum)
}

/// Header `LDA <K> <vocab> <seed>`, then `<word> <p1> ... <pK>` per word.
pub fn save_topic_model(model: &TopicModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "LDA {} {} {}", model.k, model.vocab.len(), model.seed)?;
    for (i, word) in model.vocab.iter().enumerate() {
        w.write_all(word.as_bytes())?;
        for p in model.row(i) {
            write!(w, " {p}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_topic_model(path: &Path) -> Result<TopicModel> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |m: String| Error::ModelFormat(format!("{}: {m}", path.display()));
    let header = lines.next().transpose()?.ok_or_else(|| bad("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (k, n, seed) = match fields.as_slice() {
        ["LDA", k, n, seed] => (
            k.parse::<usize>().map_err(|_| bad("bad K".into()))?,
            n.parse::<usize>().map_err(|_| bad("bad vocab size".into()))?,
            seed.parse::<u64>().map_err(|_| bad("bad seed".into()))?,
        ),
        _ => return Err(bad(format!("bad header `{header}`"))),
    };
    let mut vocab = Vec::with_capacity(n);
    let mut word_topic = Vec::with_capacity(n * k);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        vocab.push(parts.next().expect("non-blank").to_owned());
        let before = word_topic.len();
        for p in parts {
            word_topic.push(p.parse::<f64>().map_err(|_| bad(format!("row {}: bad number", row + 1)))?);
        }
        if word_topic.len() - before != k {
            return Err(bad(format!("row {}: expected {k} probabilities", row + 1)));
        }
    }
    if vocab.len() != n {
        return Err(bad(format!("header declares {n} words, found {}", vocab.len())));
    }
    TopicModel::from_parts(k, vocab, word_topic, 0, seed)
}
