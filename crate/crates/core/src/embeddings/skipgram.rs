use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting rate; decays linearly to 1e-4 of this value.
    pub learning_rate: f64,
    pub min_count: usize,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsample_threshold: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            subsample_threshold: 1e-3,
            seed: 1,
        }
    }
}

impl SkipgramConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 || self.min_count == 0 {
            return bad("skip-gram dim, window, negatives, epochs and min_count must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("skip-gram learning rate must be positive");
        }
        if !(self.subsample_threshold >= 0.0) {
            return bad("subsample threshold must be non-negative");
        }
        Ok(())
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // log(1 / (1 + e^-x)) without overflow
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Negative-sampling loss for one `(center, context, negatives)` triple:
/// `-log σ(u_o·v) - Σ_k log σ(-u_k·v)`.
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let mut loss = -log_sigmoid(super::dot(context, center));
    for u in negatives {
        loss -= log_sigmoid(-super::dot(u, center));
    }
    loss
}

/// Loss plus the derivative of the loss with respect to each score
/// `u·v`: `σ(u_o·v) - 1` for the context word, then `σ(u_k·v)` per negative
/// (written into `neg_coef`).
///
/// The gradients follow directly: `∂/∂v = g_o u_o + Σ g_k u_k`,
/// `∂/∂u_o = g_o v`, `∂/∂u_k = g_k v`.
pub fn sgns_coefficients(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
    neg_coef: &mut Vec<f64>,
) -> (f64, f64) {
    neg_coef.clear();
    let s = super::dot(context, center);
    let mut loss = -log_sigmoid(s);
    let g_pos = sigmoid(s) - 1.0;
    for u in negatives {
        let s = super::dot(u, center);
        loss -= log_sigmoid(-s);
        neg_coef.push(sigmoid(s));
    }
    (loss, g_pos)
}

/// Full analytic gradients of [`sgns_loss`].
#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGradients {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Expand [`sgns_coefficients`] into per-vector gradients.
pub fn sgns_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGradients {
    let mut coef = Vec::with_capacity(negatives.len());
    let (loss, g_pos) = sgns_coefficients(center, context, negatives, &mut coef);
    let mut d_center: Vec<f64> = context.iter().map(|u| g_pos * u).collect();
    for (u, &g) in negatives.iter().zip(&coef) {
        for (d, x) in d_center.iter_mut().zip(*u) {
            *d += g * x;
        }
    }
    SgnsGradients {
        loss,
        center: d_center,
        context: center.iter().map(|v| g_pos * v).collect(),
        negatives: coef.iter().map(|&g| center.iter().map(|v| g * v).collect()).collect(),
    }
}

struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn sample(&self, rng: &mut crate::rng::Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Train skip-gram embeddings with negative sampling.
///
/// Single-threaded and deterministic for a given seed: documents and tokens
/// are visited in order, and window shrinking, subsampling and negative draws
/// all come from one seeded stream.
pub fn train_skipgram<S: AsRef<str>>(corpus: &[Vec<S>], cfg: &SkipgramConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for t in doc {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= cfg.min_count)
        .collect();
    if vocab.is_empty() {
        return Err(Error::InvalidInput(
            "empty vocabulary after min_count filtering".into(),
        ));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let word_counts: Vec<usize> = vocab.iter().map(|(_, c)| *c).collect();
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.iter().filter_map(|t| index.get(t.as_ref()).copied()).collect())
        .collect();
    let total_tokens: usize = word_counts.iter().sum();

    let dim = cfg.dim;
    let v = vocab.len();
    let mut rng = seeded(cfg.seed);
    let mut w_in: Vec<f64> = (0..v * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut w_out = vec![0.0; v * dim];

    let keep_prob: Vec<f64> = word_counts
        .iter()
        .map(|&c| {
            if cfg.subsample_threshold <= 0.0 {
                return 1.0;
            }
            let f = c as f64;
            let st = cfg.subsample_threshold * total_tokens as f64;
            ((f / st).sqrt() + 1.0) * st / f
        })
        .collect();
    let sampler = NegativeSampler::new(&word_counts);

    let budget = (cfg.epochs * total_tokens) as f64 + 1.0;
    let mut processed = 0usize;
    let mut neu1e = vec![0.0; dim];
    let mut kept = Vec::new();
    let mut negs: Vec<usize> = Vec::with_capacity(cfg.negatives);
    let mut neg_coef: Vec<f64> = Vec::with_capacity(cfg.negatives);

    for epoch in 0..cfg.epochs {
        for doc in &docs {
            kept.clear();
            for &w in doc {
                if keep_prob[w] >= 1.0 || rng.gen::<f64>() < keep_prob[w] {
                    kept.push(w);
                }
            }
            processed += doc.len();
            let lr = cfg.learning_rate * (1.0 - processed as f64 / budget).max(1e-4);

            for (pos, &center) in kept.iter().enumerate() {
                let shrink = rng.gen_range(0..cfg.window);
                let span = cfg.window - shrink;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(kept.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = kept[ctx_pos];
                    negs.clear();
                    for _ in 0..cfg.negatives {
                        let n = sampler.sample(&mut rng);
                        if n != context {
                            negs.push(n);
                        }
                    }
                    let vc = &w_in[center * dim..(center + 1) * dim];
                    let row = |i: usize| &w_out[i * dim..(i + 1) * dim];
                    let neg_rows: Vec<&[f64]> = negs.iter().map(|&n| row(n)).collect();
                    let (_, g_pos) = sgns_coefficients(vc, row(context), &neg_rows, &mut neg_coef);

                    // Gradient for the center vector uses the output vectors
                    // before they move.
                    neu1e.iter_mut().for_each(|x| *x = 0.0);
                    for (&t, &g) in std::iter::once(&context)
                        .chain(negs.iter())
                        .zip(std::iter::once(&g_pos).chain(neg_coef.iter()))
                    {
                        let u = &w_out[t * dim..(t + 1) * dim];
                        for k in 0..dim {
                            neu1e[k] += g * u[k];
                        }
                    }
                    for (&t, &g) in std::iter::once(&context)
                        .chain(negs.iter())
                        .zip(std::iter::once(&g_pos).chain(neg_coef.iter()))
                    {
                        let step = lr * g;
                        let (u, vc) = (&mut w_out[t * dim..(t + 1) * dim], &w_in[center * dim..(center + 1) * dim]);
                        for k in 0..dim {
                            u[k] -= step * vc[k];
                        }
                    }
                    let vc = &mut w_in[center * dim..(center + 1) * dim];
                    for k in 0..dim {
                        vc[k] -= lr * neu1e[k];
                    }
                }
            }
        }
        if w_in.iter().chain(&w_out).any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite weights after epoch {}", epoch + 1)));
        }
    }

    let words = vocab.into_iter().map(|(w, _)| w.to_owned()).collect();
    Ok(EmbeddingTable::from_parts(dim, words, w_in))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn small_cfg() -> SkipgramConfig {
        SkipgramConfig {
            dim: 16,
            window: 2,
            epochs: 20,
            subsample_threshold: 0.0,
            ..SkipgramConfig::default()
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let corpus: Vec<Vec<String>> = (0..30).map(|i| toks(if i % 2 == 0 { "a b c d" } else { "d c x y" })).collect();
        let a = train_skipgram(&corpus, &small_cfg()).unwrap();
        let b = train_skipgram(&corpus, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = train_skipgram(&corpus, &SkipgramConfig { seed: 2, ..small_cfg() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let corpus: Vec<Vec<String>> = vec![toks("a b"), vec![]];
        let cfg = SkipgramConfig { min_count: 5, ..small_cfg() };
        assert!(matches!(train_skipgram(&corpus, &cfg), Err(Error::InvalidInput(_))));
        let none: Vec<Vec<String>> = vec![];
        assert!(train_skipgram(&none, &small_cfg()).is_err());
    }

    #[test]
    fn cooccurring_words_end_up_closer() {
        // `alpha` and `beta` always share a context; `gamma` lives elsewhere.
        let mut rng = seeded(3);
        let left = ["red", "green", "blue", "black"];
        let right = ["one", "two", "three", "four"];
        let mut corpus = Vec::new();
        for _ in 0..400 {
            let l = left[rng.gen_range(0..4)];
            let r = right[rng.gen_range(0..4)];
            corpus.push(toks(&format!("{l} alpha beta {l}")));
            corpus.push(toks(&format!("{r} gamma {r} {r}")));
        }
        let t = train_skipgram(&corpus, &SkipgramConfig { epochs: 5, ..small_cfg() }).unwrap();
        let ab = t.cosine("alpha", "beta").unwrap();
        let ag = t.cosine("alpha", "gamma").unwrap();
        assert!(ab > ag, "cos(alpha,beta)={ab} cos(alpha,gamma)={ag}");
    }

    #[test]
    fn vocab_sorted_by_frequency() {
        let corpus = vec![toks("b a a c a b")];
        let t = train_skipgram(&corpus, &small_cfg()).unwrap();
        assert_eq!(t.vocab(), ["a", "b", "c"]);
    }

    #[test]
    fn coefficients_match_loss() {
        let v = [0.3, -0.2, 0.5];
        let u = [0.1, 0.4, -0.3];
        let n1 = [-0.2, 0.2, 0.1];
        let mut coef = Vec::new();
        let (loss, g) = sgns_coefficients(&v, &u, &[&n1], &mut coef);
        assert!((loss - sgns_loss(&v, &u, &[&n1])).abs() < 1e-15);
        assert!(g < 0.0 && coef[0] > 0.0 && coef[0] < 1.0);
        assert!(log_sigmoid(-800.0).is_finite());
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::gradcheck::{central_difference, relative_error};
        let mut rng = crate::rng::seeded(11);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect() };
        let dim = 6;
        let (v, u, n1, n2) = (draw(dim), draw(dim), draw(dim), draw(dim));
        let g = sgns_gradients(&v, &u, &[&n1, &n2]);
        assert!((g.loss - sgns_loss(&v, &u, &[&n1, &n2])).abs() < 1e-15);
        let mut worst = 0.0f64;
        let mut params = [v, u, n1, n2];
        for which in 0..4 {
            for k in 0..dim {
                let numeric = central_difference(&mut params, |p| &mut p[which][k], 1e-5, |p| {
                    sgns_loss(&p[0], &p[1], &[&p[2], &p[3]])
                });
                let analytic = match which {
                    0 => g.center[k],
                    1 => g.context[k],
                    n => g.negatives[n - 2][k],
                };
                worst = worst.max(relative_error(analytic, numeric));
            }
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }
}
