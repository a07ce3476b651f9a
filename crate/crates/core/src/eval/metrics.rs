use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::rules::ClassLabel;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A metric value, or `NA` when its denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric(pub Option<f64>);

impl Metric {
    pub const NA: Metric = Metric(None);

    pub fn value(self) -> Option<f64> {
        self.0
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v:.6}"),
            None => f.write_str("NA"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric(Some(v))),
            Raw::Text(t) if t == "NA" => Ok(Metric::NA),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or NA, found `{t}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Metric,
    pub recall: Metric,
    pub f1: Metric,
}

/// Count outcomes with `positive` as the positive class. Inputs are aligned
/// by position.
pub fn confusion(preds: &[ClassLabel], golds: &[ClassLabel], positive: &ClassLabel) -> Result<ConfusionCounts> {
    if preds.len() != golds.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions but {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (p, g) in preds.iter().zip(golds) {
        match (p == positive, g == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn prf(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| Metric((den > 0).then(|| num as f64 / den as f64));
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision.0, recall.0) {
        (Some(p), Some(r)) if p + r > 0.0 => Metric(Some(2.0 * p * r / (p + r))),
        _ => Metric::NA,
    };
    Prf { precision, recall, f1 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    pub p_value: f64,
}

/// Exact two-sided McNemar p-value: `min(1, 2 Σ_{i ≤ min(b,c)} C(b+c, i) / 2^(b+c))`.
pub fn mcnemar_p(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    if n <= 1000 {
        // 2^-n is still a normal float here, and the recurrence is exact for
        // small n.
        let mut term = 0.5f64.powi(n as i32);
        let mut tail = term;
        for i in 0..k {
            term = term * (n - i) as f64 / (i + 1) as f64;
            tail += term;
        }
        return (2.0 * tail).min(1.0);
    }
    // Terms in log space so that large n does not underflow 2^-n.
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut ln_binom = 0.0;
    let mut logs = Vec::with_capacity(k as usize + 1);
    for i in 0..=k {
        if i > 0 {
            ln_binom += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        logs.push(ln_binom - ln2n);
    }
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail = m.exp() * logs.iter().map(|l| (l - m).exp()).sum::<f64>();
    (2.0 * tail).min(1.0)
}

pub fn mcnemar(preds_a: &[ClassLabel], preds_b: &[ClassLabel], golds: &[ClassLabel]) -> Result<McNemar> {
    if preds_a.len() != golds.len() || preds_b.len() != golds.len() {
        return Err(Error::InvalidInput("McNemar inputs differ in length".into()));
    }
    let (mut b, mut c) = (0, 0);
    for ((a, bb), g) in preds_a.iter().zip(preds_b).zip(golds) {
        match (a == g, bb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(McNemar { b, c, p_value: mcnemar_p(b, c) })
}

/// Paired approximate randomization test on the accuracy difference. Each
/// permutation swaps the two systems' predictions on every instance with
/// probability 1/2. Returns `(r + 1) / (rounds + 1)` where `r` counts
/// permutations at least as extreme as the observed difference.
pub fn approximate_randomization(
    preds_a: &[ClassLabel],
    preds_b: &[ClassLabel],
    golds: &[ClassLabel],
    rounds: usize,
    seed: u64,
) -> Result<f64> {
    if preds_a.len() != golds.len() || preds_b.len() != golds.len() {
        return Err(Error::InvalidInput("randomization test inputs differ in length".into()));
    }
    // Only discordant instances can change the statistic.
    let diffs: Vec<i64> = preds_a
        .iter()
        .zip(preds_b)
        .zip(golds)
        .filter_map(|((a, b), g)| match (a == g, b == g) {
            (true, false) => Some(1),
            (false, true) => Some(-1),
            _ => None,
        })
        .collect();
    let observed: i64 = diffs.iter().sum::<i64>().abs();
    let mut rng = seeded(seed);
    let mut extreme = 0usize;
    for _ in 0..rounds {
        let s: i64 = diffs.iter().map(|&d| if rng.gen::<bool>() { -d } else { d }).sum();
        if s.abs() >= observed {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (rounds + 1) as f64)
}
