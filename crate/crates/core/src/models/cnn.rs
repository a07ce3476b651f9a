//! Text CNN: embedding lookup, parallel 1-D convolutions with ReLU, global
//! max pooling, a dense layer and softmax, trained with Adam on
//! cross-entropy.
//!
//! Documents are truncated to `max_len` tokens and conceptually padded with
//! zero vectors up to `max_len`. Windows lying entirely in the padding all
//! produce `relu(bias)`, so the forward pass evaluates only windows that
//! start on a real token and adds that single constant as an extra pooling
//! candidate. This matches the padded computation exactly.

use matrixmultiply::dgemm;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{argmax, binary_classes, check_lengths, encode, Prediction};
use crate::corpus::TokenizedDocument;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::gradcheck::{central_difference, relative_error};
use crate::rng::{seeded, Rng};
use crate::rules::ClassLabel;

const N_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnHyper {
    pub widths: Vec<usize>,
    /// Filters per width.
    pub filters: usize,
    pub max_len: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub finetune_embeddings: bool,
}

impl Default for CnnHyper {
    fn default() -> Self {
        Self {
            widths: vec![2, 3, 4],
            filters: 64,
            max_len: 256,
            lr: 1e-3,
            batch: 32,
            epochs: 5,
            seed: 1,
            finetune_embeddings: false,
        }
    }
}

impl CnnHyper {
    fn validate(&self) -> Result<()> {
        let widest = self.widths.iter().copied().max().unwrap_or(0);
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidConfig("CNN filter widths must be positive".into()));
        }
        if self.max_len < widest {
            return Err(Error::InvalidConfig(format!(
                "max_len {} is shorter than the widest filter ({widest})",
                self.max_len
            )));
        }
        if self.filters == 0 || self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("CNN filters, batch and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("CNN learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub classes: [ClassLabel; 2],
    pub hyper: CnnHyper,
    pub embeddings: EmbeddingTable,
    /// Per width `w`: `filters × (w · dim)`, row-major. Within a filter the
    /// weights are ordered by window offset, then embedding component.
    pub conv_w: Vec<Vec<f64>>,
    /// Per width: one bias per filter.
    pub conv_b: Vec<Vec<f64>>,
    /// `classes × (filters · widths)`, row-major.
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Forward {
    len: usize,
    /// Truncated, zero-padded document matrix.
    xp: Vec<f64>,
    pooled: Vec<f64>,
    /// Winning window per pooled unit; `None` when the all-padding
    /// candidate won.
    arg: Vec<Option<usize>>,
    log_probs: [f64; N_CLASSES],
}

/// Gradient buffers laid out like [`CnnModel::param_slices_mut`].
struct Grads {
    slots: Vec<Vec<f64>>,
}

struct Layout {
    emb: Option<usize>,
    conv_w: usize,
    conv_b: usize,
    dense_w: usize,
    dense_b: usize,
}

fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

impl CnnModel {
    /// Randomly initialized model (Glorot-uniform weights, zero biases).
    pub fn init(embeddings: EmbeddingTable, classes: [ClassLabel; 2], hyper: CnnHyper) -> Result<Self> {
        hyper.validate()?;
        let dim = embeddings.dim();
        let mut rng = seeded(hyper.seed);
        let conv_w = hyper
            .widths
            .iter()
            .map(|&w| glorot(&mut rng, w * dim, hyper.filters, hyper.filters * w * dim))
            .collect();
        let conv_b = hyper.widths.iter().map(|_| vec![0.0; hyper.filters]).collect();
        let hidden = hyper.filters * hyper.widths.len();
        let dense_w = glorot(&mut rng, hidden, N_CLASSES, N_CLASSES * hidden);
        Ok(Self {
            classes,
            hyper,
            embeddings,
            conv_w,
            conv_b,
            dense_w,
            dense_b: vec![0.0; N_CLASSES],
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hyper.filters * self.hyper.widths.len()
    }

    /// Vocabulary indices of the first `max_len` tokens; `None` for OOV.
    pub fn lookup(&self, doc: &TokenizedDocument) -> Vec<Option<usize>> {
        doc.tokens
            .iter()
            .take(self.hyper.max_len)
            .map(|t| self.embeddings.index_of(t))
            .collect()
    }

    fn layout(&self) -> Layout {
        let nw = self.hyper.widths.len();
        let base = usize::from(self.hyper.finetune_embeddings);
        Layout {
            emb: self.hyper.finetune_embeddings.then_some(0),
            conv_w: base,
            conv_b: base + nw,
            dense_w: base + 2 * nw,
            dense_b: base + 2 * nw + 1,
        }
    }

    /// Trainable parameters in a fixed order: embeddings (only when
    /// fine-tuning), conv weights per width, conv biases per width, dense
    /// weights, dense bias.
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if self.hyper.finetune_embeddings {
            out.push(self.embeddings.matrix_mut());
        }
        out.extend(self.conv_w.iter_mut().map(Vec::as_mut_slice));
        out.extend(self.conv_b.iter_mut().map(Vec::as_mut_slice));
        out.push(&mut self.dense_w);
        out.push(&mut self.dense_b);
        out
    }

    fn slot_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hyper.finetune_embeddings {
            out.push("embeddings".to_owned());
        }
        out.extend(self.hyper.widths.iter().map(|w| format!("conv_w[{w}]")));
        out.extend(self.hyper.widths.iter().map(|w| format!("conv_b[{w}]")));
        out.push("dense_w".to_owned());
        out.push("dense_b".to_owned());
        out
    }

    fn zero_grads(&mut self) -> Grads {
        Grads {
            slots: self.param_slices_mut().iter().map(|s| vec![0.0; s.len()]).collect(),
        }
    }

    fn forward(&self, ids: &[Option<usize>]) -> Forward {
        let dim = self.embeddings.dim();
        let f = self.hyper.filters;
        let len = ids.len();
        let widest = self.hyper.widths.iter().copied().max().unwrap_or(1);
        let rows = if len == 0 { 0 } else { (len + widest - 1).min(self.hyper.max_len) };
        let mut xp = vec![0.0; rows * dim];
        for (p, id) in ids.iter().enumerate() {
            if let Some(v) = id {
                xp[p * dim..(p + 1) * dim].copy_from_slice(self.embeddings.row(*v));
            }
        }

        let hidden = self.hidden_size();
        let mut pooled = vec![0.0; hidden];
        let mut arg = vec![None; hidden];
        let mut z = Vec::new();
        for (wi, &w) in self.hyper.widths.iter().enumerate() {
            let windows = len.min(self.hyper.max_len - w + 1);
            let has_pad_window = self.hyper.max_len - w + 1 > len;
            let k = w * dim;
            let bias = &self.conv_b[wi];
            z.clear();
            for _ in 0..windows {
                z.extend_from_slice(bias);
            }
            if windows > 0 {
                // Window p is the contiguous slice xp[p*dim .. (p+w)*dim], so
                // consecutive rows of the left operand overlap with stride dim.
                // SAFETY: the largest index read from xp is
                // (windows - 1) * dim + k - 1 < rows * dim, since
                // windows - 1 + w <= min(len + widest - 1, max_len).
                unsafe {
                    dgemm(
                        windows,
                        k,
                        f,
                        1.0,
                        xp.as_ptr(),
                        dim as isize,
                        1,
                        self.conv_w[wi].as_ptr(),
                        1,
                        k as isize,
                        1.0,
                        z.as_mut_ptr(),
                        f as isize,
                        1,
                    );
                }
            }
            for j in 0..f {
                let mut best = f64::NEG_INFINITY;
                let mut at = None;
                for p in 0..windows {
                    let a = z[p * f + j].max(0.0);
                    if a > best {
                        best = a;
                        at = Some(p);
                    }
                }
                if has_pad_window {
                    let a = bias[j].max(0.0);
                    if a > best {
                        best = a;
                        at = None;
                    }
                }
                pooled[wi * f + j] = best;
                arg[wi * f + j] = at;
            }
        }

        let mut logits = self.dense_b.clone();
        for (c, l) in logits.iter_mut().enumerate() {
            *l += crate::embeddings::dot(&self.dense_w[c * hidden..(c + 1) * hidden], &pooled);
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        let mut log_probs = [0.0; N_CLASSES];
        for c in 0..N_CLASSES {
            log_probs[c] = logits[c] - lse;
        }
        Forward {
            len,
            xp,
            pooled,
            arg,
            log_probs,
        }
    }

    /// Accumulate `scale · ∂loss/∂θ` for one instance into `g`.
    fn backward(&self, ids: &[Option<usize>], fw: &Forward, y: usize, scale: f64, g: &mut Grads) {
        let dim = self.embeddings.dim();
        let f = self.hyper.filters;
        let hidden = self.hidden_size();
        let lay = self.layout();

        let mut dlogit = [0.0; N_CLASSES];
        for c in 0..N_CLASSES {
            dlogit[c] = (fw.log_probs[c].exp() - if c == y { 1.0 } else { 0.0 }) * scale;
        }
        let mut dh = vec![0.0; hidden];
        {
            let dw = &mut g.slots[lay.dense_w];
            for c in 0..N_CLASSES {
                let row = &self.dense_w[c * hidden..(c + 1) * hidden];
                for j in 0..hidden {
                    dw[c * hidden + j] += dlogit[c] * fw.pooled[j];
                    dh[j] += row[j] * dlogit[c];
                }
            }
        }
        for c in 0..N_CLASSES {
            g.slots[lay.dense_b][c] += dlogit[c];
        }

        for (wi, &w) in self.hyper.widths.iter().enumerate() {
            let k = w * dim;
            for j in 0..f {
                let unit = wi * f + j;
                if fw.pooled[unit] <= 0.0 {
                    continue;
                }
                let d = dh[unit];
                g.slots[lay.conv_b + wi][j] += d;
                let Some(p) = fw.arg[unit] else { continue };
                let window = &fw.xp[p * dim..p * dim + k];
                let gw = &mut g.slots[lay.conv_w + wi][j * k..(j + 1) * k];
                for (a, x) in gw.iter_mut().zip(window) {
                    *a += d * x;
                }
                if let Some(e) = lay.emb {
                    let filt = &self.conv_w[wi][j * k..(j + 1) * k];
                    for r in 0..w {
                        let pos = p + r;
                        if pos >= fw.len {
                            break;
                        }
                        if let Some(v) = ids[pos] {
                            let ge = &mut g.slots[e][v * dim..(v + 1) * dim];
                            for (a, wt) in ge.iter_mut().zip(&filt[r * dim..(r + 1) * dim]) {
                                *a += d * wt;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Pooled hidden features (the input to the dense layer).
    pub fn pooled_features(&self, doc: &TokenizedDocument) -> Vec<f64> {
        self.forward(&self.lookup(doc)).pooled
    }

    pub fn probabilities(&self, doc: &TokenizedDocument) -> Vec<f64> {
        self.forward(&self.lookup(doc)).log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Cross-entropy of the instance under `label`.
    pub fn loss(&self, doc: &TokenizedDocument, label: &ClassLabel) -> Result<f64> {
        let y = self.class_index(label)?;
        Ok(-self.forward(&self.lookup(doc)).log_probs[y])
    }

    pub fn mean_loss(&self, docs: &[TokenizedDocument], labels: &[ClassLabel]) -> Result<f64> {
        check_lengths(docs.len(), labels.len())?;
        let mut total = 0.0;
        for (d, l) in docs.iter().zip(labels) {
            total += self.loss(d, l)?;
        }
        Ok(total / docs.len().max(1) as f64)
    }

    fn class_index(&self, label: &ClassLabel) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::InvalidInput(format!("label `{label}` is not one of the model's classes")))
    }

    /// Class probabilities as scores. An empty document is all padding and
    /// still gets a prediction.
    pub fn predict(&self, doc: &TokenizedDocument) -> Prediction {
        let scores = self.probabilities(doc);
        Prediction {
            label: self.classes[argmax(&scores)].clone(),
            scores,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let dim = self.embeddings.dim();
        let nw = self.hyper.widths.len();
        let shapes_ok = self.conv_w.len() == nw
            && self.conv_b.len() == nw
            && self
                .hyper
                .widths
                .iter()
                .zip(&self.conv_w)
                .all(|(w, m)| m.len() == self.hyper.filters * w * dim)
            && self.conv_b.iter().all(|b| b.len() == self.hyper.filters)
            && self.dense_w.len() == N_CLASSES * self.hidden_size()
            && self.dense_b.len() == N_CLASSES;
        if !shapes_ok {
            return Err(Error::ModelFormat("CNN parameter shapes do not match the hyperparameters".into()));
        }
        let finite = self
            .conv_w
            .iter()
            .chain(&self.conv_b)
            .flatten()
            .chain(&self.dense_w)
            .chain(&self.dense_b)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::ModelFormat("non-finite CNN parameter".into()));
        }
        Ok(())
    }

    fn is_finite(&mut self) -> bool {
        self.param_slices_mut().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

struct Adam {
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, grads: &Grads) -> Self {
        let zeros: Vec<Vec<f64>> = grads.slots.iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            lr,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (s, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[s], &mut self.v[s], &grads.slots[s]);
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

pub fn train_cnn(
    docs: &[TokenizedDocument],
    labels: &[ClassLabel],
    table: &EmbeddingTable,
    hyper: &CnnHyper,
) -> Result<CnnModel> {
    train_cnn_observed(docs, labels, table, hyper, |_| {})
}

/// [`train_cnn`], calling `after_step` with the model after every
/// optimizer step.
pub fn train_cnn_observed(
    docs: &[TokenizedDocument],
    labels: &[ClassLabel],
    table: &EmbeddingTable,
    hyper: &CnnHyper,
    mut after_step: impl FnMut(&CnnModel),
) -> Result<CnnModel> {
    check_lengths(docs.len(), labels.len())?;
    hyper.validate()?;
    let classes = binary_classes(labels)?;
    if docs.iter().all(TokenizedDocument::is_empty) {
        return Err(Error::InvalidInput("every training document is empty".into()));
    }
    let y = encode(labels, &classes);
    let mut model = CnnModel::init(table.clone(), classes, hyper.clone())?;
    let ids: Vec<Vec<Option<usize>>> = docs.iter().map(|d| model.lookup(d)).collect();

    // Shuffling uses a stream separate from initialization.
    let mut rng = seeded(crate::rng::derive_seed(hyper.seed, "cnn-shuffle"));
    let mut grads = model.zero_grads();
    let mut adam = Adam::new(hyper.lr, &grads);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch) {
            grads.slots.iter_mut().for_each(|s| s.iter_mut().for_each(|x| *x = 0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let fw = model.forward(&ids[i]);
                model.backward(&ids[i], &fw, y[i], scale, &mut grads);
            }
            adam.step(model.param_slices_mut(), &grads);
            after_step(&model);
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite CNN parameters after epoch {}", epoch + 1)));
        }
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradFault {
    /// Double the analytic gradient of the dense-layer bias.
    DenseBias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Check a seeded random subsample of this many parameters (at least
    /// 200) plus every dense-bias entry; `None` checks all parameters.
    pub max_params: Option<usize>,
    pub seed: u64,
    pub fault: Option<GradFault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_params: None,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter group and offset of the worst entry.
    pub worst: (String, usize),
    pub checked: usize,
}

/// Compare analytic gradients of the cross-entropy on one instance with
/// central finite differences.
pub fn grad_check(
    model: &CnnModel,
    doc: &TokenizedDocument,
    label: &ClassLabel,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let y = model.class_index(label)?;
    let mut work = model.clone();
    let ids = work.lookup(doc);
    let fw = work.forward(&ids);
    let mut grads = work.zero_grads();
    work.backward(&ids, &fw, y, 1.0, &mut grads);
    let lay = work.layout();
    if opts.fault == Some(GradFault::DenseBias) {
        grads.slots[lay.dense_b].iter_mut().for_each(|g| *g *= 2.0);
    }

    let mut targets: Vec<(usize, usize)> = grads
        .slots
        .iter()
        .enumerate()
        .flat_map(|(s, v)| (0..v.len()).map(move |i| (s, i)))
        .collect();
    if let Some(limit) = opts.max_params {
        let limit = limit.max(200);
        if targets.len() > limit {
            let mut rng = seeded(opts.seed);
            let (mut bias, rest): (Vec<_>, Vec<_>) = targets.into_iter().partition(|t| t.0 == lay.dense_b);
            bias.extend(rest.choose_multiple(&mut rng, limit).copied());
            bias.sort_unstable();
            targets = bias;
        }
    }

    let names = work.slot_names();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (names[targets[0].0].clone(), targets[0].1),
        checked: targets.len(),
    };
    for &(s, i) in &targets {
        let numeric = central_difference(
            &mut work,
            |m| &mut m.param_slices_mut().swap_remove(s)[i],
            opts.h,
            |m| -m.forward(&ids).log_probs[y],
        );
        let err = relative_error(grads.slots[s][i], numeric);
        if err > report.max_relative_error || !err.is_finite() {
            report.max_relative_error = err;
            report.worst = (names[s].clone(), i);
        }
    }
    Ok(report)
}
