//! Linear SVM trained with Pegasos-style stochastic subgradient descent on
//! the primal L2-regularized hinge loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, binary_classes, check_lengths, common_dim, encode, Prediction};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng::seeded;
use crate::rules::ClassLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmHyper {
    /// L2 regularization strength.
    pub lambda: f64,
    /// Passes over the shuffled training set.
    pub epochs: usize,
    /// Project onto the ball of radius `1/sqrt(lambda)` after each step.
    pub project: bool,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 10,
            project: true,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `classes[1]` is the `+1` side of the margin.
    pub classes: [ClassLabel; 2],
    pub hyper: SvmHyper,
}

/// The bias is learned as the weight of a constant feature, so it is
/// regularized together with `weights`.
pub fn train_svm(features: &[FeatureVector], labels: &[ClassLabel], hyper: &SvmHyper) -> Result<SvmModel> {
    check_lengths(features.len(), labels.len())?;
    if !(hyper.lambda > 0.0 && hyper.lambda.is_finite()) || hyper.epochs == 0 {
        return Err(Error::InvalidConfig("SVM needs lambda > 0 and at least one epoch".into()));
    }
    let classes = binary_classes(labels)?;
    let dim = common_dim(features)?;
    let y: Vec<f64> = encode(labels, &classes).into_iter().map(|c| if c == 1 { 1.0 } else { -1.0 }).collect();

    // w = scale * v, which keeps the shrink step O(1) for sparse inputs.
    let mut v = vec![0.0; dim];
    let mut vb = 0.0;
    let mut scale = 1.0;
    let mut sq_norm_v = 0.0;
    let mut rng = seeded(hyper.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut t = 0usize;
    let radius_sq = 1.0 / hyper.lambda;

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (hyper.lambda * t as f64);
            let x = &features[i];
            let margin = y[i] * scale * (x.dot(&v) + vb);
            let shrink = 1.0 - eta * hyper.lambda;
            if shrink == 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                vb = 0.0;
                sq_norm_v = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * y[i] / scale;
                // Track |v|^2 incrementally: |v + s x|^2 = |v|^2 + 2 s v.x + s^2 |x|^2.
                sq_norm_v += 2.0 * step * (x.dot(&v) + vb) + step * step * (x.squared_norm() + 1.0);
                x.add_scaled_to(&mut v, step);
                vb += step;
            }
            if hyper.project {
                let norm_sq = scale * scale * sq_norm_v;
                if norm_sq > radius_sq {
                    scale *= (radius_sq / norm_sq).sqrt();
                }
            }
            if scale < 1e-6 {
                v.iter_mut().for_each(|w| *w *= scale);
                vb *= scale;
                sq_norm_v = v.iter().map(|w| w * w).sum::<f64>() + vb * vb;
                scale = 1.0;
            }
        }
    }
    let weights: Vec<f64> = v.iter().map(|w| w * scale).collect();
    let bias = vb * scale;
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Numerical("SVM weights diverged".into()));
    }
    Ok(SvmModel {
        weights,
        bias,
        classes,
        hyper: hyper.clone(),
    })
}

impl SvmModel {
    pub fn decision(&self, x: &FeatureVector) -> Result<f64> {
        if x.dim() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "feature dimension {} does not match the model's {}",
                x.dim(),
                self.weights.len()
            )));
        }
        x.validate()?;
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// Scores are `[-margin, margin]`; a zero margin goes to `classes[0]`.
    pub fn predict(&self, x: &FeatureVector) -> Result<Prediction> {
        let m = self.decision(x)?;
        let scores = vec![-m, m];
        Ok(Prediction {
            label: self.classes[argmax(&scores)].clone(),
            scores,
        })
    }

    /// `lambda/2 * (|w|^2 + b^2) + mean hinge loss`.
    pub fn objective(&self, features: &[FeatureVector], labels: &[ClassLabel]) -> Result<f64> {
        check_lengths(features.len(), labels.len())?;
        let reg = 0.5 * self.hyper.lambda * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let mut hinge = 0.0;
        for (x, l) in features.iter().zip(labels) {
            let y = if *l == self.classes[1] { 1.0 } else { -1.0 };
            hinge += (1.0 - y * self.decision(x)?).max(0.0);
        }
        Ok(reg + hinge / features.len() as f64)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(Error::ModelFormat("non-finite SVM parameter".into()));
        }
        Ok(())
    }
}
