//! Logistic regression trained by full-batch gradient descent on a
//! class-weighted cross-entropy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::bayes::{softplus, LikelihoodPair};
use crate::dsp::Label;

/// Per-class weights applied to the cross-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassWeights {
    /// `n / n_class`: each class contributes equally to the loss.
    InverseFraction,
    Uniform,
    Explicit {
        pos: f64,
        neg: f64,
    },
}

impl ClassWeights {
    /// `(w_pos, w_neg)` for the given labels.
    pub fn resolve(&self, labels: &[Label]) -> Result<(f64, f64), ModelError> {
        let (n_pos, n_neg) = count_classes(labels)?;
        let n = labels.len() as f64;
        Ok(match *self {
            ClassWeights::InverseFraction => (n / n_pos as f64, n / n_neg as f64),
            ClassWeights::Uniform => (1.0, 1.0),
            ClassWeights::Explicit { pos, neg } => (pos, neg),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub class_weights: ClassWeights,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iter: 10_000,
            tolerance: 1e-6,
            class_weights: ClassWeights::InverseFraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Loss values and stopping state of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, feature: &[f64]) -> Result<f64, ModelError> {
        if feature.len() != self.weights.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.weights.len(),
                got: feature.len(),
            });
        }
        Ok(self.weights.iter().zip(feature).map(|(w, x)| w * x).sum::<f64>() + self.bias)
    }

    /// `p(+|x) = sigmoid(w.x + b)` as a discriminative pair.
    pub fn predict_proba(&self, feature: &[f64]) -> Result<LikelihoodPair, ModelError> {
        Ok(LikelihoodPair::from_logit(self.logit(feature)?)?)
    }
}

/// Weighted mean cross-entropy `Σ w_i CE_i / Σ w_i` and its gradient with
/// respect to `(weights, bias)`; the bias gradient is the last entry.
pub fn weighted_loss_and_grad(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    sample_weights: &DVector<f64>,
    weights: &DVector<f64>,
    bias: f64,
) -> (f64, DVector<f64>) {
    let total_weight = sample_weights.sum();
    let logits = features * weights;
    let mut residual = DVector::zeros(targets.len());
    let mut loss = 0.0;
    for i in 0..targets.len() {
        let z = logits[i] + bias;
        let y = targets[i];
        // -[y ln s(z) + (1-y) ln(1-s(z))]
        loss += sample_weights[i] * (y * softplus(-z) + (1.0 - y) * softplus(z));
        residual[i] = sample_weights[i] * (sigmoid(z) - y) / total_weight;
    }
    let grad_w = features.tr_mul(&residual);
    let mut grad = DVector::zeros(weights.len() + 1);
    grad.rows_mut(0, weights.len()).copy_from(&grad_w);
    grad[weights.len()] = residual.sum();
    (loss / total_weight, grad)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fit by gradient descent from the zero vector. A step that raises the loss
/// is retried at half the learning rate.
pub fn train_logistic(
    features: &DMatrix<f64>,
    labels: &[Label],
    config: &LogisticConfig,
) -> Result<(LogisticModel, TrainTrace), ModelError> {
    if features.nrows() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    let (w_pos, w_neg) = config.class_weights.resolve(labels)?;
    let targets = DVector::from_iterator(labels.len(), labels.iter().map(|l| l.is_positive() as u8 as f64));
    let sample_weights = DVector::from_iterator(
        labels.len(),
        labels.iter().map(|l| if l.is_positive() { w_pos } else { w_neg }),
    );

    let d = features.ncols();
    let mut weights = DVector::zeros(d);
    let mut bias = 0.0;
    let mut lr = config.learning_rate;
    let (mut loss, mut grad) = weighted_loss_and_grad(features, &targets, &sample_weights, &weights, bias);
    let mut losses = vec![loss];
    let mut iterations = 0;
    let mut converged = grad.norm() < config.tolerance;

    while !converged && iterations < config.max_iter {
        let step_w = grad.rows(0, d) * lr;
        let cand_w = &weights - step_w;
        let cand_b = bias - lr * grad[d];
        let (cand_loss, cand_grad) = weighted_loss_and_grad(features, &targets, &sample_weights, &cand_w, cand_b);
        if !(cand_loss <= loss) {
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
            continue;
        }
        weights = cand_w;
        bias = cand_b;
        loss = cand_loss;
        grad = cand_grad;
        losses.push(loss);
        iterations += 1;
        converged = grad.norm() < config.tolerance;
    }
    if !loss.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelError::Numerical("logistic regression diverged".into()));
    }
    Ok((
        LogisticModel {
            weights: weights.iter().copied().collect(),
            bias,
        },
        TrainTrace {
            losses,
            iterations,
            final_grad_norm: grad.norm(),
            converged,
        },
    ))
}

pub(crate) fn count_classes(labels: &[Label]) -> Result<(usize, usize), ModelError> {
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClass);
    }
    Ok((n_pos, n_neg))
}
