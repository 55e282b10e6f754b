//! Two-class linear discriminant analysis with a ridge-regularized pooled
//! covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logistic::count_classes;
use super::ModelError;
use crate::dsp::Label;

/// Ridge added to the pooled covariance diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shrinkage {
    /// `factor * mean(diag(S))`.
    RelativeToMeanDiagonal(f64),
    Absolute(f64),
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::RelativeToMeanDiagonal(1e-3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub mean_pos: Vec<f64>,
    pub mean_neg: Vec<f64>,
    /// Inverse of the regularized pooled covariance, row-major.
    pub precision: Vec<f64>,
    pub log_prior_pos: f64,
    pub log_prior_neg: f64,
    #[serde(skip)]
    direction: Vec<f64>,
    #[serde(skip)]
    offset: f64,
}

impl LdaModel {
    pub fn from_parts(
        mean_pos: Vec<f64>,
        mean_neg: Vec<f64>,
        precision: Vec<f64>,
        log_prior_pos: f64,
        log_prior_neg: f64,
    ) -> Result<Self, ModelError> {
        let d = mean_pos.len();
        if mean_neg.len() != d || precision.len() != d * d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: mean_neg.len(),
            });
        }
        let p = DMatrix::from_row_slice(d, d, &precision);
        let mu_p = DVector::from_column_slice(&mean_pos);
        let mu_n = DVector::from_column_slice(&mean_neg);
        let w = &p * (&mu_p - &mu_n);
        let offset = -0.5 * w.dot(&(&mu_p + &mu_n)) + log_prior_pos - log_prior_neg;
        Ok(Self {
            mean_pos,
            mean_neg,
            precision,
            log_prior_pos,
            log_prior_neg,
            direction: w.iter().copied().collect(),
            offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_pos.len()
    }

    /// Discriminant direction `Σ⁻¹(μ₊ − μ₋)`.
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }
}

/// Class-posterior log-ratio `ln p(+|x) − ln p(−|x)` under the shared
/// Gaussian model.
pub fn lda_score(model: &LdaModel, feature: &[f64]) -> Result<f64, ModelError> {
    if feature.len() != model.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.dim(),
            got: feature.len(),
        });
    }
    Ok(model.direction.iter().zip(feature).map(|(w, x)| w * x).sum::<f64>() + model.offset)
}

pub fn train_lda(features: &DMatrix<f64>, labels: &[Label], shrinkage: Shrinkage) -> Result<LdaModel, ModelError> {
    if features.nrows() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    let (n_pos, n_neg) = count_classes(labels)?;
    let d = features.ncols();
    let mut mean_pos = DVector::zeros(d);
    let mut mean_neg = DVector::zeros(d);
    for (row, label) in features.row_iter().zip(labels) {
        if label.is_positive() {
            mean_pos += row.transpose();
        } else {
            mean_neg += row.transpose();
        }
    }
    mean_pos /= n_pos as f64;
    mean_neg /= n_neg as f64;

    let mut centered = features.clone();
    for (mut row, label) in centered.row_iter_mut().zip(labels) {
        let mu = if label.is_positive() { &mean_pos } else { &mean_neg };
        row -= mu.transpose();
    }
    let dof = (labels.len().saturating_sub(2)).max(1) as f64;
    let mut cov = centered.tr_mul(&centered) / dof;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Numerical("non-finite pooled covariance".into()));
    }
    let ridge = match shrinkage {
        Shrinkage::RelativeToMeanDiagonal(f) => f * cov.trace() / d as f64,
        Shrinkage::Absolute(r) => r,
    };
    // an all-zero covariance still needs a positive ridge
    let ridge = if ridge > 0.0 { ridge } else { 1e-12 };
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| ModelError::Numerical("regularized covariance is not positive definite".into()))?;
    let precision = chol.inverse();
    let n = labels.len() as f64;
    LdaModel::from_parts(
        mean_pos.iter().copied().collect(),
        mean_neg.iter().copied().collect(),
        precision.transpose().iter().copied().collect(),
        (n_pos as f64 / n).ln(),
        (n_neg as f64 / n).ln(),
    )
}
