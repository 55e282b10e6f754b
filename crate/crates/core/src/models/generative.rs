//! Compress-then-KDE generative pipeline:
//! z-score, flatten, PCA, one-dimensional classifier score, per-class KDE.

use serde::{Deserialize, Serialize};

use super::kde::{fit_kde, kde_log_eval, KdeDensity};
use super::lda::{lda_score, train_lda, LdaModel};
use super::logistic::{train_logistic, LogisticConfig, LogisticModel, TrainTrace};
use super::pca::{fit_pca, project, project_rows, PcaProjection};
use super::{feature_matrix, labels_of, EvidenceModel, ModelError, ModelHyperparams};
use crate::bayes::{EvidenceMode, LikelihoodPair};
use crate::dsp::{fit_zscore, zscore_flat, TrialEpoch, ZScoreStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorerKind {
    Logistic,
    Lda,
}

/// Stage producing the one-dimensional log-ratio score.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Logistic(LogisticModel),
    Lda(LdaModel),
}

impl Scorer {
    pub fn kind(&self) -> ScorerKind {
        match self {
            Scorer::Logistic(_) => ScorerKind::Logistic,
            Scorer::Lda(_) => ScorerKind::Lda,
        }
    }

    pub fn score(&self, reduced: &[f64]) -> Result<f64, ModelError> {
        match self {
            Scorer::Logistic(m) => m.logit(reduced),
            Scorer::Lda(m) => lda_score(m, reduced),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Scorer::Logistic(m) => m.dim() + 1,
            Scorer::Lda(m) => 2 * m.dim() + m.dim() * m.dim() + 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerativePipeline {
    pub zscore: ZScoreStats,
    pub pca: PcaProjection,
    pub scorer: Scorer,
    pub kde_pos: KdeDensity,
    pub kde_neg: KdeDensity,
    /// Fraction of positive labels in the training set.
    pub train_positive_fraction: f64,
}

impl GenerativePipeline {
    /// One-dimensional score of an epoch.
    pub fn score(&self, epoch: &TrialEpoch) -> Result<f64, ModelError> {
        let flat = zscore_flat(&self.zscore, epoch)?;
        self.scorer.score(&project(&self.pca, &flat)?)
    }
}

/// Fit every stage on `train`. The scorer's class weighting comes from
/// `hyper.generative_scorer_weights`.
pub fn build_generative(
    train: &[TrialEpoch],
    scorer_kind: ScorerKind,
    hyper: &ModelHyperparams,
) -> Result<(GenerativePipeline, Option<TrainTrace>), ModelError> {
    let zscore = fit_zscore(train)?;
    let x = feature_matrix(&zscore, train)?;
    let labels = labels_of(train);
    let pca = fit_pca(&x, hyper.pca_fraction)?;
    let reduced = project_rows(&pca, &x)?;

    let (scorer, trace) = match scorer_kind {
        ScorerKind::Logistic => {
            let config = LogisticConfig {
                class_weights: hyper.generative_scorer_weights,
                ..hyper.logistic
            };
            let (m, trace) = train_logistic(&reduced, &labels, &config)?;
            (Scorer::Logistic(m), Some(trace))
        }
        ScorerKind::Lda => (Scorer::Lda(train_lda(&reduced, &labels, hyper.lda_shrinkage)?), None),
    };

    let mut pos_scores = Vec::new();
    let mut neg_scores = Vec::new();
    for (row, label) in reduced.row_iter().zip(&labels) {
        let r: Vec<f64> = row.iter().copied().collect();
        let s = scorer.score(&r)?;
        if label.is_positive() {
            pos_scores.push(s);
        } else {
            neg_scores.push(s);
        }
    }
    let n = labels.len() as f64;
    Ok((
        GenerativePipeline {
            zscore,
            pca,
            scorer,
            kde_pos: fit_kde(&pos_scores, hyper.kde_bandwidth)?,
            kde_neg: fit_kde(&neg_scores, hyper.kde_bandwidth)?,
            train_positive_fraction: pos_scores.len() as f64 / n,
        },
        trace,
    ))
}

/// Class-conditional densities `(p(score|+), p(score|-))` of an epoch.
pub fn generative_likelihoods(pipeline: &GenerativePipeline, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
    let s = pipeline.score(epoch)?;
    Ok(LikelihoodPair::generative_log(
        kde_log_eval(&pipeline.kde_pos, s),
        kde_log_eval(&pipeline.kde_neg, s),
    )?)
}

impl EvidenceModel for GenerativePipeline {
    fn mode(&self) -> EvidenceMode {
        EvidenceMode::Generative
    }

    fn likelihood(&self, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        generative_likelihoods(self, epoch)
    }

    fn parameter_count(&self) -> usize {
        let d = self.pca.input_dim;
        let r = self.pca.n_components;
        2 * self.zscore.mean.len() + d + d * r + self.scorer.parameter_count()
    }
}

/// Label prior used to turn class-conditional densities into `p(label|e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConversionPrior {
    /// Positive-label fraction of the training set.
    Empirical(f64),
    /// 50/50.
    Uniform,
}

impl ConversionPrior {
    pub fn p_pos(&self) -> f64 {
        match *self {
            ConversionPrior::Empirical(rho) => rho,
            ConversionPrior::Uniform => 0.5,
        }
    }
}

/// Bayes' rule: `p(+|e) = d+ p(+) / (d+ p(+) + d- p(-))`.
pub fn generative_to_discriminative(
    pair: &LikelihoodPair,
    prior: ConversionPrior,
) -> Result<LikelihoodPair, ModelError> {
    if pair.mode() != EvidenceMode::Generative {
        return Err(crate::bayes::BayesError::ModeMismatch {
            expected: EvidenceMode::Generative,
            got: pair.mode(),
        }
        .into());
    }
    let p = prior.p_pos();
    if !(p > 0.0 && p < 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "label prior must be in (0, 1), got {p}"
        )));
    }
    let a = pair.log_pos() + p.ln();
    let b = pair.log_neg() + (1.0 - p).ln();
    Ok(LikelihoodPair::from_logit(a - b)?)
}
