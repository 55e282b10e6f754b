//! Evidence models mapping a trial epoch to a [`LikelihoodPair`].
//!
//! The discriminative path is per-channel z-scoring followed by a weighted
//! logistic regression and yields `p(label | epoch)`. The generative path
//! compresses each epoch to a single classifier score and yields per-class
//! kernel density estimates `p(score | label)`.

pub mod generative;
pub mod kde;
pub mod lda;
pub mod logistic;
pub mod pca;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{BayesError, EvidenceMode, LabelPrior, LikelihoodPair};
use crate::dsp::{fit_zscore, zscore_flat, DspError, Label, TrialEpoch, ZScoreStats};

pub use generative::{
    build_generative, generative_likelihoods, generative_to_discriminative, ConversionPrior, GenerativePipeline,
    Scorer, ScorerKind,
};
pub use kde::{fit_kde, kde_eval, kde_log_eval, KdeDensity};
pub use lda::{lda_score, train_lda, LdaModel, Shrinkage};
pub use logistic::{train_logistic, weighted_loss_and_grad, ClassWeights, LogisticConfig, LogisticModel, TrainTrace};
pub use pca::{fit_pca, project, PcaProjection};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unknown model kind {0:?} (expected logreg, gen-logr or gen-lda)")]
    UnknownKind(String),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Anything that turns an epoch into evidence for the posterior update.
pub trait EvidenceModel: Send + Sync {
    fn mode(&self) -> EvidenceMode;

    fn likelihood(&self, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError>;

    /// Single-trial label decision. Generative evidence is first converted
    /// with `conversion`; ties go to the negative class.
    fn classify(&self, epoch: &TrialEpoch, conversion: ConversionPrior) -> Result<Label, ModelError> {
        let mut pair = self.likelihood(epoch)?;
        if pair.mode() == EvidenceMode::Generative {
            pair = generative_to_discriminative(&pair, conversion)?;
        }
        Ok(Label::from_bool(pair.log_pos() > pair.log_neg()))
    }

    /// Number of learned real-valued parameters.
    fn parameter_count(&self) -> usize;
}

/// Flattened z-scored epochs as an `n x d` matrix.
pub fn feature_matrix(stats: &ZScoreStats, epochs: &[TrialEpoch]) -> Result<DMatrix<f64>, ModelError> {
    let first = epochs.first().ok_or(ModelError::EmptyInput("epochs"))?;
    let d = first.channels * first.samples;
    let mut rows = Vec::with_capacity(epochs.len() * d);
    for e in epochs {
        let f = zscore_flat(stats, e)?;
        if f.len() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: f.len(),
            });
        }
        rows.extend(f);
    }
    Ok(DMatrix::from_row_slice(epochs.len(), d, &rows))
}

pub fn labels_of(epochs: &[TrialEpoch]) -> Vec<Label> {
    epochs.iter().map(|e| e.label).collect()
}

/// Per-channel z-scoring followed by logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativeLogistic {
    pub zscore: ZScoreStats,
    pub model: LogisticModel,
}

impl DiscriminativeLogistic {
    pub fn train(epochs: &[TrialEpoch], config: &LogisticConfig) -> Result<(Self, TrainTrace), ModelError> {
        let zscore = fit_zscore(epochs)?;
        let x = feature_matrix(&zscore, epochs)?;
        let (model, trace) = train_logistic(&x, &labels_of(epochs), config)?;
        Ok((Self { zscore, model }, trace))
    }
}

impl EvidenceModel for DiscriminativeLogistic {
    fn mode(&self) -> EvidenceMode {
        EvidenceMode::Discriminative
    }

    fn likelihood(&self, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        self.model.predict_proba(&zscore_flat(&self.zscore, epoch)?)
    }

    fn parameter_count(&self) -> usize {
        self.model.dim() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "logreg")]
    LogReg,
    #[serde(rename = "gen-logr")]
    GenLogR,
    #[serde(rename = "gen-lda")]
    GenLda,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::LogReg, ModelKind::GenLogR, ModelKind::GenLda];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::GenLogR => "gen-logr",
            ModelKind::GenLda => "gen-lda",
        }
    }

    pub fn mode(self) -> EvidenceMode {
        match self {
            ModelKind::LogReg => EvidenceMode::Discriminative,
            _ => EvidenceMode::Generative,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

/// Hyperparameters shared by every trainable model kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelHyperparams {
    pub logistic: LogisticConfig,
    pub pca_fraction: f64,
    pub kde_bandwidth: f64,
    pub lda_shrinkage: Shrinkage,
    /// Class weighting of the logistic scorer inside the generative pipeline.
    pub generative_scorer_weights: ClassWeights,
}

impl Default for ModelHyperparams {
    fn default() -> Self {
        Self {
            logistic: LogisticConfig::default(),
            pca_fraction: 0.8,
            kde_bandwidth: 1.0,
            lda_shrinkage: Shrinkage::default(),
            generative_scorer_weights: ClassWeights::Uniform,
        }
    }
}

/// A trained, serializable evidence model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Discriminative(DiscriminativeLogistic),
    Generative(GenerativePipeline),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Discriminative(_) => ModelKind::LogReg,
            TrainedModel::Generative(g) => match g.scorer.kind() {
                ScorerKind::Logistic => ModelKind::GenLogR,
                ScorerKind::Lda => ModelKind::GenLda,
            },
        }
    }
}

/// Train `kind` on `epochs`. The returned trace is only present for kinds
/// that run gradient descent.
pub fn train_model(
    kind: ModelKind,
    epochs: &[TrialEpoch],
    hyper: &ModelHyperparams,
) -> Result<(TrainedModel, Option<TrainTrace>), ModelError> {
    Ok(match kind {
        ModelKind::LogReg => {
            let (m, trace) = DiscriminativeLogistic::train(epochs, &hyper.logistic)?;
            (TrainedModel::Discriminative(m), Some(trace))
        }
        ModelKind::GenLogR => {
            let (g, trace) = build_generative(epochs, ScorerKind::Logistic, hyper)?;
            (TrainedModel::Generative(g), trace)
        }
        ModelKind::GenLda => {
            let (g, trace) = build_generative(epochs, ScorerKind::Lda, hyper)?;
            (TrainedModel::Generative(g), trace)
        }
    })
}

impl EvidenceModel for TrainedModel {
    fn mode(&self) -> EvidenceMode {
        match self {
            TrainedModel::Discriminative(m) => m.mode(),
            TrainedModel::Generative(g) => g.mode(),
        }
    }

    fn likelihood(&self, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        match self {
            TrainedModel::Discriminative(m) => m.likelihood(epoch),
            TrainedModel::Generative(g) => g.likelihood(epoch),
        }
    }

    fn parameter_count(&self) -> usize {
        match self {
            TrainedModel::Discriminative(m) => m.parameter_count(),
            TrainedModel::Generative(g) => g.parameter_count(),
        }
    }
}

/// Reads the ground-truth label: `p(+|e) = 1` on positives, `0` on negatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModel;

impl EvidenceModel for OracleModel {
    fn mode(&self) -> EvidenceMode {
        EvidenceMode::Discriminative
    }

    fn likelihood(&self, epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        let pos = if epoch.label.is_positive() { 1.0 } else { 0.0 };
        Ok(LikelihoodPair::discriminative(pos, 1.0 - pos)?)
    }

    fn parameter_count(&self) -> usize {
        0
    }
}

/// Always reports `p(+|e) = p(+)`, which leaves any posterior unchanged.
#[derive(Debug, Clone, Copy)]
pub struct UninformativeModel {
    pub label_prior: LabelPrior,
}

impl EvidenceModel for UninformativeModel {
    fn mode(&self) -> EvidenceMode {
        EvidenceMode::Discriminative
    }

    fn likelihood(&self, _epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        Ok(LikelihoodPair::discriminative(
            self.label_prior.p_pos(),
            self.label_prior.p_neg(),
        )?)
    }

    fn parameter_count(&self) -> usize {
        0
    }
}

/// Control that predicts one fixed class for every trial. Its evidence
/// carries no information about the epoch, so the typing update is the
/// same as for [`UninformativeModel`].
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassModel {
    pub class: Label,
    pub label_prior: LabelPrior,
}

impl EvidenceModel for ConstantClassModel {
    fn mode(&self) -> EvidenceMode {
        EvidenceMode::Discriminative
    }

    fn likelihood(&self, _epoch: &TrialEpoch) -> Result<LikelihoodPair, ModelError> {
        Ok(LikelihoodPair::discriminative(
            self.label_prior.p_pos(),
            self.label_prior.p_neg(),
        )?)
    }

    fn classify(&self, _epoch: &TrialEpoch, _conversion: ConversionPrior) -> Result<Label, ModelError> {
        Ok(self.class)
    }

    fn parameter_count(&self) -> usize {
        0
    }
}
