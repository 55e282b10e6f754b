//! Repeated train/test evaluation: single-trial balanced accuracy plus
//! simulated-typing ITR per split, summarized as mean and population
//! standard deviation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{balanced_accuracy, run_typing, EvidencePools, SimError, TypingConfig};
use crate::bayes::EvidenceMode;
use crate::dsp::TrialEpoch;
use crate::models::{ConversionPrior, EvidenceModel, ModelError};
use crate::rng::derive_seed;
use crate::synth::{LabeledDataset, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: usize,
    /// Generative evidence converted with the training label fraction.
    pub balanced_accuracy_empirical: f64,
    /// Generative evidence converted with a 50/50 prior.
    pub balanced_accuracy_uniform: f64,
    pub typing_accuracy: f64,
    pub itr: f64,
    pub correct: usize,
    pub wrong: usize,
    pub timeout: usize,
    pub parameter_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.windows(2).all(|w| w[0] == w[1]) {
            return Self {
                mean: values.first().copied().unwrap_or(0.0),
                std: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvidenceMode,
    pub rows: Vec<SplitMetrics>,
    pub balanced_accuracy_empirical: MetricSummary,
    pub balanced_accuracy_uniform: MetricSummary,
    pub typing_accuracy: MetricSummary,
    pub itr: MetricSummary,
}

/// Train a fresh model on each split's training portion with `factory`,
/// then score it on the held-out portion.
///
/// Typing for split `s` uses seed `derive_seed(typing.seed, s)`. Splits are
/// evaluated in parallel; the report is independent of scheduling.
pub fn evaluate_splits<F>(
    factory: F,
    dataset: &LabeledDataset,
    splits: &[Split],
    typing: &TypingConfig,
) -> Result<EvaluationReport, SimError>
where
    F: Fn(&[TrialEpoch]) -> Result<Box<dyn EvidenceModel>, ModelError> + Sync,
{
    if splits.is_empty() {
        return Err(SimError::InvalidConfig("no splits to evaluate".into()));
    }
    typing.validate()?;
    let results: Vec<(EvidenceMode, SplitMetrics)> = splits
        .par_iter()
        .enumerate()
        .map(|(s, split)| {
            let train = dataset.select(&split.train);
            let test = dataset.select(&split.test);
            let model = factory(&train)?;
            let metrics = score_split(model.as_ref(), &train, test, typing, s)?;
            Ok((model.mode(), metrics))
        })
        .collect::<Result<_, SimError>>()?;

    let mode = results[0].0;
    Ok(EvaluationReport::from_rows(
        mode,
        results.into_iter().map(|(_, m)| m).collect(),
    ))
}

impl EvaluationReport {
    /// Summarize per-split rows.
    pub fn from_rows(mode: EvidenceMode, rows: Vec<SplitMetrics>) -> Self {
        let col = |f: fn(&SplitMetrics) -> f64| MetricSummary::of(&rows.iter().map(f).collect::<Vec<_>>());
        Self {
            mode,
            balanced_accuracy_empirical: col(|r| r.balanced_accuracy_empirical),
            balanced_accuracy_uniform: col(|r| r.balanced_accuracy_uniform),
            typing_accuracy: col(|r| r.typing_accuracy),
            itr: col(|r| r.itr),
            rows,
        }
    }
}

/// Metrics of an already-trained model on one held-out set.
pub fn score_split(
    model: &dyn EvidenceModel,
    train: &[TrialEpoch],
    test: Vec<TrialEpoch>,
    typing: &TypingConfig,
    split_index: usize,
) -> Result<SplitMetrics, SimError> {
    let rho = train.iter().filter(|e| e.label.is_positive()).count() as f64 / train.len().max(1) as f64;
    let truth: Vec<_> = test.iter().map(|e| e.label).collect();
    let predict = |prior: ConversionPrior| -> Result<Vec<_>, SimError> {
        test.par_iter()
            .map(|e| model.classify(e, prior).map_err(SimError::from))
            .collect()
    };
    let ba_emp = balanced_accuracy(&predict(ConversionPrior::Empirical(rho))?, &truth)?;
    let ba_unif = balanced_accuracy(&predict(ConversionPrior::Uniform)?, &truth)?;

    let config = TypingConfig {
        seed: derive_seed(typing.seed, split_index as u64),
        record_traces: false,
        ..typing.clone()
    };
    let result = run_typing(model, &EvidencePools::from_epochs(test), &config)?;
    Ok(SplitMetrics {
        split: split_index,
        balanced_accuracy_empirical: ba_emp,
        balanced_accuracy_uniform: ba_unif,
        typing_accuracy: result.accuracy,
        itr: result.itr_bits_per_symbol,
        correct: result.correct,
        wrong: result.wrong,
        timeout: result.timeout,
        parameter_count: model.parameter_count(),
    })
}
