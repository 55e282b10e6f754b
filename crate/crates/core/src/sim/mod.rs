//! Simulated RSVP typing and the metrics used to score it.
//!
//! Each attempt draws a uniform target symbol, starts from a uniform
//! posterior and runs up to `max_rounds` rounds of: pick `query_size`
//! symbols, draw one evidence epoch per presented symbol from the positive
//! pool (symbol is the target) or the negative pool (otherwise), update the
//! posterior, and check whether some symbol crossed the decision threshold.

pub mod eval;
pub mod metrics;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{
    apply_query, decide, init_posterior, Alphabet, BayesError, LabelPrior, LikelihoodPair, PosteriorState, QueryEvent,
};
use crate::dsp::TrialEpoch;
use crate::models::{EvidenceModel, ModelError};
use crate::rng::derive_seed;

pub use eval::{evaluate_splits, EvaluationReport, MetricSummary, SplitMetrics};
pub use metrics::{balanced_accuracy, itr, reported_itr};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid typing config: {0}")]
    InvalidConfig(String),
    #[error("query size {k} exceeds alphabet size {a} for sampling without repeats")]
    QueryTooLarge { k: usize, a: usize },
    #[error("evidence pool for {0} trials is empty")]
    EmptyPool(&'static str),
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("ground truth contains a single class")]
    SingleClassTruth,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryStrategy {
    /// `K` independent draws from the posterior; repeats allowed.
    SampleWithReplacement,
    /// `K` distinct symbols, each drawn from the renormalized remainder.
    SampleWithoutReplacement,
    /// The `K` most probable symbols, ties by lowest index.
    TopK,
}

impl QueryStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryStrategy::SampleWithReplacement => "with-replacement",
            QueryStrategy::SampleWithoutReplacement => "without-replacement",
            QueryStrategy::TopK => "top-k",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            QueryStrategy::SampleWithReplacement,
            QueryStrategy::SampleWithoutReplacement,
            QueryStrategy::TopK,
        ]
        .into_iter()
        .find(|q| q.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypingConfig {
    /// Attempts `T`.
    pub attempts: usize,
    /// Maximum query rounds per attempt `N`.
    pub max_rounds: usize,
    /// Symbols per query `K`.
    pub query_size: usize,
    pub alphabet: Alphabet,
    /// Decision threshold `δ`.
    pub threshold: f64,
    pub label_prior: LabelPrior,
    pub strategy: QueryStrategy,
    /// End an attempt as soon as any symbol crosses the threshold. When
    /// false only a correct decision ends it early.
    pub stop_on_wrong: bool,
    pub record_traces: bool,
    pub seed: u64,
}

impl Default for TypingConfig {
    fn default() -> Self {
        Self {
            attempts: 1000,
            max_rounds: 10,
            query_size: 10,
            alphabet: Alphabet::latin28(),
            threshold: 0.9,
            label_prior: LabelPrior::uniform_over(28).expect("1/28 is a valid label prior"),
            strategy: QueryStrategy::SampleWithReplacement,
            stop_on_wrong: true,
            record_traces: true,
            seed: 0,
        }
    }
}

impl TypingConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.attempts == 0 || self.max_rounds == 0 || self.query_size == 0 {
            return Err(SimError::InvalidConfig(
                "attempts, max_rounds and query_size must be at least 1".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(SimError::InvalidConfig(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        let a = self.alphabet.size();
        if self.strategy != QueryStrategy::SampleWithReplacement && self.query_size > a {
            return Err(SimError::QueryTooLarge { k: self.query_size, a });
        }
        Ok(())
    }
}

/// Held-out epochs the simulator draws evidence from.
#[derive(Debug, Clone, Default)]
pub struct EvidencePools {
    pub positives: Vec<TrialEpoch>,
    pub negatives: Vec<TrialEpoch>,
}

impl EvidencePools {
    pub fn from_epochs(epochs: impl IntoIterator<Item = TrialEpoch>) -> Self {
        let (positives, negatives) = epochs.into_iter().partition(|e| e.label.is_positive());
        Self { positives, negatives }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Wrong,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptTrace {
    pub target: usize,
    /// Queried symbols per round.
    pub queries: Vec<Vec<usize>>,
    /// Posterior probabilities after each round.
    pub posteriors: Vec<Vec<f64>>,
    pub outcome: Outcome,
    /// Symbol that crossed the threshold, if any.
    pub decided: Option<usize>,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypingResult {
    pub correct: usize,
    pub wrong: usize,
    pub timeout: usize,
    pub attempts: Vec<AttemptTrace>,
    /// `P = C / T`.
    pub accuracy: f64,
    /// ITR in bits per attempted symbol; zero when `P < 1/A`.
    pub itr_bits_per_symbol: f64,
    pub below_chance: bool,
}

/// Pick `k` symbols to present next.
pub fn select_query<R: Rng + ?Sized>(
    posterior: &PosteriorState,
    k: usize,
    strategy: QueryStrategy,
    rng: &mut R,
) -> Result<Vec<usize>, SimError> {
    let probs = posterior.probs();
    let a = probs.len();
    match strategy {
        QueryStrategy::SampleWithReplacement => {
            let dist = WeightedIndex::new(&probs)
                .map_err(|e| SimError::InvalidConfig(format!("posterior cannot be sampled: {e}")))?;
            Ok((0..k).map(|_| rng.sample(&dist)).collect())
        }
        QueryStrategy::SampleWithoutReplacement => {
            if k > a {
                return Err(SimError::QueryTooLarge { k, a });
            }
            let mut weights = probs;
            let mut picked = Vec::with_capacity(k);
            for _ in 0..k {
                let total: f64 = weights.iter().sum();
                let idx = if total > 0.0 {
                    let dist = WeightedIndex::new(&weights)
                        .map_err(|e| SimError::InvalidConfig(format!("posterior cannot be sampled: {e}")))?;
                    rng.sample(&dist)
                } else {
                    // remaining symbols all have zero mass: uniform over them
                    let remaining: Vec<usize> = (0..a).filter(|i| !picked.contains(i)).collect();
                    remaining[rng.random_range(0..remaining.len())]
                };
                weights[idx] = 0.0;
                picked.push(idx);
            }
            Ok(picked)
        }
        QueryStrategy::TopK => {
            if k > a {
                return Err(SimError::QueryTooLarge { k, a });
            }
            let mut order: Vec<usize> = (0..a).collect();
            let logs = posterior.log_probs();
            order.sort_by(|&i, &j| logs[j].total_cmp(&logs[i]).then(i.cmp(&j)));
            order.truncate(k);
            Ok(order)
        }
    }
}

/// Run `config.attempts` simulated typing attempts.
///
/// Attempts use independent generators derived from `config.seed` and run
/// in parallel; results are identical to sequential execution.
pub fn run_typing(
    model: &dyn EvidenceModel,
    pools: &EvidencePools,
    config: &TypingConfig,
) -> Result<TypingResult, SimError> {
    config.validate()?;
    if pools.positives.is_empty() {
        return Err(SimError::EmptyPool("positive"));
    }
    if pools.negatives.is_empty() {
        return Err(SimError::EmptyPool("negative"));
    }
    // models are deterministic, so each pool epoch is scored once up front
    let pos_pairs = score_pool(model, &pools.positives)?;
    let neg_pairs = score_pool(model, &pools.negatives)?;

    let attempts = (0..config.attempts)
        .into_par_iter()
        .map(|t| run_attempt(&pos_pairs, &neg_pairs, config, derive_seed(config.seed, t as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let count = |o: Outcome| attempts.iter().filter(|a| a.outcome == o).count();
    let correct = count(Outcome::Correct);
    let wrong = count(Outcome::Wrong);
    let timeout = count(Outcome::Timeout);
    let a = config.alphabet.size();
    let accuracy = correct as f64 / config.attempts as f64;
    let below_chance = accuracy < 1.0 / a as f64;
    if below_chance {
        log::warn!("typing accuracy {accuracy:.4} is below chance 1/{a}; ITR reported as 0");
    }
    Ok(TypingResult {
        correct,
        wrong,
        timeout,
        attempts: if config.record_traces { attempts } else { Vec::new() },
        accuracy,
        itr_bits_per_symbol: reported_itr(a, accuracy),
        below_chance,
    })
}

fn score_pool(model: &dyn EvidenceModel, epochs: &[TrialEpoch]) -> Result<Vec<LikelihoodPair>, SimError> {
    let mode = model.mode();
    epochs
        .par_iter()
        .map(|e| {
            let pair = model.likelihood(e)?;
            if pair.mode() != mode {
                return Err(SimError::Bayes(BayesError::ModeMismatch {
                    expected: mode,
                    got: pair.mode(),
                }));
            }
            Ok(pair)
        })
        .collect()
}

fn run_attempt(
    pos_pairs: &[LikelihoodPair],
    neg_pairs: &[LikelihoodPair],
    config: &TypingConfig,
    seed: u64,
) -> Result<AttemptTrace, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = config.alphabet.size();
    let target = rng.random_range(0..a);
    let mut posterior = init_posterior(&config.alphabet, None)?;
    let mut queries = Vec::new();
    let mut posteriors = Vec::new();
    let mut outcome = Outcome::Timeout;
    let mut decided = None;
    let mut rounds = 0;

    for _ in 0..config.max_rounds {
        rounds += 1;
        let query = select_query(&posterior, config.query_size, config.strategy, &mut rng)?;
        let events: Vec<QueryEvent> = query
            .iter()
            .map(|&q| {
                let pool = if q == target { pos_pairs } else { neg_pairs };
                QueryEvent::new(q, pool[rng.random_range(0..pool.len())])
            })
            .collect();
        posterior = apply_query(&posterior, &events, config.label_prior)?;
        if config.record_traces {
            queries.push(query);
            posteriors.push(posterior.probs());
        }
        if let Some(symbol) = decide(&posterior, config.threshold) {
            decided = Some(symbol);
            if symbol == target {
                outcome = Outcome::Correct;
                break;
            }
            outcome = Outcome::Wrong;
            if config.stop_on_wrong {
                break;
            }
        }
    }
    Ok(AttemptTrace {
        target,
        queries,
        posteriors,
        outcome,
        decided,
        rounds,
    })
}
