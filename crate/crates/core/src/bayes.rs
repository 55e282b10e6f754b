//! Recursive Bayesian posterior over the alphabet.
//!
//! Each presented symbol contributes one multiplicative factor: the queried
//! symbol is scaled by the positive-label term and every other symbol by the
//! negative-label term, then the vector is renormalized. All arithmetic is in
//! the natural-log domain so that long query sequences cannot underflow.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `pos + neg = 1` for discriminative evidence.
pub const DISCRIMINATIVE_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BayesError {
    #[error("alphabet needs at least 2 symbols, got {0}")]
    AlphabetTooSmall(usize),
    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(String),
    #[error("prior has length {got}, alphabet size is {expected}")]
    PriorLength { expected: usize, got: usize },
    #[error("prior entries must be finite and non-negative with positive sum")]
    InvalidPrior,
    #[error("label prior p(+) must lie strictly inside (0, 1), got {0}")]
    InvalidLabelPrior(f64),
    #[error("invalid likelihood pair: {0}")]
    InvalidLikelihood(String),
    #[error("query index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("expected {expected} evidence, got {got}")]
    ModeMismatch { expected: EvidenceMode, got: EvidenceMode },
    #[error("mixed evidence modes in a single query")]
    MixedModes,
    #[error("degenerate evidence: update would remove all posterior mass")]
    DegenerateEvidence,
}

/// Ordered set of distinct symbols the user can type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self, BayesError> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.len() < 2 {
            return Err(BayesError::AlphabetTooSmall(symbols.len()));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(BayesError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Self { symbols })
    }

    /// Alphabet of `size` symbols named by their index.
    pub fn with_size(size: usize) -> Result<Self, BayesError> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    /// The 28-symbol RSVP alphabet: `A`..`Z`, space and backspace.
    pub fn latin28() -> Self {
        let mut symbols: Vec<String> = ('A'..='Z').map(String::from).collect();
        symbols.push("_".into());
        symbols.push("<".into());
        Self { symbols }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Prior probability that a presented symbol carries the positive label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelPrior {
    p_pos: f64,
}

impl LabelPrior {
    pub fn new(p_pos: f64) -> Result<Self, BayesError> {
        if !(p_pos > 0.0 && p_pos < 1.0) {
            return Err(BayesError::InvalidLabelPrior(p_pos));
        }
        Ok(Self { p_pos })
    }

    /// `p(+) = 1/A`: the chance that a queried symbol is the target under a
    /// uniform symbol prior.
    pub fn uniform_over(alphabet_size: usize) -> Result<Self, BayesError> {
        Self::new(1.0 / alphabet_size as f64)
    }

    pub fn p_pos(&self) -> f64 {
        self.p_pos
    }

    pub fn p_neg(&self) -> f64 {
        1.0 - self.p_pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvidenceMode {
    /// `p(label | evidence)`
    Discriminative,
    /// `p(evidence | label)`
    Generative,
}

impl fmt::Display for EvidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvidenceMode::Discriminative => f.write_str("discriminative"),
            EvidenceMode::Generative => f.write_str("generative"),
        }
    }
}

/// Evidence for one presented symbol, held as natural logs of the
/// positive- and negative-label terms.
///
/// In discriminative mode the terms are `p(+|e)` and `p(-|e)`; in generative
/// mode they are the class-conditional densities `p(e|+)` and `p(e|-)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodPair {
    mode: EvidenceMode,
    log_pos: f64,
    log_neg: f64,
}

impl LikelihoodPair {
    pub fn discriminative(pos: f64, neg: f64) -> Result<Self, BayesError> {
        check_nonneg(pos, neg)?;
        if (pos + neg - 1.0).abs() > DISCRIMINATIVE_SUM_TOL {
            return Err(BayesError::InvalidLikelihood(format!(
                "discriminative terms must sum to 1, got {pos} + {neg}"
            )));
        }
        Ok(Self {
            mode: EvidenceMode::Discriminative,
            log_pos: pos.ln(),
            log_neg: neg.ln(),
        })
    }

    /// Discriminative pair from a class log-odds `ln p(+|e) - ln p(-|e)`.
    /// Neither term saturates to zero for finite input.
    pub fn from_logit(logit: f64) -> Result<Self, BayesError> {
        if logit.is_nan() {
            return Err(BayesError::InvalidLikelihood("NaN logit".into()));
        }
        Ok(Self {
            mode: EvidenceMode::Discriminative,
            log_pos: -softplus(-logit),
            log_neg: -softplus(logit),
        })
    }

    pub fn generative(pos: f64, neg: f64) -> Result<Self, BayesError> {
        check_nonneg(pos, neg)?;
        Ok(Self {
            mode: EvidenceMode::Generative,
            log_pos: pos.ln(),
            log_neg: neg.ln(),
        })
    }

    /// Generative pair from log-densities.
    pub fn generative_log(log_pos: f64, log_neg: f64) -> Result<Self, BayesError> {
        if log_pos.is_nan() || log_neg.is_nan() || log_pos == f64::INFINITY || log_neg == f64::INFINITY {
            return Err(BayesError::InvalidLikelihood(format!(
                "log-densities must be finite or -inf, got ({log_pos}, {log_neg})"
            )));
        }
        if log_pos == f64::NEG_INFINITY && log_neg == f64::NEG_INFINITY {
            return Err(BayesError::InvalidLikelihood("both densities are zero".into()));
        }
        Ok(Self {
            mode: EvidenceMode::Generative,
            log_pos,
            log_neg,
        })
    }

    pub fn mode(&self) -> EvidenceMode {
        self.mode
    }

    pub fn pos(&self) -> f64 {
        self.log_pos.exp()
    }

    pub fn neg(&self) -> f64 {
        self.log_neg.exp()
    }

    pub fn log_pos(&self) -> f64 {
        self.log_pos
    }

    pub fn log_neg(&self) -> f64 {
        self.log_neg
    }
}

fn check_nonneg(pos: f64, neg: f64) -> Result<(), BayesError> {
    if !(pos.is_finite() && neg.is_finite()) || pos < 0.0 || neg < 0.0 {
        return Err(BayesError::InvalidLikelihood(format!(
            "terms must be finite and non-negative, got ({pos}, {neg})"
        )));
    }
    if pos + neg <= 0.0 {
        return Err(BayesError::InvalidLikelihood("both terms are zero".into()));
    }
    Ok(())
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One presented symbol together with the evidence it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryEvent {
    pub queried_index: usize,
    pub likelihood: LikelihoodPair,
}

impl QueryEvent {
    pub fn new(queried_index: usize, likelihood: LikelihoodPair) -> Self {
        Self {
            queried_index,
            likelihood,
        }
    }
}

/// Normalized posterior over the alphabet, stored as natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    log_probs: Vec<f64>,
    step: u64,
}

impl PosteriorState {
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.log_probs[index].exp()
    }

    /// Number of evidence events applied since initialization.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Index of the most probable symbol; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_probs.iter().enumerate().skip(1) {
            if l > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn update_discriminative(&self, event: &QueryEvent, label_prior: LabelPrior) -> Result<Self, BayesError> {
        update_discriminative(self, event, label_prior)
    }

    pub fn update_generative(&self, event: &QueryEvent) -> Result<Self, BayesError> {
        update_generative(self, event)
    }
}

/// Uniform posterior, or the normalized `prior` when one is given.
pub fn init_posterior(alphabet: &Alphabet, prior: Option<&[f64]>) -> Result<PosteriorState, BayesError> {
    let a = alphabet.size();
    let log_probs = match prior {
        None => vec![-(a as f64).ln(); a],
        Some(p) => {
            if p.len() != a {
                return Err(BayesError::PriorLength {
                    expected: a,
                    got: p.len(),
                });
            }
            if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(BayesError::InvalidPrior);
            }
            let total: f64 = p.iter().sum();
            if total <= 0.0 {
                return Err(BayesError::InvalidPrior);
            }
            p.iter().map(|&v| (v / total).ln()).collect()
        }
    };
    Ok(PosteriorState { log_probs, step: 0 })
}

/// Multiply the queried symbol by `p(+|e)/p(+)` and every other symbol by
/// `p(-|e)/p(-)`, then renormalize.
pub fn update_discriminative(
    state: &PosteriorState,
    event: &QueryEvent,
    label_prior: LabelPrior,
) -> Result<PosteriorState, BayesError> {
    expect_mode(event, EvidenceMode::Discriminative)?;
    let lk = &event.likelihood;
    apply_factors(
        state,
        event.queried_index,
        lk.log_pos - label_prior.p_pos().ln(),
        lk.log_neg - label_prior.p_neg().ln(),
    )
}

/// Multiply the queried symbol by `p(e|+)` and every other symbol by
/// `p(e|-)`, then renormalize.
pub fn update_generative(state: &PosteriorState, event: &QueryEvent) -> Result<PosteriorState, BayesError> {
    expect_mode(event, EvidenceMode::Generative)?;
    apply_factors(
        state,
        event.queried_index,
        event.likelihood.log_pos,
        event.likelihood.log_neg,
    )
}

/// Apply every event of one query in sequence. `label_prior` is only read
/// for discriminative evidence.
pub fn apply_query(
    state: &PosteriorState,
    events: &[QueryEvent],
    label_prior: LabelPrior,
) -> Result<PosteriorState, BayesError> {
    let Some(first) = events.first() else {
        return Ok(state.clone());
    };
    let mode = first.likelihood.mode;
    if events.iter().any(|e| e.likelihood.mode != mode) {
        return Err(BayesError::MixedModes);
    }
    let mut current = state.clone();
    for event in events {
        current = match mode {
            EvidenceMode::Discriminative => update_discriminative(&current, event, label_prior)?,
            EvidenceMode::Generative => update_generative(&current, event)?,
        };
    }
    Ok(current)
}

/// The argmax symbol if its probability reaches `threshold`.
pub fn decide(state: &PosteriorState, threshold: f64) -> Option<usize> {
    let best = state.argmax();
    (state.prob(best) >= threshold).then_some(best)
}

fn expect_mode(event: &QueryEvent, expected: EvidenceMode) -> Result<(), BayesError> {
    let got = event.likelihood.mode;
    if got != expected {
        return Err(BayesError::ModeMismatch { expected, got });
    }
    Ok(())
}

fn apply_factors(
    state: &PosteriorState,
    queried: usize,
    log_factor_queried: f64,
    log_factor_other: f64,
) -> Result<PosteriorState, BayesError> {
    let size = state.log_probs.len();
    if queried >= size {
        return Err(BayesError::IndexOutOfRange { index: queried, size });
    }
    let unnormalized: Vec<f64> = state
        .log_probs
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let f = if i == queried {
                log_factor_queried
            } else {
                log_factor_other
            };
            // -inf mass stays -inf regardless of the factor
            if l == f64::NEG_INFINITY || f == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                l + f
            }
        })
        .collect();
    let log_norm = log_sum_exp(&unnormalized);
    if !log_norm.is_finite() {
        return Err(BayesError::DegenerateEvidence);
    }
    Ok(PosteriorState {
        log_probs: unnormalized.iter().map(|&l| l - log_norm).collect(),
        step: state.step + 1,
    })
}

/// Max-shifted `ln Σ exp(x_i)`; `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
