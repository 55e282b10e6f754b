//! Synthetic ERP datasets with known ground truth.
//!
//! Every epoch is band-limited Gaussian background noise; positive epochs
//! additionally carry a Gaussian-windowed deflection on a subset of
//! channels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{design_bandpass, filter_cascade, window_samples, DspError, Label, TrialEpoch};
use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("dataset too small to stratify: {0}")]
    TooSmall(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub channels: usize,
    pub rate: f64,
    pub trial_ms: f64,
    pub erp_latency_ms: f64,
    /// Standard deviation of the Gaussian window, in milliseconds.
    pub erp_width_ms: f64,
    pub erp_amplitude: f64,
    /// Channels that carry the deflection.
    pub erp_channels: Vec<usize>,
    pub noise_std: f64,
    pub noise_band_low: f64,
    pub noise_band_high: f64,
    pub target_fraction: f64,
    pub n_epochs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            channels: 4,
            rate: 125.0,
            trial_ms: 500.0,
            erp_latency_ms: 300.0,
            erp_width_ms: 60.0,
            erp_amplitude: 0.28,
            erp_channels: vec![0, 1, 2, 3],
            noise_std: 1.0,
            noise_band_low: 1.0,
            noise_band_high: 20.0,
            target_fraction: 1.0 / 28.0,
            n_epochs: 5600,
            seed: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.channels == 0 || self.n_epochs == 0 {
            return bad("channels and n_epochs must be positive");
        }
        if !(self.rate > 0.0 && self.trial_ms > 0.0 && self.erp_latency_ms > 0.0 && self.erp_width_ms > 0.0) {
            return bad("rate, trial_ms, erp_latency_ms and erp_width_ms must be positive");
        }
        if !(self.erp_amplitude >= 0.0 && self.noise_std >= 0.0) {
            return bad("erp_amplitude and noise_std must be non-negative");
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return bad("target_fraction must lie in (0, 1)");
        }
        if self.erp_latency_ms + self.erp_width_ms > self.trial_ms {
            return bad("erp_latency_ms + erp_width_ms must fit inside trial_ms");
        }
        if window_samples(self.trial_ms, self.rate) == 0 {
            return bad("trial window holds no samples");
        }
        if self.erp_channels.iter().any(|&c| c >= self.channels) {
            return bad("erp_channels refers to a channel that does not exist");
        }
        Ok(())
    }

    pub fn samples_per_epoch(&self) -> usize {
        window_samples(self.trial_ms, self.rate)
    }

    /// Number of positive epochs: `round(target_fraction * n_epochs)`.
    pub fn positive_count(&self) -> usize {
        (self.target_fraction * self.n_epochs as f64).round() as usize
    }

    /// The injected deflection sampled on the epoch grid.
    pub fn erp_template(&self) -> Vec<f64> {
        (0..self.samples_per_epoch())
            .map(|i| {
                let t_ms = i as f64 * 1000.0 / self.rate;
                let u = (t_ms - self.erp_latency_ms) / self.erp_width_ms;
                self.erp_amplitude * (-0.5 * u * u).exp()
            })
            .collect()
    }
}

/// Train/test partition as indices into a dataset's epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub epochs: Vec<TrialEpoch>,
    pub rate: f64,
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn positive_count(&self) -> usize {
        self.epochs.iter().filter(|e| e.label.is_positive()).count()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<TrialEpoch> {
        indices.iter().map(|&i| self.epochs[i].clone()).collect()
    }
}

/// Burn-in before each epoch so the noise filter reaches steady state.
const BURN_IN_SECONDS: f64 = 2.0;

pub fn generate(config: &SynthConfig) -> Result<LabeledDataset, SynthError> {
    config.validate()?;
    let t = config.samples_per_epoch();
    let burn = (BURN_IN_SECONDS * config.rate).ceil() as usize;
    let nyquist = config.rate / 2.0;
    let high = config.noise_band_high.min(0.9 * nyquist);
    let band = design_bandpass(config.rate, config.noise_band_low, high, 2)?;

    // unit-variance scaling from the filter's impulse-response energy
    let mut impulse = vec![0.0; (60.0 * config.rate) as usize];
    impulse[0] = 1.0;
    let energy: f64 = filter_cascade(&band, &impulse).iter().map(|h| h * h).sum();
    let scale = config.noise_std / energy.sqrt();

    let mut labels = vec![Label::Negative; config.n_epochs];
    for l in labels.iter_mut().take(config.positive_count()) {
        *l = Label::Positive;
    }
    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX));
    labels.shuffle(&mut label_rng);

    let template = config.erp_template();
    let epochs = labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64));
            let mut data = Vec::with_capacity(config.channels * t);
            for c in 0..config.channels {
                let white: Vec<f64> = (0..burn + t).map(|_| StandardNormal.sample(&mut rng)).collect();
                let colored = filter_cascade(&band, &white);
                let erp = label.is_positive() && config.erp_channels.contains(&c);
                data.extend(
                    colored[burn..]
                        .iter()
                        .zip(&template)
                        .map(|(n, s)| n * scale + if erp { *s } else { 0.0 }),
                );
            }
            TrialEpoch::new(config.channels, t, data, label, i * t).map_err(SynthError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(LabeledDataset {
        epochs,
        rate: config.rate,
        splits: Vec::new(),
    })
}

/// `n_splits` stratified random train/test partitions.
///
/// Each split holds out `round(test_fraction * n)` epochs, of which
/// `round(test_fraction * n_pos)` are positive.
pub fn split(labels: &[Label], n_splits: usize, test_fraction: f64, seed: u64) -> Result<Vec<Split>, SynthError> {
    if labels.is_empty() {
        return Err(SynthError::TooSmall("dataset is empty".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SynthError::InvalidConfig(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    let n_test = (test_fraction * labels.len() as f64).round() as usize;
    let pos_test = (test_fraction * pos.len() as f64).round() as usize;
    let neg_test = n_test.saturating_sub(pos_test);
    if pos.len() < 2 || neg.len() < 2 {
        return Err(SynthError::TooSmall(format!(
            "need at least 2 epochs per class, have {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let pos_test = pos_test.clamp(1, pos.len() - 1);
    let neg_test = neg_test.clamp(1, neg.len() - 1);

    Ok((0..n_splits)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s as u64));
            let mut p = pos.clone();
            let mut n = neg.clone();
            p.shuffle(&mut rng);
            n.shuffle(&mut rng);
            let mut test: Vec<usize> = p[..pos_test].iter().chain(&n[..neg_test]).copied().collect();
            let mut train: Vec<usize> = p[pos_test..].iter().chain(&n[neg_test..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            Split { train, test }
        })
        .collect())
}
