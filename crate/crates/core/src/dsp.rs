//! Preprocessing from continuous multichannel recordings to labeled epochs:
//! line-noise notch, Butterworth bandpass, integer downsampling, onset-locked
//! epoching and per-channel z-scoring.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("frequency {freq} Hz must lie in (0, {nyquist}) Hz")]
    FrequencyOutOfRange { freq: f64, nyquist: f64 },
    #[error("band edges must satisfy 0 < low < high < nyquist, got ({low}, {high})")]
    InvalidBand { low: f64, high: f64 },
    #[error("filter order must be at least 1")]
    InvalidOrder,
    #[error("quality factor must be positive, got {0}")]
    InvalidQuality(f64),
    #[error("downsampling factor must be at least 1")]
    InvalidFactor,
    #[error("recording data has {got} values, expected {channels} x {samples}")]
    ShapeMismatch {
        channels: usize,
        samples: usize,
        got: usize,
    },
    #[error("onset at sample {onset} is out of bounds for {samples} samples")]
    OnsetOutOfRange { onset: usize, samples: usize },
    #[error("onsets must be non-decreasing")]
    UnorderedOnsets,
    #[error("channel {channel} out of range for {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("non-finite value in signal")]
    NonFinite,
    #[error("cannot fit z-score statistics on an empty training set")]
    EmptyTrainSet,
    #[error("epoch has {got} channels, statistics were fit on {expected}")]
    ChannelMismatch { expected: usize, got: usize },
}

/// Binary label of one stimulus presentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// Continuous recording: `channels x samples`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    channels: usize,
    samples: usize,
    data: Vec<f64>,
    rate: f64,
    onsets: Vec<(usize, Label)>,
}

impl RawRecording {
    pub fn new(channels: usize, data: Vec<f64>, rate: f64, onsets: Vec<(usize, Label)>) -> Result<Self, DspError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(DspError::InvalidRate(rate));
        }
        let samples = data.len().checked_div(channels).unwrap_or(0);
        if channels * samples != data.len() {
            return Err(DspError::ShapeMismatch {
                channels,
                samples,
                got: data.len(),
            });
        }
        for w in onsets.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(DspError::UnorderedOnsets);
            }
        }
        if let Some(&(onset, _)) = onsets.iter().find(|(o, _)| *o >= samples) {
            return Err(DspError::OnsetOutOfRange { onset, samples });
        }
        Ok(Self {
            channels,
            samples,
            data,
            rate,
            onsets,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn onsets(&self) -> &[(usize, Label)] {
        &self.onsets
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    /// Apply the same filter cascade to every channel.
    pub fn filtered(&self, cascade: &[BiquadCoefficients]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.channels {
            data.extend(filter_cascade(cascade, self.channel(c)));
        }
        Self { data, ..self.clone() }
    }

    /// Keep only the channels not listed in `excluded`.
    pub fn without_channels(&self, excluded: &[usize]) -> Result<Self, DspError> {
        if let Some(&channel) = excluded.iter().find(|&&c| c >= self.channels) {
            return Err(DspError::ChannelOutOfRange {
                channel,
                channels: self.channels,
            });
        }
        let kept: Vec<usize> = (0..self.channels).filter(|c| !excluded.contains(c)).collect();
        let mut data = Vec::with_capacity(kept.len() * self.samples);
        for &c in &kept {
            data.extend_from_slice(self.channel(c));
        }
        Ok(Self {
            channels: kept.len(),
            data,
            ..self.clone()
        })
    }
}

/// One onset-locked segment: `channels x samples`, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEpoch {
    pub channels: usize,
    pub samples: usize,
    pub data: Vec<f64>,
    pub label: Label,
    pub onset_sample: usize,
}

impl TrialEpoch {
    pub fn new(
        channels: usize,
        samples: usize,
        data: Vec<f64>,
        label: Label,
        onset_sample: usize,
    ) -> Result<Self, DspError> {
        if data.len() != channels * samples {
            return Err(DspError::ShapeMismatch {
                channels,
                samples,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DspError::NonFinite);
        }
        Ok(Self {
            channels,
            samples,
            data,
            label,
            onset_sample,
        })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }
}

/// Second-order section with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoefficients {
    pub const IDENTITY: Self = Self {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + z1 * self.b1 + z2 * self.b2) / (1.0 + z1 * self.a1 + z2 * self.a2)
    }
}

/// Magnitude response of a cascade at `freq` Hz.
pub fn cascade_gain(cascade: &[BiquadCoefficients], freq: f64, rate: f64) -> f64 {
    let omega = 2.0 * PI * freq / rate;
    cascade.iter().map(|s| s.response(omega).norm()).product()
}

/// Second-order IIR notch at `center_hz` with quality factor `q`.
pub fn design_notch(rate: f64, center_hz: f64, q: f64) -> Result<BiquadCoefficients, DspError> {
    check_rate(rate)?;
    let nyquist = rate / 2.0;
    if !(center_hz > 0.0 && center_hz < nyquist) {
        return Err(DspError::FrequencyOutOfRange {
            freq: center_hz,
            nyquist,
        });
    }
    if !(q > 0.0) {
        return Err(DspError::InvalidQuality(q));
    }
    let w0 = 2.0 * PI * center_hz / rate;
    let bw = w0 / q;
    let gain = 1.0 / (1.0 + (bw / 2.0).tan());
    let cos_w0 = w0.cos();
    Ok(BiquadCoefficients {
        b0: gain,
        b1: -2.0 * gain * cos_w0,
        b2: gain,
        a1: -2.0 * gain * cos_w0,
        a2: 2.0 * gain - 1.0,
    })
}

/// Butterworth bandpass of prototype order `order` (so `2 * order` poles),
/// designed by bilinear transform with pre-warped band edges and returned as
/// `order` second-order sections.
pub fn design_bandpass(rate: f64, low: f64, high: f64, order: usize) -> Result<Vec<BiquadCoefficients>, DspError> {
    check_rate(rate)?;
    if order == 0 {
        return Err(DspError::InvalidOrder);
    }
    if !(low > 0.0 && low < high && high < rate / 2.0) {
        return Err(DspError::InvalidBand { low, high });
    }
    let fs2 = 2.0 * rate;
    let warped_low = fs2 * (PI * low / rate).tan();
    let warped_high = fs2 * (PI * high / rate).tan();
    let bw = warped_high - warped_low;
    let w0_sq = warped_low * warped_high;

    // analog lowpass prototype poles on the left half of the unit circle
    let n = order as f64;
    let mut analog_poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let p = Complex::from_polar(1.0, theta) * bw / 2.0;
        let disc = (p * p - w0_sq).sqrt();
        analog_poles.push(p + disc);
        analog_poles.push(p - disc);
    }
    // gain of the lowpass-to-bandpass transform is bw^n; order zeros sit at s = 0
    let mut gain = Complex::new(bw.powi(order as i32), 0.0);
    let mut digital_poles = Vec::with_capacity(2 * order);
    for &p in &analog_poles {
        gain /= fs2 - p;
        digital_poles.push((fs2 + p) / (fs2 - p));
    }
    gain *= fs2.powi(order as i32);
    let gain = gain.re;

    let sections = pair_poles(digital_poles);
    let per_section = gain.abs().powf(1.0 / sections.len() as f64);
    let sign = gain.signum();
    Ok(sections
        .into_iter()
        .enumerate()
        .map(|(i, (a1, a2))| {
            // each section carries one zero at z = 1 and one at z = -1
            let g = if i == 0 { sign * per_section } else { per_section };
            BiquadCoefficients {
                b0: g,
                b1: 0.0,
                b2: -g,
                a1,
                a2,
            }
        })
        .collect())
}

/// Group digital poles into real second-order denominators `(a1, a2)`.
fn pair_poles(mut poles: Vec<Complex<f64>>) -> Vec<(f64, f64)> {
    const IMAG_EPS: f64 = 1e-12;
    poles.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut sections = Vec::new();
    let mut reals = Vec::new();
    for p in &poles {
        if p.im > IMAG_EPS {
            sections.push((-2.0 * p.re, p.norm_sqr()));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => sections.push((-(r1 + r2), r1 * r2)),
            [r] => sections.push((-r, 0.0)),
            _ => unreachable!(),
        }
    }
    sections
}

fn check_rate(rate: f64) -> Result<(), DspError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(DspError::InvalidRate(rate));
    }
    Ok(())
}

/// Causal transposed direct-form II filtering from zero initial state.
pub fn filter_forward(coeffs: &BiquadCoefficients, signal: &[f64]) -> Vec<f64> {
    let BiquadCoefficients { b0, b1, b2, a1, a2 } = *coeffs;
    let (mut s1, mut s2) = (0.0, 0.0);
    signal
        .iter()
        .map(|&x| {
            let y = b0 * x + s1;
            s1 = b1 * x - a1 * y + s2;
            s2 = b2 * x - a2 * y;
            y
        })
        .collect()
}

pub fn filter_cascade(cascade: &[BiquadCoefficients], signal: &[f64]) -> Vec<f64> {
    let mut out = signal.to_vec();
    for section in cascade {
        out = filter_forward(section, &out);
    }
    out
}

/// Keep every `factor`-th sample starting at index 0; onsets map by floor
/// division.
pub fn downsample(recording: &RawRecording, factor: usize) -> Result<RawRecording, DspError> {
    if factor < 1 {
        return Err(DspError::InvalidFactor);
    }
    let samples = recording.samples.div_ceil(factor);
    let mut data = Vec::with_capacity(recording.channels * samples);
    for c in 0..recording.channels {
        data.extend(recording.channel(c).iter().step_by(factor));
    }
    Ok(RawRecording {
        channels: recording.channels,
        samples,
        data,
        rate: recording.rate / factor as f64,
        onsets: recording.onsets.iter().map(|&(o, l)| (o / factor, l)).collect(),
    })
}

/// Number of samples in a window of `window_ms` at `rate`, rounded down.
pub fn window_samples(window_ms: f64, rate: f64) -> usize {
    (window_ms * rate / 1000.0).floor() as usize
}

/// Onset-locked epochs `[onset, onset + T)`. Epochs running past the end of
/// the recording are dropped; the second value is how many were dropped.
pub fn epoch(recording: &RawRecording, window_ms: f64) -> (Vec<TrialEpoch>, usize) {
    let t = window_samples(window_ms, recording.rate);
    let mut epochs = Vec::with_capacity(recording.onsets.len());
    let mut dropped = 0;
    for &(onset, label) in &recording.onsets {
        if t == 0 || onset + t > recording.samples {
            dropped += 1;
            continue;
        }
        let mut data = Vec::with_capacity(recording.channels * t);
        for c in 0..recording.channels {
            data.extend_from_slice(&recording.channel(c)[onset..onset + t]);
        }
        epochs.push(TrialEpoch {
            channels: recording.channels,
            samples: t,
            data,
            label,
            onset_sample: onset,
        });
    }
    (epochs, dropped)
}

/// Per-channel mean and standard deviation fit on training epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are treated as 1.
pub const MIN_STD: f64 = 1e-12;

pub fn fit_zscore(train: &[TrialEpoch]) -> Result<ZScoreStats, DspError> {
    let first = train.first().ok_or(DspError::EmptyTrainSet)?;
    let channels = first.channels;
    let mut mean = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for e in train {
        if e.channels != channels {
            return Err(DspError::ChannelMismatch {
                expected: channels,
                got: e.channels,
            });
        }
        for (c, m) in mean.iter_mut().enumerate() {
            *m += e.channel(c).iter().sum::<f64>();
            count[c] += e.samples;
        }
    }
    for (m, &n) in mean.iter_mut().zip(&count) {
        *m /= n.max(1) as f64;
    }
    let mut var = vec![0.0; channels];
    for e in train {
        for (c, v) in var.iter_mut().enumerate() {
            *v += e.channel(c).iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    let std = var
        .iter()
        .zip(&count)
        .map(|(v, &n)| {
            let s = (v / n.max(1) as f64).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(ZScoreStats { mean, std })
}

pub fn apply_zscore(stats: &ZScoreStats, epoch: &TrialEpoch) -> Result<TrialEpoch, DspError> {
    Ok(TrialEpoch {
        data: zscore_flat(stats, epoch)?,
        ..epoch.clone()
    })
}

/// Z-scored epoch flattened channel-major.
pub fn zscore_flat(stats: &ZScoreStats, epoch: &TrialEpoch) -> Result<Vec<f64>, DspError> {
    if epoch.channels != stats.mean.len() {
        return Err(DspError::ChannelMismatch {
            expected: stats.mean.len(),
            got: epoch.channels,
        });
    }
    let mut out = Vec::with_capacity(epoch.data.len());
    for c in 0..epoch.channels {
        let (m, s) = (stats.mean[c], stats.std[c]);
        out.extend(epoch.channel(c).iter().map(|x| (x - m) / s));
    }
    Ok(out)
}
