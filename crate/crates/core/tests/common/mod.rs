//! Independent oracles shared by the integration tests and the acceptance
//! run. Nothing here calls the code under test except to build inputs.

#![allow(dead_code)]

use rand::Rng;
use rsvp_bayes::{LabelPrior, LikelihoodPair};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Evidence for one presentation as plain numbers.
#[derive(Debug, Clone, Copy)]
pub enum RawEvidence {
    /// `p(+|e)`; `p(-|e) = 1 - pos`.
    Disc { pos: f64 },
    /// `p(e|+)`, `p(e|-)`.
    Gen { d_pos: f64, d_neg: f64 },
}

impl RawEvidence {
    pub fn pair(&self) -> LikelihoodPair {
        match *self {
            RawEvidence::Disc { pos } => LikelihoodPair::discriminative(pos, 1.0 - pos).unwrap(),
            RawEvidence::Gen { d_pos, d_neg } => LikelihoodPair::generative(d_pos, d_neg).unwrap(),
        }
    }

    /// `p(e | label)` up to a factor that does not depend on the label.
    /// For discriminative evidence Bayes gives `p(e|l) = p(l|e) p(e) / p(l)`.
    fn likelihood(&self, positive: bool, p_pos: f64) -> f64 {
        match *self {
            RawEvidence::Disc { pos } => {
                if positive {
                    pos / p_pos
                } else {
                    (1.0 - pos) / (1.0 - p_pos)
                }
            }
            RawEvidence::Gen { d_pos, d_neg } => {
                if positive {
                    d_pos
                } else {
                    d_neg
                }
            }
        }
    }
}

/// Posterior `p(D | q, e)` by summing the full joint
/// `p(D) Π_i p(l_i | D, q_i) p(e_i | l_i)` over every label assignment,
/// where `p(l_i = + | D, q_i) = [D = q_i]`.
pub fn brute_force_posterior(prior: &[f64], events: &[(usize, RawEvidence)], p_pos: f64) -> Vec<f64> {
    let a = prior.len();
    let n = events.len();
    let mut joint = vec![0.0; a];
    for (d, slot) in joint.iter_mut().enumerate() {
        for labels in 0u32..(1 << n) {
            let mut term = prior[d];
            for (i, (q, ev)) in events.iter().enumerate() {
                let positive = labels >> i & 1 == 1;
                let consistent = positive == (*q == d);
                if !consistent {
                    term = 0.0;
                    break;
                }
                term *= ev.likelihood(positive, p_pos);
            }
            *slot += term;
        }
    }
    let z: f64 = joint.iter().sum();
    joint.iter().map(|v| v / z).collect()
}

/// A random instance: alphabet size, normalized prior, events, label prior.
pub struct Instance {
    pub prior: Vec<f64>,
    pub events: Vec<(usize, RawEvidence)>,
    pub p_pos: f64,
    pub generative: bool,
}

impl Instance {
    pub fn label_prior(&self) -> LabelPrior {
        LabelPrior::new(self.p_pos).unwrap()
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, a_range: std::ops::RangeInclusive<usize>, max_events: usize) -> Instance {
    let a = rng.random_range(a_range);
    let n = rng.random_range(0..=max_events);
    let generative = rng.random_bool(0.5);
    let raw: Vec<f64> = (0..a).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = raw.iter().sum();
    let events = (0..n)
        .map(|_| {
            let q = rng.random_range(0..a);
            let ev = if generative {
                RawEvidence::Gen {
                    d_pos: rng.random_range(0.01..3.0),
                    d_neg: rng.random_range(0.01..3.0),
                }
            } else {
                RawEvidence::Disc {
                    pos: rng.random_range(0.01..0.99),
                }
            };
            (q, ev)
        })
        .collect();
    Instance {
        prior: raw.iter().map(|v| v / z).collect(),
        events,
        p_pos: rng.random_range(0.05..0.95),
        generative,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Magnitude response at `freq_hz` measured from the FFT of an `n`-sample
/// impulse response. `freq_hz` must fall on an FFT bin.
pub fn fft_gain(impulse_response: &[f64], rate: f64, freq_hz: f64) -> f64 {
    let n = impulse_response.len();
    let bin = freq_hz * n as f64 / rate;
    assert!((bin - bin.round()).abs() < 1e-9, "{freq_hz} Hz is not on an FFT bin");
    let mut buf: Vec<Complex<f64>> = impulse_response.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[bin.round() as usize].norm()
}

pub fn db(gain: f64) -> f64 {
    20.0 * gain.log10()
}

pub fn impulse(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    x
}

/// Squared magnitude of an order-`n` Butterworth bandpass designed with the
/// bilinear transform and pre-warped edges:
/// `1 / (1 + ((Ω² − Ω₀²) / (Ω·B))^(2n))` with `Ω = 2 fs tan(π f / fs)`.
pub fn butterworth_bandpass_gain(f: f64, low: f64, high: f64, order: i32, rate: f64) -> f64 {
    let warp = |x: f64| 2.0 * rate * (std::f64::consts::PI * x / rate).tan();
    let (w, wl, wh) = (warp(f), warp(low), warp(high));
    let ratio = (w * w - wl * wh) / (w * (wh - wl));
    (1.0 / (1.0 + ratio.powi(2 * order))).sqrt()
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
