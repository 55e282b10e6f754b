//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! seed = 4
//! synth.erp_amplitude = 0.28
//! typing.strategy = without-replacement
//! dsp.exclude_channels = 3, 7
//! ```
//!
//! Every key is optional and falls back to the documented default. Unknown
//! keys, repeated keys and unparsable values are rejected with the offending
//! line number.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::bayes::{Alphabet, LabelPrior};
use crate::models::{ClassWeights, ModelHyperparams, ModelKind, Shrinkage};
use crate::rng::derive_seed;
use crate::sim::{QueryStrategy, TypingConfig};
use crate::synth::SynthConfig;

const SPLIT_STREAM: u64 = 1 << 32;
const TYPING_STREAM: u64 = (1 << 32) + 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Epoch extraction from continuous recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    /// Channels dropped before filtering (e.g. known-faulty electrodes).
    pub exclude_channels: Vec<usize>,
    /// Notch center; `0` disables the notch.
    pub notch_hz: f64,
    pub notch_q: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub band_order: usize,
    pub downsample: usize,
    pub window_ms: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            exclude_channels: Vec::new(),
            notch_hz: 50.0,
            notch_q: 30.0,
            band_low: 1.0,
            band_high: 20.0,
            band_order: 2,
            downsample: 2,
            window_ms: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub splits: usize,
    pub test_fraction: f64,
    /// Share of the training portion held out by `train` for validation.
    pub validation_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            splits: 5,
            test_fraction: 0.2,
            validation_fraction: 0.1,
        }
    }
}

/// Label prior used by the discriminative update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelPriorSetting {
    /// `1 / A` for the configured alphabet.
    Uniform,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed. Dataset, split and typing seeds are derived from it.
    pub seed: u64,
    pub synth: SynthConfig,
    pub dsp: DspConfig,
    pub model_kind: ModelKind,
    pub model: ModelHyperparams,
    pub typing: TypingConfig,
    pub alphabet_size: usize,
    pub label_prior: LabelPriorSetting,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            seed: synth.seed,
            synth,
            dsp: DspConfig::default(),
            model_kind: ModelKind::LogReg,
            model: ModelHyperparams::default(),
            typing: TypingConfig::default(),
            alphabet_size: 28,
            label_prior: LabelPriorSetting::Uniform,
            eval: EvalConfig::default(),
        }
    }
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn weights_str(w: &ClassWeights) -> String {
    match w {
        ClassWeights::InverseFraction => "inverse-fraction".into(),
        ClassWeights::Uniform => "uniform".into(),
        ClassWeights::Explicit { pos, neg } => format!("{pos}:{neg}"),
    }
}

fn shrinkage_str(s: &Shrinkage) -> String {
    match s {
        Shrinkage::RelativeToMeanDiagonal(f) => format!("relative:{f}"),
        Shrinkage::Absolute(a) => format!("absolute:{a}"),
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Pops keys off the parsed file and converts them, remembering line numbers.
struct Fields(BTreeMap<String, Entry>);

impl Fields {
    fn take<T>(
        &mut self,
        key: &str,
        target: &mut T,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<(), ConfigError> {
        if let Some(e) = self.0.remove(key) {
            *target = parse(&e.value).map_err(|m| ConfigError::Line {
                line: e.line,
                message: format!("{key}: {m}"),
            })?;
        }
        Ok(())
    }

    fn num<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T::Err: Display,
    {
        self.take(key, target, |s| {
            s.parse::<T>().map_err(|e| format!("cannot parse {s:?}: {e}"))
        })
    }
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("cannot parse {p:?}: {e}"))
        })
        .collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("cannot parse {s:?}: {e}"))
}

fn parse_weights(s: &str) -> Result<ClassWeights, String> {
    match s {
        "inverse-fraction" => Ok(ClassWeights::InverseFraction),
        "uniform" => Ok(ClassWeights::Uniform),
        _ => {
            let (p, n) = s
                .split_once(':')
                .ok_or_else(|| format!("expected inverse-fraction, uniform or POS:NEG, got {s:?}"))?;
            Ok(ClassWeights::Explicit {
                pos: parse_f64(p)?,
                neg: parse_f64(n)?,
            })
        }
    }
}

fn parse_shrinkage(s: &str) -> Result<Shrinkage, String> {
    match s.split_once(':') {
        Some(("relative", v)) => Ok(Shrinkage::RelativeToMeanDiagonal(parse_f64(v)?)),
        Some(("absolute", v)) => Ok(Shrinkage::Absolute(parse_f64(v)?)),
        _ => Err(format!("expected relative:F or absolute:F, got {s:?}")),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim().to_string();
            if let Some(prev) = map.get(&key).map(|e: &Entry| e.line) {
                return Err(ConfigError::Line {
                    line,
                    message: format!("{key} already set on line {prev}"),
                });
            }
            map.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }

        let mut f = Fields(map);
        let mut c = RunConfig::default();
        f.num("seed", &mut c.seed)?;

        let s = &mut c.synth;
        f.num("synth.channels", &mut s.channels)?;
        f.num("synth.rate", &mut s.rate)?;
        f.num("synth.trial_ms", &mut s.trial_ms)?;
        f.num("synth.erp_latency_ms", &mut s.erp_latency_ms)?;
        f.num("synth.erp_width_ms", &mut s.erp_width_ms)?;
        f.num("synth.erp_amplitude", &mut s.erp_amplitude)?;
        f.take("synth.erp_channels", &mut s.erp_channels, parse_list)?;
        f.num("synth.noise_std", &mut s.noise_std)?;
        f.num("synth.noise_band_low", &mut s.noise_band_low)?;
        f.num("synth.noise_band_high", &mut s.noise_band_high)?;
        f.num("synth.target_fraction", &mut s.target_fraction)?;
        f.num("synth.epochs", &mut s.n_epochs)?;

        let d = &mut c.dsp;
        f.take("dsp.exclude_channels", &mut d.exclude_channels, parse_list)?;
        f.num("dsp.notch_hz", &mut d.notch_hz)?;
        f.num("dsp.notch_q", &mut d.notch_q)?;
        f.num("dsp.band_low", &mut d.band_low)?;
        f.num("dsp.band_high", &mut d.band_high)?;
        f.num("dsp.band_order", &mut d.band_order)?;
        f.num("dsp.downsample", &mut d.downsample)?;
        f.num("dsp.window_ms", &mut d.window_ms)?;

        f.take("model.kind", &mut c.model_kind, |s| {
            s.parse().map_err(|e| format!("{e}"))
        })?;
        let m = &mut c.model;
        f.num("model.learning_rate", &mut m.logistic.learning_rate)?;
        f.num("model.max_iter", &mut m.logistic.max_iter)?;
        f.num("model.tolerance", &mut m.logistic.tolerance)?;
        f.take("model.class_weights", &mut m.logistic.class_weights, parse_weights)?;
        f.take(
            "model.generative_class_weights",
            &mut m.generative_scorer_weights,
            parse_weights,
        )?;
        f.num("model.pca_fraction", &mut m.pca_fraction)?;
        f.num("model.kde_bandwidth", &mut m.kde_bandwidth)?;
        f.take("model.lda_shrinkage", &mut m.lda_shrinkage, parse_shrinkage)?;

        let t = &mut c.typing;
        f.num("typing.attempts", &mut t.attempts)?;
        f.num("typing.max_rounds", &mut t.max_rounds)?;
        f.num("typing.query_size", &mut t.query_size)?;
        f.num("typing.alphabet_size", &mut c.alphabet_size)?;
        f.num("typing.threshold", &mut t.threshold)?;
        f.take("typing.label_prior", &mut c.label_prior, |s| {
            if s == "uniform" {
                Ok(LabelPriorSetting::Uniform)
            } else {
                parse_f64(s).map(LabelPriorSetting::Fixed)
            }
        })?;
        f.take("typing.strategy", &mut t.strategy, |s| {
            QueryStrategy::parse(s)
                .ok_or_else(|| format!("expected with-replacement, without-replacement or top-k, got {s:?}"))
        })?;
        f.take("typing.stop_on_wrong", &mut t.stop_on_wrong, parse_bool)?;

        f.num("eval.splits", &mut c.eval.splits)?;
        f.num("eval.test_fraction", &mut c.eval.test_fraction)?;
        f.num("eval.validation_fraction", &mut c.eval.validation_fraction)?;

        if let Some((key, e)) = f.0.iter().min_by_key(|(_, e)| e.line) {
            return Err(ConfigError::Line {
                line: e.line,
                message: format!("unknown key {key:?}"),
            });
        }
        c.resolve()?;
        Ok(c)
    }

    /// Apply `seed` and the alphabet settings, then validate everything.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.synth.seed = self.seed;
        self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        self.typing.alphabet = if self.alphabet_size == 28 {
            Alphabet::latin28()
        } else {
            Alphabet::with_size(self.alphabet_size)
                .map_err(|e| ConfigError::Invalid(format!("typing.alphabet_size: {e}")))?
        };
        let prior = match self.label_prior {
            LabelPriorSetting::Uniform => LabelPrior::uniform_over(self.alphabet_size),
            LabelPriorSetting::Fixed(p) => LabelPrior::new(p),
        };
        self.typing.label_prior = prior.map_err(|e| ConfigError::Invalid(format!("typing.label_prior: {e}")))?;
        self.typing.record_traces = false;
        self.typing.seed = derive_seed(self.seed, TYPING_STREAM);
        self.typing
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let d = &self.dsp;
        if !(d.notch_hz >= 0.0 && d.notch_q > 0.0) {
            return bad("dsp.notch_hz must be non-negative and dsp.notch_q positive".into());
        }
        if !(d.band_low > 0.0 && d.band_low < d.band_high) || d.band_order == 0 {
            return bad("dsp band needs 0 < band_low < band_high and band_order >= 1".into());
        }
        if d.downsample == 0 || !(d.window_ms > 0.0) {
            return bad("dsp.downsample must be at least 1 and dsp.window_ms positive".into());
        }

        let m = &self.model;
        if !(m.logistic.learning_rate > 0.0 && m.logistic.tolerance >= 0.0) || m.logistic.max_iter == 0 {
            return bad("model.learning_rate and model.max_iter must be positive".into());
        }
        if !(m.pca_fraction > 0.0 && m.pca_fraction <= 1.0) {
            return bad(format!("model.pca_fraction must lie in (0, 1], got {}", m.pca_fraction));
        }
        if !(m.kde_bandwidth > 0.0) {
            return bad(format!("model.kde_bandwidth must be positive, got {}", m.kde_bandwidth));
        }

        let e = &self.eval;
        if e.splits == 0 {
            return bad("eval.splits must be at least 1".into());
        }
        if !(e.test_fraction > 0.0 && e.test_fraction < 1.0)
            || !(e.validation_fraction > 0.0 && e.validation_fraction < 1.0)
        {
            return bad("eval.test_fraction and eval.validation_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Seed of the stratified train/test partitions.
    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SPLIT_STREAM)
    }

    /// Every key with its resolved value, in a fixed order. Parsing the
    /// echo back yields the same configuration.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        let d = &self.dsp;
        let m = &self.model;
        let t = &self.typing;
        vec![
            ("seed", self.seed.to_string()),
            ("synth.channels", s.channels.to_string()),
            ("synth.rate", s.rate.to_string()),
            ("synth.trial_ms", s.trial_ms.to_string()),
            ("synth.erp_latency_ms", s.erp_latency_ms.to_string()),
            ("synth.erp_width_ms", s.erp_width_ms.to_string()),
            ("synth.erp_amplitude", s.erp_amplitude.to_string()),
            ("synth.erp_channels", list(&s.erp_channels)),
            ("synth.noise_std", s.noise_std.to_string()),
            ("synth.noise_band_low", s.noise_band_low.to_string()),
            ("synth.noise_band_high", s.noise_band_high.to_string()),
            ("synth.target_fraction", s.target_fraction.to_string()),
            ("synth.epochs", s.n_epochs.to_string()),
            ("dsp.exclude_channels", list(&d.exclude_channels)),
            ("dsp.notch_hz", d.notch_hz.to_string()),
            ("dsp.notch_q", d.notch_q.to_string()),
            ("dsp.band_low", d.band_low.to_string()),
            ("dsp.band_high", d.band_high.to_string()),
            ("dsp.band_order", d.band_order.to_string()),
            ("dsp.downsample", d.downsample.to_string()),
            ("dsp.window_ms", d.window_ms.to_string()),
            ("model.kind", self.model_kind.as_str().to_string()),
            ("model.learning_rate", m.logistic.learning_rate.to_string()),
            ("model.max_iter", m.logistic.max_iter.to_string()),
            ("model.tolerance", m.logistic.tolerance.to_string()),
            ("model.class_weights", weights_str(&m.logistic.class_weights)),
            (
                "model.generative_class_weights",
                weights_str(&m.generative_scorer_weights),
            ),
            ("model.pca_fraction", m.pca_fraction.to_string()),
            ("model.kde_bandwidth", m.kde_bandwidth.to_string()),
            ("model.lda_shrinkage", shrinkage_str(&m.lda_shrinkage)),
            ("typing.attempts", t.attempts.to_string()),
            ("typing.max_rounds", t.max_rounds.to_string()),
            ("typing.query_size", t.query_size.to_string()),
            ("typing.alphabet_size", self.alphabet_size.to_string()),
            ("typing.threshold", t.threshold.to_string()),
            (
                "typing.label_prior",
                match self.label_prior {
                    LabelPriorSetting::Uniform => "uniform".to_string(),
                    LabelPriorSetting::Fixed(p) => p.to_string(),
                },
            ),
            ("typing.strategy", t.strategy.as_str().to_string()),
            ("typing.stop_on_wrong", t.stop_on_wrong.to_string()),
            ("eval.splits", self.eval.splits.to_string()),
            ("eval.test_fraction", self.eval.test_fraction.to_string()),
            ("eval.validation_fraction", self.eval.validation_fraction.to_string()),
        ]
    }

    /// The echo as a config file.
    pub fn to_text(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("# nothing here\n\n").unwrap();
        let mut d = RunConfig::default();
        d.resolve().unwrap();
        assert_eq!(c, d);
        assert_eq!(c.typing.label_prior.p_pos(), 1.0 / 28.0);
    }

    #[test]
    fn values_and_comments() {
        let c = RunConfig::parse(
            "seed = 11  # trailing comment\nsynth.erp_channels = 0, 2\ntyping.strategy = top-k\nmodel.kind = gen-lda\n\
             typing.label_prior = 0.1\nmodel.lda_shrinkage = absolute:0.5\n",
        )
        .unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.synth.seed, 11);
        assert_eq!(c.synth.erp_channels, vec![0, 2]);
        assert_eq!(c.typing.strategy, QueryStrategy::TopK);
        assert_eq!(c.model_kind, ModelKind::GenLda);
        assert_eq!(c.typing.label_prior.p_pos(), 0.1);
        assert_eq!(c.model.lda_shrinkage, Shrinkage::Absolute(0.5));
    }

    #[test]
    fn errors_point_at_lines() {
        let err = RunConfig::parse("seed = 1\n\nsynth.colour = red\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Line {
                line: 3,
                message: "unknown key \"synth.colour\"".into()
            }
        );
        assert!(matches!(
            RunConfig::parse("typing.attempts = many").unwrap_err(),
            ConfigError::Line { line: 1, .. }
        ));
        assert!(matches!(
            RunConfig::parse("seed = 1\nseed = 2").unwrap_err(),
            ConfigError::Line { line: 2, .. }
        ));
        assert!(matches!(
            RunConfig::parse("just words").unwrap_err(),
            ConfigError::Line { line: 1, .. }
        ));
        assert!(matches!(
            RunConfig::parse("typing.threshold = 1.5").unwrap_err(),
            ConfigError::Invalid(_)
        ));
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::parse("synth.erp_amplitude = 0.3\ndsp.exclude_channels = 1,4\nmodel.class_weights = 9:1\n")
            .unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.echo().len(), c.to_text().lines().count());
    }
}
