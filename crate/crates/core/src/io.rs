//! Self-describing binary container shared by raw recordings, epoch
//! datasets and trained models.
//!
//! ```text
//! magic    8 bytes   "RSVPBAYS"
//! length   u32 LE    byte length of the header
//! header   UTF-8 JSON object: format_version, kind, shape metadata, offsets
//! payload  little-endian arrays described by the header
//! ```
//!
//! Dataset payload: epochs as f32 (epoch-major, channel-major, time-minor),
//! then one label byte per epoch (0 negative, 1 positive), then one u64
//! onset sample per epoch. Raw payload: f32 samples (channel-major), then
//! `(u64 sample, u8 label)` per onset. Model payload: f64 values for each
//! stage listed in the header, in order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dsp::{DspError, Label, RawRecording, TrialEpoch, ZScoreStats};
use crate::models::generative::{GenerativePipeline, Scorer};
use crate::models::{
    DiscriminativeLogistic, KdeDensity, LdaModel, LogisticModel, ModelKind, PcaProjection, TrainedModel,
};
use crate::synth::LabeledDataset;

pub const MAGIC: &[u8; 8] = b"RSVPBAYS";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not an rsvp-bayes container (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected a {expected} container, found {found}")]
    WrongKind { expected: &'static str, found: String },
    #[error("payload is {got} bytes, header describes {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("invalid contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Container kind stored in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Raw,
    Dataset,
    Model,
}

impl ContainerKind {
    fn as_str(self) -> &'static str {
        match self {
            ContainerKind::Raw => "raw",
            ContainerKind::Dataset => "dataset",
            ContainerKind::Model => "model",
        }
    }
}

fn encode_container(header: &Value, payload: &[u8]) -> Vec<u8> {
    let text = serde_json::to_string(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + text.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(payload);
    out
}

fn decode_container(bytes: &[u8], kind: ContainerKind) -> Result<(Map<String, Value>, &[u8]), FormatError> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes
        .get(12..12 + len)
        .ok_or_else(|| FormatError::Header("header length exceeds file size".into()))?;
    let text = std::str::from_utf8(header_bytes).map_err(|e| FormatError::Header(e.to_string()))?;
    let header: Map<String, Value> = serde_json::from_str(text).map_err(|e| FormatError::Header(e.to_string()))?;
    let version = get_u64(&header, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let found = get_str(&header, "kind")?;
    if found != kind.as_str() {
        return Err(FormatError::WrongKind {
            expected: kind.as_str(),
            found: found.to_string(),
        });
    }
    let payload = &bytes[12 + len..];
    let expected = get_usize(&header, "payload_bytes")?;
    if payload.len() != expected {
        return Err(FormatError::PayloadLength {
            expected,
            got: payload.len(),
        });
    }
    Ok((header, payload))
}

fn get_u64(h: &Map<String, Value>, key: &str) -> Result<u64, FormatError> {
    h.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| FormatError::Header(format!("missing or non-integer field {key:?}")))
}

fn get_usize(h: &Map<String, Value>, key: &str) -> Result<usize, FormatError> {
    get_u64(h, key).map(|v| v as usize)
}

fn get_f64(h: &Map<String, Value>, key: &str) -> Result<f64, FormatError> {
    h.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| FormatError::Header(format!("missing or non-numeric field {key:?}")))
}

fn get_str<'a>(h: &'a Map<String, Value>, key: &str) -> Result<&'a str, FormatError> {
    h.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| FormatError::Header(format!("missing or non-string field {key:?}")))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    std::fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn label_byte(l: Label) -> u8 {
    l.is_positive() as u8
}

fn byte_label(b: u8) -> Result<Label, FormatError> {
    match b {
        0 => Ok(Label::Negative),
        1 => Ok(Label::Positive),
        other => Err(FormatError::Invalid(format!("label byte {other} is neither 0 nor 1"))),
    }
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
}

pub fn encode_dataset(dataset: &LabeledDataset) -> Result<Vec<u8>, FormatError> {
    let (channels, samples) = dataset
        .epochs
        .first()
        .map(|e| (e.channels, e.samples))
        .unwrap_or((0, 0));
    let n = dataset.epochs.len();
    let data_bytes = n * channels * samples * 4;
    let label_offset = data_bytes;
    let onset_offset = label_offset + n;
    let payload_bytes = onset_offset + 8 * n;
    let mut payload = Vec::with_capacity(payload_bytes);
    for e in &dataset.epochs {
        if e.channels != channels || e.samples != samples {
            return Err(FormatError::Invalid("epochs differ in shape".into()));
        }
        for &v in &e.data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    payload.extend(dataset.epochs.iter().map(|e| label_byte(e.label)));
    for e in &dataset.epochs {
        payload.extend_from_slice(&(e.onset_sample as u64).to_le_bytes());
    }
    let header = json!({
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "channels": channels,
        "samples_per_epoch": samples,
        "epoch_count": n,
        "rate": dataset.rate,
        "data_offset": 0,
        "label_offset": label_offset,
        "onset_offset": onset_offset,
        "payload_bytes": payload_bytes,
    });
    Ok(encode_container(&header, &payload))
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset, FormatError> {
    let (h, payload) = decode_container(bytes, ContainerKind::Dataset)?;
    let channels = get_usize(&h, "channels")?;
    let samples = get_usize(&h, "samples_per_epoch")?;
    let n = get_usize(&h, "epoch_count")?;
    let rate = get_f64(&h, "rate")?;
    let label_offset = get_usize(&h, "label_offset")?;
    let onset_offset = get_usize(&h, "onset_offset")?;
    let per_epoch = channels * samples;
    if label_offset != n * per_epoch * 4 || onset_offset != label_offset + n || payload.len() != onset_offset + 8 * n {
        return Err(FormatError::Header("offsets do not match the declared counts".into()));
    }
    let values: Vec<f64> = f32s(&payload[..label_offset]).collect();
    let mut epochs = Vec::with_capacity(n);
    for i in 0..n {
        let label = byte_label(payload[label_offset + i])?;
        let o = onset_offset + 8 * i;
        let onset = u64::from_le_bytes(payload[o..o + 8].try_into().expect("8 bytes")) as usize;
        let data = values[i * per_epoch..(i + 1) * per_epoch].to_vec();
        epochs.push(TrialEpoch::new(channels, samples, data, label, onset)?);
    }
    Ok(LabeledDataset {
        epochs,
        rate,
        splits: Vec::new(),
    })
}

pub fn encode_raw(rec: &RawRecording) -> Vec<u8> {
    let data_bytes = rec.data().len() * 4;
    let payload_bytes = data_bytes + 9 * rec.onsets().len();
    let mut payload = Vec::with_capacity(payload_bytes);
    for &v in rec.data() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &(onset, label) in rec.onsets() {
        payload.extend_from_slice(&(onset as u64).to_le_bytes());
        payload.push(label_byte(label));
    }
    let header = json!({
        "format_version": FORMAT_VERSION,
        "kind": "raw",
        "channels": rec.channels(),
        "samples": rec.samples(),
        "rate": rec.rate(),
        "onset_count": rec.onsets().len(),
        "data_offset": 0,
        "onset_offset": data_bytes,
        "payload_bytes": payload_bytes,
    });
    encode_container(&header, &payload)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawRecording, FormatError> {
    let (h, payload) = decode_container(bytes, ContainerKind::Raw)?;
    let channels = get_usize(&h, "channels")?;
    let samples = get_usize(&h, "samples")?;
    let rate = get_f64(&h, "rate")?;
    let count = get_usize(&h, "onset_count")?;
    let onset_offset = get_usize(&h, "onset_offset")?;
    if onset_offset != channels * samples * 4 || payload.len() != onset_offset + 9 * count {
        return Err(FormatError::Header("offsets do not match the declared counts".into()));
    }
    let data: Vec<f64> = f32s(&payload[..onset_offset]).collect();
    let onsets = payload[onset_offset..]
        .chunks_exact(9)
        .map(|c| {
            Ok((
                u64::from_le_bytes(c[..8].try_into().expect("8 bytes")) as usize,
                byte_label(c[8])?,
            ))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Ok(RawRecording::new(channels, data, rate, onsets)?)
}

/// How a stored model was trained, so `simulate` can find its held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub seed: u64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub channels: usize,
    pub samples: usize,
    pub provenance: TrainingProvenance,
}

/// Stage list and flat f64 payload, filled in order.
#[derive(Default)]
struct StageWriter {
    stages: Vec<Value>,
    values: Vec<f64>,
}

impl StageWriter {
    fn push(&mut self, name: &str, meta: Value, parts: &[&[f64]]) {
        let count: usize = parts.iter().map(|p| p.len()).sum();
        let mut entry = json!({ "stage": name, "values": count });
        if let (Value::Object(e), Value::Object(m)) = (&mut entry, meta) {
            e.extend(m);
        }
        self.stages.push(entry);
        for p in parts {
            self.values.extend_from_slice(p);
        }
    }
}

struct StageReader<'a> {
    stages: std::slice::Iter<'a, Value>,
    values: &'a [f64],
}

impl<'a> StageReader<'a> {
    fn next(&mut self, name: &str) -> Result<(&'a Map<String, Value>, &'a [f64]), FormatError> {
        let stage = self
            .stages
            .next()
            .and_then(Value::as_object)
            .ok_or_else(|| FormatError::Header(format!("missing stage {name:?}")))?;
        let found = get_str(stage, "stage")?;
        if found != name {
            return Err(FormatError::Header(format!("expected stage {name:?}, found {found:?}")));
        }
        let count = get_usize(stage, "values")?;
        if count > self.values.len() {
            return Err(FormatError::Header(format!("stage {name:?} overruns the payload")));
        }
        let (head, tail) = self.values.split_at(count);
        self.values = tail;
        Ok((stage, head))
    }
}

fn take<'a>(values: &mut &'a [f64], n: usize) -> Result<&'a [f64], FormatError> {
    if n > values.len() {
        return Err(FormatError::Invalid(
            "stage holds fewer values than its shape requires".into(),
        ));
    }
    let (head, tail) = values.split_at(n);
    *values = tail;
    Ok(head)
}

fn write_zscore(w: &mut StageWriter, z: &ZScoreStats) {
    w.push("zscore", json!({ "channels": z.mean.len() }), &[&z.mean, &z.std]);
}

fn read_zscore(r: &mut StageReader) -> Result<ZScoreStats, FormatError> {
    let (meta, mut v) = r.next("zscore")?;
    let c = get_usize(meta, "channels")?;
    Ok(ZScoreStats {
        mean: take(&mut v, c)?.to_vec(),
        std: take(&mut v, c)?.to_vec(),
    })
}

fn write_logistic(w: &mut StageWriter, m: &LogisticModel) {
    w.push("logistic", json!({ "dim": m.dim() }), &[&m.weights, &[m.bias]]);
}

fn read_logistic(r: &mut StageReader) -> Result<LogisticModel, FormatError> {
    let (meta, mut v) = r.next("logistic")?;
    let d = get_usize(meta, "dim")?;
    Ok(LogisticModel {
        weights: take(&mut v, d)?.to_vec(),
        bias: take(&mut v, 1)?[0],
    })
}

fn write_kde(w: &mut StageWriter, name: &str, k: &KdeDensity) {
    w.push(name, json!({ "scores": k.scores.len() }), &[&[k.bandwidth], &k.scores]);
}

fn read_kde(r: &mut StageReader, name: &str) -> Result<KdeDensity, FormatError> {
    let (meta, mut v) = r.next(name)?;
    let n = get_usize(meta, "scores")?;
    Ok(KdeDensity {
        bandwidth: take(&mut v, 1)?[0],
        scores: take(&mut v, n)?.to_vec(),
    })
}

pub fn encode_model(file: &ModelFile) -> Vec<u8> {
    let mut w = StageWriter::default();
    match &file.model {
        TrainedModel::Discriminative(m) => {
            write_zscore(&mut w, &m.zscore);
            write_logistic(&mut w, &m.model);
        }
        TrainedModel::Generative(g) => {
            write_zscore(&mut w, &g.zscore);
            let p = &g.pca;
            w.push(
                "pca",
                json!({ "input_dim": p.input_dim, "components": p.n_components }),
                &[&p.mean, &p.components, &[p.retained_variance], &p.eigenvalues],
            );
            match &g.scorer {
                Scorer::Logistic(m) => write_logistic(&mut w, m),
                Scorer::Lda(m) => w.push(
                    "lda",
                    json!({ "dim": m.dim() }),
                    &[
                        &m.mean_pos,
                        &m.mean_neg,
                        &m.precision,
                        &[m.log_prior_pos, m.log_prior_neg],
                    ],
                ),
            }
            write_kde(&mut w, "kde_pos", &g.kde_pos);
            write_kde(&mut w, "kde_neg", &g.kde_neg);
            w.push("label_fraction", json!({}), &[&[g.train_positive_fraction]]);
        }
    }
    let mut payload = Vec::with_capacity(8 * w.values.len());
    for v in &w.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let header = json!({
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "model_kind": file.model.kind().as_str(),
        "channels": file.channels,
        "samples_per_epoch": file.samples,
        "training": {
            "seed": file.provenance.seed,
            "test_fraction": file.provenance.test_fraction,
            "validation_fraction": file.provenance.validation_fraction,
        },
        "stages": w.stages,
        "payload_bytes": payload.len(),
    });
    encode_container(&header, &payload)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile, FormatError> {
    let (h, payload) = decode_container(bytes, ContainerKind::Model)?;
    if payload.len() % 8 != 0 {
        return Err(FormatError::Header(
            "model payload is not a whole number of f64 values".into(),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let kind: ModelKind = get_str(&h, "model_kind")?
        .parse()
        .map_err(|e: crate::models::ModelError| FormatError::Header(e.to_string()))?;
    let stages = h
        .get("stages")
        .and_then(Value::as_array)
        .ok_or_else(|| FormatError::Header("missing stage list".into()))?;
    let training = h
        .get("training")
        .and_then(Value::as_object)
        .ok_or_else(|| FormatError::Header("missing training block".into()))?;
    let provenance = TrainingProvenance {
        seed: get_u64(training, "seed")?,
        test_fraction: get_f64(training, "test_fraction")?,
        validation_fraction: get_f64(training, "validation_fraction")?,
    };
    let mut r = StageReader {
        stages: stages.iter(),
        values: &values,
    };
    let model = match kind {
        ModelKind::LogReg => TrainedModel::Discriminative(DiscriminativeLogistic {
            zscore: read_zscore(&mut r)?,
            model: read_logistic(&mut r)?,
        }),
        ModelKind::GenLogR | ModelKind::GenLda => {
            let zscore = read_zscore(&mut r)?;
            let (meta, mut v) = r.next("pca")?;
            let d = get_usize(meta, "input_dim")?;
            let k = get_usize(meta, "components")?;
            let pca = PcaProjection {
                mean: take(&mut v, d)?.to_vec(),
                components: take(&mut v, d * k)?.to_vec(),
                retained_variance: take(&mut v, 1)?[0],
                eigenvalues: take(&mut v, d)?.to_vec(),
                input_dim: d,
                n_components: k,
            };
            let scorer = if kind == ModelKind::GenLogR {
                Scorer::Logistic(read_logistic(&mut r)?)
            } else {
                let (meta, mut v) = r.next("lda")?;
                let d = get_usize(meta, "dim")?;
                let mean_pos = take(&mut v, d)?.to_vec();
                let mean_neg = take(&mut v, d)?.to_vec();
                let precision = take(&mut v, d * d)?.to_vec();
                let priors = take(&mut v, 2)?;
                Scorer::Lda(
                    LdaModel::from_parts(mean_pos, mean_neg, precision, priors[0], priors[1])
                        .map_err(|e| FormatError::Invalid(e.to_string()))?,
                )
            };
            let kde_pos = read_kde(&mut r, "kde_pos")?;
            let kde_neg = read_kde(&mut r, "kde_neg")?;
            let (_, frac) = r.next("label_fraction")?;
            TrainedModel::Generative(GenerativePipeline {
                zscore,
                pca,
                scorer,
                kde_pos,
                kde_neg,
                train_positive_fraction: *frac
                    .first()
                    .ok_or_else(|| FormatError::Invalid("empty label_fraction stage".into()))?,
            })
        }
    };
    if !r.values.is_empty() || r.stages.next().is_some() {
        return Err(FormatError::Header("trailing stages or values after the model".into()));
    }
    Ok(ModelFile {
        model,
        channels: get_usize(&h, "channels")?,
        samples: get_usize(&h, "samples_per_epoch")?,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> LabeledDataset {
        let epochs = (0..4)
            .map(|i| {
                TrialEpoch::new(
                    2,
                    3,
                    (0..6).map(|j| (i * 6 + j) as f64 * 0.5).collect(),
                    Label::from_bool(i % 2 == 0),
                    i * 10,
                )
                .unwrap()
            })
            .collect();
        LabeledDataset {
            epochs,
            rate: 125.0,
            splits: Vec::new(),
        }
    }

    #[test]
    fn dataset_layout() {
        let bytes = encode_dataset(&tiny_dataset()).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12 + len..];
        assert_eq!(payload.len(), 4 * 6 * 4 + 4 + 4 * 8);
        // second value of the first epoch, little-endian f32
        assert_eq!(&payload[4..8], &0.5f32.to_le_bytes());
        assert_eq!(&payload[96..100], &[1, 0, 1, 0]);
        assert_eq!(decode_dataset(&bytes).unwrap(), tiny_dataset());
    }

    #[test]
    fn truncated_and_mislabeled_files_rejected() {
        let bytes = encode_dataset(&tiny_dataset()).unwrap();
        assert!(matches!(
            decode_dataset(&bytes[..bytes.len() - 1]),
            Err(FormatError::PayloadLength { .. })
        ));
        assert!(matches!(decode_raw(&bytes), Err(FormatError::WrongKind { .. })));
        assert!(matches!(
            decode_dataset(b"not a container at all"),
            Err(FormatError::BadMagic)
        ));

        let mut bumped = bytes.clone();
        let key = b"\"format_version\":";
        let at = bumped.windows(key.len()).position(|w| w == key).unwrap() + key.len();
        bumped[at] = b'9';
        assert!(matches!(
            decode_dataset(&bumped),
            Err(FormatError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn raw_round_trip() {
        let rec = RawRecording::new(
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            250.0,
            vec![(0, Label::Negative), (2, Label::Positive)],
        )
        .unwrap();
        assert_eq!(decode_raw(&encode_raw(&rec)).unwrap(), rec);
    }
}
