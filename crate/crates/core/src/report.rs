//! Evaluation reports: a structured JSON document and a flat CSV table of
//! model size against balanced accuracy and ITR.
//!
//! All metrics are written as fixed-precision decimals so that identical
//! runs produce identical bytes.

use serde_json::{json, Map, Number, Value};

use crate::bayes::EvidenceMode;
use crate::config::RunConfig;
use crate::sim::{EvaluationReport, MetricSummary, SplitMetrics};

/// Decimal places for every reported metric.
pub const DECIMALS: usize = 6;

/// Fixed-precision JSON number; non-finite values become `null`.
pub fn fixed(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    // avoid "-0.000000"
    let v = if v == 0.0 { 0.0 } else { v };
    let text = format!("{v:.DECIMALS$}");
    let text = if text.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        text.trim_start_matches('-').to_string()
    } else {
        text
    };
    Value::Number(text.parse::<Number>().expect("formatted float is a JSON number"))
}

/// Which balanced accuracy a row reports for generative evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorColumn {
    Empirical,
    Uniform,
}

impl PriorColumn {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorColumn::Empirical => "empirical",
            PriorColumn::Uniform => "uniform",
        }
    }
}

/// One model line of the report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    /// `logreg`, `gen-lda`, `always-0`, ...
    pub kind: String,
    pub prior: PriorColumn,
    pub evaluation: EvaluationReport,
}

impl ReportRow {
    pub fn balanced_accuracy(&self) -> MetricSummary {
        match self.prior {
            PriorColumn::Empirical => self.evaluation.balanced_accuracy_empirical,
            PriorColumn::Uniform => self.evaluation.balanced_accuracy_uniform,
        }
    }

    /// Mean learned-parameter count over splits.
    pub fn parameter_count(&self) -> f64 {
        let rows = &self.evaluation.rows;
        rows.iter().map(|r| r.parameter_count as f64).sum::<f64>() / rows.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Report<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub rows: Vec<ReportRow>,
    /// Extra header fields (input files, stored model provenance, ...).
    pub inputs: Map<String, Value>,
}

fn summary(s: MetricSummary) -> Value {
    json!({ "mean": fixed(s.mean), "std": fixed(s.std) })
}

fn split_json(r: &SplitMetrics, chance: f64) -> Value {
    json!({
        "split": r.split,
        "balanced_accuracy_empirical": fixed(r.balanced_accuracy_empirical),
        "balanced_accuracy_uniform": fixed(r.balanced_accuracy_uniform),
        "typing_accuracy": fixed(r.typing_accuracy),
        "itr": fixed(r.itr),
        "correct": r.correct,
        "wrong": r.wrong,
        "timeout": r.timeout,
        "parameter_count": r.parameter_count,
        "below_chance": r.typing_accuracy < chance,
    })
}

impl Report<'_> {
    pub fn to_json(&self) -> String {
        let chance = 1.0 / self.config.alphabet_size as f64;
        let config: Map<String, Value> = self
            .config
            .echo()
            .into_iter()
            .map(|(k, v)| (k.to_string(), Value::String(v)))
            .collect();
        let models: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let e = &row.evaluation;
                let below = e.rows.iter().filter(|r| r.typing_accuracy < chance).count();
                json!({
                    "name": row.name,
                    "kind": row.kind,
                    "mode": match e.mode {
                        EvidenceMode::Discriminative => "discriminative",
                        EvidenceMode::Generative => "generative",
                    },
                    "conversion_prior": row.prior.as_str(),
                    "parameter_count": fixed(row.parameter_count()),
                    "balanced_accuracy": summary(row.balanced_accuracy()),
                    "typing_accuracy": summary(e.typing_accuracy),
                    "itr": summary(e.itr),
                    "splits_below_chance": below,
                    "splits": e.rows.iter().map(|r| split_json(r, chance)).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.config.seed,
            "inputs": Value::Object(self.inputs.clone()),
            "config": Value::Object(config),
            "itr_note": "bits per attempted symbol; sub-chance typing accuracy is reported as 0",
            "models": models,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        text
    }

    /// `model,parameter_count,balanced_accuracy_mean,...` with one line per row.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("model,kind,parameter_count,balanced_accuracy_mean,balanced_accuracy_std,itr_mean,itr_std\n");
        for row in &self.rows {
            let ba = row.balanced_accuracy();
            let itr = row.evaluation.itr;
            out.push_str(&format!(
                "{},{},{:.1},{:.d$},{:.d$},{:.d$},{:.d$}\n",
                row.name,
                row.kind,
                row.parameter_count(),
                ba.mean,
                ba.std,
                itr.mean,
                itr.std,
                d = DECIMALS
            ));
        }
        out
    }

    /// Plain-text summary for the terminal.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>10} {:>20} {:>20}\n",
            "model", "params", "balanced accuracy", "ITR (bits/symbol)"
        );
        for row in &self.rows {
            let ba = row.balanced_accuracy();
            let itr = row.evaluation.itr;
            out.push_str(&format!(
                "{:<18} {:>10.1} {:>11.3} ± {:.3} {:>11.3} ± {:.3}\n",
                row.name,
                row.parameter_count(),
                ba.mean,
                ba.std,
                itr.mean,
                itr.std
            ));
        }
        out
    }
}
