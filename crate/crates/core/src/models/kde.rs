//! One-dimensional Gaussian kernel density estimate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::bayes::log_sum_exp;

/// Log-densities are clamped from below at this value.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeDensity {
    pub scores: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeDensity {
    pub fn log_density(&self, x: f64) -> f64 {
        kde_log_eval(self, x)
    }

    pub fn density(&self, x: f64) -> f64 {
        kde_eval(self, x)
    }
}

pub fn fit_kde(scores: &[f64], bandwidth: f64) -> Result<KdeDensity, ModelError> {
    if scores.is_empty() {
        return Err(ModelError::EmptyInput("KDE training scores"));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(ModelError::InvalidParameter(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ModelError::Numerical("non-finite KDE training score".into()));
    }
    Ok(KdeDensity {
        scores: scores.to_vec(),
        bandwidth,
    })
}

/// `ln( mean_i N(x; s_i, h^2) )`, floored at [`LOG_DENSITY_FLOOR`].
pub fn kde_log_eval(density: &KdeDensity, x: f64) -> f64 {
    let h = density.bandwidth;
    let terms: Vec<f64> = density
        .scores
        .iter()
        .map(|s| {
            let u = (x - s) / h;
            -0.5 * u * u
        })
        .collect();
    let log_norm = (density.scores.len() as f64).ln() + h.ln() + 0.5 * (2.0 * PI).ln();
    let v = log_sum_exp(&terms) - log_norm;
    if v.is_nan() || v < LOG_DENSITY_FLOOR {
        LOG_DENSITY_FLOOR
    } else {
        v
    }
}

pub fn kde_eval(density: &KdeDensity, x: f64) -> f64 {
    kde_log_eval(density, x).exp()
}
