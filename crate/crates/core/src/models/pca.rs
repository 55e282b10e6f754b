//! Principal component projection retaining a target fraction of variance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `d x r` component matrix, column-major (one component per column).
    pub components: Vec<f64>,
    pub input_dim: usize,
    pub n_components: usize,
    /// Fraction of total variance carried by the retained components.
    pub retained_variance: f64,
    /// All eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaProjection {
    pub fn component(&self, j: usize) -> &[f64] {
        &self.components[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn project(&self, feature: &[f64]) -> Result<Vec<f64>, ModelError> {
        project(self, feature)
    }
}

/// Smallest `r` whose leading eigenvalues reach `fraction` of the total.
pub fn components_for_fraction(eigenvalues_desc: &[f64], fraction: f64) -> usize {
    let total: f64 = eigenvalues_desc.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return 1;
    }
    let mut acc = 0.0;
    for (i, v) in eigenvalues_desc.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= fraction * total {
            return i + 1;
        }
    }
    eigenvalues_desc.len()
}

/// Fit on the rows of `features` (`n x d`, `n >= 2`).
pub fn fit_pca(features: &DMatrix<f64>, variance_fraction: f64) -> Result<PcaProjection, ModelError> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(ModelError::TooFewSamples { needed: 2, got: n });
    }
    if d == 0 {
        return Err(ModelError::DimensionMismatch { expected: 1, got: 0 });
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(ModelError::InvalidParameter(format!(
            "variance fraction must be in (0, 1], got {variance_fraction}"
        )));
    }
    let mean: DVector<f64> = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Numerical("non-finite covariance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    // zero-variance data keeps a single (arbitrary) direction
    let r = components_for_fraction(&eigenvalues, variance_fraction);
    let mut components = Vec::with_capacity(d * r);
    for &i in &order[..r] {
        let v = eig.eigenvectors.column(i);
        // sign convention: largest-magnitude entry positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| x * sign));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let retained = if total > 0.0 {
        eigenvalues[..r].iter().map(|v| v.max(0.0)).sum::<f64>() / total
    } else {
        1.0
    };
    Ok(PcaProjection {
        mean: mean.iter().copied().collect(),
        components,
        input_dim: d,
        n_components: r,
        retained_variance: retained,
        eigenvalues,
    })
}

/// Coordinates of `feature - mean` along the retained components.
pub fn project(proj: &PcaProjection, feature: &[f64]) -> Result<Vec<f64>, ModelError> {
    if feature.len() != proj.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: proj.input_dim,
            got: feature.len(),
        });
    }
    let centered: Vec<f64> = feature.iter().zip(&proj.mean).map(|(x, m)| x - m).collect();
    Ok((0..proj.n_components)
        .map(|j| proj.component(j).iter().zip(&centered).map(|(c, x)| c * x).sum())
        .collect())
}

/// Project every row of `features`.
pub fn project_rows(proj: &PcaProjection, features: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
    if features.ncols() != proj.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: proj.input_dim,
            got: features.ncols(),
        });
    }
    let mut centered = features.clone();
    let mean = DVector::from_column_slice(&proj.mean);
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let comps = DMatrix::from_column_slice(proj.input_dim, proj.n_components, &proj.components);
    Ok(centered * comps)
}
