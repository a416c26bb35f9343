//! Collapse multiple rater views of a firm into one score.
//!
//! Four strategies, each encoding a different attitude toward rating
//! ambiguity:
//!
//! - **centroid** — arithmetic mean; every view weighted equally.
//! - **median** — robust center; extreme views discarded.
//! - **PCA** — projection onto the first principal component of the
//!   rater covariance; the data decide the weights.
//! - **alpha-maxmin** — `α·min + (1−α)·max`; `α` tunes pessimism
//!   (α = 1) against optimism (α = 0), α = 0.5 is ambiguity-neutral.
//!
//! Centroid, median, and alpha-maxmin operate on the common 0–100 scale;
//! PCA operates on standardized columns and reports scores in z-units,
//! since rescaling a variance-maximizing projection back to 0–100 has no
//! canonical definition.

use crate::linalg;
use crate::ratings::StandardizedPanel;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("row has missing or no scores")]
    IncompleteRow,
    #[error("alpha {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("rater covariance matrix is exactly rank-0")]
    DegenerateCovariance,
    #[error("need {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

/// Ensemble strategy selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnsembleMethod {
    Centroid,
    Median,
    Pca,
    AlphaMaxmin,
}

impl EnsembleMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centroid" | "mean" => Some(Self::Centroid),
            "median" => Some(Self::Median),
            "pca" => Some(Self::Pca),
            "alpha-maxmin" | "alphamaxmin" | "maxmin" => Some(Self::AlphaMaxmin),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Centroid => "centroid",
            Self::Median => "median",
            Self::Pca => "pca",
            Self::AlphaMaxmin => "alpha-maxmin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub method: EnsembleMethod,
    /// Ambiguity attitude for alpha-maxmin; ignored by the other methods.
    pub alpha: f64,
}

impl EnsembleSpec {
    pub fn new(method: EnsembleMethod, alpha: f64) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(EnsembleError::AlphaOutOfRange(alpha));
        }
        Ok(EnsembleSpec { method, alpha })
    }
}

/// PCA-specific diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDiagnostics {
    /// Unit-norm loading per rater, sign oriented so the sum is ≥ 0.
    pub loadings: Vec<f64>,
    /// Share of total rater variance the first component captures.
    pub explained_variance_ratio: f64,
}

/// Per-firm ensemble scores plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// (firm, score) for every retained firm, in panel order.
    pub scores: Vec<(String, f64)>,
    /// Firms dropped because one or more raters did not score them.
    pub dropped_firms: usize,
    pub pca: Option<PcaDiagnostics>,
}

fn complete(row: &[Option<f64>]) -> Result<Vec<f64>, EnsembleError> {
    if row.is_empty() || row.iter().any(|c| c.is_none()) {
        return Err(EnsembleError::IncompleteRow);
    }
    Ok(row.iter().map(|c| c.unwrap()).collect())
}

/// Arithmetic mean of a complete row of rater scores.
pub fn centroid(row: &[Option<f64>]) -> Result<f64, EnsembleError> {
    let xs = complete(row)?;
    Ok(linalg::mean(&xs))
}

/// Middle value; for even counts, the mean of the two middle values.
pub fn median(row: &[Option<f64>]) -> Result<f64, EnsembleError> {
    let mut xs = complete(row)?;
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    Ok(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// `alpha·min(row) + (1−alpha)·max(row)`.
pub fn alpha_maxmin(row: &[Option<f64>], alpha: f64) -> Result<f64, EnsembleError> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(EnsembleError::AlphaOutOfRange(alpha));
    }
    let xs = complete(row)?;
    let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(alpha * min + (1.0 - alpha) * max)
}

/// Project each complete firm row onto the first principal component of
/// the rater covariance. Scores stay in standardized (z) units.
pub fn pca_ensemble(panel: &StandardizedPanel) -> Result<EnsembleResult, EnsembleError> {
    let r = panel.n_raters();
    if r < 2 {
        return Err(EnsembleError::InsufficientData {
            what: "raters",
            needed: 2,
            got: r,
        });
    }
    let rows = panel.complete_rows();
    if rows.len() < r + 1 {
        return Err(EnsembleError::InsufficientData {
            what: "complete firms",
            needed: r + 1,
            got: rows.len(),
        });
    }
    let dropped_firms = panel.n_firms() - rows.len();

    // Sample covariance of the rater columns over complete rows.
    let means: Vec<f64> = (0..r)
        .map(|c| linalg::mean(&rows.iter().map(|&f| panel.get(f, c).unwrap()).collect::<Vec<_>>()))
        .collect();
    let mut cov = DMatrix::zeros(r, r);
    for &f in &rows {
        for i in 0..r {
            let di = panel.get(f, i).unwrap() - means[i];
            for j in i..r {
                let dj = panel.get(f, j).unwrap() - means[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = rows.len() as f64 - 1.0;
    for i in 0..r {
        for j in i..r {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Err(EnsembleError::DegenerateCovariance);
    }

    let (lambda, v) = linalg::dominant_eigenpair(&cov);
    let trace: f64 = (0..r).map(|i| cov[(i, i)]).sum();
    let explained_variance_ratio = if trace > 0.0 { lambda / trace } else { 0.0 };

    let scores = rows
        .iter()
        .map(|&f| {
            let x = DVector::from_iterator(r, (0..r).map(|c| panel.get(f, c).unwrap()));
            (panel.firms()[f].clone(), x.dot(&v))
        })
        .collect();

    Ok(EnsembleResult {
        scores,
        dropped_firms,
        pca: Some(PcaDiagnostics {
            loadings: v.iter().cloned().collect(),
            explained_variance_ratio,
        }),
    })
}

/// Apply a row-wise method (centroid, median, alpha-maxmin) across a
/// 0–100 panel, dropping incomplete firms with a diagnostics count.
/// `Pca` is dispatched separately via [`pca_ensemble`] because it needs
/// the standardized panel, not raw rows.
pub fn apply_rowwise(
    panel: &crate::ratings::EsgPanel,
    spec: &EnsembleSpec,
) -> Result<EnsembleResult, EnsembleError> {
    assert!(
        spec.method != EnsembleMethod::Pca,
        "PCA operates on a StandardizedPanel; call pca_ensemble"
    );
    let mut scores = Vec::new();
    let mut dropped = 0usize;
    for f in 0..panel.n_firms() {
        let row = panel.row(f);
        if row.iter().any(|c| c.is_none()) {
            dropped += 1;
            continue;
        }
        let s = match spec.method {
            EnsembleMethod::Centroid => centroid(row)?,
            EnsembleMethod::Median => median(row)?,
            EnsembleMethod::AlphaMaxmin => alpha_maxmin(row, spec.alpha)?,
            EnsembleMethod::Pca => unreachable!(),
        };
        scores.push((panel.firms()[f].clone(), s));
    }
    Ok(EnsembleResult {
        scores,
        dropped_firms: dropped,
        pca: None,
    })
}
