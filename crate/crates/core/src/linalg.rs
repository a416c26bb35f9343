//! Small dense linear-algebra helpers shared across modules.
//!
//! All solves go through [`solve_checked`], which rejects ill-conditioned
//! systems (reciprocal-condition proxy below 1e-12) and verifies the
//! residual `‖Ax − b‖ ≤ 1e-8 ‖b‖` instead of silently returning garbage.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Reciprocal-condition proxy below which a system is treated as singular.
pub const RCOND_FLOOR: f64 = 1e-12;

/// Relative residual bound every solve must satisfy.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular or near-singular system (rcond proxy {rcond:.3e})")]
    Singular { rcond: f64 },
    #[error("solve residual {residual:.3e} exceeds {tol:.3e} * ||b||")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Reciprocal-condition proxy from an LU factorization: min|U_ii| / max|U_ii|.
fn rcond_proxy(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows().min(u.ncols()))
        .map(|i| u[(i, i)].abs())
        .collect();
    let max = diag.iter().cloned().fold(0.0_f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 { 0.0 } else { min / max }
}

/// Solve `A x = b` by LU with a conditioning gate and a residual check.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(LinalgError::Shape(format!(
            "A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let rcond = rcond_proxy(&lu);
    if rcond < RCOND_FLOOR {
        return Err(LinalgError::Singular { rcond });
    }
    let x = lu
        .solve(b)
        .ok_or(LinalgError::Singular { rcond })?;
    let residual = (a * &x - b).norm();
    let bound = RESIDUAL_TOL * b.norm().max(f64::MIN_POSITIVE);
    if residual > bound {
        return Err(LinalgError::ResidualTooLarge {
            residual,
            tol: RESIDUAL_TOL,
        });
    }
    Ok(x)
}

/// Invert `A` by solving against the identity, with the same checks as
/// [`solve_checked`].
pub fn inverse_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::Shape(format!("A is {}x{}", a.nrows(), a.ncols())));
    }
    let lu = a.clone().lu();
    let rcond = rcond_proxy(&lu);
    if rcond < RCOND_FLOOR {
        return Err(LinalgError::Singular { rcond });
    }
    let mut inv = DMatrix::identity(n, n);
    if !lu.solve_mut(&mut inv) {
        return Err(LinalgError::Singular { rcond });
    }
    // Residual check column-by-column against the identity.
    let residual = (a * &inv - DMatrix::identity(n, n)).norm();
    let bound = RESIDUAL_TOL * (n as f64).sqrt().max(1.0);
    if residual > bound {
        return Err(LinalgError::ResidualTooLarge {
            residual,
            tol: RESIDUAL_TOL,
        });
    }
    Ok(inv)
}

/// Largest eigenvalue and its unit-norm eigenvector of a symmetric matrix.
///
/// The eigenvector sign is oriented so its component sum is nonnegative;
/// an exactly-zero sum falls back to a nonnegative first component.
pub fn dominant_eigenpair(sym: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut v: DVector<f64> = eig.eigenvectors.column(best).into();
    v /= v.norm();
    let sum: f64 = v.iter().sum();
    if sum < 0.0 || (sum == 0.0 && v[0] < 0.0) {
        v = -v;
    }
    (eig.eigenvalues[best], v)
}

/// Outcome of [`nearest_psd_correlation`].
#[derive(Debug, Clone)]
pub struct PsdRepair {
    pub matrix: DMatrix<f64>,
    /// Largest absolute entry change the repair introduced.
    pub max_abs_change: f64,
    /// Whether any eigenvalue actually had to be clipped.
    pub clipped: bool,
}

/// Repair a correlation matrix to positive semidefiniteness by eigenvalue
/// clipping, then restore the unit diagonal.
///
/// `floor` is the smallest eigenvalue the output is allowed to have; a
/// strictly positive floor makes the result safe for Cholesky.
pub fn nearest_psd_correlation(target: &DMatrix<f64>, floor: f64) -> PsdRepair {
    let sym = (target + target.transpose()) * 0.5;
    let mut eig = nalgebra::SymmetricEigen::new(sym);
    let mut clipped = false;
    for v in eig.eigenvalues.iter_mut() {
        if *v < floor {
            *v = floor;
            clipped = true;
        }
    }
    let mut repaired = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues)
        * eig.eigenvectors.transpose();
    // Re-unitize the diagonal: D^{-1/2} M D^{-1/2}.
    let n = repaired.nrows();
    let scale: Vec<f64> = (0..n).map(|i| repaired[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            repaired[(i, j)] /= scale[i] * scale[j];
        }
    }
    for i in 0..n {
        repaired[(i, i)] = 1.0;
    }
    let max_abs_change = (&repaired - target).abs().max();
    PsdRepair {
        matrix: repaired,
        max_abs_change,
        clipped,
    }
}

/// A factor `L` with `L Lᵀ ≈ A` for symmetric positive semidefinite `A`.
///
/// Uses Cholesky when `A` is definite and falls back to a spectral square
/// root with negative eigenvalues clipped to zero, so exactly-singular
/// covariances (including the zero matrix) are accepted.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = nalgebra::Cholesky::new(a.clone()) {
        return chol.l();
    }
    let sym = (a + a.transpose()) * 0.5;
    let mut eig = nalgebra::SymmetricEigen::new(sym);
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)
}

/// Sample mean of a slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n−1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
