//! Double mean-variance (DMV) investor over one risky asset.
//!
//! Utility adds a taste-weighted ESG mean-variance term to the usual
//! financial one:
//!
//! ```text
//! U(w) = w·μ_M + (1−w)·μ_f − (γ/2)·w²σ_M²  +  b·( w·μ_g − (θ/2)·w²σ_g² )
//! ```
//!
//! with risk aversion γ, ESG-uncertainty aversion θ, and taste b > 0
//! trading pecuniary against non-pecuniary return. The first-order
//! condition gives the closed-form optimum
//!
//! ```text
//! w* = (μ_M − μ_f + b·μ_g) / (γσ_M² + bθσ_g²)
//! ```
//!
//! which splits into three interpretable terms: an ESG-indifferent
//! benchmark, an ESG-return tilt, and an ESG-uncertainty drag.
//!
//! Three investor types: **I** ignores ESG (b := 0), **N** prices the
//! ESG mean but not its variance (θ := 0), **U** prices both. The
//! `type_premiums` / `premium_gaps` / `variance_gaps` functions compare
//! the three types at the market-clearing weight.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmvError {
    #[error("effective denominator gamma*sigma_M^2 + b*theta*sigma_g^2 = {0} is not positive")]
    DegenerateDenominator(f64),
    #[error("portfolio variance is zero; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Single-period market and ESG-factor moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Risk-free rate per period.
    pub mu_f: f64,
    /// Expected market excess return per period.
    pub mu_m: f64,
    /// Market return variance per period².
    pub sigma2_m: f64,
    /// Expected market ESG score (standardized units).
    pub mu_g: f64,
    /// ESG-score variance.
    pub sigma2_g: f64,
}

impl MarketParams {
    pub fn new(
        mu_f: f64,
        mu_m: f64,
        sigma2_m: f64,
        mu_g: f64,
        sigma2_g: f64,
    ) -> Result<Self, DmvError> {
        if !(sigma2_m > 0.0) {
            return Err(DmvError::InvalidParameter(format!(
                "sigma2_m must be > 0, got {sigma2_m}"
            )));
        }
        if !(sigma2_g >= 0.0) {
            return Err(DmvError::InvalidParameter(format!(
                "sigma2_g must be >= 0, got {sigma2_g}"
            )));
        }
        Ok(MarketParams { mu_f, mu_m, sigma2_m, mu_g, sigma2_g })
    }

    /// Market risk premium μ_M − μ_f as used by the closed forms.
    pub fn premium(&self) -> f64 {
        self.mu_m - self.mu_f
    }
}

/// ESG stance of an investor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvestorKind {
    /// Indifferent to ESG.
    TypeI,
    /// ESG-preferring, ignores score uncertainty.
    TypeN,
    /// ESG-preferring, penalizes score uncertainty.
    TypeU,
}

impl InvestorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "TYPE-I" | "TYPEI" => Some(Self::TypeI),
            "N" | "TYPE-N" | "TYPEN" => Some(Self::TypeN),
            "U" | "TYPE-U" | "TYPEU" => Some(Self::TypeU),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::TypeI => "I",
            Self::TypeN => "N",
            Self::TypeU => "U",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvestorProfile {
    pub kind: InvestorKind,
    /// Risk aversion, > 0.
    pub gamma: f64,
    /// ESG-uncertainty aversion, ≥ 0. Ignored for types I and N.
    pub theta: f64,
    /// Taste for non-pecuniary return, > 0. Ignored for type I.
    pub b: f64,
}

impl InvestorProfile {
    pub fn new(kind: InvestorKind, gamma: f64, b: f64, theta: f64) -> Result<Self, DmvError> {
        if !(gamma > 0.0) {
            return Err(DmvError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        if !(b > 0.0) {
            return Err(DmvError::InvalidParameter(format!("b must be > 0, got {b}")));
        }
        if !(theta >= 0.0) {
            return Err(DmvError::InvalidParameter(format!("theta must be >= 0, got {theta}")));
        }
        Ok(InvestorProfile { kind, gamma, theta, b })
    }

    /// Taste actually applied: type I drops the ESG term entirely.
    pub fn effective_b(&self) -> f64 {
        match self.kind {
            InvestorKind::TypeI => 0.0,
            _ => self.b,
        }
    }

    /// Uncertainty aversion actually applied: only type U keeps θ.
    pub fn effective_theta(&self) -> f64 {
        match self.kind {
            InvestorKind::TypeU => self.theta,
            _ => 0.0,
        }
    }
}

/// Optimal weight with its decomposition and evaluated statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmvSolution {
    /// Optimal risky weight (unconstrained; may exceed 1 or go negative).
    pub w: f64,
    /// ESG-indifferent benchmark term (μ_M − μ_f)/(γσ_M²).
    pub term_benchmark: f64,
    /// ESG-return tilt b·μ_g/(γσ_M²).
    pub term_esg_return: f64,
    /// ESG-uncertainty drag; subtracted from the first two terms.
    pub term_esg_uncertainty: f64,
    /// Expected portfolio return net of the risk-free rate, w·μ_M.
    pub excess_return: f64,
    /// Portfolio return variance w²σ_M².
    pub variance: f64,
    /// excess_return/√variance; `None` when the variance is zero.
    pub sharpe: Option<f64>,
}

impl DmvSolution {
    pub fn try_sharpe(&self) -> Result<f64, DmvError> {
        self.sharpe.ok_or(DmvError::ZeroVariance)
    }
}

/// DMV utility at weight `w`. The ESG block is dropped for type I and
/// its variance penalty is dropped for type N.
pub fn dmv_objective(w: f64, m: &MarketParams, p: &InvestorProfile) -> f64 {
    let b = p.effective_b();
    let theta = p.effective_theta();
    w * m.mu_m + (1.0 - w) * m.mu_f - 0.5 * p.gamma * w * w * m.sigma2_m
        + b * (w * m.mu_g - 0.5 * theta * w * w * m.sigma2_g)
}

/// Closed-form maximizer of [`dmv_objective`] with its three-term
/// decomposition and evaluated portfolio statistics.
pub fn dmv_optimal_weight(m: &MarketParams, p: &InvestorProfile) -> Result<DmvSolution, DmvError> {
    let b = p.effective_b();
    let theta = p.effective_theta();
    let denom = p.gamma * m.sigma2_m + b * theta * m.sigma2_g;
    if !(denom > 0.0) {
        return Err(DmvError::DegenerateDenominator(denom));
    }
    let premium = m.premium();
    let w = (premium + b * m.mu_g) / denom;

    let base = p.gamma * m.sigma2_m;
    let term_benchmark = premium / base;
    let term_esg_return = b * m.mu_g / base;
    let term_esg_uncertainty =
        (premium + b * m.mu_g) / base * (b * theta * m.sigma2_g / denom);

    let excess_return = w * m.mu_m;
    let variance = w * w * m.sigma2_m;
    let sharpe = if variance > 0.0 {
        Some(excess_return / variance.sqrt())
    } else {
        None
    };

    Ok(DmvSolution {
        w,
        term_benchmark,
        term_esg_return,
        term_esg_uncertainty,
        excess_return,
        variance,
        sharpe,
    })
}

/// Market-clearing weights for the three investor types under shared
/// (γ, b, θ): type I drops b, type N drops θ, type U keeps both.
pub fn type_weights(
    m: &MarketParams,
    gamma: f64,
    b: f64,
    theta: f64,
) -> Result<(f64, f64, f64), DmvError> {
    let w = |kind| {
        dmv_optimal_weight(m, &InvestorProfile { kind, gamma, b, theta }).map(|s| s.w)
    };
    Ok((
        w(InvestorKind::TypeI)?,
        w(InvestorKind::TypeN)?,
        w(InvestorKind::TypeU)?,
    ))
}

/// Excess returns over μ_f demanded by each type at full market weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypePremiums {
    /// γσ_M²
    pub type_i: f64,
    /// γσ_M² − bμ_g
    pub type_n: f64,
    /// γσ_M² + bθσ_g² − bμ_g
    pub type_u: f64,
}

pub fn type_premiums(m: &MarketParams, gamma: f64, b: f64, theta: f64) -> TypePremiums {
    let base = gamma * m.sigma2_m;
    TypePremiums {
        type_i: base,
        type_n: base - b * m.mu_g,
        type_u: base + b * theta * m.sigma2_g - b * m.mu_g,
    }
}

/// Pairwise differences of the type premiums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumGaps {
    /// −bμ_g: negative whenever μ_g > 0.
    pub n_minus_i: f64,
    /// bθσ_g²: nonnegative.
    pub u_minus_n: f64,
    /// b(θσ_g² − μ_g): sign indeterminate.
    pub u_minus_i: f64,
}

pub fn premium_gaps(m: &MarketParams, _gamma: f64, b: f64, theta: f64) -> PremiumGaps {
    PremiumGaps {
        n_minus_i: -b * m.mu_g,
        u_minus_n: b * theta * m.sigma2_g,
        u_minus_i: b * (theta * m.sigma2_g - m.mu_g),
    }
}

/// Pairwise differences of the type portfolio variances, in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGaps {
    /// (2(μ_M−μ_f)bμ_g + b²μ_g²)/(γ²σ_M²)
    pub n_minus_i: f64,
    /// Negative whenever θσ_g² > 0.
    pub u_minus_n: f64,
    pub u_minus_i: f64,
    /// (γσ_M²)²/(γσ_M² + bθσ_g²)², the share of market risk in total
    /// aversion-weighted risk; in (0, 1] and equal to 1 at θσ_g² = 0.
    pub e_g: f64,
}

pub fn variance_gaps(m: &MarketParams, gamma: f64, b: f64, theta: f64) -> VarianceGaps {
    let premium = m.premium();
    let base = gamma * m.sigma2_m;
    let denom = base + b * theta * m.sigma2_g;
    let e_g = (base / denom).powi(2);
    let cross = 2.0 * premium * b * m.mu_g + (b * m.mu_g).powi(2);
    let n_minus_i = cross / (gamma * gamma * m.sigma2_m);
    let u_minus_n = -(premium + b * m.mu_g).powi(2) / (gamma * gamma * m.sigma2_m)
        * (2.0 * base * b * theta * m.sigma2_g + (b * theta * m.sigma2_g).powi(2))
        / (denom * denom);
    let u_minus_i = (premium * premium * (e_g - 1.0) + cross * e_g)
        / (gamma * gamma * m.sigma2_m);
    VarianceGaps { n_minus_i, u_minus_n, u_minus_i, e_g }
}

/// Each type's portfolio variance w²σ_M² computed directly from its
/// weight; the brute-force counterpart of [`variance_gaps`].
pub fn type_variances(
    m: &MarketParams,
    gamma: f64,
    b: f64,
    theta: f64,
) -> Result<(f64, f64, f64), DmvError> {
    let (wi, wn, wu) = type_weights(m, gamma, b, theta)?;
    Ok((
        wi * wi * m.sigma2_m,
        wn * wn * m.sigma2_m,
        wu * wu * m.sigma2_m,
    ))
}

/// Mean-variance certainty equivalent `mean − (γ/2)·variance`, the
/// quadratic approximation the whole model is built on.
pub fn mv_certainty_equivalent(mean: f64, variance: f64, gamma: f64) -> f64 {
    mean - 0.5 * gamma * variance
}
