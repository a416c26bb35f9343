//! Multi-asset equilibrium: ESG-modified CAPMs with and without score
//! uncertainty.
//!
//! Each agent i holds the demand
//!
//! ```text
//! X_i = (γ_i Σ_M + b_i θ_i Σ_g)⁻¹ (μ_r + b_i μ_g)
//! ```
//!
//! and the market portfolio is the wealth-weighted aggregate
//! `X_M = Σ w_i X_i`. Exact inversion of the aggregation gives
//!
//! ```text
//! μ_r = Γ_MU · X_M − B_MU · μ_g,
//! Γ_MU = (Σ w_i A_i⁻¹)⁻¹,   B_MU = Γ_MU · Σ w_i A_i⁻¹ b_i,
//! A_i  = γ_i Σ_M + b_i θ_i Σ_g.
//! ```
//!
//! With β = Σ_M X_M / σ_M², the pricing decomposition μ_r = β μ_M + α is
//! formed with α := μ_r − β μ_M, which makes X_Mᵀβ = 1 and X_Mᵀα = 0
//! identities. When every θ_i = 0 the aggregates collapse to the scalars
//! γ_M = 1/Σ(w_i/γ_i) and b_M = γ_M Σ(w_i b_i/γ_i), and α equals the
//! taste formula b_M(β μ_g,mkt − μ_g) exactly; that closed form is what
//! the no-uncertainty CAPM reports. For heterogeneous b_i with θ_i > 0
//! the matrix taste B_MU does not commute out of the aggregation, so the
//! taste formula is only the scalar-B limit of the exact residual α (see
//! `alpha_taste_formula_drifts_when_taste_is_a_matrix` in the tests).

use crate::linalg::{self, LinalgError};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapmError {
    #[error("singular system: {0}")]
    SingularSystem(LinalgError),
    #[error("aggregate market portfolio has (near-)zero variance; beta undefined")]
    DegenerateMarket,
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
}

impl From<LinalgError> for CapmError {
    fn from(e: LinalgError) -> Self {
        CapmError::SingularSystem(e)
    }
}

/// Per-asset moments: excess-return means, return covariance, ESG-score
/// means, ESG-score covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetUniverse {
    pub mu_excess: DVector<f64>,
    pub cov_returns: DMatrix<f64>,
    pub mu_esg: DVector<f64>,
    pub cov_esg: DMatrix<f64>,
}

impl AssetUniverse {
    pub fn new(
        mu_excess: DVector<f64>,
        cov_returns: DMatrix<f64>,
        mu_esg: DVector<f64>,
        cov_esg: DMatrix<f64>,
    ) -> Result<Self, CapmError> {
        let n = mu_excess.len();
        if mu_esg.len() != n
            || cov_returns.nrows() != n
            || cov_returns.ncols() != n
            || cov_esg.nrows() != n
            || cov_esg.ncols() != n
        {
            return Err(CapmError::InvalidUniverse("inconsistent dimensions".into()));
        }
        check_symmetric(&cov_returns, "return covariance")?;
        check_symmetric(&cov_esg, "ESG covariance")?;
        if nalgebra::Cholesky::new(cov_returns.clone()).is_none() {
            return Err(CapmError::InvalidUniverse(
                "return covariance must be positive definite".into(),
            ));
        }
        let esg_eigs = nalgebra::SymmetricEigen::new(cov_esg.clone()).eigenvalues;
        if esg_eigs.iter().any(|&v| v < -1e-10) {
            return Err(CapmError::InvalidUniverse(
                "ESG covariance must be positive semidefinite".into(),
            ));
        }
        Ok(AssetUniverse { mu_excess, cov_returns, mu_esg, cov_esg })
    }

    pub fn n_assets(&self) -> usize {
        self.mu_excess.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<(), CapmError> {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(CapmError::InvalidUniverse(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// One agent's wealth share and preferences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agent {
    pub weight: f64,
    pub gamma: f64,
    pub b: f64,
    pub theta: f64,
}

/// Wealth-weighted population; weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPopulation {
    agents: Vec<Agent>,
}

impl AgentPopulation {
    pub fn new(agents: Vec<Agent>) -> Result<Self, CapmError> {
        if agents.is_empty() {
            return Err(CapmError::InvalidPopulation("no agents".into()));
        }
        for (i, a) in agents.iter().enumerate() {
            if !(a.weight >= 0.0) || !(a.gamma > 0.0) || !(a.b > 0.0) || !(a.theta >= 0.0) {
                return Err(CapmError::InvalidPopulation(format!(
                    "agent {i} has out-of-range parameters: {a:?}"
                )));
            }
        }
        let total: f64 = agents.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CapmError::InvalidPopulation(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(AgentPopulation { agents })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }
}

/// Aggregated taste: a scalar when no agent prices ESG uncertainty, a
/// matrix pair otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Taste {
    Scalar { gamma_m: f64, b_m: f64 },
    Matrix { gamma_mu: DMatrix<f64>, b_mu: DMatrix<f64> },
}

/// Equilibrium pricing decomposition μ_r = β μ_M + α.
#[derive(Debug, Clone, PartialEq)]
pub struct CapmResult {
    /// Raw aggregate market portfolio (not renormalized; σ_M² and the
    /// pricing identities are defined through it).
    pub market_portfolio: DVector<f64>,
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    /// X_Mᵀ μ_r.
    pub mu_market: f64,
    /// X_Mᵀ μ_esg.
    pub mu_esg_market: f64,
    /// X_Mᵀ Σ_M X_M.
    pub sigma2_market: f64,
    pub taste: Taste,
}

impl CapmResult {
    /// Market weights rescaled to sum to 1, for reporting only.
    pub fn normalized_market_weights(&self) -> Option<DVector<f64>> {
        let total: f64 = self.market_portfolio.iter().sum();
        if total.abs() < 1e-12 {
            None
        } else {
            Some(&self.market_portfolio / total)
        }
    }
}

/// Mean-variance-with-ESG demand `(γΣ_M + bθΣ_g)⁻¹ (μ_r + b μ_esg)`.
pub fn agent_demand(
    u: &AssetUniverse,
    gamma: f64,
    b: f64,
    theta: f64,
) -> Result<DVector<f64>, CapmError> {
    let a = &u.cov_returns * gamma + &u.cov_esg * (b * theta);
    let rhs = &u.mu_excess + &u.mu_esg * b;
    Ok(linalg::solve_checked(&a, &rhs)?)
}

/// Market-level risk aversion and taste when nobody prices ESG
/// uncertainty: γ_M = 1/Σ(w_i/γ_i), b_M = γ_M · Σ(w_i b_i/γ_i).
pub fn aggregate_no_uncertainty(pop: &AgentPopulation) -> (f64, f64) {
    let inv_gamma: f64 = pop.agents.iter().map(|a| a.weight / a.gamma).sum();
    let gamma_m = 1.0 / inv_gamma;
    let b_m = pop.agents.iter().map(|a| a.weight * a.b / a.gamma).sum::<f64>() * gamma_m;
    (gamma_m, b_m)
}

/// Matrix-valued aggregates for heterogeneous uncertainty pricing:
/// Γ_MU = (Σ w_i A_i⁻¹)⁻¹ and B_MU = Γ_MU Σ w_i A_i⁻¹ b_i.
pub fn aggregate_with_uncertainty(
    u: &AssetUniverse,
    pop: &AgentPopulation,
) -> Result<(DMatrix<f64>, DMatrix<f64>), CapmError> {
    let n = u.n_assets();
    let mut s = DMatrix::zeros(n, n);
    let mut s_b = DMatrix::zeros(n, n);
    for a in &pop.agents {
        let a_i = &u.cov_returns * a.gamma + &u.cov_esg * (a.b * a.theta);
        let inv = linalg::inverse_checked(&a_i)?;
        s += &inv * a.weight;
        s_b += &inv * (a.weight * a.b);
    }
    let gamma_mu = linalg::inverse_checked(&s)?;
    let b_mu = &gamma_mu * s_b;
    Ok((gamma_mu, b_mu))
}

/// Per-asset alpha driver: `taste · (beta · market_esg − own_esg)`.
/// A stock whose ESG score sits below its β-scaled market score earns a
/// positive alpha; above it, a negative one.
pub fn esg_alpha(beta: f64, market_esg: f64, own_esg: f64, taste: f64) -> f64 {
    taste * (beta * market_esg - own_esg)
}

fn build_result(
    u: &AssetUniverse,
    market_portfolio: DVector<f64>,
    alpha_from: impl FnOnce(&DVector<f64>, f64, f64) -> DVector<f64>,
    taste: Taste,
) -> Result<CapmResult, CapmError> {
    let sigma2_market = (&market_portfolio.transpose() * &u.cov_returns * &market_portfolio)[0];
    if !(sigma2_market > 1e-16) {
        return Err(CapmError::DegenerateMarket);
    }
    let beta = &u.cov_returns * &market_portfolio / sigma2_market;
    let mu_market = market_portfolio.dot(&u.mu_excess);
    let mu_esg_market = market_portfolio.dot(&u.mu_esg);
    let alpha = alpha_from(&beta, mu_market, mu_esg_market);
    Ok(CapmResult {
        market_portfolio,
        beta,
        alpha,
        mu_market,
        mu_esg_market,
        sigma2_market,
        taste,
    })
}

/// ESG-modified CAPM with every θ_i forced to zero. α uses the exact
/// closed form b_M(β μ_g,mkt − μ_esg), which reconstructs μ_r.
pub fn capm_no_uncertainty(
    u: &AssetUniverse,
    pop: &AgentPopulation,
) -> Result<CapmResult, CapmError> {
    let mut x_m = DVector::zeros(u.n_assets());
    for a in &pop.agents {
        x_m += agent_demand(u, a.gamma, a.b, 0.0)? * a.weight;
    }
    let (gamma_m, b_m) = aggregate_no_uncertainty(pop);
    build_result(
        u,
        x_m,
        |beta, _mu_m, mu_g| {
            DVector::from_iterator(
                u.n_assets(),
                beta.iter()
                    .zip(u.mu_esg.iter())
                    .map(|(&bi, &gi)| esg_alpha(bi, mu_g, gi, b_m)),
            )
        },
        Taste::Scalar { gamma_m, b_m },
    )
}

/// ESG-modified CAPM with the full uncertainty-aware demands. α is the
/// equilibrium residual μ_r − β μ_M, the quantity the taste matrix
/// B_MU represents; see the module docs for why the two coincide only
/// when B_MU is scalar.
pub fn capm_with_uncertainty(
    u: &AssetUniverse,
    pop: &AgentPopulation,
) -> Result<CapmResult, CapmError> {
    let mut x_m = DVector::zeros(u.n_assets());
    for a in &pop.agents {
        x_m += agent_demand(u, a.gamma, a.b, a.theta)? * a.weight;
    }
    let (gamma_mu, b_mu) = aggregate_with_uncertainty(u, pop)?;
    build_result(
        u,
        x_m,
        |beta, mu_m, _mu_g| &u.mu_excess - beta * mu_m,
        Taste::Matrix { gamma_mu, b_mu },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmv::{self, InvestorKind, InvestorProfile, MarketParams};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn single_agent(gamma: f64, b: f64, theta: f64) -> AgentPopulation {
        AgentPopulation::new(vec![Agent { weight: 1.0, gamma, b, theta }]).unwrap()
    }

    fn universe_2x2() -> AssetUniverse {
        AssetUniverse::new(
            DVector::from_vec(vec![0.1, 0.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.0, 0.1]),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn demand_examples() {
        let u = universe_2x2();
        // theta=0, b=0-ish is not representable (b > 0 in populations),
        // but the demand function itself takes raw parameters.
        let x = agent_demand(&u, 2.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(x[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-12);

        // Diagonal example: X = 0.5 * (mu_r + mu_esg).
        let x = agent_demand(&u, 1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(x[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(x[1], 0.05, epsilon = 1e-12);
    }

    fn scalar_universe(m: &MarketParams) -> AssetUniverse {
        AssetUniverse::new(
            DVector::from_element(1, m.premium()),
            DMatrix::from_element(1, 1, m.sigma2_m),
            DVector::from_element(1, m.mu_g),
            DMatrix::from_element(1, 1, m.sigma2_g),
        )
        .unwrap()
    }

    #[test]
    fn scalar_demand_equals_dmv_weight() {
        let mut rng = crate::rng::substream(23, "capm-scalar");
        for _ in 0..1000 {
            let m = MarketParams::new(
                0.0,
                rng.random_range(0.005..0.1),
                rng.random_range(0.01..0.2),
                rng.random_range(-0.2..0.3),
                rng.random_range(0.0005..0.1),
            )
            .unwrap();
            let gamma = rng.random_range(0.5..6.0);
            let b = rng.random_range(0.1..2.5);
            let theta = rng.random_range(0.0..3.0);
            let u = scalar_universe(&m);
            let x = agent_demand(&u, gamma, b, theta).unwrap();
            let p = InvestorProfile::new(InvestorKind::TypeU, gamma, b, theta).unwrap();
            let w = dmv::dmv_optimal_weight(&m, &p).unwrap().w;
            assert!((x[0] - w).abs() <= 1e-12, "demand {} vs dmv {}", x[0], w);
        }
    }

    #[test]
    fn aggregation_examples() {
        let pop = AgentPopulation::new(vec![
            Agent { weight: 0.5, gamma: 2.0, b: 1.0, theta: 0.0 },
            Agent { weight: 0.5, gamma: 4.0, b: 1.0, theta: 0.0 },
        ])
        .unwrap();
        let (gamma_m, b_m) = aggregate_no_uncertainty(&pop);
        assert_relative_eq!(gamma_m, 1.0 / 0.375, epsilon = 1e-12);
        assert_relative_eq!(b_m, 1.0, epsilon = 1e-12);

        // Homogeneous population: aggregates equal the shared parameters.
        let pop = AgentPopulation::new(vec![
            Agent { weight: 0.3, gamma: 3.0, b: 1.4, theta: 0.0 },
            Agent { weight: 0.7, gamma: 3.0, b: 1.4, theta: 0.0 },
        ])
        .unwrap();
        let (gamma_m, b_m) = aggregate_no_uncertainty(&pop);
        assert_relative_eq!(gamma_m, 3.0, epsilon = 1e-12);
        assert_relative_eq!(b_m, 1.4, epsilon = 1e-12);
    }

    fn random_universe(rng: &mut impl Rng, n: usize) -> AssetUniverse {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cov_returns = (&raw * raw.transpose()) * (0.01 / n as f64)
            + DMatrix::identity(n, n) * 0.005;
        let raw_g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        // Occasionally exactly singular ESG covariance (rank deficiency is allowed).
        let cov_esg = if rng.random_bool(0.2) {
            let col = DVector::<f64>::from_fn(n, |i, _| raw_g[(i, 0)]);
            (&col * col.transpose()) * 0.1
        } else {
            (&raw_g * raw_g.transpose()) * (0.05 / n as f64)
        };
        AssetUniverse::new(
            DVector::from_fn(n, |_, _| rng.random_range(0.01..0.12)),
            cov_returns,
            DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5)),
            cov_esg,
        )
        .unwrap()
    }

    fn random_population(rng: &mut impl Rng) -> AgentPopulation {
        let k = rng.random_range(1..=5);
        let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        // Force exact sum to 1 against rounding.
        let correction: f64 = 1.0 - weights.iter().sum::<f64>();
        weights[0] += correction;
        AgentPopulation::new(
            weights
                .into_iter()
                .map(|w| Agent {
                    weight: w,
                    gamma: rng.random_range(1.0..5.0),
                    b: rng.random_range(0.2..2.0),
                    theta: rng.random_range(0.0..2.0),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn aggregates_collapse_correctly() {
        let mut rng = crate::rng::substream(29, "capm-agg");
        for _ in 0..50 {
            let n = rng.random_range(2..=6);
            let u = random_universe(&mut rng, n);

            // All theta = 0: Gamma = gamma_M * Sigma_M, B = b_M * I.
            let mut pop_agents = random_population(&mut rng).agents().to_vec();
            for a in pop_agents.iter_mut() {
                a.theta = 0.0;
            }
            let pop = AgentPopulation::new(pop_agents).unwrap();
            let (gamma_mu, b_mu) = aggregate_with_uncertainty(&u, &pop).unwrap();
            let (gamma_m, b_m) = aggregate_no_uncertainty(&pop);
            assert_relative_eq!(gamma_mu, &u.cov_returns * gamma_m, epsilon = 1e-8);
            assert_relative_eq!(b_mu, DMatrix::identity(n, n) * b_m, epsilon = 1e-8);

            // Single agent: Gamma = A, B = b * I.
            let agent = Agent { weight: 1.0, gamma: 2.5, b: 0.8, theta: 1.3 };
            let pop1 = AgentPopulation::new(vec![agent]).unwrap();
            let (g1, b1) = aggregate_with_uncertainty(&u, &pop1).unwrap();
            let a1 = &u.cov_returns * agent.gamma + &u.cov_esg * (agent.b * agent.theta);
            assert_relative_eq!(g1, a1, epsilon = 1e-8);
            assert_relative_eq!(b1, DMatrix::identity(n, n) * agent.b, epsilon = 1e-8);

            // Homogeneous b: B = b * I even with heterogeneous theta.
            let mut pop_agents = random_population(&mut rng).agents().to_vec();
            for a in pop_agents.iter_mut() {
                a.b = 1.1;
            }
            let pop_b = AgentPopulation::new(pop_agents).unwrap();
            let (_, b_hom) = aggregate_with_uncertainty(&u, &pop_b).unwrap();
            assert_relative_eq!(b_hom, DMatrix::identity(n, n) * 1.1, epsilon = 1e-8);
        }
    }

    #[test]
    fn paper_alpha_anchor() {
        assert_eq!(esg_alpha(1.5, 2.0, 2.5, 1.0), 0.5);
        assert_eq!(esg_alpha(1.5, 2.0, 3.5, 1.0), -0.5);
        assert!(esg_alpha(1.5, 2.0, 3.01, 1.0) < 0.0);
    }

    #[test]
    fn capm_identities_and_round_trip() {
        let mut rng = crate::rng::substream(31, "capm-roundtrip");
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let u = random_universe(&mut rng, n);
            let pop = random_population(&mut rng);

            for result in [
                capm_no_uncertainty(&u, &pop).unwrap(),
                capm_with_uncertainty(&u, &pop).unwrap(),
            ] {
                let xm = &result.market_portfolio;
                assert!((xm.dot(&result.beta) - 1.0).abs() <= 1e-9);
                assert!(xm.dot(&result.alpha).abs() <= 1e-9 * result.mu_market.abs().max(1.0));
                let rebuilt = &result.beta * result.mu_market + &result.alpha;
                let rel = (&rebuilt - &u.mu_excess).norm() / u.mu_excess.norm();
                assert!(rel <= 1e-8, "round-trip error {rel}");
            }
        }
    }

    #[test]
    fn capm_u_collapses_to_capm_n_as_theta_vanishes() {
        let mut rng = crate::rng::substream(37, "capm-collapse");
        let n = 4;
        let u = random_universe(&mut rng, n);
        let base = random_population(&mut rng);
        let alpha_n = capm_no_uncertainty(&u, &base).unwrap().alpha;
        let mut dists = Vec::new();
        for scale in [1.0, 0.1, 0.01, 0.001] {
            let scaled = AgentPopulation::new(
                base.agents()
                    .iter()
                    .map(|a| Agent { theta: scale, ..*a })
                    .collect(),
            )
            .unwrap();
            let alpha_u = capm_with_uncertainty(&u, &scaled).unwrap().alpha;
            dists.push((&alpha_u - &alpha_n).amax());
        }
        for pair in dists.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "not monotone: {dists:?}");
        }
        // Distance shrinks roughly linearly in theta.
        assert!(dists[3] <= dists[0] * 1e-2, "collapse too slow: {dists:?}");
    }

    #[test]
    fn capm_u_with_zero_theta_matches_capm_n_exactly() {
        let mut rng = crate::rng::substream(41, "capm-theta0");
        let u = random_universe(&mut rng, 5);
        let mut agents = random_population(&mut rng).agents().to_vec();
        for a in agents.iter_mut() {
            a.theta = 0.0;
        }
        let pop = AgentPopulation::new(agents).unwrap();
        let rn = capm_no_uncertainty(&u, &pop).unwrap();
        let ru = capm_with_uncertainty(&u, &pop).unwrap();
        assert_relative_eq!(rn.alpha, ru.alpha, epsilon = 1e-9);
        assert_relative_eq!(rn.beta, ru.beta, epsilon = 1e-9);
    }

    #[test]
    fn single_asset_alpha_is_zero() {
        let m = MarketParams::new(0.0, 0.06, 0.04, 0.02, 0.01).unwrap();
        let u = scalar_universe(&m);
        let pop = single_agent(2.0, 1.0, 1.0);
        let r = capm_with_uncertainty(&u, &pop).unwrap();
        assert!(r.alpha[0].abs() <= 1e-12);
        let rn = capm_no_uncertainty(&u, &pop).unwrap();
        assert!(rn.alpha[0].abs() <= 1e-12);
    }

    /// The taste-formula alpha B_MU(β μ_g − μ_esg) equals the equilibrium
    /// residual only when B_MU is (numerically) a scalar matrix. This
    /// pins down why the uncertainty CAPM reports the residual.
    #[test]
    fn alpha_taste_formula_drifts_when_taste_is_a_matrix() {
        let u = AssetUniverse::new(
            DVector::from_vec(vec![0.08, 0.05]),
            DMatrix::from_row_slice(2, 2, &[0.04, 0.005, 0.005, 0.02]),
            DVector::from_vec(vec![0.4, -0.2]),
            DMatrix::from_row_slice(2, 2, &[0.09, 0.0, 0.0, 0.001]),
        )
        .unwrap();
        // Heterogeneous b with nonzero theta: B_MU is genuinely a matrix.
        let pop = AgentPopulation::new(vec![
            Agent { weight: 0.5, gamma: 2.0, b: 0.3, theta: 2.0 },
            Agent { weight: 0.5, gamma: 3.0, b: 1.8, theta: 1.0 },
        ])
        .unwrap();
        let r = capm_with_uncertainty(&u, &pop).unwrap();
        let Taste::Matrix { b_mu, .. } = &r.taste else { panic!("expected matrix taste") };
        let off_diag = (b_mu[(0, 1)].abs() + b_mu[(1, 0)].abs()).max((b_mu[(0, 0)] - b_mu[(1, 1)]).abs());
        assert!(off_diag > 1e-6, "taste should be non-scalar here");
        let formula = b_mu * (&r.beta * r.mu_esg_market - &u.mu_esg);
        // The exact residual reconstructs mu_r; the formula alpha does not.
        let exact = (&r.beta * r.mu_market + &r.alpha - &u.mu_excess).norm();
        let drift = (&r.beta * r.mu_market + &formula - &u.mu_excess).norm();
        assert!(exact <= 1e-12);
        assert!(drift > 1e-6, "formula drift unexpectedly small: {drift}");
    }

    #[test]
    fn reported_taste_matches_standalone_aggregation() {
        let mut rng = crate::rng::substream(43, "capm-taste");
        let u = random_universe(&mut rng, 3);
        let pop = random_population(&mut rng);
        let (gamma_mu, b_mu) = aggregate_with_uncertainty(&u, &pop).unwrap();
        let r = capm_with_uncertainty(&u, &pop).unwrap();
        let Taste::Matrix { gamma_mu: g2, b_mu: b2 } = r.taste else {
            panic!("expected matrix taste")
        };
        assert_eq!(gamma_mu, g2);
        assert_eq!(b_mu, b2);
    }

    #[test]
    fn singular_population_system_is_reported() {
        // gamma scaled so the combined matrix is near-singular: make the
        // return covariance tiny and ESG covariance rank-1 opposing it.
        let u = AssetUniverse::new(
            DVector::from_vec(vec![0.05, 0.05]),
            DMatrix::from_row_slice(2, 2, &[1e-30, 0.0, 0.0, 1e-30]),
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::zeros(2, 2),
        );
        // Cholesky of a 1e-30-scaled identity still succeeds, so build it;
        // the solve itself must then trip the conditioning gate... it is
        // actually well-conditioned (scaled identity), so use a genuinely
        // rank-deficient combination instead.
        drop(u);
        let col = DVector::from_vec(vec![1.0, 1.0]);
        let cov_esg = &col * col.transpose();
        let u = AssetUniverse::new(
            DVector::from_vec(vec![0.05, 0.05]),
            DMatrix::identity(2, 2) * 1e-16,
            DVector::from_vec(vec![0.1, 0.1]),
            cov_esg,
        )
        .unwrap();
        // gamma*Sigma_M + b*theta*Sigma_g ~ rank-1 for tiny gamma-part.
        let out = agent_demand(&u, 1e-4, 1.0, 1.0);
        assert!(matches!(out, Err(CapmError::SingularSystem(_))));
    }
}
