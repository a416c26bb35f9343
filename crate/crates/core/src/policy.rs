//! Portfolio-weight policies: closed-form demand projected to the
//! simplex, and a seeded cross-entropy search for everything else.
//!
//! The cross-entropy method stands in for a trainable deep agent at desk
//! scale: it samples weight vectors from a Gaussian in unconstrained
//! space, maps them through a softmax onto the simplex, refits the
//! sampler to the elite fraction, and keeps the best parameters ever
//! seen. It is deterministic given its seed and never errors on budget
//! exhaustion — it just returns the best found. The optimizer surface is
//! a plain closure over [`PolicyParams`], so a different search (or a
//! future actor-critic) can drop in.

use crate::capm::{self, AssetUniverse, CapmError};
use crate::dmv::InvestorProfile;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("singular system: {0}")]
    SingularSystem(CapmError),
    #[error("weights are off the simplex: {0}")]
    OffSimplex(String),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
}

/// Portfolio weights over n assets plus a trailing cash component;
/// nonnegative, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    weights: Vec<f64>,
}

impl PolicyParams {
    pub fn new(weights: Vec<f64>) -> Result<Self, PolicyError> {
        if weights.is_empty() {
            return Err(PolicyError::OffSimplex("empty weights".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::OffSimplex(format!("sum {sum}")));
        }
        if let Some(w) = weights.iter().find(|&&w| w < -1e-9 || !w.is_finite()) {
            return Err(PolicyError::OffSimplex(format!("component {w}")));
        }
        Ok(PolicyParams { weights })
    }

    /// All weights including the trailing cash component.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Asset components (everything but the trailing cash weight).
    pub fn asset_weights(&self) -> &[f64] {
        &self.weights[..self.weights.len() - 1]
    }

    pub fn cash_weight(&self) -> f64 {
        *self.weights.last().unwrap()
    }

    pub fn all_cash(n_assets: usize) -> Self {
        let mut weights = vec![0.0; n_assets + 1];
        weights[n_assets] = 1.0;
        PolicyParams { weights }
    }
}

/// What the simplex projection had to do to the raw demand.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionInfo {
    /// Some demand components were negative and were clipped to zero.
    pub clipped_negative: bool,
    /// Clipped demand summed past 1 and was rescaled (cash forced to 0).
    pub renormalized: bool,
}

/// Map an unconstrained demand vector onto asset-plus-cash weights:
/// negatives clip to zero; a total below 1 leaves the remainder in cash;
/// a total above 1 rescales proportionally.
pub fn project_demand(demand: &[f64]) -> (PolicyParams, ProjectionInfo) {
    let mut info = ProjectionInfo::default();
    let mut clipped: Vec<f64> = demand
        .iter()
        .map(|&d| {
            if d < 0.0 {
                info.clipped_negative = true;
                0.0
            } else {
                d
            }
        })
        .collect();
    let total: f64 = clipped.iter().sum();
    let cash = if total > 1.0 {
        info.renormalized = true;
        clipped.iter_mut().for_each(|w| *w /= total);
        0.0
    } else {
        1.0 - total
    };
    clipped.push(cash);
    // Re-normalize exactly against accumulated rounding.
    let sum: f64 = clipped.iter().sum();
    clipped.iter_mut().for_each(|w| *w /= sum);
    (PolicyParams { weights: clipped }, info)
}

/// Closed-form policy: the investor's mean-variance-with-ESG demand on
/// the window estimates, projected onto the simplex.
pub fn closed_form_policy(
    universe: &AssetUniverse,
    profile: &InvestorProfile,
) -> Result<(PolicyParams, ProjectionInfo), PolicyError> {
    let demand = capm::agent_demand(
        universe,
        profile.gamma,
        profile.effective_b(),
        profile.effective_theta(),
    )
    .map_err(PolicyError::SingularSystem)?;
    let slice: Vec<f64> = demand.iter().cloned().collect();
    Ok(project_demand(&slice))
}

/// Cross-entropy search configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub initial_sd: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 64,
            elite_fraction: 0.125,
            iterations: 200,
            initial_sd: 1.0,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.population == 0 || self.iterations == 0 {
            return Err(PolicyError::InvalidConfig(
                "population and iterations must be positive".into(),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(PolicyError::InvalidConfig(format!(
                "elite fraction {} outside (0, 1)",
                self.elite_fraction
            )));
        }
        if !(self.initial_sd > 0.0) {
            return Err(PolicyError::InvalidConfig(format!(
                "initial sd {} must be positive",
                self.initial_sd
            )));
        }
        Ok(())
    }
}

/// Search outcome: best parameters ever sampled and the per-iteration
/// best-so-far trace (nondecreasing by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: PolicyParams,
    pub best_reward: f64,
    pub best_so_far: Vec<f64>,
    pub evaluations: usize,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Maximize `objective` over the `dim`-simplex (assets plus cash) by the
/// cross-entropy method. The objective must be deterministic; NaN
/// rewards rank below everything.
pub fn cross_entropy_search(
    objective: impl Fn(&PolicyParams) -> f64,
    dim: usize,
    cfg: &SearchConfig,
) -> Result<SearchResult, PolicyError> {
    cfg.validate()?;
    if dim < 2 {
        return Err(PolicyError::InvalidConfig(
            "need at least one asset plus cash".into(),
        ));
    }
    let mut rng = crate::rng::substream(cfg.seed, "cem");
    let elite_n = ((cfg.population as f64 * cfg.elite_fraction).round() as usize)
        .clamp(1, cfg.population);

    let mut mean = vec![0.0; dim];
    let mut sd = vec![cfg.initial_sd; dim];
    let mut best: Option<(f64, PolicyParams)> = None;
    let mut best_so_far = Vec::with_capacity(cfg.iterations);
    let mut evaluations = 0;

    for _ in 0..cfg.iterations {
        let mut scored: Vec<(f64, Vec<f64>, PolicyParams)> = Vec::with_capacity(cfg.population);
        for _ in 0..cfg.population {
            let z: Vec<f64> = (0..dim)
                .map(|j| mean[j] + sd[j] * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let params = PolicyParams { weights: softmax(&z) };
            let score = objective(&params);
            let score = if score.is_nan() { f64::NEG_INFINITY } else { score };
            evaluations += 1;
            scored.push((score, z, params));
        }
        // Stable sort keeps earlier samples ahead on ties, so the refit
        // and the running best are deterministic.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));

        let (top_score, _, top_params) = &scored[0];
        // Strict improvement only: a constant objective keeps the very
        // first sample as the winner.
        if best.as_ref().is_none_or(|(s, _)| *top_score > *s) {
            best = Some((*top_score, top_params.clone()));
        }
        best_so_far.push(best.as_ref().unwrap().0);

        // Refit the sampler to the elites in unconstrained space.
        for j in 0..dim {
            let elite_vals: Vec<f64> = scored[..elite_n].iter().map(|(_, z, _)| z[j]).collect();
            let m = crate::linalg::mean(&elite_vals);
            let var = elite_vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                / elite_vals.len() as f64;
            mean[j] = m;
            sd[j] = var.sqrt().max(1e-12);
        }
    }

    let (best_reward, best_params) = best.unwrap();
    Ok(SearchResult {
        best: best_params,
        best_reward,
        best_so_far,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmv::{self, InvestorKind, MarketParams};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    #[test]
    fn projection_cases() {
        let (p, info) = project_demand(&[0.75]);
        assert_relative_eq!(p.weights()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(p.cash_weight(), 0.25, epsilon = 1e-12);
        assert_eq!(info, ProjectionInfo::default());

        let (p, info) = project_demand(&[-0.5, -0.1]);
        assert_eq!(p.weights(), &[0.0, 0.0, 1.0]);
        assert!(info.clipped_negative && !info.renormalized);

        let (p, _) = project_demand(&[0.0, 0.0]);
        assert_eq!(p.cash_weight(), 1.0);

        let (p, info) = project_demand(&[1.5, 0.5, -0.2]);
        assert!(info.renormalized && info.clipped_negative);
        assert_relative_eq!(p.weights()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(p.weights()[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(p.cash_weight(), 0.0);
    }

    #[test]
    fn closed_form_scalar_reduction() {
        // Parameters engineered so the unconstrained weight is 0.75.
        let m = MarketParams::new(0.0, 0.06, 0.04, 0.02, 0.01).unwrap();
        let u = AssetUniverse::new(
            DVector::from_element(1, m.premium()),
            DMatrix::from_element(1, 1, m.sigma2_m),
            DVector::from_element(1, m.mu_g),
            DMatrix::from_element(1, 1, m.sigma2_g),
        )
        .unwrap();
        let profile = InvestorProfile::new(InvestorKind::TypeI, 2.0, 1.0, 1.0).unwrap();
        let (p, info) = closed_form_policy(&u, &profile).unwrap();
        assert_relative_eq!(p.weights()[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(p.cash_weight(), 0.25, epsilon = 1e-12);
        assert_eq!(info, ProjectionInfo::default());
    }

    fn quadratic_objective(target: Vec<f64>) -> impl Fn(&PolicyParams) -> f64 {
        move |p: &PolicyParams| {
            -p.weights()
                .iter()
                .zip(&target)
                .map(|(w, t)| (w - t).powi(2))
                .sum::<f64>()
        }
    }

    #[test]
    fn cem_recovers_quadratic_argmax() {
        let target = vec![0.5, 0.3, 0.2];
        let cfg = SearchConfig { seed: 42, ..Default::default() };
        let out = cross_entropy_search(quadratic_objective(target.clone()), 3, &cfg).unwrap();
        for (w, t) in out.best.weights().iter().zip(&target) {
            assert!((w - t).abs() <= 1e-2, "weight {w} vs target {t}");
        }
        assert!(out.evaluations <= 200 * 64);
    }

    #[test]
    fn cem_best_so_far_is_monotone_and_on_simplex() {
        let cfg = SearchConfig { seed: 7, iterations: 50, ..Default::default() };
        let out = cross_entropy_search(quadratic_objective(vec![0.1, 0.9]), 2, &cfg).unwrap();
        for pair in out.best_so_far.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        let sum: f64 = out.best.weights().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        assert!(out.best.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn cem_constant_objective_keeps_first_sample() {
        let cfg = SearchConfig { seed: 3, iterations: 10, ..Default::default() };
        let out = cross_entropy_search(|_| 1.25, 3, &cfg).unwrap();
        assert_eq!(out.best_reward, 1.25);
        assert!(out.best_so_far.iter().all(|&v| v == 1.25));
        // The winner is literally the first sample of the first iteration.
        let mut rng = crate::rng::substream(3, "cem");
        let z: Vec<f64> = (0..3)
            .map(|j| {
                let _ = j;
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        assert_eq!(out.best.weights(), softmax(&z).as_slice());
    }

    #[test]
    fn cem_same_seed_same_output() {
        let cfg = SearchConfig { seed: 99, iterations: 30, ..Default::default() };
        let a = cross_entropy_search(quadratic_objective(vec![0.2, 0.8]), 2, &cfg).unwrap();
        let b = cross_entropy_search(quadratic_objective(vec![0.2, 0.8]), 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cem_recovers_single_asset_dmv_weight() {
        let mut rng = crate::rng::substream(55, "cem-dmv");
        let mut tested = 0;
        while tested < 10 {
            let m = MarketParams::new(
                0.0,
                rng.random_range(0.01..0.08),
                rng.random_range(0.02..0.15),
                rng.random_range(0.0..0.2),
                rng.random_range(0.001..0.05),
            )
            .unwrap();
            let gamma = rng.random_range(1.0..5.0);
            let b = rng.random_range(0.2..1.5);
            let theta = rng.random_range(0.1..2.0);
            let profile = InvestorProfile::new(InvestorKind::TypeU, gamma, b, theta).unwrap();
            let w_star = dmv::dmv_optimal_weight(&m, &profile).unwrap().w;
            if !(0.05..=0.95).contains(&w_star) {
                continue; // keep optima interior so the simplex bound is slack
            }
            tested += 1;
            let objective =
                move |p: &PolicyParams| dmv::dmv_objective(p.weights()[0], &m, &profile);
            let cfg = SearchConfig { seed: 1000 + tested as u64, ..Default::default() };
            let out = cross_entropy_search(objective, 2, &cfg).unwrap();
            assert!(
                (out.best.weights()[0] - w_star).abs() <= 1e-2,
                "recovered {} vs closed form {}",
                out.best.weights()[0],
                w_star
            );
            for pair in out.best_so_far.windows(2) {
                assert!(pair[1] >= pair[0]);
            }
        }
    }

    #[test]
    fn type_n_reward_decomposes_into_type_i_plus_esg_sleeve() {
        use crate::market_env::{reward, RewardKind, RewardSpec, Stats};
        let esg = vec![0.8, -0.3, 0.1];
        let mu = [0.04, 0.02, 0.07];
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[0.02, 0.002, 0.0, 0.002, 0.03, 0.001, 0.0, 0.001, 0.05],
        );
        let (gamma, b) = (2.5, 0.9);
        let spec_n = RewardSpec::new(RewardKind::DmvTypeN { gamma, b }, esg.clone()).unwrap();
        let spec_i = RewardSpec::new(RewardKind::DmvTypeI { gamma }, esg.clone()).unwrap();

        let objective = |spec: &RewardSpec, p: &PolicyParams| {
            let w = p.asset_weights();
            let mean: f64 = w.iter().zip(&mu).map(|(w, m)| w * m).sum();
            let wv = DVector::from_column_slice(w);
            let var = (wv.transpose() * &cov * &wv)[0];
            let esg_mean = spec.portfolio_esg_mean(w);
            reward(
                spec,
                p.weights(),
                Stats::new(mean, var).unwrap(),
                Stats::new(esg_mean, 0.0).unwrap(),
            )
            .unwrap()
        };

        let cfg = SearchConfig { seed: 2024, iterations: 80, ..Default::default() };
        let searched = cross_entropy_search(|p| objective(&spec_n, p), 4, &cfg).unwrap();
        let p = &searched.best;
        let sleeve = b * spec_n.portfolio_esg_mean(p.asset_weights());
        let lhs = objective(&spec_n, p);
        let rhs = objective(&spec_i, p) + sleeve;
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        assert!(lhs >= objective(&spec_i, p) + sleeve - 1e-12);
    }
}
