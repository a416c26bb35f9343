//! Finite Markov decision process with value iteration.
//!
//! The trading environment is an MDP: the next state depends only on the
//! current state and action, and an optimal value function satisfies
//!
//! ```text
//! V(s) = max_a Σ_{s'} P(s'|s,a) ( R(s,a,s') + γ V(s') )
//! ```
//!
//! The full trading state space is continuous, so this module does not
//! try to solve it; it pins the contract down on finite instances, where
//! value iteration and exhaustive policy enumeration must agree. Policy
//! optimization at trading scale is handled by derivative-free search
//! over static weights instead (see [`crate::policy`]).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
}

/// Dense finite MDP: `transition[s][a][s']` and `reward[s][a][s']`.
#[derive(Debug, Clone)]
pub struct Mdp {
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
    pub discount: f64,
}

impl Mdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
        discount: f64,
    ) -> Result<Self, MdpError> {
        let s = transition.len();
        if s == 0 {
            return Err(MdpError::Invalid("no states".into()));
        }
        let a = transition[0].len();
        if a == 0 {
            return Err(MdpError::Invalid("no actions".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(MdpError::Invalid(format!("discount {discount} outside [0, 1)")));
        }
        if reward.len() != s {
            return Err(MdpError::Invalid("reward shape".into()));
        }
        for (si, (ta, ra)) in transition.iter().zip(&reward).enumerate() {
            if ta.len() != a || ra.len() != a {
                return Err(MdpError::Invalid(format!("state {si}: action count")));
            }
            for (ai, (row, rrow)) in ta.iter().zip(ra).enumerate() {
                if row.len() != s || rrow.len() != s {
                    return Err(MdpError::Invalid(format!("state {si} action {ai}: row length")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                    return Err(MdpError::Invalid(format!(
                        "state {si} action {ai}: transition row sums to {total}"
                    )));
                }
            }
        }
        Ok(Mdp { transition, reward, discount })
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transition[0].len()
    }

    fn q_value(&self, values: &[f64], s: usize, a: usize) -> f64 {
        self.transition[s][a]
            .iter()
            .zip(&self.reward[s][a])
            .zip(values)
            .map(|((p, r), v)| p * (r + self.discount * v))
            .sum()
    }

    /// Iterate the Bellman backup to (numerical) convergence, then return
    /// the greedy policy's exact value from [`Mdp::policy_value`].
    pub fn value_iteration(&self, tol: f64, max_iter: usize) -> ValueIteration {
        let s = self.n_states();
        let mut values = vec![0.0; s];
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it + 1;
            let mut next = vec![0.0; s];
            for si in 0..s {
                next[si] = (0..self.n_actions())
                    .map(|a| self.q_value(&values, si, a))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            let delta = values
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            values = next;
            if delta <= tol {
                break;
            }
        }
        let policy: Vec<usize> = (0..s)
            .map(|si| {
                (0..self.n_actions())
                    .max_by(|&a, &b| {
                        self.q_value(&values, si, a)
                            .total_cmp(&self.q_value(&values, si, b))
                    })
                    .unwrap()
            })
            .collect();
        let exact = self.policy_value(&policy);
        ValueIteration { values: exact, policy, iterations }
    }

    /// Exact value of a stationary policy via the linear system
    /// `(I − γ P_π) v = r_π`.
    pub fn policy_value(&self, policy: &[usize]) -> Vec<f64> {
        let s = self.n_states();
        let mut p_pi = DMatrix::zeros(s, s);
        let mut r_pi = DVector::zeros(s);
        for si in 0..s {
            let a = policy[si];
            for sj in 0..s {
                p_pi[(si, sj)] = self.transition[si][a][sj];
                r_pi[si] += self.transition[si][a][sj] * self.reward[si][a][sj];
            }
        }
        let system = DMatrix::identity(s, s) - p_pi * self.discount;
        let v = crate::linalg::solve_checked(&system, &r_pi)
            .expect("I - discount*P is nonsingular for discount < 1");
        v.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 3-state, 2-action toy: action 0 is "hold" (safe drift home),
    /// action 1 is "trade" (risky move with higher reward in state 2).
    fn toy() -> Mdp {
        let transition = vec![
            vec![
                vec![0.9, 0.1, 0.0],
                vec![0.2, 0.5, 0.3],
            ],
            vec![
                vec![0.3, 0.6, 0.1],
                vec![0.1, 0.2, 0.7],
            ],
            vec![
                vec![0.0, 0.3, 0.7],
                vec![0.5, 0.2, 0.3],
            ],
        ];
        let reward = vec![
            vec![vec![0.1, 0.2, 0.0], vec![-0.3, 0.4, 1.0]],
            vec![vec![0.0, 0.1, 0.5], vec![0.2, -0.1, 1.2]],
            vec![vec![0.0, 0.3, 0.8], vec![-0.5, 0.0, 0.9]],
        ];
        Mdp::new(transition, reward, 0.9).unwrap()
    }

    /// Every deterministic stationary policy, evaluated exactly.
    fn enumerate_best(mdp: &Mdp) -> (Vec<usize>, Vec<f64>) {
        let (s, a) = (mdp.n_states(), mdp.n_actions());
        let mut best_policy = vec![0; s];
        let mut best_values = mdp.policy_value(&best_policy);
        for code in 0..a.pow(s as u32) {
            let policy: Vec<usize> = (0..s).map(|i| (code / a.pow(i as u32)) % a).collect();
            let values = mdp.policy_value(&policy);
            // A policy dominates if no state is worse and some state is better.
            let ge = values.iter().zip(&best_values).all(|(v, b)| v >= b);
            if ge && values.iter().zip(&best_values).any(|(v, b)| v > b) {
                best_policy = policy;
                best_values = values;
            }
        }
        (best_policy, best_values)
    }

    #[test]
    fn value_iteration_matches_exhaustive_enumeration_exactly() {
        let mdp = toy();
        let vi = mdp.value_iteration(1e-14, 10_000);
        let (best_policy, best_values) = enumerate_best(&mdp);
        assert_eq!(vi.policy, best_policy);
        // Both sides are the same linear solve for the same policy.
        assert_eq!(vi.values, best_values);
    }

    #[test]
    fn bellman_residual_vanishes_at_fixed_point() {
        let mdp = toy();
        let vi = mdp.value_iteration(1e-14, 10_000);
        for s in 0..mdp.n_states() {
            let best_q = (0..mdp.n_actions())
                .map(|a| mdp.q_value(&vi.values, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((vi.values[s] - best_q).abs() <= 1e-9, "state {s}");
        }
    }

    #[test]
    fn rejects_bad_transition_rows() {
        let transition = vec![vec![vec![0.5, 0.4]]]; // sums to 0.9
        let reward = vec![vec![vec![0.0, 0.0]]];
        assert!(Mdp::new(transition, reward, 0.9).is_err());
    }
}
