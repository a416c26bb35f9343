//! Rolling-window strategy comparison.
//!
//! The protocol: slide a (train, test) window pair through the data —
//! the reference setup is a 3-year train span, a 1-year test span, and a
//! 1-year stride. Per window and strategy, moments and ESG scores are
//! estimated on the train span only, a policy is optimized on those
//! estimates, and the resulting weights are held through the test span
//! in the market environment. Strategies are ranked per window by
//! annualized Sharpe ratio (1 = best, ties broken by name), which makes
//! rank churn across windows directly visible when strategies differ
//! only in which rater they trust.
//!
//! Optimizers see annualized moments (per-period mean and covariance
//! scaled by periods-per-year) so that risk aversion and ESG taste
//! parameters keep the magnitudes they have in single-period examples.
//!
//! Everything is deterministic: stochastic optimizers draw from a
//! substream keyed by (window, strategy), so reports reproduce
//! bit-for-bit under a fixed master seed and adding a strategy never
//! changes another strategy's draws.

use crate::capm::{AssetUniverse, CapmError};
use crate::dmv::{DmvError, InvestorKind, InvestorProfile};
use crate::ensemble::{self, EnsembleError, EnsembleSpec};
use crate::market_env::{
    self, step, ActionVec, EnvError, EnvState, OhlcvBar, RewardKind, RewardSpec, Stats,
};
use crate::policy::{self, PolicyError, PolicyParams, SearchConfig};
use crate::ratings::{standardize, EsgPanel, RatingsError};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("date range too short for one train+test window")]
    RangeTooShort,
    #[error("returns have zero variance; Sharpe ratio undefined")]
    ZeroVariance,
    #[error("need at least {needed} return observations, got {got}")]
    NotEnoughReturns { needed: usize, got: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Ratings(#[from] RatingsError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Capm(#[from] CapmError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dmv(#[from] DmvError),
    #[error("window {id} ({strategy}): {source}")]
    Window {
        id: usize,
        strategy: String,
        source: Box<BacktestError>,
    },
}

/// Calendar duration as whole months plus days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarSpan {
    pub months: u32,
    pub days: u32,
}

impl CalendarSpan {
    pub fn years(n: u32) -> Self {
        CalendarSpan { months: 12 * n, days: 0 }
    }

    pub fn months(n: u32) -> Self {
        CalendarSpan { months: n, days: 0 }
    }

    pub fn days(n: u32) -> Self {
        CalendarSpan { months: 0, days: n }
    }

    pub fn is_zero(&self) -> bool {
        self.months == 0 && self.days == 0
    }

    pub fn add_to(&self, date: NaiveDate) -> Option<NaiveDate> {
        date.checked_add_months(chrono::Months::new(self.months))?
            .checked_add_days(chrono::Days::new(self.days as u64))
    }
}

/// One train/test window; all endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.train_start > self.train_end
            || self.train_end >= self.test_start
            || self.test_start > self.test_end
        {
            return Err(BacktestError::InvalidWindow(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Build the rolling schedule: train spans start at `range_start` and
/// advance by `stride`; every window's test end must stay inside
/// `range_end`.
pub fn rolling_schedule(
    range_start: NaiveDate,
    range_end: NaiveDate,
    train_len: CalendarSpan,
    test_len: CalendarSpan,
    stride: CalendarSpan,
) -> Result<Vec<WindowSpec>, BacktestError> {
    if train_len.is_zero() || test_len.is_zero() || stride.is_zero() {
        return Err(BacktestError::InvalidWindow("spans must be positive".into()));
    }
    let mut windows = Vec::new();
    let mut train_start = range_start;
    loop {
        let Some(test_start) = train_len.add_to(train_start) else { break };
        let Some(test_end_excl) = test_len.add_to(test_start) else { break };
        let train_end = test_start.pred_opt().expect("date range");
        let test_end = test_end_excl.pred_opt().expect("date range");
        if test_end > range_end {
            break;
        }
        let w = WindowSpec { train_start, train_end, test_start, test_end };
        w.validate()?;
        windows.push(w);
        let Some(next) = stride.add_to(train_start) else { break };
        train_start = next;
    }
    if windows.is_empty() {
        return Err(BacktestError::RangeTooShort);
    }
    Ok(windows)
}

/// Annualized excess Sharpe ratio: mean(r − rf)/sd(r) · √periods_per_year.
pub fn sharpe(returns: &[f64], rf: f64, periods_per_year: f64) -> Result<f64, BacktestError> {
    if returns.len() < 2 {
        return Err(BacktestError::NotEnoughReturns { needed: 2, got: returns.len() });
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - rf).collect();
    let mean = crate::linalg::mean(&excess);
    let sd = crate::linalg::sample_variance(&excess).sqrt();
    // Constant series accumulate rounding noise of order eps * |mean|.
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        return Err(BacktestError::ZeroVariance);
    }
    Ok(mean / sd * periods_per_year.sqrt())
}

/// Which scores a strategy trusts.
#[derive(Debug, Clone, PartialEq)]
pub enum EsgSource {
    /// A single rater's column.
    Rater(String),
    /// An ensemble over all raters.
    Ensemble(EnsembleSpec),
}

/// How a strategy turns train-window estimates into weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Mean-variance-with-ESG demand projected to the simplex; for the
    /// linear reward, the exact corner optimum.
    ClosedForm,
    /// Cross-entropy search over the simplex (seeded per window/strategy).
    Cem {
        population: usize,
        elite_fraction: f64,
        iterations: usize,
        initial_sd: f64,
    },
}

impl OptimizerKind {
    pub const DEFAULT_CEM: OptimizerKind = OptimizerKind::Cem {
        population: 64,
        elite_fraction: 0.125,
        iterations: 200,
        initial_sd: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub name: String,
    pub esg_source: EsgSource,
    /// Reward template; per-window ESG scores are filled in at run time.
    pub reward: RewardKind,
    pub optimizer: OptimizerKind,
}

/// Aligned input data: per-asset bar series plus the ESG panel keyed by
/// asset symbol.
#[derive(Debug, Clone)]
pub struct BacktestData {
    assets: Vec<String>,
    bars: Vec<Vec<OhlcvBar>>,
    panel: EsgPanel,
}

impl BacktestData {
    pub fn new(
        assets: Vec<String>,
        bars: Vec<Vec<OhlcvBar>>,
        panel: EsgPanel,
    ) -> Result<Self, BacktestError> {
        if assets.is_empty() || bars.len() != assets.len() {
            return Err(BacktestError::Data("one bar series per asset required".into()));
        }
        let dates: Vec<NaiveDate> = bars[0].iter().map(|b| b.date).collect();
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BacktestError::Data("bars must be strictly date-sorted".into()));
        }
        for (a, series) in assets.iter().zip(&bars) {
            if series.len() != dates.len()
                || series.iter().zip(&dates).any(|(b, d)| b.date != *d)
            {
                return Err(BacktestError::Data(format!("asset {a}: misaligned dates")));
            }
        }
        for a in &assets {
            if !panel.firms().contains(a) {
                return Err(BacktestError::Data(format!("asset {a} missing from ESG panel")));
            }
        }
        Ok(BacktestData { assets, bars, panel })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn bars(&self) -> &[Vec<OhlcvBar>] {
        &self.bars
    }

    pub fn panel(&self) -> &EsgPanel {
        &self.panel
    }

    fn date_range_indices(&self, from: NaiveDate, to: NaiveDate) -> (usize, usize) {
        let dates: Vec<NaiveDate> = self.bars[0].iter().map(|b| b.date).collect();
        let lo = dates.partition_point(|d| *d < from);
        let hi = dates.partition_point(|d| *d <= to);
        (lo, hi)
    }
}

/// Intra-test-span behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rebalance {
    /// Trade to the target weights once at the window start, then hold.
    Hold,
    /// Re-target the weights at every bar.
    Daily,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    /// Risk-free rate per period (per bar).
    pub rf_per_period: f64,
    pub periods_per_year: f64,
    /// Proportional transaction cost; the reward functions themselves are
    /// frictionless, so this defaults to zero.
    pub cost: f64,
    pub rebalance: Rebalance,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            seed: 0,
            rf_per_period: 0.0,
            periods_per_year: 252.0,
            cost: 0.0,
            rebalance: Rebalance::Hold,
        }
    }
}

/// One (window, strategy) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyWindowResult {
    pub window: usize,
    pub strategy: String,
    /// Trained weights (assets plus trailing cash).
    pub weights: Vec<f64>,
    /// Cumulative simple return over the test span.
    pub cum_return: f64,
    /// Annualized excess Sharpe over the test span.
    pub sharpe: f64,
    /// The strategy's own reward evaluated on realized test statistics.
    pub reward_value: f64,
    /// Portfolio value at test end per unit invested.
    pub terminal_value: f64,
    /// 1 = best Sharpe in the window; ties broken by strategy name.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub windows: Vec<WindowSpec>,
    pub strategies: Vec<String>,
    /// Ordered by (window, strategy list order).
    pub rows: Vec<StrategyWindowResult>,
}

impl BacktestReport {
    /// `report.csv`: one row per (window, strategy).
    pub fn report_csv(&self) -> String {
        let mut out = String::from(
            "window,test_start,test_end,strategy,cum_return,sharpe,reward,terminal_value,rank\n",
        );
        for r in &self.rows {
            let w = &self.windows[r.window];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.window + 1,
                w.test_start,
                w.test_end,
                r.strategy,
                r.cum_return,
                r.sharpe,
                r.reward_value,
                r.terminal_value,
                r.rank
            ));
        }
        out
    }

    /// `ranks.csv`: windows as rows, one rank column per strategy.
    pub fn ranks_csv(&self) -> String {
        let mut out = String::from("window");
        for s in &self.strategies {
            out.push(',');
            out.push_str(s);
        }
        out.push('\n');
        for w in 0..self.windows.len() {
            out.push_str(&format!("{}", w + 1));
            for s in &self.strategies {
                let rank = self
                    .rows
                    .iter()
                    .find(|r| r.window == w && &r.strategy == s)
                    .map(|r| r.rank)
                    .expect("every (window, strategy) pair has a row");
                out.push_str(&format!(",{rank}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Train-span estimates a strategy optimizes against.
#[derive(Clone)]
struct WindowEstimates {
    /// Annualized mean excess return per asset.
    mu_excess: DVector<f64>,
    /// Annualized return covariance.
    cov: DMatrix<f64>,
    /// Standardized ESG score per asset under the strategy's source.
    esg_scores: Vec<f64>,
    /// Cross-rater dispersion per asset (ESG-uncertainty variance).
    esg_variance: Vec<f64>,
    /// Train-span per-period portfolio moments at given weights need the
    /// raw per-period mean/cov too (for the linear reward's
    /// standardization).
    mu_period: DVector<f64>,
    cov_period: DMatrix<f64>,
}

fn per_firm_scores(
    data: &BacktestData,
    source: &EsgSource,
) -> Result<Vec<f64>, BacktestError> {
    let panel = &data.panel;
    let standardized = standardize(panel)?;
    // Scores per firm on the source's scale, then standardized across
    // firms so every strategy feeds z-units downstream.
    let named: Vec<(String, f64)> = match source {
        EsgSource::Rater(name) => {
            let idx = panel
                .raters()
                .iter()
                .position(|r| r == name)
                .ok_or_else(|| BacktestError::Data(format!("unknown rater {name:?}")))?;
            panel
                .firms()
                .iter()
                .enumerate()
                .filter_map(|(f, firm)| panel.get(f, idx).map(|v| (firm.clone(), v)))
                .collect()
        }
        EsgSource::Ensemble(spec) => match spec.method {
            ensemble::EnsembleMethod::Pca => ensemble::pca_ensemble(&standardized)?.scores,
            _ => ensemble::apply_rowwise(panel, spec)?.scores,
        },
    };
    let values: Vec<f64> = named.iter().map(|(_, v)| *v).collect();
    let z = crate::ratings::zscore(&values)?;
    let by_firm: std::collections::HashMap<&str, f64> = named
        .iter()
        .zip(&z)
        .map(|((firm, _), zv)| (firm.as_str(), *zv))
        .collect();
    data.assets
        .iter()
        .map(|a| {
            by_firm.get(a.as_str()).copied().ok_or_else(|| {
                BacktestError::Data(format!("asset {a} has no score under this source"))
            })
        })
        .collect()
}

/// Estimates plus the bar indices one past the train span and one past
/// the test span (the former prices the entry trade).
fn estimate_window(
    data: &BacktestData,
    window: &WindowSpec,
    source: &EsgSource,
    settings: &RunSettings,
) -> Result<(WindowEstimates, usize, usize), BacktestError> {
    let n = data.assets.len();
    let (lo, hi) = data.date_range_indices(window.train_start, window.train_end);
    let (tlo, thi) = data.date_range_indices(window.test_start, window.test_end);
    let n_train = hi.saturating_sub(lo);
    if n_train < n + 2 {
        return Err(BacktestError::Data(format!(
            "train span has {n_train} bars for {n} assets"
        )));
    }
    if thi <= tlo {
        return Err(BacktestError::Data("test span has no bars".into()));
    }

    // Per-period simple returns inside the train span.
    let t = n_train - 1;
    let mut rets = vec![vec![0.0; t]; n];
    for j in 0..n {
        for i in 0..t {
            rets[j][i] = data.bars[j][lo + i + 1].close / data.bars[j][lo + i].close - 1.0;
        }
    }
    let mu_period = DVector::from_iterator(n, rets.iter().map(|r| crate::linalg::mean(r)));
    let mut cov_period = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let c: f64 = rets[i]
                .iter()
                .zip(&rets[j])
                .map(|(a, b)| (a - mu_period[i]) * (b - mu_period[j]))
                .sum::<f64>()
                / (t as f64 - 1.0);
            cov_period[(i, j)] = c;
            cov_period[(j, i)] = c;
        }
    }

    let ppy = settings.periods_per_year;
    let mu_excess = (&mu_period).map(|m| (m - settings.rf_per_period) * ppy);
    let cov = &cov_period * ppy;

    let esg_scores = per_firm_scores(data, source)?;
    let standardized = standardize(&data.panel)?;
    let esg_variance: Vec<f64> = data
        .assets
        .iter()
        .map(|a| {
            let f = data.panel.firms().iter().position(|x| x == a).unwrap();
            standardized.cross_rater_variance(f).unwrap_or(0.0)
        })
        .collect();

    Ok((
        WindowEstimates { mu_excess, cov, esg_scores, esg_variance, mu_period, cov_period },
        hi,
        thi,
    ))
}

/// Portfolio-level stats at the given policy under the window estimates
/// (annualized scale).
fn policy_stats(est: &WindowEstimates, p: &PolicyParams, rf_annual: f64) -> (Stats, Stats) {
    let w = p.asset_weights();
    let wv = DVector::from_column_slice(w);
    let mean = wv.dot(&est.mu_excess) + rf_annual; // total return incl. cash at rf
    let variance = (wv.transpose() * &est.cov * &wv)[0];
    let esg_mean: f64 = w.iter().zip(&est.esg_scores).map(|(w, s)| w * s).sum();
    let esg_var: f64 = w.iter().zip(&est.esg_variance).map(|(w, v)| w * v).sum();
    (
        Stats { mean, variance },
        Stats { mean: esg_mean, variance: esg_var.max(0.0) },
    )
}

fn train_objective(
    strategy: &Strategy,
    est: &WindowEstimates,
    settings: &RunSettings,
) -> impl Fn(&PolicyParams) -> f64 {
    let rf_annual = settings.rf_per_period * settings.periods_per_year;
    let spec = RewardSpec {
        kind: strategy.reward,
        esg_scores: est.esg_scores.clone(),
    };
    let est = est.clone();
    move |p: &PolicyParams| {
        let (mut ret, esg) = policy_stats(&est, p, rf_annual);
        if matches!(spec.kind, RewardKind::LinearEsg { .. }) {
            // Standardized returns have zero mean on the train span by
            // construction; only the ESG leg differentiates policies here.
            ret = Stats { mean: 0.0, variance: ret.variance };
        }
        market_env::reward(&spec, p.weights(), ret, esg).unwrap_or(f64::NEG_INFINITY)
    }
}

fn optimize_policy(
    strategy: &Strategy,
    est: &WindowEstimates,
    settings: &RunSettings,
    window_id: usize,
) -> Result<PolicyParams, BacktestError> {
    let n = est.mu_excess.len();
    match strategy.optimizer {
        OptimizerKind::ClosedForm => match strategy.reward {
            RewardKind::LinearEsg { alpha } => {
                // The linear objective is maximized at a simplex corner.
                let scores: Vec<f64> = est.esg_scores.iter().map(|s| alpha * s).collect();
                let (best, best_score) = scores
                    .iter()
                    .enumerate()
                    .fold((None, 0.0_f64), |(bi, bs), (i, &s)| {
                        if s > bs { (Some(i), s) } else { (bi, bs) }
                    });
                Ok(match best {
                    Some(j) if best_score > 0.0 => {
                        let mut w = vec![0.0; n + 1];
                        w[j] = 1.0;
                        PolicyParams::new(w).expect("corner is on the simplex")
                    }
                    _ => PolicyParams::all_cash(n),
                })
            }
            kind => {
                let profile = profile_for(kind)?;
                let universe = AssetUniverse::new(
                    est.mu_excess.clone(),
                    est.cov.clone(),
                    DVector::from_column_slice(&est.esg_scores),
                    DMatrix::from_diagonal(&DVector::from_column_slice(&est.esg_variance)),
                )?;
                let (params, _info) = policy::closed_form_policy(&universe, &profile)?;
                Ok(params)
            }
        },
        OptimizerKind::Cem { population, elite_fraction, iterations, initial_sd } => {
            let cfg = SearchConfig {
                population,
                elite_fraction,
                iterations,
                initial_sd,
                seed: crate::rng::derive_seed(
                    settings.seed,
                    &format!("window={window_id}/strategy={}", strategy.name),
                ),
            };
            let objective = train_objective(strategy, est, settings);
            Ok(policy::cross_entropy_search(objective, n + 1, &cfg)?.best)
        }
    }
}

fn profile_for(kind: RewardKind) -> Result<InvestorProfile, BacktestError> {
    Ok(match kind {
        RewardKind::DmvTypeI { gamma } => {
            InvestorProfile::new(InvestorKind::TypeI, gamma, 1.0, 0.0)?
        }
        RewardKind::DmvTypeN { gamma, b } => {
            InvestorProfile::new(InvestorKind::TypeN, gamma, b, 0.0)?
        }
        RewardKind::DmvTypeU { gamma, b, theta } => {
            InvestorProfile::new(InvestorKind::TypeU, gamma, b, theta)?
        }
        RewardKind::LinearEsg { .. } => {
            return Err(BacktestError::Data(
                "linear reward has no mean-variance profile".into(),
            ))
        }
    })
}

fn retarget_action(state: &EnvState, targets: &[f64]) -> ActionVec {
    let n = targets.len();
    let value = state.portfolio_value();
    let mut actions = vec![0.0; n];
    let mut freed = state.balance;
    for j in 0..n {
        let held = state.shares[j] * state.closes[j];
        let want = targets[j] * value;
        if held > want && held > 0.0 {
            actions[j] = -((held - want) / held);
            freed += held - want;
        }
    }
    if freed > 0.0 {
        for j in 0..n {
            let held = state.shares[j] * state.closes[j];
            let want = targets[j] * value;
            if want > held {
                // Mathematically <= 1; rounding can push it a hair over.
                actions[j] = ((want - held) / freed).min(1.0);
            }
        }
    }
    ActionVec::new(actions, 1.0).expect("retarget fractions are within [-1, 1]")
}

/// Hold (or re-target) the trained weights through the test span and
/// collect the per-period portfolio returns.
fn evaluate_on_test(
    data: &BacktestData,
    params: &PolicyParams,
    entry_index: usize,
    test_end_index: usize,
    settings: &RunSettings,
) -> Result<(Vec<f64>, f64), BacktestError> {
    let n = data.assets.len();
    let entry_closes: Vec<f64> = (0..n).map(|j| data.bars[j][entry_index].close).collect();
    let mut state = EnvState::new(1.0, entry_closes)?;
    let mut returns = Vec::with_capacity(test_end_index - entry_index - 1);
    let mut first = true;
    for t in entry_index + 1..test_end_index {
        let bars: Vec<OhlcvBar> = (0..n).map(|j| data.bars[j][t]).collect();
        let action = if first || settings.rebalance == Rebalance::Daily {
            first = false;
            retarget_action(&state, params.asset_weights())
        } else {
            ActionVec::hold(n)
        };
        let out = step(&state, &action, &bars, settings.cost)?;
        returns.push(out.portfolio_return);
        state = out.state;
    }
    Ok((returns, state.portfolio_value()))
}

/// Run every strategy over every window and rank them by Sharpe.
pub fn run_comparison(
    data: &BacktestData,
    strategies: &[Strategy],
    schedule: &[WindowSpec],
    settings: &RunSettings,
) -> Result<BacktestReport, BacktestError> {
    if strategies.is_empty() || schedule.is_empty() {
        return Err(BacktestError::Data("need at least one strategy and one window".into()));
    }
    {
        let mut names: Vec<&str> = strategies.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != strategies.len() {
            return Err(BacktestError::Data("strategy names must be unique".into()));
        }
    }

    let tasks: Vec<(usize, usize)> = (0..schedule.len())
        .flat_map(|w| (0..strategies.len()).map(move |s| (w, s)))
        .collect();

    let mut rows: Vec<StrategyWindowResult> = tasks
        .par_iter()
        .map(|&(w, s)| -> Result<StrategyWindowResult, BacktestError> {
            let strategy = &strategies[s];
            let tag = |e: BacktestError| BacktestError::Window {
                id: w,
                strategy: strategy.name.clone(),
                source: Box::new(e),
            };
            let window = &schedule[w];
            let (est, train_hi, test_hi) =
                estimate_window(data, window, &strategy.esg_source, settings).map_err(tag)?;
            let params = optimize_policy(strategy, &est, settings, w).map_err(tag)?;
            let entry = train_hi - 1; // last train bar prices the entry trade
            let (returns, terminal_value) =
                evaluate_on_test(data, &params, entry, test_hi, settings).map_err(tag)?;
            let sr = sharpe(&returns, settings.rf_per_period, settings.periods_per_year)
                .map_err(tag)?;
            let cum_return = terminal_value - 1.0;

            // Reward metric on realized test statistics (annualized), with
            // the linear reward's returns standardized by train moments.
            let ppy = settings.periods_per_year;
            let mean_t = crate::linalg::mean(&returns);
            let var_t = crate::linalg::sample_variance(&returns);
            let spec = RewardSpec {
                kind: strategy.reward,
                esg_scores: est.esg_scores.clone(),
            };
            let wv = DVector::from_column_slice(params.asset_weights());
            let esg_mean: f64 = params
                .asset_weights()
                .iter()
                .zip(&est.esg_scores)
                .map(|(w, s)| w * s)
                .sum();
            let esg_var: f64 = params
                .asset_weights()
                .iter()
                .zip(&est.esg_variance)
                .map(|(w, v)| w * v)
                .sum();
            let ret_stats = if matches!(strategy.reward, RewardKind::LinearEsg { .. }) {
                let mu_train = wv.dot(&est.mu_period);
                let sd_train = (wv.transpose() * &est.cov_period * &wv)[0].sqrt();
                let z = if sd_train > 0.0 { (mean_t - mu_train) / sd_train } else { 0.0 };
                Stats { mean: z, variance: 0.0 }
            } else {
                Stats { mean: mean_t * ppy, variance: var_t * ppy }
            };
            let reward_value = market_env::reward(
                &spec,
                params.weights(),
                ret_stats,
                Stats { mean: esg_mean, variance: esg_var.max(0.0) },
            )
            .map_err(|e| tag(e.into()))?;

            Ok(StrategyWindowResult {
                window: w,
                strategy: strategy.name.clone(),
                weights: params.weights().to_vec(),
                cum_return,
                sharpe: sr,
                reward_value,
                terminal_value,
                rank: 0,
            })
        })
        .collect::<Result<_, _>>()?;

    // Per-window ranks: best Sharpe first, ties by name.
    for w in 0..schedule.len() {
        let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].window == w).collect();
        idx.sort_by(|&a, &b| {
            rows[b]
                .sharpe
                .total_cmp(&rows[a].sharpe)
                .then_with(|| rows[a].strategy.cmp(&rows[b].strategy))
        });
        for (rank, &i) in idx.iter().enumerate() {
            rows[i].rank = rank + 1;
        }
    }

    Ok(BacktestReport {
        windows: schedule.to_vec(),
        strategies: strategies.iter().map(|s| s.name.clone()).collect(),
        rows,
    })
}
