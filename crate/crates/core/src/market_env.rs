//! Episodic trading environment: OHLCV state, momentum indicators,
//! portfolio accounting, and per-investor-type reward functions.
//!
//! The agent observes balance, holdings, prices, MACD and RSI, and acts
//! with a per-asset signed fraction in `[-k, k]`: negative values sell
//! that fraction of the current holding, positive values spend that
//! fraction of available cash. Trades execute at the current close with
//! a proportional cost and are marked to the next close. Shorting and
//! negative cash are impossible by construction: infeasible orders are
//! clipped to the feasible boundary and the clip is reported.
//!
//! The environment is a deterministic Markov decision process; the
//! [`mdp`] submodule carries the value-iteration contract that pins that
//! down on a toy instance.

use chrono::NaiveDate;
use std::io::{Read, Write};
use thiserror::Error;

pub mod mdp;

pub const MACD_FAST: usize = 12;
pub const MACD_SLOW: usize = 26;
pub const RSI_PERIOD: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("invalid bar: {0}")]
    InvalidBar(String),
    #[error("weights are off the simplex: {0}")]
    WeightsOffSimplex(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("CSV: {0}")]
    Csv(String),
}

/// One daily price bar. `low ≤ min(open, close) ≤ max(open, close) ≤ high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcvBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl OhlcvBar {
    pub fn new(
        date: NaiveDate,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        volume: f64,
    ) -> Result<Self, EnvError> {
        let bar = OhlcvBar { date, open, high, low, close, volume };
        bar.validate()?;
        Ok(bar)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        let ok = self.open > 0.0
            && self.high > 0.0
            && self.low > 0.0
            && self.close > 0.0
            && self.volume >= 0.0
            && self.low <= body_lo
            && body_hi <= self.high
            && [self.open, self.high, self.low, self.close, self.volume]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidBar(format!("{self:?}")))
        }
    }
}

/// Exponential moving average seeded with the first observation,
/// smoothing factor 2/(period+1).
pub fn ema(period: usize, data: &[f64]) -> Vec<f64> {
    if data.is_empty() || period == 0 {
        return Vec::new();
    }
    let k = 2.0 / (period as f64 + 1.0);
    let mut out = Vec::with_capacity(data.len());
    let mut prev = data[0];
    out.push(prev);
    for &x in &data[1..] {
        prev = x * k + prev * (1.0 - k);
        out.push(prev);
    }
    out
}

/// MACD series with a warm-up marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    /// EMA(12) − EMA(26), one value per input close.
    pub values: Vec<f64>,
    /// Indices below this are still warming up.
    pub warmup: usize,
}

impl Macd {
    pub fn is_warmed(&self, index: usize) -> bool {
        index >= self.warmup
    }
}

/// EMA(12) − EMA(26) of the closes. Values before the slow period has
/// filled are flagged as warm-up.
pub fn macd(closes: &[f64]) -> Result<Macd, EnvError> {
    if closes.len() < MACD_SLOW {
        return Err(EnvError::SeriesTooShort { needed: MACD_SLOW, got: closes.len() });
    }
    let fast = ema(MACD_FAST, closes);
    let slow = ema(MACD_SLOW, closes);
    let values = fast.iter().zip(&slow).map(|(f, s)| f - s).collect();
    Ok(Macd { values, warmup: MACD_SLOW - 1 })
}

/// RSI series; `values[j]` belongs to close index `j + period`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rsi {
    pub values: Vec<f64>,
    /// Close index of the first value (= the period).
    pub first: usize,
}

/// Wilder-smoothed relative strength index in [0, 100]. All-gain windows
/// read 100, all-loss windows read 0.
pub fn rsi(closes: &[f64], period: usize) -> Result<Rsi, EnvError> {
    if period == 0 {
        return Err(EnvError::InvalidParameter("rsi period must be positive".into()));
    }
    if closes.len() < period + 1 {
        return Err(EnvError::SeriesTooShort { needed: period + 1, got: closes.len() });
    }
    let mut gains = 0.0;
    let mut losses = 0.0;
    for i in 1..=period {
        let d = closes[i] - closes[i - 1];
        if d >= 0.0 {
            gains += d;
        } else {
            losses -= d;
        }
    }
    let p = period as f64;
    let mut avg_gain = gains / p;
    let mut avg_loss = losses / p;
    let level = |g: f64, l: f64| {
        if l == 0.0 && g == 0.0 {
            50.0 // flat window: no direction either way
        } else if l == 0.0 {
            100.0
        } else {
            100.0 - 100.0 / (1.0 + g / l)
        }
    };
    let mut values = Vec::with_capacity(closes.len() - period);
    values.push(level(avg_gain, avg_loss));
    for i in period + 1..closes.len() {
        let d = closes[i] - closes[i - 1];
        let (g, l) = if d >= 0.0 { (d, 0.0) } else { (0.0, -d) };
        avg_gain = (avg_gain * (p - 1.0) + g) / p;
        avg_loss = (avg_loss * (p - 1.0) + l) / p;
        values.push(level(avg_gain, avg_loss));
    }
    Ok(Rsi { values, first: period })
}

/// Agent + market state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Cash, ≥ 0.
    pub balance: f64,
    /// Holdings per asset, ≥ 0 (fractional shares allowed).
    pub shares: Vec<f64>,
    /// Current close per asset.
    pub closes: Vec<f64>,
    /// Current MACD per asset.
    pub macd: Vec<f64>,
    /// Current RSI per asset, in [0, 100].
    pub rsi: Vec<f64>,
}

impl EnvState {
    /// All-cash starting state.
    pub fn new(balance: f64, closes: Vec<f64>) -> Result<Self, EnvError> {
        let n = closes.len();
        let state = EnvState {
            balance,
            shares: vec![0.0; n],
            closes,
            macd: vec![0.0; n],
            rsi: vec![50.0; n],
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.closes.len();
        if self.shares.len() != n || self.macd.len() != n || self.rsi.len() != n {
            return Err(EnvError::InvalidState("field lengths disagree".into()));
        }
        if !(self.balance >= 0.0) {
            return Err(EnvError::InvalidState(format!("negative balance {}", self.balance)));
        }
        if self.shares.iter().any(|&s| !(s >= 0.0)) {
            return Err(EnvError::InvalidState("negative holdings".into()));
        }
        if self.closes.iter().any(|&p| !(p > 0.0)) {
            return Err(EnvError::InvalidState("non-positive price".into()));
        }
        if self.rsi.iter().any(|&r| !(0.0..=100.0).contains(&r)) {
            return Err(EnvError::InvalidState("RSI out of [0, 100]".into()));
        }
        if !(self.portfolio_value() > 0.0) {
            return Err(EnvError::InvalidState("portfolio value must stay positive".into()));
        }
        Ok(())
    }

    pub fn n_assets(&self) -> usize {
        self.closes.len()
    }

    /// Cash plus holdings marked at the current closes.
    pub fn portfolio_value(&self) -> f64 {
        self.balance
            + self
                .shares
                .iter()
                .zip(&self.closes)
                .map(|(s, p)| s * p)
                .sum::<f64>()
    }

    /// Replace the indicator features (validated).
    pub fn set_indicators(&mut self, macd: Vec<f64>, rsi: Vec<f64>) -> Result<(), EnvError> {
        if macd.len() != self.n_assets() || rsi.len() != self.n_assets() {
            return Err(EnvError::InvalidState("indicator lengths disagree".into()));
        }
        if rsi.iter().any(|&r| !(0.0..=100.0).contains(&r)) {
            return Err(EnvError::InvalidState("RSI out of [0, 100]".into()));
        }
        self.macd = macd;
        self.rsi = rsi;
        Ok(())
    }
}

/// Per-asset signed trade fractions, bounded by `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVec {
    values: Vec<f64>,
    bound: f64,
}

impl ActionVec {
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self, EnvError> {
        if !(bound > 0.0) {
            return Err(EnvError::InvalidAction(format!("bound k must be > 0, got {bound}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > bound) {
            return Err(EnvError::InvalidAction(format!("component {v} outside [-{bound}, {bound}]")));
        }
        Ok(ActionVec { values, bound })
    }

    pub fn hold(n: usize) -> Self {
        ActionVec { values: vec![0.0; n], bound: 1.0 }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    /// Simple portfolio return over the step, net of trading costs.
    pub portfolio_return: f64,
    /// Whether any order had to be clipped to stay feasible.
    pub clipped: bool,
}

/// Execute `action` at the current closes, deduct proportional costs,
/// and mark the book to the next bars' closes.
///
/// Sells are fractions of the current holding; buys are fractions of the
/// post-sale cash balance. Orders beyond a full liquidation or beyond
/// available cash are clipped to the boundary and flagged.
pub fn step(
    state: &EnvState,
    action: &ActionVec,
    next_bars: &[OhlcvBar],
    cost: f64,
) -> Result<StepOutcome, EnvError> {
    state.validate()?;
    let n = state.n_assets();
    if action.values.len() != n || next_bars.len() != n {
        return Err(EnvError::InvalidState(format!(
            "action/bars length {} / {} for {} assets",
            action.values.len(),
            next_bars.len(),
            n
        )));
    }
    if !(0.0..1.0).contains(&cost) {
        return Err(EnvError::InvalidParameter(format!("cost rate {cost} outside [0, 1)")));
    }
    for bar in next_bars {
        bar.validate()?;
    }

    let value_before = state.portfolio_value();
    let mut balance = state.balance;
    let mut shares = state.shares.clone();
    let mut clipped = false;

    // Sells free up cash first.
    for j in 0..n {
        let a = action.values[j];
        if a < 0.0 {
            let mut fraction = -a;
            if fraction > 1.0 {
                fraction = 1.0; // full liquidation is the floor
                clipped = true;
            }
            let qty = fraction * shares[j];
            shares[j] -= qty;
            balance += qty * state.closes[j] * (1.0 - cost);
        }
    }

    // Buys spend fractions of the post-sale balance; scale down if the
    // combined order book exceeds it.
    let cash_pool = balance;
    let mut outlays = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        let a = action.values[j];
        if a > 0.0 {
            let mut fraction = a;
            if fraction > 1.0 {
                fraction = 1.0;
                clipped = true;
            }
            outlays[j] = fraction * cash_pool;
            total += outlays[j];
        }
    }
    if total > cash_pool && total > 0.0 {
        let scale = cash_pool / total;
        outlays.iter_mut().for_each(|o| *o *= scale);
        clipped = true;
    }
    for j in 0..n {
        if outlays[j] > 0.0 {
            shares[j] += outlays[j] / (state.closes[j] * (1.0 + cost));
            balance -= outlays[j];
        }
    }
    // Guard against rounding pushing the balance a hair below zero.
    if balance < 0.0 {
        debug_assert!(balance > -1e-12 * value_before);
        balance = 0.0;
    }

    let closes: Vec<f64> = next_bars.iter().map(|b| b.close).collect();
    let next_state = EnvState {
        balance,
        shares,
        closes,
        macd: state.macd.clone(),
        rsi: state.rsi.clone(),
    };
    next_state.validate()?;
    let portfolio_return = next_state.portfolio_value() / value_before - 1.0;
    Ok(StepOutcome { state: next_state, portfolio_return, clipped })
}

/// Mean/variance pair for a portfolio-level statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub variance: f64,
}

impl Stats {
    pub fn new(mean: f64, variance: f64) -> Result<Self, EnvError> {
        if !(variance >= 0.0) {
            return Err(EnvError::InvalidParameter(format!("variance {variance} < 0")));
        }
        Ok(Stats { mean, variance })
    }
}

/// Reward family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardKind {
    /// Return mean plus `alpha` times the ESG mean, both standardized.
    LinearEsg { alpha: f64 },
    /// Financial mean-variance only.
    DmvTypeI { gamma: f64 },
    /// Adds the taste-weighted ESG mean.
    DmvTypeN { gamma: f64, b: f64 },
    /// Adds the taste-weighted ESG mean-variance pair.
    DmvTypeU { gamma: f64, b: f64, theta: f64 },
}

impl RewardKind {
    fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidParameter(m));
        match *self {
            RewardKind::LinearEsg { alpha } if !(alpha >= 0.0) => {
                bad(format!("alpha {alpha} < 0"))
            }
            RewardKind::DmvTypeI { gamma } if !(gamma > 0.0) => bad(format!("gamma {gamma} <= 0")),
            RewardKind::DmvTypeN { gamma, b } if !(gamma > 0.0 && b > 0.0) => {
                bad(format!("gamma {gamma} / b {b} out of range"))
            }
            RewardKind::DmvTypeU { gamma, b, theta }
                if !(gamma > 0.0 && b > 0.0 && theta >= 0.0) =>
            {
                bad(format!("gamma {gamma} / b {b} / theta {theta} out of range"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RewardKind::LinearEsg { .. } => "linear-esg",
            RewardKind::DmvTypeI { .. } => "dmv-I",
            RewardKind::DmvTypeN { .. } => "dmv-N",
            RewardKind::DmvTypeU { .. } => "dmv-U",
        }
    }
}

/// Reward definition plus the per-asset standardized ESG scores callers
/// use to build the ESG statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub esg_scores: Vec<f64>,
}

impl RewardSpec {
    pub fn new(kind: RewardKind, esg_scores: Vec<f64>) -> Result<Self, EnvError> {
        kind.validate()?;
        Ok(RewardSpec { kind, esg_scores })
    }

    /// Weighted ESG mean over the asset components of `weights` (any
    /// trailing cash component carries zero ESG by convention).
    pub fn portfolio_esg_mean(&self, weights: &[f64]) -> f64 {
        self.esg_scores
            .iter()
            .zip(weights)
            .map(|(g, w)| g * w)
            .sum()
    }
}

fn check_simplex(weights: &[f64]) -> Result<(), EnvError> {
    if weights.is_empty() {
        return Err(EnvError::WeightsOffSimplex("empty weight vector".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(EnvError::WeightsOffSimplex(format!("weights sum to {sum}")));
    }
    if let Some(w) = weights.iter().find(|&&w| w < -1e-9 || !w.is_finite()) {
        return Err(EnvError::WeightsOffSimplex(format!("component {w} negative")));
    }
    Ok(())
}

/// Evaluate a reward from portfolio-level statistics.
///
/// `weights` are the portfolio weights the statistics were computed
/// under (assets first, optionally a trailing cash component); they must
/// lie on the simplex. The statistics describe the whole portfolio, so
/// any risk-free sleeve is already folded into `return_stats.mean`.
pub fn reward(
    spec: &RewardSpec,
    weights: &[f64],
    return_stats: Stats,
    esg_stats: Stats,
) -> Result<f64, EnvError> {
    spec.kind.validate()?;
    check_simplex(weights)?;
    Ok(match spec.kind {
        RewardKind::LinearEsg { alpha } => return_stats.mean + alpha * esg_stats.mean,
        RewardKind::DmvTypeI { gamma } => return_stats.mean - 0.5 * gamma * return_stats.variance,
        RewardKind::DmvTypeN { gamma, b } => {
            return_stats.mean - 0.5 * gamma * return_stats.variance + b * esg_stats.mean
        }
        RewardKind::DmvTypeU { gamma, b, theta } => {
            return_stats.mean - 0.5 * gamma * return_stats.variance
                + b * (esg_stats.mean - 0.5 * theta * esg_stats.variance)
        }
    })
}

/// Read bars from CSV with header `date,open,high,low,close,volume`.
pub fn read_bars_csv<R: Read>(reader: R) -> Result<Vec<OhlcvBar>, EnvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut bars = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| EnvError::Csv(e.to_string()))?;
        if rec.len() != 6 {
            return Err(EnvError::Csv(format!("expected 6 fields, got {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| EnvError::Csv(format!("bad date {:?}: {e}", &rec[0])))?;
        let num = |i: usize| -> Result<f64, EnvError> {
            rec[i]
                .parse()
                .map_err(|_| EnvError::Csv(format!("bad number {:?}", &rec[i])))
        };
        bars.push(OhlcvBar::new(date, num(1)?, num(2)?, num(3)?, num(4)?, num(5)?)?);
    }
    Ok(bars)
}

/// Write bars in the schema [`read_bars_csv`] accepts.
pub fn write_bars_csv<W: Write>(bars: &[OhlcvBar], writer: W) -> Result<(), EnvError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["date", "open", "high", "low", "close", "volume"])
        .map_err(|e| EnvError::Csv(e.to_string()))?;
    for b in bars {
        wtr.write_record(&[
            b.date.format("%Y-%m-%d").to_string(),
            format!("{}", b.open),
            format!("{}", b.high),
            format!("{}", b.low),
            format!("{}", b.close),
            format!("{}", b.volume),
        ])
        .map_err(|e| EnvError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| EnvError::Csv(e.to_string()))?;
    Ok(())
}
