//! Portfolio construction under ESG-rating ambiguity.
//!
//! ESG rating agencies disagree substantially about the same firms. This
//! crate treats that disagreement as Knightian ambiguity and provides the
//! pieces needed to build and evaluate portfolios under it:
//!
//! - [`ratings`]: multi-rater score ingestion, scale harmonization,
//!   standardization, and cross-rater correlation diagnostics.
//! - [`ensemble`]: four ways to collapse rater views into one score
//!   (centroid, median, first principal component, alpha-maxmin).
//! - [`dmv`]: the double mean-variance investor — a financial
//!   mean-variance term plus a taste-weighted ESG mean-variance term —
//!   with closed-form optimal weights and investor-type comparisons.
//! - [`capm`]: multi-asset equilibrium aggregation of heterogeneous
//!   agents into ESG-modified CAPMs, with and without score uncertainty.
//! - [`market_env`]: an episodic OHLCV trading environment with MACD/RSI
//!   features, portfolio accounting, and reward functions per investor type.
//! - [`policy`]: weight optimizers — the closed-form demand projected to
//!   the simplex, and a seeded cross-entropy search.
//! - [`backtest`]: rolling-window train/test evaluation with Sharpe
//!   ranking across strategies.
//! - [`synthgen`]: seeded synthetic ESG panels (Gaussian copula with a
//!   target rater correlation) and OHLCV price paths.
//!
//! Everything stochastic draws from named substreams of a single master
//! seed (see [`rng`]) so runs are reproducible bit-for-bit.

pub mod backtest;
pub mod capm;
pub mod dmv;
pub mod ensemble;
pub mod linalg;
pub mod market_env;
pub mod policy;
pub mod ratings;
pub mod rng;
pub mod synthgen;
