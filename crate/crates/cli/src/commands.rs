//! Subcommand implementations. Each writes deterministic artifacts into
//! the output directory and finishes with a `manifest.txt`.

use crate::capm_io;
use crate::config::Config;
use crate::manifest::Manifest;
use crate::CliError;
use chrono::NaiveDate;
use esg_core::backtest::{
    rolling_schedule, run_comparison, BacktestData, CalendarSpan, EsgSource, OptimizerKind,
    Rebalance, RunSettings, Strategy,
};
use esg_core::capm::{capm_no_uncertainty, capm_with_uncertainty, CapmResult, Taste};
use esg_core::dmv::{
    dmv_optimal_weight, type_premiums, InvestorKind, InvestorProfile, MarketParams,
};
use esg_core::ensemble::{EnsembleMethod, EnsembleSpec};
use esg_core::market_env::RewardKind;
use esg_core::ratings::{self, EsgPanel};
use esg_core::synthgen::{self, EsgMarginal, SynthConfig};
use nalgebra::{DMatrix, DVector};
use std::path::{Path, PathBuf};

fn resolve_input(
    flag: Option<&Path>,
    cfg: &Config,
    key: &str,
    what: &str,
) -> Result<PathBuf, CliError> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.get(key).map(PathBuf::from))
        .ok_or_else(|| {
            CliError::config(format!("no {what}: pass --{} or set {key}", what.replace(' ', "-")))
        })?;
    if !path.exists() {
        return Err(CliError::config(format!("input file not found: {}", path.display())));
    }
    Ok(path)
}

fn read_panel(path: &Path) -> Result<EsgPanel, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(ratings::read_panel_csv(file)?)
}

fn write_artifact(
    out_dir: &Path,
    name: &str,
    contents: &str,
    manifest: &mut Manifest,
) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    manifest.record_output(&path)?;
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn harmonize(cfg: &Config, input: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let path = resolve_input(input, cfg, "data.panel", "input")?;
    let mut manifest = Manifest::new("harmonize");
    manifest.record_config(&cfg.raw);
    manifest.record_input(&path)?;
    let panel = read_panel(&path)?;
    let mut buf = Vec::new();
    ratings::write_panel_csv(&panel, &mut buf).map_err(CliError::from)?;
    write_artifact(
        out_dir,
        "panel_harmonized.csv",
        std::str::from_utf8(&buf).expect("CSV is UTF-8"),
        &mut manifest,
    )?;
    manifest.write(out_dir)?;
    Ok(())
}

pub fn corr(cfg: &Config, input: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let path = resolve_input(input, cfg, "data.panel", "input")?;
    let mut manifest = Manifest::new("corr");
    manifest.record_config(&cfg.raw);
    manifest.record_input(&path)?;
    let panel = read_panel(&path)?;
    let matrix = ratings::rater_correlation(&panel)?;
    let tmp = out_dir.join("correlation.csv");
    capm_io::write_matrix(&tmp, panel.raters(), &matrix)?;
    manifest.record_output(&tmp)?;
    println!("wrote {}", tmp.display());
    manifest.write(out_dir)?;
    Ok(())
}

pub fn ensemble(
    cfg: &Config,
    input: Option<&Path>,
    method: Option<&str>,
    alpha: Option<f64>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let path = resolve_input(input, cfg, "data.panel", "input")?;
    let method_name = method
        .map(str::to_string)
        .or_else(|| cfg.get("ensemble.method").map(str::to_string))
        .unwrap_or_else(|| "centroid".to_string());
    let method = EnsembleMethod::parse(&method_name)
        .ok_or_else(|| CliError::config(format!("unknown ensemble method {method_name:?}")))?;
    let alpha = match alpha {
        Some(a) => a,
        None => cfg.get_f64("ensemble.alpha", esg_core::ensemble::DEFAULT_ALPHA)?,
    };
    let spec = EnsembleSpec::new(method, alpha)?;

    let mut manifest = Manifest::new("ensemble");
    manifest.record_config(&cfg.raw);
    manifest.record_input(&path)?;
    manifest.push("method", method.name());
    if method == EnsembleMethod::AlphaMaxmin {
        manifest.push("alpha", alpha);
    }

    let panel = read_panel(&path)?;
    let result = match method {
        EnsembleMethod::Pca => {
            let standardized = ratings::standardize(&panel)?;
            esg_core::ensemble::pca_ensemble(&standardized)?
        }
        _ => esg_core::ensemble::apply_rowwise(&panel, &spec)?,
    };

    let mut csv = String::from("firm,score\n");
    for (firm, score) in &result.scores {
        csv.push_str(&format!("{firm},{score}\n"));
    }
    write_artifact(out_dir, "ensemble_scores.csv", &csv, &mut manifest)?;
    manifest.push("dropped_firms", result.dropped_firms);

    if let Some(pca) = &result.pca {
        let mut side = String::from("rater,loading\n");
        for (rater, loading) in panel.raters().iter().zip(&pca.loadings) {
            side.push_str(&format!("{rater},{loading}\n"));
        }
        write_artifact(out_dir, "pca_loadings.csv", &side, &mut manifest)?;
        manifest.push("explained_variance_ratio", pca.explained_variance_ratio);
    }
    manifest.write(out_dir)?;
    Ok(())
}

fn market_from_config(cfg: &Config) -> Result<MarketParams, CliError> {
    Ok(MarketParams::new(
        cfg.get_f64("market.mu_f", 0.0)?,
        cfg.get_f64("market.mu_m", 0.06)?,
        cfg.get_f64("market.sigma2_m", 0.04)?,
        cfg.get_f64("market.mu_g", 0.02)?,
        cfg.get_f64("market.sigma2_g", 0.01)?,
    )?)
}

pub fn dmv(cfg: &Config, out_dir: &Path) -> Result<(), CliError> {
    let market = market_from_config(cfg)?;
    let b_grid = cfg.f64_list("grid.b", &[0.2, 0.6, 1.0, 1.4, 1.8])?;
    let gamma = cfg.get_f64("grid.gamma", 2.0)?;
    let theta = cfg.get_f64("grid.theta", 1.0)?;
    let kinds: Vec<InvestorKind> = match cfg.get("grid.types") {
        None => vec![InvestorKind::TypeI, InvestorKind::TypeN, InvestorKind::TypeU],
        Some(s) => s
            .split(',')
            .map(|t| {
                InvestorKind::parse(t)
                    .ok_or_else(|| CliError::config(format!("unknown investor type {t:?}")))
            })
            .collect::<Result<_, _>>()?,
    };

    let mut manifest = Manifest::new("dmv");
    manifest.record_config(&cfg.raw);

    let mut csv = String::from(
        "type,b,gamma,theta,w,term_benchmark,term_esg_return,term_esg_uncertainty,\
         excess_return,variance,sharpe,type_premium\n",
    );
    for kind in &kinds {
        for &b in &b_grid {
            let profile = InvestorProfile::new(*kind, gamma, b, theta)?;
            let s = dmv_optimal_weight(&market, &profile)?;
            let premiums = type_premiums(&market, gamma, b, theta);
            let premium = match kind {
                InvestorKind::TypeI => premiums.type_i,
                InvestorKind::TypeN => premiums.type_n,
                InvestorKind::TypeU => premiums.type_u,
            };
            let sharpe_cell = s.sharpe.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{},{b},{gamma},{theta},{},{},{},{},{},{},{sharpe_cell},{premium}\n",
                kind.label(),
                s.w,
                s.term_benchmark,
                s.term_esg_return,
                s.term_esg_uncertainty,
                s.excess_return,
                s.variance,
            ));
        }
    }
    write_artifact(out_dir, "dmv.csv", &csv, &mut manifest)?;
    manifest.write(out_dir)?;
    Ok(())
}

fn capm_csv(assets: &[String], result: &CapmResult) -> String {
    let mut csv = String::from("asset,beta,alpha\n");
    for (i, asset) in assets.iter().enumerate() {
        csv.push_str(&format!("{asset},{},{}\n", result.beta[i], result.alpha[i]));
    }
    csv
}

pub fn capm(
    cfg: &Config,
    means: Option<&Path>,
    cov_returns: Option<&Path>,
    cov_esg: Option<&Path>,
    agents: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let means_path = resolve_input(means, cfg, "data.means", "means")?;
    let cov_r_path = resolve_input(cov_returns, cfg, "data.cov_returns", "cov-returns")?;
    let cov_g_path = resolve_input(cov_esg, cfg, "data.cov_esg", "cov-esg")?;
    let agents_path = resolve_input(agents, cfg, "data.agents", "agents")?;

    let mut manifest = Manifest::new("capm");
    manifest.record_config(&cfg.raw);
    for p in [&means_path, &cov_r_path, &cov_g_path, &agents_path] {
        manifest.record_input(p)?;
    }

    let (assets, mu_excess, mu_esg) = capm_io::read_means(&means_path)?;
    let cov_r = capm_io::read_matrix(&cov_r_path, &assets)?;
    let cov_g = capm_io::read_matrix(&cov_g_path, &assets)?;
    let population = capm_io::read_agents(&agents_path)?;
    let universe = esg_core::capm::AssetUniverse::new(mu_excess, cov_r, mu_esg, cov_g)?;

    let no_unc = capm_no_uncertainty(&universe, &population)?;
    let with_unc = capm_with_uncertainty(&universe, &population)?;

    write_artifact(out_dir, "capm_no_uncertainty.csv", &capm_csv(&assets, &no_unc), &mut manifest)?;
    write_artifact(
        out_dir,
        "capm_with_uncertainty.csv",
        &capm_csv(&assets, &with_unc),
        &mut manifest,
    )?;

    // Market portfolio, raw and (when well-defined) normalized.
    let mut mp = String::from("asset,raw_weight,normalized_weight\n");
    let normalized = with_unc.normalized_market_weights();
    for (i, asset) in assets.iter().enumerate() {
        let norm_cell = normalized
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        mp.push_str(&format!("{asset},{},{norm_cell}\n", with_unc.market_portfolio[i]));
    }
    write_artifact(out_dir, "market_portfolio.csv", &mp, &mut manifest)?;

    let mut agg = String::new();
    if let Taste::Scalar { gamma_m, b_m } = no_unc.taste {
        agg.push_str(&format!("gamma_M = {gamma_m}\nb_M = {b_m}\n"));
    }
    agg.push_str(&format!(
        "no_uncertainty.mu_M = {}\nno_uncertainty.mu_g = {}\nno_uncertainty.sigma2_M = {}\n",
        no_unc.mu_market, no_unc.mu_esg_market, no_unc.sigma2_market
    ));
    agg.push_str(&format!(
        "with_uncertainty.mu_M = {}\nwith_uncertainty.mu_g = {}\nwith_uncertainty.sigma2_M = {}\n",
        with_unc.mu_market, with_unc.mu_esg_market, with_unc.sigma2_market
    ));
    write_artifact(out_dir, "aggregates.txt", &agg, &mut manifest)?;

    if let Taste::Matrix { gamma_mu, b_mu } = &with_unc.taste {
        let gpath = out_dir.join("gamma_mu.csv");
        capm_io::write_matrix(&gpath, &assets, gamma_mu)?;
        manifest.record_output(&gpath)?;
        println!("wrote {}", gpath.display());
        let bpath = out_dir.join("b_mu.csv");
        capm_io::write_matrix(&bpath, &assets, b_mu)?;
        manifest.record_output(&bpath)?;
        println!("wrote {}", bpath.display());
    }
    manifest.write(out_dir)?;
    Ok(())
}

fn require_seed(flag: Option<u64>, cfg: &Config) -> Result<u64, CliError> {
    match flag {
        Some(s) => Ok(s),
        None => match cfg.get("run.seed") {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::config(format!("run.seed {s:?} is not an integer"))),
            None => Err(CliError::config(
                "seed is mandatory for stochastic commands: pass --seed or set run.seed",
            )),
        },
    }
}

fn parse_date(cfg: &Config, key: &str, default: &str) -> Result<NaiveDate, CliError> {
    let s = cfg.get(key).unwrap_or(default);
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| CliError::config(format!("key {key:?}: bad date {s:?}: {e}")))
}

pub fn synth(
    cfg: &Config,
    seed: Option<u64>,
    firms: Option<usize>,
    assets: Option<usize>,
    bars: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let seed = require_seed(seed, cfg)?;
    let n_firms = firms.unwrap_or(cfg.get_u64("synth.firms", 100)? as usize);
    let n_assets = assets.unwrap_or(cfg.get_u64("synth.assets", 4)? as usize);
    let n_bars = bars.unwrap_or(cfg.get_u64("synth.bars", 1500)? as usize);

    let (default_raters, default_target) = synthgen::default_rater_correlation();
    let rater_names: Vec<String> = match cfg.get("synth.raters") {
        None => default_raters,
        Some(s) => s.split(',').map(|t| t.trim().to_string()).collect(),
    };
    let rater_corr_target = if rater_names.len() == 4 && cfg.get("synth.raters").is_none() {
        default_target
    } else {
        DMatrix::identity(rater_names.len(), rater_names.len())
    };

    let mean = cfg.get_f64("synth.return_mean", 0.0003)?;
    let vol = cfg.get_f64("synth.return_vol", 0.01)?;
    let corr = cfg.get_f64("synth.return_corr", 0.2)?;
    let mut return_cov = DMatrix::from_element(n_assets, n_assets, corr * vol * vol);
    for i in 0..n_assets {
        return_cov[(i, i)] = vol * vol;
    }
    let esg_marginal = match cfg.get("synth.marginal").unwrap_or("uniform") {
        "uniform" => EsgMarginal::Uniform0to100,
        "truncnormal" => EsgMarginal::TruncNormal {
            mean: cfg.get_f64("synth.marginal_mean", 50.0)?,
            sd: cfg.get_f64("synth.marginal_sd", 20.0)?,
        },
        other => return Err(CliError::config(format!("unknown marginal {other:?}"))),
    };

    let config = SynthConfig {
        seed,
        n_firms,
        n_assets,
        n_bars,
        rater_names,
        rater_corr_target,
        return_mean: DVector::from_element(n_assets, mean),
        return_cov,
        esg_marginal,
        start_date: parse_date(cfg, "synth.start_date", "2007-06-30")?,
        initial_price: cfg.get_f64("synth.initial_price", 100.0)?,
    };

    let mut manifest = Manifest::new("synth");
    manifest.record_config(&cfg.raw);
    manifest.push("seed", seed);

    let (mut panel, repair) = synthgen::gen_esg_panel(&config)?;
    // With one firm per asset, key the panel by the asset symbols so the
    // generated files feed the backtest command directly.
    if n_firms == n_assets {
        let rows: Vec<Vec<Option<f64>>> =
            (0..panel.n_firms()).map(|f| panel.row(f).to_vec()).collect();
        let symbols: Vec<String> = (0..n_assets).map(|j| format!("asset{j}")).collect();
        panel = EsgPanel::new(symbols, panel.raters().to_vec(), rows)?;
    }
    manifest.push("psd_repair_max_shift", repair.max_abs_change);
    let mut buf = Vec::new();
    ratings::write_panel_csv(&panel, &mut buf)?;
    write_artifact(
        out_dir,
        "esg_panel.csv",
        std::str::from_utf8(&buf).expect("CSV is UTF-8"),
        &mut manifest,
    )?;

    let series = synthgen::gen_prices(&config)?;
    for (j, bars) in series.iter().enumerate() {
        let mut buf = Vec::new();
        esg_core::market_env::write_bars_csv(bars, &mut buf)?;
        write_artifact(
            out_dir,
            &format!("prices_asset{j}.csv"),
            std::str::from_utf8(&buf).expect("CSV is UTF-8"),
            &mut manifest,
        )?;
    }
    manifest.write(out_dir)?;
    Ok(())
}

fn reward_from(cfg: &Config, prefix: &str) -> Result<RewardKind, CliError> {
    let kind = cfg.get(&format!("{prefix}.reward")).unwrap_or("dmv-U");
    let gamma = cfg.get_f64(&format!("{prefix}.gamma"), 2.0)?;
    let b = cfg.get_f64(&format!("{prefix}.b"), 1.0)?;
    let theta = cfg.get_f64(&format!("{prefix}.theta"), 1.0)?;
    Ok(match kind {
        "linear-esg" | "linear" => RewardKind::LinearEsg {
            alpha: cfg.get_f64(&format!("{prefix}.alpha_r"), 1.0)?,
        },
        "dmv-I" | "dmv-i" => RewardKind::DmvTypeI { gamma },
        "dmv-N" | "dmv-n" => RewardKind::DmvTypeN { gamma, b },
        "dmv-U" | "dmv-u" => RewardKind::DmvTypeU { gamma, b, theta },
        other => return Err(CliError::config(format!("unknown reward {other:?}"))),
    })
}

fn optimizer_from(cfg: &Config, prefix: &str, name: &str) -> Result<OptimizerKind, CliError> {
    Ok(match name {
        "closed-form" => OptimizerKind::ClosedForm,
        "cem" => OptimizerKind::Cem {
            population: cfg.get_u64(&format!("{prefix}.population"), 64)? as usize,
            elite_fraction: cfg.get_f64(&format!("{prefix}.elite_fraction"), 0.125)?,
            iterations: cfg.get_u64(&format!("{prefix}.iterations"), 200)? as usize,
            initial_sd: cfg.get_f64(&format!("{prefix}.initial_sd"), 1.0)?,
        },
        other => return Err(CliError::config(format!("unknown optimizer {other:?}"))),
    })
}

fn strategies_from(cfg: &Config) -> Result<Vec<Strategy>, CliError> {
    let names = cfg.strategy_names();
    if names.is_empty() {
        return Err(CliError::config(
            "no strategies configured: add [strategy.<name>] sections",
        ));
    }
    names
        .into_iter()
        .map(|name| {
            let prefix = format!("strategy.{name}");
            let source = cfg.require(&format!("{prefix}.source"))?;
            let esg_source = match source.split_once(':') {
                Some(("rater", r)) => EsgSource::Rater(r.trim().to_string()),
                Some(("ensemble", m)) => {
                    let method = EnsembleMethod::parse(m.trim()).ok_or_else(|| {
                        CliError::config(format!("unknown ensemble method {m:?}"))
                    })?;
                    let alpha = cfg.get_f64(
                        &format!("{prefix}.alpha"),
                        esg_core::ensemble::DEFAULT_ALPHA,
                    )?;
                    EsgSource::Ensemble(EnsembleSpec::new(method, alpha)?)
                }
                _ => {
                    return Err(CliError::config(format!(
                        "{prefix}.source must be rater:<name> or ensemble:<method>, got {source:?}"
                    )))
                }
            };
            let reward = reward_from(cfg, &prefix)?;
            let optimizer_name = cfg.get(&format!("{prefix}.optimizer")).unwrap_or("closed-form");
            let optimizer = optimizer_from(cfg, &prefix, optimizer_name)?;
            Ok(Strategy { name, esg_source, reward, optimizer })
        })
        .collect()
}

fn span_from(cfg: &Config, what: &str, default_years: u32) -> Result<CalendarSpan, CliError> {
    let years = cfg.get_u64(&format!("schedule.{what}_years"), default_years as u64)? as u32;
    let months = cfg.get_u64(&format!("schedule.{what}_months"), 0)? as u32;
    let days = cfg.get_u64(&format!("schedule.{what}_days"), 0)? as u32;
    Ok(CalendarSpan { months: years * 12 + months, days })
}

pub fn backtest(
    cfg: &Config,
    seed: Option<u64>,
    optimizer_override: Option<&str>,
    population: Option<usize>,
    iterations: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let seed = require_seed(seed, cfg)?;

    let mut manifest = Manifest::new("backtest");
    manifest.record_config(&cfg.raw);
    manifest.push("seed", seed);

    // Panel plus one price series per configured asset.
    let panel_path = resolve_input(None, cfg, "data.panel", "panel")?;
    manifest.record_input(&panel_path)?;
    let panel = read_panel(&panel_path)?;
    let asset_entries = cfg.asset_paths();
    if asset_entries.is_empty() {
        return Err(CliError::config("no assets configured: add data.asset.<symbol> = <csv>"));
    }
    let mut assets = Vec::new();
    let mut bars = Vec::new();
    for (symbol, path) in asset_entries {
        let path = PathBuf::from(path);
        if !path.exists() {
            return Err(CliError::config(format!("input file not found: {}", path.display())));
        }
        manifest.record_input(&path)?;
        let file = std::fs::File::open(&path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        bars.push(esg_core::market_env::read_bars_csv(file)?);
        assets.push(symbol);
    }
    let data = BacktestData::new(assets, bars, panel)?;

    // Schedule defaults to the data span under the 3y/1y/1y protocol.
    let first_date = data.bars()[0].first().expect("nonempty series").date;
    let last_date = data.bars()[0].last().expect("nonempty series").date;
    let range_start = parse_date(cfg, "schedule.range_start", &first_date.to_string())?;
    let range_end = parse_date(cfg, "schedule.range_end", &last_date.to_string())?;
    let schedule = rolling_schedule(
        range_start,
        range_end,
        span_from(cfg, "train", 3)?,
        span_from(cfg, "test", 1)?,
        span_from(cfg, "stride", 1)?,
    )?;
    manifest.push("windows", schedule.len());

    let mut strategies = strategies_from(cfg)?;
    if let Some(name) = optimizer_override {
        for s in strategies.iter_mut() {
            s.optimizer = optimizer_from(cfg, "run", name)?;
        }
    }
    for s in strategies.iter_mut() {
        if let OptimizerKind::Cem { population: p, iterations: i, .. } = &mut s.optimizer {
            if let Some(over) = population {
                *p = over;
            }
            if let Some(over) = iterations {
                *i = over;
            }
        }
    }

    let rebalance = match cfg.get("run.rebalance").unwrap_or("hold") {
        "hold" => Rebalance::Hold,
        "daily" => Rebalance::Daily,
        other => return Err(CliError::config(format!("unknown rebalance mode {other:?}"))),
    };
    let settings = RunSettings {
        seed,
        rf_per_period: cfg.get_f64("run.rf_per_period", 0.0)?,
        periods_per_year: cfg.get_f64("run.periods_per_year", 252.0)?,
        cost: cfg.get_f64("run.cost", 0.0)?,
        rebalance,
    };

    let report = run_comparison(&data, &strategies, &schedule, &settings)?;
    write_artifact(out_dir, "report.csv", &report.report_csv(), &mut manifest)?;
    write_artifact(out_dir, "ranks.csv", &report.ranks_csv(), &mut manifest)?;
    manifest.write(out_dir)?;
    Ok(())
}
