//! End-to-end tests of the `esg` binary: artifacts, determinism, exit
//! codes, and round-trips through the library readers.

use std::path::{Path, PathBuf};
use std::process::Output;

fn esg(args: &[&str], cwd: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_esg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref())
        .unwrap_or_else(|e| panic!("read {}: {e}", path.as_ref().display()))
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!(
            "esg-cli-test-{tag}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self) -> &Path {
        &self.0
    }

    fn join(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

#[test]
fn synth_is_byte_reproducible_and_seed_sensitive() {
    let tmp = TempDir::new("synth");
    for out in ["a", "b"] {
        let out_dir = tmp.join(out);
        let r = esg(
            &[
                "synth",
                "--seed",
                "42",
                "--firms",
                "50",
                "--assets",
                "2",
                "--bars",
                "120",
                "--out-dir",
                out_dir.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert_ok(&r);
    }
    for file in ["esg_panel.csv", "prices_asset0.csv", "prices_asset1.csv", "manifest.txt"] {
        assert_eq!(
            read(tmp.join("a").join(file)),
            read(tmp.join("b").join(file)),
            "{file} differs between identical runs"
        );
    }
    let out_dir = tmp.join("c");
    let r = esg(
        &[
            "synth", "--seed", "43", "--firms", "50", "--assets", "2", "--bars", "120",
            "--out-dir", out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_ok(&r);
    assert_ne!(read(tmp.join("a/esg_panel.csv")), read(tmp.join("c/esg_panel.csv")));

    // Generated artifacts round-trip through the library readers.
    let panel = esg_core::ratings::read_panel_csv(read(tmp.join("a/esg_panel.csv")).as_bytes())
        .expect("panel round-trips");
    assert_eq!(panel.n_firms(), 50);
    let bars =
        esg_core::market_env::read_bars_csv(read(tmp.join("a/prices_asset0.csv")).as_bytes())
            .expect("bars round-trip");
    assert_eq!(bars.len(), 120);
}

#[test]
fn synth_requires_a_seed() {
    let tmp = TempDir::new("synth-seedless");
    let out = esg(&["synth", "--out-dir", tmp.join("o").to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: category=config"), "stderr: {err}");
    assert!(err.contains("seed"));
}

#[test]
fn corr_on_synthetic_panel_has_unit_diagonal() {
    let tmp = TempDir::new("corr");
    let synth_dir = tmp.join("synth");
    assert_ok(&esg(
        &[
            "synth", "--seed", "7", "--firms", "200", "--assets", "1", "--bars", "2",
            "--out-dir", synth_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let out_dir = tmp.join("corr");
    assert_ok(&esg(
        &[
            "corr",
            "--input",
            synth_dir.join("esg_panel.csv").to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let text = read(out_dir.join("correlation.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5); // header + 4 raters
    for (i, line) in lines.iter().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let diag: f64 = cells[i + 1].parse().unwrap();
        assert_eq!(diag, 1.0);
        for v in &cells[1..] {
            let v: f64 = v.parse().unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn harmonize_converts_letter_columns_to_midpoints() {
    let tmp = TempDir::new("harmonize");
    let input = tmp.join("panel.csv");
    std::fs::write(&input, "firm,SA,MSCI\nacme,55.5,AAA\nbolt,60.25,CCC\ncorp,10,BBB\n").unwrap();
    let out_dir = tmp.join("out");
    assert_ok(&esg(
        &[
            "harmonize",
            "--input",
            input.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let text = read(out_dir.join("panel_harmonized.csv"));
    let panel = esg_core::ratings::read_panel_csv(text.as_bytes()).unwrap();
    let msci = panel.raters().iter().position(|r| r == "MSCI").unwrap();
    assert!((panel.get(0, msci).unwrap() - 1300.0 / 14.0).abs() < 1e-9);
    assert!((panel.get(1, msci).unwrap() - 100.0 / 14.0).abs() < 1e-9);
    assert!((panel.get(2, msci).unwrap() - 50.0).abs() < 1e-9);
}

#[test]
fn ensemble_pca_writes_loadings_sidecar() {
    let tmp = TempDir::new("ensemble");
    let synth_dir = tmp.join("synth");
    assert_ok(&esg(
        &[
            "synth", "--seed", "11", "--firms", "80", "--assets", "1", "--bars", "2",
            "--out-dir", synth_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let out_dir = tmp.join("out");
    assert_ok(&esg(
        &[
            "ensemble",
            "--input",
            synth_dir.join("esg_panel.csv").to_str().unwrap(),
            "--method",
            "pca",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let side = read(out_dir.join("pca_loadings.csv"));
    let loadings: Vec<f64> = side
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(loadings.len(), 4);
    let norm: f64 = loadings.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() <= 1e-9);
    assert!(read(out_dir.join("ensemble_scores.csv")).lines().count() > 1);
}

#[test]
fn dmv_emits_the_worked_example_weight() {
    let tmp = TempDir::new("dmv");
    let out_dir = tmp.join("out");
    // Defaults already carry the worked example: premium 0.06, b = 1,
    // gamma = 2, sigma2_m = 0.04, mu_g = 0.02, theta = 1, sigma2_g = 0.01.
    assert_ok(&esg(&["dmv", "--out-dir", out_dir.to_str().unwrap()], tmp.path()));
    let text = read(out_dir.join("dmv.csv"));
    let row = text
        .lines()
        .find(|l| l.starts_with("U,1,"))
        .expect("type U, b = 1 row present");
    let w: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((w - 0.08 / 0.09).abs() <= 1e-9, "w = {w}");
}

#[test]
fn set_flag_overrides_config_values() {
    let tmp = TempDir::new("set-override");
    // Killing the ESG term (mu_g = 0, sigma2_g = 0) makes all three
    // investor types agree on the weight.
    let out_dir = tmp.join("out");
    assert_ok(&esg(
        &[
            "dmv",
            "--set",
            "market.mu_g=0",
            "--set",
            "market.sigma2_g=0",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let text = read(out_dir.join("dmv.csv"));
    let w_of = |prefix: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with(prefix))
            .unwrap()
            .split(',')
            .nth(4)
            .unwrap()
            .parse()
            .unwrap()
    };
    let (wi, wn, wu) = (w_of("I,1,"), w_of("N,1,"), w_of("U,1,"));
    assert_eq!(wi, wn);
    assert_eq!(wn, wu);
    assert!((wi - 0.75).abs() < 1e-12, "w = {wi}");
}

#[test]
fn capm_outputs_match_library_results() {
    let tmp = TempDir::new("capm");
    std::fs::write(
        tmp.join("means.csv"),
        "asset,mu_excess,mu_esg\naa,0.08,0.4\nbb,0.05,-0.2\n",
    )
    .unwrap();
    std::fs::write(
        tmp.join("cov_returns.csv"),
        "asset,aa,bb\naa,0.04,0.005\nbb,0.005,0.02\n",
    )
    .unwrap();
    std::fs::write(tmp.join("cov_esg.csv"), "asset,aa,bb\naa,0.09,0\nbb,0,0.04\n").unwrap();
    std::fs::write(
        tmp.join("agents.csv"),
        "weight,gamma,b,theta\n0.5,2,0.3,2\n0.5,3,1.8,1\n",
    )
    .unwrap();
    let out_dir = tmp.join("out");
    assert_ok(&esg(
        &[
            "capm",
            "--means",
            tmp.join("means.csv").to_str().unwrap(),
            "--cov-returns",
            tmp.join("cov_returns.csv").to_str().unwrap(),
            "--cov-esg",
            tmp.join("cov_esg.csv").to_str().unwrap(),
            "--agents",
            tmp.join("agents.csv").to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));

    // Recompute with the library and compare cell-by-cell.
    use esg_core::capm::*;
    use nalgebra::{DMatrix, DVector};
    let u = AssetUniverse::new(
        DVector::from_vec(vec![0.08, 0.05]),
        DMatrix::from_row_slice(2, 2, &[0.04, 0.005, 0.005, 0.02]),
        DVector::from_vec(vec![0.4, -0.2]),
        DMatrix::from_row_slice(2, 2, &[0.09, 0.0, 0.0, 0.04]),
    )
    .unwrap();
    let pop = AgentPopulation::new(vec![
        Agent { weight: 0.5, gamma: 2.0, b: 0.3, theta: 2.0 },
        Agent { weight: 0.5, gamma: 3.0, b: 1.8, theta: 1.0 },
    ])
    .unwrap();
    let expect = capm_no_uncertainty(&u, &pop).unwrap();
    let text = read(out_dir.join("capm_no_uncertainty.csv"));
    for (i, line) in text.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let beta: f64 = cells[1].parse().unwrap();
        let alpha: f64 = cells[2].parse().unwrap();
        assert!((beta - expect.beta[i]).abs() <= 1e-12);
        assert!((alpha - expect.alpha[i]).abs() <= 1e-12);
    }
    assert!(out_dir.join("gamma_mu.csv").exists());
    assert!(out_dir.join("b_mu.csv").exists());
    let agg = read(out_dir.join("aggregates.txt"));
    assert!(agg.contains("gamma_M = "));
}

#[test]
fn missing_input_exits_one_and_names_the_path() {
    let tmp = TempDir::new("missing");
    let out = esg(
        &[
            "corr",
            "--input",
            "no-such-panel.csv",
            "--out-dir",
            tmp.join("o").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: category=config"), "stderr: {err}");
    assert!(err.contains("no-such-panel.csv"), "stderr: {err}");
}

#[test]
fn malformed_cell_exits_two() {
    let tmp = TempDir::new("badcell");
    let input = tmp.join("panel.csv");
    // "wat" parses as neither a decimal nor a letter tier, and the column
    // is mixed so letter auto-detection stays off.
    std::fs::write(&input, "firm,SA\nacme,55.5\nbolt,wat\n").unwrap();
    let out = esg(
        &[
            "corr",
            "--input",
            input.to_str().unwrap(),
            "--out-dir",
            tmp.join("o").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: category=data"));
}

#[test]
fn degenerate_column_exits_three() {
    let tmp = TempDir::new("degenerate");
    let input = tmp.join("panel.csv");
    std::fs::write(&input, "firm,SA,RS\nacme,50,10\nbolt,50,20\ncorp,50,30\n").unwrap();
    let out = esg(
        &[
            "corr",
            "--input",
            input.to_str().unwrap(),
            "--out-dir",
            tmp.join("o").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: category=numeric"));
}

#[test]
fn backtest_pipeline_runs_and_reproduces() {
    let tmp = TempDir::new("backtest");
    let synth_dir = tmp.join("synth");
    assert_ok(&esg(
        &[
            "synth", "--seed", "19", "--firms", "4", "--assets", "4", "--bars", "1900",
            "--out-dir", synth_dir.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let config = format!(
        "[data]\n\
         panel = {p}/esg_panel.csv\n\
         asset.asset0 = {p}/prices_asset0.csv\n\
         asset.asset1 = {p}/prices_asset1.csv\n\
         asset.asset2 = {p}/prices_asset2.csv\n\
         asset.asset3 = {p}/prices_asset3.csv\n\
         [run]\n\
         seed = 5\n\
         periods_per_year = 365\n\
         [strategy.rater-msci]\n\
         source = rater:MSCI\n\
         reward = dmv-U\n\
         [strategy.ens-median]\n\
         source = ensemble:median\n\
         reward = dmv-N\n\
         [strategy.ens-maxmin]\n\
         source = ensemble:alpha-maxmin\n\
         reward = dmv-U\n\
         optimizer = cem\n\
         population = 16\n\
         iterations = 10\n",
        p = synth_dir.display()
    );
    let cfg_path = tmp.join("run.cfg");
    std::fs::write(&cfg_path, &config).unwrap();

    let run = |out: &str| {
        let out_dir = tmp.join(out);
        let r = esg(
            &[
                "backtest",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out-dir",
                out_dir.to_str().unwrap(),
            ],
            tmp.path(),
        );
        assert_ok(&r);
        (read(out_dir.join("report.csv")), read(out_dir.join("ranks.csv")))
    };
    let (report_a, ranks_a) = run("a");
    let (report_b, ranks_b) = run("b");
    assert_eq!(report_a, report_b, "report.csv not byte-identical");
    assert_eq!(ranks_a, ranks_b);

    // 1900 daily bars from 2007-06-30 cover ~5.2 years: two 3y+1y windows.
    let windows: std::collections::BTreeSet<&str> = report_a
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(windows.len(), 2);
    let header = ranks_a.lines().next().unwrap();
    assert_eq!(header, "window,rater-msci,ens-median,ens-maxmin");
    for line in ranks_a.lines().skip(1) {
        let mut ranks: Vec<usize> =
            line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    // The manifest records hashes for config, inputs, and outputs.
    let manifest = read(tmp.join("a/manifest.txt"));
    assert!(manifest.contains("command = backtest"));
    assert!(manifest.contains("config_hash = sha256:"));
    assert!(manifest.contains("input.esg_panel.csv = sha256:"));
    assert!(manifest.contains("output.report.csv = sha256:"));

    // --optimizer closed-form forces every strategy onto the closed form;
    // the CEM strategy's report changes, and stochastic-budget flags stop
    // mattering.
    let out_cf = tmp.join("cf");
    assert_ok(&esg(
        &[
            "backtest",
            "--config",
            cfg_path.to_str().unwrap(),
            "--optimizer",
            "closed-form",
            "--population",
            "99",
            "--iterations",
            "3",
            "--out-dir",
            out_cf.to_str().unwrap(),
        ],
        tmp.path(),
    ));
    let report_cf = read(out_cf.join("report.csv"));
    assert_ne!(report_cf, report_a);
    let maxmin_rows = |text: &str| -> Vec<String> {
        text.lines().filter(|l| l.contains("ens-maxmin")).map(str::to_string).collect()
    };
    assert_ne!(maxmin_rows(&report_cf), maxmin_rows(&report_a));
}
