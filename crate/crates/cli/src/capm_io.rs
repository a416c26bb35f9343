//! CSV tables for the CAPM command: per-asset means, square covariance
//! matrices, and the agent population table.

use crate::CliError;
use esg_core::capm::{Agent, AgentPopulation};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    if !path.exists() {
        return Err(CliError::config(format!("input file not found: {}", path.display())));
    }
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| CliError::data(format!("{}: {s:?} is not a number", path.display())))
}

/// `asset,mu_excess,mu_esg` — returns (assets, mu_excess, mu_esg).
pub fn read_means(path: &Path) -> Result<(Vec<String>, DVector<f64>, DVector<f64>), CliError> {
    let mut rdr = open(path)?;
    let mut assets = Vec::new();
    let mut mu_r = Vec::new();
    let mut mu_g = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if rec.len() != 3 {
            return Err(CliError::data(format!(
                "{}: expected asset,mu_excess,mu_esg",
                path.display()
            )));
        }
        assets.push(rec[0].to_string());
        mu_r.push(parse_f64(path, &rec[1])?);
        mu_g.push(parse_f64(path, &rec[2])?);
    }
    if assets.is_empty() {
        return Err(CliError::data(format!("{}: no assets", path.display())));
    }
    Ok((assets, DVector::from_vec(mu_r), DVector::from_vec(mu_g)))
}

/// Square matrix CSV: header `asset,<a1>,<a2>,...`; one labeled row per
/// asset, in the same order as `assets`.
pub fn read_matrix(path: &Path, assets: &[String]) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = open(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().skip(1).collect();
    if cols != assets.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        return Err(CliError::data(format!(
            "{}: column order must match the asset list {:?}",
            path.display(),
            assets
        )));
    }
    let n = assets.len();
    let mut m = DMatrix::zeros(n, n);
    let mut row = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if row >= n || rec.len() != n + 1 || &rec[0] != assets[row].as_str() {
            return Err(CliError::data(format!(
                "{}: row {} does not match the asset list",
                path.display(),
                row + 1
            )));
        }
        for j in 0..n {
            m[(row, j)] = parse_f64(path, &rec[j + 1])?;
        }
        row += 1;
    }
    if row != n {
        return Err(CliError::data(format!("{}: expected {n} rows, got {row}", path.display())));
    }
    Ok(m)
}

pub fn write_matrix(
    path: &Path,
    labels: &[String],
    m: &DMatrix<f64>,
) -> Result<(), CliError> {
    let mut out = String::from("asset");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for j in 0..labels.len() {
            out.push_str(&format!(",{}", m[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}


/// `weight,gamma,b,theta` rows.
pub fn read_agents(path: &Path) -> Result<AgentPopulation, CliError> {
    let mut rdr = open(path)?;
    let mut agents = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if rec.len() != 4 {
            return Err(CliError::data(format!(
                "{}: expected weight,gamma,b,theta",
                path.display()
            )));
        }
        agents.push(Agent {
            weight: parse_f64(path, &rec[0])?,
            gamma: parse_f64(path, &rec[1])?,
            b: parse_f64(path, &rec[2])?,
            theta: parse_f64(path, &rec[3])?,
        });
    }
    Ok(AgentPopulation::new(agents)?)
}
