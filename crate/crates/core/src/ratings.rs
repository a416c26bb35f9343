//! Multi-rater ESG score ingestion and harmonization.
//!
//! Raters publish on different scales: most use 0–100, one uses a
//! seven-tier letter ladder (CCC worst … AAA best). [`harmonize_msci`]
//! maps the ladder onto 0–100 by splitting the range into seven equal
//! intervals and taking each interval's midpoint, `100(2k−1)/14` for
//! tier index `k = 1..7`.
//!
//! [`EsgPanel`] holds the harmonized firms × raters matrix with explicit
//! missing cells. [`standardize`] z-scores each rater column;
//! [`rater_correlation`] measures cross-rater agreement with
//! pairwise-complete Pearson coefficients.

use nalgebra::DMatrix;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingsError {
    #[error("rater {rater:?} column is constant or has fewer than 2 present values")]
    DegenerateColumn { rater: String },
    #[error("raters {a:?} and {b:?} share only {joint} firms; need at least 3")]
    InsufficientOverlap { a: String, b: String, joint: usize },
    #[error("score {value} for firm {firm:?}, rater {rater:?} is outside [0, 100]")]
    ScoreOutOfRange { firm: String, rater: String, value: f64 },
    #[error("duplicate firm identifier {0:?}")]
    DuplicateFirm(String),
    #[error("duplicate rater identifier {0:?}")]
    DuplicateRater(String),
    #[error("matrix shape does not match identifier lists: {0}")]
    ShapeMismatch(String),
    #[error("cell for firm {firm:?}, rater {rater:?}: {message}")]
    BadCell { firm: String, rater: String, message: String },
    #[error("CSV: {0}")]
    Csv(String),
}

/// Seven-tier letter scale, worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LetterGrade {
    Ccc,
    B,
    Bb,
    Bbb,
    A,
    Aa,
    Aaa,
}

impl LetterGrade {
    pub const ALL: [LetterGrade; 7] = [
        LetterGrade::Ccc,
        LetterGrade::B,
        LetterGrade::Bb,
        LetterGrade::Bbb,
        LetterGrade::A,
        LetterGrade::Aa,
        LetterGrade::Aaa,
    ];

    /// 1-based tier index, CCC = 1 … AAA = 7.
    pub fn tier(self) -> u8 {
        match self {
            LetterGrade::Ccc => 1,
            LetterGrade::B => 2,
            LetterGrade::Bb => 3,
            LetterGrade::Bbb => 4,
            LetterGrade::A => 5,
            LetterGrade::Aa => 6,
            LetterGrade::Aaa => 7,
        }
    }

    pub fn parse(s: &str) -> Option<LetterGrade> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CCC" => Some(LetterGrade::Ccc),
            "B" => Some(LetterGrade::B),
            "BB" => Some(LetterGrade::Bb),
            "BBB" => Some(LetterGrade::Bbb),
            "A" => Some(LetterGrade::A),
            "AA" => Some(LetterGrade::Aa),
            "AAA" => Some(LetterGrade::Aaa),
            _ => None,
        }
    }
}

/// Midpoint of the grade's interval among seven equal partitions of [0, 100].
pub fn harmonize_msci(grade: LetterGrade) -> f64 {
    let k = grade.tier() as f64;
    100.0 * (2.0 * k - 1.0) / 14.0
}

/// Firms × raters score matrix on a common 0–100 scale, with explicit
/// missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct EsgPanel {
    firms: Vec<String>,
    raters: Vec<String>,
    /// Row-major: `scores[firm][rater]`.
    scores: Vec<Vec<Option<f64>>>,
}

impl EsgPanel {
    pub fn new(
        firms: Vec<String>,
        raters: Vec<String>,
        scores: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, RatingsError> {
        check_unique(&firms, RatingsError::DuplicateFirm)?;
        check_unique(&raters, RatingsError::DuplicateRater)?;
        if scores.len() != firms.len() {
            return Err(RatingsError::ShapeMismatch(format!(
                "{} rows for {} firms",
                scores.len(),
                firms.len()
            )));
        }
        for (fi, row) in scores.iter().enumerate() {
            if row.len() != raters.len() {
                return Err(RatingsError::ShapeMismatch(format!(
                    "row {} has {} cells for {} raters",
                    fi,
                    row.len(),
                    raters.len()
                )));
            }
            for (ri, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    if !v.is_finite() || *v < 0.0 || *v > 100.0 {
                        return Err(RatingsError::ScoreOutOfRange {
                            firm: firms[fi].clone(),
                            rater: raters[ri].clone(),
                            value: *v,
                        });
                    }
                }
            }
        }
        Ok(EsgPanel { firms, raters, scores })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn get(&self, firm: usize, rater: usize) -> Option<f64> {
        self.scores[firm][rater]
    }

    pub fn row(&self, firm: usize) -> &[Option<f64>] {
        &self.scores[firm]
    }

    /// Present values of one rater column.
    pub fn column_present(&self, rater: usize) -> Vec<f64> {
        self.scores.iter().filter_map(|row| row[rater]).collect()
    }

    /// Indices of firms with no missing cells.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_firms())
            .filter(|&f| self.scores[f].iter().all(|c| c.is_some()))
            .collect()
    }
}

fn check_unique(
    names: &[String],
    err: impl Fn(String) -> RatingsError,
) -> Result<(), RatingsError> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(err(n.clone()));
        }
    }
    Ok(())
}

/// Panel of per-rater z-scores. Same shape as the source [`EsgPanel`];
/// missing cells stay missing.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedPanel {
    firms: Vec<String>,
    raters: Vec<String>,
    values: Vec<Vec<Option<f64>>>,
}

impl StandardizedPanel {
    /// Build directly from z-values produced elsewhere. Shape and
    /// identifier uniqueness are checked; the z-score convention itself
    /// is trusted to the caller.
    pub fn from_values(
        firms: Vec<String>,
        raters: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, RatingsError> {
        check_unique(&firms, RatingsError::DuplicateFirm)?;
        check_unique(&raters, RatingsError::DuplicateRater)?;
        if values.len() != firms.len() || values.iter().any(|r| r.len() != raters.len()) {
            return Err(RatingsError::ShapeMismatch(
                "value matrix does not match identifier lists".into(),
            ));
        }
        Ok(StandardizedPanel { firms, raters, values })
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn get(&self, firm: usize, rater: usize) -> Option<f64> {
        self.values[firm][rater]
    }

    pub fn row(&self, firm: usize) -> &[Option<f64>] {
        &self.values[firm]
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_firms())
            .filter(|&f| self.values[f].iter().all(|c| c.is_some()))
            .collect()
    }

    /// Unbiased variance of a firm's z-scores across raters, a
    /// dispersion-based measure of how much the raters disagree on it.
    /// `None` when fewer than two raters scored the firm.
    pub fn cross_rater_variance(&self, firm: usize) -> Option<f64> {
        let present: Vec<f64> = self.values[firm].iter().flatten().copied().collect();
        if present.len() < 2 {
            return None;
        }
        Some(crate::linalg::sample_variance(&present))
    }
}

/// Z-score a slice with the unbiased (n−1) standard deviation.
pub fn zscore(xs: &[f64]) -> Result<Vec<f64>, RatingsError> {
    if xs.len() < 2 {
        return Err(RatingsError::DegenerateColumn { rater: String::new() });
    }
    let m = crate::linalg::mean(xs);
    let sd = crate::linalg::sample_variance(xs).sqrt();
    if sd == 0.0 {
        return Err(RatingsError::DegenerateColumn { rater: String::new() });
    }
    Ok(xs.iter().map(|x| (x - m) / sd).collect())
}

/// Z-score each rater column over its present cells.
pub fn standardize(panel: &EsgPanel) -> Result<StandardizedPanel, RatingsError> {
    let mut values: Vec<Vec<Option<f64>>> =
        vec![vec![None; panel.n_raters()]; panel.n_firms()];
    for r in 0..panel.n_raters() {
        let present = panel.column_present(r);
        if present.len() < 2 {
            return Err(RatingsError::DegenerateColumn {
                rater: panel.raters[r].clone(),
            });
        }
        let m = crate::linalg::mean(&present);
        let sd = crate::linalg::sample_variance(&present).sqrt();
        if sd == 0.0 {
            return Err(RatingsError::DegenerateColumn {
                rater: panel.raters[r].clone(),
            });
        }
        for f in 0..panel.n_firms() {
            values[f][r] = panel.get(f, r).map(|v| (v - m) / sd);
        }
    }
    Ok(StandardizedPanel {
        firms: panel.firms.clone(),
        raters: panel.raters.clone(),
        values,
    })
}

/// Pearson correlation matrix across raters using pairwise-complete
/// observations. Each pair needs at least 3 jointly present firms.
pub fn rater_correlation(panel: &EsgPanel) -> Result<DMatrix<f64>, RatingsError> {
    let r = panel.n_raters();
    let mut out = DMatrix::identity(r, r);
    for i in 0..r {
        for j in (i + 1)..r {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for f in 0..panel.n_firms() {
                if let (Some(x), Some(y)) = (panel.get(f, i), panel.get(f, j)) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            if xs.len() < 3 {
                return Err(RatingsError::InsufficientOverlap {
                    a: panel.raters[i].clone(),
                    b: panel.raters[j].clone(),
                    joint: xs.len(),
                });
            }
            let rho = crate::linalg::pearson(&xs, &ys);
            if !rho.is_finite() {
                // Zero variance on the joint subset: correlation undefined.
                return Err(RatingsError::DegenerateColumn {
                    rater: format!("{}/{}", panel.raters[i], panel.raters[j]),
                });
            }
            out[(i, j)] = rho;
            out[(j, i)] = rho;
        }
    }
    Ok(out)
}

/// Read an ESG panel from CSV with header `firm,<rater1>,<rater2>,...`.
///
/// Empty cells are missing. A column whose every non-empty cell parses as
/// a letter tier is harmonized through [`harmonize_msci`]; otherwise all
/// its cells must be decimals in [0, 100].
pub fn read_panel_csv<R: Read>(reader: R) -> Result<EsgPanel, RatingsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| RatingsError::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(RatingsError::Csv("empty header".into()));
    }
    let raters: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
    let mut firms = Vec::new();
    let mut raw: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| RatingsError::Csv(e.to_string()))?;
        if rec.len() != raters.len() + 1 {
            return Err(RatingsError::Csv(format!(
                "row for {:?} has {} fields, expected {}",
                rec.get(0).unwrap_or(""),
                rec.len(),
                raters.len() + 1
            )));
        }
        firms.push(rec[0].to_string());
        raw.push(rec.iter().skip(1).map(|s| s.to_string()).collect());
    }

    // Column-wise letter-grade auto-detection.
    let mut letter_col = vec![false; raters.len()];
    for r in 0..raters.len() {
        let nonempty: Vec<&String> = raw.iter().map(|row| &row[r]).filter(|s| !s.is_empty()).collect();
        letter_col[r] =
            !nonempty.is_empty() && nonempty.iter().all(|s| LetterGrade::parse(s).is_some());
    }

    let mut scores = Vec::with_capacity(firms.len());
    for (fi, row) in raw.iter().enumerate() {
        let mut cells = Vec::with_capacity(raters.len());
        for (ri, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                cells.push(None);
            } else if letter_col[ri] {
                let grade = LetterGrade::parse(cell).expect("detected letter column");
                cells.push(Some(harmonize_msci(grade)));
            } else {
                let v: f64 = cell.parse().map_err(|_| RatingsError::BadCell {
                    firm: firms[fi].clone(),
                    rater: raters[ri].clone(),
                    message: format!("{cell:?} is neither a decimal nor a letter grade"),
                })?;
                cells.push(Some(v));
            }
        }
        scores.push(cells);
    }
    EsgPanel::new(firms, raters, scores)
}

/// Write a panel in the same CSV schema [`read_panel_csv`] accepts.
pub fn write_panel_csv<W: Write>(panel: &EsgPanel, writer: W) -> Result<(), RatingsError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["firm".to_string()];
    header.extend(panel.raters.iter().cloned());
    wtr.write_record(&header)
        .map_err(|e| RatingsError::Csv(e.to_string()))?;
    for f in 0..panel.n_firms() {
        let mut rec = vec![panel.firms[f].clone()];
        for r in 0..panel.n_raters() {
            rec.push(match panel.get(f, r) {
                Some(v) => format!("{v}"),
                None => String::new(),
            });
        }
        wtr.write_record(&rec)
            .map_err(|e| RatingsError::Csv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| RatingsError::Csv(e.to_string()))?;
    Ok(())
}
