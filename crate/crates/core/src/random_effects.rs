//! CDs for the spread parameter of a normal random-effects model.

use serde::{Deserialize, Serialize};

use crate::cd::CdGrid;
use crate::error::{invalid, Error, Result};
use crate::interp::check_strictly_increasing;
use crate::stats::mean;

/// Per-group estimates with known standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    estimates: Vec<f64>,
    std_errors: Vec<f64>,
}

impl EffectEstimates {
    pub fn new(estimates: Vec<f64>, std_errors: Vec<f64>) -> Result<Self> {
        if estimates.len() != std_errors.len() {
            return Err(Error::Data(format!(
                "{} estimates but {} standard errors",
                estimates.len(),
                std_errors.len()
            )));
        }
        if estimates.len() < 2 {
            return Err(Error::Data("need at least two estimates".into()));
        }
        if estimates.iter().any(|b| !b.is_finite()) {
            return Err(Error::Data("estimates must be finite".into()));
        }
        if std_errors.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Data("standard errors must be positive".into()));
        }
        Ok(Self {
            estimates,
            std_errors,
        })
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn k(&self) -> usize {
        self.estimates.len()
    }
}

/// Q(tau) = sum_j (b_j - bbar(tau))^2 / (s_j^2 + tau^2), with bbar(tau) the
/// precision-weighted mean.
pub fn heterogeneity_q(effects: &EffectEstimates, tau: f64) -> f64 {
    let t2 = tau * tau;
    let w: Vec<f64> = effects.std_errors.iter().map(|s| 1.0 / (s * s + t2)).collect();
    let wsum: f64 = w.iter().sum();
    let bbar = w.iter().zip(&effects.estimates).map(|(w, b)| w * b).sum::<f64>() / wsum;
    w.iter()
        .zip(&effects.estimates)
        .map(|(w, b)| w * (b - bbar).powi(2))
        .sum()
}

/// The spread CD at one point, C(tau) = 1 - Gamma_{k-1}(Q(tau)).
pub fn tau_cd_at(effects: &EffectEstimates, tau: f64) -> f64 {
    let q = heterogeneity_q(effects, tau.max(0.0));
    crate::special::gamma_inc_upper(0.5 * (effects.k() - 1) as f64, 0.5 * q)
}

/// The spread CD on a grid that starts at tau = 0; C(0) is kept as a point
/// mass at the boundary.
pub fn tau_cd(effects: &EffectEstimates, grid: &[f64]) -> Result<CdGrid> {
    match grid.first() {
        Some(&t) if t == 0.0 => {}
        _ => return invalid("tau grid must start at 0"),
    }
    check_strictly_increasing(grid)?;
    let values: Vec<f64> = grid.iter().map(|&t| tau_cd_at(effects, t)).collect();
    let atom = values[0];
    CdGrid::new(grid.to_vec(), values, Some(atom), "tau")
}

/// One group of a raw (x, y) series.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSeries {
    pub group: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Least-squares slope of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub group: String,
    pub slope: f64,
    /// sigma_hat / sqrt(Sxx), with sigma_hat^2 = RSS / (n - 2).
    pub std_error: f64,
    pub n: usize,
}

pub fn regression_slopes(series: &[GroupSeries]) -> Result<Vec<SlopeFit>> {
    series
        .iter()
        .map(|s| {
            if s.x.len() != s.y.len() {
                return Err(Error::Data(format!("group {}: x and y lengths differ", s.group)));
            }
            let n = s.x.len();
            if n < 3 {
                return Err(Error::Data(format!("group {}: need at least 3 points, got {n}", s.group)));
            }
            let xbar = mean(&s.x);
            let ybar = mean(&s.y);
            let sxx: f64 = s.x.iter().map(|x| (x - xbar).powi(2)).sum();
            if !(sxx > 0.0) {
                return Err(Error::Data(format!("group {}: all x values are equal", s.group)));
            }
            let sxy: f64 = s.x.iter().zip(&s.y).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
            let slope = sxy / sxx;
            let rss: f64 = s
                .x
                .iter()
                .zip(&s.y)
                .map(|(x, y)| (y - ybar - slope * (x - xbar)).powi(2))
                .sum();
            Ok(SlopeFit {
                group: s.group.clone(),
                slope,
                std_error: (rss / (n - 2) as f64 / sxx).sqrt(),
                n,
            })
        })
        .collect()
}

/// Slopes as effect estimates; fails if any fit is exact (zero standard error).
pub fn effects_from_slopes(fits: &[SlopeFit]) -> Result<EffectEstimates> {
    EffectEstimates::new(
        fits.iter().map(|f| f.slope).collect(),
        fits.iter().map(|f| f.std_error).collect(),
    )
}

fn csv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn column(header: &[&str], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| *h == name)
        .ok_or_else(|| Error::Parse(format!("missing column '{name}'")))
}

fn number(field: &str, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: '{field}' is not a number")))
}

/// Reads `group,x,y` rows (any column order); groups keep first-seen order.
pub fn read_series_csv(text: &str) -> Result<Vec<GroupSeries>> {
    let mut rows = csv_rows(text);
    let (_, header) = rows.next().ok_or_else(|| Error::Parse("empty series table".into()))?;
    let (gi, xi, yi) = (column(&header, "group")?, column(&header, "x")?, column(&header, "y")?);
    let mut out: Vec<GroupSeries> = Vec::new();
    for (line, f) in rows {
        if f.len() != header.len() {
            return Err(Error::Parse(format!("line {line}: expected {} fields", header.len())));
        }
        let (x, y) = (number(f[xi], line)?, number(f[yi], line)?);
        match out.iter_mut().find(|s| s.group == f[gi]) {
            Some(s) => {
                s.x.push(x);
                s.y.push(y);
            }
            None => out.push(GroupSeries {
                group: f[gi].to_string(),
                x: vec![x],
                y: vec![y],
            }),
        }
    }
    Ok(out)
}

/// Reads `estimate,std_error` rows.
pub fn read_effects_csv(text: &str) -> Result<EffectEstimates> {
    let mut rows = csv_rows(text);
    let (_, header) = rows.next().ok_or_else(|| Error::Parse("empty effects table".into()))?;
    let (ei, si) = (column(&header, "estimate")?, column(&header, "std_error")?);
    let mut est = Vec::new();
    let mut se = Vec::new();
    for (line, f) in rows {
        if f.len() != header.len() {
            return Err(Error::Parse(format!("line {line}: expected {} fields", header.len())));
        }
        est.push(number(f[ei], line)?);
        se.push(number(f[si], line)?);
    }
    EffectEstimates::new(est, se)
}
