//! Combining CDs: the weighted normal-score rule, conversion of a CD to a
//! confidence log-likelihood, and II-CC-FF fusion (independent inspection,
//! confidence conversion, focused fusion).

use crate::cd::{cd_from_cc, CdGrid, ConfidenceCurve, CurveShape};
use crate::error::{invalid, Error, Result};
use crate::interp::{check_strictly_increasing, Pchip};
use crate::likelihood::{profile_sweep_partial, FocusMap};
use crate::optimize::{self, Bound, OptimOptions};
use crate::special;

/// Interior clipping bound for normal scores.
pub const CLIP: f64 = 1e-12;

/// One source CD entering a combination.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub cd: CdGrid,
    pub source_id: String,
    pub weight: Option<f64>,
}

impl StudySummary {
    pub fn new(cd: CdGrid, source_id: impl Into<String>) -> Self {
        Self {
            cd,
            source_id: source_id.into(),
            weight: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }
}

/// A fused CD together with any numerical notes produced on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub cd: CdGrid,
    pub cc: ConfidenceCurve,
    pub warnings: Vec<String>,
}

fn clip(c: f64, clipped: &mut usize) -> f64 {
    if c < CLIP {
        *clipped += 1;
        CLIP
    } else if c > 1.0 - CLIP {
        *clipped += 1;
        1.0 - CLIP
    } else {
        c
    }
}

fn normalized_weights(summaries: &[StudySummary]) -> Result<Vec<f64>> {
    let k = summaries.len();
    if summaries.iter().all(|s| s.weight.is_none()) {
        return Ok(vec![1.0 / (k as f64).sqrt(); k]);
    }
    let w: Vec<f64> = summaries
        .iter()
        .map(|s| s.weight.ok_or_else(|| Error::InvalidArgument(format!("source {} has no weight", s.source_id))))
        .collect::<Result<_>>()?;
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid("weights must be nonnegative and finite");
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return invalid("weights are all zero");
    }
    Ok(w.iter().map(|v| v / norm).collect())
}

/// C(psi) = Phi(sum_j w_j Phi^{-1}(C_j(psi))) with sum_j w_j^2 = 1
/// (default w_j = 1/sqrt(k)).
pub fn normal_combine(summaries: &[StudySummary], grid: &[f64]) -> Result<Fused> {
    if summaries.is_empty() {
        return invalid("need at least one source");
    }
    check_strictly_increasing(grid)?;
    let w = normalized_weights(summaries)?;
    let mut clipped = 0usize;
    let values: Vec<f64> = grid
        .iter()
        .map(|&psi| {
            let score: f64 = summaries
                .iter()
                .zip(&w)
                .map(|(s, w)| w * special::norm_quantile(clip(s.cd.eval(psi), &mut clipped)))
                .sum();
            special::norm_cdf(score)
        })
        .collect();
    let mut warnings = Vec::new();
    if clipped > 0 {
        warnings.push(format!(
            "{clipped} source CD values at 0 or 1 clipped to [{CLIP:e}, 1 - {CLIP:e}]"
        ));
    }
    let cd = CdGrid::new(grid.to_vec(), values, None, summaries[0].cd.label())?;
    let cc = crate::cd::cc_from_cd(&cd);
    Ok(Fused { cd, cc, warnings })
}

/// l_c(psi) = -Phi^{-1}(C(psi))^2 / 2, tabulated on the CD's grid and
/// evaluated between nodes by monotone interpolation of the normal score.
#[derive(Debug, Clone)]
pub struct ConfidenceLogLik {
    focus_values: Vec<f64>,
    values: Vec<f64>,
    scores: Vec<f64>,
    interp: Pchip,
    median: f64,
    clipped: usize,
    label: String,
}

impl ConfidenceLogLik {
    pub fn focus_values(&self) -> &[f64] {
        &self.focus_values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Normal score Phi^{-1}(C) at `psi`; linear extrapolation of the end
    /// secants outside the grid.
    pub fn score(&self, psi: f64) -> f64 {
        let x = &self.focus_values;
        let z = &self.scores;
        let n = x.len();
        if n >= 2 && psi < x[0] {
            return z[0] + (psi - x[0]) * (z[1] - z[0]) / (x[1] - x[0]);
        }
        if n >= 2 && psi > x[n - 1] {
            return z[n - 1] + (psi - x[n - 1]) * (z[n - 1] - z[n - 2]) / (x[n - 1] - x[n - 2]);
        }
        self.interp.eval(psi)
    }

    pub fn eval(&self, psi: f64) -> f64 {
        let z = self.score(psi);
        -0.5 * z * z
    }

    /// The CD median, where l_c attains its maximum 0.
    pub fn median(&self) -> f64 {
        self.median
    }

    /// Number of grid values clipped away from 0 or 1.
    pub fn clipped(&self) -> usize {
        self.clipped
    }
}

pub fn confidence_loglik(cd: &CdGrid) -> Result<ConfidenceLogLik> {
    let mut clipped = 0usize;
    let scores: Vec<f64> = cd
        .cd_values()
        .iter()
        .map(|&c| special::norm_quantile(clip(c, &mut clipped)))
        .collect();
    let values = scores.iter().map(|z| -0.5 * z * z).collect();
    let x = cd.focus_values().to_vec();
    let interp = Pchip::new(&x, &scores);
    let median = if scores[0] >= 0.0 {
        x[0]
    } else if *scores.last().unwrap() <= 0.0 {
        x[x.len() - 1]
    } else {
        interp.inverse_nondecreasing(0.0)
    };
    Ok(ConfidenceLogLik {
        focus_values: x,
        values,
        scores,
        interp,
        median,
        clipped,
        label: cd.label().to_string(),
    })
}

/// The same conversion through the curve: l_c = -Gamma_1^{-1}(cc) / 2.
pub fn confidence_loglik_from_cc(cc: &ConfidenceCurve) -> Vec<f64> {
    cc.cc_values()
        .iter()
        .map(|&v| -0.5 * special::chi2_1_quantile(v.min(1.0 - 2.0 * CLIP)))
        .collect()
}

/// The fusion target phi(psi_1, ..., psi_k).
#[derive(Debug, Clone)]
pub enum FusionFocus {
    /// All sources share one parameter: phi = psi_1 = ... = psi_k.
    Common,
    /// phi = psi_1 - psi_2 (two sources).
    Difference,
    /// phi = psi_1 / psi_2 (two sources, positive parameters).
    Ratio,
    /// Any smooth map of the k source parameters.
    Custom(FocusMap),
}

/// Focused fusion: l_c(psi) = sum_j l_{c,j}(psi_j) is profiled over
/// {phi(psi) = phi_0} at each grid value, the deviance
/// 2{max l_c - l_c,prof(phi_0)} is mapped through Gamma_1, and the fused CD
/// is read off the resulting curve. Grid values where the focus is
/// infeasible are dropped with a warning.
pub fn iiccff_fuse(sources: &[ConfidenceLogLik], focus: &FusionFocus, grid: &[f64]) -> Result<Fused> {
    if sources.is_empty() {
        return invalid("need at least one source");
    }
    check_strictly_increasing(grid)?;
    let k = sources.len();
    let neg = |psi: &[f64]| -> f64 { -sources.iter().zip(psi).map(|(s, &p)| s.eval(p)).sum::<f64>() };
    let opts = OptimOptions::default();
    let (values, warnings, phi_hat): (Vec<Option<f64>>, Vec<String>, f64) = match focus {
        FusionFocus::Common => {
            let f1 = |x: &[f64]| neg(&vec![x[0]; k]);
            let start = sources.iter().map(|s| s.median()).sum::<f64>() / k as f64;
            let best = optimize::minimize(&f1, &[start], &opts)?;
            let min = grid
                .iter()
                .map(|&g| f1(&[g]))
                .fold(best.value, f64::min);
            let dev = grid.iter().map(|&g| Some(2.0 * (f1(&[g]) - min))).collect();
            (dev, Vec::new(), best.x[0])
        }
        other => {
            let (map, bounds) = match other {
                FusionFocus::Difference | FusionFocus::Ratio if k != 2 => {
                    return invalid("difference and ratio foci need exactly two sources")
                }
                FusionFocus::Difference => (FocusMap::function("psi1 - psi2", |p| p[0] - p[1]), vec![Bound::Free; 2]),
                FusionFocus::Ratio => (FocusMap::function("psi1 / psi2", |p| p[0] / p[1]), vec![Bound::Positive; 2]),
                FusionFocus::Custom(m) => (m.clone(), vec![Bound::Free; k]),
                FusionFocus::Common => unreachable!(),
            };
            let theta_hat: Vec<f64> = sources.iter().map(|s| s.median()).collect();
            if bounds.iter().zip(&theta_hat).any(|(b, v)| !b.contains(*v)) {
                return invalid("source medians fall outside the focus domain");
            }
            let phi_hat = map.eval(&theta_hat);
            let min = neg(&theta_hat);
            let results = profile_sweep_partial(&neg, &bounds, &map, grid, &theta_hat, phi_hat, &opts);
            let mut warnings = Vec::new();
            let dev = results
                .into_iter()
                .zip(grid)
                .map(|(r, g)| match r {
                    Ok(m) => Some((2.0 * (m.value - min)).max(0.0)),
                    Err(e) => {
                        warnings.push(format!("focus value {g} excluded: {e}"));
                        None
                    }
                })
                .collect();
            (dev, warnings, phi_hat)
        }
    };
    let (kept_grid, dev): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(values)
        .filter_map(|(g, d)| d.map(|d| (*g, d.max(0.0))))
        .unzip();
    if kept_grid.len() < 2 {
        return Err(Error::Infeasible("fewer than two feasible focus values".into()));
    }
    let cc_values = dev.iter().map(|&d| special::chi2_1_cdf(d)).collect();
    let cc = ConfidenceCurve::new(kept_grid, cc_values)?.with_shape(CurveShape::Smooth);
    let cc = match cc.clone().with_point_estimate(phi_hat) {
        Ok(c) => c,
        Err(_) => cc,
    };
    let cd = cd_from_cc(&cc, "phi")?;
    let mut warnings = warnings;
    let clipped: usize = sources.iter().map(|s| s.clipped()).sum();
    if clipped > 0 {
        warnings.push(format!("{clipped} source CD values clipped before conversion"));
    }
    Ok(Fused { cd, cc, warnings })
}
