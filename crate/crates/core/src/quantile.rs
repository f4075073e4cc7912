//! Distribution-free confidence curves for quantiles from order statistics.
//!
//! s_n(a, b) = P{Y_(a) <= mu_p <= Y_(b)} = P{a <= Bin(n, p) <= b - 1} for
//! continuous F. Intervals [Y_(a), Y_(b)] are grown one rank at a time from
//! the pair straddling the empirical p-th rank, which gives a nested family
//! and a staircase confidence curve.

use rayon::prelude::*;
use serde::Serialize;

use crate::cd::{fmt17, ConfidenceCurve, CurveShape};
use crate::error::{invalid, Error, Result};
use crate::special::binom_pmf;

/// Sorted data with a flag for ties.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSample {
    values: Vec<f64>,
    ties_present: bool,
}

impl OrderedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("sample values must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        let ties_present = values.windows(2).any(|w| w[0] == w[1]);
        Ok(Self {
            values,
            ties_present,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn ties_present(&self) -> bool {
        self.ties_present
    }

    /// Y_(i) with 1-based rank i.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// Linearly interpolated sample quantile at position (n - 1) p.
    pub fn quantile(&self, p: f64) -> f64 {
        let h = (self.n() - 1) as f64 * p;
        let lo = h.floor() as usize;
        if lo + 1 >= self.n() {
            return self.values[self.n() - 1];
        }
        self.values[lo] + (h - lo as f64) * (self.values[lo + 1] - self.values[lo])
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        invalid(format!("quantile level {p} outside (0, 1)"))
    }
}

/// s_n(a, b) for 1 <= a <= b <= n.
pub fn interval_coverage(a: usize, b: usize, n: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if !(1 <= a && a <= b && b <= n) {
        return invalid(format!("need 1 <= a <= b <= n, got a = {a}, b = {b}, n = {n}"));
    }
    let s: f64 = (a..b).map(|j| binom_pmf(j as u64, n as u64, p)).sum();
    Ok(s.min(1.0))
}

/// One member [Y_(a), Y_(b)] of the nested family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankInterval {
    pub a: usize,
    pub b: usize,
    pub lower: f64,
    pub upper: f64,
    pub coverage: f64,
}

/// A level-specific region picked from the nested family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelRegion {
    pub requested: f64,
    pub interval: RankInterval,
    /// The requested level exceeds the largest attainable coverage and the
    /// full range [Y_(1), Y_(n)] was returned instead.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    pub p: f64,
    /// Nested intervals in order of increasing coverage.
    pub intervals: Vec<RankInterval>,
    pub point_estimate: f64,
    pub regions: Vec<LevelRegion>,
    pub notes: Vec<String>,
}

impl QuantileCurve {
    /// Smallest exact coverage among the intervals containing `psi`, and 1
    /// outside them all.
    pub fn cc(&self, psi: f64) -> f64 {
        self.intervals
            .iter()
            .find(|iv| iv.lower <= psi && psi <= iv.upper)
            .map_or(1.0, |iv| iv.coverage)
    }

    pub fn max_coverage(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.coverage)
    }

    /// The smallest nested interval whose exact coverage is at least `level`.
    pub fn region(&self, level: f64) -> Result<LevelRegion> {
        if !(0.0..=1.0).contains(&level) {
            return invalid(format!("level {level} outside [0, 1]"));
        }
        let last = *self.intervals.last().expect("nonempty family");
        Ok(match self.intervals.iter().find(|iv| iv.coverage >= level) {
            Some(iv) => LevelRegion {
                requested: level,
                interval: *iv,
                truncated: false,
            },
            None => LevelRegion {
                requested: level,
                interval: last,
                truncated: true,
            },
        })
    }

    /// The staircase on the distinct interval endpoints and the point
    /// estimate.
    pub fn to_curve(&self) -> Result<ConfidenceCurve> {
        let mut nodes: Vec<f64> = self
            .intervals
            .iter()
            .flat_map(|iv| [iv.lower, iv.upper])
            .chain(std::iter::once(self.point_estimate))
            .collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        if nodes.len() < 2 {
            return invalid("all observations are equal; no curve to draw");
        }
        let cc = nodes.iter().map(|&x| self.cc(x)).collect();
        let curve = ConfidenceCurve::new(nodes, cc)?.with_shape(CurveShape::Staircase);
        Ok(match curve.clone().with_point_estimate(self.point_estimate) {
            Ok(c) => c,
            Err(_) => curve,
        })
    }
}

/// The nested family for quantile level `p`, with conservative regions at
/// each of `levels`.
pub fn quantile_cc(sample: &OrderedSample, p: f64, levels: &[f64]) -> Result<QuantileCurve> {
    check_p(p)?;
    let n = sample.n();
    if n < 2 {
        return invalid("need at least two observations");
    }
    let pmf: Vec<f64> = (0..=n).map(|j| binom_pmf(j as u64, n as u64, p)).collect();
    let mut a = ((n - 1) as f64 * p).floor() as usize + 1;
    let mut b = a + 1;
    let mut cover = pmf[a];
    let interval = |a: usize, b: usize, cover: f64| RankInterval {
        a,
        b,
        lower: sample.order_stat(a),
        upper: sample.order_stat(b),
        coverage: cover.min(1.0),
    };
    let mut intervals = vec![interval(a, b, cover)];
    let (mut left_steps, mut right_steps) = (0usize, 0usize);
    while a > 1 || b < n {
        let gain_left = if a > 1 { pmf[a - 1] } else { -1.0 };
        let gain_right = if b < n { pmf[b] } else { -1.0 };
        let go_left = gain_left > gain_right || (gain_left == gain_right && left_steps <= right_steps);
        if go_left {
            a -= 1;
            left_steps += 1;
            cover += gain_left;
        } else {
            cover += gain_right;
            b += 1;
            right_steps += 1;
        }
        intervals.push(interval(a, b, cover));
    }
    // the full range is known in closed form; avoid drift from the running sum
    if let Some(last) = intervals.last_mut() {
        last.coverage = 1.0 - pmf[0] - pmf[n];
    }
    let mut curve = QuantileCurve {
        p,
        intervals,
        point_estimate: sample.quantile(p),
        regions: Vec::new(),
        notes: Vec::new(),
    };
    for &level in levels {
        let r = curve.region(level)?;
        if r.truncated {
            curve.notes.push(format!(
                "level {level} exceeds the largest attainable coverage {:.6}; using [Y_(1), Y_(n)]",
                curve.max_coverage()
            ));
        }
        curve.regions.push(r);
    }
    if sample.ties_present() {
        curve
            .notes
            .push("sample has ties; coverage statements hold conservatively".into());
    }
    Ok(curve)
}

/// Curves for several quantile levels, computed in parallel.
pub fn quantile_panel(sample: &OrderedSample, ps: &[f64], levels: &[f64]) -> Result<Vec<QuantileCurve>> {
    ps.par_iter().map(|&p| quantile_cc(sample, p, levels)).collect()
}

/// Long-format CSV `p,focus,cc` over the staircase nodes of each curve.
pub fn write_quantile_csv(curves: &[QuantileCurve]) -> Result<String> {
    let mut out = String::from("p,focus,cc\n");
    for c in curves {
        let curve = c.to_curve()?;
        for (x, v) in curve.focus_values().iter().zip(curve.cc_values()) {
            out.push_str(&format!("{},{},{}\n", c.p, fmt17(*x), fmt17(*v)));
        }
    }
    Ok(out)
}
