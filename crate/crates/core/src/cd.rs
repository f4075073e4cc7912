//! Confidence distributions and confidence curves on focus-parameter grids.
//!
//! A [`CdGrid`] tabulates C(psi) at grid points, optionally with a point mass
//! at the lower boundary. A [`ConfidenceCurve`] tabulates cc(psi), whose
//! sublevel sets are the confidence regions. The two are linked by
//! cc = |1 - 2C|, inverted on either side of the median.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interp::{check_strictly_increasing, linear_interp, Pchip};
use crate::kernels::Probability;
use crate::special;

/// Slack allowed for monotonicity and range checks of tabulated values.
pub const VALUE_TOL: f64 = 1e-10;

/// Where a point estimate came from when the CD does not cross 1/2 on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateFlag {
    /// C > 1/2 at the first grid point; the estimate was pinned there.
    BelowGrid,
    /// C < 1/2 at the last grid point; the estimate was pinned there.
    AboveGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdGrid {
    focus: Vec<f64>,
    cd: Vec<f64>,
    atom: Option<f64>,
    label: String,
}

fn clean_probabilities(values: &[f64], what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() || v < -VALUE_TOL || v > 1.0 + VALUE_TOL {
                invalid(format!("{what} value {v} outside [0, 1]"))
            } else {
                Ok(v.clamp(0.0, 1.0))
            }
        })
        .collect()
}

impl CdGrid {
    /// Builds a CD grid. Values may violate monotonicity by at most
    /// [`VALUE_TOL`]; such round-off is removed with a running maximum.
    /// When `atom` is given, the first grid point is the boundary and its CD
    /// value is set to the atom mass.
    pub fn new(
        focus: Vec<f64>,
        cd: Vec<f64>,
        atom: Option<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_strictly_increasing(&focus)?;
        if focus.len() != cd.len() {
            return invalid(format!(
                "focus grid has {} points but CD has {}",
                focus.len(),
                cd.len()
            ));
        }
        let mut cd = clean_probabilities(&cd, "CD")?;
        let atom = match atom {
            Some(a) => {
                let a = Probability::new(a)?.get();
                cd[0] = a;
                Some(a)
            }
            None => None,
        };
        for i in 1..cd.len() {
            if cd[i] < cd[i - 1] - VALUE_TOL {
                return invalid(format!(
                    "CD decreases from {} to {} at focus {}",
                    cd[i - 1],
                    cd[i],
                    focus[i]
                ));
            }
            if cd[i] < cd[i - 1] {
                cd[i] = cd[i - 1];
            }
        }
        Ok(Self {
            focus,
            cd,
            atom,
            label: label.into(),
        })
    }

    /// Tabulates a CD function on a grid.
    pub fn from_fn(
        grid: &[f64],
        label: impl Into<String>,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let cd = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid.to_vec(), cd, None, label)
    }

    pub fn focus_values(&self) -> &[f64] {
        &self.focus
    }

    pub fn cd_values(&self) -> &[f64] {
        &self.cd
    }

    pub fn atom(&self) -> Option<f64> {
        self.atom
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.focus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.focus.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Monotone interpolation of C between grid points, constant beyond the grid.
    pub fn eval(&self, psi: f64) -> f64 {
        Pchip::new(&self.focus, &self.cd).eval(psi).clamp(0.0, 1.0)
    }

    /// C^{-1}(p) = inf{psi : C(psi) >= p}, by monotone interpolation.
    ///
    /// Probabilities at or below the boundary atom map to the boundary.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if p.is_nan() || !(0.0..=1.0).contains(&p) {
            return invalid(format!("probability {p} outside [0, 1]"));
        }
        let low = self.cd[0];
        let high = self.cd[self.cd.len() - 1];
        if self.atom.is_some() && p <= low {
            return Ok(self.focus[0]);
        }
        if p < low || p > high {
            return Err(Error::OutsideSupport {
                requested: p,
                low,
                high,
            });
        }
        if self.len() == 1 {
            return Ok(self.focus[0]);
        }
        Ok(Pchip::new(&self.focus, &self.cd).inverse_nondecreasing(p))
    }

    /// Median of the CD (the natural point estimate).
    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// Evaluates the CD at new focus points, keeping the atom if the new grid
    /// starts at the same boundary.
    pub fn resample(&self, grid: &[f64]) -> Result<Self> {
        let pchip = Pchip::new(&self.focus, &self.cd);
        let cd = grid.iter().map(|&x| pchip.eval(x).clamp(0.0, 1.0)).collect();
        let atom = self
            .atom
            .filter(|_| grid.first().copied() == self.focus.first().copied());
        Self::new(grid.to_vec(), cd, atom, self.label.clone())
    }
}

/// Whether a curve is smooth between grid nodes or a staircase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CurveShape {
    #[default]
    Smooth,
    /// Piecewise constant: nodes carry their exact values and each open gap
    /// between nodes takes the larger of its two node values.
    Staircase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCurve {
    focus: Vec<f64>,
    cc: Vec<f64>,
    point_estimate: f64,
    estimate_flag: Option<EstimateFlag>,
    shape: CurveShape,
}

impl ConfidenceCurve {
    /// Builds a curve; the point estimate defaults to the grid argmin.
    pub fn new(focus: Vec<f64>, cc: Vec<f64>) -> Result<Self> {
        check_strictly_increasing(&focus)?;
        if focus.len() != cc.len() {
            return invalid("focus and cc lengths differ");
        }
        let cc = clean_probabilities(&cc, "cc")?;
        let m = argmin(&cc);
        Ok(Self {
            point_estimate: focus[m],
            focus,
            cc,
            estimate_flag: None,
            shape: CurveShape::Smooth,
        })
    }

    /// Sets an interior point estimate; it must lie between the grid
    /// neighbours of the argmin.
    pub fn with_point_estimate(mut self, estimate: f64) -> Result<Self> {
        let m = argmin(&self.cc);
        let lo = self.focus[m.saturating_sub(1)];
        let hi = self.focus[(m + 1).min(self.focus.len() - 1)];
        if !(lo..=hi).contains(&estimate) {
            return invalid(format!(
                "point estimate {estimate} not adjacent to the cc minimum at {}",
                self.focus[m]
            ));
        }
        self.point_estimate = estimate;
        Ok(self)
    }

    pub fn with_shape(mut self, shape: CurveShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn focus_values(&self) -> &[f64] {
        &self.focus
    }

    pub fn cc_values(&self) -> &[f64] {
        &self.cc
    }

    pub fn point_estimate(&self) -> f64 {
        self.point_estimate
    }

    pub fn estimate_flag(&self) -> Option<EstimateFlag> {
        self.estimate_flag
    }

    pub fn shape(&self) -> CurveShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.focus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.focus.is_empty()
    }

    /// cc at an arbitrary focus value (linear, or staircase, between nodes).
    pub fn eval(&self, psi: f64) -> f64 {
        match self.shape {
            CurveShape::Smooth => linear_interp(&self.focus, &self.cc, psi),
            CurveShape::Staircase => {
                if psi < self.focus[0] || psi > self.focus[self.focus.len() - 1] {
                    return 1.0;
                }
                let i = self.focus.partition_point(|&v| v < psi);
                if self.focus[i] == psi {
                    self.cc[i]
                } else {
                    self.cc[i].max(self.cc[i - 1])
                }
            }
        }
    }

    /// True when cc is nonincreasing up to its minimum and nondecreasing after.
    pub fn is_unimodal(&self, tol: f64) -> bool {
        unimodal_violation(&self.cc, tol).is_none()
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn unimodal_violation(cc: &[f64], tol: f64) -> Option<usize> {
    let m = argmin(cc);
    (1..=m)
        .find(|&i| cc[i] > cc[i - 1] + tol)
        .or_else(|| (m + 1..cc.len()).find(|&i| cc[i] < cc[i - 1] - tol))
}

/// A union of disjoint closed intervals in focus units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    pub level: f64,
    pub segments: Vec<(f64, f64)>,
}

impl ConfidenceRegion {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn contains(&self, psi: f64) -> bool {
        self.segments.iter().any(|&(a, b)| a <= psi && psi <= b)
    }

    /// The hull of all segments.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.segments.first()?.0, self.segments.last()?.1))
    }
}

/// cc(psi) = |1 - 2 C(psi)|, with the point estimate where C crosses 1/2.
pub fn cc_from_cd(cd: &CdGrid) -> ConfidenceCurve {
    let focus = cd.focus_values().to_vec();
    let c = cd.cd_values();
    let cc: Vec<f64> = c.iter().map(|&v| (1.0 - 2.0 * v).abs().min(1.0)).collect();
    let (estimate, flag) = median_crossing(&focus, c);
    let m = argmin(&cc);
    ConfidenceCurve {
        // the crossing always lies between the argmin's neighbours
        point_estimate: estimate.clamp(
            focus[m.saturating_sub(1)],
            focus[(m + 1).min(focus.len() - 1)],
        ),
        focus,
        cc,
        estimate_flag: flag,
        shape: CurveShape::Smooth,
    }
}

fn median_crossing(focus: &[f64], c: &[f64]) -> (f64, Option<EstimateFlag>) {
    let last = focus.len() - 1;
    if c[0] >= 0.5 {
        let flag = if c[0] > 0.5 { Some(EstimateFlag::BelowGrid) } else { None };
        return (focus[0], flag);
    }
    if c[last] < 0.5 {
        return (focus[last], Some(EstimateFlag::AboveGrid));
    }
    let i = c.partition_point(|&v| v < 0.5);
    if c[i] == 0.5 {
        // midpoint of a flat stretch at exactly one half
        let j = i + c[i..].iter().take_while(|&&v| v == 0.5).count() - 1;
        return (0.5 * (focus[i] + focus[j]), None);
    }
    let t = (0.5 - c[i - 1]) / (c[i] - c[i - 1]);
    (focus[i - 1] + t * (focus[i] - focus[i - 1]), None)
}

/// Inverts cc = |1 - 2C| around the point estimate. Fails for curves that
/// are not unimodal.
pub fn cd_from_cc(cc: &ConfidenceCurve, label: impl Into<String>) -> Result<CdGrid> {
    if let Some(i) = unimodal_violation(&cc.cc, VALUE_TOL) {
        return Err(Error::NotUnimodal(format!(
            "cc turns at focus {}",
            cc.focus[i]
        )));
    }
    let est = cc.point_estimate;
    let values = cc
        .focus
        .iter()
        .zip(&cc.cc)
        .map(|(&psi, &v)| if psi <= est { 0.5 * (1.0 - v) } else { 0.5 * (1.0 + v) })
        .collect();
    CdGrid::new(cc.focus.clone(), values, None, label)
}

/// [C^{-1}((1 - level)/2), C^{-1}((1 + level)/2)]; the left end is the
/// boundary when a boundary atom already exceeds the lower tail.
pub fn equi_tailed_interval(cd: &CdGrid, level: f64) -> Result<ConfidenceRegion> {
    if level.is_nan() || !(0.0..1.0).contains(&level) {
        return invalid(format!("level {level} outside [0, 1)"));
    }
    let lo_p = 0.5 * (1.0 - level);
    let hi_p = 0.5 * (1.0 + level);
    let left = match cd.atom() {
        Some(a) if a >= lo_p => cd.focus_values()[0],
        _ => cd.quantile(lo_p)?,
    };
    let right = cd.quantile(hi_p)?;
    Ok(ConfidenceRegion {
        level,
        segments: vec![(left, right)],
    })
}

/// {psi : cc(psi) <= level} on the grid. Crossings between nodes are located
/// by linear interpolation for smooth curves; staircase regions are closed at
/// nodes. An empty result means no grid point reaches the level.
pub fn level_set_region(cc: &ConfidenceCurve, level: f64) -> Result<ConfidenceRegion> {
    if level.is_nan() || !(0.0..=1.0).contains(&level) {
        return invalid(format!("level {level} outside [0, 1]"));
    }
    let x = &cc.focus;
    let y = &cc.cc;
    let n = x.len();
    let mut segments = Vec::new();
    let mut i = 0;
    while i < n {
        if y[i] > level {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && y[i + 1] <= level {
            i += 1;
        }
        let end = i;
        let (left, right) = match cc.shape {
            CurveShape::Staircase => (x[start], x[end]),
            CurveShape::Smooth => {
                let left = if start == 0 {
                    x[0]
                } else {
                    crossing(x[start - 1], y[start - 1], x[start], y[start], level)
                };
                let right = if end + 1 == n {
                    x[n - 1]
                } else {
                    crossing(x[end], y[end], x[end + 1], y[end + 1], level)
                };
                (left, right)
            }
        };
        segments.push((left, right));
        i += 1;
    }
    Ok(ConfidenceRegion { level, segments })
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return x0;
    }
    x0 + (level - y0) / (y1 - y0) * (x1 - x0)
}

/// C(psi) = K(piv(psi)) for a pivot increasing in psi at the observed data.
pub fn cd_from_pivot(
    grid: &[f64],
    pivot: impl Fn(f64) -> f64,
    pivot_cdf: impl Fn(f64) -> f64,
    label: impl Into<String>,
) -> Result<CdGrid> {
    check_strictly_increasing(grid)?;
    let piv: Vec<f64> = grid.iter().map(|&psi| pivot(psi)).collect();
    if let Some(i) = (1..piv.len()).find(|&i| !(piv[i] >= piv[i - 1])) {
        return Err(Error::NonMonotonePivot(grid[i]));
    }
    let cd = piv.iter().map(|&t| pivot_cdf(t)).collect();
    CdGrid::new(grid.to_vec(), cd, None, label)
}

/// Summary statistics of a univariate sample for the Student pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: f64,
    /// Empirical standard deviation with divisor n - 1.
    pub sd: f64,
}

impl SampleMoments {
    pub fn from_sample(ys: &[f64]) -> Result<Self> {
        if ys.len() < 2 {
            return invalid("need at least two observations");
        }
        let n = ys.len();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let ss: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        Ok(Self {
            n,
            mean,
            sd: (ss / (n - 1) as f64).sqrt(),
        })
    }

    /// The Student CD C(mu) = F_{n-1}(sqrt(n)(mu - ybar)/s) at one point.
    pub fn student_cd_at(&self, mu: f64) -> f64 {
        let t = (self.n as f64).sqrt() * (mu - self.mean) / self.sd;
        special::student_t_cdf(t, (self.n - 1) as f64)
    }
}

/// Student-t CD for a normal mean.
pub fn student_t_cd(moments: SampleMoments, grid: &[f64]) -> Result<CdGrid> {
    if !(moments.sd > 0.0) {
        return invalid("sample standard deviation must be positive");
    }
    let n = moments.n as f64;
    let df = (moments.n - 1) as f64;
    cd_from_pivot(
        grid,
        |mu| n.sqrt() * (mu - moments.mean) / moments.sd,
        |t| special::student_t_cdf(t, df),
        "mu",
    )
}

/// First-order normal CD: C(psi) = Phi(sqrt(n)(psi - estimate)/tau).
pub fn normal_approx_cd(estimate: f64, tau: f64, n: usize, grid: &[f64]) -> Result<CdGrid> {
    if !(tau > 0.0) || !tau.is_finite() {
        return invalid(format!("tau must be positive, got {tau}"));
    }
    if n < 1 {
        return invalid("sample size must be >= 1");
    }
    let scale = (n as f64).sqrt() / tau;
    CdGrid::from_fn(grid, "psi", |psi| special::norm_cdf(scale * (psi - estimate)))
}

/// Default focus grid: `points` equally spaced values spanning the
/// 0.0001 and 0.9999 quantiles of a pilot normal approximation.
pub fn default_grid(estimate: f64, std_error: f64, points: usize) -> Vec<f64> {
    let z = special::norm_quantile(0.9999);
    crate::interp::linspace(estimate - z * std_error, estimate + z * std_error, points)
}

/// CSV rows `focus,cd,cc` with 17 significant digits. A boundary atom is
/// written as a leading row at the same focus value carrying CD = 0.
pub fn write_cd_csv(cd: &CdGrid) -> String {
    let mut out = String::from("focus,cd,cc\n");
    if cd.atom().is_some() {
        let f = cd.focus_values()[0];
        out.push_str(&format!("{},{},{}\n", fmt17(f), fmt17(0.0), fmt17(1.0)));
    }
    for (f, c) in cd.focus_values().iter().zip(cd.cd_values()) {
        let cc = (1.0 - 2.0 * c).abs();
        out.push_str(&format!("{},{},{}\n", fmt17(*f), fmt17(*c), fmt17(cc)));
    }
    out
}

/// CSV for a curve without an associated CD; the `cd` column is left empty.
pub fn write_cc_csv(cc: &ConfidenceCurve) -> String {
    let mut out = String::from("focus,cd,cc\n");
    for (f, c) in cc.focus_values().iter().zip(cc.cc_values()) {
        out.push_str(&format!("{},,{}\n", fmt17(*f), fmt17(*c)));
    }
    out
}

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses the `focus,cd,cc` format written by [`write_cd_csv`].
pub fn read_cd_csv(text: &str, label: impl Into<String>) -> Result<CdGrid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let fi = cols.iter().position(|&c| c == "focus");
    let ci = cols.iter().position(|&c| c == "cd");
    let (fi, ci) = match (fi, ci) {
        (Some(f), Some(c)) => (f, c),
        _ => return Err(Error::Parse(format!("expected header focus,cd,cc, got {header}"))),
    };
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| Error::Parse(format!("row {} too short", k + 2)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", k + 2)))
        };
        rows.push((get(fi)?, get(ci)?));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let mut atom = None;
    if rows.len() >= 2 && rows[0].0 == rows[1].0 {
        if rows[0].1 != 0.0 {
            return Err(Error::Parse("atom lead row must carry cd = 0".into()));
        }
        atom = Some(rows[1].1);
        rows.remove(0);
    }
    let (focus, cd): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    CdGrid::new(focus, cd, atom, label)
}
