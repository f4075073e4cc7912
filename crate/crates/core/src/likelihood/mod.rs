//! Maximum likelihood, profile log-likelihoods, deviances and the Wilks
//! and Bartlett-corrected confidence curves built from them.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::cd::{ConfidenceCurve, CurveShape};
use crate::error::{invalid, Error, Result};
use crate::optimize::{self, Bound, Minimum, OptimOptions};
use crate::special;

mod coverage;
pub mod models;
mod profile;

pub use coverage::{
    bartlett_factor, coverage_simulate, CoverageMethod, CoverageOptions, UniformityReport,
};
pub use profile::{constrained_minimum, profile_sweep, profile_sweep_partial};

/// A parametric family with a log-likelihood over a dataset type.
pub trait ParametricModel: Sync {
    type Data: Sync + Send;

    fn name(&self) -> &'static str;

    fn param_names(&self, data: &Self::Data) -> Vec<String>;

    /// One constraint per parameter coordinate.
    fn bounds(&self, data: &Self::Data) -> Vec<Bound>;

    fn dim(&self, data: &Self::Data) -> usize {
        self.bounds(data).len()
    }

    fn validate(&self, _data: &Self::Data) -> Result<()> {
        Ok(())
    }

    fn log_likelihood(&self, theta: &[f64], data: &Self::Data) -> f64;

    /// Moment-type starting value for the optimizer.
    fn initial_estimate(&self, data: &Self::Data) -> Vec<f64>;

    fn closed_form_mle(&self, _data: &Self::Data) -> Option<Vec<f64>> {
        None
    }

    /// Draws a dataset shaped like `template` from the model at `theta`.
    fn simulate(
        &self,
        _theta: &[f64],
        _template: &Self::Data,
        _rng: &mut dyn RngCore,
    ) -> Option<Self::Data> {
        None
    }

    /// Exact pivot-based CD value at `psi`, when the model has one for `focus`.
    fn pivot_cd(&self, _focus: &FocusMap, _data: &Self::Data, _psi: f64) -> Option<f64> {
        None
    }
}

type FocusFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FocusKind {
    Coordinate(usize),
    Function(FocusFn),
}

/// The scalar interest parameter psi(theta).
#[derive(Clone)]
pub struct FocusMap {
    label: String,
    kind: FocusKind,
}

impl fmt::Debug for FocusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FocusKind::Coordinate(i) => write!(f, "FocusMap({}, coordinate {i})", self.label),
            FocusKind::Function(_) => write!(f, "FocusMap({}, function)", self.label),
        }
    }
}

impl FocusMap {
    pub fn coordinate(index: usize, label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            kind: FocusKind::Coordinate(index),
        }
    }

    pub fn function(
        label: impl Into<String>,
        map: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            kind: FocusKind::Function(Arc::new(map)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn as_coordinate(&self) -> Option<usize> {
        match self.kind {
            FocusKind::Coordinate(i) => Some(i),
            FocusKind::Function(_) => None,
        }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        match &self.kind {
            FocusKind::Coordinate(i) => theta[*i],
            FocusKind::Function(f) => f(theta),
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match self.kind {
            FocusKind::Coordinate(i) if i >= dim => {
                invalid(format!("focus coordinate {i} out of range for dimension {dim}"))
            }
            _ => Ok(()),
        }
    }
}

/// Result of maximizing a log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub max_loglik: f64,
    /// Largest absolute numerical-gradient component over the interior
    /// coordinates at the optimum.
    pub gradient_norm: f64,
}

fn interior_gradient_norm(f: &dyn Fn(&[f64]) -> f64, theta: &[f64], bounds: &[Bound]) -> f64 {
    let g = optimize::numerical_gradient(f, theta);
    g.iter()
        .zip(theta.iter().zip(bounds))
        .filter(|(_, (x, b))| b.closed_boundary() != Some(**x))
        .map(|(g, _)| g.abs())
        .fold(0.0, f64::max)
}

pub fn maximize_likelihood<M: ParametricModel>(model: &M, data: &M::Data) -> Result<Fit> {
    maximize_likelihood_with(model, data, &OptimOptions::default())
}

pub fn maximize_likelihood_with<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    opts: &OptimOptions,
) -> Result<Fit> {
    model.validate(data)?;
    let bounds = model.bounds(data);
    let negll = |t: &[f64]| -model.log_likelihood(t, data);
    let theta = match model.closed_form_mle(data) {
        Some(t) => t,
        None => {
            let start = model.initial_estimate(data);
            optimize::minimize_bounded(&negll, &start, &bounds, opts)?.x
        }
    };
    let max_loglik = model.log_likelihood(&theta, data);
    if !max_loglik.is_finite() {
        return Err(Error::NonConvergence {
            best_point: theta,
            best_value: -max_loglik,
        });
    }
    Ok(Fit {
        gradient_norm: interior_gradient_norm(&negll, &theta, &bounds),
        theta,
        max_loglik,
    })
}

/// max { loglik(theta) : psi(theta) = psi }.
pub fn profile_loglik<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    psi: f64,
) -> Result<f64> {
    let fit = maximize_likelihood(model, data)?;
    let bounds = model.bounds(data);
    focus.check_dim(bounds.len())?;
    let negll = |t: &[f64]| -model.log_likelihood(t, data);
    let m = constrained_minimum(&negll, &bounds, focus, psi, &fit.theta, &OptimOptions::default())?;
    Ok(-m.value)
}

/// A deviance (or deviance-like) function tabulated on a focus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DevianceCurve {
    pub focus_values: Vec<f64>,
    pub deviance_values: Vec<f64>,
    pub mle_focus: f64,
    /// Maximized log-likelihood. Divergence-based curves store the negated
    /// scaled criterion minimum here instead.
    pub max_loglik: f64,
    /// Constrained optimizers along the grid.
    pub profile_thetas: Vec<Vec<f64>>,
}

impl DevianceCurve {
    /// Builds `scale * (profile - best)` from profile minima of an objective.
    /// A profile value below the supplied minimum means the unconstrained
    /// search missed the optimum; the curve is then re-anchored there.
    pub(crate) fn from_profile(
        grid: &[f64],
        profile: Vec<Minimum>,
        minimum: f64,
        mle_focus: f64,
        scale: f64,
    ) -> Self {
        let mut best = minimum;
        let mut best_focus = mle_focus;
        for (psi, m) in grid.iter().zip(&profile) {
            if m.value < best - 1e-9 * best.abs().max(1.0) {
                best = m.value;
                best_focus = *psi;
            }
        }
        let deviance_values = profile
            .iter()
            .map(|m| (scale * (m.value - best)).max(0.0))
            .collect();
        Self {
            focus_values: grid.to_vec(),
            deviance_values,
            mle_focus: best_focus,
            max_loglik: -best,
            profile_thetas: profile.into_iter().map(|m| m.x).collect(),
        }
    }

    pub fn eval(&self, psi: f64) -> f64 {
        crate::interp::linear_interp(&self.focus_values, &self.deviance_values, psi)
    }
}

pub fn deviance_curve<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    grid: &[f64],
) -> Result<DevianceCurve> {
    deviance_curve_with(model, data, focus, grid, &OptimOptions::default())
}

pub fn deviance_curve_with<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    grid: &[f64],
    opts: &OptimOptions,
) -> Result<DevianceCurve> {
    crate::interp::check_strictly_increasing(grid)?;
    let fit = maximize_likelihood_with(model, data, opts)?;
    let bounds = model.bounds(data);
    focus.check_dim(bounds.len())?;
    let psi_hat = focus.eval(&fit.theta);
    let negll = |t: &[f64]| -model.log_likelihood(t, data);
    let profile = profile_sweep(&negll, &bounds, focus, grid, &fit.theta, psi_hat, opts)?;
    Ok(DevianceCurve::from_profile(grid, profile, -fit.max_loglik, psi_hat, 2.0))
}

/// Deviance at a single focus value.
pub fn deviance_at<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    fit: &Fit,
    psi: f64,
    opts: &OptimOptions,
) -> Result<f64> {
    let bounds = model.bounds(data);
    let negll = |t: &[f64]| -model.log_likelihood(t, data);
    let m = constrained_minimum(&negll, &bounds, focus, psi, &fit.theta, opts)?;
    Ok((2.0 * (fit.max_loglik + m.value)).max(0.0))
}

fn curve_from_deviance(dev: &DevianceCurve, factor: f64) -> Result<ConfidenceCurve> {
    let cc: Vec<f64> = dev
        .deviance_values
        .iter()
        .map(|&d| special::chi2_1_cdf(d / factor))
        .collect();
    let curve = ConfidenceCurve::new(dev.focus_values.clone(), cc)?.with_shape(CurveShape::Smooth);
    Ok(match curve.clone().with_point_estimate(dev.mle_focus) {
        Ok(c) => c,
        Err(_) => curve,
    })
}

/// cc(psi) = Gamma_1(dev(psi)).
pub fn wilks_cc(dev: &DevianceCurve) -> Result<ConfidenceCurve> {
    curve_from_deviance(dev, 1.0)
}

/// cc(psi) = Gamma_1(dev(psi) / factor), with `factor` = 1 + epsilon.
pub fn bartlett_cc(dev: &DevianceCurve, factor: f64) -> Result<ConfidenceCurve> {
    if !(factor > 0.0) || !factor.is_finite() {
        return invalid(format!("Bartlett factor must be positive, got {factor}"));
    }
    curve_from_deviance(dev, factor)
}

/// Delta-method standard error of psi(theta_hat) from the observed
/// information (numerical Hessian of the negative log-likelihood).
pub fn normal_approx_se<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    fit: &Fit,
) -> Result<f64> {
    let negll = |t: &[f64]| -model.log_likelihood(t, data);
    let h = optimize::numerical_hessian(&negll, &fit.theta);
    let grad = optimize::numerical_gradient(&|t| focus.eval(t), &fit.theta);
    let var = quadratic_form_inverse(&h, &grad)?;
    if !(var > 0.0) {
        return Err(Error::Singular("observed information not positive definite".into()));
    }
    Ok(var.sqrt())
}

/// c' A^{-1} c for a symmetric matrix A.
pub(crate) fn quadratic_form_inverse(a: &[Vec<f64>], c: &[f64]) -> Result<f64> {
    let n = c.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let v = nalgebra::DVector::from_column_slice(c);
    let x = m
        .lu()
        .solve(&v)
        .ok_or_else(|| Error::Singular("matrix is singular".into()))?;
    Ok(v.dot(&x))
}
