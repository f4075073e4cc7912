//! Minimum power-divergence (BHHJ) estimation and robust confidence curves.
//!
//! For a tuning parameter a > 0 the empirical criterion is
//!
//!   H_n(theta) = int f_theta^{1+a} dy - (1 + 1/a) n^{-1} sum_i f(y_i, theta)^a,
//!
//! which tends to the negative mean log-likelihood (up to a constant) as
//! a -> 0. The profiled criterion gives D_n(psi) = 2n {H_prof(psi) - H_min},
//! approximately k chi^2_1 with a sandwich-estimated factor k.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cd::ConfidenceCurve;
use crate::error::{invalid, Error, Result};
use crate::likelihood::models::BinormalParams;
use crate::likelihood::{bartlett_cc, profile_sweep, DevianceCurve, FocusMap};
use crate::optimize::{self, Bound, OptimOptions};

/// How the model integral of f^{1+a} is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum IntegralMode {
    ClosedForm,
    /// Adaptive double-exponential quadrature over the box
    /// centre +- `half_width` scale units in each coordinate.
    Quadrature { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceConfig {
    a: f64,
    pub integral_mode: IntegralMode,
}

impl DivergenceConfig {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return invalid(format!("tuning parameter a must be positive, got {a}"));
        }
        Ok(Self {
            a,
            integral_mode: IntegralMode::ClosedForm,
        })
    }

    pub fn with_quadrature(mut self, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return invalid("quadrature half-width must be positive");
        }
        self.integral_mode = IntegralMode::Quadrature { half_width };
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// a such that a point at mean squared Mahalanobis distance `dim` from the
/// centre of a normal model gets relative weight 1 - `fraction`:
/// exp(-a dim / 2) = 1 - fraction.
pub fn tuning_from_downweight(fraction: f64, dim: usize) -> Result<f64> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("downweight fraction {fraction} outside (0, 1)"));
    }
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    Ok(-2.0 * (-fraction).ln_1p() / dim as f64)
}

/// A parametric density for i.i.d. observations.
pub trait DensityModel: Sync {
    type Obs: Sync;

    fn name(&self) -> &'static str;

    fn param_names(&self) -> Vec<String>;

    fn bounds(&self) -> Vec<Bound>;

    /// Dimension d of one observation.
    fn obs_dim(&self) -> usize;

    fn log_density(&self, theta: &[f64], y: &Self::Obs) -> f64;

    /// Builds an observation from a point of R^d.
    fn point(&self, x: &[f64]) -> Self::Obs;

    /// The density's mode, used as the centre for relative weights.
    fn centre(&self, theta: &[f64]) -> Self::Obs;

    /// Per-coordinate location and scale, for quadrature boxes.
    fn location_scale(&self, theta: &[f64]) -> Vec<(f64, f64)>;

    /// int f_theta^{1+a} in closed form, when known.
    fn power_integral(&self, _theta: &[f64], _a: f64) -> Option<f64> {
        None
    }

    /// Maximum likelihood estimate, used as the starting value.
    fn mle(&self, data: &[Self::Obs]) -> Result<Vec<f64>>;
}

/// int f^{1+a} for a d-variate normal: (2 pi)^{-a d/2} |Sigma|^{-a/2} (1+a)^{-d/2}.
pub fn normal_power_integral(d: usize, log_sqrt_det: f64, a: f64) -> f64 {
    let d = d as f64;
    (-a * (0.5 * d * (2.0 * PI).ln() + log_sqrt_det)).exp() * (1.0 + a).powf(-0.5 * d)
}

/// Univariate normal with theta = (mu, sigma).
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalDensity;

impl DensityModel for NormalDensity {
    type Obs = f64;

    fn name(&self) -> &'static str {
        "normal"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "sigma".into()]
    }

    fn bounds(&self) -> Vec<Bound> {
        vec![Bound::Free, Bound::Positive]
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &[f64], y: &f64) -> f64 {
        let (mu, sigma) = (theta[0], theta[1]);
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let z = (y - mu) / sigma;
        -0.5 * (2.0 * PI).ln() - sigma.ln() - 0.5 * z * z
    }

    fn point(&self, x: &[f64]) -> f64 {
        x[0]
    }

    fn centre(&self, theta: &[f64]) -> f64 {
        theta[0]
    }

    fn location_scale(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        vec![(theta[0], theta[1])]
    }

    fn power_integral(&self, theta: &[f64], a: f64) -> Option<f64> {
        (theta[1] > 0.0).then(|| normal_power_integral(1, theta[1].ln(), a))
    }

    fn mle(&self, data: &[f64]) -> Result<Vec<f64>> {
        if data.len() < 2 {
            return Err(Error::Data("need at least two observations".into()));
        }
        let m = crate::stats::mean(data);
        let v = data.iter().map(|y| (y - m).powi(2)).sum::<f64>() / data.len() as f64;
        if !(v > 0.0) {
            return Err(Error::Data("observations are all equal".into()));
        }
        Ok(vec![m, v.sqrt()])
    }
}

/// Bivariate normal with theta = (mean1, mean2, sd1, sd2, rho).
#[derive(Debug, Clone, Copy, Default)]
pub struct BinormalDensity;

impl DensityModel for BinormalDensity {
    type Obs = [f64; 2];

    fn name(&self) -> &'static str {
        "binormal"
    }

    fn param_names(&self) -> Vec<String> {
        ["mean1", "mean2", "sd1", "sd2", "rho"].map(String::from).to_vec()
    }

    fn bounds(&self) -> Vec<Bound> {
        vec![
            Bound::Free,
            Bound::Free,
            Bound::Positive,
            Bound::Positive,
            Bound::Open(-1.0, 1.0),
        ]
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn log_density(&self, theta: &[f64], y: &[f64; 2]) -> f64 {
        BinormalParams::from_theta(theta).log_density(y[0], y[1])
    }

    fn point(&self, x: &[f64]) -> [f64; 2] {
        [x[0], x[1]]
    }

    fn centre(&self, theta: &[f64]) -> [f64; 2] {
        [theta[0], theta[1]]
    }

    fn location_scale(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        vec![(theta[0], theta[2]), (theta[1], theta[3])]
    }

    fn power_integral(&self, theta: &[f64], a: f64) -> Option<f64> {
        let p = BinormalParams::from_theta(theta);
        (p.sd1 > 0.0 && p.sd2 > 0.0 && p.rho.abs() < 1.0)
            .then(|| normal_power_integral(2, p.log_sqrt_det(), a))
    }

    fn mle(&self, data: &[[f64; 2]]) -> Result<Vec<f64>> {
        use crate::likelihood::ParametricModel;
        let data = data.to_vec();
        crate::likelihood::models::BinormalModel.validate(&data)?;
        crate::likelihood::models::BinormalModel
            .closed_form_mle(&data)
            .ok_or_else(|| Error::Data("degenerate binormal sample".into()))
    }
}

const QUAD_TOL: f64 = 1e-13;

fn quad_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let out = quadrature::integrate(f, lo, hi, QUAD_TOL);
    if !(out.error_estimate <= (1e-9 * out.integral.abs()).max(1e-12)) {
        return Err(Error::Quadrature {
            estimate: out.integral,
            bound: out.error_estimate,
        });
    }
    Ok(out.integral)
}

/// Integrates over [m - w s, m + w s], split at m + s {0, +-1, +-2, +-4, +-8}
/// so that the peak of the integrand sits on breakpoints.
fn quad_centred(f: impl Fn(f64) -> f64, m: f64, s: f64, w: f64) -> Result<f64> {
    let mut cuts: Vec<f64> = [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .filter(|&&c| c > -w && c < w)
        .copied()
        .collect();
    cuts.insert(0, -w);
    cuts.push(w);
    cuts.windows(2)
        .map(|c| quad_1d(&f, m + c[0] * s, m + c[1] * s))
        .sum()
}

/// int f_theta^{1+a} by quadrature over the configured box (d = 1 or 2).
pub fn power_integral_quadrature<M: DensityModel>(
    model: &M,
    theta: &[f64],
    a: f64,
    half_width: f64,
) -> Result<f64> {
    let ls = model.location_scale(theta);
    let g = |x: &[f64]| ((1.0 + a) * model.log_density(theta, &model.point(x))).exp();
    match model.obs_dim() {
        1 => quad_centred(|x| g(&[x]), ls[0].0, ls[0].1, half_width),
        2 => {
            let failure = std::cell::Cell::new(None);
            let outer = quad_centred(
                |x| match quad_centred(|y| g(&[x, y]), ls[1].0, ls[1].1, half_width) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.set(Some(e));
                        0.0
                    }
                },
                ls[0].0,
                ls[0].1,
                half_width,
            )?;
            match failure.into_inner() {
                Some(e) => Err(e),
                None => Ok(outer),
            }
        }
        d => Err(Error::NotApplicable(format!(
            "quadrature is implemented for d <= 2, model has d = {d}"
        ))),
    }
}

fn model_integral<M: DensityModel>(model: &M, config: &DivergenceConfig, theta: &[f64]) -> Result<f64> {
    match config.integral_mode {
        IntegralMode::ClosedForm => model.power_integral(theta, config.a).ok_or_else(|| {
            Error::NotApplicable(format!("{} has no closed-form power integral", model.name()))
        }),
        IntegralMode::Quadrature { half_width } => {
            power_integral_quadrature(model, theta, config.a, half_width)
        }
    }
}

fn in_bounds(bounds: &[Bound], theta: &[f64]) -> bool {
    bounds.iter().zip(theta).all(|(b, v)| b.contains(*v))
}

/// H_n(theta).
pub fn bhhj_criterion<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    theta: &[f64],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("empty sample".into()));
    }
    if !in_bounds(&model.bounds(), theta) {
        return Err(Error::InvalidArgument(format!("theta {theta:?} outside the parameter space")));
    }
    let a = config.a;
    let integral = model_integral(model, config, theta)?;
    let mean_fa = data
        .iter()
        .map(|y| (a * model.log_density(theta, y)).exp())
        .sum::<f64>()
        / data.len() as f64;
    Ok(integral - (1.0 + 1.0 / a) * mean_fa)
}

fn objective<'a, M: DensityModel>(
    model: &'a M,
    data: &'a [M::Obs],
    config: &'a DivergenceConfig,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |t: &[f64]| bhhj_criterion(model, data, config, t).unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BhhjFit {
    pub theta: Vec<f64>,
    pub criterion_min: f64,
    /// Euclidean norm of the estimating-equation residual at theta.
    pub residual_norm: f64,
}

/// n^{-1} sum_i f(y_i)^a u(y_i) - int f^{1+a} u, from the numerical
/// gradient of H_n (which equals -(1 + a) times this vector).
pub fn estimating_equation_residual<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    theta: &[f64],
) -> Vec<f64> {
    let h = objective(model, data, config);
    optimize::numerical_gradient(&h, theta)
        .into_iter()
        .map(|g| -g / (1.0 + config.a))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton steps on the numerical gradient and Hessian, kept only while they
/// lower the criterion.
fn newton_polish(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: Vec<f64>, bounds: &[Bound]) -> Vec<f64> {
    let mut x = x;
    let mut fx = f(&x);
    for _ in 0..8 {
        let g = optimize::numerical_gradient(f, &x);
        if norm(&g) < 1e-10 {
            break;
        }
        let h = optimize::numerical_hessian(f, &x);
        let n = x.len();
        let hm = DMatrix::from_fn(n, n, |i, j| h[i][j]);
        let Some(step) = hm.lu().solve(&DVector::from_column_slice(&g)) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-4 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if in_bounds(bounds, &cand) {
                let fc = f(&cand);
                if fc <= fx {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// The minimizer of H_n, started from the maximum likelihood estimate.
pub fn bhhj_estimate<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
) -> Result<BhhjFit> {
    let start = model.mle(data)?;
    let bounds = model.bounds();
    let h = objective(model, data, config);
    // probe once so configuration errors surface instead of an infinite objective
    bhhj_criterion(model, data, config, &start)?;
    let m = optimize::minimize_bounded(&h, &start, &bounds, &OptimOptions::default())?;
    let theta = newton_polish(&h, m.x, &bounds);
    let criterion_min = h(&theta);
    let residual_norm = norm(&estimating_equation_residual(model, data, config, &theta));
    Ok(BhhjFit {
        theta,
        criterion_min,
        residual_norm,
    })
}

/// D_n(psi) = 2n {H_prof(psi) - H_min} on `grid`.
pub fn robust_profile_deviance<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    focus: &FocusMap,
    grid: &[f64],
) -> Result<DevianceCurve> {
    let fit = bhhj_estimate(model, data, config)?;
    robust_profile_deviance_at(model, data, config, focus, grid, &fit)
}

/// As [`robust_profile_deviance`], reusing a fitted minimizer.
pub fn robust_profile_deviance_at<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    focus: &FocusMap,
    grid: &[f64],
    fit: &BhhjFit,
) -> Result<DevianceCurve> {
    crate::interp::check_strictly_increasing(grid)?;
    let bounds = model.bounds();
    focus.check_dim(bounds.len())?;
    let psi_hat = focus.eval(&fit.theta);
    let h = objective(model, data, config);
    let profile = profile_sweep(&h, &bounds, focus, grid, &fit.theta, psi_hat, &OptimOptions::default())?;
    let scale = 2.0 * data.len() as f64;
    Ok(DevianceCurve::from_profile(grid, profile, fit.criterion_min, psi_hat, scale))
}

/// Sandwich estimate k = c'J^{-1} K J^{-1} c / c'J^{-1} c, with J the Hessian
/// of H_n, K the empirical covariance of per-observation criterion
/// gradients and c the focus gradient, all at `theta_hat`.
pub fn k_factor<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    theta_hat: &[f64],
    focus: &FocusMap,
) -> Result<f64> {
    let bounds = model.bounds();
    if !in_bounds(&bounds, theta_hat) {
        return invalid("theta_hat must be interior");
    }
    focus.check_dim(bounds.len())?;
    let p = theta_hat.len();
    let n = data.len();
    let a = config.a;
    let h = objective(model, data, config);
    let jac = optimize::numerical_hessian(&h, theta_hat);
    let j = DMatrix::from_fn(p, p, |r, c| jac[r][c]);

    // the integral term is common to all observations and drops out of K
    let grads: Vec<Vec<f64>> = data
        .iter()
        .map(|y| {
            let term = |t: &[f64]| -(1.0 + 1.0 / a) * (a * model.log_density(t, y)).exp();
            optimize::numerical_gradient(&term, theta_hat)
        })
        .collect();
    let mean: Vec<f64> = (0..p)
        .map(|r| grads.iter().map(|g| g[r]).sum::<f64>() / n as f64)
        .collect();
    let k = DMatrix::from_fn(p, p, |r, c| {
        grads
            .iter()
            .map(|g| (g[r] - mean[r]) * (g[c] - mean[c]))
            .sum::<f64>()
            / n as f64
    });
    let c = DVector::from_column_slice(&optimize::numerical_gradient(&|t| focus.eval(t), theta_hat));
    let v = j.lu().solve(&c).ok_or_else(|| {
        Error::Singular("criterion Hessian is singular; try a larger a or check the model".into())
    })?;
    let denom = c.dot(&v);
    let numer = v.dot(&(&k * &v));
    if !(denom > 0.0) || !(numer > 0.0) {
        return Err(Error::Singular(
            "criterion Hessian is not positive definite along the focus; try a larger a or check the model".into(),
        ));
    }
    Ok(numer / denom)
}

#[derive(Debug, Clone)]
pub struct RobustCurve {
    pub fit: BhhjFit,
    pub k: f64,
    pub deviance: DevianceCurve,
    pub cc: ConfidenceCurve,
}

/// cc(psi) = Gamma_1(D_n(psi) / k).
pub fn robust_cc<M: DensityModel>(
    model: &M,
    data: &[M::Obs],
    config: &DivergenceConfig,
    focus: &FocusMap,
    grid: &[f64],
) -> Result<RobustCurve> {
    let fit = bhhj_estimate(model, data, config)?;
    let k = k_factor(model, data, config, &fit.theta, focus)?;
    let deviance = robust_profile_deviance_at(model, data, config, focus, grid, &fit)?;
    let cc = bartlett_cc(&deviance, k)?;
    Ok(RobustCurve { fit, k, deviance, cc })
}

/// (f(y) / f(centre))^a, the weight of `y` relative to the model centre.
pub fn relative_weight<M: DensityModel>(model: &M, theta: &[f64], y: &M::Obs, a: f64) -> f64 {
    let centre = model.centre(theta);
    (a * (model.log_density(theta, y) - model.log_density(theta, &centre))).exp()
}
