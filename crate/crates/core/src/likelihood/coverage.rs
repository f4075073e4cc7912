//! Parametric-bootstrap Bartlett factors and coverage simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::SeedStreams;
use crate::optimize::OptimOptions;
use crate::special;
use crate::stats::{fraction_at_most, ks_uniform, KsResult};

use super::{deviance_at, maximize_likelihood_with, normal_approx_se, FocusMap, ParametricModel};

/// Failures tolerated among simulated fits before a run is declared broken.
const MAX_FAILURE_RATE: f64 = 0.05;

fn sim_opts() -> OptimOptions {
    OptimOptions::single_start()
}

/// Mean-matching Bartlett factor 1 + epsilon: the average deviance at
/// psi(theta_hat) over `reps` datasets simulated at `theta_hat`.
pub fn bartlett_factor<M: ParametricModel>(
    model: &M,
    template: &M::Data,
    theta_hat: &[f64],
    focus: &FocusMap,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps < 1000 {
        return invalid(format!("Bartlett factor needs at least 1000 replications, got {reps}"));
    }
    bartlett_factor_unchecked(model, template, theta_hat, focus, reps, SeedStreams::new(seed))
}

fn bartlett_factor_unchecked<M: ParametricModel>(
    model: &M,
    template: &M::Data,
    theta_hat: &[f64],
    focus: &FocusMap,
    reps: usize,
    streams: SeedStreams,
) -> Result<f64> {
    let psi0 = focus.eval(theta_hat);
    let opts = sim_opts();
    let devs: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|b| -> Result<Option<f64>> {
            let mut rng = streams.stream(b as u64);
            let data = model
                .simulate(theta_hat, template, &mut rng)
                .ok_or(Error::MissingSimulator)?;
            let Ok(fit) = maximize_likelihood_with(model, &data, &opts) else {
                return Ok(None);
            };
            Ok(deviance_at(model, &data, focus, &fit, psi0, &opts).ok())
        })
        .collect::<Result<_>>()?;
    let ok: Vec<f64> = devs.into_iter().flatten().collect();
    if (ok.len() as f64) < (1.0 - MAX_FAILURE_RATE) * reps as f64 {
        return Err(Error::NonConvergence {
            best_point: theta_hat.to_vec(),
            best_value: f64::NAN,
        });
    }
    Ok(crate::stats::mean(&ok))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMethod {
    NormalApprox,
    Wilks,
    WilksBartlett,
    Pivot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageOptions {
    pub reps: usize,
    pub seed: u64,
    pub levels: Vec<f64>,
    /// Bootstrap size for the per-dataset Bartlett factor.
    pub bartlett_reps: usize,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        Self {
            reps: 10_000,
            seed: 1,
            levels: vec![0.5, 0.8, 0.9, 0.95],
            bartlett_reps: 2000,
        }
    }
}

/// Distribution of cc(psi0, Y) over simulated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformityReport {
    pub method: CoverageMethod,
    pub reps: usize,
    pub ks: KsResult,
    pub levels: Vec<f64>,
    /// Fraction of replications with cc(psi0) <= level.
    pub coverage: Vec<f64>,
    /// Replications dropped because a fit failed.
    pub failures: usize,
    #[serde(skip)]
    pub cc_values: Vec<f64>,
}

impl UniformityReport {
    pub fn mean_abs_coverage_error(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.coverage)
            .map(|(l, c)| (c - l).abs())
            .sum::<f64>()
            / self.levels.len() as f64
    }

    pub fn coverage_at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|i| self.coverage[i])
    }
}

/// cc(psi0) at one dataset for the given method.
fn cc_at_truth<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    psi0: f64,
    method: CoverageMethod,
    bartlett_reps: usize,
    streams: SeedStreams,
) -> Result<f64> {
    if method == CoverageMethod::Pivot {
        let c = model
            .pivot_cd(focus, data, psi0)
            .ok_or_else(|| Error::NotApplicable(format!("{} has no pivot for {}", model.name(), focus.label())))?;
        return Ok((1.0 - 2.0 * c).abs());
    }
    let opts = sim_opts();
    let fit = maximize_likelihood_with(model, data, &opts)?;
    match method {
        CoverageMethod::NormalApprox => {
            let se = normal_approx_se(model, data, focus, &fit)?;
            let z = (psi0 - focus.eval(&fit.theta)) / se;
            Ok((1.0 - 2.0 * special::norm_cdf(z)).abs())
        }
        CoverageMethod::Wilks => Ok(special::chi2_1_cdf(deviance_at(model, data, focus, &fit, psi0, &opts)?)),
        CoverageMethod::WilksBartlett => {
            let dev = deviance_at(model, data, focus, &fit, psi0, &opts)?;
            let factor = bartlett_factor_unchecked(model, data, &fit.theta, focus, bartlett_reps, streams)?;
            Ok(special::chi2_1_cdf(dev / factor))
        }
        CoverageMethod::Pivot => unreachable!(),
    }
}

/// Simulates `opts.reps` datasets at `theta0` and reports how close
/// cc(psi(theta0), Y) is to uniform.
pub fn coverage_simulate<M: ParametricModel>(
    model: &M,
    theta0: &[f64],
    template: &M::Data,
    focus: &FocusMap,
    method: CoverageMethod,
    opts: &CoverageOptions,
) -> Result<UniformityReport> {
    if opts.reps == 0 {
        return invalid("coverage simulation needs reps >= 1");
    }
    focus.check_dim(model.dim(template))?;
    let streams = SeedStreams::new(opts.seed);
    let psi0 = focus.eval(theta0);
    if method == CoverageMethod::Pivot && model.pivot_cd(focus, template, psi0).is_none() {
        return Err(Error::NotApplicable(format!(
            "{} has no pivot for focus {}",
            model.name(),
            focus.label()
        )));
    }
    if model.simulate(theta0, template, &mut streams.stream(u64::MAX)).is_none() {
        return Err(Error::MissingSimulator);
    }
    let results: Vec<Option<f64>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(r as u64);
            let data = model.simulate(theta0, template, &mut rng)?;
            cc_at_truth(model, &data, focus, psi0, method, opts.bartlett_reps, streams.child(r as u64)).ok()
        })
        .collect();
    let cc_values: Vec<f64> = results.iter().flatten().copied().collect();
    let failures = opts.reps - cc_values.len();
    if cc_values.is_empty() || failures as f64 > MAX_FAILURE_RATE * opts.reps as f64 {
        return Err(Error::NonConvergence {
            best_point: theta0.to_vec(),
            best_value: f64::NAN,
        });
    }
    Ok(UniformityReport {
        method,
        reps: opts.reps,
        ks: ks_uniform(&cc_values),
        levels: opts.levels.clone(),
        coverage: opts.levels.iter().map(|&l| fraction_at_most(&cc_values, l)).collect(),
        failures,
        cc_values,
    })
}
