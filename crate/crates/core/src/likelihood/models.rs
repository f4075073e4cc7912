//! Built-in parametric models.

use rand::RngCore;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::conditional::PairedCountStudy;
use crate::error::{Error, Result};
use crate::optimize::Bound;
use crate::random_effects::{tau_cd_at, EffectEstimates};
use crate::special;

use super::{FocusMap, ParametricModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn need_finite(ys: &[f64], min_len: usize) -> Result<()> {
    if ys.len() < min_len {
        return Err(Error::Data(format!("need at least {min_len} observations")));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Data("observations must be finite".into()));
    }
    Ok(())
}

/// `y * ln(mu)` with the convention 0 * ln 0 = 0.
fn xlogy(y: f64, mu: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * mu.ln()
    }
}

/// i.i.d. N(mu, sigma^2), parametrized by (mu, sigma) or (mu, log sigma).
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalModel {
    pub log_scale: bool,
}

impl NormalModel {
    fn sigma(&self, theta: &[f64]) -> f64 {
        if self.log_scale {
            theta[1].exp()
        } else {
            theta[1]
        }
    }
}

impl ParametricModel for NormalModel {
    type Data = Vec<f64>;

    fn name(&self) -> &'static str {
        "normal"
    }

    fn param_names(&self, _data: &Vec<f64>) -> Vec<String> {
        let s = if self.log_scale { "log_sigma" } else { "sigma" };
        vec!["mu".into(), s.into()]
    }

    fn bounds(&self, _data: &Vec<f64>) -> Vec<Bound> {
        if self.log_scale {
            vec![Bound::Free, Bound::Free]
        } else {
            vec![Bound::Free, Bound::Positive]
        }
    }

    fn validate(&self, data: &Vec<f64>) -> Result<()> {
        need_finite(data, 2)
    }

    fn log_likelihood(&self, theta: &[f64], data: &Vec<f64>) -> f64 {
        let sigma = self.sigma(theta);
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = data.len() as f64;
        let ss: f64 = data.iter().map(|y| (y - theta[0]).powi(2)).sum();
        -n * sigma.ln() - 0.5 * ss / (sigma * sigma) - 0.5 * n * LN_2PI
    }

    fn initial_estimate(&self, data: &Vec<f64>) -> Vec<f64> {
        self.closed_form_mle(data).unwrap_or_else(|| vec![0.0, 1.0])
    }

    fn closed_form_mle(&self, data: &Vec<f64>) -> Option<Vec<f64>> {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let sd = (data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0) {
            return None;
        }
        Some(vec![mean, if self.log_scale { sd.ln() } else { sd }])
    }

    fn simulate(&self, theta: &[f64], template: &Vec<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let d = Normal::new(theta[0], self.sigma(theta)).ok()?;
        Some((0..template.len()).map(|_| d.sample(rng)).collect())
    }

    /// Student pivot for mu; chi-squared pivot for the scale coordinate.
    fn pivot_cd(&self, focus: &FocusMap, data: &Vec<f64>, psi: f64) -> Option<f64> {
        let m = crate::cd::SampleMoments::from_sample(data).ok()?;
        match focus.as_coordinate()? {
            0 => Some(m.student_cd_at(psi)),
            1 => {
                let sigma = if self.log_scale { psi.exp() } else { psi };
                if !(sigma > 0.0) {
                    return Some(0.0);
                }
                let df = (m.n - 1) as f64;
                Some(1.0 - special::chi2_cdf(df * m.sd * m.sd / (sigma * sigma), df))
            }
            _ => None,
        }
    }
}

/// i.i.d. exponential lifetimes with rate lambda.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialModel;

impl ParametricModel for ExponentialModel {
    type Data = Vec<f64>;

    fn name(&self) -> &'static str {
        "exponential"
    }

    fn param_names(&self, _data: &Vec<f64>) -> Vec<String> {
        vec!["rate".into()]
    }

    fn bounds(&self, _data: &Vec<f64>) -> Vec<Bound> {
        vec![Bound::Positive]
    }

    fn validate(&self, data: &Vec<f64>) -> Result<()> {
        need_finite(data, 1)?;
        if data.iter().any(|&y| y < 0.0) || data.iter().all(|&y| y == 0.0) {
            return Err(Error::Data("exponential data must be nonnegative and not all zero".into()));
        }
        Ok(())
    }

    fn log_likelihood(&self, theta: &[f64], data: &Vec<f64>) -> f64 {
        let rate = theta[0];
        if !(rate > 0.0) {
            return f64::NEG_INFINITY;
        }
        data.len() as f64 * rate.ln() - rate * data.iter().sum::<f64>()
    }

    fn initial_estimate(&self, data: &Vec<f64>) -> Vec<f64> {
        self.closed_form_mle(data).unwrap_or(vec![1.0])
    }

    fn closed_form_mle(&self, data: &Vec<f64>) -> Option<Vec<f64>> {
        let s: f64 = data.iter().sum();
        (s > 0.0).then(|| vec![data.len() as f64 / s])
    }

    fn simulate(&self, theta: &[f64], template: &Vec<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let d = Exp::new(theta[0]).ok()?;
        Some((0..template.len()).map(|_| d.sample(rng)).collect())
    }

    /// rate * sum(y) ~ Gamma(n, 1), increasing in the rate.
    fn pivot_cd(&self, focus: &FocusMap, data: &Vec<f64>, psi: f64) -> Option<f64> {
        if focus.as_coordinate()? != 0 {
            return None;
        }
        let s: f64 = data.iter().sum();
        Some(special::gamma_inc_lower(data.len() as f64, (psi * s).max(0.0)))
    }
}

/// i.i.d. Poisson counts with mean lambda.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoissonRateModel;

impl ParametricModel for PoissonRateModel {
    type Data = Vec<u64>;

    fn name(&self) -> &'static str {
        "poisson-rate"
    }

    fn param_names(&self, _data: &Vec<u64>) -> Vec<String> {
        vec!["rate".into()]
    }

    fn bounds(&self, _data: &Vec<u64>) -> Vec<Bound> {
        vec![Bound::NonNegative]
    }

    fn validate(&self, data: &Vec<u64>) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("need at least one count".into()));
        }
        Ok(())
    }

    fn log_likelihood(&self, theta: &[f64], data: &Vec<u64>) -> f64 {
        let rate = theta[0];
        if rate < 0.0 {
            return f64::NEG_INFINITY;
        }
        let total: u64 = data.iter().sum();
        let log_fact: f64 = data.iter().map(|&y| special::ln_gamma(y as f64 + 1.0)).sum();
        xlogy(total as f64, rate) - data.len() as f64 * rate - log_fact
    }

    fn initial_estimate(&self, data: &Vec<u64>) -> Vec<f64> {
        self.closed_form_mle(data).unwrap()
    }

    fn closed_form_mle(&self, data: &Vec<u64>) -> Option<Vec<f64>> {
        Some(vec![data.iter().sum::<u64>() as f64 / data.len() as f64])
    }

    fn simulate(&self, theta: &[f64], template: &Vec<u64>, rng: &mut dyn RngCore) -> Option<Vec<u64>> {
        if theta[0] == 0.0 {
            return Some(vec![0; template.len()]);
        }
        let d = Poisson::new(theta[0]).ok()?;
        Some((0..template.len()).map(|_| d.sample(rng) as u64).collect())
    }
}

/// Five-parameter bivariate normal (mean1, mean2, sd1, sd2, rho).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BinormalParams {
    pub mean1: f64,
    pub mean2: f64,
    pub sd1: f64,
    pub sd2: f64,
    pub rho: f64,
}

impl BinormalParams {
    pub fn new(mean1: f64, mean2: f64, sd1: f64, sd2: f64, rho: f64) -> Result<Self> {
        if !(sd1 > 0.0 && sd2 > 0.0) || !(rho > -1.0 && rho < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binormal needs positive sds and |rho| < 1 (sd1={sd1}, sd2={sd2}, rho={rho})"
            )));
        }
        Ok(Self { mean1, mean2, sd1, sd2, rho })
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        Self {
            mean1: theta[0],
            mean2: theta[1],
            sd1: theta[2],
            sd2: theta[3],
            rho: theta[4],
        }
    }

    pub fn to_theta(&self) -> Vec<f64> {
        vec![self.mean1, self.mean2, self.sd1, self.sd2, self.rho]
    }

    fn valid(&self) -> bool {
        self.sd1 > 0.0 && self.sd2 > 0.0 && self.rho.abs() < 1.0
    }

    /// Squared Mahalanobis distance of (x, y) from the centre.
    pub fn mahalanobis2(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.mean1) / self.sd1;
        let v = (y - self.mean2) / self.sd2;
        (u * u - 2.0 * self.rho * u * v + v * v) / (1.0 - self.rho * self.rho)
    }

    /// log of sqrt(det Sigma).
    pub fn log_sqrt_det(&self) -> f64 {
        self.sd1.ln() + self.sd2.ln() + 0.5 * (1.0 - self.rho * self.rho).ln()
    }

    pub fn log_density(&self, x: f64, y: f64) -> f64 {
        if !self.valid() {
            return f64::NEG_INFINITY;
        }
        -LN_2PI - self.log_sqrt_det() - 0.5 * self.mahalanobis2(x, y)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> [f64; 2] {
        let z = Normal::new(0.0, 1.0).unwrap();
        let a: f64 = z.sample(rng);
        let b: f64 = z.sample(rng);
        let x = self.mean1 + self.sd1 * a;
        let y = self.mean2 + self.sd2 * (self.rho * a + (1.0 - self.rho * self.rho).sqrt() * b);
        [x, y]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BinormalModel;

impl ParametricModel for BinormalModel {
    type Data = Vec<[f64; 2]>;

    fn name(&self) -> &'static str {
        "binormal"
    }

    fn param_names(&self, _data: &Self::Data) -> Vec<String> {
        ["mean1", "mean2", "sd1", "sd2", "rho"].map(String::from).to_vec()
    }

    fn bounds(&self, _data: &Self::Data) -> Vec<Bound> {
        vec![
            Bound::Free,
            Bound::Free,
            Bound::Positive,
            Bound::Positive,
            Bound::Open(-1.0, 1.0),
        ]
    }

    fn validate(&self, data: &Self::Data) -> Result<()> {
        if data.len() < 3 {
            return Err(Error::Data("binormal model needs at least three pairs".into()));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("pairs must be finite".into()));
        }
        Ok(())
    }

    fn log_likelihood(&self, theta: &[f64], data: &Self::Data) -> f64 {
        let p = BinormalParams::from_theta(theta);
        if !p.valid() {
            return f64::NEG_INFINITY;
        }
        data.iter().map(|[x, y]| p.log_density(*x, *y)).sum()
    }

    fn initial_estimate(&self, data: &Self::Data) -> Vec<f64> {
        self.closed_form_mle(data).unwrap_or(vec![0.0, 0.0, 1.0, 1.0, 0.0])
    }

    /// Sample moments with divisor n.
    fn closed_form_mle(&self, data: &Self::Data) -> Option<Vec<f64>> {
        let n = data.len() as f64;
        let m1 = data.iter().map(|p| p[0]).sum::<f64>() / n;
        let m2 = data.iter().map(|p| p[1]).sum::<f64>() / n;
        let s11 = data.iter().map(|p| (p[0] - m1).powi(2)).sum::<f64>() / n;
        let s22 = data.iter().map(|p| (p[1] - m2).powi(2)).sum::<f64>() / n;
        let s12 = data.iter().map(|p| (p[0] - m1) * (p[1] - m2)).sum::<f64>() / n;
        let rho = s12 / (s11 * s22).sqrt();
        (s11 > 0.0 && s22 > 0.0 && rho.abs() < 1.0).then(|| vec![m1, m2, s11.sqrt(), s22.sqrt(), rho])
    }

    fn simulate(&self, theta: &[f64], template: &Self::Data, rng: &mut dyn RngCore) -> Option<Self::Data> {
        let p = BinormalParams::from_theta(theta);
        p.valid().then(|| (0..template.len()).map(|_| p.sample(rng)).collect())
    }
}

/// Paired Poisson model for k two-arm studies: control deaths
/// y0_j ~ Pois(e0_j lambda_j), treatment deaths y1_j ~ Pois(e1_j lambda_j gamma).
/// Parameters (gamma, lambda_1, ..., lambda_k).
#[derive(Debug, Clone, Copy, Default)]
pub struct PairedPoissonModel;

impl ParametricModel for PairedPoissonModel {
    type Data = Vec<PairedCountStudy>;

    fn name(&self) -> &'static str {
        "paired-poisson"
    }

    fn param_names(&self, data: &Self::Data) -> Vec<String> {
        std::iter::once("gamma".to_string())
            .chain((1..=data.len()).map(|j| format!("lambda{j}")))
            .collect()
    }

    fn bounds(&self, data: &Self::Data) -> Vec<Bound> {
        std::iter::once(Bound::Positive)
            .chain(std::iter::repeat_n(Bound::NonNegative, data.len()))
            .collect()
    }

    fn validate(&self, data: &Self::Data) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("need at least one study".into()));
        }
        if data.iter().all(|s| s.y1 == 0) || data.iter().all(|s| s.y0 == 0) {
            return Err(Error::Data("rate ratio MLE is on the boundary (no deaths in one arm)".into()));
        }
        Ok(())
    }

    fn log_likelihood(&self, theta: &[f64], data: &Self::Data) -> f64 {
        let gamma = theta[0];
        if !(gamma > 0.0) || theta[1..].iter().any(|&l| l < 0.0) {
            return f64::NEG_INFINITY;
        }
        data.iter()
            .zip(&theta[1..])
            .map(|(s, &lambda)| {
                let mu0 = s.e0 * lambda;
                let mu1 = s.e1 * lambda * gamma;
                xlogy(s.y0 as f64, mu0) - mu0 + xlogy(s.y1 as f64, mu1) - mu1
                    - special::ln_gamma(s.y0 as f64 + 1.0)
                    - special::ln_gamma(s.y1 as f64 + 1.0)
            })
            .sum()
    }

    fn initial_estimate(&self, data: &Self::Data) -> Vec<f64> {
        let r1 = data.iter().map(|s| s.y1 as f64).sum::<f64>() / data.iter().map(|s| s.e1).sum::<f64>();
        let r0 = data.iter().map(|s| s.y0 as f64).sum::<f64>() / data.iter().map(|s| s.e0).sum::<f64>();
        let gamma = if r0 > 0.0 && r1 > 0.0 { r1 / r0 } else { 1.0 };
        std::iter::once(gamma)
            .chain(data.iter().map(|s| s.z() as f64 / (s.e0 + s.e1 * gamma)))
            .collect()
    }

    fn simulate(&self, theta: &[f64], template: &Self::Data, rng: &mut dyn RngCore) -> Option<Self::Data> {
        let gamma = theta[0];
        let draw = |mean: f64, rng: &mut dyn RngCore| -> Option<u64> {
            if mean == 0.0 {
                return Some(0);
            }
            Some(Poisson::new(mean).ok()?.sample(rng) as u64)
        };
        template
            .iter()
            .zip(&theta[1..])
            .map(|(s, &lambda)| {
                let y0 = draw(s.e0 * lambda, rng)?;
                let y1 = draw(s.e1 * lambda * gamma, rng)?;
                Some(PairedCountStudy {
                    y0,
                    y1,
                    m0: s.m0.max(y0),
                    m1: s.m1.max(y1),
                    ..*s
                })
            })
            .collect()
    }
}

/// b_j ~ N(beta0, s_j^2 + tau^2) with known s_j. Parameters (beta0, tau).
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalRandomEffectsModel;

impl ParametricModel for NormalRandomEffectsModel {
    type Data = EffectEstimates;

    fn name(&self) -> &'static str {
        "normal-random-effects"
    }

    fn param_names(&self, _data: &EffectEstimates) -> Vec<String> {
        vec!["beta0".into(), "tau".into()]
    }

    fn bounds(&self, _data: &EffectEstimates) -> Vec<Bound> {
        vec![Bound::Free, Bound::NonNegative]
    }

    fn log_likelihood(&self, theta: &[f64], data: &EffectEstimates) -> f64 {
        let (beta0, tau) = (theta[0], theta[1]);
        if tau < 0.0 {
            return f64::NEG_INFINITY;
        }
        data.estimates()
            .iter()
            .zip(data.std_errors())
            .map(|(b, s)| {
                let v = s * s + tau * tau;
                -0.5 * (LN_2PI + v.ln() + (b - beta0).powi(2) / v)
            })
            .sum()
    }

    fn initial_estimate(&self, data: &EffectEstimates) -> Vec<f64> {
        let k = data.k() as f64;
        let mean = data.estimates().iter().sum::<f64>() / k;
        let var = data.estimates().iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let s2 = data.std_errors().iter().map(|s| s * s).sum::<f64>() / k;
        let scale = s2.sqrt();
        vec![mean, (var - s2).max(0.01 * scale * scale).sqrt()]
    }

    fn simulate(&self, theta: &[f64], template: &EffectEstimates, rng: &mut dyn RngCore) -> Option<EffectEstimates> {
        let estimates = template
            .std_errors()
            .iter()
            .map(|s| {
                let sd = (s * s + theta[1] * theta[1]).sqrt();
                Normal::new(theta[0], sd).ok().map(|d| d.sample(rng))
            })
            .collect::<Option<Vec<f64>>>()?;
        EffectEstimates::new(estimates, template.std_errors().to_vec()).ok()
    }

    /// The heterogeneity pivot for tau.
    fn pivot_cd(&self, focus: &FocusMap, data: &EffectEstimates, psi: f64) -> Option<f64> {
        (focus.as_coordinate()? == 1).then(|| tau_cd_at(data, psi))
    }
}
