//! Validated probability kernels: normal, chi-squared, Student t and binomial
//! distribution functions, plus the seeded samplers used by Monte Carlo code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special;

/// A value in the closed unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            invalid(format!("probability {value} outside [0, 1]"))
        }
    }

    /// Clamps into [0, 1]; NaN maps to 0.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Self(0.0)
        } else {
            Self(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

fn finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        invalid(format!("{what} must be finite, got {x}"))
    }
}

pub fn std_normal_cdf(x: f64) -> Result<Probability> {
    finite(x, "x")?;
    Ok(Probability(special::norm_cdf(x)))
}

/// Inverse of [`std_normal_cdf`]. The endpoints 0 and 1 yield
/// [`Error::InfiniteQuantile`].
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return invalid(format!("probability {p} outside [0, 1]"));
    }
    if p == 0.0 || p == 1.0 {
        return Err(Error::InfiniteQuantile(p));
    }
    Ok(special::norm_quantile(p))
}

pub fn chi2_1_cdf(x: f64) -> Result<Probability> {
    if x.is_nan() || x < 0.0 {
        return invalid(format!("chi-squared argument must be >= 0, got {x}"));
    }
    Ok(Probability(special::chi2_1_cdf(x)))
}

pub fn chi2_1_quantile(p: f64) -> Result<f64> {
    if p.is_nan() || !(0.0..1.0).contains(&p) {
        return invalid(format!("chi-squared quantile needs 0 <= p < 1, got {p}"));
    }
    Ok(special::chi2_1_quantile(p))
}

/// chi-squared distribution function with `df` degrees of freedom.
pub fn chi2_cdf(x: f64, df: u32) -> Result<Probability> {
    if df == 0 {
        return invalid("chi-squared needs df >= 1");
    }
    if x.is_nan() || x < 0.0 {
        return invalid(format!("chi-squared argument must be >= 0, got {x}"));
    }
    Ok(Probability(special::chi2_cdf(x, df as f64)))
}

pub fn student_t_cdf(x: f64, df: u32) -> Result<Probability> {
    if df < 1 {
        return invalid("Student t needs df >= 1");
    }
    if x.is_nan() {
        return invalid("x is NaN");
    }
    Ok(Probability(special::student_t_cdf(x, df as f64)))
}

fn check_binomial(y: u64, n: u64, p: f64) -> Result<()> {
    if y > n {
        return invalid(format!("binomial outcome {y} exceeds size {n}"));
    }
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return invalid(format!("binomial probability {p} outside [0, 1]"));
    }
    Ok(())
}

pub fn binomial_pmf(y: u64, n: u64, p: f64) -> Result<Probability> {
    check_binomial(y, n, p)?;
    Ok(Probability::saturating(special::binom_pmf(y, n, p)))
}

pub fn binomial_cdf(y: u64, n: u64, p: f64) -> Result<Probability> {
    check_binomial(y, n, p)?;
    Ok(Probability::saturating(special::binom_cdf(y, n, p)))
}

/// Deterministic family of random substreams derived from one master seed.
///
/// Substream `i` is a ChaCha8 generator keyed by the master seed with stream
/// id `i`, so results never depend on how work is scheduled across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(index);
        rng
    }

    /// A child family, for nesting (e.g. replication -> bootstrap draws).
    pub fn child(&self, index: u64) -> SeedStreams {
        let mut rng = self.stream(index);
        SeedStreams::new(rng.random())
    }
}

pub fn uniform_sampler<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn poisson_sampler<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean.is_nan() || mean < 0.0 || mean.is_infinite() {
        return invalid(format!("Poisson mean must be finite and >= 0, got {mean}"));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

pub fn binomial_sampler<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> Result<u64> {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return invalid(format!("binomial probability {p} outside [0, 1]"));
    }
    let d = Binomial::new(n, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(1.5).is_err());
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::saturating(2.0).get(), 1.0);
    }

    #[test]
    fn checked_kernels_reject_bad_input() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert_eq!(std_normal_quantile(0.0), Err(Error::InfiniteQuantile(0.0)));
        assert_eq!(std_normal_quantile(1.0), Err(Error::InfiniteQuantile(1.0)));
        assert!(std_normal_quantile(1.2).is_err());
        assert!(chi2_1_cdf(-1.0).is_err());
        assert!(student_t_cdf(1.0, 0).is_err());
        assert!(binomial_pmf(4, 3, 0.5).is_err());
        assert!(binomial_cdf(1, 3, 1.5).is_err());
    }

    #[test]
    fn samplers_validate_parameters() {
        let mut rng = SeedStreams::new(1).stream(0);
        assert!(poisson_sampler(&mut rng, -1.0).is_err());
        assert!(binomial_sampler(&mut rng, 5, 2.0).is_err());
        assert_eq!(poisson_sampler(&mut rng, 0.0).unwrap(), 0);
        for _ in 0..100 {
            assert_eq!(binomial_sampler(&mut rng, 5, 0.0).unwrap(), 0);
        }
    }

    #[test]
    fn streams_replay_and_differ() {
        let s = SeedStreams::new(42);
        let a: Vec<f64> = (0..5).map(|_| 0.0).scan(s.stream(3), |r, _| Some(uniform_sampler(r))).collect();
        let b: Vec<f64> = (0..5).map(|_| 0.0).scan(s.stream(3), |r, _| Some(uniform_sampler(r))).collect();
        let c: Vec<f64> = (0..5).map(|_| 0.0).scan(s.stream(4), |r, _| Some(uniform_sampler(r))).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
