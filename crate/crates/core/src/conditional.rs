//! Optimal conditional CDs for exponential-family structure, with the
//! paired-Poisson meta-analysis instantiation.

use std::cmp::Ordering;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cd::CdGrid;
use crate::error::{invalid, Error, Result};
use crate::interp::{check_strictly_increasing, isotonic_nondecreasing};
use crate::kernels::{binomial_sampler, SeedStreams};
use crate::special;

/// One two-arm study with death counts: control (m0, y0), treatment (m1, y1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedCountStudy {
    pub m0: u64,
    pub m1: u64,
    pub y0: u64,
    pub y1: u64,
    /// Exposures; only the ratio e1 / e0 matters.
    pub e0: f64,
    pub e1: f64,
}

impl PairedCountStudy {
    /// Study with exposures equal to the sample sizes.
    pub fn new(m1: u64, m0: u64, y1: u64, y0: u64) -> Result<Self> {
        Self::with_exposures(m1, m0, y1, y0, m1 as f64, m0 as f64)
    }

    pub fn with_exposures(m1: u64, m0: u64, y1: u64, y0: u64, e1: f64, e0: f64) -> Result<Self> {
        if y0 > m0 || y1 > m1 {
            return Err(Error::Data(format!(
                "deaths exceed group size (y1={y1}, m1={m1}, y0={y0}, m0={m0})"
            )));
        }
        if !(e0 > 0.0 && e1 > 0.0 && e0.is_finite() && e1.is_finite()) {
            return Err(Error::Data(format!("exposures must be positive, got {e0}, {e1}")));
        }
        Ok(Self { m0, m1, y0, y1, e0, e1 })
    }

    pub fn z(&self) -> u64 {
        self.y0 + self.y1
    }

    /// Conditional success probability of a treatment death given z.
    pub fn q(&self, gamma: f64) -> f64 {
        self.e1 * gamma / (self.e0 + self.e1 * gamma)
    }
}

/// Exact optimal CD for gamma from one study: the conditional law of y1
/// given z is Bin(z, q(gamma)), and
/// C(gamma) = P{Y1 > y1} + P{Y1 = y1} / 2.
pub fn study_optimal_cd(study: &PairedCountStudy, gamma_grid: &[f64]) -> Result<CdGrid> {
    check_gamma_grid(gamma_grid)?;
    if study.z() == 0 {
        return Err(Error::NotApplicable(
            "study has no deaths (z = 0): its CD is flat and uninformative".into(),
        ));
    }
    let (y1, z) = (study.y1, study.z());
    CdGrid::from_fn(gamma_grid, "gamma", |g| {
        let q = study.q(g);
        1.0 - special::binom_cdf(y1, z, q) + 0.5 * special::binom_pmf(y1, z, q)
    })
}

fn check_gamma_grid(grid: &[f64]) -> Result<()> {
    check_strictly_increasing(grid)?;
    if grid[0] <= 0.0 {
        return Err(Error::InvalidGrid("gamma grid must be positive".into()));
    }
    Ok(())
}

/// A CD estimated by simulation, with per-point Monte Carlo error.
#[derive(Debug, Clone, PartialEq)]
pub struct McCd {
    /// Monotone-rearranged CD.
    pub cd: CdGrid,
    /// Raw simulation estimates before rearrangement.
    pub raw: Vec<f64>,
    /// Monte Carlo standard error of each raw estimate.
    pub mc_se: Vec<f64>,
    pub draws: usize,
    pub warnings: Vec<String>,
}

impl McCd {
    pub fn max_mc_se(&self) -> f64 {
        self.mc_se.iter().copied().fold(0.0, f64::max)
    }
}

/// Tallies of simulated statistics relative to the observed value.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    above: usize,
    equal: usize,
    draws: usize,
}

impl Tally {
    /// Half-corrected tail estimate and its standard error.
    fn half_corrected(&self) -> (f64, f64) {
        let n = self.draws as f64;
        let c = (self.above as f64 + 0.5 * self.equal as f64) / n;
        let second = (self.above as f64 + 0.25 * self.equal as f64) / n;
        (c, ((second - c * c).max(0.0) / n).sqrt())
    }

    fn at_least(&self) -> (f64, f64) {
        let n = self.draws as f64;
        let c = (self.above + self.equal) as f64 / n;
        (c, (c * (1.0 - c) / n).sqrt())
    }
}

fn finish_mc(grid: &[f64], estimates: Vec<(f64, f64)>, draws: usize, label: &str) -> Result<McCd> {
    let (raw, mc_se): (Vec<f64>, Vec<f64>) = estimates.into_iter().unzip();
    let mut warnings = Vec::new();
    for i in 1..raw.len() {
        let drop = raw[i - 1] - raw[i];
        let noise = 3.0 * (mc_se[i - 1].powi(2) + mc_se[i].powi(2)).sqrt();
        if drop > noise.max(1.0 / draws as f64) {
            warnings.push(format!(
                "raw estimate decreases by {drop:.3e} between {} and {}, beyond Monte Carlo noise {noise:.3e}",
                grid[i - 1],
                grid[i]
            ));
        }
    }
    let cd = CdGrid::new(grid.to_vec(), isotonic_nondecreasing(&raw), None, label)?;
    Ok(McCd {
        cd,
        raw,
        mc_se,
        draws,
        warnings,
    })
}

/// Inversion sampler for a distribution on 0..=len-1 given its CDF table.
fn draw_from_table(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

fn binomial_cdf_table(z: u64, q: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = special::binom_pmf_vec(z, q)
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Optimal combined CD for the common rate ratio gamma across studies:
/// C(gamma) = P{B > B_obs} + P{B = B_obs} / 2 with B = sum_j Bin(z_j, q_j(gamma)),
/// estimated from `draws` simulations per grid point. Grid point `i` uses
/// substream `i` of `seed`.
pub fn combined_optimal_cd(
    studies: &[PairedCountStudy],
    gamma_grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<McCd> {
    check_studies(studies)?;
    check_gamma_grid(gamma_grid)?;
    if draws < 10_000 {
        return invalid(format!("need at least 10^4 simulations per grid point, got {draws}"));
    }
    let b_obs: u64 = studies.iter().map(|s| s.y1).sum();
    let streams = SeedStreams::new(seed);
    let estimates: Vec<(f64, f64)> = gamma_grid
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            let tables: Vec<Vec<f64>> = studies
                .iter()
                .filter(|s| s.z() > 0)
                .map(|s| binomial_cdf_table(s.z(), s.q(g)))
                .collect();
            let mut rng = streams.stream(i as u64);
            let mut tally = Tally {
                draws,
                ..Tally::default()
            };
            for _ in 0..draws {
                let b: u64 = tables
                    .iter()
                    .map(|t| draw_from_table(t, rng.random::<f64>()) as u64)
                    .sum();
                match b.cmp(&b_obs) {
                    Ordering::Greater => tally.above += 1,
                    Ordering::Equal => tally.equal += 1,
                    Ordering::Less => {}
                }
            }
            tally.half_corrected()
        })
        .collect();
    finish_mc(gamma_grid, estimates, draws, "gamma")
}

fn check_studies(studies: &[PairedCountStudy]) -> Result<()> {
    if studies.is_empty() {
        return invalid("need at least one study");
    }
    if studies.iter().all(|s| s.z() == 0) {
        return Err(Error::NotApplicable("no study has any deaths".into()));
    }
    Ok(())
}

/// Exact distribution of B = sum_j Bin(z_j, q_j(gamma)) by convolution.
pub fn convolved_pmf(studies: &[PairedCountStudy], gamma: f64) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for s in studies {
        let b = special::binom_pmf_vec(s.z(), s.q(gamma));
        let mut next = vec![0.0; pmf.len() + b.len() - 1];
        for (i, p) in pmf.iter().enumerate() {
            for (j, r) in b.iter().enumerate() {
                next[i + j] += p * r;
            }
        }
        pmf = next;
    }
    pmf
}

/// Exact-convolution version of [`combined_optimal_cd`]; the returned
/// standard errors are those a simulation with `draws` draws would have.
pub fn combined_optimal_cd_exact(
    studies: &[PairedCountStudy],
    gamma_grid: &[f64],
    draws: usize,
) -> Result<McCd> {
    check_studies(studies)?;
    check_gamma_grid(gamma_grid)?;
    let b_obs = studies.iter().map(|s| s.y1).sum::<u64>() as usize;
    let n = draws.max(1) as f64;
    let mut cd = Vec::with_capacity(gamma_grid.len());
    let mut se = Vec::with_capacity(gamma_grid.len());
    for &g in gamma_grid {
        let pmf = convolved_pmf(studies, g);
        let above: f64 = pmf[b_obs + 1..].iter().sum();
        let equal = pmf[b_obs];
        let c = above + 0.5 * equal;
        cd.push(c.clamp(0.0, 1.0));
        se.push(((above + 0.25 * equal - c * c).max(0.0) / n).sqrt());
    }
    Ok(McCd {
        cd: CdGrid::new(gamma_grid.to_vec(), cd.clone(), None, "gamma")?,
        raw: cd,
        mc_se: se,
        draws,
        warnings: Vec::new(),
    })
}

type Sampler = Box<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;

/// A conditional CD specification: a sampler of the statistic B given the
/// conditioning values, whose law depends on psi only, and the observed B.
pub struct ConditionalCdSpec {
    pub b_obs: f64,
    pub discrete: bool,
    sampler: Sampler,
}

impl ConditionalCdSpec {
    pub fn new(
        b_obs: f64,
        discrete: bool,
        sampler: impl Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            b_obs,
            discrete,
            sampler: Box::new(sampler),
        }
    }

    /// The paired-Poisson instance: B = sum of treatment deaths given the
    /// study totals.
    pub fn paired_poisson(studies: Vec<PairedCountStudy>) -> Self {
        let b_obs = studies.iter().map(|s| s.y1).sum::<u64>() as f64;
        Self::new(b_obs, true, move |g, rng| {
            studies
                .iter()
                .map(|s| binomial_sampler(rng, s.z(), s.q(g)).unwrap_or(0) as f64)
                .sum()
        })
    }
}

/// C(psi) = P{B > B_obs} + P{B = B_obs} / 2 for discrete statistics and
/// P{B >= B_obs} otherwise, by simulation.
pub fn conditional_cd_generic(
    spec: &ConditionalCdSpec,
    grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<McCd> {
    check_strictly_increasing(grid)?;
    if draws == 0 {
        return invalid("need at least one simulation per grid point");
    }
    let streams = SeedStreams::new(seed);
    let estimates: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &psi)| {
            let mut rng = streams.stream(i as u64);
            let mut tally = Tally {
                draws,
                ..Tally::default()
            };
            for _ in 0..draws {
                let b = (spec.sampler)(psi, &mut rng);
                if b > spec.b_obs {
                    tally.above += 1;
                } else if b == spec.b_obs {
                    tally.equal += 1;
                }
            }
            if spec.discrete {
                tally.half_corrected()
            } else {
                tally.at_least()
            }
        })
        .collect();
    finish_mc(grid, estimates, draws, "psi")
}

/// Parses a study table with header `m1,m0,y1,y0` (any order); an optional
/// `z` column is checked against y0 + y1.
pub fn read_studies_csv(text: &str) -> Result<Vec<PairedCountStudy>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty study table".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(i_m1), Some(i_m0), Some(i_y1), Some(i_y0)) = (col("m1"), col("m0"), col("y1"), col("y0")) else {
        return Err(Error::Parse(format!("study table header must contain m1,m0,y1,y0; got {header:?}")));
    };
    let i_z = col("z");
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::Parse(format!("row {}: expected {} fields", row + 1, header.len())));
        }
        let get = |i: usize| -> Result<u64> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("row {}: '{}' is not a count", row + 1, fields[i])))
        };
        let study = PairedCountStudy::new(get(i_m1)?, get(i_m0)?, get(i_y1)?, get(i_y0)?)?;
        if let Some(iz) = i_z {
            let z = get(iz)?;
            if z != study.z() {
                return Err(Error::Data(format!("row {}: z = {z} but y0 + y1 = {}", row + 1, study.z())));
            }
        }
        out.push(study);
    }
    if out.is_empty() {
        return Err(Error::Data("study table has no rows".into()));
    }
    Ok(out)
}
