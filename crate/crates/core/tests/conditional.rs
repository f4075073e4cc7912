//! Optimal conditional CDs against exact enumeration and convolution.

use confcurve::conditional::{
    combined_optimal_cd, combined_optimal_cd_exact, conditional_cd_generic, convolved_pmf,
    read_studies_csv, study_optimal_cd, ConditionalCdSpec, PairedCountStudy,
};
use confcurve::fixtures;
use confcurve::interp::logspace;
use confcurve::special::norm_cdf;
use num::{BigInt, BigRational, ToPrimitive};
use rand_distr::{Distribution, StandardNormal};

fn rational_binomial_pmf(y: u64, n: u64, p: &BigRational) -> BigRational {
    let mut choose = BigInt::from(1);
    for i in 0..y {
        choose = choose * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    let one = BigRational::from_integer(BigInt::from(1));
    let q = one - p.clone();
    let mut out = BigRational::from_integer(choose);
    for _ in 0..y {
        out *= p.clone();
    }
    for _ in 0..n - y {
        out *= q.clone();
    }
    out
}

/// Exact rational enumeration of the half-corrected conditional tail.
fn enumerated_cd(s: &PairedCountStudy, gamma_num: i64, gamma_den: i64) -> f64 {
    // q = m1 g / (m0 + m1 g) with exposures equal to sizes
    let m1 = BigInt::from(s.m1);
    let m0 = BigInt::from(s.m0);
    let g = BigRational::new(BigInt::from(gamma_num), BigInt::from(gamma_den));
    let num = BigRational::from_integer(m1.clone()) * g.clone();
    let q = num.clone() / (BigRational::from_integer(m0) + num);
    let mut c = BigRational::from_integer(BigInt::from(0));
    for y in 0..=s.z() {
        let p = rational_binomial_pmf(y, s.z(), &q);
        if y > s.y1 {
            c += p;
        } else if y == s.y1 {
            c += p / BigRational::from_integer(BigInt::from(2));
        }
    }
    c.to_f64().unwrap()
}

#[test]
fn table_fixture_rows() {
    let studies = fixtures::lidocaine().unwrap();
    assert_eq!(studies.len(), 6);
    let z: Vec<u64> = studies.iter().map(|s| s.z()).collect();
    assert_eq!(z, vec![3, 8, 10, 12, 10, 15]);
    assert_eq!((studies[0].m1, studies[0].m0, studies[0].y1, studies[0].y0), (39, 43, 2, 1));
}

#[test]
fn study_cd_matches_exact_enumeration() {
    let studies = fixtures::lidocaine().unwrap();
    let ratios = [(1i64, 5i64), (1, 2), (1, 1), (3, 2), (5, 2), (7, 1)];
    let grid: Vec<f64> = ratios.iter().map(|(a, b)| *a as f64 / *b as f64).collect();
    for s in &studies {
        let cd = study_optimal_cd(s, &grid).unwrap();
        for ((a, b), c) in ratios.iter().zip(cd.cd_values()) {
            assert!((c - enumerated_cd(s, *a, *b)).abs() < 1e-12);
        }
    }
}

#[test]
fn study_cd_limits_monotonicity_and_bracketing() {
    let s = fixtures::lidocaine().unwrap()[0];
    let grid = logspace(1e-8, 8.0, 200);
    let cd = study_optimal_cd(&s, &grid).unwrap();
    assert!(cd.cd_values()[0] < 1e-12, "y1 > 0 so C -> 0 as gamma -> 0");
    for w in cd.cd_values().windows(2) {
        assert!(w[1] >= w[0]);
    }
    for (&g, &c) in grid.iter().zip(cd.cd_values()) {
        let q = s.q(g);
        let lo = 1.0 - confcurve::special::binom_cdf(s.y1, s.z(), q);
        let hi = 1.0 - confcurve::special::binom_cdf(s.y1 - 1, s.z(), q);
        assert!(lo - 1e-15 <= c && c <= hi + 1e-15);
    }
    let none = PairedCountStudy::new(10, 10, 0, 0).unwrap();
    assert!(study_optimal_cd(&none, &grid).is_err());
}

#[test]
fn exact_convolution_against_enumeration() {
    let studies = fixtures::lidocaine().unwrap();
    let pmf = convolved_pmf(&studies, 1.3);
    assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    assert_eq!(pmf.len(), 59);
    // two studies: brute-force double sum
    let two = &studies[..2];
    let pmf2 = convolved_pmf(two, 0.8);
    for b in 0..pmf2.len() {
        let mut p = 0.0;
        for y in 0..=two[0].z() {
            if b as u64 >= y && b as u64 - y <= two[1].z() {
                p += confcurve::special::binom_pmf(y, two[0].z(), two[0].q(0.8))
                    * confcurve::special::binom_pmf(b as u64 - y, two[1].z(), two[1].q(0.8));
            }
        }
        assert!((pmf2[b] - p).abs() < 1e-15);
    }
}

#[test]
fn single_study_simulation_matches_exact_cd() {
    let s = fixtures::lidocaine().unwrap()[3];
    let grid = logspace(0.3, 5.0, 15);
    let mc = combined_optimal_cd(&[s], &grid, 20_000, 7).unwrap();
    let exact = study_optimal_cd(&s, &grid).unwrap();
    for i in 0..grid.len() {
        let se = mc.mc_se[i].max(1e-4);
        assert!((mc.raw[i] - exact.cd_values()[i]).abs() < 4.0 * se, "point {i}");
    }
}

#[test]
fn symmetric_binomials_at_unit_ratio() {
    // equal exposures and gamma = 1 give q = 1/2 in every study
    let studies: Vec<PairedCountStudy> = fixtures::lidocaine()
        .unwrap()
        .into_iter()
        .map(|s| PairedCountStudy::with_exposures(s.m1, s.m0, s.y1, s.y0, 1.0, 1.0).unwrap())
        .collect();
    let exact = combined_optimal_cd_exact(&studies, &[1.0], 100_000).unwrap();
    let mc = combined_optimal_cd(&studies, &[1.0], 100_000, 3).unwrap();
    assert!((mc.raw[0] - exact.raw[0]).abs() < 3.0 * exact.mc_se[0]);
    // Bin(58, 1/2): P{B > 37} + P{B = 37}/2 by direct summation
    let direct: f64 = (38..=58).map(|b| confcurve::special::binom_pmf(b, 58, 0.5)).sum::<f64>()
        + 0.5 * confcurve::special::binom_pmf(37, 58, 0.5);
    assert!((exact.raw[0] - direct).abs() < 1e-14);
}

#[test]
fn simulation_is_reproducible_and_validates() {
    let studies = fixtures::lidocaine().unwrap();
    let grid = logspace(0.5, 4.0, 9);
    let a = combined_optimal_cd(&studies, &grid, 10_000, 11).unwrap();
    let b = combined_optimal_cd(&studies, &grid, 10_000, 11).unwrap();
    assert_eq!(a, b);
    assert!(combined_optimal_cd(&studies, &grid, 9_999, 11).is_err());
    assert!(combined_optimal_cd(&studies, &[0.0, 1.0], 10_000, 11).is_err());
}

#[test]
fn generic_spec_point_mass_is_one_half() {
    let spec = ConditionalCdSpec::new(3.0, true, |_, _| 3.0);
    let out = conditional_cd_generic(&spec, &[0.1, 1.0, 2.0], 100, 1).unwrap();
    assert!(out.cd.cd_values().iter().all(|&c| c == 0.5));
}

#[test]
fn generic_spec_gaussian_shift() {
    let spec = ConditionalCdSpec::new(0.0, false, |psi, rng| {
        let z: f64 = StandardNormal.sample(rng);
        psi + z
    });
    let grid: Vec<f64> = (-20..=20).map(|k| 0.1 * k as f64).collect();
    let out = conditional_cd_generic(&spec, &grid, 40_000, 5).unwrap();
    for (i, &psi) in grid.iter().enumerate() {
        assert!((out.raw[i] - norm_cdf(psi)).abs() < 4.0 * out.mc_se[i].max(1e-3));
    }
}

#[test]
fn generic_paired_poisson_matches_dedicated_path() {
    let studies = fixtures::lidocaine().unwrap();
    let grid = logspace(0.5, 4.0, 7);
    let spec = ConditionalCdSpec::paired_poisson(studies.clone());
    let generic = conditional_cd_generic(&spec, &grid, 20_000, 2).unwrap();
    let exact = combined_optimal_cd_exact(&studies, &grid, 20_000).unwrap();
    for i in 0..grid.len() {
        assert!((generic.raw[i] - exact.raw[i]).abs() < 4.0 * exact.mc_se[i].max(1e-4));
    }
}

#[test]
fn coverage_of_combined_cd_under_the_pairing_model() {
    // Simulate full paired-Poisson datasets at gamma0 and check C(gamma0, Y) ~ U(0, 1).
    use confcurve::likelihood::models::PairedPoissonModel;
    use confcurve::likelihood::ParametricModel;
    use confcurve::SeedStreams;
    let template = fixtures::lidocaine().unwrap();
    let gamma0 = 1.5;
    let mut theta = vec![gamma0];
    theta.extend(template.iter().map(|s| s.z() as f64 / (s.m0 as f64 + s.m1 as f64 * gamma0)));
    let streams = SeedStreams::new(77);
    let mut values = Vec::new();
    let mut rng = streams.stream(0);
    for _ in 0..1000 {
        let data = PairedPoissonModel.simulate(&theta, &template, &mut rng).unwrap();
        let exact = combined_optimal_cd_exact(&data, &[gamma0], 1).unwrap();
        values.push(exact.raw[0]);
    }
    // half-corrected CDs of lattice statistics are uniform up to the lattice
    // step, so a KS test at 10^3 draws is the right resolution
    let ks = confcurve::stats::ks_uniform(&values);
    assert!(ks.passes(0.01), "{ks:?}");
}

#[test]
fn study_table_parsing() {
    let text = "y0,y1,m0,m1\n1,2,43,39\n";
    let s = read_studies_csv(text).unwrap();
    assert_eq!(s[0].z(), 3);
    assert!(read_studies_csv("m1,m0,y1,y0,z\n39,43,2,1,4\n").is_err());
    assert!(read_studies_csv("m1,m0,y1\n1,2,3\n").is_err());
    assert!(read_studies_csv("m1,m0,y1,y0\n3,4,5,1\n").is_err());
}
