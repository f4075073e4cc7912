//! Minimum power-divergence estimation and robust curves.

use confcurve::cd::level_set_region;
use confcurve::fixtures;
use confcurve::interp::linspace;
use confcurve::likelihood::FocusMap;
use confcurve::robust::{
    bhhj_criterion, bhhj_estimate, k_factor, power_integral_quadrature, relative_weight,
    robust_cc, robust_profile_deviance, robust_profile_deviance_at, tuning_from_downweight,
    BinormalDensity, DensityModel, DivergenceConfig, NormalDensity,
};
use confcurve::special::chi2_1_cdf;
use confcurve::SeedStreams;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

fn rho() -> FocusMap {
    FocusMap::coordinate(4, "rho")
}

fn binormal_sample(theta: [f64; 5], n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = SeedStreams::new(seed).stream(0);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let (u, v): (f64, f64) = (z.sample(&mut rng), z.sample(&mut rng));
            let x = theta[0] + theta[2] * u;
            let y = theta[1] + theta[3] * (theta[4] * u + (1.0 - theta[4] * theta[4]).sqrt() * v);
            [x, y]
        })
        .collect()
}

#[test]
fn tuning_rule() {
    assert!((tuning_from_downweight(0.10, 2).unwrap() - 0.10536).abs() < 5e-6);
    assert!((tuning_from_downweight(0.10, 1).unwrap() - 0.21072).abs() < 5e-6);
    assert!(tuning_from_downweight(1e-9, 2).unwrap() < 1e-8);
    assert!(tuning_from_downweight(0.0, 2).is_err());
    assert!(tuning_from_downweight(1.0, 2).is_err());
    assert!(tuning_from_downweight(0.1, 0).is_err());
    assert!(DivergenceConfig::new(0.0).is_err());
    assert!(DivergenceConfig::new(f64::NAN).is_err());
    assert!(DivergenceConfig::new(0.1).unwrap().with_quadrature(-1.0).is_err());
}

#[test]
fn closed_form_integral_matches_quadrature() {
    for a in [0.01, 0.105, 0.5, 1.0, 2.0] {
        for theta in [[0.0, 1.0], [3.0, 0.2], [-1.0, 7.5]] {
            let closed = NormalDensity.power_integral(&theta, a).unwrap();
            let quad = power_integral_quadrature(&NormalDensity, &theta, a, 40.0).unwrap();
            assert!((closed - quad).abs() < 1e-8, "a={a} {theta:?}: {closed} vs {quad}");
        }
        let theta = [1.0, -2.0, 1.5, 0.7, 0.6];
        let closed = BinormalDensity.power_integral(&theta, a).unwrap();
        let quad = power_integral_quadrature(&BinormalDensity, &theta, a, 30.0).unwrap();
        assert!((closed - quad).abs() < 1e-8, "binormal a={a}: {closed} vs {quad}");
    }
}

#[test]
fn quadrature_mode_gives_the_same_estimate() {
    let data: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64 / 10.0).collect();
    let closed = DivergenceConfig::new(0.3).unwrap();
    let quad = closed.with_quadrature(30.0).unwrap();
    let t = [2.0, 1.1];
    let h1 = bhhj_criterion(&NormalDensity, &data, &closed, &t).unwrap();
    let h2 = bhhj_criterion(&NormalDensity, &data, &quad, &t).unwrap();
    assert!((h1 - h2).abs() < 1e-8);
    let f1 = bhhj_estimate(&NormalDensity, &data, &closed).unwrap();
    let f2 = bhhj_estimate(&NormalDensity, &data, &quad).unwrap();
    for (a, b) in f1.theta.iter().zip(&f2.theta) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn small_a_tracks_the_likelihood() {
    let data: Vec<f64> = binormal_sample([0.0, 0.0, 1.0, 1.0, 0.0], 50, 5).iter().map(|p| 2.0 + 1.5 * p[0]).collect();
    let a = 1e-6;
    let cfg = DivergenceConfig::new(a).unwrap();
    let n = data.len() as f64;
    let negll = |t: &[f64]| -data.iter().map(|y| NormalDensity.log_density(t, y)).sum::<f64>() / n;
    let mut best_h = (f64::INFINITY, 0, 0);
    let mut best_l = (f64::INFINITY, 0, 0);
    for i in 0..41 {
        for j in 0..41 {
            let t = [1.0 + 0.05 * i as f64, 0.8 + 0.05 * j as f64];
            let h = bhhj_criterion(&NormalDensity, &data, &cfg, &t).unwrap() + (1.0 + 1.0 / a);
            let l = negll(&t);
            if h < best_h.0 {
                best_h = (h, i, j);
            }
            if l < best_l.0 {
                best_l = (l, i, j);
            }
        }
    }
    assert_eq!((best_h.1, best_h.2), (best_l.1, best_l.2));
}

#[test]
fn consistent_for_large_samples() {
    let data: Vec<f64> = binormal_sample([0.0, 0.0, 1.0, 1.0, 0.0], 5000, 9).iter().map(|p| 1.0 + 2.0 * p[0]).collect();
    let fit = bhhj_estimate(&NormalDensity, &data, &DivergenceConfig::new(0.2).unwrap()).unwrap();
    let se = 2.0 / (data.len() as f64).sqrt();
    // BHHJ efficiency at a = 0.2 is above 0.9, so 1.2 x the MLE error is generous
    assert!((fit.theta[0] - 1.0).abs() < 3.0 * 1.2 * se, "{:?}", fit.theta);
    assert!((fit.theta[1] - 2.0).abs() < 3.0 * 1.2 * se / 2f64.sqrt(), "{:?}", fit.theta);
    assert!(fit.residual_norm < 1e-5);
}

#[test]
fn animals_estimates() {
    let d = fixtures::animals_loglog().unwrap();
    let mle_limit = bhhj_estimate(&BinormalDensity, &d, &DivergenceConfig::new(1e-6).unwrap()).unwrap();
    assert!((mle_limit.theta[4] - 0.779).abs() < 0.005, "{:?}", mle_limit.theta);
    let a = tuning_from_downweight(0.10, 2).unwrap();
    let fit = bhhj_estimate(&BinormalDensity, &d, &DivergenceConfig::new(a).unwrap()).unwrap();
    assert!((fit.theta[4] - 0.819).abs() < 0.01, "{:?}", fit.theta);
    assert!(fit.residual_norm < 1e-5, "{}", fit.residual_norm);
    let strong = bhhj_estimate(&BinormalDensity, &d, &DivergenceConfig::new(0.5).unwrap()).unwrap();
    assert!(strong.residual_norm < 1e-5);
    // heavier downweighting moves the estimate towards the value without
    // the dinosaurs (0.960); at a = 0.5 it passes slightly beyond it
    assert!((strong.theta[4] - 0.960).abs() < (fit.theta[4] - 0.960).abs());
    assert!(strong.theta[4] > fit.theta[4]);
}

#[test]
fn outliers_lose_weight_as_a_grows() {
    let animals = fixtures::animals().unwrap();
    let d = fixtures::animals_loglog().unwrap();
    let theta = BinormalDensity.mle(&d).unwrap();
    for name in ["Human", "Brachiosaurus", "Triceratops", "Dipliodocus"] {
        let i = animals.iter().position(|a| a.species == name).unwrap();
        let mut prev = 1.0;
        for a in [0.01, 0.05, 0.105, 0.2, 0.5, 1.0] {
            let w = relative_weight(&BinormalDensity, &theta, &d[i], a);
            assert!(w < prev, "{name} at a = {a}");
            prev = w;
        }
    }
}

#[test]
fn clean_data_costs_little() {
    let truth = [1.0, 2.0, 1.0, 1.5, 0.5];
    let data = binormal_sample(truth, 200, 17);
    let mle = BinormalDensity.mle(&data).unwrap();
    let fit = bhhj_estimate(&BinormalDensity, &data, &DivergenceConfig::new(0.105).unwrap()).unwrap();
    let n = data.len() as f64;
    let se = [
        mle[2] / n.sqrt(),
        mle[3] / n.sqrt(),
        mle[2] / (2.0 * n).sqrt(),
        mle[3] / (2.0 * n).sqrt(),
        (1.0 - mle[4] * mle[4]) / n.sqrt(),
    ];
    for j in 0..5 {
        assert!((fit.theta[j] - mle[j]).abs() <= 0.5 * se[j], "coordinate {j}: {} vs {}", fit.theta[j], mle[j]);
    }
}

// Golden-section minimization over sigma at fixed mu.
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    for _ in 0..200 {
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - g * (hi - lo);
        d = lo + g * (hi - lo);
    }
    f(0.5 * (lo + hi))
}

#[test]
fn profile_deviance_matches_direct_minimization() {
    let data: Vec<f64> = [-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0, -0.2, 0.2, -2.0, 2.0, 0.0]
        .iter()
        .map(|v| v + 2.0)
        .collect();
    let cfg = DivergenceConfig::new(0.3).unwrap();
    let fit = bhhj_estimate(&NormalDensity, &data, &cfg).unwrap();
    assert!((fit.theta[0] - 2.0).abs() < 1e-6);
    let grid: Vec<f64> = (-10..=10).map(|i| 2.0 + 0.1 * i as f64).collect();
    let mu = FocusMap::coordinate(0, "mu");
    let dev = robust_profile_deviance(&NormalDensity, &data, &cfg, &mu, &grid).unwrap();
    let n = data.len() as f64;
    let hmin = golden(|s| bhhj_criterion(&NormalDensity, &data, &cfg, &[2.0, s]).unwrap(), 0.05, 20.0);
    for (i, g) in grid.iter().enumerate() {
        let hp = golden(|s| bhhj_criterion(&NormalDensity, &data, &cfg, &[*g, s]).unwrap(), 0.05, 20.0);
        let want = 2.0 * n * (hp - hmin);
        assert!((dev.deviance_values[i] - want).abs() < 1e-6, "mu = {g}: {} vs {want}", dev.deviance_values[i]);
        let mirror = dev.deviance_values[grid.len() - 1 - i];
        assert!((dev.deviance_values[i] - mirror).abs() < 1e-6);
        assert!(dev.deviance_values[i] >= 0.0);
    }
    assert!(dev.deviance_values[10] < 1e-9);
}

#[test]
fn k_factor_properties() {
    let data = binormal_sample([0.0, 0.0, 1.0, 2.0, 0.4], 2000, 23);
    let cfg = DivergenceConfig::new(0.01).unwrap();
    let fit = bhhj_estimate(&BinormalDensity, &data, &cfg).unwrap();
    let k = k_factor(&BinormalDensity, &data, &cfg, &fit.theta, &rho()).unwrap();
    assert!((k - 1.0).abs() < 0.1, "k = {k}");
    let scaled = FocusMap::function("3 rho", |t| 3.0 * t[4]);
    let k3 = k_factor(&BinormalDensity, &data, &cfg, &fit.theta, &scaled).unwrap();
    assert!((k - k3).abs() < 1e-6 * k);
    assert!(k_factor(&BinormalDensity, &data, &cfg, &[0.0, 0.0, 1.0, 1.0, 1.5], &rho()).is_err());
}

#[test]
fn animals_robust_curve() {
    let d = fixtures::animals_loglog().unwrap();
    let cfg = DivergenceConfig::new(tuning_from_downweight(0.10, 2).unwrap()).unwrap();
    let grid = linspace(0.30, 0.99, 139);
    let r = robust_cc(&BinormalDensity, &d, &cfg, &rho(), &grid).unwrap();
    assert!(r.k > 0.0);
    assert!(r.cc.cc_values().iter().all(|&v| (0.0..1.0).contains(&v)));
    assert!((r.cc.point_estimate() - r.fit.theta[4]).abs() < 1e-9);
    let min = r.deviance.deviance_values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min < 0.01);
    let region = level_set_region(&r.cc, 0.9).unwrap();
    let (lo, hi) = region.hull().unwrap();
    assert!(lo < r.fit.theta[4] && r.fit.theta[4] < hi);

    let mle = robust_cc(&BinormalDensity, &d, &DivergenceConfig::new(1e-6).unwrap(), &rho(), &grid).unwrap();
    assert!((mle.cc.point_estimate() - 0.779).abs() < 0.005);
}

#[test]
fn robust_region_coverage_under_the_model() {
    let truth = [0.0, 0.0, 1.0, 1.0, 0.6];
    let cfg = DivergenceConfig::new(0.105).unwrap();
    let reps = 1000u64;
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            let data = binormal_sample(truth, 100, 1000 + r);
            let fit = bhhj_estimate(&BinormalDensity, &data, &cfg).unwrap();
            let k = k_factor(&BinormalDensity, &data, &cfg, &fit.theta, &rho()).unwrap();
            let dev = robust_profile_deviance_at(&BinormalDensity, &data, &cfg, &rho(), &[truth[4]], &fit).unwrap();
            usize::from(chi2_1_cdf(dev.deviance_values[0] / k) <= 0.9)
        })
        .sum();
    let freq = hits as f64 / reps as f64;
    assert!((freq - 0.90).abs() <= 0.03, "coverage {freq}");
}
