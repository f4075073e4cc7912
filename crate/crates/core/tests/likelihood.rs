//! Likelihood engine checked against closed-form profiles and deviances.

use confcurve::error::Error;
use confcurve::likelihood::models::{
    BinormalModel, ExponentialModel, NormalModel, NormalRandomEffectsModel, PairedPoissonModel,
    PoissonRateModel,
};
use confcurve::likelihood::{
    bartlett_cc, bartlett_factor, coverage_simulate, deviance_curve, maximize_likelihood,
    profile_loglik, wilks_cc, CoverageMethod, CoverageOptions, FocusMap, ParametricModel,
};
use confcurve::optimize::Bound;
use confcurve::random_effects::EffectEstimates;
use confcurve::conditional::PairedCountStudy;
use confcurve::SeedStreams;
use proptest::prelude::*;
use rand::RngCore;
use rand_distr::{Distribution, Normal};

const LN_2PI: f64 = 1.8378770664093453;

/// Normal model that hides its closed-form MLE, forcing the optimizer path.
struct NumericNormal(NormalModel);

impl ParametricModel for NumericNormal {
    type Data = Vec<f64>;
    fn name(&self) -> &'static str {
        "numeric-normal"
    }
    fn param_names(&self, d: &Vec<f64>) -> Vec<String> {
        self.0.param_names(d)
    }
    fn bounds(&self, d: &Vec<f64>) -> Vec<Bound> {
        self.0.bounds(d)
    }
    fn log_likelihood(&self, t: &[f64], d: &Vec<f64>) -> f64 {
        self.0.log_likelihood(t, d)
    }
    fn initial_estimate(&self, d: &Vec<f64>) -> Vec<f64> {
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        // deliberately rough start
        vec![m + 0.7, if self.0.log_scale { 0.5 } else { 2.0 }]
    }
}

/// N(mu, 1) with known variance: the deviance is exactly chi-squared(1).
struct KnownVarianceNormal;

impl ParametricModel for KnownVarianceNormal {
    type Data = Vec<f64>;
    fn name(&self) -> &'static str {
        "known-variance-normal"
    }
    fn param_names(&self, _: &Vec<f64>) -> Vec<String> {
        vec!["mu".into()]
    }
    fn bounds(&self, _: &Vec<f64>) -> Vec<Bound> {
        vec![Bound::Free]
    }
    fn log_likelihood(&self, t: &[f64], d: &Vec<f64>) -> f64 {
        -0.5 * d.iter().map(|y| (y - t[0]).powi(2)).sum::<f64>()
    }
    fn initial_estimate(&self, d: &Vec<f64>) -> Vec<f64> {
        vec![d.iter().sum::<f64>() / d.len() as f64]
    }
    fn simulate(&self, t: &[f64], tpl: &Vec<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let d = Normal::new(t[0], 1.0).unwrap();
        Some((0..tpl.len()).map(|_| d.sample(rng)).collect())
    }
}

fn closed_form_profile(ys: &[f64], mu: f64) -> f64 {
    let n = ys.len() as f64;
    let s2 = ys.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / n;
    -0.5 * n * s2.ln() - 0.5 * n - 0.5 * n * LN_2PI
}

fn sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = SeedStreams::new(seed).stream(0);
    let d = Normal::new(1.5, 2.0).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn normal_mle_closed_form_and_numeric() {
    let data = vec![-1.0, 0.0, 1.0];
    let fit = maximize_likelihood(&NormalModel::default(), &data).unwrap();
    assert!(fit.theta[0].abs() < 1e-12);
    assert!((fit.theta[1].powi(2) - 2.0 / 3.0).abs() < 1e-12);
    for log_scale in [false, true] {
        let fit = maximize_likelihood(&NumericNormal(NormalModel { log_scale }), &data).unwrap();
        let sigma = if log_scale { fit.theta[1].exp() } else { fit.theta[1] };
        assert!(fit.theta[0].abs() < 1e-6, "{:?}", fit.theta);
        assert!((sigma * sigma - 2.0 / 3.0).abs() < 1e-6);
        assert!(fit.gradient_norm <= 1e-6, "gradient {}", fit.gradient_norm);
    }
}

#[test]
fn poisson_rate_mle() {
    let data = vec![2, 5, 3, 1, 5];
    let fit = maximize_likelihood(&PoissonRateModel, &data).unwrap();
    assert!((fit.theta[0] - 3.2).abs() < 1e-12);
    let zeros = vec![0u64; 4];
    let fit = maximize_likelihood(&PoissonRateModel, &zeros).unwrap();
    assert_eq!(fit.theta[0], 0.0);
    assert!(fit.max_loglik.abs() < 1e-12);
}

#[test]
fn profile_at_estimate_equals_maximum() {
    let data = sample(3, 20);
    let model = NumericNormal(NormalModel::default());
    let fit = maximize_likelihood(&model, &data).unwrap();
    let focus = FocusMap::coordinate(0, "mu");
    let p = profile_loglik(&model, &data, &focus, fit.theta[0]).unwrap();
    assert!((p - fit.max_loglik).abs() < 1e-9);
}

#[test]
fn normal_profile_matches_closed_form_in_both_parametrizations() {
    let data = sample(11, 15);
    let focus = FocusMap::coordinate(0, "mu");
    for log_scale in [false, true] {
        let model = NormalModel { log_scale };
        for k in -10..=10 {
            let mu = 1.0 + 0.3 * k as f64;
            let p = profile_loglik(&model, &data, &focus, mu).unwrap();
            assert!((p - closed_form_profile(&data, mu)).abs() < 1e-8, "log_scale={log_scale} mu={mu}");
        }
    }
}

#[test]
fn exponential_profile_is_full_likelihood() {
    let data = vec![0.3, 1.2, 0.7, 2.5, 0.1];
    let focus = FocusMap::coordinate(0, "rate");
    for &rate in &[0.2, 0.9, 3.0] {
        let p = profile_loglik(&ExponentialModel, &data, &focus, rate).unwrap();
        assert_eq!(p, ExponentialModel.log_likelihood(&[rate], &data));
    }
}

#[test]
fn normal_deviance_closed_form_and_symmetry() {
    let data = sample(5, 12);
    let n = data.len() as f64;
    let ybar = data.iter().sum::<f64>() / n;
    let s2 = data.iter().map(|y| (y - ybar).powi(2)).sum::<f64>() / n;
    let grid: Vec<f64> = (-40..=40).map(|k| ybar + 0.05 * k as f64).collect();
    let dev = deviance_curve(&NormalModel::default(), &data, &FocusMap::coordinate(0, "mu"), &grid).unwrap();
    assert!((dev.mle_focus - ybar).abs() < 1e-12);
    for (mu, d) in grid.iter().zip(&dev.deviance_values) {
        let exact = n * (1.0 + (mu - ybar).powi(2) / s2).ln();
        assert!((d - exact).abs() < 1e-6, "mu={mu}: {d} vs {exact}");
    }
    // grid is symmetric about ybar
    let m = dev.deviance_values.len();
    for i in 0..m / 2 {
        let (a, b) = (dev.deviance_values[i], dev.deviance_values[m - 1 - i]);
        assert!((a - b).abs() < 1e-7 * a.max(1.0));
    }
    assert!(dev.deviance_values[m / 2] < 1e-8);
}

#[test]
fn deviance_shape_for_log_concave_models() {
    let data = vec![0.8, 1.9, 0.4, 1.1, 3.2, 0.6, 0.9];
    let grid: Vec<f64> = (1..=80).map(|k| 0.05 * k as f64).collect();
    let dev = deviance_curve(&ExponentialModel, &data, &FocusMap::coordinate(0, "rate"), &grid).unwrap();
    let i_min = dev.focus_values.partition_point(|&g| g < dev.mle_focus);
    for i in 1..grid.len() {
        if i < i_min {
            assert!(dev.deviance_values[i] <= dev.deviance_values[i - 1]);
        } else if i > i_min {
            assert!(dev.deviance_values[i] >= dev.deviance_values[i - 1]);
        }
    }
    assert!(dev.deviance_values.iter().all(|&d| d >= 0.0));
}

#[test]
fn wilks_curve_values() {
    let dev = confcurve::likelihood::DevianceCurve {
        focus_values: vec![0.0, 1.0, 2.0],
        deviance_values: vec![3.841459, 0.0, 2.705543],
        mle_focus: 1.0,
        max_loglik: 0.0,
        profile_thetas: vec![],
    };
    let cc = wilks_cc(&dev).unwrap();
    assert!((cc.cc_values()[0] - 0.95).abs() < 1e-6);
    assert_eq!(cc.cc_values()[1], 0.0);
    assert!((cc.cc_values()[2] - 0.90).abs() < 1e-6);
    assert_eq!(bartlett_cc(&dev, 1.0).unwrap().cc_values(), cc.cc_values());
    assert!(bartlett_cc(&dev, 0.0).is_err());
}

#[test]
fn function_focus_matches_coordinate_focus() {
    let data = sample(8, 10);
    let model = NormalModel::default();
    let coord = FocusMap::coordinate(0, "mu");
    let func = FocusMap::function("mu", |t| t[0]);
    for mu in [0.5, 1.5, 3.0] {
        let a = profile_loglik(&model, &data, &coord, mu).unwrap();
        let b = profile_loglik(&model, &data, &func, mu).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    // a genuinely nonlinear focus: the 0.9 quantile mu + 1.2816 sigma
    let z = 1.2815515655446004;
    let q90 = FocusMap::function("q90", move |t| t[0] + z * t[1]);
    let fit = maximize_likelihood(&model, &data).unwrap();
    let at_hat = profile_loglik(&model, &data, &q90, fit.theta[0] + z * fit.theta[1]).unwrap();
    assert!((at_hat - fit.max_loglik).abs() < 1e-7);
    let off = profile_loglik(&model, &data, &q90, fit.theta[0] + z * fit.theta[1] + 1.0).unwrap();
    assert!(off < fit.max_loglik);
}

#[test]
fn infeasible_focus_value() {
    let data = vec![0.3, 1.2, 0.7];
    let r = profile_loglik(&ExponentialModel, &data, &FocusMap::coordinate(0, "rate"), -1.0);
    assert!(matches!(r, Err(Error::Infeasible(_))));
}

#[test]
fn random_effects_boundary_optimum() {
    let effects = EffectEstimates::new(vec![0.10, 0.11, 0.105], vec![0.05, 0.05, 0.05]).unwrap();
    let fit = maximize_likelihood(&NormalRandomEffectsModel, &effects).unwrap();
    assert_eq!(fit.theta[1], 0.0);
    assert!((fit.theta[0] - 0.105).abs() < 1e-6);
    let spread = EffectEstimates::new(vec![0.0, 1.0, 3.0, -1.0], vec![0.3, 0.3, 0.3, 0.3]).unwrap();
    let fit = maximize_likelihood(&NormalRandomEffectsModel, &spread).unwrap();
    assert!(fit.theta[1] > 0.5);
    assert!(fit.gradient_norm < 1e-5);
}

#[test]
fn paired_poisson_fit_matches_conditional_structure() {
    let studies = vec![
        PairedCountStudy::new(39, 43, 2, 1).unwrap(),
        PairedCountStudy::new(44, 44, 4, 4).unwrap(),
        PairedCountStudy::new(107, 110, 6, 4).unwrap(),
    ];
    let fit = maximize_likelihood(&PairedPoissonModel, &studies).unwrap();
    let gamma = fit.theta[0];
    // nuisance rates profile out in closed form: lambda_j = z_j / (e0 + e1 gamma)
    for (s, l) in studies.iter().zip(&fit.theta[1..]) {
        assert!((l - s.z() as f64 / (s.e0 + s.e1 * gamma)).abs() < 1e-6);
    }
    assert!(gamma > 0.5 && gamma < 5.0);
}

#[test]
fn simulated_data_is_accepted() {
    let streams = SeedStreams::new(99);
    let mut rng = streams.stream(0);
    let normal = NormalModel::default().simulate(&[0.0, 1.0], &vec![0.0; 8], &mut rng).unwrap();
    assert!(NormalModel::default().log_likelihood(&[0.0, 1.0], &normal).is_finite());
    let exp = ExponentialModel.simulate(&[2.0], &vec![0.0; 8], &mut rng).unwrap();
    assert!(ExponentialModel.validate(&exp).is_ok());
    let pois = PoissonRateModel.simulate(&[3.0], &vec![0; 8], &mut rng).unwrap();
    assert!(PoissonRateModel.log_likelihood(&[3.0], &pois).is_finite());
    let bin = BinormalModel.simulate(&[0.0, 1.0, 1.0, 2.0, 0.5], &vec![[0.0; 2]; 30], &mut rng).unwrap();
    assert!(BinormalModel.log_likelihood(&[0.0, 1.0, 1.0, 2.0, 0.5], &bin).is_finite());
    let studies = vec![PairedCountStudy::new(40, 40, 2, 3).unwrap(); 3];
    let sim = PairedPoissonModel.simulate(&[1.5, 0.05, 0.05, 0.05], &studies, &mut rng).unwrap();
    assert!(PairedPoissonModel.log_likelihood(&[1.5, 0.05, 0.05, 0.05], &sim).is_finite());
    let eff = EffectEstimates::new(vec![0.0; 3], vec![0.1; 3]).unwrap();
    let sim = NormalRandomEffectsModel.simulate(&[0.0, 0.2], &eff, &mut rng).unwrap();
    assert!(NormalRandomEffectsModel.log_likelihood(&[0.0, 0.2], &sim).is_finite());
}

#[test]
fn bartlett_factor_is_one_for_exact_chi_square_deviance() {
    let template = vec![0.0; 7];
    let b = 4000;
    let f = bartlett_factor(&KnownVarianceNormal, &template, &[0.3], &FocusMap::coordinate(0, "mu"), b, 5).unwrap();
    assert!((f - 1.0).abs() < 3.0 / (b as f64).sqrt(), "factor {f}");
    assert!(bartlett_factor(&KnownVarianceNormal, &template, &[0.3], &FocusMap::coordinate(0, "mu"), 999, 5).is_err());
}

fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0))
}

#[test]
fn exponential_bartlett_factor_against_large_oracles() {
    let n = 5usize;
    // E dev = 2n(ln n - digamma(n)) since rate * sum(y) ~ Gamma(n, 1)
    let analytic = 2.0 * n as f64 * ((n as f64).ln() - digamma(n as f64));
    // independent 10^6-replication oracle using the closed-form deviance
    let mut rng = SeedStreams::new(2024).stream(0);
    let exp = rand_distr::Exp::new(1.0).unwrap();
    let reps = 1_000_000;
    let mut total = 0.0;
    for _ in 0..reps {
        let s: f64 = (0..n).map(|_| exp.sample(&mut rng)).sum();
        let u = s / n as f64;
        total += 2.0 * n as f64 * (u - 1.0 - u.ln());
    }
    let oracle = total / reps as f64;
    assert!((oracle - analytic).abs() < 0.01, "{oracle} vs {analytic}");
    let template = vec![1.0; n];
    let f = bartlett_factor(&ExponentialModel, &template, &[1.7], &FocusMap::coordinate(0, "rate"), 50_000, 3).unwrap();
    assert!(f > 1.0);
    assert!((f - oracle).abs() < 0.02, "factor {f}, oracle {oracle}");
}

#[test]
fn student_pivot_coverage() {
    let opts = CoverageOptions {
        reps: 10_000,
        seed: 17,
        ..CoverageOptions::default()
    };
    let r = coverage_simulate(
        &NormalModel::default(),
        &[2.0, 1.5],
        &vec![0.0; 10],
        &FocusMap::coordinate(0, "mu"),
        CoverageMethod::Pivot,
        &opts,
    )
    .unwrap();
    let c90 = r.coverage_at(0.9).unwrap();
    assert!((c90 - 0.90).abs() <= 0.01, "coverage {c90}");
    assert!(r.ks.passes(0.01));
    assert_eq!(r.failures, 0);
}

#[test]
fn wilks_coverage_normal_mean_n50() {
    let opts = CoverageOptions {
        reps: 10_000,
        seed: 23,
        ..CoverageOptions::default()
    };
    let r = coverage_simulate(
        &NormalModel::default(),
        &[0.0, 1.0],
        &vec![0.0; 50],
        &FocusMap::coordinate(0, "mu"),
        CoverageMethod::Wilks,
        &opts,
    )
    .unwrap();
    let c90 = r.coverage_at(0.9).unwrap();
    assert!((0.88..=0.92).contains(&c90), "coverage {c90}");
    assert_eq!(r.levels.len(), 4);
}

#[test]
fn normal_approx_coverage_runs() {
    let opts = CoverageOptions {
        reps: 2000,
        seed: 4,
        ..CoverageOptions::default()
    };
    let r = coverage_simulate(
        &ExponentialModel,
        &[1.0],
        &vec![0.0; 40],
        &FocusMap::coordinate(0, "rate"),
        CoverageMethod::NormalApprox,
        &opts,
    )
    .unwrap();
    let c90 = r.coverage_at(0.9).unwrap();
    assert!((0.86..=0.94).contains(&c90), "coverage {c90}");
}

#[test]
fn inapplicable_methods_are_rejected() {
    let opts = CoverageOptions {
        reps: 10,
        ..CoverageOptions::default()
    };
    let r = coverage_simulate(
        &BinormalModel,
        &[0.0, 0.0, 1.0, 1.0, 0.3],
        &vec![[0.0; 2]; 10],
        &FocusMap::coordinate(4, "rho"),
        CoverageMethod::Pivot,
        &opts,
    );
    assert!(matches!(r, Err(Error::NotApplicable(_))));
    let r = coverage_simulate(
        &NumericNormal(NormalModel::default()),
        &[0.0, 1.0],
        &vec![0.0; 10],
        &FocusMap::coordinate(0, "mu"),
        CoverageMethod::Wilks,
        &opts,
    );
    assert!(matches!(r, Err(Error::MissingSimulator)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn deviance_nonnegative_and_zero_at_estimate(seed in 0u64..10_000, n in 3usize..30) {
        let data = sample(seed, n);
        let ybar = data.iter().sum::<f64>() / n as f64;
        let grid: Vec<f64> = (-10..=10).map(|k| ybar + 0.2 * k as f64).collect();
        let dev = deviance_curve(&NormalModel { log_scale: true }, &data, &FocusMap::coordinate(0, "mu"), &grid).unwrap();
        prop_assert!(dev.deviance_values.iter().all(|&d| d >= 0.0));
        prop_assert!(dev.deviance_values[10] < 1e-8);
        let cc = wilks_cc(&dev).unwrap();
        prop_assert!(cc.cc_values().iter().all(|&c| (0.0..1.0).contains(&c)));
    }
}
