//! One function per subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use confcurve::cd::{cd_from_cc, default_grid, write_cc_csv, write_cd_csv, SampleMoments};
use confcurve::conditional::{combined_optimal_cd, combined_optimal_cd_exact, read_studies_csv, PairedCountStudy};
use confcurve::fusion::{confidence_loglik, iiccff_fuse, normal_combine, FusionFocus, StudySummary};
use confcurve::interp::linspace;
use confcurve::likelihood::models::{ExponentialModel, NormalModel, PoissonRateModel};
use confcurve::likelihood::{
    bartlett_factor, coverage_simulate, deviance_curve, maximize_likelihood, normal_approx_se, wilks_cc,
    bartlett_cc, CoverageMethod, CoverageOptions, FocusMap, ParametricModel,
};
use confcurve::quantile::{quantile_panel, write_quantile_csv, OrderedSample};
use confcurve::random_effects::{
    effects_from_slopes, read_effects_csv, read_series_csv, regression_slopes, tau_cd_at, EffectEstimates,
    SlopeFit,
};
use confcurve::robust::{robust_cc, tuning_from_downweight, BinormalDensity, DensityModel, DivergenceConfig};
use confcurve::{fixtures, CdGrid, ConfidenceCurve};
use serde::Deserialize;
use serde_json::json;

use crate::failure;
use crate::grid::GridSpec;
use crate::input;
use crate::output::{header, Destination, McSummary, Sidecar};
use crate::{FuseFocus, FuseMethod, Method, ModelKind, OutputArgs, SampleArgs};

const GRID_POINTS: usize = 401;

fn destination(out: &OutputArgs) -> Destination {
    Destination::new(out.out.clone(), out.sidecar.clone())
}

/// CD output when the curve can be read as a CD, curve-only output otherwise.
fn curve_csv(cc: &ConfidenceCurve, label: &str, warnings: &mut Vec<String>) -> String {
    match cd_from_cc(cc, label) {
        Ok(cd) => write_cd_csv(&cd),
        Err(e) => {
            warnings.push(format!("curve written without a CD column: {e}"));
            write_cc_csv(cc)
        }
    }
}

fn default_param(model: ModelKind) -> &'static str {
    match model {
        ModelKind::Normal => "mean",
        ModelKind::Exponential | ModelKind::Poisson => "rate",
    }
}

fn focus_for(model: ModelKind, param: &str) -> Result<FocusMap> {
    match (model, param) {
        (ModelKind::Normal, "mean" | "mu") => Ok(FocusMap::coordinate(0, "mu")),
        (ModelKind::Normal, "sd" | "sigma") => Ok(FocusMap::coordinate(1, "sigma")),
        (ModelKind::Exponential | ModelKind::Poisson, "rate" | "lambda") => Ok(FocusMap::coordinate(0, "rate")),
        (m, p) => Err(failure::config(format!("parameter '{p}' is not available for the {m:?} model"))),
    }
}

/// Grid spanning the estimate by several standard errors, kept inside
/// (0, inf) for positive parameters.
fn auto_grid(estimate: f64, se: f64, positive: bool) -> Vec<f64> {
    if positive {
        let lo = (estimate - 6.0 * se).max(estimate * 0.02);
        let hi = estimate + 8.0 * se;
        linspace(lo, hi, GRID_POINTS)
    } else {
        default_grid(estimate, se, GRID_POINTS)
    }
}

pub fn pivot_cd(sample: &SampleArgs, output: &OutputArgs) -> Result<()> {
    let param = sample.param.as_deref().unwrap_or(default_param(sample.model));
    let focus = focus_for(sample.model, param)?;
    let cd = match sample.model {
        ModelKind::Normal => {
            let data = input::read_numbers(&sample.input)?;
            let m = SampleMoments::from_sample(&data)?;
            let grid = match (&sample.grid, focus.as_coordinate()) {
                (Some(g), _) => g.values(),
                (None, Some(0)) => default_grid(m.mean, m.sd / (m.n as f64).sqrt(), GRID_POINTS),
                (None, _) => auto_grid(m.sd, m.sd / (2.0 * (m.n - 1) as f64).sqrt(), true),
            };
            tabulate_pivot(&NormalModel::default(), &focus, &data, &grid)?
        }
        ModelKind::Exponential => {
            let data = input::read_numbers(&sample.input)?;
            let n = data.len() as f64;
            let rate = n / data.iter().sum::<f64>();
            let grid = sample.grid.as_ref().map_or_else(|| auto_grid(rate, rate / n.sqrt(), true), GridSpec::values);
            tabulate_pivot(&ExponentialModel, &focus, &data, &grid)?
        }
        ModelKind::Poisson => {
            return Err(failure::config(
                "the poisson model has no continuous pivot; use wilks-cc or bartlett-cc",
            ))
        }
    };
    let mut sidecar = Sidecar::new("pivot-cd", None);
    sidecar.cd_intervals(&cd)?;
    sidecar.details = json!({ "model": format!("{:?}", sample.model).to_lowercase(), "param": param });
    let csv = header("pivot-cd", None) + &write_cd_csv(&cd);
    destination(output).emit(&csv, &sidecar)
}

fn tabulate_pivot<M: ParametricModel>(model: &M, focus: &FocusMap, data: &M::Data, grid: &[f64]) -> Result<CdGrid> {
    let values = grid
        .iter()
        .map(|&psi| {
            model
                .pivot_cd(focus, data, psi)
                .ok_or_else(|| failure::config(format!("no pivot for {} in the {} model", focus.label(), model.name())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CdGrid::new(grid.to_vec(), values, None, focus.label())?)
}

struct DevianceOutput {
    cc: ConfidenceCurve,
    estimate: Vec<f64>,
    factor: Option<f64>,
}

fn deviance_output<M: ParametricModel>(
    model: &M,
    data: &M::Data,
    focus: &FocusMap,
    grid: Option<&GridSpec>,
    positive: bool,
    bartlett: Option<(usize, u64)>,
) -> Result<DevianceOutput> {
    let fit = maximize_likelihood(model, data)?;
    let grid = match grid {
        Some(g) => g.values(),
        None => {
            let se = normal_approx_se(model, data, focus, &fit)?;
            auto_grid(focus.eval(&fit.theta), se, positive)
        }
    };
    let dev = deviance_curve(model, data, focus, &grid)?;
    let (cc, factor) = match bartlett {
        None => (wilks_cc(&dev)?, None),
        Some((reps, seed)) => {
            let f = bartlett_factor(model, data, &fit.theta, focus, reps, seed)?;
            (bartlett_cc(&dev, f)?, Some(f))
        }
    };
    Ok(DevianceOutput {
        cc,
        estimate: fit.theta,
        factor,
    })
}

pub fn deviance_cc(sample: &SampleArgs, bartlett: Option<(usize, u64)>, output: &OutputArgs) -> Result<()> {
    let command = if bartlett.is_some() { "bartlett-cc" } else { "wilks-cc" };
    let param = sample.param.as_deref().unwrap_or(default_param(sample.model));
    let focus = focus_for(sample.model, param)?;
    let positive = focus.as_coordinate() != Some(0) || sample.model != ModelKind::Normal;
    let grid = sample.grid.as_ref();
    let out = match sample.model {
        ModelKind::Normal => {
            let data = input::read_numbers(&sample.input)?;
            deviance_output(&NormalModel::default(), &data, &focus, grid, positive, bartlett)?
        }
        ModelKind::Exponential => {
            let data = input::read_numbers(&sample.input)?;
            deviance_output(&ExponentialModel, &data, &focus, grid, positive, bartlett)?
        }
        ModelKind::Poisson => {
            let data = input::read_counts(&sample.input)?;
            deviance_output(&PoissonRateModel, &data, &focus, grid, positive, bartlett)?
        }
    };
    let seed = bartlett.map(|(_, s)| s);
    let mut sidecar = Sidecar::new(command, seed);
    sidecar.cc_intervals(&out.cc)?;
    sidecar.tolerances.insert("optimizer_f_tol".into(), 1e-9);
    sidecar.tolerances.insert("optimizer_x_tol".into(), 1e-8);
    let csv = curve_csv(&out.cc, focus.label(), &mut sidecar.warnings);
    sidecar.details = json!({
        "model": format!("{:?}", sample.model).to_lowercase(),
        "param": param,
        "mle": out.estimate,
        "bartlett_factor": out.factor,
        "bartlett_reps": bartlett.map(|(r, _)| r),
    });
    destination(output).emit(&(header(command, seed) + &csv), &sidecar)
}

fn load_studies(fixture: Option<&str>, input: Option<&Path>) -> Result<Vec<PairedCountStudy>> {
    match (fixture, input) {
        (Some("lidocaine"), _) => Ok(fixtures::lidocaine()?),
        (Some(other), _) => Err(failure::config(format!("unknown fixture '{other}' (available: lidocaine)"))),
        (None, Some(path)) => Ok(read_studies_csv(&input::read_text(path)?)
            .with_context(|| format!("reading studies from {}", path.display()))?),
        (None, None) => Err(failure::config("give --fixture or --input")),
    }
}

pub fn optimal_cd(
    fixture: Option<&str>,
    input: Option<&Path>,
    grid: &GridSpec,
    draws: usize,
    exact: bool,
    seed: u64,
    output: &OutputArgs,
) -> Result<()> {
    let studies = load_studies(fixture, input)?;
    let values = grid.values();
    let seed_used = (!exact).then_some(seed);
    let mut sidecar = Sidecar::new("optimal-cd", seed_used);
    let mc = if exact {
        combined_optimal_cd_exact(&studies, &values, draws)?
    } else {
        let mc = combined_optimal_cd(&studies, &values, draws, seed)?;
        sidecar.monte_carlo = Some(McSummary {
            draws_per_point: draws,
            max_standard_error: mc.max_mc_se(),
        });
        sidecar.tolerances.insert("monte_carlo_se_max".into(), mc.max_mc_se());
        mc
    };
    sidecar.cd_intervals(&mc.cd)?;
    sidecar.warnings.extend(mc.warnings.iter().cloned());
    let at_one = (values[0] <= 1.0 && 1.0 <= values[values.len() - 1]).then(|| mc.cd.eval(1.0));
    sidecar.details = json!({
        "studies": studies.len(),
        "method": if exact { "exact convolution" } else { "simulation" },
        "cd_at_one": at_one,
    });
    let csv = header("optimal-cd", seed_used) + &write_cd_csv(&mc.cd);
    destination(output).emit(&csv, &sidecar)
}

/// JSON manifest listing the CDs to combine. Source paths are relative to
/// the manifest.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub focus: Option<String>,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub grid: Option<String>,
    pub sources: Vec<ManifestSource>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSource {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub weight: Option<f64>,
}

fn parse_enum<T: ValueEnum>(value: &str, what: &str) -> Result<T> {
    T::from_str(value, true).map_err(|_| failure::config(format!("unknown {what} '{value}'")))
}

pub fn fuse(
    manifest_path: &Path,
    grid: Option<GridSpec>,
    method: Option<FuseMethod>,
    focus: Option<FuseFocus>,
    output: &OutputArgs,
) -> Result<()> {
    let text = input::read_text(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", manifest_path.display()))?;
    if manifest.sources.is_empty() {
        return Err(failure::config("manifest lists no sources"));
    }
    let method = match (method, &manifest.method) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_enum(s, "fusion method")?,
        (None, None) => FuseMethod::Iiccff,
    };
    let focus = match (focus, &manifest.focus) {
        (Some(f), _) => f,
        (None, Some(s)) => parse_enum(s, "fusion focus")?,
        (None, None) => FuseFocus::Common,
    };
    let grid = match (grid, &manifest.grid) {
        (Some(g), _) => g,
        (None, Some(s)) => s.parse::<GridSpec>().map_err(failure::config)?,
        (None, None) => return Err(failure::config("no grid given on the command line or in the manifest")),
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let summaries = manifest
        .sources
        .iter()
        .map(|s| {
            let path = base.join(&s.path);
            let text = input::read_text(&path)?;
            let cd = confcurve::cd::read_cd_csv(&text, s.id.clone())
                .with_context(|| format!("reading CD {}", path.display()))?;
            let summary = StudySummary::new(cd, s.id.clone());
            Ok(match s.weight {
                Some(w) => summary.with_weight(w),
                None => summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_summaries(&summaries, method, focus, &grid.values())?;
    let mut sidecar = Sidecar::new("fuse", None);
    sidecar.cd_intervals(&fused.cd)?;
    sidecar.warnings = fused.warnings.clone();
    sidecar.details = json!({
        "method": format!("{method:?}").to_lowercase(),
        "focus": format!("{focus:?}").to_lowercase(),
        "grid": grid.to_string(),
        "sources": manifest.sources.iter().map(|s| &s.id).collect::<Vec<_>>(),
    });
    let csv = header("fuse", None) + &write_cd_csv(&fused.cd);
    destination(output).emit(&csv, &sidecar)
}

pub fn fuse_summaries(
    summaries: &[StudySummary],
    method: FuseMethod,
    focus: FuseFocus,
    grid: &[f64],
) -> Result<confcurve::fusion::Fused> {
    match method {
        FuseMethod::Normal => {
            if focus != FuseFocus::Common {
                return Err(failure::config("the normal-score rule only combines a common parameter"));
            }
            Ok(normal_combine(summaries, grid)?)
        }
        FuseMethod::Iiccff => {
            if summaries.iter().any(|s| s.weight.is_some()) {
                return Err(failure::config("weights apply to the normal-score rule only"));
            }
            let sources = summaries
                .iter()
                .map(|s| confidence_loglik(&s.cd))
                .collect::<confcurve::Result<Vec<_>>>()?;
            let f = match focus {
                FuseFocus::Common => FusionFocus::Common,
                FuseFocus::Difference => FusionFocus::Difference,
                FuseFocus::Ratio => FusionFocus::Ratio,
            };
            Ok(iiccff_fuse(&sources, &f, grid)?)
        }
    }
}

/// Grid from zero to where the CD reaches 0.999.
fn tau_grid(effects: &EffectEstimates) -> Vec<f64> {
    let mut hi = effects.std_errors().iter().copied().fold(0.0, f64::max).max(1e-12);
    for _ in 0..80 {
        if tau_cd_at(effects, hi) >= 0.999 {
            break;
        }
        hi *= 1.5;
    }
    linspace(0.0, hi, GRID_POINTS)
}

pub fn tau_cd(
    input: Option<&Path>,
    effects: Option<&Path>,
    fixture: Option<&str>,
    sex: &str,
    grid: Option<GridSpec>,
    output: &OutputArgs,
) -> Result<()> {
    let (estimates, slopes): (EffectEstimates, Option<Vec<SlopeFit>>) = match (input, effects, fixture) {
        (Some(path), _, _) => {
            let series = read_series_csv(&input::read_text(path)?)?;
            let fits = regression_slopes(&series)?;
            (effects_from_slopes(&fits)?, Some(fits))
        }
        (None, Some(path), _) => (read_effects_csv(&input::read_text(path)?)?, None),
        (None, None, Some("demography")) => {
            let fits = regression_slopes(&fixtures::demography(sex)?)?;
            (effects_from_slopes(&fits)?, Some(fits))
        }
        (None, None, Some(other)) => {
            return Err(failure::config(format!("unknown fixture '{other}' (available: demography)")))
        }
        (None, None, None) => return Err(failure::config("give --input, --effects or --fixture")),
    };
    let grid = grid.map_or_else(|| tau_grid(&estimates), |g| g.values());
    let cd = confcurve::random_effects::tau_cd(&estimates, &grid)?;
    let mut sidecar = Sidecar::new("tau-cd", None);
    sidecar.cd_intervals(&cd)?;
    sidecar.details = json!({
        "k": estimates.k(),
        "cd_at_zero": cd.atom(),
        "slopes": slopes,
    });
    let csv = header("tau-cd", None) + &write_cd_csv(&cd);
    destination(output).emit(&csv, &sidecar)
}

pub fn quantile(path: &Path, ps: &[f64], levels: &[f64], output: &OutputArgs) -> Result<()> {
    let sample = OrderedSample::new(input::read_numbers(path)?)?;
    let curves = quantile_panel(&sample, ps, levels)?;
    let mut sidecar = Sidecar::new("quantile-cc", None);
    let mut details = Vec::new();
    for c in &curves {
        for level in crate::output::REPORT_LEVELS {
            let r = c.region(level)?;
            sidecar
                .intervals
                .insert(format!("p={}@{level:.2}", c.p), vec![(r.interval.lower, r.interval.upper)]);
        }
        sidecar.warnings.extend(c.notes.iter().map(|n| format!("p = {}: {n}", c.p)));
        details.push(json!({
            "p": c.p,
            "point_estimate": c.point_estimate,
            "max_coverage": c.max_coverage(),
            "regions": c.regions,
        }));
    }
    sidecar.warnings.dedup();
    sidecar.details = json!({ "n": sample.n(), "curves": details });
    let csv = header("quantile-cc", None) + &write_quantile_csv(&curves)?;
    destination(output).emit(&csv, &sidecar)
}

pub struct RobustArgs {
    pub model: String,
    pub input: Option<PathBuf>,
    pub fixture: Option<String>,
    pub log_log: bool,
    pub focus: String,
    pub a: Option<f64>,
    pub downweight: Option<f64>,
    pub grid: Option<GridSpec>,
    pub output: OutputArgs,
}

/// Default fraction by which a typical point is downweighted.
pub const DEFAULT_DOWNWEIGHT: f64 = 0.10;

fn robust_data(args: &RobustArgs) -> Result<Vec<[f64; 2]>> {
    match (&args.fixture, &args.input) {
        (Some(f), _) if f == "animals" => Ok(fixtures::animals_loglog()?),
        (Some(f), _) => Err(failure::config(format!("unknown fixture '{f}' (available: animals)"))),
        (None, Some(path)) => {
            let pairs = input::read_pairs(path)?;
            if !args.log_log {
                return Ok(pairs);
            }
            pairs
                .into_iter()
                .map(|[x, y]| {
                    if x > 0.0 && y > 0.0 {
                        Ok([x.ln(), y.ln()])
                    } else {
                        Err(failure::data(format!("--log-log needs positive values, got ({x}, {y})")))
                    }
                })
                .collect()
        }
        (None, None) => Err(failure::config("give --input or --fixture")),
    }
}

pub fn robust(args: &RobustArgs) -> Result<()> {
    if args.model != "binormal" {
        return Err(failure::config(format!("unknown robust model '{}' (available: binormal)", args.model)));
    }
    let model = BinormalDensity;
    let data = robust_data(args)?;
    let index = model
        .param_names()
        .iter()
        .position(|p| *p == args.focus)
        .ok_or_else(|| failure::config(format!("unknown focus '{}' (one of {:?})", args.focus, model.param_names())))?;
    let focus = FocusMap::coordinate(index, args.focus.clone());
    let a = match args.a {
        Some(a) => a,
        None => tuning_from_downweight(args.downweight.unwrap_or(DEFAULT_DOWNWEIGHT), model.obs_dim())?,
    };
    let grid = match (&args.grid, args.focus.as_str()) {
        (Some(g), _) => g.values(),
        (None, "rho") => {
            let mle = model.mle(&data)?;
            let r = mle[index];
            linspace((r - 0.7).max(-0.99), (r + 0.5).min(0.99), 141)
        }
        (None, _) => return Err(failure::config("--grid is required for foci other than rho")),
    };
    let curve = robust_cc(&model, &data, &DivergenceConfig::new(a)?, &focus, &grid)?;
    let mut sidecar = Sidecar::new("robust-cc", None);
    sidecar.cc_intervals(&curve.cc)?;
    let csv = curve_csv(&curve.cc, &args.focus, &mut sidecar.warnings);
    sidecar.details = json!({
        "a": a,
        "theta": curve.fit.theta,
        "param_names": model.param_names(),
        "k": curve.k,
        "estimating_equation_residual": curve.fit.residual_norm,
        "n": data.len(),
    });
    destination(&args.output).emit(&(header("robust-cc", None) + &csv), &sidecar)
}

pub struct CoverageArgs {
    pub model: ModelKind,
    pub method: Method,
    pub theta: Option<Vec<f64>>,
    pub param: Option<String>,
    pub n: usize,
    pub reps: usize,
    pub bartlett_reps: usize,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub output: OutputArgs,
}

pub fn coverage(args: &CoverageArgs) -> Result<()> {
    let param = args.param.as_deref().unwrap_or(default_param(args.model));
    let focus = focus_for(args.model, param)?;
    let method = match args.method {
        Method::NormalApprox => CoverageMethod::NormalApprox,
        Method::Wilks => CoverageMethod::Wilks,
        Method::WilksBartlett => CoverageMethod::WilksBartlett,
        Method::Pivot => CoverageMethod::Pivot,
    };
    let opts = CoverageOptions {
        reps: args.reps,
        seed: args.seed,
        levels: args.levels.clone(),
        bartlett_reps: args.bartlett_reps,
    };
    let default_theta = match args.model {
        ModelKind::Normal => vec![0.0, 1.0],
        ModelKind::Exponential => vec![1.0],
        ModelKind::Poisson => vec![3.0],
    };
    let theta = args.theta.clone().unwrap_or(default_theta);
    let report = match args.model {
        ModelKind::Normal => {
            check_theta(&theta, 2)?;
            coverage_simulate(&NormalModel::default(), &theta, &vec![0.0; args.n], &focus, method, &opts)?
        }
        ModelKind::Exponential => {
            check_theta(&theta, 1)?;
            coverage_simulate(&ExponentialModel, &theta, &vec![0.0; args.n], &focus, method, &opts)?
        }
        ModelKind::Poisson => {
            check_theta(&theta, 1)?;
            coverage_simulate(&PoissonRateModel, &theta, &vec![0u64; args.n], &focus, method, &opts)?
        }
    };
    let mut csv = header("coverage-sim", Some(args.seed)) + "level,coverage\n";
    for (l, c) in report.levels.iter().zip(&report.coverage) {
        csv.push_str(&format!("{l},{c}\n"));
    }
    let mut sidecar = Sidecar::new("coverage-sim", Some(args.seed));
    let worst = report
        .coverage
        .iter()
        .map(|c| (c * (1.0 - c) / report.reps as f64).sqrt())
        .fold(0.0, f64::max);
    sidecar.monte_carlo = Some(McSummary {
        draws_per_point: report.reps,
        max_standard_error: worst,
    });
    if report.failures > 0 {
        sidecar.warnings.push(format!("{} replications dropped after failed fits", report.failures));
    }
    sidecar.details = json!({
        "model": format!("{:?}", args.model).to_lowercase(),
        "param": param,
        "theta": theta,
        "n": args.n,
        "report": report,
        "mean_abs_coverage_error": report.mean_abs_coverage_error(),
    });
    destination(&args.output).emit(&csv, &sidecar)
}

fn check_theta(theta: &[f64], dim: usize) -> Result<()> {
    if theta.len() == dim {
        Ok(())
    } else {
        Err(failure::config(format!("--theta needs {dim} value(s), got {}", theta.len())))
    }
}

