//! Regenerates the data behind each published figure and table, with a
//! sidecar recording how the numbers compare to the published ones.

use std::path::Path;

use anyhow::Result;
use confcurve::cd::{cc_from_cd, equi_tailed_interval, level_set_region, write_cc_csv, write_cd_csv};
use confcurve::conditional::{combined_optimal_cd, combined_optimal_cd_exact, study_optimal_cd};
use confcurve::fusion::StudySummary;
use confcurve::interp::linspace;
use confcurve::likelihood::models::BinormalModel;
use confcurve::likelihood::{deviance_curve, wilks_cc, FocusMap};
use confcurve::random_effects::{effects_from_slopes, regression_slopes, tau_cd, GroupSeries};
use confcurve::robust::{robust_cc, tuning_from_downweight, BinormalDensity, DivergenceConfig};
use confcurve::{fixtures, ConfidenceCurve};
use serde_json::json;

use crate::commands::fuse_summaries;
use crate::failure;
use crate::grid::GridSpec;
use crate::input;
use crate::output::{header, write_file, Check, McSummary, Sidecar};
use crate::{FuseFocus, FuseMethod, Figure};

/// Grid on which per-study CDs are tabulated before conversion; wide enough
/// that the confidence log-likelihoods are not clipped inside the plot range.
const SOURCE_GRID: (f64, f64, usize) = (0.02, 60.0, 600);
const PLOT_GRID: (f64, f64, usize) = (0.2, 8.0, 201);
const FUSION_GRID: (f64, f64, usize) = (0.5, 5.0, 120);

pub fn run(figure: Figure, out_dir: &Path, seed: u64, draws: usize, data: Option<&Path>) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| failure::data(format!("cannot create {}: {e}", out_dir.display())))?;
    let (name, sidecar) = match figure {
        Figure::Fig2 => ("fig2", fig2(out_dir, seed, draws)?),
        Figure::Fig3 => ("fig3", fig3(out_dir, data)?),
        Figure::Fig4 => ("fig4", fig4(out_dir)?),
        Figure::Table1StudyCds => ("table1-study-cds", table1(out_dir)?),
    };
    write_file(&out_dir.join(format!("{name}.json")), &sidecar.to_json()?)?;
    for c in sidecar.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "warning: {name}: {} = {:.4} differs from the published {:.4} by more than {}",
            c.name, c.value, c.target, c.tolerance
        );
    }
    Ok(())
}

fn grid(spec: (f64, f64, usize)) -> Vec<f64> {
    GridSpec::log(spec.0, spec.1, spec.2).values()
}

fn fig2(out_dir: &Path, seed: u64, draws: usize) -> Result<Sidecar> {
    let studies = fixtures::lidocaine()?;
    let plot = grid(PLOT_GRID);
    let source = grid(SOURCE_GRID);
    let mut sidecar = Sidecar::new("reproduce fig2", Some(seed));
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (j, s) in studies.iter().enumerate() {
        let file = format!("study{}.csv", j + 1);
        let cd = study_optimal_cd(s, &plot)?;
        write_file(&out_dir.join(&file), &(header("reproduce fig2", None) + &write_cd_csv(&cd)))?;
        files.push(file);
        summaries.push(StudySummary::new(study_optimal_cd(s, &source)?, format!("study{}", j + 1)));
    }
    let combined = combined_optimal_cd(&studies, &plot, draws, seed)?;
    write_file(
        &out_dir.join("combined.csv"),
        &(header("reproduce fig2", Some(seed)) + &write_cd_csv(&combined.cd)),
    )?;
    files.push("combined.csv".into());
    let fusion_grid = grid(FUSION_GRID);
    let fused = fuse_summaries(&summaries, FuseMethod::Iiccff, FuseFocus::Common, &fusion_grid)?;
    write_file(&out_dir.join("fused.csv"), &(header("reproduce fig2", None) + &write_cd_csv(&fused.cd)))?;
    files.push("fused.csv".into());

    sidecar.cd_intervals(&combined.cd)?;
    sidecar.monte_carlo = Some(McSummary {
        draws_per_point: draws,
        max_standard_error: combined.max_mc_se(),
    });
    sidecar.warnings.extend(combined.warnings.iter().cloned());
    sidecar.warnings.extend(fused.warnings.iter().cloned());
    let median = combined.cd.median()?;
    let ci = equi_tailed_interval(&combined.cd, 0.95)?;
    let (lo, hi) = ci.hull().unwrap_or((f64::NAN, f64::NAN));
    // the optimal curve is evaluated on the fusion grid itself, not interpolated
    let optimal_cc = cc_from_cd(&combined_optimal_cd(&studies, &fusion_grid, draws, seed)?.cd);
    let exact_cc = cc_from_cd(&combined_optimal_cd_exact(&studies, &fusion_grid, draws)?.cd);
    let sup_gap = |other: &ConfidenceCurve| {
        fused
            .cc
            .cc_values()
            .iter()
            .zip(other.cc_values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let gap = sup_gap(&optimal_cc);
    sidecar.tolerances.insert("median".into(), 0.03);
    sidecar.tolerances.insert("cd_at_one".into(), 0.005);
    sidecar.tolerances.insert("interval_endpoint".into(), 0.05);
    sidecar.tolerances.insert("fusion_sup_gap".into(), 0.05);
    sidecar.checks = vec![
        Check::new("median", median, 1.732, 0.03),
        Check::new("cd_at_one", combined.cd.eval(1.0), 0.021, 0.005),
        Check::new("interval_95_lower", lo, 1.023, 0.05),
        Check::new("interval_95_upper", hi, 3.027, 0.05),
        Check::new("fusion_sup_gap", gap, 0.0, 0.05),
    ];
    sidecar.details = json!({ "files": files, "draws": draws, "fusion_sup_gap_exact": sup_gap(&exact_cc) });
    Ok(sidecar)
}

/// Published slopes of the female series (Norway, Sweden, Denmark).
const PUBLISHED_FEMALE_SLOPES: [(&str, f64); 3] = [("Norway", 0.140), ("Sweden", 0.162), ("Denmark", 0.144)];

fn load_demography(data: Option<&Path>, sex: &str) -> Result<Vec<GroupSeries>> {
    match data {
        Some(path) => {
            if !path.exists() {
                return Err(failure::data(format!(
                    "{} not found; fetch the series with `python3 scripts/fetch_demography.py {}` \
                     (needs network access) or omit --data to use the shipped snapshot",
                    path.display(),
                    path.display()
                )));
            }
            Ok(fixtures::parse_demography(&input::read_text(path)?, sex)?)
        }
        None => Ok(fixtures::demography(sex)?),
    }
}

fn fig3(out_dir: &Path, data: Option<&Path>) -> Result<Sidecar> {
    let mut sidecar = Sidecar::new("reproduce fig3", None);
    let tau_grid = linspace(0.0, 0.1, 1001);
    let mut details = serde_json::Map::new();
    let mut atoms = Vec::new();
    for sex in ["female", "male"] {
        let fits = regression_slopes(&load_demography(data, sex)?)?;
        let effects = effects_from_slopes(&fits)?;
        let cd = tau_cd(&effects, &tau_grid)?;
        let file = format!("tau_{sex}.csv");
        write_file(&out_dir.join(&file), &(header("reproduce fig3", None) + &write_cd_csv(&cd)))?;
        let atom = cd.atom().unwrap_or(0.0);
        atoms.push(atom);
        if sex == "female" {
            for (country, target) in PUBLISHED_FEMALE_SLOPES {
                if let Some(f) = fits.iter().find(|f| f.group == country) {
                    sidecar
                        .checks
                        .push(Check::new(format!("slope_female_{}", country.to_lowercase()), f.slope, target, 0.002));
                }
            }
        }
        details.insert(sex.into(), json!({ "file": file, "cd_at_zero": atom, "slopes": fits }));
    }
    // published windows for C(0): women [0.01, 0.04], men [0.55, 0.66]
    sidecar.checks.push(Check::new("cd_at_zero_female", atoms[0], 0.025, 0.015));
    sidecar.checks.push(Check::new("cd_at_zero_male", atoms[1], 0.605, 0.055));
    sidecar.tolerances.insert("slope".into(), 0.002);
    if data.is_none() {
        sidecar.warnings.push(
            "computed from the shipped decade snapshot; run scripts/fetch_demography.py and pass --data for the full series"
                .into(),
        );
    }
    details.insert("source".into(), json!(data.map_or("snapshot".to_string(), |p| p.display().to_string())));
    sidecar.details = serde_json::Value::Object(details);
    Ok(sidecar)
}

fn region_hull(cc: &ConfidenceCurve, level: f64) -> Result<(f64, f64)> {
    Ok(level_set_region(cc, level)?.hull().unwrap_or((f64::NAN, f64::NAN)))
}

fn fig4(out_dir: &Path) -> Result<Sidecar> {
    let data = fixtures::animals_loglog()?;
    let rho_grid = linspace(0.1, 0.99, 179);
    let focus = FocusMap::coordinate(4, "rho");

    let dev = deviance_curve(&BinormalModel, &data, &focus, &rho_grid)?;
    let mle_cc = wilks_cc(&dev)?;
    write_file(&out_dir.join("rho_mle.csv"), &(header("reproduce fig4", None) + &write_cc_csv(&mle_cc)))?;

    let a = tuning_from_downweight(0.10, 2)?;
    let robust = robust_cc(&BinormalDensity, &data, &DivergenceConfig::new(a)?, &focus, &rho_grid)?;
    write_file(&out_dir.join("rho_bhhj.csv"), &(header("reproduce fig4", None) + &write_cc_csv(&robust.cc)))?;

    let mut sidecar = Sidecar::new("reproduce fig4", None);
    sidecar.cc_intervals(&robust.cc)?;
    let (lo, hi) = region_hull(&robust.cc, 0.90)?;
    let (mle_lo, mle_hi) = region_hull(&mle_cc, 0.90)?;
    sidecar.tolerances.insert("rho_mle".into(), 0.005);
    sidecar.tolerances.insert("rho_robust".into(), 0.01);
    sidecar.tolerances.insert("interval_endpoint".into(), 0.02);
    sidecar.checks = vec![
        Check::new("rho_mle", mle_cc.point_estimate(), 0.779, 0.005),
        Check::new("rho_robust", robust.fit.theta[4], 0.819, 0.01),
        Check::new("robust_interval_90_lower", lo, 0.441, 0.02),
        Check::new("robust_interval_90_upper", hi, 0.955, 0.02),
    ];
    sidecar.details = json!({
        "files": ["rho_mle.csv", "rho_bhhj.csv"],
        "a": a,
        "k": robust.k,
        "robust_theta": robust.fit.theta,
        "mle_interval_90": [mle_lo, mle_hi],
    });
    Ok(sidecar)
}

fn table1(out_dir: &Path) -> Result<Sidecar> {
    let studies = fixtures::lidocaine()?;
    let source = grid(SOURCE_GRID);
    let mut sidecar = Sidecar::new("reproduce table1-study-cds", None);
    let mut sources = Vec::new();
    let mut rows = Vec::new();
    for (j, s) in studies.iter().enumerate() {
        let id = format!("study{}", j + 1);
        let file = format!("{id}.csv");
        let cd = study_optimal_cd(s, &source)?;
        write_file(&out_dir.join(&file), &(header("reproduce table1-study-cds", None) + &write_cd_csv(&cd)))?;
        let interval = equi_tailed_interval(&cd, 0.95).ok().and_then(|r| r.hull());
        rows.push(json!({
            "id": id,
            "m1": s.m1, "m0": s.m0, "y1": s.y1, "y0": s.y0,
            "median": cd.median().ok(),
            "interval_95": interval,
        }));
        sources.push(json!({ "id": id, "path": file }));
    }
    let manifest = json!({
        "focus": "common",
        "method": "iiccff",
        "grid": GridSpec::log(0.3, 8.0, 160).to_string(),
        "sources": sources,
    });
    write_file(
        &out_dir.join("lidocaine-studies.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    sidecar.details = json!({ "studies": rows, "manifest": "lidocaine-studies.json" });
    Ok(sidecar)
}
