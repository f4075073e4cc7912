//! Constrained minimization of an objective at fixed focus values.

use crate::error::{Error, Result};
use crate::optimize::{self, Bound, Minimum, OptimOptions};

use super::{FocusKind, FocusMap};

type Objective<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Minimizes `f` subject to psi(theta) = `psi`, starting from `start`.
///
/// Coordinate foci are handled by pinning the coordinate and optimizing the
/// rest; general foci by an augmented Lagrangian.
pub fn constrained_minimum(
    f: Objective<'_>,
    bounds: &[Bound],
    focus: &FocusMap,
    psi: f64,
    start: &[f64],
    opts: &OptimOptions,
) -> Result<Minimum> {
    match &focus.kind {
        FocusKind::Coordinate(i) => pinned_minimum(f, bounds, *i, psi, start, opts),
        FocusKind::Function(g) => lagrangian_minimum(f, bounds, g.as_ref(), psi, start, opts),
    }
}

fn pinned_minimum(
    f: Objective<'_>,
    bounds: &[Bound],
    index: usize,
    psi: f64,
    start: &[f64],
    opts: &OptimOptions,
) -> Result<Minimum> {
    let b = bounds[index];
    if !(b.contains(psi) || b.closed_boundary() == Some(psi)) {
        return Err(Error::Infeasible(format!(
            "focus value {psi} outside the bound {b:?} of coordinate {index}"
        )));
    }
    let rest: Vec<Bound> = bounds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != index)
        .map(|(_, b)| *b)
        .collect();
    let embed = |r: &[f64]| {
        let mut x = Vec::with_capacity(r.len() + 1);
        x.extend_from_slice(&r[..index]);
        x.push(psi);
        x.extend_from_slice(&r[index..]);
        x
    };
    if rest.is_empty() {
        let x = embed(&[]);
        let value = f(&x);
        return Ok(Minimum {
            x,
            value,
            evals: 1,
            converged: true,
        });
    }
    let mut r0: Vec<f64> = start.to_vec();
    r0.remove(index);
    for (v, b) in r0.iter_mut().zip(&rest) {
        if !b.contains(*v) && b.closed_boundary() != Some(*v) {
            *v = b.to_external(0.0);
        }
    }
    let h = |r: &[f64]| f(&embed(r));
    let m = optimize::minimize_bounded(&h, &r0, &rest, opts)?;
    Ok(Minimum {
        x: embed(&m.x),
        ..m
    })
}

fn lagrangian_minimum(
    f: Objective<'_>,
    bounds: &[Bound],
    g: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    psi: f64,
    start: &[f64],
    opts: &OptimOptions,
) -> Result<Minimum> {
    let tol = 1e-9 * psi.abs().max(1.0);
    let mut lambda = 0.0;
    let mut mu = 10.0;
    let mut x = start.to_vec();
    let mut prev_violation = f64::INFINITY;
    let mut evals = 0;
    for round in 0..40 {
        let obj = |t: &[f64]| {
            let c = g(t) - psi;
            f(t) + lambda * c + 0.5 * mu * c * c
        };
        let round_opts = if round == 0 {
            opts.clone()
        } else {
            OptimOptions {
                starts: 1,
                ..opts.clone()
            }
        };
        let m = match optimize::minimize_bounded(&obj, &x, bounds, &round_opts) {
            Ok(m) => m,
            Err(Error::NonConvergence { best_point, .. }) => Minimum {
                value: obj(&best_point),
                x: best_point,
                evals: 0,
                converged: false,
            },
            Err(e) => return Err(e),
        };
        evals += m.evals;
        x = m.x;
        let c = g(&x) - psi;
        if c.abs() <= tol && m.converged {
            return Ok(Minimum {
                value: f(&x),
                x,
                evals,
                converged: true,
            });
        }
        lambda += mu * c;
        if c.abs() > 0.25 * prev_violation {
            mu *= 10.0;
        }
        prev_violation = c.abs();
        if mu > 1e14 {
            break;
        }
    }
    Err(Error::Infeasible(format!(
        "could not satisfy focus constraint psi = {psi} (violation {prev_violation:e})"
    )))
}

/// Profiles `f` along `grid`, sweeping outward from `psi_hat` on both sides
/// in parallel; each point is warm-started from its inner neighbour.
pub fn profile_sweep(
    f: Objective<'_>,
    bounds: &[Bound],
    focus: &FocusMap,
    grid: &[f64],
    theta_hat: &[f64],
    psi_hat: f64,
    opts: &OptimOptions,
) -> Result<Vec<Minimum>> {
    profile_sweep_partial(f, bounds, focus, grid, theta_hat, psi_hat, opts)
        .into_iter()
        .collect()
}

/// As [`profile_sweep`], keeping per-point failures; a failed point does
/// not stop the sweep and the next point reuses the last good warm start.
pub fn profile_sweep_partial(
    f: Objective<'_>,
    bounds: &[Bound],
    focus: &FocusMap,
    grid: &[f64],
    theta_hat: &[f64],
    psi_hat: f64,
    opts: &OptimOptions,
) -> Vec<Result<Minimum>> {
    let split = grid.partition_point(|&g| g < psi_hat);
    let sweep = |indices: Vec<usize>| -> Vec<(usize, Result<Minimum>)> {
        let mut out = Vec::with_capacity(indices.len());
        let mut start = theta_hat.to_vec();
        for i in indices {
            let m = constrained_minimum(f, bounds, focus, grid[i], &start, opts);
            if let Ok(m) = &m {
                start = m.x.clone();
            }
            out.push((i, m));
        }
        out
    };
    let (mut all, right) = rayon::join(
        || sweep((0..split).rev().collect()),
        || sweep((split..grid.len()).collect()),
    );
    all.extend(right);
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, m)| m).collect()
}
