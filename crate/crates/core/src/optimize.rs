//! Derivative-free simplex search with quasi-Newton polish, multistart, and
//! smooth bijections for box constraints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SeedStreams;

/// Per-coordinate parameter constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Free,
    /// (0, inf), mapped through log.
    Positive,
    /// [0, inf), mapped through a square; the boundary itself is reachable.
    NonNegative,
    /// (lo, hi), mapped through tanh.
    Open(f64, f64),
}

impl Bound {
    pub fn to_internal(&self, x: f64) -> f64 {
        match *self {
            Bound::Free => x,
            Bound::Positive => x.max(f64::MIN_POSITIVE).ln(),
            Bound::NonNegative => x.max(0.0).sqrt(),
            Bound::Open(lo, hi) => {
                let t = (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                t.atanh()
            }
        }
    }

    pub fn to_external(&self, u: f64) -> f64 {
        match *self {
            Bound::Free => u,
            Bound::Positive => u.exp(),
            Bound::NonNegative => u * u,
            Bound::Open(lo, hi) => lo + 0.5 * (hi - lo) * (u.tanh() + 1.0),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Bound::Free => x.is_finite(),
            Bound::Positive => x > 0.0 && x.is_finite(),
            Bound::NonNegative => x >= 0.0 && x.is_finite(),
            Bound::Open(lo, hi) => x > lo && x < hi,
        }
    }

    /// The closed boundary point, if the bound has one.
    pub fn closed_boundary(&self) -> Option<f64> {
        match *self {
            Bound::NonNegative => Some(0.0),
            _ => None,
        }
    }
}

pub fn to_internal(bounds: &[Bound], x: &[f64]) -> Vec<f64> {
    bounds.iter().zip(x).map(|(b, &v)| b.to_internal(v)).collect()
}

pub fn to_external(bounds: &[Bound], u: &[f64]) -> Vec<f64> {
    bounds.iter().zip(u).map(|(b, &v)| b.to_external(v)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimOptions {
    /// Convergence tolerance on the objective.
    pub f_tol: f64,
    /// Convergence tolerance on the (internal) parameters.
    pub x_tol: f64,
    /// Gradient tolerance for the quasi-Newton polish.
    pub g_tol: f64,
    pub max_evals: usize,
    /// Number of starts; the first is the supplied point, the rest are drawn
    /// uniformly from a box of half-width `start_spread` around it.
    pub starts: usize,
    pub start_spread: f64,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            f_tol: 1e-9,
            x_tol: 1e-8,
            g_tol: 1e-6,
            max_evals: 20_000,
            starts: 5,
            start_spread: 1.0,
            initial_step: 0.3,
            seed: 0x5eed,
        }
    }
}

impl OptimOptions {
    pub fn single_start() -> Self {
        Self {
            starts: 1,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn safe(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients).
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let n = x0.len();
    if n == 0 {
        return Minimum {
            x: vec![],
            value: safe(f(&[])),
            evals: 1,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        safe(f(x))
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step * x[i].abs().max(1.0);
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * best.abs().max(1.0) && diameter <= opts.x_tol * 10.0 {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evals {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let worst_x = simplex[n].0.clone();
        let xr = along(alpha, &worst_x);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta, &worst_x);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = along(alpha * gamma, &worst_x);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-gamma, &worst_x);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x_best
                        .iter()
                        .zip(&item.0)
                        .map(|(b, v)| b + delta * (v - b))
                        .collect();
                    let v = eval(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evals: evals.get(),
        converged,
    }
}

/// Central-difference gradient with step eps^(1/3) * max(|x|, 1).
pub fn numerical_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h0 = f64::EPSILON.cbrt();
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = h0 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with step eps^(1/4) * max(|x|, 1).
pub fn numerical_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h0 = f64::EPSILON.powf(0.25);
    let h: Vec<f64> = x.iter().map(|v| h0 * v.abs().max(1.0)).collect();
    let mut out = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut e = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (e(1.0, 1.0) - e(1.0, -1.0) - e(-1.0, 1.0) + e(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// BFGS with numerical gradients and a backtracking Armijo line search.
pub fn bfgs(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        safe(f(x))
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x, &mut evals);
    if n == 0 || !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            evals,
            converged: n == 0,
        };
    }
    let grad = |x: &[f64], evals: &mut usize| {
        *evals += 2 * x.len();
        numerical_gradient(&|y| safe(f(y)), x)
    };
    let mut g = grad(&x, &mut evals);
    let mut hinv = vec![vec![0.0; n]; n];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut converged = false;
    for _iter in 0..500 {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= opts.g_tol * fx.abs().max(1.0).min(1e3) {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>())
            .collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            // not a descent direction: reset to steepest descent
            for (i, row) in hinv.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fxn = eval(&xn, &mut evals);
            if fxn <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fxn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            // line search failed: accept current point if the gradient is small-ish
            converged = gnorm <= 1e3 * opts.g_tol;
            break;
        };
        let gn = grad(&xn, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let df = fx - fxn;
        x = xn;
        fx = fxn;
        g = gn;
        if sy > 1e-14 {
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        if step <= opts.x_tol * 1e-2 && df <= opts.f_tol * 1e-3 {
            converged = true;
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        evals,
        converged,
    }
}

/// Simplex search followed by a BFGS polish, from one start.
pub fn minimize_local(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let nm = nelder_mead(f, x0, opts);
    // a restart at the simplex optimum guards against collapsed simplices
    let nm = {
        let again = nelder_mead(f, &nm.x, opts);
        if again.value <= nm.value {
            Minimum {
                evals: nm.evals + again.evals,
                ..again
            }
        } else {
            nm
        }
    };
    let polished = bfgs(f, &nm.x, opts);
    let evals = nm.evals + polished.evals;
    if polished.value <= nm.value {
        Minimum {
            converged: polished.converged || nm.converged,
            evals,
            ..polished
        }
    } else {
        Minimum { evals, ..nm }
    }
}

/// Multistart unconstrained minimization.
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], opts: &OptimOptions) -> Result<Minimum> {
    let mut best: Option<Minimum> = None;
    let mut rng = SeedStreams::new(opts.seed).stream(x0.len() as u64);
    for k in 0..opts.starts.max(1) {
        let start: Vec<f64> = if k == 0 {
            x0.to_vec()
        } else {
            x0.iter()
                .map(|v| v + opts.start_spread * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        };
        if !safe(f(&start)).is_finite() {
            continue;
        }
        let m = minimize_local(f, &start, opts);
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value - 1e-12 || (m.value <= b.value && m.converged && !b.converged),
        };
        if better {
            best = Some(m);
        }
    }
    match best {
        Some(m) if m.value.is_finite() && m.converged => Ok(m),
        Some(m) => Err(Error::NonConvergence {
            best_point: m.x,
            best_value: m.value,
        }),
        None => Err(Error::NonConvergence {
            best_point: x0.to_vec(),
            best_value: safe(f(x0)),
        }),
    }
}

/// Minimizes over external coordinates subject to `bounds`. Closed bounds
/// are checked exactly: if the optimum approaches one, the objective with
/// that coordinate pinned to the boundary is also minimized and the better
/// of the two is returned.
pub fn minimize_bounded(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[Bound],
    opts: &OptimOptions,
) -> Result<Minimum> {
    let g = |u: &[f64]| f(&to_external(bounds, u));
    let u0 = to_internal(bounds, x0);
    let inner = minimize(&g, &u0, opts);
    let mut best = inner.map(|m| Minimum {
        x: to_external(bounds, &m.x),
        ..m
    });
    for (i, b) in bounds.iter().enumerate() {
        let Some(edge) = b.closed_boundary() else { continue };
        let near = match &best {
            Ok(m) => (m.x[i] - edge).abs() < 1e-3 * m.x.iter().fold(1.0f64, |a, v| a.max(v.abs())),
            Err(_) => true,
        };
        if !near {
            continue;
        }
        let rest: Vec<Bound> = bounds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, b)| *b)
            .collect();
        let embed = |r: &[f64]| {
            let mut x = r.to_vec();
            x.insert(i, edge);
            x
        };
        let start: Vec<f64> = match &best {
            Ok(m) => m.x.clone(),
            Err(_) => x0.to_vec(),
        };
        let mut r0 = start;
        r0.remove(i);
        let pinned = if rest.is_empty() {
            let v = f(&embed(&[]));
            Ok(Minimum {
                x: embed(&[]),
                value: v,
                evals: 1,
                converged: true,
            })
        } else {
            let h = |u: &[f64]| f(&embed(&to_external(&rest, u)));
            minimize(&h, &to_internal(&rest, &r0), opts).map(|m| Minimum {
                x: embed(&to_external(&rest, &m.x)),
                ..m
            })
        };
        if let Ok(p) = pinned {
            let replace = match &best {
                Ok(m) => p.value <= m.value,
                Err(_) => true,
            };
            if replace {
                best = Ok(p);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let m = minimize(&rosenbrock, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn quadratic_in_five_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - i as f64).powi(2)).sum::<f64>();
        let m = minimize(&f, &[0.0; 5], &OptimOptions::default()).unwrap();
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn bijections_round_trip() {
        for b in [Bound::Free, Bound::Positive, Bound::NonNegative, Bound::Open(-1.0, 1.0)] {
            for &x in &[0.3, 0.9, 0.01] {
                assert!((b.to_external(b.to_internal(x)) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_optimum_is_exact() {
        // minimum of (t + 1)^2 over t >= 0 sits at t = 0
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let m = minimize_bounded(&f, &[0.5, 0.0], &[Bound::NonNegative, Bound::Free], &OptimOptions::default())
            .unwrap();
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -0.2]);
        assert!((h[0][0] - 4.0).abs() < 1e-6);
        assert!((h[0][1] - 3.0).abs() < 1e-6);
        assert!((h[1][1] - 10.0).abs() < 1e-6);
    }
}
