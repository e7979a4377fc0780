//! Inhibitory Hill fits of concentration-effect curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response::{logistic_neg, CurvePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillFitResult {
    /// Half-effect concentration (M).
    #[serde(rename = "C50")]
    pub c50: f64,
    pub gamma: f64,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `C50^g / (C50^g + D^g)`.
pub fn hill_value(c50: f64, gamma: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    logistic_neg(gamma * (d.ln() - c50.ln()))
}

const LOG10_C50_BOUNDS: (f64, f64) = (-12.0, -2.0);
const GAMMA_BOUNDS: (f64, f64) = (0.05, 20.0);
const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-10;
const STEP_TOL: f64 = 1e-12;

fn bounds() -> [(f64, f64); 2] {
    let ln10 = std::f64::consts::LN_10;
    [
        (LOG10_C50_BOUNDS.0 * ln10, LOG10_C50_BOUNDS.1 * ln10),
        (GAMMA_BOUNDS.0.ln(), GAMMA_BOUNDS.1.ln()),
    ]
}

fn clamp_params(p: [f64; 2]) -> [f64; 2] {
    let b = bounds();
    [p[0].clamp(b[0].0, b[0].1), p[1].clamp(b[1].0, b[1].1)]
}

/// Sum of squared residuals at `p = (ln C50, ln gamma)`.
fn ssr(points: &[CurvePoint], p: [f64; 2]) -> f64 {
    let (c, g) = (p[0].exp(), p[1].exp());
    points
        .iter()
        .map(|pt| {
            let r = hill_value(c, g, pt.d) - pt.effect;
            r * r
        })
        .sum()
}

/// Gradient `J^T r` and Gauss-Newton matrix `J^T J` in `(ln C50, ln gamma)`.
fn normal_equations(points: &[CurvePoint], p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (ln_c, g) = (p[0], p[1].exp());
    let mut grad = [0.0; 2];
    let mut jtj = [[0.0; 2]; 2];
    for pt in points {
        if pt.d <= 0.0 {
            continue;
        }
        let s = g * (pt.d.ln() - ln_c);
        let h = logistic_neg(s);
        let w = h * (1.0 - h);
        let j = [w * g, -w * s];
        let r = h - pt.effect;
        for a in 0..2 {
            grad[a] += j[a] * r;
            for b in 0..2 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (grad, jtj)
}

/// Gradient with components that point out of an active bound removed.
fn projected(grad: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let b = bounds();
    let mut g = grad;
    for i in 0..2 {
        let at_lo = p[i] <= b[i].0 && g[i] > 0.0;
        let at_hi = p[i] >= b[i].1 && g[i] < 0.0;
        if at_lo || at_hi {
            g[i] = 0.0;
        }
    }
    g
}

fn logit_complement(e: f64) -> f64 {
    let e = e.clamp(1e-9, 1.0 - 1e-9);
    ((1.0 - e) / e).ln()
}

/// Starting point from the first downward crossing of 0.5: C50 by
/// interpolation in `ln D`, gamma from the logit slope across the crossing.
pub fn initial_guess(points: &[CurvePoint]) -> Result<(f64, f64)> {
    let i = points
        .windows(2)
        .position(|w| w[0].effect >= 0.5 && w[1].effect < 0.5)
        .ok_or(Error::NotBracketing)?;
    let (a, b) = (points[i], points[i + 1]);
    if a.d <= 0.0 {
        return Ok((b.d, 1.0));
    }
    let (la, lb) = (a.d.ln(), b.d.ln());
    let t = if a.effect > b.effect {
        (a.effect - 0.5) / (a.effect - b.effect)
    } else {
        0.5
    };
    let c50 = (la + t * (lb - la)).exp();
    let gamma = (logit_complement(b.effect) - logit_complement(a.effect)) / (lb - la);
    let gamma = if gamma.is_finite() && gamma > 0.0 { gamma } else { 1.0 };
    Ok((c50, gamma.clamp(GAMMA_BOUNDS.0, GAMMA_BOUNDS.1)))
}

/// Least-squares fit of `hill_value` to the points using a box-constrained
/// Levenberg-Marquardt iteration in `(ln C50, ln gamma)`.
pub fn fit_hill(points: &[CurvePoint]) -> Result<HillFitResult> {
    if points.len() < 4 {
        return Err(Error::InvalidCurve(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.d >= 0.0) || !p.effect.is_finite()) {
        return Err(Error::InvalidCurve(
            "non-finite effect or negative concentration".into(),
        ));
    }
    if !points.iter().any(|p| p.effect > 0.6) || !points.iter().any(|p| p.effect < 0.4) {
        return Err(Error::NotBracketing);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.d.total_cmp(&b.d));
    let points = sorted.as_slice();

    let (c0, g0) = initial_guess(points)?;
    let mut p = clamp_params([c0.ln(), g0.ln()]);
    let mut cost = ssr(points, p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let (grad, jtj) = normal_equations(points, p);
        let pg = projected(grad, p);
        if pg[0].hypot(pg[1]) < GRAD_TOL {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e20 {
            let a00 = jtj[0][0] + lambda * (jtj[0][0] + 1e-30);
            let a11 = jtj[1][1] + lambda * (jtj[1][1] + 1e-30);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            let step = [
                (-grad[0] * a11 + grad[1] * a01) / det,
                (-grad[1] * a00 + grad[0] * a01) / det,
            ];
            let trial = clamp_params([p[0] + step[0], p[1] + step[1]]);
            let moved = (trial[0] - p[0]).hypot(trial[1] - p[1]);
            let trial_cost = ssr(points, trial);
            if trial_cost < cost {
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if moved < STEP_TOL {
                    converged = true;
                }
                break;
            }
            if moved < STEP_TOL {
                converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if converged || !improved {
            break;
        }
    }

    Ok(HillFitResult {
        c50: p[0].exp(),
        gamma: p[1].exp(),
        residual_norm: cost.sqrt(),
        converged,
        iterations,
    })
}
