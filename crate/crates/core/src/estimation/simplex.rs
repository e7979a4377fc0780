//! Derivative-free Nelder-Mead minimization.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Stop when `f(worst) - f(best)` drops below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this max-norm distance of the best.
    pub x_tol: f64,
    /// Offset added to each coordinate of `x0` to build the initial simplex.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            f_tol: 1e-6,
            x_tol: 1e-8,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub evaluations: usize,
    pub f_best: f64,
    pub x_best: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn toward(from: &[f64], to: &[f64], t: f64) -> Vec<f64> {
    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
}

/// Minimizes `f` starting from `x0`. Non-finite values are treated as
/// `+inf`, so the simplex retreats from them. The returned point is never
/// worse than `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let evaluations = std::cell::Cell::new(0);
    let mut eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut verts: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0);
    verts.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let fx = eval(&x);
        verts.push((x, fx));
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps ties in insertion order, so runs are reproducible.
        verts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (verts[0].1, verts[n].1);
        let size = verts[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&verts[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        trace.push(TraceEntry {
            iteration: iterations,
            evaluations: evaluations.get(),
            f_best: best,
            x_best: verts[0].0.clone(),
        });
        if (worst - best).abs() < opts.f_tol || size < opts.x_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations || n == 0 {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &verts[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let x_worst = verts[n].0.clone();
        let second_worst = verts[n - 1].1;

        let xr = toward(&centroid, &x_worst, -REFLECT);
        let fr = eval(&xr);
        if fr < best {
            let xe = toward(&centroid, &x_worst, -EXPAND);
            let fe = eval(&xe);
            verts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            verts[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst {
            let xc = toward(&centroid, &xr, CONTRACT);
            let fc = eval(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = toward(&centroid, &x_worst, CONTRACT);
            let fc = eval(&xc);
            let ok = fc < worst;
            (xc, fc, ok)
        };
        if accept {
            verts[n] = (xc, fc);
            continue;
        }
        let x_best = verts[0].0.clone();
        for v in verts.iter_mut().skip(1) {
            let x = toward(&x_best, &v.0, SHRINK);
            let fx = eval(&x);
            *v = (x, fx);
        }
    }

    verts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = verts.swap_remove(0);
    SimplexResult {
        x,
        f: fx,
        iterations,
        evaluations: evaluations.get(),
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let c = [0.3, -1.2, 2.5, 0.0];
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let opts = SimplexOptions {
            f_tol: 1e-14,
            x_tol: 1e-10,
            ..Default::default()
        };
        let r = nelder_mead(f, &[0.0; 4], &opts);
        assert!(r.converged);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions {
            f_tol: 1e-16,
            x_tol: 1e-12,
            initial_step: 0.5,
            ..Default::default()
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn retreats_from_non_finite_regions() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let r = nelder_mead(f, &[0.0], &SimplexOptions::default());
        assert!(r.f.is_finite());
        assert!(r.x[0] <= 0.5 && r.x[0] > 0.49);
    }

    #[test]
    fn iteration_cap_and_trace() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>();
        let opts = SimplexOptions {
            max_iterations: 7,
            f_tol: 0.0,
            x_tol: 0.0,
            ..Default::default()
        };
        let r = nelder_mead(f, &[1.0, 2.0, 3.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 7);
        assert_eq!(r.trace.len(), 8);
        assert!(r.trace.windows(2).all(|w| w[1].f_best <= w[0].f_best));
    }

    #[test]
    fn bit_identical_reruns() {
        let f = |x: &[f64]| (x[0].sin() + x[1] * x[1] - 0.3 * x[2]).powi(2) + x[2].abs();
        let a = nelder_mead(f, &[0.4, 0.1, 1.0], &SimplexOptions::default());
        let b = nelder_mead(f, &[0.4, 0.1, 1.0], &SimplexOptions::default());
        assert_eq!(a, b);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn never_worse_than_start(x0 in proptest::collection::vec(-3.0f64..3.0, 1..6), seed in 0.1f64..5.0) {
                let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| ((i as f64 + seed) * v).sin() + 0.1 * v * v).sum::<f64>();
                let f0 = f(&x0);
                let opts = SimplexOptions { max_iterations: 200, ..Default::default() };
                let r = nelder_mead(f, &x0, &opts);
                prop_assert!(r.f <= f0);
            }
        }
    }
}
