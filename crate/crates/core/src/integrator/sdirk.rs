//! L-stable, stiffly accurate five-stage SDIRK of order 4 with an embedded
//! order-3 error estimate (Hairer & Wanner, Solving ODEs II, Table IV.6.5).

use super::lu::Lu;
use super::{IntegrationOptions, OdeSystem};
use crate::error::{Error, Result};

pub(crate) const STAGES: usize = 5;
pub(crate) const GAMMA: f64 = 0.25;

pub(crate) const A: [[f64; STAGES]; STAGES] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
pub(crate) const C: [f64; STAGES] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
pub(crate) const B_HAT: [f64; STAGES] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

const MAX_NEWTON: usize = 8;
const NEWTON_TOL: f64 = 0.01;
const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;

fn wrms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(x, w)| (x / w) * (x / w)).sum();
    (s / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
}

/// Integrates `sys` from `t = 0` to `t_end`, calling `sample(i, t_i, y(t_i))`
/// on `n_samples` uniformly spaced times (both ends included). Values between
/// steps come from cubic Hermite interpolation.
pub(crate) fn solve<S, F>(
    sys: &S,
    y0: &[f64],
    t_end: f64,
    opts: &IntegrationOptions,
    mut sample: F,
) -> Result<SolveStats>
where
    S: OdeSystem + ?Sized,
    F: FnMut(usize, f64, &[f64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let n_samples = opts.dense_sample_count.max(2);
    let sample_time = |i: usize| {
        if i + 1 == n_samples {
            t_end
        } else {
            t_end * i as f64 / (n_samples - 1) as f64
        }
    };

    let mut stats = SolveStats::default();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut fy = vec![0.0; n];
    sys.rhs(t, &y, &mut fy);
    stats.rhs_evals += 1;

    sample(0, 0.0, &y);
    let mut next_sample = 1;

    let mut scale = vec![0.0; n];
    for k in 0..n {
        scale[k] = opts.abs_tol + opts.rel_tol * y[k].abs();
    }
    let d0 = wrms(&y, &scale);
    let d1 = wrms(&fy, &scale);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * t_end
    } else {
        0.01 * d0 / d1
    };
    h = h.min(t_end).max(1e-14 * t_end);

    let mut jac = vec![0.0; n * n];
    let mut iter_mat = vec![0.0; n * n];
    let mut lu = Lu::new(n);
    let mut hk = vec![vec![0.0; n]; STAGES];
    let mut known = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut ycur = vec![0.0; n];
    let mut fz = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut jac_t = f64::NAN;
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("maximum of {} steps exceeded", opts.max_steps),
            });
        }
        let final_step = t + 1.0001 * h >= t_end;
        if final_step {
            h = t_end - t;
        }
        if h <= 1e-15 * t_end.max(t) {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }

        if jac_t != t {
            sys.jacobian(t, &y, &mut jac);
            jac_t = t;
        }
        let hg = h * GAMMA;
        for i in 0..n {
            for j in 0..n {
                iter_mat[i * n + j] = -hg * jac[i * n + j];
            }
            iter_mat[i * n + i] += 1.0;
        }
        if !lu.factor(&iter_mat) {
            stats.newton_failures += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        for k in 0..n {
            scale[k] = opts.abs_tol + opts.rel_tol * y[k].abs();
        }

        let mut newton_ok = true;
        for s in 0..STAGES {
            for k in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * hk[j][k];
                }
                known[k] = acc;
                let prev = if s == 0 { h * fy[k] } else { hk[s - 1][k] };
                z[k] = acc + GAMMA * prev;
            }

            let mut converged = false;
            let mut prev_norm = f64::INFINITY;
            for it in 0..MAX_NEWTON {
                for k in 0..n {
                    ycur[k] = y[k] + z[k];
                }
                sys.rhs(t + C[s] * h, &ycur, &mut fz);
                stats.rhs_evals += 1;
                for k in 0..n {
                    dz[k] = known[k] + hg * fz[k] - z[k];
                }
                lu.solve(&mut dz);
                for k in 0..n {
                    z[k] += dz[k];
                }
                let norm = wrms(&dz, &scale);
                if !norm.is_finite() {
                    break;
                }
                if norm <= 1e-3 * NEWTON_TOL {
                    converged = true;
                    break;
                }
                if it > 0 {
                    let theta = norm / prev_norm;
                    if theta >= 1.0 {
                        break;
                    }
                    if theta / (1.0 - theta) * norm <= NEWTON_TOL {
                        converged = true;
                        break;
                    }
                }
                prev_norm = norm;
            }
            if !converged {
                newton_ok = false;
                break;
            }
            for k in 0..n {
                hk[s][k] = (z[k] - known[k]) / GAMMA;
            }
        }

        if !newton_ok {
            stats.newton_failures += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        // Stiffly accurate: the last stage value is the new solution.
        for k in 0..n {
            y_new[k] = y[k] + z[k];
            f_new[k] = hk[STAGES - 1][k] / h;
            let mut e = 0.0;
            for s in 0..STAGES {
                e += (A[STAGES - 1][s] - B_HAT[s]) * hk[s][k];
            }
            err[k] = e;
        }
        lu.solve(&mut err);
        for k in 0..n {
            scale[k] = opts.abs_tol + opts.rel_tol * y[k].abs().max(y_new[k].abs());
        }
        let err_norm = wrms(&err, &scale);

        if !err_norm.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let factor = SAFETY * err_norm.max(1e-10).powf(-0.25);
        if err_norm <= 1.0 {
            let t_new = if final_step { t_end } else { t + h };
            while next_sample < n_samples {
                let ts = sample_time(next_sample);
                if ts > t_new {
                    break;
                }
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let t2 = theta * theta;
                let t3 = t2 * theta;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + theta;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                for k in 0..n {
                    ycur[k] = h00 * y[k] + h10 * h * fy[k] + h01 * y_new[k] + h11 * h * f_new[k];
                }
                sample(next_sample, ts, &ycur);
                next_sample += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut fy, &mut f_new);
            stats.accepted += 1;
            let growth = if last_rejected {
                factor.min(1.0)
            } else {
                factor.min(MAX_GROWTH)
            };
            h *= growth.max(MIN_SHRINK);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= factor.clamp(MIN_SHRINK, 1.0);
            last_rejected = true;
        }
    }

    while next_sample < n_samples {
        sample(next_sample, sample_time(next_sample), &y);
        next_sample += 1;
    }
    Ok(stats)
}
