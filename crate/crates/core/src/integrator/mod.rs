//! Stiff integration of the receptor kinetics and peak detection of the
//! open-receptor observable.

mod lu;
mod sdirk;

pub use sdirk::SolveStats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{Environment, KineticState, ReactionNetwork, Scheme};

/// An autonomous or time-dependent ODE system with a dense Jacobian.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Row-major `dim x dim` Jacobian of `rhs` with respect to `y`.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub rel_tol: f64,
    /// Absolute tolerance (M).
    pub abs_tol: f64,
    pub max_steps: usize,
    pub dense_sample_count: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-16,
            max_steps: 100_000,
            dense_sample_count: 2000,
        }
    }
}

impl IntegrationOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return bad("rel_tol", "must lie in (0, 1e-2]");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol", "must be > 0");
        }
        if self.max_steps < 1000 {
            return bad("max_steps", "must be >= 1000");
        }
        if self.dense_sample_count < 100 {
            return bad("dense_sample_count", "must be >= 100");
        }
        Ok(())
    }
}

/// States sampled on a uniform time grid spanning `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    scheme: Scheme,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(times: Vec<f64>, states: &[KineticState]) -> Result<Self> {
        let scheme = states
            .first()
            .map(KineticState::scheme)
            .ok_or_else(|| Error::InvalidCurve("empty trajectory".into()))?;
        if times.len() != states.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: states.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("times must be strictly increasing".into()));
        }
        let mut data = Vec::with_capacity(states.len() * scheme.dim());
        for s in states {
            if s.scheme() != scheme {
                return Err(Error::DimensionMismatch {
                    expected: scheme.dim(),
                    got: s.as_slice().len(),
                });
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self { scheme, times, data })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn values(&self, i: usize) -> &[f64] {
        let n = self.scheme.dim();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn state(&self, i: usize) -> KineticState {
        KineticState::new(self.scheme, self.values(i).to_vec()).expect("dimension fixed by scheme")
    }

    pub fn states(&self) -> impl Iterator<Item = KineticState> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    pub fn last(&self) -> KineticState {
        self.state(self.len() - 1)
    }
}

/// A reaction network with its environment and clamped drug level.
pub struct NetworkSystem<'a> {
    pub network: &'a ReactionNetwork,
    pub k_decay: f64,
    pub d: f64,
}

impl OdeSystem for NetworkSystem<'_> {
    fn dim(&self) -> usize {
        self.network.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.network.eval_into(self.k_decay, self.d, y, dy);
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut [f64]) {
        self.network.jacobian_into(self.k_decay, self.d, y, jac);
    }
}

/// Negative excursion, relative to `R_total`, treated as numerical blow-up.
const BLOWUP_SLACK: f64 = 1e-6;

fn check_inputs(
    network: &ReactionNetwork,
    env: &Environment,
    d: f64,
    y0: &KineticState,
    opts: &IntegrationOptions,
) -> Result<()> {
    env.validate()?;
    opts.validate()?;
    if y0.scheme() != network.scheme() {
        return Err(Error::DimensionMismatch {
            expected: network.dim(),
            got: y0.as_slice().len(),
        });
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "D",
            reason: format!("drug concentration must be finite and >= 0, got {d}"),
        });
    }
    Ok(())
}

/// Integrates from `y0` over `[0, env.horizon]`, returning
/// `opts.dense_sample_count` uniformly spaced states.
pub fn integrate(
    network: &ReactionNetwork,
    env: &Environment,
    d: f64,
    y0: &KineticState,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    check_inputs(network, env, d, y0, opts)?;
    let sys = NetworkSystem {
        network,
        k_decay: env.k_decay,
        d,
    };
    let dim = network.dim();
    let n = opts.dense_sample_count;
    let mut times = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let floor = -BLOWUP_SLACK * env.r_total;
    let mut blowup: Option<f64> = None;
    sdirk::solve(&sys, y0.as_slice(), env.horizon, opts, |_, t, y| {
        if blowup.is_none() && y.iter().any(|&v| v < floor) {
            blowup = Some(t);
        }
        times.push(t);
        data.extend_from_slice(y);
    })?;
    if let Some(t) = blowup {
        return Err(Error::Integration {
            t,
            reason: "negative concentration blow-up".into(),
        });
    }
    Ok(Trajectory {
        scheme: network.scheme(),
        times,
        data,
    })
}

/// Integrates a generic system on `[0, t_end]` and returns the dense samples
/// as `(times, states)`.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    opts.validate()?;
    if y0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: y0.len(),
        });
    }
    let mut times = Vec::with_capacity(opts.dense_sample_count);
    let mut states = Vec::with_capacity(opts.dense_sample_count);
    sdirk::solve(sys, y0, t_end, opts, |_, t, y| {
        times.push(t);
        states.push(y.to_vec());
    })?;
    Ok((times, states))
}

/// Peak time and peak concentration of the open-receptor observable.
pub fn peak_open(traj: &Trajectory, scheme: Scheme) -> (f64, f64) {
    let open = scheme.open_species();
    let series: Vec<f64> = (0..traj.len())
        .map(|i| {
            let y = traj.values(i);
            open.iter().map(|s| y.get(s.index()).copied().unwrap_or(0.0)).sum()
        })
        .collect();
    refine_peak(traj.times(), &series)
}

/// Maximum of a sampled series, refined by the parabola through the three
/// samples around the discrete maximum. Endpoint maxima are returned as is.
pub fn refine_peak(times: &[f64], values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    if best == 0 || best + 1 == values.len() {
        return (times[best], values[best]);
    }
    let (ym, y0, yp) = (values[best - 1], values[best], values[best + 1]);
    let curvature = ym - 2.0 * y0 + yp;
    if !(curvature < 0.0) {
        return (times[best], y0);
    }
    let offset = (0.5 * (ym - yp) / curvature).clamp(-1.0, 1.0);
    let peak = y0 - 0.25 * (ym - yp) * offset;
    let dt = if offset >= 0.0 {
        times[best + 1] - times[best]
    } else {
        times[best] - times[best - 1]
    };
    (times[best] + offset * dt, peak.max(y0))
}

/// Integrates and returns only the refined open-state peak; skips storing the
/// trajectory.
pub fn integrate_peak(
    network: &ReactionNetwork,
    env: &Environment,
    d: f64,
    y0: &KineticState,
    opts: &IntegrationOptions,
) -> Result<(f64, f64)> {
    check_inputs(network, env, d, y0, opts)?;
    let sys = NetworkSystem {
        network,
        k_decay: env.k_decay,
        d,
    };
    let open: Vec<usize> = network.scheme().open_species().iter().map(|s| s.index()).collect();
    let n = opts.dense_sample_count;
    let mut times = Vec::with_capacity(n);
    let mut series = Vec::with_capacity(n);
    let floor = -BLOWUP_SLACK * env.r_total;
    let mut blowup: Option<f64> = None;
    sdirk::solve(&sys, y0.as_slice(), env.horizon, opts, |_, t, y| {
        if blowup.is_none() && y.iter().any(|&v| v < floor) {
            blowup = Some(t);
        }
        times.push(t);
        series.push(open.iter().map(|&i| y[i]).sum::<f64>());
    })?;
    if let Some(t) = blowup {
        return Err(Error::Integration {
            t,
            reason: "negative concentration blow-up".into(),
        });
    }
    Ok(refine_peak(&times, &series))
}
