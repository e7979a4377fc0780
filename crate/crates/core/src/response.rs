//! Drug concentration to observable effect: receptor activation, twitch
//! strength in vivo and relative peak current in vitro.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate_peak, IntegrationOptions};
use crate::kinetics::{
    build_reaction_network, initial_state, AChKinetics, ChannelKinetics, DrugKinetics, Environment, ModelKind,
};

/// Activation-to-twitch transduction. For kinetic models `r_star_50` is a
/// concentration (M); for the two-site model it is a fraction of the
/// drug-free activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleResponseParams {
    #[serde(rename = "R_star_50")]
    pub r_star_50: f64,
    #[serde(rename = "gamma_A")]
    pub gamma_a: f64,
}

impl MuscleResponseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("R_star_50", self.r_star_50), ("gamma_A", self.gamma_a)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Everything needed to simulate one drug under one model structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub ach: AChKinetics,
    pub channel: ChannelKinetics,
    pub drug: DrugKinetics,
    pub response: MuscleResponseParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "D_molar")]
    pub d: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectMode {
    InvivoTwitch,
    InvitroCurrent,
}

impl EffectMode {
    pub fn name(self) -> &'static str {
        match self {
            EffectMode::InvivoTwitch => "invivo-twitch",
            EffectMode::InvitroCurrent => "invitro-current",
        }
    }

    pub fn environment(self) -> Environment {
        match self {
            EffectMode::InvivoTwitch => Environment::in_vivo(),
            EffectMode::InvitroCurrent => Environment::in_vitro(),
        }
    }
}

/// Fraction of receptors free of drug at equilibrium,
/// `K1 K2 / ((K1 + D)(K2 + D))`.
pub fn two_site_fraction(kd1: f64, kd2: f64, d: f64) -> f64 {
    (kd1 / (kd1 + d)) * (kd2 / (kd2 + d))
}

/// Peak activation: a concentration of open receptors (M) for kinetic models,
/// the fraction of drug-free activation for the two-site model.
pub fn peak_activation(params: &ModelParams, env: &Environment, d: f64, opts: &IntegrationOptions) -> Result<f64> {
    match params.kind {
        ModelKind::TwoSite => {
            if !(d >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "D",
                    reason: format!("must be >= 0, got {d}"),
                });
            }
            Ok(two_site_fraction(params.drug.kd1, params.drug.kd2, d))
        }
        kind @ (ModelKind::Reciprocal | ModelKind::Cyclic) => {
            let net = build_reaction_network(kind, &params.ach, &params.channel, &params.drug)?;
            let y0 = initial_state(kind, &params.ach, &params.drug, env, d)?;
            let (_, peak) = integrate_peak(&net, env, d, &y0, opts)?;
            Ok(peak)
        }
    }
}

/// `R^g / (R^g + R50^g)`, evaluated as a logistic in `ln R`.
pub fn twitch_strength(r_star: f64, resp: &MuscleResponseParams) -> f64 {
    if r_star <= 0.0 {
        return 0.0;
    }
    let x = resp.gamma_a * (resp.r_star_50.ln() - r_star.ln());
    logistic_neg(x)
}

/// `1 / (1 + e^x)` without overflow.
pub(crate) fn logistic_neg(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn require_in_vitro(env: &Environment) -> Result<()> {
    if env.k_decay != 0.0 {
        return Err(Error::InvalidParameter {
            name: "k_decay",
            reason: format!("in vitro environment must have k_decay = 0, got {}", env.k_decay),
        });
    }
    Ok(())
}

/// Peak current relative to the drug-free control.
pub fn relative_peak_current(
    params: &ModelParams,
    env_vitro: &Environment,
    d: f64,
    opts: &IntegrationOptions,
) -> Result<f64> {
    require_in_vitro(env_vitro)?;
    let control = peak_activation(params, env_vitro, 0.0, opts)?;
    if !(control > 0.0) {
        return Err(Error::ZeroControl);
    }
    Ok(peak_activation(params, env_vitro, d, opts)? / control)
}

/// Tolerance below zero for normalized effects. Kinetic peaks carry
/// integrator error of order `rel_tol`, which the steep twitch curve can
/// amplify, so the allowance grows with the tolerance.
fn effect_slack(opts: &IntegrationOptions) -> f64 {
    1e-9f64.max(100.0 * opts.rel_tol)
}

/// Values above 1 are not an error: at low concentrations drug-bound
/// receptors hold ACh back from hydrolysis and can raise the activation
/// peak slightly above its drug-free value.
fn clamp_effect(effect: f64, d: f64, slack: f64) -> Result<f64> {
    if !(effect >= -slack && effect.is_finite()) {
        return Err(Error::InvalidCurve(format!(
            "effect {effect} at D = {d:e} M outside [0, 1]"
        )));
    }
    Ok(effect.clamp(0.0, 1.0))
}

/// Evaluates the effect at every grid concentration. Points are independent
/// and computed in parallel; output order follows the grid.
pub fn concentration_effect_curve(
    params: &ModelParams,
    env: &Environment,
    mode: EffectMode,
    grid: &[f64],
    opts: &IntegrationOptions,
) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidCurve("empty concentration grid".into()));
    }
    if grid.iter().any(|&d| !(d > 0.0 && d.is_finite())) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidCurve(
            "grid must be positive and strictly increasing".into(),
        ));
    }
    let control = ControlResponse::new(params, env, mode, opts)?;
    grid.par_iter().map(|&d| control.point(params, env, d, opts)).collect()
}

/// The drug-free reference a curve is normalized against.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ControlResponse {
    mode: EffectMode,
    value: f64,
}

impl ControlResponse {
    pub(crate) fn new(
        params: &ModelParams,
        env: &Environment,
        mode: EffectMode,
        opts: &IntegrationOptions,
    ) -> Result<Self> {
        if mode == EffectMode::InvitroCurrent {
            require_in_vitro(env)?;
        }
        let peak = peak_activation(params, env, 0.0, opts)?;
        let value = match mode {
            EffectMode::InvivoTwitch => {
                params.response.validate()?;
                twitch_strength(peak, &params.response)
            }
            EffectMode::InvitroCurrent => peak,
        };
        if !(value > 0.0) {
            return Err(Error::ZeroControl);
        }
        Ok(Self { mode, value })
    }

    pub(crate) fn point(
        &self,
        params: &ModelParams,
        env: &Environment,
        d: f64,
        opts: &IntegrationOptions,
    ) -> Result<CurvePoint> {
        let peak = peak_activation(params, env, d, opts)?;
        let raw = match self.mode {
            EffectMode::InvivoTwitch => twitch_strength(peak, &params.response),
            EffectMode::InvitroCurrent => peak,
        } / self.value;
        Ok(CurvePoint {
            d,
            effect: clamp_effect(raw, d, effect_slack(opts))?,
        })
    }
}

/// Logarithmic concentration grid: `count` points from `10^log10_lo` with a
/// fixed step in log10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub log10_lo: f64,
    pub log10_step: f64,
    pub count: usize,
}

/// Grid growth stops at these bounds even if the curve still fails to
/// bracket the 0.9/0.1 shoulders.
pub const GRID_LOG10_MIN: f64 = -15.0;
pub const GRID_LOG10_MAX: f64 = -1.0;

impl LogGrid {
    /// 48 points over `[lo, hi]`.
    pub fn span(lo: f64, hi: f64, count: usize) -> Self {
        let (a, b) = (lo.log10(), hi.log10());
        Self {
            log10_lo: a,
            log10_step: (b - a) / (count - 1) as f64,
            count,
        }
    }

    /// `[1e-10, 1e-4]` M with 48 points.
    pub fn default_grid() -> Self {
        Self::span(1e-10, 1e-4, 48)
    }

    /// The default grid scaled so that it spans `K_D1 * [1e-2, 1e4]`.
    pub fn relative_to(kd1: f64) -> Self {
        Self::span(kd1 * 1e-2, kd1 * 1e4, 48)
    }

    pub fn at(&self, i: i64) -> f64 {
        10f64.powf(self.log10_lo + i as f64 * self.log10_step)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count as i64).map(|i| self.at(i)).collect()
    }
}

/// Concentration-effect curve on `grid`, extended a decade at a time (with
/// the same log spacing) until it brackets both 0.9 and 0.1 effect.
pub fn concentration_effect_curve_auto(
    params: &ModelParams,
    env: &Environment,
    mode: EffectMode,
    grid: &LogGrid,
    opts: &IntegrationOptions,
) -> Result<Vec<CurvePoint>> {
    let control = ControlResponse::new(params, env, mode, opts)?;
    let eval = |idx: Vec<i64>| -> Result<Vec<CurvePoint>> {
        idx.into_par_iter()
            .map(|i| control.point(params, env, grid.at(i), opts))
            .collect()
    };
    let per_decade = (1.0 / grid.log10_step).round().max(1.0) as i64;
    let mut lo: i64 = 0;
    let mut hi: i64 = grid.count as i64 - 1;
    let mut points = eval((lo..=hi).collect())?;
    loop {
        let first = points.first().map_or(1.0, |p| p.effect);
        let last = points.last().map_or(1.0, |p| p.effect);
        let mut grew = false;
        if last > 0.1 && grid.log10_lo + (hi as f64 + 1.0) * grid.log10_step <= GRID_LOG10_MAX + 1e-9 {
            let extra = eval((hi + 1..=hi + per_decade).collect())?;
            hi += per_decade;
            points.extend(extra);
            grew = true;
        }
        if first < 0.9 && grid.log10_lo + (lo as f64 - 1.0) * grid.log10_step >= GRID_LOG10_MIN - 1e-9 {
            let mut extra = eval((lo - per_decade..lo).collect())?;
            lo -= per_decade;
            extra.extend(points);
            points = extra;
            grew = true;
        }
        if !grew {
            break;
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_site_matches_expanded_form() {
        for &(k1, k2, d) in &[(1e-8, 2e-8, 3e-8), (2.19e-8, 2.12e-8, 1e-9), (1e-9, 1e-3, 1e-6)] {
            let expanded = k1 * k2 / (k1 * k2 + k1 * d + k2 * d + d * d);
            assert_relative_eq!(two_site_fraction(k1, k2, d), expanded, max_relative = 1e-14);
        }
    }

    #[test]
    fn two_site_special_points() {
        assert_eq!(two_site_fraction(1e-8, 3e-8, 0.0), 1.0);
        let k = 3.3e-8;
        // (K / (K + D))^2 = 1/2  =>  D = K (sqrt 2 - 1)
        let d = k * (2f64.sqrt() - 1.0);
        assert_relative_eq!(two_site_fraction(k, k, d), 0.5, max_relative = 1e-12);
        let k1 = 1e-8;
        assert!((two_site_fraction(k1, 1e12 * k1, k1) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn twitch_special_points() {
        let resp = MuscleResponseParams {
            r_star_50: 1.82e-8,
            gamma_a: 9.04,
        };
        assert_eq!(twitch_strength(1.82e-8, &resp), 0.5);
        assert_eq!(twitch_strength(0.0, &resp), 0.0);
        let lin = MuscleResponseParams {
            r_star_50: 1e-8,
            gamma_a: 1.0,
        };
        assert_relative_eq!(twitch_strength(2e-8, &lin), 2.0 / 3.0, max_relative = 1e-14);
        let steep = MuscleResponseParams {
            r_star_50: 1e-300,
            gamma_a: 20.0,
        };
        assert_eq!(twitch_strength(1.0, &steep), 1.0);
        assert_eq!(twitch_strength(1e-300 * 1e-20, &steep), 0.0);
    }

    fn two_site(kd1: f64, kd2: f64) -> ModelParams {
        crate::params::ParameterSet::preset("table3-two-site")
            .unwrap()
            .model_params(
                ModelKind::TwoSite,
                &DrugKinetics {
                    kd1,
                    kd2,
                    k_diss1: 1.0,
                    k_diss2: 1.0,
                },
            )
    }

    #[test]
    fn two_site_current_is_fraction() {
        let p = two_site(2.19e-8, 2.12e-8);
        let opts = IntegrationOptions::default();
        let env = Environment::in_vitro();
        for d in [0.0, 1e-9, 1e-8, 1e-7] {
            let rel = relative_peak_current(&p, &env, d, &opts).unwrap();
            assert_relative_eq!(rel, two_site_fraction(2.19e-8, 2.12e-8, d), max_relative = 1e-14);
        }
        assert!(relative_peak_current(&p, &Environment::in_vivo(), 1e-8, &opts).is_err());
    }

    #[test]
    fn curve_validates_grid() {
        let p = two_site(1e-8, 1e-8);
        let opts = IntegrationOptions::default();
        let env = Environment::in_vitro();
        let m = EffectMode::InvitroCurrent;
        assert!(concentration_effect_curve(&p, &env, m, &[], &opts).is_err());
        assert!(concentration_effect_curve(&p, &env, m, &[1e-9, 1e-9], &opts).is_err());
        assert!(concentration_effect_curve(&p, &env, m, &[0.0, 1e-9], &opts).is_err());
    }

    #[test]
    fn two_site_in_vitro_curve_crosses_half_near_analytic_root() {
        let (k1, k2) = (2.19e-8, 2.12e-8);
        let p = two_site(k1, k2);
        let grid = LogGrid::default_grid().points();
        let curve = concentration_effect_curve(
            &p,
            &Environment::in_vitro(),
            EffectMode::InvitroCurrent,
            &grid,
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(curve[0].effect > 0.99);
        assert!(curve.windows(2).all(|w| w[1].effect <= w[0].effect));
        // Oracle: positive root of D^2 + (K1 + K2) D - K1 K2 = 0.
        let root = 0.5 * (-(k1 + k2) + ((k1 + k2).powi(2) + 4.0 * k1 * k2).sqrt());
        let i = curve.iter().position(|p| p.effect < 0.5).unwrap();
        let (a, b) = (curve[i - 1], curve[i]);
        let t = (a.effect - 0.5) / (a.effect - b.effect);
        let crossing = 10f64.powf(a.d.log10() + t * (b.d.log10() - a.d.log10()));
        assert!(crossing / root < 1.5 && root / crossing < 1.5);
        assert!(crossing / 1e-8 < 1.5 && 1e-8 / crossing < 1.5);
    }

    #[test]
    fn auto_grid_extends_until_bracketed() {
        // Single-site-like drug with a high K: the default grid misses the lower shoulder.
        let p = two_site(5e-5, 5e-5);
        let curve = concentration_effect_curve_auto(
            &p,
            &Environment::in_vitro(),
            EffectMode::InvitroCurrent,
            &LogGrid::default_grid(),
            &IntegrationOptions::default(),
        )
        .unwrap();
        assert!(curve.len() > 48);
        assert!(curve.last().unwrap().effect < 0.1);
        assert!(curve[0].effect > 0.9);
        assert!(curve.windows(2).all(|w| w[1].d > w[0].d));
    }

    #[test]
    fn grid_relative_matches_default() {
        let a = LogGrid::relative_to(1e-8).points();
        let b = LogGrid::default_grid().points();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        assert_eq!(b.len(), 48);
        assert_relative_eq!(b[0], 1e-10, max_relative = 1e-12);
        assert_relative_eq!(b[47], 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn low_dose_potentiation_clamps_to_one() {
        let set = crate::ParameterSet::table3(ModelKind::Cyclic);
        let drug = DrugKinetics {
            kd1: 1e-8,
            kd2: 1e-8,
            k_diss1: 1.0,
            k_diss2: 1.0,
        };
        let p = set.model_params(ModelKind::Cyclic, &drug);
        let env = Environment::in_vivo();
        let opts = IntegrationOptions::default();
        let r0 = peak_activation(&p, &env, 0.0, &opts).unwrap();
        let r1 = peak_activation(&p, &env, 2.5e-9, &opts).unwrap();
        assert!(r1 > 1.01 * r0);
        let curve = concentration_effect_curve(&p, &env, EffectMode::InvivoTwitch, &[2.5e-9], &opts).unwrap();
        assert_eq!(curve[0].effect, 1.0);
        assert!(clamp_effect(-1e-3, 1e-9, 1e-9).is_err());
        assert!(clamp_effect(f64::NAN, 1e-9, 1e-9).is_err());
    }
}
