//! Weighted least-squares estimation of model constants against reference
//! potency data.
//!
//! The objective has two parts. The first compares simulated EC50, gamma_E,
//! IC50 and gamma_I with their targets, each residual scaled by the target's
//! confidence half-width. The second is a penalty keeping the ACh binding
//! constants near literature values; it is absent for the two-site model.
//! All parameters are optimized in log10 space.

mod simplex;

pub use simplex::{nelder_mead, SimplexOptions, SimplexResult, TraceEntry};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hillfit::fit_hill;
use crate::integrator::IntegrationOptions;
use crate::kinetics::{AChKinetics, ChannelKinetics, DrugKinetics, Environment, ModelKind};
use crate::params::{self, ParameterSet};
use crate::response::{concentration_effect_curve_auto, EffectMode, LogGrid, ModelParams, MuscleResponseParams};

/// Objective value reported when any part of the simulation pipeline fails.
pub const FAILURE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    /// Confidence-interval half-width.
    pub ci: f64,
}

const fn target(value: f64, ci: f64) -> Target {
    Target { value, ci }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrugTargets {
    #[serde(rename = "EC50")]
    pub ec50: Target,
    pub gamma_e: Target,
    #[serde(rename = "IC50")]
    pub ic50: Target,
    pub gamma_i: Target,
}

impl DrugTargets {
    fn as_array(&self) -> [Target; 4] {
        [self.ec50, self.gamma_e, self.ic50, self.gamma_i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalTargets {
    pub drugs: Vec<(String, DrugTargets)>,
}

impl ExperimentalTargets {
    /// Published clinical and patch-clamp potencies of the three reference
    /// drugs. Concentrations in M.
    pub fn reference() -> Self {
        let rows = [
            DrugTargets {
                ec50: target(0.12e-6, 0.027e-6),
                gamma_e: target(6.9, 1.3),
                ic50: target(10e-9, 1e-9),
                gamma_i: target(1.02, 0.09),
            },
            DrugTargets {
                ec50: target(0.26e-6, 0.10e-6),
                gamma_e: target(7.6, 3.8),
                ic50: target(15e-9, 2e-9),
                gamma_i: target(1.03, 0.12),
            },
            DrugTargets {
                ec50: target(1.35e-6, 0.26e-6),
                gamma_e: target(4.79, 1.70),
                ic50: target(17e-9, 2e-9),
                gamma_i: target(0.67, 0.05),
            },
        ];
        Self {
            drugs: params::DRUGS.iter().map(|s| s.to_string()).zip(rows).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&DrugTargets> {
        self.drugs.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drugs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "targets",
                reason: "no drugs".into(),
            });
        }
        for (name, t) in &self.drugs {
            for v in t.as_array() {
                if !(v.value > 0.0 && v.ci > 0.0 && v.value.is_finite() && v.ci.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "targets",
                        reason: format!("{name}: values and CIs must be positive"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Hill parameters of the simulated in vivo and in vitro curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PharmacologicSummary {
    #[serde(rename = "EC50")]
    pub ec50: f64,
    pub gamma_e: f64,
    #[serde(rename = "IC50")]
    pub ic50: f64,
    pub gamma_i: f64,
}

impl PharmacologicSummary {
    fn as_array(&self) -> [f64; 4] {
        [self.ec50, self.gamma_e, self.ic50, self.gamma_i]
    }
}

/// Fitted C50 and slope for one effect mode, starting from `grid` and
/// extending it as needed.
pub fn fit_mode(
    params: &ModelParams,
    env: &Environment,
    mode: EffectMode,
    grid: &LogGrid,
    opts: &IntegrationOptions,
) -> Result<(f64, f64)> {
    let curve = concentration_effect_curve_auto(params, env, mode, grid, opts)?;
    let fit = fit_hill(&curve)?;
    Ok((fit.c50, fit.gamma))
}

/// Runs the in vivo and in vitro pipelines for one drug.
pub fn summarize(
    params: &ModelParams,
    in_vivo: &Environment,
    in_vitro: &Environment,
    grid: &LogGrid,
    opts: &IntegrationOptions,
) -> Result<PharmacologicSummary> {
    let (vivo, vitro) = rayon::join(
        || fit_mode(params, in_vivo, EffectMode::InvivoTwitch, grid, opts),
        || fit_mode(params, in_vitro, EffectMode::InvitroCurrent, grid, opts),
    );
    let ((ec50, gamma_e), (ic50, gamma_i)) = (vivo?, vitro?);
    Ok(PharmacologicSummary {
        ec50,
        gamma_e,
        ic50,
        gamma_i,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Weight of the ACh-constant penalty.
    pub w: f64,
    #[serde(rename = "k_dissA_nom")]
    pub k_diss_nom: f64,
    #[serde(rename = "k_assocA_nom")]
    pub k_assoc_nom: f64,
    pub simplex: SimplexOptions,
    /// Extra simplex runs started from the previous best point. Restarting
    /// stops early once a run improves F by less than `simplex.f_tol`.
    pub max_restarts: usize,
    /// Estimate separate drug off-rates for the two sites.
    #[serde(rename = "untie_kdissD")]
    pub untie_kdissd: bool,
    pub integration: IntegrationOptions,
    pub grid: LogGrid,
    pub in_vivo: Environment,
    pub in_vitro: Environment,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            w: 0.25,
            k_diss_nom: 1.8e4,
            k_assoc_nom: 1.8e4 / 1.6e-4,
            simplex: SimplexOptions::default(),
            max_restarts: 5,
            untie_kdissd: false,
            integration: IntegrationOptions::default(),
            grid: LogGrid::default_grid(),
            in_vivo: Environment::in_vivo(),
            in_vitro: Environment::in_vitro(),
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "W",
                reason: format!("must be >= 0, got {}", self.w),
            });
        }
        self.integration.validate()?;
        self.in_vivo.validate()?;
        self.in_vitro.validate()
    }
}

/// Ordered model parameters in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub model: ModelKind,
    pub untie_kdissd: bool,
    pub drugs: Vec<String>,
    pub values: Vec<f64>,
}

const SHARED_RECIPROCAL: [&str; 6] = ["R_star_50", "gamma_A", "k_dissA", "K_A", "k_close", "k_open"];
const SHARED_CYCLIC: [&str; 8] = [
    "R_star_50",
    "gamma_A",
    "k_dissA",
    "K_A",
    "k_close",
    "k_open",
    "k_dissA_star",
    "K_A_star",
];

fn shared_names(model: ModelKind) -> &'static [&'static str] {
    match model {
        ModelKind::TwoSite => &SHARED_RECIPROCAL[..2],
        ModelKind::Reciprocal => &SHARED_RECIPROCAL,
        ModelKind::Cyclic => &SHARED_CYCLIC,
    }
}

fn drug_names(model: ModelKind, untie: bool) -> &'static [&'static str] {
    match (model, untie) {
        (ModelKind::TwoSite, _) => &["K_D1", "K_D2"],
        (_, false) => &["K_D1", "K_D2", "k_dissD"],
        (_, true) => &["K_D1", "K_D2", "k_dissD1", "k_dissD2"],
    }
}

impl ParameterVector {
    /// Number of parameters for a model and drug count.
    pub fn len_for(model: ModelKind, untie_kdissd: bool, n_drugs: usize) -> usize {
        shared_names(model).len() + n_drugs * drug_names(model, untie_kdissd).len()
    }

    /// Parameter names in packing order; per-drug entries read `K_D1:<drug>`.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = shared_names(self.model).iter().map(|s| s.to_string()).collect();
        for drug in &self.drugs {
            for p in drug_names(self.model, self.untie_kdissd) {
                out.push(format!("{p}:{drug}"));
            }
        }
        out
    }

    pub fn named(&self) -> Vec<(String, f64)> {
        self.names().into_iter().zip(self.values.iter().copied()).collect()
    }

    /// Packs a parameter set. The set must hold every drug in `drugs`; site
    /// constants are taken from site 1 where the vector ties them.
    pub fn pack(model: ModelKind, untie_kdissd: bool, set: &ParameterSet, drugs: &[String]) -> Result<Self> {
        let mut values = vec![set.response.r_star_50, set.response.gamma_a];
        if model != ModelKind::TwoSite {
            values.extend([set.ach.k_diss1, set.ach.kd1, set.channel.k_close, set.channel.k_open]);
        }
        if model == ModelKind::Cyclic {
            values.extend([set.ach.k_diss_open, set.ach.kd_open]);
        }
        for name in drugs {
            let d = set
                .drug(name)
                .ok_or_else(|| Error::ParamFile(format!("no parameters for drug `{name}`")))?;
            values.extend([d.kd1, d.kd2]);
            match (model, untie_kdissd) {
                (ModelKind::TwoSite, _) => {}
                (_, false) => values.push(d.k_diss1),
                (_, true) => values.extend([d.k_diss1, d.k_diss2]),
            }
        }
        Ok(Self {
            model,
            untie_kdissd,
            drugs: drugs.to_vec(),
            values,
        })
    }

    /// Rebuilds a parameter set, enforcing the tying constraints. Constants
    /// the vector does not carry come from `base`.
    pub fn unpack(&self, base: &ParameterSet) -> Result<ParameterSet> {
        let expected = Self::len_for(self.model, self.untie_kdissd, self.drugs.len());
        if self.values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.values.len(),
            });
        }
        if let Some(bad) = self.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "parameter vector",
                reason: format!("entries must be finite and > 0, got {bad}"),
            });
        }
        let v = &self.values;
        let response = MuscleResponseParams {
            r_star_50: v[0],
            gamma_a: v[1],
        };
        let (ach, channel) = match self.model {
            ModelKind::TwoSite => (base.ach, base.channel),
            ModelKind::Reciprocal => (
                AChKinetics::tied(v[2], v[3]),
                ChannelKinetics {
                    k_close: v[4],
                    k_open: v[5],
                    ..base.channel
                },
            ),
            ModelKind::Cyclic => (
                AChKinetics {
                    k_diss_open: v[6],
                    kd_open: v[7],
                    ..AChKinetics::tied(v[2], v[3])
                },
                ChannelKinetics {
                    k_close: v[4],
                    k_open: v[5],
                    ..base.channel
                },
            ),
        };
        let mut at = shared_names(self.model).len();
        let per = drug_names(self.model, self.untie_kdissd).len();
        let mut drugs = Vec::with_capacity(self.drugs.len());
        for name in &self.drugs {
            let c = &v[at..at + per];
            let (k1, k2) = match per {
                2 => base.drug(name).map_or((1.0, 1.0), |d| (d.k_diss1, d.k_diss2)),
                3 => (c[2], c[2]),
                _ => (c[2], c[3]),
            };
            drugs.push((
                name.clone(),
                DrugKinetics {
                    kd1: c[0],
                    kd2: c[1],
                    k_diss1: k1,
                    k_diss2: k2,
                },
            ));
            at += per;
        }
        let set = ParameterSet {
            ach,
            channel,
            response,
            drugs,
            environment: base.environment,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn to_log10(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.log10()).collect()
    }

    pub fn with_log10(&self, x: &[f64]) -> Self {
        Self {
            values: x.iter().map(|v| 10f64.powf(*v)).collect(),
            ..self.clone()
        }
    }
}

/// The default starting point: literature receptor and drug constants for
/// every drug, with the response seeded at its literature values.
pub fn default_start(model: ModelKind, untie_kdissd: bool, drugs: &[String]) -> ParameterVector {
    let set = ParameterSet {
        ach: params::nominal_ach(),
        channel: params::nominal_channel(),
        response: params::nominal_response(),
        drugs: drugs
            .iter()
            .map(|n| {
                let d = params::nominal_drug();
                (
                    n.clone(),
                    DrugKinetics {
                        k_diss2: d.k_diss1,
                        ..d
                    },
                )
            })
            .collect(),
        environment: None,
    };
    ParameterVector::pack(model, untie_kdissd, &set, drugs).expect("all drugs present")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    #[serde(rename = "F")]
    pub f: f64,
    pub term1: f64,
    pub term2: f64,
    /// Per-drug simulated summaries, absent when the pipeline failed.
    pub summaries: Option<Vec<(String, PharmacologicSummary)>>,
    pub failure: Option<String>,
}

/// ACh-constant penalty: `(W/4) sum_i [log10(k_diss_i/nom)^2 + log10(k_assoc_i/nom)^2]`
/// over both sites.
pub fn penalty(model: ModelKind, ach: &AChKinetics, cfg: &EstimationConfig) -> f64 {
    if model == ModelKind::TwoSite {
        return 0.0;
    }
    let site = |k_diss: f64, k_assoc: f64| {
        (k_diss / cfg.k_diss_nom).log10().powi(2) + (k_assoc / cfg.k_assoc_nom).log10().powi(2)
    };
    cfg.w / 4.0 * (site(ach.k_diss1, ach.k_assoc1()) + site(ach.k_diss2, ach.k_assoc2()))
}

/// Scaled squared mismatch between simulated and target summaries, averaged
/// over drugs.
pub fn mismatch(summaries: &[(String, PharmacologicSummary)], targets: &ExperimentalTargets) -> Result<f64> {
    let mut total = 0.0;
    for (name, t) in &targets.drugs {
        let s = summaries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::ParamFile(format!("no simulation for drug `{name}`")))?;
        for (sim, tgt) in s.as_array().iter().zip(t.as_array()) {
            total += ((sim - tgt.value) / tgt.ci).powi(2);
        }
    }
    Ok(total / (4.0 * targets.drugs.len() as f64))
}

/// Simulated summaries for every drug of `set` named in `targets`.
pub fn simulate_all(
    model: ModelKind,
    set: &ParameterSet,
    targets: &ExperimentalTargets,
    cfg: &EstimationConfig,
) -> Result<Vec<(String, PharmacologicSummary)>> {
    targets
        .drugs
        .par_iter()
        .map(|(name, _)| {
            let drug = set
                .drug(name)
                .ok_or_else(|| Error::ParamFile(format!("no parameters for drug `{name}`")))?;
            let p = set.model_params(model, drug);
            summarize(&p, &cfg.in_vivo, &cfg.in_vitro, &cfg.grid, &cfg.integration).map(|s| (name.clone(), s))
        })
        .collect()
}

/// Objective for a fully specified parameter set.
pub fn objective_for_set(
    model: ModelKind,
    set: &ParameterSet,
    targets: &ExperimentalTargets,
    cfg: &EstimationConfig,
) -> ObjectiveValue {
    let term2 = penalty(model, &set.ach, cfg);
    match simulate_all(model, set, targets, cfg).and_then(|s| mismatch(&s, targets).map(|t1| (s, t1))) {
        Ok((summaries, term1)) if term1.is_finite() => ObjectiveValue {
            f: term1 + term2,
            term1,
            term2,
            summaries: Some(summaries),
            failure: None,
        },
        Ok(_) => failed(term2, "non-finite mismatch".into()),
        Err(e) => failed(term2, e.to_string()),
    }
}

fn failed(term2: f64, reason: String) -> ObjectiveValue {
    let term2 = if term2.is_finite() { term2 } else { 0.0 };
    ObjectiveValue {
        f: FAILURE_PENALTY + term2,
        term1: FAILURE_PENALTY,
        term2,
        summaries: None,
        failure: Some(reason),
    }
}

/// Objective for a parameter vector. Constants the vector does not carry
/// (desensitization rates, unused off-rates) come from `base`.
pub fn objective(
    x: &ParameterVector,
    base: &ParameterSet,
    targets: &ExperimentalTargets,
    cfg: &EstimationConfig,
) -> ObjectiveValue {
    match x.unpack(base) {
        Ok(set) => objective_for_set(x.model, &set, targets, cfg),
        Err(e) => failed(0.0, e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub x0: ParameterVector,
    pub x_best: ParameterVector,
    pub objective: ObjectiveValue,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best point after every simplex iteration, in natural units.
    pub trace: Vec<TraceEntry>,
}

/// Minimizes the objective over the model's parameter vector, starting from
/// `x0` or [`default_start`].
pub fn estimate(
    model: ModelKind,
    targets: &ExperimentalTargets,
    cfg: &EstimationConfig,
    x0: Option<ParameterVector>,
) -> Result<EstimationResult> {
    targets.validate()?;
    cfg.validate()?;
    let names: Vec<String> = targets.drugs.iter().map(|(n, _)| n.clone()).collect();
    let x0 = x0.unwrap_or_else(|| default_start(model, cfg.untie_kdissd, &names));
    if x0.model != model {
        return Err(Error::InvalidParameter {
            name: "x0",
            reason: format!("start vector is for the {} model", x0.model),
        });
    }
    let base = ParameterSet::preset("table1").expect("built-in preset");
    let f = |lx: &[f64]| objective(&x0.with_log10(lx), &base, targets, cfg).f;

    // A simplex can collapse early along flat directions; a fresh simplex
    // around the best point either confirms it or keeps descending.
    let mut run = nelder_mead(f, &x0.to_log10(), &cfg.simplex);
    let (mut iterations, mut evaluations) = (run.iterations, run.evaluations);
    let mut trace = std::mem::take(&mut run.trace);
    for _ in 0..cfg.max_restarts {
        let mut next = nelder_mead(f, &run.x, &cfg.simplex);
        for e in next.trace.drain(..).skip(1) {
            trace.push(TraceEntry {
                iteration: e.iteration + iterations,
                evaluations: e.evaluations + evaluations,
                ..e
            });
        }
        iterations += next.iterations;
        evaluations += next.evaluations;
        let gain = run.f - next.f;
        if next.f <= run.f {
            run = next;
        }
        if !(gain >= cfg.simplex.f_tol) {
            break;
        }
    }

    let x_best = x0.with_log10(&run.x);
    let objective = objective(&x_best, &base, targets, cfg);
    for e in &mut trace {
        e.x_best.iter_mut().for_each(|v| *v = 10f64.powf(*v));
    }
    Ok(EstimationResult {
        x0,
        x_best,
        objective,
        iterations,
        evaluations,
        converged: run.converged,
        trace,
    })
}
