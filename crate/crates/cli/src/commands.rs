use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndnb::estimation::{self, DrugTargets, EstimationConfig, ExperimentalTargets, ParameterVector};
use ndnb::integrator::peak_open;
use ndnb::params::{DRUGS, PRESETS};
use ndnb::response::ModelParams;
use ndnb::sweep::{self, SweepPlan, SweepRow};
use ndnb::{
    build_reaction_network, fit_hill, hill_value, initial_state, integrate, CurvePoint, EffectMode, Environment,
    IntegrationOptions, LogGrid, ModelKind, ParameterSet, Species,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{num, opt, OutputDir};
use crate::svg::{self, Plot, Series};
use crate::{CliError, Common, EnvPreset};

const TIME_COURSE_HORIZON: f64 = 0.1;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn preset_name(model: ModelKind) -> &'static str {
    match model {
        ModelKind::TwoSite => "table3-two-site",
        ModelKind::Reciprocal => "table3-reciprocal",
        ModelKind::Cyclic => "table3-cyclic",
    }
}

/// The parameter set named by the flags, and a label for metadata.
fn load_set(common: &Common) -> Result<(ParameterSet, String), CliError> {
    if let Some(path) = &common.params {
        let set = ParameterSet::from_json_str(&read(path)?)?;
        return Ok((set, path.display().to_string()));
    }
    let name = common.preset.as_deref().unwrap_or(preset_name(common.model));
    let set = ParameterSet::preset(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown preset `{name}`; valid choices: {}",
            PRESETS.join(", ")
        ))
    })?;
    Ok((set, format!("preset:{name}")))
}

fn env_preset(p: EnvPreset) -> Environment {
    match p {
        EnvPreset::InVivo => Environment::in_vivo(),
        EnvPreset::InVitro => Environment::in_vitro(),
    }
}

/// Preset, then the parameter file's environment section, then --horizon.
fn environment(common: &Common, set: &ParameterSet, default_horizon: Option<f64>) -> Result<Environment, CliError> {
    let mut env = match set.environment {
        Some(e) => e,
        None => {
            let e = env_preset(common.env);
            default_horizon.map_or(e, |h| e.with_horizon(h))
        }
    };
    if let Some(h) = common.horizon {
        env.horizon = h;
    }
    env.validate()?;
    Ok(env)
}

fn integration(common: &Common) -> Result<IntegrationOptions, CliError> {
    let mut o = IntegrationOptions::default();
    if let Some(r) = common.rel_tol {
        o.rel_tol = r;
    }
    if let Some(a) = common.abs_tol {
        o.abs_tol = a;
    }
    o.validate()?;
    Ok(o)
}

fn drug_params(set: &ParameterSet, model: ModelKind, drug: &str) -> Result<ModelParams, CliError> {
    let d = set.drug(drug).ok_or_else(|| {
        let names: Vec<&str> = set.drugs.iter().map(|(n, _)| n.as_str()).collect();
        CliError::Config(format!("unknown drug `{drug}`; available: {}", names.join(", ")))
    })?;
    Ok(set.model_params(model, d))
}

fn inputs(common: &Common, set: &ParameterSet, source: &str, extra: Value) -> Value {
    json!({
        "model": common.model.name(),
        "parameter_source": source,
        "parameters": set.to_json(),
        "rel_tol": common.rel_tol,
        "abs_tol": common.abs_tol,
        "horizon": common.horizon,
        "options": extra,
    })
}

pub fn time_course(common: &Common, drug: &str, d: f64) -> Result<(), CliError> {
    if common.model == ModelKind::TwoSite {
        return Err(CliError::Config(
            "time-course needs a kinetic model; valid choices: reciprocal, cyclic".into(),
        ));
    }
    let (set, source) = load_set(common)?;
    let env = environment(common, &set, Some(TIME_COURSE_HORIZON))?;
    let opts = integration(common)?;
    let p = drug_params(&set, common.model, drug)?;
    let net = build_reaction_network(p.kind, &p.ach, &p.channel, &p.drug)?;
    let y0 = initial_state(p.kind, &p.ach, &p.drug, &env, d)?;
    let traj = integrate(&net, &env, d, &y0, &opts)?;
    let scheme = traj.scheme();
    let (t_peak, peak) = peak_open(&traj, scheme);
    let last = traj.last();

    let mut header: Vec<&str> = vec!["t_s"];
    header.extend(scheme.species().iter().map(|s| s.name()));
    header.extend(["open_fraction", "desensitized_fraction"]);
    let mut rows = Vec::with_capacity(traj.len());
    let mut open_pts = Vec::with_capacity(traj.len());
    let mut rd_pts = Vec::with_capacity(traj.len());
    for (t, s) in traj.times().iter().zip(traj.states()) {
        let open = s.open() / env.r_total;
        let rd = s.get(Species::Rd) / env.r_total;
        let mut r = vec![num(*t)];
        r.extend(s.as_slice().iter().map(|v| num(*v)));
        r.push(num(open));
        r.push(num(rd));
        rows.push(r);
        open_pts.push((t * 1e3, open));
        rd_pts.push((t * 1e3, rd));
    }

    let extra = json!({"command": "time-course", "drug": drug, "D": d, "environment": env});
    let mut out = OutputDir::create(&common.out, "time-course", inputs(common, &set, &source, extra))?;
    out.write_csv("time_course.csv", &header, &rows)?;
    let plot = Plot {
        title: format!("{} scheme, {drug}, D = {d:e} M", common.model),
        x_label: "time (ms)".into(),
        y_label: "fraction of receptors".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series {
                name: "open".into(),
                points: open_pts,
                markers: false,
            },
            Series {
                name: "desensitized".into(),
                points: rd_pts,
                markers: false,
            },
        ],
    };
    out.write("time_course.svg", svg::render(&[plot], 1).as_bytes())?;

    println!("t_peak = {t_peak:.6e} s");
    println!("peak open fraction = {:.6}", peak / env.r_total);
    println!(
        "final desensitized fraction = {:.6}",
        last.get(Species::Rd) / env.r_total
    );
    println!("wrote {}", common.out.display());
    Ok(())
}

fn mode_for(env: EnvPreset) -> EffectMode {
    match env {
        EnvPreset::InVivo => EffectMode::InvivoTwitch,
        EnvPreset::InVitro => EffectMode::InvitroCurrent,
    }
}

pub fn curve(common: &Common, drug: &str, lo: f64, hi: f64, points: usize) -> Result<(), CliError> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(CliError::Config(format!(
            "grid bounds must satisfy 0 < lo < hi, got [{lo:e}, {hi:e}]"
        )));
    }
    if points < 4 {
        return Err(CliError::Config("--points must be at least 4".into()));
    }
    let (set, source) = load_set(common)?;
    let env = environment(common, &set, None)?;
    let opts = integration(common)?;
    let p = drug_params(&set, common.model, drug)?;
    let mode = mode_for(common.env);
    let grid = LogGrid::span(lo, hi, points);
    let curve = ndnb::concentration_effect_curve_auto(&p, &env, mode, &grid, &opts)?;
    let fit = fit_hill(&curve).map_err(|e| match e {
        ndnb::Error::NotBracketing => CliError::Numerical(format!(
            "{e}; the grid was extended to [{:e}, {:e}] M; try --grid-lo/--grid-hi or check the response parameters",
            curve.first().map_or(lo, |c| c.d),
            curve.last().map_or(hi, |c| c.d)
        )),
        other => other.into(),
    })?;

    // Span sensitivity: refit on the points within one decade of C50.
    let near: Vec<CurvePoint> = curve
        .iter()
        .copied()
        .filter(|c| (c.d / fit.c50).log10().abs() <= 1.0)
        .collect();
    let narrow = fit_hill(&near).ok();

    let (c_name, g_name) = match mode {
        EffectMode::InvivoTwitch => ("EC50", "gamma_E"),
        EffectMode::InvitroCurrent => ("IC50", "gamma_I"),
    };
    let reference = ExperimentalTargets::reference();
    let target = reference.get(drug).map(|t| match mode {
        EffectMode::InvivoTwitch => (t.ec50, t.gamma_e),
        EffectMode::InvitroCurrent => (t.ic50, t.gamma_i),
    });

    let extra = json!({"command": "curve", "drug": drug, "mode": mode.name(), "grid": grid, "environment": env});
    let mut out = OutputDir::create(&common.out, "curve", inputs(common, &set, &source, extra))?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|c| vec![num(c.d), num(c.effect), num(hill_value(fit.c50, fit.gamma, c.d))])
        .collect();
    out.write_csv("curve.csv", &["D_molar", "effect", "hill_fit"], &rows)?;
    let report = json!({
        "drug": drug,
        "model": common.model.name(),
        "mode": mode.name(),
        c_name: fit.c50,
        g_name: fit.gamma,
        "residual_norm": fit.residual_norm,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "grid_points": curve.len(),
        "grid_range": [curve[0].d, curve[curve.len() - 1].d],
        "gamma_within_one_decade": narrow.map(|f| f.gamma),
        "target": target.map(|(c, g)| json!({c_name: c, g_name: g})),
    });
    out.write_json("hill.json", &report)?;
    let plot = Plot {
        title: format!("{drug}, {}", mode.name()),
        x_label: "drug concentration (M)".into(),
        y_label: "relative effect".into(),
        log_x: true,
        log_y: false,
        series: vec![
            Series {
                name: "simulated".into(),
                points: curve.iter().map(|c| (c.d, c.effect)).collect(),
                markers: true,
            },
            Series {
                name: "Hill fit".into(),
                points: curve
                    .iter()
                    .map(|c| (c.d, hill_value(fit.c50, fit.gamma, c.d)))
                    .collect(),
                markers: false,
            },
        ],
    };
    out.write("curve.svg", svg::render(&[plot], 1).as_bytes())?;

    match target {
        Some((c, g)) => {
            println!("{c_name} = {:.6e} M (target {:e} +/- {:e})", fit.c50, c.value, c.ci);
            println!("{g_name} = {:.6} (target {} +/- {})", fit.gamma, g.value, g.ci);
        }
        None => {
            println!("{c_name} = {:.6e} M", fit.c50);
            println!("{g_name} = {:.6}", fit.gamma);
        }
    }
    if let Some(n) = narrow {
        println!("{g_name} within one decade of {c_name} = {:.6}", n.gamma);
    }
    println!("wrote {}", common.out.display());
    Ok(())
}

fn load_targets(path: Option<&Path>) -> Result<ExperimentalTargets, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentalTargets::reference());
    };
    let map: BTreeMap<String, DrugTargets> =
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let rank = |n: &str| DRUGS.iter().position(|d| *d == n).unwrap_or(DRUGS.len());
    let mut drugs: Vec<(String, DrugTargets)> = map.into_iter().collect();
    drugs.sort_by(|a, b| (rank(&a.0), &a.0).cmp(&(rank(&b.0), &b.0)));
    let t = ExperimentalTargets { drugs };
    t.validate()?;
    Ok(t)
}

pub fn estimate(
    common: &Common,
    targets: Option<&Path>,
    untie: bool,
    max_iter: usize,
    max_restarts: usize,
) -> Result<(), CliError> {
    let targets = load_targets(targets)?;
    let mut cfg = EstimationConfig {
        untie_kdissd: untie,
        max_restarts,
        integration: integration(common)?,
        ..Default::default()
    };
    cfg.simplex.max_iterations = max_iter;
    if let Some(h) = common.horizon {
        cfg.in_vivo.horizon = h;
        cfg.in_vitro.horizon = h;
    }
    let names: Vec<String> = targets.drugs.iter().map(|(n, _)| n.clone()).collect();
    let explicit_start = common.params.is_some() || common.preset.is_some();
    let (start_set, source) = if explicit_start {
        load_set(common)?
    } else {
        (
            ParameterSet::preset("table1").expect("built-in preset"),
            "literature".to_string(),
        )
    };
    let x0 = if explicit_start {
        ParameterVector::pack(common.model, untie, &start_set, &names)?
    } else {
        estimation::default_start(common.model, untie, &names)
    };
    let result = estimation::estimate(common.model, &targets, &cfg, Some(x0))?;
    let base = ParameterSet::preset("table1").expect("built-in preset");
    let fitted = result.x_best.unpack(&base)?;

    let extra = json!({"command": "estimate", "config": cfg, "targets": targets});
    let mut out = OutputDir::create(&common.out, "estimate", inputs(common, &start_set, &source, extra))?;
    let named = |x: &ParameterVector| {
        x.named()
            .into_iter()
            .map(|(k, v)| (k, json!(v)))
            .collect::<serde_json::Map<_, _>>()
    };
    let summaries = result.objective.summaries.as_ref().map(|s| {
        s.iter()
            .map(|(name, sim)| json!({"drug": name, "simulated": sim, "target": targets.get(name)}))
            .collect::<Vec<_>>()
    });
    let report = json!({
        "model": common.model.name(),
        "untie_kdissD": untie,
        "converged": result.converged,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "F": result.objective.f,
        "term1": result.objective.term1,
        "term2": result.objective.term2,
        "failure": result.objective.failure,
        "x0": named(&result.x0),
        "x_best": named(&result.x_best),
        "summaries": summaries,
    });
    out.write_json("estimate.json", &report)?;
    out.write_json("estimated_params.json", &fitted.to_json())?;
    let mut header = vec!["iteration".to_string(), "evaluations".into(), "F".into()];
    header.extend(result.x_best.names());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = result
        .trace
        .iter()
        .map(|e| {
            let mut r = vec![e.iteration.to_string(), e.evaluations.to_string(), num(e.f_best)];
            r.extend(e.x_best.iter().map(|v| num(*v)));
            r
        })
        .collect();
    out.write_csv("trace.csv", &header, &rows)?;

    println!("{:<12} {:>12}", "", common.model.name());
    println!("{:<12} {:>12.4}", "F", result.objective.f);
    println!("{:<12} {:>12.4}", "1st term", result.objective.term1);
    println!("{:<12} {:>12.4}", "2nd term", result.objective.term2);
    println!();
    for (name, v) in result.x_best.named() {
        println!("{name:<26} {v:>12.4e}");
    }
    if let Some(s) = &result.objective.summaries {
        println!();
        println!(
            "{:<14} {:>11} {:>8} {:>11} {:>8}",
            "drug", "EC50 (M)", "gamma_E", "IC50 (M)", "gamma_I"
        );
        for (name, sim) in s {
            println!(
                "{name:<14} {:>11.3e} {:>8.3} {:>11.3e} {:>8.3}",
                sim.ec50, sim.gamma_e, sim.ic50, sim.gamma_i
            );
        }
    }
    println!();
    println!(
        "converged = {} after {} iterations ({} evaluations)",
        result.converged, result.iterations, result.evaluations
    );
    println!("wrote {}", common.out.display());
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    mu_grid: Option<Vec<f64>>,
    #[serde(rename = "k_dissD_set")]
    k_dissd_set: Option<Vec<f64>>,
    #[serde(rename = "K_D1")]
    kd1: Option<f64>,
}

fn sweep_plots(model: ModelKind, rows: &[SweepRow], markers: &[sweep::DrugMarker], ks: &[f64]) -> Vec<Plot> {
    type Field = fn(&SweepRow) -> Option<f64>;
    let panels: [(&str, bool, Field); 4] = [
        ("EC50 / K_D1", true, |r| r.ec50_over_kd1),
        ("gamma_E", false, |r| r.gamma_e),
        ("IC50 / K_D1", true, |r| r.ic50_over_kd1),
        ("gamma_I", false, |r| r.gamma_i),
    ];
    panels
        .iter()
        .map(|&(label, log_y, field)| {
            let mut series: Vec<Series> = ks
                .iter()
                .map(|&k| Series {
                    name: format!("k_dissD = {k} 1/s"),
                    points: rows
                        .iter()
                        .filter(|r| r.k_dissd == k)
                        .filter_map(|r| field(r).map(|v| (r.mu, v)))
                        .collect(),
                    markers: false,
                })
                .collect();
            series.extend(markers.iter().map(|m| Series {
                name: m.drug.clone(),
                points: field(&m.row).map(|v| vec![(m.row.mu, v)]).unwrap_or_default(),
                markers: true,
            }));
            Plot {
                title: format!("{} scheme: {label}", model.name()),
                x_label: "site selectivity K_D2 / K_D1".into(),
                y_label: label.into(),
                log_x: true,
                log_y,
                series,
            }
        })
        .collect()
}

pub fn sweep(common: &Common, plan_path: Option<&Path>, mu_points: usize) -> Result<(), CliError> {
    let (set, source) = load_set(common)?;
    let file: PlanFile = match plan_path {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => PlanFile::default(),
    };
    if mu_points == 0 {
        return Err(CliError::Config("--mu-points must be at least 1".into()));
    }
    let mut plan = SweepPlan::default_for(common.model);
    plan.base = set.clone();
    plan.mu_grid = file.mu_grid.unwrap_or_else(|| sweep::log_space(1.0, 1e5, mu_points));
    if let Some(k) = file.k_dissd_set {
        plan.k_dissd_set = k;
    }
    if let Some(k) = file.kd1 {
        plan.kd1 = k;
    }
    if let Some(h) = common.horizon {
        plan.in_vivo.horizon = h;
        plan.in_vitro.horizon = h;
    }
    plan.integration = integration(common)?;
    plan.validate()?;

    let rows = sweep::run_sweep(&plan)?;
    let markers = sweep::drug_markers(&plan, &set);

    let extra = json!({
        "command": "sweep",
        "mu_grid": plan.mu_grid,
        "k_dissD_set": plan.k_dissd_set,
        "K_D1": plan.kd1,
        "in_vivo": plan.in_vivo,
        "in_vitro": plan.in_vitro,
        "normalization": if common.model == ModelKind::TwoSite {
            "exact: ratios depend on mu only"
        } else {
            "approximate: ACh concentrations are not rescaled with K_D1"
        },
    });
    let mut out = OutputDir::create(&common.out, "sweep", inputs(common, &set, &source, extra))?;
    let header = [
        "mu",
        "k_dissD",
        "EC50_over_KD1",
        "gamma_E",
        "IC50_over_KD1",
        "gamma_I",
        "error",
    ];
    let to_record = |r: &SweepRow| {
        vec![
            num(r.mu),
            num(r.k_dissd),
            opt(r.ec50_over_kd1),
            opt(r.gamma_e),
            opt(r.ic50_over_kd1),
            opt(r.gamma_i),
            r.error.clone().unwrap_or_default(),
        ]
    };
    out.write_csv("sweep.csv", &header, &rows.iter().map(to_record).collect::<Vec<_>>())?;
    let mut mheader = vec!["drug"];
    mheader.extend(header);
    let mrows: Vec<Vec<String>> = markers
        .iter()
        .map(|m| {
            let mut r = vec![m.drug.clone()];
            r.extend(to_record(&m.row));
            r
        })
        .collect();
    out.write_csv("markers.csv", &mheader, &mrows)?;
    let plots = sweep_plots(common.model, &rows, &markers, &plan.k_dissd_set);
    out.write("sweep.svg", svg::render(&plots, 2).as_bytes())?;

    let ok = rows.iter().filter(|r| r.is_complete()).count();
    for r in rows.iter().filter(|r| !r.is_complete()) {
        eprintln!(
            "ndnb: cell mu = {:e}, k_dissD = {} failed: {}",
            r.mu,
            r.k_dissd,
            r.error.as_deref().unwrap_or("")
        );
    }
    println!("cells: {ok}/{} succeeded", rows.len());
    for &k in &plan.k_dissd_set {
        if let Some(mu) = sweep::ec50_argmax_mu(&rows, k) {
            println!("k_dissD = {k}: EC50/K_D1 peaks at mu = {mu:.4e}");
        }
    }
    if plan.k_dissd_set.len() > 1 {
        println!(
            "max off-rate spread of EC50/K_D1 = {:.4} decades",
            sweep::ec50_offrate_spread(&rows)
        );
    }
    println!("wrote {}", common.out.display());
    if (ok as f64) < 0.9 * rows.len() as f64 {
        return Err(CliError::Numerical(format!(
            "only {ok} of {} sweep cells succeeded",
            rows.len()
        )));
    }
    Ok(())
}
