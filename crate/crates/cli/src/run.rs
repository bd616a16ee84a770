//! Dispatch of one experiment: compute, write outputs, write the manifest.

use chaotrans::dynamics::EnergyH;
use chaotrans::fractal::{self, StructureOrder};
use chaotrans::integrator::{integrate, write_events_jsonl, write_samples_csv};
use chaotrans::lyapunov::lambda_map;
use chaotrans::nodemap::{
    integrate_reduced, jump_amplitude, p_node, regime_classify, write_reduced_csv, MapState, Regime,
};
use chaotrans::seed::task_rng;
use chaotrans::transport::{
    compare_models, diffusion_coefficient, l_critical, l_critical_full_width, map_decision_runs, ode_ensemble,
    pdf_large_jump, pdf_small_jump, power_law_head, small_jump_q, theta_max, turn_probability, EventClass, MapEnsemble,
    PdfHistogram, PdfPair,
};
use serde_json::{json, Value};

use crate::config::{self, Curve, ExperimentConfig, Fits, MapStatistic, Physics};
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    LyapunovMap,
    Pdf,
    MapPdf,
    AnalyticPdf,
    FractalScan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::LyapunovMap => "lyapunov-map",
            Experiment::Pdf => "pdf",
            Experiment::MapPdf => "map-pdf",
            Experiment::AnalyticPdf => "analytic-pdf",
            Experiment::FractalScan => "fractal-scan",
        }
    }

    /// The config holding only this experiment's section, with every default filled in.
    pub fn resolve(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut out = ExperimentConfig::default();
        match self {
            Experiment::Simulate => out.simulate = Some(cfg.simulate.unwrap_or_default()),
            Experiment::LyapunovMap => out.lyapunov_map = Some(cfg.lyapunov_map.unwrap_or_default()),
            Experiment::Pdf => out.pdf = Some(cfg.pdf.clone().unwrap_or_default()),
            Experiment::MapPdf => out.map_pdf = Some(cfg.map_pdf.clone().unwrap_or_default()),
            Experiment::AnalyticPdf => out.analytic_pdf = Some(cfg.analytic_pdf.clone().unwrap_or_default()),
            Experiment::FractalScan => out.fractal_scan = Some(cfg.fractal_scan.unwrap_or_default()),
        }
        out
    }
}

/// Runs `exp`, writing outputs and `manifest.json` into `out`. On failure the manifest
/// is still written, with status `failed`.
pub fn run(exp: Experiment, cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<Value, CliError> {
    let cfg = exp.resolve(cfg);
    let result = dispatch(exp, &cfg, seed, out);
    let (status, summary, error) = match &result {
        Ok(s) => ("ok", s.clone(), Value::Null),
        Err(e) => ("failed", Value::Null, e.to_json()),
    };
    let manifest = json!({
        "manifest_version": 1,
        "artifact": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "experiment": exp.name(),
        "status": status,
        "error": error,
        "seed": seed,
        "timestamp": source_date_epoch(),
        "config": cfg,
        "summary": summary,
        "files": out.files(),
    });
    out.write_manifest(&manifest)?;
    result.map(|_| manifest)
}

fn source_date_epoch() -> Value {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse::<u64>().ok()).map_or(Value::Null, |t| json!(t))
}

fn dispatch(exp: Experiment, cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<Value, CliError> {
    match exp {
        Experiment::Simulate => simulate(cfg.simulate.as_ref().unwrap(), seed, out),
        Experiment::LyapunovMap => lyapunov(cfg.lyapunov_map.as_ref().unwrap(), seed, out),
        Experiment::Pdf => ode_pdf(cfg.pdf.as_ref().unwrap(), out),
        Experiment::MapPdf => map_pdf(cfg.map_pdf.as_ref().unwrap(), seed, out),
        Experiment::AnalyticPdf => analytic(cfg.analytic_pdf.as_ref().unwrap(), out),
        Experiment::FractalScan => fractal_scan(cfg.fractal_scan.as_ref().unwrap(), out),
    }
}

fn energies(p: &Physics) -> Result<Value, CliError> {
    Ok(json!({
        "h": p.energy()?.0,
        "h_ground_convention": p.energy_ground_convention(),
    }))
}

fn simulate(c: &config::Simulate, seed: u64, out: &mut OutputDir) -> Result<Value, CliError> {
    let params = c.physics.params()?;
    let s0 = c.physics.initial.state()?;
    if c.reduced {
        let mut rng = task_rng(seed, 0);
        let st = MapState::new(s0.u)?;
        let traj = integrate_reduced(s0.x, s0.p, st, &params, &c.integrator, c.tau_max, &mut rng)?;
        out.write("reduced.csv", |w| write_reduced_csv(&traj.samples, w))?;
        out.write("events.jsonl", |w| write_events_jsonl(&traj.crossings, &traj.turns, w))?;
        return Ok(json!({
            "energy": energies(&c.physics)?,
            "samples": traj.samples.len(),
            "crossings": traj.crossings.len(),
            "turns": traj.turns.len(),
        }));
    }
    let traj = integrate(&s0, params, c.integrator, c.tau_max)?;
    out.write("trajectory.csv", |w| write_samples_csv(&traj.samples, w))?;
    out.write("events.jsonl", |w| write_events_jsonl(&traj.crossings, &traj.turns, w))?;
    Ok(json!({
        "energy": energies(&c.physics)?,
        "samples": traj.samples.len(),
        "crossings": traj.crossings.len(),
        "turns": traj.turns.len(),
        "drift": traj.drift,
        "steps": { "accepted": traj.stats.accepted, "rejected": traj.stats.rejected },
    }))
}

fn lyapunov(c: &config::LyapunovMap, seed: u64, out: &mut OutputDir) -> Result<Value, CliError> {
    let grid = lambda_map(c.delta_range, c.p0_range, c.resolution, c.base, c.omega_r, &c.lyapunov, seed)?;
    out.write("lambda.csv", |w| grid.write_csv(w))?;
    out.write_json("lambda.json", &grid.sidecar_json())?;
    let failed = grid.cells.iter().flatten().filter(|c| c.lambda().is_none()).count();
    Ok(json!({ "cells": c.resolution.0 * c.resolution.1, "failed_cells": failed }))
}

fn fit_report(h: &PdfHistogram, fits: &Fits) -> Value {
    let ranges: Vec<Value> = fits
        .ranges
        .iter()
        .map(|&(lo, hi)| match compare_models(h, lo, hi) {
            Ok(cmp) => json!({ "l_min": lo, "l_max": hi, "comparison": cmp }),
            Err(e) => json!({ "l_min": lo, "l_max": hi, "error": e.to_string() }),
        })
        .collect();
    json!({ "events": h.total(), "overflow": h.overflow(), "ranges": ranges })
}

fn write_pair(pair: &PdfPair, fits: &Fits, out: &mut OutputDir) -> Result<Value, CliError> {
    out.write("flight.csv", |w| pair.flight.write_csv(w))?;
    out.write("trapping.csv", |w| pair.trapping.write_csv(w))?;
    let report = json!({
        "flight": fit_report(&pair.flight, fits),
        "trapping": fit_report(&pair.trapping, fits),
    });
    out.write_json("fits.json", &report)?;
    Ok(json!({
        "flight_events": pair.flight.total(),
        "trapping_events": pair.trapping.total(),
        "censored": pair.censored,
        "crossings": pair.crossings,
    }))
}

fn ode_pdf(c: &config::Pdf, out: &mut OutputDir) -> Result<Value, CliError> {
    if c.trajectories == 0 {
        return Err(CliError::config("pdf.trajectories", "must be positive"));
    }
    let params = c.physics.params()?;
    let starts = (0..c.trajectories)
        .map(|i| {
            let mut init = c.physics.initial;
            init.x0 += i as f64 * c.x0_spacing;
            init.state()
        })
        .collect::<chaotrans::Result<Vec<_>>>()?;
    let pair = ode_ensemble(&starts, params, c.integrator, c.tau_max, c.segmentation)?;
    let mut s = write_pair(&pair, &c.fits, out)?;
    s["energy"] = energies(&c.physics)?;
    Ok(s)
}

/// `H` and `K` of the map walk implied by a physical configuration.
fn map_parameters(p: &Physics) -> Result<(EnergyH, f64), CliError> {
    let params = p.params()?;
    let h = p.energy()?;
    let k = jump_amplitude(&params, p_node(h, params.omega_r)?);
    Ok((h, k.0))
}

fn map_pdf(c: &config::MapPdf, seed: u64, out: &mut OutputDir) -> Result<Value, CliError> {
    let (h, k) = map_parameters(&c.physics)?;
    let ens = MapEnsemble {
        k,
        h: h.0,
        u0: c.physics.initial.state()?.u,
        crossings_per_task: c.crossings_per_task,
        tasks: c.tasks,
        seed,
        segmentation: c.segmentation,
    };
    let pair = match c.statistic {
        MapStatistic::Events => ens.run()?,
        MapStatistic::DecisionRuns => map_decision_runs(&ens)?,
    };
    let mut s = write_pair(&pair, &c.fits, out)?;
    s["energy"] = energies(&c.physics)?;
    s["k"] = json!(k);
    Ok(s)
}

fn kind_name(kind: EventClass) -> &'static str {
    match kind {
        EventClass::Flight => "flight",
        EventClass::Trapping => "trapping",
    }
}

fn analytic(c: &config::AnalyticPdf, out: &mut OutputDir) -> Result<Value, CliError> {
    if c.l_max == 0 {
        return Err(CliError::config("analytic_pdf.l_max", "must be positive"));
    }
    let params = c.physics.params()?;
    let h = c.physics.energy()?;
    let pn = p_node(h, params.omega_r)?;
    let k = jump_amplitude(&params, pn);
    let d = diffusion_coefficient(&params, pn);
    let mut kinds = serde_json::Map::new();
    for kind in [EventClass::Flight, EventClass::Trapping] {
        let name = kind_name(kind);
        let theta = theta_max(h, kind)?;
        let l_cr = l_critical(theta, d)?;
        let q = small_jump_q(h, d, kind, c.q_mode)?;
        for curve in &c.curves {
            match curve {
                Curve::SmallJump => {
                    let rows = (1..=c.l_max)
                        .map(|l| pdf_small_jump(l as f64, h, d, kind, q).map(|m| (l, m)))
                        .collect::<chaotrans::Result<Vec<_>>>()?;
                    out.write(&format!("small_jump_{name}.csv"), |w| write_curve(&rows, w))?;
                }
                Curve::PowerHead => {
                    let l_end = (l_cr.floor() as u64).clamp(1, c.l_max);
                    let rows: Vec<_> = (1..=l_end).map(|l| (l, power_law_head(l as f64, d, q))).collect();
                    out.write(&format!("power_head_{name}.csv"), |w| write_curve(&rows, w))?;
                }
                Curve::LargeJump => {
                    let rows = (0..=c.l_max)
                        .map(|l| pdf_large_jump(l, h, kind).map(|m| (l, m)))
                        .collect::<chaotrans::Result<Vec<_>>>()?;
                    out.write(&format!("large_jump_{name}.csv"), |w| write_curve(&rows, w))?;
                }
            }
        }
        kinds.insert(
            name.to_string(),
            json!({
                "theta_max": theta,
                "q": q,
                "l_cr": l_cr,
                "l_cr_full_width": l_critical_full_width(theta, d)?,
            }),
        );
    }
    let (pm, pp) = turn_probability(h)?;
    Ok(json!({
        "energy": energies(&c.physics)?,
        "k": k.0,
        "d": d,
        "regime": regime_classify(k, h),
        "p_minus": pm,
        "p_plus": pp,
        "kinds": kinds,
    }))
}

fn write_curve(rows: &[(u64, f64)], w: &mut dyn std::io::Write) -> std::io::Result<()> {
    writeln!(w, "l,mass")?;
    for (l, m) in rows {
        writeln!(w, "{l},{m:.17e}")?;
    }
    Ok(())
}

fn thresholds(proto: &fractal::ExitProtocol, sign: f64) -> Value {
    let t = |order| fractal::structure_threshold(proto, sign, order).ok();
    json!({ "first_order": t(StructureOrder::First), "second_order": t(StructureOrder::Second) })
}

fn fractal_scan(c: &config::FractalScan, out: &mut OutputDir) -> Result<Value, CliError> {
    let tree = fractal::refine(c.delta_range.0, c.delta_range.1, &c.protocol, &c.refine)?;
    out.write("scan.csv", |w| fractal::write_scan_csv(&tree, w))?;
    out.write_json("tree.json", &fractal::tree_json(&tree))?;
    let records: usize = tree.iter().map(|t| t.records.len()).sum();
    let censored: usize = tree.iter().flat_map(|t| &t.records).filter(|r| r.censored).count();
    let failures: usize = tree.iter().map(|t| t.failures.len()).sum();
    let sign = if c.delta_range.0 + c.delta_range.1 < 0.0 { -1.0 } else { 1.0 };
    Ok(json!({
        "intervals": tree.len(),
        "levels": tree.iter().map(|t| t.level).max().unwrap_or(0) + 1,
        "records": records,
        "censored": censored,
        "failed_cells": failures,
        "tau_max": c.protocol.tau_max,
        "thresholds": thresholds(&c.protocol, sign),
    }))
}

/// Regime report with warnings. Never fails on physics, only on unusable parameters.
pub fn validate(cfg: &ExperimentConfig) -> Value {
    let mut sections = Vec::new();
    let mut physics: Vec<(&str, Physics, Vec<&str>)> = Vec::new();
    if let Some(s) = &cfg.simulate {
        physics.push(("simulate", s.physics, vec![]));
    }
    if let Some(s) = &cfg.pdf {
        physics.push(("pdf", s.physics, vec!["pdf"]));
    }
    if let Some(s) = &cfg.map_pdf {
        physics.push(("map_pdf", s.physics, vec!["pdf"]));
    }
    if let Some(s) = &cfg.analytic_pdf {
        let mut wants = vec!["pdf"];
        for c in &s.curves {
            wants.push(match c {
                Curve::SmallJump | Curve::PowerHead => "small_jump",
                Curve::LargeJump => "large_jump",
            });
        }
        physics.push(("analytic_pdf", s.physics, wants));
    }
    let no_sections = physics.is_empty() && cfg.lyapunov_map.is_none() && cfg.fractal_scan.is_none();
    if no_sections {
        physics.push(("analytic_pdf", Physics::default(), vec!["pdf", "small_jump"]));
    }
    for (name, p, wants) in physics {
        sections.push(physics_report(name, &p, &wants));
    }
    if let Some(s) = &cfg.fractal_scan {
        let sign = if s.delta_range.0 + s.delta_range.1 < 0.0 { -1.0 } else { 1.0 };
        let mut warnings = Vec::new();
        for d in [s.delta_range.0, s.delta_range.1] {
            let h = s.protocol.energy(d).0;
            if !(h > 0.0 && h < 1.0) {
                warnings.push(format!("H = {h} at delta = {d} is outside (0, 1)"));
            }
        }
        sections.push(json!({
            "section": "fractal_scan",
            "h_range": [s.protocol.energy(s.delta_range.0).0, s.protocol.energy(s.delta_range.1).0],
            "thresholds": thresholds(&s.protocol, sign),
            "warnings": warnings,
        }));
    }
    if let Some(s) = &cfg.lyapunov_map {
        sections.push(json!({ "section": "lyapunov_map", "cells": s.resolution.0 * s.resolution.1, "warnings": [] }));
    }
    let warnings: Vec<Value> =
        sections.iter().flat_map(|s| s["warnings"].as_array().cloned().unwrap_or_default()).collect();
    json!({ "sections": sections, "warnings": warnings })
}

fn physics_report(section: &str, p: &Physics, wants: &[&str]) -> Value {
    let mut warnings: Vec<String> = Vec::new();
    let mut report = json!({ "section": section });
    let params = match p.params() {
        Ok(x) => x,
        Err(e) => {
            warnings.push(e.to_string());
            report["warnings"] = json!(warnings);
            return report;
        }
    };
    let h = match p.energy() {
        Ok(h) => h,
        Err(e) => {
            warnings.push(e.to_string());
            report["warnings"] = json!(warnings);
            return report;
        }
    };
    report["h"] = json!(h.0);
    report["h_ground_convention"] = json!(p.energy_ground_convention());
    if h.0 >= 1.0 && wants.contains(&"pdf") {
        warnings.push("ballistic regime, no trapping events expected".into());
    }
    if h.0 <= 0.0 {
        warnings.push("H <= 0: atom confined to one well, no node crossings expected".into());
    }
    if let Ok(pn) = p_node(h, params.omega_r) {
        let k = jump_amplitude(&params, pn);
        let d = diffusion_coefficient(&params, pn);
        report["k"] = json!(k.0);
        report["d"] = json!(d);
        if h.0 > 0.0 && h.0 < 1.0 {
            let regime = regime_classify(k, h);
            report["regime"] = json!(regime);
            let mut lcr = serde_json::Map::new();
            for kind in [EventClass::Flight, EventClass::Trapping] {
                if let Ok(l) = theta_max(h, kind).and_then(|t| l_critical(t, d)) {
                    lcr.insert(kind_name(kind).into(), json!(l));
                }
            }
            report["l_cr"] = Value::Object(lcr);
            if wants.contains(&"small_jump") && regime != Regime::SmallJumpDiffusive {
                warnings
                    .push(format!("small-jump PDF requested outside its validity regime ({regime:?}, K = {:.4})", k.0));
            }
            if wants.contains(&"large_jump") && regime != Regime::LargeJump {
                warnings
                    .push(format!("large-jump PDF requested outside its validity regime ({regime:?}, K = {:.4})", k.0));
            }
        }
    }
    report["warnings"] = json!(warnings);
    report
}
