//! Command implementations: each one is deterministic given its effective
//! configuration and embeds the config hash in its summary file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use pma_core::contract::{default_deviations, synthesize_contract, verify_incentive_compatibility};
use pma_core::hjb::{extract_policy, solve as hjb_solve, ValueSurface};
use pma_core::model::validate;
use pma_core::sim::{
    estimate_expectation, girsanov_density, simulate_base, simulate_paths, ConstantPolicy,
};

use crate::config::RunConfig;

/// Commands either succeed, fail with an error, or complete with a negative
/// verification verdict.
pub enum Verdict {
    Ok,
    Failed(String),
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn solve(config: &RunConfig) -> anyhow::Result<Verdict> {
    let started = Instant::now();
    let model = config.build_model()?;
    let report = validate(&model)?;
    if !report.is_empty() {
        anyhow::bail!(pma_core::Error::Invalid(
            report.violations.len(),
            report.violations[0].to_string()
        ));
    }
    let grid = config.space_grid(&model)?;
    let tgrid = config.time_grid(&model)?;
    let params = config.hjb_params()?;
    let surface = hjb_solve(&model, &grid, &tgrid, &params)?;
    let (v00, vp) = surface.principal_value(&model)?;

    let dir = &config.output.dir;
    let mut csv = BufWriter::new(File::create(dir.join("surface.csv"))?);
    surface.write_csv(&model, &mut csv)?;
    csv.flush()?;

    let key = ValueSurface::cache_key(&model, &grid, &tgrid);
    surface.save_cache(&dir.join("surface.bin"), key)?;

    let (policy, quality) =
        extract_policy(Arc::new(model.clone()), Arc::new(surface.clone()), &params.opt)?;
    write_policy_csv(&dir.join("policy.csv"), &model, &surface)?;

    let summary = json!({
        "config_hash": format!("{:#018x}", config.hash()),
        "surface_key": format!("{key:#018x}"),
        "v00": v00,
        "principal_value": vp,
        "grid": { "nodes": grid.nodes, "lo": grid.lo, "hi": grid.hi, "time_steps": tgrid.steps },
        "diagnostics": {
            "extrapolated_nodes": surface.diagnostics.extrapolated_nodes,
            "budget_warnings": surface.diagnostics.budget_warnings,
            "near_ties": surface.diagnostics.near_ties,
            "policy_quality_gap": quality.worst_rel_gap,
            "policy_quality_pass": quality.pass,
        },
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    let _ = policy;
    eprintln!(
        "solve: v(0, x0) = {v00:.6}, principal value = {vp:.6} in {:.1}s",
        started.elapsed().as_secs_f64()
    );
    Ok(Verdict::Ok)
}

fn write_policy_csv(path: &Path, model: &pma_core::model::ModelSpec, surface: &ValueSurface) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let dn = model.state_dim();
    let n_agents = model.n_agents;
    let a_dim = model.actions.dim();
    write!(out, "t")?;
    for d in 0..dn {
        write!(out, ",x{d}")?;
    }
    for i in 0..n_agents {
        for j in 0..dn {
            write!(out, ",z{i}_{j}")?;
        }
    }
    let n_h = surface.controls[0].h.len() / surface.grid.n_total().max(1);
    for j in 0..n_h {
        write!(out, ",h{j}")?;
    }
    for i in 0..n_agents {
        write!(out, ",chi{i}")?;
    }
    for j in 0..a_dim {
        write!(out, ",a{j}")?;
    }
    writeln!(out, ",h_value")?;
    let mut x = vec![0.0; dn];
    for (k, ctrl) in surface.controls.iter().enumerate() {
        let t = surface.tgrid.node(k);
        for flat in 0..surface.grid.n_total() {
            surface.grid.point(flat, &mut x);
            write!(out, "{t:.9}")?;
            for v in &x {
                write!(out, ",{v:.9}")?;
            }
            for z in &ctrl.z[flat * n_agents * dn..(flat + 1) * n_agents * dn] {
                write!(out, ",{z:.9e}")?;
            }
            for h in &ctrl.h[flat * n_h..(flat + 1) * n_h] {
                write!(out, ",{h:.9e}")?;
            }
            for c in &ctrl.k[flat * n_agents..(flat + 1) * n_agents] {
                write!(out, ",{c:.9e}")?;
            }
            for a in &ctrl.a[flat * a_dim..(flat + 1) * a_dim] {
                write!(out, ",{a:.9e}")?;
            }
            writeln!(out, ",{:.9e}", ctrl.h_value[flat])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn simulate(config: &RunConfig) -> anyhow::Result<Verdict> {
    let started = Instant::now();
    let model = config.build_model()?;
    let report = validate(&model)?;
    if !report.is_empty() {
        anyhow::bail!(pma_core::Error::Invalid(
            report.violations.len(),
            report.violations[0].to_string()
        ));
    }
    let grid = config.sim_grid(&model)?;
    let action = config
        .experiment
        .policy
        .clone()
        .unwrap_or_else(|| model.actions.center());
    if action.len() != model.actions.dim() {
        anyhow::bail!(pma_core::Error::Domain(format!(
            "experiment.policy needs {} coordinates",
            model.actions.dim()
        )));
    }
    let policy = ConstantPolicy(action.clone());
    let n_paths = config.experiment.n_paths;
    let seed = config.experiment.seed;

    let bundle = simulate_paths(&model, &policy, grid, n_paths, seed)?;
    let dir = &config.output.dir;
    let mut csv = BufWriter::new(File::create(dir.join("paths.csv"))?);
    bundle.write_csv(&mut csv, None)?;
    csv.flush()?;

    let mut estimates = Vec::new();
    for d in 0..model.state_dim() {
        let (mean, se) = estimate_expectation(&bundle, &|p| p.terminal_state()[d], None)?;
        estimates.push(json!({ "component": d, "drifted_mean": mean, "drifted_stderr": se }));
    }

    let mut reweighted = Vec::new();
    if config.experiment.reweight {
        let base = simulate_base(&model, grid, n_paths, seed.wrapping_add(1))?;
        let densities = girsanov_density(&model, &base, &policy)?;
        for d in 0..model.state_dim() {
            let (mean, se) =
                estimate_expectation(&base, &|p| p.terminal_state()[d], Some(&densities))?;
            reweighted.push(json!({
                "component": d,
                "reweighted_mean": mean,
                "reweighted_stderr": se,
            }));
        }
    }

    let summary = json!({
        "config_hash": format!("{:#018x}", config.hash()),
        "n_paths": n_paths,
        "seed": seed,
        "policy": action,
        "estimates": estimates,
        "reweighted": reweighted,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("estimates.json"), &summary)?;
    eprintln!("simulate: {n_paths} paths in {:.1}s", started.elapsed().as_secs_f64());
    Ok(Verdict::Ok)
}

pub fn verify(config: &RunConfig, corrupt_z: Option<f64>) -> anyhow::Result<Verdict> {
    let started = Instant::now();
    let model = config.build_model()?;
    let report = validate(&model)?;
    if !report.is_empty() {
        anyhow::bail!(pma_core::Error::Invalid(
            report.violations.len(),
            report.violations[0].to_string()
        ));
    }
    let grid = config.space_grid(&model)?;
    let tgrid = config.time_grid(&model)?;
    let params = config.hjb_params()?;
    let dir = &config.output.dir;

    // Reuse a cached surface when it matches this problem; solve inline
    // otherwise.
    let key = ValueSurface::cache_key(&model, &grid, &tgrid);
    let cache_path = dir.join("surface.bin");
    let surface = match ValueSurface::load_cache(&cache_path, key, params.scheme) {
        Ok(surface) => surface,
        Err(_) => {
            let surface = hjb_solve(&model, &grid, &tgrid, &params)?;
            surface.save_cache(&cache_path, key)?;
            surface
        }
    };

    let (mut policy, _) = extract_policy(Arc::new(model.clone()), Arc::new(surface), &params.opt)?;
    if let Some(factor) = corrupt_z {
        policy = policy.with_scaled_z(factor, true);
    }

    let deviations = build_deviations(&model, config.experiment.deviation_grid)?;
    let sim_grid = config.sim_grid(&model)?;
    let br = config.br_params();
    let report = verify_incentive_compatibility(
        &model,
        &policy,
        None,
        &deviations,
        sim_grid,
        config.experiment.n_paths,
        config.experiment.seed,
        &br,
    )?;

    let bundle = simulate_paths(
        &model,
        &policy.as_action_policy(),
        sim_grid,
        config.experiment.n_paths,
        config.experiment.seed,
    )?;
    let outcome = synthesize_contract(&model, &policy, None, &bundle, &br)?;

    let mut csv = BufWriter::new(File::create(dir.join("deviations.csv"))?);
    report.write_csv(&mut csv)?;
    csv.flush()?;
    let mut xi_csv = BufWriter::new(File::create(dir.join("contract_xi.csv"))?);
    outcome.write_xi_csv(&mut xi_csv)?;
    xi_csv.flush()?;

    let report_json = json!({
        "config_hash": format!("{:#018x}", config.hash()),
        "pass": report.pass,
        "corrupt_z": corrupt_z,
        "equilibrium_values": report.equilibrium,
        "deviations": serde_json::to_value(&report.rows)?,
        "agent_values": outcome.agent_values,
        "principal_value": outcome.principal_value,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("report.json"), &report_json)?;

    eprintln!(
        "verify: verdict {} in {:.1}s",
        if report.pass { "pass" } else { "fail" },
        started.elapsed().as_secs_f64()
    );
    if report.pass {
        Ok(Verdict::Ok)
    } else {
        let worst = report
            .rows
            .iter()
            .max_by(|a, b| a.gain.total_cmp(&b.gain))
            .map(|r| format!("agent {} gains {:.4} at {}", r.agent, r.gain, r.label))
            .unwrap_or_default();
        Ok(Verdict::Failed(worst))
    }
}

fn build_deviations(
    model: &pma_core::model::ModelSpec,
    grid_points: usize,
) -> anyhow::Result<Vec<pma_core::contract::Deviation>> {
    if grid_points == 0 {
        anyhow::bail!(pma_core::Error::Verification(
            "experiment.deviation_grid = 0: empty deviation lists are rejected".into()
        ));
    }
    if grid_points == 9 {
        return Ok(default_deviations(model));
    }
    let mut out = Vec::new();
    for (i, agent_box) in model.actions.agents.iter().enumerate() {
        let center: Vec<f64> = agent_box
            .lower
            .iter()
            .zip(&agent_box.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        for c in 0..agent_box.dim() {
            for g in 0..grid_points {
                let frac = if grid_points == 1 { 0.5 } else { g as f64 / (grid_points - 1) as f64 };
                let v = agent_box.lower[c] + (agent_box.upper[c] - agent_box.lower[c]) * frac;
                let mut action = center.clone();
                action[c] = v;
                out.push(pma_core::contract::Deviation {
                    agent: i,
                    action,
                    label: format!("a{i}[{c}]={v:.3}"),
                });
            }
        }
    }
    Ok(out)
}

pub fn bench(config: &RunConfig) -> anyhow::Result<Verdict> {
    let model = config.build_model()?;
    let grid = config.space_grid(&model)?;
    let tgrid = config.time_grid(&model)?;
    let params = config.hjb_params()?;

    let t0 = Instant::now();
    let surface = hjb_solve(&model, &grid, &tgrid, &params)?;
    let solve_s = t0.elapsed().as_secs_f64();

    let sim_grid = config.sim_grid(&model)?;
    let policy = ConstantPolicy(model.actions.center());
    let t1 = Instant::now();
    let bundle = simulate_paths(&model, &policy, sim_grid, config.experiment.n_paths, config.experiment.seed)?;
    let sim_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let base = simulate_base(&model, sim_grid, config.experiment.n_paths, config.experiment.seed)?;
    let densities = girsanov_density(&model, &base, &policy)?;
    let girsanov_s = t2.elapsed().as_secs_f64();
    let _ = (bundle, densities);

    let (v00, vp) = surface.principal_value(&model)?;
    let summary = json!({
        "config_hash": format!("{:#018x}", config.hash()),
        "solve_s": solve_s,
        "simulate_s": sim_s,
        "girsanov_s": girsanov_s,
        "v00": v00,
        "principal_value": vp,
    });
    write_json(&config.output.dir.join("bench.json"), &summary)?;
    eprintln!("bench: solve {solve_s:.2}s, simulate {sim_s:.2}s, girsanov {girsanov_s:.2}s");
    Ok(Verdict::Ok)
}
