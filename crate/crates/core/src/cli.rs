//! Command-line drivers: `run`, `validate` and `inspect-mesh`.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! aborts.

use crate::config::{parse_config, RunSettings};
use crate::output::{
    read_checkpoint, write_checkpoint, write_series_header, write_series_row, write_snapshot,
    TimeSeriesRow,
};
use crate::scenario::Scenario;
use crate::timeint::CoupledSystem;
use crate::spline::file::load_extraction_mesh;
use crate::{Error, Result};
use std::io::{BufWriter, Write};
use std::path::Path;

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::MeshFormat { .. }
        | Error::MeshValidation { .. }
        | Error::BadArgument(_)
        | Error::UnknownElement(_) => 2,
        Error::Abort { .. } | Error::Io(_) => 3,
    }
}

/// `validate <config>`: parse, build and check everything without stepping.
pub fn validate(config: &Path, overrides: &[String]) -> Result<()> {
    let (scenario, _) = parse_config(config, overrides)?;
    let n_nodes = scenario.mesh.n_nodes();
    let n_elems = scenario.mesh.space.n_elems();
    println!(
        "ok: scenario `{}`, {} elements, {} basis functions, area {:.6}",
        scenario.name, n_elems, n_nodes, scenario.mesh.area
    );
    println!(
        "   rigid: {}, fixed dofs: {}, p_int: {}, t_end: {}",
        scenario.rigid,
        scenario.fixed.len(),
        scenario.p_int,
        scenario.t_end
    );
    Ok(())
}

/// `inspect-mesh <file>`: load an extraction mesh, run validation and print
/// a short structural summary.
pub fn inspect_mesh(path: &Path) -> Result<()> {
    let f = std::fs::File::open(path)?;
    let mesh = load_extraction_mesh(std::io::BufReader::new(f))?;
    let space = &mesh.space;
    let rational = space.elements.iter().filter(|e| e.weights.is_some()).count();
    let ne_min = space.elements.iter().map(|e| e.indices.len()).min().unwrap_or(0);
    let ne_max = space.elements.iter().map(|e| e.indices.len()).max().unwrap_or(0);
    println!("degree        {}", space.degree);
    println!("basis         {}", space.n_basis);
    println!("elements      {}", space.n_elems());
    println!("support range {ne_min}..{ne_max} functions per element");
    println!("rational      {rational} elements carry weights");
    match &mesh.nodes {
        Some(nodes) => {
            let c: nalgebra::Vector3<f64> = nodes
                .iter()
                .map(|p| nalgebra::Vector3::new(p[0], p[1], p[2]))
                .sum::<nalgebra::Vector3<f64>>()
                / nodes.len() as f64;
            println!("control net   {} points, centroid ({:.4}, {:.4}, {:.4})", nodes.len(), c.x, c.y, c.z);
        }
        None => println!("control net   absent (file defines the basis only)"),
    }
    println!("validation    ok");
    Ok(())
}

/// `run <config>`: march the scenario to its end time, writing the time
/// series, optional snapshots and checkpoints into the output directory.
pub fn run(
    config: &Path,
    overrides: &[String],
    out_dir: &Path,
    seed: Option<u64>,
    restore: Option<&Path>,
    quiet: bool,
) -> Result<()> {
    let mut overrides = overrides.to_vec();
    if let Some(s) = seed {
        overrides.push(format!("phase.seed={s}"));
    }
    let (scenario, settings) = parse_config(config, &overrides)?;
    std::fs::create_dir_all(out_dir)?;
    let name = scenario.name.clone();
    let t_end = scenario.t_end;
    let fd_tangent = settings.fd_tangent;
    let mut sim = scenario.simulation()?;
    sim.system.fd_tangent = fd_tangent;
    if let Some(cp) = restore {
        let f = std::fs::File::open(cp)?;
        let state = read_checkpoint(std::io::BufReader::new(f))?;
        if state.u.len() != sim.system.n_mech() || state.phi.len() != sim.system.n_phase() {
            return Err(Error::Config {
                line: None,
                msg: "checkpoint dimensions do not match the configured scenario".into(),
            });
        }
        sim.state = state;
    }

    let series_path = out_dir.join(&settings.series_name);
    let mut series = BufWriter::new(std::fs::File::create(&series_path)?);
    if sim.state.step == 0 {
        write_series_header(&mut series)?;
    } else {
        // continuing: keep the file self-contained by re-writing the header
        write_series_header(&mut series)?;
    }

    if !quiet {
        eprintln!(
            "running `{name}`: {} mech + {} phase dofs, t_end = {t_end}",
            sim.system.n_mech(),
            sim.system.n_phase()
        );
    }
    let outcome = march(&mut sim, t_end, &settings, out_dir, &mut series, quiet);
    series.flush()?;
    let rep = sim.energy()?;
    if !quiet {
        eprintln!(
            "finished at t = {:.6} after {} steps: psi = {:.6e}, mass = {:.6e}, phi in [{:.3}, {:.3}]",
            sim.state.t, sim.state.step, rep.psi_total, rep.mass, rep.phi_min, rep.phi_max
        );
    }
    outcome
}

fn march(
    sim: &mut crate::sim::Simulation,
    t_end: f64,
    settings: &RunSettings,
    out_dir: &Path,
    series: &mut BufWriter<std::fs::File>,
    quiet: bool,
) -> Result<()> {
    let t_eps = 1e-12 * t_end.max(1.0);
    while sim.state.t < t_end - t_eps {
        // do not overshoot the end time
        if sim.state.t + sim.state.dt > t_end {
            sim.state.dt = t_end - sim.state.t;
        }
        let report = sim.step()?;
        let row = TimeSeriesRow::from_report(sim.state.step, sim.state.t, &report);
        write_series_row(series, &row)?;
        if !quiet && sim.state.step % 50 == 0 {
            eprintln!(
                "  step {:5}  t = {:10.4}  dt = {:9.3e}  iters {}  err_p {:8.2e}  err_d {:8.2e}",
                sim.state.step, sim.state.t, report.dt_used, report.newton_iters, report.err_p,
                report.err_d
            );
        }
        if settings.snapshot_every > 0 && sim.state.step % settings.snapshot_every == 0 {
            snapshot(sim, out_dir)?;
        }
        if settings.checkpoint_every > 0 && sim.state.step % settings.checkpoint_every == 0 {
            checkpoint(sim, out_dir)?;
        }
        if settings.steady_stop {
            let (vn, pn) = sim.rate_norms();
            if vn < settings.steady_tol && pn < settings.steady_tol {
                if !quiet {
                    eprintln!(
                        "  steady state at t = {:.4} (|v| = {vn:.2e}, |phidot| = {pn:.2e})",
                        sim.state.t
                    );
                }
                break;
            }
        }
    }
    snapshot(sim, out_dir)?;
    checkpoint(sim, out_dir)?;
    Ok(())
}

fn snapshot(sim: &crate::sim::Simulation, out_dir: &Path) -> Result<()> {
    let full = sim.full_state();
    let path = out_dir.join(format!("snapshot_{:06}.vtk", sim.state.step));
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(
        &mut w,
        &sim.system.asm.mesh,
        &sim.system.asm.params,
        &full.as_full(),
        sim.state.t,
    )?;
    Ok(())
}

fn checkpoint(sim: &crate::sim::Simulation, out_dir: &Path) -> Result<()> {
    let path = out_dir.join(format!("checkpoint_{:06}.txt", sim.state.step));
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, &sim.state)?;
    Ok(())
}

/// Library-level runner used by tests: marches a prepared scenario and
/// returns the rows.
pub fn run_scenario_collect(
    scenario: Scenario,
    steady_stop: Option<f64>,
) -> Result<(crate::sim::Simulation, Vec<TimeSeriesRow>)> {
    let t_end = scenario.t_end;
    let mut sim = scenario.simulation()?;
    let mut rows = Vec::new();
    let t_eps = 1e-12 * t_end.max(1.0);
    while sim.state.t < t_end - t_eps {
        if sim.state.t + sim.state.dt > t_end {
            sim.state.dt = t_end - sim.state.t;
        }
        let report = sim.step()?;
        rows.push(TimeSeriesRow::from_report(
            sim.state.step,
            sim.state.t,
            &report,
        ));
        if let Some(tol) = steady_stop {
            let (vn, pn) = sim.rate_norms();
            if vn < tol && pn < tol {
                break;
            }
        }
    }
    Ok((sim, rows))
}
