//! Result persistence: CSV time series, VTK field snapshots, and lossless
//! checkpoints for bit-identical restarts.

use crate::assembly::{FullState, MeshData};
use crate::geometry::{covariant_ops, metric_rate, point_geometry};
use crate::material::{
    bending_moment, membrane_stress, stress_measures, MaterialParams, PointState,
};
use crate::timeint::{SimState, StepReport};
use crate::{Error, Result};
use nalgebra::{DVector, Vector3};
use std::io::{BufRead, Write};

/// One accepted step in the time series.
#[derive(Debug, Clone)]
pub struct TimeSeriesRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub err_p: f64,
    pub err_d: f64,
    pub newton_iters: usize,
    pub psi_total: f64,
    pub psi_el: f64,
    pub psi_ch: f64,
    pub mass: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl TimeSeriesRow {
    pub fn from_report(step: usize, t: f64, rep: &StepReport) -> Self {
        let e = rep.energy.clone().unwrap_or_default();
        TimeSeriesRow {
            step,
            t,
            dt: rep.dt_used,
            err_p: rep.err_p,
            err_d: rep.err_d,
            newton_iters: rep.newton_iters,
            psi_total: e.psi_total,
            psi_el: e.psi_el,
            psi_ch: e.psi_ch,
            mass: e.mass,
            phi_min: e.phi_min,
            phi_max: e.phi_max,
        }
    }
}

pub const SERIES_HEADER: &str =
    "step,t,dt,err_p,err_d,newton_iters,psi_total,psi_el,psi_ch,mass,phi_min,phi_max";

/// Writes the fixed header line.
pub fn write_series_header<W: Write>(w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{SERIES_HEADER}")
}

/// Appends one row with full double precision (17 significant digits).
pub fn write_series_row<W: Write>(w: &mut W, r: &TimeSeriesRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        r.step,
        r.t,
        r.dt,
        r.err_p,
        r.err_d,
        r.newton_iters,
        r.psi_total,
        r.psi_el,
        r.psi_ch,
        r.mass,
        r.phi_min,
        r.phi_max
    )
}

pub fn write_timeseries<W: Write>(w: &mut W, rows: &[TimeSeriesRow]) -> std::io::Result<()> {
    write_series_header(w)?;
    for r in rows {
        write_series_row(w, r)?;
    }
    Ok(())
}

/// Per-point stress fields sampled for a snapshot.
struct StressSample {
    gamma: [f64; 4],
    s: [f64; 4],
}

/// Writes a legacy-format VTK unstructured grid: each element is sampled on
/// a (degree+1)^2 lattice of corner points carrying positions, phi, the
/// surface tension and deviatoric stress norm of each stress contribution
/// (total, elastic, concentration-gradient, viscous). Stress quantities are
/// evaluated at quadrature points and mapped to the lattice by nearest
/// quadrature sampling.
pub fn write_snapshot<W: Write>(
    w: &mut W,
    mesh: &MeshData,
    params: &MaterialParams,
    state: &FullState,
    t: f64,
) -> Result<()> {
    let p = mesh.space.degree;
    let npl = p + 1; // lattice points per direction
    let n_elems = mesh.space.n_elems();
    let pts_per_elem = npl * npl;
    let n_points = n_elems * pts_per_elem;
    let cells_per_elem = p * p;

    // nearest 1D gauss index for each lattice ordinate
    let (gauss_nodes, _) = crate::spline::quadrature::gauss_1d(p + 1)?;
    let nearest_1d: Vec<usize> = (0..npl)
        .map(|i| {
            let x = i as f64 / p as f64;
            gauss_nodes
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - x).abs().partial_cmp(&(*b - x).abs()).unwrap()
                })
                .map(|(k, _)| k)
                .unwrap()
        })
        .collect();

    let mut positions = Vec::with_capacity(n_points);
    let mut phis = Vec::with_capacity(n_points);
    let mut stresses: Vec<StressSample> = Vec::with_capacity(n_points);

    for e in 0..n_elems {
        let x_e = mesh.gather_positions(e, state.u);
        let v_e = mesh.gather_vec(e, state.v);
        let phi_e = mesh.gather_scalar(e, state.phi);
        let ne = phi_e.len();
        // quadrature-point stress measures
        let mut qp_samples = Vec::with_capacity(mesh.quad[e].len());
        for qp in &mesh.quad[e] {
            let basis = &qp.basis;
            let mut cur = point_geometry(basis, &x_e).map_err(|_| Error::Abort {
                t,
                msg: format!("degenerate geometry in element {e} during snapshot"),
            })?;
            cur.set_reference(&qp.ref_geom);
            let ops = covariant_ops(&cur, basis);
            let (_, rate_up) = metric_rate(&cur, basis, &v_e);
            let mut phi = 0.0;
            let mut dphi = [0.0; 2];
            let mut lap = 0.0;
            for l in 0..ne {
                phi += basis.vals[l] * phi_e[l];
                dphi[0] += basis.d1[0][l] * phi_e[l];
                dphi[1] += basis.d1[1][l] * phi_e[l];
                lap += ops.laplace[l] * phi_e[l];
            }
            let st = PointState::from_geometry(&qp.ref_geom, &cur, phi, dphi, lap, rate_up);
            let sig = membrane_stress(&st, params);
            let mom = bending_moment(&st, params);
            // bending correction attaches to the elastic contribution
            let mut n_el = [[0.0; 2]; 2];
            let mut bm = [[0.0; 2]; 2];
            for be in 0..2 {
                for g in 0..2 {
                    bm[be][g] =
                        st.met_inv[be][0] * st.curv[0][g] + st.met_inv[be][1] * st.curv[1][g];
                }
            }
            for al in 0..2 {
                for be in 0..2 {
                    let mut corr = 0.0;
                    for g in 0..2 {
                        corr += bm[be][g] * mom.moment[g][al];
                    }
                    n_el[al][be] = sig.el[al][be] + corr;
                }
            }
            let (g_tot, s_tot) = stress_measures(&mom.n_total, &st);
            let (g_el, s_el) = stress_measures(&n_el, &st);
            let (g_ch, s_ch) = stress_measures(&sig.ch, &st);
            let (g_vi, s_vi) = stress_measures(&sig.visc, &st);
            qp_samples.push(StressSample {
                gamma: [g_tot, g_el, g_ch, g_vi],
                s: [s_tot, s_el, s_ch, s_vi],
            });
        }
        // lattice points
        for j in 0..npl {
            for i in 0..npl {
                let xi = (i as f64 / p as f64, j as f64 / p as f64);
                let b = mesh.space.element_basis(e, xi)?;
                let mut pos = Vector3::zeros();
                let mut phi = 0.0;
                for l in 0..ne {
                    pos += b.vals[l] * x_e[l];
                    phi += b.vals[l] * phi_e[l];
                }
                positions.push(pos);
                phis.push(phi);
                let q = nearest_1d[i] + (p + 1) * nearest_1d[j];
                stresses.push(StressSample {
                    gamma: qp_samples[q].gamma,
                    s: qp_samples[q].s,
                });
            }
        }
    }

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "surface snapshot t={t:.16e}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n_points} double")?;
    for p in &positions {
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    let n_cells = n_elems * cells_per_elem;
    writeln!(w, "CELLS {n_cells} {}", 5 * n_cells)?;
    for e in 0..n_elems {
        let base = e * pts_per_elem;
        for j in 0..p {
            for i in 0..p {
                let c0 = base + i + npl * j;
                writeln!(w, "4 {} {} {} {}", c0, c0 + 1, c0 + 1 + npl, c0 + npl)?;
            }
        }
    }
    writeln!(w, "CELL_TYPES {n_cells}")?;
    for _ in 0..n_cells {
        writeln!(w, "9")?;
    }
    writeln!(w, "POINT_DATA {n_points}")?;
    let scalar = |w: &mut W, name: &str, get: &dyn Fn(usize) -> f64| -> std::io::Result<()> {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for i in 0..n_points {
            writeln!(w, "{:.16e}", get(i))?;
        }
        Ok(())
    };
    scalar(w, "phi", &|i| phis[i])?;
    let names = ["gamma", "gamma_el", "gamma_ch", "gamma_visc"];
    for (k, name) in names.iter().enumerate() {
        scalar(w, name, &|i| stresses[i].gamma[k])?;
    }
    let names = ["s", "s_el", "s_ch", "s_visc"];
    for (k, name) in names.iter().enumerate() {
        scalar(w, name, &|i| stresses[i].s[k])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

fn write_hex_vec<W: Write>(w: &mut W, name: &str, v: &DVector<f64>) -> std::io::Result<()> {
    write!(w, "{name}")?;
    for x in v.iter() {
        write!(w, " {:016x}", x.to_bits())?;
    }
    writeln!(w)
}

/// Serializes the complete integrator state losslessly (bit-exact hex).
pub fn write_checkpoint<W: Write>(w: &mut W, state: &SimState) -> std::io::Result<()> {
    writeln!(w, "checkpoint v1")?;
    writeln!(w, "step {}", state.step)?;
    writeln!(w, "t {:016x}", state.t.to_bits())?;
    writeln!(w, "dt {:016x}", state.dt.to_bits())?;
    writeln!(w, "n_mech {}", state.u.len())?;
    writeln!(w, "n_phase {}", state.phi.len())?;
    write_hex_vec(w, "u", &state.u)?;
    write_hex_vec(w, "v", &state.v)?;
    write_hex_vec(w, "acc", &state.acc)?;
    write_hex_vec(w, "phi", &state.phi)?;
    write_hex_vec(w, "phidot", &state.phidot)?;
    write_hex_vec(w, "hist_d", &state.hist_d)?;
    write_hex_vec(w, "hist_p", &state.hist_p)?;
    Ok(())
}

/// Restores a checkpoint; the dimensions must match the running system.
pub fn read_checkpoint<R: BufRead>(r: R) -> Result<SimState> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::MeshFormat {
                line: None,
                msg: format!("checkpoint truncated before {what}"),
            })
    };
    let header = next("header")?;
    if header.trim() != "checkpoint v1" {
        return Err(Error::MeshFormat {
            line: Some(1),
            msg: "not a checkpoint file".into(),
        });
    }
    let field = |line: String, key: &str| -> Result<String> {
        let mut it = line.split_whitespace();
        let k = it.next().unwrap_or("");
        if k != key {
            return Err(Error::MeshFormat {
                line: None,
                msg: format!("expected `{key}`, found `{k}`"),
            });
        }
        Ok(it.collect::<Vec<_>>().join(" "))
    };
    let step: usize = field(next("step")?, "step")?
        .parse()
        .map_err(|_| Error::MeshFormat {
            line: None,
            msg: "bad step".into(),
        })?;
    let parse_bits = |s: &str| -> Result<f64> {
        u64::from_str_radix(s.trim(), 16)
            .map(f64::from_bits)
            .map_err(|_| Error::MeshFormat {
                line: None,
                msg: format!("bad hex float `{s}`"),
            })
    };
    let t = parse_bits(&field(next("t")?, "t")?)?;
    let dt = parse_bits(&field(next("dt")?, "dt")?)?;
    let n_mech: usize = field(next("n_mech")?, "n_mech")?
        .parse()
        .map_err(|_| Error::MeshFormat {
            line: None,
            msg: "bad n_mech".into(),
        })?;
    let n_phase: usize = field(next("n_phase")?, "n_phase")?
        .parse()
        .map_err(|_| Error::MeshFormat {
            line: None,
            msg: "bad n_phase".into(),
        })?;
    let mut read_vec = |key: &str, len: usize| -> Result<DVector<f64>> {
        let body = field(next(key)?, key)?;
        let vals: Result<Vec<f64>> = body.split_whitespace().map(parse_bits).collect();
        let vals = vals?;
        if vals.len() != len {
            return Err(Error::MeshFormat {
                line: None,
                msg: format!("{key}: expected {len} entries, found {}", vals.len()),
            });
        }
        Ok(DVector::from_vec(vals))
    };
    let u = read_vec("u", n_mech)?;
    let v = read_vec("v", n_mech)?;
    let acc = read_vec("acc", n_mech)?;
    let phi = read_vec("phi", n_phase)?;
    let phidot = read_vec("phidot", n_phase)?;
    let hist_d = read_vec("hist_d", n_mech)?;
    let hist_p = read_vec("hist_p", n_phase)?;
    Ok(SimState {
        t,
        dt,
        step,
        u,
        v,
        acc,
        phi,
        phidot,
        hist_d,
        hist_p,
    })
}
