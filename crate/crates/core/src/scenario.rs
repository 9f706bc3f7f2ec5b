//! Built-in experimental setups: the doubly periodic flat square with
//! frozen mechanics, the pressurized deforming torus, and externally
//! supplied extraction meshes. Also hosts the deterministic initial
//! conditions and grid prolongation used by refinement studies.

use crate::assembly::MeshData;
use crate::material::MaterialParams;
use crate::spline::file::ExtractionMesh;
use crate::spline::patch::{fit_periodic_1d, periodic_greville, prolong_periodic_1d, PatchSpec};
use crate::spline::{build_structured_patch, SplineSpace};
use crate::timeint::IntegratorConfig;
use crate::{Error, Result};
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fully specified run setup.
pub struct Scenario {
    pub name: String,
    pub mesh: MeshData,
    pub params: MaterialParams,
    pub phi_bar: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub p_int: f64,
    pub rigid: bool,
    pub fixed: Vec<(usize, usize)>,
    pub integrator: IntegratorConfig,
    pub t_end: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.integrator.validate()?;
        if !(self.phi_bar > 0.0 && self.phi_bar < 1.0) {
            return Err(Error::Config {
                line: None,
                msg: format!("mean concentration must lie in (0,1), got {}", self.phi_bar),
            });
        }
        if self.amplitude < 0.0 || self.amplitude >= self.phi_bar.min(1.0 - self.phi_bar) {
            return Err(Error::Config {
                line: None,
                msg: format!(
                    "perturbation amplitude {} incompatible with mean {}",
                    self.amplitude, self.phi_bar
                ),
            });
        }
        if self.t_end <= 0.0 {
            return Err(Error::Config {
                line: None,
                msg: "end time must be positive".into(),
            });
        }
        Ok(())
    }

    /// Deterministic initial order-parameter control values.
    pub fn initial_phi(&self) -> DVector<f64> {
        initial_phase_field(self.mesh.n_nodes(), self.phi_bar, self.amplitude, self.seed)
    }

    /// Builds the assembler and simulation for this scenario.
    pub fn simulation(self) -> Result<crate::sim::Simulation> {
        self.validate()?;
        let phi0 = self.initial_phi();
        let dofs = crate::assembly::DofMap::new(self.mesh.n_nodes(), &self.fixed, self.rigid);
        let asm = crate::assembly::Assembler::new(self.mesh, self.params, dofs, self.p_int);
        crate::sim::Simulation::new(asm, self.integrator, phi0)
    }
}

/// Uniform random perturbation phi_bar + U(-amplitude, amplitude) applied
/// to the control coefficients, reproducible from the seed.
pub fn initial_phase_field(n: usize, phi_bar: f64, amplitude: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| {
        phi_bar + amplitude * (2.0 * rng.gen::<f64>() - 1.0)
    })
}

/// Doubly periodic unit square with frozen mechanics (pure phase
/// separation). The per-element reference nets reproduce the identity map
/// exactly through the Greville abscissae.
pub fn build_square(
    n_elems: usize,
    degree: usize,
    params: MaterialParams,
    phi_bar: f64,
    seed: u64,
    integrator: IntegratorConfig,
    t_end: f64,
) -> Result<Scenario> {
    let space = build_structured_patch(&PatchSpec::periodic(degree, n_elems, n_elems), None)?;
    let patch = space.structured.unwrap();
    let m = n_elems as f64;
    let off = (1.0 - degree as f64) / 2.0;
    let mut elem_ref = Vec::with_capacity(space.n_elems());
    for ev in 0..n_elems {
        for eu in 0..n_elems {
            let mut nodes = Vec::with_capacity((degree + 1) * (degree + 1));
            for lv in 0..=degree {
                for lu in 0..=degree {
                    nodes.push(Vector3::new(
                        ((eu + lu) as f64 + off) / m,
                        ((ev + lv) as f64 + off) / m,
                        0.0,
                    ));
                }
            }
            elem_ref.push(nodes);
        }
    }
    let mut global = Vec::with_capacity(space.n_basis);
    for gv in 0..patch.n_v {
        for gu in 0..patch.n_u {
            global.push(Vector3::new(
                (gu as f64 + off).rem_euclid(m) / m,
                (gv as f64 + off).rem_euclid(m) / m,
                0.0,
            ));
        }
    }
    let rho_hat = params.rho_hat;
    let mesh = MeshData::new(space, global, Some(elem_ref), rho_hat)?;
    Ok(Scenario {
        name: format!("square-{n_elems}x{n_elems}-p{degree}"),
        mesh,
        params,
        phi_bar,
        amplitude: 0.05,
        seed,
        p_int: 0.0,
        rigid: true,
        fixed: Vec::new(),
        integrator,
        t_end,
    })
}

/// Analytic torus point; theta runs around the minor circle (theta = 0 on
/// the outer equator), phi around the axis.
pub fn torus_point(big_r: f64, small_r: f64, theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(
        (big_r + small_r * theta.cos()) * phi.cos(),
        (big_r + small_r * theta.cos()) * phi.sin(),
        small_r * theta.sin(),
    )
}

/// Control net of a periodic structured torus obtained by Greville-site
/// interpolation of the analytic surface, coordinate by coordinate. The
/// resulting spline surface passes through the torus at all collocation
/// sites; the deviation in between is of high order in the mesh size.
/// The minor angle runs backwards in u so that a_1 x a_2 points outward.
pub fn torus_fit_nodes(
    big_r: f64,
    small_r: f64,
    degree: usize,
    n_u: usize,
    n_v: usize,
) -> Result<Vec<Vector3<f64>>> {
    let theta_of = |t: f64| -2.0 * std::f64::consts::PI * t / n_u as f64;
    let phi_of = |t: f64| 2.0 * std::f64::consts::PI * t / n_v as f64;
    // stage 1: fit along u at every v collocation site
    let mut stage1 = vec![vec![Vector3::zeros(); n_v]; n_u];
    for jv in 0..n_v {
        let tv = periodic_greville(degree, n_v, jv);
        for c in 0..3 {
            let f: Vec<f64> = (0..n_u)
                .map(|iu| {
                    let tu = periodic_greville(degree, n_u, iu);
                    torus_point(big_r, small_r, theta_of(tu), phi_of(tv))[c]
                })
                .collect();
            let ctl = fit_periodic_1d(degree, n_u, &f)?;
            for iu in 0..n_u {
                stage1[iu][jv][c] = ctl[iu];
            }
        }
    }
    // stage 2: fit along v
    let mut nodes = vec![Vector3::zeros(); n_u * n_v];
    for iu in 0..n_u {
        for c in 0..3 {
            let f: Vec<f64> = (0..n_v).map(|jv| stage1[iu][jv][c]).collect();
            let ctl = fit_periodic_1d(degree, n_v, &f)?;
            for jv in 0..n_v {
                nodes[iu + n_u * jv][c] = ctl[jv];
            }
        }
    }
    Ok(nodes)
}

/// Deforming torus under constant internal (follower) pressure. Six
/// mechanical dofs are fixed to remove rigid modes: all three components
/// at the node closest to the outer equator point on the +x axis, two at
/// the +y axis node, one at the -x axis node.
#[allow(clippy::too_many_arguments)]
pub fn build_torus(
    big_r: f64,
    small_r: f64,
    n_u: usize,
    n_v: usize,
    degree: usize,
    params: MaterialParams,
    phi_bar: f64,
    p_int: f64,
    seed: u64,
    integrator: IntegratorConfig,
    t_end: f64,
) -> Result<Scenario> {
    if !(big_r > small_r && small_r > 0.0) {
        return Err(Error::Config {
            line: None,
            msg: format!("torus radii must satisfy R > r > 0, got R={big_r}, r={small_r}"),
        });
    }
    let space = build_structured_patch(&PatchSpec::periodic(degree, n_u, n_v), None)?;
    let nodes = torus_fit_nodes(big_r, small_r, degree, n_u, n_v)?;
    let fixed = torus_constraints(&nodes, big_r, small_r);
    let rho_hat = params.rho_hat;
    let mesh = MeshData::new(space, nodes, None, rho_hat)?;
    Ok(Scenario {
        name: format!("torus-{n_u}x{n_v}-p{degree}"),
        mesh,
        params,
        phi_bar,
        amplitude: 0.05,
        seed,
        p_int,
        rigid: false,
        fixed,
        integrator,
        t_end,
    })
}

/// Rigid-mode constraints for a closed surface around the origin; the
/// placement is a documented scenario choice, not a physical input.
fn torus_constraints(nodes: &[Vector3<f64>], big_r: f64, small_r: f64) -> Vec<(usize, usize)> {
    let targets = [
        Vector3::new(big_r + small_r, 0.0, 0.0),
        Vector3::new(0.0, big_r + small_r, 0.0),
        Vector3::new(-(big_r + small_r), 0.0, 0.0),
    ];
    let nearest = |t: &Vector3<f64>| -> usize {
        nodes
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - t).norm().partial_cmp(&(*b - t).norm()).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    };
    let a = nearest(&targets[0]);
    let b = nearest(&targets[1]);
    let c = nearest(&targets[2]);
    vec![(a, 0), (a, 1), (a, 2), (b, 0), (b, 2), (c, 2)]
}

/// Exact 90 x 90 degree torus segment as a single rational biquadratic
/// element (conic arc weights); used to verify rational evaluation and
/// curvature against the analytic surface.
pub fn torus_segment_patch(big_r: f64, small_r: f64) -> Result<(SplineSpace, Vec<Vector3<f64>>)> {
    let w1 = std::f64::consts::FRAC_1_SQRT_2;
    // minor quarter arc in the (x, z) plane around (R, 0): theta in [0, 90]
    let minor = [
        (big_r + small_r, 0.0),
        (big_r + small_r, small_r),
        (big_r, small_r),
    ];
    // major quarter arc: phi in [0, 90]
    let major = [(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let wu = [1.0, w1, 1.0];
    let mut nodes = Vec::with_capacity(9);
    let mut weights = Vec::with_capacity(9);
    for (j, &(cx, sx)) in major.iter().enumerate() {
        for (i, &(x, z)) in minor.iter().enumerate() {
            nodes.push(Vector3::new(x * cx, x * sx, z));
            weights.push(wu[i] * wu[j]);
        }
    }
    let space = build_structured_patch(&PatchSpec::open(2, 1, 1), Some(&weights))?;
    Ok((space, nodes))
}

/// Scenario driven from an external extraction mesh. The file must carry a
/// control net. Constraint placement: explicit list, or an automatic
/// three-point gauge fix for deformable runs.
#[allow(clippy::too_many_arguments)]
pub fn load_external_scenario(
    mesh_file: ExtractionMesh,
    params: MaterialParams,
    phi_bar: f64,
    p_int: f64,
    seed: u64,
    rigid: bool,
    explicit_fixed: Option<Vec<(usize, usize)>>,
    integrator: IntegratorConfig,
    t_end: f64,
) -> Result<Scenario> {
    let nodes = mesh_file.nodes.ok_or_else(|| Error::Config {
        line: None,
        msg: "extraction file carries no control net (`nodes` section required to run)".into(),
    })?;
    let nodes: Vec<Vector3<f64>> = nodes
        .into_iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect();
    let fixed = if rigid {
        Vec::new()
    } else if let Some(f) = explicit_fixed {
        f
    } else {
        auto_constraints(&nodes)
    };
    let rho_hat = params.rho_hat;
    let mesh = MeshData::new(mesh_file.space, nodes, None, rho_hat)?;
    Ok(Scenario {
        name: "external".into(),
        mesh,
        params,
        phi_bar,
        amplitude: 0.05,
        seed,
        p_int,
        rigid,
        fixed,
        integrator,
        t_end,
    })
}

/// Generic six-dof gauge fix for an arbitrary closed control net.
fn auto_constraints(nodes: &[Vector3<f64>]) -> Vec<(usize, usize)> {
    let centroid: Vector3<f64> = nodes.iter().sum::<Vector3<f64>>() / nodes.len() as f64;
    let far = |from: &dyn Fn(&Vector3<f64>) -> f64| -> usize {
        nodes
            .iter()
            .enumerate()
            .max_by(|(_, p), (_, q)| from(p).partial_cmp(&from(q)).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    };
    let a = far(&|p: &Vector3<f64>| (p - centroid).norm());
    let pa = nodes[a];
    let b = far(&|p: &Vector3<f64>| (p - pa).norm());
    let pb = nodes[b];
    let ab = (pb - pa).normalize();
    let c = far(&|p: &Vector3<f64>| (p - pa).cross(&ab).norm());
    // pick the coordinate components most transverse to the permitted motion
    let mut comps_b: Vec<usize> = (0..3).collect();
    comps_b.sort_by(|&i, &j| ab[i].abs().partial_cmp(&ab[j].abs()).unwrap());
    let w = (nodes[c] - pa).cross(&ab);
    let mut comps_c: Vec<usize> = (0..3).collect();
    comps_c.sort_by(|&i, &j| w[j].abs().partial_cmp(&w[i].abs()).unwrap());
    vec![
        (a, 0),
        (a, 1),
        (a, 2),
        (b, comps_b[0]),
        (b, comps_b[1]),
        (c, comps_c[0]),
    ]
}

/// Prolongs a periodic control grid (n_u x n_v, u fastest) to the doubled
/// mesh in both directions; exact for nested spline spaces.
pub fn prolong_periodic_grid(
    degree: usize,
    n_u: usize,
    n_v: usize,
    values: &[f64],
) -> Result<Vec<f64>> {
    assert_eq!(values.len(), n_u * n_v);
    // u-direction
    let mut mid = vec![0.0; 2 * n_u * n_v];
    for jv in 0..n_v {
        let row: Vec<f64> = (0..n_u).map(|iu| values[iu + n_u * jv]).collect();
        let fine = prolong_periodic_1d(degree, n_u, &row)?;
        for iu in 0..2 * n_u {
            mid[iu + 2 * n_u * jv] = fine[iu];
        }
    }
    // v-direction
    let mut out = vec![0.0; 4 * n_u * n_v];
    for iu in 0..2 * n_u {
        let col: Vec<f64> = (0..n_v).map(|jv| mid[iu + 2 * n_u * jv]).collect();
        let fine = prolong_periodic_1d(degree, n_v, &col)?;
        for jv in 0..2 * n_v {
            out[iu + 2 * n_u * jv] = fine[jv];
        }
    }
    Ok(out)
}

/// Prolongs a vector-valued periodic grid (torus control nets).
pub fn prolong_periodic_grid_vec(
    degree: usize,
    n_u: usize,
    n_v: usize,
    values: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    let mut out = vec![Vector3::zeros(); 4 * n_u * n_v];
    for c in 0..3 {
        let comp: Vec<f64> = values.iter().map(|v| v[c]).collect();
        let fine = prolong_periodic_grid(degree, n_u, n_v, &comp)?;
        for (o, f) in out.iter_mut().zip(&fine) {
            o[c] = *f;
        }
    }
    Ok(out)
}
