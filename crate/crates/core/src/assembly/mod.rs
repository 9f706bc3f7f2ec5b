//! Global assembly: quadrature caches over the reference configuration,
//! degree-of-freedom bookkeeping with Dirichlet elimination, and the sparse
//! block system solved in every Newton iteration.

pub mod element;
pub mod fd;

pub use element::{ElementKinematics, ElementOutput, ElementTangent};

use crate::error::StepError;
use crate::geometry::{covariant_ops, point_geometry, BasisSurfaceOperators, SurfacePointGeometry};
use crate::material::{self, MaterialParams, PointState};
use crate::spline::{gauss_rule, QuadratureRule, SplineSpace};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

/// Cached data of one quadrature point: reference basis, reference geometry
/// and the integration weight carrying the reference area measure.
pub struct QuadPoint {
    pub basis: crate::spline::BasisEval,
    pub ref_geom: SurfacePointGeometry,
    /// Covariant operators on the reference surface (rigid-surface path).
    pub ref_ops: Option<BasisSurfaceOperators>,
    /// Gauss weight times reference area density.
    pub weight: f64,
}

/// Immutable mesh-level data shared by all assembly passes.
///
/// Reference control points are stored per element ("unwrapped"), so that
/// periodic parametric domains with non-periodic geometry maps (the flat
/// periodic square) integrate exactly; for embedded closed surfaces the
/// per-element nodes are plain gathers of the global net. Mechanical
/// unknowns are displacements from this reference.
pub struct MeshData {
    pub space: SplineSpace,
    /// Global reference control net (used for norms and constraints).
    pub ref_nodes: Vec<Vector3<f64>>,
    /// Per-element reference control points.
    pub elem_ref: Vec<Vec<Vector3<f64>>>,
    pub rule: QuadratureRule,
    pub quad: Vec<Vec<QuadPoint>>,
    /// Consistent element mass matrices (constant in time).
    pub mass_mech: Vec<DMatrix<f64>>,
    pub mass_phase: Vec<DMatrix<f64>>,
    /// Total reference area.
    pub area: f64,
}

impl MeshData {
    /// Evaluates bases and reference geometry at the (degree+1)^2 Gauss
    /// points of every element and precomputes the mass matrices.
    /// `elem_ref` overrides the per-element reference control points; when
    /// absent they are gathered from `ref_nodes`.
    pub fn new(
        space: SplineSpace,
        ref_nodes: Vec<Vector3<f64>>,
        elem_ref: Option<Vec<Vec<Vector3<f64>>>>,
        rho_hat: f64,
    ) -> Result<Self> {
        if ref_nodes.len() != space.n_basis {
            return Err(Error::Config {
                line: None,
                msg: format!(
                    "{} control points for {} basis functions",
                    ref_nodes.len(),
                    space.n_basis
                ),
            });
        }
        let elem_ref: Vec<Vec<Vector3<f64>>> = match elem_ref {
            Some(e) => {
                if e.len() != space.n_elems() {
                    return Err(Error::Config {
                        line: None,
                        msg: "per-element reference net does not match element count".into(),
                    });
                }
                e
            }
            None => space
                .elements
                .iter()
                .map(|el| el.indices.iter().map(|&g| ref_nodes[g]).collect())
                .collect(),
        };
        let rule = gauss_rule(space.degree + 1)?;
        let mut quad = Vec::with_capacity(space.n_elems());
        let mut mass_mech = Vec::with_capacity(space.n_elems());
        let mut mass_phase = Vec::with_capacity(space.n_elems());
        let mut area = 0.0;
        for el in &space.elements {
            let ne = el.indices.len();
            let nodes = &elem_ref[el.id];
            let mut qps = Vec::with_capacity(rule.points.len());
            let mut me = DMatrix::zeros(3 * ne, 3 * ne);
            let mut mbar = DMatrix::zeros(ne, ne);
            for (q, &xi) in rule.points.iter().enumerate() {
                let basis = space.element_basis(el.id, xi)?;
                let ref_geom = point_geometry(&basis, nodes).map_err(|_| Error::Config {
                    line: None,
                    msg: format!("degenerate reference geometry in element {}", el.id),
                })?;
                let ref_ops = covariant_ops(&ref_geom, &basis);
                let weight = rule.weights[q] * ref_geom.area_density;
                area += weight;
                for a in 0..ne {
                    let wa = weight * rho_hat * basis.vals[a];
                    for b in 0..ne {
                        let m = wa * basis.vals[b];
                        mbar[(a, b)] += m;
                        for i in 0..3 {
                            me[(3 * a + i, 3 * b + i)] += m;
                        }
                    }
                }
                qps.push(QuadPoint {
                    basis,
                    ref_geom,
                    ref_ops: Some(ref_ops),
                    weight,
                });
            }
            quad.push(qps);
            mass_mech.push(me);
            mass_phase.push(mbar);
        }
        Ok(MeshData {
            space,
            ref_nodes,
            elem_ref,
            rule,
            quad,
            mass_mech,
            mass_phase,
            area,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.space.n_basis
    }

    /// Gathers per-element nodal values.
    pub fn gather_vec(&self, elem: usize, full: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.space.elements[elem]
            .indices
            .iter()
            .map(|&g| full[g])
            .collect()
    }

    pub fn gather_scalar(&self, elem: usize, full: &[f64]) -> Vec<f64> {
        self.space.elements[elem]
            .indices
            .iter()
            .map(|&g| full[g])
            .collect()
    }

    /// Current element positions: reference plus gathered displacements.
    pub fn gather_positions(&self, elem: usize, disp: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.space.elements[elem]
            .indices
            .iter()
            .enumerate()
            .map(|(l, &g)| self.elem_ref[elem][l] + disp[g])
            .collect()
    }
}

/// Degree-of-freedom map: three mechanical dofs per node (minus Dirichlet
/// constraints, eliminated by row/column removal) followed by one phase dof
/// per node.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub n_nodes: usize,
    /// Frozen-mechanics mode: no mechanical unknowns at all.
    pub rigid: bool,
    /// (node, component) pairs of fixed mechanical dofs.
    pub fixed: Vec<(usize, usize)>,
    mech_index: Vec<Option<usize>>,
    /// Reverse map: free mechanical dof -> (node, component).
    mech_owner: Vec<(usize, usize)>,
    pub n_mech: usize,
    pub n_phase: usize,
}

impl DofMap {
    pub fn new(n_nodes: usize, fixed: &[(usize, usize)], rigid: bool) -> Self {
        let mut mech_index = vec![None; 3 * n_nodes];
        let mut mech_owner = Vec::new();
        let mut n_mech = 0;
        if !rigid {
            let mut is_fixed = vec![false; 3 * n_nodes];
            for &(node, comp) in fixed {
                is_fixed[3 * node + comp] = true;
            }
            for d in 0..3 * n_nodes {
                if !is_fixed[d] {
                    mech_index[d] = Some(n_mech);
                    mech_owner.push((d / 3, d % 3));
                    n_mech += 1;
                }
            }
        }
        DofMap {
            n_nodes,
            rigid,
            fixed: fixed.to_vec(),
            mech_index,
            mech_owner,
            n_mech,
            n_phase: n_nodes,
        }
    }

    #[inline]
    pub fn mech(&self, node: usize, comp: usize) -> Option<usize> {
        self.mech_index[3 * node + comp]
    }

    /// Node and component of a free mechanical dof.
    pub fn mech_node(&self, free: usize) -> (usize, usize) {
        self.mech_owner[free]
    }

    #[inline]
    pub fn phase(&self, node: usize) -> usize {
        self.n_mech + node
    }

    pub fn n_total(&self) -> usize {
        self.n_mech + self.n_phase
    }
}

/// Full nodal state handed to assembly (global vectors, fixed dofs
/// included at their prescribed values). Mechanical entries are
/// displacements from the reference net.
pub struct FullState<'a> {
    pub u: &'a [Vector3<f64>],
    pub v: &'a [Vector3<f64>],
    pub acc: &'a [Vector3<f64>],
    pub phi: &'a [f64],
    pub phidot: &'a [f64],
}

/// Scalars multiplying the derivative blocks in the iteration matrix.
#[derive(Debug, Clone, Copy)]
pub struct TangentScales {
    /// Factor on d/dx and d/dphi blocks.
    pub alpha_f: f64,
    /// Factor on d f / d v.
    pub c_v: f64,
    /// Factor on the mechanical mass matrix.
    pub c_a: f64,
    /// Factor on the phase mass matrix.
    pub c_phidot: f64,
}

impl TangentScales {
    /// Plain derivative blocks without time-integration factors.
    pub fn spatial() -> Self {
        TangentScales {
            alpha_f: 1.0,
            c_v: 0.0,
            c_a: 0.0,
            c_phidot: 0.0,
        }
    }
}

/// Sparse block system in compressed-column form with a fixed symbolic
/// pattern; refilled on every Newton iteration.
pub struct GlobalSystem {
    pub n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    pub values: Vec<f64>,
    /// Per element, per local (col, row) pair: slot in `values`
    /// (usize::MAX marks eliminated dofs).
    slots: Vec<Vec<usize>>,
    /// Cached symbolic factorization (the pattern never changes).
    symbolic_lu: std::sync::OnceLock<faer::sparse::linalg::solvers::SymbolicLu<usize>>,
}

/// Integrated scalar diagnostics of a state.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyReport {
    pub psi_el: f64,
    pub psi_ch: f64,
    pub psi_total: f64,
    /// Total species mass (reference measure).
    pub mass: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

/// Assembles residuals, tangents and reports for one mesh + material +
/// constraint configuration.
pub struct Assembler {
    pub mesh: MeshData,
    pub params: MaterialParams,
    pub dofs: DofMap,
    pub p_int: f64,
    pub system: GlobalSystem,
}

impl Assembler {
    pub fn new(mesh: MeshData, params: MaterialParams, dofs: DofMap, p_int: f64) -> Self {
        let system = GlobalSystem::build(&mesh, &dofs);
        Assembler {
            mesh,
            params,
            dofs,
            p_int,
            system,
        }
    }

    fn element_outputs(
        &self,
        state: &FullState,
        want_tangent: bool,
    ) -> std::result::Result<Vec<ElementOutput>, StepError> {
        let n_elems = self.mesh.space.n_elems();
        (0..n_elems)
            .into_par_iter()
            .map(|e| {
                if self.dofs.rigid {
                    let phi_e = self.mesh.gather_scalar(e, state.phi);
                    let phidot_e = self.mesh.gather_scalar(e, state.phidot);
                    element::element_phase_rigid(
                        &self.mesh,
                        &self.params,
                        e,
                        &phi_e,
                        &phidot_e,
                        want_tangent,
                    )
                } else {
                    let x_e = self.mesh.gather_positions(e, state.u);
                    let v_e = self.mesh.gather_vec(e, state.v);
                    let acc_e = self.mesh.gather_vec(e, state.acc);
                    let phi_e = self.mesh.gather_scalar(e, state.phi);
                    let phidot_e = self.mesh.gather_scalar(e, state.phidot);
                    let kin = ElementKinematics {
                        x: &x_e,
                        v: &v_e,
                        acc: &acc_e,
                        phi: &phi_e,
                        phidot: &phidot_e,
                    };
                    element::element_coupled(
                        &self.mesh,
                        &self.params,
                        e,
                        &kin,
                        self.p_int,
                        want_tangent,
                    )
                }
            })
            .collect()
    }

    /// Assembled residual over the free dofs (mechanical block first).
    pub fn residual(&self, state: &FullState) -> std::result::Result<DVector<f64>, StepError> {
        let outputs = self.element_outputs(state, false)?;
        Ok(self.scatter_residual(&outputs))
    }

    /// Residual plus iteration matrix values (into the cached pattern).
    pub fn residual_and_tangent(
        &mut self,
        state: &FullState,
        scales: &TangentScales,
    ) -> std::result::Result<DVector<f64>, StepError> {
        let outputs = self.element_outputs(state, true)?;
        let residual = self.scatter_residual(&outputs);
        self.system.values.iter_mut().for_each(|v| *v = 0.0);
        for (e, out) in outputs.iter().enumerate() {
            let tg = out.tangent.as_ref().expect("tangent requested");
            self.scatter_tangent(e, tg, scales);
        }
        Ok(residual)
    }

    fn scatter_residual(&self, outputs: &[ElementOutput]) -> DVector<f64> {
        let mut r = DVector::zeros(self.dofs.n_total());
        for (e, out) in outputs.iter().enumerate() {
            let conn = &self.mesh.space.elements[e].indices;
            if !self.dofs.rigid {
                let f = out.mech_residual();
                for (a, &g) in conn.iter().enumerate() {
                    for i in 0..3 {
                        if let Some(d) = self.dofs.mech(g, i) {
                            r[d] += f[3 * a + i];
                        }
                    }
                }
            }
            let fbar = out.phase_residual();
            for (a, &g) in conn.iter().enumerate() {
                r[self.dofs.phase(g)] += fbar[a];
            }
        }
        r
    }

    fn scatter_tangent(&mut self, e: usize, tg: &ElementTangent, sc: &TangentScales) {
        let ne = self.mesh.space.elements[e].indices.len();
        let nd = if self.dofs.rigid { ne } else { 4 * ne };
        let slots = &self.system.slots[e];
        let me = &self.mesh.mass_mech[e];
        let mbar = &self.mesh.mass_phase[e];
        let mut idx = 0;
        for lc in 0..nd {
            for lr in 0..nd {
                let slot = slots[idx];
                idx += 1;
                if slot == usize::MAX {
                    continue;
                }
                let v = if self.dofs.rigid {
                    sc.alpha_f * tg.k_phiphi[(lr, lc)] + sc.c_phidot * mbar[(lr, lc)]
                } else {
                    let nm = 3 * ne;
                    match (lr < nm, lc < nm) {
                        (true, true) => {
                            sc.alpha_f * tg.k_x[(lr, lc)]
                                + sc.c_v * tg.k_v[(lr, lc)]
                                + sc.c_a * me[(lr, lc)]
                        }
                        (true, false) => sc.alpha_f * tg.k_xphi[(lr, lc - nm)],
                        (false, true) => sc.alpha_f * tg.k_phix[(lr - nm, lc)],
                        (false, false) => {
                            sc.alpha_f * tg.k_phiphi[(lr - nm, lc - nm)]
                                + sc.c_phidot * mbar[(lr - nm, lc - nm)]
                        }
                    }
                };
                self.system.values[slot] += v;
            }
        }
    }

    /// Solves the assembled system for the Newton update -J^{-1} r.
    pub fn solve(&self, residual: &DVector<f64>) -> std::result::Result<DVector<f64>, StepError> {
        self.system.solve(residual)
    }

    /// Energies, species mass and order-parameter range of a state.
    pub fn report(&self, state: &FullState) -> std::result::Result<EnergyReport, StepError> {
        let n_elems = self.mesh.space.n_elems();
        let mut rep = EnergyReport {
            phi_min: f64::INFINITY,
            phi_max: f64::NEG_INFINITY,
            ..Default::default()
        };
        for e in 0..n_elems {
            let phi_e = self.mesh.gather_scalar(e, state.phi);
            let rigid = self.dofs.rigid;
            let x_nodes: Option<Vec<Vector3<f64>>> = if rigid {
                None
            } else {
                Some(self.mesh.gather_positions(e, state.u))
            };
            for qp in &self.mesh.quad[e] {
                let basis = &qp.basis;
                let ne = phi_e.len();
                let st = if let Some(x_nodes) = &x_nodes {
                    let mut cur = point_geometry(basis, x_nodes)
                        .map_err(|_| StepError::SingularGeometry { element: e })?;
                    cur.set_reference(&qp.ref_geom);
                    let ops = covariant_ops(&cur, basis);
                    let mut phi = 0.0;
                    let mut dphi = [0.0; 2];
                    let mut lap = 0.0;
                    for l in 0..ne {
                        phi += basis.vals[l] * phi_e[l];
                        dphi[0] += basis.d1[0][l] * phi_e[l];
                        dphi[1] += basis.d1[1][l] * phi_e[l];
                        lap += ops.laplace[l] * phi_e[l];
                    }
                    PointState::from_geometry(&qp.ref_geom, &cur, phi, dphi, lap, [[0.0; 2]; 2])
                } else {
                    let ops = qp.ref_ops.as_ref().unwrap();
                    let mut phi = 0.0;
                    let mut dphi = [0.0; 2];
                    let mut lap = 0.0;
                    for l in 0..ne {
                        phi += basis.vals[l] * phi_e[l];
                        dphi[0] += basis.d1[0][l] * phi_e[l];
                        dphi[1] += basis.d1[1][l] * phi_e[l];
                        lap += ops.laplace[l] * phi_e[l];
                    }
                    PointState::from_geometry(
                        &qp.ref_geom,
                        &qp.ref_geom,
                        phi,
                        dphi,
                        lap,
                        [[0.0; 2]; 2],
                    )
                };
                let en = material::energy_density(&st, &self.params).map_err(|err| {
                    StepError::PhiOutOfRange {
                        element: e,
                        phi: err.0,
                    }
                })?;
                rep.psi_el += qp.weight * en.elastic();
                rep.psi_ch += qp.weight * en.cahn_hilliard();
                rep.mass += qp.weight * self.params.rho_hat * st.phi;
                rep.phi_min = rep.phi_min.min(st.phi);
                rep.phi_max = rep.phi_max.max(st.phi);
            }
        }
        rep.psi_total = rep.psi_el + rep.psi_ch;
        Ok(rep)
    }
}

impl GlobalSystem {
    fn build(mesh: &MeshData, dofs: &DofMap) -> Self {
        let n = dofs.n_total();
        let n_elems = mesh.space.n_elems();
        // per-element free dof lists (mech triplets then phase)
        let mut elem_dofs = Vec::with_capacity(n_elems);
        for el in &mesh.space.elements {
            let mut list = Vec::new();
            if !dofs.rigid {
                for &g in &el.indices {
                    for i in 0..3 {
                        list.push(dofs.mech(g, i));
                    }
                }
            }
            for &g in &el.indices {
                list.push(Some(dofs.phase(g)));
            }
            elem_dofs.push(list);
        }
        // column-wise row sets
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for list in &elem_dofs {
            for &c in list {
                let Some(c) = c else { continue };
                for &r in list {
                    if let Some(r) = r {
                        cols[c].push(r);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0usize);
        let mut row_idx = Vec::new();
        for col in cols.iter_mut() {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        // per-element slots in (col-major local) iteration order
        let mut slots = Vec::with_capacity(n_elems);
        for list in &elem_dofs {
            let nd = list.len();
            let mut s = Vec::with_capacity(nd * nd);
            for &c in list {
                for &r in list {
                    match (c, r) {
                        (Some(c), Some(r)) => {
                            let lo = col_ptr[c];
                            let hi = col_ptr[c + 1];
                            let k = row_idx[lo..hi]
                                .binary_search(&r)
                                .expect("row present in pattern");
                            s.push(lo + k);
                        }
                        _ => s.push(usize::MAX),
                    }
                }
            }
            slots.push(s);
        }
        let values = vec![0.0; row_idx.len()];
        GlobalSystem {
            n,
            col_ptr,
            row_idx,
            values,
            slots,
            symbolic_lu: std::sync::OnceLock::new(),
        }
    }

    /// Newton update: solves J d = -r, reusing the symbolic factorization
    /// across iterations.
    pub fn solve(&self, residual: &DVector<f64>) -> std::result::Result<DVector<f64>, StepError> {
        use faer::prelude::*;
        let symbolic = faer::sparse::SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let mat = faer::sparse::SparseColMatRef::new(symbolic, &self.values);
        let sym_lu = match self.symbolic_lu.get() {
            Some(s) => s.clone(),
            None => {
                let s = faer::sparse::linalg::solvers::SymbolicLu::try_new(symbolic)
                    .map_err(|e| StepError::SingularSystem(format!("{e:?}")))?;
                let _ = self.symbolic_lu.set(s.clone());
                s
            }
        };
        let lu = faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(sym_lu, mat)
            .map_err(|e| StepError::SingularSystem(format!("{e:?}")))?;
        let rhs = faer::Mat::from_fn(self.n, 1, |i, _| -residual[i]);
        let sol = lu.solve(&rhs);
        Ok(DVector::from_fn(self.n, |i, _| sol[(i, 0)]))
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Iterates the stored entries of one column as (row, value).
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[c];
        let hi = self.col_ptr[c + 1];
        self.row_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&r, &v)| (r, v))
    }
}

#[cfg(test)]
mod tests {
    use super::fd::{dense_columns, fd_tangent_oracle, FdVariable, OwnedState};
    use super::*;
    use crate::spline::{build_structured_patch, PatchSpec};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Curved open 2x2 quadratic patch: a gently warped sheet.
    fn curved_mesh() -> MeshData {
        let space = build_structured_patch(&PatchSpec::open(2, 2, 2), None).unwrap();
        let patch = space.structured.unwrap();
        let mut nodes = Vec::new();
        for iv in 0..patch.n_v {
            for iu in 0..patch.n_u {
                let x = iu as f64 / (patch.n_u - 1) as f64;
                let y = iv as f64 / (patch.n_v - 1) as f64;
                let z = 0.25 * x * x + 0.15 * y * y - 0.2 * x * y;
                nodes.push(Vector3::new(x, y, z));
            }
        }
        MeshData::new(space, nodes, None, 1.0).unwrap()
    }

    fn random_owned_state(n: usize, rng: &mut ChaCha8Rng, amp: f64) -> OwnedState {
        let v3 = |rng: &mut ChaCha8Rng, s: f64| {
            Vector3::new(
                s * (rng.gen::<f64>() - 0.5),
                s * (rng.gen::<f64>() - 0.5),
                s * (rng.gen::<f64>() - 0.5),
            )
        };
        OwnedState {
            u: (0..n).map(|_| v3(rng, amp)).collect(),
            v: (0..n).map(|_| v3(rng, 0.3)).collect(),
            acc: (0..n).map(|_| v3(rng, 0.2)).collect(),
            phi: (0..n).map(|_| 0.35 + 0.25 * rng.gen::<f64>()).collect(),
            phidot: (0..n).map(|_| 0.2 * (rng.gen::<f64>() - 0.5)).collect(),
        }
    }

    fn block_errors(
        analytic: &nalgebra::DMatrix<f64>,
        oracle: &nalgebra::DMatrix<f64>,
        rows: std::ops::Range<usize>,
        cols: &[usize],
        col_filter: impl Fn(usize) -> bool,
    ) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &c) in cols.iter().enumerate() {
            if !col_filter(c) {
                continue;
            }
            for r in rows.clone() {
                let d = analytic[(r, k)] - oracle[(r, k)];
                num += d * d;
                den += oracle[(r, k)] * oracle[(r, k)];
            }
        }
        (num / den.max(1e-30)).sqrt()
    }

    #[test]
    fn analytic_tangent_matches_fd_oracle() {
        let mesh = curved_mesh();
        let n = mesh.n_nodes();
        // pin a few dofs so the Dirichlet elimination path is exercised
        let fixed = vec![(0usize, 0usize), (0, 1), (0, 2), (3, 2)];
        let dofs = DofMap::new(n, &fixed, false);
        let mut params = crate::material::MaterialParams::two_phase_defaults(0.075, 4.0);
        params.eta1 = 1.7 * params.eta0; // exercise the eta' coupling
        let mut asm = Assembler::new(mesh, params, dofs, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);

        for trial in 0..3 {
            let st = random_owned_state(n, &mut rng, 0.05);
            asm.residual_and_tangent(&st.as_full(), &TangentScales::spatial())
                .unwrap();
            let all: Vec<usize> = (0..asm.dofs.n_total()).collect();
            let analytic = dense_columns(&asm, &all);
            let oracle =
                fd_tangent_oracle(&asm, &st, &all, 1e-6, FdVariable::State).unwrap();
            let nm = asm.dofs.n_mech;
            let nt = asm.dofs.n_total();
            let e_xx = block_errors(&analytic, &oracle, 0..nm, &all, |c| c < nm);
            let e_xp = block_errors(&analytic, &oracle, 0..nm, &all, |c| c >= nm);
            let e_px = block_errors(&analytic, &oracle, nm..nt, &all, |c| c < nm);
            let e_pp = block_errors(&analytic, &oracle, nm..nt, &all, |c| c >= nm);
            assert!(e_xx < 1e-6, "trial {trial}: k_x error {e_xx}");
            assert!(e_xp < 1e-6, "trial {trial}: k_xphi error {e_xp}");
            assert!(e_px < 1e-6, "trial {trial}: k_phix error {e_px}");
            assert!(e_pp < 1e-6, "trial {trial}: k_phiphi error {e_pp}");

            // velocity derivative block
            let vel_scales = TangentScales {
                alpha_f: 0.0,
                c_v: 1.0,
                c_a: 0.0,
                c_phidot: 0.0,
            };
            asm.residual_and_tangent(&st.as_full(), &vel_scales).unwrap();
            let analytic_v = dense_columns(&asm, &all);
            let oracle_v =
                fd_tangent_oracle(&asm, &st, &all, 1e-6, FdVariable::Rate).unwrap();
            let e_v = block_errors(&analytic_v, &oracle_v, 0..nm, &all, |c| c < nm);
            assert!(e_v < 1e-6, "trial {trial}: k_v error {e_v}");
        }
    }

    #[test]
    fn zero_residual_at_stress_free_reference() {
        let mesh = curved_mesh();
        let n = mesh.n_nodes();
        let dofs = DofMap::new(n, &[], false);
        let params = crate::material::MaterialParams::two_phase_defaults(0.075, 4.0);
        let asm = Assembler::new(mesh, params, dofs, 0.0);
        let st = OwnedState {
            u: vec![Vector3::zeros(); n],
            v: vec![Vector3::zeros(); n],
            acc: vec![Vector3::zeros(); n],
            phi: vec![0.4; n],
            phidot: vec![0.0; n],
        };
        let r = asm.residual(&st.as_full()).unwrap();
        assert!(r.amax() < 1e-12, "residual {:.3e}", r.amax());
    }

    #[test]
    fn rigid_tangent_matches_fd_oracle() {
        let space = build_structured_patch(&PatchSpec::periodic(2, 4, 4), None).unwrap();
        let patch = space.structured.unwrap();
        let (mu, mv) = (4.0, 4.0);
        // flat periodic square: unwrapped per-element reference nodes
        let mut elem_ref = Vec::new();
        for ev in 0..4usize {
            for eu in 0..4usize {
                let mut nodes = Vec::new();
                for lv in 0..3usize {
                    for lu in 0..3usize {
                        let gu = (eu + lu) as f64 - 0.5; // Greville offset (1-p)/2
                        let gv = (ev + lv) as f64 - 0.5;
                        nodes.push(Vector3::new(gu / mu, gv / mv, 0.0));
                    }
                }
                elem_ref.push(nodes);
            }
        }
        let global = vec![Vector3::zeros(); patch.n_u * patch.n_v];
        let mesh = MeshData::new(space, global, Some(elem_ref), 1.0).unwrap();
        assert!((mesh.area - 1.0).abs() < 1e-12, "unit square area");
        let n = mesh.n_nodes();
        let dofs = DofMap::new(n, &[], true);
        let params = crate::material::MaterialParams::two_phase_defaults(1.0 / 1500.0, 1.0);
        let mut asm = Assembler::new(mesh, params, dofs, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let st = random_owned_state(n, &mut rng, 0.0);
        asm.residual_and_tangent(&st.as_full(), &TangentScales::spatial())
            .unwrap();
        let all: Vec<usize> = (0..asm.dofs.n_total()).collect();
        let analytic = dense_columns(&asm, &all);
        let oracle = fd_tangent_oracle(&asm, &st, &all, 1e-6, FdVariable::State).unwrap();
        let err = block_errors(&analytic, &oracle, 0..n, &all, |_| true);
        assert!(err < 1e-6, "rigid phase tangent error {err}");
    }

    #[test]
    fn flux_form_conserves_species_mass() {
        // sum of the internal phase residual vanishes on a periodic mesh
        let space = build_structured_patch(&PatchSpec::periodic(2, 5, 5), None).unwrap();
        let n = space.n_basis;
        let mut elem_ref = Vec::new();
        for ev in 0..5usize {
            for eu in 0..5usize {
                let mut nodes = Vec::new();
                for lv in 0..3usize {
                    for lu in 0..3usize {
                        nodes.push(Vector3::new(
                            ((eu + lu) as f64 - 0.5) / 5.0,
                            ((ev + lv) as f64 - 0.5) / 5.0,
                            0.0,
                        ));
                    }
                }
                elem_ref.push(nodes);
            }
        }
        let mesh = MeshData::new(space, vec![Vector3::zeros(); n], Some(elem_ref), 1.0).unwrap();
        let dofs = DofMap::new(n, &[], true);
        let params = crate::material::MaterialParams::two_phase_defaults(0.01, 1.0);
        let asm = Assembler::new(mesh, params, dofs, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut st = random_owned_state(n, &mut rng, 0.0);
        st.phidot.iter_mut().for_each(|v| *v = 0.0);
        let r = asm.residual(&st.as_full()).unwrap();
        let total: f64 = (0..n).map(|g| r[asm.dofs.phase(g)]).sum();
        assert!(total.abs() < 1e-10, "net phase flux {total:.3e}");
    }
}
