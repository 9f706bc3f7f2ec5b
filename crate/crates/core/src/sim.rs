//! Simulation driver: couples the finite element assembler to the time
//! integrator, maintains the free-dof state vectors and produces the
//! per-step diagnostics consumed by the output layer.

use crate::assembly::fd::{fd_tangent_oracle, FdVariable, OwnedState};
use crate::assembly::{Assembler, EnergyReport, TangentScales};
use crate::error::StepError;
use crate::timeint::{self, CoupledSystem, EvalPoint, IntegratorConfig, SimState, StepReport};
use crate::Result;
use nalgebra::{DVector, Vector3};

/// Finite element system exposed to the integrator. Mechanical unknowns
/// are the free displacement dofs; the fixed dofs stay at zero
/// displacement throughout.
pub struct FeSystem {
    pub asm: Assembler,
    /// Solve with finite-difference tangents instead of the analytic ones
    /// (slow correctness fallback for small meshes).
    pub fd_tangent: bool,
    ref_free: DVector<f64>,
}

impl FeSystem {
    pub fn new(asm: Assembler, fd_tangent: bool) -> Self {
        let n_mech = asm.dofs.n_mech;
        let mut ref_free = DVector::zeros(n_mech);
        for d in 0..n_mech {
            let (node, comp) = asm.dofs.mech_node(d);
            ref_free[d] = asm.mesh.ref_nodes[node][comp];
        }
        FeSystem {
            asm,
            fd_tangent,
            ref_free,
        }
    }

    /// Expands free-dof vectors into full nodal fields.
    pub fn expand(&self, p: &EvalPoint) -> OwnedState {
        let n = self.asm.mesh.n_nodes();
        let mut st = OwnedState {
            u: vec![Vector3::zeros(); n],
            v: vec![Vector3::zeros(); n],
            acc: vec![Vector3::zeros(); n],
            phi: vec![0.0; n],
            phidot: vec![0.0; n],
        };
        for d in 0..self.asm.dofs.n_mech {
            let (node, comp) = self.asm.dofs.mech_node(d);
            st.u[node][comp] = p.u[d];
            st.v[node][comp] = p.v[d];
            st.acc[node][comp] = p.acc[d];
        }
        for g in 0..n {
            st.phi[g] = p.phi[g];
            st.phidot[g] = p.phidot[g];
        }
        st
    }

    pub fn expand_displacement(&self, u: &DVector<f64>) -> Vec<Vector3<f64>> {
        let n = self.asm.mesh.n_nodes();
        let mut full = vec![Vector3::zeros(); n];
        for d in 0..self.asm.dofs.n_mech {
            let (node, comp) = self.asm.dofs.mech_node(d);
            full[node][comp] = u[d];
        }
        full
    }

    /// Assembled global mechanical mass entry over free dofs; only used by
    /// the slow finite-difference fallback on small meshes.
    fn mass_entry(&self, row: usize, col: usize) -> f64 {
        let (rn, rc) = self.asm.dofs.mech_node(row);
        let (cn, cc) = self.asm.dofs.mech_node(col);
        if rc != cc {
            return 0.0;
        }
        let mut m = 0.0;
        for (e, el) in self.asm.mesh.space.elements.iter().enumerate() {
            let (Some(la), Some(lb)) = (
                el.indices.iter().position(|&g| g == rn),
                el.indices.iter().position(|&g| g == cn),
            ) else {
                continue;
            };
            m += self.asm.mesh.mass_phase[e][(la, lb)];
        }
        m
    }
}

impl CoupledSystem for FeSystem {
    fn n_mech(&self) -> usize {
        self.asm.dofs.n_mech
    }

    fn n_phase(&self) -> usize {
        self.asm.dofs.n_phase
    }

    fn residual(&mut self, p: &EvalPoint) -> std::result::Result<DVector<f64>, StepError> {
        let full = self.expand(p);
        self.asm.residual(&full.as_full())
    }

    fn solve_step(
        &mut self,
        p: &EvalPoint,
        sc: &TangentScales,
    ) -> std::result::Result<(DVector<f64>, DVector<f64>), StepError> {
        let full = self.expand(p);
        if self.fd_tangent {
            let r = self.asm.residual(&full.as_full())?;
            let n = self.asm.dofs.n_total();
            let nm = self.asm.dofs.n_mech;
            let cols: Vec<usize> = (0..n).collect();
            let js = fd_tangent_oracle(&self.asm, &full, &cols, 1e-7, FdVariable::State)?;
            let jr = fd_tangent_oracle(&self.asm, &full, &cols, 1e-7, FdVariable::Rate)?;
            let mut j = nalgebra::DMatrix::zeros(n, n);
            for c in 0..n {
                let rate_scale = if c < nm { sc.c_v } else { sc.c_phidot };
                for rr in 0..n {
                    let mut v = sc.alpha_f * js[(rr, c)] + rate_scale * jr[(rr, c)];
                    if c < nm && rr < nm {
                        // the acceleration (mass) term is not visible to the
                        // velocity differences; add it directly
                        v += sc.c_a * self.mass_entry(rr, c);
                    }
                    j[(rr, c)] = v;
                }
            }
            let lu = j.lu();
            let delta = lu
                .solve(&(-&r))
                .ok_or_else(|| StepError::SingularSystem("dense LU failed".into()))?;
            return Ok((r, delta));
        }
        let r = self.asm.residual_and_tangent(&full.as_full(), sc)?;
        let delta = self.asm.solve(&r)?;
        Ok((r, delta))
    }

    fn position_norm(&self, u: &DVector<f64>) -> f64 {
        (&self.ref_free + u).norm()
    }

    fn energy_report(
        &mut self,
        u: &DVector<f64>,
        phi: &DVector<f64>,
    ) -> std::result::Result<Option<EnergyReport>, StepError> {
        let point = EvalPoint {
            u: u.clone(),
            v: DVector::zeros(u.len()),
            acc: DVector::zeros(u.len()),
            phi: phi.clone(),
            phidot: DVector::zeros(phi.len()),
        };
        let full = self.expand(&point);
        Ok(Some(self.asm.report(&full.as_full())?))
    }
}

/// A time-marching simulation over one scenario.
pub struct Simulation {
    pub system: FeSystem,
    pub state: SimState,
    pub config: IntegratorConfig,
}

impl Simulation {
    /// Builds the initial state: zero displacement and velocity, the given
    /// initial order parameter, and consistent initial rates from the mass
    /// matrix solves M acc0 = -(f_int - f_ext), Mbar phidot0 = -fbar_int.
    pub fn new(asm: Assembler, config: IntegratorConfig, phi0: DVector<f64>) -> Result<Self> {
        config.validate()?;
        let mut system = FeSystem::new(asm, false);
        let n_mech = system.n_mech();
        let n_phase = system.n_phase();
        let mut state = SimState::new(n_mech, n_phase, config.dt_initial);
        state.phi = phi0;

        let point = EvalPoint {
            u: state.u.clone(),
            v: state.v.clone(),
            acc: state.acc.clone(),
            phi: state.phi.clone(),
            phidot: state.phidot.clone(),
        };
        let sc = TangentScales {
            alpha_f: 0.0,
            c_v: 0.0,
            c_a: 1.0,
            c_phidot: 1.0,
        };
        let (_, rates) = system
            .solve_step(&point, &sc)
            .map_err(|e| crate::Error::Abort {
                t: 0.0,
                msg: format!("consistent initialization failed: {e}"),
            })?;
        state.acc = rates.rows(0, n_mech).into_owned();
        state.phidot = rates.rows(n_mech, n_phase).into_owned();

        Ok(Simulation {
            system,
            state,
            config,
        })
    }

    /// Advances one accepted step.
    pub fn step(&mut self) -> Result<StepReport> {
        timeint::advance(&mut self.system, &mut self.state, &self.config)
    }

    /// Euclidean norms of the velocity and rate vectors (steady-state
    /// detection).
    pub fn rate_norms(&self) -> (f64, f64) {
        (self.state.v.norm(), self.state.phidot.norm())
    }

    /// Full nodal state of the committed configuration.
    pub fn full_state(&self) -> OwnedState {
        let point = EvalPoint {
            u: self.state.u.clone(),
            v: self.state.v.clone(),
            acc: self.state.acc.clone(),
            phi: self.state.phi.clone(),
            phidot: self.state.phidot.clone(),
        };
        self.system.expand(&point)
    }

    pub fn energy(&mut self) -> Result<EnergyReport> {
        let u = self.state.u.clone();
        let phi = self.state.phi.clone();
        self.system
            .energy_report(&u, &phi)
            .map(|r| r.expect("finite element diagnostics"))
            .map_err(|e| crate::Error::Abort {
                t: self.state.t,
                msg: format!("{e}"),
            })
    }
}
