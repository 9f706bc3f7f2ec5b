//! Finite-difference tangent oracle: dense columns of the residual
//! Jacobian obtained by central differences of the assembled residual.
//! Used only for verification and as a slow fallback tangent.

use super::{Assembler, FullState};
use crate::error::StepError;
use nalgebra::{DMatrix, DVector, Vector3};

/// Which state variable a column differentiates against. Mechanical columns
/// perturb a position/velocity component; phase columns perturb a nodal phi
/// value or its rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdVariable {
    /// d residual / d (x, phi).
    State,
    /// d residual / d (v, phidot).
    Rate,
}

/// Owned copy of the full nodal state, used to apply perturbations.
#[derive(Clone)]
pub struct OwnedState {
    pub u: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub acc: Vec<Vector3<f64>>,
    pub phi: Vec<f64>,
    pub phidot: Vec<f64>,
}

impl OwnedState {
    pub fn as_full(&self) -> FullState<'_> {
        FullState {
            u: &self.u,
            v: &self.v,
            acc: &self.acc,
            phi: &self.phi,
            phidot: &self.phidot,
        }
    }
}

/// Central-difference columns d residual / d dof for the requested free
/// dofs, with step `h`.
pub fn fd_tangent_oracle(
    assembler: &Assembler,
    state: &OwnedState,
    cols: &[usize],
    h: f64,
    var: FdVariable,
) -> std::result::Result<DMatrix<f64>, StepError> {
    assert!(h > 0.0);
    let n = assembler.dofs.n_total();
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &dof) in cols.iter().enumerate() {
        let mut plus = state.clone();
        perturb(assembler, &mut plus, dof, h, var);
        let rp = assembler.residual(&plus.as_full())?;
        let mut minus = state.clone();
        perturb(assembler, &mut minus, dof, -h, var);
        let rm = assembler.residual(&minus.as_full())?;
        let col: DVector<f64> = (rp - rm) / (2.0 * h);
        out.set_column(k, &col);
    }
    Ok(out)
}

fn perturb(assembler: &Assembler, state: &mut OwnedState, dof: usize, h: f64, var: FdVariable) {
    let dofs = &assembler.dofs;
    if dof < dofs.n_mech {
        let (node, comp) = dofs.mech_node(dof);
        match var {
            FdVariable::State => state.u[node][comp] += h,
            FdVariable::Rate => state.v[node][comp] += h,
        }
    } else {
        let node = dof - dofs.n_mech;
        match var {
            FdVariable::State => state.phi[node] += h,
            FdVariable::Rate => state.phidot[node] += h,
        }
    }
}

/// Extracts the same columns from the assembled sparse tangent for
/// comparison against the oracle.
pub fn dense_columns(assembler: &Assembler, cols: &[usize]) -> DMatrix<f64> {
    let n = assembler.dofs.n_total();
    let sys = &assembler.system;
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        for (row, val) in sys.column(c) {
            out[(row, k)] = val;
        }
    }
    out
}
