//! Monolithic implicit time integration of the coupled second-order
//! (mechanics) / first-order (phase) system: generalized-alpha intermediate
//! states, Newton-Raphson corrector, local truncation-error estimation and
//! adaptive step-size control.

use crate::assembly::{EnergyReport, TangentScales};
use crate::error::StepError;
use crate::{Error, Result};
use nalgebra::DVector;

/// Generalized-alpha parameters derived from the spectral radius at
/// infinite time step.
#[derive(Debug, Clone, Copy)]
pub struct AlphaParams {
    pub rho_inf: f64,
    pub alpha_f: f64,
    pub alpha_m: f64,
    pub gamma: f64,
    pub beta: f64,
}

/// alpha_f = 1/(1+rho), alpha_m = (2-rho)/(1+rho), gamma = 1/2 + am - af,
/// beta = (1 + am - af)^2 / 4.
pub fn alpha_params(rho_inf: f64) -> Result<AlphaParams> {
    if !(0.0..=1.0).contains(&rho_inf) {
        return Err(Error::Config {
            line: None,
            msg: format!("spectral radius must lie in [0,1], got {rho_inf}"),
        });
    }
    let alpha_f = 1.0 / (1.0 + rho_inf);
    let alpha_m = (2.0 - rho_inf) / (1.0 + rho_inf);
    let gamma = 0.5 + alpha_m - alpha_f;
    let beta = 0.25 * (1.0 + alpha_m - alpha_f) * (1.0 + alpha_m - alpha_f);
    Ok(AlphaParams {
        rho_inf,
        alpha_f,
        alpha_m,
        gamma,
        beta,
    })
}

/// Coefficients of the local truncation-error estimates.
#[derive(Debug, Clone, Copy)]
pub struct ErrorConstants {
    pub c1d: f64,
    pub c2d: f64,
    pub c1p: f64,
    pub c2p: f64,
}

pub fn error_constants(a: &AlphaParams) -> ErrorConstants {
    let rho = a.rho_inf;
    let one_m_af = 1.0 - a.alpha_f;
    ErrorConstants {
        c1d: a.beta - (1.0 - a.alpha_m) / (6.0 * one_m_af),
        c2d: (1.0 + rho) * (1.0 - rho) * (1.0 / 6.0 - one_m_af / 2.0),
        c1p: a.gamma - (1.0 - a.alpha_m) / (2.0 * one_m_af),
        c2p: (1.0 + rho) * (1.0 - rho) * (a.alpha_f - 0.5),
    }
}

/// Integrator settings; the documented defaults follow the values used for
/// all bundled scenarios.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rho_inf: f64,
    /// Relative Newton tolerance on both residual blocks.
    pub tol_newton: f64,
    pub max_newton: usize,
    /// Step-controller targets.
    pub tol_p: f64,
    pub tol_d: f64,
    /// Rejection threshold on either normalized error.
    pub reject_threshold: f64,
    /// Safety factor in the step-size update.
    pub safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_initial: f64,
    /// Retry limit per step (rejections plus Newton failures).
    pub max_retries: usize,
    /// Absolute residual floor: below this a block counts as converged.
    pub residual_floor: f64,
}

impl IntegratorConfig {
    pub fn standard(dt_initial: f64, dt_max: f64) -> Self {
        IntegratorConfig {
            rho_inf: 0.5,
            tol_newton: 1e-4,
            max_newton: 12,
            tol_p: 7.5e-5,
            tol_d: 7.5e-5,
            reject_threshold: 1e-4,
            safety: 0.8,
            dt_min: 1e-12,
            dt_max,
            dt_initial,
            max_retries: 8,
            residual_floor: 1e-14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_inf > 0.0 && self.rho_inf <= 1.0) {
            return Err(Error::Config {
                line: None,
                msg: "adaptive stepping needs 0 < rho_inf <= 1".into(),
            });
        }
        if self.dt_initial <= 0.0 || self.dt_max < self.dt_initial || self.dt_min <= 0.0 {
            return Err(Error::Config {
                line: None,
                msg: "need 0 < dt_min <= dt_initial <= dt_max".into(),
            });
        }
        Ok(())
    }
}

/// Complete time-dependent state of a simulation over the free dofs.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    /// Proposal for the next step size.
    pub dt: f64,
    /// Number of accepted steps.
    pub step: usize,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub acc: DVector<f64>,
    pub phi: DVector<f64>,
    pub phidot: DVector<f64>,
    /// Geometric accumulation of acceleration jumps (error estimator).
    pub hist_d: DVector<f64>,
    /// Geometric accumulation of phase-rate jumps.
    pub hist_p: DVector<f64>,
}

impl SimState {
    pub fn new(n_mech: usize, n_phase: usize, dt_initial: f64) -> Self {
        SimState {
            t: 0.0,
            dt: dt_initial,
            step: 0,
            u: DVector::zeros(n_mech),
            v: DVector::zeros(n_mech),
            acc: DVector::zeros(n_mech),
            phi: DVector::zeros(n_phase),
            phidot: DVector::zeros(n_phase),
            hist_d: DVector::zeros(n_mech),
            hist_p: DVector::zeros(n_phase),
        }
    }
}

/// Evaluation point handed to the system: generalized-alpha intermediate
/// values of all fields.
pub struct EvalPoint {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub acc: DVector<f64>,
    pub phi: DVector<f64>,
    pub phidot: DVector<f64>,
}

/// The coupled residual/tangent provider driven by the integrator.
pub trait CoupledSystem {
    fn n_mech(&self) -> usize;
    fn n_phase(&self) -> usize;

    /// Residual at an evaluation point (mechanical block first).
    fn residual(&mut self, p: &EvalPoint) -> std::result::Result<DVector<f64>, StepError>;

    /// Residual and Newton update -J^{-1} r with the given block scalings.
    fn solve_step(
        &mut self,
        p: &EvalPoint,
        sc: &TangentScales,
    ) -> std::result::Result<(DVector<f64>, DVector<f64>), StepError>;

    /// Norm of the position vector used to normalize the mechanical error.
    fn position_norm(&self, u: &DVector<f64>) -> f64 {
        u.norm()
    }

    /// Integrated diagnostics of a committed state (optional).
    fn energy_report(
        &mut self,
        _u: &DVector<f64>,
        _phi: &DVector<f64>,
    ) -> std::result::Result<Option<EnergyReport>, StepError> {
        Ok(None)
    }
}

/// Which error estimate limited the accepted step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Phase,
    Mech,
    Unlimited,
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub accepted: bool,
    pub newton_iters: usize,
    pub err_p: f64,
    pub err_d: f64,
    /// Step size actually taken.
    pub dt_used: f64,
    /// Controller proposal for the next step.
    pub dt_next: f64,
    pub retries: usize,
    pub binding: Binding,
    pub energy: Option<EnergyReport>,
}

/// Initial Newton guess for the step from t_n with step dt: same-velocity
/// predictor for the mechanics, constant-phi predictor for the phase field.
pub fn predict(state: &SimState, dt: f64, a: &AlphaParams) -> EvalPoint {
    let g = (a.gamma - 1.0) / a.gamma;
    let acc0 = &state.acc * g;
    let u0 = &state.u
        + dt * &state.v
        + (0.5 - a.beta) * dt * dt * &state.acc
        + a.beta * dt * dt * &acc0;
    let phidot0 = &state.phidot * g;
    EvalPoint {
        u: u0,
        v: state.v.clone(),
        acc: acc0,
        phi: state.phi.clone(),
        phidot: phidot0,
    }
}

fn intermediate(state: &SimState, cand: &EvalPoint, a: &AlphaParams) -> EvalPoint {
    let af = a.alpha_f;
    let am = a.alpha_m;
    EvalPoint {
        u: (1.0 - af) * &state.u + af * &cand.u,
        v: (1.0 - af) * &state.v + af * &cand.v,
        acc: (1.0 - am) * &state.acc + am * &cand.acc,
        phi: (1.0 - af) * &state.phi + af * &cand.phi,
        phidot: (1.0 - am) * &state.phidot + am * &cand.phidot,
    }
}

struct Candidate {
    point: EvalPoint,
    iters: usize,
}

/// Newton-Raphson corrector for one trial step.
fn newton_solve<S: CoupledSystem>(
    sys: &mut S,
    state: &SimState,
    dt: f64,
    a: &AlphaParams,
    cfg: &IntegratorConfig,
) -> std::result::Result<Candidate, StepError> {
    let n_mech = sys.n_mech();
    let scales = TangentScales {
        alpha_f: a.alpha_f,
        c_v: a.alpha_f * a.gamma / (a.beta * dt),
        c_a: a.alpha_m / (a.beta * dt * dt),
        c_phidot: a.alpha_m / (a.gamma * dt),
    };
    let mut cand = predict(state, dt, a);
    let mut norm0_m = 0.0;
    let mut norm0_p = 0.0;
    let mut prev = f64::INFINITY;
    let mut growth = 0usize;
    let mut iters = 0usize;
    loop {
        let point = intermediate(state, &cand, a);
        let (r, delta) = sys.solve_step(&point, &scales)?;
        let rm = r.rows(0, n_mech).norm();
        let rp = r.rows(n_mech, r.len() - n_mech).norm();
        if iters == 0 {
            norm0_m = rm.max(cfg.residual_floor);
            norm0_p = rp.max(cfg.residual_floor);
        }
        let ratio = (rm / norm0_m).max(rp / norm0_p);
        let quiescent = rm <= cfg.residual_floor && rp <= cfg.residual_floor;
        if (iters > 0 && ratio <= cfg.tol_newton) || quiescent {
            return Ok(Candidate { point: cand, iters });
        }
        if iters >= cfg.max_newton {
            return Err(StepError::NewtonDiverged(format!(
                "no convergence in {iters} iterations (ratio {ratio:.3e})"
            )));
        }
        let rmax = rm.max(rp);
        if rmax > prev {
            growth += 1;
            if growth >= 3 {
                return Err(StepError::NewtonDiverged(
                    "residual grew for 3 consecutive iterations".into(),
                ));
            }
        } else {
            growth = 0;
        }
        prev = rmax;
        // consistent update of all rate quantities
        let du = delta.rows(0, n_mech).into_owned();
        let dphi = delta.rows(n_mech, delta.len() - n_mech).into_owned();
        cand.u += &du;
        cand.v += &du * (a.gamma / (a.beta * dt));
        cand.acc += &du * (1.0 / (a.beta * dt * dt));
        cand.phi += &dphi;
        cand.phidot += &dphi * (1.0 / (a.gamma * dt));
        iters += 1;
    }
}

/// Normalized local truncation errors of a candidate step.
pub fn truncation_errors<S: CoupledSystem>(
    sys: &S,
    state: &SimState,
    cand_acc: &DVector<f64>,
    cand_phidot: &DVector<f64>,
    dt: f64,
    c: &ErrorConstants,
) -> (f64, f64) {
    let dphidot = cand_phidot - &state.phidot;
    let e_p = dt * (c.c1p * &dphidot + c.c2p * &state.hist_p);
    let phi_norm = state.phi.norm().max(1e-30);
    let err_p = e_p.norm() / phi_norm;
    let err_d = if state.u.is_empty() {
        0.0
    } else {
        let dacc = cand_acc - &state.acc;
        let e_d = dt * dt * (c.c1d * &dacc + c.c2d * &state.hist_d);
        let x_norm = sys.position_norm(&state.u).max(1e-30);
        e_d.norm() / x_norm
    };
    (err_p, err_d)
}

/// Step-controller decision per the normalized error estimates.
#[derive(Debug, Clone, Copy)]
pub struct ControlDecision {
    pub accept: bool,
    pub factor: f64,
    pub dt_next: f64,
    pub binding: Binding,
}

pub fn control_step(dt: f64, err_p: f64, err_d: f64, cfg: &IntegratorConfig) -> ControlDecision {
    let accept = err_p <= cfg.reject_threshold && err_d <= cfg.reject_threshold;
    let fp = if err_p > 0.0 {
        (cfg.tol_p / err_p).sqrt()
    } else {
        f64::INFINITY
    };
    let fd = if err_d > 0.0 {
        (cfg.tol_d / err_d).sqrt()
    } else {
        f64::INFINITY
    };
    let binding = if fp.is_infinite() && fd.is_infinite() {
        Binding::Unlimited
    } else if fp <= fd {
        Binding::Phase
    } else {
        Binding::Mech
    };
    let factor = cfg.safety * fp.min(fd);
    let dt_next = (dt * factor).clamp(cfg.dt_min, cfg.dt_max);
    ControlDecision {
        accept,
        factor,
        dt_next,
        binding,
    }
}

/// One adaptive step: predict, correct, estimate, accept or retry.
pub fn advance<S: CoupledSystem>(
    sys: &mut S,
    state: &mut SimState,
    cfg: &IntegratorConfig,
) -> Result<StepReport> {
    let a = alpha_params(cfg.rho_inf)?;
    let c = error_constants(&a);
    let mut dt = state.dt.clamp(cfg.dt_min, cfg.dt_max);
    for retry in 0..=cfg.max_retries {
        if dt < cfg.dt_min || !dt.is_finite() {
            break;
        }
        match newton_solve(sys, state, dt, &a, cfg) {
            Err(e) => {
                if retry == cfg.max_retries {
                    return Err(Error::Abort {
                        t: state.t,
                        msg: format!("step failed after {retry} retries: {e}"),
                    });
                }
                dt *= 0.5;
            }
            Ok(cand) => {
                let (err_p, err_d) =
                    truncation_errors(sys, state, &cand.point.acc, &cand.point.phidot, dt, &c);
                let ctl = control_step(dt, err_p, err_d, cfg);
                if !ctl.accept {
                    if retry == cfg.max_retries {
                        return Err(Error::Abort {
                            t: state.t,
                            msg: format!(
                                "step rejected after {retry} retries (err_p {err_p:.3e}, err_d {err_d:.3e})"
                            ),
                        });
                    }
                    dt *= ctl.factor.max(0.1);
                    continue;
                }
                // accept: update histories with the same geometric recurrence
                // the explicit jump sums satisfy
                let rho = a.rho_inf;
                state.hist_p = (&cand.point.phidot - &state.phidot) - rho * &state.hist_p;
                if !state.u.is_empty() {
                    state.hist_d = (&cand.point.acc - &state.acc) - rho * &state.hist_d;
                }
                state.u = cand.point.u;
                state.v = cand.point.v;
                state.acc = cand.point.acc;
                state.phi = cand.point.phi;
                state.phidot = cand.point.phidot;
                state.t += dt;
                state.step += 1;
                state.dt = ctl.dt_next;
                let energy =
                    sys.energy_report(&state.u, &state.phi)
                        .map_err(|e| Error::Abort {
                            t: state.t,
                            msg: format!("diagnostics failed after acceptance: {e}"),
                        })?;
                return Ok(StepReport {
                    accepted: true,
                    newton_iters: cand.iters,
                    err_p,
                    err_d,
                    dt_used: dt,
                    dt_next: ctl.dt_next,
                    retries: retry,
                    binding: ctl.binding,
                    energy,
                });
            }
        }
    }
    Err(Error::Abort {
        t: state.t,
        msg: format!(
            "time step underflow (dt = {dt:.3e} < dt_min = {:.3e})",
            cfg.dt_min
        ),
    })
}
