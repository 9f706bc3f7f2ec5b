//! Constitutive evaluation in dimensionless form: mixture rules, degenerate
//! mobility, chemical potentials, membrane/bending/viscous/concentration-
//! gradient stresses and their derivatives with respect to the order
//! parameter.
//!
//! All quantities use the normalization with unit length, time and energy
//! scales; the mixing energy constants are N omega (default 1) and
//! N k_B T (default 1/3, below the critical value N omega / 2).

use crate::geometry::SurfacePointGeometry;

/// Evaluation is restricted to phi inside (eps, 1 - eps); excursions are
/// reported so the time integrator can reject the step.
pub const PHI_GUARD: f64 = 1e-9;

/// The order parameter left its admissible open interval.
#[derive(Debug, Clone, Copy)]
pub struct DomainViolation(pub f64);

/// Dimensionless constitutive constants for the two-phase mixture.
#[derive(Debug, Clone)]
pub struct MaterialParams {
    /// 2D bulk moduli of the pure phases.
    pub k0: f64,
    pub k1: f64,
    /// 2D shear moduli.
    pub g0: f64,
    pub g1: f64,
    /// Bending moduli.
    pub c0: f64,
    pub c1: f64,
    /// Surface shear viscosities.
    pub eta0: f64,
    pub eta1: f64,
    /// Mixture interpolation shift.
    pub rho_sh: f64,
    /// Mobility constant D.
    pub mobility_d: f64,
    /// Interface parameter lambda (squared interface length).
    pub lambda: f64,
    /// Mixing energy scale N omega.
    pub n_omega: f64,
    /// Thermal energy N k_B T; phase separation requires < n_omega / 2.
    pub n_kb_t: f64,
    /// Reference areal density.
    pub rho_hat: f64,
}

impl MaterialParams {
    /// Standard two-phase parameter set: phase 0 stiff, phase 1 soft, equal
    /// viscosities, expressed through E = 1 and nu = 0.3.
    pub fn two_phase_defaults(lambda: f64, mobility_d: f64) -> Self {
        let e = 1.0;
        let nu = 0.3;
        let k_base = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let g_base = e / (2.0 * (1.0 + nu));
        let k0 = 1.25 * k_base;
        MaterialParams {
            k0,
            k1: 0.0375 * k_base,
            g0: 6.25 * g_base,
            g1: 0.375 * g_base,
            c0: 0.01 * e,
            c1: 0.0001875 * e,
            eta0: 1.5 * k0,
            eta1: 1.5 * k0,
            rho_sh: 1.25,
            mobility_d,
            lambda,
            n_omega: 1.0,
            n_kb_t: 1.0 / 3.0,
            rho_hat: 1.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let nonneg = [
            self.k0, self.k1, self.g0, self.g1, self.c0, self.c1, self.eta0, self.eta1,
            self.mobility_d,
        ];
        if nonneg.iter().any(|&v| v < 0.0) {
            return Err(crate::Error::Config {
                line: None,
                msg: "moduli, viscosities and mobility must be non-negative".into(),
            });
        }
        if !(self.lambda > 0.0) {
            return Err(crate::Error::Config {
                line: None,
                msg: "interface parameter lambda must be positive".into(),
            });
        }
        if !(self.n_kb_t > 0.0 && self.n_kb_t < 0.5 * self.n_omega) {
            return Err(crate::Error::Config {
                line: None,
                msg: format!(
                    "need 0 < N kB T < N omega / 2 for phase separation (got {} vs {})",
                    self.n_kb_t,
                    0.5 * self.n_omega
                ),
            });
        }
        if !(self.rho_hat > 0.0) {
            return Err(crate::Error::Config {
                line: None,
                msg: "reference density must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Kinematic state of one evaluation point: reference and current metric
/// data plus the local field values. This is the single input to every
/// constitutive function, which keeps finite-difference checks direct.
#[derive(Debug, Clone)]
pub struct PointState {
    /// Inverse reference metric A^ab.
    pub ref_inv: [[f64; 2]; 2],
    /// det(A_ab).
    pub ref_det: f64,
    /// Reference curvature B_ab.
    pub ref_curv: [[f64; 2]; 2],
    /// Current metric a_ab and inverse.
    pub met: [[f64; 2]; 2],
    pub met_inv: [[f64; 2]; 2],
    /// Current curvature b_ab.
    pub curv: [[f64; 2]; 2],
    /// Area stretch J.
    pub stretch: f64,
    /// First invariant I1 = A^ab a_ab.
    pub i1: f64,
    pub phi: f64,
    /// Covariant gradient components phi_,a.
    pub dphi: [f64; 2],
    /// Surface Laplacian of phi.
    pub lap_phi: f64,
    /// Contravariant metric rate adot^ab = -a^ag adot_gd a^db.
    pub rate_up: [[f64; 2]; 2],
}

impl PointState {
    /// Assembles the state from reference/current point geometries and
    /// local field values. `cur` must already carry J and I1 relative to
    /// `reference`.
    pub fn from_geometry(
        reference: &SurfacePointGeometry,
        cur: &SurfacePointGeometry,
        phi: f64,
        dphi: [f64; 2],
        lap_phi: f64,
        rate_up: [[f64; 2]; 2],
    ) -> Self {
        PointState {
            ref_inv: reference.met_inv,
            ref_det: reference.det_met,
            ref_curv: reference.curv,
            met: cur.met,
            met_inv: cur.met_inv,
            curv: cur.curv,
            stretch: cur.stretch,
            i1: cur.i1,
            phi,
            dphi,
            lap_phi,
            rate_up,
        }
    }

    /// Recomputes the dependent quantities (inverse metric, J, I1) after
    /// editing `met`; used by finite-difference probes.
    pub fn refresh_metric(&mut self) {
        let det = self.met[0][0] * self.met[1][1] - self.met[0][1] * self.met[1][0];
        self.met_inv = [
            [self.met[1][1] / det, -self.met[0][1] / det],
            [-self.met[1][0] / det, self.met[0][0] / det],
        ];
        self.stretch = (det / self.ref_det).sqrt();
        self.i1 = self.ref_inv[0][0] * self.met[0][0]
            + self.ref_inv[1][1] * self.met[1][1]
            + 2.0 * self.ref_inv[0][1] * self.met[0][1];
    }

    /// Contravariant gradient components g^a = a^ab phi_,b.
    fn grad_up(&self) -> [f64; 2] {
        [
            self.met_inv[0][0] * self.dphi[0] + self.met_inv[0][1] * self.dphi[1],
            self.met_inv[1][0] * self.dphi[0] + self.met_inv[1][1] * self.dphi[1],
        ]
    }

    /// |grad_s phi|^2 = a^ab phi_,a phi_,b.
    fn grad_sq(&self) -> f64 {
        let g = self.grad_up();
        g[0] * self.dphi[0] + g[1] * self.dphi[1]
    }

    /// Mixed bending difference (b0 - B)^ab = A^ag (b - B)_gd A^bd.
    fn bend_diff_up(&self) -> [[f64; 2]; 2] {
        let mut d = [[0.0; 2]; 2];
        for al in 0..2 {
            for be in 0..2 {
                let mut s = 0.0;
                for g in 0..2 {
                    for de in 0..2 {
                        s += self.ref_inv[al][g]
                            * (self.curv[g][de] - self.ref_curv[g][de])
                            * self.ref_inv[de][be];
                    }
                }
                d[al][be] = s;
            }
        }
        d
    }

    /// Scalar (b - B)_ab (b0 - B)^ab.
    fn bend_scalar(&self) -> f64 {
        let up = self.bend_diff_up();
        let mut s = 0.0;
        for al in 0..2 {
            for be in 0..2 {
                s += (self.curv[al][be] - self.ref_curv[al][be]) * up[al][be];
            }
        }
        s
    }
}

fn check_phi(phi: f64) -> Result<(), DomainViolation> {
    if phi > PHI_GUARD && phi < 1.0 - PHI_GUARD {
        Ok(())
    } else {
        Err(DomainViolation(phi))
    }
}

/// Smooth interpolation between the pure phases and its first two
/// derivatives: f = (1 + tanh(-rho_sh pi + 4 pi phi)) / 2.
pub fn mixture_fraction(phi: f64, rho_sh: f64) -> (f64, f64, f64) {
    use std::f64::consts::PI;
    let t = (-rho_sh * PI + 4.0 * PI * phi).tanh();
    let sech2 = 1.0 - t * t;
    let f = 0.5 * (1.0 + t);
    let df = 2.0 * PI * sech2;
    let d2f = -16.0 * PI * PI * t * sech2;
    (f, df, d2f)
}

/// Mixture moduli and their first two phi-derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Moduli {
    pub k: f64,
    pub g: f64,
    pub c: f64,
    pub eta: f64,
    pub dk: f64,
    pub dg: f64,
    pub dc: f64,
    pub deta: f64,
    pub d2k: f64,
    pub d2g: f64,
    pub d2c: f64,
    pub d2eta: f64,
}

pub fn moduli(phi: f64, p: &MaterialParams) -> Moduli {
    let (f, df, d2f) = mixture_fraction(phi, p.rho_sh);
    let mix = |x1: f64, x0: f64| (x1 * f + x0 * (1.0 - f), (x1 - x0) * df, (x1 - x0) * d2f);
    let (k, dk, d2k) = mix(p.k1, p.k0);
    let (g, dg, d2g) = mix(p.g1, p.g0);
    let (c, dc, d2c) = mix(p.c1, p.c0);
    let (eta, deta, d2eta) = mix(p.eta1, p.eta0);
    Moduli {
        k,
        g,
        c,
        eta,
        dk,
        dg,
        dc,
        deta,
        d2k,
        d2g,
        d2c,
        d2eta,
    }
}

/// Degenerate mobility M = D phi (1 - phi) with first and second
/// derivatives.
pub fn mobility(phi: f64, d: f64) -> (f64, f64, f64) {
    (d * phi * (1.0 - phi), d * (1.0 - 2.0 * phi), -2.0 * d)
}

/// Membrane stress contributions sigma^ab (per current area).
#[derive(Debug, Clone)]
pub struct StressState {
    pub el: [[f64; 2]; 2],
    pub visc: [[f64; 2]; 2],
    pub ch: [[f64; 2]; 2],
    pub total: [[f64; 2]; 2],
}

/// Elastic, viscous and concentration-gradient membrane stresses.
pub fn membrane_stress(st: &PointState, p: &MaterialParams) -> StressState {
    let m = moduli(st.phi, p);
    let j = st.stretch;
    let gu = st.grad_up();
    let gsq = st.grad_sq();
    let kappa = p.n_omega * p.lambda / 2.0;
    let mut el = [[0.0; 2]; 2];
    let mut visc = [[0.0; 2]; 2];
    let mut ch = [[0.0; 2]; 2];
    let mut total = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            el[al][be] = 0.5 * m.k / j * (j * j - 1.0) * st.met_inv[al][be]
                + 0.5 * m.g / (j * j)
                    * (2.0 * st.ref_inv[al][be] - st.i1 * st.met_inv[al][be]);
            visc[al][be] = -m.eta * st.rate_up[al][be];
            ch[al][be] = kappa * (st.met_inv[al][be] * gsq - 2.0 * gu[al] * gu[be]);
            total[al][be] = el[al][be] + visc[al][be] + ch[al][be];
        }
    }
    StressState {
        el,
        visc,
        ch,
        total,
    }
}

/// Bending moment components M^ab and total in-plane stress
/// N^ab = sigma^ab + b^b_g M^ga.
#[derive(Debug, Clone)]
pub struct MomentState {
    pub moment: [[f64; 2]; 2],
    pub n_total: [[f64; 2]; 2],
}

pub fn bending_moment(st: &PointState, p: &MaterialParams) -> MomentState {
    let m = moduli(st.phi, p);
    let sig = membrane_stress(st, p);
    let up = st.bend_diff_up();
    let mut moment = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            moment[al][be] = m.c / st.stretch * up[al][be];
        }
    }
    // mixed curvature b^b_g = a^bd b_dg
    let mut bm = [[0.0; 2]; 2];
    for be in 0..2 {
        for g in 0..2 {
            bm[be][g] = st.met_inv[be][0] * st.curv[0][g] + st.met_inv[be][1] * st.curv[1][g];
        }
    }
    let mut n_total = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            let mut corr = 0.0;
            for g in 0..2 {
                corr += bm[be][g] * moment[g][al];
            }
            n_total[al][be] = sig.total[al][be] + corr;
        }
    }
    MomentState { moment, n_total }
}

/// Chemical potential contributions (per reference area) and the
/// phi-derivatives needed by the phase-field tangent blocks.
#[derive(Debug, Clone, Copy)]
pub struct ChemicalPotential {
    /// Mixing part mu_phi and its first two derivatives.
    pub mu_phi: f64,
    pub dmu_phi: f64,
    pub d2mu_phi: f64,
    /// Elastic part and its phi-derivative.
    pub mu_el: f64,
    pub dmu_el: f64,
    /// Interface part -J N omega lambda Laplacian(phi).
    pub mu_i: f64,
}

pub fn chemical_potential(
    st: &PointState,
    p: &MaterialParams,
) -> Result<ChemicalPotential, DomainViolation> {
    check_phi(st.phi)?;
    let phi = st.phi;
    let m = moduli(phi, p);
    let pp = phi * (1.0 - phi);
    let mu_phi = p.n_kb_t * (phi / (1.0 - phi)).ln() + p.n_omega * (1.0 - 2.0 * phi);
    let dmu_phi = p.n_kb_t / pp - 2.0 * p.n_omega;
    let d2mu_phi = -p.n_kb_t * (1.0 - 2.0 * phi) / (pp * pp);
    let j = st.stretch;
    let dil = 0.25 * (j * j - 1.0 - 2.0 * j.ln());
    let dev = 0.5 * (st.i1 / j - 2.0);
    let bend = 0.5 * st.bend_scalar();
    let mu_el = m.dk * dil + m.dg * dev + m.dc * bend;
    let dmu_el = m.d2k * dil + m.d2g * dev + m.d2c * bend;
    let mu_i = -j * p.n_omega * p.lambda * st.lap_phi;
    Ok(ChemicalPotential {
        mu_phi,
        dmu_phi,
        d2mu_phi,
        mu_el,
        dmu_el,
        mu_i,
    })
}

/// Derivatives of the nominal stress tau^ab = J sigma^ab and moment
/// M0^ab = J M^ab with respect to phi and its covariant gradient.
#[derive(Debug, Clone)]
pub struct StressPhiDerivatives {
    pub dtau_dphi: [[f64; 2]; 2],
    /// Elastic part of dtau/dphi alone (no viscous term); this equals
    /// dmu_el/da_ab and enters the phase-mechanical coupling rows.
    pub dtau_el_dphi: [[f64; 2]; 2],
    /// dtau^ab / dphi_,g, indexed [g][a][b].
    pub dtau_dgrad: [[[f64; 2]; 2]; 2],
    pub dm0_dphi: [[f64; 2]; 2],
}

pub fn stress_phi_derivatives(st: &PointState, p: &MaterialParams) -> StressPhiDerivatives {
    let m = moduli(st.phi, p);
    let j = st.stretch;
    let ai = &st.met_inv;
    let up = st.bend_diff_up();
    let mut dtau_dphi = [[0.0; 2]; 2];
    let mut dtau_el_dphi = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            dtau_el_dphi[al][be] = 0.5 * m.dk * (j * j - 1.0) * ai[al][be]
                + 0.5 * m.dg / j * (2.0 * st.ref_inv[al][be] - st.i1 * ai[al][be]);
            dtau_dphi[al][be] = dtau_el_dphi[al][be] - j * m.deta * st.rate_up[al][be];
        }
    }
    let lam = p.n_omega * p.lambda;
    let mut dtau_dgrad = [[[0.0; 2]; 2]; 2];
    for g in 0..2 {
        for al in 0..2 {
            for be in 0..2 {
                let mut s = 0.0;
                for de in 0..2 {
                    s += (ai[al][be] * ai[g][de] - ai[al][g] * ai[be][de]
                        - ai[al][de] * ai[be][g])
                        * st.dphi[de];
                }
                dtau_dgrad[g][al][be] = j * lam * s;
            }
        }
    }
    let mut dm0_dphi = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            dm0_dphi[al][be] = m.dc * up[al][be];
        }
    }
    StressPhiDerivatives {
        dtau_dphi,
        dtau_el_dphi,
        dtau_dgrad,
        dm0_dphi,
    }
}

/// Helmholtz free energy densities per reference area.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDensity {
    pub dil: f64,
    pub dev: f64,
    pub bend: f64,
    pub mix: f64,
    pub interface: f64,
}

impl EnergyDensity {
    pub fn elastic(&self) -> f64 {
        self.dil + self.dev + self.bend
    }

    pub fn cahn_hilliard(&self) -> f64 {
        self.mix + self.interface
    }

    pub fn total(&self) -> f64 {
        self.elastic() + self.cahn_hilliard()
    }
}

pub fn energy_density(st: &PointState, p: &MaterialParams) -> Result<EnergyDensity, DomainViolation> {
    check_phi(st.phi)?;
    let m = moduli(st.phi, p);
    let j = st.stretch;
    let phi = st.phi;
    let dil = 0.25 * m.k * (j * j - 1.0 - 2.0 * j.ln());
    let dev = 0.5 * m.g * (st.i1 / j - 2.0);
    let bend = 0.5 * m.c * st.bend_scalar();
    let mix = p.n_omega * phi * (1.0 - phi)
        + p.n_kb_t * (phi * phi.ln() + (1.0 - phi) * (1.0 - phi).ln());
    let interface = 0.5 * j * p.n_omega * p.lambda * st.grad_sq();
    Ok(EnergyDensity {
        dil,
        dev,
        bend,
        mix,
        interface,
    })
}

/// Surface tension gamma = N^ab a_ab / 2 and deviatoric norm
/// s = sqrt(N_dev^ab N^dev_ab) of an in-plane stress tensor.
pub fn stress_measures(n: &[[f64; 2]; 2], st: &PointState) -> (f64, f64) {
    let a = &st.met;
    let ai = &st.met_inv;
    let mut gamma = 0.0;
    for al in 0..2 {
        for be in 0..2 {
            gamma += 0.5 * n[al][be] * a[al][be];
        }
    }
    let mut dev = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            dev[al][be] = n[al][be] - gamma * ai[al][be];
        }
    }
    // lower both indices of one factor with the metric
    let mut s2 = 0.0;
    for al in 0..2 {
        for be in 0..2 {
            for g in 0..2 {
                for de in 0..2 {
                    s2 += dev[al][be] * a[al][g] * a[be][de] * dev[g][de];
                }
            }
        }
    }
    (gamma, s2.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaterialParams {
        MaterialParams::two_phase_defaults(0.075, 4.0)
    }

    /// Random well-conditioned state for consistency probes.
    fn random_state(rng: &mut ChaCha8Rng, deformed: bool) -> PointState {
        let sym = |rng: &mut ChaCha8Rng, amp: f64| {
            let d = [
                1.0 + amp * (rng.gen::<f64>() - 0.5),
                1.0 + amp * (rng.gen::<f64>() - 0.5),
                amp * (rng.gen::<f64>() - 0.5),
            ];
            [[d[0], d[2]], [d[2], d[1]]]
        };
        let refm = sym(rng, 0.2);
        let met = if deformed {
            let mut m = sym(rng, 0.2);
            for al in 0..2 {
                for be in 0..2 {
                    m[al][be] = 0.5 * (m[al][be] + refm[al][be]) + if al == be { 0.15 } else { 0.0 };
                }
            }
            m
        } else {
            refm
        };
        let ref_det = refm[0][0] * refm[1][1] - refm[0][1] * refm[1][0];
        let ref_inv = [
            [refm[1][1] / ref_det, -refm[0][1] / ref_det],
            [-refm[1][0] / ref_det, refm[0][0] / ref_det],
        ];
        let curv_amp = if deformed { 0.4 } else { 0.0 };
        let ref_curv = sym(rng, 0.3);
        let mut curv = ref_curv;
        let pert = [
            curv_amp * (rng.gen::<f64>() - 0.5),
            curv_amp * (rng.gen::<f64>() - 0.5),
            curv_amp * (rng.gen::<f64>() - 0.5),
        ];
        curv[0][0] += pert[0];
        curv[1][1] += pert[1];
        curv[0][1] += pert[2];
        curv[1][0] += pert[2];
        let mut st = PointState {
            ref_inv,
            ref_det,
            ref_curv,
            met,
            met_inv: [[0.0; 2]; 2],
            curv,
            stretch: 1.0,
            i1: 2.0,
            phi: 0.25 + 0.5 * rng.gen::<f64>(),
            dphi: [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5],
            lap_phi: rng.gen::<f64>() - 0.5,
            rate_up: if deformed { sym(rng, 0.6) } else { [[0.0; 2]; 2] },
        };
        st.refresh_metric();
        st
    }

    #[test]
    fn mixture_fraction_midpoints_and_saturation() {
        let (f, _, _) = mixture_fraction(1.25 / 4.0, 1.25);
        assert!((f - 0.5).abs() < 1e-15);
        let (f, _, _) = mixture_fraction(0.3125, 1.25);
        assert!((f - 0.5).abs() < 1e-15);
        let (f, df, _) = mixture_fraction(50.0, 1.25);
        assert!((f - 1.0).abs() < 1e-15 && df.abs() < 1e-15);
    }

    #[test]
    fn mixture_fraction_derivatives_fd() {
        let h = 1e-6;
        for &phi in &[0.1, 0.3, 0.5, 0.9] {
            let (_, df, d2f) = mixture_fraction(phi, 1.25);
            let (fp, dfp, _) = mixture_fraction(phi + h, 1.25);
            let (fm, dfm, _) = mixture_fraction(phi - h, 1.25);
            assert!((df - (fp - fm) / (2.0 * h)).abs() < 1e-5);
            assert!((d2f - (dfp - dfm) / (2.0 * h)).abs() < 1e-4);
        }
    }

    #[test]
    fn moduli_pure_phase_limits() {
        let p = params();
        let lo = moduli(-10.0, &p);
        assert!((lo.k - p.k0).abs() < 1e-12);
        assert!((lo.g - p.g0).abs() < 1e-12);
        assert!((lo.c - p.c0).abs() < 1e-12);
        assert!((lo.eta - p.eta0).abs() < 1e-12);
        let hi = moduli(10.0, &p);
        assert!((hi.k - p.k1).abs() < 1e-12);
        // equal viscosities: eta' identically zero
        for &phi in &[0.1, 0.4, 0.8] {
            assert_eq!(moduli(phi, &p).deta, 0.0);
        }
    }

    #[test]
    fn mobility_values() {
        let (m, dm, d2m) = mobility(0.5, 4.0);
        assert!((m - 1.0).abs() < 1e-15);
        assert_eq!(dm, 0.0);
        assert_eq!(d2m, -8.0);
        assert_eq!(mobility(0.0, 4.0).0, 0.0);
        assert_eq!(mobility(1.0, 4.0).0, 0.0);
    }

    #[test]
    fn chemical_potential_reference_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = random_state(&mut rng, false);
        st.phi = 0.5;
        st.lap_phi = 0.0;
        let p = params();
        let mu = chemical_potential(&st, &p).unwrap();
        assert!(mu.mu_phi.abs() < 1e-14);
        assert!(mu.mu_el.abs() < 1e-14);
        assert!(mu.mu_i.abs() < 1e-14);
        assert!((mu.dmu_phi - (4.0 / 3.0 - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn phi_domain_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut st = random_state(&mut rng, false);
        st.phi = 1.0 + 1e-12;
        assert!(chemical_potential(&st, &params()).is_err());
        st.phi = 0.0;
        assert!(energy_density(&st, &params()).is_err());
    }

    #[test]
    fn mixing_energy_value_and_double_well() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = random_state(&mut rng, false);
        st.phi = 0.5;
        st.dphi = [0.0, 0.0];
        let p = params();
        let e = energy_density(&st, &p).unwrap();
        assert!((e.mix - (0.25 - (2.0f64).ln() / 3.0)).abs() < 1e-14);
        assert!(e.elastic().abs() < 1e-13);
        assert!(e.interface.abs() < 1e-15);

        // double well below the critical temperature, single well at/above
        let minima = |nkt: f64| -> Vec<f64> {
            let mut p = params();
            p.n_kb_t = nkt;
            let mut st = st.clone();
            let mut out = Vec::new();
            let n = 2000;
            let val = |st: &mut PointState, phi: f64, p: &MaterialParams| {
                st.phi = phi;
                energy_density(st, p).unwrap().mix
            };
            for i in 2..n - 1 {
                let phi = i as f64 / n as f64;
                let h = 1.0 / n as f64;
                let (vm, v0, vp) = (
                    val(&mut st, phi - h, &p),
                    val(&mut st, phi, &p),
                    val(&mut st, phi + h, &p),
                );
                if v0 < vm && v0 < vp {
                    out.push(phi);
                }
            }
            out
        };
        let low = minima(1.0 / 3.0);
        assert_eq!(low.len(), 2, "two minima below critical: {low:?}");
        assert!((low[0] + low[1] - 1.0).abs() < 1e-3, "symmetric about 1/2");
        // 0.49 < 1/2: still below critical but nearly flat; at 0.5 exactly
        // critical the well closes
        assert_eq!(minima(0.55).len(), 1);
    }

    #[test]
    fn dilatation_energy_stationary_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = random_state(&mut rng, false);
        let p = params();
        let e = energy_density(&st, &p).unwrap();
        assert!(e.dil.abs() < 1e-13);
        // derivative of (J^2 - 1 - 2 ln J) vanishes at J = 1
        let h = 1e-6;
        let f = |j: f64| j * j - 1.0 - 2.0 * j.ln();
        assert!(((f(1.0 + h) - f(1.0 - h)) / (2.0 * h)).abs() < 1e-9);
    }

    #[test]
    fn stress_free_reference_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut st = random_state(&mut rng, false);
        st.dphi = [0.0, 0.0];
        let p = params();
        let s = membrane_stress(&st, &p);
        let m = bending_moment(&st, &p);
        for al in 0..2 {
            for be in 0..2 {
                assert!(s.total[al][be].abs() < 1e-12);
                assert!(m.moment[al][be].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn korteweg_stress_is_trace_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let st = random_state(&mut rng, true);
            let s = membrane_stress(&st, &params());
            let mut tr = 0.0;
            for al in 0..2 {
                for be in 0..2 {
                    tr += 0.5 * s.ch[al][be] * st.met[al][be];
                }
            }
            assert!(tr.abs() < 1e-12, "gamma_CH = {tr}");
        }
    }

    #[test]
    fn cylinder_bending_moment() {
        // flat reference bent to a cylinder of radius R: M^11 = c/R
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut st = random_state(&mut rng, false);
        st.ref_inv = [[1.0, 0.0], [0.0, 1.0]];
        st.ref_det = 1.0;
        st.ref_curv = [[0.0; 2]; 2];
        st.met = [[1.0, 0.0], [0.0, 1.0]];
        st.refresh_metric();
        let radius = 2.5;
        st.curv = [[1.0 / radius, 0.0], [0.0, 0.0]];
        st.phi = 0.4;
        let p = params();
        let c = moduli(st.phi, &p).c;
        let m = bending_moment(&st, &p);
        assert!((m.moment[0][0] - c / radius).abs() < 1e-13);
        assert!(m.moment[1][1].abs() < 1e-15);
        assert!(m.moment[0][1].abs() < 1e-15);
    }

    #[test]
    fn pure_dilation_elastic_stress() {
        // isotropic stretch 2 of a flat patch with G = 0:
        // sigma_el = K/(2J) (J^2-1) a^ab with J = 4, a_ab = 4 I
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut st = random_state(&mut rng, false);
        st.ref_inv = [[1.0, 0.0], [0.0, 1.0]];
        st.ref_det = 1.0;
        st.ref_curv = [[0.0; 2]; 2];
        st.curv = [[0.0; 2]; 2];
        st.met = [[4.0, 0.0], [0.0, 4.0]];
        st.refresh_metric();
        st.dphi = [0.0, 0.0];
        st.rate_up = [[0.0; 2]; 2];
        let mut p = params();
        p.g0 = 0.0;
        p.g1 = 0.0;
        let k = moduli(st.phi, &p).k;
        let s = membrane_stress(&st, &p);
        let want = 0.5 * k / 4.0 * 15.0 * 0.25; // K/(2 J) (J^2-1) a^11, a^11 = 1/4
        assert!((s.el[0][0] - want).abs() < 1e-12);
        assert!((s.el[1][1] - want).abs() < 1e-12);
        assert!(s.el[0][1].abs() < 1e-15);
    }

    /// tau_el + tau_CH = 2 dPsi/da_ab by central differences on the metric.
    #[test]
    fn stress_energy_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = params();
        for _ in 0..20 {
            let st = random_state(&mut rng, true);
            let s = membrane_stress(&st, &p);
            let j = st.stretch;
            let tau = |al: usize, be: usize| j * (s.el[al][be] + s.ch[al][be]);
            let h = 1e-6;
            let energy = |st: &PointState| {
                let e = energy_density(st, &p).unwrap();
                e.dil + e.dev + e.interface
            };
            // diagonal components: tau^aa = 2 dPsi/da_aa
            for d in 0..2 {
                let mut sp = st.clone();
                sp.met[d][d] += h;
                sp.refresh_metric();
                let mut sm = st.clone();
                sm.met[d][d] -= h;
                sm.refresh_metric();
                let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
                let want = 2.0 * fd;
                assert!(
                    (tau(d, d) - want).abs() <= 1e-6 * want.abs().max(1.0),
                    "tau^{d}{d} = {} vs {want}",
                    tau(d, d)
                );
            }
            // off-diagonal (perturb both symmetric entries): tau^12 = dPsi/da_12
            let mut sp = st.clone();
            sp.met[0][1] += h;
            sp.met[1][0] += h;
            sp.refresh_metric();
            let mut sm = st.clone();
            sm.met[0][1] -= h;
            sm.met[1][0] -= h;
            sm.refresh_metric();
            let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
            assert!((tau(0, 1) - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }

    /// J M^ab = dPsi/db_ab by central differences on the curvature.
    #[test]
    fn moment_energy_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = params();
        for _ in 0..20 {
            let st = random_state(&mut rng, true);
            let m = bending_moment(&st, &p);
            let h = 1e-6;
            let energy = |st: &PointState| energy_density(st, &p).unwrap().bend;
            for d in 0..2 {
                let mut sp = st.clone();
                sp.curv[d][d] += h;
                let mut sm = st.clone();
                sm.curv[d][d] -= h;
                let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
                let want = st.stretch * m.moment[d][d];
                assert!((want - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
            }
            let mut sp = st.clone();
            sp.curv[0][1] += h;
            sp.curv[1][0] += h;
            let mut sm = st.clone();
            sm.curv[0][1] -= h;
            sm.curv[1][0] -= h;
            let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
            let want = 2.0 * st.stretch * m.moment[0][1];
            assert!((want - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    /// mu_el and mu_phi match derivatives of the energy densities in phi.
    #[test]
    fn chemical_potential_energy_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params();
        for _ in 0..20 {
            let st = random_state(&mut rng, true);
            let mu = chemical_potential(&st, &p).unwrap();
            let h = 1e-6;
            let at = |phi: f64| {
                let mut s = st.clone();
                s.phi = phi;
                energy_density(&s, &p).unwrap()
            };
            let (ep, em) = (at(st.phi + h), at(st.phi - h));
            let fd_el = (ep.elastic() - em.elastic()) / (2.0 * h);
            assert!((mu.mu_el - fd_el).abs() <= 1e-6 * fd_el.abs().max(1e-3));
            let fd_mix = (ep.mix - em.mix) / (2.0 * h);
            assert!((mu.mu_phi - fd_mix).abs() <= 1e-8 * fd_mix.abs().max(1.0));
        }
    }

    /// Analytic tau derivatives match finite differences, including the
    /// viscous eta' term (distinct viscosities here on purpose).
    #[test]
    fn stress_phi_derivatives_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut p = params();
        p.eta1 = 2.3 * p.eta0;
        for _ in 0..20 {
            let st = random_state(&mut rng, true);
            let d = stress_phi_derivatives(&st, &p);
            let h = 1e-6;
            let tau_at = |st: &PointState| {
                let s = membrane_stress(st, &p);
                let mut t = [[0.0; 2]; 2];
                for al in 0..2 {
                    for be in 0..2 {
                        // viscous and elastic parts carry phi dependence;
                        // the gradient part is handled separately below
                        t[al][be] = st.stretch * (s.el[al][be] + s.visc[al][be]);
                    }
                }
                t
            };
            let mut sp = st.clone();
            sp.phi += h;
            let mut sm = st.clone();
            sm.phi -= h;
            let (tp, tm) = (tau_at(&sp), tau_at(&sm));
            for al in 0..2 {
                for be in 0..2 {
                    let fd = (tp[al][be] - tm[al][be]) / (2.0 * h);
                    assert!(
                        (d.dtau_dphi[al][be] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                        "dtau/dphi [{al}][{be}]"
                    );
                }
            }
            // gradient derivative of the concentration-gradient stress
            let tau_ch = |st: &PointState| {
                let s = membrane_stress(st, &p);
                let mut t = [[0.0; 2]; 2];
                for al in 0..2 {
                    for be in 0..2 {
                        t[al][be] = st.stretch * s.ch[al][be];
                    }
                }
                t
            };
            for g in 0..2 {
                let mut sp = st.clone();
                sp.dphi[g] += h;
                let mut sm = st.clone();
                sm.dphi[g] -= h;
                let (tp, tm) = (tau_ch(&sp), tau_ch(&sm));
                for al in 0..2 {
                    for be in 0..2 {
                        let fd = (tp[al][be] - tm[al][be]) / (2.0 * h);
                        assert!(
                            (d.dtau_dgrad[g][al][be] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                            "dtau/dgrad [{g}][{al}][{be}]"
                        );
                    }
                }
            }
            // moment derivative
            let m0 = |st: &PointState| {
                let m = bending_moment(st, &p);
                let mut t = [[0.0; 2]; 2];
                for al in 0..2 {
                    for be in 0..2 {
                        t[al][be] = st.stretch * m.moment[al][be];
                    }
                }
                t
            };
            let mut sp = st.clone();
            sp.phi += h;
            let mut sm = st.clone();
            sm.phi -= h;
            let (tp, tm) = (m0(&sp), m0(&sm));
            for al in 0..2 {
                for be in 0..2 {
                    let fd = (tp[al][be] - tm[al][be]) / (2.0 * h);
                    assert!((d.dm0_dphi[al][be] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
                }
            }
            // uniform-state zero check: undeformed with eta' = 0
            let mut p0 = params();
            p0.eta0 = p0.eta1;
            let mut su = random_state(&mut rng, false);
            su.dphi = [0.0, 0.0];
            su.rate_up = [[0.0; 2]; 2];
            let d0 = stress_phi_derivatives(&su, &p0);
            for al in 0..2 {
                for be in 0..2 {
                    assert!(d0.dtau_dphi[al][be].abs() < 1e-12);
                    for g in 0..2 {
                        assert!(d0.dtau_dgrad[g][al][be].abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn table_parameters_wired() {
        let p = params();
        assert!((p.k0 - 1.25 * 0.3 / (1.3 * 0.4)).abs() < 1e-12);
        assert!((p.g0 - 6.25 / 2.6).abs() < 1e-12);
        assert!((p.c0 - 0.01).abs() < 1e-15);
        assert!((p.eta0 - 1.5 * p.k0).abs() < 1e-12);
        assert_eq!(p.eta0, p.eta1);
        p.validate().unwrap();
        let mut bad = params();
        bad.n_kb_t = 0.6;
        assert!(bad.validate().is_err());
    }
}
