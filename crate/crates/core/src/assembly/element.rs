//! Element-level residual vectors and consistent tangent blocks for the
//! coupled shell / phase-field system, integrated over the reference
//! configuration (nominal stresses tau = J sigma, moments M0 = J M).

use crate::error::StepError;
use crate::geometry::{covariant_ops, metric_rate, point_geometry};
use crate::material::{
    bending_moment, chemical_potential, membrane_stress, mobility, stress_phi_derivatives,
    MaterialParams, PointState,
};
use nalgebra::{DMatrix, DVector, Vector3};

use super::MeshData;

/// Local nodal state of one element (gathered from the global vectors).
pub struct ElementKinematics<'a> {
    pub x: &'a [Vector3<f64>],
    pub v: &'a [Vector3<f64>],
    pub acc: &'a [Vector3<f64>],
    pub phi: &'a [f64],
    pub phidot: &'a [f64],
}

/// Unscaled derivative blocks of the element residuals; the time-integrator
/// scalars are applied during global assembly.
pub struct ElementTangent {
    /// d f / d x at fixed velocities.
    pub k_x: DMatrix<f64>,
    /// d f / d v (in-plane viscosity).
    pub k_v: DMatrix<f64>,
    /// d f / d phi.
    pub k_xphi: DMatrix<f64>,
    /// d fbar / d x.
    pub k_phix: DMatrix<f64>,
    /// d fbar / d phi at fixed rate.
    pub k_phiphi: DMatrix<f64>,
}

pub struct ElementOutput {
    pub f_in: DVector<f64>,
    pub f_int: DVector<f64>,
    pub f_ext: DVector<f64>,
    pub fbar_in: DVector<f64>,
    pub fbar_int: DVector<f64>,
    pub tangent: Option<ElementTangent>,
}

impl ElementOutput {
    /// f = f_in + f_int - f_ext.
    pub fn mech_residual(&self) -> DVector<f64> {
        &self.f_in + &self.f_int - &self.f_ext
    }

    /// fbar = fbar_in + fbar_int (no external flux on closed surfaces).
    pub fn phase_residual(&self) -> DVector<f64> {
        &self.fbar_in + &self.fbar_int
    }
}

/// Covariant second derivatives and surface Laplacian of the basis into
/// caller-owned scratch (the assembly loop avoids per-point allocation).
fn covariant_scratch(
    geom: &crate::geometry::SurfacePointGeometry,
    basis: &crate::spline::BasisEval,
    d2c: &mut [Vec<f64>; 3],
    lap: &mut [f64],
) {
    let ne = basis.vals.len();
    let pairs = [(0usize, 0usize), (1, 1), (0, 1)];
    for (k, &(al, be)) in pairs.iter().enumerate() {
        let g1 = geom.christoffel[0][al][be];
        let g2 = geom.christoffel[1][al][be];
        for l in 0..ne {
            d2c[k][l] = basis.d2[k][l] - g1 * basis.d1[0][l] - g2 * basis.d1[1][l];
        }
    }
    let ai = &geom.met_inv;
    for l in 0..ne {
        lap[l] = ai[0][0] * d2c[0][l] + ai[1][1] * d2c[1][l] + 2.0 * ai[0][1] * d2c[2][l];
    }
}

/// Symmetrized product S^abgd = (a^ag a^bd + a^ad a^bg) / 2.
fn sym4(ai: &[[f64; 2]; 2], al: usize, be: usize, ga: usize, de: usize) -> f64 {
    0.5 * (ai[al][ga] * ai[be][de] + ai[al][de] * ai[be][ga])
}

/// Collects rank-one tangent contributions K += sum_k u_k v_k^T and applies
/// them in a single matrix product per block; this keeps the hot assembly
/// loop out of scattered indexed updates.
struct RankAcc {
    u: DMatrix<f64>,
    vt: DMatrix<f64>,
    count: usize,
}

impl RankAcc {
    fn new(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        RankAcc {
            u: DMatrix::zeros(n_rows, cap),
            vt: DMatrix::zeros(cap, n_cols),
            count: 0,
        }
    }

    /// u = coef * (s tensor v), v-row = (t tensor w).
    fn push33(&mut self, coef: f64, s: &[f64], v: &Vector3<f64>, t: &[f64], w: &Vector3<f64>) {
        if coef == 0.0 {
            return;
        }
        let k = self.count;
        for (a, &sa) in s.iter().enumerate() {
            let c = coef * sa;
            self.u[(3 * a, k)] = c * v[0];
            self.u[(3 * a + 1, k)] = c * v[1];
            self.u[(3 * a + 2, k)] = c * v[2];
        }
        for (b, &tb) in t.iter().enumerate() {
            self.vt[(k, 3 * b)] = tb * w[0];
            self.vt[(k, 3 * b + 1)] = tb * w[1];
            self.vt[(k, 3 * b + 2)] = tb * w[2];
        }
        self.count += 1;
    }

    /// u = coef * (s tensor v), v-row = plain scalar row t.
    fn push3s(&mut self, coef: f64, s: &[f64], v: &Vector3<f64>, t: &[f64]) {
        if coef == 0.0 {
            return;
        }
        let k = self.count;
        for (a, &sa) in s.iter().enumerate() {
            let c = coef * sa;
            self.u[(3 * a, k)] = c * v[0];
            self.u[(3 * a + 1, k)] = c * v[1];
            self.u[(3 * a + 2, k)] = c * v[2];
        }
        for (b, &tb) in t.iter().enumerate() {
            self.vt[(k, b)] = tb;
        }
        self.count += 1;
    }

    /// u = coef * scalar column s, v-row = (t tensor w).
    fn push_s3(&mut self, coef: f64, s: &[f64], t: &[f64], w: &Vector3<f64>) {
        if coef == 0.0 {
            return;
        }
        let k = self.count;
        for (a, &sa) in s.iter().enumerate() {
            self.u[(a, k)] = coef * sa;
        }
        for (b, &tb) in t.iter().enumerate() {
            self.vt[(k, 3 * b)] = tb * w[0];
            self.vt[(k, 3 * b + 1)] = tb * w[1];
            self.vt[(k, 3 * b + 2)] = tb * w[2];
        }
        self.count += 1;
    }

    /// u = coef * (s tensor v), v-row given explicitly.
    fn push3_row(&mut self, coef: f64, s: &[f64], v: &Vector3<f64>, row: &[f64]) {
        if coef == 0.0 {
            return;
        }
        let k = self.count;
        for (a, &sa) in s.iter().enumerate() {
            let c = coef * sa;
            self.u[(3 * a, k)] = c * v[0];
            self.u[(3 * a + 1, k)] = c * v[1];
            self.u[(3 * a + 2, k)] = c * v[2];
        }
        for (c, &rc) in row.iter().enumerate() {
            self.vt[(k, c)] = rc;
        }
        self.count += 1;
    }

    /// u = coef * scalar column s, v-row given explicitly.
    fn push_row(&mut self, coef: f64, s: &[f64], row: &[f64]) {
        if coef == 0.0 {
            return;
        }
        let k = self.count;
        for (a, &sa) in s.iter().enumerate() {
            self.u[(a, k)] = coef * sa;
        }
        for (c, &rc) in row.iter().enumerate() {
            self.vt[(k, c)] = rc;
        }
        self.count += 1;
    }

    fn flush_into(&mut self, k: &mut DMatrix<f64>) {
        if self.count == 0 {
            return;
        }
        let u = self.u.columns(0, self.count);
        let vt = self.vt.rows(0, self.count);
        k.gemm(1.0, &u, &vt, 1.0);
        self.count = 0;
    }
}

fn add_diag(k: &mut DMatrix<f64>, coef: f64, s: &[f64], t: &[f64]) {
    if coef == 0.0 {
        return;
    }
    let ne = s.len();
    for a in 0..ne {
        let sa = coef * s[a];
        for b in 0..ne {
            let v = sa * t[b];
            for i in 0..3 {
                k[(3 * a + i, 3 * b + i)] += v;
            }
        }
    }
}

fn add_px(k: &mut DMatrix<f64>, coef: f64, s: &[f64], t: &[f64], w: &Vector3<f64>) {
    if coef == 0.0 {
        return;
    }
    let ne = s.len();
    for a in 0..ne {
        let sa = coef * s[a];
        for b in 0..ne {
            let st = sa * t[b];
            for j in 0..3 {
                k[(a, 3 * b + j)] += st * w[j];
            }
        }
    }
}

fn add_pp(k: &mut DMatrix<f64>, coef: f64, s: &[f64], t: &[f64]) {
    if coef == 0.0 {
        return;
    }
    let ne = s.len();
    for a in 0..ne {
        let sa = coef * s[a];
        for b in 0..ne {
            k[(a, b)] += sa * t[b];
        }
    }
}

/// Residuals and (optionally) tangent blocks of one element of the coupled
/// system under internal pressure `p_int`.
pub fn element_coupled(
    mesh: &MeshData,
    params: &MaterialParams,
    elem: usize,
    kin: &ElementKinematics,
    p_int: f64,
    want_tangent: bool,
) -> Result<ElementOutput, StepError> {
    let ne = mesh.space.elements[elem].indices.len();
    let mut f_int = DVector::zeros(3 * ne);
    let mut f_ext = DVector::zeros(3 * ne);
    let mut fbar_int = DVector::zeros(ne);
    let mut tangent = want_tangent.then(|| ElementTangent {
        k_x: DMatrix::zeros(3 * ne, 3 * ne),
        k_v: DMatrix::zeros(3 * ne, 3 * ne),
        k_xphi: DMatrix::zeros(3 * ne, ne),
        k_phix: DMatrix::zeros(ne, 3 * ne),
        k_phiphi: DMatrix::zeros(ne, ne),
    });
    let nq = mesh.quad[elem].len();
    let mut acc_x = want_tangent.then(|| RankAcc::new(3 * ne, 3 * ne, nq * 28));
    let mut acc_v = want_tangent.then(|| RankAcc::new(3 * ne, 3 * ne, nq * 6));
    let mut acc_xphi = want_tangent.then(|| RankAcc::new(3 * ne, ne, nq * 16));
    let mut acc_phix = want_tangent.then(|| RankAcc::new(ne, 3 * ne, nq * 18));

    // per-point scratch, reused across quadrature points
    let mut d2c = [vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]];
    let mut lap = vec![0.0; ne];
    let mut g2 = vec![0.0; ne];
    let mut row_m = vec![0.0; 3 * ne];
    let mut row_vx = vec![0.0; 3 * ne];
    let mut row_vv = vec![0.0; 3 * ne];
    let mut row_b = vec![0.0; ne];
    let mut m0vc = vec![0.0; ne];
    let mut mds = DMatrix::zeros(ne, 3 * ne);
    let mut ngam_row = vec![Vector3::zeros(); ne];
    let mut row_mu = vec![0.0; 3 * ne];
    let mut x2col = vec![0.0; ne];

    for qp in &mesh.quad[elem] {
        let basis = &qp.basis;
        let mut cur = point_geometry(basis, kin.x)
            .map_err(|_| StepError::SingularGeometry { element: elem })?;
        cur.set_reference(&qp.ref_geom);
        covariant_scratch(&cur, basis, &mut d2c, &mut lap);
        let (_, rate_up) = metric_rate(&cur, basis, kin.v);

        let mut phi = 0.0;
        let mut dphi = [0.0; 2];
        let mut lap_phi = 0.0;
        for l in 0..ne {
            phi += basis.vals[l] * kin.phi[l];
            dphi[0] += basis.d1[0][l] * kin.phi[l];
            dphi[1] += basis.d1[1][l] * kin.phi[l];
            lap_phi += lap[l] * kin.phi[l];
        }

        let st = PointState::from_geometry(&qp.ref_geom, &cur, phi, dphi, lap_phi, rate_up);
        let mu = chemical_potential(&st, params).map_err(|e| StepError::PhiOutOfRange {
            element: elem,
            phi: e.0,
        })?;
        let (mob, dmob, d2mob) = mobility(phi, params.mobility_d);
        let sig = membrane_stress(&st, params);
        let mom = bending_moment(&st, params);
        let j = st.stretch;
        let w = qp.weight;
        let ai = &st.met_inv;

        // nominal stress and moment
        let mut tau = [[0.0; 2]; 2];
        let mut m0 = [[0.0; 2]; 2];
        for al in 0..2 {
            for be in 0..2 {
                tau[al][be] = j * sig.total[al][be];
                m0[al][be] = j * mom.moment[al][be];
            }
        }

        // mechanical residual: tau^ab N,a . a_b + M0^ab N_;ab . n,
        // follower pressure p J N n
        for a in 0..ne {
            let mut fi = Vector3::zeros();
            for al in 0..2 {
                for be in 0..2 {
                    fi += tau[al][be] * basis.d1[al][a] * cur.a[be];
                }
            }
            let vc = [d2c[0][a], d2c[1][a], d2c[2][a]];
            let m0n = m0[0][0] * vc[0] + m0[1][1] * vc[1] + (m0[0][1] + m0[1][0]) * vc[2];
            fi += m0n * cur.normal;
            let fe = p_int * j * basis.vals[a] * cur.normal;
            for i in 0..3 {
                f_int[3 * a + i] += w * fi[i];
                f_ext[3 * a + i] += w * fe[i];
            }
        }

        // phase residual: N,a a^ab g phi_,b - lap_a M (mu_i + mu_el)
        let gfac = mob * mu.dmu_phi - dmob * (mu.mu_i + mu.mu_el);
        let mui_el = mu.mu_i + mu.mu_el;
        for a in 0..ne {
            let mut s = 0.0;
            for al in 0..2 {
                for be in 0..2 {
                    s += basis.d1[al][a] * ai[al][be] * dphi[be];
                }
            }
            g2[a] = s;
            fbar_int[a] += w * (gfac * s - lap[a] * mob * mui_el);
        }

        let Some(tg) = tangent.as_mut() else {
            continue;
        };
        let acc_x = acc_x.as_mut().unwrap();
        let acc_v = acc_v.as_mut().unwrap();
        let acc_xphi = acc_xphi.as_mut().unwrap();
        let acc_phix = acc_phix.as_mut().unwrap();

        // ------------------------------------------------------------------
        // mechanical tangent
        // ------------------------------------------------------------------
        let gu = [
            ai[0][0] * dphi[0] + ai[0][1] * dphi[1],
            ai[1][0] * dphi[0] + ai[1][1] * dphi[1],
        ];
        let gsq = gu[0] * dphi[0] + gu[1] * dphi[1];
        let md = crate::material::moduli(phi, params);
        let kappa = params.n_omega * params.lambda / 2.0;
        // viscous strain-rate tensor m^ab = a^ag adot_gd a^db = -rate_up
        let mvis = [
            [-rate_up[0][0], -rate_up[0][1]],
            [-rate_up[1][0], -rate_up[1][1]],
        ];
        let aref = &st.ref_inv;
        let i1 = st.i1;

        // material tensor D^abgd = d tau^ab / d a_gd
        let mut dmat = [[[[0.0; 2]; 2]; 2]; 2];
        for al in 0..2 {
            for be in 0..2 {
                for ga in 0..2 {
                    for de in 0..2 {
                        let s4 = sym4(ai, al, be, ga, de);
                        let el = 0.5 * md.k * j * j * ai[al][be] * ai[ga][de]
                            - 0.5 * md.k * (j * j - 1.0) * s4
                            - 0.25 * md.g / j
                                * ai[ga][de]
                                * (2.0 * aref[al][be] - i1 * ai[al][be])
                            - 0.5 * md.g / j * aref[ga][de] * ai[al][be]
                            + 0.5 * md.g * i1 / j * s4;
                        let ch = j * kappa
                            * (0.5 * ai[ga][de] * (ai[al][be] * gsq - 2.0 * gu[al] * gu[be])
                                - s4 * gsq
                                - ai[al][be] * gu[ga] * gu[de]
                                + (ai[al][ga] * gu[de] + ai[al][de] * gu[ga]) * gu[be]
                                + gu[al] * (ai[be][ga] * gu[de] + ai[be][de] * gu[ga]));
                        let vi = j * md.eta
                            * (0.5 * ai[ga][de] * mvis[al][be]
                                - 0.5
                                    * (ai[al][ga] * mvis[de][be]
                                        + ai[al][de] * mvis[ga][be]
                                        + mvis[al][ga] * ai[de][be]
                                        + mvis[al][de] * ai[ga][be]));
                        dmat[al][be][ga][de] = el + ch + vi;
                    }
                }
            }
        }

        let ac = [cur.contravariant(0), cur.contravariant(1)];
        let d1 = [&basis.d1[0], &basis.d1[1]];
        let vcp = [&d2c[0], &d2c[1], &d2c[2]];
        let pair = |al: usize, be: usize| if al == 0 && be == 0 { 0 } else if al == 1 && be == 1 { 1 } else { 2 };
        let mut adot = [Vector3::zeros(), Vector3::zeros()];
        for l in 0..ne {
            adot[0] += basis.d1[0][l] * kin.v[l];
            adot[1] += basis.d1[1][l] * kin.v[l];
        }

        // membrane material + geometric parts (column N,a x a_b, row
        // pre-contracted over the gd indices)
        for al in 0..2 {
            for be in 0..2 {
                row_m.iter_mut().for_each(|x| *x = 0.0);
                row_vx.iter_mut().for_each(|x| *x = 0.0);
                row_vv.iter_mut().for_each(|x| *x = 0.0);
                for ga in 0..2 {
                    for de in 0..2 {
                        let cm = 2.0 * w * dmat[al][be][ga][de];
                        let dv = 2.0 * w * j * md.eta * sym4(ai, al, be, ga, de);
                        for b in 0..ne {
                            let ng = basis.d1[ga][b];
                            for jx in 0..3 {
                                row_m[3 * b + jx] += cm * ng * cur.a[de][jx];
                                row_vx[3 * b + jx] += dv * ng * adot[de][jx];
                                row_vv[3 * b + jx] += dv * ng * cur.a[de][jx];
                            }
                        }
                    }
                }
                acc_x.push3_row(1.0, d1[al], &cur.a[be], &row_m);
                acc_x.push3_row(1.0, d1[al], &cur.a[be], &row_vx);
                acc_v.push3_row(1.0, d1[al], &cur.a[be], &row_vv);
                add_diag(&mut tg.k_x, w * tau[al][be], d1[al], d1[be]);
            }
        }

        // bending material part: dM0^ab = c Sref^abgd db_gd
        for al in 0..2 {
            for be in 0..2 {
                let ka = pair(al, be);
                row_b.iter_mut().for_each(|x| *x = 0.0);
                for ga in 0..2 {
                    for de in 0..2 {
                        let kb = pair(ga, de);
                        let dbend = w * md.c * sym4(aref, al, be, ga, de);
                        for b in 0..ne {
                            row_b[b] += dbend * vcp[kb][b];
                        }
                    }
                }
                acc_x.push33(1.0, vcp[ka], &cur.normal, &row_b, &cur.normal);
            }
        }

        // bending geometric part, grouped through the moment-weighted
        // covariant second derivative row
        m0vc.iter_mut().for_each(|x| *x = 0.0);
        let mut m0b = 0.0;
        for al in 0..2 {
            for be in 0..2 {
                let ka = pair(al, be);
                for b in 0..ne {
                    m0vc[b] += m0[al][be] * vcp[ka][b];
                }
                m0b += m0[al][be] * cur.curv[al][be];
            }
        }
        for ga in 0..2 {
            // -M0 N_,g n (a^g . N_;ab)
            acc_x.push33(-w, d1[ga], &cur.normal, &m0vc, &ac[ga]);
            // -M0 N_;ab a^g (n . N_,g)
            acc_x.push33(-w, &m0vc, &ac[ga], d1[ga], &cur.normal);
            // -(M0 : b) a^gd N_,g n (n . N_,d)
            for de in 0..2 {
                acc_x.push33(
                    -w * m0b * ai[ga][de],
                    d1[ga],
                    &cur.normal,
                    d1[de],
                    &cur.normal,
                );
            }
        }

        // follower pressure: f_ext varies with J and n
        for ga in 0..2 {
            acc_x.push33(-w * p_int * j, &basis.vals, &cur.normal, d1[ga], &ac[ga]);
            acc_x.push33(w * p_int * j, &basis.vals, &ac[ga], d1[ga], &cur.normal);
        }

        // ------------------------------------------------------------------
        // coupling block d f / d phi
        // ------------------------------------------------------------------
        let dstress = stress_phi_derivatives(&st, params);
        for al in 0..2 {
            for be in 0..2 {
                acc_xphi.push3s(w * dstress.dtau_dphi[al][be], d1[al], &cur.a[be], &basis.vals);
                for ga in 0..2 {
                    acc_xphi.push3s(
                        w * dstress.dtau_dgrad[ga][al][be],
                        d1[al],
                        &cur.a[be],
                        d1[ga],
                    );
                }
                acc_xphi.push3s(
                    w * dstress.dm0_dphi[al][be],
                    vcp[pair(al, be)],
                    &cur.normal,
                    &basis.vals,
                );
            }
        }

        // ------------------------------------------------------------------
        // coupling block d fbar / d x
        // ------------------------------------------------------------------
        // variation of the basis Laplacian: Delta(Delta_s N) = M_ds dx
        mds.iter_mut().for_each(|x| *x = 0.0);
        for al in 0..2 {
            for be in 0..2 {
                let ka = pair(al, be);
                for ga in 0..2 {
                    add_px(
                        &mut mds,
                        -2.0 * ai[be][ga],
                        vcp[ka],
                        d1[ga],
                        &ac[al],
                    );
                }
            }
        }
        // row vector N^g, assembled as -N_,g n-part below: first the
        // a^ab (a^g . N_;ab) + 2H a^gd (n . N_,d) row per gamma
        for ga in 0..2 {
            let row = &mut ngam_row;
            row.iter_mut().for_each(|x| *x = Vector3::zeros());
            for al in 0..2 {
                for be in 0..2 {
                    let ka = pair(al, be);
                    for (b, r) in row.iter_mut().enumerate() {
                        *r += ai[al][be] * vcp[ka][b] * ac[ga];
                    }
                }
            }
            for de in 0..2 {
                let c = 2.0 * cur.mean_curv * ai[ga][de];
                for (b, r) in row.iter_mut().enumerate() {
                    *r += c * basis.d1[de][b] * cur.normal;
                }
            }
            for a in 0..ne {
                let s = basis.d1[ga][a];
                if s == 0.0 {
                    continue;
                }
                for b in 0..ne {
                    for jx in 0..3 {
                        mds[(a, 3 * b + jx)] -= s * row[b][jx];
                    }
                }
            }
        }

        // d(mu_i)/dx and d(mu_el)/dx rows over the element dofs
        let lam = params.n_omega * params.lambda;
        for b in 0..ne {
            for jx in 0..3 {
                let mut v = 0.0;
                // mu_i J-variation: mu_i a^a . N_,a
                for al in 0..2 {
                    v += mu.mu_i * ac[al][jx] * basis.d1[al][b];
                }
                // - J lambda phi^T M_ds
                let mut lap_var = 0.0;
                for a in 0..ne {
                    lap_var += kin.phi[a] * mds[(a, 3 * b + jx)];
                }
                v -= j * lam * lap_var;
                // mu_el: tau_el' a_a . N_,b + M0' n . N_;ab
                for al in 0..2 {
                    for be in 0..2 {
                        v += dstress.dtau_el_dphi[al][be] * cur.a[al][jx] * basis.d1[be][b];
                        v += dstress.dm0_dphi[al][be] * cur.normal[jx] * vcp[pair(al, be)][b];
                    }
                }
                row_mu[3 * b + jx] = v;
            }
        }

        // kbar_x1: variation of a^ab inside the gradient term
        for al in 0..2 {
            for be in 0..2 {
                for ga in 0..2 {
                    acc_phix.push_s3(
                        -w * gfac * dphi[be] * ai[be][ga],
                        d1[al],
                        d1[ga],
                        &ac[al],
                    );
                    acc_phix.push_s3(
                        -w * gfac * dphi[be] * ai[al][ga],
                        d1[al],
                        d1[ga],
                        &ac[be],
                    );
                }
            }
        }
        // kbar_x2: variation of mu_i + mu_el
        for a in 0..ne {
            x2col[a] = dmob * g2[a] + mob * lap[a];
        }
        acc_phix.push_row(-w, &x2col, &row_mu);
        // kbar_x3: variation of the test-function Laplacian
        let s_x3 = -w * mob * mui_el;
        for col in 0..3 * ne {
            for a in 0..ne {
                tg.k_phix[(a, col)] += s_x3 * mds[(a, col)];
            }
        }

        // ------------------------------------------------------------------
        // phase block d fbar / d phi
        // ------------------------------------------------------------------
        for al in 0..2 {
            for be in 0..2 {
                add_pp(&mut tg.k_phiphi, w * gfac * ai[al][be], d1[al], d1[be]);
            }
        }
        add_pp(&mut tg.k_phiphi, w * j * lam * mob, &lap, &lap);
        let c1 = dmob * (mu.dmu_phi - mu.dmu_el) + mob * mu.d2mu_phi - d2mob * mui_el;
        add_pp(&mut tg.k_phiphi, w * c1, &g2, &basis.vals);
        add_pp(&mut tg.k_phiphi, w * j * lam * dmob, &g2, &lap);
        let c3 = dmob * mui_el + mob * mu.dmu_el;
        add_pp(&mut tg.k_phiphi, -w * c3, &lap, &basis.vals);
    }

    if let Some(tg) = tangent.as_mut() {
        acc_x.as_mut().unwrap().flush_into(&mut tg.k_x);
        acc_v.as_mut().unwrap().flush_into(&mut tg.k_v);
        acc_xphi.as_mut().unwrap().flush_into(&mut tg.k_xphi);
        acc_phix.as_mut().unwrap().flush_into(&mut tg.k_phix);
    }

    // inertial parts from the cached mass matrices
    let me = &mesh.mass_mech[elem];
    let mbar = &mesh.mass_phase[elem];
    let mut acc_flat = DVector::zeros(3 * ne);
    for a in 0..ne {
        for i in 0..3 {
            acc_flat[3 * a + i] = kin.acc[a][i];
        }
    }
    let f_in = me * acc_flat;
    let fbar_in = mbar * DVector::from_column_slice(kin.phidot);

    Ok(ElementOutput {
        f_in,
        f_int,
        f_ext,
        fbar_in,
        fbar_int,
        tangent,
    })
}

/// Phase-only residual and tangent on a frozen (rigid) surface, using the
/// cached reference geometry. The current configuration equals the
/// reference one, so all elastic couplings vanish.
pub fn element_phase_rigid(
    mesh: &MeshData,
    params: &MaterialParams,
    elem: usize,
    phi_e: &[f64],
    phidot_e: &[f64],
    want_tangent: bool,
) -> Result<ElementOutput, StepError> {
    let ne = mesh.space.elements[elem].indices.len();
    let mut fbar_int = DVector::zeros(ne);
    let mut k_phiphi = want_tangent.then(|| DMatrix::zeros(ne, ne));

    for qp in &mesh.quad[elem] {
        let basis = &qp.basis;
        let ops = qp.ref_ops.as_ref().expect("reference operators cached");
        let mut phi = 0.0;
        let mut dphi = [0.0; 2];
        let mut lap_phi = 0.0;
        for l in 0..ne {
            phi += basis.vals[l] * phi_e[l];
            dphi[0] += basis.d1[0][l] * phi_e[l];
            dphi[1] += basis.d1[1][l] * phi_e[l];
            lap_phi += ops.laplace[l] * phi_e[l];
        }
        let st = PointState::from_geometry(
            &qp.ref_geom,
            &qp.ref_geom,
            phi,
            dphi,
            lap_phi,
            [[0.0; 2]; 2],
        );
        let mu = chemical_potential(&st, params).map_err(|e| StepError::PhiOutOfRange {
            element: elem,
            phi: e.0,
        })?;
        let (mob, dmob, d2mob) = mobility(phi, params.mobility_d);
        let w = qp.weight;
        let ai = &qp.ref_geom.met_inv;
        let lam = params.n_omega * params.lambda;

        let gfac = mob * mu.dmu_phi - dmob * mu.mu_i;
        let mut g2 = vec![0.0; ne];
        for a in 0..ne {
            let mut s = 0.0;
            for al in 0..2 {
                for be in 0..2 {
                    s += basis.d1[al][a] * ai[al][be] * dphi[be];
                }
            }
            g2[a] = s;
            fbar_int[a] += w * (gfac * s - ops.laplace[a] * mob * mu.mu_i);
        }

        if let Some(k) = k_phiphi.as_mut() {
            for al in 0..2 {
                for be in 0..2 {
                    add_pp(k, w * gfac * ai[al][be], &basis.d1[al], &basis.d1[be]);
                }
            }
            add_pp(k, w * lam * mob, &ops.laplace, &ops.laplace);
            let c1 = dmob * mu.dmu_phi + mob * mu.d2mu_phi - d2mob * mu.mu_i;
            add_pp(k, w * c1, &g2, &basis.vals);
            add_pp(k, w * lam * dmob, &g2, &ops.laplace);
            add_pp(k, -w * dmob * mu.mu_i, &ops.laplace, &basis.vals);
        }
    }

    let mbar = &mesh.mass_phase[elem];
    let fbar_in = mbar * DVector::from_column_slice(phidot_e);
    Ok(ElementOutput {
        f_in: DVector::zeros(0),
        f_int: DVector::zeros(0),
        f_ext: DVector::zeros(0),
        fbar_in,
        fbar_int,
        tangent: k_phiphi.map(|k| ElementTangent {
            k_x: DMatrix::zeros(0, 0),
            k_v: DMatrix::zeros(0, 0),
            k_xphi: DMatrix::zeros(0, 0),
            k_phix: DMatrix::zeros(0, 0),
            k_phiphi: k,
        }),
    })
}
