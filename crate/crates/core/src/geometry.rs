//! Differential geometry of the discretized surface at evaluation points:
//! tangents, metric, curvature, Christoffel symbols, covariant second
//! derivatives and the surface Laplacian of the basis.

use crate::spline::BasisEval;
use nalgebra::Vector3;

/// Geometry became degenerate (vanishing or inverted metric).
#[derive(Debug, Clone, Copy)]
pub struct DegenerateSurface;

/// All geometric quantities of one configuration at one surface point.
///
/// `stretch` (J) and `i1` are relative to a reference configuration and
/// equal 1 and 2 until [`SurfacePointGeometry::set_reference`] is called.
#[derive(Debug, Clone)]
pub struct SurfacePointGeometry {
    /// Covariant tangents a_1, a_2.
    pub a: [Vector3<f64>; 2],
    /// Unit normal a_1 x a_2 / |a_1 x a_2|.
    pub normal: Vector3<f64>,
    /// Metric a_ab.
    pub met: [[f64; 2]; 2],
    /// Inverse metric a^ab.
    pub met_inv: [[f64; 2]; 2],
    pub det_met: f64,
    /// Curvature components b_ab.
    pub curv: [[f64; 2]; 2],
    /// Christoffel symbols of the second kind, indexed [gamma][alpha][beta].
    pub christoffel: [[[f64; 2]; 2]; 2],
    /// Mean curvature H = a^ab b_ab / 2.
    pub mean_curv: f64,
    /// Area density |a_1 x a_2| with respect to the parametric measure.
    pub area_density: f64,
    /// Second parametric derivative vectors of the map: [d11, d22, d12].
    pub dd: [Vector3<f64>; 3],
    /// Area stretch J relative to the reference configuration.
    pub stretch: f64,
    /// First invariant I1 = A^ab a_ab relative to the reference.
    pub i1: f64,
}

/// Covariant derivative operators of the basis at a point, ready to be
/// dotted with nodal coefficient vectors.
#[derive(Debug, Clone)]
pub struct BasisSurfaceOperators {
    /// Covariant second derivatives N_;ab, ordered [11, 22, 12].
    pub d2c: [Vec<f64>; 3],
    /// Surface Laplacian row: a^ab N_;ab.
    pub laplace: Vec<f64>,
    /// Surface gradient vectors a^ab N_,a a_b per basis function.
    pub grad: Vec<Vector3<f64>>,
}

/// Builds the point geometry from basis derivatives and nodal positions.
/// Fails when the metric is degenerate (relative determinant tolerance
/// 1e-14), which flags inverted elements during Newton iterations.
pub fn point_geometry(
    basis: &BasisEval,
    nodes: &[Vector3<f64>],
) -> Result<SurfacePointGeometry, DegenerateSurface> {
    let ne = basis.vals.len();
    assert_eq!(nodes.len(), ne, "node count does not match basis");
    let mut a = [Vector3::zeros(), Vector3::zeros()];
    let mut dd = [Vector3::zeros(), Vector3::zeros(), Vector3::zeros()];
    for l in 0..ne {
        a[0] += basis.d1[0][l] * nodes[l];
        a[1] += basis.d1[1][l] * nodes[l];
        dd[0] += basis.d2[0][l] * nodes[l];
        dd[1] += basis.d2[1][l] * nodes[l];
        dd[2] += basis.d2[2][l] * nodes[l];
    }
    let met = [
        [a[0].dot(&a[0]), a[0].dot(&a[1])],
        [a[1].dot(&a[0]), a[1].dot(&a[1])],
    ];
    let det = met[0][0] * met[1][1] - met[0][1] * met[1][0];
    let scale = met[0][0].max(met[1][1]);
    if !(det > 1e-14 * scale * scale) {
        return Err(DegenerateSurface);
    }
    let met_inv = [
        [met[1][1] / det, -met[0][1] / det],
        [-met[1][0] / det, met[0][0] / det],
    ];
    let cross = a[0].cross(&a[1]);
    let area_density = cross.norm();
    let normal = cross / area_density;

    let pair = |al: usize, be: usize| -> usize {
        match (al, be) {
            (0, 0) => 0,
            (1, 1) => 1,
            _ => 2,
        }
    };
    let mut curv = [[0.0; 2]; 2];
    let mut christoffel = [[[0.0; 2]; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            let d = dd[pair(al, be)];
            curv[al][be] = normal.dot(&d);
            for g in 0..2 {
                // Gamma^g_ab = a^g . d_ab
                christoffel[g][al][be] =
                    met_inv[g][0] * a[0].dot(&d) + met_inv[g][1] * a[1].dot(&d);
            }
        }
    }
    let mean_curv = 0.5
        * (met_inv[0][0] * curv[0][0]
            + met_inv[1][1] * curv[1][1]
            + 2.0 * met_inv[0][1] * curv[0][1]);

    Ok(SurfacePointGeometry {
        a,
        normal,
        met,
        met_inv,
        det_met: det,
        curv,
        christoffel,
        mean_curv,
        area_density,
        dd,
        stretch: 1.0,
        i1: 2.0,
    })
}

impl SurfacePointGeometry {
    /// Contravariant tangent a^g = a^{g,d} a_d.
    pub fn contravariant(&self, g: usize) -> Vector3<f64> {
        self.met_inv[g][0] * self.a[0] + self.met_inv[g][1] * self.a[1]
    }

    /// Fills the area stretch J and first invariant I1 of this (current)
    /// configuration relative to `reference`.
    pub fn set_reference(&mut self, reference: &SurfacePointGeometry) {
        self.stretch = (self.det_met / reference.det_met).sqrt();
        let ai = &reference.met_inv;
        self.i1 = ai[0][0] * self.met[0][0]
            + ai[1][1] * self.met[1][1]
            + 2.0 * ai[0][1] * self.met[0][1];
    }
}

/// Covariant second derivatives, surface Laplacian and surface gradients of
/// the basis functions at a point with geometry `geom`.
pub fn covariant_ops(geom: &SurfacePointGeometry, basis: &BasisEval) -> BasisSurfaceOperators {
    let ne = basis.vals.len();
    let mut d2c = [vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]];
    let pairs = [(0usize, 0usize), (1, 1), (0, 1)];
    for (k, &(al, be)) in pairs.iter().enumerate() {
        let g1 = geom.christoffel[0][al][be];
        let g2 = geom.christoffel[1][al][be];
        for l in 0..ne {
            d2c[k][l] = basis.d2[k][l] - g1 * basis.d1[0][l] - g2 * basis.d1[1][l];
        }
    }
    let mut laplace = vec![0.0; ne];
    let ai = &geom.met_inv;
    for l in 0..ne {
        laplace[l] = ai[0][0] * d2c[0][l] + ai[1][1] * d2c[1][l] + 2.0 * ai[0][1] * d2c[2][l];
    }
    let ac = [geom.contravariant(0), geom.contravariant(1)];
    let grad = (0..ne)
        .map(|l| basis.d1[0][l] * ac[0] + basis.d1[1][l] * ac[1])
        .collect();
    BasisSurfaceOperators { d2c, laplace, grad }
}

/// Material rate of the metric and the contravariant rate
/// adot^ab = -a^ag adot_gd a^db, from nodal velocities.
pub fn metric_rate(
    geom: &SurfacePointGeometry,
    basis: &BasisEval,
    velocities: &[Vector3<f64>],
) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let ne = basis.vals.len();
    assert_eq!(velocities.len(), ne);
    let mut adot = [Vector3::zeros(), Vector3::zeros()];
    for l in 0..ne {
        adot[0] += basis.d1[0][l] * velocities[l];
        adot[1] += basis.d1[1][l] * velocities[l];
    }
    let mut rate = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            rate[al][be] = geom.a[al].dot(&adot[be]) + adot[al].dot(&geom.a[be]);
        }
    }
    let ai = &geom.met_inv;
    let mut rate_up = [[0.0; 2]; 2];
    for al in 0..2 {
        for be in 0..2 {
            let mut s = 0.0;
            for g in 0..2 {
                for d in 0..2 {
                    s += ai[al][g] * rate[g][d] * ai[d][be];
                }
            }
            rate_up[al][be] = -s;
        }
    }
    (rate, rate_up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{build_structured_patch, PatchSpec, SplineSpace};
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Single biquadratic Bezier element with an identity-map control net:
    /// x(xi) = (xi, eta, 0).
    fn flat_patch() -> (SplineSpace, Vec<Vector3<f64>>) {
        let space = build_structured_patch(&PatchSpec::open(2, 1, 1), None).unwrap();
        let ord = [0.0, 0.5, 1.0];
        let mut nodes = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                nodes.push(Vector3::new(ord[i], ord[j], 0.0));
            }
        }
        (space, nodes)
    }

    /// Paraboloid z = (xi^2 + eta^2) / (2 R), exactly representable at
    /// degree 2; its mean curvature at the apex is exactly 1/R.
    fn paraboloid_patch(radius: f64) -> (SplineSpace, Vec<Vector3<f64>>) {
        let space = build_structured_patch(&PatchSpec::open(2, 1, 1), None).unwrap();
        let ord = [0.0, 0.5, 1.0];
        let zord = [0.0, 0.0, 1.0]; // Bernstein ordinates of t^2
        let mut nodes = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let z = (zord[i] + zord[j]) / (2.0 * radius);
                nodes.push(Vector3::new(ord[i], ord[j], z));
            }
        }
        (space, nodes)
    }

    #[test]
    fn flat_patch_identity_metric() {
        let (space, nodes) = flat_patch();
        let b = space.element_basis(0, (0.3, 0.7)).unwrap();
        let g = point_geometry(&b, &nodes).unwrap();
        assert!((g.met[0][0] - 1.0).abs() < 1e-13);
        assert!((g.met[1][1] - 1.0).abs() < 1e-13);
        assert!(g.met[0][1].abs() < 1e-13);
        for al in 0..2 {
            for be in 0..2 {
                assert!(g.curv[al][be].abs() < 1e-13);
                for gm in 0..2 {
                    assert!(g.christoffel[gm][al][be].abs() < 1e-12);
                }
            }
        }
        assert!(g.mean_curv.abs() < 1e-13);
        assert!((g.stretch - 1.0).abs() < 1e-15);
        assert!((g.normal - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-13);
    }

    #[test]
    fn paraboloid_apex_curvature() {
        for radius in [1.0, 2.5, 10.0] {
            let (space, nodes) = paraboloid_patch(radius);
            let b = space.element_basis(0, (0.0, 0.0)).unwrap();
            let g = point_geometry(&b, &nodes).unwrap();
            assert!(
                (g.mean_curv - 1.0 / radius).abs() < 1e-12,
                "H = {} for R = {radius}",
                g.mean_curv
            );
        }
    }

    #[test]
    fn orthogonality_and_inverse_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (space, mut nodes) = paraboloid_patch(1.5);
        for n in nodes.iter_mut() {
            *n += 0.05 * Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
        }
        for _ in 0..20 {
            let xi = (rng.gen::<f64>(), rng.gen::<f64>());
            let b = space.element_basis(0, xi).unwrap();
            let g = point_geometry(&b, &nodes).unwrap();
            assert!(g.normal.dot(&g.a[0]).abs() < 1e-12);
            assert!(g.normal.dot(&g.a[1]).abs() < 1e-12);
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for k in 0..2 {
                        s += g.met_inv[i][k] * g.met[k][j];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (space, nodes) = paraboloid_patch(2.0);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.2);
        let shift = Vector3::new(0.4, -2.0, 1.3);
        let moved: Vec<Vector3<f64>> = nodes.iter().map(|p| rot * p + shift).collect();
        for _ in 0..20 {
            let xi = (rng.gen::<f64>(), rng.gen::<f64>());
            let b = space.element_basis(0, xi).unwrap();
            let g0 = point_geometry(&b, &nodes).unwrap();
            let mut g1 = point_geometry(&b, &moved).unwrap();
            g1.set_reference(&g0);
            for al in 0..2 {
                for be in 0..2 {
                    assert!((g0.met[al][be] - g1.met[al][be]).abs() < 1e-10);
                    assert!((g0.curv[al][be] - g1.curv[al][be]).abs() < 1e-10);
                }
            }
            assert!((g0.mean_curv - g1.mean_curv).abs() < 1e-10);
            assert!((g1.stretch - 1.0).abs() < 1e-10);
            assert!((g1.i1 - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn covariant_ops_flat_fields() {
        let (space, nodes) = flat_patch();
        let b = space.element_basis(0, (0.4, 0.6)).unwrap();
        let g = point_geometry(&b, &nodes).unwrap();
        let ops = covariant_ops(&g, &b);

        // constant field
        let c = vec![3.7; 9];
        let lap: f64 = ops.laplace.iter().zip(&c).map(|(l, c)| l * c).sum();
        assert!(lap.abs() < 1e-12);

        // linear field phi = xi: surface gradient (1,0,0), Laplacian 0
        let ord = [0.0, 0.5, 1.0];
        let lin: Vec<f64> = (0..9).map(|l| ord[l % 3]).collect();
        let lap: f64 = ops.laplace.iter().zip(&lin).map(|(l, c)| l * c).sum();
        assert!(lap.abs() < 1e-12);
        let grad: Vector3<f64> = ops.grad.iter().zip(&lin).map(|(gv, c)| gv * *c).sum();
        assert!((grad - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);

        // quadratic field phi = xi^2: Laplacian 2 (degree-2 reproduction)
        let zord = [0.0, 0.0, 1.0];
        let quad: Vec<f64> = (0..9).map(|l| zord[l % 3]).collect();
        let lap: f64 = ops.laplace.iter().zip(&quad).map(|(l, c)| l * c).sum();
        assert!((lap - 2.0).abs() < 1e-12);
    }

    #[test]
    fn christoffel_identity_on_curved_patch() {
        // Delta_s of a constant must vanish on curved geometry too
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (space, nodes) = paraboloid_patch(0.8);
        for _ in 0..20 {
            let xi = (rng.gen::<f64>(), rng.gen::<f64>());
            let b = space.element_basis(0, xi).unwrap();
            let g = point_geometry(&b, &nodes).unwrap();
            let ops = covariant_ops(&g, &b);
            let s: f64 = ops.laplace.iter().sum();
            assert!(s.abs() < 1e-10);
        }
    }

    #[test]
    fn metric_rate_cases() {
        let (space, nodes) = flat_patch();
        let b = space.element_basis(0, (0.25, 0.5)).unwrap();
        let g = point_geometry(&b, &nodes).unwrap();

        let zero = vec![Vector3::zeros(); 9];
        let (r, _) = metric_rate(&g, &b, &zero);
        assert!(r.iter().flatten().all(|v| v.abs() < 1e-15));

        let trans = vec![Vector3::new(0.3, -0.2, 0.9); 9];
        let (r, _) = metric_rate(&g, &b, &trans);
        assert!(r.iter().flatten().all(|v| v.abs() < 1e-13));

        // uniform in-plane stretch rate v = xi e1: adot_11 = 2
        let ord = [0.0, 0.5, 1.0];
        let stretch: Vec<Vector3<f64>> =
            (0..9).map(|l| Vector3::new(ord[l % 3], 0.0, 0.0)).collect();
        let (r, rup) = metric_rate(&g, &b, &stretch);
        assert!((r[0][0] - 2.0).abs() < 1e-13);
        assert!(r[0][1].abs() < 1e-13);
        assert!(r[1][1].abs() < 1e-13);
        // flat identity metric: adot^ab = -adot_ab
        assert!((rup[0][0] + 2.0).abs() < 1e-13);
    }

    #[test]
    fn degenerate_metric_detected() {
        let space = build_structured_patch(&PatchSpec::open(2, 1, 1), None).unwrap();
        let nodes = vec![Vector3::zeros(); 9];
        let b = space.element_basis(0, (0.5, 0.5)).unwrap();
        assert!(point_geometry(&b, &nodes).is_err());
    }
}
