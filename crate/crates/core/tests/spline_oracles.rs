//! Cross-checks of the extraction-based basis evaluation against a direct
//! Cox-de Boor implementation, plus numerical C1-continuity checks across
//! shared element edges. The recursions here are written independently of
//! the library internals on purpose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shellphase::spline::{build_structured_patch, PatchSpec};

/// Cardinal B-spline C_k of order k (degree k-1) on integer knots [0, k).
fn cardinal(k: usize, t: f64) -> f64 {
    if k == 1 {
        return if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
    }
    let km1 = (k - 1) as f64;
    (t / km1) * cardinal(k - 1, t) + ((k as f64 - t) / km1) * cardinal(k - 1, t - 1.0)
}

fn cardinal_d1(k: usize, t: f64) -> f64 {
    cardinal(k - 1, t) - cardinal(k - 1, t - 1.0)
}

fn cardinal_d2(k: usize, t: f64) -> f64 {
    cardinal(k - 2, t) - 2.0 * cardinal(k - 2, t - 1.0) + cardinal(k - 2, t - 2.0)
}

/// Periodic uniform basis function g (supported on spans g-p .. g) at
/// global parameter t in span units, all mod n.
fn periodic_basis(p: usize, n: usize, g: usize, t: f64, der: usize) -> f64 {
    // evaluate the cardinal spline at every wrapped image of t
    let mut acc = 0.0;
    let base = t - (g as f64 - p as f64);
    for w in -1..=1 {
        let arg = base + (w * n as i64) as f64;
        acc += match der {
            0 => cardinal(p + 1, arg),
            1 => cardinal_d1(p + 1, arg),
            _ => cardinal_d2(p + 1, arg),
        };
    }
    acc
}

/// Open-knot-vector basis functions by the textbook Cox-de Boor recursion,
/// returning all n values at u (0th derivative only; derivatives are
/// checked through the periodic cardinal route).
fn open_basis_all(p: usize, knots: &[f64], n: usize, u: f64) -> Vec<f64> {
    let m = knots.len();
    let mut vals = vec![0.0; m - 1];
    // degree 0
    for i in 0..m - 1 {
        let last_span = knots[i] < knots[m - 1] && knots[i + 1] >= knots[m - 1];
        vals[i] = if (knots[i] <= u && u < knots[i + 1]) || (last_span && u >= knots[m - 1]) {
            1.0
        } else {
            0.0
        };
    }
    for k in 1..=p {
        for i in 0..m - 1 - k {
            let d1 = knots[i + k] - knots[i];
            let d2 = knots[i + k + 1] - knots[i + 1];
            let a = if d1 > 0.0 { (u - knots[i]) / d1 } else { 0.0 };
            let b = if d2 > 0.0 {
                (knots[i + k + 1] - u) / d2
            } else {
                0.0
            };
            vals[i] = a * vals[i] + b * vals[i + 1];
        }
    }
    vals.truncate(n);
    vals
}

#[test]
fn periodic_extraction_matches_cardinal_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for degree in [2usize, 3] {
        let (nu, nv) = (6usize, 5usize);
        let space = build_structured_patch(&PatchSpec::periodic(degree, nu, nv), None).unwrap();
        let patch = space.structured.unwrap();
        for _ in 0..200 {
            let eu = rng.gen_range(0..nu);
            let ev = rng.gen_range(0..nv);
            let (su, sv) = (rng.gen::<f64>(), rng.gen::<f64>());
            let e = patch.elem(eu, ev);
            let b = space.element_basis(e, (su, sv)).unwrap();
            let el = space.element(e).unwrap();
            let (tu, tv) = (eu as f64 + su, ev as f64 + sv);
            for (l, &g) in el.indices.iter().enumerate() {
                let (gu, gv) = (g % nu, g / nu);
                let want = periodic_basis(degree, nu, gu, tu, 0)
                    * periodic_basis(degree, nv, gv, tv, 0);
                assert!(
                    (b.vals[l] - want).abs() < 1e-12,
                    "value mismatch deg {degree} at ({tu},{tv}): {} vs {want}",
                    b.vals[l]
                );
                let want_du = periodic_basis(degree, nu, gu, tu, 1)
                    * periodic_basis(degree, nv, gv, tv, 0);
                assert!((b.d1[0][l] - want_du).abs() < 1e-11);
                let want_dvv = periodic_basis(degree, nu, gu, tu, 0)
                    * periodic_basis(degree, nv, gv, tv, 2);
                assert!((b.d2[1][l] - want_dvv).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn open_extraction_matches_cox_de_boor() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for degree in [2usize, 3, 4] {
        let (mu, mv) = (4usize, 3usize);
        let space = build_structured_patch(&PatchSpec::open(degree, mu, mv), None).unwrap();
        let patch = space.structured.unwrap();
        let knots_u = open_knots(degree, mu);
        let knots_v = open_knots(degree, mv);
        for _ in 0..100 {
            let eu = rng.gen_range(0..mu);
            let ev = rng.gen_range(0..mv);
            let (su, sv) = (rng.gen::<f64>(), rng.gen::<f64>());
            let e = patch.elem(eu, ev);
            let b = space.element_basis(e, (su, sv)).unwrap();
            let el = space.element(e).unwrap();
            let u = (eu as f64 + su) / mu as f64;
            let v = (ev as f64 + sv) / mv as f64;
            let nu_all = open_basis_all(degree, &knots_u, patch.n_u, u);
            let nv_all = open_basis_all(degree, &knots_v, patch.n_v, v);
            for (l, &g) in el.indices.iter().enumerate() {
                let (gu, gv) = (g % patch.n_u, g / patch.n_u);
                let want = nu_all[gu] * nv_all[gv];
                assert!(
                    (b.vals[l] - want).abs() < 1e-12,
                    "deg {degree} elem ({eu},{ev}) basis {g}: {} vs {want}",
                    b.vals[l]
                );
            }
        }
    }
}

fn open_knots(p: usize, elems: usize) -> Vec<f64> {
    let mut k = vec![0.0; p + 1];
    for i in 1..elems {
        k.push(i as f64 / elems as f64);
    }
    k.extend(std::iter::repeat(1.0).take(p + 1));
    k
}

/// Basis values and first parametric derivatives agree from both sides of
/// every shared element edge (C1 across edges; the periodic seam included).
#[test]
fn c1_continuity_across_shared_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spaces = [
        build_structured_patch(&PatchSpec::periodic(2, 5, 4), None).unwrap(),
        build_structured_patch(&PatchSpec::periodic(3, 6, 5), None).unwrap(),
        build_structured_patch(&PatchSpec::open(3, 3, 3), None).unwrap(),
    ];
    let mut checked = 0;
    for space in &spaces {
        let patch = space.structured.unwrap();
        let edges = patch.shared_edges();
        for &(ea, eb, dir) in &edges {
            for _ in 0..3 {
                let t: f64 = rng.gen();
                let (xa, xb) = match dir {
                    0 => ((1.0, t), (0.0, t)),
                    _ => ((t, 1.0), (t, 0.0)),
                };
                let ba = space.element_basis(ea, xa).unwrap();
                let bb = space.element_basis(eb, xb).unwrap();
                let ia = &space.element(ea).unwrap().indices;
                let ib = &space.element(eb).unwrap().indices;
                let mut all: Vec<usize> = ia.iter().chain(ib.iter()).copied().collect();
                all.sort_unstable();
                all.dedup();
                for g in all {
                    let va = lookup(ia, &ba.vals, g);
                    let vb = lookup(ib, &bb.vals, g);
                    assert!((va - vb).abs() < 1e-9, "value jump for basis {g}");
                    for a in 0..2 {
                        let da = lookup(ia, &ba.d1[a], g);
                        let db = lookup(ib, &bb.d1[a], g);
                        assert!(
                            (da - db).abs() < 1e-9,
                            "derivative jump for basis {g} dir {a}: {da} vs {db}"
                        );
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(checked >= 100, "need at least 100 edge samples");
}

fn lookup(indices: &[usize], arr: &[f64], g: usize) -> f64 {
    indices
        .iter()
        .position(|&i| i == g)
        .map(|l| arr[l])
        .unwrap_or(0.0)
}
