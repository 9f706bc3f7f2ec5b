//! Per-element Bezier extraction of univariate B-spline bases.
//!
//! Extraction operators are obtained by explicit knot insertion: every
//! interior knot is raised to multiplicity `degree`, which turns the spline
//! into piecewise Bezier form. The accumulated insertion matrix then gives,
//! per element, the coefficients of each supported basis function in the
//! element-local Bernstein basis on [0,1].

use super::knots::KnotVector;
use crate::Result;

/// Extraction operator of one 1D element: `coeffs[l][k]` is the coefficient
/// of local Bernstein function `k` in the restriction of supported basis
/// function `l` (ordered by ascending global index).
#[derive(Debug, Clone)]
pub struct Extraction1d {
    pub coeffs: Vec<Vec<f64>>,
}

/// Computes the extraction operator of every span of an open knot vector.
pub fn extract_open(kv: &KnotVector) -> Result<Vec<Extraction1d>> {
    kv.validate()?;
    assert!(!kv.periodic, "extract_open expects an open knot vector");
    let p = kv.degree;
    let n = kv.n_basis();

    // Refine to Bezier form: insert each distinct interior knot up to
    // multiplicity p, tracking the control-coefficient transfer matrix T
    // (rows: refined functions, cols: original functions). Columns of T are
    // the Bernstein coefficients of the original basis across segments.
    let mut knots = kv.knots.clone();
    let mut transfer = identity(n);
    loop {
        let Some((u, span)) = next_insertion(&knots, p) else {
            break;
        };
        transfer = insert_knot_matrix(&knots, p, u, span, &transfer);
        knots.insert(span + 1, u);
    }

    let n_elems = kv.n_elems();
    let mut out = Vec::with_capacity(n_elems);
    for e in 0..n_elems {
        // In Bezier form element e owns refined functions e*p .. e*p+p; its
        // supported original functions are e .. e+p.
        let mut coeffs = vec![vec![0.0; p + 1]; p + 1];
        for (l, row) in coeffs.iter_mut().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                *c = transfer[e * p + k][e + l];
            }
        }
        out.push(Extraction1d { coeffs });
    }
    Ok(out)
}

/// Extraction operator shared by every span of a uniform periodic knot
/// vector: the fully interior operator of an open uniform vector.
pub fn extract_periodic_uniform(degree: usize) -> Result<Extraction1d> {
    let kv = KnotVector::open_uniform(degree, 2 * degree + 2)?;
    let all = extract_open(&kv)?;
    Ok(all[degree].clone())
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Finds the next interior knot whose multiplicity is below `p`, returning
/// the knot value and the index of the last knot <= u (the insertion span).
fn next_insertion(knots: &[f64], p: usize) -> Option<(f64, usize)> {
    let m = knots.len();
    let lo = knots[0];
    let hi = knots[m - 1];
    let mut i = 0;
    while i < m {
        let u = knots[i];
        let mut mult = 0;
        let mut j = i;
        while j < m && knots[j] == u {
            mult += 1;
            j += 1;
        }
        if u > lo && u < hi && mult < p {
            return Some((u, j - 1));
        }
        i = j;
    }
    None
}

/// One Boehm knot-insertion step applied to the accumulated transfer matrix.
///
/// Inserting u at span k (knots[k] <= u < knots[k+1]) maps coefficients
/// P_i to alpha_i P_i + (1 - alpha_i) P_{i-1}.
fn insert_knot_matrix(
    knots: &[f64],
    p: usize,
    u: f64,
    span: usize,
    transfer: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n_old = knots.len() - p - 1;
    let n_new = n_old + 1;
    let n_cols = transfer[0].len();
    let mut out = vec![vec![0.0; n_cols]; n_new];
    for i in 0..n_new {
        let alpha = if i + p <= span {
            1.0
        } else if i > span {
            0.0
        } else {
            (u - knots[i]) / (knots[i + p] - knots[i])
        };
        for c in 0..n_cols {
            let mut v = 0.0;
            if alpha != 0.0 && i < n_old {
                v += alpha * transfer[i][c];
            }
            if alpha != 1.0 && i > 0 {
                v += (1.0 - alpha) * transfer[i - 1][c];
            }
            out[i][c] = v;
        }
    }
    out
}
