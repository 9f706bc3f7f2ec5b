//! Structured tensor-product patches: open or periodic uniform knot vectors
//! in each direction, optional rational weights, dyadic refinement helpers.

use super::extraction::{extract_open, extract_periodic_uniform, Extraction1d};
use super::knots::KnotVector;
use super::{ExtractionElement, SplineSpace};
use crate::{Error, Result};

/// Parameters of a structured patch.
#[derive(Debug, Clone, Copy)]
pub struct PatchSpec {
    pub degree: usize,
    pub elems_u: usize,
    pub elems_v: usize,
    pub periodic_u: bool,
    pub periodic_v: bool,
}

impl PatchSpec {
    pub fn open(degree: usize, elems_u: usize, elems_v: usize) -> Self {
        PatchSpec {
            degree,
            elems_u,
            elems_v,
            periodic_u: false,
            periodic_v: false,
        }
    }

    pub fn periodic(degree: usize, elems_u: usize, elems_v: usize) -> Self {
        PatchSpec {
            degree,
            elems_u,
            elems_v,
            periodic_u: true,
            periodic_v: true,
        }
    }
}

/// Tensor-product layout of a structured patch, kept alongside the generic
/// extraction form for adjacency queries and refinement.
#[derive(Debug, Clone, Copy)]
pub struct StructuredPatch {
    pub spec: PatchSpec,
    pub n_u: usize,
    pub n_v: usize,
}

impl StructuredPatch {
    pub fn node(&self, iu: usize, iv: usize) -> usize {
        iu + self.n_u * iv
    }

    pub fn elem(&self, eu: usize, ev: usize) -> usize {
        eu + self.spec.elems_u * ev
    }

    /// All interior shared edges as (left element, right element, direction)
    /// where direction 0 means the edge is perpendicular to u (right element
    /// follows in u) and 1 perpendicular to v.
    pub fn shared_edges(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let (mu, mv) = (self.spec.elems_u, self.spec.elems_v);
        for ev in 0..mv {
            for eu in 0..mu {
                let e = self.elem(eu, ev);
                if eu + 1 < mu {
                    out.push((e, self.elem(eu + 1, ev), 0));
                } else if self.spec.periodic_u {
                    out.push((e, self.elem(0, ev), 0));
                }
                if ev + 1 < mv {
                    out.push((e, self.elem(eu, ev + 1), 1));
                } else if self.spec.periodic_v {
                    out.push((e, self.elem(eu, 0), 1));
                }
            }
        }
        out
    }
}

/// Builds a structured patch space. `weights`, when given, holds one
/// rational weight per global basis function (u-fastest ordering) and turns
/// the space into a NURBS space; exact conic arcs are obtained this way on
/// open single-element directions.
pub fn build_structured_patch(
    spec: &PatchSpec,
    weights: Option<&[f64]>,
) -> Result<SplineSpace> {
    let p = spec.degree;
    let (ex_u, n_u) = direction_extraction(p, spec.elems_u, spec.periodic_u)?;
    let (ex_v, n_v) = direction_extraction(p, spec.elems_v, spec.periodic_v)?;
    let n_basis = n_u * n_v;
    if let Some(w) = weights {
        if w.len() != n_basis {
            return Err(Error::Config {
                line: None,
                msg: format!("{} weights for {} basis functions", w.len(), n_basis),
            });
        }
    }

    let nb1 = p + 1;
    let mut elements = Vec::with_capacity(spec.elems_u * spec.elems_v);
    for ev in 0..spec.elems_v {
        for eu in 0..spec.elems_u {
            let id = eu + spec.elems_u * ev;
            let cu = &ex_u[eu.min(ex_u.len() - 1)];
            let cv = &ex_v[ev.min(ex_v.len() - 1)];
            let mut indices = Vec::with_capacity(nb1 * nb1);
            let mut coeffs = Vec::with_capacity(nb1 * nb1);
            for lv in 0..nb1 {
                let iv = dir_index(ev, lv, n_v, spec.periodic_v);
                for lu in 0..nb1 {
                    let iu = dir_index(eu, lu, n_u, spec.periodic_u);
                    indices.push(iu + n_u * iv);
                    let mut row = vec![0.0; nb1 * nb1];
                    for kv in 0..nb1 {
                        for ku in 0..nb1 {
                            row[ku + nb1 * kv] = cu.coeffs[lu][ku] * cv.coeffs[lv][kv];
                        }
                    }
                    coeffs.push(row);
                }
            }
            let w = weights.map(|w| indices.iter().map(|&g| w[g]).collect());
            elements.push(ExtractionElement {
                id,
                indices,
                coeffs,
                weights: w,
            });
        }
    }

    let space = SplineSpace {
        degree: p,
        n_basis,
        elements,
        structured: Some(StructuredPatch {
            spec: *spec,
            n_u,
            n_v,
        }),
    };
    space.validate()?;
    Ok(space)
}

fn direction_extraction(
    p: usize,
    elems: usize,
    periodic: bool,
) -> Result<(Vec<Extraction1d>, usize)> {
    if periodic {
        let kv = KnotVector::periodic_uniform(p, elems)?;
        Ok((vec![extract_periodic_uniform(p)?], kv.n_basis()))
    } else {
        let kv = KnotVector::open_uniform(p, elems)?;
        Ok((extract_open(&kv)?, kv.n_basis()))
    }
}

fn dir_index(e: usize, l: usize, n: usize, periodic: bool) -> usize {
    if periodic {
        (e + l) % n
    } else {
        e + l
    }
}

// ---------------------------------------------------------------------------
// 1D periodic evaluation, Greville collocation and dyadic prolongation.
// These back the exact-fit surface construction of the scenario builders.
// ---------------------------------------------------------------------------

/// Values of the periodic uniform basis at global parameter t in [0, n)
/// (element units). Returns the span index and the p+1 supported values,
/// with local function l belonging to global index (span + l) mod n.
pub fn periodic_basis_1d(degree: usize, n: usize, t: f64) -> Result<(usize, Vec<f64>)> {
    let ex = extract_periodic_uniform(degree)?;
    let tt = t.rem_euclid(n as f64);
    let mut e = tt.floor() as usize;
    if e >= n {
        e = n - 1;
    }
    let s = tt - e as f64;
    let b = super::bernstein_eval(degree, s, 0)?;
    let vals = ex
        .coeffs
        .iter()
        .map(|row| row.iter().zip(&b.rows[0]).map(|(c, b)| c * b).sum())
        .collect();
    Ok((e, vals))
}

/// Greville abscissa (in element units) of periodic basis function g under
/// the (span + l) mod n indexing.
pub fn periodic_greville(degree: usize, n: usize, g: usize) -> f64 {
    (g as f64 + (1.0 - degree as f64) / 2.0).rem_euclid(n as f64)
}

/// Solves the periodic Greville collocation problem: control values c such
/// that the spline takes the values `f[s]` at the Greville sites. Uniquely
/// solvable for every n >= degree + 1.
pub fn fit_periodic_1d(degree: usize, n: usize, f: &[f64]) -> Result<Vec<f64>> {
    use faer::prelude::Solve;
    assert_eq!(f.len(), n);
    let a = periodic_collocation_matrix(degree, n)?;
    let rhs = faer::Mat::from_fn(n, 1, |i, _| f[i]);
    let lu = a.partial_piv_lu();
    let x = lu.solve(&rhs);
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Evaluates a 1D periodic spline with control values `c` at parameter t.
pub fn eval_periodic_1d(degree: usize, n: usize, c: &[f64], t: f64) -> Result<f64> {
    let (e, vals) = periodic_basis_1d(degree, n, t)?;
    Ok(vals
        .iter()
        .enumerate()
        .map(|(l, v)| v * c[(e + l) % n])
        .sum())
}

/// Exact dyadic prolongation of periodic control values from n to 2n
/// elements: the refined spline is the same function. Implemented by
/// collocating the coarse spline at the refined Greville sites.
pub fn prolong_periodic_1d(degree: usize, n: usize, coarse: &[f64]) -> Result<Vec<f64>> {
    let n2 = 2 * n;
    let sites: Vec<f64> = (0..n2)
        .map(|g| periodic_greville(degree, n2, g) / 2.0)
        .collect();
    let f: Vec<f64> = sites
        .iter()
        .map(|&t| eval_periodic_1d(degree, n, coarse, t))
        .collect::<Result<_>>()?;
    fit_periodic_1d(degree, n2, &f)
}

fn periodic_collocation_matrix(degree: usize, n: usize) -> Result<faer::Mat<f64>> {
    let mut a = faer::Mat::<f64>::zeros(n, n);
    for s in 0..n {
        let t = periodic_greville(degree, n, s);
        let (e, vals) = periodic_basis_1d(degree, n, t)?;
        for (l, v) in vals.iter().enumerate() {
            a[(s, (e + l) % n)] += v;
        }
    }
    Ok(a)
}
