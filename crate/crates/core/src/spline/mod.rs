//! C1/C2 spline bases over quadrilateral meshes via per-element Bezier
//! extraction.
//!
//! Structured (optionally periodic) patches are generated internally;
//! unstructured spaces are consumed from extraction files (see [`file`]).

pub mod bernstein;
pub mod extraction;
pub mod file;
pub mod knots;
pub mod patch;
pub mod quadrature;

pub use bernstein::bernstein_eval;
pub use knots::KnotVector;
pub use patch::{build_structured_patch, PatchSpec, StructuredPatch};
pub use quadrature::{gauss_rule, QuadratureRule};

use crate::{Error, Result};

/// One element of a spline space: the global indices of the basis functions
/// supported on it and the matrix mapping the element-local Bernstein basis
/// to their restrictions.
#[derive(Debug, Clone)]
pub struct ExtractionElement {
    pub id: usize,
    /// Global indices of the supported basis functions (length n_e).
    pub indices: Vec<usize>,
    /// `coeffs[l][k]`: coefficient of 2D Bernstein function k (u-fastest
    /// ordering) in the restriction of supported function l.
    pub coeffs: Vec<Vec<f64>>,
    /// Rational weights of the supported functions, when the space is a
    /// NURBS space.
    pub weights: Option<Vec<f64>>,
}

/// A complete spline space over a quadrilateral mesh.
#[derive(Debug, Clone)]
pub struct SplineSpace {
    pub degree: usize,
    pub n_basis: usize,
    pub elements: Vec<ExtractionElement>,
    /// Present when the space was generated as a structured patch; carries
    /// the tensor-product layout used for adjacency and refinement.
    pub structured: Option<StructuredPatch>,
}

/// Basis values and parametric derivatives at one evaluation point.
///
/// Derivatives are taken with respect to the element-local coordinates on
/// [0,1]^2; knot spacing is absorbed by the extraction operators and
/// physical scales enter through the geometry map.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub vals: Vec<f64>,
    /// First derivatives [d/dxi, d/deta].
    pub d1: [Vec<f64>; 2],
    /// Second derivatives [d2/dxi2, d2/deta2, d2/dxi deta].
    pub d2: [Vec<f64>; 3],
}

impl SplineSpace {
    pub fn n_elems(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, id: usize) -> Result<&ExtractionElement> {
        self.elements.get(id).ok_or(Error::UnknownElement(id))
    }

    /// Evaluates all basis functions supported on `elem_id` at local
    /// coordinates `xi` in [0,1]^2, with first and second derivatives.
    /// Rational (NURBS) differentiation is applied when weights are present.
    pub fn element_basis(&self, elem_id: usize, xi: (f64, f64)) -> Result<BasisEval> {
        let el = self.element(elem_id)?;
        let p = self.degree;
        let bu = bernstein_eval(p, xi.0, 2)?;
        let bv = bernstein_eval(p, xi.1, 2)?;
        let ne = el.indices.len();
        let nb = (p + 1) * (p + 1);

        // 2D Bernstein rows: value, d_xi, d_eta, d_xixi, d_etaeta, d_xieta
        let mut b2 = [
            vec![0.0; nb],
            vec![0.0; nb],
            vec![0.0; nb],
            vec![0.0; nb],
            vec![0.0; nb],
            vec![0.0; nb],
        ];
        for j in 0..=p {
            for i in 0..=p {
                let k = i + (p + 1) * j;
                b2[0][k] = bu.rows[0][i] * bv.rows[0][j];
                b2[1][k] = bu.rows[1][i] * bv.rows[0][j];
                b2[2][k] = bu.rows[0][i] * bv.rows[1][j];
                b2[3][k] = bu.rows[2][i] * bv.rows[0][j];
                b2[4][k] = bu.rows[0][i] * bv.rows[2][j];
                b2[5][k] = bu.rows[1][i] * bv.rows[1][j];
            }
        }

        // N = C B, derivative-wise
        let mut rows = [
            vec![0.0; ne],
            vec![0.0; ne],
            vec![0.0; ne],
            vec![0.0; ne],
            vec![0.0; ne],
            vec![0.0; ne],
        ];
        for l in 0..ne {
            let cl = &el.coeffs[l];
            for (r, row) in rows.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in 0..nb {
                    acc += cl[k] * b2[r][k];
                }
                row[l] = acc;
            }
        }

        if let Some(w) = &el.weights {
            rational_correction(&mut rows, w);
        }

        let [vals, dx, dy, dxx, dyy, dxy] = rows;
        Ok(BasisEval {
            vals,
            d1: [dx, dy],
            d2: [dxx, dyy, dxy],
        })
    }

    /// Structural validation: index ranges, coefficient shapes, convex
    /// partition of unity of the extraction rows, full basis coverage.
    pub fn validate(&self) -> Result<()> {
        let nb = (self.degree + 1) * (self.degree + 1);
        let mut covered = vec![false; self.n_basis];
        for el in &self.elements {
            let ne = el.indices.len();
            if el.coeffs.len() != ne {
                return Err(Error::MeshValidation {
                    element: el.id,
                    msg: format!("{} coefficient rows for {} basis indices", el.coeffs.len(), ne),
                });
            }
            if let Some(w) = &el.weights {
                if w.len() != ne {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: format!("{} weights for {} basis indices", w.len(), ne),
                    });
                }
                if w.iter().any(|&wi| wi <= 0.0) {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: "non-positive rational weight".into(),
                    });
                }
            }
            for row in &el.coeffs {
                if row.len() != nb {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: format!("coefficient row of length {}, expected {nb}", row.len()),
                    });
                }
                if row.iter().any(|&c| c < -1e-9) {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: "negative extraction coefficient breaks convexity".into(),
                    });
                }
            }
            for k in 0..nb {
                let s: f64 = el.coeffs.iter().map(|row| row[k]).sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: format!("extraction columns do not sum to one (column {k}: {s})"),
                    });
                }
            }
            for &g in &el.indices {
                if g >= self.n_basis {
                    return Err(Error::MeshValidation {
                        element: el.id,
                        msg: format!("basis index {g} out of range (n = {})", self.n_basis),
                    });
                }
                covered[g] = true;
            }
        }
        if let Some(g) = covered.iter().position(|&c| !c) {
            return Err(Error::MeshValidation {
                element: 0,
                msg: format!("basis function {g} is not referenced by any element"),
            });
        }
        Ok(())
    }
}

/// Converts homogeneous basis rows in place to rational ones:
/// R = wN/W with W = sum w N, including first and second derivatives.
fn rational_correction(rows: &mut [Vec<f64>; 6], w: &[f64]) {
    let ne = w.len();
    let mut wsum = [0.0; 6];
    for (r, s) in wsum.iter_mut().enumerate() {
        *s = (0..ne).map(|l| w[l] * rows[r][l]).sum();
    }
    let wv = wsum[0];
    for l in 0..ne {
        let n = rows[0][l];
        let n1 = [rows[1][l], rows[2][l]];
        let n2 = [rows[3][l], rows[4][l], rows[5][l]];
        let r0 = w[l] * n / wv;
        // first derivatives
        let mut r1 = [0.0; 2];
        for a in 0..2 {
            r1[a] = w[l] * (n1[a] / wv - n * wsum[1 + a] / (wv * wv));
        }
        // second derivatives: pairs (xx)=(0,0), (yy)=(1,1), (xy)=(0,1)
        let pairs = [(0usize, 0usize), (1, 1), (0, 1)];
        let mut r2 = [0.0; 3];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let wa = wsum[1 + a];
            let wb = wsum[1 + b];
            let wab = wsum[3 + k];
            r2[k] = w[l]
                * (n2[k] / wv - (n1[a] * wb + n1[b] * wa + n * wab) / (wv * wv)
                    + 2.0 * n * wa * wb / (wv * wv * wv));
        }
        rows[0][l] = r0;
        rows[1][l] = r1[0];
        rows[2][l] = r1[1];
        rows[3][l] = r2[0];
        rows[4][l] = r2[1];
        rows[5][l] = r2[2];
    }
}
