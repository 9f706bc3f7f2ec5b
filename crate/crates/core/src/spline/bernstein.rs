use crate::{Error, Result};

/// Values and derivatives of the 1D Bernstein basis of a given degree at a
/// point of the unit interval.
///
/// `rows[k]` holds the k-th derivative of all `degree + 1` basis functions,
/// for `k = 0..=order`.
#[derive(Debug, Clone)]
pub struct BernsteinEval {
    pub rows: Vec<Vec<f64>>,
}

/// Evaluates the degree-`p` Bernstein basis and its derivatives up to
/// `order` (0..=2) at `xi` in [0, 1].
pub fn bernstein_eval(degree: usize, xi: f64, order: usize) -> Result<BernsteinEval> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::BadArgument(format!(
            "Bernstein evaluation point {xi} outside [0, 1]"
        )));
    }
    if order > 2 {
        return Err(Error::BadArgument(format!(
            "Bernstein derivative order {order} not supported (max 2)"
        )));
    }
    let mut rows = Vec::with_capacity(order + 1);
    rows.push(values(degree, xi));
    if order >= 1 {
        // B'_{i,p} = p (B_{i-1,p-1} - B_{i,p-1})
        let lower = values(degree.saturating_sub(1), xi);
        rows.push(derivative_from_lower(degree, &lower));
    }
    if order >= 2 {
        let d2 = if degree >= 2 {
            let lower2 = values(degree - 2, xi);
            let d_lower = derivative_from_lower(degree - 1, &lower2);
            derivative_from_lower(degree, &d_lower)
        } else {
            vec![0.0; degree + 1]
        };
        rows.push(d2);
    }
    Ok(BernsteinEval { rows })
}

/// Plain Bernstein values by the de Casteljau-style recurrence.
fn values(degree: usize, xi: f64) -> Vec<f64> {
    let mut b = vec![0.0; degree + 1];
    b[0] = 1.0;
    for p in 1..=degree {
        let mut saved = 0.0;
        for j in 0..p {
            let tmp = b[j];
            b[j] = saved + (1.0 - xi) * tmp;
            saved = xi * tmp;
        }
        b[p] = saved;
    }
    b
}

/// Lifts degree-(p-1) values (or derivative rows) to the derivative of the
/// degree-p basis: out_i = p (in_{i-1} - in_i), with out-of-range terms zero.
fn derivative_from_lower(degree: usize, lower: &[f64]) -> Vec<f64> {
    if degree == 0 {
        return vec![0.0];
    }
    let p = degree as f64;
    let mut out = vec![0.0; degree + 1];
    for i in 0..=degree {
        let left = if i > 0 { lower[i - 1] } else { 0.0 };
        let right = if i < degree { lower[i] } else { 0.0 };
        out[i] = p * (left - right);
    }
    out
}
