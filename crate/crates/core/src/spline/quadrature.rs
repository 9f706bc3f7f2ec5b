use crate::{Error, Result};

/// Tensor-product Gauss-Legendre rule on the unit square.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Points (xi, eta) in [0,1] x [0,1].
    pub points: Vec<(f64, f64)>,
    /// Matching weights; they sum to 1.
    pub weights: Vec<f64>,
}

/// Builds the `n x n` Gauss-Legendre rule on [0,1]^2 (1 <= n <= 10).
pub fn gauss_rule(points_per_direction: usize) -> Result<QuadratureRule> {
    let (x, w) = gauss_1d(points_per_direction)?;
    let n = points_per_direction;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push((x[i], x[j]));
            weights.push(w[i] * w[j]);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Gauss-Legendre nodes and weights on [0,1].
///
/// Nodes are found by Newton iteration on the Legendre polynomial, starting
/// from the Chebyshev estimate; this is accurate to round-off for n <= 10.
pub fn gauss_1d(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 10 {
        return Err(Error::BadArgument(format!(
            "Gauss rule needs 1..=10 points per direction, got {n}"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // root of P_n on [-1,1]
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[n - 1 - k] = 0.5 * (t + 1.0);
        weights[n - 1 - k] = 0.5 * w;
    }
    Ok((nodes, weights))
}

/// Legendre polynomial P_n and its derivative at t, by the three-term
/// recurrence.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}
