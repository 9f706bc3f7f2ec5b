use crate::{Error, Result};

/// A univariate knot vector, either open (clamped) or uniform-periodic.
///
/// For the periodic form only the element count is stored; spacing is
/// uniform and the connectivity wraps. Degree >= 2 is required throughout
/// because both governing weak forms contain second derivatives.
#[derive(Debug, Clone)]
pub struct KnotVector {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub periodic: bool,
}

impl KnotVector {
    /// Open (clamped) uniform knot vector with `elems` spans on [0,1].
    pub fn open_uniform(degree: usize, elems: usize) -> Result<Self> {
        check_degree(degree)?;
        if elems == 0 {
            return Err(Error::BadArgument("need at least one element".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        for i in 1..elems {
            knots.push(i as f64 / elems as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(KnotVector {
            degree,
            knots,
            periodic: false,
        })
    }

    /// Uniform periodic knot vector with `elems` spans. Wrapping requires at
    /// least degree + 1 elements so no basis function overlaps itself.
    pub fn periodic_uniform(degree: usize, elems: usize) -> Result<Self> {
        check_degree(degree)?;
        if elems < degree + 1 {
            return Err(Error::Config {
                line: None,
                msg: format!(
                    "periodic direction needs at least degree+1 = {} elements, got {elems}",
                    degree + 1
                ),
            });
        }
        let knots = (0..=elems).map(|i| i as f64 / elems as f64).collect();
        Ok(KnotVector {
            degree,
            knots,
            periodic: true,
        })
    }

    /// Number of spans (elements).
    pub fn n_elems(&self) -> usize {
        if self.periodic {
            self.knots.len() - 1
        } else {
            self.knots
                .windows(2)
                .filter(|w| w[1] > w[0])
                .count()
        }
    }

    /// Number of basis functions.
    pub fn n_basis(&self) -> usize {
        if self.periodic {
            self.n_elems()
        } else {
            self.knots.len() - self.degree - 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_degree(self.degree)?;
        if self.knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::BadArgument("knots must be non-decreasing".into()));
        }
        Ok(())
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if degree < 2 {
        return Err(Error::BadArgument(format!(
            "spline degree must be >= 2 for C1 continuity, got {degree}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_counts() {
        let kv = KnotVector::open_uniform(2, 4).unwrap();
        assert_eq!(kv.n_elems(), 4);
        assert_eq!(kv.n_basis(), 6);
        kv.validate().unwrap();
    }

    #[test]
    fn periodic_counts() {
        let kv = KnotVector::periodic_uniform(3, 8).unwrap();
        assert_eq!(kv.n_elems(), 8);
        assert_eq!(kv.n_basis(), 8);
    }

    #[test]
    fn periodic_needs_enough_elements() {
        assert!(KnotVector::periodic_uniform(2, 2).is_err());
        assert!(KnotVector::periodic_uniform(2, 3).is_ok());
    }

    #[test]
    fn degree_one_rejected() {
        assert!(KnotVector::open_uniform(1, 4).is_err());
    }
}
