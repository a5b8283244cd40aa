use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

/// Convex modulus `H` controlling how fast the kernel relaxes.
///
/// `Linear` violates `H'(0) = 0`; it is admitted as a relaxed modulus because
/// it is the natural partner of exponential kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ConvexModulus {
    /// `H(t) = c t`
    Linear {
        #[serde(default = "one")]
        c: f64,
    },
    /// `H(t) = c t^r`, `r > 1`
    Power {
        r: f64,
        #[serde(default = "one")]
        c: f64,
    },
}

impl ConvexModulus {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConvexModulus::Linear { c } if c > 0.0 && c.is_finite() => Ok(()),
            ConvexModulus::Power { r, c } if r > 1.0 && c > 0.0 && r.is_finite() && c.is_finite() => Ok(()),
            m => Err(Error::InvalidParameter(format!("inadmissible modulus {m:?}"))),
        }
    }

    pub fn is_relaxed(&self) -> bool {
        matches!(self, ConvexModulus::Linear { .. })
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ConvexModulus::Linear { c } => c * t,
            ConvexModulus::Power { r, c } => c * t.powf(r),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ConvexModulus::Linear { c } => c,
            ConvexModulus::Power { r, c } => c * r * t.powf(r - 1.0),
        }
    }

    /// `H^{-1}(u)` for `u >= 0`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if u < 0.0 {
            return Err(Error::Domain(format!("H^-1 evaluated at negative argument {u}")));
        }
        Ok(match *self {
            ConvexModulus::Linear { c } => u / c,
            ConvexModulus::Power { r, c } => (u / c).powf(1.0 / r),
        })
    }

    /// `(H')^{-1}(s)`, defined only when `H'` is strictly increasing.
    pub fn derivative_inverse(&self, s: f64) -> Result<f64> {
        match *self {
            ConvexModulus::Linear { .. } => Err(Error::UnsupportedConjugate("linear modulus (H' constant)".into())),
            ConvexModulus::Power { r, c } => {
                if s < 0.0 {
                    return Err(Error::Domain(format!("(H')^-1 evaluated at negative argument {s}")));
                }
                Ok((s / (c * r)).powf(1.0 / (r - 1.0)))
            }
        }
    }

    /// Young conjugate `H*(s) = s (H')^{-1}(s) - H((H')^{-1}(s))`.
    pub fn young_conjugate(&self, s: f64) -> Result<f64> {
        let tau = self.derivative_inverse(s)?;
        Ok(s * tau - self.value(tau))
    }
}

/// True iff `A B <= H*(A) + H(B) + 1e-12` for every pair.
pub fn young_inequality_check(h: &ConvexModulus, samples: &[(f64, f64)]) -> Result<bool> {
    for &(a, b) in samples {
        if b < 0.0 {
            return Err(Error::Domain(format!("B = {b} must be non-negative")));
        }
        if a * b > h.young_conjugate(a)? + h.value(b) + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conjugate_closed_forms() {
        let h2 = ConvexModulus::Power { r: 2.0, c: 1.0 };
        assert!((h2.young_conjugate(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(h2.young_conjugate(1e-300).unwrap().abs() < 1e-300);
        let h3 = ConvexModulus::Power { r: 3.0, c: 1.0 };
        assert!((h3.young_conjugate(3.0).unwrap() - 2.0).abs() < 1e-14);
        for s in [0.1, 0.7, 4.0] {
            assert!((h2.young_conjugate(s).unwrap() - s * s / 4.0).abs() < 1e-14);
            assert!(h2.young_conjugate(s).unwrap() <= s * h2.derivative_inverse(s).unwrap());
        }
    }

    #[test]
    fn linear_has_no_conjugate() {
        let h = ConvexModulus::Linear { c: 1.0 };
        assert!(matches!(h.young_conjugate(1.0), Err(Error::UnsupportedConjugate(_))));
        assert!(h.is_relaxed());
    }

    #[test]
    fn young_examples() {
        let h = ConvexModulus::Power { r: 2.0, c: 1.0 };
        assert!(young_inequality_check(&h, &[(2.0, 1.0)]).unwrap());
        assert!(young_inequality_check(&h, &[(0.0, 1.0)]).unwrap());
    }

    #[test]
    fn young_grid_for_catalog() {
        let grid: Vec<f64> = (0..20).map(|i| 0.1 + i as f64 * (4.9 / 19.0)).collect();
        let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
        for r in [1.5, 2.0, 3.0] {
            let h = ConvexModulus::Power { r, c: 1.0 };
            assert!(young_inequality_check(&h, &pairs).unwrap(), "r = {r}");
        }
    }

    #[test]
    fn inverse_round_trip_and_convexity() {
        for h in [ConvexModulus::Linear { c: 2.0 }, ConvexModulus::Power { r: 2.5, c: 0.7 }] {
            assert_eq!(h.value(0.0), 0.0);
            for i in 1..=100 {
                let t = i as f64 * 0.1;
                let back = h.inverse(h.value(t)).unwrap();
                assert!((back - t).abs() <= 1e-10 * t);
                let s = t * 0.37;
                assert!(h.value(0.5 * (s + t)) <= 0.5 * (h.value(s) + h.value(t)) + 1e-12);
            }
        }
        assert!(matches!(ConvexModulus::Power { r: 2.0, c: 1.0 }.inverse(-1.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn young_holds_for_power_moduli(r in 1.2f64..4.0, c in 0.1f64..5.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let h = ConvexModulus::Power { r, c };
            let lhs = a * b;
            let rhs = h.young_conjugate(a).unwrap() + h.value(b);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
