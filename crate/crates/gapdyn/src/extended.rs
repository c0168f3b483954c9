//! Extended-real scalars for convex analysis: finite values plus +inf.
//!
//! Values of convex integrands live in (-inf, +inf]. Minus infinity is
//! never representable, so sums of extended values cannot produce an
//! indeterminate form: `a + inf = inf` and `t * inf = inf` for `t > 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A real number or +inf. NaN and -inf are rejected at construction.
#[derive(Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal(0.0);
    pub const INFINITY: ExtReal = ExtReal(f64::INFINITY);

    /// Wraps a finite scalar. Errors on NaN or infinities.
    pub fn finite(v: f64) -> crate::Result<ExtReal> {
        if v.is_finite() {
            Ok(ExtReal(v))
        } else {
            Err(crate::Error::NonFinite {
                context: "ExtReal::finite",
            })
        }
    }

    /// Wraps a scalar that may be +inf. Errors on NaN or -inf.
    pub fn new(v: f64) -> crate::Result<ExtReal> {
        if v.is_nan() || v == f64::NEG_INFINITY {
            Err(crate::Error::NonFinite {
                context: "ExtReal::new",
            })
        } else {
            Ok(ExtReal(v))
        }
    }

    /// Raw value; +inf maps to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// Indicator value: 0 when `cond` holds, +inf otherwise.
    pub fn indicator(cond: bool) -> ExtReal {
        if cond {
            ExtReal::ZERO
        } else {
            ExtReal::INFINITY
        }
    }

    /// Sum of extended terms; +inf absorbs.
    pub fn sum<I: IntoIterator<Item = ExtReal>>(terms: I) -> ExtReal {
        let mut acc = 0.0f64;
        for t in terms {
            if t.is_infinite() {
                return ExtReal::INFINITY;
            }
            acc += t.0;
        }
        ExtReal(acc)
    }

    /// `self - b` for finite `b`; +inf stays +inf.
    pub fn sub_finite(self, b: f64) -> ExtReal {
        debug_assert!(b.is_finite());
        if self.is_infinite() {
            ExtReal::INFINITY
        } else {
            ExtReal(self.0 - b)
        }
    }

    /// `t * self` for `t >= 0`; convention `0 * inf = 0` (used by
    /// quadrature weights, where a zero weight removes the term).
    pub fn scale(self, t: f64) -> ExtReal {
        debug_assert!(t >= 0.0);
        if t == 0.0 {
            ExtReal::ZERO
        } else if self.is_infinite() {
            ExtReal::INFINITY
        } else {
            ExtReal(self.0 * t)
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_infinite() || rhs.is_infinite() {
            ExtReal::INFINITY
        } else {
            ExtReal(self.0 + rhs.0)
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN or -inf; use `ExtReal::new` for fallible conversion.
    fn from(v: f64) -> ExtReal {
        ExtReal::new(v).expect("NaN or -inf cannot enter extended-real arithmetic")
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "+inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_absorbs_addition() {
        let a = ExtReal::finite(2.0).unwrap();
        assert_eq!((a + ExtReal::INFINITY), ExtReal::INFINITY);
        assert_eq!((a + a).value(), 4.0);
    }

    #[test]
    fn rejects_nan_and_neg_infinity() {
        assert!(ExtReal::new(f64::NAN).is_err());
        assert!(ExtReal::new(f64::NEG_INFINITY).is_err());
        assert!(ExtReal::new(f64::INFINITY).is_ok());
        assert!(ExtReal::finite(f64::INFINITY).is_err());
    }

    #[test]
    fn zero_weight_drops_infinite_term() {
        assert_eq!(ExtReal::INFINITY.scale(0.0), ExtReal::ZERO);
        assert_eq!(ExtReal::INFINITY.scale(0.5), ExtReal::INFINITY);
    }

    #[test]
    fn ordering_places_infinity_last() {
        let a = ExtReal::finite(3.0).unwrap();
        assert!(a < ExtReal::INFINITY);
        assert!(ExtReal::ZERO < a);
    }
}
