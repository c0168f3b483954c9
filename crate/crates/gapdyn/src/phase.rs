//! Phase-space primitives.
//!
//! A phase vector z = (q, p) pairs generalized coordinates with momenta.
//! Two bilinear forms drive everything downstream:
//!
//! * the duality pairing `<<z1, z2>> = <q1, p2> + <q2, p1>`, which couples
//!   the q-slot of one argument with the p-slot of the other, and
//! * the symplectic form `omega(z1, z2) = <q1, p2> - <q2, p1>`.
//!
//! They are related through conjugation `bar(q, p) = (q, -p)`:
//! `omega(z1, z2) = <<bar(z1), z2>>`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point (or tangent/gap vector) of phase space, with equal-length
/// coordinate and momentum blocks of finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    q: Vec<f64>,
    p: Vec<f64>,
}

fn check_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

impl PhaseVector {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<PhaseVector> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                context: "PhaseVector::new",
                expected: q.len(),
                found: p.len(),
            });
        }
        check_finite(&q, "PhaseVector::new q")?;
        check_finite(&p, "PhaseVector::new p")?;
        Ok(PhaseVector { q, p })
    }

    /// One-block vector (q, p), the layout of the plain mechanical models.
    pub fn scalar(q: f64, p: f64) -> PhaseVector {
        PhaseVector::new(vec![q], vec![p]).expect("finite scalars")
    }

    pub fn zeros(dim: usize) -> PhaseVector {
        PhaseVector {
            q: vec![0.0; dim],
            p: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Conjugation `bar(q, p) = (q, -p)`.
    pub fn conjugate(&self) -> PhaseVector {
        PhaseVector {
            q: self.q.clone(),
            p: self.p.iter().map(|x| -x).collect(),
        }
    }

    /// True iff every entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|&x| x == 0.0)
    }

    /// Flattened coordinates `[q..., p...]`, the layout convex specs see.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.q.clone();
        out.extend_from_slice(&self.p);
        out
    }

    /// Flattened with blocks swapped, `[p..., q...]`. Pairing a flat
    /// vector with a swapped flat vector under the Euclidean dot product
    /// reproduces the duality pairing, which is how conjugates taken with
    /// respect to `<<.,.>>` reduce to ordinary Fenchel conjugates.
    pub fn to_swapped_flat(&self) -> Vec<f64> {
        let mut out = self.p.clone();
        out.extend_from_slice(&self.q);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<PhaseVector> {
        if flat.len() % 2 != 0 {
            return Err(Error::DimensionMismatch {
                context: "PhaseVector::from_flat",
                expected: flat.len() + 1,
                found: flat.len(),
            });
        }
        let n = flat.len() / 2;
        PhaseVector::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn add(&self, other: &PhaseVector) -> Result<PhaseVector> {
        self.check_dim(other, "PhaseVector::add")?;
        Ok(PhaseVector {
            q: zip_with(&self.q, &other.q, |a, b| a + b),
            p: zip_with(&self.p, &other.p, |a, b| a + b),
        })
    }

    pub fn sub(&self, other: &PhaseVector) -> Result<PhaseVector> {
        self.check_dim(other, "PhaseVector::sub")?;
        Ok(PhaseVector {
            q: zip_with(&self.q, &other.q, |a, b| a - b),
            p: zip_with(&self.p, &other.p, |a, b| a - b),
        })
    }

    pub fn scale(&self, t: f64) -> PhaseVector {
        PhaseVector {
            q: self.q.iter().map(|x| t * x).collect(),
            p: self.p.iter().map(|x| t * x).collect(),
        }
    }

    /// Largest entry magnitude across both blocks.
    pub fn norm_inf(&self) -> f64 {
        self.q
            .iter()
            .chain(self.p.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    fn check_dim(&self, other: &PhaseVector, context: &'static str) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found: other.dim(),
            })
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Duality pairing `<<z1, z2>> = <q1, p2> + <q2, p1>`.
pub fn dual_pairing(z1: &PhaseVector, z2: &PhaseVector) -> Result<f64> {
    if z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch {
            context: "dual_pairing",
            expected: z1.dim(),
            found: z2.dim(),
        });
    }
    Ok(dot(&z1.q, &z2.p) + dot(&z2.q, &z1.p))
}

/// Symplectic form `omega(z1, z2) = <q1, p2> - <q2, p1>`.
pub fn symplectic_form(z1: &PhaseVector, z2: &PhaseVector) -> Result<f64> {
    if z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch {
            context: "symplectic_form",
            expected: z1.dim(),
            found: z2.dim(),
        });
    }
    Ok(dot(&z1.q, &z2.p) - dot(&z2.q, &z1.p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(q: &[f64], p: &[f64]) -> PhaseVector {
        PhaseVector::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn pairing_crosses_blocks() {
        let z1 = v(&[1.0, 2.0], &[3.0, 4.0]);
        let z2 = v(&[0.0, 1.0], &[1.0, 0.0]);
        // <q1,p2> + <q2,p1> = (1*1 + 2*0) + (0*3 + 1*4) = 5
        assert_eq!(dual_pairing(&z1, &z2).unwrap(), 5.0);
        assert_eq!(
            dual_pairing(&z1, &z2).unwrap(),
            dual_pairing(&z2, &z1).unwrap()
        );
    }

    #[test]
    fn pairing_of_pure_q_with_pure_q_vanishes() {
        let z1 = v(&[1.0], &[0.0]);
        let z2 = v(&[5.0], &[0.0]);
        assert_eq!(dual_pairing(&z1, &z2).unwrap(), 0.0);
    }

    #[test]
    fn symplectic_form_is_antisymmetric() {
        let z1 = v(&[1.0], &[2.0]);
        let z2 = v(&[3.0], &[4.0]);
        let w = symplectic_form(&z1, &z2).unwrap();
        assert_eq!(w, 1.0 * 4.0 - 3.0 * 2.0);
        assert_eq!(symplectic_form(&z2, &z1).unwrap(), -w);
        assert_eq!(symplectic_form(&z1, &z1).unwrap(), 0.0);
    }

    #[test]
    fn conjugation_is_an_involution_and_links_the_forms() {
        let z1 = v(&[1.5, -2.0], &[0.25, 3.0]);
        let z2 = v(&[-1.0, 0.5], &[2.0, -0.75]);
        assert_eq!(z1.conjugate().conjugate(), z1);
        // omega(z1, z2) = <<bar(z1), z2>>
        let lhs = symplectic_form(&z1, &z2).unwrap();
        let rhs = dual_pairing(&z1.conjugate(), &z2).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn swapped_flat_reproduces_pairing() {
        let z1 = v(&[1.0, 2.0], &[3.0, 4.0]);
        let z2 = v(&[0.5, -1.0], &[2.0, 0.25]);
        let a = dual_pairing(&z1, &z2).unwrap();
        let b = dot(&z1.to_flat(), &z2.to_swapped_flat());
        assert!((a - b).abs() <= 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_a_usage_error() {
        let z1 = v(&[1.0], &[0.0]);
        let z2 = v(&[1.0, 2.0], &[0.0, 0.0]);
        assert!(dual_pairing(&z1, &z2).is_err());
        assert!(symplectic_form(&z1, &z2).is_err());
        assert!(PhaseVector::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(PhaseVector::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(PhaseVector::new(vec![0.0], vec![f64::INFINITY]).is_err());
    }
}
