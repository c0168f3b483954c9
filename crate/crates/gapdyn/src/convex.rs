//! A small algebra of convex functions on R^d with exact conjugation.
//!
//! Every function is described by a [`ConvexSpec`] tag. The set of tags is
//! closed under the Legendre-Fenchel transform (`polar`): conjugates are
//! hand-derived per tag and per registered `Sum` pattern rather than
//! computed symbolically, so each pair can be verified independently
//! against the brute-force grid oracle [`ConvexSpec::numerical_conjugate`].
//!
//! Values are extended reals (+inf encodes indicator constraints); see
//! [`ExtReal`] for the arithmetic rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::extended::ExtReal;
use crate::phase::dot;
use crate::{Error, Result};

/// Sup values beyond this cap are reported as +inf by the grid oracle.
pub const CONJUGATE_CAP: f64 = 1e12;

/// One factor of a separable product, acting on a coordinate block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparablePart {
    pub spec: ConvexSpec,
    /// Indices into the ambient space; disjoint across parts.
    pub coords: Vec<usize>,
}

/// Closed, proper convex functions built from a fixed set of shapes.
///
/// * `Quadratic { a, center }`: `(a/2) * |x - center|^2`, `a > 0`.
/// * `Linear { slope }`: `<slope, x>`.
/// * `IndicatorPoint { point }`: 0 at `point`, +inf elsewhere.
/// * `IndicatorBox { lo, hi }`: 0 on the closed box, +inf outside;
///   half-lines via infinite bounds.
/// * `SupportBox { radius }`: `radius * |x|` on the line (the support
///   function of `[-radius, radius]`).
/// * `Sum { terms }`: pointwise extended-real sum.
/// * `SeparableProduct { dim, parts }`: sum of factors applied to disjoint
///   coordinate blocks; coordinates not covered by any part do not enter
///   the value (the function is constant along them).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConvexSpec {
    Quadratic {
        a: f64,
        center: Vec<f64>,
    },
    Linear {
        slope: Vec<f64>,
    },
    IndicatorPoint {
        point: Vec<f64>,
    },
    IndicatorBox {
        #[serde(with = "serde_bounds")]
        lo: Vec<f64>,
        #[serde(with = "serde_bounds")]
        hi: Vec<f64>,
    },
    SupportBox {
        radius: f64,
    },
    Sum {
        terms: Vec<ConvexSpec>,
    },
    SeparableProduct {
        dim: usize,
        parts: Vec<SeparablePart>,
    },
}

/// JSON cannot carry IEEE infinities, so box bounds serialize finite
/// entries as numbers and infinite ones as the strings "inf" / "-inf".
mod serde_bounds {
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Bound {
        Num(f64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Bound> = v
            .iter()
            .map(|&x| {
                if x == f64::INFINITY {
                    Bound::Word("inf".to_string())
                } else if x == f64::NEG_INFINITY {
                    Bound::Word("-inf".to_string())
                } else {
                    Bound::Num(x)
                }
            })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Bound>::deserialize(d)?;
        raw.into_iter()
            .map(|b| match b {
                Bound::Num(x) => Ok(x),
                Bound::Word(w) => match w.as_str() {
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(D::Error::custom(format!("unknown bound {other:?}"))),
                },
            })
            .collect()
    }
}

/// Result of brute-force conjugation on a uniform grid: the conjugate is
/// sampled at the same nodes the supremum ranges over.
#[derive(Clone, Debug)]
pub struct ConjugateTable {
    pub ys: Vec<f64>,
    pub values: Vec<ExtReal>,
    pub spacing: f64,
}

impl ConvexSpec {
    /// Ambient dimension the potential acts on.
    pub fn dim(&self) -> usize {
        match self {
            ConvexSpec::Quadratic { center, .. } => center.len(),
            ConvexSpec::Linear { slope } => slope.len(),
            ConvexSpec::IndicatorPoint { point } => point.len(),
            ConvexSpec::IndicatorBox { lo, .. } => lo.len(),
            ConvexSpec::SupportBox { .. } => 1,
            ConvexSpec::Sum { terms } => terms.first().map_or(0, |t| t.dim()),
            ConvexSpec::SeparableProduct { dim, .. } => *dim,
        }
    }

    /// Checks parameter ranges and structural constraints recursively.
    pub fn validate(&self) -> Result<()> {
        let fin = |v: &[f64], name: &'static str| -> Result<()> {
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "NaN entry".into(),
                });
            }
            Ok(())
        };
        match self {
            ConvexSpec::Quadratic { a, center } => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "Quadratic.a",
                        reason: format!("must be positive and finite, got {a}"),
                    });
                }
                if center.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "Quadratic.center",
                        reason: "entries must be finite".into(),
                    });
                }
                Ok(())
            }
            ConvexSpec::Linear { slope } => {
                if slope.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "Linear.slope",
                        reason: "entries must be finite".into(),
                    });
                }
                Ok(())
            }
            ConvexSpec::IndicatorPoint { point } => {
                if point.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "IndicatorPoint.point",
                        reason: "entries must be finite".into(),
                    });
                }
                Ok(())
            }
            ConvexSpec::IndicatorBox { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        context: "IndicatorBox bounds",
                        expected: lo.len(),
                        found: hi.len(),
                    });
                }
                fin(lo, "IndicatorBox.lo")?;
                fin(hi, "IndicatorBox.hi")?;
                for (&l, &h) in lo.iter().zip(hi) {
                    if l == f64::INFINITY || h == f64::NEG_INFINITY || l > h {
                        return Err(Error::InvalidParameter {
                            name: "IndicatorBox",
                            reason: format!("empty or inverted interval [{l}, {h}]"),
                        });
                    }
                }
                Ok(())
            }
            ConvexSpec::SupportBox { radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "SupportBox.radius",
                        reason: format!("must be nonnegative and finite, got {radius}"),
                    });
                }
                Ok(())
            }
            ConvexSpec::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidParameter {
                        name: "Sum.terms",
                        reason: "must not be empty".into(),
                    });
                }
                let d = terms[0].dim();
                for t in terms {
                    t.validate()?;
                    if t.dim() != d {
                        return Err(Error::DimensionMismatch {
                            context: "Sum terms",
                            expected: d,
                            found: t.dim(),
                        });
                    }
                }
                Ok(())
            }
            ConvexSpec::SeparableProduct { dim, parts } => {
                let mut seen = vec![false; *dim];
                for part in parts {
                    part.spec.validate()?;
                    if part.spec.dim() != part.coords.len() {
                        return Err(Error::DimensionMismatch {
                            context: "SeparablePart coords",
                            expected: part.spec.dim(),
                            found: part.coords.len(),
                        });
                    }
                    for &c in &part.coords {
                        if c >= *dim {
                            return Err(Error::InvalidParameter {
                                name: "SeparablePart.coords",
                                reason: format!("index {c} out of range for dim {dim}"),
                            });
                        }
                        if seen[c] {
                            return Err(Error::InvalidParameter {
                                name: "SeparablePart.coords",
                                reason: format!("coordinate {c} covered twice"),
                            });
                        }
                        seen[c] = true;
                    }
                }
                Ok(())
            }
        }
    }

    fn check_dim(&self, x: &[f64], context: &'static str) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found: x.len(),
            })
        }
    }

    /// Extended-real value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<ExtReal> {
        self.check_dim(x, "ConvexSpec::eval")?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> ExtReal {
        match self {
            ConvexSpec::Quadratic { a, center } => {
                let s: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                ExtReal::from(0.5 * a * s)
            }
            ConvexSpec::Linear { slope } => ExtReal::from(dot(slope, x)),
            ConvexSpec::IndicatorPoint { point } => {
                ExtReal::indicator(x.iter().zip(point).all(|(a, b)| a == b))
            }
            ConvexSpec::IndicatorBox { lo, hi } => ExtReal::indicator(
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(xi, (l, h))| *xi >= *l && *xi <= *h),
            ),
            ConvexSpec::SupportBox { radius } => ExtReal::from(radius * x[0].abs()),
            ConvexSpec::Sum { terms } => {
                ExtReal::sum(terms.iter().map(|t| t.eval_unchecked(x)))
            }
            ConvexSpec::SeparableProduct { parts, .. } => ExtReal::sum(
                parts
                    .iter()
                    .map(|part| part.spec.eval_unchecked(&gather(x, &part.coords))),
            ),
        }
    }

    /// Gradient when the potential is differentiable everywhere (quadratic
    /// and linear shapes); `None` for set-valued subdifferentials.
    fn gradient_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            ConvexSpec::Quadratic { a, center } => {
                Some(x.iter().zip(center).map(|(xi, ci)| a * (xi - ci)).collect())
            }
            ConvexSpec::Linear { slope } => Some(slope.clone()),
            _ => None,
        }
    }

    /// Decides `u in subdifferential(f)(x)` from the closed-form
    /// subdifferential of each shape, with entrywise tolerance `tol`.
    /// Points outside the effective domain return `false`.
    pub fn subgradient_contains(&self, x: &[f64], u: &[f64], tol: f64) -> Result<bool> {
        self.check_dim(x, "ConvexSpec::subgradient_contains x")?;
        self.check_dim(u, "ConvexSpec::subgradient_contains u")?;
        self.subgradient_contains_unchecked(x, u, tol)
    }

    fn subgradient_contains_unchecked(&self, x: &[f64], u: &[f64], tol: f64) -> Result<bool> {
        match self {
            ConvexSpec::Quadratic { .. } | ConvexSpec::Linear { .. } => {
                let g = self.gradient_at(x).expect("differentiable shape");
                Ok(u.iter().zip(&g).all(|(ui, gi)| (ui - gi).abs() <= tol))
            }
            ConvexSpec::IndicatorPoint { point } => {
                // Domain is a single point; there every u is a subgradient.
                Ok(x.iter().zip(point).all(|(xi, pi)| (xi - pi).abs() <= tol))
            }
            ConvexSpec::IndicatorBox { lo, hi } => {
                for ((&xi, &ui), (&l, &h)) in x.iter().zip(u).zip(lo.iter().zip(hi)) {
                    if xi < l - tol || xi > h + tol {
                        return Ok(false);
                    }
                    let at_lo = xi <= l + tol;
                    let at_hi = xi >= h - tol;
                    let ok = match (at_lo, at_hi) {
                        (true, true) => true,        // degenerate interval: whole line
                        (true, false) => ui <= tol,  // inward-pointing excluded
                        (false, true) => ui >= -tol, // outward normals only
                        (false, false) => ui.abs() <= tol,
                    };
                    if !ok {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            ConvexSpec::SupportBox { radius } => {
                let (xi, ui) = (x[0], u[0]);
                if xi.abs() <= tol {
                    Ok(ui.abs() <= radius + tol)
                } else {
                    Ok((ui - radius * xi.signum()).abs() <= tol)
                }
            }
            ConvexSpec::Sum { terms } => {
                if self.eval_unchecked(x).is_infinite() {
                    return Ok(false);
                }
                // Subtract the single-valued gradients; at most one term may
                // contribute a set-valued subdifferential for the membership
                // test to stay exact.
                let mut residual = u.to_vec();
                let mut set_valued: Option<&ConvexSpec> = None;
                for t in terms {
                    match t.gradient_at(x) {
                        Some(g) => {
                            for (ri, gi) in residual.iter_mut().zip(&g) {
                                *ri -= gi;
                            }
                        }
                        None => {
                            if set_valued.is_some() {
                                return Err(Error::UnsupportedOperation {
                                    op: "subgradient_contains",
                                    detail: "Sum with more than one set-valued term".into(),
                                });
                            }
                            set_valued = Some(t);
                        }
                    }
                }
                match set_valued {
                    Some(t) => t.subgradient_contains_unchecked(x, &residual, tol),
                    None => Ok(residual.iter().all(|r| r.abs() <= tol)),
                }
            }
            ConvexSpec::SeparableProduct { parts, .. } => {
                let mut covered = vec![false; x.len()];
                for part in parts {
                    let ok = part.spec.subgradient_contains_unchecked(
                        &gather(x, &part.coords),
                        &gather(u, &part.coords),
                        tol,
                    )?;
                    if !ok {
                        return Ok(false);
                    }
                    for &c in &part.coords {
                        covered[c] = true;
                    }
                }
                // The function is constant along uncovered coordinates, so
                // the subdifferential there is {0}.
                Ok(u.iter()
                    .zip(&covered)
                    .all(|(ui, cov)| *cov || ui.abs() <= tol))
            }
        }
    }

    /// Legendre-Fenchel conjugate as another spec. The algebra is closed
    /// for each base shape and for a registered list of `Sum` patterns;
    /// anything else reports `UnsupportedPolar`.
    pub fn polar(&self) -> Result<ConvexSpec> {
        match self {
            ConvexSpec::Quadratic { a, center } => {
                let dual = ConvexSpec::Quadratic {
                    a: 1.0 / a,
                    center: vec![0.0; center.len()],
                };
                if center.iter().all(|&c| c == 0.0) {
                    Ok(dual)
                } else {
                    // sup_x <x,y> - (a/2)|x-c|^2 = <c,y> + |y|^2 / (2a)
                    Ok(ConvexSpec::Sum {
                        terms: vec![
                            dual,
                            ConvexSpec::Linear {
                                slope: center.clone(),
                            },
                        ],
                    })
                }
            }
            ConvexSpec::Linear { slope } => Ok(ConvexSpec::IndicatorPoint {
                point: slope.clone(),
            }),
            ConvexSpec::IndicatorPoint { point } => Ok(ConvexSpec::Linear {
                slope: point.clone(),
            }),
            ConvexSpec::IndicatorBox { lo, hi } => {
                if lo.len() == 1 {
                    Ok(polar_interval(lo[0], hi[0]))
                } else {
                    let parts = lo
                        .iter()
                        .zip(hi)
                        .enumerate()
                        .map(|(i, (&l, &h))| SeparablePart {
                            spec: polar_interval(l, h),
                            coords: vec![i],
                        })
                        .collect();
                    Ok(ConvexSpec::SeparableProduct {
                        dim: lo.len(),
                        parts,
                    })
                }
            }
            ConvexSpec::SupportBox { radius } => Ok(ConvexSpec::IndicatorBox {
                lo: vec![-radius],
                hi: vec![*radius],
            }),
            ConvexSpec::Sum { terms } => polar_sum(terms),
            ConvexSpec::SeparableProduct { dim, parts } => {
                let mut covered = vec![false; *dim];
                let mut out: Vec<SeparablePart> = Vec::with_capacity(parts.len() + 1);
                for part in parts {
                    out.push(SeparablePart {
                        spec: part.spec.polar()?,
                        coords: part.coords.clone(),
                    });
                    for &c in &part.coords {
                        covered[c] = true;
                    }
                }
                // Constant along uncovered coordinates, so the conjugate
                // pins them to zero.
                let uncovered: Vec<usize> = (0..*dim).filter(|&c| !covered[c]).collect();
                if !uncovered.is_empty() {
                    out.push(SeparablePart {
                        spec: ConvexSpec::IndicatorPoint {
                            point: vec![0.0; uncovered.len()],
                        },
                        coords: uncovered,
                    });
                }
                Ok(ConvexSpec::SeparableProduct {
                    dim: *dim,
                    parts: out,
                })
            }
        }
    }

    /// Fenchel gap `f(x) + f*(y) - <x, y>`, nonnegative for every pair and
    /// zero exactly on the subdifferential graph.
    pub fn fenchel_gap(&self, x: &[f64], y: &[f64]) -> Result<ExtReal> {
        self.check_dim(x, "ConvexSpec::fenchel_gap x")?;
        self.check_dim(y, "ConvexSpec::fenchel_gap y")?;
        let conj = self.polar()?;
        Ok((self.eval_unchecked(x) + conj.eval_unchecked(y)).sub_finite(dot(x, y)))
    }

    /// Proximal map `argmin_x f(x) + |x - x0|^2 / (2 lambda)` in closed
    /// form: projection for indicators, shrinkage for the support shape,
    /// affine for quadratics. When the minimizer set is flat the
    /// minimal-norm point is returned.
    pub fn prox(&self, x0: &[f64], lambda: f64) -> Result<Vec<f64>> {
        self.check_dim(x0, "ConvexSpec::prox")?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter {
                name: "prox.lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        self.prox_unchecked(x0, lambda)
    }

    fn prox_unchecked(&self, x0: &[f64], lambda: f64) -> Result<Vec<f64>> {
        match self {
            ConvexSpec::Quadratic { a, center } => Ok(x0
                .iter()
                .zip(center)
                .map(|(xi, ci)| ci + (xi - ci) / (1.0 + lambda * a))
                .collect()),
            ConvexSpec::Linear { slope } => {
                Ok(x0.iter().zip(slope).map(|(xi, si)| xi - lambda * si).collect())
            }
            ConvexSpec::IndicatorPoint { point } => Ok(point.clone()),
            ConvexSpec::IndicatorBox { lo, hi } => Ok(x0
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(xi, (l, h))| xi.max(*l).min(*h))
                .collect()),
            ConvexSpec::SupportBox { radius } => {
                Ok(vec![shrink(x0[0], lambda * radius)])
            }
            ConvexSpec::Sum { terms } => {
                // Registered patterns, in the same spirit as polar_sum.
                if let Some((a, center, slope)) = match_quadratic_plus_linear(terms) {
                    // argmin (a/2)|x-c|^2 + <s,x> + |x-x0|^2/(2 lambda)
                    return Ok(x0
                        .iter()
                        .zip(center.iter().zip(slope))
                        .map(|(xi, (ci, si))| {
                            (xi + lambda * (a * ci - si)) / (1.0 + lambda * a)
                        })
                        .collect());
                }
                if let Some((slope, lo, hi)) = match_linear_plus_box(terms) {
                    return Ok(x0
                        .iter()
                        .zip(slope)
                        .zip(lo.iter().zip(hi))
                        .map(|((xi, si), (l, h))| (xi - lambda * si).max(*l).min(*h))
                        .collect());
                }
                if let Some((radius, slope)) = match_support_plus_linear(terms) {
                    return Ok(vec![shrink(x0[0] - lambda * slope, lambda * radius)]);
                }
                Err(Error::UnsupportedProx {
                    detail: "Sum outside the registered pattern list".into(),
                })
            }
            ConvexSpec::SeparableProduct { parts, .. } => {
                let mut out = x0.to_vec(); // uncovered coordinates: identity
                for part in parts {
                    let block = part.spec.prox_unchecked(&gather(x0, &part.coords), lambda)?;
                    for (&c, v) in part.coords.iter().zip(block) {
                        out[c] = v;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Brute-force conjugate on a uniform grid over `[lo, hi]` (line
    /// functions only). The supremum ranges over the same nodes the table
    /// is sampled at; values above [`CONJUGATE_CAP`] become +inf.
    pub fn numerical_conjugate(
        &self,
        lo: f64,
        hi: f64,
        samples: usize,
    ) -> Result<ConjugateTable> {
        if self.dim() != 1 {
            return Err(Error::UnsupportedOperation {
                op: "numerical_conjugate",
                detail: format!("grid oracle handles dim 1, spec has dim {}", self.dim()),
            });
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "numerical_conjugate.range",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
        if samples < 2 {
            return Err(Error::InvalidParameter {
                name: "numerical_conjugate.samples",
                reason: "need at least 2 grid nodes".into(),
            });
        }
        let spacing = (hi - lo) / (samples - 1) as f64;
        let xs: Vec<f64> = (0..samples).map(|i| lo + spacing * i as f64).collect();
        let fx: Vec<ExtReal> = xs.iter().map(|&x| self.eval_unchecked(&[x])).collect();
        if fx.iter().all(|v| v.is_infinite()) {
            return Err(Error::EmptyGridDomain);
        }
        let mut values = Vec::with_capacity(samples);
        for &y in &xs {
            let mut best = f64::NEG_INFINITY;
            for (&x, v) in xs.iter().zip(&fx) {
                if v.is_finite() {
                    best = best.max(x * y - v.value());
                }
            }
            values.push(if best > CONJUGATE_CAP {
                ExtReal::INFINITY
            } else {
                ExtReal::from(best)
            });
        }
        Ok(ConjugateTable {
            ys: xs,
            values,
            spacing,
        })
    }

    /// Draws a point of the effective domain. Finite box corners and the
    /// support-shape kink are hit with positive probability so that the
    /// set-valued parts of subdifferentials get exercised.
    pub fn sample_domain_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        const SPAN: f64 = 3.0;
        match self {
            ConvexSpec::Quadratic { center, .. } => center
                .iter()
                .map(|c| c + rng.gen_range(-SPAN..SPAN))
                .collect(),
            ConvexSpec::Linear { slope } => {
                (0..slope.len()).map(|_| rng.gen_range(-SPAN..SPAN)).collect()
            }
            ConvexSpec::IndicatorPoint { point } => point.clone(),
            ConvexSpec::IndicatorBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| {
                    let roll: f64 = rng.gen();
                    if roll < 0.25 && l.is_finite() {
                        l
                    } else if roll < 0.5 && h.is_finite() {
                        h
                    } else {
                        let a = l.max(-SPAN);
                        let b = h.min(SPAN).max(a);
                        if a == b {
                            a
                        } else {
                            rng.gen_range(a..=b)
                        }
                    }
                })
                .collect(),
            ConvexSpec::SupportBox { .. } => {
                if rng.gen::<f64>() < 0.3 {
                    vec![0.0]
                } else {
                    vec![rng.gen_range(-SPAN..SPAN)]
                }
            }
            ConvexSpec::Sum { terms } => {
                // Indicator terms carry the domain; take the first one.
                for t in terms {
                    if matches!(
                        t,
                        ConvexSpec::IndicatorPoint { .. } | ConvexSpec::IndicatorBox { .. }
                    ) {
                        return t.sample_domain_point(rng);
                    }
                }
                terms[0].sample_domain_point(rng)
            }
            ConvexSpec::SeparableProduct { dim, parts } => {
                let mut out: Vec<f64> = (0..*dim).map(|_| rng.gen_range(-SPAN..SPAN)).collect();
                for part in parts {
                    let block = part.spec.sample_domain_point(rng);
                    for (&c, v) in part.coords.iter().zip(block) {
                        out[c] = v;
                    }
                }
                out
            }
        }
    }

    /// Draws a member of the subdifferential at `x` (which must lie in the
    /// effective domain, e.g. from [`ConvexSpec::sample_domain_point`]).
    pub fn sample_subgradient<R: Rng>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        const RAY: f64 = 4.0;
        match self {
            ConvexSpec::Quadratic { .. } | ConvexSpec::Linear { .. } => {
                self.gradient_at(x).expect("differentiable shape")
            }
            ConvexSpec::IndicatorPoint { point } => {
                (0..point.len()).map(|_| rng.gen_range(-RAY..RAY)).collect()
            }
            ConvexSpec::IndicatorBox { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&xi, (&l, &h))| {
                    let at_lo = xi == l;
                    let at_hi = xi == h;
                    match (at_lo, at_hi) {
                        (true, true) => rng.gen_range(-RAY..RAY),
                        (true, false) => -rng.gen_range(0.0..RAY),
                        (false, true) => rng.gen_range(0.0..RAY),
                        (false, false) => 0.0,
                    }
                })
                .collect(),
            ConvexSpec::SupportBox { radius } => {
                if x[0] == 0.0 {
                    vec![rng.gen_range(-radius..=*radius)]
                } else {
                    vec![radius * x[0].signum()]
                }
            }
            ConvexSpec::Sum { terms } => {
                let mut out = vec![0.0; x.len()];
                for t in terms {
                    for (o, v) in out.iter_mut().zip(t.sample_subgradient(x, rng)) {
                        *o += v;
                    }
                }
                out
            }
            ConvexSpec::SeparableProduct { dim, parts } => {
                let mut out = vec![0.0; *dim];
                for part in parts {
                    let block = part
                        .spec
                        .sample_subgradient(&gather(x, &part.coords), rng);
                    for (&c, v) in part.coords.iter().zip(block) {
                        out[c] = v;
                    }
                }
                out
            }
        }
    }

}

fn gather(x: &[f64], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&c| x[c]).collect()
}

fn shrink(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// Conjugate of the indicator of a closed interval (its support function),
/// expressed inside the algebra.
fn polar_interval(lo: f64, hi: f64) -> ConvexSpec {
    let linear = |s: f64| ConvexSpec::Linear { slope: vec![s] };
    let box1 = |l: f64, h: f64| ConvexSpec::IndicatorBox {
        lo: vec![l],
        hi: vec![h],
    };
    match (lo.is_finite(), hi.is_finite()) {
        (false, false) => ConvexSpec::IndicatorPoint { point: vec![0.0] },
        (true, true) => {
            if lo == hi {
                linear(lo)
            } else if lo == -hi {
                ConvexSpec::SupportBox { radius: hi }
            } else {
                // sup_{x in [lo,hi]} x y = ((hi-lo)/2)|y| + ((lo+hi)/2) y
                ConvexSpec::Sum {
                    terms: vec![
                        ConvexSpec::SupportBox {
                            radius: 0.5 * (hi - lo),
                        },
                        linear(0.5 * (lo + hi)),
                    ],
                }
            }
        }
        // [lo, inf): lo*y on y <= 0, +inf for y > 0.
        (true, false) => {
            if lo == 0.0 {
                box1(f64::NEG_INFINITY, 0.0)
            } else {
                ConvexSpec::Sum {
                    terms: vec![linear(lo), box1(f64::NEG_INFINITY, 0.0)],
                }
            }
        }
        // (-inf, hi]: hi*y on y >= 0, +inf for y < 0.
        (false, true) => {
            if hi == 0.0 {
                box1(0.0, f64::INFINITY)
            } else {
                ConvexSpec::Sum {
                    terms: vec![linear(hi), box1(0.0, f64::INFINITY)],
                }
            }
        }
    }
}

fn match_quadratic_plus_linear(terms: &[ConvexSpec]) -> Option<(f64, &[f64], &[f64])> {
    if terms.len() != 2 {
        return None;
    }
    for (i, j) in [(0, 1), (1, 0)] {
        if let (ConvexSpec::Quadratic { a, center }, ConvexSpec::Linear { slope }) =
            (&terms[i], &terms[j])
        {
            return Some((*a, center, slope));
        }
    }
    None
}

fn match_linear_plus_box(terms: &[ConvexSpec]) -> Option<(&[f64], &[f64], &[f64])> {
    if terms.len() != 2 {
        return None;
    }
    for (i, j) in [(0, 1), (1, 0)] {
        if let (ConvexSpec::Linear { slope }, ConvexSpec::IndicatorBox { lo, hi }) =
            (&terms[i], &terms[j])
        {
            return Some((slope, lo, hi));
        }
    }
    None
}

fn match_support_plus_linear(terms: &[ConvexSpec]) -> Option<(f64, f64)> {
    if terms.len() != 2 {
        return None;
    }
    for (i, j) in [(0, 1), (1, 0)] {
        if let (ConvexSpec::SupportBox { radius }, ConvexSpec::Linear { slope }) =
            (&terms[i], &terms[j])
        {
            if slope.len() == 1 {
                return Some((*radius, slope[0]));
            }
        }
    }
    None
}

/// Conjugates for the registered `Sum` patterns. Each rule is a verified
/// closed form; unregistered combinations are refused rather than
/// approximated.
fn polar_sum(terms: &[ConvexSpec]) -> Result<ConvexSpec> {
    if let Some((a, center, slope)) = match_quadratic_plus_linear(terms) {
        if center.iter().all(|&c| c == 0.0) {
            // ((a/2)|x|^2 + <s,x>)* = |y - s|^2 / (2a)
            return Ok(ConvexSpec::Quadratic {
                a: 1.0 / a,
                center: slope.to_vec(),
            });
        }
        return Err(Error::UnsupportedPolar {
            detail: "Sum[Quadratic, Linear] with shifted quadratic".into(),
        });
    }
    if let Some((slope, lo, hi)) = match_linear_plus_box(terms) {
        if slope.len() == 1 {
            let m = slope[0];
            // (m x + indicator_[0,inf))* = indicator_(-inf, m]
            if lo[0] == 0.0 && hi[0] == f64::INFINITY {
                return Ok(ConvexSpec::IndicatorBox {
                    lo: vec![f64::NEG_INFINITY],
                    hi: vec![m],
                });
            }
            // (m x + indicator_(-inf,0])* = indicator_[m, inf)
            if lo[0] == f64::NEG_INFINITY && hi[0] == 0.0 {
                return Ok(ConvexSpec::IndicatorBox {
                    lo: vec![m],
                    hi: vec![f64::INFINITY],
                });
            }
        }
        return Err(Error::UnsupportedPolar {
            detail: "Sum[Linear, IndicatorBox] outside the half-line patterns".into(),
        });
    }
    if let Some((radius, slope)) = match_support_plus_linear(terms) {
        // (r|x| + m x)* = indicator_[m-r, m+r]
        return Ok(ConvexSpec::IndicatorBox {
            lo: vec![slope - radius],
            hi: vec![slope + radius],
        });
    }
    Err(Error::UnsupportedPolar {
        detail: "Sum outside the registered pattern list".into(),
    })
}

/// Options for the cyclic monotonicity check.
#[derive(Clone, Debug)]
pub struct MonotoneOptions {
    /// Slack for the cyclic sums; the exact inequality is `>= 0`.
    pub tol: f64,
    /// Tuple-count threshold below which enumeration is exhaustive.
    pub max_exhaustive: u128,
    /// Random tuples drawn above the threshold.
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonotoneOptions {
    fn default() -> Self {
        MonotoneOptions {
            tol: 1e-9,
            max_exhaustive: 200_000,
            samples: 50_000,
            seed: 0x6d6f6e6f,
        }
    }
}

/// Checks n-monotonicity of a relation graph `{(x_k, y_k)}`: for every
/// tuple `(x_0, y_0), ..., (x_n, y_n)` drawn from the graph (repetition
/// allowed),
///
/// `<x_n - x_0, y_n> + sum_{k=1..n} <x_{k-1} - x_k, y_{k-1}> >= 0`.
///
/// `n = 1` is plain monotonicity; subdifferential graphs of convex
/// functions satisfy every order. Enumeration is exhaustive for small
/// graphs and seeded-random above `max_exhaustive` tuples.
pub fn n_monotone_check(
    graph: &[(Vec<f64>, Vec<f64>)],
    n: usize,
    opts: &MonotoneOptions,
) -> Result<bool> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n_monotone_check.n",
            reason: "order must be at least 1".into(),
        });
    }
    if graph.is_empty() {
        return Ok(true);
    }
    let d = graph[0].0.len();
    for (x, y) in graph {
        if x.len() != d || y.len() != d {
            return Err(Error::DimensionMismatch {
                context: "n_monotone_check graph",
                expected: d,
                found: x.len().max(y.len()),
            });
        }
    }

    let m = graph.len() as u128;
    let tuples = m.checked_pow(n as u32 + 1);
    let cycle_ok = |idx: &[usize]| -> bool {
        let last = idx.len() - 1;
        let (x0, _) = &graph[idx[0]];
        let (xn, yn) = &graph[idx[last]];
        let mut s: f64 = xn.iter().zip(x0).zip(yn).map(|((a, b), y)| (a - b) * y).sum();
        for k in 1..idx.len() {
            let (xk, _) = &graph[idx[k]];
            let (xk1, yk1) = &graph[idx[k - 1]];
            s += xk1
                .iter()
                .zip(xk)
                .zip(yk1)
                .map(|((a, b), y)| (a - b) * y)
                .sum::<f64>();
        }
        s >= -opts.tol
    };

    match tuples {
        Some(total) if total <= opts.max_exhaustive => {
            let mut idx = vec![0usize; n + 1];
            loop {
                if !cycle_ok(&idx) {
                    return Ok(false);
                }
                // Odometer increment over graph indices.
                let mut pos = 0;
                loop {
                    idx[pos] += 1;
                    if idx[pos] < graph.len() {
                        break;
                    }
                    idx[pos] = 0;
                    pos += 1;
                    if pos == idx.len() {
                        return Ok(true);
                    }
                }
            }
        }
        _ => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx = vec![0usize; n + 1];
            for _ in 0..opts.samples {
                for slot in idx.iter_mut() {
                    *slot = rng.gen_range(0..graph.len());
                }
                if !cycle_ok(&idx) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(a: f64) -> ConvexSpec {
        ConvexSpec::Quadratic {
            a,
            center: vec![0.0],
        }
    }

    fn box1(lo: f64, hi: f64) -> ConvexSpec {
        ConvexSpec::IndicatorBox {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    /// chi_[0,inf)(x) + y_lim * x, the rate potential of threshold laws.
    fn ramp(y_lim: f64) -> ConvexSpec {
        ConvexSpec::Sum {
            terms: vec![
                ConvexSpec::Linear { slope: vec![y_lim] },
                box1(0.0, f64::INFINITY),
            ],
        }
    }

    #[test]
    fn eval_matches_hand_values() {
        assert_eq!(quad(1.0).eval(&[2.0]).unwrap().value(), 2.0);
        assert_eq!(box1(-1.0, 1.0).eval(&[0.5]).unwrap(), ExtReal::ZERO);
        assert!(box1(-1.0, 1.0).eval(&[1.5]).unwrap().is_infinite());
        // ramp: finite branch and constraint branch
        assert_eq!(ramp(1.0).eval(&[3.0]).unwrap().value(), 3.0);
        assert!(ramp(1.0).eval(&[-0.5]).unwrap().is_infinite());
        assert_eq!(
            ConvexSpec::SupportBox { radius: 2.0 }.eval(&[-1.5]).unwrap().value(),
            3.0
        );
    }

    #[test]
    fn subgradients_follow_closed_forms() {
        let tol = 1e-8;
        // quadratic: gradient a*x
        assert!(quad(2.0).subgradient_contains(&[1.5], &[3.0], tol).unwrap());
        assert!(!quad(2.0).subgradient_contains(&[1.5], &[2.9], tol).unwrap());
        // box: outward normals at the boundary, {0} inside, false outside dom
        assert!(box1(-1.0, 1.0).subgradient_contains(&[1.0], &[5.0], tol).unwrap());
        assert!(!box1(-1.0, 1.0).subgradient_contains(&[0.0], &[0.1], tol).unwrap());
        assert!(!box1(-1.0, 1.0).subgradient_contains(&[2.0], &[0.0], tol).unwrap());
        // ramp at the kink: subdifferential is (-inf, y_lim]
        assert!(ramp(1.0).subgradient_contains(&[0.0], &[0.3], tol).unwrap());
        assert!(ramp(1.0).subgradient_contains(&[0.0], &[1.0], tol).unwrap());
        assert!(!ramp(1.0).subgradient_contains(&[0.0], &[1.1], tol).unwrap());
        // ramp on the open side: exactly {y_lim}
        assert!(ramp(1.0).subgradient_contains(&[2.0], &[1.0], tol).unwrap());
        assert!(!ramp(1.0).subgradient_contains(&[2.0], &[0.9], tol).unwrap());
    }

    #[test]
    fn polar_pairs_match_hand_derivations() {
        // (a/2)x^2 <-> (1/(2a))y^2
        let p = quad(2.0).polar().unwrap();
        assert_eq!(p, quad(0.5));
        // indicator of a point at the origin <-> zero function
        let p = ConvexSpec::IndicatorPoint { point: vec![0.0] }.polar().unwrap();
        assert_eq!(p, ConvexSpec::Linear { slope: vec![0.0] });
        // box <-> support shape
        assert_eq!(
            box1(-1.5, 1.5).polar().unwrap(),
            ConvexSpec::SupportBox { radius: 1.5 }
        );
        // ramp <-> half-line indicator
        assert_eq!(ramp(1.0).polar().unwrap(), box1(f64::NEG_INFINITY, 1.0));
        assert_eq!(
            box1(f64::NEG_INFINITY, 1.0).polar().unwrap(),
            ramp(1.0)
        );
    }

    #[test]
    fn shifted_quadratic_polar_closes_under_biconjugation() {
        let f = ConvexSpec::Quadratic {
            a: 2.0,
            center: vec![1.0, -0.5],
        };
        let ff = f.polar().unwrap().polar().unwrap();
        for x in [[0.0, 0.0], [1.3, 2.0], [-2.0, 0.25]] {
            let a = f.eval(&x).unwrap().value();
            let b = ff.eval(&x).unwrap().value();
            assert!((a - b).abs() <= 1e-9, "f** {b} vs f {a} at {x:?}");
        }
    }

    #[test]
    fn asymmetric_box_polar_agrees_with_support_values() {
        let f = box1(-1.0, 3.0);
        let p = f.polar().unwrap();
        for y in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            let expect = if y >= 0.0 { 3.0 * y } else { -1.0 * y };
            let got = p.eval(&[y]).unwrap().value();
            assert!((got - expect).abs() <= 1e-12, "y={y}: {got} vs {expect}");
        }
        let ff = p.polar().unwrap();
        assert_eq!(ff, f);
    }

    #[test]
    fn fenchel_gap_examples() {
        // gap(x, y) for f = x^2/2 is (x - y)^2 / 2
        let f = quad(1.0);
        assert_eq!(f.fenchel_gap(&[1.0], &[1.0]).unwrap().value(), 0.0);
        let g = f.fenchel_gap(&[1.0], &[2.0]).unwrap().value();
        assert!((g - 0.5).abs() <= 1e-12, "gap {g}");
        // box: x at the boundary pairs with any outward normal
        let b = box1(-1.0, 1.0);
        assert_eq!(b.fenchel_gap(&[1.0], &[7.0]).unwrap().value(), 0.0);
        assert!(b.fenchel_gap(&[2.0], &[0.0]).unwrap().is_infinite());
    }

    #[test]
    fn prox_examples() {
        // projection onto the box
        assert_eq!(box1(-1.0, 1.0).prox(&[3.0], 0.7).unwrap(), vec![1.0]);
        // shrinkage by lambda * radius
        let s = ConvexSpec::SupportBox { radius: 2.0 };
        assert_eq!(s.prox(&[3.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(s.prox(&[-1.0], 1.0).unwrap(), vec![0.0]);
        // affine contraction for quadratics: 4 / (1 + 1*1) = 2
        assert_eq!(quad(1.0).prox(&[4.0], 1.0).unwrap(), vec![2.0]);
        // prox optimality: x* minimizes f + |.-x0|^2/(2 lambda)
        let f = ramp(1.0);
        let x0 = [0.4];
        let lambda = 0.25;
        let xs = f.prox(&x0, lambda).unwrap();
        let obj = |x: f64| {
            f.eval(&[x]).unwrap().value() + (x - x0[0]).powi(2) / (2.0 * lambda)
        };
        let best = obj(xs[0]);
        for k in -200..=200 {
            let x = k as f64 * 0.01;
            if f.eval(&[x]).unwrap().is_finite() {
                assert!(obj(x) >= best - 1e-12, "prox not optimal at {x}");
            }
        }
    }

    #[test]
    fn numerical_conjugate_matches_closed_form_for_quadratic() {
        let f = quad(1.0);
        let table = f.numerical_conjugate(-4.0, 4.0, 4001).unwrap();
        for (y, v) in table.ys.iter().zip(&table.values) {
            if y.abs() <= 2.0 {
                let err = (v.value() - 0.5 * y * y).abs();
                assert!(err <= 1e-4, "y={y}: err {err}");
            }
        }
    }

    #[test]
    fn numerical_conjugate_requires_domain_on_grid() {
        let f = ConvexSpec::IndicatorPoint { point: vec![50.0] };
        assert!(matches!(
            f.numerical_conjugate(-5.0, 5.0, 101),
            Err(Error::EmptyGridDomain)
        ));
    }

    #[test]
    fn biconjugation_fixes_every_cataloged_spec() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let specs = vec![
            quad(1.0),
            quad(0.25),
            ConvexSpec::Quadratic {
                a: 3.0,
                center: vec![2.0],
            },
            ConvexSpec::Linear { slope: vec![1.5] },
            ConvexSpec::IndicatorPoint { point: vec![0.5] },
            box1(-2.0, 2.0),
            box1(-1.0, 3.0),
            box1(0.0, f64::INFINITY),
            box1(f64::NEG_INFINITY, 2.0),
            ConvexSpec::SupportBox { radius: 1.0 },
            ramp(1.0),
            ConvexSpec::Sum {
                terms: vec![quad(2.0), ConvexSpec::Linear { slope: vec![-1.0] }],
            },
        ];
        for f in specs {
            let ff = f.polar().unwrap().polar().unwrap();
            for _ in 0..1000 {
                let x = [rng.gen_range(-4.0..4.0)];
                let a = f.eval(&x).unwrap();
                let b = ff.eval(&x).unwrap();
                match (a.is_finite(), b.is_finite()) {
                    (true, true) => assert!(
                        (a.value() - b.value()).abs() <= 1e-9,
                        "{f:?} at {x:?}: f {a:?} vs f** {b:?}"
                    ),
                    (fa, fb) => assert_eq!(fa, fb, "{f:?} at {x:?}: f {a:?} vs f** {b:?}"),
                }
            }
        }
    }

    #[test]
    fn monotone_check_accepts_gradient_graphs_and_rejects_decreasing_pairs() {
        let opts = MonotoneOptions::default();
        // graph of the identity (gradient of x^2/2)
        let graph: Vec<(Vec<f64>, Vec<f64>)> = (-5..=5)
            .map(|k| (vec![k as f64 * 0.4], vec![k as f64 * 0.4]))
            .collect();
        for n in 1..=3 {
            assert!(n_monotone_check(&graph, n, &opts).unwrap(), "order {n}");
        }
        // a decreasing relation fails already at order 1
        let bad = vec![
            (vec![0.0], vec![1.0]),
            (vec![1.0], vec![0.0]),
        ];
        assert!(!n_monotone_check(&bad, 1, &opts).unwrap());
        // a single point is n-monotone for every order
        let single = vec![(vec![2.0], vec![-3.0])];
        assert!(n_monotone_check(&single, 3, &opts).unwrap());
    }

    #[test]
    fn sampled_subgradient_pairs_have_zero_gap() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let specs = vec![
            quad(1.0),
            box1(-1.0, 1.0),
            ConvexSpec::SupportBox { radius: 2.0 },
            ramp(1.0),
            ConvexSpec::IndicatorPoint { point: vec![1.0] },
        ];
        for f in specs {
            for _ in 0..500 {
                let x = f.sample_domain_point(&mut rng);
                let u = f.sample_subgradient(&x, &mut rng);
                let gap = f.fenchel_gap(&x, &u).unwrap();
                assert!(
                    gap.is_finite() && gap.value().abs() <= 1e-9,
                    "{f:?}: gap {gap:?} at x={x:?} u={u:?}"
                );
                assert!(f.subgradient_contains(&x, &u, 1e-8).unwrap());
            }
        }
    }

    #[test]
    fn serde_round_trips_with_infinite_bounds() {
        let f = ramp(1.0);
        let text = serde_json::to_string(&f).unwrap();
        let back: ConvexSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
        let parsed: ConvexSpec = serde_json::from_str(
            r#"{"type":"indicator_box","lo":[0.0],"hi":["inf"]}"#,
        )
        .unwrap();
        assert_eq!(parsed, box1(0.0, f64::INFINITY));
    }
}
