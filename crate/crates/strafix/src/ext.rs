//! Extended reals `[-∞, ∞]` and total valuations of variables.
//!
//! Addition uses the convention `-∞ + ∞ = -∞`: a sum is `-∞` as soon as one
//! summand is `-∞`, otherwise `+∞` if one summand is `+∞`, otherwise the
//! finite sum.  This keeps monotone affine forms well defined on all of
//! `[-∞, ∞]` and is the convention the whole solver is built on.

use std::cmp::Ordering;
use std::fmt;

/// An extended real.  `Finite` never holds NaN; constructors enforce this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

use ExtReal::*;

impl ExtReal {
    /// Wraps a raw `f64`, mapping infinities to the proper variants.
    ///
    /// Panics on NaN: a NaN bound is always a bug in the caller.
    pub fn from_f64(v: f64) -> ExtReal {
        assert!(!v.is_nan(), "NaN is not an extended real");
        if v == f64::INFINITY {
            PosInf
        } else if v == f64::NEG_INFINITY {
            NegInf
        } else {
            Finite(v)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Finite(_))
    }

    /// Collapses to `f64` (`±∞` become the IEEE infinities).
    pub fn to_f64(self) -> f64 {
        match self {
            NegInf => f64::NEG_INFINITY,
            Finite(v) => v,
            PosInf => f64::INFINITY,
        }
    }

    /// Sum with the `-∞ + ∞ = -∞` convention.
    pub fn add(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (NegInf, _) | (_, NegInf) => NegInf,
            (PosInf, _) | (_, PosInf) => PosInf,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }

    /// Sum of a whole sequence under the same convention: `-∞` absorbs.
    pub fn sum<I: IntoIterator<Item = ExtReal>>(terms: I) -> ExtReal {
        let mut saw_pos = false;
        let mut acc = 0.0;
        for t in terms {
            match t {
                NegInf => return NegInf,
                PosInf => saw_pos = true,
                Finite(v) => acc += v,
            }
        }
        if saw_pos {
            PosInf
        } else {
            Finite(acc)
        }
    }

    /// Scales by a nonnegative weight.  A zero weight drops the term
    /// entirely (`0 · ±∞ = 0`), which is what makes monotone affine forms
    /// ignore variables they do not mention.
    pub fn scale(self, w: f64) -> ExtReal {
        assert!(w >= 0.0, "affine weights must be nonnegative");
        if w == 0.0 {
            return Finite(0.0);
        }
        match self {
            NegInf => NegInf,
            PosInf => PosInf,
            Finite(v) => Finite(w * v),
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Strict improvement test with a finite margin: `self` must exceed
    /// `other` by more than `eps`.  Crossing from or to an infinity counts
    /// as an improvement regardless of the margin.
    pub fn exceeds_by(self, other: ExtReal, eps: f64) -> bool {
        match (self, other) {
            (Finite(a), Finite(b)) => a > b + eps,
            _ => self > other,
        }
    }

    /// Approximate equality: infinities must match exactly, finite values
    /// up to `tol`.
    pub fn approx_eq(self, other: ExtReal, tol: f64) -> bool {
        match (self, other) {
            (Finite(a), Finite(b)) => (a - b).abs() <= tol,
            _ => self == other,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        Some(self.cmp_total(other))
    }
}

impl ExtReal {
    /// Total order `-∞ < finite < ∞`.
    pub fn cmp_total(&self, other: &ExtReal) -> Ordering {
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b).expect("no NaN in ExtReal"),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegInf => write!(f, "-inf"),
            PosInf => write!(f, "inf"),
            Finite(v) => write!(f, "{v}"),
        }
    }
}

/// A total map from the variables of a system to extended reals, backed by
/// the system's variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation(Vec<ExtReal>);

impl Valuation {
    pub fn new(values: Vec<ExtReal>) -> Valuation {
        Valuation(values)
    }

    /// The bottom valuation: every variable at `-∞`.
    pub fn bottom(n: usize) -> Valuation {
        Valuation(vec![NegInf; n])
    }

    pub fn constant(n: usize, v: ExtReal) -> Valuation {
        Valuation(vec![v; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, var: usize) -> ExtReal {
        self.0[var]
    }

    pub fn set(&mut self, var: usize, v: ExtReal) {
        self.0[var] = v;
    }

    pub fn values(&self) -> &[ExtReal] {
        &self.0
    }

    /// Pointwise order: `self ≤ other` in every component.
    pub fn le(&self, other: &Valuation) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Pointwise maximum.
    pub fn join(&self, other: &Valuation) -> Valuation {
        Valuation(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.max(*b))
                .collect(),
        )
    }

    /// Componentwise approximate equality (infinities exact).
    pub fn approx_eq(&self, other: &Valuation, tol: f64) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.approx_eq(*b, tol))
    }
}
