//! Scalar abstraction shared by the graph, solver and profile code.
//!
//! Everything that only needs field arithmetic and an ordering (kernels,
//! killed Green fields, level-set profiles) is written against [`Scalar`],
//! so the same code runs in `f64`, `f32` and exact rationals. Transcendental
//! work (profile functions, comparison curves, sampling) is `f64`-only.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, NumAssign, Signed, ToPrimitive};

/// Exact rational scalar used for hand-checkable instances.
pub type Rational = Ratio<i128>;

/// Field element usable as an edge weight, Green value or profile value.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Send
    + Sync
    + NumAssign
    + Signed
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + 'static
{
    /// Summation that does not lose precision when large terms cancel.
    type Sum: Accumulator<Self>;

    /// `true` when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Relative tolerance under which two Green values are treated as tied.
    fn tie_tolerance() -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("{x} is not representable"))
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

/// Running sum supporting both additions and removals.
pub trait Accumulator<S>: Default + Clone {
    fn add(&mut self, x: S);
    fn value(&self) -> S;
}

/// Exact floating-point running sum kept as a list of non-overlapping
/// partials (Shewchuk's expansion). Adding `-x` after `x` restores the
/// previous exact state, which the profile sweep relies on.
#[derive(Debug, Clone, Default)]
pub struct ExpansionSum {
    partials: Vec<f64>,
}

impl Accumulator<f64> for ExpansionSum {
    fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    fn value(&self) -> f64 {
        // Round-half-even correction as in Python's fsum.
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// `f32` sums are carried in an `f64` expansion.
#[derive(Debug, Clone, Default)]
pub struct WideSum(ExpansionSum);

impl Accumulator<f32> for WideSum {
    fn add(&mut self, x: f32) {
        self.0.add(f64::from(x));
    }

    fn value(&self) -> f32 {
        self.0.value() as f32
    }
}

/// Plain summation; correct for exact types.
#[derive(Debug, Clone)]
pub struct PlainSum<S>(S);

impl<S: Scalar> Default for PlainSum<S> {
    fn default() -> Self {
        PlainSum(S::zero())
    }
}

impl<S: Scalar> Accumulator<S> for PlainSum<S> {
    fn add(&mut self, x: S) {
        self.0 += x;
    }

    fn value(&self) -> S {
        self.0
    }
}

impl Scalar for f64 {
    type Sum = ExpansionSum;
    const EXACT: bool = false;

    fn tie_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    type Sum = WideSum;
    const EXACT: bool = false;

    fn tie_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for Rational {
    type Sum = PlainSum<Rational>;
    const EXACT: bool = true;

    fn tie_tolerance() -> Self {
        Rational::from_integer(0)
    }

    fn from_f64_lossy(x: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(x).unwrap_or_else(|| panic!("{x} is not representable"))
    }
}

/// Sums an iterator with the scalar's accumulator.
pub fn exact_sum<S: Scalar>(items: impl IntoIterator<Item = S>) -> S {
    let mut acc = S::Sum::default();
    for x in items {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_survives_cancellation() {
        let mut acc = ExpansionSum::default();
        acc.add(1e20);
        acc.add(1.0);
        acc.add(-1e20);
        assert_eq!(acc.value(), 1.0);
        acc.add(1e-30);
        acc.add(-1e-30);
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn expansion_matches_tenths() {
        let s = exact_sum(std::iter::repeat_n(0.1f64, 10));
        assert_eq!(s, 1.0);
    }

    #[test]
    fn rational_roundtrip() {
        let r: Rational = "2/3".parse().unwrap();
        assert_eq!(r * Rational::from_integer(3), Rational::from_integer(2));
        assert!((r.to_f64_lossy() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(Rational::from_f64_lossy(0.5), Rational::new(1, 2));
    }
}
