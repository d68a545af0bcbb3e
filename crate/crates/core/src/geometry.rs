//! Axis-aligned boxes, the only set shape the toolkit works with.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed axis-aligned box `[lo_0, hi_0] × … × [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BoxSet<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> BoxSet<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                context: "box bounds".into(),
                expected: lo.len(),
                found: hi.len(),
            });
        }
        for (d, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::invalid(
                    "box",
                    format!("dimension {d} has bounds [{l}, {h}]"),
                ));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn from_f64(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(
            lo.iter().map(|&v| T::lit(v)).collect(),
            hi.iter().map(|&v| T::lit(v)).collect(),
        )
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![T::lit(lo); dim],
            hi: vec![T::lit(hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, d: usize) -> T {
        self.hi[d] - self.lo[d]
    }

    pub fn contains(&self, p: &[T]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// Componentwise containment `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|d| self.lo[d] >= other.lo[d] && self.hi[d] <= other.hi[d])
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &Self) -> Self {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        Self { lo, hi }
    }

    pub fn clamp_into(&self, p: &mut [T]) {
        for ((v, &l), &h) in p.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.max(l).min(h);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let r: f64 = rng.gen();
                l + (h - l) * T::lit(r)
            })
            .collect()
    }

    pub fn center(&self) -> Vec<T> {
        let two = T::lit(2.0);
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| (l + h) / two)
            .collect()
    }

    pub fn to_f64(&self) -> BoxSet<f64> {
        BoxSet {
            lo: self.lo.iter().map(|v| v.as_f64()).collect(),
            hi: self.hi.iter().map(|v| v.as_f64()).collect(),
        }
    }
}
