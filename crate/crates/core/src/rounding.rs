//! Round-toward-+∞ arithmetic on `f64`.
//!
//! Each operation returns the smallest double that is ≥ the exact real
//! result, using error-free transformations (TwoSum, FMA residuals) to detect
//! whether rounding-to-nearest went down. Used for the left-hand sides of the
//! Lipschitz validity inequalities and for network Lipschitz bounds, so those
//! quantities are upper bounds of the real-number values.

/// Below this magnitude FMA residuals may themselves underflow, so results
/// are bumped up unconditionally.
const TINY: f64 = 1e-290;

/// `a + b` rounded up.
pub fn add(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return s;
    }
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    if err > 0.0 {
        s.next_up()
    } else {
        s
    }
}

/// `a * b` rounded up.
pub fn mul(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    if p.abs() < TINY && a != 0.0 && b != 0.0 {
        return p.next_up();
    }
    let err = a.mul_add(b, -p);
    if err > 0.0 {
        p.next_up()
    } else {
        p
    }
}

/// `a / b` rounded up; `b` must be positive.
pub fn div(a: f64, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    let q = a / b;
    if !q.is_finite() {
        return q;
    }
    if q.abs() < TINY && a != 0.0 {
        return q.next_up();
    }
    // a - q*b is exactly representable for a correctly rounded quotient.
    let rem = -q.mul_add(b, -a);
    if rem > 0.0 {
        q.next_up()
    } else {
        q
    }
}

/// Upward-rounded sum of a sequence.
pub fn sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, add)
}

/// Upward-rounded product of a sequence.
pub fn product<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(1.0, mul)
}
