//! Scalar abstraction and small numeric search routines shared by the
//! policy and oracle layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the simulator is generic over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// `max(x, 0)` — the paper's `(x)^+` operator.
#[inline]
pub fn pos<T: Real>(x: T) -> T {
    x.max(T::zero())
}

/// `n` geometrically spaced points covering `[lo, hi]` inclusive.
pub fn log_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(lo > T::zero() && hi >= lo && n >= 2);
    let ratio = (hi / lo).ln() / c::<T>((n - 1) as f64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (ratio * c::<T>(i as f64)).exp()
            }
        })
        .collect()
}

/// `n` linearly spaced points covering `[lo, hi]` inclusive.
pub fn lin_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(n >= 2);
    let step = (hi - lo) / c::<T>((n - 1) as f64);
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * c::<T>(i as f64) })
        .collect()
}

/// Golden-section minimization of `f` on `[a, b]`.
///
/// Converges to the bracketed local minimum; callers are expected to seed the
/// bracket from a coarse grid so multimodality is handled upstream.
pub fn golden_section<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, iters: usize) -> (T, T) {
    let inv_phi: T = c(0.618_033_988_749_894_9);
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - (hi - lo) * inv_phi;
    let mut x2 = lo + (hi - lo) * inv_phi;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * inv_phi;
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * inv_phi;
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Relative difference with an absolute floor, for tolerance checks.
pub fn rel_err<T: Real>(a: T, b: T, floor: T) -> T {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
