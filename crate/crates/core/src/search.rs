//! One-dimensional bracketing searches used by the solvers.

use serde::{Deserialize, Serialize};

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Outcome of an objective evaluation inside [`golden_section_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Value(f64),
    /// The argument lies to the right of the maximizer; shrink the right end.
    TooLarge,
}

/// Record of one golden-section search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoldenTrace {
    pub iterations: usize,
    pub evaluations: usize,
    pub brackets: Vec<(f64, f64)>,
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
///
/// Returns `(argmax, value, trace)`. Points reported as [`Probe::TooLarge`] are
/// treated as lying right of the maximizer. `value` is `None` when every probe
/// was too large, in which case the returned argument is the left end.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, Option<f64>, GoldenTrace)
where
    F: FnMut(f64) -> Probe,
{
    let mut trace = GoldenTrace::default();
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    trace.evaluations += 2;
    while (b - a) > tol {
        trace.iterations += 1;
        trace.brackets.push((a, b));
        match (fc, fd) {
            (Probe::TooLarge, _) => {
                // Both interior points are past the maximizer.
                b = c;
                c = b - INV_PHI * (b - a);
                d = a + INV_PHI * (b - a);
                fc = f(c);
                fd = f(d);
                trace.evaluations += 2;
            }
            (Probe::Value(_), Probe::TooLarge) => {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = f(c);
                trace.evaluations += 1;
            }
            (Probe::Value(vc), Probe::Value(vd)) => {
                if vc >= vd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = f(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = f(d);
                }
                trace.evaluations += 1;
            }
        }
        if trace.iterations > 10_000 {
            break;
        }
    }
    trace.brackets.push((a, b));
    match (fc, fd) {
        (Probe::Value(vc), Probe::Value(vd)) if vd > vc => (d, Some(vd), trace),
        (Probe::Value(vc), _) => (c, Some(vc), trace),
        (Probe::TooLarge, Probe::Value(vd)) => (d, Some(vd), trace),
        (Probe::TooLarge, Probe::TooLarge) => (a, None, trace),
    }
}

/// Finds the point where a nonincreasing function changes sign.
///
/// `sign(x)` must return `true` while the root lies to the right of `x`.
/// Bisects `[lo, hi]` until the bracket is narrower than `tol` or stops shrinking.
pub fn bisect_sign<F>(mut right_of: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> (f64, usize)
where
    F: FnMut(f64) -> bool,
{
    let mut iters = 0;
    while hi - lo > tol && iters < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if right_of(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    (0.5 * (lo + hi), iters)
}
