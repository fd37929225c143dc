//! Adaptive Simpson quadrature.
//!
//! Scalar and small fixed-size vector integrands are supported. The vector
//! form integrates several moments of the same integrand in one sweep, which
//! keeps the subdivision pattern identical across components.

/// Default absolute tolerance for survival-function integrals.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` with adaptive Simpson to absolute tolerance `tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    let [v] = integrate_vec(|x| [f(x)], a, b, tol);
    v
}

/// Vector-valued adaptive Simpson. The error test uses the max-norm over components.
pub fn integrate_vec<F, const N: usize>(f: F, a: f64, b: f64, tol: f64) -> [f64; N]
where
    F: Fn(f64) -> [f64; N],
{
    if !(b > a) {
        return [0.0; N];
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, &fa, &fm, &fb);
    recurse(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson<const N: usize>(a: f64, b: f64, fa: &[f64; N], fm: &[f64; N], fb: &[f64; N]) -> [f64; N] {
    let h = (b - a) / 6.0;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h * (fa[i] + 4.0 * fm[i] + fb[i]);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn recurse<F, const N: usize>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; N],
    fm: [f64; N],
    fb: [f64; N],
    whole: [f64; N],
    tol: f64,
    depth: u32,
) -> [f64; N]
where
    F: Fn(f64) -> [f64; N],
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, &fa, &flm, &fm);
    let right = simpson(m, b, &fm, &frm, &fb);
    let mut err: f64 = 0.0;
    for i in 0..N {
        err = err.max((left[i] + right[i] - whole[i]).abs());
    }
    if depth == 0 || err <= 15.0 * tol || (m - a) <= f64::EPSILON * a.abs().max(1.0) {
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
        }
        return out;
    }
    let l = recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = l[i] + r[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate(|x| (-x).exp(), 0.0, 5.0, 1e-12);
        assert!((v - (1.0 - (-5.0f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn kinked_integrand_converges() {
        let v = integrate(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-10), 0.0);
        assert_eq!(integrate(|x| x, 2.0, 1.0, 1e-10), 0.0);
    }
}
