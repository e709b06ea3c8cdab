//! Small numeric toolkit: sign-change bracketing, bisection and adaptive
//! Simpson quadrature.

/// Bisection on a bracket `[lo, hi]` with `f(lo)` and `f(hi)` of opposite
/// sign. Stops when the bracket is narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Brackets of sign changes of `f` on a uniform grid of `points` nodes.
/// Each bracket carries whether `f` goes from positive to negative.
pub fn sign_change_brackets<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    points: usize,
) -> Vec<(f64, f64, bool)> {
    let points = points.max(2);
    let h = (hi - lo) / (points - 1) as f64;
    let mut out = Vec::new();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..points {
        let x = if i == points - 1 { hi } else { lo + h * i as f64 };
        let fx = f(x);
        if f_prev.is_nan() || fx.is_nan() {
            x_prev = x;
            f_prev = fx;
            continue;
        }
        if (f_prev > 0.0) != (fx > 0.0) {
            out.push((x_prev, x, f_prev > 0.0));
        }
        x_prev = x;
        f_prev = fx;
    }
    out
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `ln(sum(exp(v)))` over a slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-12);
        assert!((r - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn brackets_of_cubic() {
        let f = |x: f64| (x - 0.2) * (x - 0.5) * (x - 0.7);
        let b = sign_change_brackets(&f, 0.0, 1.0, 1000);
        assert_eq!(b.len(), 3);
        assert!(!b[0].2 && b[1].2 && !b[2].2);
    }

    #[test]
    fn simpson_polynomial_and_exp() {
        let v = adaptive_simpson(&|x: f64| x.powi(4), 0.0, 2.0, 1e-10);
        assert!((v - 32.0 / 5.0).abs() < 1e-9);
        let e = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 3.0, 1e-10);
        assert!((e - (1.0 - (-3f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn lse() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
