//! Period of the `k`-pulse orbit from the degree-`n` return polynomial.

/// Uniform bracketing subintervals scanned over (0, 1).
const BRACKETS: usize = 16_384;
const BISECTION_STEPS: usize = 200;

/// `p(x) = v_thl x^n - x^(2k) + x^k - v_thl`, with `x = exp(-P / (n tau))`.
pub fn period_polynomial(x: f64, n: usize, k: usize, v_thl: f64) -> f64 {
    let xk = x.powi(k as i32);
    v_thl * x.powi(n as i32) - xk * xk + xk - v_thl
}

/// All roots of the period polynomial in the open interval (0, 1), ascending.
/// The trivial root at `x = 1` is never reported.
pub fn period_polynomial_roots(n: usize, k: usize, v_thl: f64) -> Vec<f64> {
    let p = |x: f64| period_polynomial(x, n, k, v_thl);
    let mut roots = Vec::new();
    let mut lo = 0.0;
    let mut p_lo = p(lo);
    for j in 1..BRACKETS {
        let hi = j as f64 / BRACKETS as f64;
        let p_hi = p(hi);
        if p_hi == 0.0 {
            roots.push(hi);
        } else if p_lo != 0.0 && (p_lo < 0.0) != (p_hi < 0.0) {
            roots.push(bisect(&p, lo, hi, p_lo));
        }
        lo = hi;
        p_lo = p_hi;
    }
    roots
}

fn bisect(p: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut p_lo: f64) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p_mid = p(mid);
        if p_mid == 0.0 {
            return mid;
        }
        if (p_mid < 0.0) == (p_lo < 0.0) {
            lo = mid;
            p_lo = p_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Period (in units of tau) of the stable `k`-pulse orbit, `-n ln(x_min)`
/// from the smallest interior root. The larger root belongs to the unstable
/// orbit. `None` when the polynomial has no interior root.
pub fn stable_period(n: usize, k: usize, v_thl: f64) -> Option<f64> {
    period_polynomial_roots(n, k, v_thl)
        .first()
        .map(|&x| -(n as f64) * x.ln())
}
