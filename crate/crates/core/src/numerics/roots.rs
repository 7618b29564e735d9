//! Bracketed root finding.

use crate::error::{Error, Result};

/// Brent's method on `[lo, hi]`. The returned point always lies inside the bracket.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() || !fb.is_finite() || fa * fb > 0.0 {
        return Err(Error::Bracketing { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let tol = tol.max(0.0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Domain(format!("non-finite function value at {b}")));
        }
    }
    Ok(b)
}

/// Expands `[lo, hi]` geometrically away from `lo` until `f` changes sign, then solves.
/// `hi` grows until it passes `limit`.
pub fn find_root_expanding<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, limit: f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let mut h = hi;
    let mut fh = f(h);
    let mut width = hi - lo;
    while flo * fh > 0.0 {
        if (limit - h) * width.signum() <= 0.0 {
            return Err(Error::Bracketing { lo, hi: h, f_lo: flo, f_hi: fh });
        }
        width *= 2.0;
        h = if width > 0.0 { (lo + width).min(limit) } else { (lo + width).max(limit) };
        fh = f(h);
    }
    find_root(f, lo, h, tol)
}
