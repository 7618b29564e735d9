//! Central-difference Jacobians and Hessians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn step(x: f64, base: f64) -> f64 {
    base * x.abs().max(1.0)
}

/// Jacobian of `f: R^p -> R^q` by central differences; rows index outputs.
pub fn numeric_jacobian<F>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let p = x.len();
    let base = f64::EPSILON.cbrt();
    let mut xp = x.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut q = None;
    for i in 0..p {
        let h = step(x[i], base);
        xp[i] = x[i] + h;
        let up = f(&xp)?;
        xp[i] = x[i] - h;
        let dn = f(&xp)?;
        xp[i] = x[i];
        if up.len() != dn.len() || q.is_some_and(|q| q != up.len()) {
            return Err(Error::Derivative("function output length changed".into()));
        }
        q = Some(up.len());
        let col: Vec<f64> = up.iter().zip(&dn).map(|(u, d)| (u - d) / (2.0 * h)).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Derivative(format!("non-finite difference in coordinate {i}")));
        }
        cols.push(col);
    }
    let q = q.unwrap_or(0);
    Ok(DMatrix::from_fn(q, p, |r, c| cols[c][r]))
}

/// Gradient of a scalar function by central differences.
pub fn numeric_gradient<F>(mut f: F, x: &[f64]) -> Result<DVector<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let base = f64::EPSILON.cbrt();
    let mut xp = x.to_vec();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let h = step(x[i], base);
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let dn = f(&xp);
        xp[i] = x[i];
        let d = (up - dn) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::Derivative(format!("non-finite gradient in coordinate {i}")));
        }
        g[i] = d;
    }
    Ok(g)
}

/// Hessian of a scalar function by central differences, symmetrized.
pub fn numeric_hessian<F>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let p = x.len();
    let base = f64::EPSILON.powf(0.25);
    let h: Vec<f64> = x.iter().map(|&v| step(v, base)).collect();
    let f0 = f(x);
    if !f0.is_finite() {
        return Err(Error::Derivative("non-finite value at the expansion point".into()));
    }
    let mut xp = x.to_vec();
    let mut eval = |xp: &mut Vec<f64>, di: (usize, f64), dj: Option<(usize, f64)>| -> Result<f64> {
        xp[di.0] += di.1;
        if let Some((j, s)) = dj {
            xp[j] += s;
        }
        let v = f(xp);
        xp[di.0] -= di.1;
        if let Some((j, s)) = dj {
            xp[j] -= s;
        }
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Derivative("non-finite value in Hessian stencil".into()))
        }
    };
    let mut hm = DMatrix::zeros(p, p);
    for i in 0..p {
        let fp = eval(&mut xp, (i, h[i]), None)?;
        let fm = eval(&mut xp, (i, -h[i]), None)?;
        hm[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(&mut xp, (i, h[i]), Some((j, h[j])))?;
            let fpm = eval(&mut xp, (i, h[i]), Some((j, -h[j])))?;
            let fmp = eval(&mut xp, (i, -h[i]), Some((j, h[j])))?;
            let fmm = eval(&mut xp, (i, -h[i]), Some((j, -h[j])))?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    Ok((&hm + hm.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_jacobian() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, 4.0, 0.25]);
        let j = numeric_jacobian(
            |x| {
                let v = &a * DVector::from_column_slice(x);
                Ok(v.iter().copied().collect())
            },
            &[0.3, -1.1],
        )
        .unwrap();
        assert!((j - &a).abs().max() < 1e-8);
    }

    #[test]
    fn quadratic_form_hessian() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -0.5, 3.0, 0.2, 0.0, 0.7, 1.5]);
        let h = numeric_hessian(
            |x| {
                let v = DVector::from_column_slice(x);
                (v.transpose() * &q * &v)[(0, 0)]
            },
            &[0.1, 0.4, -0.6],
        )
        .unwrap();
        let expected = &q + q.transpose();
        assert!((&h - &expected).abs().max() < 1e-5);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn non_finite_is_error() {
        let r = numeric_hessian(|x| if x[0] > 0.0 { f64::NAN } else { x[0] }, &[0.0]);
        assert!(matches!(r, Err(Error::Derivative(_))));
        let r = numeric_gradient(|x| x[0].sqrt(), &[-1.0]);
        assert!(matches!(r, Err(Error::Derivative(_))));
    }
}
