//! Unconstrained minimization: BFGS on numeric gradients with a Nelder–Mead fallback.

use nalgebra::{DMatrix, DVector};

use super::derivatives::numeric_gradient;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the numeric gradient.
    pub grad_tol: f64,
    pub max_restarts: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, max_restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn grad_or_inf<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> DVector<f64> {
    numeric_gradient(&mut *f, x).unwrap_or_else(|_| DVector::from_element(x.len(), f64::INFINITY))
}

/// BFGS iterations from `x0`. Returns the final point and whether the line search stalled.
fn bfgs<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: DVector<f64>, opts: &MinimizeOptions, iters: &mut usize) -> (DVector<f64>, f64, bool) {
    let p = x0.len();
    let mut x = x0;
    let mut fx = f(x.as_slice());
    let mut g = grad_or_inf(f, x.as_slice());
    let mut h = DMatrix::<f64>::identity(p, p);
    let mut first = true;
    while *iters < opts.max_iter {
        if g.amax() < opts.grad_tol {
            return (x, fx, false);
        }
        if !g.iter().all(|v| v.is_finite()) {
            return (x, fx, true);
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            h = DMatrix::identity(p, p);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        if first {
            // Scale the first step so it moves at most unit distance.
            let n = dir.norm();
            if n > 1.0 {
                dir /= n;
                slope /= n;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &dir * t;
            let fnew = f(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        *iters += 1;
        let Some((xn, fnew)) = accepted else {
            return (x, fx, true);
        };
        let gn = grad_or_inf(f, xn.as_slice());
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy.is_finite() {
            if first {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(p, p);
            let left = &i - (&s * y.transpose()) * rho;
            let right = &i - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
        }
        first = false;
        let stalled = (fx - fnew).abs() <= 1e-15 * fx.abs().max(1.0) && s.amax() < 1e-14;
        x = xn;
        fx = fnew;
        g = gn;
        if stalled && g.amax() >= opts.grad_tol {
            return (x, fx, true);
        }
    }
    (x, fx, false)
}

/// Nelder–Mead simplex search started at `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], max_eval: usize, ftol: f64) -> (Vec<f64>, f64) {
    let p = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..p {
        let mut v = x0.to_vec();
        v[i] += 0.1 * x0[i].abs().max(0.5);
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| sanitize(f(v))).collect();
    let mut evals = p + 1;
    while evals < max_eval {
        let mut order: Vec<usize> = (0..=p).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[p] - vals[0]).abs() <= ftol * (vals[0].abs() + 1e-12) {
            break;
        }
        let centroid: Vec<f64> = (0..p).map(|d| simplex[..p].iter().map(|v| v[d]).sum::<f64>() / p as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..p).map(|d| centroid[d] + c * (simplex[p][d] - centroid[d])).collect() };
        let xr = along(-1.0);
        let fr = sanitize(f(&xr));
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = sanitize(f(&xe));
            evals += 1;
            if fe < fr {
                simplex[p] = xe;
                vals[p] = fe;
            } else {
                simplex[p] = xr;
                vals[p] = fr;
            }
        } else if fr < vals[p - 1] {
            simplex[p] = xr;
            vals[p] = fr;
        } else {
            let (xc, fc) = if fr < vals[p] {
                let xc = along(-0.5);
                let fc = sanitize(f(&xc));
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = sanitize(f(&xc));
                (xc, fc)
            };
            evals += 1;
            if fc < vals[p].min(fr) {
                simplex[p] = xc;
                vals[p] = fc;
            } else {
                for i in 1..=p {
                    for d in 0..p {
                        simplex[i][d] = simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]);
                    }
                    vals[i] = sanitize(f(&simplex[i]));
                }
                evals += p;
            }
        }
    }
    let best = (0..=p).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (simplex[best].clone(), vals[best])
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() { f64::INFINITY } else { v }
}

/// Minimizes `f` from `x0`. Hitting the iteration cap yields `converged = false`
/// with the best point found.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &MinimizeOptions) -> Result<Minimum> {
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Domain("objective is not finite at the starting point".into()));
    }
    let mut iters = 0;
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f0;
    for restart in 0..=opts.max_restarts {
        let (xn, fnew, stalled) = bfgs(&mut f, x, opts, &mut iters);
        x = xn;
        fx = fnew;
        if !stalled || iters >= opts.max_iter || restart == opts.max_restarts {
            break;
        }
        let (xs, fs) = nelder_mead(&mut f, x.as_slice(), 200 * (x0.len() + 1), 1e-12);
        if fs < fx {
            x = DVector::from_vec(xs);
            fx = fs;
        }
    }
    let g = grad_or_inf(&mut f, x.as_slice());
    Ok(Minimum { converged: g.amax() < opts.grad_tol, x: x.iter().copied().collect(), value: fx, iterations: iters })
}
