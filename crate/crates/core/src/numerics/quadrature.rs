//! Gaussian quadrature rules and adaptive Gauss–Kronrod integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// Weight 1 on [-1, 1].
    Legendre,
    /// Weight exp(-x^2) on the real line.
    Hermite,
}

/// Nodes and positive weights of a Gaussian rule, nodes in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Legendre rule mapped onto `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        debug_assert_eq!(self.kind, RuleKind::Legendre);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Hermite rule used as an expectation over `N(mean, sd^2)`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mean: f64, sd: f64, mut f: F) -> f64 {
        debug_assert_eq!(self.kind, RuleKind::Hermite);
        let scale = std::f64::consts::SQRT_2 * sd;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum::<f64>()
            / PI.sqrt()
    }
}

/// `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::Domain("Gauss-Legendre rule needs at least one node".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
            // Derivative at the centre node recomputed from the recurrence.
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(QuadratureRule { nodes, weights, kind: RuleKind::Legendre })
}

/// `n`-point Gauss–Hermite rule for the weight `exp(-x^2)`; `1 <= n <= 100`.
pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
    if !(1..=100).contains(&n) {
        return Err(Error::Domain(format!("Gauss-Hermite order must be in 1..=100, got {n}")));
    }
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut roots = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * roots[0],
            3 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == m - 1 {
            z = 0.0;
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
        }
        roots[i] = z;
        weights[i] = 2.0 / (pp * pp);
    }
    // Roots were found from the largest downwards.
    let mut nodes = vec![0.0; n];
    let mut w_sorted = vec![0.0; n];
    for i in 0..m {
        nodes[i] = -roots[i];
        nodes[n - 1 - i] = roots[i];
        w_sorted[i] = weights[i];
        w_sorted[n - 1 - i] = weights[i];
    }
    Ok(QuadratureRule { nodes, weights: w_sorted, kind: RuleKind::Hermite })
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let result = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    (result, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration on a finite interval.
fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_panels: usize) -> Result<f64> {
    let (v, e) = gk15(&mut f, a, b);
    if !v.is_finite() {
        return Err(Error::Accuracy { estimate: v, error: f64::INFINITY });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    while total_err > tol {
        if heap.len() >= max_panels {
            return Err(Error::Accuracy { estimate: total, error: total_err });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::Accuracy { estimate: total, error: total_err });
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        // Re-sum periodically to stop drift in the running totals.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

const MAX_PANELS: usize = 2000;

/// Integrates `f` over `[lower, upper]` to absolute tolerance `tol`. Either limit may be
/// infinite; semi-infinite ranges are mapped onto (0, 1) through `x = a + t / (1 - t)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    if lower.is_nan() || upper.is_nan() {
        return Err(Error::Domain("integration limits must not be NaN".into()));
    }
    if lower == upper {
        return Ok(0.0);
    }
    if lower > upper {
        return integrate(f, upper, lower, tol).map(|v| -v);
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => adaptive(f, lower, upper, tol, MAX_PANELS),
        (true, false) => adaptive(
            |t| {
                let s = 1.0 - t;
                let v = f(lower + t / s);
                if v == 0.0 { 0.0 } else { v / (s * s) }
            },
            0.0,
            1.0,
            tol,
            MAX_PANELS,
        ),
        (false, true) => adaptive(
            |t| {
                let s = 1.0 - t;
                let v = f(upper - t / s);
                if v == 0.0 { 0.0 } else { v / (s * s) }
            },
            0.0,
            1.0,
            tol,
            MAX_PANELS,
        ),
        (false, false) => adaptive(
            |t| {
                // x = t / (1 - t^2) maps (-1, 1) onto the real line.
                let s = 1.0 - t * t;
                let v = f(t / s);
                if v == 0.0 { 0.0 } else { v * (1.0 + t * t) / (s * s) }
            },
            -1.0,
            1.0,
            tol,
            MAX_PANELS,
        ),
    }
}

/// Default absolute tolerance used by the design computations.
pub const DEFAULT_TOL: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal;

    #[test]
    fn hermite_single_node() {
        let r = gauss_hermite(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hermite_two_nodes_second_moment() {
        let r = gauss_hermite(2).unwrap();
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
        assert!((v - PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_standard_normal_variance() {
        let r = gauss_hermite(20).unwrap();
        let v = r.expect_normal(0.0, 1.0, |x| x * x);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rules_are_sorted_with_positive_weights() {
        for &n in &[1usize, 2, 5, 10, 20, 37, 64, 100] {
            let h = gauss_hermite(n).unwrap();
            assert!(h.nodes.windows(2).all(|w| w[0] < w[1]), "hermite n={n}");
            assert!(h.weights.iter().all(|&w| w > 0.0));
            let s: f64 = h.weights.iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "hermite n={n} sum={s}");
            let l = gauss_legendre(n).unwrap();
            assert!(l.nodes.windows(2).all(|w| w[0] < w[1]), "legendre n={n}");
            let s: f64 = l.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "legendre n={n}");
        }
        assert!(gauss_hermite(0).is_err());
        assert!(gauss_hermite(101).is_err());
    }

    /// Hermite moments: int x^(2k) e^{-x^2} = Gamma(k + 1/2).
    fn hermite_moment(deg: usize) -> f64 {
        if deg % 2 == 1 {
            return 0.0;
        }
        let k = deg / 2;
        let mut g = PI.sqrt();
        for i in 0..k {
            g *= i as f64 + 0.5;
        }
        g
    }

    #[test]
    fn exactness_on_polynomials() {
        for &n in &[2usize, 5, 10, 20] {
            let h = gauss_hermite(n).unwrap();
            let l = gauss_legendre(n).unwrap();
            for deg in 0..(2 * n) {
                let terms: Vec<f64> = h.nodes.iter().zip(&h.weights).map(|(x, w)| w * x.powi(deg as i32)).collect();
                let approx: f64 = terms.iter().sum();
                let scale: f64 = terms.iter().map(|t| t.abs()).sum::<f64>().max(1.0);
                let exact = hermite_moment(deg);
                assert!((approx - exact).abs() < 1e-12 * scale, "hermite n={n} deg={deg}");

                let (a, b) = (-0.3, 1.7);
                let approx = l.integrate(a, b, |x| x.powi(deg as i32));
                let p = deg as i32 + 1;
                let exact = (b.powi(p) - a.powi(p)) / p as f64;
                assert!((approx - exact).abs() < 1e-11 * exact.abs().max(1.0), "legendre n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn integrates_normal_density() {
        let v = integrate(normal::pdf, f64::NEG_INFINITY, f64::INFINITY, 1e-11).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        let tail = integrate(normal::pdf, 0.754, f64::INFINITY, 1e-11).unwrap();
        assert!((tail - normal::sf(0.754)).abs() < 1e-10);
        assert!((tail - 0.225_424_610_872_277_9).abs() < 1e-9);
        let left = integrate(normal::pdf, f64::NEG_INFINITY, -1.3, 1e-11).unwrap();
        assert!((left - normal::cdf(-1.3)).abs() < 1e-10);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let a = integrate(|x| x * x, 0.0, 2.0, 1e-12).unwrap();
        let b = integrate(|x| x * x, 2.0, 0.0, 1e-12).unwrap();
        assert!((a - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(a, -b);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| 1.0 / x.sqrt().max(1e-300) * if x > 0.0 { 1.0 } else { 0.0 } + (1.0 / x).sin(), 0.0, 1.0, 1e-14);
        assert!(matches!(r, Err(Error::Accuracy { .. })));
    }
}
