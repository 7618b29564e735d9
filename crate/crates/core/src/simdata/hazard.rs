use super::SubgroupParams;
use crate::numerics::roots::find_root;

/// Baseline hazard jumps from `c` to `5c/3` after one year.
const KINK: f64 = 1.0;
const LATE_FACTOR: f64 = 5.0 / 3.0;

/// `(exp(g x) - 1) / g`, with a series for tiny `g x`.
#[inline]
fn growth(g: f64, x: f64) -> f64 {
    let gx = g * x;
    if gx.abs() < 1e-6 {
        x * (1.0 + gx / 2.0 + gx * gx / 6.0)
    } else {
        gx.exp_m1() / g
    }
}

/// Hazard at `t` for a subject with intercept `b0`, effective slope `slope_eff = b1 + b2 Z`.
pub fn hazard(t: f64, b0: f64, slope_eff: f64, arm: u8, p: &SubgroupParams) -> f64 {
    let base = if t <= KINK { p.c } else { LATE_FACTOR * p.c };
    base * (p.gamma * (b0 + slope_eff * t) + p.eta * f64::from(arm)).exp()
}

/// Exact cumulative hazard of the piecewise-constant baseline times `exp(gamma X(t) + eta Z)`.
pub fn cumulative_hazard(t: f64, b0: f64, slope_eff: f64, arm: u8, p: &SubgroupParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let scale = (p.gamma * b0 + p.eta * f64::from(arm)).exp();
    let g = p.gamma * slope_eff;
    if t <= KINK {
        p.c * scale * growth(g, t)
    } else {
        // int_0^1 c e^{g s} ds + int_1^t (5c/3) e^{g s} ds
        let early = growth(g, KINK);
        let late = (g * KINK).exp() * growth(g, t - KINK);
        scale * p.c * (early + LATE_FACTOR * late)
    }
}

/// Solves `H(T) = e` for `T`; returns `+inf` when `H(cap) < e`.
pub fn sample_event_time(e: f64, b0: f64, slope_eff: f64, arm: u8, p: &SubgroupParams, cap: f64) -> f64 {
    let h = |t: f64| cumulative_hazard(t, b0, slope_eff, arm, p) - e;
    let at_cap = h(cap);
    if !(at_cap >= 0.0) {
        return f64::INFINITY;
    }
    // Tight absolute tolerance; H is smooth and strictly increasing.
    find_root(h, 0.0, cap, 1e-12).unwrap_or(f64::INFINITY)
}
