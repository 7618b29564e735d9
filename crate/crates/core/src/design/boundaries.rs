use serde::{Deserialize, Serialize};

use super::densities::StageOneLaw;
use super::plan::MConstants;
use super::{DesignSpec, Group, InfoState, ThetaConfig};
use crate::error::{Error, Result};
use crate::numerics::normal;
use crate::numerics::quadrature::integrate;
use crate::numerics::roots::find_root;

const QUAD_TOL: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-12;
/// Z-scale search range for boundary roots.
const Z_RANGE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Upper,
    Lower,
}

/// `P(Z^(2) > threshold | Z^(1) = z1)` (upper) or `P(Z^(2) <= threshold | Z^(1) = z1)`
/// (lower) under the canonical joint distribution.
pub fn stage2_tail(theta: f64, info1: f64, info2: f64, z1: f64, threshold: f64, side: Side) -> Result<f64> {
    if !(info2 > info1 && info1 > 0.0) {
        return Err(Error::Ordering { stage1: info1, stage2: info2 });
    }
    let x = conditional_standardized(theta, info1 / info2, info2.sqrt(), info1.sqrt(), z1, threshold);
    Ok(match side {
        Side::Upper => normal::sf(x),
        Side::Lower => normal::cdf(x),
    })
}

/// Standardized distance of `threshold` from the conditional mean of `Z^(2)` given `z1`.
#[inline]
fn conditional_standardized(theta: f64, ratio: f64, sqrt_i2: f64, sqrt_i1: f64, z1: f64, threshold: f64) -> f64 {
    let mean = theta * sqrt_i2 + ratio.sqrt() * (z1 - theta * sqrt_i1);
    (threshold - mean) / (1.0 - ratio).sqrt()
}

/// Error spent at each analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spend {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Quadratic spending `f(t) = min(alpha t^2, alpha)` with `t = min(I_F / I_max, 1)`.
pub fn spend(alpha: f64, beta: f64, info_f: [f64; 2], i_max: f64) -> Spend {
    let t = |i: f64| (i / i_max).clamp(0.0, 1.0);
    let (t1, t2) = (t(info_f[0]), t(info_f[1]).max(t(info_f[0])));
    let alpha1 = alpha * t1 * t1;
    let beta1 = beta * t1 * t1;
    Spend {
        alpha1,
        alpha2: (alpha * t2 * t2 - alpha1).max(0.0),
        beta1,
        beta2: (beta * t2 * t2 - beta1).max(0.0),
    }
}

/// Boundaries for both analyses and the error spent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundaries {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub spend: Spend,
}

fn full_tail(law: &StageOneLaw, b: f64) -> Result<f64> {
    let lo = b.max(law.support_lo(Group::F));
    integrate(|z| law.density(z, Group::F), lo, f64::INFINITY, QUAD_TOL)
}

/// Probability under `law` of selecting some population and its statistic exceeding `b`.
fn stage1_rejection(law: &StageOneLaw, b: f64) -> Result<f64> {
    Ok(law.subgroup_tail(Group::S1, b) + law.subgroup_tail(Group::S2, b) + full_tail(law, b)?)
}

/// Solves for `(a1, b1)`: `b1` spends `alpha1` over all selected populations under the
/// global null; `a1` spends `beta1` on the S1 branch under the alternative. A zero
/// spend yields an infinite sentinel (`b1 = +inf`, `a1 = -inf`).
pub fn solve_stage1_boundaries(alpha1: f64, beta1: f64, spec: &DesignSpec, info: &InfoState) -> Result<(f64, f64)> {
    let (i1, i2) = (info.get(0, Group::S1), info.get(0, Group::S2));
    let null = StageOneLaw::new(&spec.theta_null(), i1, i2, spec.lambda, spec.zeta);
    let b1 = if alpha1 <= 0.0 {
        f64::INFINITY
    } else {
        let lo = null.support_lo(Group::S1).min(null.support_lo(Group::F));
        let available = stage1_rejection(&null, lo)?;
        if alpha1 >= available {
            return Err(Error::InfeasibleSpend { requested: alpha1, available });
        }
        let mut failure = None;
        let root = find_root(
            |b| match stage1_rejection(&null, b) {
                Ok(v) => v - alpha1,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            },
            lo,
            Z_RANGE,
            ROOT_TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        root?
    };
    let alt = StageOneLaw::new(&spec.theta_alt(), i1, i2, spec.lambda, spec.zeta);
    let a1 = if beta1 <= 0.0 {
        f64::NEG_INFINITY
    } else {
        let available = alt.subgroup_tail(Group::S1, spec.zeta);
        if beta1 >= available {
            return Err(Error::InfeasibleSpend { requested: beta1, available });
        }
        // Mass of the S1 branch in (zeta, a].
        let mass = |a: f64| available - alt.subgroup_tail(Group::S1, a);
        find_root(|a| mass(a) - beta1, spec.zeta, alt.mu1 + Z_RANGE, ROOT_TOL)?
    };
    Ok((a1, b1))
}

/// Stage-2 laws for one population: ratio `I^(1)/I^(2)` and square roots of both.
#[derive(Clone, Copy)]
struct Stage2Geometry {
    ratio: f64,
    sqrt_i1: f64,
    sqrt_i2: f64,
}

fn geometry(info: &InfoState, g: Group) -> Result<Stage2Geometry> {
    let (i1, i2) = (info.get(0, g), info.get(1, g));
    if !(i2 > i1 && i1 > 0.0) {
        return Err(Error::Ordering { stage1: i1, stage2: i2 });
    }
    Ok(Stage2Geometry { ratio: i1 / i2, sqrt_i1: i1.sqrt(), sqrt_i2: i2.sqrt() })
}

/// Mass of `(Z^(1) in continuation region, W = g)` weighted by a stage-2 probability.
fn continuation_integral<F: Fn(f64) -> f64>(law: &StageOneLaw, g: Group, a1: f64, b1: f64, weight: F) -> Result<f64> {
    let lo = a1.max(law.support_lo(g));
    if lo >= b1 {
        return Ok(0.0);
    }
    integrate(|z| law.density(z, g) * weight(z), lo, b1, QUAD_TOL)
}

fn solve_with_failure<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64) -> Result<f64> {
    let mut failure = None;
    let root = find_root(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        lo,
        hi,
        ROOT_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    root
}

/// Efficacy bound at the final analysis: spends `alpha2` summed over all populations
/// that could be selected and continue past stage 1, under the global null.
/// Returns `+inf` for a zero spend and `-inf` when the spend equals the whole
/// continuation mass.
pub fn solve_b2(alpha2: f64, spec: &DesignSpec, info: &InfoState, a1: f64, b1: f64) -> Result<f64> {
    if alpha2 <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let (i1, i2) = (info.get(0, Group::S1), info.get(0, Group::S2));
    let null = StageOneLaw::new(&spec.theta_null(), i1, i2, spec.lambda, spec.zeta);
    let geo = [geometry(info, Group::S1)?, geometry(info, Group::S2)?, geometry(info, Group::F)?];
    let mut available = 0.0;
    for g in Group::ALL {
        available += continuation_integral(&null, g, a1, b1, |_| 1.0)?;
    }
    if alpha2 > available * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::InfeasibleSpend { requested: alpha2, available });
    }
    if alpha2 >= available - 1e-13 {
        return Ok(f64::NEG_INFINITY);
    }
    let rejection = |b2: f64| -> Result<f64> {
        let mut total = 0.0;
        for g in Group::ALL {
            let s = geo[g.index()];
            total += continuation_integral(&null, g, a1, b1, |z| {
                normal::sf(conditional_standardized(0.0, s.ratio, s.sqrt_i2, s.sqrt_i1, z, b2))
            })?;
        }
        Ok(total - alpha2)
    };
    solve_with_failure(rejection, -Z_RANGE, Z_RANGE)
}

/// Futility bound at the final analysis from `beta2` on the S1 branch under the
/// alternative. Returns `-inf` for a zero spend.
pub fn solve_a2(beta2: f64, spec: &DesignSpec, info: &InfoState, a1: f64, b1: f64) -> Result<f64> {
    if beta2 <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let (i1, i2) = (info.get(0, Group::S1), info.get(0, Group::S2));
    let theta: ThetaConfig = spec.theta_alt();
    let alt = StageOneLaw::new(&theta, i1, i2, spec.lambda, spec.zeta);
    let s = geometry(info, Group::S1)?;
    let available = continuation_integral(&alt, Group::S1, a1, b1, |_| 1.0)?;
    if beta2 >= available {
        return Err(Error::InfeasibleSpend { requested: beta2, available });
    }
    let accept = |a2: f64| -> Result<f64> {
        let v = continuation_integral(&alt, Group::S1, a1, b1, |z| {
            normal::cdf(conditional_standardized(theta.theta1, s.ratio, s.sqrt_i2, s.sqrt_i1, z, a2))
        })?;
        Ok(v - beta2)
    };
    solve_with_failure(accept, -Z_RANGE, Z_RANGE + alt.mu1)
}

/// Both final-analysis bounds `(a2, b2)` before the final-analysis rule `a2 = b2` is applied.
pub fn solve_stage2_boundaries(
    alpha2: f64,
    beta2: f64,
    spec: &DesignSpec,
    info: &InfoState,
    a1: f64,
    b1: f64,
) -> Result<(f64, f64)> {
    let b2 = solve_b2(alpha2, spec, info, a1, b1)?;
    let a2 = solve_a2(beta2, spec, info, a1, b1)?;
    Ok((a2, b2))
}

/// Planned information sequence for a candidate `i_max`.
pub(crate) fn planned_info(spec: &DesignSpec, m: &MConstants, d1: f64, i_max: f64) -> Result<InfoState> {
    let i1 = d1 / m.m1;
    let d2 = (1.0 - spec.lambda) * d1 / spec.lambda;
    let i2 = d2 / m.m2;
    let mut state = InfoState::stage1(spec.lambda, i1, i2)?;
    state.events[0] = [d1, d2, d1 + d2];
    state.events[1] = [m.mf * i_max; 3];
    state.with_stage2([m.mf * i_max / m.m1, m.mf * i_max / m.m2, i_max])
}

/// All four planned boundaries (raw `a2`, not yet equated to `b2`).
pub fn planned_boundaries(spec: &DesignSpec, m: &MConstants, d1: f64, i_max: f64) -> Result<Boundaries> {
    let info = planned_info(spec, m, d1, i_max)?;
    let sp = spend(spec.alpha, spec.beta, [info.get(0, Group::F), info.get(1, Group::F)], i_max);
    let (mut a1, b1) = solve_stage1_boundaries(sp.alpha1, sp.beta1, spec, &info)?;
    if a1 > b1 {
        a1 = b1;
    }
    let b2 = solve_b2(sp.alpha2, spec, &info, a1, b1)?;
    let a2 = match solve_a2(sp.beta2, spec, &info, a1, b1) {
        Err(Error::InfeasibleSpend { .. }) => f64::INFINITY,
        other => other?,
    };
    Ok(Boundaries { a1, b1, a2, b2, spend: sp })
}

/// Finds `I_max` at which the planned final bounds coincide (`a2 = b2`).
pub fn find_imax(spec: &DesignSpec, m: &MConstants, d1: f64) -> Result<f64> {
    let i1 = d1 / m.m1;
    let d2 = (1.0 - spec.lambda) * d1 / spec.lambda;
    let i_f1 = spec.info_f(i1, d2 / m.m2);
    // Planned stage-2 information must exceed stage-1 information in every group.
    let floor = i_f1.max(d1 / m.mf).max(d2 / m.mf);
    let gap = |i_max: f64| -> Result<f64> {
        let b = planned_boundaries(spec, m, d1, i_max)?;
        Ok(b.a2.clamp(-1e3, 1e3) - b.b2.clamp(-1e3, 1e3))
    };
    let lo = floor * 1.01;
    let mut hi = 100.0 * floor;
    let g_lo = gap(lo)?;
    if g_lo > 0.0 {
        return Err(Error::Search(format!("a2 already exceeds b2 at the smallest admissible I_max {lo}")));
    }
    let mut expansions = 0;
    while gap(hi)? < 0.0 {
        if expansions >= 10 {
            return Err(Error::Search(format!("a2 stays below b2 up to I_max = {hi}")));
        }
        hi *= 4.0;
        expansions += 1;
    }
    solve_with_failure(gap, lo, hi).map_err(|e| Error::Search(e.to_string()))
}
