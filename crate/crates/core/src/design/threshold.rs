use crate::error::{Error, Result};
use crate::numerics::{normal, roots::find_root};

/// Stage-1 selection probabilities `(p1, p2)` of each subgroup statistic exceeding
/// `zeta` under the alternative `theta1 = delta`, `theta2 = 0`.
fn tail_pair(zeta: f64, delta: f64, sqrt_info: f64) -> (f64, f64) {
    (normal::sf(zeta - delta * sqrt_info), normal::sf(zeta))
}

/// Solves `P(W = S1) = psi` and `P(W = F) = P(W = empty)` for `(zeta, info1_req)`
/// under the alternative `theta1 = delta`, `theta2 = 0`.
///
/// With `p_j` the probability that `Z_j > zeta`, the second equation reduces to
/// `p1 + p2 = 1`. For each trial `zeta` the inner solve finds `sqrt(I)`; the outer
/// solve matches `p1 (1 - p2)` to `psi`.
pub fn calibrate_threshold(psi: f64, delta: f64) -> Result<(f64, f64)> {
    if !(psi > 0.0 && psi < 1.0) {
        return Err(Error::Parameter(format!("psi must lie in (0, 1), got {psi}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Parameter(format!("delta must be positive on the benefit scale, got {delta}")));
    }
    // At zeta = 0 the balance equation forces zero information and P(S1) = 1/4.
    if psi == 0.25 {
        return Ok((0.0, 0.0));
    }
    if psi < 0.25 {
        return Err(Error::Calibration(format!(
            "psi = {psi} is below 1/4; the balance equation then has no solution with positive information"
        )));
    }
    let sqrt_info_for = |zeta: f64| -> Result<f64> {
        let balance = |s: f64| {
            let (p1, p2) = tail_pair(zeta, delta, s);
            p1 + p2 - 1.0
        };
        let hi = (2.0 * zeta + 40.0) / delta;
        find_root(balance, 0.0, hi, 1e-15)
    };
    let outer = |zeta: f64| -> f64 {
        match sqrt_info_for(zeta) {
            Ok(s) => {
                let (p1, p2) = tail_pair(zeta, delta, s);
                p1 * (1.0 - p2) - psi
            }
            Err(_) => f64::NAN,
        }
    };
    let zeta = find_root(outer, 1e-12, 8.0, 1e-15)
        .map_err(|e| Error::Calibration(format!("threshold equation has no root: {e}")))?;
    let s = sqrt_info_for(zeta)?;
    Ok((zeta, s * s))
}
