//! Cox partial-likelihood engines with Breslow ties: treatment only, and treatment
//! plus the last-observation-carried-forward biomarker.

use super::{AnalysisResult, Diagnostics, Method};
use crate::design::Group;
use crate::error::{Error, Result};
use crate::simdata::{visits_by, AnalysisSnapshot};

/// Coefficient magnitude beyond which the likelihood is treated as monotone.
const DIVERGENCE: f64 = 25.0;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy)]
struct Obs {
    time: f64,
    status: bool,
    arm: f64,
}

fn observations(snapshot: &AnalysisSnapshot<'_>, group: Group) -> Vec<Obs> {
    let mut obs: Vec<Obs> = snapshot
        .group_entries(group)
        .map(|e| Obs { time: e.time, status: e.status, arm: f64::from(snapshot.subject(e).arm) })
        .collect();
    obs.sort_by(|a, b| a.time.total_cmp(&b.time));
    obs
}

fn check_events(obs: &[Obs]) -> Result<usize> {
    let treated = obs.iter().filter(|o| o.status && o.arm == 1.0).count();
    let control = obs.iter().filter(|o| o.status && o.arm == 0.0).count();
    if treated == 0 || control == 0 {
        return Err(Error::NonIdentifiable(format!(
            "events in both arms are required (treated {treated}, control {control})"
        )));
    }
    Ok(treated + control)
}

/// Log partial likelihood, score and observed information in `eta` for sorted data.
/// The risk set at an event time holds every subject whose time is at least that time.
fn cox_derivatives(obs: &[Obs], eta: f64) -> (f64, f64, f64) {
    let n = obs.len();
    let (mut s0, mut s1) = (0.0, 0.0);
    let mut suffix = vec![(0.0, 0.0); n + 1];
    for i in (0..n).rev() {
        let w = (eta * obs[i].arm).exp();
        s0 += w;
        s1 += w * obs[i].arm;
        suffix[i] = (s0, s1);
    }
    let (mut l, mut u, mut j) = (0.0, 0.0, 0.0);
    let mut start = 0;
    for i in 0..n {
        if !obs[i].status {
            continue;
        }
        while obs[start].time < obs[i].time {
            start += 1;
        }
        let (a, b) = suffix[start];
        let mean = b / a;
        l += eta * obs[i].arm - a.ln();
        u += obs[i].arm - mean;
        // Binary covariate: S2 = S1.
        j += mean - mean * mean;
    }
    (l, u, j)
}

/// Log partial likelihood in the treatment effect (log-hazard scale).
pub fn partial_likelihood(snapshot: &AnalysisSnapshot<'_>, group: Group, eta: f64) -> f64 {
    cox_derivatives(&observations(snapshot, group), eta).0
}

/// One-dimensional safeguarded Newton ascent.
fn newton_1d<F: Fn(f64) -> (f64, f64, f64)>(f: F, start: f64, tol: f64) -> Result<(f64, f64, usize, f64)> {
    let mut x = start;
    let (mut l, mut u, mut j) = f(x);
    for it in 0..MAX_ITER {
        if u.abs() < tol {
            return Ok((x, j, it, u.abs()));
        }
        if !(j > 0.0) {
            return Err(Error::NonIdentifiable("partial-likelihood information is not positive".into()));
        }
        let mut step = u / j;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = f(x + step);
            if cand.0.is_finite() && cand.0 >= l - 1e-12 * l.abs().max(1.0) {
                x += step;
                (l, u, j) = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if x.abs() > DIVERGENCE {
            return Err(Error::NonIdentifiable(format!("treatment coefficient diverges ({x})")));
        }
    }
    if u.abs() < tol * 1e3 && j > 0.0 {
        return Ok((x, j, MAX_ITER, u.abs()));
    }
    Err(Error::NonIdentifiable(format!("Newton iterations stalled with score {u}")))
}

/// Cox model with treatment as the only covariate. Information is the observed
/// information of the partial likelihood at the estimate; `theta_hat = -eta_hat`.
pub fn fit_cox(snapshot: &AnalysisSnapshot<'_>, group: Group, k: usize) -> Result<AnalysisResult> {
    let obs = observations(snapshot, group);
    let d = check_events(&obs)?;
    let (eta, info, iterations, residual) = newton_1d(|e| cox_derivatives(&obs, e), 0.0, 1e-10 * (d as f64).max(1.0))?;
    Ok(AnalysisResult::new(Method::Cox, group, k, -eta, info, true, Diagnostics { iterations, residual }))
}

/// Risk sets with covariates `(W(u), Z)` evaluated at each event time.
struct TvcBlocks {
    /// `offsets[e]..offsets[e + 1]` indexes the members of event `e`'s risk set.
    offsets: Vec<usize>,
    /// Position of the failing subject within its block.
    failing: Vec<usize>,
    x: Vec<[f64; 2]>,
}

fn tvc_blocks(snapshot: &AnalysisSnapshot<'_>, group: Group) -> TvcBlocks {
    let mut entries: Vec<_> = snapshot.group_entries(group).copied().collect();
    entries.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut offsets = vec![0];
    let mut failing = Vec::new();
    let mut x = Vec::new();
    let mut start = 0;
    for (i, e) in entries.iter().enumerate() {
        if !e.status {
            continue;
        }
        let u = e.time;
        while entries[start].time < u {
            start += 1;
        }
        let mut fail_pos = None;
        for (jdx, m) in entries.iter().enumerate().skip(start) {
            let idx = visits_by(u).min(m.n_obs);
            if idx == 0 {
                continue;
            }
            let s = snapshot.subject(m);
            if jdx == i {
                fail_pos = Some(x.len() - offsets[offsets.len() - 1]);
            }
            x.push([s.values[idx - 1], f64::from(s.arm)]);
        }
        match fail_pos {
            Some(p) => {
                failing.push(p);
                offsets.push(x.len());
            }
            None => x.truncate(offsets[offsets.len() - 1]),
        }
    }
    TvcBlocks { offsets, failing, x }
}

/// Log partial likelihood, gradient and negative Hessian for `beta = (gamma, eta)`.
fn tvc_derivatives(b: &TvcBlocks, beta: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let mut l = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for e in 0..b.failing.len() {
        let block = &b.x[b.offsets[e]..b.offsets[e + 1]];
        let lin = |x: &[f64; 2]| beta[0] * x[0] + beta[1] * x[1];
        let shift = block.iter().map(lin).fold(f64::NEG_INFINITY, f64::max);
        let (mut s0, mut s1, mut s2) = (0.0, [0.0; 2], [[0.0; 2]; 2]);
        for x in block {
            let w = (lin(x) - shift).exp();
            s0 += w;
            for p in 0..2 {
                s1[p] += w * x[p];
                for q in 0..2 {
                    s2[p][q] += w * x[p] * x[q];
                }
            }
        }
        let xf = &block[b.failing[e]];
        l += lin(xf) - shift - s0.ln();
        for p in 0..2 {
            let mp = s1[p] / s0;
            g[p] += xf[p] - mp;
            for q in 0..2 {
                h[p][q] += s2[p][q] / s0 - mp * s1[q] / s0;
            }
        }
    }
    (l, g, h)
}

fn check_tvc_events(b: &TvcBlocks) -> Result<usize> {
    let treated = (0..b.failing.len()).filter(|&e| b.x[b.offsets[e] + b.failing[e]][1] == 1.0).count();
    let d = b.failing.len();
    if treated == 0 || treated == d {
        return Err(Error::NonIdentifiable(format!("events in both arms are required (treated {treated} of {d})")));
    }
    Ok(d)
}

/// Cox model with the carried-forward biomarker as a time-varying covariate. The
/// information for the treatment coefficient is the reciprocal of the (2, 2)
/// element of the inverse observed information.
pub fn fit_cox_tvc(snapshot: &AnalysisSnapshot<'_>, group: Group, k: usize) -> Result<AnalysisResult> {
    let (beta, info, diagnostics) = solve_tvc(snapshot, group)?;
    Ok(AnalysisResult::new(Method::CoxTvc, group, k, -beta[1], info, true, diagnostics))
}

/// Fitted `(gamma, eta)` of the carried-forward biomarker model.
pub(crate) fn cox_tvc_coefficients(snapshot: &AnalysisSnapshot<'_>, group: Group) -> Result<[f64; 2]> {
    solve_tvc(snapshot, group).map(|r| r.0)
}

fn solve_tvc(snapshot: &AnalysisSnapshot<'_>, group: Group) -> Result<([f64; 2], f64, Diagnostics)> {
    let blocks = tvc_blocks(snapshot, group);
    let d = check_tvc_events(&blocks)?;
    let tol = 1e-10 * (d as f64).max(1.0);
    let mut beta = [0.0, 0.0];
    let (mut l, mut g, mut h) = tvc_derivatives(&blocks, beta);
    let mut iterations = 0;
    while iterations < MAX_ITER && g[0].abs().max(g[1].abs()) >= tol {
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if !(det > 1e-14 * (h[0][0] * h[1][1]).abs().max(1e-300)) {
            return Err(Error::NonIdentifiable("biomarker and treatment are collinear in the risk sets".into()));
        }
        let mut step = [(h[1][1] * g[0] - h[0][1] * g[1]) / det, (h[0][0] * g[1] - h[1][0] * g[0]) / det];
        let mut accepted = false;
        for _ in 0..40 {
            let cand = [beta[0] + step[0], beta[1] + step[1]];
            let (lc, gc, hc) = tvc_derivatives(&blocks, cand);
            if lc.is_finite() && lc >= l - 1e-12 * l.abs().max(1.0) {
                beta = cand;
                (l, g, h) = (lc, gc, hc);
                accepted = true;
                break;
            }
            step = [step[0] * 0.5, step[1] * 0.5];
        }
        iterations += 1;
        if !accepted {
            break;
        }
        if beta[0].abs() > DIVERGENCE || beta[1].abs() > DIVERGENCE {
            return Err(Error::NonIdentifiable(format!("coefficients diverge ({}, {})", beta[0], beta[1])));
        }
    }
    let residual = g[0].abs().max(g[1].abs());
    if residual >= tol * 1e3 {
        return Err(Error::NonIdentifiable(format!("Newton iterations stalled with score norm {residual}")));
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det > 0.0) || !(h[0][0] > 0.0) {
        return Err(Error::NonIdentifiable("observed information is not positive definite".into()));
    }
    // [(J^-1)_22]^-1 = det / J_11.
    let info = det / h[0][0];
    Ok((beta, info, Diagnostics { iterations, residual }))
}

/// The biomarker model with its coefficient held at `gamma`; `gamma = 0` is the plain Cox model.
pub fn fit_cox_tvc_fixed_gamma(snapshot: &AnalysisSnapshot<'_>, group: Group, k: usize, gamma: f64) -> Result<AnalysisResult> {
    let blocks = tvc_blocks(snapshot, group);
    let d = check_tvc_events(&blocks)?;
    let f = |eta: f64| {
        let (l, g, h) = tvc_derivatives(&blocks, [gamma, eta]);
        (l, g[1], h[1][1])
    };
    let (eta, info, iterations, residual) = newton_1d(f, 0.0, 1e-10 * (d as f64).max(1.0))?;
    Ok(AnalysisResult::new(Method::CoxTvc, group, k, -eta, info, true, Diagnostics { iterations, residual }))
}
