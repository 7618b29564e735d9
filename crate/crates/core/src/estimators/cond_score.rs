//! Conditional score for the joint model: history-limited least-squares fits of the
//! biomarker, the sufficient statistic, and the sandwich variance.

use nalgebra::{Matrix2, Vector2};

use super::{AnalysisResult, Diagnostics, Method};
use crate::design::Group;
use crate::error::{Error, Result};
use crate::numerics::numeric_jacobian;
use crate::simdata::{visit_time, visits_by, AnalysisSnapshot, Subject};

const MAX_ITER: usize = 50;

/// Least-squares fit of a subject's biomarker using only visits up to `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryFit {
    /// Fitted trajectory at `u`.
    pub x_hat: f64,
    /// Prediction-variance factor; the variance of `x_hat` is `sigma2 * psi`.
    pub psi: f64,
    pub n_obs: usize,
}

/// Running sums of a subject's measurements, so that a fit on any prefix is O(1).
struct Prefix {
    sv: Vec<f64>,
    svv: Vec<f64>,
    sw: Vec<f64>,
    svw: Vec<f64>,
}

impl Prefix {
    fn new(values: &[f64]) -> Self {
        let n = values.len();
        let mut p = Prefix {
            sv: Vec::with_capacity(n + 1),
            svv: Vec::with_capacity(n + 1),
            sw: Vec::with_capacity(n + 1),
            svw: Vec::with_capacity(n + 1),
        };
        let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
        p.sv.push(a);
        p.svv.push(b);
        p.sw.push(c);
        p.svw.push(d);
        for (s, &w) in values.iter().enumerate() {
            let v = visit_time(s);
            a += v;
            b += v * v;
            c += w;
            d += v * w;
            p.sv.push(a);
            p.svv.push(b);
            p.sw.push(c);
            p.svw.push(d);
        }
        p
    }

    /// Fit on the first `m >= 2` measurements, evaluated at `u`.
    fn fit(&self, m: usize, u: f64) -> HistoryFit {
        let mf = m as f64;
        let vbar = self.sv[m] / mf;
        let wbar = self.sw[m] / mf;
        let sxx = self.svv[m] - mf * vbar * vbar;
        let sxy = self.svw[m] - mf * vbar * wbar;
        let slope = sxy / sxx;
        HistoryFit { x_hat: wbar + slope * (u - vbar), psi: 1.0 / mf + (u - vbar).powi(2) / sxx, n_obs: m }
    }
}

/// History-limited fit at `u`, or `None` when fewer than two measurements precede `u`.
/// The treatment effect on the slope is absorbed into the per-subject line.
pub fn ols_history(subject: &Subject, u: f64) -> Option<HistoryFit> {
    let m = visits_by(u).min(subject.values.len());
    if m < 2 {
        return None;
    }
    Some(Prefix::new(&subject.values[..m]).fit(m, u))
}

/// Residual sum of squares of a full least-squares line through `values`.
fn rss(values: &[f64]) -> f64 {
    let m = values.len();
    let p = Prefix::new(values);
    let mf = m as f64;
    let vbar = p.sv[m] / mf;
    let wbar = p.sw[m] / mf;
    let sxx = p.svv[m] - mf * vbar * vbar;
    let sxy = p.svw[m] - mf * vbar * wbar;
    let slope = sxy / sxx;
    values
        .iter()
        .enumerate()
        .map(|(s, &w)| (w - wbar - slope * (visit_time(s) - vbar)).powi(2))
        .sum()
}

/// Pooled measurement-error variance over subjects with more than two measurements;
/// zero when no subject qualifies.
pub fn pooled_sigma2(snapshot: &AnalysisSnapshot<'_>, group: Group) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for e in snapshot.group_entries(group) {
        if e.n_obs > 2 {
            let s = snapshot.subject(e);
            num += rss(&s.values[..e.n_obs.min(s.values.len())]);
            den += (e.n_obs - 2) as f64;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Member {
    /// Position of the subject among the group's entries.
    subject: usize,
    x_hat: f64,
    psi: f64,
    z: f64,
}

/// Risk sets of the conditional score with the history fits precomputed.
#[derive(Debug, Clone)]
pub struct CondScoreData {
    offsets: Vec<usize>,
    failing: Vec<usize>,
    members: Vec<Member>,
    /// Subjects in the group.
    pub n: usize,
    /// Pooled measurement-error variance.
    pub sigma2_hat: f64,
    /// Events among eligible subjects per arm `[control, treated]`.
    pub events_by_arm: [usize; 2],
}

impl CondScoreData {
    pub fn new(snapshot: &AnalysisSnapshot<'_>, group: Group) -> Self {
        let mut entries: Vec<_> = snapshot.group_entries(group).copied().collect();
        entries.sort_by(|a, b| a.time.total_cmp(&b.time));
        let prefixes: Vec<Prefix> = entries
            .iter()
            .map(|e| {
                let s = snapshot.subject(e);
                Prefix::new(&s.values[..e.n_obs.min(s.values.len())])
            })
            .collect();
        let mut data = CondScoreData {
            offsets: vec![0],
            failing: Vec::new(),
            members: Vec::new(),
            n: entries.len(),
            sigma2_hat: pooled_sigma2(snapshot, group),
            events_by_arm: [0, 0],
        };
        let mut start = 0;
        for (i, e) in entries.iter().enumerate() {
            let u = e.time;
            let vu = visits_by(u);
            if !e.status || vu.min(e.n_obs) < 2 {
                continue;
            }
            while entries[start].time < u {
                start += 1;
            }
            let base = data.members.len();
            let mut fail_pos = 0;
            for (j, m) in entries.iter().enumerate().skip(start) {
                let n_avail = vu.min(prefixes[j].sw.len() - 1);
                if n_avail < 2 {
                    continue;
                }
                if j == i {
                    fail_pos = data.members.len() - base;
                }
                let fit = prefixes[j].fit(n_avail, u);
                let z = f64::from(snapshot.subject(m).arm);
                data.members.push(Member { subject: j, x_hat: fit.x_hat, psi: fit.psi, z });
            }
            data.failing.push(fail_pos);
            data.offsets.push(data.members.len());
            data.events_by_arm[usize::from(snapshot.subject(e).arm)] += 1;
        }
        data
    }

    pub fn n_events(&self) -> usize {
        self.failing.len()
    }

    /// Visits `f(block, failing position, S, weights normalised to sum one)` for each event.
    fn for_each_event<F: FnMut(&[Member], usize, &[f64], &[f64])>(&self, gamma: f64, eta: f64, sigma2: f64, mut f: F) {
        let mut s = Vec::new();
        let mut w = Vec::new();
        for e in 0..self.failing.len() {
            let block = &self.members[self.offsets[e]..self.offsets[e + 1]];
            let fail = self.failing[e];
            s.clear();
            w.clear();
            for (i, m) in block.iter().enumerate() {
                let si = if i == fail { m.x_hat + gamma * sigma2 * m.psi } else { m.x_hat };
                s.push(si);
                w.push(gamma * si - 0.5 * gamma * gamma * sigma2 * m.psi + eta * m.z);
            }
            let shift = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in w.iter_mut() {
                *v = (*v - shift).exp();
                total += *v;
            }
            for v in w.iter_mut() {
                *v /= total;
            }
            f(block, fail, &s, &w);
        }
    }

    /// Per-subject contributions: the event term minus the subject's share of each
    /// risk-set compensator. They sum to the total score.
    pub fn contributions(&self, gamma: f64, eta: f64, sigma2: f64) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.n];
        self.for_each_event(gamma, eta, sigma2, |block, fail, s, w| {
            let e1: f64 = s.iter().zip(w).map(|(a, b)| a * b).sum();
            let e2: f64 = block.iter().zip(w).map(|(m, b)| m.z * b).sum();
            for (i, m) in block.iter().enumerate() {
                let r = [s[i] - e1, m.z - e2];
                let c = &mut out[m.subject];
                let dn = if i == fail { 1.0 } else { 0.0 };
                c[0] += (dn - w[i]) * r[0];
                c[1] += (dn - w[i]) * r[1];
            }
        });
        out
    }
}

/// Conditional score `U(gamma, eta, sigma2)`.
pub fn conditional_score(data: &CondScoreData, gamma: f64, eta: f64, sigma2: f64) -> [f64; 2] {
    let mut u = [0.0; 2];
    data.for_each_event(gamma, eta, sigma2, |block, fail, s, w| {
        let e1: f64 = s.iter().zip(w).map(|(a, b)| a * b).sum();
        let e2: f64 = block.iter().zip(w).map(|(m, b)| m.z * b).sum();
        u[0] += s[fail] - e1;
        u[1] += block[fail].z - e2;
    });
    u
}

fn score_vec(data: &CondScoreData, x: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let u = conditional_score(data, x[0], x[1], sigma2);
    if u[0].is_finite() && u[1].is_finite() {
        Ok(u.to_vec())
    } else {
        Err(Error::NonIdentifiable("conditional score is not finite".into()))
    }
}

fn jacobian(data: &CondScoreData, x: [f64; 2], sigma2: f64) -> Result<Matrix2<f64>> {
    let j = numeric_jacobian(|p| score_vec(data, p, sigma2), &x)?;
    Ok(Matrix2::new(j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]))
}

/// Damped Newton with step halving on the score norm. Returns the root when found.
fn solve(data: &CondScoreData, start: [f64; 2], sigma2: f64, tol: f64) -> Option<([f64; 2], usize, f64)> {
    let norm = |u: [f64; 2]| u[0].hypot(u[1]);
    let mut x = start;
    let mut u = conditional_score(data, x[0], x[1], sigma2);
    for it in 0..MAX_ITER {
        let r = norm(u);
        if !r.is_finite() {
            return None;
        }
        if r < tol {
            return Some((x, it, r));
        }
        let a = jacobian(data, x, sigma2).ok()?;
        let step = a.lu().solve(&Vector2::new(-u[0], -u[1]))?;
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand = [x[0] + scale * step[0], x[1] + scale * step[1]];
            let uc = conditional_score(data, cand[0], cand[1], sigma2);
            if norm(uc) < r {
                x = cand;
                u = uc;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    let r = norm(u);
    (r < tol).then_some((x, MAX_ITER, r))
}

/// Conditional-score analysis of one group with the sandwich information for `eta`.
/// A missing root is reported through `converged = false`.
pub fn fit_conditional_score(snapshot: &AnalysisSnapshot<'_>, group: Group, k: usize) -> Result<AnalysisResult> {
    let data = CondScoreData::new(snapshot, group);
    if data.events_by_arm.contains(&0) {
        return Err(Error::NonIdentifiable(format!(
            "events among marker-eligible subjects are required in both arms (control {}, treated {})",
            data.events_by_arm[0], data.events_by_arm[1]
        )));
    }
    let sigma2 = data.sigma2_hat;
    let tol = 1e-8 * data.n as f64;
    let root = solve(&data, [0.0, 0.0], sigma2, tol).or_else(|| {
        let (naive, _, _) = solve(&data, [0.0, 0.0], 0.0, tol)?;
        solve(&data, naive, sigma2, tol)
    });
    let Some((x, iterations, residual)) = root else {
        let u = conditional_score(&data, 0.0, 0.0, sigma2);
        let diagnostics = Diagnostics { iterations: MAX_ITER, residual: u[0].hypot(u[1]) };
        return Ok(AnalysisResult::new(Method::CondScore, group, k, f64::NAN, f64::NAN, false, diagnostics));
    };
    let diagnostics = Diagnostics { iterations, residual };
    let info = sandwich_info(&data, x, sigma2).unwrap_or(f64::NAN);
    Ok(AnalysisResult::new(Method::CondScore, group, k, -x[1], info, info > 0.0, diagnostics))
}

/// `1 / [A^-1 B A^-T]_22` with `A` the numeric score derivative and `B` the sum of
/// outer products of the per-subject contributions.
fn sandwich_info(data: &CondScoreData, x: [f64; 2], sigma2: f64) -> Option<f64> {
    let a = jacobian(data, x, sigma2).ok()?;
    let mut b = Matrix2::zeros();
    for c in data.contributions(x[0], x[1], sigma2) {
        let v = Vector2::new(c[0], c[1]);
        b += v * v.transpose();
    }
    let ainv = a.try_inverse()?;
    let v = ainv * b * ainv.transpose();
    let var = v[(1, 1)];
    (var > 0.0 && var.is_finite()).then(|| 1.0 / var)
}
