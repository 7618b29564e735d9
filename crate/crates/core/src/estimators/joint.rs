//! Parametric joint model: full likelihood by Gauss–Hermite quadrature, maximum
//! likelihood, and the restricted-mean-survival-time contrast with delta-method
//! information.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cond_score::pooled_sigma2;
use super::cox::cox_tvc_coefficients;
use super::{fit_cox, AnalysisResult, Diagnostics, Method};
use crate::design::Group;
use crate::error::{Error, Result};
use crate::numerics::{gauss_hermite, gauss_legendre, minimize, MinimizeOptions, QuadratureRule};
use crate::simdata::{cumulative_hazard, visit_time, AnalysisSnapshot, SubgroupParams};

const LATE_FACTOR: f64 = 5.0 / 3.0;
const KINK: f64 = 1.0;
/// Relative step for finite differences of the contrast and of the log-likelihood.
const FD_STEP: f64 = 1e-4;

/// Joint-model parameters on an unconstrained scale:
/// `(mu0, mu1, ln phi1, atanh rho, ln phi2, ln sigma2, gamma, eta, b2, ln c)`
/// with `phi12 = rho sqrt(phi1 phi2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLikelihoodParams {
    pub theta: [f64; 10],
}

impl JointLikelihoodParams {
    pub const DIM: usize = 10;
    pub const NAMES: [&'static str; 10] = ["mu0", "mu1", "ln_phi1", "atanh_rho", "ln_phi2", "ln_sigma2", "gamma", "eta", "b2", "ln_c"];

    /// Requires positive variances, `c > 0` and a positive-definite random-effects covariance.
    pub fn from_natural(p: &SubgroupParams) -> Result<Self> {
        if !(p.phi1 > 0.0 && p.phi2 > 0.0 && p.sigma2 > 0.0 && p.c > 0.0) {
            return Err(Error::Parameter("variances and c must be positive on the likelihood scale".into()));
        }
        let rho = p.phi12 / (p.phi1 * p.phi2).sqrt();
        if !(rho.abs() < 1.0) {
            return Err(Error::Parameter(format!("random-effects correlation {rho} is not inside (-1, 1)")));
        }
        Ok(Self {
            theta: [p.mu0, p.mu1, p.phi1.ln(), rho.atanh(), p.phi2.ln(), p.sigma2.ln(), p.gamma, p.eta, p.b2, p.c.ln()],
        })
    }

    pub fn natural(&self) -> SubgroupParams {
        let t = &self.theta;
        let (phi1, phi2) = (t[2].exp(), t[4].exp());
        SubgroupParams {
            mu0: t[0],
            mu1: t[1],
            phi1,
            phi12: t[3].tanh() * (phi1 * phi2).sqrt(),
            phi2,
            sigma2: t[5].exp(),
            gamma: t[6],
            eta: t[7],
            b2: t[8],
            c: t[9].exp(),
        }
    }
}

/// Quadrature rules used by the likelihood and the contrast.
#[derive(Debug, Clone)]
pub struct JointQuadrature {
    /// Hermite rule per axis for the posterior of the random effects.
    pub likelihood: QuadratureRule,
    /// Hermite rule per axis for the population survival curves.
    pub prior: QuadratureRule,
    /// Legendre rule on each side of the hazard change point.
    pub time: QuadratureRule,
}

impl JointQuadrature {
    pub fn new(likelihood_nodes: usize, prior_nodes: usize, time_nodes: usize) -> Result<Self> {
        Ok(Self {
            likelihood: gauss_hermite(likelihood_nodes)?,
            prior: gauss_hermite(prior_nodes)?,
            time: gauss_legendre(time_nodes)?,
        })
    }
}

impl Default for JointQuadrature {
    fn default() -> Self {
        Self::new(15, 60, 20).expect("default rule sizes are valid")
    }
}

/// Settings for the parametric RMST analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmstOptions {
    /// Truncation time of the restricted mean.
    pub t_star: f64,
    pub likelihood_nodes: usize,
    pub prior_nodes: usize,
    pub time_nodes: usize,
    pub max_iter: usize,
    /// Infinity-norm tolerance on the gradient of the total negative log-likelihood.
    pub grad_tol: f64,
}

impl Default for RmstOptions {
    fn default() -> Self {
        Self { t_star: 5.0, likelihood_nodes: 15, prior_nodes: 60, time_nodes: 20, max_iter: 300, grad_tol: 1e-3 }
    }
}

impl RmstOptions {
    pub fn quadrature(&self) -> Result<JointQuadrature> {
        JointQuadrature::new(self.likelihood_nodes, self.prior_nodes, self.time_nodes)
    }
}

/// Sufficient statistics of one subject's observed data.
#[derive(Debug, Clone, Copy)]
struct SubjectStats {
    m: f64,
    sv: f64,
    svv: f64,
    sw: f64,
    svw: f64,
    sww: f64,
    time: f64,
    event: bool,
    z: f64,
}

fn subject_stats(snapshot: &AnalysisSnapshot<'_>, group: Group) -> Vec<SubjectStats> {
    snapshot
        .group_entries(group)
        .map(|e| {
            let s = snapshot.subject(e);
            let mut st = SubjectStats {
                m: 0.0,
                sv: 0.0,
                svv: 0.0,
                sw: 0.0,
                svw: 0.0,
                sww: 0.0,
                time: e.time,
                event: e.status,
                z: f64::from(s.arm),
            };
            for (k, &w) in s.values.iter().take(e.n_obs).enumerate() {
                let v = visit_time(k);
                st.m += 1.0;
                st.sv += v;
                st.svv += v * v;
                st.sw += w;
                st.svw += v * w;
                st.sww += w * w;
            }
            st
        })
        .collect()
}

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

/// Log-likelihood contribution of one subject: Gaussian marginal of the measurements
/// times the posterior expectation of `h^delta exp(-H)`.
fn subject_loglik(p: &SubgroupParams, s: &SubjectStats, rule: &QuadratureRule) -> f64 {
    let det_phi = p.phi1 * p.phi2 - p.phi12 * p.phi12;
    let pinv = [p.phi2 / det_phi, -p.phi12 / det_phi, p.phi1 / det_phi];
    let bz = p.b2 * s.z;
    let (lp_y, mean, v) = if s.m > 0.0 {
        let s2 = p.sigma2;
        let sy = s.sw - bz * s.sv;
        let svy = s.svw - bz * s.svv;
        let yy = s.sww - 2.0 * bz * s.svw + bz * bz * s.svv;
        let prec = [pinv[0] + s.m / s2, pinv[1] + s.sv / s2, pinv[2] + s.svv / s2];
        let det_p = prec[0] * prec[2] - prec[1] * prec[1];
        let v = [prec[2] / det_p, -prec[1] / det_p, prec[0] / det_p];
        let xr = [sy - (s.m * p.mu0 + s.sv * p.mu1), svy - (s.sv * p.mu0 + s.svv * p.mu1)];
        let rr = yy - 2.0 * (p.mu0 * sy + p.mu1 * svy)
            + (p.mu0 * p.mu0 * s.m + 2.0 * p.mu0 * p.mu1 * s.sv + p.mu1 * p.mu1 * s.svv);
        let quad = v[0] * xr[0] * xr[0] + 2.0 * v[1] * xr[0] * xr[1] + v[2] * xr[1] * xr[1];
        let q = rr / s2 - quad / (s2 * s2);
        let logdet = s.m * s2.ln() + det_phi.ln() + det_p.ln();
        let rhs = [pinv[0] * p.mu0 + pinv[1] * p.mu1 + sy / s2, pinv[1] * p.mu0 + pinv[2] * p.mu1 + svy / s2];
        let mean = [v[0] * rhs[0] + v[1] * rhs[1], v[1] * rhs[0] + v[2] * rhs[1]];
        (-0.5 * (s.m * (2.0 * PI).ln() + logdet + q), mean, v)
    } else {
        (0.0, [p.mu0, p.mu1], [p.phi1, p.phi12, p.phi2])
    };
    let l11 = v[0].sqrt();
    let l21 = v[1] / l11;
    let l22 = (v[2] - l21 * l21).max(0.0).sqrt();
    lp_y + survival_expectation(p, s, mean, [l11, l21, l22], rule).ln()
}

/// `E[h(T)^delta exp(-H(T))]` for `b ~ N(mean, L L^T)` by a tensor Hermite rule. The
/// exponentials factor across axes, so each node costs one `exp`.
fn survival_expectation(p: &SubgroupParams, s: &SubjectStats, mean: [f64; 2], l: [f64; 3], rule: &QuadratureRule) -> f64 {
    let n = rule.nodes.len();
    let (g, t) = (p.gamma, s.time);
    let late = t > KINK;
    let slope_mean = mean[1] + p.b2 * s.z;
    let e0 = (g * mean[0] + p.eta * s.z).exp();
    let (et, e1) = ((g * slope_mean * t).exp(), (g * slope_mean).exp());
    let c_t = if late { LATE_FACTOR * p.c } else { p.c };
    let r = |scale: f64, x: f64| (g * SQRT_2 * scale * x).exp();
    let a: Vec<f64> = rule.nodes.iter().map(|&x| r(l[0], x)).collect();
    let bt: Vec<f64> = rule.nodes.iter().map(|&x| r(l[1] * t, x)).collect();
    let b1: Vec<f64> = rule.nodes.iter().map(|&x| r(l[1], x)).collect();
    let ct: Vec<f64> = rule.nodes.iter().map(|&x| r(l[2] * t, x)).collect();
    let c1: Vec<f64> = rule.nodes.iter().map(|&x| r(l[2], x)).collect();
    let mut total = 0.0;
    for i in 0..n {
        let scale_i = p.c * e0 * a[i];
        for j in 0..n {
            let gs = g * (slope_mean + SQRT_2 * (l[1] * rule.nodes[i] + l[2] * rule.nodes[j]));
            let egt = et * bt[i] * ct[j];
            let growth_t = if gs.abs() * t.max(1.0) < 1e-5 {
                if late {
                    growth(gs, KINK) + LATE_FACTOR * (gs * KINK).exp() * growth(gs, t - KINK)
                } else {
                    growth(gs, t)
                }
            } else if late {
                let eg1 = e1 * b1[i] * c1[j];
                (eg1 - 1.0 + LATE_FACTOR * (egt - eg1)) / gs
            } else {
                (egt - 1.0) / gs
            };
            let mut term = rule.weights[i] * rule.weights[j] * (-scale_i * growth_t).exp();
            if s.event {
                term *= c_t / p.c * scale_i * egt;
            }
            if !term.is_nan() {
                total += term;
            }
        }
    }
    total / PI
}

fn loglik_stats(params: &JointLikelihoodParams, data: &[SubjectStats], rule: &QuadratureRule) -> f64 {
    let p = params.natural();
    data.iter().map(|s| subject_loglik(&p, s, rule)).sum()
}

/// Full log-likelihood of the joint model for `group` in `snapshot`.
pub fn joint_log_likelihood(params: &JointLikelihoodParams, snapshot: &AnalysisSnapshot<'_>, group: Group, quad: &JointQuadrature) -> Result<f64> {
    let v = loglik_stats(params, &subject_stats(snapshot, group), &quad.likelihood);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Likelihood(format!("log-likelihood is not finite ({v})")))
    }
}

/// Population survival at `t` for arm `z`, marginal over the random effects.
fn marginal_survival(p: &SubgroupParams, chol: [f64; 3], z: u8, t: f64, rule: &QuadratureRule) -> f64 {
    let mut total = 0.0;
    for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
        let b0 = p.mu0 + SQRT_2 * chol[0] * xi;
        for (xj, wj) in rule.nodes.iter().zip(&rule.weights) {
            let b1 = p.mu1 + SQRT_2 * (chol[1] * xi + chol[2] * xj);
            let h = cumulative_hazard(t, b0, b1 + p.b2 * f64::from(z), z, p);
            total += wi * wj * (-h).exp();
        }
    }
    total / PI
}

/// Difference in restricted mean survival (treated minus control) up to `t_star`.
pub fn rmst_difference(params: &JointLikelihoodParams, t_star: f64, quad: &JointQuadrature) -> Result<f64> {
    if !(t_star > 0.0) {
        return Err(Error::Domain(format!("truncation time must be positive, got {t_star}")));
    }
    let p = params.natural();
    let chol = p.cholesky()?;
    let diff = |t: f64| {
        marginal_survival(&p, chol, 1, t, &quad.prior) - marginal_survival(&p, chol, 0, t, &quad.prior)
    };
    let early = quad.time.integrate(0.0, t_star.min(KINK), diff);
    let late = if t_star > KINK { quad.time.integrate(KINK, t_star, diff) } else { 0.0 };
    Ok(early + late)
}

fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

fn fd_gradient<F: FnMut(&[f64]) -> Result<f64>>(mut f: F, x: &[f64]) -> Result<DVector<f64>> {
    let mut xp = x.to_vec();
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let up = f(&xp)?;
        xp[i] = x[i] - h;
        let dn = f(&xp)?;
        xp[i] = x[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    Ok(g)
}

fn fd_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64]) -> Result<DMatrix<f64>> {
    let p = x.len();
    let h: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let f0 = f(x);
    let mut m = DMatrix::zeros(p, p);
    let mut xp = x.to_vec();
    for i in 0..p {
        xp[i] = x[i] + h[i];
        let up = f(&xp);
        xp[i] = x[i] - h[i];
        let dn = f(&xp);
        xp[i] = x[i];
        m[(i, i)] = (up - 2.0 * f0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(Error::Derivative("non-finite log-likelihood near the estimate".into()))
    }
}

/// Moment-based starting values: per-subject least-squares lines for the biomarker,
/// the carried-forward Cox model for `(gamma, eta)`, and `c` matching the event count.
fn start_values(snapshot: &AnalysisSnapshot<'_>, group: Group, data: &[SubjectStats]) -> Result<SubgroupParams> {
    let sigma2 = pooled_sigma2(snapshot, group).max(1e-3);
    let mut lines = Vec::new();
    for s in data.iter().filter(|s| s.m >= 4.0) {
        let sxx = s.svv - s.sv * s.sv / s.m;
        let slope = (s.svw - s.sv * s.sw / s.m) / sxx;
        let intercept = (s.sw - slope * s.sv) / s.m;
        // Diagonal of (X^T X)^-1 scaled by sigma2: the noise part of each estimate's variance.
        let det = s.m * s.svv - s.sv * s.sv;
        lines.push((intercept, slope, s.z, sigma2 * s.svv / det, sigma2 * s.m / det));
    }
    if lines.len() < 4 {
        return Err(Error::NonIdentifiable("too few subjects with biomarker histories".into()));
    }
    let mean_by = |z: f64| {
        let v: Vec<f64> = lines.iter().filter(|l| l.2 == z).map(|l| l.1).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let nl = lines.len() as f64;
    let all_slope = lines.iter().map(|l| l.1).sum::<f64>() / nl;
    let mu1 = mean_by(0.0).unwrap_or(all_slope);
    let b2 = mean_by(1.0).map_or(0.0, |m| m - mu1);
    let mu0 = lines.iter().map(|l| l.0).sum::<f64>() / nl;
    let (mut v0, mut v1, mut c01, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for l in &lines {
        let d0 = l.0 - mu0;
        let d1 = l.1 - b2 * l.2 - mu1;
        v0 += d0 * d0;
        v1 += d1 * d1;
        c01 += d0 * d1;
        n0 += l.3;
        n1 += l.4;
    }
    let (raw0, raw1) = (v0 / nl, v1 / nl);
    let phi1 = (raw0 - n0 / nl).max(0.2 * raw0).max(1e-3);
    let phi2 = (raw1 - n1 / nl).max(0.2 * raw1).max(1e-3);
    let rho = (c01 / nl / (raw0 * raw1).sqrt()).clamp(-0.9, 0.9);
    let (gamma, eta) = match cox_tvc_coefficients(snapshot, group) {
        Ok([g, e]) => (g, e),
        Err(_) => (0.0, -fit_cox(snapshot, group, 0)?.theta_hat),
    };
    let mut p = SubgroupParams { mu0, mu1, phi1, phi12: rho * (phi1 * phi2).sqrt(), phi2, sigma2, gamma, eta, b2, c: 1.0 };
    let exposure: f64 = data.iter().map(|s| cumulative_hazard(s.time, mu0, mu1 + b2 * s.z, s.z as u8, &p)).sum();
    let events = data.iter().filter(|s| s.event).count() as f64;
    p.c = events / exposure;
    if !(p.c > 0.0 && p.c.is_finite()) {
        return Err(Error::NonIdentifiable("no events to anchor the baseline hazard".into()));
    }
    Ok(p)
}

/// Maximum-likelihood fit of the joint model.
#[derive(Debug, Clone)]
pub struct JointFit {
    pub params: JointLikelihoodParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Inverse observed information on the unconstrained scale; `None` when the
    /// Hessian is not positive definite.
    pub covariance: Option<DMatrix<f64>>,
}

/// Maximizes the joint likelihood for `group`.
pub fn fit_joint_model(snapshot: &AnalysisSnapshot<'_>, group: Group, opts: &RmstOptions, quad: &JointQuadrature) -> Result<JointFit> {
    let data = subject_stats(snapshot, group);
    let start = JointLikelihoodParams::from_natural(&start_values(snapshot, group, &data)?)?;
    let nll = |x: &[f64]| {
        let mut theta = [0.0; 10];
        theta.copy_from_slice(x);
        let v = -loglik_stats(&JointLikelihoodParams { theta }, &data, &quad.likelihood);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let min = minimize(nll, &start.theta, &MinimizeOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, max_restarts: 2 })?;
    let mut theta = [0.0; 10];
    theta.copy_from_slice(&min.x);
    let hess = fd_hessian(nll, &min.x)?;
    let covariance = hess.cholesky().map(|c| c.inverse());
    Ok(JointFit {
        params: JointLikelihoodParams { theta },
        log_likelihood: -min.value,
        converged: min.converged,
        iterations: min.iterations,
        covariance,
    })
}

/// RMST analysis: `theta_hat` is the fitted contrast and the information is the
/// inverse delta-method variance. A Hessian that is not positive definite gives
/// `converged = false`.
pub fn fit_rmst(snapshot: &AnalysisSnapshot<'_>, group: Group, k: usize, opts: &RmstOptions) -> Result<AnalysisResult> {
    let quad = opts.quadrature()?;
    let arms = snapshot
        .group_entries(group)
        .filter(|e| e.status)
        .fold([0usize; 2], |mut acc, e| {
            acc[usize::from(snapshot.subject(e).arm)] += 1;
            acc
        });
    if arms.contains(&0) {
        return Err(Error::NonIdentifiable(format!("events in both arms are required (control {}, treated {})", arms[0], arms[1])));
    }
    let fit = fit_joint_model(snapshot, group, opts, &quad)?;
    let delta = rmst_difference(&fit.params, opts.t_star, &quad)?;
    let diagnostics = Diagnostics { iterations: fit.iterations, residual: f64::NAN };
    let Some(cov) = fit.covariance.as_ref().filter(|_| fit.converged) else {
        return Ok(AnalysisResult::new(Method::Rmst, group, k, delta, f64::NAN, false, diagnostics));
    };
    let g = fd_gradient(
        |x| {
            let mut theta = [0.0; 10];
            theta.copy_from_slice(x);
            rmst_difference(&JointLikelihoodParams { theta }, opts.t_star, &quad)
        },
        &fit.params.theta,
    )?;
    let var = (g.transpose() * cov * &g)[(0, 0)];
    let info = 1.0 / var;
    Ok(AnalysisResult::new(Method::Rmst, group, k, delta, info, var > 0.0, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::simdata::{simulate_population, snapshot_at_events, snapshot_at_time, JointModelParams, Scenario, TrialDataset};

    fn stats_for(ds: &TrialDataset, cutoff: f64) -> Vec<SubjectStats> {
        subject_stats(&snapshot_at_time(ds, cutoff), Group::S1)
    }

    fn dataset(seed: u64, n: usize) -> TrialDataset {
        let sc = Scenario::new(JointModelParams::alternative());
        simulate_population(&sc, n, 200.0, &mut RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn parameter_transform_round_trip() {
        let p = SubgroupParams::reference().with_effects(-0.5, -0.5);
        let back = JointLikelihoodParams::from_natural(&p).unwrap().natural();
        for (a, b) in [(p.mu0, back.mu0), (p.phi12, back.phi12), (p.phi2, back.phi2), (p.c, back.c), (p.b2, back.b2)] {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn factored_survival_matches_direct_hazard() {
        let p = SubgroupParams::reference().with_effects(-0.3, -0.4);
        let rule = gauss_hermite(15).unwrap();
        for &(t, event, z) in &[(0.4, true, 1.0), (2.7, false, 0.0), (3.3, true, 0.0), (1.0, false, 1.0)] {
            let s = SubjectStats { m: 0.0, sv: 0.0, svv: 0.0, sw: 0.0, svw: 0.0, sww: 0.0, time: t, event, z };
            let chol = p.cholesky().unwrap();
            let fast = survival_expectation(&p, &s, [p.mu0, p.mu1], chol, &rule);
            let mut slow = 0.0;
            for (xi, wi) in rule.nodes.iter().zip(&rule.weights) {
                for (xj, wj) in rule.nodes.iter().zip(&rule.weights) {
                    let b0 = p.mu0 + SQRT_2 * chol[0] * xi;
                    let b1 = p.mu1 + SQRT_2 * (chol[1] * xi + chol[2] * xj);
                    let slope = b1 + p.b2 * z;
                    let h = crate::simdata::hazard(t, b0, slope, z as u8, &p);
                    let big_h = cumulative_hazard(t, b0, slope, z as u8, &p);
                    slow += wi * wj * if event { h } else { 1.0 } * (-big_h).exp();
                }
            }
            slow /= PI;
            assert!((fast - slow).abs() < 1e-10 * slow.abs().max(1e-300), "{t}: {fast} vs {slow}");
        }
    }

    #[test]
    fn marginal_measurement_density_matches_dense_formula() {
        // One subject with three measurements, no event, censored at t = 0: only the
        // Gaussian marginal remains.
        let p = SubgroupParams::reference().with_effects(0.0, -0.5);
        let w = [4.0, 3.1, 5.2];
        let v: Vec<f64> = (0..3).map(visit_time).collect();
        let s = SubjectStats {
            m: 3.0,
            sv: v.iter().sum(),
            svv: v.iter().map(|x| x * x).sum(),
            sw: w.iter().sum(),
            svw: v.iter().zip(&w).map(|(a, b)| a * b).sum(),
            sww: w.iter().map(|x| x * x).sum(),
            time: 0.0,
            event: false,
            z: 1.0,
        };
        let got = subject_loglik(&p, &s, &gauss_hermite(15).unwrap());
        let x = DMatrix::from_fn(3, 2, |r, c| if c == 0 { 1.0 } else { v[r] });
        let phi = DMatrix::from_row_slice(2, 2, &[p.phi1, p.phi12, p.phi12, p.phi2]);
        let cov = &x * &phi * x.transpose() + DMatrix::identity(3, 3) * p.sigma2;
        let mean = DVector::from_fn(3, |r, _| p.mu0 + (p.mu1 + p.b2) * v[r]);
        let r = DVector::from_column_slice(&w) - mean;
        let q = (r.transpose() * cov.clone().try_inverse().unwrap() * &r)[(0, 0)];
        let expect = -0.5 * (3.0 * (2.0 * PI).ln() + cov.determinant().ln() + q);
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn hermite_refinement_is_stable() {
        let ds = dataset(31, 150);
        let data = stats_for(&ds, 3.0);
        let p = SubgroupParams::reference().with_effects(-0.5, -0.5);
        let (r15, r25) = (gauss_hermite(15).unwrap(), gauss_hermite(25).unwrap());
        for s in &data {
            let d = subject_loglik(&p, s, &r15) - subject_loglik(&p, s, &r25);
            assert!(d.abs() < 1e-4, "{d}");
        }
    }

    #[test]
    fn rmst_zero_without_effects_and_monotone_in_eta() {
        let quad = JointQuadrature::default();
        let null = JointLikelihoodParams::from_natural(&SubgroupParams::reference()).unwrap();
        assert_eq!(rmst_difference(&null, 5.0, &quad).unwrap(), 0.0);
        let vals: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0]
            .iter()
            .map(|&eta| {
                let p = SubgroupParams::reference().with_effects(eta, -0.5);
                rmst_difference(&JointLikelihoodParams::from_natural(&p).unwrap(), 5.0, &quad).unwrap()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn rmst_fit_runs() {
        let ds = dataset(32, 300);
        let snap = snapshot_at_events(&ds, Group::S1, 120);
        let t0 = std::time::Instant::now();
        let r = fit_rmst(&snap, Group::S1, 1, &RmstOptions::default()).unwrap();
        eprintln!("rmst fit {:?} in {:?}", r, t0.elapsed());
        assert!(r.theta_hat.is_finite());
    }
}
