//! Trial populations from the joint longitudinal–survival model: random effects,
//! noisy biomarker measurements on a clinic schedule, event times from the exact
//! cumulative hazard, independent censoring, staggered accrual and
//! event-triggered analysis snapshots.

mod hazard;
mod population;
mod subject;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hazard::{cumulative_hazard, hazard, sample_event_time};
pub use population::{
    simulate_population, snapshot_at_events, snapshot_at_time, AnalysisSnapshot, CandidatePool, SnapshotEntry,
    TrialDataset,
};
pub use subject::{measurement_schedule, sample_subject, visit_time, visits_by, Subject, SubjectDraws};

/// Censoring rate of 5e-5 per day expressed per year.
pub const CENSOR_RATE_PER_YEAR: f64 = 5e-5 * 365.25;

/// Joint-model parameters for one subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupParams {
    /// Mean random intercept.
    pub mu0: f64,
    /// Mean random slope.
    pub mu1: f64,
    pub phi1: f64,
    pub phi12: f64,
    pub phi2: f64,
    /// Measurement-error variance.
    pub sigma2: f64,
    /// Association between the true biomarker and the log hazard.
    pub gamma: f64,
    /// Direct treatment effect on the log hazard.
    pub eta: f64,
    /// Treatment-by-time effect on the biomarker.
    pub b2: f64,
    /// Baseline hazard level during the first year.
    pub c: f64,
}

impl SubgroupParams {
    /// Fixed values used throughout the simulation studies, with no treatment effect.
    pub const fn reference() -> Self {
        Self { mu0: 4.23, mu1: 1.81, phi1: 2.5, phi12: 1.7, phi2: 5.0, sigma2: 1.0, gamma: 0.8, eta: 0.0, b2: 0.0, c: 0.0085 }
    }

    pub fn with_effects(mut self, eta: f64, b2: f64) -> Self {
        self.eta = eta;
        self.b2 = b2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.mu0, self.mu1, self.phi1, self.phi12, self.phi2, self.sigma2, self.gamma, self.eta, self.b2, self.c];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("joint-model parameters must be finite".into()));
        }
        if self.sigma2 < 0.0 {
            return Err(Error::Parameter(format!("sigma2 must be non-negative, got {}", self.sigma2)));
        }
        if !(self.c > 0.0) {
            return Err(Error::Parameter(format!("baseline hazard c must be positive, got {}", self.c)));
        }
        self.cholesky().map(|_| ())
    }

    /// Lower Cholesky factor `[[l11, 0], [l21, l22]]` of the random-effects covariance,
    /// allowing singular (positive semi-definite) matrices.
    pub fn cholesky(&self) -> Result<[f64; 3]> {
        let (a, b, d) = (self.phi1, self.phi12, self.phi2);
        let det = a * d - b * b;
        let scale = (a.abs() * d.abs()).max(1.0);
        if a < 0.0 || d < 0.0 || det < -1e-12 * scale {
            return Err(Error::Parameter(format!(
                "random-effects covariance [[{a}, {b}], [{b}, {d}]] is not positive semi-definite"
            )));
        }
        if a == 0.0 {
            if b != 0.0 {
                return Err(Error::Parameter("zero intercept variance requires zero covariance".into()));
            }
            return Ok([0.0, 0.0, d.sqrt()]);
        }
        let l11 = a.sqrt();
        let l21 = b / l11;
        Ok([l11, l21, (d - l21 * l21).max(0.0).sqrt()])
    }
}

/// Parameters for both subgroups and the prevalence of S1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointModelParams {
    pub lambda: f64,
    pub s1: SubgroupParams,
    pub s2: SubgroupParams,
}

impl JointModelParams {
    /// Reference values with no treatment effect in either subgroup.
    pub fn null() -> Self {
        Self { lambda: 1.0 / 3.0, s1: SubgroupParams::reference(), s2: SubgroupParams::reference() }
    }

    /// Reference values with a benefit in S1 only (`eta = b2 = -0.5`).
    pub fn alternative() -> Self {
        let mut p = Self::null();
        p.s1 = p.s1.with_effects(-0.5, -0.5);
        p
    }

    /// Subgroup 1 or 2.
    pub fn subgroup(&self, j: u8) -> &SubgroupParams {
        if j == 1 { &self.s1 } else { &self.s2 }
    }

    pub fn map_both(mut self, f: impl Fn(&mut SubgroupParams)) -> Self {
        f(&mut self.s1);
        f(&mut self.s2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Parameter(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        self.s1.validate()?;
        self.s2.validate()
    }
}

/// Everything needed to generate a population besides the random stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: JointModelParams,
    /// Exponential censoring rate per year.
    #[serde(default = "default_censor_rate")]
    pub censor_rate: f64,
    /// Event times beyond this horizon (years) are recorded as no event.
    #[serde(default = "default_admin_cap")]
    pub admin_cap: f64,
    /// Measurements are generated up to this follow-up time (years).
    #[serde(default = "default_max_followup")]
    pub max_followup: f64,
}

fn default_censor_rate() -> f64 {
    CENSOR_RATE_PER_YEAR
}
fn default_admin_cap() -> f64 {
    50.0
}
fn default_max_followup() -> f64 {
    20.0
}

impl Scenario {
    pub fn new(params: JointModelParams) -> Self {
        Self { params, censor_rate: default_censor_rate(), admin_cap: default_admin_cap(), max_followup: default_max_followup() }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.censor_rate > 0.0) || !(self.admin_cap > 0.0) || !(self.max_followup > 0.0) {
            return Err(Error::Parameter("censor rate, administrative cap and follow-up must be positive".into()));
        }
        Ok(())
    }
}
