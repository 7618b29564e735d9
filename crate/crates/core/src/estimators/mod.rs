//! Analysis engines mapping a snapshot of one population to an effect estimate,
//! its information and a Z-statistic on the benefit scale.

mod cond_score;
mod cox;
mod joint;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::Group;
use crate::error::{Error, Result};

pub use cond_score::{conditional_score, fit_conditional_score, ols_history, pooled_sigma2, CondScoreData, HistoryFit};
pub use cox::{fit_cox, fit_cox_tvc, fit_cox_tvc_fixed_gamma, partial_likelihood};
pub use joint::{
    fit_joint_model, fit_rmst, joint_log_likelihood, JointFit, rmst_difference, JointLikelihoodParams, JointQuadrature, RmstOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CondScore,
    Cox,
    CoxTvc,
    Rmst,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CondScore, Method::Cox, Method::CoxTvc, Method::Rmst];

    pub fn name(self) -> &'static str {
        match self {
            Method::CondScore => "cond_score",
            Method::Cox => "cox",
            Method::CoxTvc => "cox_tvc",
            Method::Rmst => "rmst",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}; expected one of cond_score, cox, cox_tvc, rmst")))
    }
}

/// Solver diagnostics attached to an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
}

/// Effect estimate, information and Z-statistic for one method, group and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub method: Method,
    pub group: Group,
    pub k: usize,
    /// Benefit scale: positive means the treatment helps.
    pub theta_hat: f64,
    /// Inverse variance of `theta_hat`.
    pub info: f64,
    pub z: f64,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl AnalysisResult {
    pub fn new(method: Method, group: Group, k: usize, theta_hat: f64, info: f64, converged: bool, diagnostics: Diagnostics) -> Self {
        let ok = converged && info > 0.0 && info.is_finite() && theta_hat.is_finite();
        Self { method, group, k, theta_hat, info, z: theta_hat * info.max(0.0).sqrt(), converged: ok, diagnostics }
    }

    pub const CSV_HEADER: [&'static str; 7] = ["method", "group", "k", "theta_hat", "info", "z", "converged"];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.method.name().to_string(),
            self.group.label().to_string(),
            self.k.to_string(),
            self.theta_hat.to_string(),
            self.info.to_string(),
            self.z.to_string(),
            u8::from(self.converged).to_string(),
        ]
    }
}

/// Writes analysis rows with the documented header.
pub fn write_results_csv<W: Write>(results: &[AnalysisResult], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: "<analysis csv>".into(), message: e.to_string() };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AnalysisResult::CSV_HEADER).map_err(io)?;
    for r in results {
        w.write_record(r.csv_record()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<analysis csv>".into(), message: e.to_string() })
}

/// Runs `method` on `group` of `snapshot`.
pub fn analyze(method: Method, snapshot: &crate::simdata::AnalysisSnapshot<'_>, group: Group, k: usize, rmst: &RmstOptions) -> Result<AnalysisResult> {
    match method {
        Method::CondScore => fit_conditional_score(snapshot, group, k),
        Method::Cox => fit_cox(snapshot, group, k),
        Method::CoxTvc => fit_cox_tvc(snapshot, group, k),
        Method::Rmst => fit_rmst(snapshot, group, k, rmst),
    }
}
