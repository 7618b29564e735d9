//! Strong familywise error control checked over a grid of effect configurations
//! with analytic Z-statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tally::Proportion;
use super::true_nulls_theta;
use crate::design::ThetaConfig;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::trial::{run_trial_analytic, TrialDesign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub theta: ThetaConfig,
    /// `[H01, H02, H0F]` true under `theta`.
    pub true_nulls: [bool; 3],
    pub rejections: u64,
    pub invalid: u64,
    pub rate: Proportion,
    /// `rate <= global-null rate + 2 SE(rate)`.
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    /// Rate of rejecting any hypothesis under the global null.
    pub global_null: Proportion,
    pub rows: Vec<ScanRow>,
}

impl ScanReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.within_bound)
    }

    /// CSV of the scan with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta1,theta2,true_h01,true_h02,true_h0F,replicates,invalid,rejections,rate,se,null_rate,null_se,within_bound\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.theta.theta1,
                r.theta.theta2,
                r.true_nulls[0],
                r.true_nulls[1],
                r.true_nulls[2],
                r.rate.n + r.invalid,
                r.invalid,
                r.rejections,
                r.rate.p,
                r.rate.se,
                self.global_null.p,
                self.global_null.se,
                r.within_bound
            ));
        }
        out
    }
}

/// `(rejections of a true null, invalid)` over the replicates.
fn count(design: &TrialDesign, theta: ThetaConfig, replicates: u64, seed: u64) -> (u64, u64) {
    let nulls = true_nulls_theta(&theta, design.spec.lambda);
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let o = run_trial_analytic(design, theta, &mut RngStream::new(seed, r), r);
            if !o.is_valid() {
                return (0, 1);
            }
            (u64::from(o.rejected().is_some_and(|g| nulls[g.index()])), 0)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Estimates P(reject at least one true null) for each configuration and compares
/// it with the global-null rate. Replicate `r` uses `RngStream(seed, r)` for every
/// configuration, matching analytic studies with the same seed.
pub fn fwer_strong_control_scan(design: &TrialDesign, grid: &[ThetaConfig], replicates: u64, seed: u64) -> Result<ScanReport> {
    if replicates == 0 {
        return Err(Error::Parameter("the scan needs at least one replicate".into()));
    }
    let lambda = design.spec.lambda;
    if let Some(bad) = grid.iter().find(|t| !true_nulls_theta(t, lambda).iter().any(|&b| b)) {
        return Err(Error::Parameter(format!("configuration ({}, {}) has no true null hypothesis", bad.theta1, bad.theta2)));
    }
    let (k0, inv0) = count(design, ThetaConfig::new(0.0, 0.0), replicates, seed);
    let global_null = Proportion::new(k0, replicates - inv0);
    let rows = grid
        .iter()
        .map(|&theta| {
            let (k, invalid) = count(design, theta, replicates, seed);
            let rate = Proportion::new(k, replicates - invalid);
            ScanRow {
                theta,
                true_nulls: true_nulls_theta(&theta, lambda),
                rejections: k,
                invalid,
                rate,
                within_bound: rate.p <= global_null.p + 2.0 * rate.se,
            }
        })
        .collect();
    Ok(ScanReport { global_null, rows })
}
