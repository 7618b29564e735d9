//! Design-stage computations on Z-statistics and information: threshold
//! calibration, selection laws, error spending, boundaries and events planning.

mod boundaries;
mod calibrate;
mod densities;
mod plan;
mod threshold;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boundaries::{
    find_imax, planned_boundaries, solve_a2, solve_b2, solve_stage1_boundaries, solve_stage2_boundaries, spend,
    stage2_tail, Boundaries, Side, Spend,
};
pub use calibrate::{calibrate_m, CalibrationPoint, CalibrationSettings, MCalibration, MFit};
pub use densities::{joint_density, joint_density_full, joint_density_subgroup, selection_probabilities, SelectionProbabilities};
pub use plan::{plan_events, predict_info, DesignReport, EventsPlan, MConstants};
pub use threshold::calibrate_threshold;

/// Number of analyses.
pub const K: usize = 2;

/// Analysis populations: the two subgroups and the full population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    S1,
    S2,
    F,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::S1, Group::S2, Group::F];

    pub fn index(self) -> usize {
        match self {
            Group::S1 => 0,
            Group::S2 => 1,
            Group::F => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::S1 => "S1",
            Group::S2 => "S2",
            Group::F => "F",
        }
    }
}

/// Outcome of the threshold selection rule at the interim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Selection {
    S1,
    S2,
    F,
    Empty,
}

impl Selection {
    pub const ALL: [Selection; 4] = [Selection::S1, Selection::S2, Selection::F, Selection::Empty];

    pub fn group(self) -> Option<Group> {
        match self {
            Selection::S1 => Some(Group::S1),
            Selection::S2 => Some(Group::S2),
            Selection::F => Some(Group::F),
            Selection::Empty => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Selection::S1 => 0,
            Selection::S2 => 1,
            Selection::F => 2,
            Selection::Empty => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Selection::S1 => "S1",
            Selection::S2 => "S2",
            Selection::F => "F",
            Selection::Empty => "none",
        }
    }
}

/// Design constants. `zeta` and `info1_req` come from [`calibrate_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub psi: f64,
    pub delta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    pub info1_req: f64,
}

impl DesignSpec {
    /// Validates the inputs and calibrates the threshold and required information.
    pub fn new(psi: f64, delta: f64, lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Parameter(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Parameter(format!("alpha and beta must lie in (0, 1), got {alpha}, {beta}")));
        }
        let (zeta, info1_req) = calibrate_threshold(psi, delta)?;
        if !(info1_req > 0.0) {
            return Err(Error::Calibration(format!("psi = {psi} gives no positive required information")));
        }
        Ok(Self { psi, delta, lambda, alpha, beta, zeta, info1_req })
    }

    /// Alternative used for power: benefit `delta` in S1, none in S2.
    pub fn theta_alt(&self) -> ThetaConfig {
        ThetaConfig::new(self.delta, 0.0)
    }

    /// Global null.
    pub fn theta_null(&self) -> ThetaConfig {
        ThetaConfig::new(0.0, 0.0)
    }

    /// Full-population information implied by subgroup informations.
    pub fn info_f(&self, i1: f64, i2: f64) -> f64 {
        info_full(self.lambda, i1, i2)
    }
}

/// Standardized effects on the benefit scale (positive means benefit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaConfig {
    pub theta1: f64,
    pub theta2: f64,
}

impl ThetaConfig {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }

    pub fn theta_f(&self, lambda: f64) -> f64 {
        lambda * self.theta1 + (1.0 - lambda) * self.theta2
    }

    pub fn get(&self, group: Group, lambda: f64) -> f64 {
        match group {
            Group::S1 => self.theta1,
            Group::S2 => self.theta2,
            Group::F => self.theta_f(lambda),
        }
    }
}

/// `I_F = (lambda^2 / I_1 + (1 - lambda)^2 / I_2)^-1`.
pub fn info_full(lambda: f64, i1: f64, i2: f64) -> f64 {
    1.0 / (lambda * lambda / i1 + (1.0 - lambda) * (1.0 - lambda) / i2)
}

/// Combines subgroup estimates into the full-population estimate.
pub fn theta_full(lambda: f64, theta1: f64, theta2: f64) -> f64 {
    lambda * theta1 + (1.0 - lambda) * theta2
}

/// Information and event counts per group (`[S1, S2, F]`) and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoState {
    pub info: [[f64; 3]; 2],
    pub events: [[f64; 3]; 2],
    pub observed: [[bool; 3]; 2],
}

impl InfoState {
    /// Stage-1 state from the two subgroup informations; the full population follows
    /// from the combination formula. Stage-2 entries start as NaN.
    pub fn stage1(lambda: f64, i1: f64, i2: f64) -> Result<Self> {
        if !(i1 > 0.0 && i2 > 0.0) || !i1.is_finite() || !i2.is_finite() {
            return Err(Error::Parameter(format!("stage-1 information must be positive, got {i1}, {i2}")));
        }
        let nan = [f64::NAN; 3];
        Ok(Self {
            info: [[i1, i2, info_full(lambda, i1, i2)], nan],
            events: [nan, nan],
            observed: [[true; 3], [false; 3]],
        })
    }

    pub fn with_stage2(mut self, info2: [f64; 3]) -> Result<Self> {
        for g in 0..3 {
            if !(info2[g] > self.info[0][g]) {
                return Err(Error::Ordering { stage1: self.info[0][g], stage2: info2[g] });
            }
        }
        self.info[1] = info2;
        Ok(self)
    }

    pub fn get(&self, k: usize, group: Group) -> f64 {
        self.info[k][group.index()]
    }

    pub fn has_stage2(&self) -> bool {
        self.info[1].iter().all(|v| v.is_finite())
    }
}
