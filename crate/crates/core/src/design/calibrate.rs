//! Events-to-information constants from a large simulated calibration dataset.

use serde::{Deserialize, Serialize};

use super::{Group, MConstants};
use crate::error::{Error, Result};
use crate::estimators::{analyze, Method, RmstOptions};
use crate::numerics::RngStream;
use crate::simdata::{simulate_population, snapshot_at_events, Scenario};

/// Settings of the calibration loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub n_patients: usize,
    /// Patients per year.
    pub accrual_rate: f64,
    /// Events between consecutive snapshots.
    pub stride: u64,
    pub min_events: u64,
    pub max_events: u64,
    pub method: Method,
    pub rmst: RmstOptions,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_patients: 5000,
            accrual_rate: 200.0,
            stride: 5,
            min_events: 20,
            max_events: 300,
            method: Method::CondScore,
            rmst: RmstOptions::default(),
        }
    }
}

/// One point of the events-on-information regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub events: u64,
    pub info: f64,
}

/// Through-origin fit `d = m I` for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MFit {
    pub group: Group,
    pub m: f64,
    /// Uncentered coefficient of determination of the no-intercept fit.
    pub r_squared: f64,
    pub points: Vec<CalibrationPoint>,
    /// Snapshots whose analysis failed or did not converge.
    pub dropped: usize,
}

impl MFit {
    pub fn from_points(group: Group, points: Vec<CalibrationPoint>, dropped: usize) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Calibration(format!("{} usable snapshots for {}, need at least 2", points.len(), group.label())));
        }
        let sxy: f64 = points.iter().map(|p| p.info * p.events as f64).sum();
        let sxx: f64 = points.iter().map(|p| p.info * p.info).sum();
        let syy: f64 = points.iter().map(|p| (p.events as f64).powi(2)).sum();
        let m = sxy / sxx;
        let rss: f64 = points.iter().map(|p| (p.events as f64 - m * p.info).powi(2)).sum();
        Ok(Self { group, m, r_squared: 1.0 - rss / syy, points, dropped })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCalibration {
    pub m: MConstants,
    /// Fits for `[S1, S2, F]`.
    pub fits: Vec<MFit>,
}

/// Simulates one calibration dataset, censors everyone at every `stride`-th event
/// in each group, computes the information with the chosen method and regresses
/// events on information through the origin.
pub fn calibrate_m(scenario: &Scenario, settings: &CalibrationSettings, rng: &mut RngStream) -> Result<MCalibration> {
    if settings.stride == 0 || settings.max_events < settings.min_events {
        return Err(Error::Parameter("calibration snapshots need stride > 0 and max_events >= min_events".into()));
    }
    let ds = simulate_population(scenario, settings.n_patients, settings.accrual_rate, rng)?;
    let mut fits = Vec::with_capacity(3);
    for group in Group::ALL {
        let mut points = Vec::new();
        let mut dropped = 0;
        let mut d = settings.min_events.max(settings.stride);
        while d <= settings.max_events {
            let snap = snapshot_at_events(&ds, group, d);
            if snap.shortfall {
                break;
            }
            match analyze(settings.method, &snap, group, 1, &settings.rmst) {
                Ok(r) if r.converged => points.push(CalibrationPoint { events: d, info: r.info }),
                _ => dropped += 1,
            }
            d += settings.stride;
        }
        fits.push(MFit::from_points(group, points, dropped)?);
    }
    let m = MConstants::new(fits[0].m, fits[1].m, fits[2].m)?;
    Ok(MCalibration { m, fits })
}
