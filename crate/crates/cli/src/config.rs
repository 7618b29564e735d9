//! TOML run configuration. Every section rejects unknown keys; only `design.psi`
//! and `design.delta` are required.

use serde::Deserialize;

use enrichment::design::{CalibrationSettings, DesignSpec, MConstants, ThetaConfig};
use enrichment::estimators::{Method, RmstOptions};
use enrichment::study::{DesignConstants, DesignInputs, Hypothesis, ScenarioSpec};
use enrichment::Result;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub design: DesignSection,
    #[serde(default)]
    pub trial: TrialSection,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub calibration: CalibrationSettings,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub rmst: RmstOptions,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub psi: f64,
    pub delta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_lambda() -> f64 {
    1.0 / 3.0
}
fn default_alpha() -> f64 {
    0.025
}
fn default_beta() -> f64 {
    0.1
}

impl DesignSection {
    pub fn constants(&self) -> DesignConstants {
        DesignConstants { psi: self.psi, delta: self.delta, lambda: self.lambda, alpha: self.alpha, beta: self.beta }
    }

    pub fn spec(&self) -> Result<DesignSpec> {
        self.constants().spec()
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub n_max: usize,
    /// Patients per year.
    pub accrual_rate: f64,
}

impl Default for TrialSection {
    fn default() -> Self {
        Self { n_max: 600, accrual_rate: 300.0 }
    }
}

/// Planned events: a design report written by `calibrate`, or inline inputs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// Path to a design report; takes precedence over the inline keys.
    pub report: Option<String>,
    pub m: Option<MConstants>,
    pub d1: Option<u64>,
    pub d_total: Option<u64>,
}

impl PlanSection {
    pub fn inputs(&self) -> DesignInputs {
        DesignInputs { m: self.m, d1: self.d1, d_total: self.d_total }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub replicates: u64,
    pub first_replicate: u64,
    pub methods: Vec<String>,
    pub analytic_z: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { replicates: 100, first_replicate: 0, methods: vec!["cond_score".into()], analytic_z: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Explicit scenarios; when empty the grid is built from `grid`.
    pub scenarios: Vec<ScenarioSpec>,
    /// `figure` for the one-parameter-at-a-time grid around the reference scenario, or
    /// `tabulated` for the same grid with per-scenario tabulated event counts.
    pub grid: Option<String>,
    pub hypotheses: Vec<Hypothesis>,
    pub methods: Vec<String>,
    pub replicates: u64,
    pub first_replicate: u64,
    pub analytic_z: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            scenarios: Vec::new(),
            grid: None,
            hypotheses: vec![Hypothesis::Alternative],
            methods: vec!["cond_score".into(), "cox".into()],
            replicates: 2000,
            first_replicate: 0,
            analytic_z: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// `(theta1, theta2)` pairs on the benefit scale.
    pub grid: Vec<[f64; 2]>,
    pub replicates: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        let grid = [
            [0.0, 0.0],
            [0.0, 0.25],
            [0.0, 0.5],
            [0.0, 1.0],
            [0.25, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [-0.5, 0.5],
            [0.5, -0.5],
            [-0.5, -0.5],
            [-2.0, 1.0],
            [-3.0, -3.0],
        ];
        Self { grid: grid.to_vec(), replicates: 10_000 }
    }
}

impl ScanSection {
    pub fn thetas(&self) -> Vec<ThetaConfig> {
        self.grid.iter().map(|t| ThetaConfig::new(t[0], t[1])).collect()
    }
}

/// Parses a method list; `all` expands to every engine.
pub fn parse_methods<S: AsRef<str>>(items: &[S]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for item in items {
        for part in item.as_ref().split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if part == "all" {
                out.extend(Method::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
    }
    Ok(out)
}

pub fn scenario_or_reference(s: &Option<ScenarioSpec>) -> ScenarioSpec {
    s.unwrap_or_else(|| ScenarioSpec::reference(Hypothesis::Alternative))
}
