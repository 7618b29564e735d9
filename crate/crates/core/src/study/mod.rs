//! Monte Carlo operating characteristics: replicated trials over a scenario grid,
//! exact tallies that merge across replicate shards, the strong-control scan and
//! report emission.

mod report;
mod scan;
mod tally;

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{calibrate_m, plan_events, CalibrationSettings, DesignSpec, EventsPlan, MConstants, ThetaConfig};
use crate::error::{Error, Result};
use crate::estimators::{Method, RmstOptions};
use crate::numerics::RngStream;
use crate::simdata::{CandidatePool, JointModelParams, Scenario};
use crate::trial::{run_trial_analytic, run_trial_on_pool, TrialDesign, TrialOutcome};

pub use report::{emit_report, parse_report_csv, write_outcomes_csv, Manifest, ReportFiles};
pub use scan::{fwer_strong_control_scan, ScanReport, ScanRow};
pub use tally::{MeanEstimate, Proportion, Tally};

/// Design constants shared by every scenario of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConstants {
    pub psi: f64,
    pub delta: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DesignConstants {
    fn default() -> Self {
        Self { psi: 0.6, delta: 0.5, lambda: 1.0 / 3.0, alpha: 0.025, beta: 0.1 }
    }
}

impl DesignConstants {
    pub fn spec(&self) -> Result<DesignSpec> {
        DesignSpec::new(self.psi, self.delta, self.lambda, self.alpha, self.beta)
    }
}

/// Events-to-information constants calibrated for the reference alternative with
/// the conditional score.
pub const REFERENCE_M: MConstants = MConstants { m1: 5.45, m2: 5.01, mf: 5.26 };

/// Planned `(d1, d_total)` for the γ × σ (φ2 = 5) and γ × φ2 (σ = 1) grids, chosen
/// per scenario for 60% stage-1 selection of S1 and 90% power with the conditional score.
const TABULATED_EVENTS: [(f64, f64, f64, [(u64, u64); 4]); 7] = [
    (0.0, 5.0, 0.0, [(41, 180), (40, 170), (42, 170), (44, 175)]),
    (0.5, 5.0, 0.0, [(41, 178), (41, 165), (43, 175), (48, 190)]),
    (1.0, 5.0, 0.0, [(41, 170), (42, 180), (49, 215), (62, 271)]),
    (1.5, 5.0, 0.0, [(44, 195), (49, 190), (60, 250), (80, 350)]),
    (1.0, 0.0, 0.0, [(41, 160), (40, 175), (42, 200), (61, 266)]),
    (1.0, 2.5, 0.0, [(41, 165), (42, 178), (50, 195), (69, 302)]),
    (1.0, 7.5, 0.0, [(41, 180), (45, 190), (50, 200), (70, 300)]),
];

/// Tabulated `(d1, d_total)` for `(gamma, sigma, phi2)` on the standard grids.
pub fn tabulated_events(gamma: f64, sigma: f64, phi2: f64) -> Option<(u64, u64)> {
    let col = [0.0, 0.4, 0.8, 1.2].iter().position(|&g| g == gamma)?;
    TABULATED_EVENTS.iter().find(|r| r.0 == sigma && r.1 == phi2).map(|r| r.3[col])
}

/// Planned event counts of one scenario. Missing `m` triggers a fresh calibration;
/// missing event counts are planned from `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DesignInputs {
    pub m: Option<MConstants>,
    pub d1: Option<u64>,
    pub d_total: Option<u64>,
}

impl DesignInputs {
    pub fn fixed(m: MConstants, d1: u64, d_total: u64) -> Self {
        Self { m: Some(m), d1: Some(d1), d_total: Some(d_total) }
    }

    /// Resolves the plan, calibrating `m` on `scenario` when it is not given.
    pub fn plan(&self, spec: &DesignSpec, scenario: &Scenario, rng: &mut RngStream) -> Result<EventsPlan> {
        let m = match self.m {
            Some(m) => m,
            None => calibrate_m(scenario, &CalibrationSettings::default(), rng)?.m,
        };
        match (self.d1, self.d_total) {
            (Some(d1), Some(dt)) => EventsPlan::from_counts(m, d1, dt),
            (None, None) => plan_events(spec, &m),
            _ => Err(Error::Parameter("give both d1 and d_total or neither".into())),
        }
    }
}

/// Treatment effects of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// Benefit in S1 only.
    Alternative,
    /// No benefit anywhere.
    Null,
}

impl Hypothesis {
    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::Alternative => "alternative",
            Hypothesis::Null => "null",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "alternative" => Ok(Hypothesis::Alternative),
            "null" => Ok(Hypothesis::Null),
            _ => Err(Error::Parse(format!("unknown hypothesis {s:?}"))),
        }
    }
}

/// One cell of the scenario grid. Parameters not listed keep their reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub gamma: f64,
    /// Measurement-error standard deviation.
    pub sigma: f64,
    /// Random-slope variance.
    pub phi2: f64,
    pub hypothesis: Hypothesis,
    #[serde(default)]
    pub design: DesignInputs,
}

impl ScenarioSpec {
    pub fn reference(hypothesis: Hypothesis) -> Self {
        Self { gamma: 0.8, sigma: 1.0, phi2: 5.0, hypothesis, design: DesignInputs::default() }
    }

    pub fn label(&self) -> String {
        format!("gamma={}_sigma={}_phi2={}_{}", self.gamma, self.sigma, self.phi2, self.hypothesis.label())
    }

    pub fn params(&self) -> JointModelParams {
        let base = match self.hypothesis {
            Hypothesis::Alternative => JointModelParams::alternative(),
            Hypothesis::Null => JointModelParams::null(),
        };
        let (gamma, sigma2, phi2) = (self.gamma, self.sigma * self.sigma, self.phi2);
        base.map_both(|p| {
            p.gamma = gamma;
            p.sigma2 = sigma2;
            p.phi2 = phi2;
        })
    }

    /// Validated simulation scenario; fails for a non-positive-definite covariance.
    pub fn scenario(&self) -> Result<Scenario> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Parameter(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        let sc = Scenario::new(self.params());
        sc.validate()?;
        Ok(sc)
    }

    /// Standardized effects used for analytic statistics.
    pub fn theta(&self, spec: &DesignSpec) -> ThetaConfig {
        match self.hypothesis {
            Hypothesis::Alternative => spec.theta_alt(),
            Hypothesis::Null => spec.theta_null(),
        }
    }
}

/// Hypotheses `[H01, H02, H0F]` that are true under `params`. A subgroup is null when
/// treatment affects neither the hazard nor the biomarker slope beneficially.
pub fn true_nulls_params(p: &JointModelParams) -> [bool; 3] {
    let null = |s: &crate::simdata::SubgroupParams| s.eta >= 0.0 && s.b2 >= 0.0;
    let (n1, n2) = (null(&p.s1), null(&p.s2));
    [n1, n2, n1 && n2]
}

/// Hypotheses that are true for standardized effects `theta`.
pub fn true_nulls_theta(theta: &ThetaConfig, lambda: f64) -> [bool; 3] {
    [theta.theta1 <= 0.0, theta.theta2 <= 0.0, theta.theta_f(lambda) <= 0.0]
}

/// Full study definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub design: DesignConstants,
    pub scenarios: Vec<ScenarioSpec>,
    pub methods: Vec<Method>,
    pub replicates: u64,
    /// First replicate id; shards cover disjoint ranges.
    pub first_replicate: u64,
    pub base_seed: u64,
    pub n_max: usize,
    /// Patients per year.
    pub accrual_rate: f64,
    /// Draw Z-statistics from their canonical joint law instead of simulating data.
    pub analytic_z: bool,
    pub rmst: RmstOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            design: DesignConstants::default(),
            scenarios: vec![ScenarioSpec::reference(Hypothesis::Alternative)],
            methods: vec![Method::CondScore, Method::Cox],
            replicates: 2000,
            first_replicate: 0,
            base_seed: 1,
            n_max: 600,
            accrual_rate: 300.0,
            analytic_z: false,
            rmst: RmstOptions::default(),
        }
    }
}

impl StudyConfig {
    /// One-parameter-at-a-time grids around the reference scenario: γ and σ series
    /// at φ2 = 5, and the φ2 series at γ = 0.8, σ = 1.
    pub fn figure_grid(hypothesis: Hypothesis, design: DesignInputs) -> Vec<ScenarioSpec> {
        let base = ScenarioSpec { design, ..ScenarioSpec::reference(hypothesis) };
        let mut out = Vec::new();
        let mut push = |s: ScenarioSpec| {
            if !out.contains(&s) {
                out.push(s);
            }
        };
        for gamma in [0.0, 0.4, 0.8, 1.2] {
            push(ScenarioSpec { gamma, ..base });
        }
        for sigma in [0.0, 0.5, 1.0, 1.5] {
            push(ScenarioSpec { sigma, ..base });
        }
        for phi2 in [0.0, 2.5, 5.0, 7.5] {
            push(ScenarioSpec { phi2, ..base });
        }
        out
    }

    /// The same grid as [`StudyConfig::figure_grid`], each scenario planned with its
    /// tabulated event counts. Scenarios without an entry keep `m` only and are planned.
    pub fn tabulated_grid(hypothesis: Hypothesis, m: MConstants) -> Vec<ScenarioSpec> {
        let mut grid = Self::figure_grid(hypothesis, DesignInputs { m: Some(m), d1: None, d_total: None });
        for s in &mut grid {
            if let Some((d1, dt)) = tabulated_events(s.gamma, s.sigma, s.phi2) {
                s.design = DesignInputs::fixed(m, d1, dt);
            }
        }
        grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Parameter("a study needs at least one replicate".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Parameter("a study needs at least one scenario".into()));
        }
        if !self.analytic_z && self.methods.is_empty() {
            return Err(Error::Parameter("a study needs at least one method".into()));
        }
        if self.n_max == 0 || !(self.accrual_rate > 0.0) {
            return Err(Error::Parameter("n_max and accrual_rate must be positive".into()));
        }
        self.design.spec().map(|_| ())
    }

    pub fn replicate_range(&self) -> Range<u64> {
        self.first_replicate..self.first_replicate + self.replicates
    }

    /// Methods analysed per replicate; `None` stands for analytic statistics.
    pub fn arms(&self) -> Vec<Option<Method>> {
        if self.analytic_z {
            vec![None]
        } else {
            self.methods.iter().map(|&m| Some(m)).collect()
        }
    }
}

/// Aggregated results of one scenario and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: ScenarioSpec,
    pub method: Option<Method>,
    pub plan: EventsPlan,
    pub tally: Tally,
}

impl Cell {
    pub fn label(&self) -> String {
        self.scenario.label()
    }

    pub fn method_label(&self) -> &'static str {
        self.method.map_or("analytic", Method::name)
    }
}

/// A scenario left out of the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScenario {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: DesignSpec,
    pub cells: Vec<Cell>,
    pub skipped: Vec<SkippedScenario>,
}

impl StudyReport {
    pub fn cell(&self, scenario: &ScenarioSpec, method: Option<Method>) -> Option<&Cell> {
        self.cells.iter().find(|c| c.scenario.label() == scenario.label() && c.method == method)
    }

    /// Adds the tallies of a report over a disjoint replicate range.
    pub fn merge(&mut self, other: &StudyReport) -> Result<()> {
        let same_layout = self.spec == other.spec
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| {
                a.scenario.label() == b.scenario.label() && a.method == b.method && a.plan == b.plan
            });
        if !same_layout {
            return Err(Error::Parameter("reports cover different designs, scenarios or methods".into()));
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.tally.merge(&b.tally);
        }
        for s in &other.skipped {
            if !self.skipped.contains(s) {
                self.skipped.push(s.clone());
            }
        }
        Ok(())
    }
}

/// A scenario ready to simulate.
#[derive(Debug, Clone)]
struct Prepared {
    spec: ScenarioSpec,
    scenario: Scenario,
    design: TrialDesign,
    true_nulls: [bool; 3],
}

/// Builds each scenario and resolves its plan; failures are recorded as skipped.
/// Calibration streams are keyed by the scenario index so every shard agrees.
fn prepare(config: &StudyConfig, spec: &DesignSpec) -> (Vec<Prepared>, Vec<SkippedScenario>) {
    let mut ready = Vec::new();
    let mut skipped = Vec::new();
    for (i, s) in config.scenarios.iter().enumerate() {
        let built = s.scenario().and_then(|scenario| {
            let mut rng = RngStream::new(config.base_seed, u64::MAX - i as u64);
            let plan = s.design.plan(spec, &scenario, &mut rng)?;
            Ok((scenario, plan))
        });
        match built {
            Ok((scenario, plan)) => {
                let design = TrialDesign { spec: *spec, plan, n_max: config.n_max, accrual_rate: config.accrual_rate };
                let true_nulls = if config.analytic_z {
                    true_nulls_theta(&s.theta(spec), spec.lambda)
                } else {
                    true_nulls_params(&scenario.params)
                };
                ready.push(Prepared { spec: *s, scenario, design, true_nulls });
            }
            Err(e) => skipped.push(SkippedScenario { label: s.label(), reason: e.to_string() }),
        }
    }
    (ready, skipped)
}

/// Outcomes of replicate `r` for every prepared scenario and arm, in cell order.
fn replicate_outcomes(config: &StudyConfig, prepared: &[Prepared], arms: &[Option<Method>], r: u64) -> Vec<TrialOutcome> {
    let mut out = Vec::with_capacity(prepared.len() * arms.len());
    for p in prepared {
        out.extend(trial_outcomes(&p.scenario, &p.design, &p.spec.theta(&p.design.spec), arms, &config.rmst, config.base_seed, r));
    }
    out
}

/// All arms of one replicate on one scenario. Estimating arms share one candidate
/// pool drawn from `RngStream(seed, r)`.
fn trial_outcomes(
    scenario: &Scenario,
    design: &TrialDesign,
    theta: &ThetaConfig,
    arms: &[Option<Method>],
    rmst: &RmstOptions,
    seed: u64,
    r: u64,
) -> Vec<TrialOutcome> {
    let mut rng = RngStream::new(seed, r);
    let pool = if arms.iter().any(Option::is_some) {
        Some(CandidatePool::new(scenario, design.n_max, design.accrual_rate, &mut rng))
    } else {
        None
    };
    arms.iter()
        .map(|arm| match (arm, &pool) {
            (None, _) => run_trial_analytic(design, *theta, &mut RngStream::new(seed, r), r),
            (Some(m), Some(Ok(pool))) => run_trial_on_pool(pool, design, *m, rmst, r),
            (Some(m), Some(Err(e))) => TrialOutcome::invalid(r, Some(*m), e.to_string()),
            (Some(_), None) => unreachable!("pool is drawn whenever an estimating arm is present"),
        })
        .collect()
}

/// Runs every replicate of the configured range across scenarios and methods.
/// Replicate `r` draws from `RngStream(base_seed, r)` in every scenario, and all
/// methods analyse the same data.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let spec = config.design.spec()?;
    let (prepared, skipped) = prepare(config, &spec);
    let arms = config.arms();
    let n_cells = prepared.len() * arms.len();
    let tallies = config
        .replicate_range()
        .into_par_iter()
        .map(|r| {
            let outcomes = replicate_outcomes(config, &prepared, &arms, r);
            let mut t = vec![Tally::default(); n_cells];
            for (i, o) in outcomes.iter().enumerate() {
                t[i].record(o, &prepared[i / arms.len()].true_nulls);
            }
            t
        })
        .reduce(
            || vec![Tally::default(); n_cells],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y);
                }
                a
            },
        );
    let mut cells = Vec::with_capacity(n_cells);
    for (i, p) in prepared.iter().enumerate() {
        for (k, &method) in arms.iter().enumerate() {
            cells.push(Cell { scenario: p.spec, method, plan: p.design.plan, tally: tallies[i * arms.len() + k].clone() });
        }
    }
    Ok(StudyReport { spec, cells, skipped })
}

/// Per-trial outcomes for one scenario, ordered by replicate then arm.
pub fn simulate_outcomes(
    scenario: &Scenario,
    design: &TrialDesign,
    theta: &ThetaConfig,
    arms: &[Option<Method>],
    rmst: &RmstOptions,
    seed: u64,
    replicates: Range<u64>,
) -> Vec<TrialOutcome> {
    let per: Vec<Vec<TrialOutcome>> =
        replicates.into_par_iter().map(|r| trial_outcomes(scenario, design, theta, arms, rmst, seed, r)).collect();
    per.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::Decision;

    fn analytic_config(hypothesis: Hypothesis, n: u64) -> StudyConfig {
        StudyConfig {
            scenarios: vec![ScenarioSpec { design: DesignInputs::fixed(REFERENCE_M, 50, 234), ..ScenarioSpec::reference(hypothesis) }],
            replicates: n,
            analytic_z: true,
            ..StudyConfig::default()
        }
    }

    #[test]
    fn grid_covers_each_series_once() {
        let g = StudyConfig::figure_grid(Hypothesis::Alternative, DesignInputs::default());
        assert_eq!(g.len(), 10);
        let bad: Vec<_> = g.iter().filter(|s| s.scenario().is_err()).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].phi2, 0.0);
    }

    #[test]
    fn tabulated_grid_plans_every_cell() {
        let g = StudyConfig::tabulated_grid(Hypothesis::Alternative, REFERENCE_M);
        assert_eq!(g.len(), 10);
        assert!(g.iter().all(|s| s.design.d1.is_some() && s.design.d_total.is_some()));
        let reference = g.iter().find(|s| s.gamma == 0.8 && s.sigma == 1.0 && s.phi2 == 5.0).unwrap();
        assert_eq!((reference.design.d1, reference.design.d_total), (Some(49), Some(215)));
        assert_eq!(tabulated_events(1.2, 1.5, 5.0), Some((80, 350)));
        assert_eq!(tabulated_events(0.8, 2.0, 5.0), None);
    }

    #[test]
    fn true_null_sets() {
        assert_eq!(true_nulls_params(&JointModelParams::alternative()), [false, true, false]);
        assert_eq!(true_nulls_params(&JointModelParams::null()), [true, true, true]);
        assert_eq!(true_nulls_theta(&ThetaConfig::new(-0.2, 0.5), 1.0 / 3.0), [true, false, false]);
        assert_eq!(true_nulls_theta(&ThetaConfig::new(-2.0, 0.5), 1.0 / 3.0), [true, false, true]);
    }

    #[test]
    fn single_replicate_maps_to_indicators() {
        let cfg = analytic_config(Hypothesis::Alternative, 1);
        let rep = run_study(&cfg).unwrap();
        let t = &rep.cells[0].tally;
        let p = prepare(&cfg, &rep.spec).0;
        let o = &replicate_outcomes(&cfg, &p, &cfg.arms(), 0)[0];
        assert_eq!(t.replicates, 1);
        assert_eq!(t.invalid, u64::from(o.decision == Decision::Invalid));
        assert_eq!(t.selected.iter().sum::<u64>(), 1);
        assert_eq!(t.selected[o.selection.index()], 1);
        let rejected = o.rejected().map_or(0, |_| 1);
        assert_eq!(t.rejected.iter().sum::<u64>(), rejected);
        assert!(matches!(t.power().p, 0.0 | 1.0));
    }

    #[test]
    fn shards_merge_exactly() {
        let whole = run_study(&analytic_config(Hypothesis::Null, 600)).unwrap();
        let mut a = run_study(&analytic_config(Hypothesis::Null, 250)).unwrap();
        let b = run_study(&StudyConfig { first_replicate: 250, ..analytic_config(Hypothesis::Null, 350) }).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, whole);
    }

    #[test]
    fn methods_share_data_and_repeat() {
        let cfg = StudyConfig {
            scenarios: vec![ScenarioSpec { design: DesignInputs::fixed(REFERENCE_M, 50, 234), ..ScenarioSpec::reference(Hypothesis::Alternative) }],
            methods: vec![Method::Cox, Method::Cox],
            replicates: 4,
            ..StudyConfig::default()
        };
        let a = run_study(&cfg).unwrap();
        assert_eq!(a.cells[0].tally, a.cells[1].tally);
        assert_eq!(a, run_study(&cfg).unwrap());
    }

    #[test]
    fn infeasible_scenario_is_skipped() {
        let mut cfg = analytic_config(Hypothesis::Null, 3);
        cfg.scenarios.push(ScenarioSpec { phi2: 0.0, ..cfg.scenarios[0] });
        let rep = run_study(&cfg).unwrap();
        assert_eq!(rep.cells.len(), 1);
        assert_eq!(rep.skipped.len(), 1);
        assert!(rep.skipped[0].reason.contains("positive semi-definite"));
    }
}
