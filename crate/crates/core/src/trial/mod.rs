//! The two-stage enrichment trial: stage-1 analysis at a fixed number of S1 events,
//! threshold selection, error-spending tests, enrichment and the final analysis.

use serde::{Deserialize, Serialize};

use crate::design::{
    info_full, predict_info, solve_b2, solve_stage1_boundaries, spend, theta_full, DesignSpec, EventsPlan, Group,
    InfoState, Selection, ThetaConfig,
};
use crate::error::{Error, Result};
use crate::estimators::{analyze, Method, RmstOptions};
use crate::numerics::RngStream;
use crate::simdata::{snapshot_at_events, AnalysisSnapshot, CandidatePool, Scenario};

/// Threshold selection: every subgroup whose statistic exceeds `zeta`, with both
/// subgroups meaning the full population.
pub fn select(z1: f64, z2: f64, zeta: f64) -> Selection {
    match (z1 > zeta, z2 > zeta) {
        (true, true) => Selection::F,
        (true, false) => Selection::S1,
        (false, true) => Selection::S2,
        (false, false) => Selection::Empty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageDecision {
    Futility,
    Efficacy,
    Continue,
}

/// `z <= a` stops for futility, `z > b` for efficacy.
pub fn decide(z: f64, a: f64, b: f64) -> Result<StageDecision> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(Error::Boundary { a, b });
    }
    Ok(if z <= a {
        StageDecision::Futility
    } else if z > b {
        StageDecision::Efficacy
    } else {
        StageDecision::Continue
    })
}

/// Terminal state of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectSelected,
    Accept,
    FutilityStopStage1,
    EfficacyStopStage1,
    /// An analysis failed; the replicate is excluded from operating characteristics.
    Invalid,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::RejectSelected => "reject_selected",
            Decision::Accept => "accept",
            Decision::FutilityStopStage1 => "futility_stop_stage1",
            Decision::EfficacyStopStage1 => "efficacy_stop_stage1",
            Decision::Invalid => "invalid",
        }
    }
}

/// Design quantities needed to run a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialDesign {
    pub spec: DesignSpec,
    pub plan: EventsPlan,
    pub n_max: usize,
    /// Patients per year.
    pub accrual_rate: f64,
}

/// Record of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub replicate: u64,
    /// `None` for analytic Z-statistics.
    pub method: Option<Method>,
    pub selection: Selection,
    /// 1 or 2; 0 for invalid replicates that failed before stage 1 completed.
    pub stage_stopped: u8,
    pub decision: Decision,
    /// Stage-1 statistics for `[S1, S2, F]`.
    pub z1: [f64; 3],
    pub info1: [f64; 3],
    /// Final statistic of the selected population.
    pub z2: f64,
    pub info2: [f64; 3],
    pub events1: [u64; 3],
    /// Events observed when the trial ended.
    pub events_total: u64,
    pub calendar: [f64; 2],
    /// `[a1, b1, a2, b2]`, NaN where not computed.
    pub boundaries: [f64; 4],
    pub enrolled: usize,
    pub visits: u64,
    pub shortfall: bool,
    pub invalid_reason: Option<String>,
}

impl TrialOutcome {
    fn new(replicate: u64, method: Option<Method>) -> Self {
        Self {
            replicate,
            method,
            selection: Selection::Empty,
            stage_stopped: 0,
            decision: Decision::Invalid,
            z1: [f64::NAN; 3],
            info1: [f64::NAN; 3],
            z2: f64::NAN,
            info2: [f64::NAN; 3],
            events1: [0; 3],
            events_total: 0,
            calendar: [f64::NAN; 2],
            boundaries: [f64::NAN; 4],
            enrolled: 0,
            visits: 0,
            shortfall: false,
            invalid_reason: None,
        }
    }

    /// Record of a replicate whose data could not be generated.
    pub fn invalid(replicate: u64, method: Option<Method>, reason: String) -> Self {
        let mut out = Self::new(replicate, method);
        out.invalid_reason = Some(reason);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.decision != Decision::Invalid
    }

    /// Hypothesis rejected by the trial, if any.
    pub fn rejected(&self) -> Option<Group> {
        match self.decision {
            Decision::RejectSelected | Decision::EfficacyStopStage1 => self.selection.group(),
            _ => None,
        }
    }

    pub fn method_label(&self) -> &'static str {
        self.method.map_or("analytic", Method::name)
    }

    pub const CSV_HEADER: [&'static str; 20] = [
        "replicate", "method", "selection", "stage", "decision", "z1_1", "z2_1", "zF_1", "z_w_2", "info1_1", "info2_1",
        "infoF_1", "d1_1", "d2_1", "dF_1", "d_total", "tau1", "tau2", "enrolled", "visits",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.replicate.to_string(),
            self.method_label().to_string(),
            self.selection.label().to_string(),
            self.stage_stopped.to_string(),
            self.decision.label().to_string(),
        ];
        r.extend(self.z1.iter().map(f64::to_string));
        r.push(self.z2.to_string());
        r.extend(self.info1.iter().map(f64::to_string));
        r.extend(self.events1.iter().map(u64::to_string));
        r.push(self.events_total.to_string());
        r.extend(self.calendar.iter().map(f64::to_string));
        r.push(self.enrolled.to_string());
        r.push(self.visits.to_string());
        r
    }
}

/// Effect estimates and information of the two subgroups (NaN when not analysed).
#[derive(Debug, Clone, Copy)]
struct Estimates {
    theta: [f64; 2],
    info: [f64; 2],
    /// Events `[S1, S2, F]` available at the analysis.
    events: [u64; 3],
    calendar: f64,
    enrolled: usize,
    visits: u64,
    shortfall: bool,
}

/// Source of the statistics at each analysis.
trait Analyst {
    fn stage1(&mut self) -> Result<Estimates>;
    fn stage2(&mut self, selection: Selection, tau1: f64) -> Result<Estimates>;
}

struct Estimated<'a> {
    pool: &'a CandidatePool,
    method: Method,
    rmst: &'a RmstOptions,
    plan: EventsPlan,
    stage1: Option<Estimates>,
}

fn fit_pair(method: Method, snap: &AnalysisSnapshot<'_>, groups: &[Group], k: usize, rmst: &RmstOptions) -> Result<([f64; 2], [f64; 2])> {
    let mut theta = [f64::NAN; 2];
    let mut info = [f64::NAN; 2];
    for &g in groups {
        let r = analyze(method, snap, g, k, rmst)?;
        if !r.converged {
            return Err(Error::NonIdentifiable(format!("{method} did not converge for {} at analysis {k}", g.label())));
        }
        theta[g.index()] = r.theta_hat;
        info[g.index()] = r.info;
    }
    Ok((theta, info))
}

impl Analyst for Estimated<'_> {
    fn stage1(&mut self) -> Result<Estimates> {
        let ds = self.pool.realize()?;
        let snap = snapshot_at_events(&ds, Group::S1, self.plan.d1_stage1);
        let (theta, info) = fit_pair(self.method, &snap, &[Group::S1, Group::S2], 1, self.rmst)?;
        let est = Estimates {
            theta,
            info,
            events: snap.events,
            calendar: snap.calendar_time,
            enrolled: snap.entries.len(),
            visits: snap.visits_in(Group::F),
            shortfall: snap.shortfall,
        };
        self.stage1 = Some(est);
        Ok(est)
    }

    fn stage2(&mut self, selection: Selection, tau1: f64) -> Result<Estimates> {
        let w = selection.group().ok_or_else(|| Error::Parameter("no population selected".into()))?;
        let s1 = self.stage1.ok_or_else(|| Error::Parameter("stage 1 has not run".into()))?;
        let ds = self.pool.realize_enriched(selection, tau1)?;
        let snap = snapshot_at_events(&ds, w, self.plan.d_total);
        let groups: &[Group] = match w {
            Group::F => &[Group::S1, Group::S2],
            Group::S1 => &[Group::S1],
            Group::S2 => &[Group::S2],
        };
        let (theta, info) = fit_pair(self.method, &snap, groups, 2, self.rmst)?;
        // The complement subgroup contributes only what it had at stage 1.
        let (events, visits) = match w {
            Group::F => (snap.events[2], snap.visits_in(Group::F)),
            Group::S1 => (snap.events[0] + s1.events[1], snap.visits_in(Group::S1) + s1_visits(&ds, tau1, Group::S2)),
            Group::S2 => (snap.events[1] + s1.events[0], snap.visits_in(Group::S2) + s1_visits(&ds, tau1, Group::S1)),
        };
        Ok(Estimates {
            theta,
            info,
            events: [snap.events[0], snap.events[1], events],
            calendar: snap.calendar_time,
            enrolled: snap.entries.len(),
            visits,
            shortfall: snap.shortfall,
        })
    }
}

fn s1_visits(ds: &crate::simdata::TrialDataset, tau1: f64, group: Group) -> u64 {
    crate::simdata::snapshot_at_time(ds, tau1).visits_in(group)
}

/// Statistics drawn directly from their canonical joint distribution at the planned
/// information levels, with independent subgroup increments.
struct Analytic<'a> {
    theta: ThetaConfig,
    plan: EventsPlan,
    lambda: f64,
    rng: &'a mut RngStream,
    stage1: Option<Estimates>,
}

impl Analytic<'_> {
    fn planned_stage1(&self) -> ([f64; 3], [f64; 2]) {
        let d1 = self.plan.d1_stage1 as f64;
        let d2 = (1.0 - self.lambda) * d1 / self.lambda;
        ([d1, d2, d1 + d2], [d1 / self.plan.m.m1, d2 / self.plan.m.m2])
    }
}

impl Analyst for Analytic<'_> {
    fn stage1(&mut self) -> Result<Estimates> {
        let (d, info) = self.planned_stage1();
        let th = [self.theta.theta1, self.theta.theta2];
        let theta = [0, 1].map(|j| th[j] + self.rng.normal() / info[j].sqrt());
        let est = Estimates {
            theta,
            info,
            events: d.map(|v| v.round() as u64),
            calendar: f64::NAN,
            enrolled: 0,
            visits: 0,
            shortfall: false,
        };
        self.stage1 = Some(est);
        Ok(est)
    }

    fn stage2(&mut self, selection: Selection, _tau1: f64) -> Result<Estimates> {
        let s1 = self.stage1.ok_or_else(|| Error::Parameter("stage 1 has not run".into()))?;
        let (d, _) = self.planned_stage1();
        let dt = self.plan.d_total as f64;
        let scale = match selection {
            Selection::F => [dt / d[2]; 2],
            Selection::S1 => [dt / d[0], f64::NAN],
            Selection::S2 => [f64::NAN, dt / d[1]],
            Selection::Empty => return Err(Error::Parameter("no population selected".into())),
        };
        let th = [self.theta.theta1, self.theta.theta2];
        let mut theta = [f64::NAN; 2];
        let mut info = [f64::NAN; 2];
        for j in 0..2 {
            if scale[j].is_nan() {
                continue;
            }
            let i2 = s1.info[j] * scale[j];
            let inc = i2 - s1.info[j];
            let x = th[j] + self.rng.normal() / inc.sqrt();
            theta[j] = (s1.info[j] * s1.theta[j] + inc * x) / i2;
            info[j] = i2;
        }
        Ok(Estimates { theta, info, events: [0, 0, self.plan.d_total], calendar: f64::NAN, enrolled: 0, visits: 0, shortfall: false })
    }
}

fn run_with(analyst: &mut dyn Analyst, design: &TrialDesign, out: &mut TrialOutcome) -> Result<()> {
    let spec = &design.spec;
    let lambda = spec.lambda;
    let s1 = analyst.stage1()?;
    let info1 = [s1.info[0], s1.info[1], info_full(lambda, s1.info[0], s1.info[1])];
    let theta_f = theta_full(lambda, s1.theta[0], s1.theta[1]);
    let z1 = [s1.theta[0] * info1[0].sqrt(), s1.theta[1] * info1[1].sqrt(), theta_f * info1[2].sqrt()];
    out.z1 = z1;
    out.info1 = info1;
    out.events1 = s1.events;
    out.calendar[0] = s1.calendar;
    out.enrolled = s1.enrolled;
    out.visits = s1.visits;
    out.events_total = s1.events[2];
    out.shortfall = s1.shortfall;
    out.stage_stopped = 1;
    let selection = select(z1[0], z1[1], spec.zeta);
    out.selection = selection;
    let Some(w) = selection.group() else {
        out.decision = Decision::FutilityStopStage1;
        return Ok(());
    };

    let state = InfoState::stage1(lambda, info1[0], info1[1])?;
    let i_max = design.plan.i_max;
    let sp1 = spend(spec.alpha, spec.beta, [info1[2], info1[2]], i_max);
    let (mut a1, b1) = solve_stage1_boundaries(sp1.alpha1, sp1.beta1, spec, &state)?;
    a1 = a1.min(b1);
    out.boundaries[0] = a1;
    out.boundaries[1] = b1;
    match decide(z1[w.index()], a1, b1)? {
        StageDecision::Futility => {
            out.decision = Decision::FutilityStopStage1;
            return Ok(());
        }
        StageDecision::Efficacy => {
            out.decision = Decision::EfficacyStopStage1;
            return Ok(());
        }
        StageDecision::Continue => {}
    }

    let s2 = analyst.stage2(selection, s1.calendar)?;
    out.stage_stopped = 2;
    out.calendar[1] = s2.calendar;
    out.events_total = s2.events[2];
    out.enrolled = s2.enrolled;
    out.visits = s2.visits;
    out.shortfall |= s2.shortfall;
    let dt = design.plan.d_total as f64;
    let d1 = s1.events.map(|v| v as f64);
    let predicted = |g: usize| predict_info(info1[g], d1[g], dt);
    let info2 = match w {
        Group::S1 => [s2.info[0], predicted(1)?, predicted(2)?],
        Group::S2 => [predicted(0)?, s2.info[1], predicted(2)?],
        Group::F => [s2.info[0], s2.info[1], info_full(lambda, s2.info[0], s2.info[1])],
    };
    out.info2 = info2;
    let theta2 = match w {
        Group::S1 => s2.theta[0],
        Group::S2 => s2.theta[1],
        Group::F => theta_full(lambda, s2.theta[0], s2.theta[1]),
    };
    let z2 = theta2 * info2[w.index()].sqrt();
    out.z2 = z2;
    let state = state.with_stage2(info2)?;
    let sp = spend(spec.alpha, spec.beta, [info1[2], info2[2]], i_max);
    let b2 = solve_b2(sp.alpha2, spec, &state, a1, b1)?;
    out.boundaries[2] = b2;
    out.boundaries[3] = b2;
    out.decision = match decide(z2, b2, b2)? {
        StageDecision::Efficacy => Decision::RejectSelected,
        _ => Decision::Accept,
    };
    Ok(())
}

fn finish(mut out: TrialOutcome, result: Result<()>) -> TrialOutcome {
    if let Err(e) = result {
        out.decision = Decision::Invalid;
        out.invalid_reason = Some(e.to_string());
    }
    out
}

/// Runs one trial on a pre-drawn candidate pool, so several methods can share data.
pub fn run_trial_on_pool(pool: &CandidatePool, design: &TrialDesign, method: Method, rmst: &RmstOptions, replicate: u64) -> TrialOutcome {
    let mut analyst = Estimated { pool, method, rmst, plan: design.plan, stage1: None };
    let mut out = TrialOutcome::new(replicate, Some(method));
    let r = run_with(&mut analyst, design, &mut out);
    finish(out, r)
}

/// Runs one trial: draws the candidate pool from `rng` and analyses it with `method`.
pub fn run_trial(scenario: &Scenario, design: &TrialDesign, method: Method, rng: &mut RngStream) -> Result<TrialOutcome> {
    let pool = CandidatePool::new(scenario, design.n_max, design.accrual_rate, rng)?;
    Ok(run_trial_on_pool(&pool, design, method, &RmstOptions::default(), rng.stream_id()))
}

/// Runs the decision logic on statistics drawn from their canonical joint
/// distribution with true effects `theta` at the planned information levels.
pub fn run_trial_analytic(design: &TrialDesign, theta: ThetaConfig, rng: &mut RngStream, replicate: u64) -> TrialOutcome {
    let mut analyst = Analytic { theta, plan: design.plan, lambda: design.spec.lambda, rng, stage1: None };
    let mut out = TrialOutcome::new(replicate, None);
    let r = run_with(&mut analyst, design, &mut out);
    finish(out, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{plan_events, MConstants};
    use crate::simdata::JointModelParams;

    fn design() -> TrialDesign {
        let spec = DesignSpec::new(0.6, 0.5, 1.0 / 3.0, 0.025, 0.1).unwrap();
        let m = MConstants::new(5.4, 5.4, 5.4).unwrap();
        TrialDesign { spec, plan: plan_events(&spec, &m).unwrap(), n_max: 400, accrual_rate: 200.0 }
    }

    #[test]
    fn selection_rule() {
        let z = 0.754;
        assert_eq!(select(z + 0.1, z - 0.1, z), Selection::S1);
        assert_eq!(select(z + 0.1, z + 0.1, z), Selection::F);
        assert_eq!(select(z - 0.1, z + 0.1, z), Selection::S2);
        assert_eq!(select(z, z, z), Selection::Empty);
    }

    #[test]
    fn decision_conventions() {
        assert_eq!(decide(0.5, 0.5, 2.0).unwrap(), StageDecision::Futility);
        assert_eq!(decide(2.0, 0.5, 2.0).unwrap(), StageDecision::Continue);
        assert_eq!(decide(2.0 + 1e-12, 0.5, 2.0).unwrap(), StageDecision::Efficacy);
        for z in [-1.0, 1.9, 2.0, 2.1] {
            assert_ne!(decide(z, 2.0, 2.0).unwrap(), StageDecision::Continue);
        }
        assert!(matches!(decide(0.0, 2.0, 1.0), Err(Error::Boundary { .. })));
    }

    #[test]
    fn deterministic_replay() {
        let d = design();
        let sc = Scenario::new(JointModelParams::alternative());
        let a = run_trial(&sc, &d, Method::Cox, &mut RngStream::new(4, 9)).unwrap();
        let b = run_trial(&sc, &d, Method::Cox, &mut RngStream::new(4, 9)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.is_valid(), "{a:?}");
    }

    #[test]
    fn analytic_outcomes_are_consistent() {
        let d = design();
        let mut rng = RngStream::new(5, 0);
        for r in 0..200 {
            let o = run_trial_analytic(&d, d.spec.theta_alt(), &mut rng, r);
            assert!(o.is_valid(), "{o:?}");
            if o.selection == Selection::Empty {
                assert_eq!(o.decision, Decision::FutilityStopStage1);
            }
            if o.stage_stopped == 2 {
                assert!(o.info2[o.selection.group().unwrap().index()] > o.info1[o.selection.group().unwrap().index()]);
            }
        }
    }
}
