use std::io::Write;

use super::subject::{visits_by, Subject, SubjectDraws};
use super::Scenario;
use crate::design::{Group, Selection};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Recruited subjects in order of accrual.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    pub subjects: Vec<Subject>,
}

/// One accrual slot: a candidate patient from each subgroup plus the uniforms that
/// decide the subgroup label and arm allocation.
#[derive(Debug, Clone, Copy)]
struct Slot {
    accrual_time: f64,
    label_u: f64,
    arm_u: [f64; 2],
    draws: [SubjectDraws; 2],
}

/// Pre-sampled accrual stream. Realizing the pool under different enrichment
/// decisions reuses the same draws, so datasets agree wherever the decisions agree.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    scenario: Scenario,
    slots: Vec<Slot>,
}

impl CandidatePool {
    /// `n_max` slots with accrual times uniform on `[0, n_max / accrual_rate]`.
    pub fn new(scenario: &Scenario, n_max: usize, accrual_rate: f64, rng: &mut RngStream) -> Result<Self> {
        scenario.validate()?;
        if n_max == 0 || !(accrual_rate > 0.0) {
            return Err(Error::Parameter(format!("need n_max >= 1 and a positive accrual rate, got {n_max}, {accrual_rate}")));
        }
        let span = n_max as f64 / accrual_rate;
        let mut times: Vec<f64> = (0..n_max).map(|_| span * rng.uniform()).collect();
        times.sort_by(f64::total_cmp);
        let slots = times
            .into_iter()
            .map(|accrual_time| {
                let label_u = rng.uniform();
                let arm_u = [rng.uniform(), rng.uniform()];
                let draws = [SubjectDraws::sample(rng), SubjectDraws::sample(rng)];
                Slot { accrual_time, label_u, arm_u, draws }
            })
            .collect();
        Ok(Self { scenario: *scenario, slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Population without enrichment.
    pub fn realize(&self) -> Result<TrialDataset> {
        self.realize_enriched(Selection::F, f64::INFINITY)
    }

    /// Population where slots accrued after `tau1` are restricted to `selection`.
    /// Arms follow permuted blocks of two within each subgroup.
    pub fn realize_enriched(&self, selection: Selection, tau1: f64) -> Result<TrialDataset> {
        let lambda = self.scenario.params.lambda;
        let mut counts = [0usize; 2];
        let mut last_arm = [0u8; 2];
        let mut subjects = Vec::with_capacity(self.slots.len());
        for (i, slot) in self.slots.iter().enumerate() {
            let natural = if slot.label_u < lambda { 1u8 } else { 2u8 };
            let subgroup = if slot.accrual_time <= tau1 {
                natural
            } else {
                match selection {
                    Selection::S1 => 1,
                    Selection::S2 => 2,
                    Selection::F => natural,
                    Selection::Empty => break,
                }
            };
            let g = usize::from(subgroup - 1);
            let arm = if counts[g] % 2 == 0 { u8::from(slot.arm_u[g] < 0.5) } else { 1 - last_arm[g] };
            counts[g] += 1;
            last_arm[g] = arm;
            subjects.push(Subject::realize(i as u32, subgroup, arm, slot.accrual_time, &slot.draws[g], &self.scenario)?);
        }
        Ok(TrialDataset { subjects })
    }
}

/// Unrestricted population of `n_max` subjects.
pub fn simulate_population(scenario: &Scenario, n_max: usize, accrual_rate: f64, rng: &mut RngStream) -> Result<TrialDataset> {
    CandidatePool::new(scenario, n_max, accrual_rate, rng)?.realize()
}

/// Subject state at an analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotEntry {
    /// Index into the dataset's subjects.
    pub index: usize,
    /// Observed time from entry.
    pub time: f64,
    pub status: bool,
    /// Measurements taken by the observed time.
    pub n_obs: usize,
}

/// Data available at an analysis performed at `calendar_time`.
#[derive(Debug, Clone)]
pub struct AnalysisSnapshot<'a> {
    pub dataset: &'a TrialDataset,
    pub calendar_time: f64,
    pub entries: Vec<SnapshotEntry>,
    /// Events in `[S1, S2, F]`.
    pub events: [u64; 3],
    /// The requested number of events was never reached.
    pub shortfall: bool,
}

impl<'a> AnalysisSnapshot<'a> {
    pub fn subject(&self, e: &SnapshotEntry) -> &'a Subject {
        &self.dataset.subjects[e.index]
    }

    /// Entries belonging to `group`.
    pub fn group_entries(&self, group: Group) -> impl Iterator<Item = &SnapshotEntry> + '_ {
        self.entries.iter().filter(move |e| self.dataset.subjects[e.index].in_group(group))
    }

    pub fn events_in(&self, group: Group) -> u64 {
        self.events[group.index()]
    }

    /// Total measurements observed across entries in `group`.
    pub fn visits_in(&self, group: Group) -> u64 {
        self.group_entries(group).map(|e| e.n_obs as u64).sum()
    }

    /// Survival CSV: `subject_id,time,status`.
    pub fn write_survival_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io { path: "<survival csv>".into(), message: e.to_string() };
        w.write_record(["subject_id", "time", "status"]).map_err(io)?;
        for e in &self.entries {
            let s = self.subject(e);
            w.write_record([s.id.to_string(), e.time.to_string(), u8::from(e.status).to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<survival csv>".into(), message: e.to_string() })
    }

    /// Measurement CSV: `subject_id,subgroup,arm,accrual_time,visit_time,value`.
    pub fn write_measurements_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io { path: "<measurement csv>".into(), message: e.to_string() };
        w.write_record(["subject_id", "subgroup", "arm", "accrual_time", "visit_time", "value"]).map_err(io)?;
        for e in &self.entries {
            let s = self.subject(e);
            for (v, x) in s.measurements().take(e.n_obs) {
                w.write_record([
                    s.id.to_string(),
                    s.subgroup.to_string(),
                    s.arm.to_string(),
                    s.accrual_time.to_string(),
                    v.to_string(),
                    x.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: "<measurement csv>".into(), message: e.to_string() })
    }
}

/// Administrative censoring of every accrued subject at `calendar_time`.
pub fn snapshot_at_time(dataset: &TrialDataset, calendar_time: f64) -> AnalysisSnapshot<'_> {
    let mut entries = Vec::new();
    let mut events = [0u64; 3];
    for (index, s) in dataset.subjects.iter().enumerate() {
        if s.accrual_time >= calendar_time {
            continue;
        }
        let follow = calendar_time - s.accrual_time;
        let status = s.has_event() && s.event_time <= follow;
        let time = if status { s.event_time } else { s.censor_time.min(follow) };
        let n_obs = visits_by(time).min(s.values.len());
        if status {
            events[usize::from(s.subgroup - 1)] += 1;
            events[2] += 1;
        }
        entries.push(SnapshotEntry { index, time, status, n_obs });
    }
    AnalysisSnapshot { dataset, calendar_time, entries, events, shortfall: false }
}

/// Snapshot at the calendar time of the `target`-th event in `group`, ties broken
/// by subject id. Falls back to the last event with `shortfall` set.
pub fn snapshot_at_events(dataset: &TrialDataset, group: Group, target: u64) -> AnalysisSnapshot<'_> {
    let mut times: Vec<(f64, u32)> = dataset
        .subjects
        .iter()
        .filter(|s| s.in_group(group))
        .filter_map(|s| s.event_calendar_time().map(|t| (t, s.id)))
        .collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (calendar, shortfall) = match target {
        0 => (0.0, false),
        _ if (target as usize) <= times.len() => (times[target as usize - 1].0, false),
        _ => (times.last().map_or(0.0, |t| t.0), true),
    };
    // Include the triggering event itself.
    let mut snap = snapshot_at_time(dataset, next_up(calendar));
    snap.calendar_time = calendar;
    snap.shortfall = shortfall;
    snap
}

/// Smallest float strictly above `x`, so subjects entering exactly at `x` are excluded
/// while events at `x` count.
fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}
