//! Integer tallies of trial outcomes. Every field is a count or a fixed-point sum,
//! so merging is exact and independent of order.

use serde::{Deserialize, Serialize};

use crate::trial::{Decision, TrialOutcome};

/// Calendar times are accumulated in units of 1e-6 years.
pub const TIME_SCALE: f64 = 1e6;

/// A Monte Carlo proportion with its standard error `sqrt(p (1 - p) / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub p: f64,
    pub se: f64,
    pub n: u64,
}

impl Proportion {
    pub fn new(count: u64, n: u64) -> Self {
        if n == 0 {
            return Self { p: f64::NAN, se: f64::NAN, n };
        }
        let p = count as f64 / n as f64;
        Self { p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
}

impl MeanEstimate {
    fn from_sums(n: u64, sum: f64, sum_sq: f64) -> Self {
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
        Self { mean, se: (var / nf).sqrt() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub replicates: u64,
    pub invalid: u64,
    /// Valid trials by selection `[S1, S2, F, none]`.
    pub selected: [u64; 4],
    /// Valid trials rejecting `[H01, H02, H0F]`.
    pub rejected: [u64; 3],
    /// Valid trials rejecting at least one true null hypothesis.
    pub true_null_rejections: u64,
    pub efficacy_stage1: u64,
    pub futility_stage1: u64,
    /// Valid trials that ran out of patients before an analysis trigger.
    pub shortfall: u64,
    pub events: u64,
    pub events_sq: u128,
    /// Valid trials with an observed calendar stop time.
    pub timed: u64,
    pub time: u64,
    pub time_sq: u128,
    pub visits: u64,
    pub visits_sq: u128,
    pub enrolled: u64,
    pub enrolled_sq: u128,
    pub visits_enrolled: u128,
}

impl Tally {
    /// Adds one trial; `true_nulls` flags `[H01, H02, H0F]` as true.
    pub fn record(&mut self, o: &TrialOutcome, true_nulls: &[bool; 3]) {
        self.replicates += 1;
        if o.decision == Decision::Invalid {
            self.invalid += 1;
            return;
        }
        self.selected[o.selection.index()] += 1;
        if let Some(g) = o.rejected() {
            self.rejected[g.index()] += 1;
            if true_nulls[g.index()] {
                self.true_null_rejections += 1;
            }
        }
        match o.decision {
            Decision::EfficacyStopStage1 => self.efficacy_stage1 += 1,
            Decision::FutilityStopStage1 => self.futility_stage1 += 1,
            _ => {}
        }
        self.shortfall += u64::from(o.shortfall);
        self.events += o.events_total;
        self.events_sq += u128::from(o.events_total).pow(2);
        let stop = if o.stage_stopped == 2 { o.calendar[1] } else { o.calendar[0] };
        if stop.is_finite() {
            let t = (stop * TIME_SCALE).round() as u64;
            self.timed += 1;
            self.time += t;
            self.time_sq += u128::from(t).pow(2);
        }
        let (v, e) = (o.visits, o.enrolled as u64);
        self.visits += v;
        self.visits_sq += u128::from(v).pow(2);
        self.enrolled += e;
        self.enrolled_sq += u128::from(e).pow(2);
        self.visits_enrolled += u128::from(v) * u128::from(e);
    }

    pub fn merge(&mut self, other: &Tally) {
        self.replicates += other.replicates;
        self.invalid += other.invalid;
        for i in 0..4 {
            self.selected[i] += other.selected[i];
        }
        for i in 0..3 {
            self.rejected[i] += other.rejected[i];
        }
        self.true_null_rejections += other.true_null_rejections;
        self.efficacy_stage1 += other.efficacy_stage1;
        self.futility_stage1 += other.futility_stage1;
        self.shortfall += other.shortfall;
        self.events += other.events;
        self.events_sq += other.events_sq;
        self.timed += other.timed;
        self.time += other.time;
        self.time_sq += other.time_sq;
        self.visits += other.visits;
        self.visits_sq += other.visits_sq;
        self.enrolled += other.enrolled;
        self.enrolled_sq += other.enrolled_sq;
        self.visits_enrolled += other.visits_enrolled;
    }

    pub fn valid(&self) -> u64 {
        self.replicates - self.invalid
    }

    /// P(select S1 and reject H01) among valid trials.
    pub fn power(&self) -> Proportion {
        Proportion::new(self.rejected[0], self.valid())
    }

    /// P(reject H01 | S1 selected).
    pub fn conditional_power(&self) -> Proportion {
        Proportion::new(self.rejected[0], self.selected[0])
    }

    /// Rate of trials rejecting at least one true null.
    pub fn fwer(&self) -> Proportion {
        Proportion::new(self.true_null_rejections, self.valid())
    }

    pub fn selection(&self, index: usize) -> Proportion {
        Proportion::new(self.selected[index], self.valid())
    }

    pub fn invalid_rate(&self) -> Proportion {
        Proportion::new(self.invalid, self.replicates)
    }

    pub fn shortfall_rate(&self) -> Proportion {
        Proportion::new(self.shortfall, self.valid())
    }

    pub fn mean_events(&self) -> MeanEstimate {
        MeanEstimate::from_sums(self.valid(), self.events as f64, self.events_sq as f64)
    }

    /// Mean calendar time (years) of the last analysis performed.
    pub fn mean_stop_time(&self) -> MeanEstimate {
        let s = MeanEstimate::from_sums(self.timed, self.time as f64, self.time_sq as f64);
        MeanEstimate { mean: s.mean / TIME_SCALE, se: s.se / TIME_SCALE }
    }

    /// Clinic visits per enrolled patient as a ratio of totals, with a delta-method
    /// standard error over trials.
    pub fn visits_per_patient(&self) -> MeanEstimate {
        let n = self.valid();
        if n < 2 || self.enrolled == 0 {
            return MeanEstimate { mean: f64::NAN, se: f64::NAN };
        }
        let nf = n as f64;
        let (v, e) = (self.visits as f64 / nf, self.enrolled as f64 / nf);
        let r = v / e;
        let cov = |sxy: f64, mx: f64, my: f64| (sxy - nf * mx * my) / (nf - 1.0);
        let svv = cov(self.visits_sq as f64, v, v);
        let see = cov(self.enrolled_sq as f64, e, e);
        let sve = cov(self.visits_enrolled as f64, v, e);
        let var = ((svv - 2.0 * r * sve + r * r * see) / (e * e * nf)).max(0.0);
        MeanEstimate { mean: r, se: var.sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn proportion_se() {
        let p = Proportion::new(25, 100);
        assert_eq!(p.p, 0.25);
        assert!((p.se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert!(Proportion::new(0, 0).p.is_nan());
    }

    fn arbitrary_tally() -> impl Strategy<Value = Tally> {
        (0u64..1000, 0u64..1000, proptest::array::uniform4(0u64..500), 0u64..10_000, 0u64..10_000).prop_map(
            |(r, inv, sel, ev, t)| Tally {
                replicates: r + inv,
                invalid: inv,
                selected: sel,
                events: ev,
                events_sq: u128::from(ev) * 3,
                time: t,
                timed: r,
                ..Tally::default()
            },
        )
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in arbitrary_tally(), b in arbitrary_tally(), c in arbitrary_tally()) {
            let mut ab = a.clone();
            ab.merge(&b);
            let mut ba = b.clone();
            ba.merge(&a);
            prop_assert_eq!(&ab, &ba);
            let mut ab_c = ab.clone();
            ab_c.merge(&c);
            let mut bc = b.clone();
            bc.merge(&c);
            let mut a_bc = a.clone();
            a_bc.merge(&bc);
            prop_assert_eq!(ab_c, a_bc);
        }

        #[test]
        fn proportions_in_unit_interval(k in 0u64..100, extra in 0u64..100) {
            let p = Proportion::new(k, k + extra + 1);
            prop_assert!((0.0..=1.0).contains(&p.p));
            prop_assert!(p.se >= 0.0 && p.se <= 0.5);
        }
    }
}
