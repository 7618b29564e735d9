use serde::{Deserialize, Serialize};

use super::hazard::sample_event_time;
use super::Scenario;
use crate::error::Result;
use crate::numerics::RngStream;

/// Visits every two weeks up to three months, monthly afterwards.
const BIWEEKLY_VISITS: usize = 7;

/// Time of the `s`-th scheduled visit (`s = 0` is the baseline visit).
#[inline]
pub fn visit_time(s: usize) -> f64 {
    if s < BIWEEKLY_VISITS {
        2.0 * s as f64 / 52.0
    } else {
        (3 + s - BIWEEKLY_VISITS + 1) as f64 / 12.0
    }
}

/// Number of scheduled visits at or before `t`.
pub fn visits_by(t: f64) -> usize {
    if t < 0.0 {
        return 0;
    }
    let mut n = if t >= visit_time(BIWEEKLY_VISITS - 1) {
        BIWEEKLY_VISITS + ((t * 12.0).floor() as usize).saturating_sub(3)
    } else {
        ((t * 26.0).floor() as usize + 1).min(BIWEEKLY_VISITS)
    };
    // Guard against rounding at exact visit times.
    while n > 0 && visit_time(n - 1) > t {
        n -= 1;
    }
    while visit_time(n) <= t {
        n += 1;
    }
    n
}

/// Visit times at or before `horizon`.
pub fn measurement_schedule(horizon: f64) -> Vec<f64> {
    (0..visits_by(horizon)).map(visit_time).collect()
}

/// Primitive random draws for one subject, independent of arm and subgroup, so that
/// the same draws can be realized under different allocations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectDraws {
    pub z0: f64,
    pub z1: f64,
    /// Unit exponential driving the event time.
    pub e_event: f64,
    /// Unit exponential driving the censoring time.
    pub e_censor: f64,
    /// Seed of the measurement-error stream.
    pub noise_seed: u64,
}

impl SubjectDraws {
    pub fn sample(rng: &mut RngStream) -> Self {
        let z0 = rng.normal();
        let z1 = rng.normal();
        let e_event = -rng.uniform().ln();
        let e_censor = -rng.uniform().ln();
        let noise_seed = (rng.uniform() * (1u64 << 53) as f64) as u64;
        Self { z0, z1, e_event, e_censor, noise_seed }
    }
}

/// One simulated patient. Measurement `s` is taken at [`visit_time`]`(s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: u32,
    pub subgroup: u8,
    pub arm: u8,
    pub accrual_time: f64,
    pub b0: f64,
    pub b1: f64,
    /// Years from entry; `+inf` when no event occurs before the administrative cap.
    pub event_time: f64,
    pub censor_time: f64,
    pub values: Vec<f64>,
}

impl Subject {
    /// Realizes a subject from primitive draws.
    pub fn realize(id: u32, subgroup: u8, arm: u8, accrual_time: f64, draws: &SubjectDraws, scenario: &Scenario) -> Result<Self> {
        let p = scenario.params.subgroup(subgroup);
        let [l11, l21, l22] = p.cholesky()?;
        let b0 = p.mu0 + l11 * draws.z0;
        let b1 = p.mu1 + l21 * draws.z0 + l22 * draws.z1;
        let slope = b1 + p.b2 * f64::from(arm);
        let event_time = sample_event_time(draws.e_event, b0, slope, arm, p, scenario.admin_cap);
        let censor_time = draws.e_censor / scenario.censor_rate;
        let last = event_time.min(censor_time).min(scenario.max_followup);
        let n = visits_by(last);
        let sd = p.sigma2.sqrt();
        let mut noise = RngStream::new(draws.noise_seed, u64::from(id));
        let values = (0..n)
            .map(|s| {
                let v = visit_time(s);
                b0 + slope * v + sd * noise.normal()
            })
            .collect();
        Ok(Self { id, subgroup, arm, accrual_time, b0, b1, event_time, censor_time, values })
    }

    /// Whether the event is observed before independent censoring.
    pub fn has_event(&self) -> bool {
        self.event_time.is_finite() && self.event_time <= self.censor_time
    }

    /// Calendar time of the event, if it is observed before censoring.
    pub fn event_calendar_time(&self) -> Option<f64> {
        self.has_event().then(|| self.accrual_time + self.event_time)
    }

    /// `(visit time, value)` pairs.
    pub fn measurements(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(s, &w)| (visit_time(s), w))
    }

    pub fn in_group(&self, group: crate::design::Group) -> bool {
        use crate::design::Group;
        match group {
            Group::S1 => self.subgroup == 1,
            Group::S2 => self.subgroup == 2,
            Group::F => true,
        }
    }
}

/// Samples one subject directly from `rng`.
pub fn sample_subject(scenario: &Scenario, id: u32, subgroup: u8, arm: u8, accrual_time: f64, rng: &mut RngStream) -> Result<Subject> {
    let draws = SubjectDraws::sample(rng);
    Subject::realize(id, subgroup, arm, accrual_time, &draws, scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{JointModelParams, SubgroupParams};

    #[test]
    fn schedule_shape() {
        let s = measurement_schedule(0.25);
        assert_eq!(s.len(), 7);
        assert!((s[1] - 0.038_46).abs() < 1e-5);
        assert!((s[6] - 0.2308).abs() < 1e-4);
        assert_eq!(measurement_schedule(0.0), vec![0.0]);
        let long = measurement_schedule(3.0);
        for w in long[7..].windows(2) {
            assert!((w[1] - w[0] - 1.0 / 12.0).abs() < 1e-12);
        }
        assert!((long[7] - 4.0 / 12.0).abs() < 1e-15);
        assert!(long.windows(2).all(|w| w[0] < w[1]));
        for &t in &[0.0, 0.01, 0.0384615, 2.0 / 52.0, 0.26, 1.0 / 3.0, 0.5, 2.999, 10.0] {
            let n = visits_by(t);
            assert!(visit_time(n - 1) <= t && visit_time(n) > t, "t={t}");
        }
        assert_eq!(visits_by(-0.1), 0);
    }

    #[test]
    fn noiseless_measurements_on_line() {
        let mut params = JointModelParams::alternative();
        params.s1.sigma2 = 0.0;
        let sc = Scenario::new(params);
        let mut rng = RngStream::new(5, 1);
        for id in 0..20 {
            let s = sample_subject(&sc, id, 1, (id % 2) as u8, 0.0, &mut rng).unwrap();
            let slope = s.b1 + params.s1.b2 * f64::from(s.arm);
            for (v, w) in s.measurements() {
                assert!((w - (s.b0 + slope * v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_psd_rejected() {
        let mut params = JointModelParams::null();
        params.s2 = SubgroupParams { phi2: 0.0, ..SubgroupParams::reference() };
        let sc = Scenario::new(params);
        let mut rng = RngStream::new(5, 1);
        assert!(sample_subject(&sc, 0, 2, 0, 0.0, &mut rng).is_err());
    }
}
