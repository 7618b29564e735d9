use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::boundaries::{find_imax, planned_boundaries, Boundaries};
use super::DesignSpec;
use crate::error::{Error, Result};

/// Events-per-information constants `m_j = d_j / I_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MConstants {
    pub m1: f64,
    pub m2: f64,
    pub mf: f64,
}

impl MConstants {
    pub fn new(m1: f64, m2: f64, mf: f64) -> Result<Self> {
        if !(m1 > 0.0 && m2 > 0.0 && mf > 0.0) || !(m1.is_finite() && m2.is_finite() && mf.is_finite()) {
            return Err(Error::Parameter(format!("m constants must be positive, got ({m1}, {m2}, {mf})")));
        }
        Ok(Self { m1, m2, mf })
    }

    /// Constants implied by `m1` through the prevalence ratios `m2 = (1 - lambda) m1 / lambda`
    /// and `mF = m1 / lambda`.
    pub fn from_ratio(m1: f64, lambda: f64) -> Result<Self> {
        Self::new(m1, (1.0 - lambda) * m1 / lambda, m1 / lambda)
    }
}

/// Planned event counts and maximum information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventsPlan {
    pub m: MConstants,
    pub d1_stage1: u64,
    pub d_total: u64,
    pub i_max: f64,
}

impl EventsPlan {
    /// Plan from fixed event counts, with `I_max = d_total / mF`.
    pub fn from_counts(m: MConstants, d1_stage1: u64, d_total: u64) -> Result<Self> {
        if d1_stage1 == 0 || d_total <= d1_stage1 {
            return Err(Error::Parameter(format!(
                "planned events must satisfy 0 < d1 < d_total, got ({d1_stage1}, {d_total})"
            )));
        }
        Ok(Self { m, d1_stage1, d_total, i_max: d_total as f64 / m.mf })
    }

    /// Expected stage-1 events in S2 when S1 reaches `d1_stage1`.
    pub fn expected_d2_stage1(&self, lambda: f64) -> f64 {
        (1.0 - lambda) * self.d1_stage1 as f64 / lambda
    }

    /// Expected stage-1 events in the full population.
    pub fn expected_df_stage1(&self, lambda: f64) -> f64 {
        self.d1_stage1 as f64 / lambda
    }
}

/// `d1 = ceil(I1_req m1)`, `I_max` from the `a2 = b2` condition, `d_total = ceil(I_max mF)`.
pub fn plan_events(spec: &DesignSpec, m: &MConstants) -> Result<EventsPlan> {
    let d1 = (spec.info1_req * m.m1).ceil();
    let i_max = find_imax(spec, m, d1)?;
    Ok(EventsPlan { m: *m, d1_stage1: d1 as u64, d_total: (i_max * m.mf).ceil() as u64, i_max })
}

/// Stage-2 information predicted from stage 1 through `I = d / m` with `m` fixed:
/// `I^(2) = I^(1) d_total / d^(1)`.
pub fn predict_info(info_j1: f64, d_j1: f64, d_total: f64) -> Result<f64> {
    if !(d_j1 > 0.0) {
        return Err(Error::Prediction(format!("no stage-1 events to predict from (d = {d_j1})")));
    }
    Ok(info_j1 * d_total / d_j1)
}

/// Flat key-value design report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignReport {
    pub spec: DesignSpec,
    pub plan: EventsPlan,
    pub boundaries: Boundaries,
}

impl DesignReport {
    /// Planned boundaries for `plan`; the raw futility bound `a2` is kept so the
    /// `a2 = b2` condition can be inspected.
    pub fn new(spec: DesignSpec, plan: EventsPlan) -> Result<Self> {
        let boundaries = planned_boundaries(&spec, &plan.m, plan.d1_stage1 as f64, plan.i_max)?;
        Ok(Self { spec, plan, boundaries })
    }

    pub fn to_kv(&self) -> String {
        let s = &self.spec;
        let p = &self.plan;
        let b = &self.boundaries;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("psi", s.psi.to_string());
        put("delta", s.delta.to_string());
        put("lambda", s.lambda.to_string());
        put("alpha", s.alpha.to_string());
        put("beta", s.beta.to_string());
        put("zeta", s.zeta.to_string());
        put("info1_req", s.info1_req.to_string());
        put("m1", p.m.m1.to_string());
        put("m2", p.m.m2.to_string());
        put("mF", p.m.mf.to_string());
        put("d1_stage1", p.d1_stage1.to_string());
        put("d_total", p.d_total.to_string());
        put("i_max", p.i_max.to_string());
        put("a1", b.a1.to_string());
        put("b1", b.b1.to_string());
        put("a2", b.a2.to_string());
        put("b2", b.b2.to_string());
        put("alpha_spend", format!("{},{}", b.spend.alpha1, b.spend.alpha2));
        put("beta_spend", format!("{},{}", b.spend.beta1, b.spend.beta2));
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            map.get(k).map(String::as_str).ok_or_else(|| Error::Parse(format!("missing key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?.parse::<u64>().map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let pair = |k: &str| -> Result<(f64, f64)> {
            let v = get(k)?;
            let (a, b) = v.split_once(',').ok_or_else(|| Error::Parse(format!("{k}: expected two values")))?;
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")));
            Ok((p(a)?, p(b)?))
        };
        let spec = DesignSpec {
            psi: num("psi")?,
            delta: num("delta")?,
            lambda: num("lambda")?,
            alpha: num("alpha")?,
            beta: num("beta")?,
            zeta: num("zeta")?,
            info1_req: num("info1_req")?,
        };
        let plan = EventsPlan {
            m: MConstants::new(num("m1")?, num("m2")?, num("mF")?)?,
            d1_stage1: int("d1_stage1")?,
            d_total: int("d_total")?,
            i_max: num("i_max")?,
        };
        let (alpha1, alpha2) = pair("alpha_spend")?;
        let (beta1, beta2) = pair("beta_spend")?;
        let boundaries = Boundaries {
            a1: num("a1")?,
            b1: num("b1")?,
            a2: num("a2")?,
            b2: num("b2")?,
            spend: super::Spend { alpha1, alpha2, beta1, beta2 },
        };
        Ok(Self { spec, plan, boundaries })
    }
}
