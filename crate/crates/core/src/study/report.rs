//! Report files: a cell-level CSV that parses back into the report, long-format
//! plot data and a plain-text summary of the design and power per scenario.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::tally::{MeanEstimate, Proportion, Tally};
use super::{Cell, DesignInputs, Hypothesis, ScenarioSpec, SkippedScenario, StudyReport};
use crate::design::{DesignSpec, EventsPlan, MConstants};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::trial::TrialOutcome;

/// Run provenance written as the first comment line of every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

impl Manifest {
    pub fn line(&self) -> String {
        format!("# seed={} config_sha256={} version={}", self.seed, self.config_hash, self.version)
    }

    /// Reads the manifest from the first line of an emitted file.
    pub fn parse(text: &str) -> Result<Self> {
        let line = text.lines().next().unwrap_or("");
        let rest = line.strip_prefix("# ").ok_or_else(|| Error::Parse("missing manifest line".into()))?;
        let mut fields = std::collections::BTreeMap::new();
        for kv in rest.split_whitespace() {
            if let Some((k, v)) = kv.split_once('=') {
                fields.insert(k, v);
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Parse(format!("manifest lacks {k}")));
        Ok(Self {
            seed: get("seed")?.parse().map_err(|e| Error::Parse(format!("manifest seed: {e}")))?,
            config_hash: get("config_sha256")?.to_string(),
            version: get("version")?.to_string(),
        })
    }
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub cells: PathBuf,
    pub plot_data: PathBuf,
    pub summary: PathBuf,
}

const RAW: [&str; 40] = [
    "scenario", "gamma", "sigma", "phi2", "hypothesis", "method", "in_m1", "in_m2", "in_mF", "in_d1", "in_d_total", "m1",
    "m2", "mF", "d1", "d_total", "i_max", "replicates", "invalid", "sel_S1", "sel_S2", "sel_F", "sel_none", "rej_H01",
    "rej_H02", "rej_H0F", "true_null_rej", "efficacy_stage1", "futility_stage1", "shortfall", "events", "events_sq",
    "timed", "time_us", "time_us_sq", "visits", "visits_sq", "enrolled", "enrolled_sq", "visits_enrolled",
];

const DERIVED: [&str; 22] = [
    "power", "power_se", "cond_power", "cond_power_se", "fwer", "fwer_se", "p_S1", "p_S1_se", "p_S2", "p_S2_se", "p_F",
    "p_F_se", "p_none", "p_none_se", "invalid_rate", "invalid_se", "mean_events", "mean_events_se", "mean_stop_time",
    "mean_stop_time_se", "visits_per_patient", "visits_per_patient_se",
];

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn cell_record(c: &Cell) -> Vec<String> {
    let s = &c.scenario;
    let t = &c.tally;
    let inp = &s.design;
    let mut r = vec![
        s.label(),
        s.gamma.to_string(),
        s.sigma.to_string(),
        s.phi2.to_string(),
        s.hypothesis.label().to_string(),
        c.method_label().to_string(),
        opt(inp.m.map(|m| m.m1)),
        opt(inp.m.map(|m| m.m2)),
        opt(inp.m.map(|m| m.mf)),
        opt(inp.d1),
        opt(inp.d_total),
        c.plan.m.m1.to_string(),
        c.plan.m.m2.to_string(),
        c.plan.m.mf.to_string(),
        c.plan.d1_stage1.to_string(),
        c.plan.d_total.to_string(),
        c.plan.i_max.to_string(),
    ];
    let ints: [u128; 23] = [
        t.replicates.into(),
        t.invalid.into(),
        t.selected[0].into(),
        t.selected[1].into(),
        t.selected[2].into(),
        t.selected[3].into(),
        t.rejected[0].into(),
        t.rejected[1].into(),
        t.rejected[2].into(),
        t.true_null_rejections.into(),
        t.efficacy_stage1.into(),
        t.futility_stage1.into(),
        t.shortfall.into(),
        t.events.into(),
        t.events_sq,
        t.timed.into(),
        t.time.into(),
        t.time_sq,
        t.visits.into(),
        t.visits_sq,
        t.enrolled.into(),
        t.enrolled_sq,
        t.visits_enrolled,
    ];
    r.extend(ints.iter().map(u128::to_string));
    let props = [t.power(), t.conditional_power(), t.fwer(), t.selection(0), t.selection(1), t.selection(2), t.selection(3), t.invalid_rate()];
    for p in props {
        r.push(p.p.to_string());
        r.push(p.se.to_string());
    }
    for m in [t.mean_events(), t.mean_stop_time(), t.visits_per_patient()] {
        r.push(m.mean.to_string());
        r.push(m.se.to_string());
    }
    r
}

fn write_comment_lines(out: &mut String, report: &StudyReport, manifest: &Manifest) {
    let s = &report.spec;
    let _ = writeln!(out, "{}", manifest.line());
    let _ = writeln!(
        out,
        "# design psi={} delta={} lambda={} alpha={} beta={} zeta={} info1_req={}",
        s.psi, s.delta, s.lambda, s.alpha, s.beta, s.zeta, s.info1_req
    );
    for sk in &report.skipped {
        let _ = writeln!(out, "# skipped {}: {}", sk.label, sk.reason.replace('\n', " "));
    }
}

/// The cell-level CSV as a string.
pub fn cells_csv(report: &StudyReport, manifest: &Manifest) -> Result<String> {
    let mut out = String::new();
    write_comment_lines(&mut out, report, manifest);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let header: Vec<&str> = RAW.iter().chain(DERIVED.iter()).copied().collect();
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for c in &report.cells {
        w.write_record(cell_record(c)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(out)
}

fn parse_design_line(line: &str) -> Result<DesignSpec> {
    let mut vals = std::collections::BTreeMap::new();
    for kv in line.split_whitespace() {
        if let Some((k, v)) = kv.split_once('=') {
            vals.insert(k, v.parse::<f64>().map_err(|e| Error::Parse(format!("design {k}: {e}")))?);
        }
    }
    let get = |k: &str| vals.get(k).copied().ok_or_else(|| Error::Parse(format!("design line lacks {k}")));
    Ok(DesignSpec {
        psi: get("psi")?,
        delta: get("delta")?,
        lambda: get("lambda")?,
        alpha: get("alpha")?,
        beta: get("beta")?,
        zeta: get("zeta")?,
        info1_req: get("info1_req")?,
    })
}

/// Parses a cell-level CSV written by [`emit_report`] back into the report.
pub fn parse_report_csv(text: &str) -> Result<StudyReport> {
    let mut spec = None;
    let mut skipped = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(rest) = line.strip_prefix("# design ") {
            spec = Some(parse_design_line(rest)?);
        } else if let Some(rest) = line.strip_prefix("# skipped ") {
            let (label, reason) = rest.split_once(": ").ok_or_else(|| Error::Parse("malformed skipped line".into()))?;
            skipped.push(SkippedScenario { label: label.to_string(), reason: reason.to_string() });
        }
    }
    let spec = spec.ok_or_else(|| Error::Parse("missing design comment line".into()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("missing column {name}")));
    let idx: Vec<usize> = RAW.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let ctx = |i: usize, e: &dyn std::fmt::Display| Error::Parse(format!("row {}, {}: {e}", line + 1, RAW[i]));
        let f = |i: usize| field(i).parse::<f64>().map_err(|e| ctx(i, &e));
        let u = |i: usize| field(i).parse::<u128>().map_err(|e| ctx(i, &e));
        let u64v = |i: usize| -> Result<u64> { u64::try_from(u(i)?).map_err(|e| ctx(i, &e)) };
        let of = |i: usize| -> Result<Option<f64>> { if field(i).is_empty() { Ok(None) } else { f(i).map(Some) } };
        let ou = |i: usize| -> Result<Option<u64>> { if field(i).is_empty() { Ok(None) } else { u64v(i).map(Some) } };
        let method = match field(5) {
            "analytic" => None,
            m => Some(m.parse::<Method>()?),
        };
        let m_in = match (of(6)?, of(7)?, of(8)?) {
            (Some(a), Some(b), Some(c)) => Some(MConstants::new(a, b, c)?),
            (None, None, None) => None,
            _ => return Err(Error::Parse(format!("row {}: partial m inputs", line + 1))),
        };
        let scenario = ScenarioSpec {
            gamma: f(1)?,
            sigma: f(2)?,
            phi2: f(3)?,
            hypothesis: Hypothesis::parse(field(4))?,
            design: DesignInputs { m: m_in, d1: ou(9)?, d_total: ou(10)? },
        };
        let plan = EventsPlan { m: MConstants::new(f(11)?, f(12)?, f(13)?)?, d1_stage1: u64v(14)?, d_total: u64v(15)?, i_max: f(16)? };
        let tally = Tally {
            replicates: u64v(17)?,
            invalid: u64v(18)?,
            selected: [u64v(19)?, u64v(20)?, u64v(21)?, u64v(22)?],
            rejected: [u64v(23)?, u64v(24)?, u64v(25)?],
            true_null_rejections: u64v(26)?,
            efficacy_stage1: u64v(27)?,
            futility_stage1: u64v(28)?,
            shortfall: u64v(29)?,
            events: u64v(30)?,
            events_sq: u(31)?,
            timed: u64v(32)?,
            time: u64v(33)?,
            time_sq: u(34)?,
            visits: u64v(35)?,
            visits_sq: u(36)?,
            enrolled: u64v(37)?,
            enrolled_sq: u(38)?,
            visits_enrolled: u(39)?,
        };
        cells.push(Cell { scenario, method, plan, tally });
    }
    Ok(StudyReport { spec, cells, skipped })
}

/// Whether power is non-decreasing in γ along the cell's series (same method, σ,
/// φ2 and hypothesis).
fn gamma_series_monotone(report: &StudyReport, cell: &Cell) -> bool {
    let mut series: Vec<(f64, f64)> = report
        .cells
        .iter()
        .filter(|c| {
            c.method == cell.method
                && c.scenario.sigma == cell.scenario.sigma
                && c.scenario.phi2 == cell.scenario.phi2
                && c.scenario.hypothesis == cell.scenario.hypothesis
        })
        .map(|c| (c.scenario.gamma, c.tally.power().p))
        .collect();
    series.sort_by(|a, b| a.0.total_cmp(&b.0));
    series.windows(2).all(|w| w[1].1 >= w[0].1)
}

/// Long-format plot data: one row per scenario and method.
pub fn plot_data_csv(report: &StudyReport, manifest: &Manifest) -> String {
    let mut out = format!(
        "{}\nscenario,gamma,sigma,phi2,hypothesis,method,power,se,conditional_power,conditional_se,fwer,fwer_se,gamma_series_monotone\n",
        manifest.line()
    );
    for c in &report.cells {
        let (p, cp, fw) = (c.tally.power(), c.tally.conditional_power(), c.tally.fwer());
        let s = &c.scenario;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.label(),
            s.gamma,
            s.sigma,
            s.phi2,
            s.hypothesis.label(),
            c.method_label(),
            p.p,
            p.se,
            cp.p,
            cp.se,
            fw.p,
            fw.se,
            gamma_series_monotone(report, c)
        );
    }
    out
}

fn fmt_prop(p: Proportion) -> String {
    if p.p.is_nan() {
        "-".into()
    } else {
        format!("{:.3} ({:.3})", p.p, p.se)
    }
}

fn fmt_mean(m: MeanEstimate, digits: usize) -> String {
    if m.mean.is_nan() {
        "-".into()
    } else {
        format!("{:.*}", digits, m.mean)
    }
}

/// Design parameters per scenario followed by the operating characteristics of
/// every method.
pub fn summary_text(report: &StudyReport, manifest: &Manifest) -> String {
    let s = &report.spec;
    let mut out = String::new();
    let _ = writeln!(out, "{}", manifest.line());
    let _ = writeln!(
        out,
        "design: psi={} delta={} lambda={:.4} alpha={} beta={} zeta={:.4} I1_req={:.3}\n",
        s.psi, s.delta, s.lambda, s.alpha, s.beta, s.zeta, s.info1_req
    );
    let _ = writeln!(
        out,
        "{:<40} {:>6} {:>6} {:>6} {:>5} {:>7} {:>7} | {:<10} {:>15} {:>15} {:>15} {:>15} {:>9} {:>8} {:>8} {:>7}",
        "scenario", "m1", "m2", "mF", "d1", "d_total", "I_max", "method", "power", "P(rej|S1)", "FWER", "P(S1)", "invalid",
        "events", "stop(y)", "visits"
    );
    for c in &report.cells {
        let t = &c.tally;
        let p = &c.plan;
        let _ = writeln!(
            out,
            "{:<40} {:>6.3} {:>6.3} {:>6.3} {:>5} {:>7} {:>7.3} | {:<10} {:>15} {:>15} {:>15} {:>15} {:>9.4} {:>8} {:>8} {:>7}",
            c.label(),
            p.m.m1,
            p.m.m2,
            p.m.mf,
            p.d1_stage1,
            p.d_total,
            p.i_max,
            c.method_label(),
            fmt_prop(t.power()),
            fmt_prop(t.conditional_power()),
            fmt_prop(t.fwer()),
            fmt_prop(t.selection(0)),
            t.invalid_rate().p,
            fmt_mean(t.mean_events(), 1),
            fmt_mean(t.mean_stop_time(), 2),
            fmt_mean(t.visits_per_patient(), 2)
        );
    }
    for sk in &report.skipped {
        let _ = writeln!(out, "skipped {}: {}", sk.label, sk.reason);
    }
    out
}

/// Writes `cells.csv`, `plot_data.csv` and `summary.txt` into `dir`.
pub fn emit_report(report: &StudyReport, dir: &Path, manifest: &Manifest) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = ReportFiles { cells: dir.join("cells.csv"), plot_data: dir.join("plot_data.csv"), summary: dir.join("summary.txt") };
    let write = |p: &Path, s: String| fs::write(p, s).map_err(|e| io_err(p, e));
    write(&files.cells, cells_csv(report, manifest)?)?;
    write(&files.plot_data, plot_data_csv(report, manifest))?;
    write(&files.summary, summary_text(report, manifest))?;
    Ok(files)
}

/// Per-trial outcome CSV with the manifest as the first line.
pub fn write_outcomes_csv<W: Write>(outcomes: &[TrialOutcome], manifest: &Manifest, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Io { path: "<outcomes>".into(), message: e.to_string() };
    writeln!(out, "{}", manifest.line()).map_err(io)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io { path: "<outcomes>".into(), message: e.to_string() };
    w.write_record(TrialOutcome::CSV_HEADER).map_err(csv_err)?;
    for o in outcomes {
        w.write_record(o.csv_record()).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}
