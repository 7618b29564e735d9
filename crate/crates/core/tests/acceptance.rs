//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line to
//! stderr (bypassing the test harness capture) and the test fails if any criterion
//! fails.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use enrichment::design::{
    calibrate_m, calibrate_threshold, info_full, joint_density, CalibrationSettings, DesignSpec, EventsPlan, Group,
    selection_probabilities, Selection, ThetaConfig,
};
use enrichment::estimators::{
    conditional_score, fit_cox, fit_rmst, partial_likelihood, rmst_difference, CondScoreData, JointLikelihoodParams,
    JointQuadrature, Method, RmstOptions,
};
use enrichment::numerics::{integrate, normal, std_normal_quantile, RngStream};
use enrichment::simdata::{
    cumulative_hazard, sample_event_time, simulate_population, snapshot_at_time, JointModelParams, Scenario, Subject,
    SubgroupParams, TrialDataset,
};
use enrichment::study::{
    emit_report, fwer_strong_control_scan, run_study, tabulated_events, DesignInputs, Hypothesis, Manifest, ScenarioSpec,
    StudyConfig, REFERENCE_M,
};
use enrichment::trial::TrialDesign;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn spec() -> DesignSpec {
    DesignSpec::new(0.6, 0.5, 1.0 / 3.0, 0.025, 0.1).unwrap()
}

/// Stage-1 subgroup informations at the planned S1 events.
fn stage1_infos(spec: &DesignSpec) -> (f64, f64) {
    let i1 = spec.info1_req;
    (i1, (1.0 - spec.lambda) / spec.lambda * i1)
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let (zeta, info) = calibrate_threshold(0.6, 0.5).unwrap();
    let closed = std_normal_quantile(0.6f64.sqrt()).unwrap();
    let elapsed = t.elapsed();
    let pass = (zeta - 0.754).abs() <= 1e-3
        && (info - 9.08).abs() <= 0.05
        && (zeta - closed).abs() <= 1e-6
        && elapsed < Duration::from_secs(1);
    verdict(pass, format!("zeta={zeta:.6} closed-form={closed:.6} I1={info:.4} in {elapsed:?}"))
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let s = spec();
    let theta = s.theta_alt();
    let (i1, i2) = stage1_infos(&s);
    let p = selection_probabilities(&theta, i1, i2, s.zeta);
    let mut ok = (p.s1 - 0.6).abs() <= 1e-3 && (p.f - p.empty).abs() <= 1e-3;
    let n = 1_000_000u64;
    let mut counts = [0u64; 4];
    let mut rng = RngStream::new(2, 0);
    for _ in 0..n {
        let z1 = theta.theta1 * i1.sqrt() + rng.normal();
        let z2 = theta.theta2 * i2.sqrt() + rng.normal();
        counts[enrichment::trial::select(z1, z2, s.zeta).index()] += 1;
    }
    let mut worst: f64 = 0.0;
    for w in Selection::ALL {
        let q = p.get(w);
        let se = (q * (1.0 - q) / n as f64).sqrt();
        let dev = (counts[w.index()] as f64 / n as f64 - q).abs() / se;
        worst = worst.max(dev);
        ok &= dev <= 3.0;
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    verdict(
        ok,
        format!("P(S1)={:.4} P(S2)={:.4} P(F)={:.4} P(none)={:.4}; worst MC deviation {worst:.2} SE; {elapsed:?}", p.s1, p.s2, p.f, p.empty),
    )
}

/// 20 bins inside the support of `Z_w` plus the complement event `W != w`.
fn chi_square_p(theta: &ThetaConfig, w: Group, s: &DesignSpec, samples: &[(f64, Selection)]) -> f64 {
    let (i1, i2) = stage1_infos(s);
    let dens = |z: f64| joint_density(z, w, theta, i1, i2, s.lambda, s.zeta);
    let i_f = info_full(s.lambda, i1, i2);
    let lo = match w {
        Group::F => (s.lambda * (i_f / i1).sqrt() + (1.0 - s.lambda) * (i_f / i2).sqrt()) * s.zeta,
        _ => s.zeta,
    };
    let hi = lo + 4.5;
    let edges: Vec<f64> = (0..=20).map(|k| if k == 20 { f64::INFINITY } else { lo + (hi - lo) * k as f64 / 20.0 }).collect();
    let n = samples.len() as f64;
    let target = match w {
        Group::S1 => Selection::S1,
        Group::S2 => Selection::S2,
        Group::F => Selection::F,
    };
    let z_of = |z: (f64, Selection)| z.0;
    let mut observed = [0f64; 21];
    for &smp in samples {
        if smp.1 != target {
            observed[20] += 1.0;
            continue;
        }
        let z = z_of(smp);
        let k = edges.partition_point(|&e| e <= z).saturating_sub(1).min(19);
        observed[k] += 1.0;
    }
    let mut expected = [0f64; 21];
    let mut mass = 0.0;
    for k in 0..20 {
        let m = integrate(dens, edges[k], edges[k + 1], 1e-12).unwrap();
        expected[k] = n * m;
        mass += m;
    }
    expected[20] = n * (1.0 - mass);
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new(20.0).unwrap().cdf(stat)
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let s = spec();
    let (i1, i2) = stage1_infos(&s);
    let i_f = info_full(s.lambda, i1, i2);
    let (c1, c2) = (s.lambda * (i_f / i1).sqrt(), (1.0 - s.lambda) * (i_f / i2).sqrt());
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, theta) in [("G", s.theta_null()), ("A", s.theta_alt())] {
        let p = selection_probabilities(&theta, i1, i2, s.zeta);
        for (w, pw) in [(Group::S1, p.s1), (Group::S2, p.s2), (Group::F, p.f)] {
            let mass = integrate(|z| joint_density(z, w, &theta, i1, i2, s.lambda, s.zeta), f64::NEG_INFINITY, f64::INFINITY, 1e-12).unwrap();
            let err = (mass - pw).abs();
            ok &= err <= 1e-6;
            parts.push(format!("{name}/{}: |mass-p|={err:.1e}", w.label()));
        }
        let mut rng = RngStream::new(3, if name == "G" { 0 } else { 1 });
        let samples: Vec<(f64, Selection)> = (0..1_000_000)
            .map(|_| {
                let z1 = theta.theta1 * i1.sqrt() + rng.normal();
                let z2 = theta.theta2 * i2.sqrt() + rng.normal();
                let sel = enrichment::trial::select(z1, z2, s.zeta);
                let z = match sel {
                    Selection::S1 => z1,
                    Selection::S2 => z2,
                    _ => c1 * z1 + c2 * z2,
                };
                (z, sel)
            })
            .collect();
        for w in Group::ALL {
            let pv = chi_square_p(&theta, w, &s, &samples);
            ok &= pv > 1e-3;
            parts.push(format!("{name}/{}: chi2 p={pv:.3}", w.label()));
        }
    }
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    verdict(ok, format!("{}; {elapsed:?}", parts.join(", ")))
}

fn reference_design(n_max: usize, rate: f64) -> TrialDesign {
    TrialDesign { spec: spec(), plan: EventsPlan::from_counts(REFERENCE_M, 49, 215).unwrap(), n_max, accrual_rate: rate }
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let cfg = StudyConfig {
        scenarios: vec![ScenarioSpec { design: DesignInputs::fixed(REFERENCE_M, 49, 215), ..ScenarioSpec::reference(Hypothesis::Null) }],
        replicates: 100_000,
        analytic_z: true,
        base_seed: 4,
        ..StudyConfig::default()
    };
    let rep = run_study(&cfg).unwrap();
    let f = rep.cells[0].tally.fwer();
    let se = (0.025f64 * 0.975 / f.n as f64).sqrt();
    let elapsed = t.elapsed();
    let pass = (f.p - 0.025).abs() <= 3.0 * se && elapsed < Duration::from_secs(60);
    verdict(pass, format!("FWER={:.5} (alpha 0.025, 3 SE = {:.5}) over {} replicates; {elapsed:?}", f.p, 3.0 * se, f.n))
}

fn criterion_5() -> Verdict {
    let t = Instant::now();
    let grid: Vec<ThetaConfig> = [
        (0.0, 0.0),
        (0.0, 0.25),
        (0.0, 0.5),
        (0.0, 1.0),
        (0.0, 2.0),
        (0.25, 0.0),
        (0.5, 0.0),
        (1.0, 0.0),
        (-0.5, 0.5),
        (0.5, -0.5),
        (-2.0, 1.0),
        (-3.0, -3.0),
    ]
    .into_iter()
    .map(|(a, b)| ThetaConfig::new(a, b))
    .collect();
    let rep = fwer_strong_control_scan(&reference_design(600, 300.0), &grid, 10_000, 5).unwrap();
    let worst = rep
        .rows
        .iter()
        .map(|r| (r.rate.p - rep.global_null.p) / r.rate.se.max(1e-12))
        .fold(f64::NEG_INFINITY, f64::max);
    let elapsed = t.elapsed();
    let pass = rep.all_within_bound() && rep.rows.len() >= 9 && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!("{} configurations, global-null rate {:.4}, max excess {worst:.2} SE; {elapsed:?}", rep.rows.len(), rep.global_null.p),
    )
}

fn criterion_6() -> Verdict {
    let t = Instant::now();
    let null = Scenario::new(JointModelParams::null());
    let cox = CalibrationSettings { method: Method::Cox, ..CalibrationSettings::default() };
    let cal = calibrate_m(&null, &cox, &mut RngStream::new(6, 0)).unwrap();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for fit in &cal.fits {
        for p in fit.points.iter().filter(|p| p.events >= 100) {
            let rel = (p.info - p.events as f64 / 4.0).abs() / (p.events as f64 / 4.0);
            worst = worst.max(rel);
            ok &= rel <= 0.1;
        }
        ok &= fit.r_squared >= 0.98;
    }
    let alt = Scenario::new(JointModelParams::alternative());
    let cs = calibrate_m(&alt, &CalibrationSettings::default(), &mut RngStream::new(6, 1)).unwrap();
    let r2_cs: Vec<f64> = cs.fits.iter().map(|f| f.r_squared).collect();
    ok &= r2_cs.iter().all(|&r| r >= 0.98);
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(300);
    let r2_cox: Vec<String> = cal.fits.iter().map(|f| format!("{:.5}", f.r_squared)).collect();
    verdict(
        ok,
        format!(
            "Cox max |I - d/4|/(d/4) = {worst:.3} at d >= 100; R2 cox [{}], cond_score [{}] with m = ({:.3}, {:.3}, {:.3}); {elapsed:?}",
            r2_cox.join(", "),
            r2_cs.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>().join(", "),
            cs.m.m1,
            cs.m.m2,
            cs.m.mf
        ),
    )
}

fn manual_dataset(times: &[f64], arms: &[u8]) -> TrialDataset {
    let subjects = times
        .iter()
        .zip(arms)
        .enumerate()
        .map(|(i, (&t, &a))| Subject {
            id: i as u32,
            subgroup: 1,
            arm: a,
            accrual_time: 0.0,
            b0: 0.0,
            b1: 0.0,
            event_time: t,
            censor_time: f64::INFINITY,
            values: vec![0.0],
        })
        .collect();
    TrialDataset { subjects }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn criterion_7() -> Verdict {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();

    // Conditional score at the true parameters; both subgroups share the treated law.
    let mut p = JointModelParams::alternative();
    p.s2 = p.s1;
    let scenario = Scenario::new(p);
    let (mut u0, mut u1) = (Vec::new(), Vec::new());
    for r in 0..500 {
        let ds = simulate_population(&scenario, 200, 200.0, &mut RngStream::new(71, r)).unwrap();
        let snap = snapshot_at_time(&ds, 1e3);
        let u = conditional_score(&CondScoreData::new(&snap, Group::F), 0.8, -0.5, 1.0);
        u0.push(u[0]);
        u1.push(u[1]);
    }
    for (name, u) in [("U_gamma", &u0), ("U_eta", &u1)] {
        let (m, sd) = mean_sd(u);
        let z = m / (sd / (u.len() as f64).sqrt());
        ok &= z.abs() <= 3.0;
        parts.push(format!("{name} mean/SE={z:.2}"));
    }

    // Cox on four subjects against a 1e-4 grid maximizer.
    let ds = manual_dataset(&[1.0, 2.0, 3.0, 4.0], &[1, 0, 1, 0]);
    let snap = snapshot_at_time(&ds, 10.0);
    let fit = fit_cox(&snap, Group::S1, 1).unwrap();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=100_000 {
        let e = -5.0 + k as f64 * 1e-4;
        let v = partial_likelihood(&snap, Group::S1, e);
        if v > best.0 {
            best = (v, e);
        }
    }
    let cox_err = (-fit.theta_hat - best.1).abs();
    ok &= cox_err <= 1e-4;
    parts.push(format!("Cox |eta - grid| = {cox_err:.1e}"));

    // RMST difference against a simulated population, paired across arms.
    let sp = JointModelParams::alternative().s1;
    let quad = JointQuadrature::default();
    let delta = rmst_difference(&JointLikelihoodParams::from_natural(&sp).unwrap(), 5.0, &quad).unwrap();
    let [l11, l21, l22] = sp.cholesky().unwrap();
    let mut rng = RngStream::new(72, 0);
    let n = 1_000_000;
    let (mut s, mut ss) = (0.0, 0.0);
    for _ in 0..n {
        let (z0, z1) = (rng.normal(), rng.normal());
        let e = -rng.uniform().ln();
        let b0 = sp.mu0 + l11 * z0;
        let b1 = sp.mu1 + l21 * z0 + l22 * z1;
        let t1 = sample_event_time(e, b0, b1 + sp.b2, 1, &sp, 50.0).min(5.0);
        let t0 = sample_event_time(e, b0, b1, 0, &sp, 50.0).min(5.0);
        let d = t1 - t0;
        s += d;
        ss += d * d;
    }
    let mc = s / n as f64;
    let mc_se = ((ss / n as f64 - mc * mc) / n as f64).sqrt();
    let rmst_z = (delta - mc) / mc_se;
    ok &= rmst_z.abs() <= 3.0;
    parts.push(format!("RMST delta={delta:.5} vs MC {mc:.5} ({rmst_z:.2} SE)"));

    // Delta-method SD against the empirical SD of the estimate.
    let sc = Scenario::new(JointModelParams::alternative().map_both(|q| *q = JointModelParams::alternative().s1));
    let opts = RmstOptions::default();
    let fits: Vec<(f64, f64)> = (0..200u64)
        .into_par_iter()
        .filter_map(|r| {
            let ds = simulate_population(&sc, 300, 200.0, &mut RngStream::new(73, r)).unwrap();
            let f = fit_rmst(&snapshot_at_time(&ds, 5.0), Group::F, 1, &opts).ok()?;
            f.converged.then(|| (f.theta_hat, 1.0 / f.info.sqrt()))
        })
        .collect();
    let (est, sds): (Vec<f64>, Vec<f64>) = fits.into_iter().unzip();
    let (_, emp_sd) = mean_sd(&est);
    let ratio = mean_sd(&sds).0 / emp_sd;
    ok &= (0.8..=1.25).contains(&ratio);
    parts.push(format!("delta-method SD / empirical SD = {ratio:.3} over {} converged fits", est.len()));

    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(1800);
    verdict(ok, format!("{}; {elapsed:?}", parts.join(", ")))
}

fn criterion_8() -> Verdict {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    let base = SubgroupParams::reference();
    let cases: [(SubgroupParams, f64, f64, u8); 4] = [
        (base, 4.23, 1.81, 0),
        (base.with_effects(-0.5, -0.5), 4.23, 1.31, 1),
        (SubgroupParams { gamma: 0.0, c: 0.5, ..base }, 0.0, 0.0, 0),
        (SubgroupParams { gamma: 0.3, ..base }, 2.0, -0.5, 0),
    ];
    for (i, (p, b0, slope, arm)) in cases.iter().enumerate() {
        let mut rng = RngStream::new(81, i as u64);
        let n = 100_000;
        let mut times: Vec<f64> = (0..n).map(|_| sample_event_time(-rng.uniform().ln(), *b0, *slope, *arm, p, 50.0)).collect();
        times.sort_by(f64::total_cmp);
        let mut sup: f64 = 0.0;
        for (k, &tk) in times.iter().enumerate() {
            if !tk.is_finite() {
                break;
            }
            let s = (-cumulative_hazard(tk, *b0, *slope, *arm, p)).exp();
            let before = 1.0 - k as f64 / n as f64;
            let after = 1.0 - (k + 1) as f64 / n as f64;
            sup = sup.max((s - before).abs()).max((s - after).abs());
        }
        ok &= sup < 0.01;
        parts.push(format!("KM sup {sup:.4}"));
    }
    let mut jump: f64 = 0.0;
    for (p, b0, slope, arm) in cases {
        let left = cumulative_hazard(1.0, b0, slope, arm, &p);
        let right = cumulative_hazard(1.0 + f64::EPSILON, b0, slope, arm, &p);
        jump = jump.max((right - left).abs());
    }
    ok &= jump <= 1e-12;
    parts.push(format!("H jump at t=1: {jump:.1e}"));
    let ds = simulate_population(&Scenario::new(JointModelParams::null()), 100_000, 1e4, &mut RngStream::new(82, 0)).unwrap();
    let censored = ds.subjects.iter().filter(|s| s.censor_time < 5.0).count() as f64 / ds.subjects.len() as f64;
    ok &= (censored - 0.09).abs() <= 0.01;
    parts.push(format!("censored within 5 years: {censored:.4}"));
    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    verdict(ok, format!("{}; {elapsed:?}", parts.join(", ")))
}

/// Each cell runs at its tabulated `(d1, d_total)`; the reference cell is (49, 215).
fn criterion_9() -> Verdict {
    let t = Instant::now();
    let tabulated = |gamma: f64, sigma: f64| {
        let (d1, dt) = tabulated_events(gamma, sigma, 5.0).expect("tabulated cell");
        ScenarioSpec { gamma, sigma, design: DesignInputs::fixed(REFERENCE_M, d1, dt), ..ScenarioSpec::reference(Hypothesis::Alternative) }
    };
    let base = tabulated(0.8, 1.0);
    let gammas: Vec<ScenarioSpec> = [0.4, 0.8, 1.2].iter().map(|&g| tabulated(g, 1.0)).collect();
    let sigmas: Vec<ScenarioSpec> = [0.0, 0.5, 1.0, 1.5].iter().map(|&s| tabulated(0.8, s)).collect();
    let mut scenarios = gammas.clone();
    scenarios.extend(sigmas.iter().filter(|s| !gammas.contains(s)));
    let cfg = StudyConfig {
        scenarios,
        methods: vec![Method::CondScore, Method::Cox],
        replicates: 2000,
        base_seed: 9,
        ..StudyConfig::default()
    };
    let rep = run_study(&cfg).unwrap();
    let cell = |s: &ScenarioSpec, m: Method| &rep.cell(s, Some(m)).expect("cell present").tally;
    let mut parts = Vec::new();

    let reference = cell(&base, Method::CondScore);
    let cp = reference.conditional_power();
    let jp = reference.power();
    let mut ok = (base.design.d1, base.design.d_total) == (Some(49), Some(215)) && (cp.p - 0.90).abs() <= 0.05;
    parts.push(format!(
        "reference cond_score P(reject H01 | S1)={:.3} (se {:.3}), P(S1 and reject)={:.3}, invalid {:.4}",
        cp.p,
        cp.se,
        jp.p,
        reference.invalid_rate().p
    ));

    for s in &gammas {
        let (a, b) = (cell(s, Method::CondScore).conditional_power(), cell(s, Method::Cox).conditional_power());
        let gap = a.p - b.p;
        let se = (a.se * a.se + b.se * b.se).sqrt();
        ok &= gap > 3.0 * se;
        parts.push(format!("gamma={}: cond_score {:.3} - cox {:.3} = {gap:.3} ({:.1} SE)", s.gamma, a.p, b.p, gap / se));
    }

    let cox_sigma: Vec<_> = sigmas.iter().map(|s| cell(s, Method::Cox).conditional_power()).collect();
    let hi = cox_sigma.iter().map(|p| p.p).fold(f64::NEG_INFINITY, f64::max);
    let lo = cox_sigma.iter().map(|p| p.p).fold(f64::INFINITY, f64::min);
    let se = cox_sigma.iter().map(|p| p.se).fold(0.0, f64::max);
    ok &= hi - lo < 3.0 * se;
    parts.push(format!(
        "cox over sigma [{}]: spread {:.3} (3 SE = {:.3})",
        cox_sigma.iter().map(|p| format!("{:.3}", p.p)).collect::<Vec<_>>().join(", "),
        hi - lo,
        3.0 * se
    ));

    let elapsed = t.elapsed();
    ok &= elapsed < Duration::from_secs(7200);
    verdict(ok, format!("{}; {elapsed:?}", parts.join(", ")))
}

fn criterion_10() -> Verdict {
    let t = Instant::now();
    let base = StudyConfig {
        scenarios: vec![
            ScenarioSpec { design: DesignInputs::fixed(REFERENCE_M, 49, 215), ..ScenarioSpec::reference(Hypothesis::Alternative) },
            ScenarioSpec { design: DesignInputs::fixed(REFERENCE_M, 49, 215), ..ScenarioSpec::reference(Hypothesis::Null) },
        ],
        methods: vec![Method::Cox, Method::CondScore],
        replicates: 40,
        base_seed: 10,
        ..StudyConfig::default()
    };
    let manifest = Manifest { seed: 10, config_hash: "acceptance".into(), version: "0".into() };
    let dirs = ["a", "b", "merged"].map(|d| std::env::temp_dir().join(format!("enrichment-acceptance-{}-{d}", std::process::id())));
    let whole = run_study(&base).unwrap();
    let again = run_study(&base).unwrap();
    let fa = emit_report(&whole, &dirs[0], &manifest).unwrap();
    let fb = emit_report(&again, &dirs[1], &manifest).unwrap();
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    let identical = read(&fa.cells) == read(&fb.cells) && read(&fa.plot_data) == read(&fb.plot_data) && read(&fa.summary) == read(&fb.summary);
    let mut merged = run_study(&StudyConfig { replicates: 15, ..base.clone() }).unwrap();
    merged.merge(&run_study(&StudyConfig { first_replicate: 15, replicates: 25, ..base.clone() }).unwrap()).unwrap();
    let fm = emit_report(&merged, &dirs[2], &manifest).unwrap();
    let merge_exact = merged == whole && read(&fm.cells) == read(&fa.cells);
    for d in &dirs {
        let _ = std::fs::remove_dir_all(d);
    }
    verdict(identical && merge_exact, format!("byte-identical rerun: {identical}; shard merge exact: {merge_exact}; {:?}", t.elapsed()))
}

#[test]
fn acceptance() {
    let criteria: [(u8, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (n, run) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let v = run();
        let line = format!("criterion {n:>2}: {} - {}\n", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        let _ = std::io::stderr().write_all(line.as_bytes());
        if !v.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn normal_helpers_agree() {
    // Guards the chi-square oracle's use of the library normal functions.
    assert!((normal::cdf(0.754) + normal::sf(0.754) - 1.0).abs() < 1e-15);
}
