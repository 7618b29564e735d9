//! `enrich`: command-line front end for designing and simulating two-stage
//! adaptive enrichment trials.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use enrichment::design::{calibrate_m, plan_events, DesignReport, DesignSpec, EventsPlan, Group};
use enrichment::estimators::Method;
use enrichment::numerics::RngStream;
use enrichment::study::{
    emit_report, fwer_strong_control_scan, parse_report_csv, run_study, simulate_outcomes, write_outcomes_csv, DesignInputs,
    Manifest, ScenarioSpec, StudyConfig, StudyReport, REFERENCE_M,
};
use enrichment::trial::TrialDesign;
use enrichment::Error;

use config::{parse_methods, scenario_or_reference, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "enrich", version, about = "Two-stage adaptive enrichment trial design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicates; overrides the configuration.
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// First replicate id, for sharded runs.
    #[arg(long, global = true)]
    first_replicate: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Comma-separated methods (cond_score, cox, cox_tvc, rmst or all).
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Draw Z-statistics from their canonical joint law instead of simulating data.
    #[arg(long, global = true)]
    analytic_z: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate m and plan events; writes design_report.txt.
    Calibrate,
    /// Simulate individual trials; writes outcomes.csv.
    Simulate,
    /// Run a scenario-by-method study; writes cells.csv, plot_data.csv and summary.txt.
    Study,
    /// Strong familywise error scan with analytic statistics; writes scan.csv.
    FwerScan,
    /// Merge study shards and re-emit the report.
    Report {
        /// cells.csv files from disjoint replicate ranges.
        inputs: Vec<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
    Partial(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Partial(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Parameter(_) => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    cli: Cli,
    config: RunConfig,
    manifest: Manifest,
}

fn load(cli: Cli) -> Result<Context, Failure> {
    let path = cli.config.clone().ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let seed = cli.seed.or(config.seed).unwrap_or(1);
    let hash = Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    let manifest = Manifest { seed, config_hash: hash, version: env!("CARGO_PKG_VERSION").to_string() };
    Ok(Context { cli, config, manifest })
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Numeric(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<&Path, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Numeric(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn methods(ctx: &Context, from_config: &[String]) -> Result<Vec<Method>, Failure> {
    let list = match &ctx.cli.methods {
        Some(m) => parse_methods(&[m.as_str()])?,
        None => parse_methods(from_config)?,
    };
    if list.is_empty() {
        return Err(Failure::Config("no methods selected".into()));
    }
    Ok(list)
}

/// Plan from a design report file or from the inline `[plan]` inputs.
fn resolve_inputs(ctx: &Context) -> Result<DesignInputs, Failure> {
    match &ctx.config.plan.report {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Numeric(format!("design report {path}: {e}")))?;
            let report = DesignReport::from_kv(&text).map_err(|e| Failure::Numeric(format!("design report {path}: {e}")))?;
            Ok(DesignInputs::fixed(report.plan.m, report.plan.d1_stage1, report.plan.d_total))
        }
        None => Ok(ctx.config.plan.inputs()),
    }
}

fn trial_design(ctx: &Context, spec: DesignSpec, plan: EventsPlan) -> TrialDesign {
    TrialDesign { spec, plan, n_max: ctx.config.trial.n_max, accrual_rate: ctx.config.trial.accrual_rate }
}

fn cmd_calibrate(ctx: &Context) -> Outcome {
    let spec = ctx.config.design.spec()?;
    let scenario_spec = scenario_or_reference(&ctx.config.scenario);
    let scenario = scenario_spec.scenario()?;
    let dir = out_dir(&ctx.cli.out)?;
    let inputs = ctx.config.plan.inputs();
    let mut extra = String::new();
    let m = match inputs.m {
        Some(m) => m,
        None => {
            let cal = calibrate_m(&scenario, &ctx.config.calibration, &mut RngStream::new(ctx.manifest.seed, 0))?;
            let mut points = format!("{}\ngroup,events,info\n", ctx.manifest.line());
            for fit in &cal.fits {
                let _ = writeln!(extra, "r2_{}={}", fit.group.label(), fit.r_squared);
                let _ = writeln!(extra, "dropped_{}={}", fit.group.label(), fit.dropped);
                for p in &fit.points {
                    let _ = writeln!(points, "{},{},{}", fit.group.label(), p.events, p.info);
                }
            }
            write(&dir.join("calibration_points.csv"), &points)?;
            cal.m
        }
    };
    let plan = match (inputs.d1, inputs.d_total) {
        (Some(d1), Some(dt)) => EventsPlan::from_counts(m, d1, dt)?,
        (None, None) => plan_events(&spec, &m)?,
        _ => return Err(Failure::Config("plan needs both d1 and d_total or neither".into())),
    };
    let report = DesignReport::new(spec, plan)?;
    let text = format!("{}\n{}{extra}", ctx.manifest.line(), report.to_kv());
    write(&dir.join("design_report.txt"), &text)?;
    eprintln!("zeta={:.4} info1_req={:.3} m=({:.3}, {:.3}, {:.3}) d1={} d_total={}", spec.zeta, spec.info1_req, m.m1, m.m2, m.mf, plan.d1_stage1, plan.d_total);
    Ok(())
}

fn cmd_simulate(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let spec = cfg.design.spec()?;
    let scenario_spec = scenario_or_reference(&cfg.scenario);
    let scenario = scenario_spec.scenario()?;
    let mut rng = RngStream::new(ctx.manifest.seed, u64::MAX);
    let plan = resolve_inputs(ctx)?.plan(&spec, &scenario, &mut rng)?;
    let design = trial_design(ctx, spec, plan);
    let arms: Vec<Option<Method>> = if ctx.cli.analytic_z || cfg.simulate.analytic_z {
        vec![None]
    } else {
        methods(ctx, &cfg.simulate.methods)?.into_iter().map(Some).collect()
    };
    let n = ctx.cli.replicates.unwrap_or(cfg.simulate.replicates);
    let first = ctx.cli.first_replicate.unwrap_or(cfg.simulate.first_replicate);
    let theta = scenario_spec.theta(&spec);
    let outcomes = simulate_outcomes(&scenario, &design, &theta, &arms, &cfg.rmst, ctx.manifest.seed, first..first + n);
    let dir = out_dir(&ctx.cli.out)?;
    let mut buf = Vec::new();
    write_outcomes_csv(&outcomes, &ctx.manifest, &mut buf)?;
    write(&dir.join("outcomes.csv"), &String::from_utf8_lossy(&buf))?;
    let valid = outcomes.iter().filter(|o| o.is_valid()).count();
    let rejected = outcomes.iter().filter(|o| o.rejected().is_some()).count();
    let s1 = outcomes.iter().filter(|o| o.rejected() == Some(Group::S1)).count();
    eprintln!("{} trials, {valid} valid, any rejection {rejected}, H01 rejected {s1}", outcomes.len());
    Ok(())
}

fn study_config(ctx: &Context) -> Result<StudyConfig, Failure> {
    let cfg = &ctx.config;
    let st = &cfg.study;
    let inputs = resolve_inputs(ctx)?;
    let scenarios: Vec<ScenarioSpec> = if !st.scenarios.is_empty() {
        st.scenarios.clone()
    } else {
        match st.grid.as_deref() {
            Some("figure") => st.hypotheses.iter().flat_map(|&h| StudyConfig::figure_grid(h, inputs)).collect(),
            Some("tabulated") => {
                let m = inputs.m.unwrap_or(REFERENCE_M);
                st.hypotheses.iter().flat_map(|&h| StudyConfig::tabulated_grid(h, m)).collect()
            }
            Some(other) => {
                return Err(Failure::Config(format!("unknown study grid {other:?}; expected \"figure\" or \"tabulated\"")))
            }
            None => st.hypotheses.iter().map(|&h| ScenarioSpec { design: inputs, ..ScenarioSpec::reference(h) }).collect(),
        }
    };
    let analytic_z = ctx.cli.analytic_z || st.analytic_z;
    let config = StudyConfig {
        design: cfg.design.constants(),
        scenarios,
        methods: if analytic_z { Vec::new() } else { methods(ctx, &st.methods)? },
        replicates: ctx.cli.replicates.unwrap_or(st.replicates),
        first_replicate: ctx.cli.first_replicate.unwrap_or(st.first_replicate),
        base_seed: ctx.manifest.seed,
        n_max: cfg.trial.n_max,
        accrual_rate: cfg.trial.accrual_rate,
        analytic_z,
        rmst: cfg.rmst,
    };
    config.validate()?;
    Ok(config)
}

fn finish_report(report: &StudyReport, dir: &Path, manifest: &Manifest) -> Outcome {
    let files = emit_report(report, out_dir(dir)?, manifest)?;
    eprintln!("wrote {}, {}, {}", files.cells.display(), files.plot_data.display(), files.summary.display());
    if report.skipped.is_empty() {
        Ok(())
    } else {
        let names: Vec<_> = report.skipped.iter().map(|s| format!("{} ({})", s.label, s.reason)).collect();
        Err(Failure::Partial(format!("skipped scenarios: {}", names.join("; "))))
    }
}

fn cmd_study(ctx: &Context) -> Outcome {
    let config = study_config(ctx)?;
    eprintln!(
        "study: {} scenarios x {} arms, replicates {}..{}",
        config.scenarios.len(),
        config.arms().len(),
        config.first_replicate,
        config.first_replicate + config.replicates
    );
    let report = run_study(&config)?;
    finish_report(&report, &ctx.cli.out, &ctx.manifest)
}

fn cmd_fwer_scan(ctx: &Context) -> Outcome {
    let cfg = &ctx.config;
    let spec = cfg.design.spec()?;
    let scenario = scenario_or_reference(&cfg.scenario).scenario()?;
    let plan = resolve_inputs(ctx)?.plan(&spec, &scenario, &mut RngStream::new(ctx.manifest.seed, u64::MAX))?;
    let design = trial_design(ctx, spec, plan);
    let n = ctx.cli.replicates.unwrap_or(cfg.scan.replicates);
    let report = fwer_strong_control_scan(&design, &cfg.scan.thetas(), n, ctx.manifest.seed)?;
    let dir = out_dir(&ctx.cli.out)?;
    write(&dir.join("scan.csv"), &format!("{}\n{}", ctx.manifest.line(), report.to_csv()))?;
    eprintln!(
        "global-null rate {:.4} (se {:.4}); all configurations within bound: {}",
        report.global_null.p,
        report.global_null.se,
        report.all_within_bound()
    );
    Ok(())
}

fn cmd_report(out: &Path, inputs: &[PathBuf]) -> Outcome {
    let (first, rest) = inputs.split_first().ok_or_else(|| Failure::Config("report needs at least one cells.csv".into()))?;
    let read = |p: &PathBuf| fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())));
    let text = read(first)?;
    let manifest = Manifest::parse(&text)?;
    let mut report = parse_report_csv(&text)?;
    for p in rest {
        let t = read(p)?;
        let m = Manifest::parse(&t)?;
        if m.seed != manifest.seed || m.config_hash != manifest.config_hash {
            return Err(Failure::Config(format!("{} comes from a different configuration or seed", p.display())));
        }
        report.merge(&parse_report_csv(&t)?)?;
    }
    finish_report(&report, out, &manifest)
}

fn run(cli: Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    if let Command::Report { inputs } = &cli.command {
        return cmd_report(&cli.out, inputs);
    }
    let ctx = load(cli)?;
    match ctx.cli.command {
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Study => cmd_study(&ctx),
        Command::FwerScan => cmd_fwer_scan(&ctx),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Numeric(m) => ("numeric failure", m),
                Failure::Partial(m) => ("partial failure", m),
            };
            eprintln!("enrich: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
