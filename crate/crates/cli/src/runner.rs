//! Executes configs: runs seeds, computes diagnostics, evaluates the
//! acceptance predicates, runs audits and integrates flows. All artifacts
//! are written after the computation so that outputs are byte-stable.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sfb_core::audit::{self, AuditReport};
use sfb_core::diagnostics::{diagnose, inversions, DiagnosticsOptions, DiagnosticsReport};
use sfb_core::flow::{integrate_flow, FlowTrajectory};
use sfb_core::program::InnovationStream;
use sfb_core::reference::solve_reference;
use sfb_core::solver::{fmt_f64, run_with, RunOptions, Trajectory};
use sfb_core::{DVector, DomainDescriptor};

use crate::config::{AcceptanceSpec, ConfigError, Experiment};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Core { context: String, source: sfb_core::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn core(context: impl Into<String>) -> impl FnOnce(sfb_core::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Core { context, source }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Everything computed for one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub report: DiagnosticsReport,
    pub averaged: DVector<f64>,
    pub final_error: Option<f64>,
    pub averaged_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predicate {
    pub name: String,
    pub threshold: f64,
    /// Per-seed values compared with the threshold.
    pub values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub n_iters: usize,
    pub apt_times: Vec<f64>,
    pub apt_window: f64,
    pub apt_deviations: Vec<Vec<f64>>,
    pub tail_oscillation: Vec<f64>,
    pub final_residual: Vec<f64>,
    pub averaged_final_residual: Vec<f64>,
    pub domain_distance_final: Vec<f64>,
    pub final_error: Option<Vec<f64>>,
    pub averaged_error: Option<Vec<f64>>,
    pub x_star: Option<Vec<f64>>,
    pub thresholds: AcceptanceSpec,
    pub predicates: Vec<Predicate>,
    pub pass: bool,
}

impl Summary {
    pub fn failed(&self) -> Vec<&str> {
        self.predicates.iter().filter(|p| !p.pass).map(|p| p.name.as_str()).collect()
    }
}

/// Zero used for error predicates: the configured one, else the proximal
/// point reference when enabled. A reference that fails to converge is an
/// error only when a predicate needs it.
pub fn reference_point(exp: &Experiment) -> Result<Option<DVector<f64>>, RunError> {
    let t = &exp.config.acceptance;
    let needed = t.final_error_max.is_some() || t.averaged_error_max.is_some();
    match solved_reference(exp) {
        Err(_) if !needed => Ok(None),
        other => other,
    }
}

fn solved_reference(exp: &Experiment) -> Result<Option<DVector<f64>>, RunError> {
    let d = &exp.config.diagnostics;
    if let Some(x) = &d.x_star {
        return Ok(Some(DVector::from_column_slice(x)));
    }
    if !d.reference {
        return Ok(None);
    }
    let x0 = DVector::from_column_slice(&exp.config.run.x0);
    let r = solve_reference(&exp.program, &x0, d.reference_step, d.reference_tol, d.reference_max_iters)
        .map_err(core("reference solution"))?;
    Ok(Some(r.point))
}

/// Runs one seed and its diagnostics.
pub fn run_seed(exp: &Experiment, seed: u64, x_star: Option<&DVector<f64>>) -> Result<SeedOutcome, RunError> {
    let c = &exp.config;
    let x0 = DVector::from_column_slice(&c.run.x0);
    let ctx = |what: &str| format!("seed {seed}: {what}");
    let trajectory = run_with(
        &exp.program,
        &exp.schedule,
        c.run.n_iters,
        &x0,
        InnovationStream::seeded(seed),
        RunOptions { thin_cap: c.run.thin_cap },
    )
    .map_err(core(ctx("iteration")))?;
    let opts = DiagnosticsOptions {
        apt_window: c.diagnostics.apt_window,
        apt_times: c.diagnostics.apt_times.clone(),
        flow_h: c.diagnostics.flow_h,
        flow_tol: c.diagnostics.flow_tol,
        tail_fraction: c.diagnostics.tail_fraction,
        x_star: x_star.cloned(),
    };
    let report = diagnose(&trajectory, &exp.program, &opts).map_err(core(ctx("diagnostics")))?;
    let averaged = trajectory.averaged_last().map_err(core(ctx("averaging")))?;
    let final_error = x_star.map(|x| (trajectory.last() - x).norm());
    let averaged_error = x_star.map(|x| (&averaged - x).norm());
    Ok(SeedOutcome { seed, trajectory, report, averaged, final_error, averaged_error })
}

fn predicate(name: &str, threshold: f64, values: Vec<f64>, ok: impl Fn(f64) -> bool) -> Predicate {
    let pass = !values.is_empty() && values.iter().all(|v| ok(*v));
    Predicate { name: name.to_string(), threshold, values, pass }
}

/// Evaluates the configured predicates over all seeds.
pub fn summarize(exp: &Experiment, outcomes: &[SeedOutcome], x_star: Option<&DVector<f64>>) -> Summary {
    let c = &exp.config;
    let t = &c.acceptance;
    let per = |f: &dyn Fn(&SeedOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
    let tail = per(&|o| o.report.tail_oscillation);
    let final_residual = per(&|o| o.report.final_residual);
    let averaged_residual = per(&|o| o.report.averaged_final_residual);
    let domain = per(&|o| o.report.domain_distance_final);
    let final_error: Option<Vec<f64>> = outcomes.iter().map(|o| o.final_error).collect();
    let averaged_error: Option<Vec<f64>> = outcomes.iter().map(|o| o.averaged_error).collect();
    let apt: Vec<Vec<f64>> = outcomes.iter().map(|o| o.report.apt.iter().map(|s| s.deviation).collect()).collect();

    let mut predicates = Vec::new();
    if let Some(m) = t.tail_oscillation_min {
        predicates.push(predicate("tail_oscillation_min", m, tail.clone(), |v| v > m));
    }
    if let Some(m) = t.final_residual_max {
        predicates.push(predicate("final_residual_max", m, final_residual.clone(), |v| v < m));
    }
    if let Some(m) = t.averaged_residual_max {
        predicates.push(predicate("averaged_residual_max", m, averaged_residual.clone(), |v| v < m));
    }
    if let Some(m) = t.domain_distance_max {
        predicates.push(predicate("domain_distance_max", m, domain.clone(), |v| v < m));
    }
    if let Some(m) = t.final_error_max {
        predicates.push(predicate("final_error_max", m, final_error.clone().unwrap_or_default(), |v| v < m));
    }
    if let Some(m) = t.averaged_error_max {
        predicates.push(predicate("averaged_error_max", m, averaged_error.clone().unwrap_or_default(), |v| v < m));
    }
    if let Some(m) = t.apt_last_max {
        let last = apt.iter().map(|a| a.last().copied().unwrap_or(f64::NAN)).collect();
        predicates.push(predicate("apt_last_max", m, last, |v| v < m));
    }
    if let Some(k) = t.apt_max_inversions {
        let inv = apt.iter().map(|a| if a.is_empty() { f64::NAN } else { inversions(a) as f64 }).collect();
        predicates.push(predicate("apt_max_inversions", k as f64, inv, |v| v <= k as f64));
    }
    let pass = predicates.iter().all(|p| p.pass);
    Summary {
        scenario: c.scenario.clone().unwrap_or_else(|| "custom".into()),
        seeds: outcomes.iter().map(|o| o.seed).collect(),
        n_iters: c.run.n_iters,
        apt_times: c.diagnostics.apt_times.clone(),
        apt_window: c.diagnostics.apt_window,
        apt_deviations: apt,
        tail_oscillation: tail,
        final_residual,
        averaged_final_residual: averaged_residual,
        domain_distance_final: domain,
        final_error,
        averaged_error,
        x_star: x_star.map(|x| x.iter().copied().collect()),
        thresholds: t.clone(),
        predicates,
        pass,
    }
}

/// Runs every seed (concurrently) and evaluates the predicates.
pub fn execute(exp: &Experiment) -> Result<(Summary, Vec<SeedOutcome>), RunError> {
    let x_star = reference_point(exp)?;
    let outcomes = exp
        .config
        .run
        .seeds
        .par_iter()
        .map(|&seed| run_seed(exp, seed, x_star.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((summarize(exp, &outcomes, x_star.as_ref()), outcomes))
}

/// Runs a config and writes its artifacts under `out`.
pub fn run_experiment(exp: &Experiment, out: &Path) -> Result<Summary, RunError> {
    let (summary, outcomes) = execute(exp)?;
    write_outputs(exp, &summary, &outcomes, out)?;
    Ok(summary)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, RunError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).expect("reports serialise");
    writeln!(w).and_then(|_| w.flush()).map_err(io(path))
}

/// Two-column series file.
pub fn write_series<K: std::fmt::Display>(path: &Path, key: &str, rows: impl IntoIterator<Item = (K, f64)>) -> Result<(), RunError> {
    let mut w = create(path)?;
    let mut body = format!("{key},value\n");
    for (k, v) in rows {
        body.push_str(&format!("{k},{}\n", fmt_f64(v)));
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io(path))
}

/// Per-seed diagnostics file.
#[derive(Debug, Serialize)]
struct SeedDiagnostics<'a> {
    seed: u64,
    apt_trend: Vec<f64>,
    apt: &'a [sfb_core::diagnostics::AptSample],
    final_residual: f64,
    averaged_final_residual: f64,
    tail_oscillation: f64,
    domain_distance_final: f64,
    final_error: Option<f64>,
    averaged_error: Option<f64>,
    final_point: Vec<f64>,
    averaged_point: Vec<f64>,
}

pub fn write_outputs(exp: &Experiment, summary: &Summary, outcomes: &[SeedOutcome], out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out).map_err(io(out))?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, crate::config::to_toml(&exp.config)).map_err(io(&config_path))?;
    for o in outcomes {
        let dir = out.join(format!("seed_{}", o.seed));
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join("trajectory.csv");
        let mut w = create(&path)?;
        o.trajectory.write_csv(&mut w).map_err(core(format!("writing {}", path.display())))?;
        w.flush().map_err(io(&path))?;
        write_series(&dir.join("apt.csv"), "t", o.report.apt.iter().map(|s| (fmt_f64(s.t), s.deviation)))?;
        write_series(&dir.join("domain_distance.csv"), "n", o.report.domain_distance.iter().copied())?;
        if let Some(f) = &o.report.fejer {
            write_series(&dir.join("fejer.csv"), "n", f.iter().copied())?;
        }
        let diag = SeedDiagnostics {
            seed: o.seed,
            apt_trend: o.report.apt.iter().map(|s| s.deviation).collect(),
            apt: &o.report.apt,
            final_residual: o.report.final_residual,
            averaged_final_residual: o.report.averaged_final_residual,
            tail_oscillation: o.report.tail_oscillation,
            domain_distance_final: o.report.domain_distance_final,
            final_error: o.final_error,
            averaged_error: o.averaged_error,
            final_point: o.trajectory.last().iter().copied().collect(),
            averaged_point: o.averaged.iter().copied().collect(),
        };
        write_json(&dir.join("diagnostics.json"), &diag)?;
    }
    write_json(&out.join("summary.json"), summary)
}

/// Runs every audit of a config; each report is also written to
/// `out/<assumption>.json`.
pub fn run_audits(exp: &Experiment, out: &Path) -> Result<Vec<AuditReport>, RunError> {
    let reports = audits(exp)?;
    fs::create_dir_all(out).map_err(io(out))?;
    for r in &reports {
        write_json(&out.join(format!("{}.json", r.assumption)), r)?;
    }
    Ok(reports)
}

pub fn audits(exp: &Experiment) -> Result<Vec<AuditReport>, RunError> {
    let c = &exp.config;
    let a = &c.audit;
    let p = &exp.program;
    let n = c.dimension;
    let x_star = reference_point(exp)?;
    let x0 = DVector::from_column_slice(&c.run.x0);
    let grid: Vec<DVector<f64>> = match &a.grid {
        Some(g) => g.iter().map(|x| DVector::from_column_slice(x)).collect(),
        None => {
            let mut g = vec![p.project_essential(&x0).map_err(core("compact_moment"))?];
            g.extend(x_star.clone());
            g
        }
    };
    let region = DomainDescriptor::boxed(DVector::from_element(n, -a.region_radius), DVector::from_element(n, a.region_radius))
        .map_err(core("linear_regularity"))?;
    let mut reports = vec![
        audit::audit_compact_moment(p, &grid, a.epsilon, a.samples, a.seed).map_err(core("compact_moment"))?,
        audit::audit_program_regularity(p, &region, a.samples, a.seed).map_err(core("linear_regularity"))?,
        audit::audit_b_growth(p, a.samples, a.growth_radius, a.seed, a.declared_bound).map_err(core("b_growth"))?,
        audit::audit_resolvent_projection_gap(p, &grid, &a.gammas).map_err(core("resolvent_projection_gap"))?,
        audit::audit_interior(p, &x0, a.interior_iterations).map_err(core("interior"))?,
        audit::audit_step_ratio(&exp.schedule, c.run.n_iters),
    ];
    if let Some(x) = &x_star {
        let tol = (c.diagnostics.reference_tol * 100.0).max(1e-8);
        reports.push(audit::audit_zero_representation(p, x, tol).map_err(core("zero_representation"))?);
    }
    Ok(reports)
}

/// Integrates the mean flow from `z0` over `[0, horizon]`.
pub fn run_flow(exp: &Experiment, z0: &[f64], horizon: f64) -> Result<FlowTrajectory, RunError> {
    let d = &exp.config.diagnostics;
    if z0.len() != exp.config.dimension {
        return Err(ConfigError::Invalid(vec![crate::config::Violation {
            path: "z0".into(),
            message: format!("expected {} entries, got {}", exp.config.dimension, z0.len()),
        }])
        .into());
    }
    integrate_flow(&exp.program, &DVector::from_column_slice(z0), horizon, d.flow_h.min(horizon), d.flow_tol).map_err(core("flow"))
}

/// Writes `t, z_0..z_{N-1}, residual` rows; the first row has residual 0.
pub fn write_flow(flow: &FlowTrajectory, path: &Path) -> Result<(), RunError> {
    let dim = flow.points.first().map(|p| p.len()).unwrap_or(0);
    let mut body = String::from("t");
    for i in 0..dim {
        body.push_str(&format!(",z_{i}"));
    }
    body.push_str(",residual\n");
    for ((t, z), r) in flow.times.iter().zip(&flow.points).zip(std::iter::once(&0.0).chain(&flow.residuals)) {
        body.push_str(&fmt_f64(*t));
        for v in z.iter() {
            body.push(',');
            body.push_str(&fmt_f64(*v));
        }
        body.push(',');
        body.push_str(&fmt_f64(*r));
        body.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, body).map_err(io(path))
}
