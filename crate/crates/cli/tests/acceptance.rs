//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails. Oracles here are written
//! independently of the library algorithms they check.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfb_cli::config::{validate, AtomSpec, ExperimentConfig, SetSpec};
use sfb_cli::runner::{audits, execute, run_experiment};
use sfb_cli::{Experiment, ScenarioId};
use sfb_core::audit::{audit_b_growth, audit_linear_regularity, audit_resolvent_projection_gap};
use sfb_core::catalog::showcase;
use sfb_core::flow::integrate_flow;
use sfb_core::program::Family;
use sfb_core::{make_atom, CatalogAtom, DMatrix, DVector, DomainDescriptor, RandomProgram};

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("operator laws", operator_laws),
        ("rotation counterexample", rotation),
        ("demipositive convergence", demipositive),
        ("constrained scenario", constrained),
        ("APT trend", apt_trend),
        ("flow oracles", flow_oracles),
        ("audit correctness", audit_correctness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.1}s] {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn experiment(id: ScenarioId, edit: impl FnOnce(&mut ExperimentConfig)) -> Experiment {
    let mut c = id.config();
    edit(&mut c);
    validate(c).expect("scenario config")
}

fn within(limit: Duration, start: Instant, what: &str) -> Result<(), String> {
    ensure(start.elapsed() < limit, || format!("{what} took {:?}, limit {limit:?}", start.elapsed()))
}

// 1 ---------------------------------------------------------------------

fn operator_laws() -> Result<String, String> {
    let start = Instant::now();
    let mut atoms = 0;
    let mut worst: f64 = 0.0;
    for dim in [2, 3, 5] {
        for (name, spec) in showcase(dim) {
            let atom = make_atom(&spec).map_err(|e| format!("{name}: {e}"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + dim as u64);
            for draw in 0..1000 {
                let x: DVector<f64> = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
                let y: DVector<f64> = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
                let g1 = 10f64.powf(rng.random_range(-3.0..2.0));
                let g2 = 10f64.powf(rng.random_range(-3.0..2.0));
                let (small, large) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
                let tol = 1e-9 * (1.0 + x.norm().max(y.norm()));
                let fail = |law: &str, excess: f64| format!("{name} (N={dim}) draw {draw}: {law} violated by {excess:e}");

                let jx = atom.resolvent(small, &x).map_err(|e| e.to_string())?;
                let jy = atom.resolvent(small, &y).map_err(|e| e.to_string())?;
                let d = &jx - &jy;
                let firm = d.norm_squared() - d.dot(&(&x - &y));
                ensure(firm <= tol, || fail("firm nonexpansiveness", firm))?;

                let ax = atom.yosida(small, &x).map_err(|e| e.to_string())?;
                let identity = (&x - (&jx + &ax * small)).norm();
                ensure(identity <= tol, || fail("resolvent identity", identity))?;

                let member = atom.value_set(&jx).map_err(|e| e.to_string())?.distance(&ax);
                ensure(member <= tol * (1.0 + ax.norm()), || fail("Yosida membership", member))?;

                let ax_large = atom.yosida(large, &x).map_err(|e| e.to_string())?;
                let growth = ax_large.norm() - ax.norm();
                ensure(growth <= tol, || fail("Yosida norm monotonicity", growth))?;
                worst = worst.max(firm).max(identity).max(member).max(growth);
            }
            atoms += 1;
        }
    }
    within(Duration::from_secs(10), start, "law suite")?;
    Ok(format!("{atoms} atoms x 1000 draws, worst violation {worst:.1e}"))
}

// 2 ---------------------------------------------------------------------

fn rotation() -> Result<String, String> {
    let start = Instant::now();
    let exp = experiment(ScenarioId::Rotation, |c| c.run.thin_cap = None);
    let s = &exp.config.schedule;
    ensure(s.gamma0 == 1.0 && s.a == 0.75 && s.n0 == 0.0 && exp.config.run.n_iters == 100_000 && exp.config.run.seeds.len() == 3, || {
        "rotation scenario is not the specified setup".into()
    })?;
    let (_, outcomes) = execute(&exp).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for o in &outcomes {
        let pts = o.trajectory.points();
        let gammas = o.trajectory.gammas();
        let n = pts.len() - 1;
        // diameter of the final 10% of iterates
        let tail = &pts[(0.9 * n as f64).ceil() as usize..];
        let mut osc: f64 = 0.0;
        for i in 0..tail.len() {
            for j in i + 1..tail.len() {
                osc = osc.max((&tail[i] - &tail[j]).norm());
            }
        }
        let (mut num, mut den) = (DVector::zeros(2), 0.0);
        for k in 1..=n {
            num += &pts[k] * gammas[k];
            den += gammas[k];
        }
        let mean = (num / den).norm();
        ensure(osc > 0.1, || format!("seed {}: tail oscillation {osc}", o.seed))?;
        ensure(mean < 0.05, || format!("seed {}: |mean| {mean}", o.seed))?;
        ensure((o.report.tail_oscillation - osc).abs() < 1e-12, || format!("seed {}: reported oscillation differs", o.seed))?;
        lines.push(format!("seed {}: osc {osc:.3}, |mean| {mean:.4}", o.seed));
    }
    within(Duration::from_secs(30), start, "rotation scenario")?;
    Ok(lines.join("; "))
}

// 3 ---------------------------------------------------------------------

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// Mean quadratic `Q̄x + q̄` over the `B` atoms of a scenario.
fn mean_quadratic(c: &ExperimentConfig) -> (DMatrix<f64>, DVector<f64>) {
    let n = c.dimension;
    let (mut q, mut b) = (DMatrix::zeros(n, n), DVector::zeros(n));
    for w in &c.program.b {
        match &w.atom {
            AtomSpec::Quadratic { matrix: Some(m), vector: Some(vec), .. } => {
                q += matrix(m) * w.weight;
                b += v(vec) * w.weight;
            }
            AtomSpec::LinearRegression { features, target } => {
                let a = v(features);
                q += &a * a.transpose() * w.weight;
                b -= a * (*target * w.weight);
            }
            other => panic!("unexpected atom {other:?}"),
        }
    }
    (q, b)
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.max()
}

/// Proximal gradient for `min ½xᵀQx + qᵀx + λ‖x‖₁`.
fn lasso_oracle(q: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let step = 1.0 / largest_eigenvalue(q);
    let mut x = DVector::zeros(b.len());
    for _ in 0..1_000_000 {
        let z = &x - (q * &x + b) * step;
        let next = z.map(|u| u.signum() * (u.abs() - step * lambda).max(0.0));
        let change = (&next - &x).norm();
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    // certify: the optimality residual is below 1e-8
    let g = q * &x + b;
    let r = DVector::from_fn(x.len(), |i, _| {
        if x[i] != 0.0 {
            g[i] + lambda * x[i].signum()
        } else {
            (g[i].abs() - lambda).max(0.0)
        }
    });
    assert!(r.norm() < 1e-8, "proximal gradient residual {}", r.norm());
    x
}

fn demipositive_oracle(c: &ExperimentConfig) -> DVector<f64> {
    let (q, b) = mean_quadratic(c);
    let lambda: f64 = c
        .program
        .a
        .iter()
        .map(|w| match w.atom {
            AtomSpec::L1 { lambda } => w.weight * lambda,
            _ => panic!("expected l1 atoms"),
        })
        .sum();
    lasso_oracle(&q, &b, lambda)
}

fn demipositive() -> Result<String, String> {
    let exp = experiment(ScenarioId::DemipositiveQuadratic, |_| {});
    ensure(exp.program.strong_monotonicity() > 0.0, || "program is not strongly monotone".into())?;
    let oracle = demipositive_oracle(&exp.config);
    let (_, outcomes) = execute(&exp).map_err(|e| e.to_string())?;
    let mut errs = Vec::new();
    for o in &outcomes {
        let e = (o.trajectory.last() - &oracle).norm();
        ensure(e < 0.05, || format!("seed {}: final error {e}", o.seed))?;
        errs.push(format!("{e:.2e}"));
    }
    Ok(format!("n = {}, final errors [{}]", exp.config.run.n_iters, errs.join(", ")))
}

// 4 ---------------------------------------------------------------------

enum Set {
    Box(DVector<f64>, DVector<f64>),
    Half(DVector<f64>, f64),
}

impl Set {
    fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Set::Box(lo, hi) => DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i])),
            Set::Half(a, c) => {
                let excess = a.dot(x) - c;
                if excess > 0.0 {
                    x - a * (excess / a.norm_squared())
                } else {
                    x.clone()
                }
            }
        }
    }
}

/// Dykstra's alternating projections onto the intersection.
fn dykstra(sets: &[Set], x: &DVector<f64>) -> DVector<f64> {
    let mut z = x.clone();
    let mut incr = vec![DVector::zeros(x.len()); sets.len()];
    for _ in 0..100_000 {
        let before = z.clone();
        for (s, p) in sets.iter().zip(incr.iter_mut()) {
            let w = &z + &*p;
            z = s.project(&w);
            *p = w - &z;
        }
        if (&z - &before).norm() < 1e-15 {
            break;
        }
    }
    z
}

fn constraint_sets(c: &ExperimentConfig) -> Vec<Set> {
    c.program
        .a
        .iter()
        .map(|w| match &w.atom {
            AtomSpec::NormalCone { set: SetSpec::Box { lo, hi } } => Set::Box(v(lo), v(hi)),
            AtomSpec::NormalCone { set: SetSpec::Halfspace { normal, offset } } => Set::Half(v(normal), *offset),
            other => panic!("unexpected atom {other:?}"),
        })
        .collect()
}

fn constrained() -> Result<String, String> {
    let exp = experiment(ScenarioId::ConstrainedLsq, |_| {});
    let c = &exp.config;
    let sets = constraint_sets(c);
    ensure(c.dimension == 10 && sets.len() == 4, || "scenario is not N = 10, m = 4".into())?;
    let (q, b) = mean_quadratic(c);
    let step = 1.0 / largest_eigenvalue(&q);
    let mut x = DVector::zeros(c.dimension);
    for _ in 0..100_000 {
        let next = dykstra(&sets, &(&x - (&q * &x + &b) * step));
        let change = (&next - &x).norm();
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    let free = q.clone().lu().solve(&(-&b)).ok_or("singular mean quadratic")?;
    let shift = (&free - &x).norm();
    ensure(shift > 0.1, || format!("constraints barely matter: shift {shift}"))?;
    let (_, outcomes) = execute(&exp).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for o in &outcomes {
        let last = o.trajectory.last();
        let dist = (last - dykstra(&sets, last)).norm();
        let err = (&o.averaged - &x).norm();
        ensure(dist < 0.05, || format!("seed {}: domain distance {dist}", o.seed))?;
        ensure((dist - o.report.domain_distance_final).abs() < 1e-6, || format!("seed {}: reported distance {} vs {dist}", o.seed, o.report.domain_distance_final))?;
        ensure(err < 0.05, || format!("seed {}: averaged error {err}", o.seed))?;
        lines.push(format!("seed {}: dist {dist:.1e}, avg err {err:.3}", o.seed));
    }
    Ok(format!("oracle {shift:.2} from the unconstrained minimiser; {}", lines.join("; ")))
}

// 5 ---------------------------------------------------------------------

fn apt_trend() -> Result<String, String> {
    let exp = experiment(ScenarioId::DemipositiveQuadratic, |_| {});
    let d = &exp.config.diagnostics;
    ensure(d.apt_window == 2.0 && d.apt_times.len() == 5 && d.apt_times.windows(2).all(|w| w[1] > w[0]), || "APT setup differs".into())?;
    let (_, outcomes) = execute(&exp).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for o in &outcomes {
        let dev: Vec<f64> = o.report.apt.iter().map(|s| s.deviation).collect();
        let inversions = dev.windows(2).filter(|w| w[1] > w[0]).count();
        ensure(dev.len() == 5, || format!("seed {}: {} deviations", o.seed, dev.len()))?;
        ensure(inversions <= 1, || format!("seed {}: deviations {dev:?}", o.seed))?;
        ensure(dev[4] < 0.1, || format!("seed {}: last deviation {}", o.seed, dev[4]))?;
        let shown: Vec<String> = dev.iter().map(|x| format!("{x:.3}")).collect();
        lines.push(format!("seed {}: [{}]", o.seed, shown.join(", ")));
    }
    Ok(lines.join("; "))
}

// 6 ---------------------------------------------------------------------

fn program(a: Vec<(f64, CatalogAtom)>, b: CatalogAtom) -> RandomProgram {
    let a = a.into_iter().map(|(w, s)| (w, make_atom(&s).unwrap())).collect();
    RandomProgram::new(Family::Mixture(a), Family::single(make_atom(&b).unwrap())).unwrap()
}

fn flow_oracles() -> Result<String, String> {
    let tol = sfb_core::flow::DEFAULT_FLOW_TOL;
    let err = |e: sfb_core::Error| e.to_string();

    let decay = program(vec![(1.0, CatalogAtom::Zero { dim: 1 })], CatalogAtom::identity(1));
    let z1 = integrate_flow(&decay, &v(&[1.0]), 1.0, 1e-3, tol).map_err(err)?.last()[0];
    let e1 = (z1 - (-1f64).exp()).abs();
    ensure(e1 < 1e-3, || format!("z(1) = {z1}"))?;

    let exp = experiment(ScenarioId::Rotation, |_| {});
    let z0 = v(&[1.0, 0.0]);
    let end = integrate_flow(&exp.program, &z0, 1.0, 1e-4, tol).map_err(err)?;
    let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let exact = (-r).exp() * &z0;
    let e2 = (end.last() - &exact).norm();
    ensure(e2 < 1e-3, || format!("rotation endpoint off by {e2}"))?;

    // constrained, kinked and nonisotropic: the splitting path
    let split = program(
        vec![
            (0.4, CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::halfspace(v(&[1.0, 1.0]), 1.5).unwrap() }),
            (0.3, CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::ball(v(&[0.0, 0.0]), 3.0).unwrap() }),
            (0.3, CatalogAtom::L1Subdifferential { dim: 2, lambda: 0.4 }),
        ],
        CatalogAtom::QuadraticGradient { matrix: DMatrix::from_diagonal(&v(&[1.0, 3.0])), vector: v(&[-2.0, 1.0]) },
    );
    let h = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut semi, mut expand): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let mut draw = || split.project_essential(&DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0))).unwrap();
        let (a, b) = (draw(), draw());
        let s = rng.random_range(1..100) as f64 * h;
        let t = rng.random_range(1..100) as f64 * h;
        let whole = integrate_flow(&split, &a, s + t, h, tol).map_err(err)?;
        let first = integrate_flow(&split, &a, s, h, tol).map_err(err)?;
        let composed = integrate_flow(&split, first.last(), t, h, tol).map_err(err)?;
        semi = semi.max((whole.last() - composed.last()).norm());
        let other = integrate_flow(&split, &b, s + t, h, tol).map_err(err)?;
        for (p, q) in whole.points.iter().zip(&other.points) {
            expand = expand.max((p - q).norm() - (&a - &b).norm());
        }
    }
    ensure(semi <= 10.0 * tol, || format!("semigroup defect {semi:e}"))?;
    ensure(expand <= 10.0 * tol, || format!("expansion {expand:e}"))?;
    Ok(format!("|z(1) - 1/e| = {e1:.1e}, rotation error {e2:.1e}, semigroup defect {semi:.1e}, max expansion {expand:.1e}"))
}

// 7 ---------------------------------------------------------------------

fn audit_correctness() -> Result<String, String> {
    let h1 = DomainDescriptor::halfspace(v(&[-1.0, 0.0]), 0.0).unwrap();
    let h2 = DomainDescriptor::halfspace(v(&[0.0, -1.0]), 0.0).unwrap();
    let region = DomainDescriptor::boxed(v(&[-2.0, -2.0]), v(&[2.0, 2.0])).unwrap();
    let report = audit_linear_regularity(&[&h1, &h2], &region, 20_000, 7).map_err(|e| e.to_string())?;
    let kappa = report.estimates["kappa"];
    // grid search of max_i d(x, C_i) / d(x, C₁ ∩ C₂)
    let mut oracle = f64::INFINITY;
    let m = 400;
    for i in 0..=m {
        for j in 0..=m {
            let (x, y) = (-2.0 + 4.0 * i as f64 / m as f64, -2.0 + 4.0 * j as f64 / m as f64);
            let inter = (x.min(0.0).powi(2) + y.min(0.0).powi(2)).sqrt();
            if inter > 1e-9 {
                oracle = oracle.min((-x).max(0.0).max((-y).max(0.0)) / inter);
            }
        }
    }
    let target = 0.5f64.sqrt();
    ensure((kappa - target).abs() <= 0.02, || format!("kappa {kappa}"))?;
    ensure((oracle - target).abs() <= 0.02 && (kappa - oracle).abs() <= 0.02, || format!("grid oracle {oracle} vs kappa {kappa}"))?;

    let cubic = program(vec![(1.0, CatalogAtom::Zero { dim: 2 })], CatalogAtom::Cubic { dim: 2, coefficient: 1.0 });
    let bound = 5.0;
    let growth = audit_b_growth(&cubic, 1000, 5.0, 3, Some(bound)).map_err(|e| e.to_string())?;
    let w = v(growth.witness.as_deref().ok_or("growth audit gave no witness")?);
    let ratio = w.map(|t| t * t * t).norm() / (1.0 + w.norm());
    ensure(!growth.pass && ratio > bound, || format!("growth audit pass = {}, witness ratio {ratio}", growth.pass))?;
    // ∫‖b‖⁴ grows like ‖x‖⁴ for linear b, hence p = 2
    let linear = program(vec![(1.0, CatalogAtom::Zero { dim: 2 })], CatalogAtom::identity(2)).with_p(2.0).unwrap();
    ensure(audit_b_growth(&linear, 1000, 5.0, 3, None).map_err(|e| e.to_string())?.pass, || "linear b rejected".into())?;

    let cones = program(
        vec![
            (0.5, CatalogAtom::NormalCone { dim: 2, set: h1.clone() }),
            (0.25, CatalogAtom::NormalCone { dim: 2, set: region.clone() }),
            (0.25, CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::ball(v(&[1.0, 1.0]), 2.0).unwrap() }),
        ],
        CatalogAtom::Zero { dim: 2 },
    );
    let grid = vec![v(&[0.5, 0.5]), v(&[0.0, 1.0]), v(&[1.5, -0.3])];
    let gap = audit_resolvent_projection_gap(&cones, &grid, &[1.0, 0.1, 0.01, 0.001]).map_err(|e| e.to_string())?;
    let nonzero: Vec<_> = gap.estimates.iter().filter(|(_, v)| **v != 0.0).collect();
    ensure(nonzero.is_empty(), || format!("nonzero gap estimates {nonzero:?}"))?;

    let constrained = audits(&experiment(ScenarioId::ConstrainedLsq, |_| {})).map_err(|e| e.to_string())?;
    let reg = constrained.iter().find(|r| r.assumption == "linear_regularity").ok_or("no regularity report")?;
    ensure(reg.estimates["kappa"] > 0.0, || "constrained kappa is not positive".into())?;
    Ok(format!(
        "kappa {kappa:.4} (grid {oracle:.4}, target {target:.4}); cubic witness ratio {ratio:.1} > {bound}; cone gap 0; constrained kappa {:.3}",
        reg.estimates["kappa"]
    ))
}

// 8 ---------------------------------------------------------------------

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Result<String, String> {
    let mut lines = Vec::new();
    for id in ScenarioId::ALL {
        let exp = experiment(id, |_| {});
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&exp, a.path()).map_err(|e| e.to_string())?;
        run_experiment(&exp, b.path()).map_err(|e| e.to_string())?;
        let (fa, fb) = (files(a.path()), files(b.path()));
        ensure(fa.len() == fb.len(), || format!("{id}: file sets differ"))?;
        for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
            ensure(na == nb && ca == cb, || format!("{id}: {na} differs"))?;
        }
        lines.push(format!("{id}: {} files", fa.len()));
    }
    Ok(lines.join(", "))
}
