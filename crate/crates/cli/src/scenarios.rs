//! Built-in scenarios. Each id expands to a complete config; random problem
//! data is drawn from fixed seeds so the configs never change.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sfb_core::DMatrix;

use crate::config::{
    AcceptanceSpec, AtomSpec, AuditSpec, DiagnosticsSpec, ExperimentConfig, ProgramSpec, RunSpec, ScheduleSpec,
    SelectionSpec, SetSpec, WeightedAtom, SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Rotation,
    ConstrainedLsq,
    LassoRandom,
    DemipositiveQuadratic,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] =
        [ScenarioId::Rotation, ScenarioId::ConstrainedLsq, ScenarioId::LassoRandom, ScenarioId::DemipositiveQuadratic];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Rotation => "rotation",
            ScenarioId::ConstrainedLsq => "constrained-lsq",
            ScenarioId::LassoRandom => "lasso-random",
            ScenarioId::DemipositiveQuadratic => "demipositive-quadratic",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        match self {
            ScenarioId::Rotation => rotation(),
            ScenarioId::ConstrainedLsq => constrained_lsq(),
            ScenarioId::LassoRandom => lasso_random(),
            ScenarioId::DemipositiveQuadratic => demipositive_quadratic(),
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}; expected one of rotation, constrained-lsq, lasso-random, demipositive-quadratic"))
    }
}

const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn weighted(weight: f64, atom: AtomSpec) -> WeightedAtom {
    WeightedAtom { weight, atom }
}

fn base(name: &str, dimension: usize, program: ProgramSpec, n_iters: usize) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        scenario: Some(name.to_string()),
        dimension,
        program,
        schedule: ScheduleSpec::default(),
        run: RunSpec { n_iters, x0: vec![0.0; dimension], seeds: DEFAULT_SEEDS.to_vec(), thin_cap: Some(20_000) },
        diagnostics: DiagnosticsSpec::default(),
        acceptance: AcceptanceSpec::default(),
        audit: AuditSpec::default(),
        output: None,
    }
}

/// `A` a random rescaling of the quarter turn with mean the quarter turn,
/// `B = 0`. The iterates keep circling while their weighted means converge.
fn rotation() -> ExperimentConfig {
    let turn = |factor: f64| AtomSpec::Scaled {
        factor,
        inner: Box::new(AtomSpec::SkewLinear { matrix: vec![vec![0.0, -1.0], vec![1.0, 0.0]] }),
    };
    let program = ProgramSpec {
        p: 1.0,
        b_selection: SelectionSpec::LeastNorm,
        a: vec![weighted(0.5, turn(0.5)), weighted(0.5, turn(1.5))],
        b: vec![weighted(1.0, AtomSpec::Zero)],
        b_sampler: None,
    };
    let mut c = base("rotation", 2, program, 100_000);
    c.run.x0 = vec![1.0, 0.0];
    c.diagnostics.x_star = Some(vec![0.0, 0.0]);
    c.acceptance.tail_oscillation_min = Some(0.1);
    c.acceptance.averaged_residual_max = Some(0.05);
    c.acceptance.averaged_error_max = Some(0.05);
    c.audit.grid = Some(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 2.0]]);
    c
}

/// Random orthogonal matrix from the QR factorisation of a Gaussian one.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, normals(rng, n * n));
    g.qr().q()
}

/// `A` an ℓ₁ term with random weight, `B` a random strongly monotone
/// quadratic; the mean problem has a dense known zero.
fn demipositive_quadratic() -> ExperimentConfig {
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let x_star: Vec<f64> = (0..n).map(|_| {
        let v = normal(&mut rng);
        v.signum() * (0.3 + 0.7 * v.abs())
    }).collect();
    let xs = sfb_core::DVector::from_column_slice(&x_star);
    let mut matrices = Vec::new();
    let mut mean = DMatrix::zeros(n, n);
    for _ in 0..4 {
        let u = orthogonal(&mut rng, n);
        let eig = sfb_core::DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let q = &u * DMatrix::from_diagonal(&eig) * u.transpose();
        let q = (&q + q.transpose()) * 0.5;
        mean += &q * 0.25;
        matrices.push(q);
    }
    let lambda_mean = 0.1;
    let sign = xs.map(f64::signum);
    let q_mean = -(&mean * &xs) - sign * lambda_mean;
    let mut shifts: Vec<sfb_core::DVector<f64>> = (0..4).map(|_| sfb_core::DVector::from_vec(normals(&mut rng, n)) * 0.5).collect();
    let centre = shifts.iter().fold(sfb_core::DVector::zeros(n), |a, s| a + s) / 4.0;
    for s in &mut shifts {
        *s -= &centre;
        *s += &q_mean;
    }
    let b = matrices
        .iter()
        .zip(&shifts)
        .map(|(q, v)| weighted(0.25, AtomSpec::Quadratic { matrix: Some(rows(q)), diagonal: None, vector: Some(v.iter().copied().collect()) }))
        .collect();
    let program = ProgramSpec {
        p: 2.0,
        b_selection: SelectionSpec::LeastNorm,
        a: vec![weighted(0.5, AtomSpec::L1 { lambda: 0.05 }), weighted(0.5, AtomSpec::L1 { lambda: 0.15 })],
        b,
        b_sampler: None,
    };
    let mut c = base("demipositive-quadratic", n, program, 100_000);
    // interpolation needs every iterate
    c.run.thin_cap = None;
    c.diagnostics.x_star = Some(x_star);
    c.diagnostics.apt_window = 2.0;
    c.diagnostics.apt_times = vec![1.0, 4.0, 10.0, 25.0, 60.0];
    c.acceptance.final_residual_max = Some(0.05);
    c.acceptance.final_error_max = Some(0.05);
    c.acceptance.apt_last_max = Some(0.1);
    c.acceptance.apt_max_inversions = Some(1);
    c
}

/// Least squares over a box intersected with three halfspaces. Each step
/// uses one random block of observations and one random constraint.
fn constrained_lsq() -> ExperimentConfig {
    let n = 10;
    let blocks = 20;
    let rows_per_block = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let x_true: Vec<f64> = normals(&mut rng, n).into_iter().map(|v| 0.6 * v).collect();
    let xt = sfb_core::DVector::from_column_slice(&x_true);
    let mut b = Vec::new();
    for _ in 0..blocks {
        let a = DMatrix::from_vec(rows_per_block, n, normals(&mut rng, rows_per_block * n)) / (rows_per_block as f64).sqrt();
        let y = &a * &xt + sfb_core::DVector::from_vec(normals(&mut rng, rows_per_block)) * 0.1;
        let q = a.transpose() * &a;
        let q = (&q + q.transpose()) * 0.5;
        let v = -(a.transpose() * y);
        b.push(weighted(1.0 / blocks as f64, AtomSpec::Quadratic { matrix: Some(rows(&q)), diagonal: None, vector: Some(v.iter().copied().collect()) }));
    }
    let offsets = [0.1, 0.2, 0.0];
    let mut a = vec![weighted(0.25, AtomSpec::NormalCone { set: SetSpec::Box { lo: vec![-0.5; n], hi: vec![0.5; n] } })];
    for offset in offsets {
        let h = sfb_core::DVector::from_vec(normals(&mut rng, n)).normalize();
        a.push(weighted(0.25, AtomSpec::NormalCone { set: SetSpec::Halfspace { normal: h.iter().copied().collect(), offset } }));
    }
    let program = ProgramSpec { p: 2.0, b_selection: SelectionSpec::LeastNorm, a, b, b_sampler: None };
    let mut c = base("constrained-lsq", n, program, 100_000);
    // a slower decay leaves more time to forget the transient in the mean
    c.schedule = ScheduleSpec { gamma0: 0.5, a: 0.6, n0: 10.0 };
    c.acceptance.domain_distance_max = Some(0.05);
    c.acceptance.averaged_error_max = Some(0.05);
    c.audit.region_radius = 2.0;
    c
}

/// ℓ₁-regularised least squares; each step uses one random observation.
fn lasso_random() -> ExperimentConfig {
    let n = 20;
    let samples = 50;
    let lambda = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut x_true = vec![0.0; n];
    for v in x_true.iter_mut().take(5) {
        *v = normal(&mut rng);
    }
    let mut b = Vec::new();
    for _ in 0..samples {
        let features = normals(&mut rng, n);
        let target = features.iter().zip(&x_true).map(|(a, x)| a * x).sum::<f64>() + 0.05 * normal(&mut rng);
        b.push(weighted(1.0 / samples as f64, AtomSpec::LinearRegression { features, target }));
    }
    let program = ProgramSpec { p: 2.0, b_selection: SelectionSpec::LeastNorm, a: vec![weighted(1.0, AtomSpec::L1 { lambda })], b, b_sampler: None };
    let mut c = base("lasso-random", n, program, 100_000);
    // γ_1 ‖a‖² is about 1 with unit-variance features
    c.schedule.n0 = 50.0;
    c.acceptance.final_error_max = Some(0.05);
    c
}
