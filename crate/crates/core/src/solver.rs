//! The stochastic forward-backward iteration
//! `x_{n+1} = J_{γ_{n+1}}(u_{n+1}, x_n - γ_{n+1} b(u_{n+1}, x_n))`, its
//! trajectories, affine interpolation and weighted empirical means.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::program::{InnovationRecord, InnovationStream, RandomProgram};
use crate::schedule::Schedule;
use crate::{ensure_dim, ensure_finite};

/// Iterates with norm above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// One forward-backward step with a fresh innovation.
pub fn step(
    program: &RandomProgram,
    gamma: f64,
    x: &DVector<f64>,
    stream: &mut InnovationStream,
) -> Result<(DVector<f64>, InnovationRecord)> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Precondition(format!("step gamma must be positive, got {gamma}")));
    }
    ensure_dim(x, program.dim())?;
    ensure_finite(x, "iterate")?;
    let draw = program.sample(stream)?;
    let b = program.select_b(&draw.b, x)?;
    let forward = x - b * gamma;
    ensure_finite(&forward, "forward step")?;
    let next = draw.a.resolvent(gamma, &forward)?;
    Ok((next, draw.record))
}

/// Memory control for long runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// If set and the run is longer, only every `k`-th iterate of the first
    /// 90% is stored (about `thin_cap` of them); the last 10% are all kept.
    pub thin_cap: Option<usize>,
}

/// Recorded run: stored iterates with their times, steps and innovations.
///
/// Rows are stored at increasing iteration indices; without thinning every
/// index `0..=n` is present. `gamma` at row `n` is `γ_n` (0 at `n = 0`) and
/// `tau` is `τ_n` (0 at `n = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    iterations: Vec<usize>,
    points: Vec<DVector<f64>>,
    taus: Vec<f64>,
    gammas: Vec<f64>,
    row_records: Vec<Option<InnovationRecord>>,
    innovations: Option<Vec<InnovationRecord>>,
    means: Option<Vec<Option<DVector<f64>>>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of iterations `n` (the last iteration index).
    pub fn n_iters(&self) -> usize {
        *self.iterations.last().expect("trajectories hold x_0")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("trajectories hold x_0")
    }

    pub fn tau_last(&self) -> f64 {
        *self.taus.last().expect("trajectories hold x_0")
    }

    pub fn is_thinned(&self) -> bool {
        self.iterations.len() != self.n_iters() + 1
    }

    /// Innovation records of all iterations, if known.
    pub fn innovations(&self) -> Option<&[InnovationRecord]> {
        self.innovations.as_deref()
    }

    /// Innovation record of each stored row (`None` at `n = 0`).
    pub fn row_records(&self) -> &[Option<InnovationRecord>] {
        &self.row_records
    }

    /// `x(t)`: affine interpolation between consecutive iterates.
    pub fn interpolate(&self, t: f64) -> Result<DVector<f64>> {
        let hi = self.tau_last();
        if !(0.0..=hi).contains(&t) {
            return Err(Error::Range { t, lo: 0.0, hi });
        }
        let j = self.taus.partition_point(|&s| s <= t) - 1;
        if self.taus[j] == t || j + 1 == self.len() {
            return Ok(self.points[j].clone());
        }
        if self.iterations[j + 1] != self.iterations[j] + 1 {
            return Err(Error::Thinned(t));
        }
        let frac = (t - self.taus[j]) / self.gammas[j + 1];
        Ok(&self.points[j] + (&self.points[j + 1] - &self.points[j]) * frac)
    }

    /// Weighted empirical means `x̄_n = Σ_{k<=n} γ_k x_k / Σ_{k<=n} γ_k` at
    /// every stored row with `n >= 1`, paired with `n`.
    pub fn averaged(&self) -> Result<Vec<(usize, DVector<f64>)>> {
        let means = self.means.as_ref().ok_or(Error::Thinned(0.0))?;
        Ok(self
            .iterations
            .iter()
            .zip(means)
            .filter_map(|(n, m)| m.as_ref().map(|m| (*n, m.clone())))
            .collect())
    }

    /// `x̄_n` at the last iteration.
    pub fn averaged_last(&self) -> Result<DVector<f64>> {
        let means = self.means.as_ref().ok_or(Error::Thinned(0.0))?;
        means
            .last()
            .cloned()
            .flatten()
            .ok_or_else(|| Error::Precondition("averaging needs at least one iteration".into()))
    }

    /// Stored rows whose iteration index is at least `from`.
    pub fn rows_from(&self, from: usize) -> usize {
        self.iterations.partition_point(|&n| n < from)
    }

    /// Writes `n, tau, gamma, x_0..x_{N-1}, sampled_index`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n".to_string(), "tau".into(), "gamma".into()];
        header.extend((0..self.dim).map(|i| format!("x_{i}")));
        header.push("sampled_index".into());
        w.write_record(&header).map_err(io_err)?;
        for r in 0..self.len() {
            let mut row = vec![self.iterations[r].to_string(), fmt_f64(self.taus[r]), fmt_f64(self.gammas[r])];
            row.extend(self.points[r].iter().map(|v| fmt_f64(*v)));
            row.push(self.row_records[r].map(|rec| rec.to_string()).unwrap_or_default());
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::State(e.to_string()))?;
        Ok(())
    }

    /// Parses the format written by [`Trajectory::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(io_err)?.clone();
        let cols = header.len();
        if cols < 5 || &header[0] != "n" || &header[1] != "tau" || &header[2] != "gamma" || &header[cols - 1] != "sampled_index" {
            return Err(Error::State("unexpected trajectory header".into()));
        }
        let dim = cols - 4;
        let bad = |what: &str| Error::State(format!("malformed trajectory field {what}"));
        let mut t = Trajectory::empty(dim);
        for rec in r.records() {
            let rec = rec.map_err(io_err)?;
            t.iterations.push(rec[0].parse().map_err(|_| bad("n"))?);
            t.taus.push(rec[1].parse().map_err(|_| bad("tau"))?);
            t.gammas.push(rec[2].parse().map_err(|_| bad("gamma"))?);
            let x = (0..dim).map(|i| rec[3 + i].parse::<f64>().map_err(|_| bad("x"))).collect::<Result<Vec<_>>>()?;
            t.points.push(DVector::from_vec(x));
            let s = &rec[cols - 1];
            t.row_records.push(if s.is_empty() { None } else { Some(s.parse()?) });
        }
        if t.points.is_empty() {
            return Err(Error::State("trajectory has no rows".into()));
        }
        if !t.is_thinned() {
            t.innovations = Some(t.row_records.iter().skip(1).map(|r| r.ok_or_else(|| bad("sampled_index"))).collect::<Result<_>>()?);
            let mut acc = RunningMean::new(dim);
            let mut means = vec![None];
            for k in 1..t.len() {
                means.push(Some(acc.push(t.gammas[k], &t.points[k])));
            }
            t.means = Some(means);
        }
        Ok(t)
    }

    fn empty(dim: usize) -> Self {
        Trajectory {
            dim,
            iterations: Vec::new(),
            points: Vec::new(),
            taus: Vec::new(),
            gammas: Vec::new(),
            row_records: Vec::new(),
            innovations: None,
            means: Some(Vec::new()),
        }
    }

    /// Builds an unthinned trajectory from explicit iterates and steps
    /// `γ_1..γ_n`, e.g. a sampled flow path.
    pub fn from_points(points: Vec<DVector<f64>>, gammas: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() != gammas.len() + 1 {
            return Err(Error::Precondition("need len(points) = len(gammas) + 1 >= 1".into()));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Precondition("steps must be positive".into()));
        }
        let dim = points[0].len();
        let mut t = Trajectory::empty(dim);
        let mut acc = RunningMean::new(dim);
        let mut tau = 0.0;
        for (k, x) in points.into_iter().enumerate() {
            ensure_dim(&x, dim)?;
            let g = if k == 0 { 0.0 } else { gammas[k - 1] };
            tau += g;
            t.means.as_mut().unwrap().push((k > 0).then(|| acc.push(g, &x)));
            t.iterations.push(k);
            t.taus.push(tau);
            t.gammas.push(g);
            t.points.push(x);
            t.row_records.push(None);
        }
        Ok(t)
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::State(format!("csv: {e}"))
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

struct RunningMean {
    weighted: DVector<f64>,
    total: f64,
}

impl RunningMean {
    fn new(dim: usize) -> Self {
        RunningMean { weighted: DVector::zeros(dim), total: 0.0 }
    }

    fn push(&mut self, gamma: f64, x: &DVector<f64>) -> DVector<f64> {
        self.weighted += x * gamma;
        self.total += gamma;
        &self.weighted / self.total
    }
}

/// Runs `n_iters` steps from `x0` with innovations seeded by `seed`.
pub fn run(program: &RandomProgram, schedule: &Schedule, n_iters: usize, x0: &DVector<f64>, seed: u64) -> Result<Trajectory> {
    run_with(program, schedule, n_iters, x0, InnovationStream::seeded(seed), RunOptions::default())
}

/// Re-runs the iteration with recorded innovations.
pub fn replay(program: &RandomProgram, schedule: &Schedule, x0: &DVector<f64>, records: &[InnovationRecord]) -> Result<Trajectory> {
    run_with(program, schedule, records.len(), x0, InnovationStream::replay(records.to_vec()), RunOptions::default())
}

pub fn run_with(
    program: &RandomProgram,
    schedule: &Schedule,
    n_iters: usize,
    x0: &DVector<f64>,
    mut stream: InnovationStream,
    options: RunOptions,
) -> Result<Trajectory> {
    if n_iters == 0 {
        return Err(Error::Precondition("n_iters must be >= 1".into()));
    }
    schedule.validate()?;
    ensure_dim(x0, program.dim())?;
    ensure_finite(x0, "initial point")?;
    let tail_start = n_iters - n_iters / 10;
    let stride = match options.thin_cap {
        Some(cap) if n_iters + 1 > cap => tail_start.div_ceil(cap.max(1)).max(1),
        _ => 1,
    };
    let mut t = Trajectory::empty(program.dim());
    let mut innovations = Vec::with_capacity(n_iters);
    let mut acc = RunningMean::new(program.dim());
    let mut x = x0.clone();
    let mut tau = 0.0;
    t.iterations.push(0);
    t.taus.push(0.0);
    t.gammas.push(0.0);
    t.points.push(x.clone());
    t.row_records.push(None);
    t.means.as_mut().unwrap().push(None);
    for n in 1..=n_iters {
        let gamma = schedule.gamma(n);
        let (next, record) = step(program, gamma, &x, &mut stream)?;
        let norm = next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence { iteration: n, norm });
        }
        x = next;
        tau += gamma;
        innovations.push(record);
        let mean = acc.push(gamma, &x);
        if n % stride == 0 || n >= tail_start {
            t.iterations.push(n);
            t.taus.push(tau);
            t.gammas.push(gamma);
            t.points.push(x.clone());
            t.row_records.push(Some(record));
            t.means.as_mut().unwrap().push(Some(mean));
        }
    }
    t.innovations = Some(innovations);
    Ok(t)
}
