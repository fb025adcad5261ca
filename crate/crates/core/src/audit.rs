//! Checks of the convergence assumptions on a random program: exact
//! weighted sums for finite mixtures, Monte-Carlo estimates otherwise.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::domain::{distance_to_intersection, interior_probe, project_intersection, DomainDescriptor, INTERSECTION_MAX_CYCLES, INTERSECTION_TOL};
use crate::error::{Error, Result};
use crate::program::RandomProgram;
use crate::schedule::Schedule;

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub assumption: String,
    pub estimates: BTreeMap<String, f64>,
    pub samples: usize,
    pub grid: String,
    pub seed: Option<u64>,
    pub bound: Option<f64>,
    pub exact: bool,
    pub pass: bool,
    /// A point that violates the bound, when one was found.
    pub witness: Option<Vec<f64>>,
    pub note: String,
}

impl AuditReport {
    fn new(assumption: &str, grid: String, samples: usize, seed: Option<u64>, exact: bool) -> Self {
        AuditReport {
            assumption: assumption.to_string(),
            estimates: BTreeMap::new(),
            samples,
            grid,
            seed,
            bound: None,
            exact,
            pass: true,
            witness: None,
            note: String::new(),
        }
    }

    fn estimate(&mut self, key: &str, value: f64) {
        self.estimates.insert(key.to_string(), value);
    }
}

/// Below this intersection distance a sample is left out of the regularity
/// quotient.
pub const REGULARITY_FLOOR: f64 = 1e-9;

fn describe_grid(grid: &[DVector<f64>]) -> String {
    format!("{} explicit points", grid.len())
}

/// `sup_{x ∈ grid} ∫ ‖A_0(ξ, x)‖^{1+ε} dμ`, together with the same moment of
/// the `b` selection.
pub fn audit_compact_moment(program: &RandomProgram, grid: &[DVector<f64>], epsilon: f64, samples: usize, seed: u64) -> Result<AuditReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Precondition(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let exact = program.b_family().is_exact();
    let mut report = AuditReport::new("compact_moment", describe_grid(grid), grid.len(), Some(seed), exact);
    let power = 1.0 + epsilon;
    let mut a_sup: f64 = 0.0;
    let mut b_sup: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in grid {
        let mut a = 0.0;
        for (w, atom) in program.a_terms() {
            if w > 0.0 {
                if !atom.domain().contains(x) {
                    return Err(Error::Domain { distance: atom.domain().distance(x) });
                }
                a += w * atom.least_norm(x)?.norm().powf(power);
            }
        }
        let b = if exact {
            let mut b = 0.0;
            for (w, atom) in program.b_terms() {
                b += w * program.select_b(atom, x)?.norm().powf(power);
            }
            b
        } else {
            let mut stream = crate::program::InnovationStream::seeded(rng.random());
            let mut b = 0.0;
            for _ in 0..samples.max(1) {
                let d = program.sample(&mut stream)?;
                b += program.select_b(&d.b, x)?.norm().powf(power);
            }
            b / samples.max(1) as f64
        };
        a_sup = a_sup.max(a);
        b_sup = b_sup.max(b);
    }
    report.estimate("epsilon", epsilon);
    report.estimate("a_moment_sup", a_sup);
    report.estimate("b_moment_sup", b_sup);
    report.pass = a_sup.is_finite() && b_sup.is_finite();
    if !report.pass {
        report.note = "least-norm selection unbounded on the grid".into();
    }
    Ok(report)
}

fn uniform_in_box<R: Rng>(rng: &mut R, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>())
}

fn bounded_box(region: &DomainDescriptor) -> Result<(&DVector<f64>, &DVector<f64>)> {
    match region {
        DomainDescriptor::Box { lo, hi } if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) => Ok((lo, hi)),
        _ => Err(Error::Precondition("audit region must be a bounded box".into())),
    }
}

/// `κ̂ = min_x max_i d(x, C_i) / d(x, ∩C_i)` over uniform samples in
/// `region`, and `Ĉ = min_x mean_i d(x, C_i)² / d(x, ∩C_i)²`.
pub fn audit_linear_regularity(sets: &[&DomainDescriptor], region: &DomainDescriptor, samples: usize, seed: u64) -> Result<AuditReport> {
    let (lo, hi) = bounded_box(region)?;
    if sets.is_empty() {
        return Err(Error::Precondition("need at least one set".into()));
    }
    project_intersection(sets, &((lo + hi) / 2.0), INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)
        .map_err(|_| Error::Infeasible("the sets do not intersect".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport::new("linear_regularity", format!("{samples} uniform samples in the region box"), samples, Some(seed), false);
    let mut kappa = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    let mut c1 = f64::INFINITY;
    let mut used = 0usize;
    let m = sets.len() as f64;
    for _ in 0..samples {
        let x = uniform_in_box(&mut rng, lo, hi);
        let d = distance_to_intersection(sets, &x)?;
        if d <= REGULARITY_FLOOR {
            continue;
        }
        used += 1;
        let ds: Vec<f64> = sets.iter().map(|s| s.distance(&x)).collect();
        let max = ds.iter().cloned().fold(0.0, f64::max);
        kappa = kappa.min(max / d);
        c2 = c2.min(ds.iter().map(|v| v * v).sum::<f64>() / m / (d * d));
        c1 = c1.min(ds.iter().sum::<f64>() / m / d);
    }
    if used == 0 {
        kappa = 1.0;
        c2 = 1.0;
        c1 = 1.0;
        report.note = "no sample outside the intersection; quotient vacuous".into();
    }
    report.estimate("kappa", kappa);
    report.estimate("c_squared_mean", c2);
    report.estimate("c_mean", c1);
    report.estimate("samples_used", used as f64);
    report.pass = kappa > 0.0;
    Ok(report)
}

/// Linear regularity of the `A` domains of a program, weighted by the
/// mixture weights.
pub fn audit_program_regularity(program: &RandomProgram, region: &DomainDescriptor, samples: usize, seed: u64) -> Result<AuditReport> {
    let sets = program.domain_sets();
    let active: Vec<&DomainDescriptor> = sets.iter().copied().filter(|s| !s.is_full()).collect();
    if active.is_empty() {
        let mut r = AuditReport::new("linear_regularity", "full domains".into(), 0, Some(seed), true);
        r.estimate("kappa", 1.0);
        r.estimate("c_squared_weighted", 1.0);
        r.note = "all domains are the full space".into();
        return Ok(r);
    }
    let mut report = audit_linear_regularity(&active, region, samples, seed)?;
    let (lo, hi) = bounded_box(region)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<_> = program.a_terms().into_iter().filter(|(w, _)| *w > 0.0).collect();
    let mut c2w = f64::INFINITY;
    let mut c1w = f64::INFINITY;
    for _ in 0..samples {
        let x = uniform_in_box(&mut rng, lo, hi);
        let d = program.essential_distance(&x)?;
        if d <= REGULARITY_FLOOR {
            continue;
        }
        let s2: f64 = terms.iter().map(|(w, a)| w * a.domain().distance(&x).powi(2)).sum();
        let s1: f64 = terms.iter().map(|(w, a)| w * a.domain().distance(&x)).sum();
        c2w = c2w.min(s2 / (d * d));
        c1w = c1w.min(s1 / d);
    }
    if c2w.is_infinite() {
        c2w = 1.0;
        c1w = 1.0;
    }
    report.estimate("c_squared_weighted", c2w);
    report.estimate("c_weighted", c1w);
    report.pass = report.pass && c2w > 0.0;
    Ok(report)
}

fn uniform_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = g.norm().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g * (r / n)
}

struct GrowthScan {
    ratio: f64,
    moment_ratio: f64,
    witness: DVector<f64>,
    witness_ratio: f64,
}

fn growth_scan(program: &RandomProgram, samples: usize, radius: f64, seed: u64) -> Result<GrowthScan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = program.dim();
    let terms = program.b_terms();
    let p = program.p();
    let mut scan = GrowthScan { ratio: 0.0, moment_ratio: 0.0, witness: DVector::zeros(dim), witness_ratio: 0.0 };
    // Include the sphere itself, where superlinear growth is largest.
    for k in 0..samples {
        let mut x = uniform_in_ball(&mut rng, dim, radius);
        if k % 2 == 0 && x.norm() > 0.0 {
            x *= radius / x.norm();
        }
        let mut fourth = 0.0;
        for (w, atom) in &terms {
            let b = program.select_b(atom, &x)?;
            let r = b.norm() / (1.0 + x.norm());
            if r > scan.ratio {
                scan.ratio = r;
            }
            if r > scan.witness_ratio {
                scan.witness_ratio = r;
                scan.witness = x.clone();
            }
            fourth += w * b.norm().powi(4);
        }
        scan.moment_ratio = scan.moment_ratio.max(fourth / (1.0 + x.norm().powf(2.0 * p)));
    }
    Ok(scan)
}

/// `M̂ = sup ‖b(ξ, x)‖ / (1 + ‖x‖)` and `sup ∫‖b‖⁴ / (1 + ‖x‖^{2p})` over
/// samples in the ball of radius `radius`. Without a declared bound, growth
/// is judged superlinear when doubling the radius multiplies `M̂` by more
/// than 1.5; the same doubling test is applied to the moment ratio.
pub fn audit_b_growth(program: &RandomProgram, samples: usize, radius: f64, seed: u64, declared_bound: Option<f64>) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Precondition("growth audit needs samples >= 1".into()));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Precondition(format!("radius must be positive, got {radius}")));
    }
    let exact = program.b_family().is_exact();
    let mut report = AuditReport::new("b_growth", format!("{samples} samples in balls of radius {radius} and {}", 2.0 * radius), samples, Some(seed), exact);
    let near = growth_scan(program, samples, radius, seed)?;
    let far = growth_scan(program, samples, 2.0 * radius, seed)?;
    report.estimate("m_hat", near.ratio);
    report.estimate("m_hat_doubled", far.ratio);
    report.estimate("moment_ratio", near.moment_ratio);
    report.estimate("moment_ratio_doubled", far.moment_ratio);
    report.estimate("p", program.p());
    let linear_ok = match declared_bound {
        Some(bound) => {
            report.bound = Some(bound);
            far.ratio <= bound
        }
        None => far.ratio <= 1.5 * near.ratio + 1e-12,
    };
    let moment_ok = far.moment_ratio <= 1.5 * near.moment_ratio + 1e-12;
    if !linear_ok {
        report.witness = Some(far.witness.iter().cloned().collect());
        report.note = format!("‖b(x)‖/(1+‖x‖) = {:e} at the witness", far.witness_ratio);
    } else if !moment_ok {
        report.note = "fourth moment grows faster than 1 + ‖x‖^{2p}; increase p".into();
    }
    report.pass = linear_ok && moment_ok;
    Ok(report)
}

/// `γ⁻⁴ ∫ ‖J_γ(ξ, x) - Π(ξ, x)‖⁴ dμ / (1 + ‖x‖^{2p})` for each `γ`, maximised
/// over the grid. Passes when the ratios stay bounded as `γ` decreases (the
/// value at the smallest step is within a factor 2 of the largest seen at
/// the other steps, or everything is 0).
pub fn audit_resolvent_projection_gap(program: &RandomProgram, grid: &[DVector<f64>], gammas: &[f64]) -> Result<AuditReport> {
    if gammas.is_empty() {
        return Err(Error::Precondition("gammas must be non-empty".into()));
    }
    let mut report = AuditReport::new("resolvent_projection_gap", describe_grid(grid), grid.len() * gammas.len(), None, true);
    let p = program.p();
    let mut sorted = gammas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut ratios = Vec::with_capacity(sorted.len());
    for &g in &sorted {
        let mut worst: f64 = 0.0;
        for x in grid {
            let mut acc = 0.0;
            for (w, atom) in program.a_terms() {
                if w > 0.0 {
                    let gap = (atom.resolvent(g, x)? - atom.project_domain(x)?).norm();
                    acc += w * gap.powi(4);
                }
            }
            worst = worst.max(acc / g.powi(4) / (1.0 + x.norm().powf(2.0 * p)));
        }
        report.estimate(&format!("ratio_gamma_{g:e}"), worst);
        ratios.push(worst);
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    report.estimate("max_ratio", max);
    let last = *ratios.last().unwrap();
    let others = ratios[..ratios.len() - 1].iter().cloned().fold(0.0, f64::max);
    report.pass = max.is_finite() && (ratios.len() == 1 || last <= 2.0 * others + 1e-300 || max == 0.0);
    Ok(report)
}

/// Nonempty interior of `𝒟` and a ball inside it on which `∫‖A_0‖dμ` is
/// bounded.
pub fn audit_interior(program: &RandomProgram, start: &DVector<f64>, iterations: usize) -> Result<AuditReport> {
    let sets = program.domain_sets();
    let mut report = AuditReport::new("interior", format!("{iterations} ascent steps on the depth"), iterations, None, true);
    let (center, depth) = interior_probe(&sets, start, iterations)?;
    report.estimate("depth", depth.min(f64::MAX));
    if depth > 0.0 {
        let radius = depth.min(1.0) / 2.0;
        let mut bound: f64 = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..64 {
            let x = &center + uniform_in_ball(&mut rng, program.dim(), radius);
            let mut acc = 0.0;
            for (w, atom) in program.a_terms() {
                if w > 0.0 {
                    acc += w * atom.least_norm(&x)?.norm();
                }
            }
            bound = bound.max(acc);
        }
        report.estimate("ball_radius", radius);
        report.estimate("mean_least_norm_sup", bound);
        report.witness = Some(center.iter().cloned().collect());
        report.pass = bound.is_finite();
    } else {
        report.pass = false;
        report.note = "no interior point found".into();
    }
    Ok(report)
}

/// `|γ_{n+1}/γ_n - 1| <= a/(n + n₀)` for `n < horizon`.
pub fn audit_step_ratio(schedule: &Schedule, horizon: usize) -> AuditReport {
    let mut report = AuditReport::new("step_ratio", format!("n = 1..{horizon}"), horizon, None, true);
    let mut worst: f64 = 0.0;
    let mut last = 0.0;
    for n in 1..horizon.max(2) {
        let dev = (schedule.gamma(n + 1) / schedule.gamma(n) - 1.0).abs();
        worst = worst.max(dev - schedule.ratio_bound(n));
        last = dev;
    }
    report.estimate("max_excess", worst);
    report.estimate("final_deviation", last);
    report.pass = worst <= 1e-15 && schedule.validate().is_ok();
    report
}

/// Zero existence with a representation: checks a candidate `x⋆`.
pub fn audit_zero_representation(program: &RandomProgram, x_star: &DVector<f64>, tol: f64) -> Result<AuditReport> {
    let mut report = AuditReport::new("zero_representation", "candidate zero".into(), 1, None, program.b_family().is_exact());
    let p = program.project_essential(x_star)?;
    let cert = program.zero_certificate(&p, tol)?;
    let residual = program.mean_a_distance_to_zero(&p, crate::program::MINKOWSKI_TOL)?;
    report.estimate("residual", residual);
    report.estimate("tolerance", tol);
    report.bound = Some(tol);
    report.witness = Some(p.iter().cloned().collect());
    if let Some(c) = cert {
        let moment = |vs: &[DVector<f64>], ws: Vec<f64>| vs.iter().zip(ws).map(|(v, w)| w * v.norm().powf(2.0 * program.p())).sum::<f64>();
        report.estimate("phi_moment", moment(&c.phi, program.a_terms().iter().map(|(w, _)| *w).collect()));
        report.estimate("psi_moment", moment(&c.psi, program.b_terms().iter().map(|(w, _)| *w).collect()));
        report.pass = true;
    } else {
        report.pass = false;
        report.note = "no certificate within tolerance".into();
    }
    Ok(report)
}
