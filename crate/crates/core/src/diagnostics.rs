//! Trajectory diagnostics: deviation from the mean flow, Fejér series,
//! distance to the essential domain, zero residuals and tail oscillation.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{integrate_flow, MIN_GRID_POINTS};
use crate::program::RandomProgram;
use crate::solver::Trajectory;

/// One window of the deviation from the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AptSample {
    pub t: f64,
    /// Grid supremum of `‖x(t + s) - Φ(proj(x(t)), s)‖` over `s ∈ [0, T]`;
    /// a lower bound of the continuous supremum.
    pub deviation: f64,
    /// `𝒅(x(t))`, the distance removed by the initial projection.
    pub projection_distance: f64,
    pub grid_points: usize,
}

/// Deviation of the interpolated process from the flow started at the
/// projection of `x(t)`, for each `t` in `times`. The flow step is reduced
/// so that each window has at least 100 grid intervals.
pub fn apt_deviation(
    traj: &Trajectory,
    program: &RandomProgram,
    window: f64,
    times: &[f64],
    flow_h: f64,
    flow_tol: f64,
) -> Result<Vec<AptSample>> {
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::Precondition(format!("window must be >= 0, got {window}")));
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let end = t + window;
        if !(t >= 0.0 && end <= traj.tau_last()) {
            return Err(Error::Range { t: end, lo: 0.0, hi: traj.tau_last() });
        }
        let x = traj.interpolate(t)?;
        let z0 = program.project_essential(&x)?;
        let projection_distance = (&x - &z0).norm();
        if window == 0.0 {
            out.push(AptSample { t, deviation: projection_distance, projection_distance, grid_points: 1 });
            continue;
        }
        let h = flow_h.min(window / MIN_GRID_POINTS as f64);
        let flow = integrate_flow(program, &z0, window, h, flow_tol)?;
        let mut deviation: f64 = 0.0;
        for (s, z) in flow.times.iter().zip(&flow.points) {
            let xs = traj.interpolate((t + s).min(traj.tau_last()))?;
            deviation = deviation.max((xs - z).norm());
        }
        out.push(AptSample { t, deviation, projection_distance, grid_points: flow.points.len() });
    }
    Ok(out)
}

/// Number of strict increases in a series.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

/// `‖x_n - x⋆‖` per stored row, paired with `n`.
pub fn fejer_series(traj: &Trajectory, x_star: &DVector<f64>) -> Result<Vec<(usize, f64)>> {
    crate::ensure_dim(x_star, traj.dim())?;
    Ok(traj.iterations().iter().zip(traj.points()).map(|(n, x)| (*n, (x - x_star).norm())).collect())
}

/// `𝒅(x_n)` per stored row, paired with `n`.
pub fn domain_distance_series(traj: &Trajectory, program: &RandomProgram) -> Result<Vec<(usize, f64)>> {
    if traj.dim() != program.dim() {
        return Err(Error::Dimension { expected: program.dim(), got: traj.dim() });
    }
    traj.iterations()
        .iter()
        .zip(traj.points())
        .map(|(n, x)| Ok((*n, program.essential_distance(x)?)))
        .collect()
}

/// Largest distance between two stored iterates with index at least
/// `(1 - tail_fraction) n`.
pub fn tail_oscillation(traj: &Trajectory, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Precondition(format!("tail fraction must lie in (0, 1), got {tail_fraction}")));
    }
    if traj.n_iters() <= 10 {
        return Err(Error::Precondition("tail oscillation needs more than 10 iterations".into()));
    }
    let from = ((1.0 - tail_fraction) * traj.n_iters() as f64).ceil() as usize;
    let tail = &traj.points()[traj.rows_from(from)..];
    let mut best: f64 = 0.0;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    Ok(best)
}

/// `dist(0, (𝒜+ℬ)(proj(x)))`.
pub fn zero_residual(program: &RandomProgram, x: &DVector<f64>) -> Result<f64> {
    let p = program.project_essential(x)?;
    program.mean_a_distance_to_zero(&p, crate::program::MINKOWSKI_TOL)
}

/// Settings for [`diagnose`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsOptions {
    pub apt_window: f64,
    pub apt_times: Vec<f64>,
    pub flow_h: f64,
    pub flow_tol: f64,
    pub tail_fraction: f64,
    pub x_star: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub apt: Vec<AptSample>,
    pub fejer: Option<Vec<(usize, f64)>>,
    pub domain_distance: Vec<(usize, f64)>,
    pub final_residual: f64,
    pub averaged_final_residual: f64,
    pub tail_oscillation: f64,
    pub domain_distance_final: f64,
}

pub fn diagnose(traj: &Trajectory, program: &RandomProgram, opts: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    let apt = if opts.apt_times.is_empty() {
        Vec::new()
    } else {
        apt_deviation(traj, program, opts.apt_window, &opts.apt_times, opts.flow_h, opts.flow_tol)?
    };
    let fejer = opts.x_star.as_ref().map(|x| fejer_series(traj, x)).transpose()?;
    let domain_distance = domain_distance_series(traj, program)?;
    let domain_distance_final = domain_distance.last().map(|(_, d)| *d).unwrap_or(0.0);
    Ok(DiagnosticsReport {
        apt,
        fejer,
        domain_distance,
        final_residual: zero_residual(program, traj.last())?,
        averaged_final_residual: zero_residual(program, &traj.averaged_last()?)?,
        tail_oscillation: tail_oscillation(traj, opts.tail_fraction)?,
        domain_distance_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{make_atom, CatalogAtom};
    use crate::domain::DomainDescriptor;
    use crate::program::Family;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn constant(c: DVector<f64>, n: usize) -> Trajectory {
        Trajectory::from_points(vec![c; n + 1], &vec![1.0; n]).unwrap()
    }

    fn quadrant_program() -> RandomProgram {
        let c1 = make_atom(&CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::halfspace(v(&[-1.0, 0.0]), 0.0).unwrap() }).unwrap();
        let c2 = make_atom(&CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::halfspace(v(&[0.0, -1.0]), 0.0).unwrap() }).unwrap();
        let zero = make_atom(&CatalogAtom::Zero { dim: 2 }).unwrap();
        RandomProgram::new(Family::Mixture(vec![(0.5, c1), (0.5, c2)]), Family::single(zero)).unwrap()
    }

    #[test]
    fn fejer_examples() {
        let t = constant(v(&[2.0]), 5);
        assert!(fejer_series(&t, &v(&[2.0])).unwrap().iter().all(|(_, d)| *d == 0.0));
        let t = Trajectory::from_points(vec![v(&[0.0]), v(&[0.5])], &[1.0]).unwrap();
        assert_eq!(fejer_series(&t, &v(&[1.0])).unwrap(), vec![(0, 1.0), (1, 0.5)]);
    }

    #[test]
    fn tail_oscillation_examples() {
        assert_eq!(tail_oscillation(&constant(v(&[1.0, 1.0]), 20), 0.1).unwrap(), 0.0);
        let pts: Vec<_> = (0..=20).map(|k| if k % 2 == 0 { v(&[1.0, 0.0]) } else { v(&[-1.0, 0.0]) }).collect();
        let t = Trajectory::from_points(pts, &[1.0; 20]).unwrap();
        assert_eq!(tail_oscillation(&t, 0.5).unwrap(), 2.0);
        assert!(tail_oscillation(&constant(v(&[0.0]), 5), 0.1).is_err());
    }

    #[test]
    fn domain_distance_examples() {
        let zero = make_atom(&CatalogAtom::Zero { dim: 2 }).unwrap();
        let full = RandomProgram::new(Family::single(zero.clone()), Family::single(zero)).unwrap();
        let t = Trajectory::from_points(vec![v(&[3.0, -4.0]), v(&[-1.0, -1.0])], &[1.0]).unwrap();
        assert!(domain_distance_series(&t, &full).unwrap().iter().all(|(_, d)| *d == 0.0));
        let d = domain_distance_series(&t, &quadrant_program()).unwrap();
        assert!((d[1].1 - 2f64.sqrt()).abs() < 1e-12);
        assert!((d[0].1 - 4.0).abs() < 1e-12);
        let inside = Trajectory::from_points(vec![v(&[1.0, 2.0])], &[]).unwrap();
        assert_eq!(domain_distance_series(&inside, &quadrant_program()).unwrap()[0].1, 0.0);
    }

    #[test]
    fn flow_path_has_small_deviation() {
        let zero = make_atom(&CatalogAtom::Zero { dim: 1 }).unwrap();
        let id = make_atom(&CatalogAtom::identity(1)).unwrap();
        let p = RandomProgram::new(Family::single(zero), Family::single(id)).unwrap();
        let flow = integrate_flow(&p, &v(&[1.0]), 5.0, 0.01, 1e-10).unwrap();
        let traj = Trajectory::from_points(flow.points.clone(), &vec![flow.h; flow.points.len() - 1]).unwrap();
        let dev = apt_deviation(&traj, &p, 1.0, &[0.0, 1.0, 2.5], 0.01, 1e-10).unwrap();
        for s in &dev {
            assert!(s.deviation <= 1e-8, "{s:?}");
            assert!(s.grid_points >= 101);
        }
    }

    #[test]
    fn zero_window_is_projection_distance() {
        let t = Trajectory::from_points(vec![v(&[-1.0, -1.0]), v(&[-3.0, 4.0])], &[1.0]).unwrap();
        let dev = apt_deviation(&t, &quadrant_program(), 0.0, &[0.0, 1.0], 0.1, 1e-8).unwrap();
        assert!((dev[0].deviation - 2f64.sqrt()).abs() < 1e-12);
        assert!((dev[1].deviation - 3.0).abs() < 1e-12);
        assert!(apt_deviation(&t, &quadrant_program(), 0.5, &[0.8], 0.1, 1e-8).is_err());
    }

    #[test]
    fn inversion_count() {
        assert_eq!(inversions(&[5.0, 4.0, 4.5, 2.0, 1.0]), 1);
        assert_eq!(inversions(&[1.0]), 0);
    }
}
