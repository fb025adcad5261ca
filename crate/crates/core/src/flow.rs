//! Implicit-Euler integration of `ż ∈ -(𝒜 + ℬ)(z)`.
//!
//! Each step computes `z_{k+1} = J_h^{𝒜+ℬ}(z_k)`. Affine atoms are merged
//! into one linear term and `ℓ₁` atoms into one weighted `ℓ₁` term; the
//! remaining resolvent of a sum is obtained in closed form when possible and
//! otherwise by Douglas-Rachford splitting on the product space.

use nalgebra::{DMatrix, DVector, LU};

use crate::catalog::{make_atom, CatalogAtom};
use crate::domain::{project_intersection, DomainDescriptor, INTERSECTION_MAX_CYCLES, INTERSECTION_TOL};
use crate::error::{Error, Result};
use crate::operator::{AtomKind, OperatorAtom};
use crate::program::RandomProgram;
use crate::{ensure_dim, ensure_finite};

/// Cap on inner splitting iterations per step.
pub const INNER_MAX_ITERS: usize = 10_000;
/// Default inner residual tolerance.
pub const DEFAULT_FLOW_TOL: f64 = 1e-8;
/// Windows shorter than this many steps are refined.
pub const MIN_GRID_POINTS: usize = 100;

/// Sampled solution of the mean differential inclusion on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub h: f64,
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    /// Inner-solver residual of each step (0 for closed-form steps).
    pub residuals: Vec<f64>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.points.last().expect("flow holds z0")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("flow holds z0")
    }

    /// Linear interpolation between grid points.
    pub fn at(&self, s: f64) -> Result<DVector<f64>> {
        let hi = self.horizon();
        if !(0.0..=hi).contains(&s) {
            return Err(Error::Range { t: s, lo: 0.0, hi });
        }
        let k = ((s / self.h).floor() as usize).min(self.points.len() - 1);
        if k + 1 == self.points.len() {
            return Ok(self.points[k].clone());
        }
        let frac = ((s - self.times[k]) / self.h).clamp(0.0, 1.0);
        Ok(&self.points[k] + (&self.points[k + 1] - &self.points[k]) * frac)
    }
}

enum Term {
    Affine { vector: DVector<f64> },
    Atom { weight: f64, atom: OperatorAtom },
}

enum Route {
    Linear(LU<f64, nalgebra::Dyn, nalgebra::Dyn>, DVector<f64>),
    Single { atom: OperatorAtom, weight: f64, beta: f64, shift: DVector<f64> },
    Cones { sets: Vec<DomainDescriptor>, shift: DVector<f64> },
    Splitting { terms: Vec<Term>, affine_lu: Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>, warm: Option<Vec<DVector<f64>>> },
}

/// `J_h` of the mean operator of a program, for a fixed `h`.
pub struct SumResolvent {
    dim: usize,
    h: f64,
    tol: f64,
    route: Route,
}

impl SumResolvent {
    pub fn new(program: &RandomProgram, h: f64, tol: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Precondition(format!("flow step must be positive, got {h}")));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::Precondition(format!("flow tolerance must be positive, got {tol}")));
        }
        let n = program.dim();
        let mut matrix = DMatrix::zeros(n, n);
        let mut vector = DVector::zeros(n);
        let mut l1 = 0.0;
        let mut has_l1 = false;
        let mut others: Vec<(f64, OperatorAtom)> = Vec::new();
        for (w, atom) in program.a_terms().into_iter().chain(program.b_terms()) {
            if w <= 0.0 {
                continue;
            }
            if let Some((m, v)) = atom.linear_part() {
                matrix += m * w;
                vector += v * w;
            } else if let Some(lambda) = l1_weight(atom) {
                l1 += w * lambda;
                has_l1 = true;
            } else {
                others.push((w, atom.clone()));
            }
        }
        if has_l1 {
            others.push((1.0, make_atom(&CatalogAtom::L1Subdifferential { dim: n, lambda: l1 })?));
        }
        let affine_zero = matrix.iter().all(|v| *v == 0.0);
        let isotropic = (0..n).all(|i| (0..n).all(|j| if i == j { matrix[(i, j)] == matrix[(0, 0)] } else { matrix[(i, j)] == 0.0 }));
        let route = if others.is_empty() {
            let lu = (DMatrix::identity(n, n) + &matrix * h).lu();
            Route::Linear(lu, vector * h)
        } else if others.len() == 1 && isotropic {
            let (weight, atom) = others.pop().unwrap();
            Route::Single { atom, weight, beta: matrix[(0, 0)], shift: vector * h }
        } else if affine_zero && others.iter().all(|(_, a)| a.normal_cone_set().is_some()) {
            let sets = others.iter().map(|(_, a)| a.normal_cone_set().unwrap().clone()).collect();
            Route::Cones { sets, shift: vector * h }
        } else {
            let mut terms: Vec<Term> = others.into_iter().map(|(weight, atom)| Term::Atom { weight, atom }).collect();
            let mut affine_lu = None;
            if !affine_zero || vector.iter().any(|v| *v != 0.0) {
                let k = (terms.len() + 1) as f64;
                // λ = k, so J_{λS}(u) solves (2I + khM) z = u + z0 - khm.
                affine_lu = Some((DMatrix::identity(n, n) * 2.0 + &matrix * (k * h)).lu());
                terms.push(Term::Affine { vector });
            }
            Route::Splitting { terms, affine_lu, warm: None }
        };
        Ok(SumResolvent { dim: n, h, tol, route })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `J_h(z0)` and the inner residual reached.
    pub fn apply(&mut self, z0: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        ensure_dim(z0, self.dim)?;
        ensure_finite(z0, "flow point")?;
        let h = self.h;
        match &mut self.route {
            Route::Linear(lu, shift) => {
                let z = lu.solve(&(z0 - &*shift)).ok_or_else(|| Error::State("singular flow system".into()))?;
                Ok((z, 0.0))
            }
            Route::Single { atom, weight, beta, shift } => {
                let s = 1.0 + h * *beta;
                Ok((atom.resolvent_unchecked(h * *weight / s, &((z0 - &*shift) / s)), 0.0))
            }
            Route::Cones { sets, shift } => {
                let refs: Vec<&DomainDescriptor> = sets.iter().collect();
                let z = project_intersection(&refs, &(z0 - &*shift), INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)?;
                Ok((z, 0.0))
            }
            Route::Splitting { terms, affine_lu, warm } => {
                let k = terms.len();
                let kf = k as f64;
                let mut y = warm.take().unwrap_or_else(|| vec![z0.clone(); k]);
                let mut residual = f64::INFINITY;
                let scale = 1.0 + z0.norm();
                let mut x = z0.clone();
                for _ in 0..INNER_MAX_ITERS {
                    x = y.iter().fold(DVector::zeros(self.dim), |acc, yi| acc + yi) / kf;
                    residual = 0.0;
                    for (term, yi) in terms.iter().zip(y.iter_mut()) {
                        let u = &x * 2.0 - &*yi;
                        // J_{λS_i}(u) with S_i(z) = (z - z0)/k + h T_i(z) and λ = k.
                        let p = match term {
                            Term::Atom { weight, atom } => atom.resolvent_unchecked(kf * h * weight / 2.0, &((u + z0) / 2.0)),
                            Term::Affine { vector, .. } => {
                                let rhs = u + z0 - vector * (kf * h);
                                affine_lu.as_ref().unwrap().solve(&rhs).ok_or_else(|| Error::State("singular flow system".into()))?
                            }
                        };
                        residual = residual.max((&p - &x).norm());
                        *yi += p - &x;
                    }
                    if residual <= self.tol * scale {
                        break;
                    }
                }
                *warm = Some(y);
                if residual <= self.tol * scale {
                    Ok((x, residual))
                } else {
                    Err(Error::Flow { step: 0, residual, tol: self.tol })
                }
            }
        }
    }
}

fn l1_weight(atom: &OperatorAtom) -> Option<f64> {
    match &atom.kind {
        AtomKind::L1 { lambda } => Some(*lambda),
        AtomKind::Scaled { factor, inner } => l1_weight(inner).map(|l| l * factor),
        _ => None,
    }
}

/// Integrates the flow from `z0 ∈ clos(𝒟)` over `[0, T]`. The step is
/// shrunk to `T / ⌈T / h⌉` so the grid ends exactly at `T`.
pub fn integrate_flow(program: &RandomProgram, z0: &DVector<f64>, horizon: f64, h: f64, tol: f64) -> Result<FlowTrajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    if !(h.is_finite() && h > 0.0 && h <= horizon) {
        return Err(Error::Precondition(format!("flow step must lie in (0, T], got {h}")));
    }
    let distance = program.essential_distance(z0)?;
    if distance > 1e-8 * (1.0 + z0.norm()) {
        return Err(Error::Domain { distance });
    }
    let ratio = horizon / h;
    // a horizon that is a multiple of h up to round-off keeps h
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio { ratio.round() } else { ratio.ceil() }.max(1.0) as usize;
    let h = horizon / steps as f64;
    let mut solver = SumResolvent::new(program, h, tol)?;
    let mut z = z0.clone();
    let mut flow = FlowTrajectory {
        h,
        times: Vec::with_capacity(steps + 1),
        points: Vec::with_capacity(steps + 1),
        residuals: Vec::with_capacity(steps),
    };
    flow.times.push(0.0);
    flow.points.push(z.clone());
    for k in 1..=steps {
        let (next, residual) = solver.apply(&z).map_err(|e| match e {
            Error::Flow { residual, tol, .. } => Error::Flow { step: k, residual, tol },
            other => other,
        })?;
        z = next;
        flow.times.push(k as f64 * h);
        flow.points.push(z.clone());
        flow.residuals.push(residual);
    }
    Ok(flow)
}

/// Largest change of the grid values when `h` is halved.
pub fn self_convergence(program: &RandomProgram, z0: &DVector<f64>, horizon: f64, h: f64, tol: f64) -> Result<f64> {
    let coarse = integrate_flow(program, z0, horizon, h, tol)?;
    let fine = integrate_flow(program, z0, horizon, coarse.h / 2.0, tol)?;
    Ok(coarse
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| (p - &fine.points[2 * k]).norm())
        .fold(0.0, f64::max))
}
