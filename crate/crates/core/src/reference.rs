//! Deterministic zeros of the mean operator `𝒜 + ℬ` by the proximal point
//! method `x_{k+1} = J_s^{𝒜+ℬ}(x_k)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::flow::SumResolvent;
use crate::program::RandomProgram;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub point: DVector<f64>,
    pub iterations: usize,
    /// `‖x_k - x_{k+1}‖ / s`, which bounds `dist(0, (𝒜+ℬ)(x_{k+1}))`.
    pub yosida_residual: f64,
}

/// Runs proximal point iterations with step `s` from the projection of `x0`
/// onto `𝒟` until the Yosida residual is at most `tol`.
pub fn solve_reference(program: &RandomProgram, x0: &DVector<f64>, s: f64, tol: f64, max_iters: usize) -> Result<ReferenceSolution> {
    let inner_tol = (tol * s * 1e-2).max(1e-14);
    let mut j = SumResolvent::new(program, s, inner_tol)?;
    let mut x = program.project_essential(x0)?;
    for k in 1..=max_iters {
        let (next, _) = j.apply(&x)?;
        let r = (&x - &next).norm() / s;
        x = next;
        if r <= tol {
            return Ok(ReferenceSolution { point: polish(program, x), iterations: k, yosida_residual: r });
        }
    }
    Err(Error::State(format!("reference solver did not reach {tol:e} in {max_iters} iterations")))
}

/// Inner splitting leaves round-off where an ℓ₁ or cone kink pins a
/// coordinate to zero, and value sets jump there. Entries below
/// `1e-9 (1 + ‖x‖)` are zeroed when that lowers the exact residual.
fn polish(program: &RandomProgram, x: DVector<f64>) -> DVector<f64> {
    let cut = 1e-9 * (1.0 + x.norm());
    if !x.iter().any(|v| *v != 0.0 && v.abs() <= cut) {
        return x;
    }
    let snapped = x.map(|v| if v.abs() <= cut { 0.0 } else { v });
    let residual = |p: &DVector<f64>| {
        if !program.in_essential(p) {
            return f64::INFINITY;
        }
        program.mean_a_distance_to_zero(p, crate::program::MINKOWSKI_TOL).unwrap_or(f64::INFINITY)
    };
    if residual(&snapped) < residual(&x) {
        snapped
    } else {
        x
    }
}
