//! Stochastic forward-backward iterations over random maximal monotone
//! operators.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] and [`valueset`]: closed convex sets used as operator domains
//!   and as exact descriptors of operator values.
//! * [`operator`] and [`catalog`]: maximal monotone atoms with closed-form
//!   resolvents, Yosida approximations and least-norm selections.
//! * [`program`] and [`audit`]: random operator pairs, their mean operators,
//!   zero certificates and Monte-Carlo checks of the convergence assumptions.
//! * [`schedule`] and [`solver`]: the iteration itself, trajectories,
//!   interpolation and weighted averages.
//! * [`flow`], [`reference`] and [`diagnostics`]: the mean differential
//!   inclusion, deterministic reference solutions and trajectory diagnostics.

pub mod audit;
pub mod catalog;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod flow;
pub mod laws;
pub mod operator;
pub mod program;
pub mod reference;
pub mod schedule;
pub mod solver;
pub mod valueset;

pub use nalgebra::{DMatrix, DVector};

pub use crate::catalog::{make_atom, prox_l1, CatalogAtom};
pub use crate::domain::{project_intersection, DomainDescriptor};
pub use crate::error::{Error, Result};
pub use crate::operator::{DemipositivityFlag, OperatorAtom};
pub use crate::program::{BSelection, DataSampler, Family, InnovationRecord, InnovationStream, RandomProgram, ZeroCertificate};
pub use crate::schedule::Schedule;
pub use crate::solver::Trajectory;
pub use crate::valueset::{Shape, ValueSet};

/// Absolute tolerance for containment and identity checks, scaled by `1 + ‖x‖`.
pub const CONTAINMENT_TOL: f64 = 1e-9;

/// Points within this distance of a closed domain count as members.
pub const DOMAIN_TOL: f64 = 1e-12;

/// Containment tolerance at `x`: `CONTAINMENT_TOL * (1 + ‖x‖)`.
pub fn scaled_tol(x: &DVector<f64>) -> f64 {
    CONTAINMENT_TOL * (1.0 + x.norm())
}

pub(crate) fn ensure_finite(x: &DVector<f64>, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_dim(x: &DVector<f64>, dim: usize) -> Result<()> {
    if x.len() == dim {
        Ok(())
    } else {
        Err(Error::Dimension { expected: dim, got: x.len() })
    }
}
