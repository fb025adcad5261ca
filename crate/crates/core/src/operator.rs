//! Maximal monotone atoms and the resolvent / Yosida / least-norm machinery.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{project_intersection, DomainDescriptor, INTERSECTION_MAX_CYCLES, INTERSECTION_TOL};
use crate::error::{Error, Result};
use crate::valueset::{Shape, ValueSet};
use crate::{ensure_dim, ensure_finite};

/// Sufficient conditions for demipositivity an atom (or a mean operator) is
/// known to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flag", content = "modulus", rename_all = "snake_case")]
pub enum DemipositivityFlag {
    /// Subdifferential of a closed convex function that attains its minimum.
    SubdifferentialWithMinimum,
    /// `I - T` with `T` nonexpansive and having a fixed point.
    IdentityMinusNonexpansive,
    /// The zero set has nonempty interior.
    NonemptyInteriorZeros,
    /// 3-monotone with a nonempty zero set.
    ThreeMonotone,
    /// `<x1 - x2, y1 - y2> >= alpha ‖x1 - x2‖²`.
    StronglyMonotone(f64),
    /// `<x1 - x2, y1 - y2> >= alpha ‖y1 - y2‖²`.
    Cocoercive(f64),
}

#[derive(Debug, Clone)]
pub(crate) enum SumRoute {
    /// The other summand is affine too: solve `(I + γM) z = x - γm`.
    Linear { matrix: DMatrix<f64>, vector: DVector<f64> },
    /// `Q = βI`: `z = J^other_{γ/(1+γβ)}((x - γq)/(1+γβ))`.
    Isotropic { beta: f64, vector: DVector<f64> },
    /// Diagonal `Q` with a coordinatewise-separable other summand.
    Diagonal { diag: DVector<f64>, vector: DVector<f64> },
}

#[derive(Debug, Clone)]
pub(crate) enum AtomKind {
    Quadratic {
        matrix: DMatrix<f64>,
        vector: DVector<f64>,
        eigenvalues: DVector<f64>,
        eigenvectors: DMatrix<f64>,
    },
    L1 {
        lambda: f64,
    },
    NormalCone {
        set: DomainDescriptor,
    },
    Skew {
        matrix: DMatrix<f64>,
    },
    Scaled {
        factor: f64,
        inner: Box<OperatorAtom>,
    },
    SumWithQuadratic {
        quad: Box<OperatorAtom>,
        other: Box<OperatorAtom>,
        route: SumRoute,
    },
    LinearRegression {
        features: DVector<f64>,
        target: f64,
    },
    Cubic {
        coefficient: f64,
    },
}

/// One maximal monotone operator on `R^N` with an exact resolvent.
///
/// Atoms are built through [`crate::catalog::make_atom`].
#[derive(Debug, Clone)]
pub struct OperatorAtom {
    pub(crate) kind: AtomKind,
    pub(crate) dim: usize,
    pub(crate) domain: DomainDescriptor,
    pub(crate) flags: Vec<DemipositivityFlag>,
    pub(crate) potential: bool,
}

impl OperatorAtom {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Descriptor of `clos(dom A)`.
    pub fn domain(&self) -> &DomainDescriptor {
        &self.domain
    }

    pub fn flags(&self) -> &[DemipositivityFlag] {
        &self.flags
    }

    /// Whether the atom is the subdifferential of a closed convex function.
    pub fn is_potential(&self) -> bool {
        self.potential
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            AtomKind::Quadratic { .. } => "quadratic",
            AtomKind::L1 { .. } => "l1",
            AtomKind::NormalCone { .. } => "normal_cone",
            AtomKind::Skew { .. } => "skew_linear",
            AtomKind::Scaled { .. } => "scaled",
            AtomKind::SumWithQuadratic { .. } => "sum_with_quadratic",
            AtomKind::LinearRegression { .. } => "linear_regression",
            AtomKind::Cubic { .. } => "cubic",
        }
    }

    /// Largest `α` with a `StronglyMonotone(α)` flag, or 0.
    pub fn strong_monotonicity(&self) -> f64 {
        self.flags
            .iter()
            .filter_map(|f| match f {
                DemipositivityFlag::StronglyMonotone(a) => Some(*a),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// The normal-cone set, if the atom is `N_C` (possibly scaled).
    pub fn normal_cone_set(&self) -> Option<&DomainDescriptor> {
        match &self.kind {
            AtomKind::NormalCone { set } => Some(set),
            AtomKind::Scaled { inner, .. } => inner.normal_cone_set(),
            _ => None,
        }
    }

    /// `J_γ(x) = (I + γA)^{-1}(x)`.
    pub fn resolvent(&self, gamma: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_gamma(gamma)?;
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "resolvent argument")?;
        Ok(self.resolvent_unchecked(gamma, x))
    }

    pub(crate) fn resolvent_unchecked(&self, gamma: f64, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            AtomKind::Quadratic { vector, eigenvalues, eigenvectors, .. } => {
                let rhs = x - vector * gamma;
                let mut coords = eigenvectors.transpose() * rhs;
                for (c, l) in coords.iter_mut().zip(eigenvalues.iter()) {
                    *c /= 1.0 + gamma * l.max(0.0);
                }
                eigenvectors * coords
            }
            AtomKind::L1 { lambda } => x.map(|v| soft_threshold(v, gamma * lambda)),
            AtomKind::NormalCone { set } => set.project(x),
            AtomKind::Skew { matrix } => solve_shifted(matrix, gamma, x),
            AtomKind::Scaled { factor, inner } => inner.resolvent_unchecked(factor * gamma, x),
            AtomKind::SumWithQuadratic { other, route, .. } => match route {
                SumRoute::Linear { matrix, vector } => solve_shifted(matrix, gamma, &(x - vector * gamma)),
                SumRoute::Isotropic { beta, vector } => {
                    let s = 1.0 + gamma * beta;
                    other.resolvent_unchecked(gamma / s, &((x - vector * gamma) / s))
                }
                SumRoute::Diagonal { diag, vector } => DVector::from_fn(self.dim, |i, _| {
                    let s = 1.0 + gamma * diag[i];
                    other
                        .coord_resolvent(i, gamma / s, (x[i] - gamma * vector[i]) / s)
                        .expect("separability checked at construction")
                }),
            },
            AtomKind::LinearRegression { features, target } => {
                let w = x + features * (gamma * target);
                let scale = gamma * features.dot(&w) / (1.0 + gamma * features.norm_squared());
                w - features * scale
            }
            AtomKind::Cubic { coefficient } => x.map(|v| cubic_resolvent(coefficient * gamma, v)),
        }
    }

    /// Resolvent of one coordinate for separable atoms: the `i`-th coordinate
    /// of `J_γ` only depends on the `i`-th input coordinate `v`.
    pub(crate) fn coord_resolvent(&self, i: usize, gamma: f64, v: f64) -> Option<f64> {
        match &self.kind {
            AtomKind::L1 { lambda } => Some(soft_threshold(v, gamma * lambda)),
            AtomKind::NormalCone { set } => match set {
                DomainDescriptor::Full => Some(v),
                DomainDescriptor::Box { lo, hi } => Some(v.max(lo[i]).min(hi[i])),
                _ => None,
            },
            AtomKind::Cubic { coefficient } => Some(cubic_resolvent(coefficient * gamma, v)),
            AtomKind::Scaled { factor, inner } => inner.coord_resolvent(i, factor * gamma, v),
            AtomKind::Quadratic { matrix, vector, .. } if is_diagonal(matrix) => {
                Some((v - gamma * vector[i]) / (1.0 + gamma * matrix[(i, i)]))
            }
            _ => None,
        }
    }

    pub(crate) fn is_separable(&self) -> bool {
        self.coord_resolvent(0, 1.0, 0.0).is_some()
    }

    /// `A_γ(x) = (x - J_γ(x)) / γ`.
    pub fn yosida(&self, gamma: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let j = self.resolvent(gamma, x)?;
        Ok((x - j) / gamma)
    }

    /// Exact descriptor of `A(x)`; fails outside the domain.
    pub fn value_set(&self, x: &DVector<f64>) -> Result<ValueSet> {
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "value-set argument")?;
        self.value_set_unchecked(x)
    }

    fn value_set_unchecked(&self, x: &DVector<f64>) -> Result<ValueSet> {
        Ok(match &self.kind {
            AtomKind::Quadratic { matrix, vector, .. } => ValueSet::singleton(matrix * x + vector),
            AtomKind::L1 { lambda } => {
                let lo = x.map(|v| if v > 0.0 { *lambda } else { -lambda });
                let hi = x.map(|v| if v < 0.0 { -lambda } else { *lambda });
                if x.iter().all(|v| *v != 0.0) {
                    ValueSet::singleton(lo)
                } else {
                    ValueSet::new(DVector::zeros(self.dim), Shape::Box { lo, hi })
                }
            }
            AtomKind::NormalCone { set } => set.normal_cone(x)?,
            AtomKind::Skew { matrix } => ValueSet::singleton(matrix * x),
            AtomKind::Scaled { factor, inner } => inner.value_set_unchecked(x)?.scaled(*factor),
            AtomKind::SumWithQuadratic { quad, other, .. } => {
                let shift = quad.value_set_unchecked(x)?.offset;
                other.value_set_unchecked(x)?.translated(&shift)
            }
            AtomKind::LinearRegression { features, target } => {
                ValueSet::singleton(features * (features.dot(x) - target))
            }
            AtomKind::Cubic { coefficient } => ValueSet::singleton(x.map(|v| coefficient * v * v * v)),
        })
    }

    /// `A_0(x)`, the element of `A(x)` closest to the origin.
    pub fn least_norm(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.value_set(x)?.least_norm())
    }

    /// Projection onto `clos(dom A)`.
    pub fn project_domain(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "domain projection argument")?;
        Ok(self.domain.project(x))
    }

    /// The affine map `x ↦ Mx + m` if the atom is single-valued and affine.
    pub fn linear_part(&self) -> Option<(DMatrix<f64>, DVector<f64>)> {
        match &self.kind {
            AtomKind::Quadratic { matrix, vector, .. } => Some((matrix.clone(), vector.clone())),
            AtomKind::Skew { matrix } => Some((matrix.clone(), DVector::zeros(self.dim))),
            AtomKind::LinearRegression { features, target } => {
                Some((features * features.transpose(), features * -target))
            }
            AtomKind::Scaled { factor, inner } => inner.linear_part().map(|(m, v)| (m * *factor, v * *factor)),
            AtomKind::SumWithQuadratic { route: SumRoute::Linear { matrix, vector }, .. } => {
                Some((matrix.clone(), vector.clone()))
            }
            _ => None,
        }
    }

    /// Draws `n` graph pairs `(x, y)` with `x` in `region ∩ dom A` and
    /// `y ∈ A(x)`, deterministically in `seed`. `region` must be a box with
    /// finite bounds.
    pub fn graph_sample(
        &self,
        region: &DomainDescriptor,
        n: usize,
        seed: u64,
    ) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        use rand::Rng;
        if n == 0 {
            return Err(Error::Precondition("graph_sample needs n >= 1".into()));
        }
        let (lo, hi) = match region {
            DomainDescriptor::Box { lo, hi } if lo.iter().chain(hi.iter()).all(|v| v.is_finite()) => (lo, hi),
            _ => return Err(Error::Precondition("graph_sample region must be a bounded box".into())),
        };
        ensure_dim(lo, self.dim)?;
        let sets = [region, &self.domain];
        let center = (lo + hi) / 2.0;
        project_intersection(&sets, &center, INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)
            .map_err(|_| Error::EmptySample("region does not meet the operator domain".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = DVector::from_fn(self.dim, |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
            let x = project_intersection(&sets, &u, INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)?;
            let x = self.domain.project(&x);
            let y = self.value_set_unchecked(&x)?.sample(&mut rng);
            out.push((x, y));
        }
        Ok(out)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("step gamma must be positive and finite, got {gamma}")))
    }
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Real root of `k z³ + z = v` for `k >= 0`.
pub(crate) fn cubic_resolvent(k: f64, v: f64) -> f64 {
    if k == 0.0 || v == 0.0 {
        return v;
    }
    // Cardano for z³ + p z + q = 0 with p = 1/k, q = -v/k, then Newton polish.
    let p = 1.0 / k;
    let q = -v / k;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let s = disc.sqrt();
    let mut z = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt();
    if !z.is_finite() {
        z = v.signum() * (v.abs() / k).cbrt().min(v.abs());
    }
    for _ in 0..4 {
        let f = k * z * z * z + z - v;
        let df = 3.0 * k * z * z + 1.0;
        z -= f / df;
    }
    z
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Solves `(I + γM) z = rhs`.
pub(crate) fn solve_shifted(matrix: &DMatrix<f64>, gamma: f64, rhs: &DVector<f64>) -> DVector<f64> {
    let n = matrix.nrows();
    let system = DMatrix::identity(n, n) + matrix * gamma;
    system
        .lu()
        .solve(rhs)
        .expect("I + γM is invertible for monotone M")
}
