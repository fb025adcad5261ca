//! Concrete maximal monotone atoms with closed-form resolvents.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::domain::DomainDescriptor;
use crate::error::{Error, Result};
use crate::operator::{soft_threshold, AtomKind, DemipositivityFlag, OperatorAtom, SumRoute};
use crate::{ensure_finite, operator::check_gamma};

/// Parameters of a catalog atom.
#[derive(Debug, Clone, PartialEq)]
pub enum CatalogAtom {
    /// The zero operator on `R^dim`.
    Zero { dim: usize },
    /// `x ↦ Qx + q` for symmetric positive semidefinite `Q`.
    QuadraticGradient { matrix: DMatrix<f64>, vector: DVector<f64> },
    /// `∂(λ‖·‖₁)`.
    L1Subdifferential { dim: usize, lambda: f64 },
    /// `N_C`; its resolvent is the projection onto `C`.
    NormalCone { dim: usize, set: DomainDescriptor },
    /// `x ↦ Sx` with `Sᵀ = -S`.
    SkewLinear { matrix: DMatrix<f64> },
    /// `c·A` for `c > 0`.
    Scaled { factor: f64, inner: Box<CatalogAtom> },
    /// `x ↦ Qx + q + B(x)`.
    SumWithQuadratic { matrix: DMatrix<f64>, vector: DVector<f64>, other: Box<CatalogAtom> },
    /// `x ↦ (<a, x> - y) a`, the gradient of `½(<a, x> - y)²`.
    LinearRegression { features: DVector<f64>, target: f64 },
    /// `x ↦ c x³` coordinatewise.
    Cubic { dim: usize, coefficient: f64 },
}

impl CatalogAtom {
    pub fn identity(dim: usize) -> Self {
        CatalogAtom::QuadraticGradient { matrix: DMatrix::identity(dim, dim), vector: DVector::zeros(dim) }
    }

    /// The planar rotation by π/2, `[[0, -1], [1, 0]]`.
    pub fn rotation() -> Self {
        CatalogAtom::SkewLinear { matrix: DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]) }
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Validates the parameters and builds the atom, populating its
/// demipositivity flags.
pub fn make_atom(spec: &CatalogAtom) -> Result<OperatorAtom> {
    match spec {
        CatalogAtom::Zero { dim } => {
            check_positive_dim(*dim)?;
            quadratic(DMatrix::zeros(*dim, *dim), DVector::zeros(*dim))
        }
        CatalogAtom::QuadraticGradient { matrix, vector } => quadratic(matrix.clone(), vector.clone()),
        CatalogAtom::L1Subdifferential { dim, lambda } => {
            check_positive_dim(*dim)?;
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(Error::Construction(format!("l1 weight must be finite and >= 0, got {lambda}")));
            }
            let mut flags = vec![DemipositivityFlag::SubdifferentialWithMinimum, DemipositivityFlag::ThreeMonotone];
            if *lambda == 0.0 {
                flags.push(DemipositivityFlag::NonemptyInteriorZeros);
            }
            Ok(OperatorAtom {
                kind: AtomKind::L1 { lambda: *lambda },
                dim: *dim,
                domain: DomainDescriptor::Full,
                flags,
                potential: true,
            })
        }
        CatalogAtom::NormalCone { dim, set } => {
            check_positive_dim(*dim)?;
            set.check_dim(*dim)?;
            check_set(set)?;
            let mut flags = vec![DemipositivityFlag::SubdifferentialWithMinimum, DemipositivityFlag::ThreeMonotone];
            if set.has_interior(*dim) {
                flags.push(DemipositivityFlag::NonemptyInteriorZeros);
            }
            Ok(OperatorAtom {
                kind: AtomKind::NormalCone { set: set.clone() },
                dim: *dim,
                domain: set.clone(),
                flags,
                potential: true,
            })
        }
        CatalogAtom::SkewLinear { matrix } => {
            let dim = check_square(matrix, "skew matrix")?;
            let scale = 1.0 + matrix.amax();
            let asym = (matrix + matrix.transpose()).amax();
            if asym > SYMMETRY_TOL * scale {
                return Err(Error::Construction(format!("matrix is not skew-symmetric (‖S + Sᵀ‖max = {asym:e})")));
            }
            Ok(OperatorAtom {
                kind: AtomKind::Skew { matrix: matrix.clone() },
                dim,
                domain: DomainDescriptor::Full,
                flags: Vec::new(),
                potential: false,
            })
        }
        CatalogAtom::Scaled { factor, inner } => {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::Construction(format!("scale factor must be finite and > 0, got {factor}")));
            }
            let inner = make_atom(inner)?;
            let flags = inner
                .flags
                .iter()
                .filter_map(|f| match *f {
                    DemipositivityFlag::StronglyMonotone(a) => Some(DemipositivityFlag::StronglyMonotone(a * factor)),
                    DemipositivityFlag::Cocoercive(a) => Some(DemipositivityFlag::Cocoercive(a / factor)),
                    DemipositivityFlag::IdentityMinusNonexpansive => None,
                    other => Some(other),
                })
                .collect();
            Ok(OperatorAtom {
                dim: inner.dim,
                domain: inner.domain.clone(),
                potential: inner.potential,
                flags,
                kind: AtomKind::Scaled { factor: *factor, inner: Box::new(inner) },
            })
        }
        CatalogAtom::SumWithQuadratic { matrix, vector, other } => sum_with_quadratic(matrix, vector, other),
        CatalogAtom::LinearRegression { features, target } => {
            ensure_finite(features, "regression features")?;
            if !target.is_finite() {
                return Err(Error::Construction("regression target must be finite".into()));
            }
            let dim = features.len();
            check_positive_dim(dim)?;
            let norm2 = features.norm_squared();
            let mut flags = vec![DemipositivityFlag::SubdifferentialWithMinimum, DemipositivityFlag::ThreeMonotone];
            if norm2 > 0.0 {
                flags.push(DemipositivityFlag::Cocoercive(1.0 / norm2));
            }
            if norm2 <= 2.0 {
                flags.push(DemipositivityFlag::IdentityMinusNonexpansive);
            }
            Ok(OperatorAtom {
                kind: AtomKind::LinearRegression { features: features.clone(), target: *target },
                dim,
                domain: DomainDescriptor::Full,
                flags,
                potential: true,
            })
        }
        CatalogAtom::Cubic { dim, coefficient } => {
            check_positive_dim(*dim)?;
            if !(coefficient.is_finite() && *coefficient >= 0.0) {
                return Err(Error::Construction(format!("cubic coefficient must be finite and >= 0, got {coefficient}")));
            }
            Ok(OperatorAtom {
                kind: AtomKind::Cubic { coefficient: *coefficient },
                dim: *dim,
                domain: DomainDescriptor::Full,
                flags: vec![DemipositivityFlag::SubdifferentialWithMinimum, DemipositivityFlag::ThreeMonotone],
                potential: true,
            })
        }
    }
}

/// Proximity operator of `λ‖·‖₁` with step `γ`: soft thresholding at `γλ`.
pub fn prox_l1(lambda: f64, gamma: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be >= 0, got {lambda}")));
    }
    check_gamma(gamma)?;
    ensure_finite(x, "prox argument")?;
    Ok(x.map(|v| soft_threshold(v, gamma * lambda)))
}

/// One representative of every catalog variant in `R^dim` (`dim >= 2`),
/// including every domain shape for normal cones and every resolvent route
/// for sums. Used by the law suites.
pub fn showcase(dim: usize) -> Vec<(String, CatalogAtom)> {
    assert!(dim >= 2);
    let ramp = |a: f64, b: f64| DVector::from_fn(dim, |i, _| a + b * i as f64);
    let mut psd = DMatrix::from_fn(dim, dim, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
    psd = psd.transpose() * &psd / dim as f64;
    let mut skew = DMatrix::from_fn(dim, dim, |i, j| ((i + 2 * j) % 3) as f64 - 1.0);
    skew = &skew - skew.transpose();
    let mut directions = DMatrix::zeros(dim, 1);
    directions[(0, 0)] = 1.0;
    directions[(dim - 1, 0)] = 1.0;
    let unit = |i: usize| DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 });
    let cone = |set: DomainDescriptor| CatalogAtom::NormalCone { dim, set };
    vec![
        ("zero".into(), CatalogAtom::Zero { dim }),
        ("identity".into(), CatalogAtom::identity(dim)),
        ("quadratic_psd".into(), CatalogAtom::QuadraticGradient { matrix: psd.clone(), vector: ramp(0.5, -0.3) }),
        ("l1".into(), CatalogAtom::L1Subdifferential { dim, lambda: 0.7 }),
        ("l1_zero_weight".into(), CatalogAtom::L1Subdifferential { dim, lambda: 0.0 }),
        ("normal_cone_full".into(), cone(DomainDescriptor::Full)),
        ("normal_cone_box".into(), cone(DomainDescriptor::boxed(ramp(-1.0, 0.2), ramp(1.0, 0.5)).unwrap())),
        ("normal_cone_orthant".into(), cone(DomainDescriptor::orthant(&vec![1.0; dim]))),
        ("normal_cone_halfspace".into(), cone(DomainDescriptor::halfspace(ramp(1.0, -0.4), 0.5).unwrap())),
        ("normal_cone_ball".into(), cone(DomainDescriptor::ball(ramp(0.3, 0.1), 1.5).unwrap())),
        ("normal_cone_affine".into(), cone(DomainDescriptor::affine(ramp(0.2, 0.0), &directions).unwrap())),
        ("normal_cone_ray".into(), cone(DomainDescriptor::ray(ramp(0.0, 0.1), unit(0)).unwrap())),
        ("skew_rotation".into(), {
            let mut m = DMatrix::zeros(dim, dim);
            m[(0, 1)] = -1.0;
            m[(1, 0)] = 1.0;
            CatalogAtom::SkewLinear { matrix: m }
        }),
        ("skew_dense".into(), CatalogAtom::SkewLinear { matrix: skew.clone() }),
        ("scaled_l1".into(), CatalogAtom::Scaled { factor: 2.5, inner: Box::new(CatalogAtom::L1Subdifferential { dim, lambda: 0.4 }) }),
        ("scaled_cone".into(), CatalogAtom::Scaled { factor: 0.2, inner: Box::new(cone(DomainDescriptor::ball(DVector::zeros(dim), 2.0).unwrap())) }),
        ("sum_linear".into(), CatalogAtom::SumWithQuadratic { matrix: psd.clone(), vector: ramp(-0.2, 0.1), other: Box::new(CatalogAtom::SkewLinear { matrix: skew }) }),
        ("sum_isotropic_ball".into(), CatalogAtom::SumWithQuadratic {
            matrix: DMatrix::identity(dim, dim) * 0.8,
            vector: ramp(0.1, 0.2),
            other: Box::new(cone(DomainDescriptor::ball(DVector::zeros(dim), 1.0).unwrap())),
        }),
        ("sum_diagonal_l1".into(), CatalogAtom::SumWithQuadratic {
            matrix: DMatrix::from_diagonal(&ramp(0.5, 0.7)),
            vector: ramp(-0.4, 0.3),
            other: Box::new(CatalogAtom::L1Subdifferential { dim, lambda: 0.3 }),
        }),
        ("sum_diagonal_box".into(), CatalogAtom::SumWithQuadratic {
            matrix: DMatrix::from_diagonal(&ramp(0.0, 1.0)),
            vector: ramp(0.2, -0.1),
            other: Box::new(cone(DomainDescriptor::boxed(ramp(-0.5, 0.0), ramp(0.5, 0.2)).unwrap())),
        }),
        ("linear_regression".into(), CatalogAtom::LinearRegression { features: ramp(0.4, -0.15), target: 0.7 }),
        ("cubic".into(), CatalogAtom::Cubic { dim, coefficient: 0.5 }),
    ]
}

fn check_positive_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::Construction("dimension must be positive".into()))
    } else {
        Ok(())
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Construction(format!("{what} must be square and nonempty, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Construction(format!("{what} has non-finite entries")));
    }
    Ok(m.nrows())
}

fn check_set(set: &DomainDescriptor) -> Result<()> {
    let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
    let ok = match set {
        DomainDescriptor::Full => true,
        DomainDescriptor::Box { lo, hi } => {
            lo.len() == hi.len() && lo.iter().zip(hi.iter()).all(|(l, h)| !l.is_nan() && !h.is_nan() && l <= h)
        }
        DomainDescriptor::Halfspace { normal, offset } => finite(normal) && normal.norm() > 0.0 && offset.is_finite(),
        DomainDescriptor::Ball { center, radius } => finite(center) && radius.is_finite() && *radius >= 0.0,
        DomainDescriptor::Affine { anchor, basis } => {
            finite(anchor) && basis.nrows() == anchor.len() && {
                let gram = basis.transpose() * basis;
                (gram - DMatrix::identity(basis.ncols(), basis.ncols())).amax() <= 1e-10
            }
        }
        DomainDescriptor::Ray { origin, direction } => {
            finite(origin) && origin.len() == direction.len() && (direction.norm() - 1.0).abs() <= 1e-12
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Construction(format!("ill-formed set {set:?}")))
    }
}

fn quadratic(matrix: DMatrix<f64>, vector: DVector<f64>) -> Result<OperatorAtom> {
    let dim = check_square(&matrix, "quadratic matrix")?;
    if vector.len() != dim {
        return Err(Error::Dimension { expected: dim, got: vector.len() });
    }
    ensure_finite(&vector, "quadratic vector")?;
    let scale = 1.0 + matrix.amax();
    let asym = (&matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Construction(format!("matrix is not symmetric (‖Q - Qᵀ‖max = {asym:e})")));
    }
    let sym = (&matrix + matrix.transpose()) / 2.0;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min < -PSD_TOL * scale {
        return Err(Error::Construction(format!("matrix is not positive semidefinite (min eigenvalue {min:e})")));
    }

    // The minimum of ½xᵀQx + qᵀx is attained iff q lies in the range of Q.
    let rank_tol = PSD_TOL * scale;
    let mut residual = vector.clone();
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        if *l > rank_tol {
            let v = eig.eigenvectors.column(k);
            residual -= v * v.dot(&vector);
        }
    }
    let attained = residual.norm() <= 1e-9 * (1.0 + vector.norm());

    let mut flags = Vec::new();
    if min > rank_tol {
        flags.push(DemipositivityFlag::StronglyMonotone(min));
    }
    if max > rank_tol {
        flags.push(DemipositivityFlag::Cocoercive(1.0 / max));
    }
    if attained {
        flags.push(DemipositivityFlag::SubdifferentialWithMinimum);
        flags.push(DemipositivityFlag::ThreeMonotone);
        if max <= 2.0 {
            flags.push(DemipositivityFlag::IdentityMinusNonexpansive);
        }
        if max <= rank_tol {
            flags.push(DemipositivityFlag::NonemptyInteriorZeros);
        }
    }
    Ok(OperatorAtom {
        kind: AtomKind::Quadratic { matrix, vector, eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors },
        dim,
        domain: DomainDescriptor::Full,
        flags,
        potential: true,
    })
}

fn sum_with_quadratic(matrix: &DMatrix<f64>, vector: &DVector<f64>, other: &CatalogAtom) -> Result<OperatorAtom> {
    let quad = quadratic(matrix.clone(), vector.clone())?;
    let other = make_atom(other)?;
    if other.dim != quad.dim {
        return Err(Error::Dimension { expected: quad.dim, got: other.dim });
    }
    let n = quad.dim;
    let route = if let Some((m, v)) = other.linear_part() {
        SumRoute::Linear { matrix: matrix + m, vector: vector + v }
    } else if let Some(beta) = isotropic(matrix) {
        SumRoute::Isotropic { beta, vector: vector.clone() }
    } else if is_diagonal(matrix) && other.is_separable() {
        SumRoute::Diagonal { diag: DVector::from_fn(n, |i, _| matrix[(i, i)]), vector: vector.clone() }
    } else {
        return Err(Error::Construction(format!(
            "no closed-form resolvent for a general quadratic plus a {} atom",
            other.kind_name()
        )));
    };
    let strong = quad.strong_monotonicity() + other.strong_monotonicity();
    let potential = other.potential;
    let mut flags = Vec::new();
    if strong > 0.0 {
        flags.push(DemipositivityFlag::StronglyMonotone(strong));
        if potential {
            flags.push(DemipositivityFlag::SubdifferentialWithMinimum);
            flags.push(DemipositivityFlag::ThreeMonotone);
        }
    }
    Ok(OperatorAtom {
        dim: n,
        domain: other.domain.clone(),
        flags,
        potential,
        kind: AtomKind::SumWithQuadratic { quad: Box::new(quad), other: Box::new(other), route },
    })
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| i == j || m[(i, j)] == 0.0))
}

fn isotropic(m: &DMatrix<f64>) -> Option<f64> {
    let beta = m[(0, 0)];
    (is_diagonal(m) && (0..m.nrows()).all(|i| m[(i, i)] == beta)).then_some(beta)
}
