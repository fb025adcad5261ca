//! Closed convex domains: membership, projection, distance and normal cones.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::valueset::{Shape, ValueSet};
use crate::{CONTAINMENT_TOL, DOMAIN_TOL};

/// Closure of an operator domain.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainDescriptor {
    Full,
    /// `lo <= x <= hi` coordinatewise; bounds may be infinite, so orthants
    /// are boxes too.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `<normal, x> <= offset`.
    Halfspace { normal: DVector<f64>, offset: f64 },
    Ball { center: DVector<f64>, radius: f64 },
    /// `anchor + span(basis)`, `basis` with orthonormal columns.
    Affine { anchor: DVector<f64>, basis: DMatrix<f64> },
    /// `{origin + t d : t >= 0}`, `d` of unit norm.
    Ray { origin: DVector<f64>, direction: DVector<f64> },
}

impl DomainDescriptor {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::Construction("box bounds must satisfy lo <= hi".into()));
        }
        Ok(DomainDescriptor::Box { lo, hi })
    }

    /// `{x : signs[i] * x[i] >= 0}`; a zero sign leaves the coordinate free.
    pub fn orthant(signs: &[f64]) -> Self {
        let n = signs.len();
        let lo = DVector::from_fn(n, |i, _| if signs[i] > 0.0 { 0.0 } else { f64::NEG_INFINITY });
        let hi = DVector::from_fn(n, |i, _| if signs[i] < 0.0 { 0.0 } else { f64::INFINITY });
        DomainDescriptor::Box { lo, hi }
    }

    pub fn halfspace(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if normal.norm() == 0.0 || !offset.is_finite() {
            return Err(Error::Construction("halfspace needs a nonzero normal and finite offset".into()));
        }
        Ok(DomainDescriptor::Halfspace { normal, offset })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Construction("ball radius must be finite and nonnegative".into()));
        }
        Ok(DomainDescriptor::Ball { center, radius })
    }

    /// Affine set through `anchor` spanned by the columns of `directions`.
    /// The columns are orthonormalised; dependent columns are dropped.
    pub fn affine(anchor: DVector<f64>, directions: &DMatrix<f64>) -> Result<Self> {
        if directions.nrows() != anchor.len() {
            return Err(Error::Dimension { expected: anchor.len(), got: directions.nrows() });
        }
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for j in 0..directions.ncols() {
            let mut c = directions.column(j).into_owned();
            for q in &cols {
                c -= q * q.dot(&c);
            }
            let n = c.norm();
            if n > 1e-10 * (1.0 + directions.column(j).norm()) {
                cols.push(c / n);
            }
        }
        let basis = if cols.is_empty() {
            DMatrix::zeros(anchor.len(), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(DomainDescriptor::Affine { anchor, basis })
    }

    pub fn ray(origin: DVector<f64>, direction: DVector<f64>) -> Result<Self> {
        let n = direction.norm();
        if n == 0.0 || origin.len() != direction.len() {
            return Err(Error::Construction("ray needs a nonzero direction of matching dimension".into()));
        }
        Ok(DomainDescriptor::Ray { origin, direction: direction / n })
    }

    pub fn is_full(&self) -> bool {
        matches!(self, DomainDescriptor::Full)
    }

    /// Ambient dimension, if the descriptor fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DomainDescriptor::Full => None,
            DomainDescriptor::Box { lo, .. } => Some(lo.len()),
            DomainDescriptor::Halfspace { normal, .. } => Some(normal.len()),
            DomainDescriptor::Ball { center, .. } => Some(center.len()),
            DomainDescriptor::Affine { anchor, .. } => Some(anchor.len()),
            DomainDescriptor::Ray { origin, .. } => Some(origin.len()),
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != dim => Err(Error::Dimension { expected: dim, got: d }),
            _ => Ok(()),
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DomainDescriptor::Full => x.clone(),
            DomainDescriptor::Box { lo, hi } => {
                DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i]))
            }
            DomainDescriptor::Halfspace { normal, offset } => {
                let excess = normal.dot(x) - offset;
                if excess > 0.0 {
                    x - normal * (excess / normal.norm_squared())
                } else {
                    x.clone()
                }
            }
            DomainDescriptor::Ball { center, radius } => {
                let d = x - center;
                let n = d.norm();
                if n > *radius {
                    center + d * (radius / n)
                } else {
                    x.clone()
                }
            }
            DomainDescriptor::Affine { anchor, basis } => {
                if basis.ncols() == 0 {
                    anchor.clone()
                } else {
                    anchor + basis * (basis.transpose() * (x - anchor))
                }
            }
            DomainDescriptor::Ray { origin, direction } => {
                origin + direction * direction.dot(&(x - origin)).max(0.0)
            }
        }
    }

    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        (x - self.project(x)).norm()
    }

    /// Membership up to the boundary tolerance `DOMAIN_TOL * (1 + ‖x‖)`.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.distance(x) <= DOMAIN_TOL * (1.0 + x.norm())
    }

    /// Normal cone `N(x)` as a value-set descriptor. Faces within
    /// `CONTAINMENT_TOL * (1 + ‖x‖)` of `x` count as active.
    pub fn normal_cone(&self, x: &DVector<f64>) -> Result<ValueSet> {
        let distance = self.distance(x);
        if distance > DOMAIN_TOL * (1.0 + x.norm()) {
            return Err(Error::Domain { distance });
        }
        let n = x.len();
        let act = CONTAINMENT_TOL * (1.0 + x.norm());
        let zero = DVector::zeros(n);
        let shape = match self {
            DomainDescriptor::Full => Shape::Point,
            DomainDescriptor::Box { lo, hi } => {
                let mut any = false;
                let clo = DVector::from_fn(n, |i, _| {
                    if x[i] - lo[i] <= act {
                        any = true;
                        f64::NEG_INFINITY
                    } else {
                        0.0
                    }
                });
                let chi = DVector::from_fn(n, |i, _| {
                    if hi[i] - x[i] <= act {
                        any = true;
                        f64::INFINITY
                    } else {
                        0.0
                    }
                });
                if any {
                    Shape::Box { lo: clo, hi: chi }
                } else {
                    Shape::Point
                }
            }
            DomainDescriptor::Halfspace { normal, offset } => {
                let nn = normal.norm();
                if offset - normal.dot(x) <= act * nn {
                    Shape::Ray { direction: normal / nn }
                } else {
                    Shape::Point
                }
            }
            DomainDescriptor::Ball { center, radius } => {
                let d = x - center;
                let dn = d.norm();
                if *radius == 0.0 || dn == 0.0 && *radius <= act {
                    Shape::Complement { basis: DMatrix::zeros(n, 0) }
                } else if radius - dn <= act {
                    Shape::Ray { direction: d / dn }
                } else {
                    Shape::Point
                }
            }
            DomainDescriptor::Affine { basis, .. } => {
                if basis.ncols() == n {
                    Shape::Point
                } else {
                    Shape::Complement { basis: basis.clone() }
                }
            }
            DomainDescriptor::Ray { origin, direction } => {
                if direction.dot(&(x - origin)) <= act {
                    Shape::Polar { normal: direction.clone() }
                } else {
                    Shape::Complement { basis: DMatrix::from_column_slice(n, 1, direction.as_slice()) }
                }
            }
        };
        Ok(ValueSet::new(zero, shape))
    }

    pub fn has_interior(&self, dim: usize) -> bool {
        match self {
            DomainDescriptor::Full | DomainDescriptor::Halfspace { .. } => true,
            DomainDescriptor::Box { lo, hi } => lo.iter().zip(hi.iter()).all(|(l, h)| l < h),
            DomainDescriptor::Ball { radius, .. } => *radius > 0.0,
            DomainDescriptor::Affine { basis, .. } => basis.ncols() == dim,
            DomainDescriptor::Ray { .. } => dim == 1,
        }
    }

    /// Signed depth: the radius of the largest ball around `x` inside the set
    /// when positive, minus the distance to the set otherwise (sets without
    /// interior never report positive depth).
    pub fn depth(&self, x: &DVector<f64>) -> f64 {
        let dist = self.distance(x);
        if dist > 0.0 {
            return -dist;
        }
        match self {
            DomainDescriptor::Full => f64::INFINITY,
            DomainDescriptor::Box { lo, hi } => (0..x.len())
                .map(|i| (x[i] - lo[i]).min(hi[i] - x[i]))
                .fold(f64::INFINITY, f64::min),
            DomainDescriptor::Halfspace { normal, offset } => (offset - normal.dot(x)) / normal.norm(),
            DomainDescriptor::Ball { center, radius } => radius - (x - center).norm(),
            DomainDescriptor::Affine { basis, .. } => {
                if basis.ncols() == x.len() {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            DomainDescriptor::Ray { origin, direction } => {
                if x.len() == 1 {
                    direction.dot(&(x - origin))
                } else {
                    0.0
                }
            }
        }
    }

    /// Unit ascent direction of [`depth`](Self::depth) at `x`.
    fn depth_direction(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = x.len();
        let p = self.project(x);
        let toward = &p - x;
        let tn = toward.norm();
        if tn > 0.0 {
            return toward / tn;
        }
        match self {
            DomainDescriptor::Box { lo, hi } => {
                let mut best = (f64::INFINITY, 0, 0.0);
                for i in 0..n {
                    if x[i] - lo[i] < best.0 {
                        best = (x[i] - lo[i], i, 1.0);
                    }
                    if hi[i] - x[i] < best.0 {
                        best = (hi[i] - x[i], i, -1.0);
                    }
                }
                let mut d = DVector::zeros(n);
                if best.0.is_finite() {
                    d[best.1] = best.2;
                }
                d
            }
            DomainDescriptor::Halfspace { normal, .. } => -normal / normal.norm(),
            DomainDescriptor::Ball { center, .. } => {
                let d = center - x;
                let dn = d.norm();
                if dn > 0.0 {
                    d / dn
                } else {
                    DVector::zeros(n)
                }
            }
            DomainDescriptor::Ray { direction, .. } if n == 1 => direction.clone(),
            _ => DVector::zeros(n),
        }
    }
}

/// Euclidean projection onto the intersection of `sets` by Dykstra's
/// alternating projections.
///
/// Stops when a full cycle moves the iterate by at most `tol * (1 + ‖x‖)`
/// and the iterate is within that distance of every set. Fails with
/// [`Error::Infeasible`] if the cycle cap is reached while some set is still
/// farther than `1e-9 * (1 + ‖x‖)`.
pub fn project_intersection(
    sets: &[&DomainDescriptor],
    x: &DVector<f64>,
    tol: f64,
    max_cycles: usize,
) -> Result<DVector<f64>> {
    let active: Vec<&DomainDescriptor> = sets.iter().copied().filter(|s| !s.is_full()).collect();
    match active.len() {
        0 => return Ok(x.clone()),
        1 => return Ok(active[0].project(x)),
        _ => {}
    }
    let scale = 1.0 + x.norm();
    let mut z = x.clone();
    let mut increments = vec![DVector::zeros(x.len()); active.len()];
    for _ in 0..max_cycles {
        let prev = z.clone();
        for (set, inc) in active.iter().zip(increments.iter_mut()) {
            let w = &z + &*inc;
            let p = set.project(&w);
            *inc = w - &p;
            z = p;
        }
        if (&z - &prev).norm() <= tol * scale && max_distance(&active, &z) <= tol * scale {
            return Ok(z);
        }
    }
    let worst = max_distance(&active, &z);
    if worst <= CONTAINMENT_TOL * scale {
        Ok(z)
    } else {
        Err(Error::Infeasible(format!(
            "alternating projections did not reach the intersection (worst set distance {worst:e})"
        )))
    }
}

fn max_distance(sets: &[&DomainDescriptor], z: &DVector<f64>) -> f64 {
    sets.iter().map(|s| s.distance(z)).fold(0.0, f64::max)
}

/// Default Dykstra settings used wherever the essential intersection is
/// projected onto.
pub const INTERSECTION_TOL: f64 = 1e-13;
pub const INTERSECTION_MAX_CYCLES: usize = 100_000;

/// Distance from `x` to the intersection of `sets`.
pub fn distance_to_intersection(sets: &[&DomainDescriptor], x: &DVector<f64>) -> Result<f64> {
    let p = project_intersection(sets, x, INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)?;
    Ok((x - p).norm())
}

/// Searches for a point of maximal depth in the intersection of `sets`
/// (projected subgradient ascent on the smallest depth). Returns the best
/// point found and its depth; a positive depth certifies a nonempty interior.
pub fn interior_probe(
    sets: &[&DomainDescriptor],
    start: &DVector<f64>,
    iterations: usize,
) -> Result<(DVector<f64>, f64)> {
    let min_depth = |x: &DVector<f64>| sets.iter().map(|s| s.depth(x)).fold(f64::INFINITY, f64::min);
    let mut x = project_intersection(sets, start, INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)?;
    let mut best = (x.clone(), min_depth(&x));
    let step0 = 0.5 * (1.0 + start.norm());
    for k in 0..iterations {
        if best.1 == f64::INFINITY {
            break;
        }
        let worst = sets
            .iter()
            .min_by(|a, b| a.depth(&x).total_cmp(&b.depth(&x)))
            .expect("at least one set");
        let d = worst.depth_direction(&x);
        if d.norm() == 0.0 {
            break;
        }
        x += d * (step0 / (1.0 + k as f64).sqrt());
        let depth = min_depth(&x);
        if depth > best.1 {
            best = (x.clone(), depth);
        }
    }
    Ok(best)
}
