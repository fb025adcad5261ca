//! Exact descriptors for the value set `A(x)` of an operator at a point.
//!
//! Every value set produced by the catalog is an offset plus one of a few
//! closed convex shapes, which keeps membership tests and the least-norm
//! selection exact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Closed convex shape anchored at the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `{0}`.
    Point,
    /// Coordinatewise bounds, possibly infinite. Covers intervals, products
    /// of intervals and the normal cones of boxes.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `{t d : t >= 0}` for a unit direction `d`.
    Ray { direction: DVector<f64> },
    /// `{v : <n, v> <= 0}` for a unit normal `n`.
    Polar { normal: DVector<f64> },
    /// `{v : B^T v = 0}` for a matrix `B` with orthonormal columns. With zero
    /// columns this is the whole space.
    Complement { basis: DMatrix<f64> },
}

impl Shape {
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Shape::Point => DVector::zeros(v.len()),
            Shape::Box { lo, hi } => {
                DVector::from_fn(v.len(), |i, _| v[i].max(lo[i]).min(hi[i]))
            }
            Shape::Ray { direction } => direction * direction.dot(v).max(0.0),
            Shape::Polar { normal } => {
                let excess = normal.dot(v).max(0.0);
                v - normal * excess
            }
            Shape::Complement { basis } => {
                if basis.ncols() == 0 {
                    v.clone()
                } else {
                    v - basis * (basis.transpose() * v)
                }
            }
        }
    }

    /// The shape multiplied by `c > 0`. Cones are invariant.
    pub fn scaled(&self, c: f64) -> Shape {
        match self {
            Shape::Box { lo, hi } => Shape::Box { lo: lo * c, hi: hi * c },
            other => other.clone(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match self {
            Shape::Point => DVector::zeros(dim),
            Shape::Box { lo, hi } => DVector::from_fn(dim, |i, _| {
                let (l, h) = (lo[i], hi[i]);
                let e: f64 = Exp1.sample(rng);
                match (l.is_finite(), h.is_finite()) {
                    (true, true) => l + (h - l) * rng.random::<f64>(),
                    (true, false) => l + e,
                    (false, true) => h - e,
                    (false, false) => StandardNormal.sample(rng),
                }
            }),
            Shape::Ray { direction } => {
                let t: f64 = Exp1.sample(rng);
                direction * t
            }
            Shape::Polar { .. } | Shape::Complement { .. } => {
                let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
                self.project(&g)
            }
        }
    }
}

/// `offset + shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    pub offset: DVector<f64>,
    pub shape: Shape,
}

impl ValueSet {
    pub fn singleton(v: DVector<f64>) -> Self {
        ValueSet { offset: v, shape: Shape::Point }
    }

    pub fn new(offset: DVector<f64>, shape: Shape) -> Self {
        ValueSet { offset, shape }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn is_singleton(&self) -> bool {
        matches!(self.shape, Shape::Point)
    }

    /// Euclidean projection of `v` onto the set.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.offset + self.shape.project(&(v - &self.offset))
    }

    pub fn distance(&self, v: &DVector<f64>) -> f64 {
        (v - self.project(v)).norm()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// The element of least norm, i.e. the projection of the origin.
    pub fn least_norm(&self) -> DVector<f64> {
        self.project(&DVector::zeros(self.dim()))
    }

    pub fn scaled(&self, c: f64) -> ValueSet {
        ValueSet { offset: &self.offset * c, shape: self.shape.scaled(c) }
    }

    pub fn translated(&self, t: &DVector<f64>) -> ValueSet {
        ValueSet { offset: &self.offset + t, shape: self.shape.clone() }
    }

    /// Draws an element of the set. Unbounded directions use exponential
    /// magnitudes, so every element has positive density only along the
    /// shape's own support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.offset + self.shape.sample(self.dim(), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn interval_least_norm() {
        let s = ValueSet::new(v(&[0.0]), Shape::Box { lo: v(&[-1.0]), hi: v(&[1.0]) });
        assert_eq!(s.least_norm(), v(&[0.0]));
        let shifted = s.translated(&v(&[3.0]));
        assert_eq!(shifted.least_norm(), v(&[2.0]));
    }

    #[test]
    fn ray_and_polar_projections() {
        let ray = Shape::Ray { direction: v(&[1.0, 0.0]) };
        assert_eq!(ray.project(&v(&[-2.0, 1.0])), v(&[0.0, 0.0]));
        assert_eq!(ray.project(&v(&[2.0, 1.0])), v(&[2.0, 0.0]));
        let polar = Shape::Polar { normal: v(&[0.0, 1.0]) };
        assert_eq!(polar.project(&v(&[3.0, 2.0])), v(&[3.0, 0.0]));
        assert_eq!(polar.project(&v(&[3.0, -2.0])), v(&[3.0, -2.0]));
    }

    #[test]
    fn complement_with_empty_basis_is_everything() {
        let s = Shape::Complement { basis: DMatrix::zeros(2, 0) };
        assert_eq!(s.project(&v(&[1.0, -4.0])), v(&[1.0, -4.0]));
        let line = Shape::Complement { basis: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]) };
        assert_eq!(line.project(&v(&[1.0, -4.0])), v(&[0.0, -4.0]));
    }

    #[test]
    fn samples_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sets = [
            ValueSet::new(v(&[1.0, 1.0]), Shape::Box { lo: v(&[0.0, f64::NEG_INFINITY]), hi: v(&[2.0, 0.0]) }),
            ValueSet::new(v(&[0.0, 1.0]), Shape::Ray { direction: v(&[0.6, 0.8]) }),
            ValueSet::new(v(&[0.0, 0.0]), Shape::Polar { normal: v(&[1.0, 0.0]) }),
        ];
        for s in &sets {
            for _ in 0..50 {
                let y = s.sample(&mut rng);
                assert!(s.contains(&y, 1e-12), "{y} not in {s:?}");
            }
        }
    }
}
