use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sfb_core::catalog::showcase;
use sfb_core::laws::{check_laws, LawConfig};
use sfb_core::{make_atom, prox_l1, CatalogAtom, DomainDescriptor};

#[test]
fn every_showcase_atom_obeys_the_laws() {
    for dim in [2, 3, 5] {
        for (name, spec) in showcase(dim) {
            let atom = make_atom(&spec).unwrap_or_else(|e| panic!("{name}: {e}"));
            let report = check_laws(&atom, &LawConfig { seed: dim as u64, ..LawConfig::default() }).unwrap();
            assert!(report.holds(1e-9), "{name} (N={dim}): {report:?}");
            assert!(report.resolvent_identity <= 1e-12, "{name}: {report:?}");
        }
    }
}

#[test]
fn skew_operators_are_orthogonal_to_their_argument() {
    for (name, spec) in showcase(4) {
        if let CatalogAtom::SkewLinear { matrix } = spec {
            for k in 0..50 {
                let x = DVector::from_fn(4, |i, _| ((k * 13 + i * 7) % 11) as f64 - 5.0);
                assert!((&matrix * &x).dot(&x).abs() <= 1e-12 * (1.0 + x.norm_squared()), "{name}");
            }
        }
    }
}

#[test]
fn normal_cones_vanish_inside_and_resolve_to_projections() {
    let sets = [
        DomainDescriptor::boxed(DVector::from_element(3, -1.0), DVector::from_element(3, 2.0)).unwrap(),
        DomainDescriptor::ball(DVector::from_element(3, 0.5), 1.0).unwrap(),
        DomainDescriptor::halfspace(DVector::from_column_slice(&[1.0, 2.0, -1.0]), 0.3).unwrap(),
    ];
    for set in sets {
        let atom = make_atom(&CatalogAtom::NormalCone { dim: 3, set: set.clone() }).unwrap();
        for k in 0..100 {
            let x = DVector::from_fn(3, |i, _| (((k * 31 + i * 17) % 23) as f64 - 11.0) / 3.0);
            assert_eq!(atom.resolvent(0.37, &x).unwrap(), set.project(&x));
            if set.depth(&x) > 1e-6 {
                assert_eq!(atom.least_norm(&x).unwrap().norm(), 0.0);
                assert!(atom.value_set(&x).unwrap().is_singleton());
            }
        }
    }
}

fn vector(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_map(DVector::from_vec)
}

fn psd(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |v| {
        let a = DMatrix::from_vec(dim, dim, v);
        a.transpose() * a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quadratic_resolvent_solves_the_linear_system(q in psd(4), b in vector(4), x in vector(4), g in 1e-3f64..50.0) {
        let atom = make_atom(&CatalogAtom::QuadraticGradient { matrix: q.clone(), vector: b.clone() }).unwrap();
        let z = atom.resolvent(g, &x).unwrap();
        let residual = (&z + (&q * &z) * g) - (&x - &b * g);
        prop_assert!(residual.norm() < 1e-10 * (1.0 + x.norm() + g * b.norm() + g * q.norm() * z.norm()));
    }

    #[test]
    fn scaling_identity(c in 0.01f64..20.0, lambda in 0.0f64..3.0, x in vector(3), g in 1e-3f64..10.0) {
        let inner = CatalogAtom::L1Subdifferential { dim: 3, lambda };
        let scaled = make_atom(&CatalogAtom::Scaled { factor: c, inner: Box::new(inner.clone()) }).unwrap();
        let inner = make_atom(&inner).unwrap();
        prop_assert!((scaled.resolvent(g, &x).unwrap() - inner.resolvent(c * g, &x).unwrap()).norm() <= 1e-10);
    }

    #[test]
    fn prox_l1_is_the_l1_resolvent(lambda in 0.0f64..3.0, x in vector(5), g in 1e-3f64..10.0) {
        let atom = make_atom(&CatalogAtom::L1Subdifferential { dim: 5, lambda }).unwrap();
        prop_assert_eq!(prox_l1(lambda, g, &x).unwrap(), atom.resolvent(g, &x).unwrap());
    }

    #[test]
    fn resolvent_is_firmly_nonexpansive(q in psd(3), x in vector(3), x2 in vector(3), g in 1e-3f64..100.0, lambda in 0.0f64..2.0) {
        let spec = CatalogAtom::SumWithQuadratic {
            matrix: DMatrix::identity(3, 3) * q[(0, 0)],
            vector: DVector::zeros(3),
            other: Box::new(CatalogAtom::L1Subdifferential { dim: 3, lambda }),
        };
        for atom in [make_atom(&spec).unwrap(), make_atom(&CatalogAtom::QuadraticGradient { matrix: q.clone(), vector: DVector::zeros(3) }).unwrap()] {
            let d = atom.resolvent(g, &x).unwrap() - atom.resolvent(g, &x2).unwrap();
            prop_assert!(d.norm_squared() <= d.dot(&(&x - &x2)) + 1e-9 * (1.0 + x.norm().max(x2.norm())));
        }
    }

    #[test]
    fn domain_projection_is_idempotent_and_consistent(c in vector(3), r in 0.0f64..4.0, x in vector(3)) {
        let set = DomainDescriptor::ball(c, r).unwrap();
        let p = set.project(&x);
        prop_assert!((set.project(&p) - &p).norm() <= 1e-12 * (1.0 + p.norm()));
        prop_assert!(((&x - &p).norm() - set.distance(&x)).abs() <= 1e-12);
        prop_assert!(set.contains(&p));
    }

    #[test]
    fn graph_samples_are_monotone(lambda in 0.0f64..2.0, seed in any::<u64>()) {
        let atom = make_atom(&CatalogAtom::SumWithQuadratic {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 1.0, 2.0])),
            vector: DVector::zeros(3),
            other: Box::new(CatalogAtom::L1Subdifferential { dim: 3, lambda }),
        }).unwrap();
        let region = DomainDescriptor::boxed(DVector::from_element(3, -2.0), DVector::from_element(3, 2.0)).unwrap();
        let pairs = atom.graph_sample(&region, 20, seed).unwrap();
        for (i, (x, y)) in pairs.iter().enumerate() {
            prop_assert!(atom.value_set(x).unwrap().contains(y, 1e-9));
            for (x2, y2) in &pairs[i + 1..] {
                prop_assert!((y - y2).dot(&(x - x2)) >= -1e-9);
            }
        }
    }
}
