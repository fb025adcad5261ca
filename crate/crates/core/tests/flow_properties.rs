use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sfb_core::flow::{integrate_flow, self_convergence};
use sfb_core::program::Family;
use sfb_core::{make_atom, CatalogAtom, DomainDescriptor, RandomProgram};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Two random halfspaces, an ℓ₁ term and a nonisotropic quadratic: the
/// resolvent needs the splitting solver.
fn split_program() -> RandomProgram {
    let cone = |n: &[f64], c| make_atom(&CatalogAtom::NormalCone { dim: 2, set: DomainDescriptor::halfspace(v(n), c).unwrap() }).unwrap();
    let l1 = make_atom(&CatalogAtom::L1Subdifferential { dim: 2, lambda: 0.4 }).unwrap();
    let q = make_atom(&CatalogAtom::QuadraticGradient { matrix: DMatrix::from_diagonal(&v(&[1.0, 3.0])), vector: v(&[-2.0, 1.0]) }).unwrap();
    let a = Family::Mixture(vec![(0.4, cone(&[1.0, 1.0], 1.5)), (0.3, cone(&[-1.0, 0.0], 1.0)), (0.3, l1)]);
    RandomProgram::new(a, Family::single(q)).unwrap()
}

const TOL: f64 = 1e-10;
const H: f64 = 0.01;

fn point(p: &RandomProgram, a: [f64; 2]) -> DVector<f64> {
    p.project_essential(&v(&a)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_on_the_grid(s in 1usize..60, t in 1usize..60, a in prop::array::uniform2(-3.0f64..3.0)) {
        let p = split_program();
        let z0 = point(&p, a);
        let (s, t) = (s as f64 * H, t as f64 * H);
        let direct = integrate_flow(&p, &z0, s + t, H, TOL).unwrap();
        let first = integrate_flow(&p, &z0, s, H, TOL).unwrap();
        let composed = integrate_flow(&p, first.last(), t, H, TOL).unwrap();
        prop_assert!((direct.last() - composed.last()).norm() <= 10.0 * TOL * (1.0 + z0.norm()));
    }

    #[test]
    fn flow_is_nonexpansive(a in prop::array::uniform2(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0), t in 0.05f64..1.0) {
        let p = split_program();
        let (z, w) = (point(&p, a), point(&p, b));
        let fz = integrate_flow(&p, &z, t, H, TOL).unwrap();
        let fw = integrate_flow(&p, &w, t, H, TOL).unwrap();
        for (x, y) in fz.points.iter().zip(&fw.points) {
            prop_assert!((x - y).norm() <= (&z - &w).norm() + 10.0 * TOL);
        }
    }
}

#[test]
fn rotation_flow_matches_the_matrix_exponential() {
    let r = make_atom(&CatalogAtom::rotation()).unwrap();
    let zero = make_atom(&CatalogAtom::Zero { dim: 2 }).unwrap();
    let p = RandomProgram::new(Family::single(r), Family::single(zero)).unwrap();
    // ż = -Rz with R the quarter turn: z(t) = (cos t, -sin t) from (1, 0)
    let flow = integrate_flow(&p, &v(&[1.0, 0.0]), 1.0, 1e-4, TOL).unwrap();
    let exact = v(&[1f64.cos(), -1f64.sin()]);
    assert!((flow.last() - exact).norm() < 1e-3, "{}", flow.last());
}

#[test]
fn flows_stay_in_the_domain_and_converge_under_refinement() {
    let p = split_program();
    let z0 = point(&p, [-2.0, 2.5]);
    let flow = integrate_flow(&p, &z0, 2.0, H, TOL).unwrap();
    assert!(flow.points.iter().all(|z| p.essential_distance(z).unwrap() < 1e-8));
    let coarse = self_convergence(&p, &z0, 2.0, 0.02, TOL).unwrap();
    let fine = self_convergence(&p, &z0, 2.0, 0.01, TOL).unwrap();
    assert!(fine < coarse && fine < 0.05, "{coarse} {fine}");
}
