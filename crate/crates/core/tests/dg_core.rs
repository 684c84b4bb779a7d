use std::sync::Arc;

use approx::assert_relative_eq;
use ldg_core::dg::forms::{grad_jump_sq, h2_matrix, jump_sq};
use ldg_core::dg::*;
use ldg_core::mesh::{build_structured_mesh, unit_square, ElementKind, Mesh};
use ldg_core::solver::symmetric_extreme_eigenvalues;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space(n: usize, kind: ElementKind, k: usize) -> Arc<DgSpace> {
    DgSpace::new(Arc::new(unit_square(n, kind)), k).unwrap()
}

fn skewed_quad() -> Arc<Mesh> {
    let v = vec![[0.0, 0.0], [1.0, 0.1], [1.2, 1.1], [-0.1, 0.9]];
    Arc::new(Mesh::new(ElementKind::Quad, v, vec![vec![0, 1, 2, 3]]).unwrap())
}

#[test]
fn hessian_of_quadratic_is_reproduced() {
    for kind in [ElementKind::Triangle, ElementKind::Quad] {
        let s = space(3, kind, 2);
        let v = interpolate_scalar(&s, |x| x[0] * x[0]);
        for k in 0..s.mesh.n_elements() {
            let ev = v.evaluate(k, &[[0.2, 0.3], [0.1, 0.1]]).unwrap();
            for h in &ev.hessians {
                assert!((h[0][0][0] - 2.0).abs() < 1e-10 && h[0][0][1].abs() < 1e-10 && h[0][1][1].abs() < 1e-10);
            }
        }
        let c = interpolate_scalar(&s, |_| 3.5);
        let ev = c.evaluate(0, &[[0.25, 0.25]]).unwrap();
        assert!(ev.gradients[0][0][0].abs() < 1e-12 && ev.hessians[0][0][1][1].abs() < 1e-11);
    }
}

#[test]
fn bilinear_map_hessian_matches_differences() {
    let s = DgSpace::new(skewed_quad(), 2).unwrap();
    let v = interpolate_scalar(&s, |x| x[0] * x[1]);
    let map = s.mesh.element_map(0);
    for &xi in &s.rule.points {
        let h = v.evaluate(0, &[xi]).unwrap().hessians[0][0];
        assert!((h[0][1] - 1.0).abs() < 1e-9 && h[0][0].abs() < 1e-9 && h[1][1].abs() < 1e-9);
        // centered differences of point values in physical coordinates
        let x = map.map(xi);
        let d = 1e-4;
        let val = |p: [f64; 2]| v.evaluate(0, &[map.inverse(p)]).unwrap().values[0][0];
        let fd = (val([x[0] + d, x[1] + d]) - val([x[0] + d, x[1] - d]) - val([x[0] - d, x[1] + d])
            + val([x[0] - d, x[1] - d]))
            / (4.0 * d * d);
        assert!((fd - h[0][1]).abs() < 1e-6);
    }
}

#[test]
fn evaluate_rejects_bad_element() {
    let s = space(1, ElementKind::Quad, 2);
    assert!(DgField::zeros(&s, 1).evaluate(5, &[[0.0, 0.0]]).is_err());
}

#[test]
fn linear_interpolant_has_no_jumps() {
    let s = space(4, ElementKind::Triangle, 3);
    let v = interpolate_scalar(&s, |x| x[0] + 2.0 * x[1]);
    assert!(jump_sq(&v, 0, Skeleton::Interior).sqrt() < 1e-13);
    let q = interpolate_scalar(&s, |x| x[0] * x[0]);
    assert!(q.l2_error(&|x| vec![x[0] * x[0]]) < 1e-13);
}

#[test]
fn interpolation_error_converges_at_order_k_plus_1() {
    let f = |x: [f64; 2]| (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
    let errs: Vec<f64> = [2, 4, 8]
        .iter()
        .map(|&n| interpolate_scalar(&space(n, ElementKind::Triangle, 2), f).l2_error(&|x| vec![f(x)]))
        .collect();
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log2() >= 2.7, "rates from {errs:?}");
    }
}

#[test]
fn h2_kernel_and_single_element_values() {
    let s = space(2, ElementKind::Quad, 2);
    let c = interpolate_scalar(&s, |_| 2.0);
    assert!(h2_inner(&c, &c, H2Mode::Semi).unwrap().abs() < 1e-20);
    assert_relative_eq!(h2_inner(&c, &c, H2Mode::Full).unwrap(), 4.0, max_relative = 1e-12);
    let one = DgSpace::new(Arc::new(build_structured_mesh([0.0, 0.0], [2.0, 1.0], 1, 1, ElementKind::Quad).unwrap()), 2).unwrap();
    let v = interpolate_scalar(&one, |x| x[0] * x[0]);
    assert_relative_eq!(h2_inner(&v, &v, H2Mode::Semi).unwrap(), 4.0 * 2.0, max_relative = 1e-12);
}

#[test]
fn h2_inner_matches_assembled_matrix() {
    let s = space(2, ElementKind::Triangle, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mode in [H2Mode::Semi, H2Mode::Full] {
        let m = h2_matrix(&s, mode, Skeleton::Interior);
        for _ in 0..5 {
            let u = random_rough_field(&s, 1, &mut rng);
            let v = random_rough_field(&s, 1, &mut rng);
            let a = h2_inner(&u, &v, mode).unwrap();
            let b = h2_inner(&v, &u, mode).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
            assert_relative_eq!(a, m.bilinear(&u.coeffs, &v.coeffs), max_relative = 1e-10, epsilon = 1e-10);
        }
    }
}

#[test]
fn full_product_is_positive_definite_and_semi_kernel_is_affine() {
    for kind in [ElementKind::Triangle, ElementKind::Quad] {
        let s = space(2, kind, 2);
        let full = h2_matrix(&s, H2Mode::Full, Skeleton::Interior).to_dense();
        let (lo, _) = symmetric_extreme_eigenvalues(&full);
        assert!(lo > 0.0);
        let semi = h2_matrix(&s, H2Mode::Semi, Skeleton::Interior).to_dense();
        let eig = semi.clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        let kernel: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] < 1e-10 * scale).collect();
        // without boundary terms the kernel is the affine functions
        assert_eq!(kernel.len(), 3);
        let basis: Vec<DgField> = [|x: [f64; 2]| 1.0 + 0.0 * x[0], |x: [f64; 2]| x[0], |x: [f64; 2]| x[1]]
            .iter()
            .map(|f| interpolate_scalar(&s, f))
            .collect();
        let a = nalgebra::DMatrix::from_fn(s.ndofs(), 3, |i, j| basis[j].coeffs[i]);
        let svd = a.svd(true, false);
        let u = svd.u.unwrap();
        for &i in &kernel {
            let z = eig.eigenvectors.column(i).into_owned();
            let r = &z - &u * (u.transpose() * &z);
            assert!(r.norm() < 1e-8);
        }
    }
}

#[test]
fn product_and_average_identity_on_edges() {
    let s = space(2, ElementKind::Triangle, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = random_rough_field(&s, 1, &mut rng);
    let v = random_rough_field(&s, 1, &mut rng);
    for (e, edge) in s.mesh.edges.iter().enumerate() {
        if edge.is_boundary() {
            continue;
        }
        let (tu, tv) = (s.edge_traces(e, &u.coeffs), s.edge_traces(e, &v.coeffs));
        let (ju, jv, au, av) = (tu.jump(), tv.jump(), tu.average(), tv.average());
        let (pm, pp) = (tu.v_minus.clone(), tu.v_plus.clone().unwrap());
        let (qm, qp) = (tv.v_minus.clone(), tv.v_plus.clone().unwrap());
        for i in 0..ju.len() {
            let juv = pm[i] * qm[i] - pp[i] * qp[i];
            assert!((juv - (ju[i] * av[i] + au[i] * jv[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn poincare_ratio_of_linear_field() {
    let s = space(4, ElementKind::Quad, 2);
    let r = inequality_ratios(&interpolate_scalar(&s, |x| x[0]));
    assert_relative_eq!(r.poincare_ratio_max, 1.0 / 12f64.sqrt(), max_relative = 1e-10);
    let c = inequality_ratios(&interpolate_scalar(&s, |_| 1.0));
    assert_eq!(c.poincare_ratio_max, 0.0);
}

#[test]
fn inequality_constants_are_stable_under_refinement() {
    let reps: Vec<InequalityReport> =
        [4, 8, 16].iter().map(|&n| functional_inequality_check(&space(n, ElementKind::Triangle, 2), 100, 1)).collect();
    for w in reps.windows(2) {
        for (a, b) in [
            (w[0].poincare_ratio_max, w[1].poincare_ratio_max),
            (w[0].sobolev_ratio_max, w[1].sobolev_ratio_max),
            (w[0].grad_bound_ratio_max, w[1].grad_bound_ratio_max),
        ] {
            assert!((a - b).abs() < 0.5 * a.max(b), "{reps:?}");
        }
    }
}

#[test]
fn rough_fields_have_nontrivial_jumps() {
    let s = space(2, ElementKind::Quad, 2);
    let v = random_rough_field(&s, 1, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(grad_jump_sq(&v, 1, Skeleton::Interior) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn h2_inner_is_bilinear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let s = space(2, ElementKind::Quad, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_rough_field(&s, 1, &mut rng);
        let v = random_rough_field(&s, 1, &mut rng);
        let w = random_rough_field(&s, 1, &mut rng);
        let lhs = h2_inner(&u.axpy(a, &v).unwrap(), &w, H2Mode::Full).unwrap();
        let rhs = h2_inner(&u, &w, H2Mode::Full).unwrap() + a * h2_inner(&v, &w, H2Mode::Full).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }
}
