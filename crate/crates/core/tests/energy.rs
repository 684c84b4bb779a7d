use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use ldg_core::dg::*;
use ldg_core::energy::*;
use ldg_core::lifting::{BoundaryData, BoundaryMode, LiftingAssembly};
use ldg_core::mesh::{build_structured_mesh, unit_square, ElementKind, Mesh, Side};
use ldg_core::metric::{Immersion, MetricField, Sym2};
use ldg_core::LdgError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem_on(mesh: Mesh, k: usize, mode: BoundaryMode, metric: MetricField, params: EnergyParams) -> Problem {
    let s = DgSpace::new(Arc::new(mesh), k).unwrap();
    Problem::new(LiftingAssembly::new(&s, mode).unwrap(), metric, params).unwrap()
}

fn flat_problem(n: usize, kind: ElementKind) -> Problem {
    problem_on(unit_square(n, kind), 2, BoundaryMode::Free, MetricField::identity(), EnergyParams::new(1.0, 1.0, 1.0, 1.0).unwrap())
}

fn cylinder_mesh(nx: usize, ny: usize, kind: ElementKind) -> Mesh {
    build_structured_mesh([0.0, 0.0], [PI, 1.0], nx, ny, kind).unwrap()
}

fn dirichlet_mesh(n: usize, kind: ElementKind) -> Mesh {
    let mut m = unit_square(n, kind);
    m.label_sides(&[Side::Left, Side::Bottom]);
    m
}

fn wavy() -> Immersion {
    Immersion::new(
        "wavy",
        |x| [x[0], x[1], 0.3 * (x[0] * x[1]).sin()],
        |x| {
            let c = 0.3 * (x[0] * x[1]).cos();
            [[1.0, 0.0], [0.0, 1.0], [c * x[1], c * x[0]]]
        },
        |x| {
            let (s, c) = ((x[0] * x[1]).sin(), (x[0] * x[1]).cos());
            [[0.0; 3], [0.0; 3], [-0.3 * s * x[1] * x[1], 0.3 * (c - s * x[0] * x[1]), -0.3 * s * x[0] * x[0]]]
        },
    )
}

fn rand_field(p: &Problem, rng: &mut ChaCha8Rng) -> DgField {
    random_rough_field(p.space(), 3, rng)
}

#[test]
fn flat_isometry_has_zero_energy_and_defect() {
    for kind in [ElementKind::Triangle, ElementKind::Quad] {
        let p = flat_problem(3, kind);
        let y = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.0]);
        let e = energy_eh(&p, &y).unwrap();
        assert!(e.total.abs() < 1e-20, "{e:?}");
        assert!(metric_defect(&p, &y).unwrap() < 1e-13);
        let pe = energy_preprocess(&p, 0.5, &y).unwrap();
        assert!(pe.e_s < 1e-25 && pe.e_b < 1e-20);
    }
}

#[test]
fn stretched_plane_defect_and_stretching_energy() {
    for kind in [ElementKind::Triangle, ElementKind::Quad] {
        let p = flat_problem(3, kind);
        let y = interpolate_vec3(p.space(), |x| [2.0 * x[0], x[1], 0.0]);
        assert_relative_eq!(metric_defect(&p, &y).unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(energy_stretching(&p, &y).unwrap(), 4.5, max_relative = 1e-12);
        let pe = energy_preprocess(&p, 0.0, &y).unwrap();
        assert_eq!(pe.e_p, pe.e_s);
        let d = defect_density(&p, &y);
        assert!(d.iter().all(|v| (v - 3.0).abs() < 1e-10));
    }
}

#[test]
fn cylinder_energy_limits() {
    for (lambda, limit) in [(0.0, 0.25 * PI), (2.0, 0.25 * PI * (1.0 + 2.0 / 8.0))] {
        let vals: Vec<f64> = [(6, 2), (12, 4), (24, 8)]
            .iter()
            .map(|&(nx, ny)| {
                let p = problem_on(
                    cylinder_mesh(nx, ny, ElementKind::Triangle),
                    2,
                    BoundaryMode::Free,
                    MetricField::cylinder(),
                    EnergyParams::new(3.0, lambda, 1.0, 1.0).unwrap(),
                );
                let y = interpolate_vec3(p.space(), |x| [x[0].sin(), x[1], x[0].cos()]);
                energy_eh(&p, &y).unwrap().total
            })
            .collect();
        assert!((vals[2] - limit).abs() < 0.01 * limit, "lambda {lambda}: {vals:?} vs {limit}");
        assert!((vals[2] - limit).abs() < (vals[0] - limit).abs());
    }
}

#[test]
fn breakdown_sums_to_total() {
    let p = problem_on(
        dirichlet_mesh(3, ElementKind::Quad),
        2,
        BoundaryMode::Dirichlet(BoundaryData::from_immersion(&wavy())),
        MetricField::stretched(0.5),
        EnergyParams::new(2.0, 1.5, 3.0, 2.0).unwrap().with_forcing(|x| [1.0, x[0], x[1] * x[1]]),
    );
    let y = rand_field(&p, &mut ChaCha8Rng::seed_from_u64(1));
    let b = energy_eh(&p, &y).unwrap();
    assert_relative_eq!(b.total, b.frobenius + b.trace + b.grad_jump + b.jump + b.forcing, max_relative = 1e-14);
    assert!(b.forcing != 0.0 && b.trace > 0.0);
}

#[test]
fn assembled_quadratic_form_matches_quadrature_route() {
    let cases = [
        (unit_square(3, ElementKind::Triangle), BoundaryMode::Free),
        (dirichlet_mesh(3, ElementKind::Quad), BoundaryMode::Dirichlet(BoundaryData::from_immersion(&wavy()))),
        (dirichlet_mesh(2, ElementKind::Triangle), BoundaryMode::Dirichlet(BoundaryData::from_immersion(&wavy()))),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (mesh, mode) in cases {
        let p = problem_on(mesh, 2, mode, MetricField::stretched(0.7), EnergyParams::new(1.3, 0.8, 2.0, 1.5).unwrap());
        for form in [BendingForm::main(&p.params), BendingForm::preprocess(), BendingForm::bilaplacian(4.0, 3.0)] {
            let q = assemble_form(&p, &form);
            assert!(q.k.is_symmetric(1e-10 * q.k.norm_inf()));
            for _ in 0..3 {
                let y = rand_field(&p, &mut rng);
                let v = rand_field(&p, &mut rng);
                let direct = half_form_value(&p, &form, &y).unwrap();
                assert_relative_eq!(0.5 * q.value(&y.coeffs), direct, max_relative = 1e-10);
                let g = q.gradient(&y.coeffs);
                let dv: f64 = g.iter().zip(&v.coeffs).map(|(a, b)| a * b).sum();
                assert_relative_eq!(dv, form_derivative(&p, &form, &y, &v).unwrap(), max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn ah_is_symmetric_and_twice_the_energy() {
    let p = problem_on(unit_square(3, ElementKind::Quad), 2, BoundaryMode::Free, MetricField::stretched(0.4), EnergyParams::new(1.0, 2.0, 1.0, 1.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..4 {
        let y = rand_field(&p, &mut rng);
        let v = rand_field(&p, &mut rng);
        assert_relative_eq!(form_ah(&p, &y, &y).unwrap(), 2.0 * energy_eh(&p, &y).unwrap().total, max_relative = 1e-12);
        assert_relative_eq!(form_ah(&p, &y, &v).unwrap(), form_ah(&p, &v, &y).unwrap(), max_relative = 1e-12, epsilon = 1e-12);
    }
}

#[test]
fn ah_is_the_gateaux_derivative() {
    let forcing = |x: [f64; 2]| [(2.0 * PI * x[0]).sin(), 0.0, (2.0 * PI * x[1]).cos()];
    let modes = [BoundaryMode::Free, BoundaryMode::Dirichlet(BoundaryData::from_immersion(&wavy()))];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mode in modes {
        let mesh = if mode.is_dirichlet() { dirichlet_mesh(3, ElementKind::Triangle) } else { unit_square(3, ElementKind::Triangle) };
        let p = problem_on(mesh, 2, mode, MetricField::stretched(0.3), EnergyParams::new(1.0, 1.0, 2.0, 1.0).unwrap().with_forcing(forcing));
        let f = p.load_vector();
        for _ in 0..3 {
            let y = rand_field(&p, &mut rng);
            let v = rand_field(&p, &mut rng);
            let eps = 1e-4;
            let ep = energy_eh(&p, &y.axpy(eps, &v).unwrap()).unwrap().total;
            let em = energy_eh(&p, &y.axpy(-eps, &v).unwrap()).unwrap().total;
            let fd = (ep - em) / (2.0 * eps);
            let fv: f64 = f.iter().zip(&v.coeffs).map(|(a, b)| a * b).sum();
            let exact = form_ah(&p, &y, &v).unwrap() - fv;
            assert!((fd - exact).abs() <= 1e-7 * exact.abs().max(1.0), "fd {fd} exact {exact}");
        }
    }
}

#[test]
fn free_mode_rejects_forcing_with_mean() {
    let s = DgSpace::new(Arc::new(unit_square(2, ElementKind::Quad)), 2).unwrap();
    let a = LiftingAssembly::new(&s, BoundaryMode::Free).unwrap();
    let params = EnergyParams::new(1.0, 0.0, 1.0, 1.0).unwrap().with_forcing(|_| [0.0, 0.0, 1.0]);
    assert!(matches!(Problem::new(a, MetricField::identity(), params), Err(LdgError::Parameter(_))));
    assert!(EnergyParams::new(1.0, 0.0, 0.0, 1.0).is_err());
    assert!(EnergyParams::new(-1.0, 0.0, 1.0, 1.0).is_err());
}

#[test]
fn non_spd_metric_names_the_point() {
    let s = DgSpace::new(Arc::new(unit_square(2, ElementKind::Quad)), 2).unwrap();
    let a = LiftingAssembly::new(&s, BoundaryMode::Free).unwrap();
    let g = MetricField::new("bad", |x| Sym2::diag(x[0] - 0.5, 1.0));
    match Problem::new(a, g, EnergyParams::new(1.0, 0.0, 1.0, 1.0).unwrap()) {
        Err(LdgError::MetricNotSpd { x, .. }) => assert!(x <= 0.5),
        other => panic!("expected metric error, got {other:?}"),
    }
}

#[test]
fn constraint_form_examples() {
    let s = DgSpace::new(Arc::new(unit_square(1, ElementKind::Quad)), 2).unwrap();
    let y = interpolate_vec3(&s, |x| [x[0], x[1], 0.0]);
    let eye = vec![[[1.0, 0.0], [0.0, 1.0]]];
    let c = interpolate_vec3(&s, |_| [1.0, -2.0, 3.0]);
    assert!(form_bh(&y, &c, &[[[0.3, 0.7], [0.7, -1.0]]]).unwrap().abs() < 1e-14);
    let v = interpolate_vec3(&s, |x| [x[0], -x[1], 0.0]);
    assert!(form_bh(&y, &v, &eye).unwrap().abs() < 1e-13);
    assert_relative_eq!(form_bh(&y, &y, &eye).unwrap(), 4.0, max_relative = 1e-13);
    assert!(form_bh(&y, &v, &[[[1.0, 0.5], [0.0, 1.0]]]).is_err());
    let t = DgSpace::new(Arc::new(unit_square(2, ElementKind::Triangle)), 2).unwrap();
    let y = interpolate_vec3(&t, |x| [x[0], x[1], 0.0]);
    assert_relative_eq!(form_bh(&y, &y, &vec![eye[0]; 8]).unwrap(), 4.0, max_relative = 1e-13);
}

#[test]
fn translation_and_rotation_invariance() {
    let p = problem_on(unit_square(3, ElementKind::Triangle), 2, BoundaryMode::Free, MetricField::stretched(0.5), EnergyParams::new(1.0, 1.0, 1.0, 1.0).unwrap());
    let y = interpolate_vec3(p.space(), |x| [x[0] + 0.1 * x[1] * x[1], x[1], 0.2 * (x[0] * 3.0).sin()]);
    let shift = interpolate_vec3(p.space(), |_| [0.4, -1.0, 2.5]);
    let ys = y.axpy(1.0, &shift).unwrap();
    assert_relative_eq!(energy_eh(&p, &ys).unwrap().total, energy_eh(&p, &y).unwrap().total, max_relative = 1e-12);
    assert_relative_eq!(metric_defect(&p, &ys).unwrap(), metric_defect(&p, &y).unwrap(), max_relative = 1e-12);
    let (a, b) = (0.7f64, -1.2f64);
    let rz = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0], [0.0, b.cos(), -b.sin()], [0.0, b.sin(), b.cos()]];
    let r: Vec<[f64; 3]> = (0..3).map(|i| std::array::from_fn(|j| (0..3).map(|l| rz[i][l] * rx[l][j]).sum())).collect();
    let nd = p.space().ndofs();
    let mut ry = DgField::zeros(p.space(), 3);
    for i in 0..3 {
        for j in 0..3 {
            for d in 0..nd {
                ry.coeffs[i * nd + d] += r[i][j] * y.coeffs[j * nd + d];
            }
        }
    }
    assert_relative_eq!(metric_defect(&p, &ry).unwrap(), metric_defect(&p, &y).unwrap(), max_relative = 1e-12);
}

#[test]
fn defect_is_bounded_by_stretching() {
    let p = problem_on(unit_square(4, ElementKind::Quad), 2, BoundaryMode::Free, MetricField::stretched(1.0), EnergyParams::new(1.0, 1.0, 1.0, 1.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let y = random_smooth_field(p.space(), 3, &mut rng);
        let d = metric_defect(&p, &y).unwrap();
        let l1 = stretching_l1(&p, &y);
        let es = energy_stretching(&p, &y).unwrap();
        assert!(d <= l1 * (1.0 + 1e-12) && l1 <= (2.0 * es).sqrt() * (1.0 + 1e-12));
        let (lhs, rhs) = gradient_estimate_check(&p, &y).unwrap();
        assert!(lhs <= rhs, "{lhs} > {rhs}");
    }
}

#[test]
fn preprocessing_forms() {
    let p = flat_problem(3, ElementKind::Triangle);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let flat = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.0]);
    let anchor = random_smooth_field(p.space(), 3, &mut rng);
    let s = stretching_matrix(&p, &anchor);
    let nd = p.space().ndofs();
    for _ in 0..3 {
        let u = rand_field(&p, &mut rng);
        let v = rand_field(&p, &mut rng);
        assert!(form_as(&p, &flat, &u, &v).unwrap().abs() < 1e-12);
        let f = forms_preprocess(&p, &anchor, &u, &v).unwrap();
        assert_relative_eq!(f.a_s, form_as(&p, &anchor, &v, &u).unwrap(), max_relative = 1e-12);
        let m: f64 = (0..3).map(|c| s.bilinear(&v.coeffs[c * nd..(c + 1) * nd], &u.coeffs[c * nd..(c + 1) * nd])).sum();
        assert_relative_eq!(f.a_s, m, max_relative = 1e-10, epsilon = 1e-10);
        let pe = energy_preprocess(&p, 1.0, &v).unwrap();
        assert_relative_eq!(forms_preprocess(&p, &anchor, &v, &v).unwrap().a_b, 2.0 * pe.e_b, max_relative = 1e-12);
    }
    // the stretching gradient is the derivative of E_s
    let y = anchor;
    let v = random_smooth_field(p.space(), 3, &mut rng);
    let g = stretching_gradient(&p, &y);
    let eps = 1e-5;
    let fd = (energy_stretching(&p, &y.axpy(eps, &v).unwrap()).unwrap() - energy_stretching(&p, &y.axpy(-eps, &v).unwrap()).unwrap()) / (2.0 * eps);
    let dv: f64 = g.iter().zip(&v.coeffs).map(|(a, b)| a * b).sum();
    assert_relative_eq!(fd, dv, max_relative = 1e-6);
}

#[test]
fn continuous_energy_identity() {
    let s = DgSpace::new(Arc::new(cylinder_mesh(6, 2, ElementKind::Quad)), 3).unwrap();
    let r = continuous_energy_check(&s, &Immersion::cylinder(), &MetricField::cylinder(), 3.0, 1.0).unwrap();
    assert_relative_eq!(r.e_via_ii, r.e_via_hessian, max_relative = 1e-10);
    assert!(r.f1_max_abs <= 1e-10);
    assert_relative_eq!(r.e_via_ii, 0.25 * PI * (1.0 + 1.0 / 7.0), max_relative = 1e-10);
    let plane = continuous_energy_check(&s, &Immersion::plane(), &MetricField::identity(), 1.0, 1.0).unwrap();
    assert!(plane.e_via_ii.abs() < 1e-14 && plane.e_via_hessian.abs() < 1e-14);
    let c = DgSpace::new(Arc::new(build_structured_mesh([-1.0, 0.0], [1.0, 2.0 * PI], 3, 6, ElementKind::Triangle).unwrap()), 2).unwrap();
    let cat = continuous_energy_check(&c, &Immersion::catenoid(), &MetricField::catenoid(), 1.0, 0.5).unwrap();
    assert!(cat.f1_min >= -1e-10 && cat.f1_max_abs > 1e-3, "{cat:?}");
    assert!(matches!(
        continuous_energy_check(&s, &Immersion::plane(), &MetricField::cylinder(), 1.0, 0.0),
        Ok(_)
    ));
    assert!(matches!(
        continuous_energy_check(&c, &Immersion::plane(), &MetricField::catenoid(), 1.0, 0.0),
        Err(LdgError::NotAdmissible { .. })
    ));
}

#[test]
fn interpolant_defect_decays_linearly() {
    let d: Vec<f64> = [(6, 2), (12, 4), (24, 8)]
        .iter()
        .map(|&(nx, ny)| {
            let p = problem_on(cylinder_mesh(nx, ny, ElementKind::Triangle), 2, BoundaryMode::Free, MetricField::cylinder(), EnergyParams::new(1.0, 0.0, 1.0, 1.0).unwrap());
            metric_defect(&p, &interpolate_vec3(p.space(), |x| [x[0].sin(), x[1], x[0].cos()])).unwrap()
        })
        .collect();
    for w in d.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.9, "{d:?}");
    }
}

#[test]
fn coercivity_ratio_is_stable() {
    let r: Vec<CoercivityReport> =
        [2, 4, 8].iter().map(|&n| coercivity_check(&flat_problem(n, ElementKind::Triangle), 10, 3).unwrap()).collect();
    for w in r.windows(2) {
        assert!(w[0].ratio_min > 0.0 && w[1].ratio_min > 0.5 * w[0].ratio_min && w[1].ratio_min < 2.0 * w[0].ratio_min, "{r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_is_translation_invariant(seed in 0u64..500, c in prop::array::uniform3(-5.0f64..5.0)) {
        let p = flat_problem(2, ElementKind::Quad);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = rand_field(&p, &mut rng);
        let ys = y.axpy(1.0, &interpolate_vec3(p.space(), |_| c)).unwrap();
        let (a, b) = (energy_eh(&p, &y).unwrap().total, energy_eh(&p, &ys).unwrap().total);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let (da, db) = (metric_defect(&p, &y).unwrap(), metric_defect(&p, &ys).unwrap());
        prop_assert!((da - db).abs() <= 1e-12 * da.max(1.0));
    }

    #[test]
    fn defect_is_nonnegative(seed in 0u64..500, s in 0.1f64..3.0) {
        let p = flat_problem(2, ElementKind::Triangle);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = rand_field(&p, &mut rng).scaled(s * rng.gen_range(0.5..1.5));
        prop_assert!(metric_defect(&p, &y).unwrap() >= 0.0);
    }
}
