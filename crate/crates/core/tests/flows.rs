use std::f64::consts::PI;
use std::sync::Arc;

use ldg_core::dg::*;
use ldg_core::energy::*;
use ldg_core::flows::*;
use ldg_core::lifting::{BoundaryData, BoundaryMode, LiftingAssembly};
use ldg_core::mesh::{build_structured_mesh, unit_square, ElementKind, Mesh, Side};
use ldg_core::metric::{Immersion, MetricField, Sym2};
use ldg_core::LdgError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn problem_on(mesh: Mesh, k: usize, mode: BoundaryMode, metric: MetricField) -> Problem {
    let s = DgSpace::new(Arc::new(mesh), k).unwrap();
    Problem::new(LiftingAssembly::new(&s, mode).unwrap(), metric, EnergyParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap()
}

fn flat_problem(n: usize) -> Problem {
    problem_on(unit_square(n, ElementKind::Triangle), 2, BoundaryMode::Free, MetricField::identity())
}

/// Flat sheet with a small smooth out-of-plane perturbation.
fn perturbed_flat(p: &Problem, seed: u64, amp: f64) -> DgField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_smooth_field(p.space(), 1, &mut rng);
    let mut y = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.0]);
    let nd = p.space().ndofs();
    for i in 0..nd {
        y.coeffs[2 * nd + i] += amp * r.coeffs[i];
    }
    y
}

/// Pull-back of the planar map `(x₁ + βx₁x₂, x₂ + βx₁², 0)`: flat, but not the identity.
fn planar_metric(beta: f64) -> MetricField {
    MetricField::new("planar", move |x| {
        let (a, b, c, d) = (1.0 + beta * x[1], beta * x[0], 2.0 * beta * x[0], 1.0);
        Sym2::new(a * a + c * c, a * b + c * d, b * b + d * d)
    })
}

fn full_boundary(mut m: Mesh) -> Mesh {
    m.label_sides(&[Side::Left, Side::Right, Side::Bottom, Side::Top]);
    m
}

fn short_flow(tau: f64, steps: usize) -> FlowConfig {
    let mut c = FlowConfig::new(tau);
    c.max_steps = steps;
    c.stationarity_samples = 5;
    c
}

#[test]
fn flat_sheet_is_a_fixed_point() {
    let p = flat_problem(3);
    let y = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.0]);
    let out = main_flow_step(&FlowConfig::new(0.5), &p, &y).unwrap();
    assert!(out.delta.coeffs.iter().all(|v| v.abs() < 1e-12));
    assert!(out.multiplier.iter().flatten().flatten().all(|v| v.abs() < 1e-10));
}

#[test]
fn flat_start_takes_no_steps_and_passes_every_certificate() {
    let p = flat_problem(3);
    let y0 = flat_start(&p);
    let (y, log) = run_main_flow(&short_flow(0.2, 50), &p, &y0).unwrap();
    assert!(log.converged && log.steps.is_empty());
    assert_eq!(y.coeffs, y0.coeffs);
    assert!(flow_certificates(&log).all_passed());
}

#[test]
fn main_flow_decreases_energy_and_keeps_linearized_constraint() {
    for seed in 0..2 {
        let p = flat_problem(3);
        let y0 = perturbed_flat(&p, seed, 0.02);
        let (_, log) = run_main_flow(&short_flow(1.0, 25), &p, &y0).unwrap();
        let mut prev = log.initial_energy;
        for s in &log.steps {
            assert!(s.energy + s.incr_norm_sq / log.tau <= prev + 1e-10, "step {}", s.step);
            assert!(s.constraint_max < 1e-10, "step {}: {:.3e}", s.step, s.constraint_max);
            assert!((s.energy - prev - s.energy_change).abs() < 1e-8 * (1.0 + prev));
            assert!(s.mean_shift.iter().all(|v| v.abs() < 1e-10));
            prev = s.energy;
        }
        let c = flow_certificates(&log);
        assert!(c.energy_decay.passed() && c.defect_control.passed() && c.mean_conservation.passed(), "{c:?}");
    }
}

#[test]
fn increments_have_zero_mean_without_boundary_data() {
    let p = flat_problem(2);
    let y = perturbed_flat(&p, 3, 0.05);
    let out = main_flow_step(&FlowConfig::new(0.25), &p, &y).unwrap();
    assert!(out.delta.integral().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn telescoped_defect_bound_holds_step_by_step() {
    let p = flat_problem(3);
    let y0 = perturbed_flat(&p, 7, 0.05);
    let (_, log) = run_main_flow(&short_flow(0.5, 15), &p, &y0).unwrap();
    let mut sum = 0.0;
    for s in &log.steps {
        sum += s.grad_incr_sq;
        assert!(s.defect <= log.initial_defect + sum + 1e-12, "step {}", s.step);
    }
}

#[test]
fn converged_flow_is_stationary_on_the_tangent_space() {
    let p = flat_problem(2);
    let y0 = perturbed_flat(&p, 1, 0.02);
    let mut cfg = FlowConfig::new(10.0);
    cfg.stationarity_samples = 20;
    let (y, log) = run_main_flow(&cfg, &p, &y0).unwrap();
    assert!(log.converged);
    let st = log.stationarity.as_ref().unwrap();
    assert!(st.residual_max <= 1e-6 * (1.0 + log.initial_energy));
    assert!(st.beta_h.unwrap() > 0.0);
    let flow = MainFlow::new(&p, 10.0).unwrap();
    assert!(flow.stationarity_residual(&y, 5, 99).unwrap() <= 1e-6 * (1.0 + log.initial_energy));
    assert!(flow_certificates(&log).all_passed());
}

#[test]
fn infsup_vanishes_for_zero_anchor_and_is_positive_on_flat_sheet() {
    let p = problem_on(unit_square(1, ElementKind::Triangle), 2, BoundaryMode::Free, MetricField::identity());
    let zero = DgField::zeros(p.space(), 3);
    assert!(estimate_infsup(&p, &zero).unwrap().unwrap().abs() < 1e-12);
    let flat = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.0]);
    assert!(estimate_infsup(&p, &flat).unwrap().unwrap() > 1e-3);
}

#[test]
fn elimination_order_does_not_change_the_step() {
    let p = flat_problem(2);
    let y = perturbed_flat(&p, 5, 0.1);
    let flow = MainFlow::new(&p, 0.3).unwrap();
    let a = flow.step_with(&y, true).unwrap();
    let b = flow.step_with(&y, false).unwrap();
    let diff = a.delta.coeffs.iter().zip(&b.delta.coeffs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff:.3e}");
}

#[test]
fn energy_increase_is_reported_with_the_step() {
    let err = LdgError::EnergyIncrease { step: 4, increase: 1e-6 };
    assert!(err.to_string().contains("step 4"));
}

#[test]
fn corrupted_log_fails_energy_certificate_at_that_step() {
    let p = flat_problem(2);
    let y0 = perturbed_flat(&p, 2, 0.05);
    let (_, mut log) = run_main_flow(&short_flow(1.0, 6), &p, &y0).unwrap();
    assert!(log.steps.len() >= 3);
    log.steps[2].energy += log.initial_energy;
    let c = flow_certificates(&log);
    assert!(!c.energy_decay.passed());
    assert!(c.energy_decay.detail.contains("step 3"), "{}", c.energy_decay.detail);

    log.steps[1].mean[0] += 1e-6;
    assert!(!flow_certificates(&log).mean_conservation.passed());
}

#[test]
fn unconverged_run_fails_stationarity() {
    let p = flat_problem(2);
    let (_, log) = run_main_flow(&short_flow(0.01, 2), &p, &perturbed_flat(&p, 2, 0.05)).unwrap();
    assert!(!log.converged);
    let c = flow_certificates(&log);
    assert_eq!(c.stationarity.status, CertStatus::Fail);
    assert!(c.stationarity.detail.contains("did not converge"));
    assert!(c.stationarity.worst.is_finite() && c.stationarity.worst > c.stationarity.threshold);
}

#[test]
fn poincare_constant_is_stable_under_refinement() {
    let c: Vec<f64> = [2, 4]
        .iter()
        .map(|&n| {
            let p = flat_problem(n);
            poincare_constant(p.space(), &flow_metric(&p)).unwrap()
        })
        .collect();
    assert!(c[0] > 0.0 && c[1] / c[0] < 2.0 && c[0] / c[1] < 2.0, "{c:?}");
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(FlowConfig::new(0.0).validate().is_err());
    assert!(PreprocessConfig::new(-1.0, 1.0).validate().is_err());
    let mut c = FlowConfig::new(1.0);
    c.tol_increment = Some(-1.0);
    assert!(c.validate().is_err());
}

fn preprocess_run(n: usize, steps: usize) -> (Problem, PreprocessLog) {
    let p = problem_on(unit_square(n, ElementKind::Triangle), 2, BoundaryMode::Free, planar_metric(0.3));
    let h = p.space().mesh.h_max();
    let mut cfg = PreprocessConfig::new(h * h, 1.0);
    cfg.max_steps = steps;
    cfg.samples = 40;
    let y0 = flat_start(&p);
    let (_, log) = run_preprocess(&cfg, &p, &y0).unwrap();
    (p, log)
}

#[test]
fn preprocessing_steps_decay_with_monotone_step_bound() {
    let (_, log) = preprocess_run(4, 12);
    assert!(!log.steps.is_empty());
    let mut prev = log.initial;
    let mut c_prev = log.initial_c_h;
    for s in &log.steps {
        assert!(s.e_p + s.incr_norm_sq / (2.0 * s.tau) <= prev.e_p + 1e-10, "step {}", s.step);
        assert!(s.tau <= 0.5 * c_prev * (1.0 + 1e-12), "step {}", s.step);
        assert!(s.c_h >= c_prev * (1.0 - 1e-12), "step {}", s.step);
        assert!(s.e_s <= prev.e_s + 1e-12 || s.e_p <= prev.e_p);
        prev = PreprocessEnergies { e_s: s.e_s, e_b: s.e_b, e_p: s.e_p };
        c_prev = s.c_h;
    }
    assert!(log.defect_bound_holds);
    assert!(log.constants.cp >= log.constants.cp_raw);
}

#[test]
fn preprocessing_stops_immediately_on_flat_isometry() {
    let p = flat_problem(3);
    let (y, log) = run_preprocess(&PreprocessConfig::new(0.0, 1.0), &p, &flat_start(&p)).unwrap();
    assert!(log.converged && log.steps.is_empty());
    assert!(metric_defect(&p, &y).unwrap() < 1e-13);
}

#[test]
fn flat_start_does_not_move_out_of_plane() {
    let p = problem_on(unit_square(3, ElementKind::Triangle), 2, BoundaryMode::Free, MetricField::stretched(1.0));
    let out = preprocess_step(&PreprocessConfig::new(0.01, 0.1), &p, &flat_start(&p)).unwrap();
    let nd = p.space().ndofs();
    assert!(out.delta.coeffs[2 * nd..].iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn wavy_start_reduces_stretching_energy() {
    let p = flat_problem(3);
    let y0 = interpolate_vec3(p.space(), |x| [x[0], x[1], 0.1 * x[0].sin()]);
    let mut cfg = PreprocessConfig::new(0.0, 0.5);
    cfg.max_steps = 5;
    cfg.samples = 20;
    let (_, log) = run_preprocess(&cfg, &p, &y0).unwrap();
    let mut prev = log.initial.e_s;
    for s in &log.steps {
        assert!(s.e_s <= prev + 1e-14);
        prev = s.e_s;
    }
    assert!(prev < log.initial.e_s);
}

#[test]
fn preprocessing_constants_are_reproducible() {
    let p = problem_on(unit_square(2, ElementKind::Triangle), 2, BoundaryMode::Free, planar_metric(0.3));
    let g = flow_metric(&p);
    let a = estimate_preprocess_constants(&p, &g, 0.1, 20, 4, 2.0).unwrap();
    let b = estimate_preprocess_constants(&p, &g, 0.1, 20, 4, 2.0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cp, 2.0 * a.cp_raw);
}

#[test]
fn step_rule_decreases_with_energy() {
    let k = PreprocessConstants { cp: 2.0, cp_tilde: 0.5, cp_raw: 1.0, cp_tilde_raw: 0.25 };
    let a = step_rule(&k, 0.1, 0.01, 0.1, 1.0);
    let b = step_rule(&k, 1.0, 0.01, 0.1, 1.0);
    assert!(a > b && b > 0.0);
    assert_eq!(step_rule(&PreprocessConstants { cp: 0.0, cp_tilde: 0.0, cp_raw: 0.0, cp_tilde_raw: 0.0 }, 1.0, 0.0, 0.1, 1.0), 1.0);
}

fn polynomial(k: usize) -> Immersion {
    let c = if k >= 3 { 1.0 } else { 0.0 };
    Immersion::new(
        "poly",
        move |x| {
            let (a, b) = (x[0], x[1]);
            [a + 0.5 * a * b + c * a * a * b, b - 0.3 * a * a + c * b * b * b, 0.2 * a * b + 0.1 * b * b - c * a * a * a]
        },
        move |x| {
            let (a, b) = (x[0], x[1]);
            [[1.0 + 0.5 * b + 2.0 * c * a * b, 0.5 * a + c * a * a], [-0.6 * a, 1.0 + 3.0 * c * b * b], [0.2 * b - 3.0 * c * a * a, 0.2 * a + 0.2 * b]]
        },
        |_| [[0.0; 3]; 3],
    )
}

#[test]
fn bilaplacian_reproduces_polynomials() {
    for k in [2, 3] {
        for kind in [ElementKind::Triangle, ElementKind::Quad] {
            let imm = polynomial(k);
            let mode = BoundaryMode::Dirichlet(BoundaryData::from_immersion(&imm));
            let p = problem_on(full_boundary(unit_square(2, kind)), k, mode, MetricField::identity());
            let y = bilaplacian_init(&p, 1.0, 1.0, None).unwrap();
            let v = imm.value.clone();
            let exact = interpolate_vec3(p.space(), move |x| v(x));
            let err = y.coeffs.iter().zip(&exact.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "k={k} {kind:?}: {err:.3e}");
        }
    }
}

#[test]
fn bilaplacian_with_zero_data_is_zero() {
    let p = problem_on(full_boundary(unit_square(3, ElementKind::Triangle)), 2, BoundaryMode::Dirichlet(BoundaryData::zero()), MetricField::identity());
    let y = bilaplacian_init(&p, 1.0, 1.0, None).unwrap();
    assert!(y.coeffs.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn bilaplacian_needs_dirichlet_data_and_positive_penalties() {
    assert!(matches!(bilaplacian_init(&flat_problem(2), 1.0, 1.0, None), Err(LdgError::Unsupported(_))));
    let p = problem_on(full_boundary(unit_square(2, ElementKind::Triangle)), 2, BoundaryMode::Dirichlet(BoundaryData::zero()), MetricField::identity());
    assert!(bilaplacian_init(&p, 0.0, 1.0, None).is_err());
}

/// `(eˣ¹ sin x₂, eˣ² sin x₁, x₁x₂)`: harmonic components, so biharmonic.
fn harmonic() -> Immersion {
    Immersion::new(
        "harmonic",
        |x| [x[0].exp() * x[1].sin(), x[1].exp() * x[0].sin(), x[0] * x[1]],
        |x| {
            [
                [x[0].exp() * x[1].sin(), x[0].exp() * x[1].cos()],
                [x[1].exp() * x[0].cos(), x[1].exp() * x[0].sin()],
                [x[1], x[0]],
            ]
        },
        |_| [[0.0; 3]; 3],
    )
}

#[test]
fn bilaplacian_manufactured_error_and_boundary_misfit_decrease() {
    let imm = harmonic();
    let mut errs = Vec::new();
    let mut misfit = Vec::new();
    for n in [2, 4, 8] {
        let mode = BoundaryMode::Dirichlet(BoundaryData::from_immersion(&imm));
        let p = problem_on(full_boundary(unit_square(n, ElementKind::Triangle)), 2, mode, MetricField::identity());
        let y = bilaplacian_init(&p, 1.0, 1.0, None).unwrap();
        let v = imm.value.clone();
        errs.push(y.l2_error(&move |x| v(x).to_vec()));
        misfit.push(boundary_mismatch(&p, &y).unwrap().value_sq.sqrt());
    }
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(misfit[1] < misfit[0] && misfit[2] < misfit[1], "{misfit:?}");
}

#[test]
fn bilaplacian_forcing_enters_the_load() {
    // Δ²(x₁⁴/24) = 1 on the third component
    let imm = Immersion::new("quartic", |x| [0.0, 0.0, x[0].powi(4) / 24.0], |x| [[0.0; 2], [0.0; 2], [x[0].powi(3) / 6.0, 0.0]], |_| [[0.0; 3]; 3]);
    let fhat = |_: [f64; 2]| [0.0, 0.0, 1.0];
    let mut errs = Vec::new();
    for n in [2, 4] {
        let mode = BoundaryMode::Dirichlet(BoundaryData::from_immersion(&imm));
        let p = problem_on(full_boundary(unit_square(n, ElementKind::Quad)), 3, mode, MetricField::identity());
        let y = bilaplacian_init(&p, 1.0, 1.0, Some(&fhat)).unwrap();
        errs.push(y.l2_error(&|x| vec![0.0, 0.0, x[0].powi(4) / 24.0]));
    }
    assert!(errs[1] < errs[0] && errs[1] < 1e-3, "{errs:?}");
}

#[test]
fn dirichlet_flow_certificates_skip_mean_conservation() {
    let mut mesh = build_structured_mesh([0.0, 0.0], [PI, 1.0], 4, 2, ElementKind::Triangle).unwrap();
    mesh.label_sides(&[Side::Left]);
    let imm = Immersion::cylinder();
    let p = problem_on(mesh, 2, BoundaryMode::Dirichlet(BoundaryData::from_immersion(&imm)), MetricField::cylinder());
    let y0 = bilaplacian_init(&p, 1.0, 1.0, None).unwrap();
    let (_, log) = run_main_flow(&short_flow(1.0, 10), &p, &y0).unwrap();
    assert!(log.dirichlet);
    let c = flow_certificates(&log);
    assert_eq!(c.mean_conservation.status, CertStatus::Skipped);
    assert!(c.energy_decay.passed() && c.defect_control.passed(), "{c:?}");
    assert!(c.defect_control.detail.starts_with("Dirichlet"));
}
