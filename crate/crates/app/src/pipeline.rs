//! Problem construction and the start → preprocess → main flow → certificates pipeline.

use std::sync::Arc;

use ldg_core::dg::diagnostics::random_smooth_field;
use ldg_core::dg::space::{DgField, DgSpace};
use ldg_core::energy::{boundary_mismatch, energy_eh, metric_defect, EnergyBreakdown, EnergyParams, Problem};
use ldg_core::flows::bilaplacian::bilaplacian_init;
use ldg_core::flows::certificates::{flow_certificates, CertStatus, CertificateReport};
use ldg_core::flows::main_flow::{run_main_flow, FlowConfig, FlowLog};
use ldg_core::flows::preprocess::{flat_start, run_preprocess, PreprocessConfig, PreprocessLog};
use ldg_core::lifting::{BoundaryData, BoundaryMode, LiftingAssembly};
use ldg_core::mesh::{build_structured_mesh, BoundaryLabel, Mesh};
use ldg_core::metric::{Immersion, MetricField, Sym2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DirichletSpec, MeshSource, MetricSpec, RunConfig, SigmaRule, StartRule, TauRule};
use crate::error::{AppResult, ConfigError};
use crate::expr::Expression;

pub fn build_mesh(cfg: &RunConfig) -> AppResult<Mesh> {
    match &cfg.mesh {
        MeshSource::File(p) => Ok(Mesh::load(p)?),
        MeshSource::Structured(s) => {
            let mut m = build_structured_mesh(s.lo, s.hi, s.nx, s.ny, s.kind)?;
            if !cfg.clamped_sides.is_empty() {
                m.label_sides(&cfg.clamped_sides);
            }
            Ok(m)
        }
    }
}

pub fn catalog_metric(cfg: &RunConfig) -> Option<MetricField> {
    match &cfg.metric {
        MetricSpec::Catalog { name, beta } => Some(match name.as_str() {
            "cylinder" => MetricField::cylinder(),
            "catenoid" => MetricField::catenoid(),
            "stretched" => MetricField::stretched(*beta),
            _ => MetricField::identity(),
        }),
        MetricSpec::Expressions(_) => None,
    }
}

fn metric_field(cfg: &RunConfig) -> MetricField {
    match &cfg.metric {
        MetricSpec::Expressions([a, b, c]) => {
            let (a, b, c) = (a.clone(), b.clone(), c.clone());
            MetricField::new("expression", move |x| Sym2::new(a.eval(x), b.eval(x), c.eval(x)))
        }
        MetricSpec::Catalog { .. } => catalog_metric(cfg).unwrap(),
    }
}

/// The catalog immersion realizing the configured metric, if there is one.
pub fn metric_immersion(cfg: &RunConfig) -> Option<Immersion> {
    catalog_metric(cfg).and_then(|m| m.immersion)
}

fn immersion_by_name(name: &str) -> Immersion {
    match name {
        "cylinder" => Immersion::cylinder(),
        "catenoid" => Immersion::catenoid(),
        _ => Immersion::plane(),
    }
}

/// Step of the central differences used when no gradient data is configured.
const FD_STEP: f64 = 1e-5;

fn boundary_data(spec: &DirichletSpec) -> Option<BoundaryData> {
    match spec {
        DirichletSpec::None => None,
        DirichletSpec::Immersion(n) => Some(BoundaryData::from_immersion(&immersion_by_name(n))),
        DirichletSpec::Expressions { phi, grad } => {
            let p = phi.clone();
            let phi_fn = Arc::new(move |x: [f64; 2]| [p[0].eval(x), p[1].eval(x), p[2].eval(x)]);
            let grad_fn: Arc<dyn Fn([f64; 2]) -> [[f64; 2]; 3] + Send + Sync> = match grad {
                Some(g) => {
                    let g = g.clone();
                    Arc::new(move |x| std::array::from_fn(|m| [g[m][0].eval(x), g[m][1].eval(x)]))
                }
                None => {
                    let p = phi.clone();
                    Arc::new(move |x| {
                        std::array::from_fn(|m| {
                            let d = |i: usize| {
                                let (mut a, mut b) = (x, x);
                                a[i] += FD_STEP;
                                b[i] -= FD_STEP;
                                (p[m].eval(a) - p[m].eval(b)) / (2.0 * FD_STEP)
                            };
                            [d(0), d(1)]
                        })
                    })
                }
            };
            Some(BoundaryData { phi: phi_fn, grad_phi: grad_fn })
        }
    }
}

fn check_finite(exprs: &[&Expression], points: impl Iterator<Item = [f64; 2]>) -> Result<(), ConfigError> {
    for x in points {
        for e in exprs {
            e.eval_checked(x)?;
        }
    }
    Ok(())
}

/// Evaluates every configured expression at the quadrature points where it will be used.
fn validate_expressions(cfg: &RunConfig, space: &DgSpace) -> Result<(), ConfigError> {
    let elem_points = || space.elements.iter().flat_map(|t| t.points.iter().copied());
    if let MetricSpec::Expressions(g) = &cfg.metric {
        check_finite(&g.iter().collect::<Vec<_>>(), elem_points())?;
    }
    if let Some(f) = &cfg.forcing {
        check_finite(&f.iter().collect::<Vec<_>>(), elem_points())?;
    }
    if let DirichletSpec::Expressions { phi, grad } = &cfg.dirichlet {
        let mut all: Vec<&Expression> = phi.iter().collect();
        if let Some(g) = grad {
            all.extend(g.iter().flatten());
        }
        let edges = space.mesh.edges.iter().zip(&space.edges).filter(|(e, _)| e.label == Some(BoundaryLabel::Dirichlet));
        check_finite(&all, edges.flat_map(|(_, t)| t.points.iter().copied()))?;
    }
    Ok(())
}

/// Builds the discrete problem on `mesh` from the configuration.
pub fn build_problem(cfg: &RunConfig, mesh: Mesh) -> AppResult<Problem> {
    let data = boundary_data(&cfg.dirichlet);
    if mesh.has_dirichlet() != data.is_some() {
        let msg = if data.is_some() { "boundary data given but the mesh has no clamped edges" } else { "the mesh has clamped edges but no boundary data is configured" };
        return Err(ConfigError::Invalid(msg.into()).into());
    }
    let space = DgSpace::new(Arc::new(mesh), cfg.k)?;
    validate_expressions(cfg, &space)?;
    let mode = match data {
        Some(d) => BoundaryMode::Dirichlet(d),
        None => BoundaryMode::Free,
    };
    let p = &cfg.params;
    let mut params = EnergyParams::new(p.mu, p.lambda, p.gamma0, p.gamma1)?;
    if let Some(f) = &cfg.forcing {
        let f = f.clone();
        params = params.with_forcing(move |x| [f[0].eval(x), f[1].eval(x), f[2].eval(x)]);
    }
    Ok(Problem::new(LiftingAssembly::new(&space, mode)?, metric_field(cfg), params)?)
}

pub fn flow_tau(cfg: &RunConfig, pr: &Problem) -> f64 {
    match cfg.flow.tau {
        TauRule::H => pr.space().mesh.h_max(),
        TauRule::Value(t) => t,
    }
}

pub fn sigma(cfg: &RunConfig, pr: &Problem) -> f64 {
    match cfg.preprocess.sigma {
        SigmaRule::Zero => 0.0,
        SigmaRule::H2 => pr.space().mesh.h_max().powi(2),
        SigmaRule::Value(s) => s,
    }
}

/// Everything a single run produces.
#[derive(Debug)]
pub struct RunOutcome {
    pub problem: Problem,
    pub y_start: DgField,
    pub y_final: DgField,
    pub preprocess: Option<PreprocessLog>,
    pub flow: FlowLog,
    pub certificates: CertificateReport,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.certificates.all_passed()
    }
}

pub fn initial_state(cfg: &RunConfig, pr: &Problem) -> AppResult<DgField> {
    let bilap = match cfg.start {
        StartRule::Auto => pr.is_dirichlet(),
        StartRule::Flat => false,
        StartRule::Bilaplacian => true,
    };
    let mut y = if bilap { bilaplacian_init(pr, cfg.params.gamma0_hat, cfg.params.gamma1_hat, None)? } else { flat_start(pr) };
    if cfg.perturbation != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = random_smooth_field(pr.space(), 3, &mut rng);
        if !cfg.perturb_all {
            p.component_mut(0).fill(0.0);
            p.component_mut(1).fill(0.0);
        }
        y = y.axpy(cfg.perturbation, &p)?;
    }
    Ok(y)
}

pub fn run_problem(cfg: &RunConfig, problem: Problem) -> AppResult<RunOutcome> {
    let y_start = initial_state(cfg, &problem)?;
    let tau = flow_tau(cfg, &problem);
    let (y_pre, preprocess) = if cfg.preprocess.enabled {
        let b = &cfg.preprocess;
        let mut pc = PreprocessConfig::new(sigma(cfg, &problem), b.tau.unwrap_or(tau));
        pc.c_stop = b.c_stop;
        pc.abs_tol = b.abs_tol;
        pc.max_steps = b.max_steps;
        pc.samples = b.samples;
        pc.seed = cfg.seed;
        let (y, log) = run_preprocess(&pc, &problem, &y_start)?;
        log::info!("preprocessing: {} steps, converged = {}", log.steps.len(), log.converged);
        (y, Some(log))
    } else {
        (y_start.clone(), None)
    };
    let fc = FlowConfig {
        tau,
        tol_increment: cfg.flow.tol,
        max_steps: cfg.flow.max_steps,
        eps0: cfg.flow.eps0,
        stationarity_samples: cfg.flow.stationarity_samples,
        seed: cfg.seed,
    };
    let (y_final, flow) = run_main_flow(&fc, &problem, &y_pre)?;
    log::info!("main flow: {} steps, converged = {}", flow.steps.len(), flow.converged);
    let certificates = flow_certificates(&flow);
    Ok(RunOutcome { problem, y_start, y_final, preprocess, flow, certificates })
}

pub fn run_config(cfg: &RunConfig) -> AppResult<RunOutcome> {
    let mesh = build_mesh(cfg)?;
    run_problem(cfg, build_problem(cfg, mesh)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshSummary {
    pub kind: String,
    pub elements: usize,
    pub h_max: f64,
    pub h_min: f64,
    pub degree: usize,
    pub dofs_per_component: usize,
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub steps: usize,
    pub converged: bool,
    pub sigma: f64,
    pub e_s: f64,
    pub e_b: f64,
    pub e_p: f64,
    pub defect: f64,
    pub cp: f64,
    pub cp_tilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowSummary {
    pub tau: f64,
    pub steps: usize,
    pub converged: bool,
    pub initial_energy: f64,
    pub initial_defect: f64,
    pub energy: EnergyBreakdown,
    /// Stretching energy `½‖∇yᵀ∇y − g‖²` of the final state.
    pub e_s: f64,
    /// Bending part `E_h − (forcing term)`.
    pub e_b: f64,
    pub defect: f64,
    pub defect_bound: f64,
    pub boundary_value_mismatch: Option<f64>,
    pub boundary_gradient_mismatch: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub status: CertStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub mesh: MeshSummary,
    pub preprocess: Option<PreprocessSummary>,
    pub flow: FlowSummary,
    pub certificates: Vec<Verdict>,
    pub all_certificates_passed: bool,
    pub wall_time_s: f64,
}

pub fn summarize(out: &RunOutcome, wall_time_s: f64) -> AppResult<RunSummary> {
    let pr = &out.problem;
    let sp = pr.space();
    let mesh = MeshSummary {
        kind: sp.mesh.kind.name().into(),
        elements: sp.mesh.n_elements(),
        h_max: sp.mesh.h_max(),
        h_min: sp.mesh.h_min(),
        degree: sp.degree,
        dofs_per_component: sp.ndofs(),
        clamped: pr.is_dirichlet(),
    };
    let preprocess = out.preprocess.as_ref().map(|l| {
        let e = l.final_energies();
        PreprocessSummary {
            steps: l.steps.len(),
            converged: l.converged,
            sigma: l.sigma,
            e_s: e.e_s,
            e_b: e.e_b,
            e_p: e.e_p,
            defect: l.final_defect(),
            cp: l.constants.cp,
            cp_tilde: l.constants.cp_tilde,
        }
    });
    let y = &out.y_final;
    let energy = energy_eh(pr, y)?;
    let e_s = ldg_core::energy::energy_stretching(pr, y)?;
    let mism = if pr.is_dirichlet() { Some(boundary_mismatch(pr, y)?) } else { None };
    let log = &out.flow;
    let flow = FlowSummary {
        tau: log.tau,
        steps: log.steps.len(),
        converged: log.converged,
        initial_energy: log.initial_energy,
        initial_defect: log.initial_defect,
        e_b: energy.total - energy.forcing,
        energy,
        e_s,
        defect: metric_defect(pr, y)?,
        defect_bound: log.eps0_effective + log.poincare_constant * log.tau * (log.initial_energy + log.c_tilde),
        boundary_value_mismatch: mism.map(|m| m.value_sq.sqrt()),
        boundary_gradient_mismatch: mism.map(|m| m.grad_sq.sqrt()),
    };
    let certificates = out.certificates.all().iter().map(|c| Verdict { name: c.name.clone(), status: c.status }).collect();
    Ok(RunSummary { mesh, preprocess, flow, certificates, all_certificates_passed: out.passed(), wall_time_s })
}
