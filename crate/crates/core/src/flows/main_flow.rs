//! The constrained `H²_h` gradient flow for the bending energy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{constraint_blocks, dot, flow_metric, infsup_constant, metric_norm_sq, multipliers_as_tensors, poincare_constant, vector_metric};
use crate::dg::diagnostics::random_rough_field;
use crate::dg::forms::broken_gradient_sq;
use crate::dg::space::DgField;
use crate::energy::{assemble_form, energy_eh, energy_stretching, half_form_value, metric_defect, BendingForm, Problem, QuadraticForm};
use crate::error::{LdgError, Result};
use crate::solver::{solve_kkt, CsrMatrix, Definiteness, KktReport, SaddleSystem, SparseSymmetric};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub tau: f64,
    /// Stop once `‖δy‖_{H²_h}` falls below this; `None` uses `1e-8·(1+E_h(y⁰))^{1/2}`.
    pub tol_increment: Option<f64>,
    pub max_steps: usize,
    pub eps0: f64,
    /// Random tangent directions for the stationarity certificate (0 disables it).
    pub stationarity_samples: usize,
    pub seed: u64,
}

impl FlowConfig {
    pub fn new(tau: f64) -> Self {
        FlowConfig { tau, tol_increment: None, max_steps: 1000, eps0: 0.0, stationarity_samples: 50, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(LdgError::Parameter(format!("tau must be positive, got {}", self.tau)));
        }
        if let Some(t) = self.tol_increment {
            if !(t > 0.0) {
                return Err(LdgError::Parameter(format!("tol_increment must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `E_h(y^n)` after the step.
    pub energy: f64,
    pub e_s: f64,
    pub e_b: f64,
    pub defect: f64,
    /// `‖δy‖²` in the flow metric.
    pub incr_norm_sq: f64,
    pub grad_incr_sq: f64,
    /// `E_h(y^n) − E_h(y^{n−1})` accumulated from the increment (no cancellation between large energies).
    pub energy_change: f64,
    pub kkt_primal_residual: f64,
    pub kkt_constraint_residual: f64,
    /// `max_T |L_T(y^{n−1}; δy)|`.
    pub constraint_max: f64,
    pub deficiency: usize,
    /// Constant removed from each component of `δy` (free mode only; roundoff-sized).
    pub mean_shift: [f64; 3],
    pub mean: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityRecord {
    pub samples: usize,
    /// `sup |δE_h(y^∞)(v)| / ‖v‖` over the projected samples.
    pub residual_max: f64,
    pub beta_h: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLog {
    pub dirichlet: bool,
    pub tau: f64,
    pub area: f64,
    pub eps0: f64,
    /// `max(ε₀, D_h(y⁰))`.
    pub eps0_effective: f64,
    pub poincare_constant: f64,
    /// `max(0, −min_n E_h(y^n))`, which covers energies below zero.
    pub c_tilde: f64,
    pub tol_increment: f64,
    pub initial_energy: f64,
    pub initial_defect: f64,
    pub initial_mean: [f64; 3],
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    pub stationarity: Option<StationarityRecord>,
}

impl FlowLog {
    pub fn final_energy(&self) -> f64 {
        self.steps.last().map_or(self.initial_energy, |s| s.energy)
    }

    pub fn final_defect(&self) -> f64 {
        self.steps.last().map_or(self.initial_defect, |s| s.defect)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub delta: DgField,
    pub multiplier: Vec<[[f64; 2]; 2]>,
    pub report: KktReport,
    pub constraint_max: f64,
    pub mean_shift: [f64; 3],
}

/// Step operator of the flow; the energy matrices are assembled once.
pub struct MainFlow<'a> {
    pub problem: &'a Problem,
    pub tau: f64,
    pub form: QuadraticForm,
    pub load: Vec<f64>,
    pub gram: CsrMatrix,
    a: SparseSymmetric,
}

impl<'a> MainFlow<'a> {
    pub fn new(problem: &'a Problem, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(LdgError::Parameter(format!("tau must be positive, got {tau}")));
        }
        let form = assemble_form(problem, &BendingForm::main(&problem.params));
        let gram = flow_metric(problem);
        let a = SparseSymmetric::from_full(&gram.combine(1.0 / tau, &form.k, 1.0).kron_identity(3), Definiteness::Spd);
        Ok(MainFlow { problem, tau, load: problem.load_vector(), form, gram, a })
    }

    /// `E_h(y)` by quadrature of `H_h(y)`; this avoids the cancellation in `½yᵀKy` when `y` is nearly affine.
    pub fn energy(&self, y: &DgField) -> Result<f64> {
        Ok(energy_eh(self.problem, y)?.total)
    }

    /// `δE_h(y)(ψ)` for every basis function.
    pub fn gradient(&self, y: &DgField) -> Vec<f64> {
        self.form.gradient(&y.coeffs).iter().zip(&self.load).map(|(a, b)| a - b).collect()
    }

    pub fn bending_b(&self, y: &DgField) -> Result<f64> {
        half_form_value(self.problem, &BendingForm::preprocess(), y)
    }

    /// Saddle system of one step anchored at `y`.
    pub fn system(&self, y: &DgField, grouped: bool) -> SaddleSystem {
        SaddleSystem {
            a: self.a.clone(),
            constraints: constraint_blocks(y),
            groups: grouped.then(|| self.problem.space().element_groups(3)),
        }
    }

    pub fn step(&self, y: &DgField) -> Result<StepOutput> {
        self.step_with(y, true)
    }

    pub fn step_with(&self, y: &DgField, grouped: bool) -> Result<StepOutput> {
        let s = self.system(y, grouped);
        let rhs: Vec<f64> = self.gradient(y).iter().map(|v| -v).collect();
        let sol = solve_kkt(&s, &rhs, &vec![0.0; s.n_constraints()])?;
        let mut delta = DgField::from_coeffs(self.problem.space(), 3, sol.primal)?;
        // Without boundary data the increment has zero mean in exact arithmetic; the
        // solve leaves a roundoff mean of size τ·ε·‖K‖‖y‖ which would accumulate, so it
        // is removed here (constants lie in the kernel of K, B and the semi-product).
        let mut mean_shift = [0.0; 3];
        if !self.problem.is_dirichlet() {
            let area = self.problem.space().mesh.area();
            let nd = self.problem.space().ndofs();
            for (m, v) in delta.integral().into_iter().enumerate() {
                mean_shift[m] = v / area;
                delta.coeffs[m * nd..(m + 1) * nd].iter_mut().for_each(|c| *c -= mean_shift[m]);
            }
        }
        let constraint_max = s.apply_b(&delta.coeffs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(StepOutput {
            delta,
            multiplier: multipliers_as_tensors(&sol.multiplier),
            report: sol.report,
            constraint_max,
            mean_shift,
        })
    }

    /// `sup |δE_h(y)(v)| / ‖v‖` over `samples` random fields projected onto the tangent space at `y`.
    pub fn stationarity_residual(&self, y: &DgField, samples: usize, seed: u64) -> Result<f64> {
        let gv = vector_metric(&self.gram);
        let sys = SaddleSystem { a: gv.clone(), constraints: constraint_blocks(y), groups: Some(self.problem.space().element_groups(3)) };
        let grad = self.gradient(y);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let v = random_rough_field(self.problem.space(), 3, &mut rng);
            let f = gv.matvec(&v.coeffs);
            let p = solve_kkt(&sys, &f, &vec![0.0; sys.n_constraints()])?.primal;
            let n = metric_norm_sq(&self.gram, &p).sqrt();
            if n > 0.0 {
                worst = worst.max(dot(&grad, &p).abs() / n);
            }
        }
        Ok(worst)
    }
}

/// One step of the flow from `y` with a freshly assembled operator.
pub fn main_flow_step(config: &FlowConfig, problem: &Problem, y: &DgField) -> Result<StepOutput> {
    config.validate()?;
    MainFlow::new(problem, config.tau)?.step(y)
}

/// Inf-sup constant of the constraint at `anchor` in the flow metric of `problem`.
pub fn estimate_infsup(problem: &Problem, anchor: &DgField) -> Result<Option<f64>> {
    infsup_constant(anchor, &flow_metric(problem))
}

fn mean(y: &DgField) -> [f64; 3] {
    let v = y.integral();
    [v[0], v[1], v[2]]
}

/// Runs the flow until the increment falls below tolerance or `max_steps` steps have been applied.
///
/// An energy increase beyond `1e-10` aborts with [`LdgError::EnergyIncrease`].
pub fn run_main_flow(config: &FlowConfig, problem: &Problem, y0: &DgField) -> Result<(DgField, FlowLog)> {
    config.validate()?;
    let flow = MainFlow::new(problem, config.tau)?;
    let e0 = flow.energy(y0)?;
    let d0 = metric_defect(problem, y0)?;
    // roundoff-sized defects of an exact start are not worth a warning
    if d0 > config.eps0 && d0 > 1e-10 {
        log::warn!("initial defect {d0:.3e} exceeds eps0 {:.3e}; using the initial defect as budget", config.eps0);
    }
    let tol = config.tol_increment.unwrap_or(1e-8 * (1.0 + e0.max(0.0)).sqrt());
    let mut log = FlowLog {
        dirichlet: problem.is_dirichlet(),
        tau: config.tau,
        area: problem.space().mesh.area(),
        eps0: config.eps0,
        eps0_effective: config.eps0.max(d0),
        poincare_constant: poincare_constant(problem.space(), &flow.gram)?,
        c_tilde: 0.0,
        tol_increment: tol,
        initial_energy: e0,
        initial_defect: d0,
        initial_mean: mean(y0),
        steps: Vec::new(),
        converged: false,
        stationarity: None,
    };
    let mut y = y0.clone();
    let mut energy = e0;
    let mut min_energy = e0;
    for n in 1..=config.max_steps {
        let out = flow.step(&y)?;
        let incr = metric_norm_sq(&flow.gram, &out.delta.coeffs);
        // an increment below tolerance marks convergence and is not applied
        if incr.sqrt() <= tol {
            log.converged = true;
            break;
        }
        let g = flow.gradient(&y);
        let change = dot(&g, &out.delta.coeffs) + 0.5 * metric_norm_sq(&flow.form.k, &out.delta.coeffs);
        y = y.axpy(1.0, &out.delta)?;
        let next = flow.energy(&y)?;
        let violation = next + incr / config.tau - energy;
        if violation > 1e-10 {
            return Err(LdgError::EnergyIncrease { step: n, increase: violation });
        }
        energy = next;
        min_energy = min_energy.min(next);
        log.steps.push(StepRecord {
            step: n,
            energy: next,
            e_s: energy_stretching(problem, &y)?,
            e_b: flow.bending_b(&y)?,
            defect: metric_defect(problem, &y)?,
            incr_norm_sq: incr,
            grad_incr_sq: broken_gradient_sq(&out.delta),
            energy_change: change,
            kkt_primal_residual: out.report.primal_residual,
            kkt_constraint_residual: out.report.constraint_residual,
            constraint_max: out.constraint_max,
            deficiency: out.report.deficiency,
            mean_shift: out.mean_shift,
            mean: mean(&y),
        });
        log::debug!("main step {n}: E_h={next:.6e} |dy|={:.3e}", incr.sqrt());
    }
    log.c_tilde = (-min_energy).max(0.0);
    if log.converged && config.stationarity_samples > 0 {
        log.stationarity = Some(StationarityRecord {
            samples: config.stationarity_samples,
            residual_max: flow.stationarity_residual(&y, config.stationarity_samples, config.seed)?,
            beta_h: infsup_constant(&y, &flow.gram)?,
        });
    }
    Ok((y, log))
}
