//! Metric preprocessing: a gradient flow on `E_s + σ E_b` producing a low-defect start.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{flow_metric, metric_norm_sq, pencil_spectral_radius};
use crate::dg::diagnostics::{random_rough_field, random_smooth_field};
use crate::dg::space::{interpolate_vec3, DgField};
use crate::energy::{
    assemble_form, energy_stretching, metric_defect, stretching_matrix, stretching_residual, BendingForm,
    PreprocessEnergies, Problem, QuadraticForm,
};
use crate::error::{LdgError, Result};
use crate::solver::{CsrMatrix, Definiteness, SparseSymmetric, SpdFactor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub sigma: f64,
    pub tau: f64,
    /// Cap `τ` by half the step rule at every iterate.
    pub adaptive: bool,
    /// With `σ > 0`: stop once `E_p ≤ c_stop·σ`.
    pub c_stop: f64,
    /// With `σ = 0`: stop once `E_s ≤ abs_tol`.
    pub abs_tol: f64,
    pub max_steps: usize,
    pub cp: Option<f64>,
    pub cp_tilde: Option<f64>,
    pub samples: usize,
    pub safety: f64,
    pub seed: u64,
}

impl PreprocessConfig {
    pub fn new(sigma: f64, tau: f64) -> Self {
        PreprocessConfig {
            sigma,
            tau,
            adaptive: true,
            c_stop: 1.0,
            abs_tol: 1e-10,
            max_steps: 500,
            cp: None,
            cp_tilde: None,
            samples: 200,
            safety: 2.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(LdgError::Parameter(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.tau > 0.0) {
            return Err(LdgError::Parameter(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Constants of the step rule; `*_raw` are the sampled maxima before the safety factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConstants {
    pub cp: f64,
    pub cp_tilde: f64,
    pub cp_raw: f64,
    pub cp_tilde_raw: f64,
}

/// `c_h = min{(1 + C_p E_p^{1/2})⁻¹, d_h⁻¹}`.
pub fn step_rule(k: &PreprocessConstants, e_p: f64, sigma: f64, h_min: f64, g_l1: f64) -> f64 {
    let r = e_p.max(0.0).sqrt();
    let d = 0.5 * k.cp * r + 0.5 * k.cp_tilde * ((e_p + 1.0) * (r + g_l1) / h_min + sigma * e_p);
    let first = 1.0 / (1.0 + k.cp * r);
    if d > 0.0 {
        first.min(1.0 / d)
    } else {
        first
    }
}

/// `‖∇(z+δ)ᵀ∇(z+δ) − ∇zᵀ∇z‖²_{L²}`.
fn gram_change_sq(pr: &Problem, z: &DgField, dz: &DgField) -> Result<f64> {
    let a = stretching_residual(pr, z);
    let b = stretching_residual(pr, &z.axpy(1.0, dz)?);
    let mut s = 0.0;
    for (k, t) in pr.space().elements.iter().enumerate() {
        for (p, &w) in t.weights.iter().enumerate() {
            let (x, y) = (a[k][p], b[k][p]);
            s += w * ((y.a11 - x.a11).powi(2) + 2.0 * (y.a12 - x.a12).powi(2) + (y.a22 - x.a22).powi(2));
        }
    }
    Ok(s)
}

/// Estimates the continuity constant of `a_s` and the increment bound of the step rule.
///
/// Anchors are the flat start plus smooth random perturbations. For a fixed anchor the
/// supremum of `|a_s(z; v, w)| / (‖v‖‖w‖)` is the spectral radius of `S(z)` relative to the
/// flow metric, computed by power iteration on the first `⌈samples/20⌉` anchors. Increments for
/// `C̃_p` alternate between rough and smooth fields scaled to `‖δ‖² = h_max·E_p(z)`.
pub fn estimate_preprocess_constants(pr: &Problem, gram: &CsrMatrix, sigma: f64, samples: usize, seed: u64, safety: f64) -> Result<PreprocessConstants> {
    let sp = pr.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bend = assemble_form(pr, &BendingForm::preprocess());
    let gfac = SpdFactor::new(&SparseSymmetric::from_full(gram, Definiteness::Spd), Some(&sp.element_groups(1)))?;
    let flat = flat_start(pr);
    let (h_min, h_max, g_l1) = (sp.mesh.h_min(), sp.mesh.h_max(), pr.metric_data.l1_norm);
    let spectral = samples.max(1).div_ceil(20);
    let (mut cp, mut cpt) = (0.0f64, 0.0f64);
    for i in 0..samples.max(1) {
        let z = flat.axpy(0.3, &random_smooth_field(sp, 3, &mut rng))?;
        let es = energy_stretching(pr, &z)?;
        if es <= 0.0 {
            continue;
        }
        if i < spectral {
            let rho = pencil_spectral_radius(&stretching_matrix(pr, &z), gram, &gfac, 300, seed.wrapping_add(i as u64));
            cp = cp.max(rho / es.sqrt());
        }
        let ep = es + sigma * 0.5 * bend.value(&z.coeffs);
        let d = if i % 2 == 0 { random_rough_field(sp, 3, &mut rng) } else { random_smooth_field(sp, 3, &mut rng) };
        let nd = metric_norm_sq(gram, &d.coeffs);
        let d = d.scaled((h_max * ep / nd).sqrt());
        let bracket = (ep + 1.0) * (ep.sqrt() + g_l1) / h_min + sigma * ep;
        cpt = cpt.max(gram_change_sq(pr, &z, &d)? / (bracket * metric_norm_sq(gram, &d.coeffs)));
    }
    Ok(PreprocessConstants { cp: safety * cp, cp_tilde: safety * cpt, cp_raw: cp, cp_tilde_raw: cpt })
}

/// `(√ḡ₁₁ x₁, √ḡ₂₂ x₂, 0)` with `ḡ` the mean metric.
pub fn flat_start(pr: &Problem) -> DgField {
    let (a, b) = (pr.metric_data.mean.a11.sqrt(), pr.metric_data.mean.a22.sqrt());
    interpolate_vec3(pr.space(), move |x| [a * x[0], b * x[1], 0.0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreStepRecord {
    pub step: usize,
    pub tau: f64,
    pub halvings: usize,
    pub e_s: f64,
    pub e_b: f64,
    pub e_p: f64,
    pub defect: f64,
    pub incr_norm_sq: f64,
    /// `E_p(y^{n+1}) + ‖δy‖²/(2τ) − E_p(y^n)`.
    pub decay_residual: f64,
    /// Step rule at the new iterate.
    pub c_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessLog {
    pub sigma: f64,
    pub constants: PreprocessConstants,
    pub h_min: f64,
    pub g_l1: f64,
    pub initial: PreprocessEnergies,
    pub initial_defect: f64,
    pub initial_c_h: f64,
    pub steps: Vec<PreStepRecord>,
    pub converged: bool,
    /// `D_h ≤ ‖∇yᵀ∇y − g‖_{L¹} ≤ |Ω|^{1/2}(2E_s)^{1/2}` at the output.
    pub defect_bound_holds: bool,
}

impl PreprocessLog {
    pub fn final_energies(&self) -> PreprocessEnergies {
        self.steps.last().map_or(self.initial, |s| PreprocessEnergies { e_s: s.e_s, e_b: s.e_b, e_p: s.e_p })
    }

    pub fn final_defect(&self) -> f64 {
        self.steps.last().map_or(self.initial_defect, |s| s.defect)
    }
}

pub struct PreprocessFlow<'a> {
    pub problem: &'a Problem,
    pub config: PreprocessConfig,
    pub gram: CsrMatrix,
    pub constants: PreprocessConstants,
    bend: QuadraticForm,
    h_min: f64,
}

#[derive(Clone, Debug)]
pub struct PreStepOutput {
    pub delta: DgField,
    pub tau: f64,
    pub halvings: usize,
    pub before: PreprocessEnergies,
    pub after: PreprocessEnergies,
    pub incr_norm_sq: f64,
    pub decay_residual: f64,
}

impl<'a> PreprocessFlow<'a> {
    pub fn new(problem: &'a Problem, config: PreprocessConfig) -> Result<Self> {
        config.validate()?;
        let gram = flow_metric(problem);
        let constants = match (config.cp, config.cp_tilde) {
            (Some(cp), Some(cpt)) => PreprocessConstants { cp, cp_tilde: cpt, cp_raw: cp, cp_tilde_raw: cpt },
            (cp, cpt) => {
                let est = estimate_preprocess_constants(problem, &gram, config.sigma, config.samples, config.seed, config.safety)?;
                PreprocessConstants { cp: cp.unwrap_or(est.cp), cp_tilde: cpt.unwrap_or(est.cp_tilde), ..est }
            }
        };
        let bend = assemble_form(problem, &BendingForm::preprocess());
        Ok(PreprocessFlow { h_min: problem.space().mesh.h_min(), problem, config, gram, constants, bend })
    }

    pub fn energies(&self, y: &DgField) -> Result<PreprocessEnergies> {
        let e_s = energy_stretching(self.problem, y)?;
        let e_b = 0.5 * self.bend.value(&y.coeffs);
        Ok(PreprocessEnergies { e_s, e_b, e_p: e_s + self.config.sigma * e_b })
    }

    pub fn c_h(&self, e_p: f64) -> f64 {
        step_rule(&self.constants, e_p, self.config.sigma, self.h_min, self.problem.metric_data.l1_norm)
    }

    /// Solves the linear step system with step size `tau`.
    pub fn solve(&self, y: &DgField, tau: f64) -> Result<DgField> {
        let sp = self.problem.space();
        let nd = sp.ndofs();
        let s = stretching_matrix(self.problem, y);
        let sigma = self.config.sigma;
        let a = self.gram.combine(1.0 / tau, &s, 1.0).combine(1.0, &self.bend.k, sigma);
        // the operator acts identically on the three components
        let fac = SpdFactor::new(&SparseSymmetric::from_full(&a, Definiteness::Spd), Some(&sp.element_groups(1)))?;
        let bg = self.bend.gradient(&y.coeffs);
        let mut x = Vec::with_capacity(3 * nd);
        for m in 0..3 {
            let sy = s.matvec(&y.coeffs[m * nd..(m + 1) * nd]);
            let rhs: Vec<f64> = sy.iter().zip(&bg[m * nd..(m + 1) * nd]).map(|(a, b)| -(a + sigma * b)).collect();
            x.extend(fac.solve(&rhs));
        }
        DgField::from_coeffs(sp, 3, x)
    }

    /// One accepted step: `τ` is capped by the step rule and halved on solver failure or energy increase.
    pub fn step(&self, y: &DgField, step: usize) -> Result<PreStepOutput> {
        let before = self.energies(y)?;
        let mut tau = if self.config.adaptive { self.config.tau.min(0.5 * self.c_h(before.e_p)) } else { self.config.tau };
        for halvings in 0..=20 {
            match self.solve(y, tau) {
                Ok(delta) => {
                    let after = self.energies(&y.axpy(1.0, &delta)?)?;
                    let incr = metric_norm_sq(&self.gram, &delta.coeffs);
                    let decay_residual = after.e_p + incr / (2.0 * tau) - before.e_p;
                    if decay_residual <= 1e-10 {
                        return Ok(PreStepOutput { delta, tau, halvings, before, after, incr_norm_sq: incr, decay_residual });
                    }
                    log::debug!("preprocess step {step}: decay violated by {decay_residual:.3e}, halving tau");
                }
                Err(LdgError::NonPositivePivot { .. }) => log::debug!("preprocess step {step}: system not positive definite, halving tau"),
                Err(e) => return Err(e),
            }
            tau *= 0.5;
        }
        Err(LdgError::StepRejected { step, halvings: 20 })
    }

    fn stop(&self, e: &PreprocessEnergies) -> bool {
        if self.config.sigma > 0.0 {
            e.e_p <= self.config.c_stop * self.config.sigma
        } else {
            e.e_s <= self.config.abs_tol
        }
    }
}

/// One preprocessing step with a freshly built operator.
pub fn preprocess_step(config: &PreprocessConfig, problem: &Problem, y: &DgField) -> Result<PreStepOutput> {
    PreprocessFlow::new(problem, config.clone())?.step(y, 1)
}

/// Iterates the preprocessing flow until its stop rule holds or `max_steps` is reached.
pub fn run_preprocess(config: &PreprocessConfig, problem: &Problem, y0: &DgField) -> Result<(DgField, PreprocessLog)> {
    let flow = PreprocessFlow::new(problem, config.clone())?;
    let initial = flow.energies(y0)?;
    let mut log = PreprocessLog {
        sigma: config.sigma,
        constants: flow.constants,
        h_min: flow.h_min,
        g_l1: problem.metric_data.l1_norm,
        initial,
        initial_defect: metric_defect(problem, y0)?,
        initial_c_h: flow.c_h(initial.e_p),
        steps: Vec::new(),
        converged: flow.stop(&initial),
        defect_bound_holds: false,
    };
    let mut y = y0.clone();
    let mut n = 0;
    while !log.converged && n < config.max_steps {
        n += 1;
        let out = flow.step(&y, n)?;
        y = y.axpy(1.0, &out.delta)?;
        log.steps.push(PreStepRecord {
            step: n,
            tau: out.tau,
            halvings: out.halvings,
            e_s: out.after.e_s,
            e_b: out.after.e_b,
            e_p: out.after.e_p,
            defect: metric_defect(problem, &y)?,
            incr_norm_sq: out.incr_norm_sq,
            decay_residual: out.decay_residual,
            c_h: flow.c_h(out.after.e_p),
        });
        log::debug!("preprocess step {n}: E_p={:.6e} tau={:.3e}", out.after.e_p, out.tau);
        log.converged = flow.stop(&out.after);
        if out.incr_norm_sq == 0.0 {
            break;
        }
    }
    let fe = log.final_energies();
    let d = log.final_defect();
    let l1 = crate::energy::stretching_l1(problem, &y);
    let area = problem.space().mesh.area();
    log.defect_bound_holds = d <= l1 * (1.0 + 1e-12) + 1e-14 && l1 <= (area * 2.0 * fe.e_s).sqrt() * (1.0 + 1e-12) + 1e-14;
    Ok((y, log))
}
