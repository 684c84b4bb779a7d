//! Machine-checkable verdicts recomputed from a completed flow log.

use serde::{Deserialize, Serialize};

use super::main_flow::FlowLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub status: CertStatus,
    /// Largest observed left-hand side minus its bound (or the observed quantity itself).
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Certificate {
    fn check(name: &str, worst: f64, threshold: f64, detail: String) -> Self {
        let status = if worst <= threshold { CertStatus::Pass } else { CertStatus::Fail };
        Certificate { name: name.into(), status, worst, threshold, detail }
    }

    fn skipped(name: &str, reason: &str) -> Self {
        Certificate { name: name.into(), status: CertStatus::Skipped, worst: 0.0, threshold: 0.0, detail: reason.into() }
    }

    pub fn passed(&self) -> bool {
        self.status != CertStatus::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub energy_decay: Certificate,
    pub defect_control: Certificate,
    pub mean_conservation: Certificate,
    pub stationarity: Certificate,
}

impl CertificateReport {
    pub fn all(&self) -> [&Certificate; 4] {
        [&self.energy_decay, &self.defect_control, &self.mean_conservation, &self.stationarity]
    }

    pub fn all_passed(&self) -> bool {
        self.all().iter().all(|c| c.passed())
    }
}

/// Evaluates the four run certificates from the logged quantities alone.
pub fn flow_certificates(log: &FlowLog) -> CertificateReport {
    // (i) E(y^n) + ‖δy‖²/τ ≤ E(y^{n−1}) + 1e-10 at every step
    let mut prev = log.initial_energy;
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0);
    for s in &log.steps {
        let r = s.energy + s.incr_norm_sq / log.tau - prev;
        if r > worst {
            worst = r;
            at = s.step;
        }
        prev = s.energy;
    }
    let energy_decay = if log.steps.is_empty() {
        Certificate::check("energy_decay", 0.0, 1e-10, "no steps taken".into())
    } else {
        let detail = if worst > 1e-10 { format!("step {at} violates the decay inequality by {worst:.3e}") } else { format!("worst residual at step {at}") };
        Certificate::check("energy_decay", worst, 1e-10, detail)
    };

    // (ii) final defect bound and the telescoped defect sum
    let final_d = log.final_defect();
    let bound = log.eps0_effective + log.poincare_constant * log.tau * (log.initial_energy + log.c_tilde);
    let grad_sum: f64 = log.steps.iter().map(|s| s.grad_incr_sq).sum();
    let tele = final_d - (log.initial_defect + grad_sum);
    let tele_tol = 1e-10 * (1.0 + log.initial_defect + grad_sum);
    let excess = (final_d - bound - 1e-10 * (1.0 + bound)).max(tele - tele_tol);
    let label = if log.dirichlet { "Dirichlet" } else { "free" };
    let defect_control = Certificate::check(
        "defect_control",
        excess,
        0.0,
        format!("{label} bound: D_h = {final_d:.6e} vs {bound:.6e}; telescoped D_h(y0) + sum |grad dy|^2 = {:.6e}", log.initial_defect + grad_sum),
    );

    // (iii) conserved means
    let mean_conservation = if log.dirichlet {
        Certificate::skipped("mean_conservation", "means not conserved under Dirichlet data")
    } else {
        let drift = log
            .steps
            .iter()
            .flat_map(|s| (0..3).map(move |m| (s.mean[m] - log.initial_mean[m]).abs()))
            .fold(0.0f64, f64::max);
        Certificate::check("mean_conservation", drift, 1e-10 * log.area, "max over steps and components of |int(y^n - y^0)|".into())
    };

    // (iv) stationarity on the tangent space
    let stationarity = match (&log.stationarity, log.converged) {
        (Some(s), _) => Certificate::check(
            "stationarity",
            s.residual_max,
            1e-6 * (1.0 + log.initial_energy.abs()),
            format!(
                "{} projected samples; beta_h = {}",
                s.samples,
                s.beta_h.map_or("not computed".to_string(), |b| format!("{b:.6e}"))
            ),
        ),
        (None, true) => Certificate::skipped("stationarity", "no stationarity samples requested"),
        (None, false) => {
            // the increment norm stays finite, so the verdict survives a JSON round trip
            let last = log.steps.last().map_or(0.0, |s| s.incr_norm_sq.sqrt());
            Certificate {
                name: "stationarity".into(),
                status: CertStatus::Fail,
                worst: last,
                threshold: log.tol_increment,
                detail: format!("flow did not converge: last increment norm {last:.3e} vs tolerance {:.3e}", log.tol_increment),
            }
        }
    };

    CertificateReport { energy_decay, defect_control, mean_conservation, stationarity }
}
