//! `check`: the property and certificate suite for one configuration, without surface output.

use ldg_core::dg::diagnostics::functional_inequality_check;
use ldg_core::dg::space::interpolate_vec3;
use ldg_core::energy::{coercivity_check, continuous_energy_check, metric_defect};
use ldg_core::flows::certificates::CertStatus;
use ldg_core::lifting::{lifting_stability_check, seminorm_equivalence_check};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::AppResult;
use crate::pipeline::{build_mesh, build_problem, metric_immersion, run_problem};

const SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub status: CertStatus,
    pub value: f64,
    pub detail: String,
}

impl CheckItem {
    fn new(name: &str, ok: bool, value: f64, detail: String) -> Self {
        CheckItem { name: name.into(), status: if ok { CertStatus::Pass } else { CertStatus::Fail }, value, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
    pub all_passed: bool,
}

pub fn run_check(cfg: &RunConfig) -> AppResult<CheckReport> {
    let mesh = build_mesh(cfg)?;
    let pr = build_problem(cfg, mesh)?;
    let sp = pr.space().clone();
    let seed = cfg.seed;
    let mut items = vec![];

    let b = seminorm_equivalence_check(&pr.assembly, cfg.params.gamma0, cfg.params.gamma1, SAMPLES, seed)?;
    items.push(CheckItem::new(
        "seminorm_equivalence",
        b.c_lower_observed > 0.0 && b.c_upper_observed.is_finite(),
        b.c_lower_observed,
        format!("observed ratios in [{:.4e}, {:.4e}]", b.c_lower_observed, b.c_upper_observed),
    ));
    let l = lifting_stability_check(&pr.assembly, SAMPLES, seed)?;
    items.push(CheckItem::new(
        "lifting_stability",
        l.r_ratio_max.is_finite() && l.b_ratio_max.is_finite(),
        l.r_ratio_max.max(l.b_ratio_max),
        format!("R ratio {:.4e}, B ratio {:.4e}", l.r_ratio_max, l.b_ratio_max),
    ));
    let c = coercivity_check(&pr, SAMPLES, seed)?;
    items.push(CheckItem::new("coercivity", c.ratio_min > 0.0, c.ratio_min, format!("E_h / |y|^2 in [{:.4e}, {:.4e}]", c.ratio_min, c.ratio_max)));
    let f = functional_inequality_check(&sp, SAMPLES, seed);
    let worst = f.poincare_ratio_max.max(f.sobolev_ratio_max).max(f.grad_bound_ratio_max);
    items.push(CheckItem::new(
        "functional_inequalities",
        worst.is_finite(),
        worst,
        format!("Poincare {:.3e}, Sobolev {:.3e}, gradient {:.3e}", f.poincare_ratio_max, f.sobolev_ratio_max, f.grad_bound_ratio_max),
    ));
    if let Some(y) = metric_immersion(cfg) {
        let v = y.value.clone();
        let yi = interpolate_vec3(&sp, move |x| v(x));
        let d = metric_defect(&pr, &yi)?;
        let h = sp.mesh.h_max();
        items.push(CheckItem::new("interpolant_defect", d.is_finite(), d, format!("D_h(I_h y) = {d:.4e} at h = {h:.4e}")));
        let r = continuous_energy_check(&sp, &y, &pr.metric, cfg.params.mu, cfg.params.lambda)?;
        // the Hessian density dominates the second fundamental form density pointwise
        let ok = r.admissibility_violation <= 1e-8 && r.f1_min >= -1e-10 * (1.0 + r.f1_max_abs);
        items.push(CheckItem::new(
            "continuous_energy_consistency",
            ok,
            r.f1_min,
            format!("E via II {:.6e}, via Hessian {:.6e}, admissibility {:.3e}", r.e_via_ii, r.e_via_hessian, r.admissibility_violation),
        ));
    }

    let out = run_problem(cfg, pr)?;
    for cert in out.certificates.all() {
        items.push(CheckItem { name: format!("flow_{}", cert.name), status: cert.status, value: cert.worst, detail: cert.detail.clone() });
    }
    let all_passed = items.iter().all(|i| i.status != CertStatus::Fail);
    Ok(CheckReport { items, all_passed })
}
