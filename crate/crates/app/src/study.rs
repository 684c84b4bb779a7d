//! Refinement studies and one-key parameter sweeps.

use std::path::Path;

use ini::Ini;
use ldg_core::dg::space::interpolate_vec3;
use ldg_core::energy::{continuous_energy_check, energy_eh, metric_defect};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{AppResult, ConfigError};
use crate::output::write_json;
use crate::pipeline::{build_mesh, build_problem, metric_immersion, run_problem, summarize, RunSummary};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StudyRow {
    pub level: usize,
    pub h_max: f64,
    pub elements: usize,
    /// `‖H_h(I_h y) − D²y‖` for the catalog immersion.
    pub hessian_error: Option<f64>,
    pub interpolant_defect: Option<f64>,
    pub interpolant_energy: Option<f64>,
    /// Bending energy of the immersion itself.
    pub exact_energy: Option<f64>,
    pub flow_steps: Option<usize>,
    pub flow_energy: Option<f64>,
    pub flow_defect: Option<f64>,
    pub flow_certificates_passed: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub hessian_error_rates: Vec<f64>,
    pub interpolant_defect_rates: Vec<f64>,
    pub flow_defect_rates: Vec<f64>,
    pub notes: Vec<String>,
}

/// `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` over consecutive levels.
pub fn rates(h: &[f64], e: &[f64]) -> Vec<f64> {
    (1..e.len().min(h.len())).map(|i| (e[i - 1] / e[i]).ln() / (h[i - 1] / h[i]).ln()).collect()
}

/// Runs the configuration on `levels` uniformly refined meshes.
pub fn refinement_study(cfg: &RunConfig, levels: usize, with_flow: bool) -> AppResult<StudyTable> {
    if levels < 2 {
        return Err(ConfigError::Invalid(format!("a refinement study needs at least 2 levels, got {levels}")).into());
    }
    let immersion = metric_immersion(cfg);
    let mut table = StudyTable::default();
    if immersion.is_none() {
        table.notes.push("the metric has no analytic immersion; interpolant columns are omitted".into());
    }
    if cfg.forcing.is_some() {
        table.notes.push("exact_energy excludes the forcing term".into());
    }
    let mut mesh = build_mesh(cfg)?;
    for level in 0..levels {
        if level > 0 {
            mesh = mesh.refine_uniform();
        }
        let pr = build_problem(cfg, mesh.clone())?;
        let sp = pr.space().clone();
        let mut row = StudyRow { level, h_max: sp.mesh.h_max(), elements: sp.mesh.n_elements(), ..Default::default() };
        if let Some(y) = &immersion {
            let f = y.value.clone();
            let yi = interpolate_vec3(&sp, move |x| f(x));
            let hess = y.hessian.clone();
            let err = pr
                .assembly
                .discrete_hessian(&yi)?
                .l2_error(&sp, &|x| hess(x).iter().map(|h| [[h[0], h[1]], [h[1], h[2]]]).collect());
            row.hessian_error = Some(err);
            row.interpolant_defect = Some(metric_defect(&pr, &yi)?);
            row.interpolant_energy = Some(energy_eh(&pr, &yi)?.total);
            row.exact_energy = Some(continuous_energy_check(&sp, y, &pr.metric, cfg.params.mu, cfg.params.lambda)?.e_via_ii);
        }
        if with_flow {
            let out = run_problem(cfg, pr)?;
            row.flow_steps = Some(out.flow.steps.len());
            row.flow_energy = Some(out.flow.final_energy());
            row.flow_defect = Some(out.flow.final_defect());
            row.flow_certificates_passed = Some(out.passed());
        }
        log::info!("level {level}: h = {:.4e}, {} elements", row.h_max, row.elements);
        table.rows.push(row);
    }
    let h: Vec<f64> = table.rows.iter().map(|r| r.h_max).collect();
    let col = |f: fn(&StudyRow) -> Option<f64>| -> Vec<f64> { table.rows.iter().filter_map(f).collect() };
    table.hessian_error_rates = rates(&h, &col(|r| r.hessian_error));
    table.interpolant_defect_rates = rates(&h, &col(|r| r.interpolant_defect));
    table.flow_defect_rates = rates(&h, &col(|r| r.flow_defect));
    Ok(table)
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6e}"))
}

pub fn format_table(t: &StudyTable) -> String {
    let mut s = format!(
        "{:>5} {:>12} {:>8} {:>13} {:>13} {:>13} {:>13} {:>6} {:>13} {:>13} {:>5}\n",
        "level", "h_max", "elems", "hess_err", "D_h(I_h y)", "E_h(I_h y)", "E(y)", "steps", "E_h flow", "D_h flow", "certs"
    );
    for r in &t.rows {
        s += &format!(
            "{:>5} {:>12.6e} {:>8} {:>13} {:>13} {:>13} {:>13} {:>6} {:>13} {:>13} {:>5}\n",
            r.level,
            r.h_max,
            r.elements,
            opt(r.hessian_error),
            opt(r.interpolant_defect),
            opt(r.interpolant_energy),
            opt(r.exact_energy),
            r.flow_steps.map_or("-".into(), |n| n.to_string()),
            opt(r.flow_energy),
            opt(r.flow_defect),
            r.flow_certificates_passed.map_or("-", |p| if p { "pass" } else { "FAIL" }),
        );
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    if !t.hessian_error_rates.is_empty() {
        s += &format!("rates hess_err: {}\n", fmt(&t.hessian_error_rates));
        s += &format!("rates D_h(I_h y): {}\n", fmt(&t.interpolant_defect_rates));
    }
    if !t.flow_defect_rates.is_empty() {
        s += &format!("rates D_h flow: {}\n", fmt(&t.flow_defect_rates));
    }
    for n in &t.notes {
        s += &format!("note: {n}\n");
    }
    s
}

pub fn write_study(dir: &Path, t: &StudyTable) -> AppResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::AppError::Output { path: dir.display().to_string(), msg: e.to_string() })?;
    write_json(&dir.join("study.json"), t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub summary: RunSummary,
}

/// Re-runs the pipeline with `section.key` set to each of `values`.
pub fn parameter_sweep(ini: &Ini, base: &Path, key: &str, values: &[String]) -> AppResult<Vec<SweepRow>> {
    let (section, name) = key.split_once('.').ok_or_else(|| ConfigError::Invalid(format!("sweep key '{key}' must look like section.key")))?;
    let mut rows = vec![];
    for v in values {
        let mut ini = ini.clone();
        ini.with_section(Some(section)).set(name, v.as_str());
        let cfg = RunConfig::from_ini(&ini, base)?;
        let t0 = std::time::Instant::now();
        let mesh = build_mesh(&cfg)?;
        let out = run_problem(&cfg, build_problem(&cfg, mesh)?)?;
        rows.push(SweepRow { value: v.clone(), summary: summarize(&out, t0.elapsed().as_secs_f64())? });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_of_power_laws() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        for r in rates(&h, &e) {
            assert!((r - 2.0).abs() < 1e-12);
        }
        assert!(rates(&h, &[]).is_empty());
    }
}
