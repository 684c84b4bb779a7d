//! Step tables, JSON reports and legacy VTK surfaces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ldg_core::dg::space::DgField;
use ldg_core::energy::{bending_density, defect_density, Problem};
use ldg_core::flows::main_flow::FlowLog;
use ldg_core::flows::preprocess::PreprocessLog;
use ldg_core::mesh::ElementKind;
use serde::Serialize;

use crate::error::{AppError, AppResult};
use crate::pipeline::{summarize, RunOutcome, RunSummary};

fn out_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::Output { path: path.display().to_string(), msg: e.to_string() }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| out_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| out_err(path, e))
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    energy: f64,
    e_s: f64,
    e_b: f64,
    defect: f64,
    incr_norm: f64,
    tau: f64,
    kkt_residual: f64,
    constraint_residual: f64,
    constraint_max: f64,
}

pub fn write_steps_csv(path: &Path, log: &FlowLog) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(path, e))?;
    for s in &log.steps {
        w.serialize(StepRow {
            step: s.step,
            energy: s.energy,
            e_s: s.e_s,
            e_b: s.e_b,
            defect: s.defect,
            incr_norm: s.incr_norm_sq.sqrt(),
            tau: log.tau,
            kkt_residual: s.kkt_primal_residual,
            constraint_residual: s.kkt_constraint_residual,
            constraint_max: s.constraint_max,
        })
        .map_err(|e| out_err(path, e))?;
    }
    if log.steps.is_empty() {
        w.write_record(["step", "energy", "e_s", "e_b", "defect", "incr_norm", "tau", "kkt_residual", "constraint_residual", "constraint_max"])
            .map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

#[derive(Serialize)]
struct PreRow {
    step: usize,
    tau: f64,
    halvings: usize,
    e_s: f64,
    e_b: f64,
    e_p: f64,
    defect: f64,
    incr_norm: f64,
    decay_residual: f64,
    c_h: f64,
}

pub fn write_preprocess_csv(path: &Path, log: &PreprocessLog) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| out_err(path, e))?;
    for s in &log.steps {
        w.serialize(PreRow {
            step: s.step,
            tau: s.tau,
            halvings: s.halvings,
            e_s: s.e_s,
            e_b: s.e_b,
            e_p: s.e_p,
            defect: s.defect,
            incr_norm: s.incr_norm_sq.sqrt(),
            decay_residual: s.decay_residual,
            c_h: s.c_h,
        })
        .map_err(|e| out_err(path, e))?;
    }
    if log.steps.is_empty() {
        w.write_record(["step", "tau", "halvings", "e_s", "e_b", "e_p", "defect", "incr_norm", "decay_residual", "c_h"]).map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

fn reference_corners(kind: ElementKind) -> &'static [[f64; 2]] {
    match kind {
        ElementKind::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        ElementKind::Quad => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    }
}

/// Legacy ASCII unstructured grid of the deformed surface, one point per element corner.
pub fn vtk_text(pr: &Problem, y: &DgField) -> AppResult<String> {
    let sp = pr.space();
    let mesh = &sp.mesh;
    let corners = reference_corners(mesh.kind);
    let nv = corners.len();
    let ne = mesh.n_elements();
    let defect = defect_density(pr, y);
    let bending = bending_density(pr, y)?;
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ndeformed plate\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", ne * nv);
    let mut params = String::new();
    for k in 0..ne {
        let ev = y.evaluate(k, corners)?;
        let map = mesh.element_map(k);
        for (c, v) in corners.iter().zip(&ev.values) {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", v[0], v[1], v[2]);
            let x = map.map(*c);
            let _ = writeln!(params, "{:.17e} {:.17e} 0", x[0], x[1]);
        }
    }
    let _ = writeln!(s, "CELLS {} {}", ne, ne * (nv + 1));
    for k in 0..ne {
        s.push_str(&nv.to_string());
        for i in 0..nv {
            let _ = write!(s, " {}", k * nv + i);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    let ty = if mesh.kind == ElementKind::Triangle { "5\n" } else { "9\n" };
    s.push_str(&ty.repeat(ne));
    let _ = writeln!(s, "POINT_DATA {}", ne * nv);
    for (name, vals) in [("defect_density", &defect), ("bending_density", &bending)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            for _ in 0..nv {
                let _ = writeln!(s, "{v:.17e}");
            }
        }
    }
    s.push_str("VECTORS parameter_point double\n");
    s.push_str(&params);
    Ok(s)
}

pub fn write_vtk(path: &Path, pr: &Problem, y: &DgField) -> AppResult<()> {
    fs::write(path, vtk_text(pr, y)?).map_err(|e| out_err(path, e))
}

/// Writes every run artifact into `dir` and returns the summary.
pub fn write_run(dir: &Path, out: &RunOutcome, wall_time_s: f64) -> AppResult<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))?;
    let summary = summarize(out, wall_time_s)?;
    write_steps_csv(&dir.join("steps.csv"), &out.flow)?;
    write_json(&dir.join("flow_log.json"), &out.flow)?;
    if let Some(p) = &out.preprocess {
        write_preprocess_csv(&dir.join("preprocess_steps.csv"), p)?;
        write_json(&dir.join("preprocess_log.json"), p)?;
    }
    write_json(&dir.join("certificates.json"), &out.certificates)?;
    write_json(&dir.join("summary.json"), &summary)?;
    write_vtk(&dir.join("surface_0.vtk"), &out.problem, &out.y_start)?;
    // surfaces are numbered by the total step count (preprocessing plus main flow)
    let n = out.flow.steps.len() + out.preprocess.as_ref().map_or(0, |p| p.steps.len());
    if n > 0 {
        write_vtk(&dir.join(format!("surface_{n}.vtk")), &out.problem, &out.y_final)?;
    }
    Ok(summary)
}
