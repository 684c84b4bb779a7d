//! Run configuration: a flat INI-style file with bracketed section headers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ini::Ini;
use ldg_core::mesh::{ElementKind, Side};

use crate::error::ConfigError;
use crate::expr::Expression;

/// Every accepted `(section, key, description)`; unknown keys are rejected.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mesh", "file", "mesh file to load (relative to the config); excludes the structured keys"),
    ("mesh", "kind", "tri | quad for a structured rectangle mesh [tri]"),
    ("mesh", "n", "cells per side (sets nx and ny) [8]"),
    ("mesh", "nx", "cells along x1"),
    ("mesh", "ny", "cells along x2"),
    ("mesh", "domain", "x1_min, x2_min, x1_max, x2_max [0,0,1,1]"),
    ("mesh", "dirichlet", "clamped sides of a structured mesh: comma list of left, right, bottom, top"),
    ("space", "k", "polynomial degree, 2..4 [2]"),
    ("metric", "name", "identity | cylinder | catenoid | stretched [identity]"),
    ("metric", "beta", "coefficient of the stretched metric [0.3]"),
    ("metric", "g11", "metric entry expression in x1, x2 (with g12, g22; replaces name)"),
    ("metric", "g12", "metric entry expression"),
    ("metric", "g22", "metric entry expression"),
    ("params", "mu", "Lame coefficient mu > 0 [1]"),
    ("params", "lambda", "Lame coefficient lambda >= 0 [0]"),
    ("params", "gamma0", "jump penalty > 0 [1]"),
    ("params", "gamma1", "gradient jump penalty > 0 [1]"),
    ("params", "gamma0_hat", "bi-Laplacian jump penalty > 0 [gamma0]"),
    ("params", "gamma1_hat", "bi-Laplacian gradient jump penalty > 0 [gamma1]"),
    ("forcing", "f1", "forcing component expression [none]"),
    ("forcing", "f2", "forcing component expression"),
    ("forcing", "f3", "forcing component expression"),
    ("dirichlet", "immersion", "boundary data from a catalog immersion: plane | cylinder | catenoid"),
    ("dirichlet", "phi1", "boundary deformation expression (with phi2, phi3)"),
    ("dirichlet", "phi2", "boundary deformation expression"),
    ("dirichlet", "phi3", "boundary deformation expression"),
    ("dirichlet", "phi1_x1", "boundary gradient data d(phi1)/dx1; all six or none (central differences)"),
    ("dirichlet", "phi1_x2", "boundary gradient data"),
    ("dirichlet", "phi2_x1", "boundary gradient data"),
    ("dirichlet", "phi2_x2", "boundary gradient data"),
    ("dirichlet", "phi3_x1", "boundary gradient data"),
    ("dirichlet", "phi3_x2", "boundary gradient data"),
    ("init", "start", "auto | flat | bilaplacian; auto picks bilaplacian iff clamped [auto]"),
    ("init", "perturbation", "amplitude of a smooth random perturbation of the start [0]"),
    ("init", "perturbation_mode", "normal (third component only) | full (all three) [normal]"),
    ("preprocess", "enabled", "run the metric preprocessing flow [true]"),
    ("preprocess", "sigma", "zero | h2 | <value> [zero]"),
    ("preprocess", "tau", "step size cap [main-flow tau]"),
    ("preprocess", "c_stop", "stop once E_p <= c_stop*sigma (sigma > 0) [1]"),
    ("preprocess", "abs_tol", "stop once E_s <= abs_tol (sigma = 0) [1e-10]"),
    ("preprocess", "max_steps", "step limit [500]"),
    ("preprocess", "samples", "random samples for the step-rule constants [200]"),
    ("flow", "tau", "h | <value>; h uses the largest element diameter [h]"),
    ("flow", "tol", "stop once the increment norm falls below this [1e-8 (1 + E_h(y0))^(1/2)]"),
    ("flow", "max_steps", "step limit [1000]"),
    ("flow", "stationarity_samples", "tangent directions for the stationarity certificate [50]"),
    ("flow", "eps0", "prestrain admissibility level in the defect bound [0]"),
    ("output", "dir", "output directory (relative to the config) [out]"),
    ("diagnostics", "seed", "seed for every randomized step [0]"),
];

/// Structured rectangle mesh; also the `mesh` subcommand's spec `kind:NXxNY[@x0,y0,x1,y1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub kind: ElementKind,
    pub nx: usize,
    pub ny: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl MeshSpec {
    pub fn parse(spec: &str) -> Result<MeshSpec, ConfigError> {
        let bad = |m: &str| ConfigError::Invalid(format!("mesh spec '{spec}': {m} (expected kind:NX[xNY][@x0,y0,x1,y1])"));
        let (kind, rest) = spec.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        let kind = parse_kind(kind.trim()).ok_or_else(|| bad("kind must be tri or quad"))?;
        let (cells, dom) = match rest.split_once('@') {
            Some((c, d)) => (c, Some(d)),
            None => (rest, None),
        };
        let count = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| bad("cell counts must be positive integers"));
        let (nx, ny) = match cells.split_once('x') {
            Some((a, b)) => (count(a)?, count(b)?),
            None => (count(cells)?, count(cells)?),
        };
        let (lo, hi) = match dom {
            Some(d) => parse_domain(d).map_err(|m| bad(&m))?,
            None => ([0.0, 0.0], [1.0, 1.0]),
        };
        Ok(MeshSpec { kind, nx, ny, lo, hi })
    }
}

fn parse_kind(s: &str) -> Option<ElementKind> {
    match s {
        "tri" | "triangle" => Some(ElementKind::Triangle),
        "quad" => Some(ElementKind::Quad),
        _ => None,
    }
}

fn parse_domain(s: &str) -> Result<([f64; 2], [f64; 2]), String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    if v.len() != 4 {
        return Err("domain needs four numbers".into());
    }
    if !(v[2] > v[0] && v[3] > v[1]) {
        return Err("domain must have x1_max > x1_min and x2_max > x2_min".into());
    }
    Ok(([v[0], v[1]], [v[2], v[3]]))
}

#[derive(Clone, Debug)]
pub enum MeshSource {
    File(PathBuf),
    Structured(MeshSpec),
}

#[derive(Clone, Debug)]
pub enum MetricSpec {
    Catalog { name: String, beta: f64 },
    Expressions([Expression; 3]),
}

#[derive(Clone, Debug)]
pub enum DirichletSpec {
    None,
    Immersion(String),
    Expressions { phi: [Expression; 3], grad: Option<[[Expression; 2]; 3]> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaRule {
    Zero,
    H2,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauRule {
    H,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartRule {
    Auto,
    Flat,
    Bilaplacian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    pub mu: f64,
    pub lambda: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma0_hat: f64,
    pub gamma1_hat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessBlock {
    pub enabled: bool,
    pub sigma: SigmaRule,
    pub tau: Option<f64>,
    pub c_stop: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowBlock {
    pub tau: TauRule,
    pub tol: Option<f64>,
    pub max_steps: usize,
    pub stationarity_samples: usize,
    pub eps0: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub clamped_sides: Vec<Side>,
    pub k: usize,
    pub metric: MetricSpec,
    pub params: Params,
    pub forcing: Option<[Expression; 3]>,
    pub dirichlet: DirichletSpec,
    pub start: StartRule,
    pub perturbation: f64,
    /// Perturb all three components instead of the out-of-plane one.
    pub perturb_all: bool,
    pub preprocess: PreprocessBlock,
    pub flow: FlowBlock,
    pub output_dir: PathBuf,
    pub seed: u64,
}

struct Reader<'a> {
    ini: &'a Ini,
}

impl<'a> Reader<'a> {
    fn raw(&self, section: &str, key: &str) -> Option<&'a str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::value(section, key, format!("'{v}': {e}"))),
        }
    }

    fn expr(&self, section: &str, key: &str) -> Result<Option<Expression>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => Expression::parse(v).map(Some).map_err(|e| ConfigError::value(section, key, e.to_string())),
        }
    }

    /// All of `keys` or none of them.
    fn expr_group<const N: usize>(&self, section: &str, keys: [&str; N]) -> Result<Option<[Expression; N]>, ConfigError> {
        let found: Vec<Option<Expression>> = keys.iter().map(|k| self.expr(section, k)).collect::<Result<_, _>>()?;
        let n = found.iter().filter(|e| e.is_some()).count();
        if n == 0 {
            return Ok(None);
        }
        if n < N {
            let missing: Vec<&str> = keys.iter().zip(&found).filter(|(_, e)| e.is_none()).map(|(k, _)| *k).collect();
            return Err(ConfigError::value(section, missing[0], format!("required together with {}", keys.join(", "))));
        }
        Ok(Some(found.into_iter().map(Option::unwrap).collect::<Vec<_>>().try_into().unwrap()))
    }
}

fn check_keys(ini: &Ini) -> Result<(), ConfigError> {
    let sections: BTreeSet<&str> = KEYS.iter().map(|k| k.0).collect();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((k, _)) = props.iter().next() {
                return Err(ConfigError::Invalid(format!("key '{k}' appears before any [section]")));
            }
            continue;
        };
        if !sections.contains(name) {
            return Err(ConfigError::UnknownSection(name.into()));
        }
        for (k, _) in props.iter() {
            if !KEYS.iter().any(|e| e.0 == name && e.1 == k) {
                return Err(ConfigError::UnknownKey { section: name.into(), key: k.into() });
            }
        }
    }
    Ok(())
}

pub fn parse_side(s: &str) -> Option<Side> {
    match s {
        "left" => Some(Side::Left),
        "right" => Some(Side::Right),
        "bottom" => Some(Side::Bottom),
        "top" => Some(Side::Top),
        _ => None,
    }
}

fn positive(section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::value(section, key, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
        RunConfig::from_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn from_str(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Invalid(format!("config syntax: {e}")))?;
        RunConfig::from_ini(&ini, base)
    }

    pub fn from_ini(ini: &Ini, base: &Path) -> Result<RunConfig, ConfigError> {
        check_keys(ini)?;
        let r = Reader { ini };

        let mesh = if let Some(f) = r.raw("mesh", "file") {
            for k in ["kind", "n", "nx", "ny", "domain", "dirichlet"] {
                if r.has("mesh", k) {
                    return Err(ConfigError::value("mesh", k, "not allowed with mesh.file"));
                }
            }
            MeshSource::File(base.join(f))
        } else {
            let kind = match r.raw("mesh", "kind") {
                None => ElementKind::Triangle,
                Some(s) => parse_kind(s).ok_or_else(|| ConfigError::value("mesh", "kind", format!("'{s}' is not tri or quad")))?,
            };
            let n: usize = r.parse("mesh", "n", 8)?;
            let (nx, ny) = (r.parse("mesh", "nx", n)?, r.parse("mesh", "ny", n)?);
            if nx == 0 || ny == 0 {
                return Err(ConfigError::value("mesh", "n", "cell counts must be positive"));
            }
            let (lo, hi) = match r.raw("mesh", "domain") {
                None => ([0.0, 0.0], [1.0, 1.0]),
                Some(d) => parse_domain(d).map_err(|m| ConfigError::value("mesh", "domain", m))?,
            };
            MeshSource::Structured(MeshSpec { kind, nx, ny, lo, hi })
        };
        let mut clamped_sides = vec![];
        if let Some(s) = r.raw("mesh", "dirichlet") {
            for t in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let side = parse_side(t).ok_or_else(|| ConfigError::value("mesh", "dirichlet", format!("unknown side '{t}'")))?;
                if !clamped_sides.contains(&side) {
                    clamped_sides.push(side);
                }
            }
        }

        let k: usize = r.parse("space", "k", 2)?;
        if !(2..=4).contains(&k) {
            return Err(ConfigError::value("space", "k", format!("degree must be in 2..4, got {k}")));
        }

        let metric = match r.expr_group("metric", ["g11", "g12", "g22"])? {
            Some(g) => {
                if r.has("metric", "name") || r.has("metric", "beta") {
                    return Err(ConfigError::value("metric", "name", "give either a catalog name or g11, g12, g22"));
                }
                MetricSpec::Expressions(g)
            }
            None => {
                let name = r.raw("metric", "name").unwrap_or("identity").to_string();
                if !["identity", "cylinder", "catenoid", "stretched"].contains(&name.as_str()) {
                    return Err(ConfigError::value("metric", "name", format!("unknown catalog metric '{name}'")));
                }
                let beta: f64 = r.parse("metric", "beta", 0.3)?;
                if !beta.is_finite() {
                    return Err(ConfigError::value("metric", "beta", "must be finite"));
                }
                MetricSpec::Catalog { name, beta }
            }
        };

        let mu = positive("params", "mu", r.parse("params", "mu", 1.0)?)?;
        let lambda: f64 = r.parse("params", "lambda", 0.0)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ConfigError::value("params", "lambda", format!("must be nonnegative, got {lambda}")));
        }
        let gamma0 = positive("params", "gamma0", r.parse("params", "gamma0", 1.0)?)?;
        let gamma1 = positive("params", "gamma1", r.parse("params", "gamma1", 1.0)?)?;
        let gamma0_hat = positive("params", "gamma0_hat", r.parse("params", "gamma0_hat", gamma0)?)?;
        let gamma1_hat = positive("params", "gamma1_hat", r.parse("params", "gamma1_hat", gamma1)?)?;
        let params = Params { mu, lambda, gamma0, gamma1, gamma0_hat, gamma1_hat };

        let forcing = r.expr_group("forcing", ["f1", "f2", "f3"])?;

        let phi = r.expr_group("dirichlet", ["phi1", "phi2", "phi3"])?;
        let grad = r.expr_group("dirichlet", ["phi1_x1", "phi1_x2", "phi2_x1", "phi2_x2", "phi3_x1", "phi3_x2"])?;
        let dirichlet = match (r.raw("dirichlet", "immersion"), phi) {
            (Some(_), Some(_)) => return Err(ConfigError::value("dirichlet", "immersion", "give either an immersion or phi1..phi3")),
            (Some(name), None) => {
                if !["plane", "cylinder", "catenoid"].contains(&name) {
                    return Err(ConfigError::value("dirichlet", "immersion", format!("unknown immersion '{name}'")));
                }
                if grad.is_some() {
                    return Err(ConfigError::value("dirichlet", "phi1_x1", "gradient data needs phi1..phi3"));
                }
                DirichletSpec::Immersion(name.into())
            }
            (None, Some(phi)) => {
                let grad = grad.map(|[a, b, c, d, e, f]| [[a, b], [c, d], [e, f]]);
                DirichletSpec::Expressions { phi, grad }
            }
            (None, None) => {
                if grad.is_some() {
                    return Err(ConfigError::value("dirichlet", "phi1_x1", "gradient data needs phi1..phi3"));
                }
                DirichletSpec::None
            }
        };
        if matches!(mesh, MeshSource::Structured(_)) {
            let clamped = !clamped_sides.is_empty();
            let data = !matches!(dirichlet, DirichletSpec::None);
            if clamped && !data {
                return Err(ConfigError::value("dirichlet", "immersion", "clamped sides need boundary data"));
            }
            if data && !clamped {
                return Err(ConfigError::value("mesh", "dirichlet", "boundary data given but no side is clamped"));
            }
        }

        let start = match r.raw("init", "start").unwrap_or("auto") {
            "auto" => StartRule::Auto,
            "flat" => StartRule::Flat,
            "bilaplacian" => StartRule::Bilaplacian,
            s => return Err(ConfigError::value("init", "start", format!("'{s}' is not auto, flat or bilaplacian"))),
        };
        let perturbation: f64 = r.parse("init", "perturbation", 0.0)?;
        if !perturbation.is_finite() {
            return Err(ConfigError::value("init", "perturbation", "must be finite"));
        }

        let perturb_all = match r.raw("init", "perturbation_mode").unwrap_or("normal") {
            "normal" => false,
            "full" => true,
            s => return Err(ConfigError::value("init", "perturbation_mode", format!("'{s}' is not normal or full"))),
        };

        let sigma = match r.raw("preprocess", "sigma").unwrap_or("zero") {
            "zero" => SigmaRule::Zero,
            "h2" => SigmaRule::H2,
            s => {
                let v: f64 = s.parse().map_err(|_| ConfigError::value("preprocess", "sigma", format!("'{s}' is not zero, h2 or a number")))?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ConfigError::value("preprocess", "sigma", "must be nonnegative"));
                }
                SigmaRule::Value(v)
            }
        };
        let pre_tau = match r.raw("preprocess", "tau") {
            None => None,
            Some(_) => Some(positive("preprocess", "tau", r.parse("preprocess", "tau", 0.0)?)?),
        };
        let preprocess = PreprocessBlock {
            enabled: r.parse("preprocess", "enabled", true)?,
            sigma,
            tau: pre_tau,
            c_stop: positive("preprocess", "c_stop", r.parse("preprocess", "c_stop", 1.0)?)?,
            abs_tol: positive("preprocess", "abs_tol", r.parse("preprocess", "abs_tol", 1e-10)?)?,
            max_steps: r.parse("preprocess", "max_steps", 500)?,
            samples: r.parse("preprocess", "samples", 200)?,
        };

        let tau = match r.raw("flow", "tau").unwrap_or("h") {
            "h" => TauRule::H,
            s => {
                let v: f64 = s.parse().map_err(|_| ConfigError::value("flow", "tau", format!("'{s}' is not h or a number")))?;
                TauRule::Value(positive("flow", "tau", v)?)
            }
        };
        let tol = match r.raw("flow", "tol") {
            None => None,
            Some(_) => Some(positive("flow", "tol", r.parse("flow", "tol", 0.0)?)?),
        };
        let eps0: f64 = r.parse("flow", "eps0", 0.0)?;
        if !(eps0 >= 0.0 && eps0.is_finite()) {
            return Err(ConfigError::value("flow", "eps0", "must be nonnegative"));
        }
        let flow = FlowBlock {
            tau,
            tol,
            max_steps: r.parse("flow", "max_steps", 1000)?,
            stationarity_samples: r.parse("flow", "stationarity_samples", 50)?,
            eps0,
        };

        Ok(RunConfig {
            mesh,
            clamped_sides,
            k,
            metric,
            params,
            forcing,
            dirichlet,
            start,
            perturbation,
            perturb_all,
            preprocess,
            flow,
            output_dir: base.join(r.raw("output", "dir").unwrap_or("out")),
            seed: r.parse("diagnostics", "seed", 0)?,
        })
    }
}

/// Key reference printed by `--help`.
pub fn key_help() -> String {
    let mut s = String::from("Config keys ([section] key: meaning [default]):\n");
    let mut last = "";
    for (sec, key, doc) in KEYS {
        if *sec != last {
            s.push_str(&format!("  [{sec}]\n"));
            last = sec;
        }
        s.push_str(&format!("    {key:<22} {doc}\n"));
    }
    s
}
