use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ldg_core::mesh::build_structured_mesh;
use ldg_plates::config::{key_help, parse_side, MeshSpec};
use ldg_plates::{check, output, study, AppError, AppResult, ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "ldg-plates", version, about = "LDG bending of prestrained plates", after_long_help = key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run start, preprocessing, main flow and certificates; write all outputs.
    Run { config: PathBuf },
    /// Repeat the configuration on uniformly refined meshes.
    Study {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Only the interpolant columns.
        #[arg(long)]
        no_flow: bool,
    },
    /// Re-run with one key set to each value, e.g. --key params.gamma0 --values 1,10,100.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Write a structured mesh, spec `tri|quad:NX[xNY][@x0,y0,x1,y1]`.
    Mesh {
        spec: String,
        #[arg(short = 'o', long)]
        output: PathBuf,
        /// Clamped sides, comma separated (left, right, bottom, top).
        #[arg(long, value_delimiter = ',')]
        dirichlet: Vec<String>,
    },
    /// Property and certificate suite only.
    Check { config: PathBuf },
}

fn base_dir(p: &Path) -> &Path {
    p.parent().unwrap_or(Path::new("."))
}

fn execute(cmd: Command) -> AppResult<bool> {
    match cmd {
        Command::Run { config } => {
            let s = ldg_plates::run_file(&config)?;
            let cfg = RunConfig::load(&config)?;
            println!(
                "main flow: {} steps, E_h = {:.6e}, D_h = {:.6e}",
                s.flow.steps, s.flow.energy.total, s.flow.defect
            );
            for v in &s.certificates {
                println!("certificate {}: {:?}", v.name, v.status);
            }
            println!("outputs in {}", cfg.output_dir.display());
            Ok(s.all_certificates_passed)
        }
        Command::Study { config, levels, no_flow } => {
            let cfg = RunConfig::load(&config)?;
            let t = study::refinement_study(&cfg, levels, !no_flow)?;
            print!("{}", study::format_table(&t));
            study::write_study(&cfg.output_dir, &t)?;
            Ok(t.rows.iter().all(|r| r.flow_certificates_passed != Some(false)))
        }
        Command::Sweep { config, key, values } => {
            let text = std::fs::read_to_string(&config).map_err(|e| ConfigError::Read { path: config.display().to_string(), msg: e.to_string() })?;
            let ini = ini::Ini::load_from_str(&text).map_err(|e| ConfigError::Invalid(format!("config syntax: {e}")))?;
            let rows = study::parameter_sweep(&ini, base_dir(&config), &key, &values)?;
            println!("{:>14} {:>6} {:>14} {:>14} {:>6}", key, "steps", "E_h", "D_h", "certs");
            for r in &rows {
                let f = &r.summary.flow;
                let ok = if r.summary.all_certificates_passed { "pass" } else { "FAIL" };
                println!("{:>14} {:>6} {:>14.6e} {:>14.6e} {:>6}", r.value, f.steps, f.energy.total, f.defect, ok);
            }
            let cfg = RunConfig::load(&config)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| AppError::Output { path: cfg.output_dir.display().to_string(), msg: e.to_string() })?;
            output::write_json(&cfg.output_dir.join("sweep.json"), &rows)?;
            Ok(rows.iter().all(|r| r.summary.all_certificates_passed))
        }
        Command::Mesh { spec, output, dirichlet } => {
            let s = MeshSpec::parse(&spec)?;
            let mut mesh = build_structured_mesh(s.lo, s.hi, s.nx, s.ny, s.kind)?;
            let sides = dirichlet
                .iter()
                .map(|d| parse_side(d.trim()).ok_or_else(|| ConfigError::Invalid(format!("unknown side '{d}'"))))
                .collect::<Result<Vec<_>, _>>()?;
            if !sides.is_empty() {
                mesh.label_sides(&sides);
            }
            mesh.save(&output)?;
            println!("{} elements, {} edges written to {}", mesh.n_elements(), mesh.edges.len(), output.display());
            Ok(true)
        }
        Command::Check { config } => {
            let cfg = RunConfig::load(&config)?;
            let r = check::run_check(&cfg)?;
            for i in &r.items {
                println!("{:<32} {:<8} {:.4e}  {}", i.name, format!("{:?}", i.status).to_lowercase(), i.value, i.detail);
            }
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| AppError::Output { path: cfg.output_dir.display().to_string(), msg: e.to_string() })?;
            output::write_json(&cfg.output_dir.join("check.json"), &r)?;
            Ok(r.all_passed)
        }
    }
}

fn init_threads() -> Result<(), ConfigError> {
    if let Ok(v) = std::env::var("LDG_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError::Invalid(format!("LDG_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more certificates failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
