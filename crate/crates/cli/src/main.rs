use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use frontmesh::datasets::{self, EmbeddingBasis, ManifoldSpec};
use frontmesh::eval::{evaluate, EvalError};
use frontmesh::exec::Exec;
use frontmesh::io::{self, IoError};
use frontmesh::pipeline::{triangulate, PipelineError, TriangulationConfig};
use frontmesh::spatial::{IndexMode, PointCloud};

/// Triangulate point clouds sampled near a surface in high-dimensional space.
#[derive(Debug, Parser)]
#[command(name = "frontmesh", version)]
struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Manifold {
    Sphere,
    Torus,
    SwissRoll,
    CreasedSheet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Obj,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic surface, embed it and write the points.
    Generate {
        #[arg(long, value_enum)]
        manifold: Manifold,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        ambient_dim: usize,
        /// Scale of the per-coordinate standard normal noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        basis_out: Option<PathBuf>,
    },
    /// Triangulate a point cloud.
    Triangulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        char_length: f64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        conflict_delta: Option<f64>,
        #[arg(long)]
        accept_tol: Option<f64>,
        #[arg(long)]
        merge_tol: Option<f64>,
        #[arg(long)]
        max_sew_length: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        start_index: Option<usize>,
        #[arg(long)]
        skip_sewing: bool,
        #[arg(long)]
        fill_holes: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Distance statistics of a point cloud against a mesh.
    Evaluate {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write a mesh as a 3D file.
    Export {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Obj)]
        format: Format,
        /// Unembed with this basis instead of projecting onto principal axes.
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Algorithm(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Algorithm(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Algorithm(m) => m,
        }
    }
}

fn input(path: &Path) -> impl FnOnce(IoError) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::InvalidConfig(_) | PipelineError::StartIndexOutOfRange { .. } => Failure::Usage(e.to_string()),
        _ => Failure::Algorithm(e.to_string()),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::DimensionMismatch { .. } => Failure::Input(format!("points do not match the mesh: {e}")),
        EvalError::EmptyComplex => Failure::Algorithm(e.to_string()),
    }
}

fn spec_for(manifold: Manifold) -> ManifoldSpec {
    match manifold {
        Manifold::Sphere => ManifoldSpec::sphere(),
        Manifold::Torus => ManifoldSpec::torus(),
        Manifold::SwissRoll => ManifoldSpec::swiss_roll(),
        Manifold::CreasedSheet => ManifoldSpec::creased_sheet(),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.command {
        Command::Generate { manifold, n, ambient_dim, noise, seed, out, basis_out } => {
            if n == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Failure::Usage(format!("--noise must be non-negative, got {noise}")));
            }
            if ambient_dim < 3 {
                return Err(Failure::Usage(format!("--ambient-dim must be at least 3, got {ambient_dim}")));
            }
            let spec = spec_for(manifold);
            let points = datasets::sample_manifold(&spec, n, seed, exec).map_err(|e| Failure::Usage(e.to_string()))?;
            let points = if noise > 0.0 { datasets::add_noise(&points, noise, seed.wrapping_add(1), exec) } else { points };
            let basis =
                EmbeddingBasis::random(ambient_dim, seed.wrapping_add(2)).map_err(|e| Failure::Usage(e.to_string()))?;
            let embedded = datasets::embed(&points, &basis, exec);
            io::write_points(&out, &embedded).map_err(input(&out))?;
            if let Some(path) = basis_out {
                io::write_basis(&path, &basis).map_err(input(&path))?;
            }
            log::info!("wrote {n} points in R^{ambient_dim} to {}", out.display());
        }
        Command::Triangulate {
            input: path,
            char_length,
            mu,
            conflict_delta,
            accept_tol,
            merge_tol,
            max_sew_length,
            seed,
            start_index,
            skip_sewing,
            fill_holes,
            out,
            report,
        } => {
            let mut config = TriangulationConfig::new(char_length);
            config.mu = mu.unwrap_or(config.mu);
            config.conflict_delta = conflict_delta.unwrap_or(config.conflict_delta);
            config.accept_tol = accept_tol.unwrap_or(config.accept_tol);
            config.merge_tol = merge_tol.unwrap_or(config.merge_tol);
            config.max_sew_length = max_sew_length.unwrap_or(config.max_sew_length);
            config.seed = seed;
            config.start_index = start_index;
            config.skip_sewing = skip_sewing;
            config.fill_holes = fill_holes;
            config.exec = exec;
            config.validate().map_err(pipeline_failure)?;
            let cloud = io::read_cloud(&path).map_err(input(&path))?;
            let result = triangulate(&cloud, &config).map_err(pipeline_failure)?;
            io::write_mesh(&out, &result.complex, Some(&config)).map_err(input(&out))?;
            let doc = json!({ "config": config, "run": result.report });
            io::write_json(&report, &doc).map_err(input(&report))?;
            let t = result.report.topology;
            log::info!("{} triangles, {} vertices, {} front edges", t.triangles, t.vertices, t.front_edges);
        }
        Command::Evaluate { mesh, points, report } => {
            let (complex, _) = io::read_mesh(&mesh).map_err(input(&mesh))?;
            let rows = io::read_points(&points).map_err(input(&points))?;
            let cloud = PointCloud::with_mode(rows, IndexMode::Linear).map_err(|e| Failure::Input(e.to_string()))?;
            let errors = evaluate(&cloud, &complex, exec).map_err(eval_failure)?;
            io::write_json(&report, &errors).map_err(input(&report))?;
            log::info!("max {:.6e} avg {:.6e} rms {:.6e}", errors.max, errors.avg, errors.rms);
        }
        Command::Export { mesh, format: Format::Obj, basis, out } => {
            let (complex, _) = io::read_mesh(&mesh).map_err(input(&mesh))?;
            let basis = basis.map(|p| io::read_basis(&p).map_err(input(&p))).transpose()?;
            io::write_obj(&out, &complex, basis.as_ref()).map_err(input(&out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message().lines().next().unwrap_or_default());
            ExitCode::from(f.code())
        }
    }
}
