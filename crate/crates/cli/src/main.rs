//! `lorlut`: apply, fit, compress, benchmark, export, inspect and serve
//! low-rank residual LUT models.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod fmt;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorlut_core::InterpKind;

#[derive(Parser)]
#[command(name = "lorlut", version, about = "Low-rank residual 3D LUT tools")]
struct Cli {
    /// Worker threads for pixel-parallel work (default: all cores).
    #[arg(long, global = true, env = "LORLUT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a model or `.cube` LUT to an image.
    Apply(ApplyArgs),
    /// Fit a model to an input/target image pair.
    Fit(FitArgs),
    /// Compress a `.cube` LUT into a rank-R residual model.
    Compress(CompressArgs),
    /// Time residual reconstruction and LUT application on synthetic data.
    Bench(BenchArgs),
    /// Compose a model (with optional scales) and write it as `.cube`.
    ExportCube(ExportArgs),
    /// Print a model's shape, fusion weights and component curves.
    Inspect(InspectArgs),
    /// Run the HTTP API used by the viewer.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct ApplyArgs {
    /// Model file or `.cube` LUT.
    pub lut: PathBuf,
    pub input: PathBuf,
    /// Output image; format from the extension (`.png` or `.ppm`).
    pub output: PathBuf,
    /// Comma-separated component scales (models only), one per rank.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scales: Option<Vec<f64>>,
    #[arg(long, default_value = "trilinear")]
    pub interp: InterpKind,
    /// Image to report PSNR against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    pub input: PathBuf,
    pub target: PathBuf,
    /// Output model file; the report goes to `<output>.report.json`.
    pub output: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub bases: usize,
    #[arg(long, default_value_t = 33)]
    pub grid: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    /// Loss weights λ1..λ5 as five comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 5, default_value = "1,0,0,0.001,0.001")]
    pub weights: Vec<f64>,
}

#[derive(Args)]
pub struct CompressArgs {
    pub cube: PathBuf,
    pub output: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Apply resolution as WIDTHxHEIGHT; a second run doubles the height.
    #[arg(long, default_value = "1920x1080")]
    pub resolution: String,
    #[arg(long, default_value_t = 33)]
    pub grid: usize,
    /// Rank of the residual whose reconstruction is timed.
    #[arg(long, default_value_t = 32)]
    pub rank: usize,
    #[arg(long, default_value = "trilinear")]
    pub interp: InterpKind,
    #[arg(long, default_value_t = 100)]
    pub repeat: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ExportArgs {
    pub model: PathBuf,
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scales: Option<Vec<f64>>,
    #[arg(long, default_value = "lorlut")]
    pub title: String,
}

#[derive(Args)]
pub struct InspectArgs {
    pub model: PathBuf,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080, env = "LORLUT_PORT")]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1", env = "LORLUT_HOST")]
    pub host: String,
    #[arg(long, default_value_t = 16, env = "LORLUT_MAX_SESSIONS")]
    pub max_sessions: usize,
    /// Idle session lifetime in seconds.
    #[arg(long, default_value_t = 1800, env = "LORLUT_SESSION_TTL")]
    pub ttl_secs: u64,
    #[arg(long, default_value_t = 500, env = "LORLUT_MAX_FIT_STEPS")]
    pub max_fit_steps: usize,
    #[arg(long, env = "LORLUT_CORS_ORIGIN")]
    pub cors_origin: Option<String>,
    /// Model given to sessions created without one (default: identity).
    #[arg(long, env = "LORLUT_MODEL")]
    pub model: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Apply(a) => commands::apply(a),
        Command::Fit(a) => commands::fit(a),
        Command::Compress(a) => commands::compress(a),
        Command::Bench(a) => commands::bench(a),
        Command::ExportCube(a) => commands::export_cube(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
