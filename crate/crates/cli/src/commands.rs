use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lorlut_core::io::{read_cube, read_image, read_model, write_cube, write_image, write_model, ImageFormat};
use lorlut_core::lowrank::{dense_param_count, RankComponent};
use lorlut_core::optim::{cp_als_compress, fit_image_pair, FitConfig, LossWeights};
use lorlut_core::{
    apply_to_image, component_curves, compose_lut, identity_lut, psnr, reconstruct_residual, residual_param_count,
    ComponentScales, CpFactors, ImageBuffer, InterpKind, LorLutModel, Lut3D, LutError, RgbColor,
};
use lorlut_service::{AppState, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fmt::{g6, join};
use crate::{ApplyArgs, BenchArgs, CompressArgs, ExportArgs, FitArgs, InspectArgs, ServeArgs};

const MODEL_MAGIC: &str = "lorlut-model v1";

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<LutError> for CmdError {
    fn from(e: LutError) -> Self {
        match e {
            LutError::ScaleLength { .. } | LutError::InvalidConfig(_) | LutError::GridTooSmall(_) => {
                Self::usage(e.to_string())
            }
            _ => Self::runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), CmdError>;

fn read_text(path: &Path) -> Result<String, CmdError> {
    fs::read_to_string(path).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, bytes).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))
}

fn load_image(path: &Path) -> Result<ImageBuffer, CmdError> {
    let bytes = fs::read(path).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))?;
    read_image(&bytes).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))
}

fn output_format(path: &Path) -> Result<ImageFormat, CmdError> {
    ImageFormat::from_path(path)
        .ok_or_else(|| CmdError::usage(format!("{}: output must end in .png or .ppm", path.display())))
}

fn load_model(path: &Path) -> Result<LorLutModel, CmdError> {
    read_model(&read_text(path)?).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))
}

fn scales_for(model: &LorLutModel, scales: Option<Vec<f64>>) -> Result<ComponentScales, CmdError> {
    match scales {
        None => Ok(ComponentScales::ones(model.rank())),
        Some(s) if s.len() != model.rank() => Err(CmdError::usage(format!(
            "--scales has {} values but the model has rank {}",
            s.len(),
            model.rank()
        ))),
        Some(s) => Ok(ComponentScales::new(s)?),
    }
}

/// Loads either a model (recognized by its header line) or a `.cube` file.
fn load_lut(path: &Path, scales: Option<Vec<f64>>) -> Result<Lut3D, CmdError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with(MODEL_MAGIC) {
        let model = read_model(&text).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))?;
        let scales = scales_for(&model, scales)?;
        Ok(compose_lut(&model, &scales)?)
    } else {
        if scales.is_some() {
            return Err(CmdError::usage("--scales only applies to model files"));
        }
        read_cube(&text).map_err(|e| CmdError::runtime(format!("{}: {e}", path.display())))
    }
}

pub fn apply(a: ApplyArgs) -> CmdResult {
    let format = output_format(&a.output)?;
    let lut = load_lut(&a.lut, a.scales)?;
    let img = load_image(&a.input)?;
    let out = apply_to_image(&lut, &img, a.interp, true);
    write_file(&a.output, write_image(&out, format)?)?;
    println!("wrote {} ({}x{})", a.output.display(), out.width(), out.height());
    if let Some(reference) = a.reference {
        let reference = load_image(&reference)?;
        // Compare what was written, not the unquantized result.
        let written = load_image(&a.output)?;
        println!("psnr: {}", g6(psnr(&written, &reference)?.value()));
    }
    Ok(())
}

fn report_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".report.json");
    PathBuf::from(name)
}

pub fn fit(a: FitArgs) -> CmdResult {
    let weights: [f64; 5] = a
        .weights
        .as_slice()
        .try_into()
        .map_err(|_| CmdError::usage("--weights takes exactly five values"))?;
    let config = FitConfig {
        steps: a.steps,
        base_lr: a.lr,
        weights: LossWeights::from_array(weights),
        rank: a.rank,
        bases: a.bases,
        grid: a.grid,
        seed: a.seed,
        ..FitConfig::default()
    };
    config.validate()?;
    let input = load_image(&a.input)?;
    let target = load_image(&a.target)?;
    if input.dims() != target.dims() {
        return Err(CmdError::runtime(format!(
            "input is {}x{} but target is {}x{}",
            input.width(),
            input.height(),
            target.width(),
            target.height()
        )));
    }
    let (model, report) = fit_image_pair(&input, &target, &config)?;
    write_file(&a.output, write_model(&model, Some(&report))?)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CmdError::runtime(e.to_string()))?;
    let sidecar = report_path(&a.output);
    write_file(&sidecar, json + "\n")?;
    let m = &report.final_metrics;
    println!("steps: {}", report.steps);
    println!("loss: {}", g6(m.loss));
    println!("psnr: {}", g6(m.psnr.value()));
    match m.ssim {
        Some(s) => println!("ssim: {}", g6(s)),
        None => println!("ssim: n/a"),
    }
    println!("delta_e00: {}", g6(m.mean_delta_e00));
    println!("wrote {} and {}", a.output.display(), sidecar.display());
    Ok(())
}

pub fn compress(a: CompressArgs) -> CmdResult {
    if a.rank == 0 {
        return Err(CmdError::usage("--rank must be at least 1"));
    }
    let dense = read_cube(&read_text(&a.cube)?).map_err(|e| CmdError::runtime(format!("{}: {e}", a.cube.display())))?;
    let g = dense.size();
    let residual = dense.sub(&identity_lut(g)?)?;
    let result = cp_als_compress(&residual, a.rank, a.iters, a.tol)?;
    let model = LorLutModel::new(g, Vec::new(), Vec::new(), result.factors)?;
    write_file(&a.output, write_model(&model, None)?)?;
    let low = residual_param_count(g as u64, a.rank as u64);
    let full = dense_param_count(g as u64);
    println!("grid: {g}");
    println!("rank: {}", a.rank);
    println!("sweeps: {}", result.sweeps);
    println!("relative_error: {}", g6(result.relative_error));
    if result.ill_conditioned {
        println!("warning: normal equations were ill-conditioned; the rank may exceed the data");
    }
    println!("parameters: {low} vs {full} ({}x fewer)", g6(full as f64 / low as f64));
    println!("wrote {}", a.output.display());
    Ok(())
}

fn parse_resolution(s: &str) -> Result<(usize, usize), CmdError> {
    let bad = || CmdError::usage(format!("resolution must look like 1920x1080, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

struct Timing {
    mean_ms: f64,
    std_ms: f64,
}

fn time_repeated(repeat: usize, mut f: impl FnMut()) -> Timing {
    f();
    let samples: Vec<f64> = (0..repeat)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Timing {
        mean_ms: mean,
        std_ms: var.sqrt(),
    }
}

fn noise_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |_, _| RgbColor::new(rng.random(), rng.random(), rng.random()))
}

fn random_factors(grid: usize, rank: usize, rng: &mut ChaCha8Rng) -> Result<CpFactors, CmdError> {
    let mut curve = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let comps = (0..rank)
        .map(|_| {
            let c = curve(3);
            RankComponent {
                u: curve(grid),
                v: curve(grid),
                w: curve(grid),
                c: [c[0] * 0.01, c[1] * 0.01, c[2] * 0.01],
            }
        })
        .collect();
    Ok(CpFactors::new(grid, comps)?)
}

pub fn bench(a: BenchArgs) -> CmdResult {
    let (w, h) = parse_resolution(&a.resolution)?;
    if a.repeat == 0 {
        return Err(CmdError::usage("--repeat must be at least 1"));
    }
    if a.grid < 2 {
        return Err(CmdError::usage("--grid must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let factors = random_factors(a.grid, a.rank, &mut rng)?;
    let scales = ComponentScales::ones(a.rank);
    let t = time_repeated(a.repeat, || {
        std::hint::black_box(reconstruct_residual(&factors, &scales).expect("valid factors"));
    });
    println!(
        "reconstruct grid={} rank={}: mean {} ms, std {} ms",
        a.grid,
        a.rank,
        g6(t.mean_ms),
        g6(t.std_ms)
    );

    let model = LorLutModel::new(a.grid, Vec::new(), Vec::new(), factors)?;
    let lut = compose_lut(&model, &scales)?;
    let small = noise_image(w, h, &mut rng);
    let large = noise_image(w, 2 * h, &mut rng);
    let checksum: f64 = small
        .pixels()
        .iter()
        .chain(large.pixels())
        .map(|p| p.r + p.g + p.b)
        .sum();
    let interp = match a.interp {
        InterpKind::Trilinear => "trilinear",
        InterpKind::Tetrahedral => "tetrahedral",
    };
    let mut means = Vec::new();
    for img in [&small, &large] {
        let t = time_repeated(a.repeat, || {
            std::hint::black_box(apply_to_image(&lut, img, a.interp, true));
        });
        let mp = (img.width() * img.height()) as f64 / 1e6;
        println!(
            "apply {}x{} {interp}: mean {} ms, std {} ms, {} MP/s",
            img.width(),
            img.height(),
            g6(t.mean_ms),
            g6(t.std_ms),
            g6(mp / (t.mean_ms / 1e3))
        );
        means.push(t.mean_ms);
    }
    println!("ratio: {}", g6(means[1] / means[0]));
    println!("checksum: {}", g6(checksum));
    Ok(())
}

pub fn export_cube(a: ExportArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let scales = scales_for(&model, a.scales)?;
    let lut = compose_lut(&model, &scales)?;
    write_file(&a.output, write_cube(&lut, &a.title))?;
    println!("wrote {} (grid {})", a.output.display(), lut.size());
    Ok(())
}

pub fn inspect(a: InspectArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let g = model.grid_size as u64;
    println!("grid: {}", model.grid_size);
    println!("bases: {}", model.basis_count());
    println!("rank: {}", model.rank());
    if !model.alphas.is_empty() {
        println!("alphas: {}", join(&model.alphas));
    }
    println!(
        "residual_params: {} (dense {})",
        residual_param_count(g, model.rank() as u64),
        dense_param_count(g)
    );
    for r in 0..model.rank() {
        let c = component_curves(&model.factors, r)?;
        println!("component {r}");
        println!("  magnitude: {}", g6(c.magnitude));
        println!("  c: {}", join(&c.c));
        println!("  u: {}", join(&c.u));
        println!("  v: {}", join(&c.v));
        println!("  w: {}", join(&c.w));
    }
    Ok(())
}

pub fn serve(a: ServeArgs) -> CmdResult {
    let ip: IpAddr = a
        .host
        .parse()
        .map_err(|_| CmdError::usage(format!("--host must be an IP address, got `{}`", a.host)))?;
    if a.max_sessions == 0 {
        return Err(CmdError::usage("--max-sessions must be at least 1"));
    }
    let model = a.model.as_deref().map(load_model).transpose()?;
    let config = ServiceConfig {
        max_sessions: a.max_sessions,
        session_ttl: Duration::from_secs(a.ttl_secs),
        max_fit_steps: a.max_fit_steps,
        cors_origin: a.cors_origin,
        ..ServiceConfig::default()
    };
    let state = AppState::new(config, model)?;
    let (grid, rank) = (state.default_model().grid_size, state.default_model().rank());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CmdError::runtime(e.to_string()))?;
    runtime.block_on(async move {
        let (listener, addr) = lorlut_service::bind(SocketAddr::new(ip, a.port))
            .await
            .map_err(|e| CmdError::runtime(format!("cannot bind {ip}:{}: {e}", a.port)))?;
        println!("listening on http://{addr} (grid {grid}, rank {rank})");
        tokio::select! {
            r = lorlut_service::serve(listener, state) => r.map_err(|e| CmdError::runtime(e.to_string())),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
