//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use base64::Engine as _;
use common::*;
use lorlut_core::io::{read_cube, read_model, write_cube, write_image, write_model, ImageFormat};
use lorlut_core::optim::grad::{flatten_params, unflatten_params};
use lorlut_core::optim::{cp_als_compress, fit_image_pair, loss_and_gradients, tv_loss, FitConfig, LossWeights};
use lorlut_core::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn random_lut(rng: &mut ChaCha8Rng, g: usize) -> Lut3D {
    Lut3D::from_fn(g, |_, _, _| {
        RgbColor::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))
    })
    .unwrap()
}

fn random_factors(rng: &mut ChaCha8Rng, g: usize, r: usize) -> CpFactors {
    let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let comps = (0..r)
        .map(|_| {
            let (u, v, w, c) = (vec(g), vec(g), vec(g), vec(3));
            lorlut_core::lowrank::RankComponent { u, v, w, c: [c[0], c[1], c[2]] }
        })
        .collect();
    CpFactors::new(g, comps).unwrap()
}

fn c1_param_counts() -> Outcome {
    // (K, R, figure as printed in millions)
    let printed = [(0, 4, "0.024"), (0, 8, "0.037"), (0, 32, "0.118"), (8, 32, "0.98"), (8, 0, "0.87")];
    for k in 0..=8u64 {
        for r in 0..=64u64 {
            let got = total_param_count(33, k, r).total;
            check!(got == 10_176 + 3_366 * r + 107_844 * k, "K={k} R={r}: {got}");
        }
    }
    let mut shown = Vec::new();
    for (k, r, want) in printed {
        let total = total_param_count(33, k, r).total;
        let decimals = want.split('.').nth(1).unwrap().len();
        let got = format!("{:.*}", decimals, total as f64 / 1e6);
        check!(got == want, "K={k} R={r}: {total} -> {got}M, expected {want}M");
        shown.push(format!("{got}M"));
    }
    Ok(shown.join(" "))
}

fn c2_residual_counts() -> Outcome {
    let (low, dense) = (residual_param_count(33, 8), lorlut_core::lowrank::dense_param_count(33));
    check!(low == 816 && dense == 107_811, "{low} vs {dense}");
    Ok(format!("{low} vs {dense}"))
}

fn eight_term(lut: &Lut3D, c: RgbColor) -> RgbColor {
    let g = lut.size();
    let cell = |x: f64| {
        let p = x.clamp(0.0, 1.0) * (g - 1) as f64;
        let i = (p.floor() as usize).min(g - 2);
        (i, p - i as f64)
    };
    let ((i, dr), (j, dg), (k, db)) = (cell(c.r), cell(c.g), cell(c.b));
    let mut out = RgbColor::ZERO;
    for (a, wa) in [(0, 1.0 - dr), (1, dr)] {
        for (b, wb) in [(0, 1.0 - dg), (1, dg)] {
            for (d, wd) in [(0, 1.0 - db), (1, db)] {
                out += lut.entry(i + a, j + b, k + d) * (wa * wb * wd);
            }
        }
    }
    out
}

fn c3_trilinear_oracle() -> Outcome {
    let mut rng = rng(301);
    let mut worst: f64 = 0.0;
    for g in [2, 3, 5, 9] {
        let lut = random_lut(&mut rng, g);
        for _ in 0..1000 {
            let c = RgbColor::new(rng.random(), rng.random(), rng.random());
            worst = worst.max(sample_trilinear(&lut, c).max_abs_diff(eight_term(&lut, c)));
        }
    }
    check!(worst <= 1e-12, "max error {worst:e}");
    Ok(format!("max error {worst:e}"))
}

fn c4_identity() -> Outcome {
    let img = random_image(&mut rng(401), 256, 256);
    let out = apply_to_image(&identity_lut(33).unwrap(), &img, InterpKind::Trilinear, false);
    let err = out.max_abs_diff(&img).unwrap();
    check!(err <= 1e-7, "max error {err:e}");
    Ok(format!("max error {err:e}"))
}

fn c5_cp_oracle() -> Outcome {
    let mut rng = rng(501);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let g = rng.random_range(2..=6);
        let r = rng.random_range(1..=4);
        let f = random_factors(&mut rng, g, r);
        let s: Vec<f64> = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = reconstruct_residual(&f, &ComponentScales::new(s.clone()).unwrap()).unwrap();
        for k in 0..g {
            for j in 0..g {
                for i in 0..g {
                    let mut want = [0.0; 3];
                    for (q, comp) in f.components().iter().enumerate() {
                        for (ch, w) in want.iter_mut().enumerate() {
                            *w += s[q] * comp.c[ch] * comp.u[i] * comp.v[j] * comp.w[k];
                        }
                    }
                    worst = worst.max(got.entry(i, j, k).max_abs_diff(RgbColor::from_array(want)));
                }
            }
        }
    }
    check!(worst <= 1e-12, "max error {worst:e}");
    Ok(format!("max error {worst:e}"))
}

fn c6_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = rng(601);
    let w = LossWeights::from_array([1.0, 0.0, 0.0, 0.001, 0.001]);
    let (mut compared, mut worst): (usize, f64) = (0, 0.0);
    for _ in 0..20 {
        let g = rng.random_range(2..=5);
        let k = rng.random_range(0..=2);
        let r = rng.random_range(0..=3);
        let bases: Vec<Lut3D> = (0..k).map(|_| random_lut(&mut rng, g)).collect();
        let alphas = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = LorLutModel::new(g, bases, alphas, random_factors(&mut rng, g, r)).unwrap();
        let input = random_image(&mut rng, 8, 8);
        let target = random_image(&mut rng, 8, 8);
        let analytic = loss_and_gradients(&input, &target, &model, &w).unwrap().1.flatten();
        let base = flatten_params(&model);
        let mut probe = model.clone();
        let mut eval = |x: &[f64]| {
            unflatten_params(&mut probe, x).unwrap();
            loss_and_gradients(&input, &target, &probe, &w).unwrap().0.total
        };
        for p in 0..base.len() {
            let mut x = base.clone();
            x[p] += H;
            let hi = eval(&x);
            x[p] -= 2.0 * H;
            let lo = eval(&x);
            let fd = (hi - lo) / (2.0 * H);
            if fd.abs() > 1e-8 {
                let rel = (analytic[p] - fd).abs() / fd.abs().max(analytic[p].abs());
                worst = worst.max(rel);
                compared += 1;
            }
        }
    }
    check!(worst < 1e-4, "worst relative error {worst:e}");
    Ok(format!("{compared} entries, worst relative error {worst:e}"))
}

fn c7_tv_closed_form() -> Outcome {
    let tv = tv_loss(&identity_lut(33).unwrap());
    check!((tv - 102.09375).abs() <= 1e-9, "{tv}");
    Ok(format!("{tv}"))
}

fn c8_als_recovery() -> Outcome {
    let mut rng = rng(801);
    let mut shown = Vec::new();
    for r in [1, 4, 8] {
        let f = random_factors(&mut rng, 17, r);
        let x = reconstruct_residual(&f, &ComponentScales::ones(r)).unwrap();
        let res = cp_als_compress(&x, r, 200, 1e-14).unwrap();
        check!(res.relative_error < 1e-6, "R={r}: {:e}", res.relative_error);
        check!(
            res.error_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "R={r}: error increased"
        );
        shown.push(format!("R={r} {:.1e} in {} sweeps", res.relative_error, res.sweeps));
    }
    Ok(shown.join(", "))
}

/// Per-channel gamma `(0.8, 1.0, 1.2)` followed by a mild channel mix.
fn graded(p: RgbColor) -> RgbColor {
    let g = RgbColor::new(p.r.powf(0.8), p.g, p.b.powf(1.2));
    let m = 0.05;
    RgbColor::new(
        (1.0 - m) * g.r + m * g.g,
        m * g.r + (1.0 - 2.0 * m) * g.g + m * g.b,
        m * g.g + (1.0 - m) * g.b,
    )
}

fn c9_end_to_end_fit() -> Outcome {
    let mut rng = rng(901);
    let train = random_image(&mut rng, 64, 64);
    let held = random_image(&mut rng, 64, 64);
    let cfg = FitConfig {
        rank: 8,
        bases: 0,
        grid: 33,
        steps: 2000,
        seed: 9,
        weights: LossWeights::from_array([1.0, 0.0, 0.0, 0.0, 0.0]),
        ..FitConfig::default()
    };
    let (model, _) = fit_image_pair(&train, &train.map(graded), &cfg).unwrap();
    let lut = compose_lut(&model, &ComponentScales::ones(8)).unwrap();
    let out = apply_to_image(&lut, &held, InterpKind::Trilinear, true);
    let score = psnr(&out, &held.map(graded)).unwrap().value();
    check!(score >= 35.0, "held-out PSNR {score:.2} dB");
    Ok(format!("held-out PSNR {score:.2} dB"))
}

const CIEDE2000_PAIRS: [([f64; 3], [f64; 3], f64); 34] = [
    ([50.0, 2.6772, -79.7751], [50.0, 0.0, -82.7485], 2.0425),
    ([50.0, 3.1571, -77.2803], [50.0, 0.0, -82.7485], 2.8615),
    ([50.0, 2.8361, -74.0200], [50.0, 0.0, -82.7485], 3.4412),
    ([50.0, -1.3802, -84.2814], [50.0, 0.0, -82.7485], 1.0000),
    ([50.0, -1.1848, -84.8006], [50.0, 0.0, -82.7485], 1.0000),
    ([50.0, -0.9009, -85.5211], [50.0, 0.0, -82.7485], 1.0000),
    ([50.0, 0.0, 0.0], [50.0, -1.0, 2.0], 2.3669),
    ([50.0, -1.0, 2.0], [50.0, 0.0, 0.0], 2.3669),
    ([50.0, 2.4900, -0.0010], [50.0, -2.4900, 0.0009], 7.1792),
    ([50.0, 2.4900, -0.0010], [50.0, -2.4900, 0.0010], 7.1792),
    ([50.0, 2.4900, -0.0010], [50.0, -2.4900, 0.0011], 7.2195),
    ([50.0, 2.4900, -0.0010], [50.0, -2.4900, 0.0012], 7.2195),
    ([50.0, -0.0010, 2.4900], [50.0, 0.0009, -2.4900], 4.8045),
    ([50.0, -0.0010, 2.4900], [50.0, 0.0010, -2.4900], 4.8045),
    ([50.0, -0.0010, 2.4900], [50.0, 0.0011, -2.4900], 4.7461),
    ([50.0, 2.5, 0.0], [50.0, 0.0, -2.5], 4.3065),
    ([50.0, 2.5, 0.0], [73.0, 25.0, -18.0], 27.1492),
    ([50.0, 2.5, 0.0], [61.0, -5.0, 29.0], 22.8977),
    ([50.0, 2.5, 0.0], [56.0, -27.0, -3.0], 31.9030),
    ([50.0, 2.5, 0.0], [58.0, 24.0, 15.0], 19.4535),
    ([50.0, 2.5, 0.0], [50.0, 3.1736, 0.5854], 1.0000),
    ([50.0, 2.5, 0.0], [50.0, 3.2972, 0.0], 1.0000),
    ([50.0, 2.5, 0.0], [50.0, 1.8634, 0.5757], 1.0000),
    ([50.0, 2.5, 0.0], [50.0, 3.2592, 0.3350], 1.0000),
    ([60.2574, -34.0099, 36.2677], [60.4626, -34.1751, 39.4387], 1.2644),
    ([63.0109, -31.0961, -5.8663], [62.8187, -29.7946, -4.0864], 1.2630),
    ([61.2901, 3.7196, -5.3901], [61.4292, 2.2480, -4.9620], 1.8731),
    ([35.0831, -44.1164, 3.7933], [35.0232, -40.0716, 1.5901], 1.8645),
    ([22.7233, 20.0904, -46.6940], [23.0331, 14.9730, -42.5619], 2.0373),
    ([36.4612, 47.8580, 18.3852], [36.2715, 50.5065, 21.2231], 1.4146),
    ([90.8027, -2.0831, 1.4410], [91.1528, -1.6435, 0.0447], 1.4441),
    ([90.9257, -0.5406, -0.9208], [88.6381, -0.8985, -0.7239], 1.5381),
    ([6.7747, -0.2908, -2.4247], [5.8714, -0.0985, -2.2286], 0.6377),
    ([2.0776, 0.0795, -1.1350], [0.9033, -0.0636, -0.5514], 0.9082),
];

fn c10_ciede2000() -> Outcome {
    let lab = |v: [f64; 3]| LabColor::new(v[0], v[1], v[2]);
    let mut worst: f64 = 0.0;
    for (a, b, want) in CIEDE2000_PAIRS {
        worst = worst.max((delta_e00(lab(a), lab(b)) - want).abs());
    }
    check!(worst < 1e-4, "max deviation {worst:e}");
    Ok(format!("{} pairs, max deviation {worst:.1e}", CIEDE2000_PAIRS.len()))
}

fn c11_format_stability() -> Outcome {
    let mut rng = rng(1101);
    let lut = random_lut(&mut rng, 17);
    let once = write_cube(&lut, "stability");
    let twice = write_cube(&read_cube(&once).unwrap(), "stability");
    check!(once == twice, "cube write/read/write differs");

    let bases: Vec<Lut3D> = (0..2).map(|_| random_lut(&mut rng, 9)).collect();
    let model = LorLutModel::new(9, bases, vec![0.3, -0.7], random_factors(&mut rng, 9, 5)).unwrap();
    let text = write_model(&model, None).unwrap();
    let back = read_model(&text).unwrap();
    check!(back == model, "model load is not bit-exact");
    check!(write_model(&back, None).unwrap() == text, "model rewrite differs");

    let dir = tempfile::tempdir().unwrap();
    let grade = bump_model(&mut rng, 17, 4, 0.08);
    let model_path = save_text(dir.path(), "grade.lorlut", &write_model(&grade, None).unwrap());
    let src = random_image(&mut rng, 96, 64);
    let png = write_image(&src, ImageFormat::Png).unwrap();
    let img_path = save_png(dir.path(), "src.png", &src);
    let out = dir.path().join("cli.png");
    let scales = [0.5, -1.25, 2.0, 0.0];
    let arg = scales.map(|s| s.to_string()).join(",");
    ok(run(&[&"apply", &model_path, &img_path, &out, &"--scales", &arg]));
    let cli_png = std::fs::read(&out).unwrap();

    let server = Server::start(&[]);
    let body = serde_json::json!({
        "image": base64::engine::general_purpose::STANDARD.encode(&png),
        "model": write_model(&grade, None).unwrap(),
    });
    let (status, reply) = server.request("POST", "/v1/sessions", Some(&body.to_string()));
    check!(status == 201, "create session: {status}");
    let id = serde_json::from_slice::<serde_json::Value>(&reply).unwrap()["id"].as_str().unwrap().to_string();
    let put = serde_json::json!({ "scales": scales }).to_string();
    let (status, _) = server.request("PUT", &format!("/v1/sessions/{id}/scales"), Some(&put));
    check!(status == 200, "set scales: {status}");
    let (status, preview) = server.request("GET", &format!("/v1/sessions/{id}/preview"), None);
    check!(status == 200, "preview: {status}");
    check!(preview == cli_png, "CLI apply and service preview differ");
    Ok(format!("cube idempotent, model bit-exact, preview == CLI ({} bytes)", cli_png.len()))
}

fn mean_ms(out: &str, prefix: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(prefix)).unwrap_or_else(|| panic!("no `{prefix}` line"));
    let after = line.split("mean ").nth(1).unwrap();
    after.split_whitespace().next().unwrap().parse().unwrap()
}

fn c12_throughput() -> Outcome {
    let out = ok(bin()
        .args(["--threads", "1", "bench", "--resolution", "1920x1080", "--grid", "33", "--rank", "32", "--repeat", "10"])
        .output()
        .unwrap());
    let recon = mean_ms(&out, "reconstruct grid=33 rank=32");
    let one = mean_ms(&out, "apply 1920x1080");
    let two = mean_ms(&out, "apply 1920x2160");
    let ratio = two / one;
    check!((1.6..=2.6).contains(&ratio), "doubling ratio {ratio:.3}");
    check!(one < 1000.0, "1080p apply {one} ms");
    Ok(format!("reconstruct {recon:.3} ms, 1080p {one:.1} ms single-threaded, ratio {ratio:.3}"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("parameter counts", c1_param_counts),
        ("residual compactness", c2_residual_counts),
        ("trilinear oracle", c3_trilinear_oracle),
        ("identity preservation", c4_identity),
        ("CP reconstruction oracle", c5_cp_oracle),
        ("gradient check", c6_gradients),
        ("TV closed form", c7_tv_closed_form),
        ("CP-ALS recovery", c8_als_recovery),
        ("end-to-end fit", c9_end_to_end_fit),
        ("CIEDE2000 reference pairs", c10_ciede2000),
        ("format stability", c11_format_stability),
        ("throughput", c12_throughput),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let n = n + 1;
        if !filter.is_empty() && !filter.iter().any(|s| s == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n}: {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
