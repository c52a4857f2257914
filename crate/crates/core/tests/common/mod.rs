#![allow(dead_code)]

use lorlut_core::{CpFactors, ImageBuffer, LorLutModel, Lut3D, RgbColor};
use lorlut_core::lowrank::RankComponent;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_color(rng: &mut ChaCha8Rng) -> RgbColor {
    RgbColor::new(rng.random(), rng.random(), rng.random())
}

pub fn random_lut(rng: &mut ChaCha8Rng, size: usize) -> Lut3D {
    Lut3D::from_fn(size, |_, _, _| {
        RgbColor::new(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))
    })
    .unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |_, _| random_color(rng))
}

pub fn random_factors(rng: &mut ChaCha8Rng, size: usize, rank: usize) -> CpFactors {
    let mut vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let comps = (0..rank)
        .map(|_| {
            let (u, v, w, c) = (vec(size), vec(size), vec(size), vec(3));
            RankComponent { u, v, w, c: [c[0], c[1], c[2]] }
        })
        .collect();
    CpFactors::new(size, comps).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, size: usize, bases: usize, rank: usize) -> LorLutModel {
    let b: Vec<Lut3D> = (0..bases).map(|_| random_lut(rng, size)).collect();
    let alphas = (0..bases).map(|_| rng.random_range(-1.0..1.0)).collect();
    let factors = random_factors(rng, size, rank);
    LorLutModel::new(size, b, alphas, factors).unwrap()
}

/// Hash-pattern test image shared with the external metric oracle.
pub fn hash_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let v = |x: u64, y: u64, c: u64| ((x * 73856093 ^ y * 19349663 ^ c * 83492791 ^ seed * 2654435761) % 1000) as f64 / 999.0;
    ImageBuffer::from_fn(w, h, |x, y| {
        let (x, y) = (x as u64, y as u64);
        RgbColor::new(v(x, y, 0), v(x, y, 1), v(x, y, 2))
    })
}

/// Per-channel gamma `(0.8, 1.0, 1.2)` followed by a mild channel mix.
pub fn graded(p: RgbColor) -> RgbColor {
    let g = RgbColor::new(p.r.powf(0.8), p.g, p.b.powf(1.2));
    let m = 0.05;
    RgbColor::new(
        (1.0 - m) * g.r + m * g.g,
        m * g.r + (1.0 - 2.0 * m) * g.g + m * g.b,
        m * g.g + (1.0 - m) * g.b,
    )
}
