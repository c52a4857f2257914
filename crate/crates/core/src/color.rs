//! Color types, sRGB → CIELAB conversion and the CIEDE2000 difference.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

/// A normalized RGB triple. Components are nominally in `[0, 1]` but may
/// leave that range before clamping (e.g. after residual addition).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RgbColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl RgbColor {
    pub const ZERO: RgbColor = RgbColor::new(0.0, 0.0, 0.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        Self { r: v, g: v, b: v }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn clamp01(self) -> Self {
        Self::new(
            self.r.clamp(0.0, 1.0),
            self.g.clamp(0.0, 1.0),
            self.b.clamp(0.0, 1.0),
        )
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    pub fn max_abs_diff(self, other: RgbColor) -> f64 {
        (self.r - other.r)
            .abs()
            .max((self.g - other.g).abs())
            .max((self.b - other.b).abs())
    }
}

impl Index<usize> for RgbColor {
    type Output = f64;

    fn index(&self, ch: usize) -> &f64 {
        match ch {
            0 => &self.r,
            1 => &self.g,
            2 => &self.b,
            _ => panic!("channel index {ch} out of range"),
        }
    }
}

impl IndexMut<usize> for RgbColor {
    fn index_mut(&mut self, ch: usize) -> &mut f64 {
        match ch {
            0 => &mut self.r,
            1 => &mut self.g,
            2 => &mut self.b,
            _ => panic!("channel index {ch} out of range"),
        }
    }
}

impl Add for RgbColor {
    type Output = RgbColor;

    fn add(self, o: RgbColor) -> RgbColor {
        RgbColor::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl AddAssign for RgbColor {
    fn add_assign(&mut self, o: RgbColor) {
        self.r += o.r;
        self.g += o.g;
        self.b += o.b;
    }
}

impl Sub for RgbColor {
    type Output = RgbColor;

    fn sub(self, o: RgbColor) -> RgbColor {
        RgbColor::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

impl Mul<f64> for RgbColor {
    type Output = RgbColor;

    fn mul(self, s: f64) -> RgbColor {
        RgbColor::new(self.r * s, self.g * s, self.b * s)
    }
}

/// CIELAB color (D65, 2° observer).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

// IEC 61966-2-1 linear sRGB -> XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124, 0.3576, 0.1805],
    [0.2126, 0.7152, 0.0722],
    [0.0193, 0.1192, 0.9505],
];

// Reference white is the image of linear (1,1,1), so white maps to a = b = 0.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts an sRGB color to CIELAB. Inputs are clamped to `[0, 1]` first.
pub fn srgb_to_lab(c: RgbColor) -> LabColor {
    let c = c.clamp01();
    let lin = [srgb_to_linear(c.r), srgb_to_linear(c.g), srgb_to_linear(c.b)];
    let mut f = [0.0; 3];
    for (row, out) in f.iter_mut().enumerate() {
        let m = &RGB_TO_XYZ[row];
        let xyz = m[0] * lin[0] + m[1] * lin[1] + m[2] * lin[2];
        *out = lab_f(xyz / WHITE[row]);
    }
    LabColor::new(116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2]))
}

fn hue_degrees(b: f64, a: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        return 0.0;
    }
    let h = b.atan2(a).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// CIEDE2000 color difference with unit weighting factors (kL = kC = kH = 1).
pub fn delta_e00(x: LabColor, y: LabColor) -> f64 {
    const POW25_7: f64 = 6_103_515_625.0; // 25^7

    let c1 = x.a.hypot(x.b);
    let c2 = y.a.hypot(y.b);
    let c_bar = 0.5 * (c1 + c2);
    let c_bar7 = c_bar.powi(7);
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + POW25_7)).sqrt());

    let a1p = (1.0 + g) * x.a;
    let a2p = (1.0 + g) * y.a;
    let c1p = a1p.hypot(x.b);
    let c2p = a2p.hypot(y.b);
    let h1p = hue_degrees(x.b, a1p);
    let h2p = hue_degrees(y.b, a2p);

    let dl = y.l - x.l;
    let dc = c2p - c1p;
    let chroma_product = c1p * c2p;
    let dh_angle = if chroma_product == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d > 180.0 {
            d - 360.0
        } else if d < -180.0 {
            d + 360.0
        } else {
            d
        }
    };
    let dh = 2.0 * chroma_product.sqrt() * (dh_angle.to_radians() * 0.5).sin();

    let l_bar = 0.5 * (x.l + y.l);
    let c_bar_p = 0.5 * (c1p + c2p);
    let h_bar = if chroma_product == 0.0 {
        h1p + h2p
    } else if (h1p - h2p).abs() <= 180.0 {
        0.5 * (h1p + h2p)
    } else if h1p + h2p < 360.0 {
        0.5 * (h1p + h2p + 360.0)
    } else {
        0.5 * (h1p + h2p - 360.0)
    };

    let t = 1.0 - 0.17 * (h_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar).to_radians().cos()
        + 0.32 * (3.0 * h_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar - 63.0).to_radians().cos();
    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let c_bar_p7 = c_bar_p.powi(7);
    let r_c = 2.0 * (c_bar_p7 / (c_bar_p7 + POW25_7)).sqrt();
    let l50 = (l_bar - 50.0).powi(2);
    let s_l = 1.0 + 0.015 * l50 / (20.0 + l50).sqrt();
    let s_c = 1.0 + 0.045 * c_bar_p;
    let s_h = 1.0 + 0.015 * c_bar_p * t;
    let r_t = -(2.0 * d_theta).to_radians().sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab(RgbColor::splat(1.0));
        assert!((w.l - 100.0).abs() < 1e-9);
        assert!(w.a.abs() < 1e-3 && w.b.abs() < 1e-3);
        let k = srgb_to_lab(RgbColor::ZERO);
        assert!(k.l.abs() < 1e-12 && k.a.abs() < 1e-12 && k.b.abs() < 1e-12);
    }

    #[test]
    fn pure_red_matches_reference() {
        // Reference conversion (scikit-image rgb2lab): 53.2406, 80.0923, 67.2028.
        let lab = srgb_to_lab(RgbColor::new(1.0, 0.0, 0.0));
        assert!((lab.l - 53.24).abs() < 0.05, "{lab:?}");
        assert!((lab.a - 80.09).abs() < 0.05, "{lab:?}");
        assert!((lab.b - 67.20).abs() < 0.05, "{lab:?}");
    }

    #[test]
    fn out_of_range_inputs_clamp() {
        assert_eq!(
            srgb_to_lab(RgbColor::new(1.5, -0.2, 0.3)),
            srgb_to_lab(RgbColor::new(1.0, 0.0, 0.3))
        );
    }

    #[test]
    fn gray_lightness_is_monotone() {
        let mut prev = -1.0;
        for i in 0..=255 {
            let l = srgb_to_lab(RgbColor::splat(i as f64 / 255.0)).l;
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn first_verification_pair() {
        let d = delta_e00(
            LabColor::new(50.0, 2.6772, -79.7751),
            LabColor::new(50.0, 0.0, -82.7485),
        );
        assert!((d - 2.0425).abs() < 1e-4, "{d}");
    }

    #[test]
    fn identical_is_zero() {
        let c = LabColor::new(42.0, -13.0, 7.5);
        assert_eq!(delta_e00(c, c), 0.0);
    }
}
