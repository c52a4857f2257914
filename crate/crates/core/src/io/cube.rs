//! `.cube` 3D LUT text format.
//!
//! ```text
//! TITLE "name"
//! LUT_3D_SIZE 33
//! DOMAIN_MIN 0 0 0
//! DOMAIN_MAX 1 1 1
//! 0.000000 0.000000 0.000000
//! ...
//! ```
//!
//! Data lines are in red-fastest order, which is also the in-memory order
//! of [`Lut3D`], so export is a straight serialization.

use std::fmt::Write as _;

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::lut::Lut3D;

/// Serializes a LUT with six fractional digits, clamping entries to `[0, 1]`.
pub fn write_cube(lut: &Lut3D, title: &str) -> String {
    let mut out = String::with_capacity(lut.len() * 27 + 128);
    let title = title.replace('"', "'");
    let _ = writeln!(out, "TITLE \"{title}\"");
    let _ = writeln!(out, "LUT_3D_SIZE {}", lut.size());
    out.push_str("DOMAIN_MIN 0 0 0\n");
    out.push_str("DOMAIN_MAX 1 1 1\n");
    for e in lut.entries() {
        // `+ 0.0` folds a negative zero into positive zero.
        let e = e.clamp01();
        let _ = writeln!(out, "{:.6} {:.6} {:.6}", e.r + 0.0, e.g + 0.0, e.b + 0.0);
    }
    out
}

fn parse_triple(parts: &[&str], line: usize) -> Result<[f64; 3]> {
    if parts.len() != 3 {
        return Err(LutError::Parse {
            line,
            msg: format!("expected 3 values, found {}", parts.len()),
        });
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.parse::<f64>().map_err(|_| LutError::Parse {
            line,
            msg: format!("non-numeric value `{p}`"),
        })?;
        if !slot.is_finite() {
            return Err(LutError::Parse {
                line,
                msg: format!("non-finite value `{p}`"),
            });
        }
    }
    Ok(v)
}

/// Parses a `.cube` document. A non-default domain rescales entries into `[0, 1]`.
pub fn read_cube(text: &str) -> Result<Lut3D> {
    let mut size: Option<usize> = None;
    let mut dmin = [0.0; 3];
    let mut dmax = [1.0; 3];
    let mut data: Vec<[f64; 3]> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "TITLE" => {}
            "LUT_3D_SIZE" => {
                let g = parts
                    .get(1)
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or(LutError::Parse {
                        line: line_no,
                        msg: "invalid LUT_3D_SIZE".into(),
                    })?;
                if g < 2 {
                    return Err(LutError::GridTooSmall(g));
                }
                size = Some(g);
            }
            "LUT_1D_SIZE" | "LUT_1D_INPUT_RANGE" => return Err(LutError::Unsupported1D),
            "DOMAIN_MIN" => dmin = parse_triple(&parts[1..], line_no)?,
            "DOMAIN_MAX" => dmax = parse_triple(&parts[1..], line_no)?,
            "LUT_3D_INPUT_RANGE" => {
                let lo_hi = parse_pair(&parts[1..], line_no)?;
                dmin = [lo_hi[0]; 3];
                dmax = [lo_hi[1]; 3];
            }
            kw if kw.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) => {
                return Err(LutError::Parse {
                    line: line_no,
                    msg: format!("unknown keyword `{kw}`"),
                });
            }
            _ => data.push(parse_triple(&parts, line_no)?),
        }
    }

    let g = size.ok_or(LutError::MissingSize)?;
    let expected = g * g * g;
    if data.len() != expected {
        return Err(LutError::WrongLineCount {
            expected,
            found: data.len(),
        });
    }
    for ch in 0..3 {
        if dmax[ch] <= dmin[ch] {
            return Err(LutError::Parse {
                line: 0,
                msg: "DOMAIN_MAX must exceed DOMAIN_MIN".into(),
            });
        }
    }
    let default_domain = dmin == [0.0; 3] && dmax == [1.0; 3];
    let entries = data
        .into_iter()
        .map(|v| {
            if default_domain {
                RgbColor::from_array(v)
            } else {
                RgbColor::new(
                    (v[0] - dmin[0]) / (dmax[0] - dmin[0]),
                    (v[1] - dmin[1]) / (dmax[1] - dmin[1]),
                    (v[2] - dmin[2]) / (dmax[2] - dmin[2]),
                )
            }
        })
        .collect();
    Lut3D::new(g, entries)
}

fn parse_pair(parts: &[&str], line: usize) -> Result<[f64; 2]> {
    if parts.len() != 2 {
        return Err(LutError::Parse {
            line,
            msg: "expected 2 values".into(),
        });
    }
    let p = |s: &str| {
        s.parse::<f64>().map_err(|_| LutError::Parse {
            line,
            msg: format!("non-numeric value `{s}`"),
        })
    };
    Ok([p(parts[0])?, p(parts[1])?])
}
