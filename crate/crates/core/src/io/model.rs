//! Versioned text format for [`LorLutModel`].
//!
//! ```text
//! lorlut-model v1
//! grid_size 5
//! basis_count 2
//! rank 1
//! alphas 0.5 0.5
//! basis 0
//! <G³ lines "r g b">
//! basis 1
//! ...
//! factor 0
//! u <G values>
//! v <G values>
//! w <G values>
//! c <3 values>
//! meta <key> <value>
//! end
//! ```
//!
//! With no bases a single `base identity` line replaces the basis blocks.
//! Numbers use Rust's shortest round-trip formatting, so reading back
//! yields bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::lowrank::{CpFactors, LorLutModel, RankComponent};
use crate::lut::Lut3D;
use crate::optim::FitReport;

pub const MODEL_HEADER: &str = "lorlut-model v1";

fn push_values(out: &mut String, key: &str, vals: &[f64]) {
    out.push_str(key);
    for v in vals {
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

/// Deterministic metadata lines derived from a fit report.
pub fn report_metadata(report: &FitReport) -> BTreeMap<String, String> {
    let m = &report.final_metrics;
    let mut meta = BTreeMap::new();
    meta.insert("fit.steps".to_string(), report.steps.to_string());
    meta.insert("fit.final_loss".to_string(), format!("{:?}", m.loss));
    meta.insert("fit.psnr".to_string(), m.psnr.to_string());
    if let Some(s) = m.ssim {
        meta.insert("fit.ssim".to_string(), format!("{s:?}"));
    }
    meta.insert("fit.mean_delta_e00".to_string(), format!("{:?}", m.mean_delta_e00));
    meta
}

pub fn write_model(model: &LorLutModel, report: Option<&FitReport>) -> Result<String> {
    let meta = report.map(report_metadata).unwrap_or_default();
    write_model_with_meta(model, &meta)
}

pub fn write_model_with_meta(model: &LorLutModel, meta: &BTreeMap<String, String>) -> Result<String> {
    model.validate()?;
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    let _ = writeln!(out, "grid_size {}", model.grid_size);
    let _ = writeln!(out, "basis_count {}", model.basis_count());
    let _ = writeln!(out, "rank {}", model.rank());
    push_values(&mut out, "alphas", &model.alphas);
    if model.bases.is_empty() {
        out.push_str("base identity\n");
    }
    for (k, b) in model.bases.iter().enumerate() {
        let _ = writeln!(out, "basis {k}");
        for e in b.entries() {
            let _ = writeln!(out, "{:?} {:?} {:?}", e.r, e.g, e.b);
        }
    }
    for (r, comp) in model.factors.components().iter().enumerate() {
        let _ = writeln!(out, "factor {r}");
        push_values(&mut out, "u", &comp.u);
        push_values(&mut out, "v", &comp.v);
        push_values(&mut out, "w", &comp.w);
        push_values(&mut out, "c", &comp.c);
    }
    for (k, v) in meta {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(LutError::InvalidConfig(format!("invalid metadata entry `{k}`")));
        }
        let _ = writeln!(out, "meta {k} {v}");
    }
    out.push_str("end\n");
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (n, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                return Ok((n + 1, l));
            }
        }
        Err(LutError::InconsistentShapes("unexpected end of model file".into()))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(LutError::InconsistentShapes(format!("line {n}: expected `{key}`, found `{l}`")));
        }
        Ok((n, parts.collect()))
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let (n, parts) = self.keyed(key)?;
        match parts.as_slice() {
            [v] => v.parse().map_err(|_| LutError::Parse {
                line: n,
                msg: format!("invalid `{key}` value"),
            }),
            _ => Err(LutError::Parse {
                line: n,
                msg: format!("`{key}` takes one value"),
            }),
        }
    }

    fn values(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let (n, parts) = self.keyed(key)?;
        if parts.len() != len {
            return Err(LutError::InconsistentShapes(format!(
                "line {n}: `{key}` has {} values, expected {len}",
                parts.len()
            )));
        }
        parse_floats(&parts, n)
    }
}

fn parse_floats(parts: &[&str], line: usize) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or(LutError::Parse {
                    line,
                    msg: format!("invalid number `{p}`"),
                })
        })
        .collect()
}

pub fn read_model(text: &str) -> Result<LorLutModel> {
    read_model_with_meta(text).map(|(m, _)| m)
}

pub fn read_model_with_meta(text: &str) -> Result<(LorLutModel, BTreeMap<String, String>)> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (_, header) = lines.next()?;
    if header != MODEL_HEADER {
        return Err(LutError::Version(header.to_string()));
    }
    let grid = lines.count("grid_size")?;
    if grid < 2 {
        return Err(LutError::GridTooSmall(grid));
    }
    let k = lines.count("basis_count")?;
    let rank = lines.count("rank")?;
    let alphas = lines.values("alphas", k)?;

    let mut bases = Vec::with_capacity(k);
    if k == 0 {
        let (n, parts) = lines.keyed("base")?;
        if parts != ["identity"] {
            return Err(LutError::Parse {
                line: n,
                msg: "expected `base identity`".into(),
            });
        }
    }
    for idx in 0..k {
        let (n, parts) = lines.keyed("basis")?;
        if parts != [idx.to_string().as_str()] {
            return Err(LutError::InconsistentShapes(format!("line {n}: expected basis {idx}")));
        }
        let mut entries = Vec::with_capacity(grid * grid * grid);
        for _ in 0..grid * grid * grid {
            let (n, l) = lines.next()?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 || parts[0].starts_with(char::is_alphabetic) {
                return Err(LutError::InconsistentShapes(format!(
                    "line {n}: basis {idx} has fewer than {} entries",
                    grid * grid * grid
                )));
            }
            let v = parse_floats(&parts, n)?;
            entries.push(RgbColor::new(v[0], v[1], v[2]));
        }
        bases.push(Lut3D::new(grid, entries)?);
    }

    let mut comps = Vec::with_capacity(rank);
    let mut meta = BTreeMap::new();
    loop {
        let (n, l) = lines.next()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("factor") => {
                let idx = comps.len();
                if parts.next() != Some(idx.to_string().as_str()) {
                    return Err(LutError::InconsistentShapes(format!("line {n}: expected factor {idx}")));
                }
                if idx >= rank {
                    return Err(LutError::InconsistentShapes(format!(
                        "rank {rank} declared but more factor blocks present"
                    )));
                }
                let u = lines.values("u", grid)?;
                let v = lines.values("v", grid)?;
                let w = lines.values("w", grid)?;
                let c = lines.values("c", 3)?;
                comps.push(RankComponent {
                    u,
                    v,
                    w,
                    c: [c[0], c[1], c[2]],
                });
            }
            Some("meta") => {
                let key = parts.next().ok_or(LutError::Parse {
                    line: n,
                    msg: "meta line without key".into(),
                })?;
                meta.insert(key.to_string(), parts.collect::<Vec<_>>().join(" "));
            }
            Some("end") => break,
            _ => {
                return Err(LutError::Parse {
                    line: n,
                    msg: format!("unexpected line `{l}`"),
                })
            }
        }
    }
    if comps.len() != rank {
        return Err(LutError::InconsistentShapes(format!(
            "rank {rank} declared but {} factor blocks present",
            comps.len()
        )));
    }
    let model = LorLutModel::new(grid, bases, alphas, CpFactors::new(grid, comps)?)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::identity_lut;

    fn sample_model() -> LorLutModel {
        let comps = vec![
            RankComponent {
                u: vec![0.1, -0.2, 1e-17],
                v: vec![1.0 / 3.0, 2.0, -0.0],
                w: vec![3.5, 1e300, -7.25],
                c: [0.1, 0.2, 0.3],
            };
            2
        ];
        LorLutModel::new(3, vec![], vec![], CpFactors::new(3, comps).unwrap()).unwrap()
    }

    #[test]
    fn identity_base_marker() {
        let text = write_model(&sample_model(), None).unwrap();
        assert!(text.starts_with("lorlut-model v1\n"));
        assert!(text.contains("\nbase identity\n"));
        assert_eq!(read_model(&text).unwrap(), sample_model());
    }

    #[test]
    fn missing_factor_block() {
        let text = write_model(&sample_model(), None).unwrap().replace("rank 2", "rank 3");
        assert!(matches!(read_model(&text), Err(LutError::InconsistentShapes(_))));
    }

    #[test]
    fn version_mismatch() {
        let text = write_model(&sample_model(), None).unwrap().replace("v1", "v2");
        assert!(matches!(read_model(&text), Err(LutError::Version(_))));
    }

    #[test]
    fn bases_are_inline() {
        let id = identity_lut(3).unwrap();
        let m = LorLutModel::new(3, vec![id.clone(), id], vec![0.25, 0.75], CpFactors::zeros(3, 0).unwrap()).unwrap();
        let text = write_model(&m, None).unwrap();
        assert!(!text.contains("base identity"));
        assert_eq!(text.lines().filter(|l| l.starts_with("basis ")).count(), 2);
        assert_eq!(read_model(&text).unwrap(), m);
    }

    #[test]
    fn metadata_round_trip() {
        let mut meta = BTreeMap::new();
        meta.insert("source".to_string(), "compress rank 4".to_string());
        let text = write_model_with_meta(&sample_model(), &meta).unwrap();
        let (_, back) = read_model_with_meta(&text).unwrap();
        assert_eq!(back, meta);
    }
}
