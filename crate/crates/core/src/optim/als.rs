//! CP-ALS compression of a dense residual tensor into rank-1 components.
//!
//! The residual is treated as a 4-way tensor `X[i, j, k, ch]` whose modes
//! are the red, green and blue lattice axes plus the color channel. Each
//! sweep solves the four least-squares subproblems in turn, then rescales
//! the axis factors to unit norm and moves the magnitude into `c`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LutError, Result};
use crate::lowrank::{reconstruct_residual, ComponentScales, CpFactors, RankComponent};
use crate::lut::Lut3D;

const RIDGE: f64 = 1e-10;
const INIT_SEED: u64 = 0x00C0_FFEE;
const ILL_CONDITIONED: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpAlsResult {
    pub factors: CpFactors,
    /// `‖X − X̂‖ / ‖X‖` after the last sweep (0 for a zero tensor).
    pub relative_error: f64,
    /// Relative error after each sweep.
    pub error_trace: Vec<f64>,
    pub sweeps: usize,
    /// Set when some normal-equation system had a condition number beyond
    /// what the solve can resolve; the ridge term kept it solvable.
    pub ill_conditioned: bool,
}

struct Modes {
    size: usize,
    rank: usize,
    // Column-major factor matrices: a[r][i].
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    d: Vec<[f64; 3]>,
}

fn gram(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let r = cols.len();
    DMatrix::from_fn(r, r, |p, q| cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum())
}

fn gram3(cols: &[[f64; 3]]) -> DMatrix<f64> {
    let r = cols.len();
    DMatrix::from_fn(r, r, |p, q| (0..3).map(|ch| cols[p][ch] * cols[q][ch]).sum())
}

/// Solves `F · H = M` for `F` (rows are samples) with a small ridge, and
/// reports whether `H` was badly conditioned.
fn solve_rows(m: &DMatrix<f64>, h: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let r = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let ill = max > 0.0 && min < ILL_CONDITIONED * max;
    let reg = h + DMatrix::<f64>::identity(r, r) * RIDGE;
    let sol = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&m.transpose()).transpose(),
        // Indefinite after rounding: fall back to an eigen pseudo-inverse.
        None => {
            let inv = reg.pseudo_inverse(RIDGE).expect("non-negative epsilon");
            m * inv
        }
    };
    (sol, ill)
}

impl Modes {
    fn at(t: &[f64], g: usize, i: usize, j: usize, k: usize, ch: usize) -> f64 {
        t[3 * (i + g * (j + g * k)) + ch]
    }

    fn update_a(&mut self, t: &[f64]) -> bool {
        let (g, rk) = (self.size, self.rank);
        let mut m = DMatrix::<f64>::zeros(g, rk);
        for r in 0..rk {
            for k in 0..g {
                for j in 0..g {
                    let vw = self.b[r][j] * self.c[r][k];
                    for i in 0..g {
                        let mut s = 0.0;
                        for ch in 0..3 {
                            s += Self::at(t, g, i, j, k, ch) * self.d[r][ch];
                        }
                        m[(i, r)] += s * vw;
                    }
                }
            }
        }
        let h = gram(&self.b).component_mul(&gram(&self.c)).component_mul(&gram3(&self.d));
        let (sol, ill) = solve_rows(&m, &h);
        for r in 0..rk {
            for i in 0..g {
                self.a[r][i] = sol[(i, r)];
            }
        }
        ill
    }

    fn update_b(&mut self, t: &[f64]) -> bool {
        let (g, rk) = (self.size, self.rank);
        let mut m = DMatrix::<f64>::zeros(g, rk);
        for r in 0..rk {
            for k in 0..g {
                for j in 0..g {
                    let mut acc = 0.0;
                    for i in 0..g {
                        let mut s = 0.0;
                        for ch in 0..3 {
                            s += Self::at(t, g, i, j, k, ch) * self.d[r][ch];
                        }
                        acc += s * self.a[r][i];
                    }
                    m[(j, r)] += acc * self.c[r][k];
                }
            }
        }
        let h = gram(&self.a).component_mul(&gram(&self.c)).component_mul(&gram3(&self.d));
        let (sol, ill) = solve_rows(&m, &h);
        for r in 0..rk {
            for j in 0..g {
                self.b[r][j] = sol[(j, r)];
            }
        }
        ill
    }

    fn update_c(&mut self, t: &[f64]) -> bool {
        let (g, rk) = (self.size, self.rank);
        let mut m = DMatrix::<f64>::zeros(g, rk);
        for r in 0..rk {
            for k in 0..g {
                let mut acc = 0.0;
                for j in 0..g {
                    for i in 0..g {
                        let mut s = 0.0;
                        for ch in 0..3 {
                            s += Self::at(t, g, i, j, k, ch) * self.d[r][ch];
                        }
                        acc += s * self.a[r][i] * self.b[r][j];
                    }
                }
                m[(k, r)] = acc;
            }
        }
        let h = gram(&self.a).component_mul(&gram(&self.b)).component_mul(&gram3(&self.d));
        let (sol, ill) = solve_rows(&m, &h);
        for r in 0..rk {
            for k in 0..g {
                self.c[r][k] = sol[(k, r)];
            }
        }
        ill
    }

    fn update_d(&mut self, t: &[f64]) -> bool {
        let (g, rk) = (self.size, self.rank);
        let mut m = DMatrix::<f64>::zeros(3, rk);
        for r in 0..rk {
            for k in 0..g {
                for j in 0..g {
                    let bc = self.b[r][j] * self.c[r][k];
                    for i in 0..g {
                        let uvw = self.a[r][i] * bc;
                        for ch in 0..3 {
                            m[(ch, r)] += Self::at(t, g, i, j, k, ch) * uvw;
                        }
                    }
                }
            }
        }
        let h = gram(&self.a).component_mul(&gram(&self.b)).component_mul(&gram(&self.c));
        let (sol, ill) = solve_rows(&m, &h);
        for r in 0..rk {
            for ch in 0..3 {
                self.d[r][ch] = sol[(ch, r)];
            }
        }
        ill
    }

    fn normalize(&mut self) {
        for r in 0..self.rank {
            for col in [&mut self.a[r], &mut self.b[r], &mut self.c[r]] {
                let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    col.iter_mut().for_each(|x| *x /= n);
                    self.d[r].iter_mut().for_each(|x| *x *= n);
                }
            }
        }
    }

    fn to_factors(&self) -> Result<CpFactors> {
        let comps = (0..self.rank)
            .map(|r| RankComponent {
                u: self.a[r].clone(),
                v: self.b[r].clone(),
                w: self.c[r].clone(),
                c: self.d[r],
            })
            .collect();
        CpFactors::new(self.size, comps)
    }
}

fn relative_error(target: &Lut3D, factors: &CpFactors, norm: f64) -> Result<f64> {
    let approx = reconstruct_residual(factors, &ComponentScales::ones(factors.rank()))?;
    let diff: f64 = target
        .entries()
        .iter()
        .zip(approx.entries())
        .map(|(x, y)| {
            let d = *x - *y;
            d.r * d.r + d.g * d.g + d.b * d.b
        })
        .sum();
    Ok(diff.sqrt() / norm)
}

/// Rank-`rank` CP approximation of a residual tensor by alternating least
/// squares. Stops after `max_iters` sweeps or once a sweep improves the
/// relative error by less than `tol`.
pub fn cp_als_compress(dense: &Lut3D, rank: usize, max_iters: usize, tol: f64) -> Result<CpAlsResult> {
    if rank == 0 {
        return Err(LutError::InvalidConfig("rank must be at least 1".into()));
    }
    if dense.entries().iter().any(|e| !e.is_finite()) {
        return Err(LutError::NonFinite("residual tensor"));
    }
    let g = dense.size();
    let t: Vec<f64> = dense.entries().iter().flat_map(|e| e.to_array()).collect();
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(CpAlsResult {
            factors: CpFactors::zeros(g, rank)?,
            relative_error: 0.0,
            error_trace: vec![0.0],
            sweeps: 0,
            ill_conditioned: false,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
    let mut col = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut modes = Modes {
        size: g,
        rank,
        a: (0..rank).map(|_| col(g)).collect(),
        b: (0..rank).map(|_| col(g)).collect(),
        c: (0..rank).map(|_| col(g)).collect(),
        d: (0..rank).map(|_| [0.0; 3]).collect(),
    };
    modes.normalize();

    let mut trace = Vec::new();
    let mut ill = false;
    let mut prev = f64::INFINITY;
    let mut sweeps = 0;
    // d starts at zero and is solved first, so the sweep order is d, a, b, c.
    while sweeps < max_iters {
        ill |= modes.update_d(&t);
        ill |= modes.update_a(&t);
        ill |= modes.update_b(&t);
        ill |= modes.update_c(&t);
        modes.normalize();
        sweeps += 1;
        let err = relative_error(dense, &modes.to_factors()?, norm)?;
        if !err.is_finite() {
            return Err(LutError::NonFinite("ALS reconstruction"));
        }
        trace.push(err);
        if err == 0.0 || prev - err < tol {
            break;
        }
        prev = err;
    }

    let factors = modes.to_factors()?;
    Ok(CpAlsResult {
        relative_error: *trace.last().unwrap_or(&1.0),
        factors,
        error_trace: trace,
        sweeps,
        ill_conditioned: ill,
    })
}
