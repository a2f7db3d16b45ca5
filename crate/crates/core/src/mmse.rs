//! LMMSE equalizer products and the per-symbol row scalars every SINR needs.
//!
//! An equalizer of the form `C = s·(H_d A)† R⁻¹` with Hermitian `R` is fully
//! described, for SINR purposes, by four row quantities per symbol `j`:
//!
//! * `diag[j]  = |b_jj|²` with `B = C H_d A`
//! * `row[j]   = Σ_l |b_jl|²`
//! * `cross[x][j] = Σ_l |(C H_x A)_jl|²` for other channels `H_x`
//! * `noise[j] = Σ_l |c_jl|²`
//!
//! With `y_j = R⁻¹ H_d a_j` and `A` unitary these reduce to
//! `b_jj = s·(H_d a_j)†y_j`, `row = s²‖H_d†y_j‖²`, `cross = s²‖H_x†y_j‖²` and
//! `noise = s²‖y_j‖²`, so one solve per symbol replaces the dense products.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::grid::ModulationMatrix;
use crate::linalg::{dense_covariance, HermitianSolver};
use crate::C64;

/// Per-symbol row powers of an equalizer, see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct RowScalars {
    pub diag: Vec<f64>,
    pub row: Vec<f64>,
    pub cross: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    /// Complex `b_jj`, kept for unbiased symbol scaling.
    pub gain: Vec<C64>,
}

impl RowScalars {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `Σ_{l≠j} |b_jl|²`, clamped at zero against rounding.
    pub fn isi(&self, j: usize) -> f64 {
        (self.row[j] - self.diag[j]).max(0.0)
    }

    /// Same equalizer with `C` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let s2 = s * s;
        let sc = |v: &Vec<f64>| v.iter().map(|x| x * s2).collect::<Vec<_>>();
        Self {
            diag: sc(&self.diag),
            row: sc(&self.row),
            cross: self.cross.iter().map(sc).collect(),
            noise: sc(&self.noise),
            gain: self.gain.iter().map(|g| g * s).collect(),
        }
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn mean_diag(&self) -> f64 {
        Self::mean(&self.diag)
    }

    pub fn mean_row(&self) -> f64 {
        Self::mean(&self.row)
    }

    pub fn mean_isi(&self) -> f64 {
        (0..self.len()).map(|j| self.isi(j)).sum::<f64>() / self.len() as f64
    }

    pub fn mean_noise(&self) -> f64 {
        Self::mean(&self.noise)
    }
}

/// `desired / (interference + noise)`, zero when nothing is desired.
pub fn sinr(desired: f64, interference: f64) -> f64 {
    if desired <= 0.0 {
        0.0
    } else {
        desired / interference
    }
}

/// Dense `C` and `B = C H A` plus cross products `C H_x A`.
#[derive(Debug, Clone)]
pub struct EqualizerProducts {
    pub c: DMatrix<C64>,
    pub b: DMatrix<C64>,
    pub cross: Vec<DMatrix<C64>>,
}

impl EqualizerProducts {
    /// `C = s·(H_d A)†R⁻¹`, `R = Σ_w c_w H_w H_w† + reg·I`, through a dense factorization.
    pub fn dense(
        a: &ModulationMatrix,
        desired: &ChannelMatrix,
        cross: &[&ChannelMatrix],
        terms: &[(&ChannelMatrix, f64)],
        reg: f64,
        scale: f64,
    ) -> Result<Self> {
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::Config(format!("regularization must be positive and finite, got {reg}")));
        }
        let r = dense_covariance(terms, reg);
        let ha = desired.to_dense() * a.dense();
        let chol = r.cholesky().ok_or(Error::NotPositiveDefinite(0))?;
        // R X = H A, C = s X†
        let x = chol.solve(&ha);
        let c = x.adjoint() * C64::new(scale, 0.0);
        let b = &c * &ha;
        let cross = cross.iter().map(|h| &c * (h.to_dense() * a.dense())).collect();
        Ok(Self { c, b, cross })
    }

    /// Row powers read directly off the dense matrices.
    pub fn row_scalars(&self) -> RowScalars {
        let n = self.b.nrows();
        let row_pow = |m: &DMatrix<C64>, j: usize| m.row(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
        RowScalars {
            diag: (0..n).map(|j| self.b[(j, j)].norm_sqr()).collect(),
            row: (0..n).map(|j| row_pow(&self.b, j)).collect(),
            cross: self.cross.iter().map(|m| (0..n).map(|j| row_pow(m, j)).collect()).collect(),
            noise: (0..n).map(|j| row_pow(&self.c, j)).collect(),
            gain: (0..n).map(|j| self.b[(j, j)]).collect(),
        }
    }

    /// `d̂ = C r`
    pub fn equalize(&self, r: &[C64]) -> Vec<C64> {
        (&self.c * DVector::from_column_slice(r)).as_slice().to_vec()
    }
}

/// Right-hand sides solved together by [`MmseEqualizer::row_scalars`].
const SOLVE_BLOCK: usize = 8;

/// Gain, row power, cross powers and noise power of one row.
type RowEntry = (C64, f64, Vec<f64>, f64);

/// A factored covariance together with the channel whose symbols it estimates.
pub struct MmseEqualizer<'a> {
    pub a: &'a ModulationMatrix,
    pub desired: &'a ChannelMatrix,
    pub solver: HermitianSolver,
    /// `(c, reg)` when `R = c·H_d H_d† + reg·I`, so that `‖H_d†y‖² = (g − reg‖y‖²)/c`.
    own_only: Option<(f64, f64)>,
}

impl<'a> MmseEqualizer<'a> {
    pub fn new(
        a: &'a ModulationMatrix,
        desired: &'a ChannelMatrix,
        terms: &[(&ChannelMatrix, f64)],
        reg: f64,
    ) -> Result<Self> {
        if desired.size() != a.size() {
            return Err(Error::Shape { what: "channel vs modulation", expected: a.size(), got: desired.size() });
        }
        let own_only = match terms {
            [(h, c)] if std::ptr::eq(*h, desired) && *c > 0.0 => Some((*c, reg)),
            _ => None,
        };
        Ok(Self { a, desired, solver: HermitianSolver::covariance(terms, reg)?, own_only })
    }

    /// Row scalars of `C = (H_d A)†R⁻¹` (unit scale).
    pub fn row_scalars(&self, cross: &[&ChannelMatrix]) -> RowScalars {
        let n = self.a.size();
        let b = self.solver.half_bandwidth().max(1);
        let zero = C64::new(0.0, 0.0);
        let starts: Vec<usize> = (0..n).step_by(SOLVE_BLOCK).collect();
        let per_block: Vec<Vec<RowEntry>> = starts
            .into_par_iter()
            .map_init(
                || {
                    let r = SOLVE_BLOCK;
                    (vec![zero; n * r], vec![zero; n * r], vec![zero; n], vec![zero; n], vec![zero; b * r])
                },
                |(us, ys, col, t, scratch), j0| {
                    let r = SOLVE_BLOCK.min(n - j0);
                    let (us, ys) = (&mut us[..n * r], &mut ys[..n * r]);
                    us.iter_mut().for_each(|v| *v = zero);
                    for c in 0..r {
                        let support = self.a.column_support(j0 + c);
                        self.desired.apply_sparse_add(self.a.column(j0 + c), &support, &mut us[c..], r);
                    }
                    ys.copy_from_slice(us);
                    self.solver.solve_block_in_place(ys, r, &mut scratch[..b * r]);
                    (0..r)
                        .map(|c| {
                            let mut g = zero;
                            let mut noise = 0.0;
                            for (i, y) in col.iter_mut().enumerate() {
                                let (u, v) = (us[i * r + c], ys[i * r + c]);
                                g += u.conj() * v;
                                noise += v.norm_sqr();
                                *y = v;
                            }
                            let mut power = |h: &ChannelMatrix| {
                                h.apply_adjoint_into(col, t);
                                t.iter().map(|z| z.norm_sqr()).sum::<f64>()
                            };
                            let row = match self.own_only {
                                Some((c, reg)) => ((g.re - reg * noise) / c).max(0.0),
                                None => power(self.desired),
                            };
                            let xs = cross.iter().map(|h| power(h)).collect();
                            (g, row, xs, noise)
                        })
                        .collect()
                },
            )
            .collect();
        let mut out = RowScalars {
            diag: Vec::with_capacity(n),
            row: Vec::with_capacity(n),
            cross: vec![Vec::with_capacity(n); cross.len()],
            noise: Vec::with_capacity(n),
            gain: Vec::with_capacity(n),
        };
        for (g, row, xs, noise) in per_block.into_iter().flatten() {
            out.diag.push(g.norm_sqr());
            out.gain.push(g);
            out.row.push(row);
            out.noise.push(noise);
            for (dst, v) in out.cross.iter_mut().zip(xs) {
                dst.push(v);
            }
        }
        out
    }

    /// `d̂ = s·A† H_d† R⁻¹ r`
    pub fn equalize(&self, r: &[C64], scale: f64) -> Result<Vec<C64>> {
        let b = self.solver.half_bandwidth().max(1);
        let mut y = r.to_vec();
        self.solver.solve_in_place(&mut y, &mut vec![C64::new(0.0, 0.0); b]);
        let t = self.desired.apply_adjoint(&y)?;
        let mut d = self.a.apply_adjoint_fast(&t)?;
        d.iter_mut().for_each(|z| *z *= scale);
        Ok(d)
    }
}
