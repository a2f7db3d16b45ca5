//! Hermitian positive-definite solves for cyclically banded matrices.
//!
//! The regularized covariances used by the equalizers have the form
//! `Σ_w c_w H_w H_w† + σ I`. Each `H_w` has one nonzero per row per delay, so the
//! sum is cyclically banded with half-bandwidth `b` equal to the delay spread.
//! Ordering the unknowns as (interior `0..n−b`, border `n−b..n`) makes the
//! interior block a plain band matrix. It is factored by banded Cholesky and
//! the border is closed with a `b×b` Schur complement:
//!
//! ```text
//! R = [R_II  R_IB]      S = R_BB − R_IB† R_II⁻¹ R_IB
//!     [R_IB† R_BB]
//! ```
//!
//! Small systems fall back to a full Cholesky factorization.

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::C64;

/// Lower Cholesky factor of a Hermitian band matrix.
///
/// Row `i` stores `L[i][i−t]` for `t = 0..=b` at `l[i*(b+1) + t]`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    b: usize,
    l: Vec<C64>,
    inv_diag: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the matrix whose lower band is given by `entry(i, t) = A[i][i−t]`.
    pub fn factor(n: usize, b: usize, entry: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let w = b + 1;
        let mut l = vec![C64::new(0.0, 0.0); n * w];
        let mut inv_diag = vec![0.0; n];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..i {
                let mut s = entry(i, i - j);
                for k in lo..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)].conj();
                }
                l[i * w + (i - j)] = s * inv_diag[j];
            }
            let mut d = entry(i, 0).re;
            for k in lo..i {
                d -= l[i * w + (i - k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(i));
            }
            let r = d.sqrt();
            l[i * w] = C64::new(r, 0.0);
            inv_diag[i] = 1.0 / r;
        }
        Ok(Self { n, b, l, inv_diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrite `x` with `A⁻¹x`.
    pub fn solve_in_place(&self, x: &mut [C64]) {
        self.solve_block_in_place(x, 1);
    }

    /// Solve `r` systems at once; `x[i*r + c]` is entry `i` of right-hand side `c`.
    pub fn solve_block_in_place(&self, x: &mut [C64], r: usize) {
        debug_assert_eq!(x.len(), self.n * r);
        match r {
            1 => self.solve_fixed::<1>(x),
            4 => self.solve_fixed::<4>(x),
            8 => self.solve_fixed::<8>(x),
            _ => {
                let mut col = vec![C64::new(0.0, 0.0); self.n];
                for c in 0..r {
                    col.iter_mut().enumerate().for_each(|(i, v)| *v = x[i * r + c]);
                    self.solve_fixed::<1>(&mut col);
                    col.iter().enumerate().for_each(|(i, v)| x[i * r + c] = *v);
                }
            }
        }
    }

    /// Both sweeps accumulate in registers, `R` right-hand sides per row.
    fn solve_fixed<const R: usize>(&self, x: &mut [C64]) {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let load = |x: &[C64], i: usize| -> [C64; R] { x[i * R..(i + 1) * R].try_into().expect("row of R") };
        // Leading zero rows stay zero through the forward sweep.
        let start = x.chunks_exact(R).position(|v| v.iter().any(|z| z.re != 0.0 || z.im != 0.0)).unwrap_or(n);
        for i in start..n {
            let lo = i.saturating_sub(b).max(start);
            let mut acc = load(x, i);
            for t in 1..=i - lo {
                let l = self.l[i * w + t];
                let src = load(x, i - t);
                for c in 0..R {
                    acc[c] -= l * src[c];
                }
            }
            let d = self.inv_diag[i];
            for c in 0..R {
                x[i * R + c] = acc[c] * d;
            }
        }
        for i in (0..n).rev() {
            let hi = (i + b).min(n - 1);
            let mut acc = load(x, i);
            for k in i + 1..=hi {
                let l = self.l[k * w + (k - i)].conj();
                let src = load(x, k);
                for c in 0..R {
                    acc[c] -= l * src[c];
                }
            }
            let d = self.inv_diag[i];
            for c in 0..R {
                x[i * R + c] = acc[c] * d;
            }
        }
    }
}

/// Cyclically banded Hermitian matrix: `band[m*(2b+1) + d + b] = R[m, (m+d) mod n]`.
#[derive(Debug, Clone)]
pub struct CyclicBand {
    pub n: usize,
    pub b: usize,
    pub band: Vec<C64>,
}

impl CyclicBand {
    /// `Σ_w c_w H_w H_w† + reg·I`. Requires `2b+1 ≤ n`.
    pub fn covariance(terms: &[(&ChannelMatrix, f64)], reg: f64) -> Self {
        let n = terms[0].0.size();
        let b = terms.iter().map(|(h, _)| h.delay_spread()).max().unwrap_or(0);
        debug_assert!(2 * b < n);
        let w = 2 * b + 1;
        let mut band = vec![C64::new(0.0, 0.0); n * w];
        for (h, c) in terms {
            for p in h.bands() {
                for q in h.bands() {
                    let d = q.delay as isize - p.delay as isize;
                    let col = (d + b as isize) as usize;
                    for m in 0..n {
                        let m2 = (m as isize + d).rem_euclid(n as isize) as usize;
                        band[m * w + col] += p.coef[m] * q.coef[m2].conj() * *c;
                    }
                }
            }
        }
        for m in 0..n {
            band[m * w + b] += reg;
        }
        Self { n, b, band }
    }

    /// `R[i, j]` for any pair.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (n, b) = (self.n, self.b);
        let fwd = (j + n - i) % n;
        let d = if fwd <= b {
            fwd as isize
        } else if n - fwd <= b {
            -((n - fwd) as isize)
        } else {
            return C64::new(0.0, 0.0);
        };
        self.band[i * (2 * b + 1) + (d + b as isize) as usize]
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Full(BandedCholesky),
    Cyclic {
        interior: BandedCholesky,
        /// Interior rows with a nonzero coupling to the border.
        rows: Vec<usize>,
        /// `R_IB[rows[r], c]` at `coupling[c*rows.len() + r]`.
        coupling: Vec<C64>,
        /// `Y = R_II⁻¹ R_IB`, row-major, `n−b` rows of `b`.
        y: Vec<C64>,
        schur: BandedCholesky,
    },
}

/// Factorization of a regularized covariance, ready for repeated solves.
#[derive(Debug, Clone)]
pub struct HermitianSolver {
    n: usize,
    b: usize,
    kind: Kind,
}

impl HermitianSolver {
    /// Factor `Σ_w c_w H_w H_w† + reg·I`.
    pub fn covariance(terms: &[(&ChannelMatrix, f64)], reg: f64) -> Result<Self> {
        let Some((first, _)) = terms.first() else {
            return Err(Error::Config("covariance needs at least one channel term".into()));
        };
        let n = first.size();
        if terms.iter().any(|(h, _)| h.size() != n) {
            return Err(Error::Config("covariance terms have mismatched sizes".into()));
        }
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::Config(format!("regularization must be positive and finite, got {reg}")));
        }
        let b = terms.iter().map(|(h, _)| h.delay_spread()).max().unwrap_or(0);
        if b == 0 || n >= 4 * b + 4 {
            Self::cyclic(&CyclicBand::covariance(terms, reg))
        } else {
            let dense = dense_covariance(terms, reg);
            Self::full(n, |i, j| dense[(i, j)])
        }
    }

    /// Full Cholesky of an arbitrary Hermitian PD matrix.
    pub fn full(n: usize, entry: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let b = n.saturating_sub(1);
        let chol = BandedCholesky::factor(n, b, |i, t| entry(i, i - t))?;
        Ok(Self { n, b, kind: Kind::Full(chol) })
    }

    pub fn cyclic(r: &CyclicBand) -> Result<Self> {
        let (n, b) = (r.n, r.b);
        let w = 2 * b + 1;
        let ni = n - b;
        let interior = BandedCholesky::factor(ni, b, |i, t| r.band[i * w + b - t])?;
        if b == 0 {
            return Ok(Self {
                n,
                b,
                kind: Kind::Cyclic { interior, rows: vec![], coupling: vec![], y: vec![], schur: BandedCholesky::factor(0, 0, |_, _| C64::new(0.0, 0.0))? },
            });
        }
        let rows: Vec<usize> = (0..b).chain(ni - b..ni).collect();
        let nr = rows.len();
        let mut coupling = vec![C64::new(0.0, 0.0); nr * b];
        // Y row-major: `y[i*b + c]`.
        let mut y = vec![C64::new(0.0, 0.0); ni * b];
        for (ri, &i) in rows.iter().enumerate() {
            for c in 0..b {
                let v = r.get(i, ni + c);
                coupling[c * nr + ri] = v;
                y[i * b + c] = v;
            }
        }
        interior.solve_block_in_place(&mut y, b);
        // S = R_BB − R_IB† Y
        let mut s = vec![C64::new(0.0, 0.0); b * b];
        for c1 in 0..b {
            for c2 in 0..b {
                let mut acc = r.get(ni + c1, ni + c2);
                for (ri, &i) in rows.iter().enumerate() {
                    acc -= coupling[c1 * nr + ri].conj() * y[i * b + c2];
                }
                s[c1 * b + c2] = acc;
            }
        }
        let schur = BandedCholesky::factor(b, b - 1, |i, t| s[i * b + (i - t)])?;
        Ok(Self { n, b, kind: Kind::Cyclic { interior, rows, coupling, y, schur } })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn half_bandwidth(&self) -> usize {
        self.b
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.kind, Kind::Cyclic { .. })
    }

    /// Overwrite `x` with `R⁻¹x`. `scratch` must hold at least `b` entries.
    pub fn solve_in_place(&self, x: &mut [C64], scratch: &mut [C64]) {
        self.solve_block_in_place(x, 1, scratch);
    }

    /// Solve `r` interleaved systems, `x[i*r + c]`. `scratch` must hold `b·r` entries.
    pub fn solve_block_in_place(&self, x: &mut [C64], r: usize, scratch: &mut [C64]) {
        debug_assert_eq!(x.len(), self.n * r);
        match &self.kind {
            Kind::Full(chol) => chol.solve_block_in_place(x, r),
            Kind::Cyclic { interior, rows, coupling, y, schur } => {
                let b = self.b;
                let ni = self.n - b;
                let (xi, xb) = x.split_at_mut(ni * r);
                interior.solve_block_in_place(xi, r);
                if b == 0 {
                    return;
                }
                let nr = rows.len();
                let t = &mut scratch[..b * r];
                t.copy_from_slice(xb);
                for c in 0..b {
                    let tc = &mut t[c * r..(c + 1) * r];
                    for (cv, &i) in coupling[c * nr..(c + 1) * nr].iter().zip(rows) {
                        let cv = cv.conj();
                        for (v, s) in tc.iter_mut().zip(&xi[i * r..(i + 1) * r]) {
                            *v -= cv * s;
                        }
                    }
                }
                schur.solve_block_in_place(t, r);
                xb.copy_from_slice(t);
                for (yrow, dst) in y.chunks_exact(b).zip(xi.chunks_exact_mut(r)) {
                    for (yv, tc) in yrow.iter().zip(t.chunks_exact(r)) {
                        for (v, s) in dst.iter_mut().zip(tc) {
                            *v -= yv * s;
                        }
                    }
                }
            }
        }
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let mut x = rhs.to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); self.b.max(1)];
        self.solve_in_place(&mut x, &mut scratch);
        x
    }
}

/// Dense `Σ_w c_w H_w H_w† + reg·I`.
pub fn dense_covariance(terms: &[(&ChannelMatrix, f64)], reg: f64) -> nalgebra::DMatrix<C64> {
    let n = terms[0].0.size();
    let mut r = nalgebra::DMatrix::<C64>::identity(n, n) * C64::new(reg, 0.0);
    for (h, c) in terms {
        let hd = h.to_dense();
        r += &hd * hd.adjoint() * C64::new(*c, 0.0);
    }
    r
}
