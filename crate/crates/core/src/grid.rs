//! Delay-Doppler lattice, modulation matrices and cyclic-prefix framing.
//!
//! Symbols are vectorized delay-major: `d[l + M*k]` holds `d(k, l)` for
//! Doppler bin `k` and delay bin `l`. With that order the two waveforms share
//! one transmit model `s = A·sqrt(P)·d`:
//!
//! * OTFS: `A = W_N ⊗ I_M`
//! * OFDM: `A = I_N ⊗ W_M`
//!
//! where `W_L` is the normalized `L`-point inverse DFT matrix.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::C64;

/// Largest lattice (`M*N`) for which a dense modulation matrix is built.
pub const MAX_GRID_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Otfs,
    Ofdm,
}

impl Waveform {
    pub const ALL: [Waveform; 2] = [Waveform::Otfs, Waveform::Ofdm];

    pub fn as_str(self) -> &'static str {
        match self {
            Waveform::Otfs => "otfs",
            Waveform::Ofdm => "ofdm",
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Waveform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "otfs" => Ok(Waveform::Otfs),
            "ofdm" => Ok(Waveform::Ofdm),
            other => Err(Error::Config(format!("unknown waveform `{other}`"))),
        }
    }
}

/// Lattice dimensions and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// `N`
    pub num_doppler_bins: usize,
    /// `M`
    pub num_delay_bins: usize,
    /// `Δf` in Hz.
    pub subcarrier_spacing: f64,
    pub waveform: Waveform,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
}

impl GridSpec {
    pub fn new(m: usize, n: usize, subcarrier_spacing: f64, waveform: Waveform) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Config(format!("grid dimensions must be positive (M={m}, N={n})")));
        }
        if !(subcarrier_spacing > 0.0 && subcarrier_spacing.is_finite()) {
            return Err(Error::Config(format!(
                "subcarrier spacing must be positive, got {subcarrier_spacing}"
            )));
        }
        Ok(Self {
            num_doppler_bins: n,
            num_delay_bins: m,
            subcarrier_spacing,
            waveform,
            cp_len: 0,
        })
    }

    /// 256 delay bins, 16 Doppler bins, 15 kHz spacing, 10-sample prefix.
    pub fn high_mobility_default(waveform: Waveform) -> Self {
        Self {
            num_doppler_bins: 16,
            num_delay_bins: 256,
            subcarrier_spacing: 15e3,
            waveform,
            cp_len: 10,
        }
    }

    pub fn with_cp_len(mut self, cp_len: usize) -> Self {
        self.cp_len = cp_len;
        self
    }

    pub fn with_waveform(mut self, waveform: Waveform) -> Self {
        self.waveform = waveform;
        self
    }

    pub fn m(&self) -> usize {
        self.num_delay_bins
    }

    pub fn n(&self) -> usize {
        self.num_doppler_bins
    }

    /// `M*N`
    pub fn size(&self) -> usize {
        self.num_delay_bins * self.num_doppler_bins
    }

    /// `T = 1/Δf`
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing
    }

    /// `B = M·Δf`, also the sampling rate.
    pub fn bandwidth(&self) -> f64 {
        self.num_delay_bins as f64 * self.subcarrier_spacing
    }

    /// `N·T`, excluding the prefix.
    pub fn frame_duration(&self) -> f64 {
        self.num_doppler_bins as f64 * self.symbol_duration()
    }

    pub fn frame_duration_with_cp(&self) -> f64 {
        (self.size() + self.cp_len) as f64 / self.bandwidth()
    }
}

/// Data symbols on the delay-Doppler lattice, stored delay-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DdDataGrid {
    m: usize,
    n: usize,
    data: Vec<C64>,
}

impl DdDataGrid {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![C64::new(0.0, 0.0); m * n] }
    }

    /// Inverse of [`DdDataGrid::vectorize`].
    pub fn devectorize(v: &[C64], m: usize, n: usize) -> Result<Self> {
        check_len("delay-Doppler grid", m * n, v.len())?;
        Ok(Self { m, n, data: v.to_vec() })
    }

    pub fn vectorize(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Symbol at Doppler bin `k`, delay bin `l`.
    pub fn get(&self, k: usize, l: usize) -> C64 {
        self.data[l + self.m * k]
    }

    pub fn set(&mut self, k: usize, l: usize, v: C64) {
        self.data[l + self.m * k] = v;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn mean_energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// Normalized `L`-point inverse DFT matrix, `W[a, b] = exp(j2πab/L)/sqrt(L)`.
pub fn normalized_idft(l: usize) -> DMatrix<C64> {
    let s = 1.0 / (l as f64).sqrt();
    DMatrix::from_fn(l, l, |a, b| {
        let t = ((a * b) % l) as f64 / l as f64;
        C64::from_polar(s, 2.0 * PI * t)
    })
}

/// Dense unitary modulation matrix together with an FFT fast path.
#[derive(Debug, Clone)]
pub struct ModulationMatrix {
    m: usize,
    n: usize,
    waveform: Waveform,
    dense: DMatrix<C64>,
}

/// Build `A` for the grid's waveform.
pub fn build_modulation_matrix(grid: &GridSpec) -> Result<ModulationMatrix> {
    ModulationMatrix::new(grid.m(), grid.n(), grid.waveform)
}

impl ModulationMatrix {
    pub fn new(m: usize, n: usize, waveform: Waveform) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Config(format!("grid dimensions must be positive (M={m}, N={n})")));
        }
        let size = m.checked_mul(n).ok_or(Error::Sizing { size: usize::MAX, max: MAX_GRID_SIZE })?;
        if size > MAX_GRID_SIZE {
            return Err(Error::Sizing { size, max: MAX_GRID_SIZE });
        }
        let one = C64::new(1.0, 0.0);
        let dense = match waveform {
            Waveform::Otfs => normalized_idft(n).kronecker(&DMatrix::from_diagonal_element(m, m, one)),
            Waveform::Ofdm => DMatrix::from_diagonal_element(n, n, one).kronecker(&normalized_idft(m)),
        };
        Ok(Self { m, n, waveform, dense })
    }

    pub fn waveform(&self) -> Waveform {
        self.waveform
    }

    pub fn size(&self) -> usize {
        self.m * self.n
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn dense(&self) -> &DMatrix<C64> {
        &self.dense
    }

    /// Column `j` of `A` (contiguous, the matrix is column-major).
    pub fn column(&self, j: usize) -> &[C64] {
        let n = self.size();
        &self.dense.as_slice()[j * n..(j + 1) * n]
    }

    /// Row indices of the nonzero entries of column `j`.
    ///
    /// OTFS columns touch one sample per time slot and OFDM columns one slot.
    pub fn column_support(&self, j: usize) -> Vec<usize> {
        let (m, n) = (self.m, self.n);
        match self.waveform {
            Waveform::Otfs => (0..n).map(|k| j % m + m * k).collect(),
            Waveform::Ofdm => (0..m).map(|l| l + m * (j / m)).collect(),
        }
    }

    /// Dense `A·x`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("modulation input", self.size(), x.len())?;
        Ok((&self.dense * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec())
    }

    /// Dense `A†·y`.
    pub fn apply_adjoint(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len("demodulation input", self.size(), y.len())?;
        Ok(self.dense.ad_mul(&nalgebra::DVector::from_column_slice(y)).as_slice().to_vec())
    }

    /// FFT evaluation of `A·x`.
    pub fn apply_fast(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("modulation input", self.size(), x.len())?;
        Ok(self.transform(x, true))
    }

    /// FFT evaluation of `A†·y`.
    pub fn apply_adjoint_fast(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len("demodulation input", self.size(), y.len())?;
        Ok(self.transform(y, false))
    }

    fn transform(&self, x: &[C64], inverse: bool) -> Vec<C64> {
        let (m, n) = (self.m, self.n);
        let mut planner = FftPlanner::<f64>::new();
        match self.waveform {
            Waveform::Otfs => {
                // One N-point transform per delay bin, across the Doppler axis.
                let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
                let s = 1.0 / (n as f64).sqrt();
                let mut out = vec![C64::new(0.0, 0.0); m * n];
                let mut buf = vec![C64::new(0.0, 0.0); n];
                for l in 0..m {
                    for k in 0..n {
                        buf[k] = x[l + m * k];
                    }
                    fft.process(&mut buf);
                    for k in 0..n {
                        out[l + m * k] = buf[k] * s;
                    }
                }
                out
            }
            Waveform::Ofdm => {
                let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
                let s = 1.0 / (m as f64).sqrt();
                let mut out = x.to_vec();
                for block in out.chunks_mut(m) {
                    fft.process(block);
                    block.iter_mut().for_each(|z| *z *= s);
                }
                out
            }
        }
    }

    /// `‖A·A† − I‖_F` computed exactly from the dense entries.
    pub fn unitarity_residual(&self) -> f64 {
        gram_residual(&self.dense)
    }
}

/// `‖X†X − I‖_F` for a square matrix, which equals `‖XX† − I‖_F`.
///
/// Rows are grouped by their exact nonzero column pattern. When the patterns of
/// different groups share no column, the Gram matrix is block diagonal over the
/// groups and only those blocks are formed. Otherwise the full product is used.
pub fn gram_residual(x: &DMatrix<C64>) -> f64 {
    let n = x.nrows();
    assert_eq!(n, x.ncols(), "gram_residual expects a square matrix");
    let zero = C64::new(0.0, 0.0);
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for r in 0..n {
        let cols: Vec<usize> = (0..n).filter(|&c| x[(r, c)] != zero).collect();
        groups.entry(cols).or_default().push(r);
    }
    let mut owner = vec![usize::MAX; n];
    for (g, cols) in groups.keys().enumerate() {
        for &c in cols {
            if owner[c] != usize::MAX {
                let diff = x.ad_mul(x) - DMatrix::<C64>::identity(n, n);
                return diff.norm();
            }
            owner[c] = g;
        }
    }
    let mut sq = owner.iter().filter(|&&o| o == usize::MAX).count() as f64;
    for (cols, rows) in &groups {
        let s = cols.len();
        for (a, &ca) in cols.iter().enumerate() {
            for (b, &cb) in cols.iter().enumerate().skip(a) {
                let mut acc = zero;
                for &r in rows {
                    acc += x[(r, ca)].conj() * x[(r, cb)];
                }
                if a == b {
                    acc -= 1.0;
                    sq += acc.norm_sqr();
                } else {
                    sq += 2.0 * acc.norm_sqr();
                }
            }
        }
        debug_assert!(s <= n);
    }
    sq.sqrt()
}

/// `s = A·sqrt(power)·d`.
pub fn modulate(a: &ModulationMatrix, d: &[C64], power: f64) -> Result<Vec<C64>> {
    if !(power >= 0.0) {
        return Err(Error::Config(format!("transmit power must be nonnegative, got {power}")));
    }
    let mut s = a.apply(d)?;
    let g = power.sqrt();
    s.iter_mut().for_each(|z| *z *= g);
    Ok(s)
}

/// `d = A†·s / sqrt(power)`.
pub fn demodulate(a: &ModulationMatrix, s: &[C64], power: f64) -> Result<Vec<C64>> {
    if !(power > 0.0) {
        return Err(Error::Config(format!("transmit power must be positive, got {power}")));
    }
    let mut d = a.apply_adjoint(s)?;
    let g = 1.0 / power.sqrt();
    d.iter_mut().for_each(|z| *z *= g);
    Ok(d)
}

pub fn add_cyclic_prefix(s: &[C64], cp_len: usize) -> Result<Vec<C64>> {
    if cp_len > s.len() {
        return Err(Error::Config(format!(
            "cyclic prefix of {cp_len} samples exceeds frame length {}",
            s.len()
        )));
    }
    let mut out = Vec::with_capacity(s.len() + cp_len);
    out.extend_from_slice(&s[s.len() - cp_len..]);
    out.extend_from_slice(s);
    Ok(out)
}

pub fn remove_cyclic_prefix(r: &[C64], cp_len: usize) -> Result<Vec<C64>> {
    if r.len() < cp_len {
        return Err(Error::Shape { what: "prefixed frame", expected: cp_len, got: r.len() });
    }
    Ok(r[cp_len..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn one_by_one_is_identity() {
        let a = ModulationMatrix::new(1, 1, Waveform::Otfs).unwrap();
        assert_eq!(a.dense()[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn single_doppler_bin_otfs_is_identity() {
        let a = ModulationMatrix::new(2, 1, Waveform::Otfs).unwrap();
        assert!((a.dense() - DMatrix::<C64>::identity(2, 2)).norm() == 0.0);
    }

    #[test]
    fn basis_vector_selects_column() {
        let a = ModulationMatrix::new(2, 2, Waveform::Otfs).unwrap();
        let mut e = vec![c(0.0, 0.0); 4];
        e[1] = c(1.0, 0.0);
        let s = modulate(&a, &e, 1.0).unwrap();
        assert_eq!(s.as_slice(), a.column(1));
    }

    #[test]
    fn oversized_grid_is_rejected() {
        assert!(matches!(ModulationMatrix::new(128, 64, Waveform::Otfs), Err(Error::Sizing { .. })));
    }

    #[test]
    fn prefix_examples() {
        let s: Vec<C64> = (1..=4).map(|v| c(v as f64, 0.0)).collect();
        let p = add_cyclic_prefix(&s, 2).unwrap();
        let re: Vec<f64> = p.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(add_cyclic_prefix(&s, 0).unwrap(), s);
        assert!(add_cyclic_prefix(&s, 5).is_err());
        assert!(remove_cyclic_prefix(&s[..1], 2).is_err());
    }

    #[test]
    fn frame_durations() {
        let g = GridSpec::high_mobility_default(Waveform::Otfs);
        assert!((g.frame_duration() - 16.0 / 15e3).abs() < 1e-15);
        assert!(g.frame_duration_with_cp() > g.frame_duration());
        assert!((g.bandwidth() - 3.84e6).abs() < 1e-6);
    }

    #[test]
    fn blocked_residual_matches_dense_product() {
        for wf in Waveform::ALL {
            let a = ModulationMatrix::new(4, 3, wf).unwrap();
            let dense = (a.dense() * a.dense().adjoint() - DMatrix::<C64>::identity(12, 12)).norm();
            assert!((a.unitarity_residual() - dense).abs() < 1e-13);
        }
        let mut x = DMatrix::<C64>::identity(3, 3);
        x[(0, 0)] = c(2.0, 0.0);
        x[(1, 2)] = c(0.5, 0.0);
        let dense = (x.ad_mul(&x) - DMatrix::<C64>::identity(3, 3)).norm();
        assert!((gram_residual(&x) - dense).abs() < 1e-13);
    }

    fn arb_vec(len: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| C64::new(a, b)), len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unitary_for_small_grids(m in 1usize..9, n in 1usize..9, otfs in any::<bool>()) {
            let wf = if otfs { Waveform::Otfs } else { Waveform::Ofdm };
            let a = ModulationMatrix::new(m, n, wf).unwrap();
            prop_assert!(a.unitarity_residual() <= 1e-10 * (m * n) as f64);
        }

        #[test]
        fn fast_path_matches_dense((m, n, x) in (1usize..7, 1usize..7).prop_flat_map(|(m, n)| (Just(m), Just(n), arb_vec(m * n))), otfs in any::<bool>()) {
            let wf = if otfs { Waveform::Otfs } else { Waveform::Ofdm };
            let a = ModulationMatrix::new(m, n, wf).unwrap();
            let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
            for (p, q) in a.apply(&x).unwrap().iter().zip(a.apply_fast(&x).unwrap()) {
                prop_assert!((p - q).norm() <= 1e-9 * scale);
            }
            for (p, q) in a.apply_adjoint(&x).unwrap().iter().zip(a.apply_adjoint_fast(&x).unwrap()) {
                prop_assert!((p - q).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn modulation_round_trip((m, n, d) in (1usize..7, 1usize..7).prop_flat_map(|(m, n)| (Just(m), Just(n), arb_vec(m * n))), p in 0.1f64..10.0) {
            let a = ModulationMatrix::new(m, n, Waveform::Otfs).unwrap();
            let s = modulate(&a, &d, p).unwrap();
            let e_s: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            let e_d: f64 = d.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((e_s - p * e_d).abs() <= 1e-9 * (1.0 + p * e_d));
            let back = demodulate(&a, &s, p).unwrap();
            for (u, v) in back.iter().zip(&d) {
                prop_assert!((u - v).norm() <= 1e-10 * (1.0 + v.norm()));
            }
        }

        #[test]
        fn prefix_round_trip_is_bit_exact(s in arb_vec(12), cp in 0usize..=12) {
            let framed = add_cyclic_prefix(&s, cp).unwrap();
            prop_assert_eq!(framed.len(), s.len() + cp);
            prop_assert_eq!(remove_cyclic_prefix(&framed, cp).unwrap(), s);
        }

        #[test]
        fn vectorization_round_trip(v in arb_vec(15)) {
            let g = DdDataGrid::devectorize(&v, 5, 3).unwrap();
            prop_assert_eq!(g.get(2, 4), v[4 + 5 * 2]);
            prop_assert_eq!(g.vectorize(), v);
        }
    }
}
