//! Doubly dispersive channel: EVA sampling with Jakes Doppler and the induced
//! `MN×MN` matrix `H = Σ_p h_p Π^{l_p} Δ^{k_p}`.
//!
//! `Π` is the cyclic down-shift (`(Πx)[m] = x[m−1]`) and
//! `Δ = diag(ω^0, …, ω^{MN−1})` with `ω = exp(j2π/MN)`. A negative Doppler bin
//! `k` is applied as the exponent `k mod MN`; phases come from one table of
//! `ω^t`, so a given path set always yields bit-identical matrices.
//!
//! `H` is stored by delay: for each distinct delay `l` the matrix has exactly one
//! nonzero per row, at column `(m − l) mod MN`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::GridSpec;
use crate::rng::{complex_gaussian, rng_from};
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// EVA power-delay profile: (delay in ns, relative power in dB).
pub const EVA_TAPS: [(f64, f64); 9] = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
];

/// EVA tap powers in linear scale, normalized to unit sum.
pub fn eva_tap_powers() -> [f64; 9] {
    let mut p = EVA_TAPS.map(|(_, db)| 10f64.powf(db / 10.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

pub fn eva_max_delay() -> f64 {
    EVA_TAPS[EVA_TAPS.len() - 1].0 * 1e-9
}

pub fn kmph_to_mps(kmph: f64) -> f64 {
    kmph / 3.6
}

/// `ν_max = v·f_c/c`
pub fn max_doppler(speed: f64, carrier_freq: f64) -> f64 {
    speed * carrier_freq / SPEED_OF_LIGHT
}

/// Nearest integer, halves resolved toward zero.
pub fn round_half_toward_zero(x: f64) -> f64 {
    let t = x.trunc();
    if (x - t).abs() == 0.5 {
        t
    } else {
        x.round()
    }
}

/// `ceil(τ_max·M·Δf)`: the prefix that covers every delay bin of the profile.
pub fn default_cp_len(grid: &GridSpec, max_delay: f64) -> usize {
    (max_delay * grid.bandwidth() - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain: C64,
    pub delay_bin: usize,
    pub doppler_bin: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// `ν_max` in Hz.
    pub max_doppler: f64,
    /// `τ_max` in seconds.
    pub max_delay: f64,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths, max_doppler: 0.0, max_delay: 0.0 }
    }

    /// One static path: gain `h`, no delay, no Doppler.
    pub fn flat(h: C64) -> Self {
        Self::new(vec![Path { gain: h, delay_bin: 0, doppler_bin: 0 }])
    }

    pub fn max_delay_bin(&self) -> usize {
        self.paths.iter().map(|p| p.delay_bin).max().unwrap_or(0)
    }

    /// CSV with header `h_re,h_im,l,k`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h_re,h_im,l,k\n");
        for p in &self.paths {
            let _ = writeln!(s, "{:e},{:e},{},{}", p.gain.re, p.gain.im, p.delay_bin, p.doppler_bin);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("h_re")) {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("path row {}: expected 4 fields, got {}", i + 1, f.len())));
            }
            let bad = |what: &str| Error::Parse(format!("path row {}: invalid {what}", i + 1));
            paths.push(Path {
                gain: C64::new(f[0].parse().map_err(|_| bad("h_re"))?, f[1].parse().map_err(|_| bad("h_im"))?),
                delay_bin: f[2].parse().map_err(|_| bad("l"))?,
                doppler_bin: f[3].parse().map_err(|_| bad("k"))?,
            });
        }
        Ok(Self::new(paths))
    }
}

/// Draw one EVA realization with Jakes Doppler.
///
/// Per tap, in order: the arrival angle, then the complex gain.
pub fn sample_eva_channel(grid: &GridSpec, speed: f64, carrier_freq: f64, seed: u64) -> PathSet {
    let mut rng = rng_from(seed, &[0xC4A2]);
    sample_eva_with(grid, speed, carrier_freq, &mut rng)
}

pub fn sample_eva_with<R: Rng + ?Sized>(grid: &GridSpec, speed: f64, carrier_freq: f64, rng: &mut R) -> PathSet {
    let nu_max = max_doppler(speed, carrier_freq);
    let fs = grid.bandwidth();
    let tau_max = eva_max_delay();
    if fs * tau_max < 1.0 {
        log::warn!("sampling rate {fs} Hz cannot resolve the EVA delay spread; all taps share delay bin 0");
    }
    let nt = grid.frame_duration();
    let powers = eva_tap_powers();
    let paths = EVA_TAPS
        .iter()
        .zip(powers)
        .map(|(&(delay_ns, _), power)| {
            let theta: f64 = rng.random_range(-PI..PI);
            let gain = complex_gaussian(rng, power);
            let nu = nu_max * theta.cos();
            Path {
                gain,
                delay_bin: round_half_toward_zero(delay_ns * 1e-9 * fs) as usize,
                doppler_bin: round_half_toward_zero(nu * nt) as i64,
            }
        })
        .collect();
    PathSet { paths, max_doppler: nu_max, max_delay: tau_max }
}

/// Coefficients of one delay: `H[m, (m − delay) mod n] = coef[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBand {
    pub delay: usize,
    pub coef: Vec<C64>,
}

/// Structured `MN×MN` channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    size: usize,
    bands: Vec<DelayBand>,
}

/// `ω^t = exp(j2πt/n)` for `t` in `0..n`.
pub fn unit_roots(n: usize) -> Vec<C64> {
    (0..n).map(|t| C64::from_polar(1.0, 2.0 * PI * t as f64 / n as f64)).collect()
}

impl ChannelMatrix {
    pub fn from_paths(size: usize, paths: &[Path]) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("channel matrix size must be positive".into()));
        }
        let roots = unit_roots(size);
        let mut bands: Vec<DelayBand> = Vec::new();
        for p in paths {
            if p.delay_bin >= size {
                return Err(Error::Config(format!("delay bin {} outside [0, {})", p.delay_bin, size)));
            }
            let k = p.doppler_bin.rem_euclid(size as i64) as usize;
            let idx = match bands.iter().position(|b| b.delay == p.delay_bin) {
                Some(i) => i,
                None => {
                    bands.push(DelayBand { delay: p.delay_bin, coef: vec![C64::new(0.0, 0.0); size] });
                    bands.len() - 1
                }
            };
            let coef = &mut bands[idx].coef;
            for (m, c) in coef.iter_mut().enumerate() {
                // Phase of Δ^k at the source sample (m − l) mod n.
                let src = (m + size - p.delay_bin) % size;
                *c += p.gain * roots[(k * src) % size];
            }
        }
        bands.sort_by_key(|b| b.delay);
        Ok(Self { size, bands })
    }

    pub fn identity(size: usize) -> Self {
        Self { size, bands: vec![DelayBand { delay: 0, coef: vec![C64::new(1.0, 0.0); size] }] }
    }

    /// `α·H`
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.bands.iter_mut().for_each(|b| b.coef.iter_mut().for_each(|c| *c *= alpha));
        out
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bands(&self) -> &[DelayBand] {
        &self.bands
    }

    /// Largest minus smallest delay: the half-bandwidth of `HH†`.
    pub fn delay_spread(&self) -> usize {
        match (self.bands.first(), self.bands.last()) {
            (Some(a), Some(b)) => b.delay - a.delay,
            _ => 0,
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        let n = self.size;
        self.bands
            .iter()
            .filter(|b| (row + n - b.delay) % n == col)
            .map(|b| b.coef[row])
            .sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.size;
        let mut h = DMatrix::zeros(n, n);
        for b in &self.bands {
            for m in 0..n {
                h[(m, (m + n - b.delay) % n)] += b.coef[m];
            }
        }
        h
    }

    /// `y = H·x`
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let n = self.size;
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for b in &self.bands {
            let l = b.delay;
            // Rows l..n read x[0..n-l]; rows 0..l wrap around.
            for m in l..n {
                y[m] += b.coef[m] * x[m - l];
            }
            for m in 0..l {
                y[m] += b.coef[m] * x[m + n - l];
            }
        }
    }

    /// `y += H·x` for `x` supported on `support`, writing `y[i*stride]`.
    pub fn apply_sparse_add(&self, x: &[C64], support: &[usize], y: &mut [C64], stride: usize) {
        let n = self.size;
        for b in &self.bands {
            for &q in support {
                let m = (q + b.delay) % n;
                y[m * stride] += b.coef[m] * x[q];
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len("channel input", self.size, x.len())?;
        let mut y = vec![C64::new(0.0, 0.0); self.size];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// `x = H†·y`
    pub fn apply_adjoint_into(&self, y: &[C64], x: &mut [C64]) {
        let n = self.size;
        x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for b in &self.bands {
            let l = b.delay;
            for m in l..n {
                x[m - l] += b.coef[m].conj() * y[m];
            }
            for m in 0..l {
                x[m + n - l] += b.coef[m].conj() * y[m];
            }
        }
    }

    pub fn apply_adjoint(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len("channel adjoint input", self.size, y.len())?;
        let mut x = vec![C64::new(0.0, 0.0); self.size];
        self.apply_adjoint_into(y, &mut x);
        Ok(x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| b.coef.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// A path set and the channel matrix it induces on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub path_set: PathSet,
    pub h: ChannelMatrix,
}

pub fn build_channel_matrix(grid: &GridSpec, paths: PathSet) -> Result<ChannelRealization> {
    let h = ChannelMatrix::from_paths(grid.size(), &paths.paths)?;
    Ok(ChannelRealization { path_set: paths, h })
}

/// `r = H·s + n` with circularly-symmetric noise of per-element variance `noise_var`.
pub fn apply_channel(h: &ChannelMatrix, s: &[C64], noise_var: f64, seed: u64) -> Result<Vec<C64>> {
    let mut rng = rng_from(seed, &[0x40153]);
    let mut r = h.apply(s)?;
    add_noise(&mut r, noise_var, &mut rng)?;
    Ok(r)
}

pub fn add_noise<R: Rng + ?Sized>(r: &mut [C64], noise_var: f64, rng: &mut R) -> Result<()> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::Config(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    if noise_var > 0.0 {
        r.iter_mut().for_each(|z| *z += complex_gaussian(rng, noise_var));
    }
    Ok(())
}

/// Pass a prefixed frame of `frame_len + cp` samples through the linear
/// time-varying channel, with Doppler phase referenced to the first sample
/// after the prefix.
///
/// Removing the prefix from the output reproduces `H·s` whenever the prefix is
/// at least as long as the largest delay bin.
pub fn propagate_prefixed(paths: &[Path], frame_len: usize, cp: usize, x: &[C64]) -> Result<Vec<C64>> {
    check_len("prefixed frame", frame_len + cp, x.len())?;
    let n = frame_len;
    let roots = unit_roots(n);
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    for p in paths {
        let k = p.doppler_bin.rem_euclid(n as i64) as usize;
        let l = p.delay_bin;
        for t in l..x.len() {
            // Source sample index relative to the frame start, wrapped onto the lattice.
            let src = ((t - l) as i64 - cp as i64).rem_euclid(n as i64) as usize;
            y[t] += p.gain * roots[(k * src) % n] * x[t - l];
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Waveform;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn path(h: C64, l: usize, k: i64) -> Path {
        Path { gain: h, delay_bin: l, doppler_bin: k }
    }

    #[test]
    fn doppler_at_reference_speed() {
        let nu = max_doppler(kmph_to_mps(500.0), 5.9e9);
        assert!((nu - 2733.4).abs() < 0.5, "{nu}");
        assert_eq!(max_doppler(0.0, 5.9e9), 0.0);
        assert!((max_doppler(2.0 * 40.0, 2e9) - 2.0 * max_doppler(40.0, 2e9)).abs() < 1e-12);
    }

    #[test]
    fn eva_profile_is_normalized() {
        assert!((eva_tap_powers().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = GridSpec::high_mobility_default(Waveform::Otfs);
        assert_eq!(default_cp_len(&g, eva_max_delay()), 10);
        let bins: Vec<usize> = sample_eva_channel(&g, 0.0, 5.9e9, 1).paths.iter().map(|p| p.delay_bin).collect();
        assert_eq!(bins, vec![0, 0, 1, 1, 1, 3, 4, 7, 10]);
    }

    #[test]
    fn ties_round_toward_zero() {
        assert_eq!(round_half_toward_zero(2.5), 2.0);
        assert_eq!(round_half_toward_zero(-2.5), -2.0);
        assert_eq!(round_half_toward_zero(2.6), 3.0);
        assert_eq!(round_half_toward_zero(-0.4), 0.0);
    }

    #[test]
    fn sampler_is_deterministic_and_static_at_rest() {
        let g = GridSpec::high_mobility_default(Waveform::Otfs);
        let a = sample_eva_channel(&g, 30.0, 5.9e9, 9);
        assert_eq!(a, sample_eva_channel(&g, 30.0, 5.9e9, 9));
        assert_ne!(a, sample_eva_channel(&g, 30.0, 5.9e9, 10));
        assert!(sample_eva_channel(&g, 0.0, 5.9e9, 3).paths.iter().all(|p| p.doppler_bin == 0));
    }

    #[test]
    fn single_path_examples() {
        let id = ChannelMatrix::from_paths(4, &[path(c(1.0, 0.0), 0, 0)]).unwrap();
        assert_eq!(id.to_dense(), DMatrix::identity(4, 4));

        let shift = ChannelMatrix::from_paths(4, &[path(c(1.0, 0.0), 1, 0)]).unwrap().to_dense();
        for i in 0..4 {
            assert_eq!(shift[((i + 1) % 4, i)], c(1.0, 0.0));
        }
        assert_eq!(shift.iter().filter(|z| z.norm() > 0.0).count(), 4);

        let ramp = ChannelMatrix::from_paths(4, &[path(c(1.0, 0.0), 0, 1)]).unwrap().to_dense();
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (i, w) in want.iter().enumerate() {
            assert!((ramp[(i, i)] - w).norm() < 1e-15);
        }
    }

    #[test]
    fn negative_doppler_is_conjugate_ramp() {
        let up = ChannelMatrix::from_paths(8, &[path(c(1.0, 0.0), 0, 3)]).unwrap().to_dense();
        let down = ChannelMatrix::from_paths(8, &[path(c(1.0, 0.0), 0, -3)]).unwrap().to_dense();
        assert!((up.map(|z| z.conj()) - down).norm() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let g = GridSpec::high_mobility_default(Waveform::Otfs);
        let ps = sample_eva_channel(&g, 138.9, 5.9e9, 4);
        let back = PathSet::from_csv(&ps.to_csv()).unwrap();
        assert_eq!(back.paths, ps.paths);
        assert!(PathSet::from_csv("h_re,h_im,l,k\n1,2,3\n").is_err());
    }

    fn arb_paths(n: usize) -> impl Strategy<Value = Vec<Path>> {
        prop::collection::vec(
            ((-1.0f64..1.0, -1.0f64..1.0), 0..n, -(n as i64)..(n as i64))
                .prop_map(|((a, b), l, k)| path(c(a, b), l, k)),
            1..6,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn structured_matches_dense_definition(paths in arb_paths(12), x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 12)) {
            let n = 12;
            let h = ChannelMatrix::from_paths(n, &paths).unwrap();
            // Dense product of permutation and diagonal powers, built independently.
            let mut want = DMatrix::<C64>::zeros(n, n);
            for p in &paths {
                let mut pi = DMatrix::<C64>::zeros(n, n);
                for i in 0..n { pi[((i + p.delay_bin) % n, i)] = c(1.0, 0.0); }
                let delta = DMatrix::from_fn(n, n, |i, j| if i == j {
                    C64::from_polar(1.0, 2.0 * PI * (p.doppler_bin as f64) * i as f64 / n as f64)
                } else { c(0.0, 0.0) });
                want += pi * delta * p.gain;
            }
            prop_assert!((h.to_dense() - &want).norm() <= 1e-12 * (1.0 + want.norm()));
            let x: Vec<C64> = x.into_iter().map(|(a, b)| c(a, b)).collect();
            let dense_y = &want * nalgebra::DVector::from_column_slice(&x);
            let y = h.apply(&x).unwrap();
            let dense_x = want.ad_mul(&nalgebra::DVector::from_column_slice(&x));
            let xa = h.apply_adjoint(&x).unwrap();
            for i in 0..n {
                prop_assert!((y[i] - dense_y[i]).norm() <= 1e-9 * (1.0 + dense_y.norm()));
                prop_assert!((xa[i] - dense_x[i]).norm() <= 1e-9 * (1.0 + dense_x.norm()));
            }
            prop_assert!((h.frobenius_norm() - want.norm()).abs() <= 1e-9 * (1.0 + want.norm()));
        }

        #[test]
        fn single_unit_path_is_unitary(l in 0usize..10, k in -9i64..10, phase in 0.0f64..6.3) {
            let h = ChannelMatrix::from_paths(10, &[path(C64::from_polar(1.0, phase), l, k)]).unwrap().to_dense();
            prop_assert!(crate::grid::gram_residual(&h) < 1e-12);
        }

        #[test]
        fn prefixed_propagation_matches_cyclic_model(paths in arb_paths(5), x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16), extra in 0usize..3) {
            let n = 16;
            let cp = paths.iter().map(|p| p.delay_bin).max().unwrap() + extra;
            let s: Vec<C64> = x.into_iter().map(|(a, b)| c(a, b)).collect();
            let h = ChannelMatrix::from_paths(n, &paths).unwrap();
            let framed = crate::grid::add_cyclic_prefix(&s, cp).unwrap();
            let out = propagate_prefixed(&paths, n, cp, &framed).unwrap();
            let got = crate::grid::remove_cyclic_prefix(&out, cp).unwrap();
            let want = h.apply(&s).unwrap();
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).norm() <= 1e-9 * (1.0 + w.norm()));
            }
        }
    }
}
