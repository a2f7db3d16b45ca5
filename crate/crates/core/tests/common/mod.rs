#![allow(dead_code)]

use nalgebra::DMatrix;
use noma_otfs::channel::Path;
use noma_otfs::rng::{complex_gaussian, rng_from};
use noma_otfs::{ChannelMatrix, C64};
use rand::Rng;

/// `Σ_p h_p Π^{l_p} Δ^{k_p}` built from the permutation and diagonal factors.
pub fn dense_h(paths: &[Path], n: usize) -> DMatrix<C64> {
    let mut pi = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        pi[((i + 1) % n, i)] = C64::new(1.0, 0.0);
    }
    let mut h = DMatrix::<C64>::zeros(n, n);
    for p in paths {
        let k = p.doppler_bin as f64;
        let delta = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k * a as f64 / n as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        h += pi.pow(p.delay_bin as u32) * delta * p.gain;
    }
    h
}

pub fn random_paths(seed: u64, count: usize, max_delay: usize, max_doppler: i64) -> Vec<Path> {
    let mut rng = rng_from(seed, &[77]);
    (0..count)
        .map(|_| Path {
            gain: complex_gaussian(&mut rng, 1.0 / count as f64),
            delay_bin: rng.random_range(0..=max_delay),
            doppler_bin: rng.random_range(-max_doppler..=max_doppler),
        })
        .collect()
}

pub fn random_channel(seed: u64, n: usize, max_delay: usize) -> (Vec<Path>, ChannelMatrix) {
    let paths = random_paths(seed, 4, max_delay, 2);
    let h = ChannelMatrix::from_paths(n, &paths).unwrap();
    (paths, h)
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}
