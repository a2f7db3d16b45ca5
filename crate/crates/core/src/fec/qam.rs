//! Gray-mapped square QAM with max-log soft demapping.
//!
//! A symbol's first half of bits selects the in-phase level and the second
//! half the quadrature level. On each axis the outermost positive level has
//! the all-zero label, so QPSK `00` maps to `(1+j)/√2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
            Modulation::Qam64 => "qam64",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            "qam64" | "64qam" => Ok(Modulation::Qam64),
            other => Err(Error::Config(format!("unknown constellation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    pub order: Modulation,
    /// Point for each label, label bit `q−1−j` being symbol bit `j`.
    points: Vec<C64>,
    /// For each bit position, the labels with that bit at 0 and at 1.
    classes: Vec<[Vec<usize>; 2]>,
}

fn gray_inverse(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl QamConstellation {
    pub fn new(order: Modulation) -> Self {
        let q = order.bits_per_symbol();
        let h = q / 2;
        let levels = 1usize << h;
        let norm = (2.0 * ((levels * levels) as f64 - 1.0) / 3.0).sqrt();
        let axis = |g: usize| {
            let i = levels - 1 - gray_inverse(g);
            (2 * i) as f64 - (levels - 1) as f64
        };
        let points: Vec<C64> = (0..1usize << q)
            .map(|label| C64::new(axis(label >> h), axis(label & (levels - 1))) / norm)
            .collect();
        let classes = (0..q)
            .map(|j| {
                let bit = |label: usize| (label >> (q - 1 - j)) & 1;
                [
                    (0..points.len()).filter(|&l| bit(l) == 0).collect(),
                    (0..points.len()).filter(|&l| bit(l) == 1).collect(),
                ]
            })
            .collect();
        Self { order, points, classes }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.bits_per_symbol()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn label_of(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn bits_of(&self, label: usize) -> Vec<u8> {
        let q = self.bits_per_symbol();
        (0..q).map(|j| ((label >> (q - 1 - j)) & 1) as u8).collect()
    }
}

/// Map bits to unit-energy symbols.
pub fn qam_map(bits: &[u8], c: &QamConstellation) -> Result<Vec<C64>> {
    let q = c.bits_per_symbol();
    if bits.len() % q != 0 {
        return Err(Error::Shape { what: "bits per symbol multiple", expected: bits.len().div_ceil(q) * q, got: bits.len() });
    }
    Ok(bits.chunks(q).map(|chunk| c.points[c.label_of(chunk)]).collect())
}

/// Nearest-point hard decisions.
pub fn hard_demap(symbols: &[C64], c: &QamConstellation) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|z| {
            let label = (0..c.points.len())
                .min_by(|&a, &b| (z - c.points[a]).norm_sqr().total_cmp(&(z - c.points[b]).norm_sqr()))
                .unwrap_or(0);
            c.bits_of(label)
        })
        .collect()
}

/// Per-bit LLRs aligned to symbols, with the noise variances used.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrBlock {
    /// `llr[η*q + j]` for bit `j` of symbol `η`; positive favours bit 1.
    pub llr: Vec<f64>,
    pub noise_var: Vec<f64>,
    pub bits_per_symbol: usize,
}

/// Max-log LLR `(min_{S⁰}|z−s|² − min_{S¹}|z−s|²)/σ²(η)`.
pub fn qam_llr(symbols: &[C64], noise_var: &[f64], c: &QamConstellation) -> Result<LlrBlock> {
    if symbols.len() != noise_var.len() {
        return Err(Error::Shape { what: "noise variances", expected: symbols.len(), got: noise_var.len() });
    }
    if let Some(v) = noise_var.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Validation(format!("effective noise variance must be positive, got {v}")));
    }
    let q = c.bits_per_symbol();
    let mut llr = Vec::with_capacity(symbols.len() * q);
    let mut dist = vec![0.0; c.points.len()];
    for (z, &var) in symbols.iter().zip(noise_var) {
        for (d, p) in dist.iter_mut().zip(&c.points) {
            *d = (z - p).norm_sqr();
        }
        for [zero, one] in &c.classes {
            let m0 = zero.iter().map(|&l| dist[l]).fold(f64::INFINITY, f64::min);
            let m1 = one.iter().map(|&l| dist[l]).fold(f64::INFINITY, f64::min);
            llr.push((m0 - m1) / var);
        }
    }
    Ok(LlrBlock { llr, noise_var: noise_var.to_vec(), bits_per_symbol: q })
}
