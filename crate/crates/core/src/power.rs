//! Downlink power allocation.
//!
//! Two-user schemes return `β_2` and set `β_1 = 1 − β_2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::downlink::{check_user_order, PowerSplit};
use crate::error::{Error, Result};
use crate::mmse::RowScalars;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Oma,
    Fixed,
    FtpaAvgSnr,
    FtpaChannelNorm,
    WsrmAvgSnr,
    WsrmInst,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Oma,
        Scheme::Fixed,
        Scheme::FtpaAvgSnr,
        Scheme::FtpaChannelNorm,
        Scheme::WsrmAvgSnr,
        Scheme::WsrmInst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Oma => "oma",
            Scheme::Fixed => "fixed",
            Scheme::FtpaAvgSnr => "ftpa_avg_snr",
            Scheme::FtpaChannelNorm => "ftpa_channel_norm",
            Scheme::WsrmAvgSnr => "wsrm_avg_snr",
            Scheme::WsrmInst => "wsrm_inst",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsrmWeights {
    pub w1: f64,
    pub w2: f64,
}

impl WsrmWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if w1 > 0.0 && w2 > 0.0 && w1.is_finite() && w2.is_finite() {
            Ok(Self { w1, w2 })
        } else {
            Err(Error::Validation(format!("weights must be positive, got ({w1}, {w2})")))
        }
    }
}

impl Default for WsrmWeights {
    fn default() -> Self {
        Self { w1: 0.6, w2: 0.4 }
    }
}

/// Fixed fractions: must sum to one and strictly decrease.
pub fn fpa(fractions: &[f64], total_power: f64) -> Result<PowerSplit> {
    if fractions.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Validation(format!("fixed fractions must strictly decrease: {fractions:?}")));
    }
    PowerSplit::new(fractions.to_vec(), total_power)
}

fn normalized_inverse(values: &[f64], total_power: f64) -> Result<PowerSplit> {
    let inv: Vec<f64> = values.iter().map(|v| 1.0 / v).collect();
    let sum: f64 = inv.iter().sum();
    let mut fractions: Vec<f64> = inv.iter().map(|v| v / sum).collect();
    // Put any rounding residue on the last user so the sum is one to the ulp.
    let head: f64 = fractions[..fractions.len() - 1].iter().sum();
    if let Some(last) = fractions.last_mut() {
        *last = (1.0 - head).max(0.0);
    }
    PowerSplit::new(fractions, total_power)
}

/// `β_i ∝ 1/Γ_i`
pub fn ftpa_avg_snr(snrs: &[f64], total_power: f64) -> Result<PowerSplit> {
    if snrs.is_empty() || snrs.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::Degenerate(format!("average SNRs must be positive: {snrs:?}")));
    }
    normalized_inverse(snrs, total_power)
}

/// `β_i ∝ 1/‖H_i‖_F`
pub fn ftpa_channel_norm(channels: &[&ChannelMatrix], total_power: f64) -> Result<PowerSplit> {
    let norms: Vec<f64> = channels.iter().map(|h| h.frobenius_norm()).collect();
    if norms.is_empty() || norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("channel with zero Frobenius norm".into()));
    }
    normalized_inverse(&norms, total_power)
}

/// Unclamped closed-form stationary point of the average-SNR problem.
pub fn wsrm_avg_snr_raw(w: WsrmWeights, g1: f64, g2: f64) -> Result<f64> {
    if w.w1 == w.w2 {
        return Err(Error::Unsupported("average-SNR WSRM is singular for equal weights".into()));
    }
    Ok((w.w2 * g1 - w.w1 * g2) / ((w.w1 - w.w2) * g1 * g2))
}

/// Closed-form `β_2`, clamped to `[0, 1]`.
pub fn wsrm_avg_snr(w: WsrmWeights, g1: f64, g2: f64, total_power: f64) -> Result<PowerSplit> {
    if !(g1 > 0.0 && g2 > 0.0) {
        return Err(Error::Degenerate(format!("average SNRs must be positive, got ({g1}, {g2})")));
    }
    check_user_order(&[g1, g2])?;
    let b2 = wsrm_avg_snr_raw(w, g1, g2)?.clamp(0.0, 1.0);
    PowerSplit::two_user(b2, total_power)
}

/// Weighted AWGN sum rate the average-SNR problem is stated with (nats).
pub fn avg_snr_weighted_rate(w: WsrmWeights, g1: f64, g2: f64, b2: f64) -> f64 {
    let b1 = 1.0 - b2;
    w.w1 * (1.0 + b1 * g1 / (1.0 + b2 * g2)).ln() + w.w2 * (1.0 + b2 * g2).ln()
}

/// Post-SIC power terms of the two-user downlink, free of the power split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstSinrScalars {
    pub g1d: f64,
    pub g1isi: f64,
    pub g1n: f64,
    pub p1n: f64,
    pub g2d: f64,
    pub g2isi: f64,
    pub p2n: f64,
}

impl InstSinrScalars {
    pub fn new(v: [f64; 7]) -> Result<Self> {
        if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Validation(format!("SINR scalars must be finite and nonnegative: {v:?}")));
        }
        Ok(Self { g1d: v[0], g1isi: v[1], g1n: v[2], p1n: v[3], g2d: v[4], g2isi: v[5], p2n: v[6] })
    }

    /// Scalars of symbol `j` from each user's unit-scale row scalars.
    pub fn at_symbol(r1: &RowScalars, r2: &RowScalars, p: f64, noise1: f64, noise2: f64, j: usize) -> Self {
        Self {
            g1d: p * r1.diag[j],
            g1isi: p * r1.isi(j),
            g1n: p * r1.row[j],
            p1n: noise1 * r1.noise[j],
            g2d: p * r2.diag[j],
            g2isi: p * r2.isi(j),
            p2n: noise2 * r2.noise[j],
        }
    }

    /// Row powers averaged over symbols before forming the scalars.
    pub fn averaged(r1: &RowScalars, r2: &RowScalars, p: f64, noise1: f64, noise2: f64) -> Self {
        Self {
            g1d: p * r1.mean_diag(),
            g1isi: p * r1.mean_isi(),
            g1n: p * r1.mean_row(),
            p1n: noise1 * r1.mean_noise(),
            g2d: p * r2.mean_diag(),
            g2isi: p * r2.mean_isi(),
            p2n: noise2 * r2.mean_noise(),
        }
    }
}

fn ln_ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        if num <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).ln()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Weighted post-SIC sum rate as a function of `β_2` (nats).
pub fn inst_weighted_rate(w: WsrmWeights, s: &InstSinrScalars, b2: f64) -> f64 {
    let b1 = 1.0 - b2;
    let den1 = b1 * s.g1isi + b2 * s.g1n + s.p1n;
    let num1 = den1 + b1 * s.g1d;
    let den2 = b2 * s.g2isi + s.p2n;
    let num2 = den2 + b2 * s.g2d;
    w.w1 * ln_ratio(num1, den1) + w.w2 * ln_ratio(num2, den2)
}

/// `d/dβ_2` of [`inst_weighted_rate`].
pub fn inst_weighted_rate_derivative(w: WsrmWeights, s: &InstSinrScalars, b2: f64) -> f64 {
    let b1 = 1.0 - b2;
    let den1 = b1 * s.g1isi + b2 * s.g1n + s.p1n;
    let num1 = den1 + b1 * s.g1d;
    let den2 = b2 * s.g2isi + s.p2n;
    let num2 = den2 + b2 * s.g2d;
    w.w1 * ratio(s.g1n - s.g1isi - s.g1d, num1) - w.w1 * ratio(s.g1n - s.g1isi, den1)
        + w.w2 * ratio(s.g2d + s.g2isi, num2)
        - w.w2 * ratio(s.g2isi, den2)
}

const SCAN_STEPS: usize = 1000;

/// Numeric `β_2` of the instantaneous problem.
///
/// Sign changes of the derivative on a 1000-step scan are refined by
/// bisection; the candidate (roots and both endpoints) with the largest rate
/// wins, ties going to the smaller `β_2`. Without any sign change the scan grid
/// itself is searched.
pub fn wsrm_instantaneous_beta2(w: WsrmWeights, s: &InstSinrScalars) -> f64 {
    let f = |b: f64| inst_weighted_rate_derivative(w, s, b);
    let grid: Vec<f64> = (0..=SCAN_STEPS).map(|i| i as f64 / SCAN_STEPS as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&b| f(b)).collect();
    let mut candidates = vec![0.0];
    for i in 0..SCAN_STEPS {
        let (fa, fb) = (vals[i], vals[i + 1]);
        if fa == 0.0 {
            candidates.push(grid[i]);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            let mut flo = fa;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            candidates.push(0.5 * (lo + hi));
        }
    }
    if candidates.len() == 1 {
        candidates = grid;
    } else {
        candidates.push(1.0);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for b in candidates {
        let r = inst_weighted_rate(w, s, b);
        if r > best.0 {
            best = (r, b);
        }
    }
    best.1
}

pub fn wsrm_instantaneous(w: WsrmWeights, s: &InstSinrScalars, total_power: f64) -> Result<PowerSplit> {
    PowerSplit::two_user(wsrm_instantaneous_beta2(w, s), total_power)
}

/// Argmax of `f` over `{0, 0.001, …, 1}`, ties to the smaller point.
pub fn grid_argmax(f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=SCAN_STEPS {
        let b = i as f64 / SCAN_STEPS as f64;
        let v = f(b);
        if v > best.0 {
            best = (v, b);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(x: f64) -> f64 {
        10f64.powf(x / 10.0)
    }

    #[test]
    fn fixed_examples() {
        assert!(fpa(&[0.7, 0.3], 1.0).is_ok());
        assert!(fpa(&[0.9, 0.1], 1.0).is_ok());
        assert!(fpa(&[0.5, 0.5], 1.0).is_err());
        assert!(fpa(&[0.6, 0.3], 1.0).is_err());
    }

    #[test]
    fn ftpa_examples() {
        let s = ftpa_avg_snr(&[db(15.0), db(25.0)], 1.0).unwrap();
        assert!((s.beta(0) - 0.909_090_9).abs() < 1e-4 && (s.beta(1) - 0.090_909).abs() < 1e-4);
        let e = ftpa_avg_snr(&[3.0, 3.0], 1.0).unwrap();
        assert_eq!(e.fractions, vec![0.5, 0.5]);
        assert!(ftpa_avg_snr(&[0.0, 1.0], 1.0).is_err());

        let h1 = ChannelMatrix::identity(16);
        let h2 = h1.scaled(2.0);
        let s = ftpa_channel_norm(&[&h1, &h2], 1.0).unwrap();
        assert!((s.beta(0) - 2.0 / 3.0).abs() < 1e-15 && (s.beta(1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(ftpa_channel_norm(&[&h1, &h1.scaled(0.0)], 1.0).is_err());
    }

    #[test]
    fn avg_snr_wsrm_examples() {
        let w = WsrmWeights::default();
        assert!(wsrm_avg_snr_raw(w, db(15.0), db(25.0)).unwrap() < 0.0);
        let s = wsrm_avg_snr(w, db(15.0), db(25.0), 1.0).unwrap();
        assert_eq!(s.fractions, vec![1.0, 0.0]);
        let w = WsrmWeights::new(0.4, 0.6).unwrap();
        assert_eq!(wsrm_avg_snr(w, 10.0, 15.0, 1.0).unwrap().beta(1), 0.0);
        assert!(matches!(wsrm_avg_snr(WsrmWeights::new(0.5, 0.5).unwrap(), 1.0, 2.0, 1.0), Err(Error::Unsupported(_))));
        assert!(matches!(wsrm_avg_snr(WsrmWeights::default(), 5.0, 2.0, 1.0), Err(Error::Ordering(_))));
    }

    #[test]
    fn constant_objective_returns_zero() {
        let s = InstSinrScalars::new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(wsrm_instantaneous_beta2(WsrmWeights::default(), &s), 0.0);
    }

    #[test]
    fn leakage_free_scalars_reduce_to_orthogonal_awgn() {
        // Without ISI or NOMA leakage the two rates decouple into
        // w1 ln(1 + (1−β)γ1) + w2 ln(1 + βγ2), whose stationary point is closed form.
        let (g1, g2) = (db(12.0), db(20.0));
        let w = WsrmWeights::default();
        let s = InstSinrScalars::new([g1, 0.0, 0.0, 1.0, g2, 0.0, 1.0]).unwrap();
        let want = ((w.w2 * g2 * (1.0 + g1) - w.w1 * g1) / (g1 * g2 * (w.w1 + w.w2))).clamp(0.0, 1.0);
        assert!((wsrm_instantaneous_beta2(w, &s) - want).abs() < 1e-9);
    }

    fn arb_scalars() -> impl Strategy<Value = InstSinrScalars> {
        (
            prop::array::uniform4(0.0f64..40.0),
            prop::array::uniform3(0.0f64..400.0),
            (1e-3f64..2.0, 1e-3f64..2.0),
        )
            .prop_map(|(a, b, (n1, n2))| InstSinrScalars::new([a[0], a[1], a[1] + a[2], n1, b[0], b[1], n2]).unwrap())
    }

    proptest! {
        #[test]
        fn instantaneous_beats_endpoints(s in arb_scalars()) {
            let w = WsrmWeights::default();
            let b = wsrm_instantaneous_beta2(w, &s);
            prop_assert!((0.0..=1.0).contains(&b));
            let r = inst_weighted_rate(w, &s, b);
            prop_assert!(r >= inst_weighted_rate(w, &s, 0.0) - 1e-9);
            prop_assert!(r >= inst_weighted_rate(w, &s, 1.0) - 1e-9);
        }

        #[test]
        fn every_scheme_is_normalized(g1 in 0.1f64..1e4, ratio in 1.0f64..1e3, b2 in 0.0f64..1.0) {
            let g2 = g1 * ratio;
            for split in [
                ftpa_avg_snr(&[g1, g2], 1.0).unwrap(),
                wsrm_avg_snr(WsrmWeights::default(), g1, g2, 1.0).unwrap(),
                PowerSplit::two_user(b2, 1.0).unwrap(),
            ] {
                prop_assert!((split.fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(split.fractions.iter().all(|b| (0.0..=1.0).contains(b)));
            }
            let f = ftpa_avg_snr(&[g1, g2], 1.0).unwrap();
            prop_assert!(f.beta(0) >= f.beta(1));
            let alpha = 7.3;
            let fs = ftpa_avg_snr(&[g1 * alpha, g2 * alpha], 1.0).unwrap();
            prop_assert!((fs.beta(0) - f.beta(0)).abs() < 1e-12);
        }
    }
}
