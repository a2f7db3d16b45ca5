//! Downlink superposition, per-user LMMSE and symbol-wise SINR.
//!
//! Users are indexed from 0 in ascending order of average SNR, so user 0 is the
//! weakest and receives the largest power fraction. User `i` cancels users
//! `0..i` and sees users `i+1..` as residual interference.

use std::fmt::Write as _;

use crate::channel::ChannelMatrix;
use crate::error::{check_len, Error, Result};
use crate::grid::ModulationMatrix;
use crate::mmse::{sinr, EqualizerProducts, MmseEqualizer, RowScalars};
use crate::C64;

/// Per-user power fractions `β_i` and the total power `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSplit {
    pub fractions: Vec<f64>,
    pub total_power: f64,
}

impl PowerSplit {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(fractions: Vec<f64>, total_power: f64) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::Validation("power split needs at least one user".into()));
        }
        if fractions.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Validation(format!("power fractions must lie in [0, 1]: {fractions:?}")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Validation(format!("power fractions sum to {sum}, not 1")));
        }
        if !(total_power > 0.0) || !total_power.is_finite() {
            return Err(Error::Validation(format!("total power must be positive, got {total_power}")));
        }
        Ok(Self { fractions, total_power })
    }

    /// Two users with `β_2 = beta2`, `β_1 = 1 − β_2`.
    pub fn two_user(beta2: f64, total_power: f64) -> Result<Self> {
        Self::new(vec![1.0 - beta2, beta2], total_power)
    }

    pub fn users(&self) -> usize {
        self.fractions.len()
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.fractions[i]
    }
}

/// Fails unless `snrs` is non-decreasing.
pub fn check_user_order(snrs: &[f64]) -> Result<()> {
    match snrs.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Err(Error::Ordering(format!(
            "user {} has SNR {} above user {} with {}",
            i,
            snrs[i],
            i + 1,
            snrs[i + 1]
        ))),
        None => Ok(()),
    }
}

/// `s = A Σ_i sqrt(β_i P) d_i`
pub fn superpose(data: &[Vec<C64>], split: &PowerSplit, a: &ModulationMatrix) -> Result<Vec<C64>> {
    check_len("superposed users", split.users(), data.len())?;
    let n = a.size();
    let mut x = vec![C64::new(0.0, 0.0); n];
    for (d, beta) in data.iter().zip(&split.fractions) {
        check_len("user symbols", n, d.len())?;
        let g = (beta * split.total_power).sqrt();
        x.iter_mut().zip(d).for_each(|(acc, v)| *acc += v * g);
    }
    a.apply(&x)
}

fn check_snr(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("average SNR must be positive and finite, got {gamma}")))
    }
}

/// Dense `C_i = sqrt(β_i)(H A)†[(H A)(H A)† + I/Γ_i]⁻¹` and `B_i = C_i H A`.
pub fn mmse_products_dl(h: &ChannelMatrix, a: &ModulationMatrix, beta: f64, gamma: f64) -> Result<EqualizerProducts> {
    check_snr(gamma)?;
    EqualizerProducts::dense(a, h, &[], &[(h, 1.0)], 1.0 / gamma, beta.sqrt())
}

/// Equalizer of user `i` at its own receiver, before any power scaling.
pub fn equalizer_dl<'a>(h: &'a ChannelMatrix, a: &'a ModulationMatrix, gamma: f64) -> Result<MmseEqualizer<'a>> {
    check_snr(gamma)?;
    MmseEqualizer::new(a, h, &[(h, 1.0)], 1.0 / gamma)
}

/// Unit-scale row scalars of the user equalizer (fast path).
pub fn row_scalars_dl(h: &ChannelMatrix, a: &ModulationMatrix, gamma: f64) -> Result<RowScalars> {
    Ok(equalizer_dl(h, a, gamma)?.row_scalars(&[]))
}

fn dl_sinr(rows: &RowScalars, split: &PowerSplit, noise_var: f64, user: usize, post: bool) -> Result<Vec<f64>> {
    if user >= split.users() {
        return Err(Error::Config(format!("user {user} outside a {}-user split", split.users())));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Config(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    let p = split.total_power;
    let bi = split.beta(user);
    let others: f64 = split
        .fractions
        .iter()
        .enumerate()
        .filter(|&(k, _)| if post { k > user } else { k != user })
        .map(|(_, b)| b)
        .sum();
    Ok((0..rows.len())
        .map(|j| {
            let desired = bi * p * rows.diag[j];
            let interference = bi * p * rows.isi(j) + others * p * rows.row[j] + noise_var * rows.noise[j];
            sinr(desired, interference)
        })
        .collect())
}

/// Per-symbol pre-SIC SINR of `user`: all other users are interference.
pub fn sinr_pre_sic_dl(rows: &RowScalars, split: &PowerSplit, noise_var: f64, user: usize) -> Result<Vec<f64>> {
    dl_sinr(rows, split, noise_var, user, false)
}

/// Per-symbol post-SIC SINR of `user`: weaker users `0..user` are cancelled.
pub fn sinr_post_sic_dl(rows: &RowScalars, split: &PowerSplit, noise_var: f64, user: usize) -> Result<Vec<f64>> {
    dl_sinr(rows, split, noise_var, user, true)
}

/// Pre- and post-SIC SINR of one user over all symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub user: usize,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl SinrReport {
    /// Both SINR flavours for `user`, after checking that `snrs` is ordered.
    pub fn downlink(rows: &RowScalars, split: &PowerSplit, noise_var: f64, user: usize, snrs: &[f64]) -> Result<Self> {
        check_user_order(snrs)?;
        Ok(Self {
            user,
            pre: sinr_pre_sic_dl(rows, split, noise_var, user)?,
            post: sinr_post_sic_dl(rows, split, noise_var, user)?,
        })
    }

    pub fn symbols(&self) -> usize {
        self.post.len()
    }

    pub fn mean_pre(&self) -> f64 {
        mean(&self.pre)
    }

    pub fn mean_post(&self) -> f64 {
        mean(&self.post)
    }

    /// Rows `drop_id,user,symbol,pre,post` (user numbered from 1).
    pub fn write_csv_rows(&self, drop_id: usize, out: &mut String) {
        for (j, (a, b)) in self.pre.iter().zip(&self.post).enumerate() {
            let _ = writeln!(out, "{drop_id},{},{j},{a:.10e},{b:.10e}", self.user + 1);
        }
    }
}

pub const SINR_CSV_HEADER: &str = "drop_id,user,symbol,pre,post";

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `Σ_i log2(1 + mean_j Υ^Post_ij)`
pub fn dl_sum_rate(reports: &[SinrReport]) -> f64 {
    reports.iter().map(|r| (1.0 + r.mean_post()).log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Waveform;

    fn identity_rows(n: usize, b: f64) -> RowScalars {
        RowScalars {
            diag: vec![b * b; n],
            row: vec![b * b; n],
            cross: vec![],
            noise: vec![b * b; n],
            gain: vec![C64::new(b, 0.0); n],
        }
    }

    #[test]
    fn identity_single_user_is_snr() {
        let split = PowerSplit::new(vec![1.0], 2.0).unwrap();
        let s = sinr_pre_sic_dl(&identity_rows(4, 1.0), &split, 0.5, 0).unwrap();
        assert!(s.iter().all(|v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn zero_desired_row_gives_zero() {
        let mut rows = identity_rows(3, 1.0);
        rows.diag[1] = 0.0;
        let split = PowerSplit::new(vec![1.0], 1.0).unwrap();
        assert_eq!(sinr_pre_sic_dl(&rows, &split, 1.0, 0).unwrap()[1], 0.0);
    }

    #[test]
    fn split_validation() {
        assert!(PowerSplit::new(vec![0.7, 0.3], 1.0).is_ok());
        assert!(PowerSplit::new(vec![0.7, 0.4], 1.0).is_err());
        assert!(PowerSplit::new(vec![1.2, -0.2], 1.0).is_err());
        assert!(check_user_order(&[1.0, 1.0, 3.0]).is_ok());
        assert!(matches!(check_user_order(&[3.0, 1.0]), Err(Error::Ordering(_))));
    }

    #[test]
    fn sum_rate_examples() {
        let r = |v: f64| SinrReport { user: 0, pre: vec![v; 3], post: vec![v; 3] };
        assert!((dl_sum_rate(&[r(1.0), r(1.0)]) - 2.0).abs() < 1e-15);
        assert_eq!(dl_sum_rate(&[r(0.0), r(0.0)]), 0.0);
        assert!((dl_sum_rate(&[r(31.0)]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_user_split_with_silent_second_user() {
        let a = ModulationMatrix::new(2, 2, Waveform::Otfs).unwrap();
        let d1: Vec<C64> = (0..4).map(|k| C64::new(k as f64, 1.0)).collect();
        let split = PowerSplit::new(vec![0.5, 0.5], 2.0).unwrap();
        let s = superpose(&[d1.clone(), vec![C64::new(0.0, 0.0); 4]], &split, &a).unwrap();
        let want = crate::grid::modulate(&a, &d1, 1.0).unwrap();
        for (x, y) in s.iter().zip(&want) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(superpose(&[d1], &split, &a).is_err());
    }

    #[test]
    fn identity_channel_wiener_gain() {
        let a = ModulationMatrix::new(1, 1, Waveform::Otfs).unwrap();
        let h = ChannelMatrix::identity(1);
        let g = 9.0;
        let p = mmse_products_dl(&h, &a, 1.0, g).unwrap();
        assert!((p.b[(0, 0)].re - g / (g + 1.0)).abs() < 1e-14);
        let hi = mmse_products_dl(&h, &a, 1.0, 1e12).unwrap();
        assert!((hi.b[(0, 0)].re - 1.0).abs() < 1e-4);
        assert!(mmse_products_dl(&h, &a, 1.0, f64::INFINITY).is_err());
    }
}
