//! Uplink multiple access with ordered LMMSE-SIC at the base station.
//!
//! Users are indexed in ascending order of average SNR and decoded from the
//! strongest (`K−1`) down to the weakest (`0`). While decoding user `i`, users
//! `0..i` are still present and are whitened with weights `Γ_{i'}/Γ_i`.

use crate::channel::ChannelMatrix;
use crate::downlink::{check_user_order, SinrReport};
use crate::error::{check_len, Error, Result};
use crate::grid::ModulationMatrix;
use crate::mmse::{sinr, EqualizerProducts, MmseEqualizer, RowScalars};
use crate::C64;

#[derive(Debug, Clone)]
pub struct UplinkConfig {
    /// Transmit power `P_i` per user.
    pub powers: Vec<f64>,
    /// Receiver noise variance `σ_n²`.
    pub noise_var: f64,
    pub channels: Vec<ChannelMatrix>,
}

impl UplinkConfig {
    pub fn new(powers: Vec<f64>, noise_var: f64, channels: Vec<ChannelMatrix>) -> Result<Self> {
        check_len("uplink channels", powers.len(), channels.len())?;
        if powers.is_empty() {
            return Err(Error::Config("uplink needs at least one user".into()));
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::Config(format!("noise variance must be positive, got {noise_var}")));
        }
        if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config(format!("transmit powers must be nonnegative: {powers:?}")));
        }
        let n = channels[0].size();
        if channels.iter().any(|h| h.size() != n) {
            return Err(Error::Config("uplink users must share one grid".into()));
        }
        let cfg = Self { powers, noise_var, channels };
        check_user_order(&cfg.snrs())?;
        Ok(cfg)
    }

    /// `Γ_i = P_i/σ_n²`
    pub fn snrs(&self) -> Vec<f64> {
        self.powers.iter().map(|p| p / self.noise_var).collect()
    }

    pub fn users(&self) -> usize {
        self.powers.len()
    }

    /// Users in decoding order, strongest first.
    pub fn decode_order(&self) -> Vec<usize> {
        (0..self.users()).rev().collect()
    }

    fn terms(&self, user: usize) -> Result<(Vec<(&ChannelMatrix, f64)>, f64)> {
        if user >= self.users() {
            return Err(Error::Config(format!("user {user} outside a {}-user uplink", self.users())));
        }
        let g = self.snrs();
        if !(g[user] > 0.0) {
            return Err(Error::Degenerate(format!("user {user} has zero transmit power")));
        }
        let mut terms = vec![(&self.channels[user], 1.0)];
        for k in 0..user {
            terms.push((&self.channels[k], g[k] / g[user]));
        }
        Ok((terms, 1.0 / g[user]))
    }

    fn cross(&self, user: usize) -> Vec<&ChannelMatrix> {
        self.channels[..user].iter().collect()
    }
}

/// `r = Σ_i H_i s_i + n`
pub fn ul_aggregate(tx: &[(&ChannelMatrix, &[C64])], noise_var: f64, seed: u64) -> Result<Vec<C64>> {
    let Some((h0, _)) = tx.first() else {
        return Err(Error::Config("uplink aggregate needs at least one user".into()));
    };
    let n = h0.size();
    let mut r = vec![C64::new(0.0, 0.0); n];
    for (h, s) in tx {
        if h.size() != n {
            return Err(Error::Config("uplink users must share one grid".into()));
        }
        let y = h.apply(s)?;
        r.iter_mut().zip(y).for_each(|(a, b)| *a += b);
    }
    let mut rng = crate::rng::rng_from(seed, &[0x0A66]);
    crate::channel::add_noise(&mut r, noise_var, &mut rng)?;
    Ok(r)
}

/// Dense `C_i = (H_i A)†[H_i H_i† + Σ_{i'<i} (Γ_{i'}/Γ_i) H_{i'} H_{i'}† + I/Γ_i]⁻¹`
/// with `B_ii = C_i H_i A` and cross products `B_ii' = C_i H_{i'} A` for `i' < i`.
pub fn mmse_products_ul(cfg: &UplinkConfig, a: &ModulationMatrix, user: usize) -> Result<EqualizerProducts> {
    let (terms, reg) = cfg.terms(user)?;
    EqualizerProducts::dense(a, &cfg.channels[user], &cfg.cross(user), &terms, reg, 1.0)
}

pub fn equalizer_ul<'a>(cfg: &'a UplinkConfig, a: &'a ModulationMatrix, user: usize) -> Result<MmseEqualizer<'a>> {
    let (terms, reg) = cfg.terms(user)?;
    MmseEqualizer::new(a, &cfg.channels[user], &terms, reg)
}

/// Fast-path row scalars with one cross entry per not-yet-decoded user.
pub fn row_scalars_ul(cfg: &UplinkConfig, a: &ModulationMatrix, user: usize) -> Result<RowScalars> {
    Ok(equalizer_ul(cfg, a, user)?.row_scalars(&cfg.cross(user)))
}

/// Per-symbol uplink SINR; the report carries it as both pre and post values.
pub fn sinr_ul(rows: &RowScalars, cfg: &UplinkConfig, user: usize) -> Result<SinrReport> {
    if user >= cfg.users() {
        return Err(Error::Config(format!("user {user} outside a {}-user uplink", cfg.users())));
    }
    check_len("cross products", user, rows.cross.len())?;
    let p = cfg.powers[user];
    let v: Vec<f64> = (0..rows.len())
        .map(|j| {
            let leak: f64 = (0..user).map(|k| cfg.powers[k] * rows.cross[k][j]).sum();
            sinr(p * rows.diag[j], p * rows.isi(j) + leak + cfg.noise_var * rows.noise[j])
        })
        .collect();
    Ok(SinrReport { user, pre: v.clone(), post: v })
}

/// `Σ_i log2(1 + mean_j Υ^U_ij)`
pub fn ul_sum_rate(reports: &[SinrReport]) -> f64 {
    crate::downlink::dl_sum_rate(reports)
}
