//! LDPC-coded two-user chains with codeword-level interference cancellation.
//!
//! Each frame carries `floor(MN·q_i/648)` codewords per user, zero-padded to the
//! frame. Channels are drawn per frame and per user, signals pass through the
//! prefixed linear time-varying channel, and every receiver uses the exact
//! LMMSE of its stage. Equalizer outputs are normalized by their diagonal gain
//! and fed to the demapper with variance `1/SINR` of the same symbol.
//!
//! Downlink: user 1 decodes its own data with user 2 as noise. User 2 decodes
//! user 1, maps the decoded codeword back to symbols, subtracts it and decodes
//! its own data with the reduced-model equalizer.
//!
//! Uplink: the base station decodes user 2 first, re-encodes the decoded
//! message, subtracts it and then decodes user 1.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, propagate_prefixed, sample_eva_with, ChannelMatrix, PathSet};
use crate::downlink::{check_user_order, sinr_post_sic_dl, sinr_pre_sic_dl, PowerSplit};
use crate::error::{Error, Result};
use crate::fec::{qam_llr, qam_map, LdpcCode, Modulation, QamConstellation};
use crate::grid::{add_cyclic_prefix, remove_cyclic_prefix, GridSpec, ModulationMatrix, Waveform};
use crate::mmse::{MmseEqualizer, RowScalars};
use crate::rng::rng_from;
use crate::uplink::{equalizer_ul, sinr_ul, UplinkConfig};
use crate::C64;

/// Reported in place of `−∞` dB.
pub const SINR_FLOOR_DB: f64 = -100.0;

pub const OTFS_THRESHOLDS_DB: [f64; 3] = [9.5, 15.0, 23.5];
pub const OFDM_THRESHOLDS_DB: [f64; 3] = [10.8, 18.0, 26.0];

fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        10.0 * x.log10()
    } else {
        SINR_FLOOR_DB
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Average downlink SINRs in dB: user 1 with user 2 as Gaussian noise, user 2 after SIC.
pub fn avg_sinr_dl(g1: f64, g2: f64, b1: f64, b2: f64) -> (f64, f64) {
    (to_db(b1 * g1 / (b2 * g1 + 1.0)), to_db(b2 * g2))
}

/// Average uplink SINRs in dB: user 1 after SIC, user 2 with user 1 as noise.
pub fn avg_sinr_ul(g1: f64, g2: f64) -> (f64, f64) {
    (to_db(g1), to_db(g2 / (g1 + 1.0)))
}

/// Highest-order constellation whose threshold the SINR meets.
pub fn select_modulation(sinr_db: f64, waveform: Waveform) -> Option<Modulation> {
    let t = match waveform {
        Waveform::Otfs => OTFS_THRESHOLDS_DB,
        Waveform::Ofdm => OFDM_THRESHOLDS_DB,
    };
    [Modulation::Qam64, Modulation::Qam16, Modulation::Qpsk]
        .into_iter()
        .zip(t.iter().rev())
        .find(|(_, &th)| sinr_db >= th)
        .map(|(m, _)| m)
}

/// `Σ_i R·K_i`
pub fn throughput(rate: f64, bits_per_symbol: &[usize]) -> f64 {
    bits_per_symbol.iter().map(|&k| rate * k as f64).sum()
}

/// `Σ_i R·K_i·(1 − P_e,i)`
pub fn goodput(rate: f64, bits_per_symbol: &[usize], bler: &[f64]) -> f64 {
    bits_per_symbol.iter().zip(bler).map(|(&k, p)| rate * k as f64 * (1.0 - p)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Downlink => "downlink",
            Direction::Uplink => "uplink",
        }
    }
}

/// Channel family used by the harnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    /// EVA profile with Jakes Doppler.
    Eva,
    /// A single static unit-gain path.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub model: ChannelModel,
    /// m/s
    pub speed: f64,
    /// Hz
    pub carrier_freq: f64,
}

impl ChannelParams {
    pub fn eva(speed: f64, carrier_freq: f64) -> Self {
        Self { model: ChannelModel::Eva, speed, carrier_freq }
    }

    pub fn sample<R: Rng + ?Sized>(&self, grid: &GridSpec, rng: &mut R) -> PathSet {
        match self.model {
            ChannelModel::Eva => sample_eva_with(grid, self.speed, self.carrier_freq, rng),
            ChannelModel::Identity => PathSet::flat(C64::new(1.0, 0.0)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkConfig {
    pub name: String,
    pub grid: GridSpec,
    pub direction: Direction,
    pub channel: ChannelParams,
    /// Average SNRs `Γ_1 < Γ_2`, linear.
    pub snrs: [f64; 2],
    /// Downlink power fractions; ignored on the uplink.
    pub fractions: [f64; 2],
    pub modulations: [Modulation; 2],
    pub frames: usize,
    pub max_iter: usize,
    /// Cancel the true transmitted symbols instead of the decoded ones.
    pub genie_sic: bool,
}

impl LinkConfig {
    fn validate(&self) -> Result<()> {
        check_user_order(&self.snrs)?;
        if self.snrs.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config(format!("link SNRs must be positive: {:?}", self.snrs)));
        }
        if self.frames == 0 {
            return Err(Error::Config("link needs at least one frame".into()));
        }
        if self.direction == Direction::Downlink {
            PowerSplit::new(self.fractions.to_vec(), 1.0)?;
        }
        let cp_needed = match self.channel.model {
            ChannelModel::Eva => crate::channel::default_cp_len(&self.grid, crate::channel::eva_max_delay()),
            ChannelModel::Identity => 0,
        };
        if self.grid.cp_len < cp_needed {
            return Err(Error::Config(format!(
                "cyclic prefix of {} samples is shorter than the channel's {cp_needed} delay bins",
                self.grid.cp_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserOutcome {
    pub modulation: Modulation,
    pub codewords_per_frame: usize,
    pub codewords: usize,
    pub errors: usize,
    pub bler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkOutcome {
    pub name: String,
    pub users: Vec<UserOutcome>,
    pub throughput: f64,
    pub goodput: f64,
    pub frames: usize,
}

impl LinkOutcome {
    pub fn csv_header() -> &'static str {
        "scenario,user,modulation,bler,errors,codewords,throughput,goodput,frames"
    }

    pub fn csv_rows(&self) -> String {
        use crate::report::fmt_f64;
        self.users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    self.name,
                    i + 1,
                    u.modulation,
                    fmt_f64(u.bler),
                    u.errors,
                    u.codewords,
                    fmt_f64(self.throughput),
                    fmt_f64(self.goodput),
                    self.frames
                )
            })
            .collect()
    }
}

/// One user's payload for one frame.
struct Payload {
    codewords: Vec<Vec<u8>>,
    symbols: Vec<C64>,
}

fn make_payload<R: Rng>(code: &LdpcCode, c: &QamConstellation, n: usize, rng: &mut R) -> Result<Payload> {
    let q = c.bits_per_symbol();
    let n_cw = n * q / code.len();
    let codewords: Vec<Vec<u8>> = (0..n_cw)
        .map(|_| {
            let msg: Vec<u8> = (0..code.message_len()).map(|_| rng.random_range(0..2u8)).collect();
            code.encode(&msg)
        })
        .collect::<Result<_>>()?;
    let symbols = map_codewords(&codewords, c, n)?;
    Ok(Payload { codewords, symbols })
}

/// Concatenate codewords, zero-pad to the frame and map.
fn map_codewords(codewords: &[Vec<u8>], c: &QamConstellation, n: usize) -> Result<Vec<C64>> {
    let mut bits: Vec<u8> = codewords.iter().flatten().copied().collect();
    bits.resize(n * c.bits_per_symbol(), 0);
    qam_map(&bits, c)
}

/// Normalize equalizer outputs, demap and decode every codeword of the frame.
#[allow(clippy::too_many_arguments)]
fn detect(
    code: &LdpcCode,
    max_iter: usize,
    c: &QamConstellation,
    y: &[C64],
    rows: &RowScalars,
    amplitude: f64,
    sinr: &[f64],
    n_cw: usize,
) -> Result<Vec<Vec<u8>>> {
    let z: Vec<C64> = y.iter().zip(&rows.gain).map(|(v, g)| v / (g * amplitude)).collect();
    let var: Vec<f64> = sinr.iter().map(|s| if *s > 0.0 { (1.0 / s).min(1e12) } else { 1e12 }).collect();
    let llr = qam_llr(&z, &var, c)?;
    (0..n_cw)
        .map(|i| Ok(code.decode_minsum(&llr.llr[i * code.len()..(i + 1) * code.len()], max_iter)?.bits))
        .collect()
}

fn count_errors(sent: &[Vec<u8>], got: &[Vec<u8>]) -> usize {
    sent.iter().zip(got).filter(|(a, b)| a != b).count()
}

struct FrameTally {
    errors: [usize; 2],
    codewords: [usize; 2],
}

/// Prefixed transmission through one user's paths: `H·s` plus the prefix round trip.
fn propagate(paths: &PathSet, grid: &GridSpec, s: &[C64]) -> Result<Vec<C64>> {
    let cp = grid.cp_len;
    let y = propagate_prefixed(&paths.paths, s.len(), cp, &add_cyclic_prefix(s, cp)?)?;
    remove_cyclic_prefix(&y, cp)
}

const STREAM_DATA: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_NOISE: u64 = 3;

fn dl_frame(cfg: &LinkConfig, a: &ModulationMatrix, code: &LdpcCode, consts: &[QamConstellation; 2], seed: u64, frame: u64) -> Result<FrameTally> {
    let grid = &cfg.grid;
    let n = grid.size();
    let p = 1.0;
    let noise = cfg.snrs.map(|g| p / g);
    let split = PowerSplit::new(cfg.fractions.to_vec(), p)?;
    let mut data_rng = rng_from(seed, &[frame, STREAM_DATA]);
    let payload = [make_payload(code, &consts[0], n, &mut data_rng)?, make_payload(code, &consts[1], n, &mut data_rng)?];
    let amp = cfg.fractions.map(|b| (b * p).sqrt());
    let x: Vec<C64> = (0..n).map(|j| payload[0].symbols[j] * amp[0] + payload[1].symbols[j] * amp[1]).collect();
    let s = a.apply_fast(&x)?;

    let mut received = Vec::with_capacity(2);
    let mut channels = Vec::with_capacity(2);
    for u in 0..2u64 {
        let paths = cfg.channel.sample(grid, &mut rng_from(seed, &[frame, STREAM_CHANNEL, u]));
        let mut r = propagate(&paths, grid, &s)?;
        add_noise(&mut r, noise[u as usize], &mut rng_from(seed, &[frame, STREAM_NOISE, u]))?;
        channels.push(ChannelMatrix::from_paths(n, &paths.paths)?);
        received.push(r);
    }
    let n_cw = [payload[0].codewords.len(), payload[1].codewords.len()];

    // User 1: own data, user 2 as interference.
    let eq1 = MmseEqualizer::new(a, &channels[0], &[(&channels[0], 1.0)], noise[0] / p)?;
    let rows1 = eq1.row_scalars(&[]);
    let sinr1 = sinr_pre_sic_dl(&rows1, &split, noise[0], 0)?;
    let dec1 = detect(code, cfg.max_iter, &consts[0], &eq1.equalize(&received[0], 1.0)?, &rows1, amp[0], &sinr1, n_cw[0])?;

    // User 2, stage 1: user 1's data through user 2's channel.
    let eq2 = MmseEqualizer::new(a, &channels[1], &[(&channels[1], 1.0)], noise[1] / p)?;
    let rows2 = eq2.row_scalars(&[]);
    let sinr21 = sinr_pre_sic_dl(&rows2, &split, noise[1], 0)?;
    let regenerated = if cfg.genie_sic {
        payload[0].symbols.clone()
    } else {
        let dec21 = detect(code, cfg.max_iter, &consts[0], &eq2.equalize(&received[1], 1.0)?, &rows2, amp[0], &sinr21, n_cw[0])?;
        map_codewords(&dec21, &consts[0], n)?
    };
    let scaled: Vec<C64> = regenerated.iter().map(|v| v * amp[0]).collect();
    let echo = channels[1].apply(&a.apply_fast(&scaled)?)?;
    let residual: Vec<C64> = received[1].iter().zip(&echo).map(|(r, e)| r - e).collect();

    // User 2, stage 2: reduced model with only its own layer.
    let eq22 = MmseEqualizer::new(a, &channels[1], &[(&channels[1], cfg.fractions[1])], noise[1] / p)?;
    let rows22 = eq22.row_scalars(&[]);
    let sinr22 = sinr_post_sic_dl(&rows22, &split, noise[1], 1)?;
    let dec2 = detect(code, cfg.max_iter, &consts[1], &eq22.equalize(&residual, 1.0)?, &rows22, amp[1], &sinr22, n_cw[1])?;

    Ok(FrameTally {
        errors: [count_errors(&payload[0].codewords, &dec1), count_errors(&payload[1].codewords, &dec2)],
        codewords: n_cw,
    })
}

fn ul_frame(cfg: &LinkConfig, a: &ModulationMatrix, code: &LdpcCode, consts: &[QamConstellation; 2], seed: u64, frame: u64) -> Result<FrameTally> {
    let grid = &cfg.grid;
    let n = grid.size();
    let noise = 1.0;
    let powers = cfg.snrs.map(|g| g * noise);
    let amp = powers.map(f64::sqrt);
    let mut data_rng = rng_from(seed, &[frame, STREAM_DATA]);
    let payload = [make_payload(code, &consts[0], n, &mut data_rng)?, make_payload(code, &consts[1], n, &mut data_rng)?];

    let mut r = vec![C64::new(0.0, 0.0); n];
    let mut channels = Vec::with_capacity(2);
    for u in 0..2 {
        let paths = cfg.channel.sample(grid, &mut rng_from(seed, &[frame, STREAM_CHANNEL, u as u64]));
        let x: Vec<C64> = payload[u].symbols.iter().map(|v| v * amp[u]).collect();
        let y = propagate(&paths, grid, &a.apply_fast(&x)?)?;
        r.iter_mut().zip(y).for_each(|(acc, v)| *acc += v);
        channels.push(ChannelMatrix::from_paths(n, &paths.paths)?);
    }
    add_noise(&mut r, noise, &mut rng_from(seed, &[frame, STREAM_NOISE]))?;
    let ul = UplinkConfig::new(powers.to_vec(), noise, channels)?;
    let n_cw = [payload[0].codewords.len(), payload[1].codewords.len()];

    // Strong user first, weak user whitened.
    let eq2 = equalizer_ul(&ul, a, 1)?;
    let rows2 = eq2.row_scalars(&[&ul.channels[0]]);
    let sinr2 = sinr_ul(&rows2, &ul, 1)?.post;
    let dec2 = detect(code, cfg.max_iter, &consts[1], &eq2.equalize(&r, 1.0)?, &rows2, amp[1], &sinr2, n_cw[1])?;
    let regenerated = if cfg.genie_sic {
        payload[1].symbols.clone()
    } else {
        let words: Vec<Vec<u8>> = dec2.iter().map(|w| code.encode(&w[..code.message_len()])).collect::<Result<_>>()?;
        map_codewords(&words, &consts[1], n)?
    };
    let scaled: Vec<C64> = regenerated.iter().map(|v| v * amp[1]).collect();
    let echo = ul.channels[1].apply(&a.apply_fast(&scaled)?)?;
    let residual: Vec<C64> = r.iter().zip(&echo).map(|(x, e)| x - e).collect();

    let eq1 = equalizer_ul(&ul, a, 0)?;
    let rows1 = eq1.row_scalars(&[]);
    let sinr1 = sinr_ul(&rows1, &ul, 0)?.post;
    let dec1 = detect(code, cfg.max_iter, &consts[0], &eq1.equalize(&residual, 1.0)?, &rows1, amp[0], &sinr1, n_cw[0])?;

    Ok(FrameTally {
        errors: [count_errors(&payload[0].codewords, &dec1), count_errors(&payload[1].codewords, &dec2)],
        codewords: n_cw,
    })
}

fn run_link(cfg: &LinkConfig, seed: u64, direction: Direction) -> Result<LinkOutcome> {
    cfg.validate()?;
    if cfg.direction != direction {
        return Err(Error::Config(format!("scenario `{}` is configured for the {}", cfg.name, cfg.direction.as_str())));
    }
    let a = ModulationMatrix::new(cfg.grid.m(), cfg.grid.n(), cfg.grid.waveform)?;
    let mut code = LdpcCode::wlan_648_r23();
    code.max_iter = cfg.max_iter;
    let consts = cfg.modulations.map(QamConstellation::new);
    if consts.iter().any(|c| cfg.grid.size() * c.bits_per_symbol() < code.len()) {
        return Err(Error::Config(format!("a frame of {} symbols cannot hold one codeword", cfg.grid.size())));
    }
    let tallies: Vec<FrameTally> = (0..cfg.frames as u64)
        .into_par_iter()
        .map(|f| match direction {
            Direction::Downlink => dl_frame(cfg, &a, &code, &consts, seed, f),
            Direction::Uplink => ul_frame(cfg, &a, &code, &consts, seed, f),
        })
        .collect::<Result<_>>()?;
    let mut users = Vec::with_capacity(2);
    for u in 0..2 {
        let errors: usize = tallies.iter().map(|t| t.errors[u]).sum();
        let codewords: usize = tallies.iter().map(|t| t.codewords[u]).sum();
        users.push(UserOutcome {
            modulation: cfg.modulations[u],
            codewords_per_frame: tallies[0].codewords[u],
            codewords,
            errors,
            bler: errors as f64 / codewords as f64,
        });
    }
    let k: Vec<usize> = cfg.modulations.iter().map(|m| m.bits_per_symbol()).collect();
    let bler: Vec<f64> = users.iter().map(|u| u.bler).collect();
    Ok(LinkOutcome {
        name: cfg.name.clone(),
        throughput: throughput(code.rate(), &k),
        goodput: goodput(code.rate(), &k, &bler),
        users,
        frames: cfg.frames,
    })
}

pub fn run_dl_link(cfg: &LinkConfig, seed: u64) -> Result<LinkOutcome> {
    run_link(cfg, seed, Direction::Downlink)
}

pub fn run_ul_link(cfg: &LinkConfig, seed: u64) -> Result<LinkOutcome> {
    run_link(cfg, seed, Direction::Uplink)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_sinr_examples() {
        let (s1, _) = avg_sinr_dl(db_to_linear(15.0), db_to_linear(25.0), 0.9, 0.1);
        assert!((s1 - 8.35).abs() < 0.01, "{s1}");
        let (_, s2) = avg_sinr_dl(db_to_linear(15.0), db_to_linear(35.0), 0.9, 0.1);
        assert!((s2 - 25.0).abs() < 1e-9);
        let (s1, s2) = avg_sinr_dl(db_to_linear(15.0), db_to_linear(25.0), 1.0, 0.0);
        assert!((s1 - 15.0).abs() < 1e-9 && s2 == SINR_FLOOR_DB);
    }

    #[test]
    fn thresholds() {
        assert_eq!(select_modulation(16.0, Waveform::Otfs), Some(Modulation::Qam16));
        assert_eq!(select_modulation(16.0, Waveform::Ofdm), Some(Modulation::Qpsk));
        assert_eq!(select_modulation(9.4, Waveform::Otfs), None);
        assert_eq!(select_modulation(25.0, Waveform::Otfs), Some(Modulation::Qam64));
        assert_eq!(select_modulation(25.0, Waveform::Ofdm), Some(Modulation::Qam16));
    }

    #[test]
    fn throughput_and_goodput_formulas() {
        let r = 2.0 / 3.0;
        assert!((throughput(r, &[2, 6]) - 16.0 / 3.0).abs() < 1e-12);
        assert!((throughput(r, &[2, 2]) - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(throughput(r, &[]), 0.0);
        assert!((goodput(r, &[2, 6], &[0.0, 0.0]) - 16.0 / 3.0).abs() < 1e-12);
        assert_eq!(goodput(r, &[2, 6], &[1.0, 1.0]), 0.0);
        assert!((goodput(r, &[2, 6], &[5.6e-2, 5e-3]) - 5.2387).abs() < 1e-3);
    }
}
