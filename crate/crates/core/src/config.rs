//! TOML scenario files.
//!
//! ```toml
//! [grid]
//! delay_bins = 256
//! doppler_bins = 16
//! subcarrier_spacing_hz = 15000.0
//!
//! [channel]
//! speed_kmph = 500.0
//!
//! [system]
//! snr_db = [15.0, 25.0]
//! drops = 100
//!
//! [[link]]
//! name = "dl-15-25"
//! snr_db = [15.0, 25.0]
//! modulations = ["qpsk", "qpsk"]
//! ```
//!
//! Every section and key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::{default_cp_len, eva_max_delay, kmph_to_mps};
use crate::downlink::PowerSplit;
use crate::error::{Error, Result};
use crate::fec::{Modulation, DEFAULT_MAX_ITER};
use crate::grid::{GridSpec, Waveform};
use crate::link::{avg_sinr_dl, avg_sinr_ul, db_to_linear, select_modulation, ChannelModel, ChannelParams, Direction, LinkConfig};
use crate::power::{Scheme, WsrmWeights};
use crate::system::{SymbolStat, SystemConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    channel: RawChannel,
    #[serde(default)]
    system: RawSystem,
    #[serde(default)]
    link: Vec<RawLink>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    delay_bins: usize,
    doppler_bins: usize,
    subcarrier_spacing_hz: f64,
    cp_len: Option<usize>,
}

impl Default for RawGrid {
    fn default() -> Self {
        Self { delay_bins: 256, doppler_bins: 16, subcarrier_spacing_hz: 15e3, cp_len: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawChannel {
    model: ChannelModel,
    speed_kmph: f64,
    carrier_hz: f64,
}

impl Default for RawChannel {
    fn default() -> Self {
        Self { model: ChannelModel::Eva, speed_kmph: 500.0, carrier_hz: 5.9e9 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSystem {
    direction: Direction,
    waveforms: Vec<Waveform>,
    snr_db: Vec<f64>,
    schemes: Vec<Scheme>,
    fixed_splits: Vec<Vec<f64>>,
    wsrm_weights: [f64; 2],
    symbol_stat: String,
    drops: usize,
    seed: u64,
}

impl Default for RawSystem {
    fn default() -> Self {
        Self {
            direction: Direction::Downlink,
            waveforms: Waveform::ALL.to_vec(),
            snr_db: vec![15.0, 25.0],
            schemes: Scheme::ALL.to_vec(),
            fixed_splits: vec![vec![0.7, 0.3], vec![0.9, 0.1]],
            wsrm_weights: [0.6, 0.4],
            symbol_stat: SymbolStat::default().to_string(),
            drops: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawLink {
    name: Option<String>,
    direction: Direction,
    waveform: Waveform,
    snr_db: Vec<f64>,
    power_split: Vec<f64>,
    modulations: Vec<String>,
    frames: usize,
    max_iter: usize,
    genie_sic: bool,
    seed: u64,
}

impl Default for RawLink {
    fn default() -> Self {
        Self {
            name: None,
            direction: Direction::Downlink,
            waveform: Waveform::Otfs,
            snr_db: vec![15.0, 25.0],
            power_split: vec![0.9, 0.1],
            modulations: vec!["auto".into(), "auto".into()],
            frames: 167,
            max_iter: DEFAULT_MAX_ITER,
            genie_sic: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// One coded-link run with the seed it is replayed from.
#[derive(Debug, Clone)]
pub struct LinkScenario {
    pub config: LinkConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub links: Vec<LinkScenario>,
    pub output_dir: PathBuf,
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

fn two(key: &str, v: &[f64]) -> Result<[f64; 2]> {
    <[f64; 2]>::try_from(v).map_err(|_| key_err(key, format!("expected two values, got {}", v.len())))
}

/// Constellation for one user; `auto` picks from the average SINR and falls
/// back to QPSK below the lowest threshold.
fn resolve_modulation(key: &str, text: &str, sinr_db: f64, waveform: Waveform) -> Result<Modulation> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(select_modulation(sinr_db, waveform).unwrap_or_else(|| {
            log::warn!("{key}: average SINR {sinr_db:.2} dB is below every {waveform} threshold, using qpsk");
            Modulation::Qpsk
        }));
    }
    text.parse().map_err(|e| key_err(key, e))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let g = &raw.grid;
        let mut grid = GridSpec::new(g.delay_bins, g.doppler_bins, g.subcarrier_spacing_hz, Waveform::Otfs)
            .map_err(|e| key_err("grid", e))?;
        let ch = &raw.channel;
        if !(ch.speed_kmph >= 0.0 && ch.speed_kmph.is_finite()) {
            return Err(key_err("channel.speed_kmph", format!("must be nonnegative, got {}", ch.speed_kmph)));
        }
        if !(ch.carrier_hz > 0.0 && ch.carrier_hz.is_finite()) {
            return Err(key_err("channel.carrier_hz", format!("must be positive, got {}", ch.carrier_hz)));
        }
        let channel = ChannelParams { model: ch.model, speed: kmph_to_mps(ch.speed_kmph), carrier_freq: ch.carrier_hz };
        grid.cp_len = match g.cp_len {
            Some(cp) => cp,
            None if ch.model == ChannelModel::Eva => default_cp_len(&grid, eva_max_delay()),
            None => 0,
        };
        if grid.size() > crate::grid::MAX_GRID_SIZE {
            return Err(key_err("grid", format!("M·N = {} exceeds {}", grid.size(), crate::grid::MAX_GRID_SIZE)));
        }

        let s = &raw.system;
        if s.drops == 0 {
            return Err(key_err("system.drops", "must be at least 1"));
        }
        let weights = WsrmWeights::new(s.wsrm_weights[0], s.wsrm_weights[1]).map_err(|e| key_err("system.wsrm_weights", e))?;
        let system = SystemConfig {
            grid: grid.clone(),
            direction: s.direction,
            channel: channel.clone(),
            waveforms: s.waveforms.clone(),
            snrs: s.snr_db.iter().copied().map(db_to_linear).collect(),
            schemes: s.schemes.clone(),
            fixed_splits: s.fixed_splits.clone(),
            weights,
            symbol_stat: s.symbol_stat.parse().map_err(|e| key_err("system.symbol_stat", e))?,
            drops: s.drops,
            seed: s.seed,
        };
        system.validate().map_err(|e| key_err("system", e))?;

        let links = raw
            .link
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let at = |k: &str| format!("link[{i}].{k}");
                let snrs = two(&at("snr_db"), &l.snr_db)?.map(db_to_linear);
                let fractions = two(&at("power_split"), &l.power_split)?;
                if l.direction == Direction::Downlink {
                    PowerSplit::new(fractions.to_vec(), 1.0).map_err(|e| key_err(&at("power_split"), e))?;
                }
                if l.modulations.len() != 2 {
                    return Err(key_err(&at("modulations"), format!("expected two entries, got {}", l.modulations.len())));
                }
                if l.frames == 0 {
                    return Err(key_err(&at("frames"), "must be at least 1"));
                }
                if l.max_iter == 0 {
                    return Err(key_err(&at("max_iter"), "must be at least 1"));
                }
                let sinr = match l.direction {
                    Direction::Downlink => avg_sinr_dl(snrs[0], snrs[1], fractions[0], fractions[1]),
                    Direction::Uplink => avg_sinr_ul(snrs[0], snrs[1]),
                };
                let m0 = resolve_modulation(&at("modulations"), &l.modulations[0], sinr.0, l.waveform)?;
                let m1 = resolve_modulation(&at("modulations"), &l.modulations[1], sinr.1, l.waveform)?;
                Ok(LinkScenario {
                    config: LinkConfig {
                        name: l.name.clone().unwrap_or_else(|| format!("link{i}")),
                        grid: grid.clone().with_waveform(l.waveform),
                        direction: l.direction,
                        channel: channel.clone(),
                        snrs,
                        fractions,
                        modulations: [m0, m1],
                        frames: l.frames,
                        max_iter: l.max_iter,
                        genie_sic: l.genie_sic,
                    },
                    seed: l.seed,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { system, links, output_dir: raw.output.dir })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_toml_str("").expect("built-in defaults are valid")
    }
}
