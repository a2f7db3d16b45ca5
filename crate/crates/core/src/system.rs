//! Drop-based spectral-efficiency Monte-Carlo.
//!
//! Each drop samples one channel per user. The channel is shared by every
//! waveform and scheme of the drop, so comparisons are paired. Row scalars are
//! computed once per user and waveform at unit scale and reused by every power
//! split, since SINR only depends on `β` through the scalar weights.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ChannelMatrix;
use crate::downlink::{row_scalars_dl, PowerSplit, SinrReport};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ModulationMatrix, Waveform};
use crate::link::{ChannelParams, Direction};
use crate::mmse::{sinr, RowScalars};
use crate::power::{
    fpa, ftpa_avg_snr, ftpa_channel_norm, wsrm_avg_snr, wsrm_instantaneous, InstSinrScalars, Scheme, WsrmWeights,
};
use crate::report::{cdf_data, fmt_f64, schema_line, write_file};
use crate::rng::rng_from;
use crate::stats::{empirical_cdf, mean, percentile};
use crate::uplink::{equalizer_ul, sinr_ul, UplinkConfig};

const STREAM_CHANNEL: u64 = 2;

#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Dimensions and prefix; the waveform field is replaced per sweep entry.
    pub grid: GridSpec,
    pub direction: Direction,
    pub channel: ChannelParams,
    pub waveforms: Vec<Waveform>,
    /// Linear average SNRs in ascending order.
    pub snrs: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Splits evaluated under [`Scheme::Fixed`].
    pub fixed_splits: Vec<Vec<f64>>,
    pub weights: WsrmWeights,
    pub symbol_stat: SymbolStat,
    pub drops: usize,
    pub seed: u64,
}

/// How per-symbol SINRs of one frame become a user rate.
///
/// The default reads one reference symbol, so per-symbol fading stays visible
/// in the drop distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolStat {
    /// `log2(1 + mean_j SINR_j)`.
    MeanSinr,
    /// `mean_j log2(1 + SINR_j)`.
    MeanRate,
    /// `log2(1 + SINR_j)` of one reference symbol.
    Symbol(usize),
}

impl SymbolStat {
    pub fn rate(self, sinr: &[f64]) -> f64 {
        match self {
            SymbolStat::MeanSinr => (1.0 + sinr.iter().sum::<f64>() / sinr.len().max(1) as f64).log2(),
            SymbolStat::MeanRate => sinr.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / sinr.len().max(1) as f64,
            SymbolStat::Symbol(j) => (1.0 + sinr.get(j).copied().unwrap_or(0.0)).log2(),
        }
    }
}

impl Default for SymbolStat {
    fn default() -> Self {
        SymbolStat::Symbol(0)
    }
}

impl fmt::Display for SymbolStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolStat::MeanSinr => f.write_str("mean_sinr"),
            SymbolStat::MeanRate => f.write_str("mean_rate"),
            SymbolStat::Symbol(j) => write!(f, "symbol:{j}"),
        }
    }
}

impl FromStr for SymbolStat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_sinr" => Ok(SymbolStat::MeanSinr),
            "mean_rate" => Ok(SymbolStat::MeanRate),
            _ => s
                .strip_prefix("symbol:")
                .and_then(|j| j.parse().ok())
                .map(SymbolStat::Symbol)
                .ok_or_else(|| Error::Config(format!("unknown symbol statistic `{s}`"))),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::Config("system.drops must be at least 1".into()));
        }
        if let SymbolStat::Symbol(j) = self.symbol_stat {
            if j >= self.grid.size() {
                return Err(Error::Config(format!("system.symbol_stat: symbol {j} outside a {}-symbol frame", self.grid.size())));
            }
        }
        if self.waveforms.is_empty() {
            return Err(Error::Config("system.waveforms is empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("system.schemes is empty".into()));
        }
        crate::downlink::check_user_order(&self.snrs)?;
        let k = self.snrs.len();
        for s in &self.schemes {
            let ok = match (self.direction, s) {
                (_, Scheme::Oma) => true,
                (Direction::Uplink, Scheme::Fixed) => true,
                (Direction::Uplink, other) => {
                    return Err(Error::Config(format!(
                        "system.schemes: `{other}` is a downlink power allocation; the uplink supports `oma` and `fixed`"
                    )))
                }
                (Direction::Downlink, Scheme::Fixed) => !self.fixed_splits.is_empty(),
                (Direction::Downlink, Scheme::WsrmAvgSnr | Scheme::WsrmInst) => k == 2,
                _ => true,
            };
            if !ok {
                return Err(Error::Config(match s {
                    Scheme::Fixed => "system.fixed_splits must list at least one split for `fixed`".into(),
                    _ => format!("system.schemes: `{s}` needs exactly two users, got {k}"),
                }));
            }
        }
        if self.direction == Direction::Downlink && self.schemes.contains(&Scheme::Fixed) {
            for f in &self.fixed_splits {
                if f.len() != k {
                    return Err(Error::Config(format!("system.fixed_splits entry {f:?} needs {k} fractions")));
                }
                fpa(f, 1.0)?;
            }
        }
        Ok(())
    }

    /// Scheme labels in emission order, one per fixed split.
    pub fn labels(&self) -> Vec<String> {
        self.schemes
            .iter()
            .flat_map(|s| match (s, self.direction) {
                (Scheme::Fixed, Direction::Downlink) => {
                    self.fixed_splits.iter().map(|f| fixed_label(f)).collect::<Vec<_>>()
                }
                _ => vec![s.as_str().to_string()],
            })
            .collect()
    }
}

fn fixed_label(f: &[f64]) -> String {
    let parts: Vec<String> = f.iter().map(|b| format!("{b}")).collect();
    format!("fixed_{}", parts.join("_"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeSample {
    pub drop: usize,
    pub waveform: Waveform,
    pub scheme: String,
    /// Per-user rates in bps/Hz; under OMA each is already scaled by its share.
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeSummary {
    pub mean: f64,
    /// 5th percentile of the sum rate.
    pub outage5: f64,
    pub count: usize,
}

/// Mean and 5 % outage of a set of sum rates.
pub fn summarize(sum_rates: &[f64]) -> Result<SeSummary> {
    Ok(SeSummary { mean: mean(sum_rates)?, outage5: percentile(sum_rates, 0.05)?, count: sum_rates.len() })
}

/// Sum rates grouped by waveform and scheme label, in first-seen order.
pub fn group_rates(samples: &[SeSample]) -> Vec<((Waveform, String), Vec<f64>)> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(Waveform, String), Vec<f64>> = BTreeMap::new();
    for s in samples {
        let key = (s.waveform, s.scheme.clone());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(s.sum_rate);
    }
    order.into_iter().map(|k| {
        let v = groups.remove(&k).unwrap_or_default();
        (k, v)
    }).collect()
}

pub fn summarize_groups(samples: &[SeSample]) -> Result<Vec<(Waveform, String, SeSummary)>> {
    group_rates(samples)
        .into_iter()
        .map(|((w, s), v)| Ok((w, s, summarize(&v)?)))
        .collect()
}

fn single_user_rate(stat: SymbolStat, rows: &RowScalars, power: f64, noise: f64) -> f64 {
    let s: Vec<f64> = (0..rows.len())
        .map(|j| sinr(power * rows.diag[j], power * rows.isi(j) + noise * rows.noise[j]))
        .collect();
    stat.rate(&s)
}

fn dl_noma(stat: SymbolStat, rows: &[RowScalars], split: &PowerSplit, noise: &[f64], snrs: &[f64]) -> Result<Vec<f64>> {
    (0..rows.len())
        .map(|u| Ok(stat.rate(&SinrReport::downlink(&rows[u], split, noise[u], u, snrs)?.post)))
        .collect()
}

fn drop_samples(cfg: &SystemConfig, drop: usize) -> Result<Vec<SeSample>> {
    let k = cfg.snrs.len();
    let n = cfg.grid.size();
    let channels: Vec<ChannelMatrix> = (0..k)
        .map(|u| {
            let paths = cfg.channel.sample(&cfg.grid, &mut rng_from(cfg.seed, &[drop as u64, STREAM_CHANNEL, u as u64]));
            ChannelMatrix::from_paths(n, &paths.paths)
        })
        .collect::<Result<_>>()?;
    let p = 1.0;
    let noise: Vec<f64> = cfg.snrs.iter().map(|g| p / g).collect();
    let mut out = Vec::new();
    for &wf in &cfg.waveforms {
        let a = ModulationMatrix::new(cfg.grid.m(), cfg.grid.n(), wf)?;
        // Isolated-user statistics serve OMA and every downlink split.
        let solo: Vec<RowScalars> =
            (0..k).map(|u| row_scalars_dl(&channels[u], &a, cfg.snrs[u])).collect::<Result<_>>()?;
        let mut push = |scheme: String, user_rates: Vec<f64>| {
            let sum_rate = user_rates.iter().sum();
            out.push(SeSample { drop, waveform: wf, scheme, user_rates, sum_rate });
        };
        match cfg.direction {
            Direction::Downlink => {
                for &s in &cfg.schemes {
                    let splits: Vec<(String, PowerSplit)> = match s {
                        Scheme::Oma => {
                            let r = (0..k).map(|u| single_user_rate(cfg.symbol_stat, &solo[u], p, noise[u]) / k as f64).collect();
                            push(s.as_str().into(), r);
                            continue;
                        }
                        Scheme::Fixed => cfg
                            .fixed_splits
                            .iter()
                            .map(|f| Ok((fixed_label(f), fpa(f, p)?)))
                            .collect::<Result<_>>()?,
                        Scheme::FtpaAvgSnr => vec![(s.as_str().into(), ftpa_avg_snr(&cfg.snrs, p)?)],
                        Scheme::FtpaChannelNorm => {
                            let hs: Vec<&ChannelMatrix> = channels.iter().collect();
                            vec![(s.as_str().into(), ftpa_channel_norm(&hs, p)?)]
                        }
                        Scheme::WsrmAvgSnr => {
                            vec![(s.as_str().into(), wsrm_avg_snr(cfg.weights, cfg.snrs[0], cfg.snrs[1], p)?)]
                        }
                        Scheme::WsrmInst => {
                            let sc = match cfg.symbol_stat {
                                SymbolStat::Symbol(j) => InstSinrScalars::at_symbol(&solo[0], &solo[1], p, noise[0], noise[1], j),
                                _ => InstSinrScalars::averaged(&solo[0], &solo[1], p, noise[0], noise[1]),
                            };
                            vec![(s.as_str().into(), wsrm_instantaneous(cfg.weights, &sc, p)?)]
                        }
                    };
                    for (label, split) in splits {
                        push(label, dl_noma(cfg.symbol_stat, &solo, &split, &noise, &cfg.snrs)?);
                    }
                }
            }
            Direction::Uplink => {
                let ul = UplinkConfig::new(cfg.snrs.clone(), 1.0, channels.clone())?;
                for &s in &cfg.schemes {
                    if s == Scheme::Oma {
                        let r = (0..k).map(|u| single_user_rate(cfg.symbol_stat, &solo[u], cfg.snrs[u], 1.0) / k as f64).collect();
                        push(s.as_str().into(), r);
                        continue;
                    }
                    let reports = (0..k)
                        .map(|u| {
                            let eq = equalizer_ul(&ul, &a, u)?;
                            let cross: Vec<&ChannelMatrix> = ul.channels[..u].iter().collect();
                            sinr_ul(&eq.row_scalars(&cross), &ul, u)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    push(s.as_str().into(), reports.iter().map(|r| cfg.symbol_stat.rate(&r.post)).collect());
                }
            }
        }
    }
    Ok(out)
}

/// All samples, ordered by drop, then waveform, then scheme label.
pub fn run_system_mc(cfg: &SystemConfig) -> Result<Vec<SeSample>> {
    cfg.validate()?;
    let per_drop: Vec<Vec<SeSample>> = (0..cfg.drops)
        .into_par_iter()
        .map(|d| drop_samples(cfg, d).map_err(|e| Error::Drop { drop: d, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    Ok(per_drop.into_iter().flatten().collect())
}

pub fn samples_csv(samples: &[SeSample]) -> String {
    let k = samples.first().map_or(0, |s| s.user_rates.len());
    let mut s = schema_line("se-samples");
    s.push_str("drop,waveform,scheme");
    for u in 1..=k {
        let _ = write!(s, ",user{u}");
    }
    s.push_str(",sum\n");
    for x in samples {
        let _ = write!(s, "{},{},{}", x.drop, x.waveform, x.scheme);
        for r in &x.user_rates {
            let _ = write!(s, ",{}", fmt_f64(*r));
        }
        let _ = writeln!(s, ",{}", fmt_f64(x.sum_rate));
    }
    s
}

pub fn summary_csv(groups: &[(Waveform, String, SeSummary)]) -> String {
    let mut s = schema_line("se-summary");
    s.push_str("waveform,scheme,mean,outage5,count\n");
    for (w, name, g) in groups {
        let _ = writeln!(s, "{w},{name},{},{},{}", fmt_f64(g.mean), fmt_f64(g.outage5), g.count);
    }
    s
}

/// Human-readable table of the summaries.
pub fn summary_table(groups: &[(Waveform, String, SeSummary)]) -> String {
    let mut s = format!("{:<8} {:<24} {:>10} {:>10} {:>6}\n", "waveform", "scheme", "mean", "outage5", "drops");
    for (w, name, g) in groups {
        let _ = writeln!(s, "{:<8} {:<24} {:>10.4} {:>10.4} {:>6}", w.as_str(), name, g.mean, g.outage5, g.count);
    }
    s
}

/// Write samples, summary and one CDF data file per group into `dir`.
pub fn write_system_outputs(dir: &Path, samples: &[SeSample]) -> Result<Vec<PathBuf>> {
    let groups = summarize_groups(samples)?;
    let mut written = vec![dir.join("se_samples.csv"), dir.join("se_summary.csv")];
    write_file(&written[0], &samples_csv(samples))?;
    write_file(&written[1], &summary_csv(&groups))?;
    for ((w, name), rates) in group_rates(samples) {
        let path = dir.join(format!("cdf_{w}_{name}.dat"));
        write_file(&path, &cdf_data(&format!("{w} {name}"), &empirical_cdf(&rates)))?;
        written.push(path);
    }
    Ok(written)
}
