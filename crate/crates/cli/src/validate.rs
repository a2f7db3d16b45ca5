//! Fast self-checks of the core invariants on small grids.

use noma_otfs::channel::{Path, ChannelMatrix};
use noma_otfs::config::ScenarioConfig;
use noma_otfs::downlink::{mmse_products_dl, row_scalars_dl, sinr_post_sic_dl, sinr_pre_sic_dl};
use noma_otfs::fec::{qam_llr, qam_map, LdpcCode, Modulation, QamConstellation, DEFAULT_MAX_ITER};
use noma_otfs::grid::{add_cyclic_prefix, demodulate, modulate, remove_cyclic_prefix, ModulationMatrix, Waveform};
use noma_otfs::power::{ftpa_avg_snr, wsrm_avg_snr, WsrmWeights};
use noma_otfs::rng::{complex_gaussian, rng_from};
use noma_otfs::{PowerSplit, Result, C64};

/// Outcome of one invariant check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn small_channel(seed: u64, size: usize) -> Result<ChannelMatrix> {
    let mut rng = rng_from(seed, &[7]);
    let taps = [(0, 0), (1, 1), (2, -1), (3, 2)];
    let paths: Vec<Path> = taps
        .iter()
        .map(|&(delay_bin, doppler_bin)| Path { gain: complex_gaussian(&mut rng, 0.25), delay_bin, doppler_bin })
        .collect();
    ChannelMatrix::from_paths(size, &paths)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Every check runs in well under a second.
pub fn validation_suite() -> Vec<Check> {
    let (m, n) = (32, 8);
    let size = m * n;
    vec![
        check("unitary modulation", || {
            let mut worst: f64 = 0.0;
            for wf in Waveform::ALL {
                worst = worst.max(ModulationMatrix::new(m, n, wf)?.unitarity_residual());
            }
            Ok((worst <= 1e-10 * size as f64, format!("max residual {worst:.2e}")))
        }),
        check("modulation and prefix round trip", || {
            let mut rng = rng_from(3, &[1]);
            let d: Vec<C64> = (0..size).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let mut worst: f64 = 0.0;
            for wf in Waveform::ALL {
                let a = ModulationMatrix::new(m, n, wf)?;
                let s = add_cyclic_prefix(&modulate(&a, &d, 2.0)?, 5)?;
                let back = demodulate(&a, &remove_cyclic_prefix(&s, 5)?, 2.0)?;
                worst = back.iter().zip(&d).map(|(x, y)| (x - y).norm()).fold(worst, f64::max);
            }
            Ok((worst < 1e-10, format!("max error {worst:.2e}")))
        }),
        check("structured channel matches dense product", || {
            let h = small_channel(5, size)?;
            let mut rng = rng_from(5, &[2]);
            let x: Vec<C64> = (0..size).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let fast = h.apply(&x)?;
            let d = h.to_dense();
            let err = (0..size)
                .map(|i| (fast[i] - (0..size).map(|k| d[(i, k)] * x[k]).sum::<C64>()).norm())
                .fold(0.0, f64::max);
            Ok((err < 1e-10, format!("max error {err:.2e}")))
        }),
        check("fast equalizer rows match dense Wiener", || {
            let (m, n) = (8, 4);
            let h = small_channel(9, m * n)?;
            let a = ModulationMatrix::new(m, n, Waveform::Otfs)?;
            let fast = row_scalars_dl(&h, &a, 31.6)?;
            let dense = mmse_products_dl(&h, &a, 1.0, 31.6)?.row_scalars();
            let err = max_diff(&fast.diag, &dense.diag)
                .max(max_diff(&fast.row, &dense.row))
                .max(max_diff(&fast.noise, &dense.noise));
            Ok((err < 1e-8, format!("max relative error {err:.2e}")))
        }),
        check("cancellation never lowers SINR", || {
            let a = ModulationMatrix::new(16, 4, Waveform::Otfs)?;
            let split = PowerSplit::new(vec![0.8, 0.2], 1.0)?;
            let mut worst = f64::INFINITY;
            for seed in 0..10 {
                let rows = row_scalars_dl(&small_channel(100 + seed, 64)?, &a, 100.0)?;
                for u in 0..2 {
                    let pre = sinr_pre_sic_dl(&rows, &split, 0.01, u)?;
                    let post = sinr_post_sic_dl(&rows, &split, 0.01, u)?;
                    worst = pre.iter().zip(&post).map(|(p, q)| q - p).fold(worst, f64::min);
                }
            }
            Ok((worst >= -1e-12, format!("min post − pre {worst:.2e}")))
        }),
        check("fractional power at 15/25 dB", || {
            let s = ftpa_avg_snr(&[10f64.powf(1.5), 10f64.powf(2.5)], 1.0)?;
            let ok = (s.fractions[0] - 0.9091).abs() < 1e-4 && (s.fractions[1] - 0.0909).abs() < 1e-4;
            Ok((ok, format!("beta = ({:.4}, {:.4})", s.fractions[0], s.fractions[1])))
        }),
        check("average-SNR WSRM at 15/25 dB", || {
            let w = WsrmWeights::new(0.6, 0.4)?;
            let s = wsrm_avg_snr(w, 10f64.powf(1.5), 10f64.powf(2.5), 1.0)?;
            Ok((s.fractions == [1.0, 0.0], format!("beta = ({}, {})", s.fractions[0], s.fractions[1])))
        }),
        check("noiseless coded round trip", || {
            let code = LdpcCode::wlan_648_r23();
            let mut bad = 0;
            for (i, order) in [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64].into_iter().enumerate() {
                let c = QamConstellation::new(order);
                let msg: Vec<u8> = (0..code.message_len()).map(|t| ((t * 7 + i) % 3 == 0) as u8).collect();
                let cw = code.encode(&msg)?;
                let sym = qam_map(&cw, &c)?;
                let llr = qam_llr(&sym, &vec![1e-3; sym.len()], &c)?;
                let out = code.decode_minsum(&llr.llr[..code.len()], DEFAULT_MAX_ITER)?;
                bad += usize::from(out.bits[..code.message_len()] != msg[..]);
            }
            Ok((bad == 0, format!("{bad} of 3 constellations failed")))
        }),
        check("default scenario parses", || {
            let c = ScenarioConfig::from_toml_str("")?;
            Ok((c.system.grid.size() == 4096, format!("grid {}×{}", c.system.grid.m(), c.system.grid.n())))
        }),
    ]
}
