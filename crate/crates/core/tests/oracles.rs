//! LMMSE matrices and SINR formulas against independent constructions.

mod common;

use common::*;
use nalgebra::DMatrix;
use noma_otfs::downlink::{mmse_products_dl, sinr_post_sic_dl, sinr_pre_sic_dl, PowerSplit};
use noma_otfs::fec::{qam_map, Modulation, QamConstellation};
use noma_otfs::grid::{ModulationMatrix, Waveform};
use noma_otfs::rng::{complex_gaussian, rng_from};
use noma_otfs::uplink::{mmse_products_ul, sinr_ul, UplinkConfig};
use noma_otfs::C64;
use rand::Rng;

/// `W = E[d r†] E[r r†]⁻¹` for `r = Σ_k Φ_k d_k + n`, solved by LU.
fn wiener(desired: &DMatrix<C64>, all: &[DMatrix<C64>], noise_var: f64) -> DMatrix<C64> {
    let n = desired.nrows();
    let mut rrr = DMatrix::<C64>::identity(n, n) * C64::new(noise_var, 0.0);
    for phi in all {
        rrr += phi * phi.adjoint();
    }
    let cross = desired.adjoint();
    // W R = D† ⇔ R† W† = D
    let wt = rrr.adjoint().lu().solve(&cross.adjoint()).unwrap();
    wt.adjoint()
}

#[test]
fn downlink_equalizer_is_the_wiener_filter() {
    for (seed, wf) in [(1, Waveform::Otfs), (2, Waveform::Ofdm), (3, Waveform::Otfs)] {
        let a = ModulationMatrix::new(4, 2, wf).unwrap();
        let (p, h) = random_channel(seed, 8, 3);
        let ha = dense_h(&p, 8) * a.dense();
        let (beta, gamma) = ([0.8, 0.2], 20.0);
        for (i, b) in beta.iter().enumerate() {
            let prod = mmse_products_dl(&h, &a, *b, gamma).unwrap();
            let phis: Vec<_> = beta.iter().map(|bk| &ha * C64::new(bk.sqrt(), 0.0)).collect();
            let w = wiener(&phis[i], &phis, 1.0 / gamma);
            assert!(max_abs(&(prod.c.clone() - &w)) < 1e-8, "user {i} seed {seed}");
            assert!(max_abs(&(prod.b.clone() - &prod.c * &ha)) < 1e-10);
        }
    }
}

#[test]
fn uplink_equalizer_is_the_wiener_filter_with_colored_noise() {
    let a = ModulationMatrix::new(4, 2, Waveform::Otfs).unwrap();
    let (p1, h1) = random_channel(10, 8, 2);
    let (p2, h2) = random_channel(11, 8, 3);
    let (pw, noise) = ([2.0, 30.0], 0.5);
    let cfg = UplinkConfig::new(pw.to_vec(), noise, vec![h1, h2]).unwrap();
    let ha = [dense_h(&p1, 8) * a.dense(), dense_h(&p2, 8) * a.dense()];
    for i in 0..2 {
        // Users above `i` are already cancelled.
        let phis: Vec<_> = (0..=i).map(|k| &ha[k] * C64::new(pw[k].sqrt(), 0.0)).collect();
        let w = wiener(&phis[i], &phis, noise) * C64::new(pw[i].sqrt(), 0.0);
        let prod = mmse_products_ul(&cfg, &a, i).unwrap();
        assert!(max_abs(&(prod.c - w)) < 1e-8, "user {i}");
    }
}

/// Per-symbol `|b_jj|² / E|d̂_j − b_jj d_j|²` over random data and noise.
fn empirical_sinr(
    c: &DMatrix<C64>,
    gain: &[C64],
    present: &[(DMatrix<C64>, bool)],
    noise_var: f64,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let n = c.nrows();
    let q = QamConstellation::new(Modulation::Qpsk);
    let mut rng = rng_from(seed, &[5]);
    let mut err = vec![0.0; n];
    for _ in 0..draws {
        let mut r = nalgebra::DVector::<C64>::zeros(n);
        let mut own = None;
        for (phi, is_desired) in present {
            let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2u8)).collect();
            let d = nalgebra::DVector::from_vec(qam_map(&bits, &q).unwrap());
            r += phi * &d;
            if *is_desired {
                own = Some(d);
            }
        }
        for v in r.iter_mut() {
            *v += complex_gaussian(&mut rng, noise_var);
        }
        let est = c * r;
        let d = own.unwrap();
        for j in 0..n {
            err[j] += (est[j] - gain[j] * d[j]).norm_sqr();
        }
    }
    (0..n).map(|j| gain[j].norm_sqr() / (err[j] / draws as f64)).collect()
}

#[test]
fn downlink_formula_sinr_matches_monte_carlo() {
    let a = ModulationMatrix::new(4, 4, Waveform::Otfs).unwrap();
    let (p, h) = random_channel(21, 16, 3);
    let ha = dense_h(&p, 16) * a.dense();
    let split = PowerSplit::new(vec![0.75, 0.25], 1.0).unwrap();
    let gamma = 10.0;
    for user in 0..2 {
        let prod = mmse_products_dl(&h, &a, split.beta(user), gamma).unwrap();
        let rows = prod.row_scalars();
        let phis: Vec<_> = (0..2).map(|k| &ha * C64::new(split.beta(k).sqrt(), 0.0)).collect();
        // The data enter scaled by sqrt(β), on top of the sqrt(β) inside C.
        let gain: Vec<C64> = (0..16).map(|j| prod.b[(j, j)] * split.beta(user).sqrt()).collect();
        let pre: Vec<_> = (0..2).map(|k| (phis[k].clone(), k == user)).collect();
        let post: Vec<_> = (user..2).map(|k| (phis[k].clone(), k == user)).collect();
        // Row scalars were formed with the user's own scaling; undo it for the helpers.
        let unit = rows.scaled(1.0 / split.beta(user).sqrt());
        let f_pre = sinr_pre_sic_dl(&unit, &split, 1.0 / gamma, user).unwrap();
        let f_post = sinr_post_sic_dl(&unit, &split, 1.0 / gamma, user).unwrap();
        let e_pre = empirical_sinr(&prod.c, &gain, &pre, 1.0 / gamma, 100_000, 3 + user as u64);
        let e_post = empirical_sinr(&prod.c, &gain, &post, 1.0 / gamma, 100_000, 7 + user as u64);
        for j in 0..16 {
            assert!((db(f_pre[j]) - db(e_pre[j])).abs() < 0.2, "pre user {user} symbol {j}: {} vs {}", f_pre[j], e_pre[j]);
            assert!((db(f_post[j]) - db(e_post[j])).abs() < 0.2, "post user {user} symbol {j}");
        }
    }
}

#[test]
fn uplink_formula_sinr_matches_monte_carlo() {
    let a = ModulationMatrix::new(4, 4, Waveform::Ofdm).unwrap();
    let (p1, h1) = random_channel(31, 16, 3);
    let (p2, h2) = random_channel(32, 16, 2);
    let pw = [3.0, 40.0];
    let cfg = UplinkConfig::new(pw.to_vec(), 1.0, vec![h1, h2]).unwrap();
    let ha = [dense_h(&p1, 16) * a.dense(), dense_h(&p2, 16) * a.dense()];
    for user in 0..2 {
        let prod = mmse_products_ul(&cfg, &a, user).unwrap();
        let f = sinr_ul(&prod.row_scalars(), &cfg, user).unwrap().post;
        let present: Vec<_> = (0..=user).map(|k| (&ha[k] * C64::new(pw[k].sqrt(), 0.0), k == user)).collect();
        let gain: Vec<C64> = (0..16).map(|j| prod.b[(j, j)] * pw[user].sqrt()).collect();
        let e = empirical_sinr(&prod.c, &gain, &present, 1.0, 100_000, 40 + user as u64);
        for j in 0..16 {
            assert!((db(f[j]) - db(e[j])).abs() < 0.2, "user {user} symbol {j}: {} vs {}", f[j], e[j]);
        }
    }
}
