//! Sample statistics for spectral-efficiency reports.

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Degenerate("mean of an empty sample".into()));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Empirical quantile with linear interpolation between order statistics,
/// at position `q·(n−1)` of the sorted sample.
pub fn percentile(v: &[f64], q: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Degenerate("percentile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile must lie in [0, 1], got {q}")));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

/// Points `(x, F(x))` of the empirical CDF, one per sample.
pub fn empirical_cdf(v: &[f64]) -> Vec<(f64, f64)> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fifth_percentile_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 0.05).unwrap() - 5.95).abs() < 1e-12);
        assert!(percentile(&[], 0.05).is_err());
    }

    #[test]
    fn constant_sample() {
        let v = vec![2.5; 30];
        assert_eq!(mean(&v).unwrap(), 2.5);
        assert_eq!(percentile(&v, 0.05).unwrap(), 2.5);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in prop::collection::vec(-10.0f64..10.0, 1..50), seed in any::<u64>()) {
            let p = percentile(&v, 0.05).unwrap();
            let m = mean(&v).unwrap();
            use rand::seq::SliceRandom;
            v.shuffle(&mut crate::rng::rng_from(seed, &[]));
            prop_assert_eq!(percentile(&v, 0.05).unwrap(), p);
            prop_assert!((mean(&v).unwrap() - m).abs() < 1e-12);
        }
    }
}
