//! Quasi-cyclic LDPC code with systematic encoding and flooding min-sum decoding.
//!
//! LLRs follow the soft demapper: positive values favour bit 1, and the final
//! decision is `c = 1` iff the total LLR is `≥ 0`. Messages are exchanged
//! internally in the negated domain (positive favours 0), in which the
//! check-node sign rule is the usual product of signs for every check degree.

use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};

const WLAN_648_R23: &str = include_str!("../../assets/wlan_n648_r23.txt");

pub const DEFAULT_MAX_ITER: usize = 50;

type Word = u64;

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

fn get_bit(row: &[Word], i: usize) -> bool {
    row[i / 64] >> (i % 64) & 1 == 1
}

fn flip_bit(row: &mut [Word], i: usize) {
    row[i / 64] ^= 1 << (i % 64);
}

/// Parse a base matrix where each entry is a shift or `-`.
pub fn parse_base_matrix(text: &str) -> Result<Vec<Vec<Option<usize>>>> {
    let rows: Vec<Vec<Option<usize>>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| match t {
                    "-" => Ok(None),
                    v => v.parse().map(Some).map_err(|_| Error::Parse(format!("base row {}: bad entry `{v}`", i + 1))),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Parse("base matrix rows must be nonempty and of equal width".into()));
    }
    Ok(rows)
}

/// Expand a base matrix into per-check column lists.
pub fn expand_base(base: &[Vec<Option<usize>>], z: usize) -> Vec<Vec<usize>> {
    let mut checks = Vec::with_capacity(base.len() * z);
    for brow in base {
        for r in 0..z {
            let cols = brow
                .iter()
                .enumerate()
                .filter_map(|(bc, s)| s.map(|s| bc * z + (r + s) % z))
                .collect();
            checks.push(cols);
        }
    }
    checks
}

/// Binary linear block code defined by a sparse parity-check matrix.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    checks: Vec<Vec<usize>>,
    /// Edge variable indices, grouped by check.
    edge_var: Vec<u32>,
    check_start: Vec<usize>,
    /// Row `i` gives parity bit `k+i` as the parity of `gen[i] & msg`.
    gen: Vec<Vec<Word>>,
    pub max_iter: usize,
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// The length-648, rate-2/3 WLAN code, lifting factor 27.
    pub fn wlan_648_r23() -> Self {
        let base = parse_base_matrix(WLAN_648_R23).expect("embedded base matrix parses");
        Self::from_checks(648, expand_base(&base, 27)).expect("embedded code is encodable")
    }

    /// Build a code from check rows; the last `m` columns must form an invertible parity part.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self> {
        let m = checks.len();
        if m == 0 || m >= n {
            return Err(Error::Config(format!("need 0 < checks < length, got {m} checks for length {n}")));
        }
        if checks.iter().flatten().any(|&c| c >= n) {
            return Err(Error::Config("check references a column outside the code".into()));
        }
        let k = n - m;
        let gen = systematic_parity(n, k, &checks)?;
        let mut edge_var = Vec::new();
        let mut check_start = vec![0];
        for row in &checks {
            edge_var.extend(row.iter().map(|&v| v as u32));
            check_start.push(edge_var.len());
        }
        Ok(Self { n, k, checks, edge_var, check_start, gen, max_iter: DEFAULT_MAX_ITER })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn message_len(&self) -> usize {
        self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    /// Systematic codeword `[msg | parity]`.
    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>> {
        check_len("LDPC message", self.k, msg.len())?;
        let mut packed = vec![0 as Word; words(self.k)];
        for (i, &b) in msg.iter().enumerate() {
            if b & 1 == 1 {
                flip_bit(&mut packed, i);
            }
        }
        let mut out = msg.iter().map(|b| b & 1).collect::<Vec<u8>>();
        out.extend(self.gen.iter().map(|g| {
            let ones: u32 = g.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            (ones & 1) as u8
        }));
        Ok(out)
    }

    pub fn syndrome_is_zero(&self, bits: &[u8]) -> bool {
        bits.len() == self.n && self.checks.iter().all(|row| row.iter().fold(0u8, |acc, &v| acc ^ bits[v]) & 1 == 0)
    }

    /// Plain min-sum with a flooding schedule.
    pub fn decode_minsum(&self, llrs: &[f64], max_iter: usize) -> Result<DecodeOutcome> {
        check_len("LDPC LLRs", self.n, llrs.len())?;
        if llrs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("LLRs must be finite".into()));
        }
        let channel: Vec<f64> = llrs.iter().map(|v| -v).collect();
        let mut post = channel.clone();
        let mut c2v = vec![0.0; self.edge_var.len()];
        let mut bits = vec![0u8; self.n];
        let decide = |post: &[f64], bits: &mut [u8]| {
            for (b, &p) in bits.iter_mut().zip(post) {
                *b = u8::from(p <= 0.0);
            }
        };
        if max_iter == 0 {
            decide(&post, &mut bits);
            let converged = self.syndrome_is_zero(&bits);
            return Ok(DecodeOutcome { bits, converged, iterations: 0 });
        }
        let mut v2c: Vec<f64> = Vec::with_capacity(32);
        for it in 1..=max_iter {
            let mut next = channel.clone();
            for c in 0..self.checks.len() {
                let (s, e) = (self.check_start[c], self.check_start[c + 1]);
                v2c.clear();
                v2c.extend((s..e).map(|ei| post[self.edge_var[ei] as usize] - c2v[ei]));
                let mut negative = false;
                let (mut min1, mut min2, mut arg) = (f64::INFINITY, f64::INFINITY, 0);
                for (t, &m) in v2c.iter().enumerate() {
                    negative ^= m < 0.0;
                    let a = m.abs();
                    if a < min1 {
                        min2 = min1;
                        min1 = a;
                        arg = t;
                    } else if a < min2 {
                        min2 = a;
                    }
                }
                for (t, &m) in v2c.iter().enumerate() {
                    let mag = if t == arg { min2 } else { min1 };
                    let neg = negative ^ (m < 0.0);
                    let msg = if neg { -mag } else { mag };
                    let ei = s + t;
                    c2v[ei] = msg;
                    next[self.edge_var[ei] as usize] += msg;
                }
            }
            post = next;
            decide(&post, &mut bits);
            if self.syndrome_is_zero(&bits) {
                return Ok(DecodeOutcome { bits, converged: true, iterations: it });
            }
        }
        Ok(DecodeOutcome { bits, converged: false, iterations: max_iter })
    }

    /// MacKay alist text for the parity-check matrix.
    pub fn to_alist(&self) -> String {
        let m = self.checks.len();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for (r, row) in self.checks.iter().enumerate() {
            for &c in row {
                cols[c].push(r);
            }
        }
        let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.checks.iter().map(Vec::len).max().unwrap_or(0);
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{} {}", self.n, m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let _ = writeln!(s, "{}", join(&cols.iter().map(Vec::len).collect::<Vec<_>>()));
        let _ = writeln!(s, "{}", join(&self.checks.iter().map(Vec::len).collect::<Vec<_>>()));
        let lists = cols.iter().map(|l| (l, max_col)).chain(self.checks.iter().map(|l| (l, max_row)));
        for (list, width) in lists {
            let mut sorted: Vec<usize> = list.iter().map(|x| x + 1).collect();
            sorted.sort_unstable();
            sorted.resize(width, 0);
            let _ = writeln!(s, "{}", join(&sorted));
        }
        s
    }

    /// Parse MacKay alist text (the row lists are authoritative).
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("alist: bad token `{t}`"))));
        let mut next = || nums.next().unwrap_or_else(|| Err(Error::Parse("alist: truncated".into())));
        let (n, m) = (next()?, next()?);
        let (max_col, max_row) = (next()?, next()?);
        let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        for &w in &col_w {
            for _ in 0..max_col.max(w) {
                next()?;
            }
        }
        let mut checks = Vec::with_capacity(m);
        for &w in &row_w {
            let mut row = Vec::with_capacity(w);
            for t in 0..max_row.max(w) {
                let v = next()?;
                if t < w {
                    if v == 0 || v > n {
                        return Err(Error::Parse(format!("alist: column index {v} out of range")));
                    }
                    row.push(v - 1);
                }
            }
            checks.push(row);
        }
        Self::from_checks(n, checks)
    }
}

/// `H_p⁻¹ H_s` over GF(2), one packed row per parity bit.
fn systematic_parity(n: usize, k: usize, checks: &[Vec<usize>]) -> Result<Vec<Vec<Word>>> {
    let m = n - k;
    let (wp, ws) = (words(m), words(k));
    // Augmented rows [H_p | H_s], reduced to [I | H_p⁻¹ H_s].
    let mut hp: Vec<Vec<Word>> = vec![vec![0; wp]; m];
    let mut hs: Vec<Vec<Word>> = vec![vec![0; ws]; m];
    for (r, row) in checks.iter().enumerate() {
        for &c in row {
            if c >= k {
                flip_bit(&mut hp[r], c - k);
            } else {
                flip_bit(&mut hs[r], c);
            }
        }
    }
    for col in 0..m {
        let Some(piv) = (col..m).find(|&r| get_bit(&hp[r], col)) else {
            return Err(Error::Unsupported(format!("parity part is singular at column {col}")));
        };
        hp.swap(col, piv);
        hs.swap(col, piv);
        let (pr, sr) = (hp[col].clone(), hs[col].clone());
        for r in 0..m {
            if r != col && get_bit(&hp[r], col) {
                hp[r].iter_mut().zip(&pr).for_each(|(a, b)| *a ^= b);
                hs[r].iter_mut().zip(&sr).for_each(|(a, b)| *a ^= b);
            }
        }
    }
    Ok(hs)
}

/// GF(2) rank of a set of check rows.
pub fn gf2_rank(n: usize, checks: &[Vec<usize>]) -> usize {
    let w = words(n);
    let mut rows: Vec<Vec<Word>> = checks
        .iter()
        .map(|r| {
            let mut v = vec![0; w];
            r.iter().for_each(|&c| flip_bit(&mut v, c));
            v
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        if let Some(p) = (rank..rows.len()).find(|&r| get_bit(&rows[r], col)) {
            rows.swap(rank, p);
            let pr = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && get_bit(row, col) {
                    row.iter_mut().zip(&pr).for_each(|(a, b)| *a ^= b);
                }
            }
            rank += 1;
        }
    }
    rank
}

/// True when the lifted base matrix has a cycle of length four.
pub fn has_four_cycle(base: &[Vec<Option<usize>>], z: usize) -> bool {
    let cols = base[0].len();
    for i in 0..base.len() {
        for j in i + 1..base.len() {
            for a in 0..cols {
                for b in a + 1..cols {
                    if let (Some(p), Some(q), Some(r), Some(s)) = (base[i][a], base[i][b], base[j][a], base[j][b]) {
                        if (p + z - q + s + z - r) % z == 0 {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

pub fn embedded_base_matrix() -> Vec<Vec<Option<usize>>> {
    parse_base_matrix(WLAN_648_R23).expect("embedded base matrix parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embedded_code_structure() {
        let base = embedded_base_matrix();
        assert_eq!((base.len(), base[0].len()), (8, 24));
        assert!(base.iter().all(|r| r.iter().filter(|e| e.is_some()).count() == 11));
        assert!(!has_four_cycle(&base, 27));
        let code = LdpcCode::wlan_648_r23();
        assert_eq!((code.len(), code.message_len()), (648, 432));
        assert_eq!(gf2_rank(648, code.checks()), 216);
    }

    #[test]
    fn zero_message_gives_zero_codeword() {
        let code = LdpcCode::wlan_648_r23();
        assert!(code.encode(&[0; 432]).unwrap().iter().all(|&b| b == 0));
        assert!(code.encode(&[0; 431]).is_err());
    }

    #[test]
    fn noiseless_llrs_converge_in_one_iteration() {
        let code = LdpcCode::wlan_648_r23();
        let mut rng = crate::rng::rng_from(5, &[]);
        use rand::Rng;
        let msg: Vec<u8> = (0..432).map(|_| rng.random_range(0..2)).collect();
        let cw = code.encode(&msg).unwrap();
        let llr: Vec<f64> = cw.iter().map(|&b| if b == 1 { 20.0 } else { -20.0 }).collect();
        let out = code.decode_minsum(&llr, 50).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.bits, cw);
    }

    #[test]
    fn uninformative_llrs_do_not_converge() {
        let code = LdpcCode::wlan_648_r23();
        let out = code.decode_minsum(&[0.0; 648], 50).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 50);
        // Zero total LLR decides bit 1.
        assert!(out.bits.iter().all(|&b| b == 1));
    }

    #[test]
    fn decision_threshold_is_inclusive_for_bit_one() {
        let code = LdpcCode::wlan_648_r23();
        let mut llr = vec![-5.0; 648];
        llr[3] = 0.0;
        let out = code.decode_minsum(&llr, 0).unwrap();
        assert_eq!(out.bits[3], 1);
        let flipped: Vec<f64> = llr.iter().map(|v| -v).collect();
        let out = code.decode_minsum(&flipped, 0).unwrap();
        assert!(out.bits.iter().all(|&b| b == 1));
    }

    #[test]
    fn alist_round_trip() {
        let code = LdpcCode::wlan_648_r23();
        let text = code.to_alist();
        let back = LdpcCode::from_alist(&text).unwrap();
        assert_eq!(back.checks(), code.checks());
        let msg: Vec<u8> = (0..432).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(back.encode(&msg).unwrap(), code.encode(&msg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn encoding_is_linear_with_zero_syndrome(a in prop::collection::vec(0u8..2, 432), b in prop::collection::vec(0u8..2, 432)) {
            let code = LdpcCode::wlan_648_r23();
            let ca = code.encode(&a).unwrap();
            let cb = code.encode(&b).unwrap();
            prop_assert!(code.syndrome_is_zero(&ca));
            prop_assert_eq!(&ca[..432], &a[..]);
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            let cx: Vec<u8> = ca.iter().zip(&cb).map(|(p, q)| p ^ q).collect();
            prop_assert_eq!(code.encode(&x).unwrap(), cx);
        }

        #[test]
        fn converged_output_is_a_codeword(noise in prop::collection::vec(-3.0f64..3.0, 648)) {
            let code = LdpcCode::wlan_648_r23();
            let llr: Vec<f64> = noise.iter().map(|v| v - 2.0).collect();
            let out = code.decode_minsum(&llr, 20).unwrap();
            if out.converged {
                prop_assert!(code.syndrome_is_zero(&out.bits));
            }
        }
    }
}
