//! Outer coding chain: K=7 convolutional code (133/171 octal) with optional
//! rate-3/4 puncturing, per-symbol block interleaving, Gray QAM mapping,
//! max-log soft demapping and soft-decision Viterbi decoding.
//!
//! LLRs are positive when bit 0 is more likely.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

pub const CONSTRAINT_LENGTH: usize = 7;
pub const GENERATORS: [u32; 2] = [0o133, 0o171];
const MEMORY: usize = CONSTRAINT_LENGTH - 1;
const STATES: usize = 1 << MEMORY;

/// Rate-3/4 keep masks for the two mother-code outputs.
const PUNCTURE_A: [bool; 3] = [true, true, false];
const PUNCTURE_B: [bool; 3] = [true, false, true];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OuterCode {
    #[serde(rename = "none")]
    Uncoded,
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/4")]
    ThreeQuarters,
}

impl OuterCode {
    pub fn rate(self) -> f64 {
        match self {
            OuterCode::Uncoded => 1.0,
            OuterCode::Half => 0.5,
            OuterCode::ThreeQuarters => 0.75,
        }
    }

    /// Coded length for `n_info` payload bits, tail included.
    pub fn coded_len(self, n_info: usize) -> usize {
        let steps = n_info + MEMORY;
        match self {
            OuterCode::Uncoded => n_info,
            OuterCode::Half => 2 * steps,
            OuterCode::ThreeQuarters => (0..steps).map(|i| PUNCTURE_A[i % 3] as usize + PUNCTURE_B[i % 3] as usize).sum(),
        }
    }

    /// Payload bits that fill exactly `n_coded` coded bits.
    pub fn info_len(self, n_coded: usize) -> Result<usize> {
        let n_info = match self {
            OuterCode::Uncoded => Some(n_coded),
            OuterCode::Half => n_coded.is_multiple_of(2).then_some(n_coded / 2).and_then(|s| s.checked_sub(MEMORY)),
            OuterCode::ThreeQuarters => n_coded.is_multiple_of(4).then(|| 3 * n_coded / 4).and_then(|s| s.checked_sub(MEMORY)),
        };
        n_info
            .filter(|&n| self.coded_len(n) == n_coded)
            .ok_or_else(|| Error::InvalidConfig(format!("{n_coded} coded bits do not fit rate {self}")))
    }
}

impl fmt::Display for OuterCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OuterCode::Uncoded => "none",
            OuterCode::Half => "1/2",
            OuterCode::ThreeQuarters => "3/4",
        })
    }
}

impl FromStr for OuterCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "uncoded" => Ok(OuterCode::Uncoded),
            "1/2" => Ok(OuterCode::Half),
            "3/4" => Ok(OuterCode::ThreeQuarters),
            other => Err(Error::Parse(format!("unknown outer code {other:?}"))),
        }
    }
}

fn branch(state: usize, bit: u8) -> (usize, [u8; 2]) {
    let reg = ((bit as u32) << MEMORY) | state as u32;
    let out = GENERATORS.map(|g| ((reg & g).count_ones() & 1) as u8);
    ((reg >> 1) as usize, out)
}

/// Zero-terminated encoding followed by puncturing.
pub fn encode(bits: &[u8], code: OuterCode) -> Vec<u8> {
    if code == OuterCode::Uncoded {
        return bits.to_vec();
    }
    let mut state = 0usize;
    let mut out = Vec::with_capacity(code.coded_len(bits.len()));
    for (i, &b) in bits.iter().chain(std::iter::repeat_n(&0u8, MEMORY)).enumerate() {
        let (next, [a, c]) = branch(state, b & 1);
        state = next;
        let (keep_a, keep_b) = match code {
            OuterCode::ThreeQuarters => (PUNCTURE_A[i % 3], PUNCTURE_B[i % 3]),
            _ => (true, true),
        };
        if keep_a {
            out.push(a);
        }
        if keep_b {
            out.push(c);
        }
    }
    out
}

/// Maximum-likelihood decoding over the full terminated trellis.
pub fn viterbi_decode(llrs: &[f64], code: OuterCode) -> Result<Vec<u8>> {
    if code == OuterCode::Uncoded {
        return Ok(llrs.iter().map(|&l| (l < 0.0) as u8).collect());
    }
    let n_info = code.info_len(llrs.len())?;
    let steps = n_info + MEMORY;

    // depuncture: erased positions carry no information
    let mut pairs = Vec::with_capacity(steps);
    let mut it = llrs.iter().copied();
    for i in 0..steps {
        let (keep_a, keep_b) = match code {
            OuterCode::ThreeQuarters => (PUNCTURE_A[i % 3], PUNCTURE_B[i % 3]),
            _ => (true, true),
        };
        let a = if keep_a { it.next().unwrap_or(0.0) } else { 0.0 };
        let b = if keep_b { it.next().unwrap_or(0.0) } else { 0.0 };
        pairs.push([a, b]);
    }

    let mut table = [[(0usize, [0u8; 2]); 2]; STATES];
    for (s, row) in table.iter_mut().enumerate() {
        *row = [branch(s, 0), branch(s, 1)];
    }
    let mut metric = vec![f64::NEG_INFINITY; STATES];
    metric[0] = 0.0;
    let mut next = vec![f64::NEG_INFINITY; STATES];
    // survivor: predecessor state per (step, state)
    let mut from = vec![0u8; steps * STATES];
    for (t, llr) in pairs.iter().enumerate() {
        next.iter_mut().for_each(|m| *m = f64::NEG_INFINITY);
        let input_limit = if t < n_info { 2 } else { 1 };
        for s in 0..STATES {
            let m = metric[s];
            if m == f64::NEG_INFINITY {
                continue;
            }
            for &(ns, out) in &table[s][..input_limit] {
                // correlation metric: +llr for a 0, -llr for a 1
                let bm = (1.0 - 2.0 * out[0] as f64) * llr[0] + (1.0 - 2.0 * out[1] as f64) * llr[1];
                let cand = m + bm;
                if cand > next[ns] {
                    next[ns] = cand;
                    from[t * STATES + ns] = s as u8;
                }
            }
        }
        std::mem::swap(&mut metric, &mut next);
    }

    let mut state = 0usize;
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        // the newest input bit sits in the top register position
        bits[t] = (state >> (MEMORY - 1)) as u8 & 1;
        state = from[t * STATES + state] as usize;
    }
    bits.truncate(n_info);
    Ok(bits)
}

/// Block interleaver over `n` bits with depth equal to the largest divisor
/// `d` of `n` leaving at least 16 bits per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(n: usize) -> Self {
        let depth = (1..=n).filter(|d| n.is_multiple_of(*d) && n / d >= 16).max().unwrap_or(1);
        Self::with_depth(n, depth)
    }

    /// Input bit `k` goes to position `(n/depth) (k mod depth) + k / depth`.
    pub fn with_depth(n: usize, depth: usize) -> Self {
        assert!(depth > 0 && n.is_multiple_of(depth), "depth must divide the block length");
        let row = n / depth;
        let perm = (0..n).map(|k| row * (k % depth) + k / depth).collect();
        Interleaver { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Applies the permutation block by block.
    pub fn interleave<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        let n = self.perm.len();
        assert_eq!(x.len() % n, 0, "length is not a multiple of the block");
        let mut out = vec![T::default(); x.len()];
        for (src, dst) in x.chunks(n).zip(out.chunks_mut(n)) {
            for (k, &v) in src.iter().enumerate() {
                dst[self.perm[k]] = v;
            }
        }
        out
    }

    pub fn deinterleave<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        let n = self.perm.len();
        assert_eq!(x.len() % n, 0, "length is not a multiple of the block");
        let mut out = vec![T::default(); x.len()];
        for (src, dst) in x.chunks(n).zip(out.chunks_mut(n)) {
            for (k, d) in dst.iter_mut().enumerate() {
                *d = src[self.perm[k]];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    /// Per-axis amplitude levels for each bit pair (or single bit).
    fn axis_levels(self) -> &'static [(u8, f64)] {
        match self {
            Modulation::Qpsk => &[(0, 1.0), (1, -1.0)],
            Modulation::Qam16 => &[(0b00, -3.0), (0b01, -1.0), (0b11, 1.0), (0b10, 3.0)],
        }
    }

    fn axis_scale(self, sigma_d2: f64) -> f64 {
        match self {
            Modulation::Qpsk => (sigma_d2 / 2.0).sqrt(),
            Modulation::Qam16 => (sigma_d2 / 10.0).sqrt(),
        }
    }

    pub fn points(self, sigma_d2: f64) -> Vec<(u8, C64)> {
        let half = self.bits_per_symbol() / 2;
        let scale = self.axis_scale(sigma_d2);
        let levels = self.axis_levels();
        let mut out = Vec::new();
        for &(bi, li) in levels {
            for &(bq, lq) in levels {
                out.push(((bi << half) | bq, C64::new(li * scale, lq * scale)));
            }
        }
        out
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" => Ok(Modulation::Qam16),
            other => Err(Error::Parse(format!("unknown modulation {other:?}"))),
        }
    }
}

/// Gray mapping; the first half of each bit group drives the in-phase axis.
pub fn map_qam(bits: &[u8], scheme: Modulation, sigma_d2: f64) -> Result<Vec<C64>> {
    let m = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(m) {
        return Err(Error::DimensionMismatch {
            expected: bits.len().div_ceil(m) * m,
            found: bits.len(),
        });
    }
    let half = m / 2;
    let scale = scheme.axis_scale(sigma_d2);
    let level = |group: &[u8]| -> f64 {
        let code = group.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1));
        scheme
            .axis_levels()
            .iter()
            .find(|(c, _)| *c == code)
            .map(|&(_, l)| l * scale)
            .expect("every bit pattern has a level")
    };
    Ok(bits
        .chunks(m)
        .map(|c| C64::new(level(&c[..half]), level(&c[half..])))
        .collect())
}

/// Max-log LLRs with per-symbol error variance `cee[i]`.
pub fn soft_demap(symbols: &[C64], cee: &[f64], scheme: Modulation, sigma_d2: f64) -> Result<Vec<f64>> {
    if symbols.len() != cee.len() {
        return Err(Error::DimensionMismatch {
            expected: symbols.len(),
            found: cee.len(),
        });
    }
    let half = scheme.bits_per_symbol() / 2;
    let scale = scheme.axis_scale(sigma_d2);
    let levels = scheme.axis_levels();
    let mut out = Vec::with_capacity(symbols.len() * 2 * half);
    // the constellation is a product of two axes, so the max-log metric
    // separates into per-axis minimizations
    let axis = |y: f64, v: f64, out: &mut Vec<f64>| {
        for bit in 0..half {
            let shift = half - 1 - bit;
            let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
            for &(code, l) in levels {
                let d = (y - l * scale).powi(2);
                if (code >> shift) & 1 == 0 {
                    d0 = d0.min(d);
                } else {
                    d1 = d1.min(d);
                }
            }
            out.push((d1 - d0) / v);
        }
    };
    for (&y, &v) in symbols.iter().zip(cee) {
        let v = v.max(f64::MIN_POSITIVE);
        axis(y.re, v, &mut out);
        axis(y.im, v, &mut out);
    }
    Ok(out)
}
