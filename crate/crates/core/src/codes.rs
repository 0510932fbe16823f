//! Pseudo-random stimulus codes.
//!
//! m-sequences come from a Fibonacci LFSR, Gold codes from XOR-ing a
//! preferred pair of m-sequences, and the stimulus codes from a
//! run-length-limiting modulation that leaves only one-frame (`010`) and
//! two-frame (`0110`) flashes.
//!
//! All correlations use the ±1 encoding (0 → −1, 1 → +1).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Presentation rate of modulated codes.
pub const MODULATED_RATE_HZ: f64 = 60.0;

/// Phase shift (in bits) between the left and right code.
pub const DEFAULT_SHIFT_BITS: usize = 61;

/// An ordered, non-empty binary sequence tagged with its presentation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BitSequence {
    bits: Vec<u8>,
    rate_hz: f64,
    name: String,
}

impl BitSequence {
    pub fn new(bits: Vec<u8>, rate_hz: f64, name: impl Into<String>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("bit sequence must not be empty"));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::invalid(format!(
                "bit sequence holds {} at index {pos}",
                bits[pos]
            )));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::invalid(format!("rate {rate_hz} Hz must be positive")));
        }
        Ok(Self {
            bits,
            rate_hz,
            name: name.into(),
        })
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn from_str_bits(s: &str, rate_hz: f64, name: impl Into<String>) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits, rate_hz, name)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Rotates left: `out[i] = self[(i + shift) % len]`.
    pub fn rotated(&self, shift: usize) -> BitSequence {
        let n = self.bits.len();
        let bits = (0..n).map(|i| self.bits[(i + shift) % n]).collect();
        BitSequence {
            bits,
            rate_hz: self.rate_hz,
            name: self.name.clone(),
        }
    }

    pub fn complement(&self) -> BitSequence {
        BitSequence {
            bits: self.bits.iter().map(|b| b ^ 1).collect(),
            rate_hz: self.rate_hz,
            name: self.name.clone(),
        }
    }

    /// Longest run of consecutive ones, treating the sequence as cyclic.
    pub fn max_cyclic_run_of_ones(&self) -> usize {
        let n = self.bits.len();
        if self.bits.iter().all(|&b| b == 1) {
            return n;
        }
        let mut best = 0;
        let mut run = 0;
        // Two passes handle the run that wraps around the end.
        for i in 0..2 * n {
            if self.bits[i % n] == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        best
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    /// Bits mapped to ±1.
    pub fn bipolar(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b == 1 { 1.0 } else { -1.0 }).collect()
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {} Hz: {}", self.name, self.rate_hz, self.to_bit_string())
    }
}

#[derive(Serialize, Deserialize)]
struct BitSequenceRepr {
    name: String,
    rate_hz: f64,
    bits: String,
}

impl Serialize for BitSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BitSequenceRepr {
            name: self.name.clone(),
            rate_hz: self.rate_hz,
            bits: self.to_bit_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BitSequenceRepr::deserialize(deserializer)?;
        BitSequence::from_str_bits(&repr.bits, repr.rate_hz, repr.name).map_err(serde::de::Error::custom)
    }
}

/// Fibonacci LFSR configuration.
///
/// Stage `k` (1-based) holds bit `k - 1` of `seed`. Each clock outputs the
/// last stage, shifts towards it and feeds the XOR of the tapped stages
/// into stage 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfsrSpec {
    pub degree: u32,
    pub taps: Vec<u32>,
    pub seed: u32,
}

impl LfsrSpec {
    pub fn new(degree: u32, taps: Vec<u32>, seed: u32) -> Result<Self> {
        let spec = Self { degree, taps, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=24).contains(&self.degree) {
            return Err(Error::invalid(format!("LFSR degree {} outside 2..=24", self.degree)));
        }
        if !self.taps.contains(&self.degree) {
            return Err(Error::invalid(format!("taps {:?} must include the degree {}", self.taps, self.degree)));
        }
        if let Some(t) = self.taps.iter().find(|&&t| t == 0 || t > self.degree) {
            return Err(Error::invalid(format!("tap {t} outside 1..={}", self.degree)));
        }
        let mask = (1u32 << self.degree) - 1;
        if self.seed & mask == 0 {
            return Err(Error::invalid("LFSR seed must not be all zeros"));
        }
        if self.seed & !mask != 0 {
            return Err(Error::invalid(format!("seed {:#b} wider than {} stages", self.seed, self.degree)));
        }
        Ok(())
    }

    fn tap_mask(&self) -> u32 {
        self.taps.iter().fold(0, |m, &t| m | 1 << (t - 1))
    }

    fn period(&self) -> usize {
        (1usize << self.degree) - 1
    }
}

/// Default degree-6 preferred pair (x^6 + x + 1 and x^6 + x^5 + x^2 + x + 1
/// in tap notation).
pub fn default_preferred_pair() -> (LfsrSpec, LfsrSpec) {
    (
        LfsrSpec {
            degree: 6,
            taps: vec![6, 1],
            seed: 1,
        },
        LfsrSpec {
            degree: 6,
            taps: vec![6, 5, 2, 1],
            seed: 1,
        },
    )
}

/// Generates one full period of the maximal-length sequence for `spec`.
pub fn lfsr_msequence(spec: &LfsrSpec) -> Result<BitSequence> {
    spec.validate()?;
    let n = spec.degree;
    let taps = spec.tap_mask();
    let expected = spec.period();
    let mut state = spec.seed;
    let mut bits = Vec::with_capacity(expected);
    loop {
        bits.push(((state >> (n - 1)) & 1) as u8);
        let feedback = (state & taps).count_ones() & 1;
        state = ((state << 1) | feedback) & ((1 << n) - 1);
        if state == spec.seed {
            break;
        }
        if bits.len() > expected {
            // Seed lies on a transient of a singular feedback map.
            break;
        }
    }
    if bits.len() != expected {
        return Err(Error::NotPrimitive {
            period: bits.len(),
            expected,
        });
    }
    BitSequence::new(bits, MODULATED_RATE_HZ / 2.0, format!("mseq_d{n}_{:#x}", taps))
}

/// Unnormalised periodic cross-correlation `sum_i a[i] * b[(i + lag) % n]`
/// in ±1 encoding.
fn periodic_xcorr_raw(a: &[u8], b: &[u8], lag: usize) -> i64 {
    let n = a.len();
    (0..n)
        .map(|i| if a[i] == b[(i + lag) % n] { 1 } else { -1 })
        .sum()
}

/// Gold bound `t(n)`.
pub fn gold_bound(degree: u32) -> i64 {
    if degree.is_multiple_of(2) {
        1 + (1 << ((degree + 2) / 2))
    } else {
        1 + (1 << degree.div_ceil(2))
    }
}

/// Builds the Gold family of a preferred pair: both m-sequences followed by
/// `a XOR rot(b, k)` for every shift `k`. Returns `2^n + 1` codes.
pub fn gold_code_set(spec_a: &LfsrSpec, spec_b: &LfsrSpec) -> Result<Vec<BitSequence>> {
    if spec_a.degree != spec_b.degree {
        return Err(Error::invalid(format!(
            "preferred pair needs equal degrees, got {} and {}",
            spec_a.degree, spec_b.degree
        )));
    }
    if spec_a.tap_mask() == spec_b.tap_mask() {
        return Err(Error::invalid("degenerate pair: both LFSRs use the same feedback polynomial"));
    }
    let a = lfsr_msequence(spec_a)?;
    let b = lfsr_msequence(spec_b)?;
    let n = a.len();

    let t = gold_bound(spec_a.degree);
    let allowed: BTreeSet<i64> = [-1, -t, t - 2].into_iter().collect();
    let observed: BTreeSet<i64> = (0..n).map(|k| periodic_xcorr_raw(a.bits(), b.bits(), k)).collect();
    if observed != allowed {
        return Err(Error::NotPreferredPair {
            distinct: observed.len(),
            values: observed.into_iter().collect(),
        });
    }

    let rate = a.rate_hz();
    let mut codes = Vec::with_capacity(n + 2);
    codes.push(a.clone().with_name("gold_00"));
    codes.push(b.clone().with_name("gold_01"));
    for k in 0..n {
        let bits = (0..n).map(|i| a.bits()[i] ^ b.bits()[(i + k) % n]).collect();
        codes.push(BitSequence::new(bits, rate, format!("gold_{:02}", k + 2))?);
    }
    Ok(codes)
}

/// Doubles every bit and XORs the result with the clock `0,1,0,1,…`,
/// so `0 → 01` and `1 → 10`. The output rate is twice the input rate.
pub fn modulate(code: &BitSequence) -> Result<BitSequence> {
    if code.is_empty() {
        return Err(Error::invalid("cannot modulate an empty code"));
    }
    let bits = code.bits().iter().flat_map(|&b| [b, b ^ 1]).collect();
    BitSequence::new(bits, code.rate_hz() * 2.0, code.name())
}

/// Correlation of ±1-mapped `a` with `b` rotated left by `lag`:
/// `(1/n) sum_i a[i] * b[(i + lag) mod n]`. The lag may be negative.
pub fn circular_correlation(a: &BitSequence, b: &BitSequence, lag: i64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "circular correlation needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let lag = lag.rem_euclid(n as i64) as usize;
    Ok(periodic_xcorr_raw(a.bits(), b.bits(), lag) as f64 / n as f64)
}

/// The left code and its phase-shifted copy for the right side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodePair {
    pub left: BitSequence,
    pub right: BitSequence,
    pub shift_bits: usize,
}

impl CodePair {
    /// Code presented for label 0 (left) or 1 (right).
    pub fn for_label(&self, label: u8) -> &BitSequence {
        if label == 0 {
            &self.left
        } else {
            &self.right
        }
    }
}

/// Picks the candidate whose circular autocorrelation at `shift_bits` has
/// the smallest magnitude (lowest index on ties) and pairs it with its
/// shifted copy.
pub fn select_code_pair(codes: &[BitSequence], shift_bits: usize) -> Result<CodePair> {
    let first = codes.first().ok_or_else(|| Error::invalid("no candidate codes"))?;
    let n = first.len();
    if shift_bits == 0 || shift_bits >= n {
        return Err(Error::invalid(format!(
            "shift of {shift_bits} bits is degenerate for {n}-bit codes"
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, code) in codes.iter().enumerate() {
        let rho = circular_correlation(code, code, shift_bits as i64)?.abs();
        if best.is_none_or(|(_, b)| rho < b) {
            best = Some((idx, rho));
        }
    }
    let (idx, _) = best.expect("non-empty candidates");
    let left = codes[idx].clone();
    let right = left
        .rotated(shift_bits)
        .with_name(format!("{}_shift{shift_bits}", left.name()));
    Ok(CodePair {
        left,
        right,
        shift_bits,
    })
}

/// The default stimulus pair: the modulated Gold family of the default
/// preferred pair, with the left code selected at a 61-bit shift.
pub fn default_code_pair() -> Result<CodePair> {
    let (a, b) = default_preferred_pair();
    let modulated = gold_code_set(&a, &b)?
        .iter()
        .map(modulate)
        .collect::<Result<Vec<_>>>()?;
    select_code_pair(&modulated, DEFAULT_SHIFT_BITS)
}
