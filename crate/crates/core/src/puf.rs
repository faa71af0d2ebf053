//! Software model of a 64-bit arbiter PUF.
//!
//! Each response bit comes from one additive-delay chain: the challenge is
//! mapped to a ±1 parity feature vector and the chain's stage weights are
//! accumulated into a delay difference whose sign decides the bit. Weights
//! are drawn from a standard-normal stream (ChaCha20 keyed by the instance
//! seed, Box-Muller transform), so the same seed always rebuilds the same
//! device. Evaluation noise, when enabled, is Gaussian on the delay
//! difference and is keyed by `(instance seed, eval seed, challenge)` so a
//! repeated evaluation with the same context is bit-identical.

use std::fmt;
use std::io::{self, BufRead, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::KeyBits;

/// Stages per delay chain. Chains carry `STAGES + 1` weights.
pub const STAGES: usize = 64;
/// Response width in bits (one chain per bit).
pub const RESPONSE_BITS: usize = 64;

/// A 64-bit challenge word. Bit `j` (counting from the least-significant
/// end) drives stage `j` of every chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Challenge(pub u64);

/// A 64-bit response word. Bit `i` comes from chain `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseBits(pub u64);

impl ResponseBits {
    /// Hamming distance to another response.
    pub fn hamming(self, other: ResponseBits) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::LowerHex for Challenge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::LowerHex for ResponseBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PufError {
    #[error("noise sigma must be finite and non-negative, got {0}")]
    InvalidNoiseSigma(f64),
    #[error("bit count must be within 1..=64, got {0}")]
    BitCountOutOfRange(usize),
    #[error("corpus line {line}: {reason}")]
    MalformedCorpusLine { line: usize, reason: String },
}

/// Per-evaluation context: the seed that keys the noise draws and a
/// multiplicative temperature factor applied to the noise sigma
/// (1.0 = nominal operating temperature).
#[derive(Debug, Clone, Copy)]
pub struct EvalContext {
    pub eval_seed: u64,
    pub temperature_factor: f64,
}

impl EvalContext {
    pub fn new(eval_seed: u64) -> Self {
        Self { eval_seed, temperature_factor: 1.0 }
    }

    pub fn with_temperature(eval_seed: u64, temperature_factor: f64) -> Self {
        Self { eval_seed, temperature_factor }
    }
}

/// Standard-normal draws via the Box-Muller transform. Each value consumes
/// exactly two 64-bit words from the underlying ChaCha20 stream, so the
/// sequence is reproducible from the seed alone.
pub(crate) struct NormalStream {
    rng: ChaCha20Rng,
}

impl NormalStream {
    pub(crate) fn from_seed_u64(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub(crate) fn from_seed_bytes(seed: [u8; 32]) -> Self {
        Self { rng: ChaCha20Rng::from_seed(seed) }
    }

    pub(crate) fn next(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
        // u1 in (0, 1] keeps ln() finite; u2 in [0, 1).
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// ±1 parity features of a challenge: `phi[j]` is the product of the signs
/// of challenge bits `j..stages` (bit value 0 maps to +1, 1 to -1) and
/// `phi[stages]` is 1.
pub fn parity_features(challenge: u64, stages: usize) -> Vec<f64> {
    let mut phi = vec![1.0; stages + 1];
    let mut acc = 1.0;
    for j in (0..stages).rev() {
        if (challenge >> j) & 1 == 1 {
            acc = -acc;
        }
        phi[j] = acc;
    }
    phi
}

/// Delay difference accumulated along one chain.
pub fn chain_delta(weights: &[f64], phi: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), phi.len());
    weights.iter().zip(phi).map(|(w, p)| w * p).sum()
}

/// Evaluate a bank of chains over one challenge. `noise` is called once per
/// chain in index order and its value is added to the delay difference.
/// A positive difference yields bit 1; an exact zero resolves to 0.
pub fn eval_chains(
    weights: &[Vec<f64>],
    challenge: u64,
    stages: usize,
    mut noise: impl FnMut() -> f64,
) -> u64 {
    let phi = parity_features(challenge, stages);
    let mut bits = 0u64;
    for (i, row) in weights.iter().enumerate() {
        let delta = chain_delta(row, &phi) + noise();
        if delta > 0.0 {
            bits |= 1 << i;
        }
    }
    bits
}

/// One simulated PUF device: 64 chains of 65 stage weights plus the noise
/// level baked in at manufacture time. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PufInstance {
    weights: Vec<Vec<f64>>,
    noise_sigma: f64,
    instance_seed: u64,
}

/// Build a device from its seed. Weights are standard-normal, drawn chain by
/// chain (chain 0 stages 0..=64 first).
pub fn new_instance(instance_seed: u64, noise_sigma: f64) -> Result<PufInstance, PufError> {
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(PufError::InvalidNoiseSigma(noise_sigma));
    }
    let mut stream = NormalStream::from_seed_u64(instance_seed);
    let weights = (0..RESPONSE_BITS)
        .map(|_| (0..=STAGES).map(|_| stream.next()).collect())
        .collect();
    Ok(PufInstance { weights, noise_sigma, instance_seed })
}

fn noise_seed(instance_seed: u64, eval_seed: u64, challenge: u64) -> [u8; 32] {
    let mut s = [0u8; 32];
    s[0..8].copy_from_slice(&instance_seed.to_be_bytes());
    s[8..16].copy_from_slice(&eval_seed.to_be_bytes());
    s[16..24].copy_from_slice(&challenge.to_be_bytes());
    s
}

impl PufInstance {
    /// Produce the 64-bit response for a challenge. With zero effective
    /// sigma this is a pure function of the weights and the challenge.
    pub fn evaluate(&self, c: Challenge, ctx: &EvalContext) -> ResponseBits {
        let sigma = self.noise_sigma * ctx.temperature_factor;
        if sigma == 0.0 {
            ResponseBits(eval_chains(&self.weights, c.0, STAGES, || 0.0))
        } else {
            let mut stream = NormalStream::from_seed_bytes(noise_seed(
                self.instance_seed,
                ctx.eval_seed,
                c.0,
            ));
            ResponseBits(eval_chains(&self.weights, c.0, STAGES, || stream.next() * sigma))
        }
    }

    pub fn chain_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed
    }
}

/// The `n` most-significant bits of a response, MSB first.
pub fn take_msb_bits(r: ResponseBits, n: usize) -> Result<KeyBits, PufError> {
    if n == 0 || n > 64 {
        return Err(PufError::BitCountOutOfRange(n));
    }
    let word = if n == 64 { r.0 } else { r.0 >> (64 - n) };
    Ok(KeyBits::new(word, n).expect("length checked"))
}

/// `n` challenges drawn uniformly from a seeded stream.
pub fn random_challenges(seed: u64, n: usize) -> Vec<Challenge> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| Challenge(rng.next_u64())).collect()
}

/// Write CRP records, one `challenge_hex,response_hex` pair per line,
/// lowercase hex, 16 digits each.
pub fn write_corpus<W: Write>(w: &mut W, entries: &[(Challenge, ResponseBits)]) -> io::Result<()> {
    for (c, r) in entries {
        writeln!(w, "{:016x},{:016x}", c.0, r.0)?;
    }
    Ok(())
}

/// Parse CRP records in the format produced by [`write_corpus`].
pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<(Challenge, ResponseBits)>, PufError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| PufError::MalformedCorpusLine {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| PufError::MalformedCorpusLine {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let (c_hex, r_hex) = line.split_once(',').ok_or_else(|| bad("missing comma"))?;
        if c_hex.len() != 16 || r_hex.len() != 16 {
            return Err(bad("fields must be 16 hex digits"));
        }
        if c_hex.chars().chain(r_hex.chars()).any(|ch| ch.is_ascii_uppercase()) {
            return Err(bad("hex must be lowercase"));
        }
        let c = u64::from_str_radix(c_hex, 16).map_err(|_| bad("bad challenge hex"))?;
        let r = u64::from_str_radix(r_hex, 16).map_err(|_| bad("bad response hex"))?;
        out.push((Challenge(c), ResponseBits(r)));
    }
    Ok(out)
}
