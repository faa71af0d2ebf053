//! Ultralight primitive layer the protocol composes: a cyclic-repeat XOR
//! keystream keyed by response bits, a fixed bijective 64-bit mixer, 16-bit
//! nonces, and the session-key derivation. Everything here is a pure
//! function; callers own their generator state.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::puf::ResponseBits;

/// A 16-bit single-use freshness value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Nonce16(pub u16);

/// A 64-bit symmetric session key established after mutual authentication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionKey(pub u64);

impl fmt::LowerHex for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KeyError {
    #[error("key must hold between 1 and 64 bits, got {0}")]
    BadLength(usize),
}

/// A short key of 1..=64 bits, kept right-aligned in a word and iterated
/// MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyBits {
    word: u64,
    len: usize,
}

impl KeyBits {
    pub fn new(word: u64, len: usize) -> Result<Self, KeyError> {
        if len == 0 || len > 64 {
            return Err(KeyError::BadLength(len));
        }
        let masked = if len == 64 { word } else { word & ((1u64 << len) - 1) };
        Ok(Self { word: masked, len })
    }

    pub fn bit_len(&self) -> usize {
        self.len
    }

    pub fn word(&self) -> u64 {
        self.word
    }

    /// Bit `idx` counting from the most-significant end of the key.
    pub fn bit(&self, idx: usize) -> bool {
        debug_assert!(idx < self.len);
        (self.word >> (self.len - 1 - idx)) & 1 == 1
    }
}

impl fmt::Display for KeyBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for idx in 0..self.len {
            f.write_str(if self.bit(idx) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// XOR the payload with the key repeated cyclically, MSB first. Self-inverse
/// for every key, so the same call encrypts and decrypts.
pub fn keystream_xor(key: &KeyBits, payload: &[u8]) -> Vec<u8> {
    let klen = key.bit_len();
    let mut out = Vec::with_capacity(payload.len());
    let mut t = 0usize;
    for &byte in payload {
        let mut x = byte;
        for bit in 0..8 {
            if key.bit(t % klen) {
                x ^= 0x80 >> bit;
            }
            t += 1;
        }
        out.push(x);
    }
    out
}

/// Fixed bijective 64-bit mixer used wherever the protocol needs a
/// non-linear function. Constants are published so independent
/// implementations agree bit for bit.
pub fn f_nl(x: u64) -> u64 {
    let mut x = x;
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Widen a 16-bit nonce to 64 bits by repeating it in all four lanes,
/// MSB-first concatenation.
pub fn extend_nonce(n: Nonce16) -> u64 {
    let w = u64::from(n.0);
    (w << 48) | (w << 32) | (w << 16) | w
}

/// Session key both sides derive independently after mutual authentication:
/// `f_nl(R_{C+I} XOR extend(N_v))`. Uses the vehicle nonce so the key is
/// structurally distinct from the phase-3 tag (which uses the server nonce).
pub fn derive_session_key(r_ci: ResponseBits, n_v: Nonce16) -> SessionKey {
    SessionKey(f_nl(r_ci.0 ^ extend_nonce(n_v)))
}

/// Uniform 16-bit nonce from a caller-owned generator.
pub fn gen_nonce<R: RngCore>(rng: &mut R) -> Nonce16 {
    Nonce16(rng.next_u32() as u16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn key_length_bounds() {
        assert_eq!(KeyBits::new(0, 0).unwrap_err(), KeyError::BadLength(0));
        assert_eq!(KeyBits::new(0, 65).unwrap_err(), KeyError::BadLength(65));
        assert_eq!(KeyBits::new(u64::MAX, 64).unwrap().word(), u64::MAX);
        // Stray high bits above the declared length are masked off.
        assert_eq!(KeyBits::new(0xFF, 4).unwrap().word(), 0xF);
    }

    #[test]
    fn zero_key_is_identity() {
        let key = KeyBits::new(0, 16).unwrap();
        let payload = [0xDE, 0xAD, 0xBE, 0xEF];
        assert_eq!(keystream_xor(&key, &payload), payload);
    }

    #[test]
    fn hand_expanded_keystream() {
        // key 1010 repeats to 10101010; 11111111 ^ 10101010 = 01010101.
        let key = KeyBits::new(0b1010, 4).unwrap();
        assert_eq!(keystream_xor(&key, &[0xFF]), vec![0x55]);
    }

    #[test]
    fn keystream_is_involution() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let len = (rng.next_u32() as usize % 64) + 1;
            let key = KeyBits::new(rng.next_u64(), len).unwrap();
            let payload: Vec<u8> =
                (0..(rng.next_u32() % 32 + 1)).map(|_| rng.next_u32() as u8).collect();
            assert_eq!(keystream_xor(&key, &keystream_xor(&key, &payload)), payload);
        }
    }

    #[test]
    fn mixer_preserves_zero() {
        assert_eq!(f_nl(0), 0);
    }

    /// Inverse of `y = x ^ (x >> s)`, derived independently in test code.
    fn inv_shr_xor(y: u64, s: u32) -> u64 {
        let mut x = y;
        for _ in 0..(64 / s + 1) {
            x = y ^ (x >> s);
        }
        x
    }

    /// Multiplicative inverse mod 2^64 by Newton iteration (odd inputs).
    fn mul_inv_u64(a: u64) -> u64 {
        let mut x = a;
        for _ in 0..6 {
            x = x.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(x)));
        }
        x
    }

    fn f_nl_inverse(y: u64) -> u64 {
        let mut x = inv_shr_xor(y, 31);
        x = x.wrapping_mul(mul_inv_u64(0x94D0_49BB_1331_11EB));
        x = inv_shr_xor(x, 27);
        x = x.wrapping_mul(mul_inv_u64(0xBF58_476D_1CE4_E5B9));
        inv_shr_xor(x, 30)
    }

    #[test]
    fn mixer_is_bijective() {
        assert_eq!(mul_inv_u64(0x94D0_49BB_1331_11EB).wrapping_mul(0x94D0_49BB_1331_11EB), 1);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1_000_000 {
            let x = rng.next_u64();
            assert_eq!(f_nl_inverse(f_nl(x)), x);
        }
    }

    #[test]
    fn mixer_collision_scan() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut outputs: Vec<u64> = (0..1_000_000).map(|_| f_nl(rng.next_u64())).collect();
        outputs.sort_unstable();
        let before = outputs.len();
        outputs.dedup();
        assert_eq!(outputs.len(), before);
    }

    #[test]
    fn mixer_avalanche() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let trials = 10_000u64;
        let mut flipped = 0u64;
        for _ in 0..trials {
            let x = rng.next_u64();
            let bit = 1u64 << (rng.next_u32() % 64);
            flipped += u64::from((f_nl(x) ^ f_nl(x ^ bit)).count_ones());
        }
        let mean = flipped as f64 / trials as f64;
        assert!((28.0..=36.0).contains(&mean), "avalanche mean {mean}");
    }

    #[test]
    fn extend_nonce_examples() {
        assert_eq!(extend_nonce(Nonce16(0)), 0);
        assert_eq!(extend_nonce(Nonce16(0xFFFF)), u64::MAX);
        assert_eq!(extend_nonce(Nonce16(0xA1B2)), 0xA1B2_A1B2_A1B2_A1B2);
        // The 16-bit pattern sits at all four lanes.
        let w = extend_nonce(Nonce16(0x1234));
        for lane in 0..4 {
            assert_eq!((w >> (16 * lane)) as u16, 0x1234);
        }
    }

    #[test]
    fn session_key_derivation() {
        assert_eq!(derive_session_key(ResponseBits(0), Nonce16(0)), SessionKey(0));
        // Both sides compute the same pure function.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let r = ResponseBits(rng.next_u64());
            let n = Nonce16(rng.next_u32() as u16);
            assert_eq!(derive_session_key(r, n), derive_session_key(r, n));
        }
    }

    #[test]
    fn session_key_distinct_from_phase3_tag() {
        // SK keys off N_v, the tag off N_s; they only collide when the
        // nonces themselves collide.
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut distinct = 0u32;
        for _ in 0..1000 {
            let r = ResponseBits(rng.next_u64());
            let n_v = gen_nonce(&mut rng);
            let n_s = gen_nonce(&mut rng);
            let sk = derive_session_key(r, n_v).0;
            let tag = f_nl(r.0 ^ extend_nonce(n_s));
            if sk != tag {
                distinct += 1;
            }
        }
        assert!(distinct >= 999, "distinct {distinct}");
    }

    #[test]
    fn nonce_stream_reproducible() {
        let draw = |seed: u64| -> Vec<u16> {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..16).map(|_| gen_nonce(&mut rng).0).collect()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn nonce_draws_cover_the_space() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut seen = vec![false; 1 << 16];
        for _ in 0..(1u32 << 20) {
            seen[gen_nonce(&mut rng).0 as usize] = true;
        }
        let covered = seen.iter().filter(|&&b| b).count();
        assert!(covered as f64 >= 0.99 * 65536.0, "covered {covered}");
    }
}
