//! Bit-exact message codecs. The three authentication phases encode to
//! exactly 10, 14 and 8 bytes; session-update messages carry 8-byte pseudo
//! identities and an 8-byte encrypted key. All integers are big-endian and
//! bit strings pack MSB first. See `docs/wire.md` for worked hex examples.

use serde::Serialize;
use thiserror::Error;

use crate::crypto::Nonce16;
use crate::puf::Challenge;
use crate::transcript::{MsgLabel, Transcript};

/// Rotating 64-bit pseudo identity of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct PseudoId(pub u64);

pub const PHASE1_LEN: usize = 10;
pub const PHASE2_LEN: usize = 14;
pub const PHASE3_LEN: usize = 8;

/// Smallest legal `K`; keys are `K+1` bits so no key is shorter than a nonce.
pub const K_MIN: u8 = 15;
pub const K_MAX: u8 = 63;

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("frame error: expected {expected} bytes, got {got}")]
    Frame { expected: usize, got: usize },
    #[error("malformed field: {field}")]
    MalformedField { field: &'static str },
}

/// Phase 1: `v_pid (8B) || n_v (2B)`, vehicle to server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase1Msg {
    pub v_pid: PseudoId,
    pub n_v: Nonce16,
}

impl Phase1Msg {
    pub fn encode(&self) -> [u8; PHASE1_LEN] {
        let mut out = [0u8; PHASE1_LEN];
        out[0..8].copy_from_slice(&self.v_pid.0.to_be_bytes());
        out[8..10].copy_from_slice(&self.n_v.0.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != PHASE1_LEN {
            return Err(WireError::Frame { expected: PHASE1_LEN, got: bytes.len() });
        }
        Ok(Self {
            v_pid: PseudoId(u64::from_be_bytes(bytes[0..8].try_into().unwrap())),
            n_v: Nonce16(u16::from_be_bytes(bytes[8..10].try_into().unwrap())),
        })
    }
}

/// Phase 2: `c (8B) || k (1B) || ct (5B)`, server to vehicle. `ct` is the
/// keystream encryption of `n_v (2B) || n_s (2B) || i (1B)` under the
/// `k+1`-bit response prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase2Msg {
    pub c: Challenge,
    pub k: u8,
    pub ct: [u8; 5],
}

impl Phase2Msg {
    pub fn new(c: Challenge, k: u8, ct: [u8; 5]) -> Result<Self, WireError> {
        if !(K_MIN..=K_MAX).contains(&k) {
            return Err(WireError::MalformedField { field: "k" });
        }
        Ok(Self { c, k, ct })
    }

    pub fn encode(&self) -> [u8; PHASE2_LEN] {
        let mut out = [0u8; PHASE2_LEN];
        out[0..8].copy_from_slice(&self.c.0.to_be_bytes());
        out[8] = self.k;
        out[9..14].copy_from_slice(&self.ct);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != PHASE2_LEN {
            return Err(WireError::Frame { expected: PHASE2_LEN, got: bytes.len() });
        }
        let c = Challenge(u64::from_be_bytes(bytes[0..8].try_into().unwrap()));
        let k = bytes[8];
        let ct: [u8; 5] = bytes[9..14].try_into().unwrap();
        Self::new(c, k, ct)
    }
}

/// Phase 3: the 8-byte vehicle tag `f_nl(R_{C+I} XOR extend(N_s))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase3Msg {
    pub f3: u64,
}

impl Phase3Msg {
    pub fn encode(&self) -> [u8; PHASE3_LEN] {
        self.f3.to_be_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() != PHASE3_LEN {
            return Err(WireError::Frame { expected: PHASE3_LEN, got: bytes.len() });
        }
        Ok(Self { f3: u64::from_be_bytes(bytes.try_into().unwrap()) })
    }
}

/// Plaintext layout inside the phase-2 ciphertext.
pub fn encode_phase2_plain(n_v: Nonce16, n_s: Nonce16, i: u8) -> [u8; 5] {
    let mut out = [0u8; 5];
    out[0..2].copy_from_slice(&n_v.0.to_be_bytes());
    out[2..4].copy_from_slice(&n_s.0.to_be_bytes());
    out[4] = i;
    out
}

pub fn decode_phase2_plain(bytes: &[u8; 5]) -> (Nonce16, Nonce16, u8) {
    (
        Nonce16(u16::from_be_bytes(bytes[0..2].try_into().unwrap())),
        Nonce16(u16::from_be_bytes(bytes[2..4].try_into().unwrap())),
        bytes[4],
    )
}

/// Session-update traffic. Which variant a byte string holds is fixed by the
/// leg it rides on, so each variant has its own decoder and no tag byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionUpdateMsg {
    /// A bare pseudo identity relayed between gateways (old PID upstream,
    /// new PID on the notify leg).
    PidForward(PseudoId),
    /// New identity plus the new session key encrypted under the current one.
    NewKeyGrant { pid_new: PseudoId, ct_sk: [u8; 8] },
    /// The vehicle proves receipt of the new identity by sending PID+1.
    KeyRequest { pid_plus_one: PseudoId },
    /// Encrypted new session key handed to the vehicle.
    KeyDelivery { ct_sk: [u8; 8] },
}

impl SessionUpdateMsg {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            SessionUpdateMsg::PidForward(pid) => pid.0.to_be_bytes().to_vec(),
            SessionUpdateMsg::NewKeyGrant { pid_new, ct_sk } => {
                let mut out = Vec::with_capacity(16);
                out.extend_from_slice(&pid_new.0.to_be_bytes());
                out.extend_from_slice(ct_sk);
                out
            }
            SessionUpdateMsg::KeyRequest { pid_plus_one } => {
                pid_plus_one.0.to_be_bytes().to_vec()
            }
            SessionUpdateMsg::KeyDelivery { ct_sk } => ct_sk.to_vec(),
        }
    }
}

fn exact_u64(bytes: &[u8]) -> Result<u64, WireError> {
    if bytes.len() != 8 {
        return Err(WireError::Frame { expected: 8, got: bytes.len() });
    }
    Ok(u64::from_be_bytes(bytes.try_into().unwrap()))
}

pub fn decode_pid_forward(bytes: &[u8]) -> Result<PseudoId, WireError> {
    exact_u64(bytes).map(PseudoId)
}

pub fn decode_new_key_grant(bytes: &[u8]) -> Result<(PseudoId, [u8; 8]), WireError> {
    if bytes.len() != 16 {
        return Err(WireError::Frame { expected: 16, got: bytes.len() });
    }
    let pid = PseudoId(u64::from_be_bytes(bytes[0..8].try_into().unwrap()));
    let ct: [u8; 8] = bytes[8..16].try_into().unwrap();
    Ok((pid, ct))
}

pub fn decode_key_request(bytes: &[u8]) -> Result<PseudoId, WireError> {
    exact_u64(bytes).map(PseudoId)
}

pub fn decode_key_delivery(bytes: &[u8]) -> Result<[u8; 8], WireError> {
    if bytes.len() != 8 {
        return Err(WireError::Frame { expected: 8, got: bytes.len() });
    }
    Ok(bytes.try_into().unwrap())
}

#[derive(Debug, Error, PartialEq)]
pub enum AccountingError {
    #[error("flow {flow} has an incomplete authentication (phases seen: {seen})")]
    IncompleteRun { flow: u64, seen: String },
}

/// Per-phase protocol payload totals over a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OverheadReport {
    pub phase1_bytes: u64,
    pub phase2_bytes: u64,
    pub phase3_bytes: u64,
    pub total_bytes: u64,
    pub runs: u64,
}

/// Sum the originator emissions (hop 0) of the three authentication phases,
/// grouped by flow. Every flow that shows any phase traffic must show all
/// three, otherwise the accounting is rejected. Relay hops repeat the same
/// payload and are not protocol overhead.
pub fn overhead_report(transcript: &Transcript) -> Result<OverheadReport, AccountingError> {
    use std::collections::BTreeMap;
    let mut flows: BTreeMap<u64, [Option<u64>; 3]> = BTreeMap::new();
    for rec in transcript.records() {
        if rec.hop != 0 || !rec.label.is_auth_phase() {
            continue;
        }
        let slot = match rec.label {
            MsgLabel::Phase1 => 0,
            MsgLabel::Phase2 => 1,
            _ => 2,
        };
        flows.entry(rec.flow).or_default()[slot] = Some(rec.bytes.len() as u64);
    }
    let mut report =
        OverheadReport { phase1_bytes: 0, phase2_bytes: 0, phase3_bytes: 0, total_bytes: 0, runs: 0 };
    for (flow, phases) in flows {
        match phases {
            [Some(p1), Some(p2), Some(p3)] => {
                report.phase1_bytes += p1;
                report.phase2_bytes += p2;
                report.phase3_bytes += p3;
                report.runs += 1;
            }
            _ => {
                let seen = phases
                    .iter()
                    .enumerate()
                    .filter_map(|(i, p)| p.map(|_| format!("phase{}", i + 1)))
                    .collect::<Vec<_>>()
                    .join(",");
                return Err(AccountingError::IncompleteRun { flow, seen });
            }
        }
    }
    report.total_bytes = report.phase1_bytes + report.phase2_bytes + report.phase3_bytes;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::TranscriptRecord;
    use proptest::prelude::*;

    #[test]
    fn phase1_zeroes_encode_to_zero_bytes() {
        let msg = Phase1Msg { v_pid: PseudoId(0), n_v: Nonce16(0) };
        assert_eq!(msg.encode(), [0u8; 10]);
    }

    #[test]
    fn phase_lengths_are_fixed() {
        let p1 = Phase1Msg { v_pid: PseudoId(u64::MAX), n_v: Nonce16(u16::MAX) };
        let p2 = Phase2Msg::new(Challenge(1), 63, [9; 5]).unwrap();
        let p3 = Phase3Msg { f3: 42 };
        assert_eq!(p1.encode().len(), 10);
        assert_eq!(p2.encode().len(), 14);
        assert_eq!(p3.encode().len(), 8);
    }

    #[test]
    fn k_range_enforced() {
        assert_eq!(
            Phase2Msg::new(Challenge(0), 14, [0; 5]).unwrap_err(),
            WireError::MalformedField { field: "k" }
        );
        assert!(Phase2Msg::new(Challenge(0), 15, [0; 5]).is_ok());
        assert!(Phase2Msg::new(Challenge(0), 63, [0; 5]).is_ok());
        let mut bytes = Phase2Msg::new(Challenge(0), 63, [0; 5]).unwrap().encode();
        bytes[8] = 64;
        assert_eq!(Phase2Msg::decode(&bytes).unwrap_err(), WireError::MalformedField { field: "k" });
    }

    #[test]
    fn wrong_lengths_are_frame_errors() {
        assert_eq!(
            Phase1Msg::decode(&[0; 9]).unwrap_err(),
            WireError::Frame { expected: 10, got: 9 }
        );
        assert_eq!(
            Phase1Msg::decode(&[0; 11]).unwrap_err(),
            WireError::Frame { expected: 10, got: 11 }
        );
        assert_eq!(
            Phase2Msg::decode(&[0; 13]).unwrap_err(),
            WireError::Frame { expected: 14, got: 13 }
        );
        assert_eq!(
            Phase3Msg::decode(&[0; 9]).unwrap_err(),
            WireError::Frame { expected: 8, got: 9 }
        );
        assert_eq!(decode_new_key_grant(&[0; 15]).unwrap_err(), WireError::Frame {
            expected: 16,
            got: 15
        });
    }

    #[test]
    fn phase2_plain_round_trip() {
        let plain = encode_phase2_plain(Nonce16(0x1111), Nonce16(0x2222), 5);
        assert_eq!(plain, [0x11, 0x11, 0x22, 0x22, 0x05]);
        assert_eq!(decode_phase2_plain(&plain), (Nonce16(0x1111), Nonce16(0x2222), 5));
    }

    #[test]
    fn update_messages_round_trip() {
        let pid = PseudoId(0x0102_0304_0506_0708);
        let ct = [1, 2, 3, 4, 5, 6, 7, 8];
        assert_eq!(decode_pid_forward(&SessionUpdateMsg::PidForward(pid).encode()).unwrap(), pid);
        assert_eq!(
            decode_new_key_grant(&SessionUpdateMsg::NewKeyGrant { pid_new: pid, ct_sk: ct }.encode())
                .unwrap(),
            (pid, ct)
        );
        assert_eq!(
            decode_key_request(&SessionUpdateMsg::KeyRequest { pid_plus_one: pid }.encode())
                .unwrap(),
            pid
        );
        assert_eq!(
            decode_key_delivery(&SessionUpdateMsg::KeyDelivery { ct_sk: ct }.encode()).unwrap(),
            ct
        );
    }

    proptest! {
        #[test]
        fn phase1_round_trip(v_pid in any::<u64>(), n_v in any::<u16>()) {
            let msg = Phase1Msg { v_pid: PseudoId(v_pid), n_v: Nonce16(n_v) };
            prop_assert_eq!(Phase1Msg::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn phase2_round_trip(c in any::<u64>(), k in 15u8..=63, ct in any::<[u8; 5]>()) {
            let msg = Phase2Msg::new(Challenge(c), k, ct).unwrap();
            prop_assert_eq!(Phase2Msg::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn phase3_round_trip(f3 in any::<u64>()) {
            let msg = Phase3Msg { f3 };
            prop_assert_eq!(Phase3Msg::decode(&msg.encode()).unwrap(), msg);
        }

        #[test]
        fn encode_of_decode_is_identity_on_valid_frames(
            p1 in any::<[u8; PHASE1_LEN]>(),
            c in any::<u64>(),
            k in 15u8..=63,
            ct in any::<[u8; 5]>(),
            p3 in any::<[u8; PHASE3_LEN]>(),
        ) {
            prop_assert_eq!(Phase1Msg::decode(&p1).unwrap().encode(), p1);
            let mut frame = [0u8; PHASE2_LEN];
            frame[0..8].copy_from_slice(&c.to_be_bytes());
            frame[8] = k;
            frame[9..14].copy_from_slice(&ct);
            prop_assert_eq!(Phase2Msg::decode(&frame).unwrap().encode(), frame);
            prop_assert_eq!(Phase3Msg::decode(&p3).unwrap().encode(), p3);
        }

        #[test]
        fn decode_never_accepts_wrong_length(len in 0usize..40) {
            let bytes = vec![0u8; len];
            if len != PHASE1_LEN {
                prop_assert!(Phase1Msg::decode(&bytes).is_err());
            }
            if len != PHASE2_LEN {
                prop_assert!(Phase2Msg::decode(&bytes).is_err());
            }
            if len != PHASE3_LEN {
                prop_assert!(Phase3Msg::decode(&bytes).is_err());
            }
        }
    }

    fn phase_rec(flow: u64, label: MsgLabel, len: usize, hop: u32, t: u64) -> TranscriptRecord {
        TranscriptRecord {
            t_us: t,
            sent_us: t,
            from: "x".into(),
            to: "y".into(),
            label,
            bytes: vec![0; len],
            flow,
            hop,
            secure: false,
        }
    }

    #[test]
    fn overhead_of_one_clean_run() {
        let mut t = Transcript::new();
        t.push(phase_rec(1, MsgLabel::Phase1, 10, 0, 0));
        t.push(phase_rec(1, MsgLabel::Phase1, 10, 1, 1)); // relay hop, not counted
        t.push(phase_rec(1, MsgLabel::Phase2, 14, 0, 2));
        t.push(phase_rec(1, MsgLabel::Phase3, 8, 0, 3));
        let report = overhead_report(&t).unwrap();
        assert_eq!(report, OverheadReport {
            phase1_bytes: 10,
            phase2_bytes: 14,
            phase3_bytes: 8,
            total_bytes: 32,
            runs: 1
        });
    }

    #[test]
    fn overhead_zero_runs_and_additivity() {
        let t = Transcript::new();
        let report = overhead_report(&t).unwrap();
        assert_eq!(report.total_bytes, 0);
        assert_eq!(report.runs, 0);

        let mut t = Transcript::new();
        for flow in [1, 2] {
            t.push(phase_rec(flow, MsgLabel::Phase1, 10, 0, flow * 100));
            t.push(phase_rec(flow, MsgLabel::Phase2, 14, 0, flow * 100 + 10));
            t.push(phase_rec(flow, MsgLabel::Phase3, 8, 0, flow * 100 + 20));
        }
        assert_eq!(overhead_report(&t).unwrap().total_bytes, 64);
    }

    #[test]
    fn overhead_rejects_incomplete_flow() {
        let mut t = Transcript::new();
        t.push(phase_rec(7, MsgLabel::Phase1, 10, 0, 0));
        assert_eq!(
            overhead_report(&t).unwrap_err(),
            AccountingError::IncompleteRun { flow: 7, seen: "phase1".into() }
        );
    }
}
