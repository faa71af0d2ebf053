//! Protocol state machines: vehicle (AV), cloud server (CS) with its secure
//! database, and roadside-unit relay state for the session-key handover.
//!
//! The vehicle deliberately stores no challenge-response material: its state
//! is the PUF itself, at most one pseudo identity, one pending nonce and one
//! session key. Everything response-shaped lives server-side in the SDB or
//! is recomputed on the fly and dropped.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{
    derive_session_key, extend_nonce, f_nl, gen_nonce, keystream_xor, Nonce16, SessionKey,
};
use crate::puf::{take_msb_bits, Challenge, EvalContext, PufInstance, ResponseBits};
use crate::wire::{
    decode_phase2_plain, encode_phase2_plain, Phase1Msg, Phase2Msg, Phase3Msg, PseudoId, K_MAX,
    K_MIN,
};

/// Simulator node identity; stands in for a link-layer source address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct NodeId(pub u32);

pub const GREY_THRESHOLD_DEFAULT: u32 = 5;
pub const GREY_COOLDOWN_DEFAULT_US: u64 = 300_000_000;
/// A freshly issued pseudo identity stays redeemable for one minute.
pub const PID_TTL_US: u64 = 60_000_000;
/// How many recent vehicle nonces the server remembers per pseudo identity.
pub const NONCE_WINDOW: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("vehicle holds no pseudo identity; register first")]
    NotRegistered,
    #[error("target server is grey-listed by this vehicle")]
    ServerGreyListed,
    #[error("no authentication is pending on this vehicle")]
    NoPendingAuth,
    #[error("no session state for this flow")]
    NoSession,
    #[error("registration requires a secure link")]
    InsecureLink,
    #[error("pseudo identity unknown to the secure database")]
    UnknownPid,
    #[error("no established session key")]
    NotAuthenticated,
    #[error("no pending identity update")]
    NoPendingUpdate,
    #[error("pending identity update expired")]
    UpdateExpired,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreyEntry {
    pub fail_count: u32,
    pub listed_at_us: Option<u64>,
}

/// Per-source failure counter. Crossing the threshold blocks the source
/// until the cooldown elapses; expiry clears the slate.
#[derive(Debug, Clone)]
pub struct GreyList {
    entries: HashMap<NodeId, GreyEntry>,
    pub threshold: u32,
    pub cooldown_us: u64,
}

impl GreyList {
    pub fn new(threshold: u32, cooldown_us: u64) -> Self {
        Self { entries: HashMap::new(), threshold, cooldown_us }
    }

    /// A grey list that never trips, for harnesses measuring raw
    /// cryptographic rejection rates.
    pub fn disabled() -> Self {
        Self::new(u32::MAX, GREY_COOLDOWN_DEFAULT_US)
    }

    pub fn is_listed(&mut self, src: NodeId, now_us: u64) -> bool {
        if let Some(entry) = self.entries.get(&src) {
            if let Some(at) = entry.listed_at_us {
                if now_us >= at.saturating_add(self.cooldown_us) {
                    self.entries.remove(&src);
                    return false;
                }
                return true;
            }
        }
        false
    }

    pub fn record_failure(&mut self, src: NodeId, now_us: u64) {
        let entry =
            self.entries.entry(src).or_insert(GreyEntry { fail_count: 0, listed_at_us: None });
        entry.fail_count += 1;
        if entry.fail_count >= self.threshold && entry.listed_at_us.is_none() {
            entry.listed_at_us = Some(now_us);
        }
    }

    pub fn fail_count(&self, src: NodeId) -> u32 {
        self.entries.get(&src).map(|e| e.fail_count).unwrap_or(0)
    }
}

/// One enrolled base challenge with its full offset table. Offset 0 is the
/// vehicle response the phase-2 key comes from; offsets `1..=i_max` back the
/// `C+I` verification. The registration transport pair `(C1, R2)` is kept as
/// an integrity witness of the enrollment ceremony.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub base_c: Challenge,
    pub responses: Vec<ResponseBits>,
    pub reg_c1: Challenge,
    pub reg_r2: ResponseBits,
    pub used: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct PendingPid {
    pub pid: PseudoId,
    pub sk_new: SessionKey,
    pub issued_at_us: u64,
    pub ttl_us: u64,
}

#[derive(Debug, Clone)]
pub struct SdbRecord {
    pub v_pid: PseudoId,
    pub real_id: u64,
    pub enrollments: Vec<Enrollment>,
    pub current_sk: Option<SessionKey>,
    pub pid_new_pending: Option<PendingPid>,
}

/// Secure database: pseudo-identity keyed records plus the set of every
/// identity ever issued, so rotation never reuses one.
#[derive(Debug, Default)]
pub struct Sdb {
    records: HashMap<u64, SdbRecord>,
    issued_pids: HashSet<u64>,
}

impl Sdb {
    pub fn contains(&self, pid: PseudoId) -> bool {
        self.records.contains_key(&pid.0)
    }

    pub fn get(&self, pid: PseudoId) -> Option<&SdbRecord> {
        self.records.get(&pid.0)
    }

    pub fn get_mut(&mut self, pid: PseudoId) -> Option<&mut SdbRecord> {
        self.records.get_mut(&pid.0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Draw an identity never issued before; collisions regenerate.
    pub fn fresh_pid(&mut self, rng: &mut ChaCha20Rng) -> PseudoId {
        loop {
            let candidate = rng.next_u64();
            if self.issued_pids.insert(candidate) {
                return PseudoId(candidate);
            }
        }
    }

    pub fn insert(&mut self, record: SdbRecord) {
        self.records.insert(record.v_pid.0, record);
    }

    /// Replace a record's pseudo identity; the old one stops resolving.
    pub fn rekey(&mut self, old: PseudoId, new: PseudoId) {
        if let Some(mut record) = self.records.remove(&old.0) {
            record.v_pid = new;
            self.records.insert(new.0, record);
        }
    }

    /// Records sorted by pseudo identity, for deterministic dumps.
    pub fn records_sorted(&self) -> Vec<&SdbRecord> {
        let mut out: Vec<&SdbRecord> = self.records.values().collect();
        out.sort_by_key(|r| r.v_pid.0);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PendingAuth {
    pub n_v: Nonce16,
    pub server: NodeId,
}

/// Vehicle state. Holds the PUF, identifiers and at most one session key —
/// never any response bits.
#[derive(Debug)]
pub struct AvState {
    puf: PufInstance,
    pub v_pid: Option<PseudoId>,
    pub pending: Option<PendingAuth>,
    pub sk: Option<SessionKey>,
    pub pid_new: Option<PseudoId>,
    pub server_grey: GreyList,
}

/// JSON-facing projection of vehicle state; used both for exports and for
/// the no-secret-at-rest scans.
#[derive(Debug, Clone, Serialize)]
pub struct AvStateDump {
    pub v_pid: Option<u64>,
    pub pending_n_v: Option<u16>,
    pub sk: Option<u64>,
    pub pid_new: Option<u64>,
}

impl AvStateDump {
    /// Every word of state a scan could compare against known responses.
    pub fn words(&self) -> Vec<u64> {
        let mut out = Vec::new();
        if let Some(v) = self.v_pid {
            out.push(v);
        }
        if let Some(n) = self.pending_n_v {
            out.push(u64::from(n));
        }
        if let Some(s) = self.sk {
            out.push(s);
        }
        if let Some(p) = self.pid_new {
            out.push(p);
        }
        out
    }
}

#[derive(Debug)]
pub enum ServerVerdict {
    Proceed(Phase3Msg),
    InvalidServer,
}

impl AvState {
    pub fn new(puf: PufInstance) -> Self {
        Self {
            puf,
            v_pid: None,
            pending: None,
            sk: None,
            pid_new: None,
            server_grey: GreyList::new(GREY_THRESHOLD_DEFAULT, GREY_COOLDOWN_DEFAULT_US),
        }
    }

    pub fn puf(&self) -> &PufInstance {
        &self.puf
    }

    /// Phase 1: emit `{v_pid || fresh N_v}` and remember the nonce.
    pub fn initiate(
        &mut self,
        server: NodeId,
        now_us: u64,
        rng: &mut ChaCha20Rng,
    ) -> Result<Phase1Msg, ProtocolError> {
        let v_pid = self.v_pid.ok_or(ProtocolError::NotRegistered)?;
        if self.server_grey.is_listed(server, now_us) {
            return Err(ProtocolError::ServerGreyListed);
        }
        let n_v = gen_nonce(rng);
        self.pending = Some(PendingAuth { n_v, server });
        Ok(Phase1Msg { v_pid, n_v })
    }

    /// Phase 2: regenerate the response for the offered challenge, decrypt,
    /// and check the echoed nonce. On success the phase-3 tag goes out and
    /// the session key is derived; the responses themselves are dropped
    /// before returning.
    pub fn verify_server(
        &mut self,
        server: NodeId,
        msg: &Phase2Msg,
        now_us: u64,
        rng: &mut ChaCha20Rng,
    ) -> Result<ServerVerdict, ProtocolError> {
        let pending = self.pending.take().ok_or(ProtocolError::NoPendingAuth)?;
        let r = self.puf.evaluate(msg.c, &EvalContext::new(rng.next_u64()));
        let key = take_msb_bits(r, msg.k as usize + 1).expect("codec bounds k to 15..=63");
        let plain: [u8; 5] = keystream_xor(&key, &msg.ct).try_into().expect("ct is 5 bytes");
        let (n_v, n_s, i) = decode_phase2_plain(&plain);
        if n_v != pending.n_v {
            self.server_grey.record_failure(server, now_us);
            return Ok(ServerVerdict::InvalidServer);
        }
        let c_plus_i = Challenge(msg.c.0.wrapping_add(u64::from(i)));
        let r_ci = self.puf.evaluate(c_plus_i, &EvalContext::new(rng.next_u64()));
        let f3 = f_nl(r_ci.0 ^ extend_nonce(n_s));
        self.sk = Some(derive_session_key(r_ci, pending.n_v));
        Ok(ServerVerdict::Proceed(Phase3Msg { f3 }))
    }

    pub fn receive_pid_new(&mut self, pid: PseudoId) {
        self.pid_new = Some(pid);
    }

    /// Prove receipt of the new identity by requesting with PID+1.
    pub fn make_key_request(&self) -> Result<PseudoId, ProtocolError> {
        if self.sk.is_none() {
            return Err(ProtocolError::NotAuthenticated);
        }
        let pid_new = self.pid_new.ok_or(ProtocolError::NoPendingUpdate)?;
        Ok(PseudoId(pid_new.0.wrapping_add(1)))
    }

    /// Unwrap the delivered key with the current session key and rotate the
    /// pseudo identity.
    pub fn apply_key_delivery(
        &mut self,
        ct_sk: [u8; 8],
    ) -> Result<(PseudoId, SessionKey), ProtocolError> {
        let sk = self.sk.ok_or(ProtocolError::NotAuthenticated)?;
        let pid_new = self.pid_new.take().ok_or(ProtocolError::NoPendingUpdate)?;
        let sk_new = SessionKey(u64::from_be_bytes(ct_sk) ^ sk.0);
        self.sk = Some(sk_new);
        self.v_pid = Some(pid_new);
        Ok((pid_new, sk_new))
    }

    pub fn dump(&self) -> AvStateDump {
        AvStateDump {
            v_pid: self.v_pid.map(|p| p.0),
            pending_n_v: self.pending.map(|p| p.n_v.0),
            sk: self.sk.map(|s| s.0),
            pid_new: self.pid_new.map(|p| p.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    UnknownPid,
    NonceReplay,
    EnrollmentExhausted,
}

#[derive(Debug)]
pub enum Phase1Verdict {
    Challenge(Phase2Msg),
    InvalidClient(RejectReason),
    GreyListed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthStatus {
    Authenticated,
    InvalidClient,
    InvalidServer,
    AuthFailed,
    GreyListed,
}

impl AuthStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuthStatus::Authenticated => "authenticated",
            AuthStatus::InvalidClient => "invalid_client",
            AuthStatus::InvalidServer => "invalid_server",
            AuthStatus::AuthFailed => "auth_failed",
            AuthStatus::GreyListed => "grey_listed",
        }
    }
}

/// Final word on one authentication flow. A session key is present exactly
/// when the status is `Authenticated`; `z` carries the server-side
/// verification value where one was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuthOutcome {
    pub status: AuthStatus,
    pub sk: Option<SessionKey>,
    pub z: Option<u64>,
}

impl AuthOutcome {
    pub fn authenticated(sk: SessionKey, z: u64) -> Self {
        Self { status: AuthStatus::Authenticated, sk: Some(sk), z: Some(z) }
    }

    pub fn rejected(status: AuthStatus, z: Option<u64>) -> Self {
        assert!(status != AuthStatus::Authenticated, "rejection cannot carry Authenticated");
        Self { status, sk: None, z }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CsConfig {
    pub i_max: u8,
    pub grey_threshold: u32,
    pub grey_cooldown_us: u64,
    /// Whether enrollments may be reused once exhausted. Off by default:
    /// a fresh base challenge per authentication.
    pub reuse_enrollments: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self {
            i_max: 15,
            grey_threshold: GREY_THRESHOLD_DEFAULT,
            grey_cooldown_us: GREY_COOLDOWN_DEFAULT_US,
            reuse_enrollments: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct CsSession {
    v_pid: PseudoId,
    enrollment_idx: usize,
    #[allow(dead_code)]
    c: Challenge,
    #[allow(dead_code)]
    k: u8,
    i: u8,
    n_v: Nonce16,
    n_s: Nonce16,
}

/// Cloud server: owns its own PUF (used during registration), the secure
/// database, per-flow session state, the nonce freshness window and the
/// grey list.
#[derive(Debug)]
pub struct CsState {
    puf: PufInstance,
    pub sdb: Sdb,
    pub grey: GreyList,
    sessions: HashMap<u64, CsSession>,
    nonce_seen: HashMap<u64, VecDeque<u16>>,
    pub config: CsConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdbRecordDump {
    pub v_pid: u64,
    pub real_id: u64,
    pub enrollments: usize,
    pub enrollments_used: usize,
    pub current_sk: Option<u64>,
    pub pid_new_pending: Option<u64>,
}

impl CsState {
    pub fn new(puf: PufInstance, config: CsConfig) -> Self {
        Self {
            puf,
            sdb: Sdb::default(),
            grey: GreyList::new(config.grey_threshold, config.grey_cooldown_us),
            sessions: HashMap::new(),
            nonce_seen: HashMap::new(),
            config,
        }
    }

    pub fn puf(&self) -> &PufInstance {
        &self.puf
    }

    /// Phase 1 handling: grey-list gate, identity lookup, nonce freshness,
    /// then enrollment selection and the encrypted phase-2 reply. Session
    /// state is keyed by flow.
    pub fn handle_phase1(
        &mut self,
        src: NodeId,
        flow: u64,
        msg: &Phase1Msg,
        now_us: u64,
        rng: &mut ChaCha20Rng,
    ) -> Phase1Verdict {
        if self.grey.is_listed(src, now_us) {
            return Phase1Verdict::GreyListed;
        }
        if !self.sdb.contains(msg.v_pid) {
            self.grey.record_failure(src, now_us);
            return Phase1Verdict::InvalidClient(RejectReason::UnknownPid);
        }
        let seen = self.nonce_seen.entry(msg.v_pid.0).or_default();
        if seen.contains(&msg.n_v.0) {
            self.grey.record_failure(src, now_us);
            return Phase1Verdict::InvalidClient(RejectReason::NonceReplay);
        }
        if seen.len() == NONCE_WINDOW {
            seen.pop_front();
        }
        seen.push_back(msg.n_v.0);

        let reuse = self.config.reuse_enrollments;
        let i_max = self.config.i_max;
        let record = self.sdb.get_mut(msg.v_pid).expect("looked up above");
        let enrollment_idx = match record.enrollments.iter().position(|e| !e.used) {
            Some(idx) => idx,
            None if reuse && !record.enrollments.is_empty() => {
                (flow % record.enrollments.len() as u64) as usize
            }
            None => {
                self.grey.record_failure(src, now_us);
                return Phase1Verdict::InvalidClient(RejectReason::EnrollmentExhausted);
            }
        };
        record.enrollments[enrollment_idx].used = true;

        let k: u8 = rng.gen_range(K_MIN..=K_MAX);
        let i: u8 = rng.gen_range(1..=i_max.max(1));
        let n_s = gen_nonce(rng);
        let key = take_msb_bits(record.enrollments[enrollment_idx].responses[0], k as usize + 1)
            .expect("k+1 within 16..=64");
        let ct: [u8; 5] = keystream_xor(&key, &encode_phase2_plain(msg.n_v, n_s, i))
            .try_into()
            .expect("plaintext is 5 bytes");
        let c = record.enrollments[enrollment_idx].base_c;
        self.sessions.insert(
            flow,
            CsSession { v_pid: msg.v_pid, enrollment_idx, c, k, i, n_v: msg.n_v, n_s },
        );
        Phase1Verdict::Challenge(Phase2Msg { c, k, ct })
    }

    /// Phase 3 verification against the stored `C+I` response. Session
    /// state survives failed guesses (the grey list throttles those) and is
    /// consumed on success, so a replayed tag finds nothing to match.
    pub fn verify_client(
        &mut self,
        src: NodeId,
        flow: u64,
        msg: &Phase3Msg,
        now_us: u64,
    ) -> Result<AuthOutcome, ProtocolError> {
        if self.grey.is_listed(src, now_us) {
            return Ok(AuthOutcome::rejected(AuthStatus::GreyListed, None));
        }
        let session = *self.sessions.get(&flow).ok_or(ProtocolError::NoSession)?;
        let record = self.sdb.get(session.v_pid).ok_or(ProtocolError::UnknownPid)?;
        let r_ci = record.enrollments[session.enrollment_idx].responses[session.i as usize];
        let z = r_ci.0 ^ extend_nonce(session.n_s);
        if f_nl(z) == msg.f3 {
            self.sessions.remove(&flow);
            let sk = derive_session_key(r_ci, session.n_v);
            self.sdb.get_mut(session.v_pid).expect("record exists").current_sk = Some(sk);
            Ok(AuthOutcome::authenticated(sk, z))
        } else {
            self.grey.record_failure(src, now_us);
            Ok(AuthOutcome::rejected(AuthStatus::AuthFailed, Some(z)))
        }
    }

    /// Begin a handover: mint a unique new identity and session key, wrap
    /// the key under the current one, and remember both until the vehicle
    /// proves receipt. The pending identity expires after its TTL.
    pub fn start_session_update(
        &mut self,
        v_pid: PseudoId,
        now_us: u64,
        rng: &mut ChaCha20Rng,
    ) -> Result<(PseudoId, [u8; 8]), ProtocolError> {
        if !self.sdb.contains(v_pid) {
            return Err(ProtocolError::UnknownPid);
        }
        let pid_new = self.sdb.fresh_pid(rng);
        let sk_new = SessionKey(rng.next_u64());
        let record = self.sdb.get_mut(v_pid).expect("checked above");
        let sk = record.current_sk.ok_or(ProtocolError::NotAuthenticated)?;
        let ct_sk = (sk_new.0 ^ sk.0).to_be_bytes();
        record.pid_new_pending =
            Some(PendingPid { pid: pid_new, sk_new, issued_at_us: now_us, ttl_us: PID_TTL_US });
        Ok((pid_new, ct_sk))
    }

    /// Finalize a handover after delivery: the database switches to the new
    /// identity and key, and the old identity stops resolving. Expired
    /// pendings are cleared and refused.
    pub fn commit_session_update(
        &mut self,
        old_pid: PseudoId,
        now_us: u64,
    ) -> Result<(PseudoId, SessionKey), ProtocolError> {
        let record = self.sdb.get_mut(old_pid).ok_or(ProtocolError::UnknownPid)?;
        let pending = record.pid_new_pending.take().ok_or(ProtocolError::NoPendingUpdate)?;
        if now_us > pending.issued_at_us.saturating_add(pending.ttl_us) {
            return Err(ProtocolError::UpdateExpired);
        }
        record.current_sk = Some(pending.sk_new);
        self.sdb.rekey(old_pid, pending.pid);
        // The nonce window follows the record under its new identity.
        if let Some(window) = self.nonce_seen.remove(&old_pid.0) {
            self.nonce_seen.insert(pending.pid.0, window);
        }
        Ok((pending.pid, pending.sk_new))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn dump_sdb(&self) -> Vec<SdbRecordDump> {
        self.sdb
            .records_sorted()
            .into_iter()
            .map(|r| SdbRecordDump {
                v_pid: r.v_pid.0,
                real_id: r.real_id,
                enrollments: r.enrollments.len(),
                enrollments_used: r.enrollments.iter().filter(|e| e.used).count(),
                current_sk: r.current_sk.map(|s| s.0),
                pid_new_pending: r.pid_new_pending.map(|p| p.pid.0),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegistrationSummary {
    pub v_pid: PseudoId,
    pub enrollments_added: usize,
    pub total_enrollments: usize,
}

/// Registration ceremony over a secure channel. Per enrollment the server
/// picks `C1`, evaluates its own PUF for `R1`, the vehicle answers with
/// `R = eval(R1)` plus the offset responses `1..=i_max`, and the server
/// closes the chain with `R2 = eval(R)`. The database stores the offset
/// table under base challenge `R1`; the vehicle walks away with nothing but
/// its pseudo identity.
pub fn register_av(
    av: &mut AvState,
    cs: &mut CsState,
    real_id: u64,
    n_enrollments: usize,
    secure_link: bool,
    rng: &mut ChaCha20Rng,
) -> Result<RegistrationSummary, ProtocolError> {
    if !secure_link {
        return Err(ProtocolError::InsecureLink);
    }
    let v_pid = match av.v_pid {
        Some(pid) if cs.sdb.contains(pid) => pid,
        _ => {
            let pid = cs.sdb.fresh_pid(rng);
            cs.sdb.insert(SdbRecord {
                v_pid: pid,
                real_id,
                enrollments: Vec::new(),
                current_sk: None,
                pid_new_pending: None,
            });
            pid
        }
    };
    let i_max = cs.config.i_max;
    for _ in 0..n_enrollments {
        let c1 = Challenge(rng.next_u64());
        let r1 = cs.puf.evaluate(c1, &EvalContext::new(rng.next_u64()));
        let base_c = Challenge(r1.0);
        let r = av.puf.evaluate(base_c, &EvalContext::new(rng.next_u64()));
        let r2 = cs.puf.evaluate(Challenge(r.0), &EvalContext::new(rng.next_u64()));
        let mut responses = Vec::with_capacity(i_max as usize + 1);
        responses.push(r);
        for offset in 1..=u64::from(i_max) {
            let c_off = Challenge(base_c.0.wrapping_add(offset));
            responses.push(av.puf.evaluate(c_off, &EvalContext::new(rng.next_u64())));
        }
        let record = cs.sdb.get_mut(v_pid).expect("created above");
        record.enrollments.push(Enrollment { base_c, responses, reg_c1: c1, reg_r2: r2, used: false });
    }
    av.v_pid = Some(v_pid);
    let total = cs.sdb.get(v_pid).expect("created above").enrollments.len();
    Ok(RegistrationSummary { v_pid, enrollments_added: n_enrollments, total_enrollments: total })
}

/// Roadside-unit relay state for handover: the stored key grant awaiting
/// the vehicle's PID+1 request.
#[derive(Debug, Default)]
pub struct RsuState {
    pub grant: Option<StoredGrant>,
}

#[derive(Debug, Clone, Copy)]
pub struct StoredGrant {
    pub pid_new: PseudoId,
    pub ct_sk: [u8; 8],
    pub issued_at_us: u64,
    pub ttl_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRefusal {
    NoGrant,
    Expired,
    WrongPid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyRequestVerdict {
    Deliver([u8; 8]),
    Refused(UpdateRefusal),
}

impl RsuState {
    pub fn receive_grant(&mut self, grant: StoredGrant) {
        self.grant = Some(grant);
    }

    /// Hand out the wrapped key only for an unexpired grant addressed with
    /// exactly PID+1. The grant is consumed on delivery.
    pub fn handle_key_request(&mut self, pid_plus_one: PseudoId, now_us: u64) -> KeyRequestVerdict {
        match self.grant {
            None => KeyRequestVerdict::Refused(UpdateRefusal::NoGrant),
            Some(g) if now_us > g.issued_at_us.saturating_add(g.ttl_us) => {
                self.grant = None;
                KeyRequestVerdict::Refused(UpdateRefusal::Expired)
            }
            Some(g) if pid_plus_one.0 != g.pid_new.0.wrapping_add(1) => {
                KeyRequestVerdict::Refused(UpdateRefusal::WrongPid)
            }
            Some(g) => {
                self.grant = None;
                KeyRequestVerdict::Deliver(g.ct_sk)
            }
        }
    }
}
