//! Ordered, timestamped log of every simulated message. Each relay hop gets
//! its own record carrying exactly the bytes the codec produced, so overhead
//! accounting and attack assertions work off the same evidence.

use std::io::{self, Write};

use serde::Serialize;

/// What a record carries. Authentication phases are distinguished from
/// registration-ceremony and session-update traffic so byte accounting can
/// select exactly the protocol payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgLabel {
    Phase1,
    Phase2,
    Phase3,
    RegChallenge,
    RegResponse,
    RegOffsets,
    RegStore,
    RegPid,
    UpdatePid,
    UpdateGrant,
    UpdateRequest,
    UpdateDelivery,
}

impl MsgLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            MsgLabel::Phase1 => "phase1",
            MsgLabel::Phase2 => "phase2",
            MsgLabel::Phase3 => "phase3",
            MsgLabel::RegChallenge => "reg_challenge",
            MsgLabel::RegResponse => "reg_response",
            MsgLabel::RegOffsets => "reg_offsets",
            MsgLabel::RegStore => "reg_store",
            MsgLabel::RegPid => "reg_pid",
            MsgLabel::UpdatePid => "update_pid",
            MsgLabel::UpdateGrant => "update_grant",
            MsgLabel::UpdateRequest => "update_request",
            MsgLabel::UpdateDelivery => "update_delivery",
        }
    }

    pub fn is_auth_phase(&self) -> bool {
        matches!(self, MsgLabel::Phase1 | MsgLabel::Phase2 | MsgLabel::Phase3)
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptRecord {
    /// Arrival time at `to`, microseconds of simulated time.
    pub t_us: u64,
    /// Time the sender put this hop on the link.
    pub sent_us: u64,
    pub from: String,
    pub to: String,
    pub label: MsgLabel,
    pub bytes: Vec<u8>,
    /// Protocol flow this message belongs to.
    pub flow: u64,
    /// Hop index along the route; 0 is the originator's own emission.
    pub hop: u32,
    /// True when the hop rode a link marked secure (invisible to taps).
    pub secure: bool,
}

/// Append-only, time-ordered message log.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a record. Arrival times must never decrease.
    pub fn push(&mut self, rec: TranscriptRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                rec.t_us >= last.t_us,
                "transcript time went backwards: {} then {}",
                last.t_us,
                rec.t_us
            );
        }
        self.records.push(rec);
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// JSON-lines export, one message per line:
    /// `{"t":..,"from":..,"to":..,"phase":..,"bytes_hex":..}`.
    pub fn to_jsonl<W: Write>(&self, w: &mut W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            t: u64,
            from: &'a str,
            to: &'a str,
            phase: &'a str,
            bytes_hex: String,
        }
        for rec in &self.records {
            let line = Line {
                t: rec.t_us,
                from: &rec.from,
                to: &rec.to,
                phase: rec.label.as_str(),
                bytes_hex: hex(&rec.bytes),
            };
            serde_json::to_writer(&mut *w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
