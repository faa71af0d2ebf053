//! Engine for a lightweight PUF-based mutual-authentication protocol for
//! vehicle networks, plus a deterministic discrete-event simulator and an
//! attack harness around it.
//!
//! Module map:
//! - [`puf`]: software model of a 64-bit arbiter PUF
//! - [`metrics`]: figures of merit over challenge-response corpora
//! - [`crypto`]: the tiny primitive layer (keystream XOR, 64-bit mixer, nonces)
//! - [`wire`]: bit-exact message codecs (10/14/8-byte authentication phases)
//! - [`entities`]: protocol state machines (vehicle, server, roadside relays)
//! - [`sim`]: seeded event-loop simulator with transcript capture
//! - [`scenario`]: run configuration and the key-value scenario file format
//! - [`adversary`]: scripted attacker behaviors and the transcript leak scanner

pub mod adversary;
pub mod crypto;
pub mod entities;
pub mod metrics;
pub mod puf;
pub mod scenario;
pub mod sim;
pub mod transcript;
pub mod wire;
