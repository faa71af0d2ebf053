//! Deterministic discrete-event simulator: chain topology (AV—RSU—RG—CS—SDB),
//! seeded per-hop latencies, message scheduling, transcript capture and
//! timing measurement. One `(topology, scenario, master_seed)` triple always
//! produces a byte-identical transcript; host-measured compute time is kept
//! strictly separate from simulated link latency.

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::entities::{
    register_av, AuthOutcome, AuthStatus, AvState, AvStateDump, CsConfig, CsState,
    KeyRequestVerdict, NodeId, Phase1Verdict, ProtocolError, RsuState, SdbRecordDump,
    ServerVerdict, StoredGrant, PID_TTL_US,
};
use crate::puf;
use crate::scenario::{ConfigError, Scenario};
use crate::transcript::{MsgLabel, Transcript, TranscriptRecord};
use crate::wire::{
    decode_key_request, decode_new_key_grant, decode_pid_forward, Phase1Msg, Phase2Msg, Phase3Msg,
    PseudoId, SessionUpdateMsg,
};

/// Typed node address. Names are stable (`av0`, `rsu1`, `rg0`, `cs`, `sdb`,
/// `adv`) and so are the numeric ids the grey lists key on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Av(usize),
    Rsu(usize),
    Rg(usize),
    Cs,
    Sdb,
    Attacker,
}

impl NodeRef {
    pub fn name(&self) -> String {
        match self {
            NodeRef::Av(i) => format!("av{i}"),
            NodeRef::Rsu(i) => format!("rsu{i}"),
            NodeRef::Rg(i) => format!("rg{i}"),
            NodeRef::Cs => "cs".into(),
            NodeRef::Sdb => "sdb".into(),
            NodeRef::Attacker => "adv".into(),
        }
    }

    pub fn id(&self) -> NodeId {
        NodeId(match self {
            NodeRef::Cs => 1,
            NodeRef::Sdb => 2,
            NodeRef::Attacker => 3,
            NodeRef::Av(i) => 100 + *i as u32,
            NodeRef::Rsu(i) => 10_000 + *i as u32,
            NodeRef::Rg(i) => 20_000 + *i as u32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub base_latency_us: u64,
    pub jitter_us: u64,
    pub secure: bool,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self { base_latency_us: 1_000, jitter_us: 0, secure: false }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub a: NodeRef,
    pub b: NodeRef,
    pub spec: LinkSpec,
}

/// Static network shape. Radio legs (vehicle or attacker to an RSU) share
/// one link spec because attachment moves at handover; infrastructure links
/// are explicit.
#[derive(Debug, Clone)]
pub struct Topology {
    pub n_avs: usize,
    pub n_rsus: usize,
    pub n_rgs: usize,
    /// Initial RSU of each vehicle.
    pub av_attachment: Vec<usize>,
    /// Serving gateway of each RSU.
    pub coverage: Vec<usize>,
    pub links: Vec<Link>,
    pub radio_link: LinkSpec,
}

impl Topology {
    /// Chain topology: all vehicles start on RSU 0, RSU `j` maps to RG
    /// `j % n_rgs`, gateways interconnect and reach the single server, and
    /// the server-database link is secure.
    pub fn standard(n_avs: usize, n_rsus: usize, n_rgs: usize, link: LinkSpec) -> Self {
        let coverage: Vec<usize> = (0..n_rsus).map(|j| j % n_rgs.max(1)).collect();
        let mut links = Vec::new();
        for (j, rg) in coverage.iter().enumerate() {
            links.push(Link { a: NodeRef::Rsu(j), b: NodeRef::Rg(*rg), spec: link });
        }
        for g in 0..n_rgs {
            links.push(Link { a: NodeRef::Rg(g), b: NodeRef::Cs, spec: link });
            for h in (g + 1)..n_rgs {
                links.push(Link { a: NodeRef::Rg(g), b: NodeRef::Rg(h), spec: link });
            }
        }
        links.push(Link {
            a: NodeRef::Cs,
            b: NodeRef::Sdb,
            spec: LinkSpec { secure: true, ..link },
        });
        Self {
            n_avs,
            n_rsus,
            n_rgs,
            av_attachment: vec![0; n_avs],
            coverage,
            links,
            radio_link: link,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_avs == 0 {
            return Err(ConfigError::BadTopology("need at least one vehicle".into()));
        }
        if self.n_rsus == 0 || self.n_rgs == 0 {
            return Err(ConfigError::BadTopology("need at least one RSU and one RG".into()));
        }
        if self.av_attachment.len() != self.n_avs {
            return Err(ConfigError::BadTopology(
                "every vehicle must attach to exactly one RSU".into(),
            ));
        }
        if self.av_attachment.iter().any(|r| *r >= self.n_rsus) {
            return Err(ConfigError::BadTopology("vehicle attached to missing RSU".into()));
        }
        if self.coverage.len() != self.n_rsus || self.coverage.iter().any(|g| *g >= self.n_rgs) {
            return Err(ConfigError::BadTopology("every RSU must map to exactly one RG".into()));
        }
        let sdb_link = self
            .links
            .iter()
            .find(|l| {
                matches!((l.a, l.b), (NodeRef::Cs, NodeRef::Sdb) | (NodeRef::Sdb, NodeRef::Cs))
            })
            .ok_or_else(|| ConfigError::BadTopology("missing CS-SDB link".into()))?;
        if !sdb_link.spec.secure {
            return Err(ConfigError::BadTopology("CS-SDB link must be secure".into()));
        }
        // Every uplink route must be complete: RSU to its gateway, gateway
        // to the server, and gateways pairwise for the handover legs.
        for (j, rg) in self.coverage.iter().enumerate() {
            if self.link_spec(NodeRef::Rsu(j), NodeRef::Rg(*rg)).is_none() {
                return Err(ConfigError::BadTopology(format!("missing link rsu{j}-rg{rg}")));
            }
        }
        for g in 0..self.n_rgs {
            if self.link_spec(NodeRef::Rg(g), NodeRef::Cs).is_none() {
                return Err(ConfigError::BadTopology(format!("missing link rg{g}-cs")));
            }
            for h in (g + 1)..self.n_rgs {
                if self.link_spec(NodeRef::Rg(g), NodeRef::Rg(h)).is_none() {
                    return Err(ConfigError::BadTopology(format!("missing link rg{g}-rg{h}")));
                }
            }
        }
        Ok(())
    }

    fn link_spec(&self, a: NodeRef, b: NodeRef) -> Option<LinkSpec> {
        let radio = |n: NodeRef| matches!(n, NodeRef::Av(_) | NodeRef::Attacker);
        if (radio(a) && matches!(b, NodeRef::Rsu(_))) || (radio(b) && matches!(a, NodeRef::Rsu(_)))
        {
            return Some(self.radio_link);
        }
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
            .map(|l| l.spec)
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    route: Vec<NodeRef>,
    pos: usize,
    label: MsgLabel,
    bytes: Vec<u8>,
    flow: u64,
    sent_us: u64,
    secure: bool,
    /// Issue time of the key grant this envelope carries, where applicable.
    grant_issued_at_us: Option<u64>,
}

#[derive(Debug, Clone)]
enum TimerAction {
    StartAuth { av: usize },
    CommitUpdate { flow: u64 },
}

#[derive(Debug, Clone)]
enum EventKind {
    Deliver(Envelope),
    TimerFire(TimerAction),
    BoundaryCross { av: usize, to_rg: usize },
    Inject { label: MsgLabel, bytes: Vec<u8>, flow: u64 },
}

struct Ev {
    at: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ev {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowOutcome {
    pub flow: u64,
    /// Vehicle index for honest flows; `None` when the attacker originated it.
    pub av: Option<usize>,
    pub outcome: AuthOutcome,
    pub at_us: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtoErrorEvent {
    pub flow: u64,
    pub error: String,
    pub at_us: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateOutcome {
    pub av: usize,
    pub old_pid: u64,
    pub new_pid: u64,
    pub av_sk: u64,
    pub sdb_pid: u64,
    pub sdb_sk: u64,
    pub completed_at_us: u64,
}

/// Ground-truth response material per enrollment, for leak auditing. The
/// simulator hands this to test harnesses; no protocol party reads it.
#[derive(Debug, Clone, Serialize)]
pub struct OracleEnrollment {
    pub av: usize,
    pub base_c: u64,
    pub responses: Vec<u64>,
    pub reg_c1: u64,
    pub reg_r2: u64,
}

/// Host-measured compute time, attributed to the handler that produced or
/// verified each phase message.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ComputeAccum {
    pub p1_av_ns: u64,
    pub p1_cs_ns: u64,
    pub p2_av_ns: u64,
    pub p3_cs_ns: u64,
    pub per_flow_ns: HashMap<u64, u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTiming {
    pub phase: u8,
    pub av_compute_ns_mean: u64,
    pub cs_compute_ns_mean: u64,
    pub sim_latency_us_mean: u64,
}

/// Measured compute (host clock) and simulated latency (scenario clock),
/// reported separately plus a combined end-to-end figure.
#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub phases: Vec<PhaseTiming>,
    pub flows: u64,
    pub per_flow_compute_ns_mean: u64,
    pub total_sim_latency_us_mean: u64,
    pub end_to_end_ns_mean: u64,
}

/// Everything a finished run yields.
#[derive(Debug)]
pub struct SimOutput {
    pub transcript: Transcript,
    pub outcomes: Vec<FlowOutcome>,
    pub timing: TimingReport,
    pub warnings: Vec<String>,
    pub protocol_errors: Vec<ProtoErrorEvent>,
    pub updates: Vec<UpdateOutcome>,
    pub final_avs: Vec<AvStateDump>,
    pub final_sdb: Vec<SdbRecordDump>,
    pub oracle: Vec<OracleEnrollment>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
}

#[derive(Debug, Clone, Copy)]
struct UpdateCtx {
    av: usize,
    old_pid: PseudoId,
    from_rg: usize,
    to_rg: usize,
    from_rsu: usize,
    to_rsu: usize,
}

/// One live simulation. Harnesses may drive it step by step (schedule, run,
/// inspect, schedule more); [`run`] wraps the common whole-scenario case.
pub struct World {
    topo: Topology,
    scenario: Scenario,
    avs: Vec<AvState>,
    av_rngs: Vec<ChaCha20Rng>,
    cs: CsState,
    cs_rng: ChaCha20Rng,
    latency_rng: ChaCha20Rng,
    rsus: Vec<RsuState>,
    attach: Vec<usize>,
    queue: BinaryHeap<Ev>,
    seq: u64,
    now: u64,
    flow_counter: u64,
    transcript: Transcript,
    outcomes: Vec<FlowOutcome>,
    protocol_errors: Vec<ProtoErrorEvent>,
    warnings: Vec<String>,
    av_flow: HashMap<usize, u64>,
    flow_origin: HashMap<u64, Option<usize>>,
    deferred_handover: HashMap<usize, usize>,
    update_ctx: HashMap<u64, UpdateCtx>,
    compute: ComputeAccum,
    messages_sent: u64,
    messages_delivered: u64,
    updates: Vec<UpdateOutcome>,
}

impl World {
    /// Build the world and run every vehicle's registration ceremony over
    /// the secure channel. Seed derivation order is fixed: server PUF,
    /// server RNG, latency RNG, then per vehicle (PUF seed, RNG seed).
    pub fn new(
        topo: &Topology,
        scenario: &Scenario,
        master_seed: u64,
    ) -> Result<Self, ConfigError> {
        topo.validate()?;
        if scenario.i_max == 0 {
            return Err(ConfigError::BadScenario("i_max must be at least 1".into()));
        }
        let mut master = ChaCha20Rng::seed_from_u64(master_seed);
        let cs_puf_seed = master.next_u64();
        let cs_rng = ChaCha20Rng::seed_from_u64(master.next_u64());
        let latency_rng = ChaCha20Rng::seed_from_u64(master.next_u64());
        let cs_puf = puf::new_instance(cs_puf_seed, scenario.noise_sigma)
            .map_err(|e| ConfigError::BadScenario(e.to_string()))?;
        let config = CsConfig {
            i_max: scenario.i_max,
            grey_threshold: scenario.grey_threshold,
            grey_cooldown_us: scenario.grey_cooldown_us,
            reuse_enrollments: scenario.reuse_enrollments,
        };
        let cs = CsState::new(cs_puf, config);

        let mut avs = Vec::with_capacity(topo.n_avs);
        let mut av_rngs = Vec::with_capacity(topo.n_avs);
        for _ in 0..topo.n_avs {
            let puf_seed = master.next_u64();
            let rng_seed = master.next_u64();
            let av_puf = puf::new_instance(puf_seed, scenario.noise_sigma)
                .map_err(|e| ConfigError::BadScenario(e.to_string()))?;
            avs.push(AvState::new(av_puf));
            av_rngs.push(ChaCha20Rng::seed_from_u64(rng_seed));
        }

        let mut world = World {
            attach: topo.av_attachment.clone(),
            topo: topo.clone(),
            scenario: scenario.clone(),
            avs,
            av_rngs,
            cs,
            cs_rng,
            latency_rng,
            rsus: (0..topo.n_rsus).map(|_| RsuState::default()).collect(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            flow_counter: 0,
            transcript: Transcript::new(),
            outcomes: Vec::new(),
            protocol_errors: Vec::new(),
            warnings: Vec::new(),
            av_flow: HashMap::new(),
            flow_origin: HashMap::new(),
            deferred_handover: HashMap::new(),
            update_ctx: HashMap::new(),
            compute: ComputeAccum::default(),
            messages_sent: 0,
            messages_delivered: 0,
            updates: Vec::new(),
        };
        world.register_all();
        Ok(world)
    }

    fn register_all(&mut self) {
        for av_idx in 0..self.topo.n_avs {
            let summary = register_av(
                &mut self.avs[av_idx],
                &mut self.cs,
                av_idx as u64,
                self.scenario.n_enrollments,
                true,
                &mut self.cs_rng,
            )
            .expect("secure registration cannot fail");
            let flow = self.next_flow();
            let pid = summary.v_pid;
            let record = self.cs.sdb.get(pid).expect("just registered");
            let start = record.enrollments.len() - summary.enrollments_added;
            let mut recs: Vec<(NodeRef, NodeRef, MsgLabel, Vec<u8>)> = Vec::new();
            for e in &record.enrollments[start..] {
                recs.push((
                    NodeRef::Cs,
                    NodeRef::Av(av_idx),
                    MsgLabel::RegChallenge,
                    e.base_c.0.to_be_bytes().to_vec(),
                ));
                recs.push((
                    NodeRef::Av(av_idx),
                    NodeRef::Cs,
                    MsgLabel::RegResponse,
                    e.responses[0].0.to_be_bytes().to_vec(),
                ));
                let offsets: Vec<u8> =
                    e.responses[1..].iter().flat_map(|r| r.0.to_be_bytes()).collect();
                recs.push((NodeRef::Av(av_idx), NodeRef::Cs, MsgLabel::RegOffsets, offsets));
                let mut store = e.reg_c1.0.to_be_bytes().to_vec();
                store.extend_from_slice(&e.reg_r2.0.to_be_bytes());
                recs.push((NodeRef::Cs, NodeRef::Sdb, MsgLabel::RegStore, store));
            }
            recs.push((
                NodeRef::Sdb,
                NodeRef::Av(av_idx),
                MsgLabel::RegPid,
                pid.0.to_be_bytes().to_vec(),
            ));
            for (from, to, label, bytes) in recs {
                self.messages_sent += 1;
                self.messages_delivered += 1;
                self.transcript.push(TranscriptRecord {
                    t_us: self.now,
                    sent_us: self.now,
                    from: from.name(),
                    to: to.name(),
                    label,
                    bytes,
                    flow,
                    hop: 0,
                    secure: true,
                });
            }
        }
    }

    fn next_flow(&mut self) -> u64 {
        self.flow_counter += 1;
        self.flow_counter
    }

    fn push_event(&mut self, at: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Ev { at, seq: self.seq, kind });
    }

    pub fn schedule_auth(&mut self, av: usize, at_us: u64) {
        self.push_event(at_us, EventKind::TimerFire(TimerAction::StartAuth { av }));
    }

    pub fn schedule_handover(&mut self, av: usize, to_rg: usize, at_us: u64) {
        self.push_event(at_us, EventKind::BoundaryCross { av, to_rg });
    }

    /// Attacker-originated raw bytes, routed from the attacker node to the
    /// server. Returns the flow id the injection runs under.
    pub fn schedule_inject(&mut self, at_us: u64, label: MsgLabel, bytes: Vec<u8>) -> u64 {
        let flow = self.next_flow();
        self.flow_origin.insert(flow, None);
        self.push_event(at_us, EventKind::Inject { label, bytes, flow });
        flow
    }

    fn latency(&mut self, a: NodeRef, b: NodeRef) -> u64 {
        let spec = self
            .topo
            .link_spec(a, b)
            .unwrap_or_else(|| panic!("no link between {} and {}", a.name(), b.name()));
        let jitter =
            if spec.jitter_us == 0 { 0 } else { self.latency_rng.gen_range(0..=spec.jitter_us) };
        spec.base_latency_us + jitter
    }

    fn link_secure(&self, a: NodeRef, b: NodeRef) -> bool {
        self.topo.link_spec(a, b).map(|s| s.secure).unwrap_or(false)
    }

    /// Put a message on its first link; later hops are scheduled as each
    /// delivery is processed.
    fn emit(
        &mut self,
        route: Vec<NodeRef>,
        label: MsgLabel,
        bytes: Vec<u8>,
        flow: u64,
        grant_issued_at_us: Option<u64>,
    ) {
        assert!(route.len() >= 2, "route needs a sender and a receiver");
        let lat = self.latency(route[0], route[1]);
        let secure = self.link_secure(route[0], route[1]);
        let env = Envelope {
            route,
            pos: 1,
            label,
            bytes,
            flow,
            sent_us: self.now,
            secure,
            grant_issued_at_us,
        };
        self.messages_sent += 1;
        let at = self.now + lat;
        self.push_event(at, EventKind::Deliver(env));
    }

    fn uplink_route(&self, origin: NodeRef) -> Vec<NodeRef> {
        let rsu = match origin {
            NodeRef::Av(i) => self.attach[i],
            NodeRef::Attacker => 0,
            _ => panic!("uplink starts at a radio node"),
        };
        vec![origin, NodeRef::Rsu(rsu), NodeRef::Rg(self.topo.coverage[rsu]), NodeRef::Cs]
    }

    fn downlink_route(&self, target: NodeRef) -> Vec<NodeRef> {
        let mut route = self.uplink_route(target);
        route.reverse();
        route
    }

    /// Process queued events in time order until nothing is left or the
    /// scenario time limit is reached.
    pub fn run_to_quiescence(&mut self) {
        while let Some(ev) = self.queue.pop() {
            if ev.at > self.scenario.time_limit_us {
                self.warnings.push(format!(
                    "time limit {}us reached; {} events dropped",
                    self.scenario.time_limit_us,
                    self.queue.len() + 1
                ));
                self.queue.clear();
                return;
            }
            self.now = ev.at;
            match ev.kind {
                EventKind::Deliver(env) => self.on_deliver(env),
                EventKind::TimerFire(action) => self.on_timer(action),
                EventKind::BoundaryCross { av, to_rg } => self.on_boundary_cross(av, to_rg),
                EventKind::Inject { label, bytes, flow } => {
                    let route = self.uplink_route(NodeRef::Attacker);
                    self.emit(route, label, bytes, flow, None);
                }
            }
        }
    }

    fn on_timer(&mut self, action: TimerAction) {
        match action {
            TimerAction::StartAuth { av } => self.start_auth(av),
            TimerAction::CommitUpdate { flow } => self.commit_update(flow),
        }
    }

    fn start_auth(&mut self, av: usize) {
        let flow = self.next_flow();
        let now = self.now;
        let started = Instant::now();
        let result = self.avs[av].initiate(NodeRef::Cs.id(), now, &mut self.av_rngs[av]);
        let spent = started.elapsed().as_nanos() as u64;
        self.compute.p1_av_ns += spent;
        *self.compute.per_flow_ns.entry(flow).or_default() += spent;
        match result {
            Ok(msg) => {
                self.av_flow.insert(av, flow);
                self.flow_origin.insert(flow, Some(av));
                let route = self.uplink_route(NodeRef::Av(av));
                self.emit(route, MsgLabel::Phase1, msg.encode().to_vec(), flow, None);
            }
            Err(e) => self.warnings.push(format!("av{av} cannot initiate: {e}")),
        }
    }

    fn on_deliver(&mut self, env: Envelope) {
        self.messages_delivered += 1;
        let from = env.route[env.pos - 1];
        let to = env.route[env.pos];
        self.transcript.push(TranscriptRecord {
            t_us: self.now,
            sent_us: env.sent_us,
            from: from.name(),
            to: to.name(),
            label: env.label,
            bytes: env.bytes.clone(),
            flow: env.flow,
            hop: (env.pos - 1) as u32,
            secure: env.secure,
        });
        if env.pos + 1 < env.route.len() {
            // Relay: byte-identical forward on the next link.
            let next = env.route[env.pos + 1];
            let lat = self.latency(to, next);
            let secure = self.link_secure(to, next);
            let mut fwd = env;
            fwd.pos += 1;
            fwd.sent_us = self.now;
            fwd.secure = secure;
            self.messages_sent += 1;
            let at = self.now + lat;
            self.push_event(at, EventKind::Deliver(fwd));
            return;
        }
        self.handle_endpoint(to, env);
    }

    fn handle_endpoint(&mut self, node: NodeRef, env: Envelope) {
        match (node, env.label) {
            (NodeRef::Cs, MsgLabel::Phase1) => self.cs_phase1(env),
            (NodeRef::Av(i), MsgLabel::Phase2) => self.av_phase2(i, env),
            (NodeRef::Cs, MsgLabel::Phase3) => self.cs_phase3(env),
            (NodeRef::Cs, MsgLabel::UpdatePid) => self.cs_update_pid(env),
            (NodeRef::Rg(g), MsgLabel::UpdateGrant) => self.rg_update_grant(g, env),
            (NodeRef::Rsu(r), MsgLabel::UpdateGrant) => self.rsu_store_grant(r, env),
            (NodeRef::Av(i), MsgLabel::UpdatePid) => self.av_pid_notify(i, env),
            (NodeRef::Rsu(r), MsgLabel::UpdateRequest) => self.rsu_key_request(r, env),
            (NodeRef::Av(i), MsgLabel::UpdateDelivery) => self.av_key_delivery(i, env),
            (node, label) => self.warnings.push(format!(
                "unhandled {} at {} (flow {})",
                label.as_str(),
                node.name(),
                env.flow
            )),
        }
    }

    fn record_outcome(&mut self, flow: u64, outcome: AuthOutcome) {
        let origin = self.flow_origin.get(&flow).copied().flatten();
        self.outcomes.push(FlowOutcome { flow, av: origin, outcome, at_us: self.now });
        if let Some(av) = origin {
            self.av_flow.remove(&av);
            if outcome.status == AuthStatus::Authenticated {
                if let Some(to_rg) = self.deferred_handover.remove(&av) {
                    self.begin_handover(av, to_rg);
                }
            } else if let Some(to_rg) = self.deferred_handover.remove(&av) {
                self.warnings.push(format!(
                    "deferred handover of av{av} to rg{to_rg} dropped: authentication failed"
                ));
            }
        }
    }

    fn record_error(&mut self, flow: u64, error: &ProtocolError) {
        self.protocol_errors.push(ProtoErrorEvent {
            flow,
            error: error.to_string(),
            at_us: self.now,
        });
    }

    fn cs_phase1(&mut self, env: Envelope) {
        let origin = env.route[0];
        let msg = match Phase1Msg::decode(&env.bytes) {
            Ok(m) => m,
            Err(e) => {
                self.warnings.push(format!("flow {}: undecodable phase1: {e}", env.flow));
                return;
            }
        };
        let now = self.now;
        let started = Instant::now();
        let verdict = self.cs.handle_phase1(origin.id(), env.flow, &msg, now, &mut self.cs_rng);
        let spent = started.elapsed().as_nanos() as u64;
        self.compute.p1_cs_ns += spent;
        *self.compute.per_flow_ns.entry(env.flow).or_default() += spent;
        match verdict {
            Phase1Verdict::Challenge(p2) => {
                let route = self.downlink_route(origin);
                self.emit(route, MsgLabel::Phase2, p2.encode().to_vec(), env.flow, None);
            }
            Phase1Verdict::InvalidClient(_) => {
                self.record_outcome(
                    env.flow,
                    AuthOutcome::rejected(AuthStatus::InvalidClient, None),
                );
            }
            Phase1Verdict::GreyListed => {
                self.record_outcome(env.flow, AuthOutcome::rejected(AuthStatus::GreyListed, None));
            }
        }
    }

    fn av_phase2(&mut self, av: usize, env: Envelope) {
        let msg = match Phase2Msg::decode(&env.bytes) {
            Ok(m) => m,
            Err(e) => {
                self.warnings.push(format!("flow {}: undecodable phase2: {e}", env.flow));
                return;
            }
        };
        let now = self.now;
        let started = Instant::now();
        let verdict =
            self.avs[av].verify_server(NodeRef::Cs.id(), &msg, now, &mut self.av_rngs[av]);
        let spent = started.elapsed().as_nanos() as u64;
        self.compute.p2_av_ns += spent;
        *self.compute.per_flow_ns.entry(env.flow).or_default() += spent;
        match verdict {
            Ok(ServerVerdict::Proceed(p3)) => {
                let route = self.uplink_route(NodeRef::Av(av));
                self.emit(route, MsgLabel::Phase3, p3.encode().to_vec(), env.flow, None);
            }
            Ok(ServerVerdict::InvalidServer) => {
                self.record_outcome(
                    env.flow,
                    AuthOutcome::rejected(AuthStatus::InvalidServer, None),
                );
            }
            Err(e) => {
                self.record_error(env.flow, &e);
            }
        }
    }

    fn cs_phase3(&mut self, env: Envelope) {
        let origin = env.route[0];
        let msg = match Phase3Msg::decode(&env.bytes) {
            Ok(m) => m,
            Err(e) => {
                self.warnings.push(format!("flow {}: undecodable phase3: {e}", env.flow));
                return;
            }
        };
        let now = self.now;
        let started = Instant::now();
        let verdict = self.cs.verify_client(origin.id(), env.flow, &msg, now);
        let spent = started.elapsed().as_nanos() as u64;
        self.compute.p3_cs_ns += spent;
        *self.compute.per_flow_ns.entry(env.flow).or_default() += spent;
        match verdict {
            Ok(outcome) => self.record_outcome(env.flow, outcome),
            Err(e) => self.record_error(env.flow, &e),
        }
    }

    fn on_boundary_cross(&mut self, av: usize, to_rg: usize) {
        if to_rg >= self.topo.n_rgs {
            self.warnings.push(format!("handover of av{av} to missing rg{to_rg} ignored"));
            return;
        }
        if self.av_flow.contains_key(&av) {
            // Authentication in flight: finish it first.
            self.deferred_handover.insert(av, to_rg);
            return;
        }
        if self.avs[av].sk.is_none() {
            self.warnings
                .push(format!("handover of av{av} skipped: vehicle not authenticated"));
            return;
        }
        self.begin_handover(av, to_rg);
    }

    fn begin_handover(&mut self, av: usize, to_rg: usize) {
        let from_rsu = self.attach[av];
        let from_rg = self.topo.coverage[from_rsu];
        if from_rg == to_rg {
            self.warnings.push(format!("av{av} already served by rg{to_rg}; handover skipped"));
            return;
        }
        let Some(to_rsu) = self.topo.coverage.iter().position(|g| *g == to_rg) else {
            self.warnings.push(format!("no RSU maps to rg{to_rg}; handover skipped"));
            return;
        };
        let Some(old_pid) = self.avs[av].v_pid else {
            self.warnings.push(format!("av{av} has no pseudo identity; handover skipped"));
            return;
        };
        let flow = self.next_flow();
        self.flow_origin.insert(flow, Some(av));
        self.update_ctx
            .insert(flow, UpdateCtx { av, old_pid, from_rg, to_rg, from_rsu, to_rsu });
        let bytes = SessionUpdateMsg::PidForward(old_pid).encode();
        let route = vec![NodeRef::Rg(from_rg), NodeRef::Rg(to_rg), NodeRef::Cs];
        self.emit(route, MsgLabel::UpdatePid, bytes, flow, None);
    }

    fn cs_update_pid(&mut self, env: Envelope) {
        let Some(ctx) = self.update_ctx.get(&env.flow).copied() else {
            self.warnings.push(format!("flow {}: orphan update_pid", env.flow));
            return;
        };
        let pid = match decode_pid_forward(&env.bytes) {
            Ok(p) => p,
            Err(e) => {
                self.warnings.push(format!("flow {}: undecodable update_pid: {e}", env.flow));
                return;
            }
        };
        let now = self.now;
        match self.cs.start_session_update(pid, now, &mut self.cs_rng) {
            Ok((pid_new, ct_sk)) => {
                let bytes = SessionUpdateMsg::NewKeyGrant { pid_new, ct_sk }.encode();
                let route = vec![NodeRef::Cs, NodeRef::Rg(ctx.to_rg)];
                self.emit(route, MsgLabel::UpdateGrant, bytes, env.flow, Some(now));
            }
            Err(e) => {
                self.record_error(env.flow, &e);
                self.warnings.push(format!("flow {}: session update refused: {e}", env.flow));
                self.update_ctx.remove(&env.flow);
            }
        }
    }

    fn rg_update_grant(&mut self, rg: usize, env: Envelope) {
        let Some(ctx) = self.update_ctx.get(&env.flow).copied() else {
            self.warnings.push(format!("flow {}: orphan update_grant at rg{rg}", env.flow));
            return;
        };
        let Ok((pid_new, _)) = decode_new_key_grant(&env.bytes) else {
            self.warnings.push(format!("flow {}: undecodable grant", env.flow));
            return;
        };
        // Notify leg: new identity travels back to the vehicle via the old
        // region; the grant itself moves to the new serving RSU.
        let notify = SessionUpdateMsg::PidForward(pid_new).encode();
        let route = vec![
            NodeRef::Rg(rg),
            NodeRef::Rg(ctx.from_rg),
            NodeRef::Rsu(ctx.from_rsu),
            NodeRef::Av(ctx.av),
        ];
        self.emit(route, MsgLabel::UpdatePid, notify, env.flow, None);
        let route = vec![NodeRef::Rg(rg), NodeRef::Rsu(ctx.to_rsu)];
        self.emit(
            route,
            MsgLabel::UpdateGrant,
            env.bytes.clone(),
            env.flow,
            env.grant_issued_at_us,
        );
    }

    fn rsu_store_grant(&mut self, rsu: usize, env: Envelope) {
        let Ok((pid_new, ct_sk)) = decode_new_key_grant(&env.bytes) else {
            self.warnings.push(format!("flow {}: undecodable grant at rsu{rsu}", env.flow));
            return;
        };
        let issued = env.grant_issued_at_us.unwrap_or(self.now);
        self.rsus[rsu].receive_grant(StoredGrant {
            pid_new,
            ct_sk,
            issued_at_us: issued,
            ttl_us: PID_TTL_US,
        });
    }

    fn av_pid_notify(&mut self, av: usize, env: Envelope) {
        let Some(ctx) = self.update_ctx.get(&env.flow).copied() else {
            self.warnings.push(format!("flow {}: orphan pid notify at av{av}", env.flow));
            return;
        };
        let Ok(pid_new) = decode_pid_forward(&env.bytes) else {
            self.warnings.push(format!("flow {}: undecodable pid notify", env.flow));
            return;
        };
        self.avs[av].receive_pid_new(pid_new);
        match self.avs[av].make_key_request() {
            Ok(pid_plus_one) => {
                let bytes = SessionUpdateMsg::KeyRequest { pid_plus_one }.encode();
                let route = vec![NodeRef::Av(av), NodeRef::Rsu(ctx.to_rsu)];
                self.emit(route, MsgLabel::UpdateRequest, bytes, env.flow, None);
            }
            Err(e) => self.record_error(env.flow, &e),
        }
    }

    fn rsu_key_request(&mut self, rsu: usize, env: Envelope) {
        let Some(ctx) = self.update_ctx.get(&env.flow).copied() else {
            self.warnings.push(format!("flow {}: orphan key request at rsu{rsu}", env.flow));
            return;
        };
        let Ok(pid_plus_one) = decode_key_request(&env.bytes) else {
            self.warnings.push(format!("flow {}: undecodable key request", env.flow));
            return;
        };
        let origin = env.route[0];
        let now = self.now;
        match self.rsus[rsu].handle_key_request(pid_plus_one, now) {
            KeyRequestVerdict::Deliver(ct_sk) => {
                // The database-side commit rides the authenticated infra
                // channel; it is scheduled first so it lands no later than
                // the radio delivery.
                self.push_event(
                    now,
                    EventKind::TimerFire(TimerAction::CommitUpdate { flow: env.flow }),
                );
                let bytes = SessionUpdateMsg::KeyDelivery { ct_sk }.encode();
                let route = vec![NodeRef::Rsu(rsu), NodeRef::Av(ctx.av)];
                self.emit(route, MsgLabel::UpdateDelivery, bytes, env.flow, None);
            }
            KeyRequestVerdict::Refused(reason) => {
                self.cs.grey.record_failure(origin.id(), now);
                self.warnings.push(format!(
                    "flow {}: key request refused ({reason:?}); vehicle must re-authenticate",
                    env.flow
                ));
                self.update_ctx.remove(&env.flow);
            }
        }
    }

    fn commit_update(&mut self, flow: u64) {
        let Some(ctx) = self.update_ctx.get(&flow).copied() else {
            return;
        };
        match self.cs.commit_session_update(ctx.old_pid, self.now) {
            Ok(_) => {}
            Err(e) => {
                self.record_error(flow, &e);
                self.warnings.push(format!("flow {flow}: update commit refused: {e}"));
                self.update_ctx.remove(&flow);
            }
        }
    }

    fn av_key_delivery(&mut self, av: usize, env: Envelope) {
        let Some(ctx) = self.update_ctx.remove(&env.flow) else {
            self.warnings.push(format!("flow {}: orphan key delivery", env.flow));
            return;
        };
        let Ok(ct_sk) = crate::wire::decode_key_delivery(&env.bytes) else {
            self.warnings.push(format!("flow {}: undecodable key delivery", env.flow));
            return;
        };
        match self.avs[av].apply_key_delivery(ct_sk) {
            Ok((new_pid, av_sk)) => {
                self.attach[av] = ctx.to_rsu;
                let record = self.cs.sdb.get(new_pid);
                let (sdb_pid, sdb_sk) = record
                    .map(|r| (r.v_pid.0, r.current_sk.map(|s| s.0).unwrap_or(0)))
                    .unwrap_or((0, 0));
                self.updates.push(UpdateOutcome {
                    av,
                    old_pid: ctx.old_pid.0,
                    new_pid: new_pid.0,
                    av_sk: av_sk.0,
                    sdb_pid,
                    sdb_sk,
                    completed_at_us: self.now,
                });
            }
            Err(e) => self.record_error(env.flow, &e),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn outcomes(&self) -> &[FlowOutcome] {
        &self.outcomes
    }

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn finish(self) -> SimOutput {
        let timing = timing_report(&self.transcript, &self.compute);
        let mut oracle = Vec::new();
        for record in self.cs.sdb.records_sorted() {
            for e in &record.enrollments {
                oracle.push(OracleEnrollment {
                    av: record.real_id as usize,
                    base_c: e.base_c.0,
                    responses: e.responses.iter().map(|r| r.0).collect(),
                    reg_c1: e.reg_c1.0,
                    reg_r2: e.reg_r2.0,
                });
            }
        }
        SimOutput {
            transcript: self.transcript,
            outcomes: self.outcomes,
            timing,
            warnings: self.warnings,
            protocol_errors: self.protocol_errors,
            updates: self.updates,
            final_avs: self.avs.iter().map(|a| a.dump()).collect(),
            final_sdb: self.cs.dump_sdb(),
            oracle,
            messages_sent: self.messages_sent,
            messages_delivered: self.messages_delivered,
        }
    }
}

/// Run a whole scenario: every vehicle authenticates at the scheduled time,
/// handovers fire as configured, and the run ends at quiescence.
pub fn run(
    topo: &Topology,
    scenario: &Scenario,
    master_seed: u64,
) -> Result<SimOutput, ConfigError> {
    let mut world = World::new(topo, scenario, master_seed)?;
    if let Some(at) = scenario.auth_at_us {
        for av in 0..topo.n_avs {
            world.schedule_auth(av, at);
        }
    }
    for h in &scenario.handovers {
        world.schedule_handover(h.av, h.to_rg, h.at_us);
    }
    world.run_to_quiescence();
    Ok(world.finish())
}

/// Derive the timing report: per-phase means of host compute and simulated
/// latency, plus the combined end-to-end figure. Latency for a phase is the
/// span from the originator's send to the endpoint's arrival.
pub fn timing_report(transcript: &Transcript, compute: &ComputeAccum) -> TimingReport {
    #[derive(Default, Clone, Copy)]
    struct Span {
        sent: u64,
        arrived: u64,
        max_hop: u32,
    }
    let mut spans: BTreeMap<(u64, u8), Span> = BTreeMap::new();
    for rec in transcript.records() {
        let phase = match rec.label {
            MsgLabel::Phase1 => 1,
            MsgLabel::Phase2 => 2,
            MsgLabel::Phase3 => 3,
            _ => continue,
        };
        let span = spans.entry((rec.flow, phase)).or_default();
        if rec.hop == 0 {
            span.sent = rec.sent_us;
        }
        if rec.hop >= span.max_hop {
            span.max_hop = rec.hop;
            span.arrived = rec.t_us;
        }
    }

    let mut phase_latency_sum = [0u64; 3];
    let mut phase_count = [0u64; 3];
    let mut flow_phases: BTreeMap<u64, u8> = BTreeMap::new();
    for ((flow, phase), span) in &spans {
        phase_latency_sum[(phase - 1) as usize] += span.arrived - span.sent;
        phase_count[(phase - 1) as usize] += 1;
        *flow_phases.entry(*flow).or_default() += 1;
    }
    let flows = flow_phases.values().filter(|&&n| n == 3).count() as u64;

    let mean = |sum: u64, n: u64| sum.checked_div(n).unwrap_or(0);
    let phases = vec![
        PhaseTiming {
            phase: 1,
            av_compute_ns_mean: mean(compute.p1_av_ns, phase_count[0].max(1)),
            cs_compute_ns_mean: mean(compute.p1_cs_ns, phase_count[0].max(1)),
            sim_latency_us_mean: mean(phase_latency_sum[0], phase_count[0]),
        },
        PhaseTiming {
            phase: 2,
            av_compute_ns_mean: mean(compute.p2_av_ns, phase_count[1].max(1)),
            cs_compute_ns_mean: 0,
            sim_latency_us_mean: mean(phase_latency_sum[1], phase_count[1]),
        },
        PhaseTiming {
            phase: 3,
            av_compute_ns_mean: 0,
            cs_compute_ns_mean: mean(compute.p3_cs_ns, phase_count[2].max(1)),
            sim_latency_us_mean: mean(phase_latency_sum[2], phase_count[2]),
        },
    ];

    let auth_flow_compute: u64 = compute.per_flow_ns.values().sum();
    let auth_flows_with_compute = compute.per_flow_ns.len() as u64;
    let per_flow_compute_ns_mean = mean(auth_flow_compute, auth_flows_with_compute);
    let total_sim_latency_us_mean = phases.iter().map(|p| p.sim_latency_us_mean).sum::<u64>();
    TimingReport {
        phases,
        flows,
        per_flow_compute_ns_mean,
        total_sim_latency_us_mean,
        end_to_end_ns_mean: per_flow_compute_ns_mean + total_sim_latency_us_mean * 1_000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(n_avs: usize) -> Topology {
        Topology::standard(n_avs, 2, 2, LinkSpec::default())
    }

    fn jsonl(output: &SimOutput) -> String {
        let mut buf = Vec::new();
        output.transcript.to_jsonl(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn happy_path_single_vehicle() {
        let output = run(&topo(1), &Scenario::default(), 1).unwrap();
        assert_eq!(output.outcomes.len(), 1);
        assert_eq!(output.outcomes[0].outcome.status, AuthStatus::Authenticated);
        // Exactly three protocol messages end to end, three hops each.
        for (label, hops) in [(MsgLabel::Phase1, 3), (MsgLabel::Phase2, 3), (MsgLabel::Phase3, 3)]
        {
            let n = output.transcript.records().iter().filter(|r| r.label == label).count();
            assert_eq!(n, hops, "{label:?}");
        }
        // Vehicle-side key matches the database.
        let av_sk = output.final_avs[0].sk.unwrap();
        assert_eq!(output.final_sdb[0].current_sk, Some(av_sk));
        assert_eq!(output.outcomes[0].outcome.sk.unwrap().0, av_sk);
    }

    #[test]
    fn phase1_routes_over_three_hops() {
        let output = run(&topo(1), &Scenario::default(), 2).unwrap();
        let hops: Vec<(String, String)> = output
            .transcript
            .records()
            .iter()
            .filter(|r| r.label == MsgLabel::Phase1)
            .map(|r| (r.from.clone(), r.to.clone()))
            .collect();
        assert_eq!(
            hops,
            vec![
                ("av0".into(), "rsu0".into()),
                ("rsu0".into(), "rg0".into()),
                ("rg0".into(), "cs".into()),
            ]
        );
    }

    #[test]
    fn identical_seeds_identical_transcripts() {
        let scenario = Scenario::default();
        let a = run(&topo(3), &scenario, 42).unwrap();
        let b = run(&topo(3), &scenario, 42).unwrap();
        assert_eq!(jsonl(&a), jsonl(&b));
        let c = run(&topo(3), &scenario, 43).unwrap();
        assert_ne!(jsonl(&a), jsonl(&c));
    }

    #[test]
    fn relays_forward_byte_identically() {
        let output = run(&topo(1), &Scenario::default(), 3).unwrap();
        for label in [MsgLabel::Phase1, MsgLabel::Phase2, MsgLabel::Phase3] {
            let payloads: Vec<&Vec<u8>> = output
                .transcript
                .records()
                .iter()
                .filter(|r| r.label == label)
                .map(|r| &r.bytes)
                .collect();
            assert!(payloads.windows(2).all(|w| w[0] == w[1]), "{label:?} mutated in relay");
        }
    }

    #[test]
    fn conservation_every_send_is_delivered() {
        let scenario = Scenario {
            handovers: vec![crate::scenario::Handover { at_us: 5_000_000, av: 0, to_rg: 1 }],
            ..Scenario::default()
        };
        let output = run(&topo(2), &scenario, 4).unwrap();
        assert_eq!(output.messages_sent, output.messages_delivered);
    }

    #[test]
    fn simulated_time_never_decreases() {
        let output = run(&topo(4), &Scenario::default(), 5).unwrap();
        let times: Vec<u64> = output.transcript.records().iter().map(|r| r.t_us).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn latency_arithmetic_exact() {
        // 1 ms per hop, 3 hops per message, 3 messages: 9 ms of simulated
        // latency, phase by phase.
        let output = run(&topo(1), &Scenario::default(), 6).unwrap();
        for p in &output.timing.phases {
            assert_eq!(p.sim_latency_us_mean, 3_000, "phase {}", p.phase);
        }
        assert_eq!(output.timing.total_sim_latency_us_mean, 9_000);
    }

    #[test]
    fn zero_latency_end_to_end_equals_compute() {
        let topo = Topology::standard(
            1,
            1,
            1,
            LinkSpec { base_latency_us: 0, jitter_us: 0, secure: false },
        );
        let output = run(&topo, &Scenario::default(), 7).unwrap();
        assert_eq!(output.timing.total_sim_latency_us_mean, 0);
        assert_eq!(output.timing.end_to_end_ns_mean, output.timing.per_flow_compute_ns_mean);
    }

    #[test]
    fn ten_vehicles_all_authenticate() {
        let output = run(&topo(10), &Scenario::default(), 8).unwrap();
        assert_eq!(output.outcomes.len(), 10);
        assert!(output.outcomes.iter().all(|o| o.outcome.status == AuthStatus::Authenticated));
    }

    #[test]
    fn handover_rotates_pid_and_key_on_both_sides() {
        let scenario = Scenario {
            handovers: vec![crate::scenario::Handover { at_us: 5_000_000, av: 0, to_rg: 1 }],
            ..Scenario::default()
        };
        let output = run(&topo(1), &scenario, 9).unwrap();
        assert_eq!(output.updates.len(), 1);
        let u = &output.updates[0];
        assert_eq!(u.new_pid, u.sdb_pid);
        assert_eq!(u.av_sk, u.sdb_sk);
        assert_ne!(u.old_pid, u.new_pid);
        // Update traffic appears only after the boundary event.
        for rec in output.transcript.records() {
            if matches!(
                rec.label,
                MsgLabel::UpdatePid
                    | MsgLabel::UpdateGrant
                    | MsgLabel::UpdateRequest
                    | MsgLabel::UpdateDelivery
            ) {
                assert!(rec.sent_us >= 5_000_000);
            }
        }
        // Final states agree.
        assert_eq!(output.final_avs[0].v_pid, Some(u.new_pid));
        assert_eq!(output.final_avs[0].sk, Some(u.av_sk));
    }

    #[test]
    fn two_crossings_yield_distinct_new_pids() {
        let scenario = Scenario {
            handovers: vec![
                crate::scenario::Handover { at_us: 5_000_000, av: 0, to_rg: 1 },
                crate::scenario::Handover { at_us: 10_000_000, av: 0, to_rg: 0 },
            ],
            ..Scenario::default()
        };
        let output = run(&topo(1), &scenario, 10).unwrap();
        assert_eq!(output.updates.len(), 2);
        assert_ne!(output.updates[0].new_pid, output.updates[1].new_pid);
    }

    #[test]
    fn crossing_during_auth_is_deferred_until_authenticated() {
        // Boundary fires at t=2ms, while phase 1 is still in flight.
        let scenario = Scenario {
            handovers: vec![crate::scenario::Handover { at_us: 2_000, av: 0, to_rg: 1 }],
            ..Scenario::default()
        };
        let output = run(&topo(1), &scenario, 11).unwrap();
        assert_eq!(output.updates.len(), 1);
        let auth_done = output.outcomes[0].at_us;
        let first_update_sent = output
            .transcript
            .records()
            .iter()
            .find(|r| r.label == MsgLabel::UpdatePid)
            .map(|r| r.sent_us)
            .unwrap();
        assert!(first_update_sent >= auth_done, "update must wait for authentication");
    }

    #[test]
    fn handover_without_auth_is_a_warning_noop() {
        let scenario = Scenario {
            auth_at_us: None,
            handovers: vec![crate::scenario::Handover { at_us: 1_000, av: 0, to_rg: 1 }],
            ..Scenario::default()
        };
        let output = run(&topo(1), &scenario, 12).unwrap();
        assert!(output.updates.is_empty());
        assert!(output.warnings.iter().any(|w| w.contains("not authenticated")));
    }

    #[test]
    fn registration_rides_the_secure_channel_only() {
        let output = run(&topo(1), &Scenario::default(), 13).unwrap();
        for rec in output.transcript.records() {
            let is_reg = matches!(
                rec.label,
                MsgLabel::RegChallenge
                    | MsgLabel::RegResponse
                    | MsgLabel::RegOffsets
                    | MsgLabel::RegStore
                    | MsgLabel::RegPid
            );
            if is_reg {
                assert!(rec.secure, "registration leaked onto a public link");
            } else {
                assert!(!rec.secure, "protocol traffic should ride public links");
            }
        }
    }

    #[test]
    fn invalid_topologies_are_rejected() {
        let mut t = topo(1);
        t.coverage = vec![5, 5];
        assert!(matches!(t.validate(), Err(ConfigError::BadTopology(_))));

        let mut t = topo(1);
        t.links.retain(|l| !matches!((l.a, l.b), (NodeRef::Cs, NodeRef::Sdb)));
        assert!(matches!(t.validate(), Err(ConfigError::BadTopology(_))));

        let mut t = topo(1);
        t.links.retain(|l| !matches!(l.a, NodeRef::Rsu(0)));
        assert!(matches!(t.validate(), Err(ConfigError::BadTopology(_))));

        let t = Topology::standard(0, 1, 1, LinkSpec::default());
        assert!(matches!(t.validate(), Err(ConfigError::BadTopology(_))));
    }

    #[test]
    fn injected_phase1_from_attacker_is_rejected() {
        let mut world = World::new(&topo(1), &Scenario::default(), 14).unwrap();
        let bogus =
            Phase1Msg { v_pid: crate::wire::PseudoId(0xbad), n_v: crate::crypto::Nonce16(7) };
        world.schedule_inject(0, MsgLabel::Phase1, bogus.encode().to_vec());
        world.run_to_quiescence();
        let output = world.finish();
        assert_eq!(output.outcomes.len(), 1);
        let adv_outcome = output.outcomes.iter().find(|o| o.av.is_none()).unwrap();
        assert_eq!(adv_outcome.outcome.status, AuthStatus::InvalidClient);
    }

    #[test]
    fn jitter_is_seeded_and_deterministic() {
        let topo = Topology::standard(
            2,
            1,
            1,
            LinkSpec { base_latency_us: 500, jitter_us: 400, secure: false },
        );
        let a = run(&topo, &Scenario::default(), 15).unwrap();
        let b = run(&topo, &Scenario::default(), 15).unwrap();
        assert_eq!(jsonl(&a), jsonl(&b));
        // Jitter actually spreads arrival times.
        let lat: Vec<u64> = a
            .transcript
            .records()
            .iter()
            .filter(|r| r.label.is_auth_phase())
            .map(|r| r.t_us - r.sent_us)
            .collect();
        assert!(lat.iter().any(|l| *l != lat[0]));
    }
}
