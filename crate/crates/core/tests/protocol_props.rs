//! Cross-cutting protocol properties that span modules: identity
//! unlinkability, forward secrecy, the full attack battery, scenario-file
//! integration and failure under perturbed devices.

use easysec_core::adversary::{self, AttackKind, AttackScenario};
use easysec_core::entities::AuthStatus;
use easysec_core::scenario::{Handover, Scenario, ScenarioFile};
use easysec_core::sim::{self, LinkSpec, Topology, World};
use easysec_core::transcript::MsgLabel;

fn topo(n_avs: usize) -> Topology {
    Topology::standard(n_avs, 2, 2, LinkSpec::default())
}

fn contains_bytes(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn old_pid_never_appears_after_rotation() {
    // Authenticate, hand over, then authenticate again under the new
    // identity; nothing sent after the rotation may carry the old bytes.
    let scenario = Scenario {
        handovers: vec![Handover { at_us: 5_000_000, av: 0, to_rg: 1 }],
        ..Scenario::default()
    };
    let mut world = World::new(&topo(1), &scenario, 2024).unwrap();
    world.schedule_auth(0, 0);
    world.schedule_handover(0, 1, 5_000_000);
    world.schedule_auth(0, 30_000_000);
    world.run_to_quiescence();
    let output = world.finish();

    assert_eq!(output.updates.len(), 1);
    assert_eq!(output.outcomes.len(), 2);
    assert!(output.outcomes.iter().all(|o| o.outcome.status == AuthStatus::Authenticated));

    let update = &output.updates[0];
    let old_pid_bytes = update.old_pid.to_be_bytes();
    for rec in output.transcript.records() {
        if rec.sent_us > update.completed_at_us {
            assert!(
                !contains_bytes(&rec.bytes, &old_pid_bytes),
                "old identity visible at t={} in {:?}",
                rec.sent_us,
                rec.label
            );
        }
    }
    // The post-rotation authentication runs under the new identity.
    let late_phase1 = output
        .transcript
        .records()
        .iter()
        .find(|r| r.label == MsgLabel::Phase1 && r.sent_us >= 30_000_000)
        .expect("second authentication");
    assert!(contains_bytes(&late_phase1.bytes, &update.new_pid.to_be_bytes()));
}

#[test]
fn session_key_is_present_iff_authenticated() {
    for seed in 0..20u64 {
        let output = sim::run(&topo(2), &Scenario::default(), seed).unwrap();
        for o in &output.outcomes {
            assert_eq!(o.outcome.sk.is_some(), o.outcome.status == AuthStatus::Authenticated);
        }
    }
}

#[test]
fn full_attack_battery_yields_no_attacker_session() {
    // Reduced attempt counts here; the acceptance suite runs the full
    // Monte-Carlo sizes.
    let attempts = [
        (AttackKind::ServerImpersonation, 1_000),
        (AttackKind::ClientImpersonation, 2_000),
        (AttackKind::ReplayPhase1, 20),
        (AttackKind::ReplayPhase3, 20),
        (AttackKind::DosFlood, 10),
        (AttackKind::Eavesdrop, 10),
        (AttackKind::Mitm, 60),
    ];
    let topology = topo(1);
    for (kind, n) in attempts {
        let scenario = AttackScenario { kind, attempts: Some(n), seed: 99 };
        let report = adversary::run_attack(&scenario, &topology).unwrap();
        assert!(report.passed, "{}: {}", report.scenario, report.detail);
        if kind != AttackKind::ServerImpersonation {
            assert_eq!(report.successes, 0, "{}", report.scenario);
        }
    }
}

#[test]
fn scenario_file_drives_a_run() {
    let text = "\
# integration scenario
seed = 77
vehicles = 2
rsus = 2
rgs = 2
noise_sigma = 0.0
i_max = 7
n_enrollments = 1
grey_threshold = 5
grey_cooldown_s = 120
base_latency_us = 500
handover_at_s = 5
handover_av = 0
handover_to_rg = 1
";
    let file = ScenarioFile::parse(text).unwrap();
    let mut scenario = Scenario::default();
    file.apply_to(&mut scenario);
    assert_eq!(scenario.i_max, 7);
    assert_eq!(scenario.grey_cooldown_us, 120_000_000);
    assert_eq!(scenario.handovers.len(), 1);

    let link = LinkSpec {
        base_latency_us: file.base_latency_us.unwrap(),
        jitter_us: file.jitter_us.unwrap_or(0),
        secure: false,
    };
    let topology = Topology::standard(
        file.vehicles.unwrap(),
        file.rsus.unwrap(),
        file.rgs.unwrap(),
        link,
    );
    let output = sim::run(&topology, &scenario, file.seed.unwrap()).unwrap();
    assert_eq!(output.outcomes.len(), 2);
    assert!(output.outcomes.iter().all(|o| o.outcome.status == AuthStatus::Authenticated));
    assert_eq!(output.updates.len(), 1);
}

#[test]
fn perturbed_device_fails_authentication() {
    // A tampered or faulty device is modeled as a noise spike: the
    // regenerated response no longer matches the enrolled one, so the
    // vehicle cannot even recognize the server's reply.
    let scenario = Scenario { noise_sigma: 50.0, n_enrollments: 1, ..Scenario::default() };
    let mut rejected = 0;
    for seed in 0..20u64 {
        let output = sim::run(&topo(1), &scenario, seed).unwrap();
        let status = output.outcomes[0].outcome.status;
        assert_ne!(status, AuthStatus::Authenticated, "seed {seed}");
        if status == AuthStatus::InvalidServer || status == AuthStatus::AuthFailed {
            rejected += 1;
        }
    }
    assert_eq!(rejected, 20);
}

#[test]
fn transcript_export_is_valid_jsonl() {
    let output = sim::run(&topo(1), &Scenario::default(), 7).unwrap();
    let mut buf = Vec::new();
    output.transcript.to_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), output.transcript.len());
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["t", "from", "to", "phase", "bytes_hex"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
    }
}
