//! End-to-end tests for the `easysec` binary: flag documentation, exit
//! codes, reproducible machine-readable output and the documented example
//! invocations.

use std::process::{Command, Output};

fn easysec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_easysec"))
        .args(args)
        .env_remove("EASYSEC_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn every_subcommand_documents_its_flags() {
    let common = [
        "--seed",
        "--vehicles",
        "--noise-sigma",
        "--config",
        "--output-format",
        "--out",
        "--i-max",
        "--grey-threshold",
        "--grey-cooldown",
    ];
    let per_cmd: &[(&str, &[&str])] = &[
        ("register", &[]),
        ("auth", &[]),
        ("handover", &[]),
        ("attack", &["--scenario", "--attempts"]),
        ("puf-eval", &["--instances", "--challenges", "--repeats", "--corpus", "--export-corpus"]),
        ("bench", &[]),
    ];
    for (cmd, extra) in per_cmd {
        let output = easysec(&[cmd, "--help"]);
        assert!(output.status.success(), "{cmd} --help failed");
        let help = stdout(&output);
        for flag in common.iter().chain(extra.iter()) {
            assert!(help.contains(flag), "{cmd} --help missing {flag}");
        }
    }
}

#[test]
fn auth_example_reports_outcome_and_overhead() {
    let output = easysec(&["auth", "--seed", "42", "--vehicles", "1"]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("authenticated"), "{text}");
    assert!(text.contains("phase1 10 + phase2 14 + phase3 8 = 32 bytes"), "{text}");
}

#[test]
fn bench_csv_lists_one_authenticated_row_per_vehicle() {
    let output =
        easysec(&["bench", "--vehicles", "10", "--seed", "7", "--output-format", "csv"]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11, "{text}");
    assert_eq!(
        lines[0],
        "run,vehicle,status,session_key,phase1_bytes,phase2_bytes,phase3_bytes,total_bytes,latency_us"
    );
    for line in &lines[1..] {
        assert!(line.contains(",authenticated,"), "{line}");
    }
}

#[test]
fn attack_example_exits_clean_with_zero_successes() {
    let output = easysec(&[
        "attack",
        "--scenario",
        "client-impersonation",
        "--seed",
        "1",
        "--attempts",
        "2000",
        "--output-format",
        "csv",
    ]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    assert!(text.contains("client-impersonation,2000,0,2000,true"), "{text}");
}

#[test]
fn unknown_attack_scenario_is_a_config_error() {
    let output = easysec(&["attack", "--scenario", "teleport", "--seed", "1"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn json_and_csv_output_are_byte_identical_across_runs() {
    for format in ["json", "csv"] {
        let a = easysec(&["auth", "--seed", "11", "--vehicles", "3", "--output-format", format]);
        let b = easysec(&["auth", "--seed", "11", "--vehicles", "3", "--output-format", format]);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout, "{format} output must be reproducible");
        let c = easysec(&["auth", "--seed", "12", "--vehicles", "3", "--output-format", format]);
        assert_ne!(a.stdout, c.stdout, "different seeds must differ");
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let output = easysec(&["auth"]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("seed"), "{err}");
}

#[test]
fn env_var_supplies_the_seed() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_easysec"))
        .args(["auth", "--output-format", "json"])
        .env("EASYSEC_SEED", "5")
        .output()
        .expect("binary runs");
    assert_eq!(with_env.status.code(), Some(0));
    let with_flag = easysec(&["auth", "--seed", "5", "--output-format", "json"]);
    assert_eq!(with_env.stdout, with_flag.stdout);
}

#[test]
fn unknown_flags_and_subcommands_exit_2() {
    assert_eq!(easysec(&["auth", "--bogus"]).status.code(), Some(2));
    assert_eq!(easysec(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_file_supplies_values_and_flags_override() {
    let dir = std::env::temp_dir().join(format!("easysec-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.conf");
    std::fs::write(&config, "seed = 21\nvehicles = 2\n").unwrap();

    let from_file = easysec(&["auth", "--config", config.to_str().unwrap(), "--output-format", "json"]);
    assert_eq!(from_file.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(parsed["outcomes"].as_array().unwrap().len(), 2);

    // A flag beats the file.
    let with_flag = easysec(&[
        "auth",
        "--config",
        config.to_str().unwrap(),
        "--vehicles",
        "4",
        "--output-format",
        "json",
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&with_flag.stdout).unwrap();
    assert_eq!(parsed["outcomes"].as_array().unwrap().len(), 4);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn register_reports_database_rows() {
    let output = easysec(&["register", "--seed", "2", "--vehicles", "3", "--output-format", "csv"]);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "vehicle,v_pid,enrollments,responses_per_enrollment");
    assert!(lines[1].ends_with(",2,16"), "{}", lines[1]);
}

#[test]
fn out_flag_redirects_the_report() {
    let dir = std::env::temp_dir().join(format!("easysec-out-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("auth.json");
    let output = easysec(&[
        "auth",
        "--seed",
        "6",
        "--output-format",
        "json",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0));
    assert!(output.stdout.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    assert!(written.contains("\"all_authenticated\":true"), "{written}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn puf_eval_corpus_round_trip() {
    let dir = std::env::temp_dir().join(format!("easysec-corpus-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let a = dir.join("a.crp");
    let b = dir.join("b.crp");
    // Export two corpora from different seeds over their own challenge
    // sets would mismatch; instead export one and derive the second by
    // complementing responses, which keeps the challenge sequence.
    let gen = easysec(&[
        "puf-eval",
        "--seed",
        "3",
        "--instances",
        "2",
        "--challenges",
        "64",
        "--export-corpus",
        a.to_str().unwrap(),
        "--output-format",
        "json",
    ]);
    assert_eq!(gen.status.code(), Some(0), "{}", String::from_utf8_lossy(&gen.stderr));
    let text = std::fs::read_to_string(&a).unwrap();
    let complemented: String = text
        .lines()
        .map(|line| {
            let (c, r) = line.split_once(',').unwrap();
            let r = u64::from_str_radix(r, 16).unwrap();
            format!("{c},{:016x}\n", !r)
        })
        .collect();
    std::fs::write(&b, complemented).unwrap();

    let eval = easysec(&[
        "puf-eval",
        "--corpus",
        a.to_str().unwrap(),
        "--corpus",
        b.to_str().unwrap(),
        "--output-format",
        "json",
    ]);
    assert_eq!(eval.status.code(), Some(0), "{}", String::from_utf8_lossy(&eval.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(parsed["uniqueness_pct"].as_f64().unwrap(), 100.0);
    assert_eq!(parsed["inter_hd_pct"].as_f64().unwrap(), 100.0);
    assert_eq!(parsed["challenges"].as_u64().unwrap(), 64);

    // A single corpus file is not enough for the pairwise metrics.
    let single = easysec(&["puf-eval", "--corpus", a.to_str().unwrap()]);
    assert_eq!(single.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
