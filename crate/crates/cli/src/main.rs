//! `easysec` — scenario runner, PUF evaluation, attack suite and overhead
//! benchmarks for the PUF-based vehicle authentication protocol.
//!
//! Exit codes: 0 success, 1 protocol or assertion failure (an attack got
//! through, an authentication failed), 2 configuration or usage error.
//! All randomized behavior is reproducible from `--seed` (or the
//! `EASYSEC_SEED` environment variable); `table` output may include
//! host-measured timings, `json` and `csv` output never does, so equal
//! invocations produce byte-identical machine-readable output.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use easysec_core::adversary::{self, AttackKind, AttackScenario};
use easysec_core::entities::AuthStatus;
use easysec_core::metrics::{self, CrpCorpus, MetricsRunConfig};
use easysec_core::puf;
use easysec_core::scenario::{Handover, Scenario, ScenarioFile};
use easysec_core::sim::{self, LinkSpec, SimOutput, Topology};
use easysec_core::transcript::MsgLabel;
use easysec_core::wire;

#[derive(Parser)]
#[command(
    name = "easysec",
    version,
    about = "PUF-based mutual-authentication simulator for vehicle networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enroll vehicles over the secure channel and show the database state.
    Register(RunArgs),
    /// Run full three-phase authentications and report outcomes + overhead.
    Auth(RunArgs),
    /// Authenticate, cross a region boundary and rotate identity + key.
    Handover(RunArgs),
    /// Run a scripted attack scenario and report the attacker's yield.
    Attack(AttackArgs),
    /// PUF figures of merit from generated instances or corpus files.
    PufEval(PufEvalArgs),
    /// Concurrent-vehicle run with per-vehicle rows for scripted sweeps.
    Bench(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Master seed for every randomized choice [default: none, required]
    #[arg(long, env = "EASYSEC_SEED")]
    seed: Option<u64>,
    /// Number of vehicles [default: 1]
    #[arg(long)]
    vehicles: Option<usize>,
    /// PUF evaluation noise sigma [default: 0.0]
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Scenario file (key = value lines); flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format [default: table]
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    output_format: OutputFormat,
    /// Write the primary output to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Challenge offsets enrolled per base challenge [default: 15]
    #[arg(long)]
    i_max: Option<u8>,
    /// Failures before a source is grey-listed [default: 5]
    #[arg(long)]
    grey_threshold: Option<u32>,
    /// Grey-list cooldown in seconds [default: 300]
    #[arg(long)]
    grey_cooldown: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Attack scenario: server-impersonation, client-impersonation,
    /// replay-phase1, replay-phase3, dos-flood, eavesdrop or mitm
    #[arg(long)]
    scenario: String,
    /// Override the scenario's default attempt count
    #[arg(long)]
    attempts: Option<u64>,
}

#[derive(Args, Debug)]
struct PufEvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Instances to generate when no corpus files are given [default: 10]
    #[arg(long)]
    instances: Option<usize>,
    /// Challenges per corpus [default: 1000]
    #[arg(long)]
    challenges: Option<usize>,
    /// Repeats for the reliability measurement [default: 10]
    #[arg(long)]
    repeats: Option<usize>,
    /// Compute metrics over corpus files instead of generated instances
    /// (repeatable; needs at least two files with one challenge sequence)
    #[arg(long)]
    corpus: Vec<PathBuf>,
    /// Write the first generated instance's corpus to this file
    #[arg(long)]
    export_corpus: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Register(args) => cmd_register(&args.common),
        Cmd::Auth(args) => cmd_auth(&args.common, false),
        Cmd::Bench(args) => cmd_auth(&args.common, true),
        Cmd::Handover(args) => cmd_handover(&args.common),
        Cmd::Attack(args) => cmd_attack(&args),
        Cmd::PufEval(args) => cmd_puf_eval(&args),
    }
}

/// Merged run configuration: file values, then flag overrides, then
/// defaults.
struct Setup {
    seed: u64,
    scenario: Scenario,
    topology: Topology,
}

fn load_file(common: &CommonArgs) -> Result<ScenarioFile, String> {
    match &common.config {
        None => Ok(ScenarioFile::default()),
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ScenarioFile::parse(&text).map_err(|e| e.to_string())
        }
    }
}

fn setup(common: &CommonArgs, min_rgs: usize) -> Result<Setup, String> {
    let file = load_file(common)?;
    let seed = common
        .seed
        .or(file.seed)
        .ok_or("a seed is required: pass --seed, set EASYSEC_SEED or put seed= in the config")?;

    let mut scenario = Scenario::default();
    file.apply_to(&mut scenario);
    if let Some(x) = common.noise_sigma {
        scenario.noise_sigma = x;
    }
    if let Some(x) = common.i_max {
        scenario.i_max = x;
    }
    if let Some(x) = common.grey_threshold {
        scenario.grey_threshold = x;
    }
    if let Some(x) = common.grey_cooldown {
        scenario.grey_cooldown_us = x * 1_000_000;
    }

    let vehicles = common.vehicles.or(file.vehicles).unwrap_or(1);
    let rsus = file.rsus.unwrap_or(2);
    let rgs = file.rgs.unwrap_or(2).max(min_rgs);
    let link = LinkSpec {
        base_latency_us: file.base_latency_us.unwrap_or(1_000),
        jitter_us: file.jitter_us.unwrap_or(0),
        secure: false,
    };
    let topology = Topology::standard(vehicles, rsus.max(min_rgs), rgs, link);
    Ok(Setup { seed, scenario, topology })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
    }
}

fn run_sim(setup: &Setup) -> Result<SimOutput, String> {
    sim::run(&setup.topology, &setup.scenario, setup.seed).map_err(|e| e.to_string())
}

fn cmd_register(common: &CommonArgs) -> Result<ExitCode, String> {
    let mut s = setup(common, 1)?;
    s.scenario.auth_at_us = None;
    s.scenario.handovers.clear();
    let mut output = run_sim(&s)?;
    output.final_sdb.sort_by_key(|r| r.real_id);
    let text = match common.output_format {
        OutputFormat::Table => {
            let mut t = format!("{:<9} {:>18} {:>12} {:>10}\n", "vehicle", "v_pid", "enrollments", "responses");
            for r in &output.final_sdb {
                t.push_str(&format!(
                    "av{:<7} {:>18} {:>12} {:>10}\n",
                    r.real_id,
                    format!("{:016x}", r.v_pid),
                    r.enrollments,
                    r.enrollments * (s.scenario.i_max as usize + 1)
                ));
            }
            t
        }
        OutputFormat::Json => {
            let v: Vec<serde_json::Value> = output
                .final_sdb
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "vehicle": r.real_id,
                        "v_pid": format!("{:016x}", r.v_pid),
                        "enrollments": r.enrollments,
                        "responses_per_enrollment": s.scenario.i_max as usize + 1,
                    })
                })
                .collect();
            format!("{}\n", serde_json::json!({ "vehicles": v }))
        }
        OutputFormat::Csv => {
            let mut t = String::from("vehicle,v_pid,enrollments,responses_per_enrollment\n");
            for r in &output.final_sdb {
                t.push_str(&format!(
                    "{},{:016x},{},{}\n",
                    r.real_id,
                    r.v_pid,
                    r.enrollments,
                    s.scenario.i_max as usize + 1
                ));
            }
            t
        }
    };
    emit(&common.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

/// Per-flow simulated latency: first phase-1 send to last phase-3 arrival.
fn flow_latency_us(output: &SimOutput, flow: u64) -> u64 {
    let mut start = None;
    let mut end = 0;
    for rec in output.transcript.records() {
        if rec.flow != flow || !rec.label.is_auth_phase() {
            continue;
        }
        if rec.label == MsgLabel::Phase1 && rec.hop == 0 {
            start = Some(rec.sent_us);
        }
        if rec.label == MsgLabel::Phase3 {
            end = end.max(rec.t_us);
        }
    }
    end.saturating_sub(start.unwrap_or(end))
}

fn timing_table(output: &SimOutput) -> String {
    let mut t = String::from("\ncompute (host-measured, not reproducible) and simulated latency\n");
    t.push_str(&format!(
        "{:<8} {:>14} {:>14} {:>16}\n",
        "phase", "av compute ms", "cs compute ms", "sim latency ms"
    ));
    for p in &output.timing.phases {
        t.push_str(&format!(
            "phase-{:<2} {:>14.3} {:>14.3} {:>16.3}\n",
            p.phase,
            p.av_compute_ns_mean as f64 / 1e6,
            p.cs_compute_ns_mean as f64 / 1e6,
            p.sim_latency_us_mean as f64 / 1e3
        ));
    }
    t.push_str(&format!(
        "total    {:>14.3} {:>30.3}\n",
        output.timing.per_flow_compute_ns_mean as f64 / 1e6,
        output.timing.total_sim_latency_us_mean as f64 / 1e3
    ));
    t
}

fn cmd_auth(common: &CommonArgs, bench: bool) -> Result<ExitCode, String> {
    let s = setup(common, 1)?;
    let output = run_sim(&s)?;
    let overhead = wire::overhead_report(&output.transcript).map_err(|e| e.to_string())?;
    let all_ok =
        output.outcomes.iter().all(|o| o.outcome.status == AuthStatus::Authenticated);

    let text = match common.output_format {
        OutputFormat::Table => {
            let mut t = format!(
                "{:<6} {:<9} {:<16} {:>16} {:>14}\n",
                "run", "vehicle", "status", "sk", "latency ms"
            );
            for (idx, o) in output.outcomes.iter().enumerate() {
                let sk = o.outcome.sk.map(|k| format!("{:016x}", k.0)).unwrap_or_else(|| "-".into());
                t.push_str(&format!(
                    "{:<6} {:<9} {:<16} {:>16} {:>14.3}\n",
                    idx,
                    o.av.map(|a| format!("av{a}")).unwrap_or_else(|| "adv".into()),
                    o.outcome.status.as_str(),
                    sk,
                    flow_latency_us(&output, o.flow) as f64 / 1e3
                ));
            }
            t.push_str(&format!(
                "\noverhead: phase1 {} + phase2 {} + phase3 {} = {} bytes over {} run(s)\n",
                overhead.phase1_bytes,
                overhead.phase2_bytes,
                overhead.phase3_bytes,
                overhead.total_bytes,
                overhead.runs
            ));
            t.push_str(&timing_table(&output));
            t
        }
        OutputFormat::Json => {
            let outcomes: Vec<serde_json::Value> = output
                .outcomes
                .iter()
                .enumerate()
                .map(|(idx, o)| {
                    serde_json::json!({
                        "run": idx,
                        "vehicle": o.av,
                        "status": o.outcome.status.as_str(),
                        "session_key": o.outcome.sk.map(|k| format!("{:016x}", k.0)),
                        "latency_us": flow_latency_us(&output, o.flow),
                    })
                })
                .collect();
            format!(
                "{}\n",
                serde_json::json!({
                    "outcomes": outcomes,
                    "overhead": overhead,
                    "all_authenticated": all_ok,
                })
            )
        }
        OutputFormat::Csv => {
            let mut t = String::from(
                "run,vehicle,status,session_key,phase1_bytes,phase2_bytes,phase3_bytes,total_bytes,latency_us\n",
            );
            for (idx, o) in output.outcomes.iter().enumerate() {
                t.push_str(&format!(
                    "{},{},{},{},10,14,8,32,{}\n",
                    idx,
                    o.av.map(|a| a.to_string()).unwrap_or_else(|| "adv".into()),
                    o.outcome.status.as_str(),
                    o.outcome.sk.map(|k| format!("{:016x}", k.0)).unwrap_or_default(),
                    flow_latency_us(&output, o.flow)
                ));
            }
            t
        }
    };
    emit(&common.out, &text)?;
    let _ = bench; // bench shares the auth path; rows per vehicle either way
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_handover(common: &CommonArgs) -> Result<ExitCode, String> {
    let mut s = setup(common, 2)?;
    if s.scenario.handovers.is_empty() {
        s.scenario.handovers.push(Handover { at_us: 5_000_000, av: 0, to_rg: 1 });
    }
    let output = run_sim(&s)?;
    let ok = !output.updates.is_empty()
        && output.updates.iter().all(|u| u.new_pid == u.sdb_pid && u.av_sk == u.sdb_sk);
    let text = match common.output_format {
        OutputFormat::Table => {
            let mut t = format!(
                "{:<9} {:>18} {:>18} {:>9} {:>12}\n",
                "vehicle", "old_pid", "new_pid", "keys", "done at ms"
            );
            for u in &output.updates {
                t.push_str(&format!(
                    "av{:<7} {:>18} {:>18} {:>9} {:>12.3}\n",
                    u.av,
                    format!("{:016x}", u.old_pid),
                    format!("{:016x}", u.new_pid),
                    if u.av_sk == u.sdb_sk { "match" } else { "MISMATCH" },
                    u.completed_at_us as f64 / 1e3
                ));
            }
            if output.updates.is_empty() {
                t.push_str("no identity update completed\n");
            }
            t
        }
        OutputFormat::Json => {
            let updates: Vec<serde_json::Value> = output
                .updates
                .iter()
                .map(|u| {
                    serde_json::json!({
                        "vehicle": u.av,
                        "old_pid": format!("{:016x}", u.old_pid),
                        "new_pid": format!("{:016x}", u.new_pid),
                        "keys_match": u.av_sk == u.sdb_sk,
                        "completed_at_us": u.completed_at_us,
                    })
                })
                .collect();
            format!("{}\n", serde_json::json!({ "updates": updates, "ok": ok }))
        }
        OutputFormat::Csv => {
            let mut t = String::from("vehicle,old_pid,new_pid,keys_match,completed_at_us\n");
            for u in &output.updates {
                t.push_str(&format!(
                    "{},{:016x},{:016x},{},{}\n",
                    u.av,
                    u.old_pid,
                    u.new_pid,
                    u.av_sk == u.sdb_sk,
                    u.completed_at_us
                ));
            }
            t
        }
    };
    emit(&common.out, &text)?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_attack(args: &AttackArgs) -> Result<ExitCode, String> {
    let s = setup(&args.common, 2)?;
    let file = load_file(&args.common)?;
    let kind = AttackKind::from_str(&args.scenario).map_err(|e| e.to_string())?;
    let attempts = args.attempts.or(file.attempts);
    let scenario = AttackScenario { kind, attempts, seed: s.seed };
    let report = adversary::run_attack(&scenario, &s.topology).map_err(|e| e.to_string())?;

    let text = match args.common.output_format {
        OutputFormat::Table => format!(
            "scenario   {}\nattempts   {}\nsuccesses  {}\nrejections {}\nexpected   {}\nresult     {}\ndetail     {}\n",
            report.scenario,
            report.attempts,
            report.successes,
            report.rejections,
            report.expected,
            if report.passed { "PASS" } else { "FAIL" },
            report.detail
        ),
        OutputFormat::Json => format!("{}\n", serde_json::to_string(&report).unwrap()),
        OutputFormat::Csv => format!(
            "scenario,attempts,successes,rejections,passed\n{},{},{},{},{}\n",
            report.scenario, report.attempts, report.successes, report.rejections, report.passed
        ),
    };
    print!("{text}");
    // --out captures the evidence transcript as JSON lines.
    if let Some(path) = &args.common.out {
        let mut buf = Vec::new();
        report.transcript.to_jsonl(&mut buf).map_err(|e| e.to_string())?;
        fs::write(path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_puf_eval(args: &PufEvalArgs) -> Result<ExitCode, String> {
    if !args.corpus.is_empty() {
        return puf_eval_corpora(args);
    }
    let file = load_file(&args.common)?;
    let seed = args
        .common
        .seed
        .or(file.seed)
        .ok_or("a seed is required: pass --seed, set EASYSEC_SEED or put seed= in the config")?;
    let cfg = MetricsRunConfig {
        instances: args.instances.unwrap_or(10),
        challenges: args.challenges.unwrap_or(1000),
        repeats: args.repeats.unwrap_or(10),
        noise_sigma: args.common.noise_sigma.or(file.noise_sigma).unwrap_or(0.0),
    };
    if cfg.noise_sigma < 0.0 {
        return Err("noise sigma must be non-negative".into());
    }
    let (report, corpora) = metrics::evaluate_instances(seed, &cfg).map_err(|e| e.to_string())?;
    if let Some(path) = &args.export_corpus {
        let mut buf = Vec::new();
        puf::write_corpus(&mut buf, &corpora[0].entries).map_err(|e| e.to_string())?;
        fs::write(path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let json = serde_json::to_string(&report).unwrap();
    let text = match args.common.output_format {
        OutputFormat::Table => format!("{}\n{json}\n", report.table()),
        OutputFormat::Json => format!("{json}\n"),
        OutputFormat::Csv => format!(
            "uniqueness_pct,randomness_pct,inter_hd_pct,reliability_pct,instances,challenges,repeats\n{:.2},{:.2},{:.2},{:.2},{},{},{}\n",
            report.uniqueness_pct,
            report.randomness_pct,
            report.inter_hd_pct,
            report.reliability_pct,
            report.sample_counts.instances,
            report.sample_counts.challenges,
            report.sample_counts.repeats
        ),
    };
    emit(&args.common.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn puf_eval_corpora(args: &PufEvalArgs) -> Result<ExitCode, String> {
    if args.corpus.len() < 2 {
        return Err("corpus mode needs at least two --corpus files sharing one challenge set"
            .to_string());
    }
    let mut corpora = Vec::new();
    for path in &args.corpus {
        let text = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries = puf::read_corpus(&text[..]).map_err(|e| e.to_string())?;
        corpora.push(CrpCorpus { entries, source_instance_id: path.display().to_string() });
    }
    let uniq = metrics::uniqueness(&corpora).map_err(|e| e.to_string())?;
    let mut rand_sum = 0.0;
    for c in &corpora {
        rand_sum += metrics::randomness(c).map_err(|e| e.to_string())?;
    }
    let randomness = rand_sum / corpora.len() as f64;
    let inter = metrics::inter_hd(&corpora[0], &corpora[1]).map_err(|e| e.to_string())?;
    let json = serde_json::json!({
        "uniqueness_pct": (uniq * 100.0).round() / 100.0,
        "randomness_pct": (randomness * 100.0).round() / 100.0,
        "inter_hd_pct": (inter * 100.0).round() / 100.0,
        "corpora": corpora.len(),
        "challenges": corpora[0].len(),
    });
    let text = match args.common.output_format {
        OutputFormat::Table => format!(
            "{:<14} {:>10}\n{:<14} {:>10.2}\n{:<14} {:>10.2}\n{:<14} {:>10.2}\nsamples: {} corpora, {} challenges\n{json}\n",
            "metric", "percent", "uniqueness", uniq, "randomness", randomness, "inter-hd", inter,
            corpora.len(), corpora[0].len()
        ),
        OutputFormat::Json => format!("{json}\n"),
        OutputFormat::Csv => format!(
            "uniqueness_pct,randomness_pct,inter_hd_pct,corpora,challenges\n{uniq:.2},{randomness:.2},{inter:.2},{},{}\n",
            corpora.len(),
            corpora[0].len()
        ),
    };
    emit(&args.common.out, &text)?;
    Ok(ExitCode::SUCCESS)
}
