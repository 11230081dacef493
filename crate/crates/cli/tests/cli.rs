use std::path::{Path, PathBuf};
use std::process::Command;

use credence_core::ingest::write_human_csv;
use credence_core::llm::{
    run_llm_expert, ChatClient, ChatRequest, ClientError, ComprehensionSet, LlmExpertConfig,
    RoleFraming, TranscriptWriter,
};
use credence_core::policy::{ConsumerRecord, ExpertRecord, ReplayChoice};
use credence_core::{ExpertAction, Institution, Objective, PricePair, Tier, Treatment};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_credence"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn predict_prints_every_cell_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let text = run_ok(bin().arg("predict").arg("--out").arg(dir.path()));
    assert_eq!(
        text.lines().filter(|l| l.ends_with("true")).count(),
        5,
        "{text}"
    );
    assert!(text.contains("monopoly price under liability: p = 8"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("prediction.json")).unwrap())
            .unwrap();
    assert_eq!(json["all_pass"], true);
    assert!(dir.path().join("prediction.csv").exists());
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let scenario = repo("scenarios/delegation_chosen.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(
            bin()
                .args(["simulate", "--reps", "300", "--out"])
                .arg(dir.path())
                .arg(&scenario),
        );
    }
    for name in [
        "metrics.csv",
        "metrics.json",
        "attraction.csv",
        "digests.ndjson",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn report_digests_matches_simulation_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sim = run_ok(
        bin()
            .args(["simulate", "--reps", "200", "--out"])
            .arg(dir.path())
            .arg(repo("scenarios/aiai_liability.toml")),
    );
    let report = run_ok(
        bin()
            .args(["report", "digests"])
            .arg(dir.path().join("digests.ndjson")),
    );
    // same cells in the same order with the same numbers
    let strip = |t: &str| -> Vec<String> {
        t.lines()
            .map(|l| l.split_whitespace().skip(2).collect::<Vec<_>>().join(" "))
            .collect()
    };
    assert_eq!(strip(&sim), strip(&report));
}

#[test]
fn report_table1_lists_every_cell() {
    let text = run_ok(bin().args(["report", "table1"]));
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("15.68") && text.contains("8.32"));
    assert!(text.contains("8.64") && text.contains("15.36"));
}

#[test]
fn replay_reports_ingest_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let lct_low = ExpertAction::new(Treatment::Lct, Tier::Low);
    let experts: Vec<ExpertRecord> = (0..8)
        .map(|i| ExpertRecord {
            subject_id: format!("e{i}"),
            institution: Institution::Verifiability,
            prices: PricePair { low: 4, high: 7 },
            small: lct_low,
            big: lct_low,
            delegated: false,
            chosen_objective: None,
        })
        .collect();
    let consumers: Vec<ConsumerRecord> = (0..8)
        .map(|i| ConsumerRecord {
            subject_id: format!("c{i}"),
            institution: Institution::Verifiability,
            choice: if i < 6 {
                ReplayChoice::Approach(i % 4)
            } else {
                ReplayChoice::OptOut
            },
        })
        .collect();
    write_human_csv(std::fs::File::create(&path).unwrap(), &experts, &consumers).unwrap();
    let text = run_ok(
        bin()
            .args(["replay", "--reps", "100", "--out"])
            .arg(dir.path().join("out"))
            .arg(&path),
    );
    assert!(text.contains("16 rows accepted, 0 rejected"), "{text}");
    assert!(text.contains("(4, 7)"), "{text}");
    assert!(text.contains("approach 0.75"), "{text}");
    assert!(dir.path().join("out/ingest_summary.json").exists());
}

#[test]
fn simulate_reports_field_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "name = \"bad\"\n\n[[experts]]\npolicy = \"rational\"\nobjective = \"self_interested\"\nprices = { low = 4, high = 12 }\ncount = 4\n\n[[consumers]]\npolicy = \"threshold\"\ncount = 4\n",
    )
    .unwrap();
    let out = bin().arg("simulate").arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("experts[0].prices.high"), "{err}");
}

struct Agent;

impl ChatClient for Agent {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let last = &request.messages.last().unwrap().content;
        if let Some(q) = ComprehensionSet::default_set()
            .questions
            .iter()
            .find(|q| last.starts_with(&q.text))
        {
            return Ok(format!("ANSWER: {}", q.answer));
        }
        if last.contains("Set your two prices") {
            return Ok("ANSWER: small=4, big=8".into());
        }
        Ok("ANSWER: treatment=HCT, charge=high".into())
    }
}

#[test]
fn llm_run_replays_a_recorded_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.ndjson");
    let writer = TranscriptWriter::append_to(&transcript).unwrap();
    let cfg = LlmExpertConfig::new(
        "agent-000",
        "test-model",
        Institution::Liability,
        Objective::SelfInterested,
        RoleFraming::AiAi,
    );
    run_llm_expert(&cfg, &Agent, Some(&writer)).unwrap();
    drop(writer);
    let out = dir.path().join("runs.json");
    run_ok(
        bin()
            .args([
                "llm-run",
                "--institution",
                "liability",
                "--model",
                "test-model",
                "--replay",
            ])
            .arg(&transcript)
            .arg("--out")
            .arg(&out),
    );
    let runs: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(runs[0]["status"], "completed");
    assert_eq!(runs[0]["strategy"]["prices"]["high"], 8);
    // a different objective changes the requests, so strict replay refuses
    let status = bin()
        .args([
            "llm-run",
            "--institution",
            "liability",
            "--model",
            "test-model",
        ])
        .args(["--objective", "efficiency_loving", "--replay"])
        .arg(&transcript)
        .output()
        .unwrap();
    assert!(!status.status.success());
}
