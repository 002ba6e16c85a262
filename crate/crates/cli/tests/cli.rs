use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

fn viassist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viassist"))
        .args(args)
        .env_remove("VIASSIST_MLLM_URL")
        .env_remove("VIASSIST_DETECTOR_URL")
        .env_remove("VIASSIST_EMBED_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus(n: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    let o = viassist(&["gen-corpus", "--seed", "3", "--n", &n.to_string(), "--out", root.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(&format!("wrote {} records", 6 * n)));
    (dir, root)
}

fn manifest(root: &Path) -> Vec<Value> {
    fs::read_to_string(root.join("manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn first_of(root: &Path, category: &str) -> (PathBuf, String) {
    let r = manifest(root)
        .into_iter()
        .find(|r| r["category"] == category)
        .unwrap();
    (root.join(r["image"].as_str().unwrap()), r["question"].as_str().unwrap().to_owned())
}

fn sidecar(image: &Path) -> String {
    format!("{}.boxes.json", image.display())
}

#[test]
fn dataset_validate_and_stats() {
    let (_dir, root) = corpus(2);
    let root_s = root.to_str().unwrap();
    let o = viassist(&["dataset", "validate", root_s]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "ok: 12 records");

    let o = viassist(&["dataset", "stats", root_s]);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["total"], 12);
    assert_eq!(stats["answerable"], 2);
    assert_eq!(stats["answerable_ratio"]["numerator"], 1);
    assert_eq!(stats["answerable_ratio"]["denominator"], 6);
    assert_eq!(stats["counts"]["irrelevant"], 2);

    fs::remove_file(root.join(manifest(&root)[0]["image"].as_str().unwrap())).unwrap();
    let o = viassist(&["dataset", "validate", root_s]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    assert!(viassist(&["dataset", "validate", root_s, "--skip-images"]).status.success());
}

#[test]
fn assess_formats_and_errors() {
    let (_dir, root) = corpus(1);
    let (image, question) = first_of(&root, "incomplete_target");
    let img = image.to_str().unwrap();
    let side = sidecar(&image);

    let o = viassist(&["assess", "--image", img, "--question", &question, "--annotations", &side]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["mode"]["kind"], "incomplete_target");
    assert!(v["response"]["suggestion"].as_str().unwrap().len() > 10);

    let o = viassist(&[
        "assess", "--image", img, "--question", &question, "--annotations", &side, "--format", "text",
    ]);
    let text = stdout(&o);
    assert!(text.starts_with("mode: incomplete_target"), "{text}");

    // no detector configured: the target cannot be found, still exit 0
    let o = viassist(&["assess", "--image", img, "--question", &question]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["mode"]["kind"], "target_absent");
    assert!(v["warnings"].as_array().is_some_and(|w| !w.is_empty()));

    assert_eq!(viassist(&["assess", "--image", "/no/such.png", "--question", "q"]).status.code(), Some(2));
    assert_eq!(viassist(&["assess", "--image", img, "--question", "  "]).status.code(), Some(2));
    let bad = root.join("bad.json");
    fs::write(&bad, "{\"boxes\": 3}").unwrap();
    let o = viassist(&["assess", "--image", img, "--question", &question, "--annotations", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn answer_gates_and_exit_codes() {
    let (_dir, root) = corpus(1);
    let (good, question) = first_of(&root, "good");
    let (blurred, blur_q) = first_of(&root, "low_quality");
    let g = good.to_str().unwrap();
    let gs = sidecar(&good);

    let o = viassist(&["answer", "--image", g, "--question", &question, "--annotations", &gs, "--mock-answer", "EXIT"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["response"]["answer"], "EXIT");

    let o = viassist(&[
        "answer", "--image", blurred.to_str().unwrap(), "--question", &blur_q, "--mock-answer", "EXIT",
    ]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["response"].get("answer").is_none());
    assert!(v["response"]["suggestion"].is_string());

    // good capture, no answer backend
    let o = viassist(&["answer", "--image", g, "--question", &question, "--annotations", &gs]);
    assert_eq!(o.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["mode"]["kind"], "good_quality");

    let o = viassist(&["answer", "--image", g, "--question", &question, "--baseline", "--mock-answer", "EXIT"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["prompt"].as_str().unwrap().starts_with(&format!("{question} If the target can not be seen")));
    assert_eq!(viassist(&["answer", "--image", g, "--question", &question, "--baseline"]).status.code(), Some(3));
}

#[test]
fn config_file_sets_thresholds() {
    let (dir, root) = corpus(1);
    let (good, question) = first_of(&root, "good");
    let cfg = dir.path().join("viassist.conf");
    fs::write(&cfg, "# everything counts as too dark\ndark_luma = 254\nlowlight_luma = 255\n").unwrap();
    let o = viassist(&[
        "--config",
        cfg.to_str().unwrap(),
        "assess",
        "--image",
        good.to_str().unwrap(),
        "--question",
        &question,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["report"]["mode"]["defect"], "dark");

    fs::write(&cfg, "dark_luma = 60\nlowlight_luma = 50\n").unwrap();
    let o = viassist(&["--config", cfg.to_str().unwrap(), "dataset", "stats", root.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&cfg, "colour = red\n").unwrap();
    let o = viassist(&["--config", cfg.to_str().unwrap(), "dataset", "stats", root.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_scores_predictions() {
    let (dir, root) = corpus(1);
    let preds = dir.path().join("preds.jsonl");
    let lines: Vec<String> = manifest(&root)
        .iter()
        .map(|r| {
            let mut text = r["response"]["description"].as_str().unwrap().to_owned();
            if let Some(s) = r["response"]["suggestion"].as_str() {
                text = format!("{text} {s}");
            }
            serde_json::json!({"id": r["id"], "text": text}).to_string()
        })
        .collect();
    fs::write(&preds, lines.join("\n")).unwrap();
    let out = dir.path().join("report.json");
    for provider in ["mock", "one-hot"] {
        let o = viassist(&[
            "eval",
            "--dataset",
            root.to_str().unwrap(),
            "--predictions",
            preds.to_str().unwrap(),
            "--embeddings",
            provider,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["overall"]["count"], 6);
        for key in ["rouge1_f1", "rouge_l_f1", "bertscore_f1"] {
            assert!((report["overall"][key].as_f64().unwrap() - 1.0).abs() < 1e-9, "{provider} {key}");
        }
        assert_eq!(report["categories"].as_object().unwrap().len(), 6);
    }

    fs::write(&preds, &lines[0]).unwrap();
    let o = viassist(&["eval", "--dataset", root.to_str().unwrap(), "--predictions", preds.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = viassist(&[
        "eval", "--dataset", root.to_str().unwrap(), "--predictions", preds.to_str().unwrap(), "--embeddings", "magic",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_report_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("sim.json");
    let traces = dir.path().join("traces");
    let args = [
        "simulate",
        "--trials",
        "25",
        "--seed",
        "4",
        "--max-steps",
        "12",
        "--report",
        report.to_str().unwrap(),
        "--traces",
        traces.to_str().unwrap(),
    ];
    let o = viassist(&args);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("converged "));
    let first = fs::read(&report).unwrap();
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["trials"], 25);
    assert_eq!(fs::read_dir(&traces).unwrap().count(), 25);
    let trace0 = fs::read(traces.join("trace-0000.json")).unwrap();

    assert!(viassist(&args).status.success());
    assert_eq!(fs::read(&report).unwrap(), first);
    assert_eq!(fs::read(traces.join("trace-0000.json")).unwrap(), trace0);
}

#[test]
fn augment_offline() {
    let (dir, root) = corpus(1);
    let out = dir.path().join("augmented");
    let o = viassist(&[
        "dataset", "augment", root.to_str().unwrap(), "--n", "2", "--out", out.to_str().unwrap(), "--offline",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = manifest(&out);
    assert!(records.len() > 6);
    assert!(records.iter().any(|r| r["source"] == "augmented"));
    assert!(viassist(&["dataset", "validate", out.to_str().unwrap()]).status.success());

    let o = viassist(&["dataset", "augment", root.to_str().unwrap(), "--n", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_corpus_rejects_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = viassist(&["gen-corpus", "--n", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_answers_health() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_viassist"))
        .args(["serve", "--port", &port.to_string(), "--mock-answer", "EXIT"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut reply = None;
    while Instant::now() < deadline {
        if let Some(r) = get(port, "/v1/health") {
            reply = Some(r);
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    let missing = get(port, "/v1/sessions/nope");
    child.kill().unwrap();
    child.wait().unwrap();
    let reply = reply.expect("server came up");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.ends_with("{\"status\":\"ok\"}"), "{reply}");
    assert!(missing.unwrap().starts_with("HTTP/1.1 404"));
}
