use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::Value;
use triadcal_cli::exit;
use triadcal_cli::manifest::RunManifest;
use triadcal_core::simulation::sequential_ids;
use triadcal_core::triads::{write_triads, Triad};

fn triadcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triadcal")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = triadcal(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary line is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn embeddings(path: &Path) {
    let mut text = String::from("image_id,identity_id,gender,race,v0,v1,v2,v3\n");
    for i in 0..12 {
        for k in 0..3 {
            let v: Vec<String> = (0..4).map(|d| format!("{:.3}", ((i * 7 + k * 3 + d * 5) % 11) as f64 / 11.0 + if d == i % 4 { 1.0 } else { 0.0 })).collect();
            text.push_str(&format!("id{i:02}_{k},id{i:02},{},r,{}\n", if i % 2 == 0 { "f" } else { "m" }, v.join(",")));
        }
    }
    fs::write(path, text).unwrap();
}

/// Keeps the first two columns of the score CSV as a score series.
fn theta_series(scores: &Path, out: &Path) {
    let text = fs::read_to_string(scores).unwrap();
    let mut series = String::from("subject_id,theta\n");
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        series.push_str(&format!("{},{}\n", cols[0], cols[1]));
    }
    fs::write(out, series).unwrap();
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let sim = dir.join("sim");
    let summary = ok(&["simulate", "--subjects", "150", "--items", "40", "--seed", "9", "--out-dir", p(&sim), "--fit"]);
    assert!(summary["summary"]["recovery"]["r_beta"].as_f64().unwrap() > 0.9);
    let manifest = RunManifest::read(&sim.join("manifest.json")).unwrap();
    assert_eq!(manifest.seed, Some(9));
    assert_eq!(manifest.command, "simulate");

    let responses = sim.join("responses.csv");
    let model = dir.join("model.json");
    ok(&["fit", "--data", p(&responses), "--out", p(&model)]);
    let fit_manifest = RunManifest::read(&dir.join("model.json.manifest.json")).unwrap();
    assert_eq!(fit_manifest.inputs.len(), 1);
    assert_eq!(fit_manifest.inputs[0].sha256.len(), 64);

    let forms = dir.join("forms");
    ok(&["subset", "--bank", p(&model), "--plan", "2xEASY:8,2xDIFFICULT:8", "--seed", "4", "--out-dir", p(&forms)]);
    let scores = dir.join("scores.csv");
    ok(&["score", "--data", p(&responses), "--model-file", p(&model), "--out", p(&scores)]);
    let info = dir.join("info.csv");
    ok(&["analyze", "info", "--model-file", p(&model), "--form", p(&forms.join("E1.json")), "--out", p(&info)]);
    let fit_stats = dir.join("fit.json");
    ok(&["analyze", "fit-stats", "--data", p(&responses), "--model-file", p(&model), "--out", p(&fit_stats)]);
    let scree = dir.join("scree.json");
    ok(&["analyze", "scree", "--data", p(&responses), "--out", p(&scree)]);
    let accuracy = dir.join("accuracy.csv");
    ok(&["analyze", "accuracy", "--data", p(&responses), "--out", p(&accuracy)]);
    let theta = dir.join("theta.csv");
    theta_series(&scores, &theta);
    let corr = dir.join("corr.json");
    let c = ok(&["analyze", "correlate", "--a", p(&theta), "--b", p(&accuracy), "--out", p(&corr)]);
    assert!(c["summary"]["r"].as_f64().unwrap() > 0.9);
    let variance = dir.join("variance.json");
    let v = ok(&["analyze", "variance", "--sd-session-and-test", "0.40", "--sd-test-only", "0.31", "--out", p(&variance)]);
    assert!((v["summary"]["sd_session"].as_f64().unwrap() - 0.2528).abs() < 1e-3);

    let emb = dir.join("emb.csv");
    embeddings(&emb);
    let triads = dir.join("triads.json");
    ok(&["triads", "build", "--embeddings", p(&emb), "--out", p(&triads), "--seed", "1"]);
    let audit = dir.join("audit.json");
    ok(&["triads", "audit", "--triads", p(&triads), "--embeddings", p(&emb), "--out", p(&audit)]);

    let mut files = vec![
        responses,
        sim.join("truth.json"),
        sim.join("model.json"),
        sim.join("recovery.json"),
        model,
        scores,
        info,
        fit_stats,
        scree,
        accuracy,
        corr,
        dir.join("corr.csv"),
        variance,
        triads,
        audit,
    ];
    files.extend(["E1", "E2", "D1", "D2"].iter().map(|f| forms.join(format!("{f}.json"))));
    files.into_iter().map(|f| (f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap())).collect()
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn failures_use_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = dir.path().join("m.json");

    let usage = triadcal(&["fit", "--bogus"]);
    assert_eq!(usage.status.code(), Some(exit::USAGE));

    let io = triadcal(&["fit", "--data", p(&missing), "--out", p(&out)]);
    assert_eq!(io.status.code(), Some(exit::IO));
    let err: Value = serde_json::from_slice(&io.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");

    let sim = dir.path().join("sim");
    ok(&["simulate", "--subjects", "20", "--items", "5", "--seed", "1", "--out-dir", p(&sim)]);
    let wrong = triadcal(&["score", "--data", p(&sim.join("responses.csv")), "--model-file", p(&sim.join("truth.json")), "--out", p(&out)]);
    assert_eq!(wrong.status.code(), Some(exit::SCHEMA));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "subject_id,a,b\ns1,1,7\n").unwrap();
    let malformed = triadcal(&["fit", "--data", p(&bad), "--out", p(&out)]);
    assert_eq!(malformed.status.code(), Some(exit::MALFORMED));

    let over = triadcal(&["subset", "--bank", p(&sim.join("truth.json")), "--plan", "1xEASY:3", "--seed", "1", "--out-dir", p(dir.path())]);
    assert_eq!(over.status.code(), Some(exit::SCHEMA));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: &str) -> Option<(u16, Value)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let request = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    let status = response.split_whitespace().nth(1)?.parse().ok()?;
    let payload = response.split("\r\n\r\n").nth(1)?;
    Some((status, serde_json::from_str(payload).unwrap_or(Value::Null)))
}

fn start(config: &Path, port: u16) -> Child {
    let child = Command::new(env!("CARGO_BIN_EXE_triadcal"))
        .args(["serve", "--config", p(config)])
        .env("TRIADCAL_PORT", port.to_string())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    while http(port, "GET", "/v1/health", "").is_none() {
        assert!(Instant::now() < deadline, "server did not start");
        sleep(Duration::from_millis(50));
    }
    child
}

fn interrupt(mut child: Child) {
    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    child.wait().unwrap();
}

#[test]
fn serve_replays_sessions_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sim = root.join("sim");
    ok(&["simulate", "--subjects", "100", "--items", "12", "--seed", "3", "--out-dir", p(&sim), "--fit"]);
    // One triad per item, keyed by item id.
    let triads: Vec<Triad> = sequential_ids("i", 12)
        .into_iter()
        .map(|id| Triad {
            anchor_same_id: format!("{id}a"),
            paired_same_id: format!("{id}b"),
            foil_id: format!("{id}c"),
            presentation: [format!("{id}a"), format!("{id}c"), format!("{id}b")],
            odd_one_out_index: 1,
            same_pair_similarity: 0.1,
            cross_pair_similarity: 0.7,
            triad_id: id,
        })
        .collect();
    write_triads(&root.join("triads.json"), &triads).unwrap();
    ok(&["subset", "--bank", p(&sim.join("model.json")), "--plan", "1xFULL_RANGE:4", "--seed", "2", "--out-dir", p(&root.join("forms"))]);
    let config = root.join("serve.toml");
    fs::write(&config, "model = \"sim/model.json\"\ntriads = \"triads.json\"\nforms = [\"forms/F1.json\"]\ndata_dir = \"data\"\nexposure_ms = 2000\n").unwrap();

    let port = free_port();
    let server = start(&config, port);
    let (status, created) = http(port, "POST", "/v1/sessions", r#"{"subject_alias":"r1","mode":"FIXED_FORM","form_id":"F1"}"#).unwrap();
    assert_eq!(status, 201);
    let id = created["session"]["session_id"].as_str().unwrap().to_string();
    let (_, next) = http(port, "POST", &format!("/v1/sessions/{id}/next"), "").unwrap();
    assert_eq!(next["item"]["exposure_ms"], 2000);
    let item = next["item"]["item_id"].as_str().unwrap().to_string();
    let body = format!(r#"{{"item_id":"{item}","choice_index":1,"response_ms":700}}"#);
    let (status, _) = http(port, "POST", &format!("/v1/sessions/{id}/responses"), &body).unwrap();
    assert_eq!(status, 200);
    let (_, before) = http(port, "GET", &format!("/v1/sessions/{id}"), "").unwrap();
    interrupt(server);
    assert!(root.join("data/sessions.snapshot.json").exists());

    let port = free_port();
    let server = start(&config, port);
    let (_, after) = http(port, "GET", &format!("/v1/sessions/{id}"), "").unwrap();
    assert_eq!(before["session"], after["session"]);
    interrupt(server);
}
