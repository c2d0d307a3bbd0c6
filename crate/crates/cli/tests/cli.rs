mod common;

use std::fs;

use common::{json, run, stderr, stdout, Fixture};
use gnssrag_core::signalgen::Dataset;
use gnssrag_core::tasks::load_predictions;

fn fixture() -> Fixture {
    Fixture::new(12, 2, 40)
}

#[test]
fn self_query_at_k1_names_the_record() {
    let fx = fixture();
    let dataset = fx.open_dataset();
    for &id in &fx.indexed {
        let spec = dataset.manifest().entries.iter().find(|e| e.id == id).unwrap().spec;
        if !spec.intf_type.is_jammer() {
            continue;
        }
        let out = fx.run(&["query", "--id", &id.to_string(), "--k", "1", "--json"]);
        let report = json(&out);
        let text = report["description"]["text"].as_str().unwrap();
        assert!(text.contains(&format!("shows {} interference", spec.intf_type.prose())), "{text}");
        let params = format!("bandwidth={:.2} power={:.2} scenario={}", spec.bandwidth, spec.power, spec.scenario);
        assert!(text.contains(&params), "{text} lacks {params}");
        assert_eq!(report["context"][0]["id"], id);
        return;
    }
    panic!("fixture has no indexed jammer");
}

#[test]
fn missing_index_exits_with_load_code() {
    let out = run(&["query", "--id", "1", "--index", "/nonexistent/index.gvix"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("load stage"), "{}", stderr(&out));
}

#[test]
fn seeded_runs_print_identical_json() {
    let fx = fixture();
    let id = fx.held_out[3].to_string();
    let args = ["query", "--id", &id, "--json", "--detail-level", "signal_info_detailed"];
    let a = fx.run(&args);
    let b = fx.run(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    // a fresh dataset and index from the same seed print the same bytes
    let other = fixture();
    assert_eq!(other.run(&args).stdout, a.stdout);
}

#[test]
fn stage_timings_sum_to_total() {
    let fx = fixture();
    for &id in fx.held_out.iter().take(5) {
        let report = json(&fx.run(&["query", "--id", &id.to_string(), "--json", "--timings"]));
        let t = &report["timings"];
        let stages: f64 = ["load_ms", "embed_ms", "retrieve_ms", "assemble_ms", "describe_ms"]
            .iter()
            .map(|k| t[k].as_f64().unwrap())
            .sum();
        let total = t["total_ms"].as_f64().unwrap();
        assert!(stages <= total + 1e-9 && total - stages < 5.0, "{stages} vs {total}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let fx = fixture();
    assert_eq!(run(&["query", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["query", "--id", "1", "--snapshot", "x"]).status.code(), Some(1));
    assert_eq!(fx.run(&["query", "--id", "1", "--detail-level", "verbose"]).status.code(), Some(1));
    assert_eq!(fx.run(&["query", "--id", "1", "--k", "0"]).status.code(), Some(1));
    assert_eq!(fx.run(&["query", "--id", "1", "--temperature", "1.5"]).status.code(), Some(1));
    assert_eq!(fx.run(&["query", "--id", "1", "--question", "  "]).status.code(), Some(1));
    assert_eq!(run(&["query", "--id", "1"]).status.code(), Some(1), "no index configured");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_id_is_a_load_error() {
    let fx = fixture();
    let out = fx.run(&["query", "--id", "999999"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("999999"));
}

#[test]
fn unreachable_describer_exits_3() {
    let fx = fixture();
    let config = fx.dir.path().join("remote.toml");
    fs::write(
        &config,
        "index = \"index.gvix\"\ndataset = \"data\"\n[describer]\nkind = \"remote\"\nurl = \"http://127.0.0.1:1/chat\"\ntimeout_ms = 500\n",
    )
    .unwrap();
    let id = fx.held_out[0].to_string();
    let out = run(&["query", "--config", config.to_str().unwrap(), "--id", &id]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("describe stage"));

    // the same file found through the environment
    let out = std::process::Command::new(common::BIN)
        .args(["query", "--id", &id])
        .env("GNSSRAG_CONFIG", &config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "[params]\ntop_k = 1000\n").unwrap();
    let out = run(&["query", "--config", config.to_str().unwrap(), "--id", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("top_k"), "{}", stderr(&out));
}

#[test]
fn classify_by_id_snapshot_and_vector() {
    let fx = fixture();
    let id = fx.held_out[5];
    let by_id = json(&fx.run(&["classify", "--id", &id.to_string(), "--json"]));
    let path = Dataset::open(&fx.dataset).unwrap().snapshot_path(id);
    let by_path = json(&fx.run(&["classify", "--snapshot", path.to_str().unwrap(), "--json"]));
    assert_eq!(by_id, by_path);

    let embedded = fx.run(&["embed", "--id", &id.to_string()]);
    let vector_file = fx.dir.path().join("v.json");
    fs::write(&vector_file, &embedded.stdout).unwrap();
    let by_vector = json(&fx.run(&["classify", "--vector", vector_file.to_str().unwrap(), "--json"]));
    assert_eq!(by_id, by_vector);

    let short = fx.dir.path().join("short.json");
    fs::write(&short, serde_json::to_string(&vec![0.1f32; 256]).unwrap()).unwrap();
    let out = fx.run(&["classify", "--vector", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("expected 512, received 256"), "{}", stderr(&out));
}

#[test]
fn embed_prints_a_unit_vector() {
    let fx = fixture();
    let v = json(&fx.run(&["embed", "--id", &fx.indexed[0].to_string()]));
    let values: Vec<f64> = v["vector"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(values.len(), 512);
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-5);
    assert_eq!(v["source"], "Baseline");
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for root in [&a, &b] {
        let out = run(&["generate", "--out", root.to_str().unwrap(), "--per-class", "3", "--seed", "5", "--json"]);
        assert_eq!(json(&out)["total"], 21);
    }
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    for entry in fs::read_dir(a.join("snapshots")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.join("snapshots").join(&name)).unwrap(),
            fs::read(b.join("snapshots").join(&name)).unwrap()
        );
    }
}

#[test]
fn index_command_holds_out_per_class() {
    let fx = fixture();
    let out_path = fx.dir.path().join("again.gvix");
    let summary = json(&fx.run(&[
        "index",
        "--out",
        out_path.to_str().unwrap(),
        "--holdout-per-class",
        "2",
        "--json",
    ]));
    assert_eq!(summary["records"], 70);
    let held: Vec<u64> = serde_json::from_value(summary["held_out"].clone()).unwrap();
    assert_eq!(held, fx.held_out);
    assert_eq!(fs::read(&out_path).unwrap(), fs::read(&fx.index).unwrap());
}

#[test]
fn bench_accuracy_and_score_agree() {
    let fx = fixture();
    let predictions = fx.dir.path().join("pred.csv");
    let metrics = fx.dir.path().join("metrics.json");
    let report = json(&fx.run(&[
        "bench",
        "accuracy",
        "--test-per-class",
        "3",
        "--predictions",
        predictions.to_str().unwrap(),
        "--metrics-out",
        metrics.to_str().unwrap(),
        "--json",
    ]));
    assert_eq!(report["train"], 63);
    assert_eq!(report["test"], 21);
    assert_eq!(report["leave_one_in_accuracy"], 100.0);
    assert_eq!(load_predictions(&predictions).unwrap().len(), 21);
    let saved: serde_json::Value = serde_json::from_slice(&fs::read(&metrics).unwrap()).unwrap();
    assert_eq!(saved, report);

    let scored = json(&run(&["bench", "score", "--predictions", predictions.to_str().unwrap()]));
    for key in ["type_accuracy", "subjammer_accuracy", "power_mse", "bandwidth_mse", "n"] {
        assert_eq!(scored[key], report["metrics"][key], "{key}");
    }

    let text = stdout(&fx.run(&["bench", "accuracy", "--test-per-class", "3"]));
    assert!(text.contains("type accuracy"), "{text}");
}

#[test]
fn bench_latency_small() {
    let report = json(&run(&["bench", "latency", "--records", "500", "--queries", "5", "--json"]));
    assert!(report["median_ms"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config"]["records"], 500);
}

#[test]
fn tsne_writes_three_files() {
    let fx = fixture();
    let out_dir = fx.dir.path().join("tsne");
    let out = fx.run(&[
        "tsne",
        "--out",
        out_dir.to_str().unwrap(),
        "--per-class",
        "8",
        "--iterations",
        "400",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("tsne.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
    assert!(csv.starts_with("id,x,y,label"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("tsne.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 32);
    assert!(report["final_kl"].as_f64().unwrap() < report["initial_kl"].as_f64().unwrap());
    assert!(report["note"].as_str().unwrap().contains("Chirp, FreqHopper, Pulsed, Noise"));
    assert!(fs::read_to_string(out_dir.join("tsne.svg")).unwrap().starts_with("<svg"));

    let out = fx.run(&["tsne", "--out", out_dir.to_str().unwrap(), "--classes", "chirp,bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn text_output_lists_context_and_timings() {
    let fx = fixture();
    let text = stdout(&fx.run(&["query", "--id", &fx.held_out[0].to_string(), "--timings"]));
    assert!(text.contains("retrieved context (k=5, cosine):"), "{text}");
    assert_eq!(text.matches("  neighbor ").count(), 5);
    assert!(text.contains("timings (ms): load"));
    let bare = stdout(&fx.run(&["query", "--id", &fx.held_out[0].to_string(), "--no-context"]));
    assert!(!bare.contains("retrieved context"));
}
