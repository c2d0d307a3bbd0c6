//! Shared fixtures: a small generated dataset with its index, the binary,
//! and a plain HTTP client.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gnssrag::config::PipelineConfig;
use gnssrag::indexing::{build_index, split_per_class};
use gnssrag::pipeline::{Embedder, Pipeline};
use gnssrag_core::signalgen::{generate_dataset, Dataset, DatasetConfig};
use gnssrag_core::vectorstore::Metric;
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_gnssrag");

/// Dataset of `per_class` snapshots per class under a temp dir, indexed
/// except for the last `holdout` of each class.
pub struct Fixture {
    pub dir: TempDir,
    pub dataset: PathBuf,
    pub index: PathBuf,
    pub held_out: Vec<u64>,
    pub indexed: Vec<u64>,
}

impl Fixture {
    pub fn new(per_class: usize, holdout: usize, seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("data");
        let index = dir.path().join("index.gvix");
        generate_dataset(&DatasetConfig::uniform(per_class, seed), &dataset).unwrap();
        let opened = Dataset::open(&dataset).unwrap();
        let split = split_per_class(opened.manifest(), None, holdout);
        build_index(&opened, &split.train, &Embedder::Baseline, Metric::Cosine)
            .unwrap()
            .save(&index)
            .unwrap();
        Fixture {
            dir,
            dataset,
            index,
            held_out: split.test,
            indexed: split.train,
        }
    }

    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            dataset: Some(self.dataset.clone()),
            index: Some(self.index.clone()),
            ..PipelineConfig::default()
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline::open(&self.config()).unwrap()
    }

    pub fn open_dataset(&self) -> Dataset {
        Dataset::open(&self.dataset).unwrap()
    }

    /// Runs the binary with `--index` and `--dataset` pointing here.
    pub fn run(&self, args: &[&str]) -> Output {
        let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        all.push("--index".into());
        all.push(self.index.display().to_string());
        all.push("--dataset".into());
        all.push(self.dataset.display().to_string());
        run(&all)
    }
}

/// Runs the binary with no config discovery side effects.
pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("GNSSRAG_CONFIG")
        .env_remove("DESCRIBER_TOKEN")
        .current_dir(std::env::temp_dir())
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "command failed: {}", stderr(out));
    serde_json::from_slice(&out.stdout).unwrap()
}

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub latency_header: Option<String>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

fn finish(mut response: ureq::http::Response<ureq::Body>) -> Reply {
    let status = response.status().as_u16();
    let latency_header = response
        .headers()
        .get("x-latency-ms")
        .map(|v| v.to_str().unwrap().to_string());
    let body = response
        .body_mut()
        .with_config()
        .limit(64 << 20)
        .read_to_string()
        .unwrap();
    Reply {
        status,
        body,
        latency_header,
    }
}

pub fn get(url: &str) -> Reply {
    finish(agent().get(url).call().unwrap())
}

pub fn post(url: &str, body: &str) -> Reply {
    let response = agent()
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .unwrap();
    finish(response)
}

pub fn file_b64(path: &Path) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(std::fs::read(path).unwrap())
}
