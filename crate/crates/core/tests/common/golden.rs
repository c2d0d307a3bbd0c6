#![allow(dead_code)]

//! Fixed prompt fixtures rendered against the committed golden files.

use gnssrag_core::describer::describe_templated;
use gnssrag_core::promptkit::{
    assemble_in_context, assemble_task_instruction, Context, DetailLevel, ImageRef, Provenance, QueryText,
};
use gnssrag_core::signalgen::{InterferenceType, JammerSpec};
use gnssrag_core::vectorstore::{Metric, SearchHit};

pub const QUESTION: &str = "Are there anomalies in this snapshot?";

pub fn fixture_context() -> Context {
    let hit = |id, score, meta| SearchHit { id, score, meta };
    Context {
        hits: vec![
            hit(11, 0.98765, JammerSpec::new(InterferenceType::Chirp, 2.0, 4.0, 1, 11).unwrap()),
            hit(12, 0.95, JammerSpec::new(InterferenceType::Chirp, 5.0, 5.0, 2, 12).unwrap()),
            hit(13, 0.91234, JammerSpec::new(InterferenceType::Pulsed, 20.0, -2.5, 1, 13).unwrap()),
            hit(14, 0.9, JammerSpec::new(InterferenceType::Chirp, 2.0, 3.25, 1, 14).unwrap()),
            hit(15, 0.5, JammerSpec::clean(3, 15).unwrap()),
        ],
        provenance: Provenance {
            query_id: 42,
            k: 5,
            metric: Metric::Cosine,
        },
    }
}

/// (file name, rendered content) for every golden file.
pub fn render_all() -> Vec<(String, String)> {
    let ctx = fixture_context();
    let mut out = Vec::new();
    for level in DetailLevel::ALL {
        let t = QueryText::new(QUESTION, level).unwrap();
        let task = assemble_task_instruction(ImageRef::SnapshotId(42), &t).unwrap();
        let in_ctx = assemble_in_context(&ctx, ImageRef::SnapshotId(42), &t).unwrap();
        out.push((format!("prompt_task_{level}.txt"), task.text()));
        out.push((format!("prompt_context_{level}.txt"), in_ctx.text()));
        out.push((format!("payload_context_{level}.json"), in_ctx.to_json() + "\n"));
        out.push((format!("description_{level}.txt"), describe_templated(&in_ctx).unwrap().text + "\n"));
    }
    let general = assemble_task_instruction(ImageRef::SnapshotId(42), &QueryText::new(QUESTION, DetailLevel::General).unwrap())
        .unwrap();
    out.push(("description_no_context.txt".into(), describe_templated(&general).unwrap().text + "\n"));
    out
}

/// Names of golden files whose committed bytes differ from a fresh render.
/// With `UPDATE_GOLDEN=1` the files are rewritten instead.
pub fn mismatches(dir: &std::path::Path) -> Vec<String> {
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    render_all()
        .into_iter()
        .filter_map(|(name, content)| {
            let path = dir.join(&name);
            if update {
                std::fs::write(&path, &content).unwrap();
                return None;
            }
            match std::fs::read(&path) {
                Ok(bytes) if bytes == content.as_bytes() => None,
                _ => Some(name),
            }
        })
        .collect()
}
