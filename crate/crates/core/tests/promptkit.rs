#[path = "common/golden.rs"]
mod golden;

use std::path::Path;

use gnssrag_core::embedder::embed_baseline;
use gnssrag_core::promptkit::*;
use gnssrag_core::signalgen::{generate_snapshots, DatasetConfig, InterferenceType, JammerSpec};
use gnssrag_core::vectorstore::{Metric, SearchHit, VectorIndex};
use gnssrag_core::Error;
use proptest::prelude::*;

fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

#[test]
fn prompts_match_golden_files() {
    let bad = golden::mismatches(golden_dir());
    assert!(bad.is_empty(), "golden mismatch: {bad:?}");
}

#[test]
fn single_hit_line() {
    let ctx = Context {
        hits: vec![SearchHit {
            id: 1,
            score: 1.0,
            meta: JammerSpec::new(InterferenceType::Chirp, 2.0, 4.0, 1, 1).unwrap(),
        }],
        provenance: Provenance {
            query_id: 1,
            k: 1,
            metric: Metric::Cosine,
        },
    };
    let t = QueryText::new("What is this?", DetailLevel::General).unwrap();
    let p = assemble_in_context(&ctx, ImageRef::SnapshotId(1), &t).unwrap();
    assert!(p
        .text()
        .contains("neighbor 1: type=Chirp bandwidth=2 power=4 scenario=1 similarity=1.0000\n"));
}

#[test]
fn detailed_level_lists_classes_and_ranges() {
    let t = QueryText::new("Describe it.", DetailLevel::SignalInfoDetailed).unwrap();
    let text = assemble_in_context(&golden::fixture_context(), ImageRef::SnapshotId(1), &t).unwrap().text();
    for ty in InterferenceType::ALL {
        assert!(text.contains(ty.name()), "{ty:?}");
    }
    assert!(text.contains("0.1 to 60") && text.contains("-10 to 10"));
    let general = QueryText::new("Describe it.", DetailLevel::General).unwrap();
    let plain = assemble_task_instruction(ImageRef::SnapshotId(1), &general).unwrap().text();
    assert!(!plain.contains("FreqHopper") && !plain.contains("neighbor"));
}

#[test]
fn errors() {
    assert!(matches!(QueryText::new("  ", DetailLevel::General), Err(Error::ParameterDomain { .. })));
    let empty = Context {
        hits: vec![],
        provenance: Provenance {
            query_id: 1,
            k: 1,
            metric: Metric::Cosine,
        },
    };
    let t = QueryText::new("q", DetailLevel::General).unwrap();
    assert!(assemble_in_context(&empty, ImageRef::SnapshotId(1), &t).is_err());
    let index = VectorIndex::new(Metric::Cosine);
    let v = vec![0.0f32; 512];
    assert!(matches!(retrieve_context_vector(&index, 1, &v, 5), Err(Error::State(_))));
    assert!(GenParams::new(1.1, 40, 10).is_err());
    assert!(GenParams::new(0.5, 1, 10).is_err());
    assert!(GenParams::new(0.5, 100, 10).is_err());
    assert!(GenParams::new(0.5, 40, 501).is_err());
    assert!(GenParams::new(0.6, 99, 500).is_ok());
}

#[test]
fn retrieval_matches_brute_force_and_self_retrieval() {
    let snaps = generate_snapshots(&DatasetConfig::uniform(6, 900)).unwrap();
    let mut index = VectorIndex::new(Metric::Cosine);
    let embs: Vec<_> = snaps.iter().map(|s| embed_baseline(s).unwrap()).collect();
    for (s, e) in snaps.iter().zip(&embs) {
        index.add(e, s.meta.unwrap()).unwrap();
    }
    let t = QueryText::new("q", DetailLevel::General).unwrap();
    let q = &embs[10];
    let one = retrieve_context(&index, q, &t, 1).unwrap();
    assert_eq!(one.hits[0].meta, snaps[10].meta.unwrap());
    assert_eq!(one.provenance.query_id, q.snapshot_id);

    let five = retrieve_context(&index, q, &t, 5).unwrap();
    let mut oracle: Vec<(f64, u64)> = embs.iter().map(|e| (q.cosine(e), e.snapshot_id)).collect();
    oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let want: Vec<u64> = oracle.iter().take(5).map(|o| o.1).collect();
    assert_eq!(five.hits.iter().map(|h| h.id).collect::<Vec<_>>(), want);
}

fn arb_hit() -> impl Strategy<Value = SearchHit> {
    (
        prop::sample::select(InterferenceType::ALL.to_vec()),
        0.1f64..=60.0,
        -10.0f64..=10.0,
        1u8..=8,
        any::<u64>(),
        -1.0f64..=1.0,
    )
        .prop_map(|(t, bw, p, s, id, score)| SearchHit {
            id,
            score,
            meta: if t.is_jammer() {
                JammerSpec::new(t, bw, p, s, id).unwrap()
            } else {
                JammerSpec::clean(s, id).unwrap()
            },
        })
}

proptest! {
    #[test]
    fn every_combination_renders_fully(
        hits in prop::collection::vec(arb_hit(), 1..8),
        level in prop::sample::select(DetailLevel::ALL.to_vec()),
        question in "[a-zA-Z ?]{1,40}",
        l2 in any::<bool>(),
    ) {
        prop_assume!(!question.trim().is_empty());
        let ctx = Context {
            hits: hits.clone(),
            provenance: Provenance { query_id: 0, k: hits.len(), metric: if l2 { Metric::L2 } else { Metric::Cosine } },
        };
        let t = QueryText::new(question, level).unwrap();
        let with = assemble_in_context(&ctx, ImageRef::SnapshotId(0), &t).unwrap();
        let without = assemble_task_instruction(ImageRef::SnapshotId(0), &t).unwrap();
        for p in [&with, &without] {
            let text = p.text();
            let residue = text.contains('{') || text.contains('}');
            prop_assert!(!residue, "placeholder residue");
            prop_assert_eq!(&text, &p.clone().text());
        }
        // every stored value appears verbatim, in hit order
        let text = with.text();
        let mut from = 0;
        for (i, h) in hits.iter().enumerate() {
            let line = format!("neighbor {}: type={} ", i + 1, h.meta.intf_type);
            let at = text[from..].find(&line).map(|p| p + from);
            prop_assert!(at.is_some());
            from = at.unwrap();
            let end = from + text[from..].find('\n').unwrap();
            let rendered = &text[from..end];
            if h.meta.intf_type.is_jammer() {
                let bw: f64 = field(rendered, "bandwidth=").parse().unwrap();
                let p: f64 = field(rendered, "power=").parse().unwrap();
                prop_assert_eq!(bw.to_bits(), h.meta.bandwidth.to_bits());
                prop_assert_eq!(p.to_bits(), h.meta.power.to_bits());
            }
            prop_assert_eq!(field(rendered, "scenario="), h.meta.scenario.to_string());
        }
    }
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let start = line.find(key).unwrap() + key.len();
    line[start..].split(' ').next().unwrap()
}
