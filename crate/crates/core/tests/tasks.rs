use gnssrag_core::embedder::embed_baseline;
use gnssrag_core::signalgen::{generate_snapshots, DatasetConfig, InterferenceType, JammerSpec, Snapshot};
use gnssrag_core::tasks::*;
use gnssrag_core::vectorstore::{Metric, SearchHit, VectorIndex};
use gnssrag_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use InterferenceType::{Chirp, Pulsed};

fn spec(t: InterferenceType, bw: f64, power: f64) -> JammerSpec {
    JammerSpec::new(t, bw, power, 1, 0).unwrap()
}

/// 2-d index whose records have the given cosine similarity to (1, 0).
fn similarity_index(rows: &[(f64, JammerSpec)]) -> VectorIndex {
    let mut index = VectorIndex::with_dimension(2, Metric::Cosine);
    for (i, (s, meta)) in rows.iter().enumerate() {
        let v = [*s as f32, (1.0 - s * s).sqrt() as f32];
        index.insert(i as u64, &v, *meta).unwrap();
    }
    index
}

const Q: [f32; 2] = [1.0, 0.0];

#[test]
fn majority_and_tie_rule() {
    let index = similarity_index(&[
        (0.98, spec(Chirp, 2.0, 0.0)),
        (0.97, spec(Pulsed, 2.0, 0.0)),
        (0.50, spec(Pulsed, 2.0, 0.0)),
        (0.40, spec(Chirp, 2.0, 0.0)),
    ]);
    let c = knn_classify(&index, &Q, 4).unwrap();
    assert_eq!(c.intf_type, Chirp);
    assert_eq!(c.votes[&Chirp], 2);
    assert_eq!(c.votes[&Pulsed], 2);
    assert_eq!(knn_classify(&index, &Q, 3).unwrap().intf_type, Pulsed);
    assert_eq!(knn_classify(&index, &Q, 1).unwrap().intf_type, Chirp);

    let index = similarity_index(&[
        (0.9, spec(Chirp, 2.0, 0.0)),
        (0.8, spec(Chirp, 2.0, 0.0)),
        (0.7, spec(Pulsed, 2.0, 0.0)),
    ]);
    assert_eq!(knn_classify(&index, &Q, 3).unwrap().intf_type, Chirp);
}

#[test]
fn regression_examples() {
    let index = similarity_index(&[(0.9, spec(Chirp, 2.0, 4.0)), (0.3, spec(Chirp, 2.0, 4.0))]);
    assert_eq!(knn_regress(&index, &Q, 2).unwrap().power, 4.0);

    let index = similarity_index(&[(1.0, spec(Chirp, 2.0, 0.0)), (1.0, spec(Chirp, 2.0, 10.0))]);
    assert!((knn_regress(&index, &Q, 2).unwrap().power - 5.0).abs() < 1e-12);

    let index = similarity_index(&[(0.9, spec(Chirp, 2.0, -10.0)), (0.1, spec(Chirp, 2.0, 10.0))]);
    let oracle = (-10.0 * 0.900001 + 10.0 * 0.100001) / 1.000002;
    let got = knn_regress(&index, &Q, 2).unwrap().power;
    assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");

    let clean = similarity_index(&[(0.9, JammerSpec::clean(1, 0).unwrap())]);
    assert!(matches!(knn_regress(&clean, &Q, 1), Err(Error::NotEstimable(_))));
    let p = knn_predict(&clean, &Q, 1).unwrap();
    assert_eq!((p.intf_type, p.power, p.bandwidth), (InterferenceType::None, None, None));
}

proptest! {
    #[test]
    fn estimates_stay_in_range(rows in prop::collection::vec((-1.0f64..=1.0, 0.1f64..=60.0, -10.0f64..=10.0), 1..20)) {
        let hits: Vec<SearchHit> = rows
            .iter()
            .enumerate()
            .map(|(i, &(s, bw, p))| SearchHit { id: i as u64, score: s, meta: spec(Chirp, bw, p) })
            .collect();
        let e = estimate_parameters(&hits, Metric::Cosine).unwrap();
        prop_assert!((-10.0..=10.0).contains(&e.power));
        prop_assert!((0.1..=60.0).contains(&e.bandwidth));
        let lo = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(e.power >= lo - 1e-9 && e.power <= hi + 1e-9);
    }
}

#[test]
fn metric_endpoints() {
    let truth = spec(Chirp, 60.0, 10.0);
    let pred = Prediction {
        intf_type: Chirp,
        subjammer: truth.subjammer(),
        power: Some(-10.0),
        bandwidth: Some(60.0),
        votes: [(Chirp, 1)].into(),
        neighbor_ids: vec![1],
    };
    let m = Metrics::from_records(&[PredictionRecord::new(1, &truth, &pred)], None, None).unwrap();
    assert_eq!(m.power_mse, 1.0);
    assert_eq!(m.bandwidth_mse, 0.0);
    assert_eq!(m.type_accuracy, 100.0);
}

fn dataset(per_class: usize, seed: u64) -> (Vec<Snapshot>, Vec<Vec<f32>>) {
    let snaps = generate_snapshots(&DatasetConfig::uniform(per_class, seed)).unwrap();
    let vecs = snaps.iter().map(|s| embed_baseline(s).unwrap().vector().to_vec()).collect();
    (snaps, vecs)
}

fn index_of(snaps: &[&Snapshot], vecs: &[&Vec<f32>]) -> VectorIndex {
    let mut index = VectorIndex::new(Metric::Cosine);
    for (s, v) in snaps.iter().zip(vecs) {
        index.insert(s.id, v, s.meta.unwrap()).unwrap();
    }
    index
}

#[test]
fn leave_one_in_is_exact() {
    let (snaps, vecs) = dataset(15, 31);
    let index = index_of(&snaps.iter().collect::<Vec<_>>(), &vecs.iter().collect::<Vec<_>>());
    for (s, v) in snaps.iter().zip(&vecs) {
        let p = knn_predict(&index, v, 1).unwrap();
        let truth = s.meta.unwrap();
        assert_eq!(p.neighbor_ids, vec![s.id]);
        assert_eq!(p.intf_type, truth.intf_type);
        assert_eq!(p.subjammer, truth.subjammer());
        if truth.intf_type.is_jammer() {
            assert_eq!(p.power, Some(truth.power));
            assert_eq!(p.bandwidth, Some(truth.bandwidth));
        }
    }
}

#[test]
fn predictions_ignore_insertion_order() {
    let (snaps, vecs) = dataset(10, 5);
    let mut order: Vec<usize> = (0..snaps.len()).collect();
    let a = index_of(&order.iter().map(|&i| &snaps[i]).collect::<Vec<_>>(), &order.iter().map(|&i| &vecs[i]).collect::<Vec<_>>());
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let b = index_of(&order.iter().map(|&i| &snaps[i]).collect::<Vec<_>>(), &order.iter().map(|&i| &vecs[i]).collect::<Vec<_>>());
    for v in &vecs {
        assert_eq!(knn_predict(&a, v, 5).unwrap(), knn_predict(&b, v, 5).unwrap());
    }
}

fn split(per_class: usize, seed: u64) -> (VectorIndex, Vec<LabeledQuery>) {
    let (snaps, vecs) = dataset(per_class, seed);
    let test_every = 4;
    let (mut train_s, mut train_v, mut queries) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (s, v)) in snaps.iter().zip(&vecs).enumerate() {
        if i % test_every == 0 {
            queries.push(LabeledQuery {
                id: s.id,
                vector: v.clone(),
                truth: s.meta.unwrap(),
            });
        } else {
            train_s.push(s);
            train_v.push(v);
        }
    }
    (index_of(&train_s, &train_v), queries)
}

#[test]
fn metrics_recompute_from_csv_dump() {
    let (index, queries) = split(20, 8);
    let eval = evaluate(&index, &queries, 5).unwrap();
    assert_eq!(eval.metrics.k, Some(5));
    assert_eq!(eval.metrics.metric, Some(Metric::Cosine));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pred.csv");
    save_predictions(&path, &eval.records).unwrap();

    // independent recomputation from the raw text
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.join(","), "id,true_type,pred_type,true_sub,pred_sub,true_power,pred_power,true_bw,pred_bw");
    let (mut n, mut ok_t, mut ok_s, mut pe, mut be, mut m) = (0, 0, 0, 0.0, 0.0, 0);
    for row in reader.records() {
        let r = row.unwrap();
        n += 1;
        ok_t += usize::from(r[1] == r[2]);
        ok_s += usize::from(r[3] == r[4]);
        if !r[5].is_empty() {
            let norm_p = |s: &str| if s.is_empty() { 0.5 } else { (s.parse::<f64>().unwrap() + 10.0) / 20.0 };
            let norm_b = |s: &str| if s.is_empty() { 0.5 } else { (s.parse::<f64>().unwrap() - 0.1) / 59.9 };
            pe += (norm_p(&r[5]) - norm_p(&r[6])).powi(2);
            be += (norm_b(&r[7]) - norm_b(&r[8])).powi(2);
            m += 1;
        }
    }
    assert_eq!(n, eval.metrics.n);
    assert!((100.0 * ok_t as f64 / n as f64 - eval.metrics.type_accuracy).abs() < 1e-9);
    assert!((100.0 * ok_s as f64 / n as f64 - eval.metrics.subjammer_accuracy).abs() < 1e-9);
    assert!((pe / m as f64 - eval.metrics.power_mse).abs() < 1e-12);
    assert!((be / m as f64 - eval.metrics.bandwidth_mse).abs() < 1e-12);

    let rescored = score_predictions(&path).unwrap();
    assert_eq!(rescored.n, eval.metrics.n);
    assert!((rescored.power_mse - eval.metrics.power_mse).abs() < 1e-12);
    assert_eq!(evaluate(&index, &queries, 5).unwrap(), eval, "deterministic");
}

#[test]
fn overlapping_split_is_refused() {
    let (index, mut queries) = split(3, 2);
    let id = index.ids()[0];
    queries[0].id = id;
    assert!(matches!(evaluate(&index, &queries, 5), Err(Error::Leakage { count: 1, first }) if first == id));
}
