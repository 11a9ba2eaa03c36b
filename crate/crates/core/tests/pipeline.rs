//! End-to-end pipeline checks against independently computed expectations.

use condrec_core::eval::{absent_audit, multihot_targets, run_evaluation, BootstrapConfig, EvaluationInputs};
use condrec_core::index::PrecedentIndex;
use condrec_core::ingest::EmbeddingBank;
use condrec_core::linalg::Matrix;
use condrec_core::model::{
    Conditions, KeyKind, PerRole, ReactionRecord, RetrievalConfig, Role, RoleDistribution,
    RoleVocabulary, Split, Temperature,
};
use condrec_core::recommend::{baseline_prior, recommend, TemplateMajority};
use condrec_core::synth;

fn vocabs() -> PerRole<RoleVocabulary> {
    PerRole::new(
        RoleVocabulary::new(Role::Catalyst, vec!["Pd".into(), "Ni".into()]).unwrap(),
        RoleVocabulary::new(Role::Solvent, vec!["water".into(), "THF".into()]).unwrap(),
        RoleVocabulary::new(Role::Reagent, vec!["NaH".into(), "KOH".into()]).unwrap(),
    )
}

fn record(id: &str, serial: usize, labels: (&str, &str, &str)) -> ReactionRecord {
    ReactionRecord {
        id: id.into(),
        reactants: vec![synth::molecule(serial * 2)],
        products: vec![synth::molecule(serial * 2 + 1)],
        conditions: Conditions {
            catalyst: Some(labels.0.to_string()),
            solvent: Some(labels.1.to_string()),
            reagent: Some(labels.2.to_string()),
        },
        split: Split::Train,
        publication_proxy: None,
    }
}

/// Twenty train reactions whose keys are exact-unit f32 vectors, so neighbor
/// similarities are exact and the whole fusion can be recomputed by hand.
fn toy_index() -> (PrecedentIndex, Vec<ReactionRecord>) {
    let mut keys: Vec<Vec<f32>> = vec![
        vec![1.0, 0.0, 0.0, 0.0],    // t00: sim 1.0 to the query
        vec![0.5, 0.5, 0.5, 0.5],    // t01: sim 0.5
        vec![0.5, -0.5, 0.5, -0.5],  // t02: sim 0.5 (id tie-break after t01)
    ];
    let distractors: Vec<Vec<f32>> = vec![
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, -1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, -1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0, -1.0],
        vec![-1.0, 0.0, 0.0, 0.0],
        vec![-0.5, 0.5, 0.5, 0.5],
        vec![-0.5, -0.5, 0.5, 0.5],
        vec![-0.5, 0.5, -0.5, 0.5],
        vec![-0.5, 0.5, 0.5, -0.5],
        vec![-0.5, -0.5, -0.5, 0.5],
        vec![-0.5, -0.5, 0.5, -0.5],
        vec![-0.5, 0.5, -0.5, -0.5],
        vec![-0.5, -0.5, -0.5, -0.5],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
    ];
    keys.extend(distractors);
    assert_eq!(keys.len(), 20);

    let mut records = vec![
        record("t00", 0, ("Pd", "water", "NaH")),
        record("t01", 1, ("Ni", "water", "KOH")),
        record("t02", 2, ("Pd", "THF", "KOH")),
    ];
    for i in 3..20 {
        records.push(record(&format!("t{i:02}"), i, ("Ni", "THF", "NaH")));
    }

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let bank = EmbeddingBank::new(ids, Matrix::from_rows(&keys).unwrap(), None).unwrap();
    let index = PrecedentIndex::build(&bank, &records, &vocabs(), KeyKind::RxnOnly).unwrap();
    (index, records)
}

fn toy_heads() -> PerRole<RoleDistribution> {
    PerRole::new(
        RoleDistribution::new(Role::Catalyst, vec![0.2, 0.3, 0.5]).unwrap(),
        RoleDistribution::new(Role::Solvent, vec![0.1, 0.6, 0.3]).unwrap(),
        RoleDistribution::new(Role::Reagent, vec![0.1, 0.15, 0.75]).unwrap(),
    )
}

#[test]
fn toy_recommendation_matches_hand_computed_fusion() {
    let (index, _) = toy_index();
    let query = [1.0f32, 0.0, 0.0, 0.0];
    let config = RetrievalConfig {
        key_kind: KeyKind::RxnOnly,
        k: 3,
        temperature: Temperature::Softmax(0.5),
        alpha: 0.5,
    };
    let heads = toy_heads();
    let got = recommend(&query, None, &index, Some(&heads), &config, &vocabs(), 1).unwrap();

    // Neighbors must be t00 (sim 1.0), then t01 and t02 (sim 0.5, id order).
    let ids: Vec<&str> = got.neighbors.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(ids, vec!["t00", "t01", "t02"]);
    assert_eq!(got.neighbors[0].similarity, 1.0);
    assert_eq!(got.neighbors[1].similarity, 0.5);
    assert_eq!(got.neighbors[2].similarity, 0.5);

    // Softmax weights over similarities (1.0, 0.5, 0.5) at t = 0.5, i.e.
    // softmax(2, 1, 1) computed with max subtraction:
    let e0 = (0.0f64).exp();
    let e1 = (-1.0f64).exp();
    let z = e0 + e1 + e1;
    let w0 = e0 / z;
    let w1 = e1 / z;
    assert!((w0 - 0.5761168847658291).abs() < 1e-12);
    assert!((w1 - 0.21194155761708544).abs() < 1e-12);

    // Hand-joined votes. Labels by row: catalyst (Pd, Ni, Pd),
    // solvent (water, water, THF), reagent (NaH, KOH, KOH).
    let knn_catalyst = [0.0, w0 + w1, w1];
    let knn_solvent = [0.0, w0 + w1, w1];
    let knn_reagent = [0.0, w0, w1 + w1];
    let heads = toy_heads();
    let expected = |head: &[f64], knn: &[f64]| -> Vec<f64> {
        head.iter().zip(knn).map(|(h, k)| 0.5 * h + 0.5 * k).collect()
    };
    let exp_catalyst = expected(&heads.catalyst.probs, &knn_catalyst);
    let exp_solvent = expected(&heads.solvent.probs, &knn_solvent);
    let exp_reagent = expected(&heads.reagent.probs, &knn_reagent);

    for (role, expected) in [
        (Role::Catalyst, exp_catalyst),
        (Role::Solvent, exp_solvent),
        (Role::Reagent, exp_reagent),
    ] {
        let ranked = &got.role(role).unwrap().ranked;
        // Scores must match the hand computation class by class.
        for entry in ranked {
            assert!(
                (entry.score - expected[entry.class as usize]).abs() < 1e-12,
                "{role}: class {} got {} want {}",
                entry.class,
                entry.score,
                expected[entry.class as usize]
            );
        }
        // And the ranking must equal the argsort of the hand scores.
        let mut order: Vec<u32> = (0..expected.len() as u32).collect();
        order.sort_by(|&a, &b| {
            expected[b as usize]
                .partial_cmp(&expected[a as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        let got_order: Vec<u32> = ranked.iter().map(|e| e.class).collect();
        assert_eq!(got_order, order, "{role}");
    }

    // Spot-check the catalyst winner by hand: Pd = 0.5*0.3 + 0.5*(w0+w1).
    let pd = 0.5 * 0.3 + 0.5 * (w0 + w1);
    assert!((got.role(Role::Catalyst).unwrap().ranked[0].score - pd).abs() < 1e-12);
    assert_eq!(
        got.role(Role::Catalyst).unwrap().ranked[0].label.as_deref(),
        Some("Pd")
    );
}

#[test]
fn alpha_one_reduces_to_head_ranking() {
    let (index, _) = toy_index();
    let config = RetrievalConfig {
        alpha: 1.0,
        temperature: Temperature::Uniform,
        ..RetrievalConfig::default()
    };
    let heads = toy_heads();
    let got = recommend(
        &[1.0, 0.0, 0.0, 0.0],
        None,
        &index,
        Some(&heads),
        &config,
        &vocabs(),
        1,
    )
    .unwrap();
    for role in Role::ALL {
        let expected = heads.get(role).ranked_classes();
        let got_order: Vec<u32> = got.role(role).unwrap().ranked.iter().map(|e| e.class).collect();
        assert_eq!(got_order, expected, "{role}");
    }
}

#[test]
fn alpha_zero_k_one_returns_nearest_neighbor_labels() {
    let (index, _) = toy_index();
    let config = RetrievalConfig {
        alpha: 0.0,
        k: 1,
        temperature: Temperature::Uniform,
        ..RetrievalConfig::default()
    };
    let got = recommend(&[1.0, 0.0, 0.0, 0.0], None, &index, None, &config, &vocabs(), 1).unwrap();
    // Nearest neighbor is t00 with labels (Pd, water, NaH).
    assert_eq!(got.role(Role::Catalyst).unwrap().ranked[0].label.as_deref(), Some("Pd"));
    assert_eq!(got.role(Role::Solvent).unwrap().ranked[0].label.as_deref(), Some("water"));
    assert_eq!(got.role(Role::Reagent).unwrap().ranked[0].label.as_deref(), Some("NaH"));
    assert!(!got.prior_fallback);
}

#[test]
fn self_exclusion_skips_the_query_row() {
    let (index, _) = toy_index();
    let row = index.row_of("t00").unwrap();
    let config = RetrievalConfig {
        alpha: 0.0,
        k: 2,
        temperature: Temperature::Uniform,
        ..RetrievalConfig::default()
    };
    let got = recommend(
        &[1.0, 0.0, 0.0, 0.0],
        Some(row),
        &index,
        None,
        &config,
        &vocabs(),
        1,
    )
    .unwrap();
    assert!(got.neighbors.iter().all(|n| n.id != "t00"));
}

#[test]
fn prior_top1_accuracy_equals_modal_frequency_exactly() {
    let (train, test, vocabs) = synth::absent_prior_corpus(Role::Catalyst, 500, 390, 11);
    let prior = baseline_prior(&train, &vocabs.catalyst).unwrap();
    let ranked: Vec<Vec<u32>> = test.iter().map(|_| prior.ranked_classes()).collect();
    let targets = multihot_targets(&test, &vocabs.catalyst).unwrap();
    let audit = absent_audit(&ranked, &targets, Role::Catalyst).unwrap();
    // The modal class is absent with probability 390/500; all@1 must equal it
    // exactly.
    assert_eq!(audit.all_at1, 390.0 / 500.0);
    assert_eq!(audit.present_at1, 0.0);
}

#[test]
fn solvent_prior_matches_reported_prevalence_shape() {
    // Composition shaped like the benchmark's solvent audit: 1% absent rows,
    // modal present label at exactly 15.6%. The prior's all-rows top-1
    // accuracy then lands on 0.156 exactly and its present-only accuracy on
    // 156/990.
    let vocabs = synth::synthetic_vocabs(13);
    let mut counts: Vec<(Option<usize>, usize)> = vec![(None, 10), (Some(0), 156)];
    for label in 1..13 {
        counts.push((Some(label), if label <= 6 { 70 } else { 69 }));
    }
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    assert_eq!(total, 1000);
    let train = synth::exact_count_records(Role::Solvent, &counts, &vocabs.solvent, Split::Train, "tr");
    let test = synth::exact_count_records(Role::Solvent, &counts, &vocabs.solvent, Split::Test, "te");

    let prior = baseline_prior(&train, &vocabs.solvent).unwrap();
    let ranked: Vec<Vec<u32>> = test.iter().map(|_| prior.ranked_classes()).collect();
    let targets = multihot_targets(&test, &vocabs.solvent).unwrap();
    let audit = absent_audit(&ranked, &targets, Role::Solvent).unwrap();
    assert_eq!(audit.all_at1, 0.156);
    assert!((audit.present_at1 - 156.0 / 990.0).abs() < 1e-12);
    assert!((audit.present_at1 - 0.157).abs() < 1e-3);
}

#[test]
fn template_majority_memorizes_and_falls_back() {
    let vocabs = vocabs();
    let train = vec![
        record("a", 0, ("Pd", "water", "NaH")),
        record("b", 0, ("Pd", "water", "KOH")), // same molecules as "a"
        record("c", 1, ("Ni", "THF", "KOH")),
    ];
    // Records "a" and "b" share molecules (same serial), so they share a
    // template key; "c" is alone; serial 99 is unseen.
    let tm = TemplateMajority::fit(
        &train,
        &vocabs,
        condrec_core::fingerprint::FingerprintConfig::default(),
    )
    .unwrap();

    let seen = tm.predict(&record("q1", 0, ("Pd", "water", "NaH"))).unwrap();
    // Catalyst votes: Pd twice -> 1.0; reagent splits NaH/KOH.
    assert_eq!(seen.catalyst.probs[1], 1.0);
    assert!((seen.reagent.probs[1] - 0.5).abs() < 1e-12);
    assert!((seen.reagent.probs[2] - 0.5).abs() < 1e-12);

    let single = tm.predict(&record("q2", 1, ("Ni", "THF", "KOH"))).unwrap();
    assert_eq!(single.catalyst.probs[2], 1.0);

    let unseen = tm.predict(&record("q3", 99, ("Pd", "water", "NaH"))).unwrap();
    let prior = baseline_prior(&train, &vocabs.catalyst).unwrap();
    assert_eq!(unseen.catalyst.probs, prior.probs);
}

#[test]
fn cosine_and_inner_product_rankings_agree_on_unit_keys() {
    let (index, _) = toy_index();
    let mut rng = condrec_core::rng::SplitMix64::new(44);
    for _ in 0..25 {
        let query: Vec<f32> = (0..4).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
        if query.iter().all(|v| v.abs() < 1e-3) {
            continue;
        }
        let by_ip = index.search(&query, 6).unwrap();
        // Cosine oracle: normalize both sides explicitly.
        let qnorm: f32 = query.iter().map(|v| v * v).sum::<f32>().sqrt();
        let mut by_cos: Vec<(String, f32)> = (0..index.len())
            .map(|row| {
                let key = index.key_row(row);
                let knorm: f32 = key.iter().map(|v| v * v).sum::<f32>().sqrt();
                let dot: f32 = key.iter().zip(&query).map(|(a, b)| a * b).sum();
                (index.ids()[row].clone(), dot / (qnorm * knorm))
            })
            .collect();
        by_cos.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let cos_ids: Vec<&str> = by_cos.iter().take(6).map(|(id, _)| id.as_str()).collect();
        let ip_ids: Vec<&str> = by_ip.iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ip_ids, cos_ids);
    }
}

#[test]
fn full_evaluation_on_complementary_corpus_reports_every_block() {
    let cfg = synth::ComplementaryConfig {
        clusters: 8,
        train_per_cluster: 12,
        test_per_cluster: 6,
        ..Default::default()
    };
    let corpus = synth::complementary_corpus(&cfg).unwrap();
    let train = corpus.train();
    let test = corpus.test();
    let train_ids: Vec<String> = train.iter().map(|r| r.id.clone()).collect();
    let train_bank = corpus.bank.subset_by_ids(&train_ids).unwrap();
    let index = PrecedentIndex::build(&train_bank, &train, &corpus.vocabs, KeyKind::RxnOnly).unwrap();

    let mut heads = condrec_core::ingest::HeadProbabilities::new();
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus.write_to(dir.path()).unwrap();
    for path in &paths.head_files {
        heads.load_role_file(path).unwrap();
    }

    let retrieval = RetrievalConfig::default();
    let report = run_evaluation(&EvaluationInputs {
        index: &index,
        bank: &corpus.bank,
        records: &test,
        heads: Some(&heads),
        vocabs: &corpus.vocabs,
        config: &retrieval,
        bootstrap: BootstrapConfig {
            resamples: 500,
            seed: 3,
            confidence: 0.95,
        },
        threads: 2,
    })
    .unwrap();

    assert_eq!(report.roles.len(), 3);
    assert_eq!(report.predictor, "hybrid");
    for role_report in &report.roles {
        assert!(role_report.hybrid.is_some());
        assert!(role_report.head.is_some());
        let acc = &role_report.knn;
        assert!(acc.acc1 <= acc.acc3 && acc.acc3 <= acc.acc5);
        let summary = role_report.hybrid_minus_head.as_ref().unwrap();
        assert!(summary.ci_lower <= summary.delta && summary.delta <= summary.ci_upper);
    }
    // Determinism: rerunning serializes identically.
    let again = run_evaluation(&EvaluationInputs {
        index: &index,
        bank: &corpus.bank,
        records: &test,
        heads: Some(&heads),
        vocabs: &corpus.vocabs,
        config: &retrieval,
        bootstrap: BootstrapConfig {
            resamples: 500,
            seed: 3,
            confidence: 0.95,
        },
        threads: 4,
    })
    .unwrap();
    assert_eq!(report.to_json(), again.to_json());
    assert!(!report.render_text().is_empty());
}

/// Benchmark-scale split counts, checked only when a real dataset TSV is
/// supplied via CONDREC_BENCH_TSV.
#[test]
#[ignore]
fn full_benchmark_split_counts() {
    let path = std::env::var("CONDREC_BENCH_TSV").expect("set CONDREC_BENCH_TSV");
    let records = condrec_core::ingest::load_reactions(path, 1).unwrap();
    let (train, validation, test) = condrec_core::ingest::split_counts(&records);
    assert_eq!(train, 544_591);
    assert_eq!(validation, 68_075);
    assert_eq!(test, 68_075);
}
