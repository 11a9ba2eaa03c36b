//! Black-box tests of the `condrec` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn condrec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_condrec"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawn condrec");
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Synthesize the complementary corpus and build its index; returns the
/// corpus dir and index path.
fn prepared_workspace(root: &Path) -> (PathBuf, PathBuf) {
    let corpus = root.join("corpus");
    run_ok(condrec()
        .args(["synth", "--corpus", "complementary", "--seed", "20240001"])
        .arg("--out")
        .arg(&corpus));

    let index_dir = root.join("index");
    run_ok(condrec()
        .arg("build-index")
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--key", "rxn"])
        .arg("--out")
        .arg(&index_dir));
    (corpus, index_dir.join("index.bin"))
}

fn heads_arg(corpus: &Path) -> String {
    ["catalyst", "solvent", "reagent"]
        .iter()
        .map(|role| corpus.join("heads").join(format!("{role}.heads")).display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[test]
fn ingest_reports_split_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("toy.tsv");
    std::fs::write(
        &dataset,
        "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
         r1\tCCO\tCC=O\tPd\twater\t\ttrain\t\n\
         r2\tCCCl\tCCBr\t\tTHF\tNaH\ttrain\t\n\
         r3\tCC=O\tCCO\t\t\t\ttrain\t\n\
         r4\tCCBr\tCCI\t\twater\tNaI\tvalidation\t\n\
         r5\tCCO\tCCOC\tH2SO4\t\t\ttest\t\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = run_ok(condrec()
        .arg("ingest")
        .arg("--dataset")
        .arg(&dataset)
        .arg("--out")
        .arg(&out));
    let summary: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("summary json");
    assert_eq!(summary["train"], 3);
    assert_eq!(summary["validation"], 1);
    assert_eq!(summary["test"], 1);
    assert!(out.join("summary.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn ingest_rejects_malformed_rows_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("bad.tsv");
    std::fs::write(
        &dataset,
        "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
         r1\tCCO\n",
    )
    .unwrap();
    let output = condrec()
        .arg("ingest")
        .arg("--dataset")
        .arg(&dataset)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).expect("json error line");
    assert_eq!(err["code"], 3);
    assert!(err["message"].as_str().unwrap().contains(":2"));
}

#[test]
fn missing_input_file_exits_3_and_bad_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = condrec()
        .arg("ingest")
        .arg("--dataset")
        .arg(dir.path().join("nope.tsv"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));

    let output = condrec()
        .args(["evaluate", "--bogus-flag"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Usage error from validation (alpha out of range).
    let output = condrec()
        .args(["recommend", "--alpha", "1.5", "--index", "x", "--bank", "y", "--vocabs", "z", "--out", "w"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn ingest_emits_fingerprint_bank() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("toy.tsv");
    std::fs::write(
        &dataset,
        "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
         r1\tCCO\tCC=O\tPd\twater\t\ttrain\t\n\
         r2\tCCCl\tCCBr\t\tTHF\tNaH\ttrain\t\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(condrec()
        .arg("ingest")
        .arg("--dataset")
        .arg(&dataset)
        .args(["--emit-fingerprints", "--nbits", "256"])
        .arg("--out")
        .arg(&out));
    let bank = condrec_core::ingest::EmbeddingBank::load(out.join("fingerprints.emb")).unwrap();
    assert_eq!(bank.len(), 2);
    assert_eq!(bank.dim(), 256);
    assert!(bank.is_packed());
}

#[test]
fn evaluate_is_byte_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, index) = prepared_workspace(dir.path());
    let heads = heads_arg(&corpus);

    let mut reports = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("eval{run}"));
        run_ok(condrec()
            .arg("evaluate")
            .arg("--index")
            .arg(&index)
            .arg("--bank")
            .arg(corpus.join("bank.emb"))
            .arg("--dataset")
            .arg(corpus.join("dataset.tsv"))
            .arg("--vocabs")
            .arg(corpus.join("vocabs"))
            .args(["--heads", &heads])
            .args(["--seed", "42", "--resamples", "500", "--threads", if run == 0 { "1" } else { "4" }])
            .arg("--out")
            .arg(&out));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn recommend_with_alpha_one_equals_head_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, index) = prepared_workspace(dir.path());
    let heads = heads_arg(&corpus);

    let records = condrec_core::ingest::load_reactions(corpus.join("dataset.tsv"), 1).unwrap();
    let test_ids: Vec<String> = records
        .iter()
        .filter(|r| r.split == condrec_core::model::Split::Test)
        .take(3)
        .map(|r| r.id.clone())
        .collect();

    let out = dir.path().join("rec");
    run_ok(condrec()
        .arg("recommend")
        .arg("--index")
        .arg(&index)
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--heads", &heads])
        .args(["--ids", &test_ids.join(",")])
        .args(["--alpha", "1.0"])
        .arg("--out")
        .arg(&out));

    let mut head_probs = condrec_core::ingest::HeadProbabilities::new();
    for role in ["catalyst", "solvent", "reagent"] {
        head_probs
            .load_role_file(corpus.join("heads").join(format!("{role}.heads")))
            .unwrap();
    }

    let lines = std::fs::read_to_string(out.join("recommendations.jsonl")).unwrap();
    for (line, id) in lines.lines().zip(&test_ids) {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["id"], id.as_str());
        for role_value in value["recommendation"]["roles"].as_array().unwrap() {
            let role = condrec_core::model::Role::parse(
                role_value["role"].as_str().unwrap(),
            )
            .unwrap();
            let expected = head_probs.get(role, id).unwrap().ranked_classes();
            let got: Vec<u32> = role_value["ranked"]
                .as_array()
                .unwrap()
                .iter()
                .map(|e| e["class"].as_u64().unwrap() as u32)
                .collect();
            assert_eq!(got, expected, "role {role} id {id}");
        }
    }
}

#[test]
fn evaluate_accuracy_matches_a_brute_force_oracle() {
    use condrec_core::model::{KeyKind, Role, Split};

    let dir = tempfile::tempdir().unwrap();
    let (corpus, index_path) = prepared_workspace(dir.path());

    let out = dir.path().join("eval-oracle");
    run_ok(condrec()
        .arg("evaluate")
        .arg("--index")
        .arg(&index_path)
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--alpha", "0", "--k", "10", "--temp", "uniform", "--resamples", "50"])
        .arg("--out")
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();

    // Oracle: re-derive acc@1/@3 per role with test-local counting over raw
    // neighbor labels, not the evaluation module's vote/rank code.
    let records = condrec_core::ingest::load_reactions(corpus.join("dataset.tsv"), 1).unwrap();
    let test: Vec<_> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .cloned()
        .collect();
    let bank = condrec_core::ingest::EmbeddingBank::load(corpus.join("bank.emb")).unwrap();
    let index = condrec_core::index::PrecedentIndex::load(&index_path).unwrap();
    let vocabs = condrec_core::model::PerRole::new(
        condrec_core::model::RoleVocabulary::from_file(
            Role::Catalyst,
            corpus.join("vocabs/catalyst.txt"),
        )
        .unwrap(),
        condrec_core::model::RoleVocabulary::from_file(
            Role::Solvent,
            corpus.join("vocabs/solvent.txt"),
        )
        .unwrap(),
        condrec_core::model::RoleVocabulary::from_file(
            Role::Reagent,
            corpus.join("vocabs/reagent.txt"),
        )
        .unwrap(),
    );

    for role in Role::ALL {
        let vocab = vocabs.get(role);
        let mut hits1 = 0usize;
        let mut hits3 = 0usize;
        for record in &test {
            let row = bank.row_of(&record.id).unwrap();
            let key = bank.key(row, KeyKind::RxnOnly).unwrap();
            let neighbors = index.search(&key, 10).unwrap();
            // Count votes per class by hand.
            let mut counts = vec![0usize; vocab.size_with_absent()];
            for nb in &neighbors {
                counts[nb.label(role) as usize] += 1;
            }
            let mut order: Vec<usize> = (0..counts.len()).collect();
            order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            let gold =
                condrec_core::model::remap_absent(record.conditions.get(role), vocab).unwrap()
                    as usize;
            if order[0] == gold {
                hits1 += 1;
            }
            if order[..3].contains(&gold) {
                hits3 += 1;
            }
        }
        let expected1 = hits1 as f64 / test.len() as f64;
        let expected3 = hits3 as f64 / test.len() as f64;
        let role_report = report["roles"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["role"] == role.as_str())
            .unwrap();
        assert!(
            (role_report["knn"]["acc1"].as_f64().unwrap() - expected1).abs() < 1e-12,
            "{role}: acc1"
        );
        assert!(
            (role_report["knn"]["acc3"].as_f64().unwrap() - expected3).abs() < 1e-12,
            "{role}: acc3"
        );
    }
}

#[test]
fn select_final_eval_embeds_winner_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = prepared_workspace(dir.path());

    let out = dir.path().join("sel-final");
    run_ok(condrec()
        .arg("select")
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--ks", "1,10", "--temps", "uniform", "--fraction", "0.2", "--metric", "acc@1"])
        .arg("--final-eval")
        .arg("--out")
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let selection = &report["selection"];
    assert!(!selection.is_null(), "selection provenance missing");
    let winner_k = selection["winner"]["k"].as_u64().unwrap();
    assert_eq!(report["config"]["k"].as_u64().unwrap(), winner_k);
    assert_eq!(selection["scores"].as_array().unwrap().len(), 2);
    assert_eq!(report["predictor"], "knn");
}

#[test]
fn select_with_single_candidate_returns_it() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    run_ok(condrec()
        .args(["synth", "--corpus", "selection", "--seed", "11"])
        .arg("--out")
        .arg(&corpus));

    let out = dir.path().join("sel");
    run_ok(condrec()
        .arg("select")
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--ks", "10", "--temps", "uniform", "--fraction", "0.2", "--metric", "acc@1"])
        .arg("--out")
        .arg(&out));
    let selection: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("selection.json")).unwrap())
            .unwrap();
    assert_eq!(selection["winner"]["k"], 10);
    assert_eq!(selection["scores"].as_array().unwrap().len(), 1);
}

#[test]
fn audit_emits_ladder_and_absent_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, index) = prepared_workspace(dir.path());

    let out = dir.path().join("audit");
    run_ok(condrec()
        .arg("audit")
        .args(["--kind", "both"])
        .arg("--index")
        .arg(&index)
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--role", "solvent", "--alpha", "0", "--exclusion", "all"])
        .arg("--out")
        .arg(&out));
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["overlap"].as_array().unwrap().len(), 5);
    assert!(audit["absent"].as_array().unwrap().len() >= 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, index) = prepared_workspace(dir.path());
    let heads = heads_arg(&corpus);

    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        format!(
            "dataset = {:?}\nbank = {:?}\nindex = {:?}\nvocabs = {:?}\nheads = [{}]\nk = 5\nalpha = 0.5\nseed = 7\nresamples = 200\n",
            corpus.join("dataset.tsv"),
            corpus.join("bank.emb"),
            index,
            corpus.join("vocabs"),
            heads
                .split(',')
                .map(|p| format!("{p:?}"))
                .collect::<Vec<_>>()
                .join(", "),
        ),
    )
    .unwrap();

    // All inputs from the file; --k overrides the file's 5.
    let out = dir.path().join("eval-config");
    run_ok(condrec()
        .arg("evaluate")
        .arg("--config")
        .arg(&config_path)
        .args(["--k", "3"])
        .arg("--out")
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["k"], 3);
    assert_eq!(report["bootstrap"]["seed"], 7);
}

#[test]
fn evaluate_with_baselines_adds_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, index) = prepared_workspace(dir.path());

    let out = dir.path().join("eval-base");
    run_ok(condrec()
        .arg("evaluate")
        .arg("--index")
        .arg(&index)
        .arg("--bank")
        .arg(corpus.join("bank.emb"))
        .arg("--dataset")
        .arg(corpus.join("dataset.tsv"))
        .arg("--vocabs")
        .arg(corpus.join("vocabs"))
        .args(["--alpha", "0", "--resamples", "50", "--baselines"])
        .arg("--out")
        .arg(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let baselines = report["baselines"].as_array().unwrap();
    let names: Vec<&str> = baselines
        .iter()
        .map(|b| b["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        vec!["condition_prior", "template_majority", "fingerprint_knn_exact"]
    );
}

#[test]
fn outputs_stay_inside_the_declared_directory() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus-only");
    run_ok(condrec()
        .args(["synth", "--corpus", "prior", "--seed", "5"])
        .arg("--out")
        .arg(&corpus));
    // Everything written lives under --out.
    let entries: Vec<PathBuf> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries, vec![corpus.clone()]);
    assert!(corpus.join("dataset.tsv").exists());
    assert!(corpus.join("manifest.json").exists());
}
