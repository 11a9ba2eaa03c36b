//! Subcommand implementations.

use crate::config::{
    parse_key_kind, parse_temperature, resolve, resolve_required, retrieval_config, FileConfig,
};
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::{Command, CommonArgs, RetrievalArgs};
use condrec_core::error::Error as CoreError;
use condrec_core::eval::{
    absent_audit, label_relevance, multihot_targets, overlap_audit, run_evaluation, select_retrieval,
    AuditFeatures, BaselineReport, BootstrapConfig, EvaluationInputs, ExclusionRung, TargetMetric,
};
use condrec_core::fingerprint::{drfp_style, FingerprintConfig};
use condrec_core::index::PrecedentIndex;
use condrec_core::ingest::{load_reactions, EmbeddingBank, HeadProbabilities};
use condrec_core::linalg::Matrix;
use condrec_core::model::{
    PerRole, ReactionRecord, RetrievalConfig, Role, RoleDistribution, RoleVocabulary, Split,
};
use condrec_core::recommend::{baseline_prior, recommend, FingerprintKnn, TemplateMajority};
use condrec_core::synth;
use serde_json::json;
use std::path::{Path, PathBuf};

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CoreError> for CmdError {
    fn from(err: CoreError) -> Self {
        let code = match &err {
            CoreError::Invariant(_) => 4,
            _ => 3,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        Self {
            code: 3,
            message: err.to_string(),
        }
    }
}

impl From<String> for CmdError {
    fn from(message: String) -> Self {
        CmdError::usage(message)
    }
}

fn load_file_config(common: &CommonArgs) -> Result<FileConfig, CmdError> {
    match &common.config {
        Some(path) => Ok(FileConfig::load(path)?),
        None => Ok(FileConfig::default()),
    }
}

fn out_dir(common: &CommonArgs, file: &FileConfig) -> Result<PathBuf, CmdError> {
    let dir = resolve_required(common.out.clone(), file.out.clone(), "out")?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn threads(common: &CommonArgs, file: &FileConfig) -> usize {
    resolve(common.threads, file.threads, 0).max(1)
}

fn load_vocabs(dir: &Path) -> Result<PerRole<RoleVocabulary>, CmdError> {
    Ok(PerRole::new(
        RoleVocabulary::from_file(Role::Catalyst, dir.join("catalyst.txt"))?,
        RoleVocabulary::from_file(Role::Solvent, dir.join("solvent.txt"))?,
        RoleVocabulary::from_file(Role::Reagent, dir.join("reagent.txt"))?,
    ))
}

fn load_heads(paths: &[PathBuf]) -> Result<HeadProbabilities, CmdError> {
    let mut heads = HeadProbabilities::new();
    for path in paths {
        heads.load_role_file(path)?;
    }
    Ok(heads)
}

fn resolve_retrieval(
    args: &RetrievalArgs,
    file: &FileConfig,
) -> Result<RetrievalConfig, CmdError> {
    let defaults = RetrievalConfig::default();
    let key = parse_key_kind(&resolve(
        args.key.clone(),
        file.key.clone(),
        defaults.key_kind.as_str().to_string(),
    ))?;
    let k = resolve(args.k, file.k, defaults.k);
    let temperature = parse_temperature(&resolve(
        args.temp.clone(),
        file.temp.clone(),
        defaults.temperature.to_string(),
    ))?;
    let alpha = resolve(args.alpha, file.alpha, defaults.alpha);
    Ok(retrieval_config(key, k, temperature, alpha)?)
}

fn head_distributions_for(
    heads: &HeadProbabilities,
    vocabs: &PerRole<RoleVocabulary>,
    id: &str,
) -> Result<PerRole<RoleDistribution>, CmdError> {
    vocabs
        .try_map(|role, _| {
            heads.get(role, id).ok_or_else(|| {
                CoreError::Data(condrec_core::error::DataError::UnknownId {
                    id: format!("{id} (head probabilities, {role})"),
                })
            })
        })
        .map_err(CmdError::from)
}

pub fn run(cmd: Command) -> Result<(), CmdError> {
    match cmd {
        Command::Ingest {
            common,
            dataset,
            emit_fingerprints,
            nbits,
        } => cmd_ingest(common, dataset, emit_fingerprints, nbits),
        Command::BuildIndex {
            common,
            dataset,
            bank,
            vocabs,
            key,
        } => cmd_build_index(common, dataset, bank, vocabs, key),
        Command::Recommend {
            common,
            retrieval,
            index,
            bank,
            vocabs,
            heads,
            ids,
            dataset,
        } => cmd_recommend(common, retrieval, index, bank, vocabs, heads, ids, dataset),
        Command::Evaluate {
            common,
            retrieval,
            index,
            bank,
            dataset,
            vocabs,
            heads,
            seed,
            resamples,
            baselines,
        } => cmd_evaluate(
            common, retrieval, index, bank, dataset, vocabs, heads, seed, resamples, baselines,
        ),
        Command::Select {
            common,
            dataset,
            bank,
            vocabs,
            ks,
            temps,
            keys,
            fraction,
            metric,
            final_eval,
        } => cmd_select(
            common, dataset, bank, vocabs, ks, temps, keys, fraction, metric, final_eval,
        ),
        Command::Audit {
            common,
            retrieval,
            kind,
            index,
            bank,
            dataset,
            vocabs,
            heads,
            role,
            exclusion,
        } => cmd_audit(
            common, retrieval, kind, index, bank, dataset, vocabs, heads, role, exclusion,
        ),
        Command::Synth {
            common,
            corpus,
            seed,
        } => cmd_synth(common, corpus, seed),
    }
}

fn cmd_ingest(
    common: CommonArgs,
    dataset: Option<PathBuf>,
    emit_fingerprints: bool,
    nbits: Option<usize>,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let dataset = resolve_required(dataset, file.dataset.clone(), "dataset")?;
    let out = out_dir(&common, &file)?;
    let mut manifest = ManifestBuilder::new(
        "ingest",
        json!({ "dataset": dataset.display().to_string(), "emit_fingerprints": emit_fingerprints }),
    );
    manifest.input(&dataset)?;

    let records = load_reactions(&dataset, 1)?;
    let (n_train, n_validation, n_test) = condrec_core::ingest::split_counts(&records);
    let mut canonical = std::collections::BTreeSet::new();
    for record in &records {
        canonical.insert(condrec_core::ingest::canonical_reaction_string(record)?);
    }

    let summary = json!({
        "records": records.len(),
        "train": n_train,
        "validation": n_validation,
        "test": n_test,
        "distinct_canonical_reactions": canonical.len(),
    });
    let summary_path = out.join("summary.json");
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).unwrap())?;
    manifest.output(&summary_path);
    println!("{summary}");

    if emit_fingerprints {
        let cfg = FingerprintConfig {
            nbits: nbits.unwrap_or(FingerprintConfig::default().nbits),
            ..FingerprintConfig::default()
        };
        let mut rows = Vec::with_capacity(records.len());
        for record in &records {
            rows.push(drfp_style(record, &cfg)?.to_dense());
        }
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let bank = EmbeddingBank::new_packed(ids, Matrix::from_rows(&rows)?)?;
        let bank_path = out.join("fingerprints.emb");
        bank.save(&bank_path)?;
        manifest.output(&bank_path);
    }

    manifest.write(&out)?;
    Ok(())
}

fn cmd_build_index(
    common: CommonArgs,
    dataset: Option<PathBuf>,
    bank: Option<PathBuf>,
    vocabs: Option<PathBuf>,
    key: Option<String>,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let dataset = resolve_required(dataset, file.dataset.clone(), "dataset")?;
    let bank_path = resolve_required(bank, file.bank.clone(), "bank")?;
    let vocab_dir = resolve_required(vocabs, file.vocabs.clone(), "vocabs")?;
    let key = parse_key_kind(&resolve(key, file.key.clone(), "rxn".into()))?;
    let out = out_dir(&common, &file)?;

    let mut manifest = ManifestBuilder::new(
        "build-index",
        json!({
            "dataset": dataset.display().to_string(),
            "bank": bank_path.display().to_string(),
            "key": key.as_str(),
        }),
    );
    manifest.input(&dataset)?;
    manifest.input(&bank_path)?;

    let records = load_reactions(&dataset, 1)?;
    let train: Vec<ReactionRecord> = records
        .into_iter()
        .filter(|r| r.split == Split::Train)
        .collect();
    let bank = EmbeddingBank::load(&bank_path)?;
    let train_ids: Vec<String> = train
        .iter()
        .filter(|r| bank.row_of(&r.id).is_some())
        .map(|r| r.id.clone())
        .collect();
    let train_bank = bank.subset_by_ids(&train_ids)?;
    let vocabs = load_vocabs(&vocab_dir)?;
    let index = PrecedentIndex::build(&train_bank, &train, &vocabs, key)?;

    let index_path = out.join("index.bin");
    index.save(&index_path)?;
    manifest.output(&index_path);
    manifest.write(&out)?;
    println!(
        "{}",
        json!({ "rows": index.len(), "dim": index.dim(), "index": index_path.display().to_string() })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_recommend(
    common: CommonArgs,
    retrieval: RetrievalArgs,
    index: Option<PathBuf>,
    bank: Option<PathBuf>,
    vocabs: Option<PathBuf>,
    heads: Option<Vec<PathBuf>>,
    ids: Option<Vec<String>>,
    dataset: Option<PathBuf>,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let index_path = resolve_required(index, file.index.clone(), "index")?;
    let bank_path = resolve_required(bank, file.bank.clone(), "bank")?;
    let vocab_dir = resolve_required(vocabs, file.vocabs.clone(), "vocabs")?;
    let head_paths = resolve(heads, file.heads.clone(), Vec::new());
    let config = resolve_retrieval(&retrieval, &file)?;
    let workers = threads(&common, &file);
    let out = out_dir(&common, &file)?;

    if config.alpha > 0.0 && head_paths.is_empty() {
        return Err(CmdError::usage(format!(
            "alpha {} requires --heads; pass --alpha 0 for pure retrieval",
            config.alpha
        )));
    }

    let mut manifest = ManifestBuilder::new(
        "recommend",
        serde_json::to_value(&config).unwrap(),
    );
    manifest.input(&index_path)?;
    manifest.input(&bank_path)?;
    for path in &head_paths {
        manifest.input(path)?;
    }

    let index = PrecedentIndex::load(&index_path)?;
    let bank = EmbeddingBank::load(&bank_path)?;
    let vocabs = load_vocabs(&vocab_dir)?;
    let heads = if head_paths.is_empty() {
        None
    } else {
        Some(load_heads(&head_paths)?)
    };

    let query_ids: Vec<String> = match ids {
        Some(ids) if !ids.is_empty() => ids,
        _ => {
            let dataset = resolve_required(dataset, file.dataset.clone(), "dataset")
                .map_err(|_| CmdError::usage("pass --ids or --dataset to pick queries"))?;
            manifest.input(&dataset)?;
            load_reactions(&dataset, 1)?
                .into_iter()
                .filter(|r| r.split == Split::Test)
                .map(|r| r.id)
                .collect()
        }
    };
    if query_ids.is_empty() {
        return Err(CmdError::usage("no query ids"));
    }

    // Parallel over queries; output order follows the input id order.
    let line_results: Vec<Result<String, CmdError>> =
        condrec_core::parallel::parallel_map(query_ids.len(), workers, |i| {
            let id = &query_ids[i];
            let bank_row = bank.row_of(id).ok_or_else(|| {
                CmdError::from(CoreError::Data(
                    condrec_core::error::DataError::UnknownId { id: id.clone() },
                ))
            })?;
            let key = bank.key(bank_row, config.key_kind)?;
            let head_dists = match &heads {
                Some(h) => Some(head_distributions_for(h, &vocabs, id)?),
                None => None,
            };
            let rec = recommend(
                &key,
                index.row_of(id),
                &index,
                head_dists.as_ref(),
                &config,
                &vocabs,
                1,
            )?;
            // Serialize the struct directly so the embedded document is
            // byte-identical to the service's response for the same query.
            Ok(format!(
                "{{\"id\":{},\"recommendation\":{}}}",
                serde_json::to_string(id).expect("id serializes"),
                serde_json::to_string(&rec).expect("recommendation serializes")
            ))
        });
    let mut lines = Vec::with_capacity(query_ids.len());
    for line in line_results {
        lines.push(line?);
    }

    let out_path = out.join("recommendations.jsonl");
    write_atomic(&out_path, &(lines.join("\n") + "\n"))?;
    manifest.output(&out_path);
    manifest.write(&out)?;
    println!(
        "{}",
        json!({ "queries": query_ids.len(), "output": out_path.display().to_string() })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    common: CommonArgs,
    retrieval: RetrievalArgs,
    index: Option<PathBuf>,
    bank: Option<PathBuf>,
    dataset: Option<PathBuf>,
    vocabs: Option<PathBuf>,
    heads: Option<Vec<PathBuf>>,
    seed: Option<u64>,
    resamples: Option<usize>,
    baselines: bool,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let index_path = resolve_required(index, file.index.clone(), "index")?;
    let bank_path = resolve_required(bank, file.bank.clone(), "bank")?;
    let dataset_path = resolve_required(dataset, file.dataset.clone(), "dataset")?;
    let vocab_dir = resolve_required(vocabs, file.vocabs.clone(), "vocabs")?;
    let head_paths = resolve(heads, file.heads.clone(), Vec::new());
    let config = resolve_retrieval(&retrieval, &file)?;
    let bootstrap = BootstrapConfig {
        resamples: resolve(resamples, file.resamples, 10_000),
        seed: resolve(seed, file.seed, 0),
        confidence: 0.95,
    };
    let workers = threads(&common, &file);
    let out = out_dir(&common, &file)?;

    let mut manifest = ManifestBuilder::new(
        "evaluate",
        json!({ "retrieval": config, "bootstrap": bootstrap, "baselines": baselines }),
    );
    manifest.input(&index_path)?;
    manifest.input(&bank_path)?;
    manifest.input(&dataset_path)?;
    for path in &head_paths {
        manifest.input(path)?;
    }

    let index = PrecedentIndex::load(&index_path)?;
    let bank = EmbeddingBank::load(&bank_path)?;
    let vocabs = load_vocabs(&vocab_dir)?;
    let records = load_reactions(&dataset_path, 1)?;
    let test: Vec<ReactionRecord> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .cloned()
        .collect();
    let heads_loaded = if head_paths.is_empty() {
        None
    } else {
        Some(load_heads(&head_paths)?)
    };

    let mut report = run_evaluation(&EvaluationInputs {
        index: &index,
        bank: &bank,
        records: &test,
        heads: heads_loaded.as_ref(),
        vocabs: &vocabs,
        config: &config,
        bootstrap,
        threads: workers,
    })?;

    if baselines {
        let train: Vec<ReactionRecord> = records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect();
        report.baselines = baseline_rows(&train, &test, &vocabs, &config)?;
        report.notes.push(
            "template keys are hashed differential-fingerprint bit sets, a declared proxy for \
             reaction templates"
                .to_string(),
        );
    }

    let json_path = out.join("report.json");
    write_atomic(&json_path, &report.to_json())?;
    let text = report.render_text();
    let text_path = out.join("report.txt");
    write_atomic(&text_path, &text)?;
    manifest.output(&json_path);
    manifest.output(&text_path);
    manifest.write(&out)?;
    print!("{text}");
    Ok(())
}

/// Prior, template-majority, and exact fingerprint k-NN rows for the matched
/// baseline table.
fn baseline_rows(
    train: &[ReactionRecord],
    test: &[ReactionRecord],
    vocabs: &PerRole<RoleVocabulary>,
    config: &RetrievalConfig,
) -> Result<Vec<BaselineReport>, CmdError> {
    let fp_cfg = FingerprintConfig::default();
    let targets = vocabs.try_map(|_, vocab| multihot_targets(test, vocab))?;

    let acc1_of = |ranked_per_role: &PerRole<Vec<Vec<u32>>>| -> Result<PerRole<f64>, CoreError> {
        ranked_per_role.try_map(|role, ranked| {
            condrec_core::eval::topk_accuracy(ranked, targets.get(role), 1)
        })
    };

    // Condition prior.
    let priors = vocabs.try_map(|_, vocab| baseline_prior(train, vocab))?;
    let prior_ranked = priors.map(|_, dist| vec![dist.ranked_classes(); test.len()]);

    // Template majority.
    let tm = TemplateMajority::fit(train, vocabs, fp_cfg)?;
    let mut tm_ranked = PerRole::new(Vec::new(), Vec::new(), Vec::new());
    for record in test {
        let dists = tm.predict(record)?;
        for role in Role::ALL {
            tm_ranked.get_mut(role).push(dists.get(role).ranked_classes());
        }
    }

    // Exact fingerprint k-NN with the configured k and weighting.
    let knn = FingerprintKnn::fit(train, vocabs, &fp_cfg)?;
    let mut fp_ranked = PerRole::new(Vec::new(), Vec::new(), Vec::new());
    for record in test {
        let fp = drfp_style(record, &fp_cfg)?;
        let neighbors = knn.neighbors(&fp, config.k)?;
        for role in Role::ALL {
            let n_classes = vocabs.get(role).size_with_absent();
            let dist = if neighbors.is_empty() {
                priors.get(role).clone()
            } else {
                condrec_core::recommend::vote(&neighbors, config.temperature, role, n_classes)?
            };
            fp_ranked.get_mut(role).push(dist.ranked_classes());
        }
    }

    Ok(vec![
        BaselineReport {
            name: "condition_prior".into(),
            acc1: acc1_of(&prior_ranked)?,
        },
        BaselineReport {
            name: "template_majority".into(),
            acc1: acc1_of(&tm_ranked)?,
        },
        BaselineReport {
            name: "fingerprint_knn_exact".into(),
            acc1: acc1_of(&fp_ranked)?,
        },
    ])
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    common: CommonArgs,
    dataset: Option<PathBuf>,
    bank: Option<PathBuf>,
    vocabs: Option<PathBuf>,
    ks: Option<Vec<usize>>,
    temps: Option<Vec<String>>,
    keys: Option<Vec<String>>,
    fraction: Option<f64>,
    metric: Option<String>,
    final_eval: bool,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let dataset_path = resolve_required(dataset, file.dataset.clone(), "dataset")?;
    let bank_path = resolve_required(bank, file.bank.clone(), "bank")?;
    let vocab_dir = resolve_required(vocabs, file.vocabs.clone(), "vocabs")?;
    let workers = threads(&common, &file);
    let out = out_dir(&common, &file)?;

    let ks = ks.unwrap_or_else(|| vec![1, 5, 10, 31]);
    let temp_strings = temps.unwrap_or_else(|| vec!["uniform".into(), "0.07".into()]);
    let key_strings = keys.unwrap_or_else(|| vec!["rxn".into()]);
    let fraction = resolve(fraction, None, 0.1);
    let metric = parse_metric(&metric.unwrap_or_else(|| "acc@1".into()))?;

    let mut grid = Vec::new();
    for key in &key_strings {
        let key = parse_key_kind(key)?;
        for k in &ks {
            for temp in &temp_strings {
                grid.push(RetrievalConfig {
                    key_kind: key,
                    k: *k,
                    temperature: parse_temperature(temp)?,
                    alpha: 0.0,
                });
            }
        }
    }

    let mut manifest = ManifestBuilder::new(
        "select",
        json!({ "grid_size": grid.len(), "fraction": fraction, "metric": metric.describe() }),
    );
    manifest.input(&dataset_path)?;
    manifest.input(&bank_path)?;

    let records = load_reactions(&dataset_path, 1)?;
    let train: Vec<ReactionRecord> = records
        .iter()
        .filter(|r| r.split == Split::Train)
        .cloned()
        .collect();
    let bank = EmbeddingBank::load(&bank_path)?;
    let vocabs = load_vocabs(&vocab_dir)?;

    let outcome = select_retrieval(&grid, &train, &bank, &vocabs, fraction, metric, workers)?;

    let out_path = out.join("selection.json");
    write_atomic(
        &out_path,
        &serde_json::to_string_pretty(&outcome).unwrap(),
    )?;
    manifest.output(&out_path);

    if final_eval {
        // Rebuild on the full train split and spend the single held-out
        // evaluation on the winner.
        let test: Vec<ReactionRecord> = records
            .iter()
            .filter(|r| r.split == Split::Test)
            .cloned()
            .collect();
        if test.is_empty() {
            return Err(CmdError::usage("--final-eval needs test rows in the dataset"));
        }
        let train_ids: Vec<String> = train
            .iter()
            .filter(|r| bank.row_of(&r.id).is_some())
            .map(|r| r.id.clone())
            .collect();
        let train_bank = bank.subset_by_ids(&train_ids)?;
        let index = PrecedentIndex::build(&train_bank, &train, &vocabs, outcome.winner.key_kind)?;
        let mut report = run_evaluation(&EvaluationInputs {
            index: &index,
            bank: &bank,
            records: &test,
            heads: None,
            vocabs: &vocabs,
            config: &outcome.winner,
            bootstrap: BootstrapConfig::default(),
            threads: workers,
        })?;
        report.selection = Some(outcome.clone());
        let report_path = out.join("report.json");
        write_atomic(&report_path, &report.to_json())?;
        let text_path = out.join("report.txt");
        write_atomic(&text_path, &report.render_text())?;
        manifest.output(&report_path);
        manifest.output(&text_path);
    }

    manifest.write(&out)?;
    println!(
        "{}",
        json!({
            "winner": outcome.winner,
            "metric": outcome.metric,
            "candidates": outcome.scores.len(),
            "output": out_path.display().to_string(),
        })
    );
    Ok(())
}

fn parse_metric(s: &str) -> Result<TargetMetric, CmdError> {
    let (role, rest) = match s.split_once(':') {
        Some((role, rest)) => {
            let role = Role::parse(role)
                .ok_or_else(|| CmdError::usage(format!("bad metric role in {s:?}")))?;
            (Some(role), rest)
        }
        None => (None, s),
    };
    let k = rest
        .strip_prefix("acc@")
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(|| CmdError::usage(format!("bad metric {s:?}; expected [role:]acc@K")))?;
    Ok(TargetMetric { k, role })
}

#[allow(clippy::too_many_arguments)]
fn cmd_audit(
    common: CommonArgs,
    retrieval: RetrievalArgs,
    kind: String,
    index: Option<PathBuf>,
    bank: Option<PathBuf>,
    dataset: Option<PathBuf>,
    vocabs: Option<PathBuf>,
    heads: Option<Vec<PathBuf>>,
    role: Option<String>,
    exclusion: Option<String>,
) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let index_path = resolve_required(index, file.index.clone(), "index")?;
    let bank_path = resolve_required(bank, file.bank.clone(), "bank")?;
    let dataset_path = resolve_required(dataset, file.dataset.clone(), "dataset")?;
    let vocab_dir = resolve_required(vocabs, file.vocabs.clone(), "vocabs")?;
    let head_paths = resolve(heads, file.heads.clone(), Vec::new());
    let config = resolve_retrieval(&retrieval, &file)?;
    let role_name = resolve(role, file.role.clone(), "solvent".into());
    let audit_role = Role::parse(&role_name)
        .ok_or_else(|| CmdError::usage(format!("bad --role {role_name:?}")))?;
    let exclusion = resolve(exclusion, file.exclusion.clone(), "all".into());
    let workers = threads(&common, &file);
    let out = out_dir(&common, &file)?;

    if !matches!(kind.as_str(), "absent" | "overlap" | "both") {
        return Err(CmdError::usage(format!(
            "bad --kind {kind:?}; expected absent, overlap, or both"
        )));
    }

    let mut manifest = ManifestBuilder::new(
        "audit",
        json!({ "kind": kind, "role": audit_role.as_str(), "exclusion": exclusion }),
    );
    manifest.input(&index_path)?;
    manifest.input(&bank_path)?;
    manifest.input(&dataset_path)?;

    let index = PrecedentIndex::load(&index_path)?;
    let bank = EmbeddingBank::load(&bank_path)?;
    let vocabs = load_vocabs(&vocab_dir)?;
    let records = load_reactions(&dataset_path, 1)?;
    let test: Vec<ReactionRecord> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .cloned()
        .collect();
    if test.is_empty() {
        return Err(CmdError::usage("dataset has no test rows to audit"));
    }

    let mut output = serde_json::Map::new();
    let mut text = String::new();

    if kind == "absent" || kind == "both" {
        let heads_loaded = if head_paths.is_empty() {
            None
        } else {
            Some(load_heads(&head_paths)?)
        };
        let report = run_evaluation(&EvaluationInputs {
            index: &index,
            bank: &bank,
            records: &test,
            heads: heads_loaded.as_ref(),
            vocabs: &vocabs,
            config: &config,
            bootstrap: BootstrapConfig {
                resamples: 200,
                seed: 0,
                confidence: 0.95,
            },
            threads: workers,
        })?;
        // Prior rows for the same table.
        let train: Vec<ReactionRecord> = records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect();
        let mut rows = Vec::new();
        for role_report in &report.roles {
            rows.push(json!({ "predictor": report.predictor, "audit": role_report.audit }));
            if !train.is_empty() {
                let prior = baseline_prior(&train, vocabs.get(role_report.role))?;
                let targets = multihot_targets(&test, vocabs.get(role_report.role))?;
                let ranked: Vec<Vec<u32>> =
                    test.iter().map(|_| prior.ranked_classes()).collect();
                let prior_audit = absent_audit(&ranked, &targets, role_report.role)?;
                rows.push(json!({ "predictor": "prior", "audit": prior_audit }));
            }
        }
        output.insert("absent".into(), serde_json::Value::Array(rows));
        text.push_str("absent-class audit\n");
        for role_report in &report.roles {
            let a = &role_report.audit;
            text.push_str(&format!(
                "{:<10} absent {:>6} ({:>5.1}%)  all@1 {:.4}  pres@1 {:.4}  abs@1 {:.4}\n",
                a.role.as_str(),
                a.n_absent,
                100.0 * a.absent_fraction,
                a.all_at1,
                a.present_at1,
                a.absent_at1
            ));
        }
    }

    if kind == "overlap" || kind == "both" {
        let train: Vec<ReactionRecord> = records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect();
        let mut index_features = Vec::with_capacity(index.len());
        let by_id: std::collections::HashMap<&str, &ReactionRecord> =
            train.iter().map(|r| (r.id.as_str(), r)).collect();
        for id in index.ids() {
            let record = by_id.get(id.as_str()).ok_or_else(|| {
                CmdError::from(CoreError::Data(condrec_core::error::DataError::UnknownId {
                    id: id.clone(),
                }))
            })?;
            index_features.push(AuditFeatures::of(record)?);
        }
        let mut query_keys = Vec::with_capacity(test.len());
        let mut query_features = Vec::with_capacity(test.len());
        for record in &test {
            let row = bank.row_of(&record.id).ok_or_else(|| {
                CmdError::from(CoreError::Data(condrec_core::error::DataError::UnknownId {
                    id: record.id.clone(),
                }))
            })?;
            query_keys.push(bank.key(row, config.key_kind)?);
            query_features.push(AuditFeatures::of(record)?);
        }
        let targets = multihot_targets(&test, vocabs.get(audit_role))?;
        let relevance = label_relevance(&index, &targets, audit_role);

        let rungs: Vec<ExclusionRung> = if exclusion == "all" {
            ExclusionRung::LADDER.to_vec()
        } else {
            vec![ExclusionRung::parse(&exclusion).ok_or_else(|| {
                CmdError::usage(format!("bad --exclusion {exclusion:?}"))
            })?]
        };
        let mut rows = Vec::new();
        text.push_str("overlap audit (P@5)\n");
        for rung in rungs {
            let audit = overlap_audit(
                &index,
                &index_features,
                &query_keys,
                &query_features,
                rung,
                5,
                &relevance,
                workers,
            )?;
            text.push_str(&format!(
                "{:<30} P@5 {:.4} over {} queries\n",
                audit.rung.as_str(),
                audit.precision_at_k,
                audit.queries_scored
            ));
            rows.push(serde_json::to_value(&audit).unwrap());
        }
        output.insert("overlap".into(), serde_json::Value::Array(rows));
    }

    let json_path = out.join("audit.json");
    write_atomic(
        &json_path,
        &serde_json::to_string_pretty(&serde_json::Value::Object(output)).unwrap(),
    )?;
    let text_path = out.join("audit.txt");
    write_atomic(&text_path, &text)?;
    manifest.output(&json_path);
    manifest.output(&text_path);
    manifest.write(&out)?;
    print!("{text}");
    Ok(())
}

fn cmd_synth(common: CommonArgs, corpus: String, seed: Option<u64>) -> Result<(), CmdError> {
    let file = load_file_config(&common)?;
    let out = out_dir(&common, &file)?;
    let seed = resolve(seed, file.seed, 20_240_001);

    let mut manifest = ManifestBuilder::new(
        "synth",
        json!({ "corpus": corpus, "seed": seed }),
    );

    let written = match corpus.as_str() {
        "complementary" => {
            let cfg = synth::ComplementaryConfig {
                seed,
                ..Default::default()
            };
            synth::complementary_corpus(&cfg)?.write_to(&out)?
        }
        "selection" => synth::selection_corpus(seed)?.write_to(&out)?,
        "prior" => {
            let (train, test, vocabs) =
                synth::absent_prior_corpus(Role::Catalyst, 1000, 870, 13);
            let mut records = train;
            records.extend(test);
            // Identity-like bank so the corpus is complete for the pipeline.
            let dim = 8;
            let mut rng = condrec_core::rng::SplitMix64::new(seed);
            let rows: Vec<Vec<f32>> = (0..records.len())
                .map(|_| {
                    let mut v: Vec<f32> =
                        (0..dim).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
                    condrec_core::linalg::normalize_in_place(&mut v);
                    v
                })
                .collect();
            let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            let bank = EmbeddingBank::new(ids, Matrix::from_rows(&rows)?, None)?;
            synth::SynthCorpus {
                records,
                bank,
                vocabs,
                head_rows: None,
            }
            .write_to(&out)?
        }
        other => {
            return Err(CmdError::usage(format!(
                "bad --corpus {other:?}; expected complementary, selection, or prior"
            )))
        }
    };

    manifest.output(&written.dataset);
    manifest.output(&written.bank);
    manifest.write(&out)?;
    println!(
        "{}",
        json!({ "corpus": corpus, "dataset": written.dataset.display().to_string() })
    );
    Ok(())
}
