//! Evaluation protocol: top-k accuracy over multi-valid targets,
//! absent/present audits, paired bootstrap intervals, overlap-exclusion
//! audits, and validation-selected retrieval.

use crate::error::{DataError, Error, Result};
use crate::index::PrecedentIndex;
use crate::ingest::{canonical_reaction_string, deterministic_split, EmbeddingBank, HeadProbabilities};
use crate::model::{
    build_multihot, MultiHotTarget, PerRole, ReactionRecord, RetrievalConfig, Role,
    RoleVocabulary, Split,
};
use crate::parallel::parallel_map;
use crate::recommend::{fuse_hybrid, prior_from_index, vote};
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

// ---------------------------------------------------------------------------
// Top-k accuracy
// ---------------------------------------------------------------------------

/// Per-row hit indicators: 1 when any valid target class appears in the row's
/// top-k ranked classes.
pub fn row_hits(ranked: &[Vec<u32>], targets: &[MultiHotTarget], k: usize) -> Result<Vec<u8>> {
    if ranked.len() != targets.len() {
        return Err(Error::dimension(format!(
            "{} prediction rows for {} target rows",
            ranked.len(),
            targets.len()
        )));
    }
    if k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    Ok(ranked
        .iter()
        .zip(targets)
        .map(|(classes, target)| {
            let hit = classes
                .iter()
                .take(k)
                .any(|class| target.contains(*class));
            hit as u8
        })
        .collect())
}

/// Fraction of rows whose target is hit within the top-k ranked classes.
pub fn topk_accuracy(ranked: &[Vec<u32>], targets: &[MultiHotTarget], k: usize) -> Result<f64> {
    let hits = row_hits(ranked, targets, k)?;
    if hits.is_empty() {
        return Err(Error::empty("evaluation rows"));
    }
    Ok(hits.iter().map(|&h| h as u64).sum::<u64>() as f64 / hits.len() as f64)
}

// ---------------------------------------------------------------------------
// Absent/present audit
// ---------------------------------------------------------------------------

/// Absent-class audit for one role: top-1 accuracy over all rows, over rows
/// whose gold label set is exactly the absent class, and over the rest.
///
/// The partition is disjoint by construction (a row is "absent" iff its only
/// valid label is class 0), so `all@1` reconstructs exactly from the two
/// sides and their row counts; the constructor verifies that identity to
/// 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsentAudit {
    pub role: Role,
    pub n_rows: usize,
    pub n_absent: usize,
    pub n_present: usize,
    pub absent_fraction: f64,
    pub all_at1: f64,
    pub present_at1: f64,
    pub absent_at1: f64,
}

pub fn absent_audit(
    ranked: &[Vec<u32>],
    targets: &[MultiHotTarget],
    role: Role,
) -> Result<AbsentAudit> {
    let hits = row_hits(ranked, targets, 1)?;
    if hits.is_empty() {
        return Err(Error::empty("audit rows"));
    }
    let n_rows = hits.len();
    let mut n_absent = 0usize;
    let mut hits_absent = 0u64;
    let mut hits_present = 0u64;
    for (target, &hit) in targets.iter().zip(&hits) {
        if target.is_absent_only() {
            n_absent += 1;
            hits_absent += hit as u64;
        } else {
            hits_present += hit as u64;
        }
    }
    let n_present = n_rows - n_absent;
    let all_at1 = (hits_absent + hits_present) as f64 / n_rows as f64;
    let present_at1 = if n_present > 0 {
        hits_present as f64 / n_present as f64
    } else {
        0.0
    };
    let absent_at1 = if n_absent > 0 {
        hits_absent as f64 / n_absent as f64
    } else {
        0.0
    };

    let reconstructed =
        (n_present as f64 * present_at1 + n_absent as f64 * absent_at1) / n_rows as f64;
    if (all_at1 - reconstructed).abs() > 1e-12 {
        return Err(Error::Invariant(format!(
            "audit decomposition broke: all@1 {all_at1} vs reconstruction {reconstructed}"
        )));
    }

    Ok(AbsentAudit {
        role,
        n_rows,
        n_absent,
        n_present,
        absent_fraction: n_absent as f64 / n_rows as f64,
        all_at1,
        present_at1,
        absent_at1,
    })
}

// ---------------------------------------------------------------------------
// Paired bootstrap
// ---------------------------------------------------------------------------

/// Bootstrap parameters. The generator and its seeding scheme are fixed (see
/// [`crate::rng`]), so fixed seeds give byte-identical intervals everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            seed: 0,
            confidence: 0.95,
        }
    }
}

/// Point delta and percentile confidence interval for `mean(b) - mean(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub delta: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

/// Paired nonparametric bootstrap over per-row 0/1 correctness indicators.
///
/// Each resample draws `n` row indices with replacement (resample `r` uses
/// the deterministic child stream `r` of the seed) and recomputes
/// `mean(b) - mean(a)` over the drawn rows; the interval is the percentile
/// span of the resampled deltas. Resamples are chunked across threads without
/// affecting the draw sequence.
pub fn paired_bootstrap(
    correct_a: &[u8],
    correct_b: &[u8],
    cfg: &BootstrapConfig,
    threads: usize,
) -> Result<BootstrapSummary> {
    if correct_a.is_empty() {
        return Err(Error::empty("bootstrap rows"));
    }
    if correct_a.len() != correct_b.len() {
        return Err(Error::dimension(format!(
            "paired inputs differ in length: {} vs {}",
            correct_a.len(),
            correct_b.len()
        )));
    }
    if cfg.resamples < 1 {
        return Err(Error::config("resamples must be at least 1"));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(Error::config(format!(
            "confidence {} must lie strictly between 0 and 1",
            cfg.confidence
        )));
    }

    let n = correct_a.len();
    // Per-row signed difference b - a in {-1, 0, 1}.
    let diffs: Vec<i8> = correct_b
        .iter()
        .zip(correct_a)
        .map(|(&b, &a)| b as i8 - a as i8)
        .collect();
    let point = diffs.iter().map(|&d| d as i64).sum::<i64>() as f64 / n as f64;

    let master = SplitMix64::new(cfg.seed);
    let mut deltas = parallel_map(cfg.resamples, threads, |r| {
        let mut rng = master.child(r as u64);
        let mut acc: i64 = 0;
        for _ in 0..n {
            let row = rng.next_below(n as u64) as usize;
            acc += diffs[row] as i64;
        }
        acc as f64 / n as f64
    });
    deltas.sort_by(|a, b| a.total_cmp(b));

    let alpha = 1.0 - cfg.confidence;
    let b = cfg.resamples;
    let lower_idx = ((alpha / 2.0 * b as f64) as usize).min(b - 1);
    let upper_idx = (((1.0 - alpha / 2.0) * b as f64) as usize).min(b - 1);
    Ok(BootstrapSummary {
        delta: point,
        ci_lower: deltas[lower_idx],
        ci_upper: deltas[upper_idx],
        resamples: cfg.resamples,
        confidence: cfg.confidence,
        seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Overlap / leakage audit
// ---------------------------------------------------------------------------

/// Per-record features compared by the exclusion ladder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFeatures {
    pub canonical: String,
    pub raw_reactants: String,
    pub raw_products: String,
    pub publication: Option<String>,
}

impl AuditFeatures {
    pub fn of(record: &ReactionRecord) -> Result<Self> {
        Ok(Self {
            canonical: canonical_reaction_string(record)?,
            raw_reactants: record.reactants.join("."),
            raw_products: record.products.join("."),
            publication: record.publication_proxy.clone(),
        })
    }
}

/// Exclusion ladder rungs, weakest to strictest. Rungs are cumulative: each
/// rung also applies every weaker exclusion, so the excluded set only grows
/// along the ladder. The strictest rung additionally drops neighbors sharing
/// the query's publication proxy (when both carry one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRung {
    None,
    SameCanonicalReaction,
    SameReactantProductPair,
    SameProductString,
    SameProductAndPublication,
}

impl ExclusionRung {
    pub const LADDER: [ExclusionRung; 5] = [
        ExclusionRung::None,
        ExclusionRung::SameCanonicalReaction,
        ExclusionRung::SameReactantProductPair,
        ExclusionRung::SameProductString,
        ExclusionRung::SameProductAndPublication,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExclusionRung::None => "none",
            ExclusionRung::SameCanonicalReaction => "same_canonical_reaction",
            ExclusionRung::SameReactantProductPair => "same_reactant_product_pair",
            ExclusionRung::SameProductString => "same_product_string",
            ExclusionRung::SameProductAndPublication => "same_product_and_publication",
        }
    }

    pub fn parse(s: &str) -> Option<ExclusionRung> {
        Self::LADDER.iter().copied().find(|r| r.as_str() == s)
    }

    fn level(&self) -> u8 {
        match self {
            ExclusionRung::None => 0,
            ExclusionRung::SameCanonicalReaction => 1,
            ExclusionRung::SameReactantProductPair => 2,
            ExclusionRung::SameProductString => 3,
            ExclusionRung::SameProductAndPublication => 4,
        }
    }

    /// Should `neighbor` be dropped for `query` at this rung?
    pub fn excludes(&self, query: &AuditFeatures, neighbor: &AuditFeatures) -> bool {
        let level = self.level();
        if level >= 1 && neighbor.canonical == query.canonical {
            return true;
        }
        if level >= 2
            && neighbor.raw_reactants == query.raw_reactants
            && neighbor.raw_products == query.raw_products
        {
            return true;
        }
        if level >= 3 && neighbor.raw_products == query.raw_products {
            return true;
        }
        if level >= 4 {
            if let (Some(np), Some(qp)) = (&neighbor.publication, &query.publication) {
                if np == qp {
                    return true;
                }
            }
        }
        false
    }
}

/// Precision@k under one exclusion rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapAudit {
    pub rung: ExclusionRung,
    pub k: usize,
    pub precision_at_k: f64,
    /// Queries that still had at least one surviving neighbor.
    pub queries_scored: usize,
}

/// For each query: drop excluded index rows, take the surviving top-k, and
/// score the fraction satisfying the relevance predicate. The reported
/// precision is the mean over queries with at least one survivor.
#[allow(clippy::too_many_arguments)]
pub fn overlap_audit(
    index: &PrecedentIndex,
    index_features: &[AuditFeatures],
    query_keys: &[Vec<f32>],
    query_features: &[AuditFeatures],
    rung: ExclusionRung,
    k: usize,
    relevant: &(dyn Fn(usize, usize) -> bool + Sync),
    threads: usize,
) -> Result<OverlapAudit> {
    if index_features.len() != index.len() {
        return Err(Error::dimension(format!(
            "{} feature rows for an index of {}",
            index_features.len(),
            index.len()
        )));
    }
    if query_keys.len() != query_features.len() {
        return Err(Error::dimension(format!(
            "{} query keys for {} query features",
            query_keys.len(),
            query_features.len()
        )));
    }

    let per_query: Vec<Result<Option<f64>>> = parallel_map(query_keys.len(), threads, |q| {
        let qf = &query_features[q];
        let survivors = index.search_where(&query_keys[q], k, 1, |row| {
            !rung.excludes(qf, &index_features[row])
        })?;
        if survivors.is_empty() {
            return Ok(None);
        }
        let relevant_count = survivors
            .iter()
            .filter(|nb| {
                let row = index.row_of(&nb.id).expect("neighbor id is indexed");
                relevant(q, row)
            })
            .count();
        Ok(Some(relevant_count as f64 / survivors.len() as f64))
    });

    let mut total = 0.0;
    let mut scored = 0usize;
    for item in per_query {
        if let Some(fraction) = item? {
            total += fraction;
            scored += 1;
        }
    }
    Ok(OverlapAudit {
        rung,
        k,
        precision_at_k: if scored > 0 { total / scored as f64 } else { 0.0 },
        queries_scored: scored,
    })
}

/// Default relevance predicate: the neighbor's remapped label for `role`
/// matches any of the query's valid labels.
pub fn label_relevance<'a>(
    index: &'a PrecedentIndex,
    targets: &'a [MultiHotTarget],
    role: Role,
) -> impl Fn(usize, usize) -> bool + Sync + 'a {
    move |query_idx, index_row| targets[query_idx].contains(index.label(role, index_row))
}

// ---------------------------------------------------------------------------
// Validation-selected retrieval
// ---------------------------------------------------------------------------

/// Metric a selection run optimizes: Acc@k for one role or the mean over all
/// three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMetric {
    pub k: usize,
    pub role: Option<Role>,
}

impl TargetMetric {
    pub fn describe(&self) -> String {
        match self.role {
            Some(role) => format!("{role}:acc@{}", self.k),
            None => format!("mean:acc@{}", self.k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub config: RetrievalConfig,
    pub score: f64,
}

/// Selection result: the winning configuration plus the full score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub winner: RetrievalConfig,
    pub scores: Vec<CandidateScore>,
    pub metric: String,
    pub validation_fraction: f64,
    pub selection_train_rows: usize,
    pub selection_validation_rows: usize,
}

/// Score every candidate on a deterministic train-derived validation subset
/// and return the single best, with ties broken by smaller k, then smaller
/// temperature (uniform counts as infinite), then key kind order.
///
/// Only the retrieval predictor is scored (the vote, no head fusion), so
/// candidates' alpha values are ignored here. Passing any record not tagged
/// `train` is a hard error: selection must never see validation or test
/// labels.
pub fn select_retrieval(
    grid: &[RetrievalConfig],
    records: &[ReactionRecord],
    bank: &EmbeddingBank,
    vocabs: &PerRole<RoleVocabulary>,
    validation_fraction: f64,
    metric: TargetMetric,
    threads: usize,
) -> Result<SelectionOutcome> {
    if grid.is_empty() {
        return Err(Error::empty("candidate grid"));
    }
    for candidate in grid {
        candidate.validate()?;
    }
    for record in records {
        if record.split != Split::Train {
            return Err(DataError::SplitViolation {
                id: record.id.clone(),
                split: record.split.as_str().to_string(),
            }
            .into());
        }
    }

    let (train_idx, val_idx) = deterministic_split(records, validation_fraction)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::empty(
            "deterministic split left one side empty; adjust the fraction or corpus",
        ));
    }
    let train_records: Vec<ReactionRecord> =
        train_idx.iter().map(|&i| records[i].clone()).collect();
    let val_records: Vec<ReactionRecord> = val_idx.iter().map(|&i| records[i].clone()).collect();
    let train_ids: Vec<String> = train_records.iter().map(|r| r.id.clone()).collect();
    let train_bank = bank.subset_by_ids(&train_ids)?;

    let val_targets = vocabs.try_map(|_, vocab| multihot_targets(&val_records, vocab))?;

    // One index and one neighbor sweep per key kind, at the largest k in the
    // grid; every candidate then votes over a prefix of the same lists.
    let mut key_kinds: Vec<crate::model::KeyKind> = grid.iter().map(|c| c.key_kind).collect();
    key_kinds.sort();
    key_kinds.dedup();
    let max_k = grid.iter().map(|c| c.k).max().unwrap();

    let mut neighbor_lists: HashMap<crate::model::KeyKind, Vec<Vec<crate::index::Neighbor>>> =
        HashMap::new();
    for key_kind in key_kinds {
        let index = PrecedentIndex::build(&train_bank, &train_records, vocabs, key_kind)?;
        let lists: Vec<Result<Vec<crate::index::Neighbor>>> =
            parallel_map(val_records.len(), threads, |row| {
                let bank_row = bank.row_of(&val_records[row].id).ok_or_else(|| {
                    Error::Data(DataError::UnknownId {
                        id: val_records[row].id.clone(),
                    })
                })?;
                let key = bank.key(bank_row, key_kind)?;
                index.search(&key, max_k)
            });
        let mut collected = Vec::with_capacity(lists.len());
        for list in lists {
            collected.push(list?);
        }
        neighbor_lists.insert(key_kind, collected);
    }

    let mut scores = Vec::with_capacity(grid.len());
    for candidate in grid {
        let lists = &neighbor_lists[&candidate.key_kind];
        let mut role_scores = Vec::new();
        let roles: Vec<Role> = match metric.role {
            Some(role) => vec![role],
            None => Role::ALL.to_vec(),
        };
        for role in roles {
            let n_classes = vocabs.get(role).size_with_absent();
            let ranked: Vec<Vec<u32>> = lists
                .iter()
                .map(|neighbors| {
                    let take: Vec<crate::index::Neighbor> =
                        neighbors.iter().take(candidate.k).cloned().collect();
                    if take.is_empty() {
                        return Ok(vec![]);
                    }
                    let dist = vote(&take, candidate.temperature, role, n_classes)?;
                    Ok(dist.ranked_classes())
                })
                .collect::<Result<_>>()?;
            role_scores.push(topk_accuracy(&ranked, val_targets.get(role), metric.k)?);
        }
        let score = role_scores.iter().sum::<f64>() / role_scores.len() as f64;
        scores.push(CandidateScore {
            config: candidate.clone(),
            score,
        });
    }

    let winner = scores
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| b.config.k.cmp(&a.config.k))
                .then_with(|| {
                    b.config
                        .temperature
                        .ordering_value()
                        .total_cmp(&a.config.temperature.ordering_value())
                })
                .then_with(|| b.config.key_kind.cmp(&a.config.key_kind))
        })
        .expect("grid is nonempty")
        .config
        .clone();

    Ok(SelectionOutcome {
        winner,
        scores,
        metric: metric.describe(),
        validation_fraction,
        selection_train_rows: train_records.len(),
        selection_validation_rows: val_records.len(),
    })
}

// ---------------------------------------------------------------------------
// Targets and full evaluation runs
// ---------------------------------------------------------------------------

/// Multi-hot targets aligned with `records`: records sharing a canonical
/// reaction string pool their annotations, and each row of the group carries
/// the pooled target.
pub fn multihot_targets(
    records: &[ReactionRecord],
    vocab: &RoleVocabulary,
) -> Result<Vec<MultiHotTarget>> {
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, record) in records.iter().enumerate() {
        groups
            .entry(canonical_reaction_string(record)?)
            .or_default()
            .push(i);
    }
    let mut targets: Vec<Option<MultiHotTarget>> = vec![None; records.len()];
    for rows in groups.values() {
        let group: Vec<ReactionRecord> = rows.iter().map(|&i| records[i].clone()).collect();
        let target = build_multihot(&group, vocab)?;
        for &i in rows {
            targets[i] = Some(target.clone());
        }
    }
    Ok(targets.into_iter().map(|t| t.expect("grouped")).collect())
}

/// Accuracy block at the three reported cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccBlock {
    pub acc1: f64,
    pub acc3: f64,
    pub acc5: f64,
}

impl AccBlock {
    fn from_ranked(ranked: &[Vec<u32>], targets: &[MultiHotTarget]) -> Result<AccBlock> {
        Ok(AccBlock {
            acc1: topk_accuracy(ranked, targets, 1)?,
            acc3: topk_accuracy(ranked, targets, 3)?,
            acc5: topk_accuracy(ranked, targets, 5)?,
        })
    }
}

/// Everything reported for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleReport {
    pub role: Role,
    pub n_rows: usize,
    /// Pure-retrieval accuracy (neighbor vote only).
    pub knn: AccBlock,
    /// Learned-head accuracy, when head probabilities were supplied.
    pub head: Option<AccBlock>,
    /// Fused accuracy at the configured alpha, when heads were supplied.
    pub hybrid: Option<AccBlock>,
    /// Audit of the primary predictor (hybrid when heads are present,
    /// otherwise the vote).
    pub audit: AbsentAudit,
    /// Paired bootstrap for acc@1 of hybrid minus head.
    pub hybrid_minus_head: Option<BootstrapSummary>,
}

/// Baseline accuracy row (prior, template majority, fingerprint k-NN).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub name: String,
    pub acc1: PerRole<f64>,
}

/// Full evaluation output. Serializes to JSON; [`EvalReport::render_text`]
/// prints the audit and comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_rows: usize,
    pub predictor: String,
    pub config: RetrievalConfig,
    pub bootstrap: BootstrapConfig,
    pub roles: Vec<RoleReport>,
    pub baselines: Vec<BaselineReport>,
    pub selection: Option<SelectionOutcome>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn role(&self, role: Role) -> &RoleReport {
        self.roles
            .iter()
            .find(|r| r.role == role)
            .expect("report covers every role")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: per-role accuracy, the absent audit, bootstrap
    /// deltas, and any baseline rows.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rows: {}   predictor: {}", self.n_rows, self.predictor);
        let _ = writeln!(
            out,
            "config: key={} k={} t={} alpha={}",
            self.config.key_kind.as_str(),
            self.config.k,
            self.config.temperature,
            self.config.alpha
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "role", "acc@1", "acc@3", "acc@5", "knn@1", "head@1", "delta@1"
        );
        for r in &self.roles {
            let primary = r.hybrid.as_ref().unwrap_or(&r.knn);
            let head = r
                .head
                .as_ref()
                .map(|h| format!("{:.4}", h.acc1))
                .unwrap_or_else(|| "-".into());
            let delta = r
                .hybrid_minus_head
                .as_ref()
                .map(|b| format!("{:+.4}", b.delta))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8} {:>8}",
                r.role.as_str(),
                primary.acc1,
                primary.acc3,
                primary.acc5,
                r.knn.acc1,
                head,
                delta
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>14} {:>8} {:>8} {:>8}",
            "role", "absent rows", "all@1", "pres@1", "abs@1"
        );
        for r in &self.roles {
            let a = &r.audit;
            let _ = writeln!(
                out,
                "{:<10} {:>7} ({:>4.1}%) {:>8.4} {:>8.4} {:>8.4}",
                r.role.as_str(),
                a.n_absent,
                100.0 * a.absent_fraction,
                a.all_at1,
                a.present_at1,
                a.absent_at1
            );
        }
        for r in &self.roles {
            if let Some(b) = &r.hybrid_minus_head {
                let _ = writeln!(
                    out,
                    "bootstrap {}: hybrid-head acc@1 {:+.4} (95% CI [{:+.4}, {:+.4}], {} resamples, seed {})",
                    r.role.as_str(),
                    b.delta,
                    b.ci_lower,
                    b.ci_upper,
                    b.resamples,
                    b.seed
                );
            }
        }
        if !self.baselines.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "{:<20} {:>10} {:>10} {:>10}",
                "baseline@1", "catalyst", "solvent", "reagent"
            );
            for b in &self.baselines {
                let _ = writeln!(
                    out,
                    "{:<20} {:>10.4} {:>10.4} {:>10.4}",
                    b.name, b.acc1.catalyst, b.acc1.solvent, b.acc1.reagent
                );
            }
        }
        if let Some(sel) = &self.selection {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "selection ({}, fraction {}): winner key={} k={} t={}",
                sel.metric,
                sel.validation_fraction,
                sel.winner.key_kind.as_str(),
                sel.winner.k,
                sel.winner.temperature
            );
            for cs in &sel.scores {
                let _ = writeln!(
                    out,
                    "  key={} k={} t={} -> {:.4}",
                    cs.config.key_kind.as_str(),
                    cs.config.k,
                    cs.config.temperature,
                    cs.score
                );
            }
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

/// Inputs for a full evaluation run over one test set.
pub struct EvaluationInputs<'a> {
    pub index: &'a PrecedentIndex,
    pub bank: &'a EmbeddingBank,
    pub records: &'a [ReactionRecord],
    pub heads: Option<&'a HeadProbabilities>,
    pub vocabs: &'a PerRole<RoleVocabulary>,
    pub config: &'a RetrievalConfig,
    pub bootstrap: BootstrapConfig,
    pub threads: usize,
}

/// Run the full protocol: retrieve, vote, fuse, score every role at the three
/// cutoffs, audit absent/present behavior, and bootstrap hybrid-versus-head
/// when heads are available.
pub fn run_evaluation(inputs: &EvaluationInputs) -> Result<EvalReport> {
    let EvaluationInputs {
        index,
        bank,
        records,
        heads,
        vocabs,
        config,
        bootstrap,
        threads,
    } = inputs;
    config.validate()?;
    if records.is_empty() {
        return Err(Error::empty("evaluation records"));
    }

    // Neighbor retrieval once per row.
    let neighbor_lists: Vec<Result<Vec<crate::index::Neighbor>>> =
        parallel_map(records.len(), *threads, |row| {
            let bank_row = bank.row_of(&records[row].id).ok_or_else(|| {
                Error::Data(DataError::UnknownId {
                    id: records[row].id.clone(),
                })
            })?;
            let key = bank.key(bank_row, config.key_kind)?;
            index.search(&key, config.k)
        });
    let mut neighbors = Vec::with_capacity(records.len());
    for list in neighbor_lists {
        neighbors.push(list?);
    }

    let use_heads = heads.is_some();
    let mut roles = Vec::with_capacity(Role::ALL.len());
    for role in Role::ALL {
        let vocab = vocabs.get(role);
        let n_classes = vocab.size_with_absent();
        let targets = multihot_targets(records, vocab)?;

        let mut knn_ranked = Vec::with_capacity(records.len());
        let mut head_ranked = Vec::with_capacity(records.len());
        let mut hybrid_ranked = Vec::with_capacity(records.len());
        for (row, record) in records.iter().enumerate() {
            let p_knn = if neighbors[row].is_empty() {
                prior_from_index(index, role, n_classes)?
            } else {
                vote(&neighbors[row], config.temperature, role, n_classes)?
            };
            knn_ranked.push(p_knn.ranked_classes());
            if let Some(heads) = heads {
                let p_head = heads.get(role, &record.id).ok_or_else(|| {
                    Error::Data(DataError::UnknownId {
                        id: format!("{} (head probabilities, {role})", record.id),
                    })
                })?;
                if p_head.probs.len() != n_classes {
                    return Err(Error::dimension(format!(
                        "head for {role} has {} classes, vocabulary implies {n_classes}",
                        p_head.probs.len()
                    )));
                }
                head_ranked.push(p_head.ranked_classes());
                let fused = fuse_hybrid(&p_head, &p_knn, config.alpha)?;
                hybrid_ranked.push(fused.ranked_classes());
            }
        }

        let knn = AccBlock::from_ranked(&knn_ranked, &targets)?;
        let (head, hybrid, hybrid_minus_head, primary_ranked) = if use_heads {
            let head_block = AccBlock::from_ranked(&head_ranked, &targets)?;
            let hybrid_block = AccBlock::from_ranked(&hybrid_ranked, &targets)?;
            let head_hits = row_hits(&head_ranked, &targets, 1)?;
            let hybrid_hits = row_hits(&hybrid_ranked, &targets, 1)?;
            let summary = paired_bootstrap(&head_hits, &hybrid_hits, bootstrap, *threads)?;
            if !(summary.ci_lower <= summary.delta && summary.delta <= summary.ci_upper) {
                return Err(Error::Invariant(format!(
                    "{role}: bootstrap interval [{}, {}] does not bracket the point delta {}",
                    summary.ci_lower, summary.ci_upper, summary.delta
                )));
            }
            (
                Some(head_block),
                Some(hybrid_block),
                Some(summary),
                hybrid_ranked,
            )
        } else {
            (None, None, None, knn_ranked.clone())
        };

        roles.push(RoleReport {
            role,
            n_rows: records.len(),
            knn,
            head,
            hybrid,
            audit: absent_audit(&primary_ranked, &targets, role)?,
            hybrid_minus_head,
        });
    }

    Ok(EvalReport {
        n_rows: records.len(),
        predictor: if use_heads { "hybrid".into() } else { "knn".into() },
        config: (*config).clone(),
        bootstrap: *bootstrap,
        roles,
        baselines: Vec::new(),
        selection: None,
        notes: Vec::new(),
    })
}
