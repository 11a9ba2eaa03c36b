//! Neighbor voting, hybrid fusion, matched baselines, and the end-to-end
//! recommendation call.

use crate::error::{Error, Result};
use crate::fingerprint::{drfp_style, tanimoto, FingerprintConfig, ReactionFingerprint};
use crate::hash::fnv1a64;
use crate::index::{Neighbor, PrecedentIndex};
use crate::model::{
    remap_absent, PerRole, ReactionRecord, RetrievalConfig, Role, RoleDistribution,
    RoleVocabulary, Split, Temperature,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Uniform neighbor vote: `p(y)` is the fraction of neighbors labeled `y`.
/// Neighbors with the absent label vote for class 0 like any other class.
pub fn vote_uniform(neighbors: &[Neighbor], role: Role, n_classes: usize) -> Result<RoleDistribution> {
    if neighbors.is_empty() {
        return Err(Error::empty("neighbor list"));
    }
    let mut probs = vec![0.0f64; n_classes];
    let weight = 1.0 / neighbors.len() as f64;
    for neighbor in neighbors {
        let class = neighbor.label(role) as usize;
        if class >= n_classes {
            return Err(Error::dimension(format!(
                "neighbor label {class} out of range for {n_classes} classes"
            )));
        }
        probs[class] += weight;
    }
    RoleDistribution::new(role, probs)
}

/// Similarity-softmax neighbor vote: weight `w_j = exp(s_j / t) / sum_l
/// exp(s_l / t)`, computed with max-subtraction for stability, then
/// `p(y) = sum_j w_j [y_j = y]`.
pub fn vote_softmax(
    neighbors: &[Neighbor],
    t: f64,
    role: Role,
    n_classes: usize,
) -> Result<RoleDistribution> {
    if neighbors.is_empty() {
        return Err(Error::empty("neighbor list"));
    }
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::config(format!("temperature {t} must be positive")));
    }
    let scaled: Vec<f64> = neighbors
        .iter()
        .map(|nb| nb.similarity as f64 / t)
        .collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }

    let mut probs = vec![0.0f64; n_classes];
    for (neighbor, w) in neighbors.iter().zip(&weights) {
        let class = neighbor.label(role) as usize;
        if class >= n_classes {
            return Err(Error::dimension(format!(
                "neighbor label {class} out of range for {n_classes} classes"
            )));
        }
        probs[class] += w;
    }
    RoleDistribution::new(role, probs)
}

/// Vote under the configured weighting scheme.
pub fn vote(
    neighbors: &[Neighbor],
    temperature: Temperature,
    role: Role,
    n_classes: usize,
) -> Result<RoleDistribution> {
    match temperature {
        Temperature::Uniform => vote_uniform(neighbors, role, n_classes),
        Temperature::Softmax(t) => vote_softmax(neighbors, t, role, n_classes),
    }
}

/// Frozen hybrid rule: `alpha * p_head + (1 - alpha) * p_knn`, elementwise.
/// Inputs on the probability simplex stay on it.
pub fn fuse_hybrid(
    p_head: &RoleDistribution,
    p_knn: &RoleDistribution,
    alpha: f64,
) -> Result<RoleDistribution> {
    if p_head.role != p_knn.role {
        return Err(Error::dimension(format!(
            "cannot fuse {} with {}",
            p_head.role, p_knn.role
        )));
    }
    if p_head.probs.len() != p_knn.probs.len() {
        return Err(Error::dimension(format!(
            "head has {} classes, vote has {}",
            p_head.probs.len(),
            p_knn.probs.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha {alpha} must lie in [0, 1]")));
    }
    let probs = p_head
        .probs
        .iter()
        .zip(&p_knn.probs)
        .map(|(h, k)| alpha * h + (1.0 - alpha) * k)
        .collect();
    RoleDistribution::new(p_head.role, probs)
}

/// Empirical label frequencies over the train records, remapped under the
/// absent protocol. Constant per role.
pub fn baseline_prior(records: &[ReactionRecord], vocab: &RoleVocabulary) -> Result<RoleDistribution> {
    if records.is_empty() {
        return Err(Error::empty("train records"));
    }
    let n_classes = vocab.size_with_absent();
    let mut probs = vec![0.0f64; n_classes];
    let weight = 1.0 / records.len() as f64;
    for record in records {
        let class = remap_absent(record.conditions.get(vocab.role()), vocab)?;
        probs[class as usize] += weight;
    }
    RoleDistribution::new(vocab.role(), probs)
}

/// Prior computed from an index's stored labels — the empirical frequencies
/// of its train rows. Used as the empty-neighbor fallback.
pub fn prior_from_index(index: &PrecedentIndex, role: Role, n_classes: usize) -> Result<RoleDistribution> {
    let labels = index.labels(role);
    if labels.is_empty() {
        return Err(Error::empty("index"));
    }
    let mut probs = vec![0.0f64; n_classes];
    let weight = 1.0 / labels.len() as f64;
    for &class in labels {
        if class as usize >= n_classes {
            return Err(Error::dimension(format!(
                "index label {class} out of range for {n_classes} classes"
            )));
        }
        probs[class as usize] += weight;
    }
    RoleDistribution::new(role, probs)
}

/// Transformation proxy key: the differential fingerprint's active bit set,
/// hashed to 64 bits. Reactions with identical differential signatures share
/// a key.
pub fn template_key(record: &ReactionRecord, cfg: &FingerprintConfig) -> Result<u64> {
    let fp = drfp_style(record, cfg)?;
    let mut bytes = Vec::with_capacity(fp.active_bits().len() * 4);
    for bit in fp.active_bits() {
        bytes.extend_from_slice(&bit.to_le_bytes());
    }
    Ok(fnv1a64(&bytes))
}

/// Template-majority baseline: label frequencies among train reactions
/// sharing the query's template key, falling back to the prior for unseen
/// keys.
#[derive(Debug, Clone)]
pub struct TemplateMajority {
    table: HashMap<u64, PerRole<Vec<f64>>>,
    priors: PerRole<RoleDistribution>,
    fp: FingerprintConfig,
}

impl TemplateMajority {
    pub fn fit(
        records: &[ReactionRecord],
        vocabs: &PerRole<RoleVocabulary>,
        fp: FingerprintConfig,
    ) -> Result<Self> {
        let priors = vocabs.try_map(|_, vocab| baseline_prior(records, vocab))?;
        let mut counts: HashMap<u64, PerRole<Vec<f64>>> = HashMap::new();
        for record in records {
            let key = template_key(record, &fp)?;
            let entry = counts.entry(key).or_insert_with(|| {
                vocabs.map(|_, vocab| vec![0.0f64; vocab.size_with_absent()])
            });
            for role in Role::ALL {
                let class = remap_absent(record.conditions.get(role), vocabs.get(role))?;
                entry.get_mut(role)[class as usize] += 1.0;
            }
        }
        Ok(Self {
            table: counts,
            priors,
            fp,
        })
    }

    /// Per-role distribution for a query; prior fallback on unseen keys.
    pub fn predict(&self, query: &ReactionRecord) -> Result<PerRole<RoleDistribution>> {
        let key = template_key(query, &self.fp)?;
        match self.table.get(&key) {
            Some(counts) => counts.try_map(|role, c| {
                let total: f64 = c.iter().sum();
                RoleDistribution::new(role, c.iter().map(|v| v / total).collect())
            }),
            None => Ok(self.priors.clone()),
        }
    }
}

/// Exact fingerprint k-NN control: top-k train fingerprints by Tanimoto
/// similarity (ties by ascending id), voted under the configured scheme.
pub struct FingerprintKnn {
    fingerprints: Vec<ReactionFingerprint>,
    ids: Vec<String>,
    labels: [Vec<u32>; 3],
}

impl FingerprintKnn {
    pub fn fit(
        records: &[ReactionRecord],
        vocabs: &PerRole<RoleVocabulary>,
        fp: &FingerprintConfig,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::empty("train records"));
        }
        let mut fingerprints = Vec::with_capacity(records.len());
        let mut ids = Vec::with_capacity(records.len());
        let mut labels: [Vec<u32>; 3] = Default::default();
        for record in records {
            if record.split != Split::Train {
                return Err(crate::error::DataError::SplitViolation {
                    id: record.id.clone(),
                    split: record.split.as_str().to_string(),
                }
                .into());
            }
            fingerprints.push(drfp_style(record, fp)?);
            ids.push(record.id.clone());
            for role in Role::ALL {
                labels[role.index()]
                    .push(remap_absent(record.conditions.get(role), vocabs.get(role))?);
            }
        }
        Ok(Self {
            fingerprints,
            ids,
            labels,
        })
    }

    /// Exact top-k scan by Tanimoto similarity.
    pub fn neighbors(&self, query: &ReactionFingerprint, k: usize) -> Result<Vec<Neighbor>> {
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.ids.len());
        for (row, fp) in self.fingerprints.iter().enumerate() {
            scored.push((tanimoto(query, fp)?, row));
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(similarity, row)| Neighbor {
                id: self.ids[row].clone(),
                similarity: similarity as f32,
                labels: [
                    self.labels[0][row],
                    self.labels[1][row],
                    self.labels[2][row],
                ],
            })
            .collect())
    }
}

/// One ranked class with its label string (absent class renders as null) and
/// fused probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub class: u32,
    pub label: Option<String>,
    pub score: f64,
}

/// Ranked recommendation for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRecommendation {
    pub role: Role,
    pub ranked: Vec<RankedLabel>,
}

/// Neighbor as surfaced to users: id, similarity, and per-role label strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInfo {
    pub id: String,
    pub similarity: f32,
    pub labels: PerRole<Option<String>>,
}

/// A full recommendation: per-role ranked labels, the inspectable precedent
/// set behind them, and the retrieval configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub roles: Vec<RoleRecommendation>,
    pub neighbors: Vec<NeighborInfo>,
    pub config: RetrievalConfig,
    /// True when no neighbors survived and the train prior substituted for
    /// the vote.
    pub prior_fallback: bool,
}

impl Recommendation {
    pub fn role(&self, role: Role) -> Option<&RoleRecommendation> {
        self.roles.iter().find(|r| r.role == role)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recommendation serializes")
    }
}

/// Produce a recommendation for one query key.
///
/// `exclude_row` drops that index row from the neighbor pool (self-match
/// exclusion for queries by indexed id). `heads` supplies the learned-head
/// distributions when `alpha > 0`; with `alpha == 0` the call is pure
/// retrieval. If every neighbor is filtered away, the index's train prior
/// substitutes for the vote and the result is flagged.
pub fn recommend(
    query_key: &[f32],
    exclude_row: Option<usize>,
    index: &PrecedentIndex,
    heads: Option<&PerRole<RoleDistribution>>,
    config: &RetrievalConfig,
    vocabs: &PerRole<RoleVocabulary>,
    threads: usize,
) -> Result<Recommendation> {
    config.validate()?;
    let neighbors = index.search_where(query_key, config.k, threads, |row| {
        Some(row) != exclude_row
    })?;

    let prior_fallback = neighbors.is_empty();
    let mut roles = Vec::with_capacity(Role::ALL.len());
    for role in Role::ALL {
        let vocab = vocabs.get(role);
        let n_classes = vocab.size_with_absent();
        let p_knn = if prior_fallback {
            prior_from_index(index, role, n_classes)?
        } else {
            vote(&neighbors, config.temperature, role, n_classes)?
        };
        let fused = if config.alpha == 0.0 {
            p_knn
        } else {
            let head = heads
                .ok_or_else(|| {
                    Error::config(format!(
                        "alpha {} requires head probabilities",
                        config.alpha
                    ))
                })?
                .get(role);
            if head.probs.len() != n_classes {
                return Err(Error::dimension(format!(
                    "head for {role} has {} classes, vocabulary implies {n_classes}",
                    head.probs.len()
                )));
            }
            fuse_hybrid(head, &p_knn, config.alpha)?
        };
        let ranked = fused
            .ranked_classes()
            .into_iter()
            .map(|class| RankedLabel {
                class,
                label: vocab.label_of(class).map(String::from),
                score: fused.probs[class as usize],
            })
            .collect();
        roles.push(RoleRecommendation { role, ranked });
    }

    let neighbors = neighbors
        .into_iter()
        .map(|nb| {
            let labels = PerRole::new(
                vocabs.catalyst.label_of(nb.label(Role::Catalyst)).map(String::from),
                vocabs.solvent.label_of(nb.label(Role::Solvent)).map(String::from),
                vocabs.reagent.label_of(nb.label(Role::Reagent)).map(String::from),
            );
            NeighborInfo {
                id: nb.id,
                similarity: nb.similarity,
                labels,
            }
        })
        .collect();

    Ok(Recommendation {
        roles,
        neighbors,
        config: config.clone(),
        prior_fallback,
    })
}
