//! Deterministic synthetic corpora.
//!
//! Every generator is a pure function of its seed and parameters, built on
//! the crate's fixed [`crate::rng::SplitMix64`] stream, so test suites, the
//! CLI, and external implementations can rebuild byte-identical corpora.
//!
//! Three corpus families:
//!
//! - [`absent_prior_corpus`]: exact per-class label counts, for prior and
//!   absent/present audit identities.
//! - [`complementary_corpus`]: clustered embeddings where retrieval and an
//!   ingested head signal are right on partially independent rows, so the
//!   fused predictor beats both.
//! - [`selection_corpus`]: clustered embeddings with noisy single neighbors,
//!   so wider retrieval wins validation selection.
//! - [`overlap_corpus`]: planted duplicate / same-product / same-publication
//!   rows at fixed similarity tiers for the exclusion-ladder audit.

use crate::error::Result;
use crate::ingest::{reactions_to_tsv, write_head_probabilities, EmbeddingBank};
use crate::linalg::{dot, normalize_in_place, Matrix};
use crate::model::{Conditions, PerRole, ReactionRecord, Role, RoleVocabulary, Split};
use crate::rng::SplitMix64;
use std::path::{Path, PathBuf};

/// Unique, tokenizable molecule string for an index: a `C` followed by the
/// index written in base-4 atom digits.
pub fn molecule(i: usize) -> String {
    const ATOMS: [char; 4] = ['C', 'N', 'O', 'S'];
    let mut s = String::from("C");
    let mut v = i;
    loop {
        s.push(ATOMS[v % 4]);
        v /= 4;
        if v == 0 {
            break;
        }
    }
    s
}

fn role_vocab(role: Role, n: usize) -> RoleVocabulary {
    let prefix = &role.as_str()[..3];
    RoleVocabulary::new(role, (0..n).map(|i| format!("{prefix}{i}")).collect())
        .expect("generated labels are unique")
}

/// Vocabularies with `n` present labels per role.
pub fn synthetic_vocabs(n: usize) -> PerRole<RoleVocabulary> {
    PerRole::new(
        role_vocab(Role::Catalyst, n),
        role_vocab(Role::Solvent, n),
        role_vocab(Role::Reagent, n),
    )
}

fn set_label(conditions: &mut Conditions, role: Role, label: Option<String>) {
    match role {
        Role::Catalyst => conditions.catalyst = label,
        Role::Solvent => conditions.solvent = label,
        Role::Reagent => conditions.reagent = label,
    }
}

/// Records whose labels for `role` follow `counts` exactly:
/// each `(class, count)` entry emits `count` records labeled with vocabulary
/// position `class` (`None` = absent). Other roles stay absent. Every record
/// gets a unique reaction string, so no rows pool under canonical grouping.
pub fn exact_count_records(
    role: Role,
    counts: &[(Option<usize>, usize)],
    vocab: &RoleVocabulary,
    split: Split,
    id_prefix: &str,
) -> Vec<ReactionRecord> {
    let mut records = Vec::new();
    let mut serial = 0usize;
    for &(class, count) in counts {
        for _ in 0..count {
            let mut conditions = Conditions::default();
            let label = class.map(|c| vocab.labels()[c].clone());
            set_label(&mut conditions, role, label);
            records.push(ReactionRecord {
                id: format!("{id_prefix}{serial:05}"),
                reactants: vec![molecule(serial * 2)],
                products: vec![molecule(serial * 2 + 1)],
                conditions,
                split,
                publication_proxy: None,
            });
            serial += 1;
        }
    }
    records
}

/// Train and test sets with identical exact label composition for one role.
/// With `n_absent` of `n` rows absent and the rest spread thinly, the prior's
/// top class is absent and its all-rows accuracy is exactly `n_absent / n`.
pub fn absent_prior_corpus(
    role: Role,
    n: usize,
    n_absent: usize,
    n_labels: usize,
) -> (Vec<ReactionRecord>, Vec<ReactionRecord>, PerRole<RoleVocabulary>) {
    assert!(n_absent <= n);
    let vocabs = synthetic_vocabs(n_labels);
    let n_present = n - n_absent;
    let mut counts: Vec<(Option<usize>, usize)> = vec![(None, n_absent)];
    for class in 0..n_labels {
        let share = n_present / n_labels + usize::from(class < n_present % n_labels);
        if share > 0 {
            counts.push((Some(class), share));
        }
    }
    let train = exact_count_records(role, &counts, vocabs.get(role), Split::Train, "tr");
    let test = exact_count_records(role, &counts, vocabs.get(role), Split::Test, "te");
    (train, test, vocabs)
}

/// Head probability rows keyed by reaction id, one list per role.
pub type HeadRows = PerRole<Vec<(String, Vec<f64>)>>;

/// A generated corpus: records with split tags, their embedding bank, the
/// vocabularies, and (optionally) per-role head probability rows for the test
/// ids.
pub struct SynthCorpus {
    pub records: Vec<ReactionRecord>,
    pub bank: EmbeddingBank,
    pub vocabs: PerRole<RoleVocabulary>,
    pub head_rows: Option<HeadRows>,
}

/// File paths written by [`SynthCorpus::write_to`].
pub struct CorpusPaths {
    pub dataset: PathBuf,
    pub bank: PathBuf,
    pub vocab_dir: PathBuf,
    pub head_files: Vec<PathBuf>,
}

impl SynthCorpus {
    pub fn train(&self) -> Vec<ReactionRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect()
    }

    pub fn test(&self) -> Vec<ReactionRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Split::Test)
            .cloned()
            .collect()
    }

    /// Materialize the corpus as CLI-consumable artifacts under `dir`:
    /// `dataset.tsv`, `bank.emb`, `vocabs/<role>.txt`, and
    /// `heads/<role>.heads` when head rows exist.
    pub fn write_to(&self, dir: &Path) -> Result<CorpusPaths> {
        std::fs::create_dir_all(dir)?;
        let dataset = dir.join("dataset.tsv");
        std::fs::write(&dataset, reactions_to_tsv(&self.records))?;

        let bank = dir.join("bank.emb");
        self.bank.save(&bank)?;

        let vocab_dir = dir.join("vocabs");
        std::fs::create_dir_all(&vocab_dir)?;
        for role in Role::ALL {
            let path = vocab_dir.join(format!("{role}.txt"));
            std::fs::write(&path, self.vocabs.get(role).labels().join("\n") + "\n")?;
        }

        let mut head_files = Vec::new();
        if let Some(head_rows) = &self.head_rows {
            let heads_dir = dir.join("heads");
            std::fs::create_dir_all(&heads_dir)?;
            for role in Role::ALL {
                let rows = head_rows.get(role);
                let path = heads_dir.join(format!("{role}.heads"));
                let ids: Vec<String> = rows.iter().map(|(id, _)| id.clone()).collect();
                let probs: Vec<Vec<f64>> = rows.iter().map(|(_, p)| p.clone()).collect();
                write_head_probabilities(&path, role, ids, &probs)?;
                head_files.push(path);
            }
        }

        Ok(CorpusPaths {
            dataset,
            bank,
            vocab_dir,
            head_files,
        })
    }
}

fn random_unit(rng: &mut SplitMix64, dim: usize) -> Vec<f32> {
    loop {
        let mut v: Vec<f32> = (0..dim).map(|_| rng.next_gaussian() as f32).collect();
        if normalize_in_place(&mut v) > 1e-3 {
            return v;
        }
    }
}

fn jitter(center: &[f32], sigma: f64, rng: &mut SplitMix64) -> Vec<f32> {
    let mut v: Vec<f32> = center
        .iter()
        .map(|&c| c + (rng.next_gaussian() * sigma) as f32)
        .collect();
    normalize_in_place(&mut v);
    v
}

/// Parameters for [`complementary_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct ComplementaryConfig {
    pub seed: u64,
    pub clusters: usize,
    pub train_per_cluster: usize,
    pub test_per_cluster: usize,
    pub dim: usize,
    pub n_labels: usize,
    /// Fraction of train rows in a cluster carrying the cluster's label.
    pub train_purity: f64,
    /// Probability that a test row's gold label equals its cluster's label
    /// (the retrieval signal is right on these rows).
    pub retrieval_hit_rate: f64,
    /// Probability that the head signal is right on a test row, drawn
    /// independently of the retrieval coin.
    pub head_hit_rate: f64,
    /// Head mass placed on its guess; the rest spreads uniformly.
    pub head_confidence: f64,
}

impl Default for ComplementaryConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_001,
            clusters: 40,
            train_per_cluster: 20,
            test_per_cluster: 15,
            dim: 16,
            n_labels: 9,
            train_purity: 0.6,
            retrieval_hit_rate: 0.75,
            head_hit_rate: 0.7,
            head_confidence: 0.7,
        }
    }
}

/// Clustered corpus where the neighbor vote and the ingested head are each
/// right on partially independent subsets of test rows. Fusing them at
/// alpha 0.5 recovers rows that either signal gets right alone, so the hybrid
/// exceeds both components.
///
/// Train rows cluster tightly around per-cluster unit centers; a cluster's
/// train labels are its own label with probability `train_purity`, otherwise
/// random. Head distributions for test rows put `head_confidence` on the
/// head's guess (right with `head_hit_rate`) plus a uniform floor; a wrong
/// head is exactly uniform, so it never outvotes the retrieval signal.
pub fn complementary_corpus(cfg: &ComplementaryConfig) -> Result<SynthCorpus> {
    let vocabs = synthetic_vocabs(cfg.n_labels);
    let n_classes = cfg.n_labels + 1;
    let mut rng = SplitMix64::new(cfg.seed);

    let centers: Vec<Vec<f32>> = (0..cfg.clusters)
        .map(|_| random_unit(&mut rng, cfg.dim))
        .collect();
    // Per-cluster, per-role class in 1..=n_labels.
    let cluster_class: Vec<PerRole<u32>> = (0..cfg.clusters)
        .map(|_| {
            PerRole::new(
                1 + rng.next_below(cfg.n_labels as u64) as u32,
                1 + rng.next_below(cfg.n_labels as u64) as u32,
                1 + rng.next_below(cfg.n_labels as u64) as u32,
            )
        })
        .collect();

    let mut records = Vec::new();
    let mut keys: Vec<Vec<f32>> = Vec::new();
    let mut deltas: Vec<Vec<f32>> = Vec::new();
    let mut head_rows: HeadRows = PerRole::new(Vec::new(), Vec::new(), Vec::new());
    let mut serial = 0usize;

    let label_string = |role: Role, class: u32, vocabs: &PerRole<RoleVocabulary>| -> String {
        vocabs.get(role).labels()[(class - 1) as usize].clone()
    };

    for c in 0..cfg.clusters {
        for _ in 0..cfg.train_per_cluster {
            let mut conditions = Conditions::default();
            for role in Role::ALL {
                let class = if rng.next_f64() < cfg.train_purity {
                    *cluster_class[c].get(role)
                } else {
                    1 + rng.next_below(cfg.n_labels as u64) as u32
                };
                set_label(&mut conditions, role, Some(label_string(role, class, &vocabs)));
            }
            records.push(ReactionRecord {
                id: format!("tr{serial:05}"),
                reactants: vec![molecule(serial * 2)],
                products: vec![molecule(serial * 2 + 1)],
                conditions,
                split: Split::Train,
                publication_proxy: Some(format!("pub{c}")),
            });
            keys.push(jitter(&centers[c], 0.03, &mut rng));
            deltas.push(jitter(&centers[c], 0.05, &mut rng));
            serial += 1;
        }
    }

    for c in 0..cfg.clusters {
        for _ in 0..cfg.test_per_cluster {
            let id = format!("te{serial:05}");
            let mut conditions = Conditions::default();
            for role in Role::ALL {
                let cluster = *cluster_class[c].get(role);
                let gold = if rng.next_f64() < cfg.retrieval_hit_rate {
                    cluster
                } else {
                    // A different present class.
                    let mut other = 1 + rng.next_below(cfg.n_labels as u64) as u32;
                    while other == cluster {
                        other = 1 + rng.next_below(cfg.n_labels as u64) as u32;
                    }
                    other
                };
                set_label(&mut conditions, role, Some(label_string(role, gold, &vocabs)));

                let head_right = rng.next_f64() < cfg.head_hit_rate;
                let guess = if head_right {
                    gold
                } else {
                    u32::MAX // marker: exactly uniform row
                };
                let mut row = vec![1.0 / n_classes as f64; n_classes];
                if guess != u32::MAX {
                    let floor = 1.0 - cfg.head_confidence;
                    for p in row.iter_mut() {
                        *p = floor / n_classes as f64;
                    }
                    row[guess as usize] += cfg.head_confidence;
                }
                head_rows.get_mut(role).push((id.clone(), row));
            }
            records.push(ReactionRecord {
                id,
                reactants: vec![molecule(serial * 2)],
                products: vec![molecule(serial * 2 + 1)],
                conditions,
                split: Split::Test,
                publication_proxy: Some(format!("pub{c}")),
            });
            keys.push(jitter(&centers[c], 0.03, &mut rng));
            deltas.push(jitter(&centers[c], 0.05, &mut rng));
            serial += 1;
        }
    }

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let z = Matrix::from_rows(&keys)?;
    let d = Matrix::from_rows(&deltas)?;
    let bank = EmbeddingBank::new(ids, z, Some(d))?;
    Ok(SynthCorpus {
        records,
        bank,
        vocabs,
        head_rows: Some(head_rows),
    })
}

/// Clustered train-only corpus whose recorded labels are noisy (purity well
/// below 1), so a single nearest neighbor is unreliable while a wider
/// majority vote recovers the cluster label. Validation selection over a
/// {k=1, k=5} grid lands on k=5.
pub fn selection_corpus(seed: u64) -> Result<SynthCorpus> {
    let clusters = 40;
    let per_cluster = 20;
    let dim = 16;
    let n_labels = 9;
    let purity = 0.65;

    let vocabs = synthetic_vocabs(n_labels);
    let mut rng = SplitMix64::new(seed);
    let centers: Vec<Vec<f32>> = (0..clusters).map(|_| random_unit(&mut rng, dim)).collect();

    let mut records = Vec::new();
    let mut keys = Vec::new();
    let mut serial = 0usize;
    for (c, center) in centers.iter().enumerate() {
        let cluster_class = 1 + (c % n_labels) as u32;
        for _ in 0..per_cluster {
            let class = if rng.next_f64() < purity {
                cluster_class
            } else {
                1 + rng.next_below(n_labels as u64) as u32
            };
            let mut conditions = Conditions::default();
            for role in Role::ALL {
                let label = vocabs.get(role).labels()[(class - 1) as usize].clone();
                set_label(&mut conditions, role, Some(label));
            }
            records.push(ReactionRecord {
                id: format!("tr{serial:05}"),
                reactants: vec![molecule(serial * 2)],
                products: vec![molecule(serial * 2 + 1)],
                conditions,
                split: Split::Train,
                publication_proxy: None,
            });
            keys.push(jitter(center, 0.03, &mut rng));
            serial += 1;
        }
    }

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let bank = EmbeddingBank::new(ids, Matrix::from_rows(&keys)?, None)?;
    Ok(SynthCorpus {
        records,
        bank,
        vocabs,
        head_rows: None,
    })
}

/// Overlap-audit corpus: an indexed side with planted tiers per cluster and
/// one query per cluster whose exact duplicate, same-product variant, and
/// same-publication variant sit closer than the generic precedents, with
/// wrong-labeled noise rows beyond them.
pub struct OverlapCorpus {
    /// Index-side corpus (all train).
    pub corpus: SynthCorpus,
    /// Query records, one per cluster. Each query's own row is also in the
    /// index (the self-match).
    pub queries: Vec<ReactionRecord>,
    pub query_keys: Vec<Vec<f32>>,
}

/// Build the planted-duplicate audit corpus. Cluster centers are
/// orthogonalized so cross-cluster similarity never intrudes on the planted
/// tiers, making the surviving-neighbor sets (and the audit's precision
/// ladder) exact.
pub fn overlap_corpus(seed: u64) -> Result<OverlapCorpus> {
    let clusters = 12usize;
    let dim = 16usize;
    let n_labels = 8usize;
    let vocabs = synthetic_vocabs(n_labels);
    let mut rng = SplitMix64::new(seed);

    // Orthonormal centers via Gram-Schmidt over random draws.
    let mut centers: Vec<Vec<f32>> = Vec::with_capacity(clusters);
    while centers.len() < clusters {
        let mut v = random_unit(&mut rng, dim);
        for c in &centers {
            let proj = dot(&v, c);
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= proj * ci;
            }
        }
        if normalize_in_place(&mut v) > 1e-3 {
            centers.push(v);
        }
    }

    // Key at angle theta from the center along a per-row orthogonal direction.
    let tilted = |center: &[f32], theta: f64, rng: &mut SplitMix64| -> Vec<f32> {
        let mut u = random_unit(rng, dim);
        let proj = dot(&u, center);
        for (ui, ci) in u.iter_mut().zip(center) {
            *ui -= proj * ci;
        }
        normalize_in_place(&mut u);
        let (sin, cos) = theta.sin_cos();
        let mut v: Vec<f32> = center
            .iter()
            .zip(&u)
            .map(|(&c, &o)| (cos as f32) * c + (sin as f32) * o)
            .collect();
        normalize_in_place(&mut v);
        v
    };

    let mut records = Vec::new();
    let mut keys = Vec::new();
    let mut queries = Vec::new();
    let mut query_keys = Vec::new();
    let mut serial = 0usize;

    for (c, center) in centers.iter().enumerate() {
        let label = vocabs.catalyst.labels()[c % n_labels].clone();
        let wrong = vocabs.catalyst.labels()[(c + 1) % n_labels].clone();
        let reactant = molecule(1000 + serial);
        let product = molecule(2000 + serial);
        let publication = format!("pub{c}");

        let push = |id: String,
                        reactants: Vec<String>,
                        products: Vec<String>,
                        label: &str,
                        publication: Option<String>,
                        theta: f64,
                        records: &mut Vec<ReactionRecord>,
                        keys: &mut Vec<Vec<f32>>,
                        rng: &mut SplitMix64| {
            let conditions = Conditions {
                catalyst: Some(label.to_string()),
                ..Conditions::default()
            };
            records.push(ReactionRecord {
                id,
                reactants,
                products,
                conditions,
                split: Split::Train,
                publication_proxy: publication,
            });
            keys.push(if theta == 0.0 {
                center.clone()
            } else {
                tilted(center, theta, rng)
            });
        };

        // The query row itself (self-match), its exact duplicate, the
        // same-product variant, the same-publication variant, two generic
        // precedents, and four wrong-labeled noise rows.
        let query_id = format!("q{c:03}");
        push(
            query_id.clone(),
            vec![reactant.clone()],
            vec![product.clone()],
            &label,
            Some(publication.clone()),
            0.0,
            &mut records,
            &mut keys,
            &mut rng,
        );
        queries.push(records.last().unwrap().clone());
        query_keys.push(center.clone());

        push(
            format!("dup{c:03}"),
            vec![reactant.clone()],
            vec![product.clone()],
            &label,
            Some(publication.clone()),
            0.05,
            &mut records,
            &mut keys,
            &mut rng,
        );
        push(
            format!("sprod{c:03}"),
            vec![molecule(3000 + serial)],
            vec![product.clone()],
            &label,
            Some(format!("otherpub{c}")),
            0.10,
            &mut records,
            &mut keys,
            &mut rng,
        );
        push(
            format!("spub{c:03}"),
            vec![molecule(4000 + serial)],
            vec![molecule(5000 + serial)],
            &label,
            Some(publication.clone()),
            0.15,
            &mut records,
            &mut keys,
            &mut rng,
        );
        for (g, theta) in [(0usize, 0.20f64), (1, 0.25)] {
            push(
                format!("gen{c:03}_{g}"),
                vec![molecule(6000 + serial + g)],
                vec![molecule(7000 + serial + g)],
                &label,
                Some(format!("genpub{c}_{g}")),
                theta,
                &mut records,
                &mut keys,
                &mut rng,
            );
        }
        for n in 0..4usize {
            push(
                format!("noise{c:03}_{n}"),
                vec![molecule(8000 + serial + n)],
                vec![molecule(9000 + serial + n)],
                &wrong,
                Some(format!("noisepub{c}_{n}")),
                0.5 + 0.05 * n as f64,
                &mut records,
                &mut keys,
                &mut rng,
            );
        }
        serial += 10;
    }

    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let bank = EmbeddingBank::new(ids, Matrix::from_rows(&keys)?, None)?;
    Ok(OverlapCorpus {
        corpus: SynthCorpus {
            records,
            bank,
            vocabs,
            head_rows: None,
        },
        queries,
        query_keys,
    })
}
