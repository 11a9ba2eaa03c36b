//! Train-only precedent index: exact top-k inner-product search over
//! unit-normalized retrieval keys, with per-role neighbor labels attached.
//!
//! Search is exact by contract — brute-force dot products with partial
//! selection, no approximate structures. Equal similarities break ties by
//! ascending reaction id, so results are byte-stable across runs and worker
//! thread counts.

use crate::container::{Section, SectionFile};
use crate::error::{DataError, Error, Result};
use crate::ingest::EmbeddingBank;
use crate::linalg::{dot, normalize_in_place, Matrix};
use crate::model::{remap_absent, KeyKind, PerRole, ReactionRecord, Role, RoleVocabulary, Split};
use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

/// One retrieved precedent: its id, inner-product similarity to the query,
/// and remapped class labels for all three roles.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f32,
    pub labels: [u32; 3],
}

impl Neighbor {
    pub fn label(&self, role: Role) -> u32 {
        self.labels[role.index()]
    }
}

/// Immutable precedent index. Built from train-split records only; rows are
/// unit-normalized keys aligned with ids and per-role labels.
#[derive(Debug, Clone)]
pub struct PrecedentIndex {
    keys: Matrix,
    ids: Vec<String>,
    labels: [Vec<u32>; 3],
    key_kind: KeyKind,
    row_of: HashMap<String, usize>,
}

impl PrecedentIndex {
    /// Build from an embedding bank and the train records carrying its labels.
    ///
    /// Every bank id must resolve to a train record; validation or test
    /// records are a hard error, as are zero-norm keys.
    pub fn build(
        bank: &EmbeddingBank,
        records: &[ReactionRecord],
        vocabs: &PerRole<RoleVocabulary>,
        key_kind: KeyKind,
    ) -> Result<Self> {
        let mut by_id: HashMap<&str, &ReactionRecord> = HashMap::with_capacity(records.len());
        for record in records {
            by_id.insert(record.id.as_str(), record);
        }

        let keys = match key_kind {
            KeyKind::RxnOnly => bank.z_rxn().clone(),
            KeyKind::RxnConcatDelta => {
                let delta = bank.z_delta().ok_or_else(|| {
                    Error::config("key kind rxn+delta requires a bank with a delta matrix")
                })?;
                bank.z_rxn().hconcat(delta)?
            }
        };
        let mut keys = keys;
        let mut labels: [Vec<u32>; 3] = [
            Vec::with_capacity(bank.len()),
            Vec::with_capacity(bank.len()),
            Vec::with_capacity(bank.len()),
        ];

        for (row, id) in bank.ids().iter().enumerate() {
            let record = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Data(DataError::UnknownId { id: id.clone() }))?;
            if record.split != Split::Train {
                return Err(DataError::SplitViolation {
                    id: id.clone(),
                    split: record.split.as_str().to_string(),
                }
                .into());
            }
            let norm = normalize_in_place(keys.row_mut(row));
            if norm == 0.0 || !norm.is_finite() {
                return Err(DataError::ZeroNormKey { id: id.clone() }.into());
            }
            for role in Role::ALL {
                let class = remap_absent(record.conditions.get(role), vocabs.get(role))?;
                labels[role.index()].push(class);
            }
        }

        let ids = bank.ids().to_vec();
        let row_of = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            keys,
            ids,
            labels,
            key_kind,
            row_of,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.keys.cols()
    }

    pub fn key_kind(&self) -> KeyKind {
        self.key_kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_of.get(id).copied()
    }

    pub fn key_row(&self, row: usize) -> &[f32] {
        self.keys.row(row)
    }

    pub fn label(&self, role: Role, row: usize) -> u32 {
        self.labels[role.index()][row]
    }

    pub fn labels(&self, role: Role) -> &[u32] {
        &self.labels[role.index()]
    }

    fn neighbor(&self, row: usize, similarity: f32) -> Neighbor {
        Neighbor {
            id: self.ids[row].clone(),
            similarity,
            labels: [
                self.labels[0][row],
                self.labels[1][row],
                self.labels[2][row],
            ],
        }
    }

    /// Exact top-k by inner product with a normalized copy of the query.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.search_where(query, k, 1, |_| true)
    }

    /// Exact top-k split over `threads` row blocks. Identical output for any
    /// thread count.
    pub fn search_threaded(&self, query: &[f32], k: usize, threads: usize) -> Result<Vec<Neighbor>> {
        self.search_where(query, k, threads, |_| true)
    }

    /// Exact top-k over the rows accepted by `keep`. The predicate sees the
    /// candidate row index; rejected rows never enter the candidate pool.
    pub fn search_where(
        &self,
        query: &[f32],
        k: usize,
        threads: usize,
        keep: impl Fn(usize) -> bool + Sync,
    ) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim() {
            return Err(Error::dimension(format!(
                "query has dim {}, index has {}",
                query.len(),
                self.dim()
            )));
        }
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                row: 0,
                column: query.iter().position(|v| !v.is_finite()),
            }
            .into());
        }
        let mut normalized = query.to_vec();
        let norm = normalize_in_place(&mut normalized);
        if norm == 0.0 {
            return Err(DataError::ZeroNormKey {
                id: "<query>".into(),
            }
            .into());
        }

        let threads = threads.max(1).min(self.len().max(1));
        let mut candidates: Vec<(f32, usize)> = if threads <= 1 || self.len() < 2 * threads {
            self.scan_block(&normalized, k, 0, self.len(), &keep)
        } else {
            let block = self.len().div_ceil(threads);
            let mut merged: Vec<(f32, usize)> = Vec::with_capacity(threads * k);
            std::thread::scope(|scope| {
                let mut handles = Vec::with_capacity(threads);
                for t in 0..threads {
                    let start = t * block;
                    let end = ((t + 1) * block).min(self.len());
                    let normalized = &normalized;
                    let keep = &keep;
                    handles.push(
                        scope.spawn(move || self.scan_block(normalized, k, start, end, keep)),
                    );
                }
                for handle in handles {
                    merged.extend(handle.join().expect("search worker panicked"));
                }
            });
            merged
        };

        candidates.sort_by(|a, b| self.candidate_order(a, b));
        candidates.truncate(k);
        Ok(candidates
            .into_iter()
            .map(|(similarity, row)| self.neighbor(row, similarity))
            .collect())
    }

    /// Similarity descending, then reaction id ascending.
    fn candidate_order(&self, a: &(f32, usize), b: &(f32, usize)) -> Ordering {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
    }

    fn scan_block(
        &self,
        query: &[f32],
        k: usize,
        start: usize,
        end: usize,
        keep: &(impl Fn(usize) -> bool + Sync),
    ) -> Vec<(f32, usize)> {
        let mut top: Vec<(f32, usize)> = Vec::with_capacity(k + 1);
        for row in start..end {
            if !keep(row) {
                continue;
            }
            let similarity = dot(query, self.keys.row(row));
            let candidate = (similarity, row);
            let pos = top
                .binary_search_by(|probe| self.candidate_order(probe, &candidate))
                .unwrap_or_else(|p| p);
            if pos < k {
                top.insert(pos, candidate);
                top.truncate(k);
            }
        }
        top
    }

    /// Persist as a named-section container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = SectionFile::new();
        file.insert(
            "keys",
            Section::f32(
                vec![self.len() as u64, self.dim() as u64],
                self.keys.data(),
            ),
        );
        let mut id_bytes = Vec::new();
        for id in &self.ids {
            id_bytes.extend_from_slice(&(id.len() as u32).to_le_bytes());
            id_bytes.extend_from_slice(id.as_bytes());
        }
        file.insert("ids", Section::bytes(id_bytes));
        for role in Role::ALL {
            file.insert(
                format!("labels.{role}"),
                Section::u32(vec![self.len() as u64], &self.labels[role.index()]),
            );
        }
        file.insert(
            "key_kind",
            Section::u32(vec![1], &[match self.key_kind {
                KeyKind::RxnOnly => 0,
                KeyKind::RxnConcatDelta => 1,
            }]),
        );
        file.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path_str = path.as_ref().display().to_string();
        let file = SectionFile::load(path)?;
        let malformed = |message: String| -> Error {
            DataError::Malformed {
                path: path_str.clone(),
                line: 0,
                message,
            }
            .into()
        };

        let keys_section = file.require("keys", &path_str)?;
        if keys_section.dims.len() != 2 {
            return Err(malformed("keys section must be 2-dimensional".into()));
        }
        let (n, d) = (keys_section.dims[0] as usize, keys_section.dims[1] as usize);
        let keys = Matrix::from_vec(n, d, keys_section.as_f32()?)?;

        let id_section = file.require("ids", &path_str)?;
        let mut ids = Vec::with_capacity(n);
        let bytes = &id_section.payload;
        let mut pos = 0;
        for _ in 0..n {
            if pos + 4 > bytes.len() {
                return Err(malformed("truncated id table".into()));
            }
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + len > bytes.len() {
                return Err(malformed("truncated id entry".into()));
            }
            ids.push(
                std::str::from_utf8(&bytes[pos..pos + len])
                    .map_err(|_| malformed("id is not UTF-8".into()))?
                    .to_string(),
            );
            pos += len;
        }

        let mut labels: [Vec<u32>; 3] = Default::default();
        for role in Role::ALL {
            let section = file.require(&format!("labels.{role}"), &path_str)?;
            let values = section.as_u32()?;
            if values.len() != n {
                return Err(malformed(format!(
                    "labels.{role} has {} entries for {} rows",
                    values.len(),
                    n
                )));
            }
            labels[role.index()] = values;
        }

        let key_kind = match file.require("key_kind", &path_str)?.as_u32()?.first() {
            Some(0) => KeyKind::RxnOnly,
            Some(1) => KeyKind::RxnConcatDelta,
            other => return Err(malformed(format!("bad key_kind {other:?}"))),
        };

        let row_of = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            keys,
            ids,
            labels,
            key_kind,
            row_of,
        })
    }
}
