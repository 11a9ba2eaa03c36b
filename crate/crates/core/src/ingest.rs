//! Dataset, embedding-bank, and head-probability ingestion.
//!
//! # Reaction TSV schema
//!
//! UTF-8, tab-separated, one header line, then one reaction per line with
//! exactly eight columns:
//!
//! ```text
//! id  reactants  products  catalyst  solvent  reagent  split  publication_proxy
//! ```
//!
//! `reactants` / `products` are dot-joined molecule SMILES. Empty condition
//! cells mean the absent class. `split` is one of `train`, `validation`,
//! `test`. `publication_proxy` may be empty.
//!
//! # Embedding bank binary format
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    8 bytes  "HIRESEMB"
//! version  u32      (currently 1)
//! n        u32      row count
//! d        u32      embedding width (bit count for packed banks)
//! flags    u8       bit 0: delta matrix present
//!                   bit 1: rows are bit-packed 0/1 vectors
//!                   bits 4-6: role tag (0 none, 1 catalyst, 2 solvent, 3 reagent)
//! payload           n x d f32 rows (primary matrix), then n x d f32 rows
//!                   (delta matrix, if flagged); packed banks store
//!                   ceil(d / 8) bytes per row instead, LSB-first
//! ids               n x (u32 length + UTF-8 bytes)
//! checksum u64      FNV-1a over every preceding byte
//! ```
//!
//! Head-probability files reuse the same container with the role tag set and
//! `d` equal to the role's class count including absent.

use crate::error::{DataError, Error, Result};
use crate::hash::{fnv1a64, Fnv1a64};
use crate::linalg::Matrix;
use crate::model::{Conditions, ReactionRecord, Role, RoleDistribution, Split};
use crate::smiles::strip_atom_maps;
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

pub const BANK_MAGIC: &[u8; 8] = b"HIRESEMB";
pub const BANK_VERSION: u32 = 1;

const FLAG_DELTA: u8 = 0x01;
const FLAG_PACKED: u8 = 0x02;
const ROLE_SHIFT: u8 = 4;
const ROLE_MASK: u8 = 0x70;

/// Supported reaction TSV schema version.
pub const TSV_SCHEMA_VERSION: u32 = 1;

const TSV_HEADER: &str = "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy";

/// Parse a reaction TSV file. Order-preserving; duplicate ids and malformed
/// rows are rejected with their line number.
pub fn load_reactions(path: impl AsRef<Path>, schema_version: u32) -> Result<Vec<ReactionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_reactions(&text, &path.display().to_string(), schema_version)
}

/// Parse reaction TSV text. Exposed separately so callers can ingest without
/// touching the filesystem.
pub fn parse_reactions(text: &str, path: &str, schema_version: u32) -> Result<Vec<ReactionRecord>> {
    if schema_version != TSV_SCHEMA_VERSION {
        return Err(Error::config(format!(
            "unsupported TSV schema version {schema_version} (supported: {TSV_SCHEMA_VERSION})"
        )));
    }
    let malformed = |line: usize, message: String| -> Error {
        DataError::Malformed {
            path: path.to_string(),
            line,
            message,
        }
        .into()
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == TSV_HEADER => {}
        Some((_, header)) => {
            return Err(malformed(
                1,
                format!("bad header {header:?}, expected {TSV_HEADER:?}"),
            ))
        }
        None => return Err(malformed(1, "empty file".into())),
    }

    let mut records = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (index, line) in lines {
        let line_no = index + 1;
        if line.is_empty() {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 8 {
            return Err(malformed(
                line_no,
                format!("expected 8 columns, found {}", columns.len()),
            ));
        }
        let id = columns[0].to_string();
        if id.is_empty() {
            return Err(malformed(line_no, "empty id".into()));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(DataError::DuplicateId { id }.into());
        }
        let molecules = |cell: &str| -> Vec<String> {
            cell.split('.')
                .filter(|m| !m.is_empty())
                .map(String::from)
                .collect()
        };
        let reactants = molecules(columns[1]);
        if reactants.is_empty() {
            return Err(malformed(line_no, "missing reactants".into()));
        }
        let products = molecules(columns[2]);
        if products.is_empty() {
            return Err(malformed(line_no, "missing products".into()));
        }
        let optional = |cell: &str| -> Option<String> {
            if cell.is_empty() {
                None
            } else {
                Some(cell.to_string())
            }
        };
        let split = Split::parse(columns[6])
            .ok_or_else(|| malformed(line_no, format!("bad split {:?}", columns[6])))?;
        records.push(ReactionRecord {
            id,
            reactants,
            products,
            conditions: Conditions {
                catalyst: optional(columns[3]),
                solvent: optional(columns[4]),
                reagent: optional(columns[5]),
            },
            split,
            publication_proxy: optional(columns[7]),
        });
    }
    Ok(records)
}

/// Serialize records back to the TSV schema (header included).
pub fn reactions_to_tsv(records: &[ReactionRecord]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in records {
        let cell = |v: &Option<String>| v.clone().unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.reactants.join("."),
            r.products.join("."),
            cell(&r.conditions.catalyst),
            cell(&r.conditions.solvent),
            cell(&r.conditions.reagent),
            r.split.as_str(),
            cell(&r.publication_proxy),
        ));
    }
    out
}

/// (train, validation, test) record counts.
pub fn split_counts(records: &[ReactionRecord]) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for r in records {
        match r.split {
            Split::Train => counts.0 += 1,
            Split::Validation => counts.1 += 1,
            Split::Test => counts.2 += 1,
        }
    }
    counts
}

/// Canonical reaction string: atom-map-stripped reactant molecules sorted
/// lexicographically, `>>`, sorted stripped products. This is a string-level
/// normalization; graph-canonical SMILES is out of scope.
pub fn canonical_reaction_string(record: &ReactionRecord) -> Result<String> {
    let mut reactants = Vec::with_capacity(record.reactants.len());
    for m in &record.reactants {
        reactants.push(strip_atom_maps(m)?);
    }
    reactants.sort();
    let mut products = Vec::with_capacity(record.products.len());
    for m in &record.products {
        products.push(strip_atom_maps(m)?);
    }
    products.sort();
    Ok(format!("{}>>{}", reactants.join("."), products.join(".")))
}

/// Deterministic train-derived split: a record lands in the selection
/// validation subset iff `fnv1a64(canonical) % 1_000_000 < fraction * 1_000_000`.
/// The assignment depends only on the canonical reaction string, never on
/// input order, so records sharing a canonical string land together.
///
/// Returns `(selection_train_indices, selection_validation_indices)` into the
/// input slice.
pub fn deterministic_split(
    records: &[ReactionRecord],
    validation_fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::config(format!(
            "validation fraction {validation_fraction} must lie strictly between 0 and 1"
        )));
    }
    let threshold = (validation_fraction * 1_000_000.0) as u64;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let canonical = canonical_reaction_string(record)?;
        if fnv1a64(canonical.as_bytes()) % 1_000_000 < threshold {
            validation.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, validation))
}

/// Dense (or bit-packed 0/1) embedding matrix bank keyed by reaction id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBank {
    ids: Vec<String>,
    z_rxn: Matrix,
    z_delta: Option<Matrix>,
    packed: bool,
    role_tag: Option<Role>,
    row_of: HashMap<String, usize>,
}

impl EmbeddingBank {
    pub fn new(ids: Vec<String>, z_rxn: Matrix, z_delta: Option<Matrix>) -> Result<Self> {
        Self::with_flags(ids, z_rxn, z_delta, false, None)
    }

    /// Bank whose rows are 0/1 fingerprint vectors, persisted bit-packed.
    pub fn new_packed(ids: Vec<String>, bits: Matrix) -> Result<Self> {
        Self::with_flags(ids, bits, None, true, None)
    }

    fn with_flags(
        ids: Vec<String>,
        z_rxn: Matrix,
        z_delta: Option<Matrix>,
        packed: bool,
        role_tag: Option<Role>,
    ) -> Result<Self> {
        if ids.len() != z_rxn.rows() {
            return Err(Error::dimension(format!(
                "{} ids for {} rows",
                ids.len(),
                z_rxn.rows()
            )));
        }
        if let Some((row, col)) = z_rxn.first_non_finite() {
            return Err(DataError::NonFinite {
                row,
                column: Some(col),
            }
            .into());
        }
        if let Some(delta) = &z_delta {
            if delta.rows() != z_rxn.rows() || delta.cols() != z_rxn.cols() {
                return Err(Error::dimension(format!(
                    "delta matrix is {}x{}, primary is {}x{}",
                    delta.rows(),
                    delta.cols(),
                    z_rxn.rows(),
                    z_rxn.cols()
                )));
            }
            if let Some((row, col)) = delta.first_non_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: Some(col),
                }
                .into());
            }
        }
        if packed {
            if z_delta.is_some() {
                return Err(Error::config("packed banks cannot carry a delta matrix"));
            }
            if z_rxn.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::config("packed banks must hold 0/1 entries"));
            }
        }
        let mut row_of = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if row_of.insert(id.clone(), i).is_some() {
                return Err(DataError::DuplicateId { id: id.clone() }.into());
            }
        }
        Ok(Self {
            ids,
            z_rxn,
            z_delta,
            packed,
            role_tag,
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
        self.z_rxn.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn z_rxn(&self) -> &Matrix {
        &self.z_rxn
    }

    pub fn z_delta(&self) -> Option<&Matrix> {
        self.z_delta.as_ref()
    }

    pub fn is_packed(&self) -> bool {
        self.packed
    }

    pub fn role_tag(&self) -> Option<Role> {
        self.role_tag
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_of.get(id).copied()
    }

    /// Retrieval key for one row: the primary embedding, or its concatenation
    /// with the delta row when the key kind requires it.
    pub fn key(&self, row: usize, key_kind: crate::model::KeyKind) -> Result<Vec<f32>> {
        match key_kind {
            crate::model::KeyKind::RxnOnly => Ok(self.z_rxn.row(row).to_vec()),
            crate::model::KeyKind::RxnConcatDelta => {
                let delta = self.z_delta.as_ref().ok_or_else(|| {
                    Error::config("key kind rxn+delta requires a bank with a delta matrix")
                })?;
                let mut key = Vec::with_capacity(2 * self.dim());
                key.extend_from_slice(self.z_rxn.row(row));
                key.extend_from_slice(delta.row(row));
                Ok(key)
            }
        }
    }

    /// New bank holding only the named rows, in the given order.
    pub fn subset_by_ids(&self, ids: &[String]) -> Result<EmbeddingBank> {
        let mut z_rows = Vec::with_capacity(ids.len());
        let mut d_rows = Vec::with_capacity(ids.len());
        for id in ids {
            let row = self
                .row_of(id)
                .ok_or_else(|| Error::Data(DataError::UnknownId { id: id.clone() }))?;
            z_rows.push(self.z_rxn.row(row).to_vec());
            if let Some(delta) = &self.z_delta {
                d_rows.push(delta.row(row).to_vec());
            }
        }
        let z = if z_rows.is_empty() {
            Matrix::zeros(0, self.dim())
        } else {
            Matrix::from_rows(&z_rows)?
        };
        let delta = if self.z_delta.is_some() {
            Some(if d_rows.is_empty() {
                Matrix::zeros(0, self.dim())
            } else {
                Matrix::from_rows(&d_rows)?
            })
        } else {
            None
        };
        Self::with_flags(ids.to_vec(), z, delta, self.packed, self.role_tag)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_to(&mut file)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(BANK_MAGIC);
        bytes.extend_from_slice(&BANK_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        let mut flags = 0u8;
        if self.z_delta.is_some() {
            flags |= FLAG_DELTA;
        }
        if self.packed {
            flags |= FLAG_PACKED;
        }
        if let Some(role) = self.role_tag {
            flags |= ((role.index() as u8) + 1) << ROLE_SHIFT;
        }
        bytes.push(flags);

        let push_matrix = |bytes: &mut Vec<u8>, m: &Matrix| {
            if self.packed {
                let row_bytes = m.cols().div_ceil(8);
                for i in 0..m.rows() {
                    let mut packed_row = vec![0u8; row_bytes];
                    for (j, &v) in m.row(i).iter().enumerate() {
                        if v != 0.0 {
                            packed_row[j / 8] |= 1 << (j % 8);
                        }
                    }
                    bytes.extend_from_slice(&packed_row);
                }
            } else {
                for &v in m.data() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        };
        push_matrix(&mut bytes, &self.z_rxn);
        if let Some(delta) = &self.z_delta {
            push_matrix(&mut bytes, delta);
        }
        for id in &self.ids {
            bytes.extend_from_slice(&(id.len() as u32).to_le_bytes());
            bytes.extend_from_slice(id.as_bytes());
        }
        let mut hasher = Fnv1a64::new();
        hasher.update(&bytes);
        bytes.extend_from_slice(&hasher.finish().to_le_bytes());
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let malformed = |message: String| -> Error {
            DataError::Malformed {
                path: path.to_string(),
                line: 0,
                message,
            }
            .into()
        };

        if bytes.len() < 8 + 4 + 4 + 4 + 1 + 8 {
            return Err(malformed("file too short".into()));
        }
        if &bytes[..8] != BANK_MAGIC {
            return Err(DataError::BadMagic {
                path: path.to_string(),
                expected: String::from_utf8_lossy(BANK_MAGIC).into_owned(),
            }
            .into());
        }
        let body = &bytes[..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let mut hasher = Fnv1a64::new();
        hasher.update(body);
        if hasher.finish() != stored {
            return Err(DataError::ChecksumMismatch {
                path: path.to_string(),
            }
            .into());
        }

        let mut pos = 8;
        let version = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap());
        pos += 4;
        if version != BANK_VERSION {
            return Err(DataError::BadVersion {
                path: path.to_string(),
                found: version,
                supported: BANK_VERSION,
            }
            .into());
        }
        let n = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        let d = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        let flags = body[pos];
        pos += 1;
        let has_delta = flags & FLAG_DELTA != 0;
        let packed = flags & FLAG_PACKED != 0;
        let role_tag = match (flags & ROLE_MASK) >> ROLE_SHIFT {
            0 => None,
            1 => Some(Role::Catalyst),
            2 => Some(Role::Solvent),
            3 => Some(Role::Reagent),
            other => return Err(malformed(format!("bad role tag {other}"))),
        };

        let matrix_bytes = if packed { n * d.div_ceil(8) } else { n * d * 4 };
        let n_matrices = if has_delta { 2 } else { 1 };
        let read_matrix = |pos: &mut usize| -> Result<Matrix> {
            if *pos + matrix_bytes > body.len() {
                return Err(Error::dimension(format!(
                    "{path}: declared {n} x {d} payload exceeds file size"
                )));
            }
            let slice = &body[*pos..*pos + matrix_bytes];
            *pos += matrix_bytes;
            let data = if packed {
                let row_bytes = d.div_ceil(8);
                let mut data = Vec::with_capacity(n * d);
                for row in slice.chunks_exact(row_bytes) {
                    for j in 0..d {
                        data.push(if row[j / 8] >> (j % 8) & 1 == 1 { 1.0 } else { 0.0 });
                    }
                }
                data
            } else {
                slice
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect()
            };
            Matrix::from_vec(n, d, data)
        };

        if pos + matrix_bytes * n_matrices > body.len() {
            return Err(Error::dimension(format!(
                "{path}: declared {n} x {d} payload ({n_matrices} matrices) exceeds file size"
            )));
        }
        let z_rxn = read_matrix(&mut pos)?;
        let z_delta = if has_delta {
            Some(read_matrix(&mut pos)?)
        } else {
            None
        };

        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            if pos + 4 > body.len() {
                return Err(malformed("truncated id table".into()));
            }
            let len = u32::from_le_bytes(body[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + len > body.len() {
                return Err(malformed("truncated id entry".into()));
            }
            let id = std::str::from_utf8(&body[pos..pos + len])
                .map_err(|_| malformed("id is not UTF-8".into()))?
                .to_string();
            pos += len;
            ids.push(id);
        }
        if pos != body.len() {
            return Err(malformed(format!(
                "{} trailing bytes after id table",
                body.len() - pos
            )));
        }

        Self::with_flags(ids, z_rxn, z_delta, packed, role_tag)
    }
}

/// Per-role learned-head probabilities keyed by reaction id, ingested as data
/// artifacts. Row sums are validated (within 1e-6) and renormalized exactly.
#[derive(Debug, Clone, Default)]
pub struct HeadProbabilities {
    per_role: HashMap<Role, RoleMatrix>,
}

#[derive(Debug, Clone)]
struct RoleMatrix {
    row_of: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
}

impl HeadProbabilities {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load one role's probability file (a role-tagged embedding bank).
    pub fn load_role_file(&mut self, path: impl AsRef<Path>) -> Result<Role> {
        let path = path.as_ref();
        let bank = EmbeddingBank::load(path)?;
        let role = bank.role_tag().ok_or_else(|| {
            Error::config(format!(
                "{} has no role tag; not a head-probability file",
                path.display()
            ))
        })?;
        let mut rows = Vec::with_capacity(bank.len());
        for i in 0..bank.len() {
            let row: Vec<f64> = bank.z_rxn().row(i).iter().map(|&v| v as f64).collect();
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Data(DataError::Malformed {
                    path: path.display().to_string(),
                    line: 0,
                    message: format!("row {i} is not a probability vector (sum {sum})"),
                }));
            }
            rows.push(row.iter().map(|&p| p / sum).collect());
        }
        let row_of = bank
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        self.per_role.insert(role, RoleMatrix { row_of, rows });
        Ok(role)
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.per_role.contains_key(&role)
    }

    pub fn roles(&self) -> Vec<Role> {
        let mut roles: Vec<Role> = self.per_role.keys().copied().collect();
        roles.sort();
        roles
    }

    /// Head distribution for a reaction id, if loaded.
    pub fn get(&self, role: Role, id: &str) -> Option<RoleDistribution> {
        let matrix = self.per_role.get(&role)?;
        let &row = matrix.row_of.get(id)?;
        Some(RoleDistribution {
            role,
            probs: matrix.rows[row].clone(),
        })
    }

    pub fn n_classes(&self, role: Role) -> Option<usize> {
        self.per_role
            .get(&role)
            .and_then(|m| m.rows.first().map(|r| r.len()))
    }
}

/// Write one role's head probabilities as a role-tagged bank.
pub fn write_head_probabilities(
    path: impl AsRef<Path>,
    role: Role,
    ids: Vec<String>,
    rows: &[Vec<f64>],
) -> Result<()> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * cols);
    for row in rows {
        for &p in row {
            data.push(p as f32);
        }
    }
    let matrix = Matrix::from_vec(rows.len(), cols, data)?;
    let bank = EmbeddingBank::with_flags(ids, matrix, None, false, Some(role))?;
    bank.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY_TSV: &str = "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
        r1\tCCO\tCC=O\tPd\twater\t\ttrain\tpubA\n\
        r2\tCCCl.CO\tCCOC\t\tTHF\tNaH\ttrain\tpubA\n\
        r3\tCC=O\tCCO\t\t\t\ttrain\t\n\
        r4\tCCBr\tCCI\t\twater\tNaI\tvalidation\tpubB\n\
        r5\tCCO.CC(=O)O\tCCOC(C)=O\tH2SO4\t\t\ttest\tpubC\n";

    #[test]
    fn toy_tsv_counts_and_fields() {
        let records = parse_reactions(TOY_TSV, "toy.tsv", 1).unwrap();
        assert_eq!(records.len(), 5);
        assert_eq!(split_counts(&records), (3, 1, 1));
        assert_eq!(records[1].reactants, vec!["CCCl", "CO"]);
        assert_eq!(records[0].conditions.catalyst.as_deref(), Some("Pd"));
        assert_eq!(records[2].conditions.solvent, None);
        assert_eq!(records[4].publication_proxy.as_deref(), Some("pubC"));
    }

    #[test]
    fn missing_column_reports_line_number() {
        let bad = "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
            r1\tCCO\tCC=O\tPd\twater\t\ttrain\tx\n\
            r2\tCCO\n";
        let err = parse_reactions(bad, "bad.tsv", 1).unwrap_err();
        assert!(err.to_string().contains("bad.tsv:3"), "{err}");
    }

    #[test]
    fn empty_product_cell_is_rejected() {
        let bad = "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
            r1\tCCO\t\tPd\twater\t\ttrain\t\n";
        let err = parse_reactions(bad, "bad.tsv", 1).unwrap_err();
        assert!(err.to_string().contains("missing products"), "{err}");
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let bad = "id\treactants\tproducts\tcatalyst\tsolvent\treagent\tsplit\tpublication_proxy\n\
            r1\tCCO\tCC=O\t\t\t\ttrain\t\n\
            r1\tCCO\tCC=O\t\t\t\ttest\t\n";
        let err = parse_reactions(bad, "bad.tsv", 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Data(DataError::DuplicateId { .. })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let records = parse_reactions(TOY_TSV, "toy.tsv", 1).unwrap();
        let rendered = reactions_to_tsv(&records);
        let reparsed = parse_reactions(&rendered, "toy.tsv", 1).unwrap();
        assert_eq!(records, reparsed);
    }

    #[test]
    fn unsupported_schema_version() {
        assert!(parse_reactions(TOY_TSV, "toy.tsv", 2).is_err());
    }

    fn toy_bank() -> EmbeddingBank {
        let z = Matrix::from_vec(2, 4, vec![1.0, 0.0, 2.0, -1.5, 0.25, 1.0, 0.0, 3.0]).unwrap();
        let d = Matrix::from_vec(2, 4, vec![0.5, 0.5, -0.5, 0.0, 1.0, -1.0, 2.0, 0.0]).unwrap();
        EmbeddingBank::new(vec!["a".into(), "b".into()], z, Some(d)).unwrap()
    }

    #[test]
    fn bank_round_trip_is_bit_exact() {
        let bank = toy_bank();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        let loaded = EmbeddingBank::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(bank, loaded);

        let mut again = Vec::new();
        loaded.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn truncated_payload_is_a_dimension_error() {
        let bank = toy_bank();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        // Drop part of the payload and rewrite the checksum so only the
        // dimension check can fire.
        bytes.truncate(bytes.len() - 24);
        let mut hasher = Fnv1a64::new();
        hasher.update(&bytes);
        bytes.extend_from_slice(&hasher.finish().to_le_bytes());
        let err = EmbeddingBank::from_bytes(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("exceeds file size"), "{err}");
    }

    #[test]
    fn nan_rows_are_rejected_with_row_index() {
        let z = Matrix::from_vec(2, 2, vec![1.0, 0.0, f32::NAN, 1.0]).unwrap();
        let err = EmbeddingBank::new(vec!["a".into(), "b".into()], z, None).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn magic_mismatch_is_rejected() {
        let bank = toy_bank();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        bytes[0] = b'Z';
        assert!(matches!(
            EmbeddingBank::from_bytes(&bytes, "mem").unwrap_err(),
            Error::Data(DataError::BadMagic { .. })
        ));
    }

    #[test]
    fn packed_bank_round_trips_bits() {
        let bits = Matrix::from_vec(2, 10, vec![
            1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0,
        ])
        .unwrap();
        let bank = EmbeddingBank::new_packed(vec!["x".into(), "y".into()], bits).unwrap();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        let loaded = EmbeddingBank::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(bank, loaded);
        assert!(loaded.is_packed());
        // Packed payload is ceil(10/8) = 2 bytes per row, much smaller than f32 rows.
        assert!(bytes.len() < 2 * 10 * 4);
    }

    #[test]
    fn deterministic_split_ignores_order() {
        let records = parse_reactions(TOY_TSV, "toy.tsv", 1).unwrap();
        let (train_a, val_a) = deterministic_split(&records, 0.3).unwrap();
        let mut reversed: Vec<ReactionRecord> = records.clone();
        reversed.reverse();
        let (train_b, val_b) = deterministic_split(&reversed, 0.3).unwrap();

        let ids = |idx: &[usize], recs: &[ReactionRecord]| -> Vec<String> {
            let mut v: Vec<String> = idx.iter().map(|&i| recs[i].id.clone()).collect();
            v.sort();
            v
        };
        assert_eq!(ids(&train_a, &records), ids(&train_b, &reversed));
        assert_eq!(ids(&val_a, &records), ids(&val_b, &reversed));
    }

    #[test]
    fn split_share_tracks_fraction() {
        // 10,000 synthetic records; the validation share must land in
        // [0.08, 0.12] for fraction 0.1.
        let mut records = Vec::new();
        for i in 0..10_000 {
            records.push(ReactionRecord {
                id: format!("r{i}"),
                reactants: vec![format!("{}CO", "C".repeat(i % 37 + 1))],
                products: vec![format!("{}C=O", "C".repeat(i % 53 + 1)), format!("N{}", "C".repeat(i / 100 + 1))],
                conditions: Conditions::default(),
                split: Split::Train,
                publication_proxy: None,
            });
        }
        let (_, validation) = deterministic_split(&records, 0.1).unwrap();
        let share = validation.len() as f64 / records.len() as f64;
        assert!((0.08..=0.12).contains(&share), "share {share}");
    }

    #[test]
    fn identical_canonical_strings_share_a_subset() {
        // Same reaction written with different molecule order and a map
        // annotation that strip_atom_maps removes entirely.
        let a = ReactionRecord {
            id: "a".into(),
            reactants: vec!["[CH3]CO".into(), "CCl".into()],
            products: vec!["CC=O".into()],
            conditions: Conditions::default(),
            split: Split::Train,
            publication_proxy: None,
        };
        let b = ReactionRecord {
            id: "b".into(),
            reactants: vec!["CCl".into(), "[CH3:7]CO".into()],
            products: vec!["CC=O".into()],
            conditions: Conditions::default(),
            split: Split::Train,
            publication_proxy: None,
        };
        assert_eq!(
            canonical_reaction_string(&a).unwrap(),
            canonical_reaction_string(&b).unwrap()
        );
        let records = vec![a, b];
        for fraction in [0.1, 0.3, 0.7] {
            let (train, validation) = deterministic_split(&records, fraction).unwrap();
            assert!(train.len() == 2 || validation.len() == 2);
        }
    }

    #[test]
    fn head_probabilities_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solvent.heads");
        write_head_probabilities(
            &path,
            Role::Solvent,
            vec!["a".into(), "b".into()],
            &[vec![0.25, 0.5, 0.25], vec![1.0, 0.0, 0.0]],
        )
        .unwrap();
        let mut heads = HeadProbabilities::new();
        let role = heads.load_role_file(&path).unwrap();
        assert_eq!(role, Role::Solvent);
        let dist = heads.get(Role::Solvent, "a").unwrap();
        assert_eq!(dist.probs.len(), 3);
        assert!((dist.probs[1] - 0.5).abs() < 1e-6);
        dist.validate().unwrap();
        assert!(heads.get(Role::Solvent, "missing").is_none());
        assert!(heads.get(Role::Catalyst, "a").is_none());
    }

    #[test]
    fn head_file_rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalyst.heads");
        write_head_probabilities(
            &path,
            Role::Catalyst,
            vec!["a".into()],
            &[vec![0.9, 0.4]],
        )
        .unwrap();
        let mut heads = HeadProbabilities::new();
        let err = heads.load_role_file(&path).unwrap_err();
        assert!(err.to_string().contains("not a probability vector"), "{err}");
    }
}
