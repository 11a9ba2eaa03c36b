//! Forward-only representation kernels.
//!
//! Nothing here trains: attention bias scales, gate projections, and pooling
//! scorers are loadable parameters. The kernels exist to property-test the
//! representation math and to recompute retrieval keys from cached
//! molecule-level tensors.

use crate::container::SectionFile;
use crate::error::{Error, Result};
use crate::linalg::{dot, softmax_in_place, Matrix};
use std::collections::BTreeMap;
use std::path::Path;

/// Per-head attention bias scale. The default is one scale per head; a single
/// shared scale is accepted as the one-element form.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasScale {
    Shared(f32),
    PerHead(Vec<f32>),
}

impl BiasScale {
    fn for_head(&self, head: usize) -> f32 {
        match self {
            BiasScale::Shared(beta) => *beta,
            BiasScale::PerHead(betas) => betas[head],
        }
    }

    fn validate(&self, heads: usize) -> Result<()> {
        if let BiasScale::PerHead(betas) = self {
            if betas.len() != heads {
                return Err(Error::dimension(format!(
                    "{} bias scales for {} heads",
                    betas.len(),
                    heads
                )));
            }
        }
        Ok(())
    }
}

/// Inputs to the biased product-to-reactant cross-attention block.
///
/// `queries` has one row per product atom, `keys` / `values` one row per
/// reactant atom; all three are `heads * head_dim` wide. `alignment` is the
/// optional binary atom-pairing matrix; `None` behaves exactly like all-zero.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    pub queries: Matrix,
    pub keys: Matrix,
    pub values: Matrix,
    pub alignment: Option<Matrix>,
    pub bias: BiasScale,
    pub heads: usize,
    pub head_dim: usize,
}

impl AttentionInputs {
    fn validate(&self) -> Result<()> {
        let width = self.heads * self.head_dim;
        if self.heads == 0 || self.head_dim == 0 {
            return Err(Error::dimension("heads and head_dim must be positive"));
        }
        for (name, m) in [
            ("queries", &self.queries),
            ("keys", &self.keys),
            ("values", &self.values),
        ] {
            if m.cols() != width {
                return Err(Error::dimension(format!(
                    "{name} width {} != heads*head_dim {}",
                    m.cols(),
                    width
                )));
            }
        }
        if self.keys.rows() != self.values.rows() {
            return Err(Error::dimension(format!(
                "keys have {} rows, values {}",
                self.keys.rows(),
                self.values.rows()
            )));
        }
        if let Some(m) = &self.alignment {
            if m.rows() != self.queries.rows() || m.cols() != self.keys.rows() {
                return Err(Error::dimension(format!(
                    "alignment is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.queries.rows(),
                    self.keys.rows()
                )));
            }
            if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::dimension("alignment entries must be 0 or 1"));
            }
        }
        self.bias.validate(self.heads)
    }
}

/// Multi-head scaled dot-product attention with an optional additive
/// alignment bias: per head, `softmax(Q K^T / sqrt(head_dim) + beta * M) V`.
///
/// With no alignment matrix the bias term is skipped entirely, reducing the
/// block to standard scaled dot-product cross-attention. Each softmax row is
/// a convex weighting, so every output row lies in the convex hull of the
/// value rows head-wise.
pub fn biased_cross_attention(inputs: &AttentionInputs) -> Result<Matrix> {
    inputs.validate()?;
    let n_q = inputs.queries.rows();
    let n_k = inputs.keys.rows();
    let dh = inputs.head_dim;
    let scale = 1.0 / (dh as f32).sqrt();

    let mut out = Matrix::zeros(n_q, inputs.heads * dh);
    let mut scores = vec![0.0f32; n_k];
    for head in 0..inputs.heads {
        let col0 = head * dh;
        let beta = inputs.bias.for_head(head);
        for qi in 0..n_q {
            let q = &inputs.queries.row(qi)[col0..col0 + dh];
            for (kj, score) in scores.iter_mut().enumerate() {
                let k = &inputs.keys.row(kj)[col0..col0 + dh];
                let mut s = dot(q, k) * scale;
                if let Some(m) = &inputs.alignment {
                    s += beta * m.row(qi)[kj];
                }
                *score = s;
            }
            softmax_in_place(&mut scores);
            let out_row = &mut out.row_mut(qi)[col0..col0 + dh];
            for (kj, &w) in scores.iter().enumerate() {
                let v = &inputs.values.row(kj)[col0..col0 + dh];
                for (o, &vv) in out_row.iter_mut().zip(v) {
                    *o += w * vv;
                }
            }
        }
    }
    Ok(out)
}

/// Standard multi-head scaled dot-product cross-attention (no bias term).
pub fn scaled_dot_product_attention(
    queries: &Matrix,
    keys: &Matrix,
    values: &Matrix,
    heads: usize,
    head_dim: usize,
) -> Result<Matrix> {
    biased_cross_attention(&AttentionInputs {
        queries: queries.clone(),
        keys: keys.clone(),
        values: values.clone(),
        alignment: None,
        bias: BiasScale::Shared(0.0),
        heads,
        head_dim,
    })
}

/// Pooled reactant and product vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RolePooledPair {
    pub reactant: Vec<f32>,
    pub product: Vec<f32>,
}

/// Zero-parameter decomposition of a pooled pair: the elementwise difference
/// (product minus reactant, emphasizing the transformation) and sum
/// (preserving reaction context).
pub fn delta_sigma(pair: &RolePooledPair) -> Result<(Vec<f32>, Vec<f32>)> {
    if pair.reactant.len() != pair.product.len() {
        return Err(Error::dimension(format!(
            "pooled pair dims differ: {} vs {}",
            pair.reactant.len(),
            pair.product.len()
        )));
    }
    let delta = pair
        .product
        .iter()
        .zip(&pair.reactant)
        .map(|(p, r)| p - r)
        .collect();
    let sigma = pair
        .product
        .iter()
        .zip(&pair.reactant)
        .map(|(p, r)| p + r)
        .collect();
    Ok((delta, sigma))
}

/// Attention pooling over atom rows: softmax of a linear score per atom, then
/// the weighted mean of atom embeddings. The scorer vector is a loadable
/// parameter.
pub fn attention_pool(atoms: &Matrix, scorer: &[f32]) -> Result<Vec<f32>> {
    if atoms.cols() != scorer.len() {
        return Err(Error::dimension(format!(
            "scorer has {} weights for {}-wide atom rows",
            scorer.len(),
            atoms.cols()
        )));
    }
    if atoms.rows() == 0 {
        return Err(Error::empty("atom matrix"));
    }
    let mut scores: Vec<f32> = (0..atoms.rows()).map(|i| dot(atoms.row(i), scorer)).collect();
    softmax_in_place(&mut scores);
    let mut pooled = vec![0.0f32; atoms.cols()];
    for (i, &w) in scores.iter().enumerate() {
        for (p, &a) in pooled.iter_mut().zip(atoms.row(i)) {
            *p += w * a;
        }
    }
    Ok(pooled)
}

/// Number of fused streams.
pub const N_STREAMS: usize = 6;

/// The six projected reaction streams and their gate weights. Gates must be
/// nonnegative and sum to one; [`gate_from_logits`] produces them that way.
#[derive(Debug, Clone)]
pub struct StreamSet {
    /// Concatenated reactant-product context, projected to `d`.
    pub rp_context: Vec<f32>,
    /// Transformation difference stream.
    pub difference: Vec<f32>,
    /// Reaction sum stream.
    pub sum: Vec<f32>,
    /// Engineered descriptors (including the differential fingerprint).
    pub engineered: Vec<f32>,
    /// Physics-derived descriptors.
    pub dft: Vec<f32>,
    /// Reaction-center difference stream.
    pub center_difference: Vec<f32>,
    /// Convex gate weights over the six streams.
    pub gate: [f64; N_STREAMS],
}

impl StreamSet {
    pub fn streams(&self) -> [&[f32]; N_STREAMS] {
        [
            &self.rp_context,
            &self.difference,
            &self.sum,
            &self.engineered,
            &self.dft,
            &self.center_difference,
        ]
    }

    fn validate(&self) -> Result<()> {
        let d = self.rp_context.len();
        if d == 0 {
            return Err(Error::empty("stream set"));
        }
        for (i, s) in self.streams().iter().enumerate() {
            if s.len() != d {
                return Err(Error::dimension(format!(
                    "stream {i} has dim {}, expected {d}",
                    s.len()
                )));
            }
        }
        if self.gate.iter().any(|&g| g < 0.0) {
            return Err(Error::config("gate weights must be nonnegative"));
        }
        let sum: f64 = self.gate.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "gate weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Softmax-normalized gate weights from raw logits.
pub fn gate_from_logits(logits: &[f64; N_STREAMS]) -> [f64; N_STREAMS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut gate = [0.0; N_STREAMS];
    let mut sum = 0.0;
    for (g, &l) in gate.iter_mut().zip(logits) {
        *g = (l - max).exp();
        sum += *g;
    }
    for g in gate.iter_mut() {
        *g /= sum;
    }
    gate
}

/// Gated fusion: the convex combination of the six streams under the gate
/// weights. Output lies elementwise in the convex hull of the streams.
pub fn gated_fusion(streams: &StreamSet) -> Result<Vec<f32>> {
    streams.validate()?;
    let d = streams.rp_context.len();
    let mut fused = vec![0.0f32; d];
    for (stream, &g) in streams.streams().iter().zip(&streams.gate) {
        let g = g as f32;
        for (f, &s) in fused.iter_mut().zip(stream.iter()) {
            *f += g * s;
        }
    }
    Ok(fused)
}

/// Named tensors loaded from a section container. Holds bias scales, gate
/// projections, pooling scorers, or anything else the kernels consume.
#[derive(Debug, Clone, Default)]
pub struct KernelWeights {
    tensors: BTreeMap<String, (Vec<u64>, Vec<f32>)>,
}

impl KernelWeights {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = SectionFile::load(path)?;
        let mut tensors = BTreeMap::new();
        for name in file.names().map(String::from).collect::<Vec<_>>() {
            let section = file.get(&name).expect("listed name");
            tensors.insert(name, (section.dims.clone(), section.as_f32()?));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = SectionFile::new();
        for (name, (dims, values)) in &self.tensors {
            file.insert(name.clone(), crate::container::Section::f32(dims.clone(), values));
        }
        file.save(path)
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<u64>, values: Vec<f32>) {
        self.tensors.insert(name.into(), (dims, values));
    }

    pub fn get(&self, name: &str) -> Option<(&[u64], &[f32])> {
        self.tensors
            .get(name)
            .map(|(dims, values)| (dims.as_slice(), values.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }
}
