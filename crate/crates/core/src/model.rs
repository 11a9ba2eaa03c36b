//! Domain types: condition roles, vocabularies, reaction records, probability
//! distributions, and the absent-class label protocol.
//!
//! Class index 0 of every role is reserved for the absent ("no label
//! recorded") class. A vocabulary of `n` present labels therefore spans an
//! `n + 1`-class prediction space, and vocabulary position `i` (0-based) maps
//! to class `i + 1`.

use crate::error::{DataError, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

/// Tolerance for the sum-to-one invariant on probability vectors.
pub const DISTRIBUTION_SUM_TOLERANCE: f64 = 1e-9;

/// Condition roles predicted per reaction. The set is closed; secondary slots
/// are not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Catalyst,
    Solvent,
    Reagent,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Catalyst, Role::Solvent, Role::Reagent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Catalyst => "catalyst",
            Role::Solvent => "solvent",
            Role::Reagent => "reagent",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "catalyst" => Some(Role::Catalyst),
            "solvent" => Some(Role::Solvent),
            "reagent" => Some(Role::Reagent),
            _ => None,
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per role, indexable by [`Role`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRole<T> {
    pub catalyst: T,
    pub solvent: T,
    pub reagent: T,
}

impl<T> PerRole<T> {
    pub fn new(catalyst: T, solvent: T, reagent: T) -> Self {
        Self {
            catalyst,
            solvent,
            reagent,
        }
    }

    pub fn get(&self, role: Role) -> &T {
        match role {
            Role::Catalyst => &self.catalyst,
            Role::Solvent => &self.solvent,
            Role::Reagent => &self.reagent,
        }
    }

    pub fn get_mut(&mut self, role: Role) -> &mut T {
        match role {
            Role::Catalyst => &mut self.catalyst,
            Role::Solvent => &mut self.solvent,
            Role::Reagent => &mut self.reagent,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Role, &T) -> U) -> PerRole<U> {
        PerRole {
            catalyst: f(Role::Catalyst, &self.catalyst),
            solvent: f(Role::Solvent, &self.solvent),
            reagent: f(Role::Reagent, &self.reagent),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(Role, &T) -> Result<U>) -> Result<PerRole<U>> {
        Ok(PerRole {
            catalyst: f(Role::Catalyst, &self.catalyst)?,
            solvent: f(Role::Solvent, &self.solvent)?,
            reagent: f(Role::Reagent, &self.reagent)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Role, &T)> {
        Role::ALL.iter().map(move |&r| (r, self.get(r)))
    }
}

impl<T> std::ops::Index<Role> for PerRole<T> {
    type Output = T;
    fn index(&self, role: Role) -> &T {
        self.get(role)
    }
}

/// Dataset split tag carried by every record. Split hygiene (train-only
/// indexes, no test labels during selection) is enforced on these tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Per-role recorded condition labels. `None` means no label was recorded for
/// that role (the absent class after remapping).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    pub catalyst: Option<String>,
    pub solvent: Option<String>,
    pub reagent: Option<String>,
}

impl Conditions {
    pub fn get(&self, role: Role) -> Option<&str> {
        match role {
            Role::Catalyst => self.catalyst.as_deref(),
            Role::Solvent => self.solvent.as_deref(),
            Role::Reagent => self.reagent.as_deref(),
        }
    }
}

/// One reaction: reactant and product molecule SMILES, recorded conditions,
/// split tag, and an optional publication proxy for leakage audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionRecord {
    pub id: String,
    pub reactants: Vec<String>,
    pub products: Vec<String>,
    pub conditions: Conditions,
    pub split: Split,
    pub publication_proxy: Option<String>,
}

impl ReactionRecord {
    /// Check the structural invariants: both molecule lists nonempty.
    pub fn validate(&self) -> Result<()> {
        if self.reactants.is_empty() || self.reactants.iter().any(|m| m.is_empty()) {
            return Err(Error::empty(format!("reactants of {}", self.id)));
        }
        if self.products.is_empty() || self.products.iter().any(|m| m.is_empty()) {
            return Err(Error::empty(format!("products of {}", self.id)));
        }
        Ok(())
    }
}

/// Ordered label vocabulary for one role. File order defines class indices:
/// the label on line `i` (0-based) maps to class `i + 1`; class 0 is absent.
#[derive(Debug, Clone)]
pub struct RoleVocabulary {
    role: Role,
    labels: Vec<String>,
    positions: HashMap<String, u32>,
}

impl RoleVocabulary {
    pub fn new(role: Role, labels: Vec<String>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if positions.insert(label.clone(), i as u32).is_some() {
                return Err(DataError::DuplicateLabel {
                    role,
                    label: label.clone(),
                }
                .into());
            }
        }
        Ok(Self {
            role,
            labels,
            positions,
        })
    }

    /// Load from a UTF-8 text file, one label per line. Blank lines are
    /// rejected (they would silently shift class indices).
    pub fn from_file(role: Role, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                return Err(DataError::Malformed {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: "blank vocabulary line".into(),
                }
                .into());
            }
            labels.push(line.to_string());
        }
        Self::new(role, labels)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Number of present labels (e.g. 53 / 84 / 222).
    pub fn size_present(&self) -> usize {
        self.labels.len()
    }

    /// Prediction-space size including the absent class (e.g. 54 / 85 / 223).
    pub fn size_with_absent(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label string for a class index; `None` for the absent class 0.
    pub fn label_of(&self, class: u32) -> Option<&str> {
        if class == 0 {
            None
        } else {
            self.labels.get(class as usize - 1).map(|s| s.as_str())
        }
    }
}

/// Remap a raw condition label to its class index under the absent protocol:
/// a missing label maps to class 0, the label at vocabulary position `i` maps
/// to class `i + 1`.
pub fn remap_absent(raw: Option<&str>, vocab: &RoleVocabulary) -> Result<u32> {
    match raw {
        None => Ok(0),
        Some(label) => match vocab.positions.get(label) {
            Some(&pos) => Ok(pos + 1),
            None => Err(DataError::UnknownLabel {
                role: vocab.role,
                label: label.to_string(),
            }
            .into()),
        },
    }
}

/// Probability vector over one role's classes, including the absent class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleDistribution {
    pub role: Role,
    pub probs: Vec<f64>,
}

impl RoleDistribution {
    /// Construct and check the simplex invariants.
    pub fn new(role: Role, probs: Vec<f64>) -> Result<Self> {
        let dist = Self { role, probs };
        dist.validate()?;
        Ok(dist)
    }

    pub fn uniform(role: Role, n_classes: usize) -> Self {
        Self {
            role,
            probs: vec![1.0 / n_classes as f64; n_classes],
        }
    }

    pub fn one_hot(role: Role, n_classes: usize, class: u32) -> Self {
        let mut probs = vec![0.0; n_classes];
        probs[class as usize] = 1.0;
        Self { role, probs }
    }

    pub fn n_classes(&self) -> usize {
        self.probs.len()
    }

    /// Entries nonnegative and summing to 1 within [`DISTRIBUTION_SUM_TOLERANCE`].
    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::empty("distribution"));
        }
        if self.probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Invariant(format!(
                "{} distribution has a negative or non-finite entry",
                self.role
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOLERANCE {
            return Err(Error::Invariant(format!(
                "{} distribution sums to {sum}, expected 1",
                self.role
            )));
        }
        Ok(())
    }

    /// Present-only view: class 0 masked out and the remainder renormalized.
    /// Errors if all mass sits on the absent class.
    pub fn mask_absent(&self) -> Result<RoleDistribution> {
        let mut probs = self.probs.clone();
        probs[0] = 0.0;
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::empty(format!(
                "{} distribution has no present-class mass",
                self.role
            )));
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
        RoleDistribution::new(self.role, probs)
    }

    /// Class indices ranked by probability descending, ties broken by
    /// ascending class index.
    pub fn ranked_classes(&self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.probs.len() as u32).collect();
        order.sort_by(|&a, &b| {
            self.probs[b as usize]
                .partial_cmp(&self.probs[a as usize])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

/// The set of class indices accepted as correct for one row. Duplicate
/// reaction groups with divergent annotations produce multi-valued targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiHotTarget {
    pub role: Role,
    pub valid_labels: BTreeSet<u32>,
}

impl MultiHotTarget {
    pub fn new(role: Role, valid_labels: BTreeSet<u32>, n_classes: usize) -> Result<Self> {
        if valid_labels.is_empty() {
            return Err(Error::empty("multi-hot target"));
        }
        if let Some(&class) = valid_labels.iter().find(|&&c| c as usize >= n_classes) {
            return Err(Error::dimension(format!(
                "target class {class} out of range for {n_classes} classes"
            )));
        }
        Ok(Self { role, valid_labels })
    }

    pub fn single(role: Role, class: u32, n_classes: usize) -> Result<Self> {
        Self::new(role, BTreeSet::from([class]), n_classes)
    }

    pub fn contains(&self, class: u32) -> bool {
        self.valid_labels.contains(&class)
    }

    /// True when the only valid label is the absent class. Used to partition
    /// rows for the absent/present audit.
    pub fn is_absent_only(&self) -> bool {
        self.valid_labels.len() == 1 && self.valid_labels.contains(&0)
    }
}

/// Union of remapped labels across a group of records that share a canonical
/// reaction string, for one role.
pub fn build_multihot(group: &[ReactionRecord], vocab: &RoleVocabulary) -> Result<MultiHotTarget> {
    if group.is_empty() {
        return Err(Error::empty("record group"));
    }
    let mut valid = BTreeSet::new();
    for record in group {
        valid.insert(remap_absent(record.conditions.get(vocab.role()), vocab)?);
    }
    MultiHotTarget::new(vocab.role(), valid, vocab.size_with_absent())
}

/// How retrieval keys are formed from the embedding bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    /// Reaction embedding alone.
    RxnOnly,
    /// Reaction embedding concatenated with the transformation embedding.
    RxnConcatDelta,
}

impl KeyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeyKind::RxnOnly => "rxn",
            KeyKind::RxnConcatDelta => "rxn+delta",
        }
    }

    pub fn parse(s: &str) -> Option<KeyKind> {
        match s {
            "rxn" | "rxn_only" => Some(KeyKind::RxnOnly),
            "rxn+delta" | "rxn_concat_delta" => Some(KeyKind::RxnConcatDelta),
            _ => None,
        }
    }
}

/// Neighbor weighting scheme for the vote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    /// Every retrieved neighbor counts equally.
    Uniform,
    /// Similarity-softmax weights at the given temperature (> 0).
    Softmax(f64),
}

impl Temperature {
    /// Effective temperature for ordering candidates; uniform sorts after any
    /// finite temperature.
    pub fn ordering_value(&self) -> f64 {
        match self {
            Temperature::Uniform => f64::INFINITY,
            Temperature::Softmax(t) => *t,
        }
    }

    pub fn parse(s: &str) -> Option<Temperature> {
        if s == "uniform" {
            Some(Temperature::Uniform)
        } else {
            s.parse::<f64>().ok().filter(|t| *t > 0.0).map(Temperature::Softmax)
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Uniform => f.write_str("uniform"),
            Temperature::Softmax(t) => write!(f, "{t}"),
        }
    }
}

/// Retrieval and fusion settings. The default mirrors the fixed head-fusion
/// configuration: k = 10, uniform neighbor vote, alpha = 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub key_kind: KeyKind,
    pub k: usize,
    pub temperature: Temperature,
    pub alpha: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            key_kind: KeyKind::RxnOnly,
            k: 10,
            temperature: Temperature::Uniform,
            alpha: 0.5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("k must be at least 1"));
        }
        if let Temperature::Softmax(t) = self.temperature {
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::config(format!("temperature {t} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "alpha {} must lie in [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }
}
