//! Domain records, configuration and line-delimited JSON IO.
//!
//! Every input and output file is one JSON object per line. Floats are
//! written with the shortest round-trip representation, so loading and
//! re-serializing a file reproduces it field for field.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::kernel::{InterestModulation, KernelForm};
use crate::{Error, Result};

/// One item with its embedding and, for candidates, the upstream score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_score: Option<f64>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self {
            item_id: item_id.into(),
            embedding,
            cluster_id: None,
            base_score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.base_score = Some(score);
        self
    }

    fn check_score(&self) -> Result<()> {
        match self.base_score {
            Some(s) if !(0.0..=1.0).contains(&s) => Err(Error::Validation(format!(
                "item '{}' has base_score {s} outside [0,1]",
                self.item_id
            ))),
            _ => Ok(()),
        }
    }
}

/// Items keyed by id, all sharing one embedding dimension.
///
/// The dimension is fixed by the first inserted record.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    items: Vec<ItemRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn insert(&mut self, item: ItemRecord) -> Result<()> {
        if item.embedding.is_empty() {
            return Err(Error::Validation(format!(
                "item '{}' has an empty embedding",
                item.item_id
            )));
        }
        match self.dim {
            Some(d) if d != item.embedding.len() => {
                return Err(Error::Validation(format!(
                    "item '{}' has embedding dimension {} but the table dimension is {d}",
                    item.item_id,
                    item.embedding.len()
                )))
            }
            _ => {}
        }
        if self.index.contains_key(&item.item_id) {
            return Err(Error::Validation(format!("duplicate item_id '{}'", item.item_id)));
        }
        item.check_score()?;
        self.dim = Some(item.embedding.len());
        self.index.insert(item.item_id.clone(), self.items.len());
        self.items.push(item);
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemRecord> {
        self.index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn embedding(&self, item_id: &str) -> Option<&[f64]> {
        self.get(item_id).map(|r| r.embedding.as_slice())
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemRecord> {
        self.items.iter()
    }
}

impl FromIterator<ItemRecord> for Result<EmbeddingTable> {
    fn from_iter<T: IntoIterator<Item = ItemRecord>>(iter: T) -> Self {
        let mut table = EmbeddingTable::new();
        for item in iter {
            table.insert(item)?;
        }
        Ok(table)
    }
}

/// One user–item interaction. Labeled events are impressions; unlabeled
/// events are plain interactions that make up the behavior history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub user_id: String,
    pub item_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    /// Upstream point-wise score shown at impression time, when logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BehaviorEvent {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
            label: None,
            score: None,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn is_history(&self) -> bool {
        self.label.is_none()
    }

    fn validate(&self) -> Result<()> {
        if self.timestamp < 0 {
            return Err(Error::Validation(format!(
                "event ({}, {}) has negative timestamp {}",
                self.user_id, self.item_id, self.timestamp
            )));
        }
        if let Some(l) = self.label {
            if l > 1 {
                return Err(Error::Validation(format!(
                    "event ({}, {}) has label {l}, expected 0 or 1",
                    self.user_id, self.item_id
                )));
            }
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Validation(format!(
                    "event ({}, {}) has score {s} outside [0,1]",
                    self.user_id, self.item_id
                )));
            }
        }
        Ok(())
    }
}

/// A user's candidate list handed over by the ranking stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub user_id: String,
    pub items: Vec<ItemRecord>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.items.first().map_or(0, |i| i.embedding.len())
    }

    pub fn embeddings(&self) -> Vec<&[f64]> {
        self.items.iter().map(|i| i.embedding.as_slice()).collect()
    }

    /// Base scores in candidate order. Only valid after [`validate`](Self::validate).
    pub fn base_scores(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.base_score.unwrap_or(f64::NAN)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::Validation(format!(
                "candidate set for user '{}' is empty",
                self.user_id
            )));
        }
        let d = self.dim();
        let mut seen = HashSet::with_capacity(self.items.len());
        for item in &self.items {
            if item.embedding.len() != d || d == 0 {
                return Err(Error::Validation(format!(
                    "candidate '{}' has embedding dimension {}, expected {d}",
                    item.item_id,
                    item.embedding.len()
                )));
            }
            if !seen.insert(item.item_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate candidate '{}' for user '{}'",
                    item.item_id, self.user_id
                )));
            }
            if item.base_score.is_none() {
                return Err(Error::Validation(format!(
                    "candidate '{}' has no base_score",
                    item.item_id
                )));
            }
            item.check_score()?;
        }
        Ok(())
    }
}

/// Ground-truth relevance of one candidate for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceLabel {
    pub user_id: String,
    pub item_id: String,
    pub label: u8,
}

/// One greedy step: what was picked and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub item_id: String,
    /// Accuracy score `g(u,i|S)` at the time of selection.
    pub score: f64,
    /// `log d_i²`; `None` when the diversity term was inactive and `d_i²` was zero.
    pub log_d2: Option<f64>,
    pub marginal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResult {
    pub user_id: String,
    pub items: Vec<String>,
    pub steps: Vec<StepRecord>,
    /// `Σ g + α·Σ log d²`, i.e. `h(u,S)` with each score taken at its step.
    pub objective: f64,
    /// Set when every remaining candidate fell below the `d²` threshold before K picks.
    #[serde(default)]
    pub truncated: bool,
}

/// All experiment hyperparameters. Missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub a_l: f64,
    pub b_l: f64,
    pub a_s: f64,
    pub b_s: f64,
    pub a_item: f64,
    pub b_item: f64,
    pub epsilon: f64,
    pub k: usize,
    pub top_m: usize,
    pub time_buckets: usize,
    pub jitter: f64,
    pub recent_window: usize,
    pub normalize_embeddings: bool,
    pub kernel_form: KernelForm,
    pub interest_modulation: InterestModulation,
    pub paper_literal_init: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta1: 0.5,
            beta2: 0.5,
            a_l: 1.0,
            b_l: 1.0,
            a_s: 1.0,
            b_s: 1.0,
            a_item: 1.0,
            b_item: 1.0,
            epsilon: 1e-9,
            k: 10,
            top_m: 5,
            time_buckets: 16,
            jitter: 1e-6,
            recent_window: 20,
            normalize_embeddings: true,
            kernel_form: KernelForm::default(),
            interest_modulation: InterestModulation::default(),
            paper_literal_init: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Checks every constraint and reports all violations at once.
pub fn validate_config(cfg: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let non_negative = [
        ("alpha", cfg.alpha),
        ("beta1", cfg.beta1),
        ("beta2", cfg.beta2),
        ("jitter", cfg.jitter),
    ];
    for (name, v) in non_negative {
        if !(v >= 0.0 && v.is_finite()) {
            errors.push(format!("{name} must be non-negative"));
        }
    }
    let positive = [
        ("a_l", cfg.a_l),
        ("b_l", cfg.b_l),
        ("a_s", cfg.a_s),
        ("b_s", cfg.b_s),
        ("a_item", cfg.a_item),
        ("b_item", cfg.b_item),
        ("epsilon", cfg.epsilon),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            errors.push(format!("{name} must be positive"));
        }
    }
    let counts = [
        ("k", cfg.k),
        ("top_m", cfg.top_m),
        ("time_buckets", cfg.time_buckets),
        ("recent_window", cfg.recent_window),
    ];
    for (name, v) in counts {
        if v == 0 {
            errors.push(format!("{name} must be at least 1"));
        }
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

/// Reads one JSON object per non-blank line, keeping 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_items(path: &Path) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new();
    for (line, item) in read_jsonl::<ItemRecord>(path)? {
        table.insert(item).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("line {line}: {msg}")),
            other => other,
        })?;
    }
    Ok(table)
}

/// Events sorted by `(user_id, timestamp)`; ties keep file order.
pub fn load_behaviors(path: &Path) -> Result<Vec<BehaviorEvent>> {
    let mut events = Vec::new();
    for (line, ev) in read_jsonl::<BehaviorEvent>(path)? {
        ev.validate()
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        events.push(ev);
    }
    sort_behaviors(&mut events);
    Ok(events)
}

pub fn sort_behaviors(events: &mut [BehaviorEvent]) {
    events.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.timestamp.cmp(&b.timestamp)));
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateSet>> {
    read_jsonl::<CandidateSet>(path)?
        .into_iter()
        .map(|(line, set)| {
            set.validate()
                .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
            Ok(set)
        })
        .collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<RelevanceLabel>> {
    read_jsonl::<RelevanceLabel>(path)?
        .into_iter()
        .map(|(line, l)| {
            if l.label > 1 {
                return Err(Error::Validation(format!(
                    "line {line}: label {} is not 0 or 1",
                    l.label
                )));
            }
            Ok(l)
        })
        .collect()
}
