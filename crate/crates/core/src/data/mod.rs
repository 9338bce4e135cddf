//! Interaction ingestion, causal user contexts, the cold-start split and the
//! synthetic cross-domain generator.

mod context;
mod ingest;
mod split;
mod synth;

pub use context::{build_context, SourceHistory, Token, UserContext};
pub use ingest::{
    dataset_from_records, load_interactions, load_side_info, parse_interactions, parse_side_info, write_interactions,
    write_side_info, INTERACTIONS_HEADER, SIDE_INFO_HEADER,
};
pub use split::{assemble_samples, cold_start_split, source_samples, ColdStartSplit, Sample, SampleSets};
pub use synth::{synth_generate, SynthData, SynthSpec, SOURCE_DOMAIN};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing or wrong header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("{count} of {total} rows malformed (limit {limit:.2}%), e.g. {samples:?}")]
    Malformed {
        count: usize,
        total: usize,
        limit: f64,
        samples: Vec<String>,
    },
    #[error("line {line}: unknown domain_id `{domain}`")]
    UnknownDomain { line: usize, domain: String },
    #[error("split protocol: {0}")]
    Protocol(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// How the `signal` column is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// Binary click label, 0 or 1.
    Logit,
    /// Explicit rating in [1, 5].
    Rating,
}

impl Schema {
    pub fn name(self) -> &'static str {
        match self {
            Schema::Logit => "logit",
            Schema::Rating => "rating",
        }
    }

    pub fn accepts(self, signal: f64) -> bool {
        match self {
            Schema::Logit => signal == 0.0 || signal == 1.0,
            Schema::Rating => (1.0..=5.0).contains(&signal),
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logit" => Ok(Schema::Logit),
            "rating" => Ok(Schema::Rating),
            other => Err(format!("unknown schema `{other}` (logit|rating)")),
        }
    }
}

/// One raw row of `interactions.tsv`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub domain_id: String,
    pub signal: f64,
    pub timestamp: i64,
}

/// One raw row of `side_info.tsv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SideInfoRecord {
    pub item_id: String,
    pub category_id: String,
}

/// The source domain and the ordered list of known target domains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSet {
    pub source: String,
    pub targets: Vec<String>,
}

impl DomainSet {
    pub fn new(source: impl Into<String>, targets: &[&str]) -> Self {
        Self {
            source: source.into(),
            targets: targets.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn resolve(&self, id: &str) -> Option<DomainRole> {
        if id == self.source {
            Some(DomainRole::Source)
        } else {
            self.targets.iter().any(|t| t == id).then_some(DomainRole::Target)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DomainRole {
    Source,
    Target,
}

/// Domain of an indexed interaction; target indices address `Vocabularies::domains`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainRef {
    Source,
    Target(usize),
}

/// Dense 0-based id→index map in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for id in ids {
            v.intern(&id.into());
        }
        v
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Every vocabulary a dataset and a model must agree on.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabularies {
    pub users: Vocab,
    pub src_items: Vocab,
    pub tgt_items: Vocab,
    pub categories: Vocab,
    /// Target domains only, in declaration order.
    pub domains: Vocab,
}

/// An interaction with every id resolved to a vocabulary index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub user: usize,
    /// Index into `src_items` or `tgt_items` depending on `domain`.
    pub item: usize,
    pub domain: DomainRef,
    pub signal: f64,
    pub timestamp: i64,
}

/// Loaded interactions plus vocabularies and per-item side information.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: Schema,
    pub domains: DomainSet,
    pub vocab: Vocabularies,
    pub interactions: Vec<Interaction>,
    /// Category of each source item (`None` when side info is missing).
    pub src_item_category: Vec<Option<usize>>,
    /// Rows rejected during ingestion.
    pub malformed: usize,
}

impl Dataset {
    pub fn target_index(&self, domain_id: &str) -> Option<usize> {
        self.vocab.domains.get(domain_id)
    }

    pub fn category_of(&self, src_item: usize) -> Option<usize> {
        self.src_item_category.get(src_item).copied().flatten()
    }

    /// Maps ratings to click labels (`rating >= threshold` → 1).
    pub fn binarized(&self, threshold: f64) -> Dataset {
        let mut out = self.clone();
        if self.schema == Schema::Rating {
            for it in &mut out.interactions {
                it.signal = if it.signal >= threshold { 1.0 } else { 0.0 };
            }
            out.schema = Schema::Logit;
        }
        out
    }
}
