//! Interaction logs, the item/category catalog, and the filtering and
//! splitting protocol that turns a raw log into train/validation/test
//! sessions.

mod catalog;
mod ingest;
mod io;
mod preprocess;

pub use catalog::Catalog;
pub use ingest::{ingest, ingest_reader, IngestOptions, Ingested};
pub use io::{load_dataset, write_dataset, write_records, DatasetManifest, PartitionCounts};
pub use preprocess::{preprocess, split_sequences, PreprocessConfig, SplitBoundary, DAY_SECS};

use serde::{Deserialize, Serialize};

/// One row of the raw interaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub session_id: String,
    pub item_id: String,
    pub category_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn new(
        session_id: impl Into<String>,
        item_id: impl Into<String>,
        category_id: impl Into<String>,
        timestamp: i64,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            item_id: item_id.into(),
            category_id: category_id.into(),
            timestamp,
        }
    }
}

/// A chronologically ordered session expressed in catalog indices.
///
/// `categories` runs parallel to `items`, as do the per-event `timestamps`
/// (kept so a split dataset can be written back out as an interaction log).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub id: String,
    pub items: Vec<usize>,
    pub categories: Vec<usize>,
    pub timestamps: Vec<i64>,
    pub start_time: i64,
}

impl Session {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A next-item prediction example: the prefix of a session and the item that
/// followed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub prefix: Vec<usize>,
    pub prefix_categories: Vec<usize>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Session>,
    pub validation: Vec<Session>,
    pub test: Vec<Session>,
    pub catalog: Catalog,
    pub boundary: SplitBoundary,
}

impl SplitDataset {
    /// Converts every partition back into interaction records (raw ids).
    pub fn to_records(&self) -> Vec<InteractionRecord> {
        let mut out = Vec::new();
        for session in self.train.iter().chain(&self.validation).chain(&self.test) {
            out.extend(session_records(session, &self.catalog));
        }
        out
    }
}

pub(crate) fn session_records<'a>(
    session: &'a Session,
    catalog: &'a Catalog,
) -> impl Iterator<Item = InteractionRecord> + 'a {
    session
        .items
        .iter()
        .zip(&session.timestamps)
        .map(move |(&item, &ts)| InteractionRecord {
            session_id: session.id.clone(),
            item_id: catalog.item_id(item).to_owned(),
            category_id: catalog.category_id(catalog.category_of(item)).to_owned(),
            timestamp: ts,
        })
}
