//! On-disk dataset directory.
//!
//! ```text
//! <dir>/manifest.json     filter parameters, split boundary, counts
//! <dir>/items.tsv         index, item_id, category_index
//! <dir>/categories.tsv    index, category_id
//! <dir>/train.tsv         session_id, item_id, category_id, timestamp
//! <dir>/validation.tsv    (same columns)
//! <dir>/test.tsv          (same columns)
//! ```
//!
//! Partition files use the ingestion format, so concatenating them gives a
//! log that [`super::ingest`] accepts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    session_records, split_sequences, Catalog, InteractionRecord, PreprocessConfig, Session,
    SplitBoundary, SplitDataset,
};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "dcarec-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub sessions: usize,
    pub events: usize,
    pub instances: usize,
}

impl PartitionCounts {
    fn of(sessions: &[Session]) -> Self {
        Self {
            sessions: sessions.len(),
            events: sessions.iter().map(Session::len).sum(),
            instances: split_sequences(sessions).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub source: String,
    pub preprocess: PreprocessConfig,
    pub boundary: SplitBoundary,
    pub input_records: usize,
    pub skipped_rows: usize,
    pub item_count: usize,
    pub category_count: usize,
    pub train: PartitionCounts,
    pub validation: PartitionCounts,
    pub test: PartitionCounts,
    /// Free-form provenance, e.g. the synthetic generator settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn describe(
        dataset: &SplitDataset,
        source: impl Into<String>,
        preprocess: PreprocessConfig,
        input_records: usize,
        skipped_rows: usize,
    ) -> Self {
        Self {
            format: DATASET_FORMAT.to_owned(),
            source: source.into(),
            preprocess,
            boundary: dataset.boundary,
            input_records,
            skipped_rows,
            item_count: dataset.catalog.item_count(),
            category_count: dataset.catalog.category_count(),
            train: PartitionCounts::of(&dataset.train),
            validation: PartitionCounts::of(&dataset.validation),
            test: PartitionCounts::of(&dataset.test),
            generator: None,
        }
    }
}

pub fn write_dataset(dir: &Path, dataset: &SplitDataset, manifest: &DatasetManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut items = tsv_writer(&dir.join("items.tsv"))?;
    items.write_record(["index", "item_id", "category_index"])?;
    for (i, id) in dataset.catalog.items().iter().enumerate() {
        items.write_record([
            i.to_string(),
            id.clone(),
            dataset.catalog.category_of(i).to_string(),
        ])?;
    }
    flush(items, &dir.join("items.tsv"))?;

    let mut cats = tsv_writer(&dir.join("categories.tsv"))?;
    cats.write_record(["index", "category_id"])?;
    for (c, id) in dataset.catalog.categories().iter().enumerate() {
        cats.write_record([c.to_string(), id.clone()])?;
    }
    flush(cats, &dir.join("categories.tsv"))?;

    for (name, sessions) in partitions(dataset) {
        let records: Vec<_> = sessions
            .iter()
            .flat_map(|s| session_records(s, &dataset.catalog))
            .collect();
        write_records(&dir.join(format!("{name}.tsv")), &records)?;
    }

    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes records as a tab-separated interaction log with header.
pub fn write_records(path: &Path, records: &[InteractionRecord]) -> Result<()> {
    let mut w = tsv_writer(path)?;
    w.write_record(["session_id", "item_id", "category_id", "timestamp"])?;
    for r in records {
        w.write_record([
            r.session_id.as_str(),
            r.item_id.as_str(),
            r.category_id.as_str(),
            &r.timestamp.to_string(),
        ])?;
    }
    flush(w, path)
}

pub fn load_dataset(dir: &Path) -> Result<(SplitDataset, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::malformed(
            manifest_path.display().to_string(),
            format!("unsupported format {:?}", manifest.format),
        ));
    }

    let categories: Vec<String> = read_tsv(&dir.join("categories.tsv"), 2)?
        .into_iter()
        .map(|mut row| row.swap_remove(1))
        .collect();
    let mut items = Vec::new();
    let mut item_to_category = Vec::new();
    let items_path = dir.join("items.tsv");
    for row in read_tsv(&items_path, 3)? {
        let cat = row[2].parse().map_err(|_| {
            Error::malformed(items_path.display().to_string(), format!("bad category index {:?}", row[2]))
        })?;
        items.push(row[1].clone());
        item_to_category.push(cat);
    }
    let catalog = Catalog::from_parts(items, categories, item_to_category)?;

    let load = |name: &str| -> Result<Vec<Session>> {
        let path = dir.join(format!("{name}.tsv"));
        let mut sessions: Vec<Session> = Vec::new();
        for row in read_tsv(&path, 4)? {
            let bad = |reason: String| Error::malformed(path.display().to_string(), reason);
            let item = catalog
                .item_index(&row[1])
                .ok_or_else(|| bad(format!("item {:?} not in catalog", row[1])))?;
            let ts: i64 = row[3]
                .parse()
                .map_err(|_| bad(format!("bad timestamp {:?}", row[3])))?;
            match sessions.last_mut() {
                Some(s) if s.id == row[0] => {
                    s.items.push(item);
                    s.categories.push(catalog.category_of(item));
                    s.timestamps.push(ts);
                }
                _ => sessions.push(Session {
                    id: row[0].clone(),
                    items: vec![item],
                    categories: vec![catalog.category_of(item)],
                    timestamps: vec![ts],
                    start_time: ts,
                }),
            }
        }
        Ok(sessions)
    };

    let dataset = SplitDataset {
        train: load("train")?,
        validation: load("validation")?,
        test: load("test")?,
        catalog: catalog.clone(),
        boundary: manifest.boundary,
    };
    Ok((dataset, manifest))
}

fn partitions(ds: &SplitDataset) -> [(&'static str, &[Session]); 3] {
    [
        ("train", &ds.train),
        ("validation", &ds.validation),
        ("test", &ds.test),
    ]
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(BufWriter::new(file)))
}

fn flush(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))?;
    let inner = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn read_tsv(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(file);
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != columns {
            return Err(Error::malformed(
                path.display().to_string(),
                format!("expected {columns} columns, found {}", row.len()),
            ));
        }
        rows.push(row.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}
