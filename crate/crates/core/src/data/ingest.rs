use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::InteractionRecord;
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["session_id", "item_id", "category_id", "timestamp"];

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Fail on the first malformed row instead of skipping it.
    pub strict: bool,
    /// Force a delimiter; by default it is detected from the header line
    /// (tab if the header contains one, comma otherwise).
    pub delimiter: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// Sorted by `(session_id, timestamp)`, file order within ties.
    pub records: Vec<InteractionRecord>,
    pub skipped: usize,
    /// 1-based line numbers of skipped rows.
    pub skipped_lines: Vec<u64>,
}

pub fn ingest(path: impl AsRef<Path>, options: IngestOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, options)
}

/// Same as [`ingest`] over any reader; `source` only labels error messages.
pub fn ingest_reader<R: Read>(
    reader: R,
    source: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<Ingested> {
    let source = source.as_ref();
    let mut reader = BufReader::new(reader);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(source, e))?;
    let header = header.trim_end_matches(['\r', '\n']);
    let delimiter = options
        .delimiter
        .unwrap_or(if header.contains('\t') { b'\t' } else { b',' });
    let columns: Vec<&str> = header.split(delimiter as char).map(str::trim).collect();
    if columns != HEADER {
        return Err(Error::BadHeader {
            path: source.to_owned(),
            found: header.to_owned(),
        });
    }

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(reader);

    let mut records = Vec::new();
    let mut skipped_lines = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    for row in csv.records() {
        let row = row?;
        // Line 1 is the header; csv counts from the first data line.
        let line = row.position().map_or(0, |p| p.line() + 1);
        let record = match parse_row(&row) {
            Ok(r) => r,
            Err(reason) if options.strict => {
                return Err(Error::MalformedRow {
                    path: source.to_owned(),
                    line,
                    reason,
                })
            }
            Err(reason) => {
                log::debug!("{}:{line}: skipping row: {reason}", source.display());
                skipped_lines.push(line);
                continue;
            }
        };
        match seen.get(&record.item_id) {
            Some(prev) if *prev != record.category_id => {
                return Err(Error::CategoryConflict {
                    item_id: record.item_id,
                    first: prev.clone(),
                    second: record.category_id,
                })
            }
            Some(_) => {}
            None => {
                seen.insert(record.item_id.clone(), record.category_id.clone());
            }
        }
        records.push(record);
    }
    if !skipped_lines.is_empty() {
        log::warn!(
            "{}: skipped {} malformed rows",
            source.display(),
            skipped_lines.len()
        );
    }

    records.sort_by(|a, b| {
        a.session_id
            .cmp(&b.session_id)
            .then(a.timestamp.cmp(&b.timestamp))
    });
    Ok(Ingested {
        records,
        skipped: skipped_lines.len(),
        skipped_lines,
    })
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<InteractionRecord, String> {
    if row.len() != 4 {
        return Err(format!("expected 4 columns, found {}", row.len()));
    }
    let field = |i: usize| {
        let v = row[i].trim();
        if v.is_empty() {
            Err(format!("empty {}", HEADER[i]))
        } else {
            Ok(v.to_owned())
        }
    };
    let ts_raw = field(3)?;
    let timestamp: i64 = ts_raw
        .parse()
        .map_err(|_| format!("unparsable timestamp {ts_raw:?}"))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(InteractionRecord {
        session_id: field(0)?,
        item_id: field(1)?,
        category_id: field(2)?,
        timestamp,
    })
}
