//! Comparison tables over the reports of a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Variant;
use crate::error::{Error, Result};
use crate::metrics::ReportFile;

const ACCURACY: [&str; 3] = ["HR", "MRR", "NDCG"];
const DIVERSITY: [&str; 3] = ["ILD", "Entropy", "DS"];

/// Machine-readable form of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Row labels (report `model_id`s), in table order.
    pub rows: Vec<String>,
    /// Column keys such as `HR@10` or `F1(HR,ILD)@10`.
    pub columns: Vec<String>,
    /// `values[row][column]`; `None` where a report lacks the metric.
    pub values: Vec<Vec<Option<f64>>>,
    /// `(v − v_baseline) / v_baseline` for every non-baseline row, keyed by
    /// row label. Present only when a row named `baseline` exists; `None`
    /// where the baseline value is zero.
    pub relative_to_baseline: BTreeMap<String, Vec<Option<f64>>>,
}

fn collect_reports(dir: &Path) -> Result<Vec<(PathBuf, ReportFile)>> {
    let mut found = Vec::new();
    let direct = dir.join("report.json");
    if direct.is_file() {
        found.push(direct);
    }
    for sub in ["variants", "sweep"] {
        let parent = dir.join(sub);
        if !parent.is_dir() {
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(&parent)
            .map_err(|e| Error::io(&parent, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("report.json").is_file())
            .collect();
        children.sort_by_key(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let rank = name
                .parse::<Variant>()
                .ok()
                .and_then(|v| Variant::ALL.iter().position(|&a| a == v))
                .unwrap_or(Variant::ALL.len());
            let lambda = name
                .strip_prefix("lambda_")
                .and_then(|l| l.parse::<f64>().ok())
                .unwrap_or(f64::NAN);
            (rank, ordered(lambda), name)
        });
        found.extend(children.into_iter().map(|p| p.join("report.json")));
    }
    if found.is_empty() {
        return Err(Error::Empty("results directory holds no report.json"));
    }
    found
        .into_iter()
        .map(|p| ReportFile::read(&p).map(|r| (p, r)))
        .collect()
}

/// Sort key for an `f64` that keeps NaN last.
fn ordered(x: f64) -> (bool, i64) {
    (x.is_nan(), if x.is_nan() { 0 } else { (x * 1e9) as i64 })
}

fn columns_for(reports: &[(PathBuf, ReportFile)]) -> Vec<(usize, Vec<(String, String)>)> {
    // (cutoff, [(group, key)]) using the first report's cutoffs and betas.
    let first = &reports[0].1;
    first
        .cutoffs
        .iter()
        .map(|&n| {
            let mut cols = Vec::new();
            for m in ACCURACY {
                cols.push(("accuracy".to_owned(), format!("{m}@{n}")));
            }
            for m in DIVERSITY {
                cols.push(("diversity".to_owned(), format!("{m}@{n}")));
            }
            cols.push(("comprehensive".to_owned(), format!("F1(HR,ILD)@{n}")));
            for b in &first.betas {
                cols.push(("comprehensive".to_owned(), format!("F{b}(HR,DS)@{n}")));
            }
            (n, cols)
        })
        .collect()
}

/// Builds the comparison for every report under `dir` without writing.
pub fn compare(dir: &Path) -> Result<(Comparison, String)> {
    let reports = collect_reports(dir)?;
    let blocks = columns_for(&reports);
    let rows: Vec<String> = reports.iter().map(|(_, r)| r.metadata.model_id.clone()).collect();
    let columns: Vec<String> = blocks
        .iter()
        .flat_map(|(_, cols)| cols.iter().map(|(_, k)| k.clone()))
        .collect();
    let values: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|(_, r)| columns.iter().map(|k| r.metrics.get(k).copied()).collect())
        .collect();

    let baseline = rows.iter().position(|r| r == "baseline");
    let mut relative = BTreeMap::new();
    if let Some(b) = baseline {
        for (i, row) in rows.iter().enumerate() {
            if i == b {
                continue;
            }
            let rel = values[i]
                .iter()
                .zip(&values[b])
                .map(|(v, base)| match (v, base) {
                    (Some(v), Some(base)) if *base != 0.0 => Some((v - base) / base),
                    _ => None,
                })
                .collect();
            relative.insert(row.clone(), rel);
        }
    }

    let comparison = Comparison {
        rows,
        columns,
        values,
        relative_to_baseline: relative,
    };
    let text = render_text(&comparison, &blocks, baseline);
    Ok((comparison, text))
}

/// Separator printed before column `k`: a bar where a group starts.
fn group_sep(cols: &[(String, String)], k: usize, group: &str) -> &'static str {
    if k == 0 {
        "|"
    } else if cols[k - 1].0 != group {
        " |"
    } else {
        " "
    }
}

fn short(key: &str) -> &str {
    key.rsplit_once('@').map_or(key, |(m, _)| m)
}

fn render_text(c: &Comparison, blocks: &[(usize, Vec<(String, String)>)], baseline: Option<usize>) -> String {
    let label_w = c
        .rows
        .iter()
        .map(|r| r.chars().count() + 8)
        .chain([10])
        .max()
        .unwrap_or(10);
    let mut out = String::new();
    let mut offset = 0;
    for (n, cols) in blocks {
        let widths: Vec<usize> = cols.iter().map(|(_, k)| short(k).len().max(8) + 2).collect();
        let _ = writeln!(out, "== cutoff @{n} ==");

        // Group header: name centered over its span, separated by '|'.
        let _ = write!(out, "{:label_w$}", "");
        let mut k = 0;
        while k < cols.len() {
            let group = &cols[k].0;
            let span: usize = cols[k..]
                .iter()
                .zip(&widths[k..])
                .take_while(|((g, _), _)| g == group)
                .map(|(_, w)| w)
                .sum();
            let count = cols[k..].iter().take_while(|(g, _)| g == group).count();
            let _ = write!(out, "{}{group:^span$}", if k == 0 { "|" } else { " |" });
            k += count;
        }
        out.push('\n');

        let _ = write!(out, "{:<label_w$}", "model");
        for (k, (group, key)) in cols.iter().enumerate() {
            let sep = group_sep(cols, k, group);
            let w = widths[k] - 1;
            let _ = write!(out, "{sep}{:>w$}", short(key));
        }
        out.push('\n');

        let best: Vec<Option<f64>> = (0..cols.len())
            .map(|k| {
                c.values
                    .iter()
                    .filter_map(|row| row[offset + k])
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            })
            .collect();

        for (r, row) in c.rows.iter().enumerate() {
            let _ = write!(out, "{row:<label_w$}");
            for (k, (group, _)) in cols.iter().enumerate() {
                let sep = group_sep(cols, k, group);
                let w = widths[k] - 1;
                let cell = match c.values[r][offset + k] {
                    Some(v) if Some(v) == best[k] => format!("{v:.4}*"),
                    Some(v) => format!("{v:.4} "),
                    None => "- ".to_owned(),
                };
                let _ = write!(out, "{sep}{cell:>w$}");
            }
            out.push('\n');
        }

        if let Some(b) = baseline {
            for (r, row) in c.rows.iter().enumerate() {
                if r == b {
                    continue;
                }
                let rel = &c.relative_to_baseline[row];
                let _ = write!(out, "{:<label_w$}", format!("{row} vs base"));
                for (k, (group, _)) in cols.iter().enumerate() {
                    let sep = group_sep(cols, k, group);
                    let w = widths[k] - 1;
                    let cell = match rel[offset + k] {
                        Some(v) => format!("{:+.1}% ", v * 100.0),
                        None => "n/a ".to_owned(),
                    };
                    let _ = write!(out, "{sep}{cell:>w$}");
                }
                out.push('\n');
            }
        }
        out.push('\n');
        offset += cols.len();
    }
    out.push_str("* best value in column\n");
    out
}

/// Renders `comparison.txt` and `comparison.json` for every report found in
/// `dir` (the directory itself, `variants/*` and `sweep/*`) and returns the
/// text table.
pub fn render_report(dir: &Path) -> Result<String> {
    let (comparison, text) = compare(dir)?;
    let txt = dir.join("comparison.txt");
    fs::write(&txt, &text).map_err(|e| Error::io(&txt, e))?;
    let json = dir.join("comparison.json");
    let body = serde_json::to_string_pretty(&comparison).map_err(|source| Error::Json {
        path: json.clone(),
        source,
    })?;
    fs::write(&json, body + "\n").map_err(|e| Error::io(&json, e))?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RunMetadata;

    fn report(id: &str, ild: f64) -> ReportFile {
        let mut metrics = BTreeMap::new();
        for (k, v) in [
            ("HR@10", 0.4),
            ("MRR@10", 0.2),
            ("NDCG@10", 0.25),
            ("ILD@10", ild),
            ("Entropy@10", 0.5),
            ("DS@10", 0.2),
            ("F1(HR,ILD)@10", 0.1),
            ("F0.5(HR,DS)@10", 0.3),
        ] {
            metrics.insert(k.to_owned(), v);
        }
        ReportFile {
            metadata: RunMetadata {
                model_id: id.to_owned(),
                ..Default::default()
            },
            session_count: 3,
            cutoffs: vec![10],
            betas: vec![0.5],
            metrics,
        }
    }

    fn write(dir: &Path, sub: &str, r: &ReportFile) {
        let d = dir.join("variants").join(sub);
        fs::create_dir_all(&d).unwrap();
        r.write(&d.join("report.json")).unwrap();
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(render_report(dir.path()), Err(Error::Empty(_))));
    }

    #[test]
    fn single_report_is_best_everywhere() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "baseline", &report("baseline", 0.1));
        let text = render_report(dir.path()).unwrap();
        let row = text.lines().find(|l| l.starts_with("baseline")).unwrap();
        assert_eq!(row.matches('*').count(), 8, "{text}");
        assert!(text.contains("accuracy") && text.contains("diversity") && text.contains("comprehensive"));
    }

    #[test]
    fn larger_ild_is_flagged_and_relative_change_is_consistent() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "baseline", &report("baseline", 0.1));
        write(dir.path(), "dl", &report("+DL", 0.3));
        let (cmp, text) = compare(dir.path()).unwrap();
        assert_eq!(cmp.rows, vec!["baseline", "+DL"]);
        let col = cmp.columns.iter().position(|c| c == "ILD@10").unwrap();
        let rel = cmp.relative_to_baseline["+DL"][col].unwrap();
        assert!((rel - 2.0).abs() < 1e-12);
        assert!(text.contains("0.3000*"));
        assert!(text.contains("0.1000 "));
        assert!(text.contains("+200.0%"));
    }

    #[test]
    fn malformed_report_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("variants").join("dl");
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("report.json"), "{ not json").unwrap();
        assert!(matches!(render_report(dir.path()), Err(Error::Json { .. })));
    }
}
