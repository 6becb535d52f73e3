//! Maximal marginal relevance re-ranking over model scores.
//!
//! From the top-K raw candidates, items are chosen greedily by
//! `λ·rel(c) − (1 − λ)·max_{s ∈ selected} sim(c, s)` with `rel` min-max
//! normalized over the pool and `sim` the binary same-category indicator.
//! `λ = 1` is plain relevance ranking; `λ = 0` takes a new category whenever
//! one is left.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::metrics::RecList;
use crate::model::{recommend, ScoreVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmrConfig {
    /// Relevance/diversity trade-off in `[0, 1]`.
    pub lambda: f64,
    /// Number of top raw-score candidates considered.
    pub pool_size: usize,
    /// Length of the produced list.
    pub output_len: usize,
}

impl Default for MmrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            pool_size: 100,
            output_len: 10,
        }
    }
}

impl MmrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "MMR lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.output_len == 0 {
            return Err(Error::config("MMR output length must be positive"));
        }
        if self.output_len > self.pool_size {
            return Err(Error::config(format!(
                "MMR output length {} exceeds pool size {}",
                self.output_len, self.pool_size
            )));
        }
        Ok(())
    }
}

pub fn mmr_rerank(scores: &ScoreVector, catalog: &Catalog, config: &MmrConfig) -> Result<RecList> {
    config.validate()?;
    if scores.is_empty() || config.pool_size == 0 {
        return Err(Error::Empty("candidate pool"));
    }
    if scores.len() != catalog.item_count() {
        return Err(Error::ShapeMismatch {
            name: "scores".into(),
            expected: vec![catalog.item_count()],
            found: vec![scores.len()],
        });
    }
    let pool = recommend(scores, config.pool_size.min(scores.len()))?;
    let pool = pool.items();
    if config.output_len > pool.len() {
        return Err(Error::config(format!(
            "MMR output length {} exceeds the {} available candidates",
            config.output_len,
            pool.len()
        )));
    }

    let raw: Vec<f64> = pool.iter().map(|&i| scores.scores[i]).collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let rel: Vec<f64> = raw
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 1.0 })
        .collect();

    let lambda = config.lambda;
    let mut taken = vec![false; pool.len()];
    let mut seen_category = vec![false; catalog.category_count()];
    let mut out = Vec::with_capacity(config.output_len);
    for _ in 0..config.output_len {
        let mut best: Option<(usize, f64)> = None;
        for (k, &item) in pool.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let sim = if seen_category[catalog.category_of(item)] {
                1.0
            } else {
                0.0
            };
            let value = lambda * rel[k] - (1.0 - lambda) * sim;
            // Ties: higher raw score, then lower item index.
            let better = match best {
                None => true,
                Some((b, bv)) => {
                    value > bv
                        || (value == bv
                            && (raw[k] > raw[b] || (raw[k] == raw[b] && item < pool[b])))
                }
            };
            if better {
                best = Some((k, value));
            }
        }
        let (k, _) = best.expect("pool has unselected candidates");
        taken[k] = true;
        seen_category[catalog.category_of(pool[k])] = true;
        out.push(pool[k]);
    }
    Ok(RecList::new_unchecked(out))
}

/// Score rows read from a scores file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub query_id: String,
    pub scores: ScoreVector,
}

/// Reads a scores file: a tab-separated header `query_id, <item_id>…` listing
/// the catalog items in index order, then one row per query with a raw
/// score per item.
pub fn read_scores_file(path: &Path, catalog: &Catalog) -> Result<Vec<ScoreRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |reason: String| Error::malformed(path.display().to_string(), reason);
    let header = lines
        .next()
        .ok_or_else(|| bad("missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let columns: Vec<&str> = header.split('\t').collect();
    if columns.first() != Some(&"query_id") || columns[1..] != *catalog.items() {
        return Err(bad("header must be query_id followed by the catalog item ids".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_owned();
        let scores = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        if scores.len() != catalog.item_count() {
            return Err(bad(format!(
                "line {}: expected {} scores, found {}",
                k + 2,
                catalog.item_count(),
                scores.len()
            )));
        }
        rows.push(ScoreRow {
            query_id: id,
            scores: ScoreVector::raw(scores),
        });
    }
    Ok(rows)
}

pub fn write_scores_file(path: &Path, catalog: &Catalog, rows: &[ScoreRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "query_id").map_err(io)?;
    for id in catalog.items() {
        write!(w, "\t{id}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for row in rows {
        write!(w, "{}", row.query_id).map_err(io)?;
        for s in &row.scores.scores {
            write!(w, "\t{s}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes lists as `query_id, rank, item_index, item_id, category_id` rows.
pub fn write_rec_lists(path: &Path, catalog: &Catalog, lists: &[(String, RecList)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "query_id\trank\titem_index\titem_id\tcategory_id").map_err(io)?;
    for (id, rec) in lists {
        for (rank, &item) in rec.items().iter().enumerate() {
            writeln!(
                w,
                "{id}\t{}\t{item}\t{}\t{}",
                rank + 1,
                catalog.item_id(item),
                catalog.category_id(catalog.category_of(item))
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Re-ranks every row of a scores file and writes the resulting lists.
pub fn rerank_file(
    scores_path: &Path,
    catalog: &Catalog,
    config: &MmrConfig,
    out_path: &Path,
) -> Result<usize> {
    let rows = read_scores_file(scores_path, catalog)?;
    let lists = rows
        .iter()
        .map(|r| Ok((r.query_id.clone(), mmr_rerank(&r.scores, catalog, config)?)))
        .collect::<Result<Vec<_>>>()?;
    write_rec_lists(out_path, catalog, &lists)?;
    Ok(lists.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::diversity_score;
    use proptest::prelude::*;

    fn cfg(lambda: f64, pool: usize, n: usize) -> MmrConfig {
        MmrConfig {
            lambda,
            pool_size: pool,
            output_len: n,
        }
    }

    #[test]
    fn hand_enumerated_three_items() {
        let catalog = Catalog::from_category_map(vec![0, 0, 1]).unwrap();
        let scores = ScoreVector::raw(vec![0.9, 0.8, 0.7]);
        // rel after min-max: (1, 0.5, 0). Step 2: item1 → 0.25 − 0.5, item2 → 0.
        let rec = mmr_rerank(&scores, &catalog, &cfg(0.5, 100, 2)).unwrap();
        assert_eq!(rec.items(), [0, 2]);
    }

    #[test]
    fn lambda_one_is_plain_top_n() {
        let catalog = Catalog::from_category_map(vec![0, 0, 1, 1, 2]).unwrap();
        let scores = ScoreVector::raw(vec![0.3, 0.9, 0.3, 0.1, 0.5]);
        let rec = mmr_rerank(&scores, &catalog, &cfg(1.0, 5, 4)).unwrap();
        assert_eq!(rec, recommend(&scores, 4).unwrap());
    }

    #[test]
    fn config_errors() {
        let catalog = Catalog::from_category_map(vec![0, 1]).unwrap();
        let scores = ScoreVector::raw(vec![0.3, 0.9]);
        assert!(mmr_rerank(&scores, &catalog, &cfg(1.5, 2, 1)).is_err());
        assert!(mmr_rerank(&scores, &catalog, &cfg(0.5, 1, 2)).is_err());
        assert!(mmr_rerank(&scores, &catalog, &cfg(0.5, 5, 3)).is_err());
        assert!(mmr_rerank(&ScoreVector::raw(vec![]), &catalog, &cfg(0.5, 5, 1)).is_err());
    }

    #[test]
    fn scores_file_round_trip_and_rerank() {
        let catalog = Catalog::from_category_map(vec![0, 0, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let scores_path = dir.path().join("scores.tsv");
        let rows = vec![ScoreRow {
            query_id: "q1".into(),
            scores: ScoreVector::raw(vec![0.9, 0.8, 0.7]),
        }];
        write_scores_file(&scores_path, &catalog, &rows).unwrap();
        assert_eq!(read_scores_file(&scores_path, &catalog).unwrap(), rows);
        let out = dir.path().join("lists.tsv");
        assert_eq!(rerank_file(&scores_path, &catalog, &cfg(0.5, 3, 2), &out).unwrap(), 1);
        let text = std::fs::read_to_string(out).unwrap();
        assert_eq!(
            text,
            "query_id\trank\titem_index\titem_id\tcategory_id\n\
             q1\t1\t0\ti00000\tc0000\nq1\t2\t2\ti00002\tc0001\n"
        );
    }

    fn pool_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, usize)> {
        (5usize..40).prop_flat_map(|m| {
            (
                prop::collection::vec(-3.0f64..3.0, m),
                prop::collection::vec(0usize..6, m),
                1usize..=m.min(12),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn no_duplicates_and_exact_length((scores, cats, n) in pool_strategy(), lambda in 0.0f64..=1.0) {
            let catalog = Catalog::from_category_map(cats).unwrap();
            let rec = mmr_rerank(&ScoreVector::raw(scores), &catalog, &cfg(lambda, 100, n)).unwrap();
            prop_assert_eq!(rec.len(), n);
            prop_assert!(RecList::new(rec.items().to_vec()).is_ok());
        }

        #[test]
        fn diversifies_at_or_below_half((scores, cats, n) in pool_strategy(), lambda in 0.0f64..=0.5) {
            let distinct = { let mut c = cats.clone(); c.sort(); c.dedup(); c.len() };
            prop_assume!(distinct >= 2);
            let catalog = Catalog::from_category_map(cats).unwrap();
            let scores = ScoreVector::raw(scores);
            let mmr = mmr_rerank(&scores, &catalog, &cfg(lambda, 100, n)).unwrap();
            let top = recommend(&scores, n).unwrap();
            prop_assert!(diversity_score(&mmr, &catalog) >= diversity_score(&top, &catalog));
        }

        #[test]
        fn lambda_zero_takes_unseen_categories_first((scores, cats, n) in pool_strategy()) {
            let catalog = Catalog::from_category_map(cats.clone()).unwrap();
            let rec = mmr_rerank(&ScoreVector::raw(scores), &catalog, &cfg(0.0, 100, n)).unwrap();
            let pool_cats: std::collections::HashSet<usize> = cats.iter().copied().collect();
            let mut seen = std::collections::HashSet::new();
            for &item in rec.items() {
                let c = catalog.category_of(item);
                if seen.len() < pool_cats.len() {
                    prop_assert!(!seen.contains(&c));
                }
                seen.insert(c);
            }
        }
    }
}
