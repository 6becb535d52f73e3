use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Catalog, InteractionRecord, Session, SplitDataset, TrainingInstance};
use crate::error::{Error, Result};

pub const DAY_SECS: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Items seen fewer times than this (over the whole log) are dropped.
    pub min_item_support: usize,
    /// Width of the test window, and of the validation window before it.
    pub split_boundary_secs: i64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_item_support: 5,
            split_boundary_secs: 7 * DAY_SECS,
        }
    }
}

/// Timestamps the partitions were cut at. Sessions are assigned by start
/// time: `test_start <= start` is test, `validation_start <= start <
/// test_start` is validation, anything earlier is train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundary {
    pub max_timestamp: i64,
    pub validation_start: i64,
    pub test_start: i64,
}

#[derive(Debug, Clone)]
struct RawSession {
    id: String,
    // (interned item, timestamp), chronological
    events: Vec<(usize, i64)>,
}

impl RawSession {
    fn start(&self) -> i64 {
        self.events[0].1
    }
}

/// Filters the log and cuts it into train/validation/test.
///
/// Item-support and session-length filtering run to a joint fixed point.
/// After the temporal split, validation/test events whose item never occurs
/// in train are dropped; because that can shorten sessions and move the
/// maximum timestamp, the whole filter → split → drop cycle is repeated until
/// nothing changes. The result is therefore a fixed point: feeding its
/// records back in reproduces it exactly.
pub fn preprocess(records: &[InteractionRecord], config: PreprocessConfig) -> Result<SplitDataset> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    if config.split_boundary_secs <= 0 {
        return Err(Error::config("split boundary must be positive"));
    }

    // Intern item ids and remember each item's category.
    let mut item_ids: Vec<&str> = Vec::new();
    let mut item_cats: Vec<&str> = Vec::new();
    let mut lookup: HashMap<&str, usize> = HashMap::new();
    let mut grouped: BTreeMap<&str, Vec<(usize, i64)>> = BTreeMap::new();
    for r in records {
        if r.timestamp < 0 {
            return Err(Error::malformed(
                "interaction record",
                format!("negative timestamp for item {:?}", r.item_id),
            ));
        }
        let idx = match lookup.get(r.item_id.as_str()) {
            Some(&i) => {
                if item_cats[i] != r.category_id {
                    return Err(Error::CategoryConflict {
                        item_id: r.item_id.clone(),
                        first: item_cats[i].to_owned(),
                        second: r.category_id.clone(),
                    });
                }
                i
            }
            None => {
                let i = item_ids.len();
                item_ids.push(&r.item_id);
                item_cats.push(&r.category_id);
                lookup.insert(&r.item_id, i);
                i
            }
        };
        grouped
            .entry(r.session_id.as_str())
            .or_default()
            .push((idx, r.timestamp));
    }
    let mut sessions: Vec<RawSession> = grouped
        .into_iter()
        .map(|(id, mut events)| {
            events.sort_by_key(|&(_, ts)| ts);
            RawSession {
                id: id.to_owned(),
                events,
            }
        })
        .collect();

    let (train, validation, test, boundary) = loop {
        filter_to_fixed_point(&mut sessions, item_ids.len(), config.min_item_support);
        if sessions.is_empty() {
            return Err(Error::EmptyPartition {
                train: 0,
                validation: 0,
                test: 0,
            });
        }
        let max_timestamp = sessions
            .iter()
            .flat_map(|s| s.events.iter().map(|&(_, ts)| ts))
            .max()
            .expect("non-empty sessions");
        let test_start = max_timestamp - config.split_boundary_secs;
        let boundary = SplitBoundary {
            max_timestamp,
            validation_start: test_start - config.split_boundary_secs,
            test_start,
        };

        let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for s in sessions.drain(..) {
            if s.start() >= boundary.test_start {
                test.push(s);
            } else if s.start() >= boundary.validation_start {
                validation.push(s);
            } else {
                train.push(s);
            }
        }

        let known: HashSet<usize> = train
            .iter()
            .flat_map(|s| s.events.iter().map(|&(i, _)| i))
            .collect();
        let dropped_val = drop_unknown(&mut validation, &known);
        let dropped_test = drop_unknown(&mut test, &known);
        if !dropped_val && !dropped_test {
            break (train, validation, test, boundary);
        }
        sessions = train.into_iter().chain(validation).chain(test).collect();
    };

    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyPartition {
            train: train.len(),
            validation: validation.len(),
            test: test.len(),
        });
    }

    let catalog = Catalog::from_pairs(
        train
            .iter()
            .flat_map(|s| s.events.iter())
            .map(|&(i, _)| (item_ids[i], item_cats[i])),
    )?;
    let to_catalog: Vec<Option<usize>> = item_ids.iter().map(|id| catalog.item_index(id)).collect();
    let convert = |raw: Vec<RawSession>| -> Vec<Session> {
        let mut out: Vec<Session> = raw
            .into_iter()
            .map(|s| {
                let items: Vec<usize> = s
                    .events
                    .iter()
                    .map(|&(i, _)| to_catalog[i].expect("closed vocabulary"))
                    .collect();
                Session {
                    start_time: s.start(),
                    categories: items.iter().map(|&i| catalog.category_of(i)).collect(),
                    timestamps: s.events.iter().map(|&(_, ts)| ts).collect(),
                    items,
                    id: s.id,
                }
            })
            .collect();
        out.sort_by(|a, b| a.start_time.cmp(&b.start_time).then_with(|| a.id.cmp(&b.id)));
        out
    };

    Ok(SplitDataset {
        train: convert(train),
        validation: convert(validation),
        test: convert(test),
        catalog: catalog.clone(),
        boundary,
    })
}

fn filter_to_fixed_point(sessions: &mut Vec<RawSession>, item_count: usize, min_support: usize) {
    loop {
        let mut support = vec![0usize; item_count];
        for s in sessions.iter() {
            for &(i, _) in &s.events {
                support[i] += 1;
            }
        }
        let mut changed = false;
        for s in sessions.iter_mut() {
            let before = s.events.len();
            s.events.retain(|&(i, _)| support[i] >= min_support);
            changed |= s.events.len() != before;
        }
        let before = sessions.len();
        sessions.retain(|s| s.events.len() >= 2);
        changed |= sessions.len() != before;
        if !changed {
            return;
        }
    }
}

/// Removes events with items outside `known`, then sessions shorter than 2.
/// Returns whether anything was removed.
fn drop_unknown(sessions: &mut Vec<RawSession>, known: &HashSet<usize>) -> bool {
    let mut changed = false;
    for s in sessions.iter_mut() {
        let before = s.events.len();
        s.events.retain(|(i, _)| known.contains(i));
        changed |= s.events.len() != before;
    }
    let before = sessions.len();
    sessions.retain(|s| s.events.len() >= 2);
    changed || sessions.len() != before
}

/// Expands each session `[i1, …, in]` into the `n − 1` prefix/target pairs
/// `([i1], i2), ([i1, i2], i3), …`, in session order then prefix length.
pub fn split_sequences(sessions: &[Session]) -> Vec<TrainingInstance> {
    let mut out = Vec::with_capacity(sessions.iter().map(|s| s.len().saturating_sub(1)).sum());
    for s in sessions {
        for end in 1..s.items.len() {
            out.push(TrainingInstance {
                prefix: s.items[..end].to_vec(),
                prefix_categories: s.categories[..end].to_vec(),
                target: s.items[end],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str, i: &str, t: i64) -> InteractionRecord {
        InteractionRecord::new(s, i, format!("cat-{i}"), t)
    }

    fn cfg(min: usize, boundary: i64) -> PreprocessConfig {
        PreprocessConfig {
            min_item_support: min,
            split_boundary_secs: boundary,
        }
    }

    #[test]
    fn length_one_sessions_removed() {
        // {[A], [A,B], [B,C,B]} plus one later test session.
        let records = vec![
            rec("s1", "A", 0),
            rec("s2", "A", 10),
            rec("s2", "B", 11),
            rec("s3", "B", 20),
            rec("s3", "C", 21),
            rec("s3", "B", 22),
            rec("t1", "A", 1000),
            rec("t1", "B", 1001),
        ];
        let ds = preprocess(&records, cfg(1, 100)).unwrap();
        let train_ids: Vec<_> = ds.train.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(train_ids, ["s2", "s3"]);
        assert_eq!(ds.test.len(), 1);
    }

    #[test]
    fn low_support_item_removed_everywhere() {
        let mut records = Vec::new();
        // A, B frequent; D only three times.
        for k in 0..5 {
            let s = format!("s{k}");
            records.push(rec(&s, "A", k * 10));
            records.push(rec(&s, "B", k * 10 + 1));
        }
        records.push(rec("s0", "D", 2));
        records.push(rec("x", "D", 50));
        records.push(rec("x", "A", 51));
        records.push(rec("y", "D", 60));
        records.push(rec("t", "A", 1000));
        records.push(rec("t", "B", 1001));
        let ds = preprocess(&records, cfg(5, 100)).unwrap();
        assert!(ds.catalog.item_index("D").is_none());
        // "x" shrank to [A] and was removed; "y" was [D].
        assert!(ds.train.iter().all(|s| s.id != "x" && s.id != "y"));
        assert!(ds.train.iter().all(|s| s.len() >= 2));
    }

    #[test]
    fn unseen_test_items_dropped() {
        let records = vec![
            rec("a", "A", 0),
            rec("a", "B", 1),
            rec("t", "A", 1000),
            rec("t", "Z", 1001),
            rec("t", "B", 1002),
        ];
        let ds = preprocess(&records, cfg(1, 100)).unwrap();
        assert_eq!(ds.test[0].items.len(), 2);
        assert!(ds.catalog.item_index("Z").is_none());
    }

    #[test]
    fn empty_test_partition_is_error() {
        // A single session puts everything into test; train is empty.
        let records = vec![rec("a", "A", 0), rec("a", "B", 1)];
        assert!(matches!(
            preprocess(&records, cfg(1, 100)),
            Err(Error::EmptyPartition { train: 0, .. })
        ));
    }

    #[test]
    fn split_sequences_counts() {
        let s = |items: Vec<usize>| Session {
            id: "s".into(),
            categories: vec![0; items.len()],
            timestamps: vec![0; items.len()],
            start_time: 0,
            items,
        };
        let one = split_sequences(&[s(vec![1, 2])]);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].prefix, vec![1]);
        assert_eq!(one[0].target, 2);

        let three = split_sequences(&[s(vec![1, 2, 3])]);
        assert_eq!(
            three.iter().map(|t| (t.prefix.clone(), t.target)).collect::<Vec<_>>(),
            vec![(vec![1], 2), (vec![1, 2], 3)]
        );

        assert_eq!(split_sequences(&[s(vec![0, 1]), s(vec![0, 1, 2, 3])]).len(), 4);
    }
}
