use std::collections::HashMap;

use crate::error::{Error, Result};

/// Item and category vocabularies with the item → category map.
///
/// Indices are dense. When built from raw ids with [`Catalog::from_pairs`],
/// both vocabularies are ordered lexicographically by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    items: Vec<String>,
    categories: Vec<String>,
    item_to_category: Vec<usize>,
    item_lookup: HashMap<String, usize>,
    category_lookup: HashMap<String, usize>,
}

impl Catalog {
    /// Builds a catalog from `(item_id, category_id)` pairs. Duplicate pairs
    /// are fine; an item listed with two different categories is an error.
    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut map: std::collections::BTreeMap<String, String> = Default::default();
        for (item, cat) in pairs {
            let (item, cat) = (item.as_ref(), cat.as_ref());
            match map.get(item) {
                Some(prev) if prev != cat => {
                    return Err(Error::CategoryConflict {
                        item_id: item.to_owned(),
                        first: prev.clone(),
                        second: cat.to_owned(),
                    })
                }
                Some(_) => {}
                None => {
                    map.insert(item.to_owned(), cat.to_owned());
                }
            }
        }
        let mut categories: Vec<String> = map.values().cloned().collect();
        categories.sort();
        categories.dedup();
        let category_lookup: HashMap<String, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        let items: Vec<String> = map.keys().cloned().collect();
        let item_to_category = map.values().map(|c| category_lookup[c]).collect();
        Self::from_parts(items, categories, item_to_category)
    }

    /// Builds a catalog from explicit vocabularies, keeping their order.
    pub fn from_parts(
        items: Vec<String>,
        categories: Vec<String>,
        item_to_category: Vec<usize>,
    ) -> Result<Self> {
        if items.len() != item_to_category.len() {
            return Err(Error::ShapeMismatch {
                name: "item_to_category".into(),
                expected: vec![items.len()],
                found: vec![item_to_category.len()],
            });
        }
        if let Some(&bad) = item_to_category.iter().find(|&&c| c >= categories.len()) {
            return Err(Error::IndexOutOfRange {
                what: "categories",
                index: bad,
                size: categories.len(),
            });
        }
        let item_lookup = index_of(&items, "item")?;
        let category_lookup = index_of(&categories, "category")?;
        Ok(Self {
            items,
            categories,
            item_to_category,
            item_lookup,
            category_lookup,
        })
    }

    /// A catalog with generated ids (`i0000…`, `c000…`) from a bare
    /// item → category index map. Handy for synthetic data and tests.
    pub fn from_category_map(item_to_category: Vec<usize>) -> Result<Self> {
        let n = item_to_category.iter().map(|&c| c + 1).max().unwrap_or(0);
        let items = (0..item_to_category.len())
            .map(|i| format!("i{i:05}"))
            .collect();
        let categories = (0..n).map(|c| format!("c{c:04}")).collect();
        Self::from_parts(items, categories, item_to_category)
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    /// Category index of an item. Panics if `item` is out of range.
    pub fn category_of(&self, item: usize) -> usize {
        self.item_to_category[item]
    }

    pub fn item_to_category(&self) -> &[usize] {
        &self.item_to_category
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn category_id(&self, category: usize) -> &str {
        &self.categories[category]
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_lookup.get(item_id).copied()
    }

    pub fn category_index(&self, category_id: &str) -> Option<usize> {
        self.category_lookup.get(category_id).copied()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Number of items in each category.
    pub fn category_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.categories.len()];
        for &c in &self.item_to_category {
            sizes[c] += 1;
        }
        sizes
    }

    pub(crate) fn check_item(&self, item: usize) -> Result<()> {
        if item < self.items.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "items",
                index: item,
                size: self.items.len(),
            })
        }
    }
}

fn index_of(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut lookup = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if lookup.insert(id.clone(), i).is_some() {
            return Err(Error::malformed("catalog", format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(lookup)
}
