//! Character n-gram inverted index with Levenshtein rescoring.
//!
//! Strings are padded (`"  "` in front, `" "` behind) before gram extraction so that short
//! strings still produce grams and word starts weigh a little more. A query retrieves every
//! indexed string sharing at least one gram, then rescores it by
//! `1 - levenshtein / max(len)` over characters.

use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_GRAM: usize = 3;
pub const DEFAULT_FLOOR: f64 = 0.5;
pub const DEFAULT_LIMIT: usize = 50;

/// Normalised edit similarity in `[0, 1]`; two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let longest = la.max(lb);
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

pub fn grams(text: &str, n: usize) -> Vec<String> {
    let padded: Vec<char> = "  "
        .chars()
        .chain(text.chars())
        .chain(std::iter::once(' '))
        .collect();
    if text.is_empty() || padded.len() < n {
        return Vec::new();
    }
    let mut out: Vec<String> = padded.windows(n).map(|w| w.iter().collect()).collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedKey {
    pub entity: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzyIndex {
    gram: usize,
    keys: Vec<IndexedKey>,
    postings: BTreeMap<String, Vec<u32>>,
}

impl FuzzyIndex {
    /// `entries` are `(entity, already case-folded text)`; duplicates are dropped.
    pub fn build(entries: impl IntoIterator<Item = (u32, String)>, gram: usize) -> Self {
        let mut keys: Vec<IndexedKey> = entries
            .into_iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(entity, text)| IndexedKey { entity, text })
            .collect();
        keys.sort_by(|a, b| (a.entity, &a.text).cmp(&(b.entity, &b.text)));
        keys.dedup();
        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (k, key) in keys.iter().enumerate() {
            for g in grams(&key.text, gram) {
                postings.entry(g).or_default().push(k as u32);
            }
        }
        // keys are visited in order, so each list is already sorted and unique
        Self {
            gram,
            keys,
            postings,
        }
    }

    pub(crate) fn from_parts(
        gram: usize,
        keys: Vec<IndexedKey>,
        postings: BTreeMap<String, Vec<u32>>,
    ) -> Self {
        Self {
            gram,
            keys,
            postings,
        }
    }

    pub fn gram(&self) -> usize {
        self.gram
    }

    pub fn keys(&self) -> &[IndexedKey] {
        &self.keys
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<u32>> {
        &self.postings
    }

    /// Best similarity per entity among keys sharing a gram with `query` (already folded),
    /// keeping only entities at or above `floor`. Unordered.
    pub fn search(&self, query: &str, floor: f64) -> HashMap<u32, f64> {
        let mut touched: Vec<u32> = Vec::new();
        for g in grams(query, self.gram) {
            if let Some(list) = self.postings.get(&g) {
                touched.extend_from_slice(list);
            }
        }
        touched.sort_unstable();
        touched.dedup();

        let qlen = query.chars().count();
        let mut best: HashMap<u32, f64> = HashMap::new();
        for k in touched {
            let key = &self.keys[k as usize];
            let klen = key.text.chars().count();
            // similarity can never exceed min/max length
            let bound = qlen.min(klen) as f64 / qlen.max(klen).max(1) as f64;
            if bound < floor {
                continue;
            }
            let sim = similarity(query, &key.text);
            if sim >= floor {
                let slot = best.entry(key.entity).or_insert(sim);
                if sim > *slot {
                    *slot = sim;
                }
            }
        }
        best
    }
}
