//! Knowledge base: entities, exact-name tables, redirects, disambiguation sets, a fuzzy
//! n-gram index and description TF-IDF statistics.

mod fuzzy;
mod index_file;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fuzzy::{similarity, FuzzyIndex, IndexedKey, DEFAULT_FLOOR, DEFAULT_GRAM, DEFAULT_LIMIT};
pub use index_file::{read_index, write_index, INDEX_MAGIC, INDEX_VERSION};

use crate::error::{Error, Result};
use crate::fofe::Vocabulary;
use crate::text::{char_tokens, fold, tokenize};

/// Reserved candidate id for "no KB entry".
pub const NIL_ID: &str = "NIL";

/// Description prefix length (characters) that enters the fuzzy index.
pub const DESCRIPTION_PREFIX_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "GPE")]
    Gpe,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "FAC")]
    Fac,
}

impl EntityType {
    pub const ALL: [EntityType; 5] = [
        EntityType::Per,
        EntityType::Org,
        EntityType::Gpe,
        EntityType::Loc,
        EntityType::Fac,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Gpe => "GPE",
            EntityType::Loc => "LOC",
            EntityType::Fac => "FAC",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown entity type `{s}`")))
    }
}

/// One line of the KB JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntity {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub links: Vec<String>,
}

/// Alias redirects (a surface naming exactly one entity that is not its canonical name) and
/// disambiguation sets (a surface naming two or more entities).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RedirectTable {
    pub redirects: BTreeMap<String, u32>,
    pub disambiguation: BTreeMap<String, Vec<u32>>,
}

impl RedirectTable {
    fn derive(names: &BTreeMap<String, Vec<u32>>, canonical: &BTreeSet<String>) -> Self {
        let mut table = Self::default();
        for (surface, ids) in names {
            match ids.as_slice() {
                [] => {}
                [only] if !canonical.contains(surface) => {
                    table.redirects.insert(surface.clone(), *only);
                }
                [_] => {}
                many => {
                    table.disambiguation.insert(surface.clone(), many.to_vec());
                }
            }
        }
        table
    }

    pub fn lookup(&self, folded: &str) -> Vec<u32> {
        let mut out: Vec<u32> = self.redirects.get(folded).copied().into_iter().collect();
        if let Some(ids) = self.disambiguation.get(folded) {
            out.extend_from_slice(ids);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Immutable, loaded knowledge base.
///
/// Entities are stored sorted by id, so comparing internal indices is the same as
/// comparing ids lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct KbStore {
    pub(crate) entities: Vec<KbEntity>,
    pub(crate) links: Vec<Vec<u32>>,
    pub(crate) by_id: HashMap<String, u32>,
    pub(crate) names: BTreeMap<String, Vec<u32>>,
    pub(crate) redirects: RedirectTable,
    pub(crate) fuzzy: FuzzyIndex,
    pub(crate) vocab: Vocabulary,
    pub(crate) idf: Vec<f64>,
    pub(crate) charset: Vocabulary,
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KbStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entities = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entity: KbEntity = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entities.push(entity);
    }
    KbStore::from_entities(entities)
}

impl KbStore {
    pub fn from_entities(mut entities: Vec<KbEntity>) -> Result<Self> {
        entities.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if e.id.is_empty() || e.id == NIL_ID {
                return Err(Error::Validation(format!("invalid entity id `{}`", e.id)));
            }
            if e.name.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "entity `{}` has an empty name",
                    e.id
                )));
            }
            if by_id.insert(e.id.clone(), i as u32).is_some() {
                return Err(Error::Validation(format!("duplicate entity id `{}`", e.id)));
            }
        }

        let entities_ids: Vec<String> = entities.iter().map(|e| e.id.clone()).collect();
        let mut dangling = BTreeSet::new();
        let mut links = Vec::with_capacity(entities.len());
        for e in &entities {
            let mut out: Vec<u32> = Vec::with_capacity(e.links.len());
            for l in &e.links {
                match by_id.get(l) {
                    Some(&t) => out.push(t),
                    None => {
                        dangling.insert(format!("{} -> {l}", e.id));
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
            links.push(out);
        }
        for (e, ls) in entities.iter_mut().zip(&links) {
            e.links = ls
                .iter()
                .map(|&t| entities_ids[t as usize].clone())
                .collect();
        }
        if !dangling.is_empty() {
            let list: Vec<String> = dangling.into_iter().collect();
            return Err(Error::Validation(format!(
                "links to missing entities: {}",
                list.join(", ")
            )));
        }

        let mut names: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut canonical = BTreeSet::new();
        let mut fuzzy_entries = Vec::new();
        for (i, e) in entities.iter().enumerate() {
            let i = i as u32;
            let name = fold(&e.name);
            canonical.insert(name.clone());
            names.entry(name.clone()).or_default().push(i);
            fuzzy_entries.push((i, name));
            for a in &e.aliases {
                let a = fold(a);
                if a.is_empty() {
                    continue;
                }
                names.entry(a.clone()).or_default().push(i);
                fuzzy_entries.push((i, a));
            }
            let prefix: String = e
                .description
                .chars()
                .take(DESCRIPTION_PREFIX_CHARS)
                .collect();
            fuzzy_entries.push((i, fold(prefix.trim())));
        }
        for ids in names.values_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
        let redirects = RedirectTable::derive(&names, &canonical);
        let fuzzy = FuzzyIndex::build(fuzzy_entries, DEFAULT_GRAM);

        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for e in &entities {
            words.extend(tokenize(&e.name));
            words.extend(tokenize(&e.description));
            chars.extend(char_tokens(&e.name));
            for a in &e.aliases {
                words.extend(tokenize(a));
                chars.extend(char_tokens(a));
            }
        }
        let vocab = Vocabulary::with_oov(words);
        let charset = Vocabulary::with_oov(chars);

        let mut df = vec![0usize; vocab.len()];
        for e in &entities {
            let mut seen: Vec<usize> = tokenize(&e.description)
                .iter()
                .filter_map(|t| vocab.lookup(t))
                .collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                df[t] += 1;
            }
        }
        let n = entities.len() as f64;
        let idf = df
            .iter()
            .map(|&d| {
                if n > 0.0 {
                    (n / (1.0 + d as f64)).ln()
                } else {
                    0.0
                }
            })
            .collect();

        Ok(Self {
            entities,
            links,
            by_id,
            names,
            redirects,
            fuzzy,
            vocab,
            idf,
            charset,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[KbEntity] {
        &self.entities
    }

    pub fn entity(&self, index: u32) -> &KbEntity {
        &self.entities[index as usize]
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&KbEntity> {
        self.index_of(id).map(|i| self.entity(i))
    }

    /// Outbound links of an entity, as sorted internal indices.
    pub fn links_of(&self, index: u32) -> &[u32] {
        &self.links[index as usize]
    }

    pub fn links_to(&self, from: u32, to: u32) -> bool {
        self.links_of(from).binary_search(&to).is_ok()
    }

    pub fn redirects(&self) -> &RedirectTable {
        &self.redirects
    }

    pub fn fuzzy_index(&self) -> &FuzzyIndex {
        &self.fuzzy
    }

    /// Word vocabulary over names, aliases and descriptions, OOV slot at index 0.
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Character vocabulary over names and aliases, OOV slot at index 0.
    pub fn charset(&self) -> &Vocabulary {
        &self.charset
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Entities whose canonical name or alias equals `surface` (case-insensitive).
    pub fn lookup_names(&self, surface: &str) -> Vec<u32> {
        self.names.get(&fold(surface)).cloned().unwrap_or_default()
    }

    /// Exact lookups: name/alias table unioned with redirect and disambiguation hits.
    /// Result is sorted by entity id.
    pub fn lookup_exact(&self, surface: &str) -> Vec<u32> {
        let folded = fold(surface);
        let mut out = self.names.get(&folded).cloned().unwrap_or_default();
        out.extend(self.redirects.lookup(&folded));
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn lookup_exact_ids(&self, surface: &str) -> BTreeSet<String> {
        self.lookup_exact(surface)
            .into_iter()
            .map(|i| self.entity(i).id.clone())
            .collect()
    }

    pub fn lookup_fuzzy(&self, surface: &str, limit: usize) -> Vec<(u32, f64)> {
        self.lookup_fuzzy_with(surface, limit, DEFAULT_FLOOR)
    }

    /// Fuzzy search ranked by similarity (descending), ties by entity id, at most `limit`.
    pub fn lookup_fuzzy_with(&self, surface: &str, limit: usize, floor: f64) -> Vec<(u32, f64)> {
        let mut hits: Vec<(u32, f64)> = self
            .fuzzy
            .search(&fold(surface), floor)
            .into_iter()
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(limit.max(1));
        hits
    }

    /// TF-IDF bag of words of `text` over the KB vocabulary, L2-normalised.
    /// Out-of-vocabulary words are dropped (they carry no document frequency).
    pub fn tfidf(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        let oov = self.vocab.oov();
        for t in tokenize(text) {
            if let Some(i) = self.vocab.lookup(&t).filter(|&i| Some(i) != oov) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        l2_normalize(&mut v);
        v
    }

    pub fn description_tfidf(&self, index: u32) -> Vec<(usize, f64)> {
        self.tfidf(&self.entity(index).description)
    }
}

pub(crate) fn l2_normalize(v: &mut [(usize, f64)]) {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|(_, w)| *w /= norm);
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn entity(
        id: &str,
        name: &str,
        ty: EntityType,
        aliases: &[&str],
        desc: &str,
        links: &[&str],
    ) -> KbEntity {
        KbEntity {
            id: id.into(),
            name: name.into(),
            entity_type: ty,
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            description: desc.into(),
            links: links.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn small_kb() -> KbStore {
        use EntityType::*;
        KbStore::from_entities(vec![
            entity(
                "m.uk",
                "United Kingdom",
                Gpe,
                &["UK", "Britain"],
                "country in europe",
                &["m.lincs"],
            ),
            entity(
                "m.lincs",
                "Lincolnshire",
                Gpe,
                &["Lincs"],
                "county in england",
                &["m.uk"],
            ),
            entity(
                "m.lincoln",
                "Lincoln",
                Gpe,
                &[],
                "city in lincolnshire england",
                &["m.lincs"],
            ),
            entity(
                "m.trump",
                "Donald Trump",
                Per,
                &[],
                "american businessman and politician",
                &[],
            ),
            entity("m.paris_fr", "Paris", Gpe, &[], "capital of france", &[]),
            entity("m.paris_tx", "Paris", Gpe, &[], "city in texas", &[]),
        ])
        .unwrap()
    }
}
