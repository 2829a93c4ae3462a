//! Mention extensions: rewrites of a mention surface that widen candidate retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::corpus::{Mention, MentionKind};
use crate::kb::{EntityType, KbStore};
use crate::text::{fold, tokenize};

/// Surface-to-surfaces rewrite supplied from outside the KB (translation, transliteration).
pub trait ExtensionPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn extend(&self, surface: &str) -> Vec<String>;
}

/// Static dictionary plugin keyed by case-folded surface.
#[derive(Debug, Clone, Default)]
pub struct DictionaryExtension {
    name: String,
    entries: BTreeMap<String, Vec<String>>,
}

impl DictionaryExtension {
    pub fn new<I, K, V>(name: impl Into<String>, entries: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (k, vs) in entries {
            map.entry(fold(k.as_ref()))
                .or_default()
                .extend(vs.into_iter().map(Into::into));
        }
        Self {
            name: name.into(),
            entries: map,
        }
    }
}

impl ExtensionPlugin for DictionaryExtension {
    fn name(&self) -> &str {
        &self.name
    }

    fn extend(&self, surface: &str) -> Vec<String> {
        self.entries
            .get(&fold(surface))
            .cloned()
            .unwrap_or_default()
    }
}

/// Which extensions run. `Default` enables every built-in extension with no plugins.
#[derive(Clone)]
pub struct Extensions {
    pub substring: bool,
    pub country: bool,
    pub nominal: bool,
    pub plugins: Vec<Arc<dyn ExtensionPlugin>>,
}

impl Default for Extensions {
    fn default() -> Self {
        Self {
            substring: true,
            country: true,
            nominal: true,
            plugins: Vec::new(),
        }
    }
}

impl fmt::Debug for Extensions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plugins: Vec<&str> = self.plugins.iter().map(|p| p.name()).collect();
        f.debug_struct("Extensions")
            .field("substring", &self.substring)
            .field("country", &self.country)
            .field("nominal", &self.nominal)
            .field("plugins", &plugins)
            .finish()
    }
}

impl Extensions {
    pub fn none() -> Self {
        Self {
            substring: false,
            country: false,
            nominal: false,
            plugins: Vec::new(),
        }
    }

    pub fn with_plugin(mut self, plugin: impl ExtensionPlugin + 'static) -> Self {
        self.plugins.push(Arc::new(plugin));
        self
    }
}

fn contains_token_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

fn char_distance(a: &Mention, b: &Mention) -> usize {
    if b.end <= a.start {
        a.start - b.end
    } else if b.start >= a.end {
        b.start - a.end
    } else {
        0
    }
}

/// Query surfaces for `m`: its own surface plus whatever the enabled extensions contribute.
/// `mentions` are all recognised mentions of the same document, `m` included.
pub fn extend_mention(
    m: &Mention,
    mentions: &[Mention],
    kb: &KbStore,
    ext: &Extensions,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    out.insert(m.surface.clone());

    if ext.substring {
        let needle = tokenize(&m.surface);
        let folded = fold(&m.surface);
        for o in mentions {
            if o.index == m.index || o.kind != MentionKind::Named || fold(&o.surface) == folded {
                continue;
            }
            if contains_token_run(&tokenize(&o.surface), &needle) {
                out.insert(o.surface.clone());
            }
        }
    }

    if ext.country && m.entity_type == EntityType::Gpe {
        if let Some(&target) = kb.redirects().redirects.get(&fold(&m.surface)) {
            out.insert(kb.entity(target).name.clone());
        }
    }

    if ext.nominal && m.kind == MentionKind::Nominal {
        let nearest = mentions
            .iter()
            .filter(|o| {
                o.index != m.index && o.kind == MentionKind::Named && o.entity_type == m.entity_type
            })
            .min_by_key(|o| (char_distance(m, o), o.start));
        if let Some(o) = nearest {
            out.insert(o.surface.clone());
        }
    }

    for p in &ext.plugins {
        out.extend(p.extend(&m.surface));
    }
    out
}
