//! Candidate generation: mention extensions, exact/redirect/fuzzy lookups, and
//! graph distillation down to at most `tau` KB candidates plus NIL per mention.

mod extend;
mod graph;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use extend::{extend_mention, DictionaryExtension, ExtensionPlugin, Extensions};
pub use graph::{
    candidate_order, distill, DocCandidateGraph, GraphNode, RawCandidate, ScoredCandidate,
};

use crate::corpus::{Document, Mention};
use crate::error::{Error, Result};
use crate::kb::{KbStore, DEFAULT_FLOOR, DEFAULT_LIMIT};
use crate::par::{self, Execution};

pub const DEFAULT_TAU: usize = 20;

#[derive(Debug, Clone)]
pub struct CandidateOptions {
    pub tau: usize,
    pub fuzzy_floor: f64,
    pub fuzzy_limit: usize,
    pub extensions: Extensions,
}

impl Default for CandidateOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            fuzzy_floor: DEFAULT_FLOOR,
            fuzzy_limit: DEFAULT_LIMIT,
            extensions: Extensions::default(),
        }
    }
}

impl CandidateOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Config("tau must be at least 1".into()));
        }
        if self.fuzzy_limit == 0 {
            return Err(Error::Config("fuzzy limit must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fuzzy_floor) {
            return Err(Error::Config(format!(
                "fuzzy floor must lie in [0, 1], got {}",
                self.fuzzy_floor
            )));
        }
        Ok(())
    }
}

/// Distilled candidates of one mention; the last entry is always NIL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub mention: Mention,
    pub candidates: Vec<ScoredCandidate>,
    pub includes_nil: bool,
}

impl CandidateList {
    pub fn contains(&self, id: &str) -> bool {
        self.candidates.iter().any(|c| c.id == id)
    }

    /// KB candidates, NIL excluded.
    pub fn kb_candidates(&self) -> &[ScoredCandidate] {
        match self.candidates.last() {
            Some(last) if last.is_nil() => &self.candidates[..self.candidates.len() - 1],
            _ => &self.candidates,
        }
    }
}

/// Union of fuzzy, redirect/disambiguation and exact-name hits over all query surfaces,
/// one entry per entity keeping its best similarity (exact hits count as 1.0). Sorted by id.
pub fn generate_raw<S: AsRef<str>>(
    queries: impl IntoIterator<Item = S>,
    kb: &KbStore,
    opts: &CandidateOptions,
) -> Vec<RawCandidate> {
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    let mut offer = |e: u32, s: f64| {
        let slot = best.entry(e).or_insert(s);
        if s > *slot {
            *slot = s;
        }
    };
    for q in queries {
        let q = q.as_ref();
        for (e, s) in kb.lookup_fuzzy_with(q, opts.fuzzy_limit, opts.fuzzy_floor) {
            offer(e, s);
        }
        for e in kb.lookup_exact(q) {
            offer(e, 1.0);
        }
    }
    best.into_iter()
        .map(|(entity, similarity)| RawCandidate {
            entity,
            id: kb.entity(entity).id.clone(),
            similarity,
        })
        .collect()
}

/// Candidate lists for every mention of one document.
pub fn generate_for_document(
    doc: &Document,
    kb: &KbStore,
    opts: &CandidateOptions,
) -> Vec<CandidateList> {
    let mentions = doc.resolved_mentions();
    if mentions.is_empty() {
        return Vec::new();
    }
    let raw: Vec<Vec<RawCandidate>> = mentions
        .iter()
        .map(|m| generate_raw(extend_mention(m, &mentions, kb, &opts.extensions), kb, opts))
        .collect();
    let graph = DocCandidateGraph::build(&raw, kb);
    debug_assert!(graph.check_invariants().is_ok());
    distill(&graph, opts.tau)
        .into_iter()
        .zip(mentions)
        .map(|(candidates, mention)| CandidateList {
            mention,
            candidates,
            includes_nil: true,
        })
        .collect()
}

/// Candidate lists for a whole corpus, flattened in document then mention order.
/// Documents are processed independently, in parallel when `exec` allows.
pub fn generate_corpus(
    docs: &[Document],
    kb: &KbStore,
    opts: &CandidateOptions,
    exec: Execution,
) -> Vec<CandidateList> {
    par::map(docs, exec, |d| generate_for_document(d, kb, opts))
        .into_iter()
        .flatten()
        .collect()
}
