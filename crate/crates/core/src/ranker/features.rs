//! Raw (model-independent) inputs for a `(mention, candidate)` pair.
//!
//! - mention surface: L2-normalised bag of words over the KB vocabulary, or in character
//!   mode a dual FOFE code over the character vocabulary
//! - context: dual FOFE codes of the left context (read left to right) and the right
//!   context (read right to left, toward the mention), each truncated to a window
//! - candidate description: L2-normalised TF-IDF bag of words; empty for NIL
//!
//! All vectors are sparse `(index, weight)` lists. The model turns them into the dense
//! feature vector through its embedding and projection layers.

use std::collections::BTreeMap;

use crate::corpus::{Document, Mention};
use crate::fofe::{check_alpha_pair, encode_sparse, Alpha};
use crate::kb::{l2_normalize, KbStore, NIL_ID};
use crate::text::{char_slice, char_tokens, sentence_bounds, tokenize};

pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub enum MentionInput {
    Words(SparseVec),
    Chars { low: SparseVec, high: SparseVec },
}

/// Everything about a mention the ranker sees, shared by all its candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionInputs {
    pub surface: MentionInput,
    /// Left-low, left-high, right-low, right-high FOFE codes over the word vocabulary, each
    /// scaled to unit length.
    pub context: [SparseVec; 4],
}

#[derive(Debug, Clone)]
pub struct FeatureExtractor<'a> {
    kb: &'a KbStore,
    alphas: (Alpha, Alpha),
    window: usize,
    char_mode: bool,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        kb: &'a KbStore,
        alphas: (f64, f64),
        window: usize,
        char_mode: bool,
    ) -> crate::Result<Self> {
        Ok(Self {
            kb,
            alphas: check_alpha_pair(alphas)?,
            window,
            char_mode,
        })
    }

    fn word_ids(&self, tokens: &[String]) -> Vec<usize> {
        let vocab = self.kb.vocab();
        tokens
            .iter()
            .map(|t| vocab.index_of(t).expect("KB vocabulary has an OOV slot"))
            .collect()
    }

    pub fn mention_inputs(&self, doc: &Document, m: &Mention) -> MentionInputs {
        let surface = if self.char_mode {
            let charset = self.kb.charset();
            let ids: Vec<usize> = char_tokens(&m.surface)
                .iter()
                .map(|c| charset.index_of(c).expect("charset has an OOV slot"))
                .collect();
            MentionInput::Chars {
                low: encode_sparse(&ids, self.alphas.0),
                high: encode_sparse(&ids, self.alphas.1),
            }
        } else {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for id in self.word_ids(&tokenize(&m.surface)) {
                *counts.entry(id).or_default() += 1.0;
            }
            let mut bow: SparseVec = counts.into_iter().collect();
            l2_normalize(&mut bow);
            MentionInput::Words(bow)
        };

        let (s0, s1) = sentence_bounds(&doc.text, m.start, m.end, &doc.spans());
        let left = tokenize(char_slice(&doc.text, s0, m.start));
        let right = tokenize(char_slice(&doc.text, m.end, s1));
        let left_ids = self.word_ids(&left[left.len().saturating_sub(self.window)..]);
        let mut right_ids = self.word_ids(&right[..right.len().min(self.window)]);
        right_ids.reverse();

        let mut context = [
            encode_sparse(&left_ids, self.alphas.0),
            encode_sparse(&left_ids, self.alphas.1),
            encode_sparse(&right_ids, self.alphas.0),
            encode_sparse(&right_ids, self.alphas.1),
        ];
        context.iter_mut().for_each(|c| l2_normalize(c));
        MentionInputs { surface, context }
    }

    /// TF-IDF of the candidate's description; NIL and unknown ids give the empty vector.
    pub fn description(&self, candidate_id: &str) -> SparseVec {
        if candidate_id == NIL_ID {
            return Vec::new();
        }
        self.kb
            .index_of(candidate_id)
            .map(|i| self.kb.description_tfidf(i))
            .unwrap_or_default()
    }
}
