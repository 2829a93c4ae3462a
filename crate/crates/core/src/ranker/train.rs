//! SGD training and candidate ranking.

use std::collections::HashMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{RankerDims, TrainConfig};
use super::features::{FeatureExtractor, MentionInputs, SparseVec};
use super::model::{pair_loss, softmax, Label, RankerModel};
use crate::candidates::CandidateList;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::{KbStore, NIL_ID};
use crate::par::{self, Execution};

/// Probabilities over one candidate list and the index of the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub probabilities: Vec<f64>,
    pub best: usize,
}

impl Ranking {
    /// K-way softmax of the correct-link scores; ties go to the earlier position.
    pub fn from_scores(scores: &[f64]) -> Self {
        let probabilities = if scores.is_empty() {
            Vec::new()
        } else {
            softmax(scores)
        };
        let mut best = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] {
                best = i;
            }
        }
        Self {
            probabilities,
            best,
        }
    }
}

/// The ranker's decision for one mention.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entity_id: String,
    pub probability: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn is_nil(&self) -> bool {
        self.entity_id == NIL_ID
    }
}

fn gold_id(doc: &Document, index: usize) -> String {
    doc.mentions[index]
        .gold_entity_id
        .clone()
        .unwrap_or_else(|| NIL_ID.to_string())
}

fn doc_map(docs: &[Document]) -> HashMap<&str, &Document> {
    docs.iter().map(|d| (d.doc_id.as_str(), d)).collect()
}

fn find_doc<'a>(docs: &HashMap<&str, &'a Document>, id: &str) -> Result<&'a Document> {
    docs.get(id)
        .copied()
        .ok_or_else(|| Error::Validation(format!("candidate list refers to unknown document {id}")))
}

impl RankerModel<f32> {
    pub fn extractor<'a>(&self, kb: &'a KbStore) -> Result<FeatureExtractor<'a>> {
        if kb.vocab().len() != self.dims.vocab
            || (self.dims.char_mode() && kb.charset().len() != self.dims.charset)
        {
            return Err(Error::Dimension(format!(
                "model vocabulary ({}) does not match the KB ({})",
                self.dims.vocab,
                kb.vocab().len()
            )));
        }
        FeatureExtractor::new(kb, self.alphas, self.context_window, self.dims.char_mode())
    }

    /// Rank one candidate list. `e_k` is the correct-link logit of candidate `k`.
    pub fn rank(
        &self,
        fx: &FeatureExtractor,
        inputs: &MentionInputs,
        list: &CandidateList,
    ) -> Result<Ranking> {
        let scores = list
            .candidates
            .iter()
            .map(|c| Ok(self.logits(inputs, &fx.description(&c.id))?[0] as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ranking::from_scores(&scores))
    }

    /// Link every candidate list; output order follows `lists`.
    pub fn link(
        &self,
        docs: &[Document],
        lists: &[CandidateList],
        kb: &KbStore,
        exec: Execution,
    ) -> Result<Vec<Prediction>> {
        let fx = self.extractor(kb)?;
        let by_id = doc_map(docs);
        par::map(lists, exec, |list| {
            let doc = find_doc(&by_id, &list.mention.doc_id)?;
            let inputs = fx.mention_inputs(doc, &list.mention);
            let ranking = self.rank(&fx, &inputs, list)?;
            let winner = list
                .candidates
                .get(ranking.best)
                .map_or_else(|| NIL_ID.to_string(), |c| c.id.clone());
            Ok(Prediction {
                entity_id: winner,
                probability: ranking
                    .probabilities
                    .get(ranking.best)
                    .copied()
                    .unwrap_or(1.0),
                probabilities: ranking.probabilities,
            })
        })
        .into_iter()
        .collect()
    }
}

struct Pair {
    mention: usize,
    description: usize,
    label: Label,
}

/// Train a fresh model on the gold-labelled mentions behind `lists`.
///
/// Mentions whose gold label is missing from their candidate list cannot be learned
/// from and are skipped with a warning.
pub fn train(
    docs: &[Document],
    lists: &[CandidateList],
    kb: &KbStore,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<RankerModel<f32>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = RankerDims::from_config(cfg, kb.vocab().len(), kb.charset().len());
    let mut model = RankerModel::<f32>::init(dims, cfg, &mut rng);
    let fx = model.extractor(kb)?;
    let by_id = doc_map(docs);

    let mut usable = Vec::new();
    let mut skipped = 0usize;
    for list in lists {
        let doc = find_doc(&by_id, &list.mention.doc_id)?;
        if list.contains(&gold_id(doc, list.mention.index)) {
            usable.push((doc, list));
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        warn!("{skipped} training mentions skipped: gold label not among candidates");
    }

    let inputs: Vec<MentionInputs> = par::map(&usable, exec, |(doc, list)| {
        fx.mention_inputs(doc, &list.mention)
    });
    let mut desc_index: HashMap<&str, usize> = HashMap::new();
    let mut descriptions: Vec<SparseVec> = Vec::new();
    let mut pairs = Vec::new();
    for (m, (doc, list)) in usable.iter().enumerate() {
        let gold = gold_id(doc, list.mention.index);
        for c in &list.candidates {
            let description = *desc_index.entry(c.id.as_str()).or_insert_with(|| {
                descriptions.push(fx.description(&c.id));
                descriptions.len() - 1
            });
            let label = if c.id == gold {
                Label::Correct
            } else {
                Label::Incorrect
            };
            pairs.push(Pair {
                mention: m,
                description,
                label,
            });
        }
    }
    info!(
        "training on {} mentions, {} pairs, {} epochs",
        usable.len(),
        pairs.len(),
        cfg.epochs
    );

    // one SGD step per mention on the mean loss of its candidate pairs, each pair gradient norm-clipped
    let mut groups: Vec<Vec<Pair>> = (0..usable.len()).map(|_| Vec::new()).collect();
    for p in pairs {
        groups[p.mention].push(p);
    }
    let lr = cfg.learning_rate as f32;
    let n_pairs: usize = groups.iter().map(Vec::len).sum();
    for epoch in 1..=cfg.epochs {
        groups.shuffle(&mut rng);
        let mut total = 0.0f64;
        for group in &groups {
            let mut step = Vec::with_capacity(group.len());
            for pair in group {
                let inp = &inputs[pair.mention];
                let desc = &descriptions[pair.description];
                let (fv, emb) = model.featurize(inp, desc)?;
                let cache = model.forward(&fv, Some(&mut rng))?;
                let loss = pair_loss(&cache.logits, pair.label) as f64;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss in epoch {epoch}"
                    )));
                }
                total += loss;
                let grads = model.backward(inp, desc, &emb, &cache, pair.label);
                let norm = grads.norm();
                let clip = if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
                    (cfg.max_grad_norm / norm) as f32
                } else {
                    1.0
                };
                step.push((grads, clip));
            }
            let scale = lr / group.len().max(1) as f32;
            for (grads, clip) in &step {
                model.apply_sgd(grads, scale * clip);
            }
        }
        let mean = if n_pairs == 0 {
            0.0
        } else {
            total / n_pairs as f64
        };
        info!("epoch {epoch}/{}: mean loss {mean:.6}", cfg.epochs);
    }
    if !model.all_finite() {
        return Err(Error::Divergence(
            "non-finite parameters after training".into(),
        ));
    }
    Ok(model)
}
