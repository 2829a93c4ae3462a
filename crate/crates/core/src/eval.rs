//! Scoring of linker output: candidate recall, linking accuracy and mention CEAF.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{EntityType, NIL_ID};
use crate::nil::MentionRef;
use crate::text::fold;

pub const REPORT_NOTE: &str =
    "NERLC is not reproduced (it needs typed-mention matching rules of the official \
scorer); linking accuracy with a per-type breakdown and mention CEAF are reported instead";

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Validation(format!(
            "{what}: {a} predictions for {b} gold mentions"
        )));
    }
    Ok(())
}

/// Fraction of non-NIL gold mentions whose gold id is among their candidates. `None`
/// gold means NIL. With no linkable mention the recall is 1.
pub fn candidate_recall<S: AsRef<str>>(
    candidates: &[Vec<S>],
    gold: &[Option<String>],
) -> Result<f64> {
    check_len("candidate recall", candidates.len(), gold.len())?;
    let mut linkable = 0;
    let mut covered = 0;
    for (list, g) in candidates.iter().zip(gold) {
        if let Some(g) = g {
            linkable += 1;
            covered += usize::from(list.iter().any(|c| c.as_ref() == g));
        }
    }
    Ok(ratio(covered, linkable, 1.0))
}

fn is_correct(pred: &str, gold: &Option<String>) -> bool {
    pred == gold.as_deref().unwrap_or(NIL_ID)
}

/// Fraction of mentions whose predicted id (or NIL) equals the gold label.
pub fn linking_accuracy<S: AsRef<str>>(predictions: &[S], gold: &[Option<String>]) -> Result<f64> {
    check_len("linking accuracy", predictions.len(), gold.len())?;
    let correct = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| is_correct(p.as_ref(), g))
        .count();
    Ok(ratio(correct, gold.len(), 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeafScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Total overlap of the optimal alignment.
    pub overlap: usize,
}

fn index_partition<K: Eq + Hash + Clone + std::fmt::Debug>(
    clusters: &[Vec<K>],
    side: &str,
) -> Result<HashMap<K, usize>> {
    let mut owner = HashMap::new();
    for (c, members) in clusters.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Validation(format!(
                "{side} clustering has an empty cluster"
            )));
        }
        for m in members {
            if owner.insert(m.clone(), c).is_some() {
                return Err(Error::Validation(format!(
                    "{side} clustering lists {m:?} more than once"
                )));
            }
        }
    }
    Ok(owner)
}

fn overlaps<K: Eq + Hash + Clone + std::fmt::Debug>(
    pred: &[Vec<K>],
    gold: &[Vec<K>],
) -> Result<Vec<Vec<i64>>> {
    let pred_owner = index_partition(pred, "predicted")?;
    let gold_owner = index_partition(gold, "gold")?;
    if pred_owner.len() != gold_owner.len()
        || pred_owner.keys().any(|k| !gold_owner.contains_key(k))
    {
        return Err(Error::Validation(
            "predicted and gold clusterings cover different mention sets".into(),
        ));
    }
    let mut phi = vec![vec![0i64; gold.len()]; pred.len()];
    for (k, &p) in &pred_owner {
        phi[p][gold_owner[k]] += 1;
    }
    Ok(phi)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method, O(n³)).
/// Returns `assignment[row] = column`.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().copied().max().unwrap_or(0);
    let cost = |i: usize, j: usize| max - weights[i][j];
    // potentials and matching over 1-based indices, column 0 is a sentinel
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    assignment
}

fn score(overlap: usize, pred_mentions: usize, gold_mentions: usize) -> CeafScore {
    let precision = ratio(overlap, pred_mentions, 1.0);
    let recall = ratio(overlap, gold_mentions, 1.0);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    CeafScore {
        precision,
        recall,
        f1,
        overlap,
    }
}

/// Mention-based CEAF: the one-to-one cluster alignment maximising the summed overlap
/// `|A ∩ B|`, normalised by the number of mentions on each side. Both clusterings must
/// partition the same mention set. Two empty clusterings score 1.
pub fn ceaf_m<K: Eq + Hash + Clone + std::fmt::Debug>(
    pred: &[Vec<K>],
    gold: &[Vec<K>],
) -> Result<CeafScore> {
    let phi = overlaps(pred, gold)?;
    let n = pred.len().max(gold.len());
    let mut square = vec![vec![0i64; n]; n];
    for (i, row) in phi.iter().enumerate() {
        square[i][..row.len()].copy_from_slice(row);
    }
    let assignment = max_weight_assignment(&square);
    let total: i64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| square[i][j])
        .sum();
    let mentions: usize = pred.iter().map(Vec::len).sum();
    Ok(score(total as usize, mentions, mentions))
}

/// Cluster a mention belongs to, for CEAF: its KB entity or a NIL cluster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum ClusterKey {
    Entity(String),
    Nil(String),
}

/// Everything known about one mention after linking.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionOutcome {
    pub mention: MentionRef,
    pub surface: String,
    pub entity_type: EntityType,
    /// Gold entity id; `None` is NIL.
    pub gold: Option<String>,
    /// Gold NIL cluster label, when the corpus provides one.
    pub gold_nil_cluster: Option<String>,
    /// Candidate ids the ranker saw, NIL included.
    pub candidates: Vec<String>,
    pub predicted: String,
    pub nil_cluster_id: Option<String>,
}

impl MentionOutcome {
    fn gold_key(&self) -> ClusterKey {
        match &self.gold {
            Some(id) => ClusterKey::Entity(id.clone()),
            None => ClusterKey::Nil(
                self.gold_nil_cluster
                    .clone()
                    .unwrap_or_else(|| fold(&self.surface)),
            ),
        }
    }

    fn pred_key(&self) -> ClusterKey {
        if self.predicted == NIL_ID {
            ClusterKey::Nil(
                self.nil_cluster_id
                    .clone()
                    .unwrap_or_else(|| fold(&self.surface)),
            )
        } else {
            ClusterKey::Entity(self.predicted.clone())
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeBreakdown {
    pub mentions: usize,
    pub correct: usize,
    pub linking_accuracy: f64,
    pub linkable: usize,
    pub covered: usize,
    pub candidate_recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub documents: usize,
    pub mentions: usize,
    pub gold_nil: usize,
    pub predicted_nil: usize,
    pub gold_clusters: usize,
    pub predicted_clusters: usize,
    pub predicted_nil_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub note: String,
    pub candidate_recall: f64,
    pub linking_accuracy: f64,
    pub ceaf_m: CeafScore,
    pub per_type: BTreeMap<EntityType, TypeBreakdown>,
    pub counts: Counts,
}

fn group<K: Ord>(keys: impl Iterator<Item = (K, MentionRef)>) -> Vec<Vec<MentionRef>> {
    let mut map: BTreeMap<K, Vec<MentionRef>> = BTreeMap::new();
    for (k, m) in keys {
        map.entry(k).or_default().push(m);
    }
    map.into_values().collect()
}

pub fn evaluate(outcomes: &[MentionOutcome]) -> Result<EvalReport> {
    let gold: Vec<Option<String>> = outcomes.iter().map(|o| o.gold.clone()).collect();
    let candidates: Vec<Vec<String>> = outcomes.iter().map(|o| o.candidates.clone()).collect();
    let predicted: Vec<&str> = outcomes.iter().map(|o| o.predicted.as_str()).collect();

    let gold_clusters = group(outcomes.iter().map(|o| (o.gold_key(), o.mention.clone())));
    let pred_clusters = group(outcomes.iter().map(|o| (o.pred_key(), o.mention.clone())));
    let ceaf = ceaf_m(&pred_clusters, &gold_clusters)?;

    let mut per_type: BTreeMap<EntityType, TypeBreakdown> = BTreeMap::new();
    for o in outcomes {
        let t = per_type.entry(o.entity_type).or_default();
        t.mentions += 1;
        t.correct += usize::from(is_correct(&o.predicted, &o.gold));
        if let Some(g) = &o.gold {
            t.linkable += 1;
            t.covered += usize::from(o.candidates.contains(g));
        }
    }
    for t in per_type.values_mut() {
        t.linking_accuracy = ratio(t.correct, t.mentions, 1.0);
        t.candidate_recall = ratio(t.covered, t.linkable, 1.0);
    }

    let documents: HashSet<&str> = outcomes.iter().map(|o| o.mention.doc_id.as_str()).collect();
    let nil_clusters: HashSet<ClusterKey> = outcomes
        .iter()
        .map(MentionOutcome::pred_key)
        .filter(|k| matches!(k, ClusterKey::Nil(_)))
        .collect();
    Ok(EvalReport {
        note: REPORT_NOTE.to_string(),
        candidate_recall: candidate_recall(&candidates, &gold)?,
        linking_accuracy: linking_accuracy(&predicted, &gold)?,
        ceaf_m: ceaf,
        per_type,
        counts: Counts {
            documents: documents.len(),
            mentions: outcomes.len(),
            gold_nil: gold.iter().filter(|g| g.is_none()).count(),
            predicted_nil: predicted.iter().filter(|p| **p == NIL_ID).count(),
            gold_clusters: gold_clusters.len(),
            predicted_clusters: pred_clusters.len(),
            predicted_nil_clusters: nil_clusters.len(),
        },
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.note);
        let _ = writeln!(s, "candidate_recall  {:.4}", self.candidate_recall);
        let _ = writeln!(s, "linking_accuracy  {:.4}", self.linking_accuracy);
        let _ = writeln!(
            s,
            "ceaf_m            P {:.4}  R {:.4}  F1 {:.4}",
            self.ceaf_m.precision, self.ceaf_m.recall, self.ceaf_m.f1
        );
        let c = &self.counts;
        let _ = writeln!(
            s,
            "documents {}  mentions {}  gold_nil {}  predicted_nil {}  gold_clusters {}  predicted_clusters {}",
            c.documents, c.mentions, c.gold_nil, c.predicted_nil, c.gold_clusters, c.predicted_clusters
        );
        for (ty, t) in &self.per_type {
            let _ = writeln!(
                s,
                "{ty:<4} mentions {:>5}  accuracy {:.4}  recall {:.4}",
                t.mentions, t.linking_accuracy, t.candidate_recall
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serialisable") + "\n"
    }
}
