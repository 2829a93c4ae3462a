//! Document candidate graph and co-occurrence distillation.
//!
//! Nodes are `(mention, candidate entity)` pairs. An undirected edge joins two nodes of
//! different mentions whenever either entity's KB entry links to the other. A candidate's
//! score is the sum over every other mention `m'` of the number of edges it has to the
//! candidates of `m'`; each mention keeps its top `tau` candidates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KbStore, NIL_ID};

#[derive(Debug, Clone, PartialEq)]
pub struct RawCandidate {
    pub entity: u32,
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub mention: usize,
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub score: u32,
    pub similarity: f64,
}

impl ScoredCandidate {
    pub fn nil() -> Self {
        Self {
            id: NIL_ID.to_owned(),
            score: 0,
            similarity: 0.0,
        }
    }

    pub fn is_nil(&self) -> bool {
        self.id == NIL_ID
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocCandidateGraph {
    mentions: usize,
    nodes: Vec<GraphNode>,
    adjacency: Vec<Vec<usize>>,
}

impl DocCandidateGraph {
    /// Build the graph from each mention's raw candidates and the KB link structure.
    pub fn build(per_mention: &[Vec<RawCandidate>], kb: &KbStore) -> Self {
        let mut nodes = Vec::new();
        let mut entities = Vec::new();
        for (m, cands) in per_mention.iter().enumerate() {
            for c in cands {
                nodes.push(GraphNode {
                    mention: m,
                    id: c.id.clone(),
                    similarity: c.similarity,
                });
                entities.push(c.entity);
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if nodes[i].mention == nodes[j].mention {
                    continue;
                }
                let (a, b) = (entities[i], entities[j]);
                if kb.links_to(a, b) || kb.links_to(b, a) {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Self {
            mentions: per_mention.len(),
            nodes,
            adjacency,
        }
    }

    /// Graph from explicit nodes and undirected edges; rejects self, intra-mention and
    /// duplicate edges.
    pub fn from_edges(
        mentions: usize,
        nodes: Vec<GraphNode>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        if let Some(n) = nodes.iter().find(|n| n.mention >= mentions) {
            return Err(Error::Validation(format!(
                "node mention {} out of range",
                n.mention
            )));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::Validation(format!("edge ({a}, {b}) out of range")));
            }
            if nodes[a].mention == nodes[b].mention {
                return Err(Error::Validation(format!(
                    "edge ({a}, {b}) joins candidates of the same mention"
                )));
            }
            if adjacency[a].contains(&b) {
                return Err(Error::Validation(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        adjacency.iter_mut().for_each(|l| l.sort_unstable());
        Ok(Self {
            mentions,
            nodes,
            adjacency,
        })
    }

    pub fn mention_count(&self) -> usize {
        self.mentions
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ns) in self.adjacency.iter().enumerate() {
            out.extend(ns.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Symmetric adjacency, no self edges, no intra-mention edges.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, ns) in self.adjacency.iter().enumerate() {
            for &j in ns {
                if i == j {
                    return Err(Error::Validation(format!("self edge at node {i}")));
                }
                if self.nodes[i].mention == self.nodes[j].mention {
                    return Err(Error::Validation(format!("intra-mention edge ({i}, {j})")));
                }
                if !self.adjacency[j].contains(&i) {
                    return Err(Error::Validation(format!("asymmetric edge ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Number of edges from `node` to candidate nodes of mention `other`.
    pub fn count(&self, node: usize, other: usize) -> u32 {
        self.adjacency[node]
            .iter()
            .filter(|&&j| self.nodes[j].mention == other)
            .count() as u32
    }

    /// Distillation score: sum of [`count`](Self::count) over every other mention.
    pub fn score(&self, node: usize) -> u32 {
        let own = self.nodes[node].mention;
        (0..self.mentions)
            .filter(|&m| m != own)
            .map(|m| self.count(node, m))
            .sum()
    }
}

/// Ranking order used for top-tau selection: score, then similarity (both descending),
/// then id ascending.
pub fn candidate_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .cmp(&a.score)
        .then(b.similarity.total_cmp(&a.similarity))
        .then_with(|| a.id.cmp(&b.id))
}

/// Keep each mention's top `tau` candidates by distillation score and append NIL.
pub fn distill(graph: &DocCandidateGraph, tau: usize) -> Vec<Vec<ScoredCandidate>> {
    let mut per_mention: Vec<Vec<ScoredCandidate>> = vec![Vec::new(); graph.mention_count()];
    for (i, node) in graph.nodes().iter().enumerate() {
        per_mention[node.mention].push(ScoredCandidate {
            id: node.id.clone(),
            score: graph.score(i),
            similarity: node.similarity,
        });
    }
    for list in &mut per_mention {
        list.sort_by(candidate_order);
        list.truncate(tau);
        list.push(ScoredCandidate::nil());
    }
    per_mention
}
