//! Grouping of mentions linked to NIL into clusters by case-insensitive surface.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Mention;
use crate::text::fold;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionRef {
    pub doc_id: String,
    pub index: usize,
}

impl From<&Mention> for MentionRef {
    fn from(m: &Mention) -> Self {
        Self {
            doc_id: m.doc_id.clone(),
            index: m.index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NilCluster {
    /// Case-folded surface shared by every member.
    pub cluster_id: String,
    /// Sorted by document then mention index.
    pub members: Vec<MentionRef>,
}

/// Partition NIL mentions by full Unicode case-folded surface. Clusters are sorted by id.
pub fn cluster_nils(nil_mentions: &[Mention]) -> Vec<NilCluster> {
    let mut groups: BTreeMap<String, Vec<MentionRef>> = BTreeMap::new();
    for m in nil_mentions {
        groups.entry(fold(&m.surface)).or_default().push(m.into());
    }
    groups
        .into_iter()
        .map(|(cluster_id, mut members)| {
            members.sort();
            members.dedup();
            NilCluster {
                cluster_id,
                members,
            }
        })
        .collect()
}
