//! Corpus documents and mentions, plus generic JSONL helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::EntityType;
use crate::text::char_slice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Named,
    Nominal,
}

/// A mention as stored in the corpus file. Offsets are character offsets into `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub kind: MentionKind,
    #[serde(default)]
    pub gold_entity_id: Option<String>,
    /// Gold NIL identity, for clustering evaluation. Optional extension field; when absent,
    /// gold NIL mentions are grouped by case-folded surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_nil_cluster: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<MentionRecord>,
}

/// A detected mention resolved against its document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub entity_type: EntityType,
    pub kind: MentionKind,
}

impl Document {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Check every span lies inside the text and is nonempty.
    pub fn validate(&self) -> Result<()> {
        let n = self.char_len();
        for (i, m) in self.mentions.iter().enumerate() {
            if m.start >= m.end || m.end > n {
                return Err(Error::Validation(format!(
                    "document `{}` mention {i}: span {}..{} outside text of {n} chars",
                    self.doc_id, m.start, m.end
                )));
            }
        }
        Ok(())
    }

    pub fn mention(&self, index: usize) -> Mention {
        let r = &self.mentions[index];
        Mention {
            doc_id: self.doc_id.clone(),
            index,
            start: r.start,
            end: r.end,
            surface: char_slice(&self.text, r.start, r.end).to_owned(),
            entity_type: r.entity_type,
            kind: r.kind,
        }
    }

    pub fn resolved_mentions(&self) -> Vec<Mention> {
        (0..self.mentions.len()).map(|i| self.mention(i)).collect()
    }

    pub fn spans(&self) -> Vec<(usize, usize)> {
        self.mentions.iter().map(|m| (m.start, m.end)).collect()
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    docs.iter().try_for_each(Document::validate)?;
    Ok(docs)
}
