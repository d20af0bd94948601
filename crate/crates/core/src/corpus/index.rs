use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClaimKind, CorpusError, Label, PostKind};

const REQUIRED_COLUMNS: [&str; 4] = ["id", "label", "claim_kind", "post_kind"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub tweet_id: String,
    pub label: Label,
    pub claim_kind: ClaimKind,
    pub post_kind: PostKind,
}

/// A data row that could not be parsed. `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelIndex {
    pub entries: Vec<IndexEntry>,
    pub rejects: Vec<RejectedRow>,
    /// Ids that occur more than once, in order of their first repeat.
    pub duplicate_ids: Vec<String>,
}

impl LabelIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with repeated ids removed, keeping the first occurrence.
    pub fn unique_entries(&self) -> Vec<&IndexEntry> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.tweet_id.as_str()))
            .collect()
    }
}

pub fn load_label_index(path: &Path) -> Result<LabelIndex, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_label_index(file, &path.display().to_string())
}

/// Parses a label index from any reader; `origin` only labels error messages.
pub fn parse_label_index<R: Read>(reader: R, origin: &str) -> Result<LabelIndex, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| CorpusError::Csv {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingHeader {
                path: origin.to_string(),
            })?;
    }
    let [id_col, label_col, claim_col, post_col] = columns;

    let mut index = LabelIndex::default();
    let mut seen = HashSet::new();
    let mut flagged = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CorpusError::Csv {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        let reject = |reason: String| RejectedRow { line, reason };

        let id = field(id_col);
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
            index.rejects.push(reject(format!("id {id:?} is not a decimal tweet id")));
            continue;
        }
        let Some(label) = Label::parse(field(label_col)) else {
            index.rejects.push(reject(format!(
                "label {:?} is not one of 0, 1, real, fake",
                field(label_col)
            )));
            continue;
        };
        let Some(claim_kind) = ClaimKind::parse(field(claim_col)) else {
            index.rejects.push(reject(format!(
                "claim_kind {:?} is not claim or news_article",
                field(claim_col)
            )));
            continue;
        };
        let Some(post_kind) = PostKind::parse(field(post_col)) else {
            index.rejects.push(reject(format!(
                "post_kind {:?} is not tweet or reply",
                field(post_col)
            )));
            continue;
        };
        if !seen.insert(id.to_string()) && flagged.insert(id.to_string()) {
            index.duplicate_ids.push(id.to_string());
        }
        index.entries.push(IndexEntry {
            tweet_id: id.to_string(),
            label,
            claim_kind,
            post_kind,
        });
    }
    Ok(index)
}
