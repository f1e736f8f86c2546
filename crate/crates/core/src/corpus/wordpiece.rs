//! Greedy longest-match subword segmentation.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use crate::error::{Error, Result};

pub const UNKNOWN_TOKEN: &str = "[UNK]";
const CONTINUATION: &str = "##";
const MAX_CHARS_PER_WORD: usize = 100;

/// Subword inventory. Ids are line numbers of the vocabulary file.
#[derive(Clone, Debug, PartialEq)]
pub struct SubwordVocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    unknown_id: u32,
    continuation_marker: String,
}

impl SubwordVocabulary {
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::parse(i + 1, "empty vocabulary entry"));
            }
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate vocabulary entry `{e}`")));
            }
        }
        let unknown_id = *index
            .get(UNKNOWN_TOKEN)
            .ok_or_else(|| Error::parse(0, format!("vocabulary lacks {UNKNOWN_TOKEN}")))?;
        Ok(Self {
            entries,
            index,
            unknown_id,
            continuation_marker: CONTINUATION.to_string(),
        })
    }

    /// Reads a vocabulary file: UTF-8, one subword per line.
    pub fn parse(contents: &str) -> Result<Self> {
        Self::from_entries(contents.lines().map(str::to_string).collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.entries.join("\n");
        s.push('\n');
        s
    }

    /// Builds a vocabulary covering every character of `words` (initial and
    /// continuation forms) plus each whole word seen at least `min_count`
    /// times. Entries are sorted so the result is independent of input order.
    pub fn covering<'a>(words: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut chars: BTreeMap<char, ()> = BTreeMap::new();
        for w in words {
            *counts.entry(w).or_default() += 1;
            for c in w.chars() {
                chars.insert(c, ());
            }
        }
        let mut entries = vec![UNKNOWN_TOKEN.to_string()];
        for &c in chars.keys() {
            entries.push(c.to_string());
            entries.push(format!("{CONTINUATION}{c}"));
        }
        for (w, n) in counts {
            if n >= min_count && w.chars().count() > 1 {
                entries.push(w.to_string());
            }
        }
        Self::from_entries(entries).expect("generated vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unknown_id(&self) -> u32 {
        self.unknown_id
    }

    pub fn continuation_marker(&self) -> &str {
        &self.continuation_marker
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    fn split_word(&self, word: &str) -> Option<Vec<u32>> {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.is_empty() || chars.len() > MAX_CHARS_PER_WORD {
            return None;
        }
        let byte_at = |ci: usize| chars.get(ci).map_or(word.len(), |&(b, _)| b);
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut candidate = String::new();
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(&self.continuation_marker);
                }
                candidate.push_str(&word[byte_at(start)..byte_at(end)]);
                if let Some(id) = self.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            pieces.push(found?);
            start = end;
        }
        Some(pieces)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tokenization {
    pub pieces: Vec<u32>,
    /// One half-open range per input token; the ranges partition `pieces`.
    pub ranges: Vec<Range<usize>>,
}

/// Segments each token greedily by longest vocabulary match. A token that
/// cannot be fully segmented becomes a single unknown piece.
pub fn tokenize(tokens: &[&str], vocab: &SubwordVocabulary) -> Tokenization {
    let mut pieces = Vec::new();
    let mut ranges = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let start = pieces.len();
        match vocab.split_word(tok) {
            Some(ids) => pieces.extend(ids),
            None => pieces.push(vocab.unknown_id()),
        }
        ranges.push(start..pieces.len());
    }
    Tokenization { pieces, ranges }
}

/// Rebuilds token surfaces by concatenating pieces without continuation
/// markers. Unknown tokens come back as the unknown marker.
pub fn detokenize(tok: &Tokenization, vocab: &SubwordVocabulary) -> Vec<String> {
    tok.ranges
        .iter()
        .map(|r| {
            tok.pieces[r.clone()]
                .iter()
                .map(|&id| {
                    let p = vocab.piece(id).unwrap_or(UNKNOWN_TOKEN);
                    p.strip_prefix(vocab.continuation_marker()).unwrap_or(p)
                })
                .collect()
        })
        .collect()
}
