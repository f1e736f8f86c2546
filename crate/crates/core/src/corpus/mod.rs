//! Documents, source-format readers, and subword alignment.

mod conll;
mod gap;
mod wordpiece;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use conll::{parse_conll, serialize_conll};
pub use gap::{
    parse_gap, parse_gap_detailed, snippet_document, Candidate, GapExample, Gender, SkippedRow,
    SnippetDocument,
};
pub use wordpiece::{detokenize, tokenize, SubwordVocabulary, Tokenization, UNKNOWN_TOKEN};

/// Inclusive `[start, end]` interval. Depending on context the unit is tokens
/// or word pieces; functions name the unit they expect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "span start after end");
        Self { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    /// Partial overlap: the spans share pieces but neither contains the other.
    pub fn crosses(&self, other: &Span) -> bool {
        (self.start < other.start && other.start <= self.end && self.end < other.end)
            || (other.start < self.start && self.start <= other.end && other.end < self.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// OntoNotes genres, read from the document key prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Genre {
    Bc,
    Bn,
    Mz,
    Nw,
    Pt,
    Tc,
    Wb,
    Other,
}

impl Genre {
    pub const ALL: [Genre; 8] = [
        Genre::Bc,
        Genre::Bn,
        Genre::Mz,
        Genre::Nw,
        Genre::Pt,
        Genre::Tc,
        Genre::Wb,
        Genre::Other,
    ];

    pub fn from_doc_key(key: &str) -> Self {
        match key.split('/').next().unwrap_or_default() {
            "bc" => Genre::Bc,
            "bn" => Genre::Bn,
            "mz" => Genre::Mz,
            "nw" => Genre::Nw,
            "pt" => Genre::Pt,
            "tc" => Genre::Tc,
            "wb" => Genre::Wb,
            _ => Genre::Other,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub surface: String,
    pub sentence_index: usize,
    pub token_index_in_doc: usize,
    pub speaker: String,
    /// Half-open range into the document's word-piece sequence. Empty until
    /// the document is tokenized.
    pub word_piece_range: Range<usize>,
    /// CoNLL columns between the word and the coreference column, kept for
    /// pass-through serialization.
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub doc_key: String,
    /// Document name from the `#begin document` line.
    pub name: String,
    /// Part label as written in the source, e.g. `000`.
    pub part: String,
    pub genre: Genre,
    pub tokens: Vec<Token>,
    pub word_pieces: Vec<u32>,
    /// Clusters of token spans, each sorted, ordered by first span.
    pub gold_clusters: Vec<Vec<Span>>,
}

impl Document {
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_pieces(&self) -> usize {
        self.word_pieces.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.sentence_index + 1)
    }

    /// True when token ranges are non-empty, adjacent, and exactly cover
    /// the word pieces.
    pub fn is_tokenized(&self) -> bool {
        let mut next = 0;
        for t in &self.tokens {
            if t.word_piece_range.start != next || t.word_piece_range.is_empty() {
                return false;
            }
            next = t.word_piece_range.end;
        }
        !self.tokens.is_empty() && next == self.word_pieces.len()
    }

    /// Fills word pieces and per-token ranges from `vocab`.
    pub fn tokenize(&mut self, vocab: &SubwordVocabulary) {
        let surfaces: Vec<&str> = self.tokens.iter().map(|t| t.surface.as_str()).collect();
        let tok = tokenize(&surfaces, vocab);
        for (t, r) in self.tokens.iter_mut().zip(tok.ranges) {
            t.word_piece_range = r;
        }
        self.word_pieces = tok.pieces;
    }

    /// Word-piece offsets at which a token starts, plus the total piece count.
    pub fn token_boundaries(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.tokens.iter().map(|t| t.word_piece_range.start).collect();
        b.push(self.num_pieces());
        b
    }

    /// Maps a token span to the word-piece span from the first piece of its
    /// first token to the last piece of its last token.
    pub fn token_span_to_pieces(&self, span: Span) -> Span {
        Span::new(
            self.tokens[span.start].word_piece_range.start,
            self.tokens[span.end].word_piece_range.end - 1,
        )
    }

    /// Inverse of [`Document::token_span_to_pieces`]; `None` if the piece span
    /// does not begin and end on token boundaries.
    pub fn piece_span_to_tokens(&self, span: Span) -> Option<Span> {
        let start = self
            .tokens
            .binary_search_by_key(&span.start, |t| t.word_piece_range.start)
            .ok()?;
        let end = self
            .tokens
            .binary_search_by(|t| (t.word_piece_range.end - 1).cmp(&span.end))
            .ok()?;
        (start <= end).then(|| Span::new(start, end))
    }

    /// Token index owning a word piece.
    pub fn token_of_piece(&self, piece: usize) -> usize {
        self.tokens
            .partition_point(|t| t.word_piece_range.end <= piece)
    }

    /// Gold clusters projected onto word-piece spans.
    pub fn gold_piece_clusters(&self) -> Vec<Vec<Span>> {
        map_gold_spans_to_word_pieces(self)
    }

    /// Speaker of the first token of a token span.
    pub fn speaker_of(&self, token: usize) -> &str {
        &self.tokens[token].speaker
    }
}

/// Gold clusters over word-piece spans; requires a tokenized document.
pub fn map_gold_spans_to_word_pieces(doc: &Document) -> Vec<Vec<Span>> {
    doc.gold_clusters
        .iter()
        .map(|c| c.iter().map(|&s| doc.token_span_to_pieces(s)).collect())
        .collect()
}

/// Sorts spans within clusters and clusters by first span.
pub(crate) fn normalize_clusters(clusters: &mut Vec<Vec<Span>>) {
    for c in clusters.iter_mut() {
        c.sort();
        c.dedup();
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort();
}
