//! GAP pronoun-name TSV files.

use std::ops::Range;

use super::{Document, Genre, Token};
use crate::error::{Error, Result};

const COLUMNS: [&str; 11] = [
    "ID",
    "Text",
    "Pronoun",
    "Pronoun-offset",
    "A",
    "A-offset",
    "A-coref",
    "B",
    "B-offset",
    "B-coref",
    "URL",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gender {
    Masculine,
    Feminine,
}

impl Gender {
    pub fn of_pronoun(pronoun: &str) -> Option<Self> {
        match pronoun.to_lowercase().as_str() {
            "he" | "him" | "his" => Some(Gender::Masculine),
            "she" | "her" | "hers" => Some(Gender::Feminine),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub name: String,
    /// Character (not byte) offset into the snippet.
    pub offset: usize,
    pub coref: bool,
}

impl Candidate {
    pub fn char_range(&self) -> Range<usize> {
        self.offset..self.offset + self.name.chars().count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapExample {
    pub example_id: String,
    pub snippet: String,
    pub pronoun: String,
    pub pronoun_offset: usize,
    pub candidate_a: Candidate,
    pub candidate_b: Candidate,
    pub pronoun_gender: Gender,
}

impl GapExample {
    pub fn pronoun_range(&self) -> Range<usize> {
        self.pronoun_offset..self.pronoun_offset + self.pronoun.chars().count()
    }
}

/// A row dropped because its pronoun has no gender classification.
#[derive(Clone, Debug, PartialEq)]
pub struct SkippedRow {
    pub line: usize,
    pub example_id: String,
    pub pronoun: String,
}

fn parse_flag(s: &str, line: usize, column: &str) -> Result<bool> {
    match s.trim().to_ascii_uppercase().as_str() {
        "TRUE" => Ok(true),
        "FALSE" => Ok(false),
        other => Err(Error::parse(line, format!("{column}: expected TRUE or FALSE, found `{other}`"))),
    }
}

fn parse_offset(s: &str, line: usize, column: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("{column}: bad offset `{s}`")))
}

/// Parses a GAP TSV, returning the kept examples and the rows skipped for an
/// unclassifiable pronoun.
pub fn parse_gap_detailed(contents: &str) -> Result<(Vec<GapExample>, Vec<SkippedRow>)> {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (i, raw) in contents.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if i == 0 && cols.first() == Some(&"ID") {
            if cols.len() < COLUMNS.len() {
                return Err(Error::parse(line, format!("header has {} of {} columns", cols.len(), COLUMNS.len())));
            }
            continue;
        }
        if cols.len() < COLUMNS.len() {
            return Err(Error::parse(
                line,
                format!("missing column `{}`", COLUMNS[cols.len()]),
            ));
        }
        let snippet = cols[1].to_string();
        let snippet_len = snippet.chars().count();
        let candidate = |name: usize, offset: usize, flag: usize| -> Result<Candidate> {
            Ok(Candidate {
                name: cols[name].to_string(),
                offset: parse_offset(cols[offset], line, COLUMNS[offset])?,
                coref: parse_flag(cols[flag], line, COLUMNS[flag])?,
            })
        };
        let candidate_a = candidate(4, 5, 6)?;
        let candidate_b = candidate(7, 8, 9)?;
        if candidate_a.coref && candidate_b.coref {
            return Err(Error::parse(line, "both candidates marked coreferent"));
        }
        let pronoun = cols[2].to_string();
        let pronoun_offset = parse_offset(cols[3], line, COLUMNS[3])?;
        let ranges = [
            pronoun_offset..pronoun_offset + pronoun.chars().count(),
            candidate_a.char_range(),
            candidate_b.char_range(),
        ];
        if ranges.iter().any(|r| r.end > snippet_len) {
            return Err(Error::parse(line, "offset falls outside the snippet"));
        }
        let Some(pronoun_gender) = Gender::of_pronoun(&pronoun) else {
            log::warn!("line {line}: skipping {}: pronoun `{pronoun}` has no gender class", cols[0]);
            skipped.push(SkippedRow {
                line,
                example_id: cols[0].to_string(),
                pronoun,
            });
            continue;
        };
        examples.push(GapExample {
            example_id: cols[0].to_string(),
            snippet,
            pronoun,
            pronoun_offset,
            candidate_a,
            candidate_b,
            pronoun_gender,
        });
    }
    Ok((examples, skipped))
}

/// Parses a GAP TSV; rows with unclassifiable pronouns are logged and skipped.
pub fn parse_gap(contents: &str) -> Result<Vec<GapExample>> {
    parse_gap_detailed(contents).map(|(examples, _)| examples)
}

/// A snippet split into word tokens with their character ranges.
#[derive(Clone, Debug)]
pub struct SnippetDocument {
    pub document: Document,
    pub token_chars: Vec<Range<usize>>,
}

/// Splits a GAP snippet on whitespace and punctuation into an untokenized
/// document. Each punctuation character is its own token.
pub fn snippet_document(example: &GapExample) -> SnippetDocument {
    let mut tokens = Vec::new();
    let mut token_chars = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let flush = |current: &mut String, start: usize, end: usize, tokens: &mut Vec<Token>, chars: &mut Vec<Range<usize>>| {
        if !current.is_empty() {
            tokens.push(Token {
                surface: std::mem::take(current),
                sentence_index: 0,
                token_index_in_doc: tokens.len(),
                speaker: "-".into(),
                word_piece_range: 0..0,
                columns: Vec::new(),
            });
            chars.push(start..end);
        }
    };
    let mut pos = 0;
    for (i, ch) in example.snippet.chars().enumerate() {
        pos = i + 1;
        if ch.is_whitespace() {
            flush(&mut current, start, i, &mut tokens, &mut token_chars);
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
            flush(&mut current, start, i, &mut tokens, &mut token_chars);
            current.push(ch);
            flush(&mut current, i, i + 1, &mut tokens, &mut token_chars);
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(ch);
        }
    }
    flush(&mut current, start, pos, &mut tokens, &mut token_chars);
    SnippetDocument {
        document: Document {
            doc_key: example.example_id.clone(),
            name: example.example_id.clone(),
            part: "000".into(),
            genre: Genre::Other,
            tokens,
            word_pieces: Vec::new(),
            gold_clusters: Vec::new(),
        },
        token_chars,
    }
}
