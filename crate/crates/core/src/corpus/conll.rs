//! CoNLL-2012 column format.
//!
//! Each token line carries at least twelve whitespace-separated columns:
//! document id, part, word number, word, then POS through named entities
//! (speaker in column 10), optional predicate-argument columns, and the
//! coreference column last. Coreference brackets are `(id`, `id)` and `(id)`,
//! joined with `|`; `-` means no annotation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{normalize_clusters, Document, Genre, Span, Token};
use crate::error::{Error, Result};

const MIN_COLUMNS: usize = 12;
const SPEAKER_COLUMN: usize = 9;

enum Bracket {
    Open(u64),
    Close(u64),
    Single(u64),
}

fn parse_coref_column(column: &str, line: usize) -> Result<Vec<Bracket>> {
    if column == "-" {
        return Ok(Vec::new());
    }
    let id = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| Error::parse(line, format!("bad cluster id in coreference column `{column}`")))
    };
    column
        .split('|')
        .map(|part| {
            match (part.strip_prefix('('), part.strip_suffix(')')) {
                (Some(_), Some(_)) if part.len() > 2 => Ok(Bracket::Single(id(&part[1..part.len() - 1])?)),
                (Some(rest), None) => Ok(Bracket::Open(id(rest)?)),
                (None, Some(rest)) => Ok(Bracket::Close(id(rest)?)),
                _ => Err(Error::parse(line, format!("malformed coreference bracket `{part}`"))),
            }
        })
        .collect()
}

struct DocBuilder {
    name: String,
    part: String,
    begin_line: usize,
    tokens: Vec<Token>,
    sentence: usize,
    sentence_has_tokens: bool,
    // cluster id -> stack of (start token, line opened)
    open: BTreeMap<u64, Vec<(usize, usize)>>,
    clusters: BTreeMap<u64, Vec<Span>>,
}

impl DocBuilder {
    fn new(name: String, part: String, begin_line: usize) -> Self {
        Self {
            name,
            part,
            begin_line,
            tokens: Vec::new(),
            sentence: 0,
            sentence_has_tokens: false,
            open: BTreeMap::new(),
            clusters: BTreeMap::new(),
        }
    }

    fn end_sentence(&mut self) {
        if self.sentence_has_tokens {
            self.sentence += 1;
            self.sentence_has_tokens = false;
        }
    }

    fn push_token(&mut self, cols: &[&str], line: usize) -> Result<()> {
        if cols.len() < MIN_COLUMNS {
            return Err(Error::parse(
                line,
                format!("expected at least {MIN_COLUMNS} columns, found {}", cols.len()),
            ));
        }
        let index = self.tokens.len();
        for b in parse_coref_column(cols[cols.len() - 1], line)? {
            match b {
                Bracket::Single(id) => self.clusters.entry(id).or_default().push(Span::new(index, index)),
                Bracket::Open(id) => self.open.entry(id).or_default().push((index, line)),
                Bracket::Close(id) => {
                    let (start, _) = self
                        .open
                        .get_mut(&id)
                        .and_then(Vec::pop)
                        .ok_or_else(|| Error::parse(line, format!("cluster {id} closed without being opened")))?;
                    self.clusters.entry(id).or_default().push(Span::new(start, index));
                }
            }
        }
        self.tokens.push(Token {
            surface: cols[3].to_string(),
            sentence_index: self.sentence,
            token_index_in_doc: index,
            speaker: cols[SPEAKER_COLUMN].to_string(),
            word_piece_range: 0..0,
            columns: cols[4..cols.len() - 1].iter().map(|s| s.to_string()).collect(),
        });
        self.sentence_has_tokens = true;
        Ok(())
    }

    fn finish(self) -> Result<Document> {
        if let Some((id, &(_, line))) = self
            .open
            .iter()
            .find_map(|(id, stack)| stack.first().map(|s| (id, s)))
        {
            return Err(Error::parse(line, format!("cluster {id} opened here is never closed")));
        }
        let mut owner: BTreeMap<Span, u64> = BTreeMap::new();
        for (&id, spans) in &self.clusters {
            for s in spans {
                if let Some(prev) = owner.insert(*s, id) {
                    if prev != id {
                        return Err(Error::parse(
                            self.begin_line,
                            format!("span {s} belongs to clusters {prev} and {id}"),
                        ));
                    }
                }
            }
        }
        let mut gold_clusters: Vec<Vec<Span>> = self.clusters.into_values().collect();
        normalize_clusters(&mut gold_clusters);
        let part_number = self.part.trim_start_matches('0');
        let doc_key = format!("{}_{}", self.name, if part_number.is_empty() { "0" } else { part_number });
        Ok(Document {
            genre: Genre::from_doc_key(&self.name),
            doc_key,
            name: self.name,
            part: self.part,
            tokens: self.tokens,
            word_pieces: Vec::new(),
            gold_clusters,
        })
    }
}

fn parse_begin(line: &str, line_no: usize) -> Result<(String, String)> {
    let rest = line.trim_start_matches("#begin document").trim();
    let (name, tail) = if let Some(inner) = rest.strip_prefix('(') {
        let close = inner
            .find(')')
            .ok_or_else(|| Error::parse(line_no, "unterminated document name"))?;
        (inner[..close].to_string(), &inner[close + 1..])
    } else {
        let end = rest.find(';').unwrap_or(rest.len());
        (rest[..end].trim().to_string(), &rest[end..])
    };
    let part = tail
        .trim_start_matches(';')
        .trim()
        .strip_prefix("part")
        .map(|p| p.trim().to_string())
        .unwrap_or_else(|| "000".to_string());
    if name.is_empty() {
        return Err(Error::parse(line_no, "missing document name"));
    }
    Ok((name, part))
}

/// Parses every document in a CoNLL-2012 file.
pub fn parse_conll(contents: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<DocBuilder> = None;
    for (i, raw) in contents.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.starts_with("#begin document") {
            if current.is_some() {
                return Err(Error::parse(line_no, "nested #begin document"));
            }
            let (name, part) = parse_begin(line, line_no)?;
            current = Some(DocBuilder::new(name, part, line_no));
        } else if line.starts_with("#end document") {
            let doc = current
                .take()
                .ok_or_else(|| Error::parse(line_no, "#end document without #begin"))?;
            docs.push(doc.finish()?);
        } else if line.trim().is_empty() {
            if let Some(doc) = current.as_mut() {
                doc.end_sentence();
            }
        } else if line.starts_with('#') {
            continue;
        } else {
            let doc = current
                .as_mut()
                .ok_or_else(|| Error::parse(line_no, "token line outside a document"))?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            doc.push_token(&cols, line_no)?;
        }
    }
    if let Some(doc) = current {
        return Err(Error::parse(doc.begin_line, "document is never ended"));
    }
    Ok(docs)
}

fn coref_column(doc: &Document) -> Vec<String> {
    let n = doc.tokens.len();
    // (id, other end) per token
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut closes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut singles: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, cluster) in doc.gold_clusters.iter().enumerate() {
        for s in cluster {
            if s.start == s.end {
                singles[s.start].push(id);
            } else {
                opens[s.start].push((id, s.end));
                closes[s.end].push((id, s.start));
            }
        }
    }
    // Nested order: outer opens, singles, inner closes. A close whose
    // cluster also opens on this token goes first so it pops the older span.
    (0..n)
        .map(|i| {
            opens[i].sort_by_key(|&(id, end)| (std::cmp::Reverse(end), id));
            closes[i].sort_by_key(|&(id, start)| (std::cmp::Reverse(start), id));
            let reopened = |id: usize| opens[i].iter().any(|o| o.0 == id);
            let (early, late): (Vec<&(usize, usize)>, Vec<_>) = closes[i].iter().partition(|c| reopened(c.0));
            let parts: Vec<String> = early
                .iter()
                .map(|c| format!("{})", c.0))
                .chain(opens[i].iter().map(|o| format!("({}", o.0)))
                .chain(singles[i].iter().map(|id| format!("({id})")))
                .chain(late.iter().map(|c| format!("{})", c.0)))
                .collect();
            if parts.is_empty() {
                "-".to_string()
            } else {
                parts.join("|")
            }
        })
        .collect()
}

/// Writes documents back in CoNLL-2012 column format. Brackets close per
/// cluster in last-opened order, so two crossing spans of one cluster cannot
/// survive a round trip.
pub fn serialize_conll(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let _ = writeln!(out, "#begin document ({}); part {}", doc.name, doc.part);
        let coref = coref_column(doc);
        let mut word_number = 0;
        for (i, t) in doc.tokens.iter().enumerate() {
            if i > 0 && t.sentence_index != doc.tokens[i - 1].sentence_index {
                out.push('\n');
                word_number = 0;
            }
            let mut cols: Vec<&str> = vec![&doc.name, &doc.part];
            let wn = word_number.to_string();
            cols.push(&wn);
            cols.push(&t.surface);
            let filler: Vec<String>;
            if t.columns.len() > SPEAKER_COLUMN - 4 {
                cols.extend(t.columns.iter().map(String::as_str));
            } else {
                // Tokens that did not come from CoNLL: POS..NE as `-` with the speaker.
                filler = (4..MIN_COLUMNS - 1)
                    .map(|c| if c == SPEAKER_COLUMN { t.speaker.clone() } else { "-".into() })
                    .collect();
                cols.extend(filler.iter().map(String::as_str));
            }
            cols.push(&coref[i]);
            let _ = writeln!(out, "{}", cols.join("\t"));
            word_number += 1;
        }
        if !doc.tokens.is_empty() {
            out.push('\n');
        }
        out.push_str("#end document\n");
    }
    out
}
