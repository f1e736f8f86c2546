//! Pronoun-name resolution scores split by pronoun gender.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{f1, Partition};
use crate::corpus::{Gender, GapExample, SnippetDocument, Span};

/// How a predicted mention is matched to a pronoun or candidate name.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchPolicy {
    /// Character ranges overlap and the mention's head (its last token)
    /// lies inside the name.
    #[default]
    OverlapWithHead,
    /// Character ranges overlap.
    Overlap,
    /// Character ranges are identical.
    Exact,
}

impl std::str::FromStr for MatchPolicy {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "overlap-with-head" => Ok(Self::OverlapWithHead),
            "overlap" => Ok(Self::Overlap),
            "exact" => Ok(Self::Exact),
            other => Err(crate::Error::config(format!("unknown match policy `{other}`"))),
        }
    }
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

fn matches(snippet: &SnippetDocument, mention: Span, target: &Range<usize>, policy: MatchPolicy) -> bool {
    let chars = &snippet.token_chars;
    let range = chars[mention.start].start..chars[mention.end].end;
    match policy {
        MatchPolicy::Exact => range == *target,
        MatchPolicy::Overlap => overlaps(&range, target),
        MatchPolicy::OverlapWithHead => {
            let head = &chars[mention.end];
            overlaps(&range, target) && head.start >= target.start && head.end <= target.end
        }
    }
}

/// System decisions `(A, B)`: a candidate is resolved when some predicted
/// cluster holds both a mention of the pronoun and a mention of that name.
/// `predicted` is over token spans of `snippet`.
pub fn gap_resolve(example: &GapExample, snippet: &SnippetDocument, predicted: &Partition, policy: MatchPolicy) -> (bool, bool) {
    let pronoun = example.pronoun_range();
    let (a, b) = (example.candidate_a.char_range(), example.candidate_b.char_range());
    let mut out = (false, false);
    for cluster in predicted.clusters() {
        let has = |target: &Range<usize>| cluster.iter().any(|&m| matches(snippet, m, target, policy));
        if has(&pronoun) {
            out.0 |= has(&a);
            out.1 |= has(&b);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GapDecision {
    pub gender: Gender,
    pub gold: (bool, bool),
    pub system: (bool, bool),
}

impl GapDecision {
    pub fn new(example: &GapExample, system: (bool, bool)) -> Self {
        Self {
            gender: example.pronoun_gender,
            gold: (example.candidate_a.coref, example.candidate_b.coref),
            system,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GapReport {
    pub masculine: f64,
    pub feminine: f64,
    /// Feminine over masculine F1; NaN when masculine F1 is zero.
    pub bias: f64,
    pub overall: f64,
}

/// `F / M`, NaN when `M` is zero.
pub fn bias(feminine: f64, masculine: f64) -> f64 {
    if masculine > 0.0 {
        feminine / masculine
    } else {
        f64::NAN
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, gold: bool, system: bool) {
        match (gold, system) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn f1(&self) -> f64 {
        let p = if self.tp + self.fp > 0 { self.tp as f64 / (self.tp + self.fp) as f64 } else { 0.0 };
        let r = if self.tp + self.fn_ > 0 { self.tp as f64 / (self.tp + self.fn_) as f64 } else { 0.0 };
        f1(p, r)
    }
}

/// Each (example, candidate) pair is one binary decision.
pub fn gap_score(decisions: &[GapDecision]) -> GapReport {
    let (mut m, mut f, mut o) = (Confusion::default(), Confusion::default(), Confusion::default());
    for d in decisions {
        let bucket = match d.gender {
            Gender::Masculine => &mut m,
            Gender::Feminine => &mut f,
        };
        bucket.add(d.gold.0, d.system.0);
        bucket.add(d.gold.1, d.system.1);
        o.add(d.gold.0, d.system.0);
        o.add(d.gold.1, d.system.1);
    }
    let (masculine, feminine) = (m.f1(), f.f1());
    GapReport {
        masculine,
        feminine,
        bias: bias(feminine, masculine),
        overall: o.f1(),
    }
}
