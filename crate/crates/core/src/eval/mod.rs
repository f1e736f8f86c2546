//! Cluster decoding and evaluation metrics.

pub mod assignment;
pub mod coref;
pub mod gap;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

pub use assignment::max_weight_assignment;
pub use coref::{b_cubed, b_cubed_counts, ceaf_phi4, ceaf_phi4_counts, muc, muc_counts};
pub use gap::{bias, gap_resolve, gap_score, GapDecision, GapReport, MatchPolicy};

use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::model::AntecedentTable;

/// Disjoint clusters of spans, each sorted, ordered by first span.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    clusters: Vec<Vec<Span>>,
}

impl Partition {
    /// Empty clusters are dropped; a span listed in two clusters is an error.
    pub fn new(clusters: Vec<Vec<Span>>) -> Result<Self> {
        let mut seen = HashMap::new();
        let mut out = Vec::with_capacity(clusters.len());
        for (i, mut c) in clusters.into_iter().enumerate() {
            c.sort();
            c.dedup();
            for &s in &c {
                if let Some(j) = seen.insert(s, i) {
                    return Err(Error::Partition(format!("span {s} is in clusters {j} and {i}")));
                }
            }
            if !c.is_empty() {
                out.push(c);
            }
        }
        out.sort();
        Ok(Self { clusters: out })
    }

    pub fn clusters(&self) -> &[Vec<Span>] {
        &self.clusters
    }

    pub fn into_clusters(self) -> Vec<Vec<Span>> {
        self.clusters
    }

    pub fn num_mentions(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster position of every span.
    pub fn cluster_index(&self) -> HashMap<Span, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.iter().map(move |&s| (s, i)))
            .collect()
    }

    pub fn without_singletons(&self) -> Self {
        Self {
            clusters: self.clusters.iter().filter(|c| c.len() > 1).cloned().collect(),
        }
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Links every span to its best antecedent and returns the connected
/// components of two or more spans.
pub fn decode_clusters(table: &AntecedentTable) -> Partition {
    let n = table.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for x in 0..n {
        if let Some(y) = table.best_antecedent(x) {
            let (a, b) = (find(&mut parent, x), find(&mut parent, y));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: HashMap<usize, Vec<Span>> = HashMap::new();
    for x in 0..n {
        let root = find(&mut parent, x);
        groups.entry(root).or_default().push(table.spans[x]);
    }
    let clusters = groups.into_values().filter(|c| c.len() > 1).collect();
    Partition::new(clusters).expect("components are disjoint")
}

pub(crate) fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricScores {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

/// Numerators and denominators of recall and precision; sums across
/// documents give micro-averaged scores.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricCounts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl MetricCounts {
    pub fn new(recall_num: f64, recall_den: f64, precision_num: f64, precision_den: f64) -> Self {
        Self {
            recall_num,
            recall_den,
            precision_num,
            precision_den,
        }
    }

    pub fn scores(&self) -> MetricScores {
        let ratio = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
        MetricScores::new(ratio(self.precision_num, self.precision_den), ratio(self.recall_num, self.recall_den))
    }
}

impl Add for MetricCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(
            self.recall_num + o.recall_num,
            self.recall_den + o.recall_den,
            self.precision_num + o.precision_num,
            self.precision_den + o.precision_den,
        )
    }
}

impl AddAssign for MetricCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MetricCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn conll_average(muc_f1: f64, b_cubed_f1: f64, ceaf_f1: f64) -> f64 {
    (muc_f1 + b_cubed_f1 + ceaf_f1) / 3.0
}

/// All three metrics for one document.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DocumentCounts {
    pub muc: MetricCounts,
    pub b_cubed: MetricCounts,
    pub ceaf: MetricCounts,
}

impl DocumentCounts {
    pub fn compute(gold: &Partition, predicted: &Partition) -> Self {
        Self {
            muc: muc_counts(gold, predicted),
            b_cubed: b_cubed_counts(gold, predicted),
            ceaf: ceaf_phi4_counts(gold, predicted),
        }
    }
}

impl Add for DocumentCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            muc: self.muc + o.muc,
            b_cubed: self.b_cubed + o.b_cubed,
            ceaf: self.ceaf + o.ceaf,
        }
    }
}

impl std::iter::Sum for DocumentCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Pool numerators and denominators over documents.
    #[default]
    Micro,
    /// Average per-document precision and recall.
    Macro,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub muc: MetricScores,
    pub b_cubed: MetricScores,
    pub ceaf: MetricScores,
    pub conll_f1: f64,
    pub gap: Option<GapReport>,
}

impl MetricReport {
    pub fn from_counts(counts: &DocumentCounts) -> Self {
        Self::from_scores(counts.muc.scores(), counts.b_cubed.scores(), counts.ceaf.scores())
    }

    fn from_scores(muc: MetricScores, b_cubed: MetricScores, ceaf: MetricScores) -> Self {
        Self {
            muc,
            b_cubed,
            ceaf,
            conll_f1: conll_average(muc.f1, b_cubed.f1, ceaf.f1),
            gap: None,
        }
    }

    /// Scores paired gold and predicted partitions, one pair per document.
    pub fn evaluate(pairs: &[(Partition, Partition)], aggregation: Aggregation) -> Self {
        let per_doc: Vec<DocumentCounts> = pairs.iter().map(|(g, p)| DocumentCounts::compute(g, p)).collect();
        match aggregation {
            Aggregation::Micro => Self::from_counts(&per_doc.iter().copied().sum()),
            Aggregation::Macro => {
                let n = per_doc.len().max(1) as f64;
                let mean = |pick: fn(&DocumentCounts) -> MetricCounts| {
                    let (p, r) = per_doc.iter().fold((0.0, 0.0), |(p, r), d| {
                        let s = pick(d).scores();
                        (p + s.precision, r + s.recall)
                    });
                    MetricScores::new(p / n, r / n)
                };
                Self::from_scores(mean(|d| d.muc), mean(|d| d.b_cubed), mean(|d| d.ceaf))
            }
        }
    }

    /// Human-readable table, percentages with two decimals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "metric", "P", "R", "F1");
        for (name, s) in [("MUC", self.muc), ("B3", self.b_cubed), ("CEAF_phi4", self.ceaf)] {
            let _ = writeln!(
                out,
                "{:<10} {:>8.2} {:>8.2} {:>8.2}",
                name,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1
            );
        }
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8.2}", "CoNLL", "", "", 100.0 * self.conll_f1);
        if let Some(g) = self.gap {
            let _ = writeln!(
                out,
                "GAP  M {:.2}  F {:.2}  B {:.2}  O {:.2}",
                100.0 * g.masculine,
                100.0 * g.feminine,
                g.bias,
                100.0 * g.overall
            );
        }
        out
    }

    /// `metric,precision,recall,f1` rows with a header.
    pub fn csv(&self) -> String {
        let mut out = String::from("metric,precision,recall,f1\n");
        for (name, s) in [("muc", self.muc), ("b_cubed", self.b_cubed), ("ceaf_phi4", self.ceaf)] {
            let _ = writeln!(out, "{name},{:.6},{:.6},{:.6}", s.precision, s.recall, s.f1);
        }
        let _ = writeln!(out, "conll_avg,,,{:.6}", self.conll_f1);
        if let Some(g) = self.gap {
            for (name, v) in [("gap_m", g.masculine), ("gap_f", g.feminine), ("gap_b", g.bias), ("gap_o", g.overall)] {
                let _ = writeln!(out, "{name},,,{v:.6}");
            }
        }
        out
    }
}
