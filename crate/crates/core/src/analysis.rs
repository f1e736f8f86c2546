//! Document-length buckets, cluster spread, segment-length sweeps, and
//! cluster-level error tallies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::error::{Error, Result};
use crate::eval::{Aggregation, DocumentCounts, MetricReport, Partition};
use crate::model::{CorefModel, ModelConfig};
use crate::train::{train, TrainConfig};

/// Tokens strictly between the end of the first mention and the start of the
/// last, floored at zero. Single-mention and empty clusters spread 0.
pub fn cluster_spread(cluster: &[Span]) -> usize {
    let (Some(first), Some(last)) = (cluster.iter().min(), cluster.iter().max_by_key(|s| (s.start, s.end))) else {
        return 0;
    };
    last.start.saturating_sub(first.end)
}

/// Mean spread over a document's clusters; 0 without clusters.
pub fn document_spread(clusters: &[Vec<Span>]) -> f64 {
    if clusters.is_empty() {
        return 0.0;
    }
    clusters.iter().map(|c| cluster_spread(c) as f64).sum::<f64>() / clusters.len() as f64
}

/// How document length is measured for bucketing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthUnit {
    #[default]
    Tokens,
    WordPieces,
}

impl FromStr for LengthUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(Self::Tokens),
            "word-pieces" => Ok(Self::WordPieces),
            other => Err(Error::config(format!("unknown length unit `{other}`"))),
        }
    }
}

/// Lower edges of the half-open length buckets; the last is unbounded.
pub const BUCKET_EDGES: [usize; 6] = [0, 128, 256, 512, 768, 1152];

pub fn bucket_of(length: usize) -> usize {
    BUCKET_EDGES.partition_point(|&lo| lo <= length) - 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthBucketRow {
    pub label: String,
    pub doc_count: usize,
    pub mean_spread: f64,
    pub counts: DocumentCounts,
    pub conll_f1: f64,
}

fn bucket_label(i: usize) -> String {
    match BUCKET_EDGES.get(i + 1) {
        Some(hi) => format!("{}-{}", BUCKET_EDGES[i], hi),
        None => format!("{}+", BUCKET_EDGES[i]),
    }
}

fn row(label: String, docs: &[(f64, DocumentCounts)]) -> LengthBucketRow {
    let counts: DocumentCounts = docs.iter().map(|d| d.1).sum();
    let mean_spread = if docs.is_empty() { 0.0 } else { docs.iter().map(|d| d.0).sum::<f64>() / docs.len() as f64 };
    LengthBucketRow {
        label,
        doc_count: docs.len(),
        mean_spread,
        conll_f1: MetricReport::from_counts(&counts).conll_f1,
        counts,
    }
}

/// One row per length bucket, then an `All` row. Spread is measured on gold
/// clusters; F1 pools each bucket's metric counts.
pub fn bucket_report(documents: &[Document], counts: &[DocumentCounts], unit: LengthUnit) -> Result<Vec<LengthBucketRow>> {
    if documents.len() != counts.len() {
        return Err(Error::config(format!(
            "{} documents but {} score entries",
            documents.len(),
            counts.len()
        )));
    }
    let mut buckets: Vec<Vec<(f64, DocumentCounts)>> = vec![Vec::new(); BUCKET_EDGES.len()];
    for (doc, c) in documents.iter().zip(counts) {
        let length = match unit {
            LengthUnit::Tokens => doc.num_tokens(),
            LengthUnit::WordPieces => doc.num_pieces(),
        };
        buckets[bucket_of(length)].push((document_spread(&doc.gold_clusters), *c));
    }
    let mut rows: Vec<_> = buckets.iter().enumerate().map(|(i, b)| row(bucket_label(i), b)).collect();
    rows.push(row("All".into(), &buckets.concat()));
    Ok(rows)
}

pub fn bucket_csv(rows: &[LengthBucketRow]) -> String {
    let mut out = String::from("bucket,docs,spread,conll_f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.1},{:.6}", r.label, r.doc_count, r.mean_spread, r.conll_f1);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub max_segment_len: usize,
    pub report: MetricReport,
}

/// Gold and predicted partitions for every document.
pub fn evaluate_model(model: &CorefModel, documents: &[Document]) -> Result<Vec<(Partition, Partition)>> {
    documents
        .iter()
        .map(|d| Ok((Partition::new(d.gold_clusters.clone())?, Partition::new(model.predict_clusters(d)?)?)))
        .collect()
}

/// Trains one model per segment length from the same seeds and scores each
/// on `dev`. Runs execute concurrently; results are in `lengths` order.
pub fn segment_length_sweep(
    train_docs: &[Document],
    dev_docs: &[Document],
    template: &ModelConfig,
    train_config: &TrainConfig,
    model_seed: u64,
    lengths: &[usize],
) -> Result<Vec<SweepRow>> {
    let configs = lengths
        .iter()
        .map(|&len| {
            let mut c = template.clone();
            c.segmentation.max_segment_len = len;
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>>>()?;
    train_config.validate()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|config| {
                scope.spawn(move || {
                    let max_segment_len = config.segmentation.max_segment_len;
                    let mut model = CorefModel::new(config, model_seed)?;
                    train(train_docs, &mut model, train_config, None)?;
                    let pairs = evaluate_model(&model, dev_docs)?;
                    Ok(SweepRow {
                        max_segment_len,
                        report: MetricReport::evaluate(&pairs, Aggregation::Micro),
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("max_segment_len,muc_f1,b_cubed_f1,ceaf_f1,conll_f1\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.max_segment_len, m.muc.f1, m.b_cubed.f1, m.ceaf.f1, m.conll_f1
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCategory {
    RelatedEntities,
    Lexical,
    Pronouns,
    MentionParaphrasing,
    Conversation,
    Misc,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        Self::RelatedEntities,
        Self::Lexical,
        Self::Pronouns,
        Self::MentionParaphrasing,
        Self::Conversation,
        Self::Misc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::RelatedEntities => "related entities",
            Self::Lexical => "lexical",
            Self::Pronouns => "pronouns",
            Self::MentionParaphrasing => "mention paraphrasing",
            Self::Conversation => "conversation",
            Self::Misc => "misc",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ErrorCategory {
    type Err = String;

    /// Case-insensitive; `_` and `-` stand for spaces, and a trailing `.` is
    /// ignored (`Misc.`).
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.trim().trim_end_matches('.').to_lowercase().replace(['_', '-'], " ");
        Self::ALL
            .into_iter()
            .find(|c| c.label() == norm)
            .ok_or_else(|| format!("unknown error category `{}`", s.trim()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorAnnotation {
    pub doc_key: String,
    pub cluster_id: String,
    pub categories: BTreeSet<ErrorCategory>,
    pub system: String,
}

/// Reads `doc_key \t cluster_id \t categories \t system` lines, categories
/// separated by `;`. Blank lines, `#` comments and a `doc_key` header are
/// skipped.
pub fn parse_error_annotations(contents: &str) -> Result<Vec<ErrorAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || (out.is_empty() && trimmed.starts_with("doc_key\t")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [doc_key, cluster_id, categories, system] = fields[..] else {
            return Err(Error::parse(line_no, format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let categories = categories
            .split(';')
            .filter(|c| !c.trim().is_empty())
            .map(|c| c.parse().map_err(|e| Error::parse(line_no, e)))
            .collect::<Result<BTreeSet<_>>>()?;
        if categories.is_empty() {
            return Err(Error::parse(line_no, "annotation has no category"));
        }
        out.push(ErrorAnnotation {
            doc_key: doc_key.to_string(),
            cluster_id: cluster_id.to_string(),
            categories,
            system: system.to_string(),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SystemErrors {
    pub per_category: BTreeMap<ErrorCategory, usize>,
    /// Distinct erroneous clusters.
    pub total: usize,
}

impl SystemErrors {
    pub fn count(&self, category: ErrorCategory) -> usize {
        self.per_category.get(&category).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ErrorReport {
    pub systems: BTreeMap<String, SystemErrors>,
}

/// Per-system category counts. Repeated lines for the same cluster merge
/// their categories, so each cluster adds at most 1 to any count and exactly
/// 1 to the total.
pub fn error_report(annotations: &[ErrorAnnotation], systems: &[String]) -> ErrorReport {
    let mut clusters: BTreeMap<&str, BTreeMap<(&str, &str), BTreeSet<ErrorCategory>>> =
        systems.iter().map(|s| (s.as_str(), BTreeMap::new())).collect();
    for a in annotations {
        clusters
            .entry(&a.system)
            .or_default()
            .entry((&a.doc_key, &a.cluster_id))
            .or_default()
            .extend(&a.categories);
    }
    let systems = clusters
        .into_iter()
        .map(|(system, by_cluster)| {
            let mut e = SystemErrors {
                per_category: ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect(),
                total: by_cluster.len(),
            };
            for c in by_cluster.values().flatten() {
                *e.per_category.entry(*c).or_default() += 1;
            }
            (system.to_string(), e)
        })
        .collect();
    ErrorReport { systems }
}

impl ErrorReport {
    pub fn table(&self) -> String {
        let mut out = String::from("category");
        for s in self.systems.keys() {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        for c in ErrorCategory::ALL {
            out.push_str(c.label());
            for e in self.systems.values() {
                let _ = write!(out, "\t{}", e.count(c));
            }
            out.push('\n');
        }
        out.push_str("total");
        for e in self.systems.values() {
            let _ = write!(out, "\t{}", e.total);
        }
        out.push('\n');
        out
    }
}
