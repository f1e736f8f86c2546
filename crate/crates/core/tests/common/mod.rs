#![allow(dead_code)]

use coref_core::corpus::{Document, Genre, Span, SubwordVocabulary, Token};
use coref_core::encoder::EncoderConfig;
use coref_core::model::{ModelConfig, Precision, ScorerConfig};
use coref_core::segment::{SegmentationConfig, Variant};
use rand::Rng;

pub const FIXTURE: &str = include_str!("../fixtures/sample.conll");

/// One word with the ids of the gold clusters it starts/ends; mentions here
/// are single tokens.
pub type Word<'a> = (&'a str, Option<usize>);

/// Builds an untokenized document; sentences end after each `.` token.
pub fn document(key: &str, words: &[Word], speakers: &[&str]) -> Document {
    let mut sentence = 0;
    let mut tokens = Vec::new();
    for (i, (w, _)) in words.iter().enumerate() {
        tokens.push(Token {
            surface: w.to_string(),
            sentence_index: sentence,
            token_index_in_doc: i,
            speaker: speakers[sentence % speakers.len()].to_string(),
            word_piece_range: 0..0,
            columns: Vec::new(),
        });
        if *w == "." {
            sentence += 1;
        }
    }
    let num_clusters = words.iter().filter_map(|w| w.1).max().map_or(0, |m| m + 1);
    let gold_clusters = (0..num_clusters)
        .map(|c| {
            words
                .iter()
                .enumerate()
                .filter(|(_, w)| w.1 == Some(c))
                .map(|(i, _)| Span::new(i, i))
                .collect()
        })
        .collect();
    Document {
        doc_key: format!("{key}_0"),
        name: key.to_string(),
        part: "000".into(),
        genre: Genre::from_doc_key(key),
        tokens,
        word_pieces: Vec::new(),
        gold_clusters,
    }
}

pub fn vocabulary_for(docs: &[Document], min_count: usize) -> SubwordVocabulary {
    SubwordVocabulary::covering(docs.iter().flat_map(|d| d.tokens.iter().map(|t| t.surface.as_str())), min_count)
}

pub fn tokenized(mut docs: Vec<Document>, vocab: &SubwordVocabulary) -> Vec<Document> {
    for d in &mut docs {
        d.tokenize(vocab);
    }
    docs
}

/// A random tokenized document with pieces drawn from `1..vocab_size`.
pub fn random_document<R: Rng>(rng: &mut R, max_tokens: usize, vocab_size: u32) -> Document {
    let n = rng.gen_range(2..=max_tokens);
    let speakers = ["a", "b", "c"];
    let mut tokens = Vec::new();
    let mut pieces = Vec::new();
    let mut sentence = 0;
    for i in 0..n {
        let count = rng.gen_range(1..=2);
        let start = pieces.len();
        for _ in 0..count {
            pieces.push(rng.gen_range(1..vocab_size));
        }
        tokens.push(Token {
            surface: format!("w{i}"),
            sentence_index: sentence,
            token_index_in_doc: i,
            speaker: speakers[rng.gen_range(0..speakers.len())].to_string(),
            word_piece_range: start..pieces.len(),
            columns: Vec::new(),
        });
        if rng.gen_bool(0.2) {
            sentence += 1;
        }
    }
    let key = ["bc/x", "nw/x", "tc/x", "pt/x"][rng.gen_range(0..4)];
    Document {
        doc_key: format!("{key}_0"),
        name: key.into(),
        part: "000".into(),
        genre: Genre::from_doc_key(key),
        tokens,
        word_pieces: pieces,
        gold_clusters: Vec::new(),
    }
}

/// Hidden size 8, one layer, small scorer.
pub fn toy_config(variant: Variant, max_segment_len: usize, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            hidden_size: 8,
            num_layers: 1,
            num_heads: 2,
            feedforward_size: 16,
            max_positions: max_segment_len.max(8),
            dropout_rate: 0.0,
            vocab_size,
        },
        segmentation: SegmentationConfig::new(variant, max_segment_len).unwrap(),
        scorer: ScorerConfig {
            hidden_size: 12,
            feature_size: 4,
            max_span_width: 3,
            top_span_ratio: 0.8,
            max_antecedents: Some(6),
            refinement_iterations: 2,
            use_width_feature: false,
        },
        precision: Precision::F64,
    }
}

pub fn verdict(criterion: u8, title: &str, passed: bool, detail: &str) {
    println!(
        "criterion {criterion} [{}] {title}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}
