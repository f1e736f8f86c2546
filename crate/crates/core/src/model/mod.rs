//! The span-ranking coreference model.
//!
//! Every span up to a maximum width gets a representation built from its
//! endpoint vectors and an attention-weighted sum of its pieces. Spans are
//! scored as mentions, the best are kept, and each kept span chooses among
//! its preceding spans or the dummy antecedent. Pair scores are refined by
//! repeatedly mixing each span with its expected antecedent.

pub mod scoring;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::corpus::{Document, Genre, Span};
use crate::encoder::{Dropout, EncodeMode, EncoderConfig, SegmentEncoder, SegmentInput, Transformer};
use crate::error::{Error, Result};
use crate::params::{Bound, Component, ParamGrads, ParamId, ParamStore};
use crate::segment::{assemble_token_representations, segment_document, Coverage, SegmentationConfig};
use crate::tensor::{Matrix, Real};

use scoring::{
    coarse_to_fine_antecedents, distance_bucket, enumerate_spans, prune_mentions, Ffnn, RefinementGate,
    NUM_DISTANCE_BUCKETS,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(Error::config(format!("unknown precision `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub hidden_size: usize,
    pub feature_size: usize,
    /// In word pieces.
    pub max_span_width: usize,
    /// Kept mentions per document token; may be infinite.
    pub top_span_ratio: f64,
    /// Antecedent candidates per mention; `None` keeps all.
    #[serde(with = "crate::config::unbounded")]
    pub max_antecedents: Option<usize>,
    pub refinement_iterations: usize,
    pub use_width_feature: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            hidden_size: 150,
            feature_size: 20,
            max_span_width: 10,
            top_span_ratio: 0.4,
            max_antecedents: Some(50),
            refinement_iterations: 2,
            use_width_feature: false,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.feature_size == 0 || self.max_span_width == 0 {
            return Err(Error::config("scorer hidden_size, feature_size and max_span_width must be positive"));
        }
        if self.top_span_ratio.is_nan() || self.top_span_ratio <= 0.0 {
            return Err(Error::config("top_span_ratio must be positive"));
        }
        if self.max_antecedents == Some(0) {
            return Err(Error::config("max_antecedents must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub segmentation: SegmentationConfig,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.segmentation.validate()?;
        self.scorer.validate()?;
        if self.segmentation.max_segment_len > self.encoder.max_positions {
            return Err(Error::config(format!(
                "max_segment_len {} exceeds encoder max_positions {}",
                self.segmentation.max_segment_len, self.encoder.max_positions
            )));
        }
        Ok(())
    }

    pub fn span_dim(&self) -> usize {
        3 * self.encoder.hidden_size + if self.scorer.use_width_feature { self.scorer.feature_size } else { 0 }
    }
}

/// Dropout is only active in `Train`, drawn from a stream seeded by `seed`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunMode {
    Eval,
    Train { seed: u64, dropout: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FfnnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnnIds {
    fn register(store: &mut ParamStore, prefix: &str, component: Component, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: store.add_uniform(format!("{prefix}.w1"), component, input, hidden, rng),
            b1: store.add_filled(format!("{prefix}.b1"), component, 1, hidden, 0.0),
            w2: store.add_uniform(format!("{prefix}.w2"), component, hidden, 1, rng),
            b2: store.add_filled(format!("{prefix}.b2"), component, 1, 1, 0.0),
        }
    }

    pub fn view<'a>(&self, store: &'a ParamStore) -> Ffnn<'a> {
        Ffnn {
            w1: store.get(self.w1),
            b1: store.get(self.b1),
            w2: store.get(self.w2),
            b2: store.get(self.b2),
        }
    }
}

/// Where each model parameter lives in the store.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelLayout {
    pub encoder: Transformer,
    pub overlap_gate: ParamId,
    pub attention_w: ParamId,
    pub attention_b: ParamId,
    pub width_embedding: Option<ParamId>,
    pub mention: FfnnIds,
    pub pair: FfnnIds,
    pub coarse: ParamId,
    pub refine_w: ParamId,
    pub refine_b: ParamId,
    pub speaker_embedding: ParamId,
    pub genre_embedding: ParamId,
    pub distance_embedding: ParamId,
}

impl ModelLayout {
    pub fn register(store: &mut ParamStore, config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.encoder.hidden_size;
        let f = config.scorer.feature_size;
        let h = config.scorer.hidden_size;
        let g = config.span_dim();
        let encoder = Transformer::register(store, config.encoder, rng)?;
        let overlap_gate = store.add_uniform("overlap_gate.w", Component::OverlapGate, 2 * d, d, rng);
        let attention_w = store.add_uniform("span_attention.w", Component::SpanAttention, d, 1, rng);
        let attention_b = store.add_filled("span_attention.b", Component::SpanAttention, 1, 1, 0.0);
        let width_embedding = config.scorer.use_width_feature.then(|| {
            store.add_scaled("width_embedding", Component::WidthEmbedding, config.scorer.max_span_width, f, 0.5, rng)
        });
        let mention = FfnnIds::register(store, "ffnn_mention", Component::MentionScorer, g, h, rng);
        let pair = FfnnIds::register(store, "ffnn_pair", Component::PairScorer, 3 * g + 3 * f, h, rng);
        let coarse = store.add_uniform("coarse_bilinear", Component::CoarseBilinear, g, g, rng);
        let refine_w = store.add_uniform("refinement_gate.w", Component::RefinementGate, 2 * g, g, rng);
        let refine_b = store.add_filled("refinement_gate.b", Component::RefinementGate, 1, g, 0.0);
        let fe = Component::FeatureEmbeddings;
        let speaker_embedding = store.add_scaled("features.same_speaker", fe, 2, f, 0.5, rng);
        let genre_embedding = store.add_scaled("features.genre", fe, Genre::ALL.len(), f, 0.5, rng);
        let distance_embedding = store.add_scaled("features.distance", fe, NUM_DISTANCE_BUCKETS, f, 0.5, rng);
        Ok(Self {
            encoder,
            overlap_gate,
            attention_w,
            attention_b,
            width_embedding,
            mention,
            pair,
            coarse,
            refine_w,
            refine_b,
            speaker_embedding,
            genre_embedding,
            distance_embedding,
        })
    }
}

/// Scores for every kept span against its candidate antecedents.
#[derive(Clone, Debug, PartialEq)]
pub struct AntecedentTable {
    /// Kept spans in word-piece coordinates, ordered by position.
    pub spans: Vec<Span>,
    pub mention_scores: Vec<f64>,
    /// Indices into `spans` of each span's candidates, in position order.
    pub antecedents: Vec<Vec<usize>>,
    /// Dummy antecedent first (always 0), then one score per candidate.
    pub scores: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl AntecedentTable {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Highest-scoring antecedent of span `x`; `None` when the dummy wins.
    /// Ties go to the dummy, then to the earlier candidate.
    pub fn best_antecedent(&self, x: usize) -> Option<usize> {
        let row = &self.scores[x];
        let mut best = 0;
        for (i, &s) in row.iter().enumerate().skip(1) {
            if s > row[best] {
                best = i;
            }
        }
        (best > 0).then(|| self.antecedents[x][best - 1])
    }
}

/// Lookup indices of the pair features of `x` and its antecedent `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairFeatureIndex {
    pub same_speaker: usize,
    pub genre: usize,
    pub distance: usize,
}

/// Features for retained spans `x` and `y` (indices into `spans`, `y < x`).
/// Speakers are compared on each span's first token.
pub fn pair_feature_index(doc: &Document, spans: &[Span], x: usize, y: usize) -> PairFeatureIndex {
    let speaker = |i: usize| doc.speaker_of(doc.token_of_piece(spans[i].start));
    PairFeatureIndex {
        same_speaker: usize::from(speaker(x) == speaker(y)),
        genre: doc.genre.index(),
        distance: distance_bucket(x - y),
    }
}

struct Scored {
    spans: Vec<Span>,
    mention: Vec<f64>,
    candidates: Vec<Vec<usize>>,
    width: usize,
    scores: Var,
    mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct CorefModel {
    pub config: ModelConfig,
    pub layout: ModelLayout,
    pub params: ParamStore,
}

impl CorefModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = ModelLayout::register(&mut params, &config, &mut rng)?;
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model around stored parameter values, checking that names
    /// and shapes match the layout `config` implies.
    pub fn from_parts(config: ModelConfig, stored: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if stored.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} tensors stored, configuration needs {}",
                stored.len(),
                model.params.len()
            )));
        }
        for ((_, want), (_, got)) in model.params.iter().zip(stored.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    got.name,
                    got.value.shape(),
                    want.name,
                    want.value.shape()
                )));
            }
        }
        model.params = stored;
        Ok(model)
    }

    pub fn mention_ffnn(&self) -> Ffnn<'_> {
        self.layout.mention.view(&self.params)
    }

    pub fn pair_ffnn(&self) -> Ffnn<'_> {
        self.layout.pair.view(&self.params)
    }

    pub fn refinement_gate(&self) -> RefinementGate<'_> {
        RefinementGate {
            w: self.params.get(self.layout.refine_w),
            b: self.params.get(self.layout.refine_b),
        }
    }

    /// Concatenated feature embeddings `phi(x, y)`.
    pub fn pair_features(&self, index: PairFeatureIndex) -> Vec<f64> {
        let l = &self.layout;
        let mut phi = self.params.get(l.speaker_embedding).row(index.same_speaker).to_vec();
        phi.extend_from_slice(self.params.get(l.genre_embedding).row(index.genre));
        phi.extend_from_slice(self.params.get(l.distance_embedding).row(index.distance));
        phi
    }

    fn check_document(&self, doc: &Document) -> Result<()> {
        if !doc.is_tokenized() {
            return Err(Error::Encoder(format!("document `{}` has not been tokenized", doc.doc_key)));
        }
        if let Some(&bad) = doc.word_pieces.iter().find(|&&p| p as usize >= self.config.encoder.vocab_size) {
            return Err(Error::Encoder(format!(
                "document `{}` uses piece id {bad}, beyond the model vocabulary of {}",
                doc.doc_key, self.config.encoder.vocab_size
            )));
        }
        Ok(())
    }

    fn encode_on_tape<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &mut Bound<T>,
        doc: &Document,
        dropout: &mut Dropout,
    ) -> Result<Var> {
        let n = doc.num_pieces();
        let segments = segment_document(doc, &self.config.segmentation)?;
        let outputs = segments
            .iter()
            .map(|s| self.layout.encoder.forward(tape, bound, &s.pieces, dropout))
            .collect::<Result<Vec<_>>>()?;
        let all = if outputs.len() == 1 { outputs[0] } else { tape.concat_rows(&outputs) };
        let coverage = Coverage::build(&segments, n)?;
        let doubly = coverage.secondary.iter().any(Option::is_some);
        let h = if !doubly {
            if coverage.primary.iter().enumerate().all(|(i, &p)| i == p) {
                all
            } else {
                tape.gather_rows(all, coverage.primary.clone())
            }
        } else {
            let r1 = tape.gather_rows(all, coverage.primary.clone());
            let r2 = tape.gather_rows(all, coverage.secondary_or_primary());
            let both = tape.concat_cols(&[r1, r2]);
            let w = bound.var(tape, self.layout.overlap_gate);
            let pre = tape.matmul(both, w);
            let f = tape.sigmoid(pre);
            let diff = tape.sub(r1, r2);
            let mixed = tape.mul(f, diff);
            tape.add(r2, mixed)
        };
        Ok(dropout.apply(tape, h))
    }

    fn ffnn_on_tape<T: Real>(
        tape: &mut Tape<T>,
        bound: &mut Bound<T>,
        ids: &FfnnIds,
        x: Var,
        dropout: &mut Dropout,
    ) -> Var {
        let w1 = bound.var(tape, ids.w1);
        let b1 = bound.var(tape, ids.b1);
        let w2 = bound.var(tape, ids.w2);
        let b2 = bound.var(tape, ids.b2);
        let pre = tape.matmul(x, w1);
        let pre = tape.add_row(pre, b1);
        let hidden = tape.relu(pre);
        let hidden = dropout.apply(tape, hidden);
        let out = tape.matmul(hidden, w2);
        tape.add_row(out, b2)
    }

    fn span_reps_on_tape<T: Real>(&self, tape: &mut Tape<T>, bound: &mut Bound<T>, h: Var, spans: &[Span]) -> Var {
        let wmax = spans.iter().map(Span::width).max().unwrap_or(1);
        let aw = bound.var(tape, self.layout.attention_w);
        let ab = bound.var(tape, self.layout.attention_b);
        let z = tape.matmul(h, aw);
        let z = tape.add_row(z, ab);
        let mut index = Vec::with_capacity(spans.len() * wmax);
        let mut mask = Vec::with_capacity(spans.len() * wmax);
        for s in spans {
            for o in 0..wmax {
                index.push((s.start + o).min(s.end));
                mask.push(o < s.width());
            }
        }
        let logits = tape.gather_rows(z, index.clone());
        let logits = tape.reshape(logits, spans.len(), wmax);
        let alpha = tape.softmax_rows(logits, Some(mask));
        let alpha = tape.reshape(alpha, spans.len() * wmax, 1);
        let rows = tape.gather_rows(h, index);
        let weighted = tape.mul_col(rows, alpha);
        let attended = tape.sum_row_groups(weighted, wmax);
        let starts = tape.gather_rows(h, spans.iter().map(|s| s.start).collect());
        let ends = tape.gather_rows(h, spans.iter().map(|s| s.end).collect());
        let mut parts = vec![starts, ends, attended];
        if let Some(id) = self.layout.width_embedding {
            let table = bound.var(tape, id);
            parts.push(tape.gather_rows(table, spans.iter().map(|s| s.width() - 1).collect()));
        }
        tape.concat_cols(&parts)
    }

    fn score_on_tape<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &mut Bound<T>,
        doc: &Document,
        h: Var,
        dropout: &mut Dropout,
    ) -> Option<Scored> {
        let cfg = &self.config.scorer;
        let all_spans = enumerate_spans(doc, cfg.max_span_width);
        if all_spans.is_empty() {
            return None;
        }
        let g_all = self.span_reps_on_tape(tape, bound, h, &all_spans);
        let mention_all = Self::ffnn_on_tape(tape, bound, &self.layout.mention, g_all, dropout);
        let mention_vals: Vec<f64> = tape.value(mention_all).data().iter().map(|v| v.as_f64()).collect();
        let keep = prune_mentions(&all_spans, &mention_vals, cfg.top_span_ratio, doc.num_tokens());
        let spans: Vec<Span> = keep.iter().map(|&i| all_spans[i]).collect();
        let mention: Vec<f64> = keep.iter().map(|&i| mention_vals[i]).collect();
        let m = spans.len();
        let g = tape.gather_rows(g_all, keep.clone());
        let sm = tape.gather_rows(mention_all, keep);

        let g_vals = tape.value(g);
        let reps: Vec<Vec<f64>> = (0..m).map(|r| g_vals.row(r).iter().map(|v| v.as_f64()).collect()).collect();
        let candidates = coarse_to_fine_antecedents(&reps, &mention, self.params.get(self.layout.coarse), cfg.max_antecedents);

        let width = 1 + candidates.iter().map(Vec::len).max().unwrap_or(0);
        let mut mask = vec![false; m * width];
        let (mut xs, mut ys, mut positions) = (Vec::new(), Vec::new(), Vec::new());
        let (mut sp, mut gen, mut dist) = (Vec::new(), Vec::new(), Vec::new());
        for (x, cands) in candidates.iter().enumerate() {
            mask[x * width] = true;
            for (j, &y) in cands.iter().enumerate() {
                let pos = x * width + 1 + j;
                mask[pos] = true;
                positions.push(pos);
                xs.push(x);
                ys.push(y);
                let f = pair_feature_index(doc, &spans, x, y);
                sp.push(f.same_speaker);
                gen.push(f.genre);
                dist.push(f.distance);
            }
        }
        if xs.is_empty() {
            let scores = tape.leaf(Matrix::zeros(m, width));
            return Some(Scored {
                spans,
                mention,
                candidates,
                width,
                scores,
                mask,
            });
        }
        let phi = {
            let l = &self.layout;
            let se = bound.var(tape, l.speaker_embedding);
            let ge = bound.var(tape, l.genre_embedding);
            let de = bound.var(tape, l.distance_embedding);
            let a = tape.gather_rows(se, sp);
            let b = tape.gather_rows(ge, gen);
            let c = tape.gather_rows(de, dist);
            tape.concat_cols(&[a, b, c])
        };
        let sx = tape.gather_rows(sm, xs.clone());
        let sy = tape.gather_rows(sm, ys.clone());
        let mention_pair = tape.add(sx, sy);

        // refinement attention: row x holds P(eps) at column x and P(y) at column y
        let mut attn_src: Vec<usize> = (0..m).map(|x| x * width).collect();
        let mut attn_dst: Vec<usize> = (0..m).map(|x| x * m + x).collect();
        attn_src.extend(positions.iter().copied());
        attn_dst.extend(xs.iter().zip(&ys).map(|(&x, &y)| x * m + y));

        let mut current = g;
        let mut iteration = 0;
        let scores = loop {
            let gx = tape.gather_rows(current, xs.clone());
            let gy = tape.gather_rows(current, ys.clone());
            let prod = tape.mul(gx, gy);
            let input = tape.concat_cols(&[gx, gy, prod, phi]);
            let fine = Self::ffnn_on_tape(tape, bound, &self.layout.pair, input, dropout);
            let total = tape.add(mention_pair, fine);
            let scores = tape.scatter(total, positions.clone(), m, width);
            if iteration == cfg.refinement_iterations {
                break scores;
            }
            let p = tape.softmax_rows(scores, Some(mask.clone()));
            let flat = tape.reshape(p, m * width, 1);
            let picked = tape.gather_rows(flat, attn_src.clone());
            let a_mat = tape.scatter(picked, attn_dst.clone(), m, m);
            let expected = tape.matmul(a_mat, current);
            let both = tape.concat_cols(&[current, expected]);
            let wf = bound.var(tape, self.layout.refine_w);
            let bf = bound.var(tape, self.layout.refine_b);
            let pre = tape.matmul(both, wf);
            let pre = tape.add_row(pre, bf);
            let f = tape.sigmoid(pre);
            let diff = tape.sub(current, expected);
            let step = tape.mul(f, diff);
            current = tape.add(expected, step);
            iteration += 1;
        };
        Some(Scored {
            spans,
            mention,
            candidates,
            width,
            scores,
            mask,
        })
    }

    fn table<T: Real>(tape: &Tape<T>, scored: Scored) -> AntecedentTable {
        let values = tape.value(scored.scores);
        let mut scores = Vec::with_capacity(scored.spans.len());
        let mut probabilities = Vec::with_capacity(scored.spans.len());
        for (x, cands) in scored.candidates.iter().enumerate() {
            let row: Vec<f64> = (0..=cands.len()).map(|j| values.get(x, j).as_f64()).collect();
            probabilities.push(scoring::antecedent_distribution(&row));
            scores.push(row);
        }
        AntecedentTable {
            spans: scored.spans,
            mention_scores: scored.mention,
            antecedents: scored.candidates,
            scores,
            probabilities,
        }
    }

    fn empty_table() -> AntecedentTable {
        AntecedentTable {
            spans: Vec::new(),
            mention_scores: Vec::new(),
            antecedents: Vec::new(),
            scores: Vec::new(),
            probabilities: Vec::new(),
        }
    }

    fn predict_at<T: Real>(&self, doc: &Document) -> Result<AntecedentTable> {
        self.check_document(doc)?;
        let mut tape: Tape<T> = Tape::new();
        let mut bound = Bound::new(&self.params);
        let mut dropout = Dropout::eval();
        let h = self.encode_on_tape(&mut tape, &mut bound, doc, &mut dropout)?;
        Ok(match self.score_on_tape(&mut tape, &mut bound, doc, h, &mut dropout) {
            Some(s) => Self::table(&tape, s),
            None => Self::empty_table(),
        })
    }

    /// Antecedent table for a tokenized document, in eval mode.
    pub fn predict(&self, doc: &Document) -> Result<AntecedentTable> {
        match self.config.precision {
            Precision::F64 => self.predict_at::<f64>(doc),
            Precision::F32 => self.predict_at::<f32>(doc),
        }
    }

    /// Assembled per-piece vectors from the built-in encoder, in eval mode.
    pub fn piece_vectors(&self, doc: &Document) -> Result<Matrix> {
        self.check_document(doc)?;
        let mut tape: Tape<f64> = Tape::new();
        let mut bound = Bound::new(&self.params);
        let h = self.encode_on_tape(&mut tape, &mut bound, doc, &mut Dropout::eval())?;
        Ok(tape.value(h).clone())
    }

    /// Per-piece vectors from an external encoder, merged with this model's
    /// overlap gate.
    pub fn piece_vectors_with(&self, doc: &Document, encoder: &dyn SegmentEncoder) -> Result<Matrix> {
        if encoder.hidden_size() != self.config.encoder.hidden_size {
            return Err(Error::Encoder(format!(
                "encoder width {} does not match model width {}",
                encoder.hidden_size(),
                self.config.encoder.hidden_size
            )));
        }
        let segments = segment_document(doc, &self.config.segmentation)?;
        let outputs = segments
            .iter()
            .map(|s| {
                encoder.encode(
                    &SegmentInput {
                        doc_key: &doc.doc_key,
                        start: s.start,
                        pieces: &s.pieces,
                    },
                    EncodeMode::Eval,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let gate = self.params.get(self.layout.overlap_gate);
        assemble_token_representations(&segments, &outputs, gate, doc.num_pieces())
    }

    /// Scores a document from precomputed per-piece vectors.
    pub fn predict_from_vectors(&self, doc: &Document, pieces: &Matrix) -> Result<AntecedentTable> {
        if pieces.shape() != (doc.num_pieces(), self.config.encoder.hidden_size) {
            return Err(Error::Encoder(format!(
                "piece vectors are {}x{}, expected {}x{}",
                pieces.rows(),
                pieces.cols(),
                doc.num_pieces(),
                self.config.encoder.hidden_size
            )));
        }
        let mut tape: Tape<f64> = Tape::new();
        let mut bound = Bound::new(&self.params);
        let h = tape.leaf(pieces.clone());
        Ok(match self.score_on_tape(&mut tape, &mut bound, doc, h, &mut Dropout::eval()) {
            Some(s) => Self::table(&tape, s),
            None => Self::empty_table(),
        })
    }

    fn loss_at<T: Real>(&self, doc: &Document, mode: RunMode, want_grads: bool) -> Result<(f64, Option<ParamGrads>)> {
        self.check_document(doc)?;
        let mut tape: Tape<T> = Tape::new();
        let mut bound = Bound::new(&self.params);
        let mut rng;
        let mut dropout = match mode {
            RunMode::Eval => Dropout::eval(),
            RunMode::Train { seed, dropout } => {
                rng = ChaCha8Rng::seed_from_u64(seed);
                Dropout::train(&mut rng, dropout)
            }
        };
        let h = self.encode_on_tape(&mut tape, &mut bound, doc, &mut dropout)?;
        let Some(scored) = self.score_on_tape(&mut tape, &mut bound, doc, h, &mut dropout) else {
            return Ok((0.0, want_grads.then(|| self.params.zero_grads())));
        };
        let gold_mask = gold_mask(doc, &scored);
        let all = tape.log_sum_exp_rows(scored.scores, Some(scored.mask.clone()));
        let gold = tape.log_sum_exp_rows(scored.scores, Some(gold_mask));
        let diff = tape.sub(all, gold);
        let loss = tape.sum(diff);
        let value = tape.scalar(loss).as_f64();
        let grads = want_grads.then(|| bound.gradients(&tape.backward(loss)));
        Ok((value, grads))
    }

    /// Marginal log-likelihood loss of the gold clusters.
    pub fn loss(&self, doc: &Document, mode: RunMode) -> Result<f64> {
        match self.config.precision {
            Precision::F64 => self.loss_at::<f64>(doc, mode, false),
            Precision::F32 => self.loss_at::<f32>(doc, mode, false),
        }
        .map(|(l, _)| l)
    }

    pub fn loss_and_gradients(&self, doc: &Document, mode: RunMode) -> Result<(f64, ParamGrads)> {
        let (l, g) = match self.config.precision {
            Precision::F64 => self.loss_at::<f64>(doc, mode, true)?,
            Precision::F32 => self.loss_at::<f32>(doc, mode, true)?,
        };
        Ok((l, g.expect("gradients requested")))
    }

    /// Predicted clusters over token spans, singletons dropped.
    pub fn predict_clusters(&self, doc: &Document) -> Result<Vec<Vec<Span>>> {
        let table = self.predict(doc)?;
        Ok(crate::eval::decode_clusters(&table)
            .clusters()
            .iter()
            .filter_map(|c| c.iter().map(|&s| doc.piece_span_to_tokens(s)).collect::<Option<Vec<_>>>())
            .collect())
    }
}

/// Gold antecedents of each kept span among its candidates; the dummy when
/// there are none.
fn gold_mask(doc: &Document, scored: &Scored) -> Vec<bool> {
    let mut cluster_of: HashMap<Span, usize> = HashMap::new();
    let mut first_of: Vec<Span> = Vec::new();
    for (c, spans) in doc.gold_piece_clusters().iter().enumerate() {
        for &s in spans {
            cluster_of.insert(s, c);
        }
        first_of.push(spans.iter().copied().min().unwrap_or(Span::new(0, 0)));
    }
    let w = scored.width;
    let mut mask = vec![false; scored.mask.len()];
    for (x, cands) in scored.candidates.iter().enumerate() {
        let cx = cluster_of.get(&scored.spans[x]).copied();
        let mut any = false;
        if let Some(c) = cx {
            for (j, y) in cands.iter().enumerate() {
                if cluster_of.get(&scored.spans[*y]) == Some(&c) {
                    mask[x * w + 1 + j] = true;
                    any = true;
                }
            }
            if !any && first_of[c] < scored.spans[x] {
                log::debug!(
                    "{}: no gold antecedent of {} survived pruning; using the dummy",
                    doc.doc_key,
                    scored.spans[x]
                );
            }
        }
        if !any {
            mask[x * w] = true;
        }
    }
    mask
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::segment::Variant;

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
}
