//! Contextual word-piece encoders.
//!
//! [`SegmentEncoder`] is the contract every encoder satisfies: given the
//! pieces of one segment it returns one `d`-vector per piece. The built-in
//! implementation is a small post-layer-norm transformer with learned
//! absolute positions; [`PrecomputedVectors`] serves vectors produced
//! elsewhere, and [`RandomEmbeddingEncoder`] is a context-free baseline.

use std::collections::BTreeMap;
use std::io::{BufRead, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, Component, ParamId, ParamStore};
use crate::tensor::{Matrix, Real};

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_size: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
    pub vocab_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_size: 16,
            num_layers: 1,
            num_heads: 2,
            feedforward_size: 32,
            max_positions: 128,
            dropout_rate: 0.1,
            vocab_size: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_heads == 0 || !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::config(format!(
                "hidden_size {} must be a positive multiple of num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("encoder dropout_rate must lie in [0, 1)"));
        }
        if self.vocab_size == 0 || self.max_positions == 0 || self.feedforward_size == 0 {
            return Err(Error::config("vocab_size, max_positions and feedforward_size must be positive"));
        }
        Ok(())
    }
}

/// Train mode applies dropout from a stream seeded by `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodeMode {
    Eval,
    Train { seed: u64 },
}

/// Inverted-dropout keep mask: entries are `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Dropout state for one forward pass; inactive in eval mode.
pub struct Dropout<'r> {
    rng: Option<&'r mut ChaCha8Rng>,
    rate: f64,
}

impl<'r> Dropout<'r> {
    pub fn eval() -> Self {
        Self { rng: None, rate: 0.0 }
    }

    pub fn train(rng: &'r mut ChaCha8Rng, rate: f64) -> Self {
        Self { rng: Some(rng), rate }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }

    pub fn apply<T: Real>(&mut self, tape: &mut Tape<T>, x: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                let (r, c) = tape.value(x).shape();
                let mask = tape.leaf(dropout_mask(r, c, self.rate, rng).cast());
                tape.mul(x, mask)
            }
            _ => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerIds {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

/// Parameter layout of the built-in transformer inside a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transformer {
    config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    layers: Vec<LayerIds>,
}

impl Transformer {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_size;
        let f = config.feedforward_size;
        let c = Component::Encoder;
        let token_embedding = store.add_scaled("encoder.token_embedding", c, config.vocab_size, d, 0.5, rng);
        let position_embedding = store.add_scaled("encoder.position_embedding", c, config.max_positions, d, 0.5, rng);
        let layers = (0..config.num_layers)
            .map(|l| {
                let mut mat = |name: &str, r: usize, cols: usize| {
                    store.add_uniform(format!("encoder.layer{l}.{name}"), c, r, cols, rng)
                };
                let wq = mat("wq", d, d);
                let wk = mat("wk", d, d);
                let wv = mat("wv", d, d);
                let wo = mat("wo", d, d);
                let w1 = mat("w1", d, f);
                let w2 = mat("w2", f, d);
                let mut fill = |name: &str, cols: usize, v: f64| store.add_filled(format!("encoder.layer{l}.{name}"), c, 1, cols, v);
                LayerIds {
                    wq,
                    bq: fill("bq", d, 0.0),
                    wk,
                    bk: fill("bk", d, 0.0),
                    wv,
                    bv: fill("bv", d, 0.0),
                    wo,
                    bo: fill("bo", d, 0.0),
                    ln1_gain: fill("ln1_gain", d, 1.0),
                    ln1_bias: fill("ln1_bias", d, 0.0),
                    w1,
                    b1: fill("b1", f, 0.0),
                    w2,
                    b2: fill("b2", d, 0.0),
                    ln2_gain: fill("ln2_gain", d, 1.0),
                    ln2_bias: fill("ln2_bias", d, 0.0),
                }
            })
            .collect();
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn affine<T: Real>(tape: &mut Tape<T>, bound: &mut Bound<T>, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = bound.var(tape, w);
        let b = bound.var(tape, b);
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }

    fn layer_norm<T: Real>(tape: &mut Tape<T>, bound: &mut Bound<T>, x: Var, gain: ParamId, bias: ParamId) -> Var {
        let n = tape.layer_norm_rows(x, LAYER_NORM_EPS);
        let g = bound.var(tape, gain);
        let b = bound.var(tape, bias);
        let scaled = tape.mul_row(n, g);
        tape.add_row(scaled, b)
    }

    /// Records the encoder over one segment on `tape`; returns `|pieces| × d`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        bound: &mut Bound<T>,
        pieces: &[u32],
        dropout: &mut Dropout,
    ) -> Result<Var> {
        let n = pieces.len();
        if n == 0 {
            return Err(Error::Encoder("empty segment".into()));
        }
        if n > self.config.max_positions {
            return Err(Error::SegmentTooLong {
                len: n,
                max: self.config.max_positions,
            });
        }
        if let Some(&bad) = pieces.iter().find(|&&p| p as usize >= self.config.vocab_size) {
            return Err(Error::Encoder(format!(
                "piece id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let tok_table = bound.var(tape, self.token_embedding);
        let pos_table = bound.var(tape, self.position_embedding);
        let tok = tape.gather_rows(tok_table, pieces.iter().map(|&p| p as usize).collect());
        let pos = tape.gather_rows(pos_table, (0..n).collect());
        let mut x = tape.add(tok, pos);
        x = dropout.apply(tape, x);

        let d = self.config.hidden_size;
        let heads = self.config.num_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let q = Self::affine(tape, bound, x, layer.wq, layer.bq);
            let k = Self::affine(tape, bound, x, layer.wk, layer.bk);
            let v = Self::affine(tape, bound, x, layer.wv, layer.bv);
            let mut contexts = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = tape.slice_cols(q, h * dh, dh);
                let kh = tape.slice_cols(k, h * dh, dh);
                let vh = tape.slice_cols(v, h * dh, dh);
                let logits = tape.matmul_nt(qh, kh);
                let logits = tape.scale(logits, scale);
                let attn = tape.softmax_rows(logits, None);
                contexts.push(tape.matmul(attn, vh));
            }
            let ctx = if heads == 1 { contexts[0] } else { tape.concat_cols(&contexts) };
            let attn_out = Self::affine(tape, bound, ctx, layer.wo, layer.bo);
            let attn_out = dropout.apply(tape, attn_out);
            let res = tape.add(x, attn_out);
            let h1 = Self::layer_norm(tape, bound, res, layer.ln1_gain, layer.ln1_bias);

            let ff = Self::affine(tape, bound, h1, layer.w1, layer.b1);
            let ff = tape.gelu(ff);
            let ff = Self::affine(tape, bound, ff, layer.w2, layer.b2);
            let ff = dropout.apply(tape, ff);
            let res = tape.add(h1, ff);
            x = Self::layer_norm(tape, bound, res, layer.ln2_gain, layer.ln2_bias);
        }
        Ok(x)
    }

    /// Borrows this layout together with its parameter values as an encoder.
    pub fn view<'a>(&'a self, store: &'a ParamStore) -> TransformerView<'a> {
        TransformerView { layout: self, store }
    }
}

/// One segment handed to an encoder.
#[derive(Clone, Copy, Debug)]
pub struct SegmentInput<'a> {
    pub doc_key: &'a str,
    /// Offset of the segment within its document.
    pub start: usize,
    pub pieces: &'a [u32],
}

pub trait SegmentEncoder {
    fn hidden_size(&self) -> usize;
    fn max_positions(&self) -> usize;
    /// Returns one row per input piece.
    fn encode(&self, input: &SegmentInput, mode: EncodeMode) -> Result<Matrix>;
}

#[derive(Clone, Copy)]
pub struct TransformerView<'a> {
    layout: &'a Transformer,
    store: &'a ParamStore,
}

impl SegmentEncoder for TransformerView<'_> {
    fn hidden_size(&self) -> usize {
        self.layout.config.hidden_size
    }

    fn max_positions(&self) -> usize {
        self.layout.config.max_positions
    }

    fn encode(&self, input: &SegmentInput, mode: EncodeMode) -> Result<Matrix> {
        let mut tape: Tape<f64> = Tape::new();
        let mut bound = Bound::new(self.store);
        let mut rng;
        let mut dropout = match mode {
            EncodeMode::Eval => Dropout::eval(),
            EncodeMode::Train { seed } => {
                rng = ChaCha8Rng::seed_from_u64(seed);
                Dropout::train(&mut rng, self.layout.config.dropout_rate)
            }
        };
        let out = self.layout.forward(&mut tape, &mut bound, input.pieces, &mut dropout)?;
        Ok(tape.value(out).clone())
    }
}

/// A transformer that owns its parameters.
#[derive(Clone, Debug)]
pub struct ToyTransformer {
    pub layout: Transformer,
    pub params: ParamStore,
}

impl ToyTransformer {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layout = Transformer::register(&mut params, config, &mut rng)?;
        Ok(Self { layout, params })
    }

    pub fn view(&self) -> TransformerView<'_> {
        self.layout.view(&self.params)
    }
}

impl SegmentEncoder for ToyTransformer {
    fn hidden_size(&self) -> usize {
        self.view().hidden_size()
    }

    fn max_positions(&self) -> usize {
        self.view().max_positions()
    }

    fn encode(&self, input: &SegmentInput, mode: EncodeMode) -> Result<Matrix> {
        self.view().encode(input, mode)
    }
}

/// Fixed random vector per vocabulary id; no mixing between positions.
#[derive(Clone, Debug)]
pub struct RandomEmbeddingEncoder {
    table: Matrix,
    max_positions: usize,
}

impl RandomEmbeddingEncoder {
    pub fn new(vocab_size: usize, hidden_size: usize, max_positions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..vocab_size * hidden_size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            table: Matrix::from_vec(vocab_size, hidden_size, data),
            max_positions,
        }
    }
}

impl SegmentEncoder for RandomEmbeddingEncoder {
    fn hidden_size(&self) -> usize {
        self.table.cols()
    }

    fn max_positions(&self) -> usize {
        self.max_positions
    }

    fn encode(&self, input: &SegmentInput, _mode: EncodeMode) -> Result<Matrix> {
        if input.pieces.len() > self.max_positions {
            return Err(Error::SegmentTooLong {
                len: input.pieces.len(),
                max: self.max_positions,
            });
        }
        let mut out = Matrix::zeros(input.pieces.len(), self.table.cols());
        for (i, &p) in input.pieces.iter().enumerate() {
            let row = p as usize % self.table.rows();
            out.row_mut(i).copy_from_slice(self.table.row(row));
        }
        Ok(out)
    }
}

/// Per-document piece vectors read from a file.
///
/// File layout, repeated per document: a text line `doc_key piece_count d`,
/// then `piece_count * d` little-endian 64-bit floats, row-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputedVectors {
    docs: BTreeMap<String, Matrix>,
    hidden_size: usize,
    max_positions: usize,
}

impl PrecomputedVectors {
    pub fn new(hidden_size: usize, max_positions: usize) -> Self {
        Self {
            docs: BTreeMap::new(),
            hidden_size,
            max_positions,
        }
    }

    pub fn insert(&mut self, doc_key: impl Into<String>, vectors: Matrix) -> Result<()> {
        if vectors.cols() != self.hidden_size {
            return Err(Error::Encoder(format!(
                "vectors have width {}, expected {}",
                vectors.cols(),
                self.hidden_size
            )));
        }
        self.docs.insert(doc_key.into(), vectors);
        Ok(())
    }

    pub fn document(&self, doc_key: &str) -> Option<&Matrix> {
        self.docs.get(doc_key)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (key, m) in &self.docs {
            out.extend_from_slice(format!("{key} {} {}\n", m.rows(), m.cols()).as_bytes());
            for x in m.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], max_positions: usize) -> Result<Self> {
        let mut reader = bytes;
        let mut docs = BTreeMap::new();
        let mut hidden = None;
        let mut header = String::new();
        let mut index = 0;
        loop {
            header.clear();
            if reader.read_line(&mut header)? == 0 {
                break;
            }
            index += 1;
            let fields: Vec<&str> = header.split_whitespace().collect();
            let bad = || Error::parse(index, format!("bad vector header `{}`", header.trim_end()));
            let [key, rows, cols] = fields[..] else {
                return Err(bad());
            };
            let rows: usize = rows.parse().map_err(|_| bad())?;
            let cols: usize = cols.parse().map_err(|_| bad())?;
            if *hidden.get_or_insert(cols) != cols {
                return Err(Error::parse(index, "documents disagree on vector width"));
            }
            let mut buf = vec![0u8; rows * cols * 8];
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::parse(index, format!("truncated vectors for `{key}`")))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            docs.insert(key.to_string(), Matrix::from_vec(rows, cols, data));
        }
        Ok(Self {
            docs,
            hidden_size: hidden.unwrap_or(0),
            max_positions,
        })
    }
}

impl SegmentEncoder for PrecomputedVectors {
    fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn max_positions(&self) -> usize {
        self.max_positions
    }

    fn encode(&self, input: &SegmentInput, _mode: EncodeMode) -> Result<Matrix> {
        let n = input.pieces.len();
        if n > self.max_positions {
            return Err(Error::SegmentTooLong {
                len: n,
                max: self.max_positions,
            });
        }
        let m = self
            .docs
            .get(input.doc_key)
            .ok_or_else(|| Error::Encoder(format!("no vectors for document `{}`", input.doc_key)))?;
        if input.start + n > m.rows() {
            return Err(Error::Encoder(format!(
                "pieces {}..{} outside the {} stored for `{}`",
                input.start,
                input.start + n,
                m.rows(),
                input.doc_key
            )));
        }
        let cols = m.cols();
        Ok(Matrix::from_vec(
            n,
            cols,
            m.data()[input.start * cols..(input.start + n) * cols].to_vec(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractEntry {
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContractReport {
    pub entries: Vec<ContractEntry>,
}

impl ContractReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ContractEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    fn record(&mut self, check: &'static str, passed: bool, detail: impl Into<String>) {
        self.entries.push(ContractEntry {
            check,
            passed,
            detail: detail.into(),
        });
    }
}

/// Probes an encoder for output shape, finiteness, eval-mode determinism,
/// and rejection of inputs longer than its declared limit.
pub fn encoder_contract_check(provider: &dyn SegmentEncoder, probes: &[SegmentInput]) -> ContractReport {
    let mut report = ContractReport::default();
    let d = provider.hidden_size();
    for (i, probe) in probes.iter().enumerate() {
        let first = provider.encode(probe, EncodeMode::Eval);
        let out = match first {
            Ok(m) => m,
            Err(e) => {
                report.record("encode", false, format!("probe {i}: {e}"));
                continue;
            }
        };
        let shape_ok = out.shape() == (probe.pieces.len(), d);
        report.record(
            "shape",
            shape_ok,
            format!(
                "probe {i}: got {}x{}, expected {}x{d}",
                out.rows(),
                out.cols(),
                probe.pieces.len()
            ),
        );
        report.record("finite", out.is_finite(), format!("probe {i}"));
        let again = provider.encode(probe, EncodeMode::Eval);
        report.record(
            "eval_determinism",
            again.as_ref().is_ok_and(|m| *m == out),
            format!("probe {i}"),
        );
    }
    if let Some(probe) = probes.first() {
        let limit = provider.max_positions();
        let long: Vec<u32> = probe.pieces.iter().copied().cycle().take(limit + 1).collect();
        let input = SegmentInput {
            doc_key: probe.doc_key,
            start: 0,
            pieces: &long,
        };
        let rejected = !long.is_empty() && provider.encode(&input, EncodeMode::Eval).is_err();
        report.record("length_bound", rejected, format!("{} pieces against limit {limit}", long.len()));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(layers: usize) -> EncoderConfig {
        EncoderConfig {
            hidden_size: 8,
            num_layers: layers,
            num_heads: 2,
            feedforward_size: 12,
            max_positions: 16,
            dropout_rate: 0.3,
            vocab_size: 20,
        }
    }

    fn input(pieces: &[u32]) -> SegmentInput<'_> {
        SegmentInput {
            doc_key: "d",
            start: 0,
            pieces,
        }
    }

    #[test]
    fn zero_layers_is_embedding_sum() {
        let enc = ToyTransformer::new(cfg(0), 1).unwrap();
        let out = enc.encode(&input(&[3, 5, 3]), EncodeMode::Eval).unwrap();
        let tok = enc.params.get(enc.layout.token_embedding);
        let pos = enc.params.get(enc.layout.position_embedding);
        for (i, &p) in [3usize, 5, 3].iter().enumerate() {
            for c in 0..8 {
                assert_eq!(out.get(i, c), tok.get(p, c) + pos.get(i, c));
            }
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_is_seeded() {
        let enc = ToyTransformer::new(cfg(1), 2).unwrap();
        let x = [1, 2, 3, 4];
        let a = enc.encode(&input(&x), EncodeMode::Eval).unwrap();
        assert_eq!(a, enc.encode(&input(&x), EncodeMode::Eval).unwrap());
        let t1 = enc.encode(&input(&x), EncodeMode::Train { seed: 9 }).unwrap();
        let t2 = enc.encode(&input(&x), EncodeMode::Train { seed: 9 }).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, a);
    }

    #[test]
    fn swapping_pieces_changes_output() {
        let enc = ToyTransformer::new(cfg(1), 3).unwrap();
        let a = enc.encode(&input(&[4, 7, 9]), EncodeMode::Eval).unwrap();
        let b = enc.encode(&input(&[7, 4, 9]), EncodeMode::Eval).unwrap();
        assert_ne!(a.row(0), b.row(1));
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn rejects_long_segments_and_bad_ids() {
        let enc = ToyTransformer::new(cfg(1), 4).unwrap();
        let long = vec![1u32; 17];
        assert!(matches!(
            enc.encode(&input(&long), EncodeMode::Eval),
            Err(Error::SegmentTooLong { len: 17, max: 16 })
        ));
        assert!(enc.encode(&input(&[25]), EncodeMode::Eval).is_err());
    }

    #[test]
    fn dropout_rate_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rate = 0.3;
        let n = 10_000;
        let m = dropout_mask(100, 100, rate, &mut rng);
        let zeros = m.data().iter().filter(|&&x| x == 0.0).count() as f64;
        let sigma = (n as f64 * rate * (1.0 - rate)).sqrt();
        assert!((zeros - n as f64 * rate).abs() <= 3.0 * sigma, "zeros = {zeros}");
    }

    #[test]
    fn contract_passes_for_builtin_and_random_providers() {
        let enc = ToyTransformer::new(cfg(1), 5).unwrap();
        let probes = [input(&[1, 2, 3]), input(&[4; 16])];
        let report = encoder_contract_check(&enc, &probes);
        assert!(report.passed(), "{report:?}");
        let frozen = RandomEmbeddingEncoder::new(20, 8, 16, 1);
        assert!(encoder_contract_check(&frozen, &probes).passed());
    }

    struct ShortRows;
    impl SegmentEncoder for ShortRows {
        fn hidden_size(&self) -> usize {
            4
        }
        fn max_positions(&self) -> usize {
            8
        }
        fn encode(&self, input: &SegmentInput, _: EncodeMode) -> Result<Matrix> {
            if input.pieces.len() > 8 {
                return Err(Error::Encoder("too long".into()));
            }
            Ok(Matrix::zeros(input.pieces.len().saturating_sub(1), 4))
        }
    }

    #[test]
    fn contract_reports_wrong_row_count() {
        let report = encoder_contract_check(&ShortRows, &[input(&[1, 2, 3])]);
        assert!(!report.passed());
        let fail: Vec<_> = report.failures().collect();
        assert_eq!(fail.len(), 1);
        assert_eq!(fail[0].check, "shape");
        assert!(fail[0].detail.contains("got 2x4, expected 3x4"));
    }

    #[test]
    fn precomputed_vectors_round_trip_and_serve_segments() {
        let mut pv = PrecomputedVectors::new(2, 4);
        pv.insert("nw/a_0", Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5])).unwrap();
        pv.insert("nw/b_0", Matrix::from_vec(1, 2, vec![-1.0, 0.25])).unwrap();
        let back = PrecomputedVectors::from_bytes(&pv.to_bytes(), 4).unwrap();
        assert_eq!(back, pv);
        let seg = SegmentInput {
            doc_key: "nw/a_0",
            start: 1,
            pieces: &[0, 0],
        };
        assert_eq!(back.encode(&seg, EncodeMode::Eval).unwrap().data(), &[3.0, 4.0, 5.0, 6.5]);
        let probe = SegmentInput {
            doc_key: "nw/a_0",
            start: 0,
            pieces: &[0, 0, 0],
        };
        assert!(encoder_contract_check(&back, &[probe]).passed());
        assert!(PrecomputedVectors::from_bytes(b"nw/a_0 2 2\n\x00\x00", 4).is_err());
    }
}
