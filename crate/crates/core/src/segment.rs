//! Splitting documents into encoder-sized segments and merging the
//! per-segment outputs back into one vector per word piece.
//!
//! Two variants are supported. `Independent` cuts the document into
//! consecutive non-overlapping segments of at most `T` pieces. `Overlap`
//! starts a segment every `T/2` pieces, so most pieces are seen by two
//! segments; their two vectors are merged by a learned element-wise gate.
//! Cuts always fall on token boundaries.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::sigmoid;
use crate::corpus::{Document, Span, Token};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Independent,
    Overlap,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Variant::Independent),
            "overlap" => Ok(Variant::Overlap),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub variant: Variant,
    pub max_segment_len: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Independent,
            max_segment_len: 128,
        }
    }
}

impl SegmentationConfig {
    pub fn new(variant: Variant, max_segment_len: usize) -> Result<Self> {
        let c = Self {
            variant,
            max_segment_len,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_segment_len == 0 {
            return Err(Error::config("max_segment_len must be positive"));
        }
        if self.variant == Variant::Overlap && !self.max_segment_len.is_multiple_of(2) {
            return Err(Error::config("overlap segmentation needs an even max_segment_len"));
        }
        Ok(())
    }

    /// Distance between consecutive overlap segment starts.
    pub fn stride(&self) -> usize {
        self.max_segment_len / 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub segment_index: usize,
    /// Offset of the first piece in the document.
    pub start: usize,
    pub pieces: Vec<u32>,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.pieces.len()
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end()
    }
}

/// Sorted token start offsets plus the document length.
struct Boundaries<'a>(&'a [usize]);

impl Boundaries<'_> {
    /// Largest boundary `<= pos`.
    fn floor(&self, pos: usize) -> usize {
        let i = self.0.partition_point(|&b| b <= pos);
        self.0[i.saturating_sub(1)]
    }
}

fn check_token_lengths(boundaries: &[usize], max: usize) -> Result<()> {
    for (token, w) in boundaries.windows(2).enumerate() {
        if w[1] - w[0] > max {
            return Err(Error::TokenTooLong {
                token,
                pieces: w[1] - w[0],
                max,
            });
        }
    }
    Ok(())
}

fn make_segment(pieces: &[u32], index: usize, range: Range<usize>) -> Segment {
    Segment {
        segment_index: index,
        start: range.start,
        pieces: pieces[range].to_vec(),
    }
}

/// Consecutive non-overlapping segments of at most `T` pieces, each cut moved
/// left to the nearest token boundary.
///
/// `boundaries` holds every token's first piece offset followed by the total
/// piece count.
pub fn split_independent(pieces: &[u32], boundaries: &[usize], config: &SegmentationConfig) -> Result<Vec<Segment>> {
    config.validate()?;
    let t = config.max_segment_len;
    check_token_lengths(boundaries, t)?;
    let bounds = Boundaries(boundaries);
    let n = pieces.len();
    let mut segments = Vec::new();
    let mut start = 0;
    while start < n {
        let end = bounds.floor((start + t).min(n));
        debug_assert!(end > start);
        segments.push(make_segment(pieces, segments.len(), start..end));
        start = end;
    }
    Ok(segments)
}

/// Segments of at most `T` pieces starting every `T/2` pieces (starts and
/// ends moved left to token boundaries). Stops at the first segment that
/// reaches the end of the document.
pub fn split_overlap(pieces: &[u32], boundaries: &[usize], config: &SegmentationConfig) -> Result<Vec<Segment>> {
    config.validate()?;
    let t = config.max_segment_len;
    let stride = config.stride();
    check_token_lengths(boundaries, t)?;
    let bounds = Boundaries(boundaries);
    let n = pieces.len();
    let mut segments: Vec<Segment> = Vec::new();
    let mut k = 0;
    while segments.last().map_or(n > 0, |s| s.end() < n) {
        let mut start = bounds.floor(k * stride);
        k += 1;
        if let Some(prev) = segments.last() {
            if start <= prev.start {
                continue;
            }
            // Long tokens can push the nominal start past the previous end.
            start = start.min(prev.end());
        }
        let end = bounds.floor((start + t).min(n));
        // a long token right after the start can pull the cut back to the
        // previous end; such a segment would add nothing
        if segments.last().is_some_and(|prev| end <= prev.end()) {
            continue;
        }
        segments.push(make_segment(pieces, segments.len(), start..end));
    }
    Ok(segments)
}

/// Splits a tokenized document with the configured variant.
pub fn segment_document(doc: &Document, config: &SegmentationConfig) -> Result<Vec<Segment>> {
    let boundaries = doc.token_boundaries();
    match config.variant {
        Variant::Independent => split_independent(&doc.word_pieces, &boundaries, config),
        Variant::Overlap => split_overlap(&doc.word_pieces, &boundaries, config),
    }
}

/// For every document piece, the row of its earliest covering segment and,
/// when a second segment also covers it, that segment's row. Rows index the
/// concatenation of all segment outputs in segment order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub primary: Vec<usize>,
    pub secondary: Vec<Option<usize>>,
}

impl Coverage {
    pub fn build(segments: &[Segment], num_pieces: usize) -> Result<Self> {
        let mut primary = vec![None; num_pieces];
        let mut secondary = vec![None; num_pieces];
        let mut row = 0;
        for seg in segments {
            for p in seg.range() {
                if primary[p].is_none() {
                    primary[p] = Some(row);
                } else {
                    debug_assert!(secondary[p].is_none(), "piece {p} covered three times");
                    secondary[p].get_or_insert(row);
                }
                row += 1;
            }
        }
        let primary = primary
            .into_iter()
            .enumerate()
            .map(|(piece, r)| r.ok_or(Error::CoverageGap { piece }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { primary, secondary })
    }

    /// The later-segment row, or the primary row for singly covered pieces.
    pub fn secondary_or_primary(&self) -> Vec<usize> {
        self.secondary
            .iter()
            .zip(&self.primary)
            .map(|(s, &p)| s.unwrap_or(p))
            .collect()
    }

    pub fn multiplicity(&self, piece: usize) -> usize {
        1 + usize::from(self.secondary[piece].is_some())
    }
}

/// Gate-weighted element-wise mix of two vectors for the same piece:
/// `f = sigmoid(w^T [r1; r2])`, `r = f * r1 + (1 - f) * r2`.
///
/// `w` is `2d × d`.
pub fn interpolate(r1: &[f64], r2: &[f64], w: &Matrix) -> Vec<f64> {
    let d = r1.len();
    assert_eq!(r2.len(), d, "interpolate: vector length mismatch");
    assert_eq!(w.shape(), (2 * d, d), "interpolate: gate shape must be 2d x d");
    (0..d)
        .map(|j| {
            let pre: f64 = r1
                .iter()
                .chain(r2)
                .enumerate()
                .map(|(i, &x)| x * w.get(i, j))
                .sum();
            let f = sigmoid(pre);
            let (lo, hi) = (r1[j].min(r2[j]), r1[j].max(r2[j]));
            // clamp absorbs the last-ulp rounding of the affine form
            (r2[j] + f * (r1[j] - r2[j])).clamp(lo, hi)
        })
        .collect()
}

/// Merges per-segment encoder outputs into one row per document piece.
pub fn assemble_token_representations(
    segments: &[Segment],
    outputs: &[Matrix],
    gate: &Matrix,
    num_pieces: usize,
) -> Result<Matrix> {
    if segments.len() != outputs.len() {
        return Err(Error::Encoder(format!(
            "{} segments but {} encoder outputs",
            segments.len(),
            outputs.len()
        )));
    }
    let d = outputs.first().map_or(0, Matrix::cols);
    let mut rows: Vec<&[f64]> = Vec::new();
    for (seg, out) in segments.iter().zip(outputs) {
        if out.rows() != seg.pieces.len() || out.cols() != d {
            return Err(Error::Encoder(format!(
                "segment {} output is {}x{}, expected {}x{d}",
                seg.segment_index,
                out.rows(),
                out.cols(),
                seg.pieces.len()
            )));
        }
        rows.extend((0..out.rows()).map(|r| out.row(r)));
    }
    let coverage = Coverage::build(segments, num_pieces)?;
    let mut result = Matrix::zeros(num_pieces, d);
    for p in 0..num_pieces {
        let first = rows[coverage.primary[p]];
        match coverage.secondary[p] {
            None => result.row_mut(p).copy_from_slice(first),
            Some(s) => result.row_mut(p).copy_from_slice(&interpolate(first, rows[s], gate)),
        }
    }
    Ok(result)
}

/// A document cut down to a window of consecutive segments.
#[derive(Clone, Debug)]
pub struct TruncatedDocument {
    pub document: Document,
    /// Segment indices kept.
    pub window: Range<usize>,
}

/// Keeps a uniformly placed window of at most `max_segments` consecutive
/// segments. Gold spans outside the window are dropped, as are clusters that
/// lose spans and end up with fewer than two.
pub fn truncate_document<R: Rng + ?Sized>(
    doc: &Document,
    segments: &[Segment],
    max_segments: usize,
    rng: &mut R,
) -> TruncatedDocument {
    assert!(max_segments >= 1, "max_segments must be at least 1");
    if segments.len() <= max_segments {
        return TruncatedDocument {
            document: doc.clone(),
            window: 0..segments.len(),
        };
    }
    let first = rng.gen_range(0..=segments.len() - max_segments);
    let window = first..first + max_segments;
    let pieces = segments[first].start..segments[window.end - 1].end();
    TruncatedDocument {
        document: slice_document(doc, pieces),
        window,
    }
}

/// Restricts a document to the tokens inside a token-aligned piece range.
pub fn slice_document(doc: &Document, pieces: Range<usize>) -> Document {
    let tok_lo = doc.tokens.partition_point(|t| t.word_piece_range.start < pieces.start);
    let tok_hi = doc.tokens.partition_point(|t| t.word_piece_range.start < pieces.end);
    let sentence_base = doc.tokens.get(tok_lo).map_or(0, |t| t.sentence_index);
    let tokens: Vec<Token> = doc.tokens[tok_lo..tok_hi]
        .iter()
        .enumerate()
        .map(|(i, t)| Token {
            token_index_in_doc: i,
            sentence_index: t.sentence_index - sentence_base,
            word_piece_range: t.word_piece_range.start - pieces.start..t.word_piece_range.end - pieces.start,
            ..t.clone()
        })
        .collect();
    let gold_clusters = doc
        .gold_clusters
        .iter()
        .filter_map(|c| {
            let kept: Vec<Span> = c
                .iter()
                .filter(|s| s.start >= tok_lo && s.end < tok_hi)
                .map(|s| Span::new(s.start - tok_lo, s.end - tok_lo))
                .collect();
            (kept.len() == c.len() || kept.len() >= 2).then_some(kept)
        })
        .filter(|c| !c.is_empty())
        .collect();
    Document {
        tokens,
        word_pieces: doc.word_pieces[pieces].to_vec(),
        gold_clusters,
        ..doc.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::testing::doc_with_piece_counts;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ranges(segs: &[Segment]) -> Vec<Range<usize>> {
        segs.iter().map(Segment::range).collect()
    }

    fn unit_boundaries(n: usize) -> Vec<usize> {
        (0..=n).collect()
    }

    fn cfg(variant: Variant, t: usize) -> SegmentationConfig {
        SegmentationConfig::new(variant, t).unwrap()
    }

    #[test]
    fn independent_exact_and_tail() {
        let p = vec![0u32; 10];
        let c = cfg(Variant::Independent, 4);
        assert_eq!(ranges(&split_independent(&p[..8], &unit_boundaries(8), &c).unwrap()), vec![0..4, 4..8]);
        assert_eq!(ranges(&split_independent(&p, &unit_boundaries(10), &c).unwrap()), vec![0..4, 4..8, 8..10]);
    }

    #[test]
    fn independent_respects_token_boundaries() {
        // Hand oracle: tokens [0][1][2][3,4][5,6][7]; greedy cuts 4->3, 7 ok, 8 end.
        let boundaries = vec![0, 1, 2, 3, 5, 7, 8];
        let segs = split_independent(&[0; 8], &boundaries, &cfg(Variant::Independent, 4)).unwrap();
        assert_eq!(ranges(&segs), vec![0..3, 3..7, 7..8]);
    }

    #[test]
    fn oversized_token_is_rejected() {
        let boundaries = vec![0, 1, 6, 7];
        let err = split_independent(&[0; 7], &boundaries, &cfg(Variant::Independent, 4)).unwrap_err();
        assert!(matches!(err, Error::TokenTooLong { token: 1, pieces: 5, max: 4 }));
        assert!(split_overlap(&[0; 7], &boundaries, &cfg(Variant::Overlap, 4)).is_err());
    }

    #[test]
    fn overlap_starts_every_half_segment() {
        let c = cfg(Variant::Overlap, 4);
        let p = [0u32; 8];
        assert_eq!(ranges(&split_overlap(&p, &unit_boundaries(8), &c).unwrap()), vec![0..4, 2..6, 4..8]);
        assert_eq!(ranges(&split_overlap(&p[..4], &unit_boundaries(4), &c).unwrap()), vec![0..4]);
        let six = split_overlap(&p[..6], &unit_boundaries(6), &c).unwrap();
        assert_eq!(ranges(&six), vec![0..4, 2..6]);
        let cov = Coverage::build(&six, 6).unwrap();
        let mult: Vec<usize> = (0..6).map(|i| cov.multiplicity(i)).collect();
        assert_eq!(mult, vec![1, 1, 2, 2, 1, 1]);
    }

    #[test]
    fn overlap_requires_even_length() {
        assert!(SegmentationConfig::new(Variant::Overlap, 5).is_err());
        assert!(SegmentationConfig::new(Variant::Independent, 5).is_ok());
        assert!(SegmentationConfig::new(Variant::Independent, 0).is_err());
    }

    #[test]
    fn interpolate_special_cases() {
        let r1 = [1.0, -2.0, 3.0];
        let r2 = [3.0, 2.0, -1.0];
        let zero = Matrix::zeros(6, 3);
        assert_eq!(interpolate(&r1, &r2, &zero), vec![2.0, 0.0, 1.0]);

        let mut w = Matrix::zeros(6, 3);
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        assert_eq!(interpolate(&r1, &r1, &w), r1.to_vec());

        // Saturated gate: pre-activation huge and positive in every coordinate.
        let big = Matrix::filled(6, 3, 1e3);
        let pos = [1.0, 1.0, 1.0];
        let out = interpolate(&pos, &[0.5, 0.25, 0.75], &big);
        for (o, r) in out.iter().zip(pos) {
            assert!((o - r).abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_overlap_means_with_zero_gate() {
        let segs = split_overlap(&[0; 6], &unit_boundaries(6), &cfg(Variant::Overlap, 4)).unwrap();
        let a = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::from_vec(4, 1, vec![10.0, 20.0, 30.0, 40.0]);
        let out = assemble_token_representations(&segs, &[a, b], &Matrix::zeros(2, 1), 6).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 6.5, 12.0, 30.0, 40.0]);
    }

    #[test]
    fn assemble_rejects_shape_errors_and_gaps() {
        let segs = split_independent(&[0; 4], &unit_boundaries(4), &cfg(Variant::Independent, 2)).unwrap();
        let ok = Matrix::zeros(2, 3);
        assert!(assemble_token_representations(&segs, std::slice::from_ref(&ok), &Matrix::zeros(6, 3), 4).is_err());
        assert!(assemble_token_representations(&segs, &[ok.clone(), Matrix::zeros(3, 3)], &Matrix::zeros(6, 3), 4).is_err());
        assert!(matches!(
            assemble_token_representations(&segs, &[ok.clone(), ok], &Matrix::zeros(6, 3), 5),
            Err(Error::CoverageGap { piece: 4 })
        ));
    }

    #[test]
    fn truncation_window_and_cluster_dropping() {
        let mut doc = doc_with_piece_counts(&[1; 10]);
        doc.gold_clusters = vec![
            vec![Span::new(0, 0), Span::new(8, 9)],
            vec![Span::new(2, 2), Span::new(3, 3), Span::new(9, 9)],
            vec![Span::new(4, 4), Span::new(5, 5)],
        ];
        let c = cfg(Variant::Independent, 2);
        let segs = segment_document(&doc, &c).unwrap();
        assert_eq!(segs.len(), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 3];
        for _ in 0..300 {
            let t = truncate_document(&doc, &segs, 3, &mut rng);
            assert_eq!(t.window.len(), 3);
            seen[t.window.start] += 1;
            if t.window == (1..4) {
                // pieces 2..8 kept: cluster 0 loses both ends, cluster 1 keeps two spans.
                assert_eq!(
                    t.document.gold_clusters,
                    vec![vec![Span::new(0, 0), Span::new(1, 1)], vec![Span::new(2, 2), Span::new(3, 3)]]
                );
                assert_eq!(t.document.num_pieces(), 6);
            }
        }
        assert!(seen.iter().all(|&n| n > 60), "window starts not uniform: {seen:?}");

        let whole = truncate_document(&doc, &segs, 5, &mut rng);
        assert_eq!(whole.document, doc);
        let whole = truncate_document(&doc, &segs, usize::MAX, &mut rng);
        assert_eq!(whole.document, doc);
    }

    fn piece_counts() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=3, 1..60)
    }

    proptest! {
        #[test]
        fn segments_cover_each_piece_once_or_twice(counts in piece_counts(), half in 2usize..=6, overlap in any::<bool>()) {
            let doc = doc_with_piece_counts(&counts);
            let t = 2 * half;
            let variant = if overlap { Variant::Overlap } else { Variant::Independent };
            let segs = segment_document(&doc, &cfg(variant, t)).unwrap();
            let boundaries = doc.token_boundaries();
            let mut seen = vec![0usize; doc.num_pieces()];
            for (i, s) in segs.iter().enumerate() {
                prop_assert!(!s.pieces.is_empty() && s.pieces.len() <= t);
                prop_assert!(boundaries.contains(&s.start) && boundaries.contains(&s.end()));
                prop_assert_eq!(s.segment_index, i);
                if i > 0 {
                    prop_assert!(s.start > segs[i - 1].start && s.end() > segs[i - 1].end());
                }
                seen[s.range()].iter_mut().for_each(|c| *c += 1);
            }
            let max = if overlap { 2 } else { 1 };
            prop_assert!(seen.iter().all(|&c| (1..=max).contains(&c)));
            prop_assert!(Coverage::build(&segs, doc.num_pieces()).is_ok());
        }

        #[test]
        fn interpolate_stays_between_inputs(
            r in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..6),
            w in prop::collection::vec(-5.0f64..5.0, 72),
        ) {
            let d = r.len();
            let (r1, r2): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
            let gate = Matrix::from_vec(2 * d, d, w[..2 * d * d].to_vec());
            for (j, v) in interpolate(&r1, &r2, &gate).into_iter().enumerate() {
                prop_assert!(v >= r1[j].min(r2[j]) && v <= r1[j].max(r2[j]));
            }
        }

        #[test]
        fn unbounded_truncation_is_identity(counts in piece_counts(), seed in any::<u64>()) {
            let doc = doc_with_piece_counts(&counts);
            let segs = segment_document(&doc, &cfg(Variant::Overlap, 4)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            prop_assert_eq!(truncate_document(&doc, &segs, usize::MAX, &mut rng).document, doc);
        }
    }
}
