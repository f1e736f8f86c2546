//! Plain scalar implementations of the scoring pipeline.
//!
//! These mirror what [`super::CorefModel`] records on the autograd tape, one
//! span or pair at a time. They are the readable reference the batched code
//! is tested against.

use crate::autograd::sigmoid;
use crate::corpus::{Document, Span};
use crate::tensor::Matrix;

/// Mention-order distance buckets: 1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+.
pub const NUM_DISTANCE_BUCKETS: usize = 9;

pub fn distance_bucket(distance: usize) -> usize {
    match distance {
        0 | 1 => 0,
        2..=4 => distance - 1,
        _ => (usize::BITS - distance.leading_zeros()) as usize + 1,
    }
    .min(NUM_DISTANCE_BUCKETS - 1)
}

/// All spans of at most `max_width` pieces that start and end on token
/// boundaries, in `(start, end)` order.
///
/// `boundaries` is every token's first piece followed by the piece count.
pub fn enumerate_spans_in(boundaries: &[usize], max_width: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    for (i, &start) in boundaries.iter().enumerate().take(boundaries.len().saturating_sub(1)) {
        for &next in &boundaries[i + 1..] {
            if next - start > max_width {
                break;
            }
            spans.push(Span::new(start, next - 1));
        }
    }
    spans
}

pub fn enumerate_spans(doc: &Document, max_width: usize) -> Vec<Span> {
    enumerate_spans_in(&doc.token_boundaries(), max_width)
}

/// One-hidden-layer ReLU network with a scalar output.
#[derive(Clone, Copy, Debug)]
pub struct Ffnn<'a> {
    pub w1: &'a Matrix,
    pub b1: &'a Matrix,
    pub w2: &'a Matrix,
    pub b2: &'a Matrix,
}

impl Ffnn<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.w1.rows(), "ffnn input width");
        let hidden = self.w1.cols();
        let mut out = self.b2.get(0, 0);
        for h in 0..hidden {
            let pre = self.b1.get(0, h) + x.iter().enumerate().map(|(i, v)| v * self.w1.get(i, h)).sum::<f64>();
            out += pre.max(0.0) * self.w2.get(h, 0);
        }
        out
    }
}

/// Softmax over the pieces of `span` of the affine score `h·w + b`.
pub fn attention_weights(span: Span, pieces: &Matrix, w: &Matrix, b: f64) -> Vec<f64> {
    let logits: Vec<f64> = (span.start..=span.end)
        .map(|i| b + pieces.row(i).iter().zip(w.data()).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    antecedent_distribution(&logits)
}

/// `[h_start; h_end; sum_i a_i h_i]`.
pub fn span_representation(span: Span, pieces: &Matrix, w: &Matrix, b: f64) -> Vec<f64> {
    let d = pieces.cols();
    let alpha = attention_weights(span, pieces, w, b);
    let mut attended = vec![0.0; d];
    for (a, i) in alpha.iter().zip(span.start..=span.end) {
        for (acc, x) in attended.iter_mut().zip(pieces.row(i)) {
            *acc += a * x;
        }
    }
    let mut g = Vec::with_capacity(3 * d);
    g.extend_from_slice(pieces.row(span.start));
    g.extend_from_slice(pieces.row(span.end));
    g.extend(attended);
    g
}

pub fn mention_score(g: &[f64], ffnn: &Ffnn) -> f64 {
    ffnn.eval(g)
}

/// Pair input `[g_x; g_y; g_x * g_y; phi]`.
pub fn pair_input(gx: &[f64], gy: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * gx.len() + phi.len());
    v.extend_from_slice(gx);
    v.extend_from_slice(gy);
    v.extend(gx.iter().zip(gy).map(|(a, b)| a * b));
    v.extend_from_slice(phi);
    v
}

pub fn pair_score(gx: &[f64], gy: &[f64], phi: &[f64], ffnn: &Ffnn) -> f64 {
    ffnn.eval(&pair_input(gx, gy, phi))
}

pub fn total_score(mention_x: f64, mention_y: f64, pair: f64) -> f64 {
    mention_x + mention_y + pair
}

/// Softmax with the maximum subtracted first.
pub fn antecedent_distribution(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Keeps the `ceil(ratio * num_tokens)` best-scoring spans, skipping any span
/// that partially overlaps one already kept. Returns indices into `spans`
/// ordered by span position.
pub fn prune_mentions(spans: &[Span], scores: &[f64], ratio: f64, num_tokens: usize) -> Vec<usize> {
    assert_eq!(spans.len(), scores.len());
    let budget = if ratio.is_infinite() {
        usize::MAX
    } else {
        (ratio * num_tokens as f64).ceil() as usize
    };
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(spans[a].cmp(&spans[b])));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() >= budget {
            break;
        }
        if kept.iter().all(|&k| !spans[k].crosses(&spans[i])) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|&i| spans[i]);
    kept
}

/// Bilinear coarse score `g_x^T M g_y`.
pub fn coarse_bilinear(gx: &[f64], m: &Matrix, gy: &[f64]) -> f64 {
    gx.iter()
        .enumerate()
        .map(|(i, a)| a * m.row(i).iter().zip(gy).map(|(w, b)| w * b).sum::<f64>())
        .sum()
}

/// For each retained span the `k` best preceding spans by the coarse score
/// `s_m(x) + s_m(y) + g_x^T M g_y`, returned in position order. `None` keeps
/// every preceding span.
pub fn coarse_to_fine_antecedents(reps: &[Vec<f64>], mention: &[f64], m: &Matrix, k: Option<usize>) -> Vec<Vec<usize>> {
    (0..reps.len())
        .map(|x| {
            let mut cands: Vec<usize> = (0..x).collect();
            if let Some(k) = k.filter(|&k| k < x) {
                let coarse: Vec<f64> = cands
                    .iter()
                    .map(|&y| mention[x] + mention[y] + coarse_bilinear(&reps[x], m, &reps[y]))
                    .collect();
                cands.sort_by(|&a, &b| coarse[b].total_cmp(&coarse[a]).then(a.cmp(&b)));
                cands.truncate(k);
                cands.sort_unstable();
            }
            cands
        })
        .collect()
}

/// Gate parameters for refinement: `f = sigmoid([g; a] W + b)`.
#[derive(Clone, Copy, Debug)]
pub struct RefinementGate<'a> {
    pub w: &'a Matrix,
    pub b: &'a Matrix,
}

/// One refinement step. `distributions[x]` holds `P(eps)` first, then one
/// probability per entry of `candidates[x]`.
pub fn refine_step(
    reps: &[Vec<f64>],
    candidates: &[Vec<usize>],
    distributions: &[Vec<f64>],
    gate: &RefinementGate,
) -> Vec<Vec<f64>> {
    reps.iter()
        .enumerate()
        .map(|(x, g)| {
            let p = &distributions[x];
            let mut a: Vec<f64> = g.iter().map(|v| v * p[0]).collect();
            for (&y, &py) in candidates[x].iter().zip(&p[1..]) {
                for (acc, v) in a.iter_mut().zip(&reps[y]) {
                    *acc += py * v;
                }
            }
            let input: Vec<f64> = g.iter().chain(&a).copied().collect();
            (0..g.len())
                .map(|j| {
                    let pre = gate.b.get(0, j) + input.iter().enumerate().map(|(i, v)| v * gate.w.get(i, j)).sum::<f64>();
                    let f = sigmoid(pre);
                    a[j] + f * (g[j] - a[j])
                })
                .collect()
        })
        .collect()
}

/// Runs `iterations` refinement steps, recomputing the antecedent
/// distributions from the current representations before each one.
pub fn higher_order_refine(
    reps: &[Vec<f64>],
    candidates: &[Vec<usize>],
    gate: &RefinementGate,
    iterations: usize,
    mut distributions: impl FnMut(&[Vec<f64>]) -> Vec<Vec<f64>>,
) -> Vec<Vec<f64>> {
    let mut current = reps.to_vec();
    for _ in 0..iterations {
        let p = distributions(&current);
        current = refine_step(&current, candidates, &p, gate);
    }
    current
}

/// `-sum_x log sum_{y in gold(x)} P(y)`; `gold[x]` indexes into
/// `probabilities[x]` (0 is the dummy antecedent).
pub fn training_loss(probabilities: &[Vec<f64>], gold: &[Vec<usize>]) -> f64 {
    probabilities
        .iter()
        .zip(gold)
        .map(|(p, g)| -g.iter().map(|&i| p[i]).sum::<f64>().ln())
        .sum::<f64>()
        .max(0.0)
}
