//! Link-, mention- and entity-based coreference metrics.

use std::collections::{HashMap, HashSet};

use super::assignment::max_weight_assignment;
use super::{MetricCounts, MetricScores, Partition};
use crate::corpus::Span;
use crate::tensor::Matrix;

fn muc_side(key: &Partition, response: &HashMap<Span, usize>) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in key.clusters() {
        let mut parts = HashSet::new();
        let mut unaligned = 0;
        for s in cluster {
            match response.get(s) {
                Some(&r) => {
                    parts.insert(r);
                }
                None => unaligned += 1,
            }
        }
        num += (cluster.len() - parts.len() - unaligned) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &Partition, predicted: &Partition) -> MetricCounts {
    let (rn, rd) = muc_side(gold, &predicted.cluster_index());
    let (pn, pd) = muc_side(predicted, &gold.cluster_index());
    MetricCounts::new(rn, rd, pn, pd)
}

fn b_cubed_side(key: &Partition, response: &Partition) -> (f64, f64) {
    let index = response.cluster_index();
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in key.clusters() {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for s in cluster {
            if let Some(&r) = index.get(s) {
                *overlap.entry(r).or_default() += 1;
            }
        }
        // every key mention sharing response cluster r scores |K ∩ R| / |K|
        num += overlap.values().map(|&k| (k * k) as f64).sum::<f64>() / cluster.len() as f64;
        den += cluster.len() as f64;
    }
    (num, den)
}

pub fn b_cubed_counts(gold: &Partition, predicted: &Partition) -> MetricCounts {
    let (rn, rd) = b_cubed_side(gold, predicted);
    let (pn, pd) = b_cubed_side(predicted, gold);
    MetricCounts::new(rn, rd, pn, pd)
}

pub fn phi4(key: &[Span], response: &[Span]) -> f64 {
    let k: HashSet<&Span> = key.iter().collect();
    let common = response.iter().filter(|s| k.contains(s)).count();
    2.0 * common as f64 / (key.len() + response.len()) as f64
}

/// `phi4` between every gold (row) and predicted (column) cluster.
pub fn phi4_matrix(gold: &Partition, predicted: &Partition) -> Matrix {
    let (g, p) = (gold.clusters(), predicted.clusters());
    let mut m = Matrix::zeros(g.len(), p.len());
    for (i, k) in g.iter().enumerate() {
        for (j, r) in p.iter().enumerate() {
            m.set(i, j, phi4(k, r));
        }
    }
    m
}

pub fn ceaf_phi4_counts(gold: &Partition, predicted: &Partition) -> MetricCounts {
    let sim = phi4_matrix(gold, predicted);
    let total: f64 = max_weight_assignment(&sim)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| sim.get(i, j)))
        .sum();
    let (g, p) = (gold.clusters().len() as f64, predicted.clusters().len() as f64);
    MetricCounts::new(total, g, total, p)
}

pub fn muc(gold: &Partition, predicted: &Partition) -> MetricScores {
    muc_counts(gold, predicted).scores()
}

pub fn b_cubed(gold: &Partition, predicted: &Partition) -> MetricScores {
    b_cubed_counts(gold, predicted).scores()
}

pub fn ceaf_phi4(gold: &Partition, predicted: &Partition) -> MetricScores {
    ceaf_phi4_counts(gold, predicted).scores()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(clusters: &[&[usize]]) -> Partition {
        Partition::new(clusters.iter().map(|c| c.iter().map(|&i| Span::new(i, i)).collect()).collect()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn identity_is_perfect() {
        let g = part(&[&[1, 2, 3], &[4, 5], &[6]]);
        for s in [muc(&g, &g), b_cubed(&g, &g), ceaf_phi4(&g, &g)] {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn muc_split_cluster() {
        let s = muc(&part(&[&[0, 1, 2]]), &part(&[&[0, 1], &[2]]));
        assert!(close(s.recall, 0.5) && close(s.precision, 1.0) && close(s.f1, 2.0 / 3.0));
        let empty = muc(&part(&[&[0, 1, 2]]), &part(&[]));
        assert_eq!((empty.recall, empty.f1), (0.0, 0.0));
    }

    #[test]
    fn b_cubed_merged_clusters() {
        let s = b_cubed(&part(&[&[0, 1], &[2]]), &part(&[&[0, 1, 2]]));
        assert!(close(s.recall, 1.0) && close(s.precision, 5.0 / 9.0));
        let disjoint = b_cubed(&part(&[&[0, 1]]), &part(&[&[2, 3]]));
        assert_eq!((disjoint.precision, disjoint.recall, disjoint.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ceaf_single_pair() {
        let s = ceaf_phi4(&part(&[&[0, 1]]), &part(&[&[0, 2]]));
        assert!(close(s.precision, 0.5) && close(s.recall, 0.5) && close(s.f1, 0.5));
    }

    #[test]
    fn singletons_affect_b_cubed_and_ceaf_only() {
        let g = part(&[&[0, 1, 2], &[3, 4]]);
        let p = part(&[&[0, 1], &[2, 3, 4]]);
        let p_single = part(&[&[0, 1], &[2, 3, 4], &[9]]);
        assert_eq!(muc(&g, &p), muc(&g, &p_single));
        assert_ne!(b_cubed(&g, &p), b_cubed(&g, &p_single));
        assert_ne!(ceaf_phi4(&g, &p), ceaf_phi4(&g, &p_single));
    }
}
