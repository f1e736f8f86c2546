//! Maximum-weight bipartite assignment (Hungarian method with potentials).

use crate::tensor::Matrix;

/// Assigns each row to at most one column, and each column to at most one
/// row, maximizing the total weight. Returns the column chosen for each row.
///
/// Every row is matched when `rows <= cols`; otherwise every column is.
pub fn max_weight_assignment(weights: &Matrix) -> Vec<Option<usize>> {
    let (rows, cols) = weights.shape();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let by_col = max_weight_assignment(&weights.transpose());
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }
    // minimize negated weights; arrays are 1-based with index 0 as a sentinel
    let cost = |i: usize, j: usize| -weights.get(i - 1, j - 1);
    let (n, m) = (rows, cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Total weight of an assignment.
pub fn assignment_weight(weights: &Matrix, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| weights.get(r, c)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(w: &Matrix) -> f64 {
        fn go(w: &Matrix, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == w.rows() {
                return 0.0;
            }
            let mut best = go(w, row + 1, used);
            for c in 0..w.cols() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(w.get(row, c) + go(w, row + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        go(w, 0, &mut vec![false; w.cols()])
    }

    #[test]
    fn small_square() {
        let w = Matrix::from_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]);
        let a = max_weight_assignment(&w);
        assert_eq!(a, vec![Some(0), Some(2), Some(1)]);
        assert_eq!(assignment_weight(&w, &a), 11.0);
    }

    #[test]
    fn rectangular_and_empty() {
        let tall = Matrix::from_rows(&[vec![1.0], vec![5.0], vec![2.0]]);
        assert_eq!(max_weight_assignment(&tall), vec![None, Some(0), None]);
        assert!(max_weight_assignment(&Matrix::zeros(0, 3)).is_empty());
        assert_eq!(max_weight_assignment(&Matrix::zeros(2, 0)), vec![None, None]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(rows in 1usize..6, cols in 1usize..6, vals in prop::collection::vec(0u8..10, 36)) {
            let w = Matrix::from_vec(rows, cols, vals[..rows * cols].iter().map(|&v| v as f64).collect());
            let a = max_weight_assignment(&w);
            let mut seen = std::collections::HashSet::new();
            prop_assert!(a.iter().flatten().all(|c| seen.insert(*c)));
            prop_assert_eq!(assignment_weight(&w, &a), brute_force(&w));
        }
    }
}
