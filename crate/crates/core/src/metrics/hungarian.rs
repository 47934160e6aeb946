//! Minimum-cost one-to-one assignment (shortest augmenting paths, O(n³)).

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row; `min(rows, cols)` of them.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Optimal assignment for a (possibly rectangular) cost matrix.
///
/// Among optimal assignments the lexicographically smallest one by
/// `(row, col)` is returned: row 0 takes the smallest column any optimum
/// allows, then row 1, and so on.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Result<Assignment> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("cost matrix rows differ in length".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Consistency("cost matrix has a non-finite entry".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            total: 0.0,
        });
    }
    let n = rows.max(cols);
    let max = cost.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    // padding is constant per padded row/column, so it never changes which real pairs are optimal
    let sentinel = max + 1.0;
    let c = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { sentinel };

    let (row_of_col, u, v) = solve(n, &c);
    let mut col_of_row = vec![0usize; n];
    for (j, &i) in row_of_col.iter().enumerate() {
        col_of_row[i] = j;
    }
    let tol = 1e-9 * (1.0 + max);
    canonicalize(n, &mut col_of_row, |i, j| c(i, j) - u[i] - v[j] <= tol);

    let pairs: Vec<(usize, usize)> = (0..rows)
        .map(|i| (i, col_of_row[i]))
        .filter(|&(_, j)| j < cols)
        .collect();
    let total = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, total })
}

/// Returns `row_of_col` and the dual potentials `(u, v)` with
/// `c(i, j) - u[i] - v[j] >= 0`, tight on the assignment.
fn solve(n: usize, c: &impl Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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
    let row_of_col = (1..=n).map(|j| p[j] - 1).collect();
    (row_of_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Moves a perfect matching on the tight subgraph to the lexicographically
/// smallest one by rotating alternating cycles among unlocked rows.
fn canonicalize(n: usize, col_of_row: &mut [usize], tight: impl Fn(usize, usize) -> bool) {
    let mut row_of_col = vec![0usize; n];
    for (i, &j) in col_of_row.iter().enumerate() {
        row_of_col[j] = i;
    }
    for i in 0..n {
        for j in 0..col_of_row[i] {
            if !tight(i, j) {
                continue;
            }
            // row_of_col[j] must move to another column via tight edges,
            // ending at the column row i gives up
            let start = row_of_col[j];
            if start < i {
                continue;
            }
            let target = col_of_row[i];
            let mut prev_col: Vec<Option<usize>> = vec![None; n];
            let mut seen_row = vec![false; n];
            seen_row[start] = true;
            seen_row[i] = true;
            let mut queue = VecDeque::from([start]);
            let mut found = false;
            'bfs: while let Some(r) = queue.pop_front() {
                for cc in 0..n {
                    if cc == j || prev_col[cc].is_some() || !tight(r, cc) {
                        continue;
                    }
                    prev_col[cc] = Some(r);
                    if cc == target {
                        found = true;
                        break 'bfs;
                    }
                    let nr = row_of_col[cc];
                    if nr > i && !seen_row[nr] {
                        seen_row[nr] = true;
                        queue.push_back(nr);
                    }
                }
            }
            if !found {
                continue;
            }
            // unwind: each row on the path takes the column it reached
            let mut cc = target;
            while let Some(r) = prev_col[cc] {
                let old = col_of_row[r];
                col_of_row[r] = cc;
                row_of_col[cc] = r;
                if r == start {
                    break;
                }
                cc = old;
            }
            col_of_row[i] = j;
            row_of_col[j] = i;
            break;
        }
    }
}
