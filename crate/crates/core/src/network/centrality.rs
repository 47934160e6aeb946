//! Betweenness centrality (Brandes) and percentile filtering.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::graph::StreetGraph;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Edge length in metres.
    #[default]
    Metric,
    /// Every edge counts 1.
    Hops,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityResult {
    /// Normalized betweenness per node, in `[0, 1]`.
    pub values: Vec<f64>,
    /// Percentage of nodes with a strictly smaller value.
    pub percentile_rank: Vec<f64>,
}

/// Simple weighted adjacency: for each neighbour the shortest parallel edge
/// and how many parallel edges share that length.
pub(crate) fn collapse(graph: &StreetGraph, mode: DistanceMode) -> Vec<Vec<(usize, f64, f64)>> {
    let mut adj: Vec<BTreeMap<usize, (f64, f64)>> = vec![BTreeMap::new(); graph.node_count()];
    let mut add = |a: usize, b: usize, w: f64| {
        let e = adj[a].entry(b).or_insert((w, 0.0));
        if w < e.0 - tol(e.0) {
            *e = (w, 1.0);
        } else if (w - e.0).abs() <= tol(e.0.max(w)) {
            e.1 += 1.0;
        }
    };
    for e in &graph.edges {
        if e.a == e.b {
            continue;
        }
        let w = match mode {
            DistanceMode::Metric => e.length_m,
            DistanceMode::Hops => 1.0,
        };
        add(e.a, e.b, w);
        add(e.b, e.a, w);
    }
    adj.into_iter()
        .map(|m| m.into_iter().map(|(v, (w, k))| (v, w, k)).collect())
        .collect()
}

#[inline]
fn tol(d: f64) -> f64 {
    1e-9 * d.abs().max(1e-300)
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Dependencies of every node on shortest paths from `s`.
fn single_source(adj: &[Vec<(usize, f64, f64)>], s: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0f64; n];
    let mut preds: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    dist[s] = 0.0;
    sigma[s] = 1.0;
    let mut heap = BinaryHeap::from([Item(0.0, s)]);
    while let Some(Item(d, v)) = heap.pop() {
        if done[v] || d > dist[v] {
            continue;
        }
        done[v] = true;
        order.push(v);
        for &(w, len, mult) in &adj[v] {
            if done[w] {
                continue;
            }
            let nd = d + len;
            if dist[w].is_infinite() || nd < dist[w] - tol(dist[w]) {
                dist[w] = nd;
                sigma[w] = sigma[v] * mult;
                preds[w].clear();
                preds[w].push((v, mult));
                heap.push(Item(nd, w));
            } else if (nd - dist[w]).abs() <= tol(dist[w]) {
                sigma[w] += sigma[v] * mult;
                preds[w].push((v, mult));
            }
        }
    }
    let mut delta = vec![0.0; n];
    for &w in order.iter().rev() {
        for &(v, mult) in &preds[w] {
            delta[v] += sigma[v] * mult / sigma[w] * (1.0 + delta[w]);
        }
    }
    delta[s] = 0.0;
    delta
}

/// Shortest-path betweenness normalized by `(n-1)(n-2)/2`, the number of
/// node pairs excluding the node itself. Disconnected components simply
/// contribute no paths between each other.
pub fn betweenness(graph: &StreetGraph, mode: DistanceMode) -> CentralityResult {
    let n = graph.node_count();
    let adj = collapse(graph, mode);
    let per_source = par::map_range(n, |s| single_source(&adj, s));
    let mut values = vec![0.0; n];
    for d in &per_source {
        for (v, x) in values.iter_mut().zip(d) {
            *v += x;
        }
    }
    // each unordered pair was counted from both ends
    let norm = if n > 2 { ((n - 1) * (n - 2)) as f64 } else { 1.0 };
    for v in &mut values {
        *v = if n > 2 { *v / norm } else { 0.0 };
    }
    let percentile_rank = values
        .iter()
        .map(|&v| 100.0 * values.iter().filter(|&&u| u < v).count() as f64 / n as f64)
        .collect();
    CentralityResult {
        values,
        percentile_rank,
    }
}

/// `p`-th percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Dimension("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Nodes whose value is strictly above the `p`-th percentile.
pub fn top_percentile_nodes(result: &CentralityResult, p: f64) -> Result<Vec<usize>> {
    let t = percentile(&result.values, p)?;
    Ok((0..result.values.len()).filter(|&i| result.values[i] > t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> StreetGraph {
        StreetGraph::from_edges(vec![[0.0, 0.0]; n], edges)
    }

    #[test]
    fn path_of_three() {
        let r = betweenness(&graph(3, &[(0, 1, 2.0), (1, 2, 5.0)]), DistanceMode::Metric);
        assert_eq!(r.values, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn complete_graph_is_zero() {
        let mut e = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                e.push((a, b, 1.0));
            }
        }
        let r = betweenness(&graph(4, &e), DistanceMode::Metric);
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn star_and_hops() {
        // hub 0 with 4 leaves: hub lies on all 6 leaf pairs
        let e: Vec<_> = (1..5).map(|i| (0, i, i as f64)).collect();
        let r = betweenness(&graph(5, &e), DistanceMode::Hops);
        assert_eq!(r.values[0], 1.0);
        assert_eq!(r.percentile_rank[0], 80.0);
    }

    #[test]
    fn square_splits_evenly() {
        // 4-cycle: each opposite pair has two shortest paths
        let r = betweenness(&graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]), DistanceMode::Metric);
        for v in r.values {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_edges_count_as_paths() {
        // 0 =2= 1 - 2 and 0 - 3 - 2 all length 2: paths via 1 count twice
        let g = graph(4, &[(0, 1, 1.0), (0, 1, 1.0), (1, 2, 1.0), (0, 3, 1.0), (3, 2, 1.0)]);
        let r = betweenness(&g, DistanceMode::Metric);
        assert!((r.values[1] - (2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!((r.values[3] - (1.0 / 3.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn percentile_selection() {
        let equal = CentralityResult {
            values: vec![0.3; 7],
            percentile_rank: vec![0.0; 7],
        };
        assert!(top_percentile_nodes(&equal, 90.0).unwrap().is_empty());
        let values: Vec<f64> = (0..10).map(|i| (i * 7 % 10) as f64).collect();
        let r = CentralityResult {
            percentile_rank: vec![0.0; 10],
            values,
        };
        let max = (0..10).max_by(|&a, &b| r.values[a].total_cmp(&r.values[b])).unwrap();
        assert_eq!(top_percentile_nodes(&r, 90.0).unwrap(), vec![max]);
        let min = (0..10).min_by(|&a, &b| r.values[a].total_cmp(&r.values[b])).unwrap();
        let all_but_min: Vec<usize> = (0..10).filter(|&i| i != min).collect();
        assert_eq!(top_percentile_nodes(&r, 0.0).unwrap(), all_but_min);
        assert!(top_percentile_nodes(&r, 101.0).is_err());
        let empty = CentralityResult {
            values: vec![],
            percentile_rank: vec![],
        };
        assert!(top_percentile_nodes(&empty, 50.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(
            n in 3usize..12,
            raw in prop::collection::vec((0usize..12, 0usize..12, 1u32..20), 1..30),
            k in 0.01f64..100.0,
        ) {
            let e: Vec<_> = raw.iter().filter(|r| r.0 % n != r.1 % n).map(|r| (r.0 % n, r.1 % n, r.2 as f64)).collect();
            let scaled: Vec<_> = e.iter().map(|&(a, b, w)| (a, b, w * k)).collect();
            let a = betweenness(&graph(n, &e), DistanceMode::Metric);
            let b = betweenness(&graph(n, &scaled), DistanceMode::Metric);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
                prop_assert!(x.is_finite() && *x >= 0.0 && *x <= 1.0 + 1e-12);
            }
        }
    }
}
