//! Street graphs traced from one-pixel skeletons.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::field::ValidityMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreetEdge {
    pub a: usize,
    pub b: usize,
    /// Metres along the traced polyline.
    pub length_m: f64,
    /// Interior chain pixels from `a` towards `b`.
    pub pixels: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StreetGraph {
    /// Node positions in pixel coordinates (cluster centroids).
    pub nodes: Vec<[f64; 2]>,
    /// Skeleton pixels merged into each node.
    pub node_pixels: Vec<Vec<(usize, usize)>>,
    /// Undirected; parallel edges are allowed, self-loops are not.
    pub edges: Vec<StreetEdge>,
}

impl StreetGraph {
    /// Build a graph from explicit nodes and `(a, b, length_m)` edges.
    pub fn from_edges(nodes: Vec<[f64; 2]>, edges: &[(usize, usize, f64)]) -> Self {
        let node_pixels = vec![Vec::new(); nodes.len()];
        let edges = edges
            .iter()
            .map(|&(a, b, length_m)| StreetEdge {
                a,
                b,
                length_m,
                pixels: Vec::new(),
            })
            .collect();
        StreetGraph {
            nodes,
            node_pixels,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `adjacency[v]` lists `(neighbour, edge index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        adj
    }
}

const D8: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

struct Tracer<'a> {
    sk: &'a ValidityMask,
    node_of: Vec<Option<usize>>,
    visited: Vec<bool>,
}

impl Tracer<'_> {
    fn idx(&self, p: (usize, usize)) -> usize {
        p.1 * self.sk.width() + p.0
    }

    fn neighbours(&self, p: (usize, usize)) -> Vec<(usize, usize)> {
        let (w, h) = (self.sk.width() as i64, self.sk.height() as i64);
        D8.iter()
            .filter_map(|&(dx, dy)| {
                let (x, y) = (p.0 as i64 + dx, p.1 as i64 + dy);
                (x >= 0 && y >= 0 && x < w && y < h && self.sk.get(x as usize, y as usize))
                    .then_some((x as usize, y as usize))
            })
            .collect()
    }

    /// Follows degree-2 pixels from `start` (entered from `from`) until a node
    /// pixel is reached. Returns the chain and the end node, or `None` for the
    /// end when the walk returns to `from` through chain pixels only.
    fn walk(&mut self, from: (usize, usize), start: (usize, usize)) -> (Vec<(usize, usize)>, Option<usize>) {
        let mut chain = Vec::new();
        let (mut prev, mut cur) = (from, start);
        loop {
            let i = self.idx(cur);
            if let Some(n) = self.node_of[i] {
                return (chain, Some(n));
            }
            if self.visited[i] {
                return (chain, None);
            }
            self.visited[i] = true;
            chain.push(cur);
            let nb = self.neighbours(cur);
            let next = nb.iter().copied().find(|&q| q != prev);
            match next {
                Some(q) => {
                    prev = cur;
                    cur = q;
                }
                None => return (chain, None),
            }
        }
    }
}

fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

fn centroid(px: &[(usize, usize)]) -> [f64; 2] {
    let n = px.len() as f64;
    let (sx, sy) = px.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 as f64, b + p.1 as f64));
    [sx / n, sy / n]
}

/// Chains shorter than this that leave and re-enter the same node are merged into it.
const ABSORB_MAX: usize = 4;

/// Traces a skeleton into a graph. Pixels with a neighbour count other than
/// two are node pixels; node pixels within Chebyshev distance 2 form one
/// node. Edges follow the degree-2 chains between nodes. A chain leaving and
/// re-entering the same node is split at its middle pixel, and a closed loop
/// without nodes gets an artificial node at its first pixel plus one at its
/// middle.
pub fn extract_graph(skeleton: &ValidityMask, resolution: f64) -> StreetGraph {
    let (w, h) = (skeleton.width(), skeleton.height());
    let mut t = Tracer {
        sk: skeleton,
        node_of: vec![None; w * h],
        visited: vec![false; w * h],
    };

    // node pixels, clustered by union-find
    let mut node_px: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if skeleton.get(x, y) && t.neighbours((x, y)).len() != 2 {
                node_px.push((x, y));
            }
        }
    }
    let slot: BTreeMap<(usize, usize), usize> = node_px.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut parent: Vec<usize> = (0..node_px.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (i, &(x, y)) in node_px.iter().enumerate() {
        for ny in y.saturating_sub(2)..=(y + 2).min(h - 1) {
            for nx in x.saturating_sub(2)..=(x + 2).min(w - 1) {
                if let Some(&j) = slot.get(&(nx, ny)) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut cluster_id: BTreeMap<usize, usize> = BTreeMap::new();
    let mut node_pixels: Vec<Vec<(usize, usize)>> = Vec::new();
    for (i, &p) in node_px.iter().enumerate() {
        let r = find(&mut parent, i);
        let id = *cluster_id.entry(r).or_insert_with(|| {
            node_pixels.push(Vec::new());
            node_pixels.len() - 1
        });
        node_pixels[id].push(p);
        let k = t.idx(p);
        t.node_of[k] = Some(id);
    }

    // raw chains: (start node, end node, pixels)
    let mut chains: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
    for id in 0..node_pixels.len() {
        for &p in &node_pixels[id] {
            for q in t.neighbours(p) {
                let k = t.idx(q);
                if t.node_of[k].is_some() || t.visited[k] {
                    continue;
                }
                let (chain, end) = t.walk(p, q);
                chains.push((id, end.unwrap_or(id), chain));
            }
        }
    }
    // closed loops with no node pixel
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if !skeleton.get(x, y) || t.visited[k] || t.node_of[k].is_some() {
                continue;
            }
            let id = node_pixels.len();
            node_pixels.push(vec![(x, y)]);
            t.node_of[k] = Some(id);
            t.visited[k] = true;
            let q = t.neighbours((x, y))[0];
            let (chain, _) = t.walk((x, y), q);
            chains.push((id, id, chain));
        }
    }

    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut edges_raw: Vec<(usize, usize, Vec<(usize, usize)>)> = Vec::new();
    for (a, b, chain) in chains {
        if a == b && chain.len() < ABSORB_MAX {
            node_pixels[a].extend(chain);
        } else if a == b {
            let mid = chain.len() / 2;
            let m = node_pixels.len();
            node_pixels.push(vec![chain[mid]]);
            edges_raw.push((a, m, chain[..mid].to_vec()));
            edges_raw.push((m, a, chain[mid + 1..].to_vec()));
        } else {
            edges_raw.push((a, b, chain));
        }
    }
    for px in &node_pixels {
        nodes.push(centroid(px));
    }
    let edges = edges_raw
        .into_iter()
        .map(|(a, b, pixels)| {
            let mut pts = vec![nodes[a]];
            pts.extend(pixels.iter().map(|p| [p.0 as f64, p.1 as f64]));
            pts.push(nodes[b]);
            StreetEdge {
                a,
                b,
                length_m: polyline_length(&pts) * resolution,
                pixels,
            }
        })
        .collect();
    StreetGraph {
        nodes,
        node_pixels,
        edges,
    }
}
