use std::path::Path;

use serde_json::{Map, Value};

use super::centrality::CentralityResult;
use super::graph::StreetGraph;
use crate::error::{Error, Result};
use crate::geojson::{line_feature, point_feature, write_collection};
use crate::raster::RectifyPlan;

/// Edges as LineStrings and nodes as Points, in world coordinates.
pub fn network_features(
    graph: &StreetGraph,
    centrality: &CentralityResult,
    top: &[usize],
    plan: &RectifyPlan,
) -> Result<Vec<Value>> {
    if centrality.values.len() != graph.node_count() {
        return Err(Error::Dimension("centrality does not match the graph".into()));
    }
    let world = |p: [f64; 2]| {
        let (x, y) = plan.pixel_to_world(p[0], p[1]);
        [x, y]
    };
    let mut out = Vec::with_capacity(graph.edges.len() + graph.node_count());
    for (i, e) in graph.edges.iter().enumerate() {
        let mut line = vec![world(graph.nodes[e.a])];
        line.extend(e.pixels.iter().map(|p| world([p.0 as f64, p.1 as f64])));
        line.push(world(graph.nodes[e.b]));
        let mut props = Map::new();
        props.insert("edge".into(), i.into());
        props.insert("a".into(), e.a.into());
        props.insert("b".into(), e.b.into());
        props.insert("length_m".into(), e.length_m.into());
        out.push(line_feature(&line, props));
    }
    for (i, &p) in graph.nodes.iter().enumerate() {
        let mut props = Map::new();
        props.insert("node".into(), i.into());
        props.insert("betweenness".into(), centrality.values[i].into());
        props.insert("percentile_rank".into(), centrality.percentile_rank[i].into());
        props.insert("top".into(), top.contains(&i).into());
        out.push(point_feature(world(p), props));
    }
    Ok(out)
}

pub fn write_network(
    path: impl AsRef<Path>,
    graph: &StreetGraph,
    centrality: &CentralityResult,
    top: &[usize],
    plan: &RectifyPlan,
) -> Result<()> {
    write_collection(path, network_features(graph, centrality, top, plan)?)
}
