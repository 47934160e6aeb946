//! Street networks between blocks and their betweenness centrality.

mod centrality;
mod export;
mod graph;
mod skeleton;

pub use centrality::{betweenness, percentile, top_percentile_nodes, CentralityResult, DistanceMode};
pub use export::{network_features, write_network};
pub use graph::{extract_graph, StreetEdge, StreetGraph};
pub use skeleton::{open3, prune_corners, road_mask_and_skeleton, zhang_suen, SkeletonOutput};

use crate::instances::BlockMap;

/// Skeleton, graph and centrality for one block map.
#[derive(Clone, Debug, PartialEq)]
pub struct StreetNetwork {
    pub graph: StreetGraph,
    pub centrality: CentralityResult,
    pub top: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn street_network(blocks: &BlockMap, mode: DistanceMode, top_percentile: f64) -> crate::Result<StreetNetwork> {
    let sk = road_mask_and_skeleton(blocks);
    let graph = extract_graph(&sk.skeleton, blocks.resolution());
    let centrality = betweenness(&graph, mode);
    let top = if graph.node_count() == 0 {
        Vec::new()
    } else {
        top_percentile_nodes(&centrality, top_percentile)?
    };
    Ok(StreetNetwork {
        graph,
        centrality,
        top,
        warnings: sk.warnings,
    })
}
