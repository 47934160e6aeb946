//! Sheet-level instance maps: IMAP I/O, tile stitching and block aggregation.

mod blocks;
mod components;
mod map;
mod stitch;

pub use blocks::{aggregate_blocks, BlockMap, DEFAULT_AREA_THRESHOLD_M2, DEFAULT_HOLE_THRESHOLD_PX};
pub use components::{label_components, label_regions};
pub use map::{InstanceClass, InstanceMap};
pub use stitch::{
    count_fragments, equal_up_to_relabel, load_tile_dir, split_tiles, stitch_tiles, write_tile_dir, TileGrid,
};
