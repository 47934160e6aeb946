//! Cross-epoch instance matching and block-level change profiles.

mod matching;
mod profile;
mod report;

pub use matching::{assign_by_iou, match_instances, MatchConfig, MatchResult};
pub use profile::{attribute_labels, block_change_profile, BlockChangeProfile, BlockScore, ReferenceEpoch};
pub use report::{
    block_outline, export_change_report, ramp_color, render_choropleth, report_csv, report_features, ReportFiles,
    CSV_HEADER,
};
