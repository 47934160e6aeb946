//! Evaluation metrics for alignment and instance extraction.

mod ap;
mod chamfer;
mod flow;
mod hungarian;
mod ssim;

pub use ap::{average_precision, masks_of, pr_curve, DetectionSet, Mask, PrCurve, Scored, SizeStratum, MEDIUM_MAX_M2, SMALL_MAX_M2};
pub use chamfer::{chamfer_trimmed, ChamferMode};
pub use flow::{mean_variation, triplet_consistency_l1, ConsistencyL1};
pub use hungarian::{hungarian_assign, Assignment};
pub use ssim::{gaussian_taps, ssim, ssim_with, SsimConfig};
