//! Self-supervision data synthesis: parametric warps with exact ground-truth
//! fields, photometric jitter, copy-paste object changes and text displacement.

mod changes;
mod photometric;
mod polygon;
mod text;
mod tps;
mod transform;
mod triplet;

pub use changes::{sample_scenario, synthesize_changes, ChangeKind, ChangeOutput, ChangeScenario, PastedObject};
pub use photometric::{apply_photometric, apply_photometric_params, rgb_to_hsv, PhotometricParams, PhotometricSpec};
pub use polygon::{Polygon, PolygonMask};
pub use text::{apply_text_moves, synthesize_text_displacement, TextMove, TextOutput, TextTarget};
pub use tps::{tps_fit, Tps};
pub use transform::{
    rasterize_field, rasterize_inverse_field, sample_transform, CompiledTransform, TpsControl, TransformConfig,
    TransformSpec,
};
pub use triplet::{build_triplet, build_triplets, Annotations, TripletConfig, TripletSample};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic generator for a seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent per-item seed from a master seed (splitmix64 finalizer), so
/// parallel generation order cannot change outputs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Closed interval `[lo, hi]` for uniform sampling. `lo == hi` is allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(Error::Config(format!("range `{name}` [{}, {}] is empty", self.0, self.1)));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            // still consume a draw so streams stay aligned across configs
            let _: f64 = rng.random();
            return self.0;
        }
        rng.random_range(self.0..=self.1)
    }

    pub fn is_point(&self, v: f64) -> bool {
        self.0 == v && self.1 == v
    }
}
