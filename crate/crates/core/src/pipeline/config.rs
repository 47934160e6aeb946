use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::change::ReferenceEpoch;
use crate::error::{Error, Result};
use crate::instances::{TileGrid, DEFAULT_AREA_THRESHOLD_M2, DEFAULT_HOLE_THRESHOLD_PX};
use crate::metrics::{ChamferMode, SsimConfig};
use crate::network::DistanceMode;
use crate::raster::Resampling;
use crate::synth::TripletConfig;

/// One epoch of a sheet. Relative paths resolve against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochInput {
    pub year: u32,
    pub raster: PathBuf,
    pub world_file: PathBuf,
    /// Directory of `tile_RRR_CCC.imap` predictions on the rectified plane.
    #[serde(default)]
    pub tiles: Option<PathBuf>,
    /// Field from this epoch's plane to the next epoch (DFLD).
    #[serde(default)]
    pub field: Option<PathBuf>,
    /// Object and text polygons in rectified pixel coordinates.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetInput {
    pub id: String,
    pub epochs: Vec<EpochInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    /// Triplets per consecutive epoch pair.
    pub count: usize,
    pub triplet: TripletConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            count: 8,
            triplet: TripletConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub ssim: SsimConfig,
    pub chamfer_mode: ChamferMode,
    pub trim_fractions: Vec<f64>,
    /// Luma below which a pixel counts as ink for object extraction.
    pub ink_threshold: u8,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            ssim: SsimConfig::default(),
            chamfer_mode: ChamferMode::Euclidean,
            trim_fractions: vec![0.1, 0.2, 0.4],
            ink_threshold: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchSettings {
    pub patch_size: usize,
    pub step: usize,
}

impl Default for StitchSettings {
    fn default() -> Self {
        StitchSettings {
            patch_size: 512,
            step: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockSettings {
    pub area_threshold_m2: f64,
    pub hole_threshold_px: usize,
}

impl Default for BlockSettings {
    fn default() -> Self {
        BlockSettings {
            area_threshold_m2: DEFAULT_AREA_THRESHOLD_M2,
            hole_threshold_px: DEFAULT_HOLE_THRESHOLD_PX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangeSettings {
    pub min_area_m2: f64,
    pub reference: ReferenceEpoch,
    pub choropleth: bool,
}

impl Default for ChangeSettings {
    fn default() -> Self {
        ChangeSettings {
            min_area_m2: 500.0,
            reference: ReferenceEpoch::T1,
            choropleth: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub percentile: f64,
    pub mode: DistanceMode,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings {
            percentile: 90.0,
            mode: DistanceMode::Metric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output root.
    pub output: PathBuf,
    /// Target metres per pixel of the rectified plane.
    pub resolution: f64,
    #[serde(default)]
    pub resampling: Resampling,
    pub sheets: Vec<SheetInput>,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
    #[serde(default)]
    pub stitch: StitchSettings,
    #[serde(default)]
    pub blocks: BlockSettings,
    #[serde(default)]
    pub change: ChangeSettings,
    #[serde(default)]
    pub network: NetworkSettings,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    /// Checks ordering, uniqueness, numeric ranges and that every referenced
    /// input exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad(format!("resolution must be positive, got {}", self.resolution));
        }
        if self.sheets.is_empty() {
            return bad("inventory lists no sheets".into());
        }
        TileGrid::new(self.stitch.patch_size, self.stitch.step, self.stitch.patch_size, self.stitch.patch_size)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=100.0).contains(&self.network.percentile) {
            return bad(format!("network percentile {} outside [0, 100]", self.network.percentile));
        }
        if self.metrics.trim_fractions.iter().any(|t| !(0.0..1.0).contains(t)) {
            return bad("trim fractions must lie in [0, 1)".into());
        }
        self.synth.triplet.transform.validate()?;
        self.synth.triplet.photometric.validate()?;
        let mut ids: Vec<&str> = self.sheets.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("sheet ids must be unique".into());
        }
        for s in &self.sheets {
            if s.id.is_empty() || s.id.contains(['/', '\\']) {
                return bad(format!("sheet id `{}` is not a plain name", s.id));
            }
            if s.epochs.is_empty() {
                return bad(format!("sheet `{}` has no epochs", s.id));
            }
            if s.epochs.windows(2).any(|w| w[0].year >= w[1].year) {
                return bad(format!("epochs of sheet `{}` are not strictly ordered", s.id));
            }
            for e in &s.epochs {
                let paths = [Some(&e.raster), Some(&e.world_file), e.tiles.as_ref(), e.field.as_ref(), e.annotations.as_ref()];
                for p in paths.into_iter().flatten() {
                    let full = self.resolve(p);
                    if !full.exists() {
                        return bad(format!("sheet `{}` {}: {} does not exist", s.id, e.year, full.display()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reads a settings table from a TOML file, or defaults when `path` is `None`.
pub fn load_settings<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(p) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
output = "out"
resolution = 0.5

[[sheets]]
id = "a"
[[sheets.epochs]]
year = 1900
raster = "a.png"
world_file = "a.pgw"
"#;

    #[test]
    fn defaults_are_surfaced() {
        let c = PipelineConfig::from_toml(MINIMAL, "/tmp/x").unwrap();
        assert_eq!(c.blocks.hole_threshold_px, 625);
        assert_eq!(c.blocks.area_threshold_m2, 500.0);
        assert_eq!(c.change.min_area_m2, 500.0);
        assert_eq!(c.network.percentile, 90.0);
        assert_eq!(c.stitch, StitchSettings { patch_size: 512, step: 256 });
        assert_eq!(c.metrics.trim_fractions, vec![0.1, 0.2, 0.4]);
        assert_eq!(c.output_dir(), PathBuf::from("/tmp/x/out"));
        // serialized form parses back to the same config
        let again = PipelineConfig::from_toml(&c.to_toml().unwrap(), "/tmp/x").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn validation_failures_are_config_errors() {
        let c = PipelineConfig::from_toml(MINIMAL, "/nonexistent").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(
            PipelineConfig::from_toml("seed = 1\nbogus = 2", "."),
            Err(Error::Config(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.png", "a.pgw"] {
            std::fs::write(dir.path().join(f), b"x").unwrap();
        }
        let mut c = PipelineConfig::from_toml(MINIMAL, dir.path()).unwrap();
        c.validate().unwrap();
        let mut e = c.sheets[0].epochs[0].clone();
        e.year = 1900;
        c.sheets[0].epochs.push(e);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
