//! Staged batch runs over a sheet inventory.
//!
//! Stages write into `<output>/.staging/<stage>` and are moved into
//! `<output>/<stage>` only after every requested stage succeeded, followed by
//! `manifest.json`. A failed run leaves earlier committed outputs untouched.

mod config;
mod manifest;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    load_settings, BlockSettings, ChangeSettings, EpochInput, MetricSettings, NetworkSettings, PipelineConfig, SheetInput,
    StitchSettings, SynthSettings,
};
pub use manifest::{digest_tree, sha256_file, sha256_hex, RunManifest, StageRecord, MANIFEST_NAME};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Rectify,
    Synth,
    AlignEval,
    Stitch,
    Blocks,
    Change,
    Network,
    Report,
}

impl Stage {
    /// Every stage, in an order compatible with [`Stage::upstream`].
    pub const ALL: [Stage; 8] = [
        Stage::Rectify,
        Stage::Synth,
        Stage::AlignEval,
        Stage::Stitch,
        Stage::Blocks,
        Stage::Change,
        Stage::Network,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Rectify => "rectify",
            Stage::Synth => "synth",
            Stage::AlignEval => "align-eval",
            Stage::Stitch => "stitch",
            Stage::Blocks => "blocks",
            Stage::Change => "change",
            Stage::Network => "network",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Rectify => &[],
            Stage::Synth | Stage::AlignEval | Stage::Stitch => &[Stage::Rectify],
            Stage::Blocks => &[Stage::Rectify, Stage::Stitch],
            Stage::Change => &[Stage::Rectify, Stage::Stitch, Stage::Blocks],
            Stage::Network => &[Stage::Rectify, Stage::Blocks],
            Stage::Report => &[Stage::Change, Stage::Network],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "align_eval" && *st == Stage::AlignEval))
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Per-run state shared by the stage functions.
pub(crate) struct Run<'a> {
    pub cfg: &'a PipelineConfig,
    pub out: PathBuf,
    pub staging: PathBuf,
    produced: BTreeSet<Stage>,
    stage: Stage,
    inputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn dir(&self) -> PathBuf {
        self.staging.join(self.stage.name())
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{}: {msg}", self.stage);
        self.warnings.push(msg);
    }

    /// Path of an upstream artifact, preferring this run's staged copy.
    pub fn upstream(&mut self, from: Stage, rel: &str) -> Result<PathBuf> {
        let path = if self.produced.contains(&from) {
            self.staging.join(from.name()).join(rel)
        } else {
            self.out.join(from.name()).join(rel)
        };
        if !path.is_file() {
            return Err(Error::Dependency {
                stage: self.stage.name().to_string(),
                path: self.out.join(from.name()).join(rel),
            });
        }
        self.inputs.insert(format!("{}/{rel}", from.name()), sha256_file(&path)?);
        Ok(path)
    }

    /// Resolves and records an inventory input (file or directory).
    pub fn input(&mut self, p: &Path) -> Result<PathBuf> {
        let full = self.cfg.resolve(p);
        let key = p.to_string_lossy().replace('\\', "/");
        if full.is_dir() {
            for (rel, d) in digest_tree(&full)? {
                self.inputs.insert(format!("{key}/{rel}"), d);
            }
        } else {
            self.inputs.insert(key, sha256_file(&full)?);
        }
        Ok(full)
    }
}

/// Executes `stages` (in dependency order) and commits their outputs.
pub fn run_pipeline(config: &PipelineConfig, stages: &[Stage]) -> Result<RunManifest> {
    config.validate()?;
    let wanted: BTreeSet<Stage> = stages.iter().copied().collect();
    if wanted.is_empty() {
        return Err(Error::Config("no stages requested".into()));
    }
    let out = config.output_dir();
    let staging = out.join(".staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let mut run = Run {
        cfg: config,
        out: out.clone(),
        staging: staging.clone(),
        produced: BTreeSet::new(),
        stage: Stage::Rectify,
        inputs: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let result = execute(&mut run, &wanted);
    let records = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };

    for r in &records {
        let from = staging.join(r.stage.name());
        let to = out.join(r.stage.name());
        if to.exists() {
            fs::remove_dir_all(&to).map_err(|e| Error::io(&to, e))?;
        }
        fs::rename(&from, &to).map_err(|e| Error::io(&from, e))?;
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(config.to_toml()?.as_bytes()),
        seed: config.seed,
        stages: records,
    };
    let tmp = staging.join(MANIFEST_NAME);
    manifest.save(&tmp)?;
    let dst = out.join(MANIFEST_NAME);
    fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
    fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    Ok(manifest)
}

fn execute(run: &mut Run<'_>, wanted: &BTreeSet<Stage>) -> Result<Vec<StageRecord>> {
    let mut records = Vec::new();
    for stage in Stage::ALL.into_iter().filter(|s| wanted.contains(s)) {
        run.stage = stage;
        run.inputs.clear();
        run.warnings.clear();
        let dir = run.dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        log::info!("stage {stage} starting");
        let t0 = Instant::now();
        match stage {
            Stage::Rectify => stages::rectify(run)?,
            Stage::Synth => stages::synth(run)?,
            Stage::AlignEval => stages::align_eval(run)?,
            Stage::Stitch => stages::stitch(run)?,
            Stage::Blocks => stages::blocks(run)?,
            Stage::Change => stages::change(run)?,
            Stage::Network => stages::network(run)?,
            Stage::Report => stages::report(run)?,
        }
        let millis = t0.elapsed().as_millis() as u64;
        let outputs = digest_tree(&dir)?
            .into_iter()
            .map(|(rel, d)| (format!("{}/{rel}", stage.name()), d))
            .collect();
        log::info!("stage {stage} done in {millis} ms");
        run.produced.insert(stage);
        records.push(StageRecord {
            stage,
            inputs: std::mem::take(&mut run.inputs),
            outputs,
            warnings: std::mem::take(&mut run.warnings),
            millis,
        });
    }
    Ok(records)
}
