use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::MatchResult;
use crate::error::{Error, Result};
use crate::instances::{BlockMap, InstanceMap};

/// Which epoch's blocks and footprints drive attribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceEpoch {
    #[default]
    T1,
    T2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    pub block_id: u32,
    /// `None` when no instance was attributed to the block.
    pub mean_iou: Option<f64>,
    pub n_matched: usize,
    pub n_unmatched: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockChangeProfile {
    pub epoch_pair: String,
    /// One entry per block id `1..=n`.
    pub blocks: Vec<BlockScore>,
}

impl BlockChangeProfile {
    pub fn get(&self, block_id: u32) -> Option<&BlockScore> {
        block_id.checked_sub(1).and_then(|i| self.blocks.get(i as usize))
    }
}

/// Block holding the majority of each label's footprint (ties to the lower
/// block id). Labels lying entirely outside blocks are absent.
pub fn attribute_labels(inst: &InstanceMap, blocks: &BlockMap) -> Result<BTreeMap<u32, u32>> {
    if (inst.height(), inst.width()) != (blocks.height(), blocks.width()) {
        return Err(Error::Dimension("instance map and block map planes differ".into()));
    }
    let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&l, &b) in inst.labels().iter().zip(blocks.labels()) {
        if l != 0 && b != 0 {
            *votes.entry(l).or_default().entry(b).or_insert(0) += 1;
        }
    }
    Ok(votes
        .into_iter()
        .map(|(l, v)| {
            let best = v.iter().max_by_key(|(&b, &c)| (c, std::cmp::Reverse(b))).map(|(&b, _)| b).unwrap();
            (l, best)
        })
        .collect())
}

/// Mean IoU per block of the reference epoch. Matched instances contribute
/// their IoU, unmatched reference instances contribute 0.
pub fn block_change_profile(
    m: &MatchResult,
    blocks: &BlockMap,
    reference: &InstanceMap,
    epoch: ReferenceEpoch,
    epoch_pair: &str,
) -> Result<BlockChangeProfile> {
    let owner = attribute_labels(reference, blocks)?;
    let n = blocks.len();
    let mut sum = vec![0.0; n];
    let mut matched = vec![0usize; n];
    let mut unmatched = vec![0usize; n];
    for &(a, b, iou) in &m.pairs {
        let l = if epoch == ReferenceEpoch::T1 { a } else { b };
        if let Some(&blk) = owner.get(&l) {
            sum[blk as usize - 1] += iou;
            matched[blk as usize - 1] += 1;
        }
    }
    let lost = if epoch == ReferenceEpoch::T1 { &m.unmatched_t1 } else { &m.unmatched_t2 };
    for l in lost {
        if let Some(&blk) = owner.get(l) {
            unmatched[blk as usize - 1] += 1;
        }
    }
    let blocks = (0..n)
        .map(|i| {
            let k = matched[i] + unmatched[i];
            BlockScore {
                block_id: i as u32 + 1,
                mean_iou: (k > 0).then(|| sum[i] / k as f64),
                n_matched: matched[i],
                n_unmatched: unmatched[i],
            }
        })
        .collect();
    Ok(BlockChangeProfile {
        epoch_pair: epoch_pair.to_string(),
        blocks,
    })
}
