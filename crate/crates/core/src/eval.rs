//! Segmentation scoring against annotated ground truth.
//!
//! Output segments are first matched to shadow masks, then one-to-one to
//! the remaining ground-truth segments at IoU ≥ 0.5. The dataset score is
//! `(1/K)·Σ_k 2·min(IoU_k, 0.5)` over all `K` annotated segments, with
//! unmatched segments contributing zero. The unnormalised `Σ_k min(IoU_k, 0.5)`
//! is reported next to it.

use crate::error::{Error, Result};
use crate::grid::{Grid, LabelMap};
use crate::par::{self, Execution};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Ground-truth label reserved for pixels outside every annotated segment.
pub const UNANNOTATED: u32 = 0;

/// IoU required for a match.
pub const MATCH_THRESHOLD: f64 = 0.5;

/// `|A ∩ B| / |A ∪ B|` for two masks over the same pixels.
pub fn iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: (a.len(), 1),
            found: (b.len(), 1),
        });
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        return Err(Error::EmptySets);
    }
    Ok(inter as f64 / union as f64)
}

/// IoU from an intersection count and the two set sizes.
pub fn iou_from_counts(intersection: u64, size_a: u64, size_b: u64) -> Result<f64> {
    let union = size_a + size_b - intersection;
    if union == 0 {
        return Err(Error::EmptySets);
    }
    Ok(intersection as f64 / union as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: LabelMap,
    /// binary masks, possibly overlapping
    pub shadow_masks: Vec<Grid<bool>>,
}

impl GroundTruth {
    pub fn new(labels: LabelMap, shadow_masks: Vec<Grid<bool>>) -> Result<Self> {
        for m in &shadow_masks {
            if m.dims() != labels.dims() {
                return Err(Error::DimensionMismatch {
                    expected: labels.dims(),
                    found: m.dims(),
                });
            }
        }
        Ok(Self { labels, shadow_masks })
    }

    pub fn without_shadows(labels: LabelMap) -> Self {
        Self {
            labels,
            shadow_masks: Vec::new(),
        }
    }

    /// Annotated segment ids in ascending order.
    pub fn segment_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.as_slice().iter().copied().filter(|&l| l != UNANNOTATED).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub gt: u32,
    pub out: u32,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowMatch {
    /// index into the shadow mask list
    pub mask: usize,
    pub out: u32,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<SegmentMatch>,
    pub shadow_pairs: Vec<ShadowMatch>,
    pub unmatched: Vec<u32>,
    /// annotated ground-truth segments in the image
    pub gt_segments: usize,
}

impl MatchResult {
    /// `Σ_k min(IoU_k, 0.5)` over this image.
    pub fn literal_sum(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou.min(MATCH_THRESHOLD)).sum()
    }

    /// Normalised score for this image alone; `None` without annotated
    /// segments.
    pub fn score(&self) -> Option<f64> {
        (self.gt_segments > 0).then(|| 2.0 * self.literal_sum() / self.gt_segments as f64)
    }
}

fn check_dims(gt: &GroundTruth, out: &LabelMap) -> Result<()> {
    if gt.labels.dims() != out.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.labels.dims(),
            found: out.dims(),
        });
    }
    Ok(())
}

fn shadow_phase(gt: &GroundTruth, out: &LabelMap, retired: &mut [bool]) -> Vec<ShadowMatch> {
    if gt.shadow_masks.is_empty() {
        return Vec::new();
    }
    let mut out_size: BTreeMap<u32, u64> = BTreeMap::new();
    for &l in out.as_slice() {
        *out_size.entry(l).or_default() += 1;
    }
    let mask_size: Vec<u64> = gt
        .shadow_masks
        .iter()
        .map(|m| m.as_slice().iter().filter(|&&b| b).count() as u64)
        .collect();
    // intersection of every output segment with every mask
    let mut inter: HashMap<u32, Vec<u64>> = HashMap::new();
    for (i, &l) in out.as_slice().iter().enumerate() {
        for (k, m) in gt.shadow_masks.iter().enumerate() {
            if m.as_slice()[i] {
                inter.entry(l).or_insert_with(|| vec![0; mask_size.len()])[k] += 1;
            }
        }
    }
    let mut order: Vec<(u32, u64)> = out_size.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut mask_taken = vec![false; mask_size.len()];
    let mut matches = Vec::new();
    for (seg, size) in order {
        let Some(counts) = inter.get(&seg) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for (k, &c) in counts.iter().enumerate() {
            if mask_taken[k] || mask_size[k] == 0 {
                continue;
            }
            let v = c as f64 / (size + mask_size[k] - c) as f64;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        if let Some((k, v)) = best {
            if v >= MATCH_THRESHOLD {
                mask_taken[k] = true;
                matches.push(ShadowMatch { mask: k, out: seg, iou: v });
                for (r, &m) in retired.iter_mut().zip(gt.shadow_masks[k].as_slice()) {
                    *r |= m;
                }
            }
        }
    }
    matches
}

/// Shadow-first one-to-one matching of an output segmentation.
///
/// Each output segment, largest first, is matched to the unmatched shadow
/// mask of maximum IoU if that IoU reaches 0.5. The pixels of matched masks
/// and unannotated pixels are then removed, and the remaining output
/// segments are matched to annotated segments greedily by descending IoU.
pub fn match_shadow_first(gt: &GroundTruth, out: &LabelMap) -> Result<MatchResult> {
    check_dims(gt, out)?;
    let mut excluded = vec![false; out.len()];
    let shadow_pairs = shadow_phase(gt, out, &mut excluded);
    let shadow_outs: Vec<u32> = shadow_pairs.iter().map(|m| m.out).collect();

    for (e, &g) in excluded.iter_mut().zip(gt.labels.as_slice()) {
        *e |= g == UNANNOTATED;
    }
    let mut gt_size: BTreeMap<u32, u64> = BTreeMap::new();
    let mut out_size: HashMap<u32, u64> = HashMap::new();
    let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
    for ((&g, &o), &skip) in gt.labels.as_slice().iter().zip(out.as_slice()).zip(&excluded) {
        if skip {
            continue;
        }
        *gt_size.entry(g).or_default() += 1;
        *out_size.entry(o).or_default() += 1;
        *inter.entry((g, o)).or_default() += 1;
    }

    let mut candidates: Vec<SegmentMatch> = inter
        .iter()
        .filter(|((_, o), _)| !shadow_outs.contains(o))
        .filter_map(|(&(g, o), &c)| {
            let v = iou_from_counts(c, gt_size[&g], out_size[&o]).ok()?;
            (v >= MATCH_THRESHOLD).then_some(SegmentMatch { gt: g, out: o, iou: v })
        })
        .collect();
    candidates.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.gt.cmp(&b.gt)).then(a.out.cmp(&b.out)));

    let ids = gt.segment_ids();
    let mut gt_done: BTreeMap<u32, bool> = ids.iter().map(|&g| (g, false)).collect();
    let mut out_done: HashMap<u32, bool> = HashMap::new();
    let mut pairs = Vec::new();
    for c in candidates {
        if gt_done[&c.gt] || out_done.get(&c.out).copied().unwrap_or(false) {
            continue;
        }
        gt_done.insert(c.gt, true);
        out_done.insert(c.out, true);
        pairs.push(c);
    }
    pairs.sort_by_key(|p| p.gt);
    let unmatched = gt_done.into_iter().filter(|(_, d)| !d).map(|(g, _)| g).collect();
    Ok(MatchResult {
        pairs,
        shadow_pairs,
        unmatched,
        gt_segments: ids.len(),
    })
}

/// Matches every image, possibly in parallel.
pub fn match_all(items: &[(GroundTruth, LabelMap)], exec: Execution) -> Vec<Result<MatchResult>> {
    par::map_slice(exec, items, |(gt, out)| match_shadow_first(gt, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    /// `(1/K)·Σ 2·min(IoU, 0.5)`, in `[0, 1]`
    pub normalised: f64,
    /// `Σ min(IoU, 0.5)`
    pub literal_sum: f64,
    pub gt_segments: usize,
    pub images: usize,
}

pub fn dataset_score(results: &[MatchResult]) -> Result<DatasetScore> {
    let k: usize = results.iter().map(|r| r.gt_segments).sum();
    if k == 0 {
        return Err(Error::NoGroundTruth);
    }
    let literal_sum: f64 = results.iter().map(MatchResult::literal_sum).sum();
    Ok(DatasetScore {
        normalised: 2.0 * literal_sum / k as f64,
        literal_sum,
        gt_segments: k,
        images: results.len(),
    })
}

/// Normalised dataset mIoU.
pub fn dataset_miou(results: &[MatchResult]) -> Result<f64> {
    dataset_score(results).map(|s| s.normalised)
}
