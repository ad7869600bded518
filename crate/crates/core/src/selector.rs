//! Weakly supervised selector.
//!
//! Every feature-map pixel is treated as a standalone feature vector. A
//! per-block linear head classifies each pixel; the softmax confidence of
//! the winning class ranks the pixels, and the top k survive. Only
//! image-level labels ever supervise this, hence "weakly" supervised.

use crate::backbone::NUM_BLOCKS;
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::numerics::Tensor;

/// Per-pixel class logits for one block, kept in both layouts.
pub struct ClassScoreMap {
    /// Logits as `[num_classes, H, W]`.
    pub scores: Tensor,
    /// The same logits as `[H*W, num_classes]` rows; shares the graph.
    pub rows: Tensor,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
}

/// Ranking of all pixels of one map by descending confidence.
#[derive(Debug, Clone)]
pub struct Ranking {
    /// Permutation of `0..n`, most confident first; ties break on the
    /// lower flat index.
    pub sorted_indices: Vec<usize>,
    /// First `k` entries of `sorted_indices`.
    pub chosen: Vec<usize>,
    /// Confidence of each chosen pixel, descending.
    pub confidences: Vec<f32>,
}

/// Ranking plus the gathered feature vectors of the chosen pixels.
pub struct SelectionResult {
    pub sorted_indices: Vec<usize>,
    pub chosen: Vec<usize>,
    pub confidences: Vec<f32>,
    /// `[k, C]` rows, differentiable back to the feature map.
    pub points: Tensor,
}

/// How many pixels each block keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSchedule {
    pub per_block: [usize; NUM_BLOCKS],
}

/// Desk-scale default, the reference schedule scaled by 1/64 with its
/// 64:16:4:1 ratio preserved.
pub const DESK_SCHEDULE: [usize; NUM_BLOCKS] = [32, 16, 8, 4];
/// Full-scale reference schedule.
pub const FULL_SCHEDULE: [usize; NUM_BLOCKS] = [2048, 512, 128, 32];

impl Default for SelectionSchedule {
    fn default() -> Self {
        SelectionSchedule {
            per_block: DESK_SCHEDULE,
        }
    }
}

impl SelectionSchedule {
    /// Checks every k against its block's pixel count.
    pub fn validate(&self, extents: &[usize; NUM_BLOCKS]) -> Result<()> {
        for (b, (&k, &extent)) in self.per_block.iter().zip(extents).enumerate() {
            let n = extent * extent;
            if k == 0 || k > n {
                return Err(Error::Config(format!(
                    "selector.selections: block {} wants k={} but has {} pixels",
                    b + 1,
                    k,
                    n
                )));
            }
        }
        Ok(())
    }
}

/// Feature map `[C,H,W]` as pixel-major rows `[H*W, C]`.
pub fn pixel_feature_rows(fmap: &Tensor) -> Result<Tensor> {
    let s = fmap.shape();
    if s.len() != 3 {
        return Err(Error::dim("pixel_feature_rows", &s, &s));
    }
    fmap.reshape(&[s[0], s[1] * s[2]])?.transpose2d()
}

/// Applies a per-pixel linear classifier to every position of the map.
pub fn score_pixels(fmap: &Tensor, head: &Linear) -> Result<ClassScoreMap> {
    let s = fmap.shape();
    if s.len() != 3 || head.in_width() != s[0] {
        return Err(Error::dim("score_pixels", &[head.in_width()], &s));
    }
    let (h, w) = (s[1], s[2]);
    let rows = head.forward(&pixel_feature_rows(fmap)?)?;
    let num_classes = head.out_width();
    let scores = rows.transpose2d()?.reshape(&[num_classes, h, w])?;
    Ok(ClassScoreMap {
        scores,
        rows,
        num_classes,
        height: h,
        width: w,
    })
}

/// Maximum softmax probability per pixel, shape `[H,W]`.
///
/// Selection is a discrete choice, so the confidences are computed outside
/// the gradient graph.
pub fn pixel_confidence(scores: &ClassScoreMap) -> Result<Tensor> {
    let probs = scores.rows.detach().softmax()?;
    let p = probs.to_vec();
    let c = scores.num_classes;
    let conf: Vec<f32> = p
        .chunks(c)
        .map(|row| row.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v)))
        .collect();
    Tensor::from_vec(&[scores.height, scores.width], conf)
}

/// Sorts pixels by confidence (descending, ties on ascending flat index)
/// and keeps the first `k`.
pub fn rank_and_select(conf: &Tensor, k: usize) -> Result<Ranking> {
    let values = conf.to_vec();
    let n = values.len();
    if k == 0 || k > n {
        return Err(Error::Contract(format!(
            "rank_and_select: k={k} out of range for {n} pixels"
        )));
    }
    let mut sorted_indices: Vec<usize> = (0..n).collect();
    sorted_indices.sort_by(|&a, &b| {
        values[b]
            .total_cmp(&values[a])
            .then_with(|| a.cmp(&b))
    });
    let chosen = sorted_indices[..k].to_vec();
    let confidences = chosen.iter().map(|&i| values[i]).collect();
    Ok(Ranking {
        sorted_indices,
        chosen,
        confidences,
    })
}

/// Gathers the chosen pixels' feature vectors as `[k, C]` rows.
pub fn gather_points(fmap: &Tensor, chosen: &[usize]) -> Result<Tensor> {
    pixel_feature_rows(fmap)?.gather_rows(chosen)
}

/// Full selection for one block: score, rank, gather.
pub fn select_block(fmap: &Tensor, head: &Linear, k: usize) -> Result<(SelectionResult, ClassScoreMap)> {
    let scores = score_pixels(fmap, head)?;
    let conf = pixel_confidence(&scores)?;
    let ranking = rank_and_select(&conf, k)?;
    let points = gather_points(fmap, &ranking.chosen)?;
    Ok((
        SelectionResult {
            sorted_indices: ranking.sorted_indices,
            chosen: ranking.chosen,
            confidences: ranking.confidences,
            points,
        },
        scores,
    ))
}

/// Selection with the ranking frozen externally (for gradient checks, where
/// the piecewise-constant selection must not move under perturbation).
pub fn select_block_frozen(
    fmap: &Tensor,
    head: &Linear,
    chosen: &[usize],
) -> Result<(Tensor, ClassScoreMap)> {
    let scores = score_pixels(fmap, head)?;
    let points = gather_points(fmap, chosen)?;
    Ok((points, scores))
}
