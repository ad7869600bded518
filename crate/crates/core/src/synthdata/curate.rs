//! Split curation: partitions each class's source pool across the four
//! splits and fixes every split's member count. Augmented variants always
//! inherit their source's split, so no source leaks across splits.

use super::{DatasetSpec, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use rand::seq::SliceRandom;
use std::ops::Range;

/// Source-pool slice and member count for one (class, split) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellPlan {
    /// Indices into the class's source pool reserved for this split.
    pub source_range: Range<usize>,
    /// Number of images the split holds for this class (originals first,
    /// then augmentations cycling over the sources).
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct SplitPlan {
    /// Per class: plans for train, val, test1, test2 in that order.
    pub cells: Vec<[CellPlan; 4]>,
}

impl SplitPlan {
    /// Pool layout per class: `[train | val | test1 | test2]`.
    ///
    /// test2 takes its configured count of originals from the end; a
    /// quarter of the remainder seeds test1; the rest splits into train
    /// and val sources by `val_fraction`.
    pub fn allocate(spec: &DatasetSpec) -> Result<Self> {
        let mut cells = Vec::with_capacity(spec.num_classes());
        for class in 0..spec.num_classes() {
            let pool = spec.originals_per_class;
            let t2 = spec.test2_per_class[class];
            if t2 + 4 > pool {
                return Err(Error::Config(format!(
                    "originals_per_class: {} leaves too few sources for class {} \
                     (test2 needs {}, plus at least one source per other split)",
                    pool, spec.classes[class], t2
                )));
            }
            let remainder = pool - t2;
            let t1_src = (remainder.div_ceil(4)).max(1);
            let trainval_src = remainder - t1_src;
            let val_src = ((trainval_src as f64 * spec.val_fraction).round() as usize)
                .clamp(1, trainval_src - 1);
            let train_src = trainval_src - val_src;

            let val_count = (spec.train_per_class as f64 * spec.val_fraction).round() as usize;
            let train_count = spec.train_per_class - val_count;

            let train_end = train_src;
            let val_end = train_end + val_src;
            let t1_end = val_end + t1_src;
            cells.push([
                CellPlan { source_range: 0..train_end, count: train_count },
                CellPlan { source_range: train_end..val_end, count: val_count },
                CellPlan { source_range: val_end..t1_end, count: spec.test1_per_class },
                CellPlan { source_range: t1_end..pool, count: t2 },
            ]);
        }
        Ok(SplitPlan { cells })
    }

    pub fn class_split(&self, class: usize, split: &str) -> &CellPlan {
        let idx = super::SPLITS
            .iter()
            .position(|&s| s == split)
            .expect("known split");
        &self.cells[class][idx]
    }

    pub fn split_total(&self, split: &str) -> usize {
        (0..self.cells.len())
            .map(|c| self.class_split(c, split).count)
            .sum()
    }
}

/// Deterministically keeps `keep` members of `class`, dropping the rest.
/// Other classes pass through untouched. The paper-style imbalance knob.
pub fn downsample_class(
    samples: &[LabeledSample],
    class: usize,
    keep: usize,
    seed: u64,
) -> Vec<LabeledSample> {
    let mut class_members: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label == class)
        .map(|(i, _)| i)
        .collect();
    let mut rng = derive_rng(seed, "downsample");
    class_members.shuffle(&mut rng);
    let kept: std::collections::HashSet<usize> =
        class_members.into_iter().take(keep).collect();
    samples
        .iter()
        .enumerate()
        .filter(|(i, s)| s.label != class || kept.contains(i))
        .map(|(_, s)| s.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_spec_matches_hand_computed_table() {
        // 8 originals per class, test2 = 2: remainder 6, test1 sources
        // ceil(6/4) = 2, trainval 4 -> val round(4 * 0.2) = 1, train 3.
        // Counts: train 8, val 2, test1 4, test2 2.
        let spec = DatasetSpec {
            originals_per_class: 8,
            train_per_class: 10,
            test1_per_class: 4,
            test2_per_class: vec![2, 2, 2, 2],
            val_fraction: 0.2,
            ..Default::default()
        };
        let plan = SplitPlan::allocate(&spec).unwrap();
        let cells = &plan.cells[0];
        assert_eq!(cells[0], CellPlan { source_range: 0..3, count: 8 });
        assert_eq!(cells[1], CellPlan { source_range: 3..4, count: 2 });
        assert_eq!(cells[2], CellPlan { source_range: 4..6, count: 4 });
        assert_eq!(cells[3], CellPlan { source_range: 6..8, count: 2 });
    }

    #[test]
    fn default_spec_yields_the_documented_totals() {
        // train_per_class 500 at val 0.2 over 4 classes: 1600 train and
        // 400 val images.
        let plan = SplitPlan::allocate(&DatasetSpec::default()).unwrap();
        assert_eq!(plan.split_total("train"), 1600);
        assert_eq!(plan.split_total("val"), 400);
        assert_eq!(plan.split_total("test1"), 480);
        assert_eq!(plan.split_total("test2"), 6 + 9 + 5 + 8);
    }

    #[test]
    fn source_pools_never_overlap() {
        let plan = SplitPlan::allocate(&DatasetSpec::default()).unwrap();
        for cells in &plan.cells {
            for i in 0..4 {
                for j in i + 1..4 {
                    let a = &cells[i].source_range;
                    let b = &cells[j].source_range;
                    assert!(a.end <= b.start || b.end <= a.start);
                }
            }
        }
    }

    #[test]
    fn too_small_pool_is_a_config_error() {
        let spec = DatasetSpec {
            originals_per_class: 8,
            test2_per_class: vec![6, 6, 6, 6],
            ..Default::default()
        };
        match SplitPlan::allocate(&spec) {
            Err(Error::Config(msg)) => assert!(msg.contains("originals_per_class")),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
