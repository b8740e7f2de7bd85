use serde::{Deserialize, Serialize};

use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitLayout {
    /// Train on weeks 1-24, validate on 25-32, test on the rest.
    PaperHoldout,
    /// `n` contiguous blocks; the last one is held out.
    Sequential(usize),
}

/// Week boundaries (1-based, inclusive ends) of a train/validation/test plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_end_week: usize,
    pub valid_end_week: usize,
    pub test_end_week: usize,
    pub n_sequential_splits: usize,
    /// Half-open `(start, end]` week ranges of each block.
    pub blocks: Vec<(usize, usize)>,
}

impl SplitPlan {
    /// Index of the block containing `week`.
    pub fn block_of(&self, week: usize) -> Option<usize> {
        self.blocks.iter().position(|&(lo, hi)| week > lo && week <= hi)
    }
}

pub const HOLDOUT_TRAIN_END: usize = 24;
pub const HOLDOUT_VALID_END: usize = 32;
pub const HOLDOUT_MIN_WEEKS: usize = 45;

pub fn make_split_plan(weeks: usize, layout: SplitLayout) -> Result<SplitPlan, PreprocessError> {
    match layout {
        SplitLayout::PaperHoldout => {
            if weeks < HOLDOUT_MIN_WEEKS {
                return Err(PreprocessError::Config(format!(
                    "holdout layout needs at least {HOLDOUT_MIN_WEEKS} weeks, got {weeks}"
                )));
            }
            Ok(SplitPlan {
                train_end_week: HOLDOUT_TRAIN_END,
                valid_end_week: HOLDOUT_VALID_END,
                test_end_week: weeks,
                n_sequential_splits: 1,
                blocks: vec![(0, HOLDOUT_TRAIN_END), (HOLDOUT_TRAIN_END, HOLDOUT_VALID_END), (HOLDOUT_VALID_END, weeks)],
            })
        }
        SplitLayout::Sequential(n) => {
            if n < 2 || weeks < n {
                return Err(PreprocessError::Config(format!(
                    "cannot cut {weeks} weeks into {n} sequential blocks"
                )));
            }
            let bounds: Vec<usize> = (0..=n).map(|i| i * weeks / n).collect();
            Ok(SplitPlan {
                train_end_week: bounds[n - 1],
                valid_end_week: weeks,
                test_end_week: weeks,
                n_sequential_splits: n,
                blocks: bounds.windows(2).map(|b| (b[0], b[1])).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_defaults() {
        let plan = make_split_plan(45, SplitLayout::PaperHoldout).unwrap();
        assert_eq!((plan.train_end_week, plan.valid_end_week, plan.test_end_week), (24, 32, 45));
    }

    #[test]
    fn sequential_equal_blocks() {
        let plan = make_split_plan(48, SplitLayout::Sequential(6)).unwrap();
        assert_eq!(plan.blocks.len(), 6);
        assert!(plan.blocks.iter().all(|(lo, hi)| hi - lo == 8));
        assert_eq!(plan.train_end_week, 40);
        assert_eq!(plan.block_of(41), Some(5));
        assert_eq!(plan.block_of(40), Some(4));
        assert_eq!(plan.block_of(49), None);
    }

    #[test]
    fn sequential_uneven_blocks_cover_everything() {
        let plan = make_split_plan(33, SplitLayout::Sequential(6)).unwrap();
        assert_eq!(plan.blocks.first().unwrap().0, 0);
        assert_eq!(plan.blocks.last().unwrap().1, 33);
        assert!(plan.train_end_week < plan.valid_end_week);
    }

    #[test]
    fn too_short() {
        assert!(make_split_plan(5, SplitLayout::PaperHoldout).is_err());
        assert!(make_split_plan(5, SplitLayout::Sequential(6)).is_err());
        assert!(make_split_plan(5, SplitLayout::Sequential(1)).is_err());
    }
}
