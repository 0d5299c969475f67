use serde::{Deserialize, Serialize};

use super::series::YearRange;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    Front,
    Interior,
    Back,
}

impl BlockMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlockMode::Front => "front",
            BlockMode::Interior => "interior",
            BlockMode::Back => "back",
        }
    }
}

/// Which blocks of a scheme to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFilter {
    All,
    /// Interior blocks only.
    Interpolated,
    /// Front and back blocks only.
    Extrapolated,
}

impl ModeFilter {
    pub fn keeps(&self, mode: BlockMode) -> bool {
        match self {
            ModeFilter::All => true,
            ModeFilter::Interpolated => mode == BlockMode::Interior,
            ModeFilter::Extrapolated => mode != BlockMode::Interior,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HoldoutBlock {
    pub years: YearRange,
    pub mode: BlockMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HoldoutScheme {
    pub blocks: Vec<HoldoutBlock>,
    pub calibration: YearRange,
}

impl HoldoutScheme {
    pub fn block_length(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.years.len())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Contiguous holdout blocks of `length` years every `stride` years.
///
/// The first block is tagged front, the last back, the rest interior; a lone
/// block is front. `mode_filter` is applied after tagging.
pub fn make_holdout_blocks(
    calibration: YearRange,
    length: usize,
    stride: usize,
    mode_filter: Option<ModeFilter>,
) -> Result<HoldoutScheme> {
    if length == 0 || length > calibration.len() {
        return Err(Error::Config(format!(
            "holdout length {length} does not fit calibration {calibration} ({} years)",
            calibration.len()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("holdout stride must be at least 1".into()));
    }
    let last_start = calibration.end - length as i32 + 1;
    let starts: Vec<i32> = (calibration.start..=last_start).step_by(stride).collect();
    let n = starts.len();
    let blocks = starts
        .into_iter()
        .enumerate()
        .map(|(k, s)| HoldoutBlock {
            years: YearRange {
                start: s,
                end: s + length as i32 - 1,
            },
            mode: if k == 0 {
                BlockMode::Front
            } else if k == n - 1 {
                BlockMode::Back
            } else {
                BlockMode::Interior
            },
        })
        .filter(|b| mode_filter.unwrap_or(ModeFilter::All).keeps(b.mode))
        .collect();
    Ok(HoldoutScheme {
        blocks,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cal() -> YearRange {
        YearRange::new(1850, 1998).unwrap()
    }

    #[test]
    fn thirty_year_blocks_stride_one() {
        let s = make_holdout_blocks(cal(), 30, 1, None).unwrap();
        assert_eq!(s.len(), 149 - 30 + 1);
        assert_eq!(s.blocks[0].years.start, 1850);
        assert_eq!(s.blocks.last().unwrap().years.start, 1969);
        assert_eq!(s.blocks[0].mode, BlockMode::Front);
        assert_eq!(s.blocks[60].mode, BlockMode::Interior);
        assert_eq!(s.blocks.last().unwrap().mode, BlockMode::Back);
    }

    #[test]
    fn sixty_year_alternative() {
        let s = make_holdout_blocks(cal(), 60, 1, None).unwrap();
        assert_eq!(s.len(), 90);
        assert!(s.blocks.iter().all(|b| b.years.len() == 60));
        assert!(s.blocks.iter().all(|b| cal().contains_range(&b.years)));
    }

    #[test]
    fn full_length_is_single_front_block() {
        let s = make_holdout_blocks(cal(), 149, 1, None).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.blocks[0].mode, BlockMode::Front);
    }

    #[test]
    fn too_long_is_config_error() {
        assert!(matches!(
            make_holdout_blocks(cal(), 150, 1, None),
            Err(Error::Config(_))
        ));
        assert!(make_holdout_blocks(cal(), 30, 0, None).is_err());
    }

    #[test]
    fn filters_select_modes() {
        let s = make_holdout_blocks(cal(), 30, 1, Some(ModeFilter::Extrapolated)).unwrap();
        assert_eq!(s.len(), 2);
        let s = make_holdout_blocks(cal(), 30, 1, Some(ModeFilter::Interpolated)).unwrap();
        assert_eq!(s.len(), 118);
        assert!(s.blocks.iter().all(|b| b.mode == BlockMode::Interior));
    }

    proptest! {
        #[test]
        fn stride_equal_length_partitions(len in 1usize..40, k in 1usize..8, start in 0i32..3000) {
            let total = len * k;
            let range = YearRange::new(start, start + total as i32 - 1).unwrap();
            let s = make_holdout_blocks(range, len, len, None).unwrap();
            prop_assert_eq!(s.len(), k);
            let mut covered: Vec<i32> = s.blocks.iter().flat_map(|b| b.years.years()).collect();
            covered.sort();
            prop_assert_eq!(covered, range.years().collect::<Vec<_>>());
        }
    }
}
