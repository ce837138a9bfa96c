use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint contiguous index ranges covering `[0, total_dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct BlockPartition {
    total_dim: usize,
    blocks: Vec<Range<usize>>,
}

impl BlockPartition {
    /// `num_blocks` contiguous blocks of equal size; when `total_dim` is not
    /// divisible the leading blocks take one extra coordinate.
    pub fn contiguous(total_dim: usize, num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 || total_dim == 0 {
            return Err(Error::InvalidPartition(
                "need at least one block and one coordinate".into(),
            ));
        }
        if num_blocks > total_dim {
            return Err(Error::InvalidPartition(format!(
                "{num_blocks} blocks exceed dimension {total_dim}"
            )));
        }
        let base = total_dim / num_blocks;
        let extra = total_dim % num_blocks;
        let mut start = 0;
        let blocks = (0..num_blocks)
            .map(|b| {
                let len = base + usize::from(b < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Self { total_dim, blocks })
    }

    /// Explicit `(start, end)` boundaries in increasing order.
    pub fn from_boundaries(bounds: &[(usize, usize)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        let mut expected = 0;
        let mut blocks = Vec::with_capacity(bounds.len());
        for (i, &(s, e)) in bounds.iter().enumerate() {
            if s != expected {
                return Err(Error::InvalidPartition(format!(
                    "block {i} starts at {s}, expected {expected}"
                )));
            }
            if e <= s {
                return Err(Error::InvalidPartition(format!("block {i} is empty")));
            }
            blocks.push(s..e);
            expected = e;
        }
        Ok(Self {
            total_dim: expected,
            blocks,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> Result<Range<usize>> {
        self.blocks.get(i).cloned().ok_or(Error::BlockOutOfRange {
            index: i,
            num_blocks: self.blocks.len(),
        })
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Block that owns coordinate `j`.
    pub fn block_of(&self, j: usize) -> Option<usize> {
        if j >= self.total_dim {
            return None;
        }
        Some(self.blocks.partition_point(|r| r.end <= j))
    }
}

impl TryFrom<Vec<(usize, usize)>> for BlockPartition {
    type Error = Error;

    fn try_from(v: Vec<(usize, usize)>) -> Result<Self> {
        Self::from_boundaries(&v)
    }
}

impl From<BlockPartition> for Vec<(usize, usize)> {
    fn from(p: BlockPartition) -> Self {
        p.blocks.iter().map(|r| (r.start, r.end)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contiguous_equal_blocks() {
        let p = BlockPartition::contiguous(64, 4).unwrap();
        assert_eq!(p.num_blocks(), 4);
        assert_eq!(p.block(3).unwrap(), 48..64);
    }

    #[test]
    fn uneven_split_front_loads() {
        let p = BlockPartition::contiguous(5, 2).unwrap();
        assert_eq!(p.blocks(), &[0..3, 3..5]);
        assert_eq!(p.block_of(2), Some(0));
        assert_eq!(p.block_of(3), Some(1));
        assert_eq!(p.block_of(5), None);
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        assert!(BlockPartition::from_boundaries(&[(0, 2), (3, 4)]).is_err());
        assert!(BlockPartition::from_boundaries(&[(0, 2), (1, 4)]).is_err());
        assert!(BlockPartition::from_boundaries(&[(0, 0)]).is_err());
        assert!(BlockPartition::contiguous(3, 0).is_err());
        assert!(BlockPartition::contiguous(3, 4).is_err());
    }

    proptest! {
        #[test]
        fn contiguous_covers_every_coordinate(dim in 1usize..200, n in 1usize..50) {
            prop_assume!(n <= dim);
            let p = BlockPartition::contiguous(dim, n).unwrap();
            let mut covered = 0;
            for (b, r) in p.blocks().iter().enumerate() {
                prop_assert_eq!(r.start, covered);
                for j in r.clone() {
                    prop_assert_eq!(p.block_of(j), Some(b));
                }
                covered = r.end;
            }
            prop_assert_eq!(covered, dim);
            let sizes: Vec<_> = p.blocks().iter().map(|r| r.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
