//! Block distribution of the grid's leading dimension and the slice
//! transfers needed to move from one distribution to another.

use crate::error::{Error, Result};

/// Number of distributed arrays moved on every resize (the advected field
/// and the three velocity components).
pub const REDISTRIBUTED_ARRAYS: u64 = 4;

/// Half-open range `[ini, end)` of slices owned by one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub ini: u64,
    pub end: u64,
    pub n: u64,
}

/// Splits `n_dim` slices over `size` ranks so block lengths differ by at
/// most one; the first `n_dim % size` ranks hold the extra slice.
pub fn block_distribution(n_dim: u64, size: u64, rank: u64) -> Result<Block> {
    if size == 0 || rank >= size {
        return Err(Error::InvalidRank { rank, size });
    }
    if n_dim < size {
        return Err(Error::UndersizedDimension { n_dim, size });
    }
    let exp_qty = n_dim / size;
    let rem = n_dim % size;
    let (ini, end) = if rank < rem {
        let ini = rank * exp_qty + rank;
        (ini, ini + exp_qty + 1)
    } else {
        let ini = rank * exp_qty + rem;
        (ini, ini + exp_qty)
    };
    Ok(Block {
        ini,
        end,
        n: end - ini,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transfer {
    pub source: u64,
    pub target: u64,
    pub slices: u64,
}

/// Slice transfers between a source and a target block distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessagePlan {
    pub n_dim: u64,
    pub ns: u64,
    pub nt: u64,
    pub slice_volume: u64,
    pub arrays: u64,
    /// Non-empty source/target overlaps, ordered by target then source.
    pub transfers: Vec<Transfer>,
}

impl MessagePlan {
    /// Slices per array, kept or moved. Always `n_dim`.
    pub fn total_slices(&self) -> u64 {
        self.transfers.iter().map(|t| t.slices).sum()
    }

    /// Slices per array whose owning rank index changes.
    pub fn moved_slices(&self) -> u64 {
        self.transfers
            .iter()
            .filter(|t| t.source != t.target)
            .map(|t| t.slices)
            .sum()
    }

    /// Values sent over the network across all redistributed arrays.
    pub fn moved_volume(&self) -> f64 {
        self.moved_slices() as f64 * self.slice_volume as f64 * self.arrays as f64
    }

    pub fn incoming(&self, target: u64) -> impl Iterator<Item = &Transfer> {
        self.transfers.iter().filter(move |t| t.target == target)
    }
}

/// Intersects every target block with the source blocks it overlaps.
pub fn redistribution_plan(n_dim: u64, slice_volume: u64, ns: u64, nt: u64) -> Result<MessagePlan> {
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidRank { rank: 0, size: 0 });
    }
    let mut transfers = Vec::with_capacity((ns + nt) as usize);
    let mut source = 0;
    let mut src_block = block_distribution(n_dim, ns, source)?;
    for target in 0..nt {
        let tgt_block = block_distribution(n_dim, nt, target)?;
        loop {
            let lo = src_block.ini.max(tgt_block.ini);
            let hi = src_block.end.min(tgt_block.end);
            if hi > lo {
                transfers.push(Transfer {
                    source,
                    target,
                    slices: hi - lo,
                });
            }
            if src_block.end <= tgt_block.end && source + 1 < ns {
                source += 1;
                src_block = block_distribution(n_dim, ns, source)?;
                if src_block.ini >= tgt_block.end {
                    break;
                }
            } else {
                break;
            }
        }
    }
    Ok(MessagePlan {
        n_dim,
        ns,
        nt,
        slice_volume,
        arrays: REDISTRIBUTED_ARRAYS,
        transfers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn owners(n_dim: u64, size: u64) -> Vec<u64> {
        // Reference ownership: hand each slice out in turn, larger blocks first.
        let base = n_dim / size;
        let rem = n_dim % size;
        let mut out = Vec::with_capacity(n_dim as usize);
        for r in 0..size {
            let len = base + u64::from(r < rem);
            out.extend(std::iter::repeat_n(r, len as usize));
        }
        out
    }

    #[test]
    fn reference_blocks() {
        assert_eq!(
            block_distribution(8192, 5, 0).unwrap(),
            Block {
                ini: 0,
                end: 1639,
                n: 1639
            }
        );
        assert_eq!(
            block_distribution(8192, 5, 2).unwrap(),
            Block {
                ini: 3278,
                end: 4916,
                n: 1638
            }
        );
        assert_eq!(
            block_distribution(4, 4, 3).unwrap(),
            Block {
                ini: 3,
                end: 4,
                n: 1
            }
        );
    }

    #[test]
    fn distribution_errors() {
        assert!(matches!(
            block_distribution(8, 4, 4),
            Err(Error::InvalidRank { .. })
        ));
        assert!(matches!(
            block_distribution(8, 0, 0),
            Err(Error::InvalidRank { .. })
        ));
        assert!(matches!(
            block_distribution(3, 4, 0),
            Err(Error::UndersizedDimension { .. })
        ));
        assert!(redistribution_plan(3, 1, 4, 2).is_err());
    }

    #[test]
    fn split_one_into_two() {
        let plan = redistribution_plan(10, 7, 1, 2).unwrap();
        assert_eq!(
            plan.transfers,
            vec![
                Transfer {
                    source: 0,
                    target: 0,
                    slices: 5
                },
                Transfer {
                    source: 0,
                    target: 1,
                    slices: 5
                },
            ]
        );
        assert_eq!(plan.moved_slices(), 5);
        assert_eq!(plan.moved_volume(), 5.0 * 7.0 * 4.0);
    }

    #[test]
    fn identity_plan_moves_nothing() {
        let plan = redistribution_plan(8192, 3, 448, 448).unwrap();
        assert!(plan.transfers.iter().all(|t| t.source == t.target));
        assert_eq!(plan.total_slices(), 8192);
        assert_eq!(plan.moved_slices(), 0);
    }

    #[test]
    fn five_to_four_covers_every_slice_once() {
        let plan = redistribution_plan(8192, 1, 5, 4).unwrap();
        assert_eq!(plan.total_slices(), 8192);
        let src = owners(8192, 5);
        let tgt = owners(8192, 4);
        let mut expected = std::collections::BTreeMap::new();
        for i in 0..8192 {
            *expected.entry((src[i], tgt[i])).or_insert(0u64) += 1;
        }
        let got: std::collections::BTreeMap<_, _> = plan
            .transfers
            .iter()
            .map(|t| ((t.source, t.target), t.slices))
            .collect();
        assert_eq!(got, expected);
    }

    proptest! {
        #[test]
        fn blocks_partition_dimension(size in 1u64..300, extra in 0u64..2000) {
            let n_dim = size + extra;
            let reference = owners(n_dim, size);
            let mut lens = Vec::new();
            for rank in 0..size {
                let b = block_distribution(n_dim, size, rank).unwrap();
                prop_assert_eq!(b.n, b.end - b.ini);
                for i in b.ini..b.end {
                    prop_assert_eq!(reference[i as usize], rank);
                }
                lens.push(b.n);
            }
            prop_assert_eq!(lens.iter().sum::<u64>(), n_dim);
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        }

        #[test]
        fn plan_matches_ownership_table(ns in 1u64..64, nt in 1u64..64, extra in 0u64..500) {
            let n_dim = ns.max(nt) + extra;
            let plan = redistribution_plan(n_dim, 1, ns, nt).unwrap();
            let src = owners(n_dim, ns);
            let tgt = owners(n_dim, nt);
            let mut expected = std::collections::BTreeMap::new();
            for i in 0..n_dim as usize {
                *expected.entry((src[i], tgt[i])).or_insert(0u64) += 1;
            }
            let got: std::collections::BTreeMap<_, _> = plan
                .transfers
                .iter()
                .map(|t| ((t.source, t.target), t.slices))
                .collect();
            prop_assert_eq!(got.len(), plan.transfers.len());
            prop_assert_eq!(got, expected);
        }
    }
}
