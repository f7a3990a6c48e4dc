//! Exact top-k inner-product search over a flat vector block.
//!
//! Retrieval collections here are small enough (hundreds of thousands of
//! passages) that exhaustive scoring is both fast and exactly reproducible,
//! so there is no approximate index: every query scores every row. The dot
//! product accumulates strictly left to right in `f32`, giving bit-identical
//! scores on every run and platform with the same inputs.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;

use core::cmp::Ordering;

/// Inner product with strictly sequential accumulation.
///
/// Written as a plain fold on purpose: reassociating the sum (e.g. multiple
/// accumulators) would change low-order bits and break exact reproducibility
/// against independently written scorers.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Errors from [`top_k`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopKError {
    /// The vector block length is not a multiple of `dims`.
    RaggedBlock { len: usize, dims: usize },
    /// The query length differs from `dims`.
    QueryDims { query_len: usize, dims: usize },
}

impl core::fmt::Display for TopKError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TopKError::RaggedBlock { len, dims } => write!(
                f,
                "vector block of {len} floats is not a whole number of {dims}-dim rows"
            ),
            TopKError::QueryDims { query_len, dims } => {
                write!(f, "query has {query_len} dims, index has {dims}")
            }
        }
    }
}

impl core::error::Error for TopKError {}

/// Heap entry ordered so the weakest candidate sits on top of a max-heap:
/// lower score is "greater", and at equal score the larger row index is
/// "greater" (row order stands in for any caller-side tie-break key that
/// ascends with row index).
#[derive(PartialEq)]
struct Weakest(f32, usize);

impl Eq for Weakest {}

impl Ord for Weakest {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| self.1.cmp(&other.1))
    }
}

impl PartialOrd for Weakest {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Score every `dims`-wide row of `block` against `query` and return the top
/// `k` as `(row_index, score)`, sorted by score descending with ties broken
/// by ascending row index. Returns fewer than `k` entries when the block has
/// fewer rows. `k == 0` yields an empty result.
pub fn top_k(
    block: &[f32],
    dims: usize,
    query: &[f32],
    k: usize,
) -> Result<Vec<(usize, f32)>, TopKError> {
    if dims == 0 || !block.len().is_multiple_of(dims) {
        return Err(TopKError::RaggedBlock {
            len: block.len(),
            dims: dims.max(1),
        });
    }
    if query.len() != dims {
        return Err(TopKError::QueryDims {
            query_len: query.len(),
            dims,
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }

    let mut heap: BinaryHeap<Weakest> = BinaryHeap::with_capacity(k + 1);
    for (row, chunk) in block.chunks_exact(dims).enumerate() {
        let score = dot(chunk, query);
        if heap.len() < k {
            heap.push(Weakest(score, row));
        } else if let Some(weakest) = heap.peek() {
            // Strictly better than the current weakest: equal score loses
            // because the incoming row index is always larger.
            if score > weakest.0 {
                heap.pop();
                heap.push(Weakest(score, row));
            }
        }
    }

    let mut out: Vec<(usize, f32)> = heap.into_iter().map(|Weakest(s, i)| (i, s)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: score everything, sort, truncate.
    fn oracle(block: &[f32], dims: usize, query: &[f32], k: usize) -> Vec<(usize, f32)> {
        let mut scored: Vec<(usize, f32)> = block
            .chunks_exact(dims)
            .enumerate()
            .map(|(i, row)| {
                let mut s = 0.0f32;
                for d in 0..dims {
                    s += row[d] * query[d];
                }
                (i, s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    #[test]
    fn picks_highest_inner_products_in_order() {
        // Orthogonal unit rows: scores equal the matching query component.
        let block = [
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ];
        let query = [0.2, 0.9, 0.5];
        let got = top_k(&block, 3, &query, 2).unwrap();
        assert_eq!(got, vec![(1, 0.9), (2, 0.5)]);
    }

    #[test]
    fn equal_scores_break_ties_by_row_index() {
        let block = [
            1.0, 0.0, //
            1.0, 0.0, //
            1.0, 0.0, //
            0.0, 1.0,
        ];
        let query = [1.0, 0.0];
        let got = top_k(&block, 2, &query, 2).unwrap();
        assert_eq!(got, vec![(0, 1.0), (1, 1.0)]);
    }

    #[test]
    fn k_larger_than_row_count_returns_everything() {
        let block = [1.0f32, 2.0, 3.0];
        let got = top_k(&block, 1, &[1.0], 10).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got[0], (2, 3.0));
    }

    #[test]
    fn zero_k_and_empty_block_are_fine() {
        assert!(top_k(&[1.0, 2.0], 2, &[1.0, 1.0], 0).unwrap().is_empty());
        assert!(top_k(&[], 4, &[0.0; 4], 5).unwrap().is_empty());
    }

    #[test]
    fn shape_errors_are_reported() {
        assert!(matches!(
            top_k(&[1.0, 2.0, 3.0], 2, &[1.0, 1.0], 1),
            Err(TopKError::RaggedBlock { .. })
        ));
        assert!(matches!(
            top_k(&[1.0, 2.0], 2, &[1.0], 1),
            Err(TopKError::QueryDims { .. })
        ));
        assert!(matches!(
            top_k(&[1.0], 0, &[], 1),
            Err(TopKError::RaggedBlock { .. })
        ));
    }

    /// Random shapes with small integer coordinates, which force plenty of
    /// exact score ties.
    fn trial_strat() -> impl Strategy<Value = (usize, Vec<f32>, Vec<f32>, usize)> {
        (1usize..40, 1usize..8, 1usize..70).prop_flat_map(|(rows, dims, k)| {
            let coord = (-4i8..=4).prop_map(f32::from);
            (
                Just(dims),
                prop::collection::vec(coord.clone(), rows * dims),
                prop::collection::vec(coord, dims),
                Just(k),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle((dims, block, query, k) in trial_strat()) {
            let got = top_k(&block, dims, &query, k).unwrap();
            let want = oracle(&block, dims, &query, k);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn scores_descend_and_ties_ascend_by_row(
            block in prop::collection::vec(-1.0f32..1.0, 24),
            k in 1usize..12,
        ) {
            let query = [0.5f32, -0.25, 1.0];
            let got = top_k(&block, 3, &query, k).unwrap();
            for pair in got.windows(2) {
                let (i, a) = pair[0];
                let (j, b) = pair[1];
                prop_assert!(a > b || (a == b && i < j));
            }
        }
    }
}
