//! Truncated SVD split of a two-site block back into two cores.

use nalgebra::DMatrix;

use crate::error::{check_dim, Result};
use crate::linalg::{kept_rank, svd_sorted};
use crate::tensor::Core;

/// Singular values below this fraction of the largest are always dropped.
pub const SPLIT_CUTOFF: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Left core becomes left-isometric, the weights move right.
    Right,
    /// Right core becomes right-isometric, the weights move left.
    Left,
}

#[derive(Clone, Debug)]
pub struct SplitResult {
    pub left: Core,
    pub right: Core,
    pub kept: usize,
    /// Sum of squared discarded singular values.
    pub discarded: f64,
}

/// Splits the block `B[a, i, j, b]` (shape `left × n × n × right`, row-major)
/// keeping at most `max_bond` singular values.
pub fn truncate_split(
    block: &[f64],
    left: usize,
    n: usize,
    right: usize,
    max_bond: usize,
    direction: Direction,
) -> Result<SplitResult> {
    check_dim("two-site block", left * n * n * right, block.len())?;
    let theta = DMatrix::from_row_slice(left * n, n * right, block);
    let svd = svd_sorted(&theta)?;
    let kept = kept_rank(&svd.s, SPLIT_CUTOFF, max_bond.max(1));
    let discarded: f64 = svd.s[kept..].iter().map(|s| s * s).sum();
    let mut u = svd.u.columns(0, kept).into_owned();
    let mut vt = svd.vt.rows(0, kept).into_owned();
    let s = &svd.s[..kept];
    match direction {
        Direction::Right => {
            for (k, &sk) in s.iter().enumerate() {
                vt.row_mut(k).scale_mut(sk);
            }
        }
        Direction::Left => {
            for (k, &sk) in s.iter().enumerate() {
                u.column_mut(k).scale_mut(sk);
            }
        }
    }
    Ok(SplitResult {
        left: Core::from_left_matrix(&u, left, n),
        right: Core::from_right_matrix(&vt, n, right),
        kept,
        discarded,
    })
}

/// `B[a, i, j, b] = Σ_c A[a, i, c]·C[c, j, b]`.
pub fn merge_cores(a: &Core, c: &Core) -> Vec<f64> {
    let m = a.left_matrix() * c.right_matrix();
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;
    use crate::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_block(l: usize, n: usize, r: usize, seed: u64) -> Vec<f64> {
        let mut g = rng(seed);
        (0..l * n * n * r).map(|_| g.random_range(-1.0..1.0)).collect()
    }

    fn residual(block: &[f64], s: &SplitResult) -> f64 {
        merge_cores(&s.left, &s.right)
            .iter()
            .zip(block)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    #[test]
    fn error_equals_discarded_weight() {
        let block = random_block(3, 4, 2, 1);
        // Oracle: singular values of the matricized block via nalgebra directly.
        let theta = DMatrix::from_row_slice(12, 8, &block);
        let mut sv: Vec<f64> = theta.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for m in 1..=8 {
            let s = truncate_split(&block, 3, 4, 2, m, Direction::Right).unwrap();
            let tail: f64 = sv[m..].iter().map(|x| x * x).sum();
            assert!((s.discarded - tail).abs() < 1e-10 * (1.0 + tail));
            assert!((residual(&block, &s) - tail).abs() < 1e-10 * (1.0 + tail));
        }
    }

    #[test]
    fn directions_produce_the_stated_isometries() {
        let block = random_block(2, 3, 3, 2);
        let r = truncate_split(&block, 2, 3, 3, 4, Direction::Right).unwrap();
        assert!(orthogonality_error(&r.left.left_matrix()) < 1e-12);
        let l = truncate_split(&block, 2, 3, 3, 4, Direction::Left).unwrap();
        assert!(orthogonality_error(&l.right.right_matrix().transpose()) < 1e-12);
    }

    #[test]
    fn exact_low_rank_block_is_recovered_at_its_rank() {
        let mut g = rng(3);
        let a = Core::from_fn(2, 3, 2, |_, _, _| g.random_range(-1.0..1.0));
        let c = Core::from_fn(2, 3, 1, |_, _, _| g.random_range(-1.0..1.0));
        let block = merge_cores(&a, &c);
        let s = truncate_split(&block, 2, 3, 1, 10, Direction::Right).unwrap();
        assert_eq!(s.kept, 2);
        assert!(residual(&block, &s) < 1e-24);
    }

    proptest! {
        #[test]
        fn truncation_never_exceeds_the_cap(seed in 0u64..1000, m in 1usize..6) {
            let block = random_block(2, 3, 2, seed);
            let s = truncate_split(&block, 2, 3, 2, m, Direction::Left).unwrap();
            prop_assert!(s.kept <= m);
            prop_assert_eq!(s.left.right, s.kept);
            prop_assert_eq!(s.right.left, s.kept);
        }
    }
}
