//! Cached left/right contractions of the design with the train.

use super::design::AugmentedDesign;
use crate::error::{Error, Result};
use crate::model::TensorTrain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dot {
    One,
    Two,
}

/// `left[i]` contracts sites `0..i` (shape `|D'| × M_i`), `right[i]` contracts
/// sites `i..f` (shape `|D'| × M_i`, where `M_i` is the left bond of site `i`).
/// `left[0]` and `right[f]` are all-ones columns.
#[derive(Clone, Debug)]
pub struct EnvironmentCache {
    rows: usize,
    left: Vec<Option<Vec<f64>>>,
    right: Vec<Option<Vec<f64>>>,
    widths: Vec<usize>,
}

impl EnvironmentCache {
    /// Blocks for an update at `site`: `left[0..=site]` plus `right[site+1..]`
    /// (one-dot) or `right[site+2..]` (two-dot).
    pub fn build(design: &AugmentedDesign, tt: &TensorTrain, site: usize, dot: Dot) -> Result<Self> {
        if tt.center() != Some(site) {
            return Err(Error::CenterMismatch {
                expected: site,
                found: tt.center(),
            });
        }
        let f = tt.sites();
        let mut env = Self::empty(design, tt);
        for i in 0..site {
            env.extend_left(design, tt, i);
        }
        let first_right = match dot {
            Dot::One => site + 1,
            Dot::Two => site + 2,
        };
        for i in (first_right.min(f)..f).rev() {
            env.extend_right(design, tt, i);
        }
        Ok(env)
    }

    fn empty(design: &AugmentedDesign, tt: &TensorTrain) -> Self {
        let f = tt.sites();
        let rows = design.len();
        let mut left = vec![None; f + 1];
        let mut right = vec![None; f + 1];
        left[0] = Some(vec![1.0; rows]);
        right[f] = Some(vec![1.0; rows]);
        Self {
            rows,
            left,
            right,
            widths: tt.bond_dims(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn left(&self, i: usize) -> Option<&[f64]> {
        self.left[i].as_deref()
    }

    pub fn right(&self, i: usize) -> Option<&[f64]> {
        self.right[i].as_deref()
    }

    pub fn width(&self, i: usize) -> usize {
        self.widths[i]
    }

    /// `left[i+1]` from `left[i]` and core `i`.
    pub fn extend_left(&mut self, design: &AugmentedDesign, tt: &TensorTrain, i: usize) {
        let core = tt.core(i);
        let prev = self.left[i].as_ref().expect("left block available");
        debug_assert_eq!(prev.len(), self.rows * core.left);
        let mut next = vec![0.0; self.rows * core.right];
        for p in 0..self.rows {
            core.contract_left(
                &prev[p * core.left..(p + 1) * core.left],
                design.row(i, p),
                &mut next[p * core.right..(p + 1) * core.right],
            );
        }
        self.left[i + 1] = Some(next);
        self.widths[i + 1] = core.right;
        self.widths[i] = core.left;
    }

    /// `right[i]` from `right[i+1]` and core `i`.
    pub fn extend_right(&mut self, design: &AugmentedDesign, tt: &TensorTrain, i: usize) {
        let core = tt.core(i);
        let next = self.right[i + 1].as_ref().expect("right block available");
        debug_assert_eq!(next.len(), self.rows * core.right);
        let mut out = vec![0.0; self.rows * core.left];
        for p in 0..self.rows {
            core.contract_right(
                design.row(i, p),
                &next[p * core.right..(p + 1) * core.right],
                &mut out[p * core.left..(p + 1) * core.left],
            );
        }
        self.right[i] = Some(out);
        self.widths[i] = core.left;
        self.widths[i + 1] = core.right;
    }

    pub fn invalidate_left(&mut self, from: usize) {
        for b in self.left.iter_mut().skip(from.max(1)) {
            *b = None;
        }
    }

    pub fn invalidate_right(&mut self, upto: usize) {
        let f = self.right.len() - 1;
        for b in self.right.iter_mut().take(upto.min(f)) {
            *b = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_batch, random_model};

    #[test]
    fn center_mismatch_is_reported() {
        let mut model = random_model(3, 3, 4, 2, 1);
        model.tt_mut().canonicalize_in_place(0).unwrap();
        let d = AugmentedDesign::build(&random_batch(3, 6, 2), &model).unwrap();
        assert!(matches!(
            EnvironmentCache::build(&d, model.tt(), 1, Dot::One),
            Err(Error::CenterMismatch { expected: 1, .. })
        ));
    }

    #[test]
    fn first_site_sees_the_ones_column() {
        let mut model = random_model(3, 3, 4, 2, 3);
        model.tt_mut().canonicalize_in_place(0).unwrap();
        let d = AugmentedDesign::build(&random_batch(3, 6, 4), &model).unwrap();
        let env = EnvironmentCache::build(&d, model.tt(), 0, Dot::Two).unwrap();
        assert!(env.left(0).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn incremental_blocks_match_rebuilt_ones() {
        let mut model = random_model(4, 4, 3, 3, 5);
        model.tt_mut().canonicalize_in_place(0).unwrap();
        let d = AugmentedDesign::build(&random_batch(4, 9, 6), &model).unwrap();
        let mut env = EnvironmentCache::build(&d, model.tt(), 0, Dot::One).unwrap();
        for site in 0..3 {
            model.tt_mut().shift_left_to_right(site);
            model.tt_mut().set_center(Some(site + 1));
            env.extend_left(&d, model.tt(), site);
            let fresh = EnvironmentCache::build(&d, model.tt(), site + 1, Dot::One).unwrap();
            let (a, b) = (env.left(site + 1).unwrap(), fresh.left(site + 1).unwrap());
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        for site in (1..4).rev() {
            model.tt_mut().shift_right_to_left(site);
            model.tt_mut().set_center(Some(site - 1));
            env.extend_right(&d, model.tt(), site);
            let fresh = EnvironmentCache::build(&d, model.tt(), site - 1, Dot::One).unwrap();
            let (a, b) = (env.right(site).unwrap(), fresh.right(site).unwrap());
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn two_site_blocks_reproduce_predictions() {
        let mut model = random_model(3, 3, 4, 3, 7);
        model.tt_mut().canonicalize_in_place(1).unwrap();
        let d = AugmentedDesign::build(&random_batch(3, 5, 8), &model).unwrap();
        let env = EnvironmentCache::build(&d, model.tt(), 1, Dot::Two).unwrap();
        let pred = d.predictions(model.tt());
        let (c1, c2) = (model.tt().core(1), model.tt().core(2));
        let (l, r) = (env.left(1).unwrap(), env.right(3).unwrap());
        for p in 0..d.len() {
            let mut v = 0.0;
            for a in 0..c1.left {
                for r1 in 0..4 {
                    for m in 0..c1.right {
                        for r2 in 0..4 {
                            v += l[p * c1.left + a]
                                * d.row(1, p)[r1]
                                * c1.get(a, r1, m)
                                * d.row(2, p)[r2]
                                * c2.get(m, r2, 0)
                                * r[p];
                        }
                    }
                }
            }
            assert!((v - pred[p]).abs() < 1e-12);
        }
    }
}
