//! Tensor-train weights `W = W¹W²…Wᶠ` with cores of shape `M[i-1] × N × M[i]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::qr_positive;
use crate::tensor::Core;

/// Default bound on the number of entries `expand_full` may materialize.
pub const DENSE_GUARD: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorTrain {
    cores: Vec<Core>,
    /// Zero-based canonical center, if the train is in mixed-canonical form.
    center: Option<usize>,
    max_bond: usize,
}

impl TensorTrain {
    pub fn new(cores: Vec<Core>, max_bond: usize) -> Result<Self> {
        let tt = Self {
            cores,
            center: None,
            max_bond,
        };
        tt.validate()?;
        Ok(tt)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.cores.len();
        if f == 0 {
            return Err(Error::Invalid("tensor train without cores".into()));
        }
        check_dim("left boundary bond", 1, self.cores[0].left)?;
        check_dim("right boundary bond", 1, self.cores[f - 1].right)?;
        let n = self.cores[0].phys;
        for (i, c) in self.cores.iter().enumerate() {
            check_dim("core physical dimension", n, c.phys)?;
            check_dim("core data length", c.left * c.phys * c.right, c.data.len())?;
            if i + 1 < f {
                check_dim("shared bond dimension", c.right, self.cores[i + 1].left)?;
            }
        }
        if let Some(c) = self.center {
            if c >= f {
                return Err(Error::Invalid(format!("center {c} out of {f} sites")));
            }
        }
        Ok(())
    }

    /// Random train with the given internal bond dimensions and entries
    /// drawn i.i.d. from `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(
        sites: usize,
        phys: usize,
        internal_bonds: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_dim("internal bonds", sites.saturating_sub(1), internal_bonds.len())?;
        let dims: Vec<usize> = std::iter::once(1)
            .chain(internal_bonds.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let cores = (0..sites)
            .map(|i| {
                Core::from_fn(dims[i], phys, dims[i + 1], |_, _, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
            })
            .collect();
        let max_bond = internal_bonds.iter().copied().max().unwrap_or(1);
        Self::new(cores, max_bond)
    }

    /// Bond-dimension-1 train encoding the constant `value` on the ρ = 0 channel.
    pub fn constant(sites: usize, phys: usize, value: f64) -> Result<Self> {
        let cores = (0..sites)
            .map(|i| {
                let mut c = Core::zeros(1, phys, 1);
                c.data[0] = if i == 0 { value } else { 1.0 };
                c
            })
            .collect();
        Self::new(cores, 1)
    }

    pub fn sites(&self) -> usize {
        self.cores.len()
    }

    pub fn phys(&self) -> usize {
        self.cores[0].phys
    }

    /// `[1, M1, …, M(f-1), 1]`
    pub fn bond_dims(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.cores.iter().map(|c| c.right))
            .collect()
    }

    pub fn max_bond(&self) -> usize {
        self.max_bond
    }

    pub fn set_max_bond(&mut self, m: usize) {
        self.max_bond = m;
    }

    pub fn current_max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, i: usize) -> &Core {
        &self.cores[i]
    }

    pub(crate) fn core_mut(&mut self, i: usize) -> &mut Core {
        &mut self.cores[i]
    }

    pub(crate) fn set_core(&mut self, i: usize, core: Core) {
        self.cores[i] = core;
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub(crate) fn set_center(&mut self, c: Option<usize>) {
        self.center = c;
    }

    pub fn parameter_count(&self) -> usize {
        self.cores.iter().map(Core::len).sum()
    }

    /// Contracts the train with one basis row per site (`rows` is f×N
    /// row-major).
    pub fn evaluate_rows(&self, rows: &[f64]) -> f64 {
        let n = self.phys();
        let mut v = vec![1.0];
        for (i, core) in self.cores.iter().enumerate() {
            let mut next = vec![0.0; core.right];
            core.contract_left(&v, &rows[i * n..(i + 1) * n], &mut next);
            v = next;
        }
        v[0]
    }

    /// Left partial contractions `L_0 = [1], L_{i+1} = L_i·(row_i·W_i)`.
    pub fn left_partials(&self, rows: &[f64]) -> Vec<Vec<f64>> {
        let n = self.phys();
        let mut out = Vec::with_capacity(self.sites() + 1);
        out.push(vec![1.0]);
        for (i, core) in self.cores.iter().enumerate() {
            let mut next = vec![0.0; core.right];
            core.contract_left(&out[i], &rows[i * n..(i + 1) * n], &mut next);
            out.push(next);
        }
        out
    }

    /// Right partial contractions; `out[i]` covers sites `i..f`, `out[f] = [1]`.
    pub fn right_partials(&self, rows: &[f64]) -> Vec<Vec<f64>> {
        let n = self.phys();
        let f = self.sites();
        let mut out = vec![Vec::new(); f + 1];
        out[f] = vec![1.0];
        for i in (0..f).rev() {
            let core = &self.cores[i];
            let mut prev = vec![0.0; core.left];
            core.contract_right(&rows[i * n..(i + 1) * n], &out[i + 1], &mut prev);
            out[i] = prev;
        }
        out
    }

    /// Gauge-equivalent train with canonical center `center` (zero-based).
    pub fn canonicalize(&self, center: usize) -> Result<Self> {
        let mut tt = self.clone();
        tt.canonicalize_in_place(center)?;
        Ok(tt)
    }

    /// Left-orthogonalizes sites `0..center` and right-orthogonalizes sites
    /// `center+1..f` with sign-fixed QR. Bonds shrink only where they exceed
    /// the rank the neighbouring core can carry.
    pub fn canonicalize_in_place(&mut self, center: usize) -> Result<()> {
        let f = self.sites();
        if center >= f {
            return Err(Error::Invalid(format!("center {center} out of {f} sites")));
        }
        for i in 0..center {
            self.shift_left_to_right(i);
        }
        for i in (center + 1..f).rev() {
            self.shift_right_to_left(i);
        }
        self.center = Some(center);
        Ok(())
    }

    /// Makes core `i` left-isometric and pushes the remainder into core `i+1`.
    pub(crate) fn shift_left_to_right(&mut self, i: usize) {
        let core = &self.cores[i];
        let (q, r) = qr_positive(&core.left_matrix());
        let (left, phys) = (core.left, core.phys);
        self.cores[i] = Core::from_left_matrix(&q, left, phys);
        let next = &self.cores[i + 1];
        let merged = r * next.right_matrix();
        let (p, rr) = (next.phys, next.right);
        self.cores[i + 1] = Core::from_right_matrix(&merged, p, rr);
    }

    /// Makes core `i` right-isometric and pushes the remainder into core `i-1`.
    pub(crate) fn shift_right_to_left(&mut self, i: usize) {
        let core = &self.cores[i];
        let (q, r) = qr_positive(&core.right_matrix().transpose());
        let (phys, right) = (core.phys, core.right);
        self.cores[i] = Core::from_right_matrix(&q.transpose(), phys, right);
        let prev = &self.cores[i - 1];
        let merged = prev.left_matrix() * r.transpose();
        let (l, p) = (prev.left, prev.phys);
        self.cores[i - 1] = Core::from_left_matrix(&merged, l, p);
    }

    pub fn left_isometry_error(&self, i: usize) -> f64 {
        let m = self.cores[i].left_matrix();
        crate::linalg::orthogonality_error(&m)
    }

    pub fn right_isometry_error(&self, i: usize) -> f64 {
        let m = self.cores[i].right_matrix().transpose();
        crate::linalg::orthogonality_error(&m)
    }

    /// Largest isometry defect of the cores on either side of the center.
    pub fn gauge_error(&self) -> Option<f64> {
        let c = self.center?;
        let left = (0..c).map(|i| self.left_isometry_error(i));
        let right = (c + 1..self.sites()).map(|i| self.right_isometry_error(i));
        Some(left.chain(right).fold(0.0, f64::max))
    }

    /// Materializes the full `N^f` weight tensor, first site most significant.
    pub fn expand_full(&self, guard: usize) -> Result<Vec<f64>> {
        let n = self.phys();
        let size = n
            .checked_pow(self.sites() as u32)
            .filter(|&s| s <= guard)
            .ok_or(Error::GuardExceeded {
                what: "dense weight tensor",
                size: n.saturating_pow(self.sites() as u32),
                limit: guard,
            })?;
        // acc: (prefix configurations) × bond
        let mut acc = vec![1.0];
        let mut prefixes = 1;
        for core in &self.cores {
            let mut next = vec![0.0; prefixes * n * core.right];
            for s in 0..prefixes {
                for l in 0..core.left {
                    let a = acc[s * core.left + l];
                    if a == 0.0 {
                        continue;
                    }
                    for p in 0..n {
                        let dst = (s * n + p) * core.right;
                        let src = core.idx(l, p, 0);
                        for r in 0..core.right {
                            next[dst + r] += a * core.data[src + r];
                        }
                    }
                }
            }
            acc = next;
            prefixes *= n;
        }
        debug_assert_eq!(acc.len(), size);
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use rand::Rng;

    fn random_rows(f: usize, n: usize, r: &mut impl Rng) -> Vec<f64> {
        (0..f * n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    /// Dense contraction Σ W[ρ1..ρf] Π rows[i][ρi].
    fn dense_contract(w: &[f64], rows: &[f64], f: usize, n: usize) -> f64 {
        let mut total = 0.0;
        for (flat, &wv) in w.iter().enumerate() {
            let mut rem = flat;
            let mut prod = wv;
            for i in (0..f).rev() {
                prod *= rows[i * n + rem % n];
                rem /= n;
            }
            total += prod;
        }
        total
    }

    #[test]
    fn rank_one_expansion_is_an_outer_product() {
        let mut r = rng(1);
        let tt = TensorTrain::random(3, 3, &[1, 1], 1.0, &mut r).unwrap();
        let w = tt.expand_full(DENSE_GUARD).unwrap();
        let v: Vec<&[f64]> = tt.cores().iter().map(|c| c.data.as_slice()).collect();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    assert_eq!(w[(a * 3 + b) * 3 + c], v[0][a] * v[1][b] * v[2][c]);
                }
            }
        }
    }

    #[test]
    fn two_site_expansion_is_a_matrix_product() {
        let mut r = rng(2);
        let tt = TensorTrain::random(2, 4, &[3], 1.0, &mut r).unwrap();
        let w = tt.expand_full(DENSE_GUARD).unwrap();
        let a = tt.core(0).left_matrix();
        let b = tt.core(1).right_matrix();
        let prod = a * b;
        for i in 0..4 {
            for j in 0..4 {
                assert!((w[i * 4 + j] - prod[(i, j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn expansion_guard_is_enforced() {
        let tt = TensorTrain::constant(7, 21, 1.0).unwrap();
        assert!(matches!(
            tt.expand_full(DENSE_GUARD),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn evaluation_matches_dense_contraction() {
        let mut r = rng(3);
        for f in 1..=4 {
            for n in 1..=5 {
                for m in 1..=4 {
                    let bonds = vec![m; f - 1];
                    let tt = TensorTrain::random(f, n, &bonds, 1.0, &mut r).unwrap();
                    let w = tt.expand_full(DENSE_GUARD).unwrap();
                    let rows = random_rows(f, n, &mut r);
                    let diff = (tt.evaluate_rows(&rows) - dense_contract(&w, &rows, f, n)).abs();
                    assert!(diff < 1e-12, "f={f} n={n} m={m}: {diff}");
                }
            }
        }
    }

    #[test]
    fn canonicalization_preserves_values_and_sets_isometries() {
        let mut r = rng(4);
        let tt = TensorTrain::random(4, 4, &[3, 3, 3], 1.0, &mut r).unwrap();
        let probes: Vec<Vec<f64>> = (0..100).map(|_| random_rows(4, 4, &mut r)).collect();
        for c in 0..4 {
            let can = tt.canonicalize(c).unwrap();
            assert_eq!(can.center(), Some(c));
            assert!(can.gauge_error().unwrap() < 1e-10);
            for p in &probes {
                let (a, b) = (tt.evaluate_rows(p), can.evaluate_rows(p));
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn recanonicalizing_is_idempotent() {
        let mut r = rng(5);
        let tt = TensorTrain::random(4, 3, &[3, 2, 3], 1.0, &mut r)
            .unwrap()
            .canonicalize(1)
            .unwrap();
        let again = tt.canonicalize(1).unwrap();
        for (a, b) in tt.cores().iter().zip(again.cores()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn center_round_trip_preserves_bonds() {
        let mut r = rng(6);
        let tt = TensorTrain::random(5, 4, &[3, 4, 4, 3], 1.0, &mut r).unwrap();
        let moved = tt.canonicalize(0).unwrap().canonicalize(4).unwrap().canonicalize(0).unwrap();
        assert_eq!(moved.bond_dims(), tt.bond_dims());
    }

    #[test]
    fn partials_reproduce_the_full_contraction() {
        let mut r = rng(7);
        let tt = TensorTrain::random(4, 3, &[2, 3, 2], 1.0, &mut r).unwrap();
        let rows = random_rows(4, 3, &mut r);
        let left = tt.left_partials(&rows);
        let right = tt.right_partials(&rows);
        let v = tt.evaluate_rows(&rows);
        for i in 0..=4 {
            let s: f64 = left[i].iter().zip(&right[i]).map(|(a, b)| a * b).sum();
            assert!((s - v).abs() < 1e-12);
        }
    }
}
