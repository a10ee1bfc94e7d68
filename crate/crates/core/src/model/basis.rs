//! Per-mode basis functions `φ_ρ(q) = g_ρ(w·(q − q̄) + b)`.
//!
//! Slot 0 is the constant function, slots `1..⌈N/2⌉` use the squashed
//! Gaussian `1 − exp(−t²) + εt²` and the remaining slots use the smooth ramp
//! `t/(1 + exp(−t))`. `q̄ = x̄·U[:, i]` ties each function to a reference point
//! `x̄` taken from the training set, so the centers follow the coordinator.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::coordinator::Coordinator;
use crate::error::{check_dim, Error, Result};
use crate::potentials::sop::{exp_clamped, OneModeFn};

/// Quadratic leak of the squashed Gaussian.
pub const SQUASH_EPSILON: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisKind {
    Constant,
    SquashGaussian,
    SmoothRamp,
    /// An explicit one-mode function, installed by exact SOP encoding.
    Custom { func: OneModeFn },
}

impl BasisKind {
    /// Standard kind for zero-based slot `rho` of an `n_basis`-function mode.
    pub fn standard(rho: usize, n_basis: usize) -> Self {
        let half = n_basis.div_ceil(2);
        if rho == 0 {
            BasisKind::Constant
        } else if rho < half {
            BasisKind::SquashGaussian
        } else {
            BasisKind::SmoothRamp
        }
    }

    /// `(g, g', g'')` at argument `t`.
    #[inline]
    pub fn derivatives(&self, t: f64) -> (f64, f64, f64) {
        match self {
            BasisKind::Constant => (1.0, 0.0, 0.0),
            BasisKind::SquashGaussian => {
                let e = exp_clamped(-t * t);
                (
                    1.0 - e + SQUASH_EPSILON * t * t,
                    2.0 * t * e + 2.0 * SQUASH_EPSILON * t,
                    (2.0 - 4.0 * t * t) * e + 2.0 * SQUASH_EPSILON,
                )
            }
            BasisKind::SmoothRamp => {
                let s = 1.0 / (1.0 + exp_clamped(-t));
                let ds = s * (1.0 - s);
                (t * s, s + t * ds, 2.0 * ds + t * ds * (1.0 - 2.0 * s))
            }
            BasisKind::Custom { func } => func.derivatives(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            BasisKind::Constant => true,
            BasisKind::Custom { func } => func.is_constant(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub kind: BasisKind,
    pub weight: f64,
    pub bias: f64,
    /// Reference point x̄ in input coordinates.
    pub reference: Vec<f64>,
}

/// Value, first and second derivative of one entry at a latent coordinate,
/// together with the shifted argument `q − q̄` and the weight.
#[derive(Clone, Copy, Debug)]
pub struct EntryEval {
    pub shift: f64,
    pub weight: f64,
    pub g: f64,
    pub g1: f64,
    pub g2: f64,
}

impl EntryEval {
    /// φ
    pub fn value(&self) -> f64 {
        self.g
    }
    /// ∂φ/∂q
    pub fn dq(&self) -> f64 {
        self.weight * self.g1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisFamily {
    modes: usize,
    size: usize,
    /// Row-major `[mode][rho]`.
    entries: Vec<BasisEntry>,
    #[serde(skip)]
    centers: Vec<f64>,
}

impl BasisFamily {
    /// Standard family with w = 1, b = 0 and the given reference points
    /// (`modes·size` rows, mode-major).
    pub fn standard(
        modes: usize,
        size: usize,
        references: Vec<Vec<f64>>,
        coord: &Coordinator,
    ) -> Result<Self> {
        check_dim("basis reference rows", modes * size, references.len())?;
        check_dim("latent modes", coord.f(), modes)?;
        let entries = references
            .into_iter()
            .enumerate()
            .map(|(k, reference)| BasisEntry {
                kind: BasisKind::standard(k % size, size),
                weight: 1.0,
                bias: 0.0,
                reference,
            })
            .collect();
        Self::from_entries(modes, size, entries, coord)
    }

    /// Draws `modes·size` reference points from `points` without replacement,
    /// falling back to sampling with replacement when there are too few.
    pub fn from_training<R: Rng + ?Sized>(
        modes: usize,
        size: usize,
        points: &[Vec<f64>],
        coord: &Coordinator,
        rng: &mut R,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let need = modes * size;
        let picks: Vec<usize> = if points.len() >= need {
            index::sample(rng, points.len(), need).into_vec()
        } else {
            (0..need).map(|_| rng.random_range(0..points.len())).collect()
        };
        let refs = picks.into_iter().map(|k| points[k].clone()).collect();
        Self::standard(modes, size, refs, coord)
    }

    pub fn from_entries(
        modes: usize,
        size: usize,
        entries: Vec<BasisEntry>,
        coord: &Coordinator,
    ) -> Result<Self> {
        check_dim("basis entries", modes * size, entries.len())?;
        for e in &entries {
            check_dim("basis reference point", coord.n(), e.reference.len())?;
        }
        let mut basis = Self {
            modes,
            size,
            entries,
            centers: Vec::new(),
        };
        basis.refresh(coord);
        Ok(basis)
    }

    /// Re-derives the latent centers `q̄ = x̄·U` from the current coordinator.
    pub fn refresh(&mut self, coord: &Coordinator) {
        let size = self.size;
        self.centers = self
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let i = k / size;
                let m = coord.matrix();
                (0..m.nrows()).map(|a| e.reference[a] * m[(a, i)]).sum()
            })
            .collect();
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn entry(&self, mode: usize, rho: usize) -> &BasisEntry {
        &self.entries[mode * self.size + rho]
    }

    pub fn entry_mut(&mut self, mode: usize, rho: usize) -> &mut BasisEntry {
        &mut self.entries[mode * self.size + rho]
    }

    pub fn center(&self, mode: usize, rho: usize) -> f64 {
        self.centers[mode * self.size + rho]
    }

    #[inline]
    pub fn eval_entry(&self, mode: usize, rho: usize, q: f64) -> EntryEval {
        let k = mode * self.size + rho;
        let e = &self.entries[k];
        let shift = q - self.centers[k];
        let (g, g1, g2) = e.kind.derivatives(e.weight * shift + e.bias);
        EntryEval {
            shift,
            weight: e.weight,
            g,
            g1,
            g2,
        }
    }

    /// Fills `out` (length N) with `φ_ρ(q)` for one mode.
    pub fn eval_mode_into(&self, mode: usize, q: f64, out: &mut [f64]) {
        for (rho, o) in out.iter_mut().enumerate() {
            *o = self.eval_entry(mode, rho, q).value();
        }
    }

    /// Fills `out` (length N) with `∂φ_ρ/∂q` for one mode.
    pub fn deriv_mode_into(&self, mode: usize, q: f64, out: &mut [f64]) {
        for (rho, o) in out.iter_mut().enumerate() {
            *o = self.eval_entry(mode, rho, q).dq();
        }
    }

    /// f×N row-major matrix of basis values.
    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent vector", self.modes, q.len())?;
        let mut out = vec![0.0; self.modes * self.size];
        for (i, chunk) in out.chunks_mut(self.size).enumerate() {
            self.eval_mode_into(i, q[i], chunk);
        }
        Ok(out)
    }

    /// f×N row-major matrix of `∂φ_ρ/∂q_i`.
    pub fn grad(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent vector", self.modes, q.len())?;
        let mut out = vec![0.0; self.modes * self.size];
        for (i, chunk) in out.chunks_mut(self.size).enumerate() {
            self.deriv_mode_into(i, q[i], chunk);
        }
        Ok(out)
    }

    pub(crate) fn weights_mut(&mut self) -> impl Iterator<Item = (&mut f64, &mut f64)> {
        self.entries.iter_mut().map(|e| (&mut e.weight, &mut e.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;

    fn family(n_basis: usize) -> BasisFamily {
        let coord = Coordinator::identity(1, 1).unwrap();
        BasisFamily::standard(1, n_basis, vec![vec![0.0]; n_basis], &coord).unwrap()
    }

    #[test]
    fn kind_boundaries_follow_the_ceiling_rule() {
        let kinds: Vec<_> = (0..21).map(|r| BasisKind::standard(r, 21)).collect();
        assert_eq!(kinds[0], BasisKind::Constant);
        assert!(kinds[1..11].iter().all(|k| *k == BasisKind::SquashGaussian));
        assert!(kinds[11..].iter().all(|k| *k == BasisKind::SmoothRamp));
        assert_eq!(BasisKind::standard(0, 1), BasisKind::Constant);
        assert_eq!(BasisKind::standard(1, 2), BasisKind::SmoothRamp);
        assert_eq!(BasisKind::standard(1, 3), BasisKind::SquashGaussian);
    }

    #[test]
    fn constant_slot_is_one_with_zero_derivative() {
        let b = family(5);
        for &q in &[-3.0, 0.0, 11.0] {
            assert_eq!(b.eval(&[q]).unwrap()[0], 1.0);
            assert_eq!(b.grad(&[q]).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn squash_and_ramp_vanish_at_zero_argument() {
        let (g, g1, _) = BasisKind::SquashGaussian.derivatives(0.0);
        assert_eq!(g, 0.0);
        assert_eq!(g1, 0.0);
        assert_eq!(BasisKind::SmoothRamp.derivatives(0.0).0, 0.0);
    }

    #[test]
    fn ramp_saturates_to_identity() {
        let t = 50.0;
        let oracle = t * (1.0 / (1.0 + (-t as f64).exp()));
        let got = BasisKind::SmoothRamp.derivatives(t).0;
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 50.0).abs() < 1e-9);
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        for kind in [BasisKind::SquashGaussian, BasisKind::SmoothRamp] {
            for &t in &[-1e4, -800.0, 800.0, 1e4] {
                let (g, g1, g2) = kind.derivatives(t);
                assert!(g.is_finite() && g1.is_finite() && g2.is_finite(), "{kind:?} {t}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        use rand::Rng;
        let mut r = rng(11);
        let coord = Coordinator::identity(1, 1).unwrap();
        for _ in 0..100 {
            let mut b = BasisFamily::standard(1, 7, vec![vec![r.random_range(-1.0..1.0)]; 7], &coord).unwrap();
            for rho in 0..7 {
                let e = b.entry_mut(0, rho);
                e.weight = r.random_range(0.2..2.0);
                e.bias = r.random_range(-1.0..1.0);
            }
            let q = r.random_range(-2.0..2.0);
            let h = 1e-6;
            let g = b.grad(&[q]).unwrap();
            let vp = b.eval(&[q + h]).unwrap();
            let vm = b.eval(&[q - h]).unwrap();
            for rho in 0..7 {
                let fd = (vp[rho] - vm[rho]) / (2.0 * h);
                let tol = 1e-6 * g[rho].abs().max(1e-3);
                assert!((g[rho] - fd).abs() < tol, "rho {rho}: {} vs {fd}", g[rho]);
            }
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let h = 1e-5;
        for kind in [BasisKind::SquashGaussian, BasisKind::SmoothRamp] {
            for &t in &[-2.5, -0.3, 0.0, 0.9, 4.0] {
                let fd = (kind.derivatives(t + h).1 - kind.derivatives(t - h).1) / (2.0 * h);
                assert!((kind.derivatives(t).2 - fd).abs() < 1e-8, "{kind:?} {t}");
            }
        }
    }

    #[test]
    fn references_fall_back_to_replacement() {
        let coord = Coordinator::identity(2, 2).unwrap();
        let pts = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let b = BasisFamily::from_training(2, 3, &pts, &coord, &mut rng(1)).unwrap();
        assert_eq!(b.entries().len(), 6);
        assert!(b.entries().iter().all(|e| pts.contains(&e.reference)));
    }

    #[test]
    fn centers_follow_the_coordinator() {
        let coord = Coordinator::identity(2, 2).unwrap();
        let pts: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, -(k as f64)]).collect();
        let mut b = BasisFamily::from_training(2, 3, &pts, &coord, &mut rng(2)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rot = Coordinator::new(nalgebra::DMatrix::from_row_slice(2, 2, &[s, -s, s, s])).unwrap();
        b.refresh(&rot);
        for i in 0..2 {
            for rho in 0..3 {
                let x = &b.entry(i, rho).reference;
                let expected = x[0] * rot.matrix()[(0, i)] + x[1] * rot.matrix()[(1, i)];
                assert!((b.center(i, rho) - expected).abs() < 1e-15);
            }
        }
    }
}
