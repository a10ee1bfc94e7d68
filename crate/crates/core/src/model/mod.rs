//! The potential model `V(x) = Φ(x·U)·W`: a coordinator, a per-mode basis
//! family and a tensor-train weight.

mod basis;
mod checkpoint;
mod coordinator;
mod encode;
mod tt;

pub use basis::{BasisEntry, BasisFamily, BasisKind, EntryEval, SQUASH_EPSILON};
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA};
pub use coordinator::Coordinator;
pub use encode::encode_sop;
pub use tt::{TensorTrain, DENSE_GUARD};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub energy: String,
    pub length: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            energy: "dimensionless".into(),
            length: "dimensionless".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    coordinator: Coordinator,
    basis: BasisFamily,
    tt: TensorTrain,
    pub units: Units,
}

impl ModelState {
    pub fn new(
        coordinator: Coordinator,
        mut basis: BasisFamily,
        tt: TensorTrain,
        units: Units,
    ) -> Result<Self> {
        check_dim("basis modes vs coordinator", coordinator.f(), basis.modes())?;
        check_dim("tensor-train sites vs coordinator", coordinator.f(), tt.sites())?;
        check_dim("tensor-train physical dim vs basis", basis.size(), tt.phys())?;
        basis.refresh(&coordinator);
        Ok(Self {
            coordinator,
            basis,
            tt,
            units,
        })
    }

    /// Starting point for training: identity coordinator, standard basis with
    /// reference points drawn from `points`, and a random train with bond
    /// dimension `bond` whose constant channel carries `offset`.
    pub fn initialize<R: Rng + ?Sized>(
        n: usize,
        f: usize,
        n_basis: usize,
        bond: usize,
        max_bond: usize,
        points: &[Vec<f64>],
        offset: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let coordinator = Coordinator::identity(n, f)?;
        let basis = BasisFamily::from_training(f, n_basis, points, &coordinator, rng)?;
        let bonds: Vec<usize> = (1..f)
            .map(|i| {
                let left = n_basis.saturating_pow(i as u32);
                let right = n_basis.saturating_pow((f - i) as u32);
                bond.min(left).min(right)
            })
            .collect();
        let scale = 1.0 / ((n_basis * bond.max(1)) as f64).sqrt();
        let mut tt = TensorTrain::random(f, n_basis, &bonds, scale, rng)?;
        for i in 0..f {
            let core = tt.core_mut(i);
            core.set(0, 0, 0, if i == 0 { offset } else { 1.0 });
        }
        tt.set_max_bond(max_bond);
        Self::new(coordinator, basis, tt, Units::default())
    }

    pub fn n(&self) -> usize {
        self.coordinator.n()
    }

    pub fn f(&self) -> usize {
        self.coordinator.f()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.size()
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn basis(&self) -> &BasisFamily {
        &self.basis
    }

    pub fn tt(&self) -> &TensorTrain {
        &self.tt
    }

    pub fn tt_mut(&mut self) -> &mut TensorTrain {
        &mut self.tt
    }

    pub fn basis_mut(&mut self) -> &mut BasisFamily {
        &mut self.basis
    }

    pub fn set_tt(&mut self, tt: TensorTrain) -> Result<()> {
        check_dim("tensor-train sites", self.f(), tt.sites())?;
        check_dim("tensor-train physical dim", self.n_basis(), tt.phys())?;
        self.tt = tt;
        Ok(())
    }

    /// Replaces the coordinator and re-derives the basis centers.
    pub fn set_coordinator(&mut self, coordinator: Coordinator) -> Result<()> {
        check_dim("coordinator rows", self.n(), coordinator.n())?;
        check_dim("coordinator cols", self.f(), coordinator.f())?;
        self.coordinator = coordinator;
        self.basis.refresh(&self.coordinator);
        Ok(())
    }

    /// Called after the basis parameters were edited in place.
    pub fn refresh_basis(&mut self) {
        self.basis.refresh(&self.coordinator);
    }

    pub fn latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.coordinator.to_latent(x)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let q = self.latent(x)?;
        self.evaluate_latent(&q)
    }

    pub fn evaluate_latent(&self, q: &[f64]) -> Result<f64> {
        let rows = self.basis.eval(q)?;
        Ok(self.tt.evaluate_rows(&rows))
    }

    pub fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.evaluate(x)).collect()
    }

    /// Energy and `∂Ṽ/∂q` in latent coordinates.
    pub fn latent_gradient(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let rows = self.basis.eval(q)?;
        let drows = self.basis.grad(q)?;
        let left = self.tt.left_partials(&rows);
        let right = self.tt.right_partials(&rows);
        let n = self.n_basis();
        let grad = (0..self.f())
            .map(|i| {
                let core = self.tt.core(i);
                let mut tmp = vec![0.0; core.right];
                core.contract_left(&left[i], &drows[i * n..(i + 1) * n], &mut tmp);
                crate::linalg::dot(&tmp, &right[i + 1])
            })
            .collect();
        Ok((left[self.f()][0], grad))
    }

    /// Energy and force `−∂V/∂x = (−∂Ṽ/∂q)·Uᵀ`.
    pub fn energy_and_force(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let q = self.latent(x)?;
        let (v, g) = self.latent_gradient(&q)?;
        let force = self.coordinator.lift(&g).into_iter().map(|v| -v).collect();
        Ok((v, force))
    }

    pub fn force(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.energy_and_force(x)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::sop::rotated_coupled_ho;
    use crate::testutil::{random_model, random_orthogonal, rng};
    use rand::Rng;

    #[test]
    fn constant_train_evaluates_to_its_constant() {
        let coord = Coordinator::identity(3, 3).unwrap();
        let basis = BasisFamily::standard(3, 4, vec![vec![0.1, 0.2, 0.3]; 12], &coord).unwrap();
        let tt = TensorTrain::constant(3, 4, -2.5).unwrap();
        let model = ModelState::new(coord, basis, tt, Units::default()).unwrap();
        let mut r = rng(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-5.0..5.0)).collect();
            assert_eq!(model.evaluate(&x).unwrap(), -2.5);
            assert!(model.force(&x).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn force_matches_finite_differences() {
        let model = random_model(4, 3, 5, 3, 2);
        let mut r = rng(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
            let f = model.force(&x).unwrap();
            for a in 0..4 {
                let h = 1e-5 * x[a].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[a] += h;
                xm[a] -= h;
                let fd = -(model.evaluate(&xp).unwrap() - model.evaluate(&xm).unwrap()) / (2.0 * h);
                assert!(
                    (f[a] - fd).abs() <= 1e-5 * fd.abs().max(1e-2),
                    "{} vs {fd}",
                    f[a]
                );
            }
        }
    }

    #[test]
    fn encoded_quadratic_gives_harmonic_forces() {
        let k = [1.0, 2.0, 0.5];
        let freqs: Vec<f64> = k.iter().map(|v: &f64| v.sqrt()).collect();
        let pot = rotated_coupled_ho(3, &freqs, None).unwrap();
        let model = encode_sop(&pot, 4).unwrap();
        let x = [0.3, -1.2, 2.0];
        let f = model.force(&x).unwrap();
        for a in 0..3 {
            assert!((f[a] + k[a] * x[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = random_model(3, 2, 3, 2, 4);
        assert!(model.evaluate(&[1.0, 2.0]).is_err());
        assert!(model.force(&[1.0; 4]).is_err());
    }

    #[test]
    fn rotated_latent_preserves_norm() {
        let mut r = rng(9);
        let coord = Coordinator::new(random_orthogonal(6, &mut r)).unwrap();
        let x: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let nx = crate::linalg::norm(&x);
        let x: Vec<f64> = x.iter().map(|v| v / nx).collect();
        let q = coord.to_latent(&x).unwrap();
        assert!((crate::linalg::norm(&q) - 1.0).abs() < 1e-12);
    }
}
