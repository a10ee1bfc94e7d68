//! Force-and-energy augmented regression design.
//!
//! Each data point `k` expands into `f + 1` rows `p = k·(f+1) + r`. For
//! `r < f` mode `r` carries the negated derivative row `−∂φ/∂q_r` and the
//! target is the projected force `(F·U)_r`; row `r = f` uses plain basis rows
//! everywhere and targets the energy. Contracting any row with the train
//! therefore predicts a force component or the energy, and the loss becomes
//! one least-squares problem over all rows.

use crate::error::{check_dim, Error, Result};
use crate::model::{ModelState, TensorTrain};
use crate::potentials::Record;

#[derive(Clone, Debug)]
pub struct AugmentedDesign {
    points: usize,
    modes: usize,
    n_basis: usize,
    /// Per mode: `|D'| × N` row-major.
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl AugmentedDesign {
    pub fn build(batch: &[Record], model: &ModelState) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let f = model.f();
        let nb = model.n_basis();
        let total = batch.len() * (f + 1);
        let mut rows = vec![vec![0.0; total * nb]; f];
        let mut targets = Vec::with_capacity(total);
        let basis = model.basis();
        let mut plain = vec![0.0; nb];
        let mut deriv = vec![0.0; nb];
        for (k, rec) in batch.iter().enumerate() {
            check_dim("record coordinates", model.n(), rec.x.len())?;
            check_dim("record forces", model.n(), rec.force.len())?;
            let q = model.coordinator().project(&rec.x);
            let fu = model.coordinator().project(&rec.force);
            for (i, mode_rows) in rows.iter_mut().enumerate() {
                basis.eval_mode_into(i, q[i], &mut plain);
                basis.deriv_mode_into(i, q[i], &mut deriv);
                for r in 0..=f {
                    let p = k * (f + 1) + r;
                    let dst = &mut mode_rows[p * nb..(p + 1) * nb];
                    if r == i {
                        for (d, s) in dst.iter_mut().zip(&deriv) {
                            *d = -s;
                        }
                    } else {
                        dst.copy_from_slice(&plain);
                    }
                }
            }
            targets.extend_from_slice(&fu);
            targets.push(rec.energy);
        }
        Ok(Self {
            points: batch.len(),
            modes: f,
            n_basis: nb,
            rows,
            targets,
        })
    }

    /// Number of original data points `|D|`.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Number of augmented rows `|D'| = |D|·(f+1)`.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// `|D'| × N` block of mode `i`.
    pub fn mode_rows(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    #[inline]
    pub fn row(&self, mode: usize, p: usize) -> &[f64] {
        &self.rows[mode][p * self.n_basis..(p + 1) * self.n_basis]
    }

    /// Whether row `p` targets an energy (as opposed to a force component).
    pub fn is_energy_row(&self, p: usize) -> bool {
        p % (self.modes + 1) == self.modes
    }

    /// Contraction of every row with `tt`.
    pub fn predictions(&self, tt: &TensorTrain) -> Vec<f64> {
        let mut buf = vec![0.0; self.modes * self.n_basis];
        (0..self.len())
            .map(|p| {
                for i in 0..self.modes {
                    buf[i * self.n_basis..(i + 1) * self.n_basis].copy_from_slice(self.row(i, p));
                }
                tt.evaluate_rows(&buf)
            })
            .collect()
    }

    /// `(L, L_energy, L_force)` with `L_x = (1/|D|) Σ ½ residual²`.
    pub fn loss_from_predictions(&self, pred: &[f64]) -> (f64, f64, f64) {
        let mut le = 0.0;
        let mut lf = 0.0;
        for (p, (a, y)) in pred.iter().zip(&self.targets).enumerate() {
            let e = 0.5 * (a - y) * (a - y);
            if self.is_energy_row(p) {
                le += e;
            } else {
                lf += e;
            }
        }
        let s = 1.0 / self.points as f64;
        ((le + lf) * s, le * s, lf * s)
    }

    pub fn loss(&self, tt: &TensorTrain) -> (f64, f64, f64) {
        self.loss_from_predictions(&self.predictions(tt))
    }
}
