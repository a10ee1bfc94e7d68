//! Harmonic-oscillator discrete variable representation.
//!
//! Units: ħ = `hbar`, unit mass (mass-weighted coordinates). The length scale
//! of an oscillator with frequency ω is `ℓ = √(ħ/ω)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;

#[derive(Clone, Debug, PartialEq)]
pub struct DvrBasis {
    pub frequency: f64,
    pub center: f64,
    pub hbar: f64,
    /// Grid points `q_σ`, ascending.
    pub grid: Vec<f64>,
    /// Column `σ` holds the grid function in the HO eigenbasis.
    pub transform: DMatrix<f64>,
    /// `T = p²/2` in the grid basis.
    pub kinetic: DMatrix<f64>,
}

/// Position operator in the first `d` HO eigenfunctions, centered at zero.
pub fn ho_position_matrix(d: usize, frequency: f64, hbar: f64) -> DMatrix<f64> {
    let ell = (hbar / frequency).sqrt();
    DMatrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            ((i + 1) as f64 / 2.0).sqrt() * ell
        } else if i == j + 1 {
            ((j + 1) as f64 / 2.0).sqrt() * ell
        } else {
            0.0
        }
    })
}

/// `p²` in the first `d` HO eigenfunctions (exact matrix elements).
pub fn ho_momentum_squared(d: usize, frequency: f64, hbar: f64) -> DMatrix<f64> {
    let s = 0.5 * hbar * frequency;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            s * (2 * i + 1) as f64
        } else if j == i + 2 {
            -s * (((i + 1) * (i + 2)) as f64).sqrt()
        } else if i == j + 2 {
            -s * (((j + 1) * (j + 2)) as f64).sqrt()
        } else {
            0.0
        }
    })
}

pub fn build_ho_dvr(d: usize, frequency: f64, center: f64) -> Result<DvrBasis> {
    build_ho_dvr_with_hbar(d, frequency, center, 1.0)
}

pub fn build_ho_dvr_with_hbar(d: usize, frequency: f64, center: f64, hbar: f64) -> Result<DvrBasis> {
    if d < 2 {
        return Err(Error::Invalid(format!("DVR needs d >= 2, got {d}")));
    }
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::Invalid(format!("DVR frequency must be positive, got {frequency}")));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::Invalid(format!("hbar must be positive, got {hbar}")));
    }
    let x = ho_position_matrix(d, frequency, hbar);
    let (vals, mut vecs) = sym_eigen_sorted(&x);
    // Fix signs so that every grid function overlaps the HO ground state
    // positively.
    for mut col in vecs.column_iter_mut() {
        if col[0] < 0.0 {
            col.neg_mut();
        }
    }
    let p2 = ho_momentum_squared(d, frequency, hbar);
    let kinetic = vecs.transpose() * p2 * &vecs * 0.5;
    let kinetic = (&kinetic + kinetic.transpose()) * 0.5;
    Ok(DvrBasis {
        frequency,
        center,
        hbar,
        grid: vals.iter().map(|v| v + center).collect(),
        transform: vecs,
        kinetic,
    })
}

impl DvrBasis {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Quadrature weights of the HO ground-state density: `Σ_σ w_σ P(q_σ)`
    /// approximates `⟨ψ₀|P|ψ₀⟩`.
    pub fn ground_weights(&self) -> Vec<f64> {
        self.transform.row(0).iter().map(|v| v * v).collect()
    }

    /// Dense one-mode Hamiltonian `T + diag(V(q_σ))`.
    pub fn hamiltonian<F: Fn(f64) -> f64>(&self, potential: F) -> DMatrix<f64> {
        let mut h = self.kinetic.clone();
        for (s, &q) in self.grid.iter().enumerate() {
            h[(s, s)] += potential(q);
        }
        h
    }
}
