//! One-mode integrals `I[σ', ρ, σ] = ⟨σ'|φ_ρ|σ⟩` between basis functions and
//! DVR grid functions.

use super::dvr::{build_ho_dvr_with_hbar, DvrBasis};
use crate::error::{Error, Result};
use crate::model::BasisFamily;

#[derive(Clone, Debug, PartialEq)]
pub struct OneModeIntegrals {
    pub d: usize,
    pub n_basis: usize,
    /// `d × N × d`, row-major.
    pub data: Vec<f64>,
    /// Off-diagonal entries in `(σ', σ)` are zero by construction.
    pub diagonal: bool,
}

impl OneModeIntegrals {
    #[inline]
    pub fn get(&self, bra: usize, rho: usize, ket: usize) -> f64 {
        self.data[(bra * self.n_basis + rho) * self.d + ket]
    }
}

fn check_mode(basis: &BasisFamily, mode: usize) -> Result<()> {
    if mode >= basis.modes() {
        return Err(Error::Invalid(format!("mode {mode} out of {} modes", basis.modes())));
    }
    Ok(())
}

/// DVR rule: `I[σ', ρ, σ] = δ_{σ'σ} φ_ρ(q_σ)`.
pub fn one_mode_integrals(basis: &BasisFamily, dvr: &DvrBasis, mode: usize) -> Result<OneModeIntegrals> {
    check_mode(basis, mode)?;
    let (d, n) = (dvr.len(), basis.size());
    let mut data = vec![0.0; d * n * d];
    let mut row = vec![0.0; n];
    for (s, &q) in dvr.grid.iter().enumerate() {
        basis.eval_mode_into(mode, q, &mut row);
        for (rho, v) in row.iter().enumerate() {
            data[(s * n + rho) * d + s] = *v;
        }
    }
    Ok(OneModeIntegrals {
        d,
        n_basis: n,
        data,
        diagonal: true,
    })
}

/// Full matrix elements by quadrature on a `order`-point DVR of the same
/// oscillator. Exact for polynomial `φ` of degree below `2·(order − d) + 1`.
pub fn one_mode_integrals_exact(
    basis: &BasisFamily,
    dvr: &DvrBasis,
    mode: usize,
    order: usize,
) -> Result<OneModeIntegrals> {
    check_mode(basis, mode)?;
    let (d, n) = (dvr.len(), basis.size());
    if order < d {
        return Err(Error::Invalid(format!("quadrature order {order} below DVR size {d}")));
    }
    let fine = build_ho_dvr_with_hbar(order, dvr.frequency, dvr.center, dvr.hbar)?;
    // amp[σ][k]: grid function σ sampled on fine point k (times √w_k).
    let amp: Vec<Vec<f64>> = (0..d)
        .map(|s| {
            (0..order)
                .map(|k| (0..d).map(|j| dvr.transform[(j, s)] * fine.transform[(j, k)]).sum())
                .collect()
        })
        .collect();
    let mut data = vec![0.0; d * n * d];
    let mut row = vec![0.0; n];
    for (k, &q) in fine.grid.iter().enumerate() {
        basis.eval_mode_into(mode, q, &mut row);
        for a in 0..d {
            for b in 0..d {
                let w = amp[a][k] * amp[b][k];
                for (rho, v) in row.iter().enumerate() {
                    data[(a * n + rho) * d + b] += w * v;
                }
            }
        }
    }
    Ok(OneModeIntegrals {
        d,
        n_basis: n,
        data,
        diagonal: false,
    })
}
