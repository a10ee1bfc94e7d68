//! Full diagonalization, the small-grid oracle.

use nalgebra::{DMatrix, DVector};

use super::EigenResult;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_sorted;
use crate::mpo::Mpo;

/// Largest `Π d` materialized by [`dense_hamiltonian`].
pub const DENSE_ROWS: usize = 40_000;

const SYMMETRY_TOL: f64 = 1e-10;

pub fn dense_hamiltonian(h: &Mpo) -> Result<DMatrix<f64>> {
    dense_hamiltonian_guarded(h, DENSE_ROWS)
}

pub fn dense_hamiltonian_guarded(h: &Mpo, max_rows: usize) -> Result<DMatrix<f64>> {
    let m = h.to_dense(max_rows)?;
    check_symmetric(&m)?;
    Ok(m)
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Invalid(format!("{}×{} matrix is not square", m.nrows(), m.ncols())));
    }
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * m.amax().max(1.0)) {
        return Err(Error::NonSymmetric(asym));
    }
    Ok(())
}

/// Lowest `k` eigenpairs (all of them if `k` exceeds the dimension).
pub fn dense_eigs(m: &DMatrix<f64>, k: usize) -> Result<EigenResult> {
    check_symmetric(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dense Hamiltonian".into()));
    }
    let (vals, vecs) = sym_eigen_sorted(m);
    let k = k.min(vals.len());
    let mut out = EigenResult::default();
    for j in 0..k {
        let v: DVector<f64> = vecs.column(j).into_owned();
        let hv = m * &v;
        let e = v.dot(&hv);
        out.energies.push(vals[j]);
        out.converged.push(true);
        out.variances.push(hv.dot(&hv) - e * e);
        out.sweeps.push(0);
        out.bond_dims.push(Vec::new());
    }
    Ok(out)
}
