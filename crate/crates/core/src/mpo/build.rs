//! Building potential, kinetic and reference MPOs.

use nalgebra::DMatrix;

use super::dvr::DvrBasis;
use super::integrals::{one_mode_integrals, OneModeIntegrals};
use super::ops::{mpo_add, Mpo, MpoCore};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{kept_rank, svd_sorted};
use crate::model::{ModelState, TensorTrain};

/// Largest grid tensor `exact_grid_mpo` will materialize.
pub const GRID_GUARD: usize = 1_000_000;

/// Relative singular-value cutoff of the grid decomposition.
pub const GRID_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContractStats {
    /// Multiply-adds spent on each site.
    pub per_site: Vec<usize>,
}

impl ContractStats {
    pub fn total(&self) -> usize {
        self.per_site.iter().sum()
    }
}

/// `𝒲[a, σ', σ, b] = Σ_ρ W[a, ρ, b]·I[σ', ρ, σ]`. With diagonal integrals
/// only the `σ' = σ` slices are touched, costing `M_l·M_r·d·N` per site.
pub fn contract_cores(tt: &TensorTrain, integrals: &[OneModeIntegrals]) -> Result<(Mpo, ContractStats)> {
    check_dim("integral sets", tt.sites(), integrals.len())?;
    let mut stats = ContractStats::default();
    let mut cores = Vec::with_capacity(tt.sites());
    for (core, ints) in tt.cores().iter().zip(integrals) {
        check_dim("integral basis size", core.phys, ints.n_basis)?;
        let d = ints.d;
        let mut ops = 0;
        let mut out = MpoCore::zeros(core.left, d, core.right);
        for a in 0..core.left {
            for b in 0..core.right {
                for s in 0..d {
                    let kets: Box<dyn Iterator<Item = usize>> = if ints.diagonal {
                        Box::new(std::iter::once(s))
                    } else {
                        Box::new(0..d)
                    };
                    for t in kets {
                        let mut acc = 0.0;
                        for rho in 0..core.phys {
                            acc += core.get(a, rho, b) * ints.get(s, rho, t);
                        }
                        ops += core.phys;
                        out.set(a, s, t, b, acc);
                    }
                }
            }
        }
        cores.push(out);
        stats.per_site.push(ops);
    }
    Ok((Mpo::new(cores)?, stats))
}

/// Potential MPO of `model` on the latent DVR grids (DVR diagonal rule).
pub fn potential_mpo(model: &ModelState, dvrs: &[DvrBasis]) -> Result<Mpo> {
    check_dim("DVR bases", model.f(), dvrs.len())?;
    let ints = dvrs
        .iter()
        .enumerate()
        .map(|(i, dvr)| one_mode_integrals(model.basis(), dvr, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(contract_cores(model.tt(), &ints)?.0)
}

/// `Σ_i T_i` with bond dimension 2: first site `[T, 1]`, middle sites
/// `[[1, 0], [T, 1]]`, last site `[1; T]`.
pub fn kinetic_mpo(dvrs: &[DvrBasis]) -> Result<Mpo> {
    let f = dvrs.len();
    if f == 0 {
        return Err(Error::Invalid("kinetic MPO needs at least one mode".into()));
    }
    let cores = dvrs
        .iter()
        .enumerate()
        .map(|(i, dvr)| {
            let d = dvr.len();
            let eye = DMatrix::identity(d, d);
            let t = &dvr.kinetic;
            if f == 1 {
                let mut c = MpoCore::zeros(1, d, 1);
                c.set_block(0, 0, t);
                c
            } else if i == 0 {
                let mut c = MpoCore::zeros(1, d, 2);
                c.set_block(0, 0, t);
                c.set_block(0, 1, &eye);
                c
            } else if i == f - 1 {
                let mut c = MpoCore::zeros(2, d, 1);
                c.set_block(0, 0, &eye);
                c.set_block(1, 0, t);
                c
            } else {
                let mut c = MpoCore::zeros(2, d, 2);
                c.set_block(0, 0, &eye);
                c.set_block(1, 0, t);
                c.set_block(1, 1, &eye);
                c
            }
        })
        .collect();
    Mpo::new(cores)
}

/// Kinetic plus potential, compressed at `rel_cutoff`.
pub fn hamiltonian_mpo(potential: &Mpo, dvrs: &[DvrBasis], rel_cutoff: f64) -> Result<Mpo> {
    mpo_add(&kinetic_mpo(dvrs)?, potential)?.compress(rel_cutoff)
}

/// Diagonal MPO of a function sampled on the full DVR product grid,
/// decomposed by sequential SVD with only a machine-precision cutoff.
pub fn exact_grid_mpo<F>(potential: F, dvrs: &[DvrBasis]) -> Result<Mpo>
where
    F: Fn(&[f64]) -> f64,
{
    exact_grid_mpo_guarded(potential, dvrs, GRID_GUARD)
}

pub fn exact_grid_mpo_guarded<F>(potential: F, dvrs: &[DvrBasis], guard: usize) -> Result<Mpo>
where
    F: Fn(&[f64]) -> f64,
{
    let f = dvrs.len();
    if f == 0 {
        return Err(Error::Invalid("grid MPO needs at least one mode".into()));
    }
    let dims: Vec<usize> = dvrs.iter().map(DvrBasis::len).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&t| t <= guard)
        .ok_or(Error::GuardExceeded {
            what: "grid potential tensor",
            size: dims.iter().fold(1usize, |a, &d| a.saturating_mul(d)),
            limit: guard,
        })?;
    let mut values = Vec::with_capacity(total);
    let mut idx = vec![0usize; f];
    let mut q = vec![0.0; f];
    for _ in 0..total {
        for i in 0..f {
            q[i] = dvrs[i].grid[idx[i]];
        }
        let v = potential(&q);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("potential at grid point {idx:?}")));
        }
        values.push(v);
        for i in (0..f).rev() {
            idx[i] += 1;
            if idx[i] < dims[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    // Sequential SVD, first site most significant; `rest` is row-major
    // `left × (remaining grid)`.
    let mut cores = Vec::with_capacity(f);
    let mut rest = values;
    let mut left = 1;
    for &d in &dims[..f - 1] {
        let cols = rest.len() / (left * d);
        let svd = svd_sorted(&DMatrix::from_row_slice(left * d, cols, &rest))?;
        let k = kept_rank(&svd.s, GRID_CUTOFF, usize::MAX);
        let mut core = MpoCore::zeros(left, d, k);
        for a in 0..left {
            for s in 0..d {
                for b in 0..k {
                    core.set(a, s, s, b, svd.u[(a * d + s, b)]);
                }
            }
        }
        cores.push(core);
        rest = (0..k)
            .flat_map(|b| {
                let sb = svd.s[b];
                svd.vt.row(b).iter().map(move |v| v * sb).collect::<Vec<_>>()
            })
            .collect();
        left = k;
    }
    let d = dims[f - 1];
    let mut core = MpoCore::zeros(left, d, 1);
    for a in 0..left {
        for s in 0..d {
            core.set(a, s, s, 0, rest[a * d + s]);
        }
    }
    cores.push(core);
    Mpo::new(cores)
}
