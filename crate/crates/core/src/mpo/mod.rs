//! Conversion of the model into operators on a DVR product grid.

pub mod build;
pub mod dvr;
pub mod integrals;
pub mod ops;

pub use build::{
    contract_cores, exact_grid_mpo, exact_grid_mpo_guarded, hamiltonian_mpo, kinetic_mpo, potential_mpo,
    ContractStats, GRID_CUTOFF, GRID_GUARD,
};
pub use dvr::{build_ho_dvr, build_ho_dvr_with_hbar, DvrBasis};
pub use integrals::{one_mode_integrals, one_mode_integrals_exact, OneModeIntegrals};
pub use ops::{mpo_add, Mpo, MpoCore, MPO_SCHEMA};
