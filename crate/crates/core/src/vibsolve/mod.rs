//! Vibrational eigenvalues of a Hamiltonian MPO.

mod dense;
mod dmrg;
mod env;
mod lanczos;
mod mps;
mod report;

pub use dense::{dense_eigs, dense_hamiltonian, dense_hamiltonian_guarded, DENSE_ROWS};
pub use dmrg::{dmrg_states, span_bound, DmrgSettings, STATE_CUTOFF};
pub use lanczos::{lanczos_lowest, LanczosOutcome};
pub use mps::{overlap, Mps};
pub use report::{level_report, LevelReport, LevelRow, LEVEL_HEADER};

use serde::Serialize;

#[derive(Clone, Debug, Default, Serialize)]
pub struct EigenResult {
    /// Ascending.
    pub energies: Vec<f64>,
    pub converged: Vec<bool>,
    /// `⟨H²⟩ − ⟨H⟩²` per state.
    pub variances: Vec<f64>,
    pub sweeps: Vec<usize>,
    /// Final bond dimensions per state, boundaries included; empty for the
    /// dense solver.
    pub bond_dims: Vec<Vec<usize>>,
    #[serde(skip)]
    pub states: Vec<Mps>,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Orders every per-state field by energy.
    pub(crate) fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        fn pick<T: Clone>(v: &[T], order: &[usize]) -> Vec<T> {
            if v.is_empty() {
                return Vec::new();
            }
            order.iter().map(|&k| v[k].clone()).collect()
        }
        self.energies = pick(&self.energies, &order);
        self.converged = pick(&self.converged, &order);
        self.variances = pick(&self.variances, &order);
        self.sweeps = pick(&self.sweeps, &order);
        self.bond_dims = pick(&self.bond_dims, &order);
        self.states = pick(&self.states, &order);
    }
}
