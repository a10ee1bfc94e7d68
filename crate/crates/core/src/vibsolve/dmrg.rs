//! Sweep eigensolver with penalty deflation of lower states.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{apply_local, extend_left, extend_right, operator_expectation, squared_expectation, Block, SparseSite};
use super::lanczos::lanczos_lowest;
use super::mps::{overlap_step, row_major, Mps};
use super::EigenResult;
use crate::error::{Error, Result};
use crate::linalg::{kept_rank, qr_positive, svd_sorted};
use crate::mpo::Mpo;
use crate::tensor::Core;
use crate::train::merge_cores;

/// Relative singular-value cutoff when a two-site block is split.
pub const STATE_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmrgSettings {
    /// Number of states `k`.
    pub states: usize,
    /// Bond cap `m`.
    pub max_bond: usize,
    pub max_sweeps: usize,
    /// Converged when the sweep energy changes by less than
    /// `tol·max(1, |E|)`.
    pub tol: f64,
    pub lanczos_tol: f64,
    pub krylov: usize,
    pub restarts: usize,
    /// Bond dimension of the random initial states (capped by `max_bond`).
    pub initial_bond: usize,
    /// Deflation weight; default 10× an upper bound on the spectral span.
    pub penalty: Option<f64>,
    pub seed: u64,
}

impl Default for DmrgSettings {
    fn default() -> Self {
        Self {
            states: 1,
            max_bond: 20,
            max_sweeps: 40,
            tol: 1e-10,
            lanczos_tol: 1e-10,
            krylov: 40,
            restarts: 50,
            initial_bond: 4,
            penalty: None,
            seed: 0,
        }
    }
}

/// `2‖H − cI‖_F` with `c = Tr H / D`, an upper bound on `λ_max − λ_min`.
pub fn span_bound(h: &Mpo) -> f64 {
    let mut tr = vec![1.0];
    let mut fro = DMatrix::from_element(1, 1, 1.0);
    let mut dim = 1.0;
    for w in h.cores() {
        let mut next = vec![0.0; w.right];
        let mut gram = DMatrix::zeros(w.right, w.right);
        for a in 0..w.left {
            for s in 0..w.d {
                for b in 0..w.right {
                    next[b] += tr[a] * w.get(a, s, s, b);
                }
            }
        }
        for a1 in 0..w.left {
            for a2 in 0..w.left {
                let c = fro[(a1, a2)];
                if c == 0.0 {
                    continue;
                }
                for s in 0..w.d {
                    for t in 0..w.d {
                        for b1 in 0..w.right {
                            let v1 = w.get(a1, s, t, b1);
                            if v1 == 0.0 {
                                continue;
                            }
                            for b2 in 0..w.right {
                                gram[(b1, b2)] += c * v1 * w.get(a2, s, t, b2);
                            }
                        }
                    }
                }
            }
        }
        tr = next;
        fro = gram;
        dim *= w.d as f64;
    }
    let c = tr[0] / dim;
    2.0 * (fro[(0, 0)] - dim * c * c).max(0.0).sqrt()
}

/// Left (`ol`) and right (`or`) overlap blocks `⟨Ψ_j|·|Ψ⟩` for one deflated state.
struct Deflated<'a> {
    state: &'a Mps,
    left: Vec<DMatrix<f64>>,
    right: Vec<DMatrix<f64>>,
}

/// `E'[a_j, a] = Σ A_j[a_j, σ, b_j]·A[a, σ, b]·E[b_j, b]`.
fn overlap_step_right(e: &DMatrix<f64>, bra: &Core, ket: &Core) -> DMatrix<f64> {
    let be = bra.left_matrix() * e;
    let be = DMatrix::from_row_slice(bra.left, bra.phys * ket.right, &row_major(&be));
    be * ket.right_matrix().transpose()
}

/// Projection `o[a, σ, b] = Σ L[a_j, a]·B_j[a_j, σ, b_j]·R[b_j, b]`.
fn project(l: &DMatrix<f64>, block: &[f64], phys: usize, r: &DMatrix<f64>) -> Vec<f64> {
    let (lj, rj) = (l.nrows(), r.nrows());
    let b = DMatrix::from_row_slice(lj, phys * rj, block);
    let t = l.transpose() * b;
    let t = DMatrix::from_row_slice(l.ncols() * phys, rj, &row_major(&t));
    row_major(&(t * r))
}

fn split(block: &[f64], l: usize, d1: usize, d2: usize, r: usize, max_bond: usize, move_right: bool) -> Result<(Core, Core)> {
    let theta = DMatrix::from_row_slice(l * d1, d2 * r, block);
    let svd = svd_sorted(&theta)?;
    let k = kept_rank(&svd.s, STATE_CUTOFF, max_bond.max(1));
    let norm: f64 = svd.s[..k].iter().map(|s| s * s).sum::<f64>().sqrt();
    let mut u = svd.u.columns(0, k).into_owned();
    let mut vt = svd.vt.rows(0, k).into_owned();
    for j in 0..k {
        let s = svd.s[j] / norm;
        if move_right {
            vt.row_mut(j).scale_mut(s);
        } else {
            u.column_mut(j).scale_mut(s);
        }
    }
    Ok((Core::from_left_matrix(&u, l, d1), Core::from_right_matrix(&vt, d2, r)))
}

struct Sweeper<'a> {
    sites: &'a [SparseSite],
    pairs: &'a [SparseSite],
    mps: Mps,
    left: Vec<Block>,
    right: Vec<Block>,
    deflated: Vec<Deflated<'a>>,
    weight: f64,
    settings: &'a DmrgSettings,
}

impl<'a> Sweeper<'a> {
    fn f(&self) -> usize {
        self.mps.sites()
    }

    /// Rebuilds all right blocks for a state with its center on site 0.
    fn prepare(&mut self) {
        let f = self.f();
        self.left[0] = Block::unit();
        self.right[f] = Block::unit();
        for i in (1..f).rev() {
            let a = self.mps.core(i);
            self.right[i] = extend_right(&self.right[i + 1], &self.sites[i], a, a);
        }
        for dj in &mut self.deflated {
            dj.left[0] = DMatrix::from_element(1, 1, 1.0);
            dj.right[f] = DMatrix::from_element(1, 1, 1.0);
            for i in (1..f).rev() {
                dj.right[i] = overlap_step_right(&dj.right[i + 1], dj.state.core(i), self.mps.core(i));
            }
        }
    }

    fn saturated(&self) -> bool {
        let dims = self.mps.dims();
        let bonds = self.mps.bond_dims();
        (1..self.f()).all(|k| {
            let left = dims[..k].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            let right = dims[k..].iter().fold(1usize, |a, &d| a.saturating_mul(d));
            bonds[k] >= self.settings.max_bond.min(left).min(right)
        })
    }

    /// Lowest eigenpair of the penalized local operator between blocks
    /// `left[lo]` and `right[hi]`.
    fn solve(&self, w: &SparseSite, lo: usize, hi: usize, x0: &[f64], proj: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let (l, r) = (&self.left[lo], &self.right[hi]);
        let weight = self.weight;
        let apply = |x: &[f64]| {
            let mut y = apply_local(l, w, r, x);
            for o in proj {
                let c = weight * crate::linalg::dot(o, x);
                crate::linalg::axpy(c, o, &mut y);
            }
            y
        };
        let s = self.settings;
        let out = lanczos_lowest(apply, x0, s.lanczos_tol, s.krylov, s.restarts)?;
        Ok((out.value, out.vector))
    }

    fn two_site(&mut self, i: usize, move_right: bool) -> Result<f64> {
        let (a, b) = (self.mps.core(i), self.mps.core(i + 1));
        let (l, d1, d2, r) = (a.left, a.phys, b.phys, b.right);
        let x0 = merge_cores(a, b);
        let proj: Vec<Vec<f64>> = self
            .deflated
            .iter()
            .map(|dj| {
                let blk = merge_cores(dj.state.core(i), dj.state.core(i + 1));
                project(&dj.left[i], &blk, d1 * d2, &dj.right[i + 2])
            })
            .collect();
        let (theta, x) = self.solve(&self.pairs[i], i, i + 2, &x0, &proj)?;
        let (ca, cb) = split(&x, l, d1, d2, r, self.settings.max_bond, move_right)?;
        self.mps.set_core(i, ca);
        self.mps.set_core(i + 1, cb);
        if move_right {
            self.mps.set_center(i + 1);
            self.grow_left(i);
        } else {
            self.mps.set_center(i);
            self.grow_right(i + 1);
        }
        Ok(theta)
    }

    fn one_site(&mut self, i: usize, move_right: bool) -> Result<f64> {
        let a = self.mps.core(i);
        let (l, d, r) = (a.left, a.phys, a.right);
        let proj: Vec<Vec<f64>> = self
            .deflated
            .iter()
            .map(|dj| project(&dj.left[i], &dj.state.core(i).data, d, &dj.right[i + 1]))
            .collect();
        let (theta, x) = self.solve(&self.sites[i], i, i + 1, &a.data.clone(), &proj)?;
        let core = Core {
            left: l,
            phys: d,
            right: r,
            data: x,
        };
        if move_right && i + 1 < self.f() {
            let (q, rr) = qr_positive(&core.left_matrix());
            let next = self.mps.core(i + 1);
            let m = rr * next.right_matrix();
            let next = Core::from_right_matrix(&m, next.phys, next.right);
            self.mps.set_core(i, Core::from_left_matrix(&q, l, d));
            self.mps.set_core(i + 1, next);
            self.mps.set_center(i + 1);
            self.grow_left(i);
        } else if !move_right && i > 0 {
            let (q, rr) = qr_positive(&core.right_matrix().transpose());
            let prev = self.mps.core(i - 1);
            let m = prev.left_matrix() * rr.transpose();
            let prev = Core::from_left_matrix(&m, prev.left, prev.phys);
            self.mps.set_core(i, Core::from_right_matrix(&q.transpose(), d, r));
            self.mps.set_core(i - 1, prev);
            self.mps.set_center(i - 1);
            self.grow_right(i);
        } else {
            self.mps.set_core(i, core);
            self.mps.set_center(i);
        }
        Ok(theta)
    }

    /// `left[i + 1]` from `left[i]` and the updated core `i`.
    fn grow_left(&mut self, i: usize) {
        let a = self.mps.core(i);
        self.left[i + 1] = extend_left(&self.left[i], &self.sites[i], a, a);
        for dj in &mut self.deflated {
            dj.left[i + 1] = overlap_step(&dj.left[i], dj.state.core(i), a);
        }
    }

    /// `right[i]` from `right[i + 1]` and the updated core `i`.
    fn grow_right(&mut self, i: usize) {
        let a = self.mps.core(i);
        self.right[i] = extend_right(&self.right[i + 1], &self.sites[i], a, a);
        for dj in &mut self.deflated {
            dj.right[i] = overlap_step_right(&dj.right[i + 1], dj.state.core(i), a);
        }
    }

    /// One left-to-right and right-to-left pass; returns the last local value.
    fn sweep(&mut self) -> Result<f64> {
        self.prepare();
        let f = self.f();
        let mut theta = f64::NAN;
        if f >= 2 && !self.saturated() {
            for i in 0..f - 1 {
                theta = self.two_site(i, true)?;
            }
            for i in (0..f - 1).rev() {
                theta = self.two_site(i, false)?;
            }
        } else {
            for i in 0..f {
                theta = self.one_site(i, true)?;
            }
            for i in (0..f).rev() {
                theta = self.one_site(i, false)?;
            }
        }
        Ok(theta)
    }
}

/// Lowest `k` eigenstates of `h`, found one after another; each later state
/// minimizes `⟨H⟩ + w·Σ_j |⟨Ψ_j|Ψ⟩|²` against the ones already found.
pub fn dmrg_states(h: &Mpo, settings: &DmrgSettings) -> Result<EigenResult> {
    if settings.states == 0 || settings.max_bond == 0 || settings.max_sweeps == 0 {
        return Err(Error::Invalid("states, max_bond and max_sweeps must be positive".into()));
    }
    h.validate()?;
    let f = h.sites();
    let dims = h.dims();
    let sites = SparseSite::sites_of(h);
    let pairs: Vec<SparseSite> = (0..f.saturating_sub(1)).map(|i| SparseSite::merged(h.core(i), h.core(i + 1))).collect();
    let weight = match settings.penalty {
        Some(w) => w,
        None => 10.0 * span_bound(h),
    };
    if !weight.is_finite() {
        return Err(Error::NonFinite("deflation weight".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut found: Vec<Mps> = Vec::new();
    let mut result = EigenResult::default();
    for _ in 0..settings.states {
        let start = Mps::random(&dims, settings.initial_bond.min(settings.max_bond), &mut rng)?;
        let deflated = found
            .iter()
            .map(|s| Deflated {
                state: s,
                left: vec![DMatrix::zeros(0, 0); f + 1],
                right: vec![DMatrix::zeros(0, 0); f + 1],
            })
            .collect();
        let mut sw = Sweeper {
            sites: &sites,
            pairs: &pairs,
            mps: start,
            left: vec![Block::unit(); f + 1],
            right: vec![Block::unit(); f + 1],
            deflated,
            weight,
            settings,
        };
        let mut prev = f64::INFINITY;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < settings.max_sweeps {
            let e = sw.sweep()?;
            sweeps += 1;
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("sweep energy of state {}", found.len())));
            }
            if (prev - e).abs() < settings.tol * e.abs().max(1.0) {
                converged = true;
                break;
            }
            prev = e;
        }
        let mut mps = sw.mps;
        mps.normalize();
        let energy = operator_expectation(&sites, mps.cores(), mps.cores());
        let variance = squared_expectation(&sites, mps.cores()) - energy * energy;
        result.energies.push(energy);
        result.converged.push(converged);
        result.variances.push(variance);
        result.sweeps.push(sweeps);
        result.bond_dims.push(mps.bond_dims());
        found.push(mps);
    }
    result.states = found;
    result.sort();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{build_ho_dvr, exact_grid_mpo, hamiltonian_mpo, DvrBasis};
    use crate::potentials::sop::{coupled_anharmonic, AnharmonicParams};
    use crate::vibsolve::{dense_eigs, dense_hamiltonian, overlap};

    fn anharmonic(d: usize) -> (Mpo, Vec<DvrBasis>) {
        let pot = coupled_anharmonic(3, &AnharmonicParams::reference3()).unwrap();
        let dvrs: Vec<DvrBasis> = [1.0, 1.3, 1.7].iter().map(|&w| build_ho_dvr(d, w, 0.0).unwrap()).collect();
        let v = exact_grid_mpo(|q| pot.value(q).unwrap(), &dvrs).unwrap();
        (hamiltonian_mpo(&v, &dvrs, 1e-13).unwrap(), dvrs)
    }

    fn separable() -> Mpo {
        let dvrs: Vec<DvrBasis> = [1.0, 1.6].iter().map(|&w| build_ho_dvr(8, w, 0.0).unwrap()).collect();
        let v = exact_grid_mpo(|q| 0.5 * q[0] * q[0] + 1.28 * q[1] * q[1] + 0.05 * q[0].powi(4), &dvrs).unwrap();
        hamiltonian_mpo(&v, &dvrs, 1e-13).unwrap()
    }

    fn settings(states: usize, max_bond: usize) -> DmrgSettings {
        DmrgSettings {
            states,
            max_bond,
            seed: 7,
            ..DmrgSettings::default()
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn separable_states_match_the_dense_spectrum() {
        let h = separable();
        let dense = dense_eigs(&dense_hamiltonian(&h).unwrap(), 3).unwrap();
        let out = dmrg_states(&h, &settings(3, 10)).unwrap();
        assert!(out.all_converged());
        for k in 0..3 {
            assert!(rel(out.energies[k], dense.energies[k]) < 1e-8, "{k}: {} vs {}", out.energies[k], dense.energies[k]);
        }
    }

    #[test]
    fn coupled_model_matches_the_dense_oracle() {
        let (h, _) = anharmonic(5);
        let dense = dense_eigs(&dense_hamiltonian(&h).unwrap(), 6).unwrap();
        let out = dmrg_states(&h, &settings(6, 25)).unwrap();
        assert!(rel(out.energies[0], dense.energies[0]) < 1e-8);
        for k in 0..6 {
            assert!(rel(out.energies[k], dense.energies[k]) < 1e-6, "{k}: {} vs {}", out.energies[k], dense.energies[k]);
            assert!(out.energies[k] >= dense.energies[k] - 1e-10);
            assert!(out.variances[k] >= -1e-10 && out.variances[k] < 1e-8);
        }
        for i in 0..6 {
            assert!((out.states[i].norm() - 1.0).abs() < 1e-10);
            for j in 0..i {
                assert!(overlap(&out.states[i], &out.states[j]).unwrap().abs() < 1e-6);
            }
        }
    }

    #[test]
    fn diagonal_operator_ground_state_is_its_smallest_entry() {
        let dvrs: Vec<DvrBasis> = (0..3).map(|_| build_ho_dvr(4, 1.0, 0.0).unwrap()).collect();
        let pot = |q: &[f64]| (q[0] - 0.4).powi(2) + q[0] * q[1] + (q[2] + 0.2 * q[1]).powi(2) + 0.1 * q[1].powi(4);
        let v = exact_grid_mpo(pot, &dvrs).unwrap();
        let mut lowest = f64::INFINITY;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    lowest = lowest.min(pot(&[dvrs[0].grid[a], dvrs[1].grid[b], dvrs[2].grid[c]]));
                }
            }
        }
        let out = dmrg_states(&v, &settings(1, 4)).unwrap();
        assert!((out.energies[0] - lowest).abs() < 1e-10 * lowest.abs().max(1.0), "{} vs {lowest}", out.energies[0]);
    }

    #[test]
    fn ground_energy_does_not_rise_across_sweeps() {
        let (h, _) = anharmonic(5);
        let mut last = f64::INFINITY;
        for sweeps in 1..=5 {
            let s = DmrgSettings {
                max_sweeps: sweeps,
                tol: 0.0,
                ..settings(1, 25)
            };
            let e = dmrg_states(&h, &s).unwrap().energies[0];
            assert!(e <= last + 1e-12, "sweep {sweeps}: {e} after {last}");
            last = e;
        }
    }

    #[test]
    fn runs_are_deterministic_and_report_non_convergence() {
        let (h, _) = anharmonic(4);
        let s = DmrgSettings {
            max_sweeps: 1,
            ..settings(2, 3)
        };
        let a = dmrg_states(&h, &s).unwrap();
        let b = dmrg_states(&h, &s).unwrap();
        assert_eq!(a.energies, b.energies);
        assert_eq!(a.converged, vec![false, false]);
        assert!(a.bond_dims.iter().all(|b| b.iter().all(|&m| m <= 3)));
    }

    #[test]
    fn single_mode_problem_is_solved() {
        let dvr = build_ho_dvr(12, 1.0, 0.0).unwrap();
        let v = exact_grid_mpo(|q| 0.5 * q[0] * q[0], std::slice::from_ref(&dvr)).unwrap();
        let h = hamiltonian_mpo(&v, std::slice::from_ref(&dvr), 1e-13).unwrap();
        let out = dmrg_states(&h, &settings(3, 5)).unwrap();
        for k in 0..3 {
            assert!((out.energies[k] - (k as f64 + 0.5)).abs() < 1e-8);
        }
    }

    #[test]
    fn span_bound_covers_the_spectrum() {
        let (h, _) = anharmonic(4);
        let all = dense_eigs(&dense_hamiltonian(&h).unwrap(), 64).unwrap();
        assert!(span_bound(&h) >= all.energies[63] - all.energies[0]);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let h = separable();
        assert!(dmrg_states(&h, &settings(0, 4)).is_err());
        assert!(dmrg_states(&h, &settings(1, 0)).is_err());
    }
}
