//! DMRG-style sweeps over the train with the basis held fixed.

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::design::AugmentedDesign;
use super::env::{Dot, EnvironmentCache};
use super::local::{solve_cg, CgSettings, LocalProblem};
use super::split::{merge_cores, truncate_split, Direction};
use crate::error::{Error, Result};
use crate::model::TensorTrain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Cg,
    Grad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub dot: Dot,
    pub solver: Solver,
    pub max_bond: usize,
    pub cg: CgSettings,
    /// Adam steps per local update when `solver = grad`.
    pub grad_steps: usize,
    pub grad: AdamConfig,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            dot: Dot::One,
            solver: Solver::Cg,
            max_bond: 14,
            cg: CgSettings::default(),
            grad_steps: 10,
            grad: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    /// Dot actually used (two-dot falls back to one-dot once bonds saturate).
    pub dot: Dot,
    /// Training loss after each local update, in update order.
    pub site_losses: Vec<f64>,
    /// Total squared singular values dropped by two-site splits.
    pub discarded: f64,
    pub cg_iterations: usize,
    pub cg_unconverged: usize,
}

impl SweepReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.site_losses.last().copied()
    }
}

/// Whether every internal bond already has the largest dimension allowed by
/// `max_bond` and the physical dimensions on either side.
pub fn bonds_saturated(tt: &TensorTrain, max_bond: usize) -> bool {
    let n = tt.phys();
    let f = tt.sites();
    let bonds = tt.bond_dims();
    (1..f).all(|k| {
        let cap = max_bond
            .min(n.saturating_pow(k as u32))
            .min(n.saturating_pow((f - k) as u32));
        bonds[k] >= cap
    })
}

/// One full left→right→left pass. The train is brought to canonical center
/// 0 first if needed and ends with its center at 0.
pub fn sweep(tt: &mut TensorTrain, design: &AugmentedDesign, settings: &SweepSettings) -> Result<SweepReport> {
    if design.modes() != tt.sites() || design.n_basis() != tt.phys() {
        return Err(Error::Invalid("design does not match the train".into()));
    }
    if settings.max_bond == 0 {
        return Err(Error::Invalid("max_bond must be positive".into()));
    }
    if tt.center() != Some(0) {
        tt.canonicalize_in_place(0)?;
    }
    tt.set_max_bond(settings.max_bond);
    let two = settings.dot == Dot::Two && tt.sites() > 1 && !bonds_saturated(tt, settings.max_bond);
    let mut report = SweepReport {
        dot: if two { Dot::Two } else { Dot::One },
        site_losses: Vec::new(),
        discarded: 0.0,
        cg_iterations: 0,
        cg_unconverged: 0,
    };
    if two {
        sweep_two(tt, design, settings, &mut report)?;
    } else {
        sweep_one(tt, design, settings, &mut report)?;
    }
    Ok(report)
}

fn local_update(
    problem: &LocalProblem<'_>,
    x: &mut [f64],
    settings: &SweepSettings,
    report: &mut SweepReport,
) -> Result<()> {
    match settings.solver {
        Solver::Cg => {
            let out = solve_cg(problem, x, &settings.cg)?;
            report.cg_iterations += out.iterations;
            if !out.converged {
                report.cg_unconverged += 1;
            }
        }
        Solver::Grad => {
            let mut state = AdamState::new(x.len());
            for _ in 0..settings.grad_steps {
                let g = problem.gradient(x);
                state.step(x, &g, &settings.grad);
            }
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("local update".into()));
    }
    Ok(())
}

fn sweep_one(
    tt: &mut TensorTrain,
    design: &AugmentedDesign,
    settings: &SweepSettings,
    report: &mut SweepReport,
) -> Result<()> {
    let f = tt.sites();
    let mut env = EnvironmentCache::build(design, tt, 0, Dot::One)?;
    let optimize = |tt: &mut TensorTrain, env: &EnvironmentCache, i: usize, report: &mut SweepReport| {
        let problem = LocalProblem::new(design, env, i, Dot::One)?;
        let mut x = tt.core(i).data.clone();
        local_update(&problem, &mut x, settings, report)?;
        report.site_losses.push(problem.loss(&x));
        tt.core_mut(i).data = x;
        Ok::<_, Error>(())
    };
    for i in 0..f {
        optimize(tt, &env, i, report)?;
        if i + 1 < f {
            tt.shift_left_to_right(i);
            tt.set_center(Some(i + 1));
            env.extend_left(design, tt, i);
        }
    }
    for i in (0..f.saturating_sub(1)).rev() {
        tt.shift_right_to_left(i + 1);
        tt.set_center(Some(i));
        env.extend_right(design, tt, i + 1);
        optimize(tt, &env, i, report)?;
    }
    Ok(())
}

fn sweep_two(
    tt: &mut TensorTrain,
    design: &AugmentedDesign,
    settings: &SweepSettings,
    report: &mut SweepReport,
) -> Result<()> {
    let f = tt.sites();
    let n = tt.phys();
    let mut env = EnvironmentCache::build(design, tt, 0, Dot::Two)?;
    let optimize = |tt: &mut TensorTrain, env: &EnvironmentCache, i: usize, dir: Direction, report: &mut SweepReport| {
        let problem = LocalProblem::new(design, env, i, Dot::Two)?;
        let (l, r) = (tt.core(i).left, tt.core(i + 1).right);
        let mut block = merge_cores(tt.core(i), tt.core(i + 1));
        local_update(&problem, &mut block, settings, report)?;
        let split = truncate_split(&block, l, n, r, settings.max_bond, dir)?;
        report.discarded += split.discarded;
        report.site_losses.push(problem.loss(&merge_cores(&split.left, &split.right)));
        tt.set_core(i, split.left);
        tt.set_core(i + 1, split.right);
        tt.set_center(Some(match dir {
            Direction::Right => i + 1,
            Direction::Left => i,
        }));
        Ok::<_, Error>(())
    };
    for i in 0..f - 1 {
        optimize(tt, &env, i, Direction::Right, report)?;
        if i + 2 < f {
            env.extend_left(design, tt, i);
        }
    }
    for i in (0..f - 1).rev() {
        if i + 2 < f {
            env.extend_right(design, tt, i + 2);
        }
        optimize(tt, &env, i, Direction::Left, report)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelState;
    use crate::potentials::Record;
    use crate::testutil::{random_batch, random_model, rng};
    use nalgebra::{DMatrix, DVector};

    /// Records whose energies and forces come from `teacher`.
    fn teacher_batch(teacher: &ModelState, count: usize, seed: u64) -> Vec<Record> {
        random_batch(teacher.n(), count, seed)
            .into_iter()
            .map(|r| {
                let (v, f) = teacher.energy_and_force(&r.x).unwrap();
                Record { x: r.x, energy: v, force: f }
            })
            .collect()
    }

    fn cg_settings(dot: Dot, max_bond: usize) -> SweepSettings {
        SweepSettings {
            dot,
            max_bond,
            cg: CgSettings {
                rel_tol: 1e-12,
                max_iter: Some(2000),
            },
            ..SweepSettings::default()
        }
    }

    #[test]
    fn one_dot_cg_never_increases_the_loss() {
        let model = random_model(4, 4, 4, 3, 1);
        let batch = random_batch(4, 40, 2);
        let d = AugmentedDesign::build(&batch, &model).unwrap();
        let mut tt = model.tt().clone();
        let mut prev = d.loss(&tt).0;
        for _ in 0..3 {
            let rep = sweep(&mut tt, &d, &cg_settings(Dot::One, 3)).unwrap();
            assert_eq!(rep.dot, Dot::One);
            for &l in &rep.site_losses {
                assert!(l <= prev * (1.0 + 1e-10) + 1e-14, "{l} > {prev}");
                prev = l;
            }
        }
        assert!((d.loss(&tt).0 - prev).abs() < 1e-9 * prev.max(1e-12));
    }

    #[test]
    fn sweep_ends_canonical_at_the_first_site() {
        let model = random_model(4, 4, 4, 3, 3);
        let d = AugmentedDesign::build(&random_batch(4, 20, 4), &model).unwrap();
        for dot in [Dot::One, Dot::Two] {
            let mut tt = model.tt().clone();
            sweep(&mut tt, &d, &cg_settings(dot, 4)).unwrap();
            assert_eq!(tt.center(), Some(0));
            assert!(tt.gauge_error().unwrap() < 1e-10);
            assert!(tt.current_max_bond() <= 4);
        }
    }

    #[test]
    fn two_dot_on_two_modes_reaches_the_dense_optimum() {
        // With f = 2 and M_max ≥ N the train spans every N×N weight matrix, so
        // one two-site solve equals ordinary least squares on the full tensor.
        let nb = 4;
        let model = random_model(2, 2, nb, 1, 5);
        let d = AugmentedDesign::build(&random_batch(2, 30, 6), &model).unwrap();
        let rows = d.len();
        let phi = DMatrix::from_fn(rows, nb * nb, |p, k| d.row(0, p)[k / nb] * d.row(1, p)[k % nb]);
        let y = DVector::from_column_slice(d.targets());
        let w = (phi.transpose() * &phi).cholesky().unwrap().solve(&(phi.transpose() * &y));
        let resid = &phi * &w - &y;
        let optimum = 0.5 * resid.norm_squared() / d.points() as f64;

        let mut tt = model.tt().clone();
        let rep = sweep(&mut tt, &d, &cg_settings(Dot::Two, nb)).unwrap();
        assert_eq!(rep.dot, Dot::Two);
        let loss = d.loss(&tt).0;
        assert!((loss - optimum).abs() < 1e-8 * optimum, "{loss} vs {optimum}");
        assert!(rep.discarded < 1e-20);
    }

    #[test]
    fn one_dot_recovers_a_representable_teacher() {
        let teacher = random_model(3, 3, 4, 2, 7);
        let batch = teacher_batch(&teacher, 60, 8);
        let mut student = teacher.clone();
        let mut r = rng(9);
        let fresh = TensorTrain::random(3, 4, &[2, 2], 0.3, &mut r).unwrap();
        student.set_tt(fresh).unwrap();
        let d = AugmentedDesign::build(&batch, &student).unwrap();
        let mut tt = student.tt().clone();
        for _ in 0..30 {
            sweep(&mut tt, &d, &cg_settings(Dot::One, 2)).unwrap();
        }
        assert!(d.loss(&tt).0 < 1e-14, "{}", d.loss(&tt).0);
    }

    #[test]
    fn two_dot_grows_bonds_then_switches_to_one_dot() {
        let teacher = random_model(3, 3, 3, 3, 10);
        let batch = teacher_batch(&teacher, 50, 11);
        let mut r = rng(12);
        let mut tt = TensorTrain::random(3, 3, &[1, 1], 0.3, &mut r).unwrap();
        let d = AugmentedDesign::build(&batch, &teacher).unwrap();
        let first = sweep(&mut tt, &d, &cg_settings(Dot::Two, 3)).unwrap();
        assert_eq!(first.dot, Dot::Two);
        assert_eq!(tt.bond_dims(), vec![1, 3, 3, 1]);
        let second = sweep(&mut tt, &d, &cg_settings(Dot::Two, 3)).unwrap();
        assert_eq!(second.dot, Dot::One);
    }

    #[test]
    fn gradient_solver_lowers_the_loss() {
        let model = random_model(3, 3, 4, 2, 13);
        let d = AugmentedDesign::build(&random_batch(3, 20, 14), &model).unwrap();
        let mut tt = model.tt().clone();
        let before = d.loss(&tt).0;
        let settings = SweepSettings {
            solver: Solver::Grad,
            grad_steps: 20,
            grad: AdamConfig::default().with_lr(1e-2),
            max_bond: 2,
            ..SweepSettings::default()
        };
        sweep(&mut tt, &d, &settings).unwrap();
        assert!(d.loss(&tt).0 < before);
    }

    #[test]
    fn single_mode_sweep_is_ordinary_least_squares() {
        let model = random_model(2, 1, 5, 1, 15);
        let d = AugmentedDesign::build(&random_batch(2, 25, 16), &model).unwrap();
        let phi = DMatrix::from_fn(d.len(), 5, |p, k| d.row(0, p)[k]);
        let y = DVector::from_column_slice(d.targets());
        let w = (phi.transpose() * &phi).cholesky().unwrap().solve(&(phi.transpose() * &y));
        let mut tt = model.tt().clone();
        sweep(&mut tt, &d, &cg_settings(Dot::Two, 4)).unwrap();
        for k in 0..5 {
            assert!((tt.core(0).get(0, k, 0) - w[k]).abs() < 1e-8 * w.amax());
        }
    }

    #[test]
    fn exact_encoding_survives_a_sweep() {
        use crate::model::encode_sop;
        use crate::potentials::sop::{OneModeFn, SopPotential, SopTerm};
        let pot = SopPotential::new(
            "quartic-pair",
            2,
            vec![
                SopTerm { coeff: 0.5, factors: vec![(0, OneModeFn::Monomial { power: 2 })] },
                SopTerm { coeff: 0.7, factors: vec![(1, OneModeFn::Monomial { power: 2 })] },
                SopTerm {
                    coeff: 0.1,
                    factors: vec![(0, OneModeFn::Monomial { power: 1 }), (1, OneModeFn::Monomial { power: 2 })],
                },
            ],
        )
        .unwrap();
        let model = encode_sop(&pot, 4).unwrap();
        let batch: Vec<Record> = random_batch(2, 30, 17)
            .into_iter()
            .map(|r| {
                let (v, f) = pot.value_and_force(&r.x).unwrap();
                Record { x: r.x, energy: v, force: f }
            })
            .collect();
        let d = AugmentedDesign::build(&batch, &model).unwrap();
        let mut tt = model.tt().clone();
        sweep(&mut tt, &d, &cg_settings(Dot::One, 4)).unwrap();
        assert!(d.loss(&tt).0 < 1e-20);
        for r in &batch {
            let q = model.latent(&r.x).unwrap();
            let rows = model.basis().eval(&q).unwrap();
            assert!((tt.evaluate_rows(&rows) - model.tt().evaluate_rows(&rows)).abs() < 1e-9);
        }
    }
}
