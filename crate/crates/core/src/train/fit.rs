//! The phase-scheduled training loop.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::design::AugmentedDesign;
use super::grads::{basis_gradients, compute_loss, LossParts};
use super::plan::{Phase, SweepPlan};
use super::stiefel::StiefelAdam;
use super::sweep::sweep;
use super::trace::{TraceRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::potentials::Record;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Adam settings for the basis weights and biases.
    pub basis: AdamConfig,
    /// Riemannian Adam settings for the coordinator.
    pub coordinator: AdamConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpointing {
    pub every: usize,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub checkpoint: Option<Checkpointing>,
    /// Record wall time in the trace. Disable for byte-identical traces.
    pub record_time: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            optimizer: OptimizerConfig::default(),
            checkpoint: None,
            record_time: true,
        }
    }
}

/// Adam moments for `w`, `b` and `U`.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    weight: AdamState,
    bias: AdamState,
    coordinator: StiefelAdam,
}

impl OptimizerState {
    pub fn new(model: &ModelState) -> Self {
        let len = model.f() * model.n_basis();
        Self {
            weight: AdamState::new(len),
            bias: AdamState::new(len),
            coordinator: StiefelAdam::new(model.n(), model.f()),
        }
    }
}

/// Energy-only RMSE of `model` on `records`.
pub fn energy_rmse(model: &ModelState, records: &[Record]) -> Result<f64> {
    if records.is_empty() {
        return Ok(f64::NAN);
    }
    let mut s = 0.0;
    for r in records {
        let d = model.evaluate(&r.x)? - r.energy;
        s += d * d;
    }
    Ok((s / records.len() as f64).sqrt())
}

/// One pass of mini-batched Adam over the basis parameters and coordinator.
pub fn basis_epoch(
    model: &mut ModelState,
    shuffled: &mut [Record],
    phase: &Phase,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    shuffled.shuffle(rng);
    let total = shuffled.len();
    let batches = phase.minibatches.clamp(1, total);
    for k in 0..batches {
        let batch = &shuffled[k * total / batches..(k + 1) * total / batches];
        let (_, g) = basis_gradients(model, batch)?;
        if phase.train_basis {
            let (mut w, mut b): (Vec<f64>, Vec<f64>) =
                model.basis().entries().iter().map(|e| (e.weight, e.bias)).unzip();
            state.weight.step(&mut w, &g.weight, &cfg.basis);
            state.bias.step(&mut b, &g.bias, &cfg.basis);
            for ((pw, pb), (nw, nb)) in model.basis_mut().weights_mut().zip(w.into_iter().zip(b)) {
                *pw = nw;
                *pb = nb;
            }
        }
        if phase.train_coordinator {
            let next = state
                .coordinator
                .step(model.coordinator(), &g.coordinator, &cfg.coordinator)?;
            model.set_coordinator(next)?;
        } else {
            model.refresh_basis();
        }
    }
    Ok(())
}

fn diverged(epoch: usize, detail: String, last_good: &ModelState) -> Error {
    Error::Diverged {
        epoch,
        detail,
        last_good: Box::new(last_good.clone()),
    }
}

/// Runs every phase of `plan` and records one trace line per epoch.
pub fn fit(
    mut model: ModelState,
    train: &[Record],
    validation: &[Record],
    plan: &SweepPlan,
    opts: &FitOptions,
) -> Result<(ModelState, TrainTrace)> {
    plan.validate()?;
    let mut trace = TrainTrace::default();
    if plan.total_epochs() == 0 {
        return Ok((model, trace));
    }
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut state = OptimizerState::new(&model);
    let mut shuffled = train.to_vec();
    let mut last_good = model.clone();

    for phase in &plan.phases {
        let mut prev_loss: Option<f64> = None;
        for epoch in phase.start..phase.end {
            let step = run_epoch(&mut model, train, &mut shuffled, phase, epoch, &mut state, opts, &mut rng);
            let loss = match step.and_then(|_| compute_loss(&model, train)) {
                Ok(l) if l.is_finite() => l,
                Ok(l) => return Err(diverged(epoch, format!("training loss {}", l.total), &last_good)),
                Err(Error::NonFinite(what)) => return Err(diverged(epoch, what, &last_good)),
                Err(e) => return Err(e),
            };
            let val_rmse = energy_rmse(&model, validation)?;
            trace.push(record(epoch, &loss, val_rmse, &model, phase, &clock, opts.record_time));
            last_good = model.clone();
            if let Some(cp) = &opts.checkpoint {
                if cp.every > 0 && (epoch + 1) % cp.every == 0 {
                    model.save(&cp.path)?;
                }
            }
            if let (Some(tol), Some(prev)) = (phase.converge_tol, prev_loss) {
                if (prev - loss.total).abs() <= tol * prev.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            prev_loss = Some(loss.total);
        }
    }
    Ok((model, trace))
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    model: &mut ModelState,
    train: &[Record],
    shuffled: &mut [Record],
    phase: &Phase,
    epoch: usize,
    state: &mut OptimizerState,
    opts: &FitOptions,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if let Some(kind) = phase.sweep_at(epoch) {
        let design = AugmentedDesign::build(train, model)?;
        let mut tt = model.tt().clone();
        sweep(&mut tt, &design, &phase.sweep_settings(kind))?;
        model.set_tt(tt)?;
    }
    if phase.trains_basis() {
        let k = phase.lr_factor(epoch);
        let cfg = OptimizerConfig {
            basis: opts.optimizer.basis.with_lr(opts.optimizer.basis.lr * k),
            coordinator: opts.optimizer.coordinator.with_lr(opts.optimizer.coordinator.lr * k),
        };
        basis_epoch(model, shuffled, phase, state, &cfg, rng)?;
    }
    Ok(())
}

fn record(
    epoch: usize,
    loss: &LossParts,
    val_rmse: f64,
    model: &ModelState,
    phase: &Phase,
    clock: &Instant,
    timed: bool,
) -> TraceRecord {
    TraceRecord {
        epoch,
        loss: loss.total,
        loss_energy: loss.energy,
        loss_force: loss.force,
        val_rmse,
        bonds: model.tt().bond_dims(),
        phase: phase.label.clone(),
        seconds: if timed { clock.elapsed().as_secs_f64() } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_error;
    use crate::train::plan::{PhaseMode, SweepKind};
    use crate::testutil::{random_batch, random_model};

    fn short_plan() -> SweepPlan {
        SweepPlan::new(vec![
            Phase {
                label: "A".into(),
                start: 0,
                end: 6,
                mode: PhaseMode::Alternating,
                sweep: SweepKind::TwodotCg,
                sweep_period: 3,
                max_bond: 3,
                minibatches: 2,
                ..Phase::default()
            },
            Phase {
                label: "C".into(),
                start: 6,
                end: 9,
                mode: PhaseMode::OnedotCg,
                max_bond: 3,
                train_basis: false,
                train_coordinator: false,
                ..Phase::default()
            },
        ])
        .unwrap()
    }

    fn quiet() -> FitOptions {
        FitOptions {
            seed: 11,
            record_time: false,
            ..FitOptions::default()
        }
    }

    #[test]
    fn zero_epoch_plan_returns_the_model_untouched() {
        let model = random_model(3, 2, 4, 2, 1);
        let (out, trace) = fit(model.clone(), &random_batch(3, 10, 2), &[], &SweepPlan::default(), &quiet()).unwrap();
        assert_eq!(out, model);
        assert!(trace.is_empty());
    }

    #[test]
    fn runs_are_reproducible_bit_for_bit() {
        let model = random_model(3, 3, 4, 2, 3);
        let data = random_batch(3, 20, 4);
        let (a, ta) = fit(model.clone(), &data[..16], &data[16..], &short_plan(), &quiet()).unwrap();
        let (b, tb) = fit(model, &data[..16], &data[16..], &short_plan(), &quiet()).unwrap();
        assert_eq!(ta.to_csv(), tb.to_csv());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(ta.len(), 9);
        assert!(ta.records().iter().all(|r| r.val_rmse.is_finite()));
    }

    #[test]
    fn coordinator_stays_orthonormal_and_frozen_in_the_last_phase() {
        let model = random_model(4, 2, 4, 2, 5);
        let data = random_batch(4, 20, 6);
        let plan = short_plan();
        let (mid, _) = fit(
            model.clone(),
            &data,
            &[],
            &SweepPlan::new(vec![plan.phases[0].clone()]).unwrap(),
            &quiet(),
        )
        .unwrap();
        assert!(orthogonality_error(mid.coordinator().matrix()) < 1e-10);
        assert_ne!(mid.coordinator(), model.coordinator());
        let (end, _) = fit(model, &data, &[], &plan, &quiet()).unwrap();
        assert_eq!(end.coordinator(), mid.coordinator());
        assert_eq!(end.basis(), mid.basis());
    }

    #[test]
    fn final_cg_phase_does_not_increase_the_loss() {
        let model = random_model(3, 3, 4, 2, 7);
        let data = random_batch(3, 25, 8);
        let (_, trace) = fit(model, &data, &[], &short_plan(), &quiet()).unwrap();
        let tail: Vec<f64> = trace.records()[6..].iter().map(|r| r.loss).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }

    #[test]
    fn nan_targets_abort_with_the_last_good_model() {
        let model = random_model(2, 2, 3, 2, 9);
        let mut data = random_batch(2, 10, 10);
        data[3].energy = f64::NAN;
        match fit(model.clone(), &data, &[], &short_plan(), &quiet()) {
            Err(Error::Diverged { epoch, last_good, .. }) => {
                assert_eq!(epoch, 0);
                assert_eq!(*last_good, model);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoints_are_written_on_schedule() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let opts = FitOptions {
            checkpoint: Some(Checkpointing { every: 4, path: path.clone() }),
            ..quiet()
        };
        let model = random_model(2, 2, 3, 2, 12);
        let data = random_batch(2, 10, 13);
        fit(model, &data, &[], &short_plan(), &opts).unwrap();
        assert!(ModelState::load(&path).is_ok());
    }
}
