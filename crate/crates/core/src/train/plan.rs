//! Training schedules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::env::Dot;
use super::local::CgSettings;
use super::sweep::{Solver, SweepSettings};
use super::adam::AdamConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// Mini-batched Adam on `w`, `b` (and `U` if enabled); the train is fixed.
    BasisAdam,
    OnedotGrad,
    OnedotCg,
    TwodotGrad,
    TwodotCg,
    /// Basis Adam every epoch plus a sweep of kind `sweep` every
    /// `sweep_period` epochs, starting with the first epoch of the phase.
    Alternating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    OnedotGrad,
    OnedotCg,
    TwodotGrad,
    TwodotCg,
}

impl SweepKind {
    pub fn dot(self) -> Dot {
        match self {
            SweepKind::OnedotGrad | SweepKind::OnedotCg => Dot::One,
            SweepKind::TwodotGrad | SweepKind::TwodotCg => Dot::Two,
        }
    }

    pub fn solver(self) -> Solver {
        match self {
            SweepKind::OnedotGrad | SweepKind::TwodotGrad => Solver::Grad,
            SweepKind::OnedotCg | SweepKind::TwodotCg => Solver::Cg,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase {
    pub label: String,
    /// Epoch span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub mode: PhaseMode,
    /// Sweep kind used by `alternating`.
    pub sweep: SweepKind,
    pub sweep_period: usize,
    pub max_bond: usize,
    pub cg: CgSettings,
    /// Adam steps per local update for gradient sweeps.
    pub grad_steps: usize,
    pub grad_lr: f64,
    /// Number of mini-batches per basis epoch.
    pub minibatches: usize,
    pub train_basis: bool,
    pub train_coordinator: bool,
    /// Factors on the basis and coordinator learning rates at the first and
    /// last epoch of the phase, interpolated geometrically in between.
    pub lr_scale: [f64; 2],
    /// Ends the phase once the relative change of the training loss between
    /// consecutive epochs drops below this.
    pub converge_tol: Option<f64>,
}

impl Default for Phase {
    fn default() -> Self {
        Self {
            label: String::new(),
            start: 0,
            end: 0,
            mode: PhaseMode::BasisAdam,
            sweep: SweepKind::OnedotCg,
            sweep_period: 50,
            max_bond: 14,
            cg: CgSettings::default(),
            grad_steps: 50,
            grad_lr: 1e-2,
            minibatches: 5,
            train_basis: true,
            train_coordinator: true,
            lr_scale: [1.0, 1.0],
            converge_tol: None,
        }
    }
}

impl Phase {
    pub fn epochs(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    /// Sweep performed at `epoch`, if any.
    pub fn sweep_at(&self, epoch: usize) -> Option<SweepKind> {
        match self.mode {
            PhaseMode::BasisAdam => None,
            PhaseMode::OnedotGrad => Some(SweepKind::OnedotGrad),
            PhaseMode::OnedotCg => Some(SweepKind::OnedotCg),
            PhaseMode::TwodotGrad => Some(SweepKind::TwodotGrad),
            PhaseMode::TwodotCg => Some(SweepKind::TwodotCg),
            PhaseMode::Alternating => (epoch - self.start).is_multiple_of(self.sweep_period.max(1)).then_some(self.sweep),
        }
    }

    /// Learning-rate factor for `epoch`.
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        let [a, b] = self.lr_scale;
        let span = self.epochs().saturating_sub(1).max(1) as f64;
        let t = (epoch.saturating_sub(self.start) as f64 / span).min(1.0);
        a * (b / a).powf(t)
    }

    pub fn trains_basis(&self) -> bool {
        matches!(self.mode, PhaseMode::BasisAdam | PhaseMode::Alternating)
            && (self.train_basis || self.train_coordinator)
    }

    pub fn sweep_settings(&self, kind: SweepKind) -> SweepSettings {
        SweepSettings {
            dot: kind.dot(),
            solver: kind.solver(),
            max_bond: self.max_bond,
            cg: self.cg,
            grad_steps: self.grad_steps,
            grad: AdamConfig::default().with_lr(self.grad_lr),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub phases: Vec<Phase>,
}

impl SweepPlan {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let plan = Self { phases };
        plan.validate()?;
        Ok(plan)
    }

    /// Builds a plan from phases keyed by label, ordered by start epoch.
    pub fn from_named(named: BTreeMap<String, Phase>) -> Result<Self> {
        let mut phases: Vec<Phase> = named
            .into_iter()
            .map(|(label, mut p)| {
                if p.label.is_empty() {
                    p.label = label;
                }
                p
            })
            .collect();
        phases.sort_by_key(|p| (p.start, p.end));
        Self::new(phases)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for p in &self.phases {
            if p.end < p.start {
                return Err(Error::Invalid(format!("phase {:?} ends before it starts", p.label)));
            }
            if p.start < prev_end {
                return Err(Error::Invalid(format!("phase {:?} overlaps the previous phase", p.label)));
            }
            if p.max_bond == 0 {
                return Err(Error::Invalid(format!("phase {:?} has max_bond 0", p.label)));
            }
            if p.mode == PhaseMode::Alternating && p.sweep_period == 0 {
                return Err(Error::Invalid(format!("phase {:?} has sweep_period 0", p.label)));
            }
            if p.trains_basis() && p.minibatches == 0 {
                return Err(Error::Invalid(format!("phase {:?} has no mini-batches", p.label)));
            }
            if !(p.lr_scale.iter().all(|&x| x > 0.0 && x.is_finite())) {
                return Err(Error::Invalid(format!("phase {:?} needs positive lr_scale factors", p.label)));
            }
            if !(p.cg.rel_tol > 0.0) {
                return Err(Error::Invalid(format!("phase {:?} needs a positive CG tolerance", p.label)));
            }
            prev_end = p.end;
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.last().map_or(0, |p| p.end)
    }

    /// Three-phase schedule: alternating basis Adam and gradient one-dot
    /// sweeps for 1000 epochs, two-dot sweeps every 500 epochs up to epoch 16000 while
    /// the basis keeps training, then tight one-dot CG sweeps on a frozen
    /// basis.
    pub fn standard(max_bond: usize) -> Self {
        let loose = CgSettings {
            rel_tol: 1e-6,
            max_iter: None,
        };
        Self {
            phases: vec![
                Phase {
                    label: "A".into(),
                    start: 0,
                    end: 1000,
                    mode: PhaseMode::Alternating,
                    sweep: SweepKind::OnedotGrad,
                    sweep_period: 50,
                    max_bond,
                    cg: loose,
                    ..Phase::default()
                },
                Phase {
                    label: "B".into(),
                    start: 1000,
                    end: 16000,
                    mode: PhaseMode::Alternating,
                    sweep: SweepKind::TwodotCg,
                    sweep_period: 500,
                    max_bond,
                    cg: loose,
                    ..Phase::default()
                },
                Phase {
                    label: "C".into(),
                    start: 16000,
                    end: 16500,
                    mode: PhaseMode::OnedotCg,
                    max_bond,
                    cg: CgSettings::default(),
                    train_basis: false,
                    train_coordinator: false,
                    converge_tol: Some(1e-10),
                    ..Phase::default()
                },
            ],
        }
    }

    /// Same three phases with every span multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |e: usize| (e as f64 * factor).round() as usize;
        let mut phases = self.phases.clone();
        for p in &mut phases {
            p.start = s(p.start);
            p.end = s(p.end);
            if p.mode == PhaseMode::Alternating {
                p.sweep_period = s(p.sweep_period).max(1);
            }
        }
        Self { phases }
    }
}
