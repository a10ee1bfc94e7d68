//! Exact encoding of sum-of-products potentials.
//!
//! Every distinct one-mode factor becomes an explicit basis function and the
//! train is the usual finite-state construction: each internal bond carries
//! an "identity so far" channel, one channel per term that is still open, and
//! a "done" channel, keeping only the channels that some term needs.

use super::{BasisEntry, BasisFamily, BasisKind, Coordinator, ModelState, TensorTrain, Units};
use crate::error::{Error, Result};
use crate::potentials::sop::{OneModeFn, SopPotential};
use crate::tensor::Core;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Channel {
    Identity,
    Open(usize),
    Done,
}

/// Builds a model that reproduces `sop` exactly with `basis_budget` functions
/// per mode. The coordinator is the potential's rotation (identity if none).
pub fn encode_sop(sop: &SopPotential, basis_budget: usize) -> Result<ModelState> {
    sop.validate()?;
    let f = sop.n;
    let coordinator = match sop.rotation_matrix() {
        Some(r) => Coordinator::new(r)?,
        None => Coordinator::identity(f, f)?,
    };

    // Distinct non-constant factors per mode; slot 0 is the constant.
    let mut library: Vec<Vec<OneModeFn>> = vec![Vec::new(); f];
    for term in &sop.terms {
        for &(mode, func) in &term.factors {
            if !func.is_constant() && !library[mode].contains(&func) {
                library[mode].push(func);
            }
        }
    }
    for (mode, funcs) in library.iter().enumerate() {
        if funcs.len() + 1 > basis_budget {
            return Err(Error::BasisBudget {
                mode,
                needed: funcs.len() + 1,
                budget: basis_budget,
            });
        }
    }
    let slot = |mode: usize, func: &OneModeFn| -> usize {
        if func.is_constant() {
            0
        } else {
            1 + library[mode].iter().position(|g| g == func).expect("registered")
        }
    };

    let mut entries = Vec::with_capacity(f * basis_budget);
    for funcs in &library {
        for rho in 0..basis_budget {
            let kind = match rho {
                0 => BasisKind::Constant,
                r if r <= funcs.len() => BasisKind::Custom { func: funcs[r - 1] },
                r => BasisKind::standard(r, basis_budget),
            };
            entries.push(BasisEntry {
                kind,
                weight: 1.0,
                bias: 0.0,
                reference: vec![0.0; f],
            });
        }
    }
    let basis = BasisFamily::from_entries(f, basis_budget, entries, &coordinator)?;

    if sop.terms.is_empty() {
        let tt = TensorTrain::constant(f, basis_budget, 0.0)?;
        return ModelState::new(coordinator, basis, tt, Units::default());
    }

    // (first, last) touched site per term; constant terms close at site 0.
    let spans: Vec<(usize, usize)> = sop
        .terms
        .iter()
        .map(|t| {
            let sites = t
                .factors
                .iter()
                .filter(|(_, g)| !g.is_constant())
                .map(|(m, _)| *m);
            let first = sites.clone().min().unwrap_or(0);
            let last = sites.max().unwrap_or(0);
            (first, last)
        })
        .collect();

    // Channels on bond b, the bond to the right of site b.
    let bond_channels = |b: usize| -> Vec<Channel> {
        let mut ch = Vec::new();
        if spans.iter().any(|&(first, _)| first > b) {
            ch.push(Channel::Identity);
        }
        for (t, &(first, last)) in spans.iter().enumerate() {
            if first <= b && b < last {
                ch.push(Channel::Open(t));
            }
        }
        if spans.iter().any(|&(_, last)| last <= b) {
            ch.push(Channel::Done);
        }
        ch
    };

    let factor_slot = |t: usize, site: usize| -> usize {
        sop.terms[t]
            .factors
            .iter()
            .find(|(m, _)| *m == site)
            .map(|(m, g)| slot(*m, g))
            .unwrap_or(0)
    };

    let mut cores = Vec::with_capacity(f);
    for site in 0..f {
        let left = if site == 0 {
            vec![Channel::Identity]
        } else {
            bond_channels(site - 1)
        };
        let right = if site + 1 == f {
            vec![Channel::Done]
        } else {
            bond_channels(site)
        };
        let mut core = Core::zeros(left.len(), basis_budget, right.len());
        let mut add = |l: Channel, r: Channel, rho: usize, v: f64| {
            if let (Some(li), Some(ri)) = (
                left.iter().position(|&c| c == l),
                right.iter().position(|&c| c == r),
            ) {
                let idx = core.idx(li, rho, ri);
                core.data[idx] += v;
            }
        };
        add(Channel::Identity, Channel::Identity, 0, 1.0);
        if site > 0 {
            add(Channel::Done, Channel::Done, 0, 1.0);
        }
        for (t, &(first, last)) in spans.iter().enumerate() {
            let coeff = sop.terms[t].coeff;
            let rho = factor_slot(t, site);
            if first == site && last == site {
                add(Channel::Identity, Channel::Done, rho, coeff);
            } else if first == site {
                add(Channel::Identity, Channel::Open(t), rho, coeff);
            } else if first < site && site < last {
                add(Channel::Open(t), Channel::Open(t), rho, 1.0);
            } else if last == site && first < site {
                add(Channel::Open(t), Channel::Done, rho, 1.0);
            }
        }
        cores.push(core);
    }
    let max_bond = cores.iter().map(|c| c.right).max().unwrap_or(1);
    let tt = TensorTrain::new(cores, max_bond)?;
    ModelState::new(coordinator, basis, tt, Units::default())
}
