//! Metropolis–Hastings sampling from the inverted-potential density
//! `P(V) ∝ max((V_max + Δ − V)/(V_max + Δ), 0)`, truncated at `V_max`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, Provenance, Record, SplitSizes};
use super::sop::SopPotential;
use crate::error::{Error, Result};
use crate::model::Units;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub v_max: f64,
    pub delta: f64,
    /// Proposal standard deviation per mode; derived from the harmonic
    /// turning points when absent.
    pub step: Option<Vec<f64>>,
    /// Proposal width as a fraction of the harmonic turning-point length.
    pub step_fraction: f64,
    pub burn_in: usize,
    pub stride: usize,
    pub seed: u64,
    pub chains: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Consecutive rejections tolerated before giving up.
    pub reject_window: usize,
    pub units: Units,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            v_max: 17_000.0,
            delta: 500.0,
            step: None,
            step_fraction: 0.1,
            burn_in: 1000,
            stride: 10,
            seed: 0,
            chains: 1,
            train: 625,
            validation: 0,
            test: 0,
            reject_window: 10_000,
            units: Units::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Invalid("V_max and Δ must be positive".into()));
        }
        if self.stride == 0 || self.chains == 0 {
            return Err(Error::Invalid("stride and chain count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    /// Short SHA-256 of the canonical JSON form, recorded as provenance.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Sampling weight `max((V_max + Δ − V)/(V_max + Δ), 0)`.
pub fn pdf_weight(v: f64, config: &SamplerConfig) -> f64 {
    let top = config.v_max + config.delta;
    ((top - v) / top).max(0.0)
}

/// Target weight used by the chain: zero above `V_max`.
fn target_weight(v: f64, config: &SamplerConfig) -> f64 {
    if v > config.v_max || !v.is_finite() {
        0.0
    } else {
        pdf_weight(v, config)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SamplerStats {
    pub proposals: usize,
    pub accepted: usize,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Default proposal widths: `fraction · sqrt(2 V_max)/ω_a` with `ω_a` from
/// the Hessian diagonal at the minimum.
pub fn default_steps(pot: &SopPotential, config: &SamplerConfig) -> Result<Vec<f64>> {
    let freqs = pot.harmonic_frequencies()?;
    Ok(freqs
        .iter()
        .map(|&w| {
            let turning = if w > 0.0 {
                (2.0 * config.v_max).sqrt() / w
            } else {
                1.0
            };
            config.step_fraction * turning
        })
        .collect())
}

/// Runs the chain(s) and assembles a shuffled, split dataset.
pub fn metropolis_sample(pot: &SopPotential, config: &SamplerConfig) -> Result<(Dataset, SamplerStats)> {
    config.validate()?;
    let steps = match &config.step {
        Some(s) => {
            crate::error::check_dim("proposal steps", pot.n, s.len())?;
            s.clone()
        }
        None => default_steps(pot, config)?,
    };
    let total = config.total();
    let per_chain = total.div_ceil(config.chains);
    let mut stats = SamplerStats::default();
    let mut records = Vec::with_capacity(total);
    for chain in 0..config.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chain as u64);
        let want = per_chain.min(total - records.len());
        run_chain(pot, config, &steps, want, &mut rng, &mut stats, &mut records)?;
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(u64::MAX);
    records.shuffle(&mut shuffle_rng);
    let dataset = Dataset {
        n: pot.n,
        records,
        units: config.units.clone(),
        splits: SplitSizes {
            train: config.train,
            validation: config.validation,
            test: config.test,
        },
        provenance: Provenance {
            potential_id: pot.id.clone(),
            config_hash: config.hash(),
        },
    };
    Ok((dataset, stats))
}

fn run_chain(
    pot: &SopPotential,
    config: &SamplerConfig,
    steps: &[f64],
    want: usize,
    rng: &mut ChaCha8Rng,
    stats: &mut SamplerStats,
    out: &mut Vec<Record>,
) -> Result<()> {
    if want == 0 {
        return Ok(());
    }
    let mut x = pot.minimum.clone();
    let mut v = pot.value(&x)?;
    let mut w = target_weight(v, config);
    if w <= 0.0 {
        return Err(Error::Invalid(format!(
            "chain start has zero weight (V = {v}, V_max = {})",
            config.v_max
        )));
    }
    let mut proposal = x.clone();
    let mut rejects = 0;
    let mut kept = 0;
    let mut step = 0usize;
    while kept < want {
        for (p, (xi, s)) in proposal.iter_mut().zip(x.iter().zip(steps)) {
            let z: f64 = StandardNormal.sample(rng);
            *p = xi + s * z;
        }
        let v_new = pot.value(&proposal)?;
        let w_new = target_weight(v_new, config);
        let u: f64 = rng.random();
        stats.proposals += 1;
        if w_new > 0.0 && u * w < w_new {
            std::mem::swap(&mut x, &mut proposal);
            v = v_new;
            w = w_new;
            stats.accepted += 1;
            rejects = 0;
        } else {
            rejects += 1;
            if rejects >= config.reject_window {
                return Err(Error::ZeroAcceptance(rejects));
            }
        }
        step += 1;
        if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.stride) {
            let (energy, force) = pot.value_and_force(&x)?;
            debug_assert_eq!(energy, v);
            out.push(Record {
                x: x.clone(),
                energy,
                force,
            });
            kept += 1;
        }
    }
    Ok(())
}
