//! Level tables: energies, excitations and deviations from a reference.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::EigenResult;
use crate::error::Result;

pub const LEVEL_HEADER: &str = "index,energy,excitation,reference,deviation";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRow {
    pub index: usize,
    pub energy: f64,
    /// `E_i − E_0`.
    pub excitation: f64,
    /// Reference excitation energy.
    pub reference: Option<f64>,
    /// `excitation − reference`.
    pub deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub levels: Vec<LevelRow>,
    pub zpe: f64,
    pub reference_zpe: Option<f64>,
    pub zpe_deviation: Option<f64>,
    /// Mean absolute deviation of the excitation energies, ground state
    /// excluded.
    pub mae: Option<f64>,
    pub converged: bool,
    pub sweeps: Vec<usize>,
    pub max_variance: f64,
}

pub fn level_report(result: &EigenResult, reference: Option<&EigenResult>) -> LevelReport {
    let e0 = result.energies.first().copied().unwrap_or(f64::NAN);
    let r0 = reference.and_then(|r| r.energies.first().copied());
    let levels: Vec<LevelRow> = result
        .energies
        .iter()
        .enumerate()
        .map(|(index, &energy)| {
            let excitation = energy - e0;
            let reference = reference
                .and_then(|r| r.energies.get(index))
                .zip(r0)
                .map(|(&e, z)| e - z);
            LevelRow {
                index,
                energy,
                excitation,
                reference,
                deviation: reference.map(|x| excitation - x),
            }
        })
        .collect();
    let excited: Vec<f64> = levels.iter().skip(1).filter_map(|l| l.deviation).collect();
    let mae = (reference.is_some() && !excited.is_empty()).then(|| excited.iter().map(|d| d.abs()).sum::<f64>() / excited.len() as f64);
    LevelReport {
        zpe: e0,
        reference_zpe: r0,
        zpe_deviation: r0.map(|z| e0 - z),
        mae,
        converged: result.all_converged(),
        sweeps: result.sweeps.clone(),
        max_variance: result.variances.iter().copied().fold(0.0, f64::max),
        levels,
    }
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LevelReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(LEVEL_HEADER);
        s.push('\n');
        for l in &self.levels {
            let _ = writeln!(s, "{},{},{},{},{}", l.index, l.energy, l.excitation, field(l.reference), field(l.deviation));
        }
        s
    }

    /// Summary without the per-level rows.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            levels: usize,
            zpe: f64,
            reference_zpe: Option<f64>,
            zpe_deviation: Option<f64>,
            mae: Option<f64>,
            converged: bool,
            sweeps: &'a [usize],
            max_variance: f64,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            levels: self.levels.len(),
            zpe: self.zpe,
            reference_zpe: self.reference_zpe,
            zpe_deviation: self.zpe_deviation,
            mae: self.mae,
            converged: self.converged,
            sweeps: &self.sweeps,
            max_variance: self.max_variance,
        })?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.summary_json()? + "\n")?;
        Ok(())
    }
}
