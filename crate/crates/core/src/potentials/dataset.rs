//! Sampled datasets and their CSV + JSON-sidecar file format.
//!
//! The CSV has a header `x1,…,xn,V,F1,…,Fn` and one record per line. The
//! sidecar (same path, `.json` extension) carries the units, provenance and
//! split sizes; records are stored train first, then validation, then test.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sop::SopPotential;
use crate::error::{Error, Result};
use crate::model::Units;

pub const DATASET_SCHEMA: &str = "ttpes-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub x: Vec<f64>,
    pub energy: f64,
    pub force: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub potential_id: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub records: Vec<Record>,
    pub units: Units,
    pub splits: SplitSizes,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema: String,
    n: usize,
    records: usize,
    units: Units,
    provenance: Provenance,
    splits: SplitSizes,
}

impl Dataset {
    /// A dataset whose records are all training points.
    pub fn from_records(n: usize, records: Vec<Record>) -> Self {
        let splits = SplitSizes {
            train: records.len(),
            ..Default::default()
        };
        Self {
            n,
            records,
            units: Units::default(),
            splits,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn train(&self) -> &[Record] {
        &self.records[..self.splits.train]
    }

    pub fn validation(&self) -> &[Record] {
        let a = self.splits.train;
        &self.records[a..a + self.splits.validation]
    }

    pub fn test(&self) -> &[Record] {
        let a = self.splits.train + self.splits.validation;
        &self.records[a..a + self.splits.test]
    }

    fn header(n: usize) -> String {
        let xs = (1..=n).map(|i| format!("x{i}"));
        let fs = (1..=n).map(|i| format!("F{i}"));
        xs.chain(std::iter::once("V".to_string()))
            .chain(fs)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.n);
        out.push('\n');
        for r in &self.records {
            let fields = r
                .x
                .iter()
                .chain(std::iter::once(&r.energy))
                .chain(&r.force)
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(out, "{fields}");
        }
        out
    }

    pub fn save(&self, csv: impl AsRef<Path>) -> Result<()> {
        let csv = csv.as_ref();
        self.check_splits()?;
        std::fs::write(csv, self.to_csv())?;
        let sidecar = Sidecar {
            schema: DATASET_SCHEMA.into(),
            n: self.n,
            records: self.records.len(),
            units: self.units.clone(),
            provenance: self.provenance.clone(),
            splits: self.splits,
        };
        std::fs::write(
            Self::sidecar_path(csv),
            serde_json::to_string_pretty(&sidecar)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(csv: impl AsRef<Path>) -> Result<Self> {
        let csv = csv.as_ref();
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(Self::sidecar_path(csv))?)
                .map_err(|e| Error::Schema(format!("dataset sidecar: {e}")))?;
        if sidecar.schema != DATASET_SCHEMA {
            return Err(Error::Schema(format!("dataset schema {:?}", sidecar.schema)));
        }
        let text = std::fs::read_to_string(csv)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != Self::header(sidecar.n) {
            return Err(Error::Schema(format!("unexpected dataset header {header:?}")));
        }
        let n = sidecar.n;
        let mut records = Vec::with_capacity(sidecar.records);
        for (line_no, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Schema(format!("line {}: {e}", line_no + 2)))?;
            if vals.len() != 2 * n + 1 {
                return Err(Error::Schema(format!(
                    "line {} has {} fields, expected {}",
                    line_no + 2,
                    vals.len(),
                    2 * n + 1
                )));
            }
            records.push(Record {
                x: vals[..n].to_vec(),
                energy: vals[n],
                force: vals[n + 1..].to_vec(),
            });
        }
        if records.len() != sidecar.records {
            return Err(Error::Schema(format!(
                "sidecar promises {} records, file has {}",
                sidecar.records,
                records.len()
            )));
        }
        let data = Self {
            n,
            records,
            units: sidecar.units,
            splits: sidecar.splits,
            provenance: sidecar.provenance,
        };
        data.check_splits()?;
        Ok(data)
    }

    fn check_splits(&self) -> Result<()> {
        let s = self.splits;
        if s.train + s.validation + s.test != self.records.len() {
            return Err(Error::Schema(format!(
                "split sizes {s:?} do not add up to {} records",
                self.records.len()
            )));
        }
        Ok(())
    }

    /// Checks every record against the generating potential: stored forces
    /// within `rel_tol` of the analytic ones and energies reproduced.
    pub fn verify_forces(&self, pot: &SopPotential, rel_tol: f64) -> Result<()> {
        for (k, r) in self.records.iter().enumerate() {
            let (v, f) = pot.value_and_force(&r.x)?;
            let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let worst = f
                .iter()
                .zip(&r.force)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if worst > rel_tol * scale || (v - r.energy).abs() > rel_tol * v.abs().max(1.0) {
                return Err(Error::Invalid(format!(
                    "record {k} disagrees with potential {:?}",
                    pot.id
                )));
            }
        }
        Ok(())
    }
}
