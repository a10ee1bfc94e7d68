//! Run configuration: one TOML file plus `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use ttpes::potentials::{coupled_anharmonic, rotated_coupled_ho, AnharmonicParams, SamplerConfig, SopPotential};
use ttpes::train::{OptimizerConfig, Phase, SweepPlan};
use ttpes::vibsolve::DmrgSettings;

use crate::error::CliError;

pub const RESOLVED_NAME: &str = "config.resolved.toml";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub potential: Option<PotentialConfig>,
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub plan: PlanConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub convert: ConvertConfig,
    pub solve: SolveConfig,
}

/// Analytic surface used for sampling and for exact reference operators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    /// `½ Σ ω_i² y_i²` with `y = x·R`; `R` from `rotation` (rows) or, in
    /// two dimensions, from `angle`.
    RotatedHo {
        frequencies: Vec<f64>,
        #[serde(default)]
        rotation: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        angle: Option<f64>,
    },
    /// The three-mode reference surface.
    Reference3,
    Anharmonic {
        params: AnharmonicParams,
    },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<SopPotential, CliError> {
        Ok(match self {
            Self::RotatedHo {
                frequencies,
                rotation,
                angle,
            } => {
                let n = frequencies.len();
                let r = match (rotation, angle) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::Config("potential: give either rotation or angle, not both".into()))
                    }
                    (Some(rows), None) => {
                        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                            return Err(CliError::Config(format!("potential.rotation must be {n}×{n}")));
                        }
                        Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
                    }
                    (None, Some(t)) => {
                        if n != 2 {
                            return Err(CliError::Config("potential.angle needs exactly two frequencies".into()));
                        }
                        Some(DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]))
                    }
                    (None, None) => None,
                };
                rotated_coupled_ho(n, frequencies, r.as_ref())?
            }
            Self::Reference3 => coupled_anharmonic(3, &AnharmonicParams::reference3())?,
            Self::Anharmonic { params } => coupled_anharmonic(params.quadratic.len(), params)?,
        })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset CSV; `<out>/dataset.csv` when absent.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Latent dimension `f`; defaults to the input dimension.
    pub latent: Option<usize>,
    pub n_basis: usize,
    pub initial_bond: usize,
    pub max_bond: usize,
    /// Value of the constant channel at initialization; the mean training
    /// energy when absent.
    pub offset: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent: None,
            n_basis: 21,
            initial_bond: 2,
            max_bond: 14,
            offset: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Multiplies every epoch count of the plan.
    pub scale: f64,
    /// Explicit phases by label; replaces the standard plan when present.
    pub phase: BTreeMap<String, Phase>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            phase: BTreeMap::new(),
        }
    }
}

impl PlanConfig {
    pub fn resolve(&self, max_bond: usize) -> Result<SweepPlan, CliError> {
        if !(self.scale > 0.0) {
            return Err(CliError::Config("plan.scale must be positive".into()));
        }
        let plan = if self.phase.is_empty() {
            SweepPlan::standard(max_bond)
        } else {
            SweepPlan::from_named(self.phase.clone())?
        };
        Ok(if self.scale == 1.0 { plan } else { plan.scaled(self.scale) })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Write wall time into the trace (makes traces differ between runs).
    pub record_time: bool,
    /// Overwrite `<out>/checkpoint.json` every this many epochs; 0 = never.
    pub checkpoint_every: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    #[default]
    All,
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `<out>/model.json` when absent.
    pub checkpoint: Option<PathBuf>,
    pub split: Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertConfig {
    pub checkpoint: Option<PathBuf>,
    /// Grid points per mode.
    pub d: usize,
    /// DVR frequencies per latent mode; from the model curvature at the
    /// center when absent.
    pub frequencies: Option<Vec<f64>>,
    /// DVR centers in latent coordinates; the latent image of the potential
    /// minimum when a potential is configured, otherwise zero.
    pub center: Option<Vec<f64>>,
    /// Relative SVD cutoff when compressing `T + V`.
    pub cutoff: f64,
    /// Also write the exact-grid operators of the configured potential.
    pub exact: bool,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            d: 9,
            frequencies: None,
            center: None,
            cutoff: 1e-12,
            exact: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Hamiltonian MPO; `<out>/hamiltonian_mpo.json` when absent.
    pub hamiltonian: Option<PathBuf>,
    /// Reference levels: a level CSV, or an MPO file solved with the same
    /// settings.
    pub reference: Option<PathBuf>,
    /// Full diagonalization instead of DMRG.
    pub dense: bool,
    pub dmrg: DmrgSettings,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: toml::Table = text.parse().map_err(|e| CliError::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.message())))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.data.path.clone().unwrap_or_else(|| self.out_dir().join("dataset.csv"))
    }

    pub fn potential(&self) -> Result<SopPotential, CliError> {
        self.potential
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [potential] table".into()))?
            .build()
    }

    /// Writes the fully resolved configuration into the output directory.
    pub fn echo(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir)?;
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Config(format!("cannot echo config: {e}")))?;
        let path = dir.join(RESOLVED_NAME);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Applies `a.b.c=value`; the value is read as TOML and falls back to a
/// plain string.
fn apply_override(root: &mut toml::Table, text: &str) -> Result<(), CliError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {text:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {p:?} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_tables_and_keep_types() {
        let c = RunConfig::parse(
            "seed = 1\n[model]\nn_basis = 5\n",
            &["model.max_bond=3".into(), "seed=9".into(), "out=somewhere".into(), "solve.dmrg.tol=1e-8".into()],
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.n_basis, 5);
        assert_eq!(c.model.max_bond, 3);
        assert_eq!(c.out, Some(PathBuf::from("somewhere")));
        assert_eq!(c.solve.dmrg.tol, 1e-8);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::parse("[model]\nbond = 3\n", &[]), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("", &["novalue".into()]), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("seed = 1\n", &["seed.x=2".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn resolved_echo_parses_back_to_the_same_config() {
        let text = r#"
seed = 4
[potential]
kind = "rotated-ho"
frequencies = [1.0, 2.0]
angle = 0.5
[plan.phase.A]
start = 0
end = 10
mode = "alternating"
sweep = "onedot-grad"
[solve.dmrg]
states = 3
"#;
        let c = RunConfig::parse(text, &[]).unwrap();
        let echoed = toml::to_string_pretty(&c).unwrap();
        let back = RunConfig::parse(&echoed, &[]).unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), echoed);
        assert_eq!(back.plan.phase["A"].end, 10);
        assert_eq!(back.solve.dmrg.states, 3);
    }

    #[test]
    fn potentials_are_built_from_the_table() {
        let c = RunConfig::parse("[potential]\nkind = \"reference3\"\n", &[]).unwrap();
        assert_eq!(c.potential().unwrap().n, 3);
        let bad = RunConfig::parse("[potential]\nkind = \"rotated-ho\"\nfrequencies = [1.0, 2.0, 3.0]\nangle = 0.1\n", &[]).unwrap();
        assert!(matches!(bad.potential(), Err(CliError::Config(_))));
    }
}
