//! JSON checkpoint of a [`ModelState`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BasisEntry, BasisFamily, Coordinator, ModelState, TensorTrain, Units};
use crate::error::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "ttpes-model/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub f: usize,
    pub n_basis: usize,
    pub bonds: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub dims: Dims,
    pub coordinator: Coordinator,
    pub basis: Vec<BasisEntry>,
    pub tt: TensorTrain,
    pub units: Units,
}

impl Checkpoint {
    pub fn from_model(model: &ModelState) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA.into(),
            dims: Dims {
                n: model.n(),
                f: model.f(),
                n_basis: model.n_basis(),
                bonds: model.tt().bond_dims(),
            },
            coordinator: model.coordinator().clone(),
            basis: model.basis().entries().to_vec(),
            tt: model.tt().clone(),
            units: model.units.clone(),
        }
    }

    pub fn into_model(self) -> Result<ModelState> {
        if self.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Schema(format!(
                "checkpoint schema {:?}, expected {CHECKPOINT_SCHEMA:?}",
                self.schema
            )));
        }
        self.tt.validate()?;
        if self.tt.bond_dims() != self.dims.bonds
            || self.coordinator.n() != self.dims.n
            || self.coordinator.f() != self.dims.f
        {
            return Err(Error::Schema("checkpoint dims disagree with its payload".into()));
        }
        let basis = BasisFamily::from_entries(
            self.dims.f,
            self.dims.n_basis,
            self.basis,
            &self.coordinator,
        )?;
        ModelState::new(self.coordinator, basis, self.tt, self.units)
    }
}

impl ModelState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        ck.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encode_sop;
    use crate::potentials::sop::{coupled_anharmonic, AnharmonicParams};
    use crate::testutil::rng;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut r = rng(1);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let mut model = ModelState::initialize(3, 3, 5, 3, 4, &pts, 0.1, &mut r).unwrap();
        model.tt_mut().canonicalize_in_place(1).unwrap();
        let text = model.to_json().unwrap();
        let back = ModelState::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn custom_basis_survives_round_trip() {
        let pot = coupled_anharmonic(3, &AnharmonicParams::reference3()).unwrap();
        let model = encode_sop(&pot, 5).unwrap();
        let back = ModelState::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let pot = coupled_anharmonic(3, &AnharmonicParams::reference3()).unwrap();
        let text = encode_sop(&pot, 5)
            .unwrap()
            .to_json()
            .unwrap()
            .replace(CHECKPOINT_SCHEMA, "other/9");
        assert!(matches!(ModelState::from_json(&text), Err(Error::Schema(_))));
    }
}
