use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, ModelError, RewardModel};
use crate::scaler::LogMinMaxScaler;

pub const CHECKPOINT_FORMAT: &str = "tunekg-reward-model";

/// Self-describing model container. Floats are written with shortest
/// round-trip formatting, so loading reproduces parameters bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub registry_version: u32,
    pub seed: u64,
    pub steps: u64,
    pub scaler: Option<LogMinMaxScaler>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(
        model: &RewardModel,
        scaler: Option<LogMinMaxScaler>,
        registry_version: u32,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: 1,
            architecture: model.arch,
            registry_version,
            seed: model.seed,
            steps: model.steps,
            scaler,
            params: model.params.clone(),
        }
    }

    pub fn model(&self) -> Result<RewardModel, ModelError> {
        if self.format != CHECKPOINT_FORMAT || self.version != 1 {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        self.architecture.validate()?;
        let want = self.architecture.parameter_count();
        if self.params.len() != want {
            return Err(ModelError::Checkpoint(format!(
                "{} parameters, architecture needs {want}",
                self.params.len()
            )));
        }
        Ok(RewardModel {
            arch: self.architecture,
            params: self.params.clone(),
            steps: self.steps,
            seed: self.seed,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = RewardModel::init(Architecture::new(5, 6, 3), 99).unwrap();
        let scaler = LogMinMaxScaler::fit(&[0.1, 1234.5678]).unwrap();
        let ck = Checkpoint::new(&m, Some(scaler), 1);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let m2 = back.model().unwrap();
        assert!(m
            .params
            .iter()
            .zip(&m2.params)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(
            back.scaler.unwrap().l_max().to_bits(),
            scaler.l_max().to_bits()
        );
    }

    #[test]
    fn wrong_parameter_count_rejected() {
        let m = RewardModel::init(Architecture::new(5, 6, 3), 1).unwrap();
        let mut ck = Checkpoint::new(&m, None, 1);
        ck.params.pop();
        assert!(ck.model().is_err());
    }
}
