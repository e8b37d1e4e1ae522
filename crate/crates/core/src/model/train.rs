use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, RewardModel};
use crate::embed::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: FeatureMatrix,
    pub arm: usize,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RewardModel,
    /// Mean squared error over the whole set after each epoch.
    pub losses: Vec<f64>,
}

/// `(1/|D|) Σ (f(x, a) − r)²`.
pub fn mse(model: &RewardModel, data: &[Sample]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut sum = 0.0;
    for s in data {
        let f = model.predict(&s.input, s.arm)?;
        sum += (f - s.target).powi(2);
    }
    Ok(sum / data.len() as f64)
}

fn validate(model: &RewardModel, data: &[Sample]) -> Result<(), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    for s in data {
        model.check_input(&s.input, s.arm)?;
        if !(0.0..=1.0).contains(&s.target) {
            return Err(ModelError::TargetOutOfRange(s.target));
        }
    }
    Ok(())
}

/// One SGD step on `batch`, averaging gradients over it.
pub(crate) fn sgd_step(model: &mut RewardModel, batch: &[&Sample], learning_rate: f64) {
    let mut grad = vec![0.0; model.params.len()];
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let fwd = model.forward_with(&model.params, &s.input.values, s.arm);
        model.accumulate_gradient(&s.input.values, &fwd, s.target, scale, &mut grad);
    }
    for (p, g) in model.params.iter_mut().zip(&grad) {
        *p -= learning_rate * g;
    }
    model.steps += 1;
}

pub fn train(
    model: &RewardModel,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    validate(model, data)?;
    if cfg.batch_size == 0 {
        return Err(ModelError::Config("batch size must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(ModelError::Config(format!(
            "learning rate {} is invalid",
            cfg.learning_rate
        )));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            sgd_step(&mut model, &batch, cfg.learning_rate);
        }
        losses.push(mse(&model, data)?);
    }
    Ok(TrainOutcome { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    fn tiny_set() -> (Architecture, Vec<Sample>) {
        let arch = Architecture::new(4, 5, 2);
        let mut data = Vec::new();
        for i in 0..4 {
            let mut x = FeatureMatrix::zeros(4, 5);
            for c in 0..3 {
                x.set(0, c, (i as f64) / 4.0);
                x.set(3, c, 1.0);
            }
            data.push(Sample {
                input: x,
                arm: i % 2,
                target: 0.2 + 0.15 * i as f64,
            });
        }
        (arch, data)
    }

    #[test]
    fn empty_set_is_an_error() {
        let (arch, _) = tiny_set();
        let m = RewardModel::init(arch, 0).unwrap();
        assert!(matches!(
            train(&m, &[], &TrainConfig::default()),
            Err(ModelError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (arch, data) = tiny_set();
        let m = RewardModel::init(arch, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&m, &data, &cfg).unwrap();
        assert_eq!(out.model.params, m.params);
        assert!(out.losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn single_sample_overfits() {
        let (arch, mut data) = tiny_set();
        data.truncate(1);
        data[0].target = 0.9;
        let m = RewardModel::init(arch, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 1,
            learning_rate: 0.1,
            seed: 1,
        };
        let out = train(&m, &data, &cfg).unwrap();
        let p = out.model.predict(&data[0].input, data[0].arm).unwrap();
        assert!((p - 0.9).abs() < 0.01, "prediction {p}");
    }

    #[test]
    fn target_out_of_range_rejected() {
        let (arch, mut data) = tiny_set();
        data[0].target = 1.5;
        let m = RewardModel::init(arch, 0).unwrap();
        assert!(matches!(
            train(&m, &data, &TrainConfig::default()),
            Err(ModelError::TargetOutOfRange(_))
        ));
    }
}
