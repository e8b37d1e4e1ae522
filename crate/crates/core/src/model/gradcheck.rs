use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, RewardModel, Sample};

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for the relative error, so gradients that are both
/// numerically zero do not turn rounding noise into a large ratio.
const REL_FLOOR: f64 = 1e-7;
const MIN_CHECKED: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Parameters whose ±step perturbation flipped a ReLU, where central
    /// differences are not a valid reference.
    pub skipped_kinks: usize,
    /// Minimum number of compared parameters for the check to count.
    pub required: usize,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.checked >= self.required && self.max_rel_error <= self.tolerance
    }
}

fn loss_at(model: &RewardModel, params: &[f64], s: &Sample) -> (f64, Vec<bool>) {
    let fwd = model.forward_with(params, &s.input.values, s.arm);
    ((fwd.out - s.target).powi(2), fwd.active_pattern())
}

/// Compares analytic gradients of `(f − r)²` against central differences on a
/// random subset of at least 100 parameters (all of them if there are fewer).
pub fn gradient_check(
    model: &RewardModel,
    s: &Sample,
    tolerance: f64,
    seed: u64,
) -> Result<GradientReport, ModelError> {
    gradient_check_with(model, s, tolerance, seed, |_| {})
}

/// As [`gradient_check`], with a hook that may tamper with the analytic
/// gradient before comparison. Used to prove the check can fail.
pub fn gradient_check_with(
    model: &RewardModel,
    s: &Sample,
    tolerance: f64,
    seed: u64,
    tamper: impl FnOnce(&mut [f64]),
) -> Result<GradientReport, ModelError> {
    let mut analytic = model.gradient(&s.input, s.arm, s.target)?;
    tamper(&mut analytic);
    let n = model.params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = sample(&mut rng, n, n).into_vec();

    let (_, base_pattern) = loss_at(model, &model.params, s);
    let mut params = model.params.clone();
    let mut report = GradientReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped_kinks: 0,
        required: MIN_CHECKED.min(n),
        tolerance,
    };
    let want = (2 * MIN_CHECKED).min(n);
    while report.checked < want {
        let Some(i) = candidates.pop() else { break };
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let (plus, pat_plus) = loss_at(model, &params, s);
        params[i] = orig - FD_STEP;
        let (minus, pat_minus) = loss_at(model, &params, s);
        params[i] = orig;
        if pat_plus != base_pattern || pat_minus != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::FeatureMatrix;
    use crate::model::Architecture;
    use rand::Rng;

    fn sample_input(arch: &Architecture, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = FeatureMatrix::zeros(arch.channels, arch.width);
        for r in 0..arch.channels - 1 {
            for c in 0..5 {
                x.set(r, c, rng.random_range(0.0..1.0));
            }
        }
        for c in 0..5 {
            x.set(arch.channels - 1, c, 1.0);
        }
        Sample {
            input: x,
            arm: 1,
            target: 0.8,
        }
    }

    #[test]
    fn fresh_model_passes() {
        let arch = Architecture::new(10, 8, 3);
        let m = RewardModel::init(arch, 11).unwrap();
        let r = gradient_check(&m, &sample_input(&arch, 2), 1e-4, 0).unwrap();
        assert!(r.checked >= 100);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn tampered_gradient_fails() {
        let arch = Architecture::new(10, 8, 3);
        let m = RewardModel::init(arch, 11).unwrap();
        let r = gradient_check_with(&m, &sample_input(&arch, 2), 1e-4, 0, |g| {
            g.iter_mut().for_each(|v| *v *= 1.01);
        })
        .unwrap();
        assert!(!r.passed());
    }
}
