use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::embed::FeatureMatrix;
use crate::scaler::LogMinMaxScaler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Input channels `R`; the last one is the real-column mask.
    pub channels: usize,
    /// Input width `C_max`.
    pub width: usize,
    pub conv1_maps: usize,
    pub conv2_maps: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub arms: usize,
}

impl Architecture {
    pub fn new(channels: usize, width: usize, arms: usize) -> Self {
        Self {
            channels,
            width,
            conv1_maps: 16,
            conv2_maps: 8,
            kernel: 3,
            hidden: 32,
            arms,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.arms < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 arms, got {}",
                self.arms
            )));
        }
        if self.channels == 0
            || self.width == 0
            || self.conv1_maps == 0
            || self.conv2_maps == 0
            || self.hidden == 0
        {
            return Err(ModelError::Config("all dimensions must be positive".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(ModelError::Config("kernel width must be odd".into()));
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut off = 0;
        let mut take = |n: usize| {
            let start = off;
            off += n;
            start..off
        };
        let w1 = take(self.conv1_maps * self.channels * self.kernel);
        let b1 = take(self.conv1_maps);
        let w2 = take(self.conv2_maps * self.conv1_maps * self.kernel);
        let b2 = take(self.conv2_maps);
        let wd = take(self.hidden * (self.conv2_maps + self.arms));
        let bd = take(self.hidden);
        let wo = take(self.hidden);
        let bo = take(1);
        Layout {
            w1,
            b1,
            w2,
            b2,
            wd,
            bd,
            wo,
            bo,
            total: off,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub w1: std::ops::Range<usize>,
    pub b1: std::ops::Range<usize>,
    pub w2: std::ops::Range<usize>,
    pub b2: std::ops::Range<usize>,
    pub wd: std::ops::Range<usize>,
    pub bd: std::ops::Range<usize>,
    pub wo: std::ops::Range<usize>,
    pub bo: std::ops::Range<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub arch: Architecture,
    pub params: Vec<f64>,
    pub steps: u64,
    pub seed: u64,
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Forward {
    pub a1: Vec<f64>,
    pub h1: Vec<f64>,
    pub a2: Vec<f64>,
    pub mask: Vec<f64>,
    /// One past the last live column; later columns cannot reach the pooled output.
    pub span: usize,
    pub denom: f64,
    pub z: Vec<f64>,
    pub a3: Vec<f64>,
    pub h3: Vec<f64>,
    pub out: f64,
}

impl Forward {
    /// Sign pattern of every ReLU pre-activation.
    pub fn active_pattern(&self) -> Vec<bool> {
        self.a1
            .iter()
            .chain(&self.a2)
            .chain(&self.a3)
            .map(|&a| a > 0.0)
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `out[m][j] = b[m] + Σ_c Σ_k w[m][c][k] · input[c][j + k − pad]`, zero outside.
/// Only columns `j < cols` are computed; the rest stay zero.
#[allow(clippy::too_many_arguments)]
fn conv1d(
    input: &[f64],
    in_ch: usize,
    width: usize,
    w: &[f64],
    b: &[f64],
    maps: usize,
    kernel: usize,
    cols: usize,
) -> Vec<f64> {
    let pad = kernel / 2;
    let mut out = vec![0.0; maps * width];
    for m in 0..maps {
        let row = &mut out[m * width..(m + 1) * width];
        row[..cols].fill(b[m]);
        for c in 0..in_ch {
            let x = &input[c * width..(c + 1) * width];
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let wk = &w[(m * in_ch + c) * kernel..(m * in_ch + c + 1) * kernel];
            for (k, &wv) in wk.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                // j + k − pad ∈ [0, width)
                let lo = pad.saturating_sub(k);
                let hi = (width + pad).saturating_sub(k).min(cols);
                for j in lo..hi {
                    row[j] += wv * x[j + k - pad];
                }
            }
        }
    }
    out
}

/// Gradients of a conv layer given `d_out`; accumulates into `gw`/`gb` and
/// returns the gradient with respect to the input.
#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    input: &[f64],
    in_ch: usize,
    width: usize,
    w: &[f64],
    maps: usize,
    kernel: usize,
    d_out: &[f64],
    cols: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_input_grad: bool,
) -> Vec<f64> {
    let pad = kernel / 2;
    let mut d_in = if want_input_grad {
        vec![0.0; in_ch * width]
    } else {
        Vec::new()
    };
    for m in 0..maps {
        let d = &d_out[m * width..(m + 1) * width];
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        gb[m] += d.iter().sum::<f64>();
        for c in 0..in_ch {
            let x = &input[c * width..(c + 1) * width];
            let base = (m * in_ch + c) * kernel;
            for k in 0..kernel {
                let lo = pad.saturating_sub(k);
                let hi = (width + pad).saturating_sub(k).min(cols);
                let mut acc = 0.0;
                for j in lo..hi {
                    acc += d[j] * x[j + k - pad];
                }
                gw[base + k] += acc;
                if want_input_grad {
                    let wv = w[base + k];
                    let di = &mut d_in[c * width..(c + 1) * width];
                    for j in lo..hi {
                        di[j + k - pad] += wv * d[j];
                    }
                }
            }
        }
    }
    d_in
}

impl RewardModel {
    /// Deterministic He-uniform initialisation from `seed`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let layout = arch.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [f64]| {
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-bound..bound);
            }
        };
        fill(layout.w1.clone(), arch.channels * arch.kernel, &mut params);
        fill(
            layout.w2.clone(),
            arch.conv1_maps * arch.kernel,
            &mut params,
        );
        fill(layout.wd.clone(), arch.conv2_maps + arch.arms, &mut params);
        fill(layout.wo.clone(), arch.hidden, &mut params);
        for p in &mut params[layout.b1.clone()] {
            *p = 0.01;
        }
        for p in &mut params[layout.b2.clone()] {
            *p = 0.01;
        }
        for p in &mut params[layout.bd.clone()] {
            *p = 0.01;
        }
        Ok(Self {
            arch,
            params,
            steps: 0,
            seed,
        })
    }

    pub fn arms(&self) -> usize {
        self.arch.arms
    }

    pub(crate) fn check_input(&self, x: &FeatureMatrix, arm: usize) -> Result<(), ModelError> {
        if x.rows != self.arch.channels || x.cols != self.arch.width {
            return Err(ModelError::Shape {
                rows: x.rows,
                cols: x.cols,
                want_rows: self.arch.channels,
                want_cols: self.arch.width,
            });
        }
        if arm >= self.arch.arms {
            return Err(ModelError::ArmOutOfRange {
                arm,
                arms: self.arch.arms,
            });
        }
        Ok(())
    }

    /// Predicted reward, strictly inside (0, 1) for finite inputs of moderate size.
    pub fn predict(&self, x: &FeatureMatrix, arm: usize) -> Result<f64, ModelError> {
        self.check_input(x, arm)?;
        Ok(self.forward_with(&self.params, &x.values, arm).out)
    }

    pub(crate) fn forward_with(&self, params: &[f64], x: &[f64], arm: usize) -> Forward {
        let a = &self.arch;
        let l = a.layout();
        let w = a.width;
        let pad = a.kernel / 2;
        let mask: Vec<f64> = x[(a.channels - 1) * w..a.channels * w].to_vec();
        let span = mask.iter().rposition(|&m| m != 0.0).map_or(0, |j| j + 1);

        let a1 = conv1d(
            x,
            a.channels,
            w,
            &params[l.w1.clone()],
            &params[l.b1.clone()],
            a.conv1_maps,
            a.kernel,
            (span + pad).min(w),
        );
        let h1: Vec<f64> = a1.iter().map(|&v| relu(v)).collect();
        let a2 = conv1d(
            &h1,
            a.conv1_maps,
            w,
            &params[l.w2.clone()],
            &params[l.b2.clone()],
            a.conv2_maps,
            a.kernel,
            span,
        );
        let h2: Vec<f64> = a2.iter().map(|&v| relu(v)).collect();

        let denom = mask.iter().sum::<f64>().max(1.0);
        let mut z = vec![0.0; a.conv2_maps + a.arms];
        for g in 0..a.conv2_maps {
            let row = &h2[g * w..(g + 1) * w];
            z[g] = row.iter().zip(&mask).map(|(h, m)| h * m).sum::<f64>() / denom;
        }
        z[a.conv2_maps + arm] = 1.0;

        let wd = &params[l.wd.clone()];
        let bd = &params[l.bd.clone()];
        let zn = z.len();
        let a3: Vec<f64> = (0..a.hidden)
            .map(|h| {
                bd[h]
                    + wd[h * zn..(h + 1) * zn]
                        .iter()
                        .zip(&z)
                        .map(|(w, z)| w * z)
                        .sum::<f64>()
            })
            .collect();
        let h3: Vec<f64> = a3.iter().map(|&v| relu(v)).collect();
        let wo = &params[l.wo.clone()];
        let o = params[l.bo.start] + wo.iter().zip(&h3).map(|(w, h)| w * h).sum::<f64>();
        Forward {
            a1,
            h1,
            a2,
            mask,
            span,
            denom,
            z,
            a3,
            h3,
            out: sigmoid(o),
        }
    }

    /// Adds `scale · ∂(f − target)²/∂θ` into `grad`.
    pub(crate) fn accumulate_gradient(
        &self,
        x: &[f64],
        fwd: &Forward,
        target: f64,
        scale: f64,
        grad: &mut [f64],
    ) {
        let a = &self.arch;
        let l = a.layout();
        let w = a.width;
        let params = &self.params;

        let f = fwd.out;
        let d_o = scale * 2.0 * (f - target) * f * (1.0 - f);

        grad[l.bo.start] += d_o;
        let wo = &params[l.wo.clone()];
        let zn = fwd.z.len();
        let mut d_a3 = vec![0.0; a.hidden];
        for h in 0..a.hidden {
            grad[l.wo.start + h] += d_o * fwd.h3[h];
            if fwd.a3[h] > 0.0 {
                d_a3[h] = d_o * wo[h];
            }
        }
        let wd = &params[l.wd.clone()];
        let mut d_z = vec![0.0; zn];
        for h in 0..a.hidden {
            let d = d_a3[h];
            if d == 0.0 {
                continue;
            }
            grad[l.bd.start + h] += d;
            let gw = &mut grad[l.wd.start + h * zn..l.wd.start + (h + 1) * zn];
            for i in 0..zn {
                gw[i] += d * fwd.z[i];
                d_z[i] += d * wd[h * zn + i];
            }
        }

        let mut d_a2 = vec![0.0; a.conv2_maps * w];
        for g in 0..a.conv2_maps {
            let dp = d_z[g] / fwd.denom;
            if dp == 0.0 {
                continue;
            }
            for j in 0..w {
                if fwd.a2[g * w + j] > 0.0 {
                    d_a2[g * w + j] = dp * fwd.mask[j];
                }
            }
        }
        let (g_head, g_tail) = grad.split_at_mut(l.b2.start);
        let d_h1 = conv1d_backward(
            &fwd.h1,
            a.conv1_maps,
            w,
            &params[l.w2.clone()],
            a.conv2_maps,
            a.kernel,
            &d_a2,
            fwd.span,
            &mut g_head[l.w2.clone()],
            &mut g_tail[..a.conv2_maps],
            true,
        );
        let d_a1: Vec<f64> = d_h1
            .iter()
            .zip(&fwd.a1)
            .map(|(&d, &pre)| if pre > 0.0 { d } else { 0.0 })
            .collect();
        let (g_head, g_tail) = grad.split_at_mut(l.b1.start);
        conv1d_backward(
            x,
            a.channels,
            w,
            &params[l.w1.clone()],
            a.conv1_maps,
            a.kernel,
            &d_a1,
            (fwd.span + a.kernel / 2).min(w),
            &mut g_head[l.w1.clone()],
            &mut g_tail[..a.conv1_maps],
            false,
        );
    }

    /// Gradient of `(f(x, arm) − target)²` with respect to every parameter.
    pub fn gradient(
        &self,
        x: &FeatureMatrix,
        arm: usize,
        target: f64,
    ) -> Result<Vec<f64>, ModelError> {
        self.check_input(x, arm)?;
        let fwd = self.forward_with(&self.params, &x.values, arm);
        let mut grad = vec![0.0; self.params.len()];
        self.accumulate_gradient(&x.values, &fwd, target, 1.0, &mut grad);
        Ok(grad)
    }

    /// Scaled cost `ĉ = 1 − f(x, arm)` and the runtime estimate `ỹ = φ⁻¹(ĉ)`.
    pub fn recover_cost(
        &self,
        x: &FeatureMatrix,
        arm: usize,
        scaler: &LogMinMaxScaler,
    ) -> Result<(f64, f64), ModelError> {
        let c = 1.0 - self.predict(x, arm)?;
        Ok((c, scaler.phi_inv(c)?))
    }

    /// Index range of the output unit's weights and bias.
    pub fn output_layer(&self) -> std::ops::Range<usize> {
        let l = self.arch.layout();
        l.wo.start..l.bo.end
    }

    /// Index range of the first convolution's kernels.
    pub fn first_conv_kernels(&self) -> std::ops::Range<usize> {
        self.arch.layout().w1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(arch: &Architecture, seed: u64, real_cols: usize) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = FeatureMatrix::zeros(arch.channels, arch.width);
        for r in 0..arch.channels - 1 {
            for c in 0..real_cols {
                m.set(r, c, rng.random_range(0.0..1.0));
            }
        }
        for c in 0..real_cols {
            m.set(arch.channels - 1, c, 1.0);
        }
        m
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = Architecture::new(6, 8, 3);
        let a = RewardModel::init(arch, 7).unwrap();
        let b = RewardModel::init(arch, 7).unwrap();
        let c = RewardModel::init(arch, 8).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        assert_eq!(a.params.len(), arch.parameter_count());
    }

    #[test]
    fn one_arm_is_a_configuration_error() {
        assert!(matches!(
            RewardModel::init(Architecture::new(6, 8, 1), 0),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn predict_is_bounded_and_deterministic() {
        let arch = Architecture::new(6, 8, 3);
        let m = RewardModel::init(arch, 1).unwrap();
        for s in 0..20 {
            let x = input(&arch, s, (s % 8) as usize + 1);
            for arm in 0..3 {
                let p = m.predict(&x, arm).unwrap();
                assert!(p > 0.0 && p < 1.0);
                assert_eq!(p, m.predict(&x, arm).unwrap());
            }
        }
    }

    #[test]
    fn predict_rejects_bad_shape_and_arm() {
        let arch = Architecture::new(6, 8, 3);
        let m = RewardModel::init(arch, 1).unwrap();
        let x = input(&arch, 0, 3);
        assert!(matches!(
            m.predict(&x, 3),
            Err(ModelError::ArmOutOfRange { arm: 3, arms: 3 })
        ));
        let bad = FeatureMatrix::zeros(6, 7);
        assert!(matches!(m.predict(&bad, 0), Err(ModelError::Shape { .. })));
    }

    #[test]
    fn recover_cost_inverts_prediction() {
        let arch = Architecture::new(6, 8, 3);
        let m = RewardModel::init(arch, 2).unwrap();
        let x = input(&arch, 1, 4);
        let s = LogMinMaxScaler::fit(&[1.0, 99.0]).unwrap();
        let (c, y) = m.recover_cost(&x, 0, &s).unwrap();
        let f = m.predict(&x, 0).unwrap();
        assert_eq!(c, 1.0 - f);
        let back = s.phi(y).unwrap();
        assert!((back - c).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_first_layer_gradient() {
        let arch = Architecture::new(6, 8, 3);
        let m = RewardModel::init(arch, 3).unwrap();
        let x = FeatureMatrix::zeros(6, 8);
        let g = m.gradient(&x, 1, 0.9).unwrap();
        assert!(g[m.first_conv_kernels()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_gradient_is_linear_in_residual() {
        let arch = Architecture::new(6, 8, 3);
        let m = RewardModel::init(arch, 4).unwrap();
        let x = input(&arch, 9, 5);
        let f = m.predict(&x, 2).unwrap();
        let r1 = f - 0.1;
        let r2 = f - 0.2;
        let g1 = m.gradient(&x, 2, r1).unwrap();
        let g2 = m.gradient(&x, 2, r2).unwrap();
        for i in m.output_layer() {
            assert!(
                (g2[i] - 2.0 * g1[i]).abs() <= 1e-9 * g1[i].abs().max(1e-12),
                "{i}"
            );
        }
    }
}
