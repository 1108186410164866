//! Desk-scale trainer for the flow head.
//!
//! Supervision comes from ground-truth optical flow `u` through the normal
//! flow constraint `n·(u − n) = 0`. Per sample the loss is
//!
//! ```text
//! (n̂·(u − n̂))² / (‖u‖² + ε)  +  λ · max(0, m − ‖n̂‖)²
//! ```
//!
//! The second term keeps predictions away from the trivial `n̂ = 0`, which
//! satisfies the constraint for every `u`. Along `u` the first term has a
//! local minimum at `n̂ = 0` and a barrier at half the projection, and the
//! default margin is too weak to leave it, so training starts with a larger
//! margin and weight and anneals them linearly to the configured values.
//! Later epochs minimize the configured loss, which is also the loss used
//! for validation.
//!
//! Training runs in units of the mean training flow magnitude; the scale is
//! folded back into the output layer before the weights are returned.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mlp::MlpParams;
use super::{embed_to_features, MlpWeights};
use crate::config::{EncoderConfig, Precision};
use crate::error::{Error, Result};
use crate::event::{EventSlice, QuerySet};
use crate::rff::{Bases, Encoder};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the anti-collapse margin term.
    pub lambda: f64,
    /// Margin as a fraction of the mean training flow magnitude.
    pub margin_fraction: f64,
    pub epsilon: f64,
    /// Margin fraction at epoch 0.
    pub warmup_margin_fraction: f64,
    /// Margin weight at epoch 0.
    pub warmup_lambda: f64,
    /// Fraction of the epochs over which the margin anneals.
    pub warmup_epochs_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 128,
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            lambda: 0.1,
            margin_fraction: 0.05,
            epsilon: 1e-8,
            warmup_margin_fraction: 0.5,
            warmup_lambda: 1.0,
            warmup_epochs_fraction: 0.5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Loss hyperparameters in the units the loss is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub margin: f64,
    pub epsilon: f64,
}

/// A slice with ground-truth flow for some of its events.
#[derive(Debug, Clone)]
pub struct LabeledSlice {
    pub slice: EventSlice,
    /// `(event index, u)` with `u` in pixels per second.
    pub targets: Vec<(usize, [f64; 2])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub flow: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: MlpWeights,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Mean training flow magnitude used as the internal unit.
    pub flow_scale: f64,
}

/// Loss of one prediction and its gradient with respect to `n̂`.
pub fn sample_loss(pred: [f64; 2], flow: [f64; 2], cfg: &LossConfig) -> (f64, [f64; 2]) {
    let [nx, ny] = pred;
    let [ux, uy] = flow;
    let denom = ux * ux + uy * uy + cfg.epsilon;
    let r = nx * (ux - nx) + ny * (uy - ny);
    let mut loss = r * r / denom;
    let k = 2.0 * r / denom;
    let mut grad = [k * (ux - 2.0 * nx), k * (uy - 2.0 * ny)];

    let norm = (nx * nx + ny * ny).sqrt();
    let gap = cfg.margin - norm;
    if gap > 0.0 {
        loss += cfg.lambda * gap * gap;
        if norm > 0.0 {
            let g = -2.0 * cfg.lambda * gap / norm;
            grad[0] += g * nx;
            grad[1] += g * ny;
        }
    }
    (loss, grad)
}

/// Mean loss over `samples`; adds the mean gradient into `grads` if given.
///
/// The batch is split into fixed chunks whose partial gradients are summed
/// in chunk order, so the result does not depend on the thread count.
pub fn batch_loss(
    params: &MlpParams<f64>,
    samples: &[&Sample],
    cfg: &LossConfig,
    grads: Option<&mut MlpParams<f64>>,
) -> Result<f64> {
    const CHUNK: usize = 32;
    if samples.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let want_grads = grads.is_some();
    let partials: Vec<(f64, Option<MlpParams<f64>>)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<_> {
            let mut g = want_grads.then(|| MlpParams::zeros(params.input, params.hidden));
            let mut total = 0.0;
            for s in chunk {
                let cache = params.forward_cached(&s.features)?;
                let (loss, d_out) = sample_loss(cache.out, s.flow, cfg);
                total += loss;
                if let Some(g) = g.as_mut() {
                    params.backward(&s.features, &cache, d_out, g);
                }
            }
            Ok((total, g))
        })
        .collect::<Result<_>>()?;

    let inv = 1.0 / samples.len() as f64;
    let loss = partials.iter().map(|(l, _)| l).sum::<f64>() * inv;
    if let Some(out) = grads {
        for (_, g) in partials {
            let g = g.expect("gradients were requested");
            for (o, v) in out.iter_mut().zip(g.iter()) {
                *o += v * inv;
            }
        }
    }
    Ok(loss)
}

fn init_params(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> MlpParams<f64> {
    let mut p = MlpParams::zeros(input, hidden);
    let a1 = (6.0 / input as f64).sqrt();
    let a2 = (6.0 / (hidden + 2) as f64).sqrt();
    p.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
    p.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
    p
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut MlpParams<f64>, grads: &MlpParams<f64>, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Encodes the labeled events of every slice with the configured bases.
pub fn encode_samples(
    dataset: &[LabeledSlice],
    cfg: &EncoderConfig,
    bases: &Bases,
) -> Result<Vec<Sample>> {
    fn run<F: crate::Real>(
        dataset: &[LabeledSlice],
        cfg: &EncoderConfig,
        bases: &Bases,
    ) -> Result<Vec<Sample>> {
        let encoder = Encoder::<F>::with_bases(cfg, bases.clone())?;
        let mut samples = Vec::new();
        for item in dataset {
            let slice = item.slice.rebase();
            let indices = item.targets.iter().map(|(k, _)| *k).collect();
            let queries = QuerySet::new(indices, slice.len())?;
            let embs = encoder.encode(&slice, &queries)?;
            for (emb, (_, flow)) in embs.iter().zip(&item.targets) {
                samples.push(Sample {
                    features: embed_to_features(emb).iter().map(|&v| v.to_f64()).collect(),
                    flow: *flow,
                });
            }
        }
        Ok(samples)
    }
    match cfg.precision {
        Precision::F32 => run::<f32>(dataset, cfg, bases),
        Precision::F64 => run::<f64>(dataset, cfg, bases),
    }
}

/// Trains a head on labeled slices, encoding them with bases generated from
/// `cfg`. Returns the weights with the lowest validation loss.
pub fn train_head(
    dataset: &[LabeledSlice],
    cfg: &EncoderConfig,
    tc: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let bases = crate::rff::generate_bases(cfg);
    let samples = encode_samples(dataset, cfg, &bases)?;
    fit_samples(samples, bases, tc)
}

/// Trains on pre-encoded samples.
pub fn fit_samples(samples: Vec<Sample>, bases: Bases, tc: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let input = 2 * bases.dim();
    for s in &samples {
        if s.features.len() != input {
            return Err(Error::DimensionMismatch {
                what: "sample feature length",
                expected: input,
                actual: s.features.len(),
            });
        }
        if !(s.flow[0].is_finite() && s.flow[1].is_finite()) {
            return Err(Error::invalid("ground-truth flow must be finite"));
        }
    }
    if tc.batch_size == 0 || tc.hidden == 0 {
        return Err(Error::invalid(
            "batch size and hidden width must be positive",
        ));
    }
    let weights_ok = [
        tc.lambda,
        tc.margin_fraction,
        tc.warmup_lambda,
        tc.warmup_margin_fraction,
    ]
    .iter()
    .all(|v| v.is_finite() && *v >= 0.0);
    if !weights_ok || !(0.0..=1.0).contains(&tc.warmup_epochs_fraction) {
        return Err(Error::invalid(
            "margin settings must be finite and non-negative",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val =
        ((samples.len() as f64 * tc.validation_fraction).round() as usize).min(samples.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let scale = train_idx
        .iter()
        .map(|&i| samples[i].flow[0].hypot(samples[i].flow[1]))
        .sum::<f64>()
        / train_idx.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let scaled: Vec<Sample> = samples
        .into_iter()
        .map(|s| Sample {
            flow: [s.flow[0] / scale, s.flow[1] / scale],
            features: s.features,
        })
        .collect();
    let loss_cfg = LossConfig {
        lambda: tc.lambda,
        margin: tc.margin_fraction,
        epsilon: tc.epsilon / (scale * scale),
    };

    let train: Vec<&Sample> = train_idx.iter().map(|&i| &scaled[i]).collect();
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &scaled[i]).collect();
    let monitor = if val.is_empty() { &train } else { &val };

    let mut params = init_params(input, tc.hidden, &mut rng);
    let mut adam = Adam::new(params.num_params());
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut train_loss = Vec::with_capacity(tc.epochs);
    let mut validation_loss = Vec::with_capacity(tc.epochs);
    let mut batch_order = train.clone();

    let warmup_epochs = (tc.epochs as f64 * tc.warmup_epochs_fraction).round();
    for epoch in 0..tc.epochs {
        let w = if warmup_epochs > 0.0 {
            (epoch as f64 / warmup_epochs).min(1.0)
        } else {
            1.0
        };
        let epoch_cfg = LossConfig {
            lambda: tc.warmup_lambda + (tc.lambda - tc.warmup_lambda) * w,
            margin: tc.warmup_margin_fraction
                + (tc.margin_fraction - tc.warmup_margin_fraction) * w,
            ..loss_cfg
        };
        batch_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in batch_order.chunks(tc.batch_size) {
            let mut grads = MlpParams::zeros(input, tc.hidden);
            let loss = batch_loss(&params, batch, &epoch_cfg, Some(&mut grads))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(&mut params, &grads, tc.learning_rate);
        }
        let epoch_loss = epoch_loss / train.len() as f64;
        let monitored = batch_loss(&params, monitor, &loss_cfg, None)?;
        if !monitored.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: monitored,
            });
        }
        debug!("epoch {epoch}: train {epoch_loss:.6e} validation {monitored:.6e}");
        train_loss.push(epoch_loss);
        validation_loss.push(monitored);
        if monitored < best.0 {
            best = (monitored, epoch, params.clone());
        }
    }

    let (best_loss, best_epoch, mut params) = best;
    info!("best validation loss {best_loss:.6e} at epoch {best_epoch}");
    params.w2.iter_mut().for_each(|w| *w *= scale);
    params.b2.iter_mut().for_each(|b| *b *= scale);
    let weights = MlpWeights::new(params.cast::<f32>(), bases)?;
    Ok(TrainReport {
        weights,
        best_epoch,
        train_loss,
        validation_loss,
        flow_scale: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rff::generate_bases;

    fn loss_cfg() -> LossConfig {
        LossConfig {
            lambda: 0.1,
            margin: 0.3,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn zero_prediction_satisfies_constraint() {
        let cfg = LossConfig {
            lambda: 0.0,
            ..loss_cfg()
        };
        let (l, g) = sample_loss([0.0, 0.0], [3.0, -4.0], &cfg);
        assert_eq!(l, 0.0);
        assert_eq!(g, [0.0, 0.0]);
        let (l, _) = sample_loss([0.0, 0.0], [3.0, -4.0], &loss_cfg());
        assert!((l - 0.1 * 0.09).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_on_constraint_circle() {
        // any n with n·(u−n)=0, e.g. the projection of u onto a direction
        let u = [2.0f64, 1.0];
        for dir in [[1.0, 0.0], [0.6, 0.8], [-0.8, 0.6]] {
            let p = u[0] * dir[0] + u[1] * dir[1];
            let n = [p * dir[0], p * dir[1]];
            if (n[0] * n[0] + n[1] * n[1]).sqrt() < 0.3 {
                continue;
            }
            let (l, _) = sample_loss(n, u, &loss_cfg());
            assert!(l < 1e-24, "{l}");
        }
    }

    #[test]
    fn sample_gradient_matches_finite_differences() {
        let cfg = loss_cfg();
        let h = 1e-6;
        for (pred, flow) in [
            ([0.5, -0.2], [1.0, 2.0]),
            ([0.1, 0.05], [-1.0, 0.5]),
            ([2.0, 1.0], [0.3, 0.3]),
        ] {
            let (_, g) = sample_loss(pred, flow, &cfg);
            for k in 0..2 {
                let mut hi = pred;
                hi[k] += h;
                let mut lo = pred;
                lo[k] -= h;
                let fd =
                    (sample_loss(hi, flow, &cfg).0 - sample_loss(lo, flow, &cfg).0) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-6 * fd.abs().max(1.0),
                    "{fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn constant_flow_is_learned_by_bias() {
        let cfg = EncoderConfig {
            dim: 4,
            ..EncoderConfig::default()
        };
        let bases = generate_bases(&cfg);
        let samples: Vec<Sample> = (0..64)
            .map(|_| Sample {
                features: vec![0.5, -0.25, 0.1, 0.0, 0.3, 0.2, -0.1, 0.4],
                flow: [120.0, -40.0],
            })
            .collect();
        let tc = TrainConfig {
            hidden: 8,
            epochs: 300,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let report = fit_samples(samples.clone(), bases, &tc).unwrap();
        let params = report.weights.params.cast::<f64>();
        let n = params.forward(&samples[0].features).unwrap();
        let u = samples[0].flow;
        let r = (n[0] * (u[0] - n[0]) + n[1] * (u[1] - n[1])).abs()
            / (n[0].hypot(n[1]) * u[0].hypot(u[1]));
        assert!(r < 1e-3, "normalized residual {r}, prediction {n:?}");
        assert!(n[0].hypot(n[1]) > 0.05 * u[0].hypot(u[1]));
    }

    #[test]
    fn rejects_bad_datasets() {
        let bases = generate_bases(&EncoderConfig {
            dim: 2,
            ..EncoderConfig::default()
        });
        assert!(matches!(
            fit_samples(vec![], bases.clone(), &TrainConfig::default()),
            Err(Error::Empty(_))
        ));
        let bad = vec![Sample {
            features: vec![0.0; 4],
            flow: [f64::NAN, 0.0],
        }];
        assert!(fit_samples(bad, bases.clone(), &TrainConfig::default()).is_err());
        let short = vec![Sample {
            features: vec![0.0; 3],
            flow: [1.0, 0.0],
        }];
        assert!(fit_samples(short, bases, &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let bases = generate_bases(&EncoderConfig {
            dim: 2,
            ..EncoderConfig::default()
        });
        let samples = vec![
            Sample {
                features: vec![1e200, 1e200, 1e200, 1e200],
                flow: [1.0, 0.0],
            };
            4
        ];
        let tc = TrainConfig {
            hidden: 4,
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(
            fit_samples(samples, bases, &tc),
            Err(Error::Diverged { .. })
        ));
    }
}
