//! Two-layer perceptron mapping embeddings to generalized normal flow.

mod format;
mod mlp;
pub mod train;

pub use format::{Activation, FlowUnits, MlpWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use mlp::{ForwardCache, MlpParams};
pub use train::{train_head, LabeledSlice, TrainConfig, TrainReport};

use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::event::{EventSlice, QuerySet};
use crate::real::Real;
use crate::rff::{Embedding, Encoder, PixelGrid};

/// Predicted flow for one queried event, in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPrediction {
    pub event_index: usize,
    pub nx: f32,
    pub ny: f32,
}

/// `[Re(emb); Im(emb)]`.
pub fn embed_to_features<F: Real>(emb: &Embedding<F>) -> Vec<F> {
    emb.values
        .iter()
        .map(|z| z.re)
        .chain(emb.values.iter().map(|z| z.im))
        .collect()
}

/// Encoder plus MLP, reusable across slices.
#[derive(Debug, Clone)]
pub struct FlowHead<F> {
    encoder: Encoder<F>,
    weights: MlpWeights,
}

impl<F: Real> FlowHead<F> {
    /// The encoder runs on the weights' own bases. `cfg.dim` must match.
    pub fn new(cfg: &EncoderConfig, weights: MlpWeights) -> Result<Self> {
        weights.validate()?;
        if weights.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                what: "weights D vs encoder D",
                expected: cfg.dim,
                actual: weights.dim(),
            });
        }
        let encoder = Encoder::with_bases(cfg, weights.bases.clone())?;
        Ok(FlowHead { encoder, weights })
    }

    pub fn encoder(&self) -> &Encoder<F> {
        &self.encoder
    }

    pub fn weights(&self) -> &MlpWeights {
        &self.weights
    }

    pub fn forward(&self, emb: &Embedding<F>) -> Result<[f32; 2]> {
        let features: Vec<f32> = embed_to_features(emb)
            .iter()
            .map(|&v| v.to_f64() as f32)
            .collect();
        self.weights.params.forward(&features)
    }

    /// One result per query, in query order.
    pub fn predict(
        &self,
        slice: &EventSlice,
        queries: &QuerySet,
    ) -> Result<Vec<Result<FlowPrediction>>> {
        let mut grid = self.encoder.empty_grid(slice.geometry());
        self.predict_with(&mut grid, slice, queries)
    }

    /// [`FlowHead::predict`] on a reusable grid.
    pub fn predict_with(
        &self,
        grid: &mut PixelGrid<F>,
        slice: &EventSlice,
        queries: &QuerySet,
    ) -> Result<Vec<Result<FlowPrediction>>> {
        let embs = self.encoder.encode_each_with(grid, slice, queries)?;
        Ok(queries
            .indices()
            .iter()
            .zip(embs)
            .map(|(&event_index, emb)| {
                let [nx, ny] = self.forward(&emb?)?;
                Ok(FlowPrediction {
                    event_index,
                    nx,
                    ny,
                })
            })
            .collect())
    }
}

pub fn predict_flows(
    slice: &EventSlice,
    queries: &QuerySet,
    cfg: &EncoderConfig,
    weights: &MlpWeights,
) -> Result<Vec<Result<FlowPrediction>>> {
    let slice = slice.rebase();
    match cfg.precision {
        crate::Precision::F32 => {
            FlowHead::<f32>::new(cfg, weights.clone())?.predict(&slice, queries)
        }
        crate::Precision::F64 => {
            FlowHead::<f64>::new(cfg, weights.clone())?.predict(&slice, queries)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{CameraGeometry, Event};
    use crate::rff::generate_bases;
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(dim: usize) -> EncoderConfig {
        EncoderConfig {
            delta_x: 3,
            delta_y: 3,
            dim,
            ..EncoderConfig::default()
        }
    }

    fn random_weights(rng: &mut ChaCha8Rng, c: &EncoderConfig, hidden: usize) -> MlpWeights {
        let mut w = MlpWeights::constant(generate_bases(c), hidden, [0.0, 0.0]);
        for v in w.params.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        w
    }

    #[test]
    fn features_layout() {
        let ones = Embedding::<f64> {
            values: vec![Complex::new(1.0, 0.0); 2],
            count: 1,
        };
        assert_eq!(embed_to_features(&ones), vec![1.0, 1.0, 0.0, 0.0]);
        let i = Embedding::<f64> {
            values: vec![Complex::new(0.0, 1.0); 2],
            count: 1,
        };
        assert_eq!(embed_to_features(&i), vec![0.0, 0.0, 1.0, 1.0]);

        let z = Embedding::<f64> {
            values: vec![Complex::new(0.3, -0.2), Complex::new(-0.5, 0.9)],
            count: 2,
        };
        let conj = Embedding {
            values: z.values.iter().map(|v| v.conj()).collect(),
            count: 2,
        };
        let (a, b) = (embed_to_features(&z), embed_to_features(&conj));
        assert_eq!(a[..2], b[..2]);
        assert_eq!(a[2..].iter().map(|v| -v).collect::<Vec<_>>(), b[2..]);
    }

    #[test]
    fn constant_head_on_single_event() {
        let c = cfg(8);
        let w = MlpWeights::constant(generate_bases(&c), 16, [1.0, 0.0]);
        let s = EventSlice::new(
            vec![Event::new(0.003, 2, 2)],
            0.0,
            0.032,
            CameraGeometry::new(5, 5).unwrap(),
        )
        .unwrap();
        let out = predict_flows(&s, &QuerySet::all(1), &c, &w).unwrap();
        assert_eq!(out.len(), 1);
        let p = out[0].as_ref().unwrap();
        assert_eq!((p.event_index, p.nx, p.ny), (0, 1.0, 0.0));
    }

    #[test]
    fn duplicate_queries_and_timestamps() {
        let c = cfg(16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_weights(&mut rng, &c, 12);
        let s = EventSlice::new(
            vec![Event::new(0.0, 4, 4), Event::new(0.016, 4, 4)],
            0.0,
            0.032,
            CameraGeometry::new(9, 9).unwrap(),
        )
        .unwrap();
        let out = predict_flows(&s, &QuerySet::new(vec![0, 1, 0], 2).unwrap(), &c, &w).unwrap();
        let p: Vec<FlowPrediction> = out.into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(p[0], p[2]);
        assert_ne!((p[0].nx, p[0].ny), (p[1].nx, p[1].ny));
    }

    #[test]
    fn dimension_mismatch() {
        let w = MlpWeights::constant(generate_bases(&cfg(64)), 4, [0.0, 0.0]);
        let s = EventSlice::new(vec![], 0.0, 0.032, CameraGeometry::new(4, 4).unwrap()).unwrap();
        assert!(matches!(
            predict_flows(&s, &QuerySet::default(), &cfg(32), &w),
            Err(Error::DimensionMismatch {
                expected: 32,
                actual: 64,
                ..
            })
        ));
    }

    #[test]
    fn prediction_only_sees_neighborhood() {
        let c = cfg(16);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_weights(&mut rng, &c, 8);
        let g = CameraGeometry::new(30, 30).unwrap();
        let events: Vec<Event> = (0..400)
            .map(|_| {
                Event::new(
                    rng.gen_range(0.0..0.032),
                    rng.gen_range(0..30),
                    rng.gen_range(0..30),
                )
            })
            .collect();
        let s = EventSlice::new(events, 0.0, 0.032, g).unwrap();
        let q = s.events()[123];
        let full = predict_flows(&s, &QuerySet::new(vec![123], 400).unwrap(), &c, &w).unwrap();
        let kept: Vec<Event> = s
            .events()
            .iter()
            .copied()
            .filter(|e| {
                (e.x as i64 - q.x as i64).abs() <= 3 && (e.y as i64 - q.y as i64).abs() <= 3
            })
            .collect();
        let idx = kept.iter().position(|e| *e == q).unwrap();
        let pruned = EventSlice::new(kept.clone(), 0.0, 0.032, g).unwrap();
        let part = predict_flows(
            &pruned,
            &QuerySet::new(vec![idx], kept.len()).unwrap(),
            &c,
            &w,
        )
        .unwrap();
        let (a, b) = (full[0].as_ref().unwrap(), part[0].as_ref().unwrap());
        assert!((a.nx - b.nx).abs() <= 1e-6 * a.nx.abs().max(1.0));
        assert!((a.ny - b.ny).abs() <= 1e-6 * a.ny.abs().max(1.0));
    }
}
