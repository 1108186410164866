//! Direct evaluation of the local event encoding.
//!
//! Walks every event of the slice, tests neighborhood membership and sums
//! `exp(i·[(t_k-t_0)/δt, (x_k-x_0)/δx, (y_k-y_0)/δy]·[T; X; Y])` one term at
//! a time. Quadratic in the slice size; used only to check the pooled path.

use num_complex::Complex;

use super::{Bases, Embedding};
use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::event::{Event, EventSlice};

/// Events of `slice` within the `(δx, δy)` window of `query`.
pub fn neighborhood<'a>(
    slice: &'a EventSlice,
    query: &'a Event,
    cfg: &'a EncoderConfig,
) -> impl Iterator<Item = &'a Event> + 'a {
    slice.events().iter().filter(move |e| {
        (e.x as i64 - query.x as i64).abs() <= cfg.delta_x as i64
            && (e.y as i64 - query.y as i64).abs() <= cfg.delta_y as i64
    })
}

pub fn oracle_encode(
    slice: &EventSlice,
    query: &Event,
    bases: &Bases,
    cfg: &EncoderConfig,
) -> Result<Embedding<f64>> {
    let dim = bases.dim();
    let mut sum = vec![Complex::new(0.0, 0.0); dim];
    let mut n = 0usize;
    for e in neighborhood(slice, query, cfg) {
        let dt = (e.t - query.t) / cfg.delta_t;
        let dx = (e.x as f64 - query.x as f64) / cfg.delta_x as f64;
        let dy = (e.y as f64 - query.y as f64) / cfg.delta_y as f64;
        for (j, acc) in sum.iter_mut().enumerate() {
            let angle = dt * bases.t[j] + dx * bases.x[j] + dy * bases.y[j];
            let (s, c) = angle.sin_cos();
            *acc += Complex::new(c, s);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyNeighborhood {
            t: query.t,
            x: query.x,
            y: query.y,
        });
    }
    let inv = 1.0 / n as f64;
    Ok(Embedding {
        values: sum.into_iter().map(|z| z * inv).collect(),
        count: n,
    })
}
