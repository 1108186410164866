//! Kernel density view of an embedding.
//!
//! [`kde_direct`] evaluates the Gaussian kernel density of the centered
//! neighborhood at an offset `(t, x, y)` from the query event, with offsets
//! normalized by `(δt, δx, δy)`:
//!
//! ```text
//! g(p) = 1/n Σ_k exp(-|p - d_k|² / (2σ²))
//! ```
//!
//! [`reconstruct_density`] recovers a density from the embedding alone,
//! `1/D · Re⟨emb, exp(i·p·[T; X; Y])⟩`. For frequencies drawn from
//! `N(0, σ²)` this converges, as `D` grows, to the kernel
//! `exp(-σ²|p - d_k|² / 2)`. The two kernels agree exactly when `σ² = 1`;
//! for other variances compare against [`rff_limit_density`].

use num_complex::Complex;

use super::oracle::neighborhood;
use super::{Bases, Embedding};
use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::event::{Event, EventSlice};
use crate::real::Real;

/// Offset of a probe point from the query event: `(t seconds, x px, y px)`.
pub type Offset = [f64; 3];

fn squared_distances<'a>(
    slice: &'a EventSlice,
    query: &'a Event,
    point: Offset,
    cfg: &'a EncoderConfig,
) -> Result<Vec<f64>> {
    let d: Vec<f64> = neighborhood(slice, query, cfg)
        .map(|e| {
            let dt = (point[0] - (e.t - query.t)) / cfg.delta_t;
            let dx = (point[1] - (e.x as f64 - query.x as f64)) / cfg.delta_x as f64;
            let dy = (point[2] - (e.y as f64 - query.y as f64)) / cfg.delta_y as f64;
            dt * dt + dx * dx + dy * dy
        })
        .collect();
    if d.is_empty() {
        return Err(Error::EmptyNeighborhood {
            t: query.t,
            x: query.x,
            y: query.y,
        });
    }
    Ok(d)
}

/// Kernel density estimate with bandwidth `σ²`.
pub fn kde_direct(
    slice: &EventSlice,
    query: &Event,
    point: Offset,
    cfg: &EncoderConfig,
) -> Result<f64> {
    let d = squared_distances(slice, query, point, cfg)?;
    let scale = 1.0 / (2.0 * cfg.sigma2);
    Ok(d.iter().map(|r2| (-r2 * scale).exp()).sum::<f64>() / d.len() as f64)
}

/// Density that [`reconstruct_density`] converges to as `D → ∞`.
pub fn rff_limit_density(
    slice: &EventSlice,
    query: &Event,
    point: Offset,
    cfg: &EncoderConfig,
) -> Result<f64> {
    let d = squared_distances(slice, query, point, cfg)?;
    let scale = cfg.sigma2 / 2.0;
    Ok(d.iter().map(|r2| (-r2 * scale).exp()).sum::<f64>() / d.len() as f64)
}

pub fn reconstruct_density<F: Real>(
    emb: &Embedding<F>,
    point: Offset,
    bases: &Bases,
    cfg: &EncoderConfig,
) -> Result<f64> {
    let dim = bases.dim();
    if emb.values.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "embedding dimension",
            expected: dim,
            actual: emb.values.len(),
        });
    }
    let pt = point[0] / cfg.delta_t;
    let px = point[1] / cfg.delta_x as f64;
    let py = point[2] / cfg.delta_y as f64;
    let sum: f64 = emb
        .values
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let probe =
                Complex::from_polar(1.0, pt * bases.t[j] + px * bases.x[j] + py * bases.y[j]);
            (Complex::new(z.re.to_f64(), z.im.to_f64()) * probe.conj()).re
        })
        .sum();
    Ok(sum / dim as f64)
}
