use num_complex::Complex;

use super::Bases;
use crate::config::EncoderConfig;
use crate::real::Real;

/// Spatial phase factors `exp(i·dx/δx·X) ⊙ exp(i·dy/δy·Y)` for every integer
/// offset of the pooling window.
///
/// Stored as separate real and imaginary planes, offset-major with the
/// embedding dimension innermost: entry `(dx, dy)` starts at
/// `((dy + δy) * (2δx + 1) + (dx + δx)) * D`. The row of a fixed `dy` is one
/// contiguous run, matching the grid layout.
#[derive(Debug, Clone)]
pub struct SpatialPhaseTable<F> {
    pub(crate) re: Vec<F>,
    pub(crate) im: Vec<F>,
    delta_x: i32,
    delta_y: i32,
    dim: usize,
}

impl<F: Real> SpatialPhaseTable<F> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radii(&self) -> (u32, u32) {
        (self.delta_x as u32, self.delta_y as u32)
    }

    pub(crate) fn row_len(&self) -> usize {
        (2 * self.delta_x as usize + 1) * self.dim
    }

    fn offset(&self, dx: i32, dy: i32) -> usize {
        assert!(
            dx.abs() <= self.delta_x && dy.abs() <= self.delta_y,
            "offset ({dx}, {dy}) outside the window"
        );
        let ww = 2 * self.delta_x + 1;
        (((dy + self.delta_y) * ww + (dx + self.delta_x)) as usize) * self.dim
    }

    /// Phase vector for pixel offset `(dx, dy)`.
    pub fn entry(&self, dx: i32, dy: i32) -> Vec<Complex<F>> {
        let o = self.offset(dx, dy);
        (0..self.dim)
            .map(|j| Complex::new(self.re[o + j], self.im[o + j]))
            .collect()
    }
}

pub fn precompute_spatial_phases<F: Real>(
    bases: &Bases,
    cfg: &EncoderConfig,
) -> SpatialPhaseTable<F> {
    let dim = bases.dim();
    let (rx, ry) = (cfg.delta_x as i32, cfg.delta_y as i32);
    let len = cfg.window_area() * dim;
    let mut re = Vec::with_capacity(len);
    let mut im = Vec::with_capacity(len);
    for dy in -ry..=ry {
        let fy = dy as f64 / ry as f64;
        for dx in -rx..=rx {
            let fx = dx as f64 / rx as f64;
            for j in 0..dim {
                let (sx, cx) = (fx * bases.x[j]).sin_cos();
                let (sy, cy) = (fy * bases.y[j]).sin_cos();
                let z = Complex::new(cx, sx) * Complex::new(cy, sy);
                re.push(F::of(z.re));
                im.push(F::of(z.im));
            }
        }
    }
    SpatialPhaseTable {
        re,
        im,
        delta_x: rx,
        delta_y: ry,
        dim,
    }
}
