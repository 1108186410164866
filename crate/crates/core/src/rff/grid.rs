use num_complex::Complex;
use rayon::prelude::*;

use super::{Embedding, SpatialPhaseTable};
use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::event::{CameraGeometry, Event, EventSlice};
use crate::real::Real;

/// Per-pixel sums of temporal phases `exp(i·t/δt·T)` and event counts.
///
/// The storage carries a border of zeros, `δx` columns and `δy` rows wide on
/// each side, so a pooling window centred on any in-image pixel stays in
/// bounds. Pixels outside the sensor never receive events, so the border
/// contributes exactly nothing.
///
/// Timestamps are taken relative to the slice start (`t_origin`), which is
/// equivalent to pooling over the rebased slice.
#[derive(Debug, Clone)]
pub struct PixelGrid<F> {
    pub(crate) re: Vec<F>,
    pub(crate) im: Vec<F>,
    pub(crate) count: Vec<u32>,
    geometry: CameraGeometry,
    pad_x: usize,
    pad_y: usize,
    dim: usize,
    t_origin: f64,
    delta_t: f64,
    events: usize,
}

impl<F: Real> PixelGrid<F> {
    pub(crate) fn zeros(geometry: CameraGeometry, cfg: &EncoderConfig, t_origin: f64) -> Self {
        let pad_x = cfg.delta_x as usize;
        let pad_y = cfg.delta_y as usize;
        let wp = geometry.width as usize + 2 * pad_x;
        let hp = geometry.height as usize + 2 * pad_y;
        PixelGrid {
            re: vec![F::zero(); wp * hp * cfg.dim],
            im: vec![F::zero(); wp * hp * cfg.dim],
            count: vec![0; wp * hp],
            geometry,
            pad_x,
            pad_y,
            dim: cfg.dim,
            t_origin,
            delta_t: cfg.delta_t,
            events: 0,
        }
    }

    pub fn geometry(&self) -> CameraGeometry {
        self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Start time of the slice the grid was built from.
    pub fn t_origin(&self) -> f64 {
        self.t_origin
    }

    /// Number of events accumulated.
    pub fn events(&self) -> usize {
        self.events
    }

    fn padded_width(&self) -> usize {
        self.geometry.width as usize + 2 * self.pad_x
    }

    /// Index of in-image pixel `(x, y)` in the padded pixel plane.
    fn pixel_index(&self, x: u32, y: u32) -> usize {
        (y as usize + self.pad_y) * self.padded_width() + x as usize + self.pad_x
    }

    pub fn count_at(&self, x: u32, y: u32) -> u32 {
        self.count[self.pixel_index(x, y)]
    }

    pub fn embed_at(&self, x: u32, y: u32) -> Vec<Complex<F>> {
        let o = self.pixel_index(x, y) * self.dim;
        (0..self.dim)
            .map(|j| Complex::new(self.re[o + j], self.im[o + j]))
            .collect()
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    /// Adds one event's temporal phase to its pixel.
    pub(crate) fn add(&mut self, event: &Event, t_freq: &[F]) {
        let p = self.pixel_index(event.x, event.y);
        self.count[p] += 1;
        let tau = F::of((event.t - self.t_origin) / self.delta_t);
        let o = p * self.dim;
        add_phase(
            &mut self.re[o..o + self.dim],
            &mut self.im[o..o + self.dim],
            t_freq,
            tau,
            F::one(),
        );
        self.events += 1;
    }

    /// Reverses [`PixelGrid::add`] for an event that was accumulated earlier.
    pub fn remove(&mut self, event: &Event, t_freq: &[F]) {
        let p = self.pixel_index(event.x, event.y);
        assert!(
            self.count[p] > 0,
            "no event to remove at ({}, {})",
            event.x,
            event.y
        );
        self.count[p] -= 1;
        let tau = F::of((event.t - self.t_origin) / self.delta_t);
        let o = p * self.dim;
        add_phase(
            &mut self.re[o..o + self.dim],
            &mut self.im[o..o + self.dim],
            t_freq,
            tau,
            -F::one(),
        );
        if self.count[p] == 0 {
            // drop rounding residue so an empty pixel is exactly zero
            self.re[o..o + self.dim].fill(F::zero());
            self.im[o..o + self.dim].fill(F::zero());
        }
        self.events -= 1;
    }

    /// Whether the grid can be reused for slices of `geometry` under `cfg`.
    pub fn fits(&self, geometry: CameraGeometry, cfg: &EncoderConfig) -> bool {
        self.geometry == geometry
            && self.dim == cfg.dim
            && self.pad_x == cfg.delta_x as usize
            && self.pad_y == cfg.delta_y as usize
            && self.delta_t == cfg.delta_t
    }

    /// Empties the grid for a new slice starting at `t_origin`. Only pixels
    /// holding events are cleared.
    pub fn reset(&mut self, t_origin: f64) {
        let dim = self.dim;
        for (p, c) in self.count.iter_mut().enumerate() {
            if *c != 0 {
                *c = 0;
                self.re[p * dim..(p + 1) * dim].fill(F::zero());
                self.im[p * dim..(p + 1) * dim].fill(F::zero());
            }
        }
        self.t_origin = t_origin;
        self.events = 0;
    }
}

#[inline]
fn add_phase<F: Real>(re: &mut [F], im: &mut [F], t_freq: &[F], tau: F, sign: F) {
    for ((r, i), &w) in re.iter_mut().zip(im.iter_mut()).zip(t_freq) {
        let (s, c) = (w * tau).sin_cos();
        *r += sign * c;
        *i += sign * s;
    }
}

/// Builds the pixel grid of a slice.
///
/// Rows are split into bands processed in parallel. Each band owns its rows
/// and visits its events in slice order, so the result is bitwise identical
/// for every thread count.
pub(crate) fn accumulate<F: Real>(
    slice: &EventSlice,
    t_freq: &[F],
    cfg: &EncoderConfig,
) -> Result<PixelGrid<F>> {
    let mut grid = PixelGrid::<F>::zeros(slice.geometry(), cfg, slice.t_start());
    accumulate_into(&mut grid, slice, t_freq, cfg)?;
    Ok(grid)
}

/// Rebuilds `grid` from `slice`, reusing its storage when it fits.
pub(crate) fn accumulate_into<F: Real>(
    grid: &mut PixelGrid<F>,
    slice: &EventSlice,
    t_freq: &[F],
    cfg: &EncoderConfig,
) -> Result<()> {
    let geometry = slice.geometry();
    let events = slice.events();
    for (i, e) in events.iter().enumerate() {
        geometry.check(i, e)?;
    }
    if grid.fits(geometry, cfg) {
        grid.reset(slice.t_start());
    } else {
        *grid = PixelGrid::zeros(geometry, cfg, slice.t_start());
    }

    let height = geometry.height as usize;
    let bands = (rayon::current_num_threads() * 4).min(height);
    if bands <= 1 || events.len() < 4096 {
        for e in events {
            grid.add(e, t_freq);
        }
        return Ok(());
    }

    let rows_per_band = height.div_ceil(bands);
    let bands = height.div_ceil(rows_per_band);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (k, e) in events.iter().enumerate() {
        members[e.y as usize / rows_per_band].push(k as u32);
    }

    let wp = grid.padded_width();
    let dim = grid.dim;
    let (pad_x, pad_y) = (grid.pad_x, grid.pad_y);
    let (t_origin, delta_t) = (grid.t_origin, grid.delta_t);
    let interior = pad_y * wp..(pad_y + height) * wp;
    let band_px = rows_per_band * wp;

    let re = &mut grid.re[interior.start * dim..interior.end * dim];
    let im = &mut grid.im[interior.start * dim..interior.end * dim];
    let count = &mut grid.count[interior];
    re.par_chunks_mut(band_px * dim)
        .zip(im.par_chunks_mut(band_px * dim))
        .zip(count.par_chunks_mut(band_px))
        .zip(members.par_iter())
        .enumerate()
        .for_each(|(band, (((re, im), count), members))| {
            let row0 = band * rows_per_band;
            for &k in members {
                let e = &events[k as usize];
                let p = (e.y as usize - row0) * wp + e.x as usize + pad_x;
                count[p] += 1;
                let tau = F::of((e.t - t_origin) / delta_t);
                let o = p * dim;
                add_phase(
                    &mut re[o..o + dim],
                    &mut im[o..o + dim],
                    t_freq,
                    tau,
                    F::one(),
                );
            }
        });
    grid.events = events.len();
    Ok(())
}

/// Pools the window around `query` and de-phases it by the query time.
///
/// `query` must be one of the accumulated events. Its own term is taken out
/// of the window sum and added back as the exact phase `1`.
pub(crate) fn pool<F: Real>(
    grid: &PixelGrid<F>,
    table: &SpatialPhaseTable<F>,
    t_freq: &[F],
    query: &Event,
) -> Result<Embedding<F>> {
    let dim = grid.dim;
    if table.dim() != dim || t_freq.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "phase table dimension",
            expected: dim,
            actual: table.dim(),
        });
    }
    if table.radii() != (grid.pad_x as u32, grid.pad_y as u32) {
        return Err(Error::invalid(
            "phase table radii differ from the grid border",
        ));
    }
    if !grid.geometry.contains(query.x as i64, query.y as i64) {
        return Err(Error::OutOfBounds {
            index: 0,
            x: query.x as i64,
            y: query.y as i64,
            width: grid.geometry.width,
            height: grid.geometry.height,
        });
    }

    let wp = grid.padded_width();
    let ww = 2 * grid.pad_x + 1;
    let wh = 2 * grid.pad_y + 1;
    let row_len = table.row_len();
    debug_assert_eq!(row_len, ww * dim);

    // with the border, the window's top-left corner in padded coordinates
    // is the query's unpadded (x, y)
    let (x0, y0) = (query.x as usize, query.y as usize);

    let mut n = 0u64;
    for dy in 0..wh {
        let p = (y0 + dy) * wp + x0;
        n += grid.count[p..p + ww].iter().map(|&c| c as u64).sum::<u64>();
    }
    if n == 0 {
        return Err(Error::EmptyNeighborhood {
            t: query.t,
            x: query.x,
            y: query.y,
        });
    }
    if grid.count_at(query.x, query.y) == 0 {
        return Err(Error::invalid(format!(
            "query at ({}, {}) is not an accumulated event",
            query.x, query.y
        )));
    }

    let mut acc_re = vec![F::zero(); dim];
    let mut acc_im = vec![F::zero(); dim];
    for dy in 0..wh {
        let g = ((y0 + dy) * wp + x0) * dim;
        let grow_re = &grid.re[g..g + row_len];
        let grow_im = &grid.im[g..g + row_len];
        let trow_re = &table.re[dy * row_len..(dy + 1) * row_len];
        let trow_im = &table.im[dy * row_len..(dy + 1) * row_len];
        for (((gre, gim), tre), tim) in grow_re
            .chunks_exact(dim)
            .zip(grow_im.chunks_exact(dim))
            .zip(trow_re.chunks_exact(dim))
            .zip(trow_im.chunks_exact(dim))
        {
            for (((ar, ai), (&gr, &gi)), (&tr, &ti)) in acc_re
                .iter_mut()
                .zip(acc_im.iter_mut())
                .zip(gre.iter().zip(gim))
                .zip(tre.iter().zip(tim))
            {
                *ar += gr * tr - gi * ti;
                *ai += gr * ti + gi * tr;
            }
        }
    }

    let tau0 = F::of((query.t - grid.t_origin) / grid.delta_t);
    let inv_n = F::one() / F::of(n as f64);
    let values = acc_re
        .iter()
        .zip(&acc_im)
        .zip(t_freq)
        .map(|((&ar, &ai), &w)| {
            let (s, c) = (w * tau0).sin_cos();
            let (ar, ai) = (ar - c, ai - s);
            // multiply by exp(-i·tau0·w)
            Complex::new(
                (ar * c + ai * s + F::one()) * inv_n,
                (ai * c - ar * s) * inv_n,
            )
        })
        .collect();
    Ok(Embedding {
        values,
        count: n as usize,
    })
}
