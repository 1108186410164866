//! Random Fourier feature encoding of local events, computed by pixel-grid
//! pooling.

mod bases;
mod grid;
pub mod kde;
mod oracle;
mod phase;
pub mod rng;

use num_complex::Complex;
use rayon::prelude::*;

pub use bases::{generate_bases, Bases, BASES_MAGIC};
pub use grid::PixelGrid;
pub use kde::{kde_direct, reconstruct_density, rff_limit_density};
pub use oracle::{neighborhood, oracle_encode};
pub use phase::{precompute_spatial_phases, SpatialPhaseTable};

use crate::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::event::{CameraGeometry, Event, EventSlice, QuerySet};
use crate::real::Real;

/// Encoding of one event's neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F> {
    pub values: Vec<Complex<F>>,
    /// Number of events in the neighborhood, including the query itself.
    pub count: usize,
}

impl<F: Real> Embedding<F> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn to_f64(&self) -> Embedding<f64> {
        Embedding {
            values: self
                .values
                .iter()
                .map(|z| Complex::new(z.re.to_f64(), z.im.to_f64()))
                .collect(),
            count: self.count,
        }
    }
}

/// Bases and spatial phases for one configuration, reusable across slices.
#[derive(Debug, Clone)]
pub struct Encoder<F> {
    cfg: EncoderConfig,
    bases: Bases,
    t_freq: Vec<F>,
    table: SpatialPhaseTable<F>,
}

impl<F: Real> Encoder<F> {
    /// Generates the bases from the configured seeds.
    pub fn new(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_bases(cfg, generate_bases(cfg))
    }

    /// Uses externally supplied bases, e.g. the ones shipped in a weight file.
    pub fn with_bases(cfg: &EncoderConfig, bases: Bases) -> Result<Self> {
        cfg.validate()?;
        if bases.dim() != cfg.dim {
            return Err(Error::DimensionMismatch {
                what: "bases dimension",
                expected: cfg.dim,
                actual: bases.dim(),
            });
        }
        let table = precompute_spatial_phases(&bases, cfg);
        let t_freq = bases.t.iter().map(|&v| F::of(v)).collect();
        Ok(Encoder {
            cfg: cfg.clone(),
            bases,
            t_freq,
            table,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn bases(&self) -> &Bases {
        &self.bases
    }

    pub fn table(&self) -> &SpatialPhaseTable<F> {
        &self.table
    }

    pub fn accumulate(&self, slice: &EventSlice) -> Result<PixelGrid<F>> {
        grid::accumulate(slice, &self.t_freq, &self.cfg)
    }

    /// Like [`Encoder::accumulate`], but rebuilds `grid` in place. Reusing
    /// one grid across slices avoids clearing the whole sensor each time.
    pub fn accumulate_into(&self, grid: &mut PixelGrid<F>, slice: &EventSlice) -> Result<()> {
        grid::accumulate_into(grid, slice, &self.t_freq, &self.cfg)
    }

    /// An empty grid for `geometry`, for use with [`Encoder::accumulate_into`].
    pub fn empty_grid(&self, geometry: CameraGeometry) -> PixelGrid<F> {
        PixelGrid::zeros(geometry, &self.cfg, 0.0)
    }

    /// Pools one query, which must be an event of the slice the grid was
    /// built from, with its timestamp in the same clock.
    pub fn pool(&self, grid: &PixelGrid<F>, query: &Event) -> Result<Embedding<F>> {
        if grid.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                what: "grid dimension",
                expected: self.cfg.dim,
                actual: grid.dim(),
            });
        }
        grid::pool(grid, &self.table, &self.t_freq, query)
    }

    /// Pools every query in parallel. Results are in query order.
    pub fn pool_all(&self, grid: &PixelGrid<F>, queries: &[Event]) -> Vec<Result<Embedding<F>>> {
        queries.par_iter().map(|q| self.pool(grid, q)).collect()
    }

    /// Accumulates the slice once and pools each queried event, reporting
    /// failures per query.
    pub fn encode_each(
        &self,
        slice: &EventSlice,
        queries: &QuerySet,
    ) -> Result<Vec<Result<Embedding<F>>>> {
        let mut grid = self.empty_grid(slice.geometry());
        self.encode_each_with(&mut grid, slice, queries)
    }

    /// [`Encoder::encode_each`] on a reusable grid.
    pub fn encode_each_with(
        &self,
        grid: &mut PixelGrid<F>,
        slice: &EventSlice,
        queries: &QuerySet,
    ) -> Result<Vec<Result<Embedding<F>>>> {
        self.accumulate_into(grid, slice)?;
        let grid = &*grid;
        let events = slice.events();
        let query_events: Vec<Event> = queries
            .indices()
            .iter()
            .map(|&k| {
                events.get(k).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "query index {k} out of range for {} events",
                        events.len()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(self.pool_all(grid, &query_events))
    }

    pub fn encode(&self, slice: &EventSlice, queries: &QuerySet) -> Result<Vec<Embedding<F>>> {
        self.encode_each(slice, queries)?.into_iter().collect()
    }

    /// Reference encoding of one query by direct summation.
    pub fn oracle(&self, slice: &EventSlice, query: &Event) -> Result<Embedding<f64>> {
        oracle_encode(slice, query, &self.bases, &self.cfg)
    }
}

/// Builds the pixel grid of `slice`.
pub fn accumulate_grid<F: Real>(
    slice: &EventSlice,
    bases: &Bases,
    cfg: &EncoderConfig,
) -> Result<PixelGrid<F>> {
    cfg.validate()?;
    if bases.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            what: "bases dimension",
            expected: cfg.dim,
            actual: bases.dim(),
        });
    }
    let t_freq: Vec<F> = bases.t.iter().map(|&v| F::of(v)).collect();
    grid::accumulate(slice, &t_freq, cfg)
}

pub fn pool_embedding<F: Real>(
    grid: &PixelGrid<F>,
    table: &SpatialPhaseTable<F>,
    query: &Event,
    bases: &Bases,
) -> Result<Embedding<F>> {
    let t_freq: Vec<F> = bases.t.iter().map(|&v| F::of(v)).collect();
    grid::pool(grid, table, &t_freq, query)
}

/// One-shot encoding: bases from the configured seeds, grid, then pooling.
pub fn encode<F: Real>(
    slice: &EventSlice,
    queries: &QuerySet,
    cfg: &EncoderConfig,
) -> Result<Vec<Embedding<F>>> {
    Encoder::<F>::new(cfg)?.encode(&slice.rebase(), queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(radius: u32, dim: usize) -> EncoderConfig {
        EncoderConfig {
            delta_t: 0.016,
            delta_x: radius,
            delta_y: radius,
            dim,
            ..EncoderConfig::default()
        }
    }

    fn slice(events: Vec<Event>, w: u32, h: u32) -> EventSlice {
        EventSlice::new(events, 0.0, 0.032, CameraGeometry::new(w, h).unwrap()).unwrap()
    }

    fn random_slice(rng: &mut ChaCha8Rng, n: usize, w: u32, h: u32, t_start: f64) -> EventSlice {
        let events = (0..n)
            .map(|_| {
                Event::new(
                    t_start + rng.gen_range(0.0..0.032),
                    rng.gen_range(0..w),
                    rng.gen_range(0..h),
                )
            })
            .collect();
        EventSlice::new(events, t_start, 0.032, CameraGeometry::new(w, h).unwrap()).unwrap()
    }

    /// max_j |a_j - b_j| / max(|b_j|, 1); components are means of unit phasors.
    fn max_rel_err<F: Real>(a: &Embedding<F>, b: &Embedding<f64>) -> f64 {
        a.to_f64()
            .values
            .iter()
            .zip(&b.values)
            .map(|(p, q)| (p - q).norm() / q.norm().max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_sums_phases_per_pixel() {
        let c = cfg(2, 8);
        let b = generate_bases(&c);
        let s = slice(vec![Event::new(0.0, 3, 4), Event::new(0.0, 3, 4)], 8, 8);
        let g = accumulate_grid::<f64>(&s, &b, &c).unwrap();
        assert_eq!(g.count_at(3, 4), 2);
        assert!(g
            .embed_at(3, 4)
            .iter()
            .all(|z| *z == Complex::new(2.0, 0.0)));
        assert_eq!(g.total_count(), 2);

        let s = slice(vec![Event::new(0.016, 3, 4)], 8, 8);
        let g = accumulate_grid::<f64>(&s, &b, &c).unwrap();
        for (j, z) in g.embed_at(3, 4).iter().enumerate() {
            assert!((z.re - b.t[j].cos()).abs() < 1e-12);
            assert!((z.im - b.t[j].sin()).abs() < 1e-12);
        }

        let g = accumulate_grid::<f32>(&slice(vec![], 8, 8), &b, &c).unwrap();
        assert_eq!(g.total_count(), 0);
        assert!(g.re.iter().chain(&g.im).all(|&v| v == 0.0));
    }

    #[test]
    fn single_event_is_all_ones() {
        let c = cfg(3, 16);
        let s = slice(vec![Event::new(0.007, 2, 2)], 5, 5);
        let e64 = encode::<f64>(&s, &QuerySet::all(1), &c).unwrap();
        assert_eq!(e64[0].count, 1);
        assert!(e64[0].values.iter().all(|z| *z == Complex::new(1.0, 0.0)));
        let e32 = encode::<f32>(&s, &QuerySet::all(1), &c).unwrap();
        assert!(e32[0].values.iter().all(|z| *z == Complex::new(1.0, 0.0)));
    }

    #[test]
    fn two_events_same_pixel() {
        let c = cfg(2, 8);
        let b = generate_bases(&c);
        let s = slice(vec![Event::new(0.0, 1, 1), Event::new(0.016, 1, 1)], 4, 4);
        let embs = encode::<f64>(&s, &QuerySet::new(vec![0], 2).unwrap(), &c).unwrap();
        for (j, z) in embs[0].values.iter().enumerate() {
            let expect = (Complex::new(1.0, 0.0) + Complex::from_polar(1.0, b.t[j])) / 2.0;
            assert!((z - expect).norm() < 1e-12);
        }
        let oracle = oracle_encode(&s, &s.events()[0], &b, &c).unwrap();
        assert!(max_rel_err(&embs[0], &oracle) < 1e-12);
    }

    #[test]
    fn empty_queries_still_build() {
        let c = cfg(2, 4);
        let s = slice(vec![Event::new(0.0, 1, 1)], 4, 4);
        assert!(encode::<f32>(&s, &QuerySet::default(), &c)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn empty_neighborhood_is_an_error() {
        let c = cfg(1, 4);
        let enc = Encoder::<f64>::new(&c).unwrap();
        let s = slice(vec![Event::new(0.0, 0, 0)], 8, 8);
        let g = enc.accumulate(&s).unwrap();
        let err = enc.pool(&g, &Event::new(0.0, 5, 5)).unwrap_err();
        assert!(matches!(err, Error::EmptyNeighborhood { x: 5, y: 5, .. }));
        assert!(enc.pool(&g, &Event::new(0.0, 8, 0)).is_err());
        // window is populated but the query pixel is not
        assert!(enc.pool(&g, &Event::new(0.0, 1, 0)).is_err());
        assert!(oracle_encode(&s, &Event::new(0.0, 5, 5), enc.bases(), &c).is_err());
    }

    #[test]
    fn query_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_slice(&mut rng, 300, 20, 20, 0.0);
        let c = cfg(3, 16);
        let enc = Encoder::<f32>::new(&c).unwrap();
        let fwd = enc
            .encode(&s, &QuerySet::new(vec![3, 100, 7], 300).unwrap())
            .unwrap();
        let rev = enc
            .encode(&s, &QuerySet::new(vec![7, 100, 3], 300).unwrap())
            .unwrap();
        assert_eq!(fwd[0], rev[2]);
        assert_eq!(fwd[1], rev[1]);
        assert_eq!(fwd[2], rev[0]);
    }

    #[test]
    fn removing_an_event_restores_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_slice(&mut rng, 50, 10, 10, 0.0);
        let c = cfg(2, 8);
        let enc = Encoder::<f64>::new(&c).unwrap();
        let mut g = enc.accumulate(&s).unwrap();
        let victim = s.events()[17];
        let before_count = g.count_at(victim.x, victim.y);
        let before = g.embed_at(victim.x, victim.y);
        g.remove(&victim, &enc.t_freq);
        assert_eq!(g.count_at(victim.x, victim.y), before_count - 1);
        assert_eq!(g.total_count(), 49);

        let mut rest = s.events().to_vec();
        rest.remove(17);
        let pruned = enc
            .accumulate(&EventSlice::new(rest, 0.0, 0.032, s.geometry()).unwrap())
            .unwrap();
        for (a, b) in g
            .embed_at(victim.x, victim.y)
            .iter()
            .zip(pruned.embed_at(victim.x, victim.y))
        {
            assert!((a - b).norm() < 1e-12);
        }
        let tau = victim.t / c.delta_t;
        for (j, (a, b)) in before
            .iter()
            .zip(g.embed_at(victim.x, victim.y))
            .enumerate()
        {
            let term = Complex::from_polar(1.0, enc.bases().t[j] * tau);
            assert!((a - b - term).norm() < 1e-12);
        }
    }

    #[test]
    fn parallel_accumulate_is_bitwise_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_slice(&mut rng, 20_000, 64, 48, 0.0);
        let c = cfg(4, 16);
        let enc = Encoder::<f32>::new(&c).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| enc.accumulate(&s).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| enc.accumulate(&s).unwrap());
        assert_eq!(serial.count, parallel.count);
        assert!(serial
            .re
            .iter()
            .zip(&parallel.re)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(serial
            .im
            .iter()
            .zip(&parallel.im)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn reused_grid_matches_fresh_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = cfg(3, 8);
        let enc = Encoder::<f32>::new(&c).unwrap();
        let mut grid = enc.empty_grid(CameraGeometry::new(40, 30).unwrap());
        for (k, n) in [9000usize, 40, 0, 6000].into_iter().enumerate() {
            let s = random_slice(&mut rng, n, 40, 30, 0.032 * k as f64);
            enc.accumulate_into(&mut grid, &s).unwrap();
            let fresh = enc.accumulate(&s).unwrap();
            assert_eq!(grid.count, fresh.count);
            assert_eq!(grid.re, fresh.re);
            assert_eq!(grid.im, fresh.im);
            assert_eq!((grid.t_origin(), grid.events()), (fresh.t_origin(), n));
        }

        // a grid for another sensor is replaced
        let s = random_slice(&mut rng, 100, 12, 9, 0.0);
        enc.accumulate_into(&mut grid, &s).unwrap();
        assert_eq!(grid.geometry(), s.geometry());
        assert_eq!(grid.re, enc.accumulate(&s).unwrap().re);
    }

    #[test]
    fn emptied_pixel_is_exactly_zero() {
        let c = cfg(1, 8);
        let enc = Encoder::<f32>::new(&c).unwrap();
        let s = slice(
            vec![Event::new(0.0031, 2, 2), Event::new(0.0177, 2, 2)],
            5,
            5,
        );
        let mut g = enc.accumulate(&s).unwrap();
        g.remove(&s.events()[1], &enc.t_freq);
        g.remove(&s.events()[0], &enc.t_freq);
        assert_eq!(g.count_at(2, 2), 0);
        assert!(g.embed_at(2, 2).iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn bases_dimension_must_match() {
        let c = cfg(2, 8);
        let other = generate_bases(&EncoderConfig {
            dim: 4,
            ..c.clone()
        });
        assert!(matches!(
            Encoder::<f32>::with_bases(&c, other),
            Err(Error::DimensionMismatch {
                expected: 8,
                actual: 4,
                ..
            })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pooled_matches_oracle(seed in any::<u64>(), n in 1usize..200, radius in 1u32..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_slice(&mut rng, n, 32, 32, 0.0);
            let c = cfg(radius, 32);
            let e64 = Encoder::<f64>::new(&c).unwrap();
            let e32 = Encoder::<f32>::new(&c).unwrap();
            let q = QuerySet::all(n);
            let p64 = e64.encode(&s, &q).unwrap();
            let p32 = e32.encode(&s, &q).unwrap();
            for (k, e) in s.events().iter().enumerate() {
                let oracle = e64.oracle(&s, e).unwrap();
                prop_assert_eq!(p64[k].count, oracle.count);
                prop_assert!(max_rel_err(&p64[k], &oracle) < 1e-6);
                prop_assert!(max_rel_err(&p32[k], &oracle) < 1e-3);
                for z in &p64[k].values {
                    prop_assert!(z.norm() <= 1.0 + 1e-6);
                }
            }
        }

        #[test]
        fn translation_equivariance(
            seed in any::<u64>(),
            shift_t in 0.0f64..50.0,
            shift_x in 0u32..8,
            shift_y in 0u32..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_slice(&mut rng, 120, 16, 16, 0.0);
            let g = CameraGeometry::new(24, 24).unwrap();
            let moved = EventSlice::new(
                base.events().iter().map(|e| Event::new(e.t + shift_t, e.x + shift_x, e.y + shift_y)).collect(),
                shift_t,
                0.032,
                g,
            ).unwrap();
            let original = EventSlice::new(base.events().to_vec(), 0.0, 0.032, g).unwrap();
            let c = cfg(3, 16);
            let q = QuerySet::all(120);
            let a = encode::<f64>(&original, &q, &c).unwrap();
            let b = encode::<f64>(&moved, &q, &c).unwrap();
            for (p, r) in a.iter().zip(&b) {
                prop_assert!(max_rel_err(p, r) < 1e-6);
            }
        }
    }
}
