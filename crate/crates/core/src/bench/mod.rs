//! Staged throughput measurement.
//!
//! The three stages are timed in isolation: accumulation over all events of a
//! slice, pooling of queried events against a prebuilt grid, and the MLP on
//! prebuilt features. Each measurement discards warmup runs and reports the
//! median of the timed repetitions.

mod model;
mod synth;

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use model::{
    calibrate, estimate_runtime, fit_line, Calibration, LinearFit, RuntimeModel,
    NONLINEAR_RESIDUAL, REFERENCE_GPU_K10, REFERENCE_GPU_K8, REFERENCE_RTX2080TI_K8,
};
pub use synth::{synth_workload, Scene, SynthParams};

use crate::config::{EncoderConfig, Precision};
use crate::error::{Error, Result};
use crate::event::{CameraGeometry, Event, EventSlice};
use crate::head::{embed_to_features, MlpParams};
use crate::real::Real;
use crate::rff::Encoder;

/// Shortest median wall time accepted as a measurement.
pub const MIN_TIMED_SECONDS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Accumulate,
    Pool,
    Mlp,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Accumulate, Stage::Pool, Stage::Mlp];

    /// Row label in the summary table.
    pub fn label(self) -> &'static str {
        match self {
            Stage::Accumulate => "accumulate (grid build)",
            Stage::Pool => "pool (window sum)",
            Stage::Mlp => "two-layer network",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Stage::Accumulate => "events/s",
            Stage::Pool | Stage::Mlp => "flows/s",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Accumulate => "accumulate",
            Stage::Pool => "pool",
            Stage::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTiming {
    pub stage: Stage,
    /// Events for accumulation, flows otherwise.
    pub count: usize,
    pub wall_seconds: f64,
    pub rate: f64,
}

impl StageTiming {
    pub fn new(stage: Stage, count: usize, wall_seconds: f64) -> Result<Self> {
        if !(wall_seconds.is_finite() && wall_seconds > 0.0) {
            return Err(Error::invalid(format!(
                "wall time must be positive, got {wall_seconds}"
            )));
        }
        Ok(StageTiming {
            stage,
            count,
            wall_seconds,
            rate: count as f64 / wall_seconds,
        })
    }

    pub fn seconds_per_item(&self) -> f64 {
        self.wall_seconds / self.count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchProtocol {
    pub warmup: usize,
    pub repetitions: usize,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol {
            warmup: 2,
            repetitions: 5,
        }
    }
}

/// A slice and the events whose flow is predicted.
#[derive(Debug, Clone)]
pub struct Workload {
    pub slice: EventSlice,
    pub queries: Vec<Event>,
}

impl Workload {
    /// Uniform noise with `n_flows` queries drawn from the slice's events.
    pub fn uniform(
        n_events: usize,
        n_flows: usize,
        geometry: CameraGeometry,
        window: f64,
        seed: u64,
    ) -> Result<Self> {
        let (slice, _) = synth_workload(
            n_events,
            geometry,
            &SynthParams::new(Scene::UniformNoise, seed, window),
        )?;
        let queries = pick_queries(&slice, n_flows, seed);
        Ok(Workload { slice, queries })
    }
}

fn pick_queries(slice: &EventSlice, n: usize, seed: u64) -> Vec<Event> {
    if slice.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..n)
        .map(|_| slice.events()[rng.gen_range(0..slice.len())])
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times several runs round-robin and returns the median wall time of each.
///
/// Interleaving exposes every run to the same background load, so slow drift
/// on the machine does not bend a size sweep.
fn time_interleaved(protocol: &BenchProtocol, runners: &mut [Runner]) -> Result<Vec<f64>> {
    if protocol.warmup < 1 || protocol.repetitions < 1 {
        return Err(Error::invalid(
            "benchmarks need at least one warmup and one timed run",
        ));
    }
    for _ in 0..protocol.warmup {
        for r in runners.iter_mut() {
            (r.run)()?;
        }
    }
    let mut walls = vec![Vec::with_capacity(protocol.repetitions); runners.len()];
    for _ in 0..protocol.repetitions {
        for (r, w) in runners.iter_mut().zip(&mut walls) {
            let start = Instant::now();
            (r.run)()?;
            w.push(start.elapsed().as_secs_f64());
        }
    }
    walls
        .into_iter()
        .map(|w| {
            let wall = median(w);
            if wall < MIN_TIMED_SECONDS {
                return Err(Error::BelowTimerResolution {
                    seconds: wall,
                    minimum: MIN_TIMED_SECONDS,
                });
            }
            Ok(wall)
        })
        .collect()
}

/// A prepared stage run and the number of items it processes.
struct Runner {
    count: usize,
    run: Box<dyn FnMut() -> Result<()>>,
}

fn random_mlp(input: usize, hidden: usize) -> MlpParams<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut p = MlpParams::zeros(input, hidden);
    for v in p.iter_mut() {
        *v = rng.gen_range(-0.1..0.1);
    }
    p
}

/// Hidden width of the MLP timed by [`Stage::Mlp`].
pub const BENCH_HIDDEN: usize = 128;

fn prepare_typed<F: Real>(
    workload: &Workload,
    cfg: &EncoderConfig,
    stage: Stage,
) -> Result<Runner> {
    let encoder = Encoder::<F>::new(cfg)?;
    let slice = workload.slice.rebase();
    let shift = workload.slice.t_start();
    let queries: Vec<Event> = workload
        .queries
        .iter()
        .map(|q| Event {
            t: q.t - shift,
            ..*q
        })
        .collect();
    Ok(match stage {
        Stage::Accumulate => {
            // a pipeline reuses one grid across slices, so time a rebuild
            let mut grid = encoder.empty_grid(slice.geometry());
            Runner {
                count: slice.len(),
                run: Box::new(move || {
                    encoder.accumulate_into(&mut grid, std::hint::black_box(&slice))?;
                    std::hint::black_box(&grid);
                    Ok(())
                }),
            }
        }
        Stage::Pool => {
            let grid = encoder.accumulate(&slice)?;
            Runner {
                count: queries.len(),
                run: Box::new(move || {
                    for r in encoder.pool_all(&grid, std::hint::black_box(&queries)) {
                        std::hint::black_box(r?);
                    }
                    Ok(())
                }),
            }
        }
        Stage::Mlp => {
            let grid = encoder.accumulate(&slice)?;
            let features: Vec<Vec<f32>> = encoder
                .pool_all(&grid, &queries)
                .into_iter()
                .map(|e| {
                    e.map(|e| {
                        embed_to_features(&e)
                            .iter()
                            .map(|&v| v.to_f64() as f32)
                            .collect()
                    })
                })
                .collect::<Result<_>>()?;
            let mlp = random_mlp(2 * cfg.dim, BENCH_HIDDEN);
            Runner {
                count: queries.len(),
                run: Box::new(move || {
                    use rayon::prelude::*;
                    let out: Result<Vec<[f32; 2]>> =
                        features.par_iter().map(|f| mlp.forward(f)).collect();
                    std::hint::black_box(out?);
                    Ok(())
                }),
            }
        }
    })
}

fn prepare(workload: &Workload, cfg: &EncoderConfig, stage: Stage) -> Result<Runner> {
    match cfg.precision {
        Precision::F32 => prepare_typed::<f32>(workload, cfg, stage),
        Precision::F64 => prepare_typed::<f64>(workload, cfg, stage),
    }
}

/// Times one stage on `workload`.
pub fn bench_stage(
    workload: &Workload,
    cfg: &EncoderConfig,
    stage: Stage,
    protocol: &BenchProtocol,
) -> Result<StageTiming> {
    Ok(bench_interleaved(std::slice::from_ref(workload), cfg, stage, protocol)?.remove(0))
}

/// Times one stage on each workload, interleaving their repetitions.
pub fn bench_interleaved(
    workloads: &[Workload],
    cfg: &EncoderConfig,
    stage: Stage,
    protocol: &BenchProtocol,
) -> Result<Vec<StageTiming>> {
    let mut runners = workloads
        .iter()
        .map(|w| prepare(w, cfg, stage))
        .collect::<Result<Vec<_>>>()?;
    let walls = time_interleaved(protocol, &mut runners)?;
    runners
        .iter()
        .zip(walls)
        .map(|(r, wall)| StageTiming::new(stage, r.count, wall))
        .collect()
}

/// Sweep description for [`measure_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub geometry: CameraGeometry,
    /// Event counts for the accumulation stage.
    pub event_counts: Vec<usize>,
    /// Flow counts for the pool and MLP stages.
    pub flow_counts: Vec<usize>,
    /// Events in the slice used for the pool and MLP stages.
    pub pool_events: usize,
    pub seed: u64,
}

/// Runs every stage over its size sweep on uniform noise workloads.
pub fn measure_sweep(
    sweep: &Sweep,
    cfg: &EncoderConfig,
    protocol: &BenchProtocol,
) -> Result<Vec<StageTiming>> {
    let accumulate: Vec<Workload> = sweep
        .event_counts
        .iter()
        .map(|&n| Workload::uniform(n, 0, sweep.geometry, cfg.window(), sweep.seed))
        .collect::<Result<_>>()?;
    let mut out = bench_interleaved(&accumulate, cfg, Stage::Accumulate, protocol)?;
    drop(accumulate);
    let max_flows = sweep.flow_counts.iter().copied().max().unwrap_or(0);
    let base = Workload::uniform(
        sweep.pool_events,
        max_flows,
        sweep.geometry,
        cfg.window(),
        sweep.seed,
    )?;
    let flows: Vec<Workload> = sweep
        .flow_counts
        .iter()
        .map(|&k| Workload {
            slice: base.slice.clone(),
            queries: base.queries[..k].to_vec(),
        })
        .collect();
    for stage in [Stage::Pool, Stage::Mlp] {
        out.extend(bench_interleaved(&flows, cfg, stage, protocol)?);
    }
    Ok(out)
}

/// Header lines describing the measurement setup.
pub fn report_header(
    cfg: &EncoderConfig,
    geometry: CameraGeometry,
    protocol: &BenchProtocol,
) -> Vec<String> {
    vec![
        format!("threads={}", rayon::current_num_threads()),
        format!("precision={}", cfg.precision),
        format!(
            "delta_x={} delta_y={} delta_t={} D={}",
            cfg.delta_x, cfg.delta_y, cfg.delta_t, cfg.dim
        ),
        format!("geometry={}x{}", geometry.width, geometry.height),
        format!(
            "protocol=median of {} runs after {} warmup",
            protocol.repetitions, protocol.warmup
        ),
    ]
}

/// CSV rows `stage,count,wall_seconds,rate` preceded by `#` header lines.
pub fn write_csv<W: Write>(
    w: &mut W,
    header: &[String],
    timings: &[StageTiming],
) -> std::io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "stage,count,wall_seconds,rate")?;
    for t in timings {
        writeln!(
            w,
            "{},{},{:.9},{:.3}",
            t.stage, t.count, t.wall_seconds, t.rate
        )?;
    }
    Ok(())
}

fn human_rate(rate: f64) -> String {
    if rate >= 1e6 {
        format!("{:.2}M", rate / 1e6)
    } else if rate >= 1e3 {
        format!("{:.2}k", rate / 1e3)
    } else {
        format!("{rate:.2}")
    }
}

/// Plain-text table with one row per stage, using the largest measured size.
pub fn write_summary<W: Write>(
    w: &mut W,
    header: &[String],
    timings: &[StageTiming],
) -> std::io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{:<26} {:>12} {:>10}", "stage", "rate", "unit")?;
    for stage in Stage::ALL {
        if let Some(t) = timings
            .iter()
            .filter(|t| t.stage == stage)
            .max_by_key(|t| t.count)
        {
            writeln!(
                w,
                "{:<26} {:>12} {:>10}",
                stage.label(),
                human_rate(t.rate),
                stage.unit()
            )?;
        }
    }
    Ok(())
}
