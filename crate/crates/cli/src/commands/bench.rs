//! `bench`: per-stage timings on uniform noise, the fitted runtime model and
//! the pooling cost ratio of 10- vs 8-pixel windows.

use std::io::Write;

use log::warn;

use evflow::bench::{
    bench_stage, calibrate, estimate_runtime, measure_sweep, report_header, write_csv,
    write_summary, BenchProtocol, Stage, Sweep, Workload,
};
use evflow::{CameraGeometry, EncoderConfig};

use super::{open_output, Context};
use crate::exit::Failure;

const DEFAULT_EVENT_SIZES: [usize; 3] = [100_000, 300_000, 1_000_000];
const DEFAULT_FLOW_SIZES: [usize; 3] = [2_000, 6_000, 20_000];

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let s = &ctx.settings;
    let (cfg, geometry) = ctx.encoder()?;
    let geometry = match geometry {
        Some(g) => g,
        None => CameraGeometry::new(640, 480)?,
    };
    let protocol = BenchProtocol {
        warmup: s.parsed_or("warmup", 2)?,
        repetitions: s.parsed_or("repetitions", 5)?,
    };
    let sweep = Sweep {
        geometry,
        event_counts: s
            .list("event_sizes")?
            .unwrap_or(DEFAULT_EVENT_SIZES.to_vec()),
        flow_counts: s.list("flow_sizes")?.unwrap_or(DEFAULT_FLOW_SIZES.to_vec()),
        pool_events: s.parsed_or("pool_events", 200_000)?,
        seed: ctx.seed()?,
    };
    let compare: bool = s.parsed_or("compare_delta", true)?;

    let mut header = ctx.header(&[]);
    header.extend(report_header(&cfg, geometry, &protocol));
    let timings = measure_sweep(&sweep, &cfg, &protocol)?;

    let out = ctx.out();
    let mut csv = open_output(out.as_ref())?;
    write_csv(&mut csv, &header, &timings)?;
    csv.flush()?;
    drop(csv);

    // with the CSV on stdout the summary goes to stderr
    let mut summary: Box<dyn Write> = match out {
        Some(_) => Box::new(std::io::stdout().lock()),
        None => Box::new(std::io::stderr().lock()),
    };
    write_summary(&mut summary, &header, &timings)?;
    match calibrate(&timings, cfg.delta_x, cfg.delta_y) {
        Ok(cal) => {
            writeln!(summary, "linear fit (wall = intercept + slope * count):")?;
            for (stage, fit) in [
                (Stage::Accumulate, cal.accumulate),
                (Stage::Pool, cal.pool),
                (Stage::Mlp, cal.mlp),
            ] {
                writeln!(
                    summary,
                    "  {stage:<10} slope={:.4e} s/item intercept={:.3e} s R2={:.4} rate={:.4e} {}",
                    fit.slope,
                    fit.intercept,
                    fit.r_squared,
                    1.0 / fit.slope,
                    stage.unit()
                )?;
            }
            writeln!(
                summary,
                "area relation (c/C_pool)*dx*dy = {:.3} ({})",
                cal.area_relation,
                if cal.area_relation_holds {
                    "within 4x of 1"
                } else {
                    "outside 4x of 1"
                }
            )?;
            let ms = estimate_runtime(&cal.model, 0.5e6, 10e3) * 1e3;
            writeln!(
                summary,
                "estimated runtime for 500000 events and 10000 flows: {ms:.3} ms"
            )?;
            for w in &cal.warnings {
                writeln!(summary, "warning: {w}")?;
            }
        }
        Err(e) => writeln!(summary, "linear fit skipped: {e}")?,
    }
    if compare {
        let flows = sweep.flow_counts.iter().copied().max().unwrap_or(0);
        let ratio = pool_ratio(&cfg, &sweep, flows, &protocol)?;
        writeln!(
            summary,
            "pool cost ratio delta=10 / delta=8 at {flows} flows: {ratio:.3} (window area ratio {:.3})",
            441.0 / 289.0
        )?;
        if !(1.07..=1.98).contains(&ratio) {
            warn!("pool cost ratio {ratio:.3} is outside [1.07, 1.98]");
        }
    }
    summary.flush()?;
    Ok(())
}

fn pool_ratio(
    cfg: &EncoderConfig,
    sweep: &Sweep,
    flows: usize,
    protocol: &BenchProtocol,
) -> Result<f64, Failure> {
    let w = Workload::uniform(
        sweep.pool_events,
        flows,
        sweep.geometry,
        cfg.window(),
        sweep.seed,
    )?;
    let time = |radius: u32| -> Result<f64, Failure> {
        let c = EncoderConfig {
            delta_x: radius,
            delta_y: radius,
            ..cfg.clone()
        };
        Ok(bench_stage(&w, &c, Stage::Pool, protocol)?.seconds_per_item())
    };
    Ok(time(10)? / time(8)?)
}
