//! `synth`: one window of a synthetic scene plus its ground-truth flow map.
//!
//! Scenes: `edge` (translating edge, keys `normal_angle`, `velocity_x`,
//! `velocity_y`, `offset`), `bar` (rotating bar, keys `angle`, `omega`,
//! `length`) and `noise`. The window is `2 * delta_t` from `delta_t` or the
//! preset, default 32 ms; the sensor defaults to 64x64.

use log::info;

use evflow::bench::{synth_workload, Scene, SynthParams};
use evflow::config::Preset;
use evflow::event::{write_events_binary, write_events_csv, EventFormat};
use evflow::{CameraGeometry, EventStream};

use super::Context;
use crate::exit::{Failure, CONFIG};

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let s = &ctx.settings;
    let out = ctx
        .out()
        .ok_or_else(|| Failure::new(CONFIG, "synth writes an event file: pass --out"))?;
    let geometry = match ctx.geometry()? {
        Some(g) => g,
        None => CameraGeometry::new(64, 64)?,
    };
    let delta_t = match (s.parsed::<f64>("delta_t")?, s.get("preset")) {
        (Some(d), _) => d,
        (None, Some(name)) => name.parse::<Preset>()?.encoder().delta_t,
        (None, None) => 0.016,
    };
    let n_events: usize = s.parsed_or("n_events", 2000)?;
    let scene = match s.get("scene").unwrap_or("edge") {
        "edge" => Scene::TranslatingEdge {
            normal_angle: s.parsed_or("normal_angle", 0.0)?,
            velocity: [
                s.parsed_or("velocity_x", 200.0)?,
                s.parsed_or("velocity_y", 0.0)?,
            ],
            offset: s.parsed_or("offset", 0.0)?,
        },
        "bar" => Scene::RotatingBar {
            angle: s.parsed_or("angle", 0.0)?,
            omega: s.parsed_or("omega", 3.0)?,
            length: s.parsed_or("length", 0.75 * geometry.width.min(geometry.height) as f64)?,
        },
        "noise" => Scene::UniformNoise,
        other => {
            return Err(Failure::new(
                CONFIG,
                format!("unknown scene {other:?}; use edge, bar or noise"),
            ))
        }
    };
    let params = SynthParams::new(scene, ctx.seed()?, 2.0 * delta_t);
    let (slice, gt) = synth_workload(n_events, geometry, &params)?;
    let stream = EventStream::new(slice.into_events(), geometry)?;
    match EventFormat::from_path(&out) {
        EventFormat::Csv => write_events_csv(&out, &stream.events)?,
        EventFormat::Binary => write_events_binary(&out, &stream)?,
    }
    ctx.log_header(&[
        super::geometry_echo(geometry),
        ("window", (2.0 * delta_t).to_string()),
    ]);
    info!("wrote {} events to {}", stream.len(), out.display());
    if let Some(gt_path) = s.path("gt") {
        gt.save(&gt_path)?;
        info!(
            "wrote ground truth for {} pixels to {}",
            gt.valid_count(),
            gt_path.display()
        );
    }
    Ok(())
}
