//! `predict`: normal flow for every queried event, as CSV.

use std::io::Write;

use log::{info, warn};

use evflow::head::{FlowHead, MlpWeights};
use evflow::{Precision, Real};

use super::{encoder_echo, geometry_echo, open_output, write_header, Context};
use crate::exit::{Failure, CONFIG, EMPTY};
use crate::input::{
    load_stream, require_file, select_queries, slice_stream, slicing, write_prediction_row,
    IndexedSlice, PredictionRow, PREDICTION_COLUMNS,
};
use crate::settings::QueryPolicy;

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let (cfg, geometry) = ctx.encoder()?;
    let weights_path = ctx.settings.require_path("weights")?;
    require_file(&weights_path, "weights")?;
    let weights = MlpWeights::load(&weights_path)
        .map_err(|e| Failure::from(e).context(weights_path.display()))?;
    if weights.dim() != cfg.dim {
        return Err(Failure::new(
            CONFIG,
            format!(
                "embedding dimension mismatch: weights {} have D={}, encoder has D={}",
                weights_path.display(),
                weights.dim(),
                cfg.dim
            ),
        ));
    }
    let policy = ctx.queries()?;
    let seed = ctx.seed()?;
    let stream = load_stream(&ctx.settings, geometry)?;
    let (t0, stride) = slicing(&ctx.settings, &cfg, &stream)?;
    let mut resolved = encoder_echo(&cfg);
    resolved.extend([
        geometry_echo(stream.geometry),
        ("hidden", weights.hidden().to_string()),
        ("t0", t0.to_string()),
        ("stride", stride.to_string()),
        ("queries", policy.to_string()),
    ]);
    let slices = slice_stream(&stream, &cfg, t0, stride)?;

    let out = ctx.out();
    let mut w = open_output(out.as_ref())?;
    write_header(&mut *w, &ctx.header(&resolved))?;
    writeln!(w, "{PREDICTION_COLUMNS}")?;
    let (ok, failed) = match cfg.precision {
        Precision::F32 => predict_all::<f32>(&mut *w, &cfg, weights, &slices, policy, seed)?,
        Precision::F64 => predict_all::<f64>(&mut *w, &cfg, weights, &slices, policy, seed)?,
    };
    w.flush()?;
    info!("{ok} flows predicted, {failed} queries failed");
    if ok == 0 && failed > 0 {
        return Err(Failure::new(EMPTY, format!("all {failed} queries failed")));
    }
    if ok == 0 {
        warn!("no events to query");
    }
    Ok(())
}

fn predict_all<F: Real>(
    w: &mut dyn Write,
    cfg: &evflow::EncoderConfig,
    weights: MlpWeights,
    slices: &[IndexedSlice],
    policy: QueryPolicy,
    seed: u64,
) -> Result<(usize, usize), Failure> {
    let head = FlowHead::<F>::new(cfg, weights)?;
    // one grid for the whole stream
    let mut grid = None;
    let (mut ok, mut failed) = (0, 0);
    for s in slices {
        if s.slice.is_empty() {
            continue;
        }
        let q = select_queries(policy, s.slice.len(), s.index, seed);
        let grid = grid.get_or_insert_with(|| head.encoder().empty_grid(s.slice.geometry()));
        let predictions = head.predict_with(grid, &s.slice.rebase(), &q)?;
        for (&k, p) in q.indices().iter().zip(predictions) {
            let e = s.slice.events()[k];
            match p {
                Ok(p) => {
                    write_prediction_row(
                        w,
                        &PredictionRow {
                            slice_index: s.index as u64,
                            event_index: (s.offset + k) as u64,
                            t: e.t,
                            x: e.x,
                            y: e.y,
                            nx: p.nx as f64,
                            ny: p.ny as f64,
                            count: 1,
                        },
                    )?;
                    ok += 1;
                }
                Err(err) => {
                    warn!(
                        "slice {} event {} at ({}, {}): {err}",
                        s.index,
                        s.offset + k,
                        e.x,
                        e.y
                    );
                    failed += 1;
                }
            }
        }
    }
    Ok((ok, failed))
}
