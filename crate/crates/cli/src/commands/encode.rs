//! `encode`: per-query embeddings as a VKME file.
//!
//! Layout, little-endian: magic `VKME`, u32 `D`, then one record per
//! successfully encoded query: u64 slice index, u64 event index, and `D`
//! pairs of f32 `(re, im)`.

use std::io::Write;

use log::{info, warn};

use evflow::rff::Encoder;
use evflow::Real;

use super::{encoder_echo, geometry_echo, open_output, Context};
use crate::exit::{Failure, CONFIG};
use crate::input::{load_stream, select_queries, slice_stream, slicing, IndexedSlice};

pub const EMBEDDINGS_MAGIC: [u8; 4] = *b"VKME";

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let (cfg, geometry) = ctx.encoder()?;
    let out = ctx
        .out()
        .ok_or_else(|| Failure::new(CONFIG, "encode writes a binary file: pass --out"))?;
    let policy = ctx.queries()?;
    let seed = ctx.seed()?;
    let stream = load_stream(&ctx.settings, geometry)?;
    let (t0, stride) = slicing(&ctx.settings, &cfg, &stream)?;
    let mut resolved = encoder_echo(&cfg);
    resolved.extend([
        geometry_echo(stream.geometry),
        ("t0", t0.to_string()),
        ("stride", stride.to_string()),
        ("queries", policy.to_string()),
    ]);
    ctx.log_header(&resolved);

    let slices = slice_stream(&stream, &cfg, t0, stride)?;
    let mut w = open_output(Some(&out))?;
    w.write_all(&EMBEDDINGS_MAGIC)?;
    w.write_all(&(cfg.dim as u32).to_le_bytes())?;
    let (written, failed) = match cfg.precision {
        evflow::Precision::F32 => write_records::<f32>(&mut w, &cfg, &slices, |s| {
            select_queries(policy, s.slice.len(), s.index, seed)
        })?,
        evflow::Precision::F64 => write_records::<f64>(&mut w, &cfg, &slices, |s| {
            select_queries(policy, s.slice.len(), s.index, seed)
        })?,
    };
    w.flush()?;
    info!(
        "wrote {written} embeddings of D={} to {}",
        cfg.dim,
        out.display()
    );
    if failed > 0 {
        warn!("{failed} queries could not be encoded");
    }
    Ok(())
}

fn write_records<F: Real>(
    w: &mut dyn Write,
    cfg: &evflow::EncoderConfig,
    slices: &[IndexedSlice],
    queries: impl Fn(&IndexedSlice) -> evflow::QuerySet,
) -> Result<(usize, usize), Failure> {
    let encoder = Encoder::<F>::new(cfg)?;
    // one grid for the whole stream
    let mut grid = None;
    let (mut written, mut failed) = (0, 0);
    let mut record = Vec::with_capacity(16 + 8 * cfg.dim);
    for s in slices {
        if s.slice.is_empty() {
            continue;
        }
        let q = queries(s);
        let grid = grid.get_or_insert_with(|| encoder.empty_grid(s.slice.geometry()));
        let embs = encoder.encode_each_with(grid, &s.slice.rebase(), &q)?;
        for (&k, emb) in q.indices().iter().zip(embs) {
            let emb = match emb {
                Ok(e) => e.to_f64(),
                Err(e) => {
                    warn!("slice {} event {}: {e}", s.index, s.offset + k);
                    failed += 1;
                    continue;
                }
            };
            record.clear();
            record.extend_from_slice(&(s.index as u64).to_le_bytes());
            record.extend_from_slice(&((s.offset + k) as u64).to_le_bytes());
            for z in &emb.values {
                record.extend_from_slice(&(z.re as f32).to_le_bytes());
                record.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            w.write_all(&record)?;
            written += 1;
        }
    }
    Ok((written, failed))
}
