//! `eval`: PEE and %Pos of a prediction CSV against a ground-truth map.

use std::io::Write;

use log::info;

use evflow::metrics::{evaluate, EvalReport, FlowField, LocatedFlow};

use super::{geometry_echo, open_output, write_header, Context};
use crate::exit::{Failure, CONFIG, EMPTY};
use crate::input::{read_predictions, require_file};

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let pred_path = ctx.settings.require_path("predictions")?;
    let gt_path = ctx.settings.require_path("gt")?;
    require_file(&gt_path, "ground truth")?;
    let rows = read_predictions(&pred_path)?;
    let gt = FlowField::load(&gt_path).map_err(|e| Failure::from(e).context(gt_path.display()))?;
    let g = gt.geometry();
    if let Some(expected) = ctx.geometry()? {
        if expected != g {
            return Err(Failure::new(
                CONFIG,
                format!(
                    "geometry mismatch: configured {}x{}, ground truth {}x{}",
                    expected.width, expected.height, g.width, g.height
                ),
            ));
        }
    }
    if let Some(r) = rows.iter().find(|r| r.x >= g.width || r.y >= g.height) {
        return Err(Failure::new(
            CONFIG,
            format!(
                "geometry mismatch: prediction at ({}, {}) lies outside the {}x{} ground truth",
                r.x, r.y, g.width, g.height
            ),
        ));
    }
    let sequence = match ctx.settings.get("sequence") {
        Some(s) => s.to_string(),
        None => pred_path.file_stem().map_or_else(
            || "sequence".to_string(),
            |s| s.to_string_lossy().into_owned(),
        ),
    };

    // a row with count c stands for c identical predictions
    let located: Vec<LocatedFlow> = rows
        .iter()
        .flat_map(|r| {
            std::iter::repeat_n(
                LocatedFlow {
                    x: r.x,
                    y: r.y,
                    flow: [r.nx, r.ny],
                },
                r.count as usize,
            )
        })
        .collect();
    let (row, pairs) = evaluate(&sequence, &located, &gt, g)?;
    let report = EvalReport::new(vec![(row, pairs)]);

    let out = ctx.out();
    let mut w = open_output(out.as_ref())?;
    write_header(
        &mut *w,
        &ctx.header(&[geometry_echo(g), ("sequence", sequence.clone())]),
    )?;
    report.write_csv(&mut w)?;
    w.flush()?;
    drop(w);

    let agg = &report.aggregate;
    if agg.n_valid == 0 {
        return Err(Failure::new(
            EMPTY,
            format!(
                "no valid prediction/ground-truth pairs ({} predictions excluded)",
                agg.n_excluded
            ),
        ));
    }
    let summary = format!(
        "PEE={:.6} %Pos={:.4} n_valid={} n_excluded={}",
        agg.pee.unwrap_or(f64::NAN),
        agg.pct_pos.unwrap_or(f64::NAN),
        agg.n_valid,
        agg.n_excluded
    );
    if out.is_some() {
        println!("{summary}");
    } else {
        info!("{summary}");
    }
    Ok(())
}
