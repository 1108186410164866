//! `train`: fits a flow head to events with ground-truth flow.
//!
//! `events` and `gt` may each list several files, comma-separated and
//! paired in order. Every queried event at a pixel with ground truth becomes
//! a training target.

use log::info;

use evflow::head::{train_head, LabeledSlice, TrainConfig};
use evflow::metrics::FlowField;

use super::{encoder_echo, Context};
use crate::exit::{Failure, CONFIG};
use crate::input::{load_stream, require_file, select_queries, slice_stream, slicing};

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let s = &ctx.settings;
    let (cfg, geometry) = ctx.encoder()?;
    let out = ctx
        .out()
        .ok_or_else(|| Failure::new(CONFIG, "train writes a weights file: pass --out"))?;
    let split = |key: &str| -> Result<Vec<String>, Failure> {
        let v = s.require_path(key)?;
        Ok(v.to_string_lossy()
            .split(',')
            .map(|p| p.trim().to_string())
            .collect())
    };
    let (event_files, gt_files) = (split("events")?, split("gt")?);
    if event_files.len() != gt_files.len() {
        return Err(Failure::new(
            CONFIG,
            format!(
                "{} event files but {} ground-truth files",
                event_files.len(),
                gt_files.len()
            ),
        ));
    }
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        hidden: s.parsed_or("hidden", defaults.hidden)?,
        epochs: s.parsed_or("epochs", defaults.epochs)?,
        batch_size: s.parsed_or("batch_size", defaults.batch_size)?,
        learning_rate: s.parsed_or("learning_rate", defaults.learning_rate)?,
        lambda: s.parsed_or("lambda", defaults.lambda)?,
        margin_fraction: s.parsed_or("margin", defaults.margin_fraction)?,
        validation_fraction: s.parsed_or("validation_fraction", defaults.validation_fraction)?,
        seed: ctx.seed()?,
        ..defaults
    };
    let policy = ctx.queries()?;

    let mut dataset = Vec::new();
    for (ev, gt_path) in event_files.iter().zip(&gt_files) {
        let gt_path = std::path::PathBuf::from(gt_path);
        require_file(&gt_path, "ground truth")?;
        let gt =
            FlowField::load(&gt_path).map_err(|e| Failure::from(e).context(gt_path.display()))?;
        let mut one = s.clone();
        one.set("events", ev)?;
        let stream = load_stream(&one, geometry.or(Some(gt.geometry())))?;
        if stream.geometry != gt.geometry() {
            return Err(Failure::new(
                CONFIG,
                format!("geometry mismatch between {ev} and {}", gt_path.display()),
            ));
        }
        let (t0, stride) = slicing(&one, &cfg, &stream)?;
        for is in slice_stream(&stream, &cfg, t0, stride)? {
            let q = select_queries(policy, is.slice.len(), is.index, tc.seed);
            let targets: Vec<(usize, [f64; 2])> = q
                .indices()
                .iter()
                .filter_map(|&k| {
                    let e = is.slice.events()[k];
                    gt.get(e.x, e.y)
                        .filter(|u| u[0] != 0.0 || u[1] != 0.0)
                        .map(|u| (k, u))
                })
                .collect();
            if !targets.is_empty() {
                dataset.push(LabeledSlice {
                    slice: is.slice,
                    targets,
                });
            }
        }
    }
    let n_targets: usize = dataset.iter().map(|d| d.targets.len()).sum();
    let mut resolved = encoder_echo(&cfg);
    resolved.extend([
        ("hidden", tc.hidden.to_string()),
        ("epochs", tc.epochs.to_string()),
        ("lambda", tc.lambda.to_string()),
        ("margin", tc.margin_fraction.to_string()),
        ("targets", n_targets.to_string()),
    ]);
    ctx.log_header(&resolved);

    let report = train_head(&dataset, &cfg, &tc)?;
    report.weights.save(&out)?;
    info!(
        "best epoch {} of {}, validation loss {:.5}, flow scale {:.3} px/s; weights written to {}",
        report.best_epoch,
        tc.epochs,
        report
            .validation_loss
            .get(report.best_epoch)
            .copied()
            .unwrap_or(f64::NAN),
        report.flow_scale,
        out.display()
    );
    Ok(())
}
