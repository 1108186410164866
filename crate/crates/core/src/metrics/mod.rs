//! Prediction quality against ground-truth optical flow.
//!
//! Both metrics come from the normal flow constraint `n·(u − n) = 0`:
//!
//! * **PEE**: mean of `|n̂·(u − n̂)| / ‖n̂‖`, the distance between the
//!   projection of `u` onto the direction of `n̂` and `‖n̂‖`, in pixels per
//!   second.
//! * **%Pos**: percentage of pairs with `n̂·u > 0`. Exactly zero counts as
//!   not positive.
//!
//! Pairs with a zero-magnitude prediction or no ground truth are excluded and
//! counted.

mod flow_field;

use std::io::Write;

pub use flow_field::{FlowField, FLOW_MAGIC};

use crate::error::{Error, Result};
use crate::event::CameraGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPair {
    pub n_hat: [f64; 2],
    pub u: [f64; 2],
    pub valid: bool,
}

impl FlowPair {
    pub fn new(n_hat: [f64; 2], u: [f64; 2]) -> Self {
        FlowPair {
            n_hat,
            u,
            valid: true,
        }
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `|n̂·(u − n̂)| / ‖n̂‖`, or `None` when `n̂` is zero.
pub fn constraint_residual(n_hat: [f64; 2], u: [f64; 2]) -> Option<f64> {
    let norm = n_hat[0].hypot(n_hat[1]);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    let diff = [u[0] - n_hat[0], u[1] - n_hat[1]];
    Some(dot(n_hat, diff).abs() / norm)
}

/// Residual scaled by `‖u‖` as well, so that it is dimensionless.
pub fn normalized_residual(n_hat: [f64; 2], u: [f64; 2]) -> Option<f64> {
    let un = u[0].hypot(u[1]);
    if un == 0.0 {
        return None;
    }
    constraint_residual(n_hat, u).map(|r| r / un)
}

pub fn pee(pairs: &[FlowPair]) -> Result<f64> {
    let residuals: Vec<f64> = pairs
        .iter()
        .filter(|p| p.valid)
        .filter_map(|p| constraint_residual(p.n_hat, p.u))
        .collect();
    if residuals.is_empty() {
        return Err(Error::Empty(
            "no valid pairs with a nonzero prediction".into(),
        ));
    }
    Ok(residuals.iter().sum::<f64>() / residuals.len() as f64)
}

pub fn pct_pos(pairs: &[FlowPair]) -> Result<f64> {
    let valid: Vec<&FlowPair> = pairs.iter().filter(|p| p.valid).collect();
    if valid.is_empty() {
        return Err(Error::Empty("no valid pairs".into()));
    }
    let positive = valid.iter().filter(|p| dot(p.n_hat, p.u) > 0.0).count();
    Ok(100.0 * positive as f64 / valid.len() as f64)
}

/// A prediction located at an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocatedFlow {
    pub x: u32,
    pub y: u32,
    pub flow: [f64; 2],
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sequence: String,
    pub pee: Option<f64>,
    pub pct_pos: Option<f64>,
    pub n_valid: usize,
    pub n_excluded: usize,
}

impl EvalRow {
    /// Scores pairs; `already_excluded` counts predictions dropped earlier,
    /// e.g. at pixels without ground truth.
    pub fn from_pairs(
        sequence: impl Into<String>,
        pairs: &[FlowPair],
        already_excluded: usize,
    ) -> Self {
        let usable: Vec<FlowPair> = pairs
            .iter()
            .copied()
            .filter(|p| p.valid && constraint_residual(p.n_hat, p.u).is_some())
            .collect();
        EvalRow {
            sequence: sequence.into(),
            pee: pee(&usable).ok(),
            pct_pos: pct_pos(&usable).ok(),
            n_valid: usable.len(),
            n_excluded: already_excluded + (pairs.len() - usable.len()),
        }
    }
}

/// Pairs each prediction with the ground truth at its pixel.
///
/// Returns the pairs with valid ground truth and the number of predictions
/// that fell on invalid pixels.
pub fn pair_with_ground_truth(
    predictions: &[LocatedFlow],
    gt: &FlowField,
    geometry: CameraGeometry,
) -> Result<(Vec<FlowPair>, usize)> {
    if gt.geometry() != geometry {
        return Err(Error::invalid(format!(
            "ground truth is {}x{} but predictions are on a {}x{} sensor",
            gt.geometry().width,
            gt.geometry().height,
            geometry.width,
            geometry.height
        )));
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    let mut invalid = 0;
    for (i, p) in predictions.iter().enumerate() {
        if !geometry.contains(p.x as i64, p.y as i64) {
            return Err(Error::OutOfBounds {
                index: i,
                x: p.x as i64,
                y: p.y as i64,
                width: geometry.width,
                height: geometry.height,
            });
        }
        match gt.get(p.x, p.y) {
            Some(u) => pairs.push(FlowPair::new(p.flow, u)),
            None => invalid += 1,
        }
    }
    Ok((pairs, invalid))
}

/// Scores one sequence.
pub fn evaluate(
    sequence: &str,
    predictions: &[LocatedFlow],
    gt: &FlowField,
    geometry: CameraGeometry,
) -> Result<(EvalRow, Vec<FlowPair>)> {
    let (pairs, invalid) = pair_with_ground_truth(predictions, gt, geometry)?;
    Ok((EvalRow::from_pairs(sequence, &pairs, invalid), pairs))
}

/// Per-sequence rows plus an `all` row over the pooled pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregate: EvalRow,
}

impl EvalReport {
    pub fn new(sequences: Vec<(EvalRow, Vec<FlowPair>)>) -> Self {
        let excluded_invalid: usize = sequences
            .iter()
            .map(|(row, pairs)| row.n_excluded - (pairs.len() - row.n_valid))
            .sum();
        let all_pairs: Vec<FlowPair> = sequences
            .iter()
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        let aggregate = EvalRow::from_pairs("all", &all_pairs, excluded_invalid);
        EvalReport {
            rows: sequences.into_iter().map(|(row, _)| row).collect(),
            aggregate,
        }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "# PEE = mean |n_hat . (u - n_hat)| / |n_hat| over valid pairs, pixels/second"
        )?;
        writeln!(w, "# pct_pos = 100 * fraction of valid pairs with n_hat . u > 0 (zero counts as not positive)")?;
        writeln!(
            w,
            "# excluded = predictions at pixels without ground truth or with zero magnitude"
        )?;
        writeln!(
            w,
            "# averaging is per predicted event; other benchmarks may average per pixel"
        )?;
        writeln!(w, "sequence,PEE,pct_pos,n_valid,n_excluded")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        for row in self.rows.iter().chain(std::iter::once(&self.aggregate)) {
            writeln!(
                w,
                "{},{},{},{},{}",
                row.sequence,
                fmt(row.pee),
                fmt(row.pct_pos),
                row.n_valid,
                row.n_excluded
            )?;
        }
        Ok(())
    }
}
