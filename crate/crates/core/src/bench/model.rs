//! Two-term runtime model `c·num_events + C·num_flows` and its calibration.

use log::warn;

use super::{Stage, StageTiming};
use crate::error::{Error, Result};

/// Per-item costs in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeModel {
    /// Grid accumulation cost per event.
    pub per_event: f64,
    /// Window pooling cost per predicted flow.
    pub per_flow_pool: f64,
    /// MLP cost per predicted flow.
    pub per_flow_mlp: f64,
}

impl RuntimeModel {
    /// From throughputs in items per second.
    pub fn from_rates(
        events_per_sec: f64,
        pool_flows_per_sec: f64,
        mlp_flows_per_sec: f64,
    ) -> Result<Self> {
        for r in [events_per_sec, pool_flows_per_sec, mlp_flows_per_sec] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("rates must be positive, got {r}")));
            }
        }
        Ok(RuntimeModel {
            per_event: 1.0 / events_per_sec,
            per_flow_pool: 1.0 / pool_flows_per_sec,
            per_flow_mlp: 1.0 / mlp_flows_per_sec,
        })
    }

    pub fn per_flow(&self) -> f64 {
        self.per_flow_pool + self.per_flow_mlp
    }
}

/// Estimated seconds to accumulate `num_events` and predict `num_flows`.
pub fn estimate_runtime(model: &RuntimeModel, num_events: f64, num_flows: f64) -> f64 {
    num_events * model.per_event + num_flows * model.per_flow()
}

/// GPU throughputs measured on an RTX 2080 Ti with δx = δy = 8, in items per
/// second. The MLP figure is the one used in the worked runtime example; the
/// per-device table lists 26.67M for the same configuration. Reference data
/// for [`estimate_runtime`] demos only; these are not desk-CPU targets.
pub const REFERENCE_RTX2080TI_K8: (f64, f64, f64) = (115.63e6, 4.25e6, 27.55e6);

/// Published per-device GPU throughputs `(device, accumulate, pool, mlp)` in
/// items per second, for δ = 8 and δ = 10.
pub const REFERENCE_GPU_K8: [(&str, f64, f64, f64); 5] = [
    ("RTX 2080 Ti", 115.63e6, 4.25e6, 26.67e6),
    ("RTX 3070", 96.16e6, 3.09e6, 34.97e6),
    ("RTX A4000", 114.87e6, 3.12e6, 36.23e6),
    ("RTX A5000", 166.51e6, 5.61e6, 37.04e6),
    ("RTX A6000", 166.74e6, 5.55e6, 31.45e6),
];

pub const REFERENCE_GPU_K10: [(&str, f64, f64, f64); 5] = [
    ("RTX 2080 Ti", 115.63e6, 2.70e6, 42.55e6),
    ("RTX 3070", 96.16e6, 2.08e6, 33.22e6),
    ("RTX A4000", 114.87e6, 2.09e6, 35.34e6),
    ("RTX A5000", 166.51e6, 3.68e6, 27.78e6),
    ("RTX A6000", 166.74e6, 3.68e6, 31.95e6),
];

/// Least-squares line `wall = intercept + slope·count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// RMS residual relative to the mean wall time.
    pub relative_residual: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::invalid("a line fit needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid(
            "a line fit needs at least two distinct sizes",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let relative_residual = if my == 0.0 {
        0.0
    } else {
        (sse / n).sqrt() / my.abs()
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        relative_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: RuntimeModel,
    pub accumulate: LinearFit,
    pub pool: LinearFit,
    pub mlp: LinearFit,
    /// `(c / C_pool) · δx·δy`; near 1 when the cost ratio follows the window
    /// area.
    pub area_relation: f64,
    /// Whether `area_relation` is within a factor of 4 of 1.
    pub area_relation_holds: bool,
    pub warnings: Vec<String>,
}

/// Residual above which a stage is reported as not scaling linearly.
pub const NONLINEAR_RESIDUAL: f64 = 0.20;

/// Fits per-stage linear costs to a sweep of timings.
///
/// Each stage needs at least three distinct sizes spanning a factor of 10.
pub fn calibrate(timings: &[StageTiming], delta_x: u32, delta_y: u32) -> Result<Calibration> {
    let mut warnings = Vec::new();
    let mut fit_stage = |stage: Stage| -> Result<LinearFit> {
        let points: Vec<(f64, f64)> = timings
            .iter()
            .filter(|t| t.stage == stage)
            .map(|t| (t.count as f64, t.wall_seconds))
            .collect();
        let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
        sizes.sort_by(f64::total_cmp);
        sizes.dedup();
        if sizes.len() < 3 || sizes[sizes.len() - 1] < 10.0 * sizes[0] {
            return Err(Error::invalid(format!(
                "{stage} needs >= 3 sizes spanning >= 10x, got {sizes:?}"
            )));
        }
        let fit = fit_line(&points)?;
        if fit.relative_residual > NONLINEAR_RESIDUAL {
            let msg = format!(
                "{stage}: non-linear scaling, relative residual {:.1}% over {points:?}",
                100.0 * fit.relative_residual
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        if fit.slope <= 0.0 {
            return Err(Error::invalid(format!(
                "{stage}: fitted cost per item is not positive"
            )));
        }
        Ok(fit)
    };
    let accumulate = fit_stage(Stage::Accumulate)?;
    let pool = fit_stage(Stage::Pool)?;
    let mlp = fit_stage(Stage::Mlp)?;
    let model = RuntimeModel {
        per_event: accumulate.slope,
        per_flow_pool: pool.slope,
        per_flow_mlp: mlp.slope,
    };
    let area_relation = model.per_event / model.per_flow_pool * (delta_x as f64 * delta_y as f64);
    let area_relation_holds = (0.25..=4.0).contains(&area_relation);
    if !area_relation_holds {
        let msg = format!(
            "c/C_pool = {:.3e} is not within 4x of 1/(dx*dy) = {:.3e}",
            model.per_event / model.per_flow_pool,
            1.0 / (delta_x as f64 * delta_y as f64)
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Calibration {
        model,
        accumulate,
        pool,
        mlp,
        area_relation,
        area_relation_holds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let (a, b, c) = REFERENCE_RTX2080TI_K8;
        let m = RuntimeModel::from_rates(a, b, c).unwrap();
        let ms = estimate_runtime(&m, 0.5e6, 10e3) * 1e3;
        assert!((ms - 7.04).abs() < 0.01, "{ms}");
    }

    #[test]
    fn estimate_is_linear() {
        let m = RuntimeModel::from_rates(2e6, 1e5, 5e5).unwrap();
        assert_eq!(estimate_runtime(&m, 1000.0, 0.0), 1000.0 * m.per_event);
        let one = estimate_runtime(&m, 1234.0, 77.0);
        assert_eq!(estimate_runtime(&m, 2468.0, 154.0), 2.0 * one);
        assert!(RuntimeModel::from_rates(0.0, 1.0, 1.0).is_err());
    }

    fn timing(stage: Stage, count: usize, wall: f64) -> StageTiming {
        StageTiming::new(stage, count, wall).unwrap()
    }

    #[test]
    fn exact_lines_are_recovered() {
        let (c, cp, cm) = (7.5e-9, 3.25e-6, 4.0e-7);
        let mut t = Vec::new();
        for n in [1000usize, 5000, 20_000, 100_000] {
            t.push(timing(Stage::Accumulate, n, 1e-3 + c * n as f64));
            t.push(timing(Stage::Pool, n / 10, cp * (n / 10) as f64));
            t.push(timing(Stage::Mlp, n / 10, 2e-5 + cm * (n / 10) as f64));
        }
        let cal = calibrate(&t, 8, 8).unwrap();
        assert!((cal.model.per_event - c).abs() < 1e-9 * c);
        assert!((cal.model.per_flow_pool - cp).abs() < 1e-9 * cp);
        assert!((cal.model.per_flow_mlp - cm).abs() < 1e-9 * cm);
        assert!((cal.accumulate.intercept - 1e-3).abs() < 1e-12);
        assert!(cal.accumulate.r_squared > 1.0 - 1e-12);
        assert!(cal.warnings.iter().all(|w| !w.contains("non-linear")));
        // 7.5e-9 / 3.25e-6 * 64 ≈ 0.148, outside the factor-of-4 band
        assert!(!cal.area_relation_holds);
    }

    #[test]
    fn sweep_requirements() {
        let t: Vec<StageTiming> = [100usize, 200, 500]
            .iter()
            .flat_map(|&n| {
                [
                    timing(Stage::Accumulate, n, n as f64),
                    timing(Stage::Pool, n, n as f64),
                    timing(Stage::Mlp, n, n as f64),
                ]
            })
            .collect();
        assert!(calibrate(&t, 8, 8).is_err());
    }

    #[test]
    fn nonlinear_data_warns() {
        let mut t = Vec::new();
        for n in [100usize, 200, 400, 700, 1000] {
            for s in [Stage::Accumulate, Stage::Pool, Stage::Mlp] {
                t.push(timing(s, n, (n as f64).powi(3)));
            }
        }
        let cal = calibrate(&t, 8, 8).unwrap();
        assert!(cal.warnings.iter().any(|w| w.contains("non-linear")));
    }
}
