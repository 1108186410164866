//! Synthetic event workloads with known optical flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::event::{CameraGeometry, Event, EventSlice};
use crate::metrics::FlowField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scene {
    /// Events uniform in time and space. No ground truth.
    UniformNoise,
    /// A straight edge crossing the whole sensor, moving with `velocity`
    /// (pixels per second). `normal_angle` orients the edge normal; `offset`
    /// is the signed distance of the edge from the sensor centre at the slice
    /// midpoint.
    TranslatingEdge {
        normal_angle: f64,
        velocity: [f64; 2],
        offset: f64,
    },
    /// A bar of `length` pixels rotating about the sensor centre at `omega`
    /// radians per second, starting at `angle`.
    RotatingBar { angle: f64, omega: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub scene: Scene,
    pub seed: u64,
    pub t_start: f64,
    /// Slice length, `2 * delta_t`.
    pub window: f64,
}

impl SynthParams {
    pub fn new(scene: Scene, seed: u64, window: f64) -> Self {
        SynthParams {
            scene,
            seed,
            t_start: 0.0,
            window,
        }
    }
}

/// Generates `n_events` events and the ground-truth flow at every pixel that
/// fired. Deterministic per seed.
pub fn synth_workload(
    n_events: usize,
    geometry: CameraGeometry,
    params: &SynthParams,
) -> Result<(EventSlice, FlowField)> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut gt = FlowField::empty(geometry);
    let (w, h) = (geometry.width as f64, geometry.height as f64);
    let centre = [(w - 1.0) / 2.0, (h - 1.0) / 2.0];
    let mut events = Vec::with_capacity(n_events);
    // latest timestamp strictly inside the half-open window
    let t_max = params.window * (1.0 - f64::EPSILON);

    match params.scene {
        Scene::UniformNoise => {
            for _ in 0..n_events {
                events.push(Event::new(
                    params.t_start + rng.gen_range(0.0..t_max),
                    rng.gen_range(0..geometry.width),
                    rng.gen_range(0..geometry.height),
                ));
            }
        }
        Scene::TranslatingEdge {
            normal_angle,
            velocity,
            offset,
        } => {
            let (s, c) = normal_angle.sin_cos();
            let normal = [c, s];
            let tangent = [-s, c];
            let half = 0.5 * w.hypot(h);
            let anchor = [
                centre[0] + offset * normal[0],
                centre[1] + offset * normal[1],
            ];
            let t_mid = 0.5 * params.window;
            emit(&mut rng, n_events, geometry, &mut events, |rng| {
                let dt = rng.gen_range(0.0..t_max);
                let along = rng.gen_range(-half..half);
                let p = [
                    anchor[0] + velocity[0] * (dt - t_mid) + along * tangent[0],
                    anchor[1] + velocity[1] * (dt - t_mid) + along * tangent[1],
                ];
                (params.t_start + dt, p)
            });
            for e in &events {
                gt.set(e.x, e.y, [velocity[0] as f32, velocity[1] as f32]);
            }
        }
        Scene::RotatingBar {
            angle,
            omega,
            length,
        } => {
            emit(&mut rng, n_events, geometry, &mut events, |rng| {
                let dt = rng.gen_range(0.0..t_max);
                let theta = angle + omega * dt;
                let r = rng.gen_range(-0.5 * length..0.5 * length);
                (
                    params.t_start + dt,
                    [centre[0] + r * theta.cos(), centre[1] + r * theta.sin()],
                )
            });
            for e in &events {
                let rx = e.x as f64 - centre[0];
                let ry = e.y as f64 - centre[1];
                gt.set(e.x, e.y, [(-omega * ry) as f32, (omega * rx) as f32]);
            }
        }
    }

    let slice = EventSlice::new(events, params.t_start, params.window, geometry)?;
    Ok((slice, gt))
}

/// Draws candidate points until `n` land on the sensor or the attempt budget
/// runs out.
fn emit(
    rng: &mut ChaCha8Rng,
    n: usize,
    geometry: CameraGeometry,
    out: &mut Vec<Event>,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (f64, [f64; 2]),
) {
    let budget = 64 * n + 1024;
    for _ in 0..budget {
        if out.len() == n {
            return;
        }
        let (t, p) = draw(rng);
        let (x, y) = (p[0].round(), p[1].round());
        if geometry.contains(x as i64, y as i64) {
            out.push(Event::new(t, x as u32, y as u32));
        }
    }
    log::warn!(
        "scene produced only {} of {n} requested events on the sensor",
        out.len()
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> CameraGeometry {
        CameraGeometry::new(64, 48).unwrap()
    }

    #[test]
    fn edge_ground_truth_is_the_velocity() {
        let p = SynthParams::new(
            Scene::TranslatingEdge {
                normal_angle: 0.3,
                velocity: [10.0, 0.0],
                offset: 0.0,
            },
            1,
            0.032,
        );
        let (slice, gt) = synth_workload(2000, g(), &p).unwrap();
        assert_eq!(slice.len(), 2000);
        assert!(gt.valid_count() > 0);
        for (_, _, u) in gt.iter_valid() {
            assert_eq!(u, [10.0, 0.0]);
        }
        for e in slice.events() {
            assert!(gt.get(e.x, e.y).is_some());
        }
    }

    #[test]
    fn edge_events_lie_on_the_moving_line() {
        let (normal_angle, velocity) = (1.1f64, [150.0, -80.0]);
        let p = SynthParams::new(
            Scene::TranslatingEdge {
                normal_angle,
                velocity,
                offset: 3.0,
            },
            5,
            0.032,
        );
        let (slice, _) = synth_workload(500, g(), &p).unwrap();
        let n = [normal_angle.cos(), normal_angle.sin()];
        let speed = n[0] * velocity[0] + n[1] * velocity[1];
        let centre = [31.5, 23.5];
        for e in slice.events() {
            let d = (e.x as f64 - centre[0]) * n[0] + (e.y as f64 - centre[1]) * n[1];
            let expected = 3.0 + speed * (e.t - 0.016);
            assert!((d - expected).abs() <= 0.71, "{d} vs {expected}");
        }
    }

    #[test]
    fn empty_workload() {
        let p = SynthParams::new(Scene::UniformNoise, 0, 0.032);
        let (slice, gt) = synth_workload(0, g(), &p).unwrap();
        assert!(slice.is_empty());
        assert_eq!(gt.valid_count(), 0);
    }

    #[test]
    fn deterministic_noise() {
        let p = SynthParams {
            t_start: 3.0,
            ..SynthParams::new(Scene::UniformNoise, 42, 0.024)
        };
        let a = synth_workload(1000, g(), &p).unwrap();
        let b = synth_workload(1000, g(), &p).unwrap();
        assert_eq!(a, b);
        assert!(a.0.events().iter().all(|e| e.t >= 3.0 && e.t < 3.024));
        assert_eq!(a.1.valid_count(), 0);
    }

    #[test]
    fn rotating_bar_flow_is_tangential() {
        let p = SynthParams::new(
            Scene::RotatingBar {
                angle: 0.0,
                omega: 2.0,
                length: 40.0,
            },
            3,
            0.032,
        );
        let (slice, gt) = synth_workload(800, g(), &p).unwrap();
        for e in slice.events() {
            let u = gt.get(e.x, e.y).unwrap();
            let r = [e.x as f64 - 31.5, e.y as f64 - 23.5];
            assert!((u[0] * r[0] + u[1] * r[1]).abs() < 1e-3);
            assert!((u[0].hypot(u[1]) - 2.0 * r[0].hypot(r[1])).abs() < 1e-3);
        }
    }
}
