//! Event data model, slicing into fixed windows and geometric validation.

mod io;

pub use io::{load_events, read_events, write_events_binary, write_events_csv, EventFormat};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

/// A single brightness change event. `t` is in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub polarity: Option<Polarity>,
}

impl Event {
    pub fn new(t: f64, x: u32, y: u32) -> Self {
        Event {
            t,
            x,
            y,
            polarity: None,
        }
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = Some(polarity);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CameraGeometry {
    pub width: u32,
    pub height: u32,
}

impl CameraGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "camera geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(CameraGeometry { width, height })
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Checks an event against this geometry and the timestamp invariant.
    pub fn check(&self, index: usize, event: &Event) -> Result<()> {
        if !self.contains(event.x as i64, event.y as i64) {
            return Err(Error::OutOfBounds {
                index,
                x: event.x as i64,
                y: event.y as i64,
                width: self.width,
                height: self.height,
            });
        }
        if !(event.t.is_finite() && event.t >= 0.0) {
            return Err(Error::invalid(format!(
                "event {index} has invalid timestamp {}",
                event.t
            )));
        }
        Ok(())
    }
}

/// Events in file order, together with the sensor they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub geometry: CameraGeometry,
}

impl EventStream {
    pub fn new(events: Vec<Event>, geometry: CameraGeometry) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            geometry.check(i, e)?;
        }
        Ok(EventStream { events, geometry })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Drops every event whose polarity is known and differs from `keep`.
    pub fn retain_polarity(&mut self, keep: Polarity) {
        self.events.retain(|e| e.polarity.is_none_or(|p| p == keep));
    }

    /// Cuts the stream into windows of length `2 * delta_t`.
    ///
    /// Slice `i` covers `[t0 + i*stride, t0 + i*stride + 2*delta_t)`. Events
    /// before `t0` are ignored. Empty slices after the last event are not
    /// emitted; empty slices in between are, so slice indices stay aligned
    /// with time.
    pub fn slice(&self, delta_t: f64, stride: f64, t0: f64) -> Result<Vec<EventSlice>> {
        if !(delta_t.is_finite() && delta_t > 0.0) {
            return Err(Error::invalid(format!(
                "delta_t must be > 0, got {delta_t}"
            )));
        }
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::invalid(format!("stride must be > 0, got {stride}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0 must be finite"));
        }

        let sorted;
        let events: &[Event] = if self.events.windows(2).all(|w| w[0].t <= w[1].t) {
            &self.events
        } else {
            let mut v = self.events.clone();
            // stable: ties keep input order
            v.sort_by(|a, b| a.t.total_cmp(&b.t));
            sorted = v;
            &sorted
        };

        let Some(last) = events.last() else {
            return Ok(Vec::new());
        };
        if last.t < t0 {
            return Ok(Vec::new());
        }

        let window = 2.0 * delta_t;
        let count = ((last.t - t0) / stride).floor() as usize + 1;
        let mut slices = Vec::with_capacity(count);
        for i in 0..count {
            let start = t0 + i as f64 * stride;
            if start > last.t {
                break;
            }
            let end = start + window;
            let lo = events.partition_point(|e| e.t < start);
            let hi = events.partition_point(|e| e.t < end);
            slices.push(EventSlice {
                events: events[lo..hi].to_vec(),
                t_start: start,
                window,
                geometry: self.geometry,
            });
        }
        Ok(slices)
    }
}

/// Events of one time window, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSlice {
    events: Vec<Event>,
    t_start: f64,
    window: f64,
    geometry: CameraGeometry,
}

impl EventSlice {
    /// Builds a slice, stably sorting the events and checking that each
    /// one lies in `[t_start, t_start + window]` and inside the sensor.
    pub fn new(
        mut events: Vec<Event>,
        t_start: f64,
        window: f64,
        geometry: CameraGeometry,
    ) -> Result<Self> {
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::invalid(format!("window must be > 0, got {window}")));
        }
        if !(t_start.is_finite() && t_start >= 0.0) {
            return Err(Error::invalid(format!("invalid slice start {t_start}")));
        }
        if !events.windows(2).all(|w| w[0].t <= w[1].t) {
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        for (i, e) in events.iter().enumerate() {
            geometry.check(i, e)?;
            if e.t < t_start || e.t > t_start + window {
                return Err(Error::invalid(format!(
                    "event {i} at t={} outside slice [{t_start}, {}]",
                    e.t,
                    t_start + window
                )));
            }
        }
        Ok(EventSlice {
            events,
            t_start,
            window,
            geometry,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn geometry(&self) -> CameraGeometry {
        self.geometry
    }

    pub fn is_rebased(&self) -> bool {
        self.t_start == 0.0
    }

    /// Shifts timestamps to slice-local time so the slice starts at zero.
    pub fn rebase(&self) -> EventSlice {
        let t_start = self.t_start;
        let events = self
            .events
            .iter()
            .map(|e| Event {
                t: e.t - t_start,
                ..*e
            })
            .collect();
        EventSlice {
            events,
            t_start: 0.0,
            window: self.window,
            geometry: self.geometry,
        }
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Positions into [`EventSlice::events`] at which flow is predicted.
///
/// Duplicates are allowed and produce duplicate outputs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuerySet {
    indices: Vec<usize>,
}

impl QuerySet {
    pub fn new(indices: Vec<usize>, slice_len: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= slice_len) {
            return Err(Error::invalid(format!(
                "query index {bad} out of range for slice of {slice_len} events"
            )));
        }
        Ok(QuerySet { indices })
    }

    pub fn all(slice_len: usize) -> Self {
        QuerySet {
            indices: (0..slice_len).collect(),
        }
    }

    pub fn every_kth(slice_len: usize, k: usize) -> Self {
        QuerySet {
            indices: (0..slice_len).step_by(k.max(1)).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}
