//! Asynchronous per-event normal flow estimation for event cameras.
//!
//! Every queried event is encoded from its centered spatiotemporal
//! neighborhood with random Fourier features. The encoding is computed in
//! two stages:
//!
//! 1. Temporal phases `exp(i·t/δt·T)` are accumulated into a per-pixel grid,
//!    one pass over all events ([`rff::accumulate_grid`]).
//! 2. For each query, a `(2δx+1)×(2δy+1)` window of the grid is pooled
//!    against a precomputed table of spatial phases, de-phased by the
//!    query timestamp and normalized by the neighborhood event count
//!    ([`rff::pool_embedding`]).
//!
//! The resulting complex embedding feeds a two-layer perceptron
//! ([`head`]) predicting generalized normal flow in pixels per second.
//!
//! The crate also carries the direct quadratic evaluation of the encoding
//! ([`rff::oracle_encode`]), a kernel density checker ([`rff::kde`]),
//! evaluation metrics ([`metrics`]) and a staged throughput harness
//! ([`bench`]).

pub mod bench;
pub mod config;
pub mod error;
pub mod event;
pub mod head;
pub mod metrics;
pub mod real;
pub mod rff;

pub use config::{EncoderConfig, Precision};
pub use error::{Error, Result};
pub use event::{CameraGeometry, Event, EventSlice, EventStream, Polarity, QuerySet};
pub use real::Real;
