//! Event-camera intensity reconstruction toolkit.
//!
//! The core algorithm turns an asynchronous polarity event stream into
//! 8-bit grayscale frames with one constant-time update per event: each
//! pixel keeps an accumulator and a last-update stamp, adds the signed
//! contrast step on every event, decays the sum by a polynomial window of
//! the pixel's idle time, and clamps. Frames are rendered on a fixed-rate
//! clock purely by reading (never mutating) that state, so reconstruction
//! state is independent of the requested frame rate.
//!
//! Alongside the core reconstructor ([`EsiReconstructor`]) live:
//! - baselines for comparison ([`baselines`]);
//! - a ground-truth scene simulator ([`synth`]);
//! - bit-exact event/frame I/O ([`evio`]);
//! - ground-truth scoring ([`metrics`]);
//! - a throughput/latency harness ([`bench`]);
//! - plain-text configuration ([`config`]).

pub mod baselines;
pub mod bench;
pub mod config;
pub mod decay;
pub mod event;
pub mod evio;
pub mod metrics;
pub mod reconstruct;
pub mod synth;

pub use decay::{DecayError, DecayParams, StateMatrices};
pub use event::{
    validate_event, Event, EventBatch, EventError, Frame, SensorGeometry, DAVIS346,
};
pub use reconstruct::{
    build_reconstructor, clamp, map_to_gray, ClampBounds, EsiParams, EsiReconstructor,
    FrameAnchor, FrameClock, MethodKind, ReconstructError, ReconstructionConfig, Reconstructor,
};
