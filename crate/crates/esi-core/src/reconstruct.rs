//! Streaming intensity reconstruction: a generic event-driven engine that
//! folds events into per-pixel state and emits 8-bit frames on a fixed-rate
//! clock.
//!
//! Frame emission reads state without mutating it, so the reconstruction
//! state after a stream is byte-identical no matter which frame rate (or
//! none) was requested.

use std::str::FromStr;

use thiserror::Error;

use crate::decay::{DecayError, DecayParams, StateMatrices};
use crate::event::{validate_event, Event, EventBatch, EventError, Frame, SensorGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Decay(#[from] DecayError),
    #[error("frame rate must be positive and finite, got {fps}")]
    BadFps { fps: f64 },
    #[error("per-event contribution must be positive and finite, got {c}")]
    BadContribution { c: f64 },
    #[error("clamp bounds must satisfy min < max, got [{min}, {max}]")]
    BadBounds { min: f64, max: f64 },
    #[error("smoothing rate must be positive and finite, got {rate}")]
    BadRate { rate: f64 },
    #[error("unknown reconstruction method {name:?}")]
    UnknownMethod { name: String },
}

/// Restrict `v` to `[min, max]`. NaN collapses to `min`.
#[inline]
pub fn clamp(v: f64, min: f64, max: f64) -> f64 {
    v.max(min).min(max)
}

/// Map `v` linearly from `[min, max]` onto 0..=255, clamping first.
/// Rounds half away from zero, so the midpoint of a symmetric range
/// lands on 128.
#[inline]
pub fn map_to_gray(v: f64, min: f64, max: f64) -> u8 {
    let c = clamp(v, min, max);
    // normalize before scaling: the ratio is exact for the symmetric
    // midpoint, so 255 * 0.5 lands on 127.5 and rounds up
    (255.0 * ((c - min) / (max - min))).round() as u8
}

/// Validated clamp interval for accumulator values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampBounds {
    min: f64,
    max: f64,
}

impl ClampBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, ReconstructError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(ReconstructError::BadBounds { min, max });
        }
        Ok(ClampBounds { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        clamp(v, self.min, self.max)
    }

    #[inline]
    pub fn to_gray(&self, v: f64) -> u8 {
        map_to_gray(v, self.min, self.max)
    }
}

impl Default for ClampBounds {
    fn default() -> Self {
        ClampBounds { min: -1.5, max: 1.5 }
    }
}

/// Where the frame grid is pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameAnchor {
    /// Grid starts at the first event's timestamp.
    FirstEvent,
    /// Grid starts at a fixed time in microseconds.
    Origin(u64),
}

/// Fixed-rate frame schedule. Boundary i (1-based) sits at
/// `anchor + round(i * 1e6 / fps)` microseconds; each boundary is computed
/// from the origin directly, so the grid never drifts at awkward rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClock {
    fps: f64,
    period_us: f64,
    anchor: FrameAnchor,
    origin: Option<u64>,
    next: u64,
}

impl FrameClock {
    pub fn new(fps: f64, anchor: FrameAnchor) -> Result<Self, ReconstructError> {
        // upper bound keeps the frame period at or above the 1 us
        // timestamp resolution, so the boundary sequence always advances
        if !(fps > 0.0 && fps <= 1.0e6) {
            return Err(ReconstructError::BadFps { fps });
        }
        let origin = match anchor {
            FrameAnchor::Origin(u) => Some(u),
            FrameAnchor::FirstEvent => None,
        };
        Ok(FrameClock { fps, period_us: 1.0e6 / fps, anchor, origin, next: 1 })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Pin a floating grid to the first timestamp seen.
    pub fn observe(&mut self, t_us: u64) {
        if self.origin.is_none() {
            self.origin = Some(t_us);
        }
    }

    /// Next boundary not yet emitted, or None while the grid is unpinned.
    /// Saturates at the end of representable time.
    pub fn next_boundary(&self) -> Option<u64> {
        let origin = self.origin?;
        Some(origin.saturating_add((self.next as f64 * self.period_us).round() as u64))
    }

    /// Claim the next boundary if it lies strictly before `t_us`.
    pub fn pop_strictly_before(&mut self, t_us: u64) -> Option<u64> {
        let b = self.next_boundary()?;
        if b < t_us {
            self.next += 1;
            Some(b)
        } else {
            None
        }
    }

    /// Claim the next boundary if it lies at or before `t_us`.
    pub fn pop_at_or_before(&mut self, t_us: u64) -> Option<u64> {
        let b = self.next_boundary()?;
        if b <= t_us {
            self.next += 1;
            Some(b)
        } else {
            None
        }
    }

    pub fn reset(&mut self) {
        self.origin = match self.anchor {
            FrameAnchor::Origin(u) => Some(u),
            FrameAnchor::FirstEvent => None,
        };
        self.next = 1;
    }
}

/// Per-pixel accumulator storage behind a reconstruction method.
///
/// `apply` folds one event in; `peek_into` snapshots every pixel as of a
/// read time without mutating anything. The engine guarantees event
/// timestamps are fed in non-decreasing order.
pub(crate) trait StateCore {
    fn geometry(&self) -> SensorGeometry;
    fn bounds(&self) -> ClampBounds;
    fn apply(&mut self, x: u16, y: u16, t_us: u64, p: i8) -> Result<(), ReconstructError>;
    fn peek_into(&self, now_us: u64, out: &mut Vec<f64>) -> Result<(), ReconstructError>;
    fn reset(&mut self);
}

/// Event loop shared by every reconstruction method: validate, emit due
/// frames, fold the event in. Frames are read via `peek_into`, never by
/// mutating state, which keeps the final state independent of frame rate.
pub(crate) struct Engine<S: StateCore> {
    core: S,
    clock: FrameClock,
    last_t: Option<u64>,
    events_seen: u64,
    scratch: Vec<f64>,
}

impl<S: StateCore> Engine<S> {
    pub fn new(core: S, clock: FrameClock) -> Self {
        Engine { core, clock, last_t: None, events_seen: 0, scratch: Vec::new() }
    }

    pub fn core(&self) -> &S {
        &self.core
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.core.geometry()
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }

    fn render_at(&mut self, t_us: u64) -> Result<Frame, ReconstructError> {
        let geometry = self.core.geometry();
        let bounds = self.core.bounds();
        self.core.peek_into(t_us, &mut self.scratch)?;
        let pixels: Vec<u8> = self.scratch.iter().map(|&v| bounds.to_gray(v)).collect();
        Ok(Frame::new(t_us, geometry, pixels)?)
    }

    pub fn process(&mut self, events: &[Event]) -> Result<Vec<Frame>, ReconstructError> {
        let geometry = self.core.geometry();
        let mut frames = Vec::new();
        for (i, e) in events.iter().enumerate() {
            validate_event(e, &geometry)?;
            if let Some(prev) = self.last_t {
                if e.t < prev {
                    return Err(EventError::NonMonotoneTime { index: i, t: e.t, prev }.into());
                }
            }
            self.clock.observe(e.t);
            while let Some(b) = self.clock.pop_strictly_before(e.t) {
                frames.push(self.render_at(b)?);
            }
            self.core.apply(e.x, e.y, e.t, e.p)?;
            self.last_t = Some(e.t);
            self.events_seen += 1;
        }
        Ok(frames)
    }

    /// Flush every boundary at or before `t_end`. Leaves the grid pinned,
    /// so later events keep the same schedule.
    pub fn finish(&mut self, t_end: u64) -> Result<Vec<Frame>, ReconstructError> {
        if let Some(prev) = self.last_t {
            if t_end < prev {
                return Err(EventError::SpanBeforeLastEvent { span_end: t_end, last: prev }.into());
            }
        }
        let mut frames = Vec::new();
        while let Some(b) = self.clock.pop_at_or_before(t_end) {
            frames.push(self.render_at(b)?);
        }
        Ok(frames)
    }

    pub fn peek(&self, t_now: u64) -> Result<Frame, ReconstructError> {
        let bounds = self.core.bounds();
        let mut values = Vec::new();
        self.core.peek_into(t_now, &mut values)?;
        let pixels: Vec<u8> = values.iter().map(|&v| bounds.to_gray(v)).collect();
        Ok(Frame::new(t_now, self.core.geometry(), pixels)?)
    }

    pub fn reset(&mut self) {
        self.core.reset();
        self.clock.reset();
        self.last_t = None;
        self.events_seen = 0;
    }
}

/// A streaming event-to-frame reconstructor.
pub trait Reconstructor {
    fn geometry(&self) -> SensorGeometry;
    fn name(&self) -> &'static str;

    /// Fold an ordered event slice in, returning frames that became due.
    fn process(&mut self, events: &[Event]) -> Result<Vec<Frame>, ReconstructError>;

    /// Emit every frame due at or before `t_end` (stream-end flush).
    fn finish(&mut self, t_end: u64) -> Result<Vec<Frame>, ReconstructError>;

    /// Render the current state as of `t_now` without advancing anything.
    fn peek(&self, t_now: u64) -> Result<Frame, ReconstructError>;

    fn reset(&mut self);

    /// Process a whole batch; an explicit span end also flushes trailing
    /// frames past the last event.
    fn process_batch(&mut self, batch: &EventBatch) -> Result<Vec<Frame>, ReconstructError> {
        let mut frames = self.process(batch.events())?;
        if let Some(end) = batch.span_end() {
            frames.extend(self.finish(end)?);
        }
        Ok(frames)
    }
}

/// Parameters of the single-integration reconstructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsiParams {
    pub decay: DecayParams,
    /// Log-intensity step per event (the sensor contrast threshold).
    pub contribution: f64,
    pub bounds: ClampBounds,
}

impl Default for EsiParams {
    /// k = 10, b = 2, contribution 0.15, bounds [-1.5, 1.5].
    fn default() -> Self {
        EsiParams {
            decay: DecayParams::default(),
            contribution: 0.15,
            bounds: ClampBounds::default(),
        }
    }
}

pub(crate) fn check_contribution(c: f64) -> Result<(), ReconstructError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(ReconstructError::BadContribution { c });
    }
    Ok(())
}

pub(crate) fn check_rate(rate: f64) -> Result<(), ReconstructError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ReconstructError::BadRate { rate });
    }
    Ok(())
}

struct EsiCore {
    state: StateMatrices,
    decay: DecayParams,
    contribution: f64,
    bounds: ClampBounds,
}

impl StateCore for EsiCore {
    fn geometry(&self) -> SensorGeometry {
        self.state.geometry()
    }

    fn bounds(&self) -> ClampBounds {
        self.bounds
    }

    fn apply(&mut self, x: u16, y: u16, t_us: u64, p: i8) -> Result<(), ReconstructError> {
        self.state
            .apply_event(x, y, t_us, p as f64 * self.contribution, &self.decay)?;
        let v = self.state.value_at(x, y);
        let c = self.bounds.apply(v);
        if c != v {
            self.state.set_value_at(x, y, c);
        }
        Ok(())
    }

    fn peek_into(&self, now_us: u64, out: &mut Vec<f64>) -> Result<(), ReconstructError> {
        self.state.peek_into(now_us, &self.decay, out)?;
        Ok(())
    }

    fn reset(&mut self) {
        self.state.reset();
    }
}

/// Single-integration reconstructor: per event, add the signed contribution,
/// decay the sum by the pixel's idle time with the polynomial window, then
/// clamp. Work per event is constant; untouched pixels cost nothing.
pub struct EsiReconstructor {
    engine: Engine<EsiCore>,
}

impl EsiReconstructor {
    pub fn new(
        geometry: SensorGeometry,
        params: EsiParams,
        fps: f64,
        anchor: FrameAnchor,
    ) -> Result<Self, ReconstructError> {
        check_contribution(params.contribution)?;
        let core = EsiCore {
            state: StateMatrices::new(geometry),
            decay: params.decay,
            contribution: params.contribution,
            bounds: params.bounds,
        };
        Ok(EsiReconstructor { engine: Engine::new(core, FrameClock::new(fps, anchor)?) })
    }

    /// Raw accumulator state (values and last-update stamps).
    pub fn state(&self) -> &StateMatrices {
        &self.engine.core().state
    }

    pub fn params(&self) -> EsiParams {
        let core = self.engine.core();
        EsiParams { decay: core.decay, contribution: core.contribution, bounds: core.bounds }
    }

    /// Decayed pre-clamp pixel values as of `t_now`.
    pub fn peek_values(&self, t_now: u64) -> Result<Vec<f64>, ReconstructError> {
        let mut out = Vec::new();
        self.engine.core().peek_into(t_now, &mut out)?;
        Ok(out)
    }

    pub fn events_seen(&self) -> u64 {
        self.engine.events_seen()
    }
}

impl Reconstructor for EsiReconstructor {
    fn geometry(&self) -> SensorGeometry {
        self.engine.geometry()
    }

    fn name(&self) -> &'static str {
        "esi"
    }

    fn process(&mut self, events: &[Event]) -> Result<Vec<Frame>, ReconstructError> {
        self.engine.process(events)
    }

    fn finish(&mut self, t_end: u64) -> Result<Vec<Frame>, ReconstructError> {
        self.engine.finish(t_end)
    }

    fn peek(&self, t_now: u64) -> Result<Frame, ReconstructError> {
        self.engine.peek(t_now)
    }

    fn reset(&mut self) {
        self.engine.reset();
    }
}

/// Which reconstruction method to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Esi,
    Naive,
    ExpDecay,
    CompFilter,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] =
        [MethodKind::Esi, MethodKind::Naive, MethodKind::ExpDecay, MethodKind::CompFilter];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Esi => "esi",
            MethodKind::Naive => "naive",
            MethodKind::ExpDecay => "expdecay",
            MethodKind::CompFilter => "compfilter",
        }
    }
}

impl FromStr for MethodKind {
    type Err = ReconstructError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "esi" => Ok(MethodKind::Esi),
            "naive" => Ok(MethodKind::Naive),
            "expdecay" => Ok(MethodKind::ExpDecay),
            "compfilter" => Ok(MethodKind::CompFilter),
            other => Err(ReconstructError::UnknownMethod { name: other.to_string() }),
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to build any reconstruction method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionConfig {
    pub geometry: SensorGeometry,
    pub fps: f64,
    pub anchor: FrameAnchor,
    pub esi: EsiParams,
    /// Exponential decay rate (1/s) of the smoothed-integrator baseline.
    pub smoothing_rate: f64,
    /// Leak rate (1/s) of the events-only complementary filter.
    pub filter_rate: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            geometry: SensorGeometry::default(),
            fps: 100.0,
            anchor: FrameAnchor::FirstEvent,
            esi: EsiParams::default(),
            smoothing_rate: 10.0,
            filter_rate: 10.0,
        }
    }
}

/// Instantiate the requested method behind the common trait.
pub fn build_reconstructor(
    kind: MethodKind,
    config: &ReconstructionConfig,
) -> Result<Box<dyn Reconstructor + Send>, ReconstructError> {
    use crate::baselines::{ComplementaryFilterEventsOnly, ExpDecayAccumulator, NaiveIntegrator};
    Ok(match kind {
        MethodKind::Esi => Box::new(EsiReconstructor::new(
            config.geometry,
            config.esi,
            config.fps,
            config.anchor,
        )?),
        MethodKind::Naive => Box::new(NaiveIntegrator::new(
            config.geometry,
            config.esi.contribution,
            config.esi.bounds,
            config.fps,
            config.anchor,
        )?),
        MethodKind::ExpDecay => Box::new(ExpDecayAccumulator::new(
            config.geometry,
            config.smoothing_rate,
            config.esi.contribution,
            config.esi.bounds,
            config.fps,
            config.anchor,
        )?),
        MethodKind::CompFilter => Box::new(ComplementaryFilterEventsOnly::new(
            config.geometry,
            config.filter_rate,
            config.esi.contribution,
            config.esi.bounds,
            config.fps,
            config.anchor,
        )?),
    })
}
