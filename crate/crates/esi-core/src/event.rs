//! Core event-stream data types: events, batches, sensor geometry, and
//! 8-bit output frames.

use thiserror::Error;

/// Errors produced when validating events or constructing batches/frames.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("pixel ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds { x: u16, y: u16, width: u16, height: u16 },
    #[error("polarity {p} is not +1 or -1")]
    BadPolarity { p: i8 },
    #[error("event {index} breaks timestamp order ({t} < {prev})")]
    NonMonotoneTime { index: usize, t: u64, prev: u64 },
    #[error("span end {span_end} precedes last event timestamp {last}")]
    SpanBeforeLastEvent { span_end: u64, last: u64 },
    #[error("frame payload holds {actual} pixels, geometry needs {expected}")]
    PixelCountMismatch { expected: usize, actual: usize },
    #[error("sensor geometry must be at least 1x1")]
    EmptyGeometry,
}

/// One asynchronous pixel change: timestamp in microseconds, pixel
/// coordinates, and a signed unit polarity (+1 brightening, -1 darkening).
///
/// Polarity is kept as a signed integer rather than a flag so the
/// accumulation step is a single multiply-add.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Timestamp, microseconds. 1 us resolution, lossless up to 2^64 - 1.
    pub t: u64,
    /// Column index.
    pub x: u16,
    /// Row index.
    pub y: u16,
    /// +1 or -1.
    pub p: i8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: i8) -> Self {
        Event { t, x, y, p }
    }
}

/// Sensor pixel grid dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

/// DAVIS346 profile, the default sensor size.
pub const DAVIS346: SensorGeometry = SensorGeometry { width: 346, height: 260 };

impl Default for SensorGeometry {
    fn default() -> Self {
        DAVIS346
    }
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::EmptyGeometry);
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major index of pixel (x, y). Caller guarantees bounds.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

/// Check that an event lies on the sensor and carries a legal polarity.
pub fn validate_event(e: &Event, g: &SensorGeometry) -> Result<(), EventError> {
    if !g.contains(e.x, e.y) {
        return Err(EventError::OutOfBounds {
            x: e.x,
            y: e.y,
            width: g.width,
            height: g.height,
        });
    }
    if e.p != 1 && e.p != -1 {
        return Err(EventError::BadPolarity { p: e.p });
    }
    Ok(())
}

/// An ordered run of events, optionally carrying an explicit stream-end
/// watermark for frame emission past the last event.
///
/// Events are non-strictly ordered by timestamp; equal timestamps are legal
/// and keep their arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventBatch {
    events: Vec<Event>,
    span_end: Option<u64>,
}

impl EventBatch {
    /// Build a batch, enforcing the non-strict timestamp ordering invariant.
    pub fn new(events: Vec<Event>) -> Result<Self, EventError> {
        for (i, w) in events.windows(2).enumerate() {
            if w[1].t < w[0].t {
                return Err(EventError::NonMonotoneTime {
                    index: i + 1,
                    t: w[1].t,
                    prev: w[0].t,
                });
            }
        }
        Ok(EventBatch { events, span_end: None })
    }

    /// Build a batch from possibly out-of-order events via a stable sort.
    /// Returns the batch and how many events were behind their predecessor.
    pub fn from_unsorted(mut events: Vec<Event>) -> (Self, usize) {
        let out_of_order = events.windows(2).filter(|w| w[1].t < w[0].t).count();
        if out_of_order > 0 {
            events.sort_by_key(|e| e.t);
        }
        (EventBatch { events, span_end: None }, out_of_order)
    }

    pub fn empty() -> Self {
        EventBatch { events: Vec::new(), span_end: None }
    }

    /// Attach an explicit stream-end time; must not precede the last event.
    pub fn with_span_end(mut self, t_end: u64) -> Result<Self, EventError> {
        if let Some(last) = self.last_t() {
            if t_end < last {
                return Err(EventError::SpanBeforeLastEvent { span_end: t_end, last });
            }
        }
        self.span_end = Some(t_end);
        Ok(self)
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

    pub fn first_t(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    /// Explicit stream-end watermark, if one was attached.
    pub fn span_end(&self) -> Option<u64> {
        self.span_end
    }

    /// Covered time span in microseconds (explicit span end wins).
    pub fn time_span_us(&self) -> Option<u64> {
        let first = self.first_t().or(if self.span_end.is_some() { Some(0) } else { None })?;
        let end = self.span_end.or_else(|| self.last_t())?;
        Some(end.saturating_sub(first))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// An 8-bit grayscale frame stamped with its emission time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub t_emit: u64,
    pub geometry: SensorGeometry,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(t_emit: u64, geometry: SensorGeometry, pixels: Vec<u8>) -> Result<Self, EventError> {
        if pixels.len() != geometry.pixel_count() {
            return Err(EventError::PixelCountMismatch {
                expected: geometry.pixel_count(),
                actual: pixels.len(),
            });
        }
        Ok(Frame { t_emit, geometry, pixels })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u16, y: u16) -> u8 {
        self.pixels[self.geometry.index(x, y)]
    }
}
