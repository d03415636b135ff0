//! Lazy per-pixel accumulation with polynomial decay.
//!
//! Each pixel carries an accumulator value and the timestamp of its last
//! update. Decay is applied only when a pixel is touched (by an event) or
//! read (at frame emission), so cost scales with event count, not with
//! sensor area times frame rate.

use thiserror::Error;

use crate::event::SensorGeometry;

#[derive(Debug, Error, PartialEq)]
pub enum DecayError {
    #[error("decay rate k must be positive and finite, got {k}")]
    BadRate { k: f64 },
    #[error("decay exponent b must be positive and finite, got {b}")]
    BadExponent { b: f64 },
    #[error("interval is negative: now {now} precedes last update {last}")]
    NegativeInterval { now: u64, last: u64 },
}

/// Decay weighting parameters: w(dt) = max((1 - k*dt)^b, 0).
///
/// k is the inverse of the memory horizon in seconds (contributions vanish
/// at dt = 1/k); b shapes the falloff between full weight and zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayParams {
    k: f64,
    b: f64,
}

impl DecayParams {
    pub fn new(k: f64, b: f64) -> Result<Self, DecayError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(DecayError::BadRate { k });
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(DecayError::BadExponent { b });
        }
        Ok(DecayParams { k, b })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Weight of a contribution aged by `dt_seconds`.
    ///
    /// The base is clamped at zero before exponentiation; a negative base
    /// raised to a fractional b would otherwise be NaN.
    #[inline]
    pub fn factor(&self, dt_seconds: f64) -> f64 {
        let base = 1.0 - self.k * dt_seconds;
        if base <= 0.0 {
            0.0
        } else if self.b == 2.0 {
            // quadratic window is the default and sits on the hot path
            base * base
        } else if self.b == 1.0 {
            base
        } else {
            base.powf(self.b)
        }
    }
}

impl Default for DecayParams {
    /// k = 10 (100 ms horizon), b = 2.
    fn default() -> Self {
        DecayParams { k: 10.0, b: 2.0 }
    }
}

pub const US_PER_SEC: f64 = 1.0e6;

/// Interval between two microsecond timestamps, in seconds.
#[inline]
pub fn interval_seconds(last: u64, now: u64) -> Result<f64, DecayError> {
    if now < last {
        return Err(DecayError::NegativeInterval { now, last });
    }
    Ok((now - last) as f64 / US_PER_SEC)
}

/// Decayed-accumulator state: per-pixel value S and last-update time T.
///
/// T starts at zero everywhere, so a pixel's first event is decayed by its
/// age relative to stream origin before the contribution lands.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices {
    geometry: SensorGeometry,
    s: Vec<f64>,
    t: Vec<u64>,
}

impl StateMatrices {
    pub fn new(geometry: SensorGeometry) -> Self {
        let n = geometry.pixel_count();
        StateMatrices { geometry, s: vec![0.0; n], t: vec![0; n] }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    pub fn last_updates(&self) -> &[u64] {
        &self.t
    }

    pub fn value_at(&self, x: u16, y: u16) -> f64 {
        self.s[self.geometry.index(x, y)]
    }

    pub fn last_update_at(&self, x: u16, y: u16) -> u64 {
        self.t[self.geometry.index(x, y)]
    }

    pub fn reset(&mut self) {
        self.s.fill(0.0);
        self.t.fill(0);
    }

    /// Overwrite the stored value at (x, y) without touching its stamp.
    /// Escape hatch for layers that post-process values, e.g. clamping.
    pub fn set_value_at(&mut self, x: u16, y: u16, v: f64) {
        let i = self.geometry.index(x, y);
        self.s[i] = v;
    }

    /// Fold one signed contribution into pixel (x, y) at time `t_us`:
    /// add, then decay the sum by the time since the pixel's last update,
    /// then stamp the pixel with `t_us`. Caller guarantees bounds.
    #[inline]
    pub fn apply_event(
        &mut self,
        x: u16,
        y: u16,
        t_us: u64,
        signed_contribution: f64,
        decay: &DecayParams,
    ) -> Result<(), DecayError> {
        let i = self.geometry.index(x, y);
        let dt = interval_seconds(self.t[i], t_us)?;
        self.s[i] = (self.s[i] + signed_contribution) * decay.factor(dt);
        self.t[i] = t_us;
        Ok(())
    }

    /// Read pixel (x, y) as of `now_us` without mutating state.
    #[inline]
    pub fn peek_decayed(
        &self,
        x: u16,
        y: u16,
        now_us: u64,
        decay: &DecayParams,
    ) -> Result<f64, DecayError> {
        let i = self.geometry.index(x, y);
        let dt = interval_seconds(self.t[i], now_us)?;
        Ok(self.s[i] * decay.factor(dt))
    }

    /// Snapshot every pixel as of `now_us` into `out`, without mutating
    /// state. `out` is resized to the pixel count.
    pub fn peek_into(
        &self,
        now_us: u64,
        decay: &DecayParams,
        out: &mut Vec<f64>,
    ) -> Result<(), DecayError> {
        out.resize(self.s.len(), 0.0);
        for i in 0..self.s.len() {
            let dt = interval_seconds(self.t[i], now_us)?;
            out[i] = self.s[i] * decay.factor(dt);
        }
        Ok(())
    }
}
