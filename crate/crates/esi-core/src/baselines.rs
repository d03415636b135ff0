//! Reference reconstruction methods the single-integration accumulator is
//! measured against: a plain integrator, an exponentially-decayed
//! integrator, and an events-only complementary filter.
//!
//! All three share the engine in [`crate::reconstruct`], so frame timing,
//! validation, and rendering behave identically across methods.

use crate::decay::interval_seconds;
use crate::event::{Event, Frame, SensorGeometry};
use crate::reconstruct::{
    check_contribution, check_rate, ClampBounds, Engine, FrameAnchor, FrameClock, ReconstructError,
    Reconstructor, StateCore,
};

struct NaiveCore {
    geometry: SensorGeometry,
    s: Vec<f64>,
    contribution: f64,
    bounds: ClampBounds,
}

impl StateCore for NaiveCore {
    fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn bounds(&self) -> ClampBounds {
        self.bounds
    }

    fn apply(&mut self, x: u16, y: u16, _t_us: u64, p: i8) -> Result<(), ReconstructError> {
        self.s[self.geometry.index(x, y)] += p as f64 * self.contribution;
        Ok(())
    }

    fn peek_into(&self, _now_us: u64, out: &mut Vec<f64>) -> Result<(), ReconstructError> {
        out.clear();
        out.extend_from_slice(&self.s);
        Ok(())
    }

    fn reset(&mut self) {
        self.s.fill(0.0);
    }
}

/// Direct event integration with no forgetting. Every event shifts its
/// pixel by the signed contribution forever, so sensor noise accumulates
/// without bound; values are clamped only when rendered.
pub struct NaiveIntegrator {
    engine: Engine<NaiveCore>,
}

impl NaiveIntegrator {
    pub fn new(
        geometry: SensorGeometry,
        contribution: f64,
        bounds: ClampBounds,
        fps: f64,
        anchor: FrameAnchor,
    ) -> Result<Self, ReconstructError> {
        check_contribution(contribution)?;
        let core = NaiveCore {
            geometry,
            s: vec![0.0; geometry.pixel_count()],
            contribution,
            bounds,
        };
        Ok(NaiveIntegrator { engine: Engine::new(core, FrameClock::new(fps, anchor)?) })
    }

    /// Raw unclamped accumulator values.
    pub fn raw_values(&self) -> &[f64] {
        &self.engine.core().s
    }
}

struct ExpDecayCore {
    geometry: SensorGeometry,
    s: Vec<f64>,
    t: Vec<u64>,
    rate: f64,
    contribution: f64,
    bounds: ClampBounds,
}

impl StateCore for ExpDecayCore {
    fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn bounds(&self) -> ClampBounds {
        self.bounds
    }

    fn apply(&mut self, x: u16, y: u16, t_us: u64, p: i8) -> Result<(), ReconstructError> {
        let i = self.geometry.index(x, y);
        let dt = interval_seconds(self.t[i], t_us)?;
        let v = (self.s[i] + p as f64 * self.contribution) * (-self.rate * dt).exp();
        self.s[i] = self.bounds.apply(v);
        self.t[i] = t_us;
        Ok(())
    }

    fn peek_into(&self, now_us: u64, out: &mut Vec<f64>) -> Result<(), ReconstructError> {
        out.resize(self.s.len(), 0.0);
        for i in 0..self.s.len() {
            let dt = interval_seconds(self.t[i], now_us)?;
            out[i] = self.s[i] * (-self.rate * dt).exp();
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.s.fill(0.0);
        self.t.fill(0);
    }
}

/// Lazy integrator with an exponential forgetting window instead of the
/// polynomial one: per event, add the signed contribution, multiply by
/// exp(-rate * idle seconds), clamp, restamp. Unlike the polynomial
/// window, old contributions never reach exactly zero.
pub struct ExpDecayAccumulator {
    engine: Engine<ExpDecayCore>,
}

impl ExpDecayAccumulator {
    pub fn new(
        geometry: SensorGeometry,
        rate: f64,
        contribution: f64,
        bounds: ClampBounds,
        fps: f64,
        anchor: FrameAnchor,
    ) -> Result<Self, ReconstructError> {
        check_rate(rate)?;
        check_contribution(contribution)?;
        let n = geometry.pixel_count();
        let core = ExpDecayCore {
            geometry,
            s: vec![0.0; n],
            t: vec![0; n],
            rate,
            contribution,
            bounds,
        };
        Ok(ExpDecayAccumulator { engine: Engine::new(core, FrameClock::new(fps, anchor)?) })
    }

    pub fn rate(&self) -> f64 {
        self.engine.core().rate
    }
}

struct CompFilterCore {
    geometry: SensorGeometry,
    l: Vec<f64>,
    t: Vec<u64>,
    rate: f64,
    contribution: f64,
    bounds: ClampBounds,
}

impl StateCore for CompFilterCore {
    fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn bounds(&self) -> ClampBounds {
        self.bounds
    }

    fn apply(&mut self, x: u16, y: u16, t_us: u64, p: i8) -> Result<(), ReconstructError> {
        let i = self.geometry.index(x, y);
        let dt = interval_seconds(self.t[i], t_us)?;
        // high-pass update: leak the running estimate first, then add the
        // fresh step, so the newest event always lands at full weight
        self.l[i] = self.l[i] * (-self.rate * dt).exp() + p as f64 * self.contribution;
        self.t[i] = t_us;
        Ok(())
    }

    fn peek_into(&self, now_us: u64, out: &mut Vec<f64>) -> Result<(), ReconstructError> {
        out.resize(self.l.len(), 0.0);
        for i in 0..self.l.len() {
            let dt = interval_seconds(self.t[i], now_us)?;
            out[i] = self.l[i] * (-self.rate * dt).exp();
        }
        Ok(())
    }

    fn reset(&mut self) {
        self.l.fill(0.0);
        self.t.fill(0);
    }
}

/// Events-only complementary filter: the log-intensity estimate leaks
/// toward zero at a fixed rate and each event injects a full-weight step
/// on top (decay first, then add). Without an auxiliary frame stream the
/// filter tracks deviations from a zero baseline.
pub struct ComplementaryFilterEventsOnly {
    engine: Engine<CompFilterCore>,
}

impl ComplementaryFilterEventsOnly {
    pub fn new(
        geometry: SensorGeometry,
        rate: f64,
        contribution: f64,
        bounds: ClampBounds,
        fps: f64,
        anchor: FrameAnchor,
    ) -> Result<Self, ReconstructError> {
        check_rate(rate)?;
        check_contribution(contribution)?;
        let n = geometry.pixel_count();
        let core = CompFilterCore {
            geometry,
            l: vec![0.0; n],
            t: vec![0; n],
            rate,
            contribution,
            bounds,
        };
        Ok(ComplementaryFilterEventsOnly {
            engine: Engine::new(core, FrameClock::new(fps, anchor)?),
        })
    }

    pub fn rate(&self) -> f64 {
        self.engine.core().rate
    }
}

macro_rules! impl_reconstructor {
    ($ty:ty, $name:literal) => {
        impl Reconstructor for $ty {
            fn geometry(&self) -> SensorGeometry {
                self.engine.geometry()
            }

            fn name(&self) -> &'static str {
                $name
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
    };
}

impl_reconstructor!(NaiveIntegrator, "naive");
impl_reconstructor!(ExpDecayAccumulator, "expdecay");
impl_reconstructor!(ComplementaryFilterEventsOnly, "compfilter");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;

    fn geom() -> SensorGeometry {
        SensorGeometry::new(2, 2).unwrap()
    }

    fn bounds() -> ClampBounds {
        ClampBounds::default()
    }

    #[test]
    fn naive_sums_without_decay() {
        let mut r =
            NaiveIntegrator::new(geom(), 0.15, bounds(), 100.0, FrameAnchor::FirstEvent).unwrap();
        let events: Vec<Event> = (0..4).map(|i| Event::new(i * 1_000_000, 0, 0, 1)).collect();
        r.process(&events).unwrap();
        // four positive events seconds apart: no forgetting at all
        assert!((r.raw_values()[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn naive_raw_values_exceed_render_bounds() {
        let mut r =
            NaiveIntegrator::new(geom(), 0.15, bounds(), 100.0, FrameAnchor::FirstEvent).unwrap();
        let events: Vec<Event> = (0..20).map(|i| Event::new(i, 0, 0, 1)).collect();
        r.process(&events).unwrap();
        assert!((r.raw_values()[0] - 3.0).abs() < 1e-12);
        // render still clamps to the display range
        let f = r.peek(19).unwrap();
        assert_eq!(f.pixel(0, 0), 255);
    }

    #[test]
    fn expdecay_halves_at_ln2_over_rate() {
        let mut r = ExpDecayAccumulator::new(
            geom(),
            1.0,
            1.0,
            ClampBounds::new(-4.0, 4.0).unwrap(),
            100.0,
            FrameAnchor::FirstEvent,
        )
        .unwrap();
        r.process(&[Event::new(0, 0, 0, 1)]).unwrap();
        let half_life_us = (std::f64::consts::LN_2 * 1e6) as u64;
        let f = r.peek(half_life_us).unwrap();
        // stored 1.0 decayed to ~0.5; gray = round(255 * (0.5 + 4) / 8)
        assert_eq!(f.pixel(0, 0), 143);
    }

    #[test]
    fn expdecay_clamps_per_event() {
        let b = ClampBounds::new(-0.2, 0.2).unwrap();
        let mut r =
            ExpDecayAccumulator::new(geom(), 1.0, 0.15, b, 100.0, FrameAnchor::FirstEvent).unwrap();
        // two immediate positive events would reach 0.3 unclamped
        r.process(&[Event::new(0, 0, 0, 1), Event::new(0, 0, 0, 1)]).unwrap();
        let f = r.peek(0).unwrap();
        assert_eq!(f.pixel(0, 0), 255); // stored value sits at the 0.2 cap
    }

    #[test]
    fn compfilter_decays_before_adding() {
        let mut r = ComplementaryFilterEventsOnly::new(
            geom(),
            1.0,
            0.5,
            ClampBounds::new(-2.0, 2.0).unwrap(),
            100.0,
            FrameAnchor::FirstEvent,
        )
        .unwrap();
        r.process(&[Event::new(0, 0, 0, 1)]).unwrap();
        // one second later the old 0.5 has decayed to 0.5/e before the new
        // step lands at full weight
        let half = std::f64::consts::E.recip() * 0.5 + 0.5;
        r.process(&[Event::new(1_000_000, 0, 0, 1)]).unwrap();
        let mut out = Vec::new();
        r.engine.core().peek_into(1_000_000, &mut out).unwrap();
        assert!((out[0] - half).abs() < 1e-12);
    }

    #[test]
    fn compfilter_step_lands_at_full_weight() {
        let mut r = ComplementaryFilterEventsOnly::new(
            geom(),
            1000.0, // aggressive leak
            0.5,
            ClampBounds::new(-2.0, 2.0).unwrap(),
            100.0,
            FrameAnchor::FirstEvent,
        )
        .unwrap();
        // even after a long gap, a fresh event reads back at its full step
        r.process(&[Event::new(0, 1, 1, -1), Event::new(5_000_000, 1, 1, -1)]).unwrap();
        let mut out = Vec::new();
        r.engine.core().peek_into(5_000_000, &mut out).unwrap();
        assert!((out[geom().index(1, 1)] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn all_baselines_share_frame_schedule() {
        let mk_events = || vec![Event::new(2_000, 0, 0, 1), Event::new(25_000, 1, 1, -1)];
        let mut naive =
            NaiveIntegrator::new(geom(), 0.15, bounds(), 100.0, FrameAnchor::Origin(0)).unwrap();
        let mut exp = ExpDecayAccumulator::new(
            geom(),
            10.0,
            0.15,
            bounds(),
            100.0,
            FrameAnchor::Origin(0),
        )
        .unwrap();
        let mut comp = ComplementaryFilterEventsOnly::new(
            geom(),
            10.0,
            0.15,
            bounds(),
            100.0,
            FrameAnchor::Origin(0),
        )
        .unwrap();
        let t_naive: Vec<u64> =
            naive.process(&mk_events()).unwrap().iter().map(|f| f.t_emit).collect();
        let t_exp: Vec<u64> = exp.process(&mk_events()).unwrap().iter().map(|f| f.t_emit).collect();
        let t_comp: Vec<u64> =
            comp.process(&mk_events()).unwrap().iter().map(|f| f.t_emit).collect();
        assert_eq!(t_naive, vec![10_000, 20_000]);
        assert_eq!(t_naive, t_exp);
        assert_eq!(t_naive, t_comp);
    }
}
