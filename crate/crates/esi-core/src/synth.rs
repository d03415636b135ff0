//! Ground-truth scene simulator: a linear intensity ramp background with a
//! partially reflective circle sliding along x, converted to events by a
//! contrast-threshold trigger, with optional Poisson background noise and
//! hot pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::event::{Event, EventBatch, EventError, SensorGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("scene intensity must be strictly positive, got {value}")]
    NonPositiveIntensity { value: f64 },
    #[error("reflectivity must lie in (0, 1], got {value}")]
    BadReflectivity { value: f64 },
    #[error("circle radius must be positive and finite, got {value}")]
    BadRadius { value: f64 },
    #[error("duration and lead time must be finite, non-negative seconds")]
    BadTiming,
    #[error("contrast threshold must be positive and finite, got {value}")]
    BadThreshold { value: f64 },
    #[error("sample step must be positive and finite, got {value}")]
    BadSampleStep { value: f64 },
    #[error(
        "sampling too coarse: circle moves {px_per_sample:.3} px per sample, limit is 0.5"
    )]
    SamplingTooCoarse { px_per_sample: f64 },
    #[error("noise rate must be non-negative and finite, got {value}")]
    BadNoiseRate { value: f64 },
    #[error("hot pixel ({x}, {y}) outside sensor or polarity {p} not +1/-1")]
    BadHotPixel { x: u16, y: u16, p: i8 },
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Moving disc overlaid on the background. A pixel is inside iff its
/// center lies within `radius_px` of the disc center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSpec {
    pub radius_px: f64,
    /// Fraction of background intensity inside the disc, in (0, 1].
    pub reflectivity: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// Horizontal speed in px/s once the stationary lead has elapsed.
    pub velocity_x: f64,
}

/// Full scene description: background ramp, disc, and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: SensorGeometry,
    /// Background intensity at x = 0, linear units, > 0.
    pub bg_min: f64,
    /// Background intensity at x = width - 1.
    pub bg_max: f64,
    pub circle: CircleSpec,
    pub duration_s: f64,
    /// Seconds the disc stays parked at its initial center.
    pub stationary_lead_s: f64,
}

impl Default for SceneSpec {
    /// 128x128 ramp from 1 to 4 with an 18 px disc of 30% reflectivity
    /// parked for 0.5 s, then sliding left at 60 px/s for 2 more seconds.
    fn default() -> Self {
        SceneSpec {
            geometry: SensorGeometry::new(128, 128).unwrap(),
            bg_min: 1.0,
            bg_max: 4.0,
            circle: CircleSpec {
                radius_px: 18.0,
                reflectivity: 0.3,
                center_x: 96.0,
                center_y: 64.0,
                velocity_x: -60.0,
            },
            duration_s: 2.5,
            stationary_lead_s: 0.5,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let min_intensity = self.bg_min.min(self.bg_max);
        if !(min_intensity > 0.0 && self.bg_min.is_finite() && self.bg_max.is_finite()) {
            return Err(SynthError::NonPositiveIntensity { value: min_intensity });
        }
        let r = self.circle.reflectivity;
        if !(r > 0.0 && r <= 1.0) {
            return Err(SynthError::BadReflectivity { value: r });
        }
        if !(self.circle.radius_px > 0.0 && self.circle.radius_px.is_finite()) {
            return Err(SynthError::BadRadius { value: self.circle.radius_px });
        }
        if !(self.duration_s >= 0.0
            && self.duration_s.is_finite()
            && self.stationary_lead_s >= 0.0
            && self.stationary_lead_s.is_finite())
        {
            return Err(SynthError::BadTiming);
        }
        Ok(())
    }

    /// Background intensity at column x (linear units).
    pub fn ramp(&self, x: u16) -> f64 {
        let w = self.geometry.width;
        if w <= 1 {
            return self.bg_min;
        }
        let frac = x as f64 / (w - 1) as f64;
        self.bg_min + (self.bg_max - self.bg_min) * frac
    }

    /// Disc center at time `t_s`; motion starts after the stationary lead
    /// and `t_s` is clamped into the scene duration.
    pub fn circle_center_at(&self, t_s: f64) -> (f64, f64) {
        let t = t_s.clamp(0.0, self.duration_s);
        let moving = (t - self.stationary_lead_s).max(0.0);
        (self.circle.center_x + self.circle.velocity_x * moving, self.circle.center_y)
    }

    /// Whether pixel (x, y) is covered by the disc at time `t_s`.
    pub fn inside_circle(&self, t_s: f64, x: u16, y: u16) -> bool {
        let (cx, cy) = self.circle_center_at(t_s);
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        dx * dx + dy * dy <= self.circle.radius_px * self.circle.radius_px
    }

    pub fn duration_us(&self) -> u64 {
        (self.duration_s * 1.0e6).round() as u64
    }
}

/// Contrast-threshold trigger: a pixel fires once its log intensity has
/// drifted `contrast_threshold` away from the pixel's reference level, and
/// the reference steps by one threshold per emitted event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerModel {
    pub contrast_threshold: f64,
}

impl Default for TriggerModel {
    fn default() -> Self {
        TriggerModel { contrast_threshold: 0.15 }
    }
}

/// A pixel that fires spontaneously at a fixed rate and polarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HotPixel {
    pub x: u16,
    pub y: u16,
    pub rate_hz: f64,
    pub polarity: i8,
}

/// Noise injection: uniform per-pixel Poisson background activity with
/// random polarity, plus explicit hot pixels. Zero rates mean silence.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub background_rate_hz: f64,
    pub hot_pixels: Vec<HotPixel>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { background_rate_hz: 0.0, hot_pixels: Vec::new(), seed: 42 }
    }
}

impl NoiseSpec {
    fn validate(&self, geometry: &SensorGeometry) -> Result<(), SynthError> {
        if !(self.background_rate_hz >= 0.0 && self.background_rate_hz.is_finite()) {
            return Err(SynthError::BadNoiseRate { value: self.background_rate_hz });
        }
        for hp in &self.hot_pixels {
            if !(hp.rate_hz >= 0.0 && hp.rate_hz.is_finite()) {
                return Err(SynthError::BadNoiseRate { value: hp.rate_hz });
            }
            if !geometry.contains(hp.x, hp.y) || (hp.polarity != 1 && hp.polarity != -1) {
                return Err(SynthError::BadHotPixel { x: hp.x, y: hp.y, p: hp.polarity });
            }
        }
        Ok(())
    }
}

/// Log intensity of every pixel at time `t_s`, row-major.
pub fn render_log_intensity(scene: &SceneSpec, t_s: f64) -> Result<Vec<f64>, SynthError> {
    scene.validate()?;
    let ln_refl = scene.circle.reflectivity.ln();
    let (cx, cy) = scene.circle_center_at(t_s);
    let r2 = scene.circle.radius_px * scene.circle.radius_px;
    let w = scene.geometry.width;
    let h = scene.geometry.height;
    let mut out = Vec::with_capacity(scene.geometry.pixel_count());
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            let mut l = scene.ramp(x).ln();
            if dx * dx + dy * dy <= r2 {
                l += ln_refl;
            }
            out.push(l);
        }
    }
    Ok(out)
}

/// [`render_log_intensity`] at each requested time.
pub fn replay_ground_truth(
    scene: &SceneSpec,
    times_s: &[f64],
) -> Result<Vec<Vec<f64>>, SynthError> {
    times_s.iter().map(|&t| render_log_intensity(scene, t)).collect()
}

/// Simulate the scene into an ordered event batch.
///
/// Signal events come from threshold crossings sampled every `dt_sample_s`
/// seconds, with timestamps linearly interpolated in log intensity inside
/// the sample interval and quantized to 1 us. Noise and hot-pixel events
/// are merged in time order. Deterministic for a fixed seed.
pub fn generate_events(
    scene: &SceneSpec,
    trigger: &TriggerModel,
    noise: &NoiseSpec,
    dt_sample_s: f64,
) -> Result<EventBatch, SynthError> {
    scene.validate()?;
    noise.validate(&scene.geometry)?;
    let c = trigger.contrast_threshold;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SynthError::BadThreshold { value: c });
    }
    if !(dt_sample_s > 0.0 && dt_sample_s.is_finite()) {
        return Err(SynthError::BadSampleStep { value: dt_sample_s });
    }
    // The disc edge must advance well under a pixel per sample, or
    // occupancy flips (and their interpolated timestamps) get lost.
    let px_per_sample = scene.circle.velocity_x.abs() * dt_sample_s;
    if px_per_sample > 0.5 {
        return Err(SynthError::SamplingTooCoarse { px_per_sample });
    }

    let mut events = signal_events(scene, c, dt_sample_s);
    noise_events(scene, noise, &mut events);
    events.sort_by_key(|e| e.t);
    let batch = EventBatch::new(events)?;
    Ok(batch.with_span_end(scene.duration_us())?)
}

/// Threshold-crossing events from the deterministic scene content.
fn signal_events(scene: &SceneSpec, c: f64, dt: f64) -> Vec<Event> {
    let w = scene.geometry.width;
    let h = scene.geometry.height;
    let ln_refl = scene.circle.reflectivity.ln();
    let r = scene.circle.radius_px;
    let r2 = r * r;
    let cy = scene.circle.center_y;

    // Reference levels start at the initial field, so a static scene is
    // silent from the first sample.
    let mut l_ref: Vec<f64> = render_log_intensity(scene, 0.0).expect("scene validated");

    // Sample instants: every dt up to the duration, then the exact end.
    let mut times = Vec::new();
    let mut k = 1u64;
    loop {
        let t = k as f64 * dt;
        if t >= scene.duration_s - 1e-12 {
            break;
        }
        times.push(t);
        k += 1;
    }
    if scene.duration_s > 0.0 {
        times.push(scene.duration_s);
    }

    let y_lo = ((cy - r - 1.0).floor().max(0.0)) as u16;
    let y_hi = ((cy + r + 1.0).ceil().min((h - 1) as f64)) as u16;

    let mut events = Vec::new();
    let mut t_prev = 0.0f64;
    for &t_cur in &times {
        let (cx_prev, _) = scene.circle_center_at(t_prev);
        let (cx_cur, _) = scene.circle_center_at(t_cur);
        if cx_prev == cx_cur {
            t_prev = t_cur;
            continue;
        }
        let x_lo = ((cx_prev.min(cx_cur) - r - 1.0).floor().max(0.0)) as u16;
        let x_hi = ((cx_prev.max(cx_cur) + r + 1.0).ceil().min((w - 1) as f64)) as u16;
        let t_prev_us = (t_prev * 1.0e6).round() as u64;
        let t_cur_us = (t_cur * 1.0e6).round() as u64;

        for y in y_lo..=y_hi {
            let dy = y as f64 - cy;
            let dy2 = dy * dy;
            for x in x_lo..=x_hi {
                let dx_prev = x as f64 - cx_prev;
                let dx_cur = x as f64 - cx_cur;
                let inside_prev = dx_prev * dx_prev + dy2 <= r2;
                let inside_cur = dx_cur * dx_cur + dy2 <= r2;
                if inside_prev == inside_cur {
                    continue;
                }
                let i = scene.geometry.index(x, y);
                let base = scene.ramp(x).ln();
                let l_prev = base + if inside_prev { ln_refl } else { 0.0 };
                let l_cur = base + if inside_cur { ln_refl } else { 0.0 };
                let diff = l_cur - l_ref[i];
                // Tiny slack so a crossing that lands within float error
                // of an exact multiple of c still fires.
                let m = (diff.abs() / c + 1e-9).floor() as u64;
                if m == 0 {
                    continue;
                }
                let sign = if diff > 0.0 { 1.0 } else { -1.0 };
                let p: i8 = if diff > 0.0 { 1 } else { -1 };
                for j in 1..=m {
                    let target = l_ref[i] + sign * c * j as f64;
                    let frac = ((target - l_prev) / (l_cur - l_prev)).clamp(0.0, 1.0);
                    let t_event = t_prev + frac * (t_cur - t_prev);
                    let t_us =
                        ((t_event * 1.0e6).round() as u64).clamp(t_prev_us, t_cur_us);
                    events.push(Event::new(t_us, x, y, p));
                }
                l_ref[i] += sign * c * m as f64;
            }
        }
        t_prev = t_cur;
    }
    events
}

/// Append Poisson background and hot-pixel events over the scene duration.
fn noise_events(scene: &SceneSpec, noise: &NoiseSpec, events: &mut Vec<Event>) {
    let dur_s = scene.duration_s;
    let dur_us = scene.duration_us();
    if dur_s <= 0.0 {
        return;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);

    if noise.background_rate_hz > 0.0 {
        let lambda = noise.background_rate_hz * dur_s;
        let poisson = Poisson::new(lambda).expect("positive rate validated");
        for y in 0..scene.geometry.height {
            for x in 0..scene.geometry.width {
                let n = poisson.sample(&mut rng) as u64;
                for _ in 0..n {
                    let t = rng.random_range(0..=dur_us);
                    let p: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
                    events.push(Event::new(t, x, y, p));
                }
            }
        }
    }

    for hp in &noise.hot_pixels {
        if hp.rate_hz <= 0.0 {
            continue;
        }
        let poisson = Poisson::new(hp.rate_hz * dur_s).expect("positive rate validated");
        let n = poisson.sample(&mut rng) as u64;
        for _ in 0..n {
            let t = rng.random_range(0..=dur_us);
            events.push(Event::new(t, hp.x, hp.y, hp.polarity));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_03: f64 = -1.203_972_804_325_936_1; // ln(0.3)

    fn small_scene() -> SceneSpec {
        SceneSpec {
            geometry: SensorGeometry::new(64, 64).unwrap(),
            bg_min: 1.0,
            bg_max: 4.0,
            circle: CircleSpec {
                radius_px: 9.0,
                reflectivity: 0.3,
                center_x: 44.0,
                center_y: 32.0,
                velocity_x: -40.0,
            },
            duration_s: 1.2,
            stationary_lead_s: 0.2,
        }
    }

    #[test]
    fn identity_reflectivity_is_pure_ramp() {
        let mut scene = SceneSpec::default();
        scene.circle.reflectivity = 1.0;
        let field = render_log_intensity(&scene, 1.0).unwrap();
        for y in 0..scene.geometry.height {
            for x in 0..scene.geometry.width {
                let expect = scene.ramp(x).ln();
                assert_eq!(field[scene.geometry.index(x, y)], expect);
            }
        }
    }

    #[test]
    fn field_constant_during_stationary_lead() {
        let scene = SceneSpec::default();
        let a = render_log_intensity(&scene, 0.1).unwrap();
        let b = render_log_intensity(&scene, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn circle_interior_offset_is_log_reflectivity() {
        let scene = SceneSpec::default();
        let field = render_log_intensity(&scene, 0.0).unwrap();
        let i = scene.geometry.index(96, 64); // disc center at t = 0
        let bg = scene.ramp(96).ln();
        assert!((field[i] - bg - LN_03).abs() < 1e-12);
    }

    #[test]
    fn stationary_silent_scene_emits_nothing() {
        let mut scene = small_scene();
        scene.circle.velocity_x = 0.0;
        let batch = generate_events(
            &scene,
            &TriggerModel::default(),
            &NoiseSpec::default(),
            1e-3,
        )
        .unwrap();
        assert!(batch.is_empty());
        assert_eq!(batch.span_end(), Some(1_200_000));
    }

    #[test]
    fn no_events_before_motion_starts() {
        let scene = small_scene();
        let batch = generate_events(
            &scene,
            &TriggerModel::default(),
            &NoiseSpec::default(),
            1e-3,
        )
        .unwrap();
        assert!(!batch.is_empty());
        let lead_us = (scene.stationary_lead_s * 1e6) as u64;
        assert!(batch.first_t().unwrap() >= lead_us);
    }

    #[test]
    fn darker_disc_darkens_on_entry_brightens_on_exit() {
        let scene = small_scene();
        let batch = generate_events(
            &scene,
            &TriggerModel::default(),
            &NoiseSpec::default(),
            1e-3,
        )
        .unwrap();
        // walk per-pixel event sequences
        let mut per_pixel: std::collections::HashMap<(u16, u16), Vec<i8>> =
            std::collections::HashMap::new();
        for e in batch.iter() {
            per_pixel.entry((e.x, e.y)).or_default().push(e.p);
        }
        // a center-row pixel that starts outside the disc and is fully
        // traversed sees 8 darkening then 8 brightening events
        let expected_per_edge = (0.3f64.ln().abs() / 0.15) as usize; // 8
        let probe = (25u16, 32u16); // disc arrives at t=0.45s, leaves at t=0.9s
        let seq = &per_pixel[&probe];
        assert_eq!(seq.len(), 2 * expected_per_edge);
        assert!(seq[..expected_per_edge].iter().all(|&p| p == -1));
        assert!(seq[expected_per_edge..].iter().all(|&p| p == 1));
    }

    #[test]
    fn conservation_up_to_reference_quantization() {
        let scene = small_scene();
        let c = 0.15;
        let batch = generate_events(
            &scene,
            &TriggerModel { contrast_threshold: c },
            &NoiseSpec::default(),
            1e-3,
        )
        .unwrap();
        let start = render_log_intensity(&scene, 0.0).unwrap();
        let end = render_log_intensity(&scene, scene.duration_s).unwrap();
        let mut net = vec![0i64; scene.geometry.pixel_count()];
        for e in batch.iter() {
            net[scene.geometry.index(e.x, e.y)] += e.p as i64;
        }
        for i in 0..net.len() {
            let reconstructed = c * net[i] as f64;
            let truth = end[i] - start[i];
            assert!(
                (reconstructed - truth).abs() < c,
                "pixel {i}: {reconstructed} vs {truth}"
            );
        }
    }

    #[test]
    fn timestamps_ordered_and_within_span() {
        let scene = small_scene();
        let noise = NoiseSpec {
            background_rate_hz: 2.0,
            hot_pixels: vec![HotPixel { x: 5, y: 5, rate_hz: 500.0, polarity: 1 }],
            seed: 9,
        };
        let batch =
            generate_events(&scene, &TriggerModel::default(), &noise, 1e-3).unwrap();
        let mut prev = 0u64;
        for e in batch.iter() {
            assert!(e.t >= prev);
            assert!(e.t <= scene.duration_us());
            prev = e.t;
        }
    }

    #[test]
    fn hot_pixel_rate_within_poisson_band() {
        let mut scene = small_scene();
        scene.circle.velocity_x = 0.0; // signal silent
        scene.duration_s = 1.0;
        let noise = NoiseSpec {
            background_rate_hz: 0.0,
            hot_pixels: vec![HotPixel { x: 3, y: 4, rate_hz: 10_000.0, polarity: 1 }],
            seed: 1234,
        };
        let batch =
            generate_events(&scene, &TriggerModel::default(), &noise, 1e-3).unwrap();
        let n = batch.len() as f64;
        // lambda 10^4, sigma 100: accept a +-5 sigma band
        assert!((9_500.0..=10_500.0).contains(&n), "count {n}");
        assert!(batch.iter().all(|e| e.x == 3 && e.y == 4 && e.p == 1));
    }

    #[test]
    fn fixed_seed_reproduces_batch_exactly() {
        let scene = small_scene();
        let noise = NoiseSpec { background_rate_hz: 5.0, hot_pixels: vec![], seed: 77 };
        let a = generate_events(&scene, &TriggerModel::default(), &noise, 1e-3).unwrap();
        let b = generate_events(&scene, &TriggerModel::default(), &noise, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coarse_sampling_rejected() {
        let mut scene = small_scene();
        scene.circle.velocity_x = -600.0;
        let err = generate_events(
            &scene,
            &TriggerModel::default(),
            &NoiseSpec::default(),
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, SynthError::SamplingTooCoarse { .. }));
    }

    #[test]
    fn nonpositive_intensity_rejected() {
        let mut scene = small_scene();
        scene.bg_min = 0.0;
        let err = render_log_intensity(&scene, 0.0).unwrap_err();
        assert_eq!(err, SynthError::NonPositiveIntensity { value: 0.0 });
    }

    #[test]
    fn replay_matches_single_renders() {
        let scene = small_scene();
        let times = [0.0, 0.6, 1.2];
        let replay = replay_ground_truth(&scene, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert_eq!(replay[i], render_log_intensity(&scene, t).unwrap());
        }
    }
}
