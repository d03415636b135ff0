//! Throughput and per-frame latency measurement.
//!
//! Timed regions cover reconstruction work only: batches are generated or
//! loaded beforehand, and a no-op reconstructor is provided so a harness
//! can verify that its own overhead is negligible.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::event::{Event, EventBatch, Frame, SensorGeometry};
use crate::reconstruct::{
    build_reconstructor, FrameAnchor, FrameClock, MethodKind, ReconstructError,
    ReconstructionConfig, Reconstructor,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repeats must be at least 3, got {got}")]
    TooFewRepeats { got: usize },
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
}

/// Frame rate low enough that no boundary falls inside any realistic
/// stream, used to measure pure event processing without emission.
const NO_EMISSION_FPS: f64 = 1.0e-9;

/// Per-frame timing at one frame-rate setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub fps: f64,
    pub frames: usize,
    pub mean_events_per_frame: f64,
    pub mean_ms: f64,
    pub p99_ms: f64,
    /// Mean frame time as a percentage of the frame period; below 100
    /// means the method keeps up in real time at this rate.
    pub pct_of_period: f64,
}

/// Throughput measurement for one method on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub method: String,
    pub events_processed: u64,
    pub repeats: usize,
    /// Median wall time with frame emission enabled, seconds.
    pub wall_time_s: f64,
    /// events_processed / wall_time_s; None for an empty batch.
    pub throughput_ev_per_s: Option<f64>,
    /// Median wall time with emission disabled, seconds.
    pub no_emission_wall_s: f64,
    pub no_emission_throughput: Option<f64>,
    pub machine_note: String,
}

pub fn machine_note() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{}, {} logical cores", std::env::consts::ARCH, std::env::consts::OS, cores)
}

/// Median of raw timings (seconds). Sorts a copy.
fn median_s(times: &[f64]) -> f64 {
    let mut v = times.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Nearest-rank 99th percentile.
fn p99_s(times: &[f64]) -> f64 {
    let mut v = times.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((0.99 * v.len() as f64).ceil() as usize).max(1);
    v[rank - 1]
}

/// Uniform-rate synthetic stream: `n` events evenly spaced over
/// `duration_us`, random pixels and polarities, deterministic per seed.
pub fn synthetic_stream(
    n: usize,
    geometry: SensorGeometry,
    duration_us: u64,
    seed: u64,
) -> EventBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let t = ((i as u128 * duration_us as u128) / n.max(1) as u128) as u64;
        let x = rng.random_range(0..geometry.width);
        let y = rng.random_range(0..geometry.height);
        let p: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        events.push(Event::new(t, x, y, p));
    }
    EventBatch::new(events)
        .expect("evenly spaced timestamps are ordered")
        .with_span_end(duration_us)
        .expect("span covers all events")
}

fn time_run(
    kind: MethodKind,
    config: &ReconstructionConfig,
    batch: &EventBatch,
) -> Result<f64, BenchError> {
    let mut r = build_reconstructor(kind, config)?;
    let start = Instant::now();
    let frames = r.process_batch(batch)?;
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(frames.len());
    Ok(elapsed)
}

/// Median-of-repeats throughput, with and without frame emission. One
/// warm-up run per mode is excluded from timing.
pub fn bench_throughput(
    kind: MethodKind,
    config: &ReconstructionConfig,
    batch: &EventBatch,
    repeats: usize,
) -> Result<BenchReport, BenchError> {
    if repeats < 3 {
        return Err(BenchError::TooFewRepeats { got: repeats });
    }
    let mut no_emission = *config;
    no_emission.fps = NO_EMISSION_FPS;

    let mut with_times = Vec::with_capacity(repeats);
    let mut without_times = Vec::with_capacity(repeats);
    time_run(kind, config, batch)?; // warm-up
    for _ in 0..repeats {
        with_times.push(time_run(kind, config, batch)?);
    }
    time_run(kind, &no_emission, batch)?; // warm-up
    for _ in 0..repeats {
        without_times.push(time_run(kind, &no_emission, batch)?);
    }

    let n = batch.len() as u64;
    let wall = median_s(&with_times);
    let wall_no = median_s(&without_times);
    let tp = (n > 0).then(|| n as f64 / wall);
    let tp_no = (n > 0).then(|| n as f64 / wall_no);
    Ok(BenchReport {
        method: kind.as_str().to_string(),
        events_processed: n,
        repeats,
        wall_time_s: wall,
        throughput_ev_per_s: tp,
        no_emission_wall_s: wall_no,
        no_emission_throughput: tp_no,
        machine_note: machine_note(),
    })
}

/// Frame boundaries of `batch` at `fps`, pinned to the first event (or to
/// zero for an event-free batch), up to the batch span end.
fn frame_boundaries(batch: &EventBatch, fps: f64) -> Result<(u64, Vec<u64>), BenchError> {
    let origin = batch.first_t().unwrap_or(0);
    let end = match batch.span_end().or_else(|| batch.last_t()) {
        Some(e) => e,
        None => return Ok((origin, Vec::new())),
    };
    let mut clock = FrameClock::new(fps, FrameAnchor::Origin(origin))?;
    let mut bounds = Vec::new();
    while let Some(b) = clock.pop_at_or_before(end) {
        bounds.push(b);
    }
    Ok((origin, bounds))
}

/// Measure per-frame processing time (events folded in plus the render)
/// at each requested frame rate.
pub fn bench_frame_time(
    kind: MethodKind,
    config: &ReconstructionConfig,
    batch: &EventBatch,
    fps_list: &[f64],
) -> Result<Vec<FrameTiming>, BenchError> {
    let mut out = Vec::with_capacity(fps_list.len());
    let events = batch.events();
    for &fps in fps_list {
        let (origin, bounds) = frame_boundaries(batch, fps)?;
        let mut cfg = *config;
        cfg.fps = fps;
        cfg.anchor = FrameAnchor::Origin(origin);
        let mut r = build_reconstructor(kind, &cfg)?;

        let mut times = Vec::with_capacity(bounds.len());
        let mut total_events = 0usize;
        let mut cursor = 0usize;
        for &b in &bounds {
            let upper = events.partition_point(|e| e.t <= b);
            let slice = &events[cursor..upper];
            cursor = upper;
            total_events += slice.len();
            let start = Instant::now();
            r.process(slice)?;
            let frames = r.finish(b)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(frames.len());
        }
        if times.is_empty() {
            continue;
        }
        let mean_s = times.iter().sum::<f64>() / times.len() as f64;
        let period_s = 1.0 / fps;
        out.push(FrameTiming {
            fps,
            frames: times.len(),
            mean_events_per_frame: total_events as f64 / times.len() as f64,
            mean_ms: mean_s * 1e3,
            p99_ms: p99_s(&times) * 1e3,
            pct_of_period: 100.0 * mean_s / period_s,
        });
    }
    Ok(out)
}

/// Three-stage pipeline throughput: chunker -> reconstructor -> frame
/// sink, one thread each, communicating over channels. Returns median
/// wall time and throughput over `repeats` runs.
pub fn bench_staged(
    kind: MethodKind,
    config: &ReconstructionConfig,
    batch: &EventBatch,
    chunk_size: usize,
    repeats: usize,
) -> Result<(f64, Option<f64>), BenchError> {
    if repeats < 3 {
        return Err(BenchError::TooFewRepeats { got: repeats });
    }
    let chunk = chunk_size.max(1);
    let mut times = Vec::with_capacity(repeats);
    for rep in 0..=repeats {
        let mut r = build_reconstructor(kind, config)?;
        let events = batch.events();
        let span_end = batch.span_end();
        let start = Instant::now();
        let worker_result: Result<(), ReconstructError> = std::thread::scope(|scope| {
            let (range_tx, range_rx) = std::sync::mpsc::sync_channel::<(usize, usize)>(4);
            let (frame_tx, frame_rx) = std::sync::mpsc::sync_channel::<Vec<Frame>>(4);

            scope.spawn(move || {
                let mut lo = 0usize;
                while lo < events.len() {
                    let hi = (lo + chunk).min(events.len());
                    if range_tx.send((lo, hi)).is_err() {
                        return; // downstream failed; stop feeding
                    }
                    lo = hi;
                }
            });

            let recon = scope.spawn(move || -> Result<(), ReconstructError> {
                for (lo, hi) in range_rx {
                    let frames = r.process(&events[lo..hi])?;
                    if !frames.is_empty() && frame_tx.send(frames).is_err() {
                        break;
                    }
                }
                if let Some(end) = span_end {
                    let frames = r.finish(end)?;
                    if !frames.is_empty() {
                        let _ = frame_tx.send(frames);
                    }
                }
                Ok(())
            });

            let mut sink_bytes = 0u64;
            for frames in frame_rx {
                for f in &frames {
                    sink_bytes += f.pixels().len() as u64;
                }
            }
            std::hint::black_box(sink_bytes);
            recon.join().expect("reconstructor thread panicked")
        });
        worker_result?;
        if rep > 0 {
            times.push(start.elapsed().as_secs_f64()); // rep 0 is warm-up
        }
    }
    let wall = median_s(&times);
    let tp = (!batch.is_empty()).then(|| batch.len() as f64 / wall);
    Ok((wall, tp))
}

/// A reconstructor that does no work: upper bound for harness overhead
/// checks. Its frames are uniform mid-gray.
pub struct NullReconstructor {
    geometry: SensorGeometry,
    events_seen: u64,
}

impl NullReconstructor {
    pub fn new(geometry: SensorGeometry) -> Self {
        NullReconstructor { geometry, events_seen: 0 }
    }

    pub fn events_seen(&self) -> u64 {
        self.events_seen
    }
}

impl Reconstructor for NullReconstructor {
    fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    fn name(&self) -> &'static str {
        "null"
    }

    fn process(&mut self, events: &[Event]) -> Result<Vec<Frame>, ReconstructError> {
        self.events_seen += events.len() as u64;
        Ok(Vec::new())
    }

    fn finish(&mut self, _t_end: u64) -> Result<Vec<Frame>, ReconstructError> {
        Ok(Vec::new())
    }

    fn peek(&self, t_now: u64) -> Result<Frame, ReconstructError> {
        Ok(Frame::new(t_now, self.geometry, vec![128; self.geometry.pixel_count()])?)
    }

    fn reset(&mut self) {
        self.events_seen = 0;
    }
}

/// Time a no-op pass over the batch with the same driver as
/// [`bench_throughput`]; real methods should never beat this.
pub fn null_floor(batch: &EventBatch, repeats: usize) -> Result<f64, BenchError> {
    if repeats < 3 {
        return Err(BenchError::TooFewRepeats { got: repeats });
    }
    let geometry = SensorGeometry::default();
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..=repeats {
        let mut r = NullReconstructor::new(geometry);
        let start = Instant::now();
        r.process_batch(batch)?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.remove(0); // warm-up
    Ok(median_s(&times))
}

/// CSV rows for throughput reports: one line per method.
pub fn throughput_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from(
        "method,events,repeats,wall_s,throughput_ev_s,no_emission_wall_s,no_emission_ev_s\n",
    );
    for r in reports {
        let tp = r.throughput_ev_per_s.map(|v| format!("{v:.0}")).unwrap_or_default();
        let tp_no = r.no_emission_throughput.map(|v| format!("{v:.0}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{:.6},{},{:.6},{}\n",
            r.method, r.events_processed, r.repeats, r.wall_time_s, tp, r.no_emission_wall_s, tp_no
        ));
    }
    s
}

/// CSV rows for per-frame timings: one line per (method, fps).
pub fn frame_time_csv(rows: &[(String, FrameTiming)]) -> String {
    let mut s =
        String::from("method,fps,frames,mean_events_per_frame,mean_ms,p99_ms,pct_of_period\n");
    for (method, t) in rows {
        s.push_str(&format!(
            "{},{},{},{:.1},{:.4},{:.4},{:.2}\n",
            method, t.fps, t.frames, t.mean_events_per_frame, t.mean_ms, t.p99_ms, t.pct_of_period
        ));
    }
    s
}

/// Human-readable report block.
pub fn report_text(report: &BenchReport, frame_times: &[FrameTiming]) -> String {
    let mut s = String::new();
    s.push_str(&format!("method:     {}\n", report.method));
    s.push_str(&format!("machine:    {}\n", report.machine_note));
    s.push_str(&format!("events:     {}\n", report.events_processed));
    s.push_str(&format!(
        "with emission:    {:.4} s  ({})\n",
        report.wall_time_s,
        report
            .throughput_ev_per_s
            .map(|v| format!("{:.2} Mev/s", v / 1e6))
            .unwrap_or_else(|| "n/a".into())
    ));
    s.push_str(&format!(
        "without emission: {:.4} s  ({})\n",
        report.no_emission_wall_s,
        report
            .no_emission_throughput
            .map(|v| format!("{:.2} Mev/s", v / 1e6))
            .unwrap_or_else(|| "n/a".into())
    ));
    for t in frame_times {
        s.push_str(&format!(
            "  {:>7.1} fps: {} frames, mean {:.4} ms, p99 {:.4} ms, {:.1}% of period\n",
            t.fps, t.frames, t.mean_ms, t.p99_ms, t.pct_of_period
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ReconstructionConfig {
        ReconstructionConfig {
            geometry: SensorGeometry::new(64, 64).unwrap(),
            ..ReconstructionConfig::default()
        }
    }

    fn small_batch() -> EventBatch {
        synthetic_stream(20_000, SensorGeometry::new(64, 64).unwrap(), 500_000, 5)
    }

    #[test]
    fn synthetic_stream_is_ordered_deterministic_and_in_bounds() {
        let g = SensorGeometry::new(32, 16).unwrap();
        let a = synthetic_stream(5_000, g, 1_000_000, 9);
        let b = synthetic_stream(5_000, g, 1_000_000, 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5_000);
        assert_eq!(a.span_end(), Some(1_000_000));
        let mut prev = 0;
        for e in a.iter() {
            assert!(e.t >= prev && e.t <= 1_000_000);
            assert!(e.x < 32 && e.y < 16);
            assert!(e.p == 1 || e.p == -1);
            prev = e.t;
        }
    }

    #[test]
    fn doubling_fps_halves_events_per_frame() {
        let batch = small_batch();
        let timings =
            bench_frame_time(MethodKind::Esi, &small_config(), &batch, &[50.0, 100.0]).unwrap();
        assert_eq!(timings.len(), 2);
        let ratio = timings[0].mean_events_per_frame / timings[1].mean_events_per_frame;
        assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn throughput_report_fields_consistent() {
        let batch = small_batch();
        let r = bench_throughput(MethodKind::Esi, &small_config(), &batch, 3).unwrap();
        assert_eq!(r.events_processed, 20_000);
        let tp = r.throughput_ev_per_s.unwrap();
        assert!((tp - r.events_processed as f64 / r.wall_time_s).abs() < 1e-6 * tp);
        assert!(r.no_emission_throughput.unwrap() > 0.0);
    }

    #[test]
    fn empty_batch_reports_missing_throughput() {
        let batch = EventBatch::empty().with_span_end(10_000).unwrap();
        let r = bench_throughput(MethodKind::Esi, &small_config(), &batch, 3).unwrap();
        assert_eq!(r.events_processed, 0);
        assert_eq!(r.throughput_ev_per_s, None);
    }

    #[test]
    fn too_few_repeats_rejected() {
        let batch = small_batch();
        assert!(matches!(
            bench_throughput(MethodKind::Esi, &small_config(), &batch, 2),
            Err(BenchError::TooFewRepeats { got: 2 })
        ));
    }

    #[test]
    fn empty_stream_frame_time_measures_render_only() {
        let batch = EventBatch::empty().with_span_end(100_000).unwrap();
        let timings =
            bench_frame_time(MethodKind::Esi, &small_config(), &batch, &[100.0]).unwrap();
        assert_eq!(timings.len(), 1);
        assert_eq!(timings[0].frames, 10);
        assert_eq!(timings[0].mean_events_per_frame, 0.0);
        assert!(timings[0].mean_ms >= 0.0);
    }

    #[test]
    fn frame_time_counts_match_schedule() {
        let batch = small_batch(); // 0.5 s span
        let timings =
            bench_frame_time(MethodKind::Naive, &small_config(), &batch, &[100.0]).unwrap();
        assert_eq!(timings[0].frames, 50);
        // all events land in some frame: span end coincides with the grid
        assert!((timings[0].mean_events_per_frame * 50.0 - 20_000.0).abs() < 0.5);
    }

    #[test]
    fn staged_pipeline_processes_everything() {
        let batch = small_batch();
        let (wall, tp) =
            bench_staged(MethodKind::Esi, &small_config(), &batch, 4096, 3).unwrap();
        assert!(wall > 0.0);
        assert!(tp.unwrap() > 0.0);
    }

    #[test]
    fn null_floor_beats_real_methods() {
        let batch = small_batch();
        let floor = null_floor(&batch, 3).unwrap();
        let real = bench_throughput(MethodKind::Esi, &small_config(), &batch, 3).unwrap();
        assert!(floor <= real.wall_time_s, "floor {floor} vs {}", real.wall_time_s);
    }

    #[test]
    fn csv_and_text_rendering() {
        let report = BenchReport {
            method: "esi".into(),
            events_processed: 10,
            repeats: 3,
            wall_time_s: 0.5,
            throughput_ev_per_s: Some(20.0),
            no_emission_wall_s: 0.25,
            no_emission_throughput: Some(40.0),
            machine_note: "test".into(),
        };
        let csv = throughput_csv(&[report.clone()]);
        assert!(csv.starts_with("method,"));
        assert!(csv.contains("esi,10,3,0.500000,20,0.250000,40"));
        let timing = FrameTiming {
            fps: 100.0,
            frames: 5,
            mean_events_per_frame: 2.0,
            mean_ms: 1.0,
            p99_ms: 2.0,
            pct_of_period: 10.0,
        };
        let ft = frame_time_csv(&[("esi".into(), timing)]);
        assert!(ft.contains("esi,100,5,2.0,1.0000,2.0000,10.00"));
        let text = report_text(&report, &[timing]);
        assert!(text.contains("with emission"));
        assert!(text.contains("100.0 fps"));
    }
}
