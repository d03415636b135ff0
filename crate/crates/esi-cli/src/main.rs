//! `esi`: simulate event streams, reconstruct intensity frames, score
//! methods against ground truth, and benchmark throughput.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use esi_core::bench::{
    bench_frame_time, bench_staged, bench_throughput, frame_time_csv, null_floor, report_text,
    synthetic_stream, throughput_csv,
};
use esi_core::config::{
    dt_sample_from_config, method_from_config, noise_from_config, reconstruction_from_config,
    scene_from_config, trigger_from_config, KvConfig, KNOWN_KEYS,
};
use esi_core::event::{EventBatch, SensorGeometry};
use esi_core::evio;
use esi_core::metrics::{score_run, write_scores_csv, RunSummary};
use esi_core::reconstruct::{
    build_reconstructor, map_to_gray, FrameAnchor, MethodKind, ReconstructionConfig,
};
use esi_core::synth::{generate_events, render_log_intensity, SceneSpec};

#[derive(Parser)]
#[command(name = "esi", version, about = "Event-camera intensity reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured scene into an event file.
    Simulate(SimulateArgs),
    /// Reconstruct intensity frames from an event stream.
    Reconstruct(ReconstructArgs),
    /// Run several reconstructors on one stream and score them against
    /// ground truth.
    Compare(CompareArgs),
    /// Measure event throughput and per-frame latency.
    Bench(BenchArgs),
}

/// Flags shared by every subcommand. Values override the config file,
/// which is taken from --config or the ESI_CONFIG environment variable.
#[derive(Args)]
struct CommonArgs {
    /// Key-value config file (see README for the key schema).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ReconArgs {
    /// Reconstruction method: esi, naive, expdecay or compfilter.
    #[arg(long)]
    method: Option<String>,
    /// Frame emission rate, Hz.
    #[arg(long)]
    fps: Option<f64>,
    /// Decay rate k (1/s); the window reaches zero at 1/k seconds.
    #[arg(long)]
    k: Option<f64>,
    /// Decay exponent b.
    #[arg(long)]
    b: Option<f64>,
    /// Lower clamp bound for the accumulator.
    #[arg(long)]
    smin: Option<f64>,
    /// Upper clamp bound for the accumulator.
    #[arg(long)]
    smax: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Event file format.
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    format: FileFormat,
    /// Contrast threshold of the simulated trigger.
    #[arg(long)]
    threshold: Option<f64>,
    /// Noise RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write ground-truth PGM frames at the configured frame rate.
    #[arg(long)]
    truth: bool,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    recon: ReconArgs,
    /// Event file to reconstruct; simulates the configured scene when
    /// omitted.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Reject out-of-order timestamps in text input instead of sorting.
    #[arg(long)]
    strict_time: bool,
    /// Frame schedule origin, microseconds; defaults to the first event
    /// (or 0 when simulating).
    #[arg(long)]
    origin_us: Option<u64>,
    /// Flush frames up to this time, microseconds; defaults to the stream
    /// span end.
    #[arg(long)]
    end_us: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    recon: ReconArgs,
    /// Comma-separated list of at least two methods.
    #[arg(long, default_value = "esi,naive")]
    methods: String,
    /// Event file to score; simulates the configured scene when omitted.
    /// Requires --config describing the scene that produced the events.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    #[arg(long)]
    strict_time: bool,
    /// Contrast threshold of the simulated trigger.
    #[arg(long)]
    threshold: Option<f64>,
    /// Noise RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    recon: ReconArgs,
    /// Event file to benchmark; uses a synthetic stream when omitted.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FileFormat>,
    /// Synthetic stream length.
    #[arg(long, default_value_t = 1_000_000)]
    events: usize,
    /// Synthetic stream duration, seconds.
    #[arg(long, default_value_t = 2.0)]
    duration_s: f64,
    /// Synthetic stream seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Timed repetitions per measurement (median is reported).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Frame rates for the per-frame latency sweep.
    #[arg(long, default_value = "25,50,100,250")]
    fps_list: String,
    /// Also run the three-stage pipeline with this chunk size.
    #[arg(long)]
    chunk_size: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Bin,
}

/// Failure routed to an exit code: usage/config problems exit 2, runtime
/// problems exit 1.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Load the config file (flag, then ESI_CONFIG, then empty), overlay the
/// given flag overrides, and validate the merged key set.
fn load_config(common: &CommonArgs, overrides: &KvConfig) -> Result<KvConfig, Failure> {
    let path = common
        .config
        .clone()
        .or_else(|| std::env::var_os("ESI_CONFIG").map(PathBuf::from));
    let base = match path {
        Some(p) => KvConfig::from_path(&p)
            .map_err(|e| Failure::usage(format!("config {}: {e}", p.display())))?,
        None => KvConfig::empty(),
    };
    let merged = base.merged_with(overrides);
    merged.expect_known(&KNOWN_KEYS).map_err(Failure::usage)?;
    Ok(merged)
}

fn recon_overrides(args: &ReconArgs) -> KvConfig {
    let mut o = KvConfig::empty();
    if let Some(v) = &args.method {
        o.set("recon.method", v);
    }
    if let Some(v) = args.fps {
        o.set("recon.fps", v);
    }
    if let Some(v) = args.k {
        o.set("recon.k", v);
    }
    if let Some(v) = args.b {
        o.set("recon.b", v);
    }
    if let Some(v) = args.smin {
        o.set("recon.smin", v);
    }
    if let Some(v) = args.smax {
        o.set("recon.smax", v);
    }
    o
}

fn parse_method(name: &str) -> Result<MethodKind, Failure> {
    MethodKind::from_str(name).map_err(|_| {
        let valid: Vec<&str> = MethodKind::ALL.iter().map(|m| m.as_str()).collect();
        Failure::usage(format!(
            "unknown method {name:?}: valid methods are {}",
            valid.join(", ")
        ))
    })
}

/// Method from flag/config, falling back to ESI.
fn resolve_method(cfg: &KvConfig) -> Result<MethodKind, Failure> {
    match cfg.get("recon.method") {
        Some(name) => parse_method(name),
        None => {
            debug_assert!(method_from_config(cfg).unwrap().is_none());
            Ok(MethodKind::Esi)
        }
    }
}

fn simulate_batch(cfg: &KvConfig, seed: Option<u64>, threshold: Option<f64>)
    -> Result<(SceneSpec, EventBatch), Failure>
{
    let scene = scene_from_config(cfg).map_err(Failure::usage)?;
    let mut noise = noise_from_config(cfg).map_err(Failure::usage)?;
    if let Some(s) = seed {
        noise.seed = s;
    }
    let mut trigger = trigger_from_config(cfg).map_err(Failure::usage)?;
    if let Some(c) = threshold {
        trigger.contrast_threshold = c;
    }
    let dt = dt_sample_from_config(cfg).map_err(Failure::usage)?;
    let batch = generate_events(&scene, &trigger, &noise, dt).map_err(Failure::usage)?;
    Ok((scene, batch))
}

fn ensure_output_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(format!("creating {}: {e}", dir.display())))
}

/// Read an event file, inferring the format from the extension unless one
/// was given. Returns the declared geometry when the file carries one.
fn load_events(
    path: &Path,
    format: Option<FileFormat>,
    strict_time: bool,
) -> Result<(Option<SensorGeometry>, EventBatch), Failure> {
    let format = format.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => FileFormat::Bin,
            _ => FileFormat::Csv,
        }
    });
    match format {
        FileFormat::Bin => {
            let (g, batch) = evio::read_events_bin_path(path)
                .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            Ok((Some(g), batch))
        }
        FileFormat::Csv => {
            let r = evio::read_events_csv_path(path, strict_time)
                .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            if r.out_of_order > 0 {
                eprintln!(
                    "note: sorted {} out-of-order events from {}",
                    r.out_of_order,
                    path.display()
                );
            }
            Ok((r.geometry, r.batch))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, &KvConfig::empty())?;
    let (scene, batch) = simulate_batch(&cfg, args.seed, args.threshold)?;
    ensure_output_dir(&args.common.output_dir)?;

    let path = match args.format {
        FileFormat::Csv => {
            let p = args.common.output_dir.join("events.csv");
            evio::write_events_csv_path(&p, Some(scene.geometry), &batch)
                .map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
            p
        }
        FileFormat::Bin => {
            let p = args.common.output_dir.join("events.bin");
            evio::write_events_bin_path(&p, scene.geometry, &batch)
                .map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
            p
        }
    };
    println!(
        "simulated {} events over {:.3} s -> {}",
        batch.len(),
        scene.duration_s,
        path.display()
    );

    if args.truth {
        let rc = reconstruction_from_config(&cfg).map_err(Failure::usage)?;
        write_truth_frames(&scene, rc.fps, &args.common.output_dir)?;
    }
    Ok(())
}

/// Ground-truth log-intensity PGMs at each frame boundary, normalized by
/// the scene's global log range so frames share one gray scale.
fn write_truth_frames(scene: &SceneSpec, fps: f64, dir: &Path) -> Result<(), Failure> {
    let lo = (scene.bg_min.min(scene.bg_max) * scene.circle.reflectivity).ln();
    let hi = scene.bg_min.max(scene.bg_max).ln();
    let n = (scene.duration_s * fps).ceil() as usize;
    let mut manifest = String::from("index,t_us,path\n");
    for i in 1..=n {
        let t_us = ((i as f64 * 1e6 / fps).round() as u64).min(scene.duration_us());
        let log = render_log_intensity(scene, t_us as f64 / 1e6).map_err(Failure::usage)?;
        let pixels: Vec<u8> = log.iter().map(|&v| map_to_gray(v, lo, hi)).collect();
        let frame = esi_core::event::Frame::new(t_us, scene.geometry, pixels)
            .map_err(Failure::runtime)?;
        let name = format!("truth_{i:06}.pgm");
        let path = dir.join(&name);
        evio::write_frame_pgm(&frame, &path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        let _ = writeln!(manifest, "{i},{t_us},{name}");
    }
    let mpath = dir.join("truth_manifest.csv");
    std::fs::write(&mpath, manifest)
        .map_err(|e| Failure::runtime(format!("{}: {e}", mpath.display())))?;
    println!("wrote {n} ground-truth frames to {}", dir.display());
    Ok(())
}

/// Events for reconstruct/compare: either a file or a fresh simulation of
/// the configured scene.
struct StreamSource {
    geometry: SensorGeometry,
    batch: EventBatch,
    scene: Option<SceneSpec>,
    simulated: bool,
}

fn resolve_stream(
    cfg: &KvConfig,
    input: Option<&Path>,
    format: Option<FileFormat>,
    strict_time: bool,
    seed: Option<u64>,
    threshold: Option<f64>,
) -> Result<StreamSource, Failure> {
    match input {
        Some(path) => {
            let (file_geometry, batch) = load_events(path, format, strict_time)?;
            // fall back to the configured scene dimensions when the file
            // does not declare its own
            let geometry = match file_geometry {
                Some(g) => g,
                None => scene_from_config(cfg).map_err(Failure::usage)?.geometry,
            };
            Ok(StreamSource { geometry, batch, scene: None, simulated: false })
        }
        None => {
            let (scene, batch) = simulate_batch(cfg, seed, threshold)?;
            Ok(StreamSource {
                geometry: scene.geometry,
                batch,
                scene: Some(scene),
                simulated: true,
            })
        }
    }
}

/// Run one reconstructor over the batch; emits scheduled frames plus a
/// final partial frame when the stream ends between boundaries.
fn run_reconstructor(
    kind: MethodKind,
    rc: &ReconstructionConfig,
    batch: &EventBatch,
    end_us: Option<u64>,
) -> Result<Vec<esi_core::event::Frame>, Failure> {
    let mut r = build_reconstructor(kind, rc).map_err(Failure::usage)?;
    let mut frames = r.process(batch.events()).map_err(Failure::runtime)?;
    let end = end_us.or(batch.span_end()).or(batch.last_t());
    if let Some(end) = end {
        frames.extend(r.finish(end).map_err(Failure::runtime)?);
        let at_boundary = frames.last().is_some_and(|f| f.t_emit == end);
        if !at_boundary {
            frames.push(r.peek(end).map_err(Failure::runtime)?);
        }
    }
    Ok(frames)
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, &recon_overrides(&args.recon))?;
    let method = resolve_method(&cfg)?;
    let source = resolve_stream(
        &cfg,
        args.input.as_deref(),
        args.format,
        args.strict_time,
        None,
        None,
    )?;

    let mut rc = reconstruction_from_config(&cfg).map_err(Failure::usage)?;
    rc.geometry = source.geometry;
    rc.anchor = match args.origin_us {
        Some(us) => FrameAnchor::Origin(us),
        None if cfg.get("recon.origin_us").is_some() => rc.anchor,
        // a simulated stream is anchored at scene time zero so the frame
        // schedule matches the scene clock
        None if source.simulated => FrameAnchor::Origin(0),
        None => FrameAnchor::FirstEvent,
    };

    let end_us = args
        .end_us
        .or_else(|| source.scene.as_ref().map(|s| s.duration_us()));
    let frames = run_reconstructor(method, &rc, &source.batch, end_us)?;

    ensure_output_dir(&args.common.output_dir)?;
    let mut manifest = String::from("index,t_us,path\n");
    for (i, frame) in frames.iter().enumerate() {
        let name = format!("frame_{:06}.pgm", i + 1);
        let path = args.common.output_dir.join(&name);
        evio::write_frame_pgm(frame, &path)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
        let _ = writeln!(manifest, "{},{},{}", i + 1, frame.t_emit, name);
    }
    let mpath = args.common.output_dir.join("manifest.csv");
    std::fs::write(&mpath, manifest)
        .map_err(|e| Failure::runtime(format!("{}: {e}", mpath.display())))?;
    println!(
        "{}: {} events -> {} frames in {}",
        method,
        source.batch.len(),
        frames.len(),
        args.common.output_dir.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, &recon_overrides(&args.recon))?;

    let mut methods = Vec::new();
    for name in args.methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m = parse_method(name)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.len() < 2 {
        return Err(Failure::usage(format!(
            "--methods needs at least two distinct methods, got {:?}",
            args.methods
        )));
    }

    // ground truth comes from the scene description; events from a file
    // are only scorable when a config describes the scene they came from
    if args.input.is_some() && args.common.config.is_none() && std::env::var_os("ESI_CONFIG").is_none() {
        return Err(Failure::usage(
            "ground truth unavailable: --input events need --config describing their scene",
        ));
    }

    let source = resolve_stream(
        &cfg,
        args.input.as_deref(),
        args.format,
        args.strict_time,
        args.seed,
        args.threshold,
    )?;
    let scene = match &source.scene {
        Some(s) => s.clone(),
        None => scene_from_config(&cfg).map_err(Failure::usage)?,
    };
    if scene.geometry != source.geometry {
        return Err(Failure::usage(format!(
            "ground truth is {}x{} but the event stream is {}x{}",
            scene.geometry.width,
            scene.geometry.height,
            source.geometry.width,
            source.geometry.height
        )));
    }

    let mut rc = reconstruction_from_config(&cfg).map_err(Failure::usage)?;
    rc.geometry = source.geometry;
    rc.anchor = FrameAnchor::Origin(0);
    let end_us = Some(scene.duration_us());

    ensure_output_dir(&args.common.output_dir)?;
    let mut combined = String::from("method,t_us,pearson,mse_norm\n");
    let mut table: Vec<(MethodKind, usize, RunSummary)> = Vec::new();
    for &method in &methods {
        let frames = run_reconstructor(method, &rc, &source.batch, end_us)?;
        let (scores, summary) = score_run(&frames, |t_us| {
            render_log_intensity(&scene, t_us as f64 / 1e6).ok()
        })
        .map_err(Failure::runtime)?;

        let path = args.common.output_dir.join(format!("scores_{method}.csv"));
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &scores).map_err(Failure::runtime)?;
        std::fs::write(&path, buf)
            .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;

        for s in &scores {
            let _ = writeln!(combined, "{},{},{},{}", method, s.t_us, fmt_opt(s.pearson), fmt_opt(s.mse_norm));
        }
        table.push((method, frames.len(), summary));
    }

    let cpath = args.common.output_dir.join("combined.csv");
    std::fs::write(&cpath, combined)
        .map_err(|e| Failure::runtime(format!("{}: {e}", cpath.display())))?;

    let mut summary_text = format!(
        "{:<12} {:>7} {:>7} {:>9} {:>9} {:>10}\n",
        "method", "frames", "scored", "mean_r", "min_r", "mean_mse"
    );
    for (method, frames, s) in &table {
        let _ = writeln!(
            summary_text,
            "{:<12} {:>7} {:>7} {:>9} {:>9} {:>10}",
            method.to_string(),
            frames,
            s.frames_scored,
            fmt_opt4(s.mean_pearson),
            fmt_opt4(s.min_pearson),
            fmt_opt4(s.mean_mse_norm),
        );
    }
    let spath = args.common.output_dir.join("summary.txt");
    std::fs::write(&spath, &summary_text)
        .map_err(|e| Failure::runtime(format!("{}: {e}", spath.display())))?;
    print!("{summary_text}");
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn fmt_opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".to_string())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.common, &recon_overrides(&args.recon))?;
    let method = resolve_method(&cfg)?;

    let (geometry, batch) = match &args.input {
        Some(path) => {
            let (g, batch) = load_events(path, args.format, false)?;
            let geometry = match g {
                Some(g) => g,
                None => scene_from_config(&cfg).map_err(Failure::usage)?.geometry,
            };
            (geometry, batch)
        }
        None => {
            let geometry = scene_from_config(&cfg).map_err(Failure::usage)?.geometry;
            let duration_us = (args.duration_s * 1e6).round() as u64;
            (geometry, synthetic_stream(args.events, geometry, duration_us, args.seed))
        }
    };

    let mut rc = reconstruction_from_config(&cfg).map_err(Failure::usage)?;
    rc.geometry = geometry;

    let report = bench_throughput(method, &rc, &batch, args.repeats).map_err(Failure::usage)?;

    let mut fps_list = Vec::new();
    for part in args.fps_list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let fps: f64 = part
            .parse()
            .map_err(|_| Failure::usage(format!("--fps-list entry {part:?} is not a number")))?;
        fps_list.push(fps);
    }
    let timings = bench_frame_time(method, &rc, &batch, &fps_list).map_err(Failure::usage)?;
    let floor_s = null_floor(&batch, args.repeats).map_err(Failure::usage)?;

    ensure_output_dir(&args.common.output_dir)?;
    let tpath = args.common.output_dir.join("throughput.csv");
    std::fs::write(&tpath, throughput_csv(std::slice::from_ref(&report)))
        .map_err(|e| Failure::runtime(format!("{}: {e}", tpath.display())))?;
    let rows: Vec<(String, esi_core::bench::FrameTiming)> =
        timings.iter().map(|t| (method.to_string(), *t)).collect();
    let fpath = args.common.output_dir.join("frame_times.csv");
    std::fs::write(&fpath, frame_time_csv(&rows))
        .map_err(|e| Failure::runtime(format!("{}: {e}", fpath.display())))?;

    let mut text = report_text(&report, &timings);
    let _ = writeln!(text, "harness floor:    {:.4} s (null reconstructor)", floor_s);
    if let Some(chunk) = args.chunk_size {
        let (staged_s, staged_tp) =
            bench_staged(method, &rc, &batch, chunk, args.repeats).map_err(Failure::usage)?;
        let tp = staged_tp.map(|v| format!("{:.0} ev/s", v)).unwrap_or_default();
        let _ = writeln!(text, "staged pipeline:  {:.4} s  ({tp}, chunk {chunk})", staged_s);
    }
    let rpath = args.common.output_dir.join("report.txt");
    std::fs::write(&rpath, &text)
        .map_err(|e| Failure::runtime(format!("{}: {e}", rpath.display())))?;
    print!("{text}");
    Ok(())
}
