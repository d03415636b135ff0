//! End-to-end tests driving the compiled `esi` binary.

use std::path::Path;
use std::process::{Command, Output};

fn esi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_esi"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.env_remove("ESI_CONFIG").output().expect("spawn esi")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 64x64 scene, 1 s long: fast enough that every test can simulate it.
const SMALL_SCENE: &str = "\
scene.width = 64
scene.height = 64
scene.duration_s = 1.0
scene.lead_s = 0.2
circle.radius = 9
circle.center_x = 44
circle.center_y = 32
circle.velocity_x = -40
";

fn write_small_scene(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scene.conf");
    std::fs::write(&path, SMALL_SCENE).unwrap();
    path
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_small_scene(dir.path());
    for sub in ["a", "b"] {
        let out = run(esi()
            .args(["simulate", "--config"])
            .arg(&conf)
            .arg("--output-dir")
            .arg(dir.path().join(sub)));
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        assert!(stdout(&out).contains("events over 1.000 s"));
    }
    let a = std::fs::read(dir.path().join("a/events.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/events.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn stationary_scene_without_noise_writes_empty_payload() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("still.conf");
    std::fs::write(&conf, "circle.velocity_x = 0\nnoise.background_rate_hz = 0\n").unwrap();
    let out = run(esi()
        .args(["simulate", "--format", "bin", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("simulated 0 events"));
    // header only: no event records
    let bytes = std::fs::read(dir.path().join("events.bin")).unwrap();
    assert_eq!(bytes.len(), 20);
}

#[test]
fn config_file_comes_from_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("still.conf");
    std::fs::write(&conf, "circle.velocity_x = 0\n").unwrap();
    let out = esi()
        .env("ESI_CONFIG", &conf)
        .args(["simulate", "--output-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("simulated 0 events"));
}

#[test]
fn unknown_config_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "scene.depth = 3\n").unwrap();
    let out = run(esi()
        .args(["simulate", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("scene.depth"), "stderr: {}", stderr(&out));
}

#[test]
fn bad_config_value_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "recon.fps = fast\n").unwrap();
    let out = run(esi()
        .args(["reconstruct", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("recon.fps"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_method_exits_2_and_lists_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(esi()
        .args(["reconstruct", "--method", "quux", "--output-dir"])
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for name in ["esi", "naive", "expdecay", "compfilter"] {
        assert!(err.contains(name), "stderr missing {name}: {err}");
    }
}

#[test]
fn reconstruct_simulated_scene_emits_ceil_duration_times_fps_frames() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_small_scene(dir.path());
    let out = run(esi()
        .args(["reconstruct", "--fps", "40", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    // 1.0 s at 40 FPS
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    let rows: Vec<&str> = manifest.lines().collect();
    assert_eq!(rows[0], "index,t_us,path");
    assert_eq!(rows.len() - 1, 40);
    assert!(dir.path().join("frame_000040.pgm").exists());
    assert!(!dir.path().join("frame_000041.pgm").exists());

    let first = std::fs::read(dir.path().join("frame_000001.pgm")).unwrap();
    assert!(first.starts_with(b"P5\n64 64\n255\n"));
    // frames during the stationary lead are uniform mid-gray
    assert!(first[b"P5\n64 64\n255\n".len()..].iter().all(|&p| p == 128));
}

#[test]
fn reconstruct_agrees_across_csv_and_bin_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_small_scene(dir.path());
    for format in ["csv", "bin"] {
        let out = run(esi()
            .args(["simulate", "--format", format, "--config"])
            .arg(&conf)
            .arg("--output-dir")
            .arg(dir.path()));
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    for (format, sub) in [("csv", "fa"), ("bin", "fb")] {
        let out = run(esi()
            .args([
                "reconstruct",
                "--fps",
                "25",
                "--origin-us",
                "0",
                "--end-us",
                "1000000",
            ])
            .arg("--input")
            .arg(dir.path().join(format!("events.{format}")))
            .arg("--output-dir")
            .arg(dir.path().join(sub)));
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    for i in 1..=25 {
        let a = std::fs::read(dir.path().join(format!("fa/frame_{i:06}.pgm"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("fb/frame_{i:06}.pgm"))).unwrap();
        assert_eq!(a, b, "frame {i} differs between csv and bin input");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("scene.conf");
    std::fs::write(&conf, format!("{SMALL_SCENE}recon.fps = 10\n")).unwrap();
    let out = run(esi()
        .args(["reconstruct", "--fps", "20", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count() - 1, 20, "flag fps should win over config");
}

#[test]
fn strict_time_rejects_unsorted_csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("events.csv");
    std::fs::write(&csv, "# 4,4\n500,1,1,1\n100,2,2,-1\n").unwrap();
    let out = run(esi()
        .args(["reconstruct", "--strict-time", "--input"])
        .arg(&csv)
        .arg("--output-dir")
        .arg(dir.path().join("out")));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "stderr: {}", stderr(&out));

    // lenient mode sorts instead and reports it
    let out = run(esi()
        .args(["reconstruct", "--input"])
        .arg(&csv)
        .arg("--output-dir")
        .arg(dir.path().join("out")));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("out-of-order"));
}

#[test]
fn compare_scores_methods_and_writes_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_small_scene(dir.path());
    let out = run(esi()
        .args(["compare", "--methods", "esi,naive", "--k", "2.5", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let text = stdout(&out);
    assert!(text.contains("esi"), "summary missing esi: {text}");
    assert!(text.contains("naive"), "summary missing naive: {text}");
    for file in ["summary.txt", "combined.csv", "scores_esi.csv", "scores_naive.csv"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let combined = std::fs::read_to_string(dir.path().join("combined.csv")).unwrap();
    assert!(combined.starts_with("method,t_us,pearson,mse_norm\n"));
    // one row per method per frame: 1.0 s at the default 100 FPS
    assert_eq!(combined.lines().count() - 1, 200);
}

#[test]
fn compare_with_input_but_no_scene_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_small_scene(dir.path());
    let out = run(esi()
        .args(["simulate", "--config"])
        .arg(&conf)
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success());

    let out = run(esi()
        .arg("compare")
        .arg("--input")
        .arg(dir.path().join("events.csv"))
        .arg("--output-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ground truth"), "stderr: {}", stderr(&out));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(esi()
        .args([
            "bench",
            "--events",
            "20000",
            "--repeats",
            "3",
            "--fps-list",
            "50",
            "--chunk-size",
            "4096",
        ])
        .arg("--output-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("with emission"), "missing throughput: {text}");
    assert!(text.contains("staged pipeline"), "missing staged run: {text}");
    for file in ["report.txt", "throughput.csv", "frame_times.csv"] {
        assert!(dir.path().join(file).exists(), "missing {file}");
    }
    let tp = std::fs::read_to_string(dir.path().join("throughput.csv")).unwrap();
    assert!(tp.lines().count() == 2 && tp.contains("esi"));
}
