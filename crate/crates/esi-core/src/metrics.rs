//! Frame-versus-ground-truth scoring.
//!
//! Reconstructed frames carry relative intensity, not absolute values, so
//! both scores are invariant to positive-affine rescaling: Pearson
//! correlation, and mean squared error after normalizing each image to
//! zero mean and unit variance.

use std::io::Write;

use thiserror::Error;

use crate::event::Frame;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frame has {frame_px} pixels, ground truth has {truth_px}")]
    GeometryMismatch { frame_px: usize, truth_px: usize },
    #[error("ground truth for frame at {t_us} us is unavailable")]
    MissingTruth { t_us: u64 },
}

/// Scores for one frame. Both scores are undefined (None) when either
/// image is constant, since neither has a meaningful variance then.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub t_us: u64,
    pub pearson: Option<f64>,
    pub mse_norm: Option<f64>,
}

/// Aggregate over a scored run. Frames with undefined scores are excluded
/// from the means and counted separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub frames_total: usize,
    pub frames_scored: usize,
    pub frames_skipped: usize,
    pub mean_pearson: Option<f64>,
    pub min_pearson: Option<f64>,
    pub mean_mse_norm: Option<f64>,
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Score one frame against a row-major ground-truth field.
pub fn score_frame(frame: &Frame, truth: &[f64]) -> Result<FrameScore, MetricsError> {
    let px = frame.pixels();
    if px.len() != truth.len() {
        return Err(MetricsError::GeometryMismatch { frame_px: px.len(), truth_px: truth.len() });
    }
    let n = px.len();
    let (mean_a, std_a) = mean_and_std(px.iter().map(|&v| v as f64), n);
    let (mean_b, std_b) = mean_and_std(truth.iter().copied(), n);
    if std_a == 0.0 || std_b == 0.0 {
        return Ok(FrameScore { t_us: frame.t_emit, pearson: None, mse_norm: None });
    }

    let mut cov = 0.0;
    let mut mse = 0.0;
    for i in 0..n {
        let za = (px[i] as f64 - mean_a) / std_a;
        let zb = (truth[i] - mean_b) / std_b;
        cov += za * zb;
        let d = za - zb;
        mse += d * d;
    }
    let pearson = (cov / n as f64).clamp(-1.0, 1.0);
    Ok(FrameScore { t_us: frame.t_emit, pearson: Some(pearson), mse_norm: Some(mse / n as f64) })
}

/// Score every frame, fetching ground truth by frame timestamp.
///
/// `truth_at` returns the row-major log-intensity field for a timestamp,
/// or None when no truth exists for it.
pub fn score_run<F>(frames: &[Frame], mut truth_at: F) -> Result<(Vec<FrameScore>, RunSummary), MetricsError>
where
    F: FnMut(u64) -> Option<Vec<f64>>,
{
    let mut scores = Vec::with_capacity(frames.len());
    for f in frames {
        let truth = truth_at(f.t_emit).ok_or(MetricsError::MissingTruth { t_us: f.t_emit })?;
        scores.push(score_frame(f, &truth)?);
    }
    let summary = summarize(&scores);
    Ok((scores, summary))
}

/// Aggregate already-computed per-frame scores.
pub fn summarize(scores: &[FrameScore]) -> RunSummary {
    let defined: Vec<&FrameScore> = scores.iter().filter(|s| s.pearson.is_some()).collect();
    let n = defined.len();
    let (mean_pearson, min_pearson, mean_mse) = if n == 0 {
        (None, None, None)
    } else {
        let mean = defined.iter().map(|s| s.pearson.unwrap()).sum::<f64>() / n as f64;
        let min = defined.iter().map(|s| s.pearson.unwrap()).fold(f64::INFINITY, f64::min);
        let mse = defined.iter().map(|s| s.mse_norm.unwrap()).sum::<f64>() / n as f64;
        (Some(mean), Some(min), Some(mse))
    };
    RunSummary {
        frames_total: scores.len(),
        frames_scored: n,
        frames_skipped: scores.len() - n,
        mean_pearson,
        min_pearson,
        mean_mse_norm: mean_mse,
    }
}

/// Emit scores as CSV `t_us,pearson,mse_norm`; undefined scores leave the
/// field empty.
pub fn write_scores_csv<W: Write>(mut w: W, scores: &[FrameScore]) -> std::io::Result<()> {
    writeln!(w, "t_us,pearson,mse_norm")?;
    for s in scores {
        let p = s.pearson.map(|v| format!("{v:.6}")).unwrap_or_default();
        let m = s.mse_norm.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(w, "{},{},{}", s.t_us, p, m)?;
    }
    Ok(())
}
