//! Plain-text key-value configuration.
//!
//! Syntax: one `key = value` per line; blank lines and lines starting
//! with `#` are ignored; keys are dotted lowercase identifiers; values
//! run to end of line (no quoting, no inline comments). Every error names
//! the offending key or line.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::event::SensorGeometry;
use crate::decay::DecayParams;
use crate::reconstruct::{
    ClampBounds, EsiParams, FrameAnchor, MethodKind, ReconstructionConfig,
};
use crate::synth::{CircleSpec, HotPixel, NoiseSpec, SceneSpec, TriggerModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { key: String, line: usize },
    #[error("key {key:?}: bad value {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
}

/// Every key the toolkit understands.
pub const KNOWN_KEYS: &[&str] = &[
    "scene.width",
    "scene.height",
    "scene.bg_min",
    "scene.bg_max",
    "scene.duration_s",
    "scene.lead_s",
    "circle.radius",
    "circle.reflectivity",
    "circle.center_x",
    "circle.center_y",
    "circle.velocity_x",
    "trigger.threshold",
    "sim.dt_sample_s",
    "noise.background_rate_hz",
    "noise.seed",
    "noise.hot_pixels",
    "recon.method",
    "recon.fps",
    "recon.k",
    "recon.b",
    "recon.contribution",
    "recon.smin",
    "recon.smax",
    "recon.lambda",
    "recon.alpha",
    "recon.origin_us",
];

/// Parsed key-value file. Values stay strings until a typed getter runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
}

impl KvConfig {
    pub fn empty() -> Self {
        KvConfig::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax { line, msg: "expected key = value".into() });
            };
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("bad key {key:?} (lowercase dotted identifiers only)"),
                });
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::DuplicateKey { key: key.to_string(), line });
            }
        }
        Ok(KvConfig { values })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Reject any key outside `known`.
    pub fn expect_known(&self, known: &[&str]) -> Result<(), ConfigError> {
        for key in self.values.keys() {
            if !known.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey { key: key.clone() });
            }
        }
        Ok(())
    }

    /// Overlay `other` on top of self (other wins). Used for flag
    /// overrides on a base file.
    pub fn merged_with(mut self, other: &KvConfig) -> Self {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn bad(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            value: self.get(key).unwrap_or_default().to_string(),
            reason: reason.into(),
        }
    }

    fn get_parsed<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => {
                raw.parse::<T>().map(Some).map_err(|_| self.bad(key, format!("expected {what}")))
            }
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.get_parsed(key, "a number")?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(self.bad(key, "expected a finite number"));
            }
        }
        Ok(v)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get_parsed(key, "a non-negative integer")
    }

    pub fn get_u16(&self, key: &str) -> Result<Option<u16>, ConfigError> {
        self.get_parsed(key, "an integer in 0..65536")
    }

    /// f64 getter that additionally requires the value to be > 0.
    pub fn get_positive_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get_f64(key)? {
            Some(v) if v <= 0.0 => Err(self.bad(key, "expected a positive number")),
            other => Ok(other),
        }
    }
}

/// Scene description from config, with library defaults for absent keys.
pub fn scene_from_config(cfg: &KvConfig) -> Result<SceneSpec, ConfigError> {
    let d = SceneSpec::default();
    let width = cfg.get_u16("scene.width")?.unwrap_or(d.geometry.width);
    let height = cfg.get_u16("scene.height")?.unwrap_or(d.geometry.height);
    let geometry = SensorGeometry::new(width, height).map_err(|e| ConfigError::BadValue {
        key: "scene.width/scene.height".into(),
        value: format!("{width}x{height}"),
        reason: e.to_string(),
    })?;
    let scene = SceneSpec {
        geometry,
        bg_min: cfg.get_positive_f64("scene.bg_min")?.unwrap_or(d.bg_min),
        bg_max: cfg.get_positive_f64("scene.bg_max")?.unwrap_or(d.bg_max),
        circle: CircleSpec {
            radius_px: cfg.get_positive_f64("circle.radius")?.unwrap_or(d.circle.radius_px),
            reflectivity: cfg
                .get_positive_f64("circle.reflectivity")?
                .unwrap_or(d.circle.reflectivity),
            center_x: cfg.get_f64("circle.center_x")?.unwrap_or(d.circle.center_x),
            center_y: cfg.get_f64("circle.center_y")?.unwrap_or(d.circle.center_y),
            velocity_x: cfg.get_f64("circle.velocity_x")?.unwrap_or(d.circle.velocity_x),
        },
        duration_s: cfg.get_positive_f64("scene.duration_s")?.unwrap_or(d.duration_s),
        stationary_lead_s: cfg.get_f64("scene.lead_s")?.unwrap_or(d.stationary_lead_s),
    };
    scene.validate().map_err(|e| ConfigError::BadValue {
        key: "scene".into(),
        value: String::new(),
        reason: e.to_string(),
    })?;
    Ok(scene)
}

/// `x:y:rate_hz:polarity` entries separated by `;`.
fn parse_hot_pixels(cfg: &KvConfig, key: &str) -> Result<Vec<HotPixel>, ConfigError> {
    let Some(raw) = cfg.get(key) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for entry in raw.split(';') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(cfg.bad(key, "expected x:y:rate_hz:polarity entries separated by ';'"));
        }
        let x = parts[0].parse().map_err(|_| cfg.bad(key, "bad x"))?;
        let y = parts[1].parse().map_err(|_| cfg.bad(key, "bad y"))?;
        let rate_hz = parts[2].parse().map_err(|_| cfg.bad(key, "bad rate"))?;
        let polarity = match parts[3] {
            "1" => 1,
            "-1" => -1,
            _ => return Err(cfg.bad(key, "polarity must be 1 or -1")),
        };
        out.push(HotPixel { x, y, rate_hz, polarity });
    }
    Ok(out)
}

pub fn noise_from_config(cfg: &KvConfig) -> Result<NoiseSpec, ConfigError> {
    let d = NoiseSpec::default();
    let rate = cfg.get_f64("noise.background_rate_hz")?.unwrap_or(d.background_rate_hz);
    if rate < 0.0 {
        return Err(cfg.bad("noise.background_rate_hz", "rate must be non-negative"));
    }
    Ok(NoiseSpec {
        background_rate_hz: rate,
        hot_pixels: parse_hot_pixels(cfg, "noise.hot_pixels")?,
        seed: cfg.get_u64("noise.seed")?.unwrap_or(d.seed),
    })
}

pub fn trigger_from_config(cfg: &KvConfig) -> Result<TriggerModel, ConfigError> {
    let d = TriggerModel::default();
    Ok(TriggerModel {
        contrast_threshold: cfg
            .get_positive_f64("trigger.threshold")?
            .unwrap_or(d.contrast_threshold),
    })
}

pub fn dt_sample_from_config(cfg: &KvConfig) -> Result<f64, ConfigError> {
    Ok(cfg.get_positive_f64("sim.dt_sample_s")?.unwrap_or(1e-3))
}

pub fn method_from_config(cfg: &KvConfig) -> Result<Option<MethodKind>, ConfigError> {
    match cfg.get("recon.method") {
        None => Ok(None),
        Some(raw) => raw
            .parse::<MethodKind>()
            .map(Some)
            .map_err(|_| cfg.bad("recon.method", "expected esi, naive, expdecay or compfilter")),
    }
}

/// Reconstruction parameters from config; geometry comes from the event
/// stream or scene, so callers overwrite it afterwards.
pub fn reconstruction_from_config(cfg: &KvConfig) -> Result<ReconstructionConfig, ConfigError> {
    let d = ReconstructionConfig::default();
    let de = EsiParams::default();

    let k = cfg.get_positive_f64("recon.k")?.unwrap_or(de.decay.k());
    let b = cfg.get_positive_f64("recon.b")?.unwrap_or(de.decay.b());
    let decay = DecayParams::new(k, b).map_err(|e| ConfigError::BadValue {
        key: "recon.k/recon.b".into(),
        value: format!("{k}/{b}"),
        reason: e.to_string(),
    })?;

    let smin = cfg.get_f64("recon.smin")?.unwrap_or(de.bounds.min());
    let smax = cfg.get_f64("recon.smax")?.unwrap_or(de.bounds.max());
    let bounds = ClampBounds::new(smin, smax).map_err(|e| ConfigError::BadValue {
        key: "recon.smin/recon.smax".into(),
        value: format!("{smin}/{smax}"),
        reason: e.to_string(),
    })?;

    let contribution = cfg.get_positive_f64("recon.contribution")?.unwrap_or(de.contribution);
    let fps = cfg.get_positive_f64("recon.fps")?.unwrap_or(d.fps);
    let anchor = match cfg.get_u64("recon.origin_us")? {
        Some(us) => FrameAnchor::Origin(us),
        None => FrameAnchor::FirstEvent,
    };

    Ok(ReconstructionConfig {
        geometry: d.geometry,
        fps,
        anchor,
        esi: EsiParams { decay, contribution, bounds },
        smoothing_rate: cfg.get_positive_f64("recon.lambda")?.unwrap_or(d.smoothing_rate),
        filter_rate: cfg.get_positive_f64("recon.alpha")?.unwrap_or(d.filter_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_values() {
        let cfg = KvConfig::parse(
            "# a comment\n\nrecon.k = 2.5\nrecon.method=esi\n  scene.width = 64  \n",
        )
        .unwrap();
        assert_eq!(cfg.get("recon.k"), Some("2.5"));
        assert_eq!(cfg.get("recon.method"), Some("esi"));
        assert_eq!(cfg.get("scene.width"), Some("64"));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn rejects_missing_equals_and_bad_keys() {
        let err = KvConfig::parse("this is not a pair\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
        let err = KvConfig::parse("Bad Key = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn rejects_duplicates_with_line_number() {
        let err = KvConfig::parse("recon.k = 1\nrecon.k = 2\n").unwrap_err();
        match err {
            ConfigError::DuplicateKey { key, line } => {
                assert_eq!(key, "recon.k");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn typed_getter_errors_name_the_key() {
        let cfg = KvConfig::parse("recon.k = fast\n").unwrap();
        let err = cfg.get_f64("recon.k").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("recon.k"), "{msg}");
        assert!(msg.contains("fast"), "{msg}");
    }

    #[test]
    fn positive_getter_rejects_zero() {
        let cfg = KvConfig::parse("recon.k = 0\n").unwrap();
        assert!(cfg.get_positive_f64("recon.k").is_err());
    }

    #[test]
    fn unknown_key_rejected_by_schema_check() {
        let cfg = KvConfig::parse("recon.kk = 3\n").unwrap();
        let err = cfg.expect_known(KNOWN_KEYS).unwrap_err();
        match err {
            ConfigError::UnknownKey { key } => assert_eq!(key, "recon.kk"),
            other => panic!("unexpected {other:?}"),
        }
        let ok = KvConfig::parse("recon.k = 3\n").unwrap();
        ok.expect_known(KNOWN_KEYS).unwrap();
    }

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = KvConfig::empty();
        let scene = scene_from_config(&cfg).unwrap();
        assert_eq!(scene, SceneSpec::default());
        let rc = reconstruction_from_config(&cfg).unwrap();
        assert_eq!(rc.fps, 100.0);
        assert_eq!(rc.esi.decay.k(), 10.0);
        assert_eq!(rc.anchor, FrameAnchor::FirstEvent);
        assert_eq!(method_from_config(&cfg).unwrap(), None);
        assert_eq!(dt_sample_from_config(&cfg).unwrap(), 1e-3);
    }

    #[test]
    fn overrides_take_precedence() {
        let base = KvConfig::parse("recon.k = 10\nrecon.fps = 100\n").unwrap();
        let over = KvConfig::parse("recon.k = 1.5\n").unwrap();
        let merged = base.merged_with(&over);
        let rc = reconstruction_from_config(&merged).unwrap();
        assert_eq!(rc.esi.decay.k(), 1.5);
        assert_eq!(rc.fps, 100.0);
    }

    #[test]
    fn scene_and_noise_round_trip_from_text() {
        let cfg = KvConfig::parse(
            "scene.width = 64\nscene.height = 48\ncircle.velocity_x = -30\n\
             noise.background_rate_hz = 2.5\nnoise.seed = 9\n\
             noise.hot_pixels = 3:4:1000:1; 7:8:500:-1\n",
        )
        .unwrap();
        let scene = scene_from_config(&cfg).unwrap();
        assert_eq!(scene.geometry.width, 64);
        assert_eq!(scene.circle.velocity_x, -30.0);
        let noise = noise_from_config(&cfg).unwrap();
        assert_eq!(noise.background_rate_hz, 2.5);
        assert_eq!(noise.seed, 9);
        assert_eq!(
            noise.hot_pixels,
            vec![
                HotPixel { x: 3, y: 4, rate_hz: 1000.0, polarity: 1 },
                HotPixel { x: 7, y: 8, rate_hz: 500.0, polarity: -1 },
            ]
        );
    }

    #[test]
    fn bad_hot_pixel_entry_names_key() {
        let cfg = KvConfig::parse("noise.hot_pixels = 3:4:1000\n").unwrap();
        let err = noise_from_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("noise.hot_pixels"));
    }

    #[test]
    fn bad_method_lists_valid_names() {
        let cfg = KvConfig::parse("recon.method = gauss\n").unwrap();
        let err = method_from_config(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("esi") && msg.contains("compfilter"), "{msg}");
    }

    #[test]
    fn origin_key_switches_anchor() {
        let cfg = KvConfig::parse("recon.origin_us = 250\n").unwrap();
        let rc = reconstruction_from_config(&cfg).unwrap();
        assert_eq!(rc.anchor, FrameAnchor::Origin(250));
    }

    #[test]
    fn nonfinite_numbers_rejected() {
        let cfg = KvConfig::parse("recon.fps = inf\n").unwrap();
        assert!(cfg.get_f64("recon.fps").is_err());
        let cfg = KvConfig::parse("recon.fps = NaN\n").unwrap();
        assert!(cfg.get_f64("recon.fps").is_err());
    }
}
