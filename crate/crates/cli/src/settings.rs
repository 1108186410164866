//! Run configuration: `key=value` files layered under command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evflow::config::{Preset, Seeds};
use evflow::{CameraGeometry, EncoderConfig, Polarity, Precision};

use crate::exit::{Failure, CONFIG, IO};

/// Keys accepted in config files and `--set`.
const KNOWN_KEYS: &[&str] = &[
    // encoder
    "preset",
    "delta_t",
    "delta_x",
    "delta_y",
    "dim",
    "sigma2",
    "seed_t",
    "seed_x",
    "seed_y",
    "precision",
    // sensor and files
    "width",
    "height",
    "events",
    "weights",
    "gt",
    "out",
    "predictions",
    // slicing and queries
    "queries",
    "stride",
    "t0",
    "polarity",
    "seed",
    "threads",
    // training
    "epochs",
    "hidden",
    "batch_size",
    "learning_rate",
    "lambda",
    "margin",
    "validation_fraction",
    // synthetic scenes
    "scene",
    "n_events",
    "velocity_x",
    "velocity_y",
    "normal_angle",
    "offset",
    "omega",
    "length",
    "angle",
    // benchmarking
    "event_sizes",
    "flow_sizes",
    "pool_events",
    "warmup",
    "repetitions",
    "compare_delta",
    // evaluation and rendering
    "sequence",
    "slice",
];

const EXPLICIT_ENCODER_KEYS: &[&str] = &[
    "delta_t", "delta_x", "delta_y", "dim", "sigma2", "seed_t", "seed_x", "seed_y",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self, Failure> {
        let mut s = Settings::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Failure::new(
                    CONFIG,
                    format!("{origin} line {}: expected key=value", i + 1),
                )
            })?;
            s.set(k.trim(), v.trim()).map_err(|f| {
                Failure::new(f.code, format!("{origin} line {}: {}", i + 1, f.message))
            })?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(IO, format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Failure::new(CONFIG, format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies every entry of `other` on top of `self`.
    pub fn overlay(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| {
                    Failure::new(CONFIG, format!("invalid value {v:?} for {key}: {e}"))
                })
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.path(key).ok_or_else(|| {
            Failure::new(
                CONFIG,
                format!("missing required setting {key} (--{key} or {key}=...)"),
            )
        })
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Failure>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim().parse::<T>().map_err(|e| {
                            Failure::new(CONFIG, format!("invalid entry {item:?} in {key}: {e}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// `key=value` lines, sorted by key.
    pub fn echo(&self) -> Vec<String> {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }
}

/// Where the encoder parameters came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncoderSource {
    Preset(Preset),
    Explicit,
}

/// Encoder and sensor resolved from settings.
///
/// The encoder comes from exactly one of `preset` or the explicit keys
/// `delta_t`, `delta_x`, `delta_y`, `dim` (with optional `sigma2` and
/// `seed_*`). `precision` applies to either.
pub fn resolve_encoder(s: &Settings) -> Result<(EncoderConfig, EncoderSource), Failure> {
    let explicit: Vec<&str> = EXPLICIT_ENCODER_KEYS
        .iter()
        .copied()
        .filter(|k| s.has(k))
        .collect();
    let (mut cfg, source) = match s.get("preset") {
        Some(name) => {
            if !explicit.is_empty() {
                return Err(Failure::new(
                    CONFIG,
                    format!(
                        "preset {name} cannot be combined with explicit encoder keys {explicit:?}"
                    ),
                ));
            }
            let preset = Preset::from_str(name).map_err(|e| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Failure::new(CONFIG, format!("{e}; known presets: {}", names.join(", ")))
            })?;
            (preset.encoder(), EncoderSource::Preset(preset))
        }
        None => {
            let missing: Vec<&str> = ["delta_t", "delta_x", "delta_y", "dim"]
                .into_iter()
                .filter(|k| !s.has(k))
                .collect();
            if !missing.is_empty() {
                return Err(Failure::new(
                    CONFIG,
                    format!(
                        "no encoder configuration: pass --preset or set {}",
                        missing.join(", ")
                    ),
                ));
            }
            let seeds = Seeds::default();
            let cfg = EncoderConfig {
                delta_t: s.parsed("delta_t")?.unwrap(),
                delta_x: s.parsed("delta_x")?.unwrap(),
                delta_y: s.parsed("delta_y")?.unwrap(),
                dim: s.parsed("dim")?.unwrap(),
                sigma2: s.parsed_or("sigma2", 25.0)?,
                seeds: Seeds {
                    t: s.parsed_or("seed_t", seeds.t)?,
                    x: s.parsed_or("seed_x", seeds.x)?,
                    y: s.parsed_or("seed_y", seeds.y)?,
                },
                precision: Precision::F32,
            };
            (cfg, EncoderSource::Explicit)
        }
    };
    cfg.precision = s.parsed_or("precision", Precision::F32)?;
    cfg.validate()
        .map_err(|e| Failure::new(CONFIG, e.to_string()))?;
    Ok((cfg, source))
}

/// Sensor from `width`/`height`, else the preset's.
pub fn resolve_geometry(
    s: &Settings,
    source: Option<EncoderSource>,
) -> Result<Option<CameraGeometry>, Failure> {
    match (s.parsed::<u32>("width")?, s.parsed::<u32>("height")?) {
        (Some(w), Some(h)) => CameraGeometry::new(w, h)
            .map(Some)
            .map_err(|e| Failure::new(CONFIG, e.to_string())),
        (None, None) => Ok(match source {
            Some(EncoderSource::Preset(p)) => Some(p.geometry()),
            _ => None,
        }),
        _ => Err(Failure::new(
            CONFIG,
            "width and height must be given together",
        )),
    }
}

pub fn resolve_polarity(s: &Settings) -> Result<Option<Polarity>, Failure> {
    match s.get("polarity") {
        None | Some("both") | Some("all") => Ok(None),
        Some("positive") | Some("pos") | Some("1") | Some("+1") => Ok(Some(Polarity::Positive)),
        Some("negative") | Some("neg") | Some("-1") | Some("0") => Ok(Some(Polarity::Negative)),
        Some(other) => Err(Failure::new(
            CONFIG,
            format!("invalid polarity {other:?}; use positive, negative or both"),
        )),
    }
}

/// Which events of each slice are queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryPolicy {
    All,
    EveryKth(usize),
    Random(usize),
}

impl FromStr for QueryPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let count = |v: &str| -> Result<usize, String> {
            match v.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("expected a positive count in {s:?}")),
            }
        };
        if s == "all" {
            Ok(QueryPolicy::All)
        } else if let Some(k) = s.strip_prefix("every-") {
            count(k).map(QueryPolicy::EveryKth)
        } else if let Some(m) = s.strip_prefix("random-") {
            count(m).map(QueryPolicy::Random)
        } else {
            Err(format!(
                "unknown query policy {s:?}; use all, every-K or random-M"
            ))
        }
    }
}

impl fmt::Display for QueryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryPolicy::All => f.write_str("all"),
            QueryPolicy::EveryKth(k) => write!(f, "every-{k}"),
            QueryPolicy::Random(m) => write!(f, "random-{m}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut s = Settings::parse(
            "# demo\npreset = 640x480_32ms_C64_k8\nqueries=every-4\n\n",
            "test",
        )
        .unwrap();
        let mut flags = Settings::default();
        flags.set("queries", "all").unwrap();
        s.overlay(&flags);
        assert_eq!(s.get("queries"), Some("all"));
        assert_eq!(s.echo(), vec!["preset=640x480_32ms_C64_k8", "queries=all"]);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert_eq!(Settings::parse("colour=red", "f").unwrap_err().code, CONFIG);
        assert!(Settings::parse("just words", "f")
            .unwrap_err()
            .message
            .contains("line 1"));
    }

    #[test]
    fn preset_or_explicit() {
        let s = Settings::parse("preset=640x480_24ms_C64_k10\nprecision=f64", "t").unwrap();
        let (cfg, src) = resolve_encoder(&s).unwrap();
        assert_eq!((cfg.delta_x, cfg.delta_t, cfg.dim), (10, 0.012, 64));
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(src, EncoderSource::Preset(Preset::K10Ms24));
        assert_eq!(
            resolve_geometry(&s, Some(src)).unwrap(),
            Some(CameraGeometry::new(640, 480).unwrap())
        );

        let s = Settings::parse(
            "delta_t=0.01\ndelta_x=2\ndelta_y=3\ndim=8\nwidth=4\nheight=5",
            "t",
        )
        .unwrap();
        let (cfg, src) = resolve_encoder(&s).unwrap();
        assert_eq!((cfg.delta_x, cfg.delta_y, cfg.sigma2), (2, 3, 25.0));
        assert_eq!(
            resolve_geometry(&s, Some(src)).unwrap(),
            Some(CameraGeometry::new(4, 5).unwrap())
        );

        let both = Settings::parse("preset=640x480_32ms_C64_k8\ndim=32", "t").unwrap();
        assert_eq!(resolve_encoder(&both).unwrap_err().code, CONFIG);
        assert_eq!(
            resolve_encoder(&Settings::default()).unwrap_err().code,
            CONFIG
        );
        let partial = Settings::parse("delta_t=0.01\ndim=8", "t").unwrap();
        assert!(resolve_encoder(&partial)
            .unwrap_err()
            .message
            .contains("delta_x"));
    }

    #[test]
    fn query_policies() {
        assert_eq!("all".parse(), Ok(QueryPolicy::All));
        assert_eq!("every-10".parse(), Ok(QueryPolicy::EveryKth(10)));
        assert_eq!("random-3".parse(), Ok(QueryPolicy::Random(3)));
        assert!("every-0".parse::<QueryPolicy>().is_err());
        assert!("some".parse::<QueryPolicy>().is_err());
        assert_eq!(QueryPolicy::Random(3).to_string(), "random-3");
    }
}
