pub mod bench;
pub mod encode;
pub mod eval;
pub mod predict;
pub mod render;
pub mod synth;
pub mod train;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use log::info;

use evflow::{CameraGeometry, EncoderConfig};

use crate::exit::Failure;
use crate::settings::{resolve_encoder, resolve_geometry, EncoderSource, QueryPolicy, Settings};

pub struct Context {
    pub command: &'static str,
    pub settings: Settings,
}

impl Context {
    pub fn new(command: &'static str, settings: Settings) -> Self {
        Context { command, settings }
    }

    /// Encoder and, when known, the sensor.
    pub fn encoder(&self) -> Result<(EncoderConfig, Option<CameraGeometry>), Failure> {
        let (cfg, source) = resolve_encoder(&self.settings)?;
        let geometry = resolve_geometry(&self.settings, Some(source))?;
        Ok((cfg, geometry))
    }

    /// Sensor from `width`/`height` or a preset, without needing a full
    /// encoder configuration.
    pub fn geometry(&self) -> Result<Option<CameraGeometry>, Failure> {
        let source = match self.settings.get("preset") {
            Some(_) => Some(resolve_encoder(&self.settings)?.1),
            None => None::<EncoderSource>,
        };
        resolve_geometry(&self.settings, source)
    }

    pub fn queries(&self) -> Result<QueryPolicy, Failure> {
        self.settings.parsed_or("queries", QueryPolicy::All)
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.settings.parsed_or("seed", 0)
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.settings.path("out")
    }

    /// The command, every given setting, then `resolved` values derived
    /// from them.
    pub fn header(&self, resolved: &[(&str, String)]) -> Vec<String> {
        let mut lines = vec![format!("evflow {}", self.command)];
        lines.extend(self.settings.echo());
        lines.extend(resolved.iter().map(|(k, v)| format!("resolved.{k}={v}")));
        lines
    }

    /// Logs the header, for outputs that have no room for it.
    pub fn log_header(&self, resolved: &[(&str, String)]) {
        for line in self.header(resolved) {
            info!("{line}");
        }
    }
}

pub fn encoder_echo(cfg: &EncoderConfig) -> Vec<(&'static str, String)> {
    vec![
        ("delta_t", cfg.delta_t.to_string()),
        ("delta_x", cfg.delta_x.to_string()),
        ("delta_y", cfg.delta_y.to_string()),
        ("dim", cfg.dim.to_string()),
        ("sigma2", cfg.sigma2.to_string()),
        (
            "seeds",
            format!("{},{},{}", cfg.seeds.t, cfg.seeds.x, cfg.seeds.y),
        ),
        ("precision", cfg.precision.to_string()),
    ]
}

pub fn geometry_echo(g: CameraGeometry) -> (&'static str, String) {
    ("geometry", format!("{}x{}", g.width, g.height))
}

/// File at `path`, or stdout.
pub fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::from(e).context(p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_header<W: Write + ?Sized>(w: &mut W, lines: &[String]) -> io::Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}
