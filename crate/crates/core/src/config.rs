//! Encoder configuration and the named recipe presets.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::event::CameraGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "single" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(Error::invalid(format!("unknown precision {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Seeds of the three frequency vectors, in `(T, X, Y)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seeds {
    pub t: u64,
    pub x: u64,
    pub y: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { t: 0, x: 1, y: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Half window length in seconds. A slice spans `2 * delta_t`.
    pub delta_t: f64,
    /// Horizontal pixel radius of the neighborhood.
    pub delta_x: u32,
    /// Vertical pixel radius of the neighborhood.
    pub delta_y: u32,
    /// Embedding dimension.
    pub dim: usize,
    /// Variance of the random frequencies.
    pub sigma2: f64,
    pub seeds: Seeds,
    pub precision: Precision,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Preset::K8Ms32.encoder()
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::invalid(format!(
                "delta_t must be > 0, got {}",
                self.delta_t
            )));
        }
        if self.delta_x < 1 || self.delta_y < 1 {
            return Err(Error::invalid(format!(
                "pixel radii must be >= 1, got ({}, {})",
                self.delta_x, self.delta_y
            )));
        }
        if self.dim < 1 {
            return Err(Error::invalid("embedding dimension must be >= 1"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::invalid(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Slice length, `2 * delta_t`.
    pub fn window(&self) -> f64 {
        2.0 * self.delta_t
    }

    pub fn window_width(&self) -> usize {
        2 * self.delta_x as usize + 1
    }

    pub fn window_height(&self) -> usize {
        2 * self.delta_y as usize + 1
    }

    /// Number of pixels in one pooling window.
    pub fn window_area(&self) -> usize {
        self.window_width() * self.window_height()
    }
}

/// The four released recipes. All use a 640x480 sensor and `D = 64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    K8Ms32,
    K10Ms32,
    K8Ms24,
    K10Ms24,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::K8Ms32,
        Preset::K10Ms32,
        Preset::K8Ms24,
        Preset::K10Ms24,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::K8Ms32 => "640x480_32ms_C64_k8",
            Preset::K10Ms32 => "640x480_32ms_C64_k10",
            Preset::K8Ms24 => "640x480_24ms_C64_k8",
            Preset::K10Ms24 => "640x480_24ms_C64_k10",
        }
    }

    pub fn geometry(self) -> CameraGeometry {
        CameraGeometry::new(640, 480).expect("preset geometry is valid")
    }

    pub fn encoder(self) -> EncoderConfig {
        let (radius, delta_t) = match self {
            Preset::K8Ms32 => (8, 0.016),
            Preset::K10Ms32 => (10, 0.016),
            Preset::K8Ms24 => (8, 0.012),
            Preset::K10Ms24 => (10, 0.012),
        };
        EncoderConfig {
            delta_t,
            delta_x: radius,
            delta_y: radius,
            dim: 64,
            sigma2: 25.0,
            seeds: Seeds::default(),
            precision: Precision::F32,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown preset {s:?}")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_table() {
        let k8 = Preset::from_str("640x480_32ms_C64_k8").unwrap().encoder();
        assert_eq!((k8.delta_x, k8.delta_y, k8.dim), (8, 8, 64));
        assert_eq!(k8.delta_t, 0.016);

        let k10 = Preset::K10Ms24.encoder();
        assert_eq!((k10.delta_x, k10.delta_y), (10, 10));
        assert_eq!(k10.delta_t, 0.012);
        assert_eq!(k10.sigma2, 25.0);
        assert_eq!(k10.seeds, Seeds { t: 0, x: 1, y: 2 });

        for p in Preset::ALL {
            assert_eq!(p.geometry(), CameraGeometry::new(640, 480).unwrap());
            p.encoder().validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            EncoderConfig {
                delta_t: 0.0,
                ..Default::default()
            },
            EncoderConfig {
                delta_x: 0,
                ..Default::default()
            },
            EncoderConfig {
                dim: 0,
                ..Default::default()
            },
            EncoderConfig {
                sigma2: -1.0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(Preset::from_str("640x480").is_err());
    }
}
