use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::rng::normal_vector;
use crate::config::EncoderConfig;
use crate::error::{Error, Result};

pub const BASES_MAGIC: [u8; 4] = *b"VKMB";

/// The three random frequency vectors for time, x and y.
#[derive(Debug, Clone, PartialEq)]
pub struct Bases {
    pub sigma2: f64,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Bases {
    pub fn dim(&self) -> usize {
        self.t.len()
    }

    pub fn from_vectors(sigma2: f64, t: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let dim = t.len();
        if dim == 0 {
            return Err(Error::invalid("bases must have at least one component"));
        }
        for (what, v) in [("x bases", &x), ("y bases", &y)] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        if !t.iter().chain(&x).chain(&y).all(|v| v.is_finite()) {
            return Err(Error::invalid("bases contain non-finite values"));
        }
        Ok(Bases { sigma2, t, x, y })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&BASES_MAGIC)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_f64::<LittleEndian>(self.sigma2)?;
        for v in [&self.t, &self.x, &self.y] {
            for &f in v.iter() {
                w.write_f64::<LittleEndian>(f)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != BASES_MAGIC {
            return Err(Error::BadMagic {
                expected: BASES_MAGIC,
                found: magic,
            });
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let sigma2 = r.read_f64::<LittleEndian>()?;
        let mut read_vec = || -> Result<Vec<f64>> {
            let mut v = vec![0.0; dim];
            r.read_f64_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let t = read_vec()?;
        let x = read_vec()?;
        let y = read_vec()?;
        Bases::from_vectors(sigma2, t, x, y)
    }
}

/// Draws `T`, `X`, `Y` i.i.d. from `N(0, sigma2)`, each on its own seeded
/// stream. Deterministic in `(dim, sigma2, seeds)`.
pub fn generate_bases(cfg: &EncoderConfig) -> Bases {
    Bases {
        sigma2: cfg.sigma2,
        t: normal_vector(cfg.seeds.t, cfg.dim, cfg.sigma2),
        x: normal_vector(cfg.seeds.x, cfg.dim, cfg.sigma2),
        y: normal_vector(cfg.seeds.y, cfg.dim, cfg.sigma2),
    }
}
