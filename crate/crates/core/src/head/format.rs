//! Weight file layout, little-endian:
//!
//! ```text
//! "VKMW" | u32 version | u32 D | u32 hidden | u8 activation | u8 units
//! "VKMB" bases block
//! f32 W1[hidden * 2D] | f32 b1[hidden] | f32 W2[2 * hidden] | f32 b2[2]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::mlp::MlpParams;
use crate::error::{Error, Result};
use crate::rff::Bases;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"VKMW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Relu),
            other => Err(Error::invalid(format!(
                "unsupported activation code {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowUnits {
    PixelsPerSecond,
}

impl FlowUnits {
    fn code(self) -> u8 {
        match self {
            FlowUnits::PixelsPerSecond => 0,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(FlowUnits::PixelsPerSecond),
            other => Err(Error::invalid(format!(
                "unsupported flow units code {other}"
            ))),
        }
    }
}

/// A flow head checkpoint: MLP parameters plus the bases its inputs were
/// encoded with.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub params: MlpParams<f32>,
    pub activation: Activation,
    pub units: FlowUnits,
    pub bases: Bases,
}

impl MlpWeights {
    pub fn new(params: MlpParams<f32>, bases: Bases) -> Result<Self> {
        let w = MlpWeights {
            params,
            activation: Activation::Relu,
            units: FlowUnits::PixelsPerSecond,
            bases,
        };
        w.validate()?;
        Ok(w)
    }

    /// Zero weights whose output is the constant `bias`.
    pub fn constant(bases: Bases, hidden: usize, bias: [f32; 2]) -> Self {
        let mut params = MlpParams::zeros(2 * bases.dim(), hidden);
        params.b2 = bias;
        MlpWeights {
            params,
            activation: Activation::Relu,
            units: FlowUnits::PixelsPerSecond,
            bases,
        }
    }

    pub fn dim(&self) -> usize {
        self.params.input / 2
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.input != 2 * self.bases.dim() {
            return Err(Error::DimensionMismatch {
                what: "MLP input vs 2 x bases dimension",
                expected: 2 * self.bases.dim(),
                actual: self.params.input,
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        w.write_all(&WEIGHTS_MAGIC)?;
        w.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_u32::<LittleEndian>(self.hidden() as u32)?;
        w.write_u8(self.activation.code())?;
        w.write_u8(self.units.code())?;
        self.bases.write_to(w)?;
        for v in self.params.iter() {
            w.write_f32::<LittleEndian>(*v)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: WEIGHTS_MAGIC,
                found: magic,
            });
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::invalid(format!(
                "unsupported weight file version {version}"
            )));
        }
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let hidden = r.read_u32::<LittleEndian>()? as usize;
        let activation = Activation::from_code(r.read_u8()?)?;
        let units = FlowUnits::from_code(r.read_u8()?)?;
        let bases = Bases::read_from(r)?;
        if bases.dim() != dim {
            return Err(Error::DimensionMismatch {
                what: "embedded bases dimension",
                expected: dim,
                actual: bases.dim(),
            });
        }
        let mut params = MlpParams::zeros(2 * dim, hidden);
        r.read_f32_into::<LittleEndian>(&mut params.w1)?;
        r.read_f32_into::<LittleEndian>(&mut params.b1)?;
        r.read_f32_into::<LittleEndian>(&mut params.w2)?;
        r.read_f32_into::<LittleEndian>(&mut params.b2)?;
        let w = MlpWeights {
            params,
            activation,
            units,
            bases,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EncoderConfig;
    use crate::rff::generate_bases;

    #[test]
    fn layout_and_round_trip() {
        let cfg = EncoderConfig {
            dim: 3,
            ..EncoderConfig::default()
        };
        let mut w = MlpWeights::constant(generate_bases(&cfg), 4, [1.0, -2.0]);
        w.params.w1[5] = 0.25;
        w.params.w2[7] = -1.5;
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        let bases_len = 4 + 4 + 8 + 3 * 3 * 8;
        let floats = 4 * 6 + 4 + 2 * 4 + 2;
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 1 + 1 + bases_len + 4 * floats);
        assert_eq!(&buf[..4], b"VKMW");
        assert_eq!(&buf[18..22], b"VKMB");
        assert_eq!(MlpWeights::read_from(&mut &buf[..]).unwrap(), w);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let cfg = EncoderConfig {
            dim: 2,
            ..EncoderConfig::default()
        };
        let w = MlpWeights::constant(generate_bases(&cfg), 2, [0.0, 0.0]);
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[8] = 5; // D field no longer matches the bases block
        assert!(MlpWeights::read_from(&mut &bad[..]).is_err());
        let mut bad = buf.clone();
        bad[16] = 9;
        assert!(MlpWeights::read_from(&mut &bad[..]).is_err());
        assert!(MlpWeights::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }
}
