//! Dense ground-truth flow maps.
//!
//! Binary layout: magic `FLW1`, `u32` width, `u32` height, then per pixel in
//! row-major order `f32 u_x, f32 u_y, u8 valid`, little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::event::CameraGeometry;

pub const FLOW_MAGIC: [u8; 4] = *b"FLW1";

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    geometry: CameraGeometry,
    flow: Vec<[f32; 2]>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(geometry: CameraGeometry, flow: Vec<[f32; 2]>, valid: Vec<bool>) -> Result<Self> {
        let n = geometry.pixels();
        if flow.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch {
                what: "flow field pixel count",
                expected: n,
                actual: flow.len().min(valid.len()),
            });
        }
        if flow
            .iter()
            .zip(&valid)
            .any(|(f, &v)| v && !(f[0].is_finite() && f[1].is_finite()))
        {
            return Err(Error::invalid("valid flow entries must be finite"));
        }
        Ok(FlowField {
            geometry,
            flow,
            valid,
        })
    }

    /// All pixels invalid.
    pub fn empty(geometry: CameraGeometry) -> Self {
        let n = geometry.pixels();
        FlowField {
            geometry,
            flow: vec![[0.0; 2]; n],
            valid: vec![false; n],
        }
    }

    pub fn geometry(&self) -> CameraGeometry {
        self.geometry
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.geometry.width as usize + x as usize
    }

    /// Flow at a pixel, `None` where no ground truth exists.
    pub fn get(&self, x: u32, y: u32) -> Option<[f64; 2]> {
        if !self.geometry.contains(x as i64, y as i64) {
            return None;
        }
        let i = self.index(x, y);
        self.valid[i].then(|| [self.flow[i][0] as f64, self.flow[i][1] as f64])
    }

    pub fn set(&mut self, x: u32, y: u32, flow: [f32; 2]) {
        let i = self.index(x, y);
        self.flow[i] = flow;
        self.valid[i] = true;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Valid pixels as `(x, y, flow)`.
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, [f32; 2])> + '_ {
        let w = self.geometry.width as usize;
        self.valid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32, self.flow[i]))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&FLOW_MAGIC)?;
        w.write_u32::<LittleEndian>(self.geometry.width)?;
        w.write_u32::<LittleEndian>(self.geometry.height)?;
        for (f, &v) in self.flow.iter().zip(&self.valid) {
            w.write_f32::<LittleEndian>(f[0])?;
            w.write_f32::<LittleEndian>(f[1])?;
            w.write_u8(v as u8)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != FLOW_MAGIC {
            return Err(Error::BadMagic {
                expected: FLOW_MAGIC,
                found: magic,
            });
        }
        let geometry =
            CameraGeometry::new(r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?)?;
        let n = geometry.pixels();
        let mut flow = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for _ in 0..n {
            let ux = r.read_f32::<LittleEndian>()?;
            let uy = r.read_f32::<LittleEndian>()?;
            flow.push([ux, uy]);
            valid.push(match r.read_u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::parse(
                        "flow map",
                        format!("valid flag {other} not in {{0, 1}}"),
                    ))
                }
            });
        }
        FlowField::new(geometry, flow, valid)
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

    #[test]
    fn round_trip_and_lookup() {
        let g = CameraGeometry::new(3, 2).unwrap();
        let mut f = FlowField::empty(g);
        f.set(2, 1, [10.0, -1.5]);
        assert_eq!(f.get(2, 1), Some([10.0, -1.5]));
        assert_eq!(f.get(0, 0), None);
        assert_eq!(f.get(3, 0), None);
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 6 * 9);
        // pixel (2, 1) is record 5
        assert_eq!(buf[12 + 5 * 9 + 8], 1);
        let back = FlowField::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back, f);
        assert_eq!(
            back.iter_valid().collect::<Vec<_>>(),
            vec![(2, 1, [10.0, -1.5])]
        );
    }

    #[test]
    fn rejects_bad_files() {
        let g = CameraGeometry::new(1, 1).unwrap();
        let mut buf = Vec::new();
        FlowField::empty(g).write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[20] = 7;
        assert!(FlowField::read_from(&mut &bad[..]).is_err());
        assert!(FlowField::read_from(&mut &buf[..buf.len() - 1]).is_err());
        assert!(FlowField::new(g, vec![], vec![]).is_err());
    }
}
