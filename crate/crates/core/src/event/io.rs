//! Event file formats.
//!
//! CSV: one event per line, `t,x,y[,p]`, `t` in decimal seconds, optional
//! polarity in `{0, 1, -1, +1}`. A header line is allowed and recognized by
//! a non-numeric first field.
//!
//! Binary: magic `EVN1`, `u32` width, `u32` height, then 17-byte records
//! `(f64 t, i32 x, i32 y, i8 polarity)`, all little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{CameraGeometry, Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 4] = *b"EVN1";
/// Bytes per binary event record.
pub const RECORD_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evn") | Some("evn1") => EventFormat::Binary,
            _ => EventFormat::Csv,
        }
    }
}

impl FromStr for EventFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(EventFormat::Csv),
            "binary" | "bin" => Ok(EventFormat::Binary),
            _ => Err(Error::invalid(format!("unknown event format {s:?}"))),
        }
    }
}

/// Loads an event file.
///
/// CSV files carry no geometry, so `geometry` is required for them. For
/// binary files the header geometry is used and must agree with `geometry`
/// when one is given.
pub fn load_events(
    path: impl AsRef<Path>,
    format: EventFormat,
    geometry: Option<CameraGeometry>,
) -> Result<EventStream> {
    let file = File::open(path.as_ref())?;
    read_events(BufReader::new(file), format, geometry)
}

pub fn read_events<R: BufRead>(
    reader: R,
    format: EventFormat,
    geometry: Option<CameraGeometry>,
) -> Result<EventStream> {
    match format {
        EventFormat::Csv => {
            let geometry = geometry.ok_or_else(|| {
                Error::invalid("CSV event files need an explicit sensor geometry")
            })?;
            read_csv(reader, geometry)
        }
        EventFormat::Binary => read_binary(reader, geometry),
    }
}

fn read_csv<R: BufRead>(reader: R, geometry: CameraGeometry) -> Result<EventStream> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if i == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        let at = || format!("line {lineno}");
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(
                at(),
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(at(), format!("bad timestamp {:?}", fields[0])))?;
        let x: i64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(at(), format!("bad x {:?}", fields[1])))?;
        let y: i64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(at(), format!("bad y {:?}", fields[2])))?;
        let polarity = match fields.get(3) {
            None => None,
            Some(&"1") | Some(&"+1") => Some(Polarity::Positive),
            Some(&"0") | Some(&"-1") => Some(Polarity::Negative),
            Some(other) => return Err(Error::parse(at(), format!("bad polarity {other:?}"))),
        };
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::parse(
                at(),
                format!("timestamp {t} must be finite and >= 0"),
            ));
        }
        if !geometry.contains(x, y) {
            return Err(Error::OutOfBounds {
                index: lineno,
                x,
                y,
                width: geometry.width,
                height: geometry.height,
            });
        }
        events.push(Event {
            t,
            x: x as u32,
            y: y as u32,
            polarity,
        });
    }
    Ok(EventStream { events, geometry })
}

fn read_binary<R: Read>(mut reader: R, expected: Option<CameraGeometry>) -> Result<EventStream> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if magic != BINARY_MAGIC {
        return Err(Error::BadMagic {
            expected: BINARY_MAGIC,
            found: magic,
        });
    }
    let width = reader.read_u32::<LittleEndian>()?;
    let height = reader.read_u32::<LittleEndian>()?;
    let geometry = CameraGeometry::new(width, height)?;
    if let Some(g) = expected {
        if g != geometry {
            return Err(Error::invalid(format!(
                "file geometry {width}x{height} differs from configured {}x{}",
                g.width, g.height
            )));
        }
    }

    let mut events = Vec::new();
    let mut record = [0u8; RECORD_LEN];
    let mut index = 0usize;
    loop {
        match read_record(&mut reader, &mut record)? {
            0 => break,
            RECORD_LEN => {}
            n => {
                return Err(Error::parse(
                    format!("record {index}"),
                    format!("truncated record ({n} of {RECORD_LEN} bytes)"),
                ))
            }
        }
        let mut r = &record[..];
        let t = r.read_f64::<LittleEndian>()?;
        let x = r.read_i32::<LittleEndian>()? as i64;
        let y = r.read_i32::<LittleEndian>()? as i64;
        let p = r.read_i8()?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::parse(
                format!("record {index}"),
                format!("timestamp {t} must be finite and >= 0"),
            ));
        }
        if !geometry.contains(x, y) {
            return Err(Error::OutOfBounds {
                index,
                x,
                y,
                width,
                height,
            });
        }
        let polarity = if p > 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        };
        events.push(Event::new(t, x as u32, y as u32).with_polarity(polarity));
        index += 1;
    }
    Ok(EventStream { events, geometry })
}

/// Fills `buf` as far as the stream allows and returns the byte count.
fn read_record<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

pub fn write_events_csv(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in events {
        match e.polarity {
            Some(Polarity::Positive) => writeln!(w, "{},{},{},1", e.t, e.x, e.y)?,
            Some(Polarity::Negative) => writeln!(w, "{},{},{},0", e.t, e.x, e.y)?,
            None => writeln!(w, "{},{},{}", e.t, e.x, e.y)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_binary(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&BINARY_MAGIC)?;
    w.write_u32::<LittleEndian>(stream.geometry.width)?;
    w.write_u32::<LittleEndian>(stream.geometry.height)?;
    for e in &stream.events {
        w.write_f64::<LittleEndian>(e.t)?;
        w.write_i32::<LittleEndian>(e.x as i32)?;
        w.write_i32::<LittleEndian>(e.y as i32)?;
        w.write_i8(match e.polarity {
            Some(Polarity::Positive) => 1,
            _ => -1,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g8() -> Option<CameraGeometry> {
        Some(CameraGeometry::new(8, 8).unwrap())
    }

    fn csv(text: &str) -> Result<EventStream> {
        read_events(text.as_bytes(), EventFormat::Csv, g8())
    }

    #[test]
    fn parses_plain_rows() {
        let s = csv("0.000,3,4\n0.001,3,5\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events[0], Event::new(0.0, 3, 4));
        assert_eq!(s.events[1].t, 0.001);
        assert_eq!(s.events[1].polarity, None);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        assert!(csv("").unwrap().is_empty());
    }

    #[test]
    fn header_and_polarity() {
        let s = csv("t,x,y,p\n0.5,1,2,1\n0.6,1,2,-1\n0.7,0,0,+1\n0.8,0,0,0\n").unwrap();
        let p: Vec<_> = s.events.iter().map(|e| e.polarity.unwrap()).collect();
        assert_eq!(
            p,
            vec![
                Polarity::Positive,
                Polarity::Negative,
                Polarity::Positive,
                Polarity::Negative
            ]
        );
    }

    #[test]
    fn out_of_bounds_names_row() {
        let err = csv("0.002,9,0\n").unwrap_err();
        match err {
            Error::OutOfBounds {
                index, x, width, ..
            } => {
                assert_eq!((index, x, width), (1, 9, 8));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(csv("0.0,-1,0\n"), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn malformed_rows() {
        let err = csv("0.0,1,1\n0.1,abc,1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(csv("0.0,1\n").is_err());
        assert!(csv("0.0,1,1,7\n").is_err());
        assert!(csv("nan,1,1\n").is_err());
    }

    #[test]
    fn csv_needs_geometry() {
        assert!(read_events("0,0,0\n".as_bytes(), EventFormat::Csv, None).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ev.bin");
        let g = CameraGeometry::new(16, 9).unwrap();
        let events = vec![
            Event::new(0.25, 3, 4).with_polarity(Polarity::Positive),
            Event::new(1.5, 15, 8).with_polarity(Polarity::Negative),
        ];
        write_events_binary(&path, &EventStream::new(events.clone(), g).unwrap()).unwrap();
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            12 + 2 * RECORD_LEN as u64
        );
        let back = load_events(&path, EventFormat::Binary, None).unwrap();
        assert_eq!(back.geometry, g);
        assert_eq!(back.events, events);
        assert!(load_events(&path, EventFormat::Binary, g8()).is_err());
    }

    #[test]
    fn binary_rejects_truncation_and_magic() {
        let mut bytes = BINARY_MAGIC.to_vec();
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 10]);
        assert!(matches!(
            read_events(&bytes[..], EventFormat::Binary, None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read_events(&b"XXXX\0\0\0\0\0\0\0\0"[..], EventFormat::Binary, None),
            Err(Error::BadMagic { .. })
        ));
    }
}
