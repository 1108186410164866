//! Event loading, slicing, query selection and the prediction CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use evflow::event::{load_events, EventFormat};
use evflow::{CameraGeometry, EncoderConfig, EventSlice, EventStream, QuerySet};

use crate::exit::{Failure, CONFIG, IO};
use crate::settings::{resolve_polarity, QueryPolicy, Settings};

pub fn require_file(path: &Path, what: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::new(
            IO,
            format!("{what} file {} does not exist", path.display()),
        ))
    }
}

/// Loads the `events` file, applies the polarity filter and sorts by time.
///
/// Event indices everywhere in the CLI refer to positions in this filtered,
/// time-sorted stream. For a sorted file read without a polarity filter they
/// are line (record) numbers counted from 0.
pub fn load_stream(s: &Settings, geometry: Option<CameraGeometry>) -> Result<EventStream, Failure> {
    let path = s.require_path("events")?;
    require_file(&path, "events")?;
    let format = EventFormat::from_path(&path);
    if format == EventFormat::Csv && geometry.is_none() {
        return Err(Failure::new(
            CONFIG,
            "CSV events carry no sensor size: pass --preset or set width and height",
        ));
    }
    let mut stream = load_events(&path, format, geometry)
        .map_err(|e| Failure::from(e).context(path.display()))?;
    if let Some(keep) = resolve_polarity(s)? {
        stream.retain_polarity(keep);
    }
    // stable, so ties keep file order
    stream.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(stream)
}

/// One slice and the stream position of its first event.
pub struct IndexedSlice {
    pub index: usize,
    pub offset: usize,
    pub slice: EventSlice,
}

/// Window start `t0` (default: first event) and `stride` (default: the
/// window length).
pub fn slicing(
    s: &Settings,
    cfg: &EncoderConfig,
    stream: &EventStream,
) -> Result<(f64, f64), Failure> {
    let t0 = match s.parsed::<f64>("t0")? {
        Some(t) => t,
        None => stream.events.first().map_or(0.0, |e| e.t),
    };
    let stride = s.parsed_or("stride", cfg.window())?;
    Ok((t0, stride))
}

pub fn slice_stream(
    stream: &EventStream,
    cfg: &EncoderConfig,
    t0: f64,
    stride: f64,
) -> Result<Vec<IndexedSlice>, Failure> {
    let slices = stream.slice(cfg.delta_t, stride, t0)?;
    Ok(slices
        .into_iter()
        .enumerate()
        .map(|(index, slice)| {
            let offset = stream.events.partition_point(|e| e.t < slice.t_start());
            IndexedSlice {
                index,
                offset,
                slice,
            }
        })
        .collect())
}

/// Queried events of one slice, as indices into the slice.
pub fn select_queries(
    policy: QueryPolicy,
    slice_len: usize,
    slice_index: usize,
    seed: u64,
) -> QuerySet {
    match policy {
        QueryPolicy::All => QuerySet::all(slice_len),
        QueryPolicy::EveryKth(k) => QuerySet::every_kth(slice_len, k),
        QueryPolicy::Random(m) if m >= slice_len => QuerySet::all(slice_len),
        QueryPolicy::Random(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(slice_index as u64));
            let mut picked = rand::seq::index::sample(&mut rng, slice_len, m).into_vec();
            picked.sort_unstable();
            QuerySet::new(picked, slice_len).expect("sampled indices lie in the slice")
        }
    }
}

pub const PREDICTION_COLUMNS: &str = "slice_index,event_index,t,x,y,nx,ny";

/// One row of a prediction CSV. `count` is an optional eighth column that
/// weights the row, default 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub slice_index: u64,
    pub event_index: u64,
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub nx: f64,
    pub ny: f64,
    pub count: u64,
}

pub fn write_prediction_row<W: Write + ?Sized>(
    w: &mut W,
    r: &PredictionRow,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        r.slice_index, r.event_index, r.t, r.x, r.y, r.nx as f32, r.ny as f32
    )
}

/// Reads a prediction CSV. `#` lines and the column header are skipped.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, Failure> {
    require_file(path, "predictions")?;
    let file = File::open(path).map_err(|e| Failure::from(e).context(path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::from(e).context(path.display()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("slice_index") {
            continue;
        }
        let bad =
            |what: &str| Failure::new(IO, format!("{} line {}: {what}", path.display(), i + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(7..=8).contains(&fields.len()) {
            return Err(bad(&format!(
                "expected 7 or 8 columns, found {}",
                fields.len()
            )));
        }
        fn num<T: std::str::FromStr>(v: &str) -> Option<T> {
            v.parse().ok()
        }
        let row = (|| {
            Some(PredictionRow {
                slice_index: num(fields[0])?,
                event_index: num(fields[1])?,
                t: num(fields[2])?,
                x: num(fields[3])?,
                y: num(fields[4])?,
                nx: num(fields[5])?,
                ny: num(fields[6])?,
                count: match fields.get(7) {
                    Some(c) => num(c)?,
                    None => 1,
                },
            })
        })()
        .ok_or_else(|| bad(&format!("malformed row {line:?}")))?;
        if !(row.nx.is_finite() && row.ny.is_finite()) {
            return Err(bad("non-finite flow"));
        }
        rows.push(row);
    }
    Ok(rows)
}
