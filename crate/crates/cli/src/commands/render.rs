//! `render`: predictions as a binary PPM.
//!
//! Flows landing on the same pixel are averaged (count-weighted). Hue is the
//! flow direction, `atan2(ny, nx)` mapped to [0°, 360°); saturation is the
//! magnitude over the image's largest magnitude; value is 1. Pixels without
//! predictions are black. The normalizing magnitude goes to `<out>.txt`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use log::{info, warn};

use evflow::metrics::FlowField;
use evflow::CameraGeometry;

use super::{geometry_echo, write_header, Context};
use crate::exit::{Failure, CONFIG};
use crate::input::{read_predictions, require_file, PredictionRow};

pub fn run(ctx: &Context) -> Result<(), Failure> {
    let pred_path = ctx.settings.require_path("predictions")?;
    let out = ctx
        .out()
        .ok_or_else(|| Failure::new(CONFIG, "render writes an image: pass --out"))?;
    let rows = read_predictions(&pred_path)?;
    let g = match ctx.geometry()? {
        Some(g) => g,
        None => match ctx.settings.path("gt") {
            Some(p) => {
                require_file(&p, "ground truth")?;
                FlowField::load(&p)
                    .map_err(|e| Failure::from(e).context(p.display()))?
                    .geometry()
            }
            None => {
                return Err(Failure::new(
                    CONFIG,
                    "render needs the sensor size: pass --preset, --gt or set width and height",
                ))
            }
        },
    };
    let slice: Option<u64> = ctx.settings.parsed("slice")?;
    let rows: Vec<PredictionRow> = rows
        .into_iter()
        .filter(|r| slice.is_none_or(|s| r.slice_index == s))
        .collect();
    if let Some(r) = rows.iter().find(|r| r.x >= g.width || r.y >= g.height) {
        return Err(Failure::new(
            CONFIG,
            format!(
                "prediction at ({}, {}) lies outside the {}x{} image",
                r.x, r.y, g.width, g.height
            ),
        ));
    }
    if rows.is_empty() {
        warn!("no predictions to render, writing a black image");
    }

    let image = render(&rows, g);
    let mut bytes = format!("P6\n{} {}\n255\n", g.width, g.height).into_bytes();
    bytes.extend_from_slice(&image.rgb);
    fs::write(&out, bytes).map_err(|e| Failure::from(e).context(out.display()))?;

    let sidecar = PathBuf::from(format!("{}.txt", out.display()));
    let mut side = Vec::new();
    write_header(&mut side, &ctx.header(&[geometry_echo(g)]))?;
    writeln!(side, "max_magnitude={}", image.max_magnitude)?;
    writeln!(side, "colored_pixels={}", image.colored)?;
    writeln!(side, "predictions={}", rows.len())?;
    fs::write(&sidecar, side).map_err(|e| Failure::from(e).context(sidecar.display()))?;
    info!(
        "wrote {} ({} colored pixels, max magnitude {})",
        out.display(),
        image.colored,
        image.max_magnitude
    );
    Ok(())
}

pub struct Image {
    pub rgb: Vec<u8>,
    pub max_magnitude: f64,
    pub colored: usize,
}

pub fn render(rows: &[PredictionRow], g: CameraGeometry) -> Image {
    let mut sum = vec![[0.0f64; 2]; g.pixels()];
    let mut count = vec![0u64; g.pixels()];
    for r in rows {
        let i = r.y as usize * g.width as usize + r.x as usize;
        sum[i][0] += r.count as f64 * r.nx;
        sum[i][1] += r.count as f64 * r.ny;
        count[i] += r.count;
    }
    let mean: Vec<Option<[f64; 2]>> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| [s[0] / c as f64, s[1] / c as f64]))
        .collect();
    let max_magnitude = mean
        .iter()
        .flatten()
        .map(|f| f[0].hypot(f[1]))
        .fold(0.0, f64::max);
    let mut rgb = Vec::with_capacity(3 * g.pixels());
    let mut colored = 0;
    for f in &mean {
        match f {
            Some([x, y]) => {
                let hue = y.atan2(*x).to_degrees().rem_euclid(360.0);
                let sat = if max_magnitude > 0.0 {
                    x.hypot(*y) / max_magnitude
                } else {
                    0.0
                };
                rgb.extend_from_slice(&hsv_to_rgb(hue, sat, 1.0));
                colored += 1;
            }
            None => rgb.extend_from_slice(&[0, 0, 0]),
        }
    }
    Image {
        rgb,
        max_magnitude,
        colored,
    }
}

pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [u8; 3] {
    let c = val * sat;
    let h = hue / 60.0;
    let x = c * (1.0 - (h.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    let q = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(x: u32, y: u32, nx: f64, ny: f64) -> PredictionRow {
        PredictionRow {
            slice_index: 0,
            event_index: 0,
            t: 0.0,
            x,
            y,
            nx,
            ny,
            count: 1,
        }
    }

    #[test]
    fn primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(180.0, 1.0, 1.0), [0, 255, 255]);
        assert_eq!(hsv_to_rgb(33.0, 0.0, 1.0), [255, 255, 255]);
    }

    #[test]
    fn opposite_flows_get_complementary_colors() {
        let g = CameraGeometry::new(2, 1).unwrap();
        let img = render(&[row(0, 0, 5.0, 0.0), row(1, 0, -5.0, 0.0)], g);
        assert_eq!(&img.rgb[..3], &[255, 0, 0]);
        assert_eq!(&img.rgb[3..], &[0, 255, 255]);
    }

    #[test]
    fn scale_invariant_and_black_background() {
        let g = CameraGeometry::new(3, 3).unwrap();
        let rows = vec![
            row(0, 0, 1.0, 2.0),
            row(2, 1, -3.0, 0.5),
            row(1, 2, 0.2, -0.1),
        ];
        let doubled: Vec<_> = rows
            .iter()
            .map(|r| row(r.x, r.y, 2.0 * r.nx, 2.0 * r.ny))
            .collect();
        let (a, b) = (render(&rows, g), render(&doubled, g));
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(b.max_magnitude, 2.0 * a.max_magnitude);
        assert_eq!(a.colored, 3);
        assert_eq!(&a.rgb[3..6], &[0, 0, 0]);
        assert!(render(&[], g).rgb.iter().all(|&v| v == 0));
    }
}
