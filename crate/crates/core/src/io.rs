//! File formats: the lossless `P-GRID` raster, PNG/PGM previews, CSV traces
//! and generator checkpoints.
//!
//! `P-GRID` is a one-line ASCII header `P-GRID <width> <height> <extent>\n`
//! followed by `width * height` little-endian `f64` values, row-major.
//!
//! Checkpoints are a text manifest followed by a little-endian `f64` payload:
//!
//! ```text
//! CTRECON-PARAMS 1
//! weights <count>
//! <dim> <dim> ...        (one line per tensor)
//! biases <count>
//! ...
//! alphas <count>
//! ...
//! end
//! ```
//!
//! The payload holds every tensor in manifest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::neural::{GeneratorParams, Tensor};
use crate::solvers::TraceRecord;

const GRID_MAGIC: &str = "P-GRID";
const CHECKPOINT_MAGIC: &str = "CTRECON-PARAMS 1";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Raw grid contents before interpretation as an image or sinogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub extent: f64,
    pub data: Vec<f64>,
}

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = format!("{GRID_MAGIC} {} {} {}\n", grid.width, grid.height, grid.extent).into_bytes();
    out.reserve(grid.data.len() * 8);
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `path` only labels errors.
pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<Grid> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| format_err(path, "header is not ASCII"))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let [magic, w, h, extent] = fields[..] else {
        return Err(format_err(path, format!("expected 4 header fields, got {header:?}")));
    };
    if magic != GRID_MAGIC {
        return Err(format_err(path, format!("bad magic {magic:?}")));
    }
    let dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| format_err(path, format!("dimension {s:?} is not a positive integer")))
    };
    let (width, height) = (dim(w)?, dim(h)?);
    let extent: f64 = extent
        .parse()
        .ok()
        .filter(|e: &f64| *e > 0.0 && e.is_finite())
        .ok_or_else(|| format_err(path, format!("extent {extent:?} is not positive")))?;
    let payload = &bytes[nl + 1..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| format_err(path, "dimensions overflow"))?;
    if payload.len() != n * 8 {
        return Err(format_err(
            path,
            format!("payload has {} bytes, header implies {}", payload.len(), n * 8),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Grid {
        width,
        height,
        extent,
        data,
    })
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(&encode_grid(grid))
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes, path)
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_grid(
        path,
        &Grid {
            width: image.width(),
            height: image.height(),
            extent: image.extent(),
            data: image.as_slice().to_vec(),
        },
    )
}

pub fn read_image(path: &Path) -> Result<Image> {
    let g = read_grid(path)?;
    Image::from_vec(g.width, g.height, g.data)
        .and_then(|i| i.with_extent(g.extent))
        .map_err(|e| format_err(path, e.to_string()))
}

/// Sinograms are stored with detectors along the width, angles down the
/// height and a nominal extent of 1.
pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    write_grid(
        path,
        &Grid {
            width: sino.num_detectors(),
            height: sino.num_angles(),
            extent: 1.0,
            data: sino.as_slice().to_vec(),
        },
    )
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let g = read_grid(path)?;
    Sinogram::from_vec(g.height, g.width, g.data).map_err(|e| format_err(path, e.to_string()))
}

fn quantize(image: &Image, range: Option<(f64, f64)>, levels: f64) -> impl Iterator<Item = f64> + '_ {
    let (lo, hi) = range.unwrap_or((image.min(), image.max()));
    let span = if hi > lo { hi - lo } else { 1.0 };
    image
        .as_slice()
        .iter()
        .map(move |&v| (((v - lo) / span).clamp(0.0, 1.0) * levels).round())
}

/// 16-bit greyscale PNG. Values map linearly from `range` (default: the
/// image's own min/max) onto the full scale.
pub fn write_png(path: &Path, image: &Image, range: Option<(f64, f64)>) -> Result<()> {
    let f = create(path)?;
    let mut enc = png::Encoder::new(f, image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let data: Vec<u8> = quantize(image, range, 65535.0)
        .flat_map(|q| (q as u16).to_be_bytes())
        .collect();
    let mut w = enc
        .write_header()
        .map_err(|e| format_err(path, e.to_string()))?;
    w.write_image_data(&data)
        .map_err(|e| format_err(path, e.to_string()))?;
    w.finish().map_err(|e| format_err(path, e.to_string()))
}

/// Binary 8-bit PGM (`P5`).
pub fn write_pgm(path: &Path, image: &Image, range: Option<(f64, f64)>) -> Result<()> {
    let mut f = create(path)?;
    let mut bytes = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(quantize(image, range, 255.0).map(|q| q as u8));
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => format_err(path, format!("{other:?}")),
    }
}

/// Header `t,psnr,ssim,fidelity,lagrangian`; missing metrics are empty.
pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|rec| rec.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn write_checkpoint(path: &Path, params: &GeneratorParams) -> Result<()> {
    let mut manifest = format!("{CHECKPOINT_MAGIC}\n");
    for (name, group) in [
        ("weights", &params.weights),
        ("biases", &params.biases),
        ("alphas", &params.alphas),
    ] {
        manifest.push_str(&format!("{name} {}\n", group.len()));
        for t in group {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            manifest.push_str(&dims.join(" "));
            manifest.push('\n');
        }
    }
    manifest.push_str("end\n");
    let mut bytes = manifest.into_bytes();
    for t in params.tensors() {
        for v in t.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = create(path)?;
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<GeneratorParams> {
    let mut r = open(path)?;
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<File>| -> Result<String> {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(format_err(path, "manifest ends early"));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut r)? != CHECKPOINT_MAGIC {
        return Err(format_err(path, "not a parameter checkpoint"));
    }
    let mut shapes: Vec<Vec<Vec<usize>>> = Vec::new();
    for name in ["weights", "biases", "alphas"] {
        let head = next_line(&mut r)?;
        let count = head
            .strip_prefix(name)
            .and_then(|c| c.trim().parse::<usize>().ok())
            .ok_or_else(|| format_err(path, format!("expected '{name} <count>', got {head:?}")))?;
        let mut group = Vec::with_capacity(count);
        for _ in 0..count {
            let dims = next_line(&mut r)?
                .split_ascii_whitespace()
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format_err(path, "bad tensor shape"))?;
            group.push(dims);
        }
        shapes.push(group);
    }
    if next_line(&mut r)? != "end" {
        return Err(format_err(path, "missing manifest terminator"));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    let total: usize = shapes.iter().flatten().map(|s| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(format_err(
            path,
            format!("payload has {} bytes, manifest implies {}", payload.len(), total * 8),
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    let mut groups = shapes.into_iter().map(|group| {
        group
            .into_iter()
            .map(|shape| {
                let n = shape.iter().product();
                Tensor::from_vec(&shape, values.by_ref().take(n).collect())
            })
            .collect::<Result<Vec<_>>>()
    });
    let weights = groups.next().expect("three groups")?;
    let biases = groups.next().expect("three groups")?;
    let alphas = groups.next().expect("three groups")?;
    let params = GeneratorParams {
        weights,
        biases,
        alphas,
    };
    if !params.is_finite() {
        return Err(format_err(path, "non-finite parameter values"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_rejects_bad_dims() {
        let p = Path::new("mem");
        assert!(decode_grid(b"P-GRID -2 3 1\n", p).is_err());
        assert!(decode_grid(b"P-GRID 0 3 1\n", p).is_err());
        assert!(decode_grid(b"P-GRID 1 1 1\n", p).is_err());
        assert!(decode_grid(b"P-GRIX 1 1 1\n\0\0\0\0\0\0\0\0", p).is_err());
        let ok = decode_grid(b"P-GRID 1 1 2.5\n\0\0\0\0\0\0\xf0\x3f", p).unwrap();
        assert_eq!(ok.data, vec![1.0]);
        assert_eq!(ok.extent, 2.5);
    }
}
