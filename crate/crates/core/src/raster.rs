//! Grid types and their on-disk formats.
//!
//! Probability maps are stored as CEBP (an ASCII header followed by raw
//! little-endian `f32` samples) or as binary PGM. Label maps are always
//! 16-bit PGM; signature rasters are 8-bit PGM with values 0 or 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CebError, Result};

/// Per-pixel foreground probabilities, row-major, top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CebError::Format(format!(
                "probability map must have non-zero size, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(CebError::Format(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(CebError::Range(format!(
                "probability {v} at index {i} is outside [0,1]"
            )));
        }
        Ok(ProbMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> f32 {
        self.values[idx]
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pixels with probability at or above `threshold`.
    pub fn foreground(&self, threshold: f32) -> Vec<bool> {
        self.values.iter().map(|&v| v >= threshold).collect()
    }
}

/// Instance ids per pixel; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CebError::Format(format!(
                "label map must have non-zero size, got {width}x{height}"
            )));
        }
        if labels.len() != width * height {
            return Err(CebError::Format(format!(
                "expected {} labels for {width}x{height}, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(LabelMap {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        LabelMap {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Sorted distinct positive ids.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Pixel index lists per positive id, ascending by id.
    pub fn instances(&self) -> Vec<(u32, Vec<usize>)> {
        let mut map: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                map.entry(l).or_default().push(i);
            }
        }
        map.into_iter().collect()
    }
}

/// Square binary canvas holding a boundary signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryRaster {
    side: usize,
    bits: Vec<u8>,
}

impl BinaryRaster {
    pub fn new(side: usize) -> Self {
        BinaryRaster {
            side,
            bits: vec![0; side * side],
        }
    }

    pub fn from_bits(side: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != side * side {
            return Err(CebError::Format(format!(
                "raster of side {side} needs {} bits, got {}",
                side * side,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(CebError::Format("raster bits must be 0 or 1".into()));
        }
        Ok(BinaryRaster { side, bits })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.side + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.side + x] = 1;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}

/// Decoded binary PGM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(CebError::Format("truncated header".into()));
    }
    Ok(&data[start..*pos])
}

fn parse_dim(tok: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| CebError::Format(format!("bad {what} in header")))
}

/// Parses a binary (P5) PGM. Samples wider than 8 bits are big-endian.
pub fn decode_pgm(data: &[u8]) -> Result<Pgm> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos)?;
    if magic != b"P5" {
        return Err(CebError::Format("not a binary PGM (P5)".into()));
    }
    let width = parse_dim(next_token(data, &mut pos)?, "width")?;
    let height = parse_dim(next_token(data, &mut pos)?, "height")?;
    let maxval = parse_dim(next_token(data, &mut pos)?, "maxval")?;
    if width == 0 || height == 0 {
        return Err(CebError::Format(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(CebError::Format(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(CebError::Format("missing raster data".into()));
    }
    pos += 1;
    let n = width * height;
    let body = &data[pos..];
    let samples: Vec<u16> = if maxval < 256 {
        if body.len() < n {
            return Err(CebError::Format("truncated raster".into()));
        }
        body[..n].iter().map(|&b| b as u16).collect()
    } else {
        if body.len() < 2 * n {
            return Err(CebError::Format("truncated raster".into()));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s as usize > maxval) {
        return Err(CebError::Format(format!(
            "sample {s} exceeds maxval {maxval}"
        )));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval < 256 {
        out.extend(pgm.samples.iter().map(|&s| s as u8));
    } else {
        for &s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CebError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CebError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CebError::io(path, e))
}

pub fn decode_cebp(data: &[u8]) -> Result<ProbMap> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos)?;
    if magic != b"CEBP" {
        return Err(CebError::Format("missing CEBP magic".into()));
    }
    let width = parse_dim(next_token(data, &mut pos)?, "width")?;
    let height = parse_dim(next_token(data, &mut pos)?, "height")?;
    if width == 0 || height == 0 {
        return Err(CebError::Format(format!("zero dimension {width}x{height}")));
    }
    if pos >= data.len() || data[pos] != b'\n' {
        return Err(CebError::Format(
            "CEBP header must end with a newline".into(),
        ));
    }
    pos += 1;
    let n = width * height;
    let body = &data[pos..];
    if body.len() != 4 * n {
        return Err(CebError::Format(format!(
            "expected {} payload bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ProbMap::new(width, height, values)
}

pub fn encode_cebp(map: &ProbMap) -> Vec<u8> {
    let mut out = format!("CEBP {} {}\n", map.width, map.height).into_bytes();
    out.reserve(4 * map.values.len());
    for v in &map.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads a probability map in CEBP or binary PGM form, sniffing the magic.
pub fn read_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    let path = path.as_ref();
    let data = read_bytes(path)?;
    if data.starts_with(b"CEBP") {
        decode_cebp(&data)
    } else if data.starts_with(b"P5") {
        let pgm = decode_pgm(&data)?;
        let scale = pgm.maxval as f32;
        let values = pgm.samples.iter().map(|&s| s as f32 / scale).collect();
        ProbMap::new(pgm.width, pgm.height, values)
    } else {
        Err(CebError::Format(format!(
            "{}: unrecognized probability map format",
            path.display()
        )))
    }
}

pub fn write_probmap(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_cebp(map))
}

/// Writes a probability map as 16-bit PGM (lossy: values are rounded to 1/65535).
pub fn write_probmap_pgm(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    let pgm = Pgm {
        width: map.width,
        height: map.height,
        maxval: 65535,
        samples: map
            .values
            .iter()
            .map(|&v| (v as f64 * 65535.0).round() as u16)
            .collect(),
    };
    write_bytes(path.as_ref(), &encode_pgm(&pgm))
}

pub fn read_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let pgm = decode_pgm(&read_bytes(path)?)?;
    if pgm.maxval < 256 {
        return Err(CebError::Format(format!(
            "{}: label maps must be 16-bit PGM (maxval {} found)",
            path.display(),
            pgm.maxval
        )));
    }
    LabelMap::new(
        pgm.width,
        pgm.height,
        pgm.samples.iter().map(|&s| s as u32).collect(),
    )
}

pub fn write_labelmap(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    if let Some(&l) = map.labels.iter().find(|&&l| l > 65535) {
        return Err(CebError::Range(format!(
            "label id {l} does not fit a 16-bit PGM"
        )));
    }
    let pgm = Pgm {
        width: map.width,
        height: map.height,
        maxval: 65535,
        samples: map.labels.iter().map(|&l| l as u16).collect(),
    };
    write_bytes(path.as_ref(), &encode_pgm(&pgm))
}

pub fn write_raster(raster: &BinaryRaster, path: impl AsRef<Path>) -> Result<()> {
    let pgm = Pgm {
        width: raster.side,
        height: raster.side,
        maxval: 255,
        samples: raster
            .bits
            .iter()
            .map(|&b| if b != 0 { 255 } else { 0 })
            .collect(),
    };
    write_bytes(path.as_ref(), &encode_pgm(&pgm))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<BinaryRaster> {
    let path = path.as_ref();
    let pgm = decode_pgm(&read_bytes(path)?)?;
    if pgm.width != pgm.height {
        return Err(CebError::Format(format!(
            "{}: signature raster must be square",
            path.display()
        )));
    }
    let bits = pgm
        .samples
        .iter()
        .map(|&s| match s {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(CebError::Format(format!(
                "{}: signature sample {other} is not 0 or 255",
                path.display()
            ))),
        })
        .collect::<Result<Vec<u8>>>()?;
    BinaryRaster::from_bits(pgm.width, bits)
}
