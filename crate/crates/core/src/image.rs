//! RGB image tensor and the binary pixmap format used for on-disk images.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// C×H×W image with C=3 and values in [0,1], stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Vec<f64>,
    height: usize,
    width: usize,
}

pub const CHANNELS: usize = 3;

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image { data: vec![0.0; CHANNELS * height * width], height, width }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image { data: vec![value; CHANNELS * height * width], height, width }
    }

    pub fn from_vec(data: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        if data.len() != CHANNELS * height * width {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}",
                data.len(),
                CHANNELS * height * width
            )));
        }
        Ok(Image { data, height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn is_finite_unit_range(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    /// Sum of squared pixel differences.
    pub fn squared_distance(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Mean squared error per pixel value.
    pub fn mean_squared_error(&self, other: &Image) -> f64 {
        self.squared_distance(other) / self.data.len() as f64
    }

    /// Writes a binary P6 pixmap (maxval 255, row-major RGB interleaved).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.num_pixels() * 3);
        for row in 0..self.height {
            for col in 0..self.width {
                for channel in 0..CHANNELS {
                    bytes.push(quantize(self.get(channel, row, col)));
                }
            }
        }
        w.write_all(&bytes)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
        self.write_ppm(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self> {
        let mut raw = Vec::new();
        r.read_to_end(&mut raw).map_err(|e| Error::io("read pixmap", e))?;
        parse_ppm(&raw)
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)
            .map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        parse_ppm(&raw).map_err(|e| match e {
            Error::InvalidArgument(detail) => {
                Error::MalformedFile { path: path.to_path_buf(), detail }
            }
            other => other,
        })
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn parse_ppm(raw: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    // header: magic, width, height, maxval as whitespace-separated fields
    while fields.len() < 4 {
        while pos < raw.len() && raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::invalid("truncated pixmap header"));
        }
        fields.push(&raw[start..pos]);
    }
    if fields[0] != b"P6" {
        return Err(Error::invalid("not a P6 pixmap"));
    }
    let width: usize = parse_ascii(fields[1])?;
    let height: usize = parse_ascii(fields[2])?;
    let maxval: usize = parse_ascii(fields[3])?;
    if maxval != 255 {
        return Err(Error::invalid(format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let expected = width * height * CHANNELS;
    let body = raw.get(pos..pos + expected).ok_or_else(|| Error::invalid("truncated pixel data"))?;
    let mut image = Image::new(height, width);
    let mut i = 0;
    for row in 0..height {
        for col in 0..width {
            for channel in 0..CHANNELS {
                image.set(channel, row, col, body[i] as f64 / 255.0);
                i += 1;
            }
        }
    }
    Ok(image)
}

fn parse_ascii(bytes: &[u8]) -> Result<usize> {
    std::str::from_utf8(bytes)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::invalid("bad pixmap header field"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_on_quantized_values() {
        let mut img = Image::filled(8, 8, 26.0 / 255.0);
        img.set(0, 3, 4, 1.0);
        img.set(2, 7, 0, 0.0);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        let back = Image::read_ppm(buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn write_is_deterministic() {
        let img = Image::filled(4, 4, 0.1);
        let mut a = Vec::new();
        let mut b = Vec::new();
        img.write_ppm(&mut a).unwrap();
        img.write_ppm(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_p6() {
        assert!(Image::read_ppm(&b"P3\n1 1\n255\n aaa"[..]).is_err());
    }

    #[test]
    fn squared_distance_matches_hand_value() {
        let a = Image::filled(1, 2, 0.5);
        let mut b = a.clone();
        b.set(0, 0, 0, 1.0);
        b.set(1, 0, 1, 0.0);
        assert!((a.squared_distance(&b) - 0.5).abs() < 1e-15);
    }
}
