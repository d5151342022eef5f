//! In-memory rasters and binary Netpbm (P5/P6) encoding.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result, SCENE};

/// An 8-bit RGB raster stored row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(
                SCENE,
                format!("rgb buffer of {} bytes for {width}x{height}", data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, color: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    /// Fills the inclusive rectangle `[x0, x1] x [y0, y1]`, clipped to the image.
    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, color: [u8; 3]) {
        for y in y0..=y1.min(self.height.saturating_sub(1)) {
            for x in x0..=x1.min(self.width.saturating_sub(1)) {
                self.put(x, y, color);
            }
        }
    }

    /// Draws a rectangle outline `thickness` pixels wide, inside the inclusive box.
    pub fn draw_box(
        &mut self,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        thickness: usize,
        color: [u8; 3],
    ) {
        for y in y0..=y1.min(self.height - 1) {
            for x in x0..=x1.min(self.width - 1) {
                let edge = x < x0 + thickness
                    || x + thickness > x1
                    || y < y0 + thickness
                    || y + thickness > y1;
                if edge {
                    self.put(x, y, color);
                }
            }
        }
    }
}

/// An 8-bit single-channel raster stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                SCENE,
                format!("gray buffer of {} bytes for {width}x{height}", data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }
}

pub fn write_ppm<W: Write>(img: &RgbImage, mut w: W) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    w.flush()
}

pub fn write_pgm<W: Write>(img: &GrayImage, mut w: W) -> std::io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    w.flush()
}

pub fn read_ppm<R: Read>(r: R) -> Result<RgbImage> {
    let (width, height, data) = read_netpbm(r, b"P6", 3)?;
    RgbImage::from_raw(width, height, data)
}

pub fn read_pgm<R: Read>(r: R) -> Result<GrayImage> {
    let (width, height, data) = read_netpbm(r, b"P5", 1)?;
    GrayImage::from_raw(width, height, data)
}

pub fn save_ppm(img: &RgbImage, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ppm(img, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_pgm(img, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_ppm(path: &Path) -> Result<RgbImage> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ppm(BufReader::new(f)).map_err(|e| annotate(e, path))
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pgm(BufReader::new(f)).map_err(|e| annotate(e, path))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Data { module, msg } => Error::data(module, format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn read_netpbm<R: Read>(mut r: R, magic: &[u8; 2], channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::data(SCENE, format!("netpbm read failed: {e}")))?;
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::data(
            SCENE,
            format!("expected netpbm magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        *field = next_header_int(&bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(Error::data(SCENE, format!("unsupported netpbm maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let len = width * height * channels;
    if bytes.len() < pos + len {
        return Err(Error::data(
            SCENE,
            format!("truncated netpbm raster: need {len} bytes, have {}", bytes.len().saturating_sub(pos)),
        ));
    }
    Ok((width, height, bytes[pos..pos + len].to_vec()))
}

fn next_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::data(SCENE, "truncated netpbm header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::data(SCENE, "malformed netpbm header"))
}
