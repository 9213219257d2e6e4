//! Binary PGM (P5) and PPM (P6) with maxval 255.
//!
//! Planes and images are scaled by 1/255 on load and quantized with
//! `floor(v * 255 + 0.5)` on save. Masks keep the class id in the byte.

use std::fs;
use std::path::Path;

use autolabel_core::threshold::quantize;
use autolabel_core::{Image, Mask, Plane};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Gray,
    Rgb,
}

impl Kind {
    fn magic(self) -> &'static [u8; 2] {
        match self {
            Kind::Gray => b"P5",
            Kind::Rgb => b"P6",
        }
    }

    fn samples(self) -> usize {
        match self {
            Kind::Gray => 1,
            Kind::Rgb => 3,
        }
    }
}

/// Decoded header plus raw samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raw {
    pub kind: Kind,
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// What a PNM file holds once scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Pnm {
    Gray(Plane),
    Rgb(Image),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PnmError {
    UnsupportedFormat(String),
    MalformedHeader(&'static str),
    UnsupportedMaxval(u64),
    Truncated { expected: usize, found: usize },
    WrongKind { expected: Kind },
    InvalidValue(&'static str),
}

impl std::fmt::Display for PnmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PnmError::UnsupportedFormat(magic) => write!(f, "unsupported format {magic:?} (expected P5 or P6)"),
            PnmError::MalformedHeader(what) => write!(f, "malformed header: {what}"),
            PnmError::UnsupportedMaxval(m) => write!(f, "unsupported maxval {m} (only 255)"),
            PnmError::Truncated { expected, found } => {
                write!(f, "truncated payload: expected {expected} bytes, found {found}")
            }
            PnmError::WrongKind { expected } => write!(
                f,
                "expected a {} file",
                if *expected == Kind::Gray { "P5" } else { "P6" }
            ),
            PnmError::InvalidValue(what) => write!(f, "invalid value: {what}"),
        }
    }
}

impl std::error::Error for PnmError {}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> std::result::Result<u64, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::MalformedHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PnmError::MalformedHeader(what))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Raw, PnmError> {
    let kind = match bytes.get(..2) {
        Some(b"P5") => Kind::Gray,
        Some(b"P6") => Kind::Rgb,
        Some(m) => return Err(PnmError::UnsupportedFormat(String::from_utf8_lossy(m).into_owned())),
        None => return Err(PnmError::UnsupportedFormat(String::from_utf8_lossy(bytes).into_owned())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(PnmError::MalformedHeader("missing whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::MalformedHeader("zero dimension"));
    }
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval(maxval));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PnmError::MalformedHeader("missing whitespace after maxval")),
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(kind.samples()))
        .ok_or(PnmError::MalformedHeader("dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(Raw {
        kind,
        width,
        height,
        data: payload[..expected].to_vec(),
    })
}

pub fn encode(raw: &Raw) -> Vec<u8> {
    let mut out = Vec::with_capacity(raw.data.len() + 20);
    out.extend_from_slice(raw.kind.magic());
    out.extend_from_slice(format!("\n{} {}\n255\n", raw.width, raw.height).as_bytes());
    out.extend_from_slice(&raw.data);
    out
}

fn scale(b: u8) -> f64 {
    f64::from(b) / 255.0
}

impl Raw {
    pub fn into_pnm(self) -> Pnm {
        let (h, w) = (self.height, self.width);
        match self.kind {
            Kind::Gray => Pnm::Gray(Plane::from_fn(h, w, |r, c| scale(self.data[r * w + c]))),
            Kind::Rgb => Pnm::Rgb(Image::from_fn(h, w, |r, c| {
                let i = 3 * (r * w + c);
                [scale(self.data[i]), scale(self.data[i + 1]), scale(self.data[i + 2])]
            })),
        }
    }

    pub fn from_plane(p: &Plane) -> Self {
        let (height, width) = p.dims();
        Raw {
            kind: Kind::Gray,
            width,
            height,
            data: p.as_slice().iter().map(|&v| quantize(v)).collect(),
        }
    }

    pub fn from_image(img: &Image) -> Self {
        let (height, width) = img.dims();
        let mut data = Vec::with_capacity(3 * width * height);
        for r in 0..height {
            for c in 0..width {
                data.extend(img.pixel(r, c).map(quantize));
            }
        }
        Raw {
            kind: Kind::Rgb,
            width,
            height,
            data,
        }
    }

    pub fn from_mask(m: &Mask) -> std::result::Result<Self, PnmError> {
        if m.as_slice().contains(&255) {
            return Err(PnmError::InvalidValue("mask class ids must be at most 254"));
        }
        let (height, width) = m.dims();
        Ok(Raw {
            kind: Kind::Gray,
            width,
            height,
            data: m.as_slice().to_vec(),
        })
    }
}

fn read(path: &Path) -> Result<Raw> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::pnm(path, e))
}

fn write(path: &Path, raw: &Raw) -> Result<()> {
    fs::write(path, encode(raw)).map_err(|e| Error::io(path, e))
}

pub fn load_pnm(path: &Path) -> Result<Pnm> {
    read(path).map(Raw::into_pnm)
}

pub fn load_image(path: &Path) -> Result<Image> {
    match load_pnm(path)? {
        Pnm::Rgb(img) => Ok(img),
        Pnm::Gray(_) => Err(Error::pnm(path, PnmError::WrongKind { expected: Kind::Rgb })),
    }
}

pub fn load_plane(path: &Path) -> Result<Plane> {
    match load_pnm(path)? {
        Pnm::Gray(p) => Ok(p),
        Pnm::Rgb(_) => Err(Error::pnm(path, PnmError::WrongKind { expected: Kind::Gray })),
    }
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let raw = read(path)?;
    if raw.kind != Kind::Gray {
        return Err(Error::pnm(path, PnmError::WrongKind { expected: Kind::Gray }));
    }
    Ok(Mask::new(raw.height, raw.width, raw.data)?)
}

pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    write(path, &Raw::from_image(img))
}

pub fn save_plane(p: &Plane, path: &Path) -> Result<()> {
    write(path, &Raw::from_plane(p))
}

pub fn save_mask(m: &Mask, path: &Path) -> Result<()> {
    write(path, &Raw::from_mask(m).map_err(|e| Error::pnm(path, e))?)
}
