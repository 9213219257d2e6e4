//! Float plane stacks for the `guide` command.
//!
//! Binary layout, little endian: `b"GFPL"`, then `u32` count, height and
//! width, then `count * height * width` `f64` samples, plane-major and
//! row-major. A P5 file is also accepted as input; it is read as a
//! two-class probability map whose foreground is the scaled byte.

use std::fs;
use std::path::Path;

use autolabel_core::Plane;

use crate::error::{Error, Result};
use crate::pnm;

pub const MAGIC: &[u8; 4] = b"GFPL";

pub fn encode(planes: &[Plane]) -> Result<Vec<u8>> {
    let Some(first) = planes.first() else {
        return Err(Error::Invalid("no planes to write".into()));
    };
    let (h, w) = first.dims();
    if planes.iter().any(|p| p.dims() != (h, w)) {
        return Err(Error::Invalid("planes differ in size".into()));
    }
    let mut out = Vec::with_capacity(16 + 8 * planes.len() * h * w);
    out.extend_from_slice(MAGIC);
    for n in [planes.len(), h, w] {
        let n = u32::try_from(n).map_err(|_| Error::Invalid("plane stack too large".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
    }
    for p in planes {
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<Plane>, String> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err("not a GFPL file".into());
    }
    let word = |i: usize| -> usize {
        let b: [u8; 4] = bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes");
        u32::from_le_bytes(b) as usize
    };
    if bytes.len() < 16 {
        return Err("truncated header".into());
    }
    let (n, h, w) = (word(0), word(1), word(2));
    if n == 0 || h == 0 || w == 0 {
        return Err("empty plane stack".into());
    }
    let len = n
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .and_then(|x| x.checked_mul(8))
        .ok_or("plane stack too large")?;
    let body = &bytes[16..];
    if body.len() != len {
        return Err(format!("expected {len} payload bytes, found {}", body.len()));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite sample".into());
    }
    values
        .chunks_exact(h * w)
        .map(|c| Plane::new(h, w, c.to_vec()).map_err(|e| e.to_string()))
        .collect()
}

/// GFPL stack, or a P5 foreground probability expanded to `[1 - p, p]`.
pub fn load(path: &Path) -> Result<Vec<Plane>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        let fg = pnm::load_plane(path)?;
        return Ok(vec![fg.map(|p| 1.0 - p), fg]);
    }
    decode(&bytes).map_err(|m| Error::Invalid(format!("{}: {m}", path.display())))
}

/// `.pgm` paths get the last plane quantized; anything else gets GFPL.
pub fn save(planes: &[Plane], path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let last = planes
            .last()
            .ok_or_else(|| Error::Invalid("no planes to write".into()))?;
        return pnm::save_plane(last, path);
    }
    fs::write(path, encode(planes)?).map_err(|e| Error::io(path, e))
}
