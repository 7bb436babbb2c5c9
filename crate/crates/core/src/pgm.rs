//! Netpbm graymap (PGM) input and output.
//!
//! Pixel centres sit on mesh nodes. On the unit square a `W x H` image is
//! the nodal grid of a `(W-1) x (H-1)` mesh; read as periodic it is one
//! period of a `W x H` torus. A torus is written with its first column and
//! row repeated at the end, so the image shows the closed period.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DomainKind, DomainSpec, GridFunction};

/// Header plus samples, before mapping to a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Row-major, top row first.
    pub pixels: Vec<u32>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|c| *c != b'\n' && *c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_space();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(|c| !c.is_ascii_whitespace() && *c != b'#') {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> std::result::Result<u32, String> {
        let t = self.token().ok_or_else(|| format!("malformed header: missing {what}"))?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| format!("malformed header: {what} {:?} is not a non-negative integer", String::from_utf8_lossy(t)))
    }
}

/// Parses a P2 or P5 graymap.
pub fn parse_pgm(data: &[u8]) -> std::result::Result<Graymap, String> {
    let mut c = Cursor { data, pos: 0 };
    let binary = match c.token() {
        Some(b"P2") => false,
        Some(b"P5") => true,
        Some(t) => return Err(format!("malformed header: magic {:?} is not P2 or P5", String::from_utf8_lossy(t))),
        None => return Err("malformed header: empty file".into()),
    };
    let width = c.number("width")? as usize;
    let height = c.number("height")? as usize;
    let maxval = c.number("maxval")?;
    if width < 2 || height < 2 {
        return Err(format!("image is {width}x{height}; both dimensions must be at least 2"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("malformed header: maxval {maxval} outside 1..=65535"));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if !c.data.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err("malformed header: no whitespace after maxval".into());
        }
        let raster = &data[c.pos + 1..];
        let bytes = if maxval < 256 { 1 } else { 2 };
        if raster.len() < count * bytes {
            return Err("unexpected end of pixel data".into());
        }
        for i in 0..count {
            pixels.push(if bytes == 1 {
                raster[i] as u32
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
            });
        }
    } else {
        for _ in 0..count {
            let v = match c.token() {
                None => return Err("unexpected end of pixel data".into()),
                Some(t) => std::str::from_utf8(t).ok().and_then(|s| s.parse::<u32>().ok()),
            };
            pixels.push(v.ok_or("malformed pixel value")?);
        }
    }
    if let Some(v) = pixels.iter().find(|v| **v > maxval) {
        return Err(format!("pixel value {v} exceeds maxval {maxval}"));
    }
    Ok(Graymap { width, height, maxval, pixels })
}

impl Graymap {
    /// Nodal grid function scaled by `1/maxval`. Row `y = 0` of the mesh is
    /// the bottom image row.
    pub fn to_grid(&self, periodic: bool) -> Result<GridFunction> {
        let (w, h) = (self.width, self.height);
        let d = if periodic {
            DomainSpec::new(DomainKind::PeriodicTorus, w, h)?
        } else {
            DomainSpec::new(DomainKind::UnitSquare, w - 1, h - 1)?
        };
        let s = 1.0 / self.maxval as f64;
        let mut v = Vec::with_capacity(w * h);
        for l in 0..h {
            let row = &self.pixels[(h - 1 - l) * w..(h - l) * w];
            v.extend(row.iter().map(|p| *p as f64 * s));
        }
        GridFunction::new(d, v)
    }

    /// Quantizes `u`: clamp to `[0, 1]`, scale, round half to even.
    pub fn from_grid(u: &GridFunction, maxval: u32) -> Result<Self> {
        if maxval == 0 || maxval > 65535 {
            return Err(Error::InvalidParam(format!("maxval {maxval} outside 1..=65535")));
        }
        let d = u.domain();
        let (nx, ny) = (d.nodes_x(), d.nodes_y());
        // the torus repeats its seam column and row
        let (w, h) = if d.is_periodic() { (nx + 1, ny + 1) } else { (nx, ny) };
        let mut pixels = Vec::with_capacity(w * h);
        for r in 0..h {
            let l = (h - 1 - r) % ny;
            for c in 0..w {
                let v = u.values()[l * nx + c % nx].clamp(0.0, 1.0);
                pixels.push((v * maxval as f64).round_ties_even() as u32);
            }
        }
        Ok(Graymap { width: w, height: h, maxval, pixels })
    }

    /// Binary P5 encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        for p in &self.pixels {
            if self.maxval < 256 {
                out.push(*p as u8);
            } else {
                out.extend_from_slice(&(*p as u16).to_be_bytes());
            }
        }
        out
    }
}

/// Reads a P2/P5 image as a grid function on the unit square, or on the
/// torus when `periodic`.
pub fn read_pgm(path: &Path, periodic: bool) -> Result<GridFunction> {
    let data = fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
    let g = parse_pgm(&data).map_err(|msg| Error::Pgm { path: path.into(), msg })?;
    g.to_grid(periodic)
}

/// Writes `u` as a P5 image with the given `maxval`.
pub fn write_pgm(u: &GridFunction, path: &Path, maxval: u32) -> Result<()> {
    let bytes = Graymap::from_grid(u, maxval)?.encode();
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so a failed write leaves no partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io { path: path.into(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::InvalidParam(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = res.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(io(e));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_two_by_two() {
        let g = parse_pgm(b"P2\n# tiny\n2 2\n255\n0 255\n255 0\n").unwrap();
        let u = g.to_grid(false).unwrap();
        assert_eq!((u.domain().n1(), u.domain().n2()), (1, 1));
        assert_eq!(u.values(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn binary_matches_ascii() {
        let a = parse_pgm(b"P2 3 2 7 0 1 2\n3 4 7").unwrap();
        let b = parse_pgm(b"P5\n3 2\n7\n\x00\x01\x02\x03\x04\x07").unwrap();
        assert_eq!(a, b);
        let wide = parse_pgm(b"P5 2 2 1000\n\x00\x00\x03\xe8\x01\xf4\x00\x01").unwrap();
        assert_eq!(wide.pixels, vec![0, 1000, 500, 1]);
    }

    #[test]
    fn distinct_diagnostics() {
        let e = |d: &[u8]| parse_pgm(d).unwrap_err();
        assert!(e(b"P6 2 2 255\n").contains("magic"));
        assert!(e(b"P2 2").contains("missing height"));
        assert!(e(b"P2 1 4 255 0 0 0 0").contains("at least 2"));
        assert!(e(b"P2 2 2 70000").contains("maxval"));
        assert_eq!(e(b"P2 2 2 255 0 1 2"), "unexpected end of pixel data");
        assert_eq!(e(b"P5 2 2 255\n\x00\x01\x02"), "unexpected end of pixel data");
        assert!(e(b"P2 2 2 3 0 1 2 9").contains("exceeds"));
        assert!(e(b"").contains("empty"));
    }

    #[test]
    fn quantization_round_trip() {
        let d = DomainSpec::square(5, 3);
        let u = GridFunction::from_fn(d, |x, y| 1.4 * x - 0.2 + 0.3 * y).unwrap();
        let g = Graymap::from_grid(&u, 255).unwrap();
        let back = parse_pgm(&g.encode()).unwrap().to_grid(false).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!((a.clamp(0.0, 1.0) - b).abs() <= 0.5 / 255.0 + 1e-15);
        }
        // half-to-even: 0.5 and 1.5 quanta
        let v = GridFunction::new(DomainSpec::square(1, 1), vec![0.5 / 255.0, 1.5 / 255.0, 0.0, 1.0]).unwrap();
        assert_eq!(Graymap::from_grid(&v, 255).unwrap().pixels, vec![0, 255, 0, 2]);
    }

    #[test]
    fn torus_is_unrolled() {
        let d = DomainSpec::torus(3, 2);
        let u = GridFunction::new(d, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let g = Graymap::from_grid(&u, 5).unwrap();
        assert_eq!((g.width, g.height), (4, 3));
        assert_eq!(g.pixels, vec![0, 1, 2, 0, 3, 4, 5, 3, 0, 1, 2, 0]);
        // reading the unrolled image back as a square keeps every node
        let sq = g.to_grid(false).unwrap();
        assert_eq!((sq.domain().n1(), sq.domain().n2()), (3, 2));
    }
}
