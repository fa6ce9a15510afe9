//! Row-major rasters and binary PGM I/O.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A 2-D raster stored in row-major (raster-scan) order.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Image {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with replicate-edge extension.
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(&self, other: &Image<U>, mut f: impl FnMut(T, U) -> V) -> Result<Image<V>> {
        self.check_same_dims(other)?;
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_dims<U>(&self, other: &Image<U>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    loop {
        let mut byte = [0u8];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut comment = Vec::new();
            r.read_until(b'\n', &mut comment)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(Error::Format("truncated PGM header".into()));
    }
    String::from_utf8(tok).map_err(|_| Error::Format("non-ASCII PGM header".into()))
}

fn parse_num(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Format(format!("bad PGM header field {tok:?}")))
}

/// Reads an 8-bit binary PGM (P5).
pub fn read_pgm<R: Read>(reader: R) -> Result<Image<u8>> {
    let mut r = BufReader::new(reader);
    if read_token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let width = parse_num(&read_token(&mut r)?)?;
    let height = parse_num(&read_token(&mut r)?)?;
    let maxval = parse_num(&read_token(&mut r)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}, expected 8-bit")));
    }
    let mut data = vec![0u8; width * height];
    r.read_exact(&mut data)
        .map_err(|_| Error::Format("truncated PGM raster".into()))?;
    Image::from_vec(width, height, data)
}

pub fn write_pgm8<W: Write>(mut w: W, img: &Image<u8>) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    Ok(())
}

/// Writes a 16-bit binary PGM (big-endian samples, maxval 65535).
pub fn write_pgm16<W: Write>(mut w: W, img: &Image<u16>) -> Result<()> {
    write!(w, "P5\n{} {}\n65535\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().flat_map(|v| v.to_be_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image<u8>> {
    read_pgm(std::fs::File::open(path)?)
}

pub fn save_pgm8(path: impl AsRef<Path>, img: &Image<u8>) -> Result<()> {
    write_pgm8(std::io::BufWriter::new(std::fs::File::create(path)?), img)
}

pub fn save_pgm16(path: impl AsRef<Path>, img: &Image<u16>) -> Result<()> {
    write_pgm16(std::io::BufWriter::new(std::fs::File::create(path)?), img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm8_round_trip_with_comment() {
        let img = Image::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        let mut buf = Vec::new();
        write_pgm8(&mut buf, &img).unwrap();
        let mut with_comment = b"P5\n# made here\n".to_vec();
        with_comment.extend_from_slice(&buf[3..]);
        assert_eq!(read_pgm(&buf[..]).unwrap(), img);
        assert_eq!(read_pgm(&with_comment[..]).unwrap(), img);
    }

    #[test]
    fn rejects_truncated_raster() {
        assert!(read_pgm(&b"P5 4 4 255\n\x01\x02"[..]).is_err());
        assert!(read_pgm(&b"P2 1 1 255\n1"[..]).is_err());
    }

    #[test]
    fn pgm16_is_big_endian() {
        let img = Image::from_vec(2, 1, vec![0x0102u16, 700]).unwrap();
        let mut buf = Vec::new();
        write_pgm16(&mut buf, &img).unwrap();
        assert!(buf.ends_with(&[1, 2, 2, 188]));
    }
}
