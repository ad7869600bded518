//! Binary PGM (P5, maxval 255) reading and writing.

use super::GrayImage;
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    let mut buf = Vec::with_capacity(image.pixels.len() + 32);
    write!(buf, "P5\n{} {}\n255\n", image.size, image.size)?;
    buf.extend_from_slice(&image.pixels);
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if !bytes.starts_with(b"P5") {
        return Err("magic: not a binary PGM".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("header: missing field".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| "header: not ascii")?;
        *field = text.parse().map_err(|_| "header: bad number")?;
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(format!("maxval: expected 255, got {maxval}"));
    }
    if w != h {
        return Err(format!("size: expected square image, got {w}x{h}"));
    }
    // Single whitespace byte separates header from raster.
    pos += 1;
    let raster = bytes.get(pos..).ok_or("raster: truncated")?;
    if raster.len() != w * h {
        return Err(format!("raster: expected {} bytes, got {}", w * h, raster.len()));
    }
    Ok(GrayImage {
        size: w,
        pixels: raster.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bytes() {
        let dir = std::env::temp_dir().join(format!("fgwk-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.pgm");

        let img = GrayImage {
            size: 3,
            pixels: vec![0, 10, 255, 128, 9, 17, 200, 1, 2],
        };
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back, img);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_wrong_magic() {
        assert!(parse_pgm(b"P2\n2 2\n255\nxxxx").is_err());
    }
}
