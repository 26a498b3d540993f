//! Binary PPM (P6) colour images and PGM (P5) masks, maxval 255.

use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::image::{Mask, RgbImage};

pub fn ppm_bytes(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn pgm_bytes(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// Splits a netpbm header into its magic and three numbers, skipping
/// comments; returns the payload offset.
fn header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            path,
            format!("expected {} header", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut nums = [0usize; 3];
    for n in &mut nums {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *n = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed image header"))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(path, "malformed image header"));
    }
    if nums[2] != 255 {
        return Err(Error::format(path, format!("unsupported maxval {}", nums[2])));
    }
    Ok((nums[0], nums[1], pos + 1))
}

pub fn parse_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let (w, h, off) = header(bytes, b"P6", path)?;
    let payload = &bytes[off..];
    if payload.len() != w * h * 3 {
        return Err(Error::format(
            path,
            format!("expected {} pixel bytes, found {}", w * h * 3, payload.len()),
        ));
    }
    RgbImage::from_u8(w, h, payload)
}

pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Mask> {
    let (w, h, off) = header(bytes, b"P5", path)?;
    let payload = &bytes[off..];
    if payload.len() != w * h {
        return Err(Error::format(
            path,
            format!("expected {} pixel bytes, found {}", w * h, payload.len()),
        ));
    }
    Mask::from_raw(w, h, payload.iter().map(|b| *b != 0).collect())
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_file(path, &ppm_bytes(img))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    parse_ppm(&read_file(path)?, path)
}

pub fn write_pgm(path: &Path, mask: &Mask) -> Result<()> {
    write_file(path, &pgm_bytes(mask))
}

pub fn read_pgm(path: &Path) -> Result<Mask> {
    parse_pgm(&read_file(path)?, path)
}

/// Converts a PPM or PGM file to PNG.
pub fn convert_to_png(input: &Path, output: &Path) -> Result<()> {
    let bytes = read_file(input)?;
    let result = if bytes.starts_with(b"P6") {
        let img = parse_ppm(&bytes, input)?;
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8()).map(|b| b.save(output))
    } else if bytes.starts_with(b"P5") {
        let m = parse_pgm(&bytes, input)?;
        let data = m.data().iter().map(|b| if *b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(m.width() as u32, m.height() as u32, data).map(|b| b.save(output))
    } else {
        return Err(Error::format(input, "expected a P6 or P5 image"));
    };
    match result {
        Some(Ok(())) => Ok(()),
        Some(Err(e)) => Err(Error::io(output, std::io::Error::other(e.to_string()))),
        None => Err(Error::format(input, "image buffer size mismatch")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let mut img = RgbImage::new(3, 2);
        img.set(1, 1, [1.0, 0.5, 0.25]);
        let bytes = ppm_bytes(&img);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = parse_ppm(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ppm_bytes(&back), bytes);
        let mut commented = b"P6\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&bytes[11..]);
        assert_eq!(parse_ppm(&commented, Path::new("mem")).unwrap(), back);
    }

    #[test]
    fn pgm_round_trip() {
        let mut m = Mask::new(4, 3);
        m.set(0, 0, true);
        m.set(3, 2, true);
        let b = pgm_bytes(&m);
        assert_eq!(parse_pgm(&b, Path::new("mem")).unwrap(), m);
    }

    #[test]
    fn bad_payload_length() {
        assert!(parse_ppm(b"P6\n2 2\n255\n\x00\x00", Path::new("x.ppm"))
            .unwrap_err()
            .is_input_error());
        assert!(parse_pgm(b"P6\n1 1\n255\n\x00", Path::new("x.pgm")).is_err());
    }
}
