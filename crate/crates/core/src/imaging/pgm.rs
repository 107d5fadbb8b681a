//! Binary 8-bit PGM (P5) reading and writing.

use super::image::ImageGray;
use crate::error::{io_err, Result, SasrError};
use std::path::Path;

fn pgm_err(path: &Path, detail: impl Into<String>) -> SasrError {
    SasrError::Pgm {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Parses P5 bytes; `path` is only used in error messages.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ImageGray> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(pgm_err(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(pgm_err(path, "malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| pgm_err(path, "header value out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(pgm_err(path, format!("unsupported maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(pgm_err(path, "malformed header"));
    }
    pos += 1;
    let need = width * height;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(pgm_err(
            path,
            format!("truncated data: {} of {need} bytes", data.len()),
        ));
    }
    let pixels = data[..need]
        .iter()
        .map(|&b| (b as f64 / maxval as f64).min(1.0))
        .collect();
    ImageGray::new(height, width, pixels)
}

pub fn encode_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&p| (p * 255.0).round() as u8));
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_pgm(&bytes, path)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &ImageGray) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let img = ImageGray::from_fn(20, 17, |y, x| ((y * 31 + x * 7) % 97) as f64 / 96.0).unwrap();
        let back = decode_pgm(&encode_pgm(&img), Path::new("mem")).unwrap();
        assert_eq!(back.dims(), img.dims());
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
        }
    }

    #[test]
    fn black_round_trips_exactly() {
        let img = ImageGray::constant(16, 16, 0.0).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img), Path::new("mem")).unwrap(), img);
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# comment\n16 16\n255\n".to_vec();
        bytes.extend(vec![255u8; 256]);
        let img = decode_pgm(&bytes, Path::new("mem")).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 1.0));

        let err = decode_pgm(b"P6\n16 16\n255\n", Path::new("x.pgm")).unwrap_err();
        assert!(matches!(err, SasrError::Pgm { .. }));
        let mut short = b"P5 16 16 255\n".to_vec();
        short.extend(vec![0u8; 100]);
        assert!(matches!(
            decode_pgm(&short, Path::new("x.pgm")),
            Err(SasrError::Pgm { .. })
        ));
        assert!(decode_pgm(b"P5 16 x 255\n", Path::new("x.pgm")).is_err());
    }
}
