//! Minimal PGM (portable graymap) I/O for image matrices and weight maps.
//!
//! Reading accepts binary `P5` and ascii `P2` with `#` comments in the
//! header and maxval up to 65535 (two-byte samples are big-endian, per the
//! format). Writing always produces binary `P5` with a fixed header layout,
//! so output bytes are identical across platforms and runs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageMatrix;

/// Header/raster scanner over the raw file bytes.
struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Scanner { bytes, pos: 0 }
    }

    /// Skip whitespace and `#`-to-end-of-line comments.
    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self) -> Option<&'a [u8]> {
        self.skip_filler();
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn next_number(&mut self, what: &str, path: &Path) -> Result<u32> {
        let token = self
            .next_token()
            .ok_or_else(|| Error::format(path, format!("header ended before {what}")))?;
        std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::format(
                    path,
                    format!("{what} is not an unsigned integer: {:?}", String::from_utf8_lossy(token)),
                )
            })
    }
}

/// Read a `P5` or `P2` graymap and scale intensities by its maxval into
/// `[0, 1]`, preserving the row-major raster.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImageMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut scan = Scanner::new(&bytes);

    let magic = scan
        .next_token()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::format(
                path,
                format!("unsupported magic {:?} (expected P5 or P2)", String::from_utf8_lossy(other)),
            ));
        }
    };

    let width = scan.next_number("width", path)? as usize;
    let height = scan.next_number("height", path)? as usize;
    let maxval = scan.next_number("maxval", path)?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, format!("degenerate size {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("maxval {maxval} outside 1..=65535")));
    }

    let n = width * height;
    let mut values = Vec::with_capacity(n);
    if binary {
        // Single whitespace byte separates the maxval from the raster.
        if scan.pos >= bytes.len() || !bytes[scan.pos].is_ascii_whitespace() {
            return Err(Error::format(path, "missing raster separator after maxval"));
        }
        scan.pos += 1;
        let sample_bytes = if maxval > 255 { 2 } else { 1 };
        let raster = &bytes[scan.pos..];
        if raster.len() < n * sample_bytes {
            return Err(Error::format(
                path,
                format!("raster truncated: need {} bytes, have {}", n * sample_bytes, raster.len()),
            ));
        }
        for k in 0..n {
            let v = if sample_bytes == 2 {
                u32::from(raster[2 * k]) << 8 | u32::from(raster[2 * k + 1])
            } else {
                u32::from(raster[k])
            };
            values.push(v);
        }
    } else {
        for k in 0..n {
            let v = scan
                .next_token()
                .ok_or_else(|| Error::format(path, format!("raster truncated at value {k} of {n}")))
                .and_then(|t| {
                    std::str::from_utf8(t)
                        .ok()
                        .and_then(|s| s.parse::<u32>().ok())
                        .ok_or_else(|| {
                            Error::format(
                                path,
                                format!("raster value {k} is not an unsigned integer"),
                            )
                        })
                })?;
            values.push(v);
        }
    }

    if let Some(&v) = values.iter().find(|&&v| v > maxval) {
        return Err(Error::format(path, format!("sample value {v} exceeds maxval {maxval}")));
    }

    let scaled: Vec<f64> = values.iter().map(|&v| f64::from(v) / f64::from(maxval)).collect();
    ImageMatrix::from_vec_row_major(height, width, &scaled)
}

/// Write a binary `P5` graymap, quantizing each intensity by
/// `round(v * maxval)`. `maxval` must be 255 (one byte per sample) or 65535
/// (two bytes, big-endian). The header is exactly
/// `"P5\n<width> <height>\n<maxval>\n"`, making output byte-exact for a
/// given image.
pub fn save_pgm(img: &ImageMatrix, path: impl AsRef<Path>, maxval: u32) -> Result<()> {
    let path = path.as_ref();
    if maxval != 255 && maxval != 65535 {
        return Err(Error::InvalidParameter(format!(
            "save_pgm supports maxval 255 or 65535, got {maxval}"
        )));
    }
    let (rows, cols) = img.shape();
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    for i in 0..rows {
        for j in 0..cols {
            let q = (img.get(i, j) * f64::from(maxval)).round() as u32;
            if maxval > 255 {
                out.push((q >> 8) as u8);
                out.push((q & 0xff) as u8);
            } else {
                out.push(q as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    #[test]
    fn ascii_p2_decodes_with_comments() {
        let (_dir, path) = tmp("a.pgm");
        fs::write(&path, "P2\n# a comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        let img = load_pgm(&path).unwrap();
        assert_eq!(img.shape(), (2, 2));
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(0, 1), 1.0);
        assert_eq!(img.get(1, 0), 1.0);
        assert_eq!(img.get(1, 1), 0.0);
    }

    #[test]
    fn binary_p5_sixteen_bit_decodes_big_endian() {
        let (_dir, path) = tmp("wide.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x00, 0x00, 0xff, 0xff]);
        fs::write(&path, bytes).unwrap();
        let img = load_pgm(&path).unwrap();
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(0, 1), 1.0);
    }

    #[test]
    fn rejects_bad_magic_and_bad_values() {
        let (_dir, path) = tmp("bad.pgm");
        fs::write(&path, "P7\n2 2\n255\n0 0 0 0\n").unwrap();
        let err = load_pgm(&path).unwrap_err();
        assert!(err.to_string().contains("P7"), "{err}");

        fs::write(&path, "P2\n1 1\n100\n101\n").unwrap();
        let err = load_pgm(&path).unwrap_err();
        assert!(err.to_string().contains("exceeds maxval"), "{err}");

        fs::write(&path, "P5\n4 4\n255\nxy").unwrap();
        let err = load_pgm(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_pgm(dir.path().join("nope.pgm")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn save_header_and_zero_payload_are_exact() {
        let (_dir, path) = tmp("zeros.pgm");
        let img = ImageMatrix::zeros(2, 3);
        save_pgm(&img, &path, 255).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 6);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn save_rejects_other_maxvals() {
        let (_dir, path) = tmp("x.pgm");
        let img = ImageMatrix::zeros(1, 1);
        assert!(save_pgm(&img, &path, 1000).is_err());
    }

    #[test]
    fn round_trip_quantization_bounds() {
        let img = ImageMatrix::from_fn_clamped(5, 4, |i, j| {
            ((i * 4 + j) as f64 / 19.0).powf(1.3)
        });

        let (_dir, path) = tmp("rt8.pgm");
        save_pgm(&img, &path, 255).unwrap();
        let back = load_pgm(&path).unwrap();
        for (a, b) in img.to_vec_row_major().iter().zip(back.to_vec_row_major()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }

        let (_dir, path) = tmp("rt16.pgm");
        save_pgm(&img, &path, 65535).unwrap();
        let back = load_pgm(&path).unwrap();
        for (a, b) in img.to_vec_row_major().iter().zip(back.to_vec_row_major()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
    }

    #[test]
    fn save_is_deterministic() {
        let img = ImageMatrix::from_fn_clamped(3, 3, |i, j| (i as f64 * 0.31 + j as f64 * 0.17).fract());
        let (_dir, a) = tmp("a.pgm");
        let (_dir2, b) = tmp("b.pgm");
        save_pgm(&img, &a, 255).unwrap();
        save_pgm(&img, &b, 255).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}
