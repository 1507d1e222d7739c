//! Binary PGM (P5, maxval 255) read/write for grayscale images in [0, 1].

use std::fs;
use std::path::Path;

use emdm::numkit::Tensor;

use crate::{CliError, CliResult};

/// Quantize `[0, 1]` values to bytes by rounding; out-of-range values clip.
pub fn write_pgm(path: &Path, image: &Tensor, height: usize, width: usize) -> CliResult<()> {
    if image.len() != height * width {
        return Err(CliError::Other(format!(
            "image has {} values, expected {}x{}",
            image.len(),
            height,
            width
        )));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    bytes.extend(
        image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> CliResult<(Tensor, usize, usize)> {
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|msg| CliError::Other(format!("{}: {}", path.display(), msg)))
}

fn parse_pgm(bytes: &[u8]) -> Result<(Tensor, usize, usize), String> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".to_string());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(bytes)? != "P5" {
        return Err("not a P5 file".to_string());
    }
    let width: usize = token(bytes)?.parse().map_err(|_| "bad width")?;
    let height: usize = token(bytes)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = token(bytes)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {}", maxval));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height;
    if bytes.len() < pos + need {
        return Err("truncated pixel data".to_string());
    }
    let data: Vec<f64> = bytes[pos..pos + need]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok((Tensor::from_vec(data), height, width))
}

/// Horizontal strip of equally-sized panels separated by mid-gray columns.
pub fn montage_row(panels: &[&Tensor], size: usize) -> Tensor {
    let sep = 1usize;
    let width = panels.len() * size + (panels.len().saturating_sub(1)) * sep;
    let mut out = vec![0.5; size * width];
    for (p, panel) in panels.iter().enumerate() {
        let x0 = p * (size + sep);
        for r in 0..size {
            for c in 0..size {
                out[r * width + x0 + c] = panel.data()[r * size + c];
            }
        }
    }
    Tensor::from_vec(out)
}

/// Stack rows (each `height` tall and `width` wide) with separator lines.
pub fn montage_stack(rows: &[Tensor], height: usize, width: usize) -> (Tensor, usize) {
    let sep = 1usize;
    let total_h = rows.len() * height + rows.len().saturating_sub(1) * sep;
    let mut out = vec![0.5; total_h * width];
    for (i, row) in rows.iter().enumerate() {
        let y0 = i * (height + sep);
        out[y0 * width..(y0 + height) * width].copy_from_slice(row.data());
    }
    (Tensor::from_vec(out), total_h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Tensor::from_vec((0..64).map(|i| i as f64 / 63.0).collect());
        write_pgm(&path, &img, 8, 8).unwrap();
        let (back, h, w) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (8, 8));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_non_p5() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n0 0 0 0").unwrap();
        assert!(read_pgm(&path).is_err());
    }
}
