//! Dataset generation and flat CSV I/O.
//!
//! Clean 2-D sets are written as one `x,y` row per point; image sets are
//! written as one PGM file per image. Measurements are written as one
//! flattened row per item with full `f64` round-trip precision, so the
//! likelihood is reconstructed exactly.

use std::fs;
use std::path::Path;

use emdm::numkit::{derive_seed, Rng, Tensor};
use emdm::oracles::{GaussianPrior, GmmPrior};

use crate::config::DatasetSpec;
use crate::{CliError, CliResult};

/// Deterministic dataset as `[n, d]` rows.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> CliResult<Tensor> {
    let mut rng = Rng::derive(seed, 0xDA7A);
    match spec {
        DatasetSpec::Gmm2d {
            n,
            means,
            std,
            weights,
        } => {
            let prior = gmm_from_spec(means, *std, weights.as_deref())?;
            Ok(prior.sample_n(*n, &mut rng)?)
        }
        DatasetSpec::Rings2d { n, rings } => {
            let mut data = Vec::with_capacity(n * 2);
            for _ in 0..*n {
                let ring = rings[rng.index(rings.len())];
                let radius = rng.uniform(ring[0], ring[1]);
                let angle = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
                data.push(radius * angle.cos());
                data.push(radius * angle.sin());
            }
            Ok(Tensor::new(vec![*n, 2], data)?)
        }
        DatasetSpec::ToyImages { n, size } => {
            let mut rows = Vec::with_capacity(*n);
            for i in 0..*n {
                let mut item_rng = Rng::derive(seed, 0x1000 + i as u64);
                rows.push(toy_image(*size, &mut item_rng));
            }
            Ok(Tensor::stack_rows(&rows)?)
        }
    }
}

pub fn gmm_from_spec(
    means: &[[f64; 2]],
    std: f64,
    weights: Option<&[f64]>,
) -> CliResult<GmmPrior> {
    let components = means
        .iter()
        .map(|m| GaussianPrior::isotropic(Tensor::from_vec(m.to_vec()), std))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0 / means.len() as f64; means.len()],
    };
    Ok(GmmPrior::new(weights, components)?)
}

/// Procedural grayscale shape on `[0, 1]`: a soft-edged disc or an
/// axis-aligned bar over a dark background, drawn on a half-resolution
/// lattice and upsampled 2x. The block structure gives priors usable
/// pixel redundancy at this tiny resolution.
pub fn toy_image(size: usize, rng: &mut Rng) -> Tensor {
    let half = (size / 2).max(1);
    let s = half as f64;
    let bg = 0.05;
    let fg = 0.95;
    let mut small = vec![bg; half * half];
    if rng.index(2) == 0 {
        let cx = rng.uniform(0.30 * s, 0.70 * s);
        let cy = rng.uniform(0.30 * s, 0.70 * s);
        let radius = rng.uniform(0.18 * s, 0.36 * s);
        for r in 0..half {
            for c in 0..half {
                let d = ((r as f64 + 0.5 - cy).powi(2) + (c as f64 + 0.5 - cx).powi(2)).sqrt();
                let cover = (radius - d + 0.5).clamp(0.0, 1.0);
                small[r * half + c] = bg + (fg - bg) * cover;
            }
        }
    } else {
        let horizontal = rng.index(2) == 0;
        let pos = rng.uniform(0.25 * s, 0.75 * s);
        let halfwidth = rng.uniform(0.8, 1.8);
        for r in 0..half {
            for c in 0..half {
                let coord = if horizontal { r as f64 + 0.5 } else { c as f64 + 0.5 };
                let cover = (halfwidth - (coord - pos).abs() + 0.5).clamp(0.0, 1.0);
                small[r * half + c] = bg + (fg - bg) * cover;
            }
        }
    }
    let mut img = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            img[r * size + c] = small[(r / 2).min(half - 1) * half + (c / 2).min(half - 1)];
        }
    }
    Tensor::from_vec(img)
}

/// Per-item generator seed used by the corruption stage.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, 0xC0DE_0000 + index)
}

pub fn write_csv_rows(path: &Path, rows: &Tensor) -> CliResult<()> {
    let (n, d) = rows.as_matrix().map_err(CliError::Core)?;
    let mut out = String::new();
    for r in 0..n {
        let row = rows.row(r, d);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", v));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv_rows(path: &Path) -> CliResult<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    CliError::Other(format!(
                        "{}:{}: bad number {:?}",
                        path.display(),
                        lineno + 1,
                        tok
                    ))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Other(format!("{}: empty table", path.display())));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(CliError::Other(format!(
            "{}: ragged rows",
            path.display()
        )));
    }
    let n = rows.len();
    Ok(Tensor::new(vec![n, d], rows.concat()).map_err(CliError::Core)?)
}
