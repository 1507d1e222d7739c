//! Binary checkpoint format.
//!
//! Layout, all little-endian:
//! `"EMDM" | u32 version | u32 n_dims | u32 * n_dims layer widths |`
//! then for each layer its weight matrix (row-major) and bias vector as
//! 32-bit floats in declaration order. Parameters are stored at f32
//! precision; save -> load -> save reproduces files bit for bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scorenet::model::{default_freqs, ScoreModel};
use crate::numkit::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMDM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_model(model: &ScoreModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ScoreModel> {
    let bytes = fs::read(path)?;
    model_from_bytes(&bytes)
}

pub fn model_to_bytes(model: &ScoreModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.dims.len() as u32).to_le_bytes());
    for &d in &model.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for l in 0..model.n_layers() {
        for &v in model.weights[l].data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for &v in model.biases[l].data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ScoreModel> {
    let mut pos = 0usize;
    let magic = take(bytes, &mut pos, 4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", magic)));
    }
    let version = read_u32(bytes, &mut pos)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            version
        )));
    }
    let n_dims = read_u32(bytes, &mut pos)? as usize;
    if n_dims < 2 {
        return Err(Error::Format("layer-dim list too short".to_string()));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(read_u32(bytes, &mut pos)? as usize);
    }
    let data_dim = *dims.last().expect("non-empty");
    if dims[0] <= data_dim || (dims[0] - data_dim) % 2 != 0 {
        return Err(Error::Format(format!(
            "inconsistent layer widths {:?}",
            dims
        )));
    }
    let mut weights = Vec::with_capacity(n_dims - 1);
    let mut biases = Vec::with_capacity(n_dims - 1);
    for l in 0..n_dims - 1 {
        let (out_dim, in_dim) = (dims[l + 1], dims[l]);
        let mut w = Vec::with_capacity(out_dim * in_dim);
        for _ in 0..out_dim * in_dim {
            w.push(read_f32(bytes, &mut pos)? as f64);
        }
        let mut b = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            b.push(read_f32(bytes, &mut pos)? as f64);
        }
        weights.push(Tensor::new(vec![out_dim, in_dim], w)?);
        biases.push(Tensor::from_vec(b));
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after parameters",
            bytes.len() - pos
        )));
    }
    let embed_freqs = default_freqs(dims[0] - data_dim);
    Ok(ScoreModel {
        dims,
        weights,
        biases,
        embed_freqs,
        data_dim,
    })
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *pos + n > bytes.len() {
        return Err(Error::Format("truncated checkpoint".to_string()));
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let s = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes(s.try_into().expect("length checked")))
}

fn read_f32(bytes: &[u8], pos: &mut usize) -> Result<f32> {
    let s = take(bytes, pos, 4)?;
    Ok(f32::from_le_bytes(s.try_into().expect("length checked")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use crate::scorenet::model::ModelConfig;

    #[test]
    fn bytes_roundtrip_is_bit_identical() {
        let mut rng = Rng::from_seed(9);
        let mut model = ScoreModel::new(
            3,
            &ModelConfig {
                hidden: vec![5],
                embed_width: 4,
            },
            &mut rng,
        )
        .unwrap();
        for i in 0..model.param_count() {
            model.set_param(i, rng.uniform(-1.0, 1.0));
        }
        let b1 = model_to_bytes(&model);
        let restored = model_from_bytes(&b1).unwrap();
        let b2 = model_to_bytes(&restored);
        assert_eq!(b1, b2);
        assert_eq!(restored.dims, model.dims);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut rng = Rng::from_seed(1);
        let model = ScoreModel::new(2, &ModelConfig::default(), &mut rng).unwrap();
        let mut bytes = model_to_bytes(&model);
        bytes[0] = b'X';
        assert!(matches!(
            model_from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncation_rejected() {
        let mut rng = Rng::from_seed(2);
        let model = ScoreModel::new(2, &ModelConfig::default(), &mut rng).unwrap();
        let bytes = model_to_bytes(&model);
        assert!(model_from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
