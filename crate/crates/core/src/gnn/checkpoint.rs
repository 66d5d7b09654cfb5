use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{GcnHyper, GcnModel, GnnError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes `magic, version, d_emb, d_hidden, C` (u32 little-endian) followed by
/// W0, b0, W1, b1 as row-major f32le.
pub fn save_checkpoint<W: Write>(model: &GcnModel, mut out: W) -> Result<()> {
    out.write_all(&CHECKPOINT_MAGIC)?;
    for h in [
        CHECKPOINT_VERSION,
        model.d_emb() as u32,
        model.hyper.hidden as u32,
        model.num_classes() as u32,
    ] {
        out.write_all(&h.to_le_bytes())?;
    }
    let params = model
        .w0
        .iter()
        .chain(model.b0.iter())
        .chain(model.w1.iter())
        .chain(model.b1.iter());
    for x in params {
        out.write_all(&(*x as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Reads a checkpoint; dropout is not stored and comes from `hyper`.
pub fn load_checkpoint<R: Read>(mut input: R, dropout: f64) -> Result<GcnModel> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(GnnError::BadCheckpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(GnnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let d_emb = read_u32(&mut input)? as usize;
    let hidden = read_u32(&mut input)? as usize;
    let classes = read_u32(&mut input)? as usize;
    let shape_err = |e: ndarray::ShapeError| GnnError::BadCheckpoint(e.to_string());
    let w0 = Array2::from_shape_vec((d_emb, hidden), read_f32s(&mut input, d_emb * hidden)?)
        .map_err(shape_err)?;
    let b0 = Array1::from(read_f32s(&mut input, hidden)?);
    let w1 = Array2::from_shape_vec((hidden, classes), read_f32s(&mut input, hidden * classes)?)
        .map_err(shape_err)?;
    let b1 = Array1::from(read_f32s(&mut input, classes)?);
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(GnnError::BadCheckpoint(format!(
            "{} trailing bytes",
            rest.len()
        )));
    }
    GcnModel::from_parts(w0, b0, w1, b1, GcnHyper { hidden, dropout })
}
