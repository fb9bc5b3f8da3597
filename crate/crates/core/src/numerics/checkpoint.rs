//! Binary model checkpoints.
//!
//! Layout (all integers u32 little-endian, all floats f64 little-endian):
//!
//! ```text
//! "BPRCKPT1"  layer_count
//! per layer:  rows cols activation_tag(u8) weights[rows*cols] bias[rows]
//! ```
//!
//! `rows` is the layer's output width and `cols` its input width.

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Matrix, Mlp};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BPRCKPT1";

pub fn write_checkpoint<W: Write>(model: &Mlp, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(model.n_layers() as u32).to_le_bytes())?;
    for i in 0..model.n_layers() {
        let layer = model.layer(i);
        w.write_all(&(layer.shape.outputs as u32).to_le_bytes())?;
        w.write_all(&(layer.shape.inputs as u32).to_le_bytes())?;
        w.write_all(&[layer.shape.activation.tag()])?;
        for v in layer.weight.iter().chain(layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn to_bytes(model: &Mlp) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + model.param_count() * 8);
    write_checkpoint(model, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mlp> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("checkpoint truncated before magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 {
        return Err(Error::Format("checkpoint has zero layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)
            .map_err(|_| Error::Format(format!("layer {i}: truncated")))?;
        let act = Activation::from_tag(tag[0])
            .ok_or_else(|| Error::Format(format!("layer {i}: unknown activation tag {}", tag[0])))?;
        let weights = read_f64s(&mut r, rows * cols)?;
        let bias = read_f64s(&mut r, rows)?;
        layers.push((Matrix::from_vec(rows, cols, weights)?, bias, act));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Mlp::from_layers(layers).map_err(|e| Error::Format(e.to_string()))
}

pub fn save(model: &Mlp, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<Mlp> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("checkpoint truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("checkpoint truncated".into()))?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
