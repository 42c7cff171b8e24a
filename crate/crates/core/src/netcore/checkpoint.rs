//! Binary parameter checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! offset  size          field
//! 0       4             magic "LCNN"
//! 4       4   u32       format version (currently 1)
//! 8       8   u64       rng seed
//! 16      4   u32       layer count L
//! then L times:
//!         4   u32       in_dim
//!         4   u32       out_dim
//!         1   u8        activation (0 = identity, 1 = relu)
//!         8·in·out f64  weights, row-major in_dim × out_dim
//!         8·out    f64  biases
//! then:
//!         1   u8        optimizer state present (0 or 1)
//! if present:
//!         8   u64       Adam step count
//!         then L times: m_w, v_w (in·out f64 each), m_b, v_b (out f64 each)
//! ```
//!
//! Trailing bytes after the last field are rejected.

use std::fs;
use std::path::Path;

use super::network::{Activation, AdamState, DenseLayer, LayerMoments, NetworkParameters};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCNN";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(net: &NetworkParameters) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&net.rng_seed().to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        out.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        out.push(match layer.activation() {
            Activation::Identity => 0,
            Activation::Relu => 1,
        });
        put_f64s(&mut out, layer.weights().data());
        put_f64s(&mut out, layer.biases().data());
    }
    let opt = net.optimizer_state();
    out.push(1);
    out.extend_from_slice(&opt.step.to_le_bytes());
    for m in &opt.moments {
        put_f64s(&mut out, &m.m_w);
        put_f64s(&mut out, &m.v_w);
        put_f64s(&mut out, &m.m_b);
        put_f64s(&mut out, &m.v_b);
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkParameters> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let seed = r.u64()?;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let activation = match r.take(1)?[0] {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
        };
        let w = Tensor2::from_vec(in_dim, out_dim, r.f64s(in_dim * out_dim)?)?;
        let b = Tensor2::row_vector(r.f64s(out_dim)?);
        layers.push(DenseLayer::new(w, b, activation)?);
    }
    let mut net = NetworkParameters::from_layers(layers, seed)?;
    match r.take(1)?[0] {
        0 => {}
        1 => {
            let step = r.u64()?;
            let mut moments = Vec::with_capacity(n_layers);
            for l in net.layers() {
                let nw = l.in_dim() * l.out_dim();
                let nb = l.out_dim();
                moments.push(LayerMoments {
                    m_w: r.f64s(nw)?,
                    v_w: r.f64s(nw)?,
                    m_b: r.f64s(nb)?,
                    v_b: r.f64s(nb)?,
                });
            }
            net = net.with_optimizer(AdamState { step, moments })?;
        }
        other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(net)
}

pub fn save(net: &NetworkParameters, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NetworkParameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
