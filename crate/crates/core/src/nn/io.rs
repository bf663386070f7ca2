//! The `EMB1` tensor container and the checkpoint format built on it.
//!
//! A tensor file is the magic `EMB1`, a little-endian `u32` rank, one `u32`
//! per dimension and the row-major `f32` payload. A checkpoint is one rank-1
//! tensor holding every parameter (followed by the optimizer moments when
//! present), then a `u32` byte length and a JSON manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamW, AdamWConfig, ParamStore, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::invalid("truncated EMB1 header"))?;
    *pos = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

/// Decodes one tensor from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, usize)> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::invalid("missing EMB1 magic"));
    }
    let mut pos = 4;
    let rank = read_u32(bytes, &mut pos)? as usize;
    if rank == 0 || rank > 8 {
        return Err(Error::invalid(format!("unsupported EMB1 rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(bytes, &mut pos).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let payload = bytes
        .get(pos..pos + 4 * n)
        .ok_or_else(|| Error::invalid(format!("EMB1 payload shorter than {n} values")))?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((Tensor::new(shape, data)?, pos + 4 * n))
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_tensor(t)).map_err(|e| Error::file(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let (t, used) = decode_tensor(&bytes)?;
    if used != bytes.len() {
        return Err(Error::invalid(format!(
            "{}: {} trailing bytes after tensor",
            path.display(),
            bytes.len() - used
        )));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OptimizerEntry {
    config: AdamWConfig,
    step: u64,
    m_offset: usize,
    v_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    stage: String,
    iteration: u64,
    params: Vec<ParamEntry>,
    optimizer: Option<OptimizerEntry>,
    config: serde_json::Value,
}

/// A saved training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub iteration: u64,
    pub params: ParamStore,
    pub optimizer: Option<AdamW>,
    /// Free-form configuration stored alongside, used to rebuild networks.
    pub config: serde_json::Value,
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let mut flat = Vec::with_capacity(c.params.num_values() * 3);
    let mut params = Vec::new();
    for (name, t) in c.params.names().iter().zip(c.params.tensors()) {
        params.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: flat.len(),
        });
        flat.extend_from_slice(t.data());
    }
    let optimizer = c.optimizer.as_ref().map(|opt| {
        let m_offset = flat.len();
        flat.extend(opt.m.iter().flatten());
        let v_offset = flat.len();
        flat.extend(opt.v.iter().flatten());
        OptimizerEntry {
            config: opt.cfg.clone(),
            step: opt.step,
            m_offset,
            v_offset,
        }
    });
    let manifest = Manifest {
        stage: c.stage.clone(),
        iteration: c.iteration,
        params,
        optimizer,
        config: c.config.clone(),
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = encode_tensor(&Tensor::vector(flat));
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (flat, mut pos) = decode_tensor(bytes)?;
    let len = read_u32(bytes, &mut pos)? as usize;
    let json = bytes
        .get(pos..pos + len)
        .ok_or_else(|| Error::invalid("truncated checkpoint manifest"))?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    let flat = flat.data();
    let slice = |offset: usize, n: usize| {
        flat.get(offset..offset + n)
            .ok_or_else(|| Error::invalid("checkpoint manifest points past the payload"))
    };
    let mut params = ParamStore::new();
    for e in &manifest.params {
        let n = e.shape.iter().product();
        params.add(
            e.name.clone(),
            Tensor::new(e.shape.clone(), slice(e.offset, n)?.to_vec())?,
        );
    }
    let optimizer = match manifest.optimizer {
        Some(o) => {
            let mut opt = AdamW::new(o.config, &params);
            opt.step = o.step;
            let (mut mo, mut vo) = (o.m_offset, o.v_offset);
            for k in 0..params.len() {
                let n = params.tensors()[k].len();
                opt.m[k] = slice(mo, n)?.to_vec();
                opt.v[k] = slice(vo, n)?.to_vec();
                mo += n;
                vo += n;
            }
            Some(opt)
        }
        None => None,
    };
    Ok(Checkpoint {
        stage: manifest.stage,
        iteration: manifest.iteration,
        params,
        optimizer,
        config: manifest.config,
    })
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(c)?).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_tensor(b"EMB2\x01\0\0\0").is_err());
        assert!(decode_tensor(b"EMB1\x01\0\0\0\x03\0\0\0\0\0\0\0").is_err());
        assert!(decode_tensor(b"EMB1").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap());
        store.add("b", Tensor::vector(vec![3.0]));
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        opt.step = 7;
        opt.m[0] = vec![0.125, 0.0, -0.5, 1.0];
        opt.v[1] = vec![0.0625];
        let c = Checkpoint {
            stage: "aux".into(),
            iteration: 7,
            params: store,
            optimizer: Some(opt),
            config: serde_json::json!({"hidden": 8}),
        };
        let back = decode_checkpoint(&encode_checkpoint(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(
            dims in prop::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|_| f32::from_bits(rng.gen::<u32>() & 0xbfff_ffff) as f64).collect();
            let t = Tensor::new(dims, data).unwrap();
            let bytes = encode_tensor(&t);
            let (back, used) = decode_tensor(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(encode_tensor(&back), bytes);
            prop_assert_eq!(back, t);
        }
    }
}
