use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

pub const WORD_DIM: usize = 768;
pub const PHONE_DIM: usize = 768;
pub const CONTENT_DIM: usize = 256;
pub const PRIOR_DIM: usize = 1024;
pub const STYLE_DIM: usize = 48;

/// Source of a stand-in pre-trained embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Word,
    Phone,
    Mert,
    Vec,
}

impl EmbeddingKind {
    pub fn dim(self) -> usize {
        match self {
            EmbeddingKind::Word => WORD_DIM,
            EmbeddingKind::Phone => PHONE_DIM,
            EmbeddingKind::Mert | EmbeddingKind::Vec => PRIOR_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Word => "word",
            EmbeddingKind::Phone => "phone",
            EmbeddingKind::Mert => "mert",
            EmbeddingKind::Vec => "vec",
        }
    }
}

/// Affine map `x W + b` applied to every row of `x`.
pub fn project(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xs, ws, bs) = (g.shape(x).to_vec(), g.shape(w).to_vec(), g.shape(b).to_vec());
    if ws.len() != 2 || xs.last() != Some(&ws[0]) || bs != [ws[1]] {
        return Err(Error::ShapeMismatch {
            expected: ws,
            found: xs,
        });
    }
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// Elementwise sum of the three content streams.
pub fn fuse_embeddings(g: &mut Graph, words: Var, phones: Var, music: Var) -> Result<Var> {
    let s = g.add(words, phones)?;
    g.add(s, music)
}

/// Sinusoidal encoding of step `t`, interleaved as `[sin, cos, sin, cos, …]`
/// with geometrically spaced frequencies from 1 down to 1/10000.
pub fn step_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = (dim / 2).max(1);
    let mut out = vec![0.0; dim];
    for (i, pair) in out.chunks_mut(2).enumerate() {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let angle = t as f64 * freq;
        pair[0] = angle.sin();
        if let Some(c) = pair.get_mut(1) {
            *c = angle.cos();
        }
    }
    out
}

/// Deterministic unit-norm Gaussian vector keyed by `(kind, key, seed)`.
pub fn pseudo_embedding(kind: EmbeddingKind, key: &str, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(kind.name().as_bytes());
    h.update([0u8]);
    h.update(key.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let t = Tensor::randn(&[kind.dim()], 1.0, &mut rng);
    let norm = t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    t.data().iter().map(|v| v / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_zero_input_gives_bias() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 4]));
        let w = g.input(Tensor::full(&[4, 3], 0.7));
        let b = g.input(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = project(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn identity_padded_projection_truncates() {
        let mut wd = vec![0.0; WORD_DIM * CONTENT_DIM];
        for i in 0..CONTENT_DIM {
            wd[i * CONTENT_DIM + i] = 1.0;
        }
        let input: Vec<f64> = (0..WORD_DIM).map(|i| i as f64 * 0.01).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(1, WORD_DIM, input.clone()).unwrap());
        let w = g.input(Tensor::matrix(WORD_DIM, CONTENT_DIM, wd).unwrap());
        let b = g.input(Tensor::zeros(&[CONTENT_DIM]));
        let y = project(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &input[..CONTENT_DIM]);
    }

    #[test]
    fn project_rejects_bad_dims() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 5]));
        let w = g.input(Tensor::zeros(&[4, 3]));
        let b = g.input(Tensor::zeros(&[3]));
        assert!(project(&mut g, x, w, b).is_err());
    }

    #[test]
    fn fuse_cases() {
        let mut g = Graph::new();
        let a = g.input(Tensor::vector(vec![1.0, 0.0]));
        let b = g.input(Tensor::vector(vec![0.0, 2.0]));
        let c = g.input(Tensor::vector(vec![3.0, 3.0]));
        let f = fuse_embeddings(&mut g, a, b, c).unwrap();
        assert_eq!(g.value(f).data(), &[4.0, 5.0]);
        let f2 = fuse_embeddings(&mut g, c, a, b).unwrap();
        assert_eq!(g.value(f2).data(), g.value(f).data());
        let z = g.input(Tensor::zeros(&[2]));
        let fz = fuse_embeddings(&mut g, z, z, z).unwrap();
        assert_eq!(g.value(fz).data(), &[0.0, 0.0]);
        let bad = g.input(Tensor::zeros(&[3]));
        assert!(fuse_embeddings(&mut g, a, b, bad).is_err());
    }

    #[test]
    fn step_embedding_properties() {
        let e0 = step_embedding(0, 8);
        assert_eq!(e0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(step_embedding(17, 128), step_embedding(17, 128));
        let all: Vec<Vec<f64>> = (0..=100).map(|t| step_embedding(t, 128)).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn pseudo_embeddings_are_unit_and_keyed() {
        let a = pseudo_embedding(EmbeddingKind::Word, "la", 7);
        assert_eq!(a.len(), WORD_DIM);
        assert_eq!(a, pseudo_embedding(EmbeddingKind::Word, "la", 7));
        assert!((a.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        assert_ne!(a, pseudo_embedding(EmbeddingKind::Word, "la", 8));
        assert_ne!(a, pseudo_embedding(EmbeddingKind::Phone, "la", 7));
        assert_eq!(pseudo_embedding(EmbeddingKind::Mert, "60", 0).len(), PRIOR_DIM);
    }

    #[test]
    fn distinct_keys_are_nearly_orthogonal() {
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let a = pseudo_embedding(EmbeddingKind::Word, &format!("a{i}"), i);
            let b = pseudo_embedding(EmbeddingKind::Word, &format!("b{i}"), i);
            let c: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            worst = worst.max(c.abs());
        }
        assert!(worst < 0.2, "{worst}");
    }
}
