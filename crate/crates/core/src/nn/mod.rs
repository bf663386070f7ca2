//! Reverse-mode autodiff and the toy networks trained with it.

pub mod cond;
mod embed;
mod gemm;
mod gradcheck;
mod graph;
pub mod io;
pub mod nets;
mod optim;
mod params;
mod tensor;
pub mod train;

pub use embed::{
    fuse_embeddings, project, pseudo_embedding, step_embedding, EmbeddingKind, CONTENT_DIM, PHONE_DIM, PRIOR_DIM,
    STYLE_DIM, WORD_DIM,
};
pub use gradcheck::{grad_check, grad_check_coords, grad_check_param};
pub use graph::{Gradients, Graph, Var};
pub use nets::{
    pitch_proxy, AuxDecoder, AuxModel, ContentEncoder, ContentInputs, Denoiser, DenoiserInputs, NetConfig, StyleEncoder,
};
pub use optim::{global_norm, AdamW, AdamWConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;
