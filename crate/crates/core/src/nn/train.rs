//! Training loops for the auxiliary decoder and the denoiser, plus the
//! inference helpers that reuse them.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nets::{AuxModel, ContentInputs, Denoiser, DenoiserInputs, NetConfig, StyleEncoder};
use super::{pitch_proxy, AdamW, AdamWConfig, Graph, ParamStore, Tensor};
use crate::diffusion::{self, gaussian_noise, DiffusionSchedule, NoisyMel};
use crate::features::MelSpectrogram;
use crate::losses::graph::{aux_total, denoise, AuxTerms};
use crate::losses::{AuxBreakdown, AuxLossWeights};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub loss_weights: AuxLossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            batch_size: 48,
            seed: 0,
            optimizer: AdamWConfig::default(),
            loss_weights: AuxLossWeights::default(),
        }
    }
}

/// One training utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub inputs: ContentInputs,
    /// Normalized target mel with one frame per entry of `inputs.frame_rows`.
    pub target: MelSpectrogram,
    pub mert: Vec<f64>,
    pub vec: Vec<f64>,
}

impl Example {
    fn target_tensor(&self) -> Result<Tensor> {
        Tensor::matrix(self.target.n_frames, self.target.n_mels, self.target.data.clone())
    }
}

/// The frozen style encoder and pitch proxy used inside the auxiliary loss.
#[derive(Debug, Clone)]
pub struct Critics {
    pub style: StyleEncoder,
    pub style_params: ParamStore,
    pub centers: Vec<f64>,
    pub temperature: f64,
}

impl Critics {
    pub fn new(cfg: &NetConfig, centers: Vec<f64>, seed: u64) -> Self {
        let (style, style_params) = StyleEncoder::new(cfg, seed);
        Self {
            style,
            style_params,
            centers,
            temperature: cfg.pitch_temperature,
        }
    }
}

/// A network, its parameters and optimizer state.
#[derive(Debug, Clone)]
pub struct Stage<M> {
    pub model: M,
    pub params: ParamStore,
    pub optimizer: AdamW,
    /// Completed iterations.
    pub iteration: u64,
}

impl<M> Stage<M> {
    pub fn new(model: M, params: ParamStore, cfg: AdamWConfig) -> Self {
        let optimizer = AdamW::new(cfg, &params);
        Self {
            model,
            params,
            optimizer,
            iteration: 0,
        }
    }
}

fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

fn batch<R: Rng>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    if size >= n {
        (0..n).collect()
    } else {
        let mut idx = sample_indices(rng, n, size).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn accumulate(total: &mut [Vec<f64>], part: Vec<Vec<f64>>, scale: f64) {
    for (t, p) in total.iter_mut().zip(part) {
        for (a, b) in t.iter_mut().zip(p) {
            *a += scale * b;
        }
    }
}

fn zero_grads(params: &ParamStore) -> Vec<Vec<f64>> {
    params.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
}

/// Builds the auxiliary loss of one example on `g`.
pub fn aux_loss(
    g: &mut Graph,
    model: &AuxModel,
    params: &super::Bound,
    critics: &Critics,
    example: &Example,
    weights: &AuxLossWeights,
) -> Result<AuxTerms> {
    let pred = model.forward(g, params, &example.inputs)?;
    let target = g.constant(example.target_tensor()?);
    let style_params = critics.style_params.bind_frozen(g);
    let style = |g: &mut Graph, m| critics.style.forward(g, &style_params, m);
    let pitch = |g: &mut Graph, m| pitch_proxy(g, m, &critics.centers, critics.temperature);
    aux_total(g, target, pred, &style, &pitch, weights)
}

/// Runs `cfg.iterations` further AdamW iterations on the auxiliary loss,
/// calling `log` with the batch-mean breakdown after each one.
pub fn train_aux(
    stage: &mut Stage<AuxModel>,
    critics: &Critics,
    data: &[Example],
    cfg: &TrainConfig,
    mut log: impl FnMut(u64, &AuxBreakdown),
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    for _ in 0..cfg.iterations {
        let it = stage.iteration + 1;
        let mut rng = iteration_rng(cfg.seed, it);
        let chosen = batch(&mut rng, data.len(), cfg.batch_size.max(1));
        let scale = 1.0 / chosen.len() as f64;
        let mut grads = zero_grads(&stage.params);
        let mut mean = AuxBreakdown::default();
        for &i in &chosen {
            let mut g = Graph::new();
            let p = stage.params.bind(&mut g);
            let terms = aux_loss(&mut g, &stage.model, &p, critics, &data[i], &cfg.loss_weights)?;
            let b = terms.breakdown(&g);
            if !b.total.is_finite() {
                return Err(Error::NonFinite(format!("aux loss at iteration {it} ({})", data[i].id)));
            }
            mean.l1 += scale * b.l1;
            mean.style += scale * b.style;
            mean.pitch += scale * b.pitch;
            mean.total += scale * b.total;
            accumulate(&mut grads, p.grads(&g.backward(terms.total), &stage.params), scale);
        }
        stage.optimizer.update(&mut stage.params, &grads)?;
        stage.iteration = it;
        log(it, &mean);
    }
    Ok(())
}

/// One denoiser training utterance: frozen content embedding, target mel
/// and pooled priors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserExample {
    pub id: String,
    /// `[frames, 256]`.
    pub e_c: Tensor,
    pub target: MelSpectrogram,
    pub mert: Vec<f64>,
    pub vec: Vec<f64>,
}

/// Denoising MAE for one example at step `t` with noise `eps`.
fn denoise_graph(
    g: &mut Graph,
    model: &Denoiser,
    params: &super::Bound,
    ex: &DenoiserExample,
    t: usize,
    eps: &[f64],
    sched: &DiffusionSchedule,
) -> Result<super::Var> {
    let noisy = diffusion::q_sample(&ex.target, t, eps, sched)?;
    let (f, m) = (ex.target.n_frames, ex.target.n_mels);
    let mt = g.constant(Tensor::matrix(f, m, noisy.mel.data)?);
    let cond = DenoiserInputs {
        e_c: g.constant(ex.e_c.clone()),
        t,
        e_mert: g.constant(Tensor::vector(ex.mert.clone())),
        e_vec: g.constant(Tensor::vector(ex.vec.clone())),
    };
    let eps_hat = model.forward(g, params, mt, &cond)?;
    let eps = g.constant(Tensor::matrix(f, m, eps.to_vec())?);
    denoise(g, eps, eps_hat)
}

/// Runs `cfg.iterations` further iterations of the denoising objective with
/// a uniformly drawn step per example.
pub fn train_denoiser(
    stage: &mut Stage<Denoiser>,
    data: &[DenoiserExample],
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
    mut log: impl FnMut(u64, f64),
) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    for _ in 0..cfg.iterations {
        let it = stage.iteration + 1;
        let mut rng = iteration_rng(cfg.seed, it);
        let chosen = batch(&mut rng, data.len(), cfg.batch_size.max(1));
        let scale = 1.0 / chosen.len() as f64;
        let mut grads = zero_grads(&stage.params);
        let mut mean = 0.0;
        for &i in &chosen {
            let t = rng.gen_range(1..=sched.steps());
            let eps = gaussian_noise(&mut rng, data[i].target.data.len());
            let mut g = Graph::new();
            let p = stage.params.bind(&mut g);
            let loss = denoise_graph(&mut g, &stage.model, &p, &data[i], t, &eps, sched)?;
            let v = g.value(loss).item();
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "denoise loss at iteration {it} ({})",
                    data[i].id
                )));
            }
            mean += scale * v;
            accumulate(&mut grads, p.grads(&g.backward(loss), &stage.params), scale);
        }
        stage.optimizer.update(&mut stage.params, &grads)?;
        stage.iteration = it;
        log(it, mean);
    }
    Ok(())
}

/// Mean denoising MAE over `draws` seeded `(t, ε)` draws per example.
pub fn evaluate_denoiser(
    model: &Denoiser,
    params: &ParamStore,
    data: &[DenoiserExample],
    sched: &DiffusionSchedule,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in data {
        for _ in 0..draws {
            let t = rng.gen_range(1..=sched.steps());
            let eps = gaussian_noise(&mut rng, ex.target.data.len());
            let mut g = Graph::new();
            let p = params.bind_frozen(&mut g);
            let loss = denoise_graph(&mut g, model, &p, ex, t, &eps, sched)?;
            total += g.value(loss).item();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("evaluation draws"));
    }
    Ok(total / n as f64)
}

/// Frame-level content embedding `e_c` as a plain tensor.
pub fn content_embedding(model: &AuxModel, params: &ParamStore, inputs: &ContentInputs) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let e_c = model.content.forward(&mut g, &p, inputs)?;
    Ok(g.value(e_c).clone())
}

/// The auxiliary decoder's normalized mel prediction.
pub fn aux_mel(model: &AuxModel, params: &ParamStore, inputs: &ContentInputs, n_mels: usize) -> Result<MelSpectrogram> {
    let mut g = Graph::new();
    let p = params.bind_frozen(&mut g);
    let m = model.forward(&mut g, &p, inputs)?;
    MelSpectrogram::new(inputs.n_frames(), n_mels, g.value(m).data().to_vec())
}

/// Shallow-diffusion refinement of `m_hat` with the trained denoiser.
#[allow(clippy::too_many_arguments)]
pub fn refine_mel(
    model: &Denoiser,
    params: &ParamStore,
    e_c: &Tensor,
    mert: &[f64],
    vec: &[f64],
    m_hat: &MelSpectrogram,
    q: usize,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<MelSpectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let denoiser = |state: &NoisyMel| {
        let mut g = Graph::new();
        let p = params.bind_frozen(&mut g);
        let mt = g.constant(Tensor::matrix(
            state.mel.n_frames,
            state.mel.n_mels,
            state.mel.data.clone(),
        )?);
        let cond = DenoiserInputs {
            e_c: g.constant(e_c.clone()),
            t: state.t,
            e_mert: g.constant(Tensor::vector(mert.to_vec())),
            e_vec: g.constant(Tensor::vector(vec.to_vec())),
        };
        let out = model.forward(&mut g, &p, mt, &cond)?;
        Ok(g.value(out).data().to_vec())
    };
    diffusion::sample(denoiser, m_hat, q, sched, &mut rng)
}
