//! Toy networks: content encoder, auxiliary decoder, WaveNet-style
//! denoiser, frozen style encoder and the soft-argmax pitch proxy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{project, step_embedding, CONTENT_DIM, PHONE_DIM, PRIOR_DIM, STYLE_DIM, WORD_DIM};
use super::{Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

/// Number of note tokens: MIDI 0..=127 plus one rest token.
pub const NOTE_TOKENS: usize = 129;
pub const REST_TOKEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub n_mels: usize,
    pub aux_hidden: usize,
    pub aux_layers: usize,
    pub denoiser_hidden: usize,
    pub denoiser_layers: usize,
    pub style_channels: usize,
    pub pitch_temperature: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            n_mels: 80,
            aux_hidden: 128,
            aux_layers: 4,
            denoiser_hidden: 128,
            denoiser_layers: 6,
            style_channels: 8,
            pitch_temperature: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.aux_hidden == 0 || self.denoiser_hidden == 0 || self.style_channels == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        if self.aux_layers < 2 || self.denoiser_layers == 0 {
            return Err(Error::invalid("aux_layers must be >= 2 and denoiser_layers >= 1"));
        }
        if self.pitch_temperature.is_nan() || self.pitch_temperature <= 0.0 {
            return Err(Error::invalid("pitch_temperature must be positive"));
        }
        Ok(())
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    Tensor::randn(shape, std, rng)
}

/// Frame-level inputs of the content encoder for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentInputs {
    /// `[rows, 768]` word embedding of the word each score row belongs to.
    pub words: Tensor,
    /// `[rows, 768]` phone embeddings.
    pub phones: Tensor,
    /// Note token per row (`0..=127` or [`REST_TOKEN`]).
    pub notes: Vec<usize>,
    /// Slur flag per row.
    pub slurs: Vec<usize>,
    /// Score row of every mel frame.
    pub frame_rows: Vec<usize>,
}

impl ContentInputs {
    pub fn n_rows(&self) -> usize {
        self.notes.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frame_rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.notes.len();
        if self.words.shape() != [n, WORD_DIM] || self.phones.shape() != [n, PHONE_DIM] || self.slurs.len() != n {
            return Err(Error::ShapeMismatch {
                expected: vec![n, WORD_DIM],
                found: self.words.shape().to_vec(),
            });
        }
        if self.notes.iter().any(|&t| t >= NOTE_TOKENS)
            || self.slurs.iter().any(|&s| s > 1)
            || self.frame_rows.iter().any(|&r| r >= n)
        {
            return Err(Error::invalid("note, slur or frame-row index out of range"));
        }
        Ok(())
    }
}

/// Projects word and phone embeddings to 256 dims, adds the note and slur
/// embeddings, and expands rows to frames.
#[derive(Debug, Clone)]
pub struct ContentEncoder {
    pub word_w: ParamId,
    pub word_b: ParamId,
    pub phone_w: ParamId,
    pub phone_b: ParamId,
    pub note_table: ParamId,
    pub slur_table: ParamId,
}

impl ContentEncoder {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        Self {
            word_w: store.add("content.word_w", randn(rng, &[WORD_DIM, CONTENT_DIM], 0.5)),
            word_b: store.add("content.word_b", Tensor::zeros(&[CONTENT_DIM])),
            phone_w: store.add("content.phone_w", randn(rng, &[PHONE_DIM, CONTENT_DIM], 0.5)),
            phone_b: store.add("content.phone_b", Tensor::zeros(&[CONTENT_DIM])),
            note_table: store.add("content.note_table", randn(rng, &[NOTE_TOKENS, CONTENT_DIM], 0.5)),
            slur_table: store.add("content.slur_table", randn(rng, &[2, CONTENT_DIM], 0.5)),
        }
    }

    /// Row-level `e_c` before frame expansion, `[rows, 256]`.
    pub fn rows(&self, g: &mut Graph, p: &Bound, inp: &ContentInputs) -> Result<Var> {
        inp.validate()?;
        let words = g.constant(inp.words.clone());
        let phones = g.constant(inp.phones.clone());
        let ew = project(g, words, p[self.word_w], p[self.word_b])?;
        let ep = project(g, phones, p[self.phone_w], p[self.phone_b])?;
        let notes = g.gather_rows(p[self.note_table], &inp.notes)?;
        let slurs = g.gather_rows(p[self.slur_table], &inp.slurs)?;
        let em = g.add(notes, slurs)?;
        super::embed::fuse_embeddings(g, ew, ep, em)
    }

    /// Frame-level `e_c`, `[frames, 256]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, inp: &ContentInputs) -> Result<Var> {
        let rows = self.rows(g, p, inp)?;
        g.gather_rows(rows, &inp.frame_rows)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
    dilation: usize,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        dilation: usize,
        std: f64,
    ) -> Self {
        Self {
            w: store.add(format!("{name}.w"), randn(rng, &[k, cin, cout], std)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[cout])),
            dilation,
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv1d(x, p[self.w], self.dilation)?;
        g.add_row(y, p[self.b])
    }
}

const DILATIONS: [usize; 3] = [1, 2, 4];

/// Stack of dilated 1-D convolutions mapping `e_c` to a mel in `(-1, 1)`.
#[derive(Debug, Clone)]
pub struct AuxDecoder {
    layers: Vec<ConvLayer>,
}

impl AuxDecoder {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let h = cfg.aux_hidden;
        let mut layers = Vec::with_capacity(cfg.aux_layers);
        for i in 0..cfg.aux_layers - 1 {
            let cin = if i == 0 { CONTENT_DIM } else { h };
            let std = (1.0 / (3 * cin) as f64).sqrt();
            layers.push(ConvLayer::new(
                store,
                rng,
                &format!("aux.conv{i}"),
                3,
                cin,
                h,
                DILATIONS[i % 3],
                std,
            ));
        }
        let std = (1.0 / h as f64).sqrt();
        layers.push(ConvLayer::new(store, rng, "aux.out", 1, h, cfg.n_mels, 1, std));
        Self { layers }
    }

    /// The final layer's `(weight, bias)`.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        let last = self.layers.last().expect("at least one layer");
        (last.w, last.b)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, e_c: Var) -> Result<Var> {
        let mut x = e_c;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, p, x)?;
            x = if i + 1 == n { g.tanh(x) } else { g.silu(x) };
        }
        Ok(x)
    }
}

/// Content encoder plus auxiliary decoder, sharing one parameter store.
#[derive(Debug, Clone)]
pub struct AuxModel {
    pub content: ContentEncoder,
    pub decoder: AuxDecoder,
}

impl AuxModel {
    pub fn new(cfg: &NetConfig, seed: u64) -> (Self, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let content = ContentEncoder::new(&mut store, &mut rng);
        let decoder = AuxDecoder::new(&mut store, &mut rng, cfg);
        (Self { content, decoder }, store)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, inp: &ContentInputs) -> Result<Var> {
        let e_c = self.content.forward(g, p, inp)?;
        self.decoder.forward(g, p, e_c)
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize, std: f64) -> Self {
        Self {
            w: store.add(format!("{name}.w"), randn(rng, &[cin, cout], std)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[cout])),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        project(g, x, p[self.w], p[self.b])
    }
}

#[derive(Debug, Clone)]
struct ResidualLayer {
    step: Dense,
    dilated: ConvLayer,
    cond: ParamId,
    out: ConvLayer,
}

/// Per-utterance conditioning of the denoiser.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInputs {
    /// `[frames, 256]` content embedding.
    pub e_c: Var,
    /// Diffusion step.
    pub t: usize,
    /// `[1024]` mean-pooled music prior.
    pub e_mert: Var,
    /// `[1024]` mean-pooled content prior.
    pub e_vec: Var,
}

/// Non-causal WaveNet-style noise predictor with gated residual layers.
#[derive(Debug, Clone)]
pub struct Denoiser {
    hidden: usize,
    input: ConvLayer,
    step1: Dense,
    step2: Dense,
    mert: Dense,
    vec: Dense,
    layers: Vec<ResidualLayer>,
    skip: ConvLayer,
    output: ConvLayer,
    mean: ConvLayer,
    mix: Dense,
}

impl Denoiser {
    pub fn new(cfg: &NetConfig, seed: u64) -> (Self, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut store = ParamStore::new();
        let s = &mut store;
        let h = cfg.denoiser_hidden;
        let inv = |n: usize| (1.0 / n as f64).sqrt();
        let input = ConvLayer::new(s, rng, "den.input", 1, cfg.n_mels, h, 1, inv(cfg.n_mels));
        let step1 = Dense::new(s, rng, "den.step1", h, h, inv(h));
        let step2 = Dense::new(s, rng, "den.step2", h, h, inv(h));
        let mert = Dense::new(s, rng, "den.mert", PRIOR_DIM, h, 1.0);
        let vec = Dense::new(s, rng, "den.vec", PRIOR_DIM, h, 1.0);
        let layers = (0..cfg.denoiser_layers)
            .map(|i| ResidualLayer {
                step: Dense::new(s, rng, &format!("den.layer{i}.step"), h, h, inv(h)),
                dilated: ConvLayer::new(
                    s,
                    rng,
                    &format!("den.layer{i}.dilated"),
                    3,
                    h,
                    2 * h,
                    DILATIONS[i % 3],
                    inv(3 * h),
                ),
                cond: s.add(
                    format!("den.layer{i}.cond"),
                    randn(rng, &[CONTENT_DIM, 2 * h], inv(CONTENT_DIM)),
                ),
                out: ConvLayer::new(s, rng, &format!("den.layer{i}.out"), 1, h, 2 * h, 1, inv(h)),
            })
            .collect();
        let skip = ConvLayer::new(s, rng, "den.skip", 1, h, h, 1, inv(h));
        let output = ConvLayer::new(s, rng, "den.output", 1, h, cfg.n_mels, 1, 1e-2 * inv(h));
        let mean = ConvLayer::new(s, rng, "den.mean", 1, h, cfg.n_mels, 1, inv(h));
        let mix = Dense::new(s, rng, "den.mix", h, 2, 0.0);
        (
            Self {
                hidden: h,
                input,
                step1,
                step2,
                mert,
                vec,
                layers,
                skip,
                output,
                mean,
                mix,
            },
            store,
        )
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, mt: Var, cond: &DenoiserInputs) -> Result<Var> {
        let h = self.hidden;
        let frames = g.shape(mt)[0];
        if g.shape(cond.e_c) != [frames, CONTENT_DIM] {
            return Err(Error::ShapeMismatch {
                expected: vec![frames, CONTENT_DIM],
                found: g.shape(cond.e_c).to_vec(),
            });
        }
        let x0 = self.input.forward(g, p, mt)?;
        let mut x = g.silu(x0);

        let e_t = g.constant(Tensor::matrix(1, h, step_embedding(cond.t, h))?);
        let s1 = self.step1.forward(g, p, e_t)?;
        let s1 = g.silu(s1);
        let step = self.step2.forward(g, p, s1)?;
        let mert_in = g.reshape(cond.e_mert, &[1, PRIOR_DIM])?;
        let vec_in = g.reshape(cond.e_vec, &[1, PRIOR_DIM])?;
        let gm = self.mert.forward(g, p, mert_in)?;
        let gv = self.vec.forward(g, p, vec_in)?;
        let global = g.add(step, gm)?;
        let global = g.add(global, gv)?;

        let mut skips: Option<Var> = None;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for layer in &self.layers {
            let d = layer.step.forward(g, p, global)?;
            let d = g.reshape(d, &[h])?;
            let xin = g.add_row(x, d)?;
            let y = layer.dilated.forward(g, p, xin)?;
            let c = g.matmul(cond.e_c, p[layer.cond])?;
            let y = g.add(y, c)?;
            let a = g.slice_cols(y, 0, h)?;
            let b = g.slice_cols(y, h, 2 * h)?;
            let a = g.tanh(a);
            let b = g.sigmoid(b);
            let z = g.mul(a, b)?;
            let o = layer.out.forward(g, p, z)?;
            let res = g.slice_cols(o, 0, h)?;
            let skip = g.slice_cols(o, h, 2 * h)?;
            let sum = g.add(x, res)?;
            x = g.scale(sum, inv_sqrt2);
            skips = Some(match skips {
                Some(s) => g.add(s, skip)?,
                None => skip,
            });
        }
        let s = skips.expect("at least one layer");
        let s = g.scale(s, 1.0 / (self.layers.len() as f64).sqrt());
        let s = self.skip.forward(g, p, s)?;
        let s = g.silu(s);
        let out = self.output.forward(g, p, s)?;

        // Per-step gains on the noisy input and on a clean-mel estimate.
        let gains = self.mix.forward(g, p, s1)?;
        let input_gain = g.slice_cols(gains, 0, 1)?;
        let mean_gain = g.slice_cols(gains, 1, 2)?;
        let m0 = self.mean.forward(g, p, s)?;
        let a = g.mul_scalar(mt, input_gain)?;
        let b = g.mul_scalar(m0, mean_gain)?;
        let out = g.add(out, a)?;
        g.add(out, b)
    }
}

#[derive(Debug, Clone)]
struct Conv2dLayer {
    w: ParamId,
    b: ParamId,
}

impl Conv2dLayer {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize) -> Self {
        let std = (2.0 / (9 * cin) as f64).sqrt();
        Self {
            w: store.add(format!("{name}.w"), randn(rng, &[cout, cin, 3, 3], std)),
            b: store.add(format!("{name}.b"), randn(rng, &[cout], 0.1)),
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p[self.w], p[self.b])
    }
}

/// Four 2-D residual blocks with pooling and a linear head to 48 dims.
/// Built from a seed and used frozen.
#[derive(Debug, Clone)]
pub struct StyleEncoder {
    stem: Conv2dLayer,
    blocks: Vec<(Conv2dLayer, Conv2dLayer)>,
    head: Dense,
}

impl StyleEncoder {
    pub fn new(cfg: &NetConfig, seed: u64) -> (Self, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = cfg.style_channels;
        let stem = Conv2dLayer::new(&mut store, &mut rng, "style.stem", 1, c);
        let blocks = (0..4)
            .map(|i| {
                (
                    Conv2dLayer::new(&mut store, &mut rng, &format!("style.block{i}.a"), c, c),
                    Conv2dLayer::new(&mut store, &mut rng, &format!("style.block{i}.b"), c, c),
                )
            })
            .collect();
        let head = Dense::new(
            &mut store,
            &mut rng,
            "style.head",
            c,
            STYLE_DIM,
            (1.0 / c as f64).sqrt(),
        );
        (Self { stem, blocks, head }, store)
    }

    /// `[frames, n_mels]` → `[48]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, mel: Var) -> Result<Var> {
        let (t, m) = match *g.shape(mel) {
            [t, m] => (t, m),
            _ => return Err(Error::invalid("style encoder expects a [frames, bands] mel")),
        };
        let x = g.reshape(mel, &[1, t, m])?;
        let mut h = self.stem.forward(g, p, x)?;
        for (a, b) in &self.blocks {
            let r = g.silu(h);
            let r = a.forward(g, p, r)?;
            let r = g.silu(r);
            let r = b.forward(g, p, r)?;
            h = g.add(h, r)?;
            let shape = g.shape(h);
            if shape[1] >= 2 && shape[2] >= 2 {
                h = g.avg_pool2(h)?;
            }
        }
        let pooled = g.global_avg_pool(h)?;
        let c = g.shape(pooled)[0];
        let pooled = g.reshape(pooled, &[1, c])?;
        let out = self.head.forward(g, p, pooled)?;
        g.reshape(out, &[STYLE_DIM])
    }
}

/// Soft-argmax F0 estimate per frame: a temperature softmax over the bands
/// of a normalized mel, dotted with the band centre frequencies.
pub fn pitch_proxy(g: &mut Graph, mel: Var, centers: &[f64], temperature: f64) -> Result<Var> {
    let shape = g.shape(mel).to_vec();
    if shape.len() != 2 || shape[1] != centers.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![shape.first().copied().unwrap_or(0), centers.len()],
            found: shape,
        });
    }
    let logits = g.scale(mel, 1.0 / temperature);
    let weights = g.softmax_rows(logits)?;
    let c = g.constant(Tensor::matrix(centers.len(), 1, centers.to_vec())?);
    let f = g.matmul(weights, c)?;
    g.reshape(f, &[shape[0]])
}
