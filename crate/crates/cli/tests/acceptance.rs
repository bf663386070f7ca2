//! Acceptance suite. Every criterion prints one PASS/FAIL line with the
//! tolerances it applied and its runtime against the limit, then asserts.
//!
//! Run with `cargo test -p svs-cli --test acceptance -- --nocapture` to see
//! the report lines.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svs_cli::commands::train::{denoiser_examples, load_denoiser};
use svs_cli::Profile;
use svs_core::audio::write_wav;
use svs_core::diffusion::{self, gaussian_noise, q_sample, reverse_step, DiffusionSchedule, NoisyMel};
use svs_core::features::{denormalize_mel, normalize_mel, MelConfig, MelFilterbank, MelSpectrogram};
use svs_core::losses::{self, ccc, pitch_loss};
use svs_core::metrics::{cosine_similarity, frame_mean_correlation, logf0_rmse, mcd, mel_mae, vuv_accuracy};
use svs_core::nn::io::{decode_tensor, encode_tensor, read_tensor, write_tensor};
use svs_core::nn::train::evaluate_denoiser;
use svs_core::nn::{
    fuse_embeddings, grad_check_coords, grad_check_param, pitch_proxy, project, AuxModel, Denoiser, DenoiserInputs,
    Graph, NetConfig, ParamStore, StyleEncoder, Tensor, Var, CONTENT_DIM, PRIOR_DIM,
};
use svs_core::score::{
    extract_f0_autocorr, parse_score, parse_scores, segment_on_silence, vocab, write_alignment, write_score,
    write_scores, AlignedPhone, MusicScore, Note, PitchConfig, SilenceConfig,
};
use svs_core::synth::{silence, sine, sine_sequence};

use common::{config_in, differing_files, svs_ok};

/// Collects the checks of one criterion and prints its report line.
struct Criterion {
    number: u32,
    title: &'static str,
    limit: Duration,
    started: Instant,
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Criterion {
    fn start(number: u32, title: &'static str, limit_seconds: u64) -> Self {
        Self {
            number,
            title,
            limit: Duration::from_secs(limit_seconds),
            started: Instant::now(),
            notes: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Records a measured value and whether it met its tolerance.
    fn check(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if !ok {
            self.failures.push(note.clone());
        }
        self.notes.push(note);
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed();
        let in_time = elapsed <= self.limit;
        if !in_time {
            self.failures.push(format!("runtime over {} s", self.limit.as_secs()));
        }
        let pass = self.failures.is_empty();
        println!(
            "criterion {} {} ({}): {}; runtime {:.2} s, limit {} s",
            self.number,
            if pass { "PASS" } else { "FAIL" },
            self.title,
            self.notes.join("; "),
            elapsed.as_secs_f64(),
            self.limit.as_secs()
        );
        assert!(pass, "criterion {} failed: {}", self.number, self.failures.join("; "));
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Criterion 1: losses against closed-form values.

/// Concordance correlation from population moments, written independently.
fn oracle_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    2.0 * cov / (vx + vy + (mx - my).powi(2))
}

fn oracle_mse(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

fn graph_pitch(x: &[f64], y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(x.to_vec()));
    let b = g.constant(Tensor::vector(y.to_vec()));
    let l = losses::graph::pitch(&mut g, a, b).unwrap();
    g.value(l).item()
}

fn graph_ccc(x: &[f64], y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let a = g.constant(Tensor::vector(x.to_vec()));
    let b = g.constant(Tensor::vector(y.to_vec()));
    let l = losses::graph::ccc(&mut g, a, b).unwrap();
    g.value(l).item()
}

#[test]
fn criterion_1_losses() {
    let mut c = Criterion::start(1, "CCC and pitch loss", 1);
    let x = [1.0, 2.0, 3.0];
    let y = [2.0, 4.0, 6.0];
    let tol = 1e-9;

    let oracle = oracle_ccc(&x, &y);
    let err = (oracle - 4.0 / 11.0).abs();
    c.check(err <= tol, format!("oracle CCC vs 4/11 err {err:.1e} <= {tol:.0e}"));
    let stats = ccc(&x, &y).unwrap();
    let err = (stats.ccc - 4.0 / 11.0)
        .abs()
        .max((graph_ccc(&x, &y) - 4.0 / 11.0).abs());
    c.check(
        err <= tol,
        format!("CCC([1,2,3],[2,4,6]) = 4/11 err {err:.1e} <= {tol:.0e}"),
    );

    let oracle_pitch = (1.0 - oracle) * oracle_mse(&x, &y);
    let err = (oracle_pitch - 98.0 / 33.0).abs();
    c.check(err <= tol, format!("oracle pitch vs 98/33 err {err:.1e} <= {tol:.0e}"));
    let p = pitch_loss(&x, &y).unwrap();
    let err = (p - 98.0 / 33.0).abs().max((graph_pitch(&x, &y) - 98.0 / 33.0).abs());
    c.check(err <= tol, format!("pitch loss = 98/33 err {err:.1e} <= {tol:.0e}"));

    let same = pitch_loss(&x, &x).unwrap().abs().max(graph_pitch(&x, &x).abs());
    c.check(same <= tol, format!("pitch loss(x, x) = {same:.1e}"));

    // CCC is above 0.99 here, so the factor sits on its floor
    let near = [1.01, 2.0, 3.0];
    let floor = 0.01 * oracle_mse(&x, &near);
    let r = oracle_ccc(&x, &near);
    let err = ((pitch_loss(&x, &near).unwrap() - floor).abs()).max((graph_pitch(&x, &near) - floor).abs()) / floor;
    c.check(
        r > 0.99 && err <= tol,
        format!("floor case (CCC {r:.6}) equals 0.01*MSE, rel err {err:.1e} <= {tol:.0e}"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(80.0..800.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(80.0..800.0)).collect();
        let want = oracle_ccc(&a, &b);
        worst = worst
            .max((ccc(&a, &b).unwrap().ccc - want).abs())
            .max((graph_ccc(&a, &b) - want).abs());
        let want = (1.0 - want).max(0.01) * oracle_mse(&a, &b);
        worst = worst.max(((pitch_loss(&a, &b).unwrap() - want) / want).abs());
    }
    c.check(
        worst <= tol,
        format!("200 random pairs vs oracle err {worst:.1e} <= {tol:.0e}"),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 2: autodiff gradients against central finite differences.

const FD_EPS: f64 = 1e-6;
const FD_TOL: f64 = 1e-3;
const GRAD_SEEDS: u64 = 100;

fn coords(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    if len <= k {
        return (0..len).collect();
    }
    let mut v = sample_indices(rng, len, k).into_vec();
    v.sort_unstable();
    v
}

/// `Σ out ⊙ r` with a fixed random `r`, so every output element matters.
fn weighted_sum(g: &mut Graph, out: Var, r: &Tensor) -> svs_core::Result<Var> {
    let r = g.constant(r.clone());
    let p = g.mul(out, r)?;
    Ok(g.sum(p))
}

fn perturbed(store: &ParamStore, rng: &mut ChaCha8Rng, scale: f64) -> ParamStore {
    let mut out = store.clone();
    let ids: Vec<_> = out.ids().collect();
    for id in ids {
        for v in out.get_mut(id).data_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

#[derive(Default)]
struct Worst(Vec<(&'static str, f64, usize)>);

impl Worst {
    fn add(&mut self, name: &'static str, err: f64) {
        match self.0.iter_mut().find(|(n, _, _)| *n == name) {
            Some(slot) => {
                slot.1 = slot.1.max(err);
                slot.2 += 1;
            }
            None => self.0.push((name, err, 1)),
        }
    }
}

#[test]
fn criterion_2_gradients() {
    let mut c = Criterion::start(2, "finite-difference gradient checks", 120);
    let net = NetConfig {
        aux_hidden: 8,
        aux_layers: 3,
        denoiser_hidden: 8,
        denoiser_layers: 2,
        style_channels: 4,
        ..NetConfig::default()
    };
    let centers = MelFilterbank::new(&MelConfig::default()).unwrap().centers().to_vec();
    let mut worst = Worst::default();
    let mut pitch_factor_min = f64::INFINITY;

    for seed in 0..GRAD_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        // projection
        let x = Tensor::randn(&[3, 7], 1.0, &mut rng);
        let w = Tensor::randn(&[7, 5], 0.5, &mut rng);
        let b = Tensor::randn(&[5], 0.5, &mut rng);
        let r = Tensor::randn(&[3, 5], 1.0, &mut rng);
        let f = |g: &mut Graph, x: Var, w: Var, b: Var| {
            let y = project(g, x, w, b)?;
            let y = g.tanh(y);
            weighted_sum(g, y, &r)
        };
        let e_x = grad_check_coords(
            |g, v| {
                let (w, b) = (g.constant(w.clone()), g.constant(b.clone()));
                f(g, v, w, b)
            },
            &x,
            FD_EPS,
            None,
        )
        .unwrap();
        let e_w = grad_check_coords(
            |g, v| {
                let (x, b) = (g.constant(x.clone()), g.constant(b.clone()));
                f(g, x, v, b)
            },
            &w,
            FD_EPS,
            None,
        )
        .unwrap();
        let e_b = grad_check_coords(
            |g, v| {
                let (x, w) = (g.constant(x.clone()), g.constant(w.clone()));
                f(g, x, w, v)
            },
            &b,
            FD_EPS,
            None,
        )
        .unwrap();
        worst.add("project", e_x.max(e_w).max(e_b));

        // embedding fusion
        let parts: Vec<Tensor> = (0..3).map(|_| Tensor::randn(&[4, 6], 1.0, &mut rng)).collect();
        let r = Tensor::randn(&[4, 6], 1.0, &mut rng);
        let mut e_fuse = 0.0f64;
        for k in 0..3 {
            let e = grad_check_coords(
                |g, v| {
                    let mut vars: Vec<Var> = parts.iter().map(|t| g.constant(t.clone())).collect();
                    vars[k] = v;
                    let y = fuse_embeddings(g, vars[0], vars[1], vars[2])?;
                    let y = g.tanh(y);
                    weighted_sum(g, y, &r)
                },
                &parts[k],
                FD_EPS,
                None,
            )
            .unwrap();
            e_fuse = e_fuse.max(e);
        }
        worst.add("fuse", e_fuse);

        // auxiliary decoder, input and one parameter tensor per seed
        let (aux, store) = AuxModel::new(&net, seed);
        let store = perturbed(&store, &mut rng, 0.05);
        let e_c = Tensor::randn(&[5, CONTENT_DIM], 0.5, &mut rng);
        let r = Tensor::randn(&[5, net.n_mels], 1.0, &mut rng);
        let sel = coords(&mut rng, e_c.len(), 12);
        let e_in = grad_check_coords(
            |g, v| {
                let p = store.bind_frozen(g);
                let y = aux.decoder.forward(g, &p, v)?;
                weighted_sum(g, y, &r)
            },
            &e_c,
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        let dec_ids: Vec<_> = store
            .ids()
            .filter(|&id| store.names()[id.index()].starts_with("aux."))
            .collect();
        let id = dec_ids[seed as usize % dec_ids.len()];
        let sel = coords(&mut rng, store.get(id).len(), 12);
        let e_p = grad_check_param(
            &store,
            id,
            |g, p| {
                let x = g.constant(e_c.clone());
                let y = aux.decoder.forward(g, p, x)?;
                weighted_sum(g, y, &r)
            },
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        worst.add("aux_decoder", e_in.max(e_p));

        // denoiser, noisy-mel input and one parameter tensor per seed
        let (den, store) = Denoiser::new(&net, seed);
        let store = perturbed(&store, &mut rng, 0.05);
        let frames = 5;
        let mt = Tensor::randn(&[frames, net.n_mels], 1.0, &mut rng);
        let e_c = Tensor::randn(&[frames, CONTENT_DIM], 0.5, &mut rng);
        let mert = Tensor::randn(&[PRIOR_DIM], 0.03, &mut rng);
        let vec = Tensor::randn(&[PRIOR_DIM], 0.03, &mut rng);
        let r = Tensor::randn(&[frames, net.n_mels], 1.0, &mut rng);
        let t = 1 + (seed as usize * 37) % 100;
        let run = |g: &mut Graph, p: &svs_core::nn::Bound, mt: Var| {
            let cond = DenoiserInputs {
                e_c: g.constant(e_c.clone()),
                t,
                e_mert: g.constant(mert.clone()),
                e_vec: g.constant(vec.clone()),
            };
            let y = den.forward(g, p, mt, &cond)?;
            weighted_sum(g, y, &r)
        };
        let sel = coords(&mut rng, mt.len(), 12);
        let e_in = grad_check_coords(
            |g, v| {
                let p = store.bind_frozen(g);
                run(g, &p, v)
            },
            &mt,
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        let ids: Vec<_> = store.ids().collect();
        let id = ids[seed as usize % ids.len()];
        let sel = coords(&mut rng, store.get(id).len(), 12);
        let e_p = grad_check_param(
            &store,
            id,
            |g, p| {
                let x = g.constant(mt.clone());
                run(g, p, x)
            },
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        worst.add("denoiser", e_in.max(e_p));

        // style loss through the frozen style encoder
        let (enc, store) = StyleEncoder::new(&net, seed);
        let mel = uniform(&mut rng, &[8, net.n_mels], -1.0, 1.0);
        let target = uniform(&mut rng, &[8, net.n_mels], -1.0, 1.0);
        let sel = coords(&mut rng, mel.len(), 16);
        let e = grad_check_coords(
            |g, v| {
                let p = store.bind_frozen(g);
                let s = enc.forward(g, &p, v)?;
                let m = g.constant(target.clone());
                let s_ref = enc.forward(g, &p, m)?;
                losses::graph::style(g, s_ref, s)
            },
            &mel,
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        worst.add("style_encoder+style_loss", e);

        // pitch loss through the soft-argmax pitch proxy
        let mel = uniform(&mut rng, &[6, net.n_mels], -1.0, 1.0);
        let target = uniform(&mut rng, &[6, net.n_mels], -1.0, 1.0);
        let proxy = |g: &mut Graph, m: Var| pitch_proxy(g, m, &centers, net.pitch_temperature);
        {
            let mut g = Graph::new();
            let a = g.constant(mel.clone());
            let b = g.constant(target.clone());
            let (fa, fb) = (proxy(&mut g, a).unwrap(), proxy(&mut g, b).unwrap());
            let cc = ccc(g.value(fb).data(), g.value(fa).data()).unwrap().ccc;
            pitch_factor_min = pitch_factor_min.min(1.0 - cc);
        }
        let sel = coords(&mut rng, mel.len(), 16);
        let e = grad_check_coords(
            |g, v| {
                let m = g.constant(target.clone());
                let f = proxy(g, m)?;
                let f_hat = proxy(g, v)?;
                losses::graph::pitch(g, f, f_hat)
            },
            &mel,
            FD_EPS,
            Some(&sel),
        )
        .unwrap();
        worst.add("pitch_proxy+pitch_loss", e);

        // L1, with every difference at least 0.05 away from the kink at 0
        let m = uniform(&mut rng, &[5, 7], -1.0, 1.0);
        let m_hat = Tensor::new(
            vec![5, 7],
            m.data()
                .iter()
                .map(|&v| {
                    let off = rng.gen_range(0.05..0.5);
                    if rng.gen_bool(0.5) {
                        v + off
                    } else {
                        v - off
                    }
                })
                .collect(),
        )
        .unwrap();
        let e = grad_check_coords(
            |g, v| {
                let t = g.constant(m.clone());
                losses::graph::l1(g, t, v)
            },
            &m_hat,
            FD_EPS,
            None,
        )
        .unwrap();
        worst.add("l1", e);
    }

    for &(name, err, n) in &worst.0 {
        c.check(
            err <= FD_TOL && n as u64 >= GRAD_SEEDS,
            format!("{name} max err {err:.1e} <= {FD_TOL:.0e} over {n} seeds"),
        );
    }
    c.check(
        pitch_factor_min > 0.02,
        format!("pitch probes stay off the factor floor (min 1-CCC {pitch_factor_min:.3})"),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 3: diffusion schedule, inversion and forward-noising variance.

/// `ᾱ_t` from the linear schedule, computed without the library.
fn oracle_alpha_bar(t: usize) -> f64 {
    (1..=t)
        .map(|s| 1.0 - (1e-4 + (s - 1) as f64 / 99.0 * (0.06 - 1e-4)))
        .product()
}

fn random_mel(rng: &mut ChaCha8Rng, frames: usize, bands: usize) -> MelSpectrogram {
    MelSpectrogram::new(
        frames,
        bands,
        (0..frames * bands).map(|_| rng.gen_range(-0.9..0.9)).collect(),
    )
    .unwrap()
}

#[test]
fn criterion_3_diffusion() {
    let mut c = Criterion::start(3, "diffusion schedule and sampling", 60);
    let sched = DiffusionSchedule::default();
    c.check(
        sched.steps() == 100 && sched.beta(1) == 1e-4 && sched.beta(100) == 0.06,
        format!(
            "T = {}, beta_1 = {:e}, beta_T = {} (exact)",
            sched.steps(),
            sched.beta(1),
            sched.beta(100)
        ),
    );
    let decreasing = (1..100).all(|t| sched.alpha_bar(t + 1) < sched.alpha_bar(t));
    c.check(decreasing, "alpha_bar strictly decreasing over 1..=100");
    let ab_err = (1..=100)
        .map(|t| (sched.alpha_bar(t) - oracle_alpha_bar(t)).abs())
        .fold(0.0, f64::max);
    c.check(
        ab_err <= 1e-12,
        format!("alpha_bar vs oracle product err {ab_err:.1e} <= 1e-12"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inv_err = 0.0f64;
    let mut sample_err = 0.0f64;
    let ab1 = oracle_alpha_bar(1);
    for _ in 0..20 {
        let m0 = random_mel(&mut rng, 4, 80);
        let eps = gaussian_noise(&mut rng, m0.data.len());
        let m1 = q_sample(&m0, 1, &eps, &sched).unwrap();
        let by_hand: Vec<f64> = m0
            .data
            .iter()
            .zip(&eps)
            .map(|(x, e)| ab1.sqrt() * x + (1.0 - ab1).sqrt() * e)
            .collect();
        inv_err = inv_err.max(max_abs_diff(&m1.mel.data, &by_hand));
        let back = reverse_step(&m1, &eps, &vec![0.0; eps.len()], &sched).unwrap();
        inv_err = inv_err.max(max_abs_diff(&back.mel.data, &m0.data));

        // an oracle denoiser that recovers the exact noise of the current state
        let oracle = |s: &NoisyMel| {
            let ab = oracle_alpha_bar(s.t);
            Ok(s.mel
                .data
                .iter()
                .zip(&m0.data)
                .map(|(x, m)| (x - ab.sqrt() * m) / (1.0 - ab).sqrt())
                .collect())
        };
        let out = diffusion::sample(oracle, &m0, 1, &sched, &mut rng).unwrap();
        sample_err = sample_err.max(max_abs_diff(&out.data, &m0.data));
    }
    c.check(
        inv_err <= 1e-9,
        format!("one-step inversion with true noise err {inv_err:.1e} <= 1e-9"),
    );
    c.check(
        sample_err <= 1e-9,
        format!("q = 1 sampling with oracle denoiser err {sample_err:.1e} <= 1e-9"),
    );

    let m0 = MelSpectrogram::filled(100, 80, 0.3);
    for t in [1, 50, 100] {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for _ in 0..25 {
            let eps = gaussian_noise(&mut rng, m0.data.len());
            let mt = q_sample(&m0, t, &eps, &sched).unwrap();
            for &v in &mt.mel.data {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let want = 1.0 - oracle_alpha_bar(t);
        let rel = (var - want).abs() / want;
        c.check(
            rel <= 0.02,
            format!("t = {t}: variance {var:.5} vs 1-alpha_bar {want:.5}, rel err {rel:.4} <= 0.02 ({n} samples)"),
        );
    }
    c.finish();
}

// ---------------------------------------------------------------------------
// Criteria 4 and 8: the toy pipeline through the binary, run twice.

const TOY: [&str; 2] = ["--profile", "toy"];

fn toy(dir: &Path, args: &[&str]) -> String {
    let mut all: Vec<&str> = TOY.to_vec();
    all.extend_from_slice(args);
    svs_ok(dir, &all)
}

fn run_toy_pipeline(dir: &Path) -> Vec<String> {
    vec![
        svs_ok(dir, &["toy-corpus", "--out", "data"]),
        toy(dir, &["score", "build"]),
        toy(dir, &["features", "extract"]),
        toy(dir, &["train", "aux"]),
        toy(dir, &["train", "denoiser"]),
        toy(dir, &["synthesize"]),
    ]
}

fn read_mel(path: &Path) -> MelSpectrogram {
    let t = read_tensor(path).unwrap();
    MelSpectrogram::new(t.shape()[0], t.shape()[1], t.into_data()).unwrap()
}

#[test]
fn criteria_4_and_8_toy_pipeline_and_determinism() {
    let mut c = Criterion::start(4, "toy pipeline overfits through the CLI", 15 * 60);
    let first = tempfile::tempdir().unwrap();
    let dir = first.path();
    let logs = run_toy_pipeline(dir);
    let cfg = config_in(dir, Profile::Toy, &[]);

    let csv = std::fs::read_to_string(cfg.paths.checkpoint_dir.join("aux_loss.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    let l1: f64 = cols[1].parse().unwrap();
    let iterations: u64 = cols[0].parse().unwrap();
    c.check(
        l1 < 0.05 && iterations <= 2000,
        format!("aux L1 {l1:.4} < 0.05 after {iterations} <= 2000 iterations"),
    );

    let printed = logs[4]
        .split("mae ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(f64::NAN);
    let data = denoiser_examples(&cfg).unwrap();
    let sched = cfg.diffusion.schedule().unwrap();
    let (model, params) = load_denoiser(&cfg).unwrap();
    let trained = evaluate_denoiser(&model, &params, &data, &sched, 16, 4242).unwrap();
    let (init_model, init_params) = Denoiser::new(&cfg.net, cfg.denoiser.seed);
    let initial = evaluate_denoiser(&init_model, &init_params, &data, &sched, 16, 4242).unwrap();
    let expected = (2.0 / std::f64::consts::PI).sqrt();
    c.check(
        (initial - expected).abs() < 0.05,
        format!("random-init MAE {initial:.4} within 0.05 of sqrt(2/pi) = {expected:.4}"),
    );
    c.check(
        trained < 0.5 && printed < 0.5,
        format!("denoiser MAE {trained:.4} (printed {printed:.4}) < 0.5, from {initial:.4} at initialisation"),
    );

    let scores = parse_scores(&std::fs::read(&cfg.paths.score_file).unwrap()).unwrap();
    let mut corr = Vec::new();
    for s in &scores {
        let out = read_mel(&cfg.paths.output_dir.join(format!("{}.mel.emb", s.utterance_id)));
        let target = read_mel(&cfg.paths.feature_dir.join(format!("{}.mel.emb", s.utterance_id)));
        let n = out.n_frames.min(target.n_frames);
        corr.push(frame_mean_correlation(&out.truncated(n), &target.truncated(n)).unwrap());
        let wav = cfg.paths.output_dir.join(format!("{}.wav", s.utterance_id));
        c.check(
            wav.is_file(),
            format!("{} written", wav.file_name().unwrap().to_string_lossy()),
        );
    }
    let min = corr.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = corr.iter().sum::<f64>() / corr.len().max(1) as f64;
    c.check(
        !corr.is_empty() && min > 0.8,
        format!(
            "q = {} output vs target frame-mean correlation min {min:.3} mean {mean:.3} > 0.8 over {} utterances",
            cfg.diffusion.q,
            corr.len()
        ),
    );
    c.finish();

    let mut c = Criterion::start(8, "determinism of train and synthesize", 15 * 60);
    let first_outputs = tempfile::tempdir().unwrap();
    copy_tree(&cfg.paths.output_dir, first_outputs.path());
    toy(dir, &["synthesize"]);
    let diff = differing_files(first_outputs.path(), &cfg.paths.output_dir);
    c.check(
        diff.is_empty(),
        format!("repeated synthesize identical ({} differing files)", diff.len()),
    );

    let second = tempfile::tempdir().unwrap();
    run_toy_pipeline(second.path());
    let work = |d: &Path| d.join("work");
    let diff = differing_files(&work(dir), &work(second.path()));
    let n = common::files_under(&work(dir)).len();
    c.check(
        diff.is_empty(),
        format!("second full run byte-identical over {n} files (checkpoints, loss CSVs, features, outputs), {} differing {diff:?}", diff.len()),
    );
    c.finish();
}

fn copy_tree(from: &Path, to: &Path) {
    for rel in common::files_under(from) {
        let dst = to.join(&rel);
        std::fs::create_dir_all(dst.parent().unwrap()).unwrap();
        std::fs::copy(from.join(&rel), dst).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: the two-phrase slur fixture and pure-tone pitch accuracy.

fn phone(phone: &str, start: f64, end: f64, syllable_id: u32) -> AlignedPhone {
    AlignedPhone {
        phone: phone.into(),
        start,
        end,
        syllable_id,
    }
}

/// 300 ms at 220 Hz then 300 ms at 246.94 Hz in one syllable, 600 ms of
/// silence, then a 400 ms syllable at 246.94 Hz.
fn slur_fixture() -> (Vec<f64>, Vec<AlignedPhone>) {
    let mut wave = silence(0.3);
    wave.extend(sine_sequence(&[(220.0, 0.3), (246.94, 0.3)], 0.5));
    wave.extend(silence(0.6));
    wave.extend(sine(246.94, 0.5, 0.4));
    wave.extend(silence(0.3));
    let phones = vec![
        phone("SP", 0.0, 0.3, 0),
        phone("aa", 0.3, 0.9, 1),
        phone("SP", 0.9, 1.5, 2),
        phone("ii", 1.5, 1.9, 3),
        phone("SP", 1.9, 2.2, 4),
    ];
    (wave, phones)
}

fn notes_and_slurs(scores: &[MusicScore]) -> (Vec<u8>, usize) {
    let mut notes: Vec<u8> = scores
        .iter()
        .flat_map(|s| s.notes.iter().filter_map(|n| n.midi()))
        .collect();
    notes.sort_unstable();
    notes.dedup();
    let slurs = scores.iter().flat_map(|s| &s.slur_flags).filter(|&&f| f == 1).count();
    (notes, slurs)
}

#[test]
fn criterion_5_fixture_and_pitch() {
    let mut c = Criterion::start(5, "score fixture and pitch tracker", 30);
    let (wave, phones) = slur_fixture();

    let spans = segment_on_silence(&wave, &SilenceConfig::default()).unwrap();
    c.check(
        spans.len() == 2,
        format!("core segmentation: {} phrases (want 2)", spans.len()),
    );

    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), Profile::Default, &[]);
    std::fs::create_dir_all(&cfg.paths.audio_dir).unwrap();
    std::fs::create_dir_all(&cfg.paths.alignment_dir).unwrap();
    write_wav(&cfg.paths.audio_dir.join("fixture.wav"), &wave).unwrap();
    std::fs::write(cfg.paths.alignment_dir.join("fixture.tsv"), write_alignment(&phones)).unwrap();
    svs_ok(dir.path(), &["score", "build"]);
    let scores = parse_scores(&std::fs::read(&cfg.paths.score_file).unwrap()).unwrap();
    let (notes, slurs) = notes_and_slurs(&scores);
    c.check(
        scores.len() == 2,
        format!("score build: {} phrases (want 2)", scores.len()),
    );
    c.check(notes == [57, 59], format!("MIDI notes {notes:?} (want [57, 59])"));
    c.check(slurs == 1, format!("{slurs} slur flag (want 1)"));
    let phrase_one_slur = scores
        .first()
        .is_some_and(|s| s.slur_flags.iter().filter(|&&f| f == 1).count() == 1);
    c.check(phrase_one_slur, "the slur belongs to the first phrase");

    let tones = [80.0, 110.0, 150.0, 220.0, 330.0, 440.0, 600.0, 800.0];
    let mut worst = 0.0f64;
    let mut min_voiced = 1.0f64;
    for &f in &tones {
        let track = extract_f0_autocorr(&sine(f, 0.5, 0.5), &PitchConfig::default()).unwrap();
        let mut errs: Vec<f64> = track
            .f0_hz
            .iter()
            .zip(&track.voiced)
            .filter(|(_, &v)| v)
            .map(|(h, _)| (h - f).abs())
            .collect();
        min_voiced = min_voiced.min(errs.len() as f64 / track.len() as f64);
        errs.sort_by(f64::total_cmp);
        worst = worst.max(errs.get(errs.len() / 2).copied().unwrap_or(f64::INFINITY));
    }
    c.check(
        worst <= 2.0,
        format!("pure tones 80-800 Hz: worst median F0 error {worst:.3} Hz <= 2 Hz"),
    );
    c.check(
        min_voiced >= 0.8,
        format!("voiced fraction >= {min_voiced:.2} (want >= 0.8)"),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 6: metric identities and constructed cases.

#[test]
fn criterion_6_metrics() {
    let mut c = Criterion::start(6, "objective metrics", 10);
    let dir = tempfile::tempdir().unwrap();
    svs_ok(dir.path(), &["toy-corpus", "--out", "data", "--count", "2"]);
    let report = dir.path().join("report.json");
    svs_ok(
        dir.path(),
        &[
            "evaluate",
            "--reference",
            "data/wav",
            "--generated",
            "data/wav",
            "--out",
            "report.json",
        ],
    );
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let mean = &json["mean"];
    let get = |k: &str| mean[k].as_f64().unwrap_or(f64::NAN);
    let tol = 1e-12;
    let ok = get("mcd_db").abs() <= tol
        && get("logf0_rmse").abs() <= tol
        && get("mel_mae").abs() <= tol
        && (get("vuv_accuracy") - 1.0).abs() <= tol
        && (get("cosine_similarity") - 1.0).abs() <= tol;
    c.check(
        ok,
        format!(
            "evaluate on identical recordings: mcd {}, logf0 {}, mae {}, vuv {}, cosine {} (tol {tol:.0e})",
            get("mcd_db"),
            get("logf0_rmse"),
            get("mel_mae"),
            get("vuv_accuracy"),
            get("cosine_similarity")
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cep: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..13).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let f0: Vec<f64> = (0..50).map(|_| rng.gen_range(80.0..800.0)).collect();
    let voiced: Vec<bool> = (0..50).map(|i| i % 7 != 0).collect();
    let flat: Vec<f64> = cep.concat();
    let same = mcd(&cep, &cep).unwrap().abs()
        + logf0_rmse(&f0, &f0, &voiced, &voiced).unwrap().abs()
        + mel_mae(&flat, &flat).unwrap().abs()
        + (vuv_accuracy(&voiced, &voiced).unwrap() - 1.0).abs()
        + (cosine_similarity(&flat, &flat).unwrap() - 1.0).abs();
    c.check(
        same <= tol,
        format!("library identities total deviation {same:.1e} <= {tol:.0e}"),
    );

    let zero = vec![vec![0.0; 13]; 4];
    let mut one = zero.clone();
    for frame in &mut one {
        frame[3] = 1.0;
    }
    let want = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    let err = (mcd(&zero, &one).unwrap() - want).abs();
    c.check(
        err <= 1e-6,
        format!("unit single-coefficient MCD {want:.6} dB err {err:.1e} <= 1e-6"),
    );

    let all = vec![true; 50];
    let octave: Vec<f64> = f0.iter().map(|f| 2.0 * f).collect();
    let err = (logf0_rmse(&f0, &octave, &all, &all).unwrap() - std::f64::consts::LN_2).abs();
    c.check(err <= 1e-9, format!("octave logF0 RMSE = ln 2 err {err:.1e} <= 1e-9"));
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 7: score, tensor and mel round trips.

fn random_score(rng: &mut ChaCha8Rng, k: usize) -> MusicScore {
    let n = rng.gen_range(1..30);
    let letters = "abcdefghijklmnopqrstuvwxyz";
    let word = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.gen_range(1..8))
            .map(|_| letters.as_bytes()[rng.gen_range(0..26)] as char)
            .collect()
    };
    let text = (0..rng.gen_range(1..6))
        .map(|_| word(rng))
        .collect::<Vec<_>>()
        .join(" ");
    let micro = |rng: &mut ChaCha8Rng| rng.gen_range(1..5_000_000u32) as f64 / 1e6;
    MusicScore {
        utterance_id: format!("utt_{k:05}_{}", word(rng)),
        text,
        phones: (0..n)
            .map(|_| vocab::PHONES[rng.gen_range(0..vocab::PHONES.len())].to_string())
            .collect(),
        notes: (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Note::Rest
                } else {
                    Note::Midi(rng.gen_range(0..=127))
                }
            })
            .collect(),
        note_durations: (0..n).map(|_| micro(rng)).collect(),
        phone_durations: (0..n).map(|_| micro(rng)).collect(),
        slur_flags: (0..n).map(|_| rng.gen_range(0..=1)).collect(),
    }
}

#[test]
fn criterion_7_round_trips() {
    let mut c = Criterion::start(7, "serialization round trips", 30);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let scores: Vec<MusicScore> = (0..1000).map(|k| random_score(&mut rng, k)).collect();
    let single = scores
        .iter()
        .filter(|s| parse_score(&write_score(s).unwrap()).ok().as_ref() == Some(*s))
        .count();
    c.check(
        single == 1000,
        format!("{single}/1000 random scores survive write/parse exactly"),
    );
    let bytes = write_scores(&scores).unwrap();
    let back = parse_scores(&bytes).unwrap();
    c.check(back == scores, "1000-line score file round trip exact");
    c.check(
        write_scores(&back).unwrap() == bytes,
        "re-serialised score file byte-identical",
    );

    let dir = tempfile::tempdir().unwrap();
    let mut exact = 0;
    let total = 200;
    for k in 0..total {
        let rank = 1 + k % 3;
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..12)).collect();
        let len: usize = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-1e3f32..1e3f32) as f64).collect();
        let t = Tensor::new(shape, data).unwrap();
        let (decoded, used) = decode_tensor(&encode_tensor(&t)).unwrap();
        let path = dir.path().join(format!("t{k}.emb"));
        write_tensor(&path, &t).unwrap();
        let read = read_tensor(&path).unwrap();
        let bits = |x: &Tensor| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        if decoded.shape() == t.shape()
            && bits(&decoded) == bits(&t)
            && read.shape() == t.shape()
            && bits(&read) == bits(&t)
            && used == encode_tensor(&t).len()
        {
            exact += 1;
        }
    }
    c.check(
        exact == total,
        format!("{exact}/{total} f32-representable tensors bit-exact through bytes and files"),
    );

    let cfg = MelConfig::default();
    let (lo, hi) = (cfg.log_floor(), cfg.log_ceil());
    let data: Vec<f64> = (0..80 * 500).map(|_| rng.gen_range(lo..=hi)).collect();
    let m = MelSpectrogram::new(500, 80, data).unwrap();
    let back = denormalize_mel(&normalize_mel(&m, &cfg), &cfg);
    let rel = max_abs_diff(&m.data, &back.data) / (hi - lo);
    c.check(
        rel <= 1e-12,
        format!("mel normalise/denormalise inside bounds err {rel:.1e} of the range <= 1e-12"),
    );
    c.finish();
}
