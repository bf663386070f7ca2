//! Linear-β DDPM schedule, forward noising, the reverse update and the
//! shallow-diffusion sampling loop.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::features::MelSpectrogram;
use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 6e-2;
pub const DEFAULT_SHALLOW_STEP: usize = 60;

/// Per-step coefficients, stored 1-based: index `t` holds step `t` and
/// index 0 holds the `ᾱ_0 = 1` boundary (β_0 = 0, σ_0 = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    steps: usize,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps {
            return Err(Error::invalid(format!("diffusion step {t} outside 1..={}", self.steps)));
        }
        Ok(())
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        linear_beta_schedule(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("default schedule is valid")
    }
}

/// A mel tensor at diffusion step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMel {
    pub t: usize,
    pub mel: MelSpectrogram,
}

pub fn linear_beta_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("need at least 2 diffusion steps, got {steps}")));
    }
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "beta bounds must satisfy 0 < {beta_start} < {beta_end} < 1"
        )));
    }
    let mut beta = vec![0.0; steps + 1];
    let mut alpha = vec![1.0; steps + 1];
    let mut alpha_bar = vec![1.0; steps + 1];
    let mut sigma = vec![0.0; steps + 1];
    for t in 1..=steps {
        beta[t] = beta_start + (t - 1) as f64 / (steps - 1) as f64 * (beta_end - beta_start);
        alpha[t] = 1.0 - beta[t];
        alpha_bar[t] = alpha_bar[t - 1] * alpha[t];
        sigma[t] = ((1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t]).sqrt();
    }
    Ok(DiffusionSchedule {
        steps,
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

fn check_same_len(a: &MelSpectrogram, b: &[f64]) -> Result<()> {
    if a.data.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            found: vec![b.len()],
        });
    }
    Ok(())
}

/// `M_t = sqrt(ᾱ_t)·M_0 + sqrt(1−ᾱ_t)·ε`.
pub fn q_sample(m0: &MelSpectrogram, t: usize, eps: &[f64], sched: &DiffusionSchedule) -> Result<NoisyMel> {
    sched.check_step(t)?;
    check_same_len(m0, eps)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = m0.data.iter().zip(eps).map(|(x, e)| a * x + b * e).collect();
    Ok(NoisyMel {
        t,
        mel: MelSpectrogram { data, ..*m0 },
    })
}

/// One reverse update from step `t` to `t − 1` given the predicted noise.
pub fn reverse_step(mt: &NoisyMel, eps_hat: &[f64], z: &[f64], sched: &DiffusionSchedule) -> Result<NoisyMel> {
    let t = mt.t;
    sched.check_step(t)?;
    check_same_len(&mt.mel, eps_hat)?;
    check_same_len(&mt.mel, z)?;
    let alpha = sched.alpha(t);
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let coef = (1.0 - alpha) / (1.0 - sched.alpha_bar(t)).sqrt();
    let sigma = sched.sigma(t);
    let data = mt
        .mel
        .data
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((m, e), z)| inv_sqrt_alpha * (m - coef * e) + sigma * z)
        .collect();
    Ok(NoisyMel {
        t: t - 1,
        mel: MelSpectrogram { data, ..mt.mel },
    })
}

/// Noises the decoder output `m_hat` directly to step `q`.
pub fn shallow_diffusion_init(
    m_hat: &MelSpectrogram,
    q: usize,
    eps: &[f64],
    sched: &DiffusionSchedule,
) -> Result<NoisyMel> {
    q_sample(m_hat, q, eps, sched)
}

pub fn gaussian_noise<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Runs the reverse chain from `q` down to 0 starting at the shallow
/// diffusion of `m_hat`, and clips the result to `[-1, 1]`.
///
/// `denoiser` predicts the noise in the current state; any conditioning it
/// needs is captured by the closure. Fresh Gaussian noise is added at every
/// step except the last. `q = 0` returns `m_hat` unchanged.
pub fn sample<R, F>(
    mut denoiser: F,
    m_hat: &MelSpectrogram,
    q: usize,
    sched: &DiffusionSchedule,
    rng: &mut R,
) -> Result<MelSpectrogram>
where
    R: Rng,
    F: FnMut(&NoisyMel) -> Result<Vec<f64>>,
{
    if q == 0 {
        return Ok(m_hat.clone());
    }
    let n = m_hat.data.len();
    let eps = gaussian_noise(rng, n);
    let mut state = shallow_diffusion_init(m_hat, q, &eps, sched)?;
    while state.t > 0 {
        let eps_hat = denoiser(&state)?;
        let z = if state.t == 1 {
            vec![0.0; n]
        } else {
            gaussian_noise(rng, n)
        };
        state = reverse_step(&state, &eps_hat, &z, sched)?;
    }
    let mut out = state.mel;
    for v in &mut out.data {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(out)
}
