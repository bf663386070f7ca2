//! Training objectives: style MSE, the concordance-weighted pitch loss, L1
//! reconstruction and the denoising MAE.
//!
//! Each loss has a plain `f64` form and a differentiable form in [`graph`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Both variances below this make the concordance coefficient degenerate.
pub const VARIANCE_EPS: f64 = 1e-8;
/// Lower bound on the `1 − CCC` factor of the pitch loss.
pub const PITCH_FACTOR_FLOOR: f64 = 0.01;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: vec![a],
            found: vec![b],
        });
    }
    if a == 0 {
        return Err(Error::Empty("loss input"));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean absolute difference.
pub fn l1_loss(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    check_len(m.len(), m_hat.len())?;
    Ok(m.iter().zip(m_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / m.len() as f64)
}

/// Mean squared difference of two style vectors.
pub fn style_loss(e: &[f64], e_hat: &[f64]) -> Result<f64> {
    check_len(e.len(), e_hat.len())?;
    Ok(e.iter().zip(e_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / e.len() as f64)
}

pub fn denoise_loss(eps: &[f64], eps_hat: &[f64]) -> Result<f64> {
    l1_loss(eps, eps_hat)
}

/// Population statistics behind the concordance correlation coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CccStats {
    pub rho: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub ccc: f64,
}

/// Concordance correlation coefficient with population (divide-by-K)
/// moments. When both sequences are constant the value is 1 if their means
/// agree within [`VARIANCE_EPS`] and 0 otherwise.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<CccStats> {
    check_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::invalid("CCC needs at least two samples"));
    }
    let (mu_x, mu_y) = (mean(x), mean(y));
    let k = x.len() as f64;
    let vx = x.iter().map(|v| (v - mu_x).powi(2)).sum::<f64>() / k;
    let vy = y.iter().map(|v| (v - mu_y).powi(2)).sum::<f64>() / k;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mu_x) * (b - mu_y)).sum::<f64>() / k;
    let (sigma_x, sigma_y) = (vx.sqrt(), vy.sqrt());
    let rho = if sigma_x > 0.0 && sigma_y > 0.0 {
        (cov / (sigma_x * sigma_y)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let ccc = if vx < VARIANCE_EPS && vy < VARIANCE_EPS {
        if (mu_x - mu_y).abs() < VARIANCE_EPS {
            1.0
        } else {
            0.0
        }
    } else {
        2.0 * cov / (vx + vy + (mu_x - mu_y).powi(2))
    };
    Ok(CccStats {
        rho,
        mu_x,
        mu_y,
        sigma_x,
        sigma_y,
        ccc,
    })
}

/// `max(1 − CCC, 0.01) · MSE` on F0 contours in Hz.
pub fn pitch_loss(f0: &[f64], f0_hat: &[f64]) -> Result<f64> {
    let c = ccc(f0, f0_hat)?.ccc;
    let mse = style_loss(f0, f0_hat)?;
    Ok((1.0 - c).max(PITCH_FACTOR_FLOOR) * mse)
}

/// Pearson correlation, 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Weights of the auxiliary-loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuxLossWeights {
    pub l1: f64,
    pub style: f64,
    pub pitch: f64,
}

impl Default for AuxLossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            style: 1.0,
            pitch: 1.0,
        }
    }
}

/// Component values of one auxiliary-loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuxBreakdown {
    pub l1: f64,
    pub style: f64,
    pub pitch: f64,
    pub total: f64,
}

pub mod graph {
    //! Differentiable versions of the losses.

    use super::{AuxBreakdown, AuxLossWeights, PITCH_FACTOR_FLOOR, VARIANCE_EPS};
    use crate::nn::{Graph, Tensor, Var};
    use crate::{Error, Result};

    fn same_shape(g: &Graph, a: Var, b: Var) -> Result<()> {
        if g.shape(a) != g.shape(b) {
            return Err(Error::ShapeMismatch {
                expected: g.shape(a).to_vec(),
                found: g.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn l1(g: &mut Graph, m: Var, m_hat: Var) -> Result<Var> {
        same_shape(g, m, m_hat)?;
        let d = g.sub(m, m_hat)?;
        let a = g.abs(d);
        Ok(g.mean(a))
    }

    pub fn mse(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
        same_shape(g, a, b)?;
        let d = g.sub(a, b)?;
        let s = g.square(d);
        Ok(g.mean(s))
    }

    pub fn style(g: &mut Graph, e: Var, e_hat: Var) -> Result<Var> {
        mse(g, e, e_hat)
    }

    pub fn denoise(g: &mut Graph, eps: Var, eps_hat: Var) -> Result<Var> {
        l1(g, eps, eps_hat)
    }

    fn centered(g: &mut Graph, x: Var) -> Result<(Var, Var)> {
        let mu = g.mean(x);
        let neg = g.scale(mu, -1.0);
        Ok((mu, g.add_scalar(x, neg)?))
    }

    pub fn ccc(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
        same_shape(g, x, y)?;
        if g.value(x).len() < 2 {
            return Err(Error::invalid("CCC needs at least two samples"));
        }
        let (mx, xc) = centered(g, x)?;
        let (my, yc) = centered(g, y)?;
        let sx = g.square(xc);
        let vx = g.mean(sx);
        let sy = g.square(yc);
        let vy = g.mean(sy);
        let (vxv, vyv) = (g.value(vx).item(), g.value(vy).item());
        if vxv < VARIANCE_EPS && vyv < VARIANCE_EPS {
            let equal = (g.value(mx).item() - g.value(my).item()).abs() < VARIANCE_EPS;
            return Ok(g.constant(Tensor::scalar(if equal { 1.0 } else { 0.0 })));
        }
        let p = g.mul(xc, yc)?;
        let cov = g.mean(p);
        let dm = g.sub(mx, my)?;
        let dm2 = g.square(dm);
        let v = g.add(vx, vy)?;
        let den = g.add(v, dm2)?;
        let num = g.scale(cov, 2.0);
        g.div(num, den)
    }

    pub fn pitch(g: &mut Graph, f0: Var, f0_hat: Var) -> Result<Var> {
        let c = ccc(g, f0, f0_hat)?;
        let neg = g.scale(c, -1.0);
        let one_minus = g.add_const(neg, 1.0);
        let factor = g.max_const(one_minus, PITCH_FACTOR_FLOOR);
        let err = mse(g, f0, f0_hat)?;
        g.mul(factor, err)
    }

    /// Graph nodes of the weighted auxiliary loss and its components.
    #[derive(Debug, Clone, Copy)]
    pub struct AuxTerms {
        pub total: Var,
        pub l1: Var,
        pub style: Var,
        pub pitch: Var,
    }

    impl AuxTerms {
        pub fn breakdown(&self, g: &Graph) -> AuxBreakdown {
            AuxBreakdown {
                l1: g.value(self.l1).item(),
                style: g.value(self.style).item(),
                pitch: g.value(self.pitch).item(),
                total: g.value(self.total).item(),
            }
        }
    }

    /// `w_l1·L1 + w_style·MSE(style(m), style(m̂)) + w_pitch·pitch(f0(m), f0(m̂))`
    /// where `m` is the target and `m_hat` the prediction.
    pub fn aux_total(
        g: &mut Graph,
        m: Var,
        m_hat: Var,
        style_encoder: &dyn Fn(&mut Graph, Var) -> Result<Var>,
        pitch_proxy: &dyn Fn(&mut Graph, Var) -> Result<Var>,
        weights: &AuxLossWeights,
    ) -> Result<AuxTerms> {
        let l1_term = l1(g, m, m_hat)?;
        let s = style_encoder(g, m)?;
        let s_hat = style_encoder(g, m_hat)?;
        let style_term = style(g, s, s_hat)?;
        let f = pitch_proxy(g, m)?;
        let f_hat = pitch_proxy(g, m_hat)?;
        let pitch_term = pitch(g, f, f_hat)?;
        let a = g.scale(l1_term, weights.l1);
        let b = g.scale(style_term, weights.style);
        let c = g.scale(pitch_term, weights.pitch);
        let ab = g.add(a, b)?;
        let total = g.add(ab, c)?;
        Ok(AuxTerms {
            total,
            l1: l1_term,
            style: style_term,
            pitch: pitch_term,
        })
    }
}
