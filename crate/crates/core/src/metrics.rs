//! Objective evaluation: mel-cepstral distortion, logF0 RMSE, mel MAE,
//! voiced/unvoiced agreement, cosine similarity and 2-D PCA.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::features::MelSpectrogram;
use crate::{Error, Result};

/// Per-utterance (or averaged) objective scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mcd_db: f64,
    pub logf0_rmse: f64,
    pub mel_mae: f64,
    pub vuv_accuracy: f64,
    pub cosine_similarity: f64,
}

impl EvalReport {
    /// Field-wise arithmetic mean.
    pub fn mean(reports: &[EvalReport]) -> Result<EvalReport> {
        if reports.is_empty() {
            return Err(Error::Empty("reports"));
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(EvalReport {
            mcd_db: avg(|r| r.mcd_db),
            logf0_rmse: avg(|r| r.logf0_rmse),
            mel_mae: avg(|r| r.mel_mae),
            vuv_accuracy: avg(|r| r.vuv_accuracy),
            cosine_similarity: avg(|r| r.cosine_similarity),
        })
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: vec![a],
            found: vec![b],
        });
    }
    Ok(())
}

/// `(10 / ln 10) · sqrt(2 Σ_d (c_d − ĉ_d)²)` averaged over frames.
pub fn mcd(c: &[Vec<f64>], c_hat: &[Vec<f64>]) -> Result<f64> {
    check_len(c.len(), c_hat.len())?;
    if c.is_empty() {
        return Err(Error::Empty("cepstra"));
    }
    let k = 10.0 / std::f64::consts::LN_10;
    let mut total = 0.0;
    for (a, b) in c.iter().zip(c_hat) {
        check_len(a.len(), b.len())?;
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        total += k * (2.0 * d2).sqrt();
    }
    Ok(total / c.len() as f64)
}

/// RMSE of natural-log F0 over frames voiced in both tracks.
pub fn logf0_rmse(f0: &[f64], f0_hat: &[f64], voiced: &[bool], voiced_hat: &[bool]) -> Result<f64> {
    check_len(f0.len(), f0_hat.len())?;
    check_len(f0.len(), voiced.len())?;
    check_len(f0.len(), voiced_hat.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..f0.len() {
        if voiced[i] && voiced_hat[i] && f0[i] > 0.0 && f0_hat[i] > 0.0 {
            sum += (f0[i].ln() - f0_hat[i].ln()).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoMutuallyVoiced);
    }
    Ok((sum / n as f64).sqrt())
}

pub fn mel_mae(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    crate::losses::l1_loss(m, m_hat)
}

pub fn vuv_accuracy(v: &[bool], v_hat: &[bool]) -> Result<f64> {
    check_len(v.len(), v_hat.len())?;
    if v.is_empty() {
        return Err(Error::Empty("voicing flags"));
    }
    let agree = v.iter().zip(v_hat).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / v.len() as f64)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Mean over frames of the Pearson correlation between matching mel frames.
///
/// A frame that is constant on one side scores 1 when both frames are equal
/// and 0 otherwise.
pub fn frame_mean_correlation(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    if a.n_frames == 0 {
        return Err(Error::Empty("mel frames"));
    }
    let total: f64 = a
        .frames()
        .zip(b.frames())
        .map(|(x, y)| {
            let flat = |v: &[f64]| v.iter().all(|&e| e == v[0]);
            if flat(x) || flat(y) {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            } else {
                crate::losses::pearson(x, y)
            }
        })
        .sum();
    Ok(total / a.n_frames as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub points: Vec<[f64; 2]>,
    /// Fractions of total variance carried by the two components, descending.
    pub explained: [f64; 2],
}

/// Projects mean-centred vectors onto the two leading covariance
/// eigenvectors. Each axis is sign-normalized so that its largest-magnitude
/// loading is positive.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Pca2d> {
    if vectors.len() < 3 {
        return Err(Error::invalid(format!(
            "PCA needs at least 3 vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    for v in vectors {
        check_len(dim, v.len())?;
    }
    let n = vectors.len();
    let mean: Vec<f64> = (0..dim)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    // eigen-decompose the smaller Gram form when there are fewer points than dims
    let (eig, use_gram) = if n < dim {
        (SymmetricEigen::new(&x * x.transpose() / n as f64), true)
    } else {
        (SymmetricEigen::new(x.transpose() * &x / n as f64), false)
    };
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = [eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]];
    let scale = total.max(f64::MIN_POSITIVE);
    if top[1] <= 1e-12 * scale || total <= 0.0 {
        return Err(Error::invalid("data has rank < 2 after centering"));
    }
    let mut axes = Vec::with_capacity(2);
    for &k in &order[..2] {
        let col = eig.eigenvectors.column(k);
        let mut axis: Vec<f64> = if use_gram {
            let v = x.transpose() * col;
            let norm = v.norm();
            v.iter().map(|a| a / norm).collect()
        } else {
            col.iter().copied().collect()
        };
        let pivot = axis
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            axis.iter_mut().for_each(|a| *a = -*a);
        }
        axes.push(axis);
    }
    let points = (0..n)
        .map(|i| {
            let row = x.row(i);
            let proj = |axis: &[f64]| row.iter().zip(axis).map(|(a, b)| a * b).sum::<f64>();
            [proj(&axes[0]), proj(&axes[1])]
        })
        .collect();
    Ok(Pca2d {
        points,
        explained: [top[0] / total, top[1] / total],
    })
}
