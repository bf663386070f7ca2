//! Central finite-difference verification of autodiff gradients.
//!
//! The reported error is `max_i |a_i − f_i| / max(‖a‖∞, ‖f‖∞)` over the
//! checked coordinates, where `a` is the autodiff gradient and `f` the
//! finite-difference estimate.

use super::{Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result};

fn scalar_output(g: &Graph, out: Var) -> Result<f64> {
    let t = g.value(out);
    if t.len() != 1 {
        return Err(Error::invalid(format!(
            "gradient check needs a scalar output, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.item())
}

fn compare(
    analytic: &[f64],
    x: &Tensor,
    eps: f64,
    coords: &[usize],
    eval: impl Fn(&Tensor) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut probe = x.clone();
    for &i in coords {
        if i >= x.len() {
            return Err(Error::invalid(format!("coordinate {i} out of {}", x.len())));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let lo = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let fd = (hi - lo) / (2.0 * eps);
        worst = worst.max((analytic[i] - fd).abs());
        scale = scale.max(analytic[i].abs()).max(fd.abs());
    }
    if worst == 0.0 {
        return Ok(0.0);
    }
    Ok(worst / scale.max(1e-12))
}

/// Checks the gradient of scalar `f` with respect to its input `x` on the
/// listed coordinates (all of them when `coords` is `None`).
pub fn grad_check_coords<F>(f: F, x: &Tensor, eps: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let out = f(&mut g, xv)?;
    scalar_output(&g, out)?;
    let analytic = g.backward(out).get_or_zeros(xv, x.len());
    let all: Vec<usize> = (0..x.len()).collect();
    compare(&analytic, x, eps, coords.unwrap_or(&all), |probe| {
        let mut g = Graph::new();
        let xv = g.input(probe.clone());
        let out = f(&mut g, xv)?;
        scalar_output(&g, out)
    })
}

pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_coords(f, x, eps, None)
}

/// Checks the gradient of scalar `f` with respect to one parameter tensor.
pub fn grad_check_param<F>(store: &ParamStore, id: ParamId, f: F, eps: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: Fn(&mut Graph, &Bound) -> Result<Var>,
{
    let mut g = Graph::new();
    let p = store.bind(&mut g);
    let out = f(&mut g, &p)?;
    scalar_output(&g, out)?;
    let x = store.get(id);
    let analytic = g.backward(out).get_or_zeros(p[id], x.len());
    let all: Vec<usize> = (0..x.len()).collect();
    compare(&analytic, x, eps, coords.unwrap_or(&all), |probe| {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let pv = g.input(probe.clone());
        let p = p.with(id, pv);
        let out = f(&mut g, &p)?;
        scalar_output(&g, out)
    })
}
