//! RMSprop with per-group mean-square accumulators.

use crate::error::{Error, Result};
use crate::params::{Gradients, Group, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 0.001,
            rho: 0.9,
            eps: 1e-8,
        }
    }
}

/// Mean-square accumulators, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    accumulators: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(params: &ModelParams) -> Self {
        OptimState {
            accumulators: Group::ALL
                .iter()
                .map(|&g| vec![0.0; params.group(g).len()])
                .collect(),
        }
    }

    pub fn group(&self, g: Group) -> &[f64] {
        &self.accumulators[g.index()]
    }

    pub fn group_mut(&mut self, g: Group) -> &mut [f64] {
        &mut self.accumulators[g.index()]
    }

    pub fn len(&self) -> usize {
        self.accumulators.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when every buffer has the length of the matching parameter group.
    pub fn matches(&self, params: &ModelParams) -> bool {
        Group::ALL
            .iter()
            .all(|&g| self.group(g).len() == params.group(g).len())
    }
}

#[inline]
fn single(x: f64) -> f64 {
    x as f32 as f64
}

/// One in-place update of `group`:
/// `s <- rho s + (1 - rho) g^2; theta <- theta - lr g / (sqrt(s) + eps)`.
/// Parameters and accumulators are rounded to single precision afterwards.
pub fn rmsprop_step(
    params: &mut ModelParams,
    group: Group,
    grad: &[f64],
    state: &mut OptimState,
    opt: RmsProp,
) -> Result<()> {
    update(
        params.group_mut(group),
        &mut state.accumulators[group.index()],
        grad,
        opt,
        group.name(),
    )
}

/// The same update on raw buffers; `name` labels errors.
pub fn update(
    theta: &mut [f64],
    acc: &mut [f64],
    grad: &[f64],
    opt: RmsProp,
    name: &'static str,
) -> Result<()> {
    if grad.len() != theta.len() || acc.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "{name}: {} gradients for {} parameters ({} accumulators)",
            grad.len(),
            theta.len(),
            acc.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(name));
    }
    for ((t, s), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        *s = single(opt.rho * *s + (1.0 - opt.rho) * g * g);
        if g != 0.0 {
            *t = single(*t - opt.lr * g / (s.sqrt() + opt.eps));
        }
    }
    Ok(())
}

/// Applies every group present in `grads`. All gradients are validated
/// before any parameter changes.
pub fn apply(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimState,
    opt: RmsProp,
) -> Result<()> {
    for (g, v) in grads.groups() {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(g.name()));
        }
    }
    for (g, v) in grads.groups() {
        rmsprop_step(params, g, v, state, opt)?;
    }
    Ok(())
}
