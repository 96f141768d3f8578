//! RMSProp: per-parameter step sizes from a decayed mean of squared
//! gradients.
//!
//! The update is
//!
//! ```text
//! mean_square ← decay·mean_square + (1 − decay)·grad²
//! param       ← param − lr·grad / sqrt(mean_square + epsilon)
//! ```
//!
//! applied tensor by tensor. The same scalar kernel drives both the network
//! update ([`rmsprop_step`]) and the tabular Q-learning loop.

use crate::error::{Error, Result};
use crate::nn::{Geometry, Gradients, ParamTensors, QNetParams};
use crate::tensor::Scalar;

pub const DEFAULT_DECAY: f64 = 0.95;
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_LEARNING_RATE: f64 = 2.5e-4;

/// Hyperparameters of the update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsPropHyper {
    pub decay: f64,
    pub epsilon_denom: f64,
    pub learning_rate: f64,
}

impl Default for RmsPropHyper {
    fn default() -> Self {
        RmsPropHyper {
            decay: DEFAULT_DECAY,
            epsilon_denom: DEFAULT_EPSILON,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

impl RmsPropHyper {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.decay > 0.0 && self.decay < 1.0) {
            problems.push(format!("rmsprop decay must be in (0,1), got {}", self.decay));
        }
        if !(self.epsilon_denom > 0.0 && self.epsilon_denom.is_finite()) {
            problems.push(format!(
                "rmsprop epsilon must be positive, got {}",
                self.epsilon_denom
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "rmsprop learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Optimizer state: one mean-square accumulator per parameter tensor, plus
/// the hyperparameters. Mean squares start at zero and stay nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub mean_square: ParamTensors<T>,
    pub hyper: RmsPropHyper,
}

impl<T: Scalar> RmsPropState<T> {
    pub fn new(geometry: &Geometry, hyper: RmsPropHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(RmsPropState {
            mean_square: ParamTensors::zeros(geometry)?,
            hyper,
        })
    }
}

/// The scalar update kernel shared by every consumer of the rule.
pub fn rmsprop_update_slice<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    mean_square: &mut [T],
    hyper: &RmsPropHyper,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), mean_square.len());
    let decay = T::from_f64(hyper.decay);
    let one_minus = T::one() - decay;
    let eps = T::from_f64(hyper.epsilon_denom);
    let lr = T::from_f64(hyper.learning_rate);
    for ((p, &g), ms) in params.iter_mut().zip(grads).zip(mean_square.iter_mut()) {
        *ms = decay * *ms + one_minus * g * g;
        *p = *p - lr * g / (*ms + eps).sqrt();
    }
}

/// One optimizer step over all eight parameter tensors.
///
/// A non-finite gradient aborts the step before any mutation and surfaces
/// which tensors were affected.
pub fn rmsprop_step<T: Scalar>(
    params: &mut QNetParams<T>,
    grads: &Gradients<T>,
    state: &mut RmsPropState<T>,
) -> Result<()> {
    let mut bad = Vec::new();
    for ((name, g), (_, p)) in grads.tensors.blocks().iter().zip(params.tensors.blocks()) {
        if g.shape() != p.shape() {
            return Err(Error::Shape(format!(
                "gradient tensor {name} has shape {:?}, parameters have {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let nonfinite = g.data().iter().filter(|v| !v.is_finite()).count();
        if nonfinite > 0 {
            bad.push(format!("{name}: {nonfinite} non-finite values"));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Training(format!(
            "non-finite gradient, step aborted ({})",
            bad.join(", ")
        )));
    }
    for (((_, p), (_, g)), (_, ms)) in params
        .tensors
        .blocks_mut()
        .into_iter()
        .zip(grads.tensors.blocks())
        .zip(state.mean_square.blocks_mut())
    {
        rmsprop_update_slice(p.data_mut(), g.data(), ms.data_mut(), &state.hyper);
    }
    Ok(())
}
