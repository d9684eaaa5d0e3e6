// SPDX-License-Identifier: Apache-2.0

//! SimPO length-normalized reward and pairwise objective.
//!
//! The objective in the literature is written as a quantity to maximize,
//! `log σ(β p_w − β p_l − γ)`. Everything here reports its negation, so lower
//! is better, matching what trainers minimize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreferenceError {
    #[error("token log-prob sequence is empty")]
    EmptySequence,
    #[error("token log-prob {value} at position {index} is not a finite value ≤ 0")]
    InvalidLogProb { index: usize, value: f64 },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Per-token log probabilities of one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenLogProbs {
    values: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self, PreferenceError> {
        if values.is_empty() {
            return Err(PreferenceError::EmptySequence);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v <= 0.0))
        {
            return Err(PreferenceError::InvalidLogProb { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimpoParams {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SimpoParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            gamma: 1.0,
        }
    }
}

impl SimpoParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, PreferenceError> {
        let p = Self { beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PreferenceError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PreferenceError::InvalidParams(format!(
                "beta {} must be > 0",
                self.beta
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(PreferenceError::InvalidParams(format!(
                "gamma {} must be ≥ 0",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Mean per-token log probability, `(1/|y|) Σ log π(y_i | x, y_<i)`.
pub fn avg_logprob(t: &TokenLogProbs) -> Result<f64, PreferenceError> {
    if t.values.is_empty() {
        return Err(PreferenceError::EmptySequence);
    }
    Ok(t.values.iter().sum::<f64>() / t.values.len() as f64)
}

pub fn reward(t: &TokenLogProbs, params: &SimpoParams) -> Result<f64, PreferenceError> {
    Ok(params.beta * avg_logprob(t)?)
}

/// `log(1 + e^{-m})` without overflow for large |m|.
pub fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn margin(p_w: f64, p_l: f64, params: &SimpoParams) -> f64 {
    params.beta * p_w - params.beta * p_l - params.gamma
}

/// Loss and margin from already-averaged log probabilities.
pub fn simpo_loss_from_avg(p_w: f64, p_l: f64, params: &SimpoParams) -> (f64, f64) {
    let m = margin(p_w, p_l, params);
    (softplus_neg(m), m)
}

/// Returns `(loss, margin)` with `loss = −log σ(margin)`.
pub fn simpo_loss(
    chosen: &TokenLogProbs,
    rejected: &TokenLogProbs,
    params: &SimpoParams,
) -> Result<(f64, f64), PreferenceError> {
    params.validate()?;
    Ok(simpo_loss_from_avg(
        avg_logprob(chosen)?,
        avg_logprob(rejected)?,
        params,
    ))
}

/// Gradient with respect to the averaged log probabilities `(p_w, p_l)`.
pub fn simpo_grad_from_avg(p_w: f64, p_l: f64, params: &SimpoParams) -> (f64, f64) {
    let s = sigmoid(-margin(p_w, p_l, params));
    (-params.beta * s, params.beta * s)
}

pub fn simpo_loss_grad(
    chosen: &TokenLogProbs,
    rejected: &TokenLogProbs,
    params: &SimpoParams,
) -> Result<(f64, f64), PreferenceError> {
    params.validate()?;
    Ok(simpo_grad_from_avg(
        avg_logprob(chosen)?,
        avg_logprob(rejected)?,
        params,
    ))
}

/// Mean loss over the batch. Per-pair losses are summed with a fixed
/// pairwise tree, so the result does not depend on the execution strategy.
pub fn batch_objective(
    pairs: &[(TokenLogProbs, TokenLogProbs)],
    params: &SimpoParams,
) -> Result<f64, PreferenceError> {
    batch_objective_with(pairs, params, Exec::default())
}

pub fn batch_objective_with(
    pairs: &[(TokenLogProbs, TokenLogProbs)],
    params: &SimpoParams,
    exec: Exec,
) -> Result<f64, PreferenceError> {
    if pairs.is_empty() {
        return Err(PreferenceError::EmptyBatch);
    }
    params.validate()?;
    let losses = par::map(exec, pairs, |(w, l)| {
        simpo_loss(w, l, params).map(|(loss, _)| loss)
    })
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    Ok(par::pairwise_sum(exec, &losses) / losses.len() as f64)
}
