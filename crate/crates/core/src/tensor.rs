//! Flat parameter vectors, the Adam ascent rule, centered-rank normalization,
//! and Euclidean distances. Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat real-valued genome of a policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    /// Wrap a raw vector, rejecting NaN/Inf entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector",
            });
        }
        Ok(ParameterVector { values })
    }

    pub fn zeros(dim: usize) -> Self {
        ParameterVector {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Adam moment estimates plus hyperparameters, tracking one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_stab: f64,
}

impl AdamState {
    /// Fresh state with the standard (0.9, 0.999, 1e-8) defaults.
    pub fn new(dim: usize, alpha: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            step_count: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_stab: 1e-8,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, epsilon_stab: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.epsilon_stab = epsilon_stab;
        self
    }

    pub fn dim(&self) -> usize {
        self.first_moment.len()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam ascent step: returns the advanced state and
/// `theta + alpha * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
pub fn adam_step(
    state: &AdamState,
    theta: &ParameterVector,
    gradient: &ParameterVector,
) -> Result<(AdamState, ParameterVector)> {
    if gradient.dim() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            got: gradient.dim(),
        });
    }
    if state.dim() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            got: state.dim(),
        });
    }
    if gradient.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient",
        });
    }

    let mut next = state.clone();
    next.step_count = state.step_count + 1;
    let t = next.step_count as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);

    let mut out = Vec::with_capacity(theta.dim());
    for i in 0..theta.dim() {
        let g = gradient.as_slice()[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        next.first_moment[i] = m;
        next.second_moment[i] = v;
        let m_hat = m / bias1;
        let v_hat = v / bias2;
        out.push(theta.as_slice()[i] + state.alpha * m_hat / (v_hat.sqrt() + state.epsilon_stab));
    }
    Ok((next, ParameterVector::new(out)?))
}

/// Map scores to ranks in [-0.5, 0.5]: `rank/(n-1) - 0.5` with ascending ranks
/// and average ranks for ties. Output order matches input order and the
/// output always sums to zero.
pub fn centered_ranks(scores: &[f64]) -> Result<Vec<f64>> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::TooFewScores(n));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite { context: "scores" });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }

    let denom = (n - 1) as f64;
    Ok(ranks.into_iter().map(|r| r / denom - 0.5).collect())
}

/// Euclidean distance between equal-dimension vectors.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(squared_l2_distance(a, b)?.sqrt())
}

/// Squared Euclidean distance between equal-dimension vectors.
pub fn squared_l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}
