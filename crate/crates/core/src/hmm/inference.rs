use serde::{Deserialize, Serialize};

use super::{HmmError, HmmModel};
use crate::ingest::{Subject, Visit};

/// Per-visit observations in model-variable order.
pub(crate) type ObservationMatrix = Vec<Vec<Option<bool>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub posteriors: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

/// `log P(visit | state k)`, summed over the model variables observed at the
/// visit. Missing values contribute nothing.
pub fn emission_loglik(model: &HmmModel, visit: &Visit, k: usize) -> Result<f64, HmmError> {
    assert!(k < model.n_states(), "state {k} out of range for {} states", model.n_states());
    let obs = visit_observations(model, visit)?;
    Ok(log_emission_row(model, &obs)[k])
}

pub(crate) fn visit_observations(model: &HmmModel, visit: &Visit) -> Result<Vec<Option<bool>>, HmmError> {
    model
        .variables()
        .map(|v| match visit.observations.get(v) {
            Some(x) => Ok(*x),
            None => Err(HmmError::UnknownVariable(v.to_owned())),
        })
        .collect()
}

pub(crate) fn observation_matrix(model: &HmmModel, subject: &Subject) -> Result<ObservationMatrix, HmmError> {
    subject.visits.iter().map(|v| visit_observations(model, v)).collect()
}

pub(crate) fn log_emission_row(model: &HmmModel, obs: &[Option<bool>]) -> Vec<f64> {
    let mut row = vec![0.0; model.n_states()];
    for (probs, x) in model.emission().values().zip(obs) {
        let Some(x) = *x else { continue };
        for (acc, &p) in row.iter_mut().zip(probs) {
            *acc += if x { p.ln() } else { (1.0 - p).ln() };
        }
    }
    row
}

pub(crate) fn log_emissions(model: &HmmModel, obs: &ObservationMatrix) -> Vec<Vec<f64>> {
    obs.iter().map(|o| log_emission_row(model, o)).collect()
}

/// Scaled forward/backward lattice for one sequence.
///
/// Emissions at step `t` are stored as `exp(log_e - shift[t])`, where the
/// shift is the largest log-emission among states with positive predicted
/// mass, so at least one reachable state keeps weight 1 and the scale factor
/// never underflows to zero.
pub(crate) struct Lattice {
    k: usize,
    t: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    emit: Vec<f64>,
    scale: Vec<f64>,
    pub(crate) log_likelihood: f64,
}

impl Lattice {
    pub(crate) fn run(model: &HmmModel, log_e: &[Vec<f64>]) -> Lattice {
        let k = model.n_states();
        let t_len = log_e.len();
        let a = model.transition();
        let mut alpha = vec![0.0; t_len * k];
        let mut emit = vec![0.0; t_len * k];
        let mut scale = vec![0.0; t_len];
        let mut log_likelihood = 0.0;
        let mut predicted = model.initial().to_vec();

        for t in 0..t_len {
            if t > 0 {
                let prev = &alpha[(t - 1) * k..t * k];
                for (j, p) in predicted.iter_mut().enumerate() {
                    *p = (0..k).map(|i| prev[i] * a[i][j]).sum();
                }
            }
            let shift = log_e[t]
                .iter()
                .zip(&predicted)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&l, _)| l)
                .fold(f64::NEG_INFINITY, f64::max);
            let shift = if shift.is_finite() { shift } else { 0.0 };
            let row = &mut alpha[t * k..(t + 1) * k];
            let e_row = &mut emit[t * k..(t + 1) * k];
            for j in 0..k {
                e_row[j] = (log_e[t][j] - shift).exp();
                row[j] = predicted[j] * e_row[j];
            }
            let c: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= c;
            }
            scale[t] = c;
            log_likelihood += c.ln() + shift;
        }

        let mut beta = vec![0.0; t_len * k];
        if t_len > 0 {
            beta[(t_len - 1) * k..].fill(1.0);
        }
        for t in (0..t_len.saturating_sub(1)).rev() {
            let (head, tail) = beta.split_at_mut((t + 1) * k);
            let next = &tail[..k];
            let e_next = &emit[(t + 1) * k..(t + 2) * k];
            let c_next = scale[t + 1];
            for (i, b) in head[t * k..].iter_mut().enumerate() {
                *b = (0..k).map(|j| a[i][j] * e_next[j] * next[j]).sum::<f64>() / c_next;
            }
        }

        Lattice { k, t: t_len, alpha, beta, emit, scale, log_likelihood }
    }

    pub(crate) fn posterior(&self, t: usize) -> Vec<f64> {
        let k = self.k;
        let mut g: Vec<f64> = (0..k).map(|j| self.alpha[t * k + j] * self.beta[t * k + j]).collect();
        let s: f64 = g.iter().sum();
        for x in &mut g {
            *x /= s;
        }
        g
    }

    pub(crate) fn posteriors(&self) -> Vec<Vec<f64>> {
        (0..self.t).map(|t| self.posterior(t)).collect()
    }

    /// Adds the expected transition counts `sum_t xi_t(i, j)` into `acc` (row-major K x K).
    pub(crate) fn accumulate_transitions(&self, model: &HmmModel, acc: &mut [f64]) {
        let k = self.k;
        let a = model.transition();
        for t in 0..self.t.saturating_sub(1) {
            let alpha = &self.alpha[t * k..(t + 1) * k];
            let e_next = &self.emit[(t + 1) * k..(t + 2) * k];
            let b_next = &self.beta[(t + 1) * k..(t + 2) * k];
            let c_next = self.scale[t + 1];
            for i in 0..k {
                if alpha[i] == 0.0 {
                    continue;
                }
                for j in 0..k {
                    acc[i * k + j] += alpha[i] * a[i][j] * e_next[j] * b_next[j] / c_next;
                }
            }
        }
    }
}

/// Per-visit posterior state distributions and the sequence log-likelihood.
pub fn forward_backward(model: &HmmModel, subject: &Subject) -> Result<Posteriors, HmmError> {
    let obs = observation_matrix(model, subject)?;
    let lattice = Lattice::run(model, &log_emissions(model, &obs));
    Ok(Posteriors { posteriors: lattice.posteriors(), log_likelihood: lattice.log_likelihood })
}

pub(crate) fn viterbi_path(model: &HmmModel, log_e: &[Vec<f64>]) -> Vec<usize> {
    let k = model.n_states();
    let t_len = log_e.len();
    if t_len == 0 {
        return Vec::new();
    }
    let log_a: Vec<Vec<f64>> =
        model.transition().iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
    let mut delta: Vec<f64> = model.initial().iter().zip(&log_e[0]).map(|(p, e)| p.ln() + e).collect();
    let mut back = vec![0usize; t_len * k];
    let mut next = vec![0.0; k];
    for t in 1..t_len {
        for j in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + log_a[0][j];
            for i in 1..k {
                let s = delta[i] + log_a[i][j];
                if s > best_score {
                    best = i;
                    best_score = s;
                }
            }
            back[t * k + j] = best;
            next[j] = best_score + log_e[t][j];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut state = 0;
    for j in 1..k {
        if delta[j] > delta[state] {
            state = j;
        }
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = state;
    for t in (1..t_len).rev() {
        state = back[t * k + state];
        path[t - 1] = state;
    }
    path
}

/// Most probable state path; ties go to the lower state index at every step.
pub fn viterbi(model: &HmmModel, subject: &Subject) -> Result<Vec<usize>, HmmError> {
    let obs = observation_matrix(model, subject)?;
    Ok(viterbi_path(model, &log_emissions(model, &obs)))
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate().skip(1) {
        if x > p[best] {
            best = i;
        }
    }
    best
}
