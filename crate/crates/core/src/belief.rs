//! Per-asset multiple-model belief over discrete fault modes.
//!
//! A [`Belief`] is a probability vector over the mode set plus the asset's
//! elapsed time in its current mode. Prediction pushes it through the
//! tau-dependent transition matrix; Bayes updates fold in observations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::BoundedDistribution;
use crate::error::{Error, Result};
use crate::fault::{ModeId, TransitionModel};
use crate::observation::{ActionKind, LikelihoodTable, Observation, ALIAS_TOL};

pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub asset_id: u32,
    pub mu: Vec<f64>,
    /// Hours the asset has spent in its current mode.
    pub tau: f64,
}

impl Belief {
    pub fn new(asset_id: u32, mu: Vec<f64>, tau: f64) -> Result<Self> {
        let sum: f64 = mu.iter().sum();
        if mu.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Contract(format!(
                "belief of asset {asset_id} is not a probability vector (sum {sum})"
            )));
        }
        if !(tau >= 0.0) {
            return Err(Error::Contract(format!("belief of asset {asset_id} has negative tau {tau}")));
        }
        Ok(Belief { asset_id, mu, tau })
    }

    pub fn degenerate(asset_id: u32, n_modes: usize, mode: ModeId) -> Self {
        let mut mu = vec![0.0; n_modes];
        mu[mode] = 1.0;
        Belief { asset_id, mu, tau: 0.0 }
    }

    /// One prediction step of length `model.dt()` using the transition
    /// matrix at the current `tau`.
    pub fn predict(&self, model: &TransitionModel) -> Belief {
        let pi = model.transition_matrix(self.tau);
        let n = self.mu.len();
        let mut next = vec![0.0; n];
        for (from, &w) in self.mu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (to, slot) in next.iter_mut().enumerate() {
                *slot += w * pi.get(from, to);
            }
        }
        normalize(&mut next);
        Belief { asset_id: self.asset_id, mu: next, tau: self.tau + model.dt() }
    }

    pub fn predict_steps(&self, model: &TransitionModel, steps: usize) -> Belief {
        let mut b = self.clone();
        for _ in 0..steps {
            b = b.predict(model);
        }
        b
    }

    /// Bayes update with the observation `obs` of `action`.
    pub fn update(
        &self,
        action: ActionKind,
        obs: Observation,
        p_link: f64,
        table: &LikelihoodTable,
    ) -> Result<Belief> {
        let mut post = Vec::with_capacity(self.mu.len());
        for (m, &w) in self.mu.iter().enumerate() {
            post.push(w * table.prob(m, action, obs, p_link)?);
        }
        let total: f64 = post.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ImpossibleEvidence { asset: self.asset_id, observation: obs.name() });
        }
        post.iter_mut().for_each(|p| *p /= total);
        Ok(Belief { asset_id: self.asset_id, mu: post, tau: self.tau })
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.mu)
    }

    /// Strictly greater than `theta` on the nominal mode.
    pub fn is_acquired(&self, ok: ModeId, theta: f64) -> bool {
        self.mu[ok] > theta
    }

    /// Move `success[m]` of each mode's mass to the nominal mode: the
    /// operator's prediction after commanding a recovery whose outcome is not
    /// directly observed.
    pub fn apply_intervention(&self, ok: ModeId, success: &[f64]) -> Belief {
        let mut mu = self.mu.clone();
        let mut moved = 0.0;
        for (m, p) in mu.iter_mut().enumerate() {
            if m == ok {
                continue;
            }
            let s = success.get(m).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            moved += *p * s;
            *p *= 1.0 - s;
        }
        mu[ok] += moved;
        normalize(&mut mu);
        Belief { asset_id: self.asset_id, mu, tau: self.tau }
    }

    /// Total mass on lethal modes.
    pub fn lethal_mass(&self, model: &TransitionModel) -> f64 {
        model.mode_set().lethal_modes().map(|m| self.mu[m.id]).sum()
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|p| *p /= s);
    }
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Mutual information between the mode and the observation of `action`
/// under belief `mu`.
pub fn expected_entropy_reduction(
    mu: &[f64],
    action: ActionKind,
    p_link: f64,
    table: &LikelihoodTable,
) -> Result<f64> {
    let rows: Vec<[f64; 4]> = (0..mu.len())
        .map(|m| table.likelihood(m, action, p_link))
        .collect::<Result<_>>()?;

    // Zero exactly when every mode carrying mass shares one row.
    let mut support = mu.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(m, _)| m);
    if let Some(first) = support.next() {
        let same = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ALIAS_TOL);
        if support.all(|m| same(&rows[m], &rows[first])) {
            return Ok(0.0);
        }
    }

    let prior_h = entropy(mu);
    let mut expected_h = 0.0;
    let mut post = vec![0.0; mu.len()];
    for o in action.alphabet() {
        let oi = o.index();
        let mut p_o = 0.0;
        for (m, &w) in mu.iter().enumerate() {
            post[m] = w * rows[m][oi];
            p_o += post[m];
        }
        if p_o <= 0.0 {
            continue;
        }
        post.iter_mut().for_each(|p| *p /= p_o);
        expected_h += p_o * entropy(&post);
    }
    Ok(prior_h - expected_h)
}

/// Expected entropy reduction from executing a window `lead_hours` from now.
///
/// The belief is first rolled forward to the window start on the `dt` grid
/// (whole steps, rounded down), then scored with
/// [`expected_entropy_reduction`].
pub fn info_gain(
    belief: &Belief,
    action: ActionKind,
    p_link: f64,
    table: &LikelihoodTable,
    model: &TransitionModel,
    lead_hours: f64,
) -> Result<f64> {
    let steps = (lead_hours.max(0.0) / model.dt() + 1e-9).floor() as usize;
    let predicted = belief.predict_steps(model, steps);
    expected_entropy_reduction(&predicted.mu, action, p_link, table)
}

/// Prior over fault onset time, measured in hours since activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetPrior {
    pub dist: BoundedDistribution,
    /// Hours elapsed since activation when planning starts.
    pub t_op: f64,
}

impl OnsetPrior {
    pub fn new(dist: BoundedDistribution, t_op: f64) -> Result<Self> {
        dist.validate()?;
        if dist.sup() > t_op {
            return Err(Error::Contract(format!(
                "onset support reaches {} h, beyond the {} h elapsed since activation",
                dist.sup(),
                t_op
            )));
        }
        Ok(OnsetPrior { dist, t_op })
    }
}

/// Initial time-in-mode: `max(0, t_op - onset)` with onset drawn from the prior.
pub fn init_tau<R: Rng + ?Sized>(onset: &OnsetPrior, rng: &mut R) -> f64 {
    (onset.t_op - onset.dist.sample(rng)).max(0.0)
}
