//! Scenario sampling for the sample-average scheduling objective.
//!
//! Each scenario is a joint draw of per-asset mode trajectories over the
//! planning horizon, plus a binary success outcome for every candidate window.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::fault::{ModeId, ModeSet, TransitionModel};
use crate::geometry::{hours_between, ContactWindow};
use crate::observation::{ActionKind, Affine, LikelihoodTable, LinkModel, Observation};
use crate::seeds::{derive_seed, unit_draw};

const TRAJECTORY_STREAM: u64 = 0;
const OUTCOME_STREAM: u64 = 1;
const STRATA_STREAM: u64 = 2;

/// Probability that a window "succeeds" (the asset is reached or the
/// intervention takes) given the asset's mode.
///
/// Contact success is the CONTACT likelihood; beacons never succeed, they
/// only inform; recover success comes from configuration. Modes that do not
/// respond to an action have zero success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessModel {
    responsive: Vec<[bool; 3]>,
    contact: Vec<Affine>,
    recover: Vec<f64>,
}

impl SuccessModel {
    pub fn new(modes: &ModeSet, table: &LikelihoodTable, recover: &[f64]) -> Result<Self> {
        let mut responsive = Vec::with_capacity(modes.len());
        let mut contact = Vec::with_capacity(modes.len());
        for mode in modes.modes() {
            responsive.push(ActionKind::ALL.map(|a| mode.responds_to(a)));
            contact.push(if mode.responds_to(ActionKind::Contact) {
                table.row(mode.id, ActionKind::Contact)?[Observation::Contact.index()]
            } else {
                Affine::ZERO
            });
        }
        let recover = (0..modes.len()).map(|m| recover.get(m).copied().unwrap_or(0.0)).collect();
        Ok(SuccessModel { responsive, contact, recover })
    }

    pub fn p_succ(&self, mode: ModeId, action: ActionKind, p_link: f64) -> f64 {
        if !self.responsive[mode][action.id()] {
            return 0.0;
        }
        match action {
            ActionKind::Contact => self.contact[mode].eval(p_link).clamp(0.0, 1.0),
            ActionKind::Beacon => 0.0,
            ActionKind::Recover => self.recover[mode],
        }
    }

    /// Per-mode recover success, zero where the mode does not respond.
    pub fn recover_vector(&self) -> Vec<f64> {
        self.recover
            .iter()
            .zip(&self.responsive)
            .map(|(&p, r)| if r[ActionKind::Recover.id()] { p } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: usize,
    /// Horizon length in prediction steps; trajectories hold `steps + 1` modes.
    pub steps: usize,
    pub seed: u64,
    pub t0: DateTime<Utc>,
    pub dt_hours: f64,
    pub assets: Vec<u32>,
    /// `trajectories[asset_index][scenario][step]`.
    pub trajectories: Vec<Vec<Vec<ModeId>>>,
    /// Window id to per-scenario outcome.
    pub z: BTreeMap<u64, Vec<bool>>,
}

impl ScenarioSet {
    pub fn asset_index(&self, asset: u32) -> Option<usize> {
        self.assets.iter().position(|&a| a == asset)
    }

    /// Step of the prediction grid containing `t`, clamped to the horizon.
    pub fn step_of(&self, t: DateTime<Utc>) -> usize {
        let k = (hours_between(self.t0, t) / self.dt_hours + 1e-9).floor();
        (k.max(0.0) as usize).min(self.steps)
    }

    pub fn mode_at(&self, asset_index: usize, scenario: usize, step: usize) -> ModeId {
        self.trajectories[asset_index][scenario][step]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Largest-remainder allocation of `total` draws proportional to `weights`;
/// ties in the remainder go to the smaller index.
pub fn stratified_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|&w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Draw `scenarios` joint mode trajectories of `steps` steps from the beliefs.
pub fn sample_trajectories(
    beliefs: &[Belief],
    model: &TransitionModel,
    t0: DateTime<Utc>,
    steps: usize,
    scenarios: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if steps == 0 || scenarios == 0 {
        return Err(Error::Contract(format!(
            "scenario sampling needs steps >= 1 and scenarios >= 1, got {steps} and {scenarios}"
        )));
    }
    let n_modes = model.mode_set().len();
    let mut trajectories = Vec::with_capacity(beliefs.len());
    for b in beliefs {
        if b.mu.len() != n_modes {
            return Err(Error::Contract(format!("belief of asset {} has the wrong length", b.asset_id)));
        }
        let asset = b.asset_id as u64;
        let counts = stratified_counts(&b.mu, scenarios);
        let mut initial: Vec<ModeId> = counts.iter().enumerate().flat_map(|(m, &c)| std::iter::repeat(m).take(c)).collect();
        initial.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STRATA_STREAM, asset])));

        let matrices: Vec<_> = (0..steps).map(|t| model.transition_matrix(b.tau + t as f64 * model.dt())).collect();
        let per_asset: Vec<Vec<ModeId>> = initial
            .into_iter()
            .enumerate()
            .map(|(s, m0)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TRAJECTORY_STREAM, s as u64, asset]));
                let mut path = Vec::with_capacity(steps + 1);
                path.push(m0);
                let mut m = m0;
                for pi in &matrices {
                    m = draw_row(pi.row(m), rng.gen::<f64>(), m);
                    path.push(m);
                }
                path
            })
            .collect();
        trajectories.push(per_asset);
    }
    Ok(ScenarioSet {
        scenarios,
        steps,
        seed,
        t0,
        dt_hours: model.dt(),
        assets: beliefs.iter().map(|b| b.asset_id).collect(),
        trajectories,
        z: BTreeMap::new(),
    })
}

fn draw_row(row: &[f64], u: f64, fallback: ModeId) -> ModeId {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left `u` past the last positive entry.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(fallback)
}

/// Fill the binary success outcomes `z` for every window.
pub fn sample_outcomes(
    mut set: ScenarioSet,
    windows: &[ContactWindow],
    link: &LinkModel,
    success: &SuccessModel,
    seed: u64,
) -> Result<ScenarioSet> {
    for w in windows {
        let a = set.asset_index(w.asset).ok_or(Error::MismatchedWindows(w.id))?;
        let k = set.step_of(w.start);
        let p_link = link.link_probability(w.e_max_deg);
        let z = (0..set.scenarios)
            .map(|s| {
                let p = success.p_succ(set.mode_at(a, s, k), w.action, p_link);
                p > 0.0 && unit_draw(seed, &[OUTCOME_STREAM, s as u64, w.id]) < p
            })
            .collect();
        set.z.insert(w.id, z);
    }
    Ok(set)
}

/// Per-scenario value `sum_i q_i min(1, sum_{w in selected, i_w = i} z_ws)`.
pub fn scenario_values(
    set: &ScenarioSet,
    windows: &[ContactWindow],
    selected: &[u64],
    priorities: &BTreeMap<u32, f64>,
) -> Result<Vec<f64>> {
    let mut by_asset: BTreeMap<u32, Vec<&Vec<bool>>> = BTreeMap::new();
    for &id in selected {
        let w = windows.iter().find(|w| w.id == id).ok_or(Error::MismatchedWindows(id))?;
        let z = set.z.get(&id).ok_or(Error::MismatchedWindows(id))?;
        by_asset.entry(w.asset).or_default().push(z);
    }
    Ok((0..set.scenarios)
        .map(|s| {
            by_asset
                .iter()
                .filter(|(_, zs)| zs.iter().any(|z| z[s]))
                .map(|(a, _)| priorities.get(a).copied().unwrap_or(1.0))
                .sum()
        })
        .collect())
}

/// Sample-average value of a schedule.
pub fn estimate_value(
    set: &ScenarioSet,
    windows: &[ContactWindow],
    selected: &[u64],
    priorities: &BTreeMap<u32, f64>,
) -> Result<f64> {
    let v = scenario_values(set, windows, selected, priorities)?;
    Ok(v.iter().sum::<f64>() / set.scenarios as f64)
}
