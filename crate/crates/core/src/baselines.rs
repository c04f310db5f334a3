//! Comparison schedulers: priority-weighted bipartite matching and a
//! scalar-aliveness receding-horizon planner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::ModeSet;
use crate::geometry::ContactWindow;
use crate::milp::{exclusion_cliques, solve, Schedule, ScheduleProblem, SolverOptions};
use crate::observation::{ActionKind, LikelihoodTable, LinkModel, Observation};

/// Maximum-weight assignment of rows to columns.
///
/// Rectangular inputs are padded with zero-weight dummies; the result maps
/// each row to its column, or `None` when the row landed on a dummy.
pub fn hungarian_max(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.iter().map(Vec::len).max().unwrap_or(0);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let top = weights.iter().flatten().copied().fold(0.0f64, f64::max);
    let cost = |i: usize, j: usize| -> f64 {
        let w = if i < rows { weights[i].get(j).copied().unwrap_or(0.0) } else { 0.0 };
        top - w
    };

    // Shortest augmenting paths with potentials, 1-based with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols && j <= weights[i - 1].len() {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Partition each station's contact windows into groups that share a common
/// instant, so every pair inside a group conflicts. Sweeping by end time
/// yields a minimum such partition for interval graphs.
pub fn conflict_groups(windows: &[&ContactWindow]) -> Vec<Vec<u64>> {
    let mut by_station: BTreeMap<&str, Vec<&ContactWindow>> = BTreeMap::new();
    for w in windows {
        by_station.entry(w.station.as_str()).or_default().push(w);
    }
    let mut groups = Vec::new();
    for mut list in by_station.into_values() {
        list.sort_by_key(|w| (w.end, w.id));
        let mut taken = vec![false; list.len()];
        for i in 0..list.len() {
            if taken[i] {
                continue;
            }
            let cut = list[i].end;
            let mut group = Vec::new();
            for j in i..list.len() {
                if !taken[j] && list[j].start < cut {
                    taken[j] = true;
                    group.push(list[j].id);
                }
            }
            group.sort_unstable();
            groups.push(group);
        }
    }
    groups
}

/// One contact per asset at most, one per conflicting station group, chosen
/// by maximum-weight matching on `q_i * p_link(w)`.
pub fn bipartite_schedule(
    windows: &[ContactWindow],
    priorities: &BTreeMap<u32, f64>,
    link: &LinkModel,
) -> Schedule {
    let contacts: Vec<&ContactWindow> = windows.iter().filter(|w| w.action == ActionKind::Contact).collect();
    let groups = conflict_groups(&contacts);
    let mut assets: Vec<u32> = contacts.iter().map(|w| w.asset).collect();
    assets.sort_unstable();
    assets.dedup();

    let by_id: BTreeMap<u64, &ContactWindow> = contacts.iter().map(|w| (w.id, *w)).collect();
    let q = |a: u32| priorities.get(&a).copied().unwrap_or(1.0);
    // best[r][g]: heaviest window of asset r inside group g.
    let mut best: Vec<Vec<Option<(f64, u64)>>> = vec![vec![None; groups.len()]; assets.len()];
    for (g, ids) in groups.iter().enumerate() {
        for id in ids {
            let w = by_id[id];
            let r = assets.binary_search(&w.asset).unwrap();
            let weight = q(w.asset) * link.link_probability(w.e_max_deg);
            let slot = &mut best[r][g];
            if slot.map_or(true, |(bw, bid)| weight > bw || (weight == bw && w.id < bid)) {
                *slot = Some((weight, w.id));
            }
        }
    }
    let weights: Vec<Vec<f64>> = best.iter().map(|r| r.iter().map(|c| c.map_or(0.0, |(w, _)| w)).collect()).collect();
    let assignment = hungarian_max(&weights);

    let mut selected = Vec::new();
    let mut total = 0.0;
    for (r, col) in assignment.into_iter().enumerate() {
        if let Some((w, id)) = col.and_then(|g| best[r][g]) {
            if w > 0.0 {
                selected.push(id);
                total += w;
            }
        }
    }
    selected.sort_unstable();
    Schedule { selected, objective: total, value_term: total, info_term: 0.0, optimal: true, nodes: 0 }
}

/// Per-asset probability of being alive.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AlivenessState {
    pub p_alive: BTreeMap<u32, f64>,
}

impl AlivenessState {
    pub fn uniform(assets: impl IntoIterator<Item = u32>, p_alive: f64) -> Self {
        AlivenessState { p_alive: assets.into_iter().map(|a| (a, p_alive)).collect() }
    }

    pub fn get(&self, asset: u32) -> f64 {
        self.p_alive.get(&asset).copied().unwrap_or(0.0)
    }
}

/// Two-hypothesis Bayes update: alive behaves like the nominal mode, dead
/// like the absorbing mode.
pub fn binary_update(
    p_alive: f64,
    action: ActionKind,
    obs: Observation,
    p_link: f64,
    table: &LikelihoodTable,
    modes: &ModeSet,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_alive) {
        return Err(Error::Contract(format!("aliveness must lie in [0, 1], got {p_alive}")));
    }
    let alive = table.prob(modes.ok(), action, obs, p_link)?;
    let dead = table.prob(modes.dead(), action, obs, p_link)?;
    let num = p_alive * alive;
    let den = num + (1.0 - p_alive) * dead;
    if den <= 0.0 {
        // Evidence impossible under both hypotheses; keep the prior.
        return Ok(p_alive);
    }
    Ok(num / den)
}

impl AlivenessState {
    pub fn update(
        &mut self,
        asset: u32,
        action: ActionKind,
        obs: Observation,
        p_link: f64,
        table: &LikelihoodTable,
        modes: &ModeSet,
    ) -> Result<()> {
        let next = binary_update(self.get(asset), action, obs, p_link, table, modes)?;
        self.p_alive.insert(asset, next);
        Ok(())
    }
}

/// Threshold for the deterministic single-scenario outcome.
pub const BINARY_SUCCESS_THRESHOLD: f64 = 0.5;

/// Single-scenario schedule over contact windows with no information term.
pub fn binary_mpc_schedule(
    state: &AlivenessState,
    windows: &[ContactWindow],
    priorities: &BTreeMap<u32, f64>,
    link: &LinkModel,
    opts: &SolverOptions,
) -> Result<Schedule> {
    let mut cands: Vec<ContactWindow> = windows
        .iter()
        .filter(|w| w.action == ActionKind::Contact && state.get(w.asset) > 0.0)
        .cloned()
        .collect();
    cands.sort_by_key(|w| w.id);
    if cands.is_empty() {
        return Ok(Schedule::empty());
    }
    let z: Vec<Vec<bool>> = cands
        .iter()
        .map(|w| vec![state.get(w.asset) * link.link_probability(w.e_max_deg) >= BINARY_SUCCESS_THRESHOLD])
        .collect();
    let q: BTreeMap<u32, f64> = cands
        .iter()
        .map(|w| (w.asset, priorities.get(&w.asset).copied().unwrap_or(1.0) * state.get(w.asset)))
        .collect();
    let cliques = exclusion_cliques(&cands);
    let n = cands.len();
    let problem = ScheduleProblem::new(cands, z, vec![0.0; n], q, 0.0, cliques, 1)?;
    solve(&problem, opts)
}
