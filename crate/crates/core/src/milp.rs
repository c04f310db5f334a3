//! Scenario scheduling problem and its solvers.
//!
//! The objective is
//!
//! ```text
//! (1/S) sum_s sum_i q_i min(1, sum_{w: i_w = i} x_w z_ws) + lambda sum_w dH_w x_w
//! ```
//!
//! over binary `x` with at most one selected window per exclusion clique.
//! The per-(asset, scenario) acquisition variables of the linear program are
//! replaced by their closed form at optimum, so the search runs over `x`
//! alone. Among optimal selections (objective ties within [`TIE_EPS`]) the
//! solvers return the smallest one, then the lexicographically smallest id
//! list.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::belief::{info_gain, Belief};
use crate::config::{SolverKind, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::{hours_between, ContactWindow};
use crate::scenario::ScenarioSet;

pub const TIE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProblem {
    pub windows: Vec<ContactWindow>,
    /// Per-window scenario outcomes, aligned with `windows`.
    pub z: Vec<Vec<bool>>,
    /// Per-window expected entropy reduction, aligned with `windows`.
    pub info: Vec<f64>,
    /// Asset priorities; missing assets weigh 1.
    pub priorities: BTreeMap<u32, f64>,
    pub lambda: f64,
    /// Sets of mutually exclusive window ids.
    pub cliques: Vec<Vec<u64>>,
    pub scenarios: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Selected window ids, ascending.
    pub selected: Vec<u64>,
    pub objective: f64,
    pub value_term: f64,
    pub info_term: f64,
    /// False when the search was cut short or skipped.
    pub optimal: bool,
    pub nodes: u64,
}

impl Schedule {
    pub fn empty() -> Schedule {
        Schedule { selected: vec![], objective: 0.0, value_term: 0.0, info_term: 0.0, optimal: true, nodes: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Above this many candidate windows the exact search is skipped.
    pub exact_limit: usize,
    pub node_limit: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { kind: SolverKind::Exact, exact_limit: 64, node_limit: 10_000_000 }
    }
}

impl ScheduleProblem {
    pub fn new(
        windows: Vec<ContactWindow>,
        z: Vec<Vec<bool>>,
        info: Vec<f64>,
        priorities: BTreeMap<u32, f64>,
        lambda: f64,
        cliques: Vec<Vec<u64>>,
        scenarios: usize,
    ) -> Result<Self> {
        let p = ScheduleProblem { windows, z, info, priorities, lambda, cliques, scenarios };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let n = self.windows.len();
        if self.z.len() != n || self.info.len() != n {
            return Err(Error::Contract("z and info must align with the window list".into()));
        }
        if self.scenarios == 0 || self.z.iter().any(|z| z.len() != self.scenarios) {
            return Err(Error::Contract(format!("every window needs exactly {} outcomes", self.scenarios)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Contract(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.priorities.values().any(|&q| !(q > 0.0)) {
            return Err(Error::Contract("priorities must be > 0".into()));
        }
        let ids: BTreeSet<u64> = self.windows.iter().map(|w| w.id).collect();
        if ids.len() != n {
            return Err(Error::Contract("window ids must be unique".into()));
        }
        for c in &self.cliques {
            if let Some(&bad) = c.iter().find(|id| !ids.contains(id)) {
                return Err(Error::MismatchedWindows(bad));
            }
        }
        Ok(())
    }

    pub fn priority(&self, asset: u32) -> f64 {
        self.priorities.get(&asset).copied().unwrap_or(1.0)
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.windows.iter().position(|w| w.id == id)
    }

    /// `(value_term, info_term)` of a selection.
    pub fn evaluate(&self, selected: &[u64]) -> Result<(f64, f64)> {
        let mut covered: BTreeMap<u32, Vec<bool>> = BTreeMap::new();
        let mut info = 0.0;
        for &id in selected {
            let i = self.index_of(id).ok_or(Error::MismatchedWindows(id))?;
            let c = covered.entry(self.windows[i].asset).or_insert_with(|| vec![false; self.scenarios]);
            for (c, &z) in c.iter_mut().zip(&self.z[i]) {
                *c |= z;
            }
            info += self.info[i];
        }
        let value = covered
            .iter()
            .map(|(&a, c)| self.priority(a) * c.iter().filter(|&&x| x).count() as f64)
            .sum::<f64>()
            / self.scenarios as f64;
        Ok((value, info))
    }

    pub fn is_feasible(&self, selected: &[u64]) -> bool {
        let set: BTreeSet<u64> = selected.iter().copied().collect();
        set.len() == selected.len()
            && self.cliques.iter().all(|c| c.iter().filter(|id| set.contains(id)).count() <= 1)
    }

    pub fn schedule_for(&self, selected: Vec<u64>, optimal: bool, nodes: u64) -> Result<Schedule> {
        let mut selected = selected;
        selected.sort_unstable();
        let (value_term, info_term) = self.evaluate(&selected)?;
        Ok(Schedule { selected, objective: value_term + self.lambda * info_term, value_term, info_term, optimal, nodes })
    }
}

/// Maximal exclusion cliques: windows at one station that overlap in time,
/// and windows of one asset that overlap in time.
pub fn exclusion_cliques(windows: &[ContactWindow]) -> Vec<Vec<u64>> {
    let mut by_station: BTreeMap<&str, Vec<&ContactWindow>> = BTreeMap::new();
    let mut by_asset: BTreeMap<u32, Vec<&ContactWindow>> = BTreeMap::new();
    for w in windows {
        by_station.entry(w.station.as_str()).or_default().push(w);
        by_asset.entry(w.asset).or_default().push(w);
    }
    let mut out = BTreeSet::new();
    for group in by_station.values().chain(by_asset.values()) {
        for c in interval_cliques(group) {
            out.insert(c);
        }
    }
    out.into_iter().collect()
}

/// Maximal cliques of an interval graph over half-open `[start, end)`.
fn interval_cliques(windows: &[&ContactWindow]) -> Vec<Vec<u64>> {
    // (time, is_start, id); ends sort before starts at equal times.
    let mut events: Vec<(DateTime<Utc>, bool, u64)> = Vec::with_capacity(windows.len() * 2);
    for w in windows {
        events.push((w.start, true, w.id));
        events.push((w.end, false, w.id));
    }
    events.sort();
    let mut active = BTreeSet::new();
    let mut cliques = Vec::new();
    let mut last_was_start = false;
    for (_, is_start, id) in events {
        if is_start {
            active.insert(id);
        } else {
            if last_was_start && active.len() >= 2 {
                cliques.push(active.iter().copied().collect());
            }
            active.remove(&id);
        }
        last_was_start = is_start;
    }
    cliques
}

/// Assemble the problem for `windows` from the beliefs and sampled scenarios.
#[allow(clippy::too_many_arguments)]
pub fn build_problem(
    beliefs: &[Belief],
    windows: &[ContactWindow],
    scenarios: &ScenarioSet,
    system: &SystemModel,
    priorities: &BTreeMap<u32, f64>,
    lambda: f64,
    now: DateTime<Utc>,
) -> Result<ScheduleProblem> {
    let mut windows = windows.to_vec();
    windows.sort_by_key(|w| w.id);
    let mut z = Vec::with_capacity(windows.len());
    let mut info = Vec::with_capacity(windows.len());
    for w in &windows {
        z.push(scenarios.z.get(&w.id).ok_or(Error::MismatchedWindows(w.id))?.clone());
        let b = beliefs.iter().find(|b| b.asset_id == w.asset).ok_or(Error::MismatchedWindows(w.id))?;
        let p_link = system.link.link_probability(w.e_max_deg);
        let lead = hours_between(now, w.start);
        info.push(info_gain(b, w.action, p_link, &system.table, &system.transitions, lead)?);
    }
    let cliques = exclusion_cliques(&windows);
    ScheduleProblem::new(windows, z, info, priorities.clone(), lambda, cliques, scenarios.scenarios)
}

/// Dense bitset form of a problem, restricted to windows that can add value.
struct Compiled {
    ids: Vec<u64>,
    asset: Vec<usize>,
    weight: Vec<f64>,
    z: Vec<FixedBitSet>,
    /// `lambda * dH_w`.
    bonus: Vec<f64>,
    conflicts: Vec<FixedBitSet>,
    n_assets: usize,
    scenarios: usize,
}

fn count_new(z: &FixedBitSet, cover: &FixedBitSet) -> u32 {
    z.as_slice().iter().zip(cover.as_slice()).map(|(a, b)| (a & !b).count_ones()).sum()
}

impl Compiled {
    fn new(p: &ScheduleProblem) -> Compiled {
        let s = p.scenarios;
        let mut assets: Vec<u32> = p.windows.iter().map(|w| w.asset).collect();
        assets.sort_unstable();
        assets.dedup();
        let weight: Vec<f64> = assets.iter().map(|&a| p.priority(a) / s as f64).collect();

        let mut keep: Vec<usize> = (0..p.windows.len())
            .filter(|&i| p.z[i].iter().any(|&x| x) || p.lambda * p.info[i] > 0.0)
            .collect();
        keep.sort_by_key(|&i| p.windows[i].id);

        let pos: BTreeMap<u64, usize> = keep.iter().enumerate().map(|(k, &i)| (p.windows[i].id, k)).collect();
        let n = keep.len();
        let mut conflicts = vec![FixedBitSet::with_capacity(n); n];
        for c in &p.cliques {
            let members: Vec<usize> = c.iter().filter_map(|id| pos.get(id).copied()).collect();
            for &a in &members {
                for &b in &members {
                    if a != b {
                        conflicts[a].insert(b);
                    }
                }
            }
        }
        Compiled {
            ids: keep.iter().map(|&i| p.windows[i].id).collect(),
            asset: keep.iter().map(|&i| assets.binary_search(&p.windows[i].asset).unwrap()).collect(),
            weight,
            z: keep
                .iter()
                .map(|&i| {
                    let mut b = FixedBitSet::with_capacity(s);
                    p.z[i].iter().enumerate().filter(|(_, &x)| x).for_each(|(k, _)| b.insert(k));
                    b
                })
                .collect(),
            bonus: keep.iter().map(|&i| p.lambda * p.info[i]).collect(),
            conflicts,
            n_assets: assets.len(),
            scenarios: s,
        }
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn gain(&self, w: usize, cover: &[FixedBitSet]) -> f64 {
        let a = self.asset[w];
        self.weight[a] * count_new(&self.z[w], &cover[a]) as f64 + self.bonus[w]
    }
}

fn better(obj: f64, sel: &[u64], best_obj: f64, best: &[u64]) -> bool {
    if obj > best_obj + TIE_EPS {
        return true;
    }
    if obj < best_obj - TIE_EPS {
        return false;
    }
    (sel.len(), sel) < (best.len(), best)
}

/// Repeatedly add the window with the largest positive marginal gain.
pub fn solve_greedy(problem: &ScheduleProblem) -> Result<Schedule> {
    let c = Compiled::new(problem);
    let selected = greedy_indices(&c);
    problem.schedule_for(selected.iter().map(|&i| c.ids[i]).collect(), false, 0)
}

fn greedy_indices(c: &Compiled) -> Vec<usize> {
    let mut cover = vec![FixedBitSet::with_capacity(c.scenarios); c.n_assets];
    let mut blocked = FixedBitSet::with_capacity(c.len());
    let mut chosen = Vec::new();
    loop {
        let mut best: Option<(f64, usize)> = None;
        for w in 0..c.len() {
            if blocked.contains(w) {
                continue;
            }
            let g = c.gain(w, &cover);
            // Ascending scan keeps the smallest id among equal gains.
            if g > 1e-12 && best.map_or(true, |(bg, _)| g > bg + TIE_EPS) {
                best = Some((g, w));
            }
        }
        let Some((_, w)) = best else { break };
        chosen.push(w);
        blocked.insert(w);
        blocked.union_with(&c.conflicts[w]);
        cover[c.asset[w]].union_with(&c.z[w]);
    }
    chosen
}

struct Search<'a> {
    c: &'a Compiled,
    order: Vec<usize>,
    cover: Vec<FixedBitSet>,
    blocked: Vec<u32>,
    chosen: Vec<usize>,
    value: f64,
    best_obj: f64,
    best_ids: Vec<u64>,
    nodes: u64,
    node_limit: u64,
    aborted: bool,
    scratch: Vec<FixedBitSet>,
}

impl Search<'_> {
    fn current_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.chosen.iter().map(|&i| self.c.ids[i]).collect();
        ids.sort_unstable();
        ids
    }

    fn bound(&mut self, depth: usize) -> f64 {
        let c = self.c;
        for s in self.scratch.iter_mut() {
            s.clear();
        }
        let mut bonus = 0.0;
        for &w in &self.order[depth..] {
            if self.blocked[w] > 0 {
                continue;
            }
            self.scratch[c.asset[w]].union_with(&c.z[w]);
            bonus += c.bonus[w].max(0.0);
        }
        let extra: f64 = (0..c.n_assets)
            .map(|a| c.weight[a] * count_new(&self.scratch[a], &self.cover[a]) as f64)
            .sum();
        self.value + extra + bonus
    }

    fn dfs(&mut self, depth: usize) {
        if self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.aborted = true;
            return;
        }

        // The current partial selection is itself feasible.
        if better(self.value, &self.chosen_sorted_ids_if_tie(), self.best_obj, &self.best_ids) {
            self.best_obj = self.value;
            self.best_ids = self.current_ids();
        }
        if depth == self.order.len() {
            return;
        }

        let bound = self.bound(depth);
        if bound < self.best_obj - TIE_EPS {
            return;
        }
        if bound <= self.best_obj + TIE_EPS && self.chosen.len() >= self.best_ids.len() {
            return;
        }

        let w = self.order[depth];
        if self.blocked[w] == 0 {
            let a = self.c.asset[w];
            let g = self.c.gain(w, &self.cover);
            let saved = self.cover[a].clone();
            self.cover[a].union_with(&self.c.z[w]);
            for k in self.c.conflicts[w].ones() {
                self.blocked[k] += 1;
            }
            self.chosen.push(w);
            self.value += g;

            self.dfs(depth + 1);

            self.value -= g;
            self.chosen.pop();
            for k in self.c.conflicts[w].ones() {
                self.blocked[k] -= 1;
            }
            self.cover[a] = saved;
        }
        self.dfs(depth + 1);
    }

    /// Sorted ids of the current selection; only materialized when the
    /// objective could tie or beat the incumbent.
    fn chosen_sorted_ids_if_tie(&self) -> Vec<u64> {
        if self.value >= self.best_obj - TIE_EPS {
            self.current_ids()
        } else {
            Vec::new()
        }
    }
}

/// Branch-and-bound over the binary selection vector.
///
/// The bound adds, per asset, the scenarios still coverable by undecided
/// non-conflicting windows, plus their positive information bonus. Windows
/// are branched in decreasing standalone gain, include-first. Hitting
/// `node_limit` returns the incumbent (never worse than greedy) flagged as
/// not optimal.
pub fn solve_exact(problem: &ScheduleProblem, node_limit: u64) -> Result<Schedule> {
    let c = Compiled::new(problem);
    let greedy: Vec<u64> = greedy_indices(&c).iter().map(|&i| c.ids[i]).collect();
    let (gv, gi) = problem.evaluate(&greedy)?;
    let mut best_ids = greedy;
    best_ids.sort_unstable();

    let empty_cover = vec![FixedBitSet::with_capacity(c.scenarios); c.n_assets];
    let mut order: Vec<usize> = (0..c.len()).collect();
    let standalone: Vec<f64> = order.iter().map(|&w| c.gain(w, &empty_cover)).collect();
    order.sort_by(|&a, &b| standalone[b].total_cmp(&standalone[a]).then(c.ids[a].cmp(&c.ids[b])));

    let mut search = Search {
        c: &c,
        order,
        cover: empty_cover.clone(),
        blocked: vec![0; c.len()],
        chosen: Vec::new(),
        value: 0.0,
        best_obj: gv + problem.lambda * gi,
        best_ids,
        nodes: 0,
        node_limit,
        aborted: false,
        scratch: empty_cover,
    };
    search.dfs(0);
    if search.aborted {
        log::warn!(
            "branch-and-bound stopped at the {} node limit with {} candidates; returning incumbent",
            node_limit,
            c.len()
        );
    }
    let (ids, optimal, nodes) = (search.best_ids, !search.aborted, search.nodes);
    problem.schedule_for(ids, optimal, nodes)
}

/// Enumerate every subset; for oracle checks on small problems.
pub fn solve_exhaustive(problem: &ScheduleProblem) -> Result<Schedule> {
    let n = problem.windows.len();
    if n > 24 {
        return Err(Error::Contract(format!("exhaustive enumeration is limited to 24 windows, got {n}")));
    }
    let ids: Vec<u64> = problem.windows.iter().map(|w| w.id).collect();
    let mut best_obj = 0.0;
    let mut best: Vec<u64> = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let mut sel: Vec<u64> = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ids[i]).collect();
        sel.sort_unstable();
        if !problem.is_feasible(&sel) {
            continue;
        }
        let (v, h) = problem.evaluate(&sel)?;
        let obj = v + problem.lambda * h;
        if better(obj, &sel, best_obj, &best) {
            best_obj = obj;
            best = sel;
        }
    }
    problem.schedule_for(best, true, 1u64 << n)
}

/// Dispatch on the configured solver. Problems above the exact limit fall
/// back to greedy and are flagged as not optimal.
pub fn solve(problem: &ScheduleProblem, opts: &SolverOptions) -> Result<Schedule> {
    match opts.kind {
        SolverKind::Greedy => solve_greedy(problem),
        SolverKind::Exact => {
            let effective = Compiled::new(problem).len();
            if effective > opts.exact_limit {
                log::debug!("{effective} candidates exceed the exact limit {}; using greedy", opts.exact_limit);
                solve_greedy(problem)
            } else {
                solve_exact(problem, opts.node_limit)
            }
        }
    }
}

/// The earliest selected window; ties go to the smaller id.
pub fn next_action<'a>(schedule: &Schedule, windows: &'a [ContactWindow]) -> Option<&'a ContactWindow> {
    windows
        .iter()
        .filter(|w| schedule.selected.binary_search(&w.id).is_ok())
        .min_by_key(|w| (w.start, w.id))
}
