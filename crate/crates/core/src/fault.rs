//! Discrete fault modes and the elapsed-time-dependent transition model.
//!
//! Each asset occupies one mode of a [`ModeSet`]: a nominal mode, a number of
//! fault modes and an absorbing dead mode. Lethal fault modes drain into the
//! dead mode with a per-step probability derived from the discrete-time hazard
//! of their time-to-death distribution, so the transition matrix depends on
//! the time `tau` the asset has spent in its current mode.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::BoundedDistribution;
use crate::error::{Error, Result};
use crate::observation::ActionKind;

pub type ModeId = usize;

/// Row-sum tolerance guaranteed by [`TransitionModel::transition_matrix`].
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultMode {
    pub id: ModeId,
    pub name: String,
    pub lethal: bool,
    /// Time-to-death distribution in hours, present iff `lethal`.
    pub ttd_hours: Option<BoundedDistribution>,
    /// Minimum recovery (intervention) time in minutes.
    pub recovery_minutes: Option<BoundedDistribution>,
    /// Maximum per-step death probability, present iff `lethal`.
    pub alpha: Option<f64>,
    /// Action types this mode can respond to.
    pub responsive_actions: Vec<ActionKind>,
}

impl FaultMode {
    pub fn nominal(id: ModeId, name: &str, responsive_actions: Vec<ActionKind>) -> Self {
        FaultMode {
            id,
            name: name.to_string(),
            lethal: false,
            ttd_hours: None,
            recovery_minutes: None,
            alpha: None,
            responsive_actions,
        }
    }

    pub fn absorbing(id: ModeId, name: &str) -> Self {
        FaultMode::nominal(id, name, Vec::new())
    }

    pub fn responds_to(&self, action: ActionKind) -> bool {
        self.responsive_actions.contains(&action)
    }

    fn check(&self) -> Result<()> {
        let has_ttd = self.ttd_hours.is_some();
        let has_alpha = self.alpha.is_some();
        if self.lethal != has_ttd || self.lethal != has_alpha {
            return Err(Error::Config(format!(
                "mode {}: lethal flag, ttd distribution and alpha must be present together",
                self.name
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!(
                    "mode {}: alpha must lie in (0, 1), got {a}",
                    self.name
                )));
            }
        }
        for d in self.ttd_hours.iter().chain(self.recovery_minutes.iter()) {
            d.validate()
                .map_err(|e| Error::Config(format!("mode {}: {e}", self.name)))?;
        }
        Ok(())
    }
}

/// Ordered mode set with one nominal and one absorbing mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    modes: Vec<FaultMode>,
    ok_index: ModeId,
    dead_index: ModeId,
}

impl ModeSet {
    pub fn new(modes: Vec<FaultMode>, ok_index: ModeId, dead_index: ModeId) -> Result<Self> {
        if modes.len() < 2 {
            return Err(Error::Config("a mode set needs at least a nominal and a dead mode".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            if m.id != i {
                return Err(Error::Config(format!(
                    "mode ids must be dense 0..{}; mode {} has id {}",
                    modes.len(),
                    m.name,
                    m.id
                )));
            }
            m.check()?;
        }
        if ok_index >= modes.len() || dead_index >= modes.len() || ok_index == dead_index {
            return Err(Error::Config("nominal and dead indices must be distinct valid modes".into()));
        }
        if modes[ok_index].lethal {
            return Err(Error::Config("the nominal mode cannot be lethal".into()));
        }
        let dead = &modes[dead_index];
        if dead.lethal || dead.ttd_hours.is_some() || dead.recovery_minutes.is_some() {
            return Err(Error::Config("the absorbing mode carries no distributions".into()));
        }
        Ok(ModeSet { modes, ok_index, dead_index })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn ok(&self) -> ModeId {
        self.ok_index
    }

    pub fn dead(&self) -> ModeId {
        self.dead_index
    }

    pub fn modes(&self) -> &[FaultMode] {
        &self.modes
    }

    pub fn mode(&self, id: ModeId) -> &FaultMode {
        &self.modes[id]
    }

    pub fn index_of(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name)
    }

    /// Fault modes: every mode that is neither nominal nor dead.
    pub fn fault_modes(&self) -> impl Iterator<Item = &FaultMode> {
        let (ok, dead) = (self.ok_index, self.dead_index);
        self.modes.iter().filter(move |m| m.id != ok && m.id != dead)
    }

    pub fn lethal_modes(&self) -> impl Iterator<Item = &FaultMode> {
        self.modes.iter().filter(|m| m.lethal)
    }
}

/// Per-step death probability of a lethal mode after `tau` hours in mode.
///
/// `alpha * (F(tau + dt) - F(tau)) / (1 - F(tau))`, clamped to `alpha` once
/// the time-to-death support is exhausted.
pub fn death_hazard(mode: &FaultMode, tau: f64, dt: f64) -> Result<f64> {
    let (Some(ttd), Some(alpha)) = (mode.ttd_hours.as_ref(), mode.alpha) else {
        return Err(Error::Contract(format!(
            "death hazard requested for non-lethal mode {}",
            mode.name
        )));
    };
    if !(tau >= 0.0) || !(dt > 0.0) {
        return Err(Error::Contract(format!("death hazard needs tau >= 0 and dt > 0, got tau={tau}, dt={dt}")));
    }
    if tau >= ttd.sup() {
        return Ok(alpha);
    }
    let f_now = ttd.cdf(tau);
    let survival = 1.0 - f_now;
    if survival <= 0.0 {
        return Ok(alpha);
    }
    let h = alpha * (ttd.cdf(tau + dt) - f_now) / survival;
    Ok(h.clamp(0.0, alpha))
}

/// Dense row-stochastic matrix indexed `[from][to]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        TransitionMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "transition matrix must be square");
            data.extend_from_slice(r);
        }
        TransitionMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: ModeId, to: ModeId) -> f64 {
        self.data[from * self.n + to]
    }

    pub fn set(&mut self, from: ModeId, to: ModeId, v: f64) {
        self.data[from * self.n + to] = v;
    }

    pub fn row(&self, from: ModeId) -> &[f64] {
        &self.data[from * self.n..(from + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Anything that yields an elapsed-time-dependent transition matrix over a mode set.
pub trait TransitionKernel {
    fn mode_set(&self) -> &ModeSet;
    fn matrix(&self, tau: f64) -> TransitionMatrix;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    mode_set: ModeSet,
    base: TransitionMatrix,
    dt: f64,
}

impl TransitionModel {
    /// `base` holds the tau-independent transition odds; its dead column is
    /// ignored for lethal rows, where the hazard takes over.
    pub fn new(mode_set: ModeSet, base: TransitionMatrix, dt: f64) -> Result<Self> {
        let n = mode_set.len();
        if base.size() != n {
            return Err(Error::Config(format!(
                "base transition matrix is {}x{}, mode set has {n} modes",
                base.size(),
                base.size()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("replanning interval must be positive, got {dt}")));
        }
        for i in 0..n {
            let row = base.row(i);
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Config(format!("base row {i} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("base row {i} sums to {s}, expected 1")));
            }
        }
        Ok(TransitionModel { mode_set, base, dt })
    }

    /// Identity base: every mode persists absent the hazard.
    pub fn persistent(mode_set: ModeSet, dt: f64) -> Result<Self> {
        let n = mode_set.len();
        TransitionModel::new(mode_set, TransitionMatrix::identity(n), dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn base(&self) -> &TransitionMatrix {
        &self.base
    }

    pub fn mode_set(&self) -> &ModeSet {
        &self.mode_set
    }

    pub fn transition_matrix(&self, tau: f64) -> TransitionMatrix {
        let tau = tau.max(0.0);
        let ms = &self.mode_set;
        let n = ms.len();
        let (ok, dead) = (ms.ok(), ms.dead());
        let mut out = TransitionMatrix::identity(n);

        for mode in ms.modes() {
            let i = mode.id;
            if i == dead {
                continue;
            }
            let mut row = self.base.row(i).to_vec();

            if i != ok {
                if let Some(rec) = &mode.recovery_minutes {
                    if tau * 60.0 < rec.inf() {
                        row[i] += row[ok];
                        row[ok] = 0.0;
                    }
                }
            }

            if mode.lethal {
                let h = death_hazard(mode, tau, self.dt).expect("lethal mode carries ttd and alpha");
                row[dead] = 0.0;
                let rest: f64 = row.iter().sum();
                if rest > 0.0 {
                    let scale = (1.0 - h) / rest;
                    row.iter_mut().for_each(|p| *p *= scale);
                } else {
                    row[i] = 1.0 - h;
                }
                row[dead] = h;
            }

            for (j, p) in row.into_iter().enumerate() {
                out.set(i, j, p);
            }
        }
        out
    }
}

impl TransitionKernel for TransitionModel {
    fn mode_set(&self) -> &ModeSet {
        &self.mode_set
    }

    fn matrix(&self, tau: f64) -> TransitionMatrix {
        self.transition_matrix(tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotAbsorbing { tau: f64 },
    NonMonotoneDeath { mode: String, tau_a: f64, tau_b: f64, p_a: f64, p_b: f64 },
    RecoveryNotGated { mode: String, tau: f64, p: f64 },
    NotStochastic { row: ModeId, tau: f64, sum: f64 },
    NegativeEntry { row: ModeId, col: ModeId, tau: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotAbsorbing { tau } => write!(f, "dead row is not absorbing at tau={tau}"),
            Violation::NonMonotoneDeath { mode, tau_a, tau_b, p_a, p_b } => write!(
                f,
                "death probability of {mode} decreases from {p_a} at tau={tau_a} to {p_b} at tau={tau_b}"
            ),
            Violation::RecoveryNotGated { mode, tau, p } => {
                write!(f, "{mode} recovers with probability {p} at tau={tau}, before its minimum recovery time")
            }
            Violation::NotStochastic { row, tau, sum } => {
                write!(f, "row {row} sums to {sum} at tau={tau}")
            }
            Violation::NegativeEntry { row, col, tau } => {
                write!(f, "entry ({row}, {col}) is negative at tau={tau}")
            }
        }
    }
}

/// Check the structural requirements of a kernel on a grid of elapsed times
/// (hours, ascending): absorbing dead mode, nondecreasing death probability of
/// lethal modes, recovery gating, and row-stochasticity.
pub fn validate<K: TransitionKernel + ?Sized>(kernel: &K, tau_grid: &[f64]) -> Vec<Violation> {
    let ms = kernel.mode_set();
    let (ok, dead) = (ms.ok(), ms.dead());
    let mut violations = Vec::new();
    let mut prev: Option<(f64, TransitionMatrix)> = None;

    for &tau in tau_grid {
        let m = kernel.matrix(tau);

        let dead_row = m.row(dead);
        if dead_row
            .iter()
            .enumerate()
            .any(|(j, &p)| if j == dead { p != 1.0 } else { p != 0.0 })
        {
            violations.push(Violation::NotAbsorbing { tau });
        }

        for i in 0..m.size() {
            let row = m.row(i);
            for (j, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    violations.push(Violation::NegativeEntry { row: i, col: j, tau });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                violations.push(Violation::NotStochastic { row: i, tau, sum });
            }
        }

        for mode in ms.fault_modes() {
            if let Some(rec) = &mode.recovery_minutes {
                let p = m.get(mode.id, ok);
                if tau * 60.0 < rec.inf() && p != 0.0 {
                    violations.push(Violation::RecoveryNotGated { mode: mode.name.clone(), tau, p });
                }
            }
        }

        if let Some((tau_prev, m_prev)) = &prev {
            for mode in ms.lethal_modes() {
                let (p_a, p_b) = (m_prev.get(mode.id, dead), m.get(mode.id, dead));
                if p_b < p_a {
                    violations.push(Violation::NonMonotoneDeath {
                        mode: mode.name.clone(),
                        tau_a: *tau_prev,
                        tau_b: tau,
                        p_a,
                        p_b,
                    });
                }
            }
        }
        prev = Some((tau, m));
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lethal(id: ModeId, lo: f64, hi: f64, alpha: f64) -> FaultMode {
        FaultMode {
            id,
            name: format!("L{id}"),
            lethal: true,
            ttd_hours: Some(BoundedDistribution::Uniform(lo, hi)),
            recovery_minutes: Some(BoundedDistribution::Uniform(15.0, 120.0)),
            alpha: Some(alpha),
            responsive_actions: vec![ActionKind::Recover],
        }
    }

    fn two_mode_set() -> ModeSet {
        ModeSet::new(
            vec![
                FaultMode::nominal(0, "OK", vec![ActionKind::Contact]),
                lethal(1, 6.0, 24.0, 0.5),
                FaultMode::absorbing(2, "DEAD"),
            ],
            0,
            2,
        )
        .unwrap()
    }

    #[test]
    fn hazard_examples() {
        let gnc = lethal(1, 6.0, 24.0, 0.5);
        assert_eq!(death_hazard(&gnc, 0.0, 1.0).unwrap(), 0.0);
        assert!((death_hazard(&gnc, 12.0, 1.0).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(death_hazard(&gnc, 30.0, 1.0).unwrap(), 0.5);
        assert_eq!(death_hazard(&gnc, 24.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn hazard_rejects_non_lethal_mode() {
        let ok = FaultMode::nominal(0, "OK", vec![]);
        assert!(matches!(death_hazard(&ok, 1.0, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn lethal_row_renormalizes_around_hazard() {
        let model = TransitionModel::persistent(two_mode_set(), 1.0).unwrap();
        let m = model.transition_matrix(12.0);
        assert!((m.get(1, 2) - 1.0 / 24.0).abs() < 1e-15);
        assert!((m.get(1, 1) - 23.0 / 24.0).abs() < 1e-15);
        assert_eq!(m.row(2), &[0.0, 0.0, 1.0]);
        assert_eq!(model.transition_matrix(0.0), TransitionMatrix::identity(3));
    }

    #[test]
    fn recovery_mass_is_folded_into_self_before_minimum_time() {
        let base = TransitionMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.3, 0.7, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let model = TransitionModel::new(two_mode_set(), base, 0.25).unwrap();
        // 10 minutes < 15 minute recovery floor
        let early = model.transition_matrix(10.0 / 60.0);
        assert_eq!(early.get(1, 0), 0.0);
        assert_eq!(early.get(1, 1), 1.0);
        let later = model.transition_matrix(1.0);
        assert!((later.get(1, 0) - 0.3).abs() < 1e-15);
        assert!(validate(&model, &[0.0, 0.1, 0.2, 1.0, 10.0, 30.0]).is_empty());
    }

    #[test]
    fn mode_set_invariants() {
        let bad_alpha = lethal(1, 6.0, 24.0, 1.0);
        assert!(ModeSet::new(
            vec![FaultMode::nominal(0, "OK", vec![]), bad_alpha, FaultMode::absorbing(2, "DEAD")],
            0,
            2
        )
        .is_err());

        let mut missing_ttd = lethal(1, 6.0, 24.0, 0.5);
        missing_ttd.ttd_hours = None;
        assert!(ModeSet::new(
            vec![FaultMode::nominal(0, "OK", vec![]), missing_ttd, FaultMode::absorbing(2, "DEAD")],
            0,
            2
        )
        .is_err());

        let gapped = vec![FaultMode::nominal(0, "OK", vec![]), FaultMode::absorbing(3, "DEAD")];
        assert!(ModeSet::new(gapped, 0, 1).is_err());
    }

    struct Edited {
        ms: ModeSet,
        f: fn(f64) -> TransitionMatrix,
    }

    impl TransitionKernel for Edited {
        fn mode_set(&self) -> &ModeSet {
            &self.ms
        }
        fn matrix(&self, tau: f64) -> TransitionMatrix {
            (self.f)(tau)
        }
    }

    #[test]
    fn validate_flags_decreasing_death_column() {
        let k = Edited {
            ms: two_mode_set(),
            f: |tau| {
                let d = if tau < 5.0 { 0.2 } else { 0.1 };
                TransitionMatrix::from_rows(&[
                    vec![1.0, 0.0, 0.0],
                    vec![0.0, 1.0 - d, d],
                    vec![0.0, 0.0, 1.0],
                ])
            },
        };
        let v = validate(&k, &[0.0, 4.0, 6.0, 8.0]);
        assert_eq!(v.len(), 1);
        assert!(matches!(
            &v[0],
            Violation::NonMonotoneDeath { tau_a, tau_b, .. } if *tau_a == 4.0 && *tau_b == 6.0
        ));
    }

    #[test]
    fn validate_flags_ungated_recovery() {
        let k = Edited {
            ms: two_mode_set(),
            f: |tau| {
                if tau == 0.0 {
                    TransitionMatrix::from_rows(&[
                        vec![1.0, 0.0, 0.0],
                        vec![0.1, 0.9, 0.0],
                        vec![0.0, 0.0, 1.0],
                    ])
                } else {
                    TransitionMatrix::identity(3)
                }
            },
        };
        let v = validate(&k, &[0.0, 1.0]);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(&v[0], Violation::RecoveryNotGated { tau, .. } if *tau == 0.0));
    }

    #[test]
    fn validate_flags_broken_absorbing_row() {
        let k = Edited {
            ms: two_mode_set(),
            f: |_| {
                TransitionMatrix::from_rows(&[
                    vec![1.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0],
                    vec![0.5, 0.0, 0.5],
                ])
            },
        };
        let v = validate(&k, &[0.0]);
        assert_eq!(v, vec![Violation::NotAbsorbing { tau: 0.0 }]);
    }

    #[test]
    fn non_lethal_mode_with_identity_base_stays_put() {
        let ms = ModeSet::new(
            vec![
                FaultMode::nominal(0, "OK", vec![]),
                FaultMode {
                    recovery_minutes: Some(BoundedDistribution::Uniform(15.0, 120.0)),
                    ..FaultMode::nominal(1, "COMMS", vec![])
                },
                FaultMode::absorbing(2, "DEAD"),
            ],
            0,
            2,
        )
        .unwrap();
        let model = TransitionModel::persistent(ms, 0.25).unwrap();
        for tau in [0.0, 0.1, 3.0, 50.0] {
            assert_eq!(model.transition_matrix(tau).row(1), &[0.0, 1.0, 0.0]);
        }
    }
}
