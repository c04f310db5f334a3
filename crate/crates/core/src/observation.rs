//! Action types, the observation alphabet, mode-conditional likelihoods and
//! the elevation-dependent link model.
//!
//! Likelihood entries are affine in the link probability, `c + l * p_link`,
//! which covers every row of the LEOP table (nominal and GNC contact rows are
//! link-dependent, everything else is constant).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{ModeId, ModeSet};

/// Tolerance used when comparing likelihood rows for aliasing.
pub const ALIAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    /// Two-way link attempt (telemetry and command).
    Contact,
    /// Passive listen for the emergency beacon.
    Beacon,
    /// Blind recovery command uplink during a contact pass.
    Recover,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Contact, ActionKind::Beacon, ActionKind::Recover];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Contact => "contact",
            ActionKind::Beacon => "beacon",
            ActionKind::Recover => "recover",
        }
    }

    /// Every LEOP action occupies one ground-station slot.
    pub fn consumes_slot(self) -> bool {
        true
    }

    /// Observations this action can emit.
    pub fn alphabet(self) -> &'static [Observation] {
        match self {
            ActionKind::Contact => &[Observation::Contact, Observation::NoContact],
            ActionKind::Beacon => &[Observation::Beacon, Observation::NoBeacon],
            ActionKind::Recover => &[Observation::NoContact],
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contact" => Ok(ActionKind::Contact),
            "beacon" => Ok(ActionKind::Beacon),
            "recover" => Ok(ActionKind::Recover),
            other => Err(Error::Config(format!("unknown action type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Observation {
    Contact,
    NoContact,
    Beacon,
    NoBeacon,
}

impl Observation {
    pub const ALL: [Observation; 4] =
        [Observation::Contact, Observation::NoContact, Observation::Beacon, Observation::NoBeacon];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Observation::Contact => "CONTACT",
            Observation::NoContact => "NO_CONTACT",
            Observation::Beacon => "BEACON",
            Observation::NoBeacon => "NO_BEACON",
        }
    }
}

/// `constant + link * p_link`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Affine {
    pub constant: f64,
    pub link: f64,
}

impl Affine {
    pub const ZERO: Affine = Affine { constant: 0.0, link: 0.0 };
    pub const ONE: Affine = Affine { constant: 1.0, link: 0.0 };

    pub fn constant(c: f64) -> Self {
        Affine { constant: c, link: 0.0 }
    }

    pub fn link(scale: f64) -> Self {
        Affine { constant: 0.0, link: scale }
    }

    pub fn one_minus_link(scale: f64) -> Self {
        Affine { constant: 1.0, link: -scale }
    }

    pub fn eval(&self, p_link: f64) -> f64 {
        self.constant + self.link * p_link
    }
}

pub type LikelihoodRow = [Affine; 4];

/// Logit link model driven by pass peak elevation, plus the LEOP fault
/// parameters that shape the likelihood table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub beta0: f64,
    pub beta_e: f64,
    pub e_floor_deg: f64,
    /// Contact degradation factor for the GNC mode.
    pub gamma: f64,
    /// Beacon response probability of RF-functional modes.
    pub p_b: f64,
    /// Beacon probability under a deployment anomaly.
    pub epsilon: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { beta0: 0.8, beta_e: 1.5, e_floor_deg: 5.0, gamma: 0.4, p_b: 0.8, epsilon: 0.05 }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("gamma", self.gamma), ("p_b", self.p_b), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("link.{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.e_floor_deg > 0.0 && self.e_floor_deg < 90.0) {
            return Err(Error::Config(format!("link.e_floor_deg must lie in (0, 90), got {}", self.e_floor_deg)));
        }
        if !(self.beta0.is_finite() && self.beta_e.is_finite()) {
            return Err(Error::Config("link coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Probability that a contact on a healthy asset closes the link, for a
    /// pass with peak elevation `e_max_deg`.
    pub fn link_probability(&self, e_max_deg: f64) -> f64 {
        let e = e_max_deg.max(self.e_floor_deg).min(90.0);
        let f_elev = (e.to_radians()).sin().ln();
        sigmoid(self.beta0 + self.beta_e * f_elev)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Free-function form of [`LinkModel::link_probability`].
pub fn link_probability(link: &LinkModel, e_max_deg: f64) -> f64 {
    link.link_probability(e_max_deg)
}

/// Per (mode, action) probability rows over the four-symbol alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    rows: Vec<[Option<LikelihoodRow>; 3]>,
}

impl LikelihoodTable {
    /// Build from explicit rows, `rows[mode][action]`. Every defined row must
    /// be a probability vector for all `p_link` in [0, 1] and stay within the
    /// action's alphabet.
    pub fn new(rows: Vec<[Option<LikelihoodRow>; 3]>) -> Result<Self> {
        for (m, per_action) in rows.iter().enumerate() {
            for action in ActionKind::ALL {
                let Some(row) = &per_action[action.id()] else { continue };
                for p in [0.0, 1.0] {
                    let vals: Vec<f64> = row.iter().map(|a| a.eval(p)).collect();
                    if vals.iter().any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
                        return Err(Error::Config(format!(
                            "likelihood row (mode {m}, {action}) leaves [0, 1] at p_link={p}"
                        )));
                    }
                    let s: f64 = vals.iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        return Err(Error::Config(format!(
                            "likelihood row (mode {m}, {action}) sums to {s} at p_link={p}"
                        )));
                    }
                    for o in Observation::ALL {
                        if !action.alphabet().contains(&o) && vals[o.index()] != 0.0 {
                            return Err(Error::Config(format!(
                                "likelihood row (mode {m}, {action}) puts mass on {}",
                                o.name()
                            )));
                        }
                    }
                }
            }
        }
        Ok(LikelihoodTable { rows })
    }

    /// The LEOP table over modes named OK, GNC, COMMS, DEP and DEAD.
    ///
    /// Recover commands are blind uplinks: every mode emits NO_CONTACT.
    pub fn leop(modes: &ModeSet, link: &LinkModel) -> Result<Self> {
        let idx = |name: &str| {
            modes
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("LEOP likelihood table needs a mode named {name}")))
        };
        let (ok, gnc, comms, dep, dead) = (idx("OK")?, idx("GNC")?, idx("COMMS")?, idx("DEP")?, idx("DEAD")?);
        if modes.len() != 5 {
            return Err(Error::Config(format!(
                "LEOP likelihood table covers exactly five modes, got {}",
                modes.len()
            )));
        }

        let contact = |p: Affine| [p, Affine { constant: 1.0 - p.constant, link: -p.link }, Affine::ZERO, Affine::ZERO];
        let beacon = |p: f64| [Affine::ZERO, Affine::ZERO, Affine::constant(p), Affine::constant(1.0 - p)];
        let recover = [Affine::ZERO, Affine::ONE, Affine::ZERO, Affine::ZERO];

        let mut rows = vec![[None; 3]; 5];
        let mut put = |m: ModeId, c: LikelihoodRow, b: LikelihoodRow| {
            rows[m] = [Some(c), Some(b), Some(recover)];
        };
        put(ok, contact(Affine::link(1.0)), beacon(link.p_b));
        put(gnc, contact(Affine::link(link.gamma)), beacon(link.p_b));
        put(comms, contact(Affine::ZERO), beacon(link.p_b));
        put(dep, contact(Affine::ZERO), beacon(link.epsilon));
        put(dead, contact(Affine::ZERO), beacon(0.0));
        LikelihoodTable::new(rows)
    }

    pub fn num_modes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, mode: ModeId, action: ActionKind) -> Result<&LikelihoodRow> {
        self.rows
            .get(mode)
            .and_then(|r| r[action.id()].as_ref())
            .ok_or(Error::UnknownLikelihood { mode, action: action.name() })
    }

    /// Probability vector over the alphabet, indexed by [`Observation::index`].
    pub fn likelihood(&self, mode: ModeId, action: ActionKind, p_link: f64) -> Result<[f64; 4]> {
        let row = self.row(mode, action)?;
        Ok(row.map(|a| a.eval(p_link).clamp(0.0, 1.0)))
    }

    /// Shorthand for a single observation probability.
    pub fn prob(&self, mode: ModeId, action: ActionKind, obs: Observation, p_link: f64) -> Result<f64> {
        Ok(self.likelihood(mode, action, p_link)?[obs.index()])
    }

    /// True iff the two modes' rows under `action` agree elementwise.
    /// Undefined rows are never aliased with anything.
    pub fn is_aliased(&self, a: ModeId, b: ModeId, action: ActionKind, p_link: f64) -> bool {
        match (self.likelihood(a, action, p_link), self.likelihood(b, action, p_link)) {
            (Ok(ra), Ok(rb)) => ra.iter().zip(rb.iter()).all(|(x, y)| (x - y).abs() <= ALIAS_TOL),
            _ => false,
        }
    }

    /// Actions whose rows separate the two modes; empty when the pair is
    /// permanently unresolvable.
    pub fn disambiguating_actions(&self, a: ModeId, b: ModeId, p_link: f64) -> Vec<ActionKind> {
        ActionKind::ALL
            .into_iter()
            .filter(|&act| self.row(a, act).is_ok() && self.row(b, act).is_ok())
            .filter(|&act| !self.is_aliased(a, b, act, p_link))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::leop_mode_set;
    use proptest::prelude::*;

    fn table() -> (ModeSet, LikelihoodTable) {
        let ms = leop_mode_set();
        let t = LikelihoodTable::leop(&ms, &LinkModel::default()).unwrap();
        (ms, t)
    }

    #[test]
    fn link_probability_examples() {
        let link = LinkModel::default();
        assert!((link.link_probability(90.0) - 0.689_974_47).abs() < 1e-6);
        assert!((link.link_probability(30.0) - 0.440_355_16).abs() < 1e-6);
        assert_eq!(link.link_probability(2.0), link.link_probability(5.0));
    }

    #[test]
    fn leop_rows() {
        let (ms, t) = table();
        let id = |n| ms.index_of(n).unwrap();
        let c = ActionKind::Contact;
        let b = ActionKind::Beacon;
        assert_eq!(t.prob(id("COMMS"), c, Observation::Contact, 0.9).unwrap(), 0.0);
        assert_eq!(t.prob(id("DEP"), b, Observation::Beacon, 0.3).unwrap(), 0.05);
        assert!((t.prob(id("GNC"), c, Observation::Contact, 0.69).unwrap() - 0.276).abs() < 1e-15);
        assert_eq!(t.prob(id("DEAD"), b, Observation::Beacon, 0.5).unwrap(), 0.0);
        assert_eq!(t.prob(id("OK"), b, Observation::Beacon, 0.5).unwrap(), 0.8);
        assert_eq!(t.prob(id("OK"), c, Observation::Beacon, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn unknown_pair_is_an_error() {
        let (_, t) = table();
        assert!(matches!(t.likelihood(7, ActionKind::Contact, 0.5), Err(Error::UnknownLikelihood { .. })));
        let sparse = LikelihoodTable::new(vec![[None, None, None]]).unwrap();
        assert!(sparse.likelihood(0, ActionKind::Beacon, 0.5).is_err());
    }

    #[test]
    fn aliasing_of_comms_and_dep() {
        let (ms, t) = table();
        let (comms, dep) = (ms.index_of("COMMS").unwrap(), ms.index_of("DEP").unwrap());
        assert!(t.is_aliased(comms, dep, ActionKind::Contact, 0.69));
        assert!(!t.is_aliased(comms, dep, ActionKind::Beacon, 0.69));
        assert!(t.is_aliased(comms, comms, ActionKind::Beacon, 0.69));
        assert_eq!(t.disambiguating_actions(comms, dep, 0.69), vec![ActionKind::Beacon]);
    }

    #[test]
    fn ok_and_gnc_separate_under_contact() {
        let (ms, t) = table();
        let d = t.disambiguating_actions(ms.ok(), ms.index_of("GNC").unwrap(), 0.6);
        assert!(d.contains(&ActionKind::Contact));
    }

    #[test]
    fn degenerate_table_has_no_disambiguating_action() {
        let row = [Affine::ZERO, Affine::ONE, Affine::ZERO, Affine::ZERO];
        let t = LikelihoodTable::new(vec![[Some(row), None, Some(row)]; 3]).unwrap();
        assert!(t.disambiguating_actions(0, 2, 0.4).is_empty());
    }

    #[test]
    fn rejects_rows_that_do_not_sum_to_one() {
        let bad = [Affine::link(1.0), Affine::constant(0.5), Affine::ZERO, Affine::ZERO];
        assert!(LikelihoodTable::new(vec![[Some(bad), None, None]]).is_err());
        let leaks = [Affine::constant(0.5), Affine::ZERO, Affine::constant(0.5), Affine::ZERO];
        assert!(LikelihoodTable::new(vec![[Some(leaks), None, None]]).is_err());
    }

    #[test]
    fn link_probability_is_monotone_on_dense_grid() {
        let link = LinkModel::default();
        let mut prev = 0.0;
        for k in 0..=8900 {
            let e = 1.0 + k as f64 * 0.01;
            let p = link.link_probability(e);
            assert!(p >= prev && p > 0.0 && p < 1.0);
            prev = p;
        }
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(p in 0.0f64..=1.0) {
            let (ms, t) = table();
            for m in 0..ms.len() {
                for a in ActionKind::ALL {
                    let s: f64 = t.likelihood(m, a, p).unwrap().iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn aliasing_is_symmetric_and_label_invariant(p in 0.0f64..=1.0, perm in Just([2usize, 3, 0, 1]).prop_shuffle()) {
            let (ms, t) = table();
            let permuted_rows: Vec<[Option<LikelihoodRow>; 3]> = (0..ms.len())
                .map(|m| ActionKind::ALL.map(|a| {
                    let r = t.row(m, a).unwrap();
                    let mut out = [Affine::ZERO; 4];
                    for (i, &j) in perm.iter().enumerate() { out[j] = r[i]; }
                    Some(out)
                }))
                .collect();
            // Permuted alphabets are no longer action-consistent, so compare rows directly.
            for a in 0..ms.len() {
                for b in 0..ms.len() {
                    for act in ActionKind::ALL {
                        prop_assert_eq!(t.is_aliased(a, b, act, p), t.is_aliased(b, a, act, p));
                        let ra = permuted_rows[a][act.id()].unwrap().map(|x| x.eval(p));
                        let rb = permuted_rows[b][act.id()].unwrap().map(|x| x.eval(p));
                        let permuted_alias = ra.iter().zip(rb.iter()).all(|(x, y)| (x - y).abs() <= ALIAS_TOL);
                        prop_assert_eq!(t.is_aliased(a, b, act, p), permuted_alias);
                    }
                }
            }
        }
    }
}
