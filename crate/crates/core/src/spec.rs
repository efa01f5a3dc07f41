//! Finite description of a Stackelberg mean field game.
//!
//! A [`GameSpec`] bundles the labelled state and action sets of the leader and
//! the follower population, a [`GameModel`] supplying the transition kernels
//! and rewards as functions of the mean field, the discount factor, the
//! horizon and the initial public state `(pi_1, z_1)`.
//!
//! Every distribution in this crate is indexed by position in the ordered
//! label lists, never by label value.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::GameConfig;
use crate::dynamics::DecisionRule;
use crate::error::{Error, Result};
use crate::grid::{default_z_resolution, SimplexGrid};

/// Row sums must match 1 within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Kernels and rewards of a game. All functions receive the current mean
/// field `z` because the dynamics may depend on it continuously.
pub trait GameModel: Send + Sync + fmt::Debug {
    /// `out[x'] = Q^l(x' | z, x_l, a_l)`.
    fn leader_transition(&self, z: &[f64], x_l: usize, a_l: usize, out: &mut [f64]);

    /// `out[x'] = Q^f(x' | z, x_l, x_f, a_l, a_f)`.
    fn follower_transition(
        &self,
        z: &[f64],
        x_l: usize,
        x_f: usize,
        a_l: usize,
        a_f: usize,
        out: &mut [f64],
    );

    fn follower_reward(&self, z: &[f64], x_l: usize, x_f: usize, a_l: usize, a_f: usize) -> f64;

    /// Leader reward. `follower` is the population prescription in force, so
    /// welfare-style objectives can average over follower behaviour.
    fn leader_reward(&self, z: &[f64], x_l: usize, a_l: usize, follower: &DecisionRule) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    /// Stationary discounted game; requires a discount below one.
    Infinite,
}

// Config files write a finite horizon as a bare integer and the stationary
// game as the string "infinite".
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HorizonRepr {
    Steps(usize),
    Word(String),
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(t) => HorizonRepr::Steps(*t),
            Horizon::Infinite => HorizonRepr::Word("infinite".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match HorizonRepr::deserialize(d)? {
            HorizonRepr::Steps(t) => Ok(Horizon::Finite(t)),
            HorizonRepr::Word(w) if w.eq_ignore_ascii_case("infinite") => Ok(Horizon::Infinite),
            HorizonRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "horizon must be a positive integer or \"infinite\", got {w:?}"
            ))),
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "finite({t})"),
            Horizon::Infinite => f.write_str("infinite"),
        }
    }
}

/// Labelled spaces of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spaces {
    pub follower_states: Vec<String>,
    pub leader_states: Vec<String>,
    pub follower_actions: Vec<String>,
    pub leader_actions: Vec<String>,
}

impl Spaces {
    pub fn n_follower_states(&self) -> usize {
        self.follower_states.len()
    }
    pub fn n_leader_states(&self) -> usize {
        self.leader_states.len()
    }
    pub fn n_follower_actions(&self) -> usize {
        self.follower_actions.len()
    }
    pub fn n_leader_actions(&self) -> usize {
        self.leader_actions.len()
    }
}

/// Immutable game description shared read-only by all solver stages.
#[derive(Clone)]
pub struct GameSpec {
    name: String,
    spaces: Spaces,
    model: Arc<dyn GameModel>,
    discount: f64,
    horizon: Horizon,
    initial_leader_belief: Vec<f64>,
    initial_mean_field: Vec<f64>,
    definition: serde_json::Value,
    config: Option<GameConfig>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("name", &self.name)
            .field("spaces", &self.spaces)
            .field("discount", &self.discount)
            .field("horizon", &self.horizon)
            .field("initial_leader_belief", &self.initial_leader_belief)
            .field("initial_mean_field", &self.initial_mean_field)
            .finish_non_exhaustive()
    }
}

/// Everything needed to assemble a [`GameSpec`] around a custom model.
pub struct SpecParts {
    pub name: String,
    pub spaces: Spaces,
    pub model: Arc<dyn GameModel>,
    pub discount: f64,
    pub horizon: Horizon,
    pub initial_leader_belief: Vec<f64>,
    pub initial_mean_field: Vec<f64>,
    /// Canonical description used for hashing. Must change whenever any
    /// parameter of the game changes.
    pub definition: serde_json::Value,
}

impl GameSpec {
    /// Assembles a spec. Only shape errors are rejected here; semantic
    /// problems (non-stochastic rows, bad discount) are left to [`validate`].
    pub fn from_parts(parts: SpecParts) -> Result<Self> {
        let s = &parts.spaces;
        if parts.initial_leader_belief.len() != s.n_leader_states() {
            return Err(Error::Config(format!(
                "initial leader belief has {} entries for {} leader states",
                parts.initial_leader_belief.len(),
                s.n_leader_states()
            )));
        }
        if parts.initial_mean_field.len() != s.n_follower_states() {
            return Err(Error::Config(format!(
                "initial mean field has {} entries for {} follower states",
                parts.initial_mean_field.len(),
                s.n_follower_states()
            )));
        }
        Ok(Self {
            name: parts.name,
            spaces: parts.spaces,
            model: parts.model,
            discount: parts.discount,
            horizon: parts.horizon,
            initial_leader_belief: parts.initial_leader_belief,
            initial_mean_field: parts.initial_mean_field,
            definition: parts.definition,
            config: None,
        })
    }

    pub(crate) fn with_config(mut self, config: GameConfig) -> Self {
        self.config = Some(config);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }
    pub fn model(&self) -> &dyn GameModel {
        self.model.as_ref()
    }
    pub fn discount(&self) -> f64 {
        self.discount
    }
    pub fn horizon(&self) -> Horizon {
        self.horizon
    }
    pub fn initial_leader_belief(&self) -> &[f64] {
        &self.initial_leader_belief
    }
    pub fn initial_mean_field(&self) -> &[f64] {
        &self.initial_mean_field
    }
    /// The config this spec was built from, if any.
    pub fn config(&self) -> Option<&GameConfig> {
        self.config.as_ref()
    }
    pub fn definition(&self) -> &serde_json::Value {
        &self.definition
    }

    pub fn n_follower_states(&self) -> usize {
        self.spaces.n_follower_states()
    }
    pub fn n_leader_states(&self) -> usize {
        self.spaces.n_leader_states()
    }
    pub fn n_follower_actions(&self) -> usize {
        self.spaces.n_follower_actions()
    }
    pub fn n_leader_actions(&self) -> usize {
        self.spaces.n_leader_actions()
    }

    /// Copy of this spec with a different horizon. The definition is updated so
    /// the hash tracks the change.
    pub fn with_horizon(&self, horizon: Horizon) -> Self {
        let mut out = self.clone();
        out.horizon = horizon;
        if let Some(cfg) = out.config.as_mut() {
            cfg.horizon = horizon;
            out.definition = serde_json::to_value(&*cfg).expect("config serializes");
        } else if let serde_json::Value::Object(map) = &mut out.definition {
            map.insert("horizon".into(), serde_json::to_value(horizon).unwrap());
        }
        out
    }

    /// Copy with a different initial public state.
    pub fn with_initial_state(&self, belief: Vec<f64>, mean_field: Vec<f64>) -> Result<Self> {
        if belief.len() != self.n_leader_states() || mean_field.len() != self.n_follower_states() {
            return Err(Error::Config("initial state has the wrong dimension".into()));
        }
        let mut out = self.clone();
        out.initial_leader_belief = belief.clone();
        out.initial_mean_field = mean_field.clone();
        if let Some(cfg) = out.config.as_mut() {
            cfg.initial_leader_belief = Some(belief);
            cfg.initial_mean_field = Some(mean_field);
            out.definition = serde_json::to_value(&*cfg).expect("config serializes");
        } else if let serde_json::Value::Object(map) = &mut out.definition {
            map.insert("initial_leader_belief".into(), belief.into());
            map.insert("initial_mean_field".into(), mean_field.into());
        }
        Ok(out)
    }

    /// Hex SHA-256 of the canonical definition.
    pub fn spec_hash(&self) -> String {
        let text = serde_json::to_string(&self.definition).expect("definition serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Labels,
    InitialDistribution,
    Discount,
    LeaderKernel,
    FollowerKernel,
    FollowerReward,
    LeaderReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub message: String,
}

/// Outcome of [`validate`]. Empty means the spec is usable by the solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }

    fn push(&mut self, kind: IssueKind, message: String) {
        self.issues.push(Issue { kind, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  - {}", issue.message)?;
        }
        Ok(())
    }
}

/// Where the validator probes the z-dependent kernels and rewards.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Resolution of the z lattice; `None` picks the solver default.
    pub resolution: Option<usize>,
    pub random_points: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            resolution: None,
            random_points: 100,
            seed: 0x5eed,
        }
    }
}

/// Checks every invariant of `spec` with the default probe set.
pub fn validate(spec: &GameSpec) -> ValidationReport {
    validate_with(spec, &ProbeConfig::default())
}

pub fn validate_with(spec: &GameSpec, probe: &ProbeConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let s = spec.spaces();

    for (what, labels) in [
        ("follower states", &s.follower_states),
        ("leader states", &s.leader_states),
        ("follower actions", &s.follower_actions),
        ("leader actions", &s.leader_actions),
    ] {
        if labels.is_empty() {
            report.push(IssueKind::Labels, format!("{what} must be non-empty"));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            report.push(IssueKind::Labels, format!("{what} contain duplicate labels"));
        }
    }
    if !report.is_empty() {
        return report;
    }

    check_distribution(&mut report, "initial leader belief", spec.initial_leader_belief());
    check_distribution(&mut report, "initial mean field", spec.initial_mean_field());

    let d = spec.discount();
    if !(d > 0.0 && d <= 1.0) {
        report.push(IssueKind::Discount, format!("discount {d} must lie in (0, 1]"));
    }
    if spec.horizon() == Horizon::Infinite && d >= 1.0 {
        report.push(IssueKind::Discount, "discount must be < 1 for an infinite horizon".into());
    }
    if let Horizon::Finite(0) = spec.horizon() {
        report.push(IssueKind::Discount, "finite horizon must be at least 1".into());
    }

    let probes = probe_points(spec.n_follower_states(), probe);
    let follower_rules = probe_follower_rules(spec);
    let (nf, nl, naf, nal) = (
        spec.n_follower_states(),
        spec.n_leader_states(),
        spec.n_follower_actions(),
        spec.n_leader_actions(),
    );
    let model = spec.model();
    let mut reported: BTreeSet<(IssueKind, Vec<usize>)> = BTreeSet::new();
    let mut leader_row = vec![0.0; nl];
    let mut follower_row = vec![0.0; nf];

    for z in &probes {
        for x_l in 0..nl {
            for a_l in 0..nal {
                leader_row.iter_mut().for_each(|v| *v = 0.0);
                model.leader_transition(z, x_l, a_l, &mut leader_row);
                if let Some(problem) = row_problem(&leader_row) {
                    if reported.insert((IssueKind::LeaderKernel, vec![x_l, a_l])) {
                        report.push(
                            IssueKind::LeaderKernel,
                            format!(
                                "leader kernel row (x_l={}, a_l={}) at z={:?}: {problem}",
                                s.leader_states[x_l], s.leader_actions[a_l], z
                            ),
                        );
                    }
                }
                for rule in &follower_rules {
                    let r = model.leader_reward(z, x_l, a_l, rule);
                    if !r.is_finite() && reported.insert((IssueKind::LeaderReward, vec![x_l, a_l]))
                    {
                        report.push(
                            IssueKind::LeaderReward,
                            format!(
                                "leader reward (x_l={}, a_l={}) at z={:?} is {r}",
                                s.leader_states[x_l], s.leader_actions[a_l], z
                            ),
                        );
                    }
                }
                for x_f in 0..nf {
                    for a_f in 0..naf {
                        let key = vec![x_l, x_f, a_l, a_f];
                        follower_row.iter_mut().for_each(|v| *v = 0.0);
                        model.follower_transition(z, x_l, x_f, a_l, a_f, &mut follower_row);
                        if let Some(problem) = row_problem(&follower_row) {
                            if reported.insert((IssueKind::FollowerKernel, key.clone())) {
                                report.push(
                                    IssueKind::FollowerKernel,
                                    format!(
                                        "follower kernel row (x_l={}, x_f={}, a_l={}, a_f={}) at z={:?}: {problem}",
                                        s.leader_states[x_l],
                                        s.follower_states[x_f],
                                        s.leader_actions[a_l],
                                        s.follower_actions[a_f],
                                        z
                                    ),
                                );
                            }
                        }
                        let r = model.follower_reward(z, x_l, x_f, a_l, a_f);
                        if !r.is_finite() && reported.insert((IssueKind::FollowerReward, key)) {
                            report.push(
                                IssueKind::FollowerReward,
                                format!(
                                    "follower reward (x_l={}, x_f={}, a_l={}, a_f={}) at z={:?} is {r}",
                                    s.leader_states[x_l],
                                    s.follower_states[x_f],
                                    s.leader_actions[a_l],
                                    s.follower_actions[a_f],
                                    z
                                ),
                            );
                        }
                    }
                }
            }
        }
    }
    report
}

fn check_distribution(report: &mut ValidationReport, what: &str, p: &[f64]) {
    if let Some(problem) = row_problem(p) {
        report.push(IssueKind::InitialDistribution, format!("{what}: {problem}"));
    }
}

fn row_problem(row: &[f64]) -> Option<String> {
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Some(format!("entry {v} is not finite"));
    }
    if let Some(v) = row.iter().find(|v| **v < 0.0) {
        return Some(format!("entry {v} is negative"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Some(format!("row sums to {}", crate::export::fmt_num(sum)));
    }
    None
}

fn probe_points(n: usize, probe: &ProbeConfig) -> Vec<Vec<f64>> {
    let m = probe.resolution.unwrap_or_else(|| default_z_resolution(n));
    let mut points = match SimplexGrid::build(n, m) {
        Ok(g) => g.points().to_vec(),
        Err(_) => SimplexGrid::build(n, 1).map(|g| g.points().to_vec()).unwrap_or_default(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    for _ in 0..probe.random_points {
        let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = e.iter().sum();
        points.push(e.into_iter().map(|v| v / total).collect());
    }
    points
}

fn probe_follower_rules(spec: &GameSpec) -> Vec<DecisionRule> {
    let (nf, naf) = (spec.n_follower_states(), spec.n_follower_actions());
    let mut rules = vec![DecisionRule::uniform(nf, naf)];
    let count = (naf as u128).checked_pow(nf as u32).unwrap_or(u128::MAX);
    if count <= 64 {
        rules.extend(DecisionRule::enumerate_pure(nf, naf));
    }
    rules
}
