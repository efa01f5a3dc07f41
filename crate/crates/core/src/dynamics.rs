//! Mean-field update and leader-belief update of the common-agent game.
//!
//! At each public state `(pi, z)` a prescription `(gamma_l, gamma_f)` maps
//! private types to action distributions. Given a prescription the public
//! state moves by two maps:
//!
//! * `z' = phi(pi, z, gamma)`: the population distribution after everyone
//!   acts and transitions,
//! * `pi' = F(pi, z, gamma_l, a_l)`: the Bayesian posterior on the leader's
//!   type after observing her action `a_l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::GameSpec;

/// Default denominator threshold of the Bayes update.
pub const BAYES_EPSILON: f64 = 1e-12;

/// Row-stochastic map from private types to action distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    states: usize,
    actions: usize,
    probs: Vec<f64>,
}

impl DecisionRule {
    /// Deterministic rule playing `choice[x]` in state `x`.
    pub fn pure(choice: &[usize], actions: usize) -> Self {
        let mut probs = vec![0.0; choice.len() * actions];
        for (x, &a) in choice.iter().enumerate() {
            assert!(a < actions, "action {a} out of range");
            probs[x * actions + a] = 1.0;
        }
        Self {
            states: choice.len(),
            actions,
            probs,
        }
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            probs: vec![1.0 / actions as f64; states * actions],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let states = rows.len();
        let actions = rows.first().map_or(0, Vec::len);
        if states == 0 || actions == 0 || rows.iter().any(|r| r.len() != actions) {
            return Err(Error::Config("decision rule rows must be non-empty and equal length".into()));
        }
        let rule = Self {
            states,
            actions,
            probs: rows.concat(),
        };
        if !rule.is_stochastic(crate::spec::STOCHASTIC_TOL) {
            return Err(Error::Config("decision rule rows must be distributions".into()));
        }
        Ok(rule)
    }

    /// All pure rules in lexicographic order of `(a(0), a(1), ...)`.
    pub fn enumerate_pure(states: usize, actions: usize) -> impl Iterator<Item = DecisionRule> {
        PureIter::new(states, actions).map(move |c| DecisionRule::pure(&c, actions))
    }

    pub fn states(&self) -> usize {
        self.states
    }
    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.actions..(state + 1) * self.actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.probs[state * self.actions..(state + 1) * self.actions]
    }

    /// Flattened state-major probabilities.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// The deterministic choice per state, if the rule is pure.
    pub fn as_pure(&self) -> Option<Vec<usize>> {
        (0..self.states)
            .map(|x| {
                let row = self.row(x);
                let a = row.iter().position(|&p| p == 1.0)?;
                row.iter().enumerate().all(|(b, &p)| b == a || p == 0.0).then_some(a)
            })
            .collect()
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        (0..self.states).all(|x| {
            let row = self.row(x);
            row.iter().all(|&p| p >= 0.0 && p.is_finite()) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    /// Sup-norm distance between two rules of the same shape.
    pub fn distance(&self, other: &DecisionRule) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Mixed-radix counter over `actions^states` pure choices, most significant
/// digit first.
#[derive(Debug, Clone)]
pub(crate) struct PureIter {
    current: Option<Vec<usize>>,
    actions: usize,
}

impl PureIter {
    pub(crate) fn new(states: usize, actions: usize) -> Self {
        Self {
            current: (actions > 0).then(|| vec![0; states]),
            actions,
        }
    }
}

impl Iterator for PureIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < self.actions {
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    }
}

/// Leader and follower decision rules prescribed at one public state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prescription {
    pub leader: DecisionRule,
    pub follower: DecisionRule,
}

/// Clamps rounding negatives to zero and renormalizes.
pub(crate) fn clean_distribution(p: &mut [f64]) {
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if total > 0.0 && total != 1.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
}

/// Probability of each leader action at belief `pi`: `sum_x pi(x) gamma_l(a | x)`.
pub fn leader_action_distribution(pi: &[f64], leader: &DecisionRule) -> Vec<f64> {
    let mut out = vec![0.0; leader.actions()];
    for (x, &px) in pi.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (o, &g) in out.iter_mut().zip(leader.row(x)) {
            *o += px * g;
        }
    }
    out
}

/// `phi(pi, z, gamma)`: next mean field.
pub fn mean_field_step(spec: &GameSpec, pi: &[f64], z: &[f64], gamma: &Prescription) -> Vec<f64> {
    let nf = spec.n_follower_states();
    let model = spec.model();
    let mut next = vec![0.0; nf];
    let mut row = vec![0.0; nf];
    for (x_f, &zx) in z.iter().enumerate() {
        if zx == 0.0 {
            continue;
        }
        for (x_l, &px) in pi.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for a_l in 0..spec.n_leader_actions() {
                let gl = gamma.leader.prob(x_l, a_l);
                if gl == 0.0 {
                    continue;
                }
                for a_f in 0..spec.n_follower_actions() {
                    let gf = gamma.follower.prob(x_f, a_f);
                    if gf == 0.0 {
                        continue;
                    }
                    let w = zx * px * gl * gf;
                    model.follower_transition(z, x_l, x_f, a_l, a_f, &mut row);
                    for (n, r) in next.iter_mut().zip(&row) {
                        *n += w * r;
                    }
                }
            }
        }
    }
    clean_distribution(&mut next);
    next
}

/// `F(pi, z, gamma_l, a_l)`: posterior on the leader's next type after she
/// plays `a_l`. Fails with [`Error::ZeroProbabilityAction`] when `a_l` has
/// probability at most `epsilon` under `(pi, gamma_l)`.
pub fn belief_step(
    spec: &GameSpec,
    pi: &[f64],
    z: &[f64],
    leader: &DecisionRule,
    a_l: usize,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let nl = spec.n_leader_states();
    let model = spec.model();
    let mut next = vec![0.0; nl];
    let mut row = vec![0.0; nl];
    let mut denom = 0.0;
    for (x_l, &px) in pi.iter().enumerate() {
        let w = px * leader.prob(x_l, a_l);
        if w == 0.0 {
            continue;
        }
        denom += w;
        model.leader_transition(z, x_l, a_l, &mut row);
        for (n, r) in next.iter_mut().zip(&row) {
            *n += w * r;
        }
    }
    if denom <= epsilon {
        return Err(Error::ZeroProbabilityAction { action: a_l });
    }
    next.iter_mut().for_each(|v| *v /= denom);
    clean_distribution(&mut next);
    Ok(next)
}

/// Total version of [`belief_step`] used inside the solver: an off-path
/// action leaves the prior unchanged. The flag reports whether that happened.
pub fn belief_step_or_prior(
    spec: &GameSpec,
    pi: &[f64],
    z: &[f64],
    leader: &DecisionRule,
    a_l: usize,
    epsilon: f64,
) -> (Vec<f64>, bool) {
    match belief_step(spec, pi, z, leader, a_l, epsilon) {
        Ok(p) => (p, false),
        Err(_) => {
            log::debug!("leader action {a_l} off path at belief {pi:?}; keeping prior");
            (pi.to_vec(), true)
        }
    }
}
