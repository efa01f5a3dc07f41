//! The two built-in example games: infection spread with a subsidizing
//! government, and technology adoption against a price-setting firm.
//!
//! Both have a leader without private type (`n_l = 1`) and two follower
//! states. The leader's continuous price is discretized into a uniform grid.

use serde::{Deserialize, Serialize};

use crate::config::{GameConfig, ModelConfig};
use crate::dynamics::DecisionRule;
use crate::error::{Error, Result};
use crate::export::fmt_num;
use crate::spec::{GameModel, GameSpec, Horizon, Spaces};

/// `points` uniform values covering `[0, max]`.
fn uniform_grid(max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

fn price_labels(prefix: &str, grid: &[f64]) -> Vec<String> {
    grid.iter().map(|c| format!("{prefix}={}", fmt_num(*c))).collect()
}

/// Infection spread. Follower states are `healthy` (0) and `infected` (1);
/// follower actions `do-nothing` (0) and `repair` (1). A healthy agent doing
/// nothing becomes infected with probability `q * z(infected)`; repairing
/// always leads to healthy. The leader sets the repair price `c_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfectionParams {
    /// Per-stage cost of being infected.
    pub k: f64,
    /// Infection-rate coefficient.
    pub q: f64,
    /// Baseline repair cost.
    pub lambda: f64,
    /// Offset in the leader's net subsidy term `c_l - c`. Defaults to `lambda`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub discount: f64,
    /// Upper end `C` of the price interval.
    pub max_subsidy: f64,
    /// Number of uniform grid points on `[0, C]` when `subsidy_grid` is unset.
    pub subsidy_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsidy_grid: Option<Vec<f64>>,
}

impl Default for InfectionParams {
    fn default() -> Self {
        Self {
            k: 0.2,
            q: 0.9,
            lambda: 0.2,
            c: None,
            discount: 0.9,
            max_subsidy: 1.0,
            subsidy_points: 21,
            subsidy_grid: None,
        }
    }
}

impl InfectionParams {
    /// Parameter set used for the second run, `lambda = 0.21`.
    pub fn lambda_021() -> Self {
        Self {
            lambda: 0.21,
            ..Self::default()
        }
    }

    pub fn subsidies(&self) -> Vec<f64> {
        self.subsidy_grid
            .clone()
            .unwrap_or_else(|| uniform_grid(self.max_subsidy, self.subsidy_points))
    }

    pub fn model(&self) -> Result<InfectionModel> {
        let bad = |m: String| Err(Error::Config(format!("infection game: {m}")));
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q = {} must lie in [0, 1]", self.q));
        }
        if !(self.k >= 0.0) || !(self.lambda >= 0.0) {
            return bad("k and lambda must be non-negative".into());
        }
        if !(self.max_subsidy >= 0.0) {
            return bad("max_subsidy must be non-negative".into());
        }
        let subsidies = self.subsidies();
        if subsidies.is_empty() {
            return bad("subsidy grid is empty".into());
        }
        if let Some(c) = subsidies.iter().find(|c| !(**c >= 0.0 && **c <= self.max_subsidy)) {
            return bad(format!("subsidy {c} outside [0, {}]", self.max_subsidy));
        }
        Ok(InfectionModel {
            k: self.k,
            q: self.q,
            c: self.c.unwrap_or(self.lambda),
            subsidies,
        })
    }

    pub fn config(&self, horizon: Horizon) -> GameConfig {
        GameConfig {
            name: None,
            horizon,
            initial_leader_belief: None,
            initial_mean_field: Some(vec![0.5, 0.5]),
            game: ModelConfig::Infection(self.clone()),
        }
    }

    pub fn build(&self, horizon: Horizon) -> Result<GameSpec> {
        self.config(horizon).build()
    }
}

#[derive(Debug, Clone)]
pub struct InfectionModel {
    k: f64,
    q: f64,
    c: f64,
    subsidies: Vec<f64>,
}

impl InfectionModel {
    pub fn spaces(&self) -> Spaces {
        Spaces {
            follower_states: vec!["healthy".into(), "infected".into()],
            leader_states: vec!["government".into()],
            follower_actions: vec!["do-nothing".into(), "repair".into()],
            leader_actions: price_labels("c", &self.subsidies),
        }
    }

    pub fn subsidies(&self) -> &[f64] {
        &self.subsidies
    }
}

impl GameModel for InfectionModel {
    fn leader_transition(&self, _z: &[f64], _x_l: usize, _a_l: usize, out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn follower_transition(
        &self,
        z: &[f64],
        _x_l: usize,
        x_f: usize,
        _a_l: usize,
        a_f: usize,
        out: &mut [f64],
    ) {
        let (healthy, infected) = match (x_f, a_f) {
            (_, 1) => (1.0, 0.0),
            (1, _) => (0.0, 1.0),
            _ => {
                let w = (self.q * z[1]).clamp(0.0, 1.0);
                (1.0 - w, w)
            }
        };
        out[0] = healthy;
        out[1] = infected;
    }

    fn follower_reward(&self, _z: &[f64], _x_l: usize, x_f: usize, a_l: usize, a_f: usize) -> f64 {
        -self.k * x_f as f64 - self.subsidies[a_l] * a_f as f64
    }

    fn leader_reward(&self, z: &[f64], x_l: usize, a_l: usize, follower: &DecisionRule) -> f64 {
        let mut welfare = 0.0;
        for (x_f, zx) in z.iter().enumerate() {
            for a_f in 0..2 {
                welfare += zx * follower.prob(x_f, a_f) * self.follower_reward(z, x_l, x_f, a_l, a_f);
            }
        }
        welfare + (self.subsidies[a_l] - self.c)
    }
}

/// Technology adoption. Follower preferences and actions both take values
/// `-1` (index 0) and `1` (index 1). The firm prices product 1; product -1
/// has a fixed exogenous price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TechAdoptionParams {
    /// Preference switch probability after choosing the preferred product.
    pub p1: f64,
    /// Preference switch probability after choosing the other product.
    pub p2: f64,
    /// Price of the competing product. A positive value is the economically
    /// natural variant; the default is -1.
    pub c_minus1: f64,
    pub discount: f64,
    pub max_price: f64,
    pub price_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_grid: Option<Vec<f64>>,
}

impl Default for TechAdoptionParams {
    fn default() -> Self {
        Self {
            p1: 0.1,
            p2: 0.3,
            c_minus1: -1.0,
            discount: 0.9,
            max_price: 1.0,
            price_points: 21,
            price_grid: None,
        }
    }
}

impl TechAdoptionParams {
    pub fn prices(&self) -> Vec<f64> {
        self.price_grid
            .clone()
            .unwrap_or_else(|| uniform_grid(self.max_price, self.price_points))
    }

    pub fn model(&self) -> Result<TechAdoptionModel> {
        let bad = |m: String| Err(Error::Config(format!("technology adoption game: {m}")));
        if !(0.0 <= self.p1 && self.p1 <= self.p2 && self.p2 < 0.5) {
            return bad(format!("need 0 <= p1 <= p2 < 0.5, got p1 = {}, p2 = {}", self.p1, self.p2));
        }
        if !self.c_minus1.is_finite() {
            return bad("c_minus1 must be finite".into());
        }
        let prices = self.prices();
        if prices.is_empty() || prices.iter().any(|p| !p.is_finite()) {
            return bad("price grid must be non-empty and finite".into());
        }
        Ok(TechAdoptionModel {
            p1: self.p1,
            p2: self.p2,
            c_minus1: self.c_minus1,
            prices,
        })
    }

    pub fn config(&self, horizon: Horizon) -> GameConfig {
        GameConfig {
            name: None,
            horizon,
            initial_leader_belief: None,
            initial_mean_field: Some(vec![0.5, 0.5]),
            game: ModelConfig::TechAdoption(self.clone()),
        }
    }

    pub fn build(&self, horizon: Horizon) -> Result<GameSpec> {
        self.config(horizon).build()
    }
}

#[derive(Debug, Clone)]
pub struct TechAdoptionModel {
    p1: f64,
    p2: f64,
    c_minus1: f64,
    prices: Vec<f64>,
}

/// Index 0 is -1, index 1 is +1.
fn sign(i: usize) -> f64 {
    if i == 1 {
        1.0
    } else {
        -1.0
    }
}

impl TechAdoptionModel {
    pub fn spaces(&self) -> Spaces {
        Spaces {
            follower_states: vec!["-1".into(), "1".into()],
            leader_states: vec!["firm".into()],
            follower_actions: vec!["-1".into(), "1".into()],
            leader_actions: price_labels("c1", &self.prices),
        }
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }
}

impl GameModel for TechAdoptionModel {
    fn leader_transition(&self, _z: &[f64], _x_l: usize, _a_l: usize, out: &mut [f64]) {
        out[0] = 1.0;
    }

    fn follower_transition(
        &self,
        _z: &[f64],
        _x_l: usize,
        x_f: usize,
        _a_l: usize,
        a_f: usize,
        out: &mut [f64],
    ) {
        let switch = if a_f == x_f { self.p1 } else { self.p2 };
        out[x_f] = 1.0 - switch;
        out[1 - x_f] = switch;
    }

    fn follower_reward(&self, z: &[f64], _x_l: usize, x_f: usize, a_l: usize, a_f: usize) -> f64 {
        let a = sign(a_f);
        let price = if a_f == 1 { self.prices[a_l] } else { self.c_minus1 };
        sign(x_f) * a + (2.0 * z[1] - 1.0) * a - price
    }

    fn leader_reward(&self, z: &[f64], _x_l: usize, a_l: usize, follower: &DecisionRule) -> f64 {
        self.prices[a_l] * (follower.prob(1, 1) * z[1] + follower.prob(0, 1) * z[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{mean_field_step, Prescription};
    use crate::spec::validate;
    use proptest::prelude::*;

    #[test]
    fn infection_spaces_and_grid() {
        let spec = InfectionParams::default().build(Horizon::Infinite).unwrap();
        assert_eq!(spec.n_follower_states(), 2);
        assert_eq!(spec.n_leader_states(), 1);
        assert_eq!(spec.n_leader_actions(), 21);
        assert_eq!(spec.spaces().leader_actions[1], "c=0.05");
    }

    #[test]
    fn infection_probability_scales_with_infected_fraction() {
        let model = InfectionParams::default().model().unwrap();
        let mut out = [0.0; 2];
        model.follower_transition(&[0.0, 1.0], 0, 0, 0, 0, &mut out);
        assert!((out[1] - 0.9).abs() < 1e-15);
        model.follower_transition(&[1.0, 0.0], 0, 0, 0, 0, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        model.follower_transition(&[0.3, 0.7], 0, 1, 5, 1, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        model.follower_transition(&[0.3, 0.7], 0, 1, 5, 0, &mut out);
        assert_eq!(out, [0.0, 1.0]);
    }

    #[test]
    fn infection_rewards_as_printed() {
        let model = InfectionParams::default().model().unwrap();
        // c_l = 0.5 at index 10
        assert!((model.follower_reward(&[0.5, 0.5], 0, 1, 10, 1) + 0.7).abs() < 1e-15);
        let nothing = DecisionRule::pure(&[0, 0], 2);
        // welfare -k z(1) plus c_l - c
        let r = model.leader_reward(&[0.4, 0.6], 0, 10, &nothing);
        assert!((r - (-0.2 * 0.6 + 0.5 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn tech_kernel_is_sticky() {
        let model = TechAdoptionParams::default().model().unwrap();
        let mut out = [0.0; 2];
        model.follower_transition(&[0.5, 0.5], 0, 1, 0, 1, &mut out);
        assert!((out[0] - 0.1).abs() < 1e-15);
        model.follower_transition(&[0.5, 0.5], 0, 1, 0, 0, &mut out);
        assert!((out[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn equal_switch_probabilities_remove_stickiness() {
        let params = TechAdoptionParams {
            p1: 0.2,
            p2: 0.2,
            ..Default::default()
        };
        let model = params.model().unwrap();
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        for x in 0..2 {
            model.follower_transition(&[0.5, 0.5], 0, x, 0, 0, &mut a);
            model.follower_transition(&[0.5, 0.5], 0, x, 0, 1, &mut b);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn balanced_population_has_no_externality() {
        let model = TechAdoptionParams {
            c_minus1: 0.0,
            price_grid: Some(vec![0.0]),
            ..Default::default()
        }
        .model()
        .unwrap();
        // x * a only
        assert_eq!(model.follower_reward(&[0.5, 0.5], 0, 1, 0, 1), 1.0);
        assert_eq!(model.follower_reward(&[0.5, 0.5], 0, 1, 0, 0), -1.0);
    }

    #[test]
    fn bad_params_are_rejected() {
        assert!(TechAdoptionParams { p2: 0.5, ..Default::default() }.model().is_err());
        assert!(InfectionParams { q: 1.5, ..Default::default() }.model().is_err());
        assert!(InfectionParams { subsidy_grid: Some(vec![2.0]), ..Default::default() }.model().is_err());
    }

    fn closed_form(z1: f64, g: [[f64; 2]; 2], p1: f64, p2: f64) -> f64 {
        // g[x][a] with index 0 = -1
        let z0 = 1.0 - z1;
        1.0 - (z1 * g[1][0] * p2 + z1 * g[1][1] * p1 + z0 * g[0][0] * (1.0 - p1) + z0 * g[0][1] * (1.0 - p2))
    }

    proptest! {
        #[test]
        fn tech_phi_matches_closed_form(z1 in 0.0f64..=1.0, g0 in 0.0f64..=1.0, g1 in 0.0f64..=1.0, p1 in 0.0f64..0.25, dp in 0.0f64..0.24) {
            let params = TechAdoptionParams { p1, p2: p1 + dp, price_grid: Some(vec![0.5]), ..Default::default() };
            let spec = params.build(Horizon::Finite(1)).unwrap();
            let g = [[g0, 1.0 - g0], [g1, 1.0 - g1]];
            let gamma = Prescription {
                leader: DecisionRule::pure(&[0], 1),
                follower: DecisionRule::from_rows(&[g[0].to_vec(), g[1].to_vec()]).unwrap(),
            };
            let next = mean_field_step(&spec, &[1.0], &[1.0 - z1, z1], &gamma);
            prop_assert!((next[1] - closed_form(z1, g, p1, p1 + dp)).abs() < 1e-12);
        }

        #[test]
        fn valid_params_validate(k in 0.0f64..1.0, q in 0.0f64..=1.0, lambda in 0.0f64..1.0, p1 in 0.0f64..0.2, dp in 0.0f64..0.29) {
            let inf = InfectionParams { k, q, lambda, subsidy_points: 3, ..Default::default() };
            prop_assert!(validate(&inf.build(Horizon::Infinite).unwrap()).is_empty());
            let tech = TechAdoptionParams { p1, p2: p1 + dp, price_points: 3, ..Default::default() };
            prop_assert!(validate(&tech.build(Horizon::Finite(2)).unwrap()).is_empty());
        }
    }
}
