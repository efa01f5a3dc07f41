//! Game config files.
//!
//! One TOML file describes one game. The top level carries the horizon and
//! optional initial public state; the `[game]` table selects a built-in game
//! by `kind` or spells out dense tables:
//!
//! ```toml
//! name = "tiny"
//! horizon = 2                 # or "infinite"
//! initial_mean_field = [0.5, 0.5]
//!
//! [game]
//! kind = "table"
//! follower_states = ["h", "i"]
//! leader_states = ["l"]
//! follower_actions = ["wait", "act"]
//! leader_actions = ["low", "high"]
//! discount = 0.9
//! # [a_l][a_f][x_l][x_f] -> row over next follower state
//! follower_kernel = [...]
//! # [a_l][x_l] -> row over next leader state
//! leader_kernel = [...]
//! # [a_l][a_f][x_l][x_f]
//! follower_reward = [...]
//! # [a_l][x_l]
//! leader_reward = [...]
//! ```
//!
//! Every table entry is either a number or an affine function of the mean
//! field written `{ c = 0.1, z = [0.0, 0.9] }`, meaning `0.1 + 0.9 * z[1]`.
//! See `docs/config.md` for the full schema.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::DecisionRule;
use crate::error::{Error, Result};
use crate::games::{InfectionParams, TechAdoptionParams};
use crate::spec::{GameModel, GameSpec, Horizon, Spaces, SpecParts};

/// A complete game description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub horizon: Horizon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_leader_belief: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mean_field: Option<Vec<f64>>,
    pub game: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Infection(InfectionParams),
    TechAdoption(TechAdoptionParams),
    Table(TableGame),
}

impl GameConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn build(&self) -> Result<GameSpec> {
        let (default_name, spaces, model, discount): (&str, Spaces, Arc<dyn GameModel>, f64) =
            match &self.game {
                ModelConfig::Infection(p) => {
                    let model = p.model()?;
                    ("infection", model.spaces(), Arc::new(model), p.discount)
                }
                ModelConfig::TechAdoption(p) => {
                    let model = p.model()?;
                    ("tech_adoption", model.spaces(), Arc::new(model), p.discount)
                }
                ModelConfig::Table(t) => {
                    t.check_shapes()?;
                    ("table", t.spaces(), Arc::new(t.clone()), t.discount)
                }
            };
        let n_l = spaces.n_leader_states();
        let n_f = spaces.n_follower_states();
        let belief = self
            .initial_leader_belief
            .clone()
            .unwrap_or_else(|| vec![1.0 / n_l as f64; n_l]);
        let mean_field = self
            .initial_mean_field
            .clone()
            .unwrap_or_else(|| vec![1.0 / n_f as f64; n_f]);
        // hash the resolved game, not its spelling; the name is not a parameter
        let canonical = GameConfig {
            name: None,
            initial_leader_belief: Some(belief.clone()),
            initial_mean_field: Some(mean_field.clone()),
            ..self.clone()
        };
        let spec = GameSpec::from_parts(SpecParts {
            name: self.name.clone().unwrap_or_else(|| default_name.to_string()),
            spaces,
            model,
            discount,
            horizon: self.horizon,
            initial_leader_belief: belief,
            initial_mean_field: mean_field,
            definition: serde_json::to_value(&canonical)?,
        })?;
        Ok(spec.with_config(self.clone()))
    }
}

/// A number or `c + sum_i z_i * coef_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Affine {
    Constant(f64),
    Linear {
        #[serde(default)]
        c: f64,
        z: Vec<f64>,
    },
}

impl Affine {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Affine::Constant(v) => *v,
            Affine::Linear { c, z: coef } => {
                c + coef.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
            }
        }
    }

    fn z_len(&self) -> Option<usize> {
        match self {
            Affine::Constant(_) => None,
            Affine::Linear { z, .. } => Some(z.len()),
        }
    }
}

impl From<f64> for Affine {
    fn from(v: f64) -> Self {
        Affine::Constant(v)
    }
}

/// Dense-table game. Index order is documented per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableGame {
    pub follower_states: Vec<String>,
    pub leader_states: Vec<String>,
    pub follower_actions: Vec<String>,
    pub leader_actions: Vec<String>,
    pub discount: f64,
    /// `[a_l][a_f][x_l][x_f][x'_f]`
    pub follower_kernel: Vec<Vec<Vec<Vec<Vec<Affine>>>>>,
    /// `[a_l][x_l][x'_l]`
    pub leader_kernel: Vec<Vec<Vec<Affine>>>,
    /// `[a_l][a_f][x_l][x_f]`
    pub follower_reward: Vec<Vec<Vec<Vec<Affine>>>>,
    /// `[a_l][x_l]`
    pub leader_reward: Vec<Vec<Affine>>,
    /// Optional `[a_l][x_l][x_f][a_f]` weights; the leader additionally
    /// receives `sum z(x_f) gamma_f(a_f | x_f) * weight`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_population_reward: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    /// Weight on the population average of follower rewards (social welfare).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub leader_welfare_weight: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl TableGame {
    pub fn spaces(&self) -> Spaces {
        Spaces {
            follower_states: self.follower_states.clone(),
            leader_states: self.leader_states.clone(),
            follower_actions: self.follower_actions.clone(),
            leader_actions: self.leader_actions.clone(),
        }
    }

    /// Checks that every table has the dimensions implied by the label lists.
    pub fn check_shapes(&self) -> Result<()> {
        let nf = self.follower_states.len();
        let nl = self.leader_states.len();
        let naf = self.follower_actions.len();
        let nal = self.leader_actions.len();
        let bad = |what: &str| Err(Error::Config(format!("table game: {what} has the wrong shape")));

        let z_ok = |e: &Affine| e.z_len().is_none_or(|n| n == nf);

        if self.follower_kernel.len() != nal
            || self.follower_kernel.iter().any(|by_af| {
                by_af.len() != naf
                    || by_af.iter().any(|by_xl| {
                        by_xl.len() != nl
                            || by_xl.iter().any(|by_xf| {
                                by_xf.len() != nf
                                    || by_xf
                                        .iter()
                                        .any(|row| row.len() != nf || !row.iter().all(z_ok))
                            })
                    })
            })
        {
            return bad("follower_kernel");
        }
        if self.leader_kernel.len() != nal
            || self.leader_kernel.iter().any(|by_xl| {
                by_xl.len() != nl
                    || by_xl.iter().any(|row| row.len() != nl || !row.iter().all(z_ok))
            })
        {
            return bad("leader_kernel");
        }
        if self.follower_reward.len() != nal
            || self.follower_reward.iter().any(|by_af| {
                by_af.len() != naf
                    || by_af.iter().any(|by_xl| {
                        by_xl.len() != nl
                            || by_xl.iter().any(|by_xf| by_xf.len() != nf || !by_xf.iter().all(z_ok))
                    })
            })
        {
            return bad("follower_reward");
        }
        if self.leader_reward.len() != nal
            || self
                .leader_reward
                .iter()
                .any(|by_xl| by_xl.len() != nl || !by_xl.iter().all(z_ok))
        {
            return bad("leader_reward");
        }
        if let Some(pop) = &self.leader_population_reward {
            if pop.len() != nal
                || pop.iter().any(|by_xl| {
                    by_xl.len() != nl
                        || by_xl
                            .iter()
                            .any(|by_xf| by_xf.len() != nf || by_xf.iter().any(|r| r.len() != naf))
                })
            {
                return bad("leader_population_reward");
            }
        }
        Ok(())
    }
}

impl GameModel for TableGame {
    fn leader_transition(&self, z: &[f64], x_l: usize, a_l: usize, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.leader_kernel[a_l][x_l]) {
            *o = e.eval(z);
        }
    }

    fn follower_transition(
        &self,
        z: &[f64],
        x_l: usize,
        x_f: usize,
        a_l: usize,
        a_f: usize,
        out: &mut [f64],
    ) {
        for (o, e) in out.iter_mut().zip(&self.follower_kernel[a_l][a_f][x_l][x_f]) {
            *o = e.eval(z);
        }
    }

    fn follower_reward(&self, z: &[f64], x_l: usize, x_f: usize, a_l: usize, a_f: usize) -> f64 {
        self.follower_reward[a_l][a_f][x_l][x_f].eval(z)
    }

    fn leader_reward(&self, z: &[f64], x_l: usize, a_l: usize, follower: &DecisionRule) -> f64 {
        let mut r = self.leader_reward[a_l][x_l].eval(z);
        if let Some(pop) = &self.leader_population_reward {
            for (x_f, zx) in z.iter().enumerate() {
                for a_f in 0..follower.actions() {
                    r += zx * follower.prob(x_f, a_f) * pop[a_l][x_l][x_f][a_f];
                }
            }
        }
        if self.leader_welfare_weight != 0.0 {
            let mut welfare = 0.0;
            for (x_f, zx) in z.iter().enumerate() {
                for a_f in 0..follower.actions() {
                    welfare += zx * follower.prob(x_f, a_f) * self.follower_reward(z, x_l, x_f, a_l, a_f);
                }
            }
            r += self.leader_welfare_weight * welfare;
        }
        r
    }
}
