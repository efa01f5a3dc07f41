//! Brute-force equilibrium enumeration on tiny games.
//!
//! A [`TinyGame`] has at most two stages, two follower states and actions,
//! two leader types and three leader actions, and dynamics that map its
//! grid onto itself. For each initial public state the oracle enumerates
//! every pure Markov profile, i.e. a pure prescription pair at the initial
//! state and at every second-stage state reachable under any pure pair, and
//! keeps those where
//!
//! * no follower gains from any deviation, including at the first stage
//!   deviations whose second action depends on the observed leader action and
//!   the follower's own next state, computed by exact expectation over the
//!   joint law of types;
//! * the mean field follows from the profile;
//! * at every state the leader cannot gain by switching her prescription,
//!   with followers re-best-responding optimistically and the profile kept
//!   elsewhere.
//!
//! The oracle shares only the model, the two transition maps and the grid
//! with the solver.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Affine, GameConfig, ModelConfig, TableGame};
use crate::dynamics::{belief_step, leader_action_distribution, mean_field_step, DecisionRule, Prescription, PureIter};
use crate::error::{Error, Result};
use crate::grid::{JointGrid, SimplexGrid};
use crate::solver::EquilibriumGenerator;
use crate::spec::{GameSpec, Horizon};
use crate::stage::{SelectionRule, Selector, SolverConfig};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;
pub const ORACLE_TOL: f64 = 1e-9;

/// A game small enough for exhaustive enumeration, with its initial states.
#[derive(Debug, Clone)]
pub struct TinyGame {
    pub spec: GameSpec,
    pub initial_points: Vec<(Vec<f64>, Vec<f64>)>,
    pub belief_resolution: usize,
    pub z_resolution: usize,
}

impl TinyGame {
    pub fn new(
        spec: GameSpec,
        initial_points: Vec<(Vec<f64>, Vec<f64>)>,
        belief_resolution: usize,
        z_resolution: usize,
    ) -> Result<Self> {
        match spec.horizon() {
            Horizon::Finite(1 | 2) => {}
            h => return Err(Error::Config(format!("tiny games have horizon 1 or 2, got {h}"))),
        }
        if spec.n_follower_states() > 2
            || spec.n_leader_states() > 2
            || spec.n_follower_actions() > 2
            || spec.n_leader_actions() > 3
        {
            return Err(Error::Config(
                "tiny games have at most 2 follower states, 2 leader types, 2 follower actions and 3 leader actions"
                    .into(),
            ));
        }
        if initial_points.is_empty() {
            return Err(Error::Config("tiny game needs at least one initial state".into()));
        }
        Ok(Self {
            spec,
            initial_points,
            belief_resolution,
            z_resolution,
        })
    }

    /// Reads a game config with an extra `[oracle]` table:
    ///
    /// ```toml
    /// [oracle]
    /// belief_resolution = 4
    /// z_resolution = 4
    /// initial_points = [{ belief = [1.0], mean_field = [0.5, 0.5] }]
    /// ```
    ///
    /// Without `initial_points` the config's initial state is used.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let section: OracleSection = match table.remove("oracle") {
            Some(v) => v.try_into()?,
            None => OracleSection::default(),
        };
        let config: GameConfig = toml::Value::Table(table).try_into()?;
        let spec = config.build()?;
        let points = if section.initial_points.is_empty() {
            vec![(spec.initial_leader_belief().to_vec(), spec.initial_mean_field().to_vec())]
        } else {
            section
                .initial_points
                .into_iter()
                .map(|p| (p.belief, p.mean_field))
                .collect()
        };
        Self::new(
            spec,
            points,
            section.belief_resolution.unwrap_or(4),
            section.z_resolution.unwrap_or(4),
        )
    }

    /// Solver settings matching the oracle: same grid, no mixed fallback.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            z_resolution: Some(self.z_resolution),
            belief_resolution: self.belief_resolution,
            damped_fallback: false,
            ..Default::default()
        }
    }

    /// Random grid-closed game. Follower transitions are deterministic and do
    /// not depend on the leader's type (nor on her action when she has two); leader transitions are deterministic
    /// and independent of the mean field. Rewards are random with two
    /// decimals, follower rewards affine in the mean field.
    pub fn random(seed: u64, leader_types: usize, horizon: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nf = 2;
        let nl = leader_types.clamp(1, 2);
        let naf = 2;
        let nal = rng.random_range(2..=3usize);
        let r2 = |rng: &mut ChaCha8Rng| (rng.random_range(-100..=100) as f64) / 100.0;
        let c = Affine::Constant;

        // With two leader types the follower kernel ignores the leader
        // action too, otherwise the next mean field mixes over types and
        // leaves the grid.
        let mut follower_kernel: Vec<Vec<Vec<Vec<Vec<Affine>>>>> = Vec::with_capacity(nal);
        for a in 0..nal {
            if nl > 1 && a > 0 {
                follower_kernel.push(follower_kernel[0].clone());
                continue;
            }
            let mut by_af = Vec::with_capacity(naf);
            for _ in 0..naf {
                let rows: Vec<Vec<Affine>> = (0..nf)
                    .map(|_| {
                        let next = rng.random_range(0..nf);
                        (0..nf).map(|x| c(if x == next { 1.0 } else { 0.0 })).collect()
                    })
                    .collect();
                by_af.push(vec![rows; nl]);
            }
            follower_kernel.push(by_af);
        }
        let leader_kernel: Vec<Vec<Vec<Affine>>> = (0..nal)
            .map(|_| {
                (0..nl)
                    .map(|_| {
                        let next = rng.random_range(0..nl);
                        (0..nl).map(|x| c(if x == next { 1.0 } else { 0.0 })).collect()
                    })
                    .collect()
            })
            .collect();
        let follower_reward: Vec<Vec<Vec<Vec<Affine>>>> = (0..nal)
            .map(|_| {
                (0..naf)
                    .map(|_| {
                        (0..nl)
                            .map(|_| {
                                (0..nf)
                                    .map(|_| Affine::Linear {
                                        c: r2(&mut rng),
                                        z: vec![0.0, r2(&mut rng)],
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let leader_reward: Vec<Vec<Affine>> = (0..nal).map(|_| (0..nl).map(|_| c(r2(&mut rng))).collect()).collect();
        let population: Vec<Vec<Vec<Vec<f64>>>> = (0..nal)
            .map(|_| {
                (0..nl)
                    .map(|_| (0..nf).map(|_| (0..naf).map(|_| r2(&mut rng)).collect()).collect())
                    .collect()
            })
            .collect();
        let table = TableGame {
            follower_states: vec!["s0".into(), "s1".into()],
            leader_states: (0..nl).map(|i| format!("l{i}")).collect(),
            follower_actions: vec!["f0".into(), "f1".into()],
            leader_actions: (0..nal).map(|i| format!("a{i}")).collect(),
            discount: 0.9,
            follower_kernel,
            leader_kernel,
            follower_reward,
            leader_reward,
            leader_population_reward: Some(population),
            leader_welfare_weight: 0.0,
        };
        let spec = GameConfig {
            name: Some(format!("tiny-{seed}")),
            horizon: Horizon::Finite(horizon),
            initial_leader_belief: None,
            initial_mean_field: None,
            game: ModelConfig::Table(table),
        }
        .build()?;
        let zs = [vec![0.5, 0.5], vec![0.25, 0.75]];
        let initial_points = if nl == 1 {
            zs.iter().map(|z| (vec![1.0], z.clone())).collect()
        } else {
            zs.iter().map(|z| (z.clone(), z.clone())).collect()
        };
        TinyGame::new(spec, initial_points, 4, 4)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    belief_resolution: Option<usize>,
    z_resolution: Option<usize>,
    #[serde(default)]
    initial_points: Vec<InitialPoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialPoint {
    belief: Vec<f64>,
    mean_field: Vec<f64>,
}

/// Pure prescription pair: an action per leader type and per follower state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PurePair {
    pub leader: Vec<usize>,
    pub follower: Vec<usize>,
}

/// A pure Markov profile for one initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    /// Index into [`Oracle::pairs`] at the initial state.
    pub first: usize,
    /// Pair index at every reachable second-stage grid point.
    pub second: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Leader,
    Follower,
}

/// Where a deviation is evaluated: the initial state or a second-stage grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoPoint {
    Initial,
    Second(usize),
}

/// Enumeration result for one initial state.
#[derive(Debug, Clone)]
pub struct InitialAnalysis {
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
    /// Grid point of the initial state.
    pub point: usize,
    /// Second-stage grid points reachable under some pure pair.
    pub reachable: Vec<usize>,
    pub profiles: Vec<Profile>,
    /// Profile evaluations performed.
    pub evaluations: u128,
}

pub struct Oracle<'a> {
    game: &'a TinyGame,
    grid: Arc<JointGrid>,
    pairs: Vec<PurePair>,
    rules: Vec<Prescription>,
    pub tol: f64,
    pub cap: u128,
}

/// Per-pair numbers of the first stage under a fixed continuation.
struct FirstStage {
    follower_gain: f64,
    leader_objective: f64,
}

impl<'a> Oracle<'a> {
    pub fn new(game: &'a TinyGame) -> Result<Self> {
        let spec = &game.spec;
        let belief = SimplexGrid::build(spec.n_leader_states(), game.belief_resolution)?;
        let z = SimplexGrid::build(spec.n_follower_states(), game.z_resolution)?;
        let (nl, nf, nal, naf) = (
            spec.n_leader_states(),
            spec.n_follower_states(),
            spec.n_leader_actions(),
            spec.n_follower_actions(),
        );
        let mut pairs = Vec::new();
        let mut rules = Vec::new();
        for l in PureIter::new(nl, nal) {
            for f in PureIter::new(nf, naf) {
                rules.push(Prescription {
                    leader: DecisionRule::pure(&l, nal),
                    follower: DecisionRule::pure(&f, naf),
                });
                pairs.push(PurePair {
                    leader: l.clone(),
                    follower: f,
                });
            }
        }
        Ok(Self {
            game,
            grid: Arc::new(JointGrid::new(belief, z)),
            pairs,
            rules,
            tol: ORACLE_TOL,
            cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    pub fn game(&self) -> &TinyGame {
        self.game
    }
    pub fn grid(&self) -> &Arc<JointGrid> {
        &self.grid
    }
    pub fn pairs(&self) -> &[PurePair] {
        &self.pairs
    }

    fn spec(&self) -> &GameSpec {
        &self.game.spec
    }

    fn horizon(&self) -> usize {
        match self.spec().horizon() {
            Horizon::Finite(t) => t,
            Horizon::Infinite => unreachable!("tiny games are finite"),
        }
    }

    /// Grid point of `(pi, z)`, which must be a node.
    pub fn locate(&self, pi: &[f64], z: &[f64]) -> Result<usize> {
        let p = self.grid.nearest(pi, z)?;
        let (gp, gz) = self.grid.point(p);
        let off = gp.iter().zip(pi).chain(gz.iter().zip(z)).any(|(a, b)| (a - b).abs() > 1e-12);
        if off {
            return Err(Error::NotGridClosed(format!("state pi={pi:?} z={z:?} is not a grid node")));
        }
        Ok(p)
    }

    /// Second-stage point reached after each leader action of positive
    /// probability, or `None`.
    fn successors(&self, pi: &[f64], z: &[f64], pair: usize) -> Result<Vec<Option<usize>>> {
        let spec = self.spec();
        let g = &self.rules[pair];
        let z2 = mean_field_step(spec, pi, z, g);
        let probs = leader_action_distribution(pi, &g.leader);
        (0..spec.n_leader_actions())
            .map(|a| {
                if probs[a] <= crate::dynamics::BAYES_EPSILON {
                    return Ok(None);
                }
                let pi2 = belief_step(spec, pi, z, &g.leader, a, crate::dynamics::BAYES_EPSILON)?;
                self.locate(&pi2, &z2).map(Some)
            })
            .collect()
    }

    /// Follower objective at a last-stage point: `q[x * naf + b]`.
    fn last_stage_q(&self, point: usize, pair: usize) -> Vec<f64> {
        let spec = self.spec();
        let model = spec.model();
        let (nf, naf, nal) = (spec.n_follower_states(), spec.n_follower_actions(), spec.n_leader_actions());
        let (pi, z) = self.grid.point(point);
        let g = &self.rules[pair];
        let mut q = vec![0.0; nf * naf];
        for x in 0..nf {
            for b in 0..naf {
                for (xl, &p) in pi.iter().enumerate() {
                    for a in 0..nal {
                        let w = p * g.leader.prob(xl, a);
                        if w != 0.0 {
                            q[x * naf + b] += w * model.follower_reward(z, xl, x, a, b);
                        }
                    }
                }
            }
        }
        q
    }

    /// Leader value per type at a last-stage point.
    fn last_stage_leader(&self, point: usize, pair: usize) -> Vec<f64> {
        let spec = self.spec();
        let model = spec.model();
        let (_, z) = self.grid.point(point);
        let g = &self.rules[pair];
        (0..spec.n_leader_states())
            .map(|xl| {
                (0..spec.n_leader_actions())
                    .map(|a| {
                        let p = g.leader.prob(xl, a);
                        if p == 0.0 {
                            0.0
                        } else {
                            p * model.leader_reward(z, xl, a, &g.follower)
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn last_stage_follower_gain(&self, point: usize, pair: usize) -> f64 {
        let naf = self.spec().n_follower_actions();
        let q = self.last_stage_q(point, pair);
        let f = &self.pairs[pair].follower;
        f.iter()
            .enumerate()
            .map(|(x, &b)| {
                let best = q[x * naf..(x + 1) * naf].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                best - q[x * naf + b]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn last_stage_objective(&self, point: usize, pair: usize) -> f64 {
        let (pi, _) = self.grid.point(point);
        pi.iter().zip(self.last_stage_leader(point, pair)).map(|(p, v)| p * v).sum()
    }

    /// Best optimistic leader objective at a last-stage point.
    fn last_stage_best(&self, point: usize) -> Option<f64> {
        (0..self.pairs.len())
            .filter(|&p| self.last_stage_follower_gain(point, p) <= self.tol)
            .map(|p| self.last_stage_objective(point, p))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))))
    }

    /// Pairs satisfying the follower and leader conditions at a last stage point.
    fn valid_last_stage(&self, point: usize) -> Vec<usize> {
        let Some(best) = self.last_stage_best(point) else {
            return Vec::new();
        };
        (0..self.pairs.len())
            .filter(|&p| {
                self.last_stage_follower_gain(point, p) <= self.tol
                    && self.last_stage_objective(point, p) >= best - self.tol
            })
            .collect()
    }

    /// First-stage evaluation of `pair` at `(pi, z)` with the second stage
    /// played according to `cont` (point to pair). Followers are checked
    /// against every deviation whose second action may depend on the
    /// leader's first action and the follower's second state.
    fn first_stage(
        &self,
        pi: &[f64],
        z: &[f64],
        pair: usize,
        cont: &BTreeMap<usize, usize>,
    ) -> Result<FirstStage> {
        let spec = self.spec();
        let model = spec.model();
        let (nf, nl, naf, nal) = (
            spec.n_follower_states(),
            spec.n_leader_states(),
            spec.n_follower_actions(),
            spec.n_leader_actions(),
        );
        let delta = spec.discount();
        let g = &self.rules[pair];
        let two = self.horizon() == 2;
        let succ = if two { self.successors(pi, z, pair)? } else { vec![None; nal] };
        let mut row_f = vec![0.0; nf];
        let mut row_l = vec![0.0; nl];

        // e2[a][(xl2 * nf + x2) * naf + b]: second-stage follower reward of
        // action b in state x2 when the leader type is xl2, after action a.
        let mut e2: Vec<Option<Vec<f64>>> = vec![None; nal];
        // w2[a][xl2]: second-stage leader value after action a.
        let mut w2: Vec<Option<Vec<f64>>> = vec![None; nal];
        for a in 0..nal {
            let Some(pt) = succ[a] else { continue };
            let p2 = *cont
                .get(&pt)
                .ok_or_else(|| Error::Config(format!("profile has no choice at grid point {pt}")))?;
            let g2 = &self.rules[p2];
            let (_, z2) = self.grid.point(pt);
            let mut e = vec![0.0; nl * nf * naf];
            for xl2 in 0..nl {
                for x2 in 0..nf {
                    for b in 0..naf {
                        e[(xl2 * nf + x2) * naf + b] = (0..nal)
                            .map(|a2| {
                                let p = g2.leader.prob(xl2, a2);
                                if p == 0.0 {
                                    0.0
                                } else {
                                    p * model.follower_reward(z2, xl2, x2, a2, b)
                                }
                            })
                            .sum();
                    }
                }
            }
            e2[a] = Some(e);
            w2[a] = Some(self.last_stage_leader(pt, p2));
        }

        // Follower: per own state x1, the profile value and the best deviation.
        let mut follower_gain = f64::NEG_INFINITY;
        for x1 in 0..nf {
            let own_first = self.pairs[pair].follower[x1];
            let mut profile_value = 0.0;
            let mut best_value = f64::NEG_INFINITY;
            for a1 in 0..naf {
                let mut immediate = 0.0;
                // s[a][x2][b]: joint-weighted second-stage reward
                let mut s = vec![0.0; nal * nf * naf];
                for (xl1, &p) in pi.iter().enumerate() {
                    for a in 0..nal {
                        let w = p * g.leader.prob(xl1, a);
                        if w == 0.0 {
                            continue;
                        }
                        immediate += w * model.follower_reward(z, xl1, x1, a, a1);
                        let Some(e) = &e2[a] else { continue };
                        model.follower_transition(z, xl1, x1, a, a1, &mut row_f);
                        model.leader_transition(z, xl1, a, &mut row_l);
                        for (x2, pf) in row_f.iter().enumerate() {
                            if *pf == 0.0 {
                                continue;
                            }
                            for (xl2, pl) in row_l.iter().enumerate() {
                                if *pl == 0.0 {
                                    continue;
                                }
                                for b in 0..naf {
                                    s[(a * nf + x2) * naf + b] += w * pf * pl * e[(xl2 * nf + x2) * naf + b];
                                }
                            }
                        }
                    }
                }
                let mut best_cont = 0.0;
                let mut profile_cont = 0.0;
                for (a, pt) in succ.iter().enumerate() {
                    let Some(pt) = pt else { continue };
                    let own_second = &self.pairs[cont[pt]].follower;
                    for x2 in 0..nf {
                        let cell = &s[(a * nf + x2) * naf..(a * nf + x2 + 1) * naf];
                        best_cont += cell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        profile_cont += cell[own_second[x2]];
                    }
                }
                best_value = best_value.max(immediate + delta * best_cont);
                if a1 == own_first {
                    profile_value = immediate + delta * profile_cont;
                }
            }
            follower_gain = follower_gain.max(best_value - profile_value);
        }

        // Leader ex-ante objective.
        let mut leader_objective = 0.0;
        for (xl1, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut v = 0.0;
            for a in 0..nal {
                let gl = g.leader.prob(xl1, a);
                if gl == 0.0 {
                    continue;
                }
                v += gl * model.leader_reward(z, xl1, a, &g.follower);
                if let Some(w) = &w2[a] {
                    model.leader_transition(z, xl1, a, &mut row_l);
                    v += gl * delta * row_l.iter().zip(w).map(|(q, w)| q * w).sum::<f64>();
                }
            }
            leader_objective += p * v;
        }
        Ok(FirstStage {
            follower_gain,
            leader_objective,
        })
    }

    /// First-stage numbers for every pair under a fixed continuation.
    fn first_stage_table(&self, pi: &[f64], z: &[f64], cont: &BTreeMap<usize, usize>) -> Result<Vec<FirstStage>> {
        (0..self.pairs.len()).map(|p| self.first_stage(pi, z, p, cont)).collect()
    }

    fn best_optimistic(table: &[FirstStage], tol: f64) -> Option<f64> {
        table
            .iter()
            .filter(|f| f.follower_gain <= tol)
            .map(|f| f.leader_objective)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))))
    }

    /// Second-stage points reachable from `(pi, z)` under any pure pair.
    pub fn reachable(&self, pi: &[f64], z: &[f64]) -> Result<Vec<usize>> {
        if self.horizon() < 2 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for p in 0..self.pairs.len() {
            for pt in self.successors(pi, z, p)?.into_iter().flatten() {
                out.push(pt);
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// All pure Markov SMFE profiles starting at `(pi, z)`.
    pub fn enumerate(&self, pi: &[f64], z: &[f64]) -> Result<InitialAnalysis> {
        let point = self.locate(pi, z)?;
        let reachable = self.reachable(pi, z)?;
        let valid: Vec<Vec<usize>> = reachable.iter().map(|&pt| self.valid_last_stage(pt)).collect();
        let combos: u128 = valid.iter().map(|v| v.len() as u128).product();
        let evaluations = combos.saturating_mul(self.pairs.len() as u128);
        if evaluations > self.cap {
            return Err(Error::EnumerationTooLarge {
                needed: evaluations,
                cap: self.cap,
            });
        }
        let mut profiles = Vec::new();
        if combos > 0 {
            for digits in MixedRadix::new(valid.iter().map(Vec::len).collect()) {
                let cont: BTreeMap<usize, usize> = reachable
                    .iter()
                    .zip(&digits)
                    .zip(&valid)
                    .map(|((&pt, &d), v)| (pt, v[d]))
                    .collect();
                let table = self.first_stage_table(pi, z, &cont)?;
                let Some(best) = Self::best_optimistic(&table, self.tol) else {
                    continue;
                };
                for (p, f) in table.iter().enumerate() {
                    if f.follower_gain <= self.tol && f.leader_objective >= best - self.tol {
                        profiles.push(Profile {
                            first: p,
                            second: cont.clone(),
                        });
                    }
                }
            }
        }
        Ok(InitialAnalysis {
            belief: pi.to_vec(),
            mean_field: z.to_vec(),
            point,
            reachable,
            profiles,
            evaluations,
        })
    }

    /// Largest gain of a single-point deviation from `profile`. For the
    /// follower at the initial state the deviation may be any
    /// history-dependent plan over both stages.
    pub fn deviation_gain(
        &self,
        profile: &Profile,
        pi: &[f64],
        z: &[f64],
        player: Player,
        at: InfoPoint,
    ) -> Result<f64> {
        match at {
            InfoPoint::Second(pt) => {
                let pair = *profile
                    .second
                    .get(&pt)
                    .ok_or_else(|| Error::Config(format!("profile has no choice at grid point {pt}")))?;
                Ok(match player {
                    Player::Follower => self.last_stage_follower_gain(pt, pair),
                    Player::Leader => {
                        let best = self.last_stage_best(pt).unwrap_or(f64::NEG_INFINITY);
                        best - self.last_stage_objective(pt, pair)
                    }
                })
            }
            InfoPoint::Initial => {
                let own = self.first_stage(pi, z, profile.first, &profile.second)?;
                Ok(match player {
                    Player::Follower => own.follower_gain,
                    Player::Leader => {
                        let table = self.first_stage_table(pi, z, &profile.second)?;
                        Self::best_optimistic(&table, self.tol).unwrap_or(f64::NEG_INFINITY) - own.leader_objective
                    }
                })
            }
        }
    }

    /// Largest deviation gains of `profile` over all info points:
    /// `(follower, leader)`.
    pub fn max_gains(&self, profile: &Profile, pi: &[f64], z: &[f64]) -> Result<(f64, f64)> {
        let mut f = self.deviation_gain(profile, pi, z, Player::Follower, InfoPoint::Initial)?;
        let mut l = self.deviation_gain(profile, pi, z, Player::Leader, InfoPoint::Initial)?;
        for &pt in profile.second.keys() {
            f = f.max(self.deviation_gain(profile, pi, z, Player::Follower, InfoPoint::Second(pt))?);
            l = l.max(self.deviation_gain(profile, pi, z, Player::Leader, InfoPoint::Second(pt))?);
        }
        Ok((f, l))
    }

    /// z-path `(z_1, z_2)` of a profile.
    pub fn z_path(&self, profile: &Profile, pi: &[f64], z: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![z.to_vec()];
        if self.horizon() == 2 {
            out.push(mean_field_step(self.spec(), pi, z, &self.rules[profile.first]));
        }
        out
    }

    fn pair_index(&self, rule: &Prescription) -> Option<usize> {
        let pair = PurePair {
            leader: rule.leader.as_pure()?,
            follower: rule.follower.as_pure()?,
        };
        self.pairs.iter().position(|p| *p == pair)
    }

    /// The profile a solver generator plays from `(pi, z)`.
    pub fn profile_from_generator(
        &self,
        generator: &EquilibriumGenerator,
        pi: &[f64],
        z: &[f64],
    ) -> Result<Profile> {
        if generator.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Config("generator grid differs from the oracle grid".into()));
        }
        let not_pure = || Error::Config("solver prescription is not pure".into());
        let point = self.locate(pi, z)?;
        let first = self
            .pair_index(&generator.stage(1).solutions[point].prescription)
            .ok_or_else(not_pure)?;
        let mut second = BTreeMap::new();
        for pt in self.reachable(pi, z)? {
            let p = self
                .pair_index(&generator.stage(2).solutions[pt].prescription)
                .ok_or_else(not_pure)?;
            second.insert(pt, p);
        }
        Ok(Profile { first, second })
    }

    /// Selection rule that makes the solver pick `profile`'s pairs at its
    /// info points, where they are among the optimal pairs.
    pub fn forcing_selector(&self, profile: &Profile, point: usize) -> SelectionRule {
        let mut wanted: BTreeMap<(usize, usize), PurePair> = BTreeMap::new();
        wanted.insert((1, point), self.pairs[profile.first].clone());
        for (&pt, &p) in &profile.second {
            wanted.insert((2, pt), self.pairs[p].clone());
        }
        let f: Selector = Arc::new(move |ctx, offered| {
            let Some(target) = ctx.point.and_then(|p| wanted.get(&(ctx.stage, p))) else {
                return 0;
            };
            offered
                .iter()
                .position(|c| {
                    c.leader.as_pure().as_ref() == Some(&target.leader)
                        && c.follower.as_pure().as_ref() == Some(&target.follower)
                })
                .unwrap_or(usize::MAX)
        });
        SelectionRule::Custom(f)
    }
}

/// Counter over `digits[i] in 0..radix[i]`, last digit fastest.
struct MixedRadix {
    radix: Vec<usize>,
    current: Option<Vec<usize>>,
}

impl MixedRadix {
    fn new(radix: Vec<usize>) -> Self {
        let current = radix.iter().all(|&r| r > 0).then(|| vec![0; radix.len()]);
        Self { radix, current }
    }
}

impl Iterator for MixedRadix {
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
            if cur[i] < self.radix[i] {
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    }
}

/// Runs the oracle on every initial state of `game`.
pub fn enumerate_smfe(game: &TinyGame) -> Result<Vec<InitialAnalysis>> {
    let oracle = Oracle::new(game)?;
    game.initial_points
        .iter()
        .map(|(pi, z)| oracle.enumerate(pi, z))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub leader: Vec<String>,
    pub follower: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondStageChoice {
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
    pub pair: PairReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub first: PairReport,
    pub second: Vec<SecondStageChoice>,
    pub z_path: Vec<Vec<f64>>,
    pub max_follower_gain: f64,
    pub max_leader_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialReport {
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
    pub smfe: Vec<ProfileReport>,
    /// Index of the solver's profile in `smfe`, if it is there.
    pub solver_profile: Option<usize>,
    pub solver_max_follower_gain: f64,
    pub solver_max_leader_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub game: String,
    pub spec_hash: String,
    pub tolerance: f64,
    pub initial_states: Vec<InitialReport>,
    /// Every initial state has the solver profile in its SMFE set.
    pub solver_in_set: bool,
}

impl Oracle<'_> {
    fn pair_report(&self, pair: usize) -> PairReport {
        let s = self.spec().spaces();
        let p = &self.pairs[pair];
        PairReport {
            leader: p.leader.iter().map(|&a| s.leader_actions[a].clone()).collect(),
            follower: p.follower.iter().map(|&a| s.follower_actions[a].clone()).collect(),
        }
    }

    pub fn profile_report(&self, profile: &Profile, pi: &[f64], z: &[f64]) -> Result<ProfileReport> {
        let (f, l) = self.max_gains(profile, pi, z)?;
        Ok(ProfileReport {
            first: self.pair_report(profile.first),
            second: profile
                .second
                .iter()
                .map(|(&pt, &p)| {
                    let (b, zz) = self.grid.point(pt);
                    SecondStageChoice {
                        belief: b.to_vec(),
                        mean_field: zz.to_vec(),
                        pair: self.pair_report(p),
                    }
                })
                .collect(),
            z_path: self.z_path(profile, pi, z),
            max_follower_gain: f,
            max_leader_gain: l,
        })
    }
}

/// Enumerates every initial state, solves the game with the matching
/// solver settings and reports the SMFE set with solver membership.
pub fn oracle_report(game: &TinyGame) -> Result<OracleReport> {
    let oracle = Oracle::new(game)?;
    let solved = crate::solver::backward_pass(&game.spec, &game.solver_config())?;
    let mut initial_states = Vec::new();
    let mut all_in = true;
    for (pi, z) in &game.initial_points {
        let analysis = oracle.enumerate(pi, z)?;
        let solver_profile = oracle.profile_from_generator(&solved.generator, pi, z)?;
        let index = analysis.profiles.iter().position(|p| *p == solver_profile);
        all_in &= index.is_some();
        let (sf, sl) = oracle.max_gains(&solver_profile, pi, z)?;
        initial_states.push(InitialReport {
            belief: pi.clone(),
            mean_field: z.clone(),
            smfe: analysis
                .profiles
                .iter()
                .map(|p| oracle.profile_report(p, pi, z))
                .collect::<Result<_>>()?,
            solver_profile: index,
            solver_max_follower_gain: sf,
            solver_max_leader_gain: sl,
        });
    }
    Ok(OracleReport {
        game: game.spec.name().to_string(),
        spec_hash: game.spec.spec_hash(),
        tolerance: oracle.tol,
        initial_states,
        solver_in_set: all_in,
    })
}
