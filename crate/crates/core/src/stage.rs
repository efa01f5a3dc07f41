//! Per-state fixed point of one stage: the follower best-response set for a
//! given leader prescription, the leader's optimization over candidate
//! prescriptions, and the resulting stage values.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    belief_step_or_prior, leader_action_distribution, mean_field_step, DecisionRule, Prescription, PureIter,
    BAYES_EPSILON,
};
use crate::error::{Error, Result};
use crate::grid::{
    default_z_resolution, lattice_size, GridTable, JointGrid, SimplexGrid, DEFAULT_BELIEF_RESOLUTION,
    DEFAULT_GRID_CAP,
};
use crate::spec::GameSpec;

/// One optimal `(leader, follower)` pair offered to a custom selection rule.
#[derive(Debug, Clone, Copy)]
pub struct SelectionCandidate<'a> {
    pub leader: &'a DecisionRule,
    pub follower: &'a DecisionRule,
    pub objective: f64,
}

/// Where a selection is being made. `stage` is 1-based for finite horizons
/// and 0 in stationary mode. `point` is the joint grid index, or `None` for
/// an off-grid evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub stage: usize,
    pub point: Option<usize>,
    pub belief: &'a [f64],
    pub mean_field: &'a [f64],
}

pub type Selector = Arc<dyn Fn(&SelectionContext<'_>, &[SelectionCandidate<'_>]) -> usize + Send + Sync>;

/// How to pick among pairs whose leader objective ties with the maximum.
#[derive(Clone, Default)]
pub enum SelectionRule {
    /// First optimal pair in enumeration order.
    #[default]
    Optimistic,
    /// Caller-chosen index into the optimal pairs. Out-of-range indices fall
    /// back to the first pair.
    Custom(Selector),
}

impl fmt::Debug for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::Optimistic => f.write_str("Optimistic"),
            SelectionRule::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Numerical settings shared by all solve modes.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// z-simplex resolution; `None` picks 50 for two follower states, else 10.
    pub z_resolution: Option<usize>,
    pub belief_resolution: usize,
    pub grid_cap: usize,
    /// Follower optimality tolerance of the fixed-point certificate.
    pub fixed_point_tol: f64,
    /// Leader objectives within this of the maximum count as ties.
    pub tie_tol: f64,
    pub bayes_epsilon: f64,
    /// Search mixed follower prescriptions by damped best-response iteration
    /// when no pure fixed point exists.
    pub damped_fallback: bool,
    pub damping: f64,
    pub damped_max_iter: usize,
    /// Add leader prescriptions with probabilities on a `1/mixed_leader_steps`
    /// lattice to the pure candidates.
    pub mixed_leader: bool,
    pub mixed_leader_steps: usize,
    pub leader_candidate_cap: usize,
    pub follower_candidate_cap: usize,
    /// Value-iteration stopping tolerance (stationary mode).
    pub value_tol: f64,
    pub max_iter: usize,
    /// Forward-pass branch cap (expected-path mode).
    pub branch_cap: usize,
    pub selection: SelectionRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            z_resolution: None,
            belief_resolution: DEFAULT_BELIEF_RESOLUTION,
            grid_cap: DEFAULT_GRID_CAP,
            fixed_point_tol: 1e-9,
            tie_tol: 1e-9,
            bayes_epsilon: BAYES_EPSILON,
            damped_fallback: true,
            damping: 0.5,
            damped_max_iter: 500,
            mixed_leader: false,
            mixed_leader_steps: 10,
            leader_candidate_cap: 100_000,
            follower_candidate_cap: 1 << 16,
            value_tol: 1e-6,
            max_iter: 5_000,
            branch_cap: 64,
            selection: SelectionRule::Optimistic,
        }
    }
}

impl SolverConfig {
    pub fn z_resolution_for(&self, spec: &GameSpec) -> usize {
        self.z_resolution
            .unwrap_or_else(|| default_z_resolution(spec.n_follower_states()))
    }

    /// Joint `(pi, z)` grid for `spec`, checked against the cap.
    pub fn grid(&self, spec: &GameSpec) -> Result<Arc<JointGrid>> {
        let belief = SimplexGrid::build_with_cap(spec.n_leader_states(), self.belief_resolution, self.grid_cap)?;
        let zm = self.z_resolution_for(spec);
        let z = SimplexGrid::build_with_cap(spec.n_follower_states(), zm, self.grid_cap)?;
        let joint = belief.len() as u128 * z.len() as u128;
        if joint > self.grid_cap as u128 {
            return Err(Error::GridTooLarge {
                dim: spec.n_leader_states() + spec.n_follower_states(),
                resolution: zm,
                points: joint,
                cap: self.grid_cap,
            });
        }
        Ok(Arc::new(JointGrid::new(belief, z)))
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("fixed_point_tol", self.fixed_point_tol),
            ("tie_tol", self.tie_tol),
            ("bayes_epsilon", self.bayes_epsilon),
            ("value_tol", self.value_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.belief_resolution == 0 || self.z_resolution == Some(0) || self.mixed_leader_steps == 0 {
            return Err(Error::Config("grid resolutions must be at least 1".into()));
        }
        if self.branch_cap == 0 {
            return Err(Error::Config("branch cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Read-only inputs of one stage solve.
#[derive(Clone, Copy)]
pub struct StageContext<'a> {
    pub spec: &'a GameSpec,
    pub config: &'a SolverConfig,
    /// Follower continuation values `V^f_{t+1}`.
    pub follower_next: &'a GridTable,
    /// Leader continuation values `V^l_{t+1}`.
    pub leader_next: &'a GridTable,
    /// 1-based stage, 0 in stationary mode.
    pub stage: usize,
}

/// Everything a prescription pair induces at one public state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub next_mean_field: Vec<f64>,
    /// Probability of each leader action, `sum_x pi(x) gamma_l(a | x)`.
    pub action_probs: Vec<f64>,
    /// Posterior after each leader action that some type plays.
    pub next_beliefs: Vec<Option<Vec<f64>>>,
    /// Actions played by some type but with probability at most epsilon
    /// under `pi`; their posterior is the prior.
    pub off_path_actions: usize,
    /// `follower_q[x_f * |A^f| + a_f]`: follower objective of playing `a_f`
    /// in state `x_f` with everybody else following the prescription.
    pub follower_q: Vec<f64>,
    pub follower_values: Vec<f64>,
    /// Leader value per leader type.
    pub leader_values: Vec<f64>,
    /// `sum_x pi(x) leader_values[x]`.
    pub leader_objective: f64,
}

impl Evaluation {
    pub fn q(&self, x_f: usize, a_f: usize) -> f64 {
        let naf = self.follower_q.len() / self.follower_values.len();
        self.follower_q[x_f * naf + a_f]
    }

    /// Largest gain any follower type gets from a unilateral switch to a
    /// pure action. Non-positive up to rounding at a fixed point.
    pub fn follower_gap(&self) -> f64 {
        let nf = self.follower_values.len();
        let naf = self.follower_q.len() / nf;
        (0..nf)
            .map(|x| {
                let best = self.follower_q[x * naf..(x + 1) * naf]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                best - self.follower_values[x]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates the pair `(leader, follower)` at `(pi, z)` with continuation
/// values interpolated at the induced next public states.
pub fn evaluate(
    ctx: &StageContext<'_>,
    pi: &[f64],
    z: &[f64],
    leader: &DecisionRule,
    follower: &DecisionRule,
) -> Result<Evaluation> {
    let spec = ctx.spec;
    let model = spec.model();
    let (nf, nl, naf, nal) = (
        spec.n_follower_states(),
        spec.n_leader_states(),
        spec.n_follower_actions(),
        spec.n_leader_actions(),
    );
    let delta = spec.discount();
    let gamma = Prescription {
        leader: leader.clone(),
        follower: follower.clone(),
    };
    let next_mean_field = mean_field_step(spec, pi, z, &gamma);
    let action_probs = leader_action_distribution(pi, leader);

    let mut next_beliefs = vec![None; nal];
    let mut cont_f = vec![vec![0.0; nf]; nal];
    let mut cont_l = vec![vec![0.0; nl]; nal];
    let mut off_path_actions = 0;
    for a in 0..nal {
        if !(0..nl).any(|x| leader.prob(x, a) > 0.0) {
            continue;
        }
        let (post, off) = belief_step_or_prior(spec, pi, z, leader, a, ctx.config.bayes_epsilon);
        off_path_actions += off as usize;
        ctx.follower_next.interpolate_all(&post, &next_mean_field, &mut cont_f[a])?;
        ctx.leader_next.interpolate_all(&post, &next_mean_field, &mut cont_l[a])?;
        next_beliefs[a] = Some(post);
    }

    let mut follower_q = vec![0.0; nf * naf];
    let mut row_f = vec![0.0; nf];
    for x_f in 0..nf {
        for b in 0..naf {
            let mut q = 0.0;
            for (x_l, &px) in pi.iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                for a in 0..nal {
                    let w = px * leader.prob(x_l, a);
                    if w == 0.0 {
                        continue;
                    }
                    model.follower_transition(z, x_l, x_f, a, b, &mut row_f);
                    let cont: f64 = row_f.iter().zip(&cont_f[a]).map(|(p, v)| p * v).sum();
                    q += w * (model.follower_reward(z, x_l, x_f, a, b) + delta * cont);
                }
            }
            follower_q[x_f * naf + b] = q;
        }
    }
    let follower_values: Vec<f64> = (0..nf)
        .map(|x| (0..naf).map(|b| follower.prob(x, b) * follower_q[x * naf + b]).sum())
        .collect();

    let mut leader_values = vec![0.0; nl];
    let mut row_l = vec![0.0; nl];
    for (x_l, value) in leader_values.iter_mut().enumerate() {
        for a in 0..nal {
            let g = leader.prob(x_l, a);
            if g == 0.0 {
                continue;
            }
            model.leader_transition(z, x_l, a, &mut row_l);
            let cont: f64 = row_l.iter().zip(&cont_l[a]).map(|(p, v)| p * v).sum();
            *value += g * (model.leader_reward(z, x_l, a, follower) + delta * cont);
        }
    }
    let leader_objective = pi.iter().zip(&leader_values).map(|(p, v)| p * v).sum();

    Ok(Evaluation {
        next_mean_field,
        action_probs,
        next_beliefs,
        off_path_actions,
        follower_q,
        follower_values,
        leader_values,
        leader_objective,
    })
}

/// A follower prescription in the best-response set, with its evaluation.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub follower: DecisionRule,
    pub evaluation: Evaluation,
    /// Found by the damped iteration rather than pure enumeration.
    pub mixed: bool,
}

/// Outcome of [`follower_br_set`].
#[derive(Debug, Clone, Default)]
pub struct BrSearch {
    pub responses: Vec<BestResponse>,
    pub pure_candidates: usize,
    pub fallback_used: bool,
    pub fallback_iterations: usize,
    pub off_path_actions: usize,
}

/// All pure follower fixed points under `leader`, in lexicographic order.
/// When there are none and the fallback is enabled, the damped iteration's
/// limit is returned if it passes the certificate.
pub fn follower_br_set(ctx: &StageContext<'_>, pi: &[f64], z: &[f64], leader: &DecisionRule) -> Result<BrSearch> {
    let (nf, naf) = (ctx.spec.n_follower_states(), ctx.spec.n_follower_actions());
    let count = (naf as u128).checked_pow(nf as u32).unwrap_or(u128::MAX);
    if count > ctx.config.follower_candidate_cap as u128 {
        return Err(Error::EnumerationTooLarge {
            needed: count,
            cap: ctx.config.follower_candidate_cap as u128,
        });
    }
    let tol = ctx.config.fixed_point_tol;
    let mut out = BrSearch {
        pure_candidates: count as usize,
        ..Default::default()
    };
    for choice in PureIter::new(nf, naf) {
        let follower = DecisionRule::pure(&choice, naf);
        let evaluation = evaluate(ctx, pi, z, leader, &follower)?;
        out.off_path_actions = out.off_path_actions.max(evaluation.off_path_actions);
        if evaluation.follower_gap() <= tol {
            out.responses.push(BestResponse {
                follower,
                evaluation,
                mixed: false,
            });
        }
    }
    if out.responses.is_empty() && ctx.config.damped_fallback {
        out.fallback_used = true;
        let (found, iterations) = damped_best_response(ctx, pi, z, leader)?;
        out.fallback_iterations = iterations;
        out.responses.extend(found);
    }
    Ok(out)
}

fn damped_best_response(
    ctx: &StageContext<'_>,
    pi: &[f64],
    z: &[f64],
    leader: &DecisionRule,
) -> Result<(Option<BestResponse>, usize)> {
    let (nf, naf) = (ctx.spec.n_follower_states(), ctx.spec.n_follower_actions());
    let cfg = ctx.config;
    let mut gamma = DecisionRule::uniform(nf, naf);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.damped_max_iter {
        iterations += 1;
        let ev = evaluate(ctx, pi, z, leader, &gamma)?;
        let mut next = gamma.clone();
        for x in 0..nf {
            let best = argmax_first(&ev.follower_q[x * naf..(x + 1) * naf]);
            for (b, p) in next.row_mut(x).iter_mut().enumerate() {
                let target = if b == best { 1.0 } else { 0.0 };
                *p = (1.0 - cfg.damping) * *p + cfg.damping * target;
            }
        }
        let step = next.distance(&gamma);
        gamma = next;
        if step < cfg.fixed_point_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Ok((None, iterations));
    }
    let evaluation = evaluate(ctx, pi, z, leader, &gamma)?;
    if evaluation.follower_gap() <= cfg.fixed_point_tol {
        Ok((
            Some(BestResponse {
                follower: gamma,
                evaluation,
                mixed: true,
            }),
            iterations,
        ))
    } else {
        Ok((None, iterations))
    }
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Leader prescriptions searched at every state: all pure maps, then (if
/// enabled) the non-pure members of the mixed lattice.
pub fn leader_candidates(spec: &GameSpec, config: &SolverConfig) -> Result<Vec<DecisionRule>> {
    let (nl, nal) = (spec.n_leader_states(), spec.n_leader_actions());
    let cap = config.leader_candidate_cap as u128;
    let pure = (nal as u128).checked_pow(nl as u32).unwrap_or(u128::MAX);
    let total = if config.mixed_leader {
        lattice_size(nal, config.mixed_leader_steps)
            .and_then(|rows| rows.checked_pow(nl as u32))
            .unwrap_or(u128::MAX)
    } else {
        pure
    };
    if total > cap {
        return Err(Error::EnumerationTooLarge { needed: total, cap });
    }
    let mut out: Vec<DecisionRule> = DecisionRule::enumerate_pure(nl, nal).collect();
    if config.mixed_leader {
        let rows = SimplexGrid::build_with_cap(nal, config.mixed_leader_steps, usize::MAX)?;
        for pick in PureIter::new(nl, rows.len()) {
            let table: Vec<Vec<f64>> = pick.iter().map(|&r| rows.point(r).to_vec()).collect();
            let rule = DecisionRule::from_rows(&table)?;
            if rule.as_pure().is_none() {
                out.push(rule);
            }
        }
    }
    Ok(out)
}

/// Per-state bookkeeping of a stage solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub leader_candidates: usize,
    /// Leader candidates with a non-empty follower best-response set.
    pub feasible_leader_candidates: usize,
    /// Total pure follower fixed points over all leader candidates.
    pub pure_fixed_points: usize,
    pub largest_br_set: usize,
    /// Leader candidates for which the damped fallback ran.
    pub fallback_runs: usize,
    /// Fallback runs that produced a certified mixed response.
    pub fallback_successes: usize,
    /// Pairs within the tie tolerance of the selected objective, including it.
    pub optimal_pairs: usize,
    pub selected_mixed_follower: bool,
    pub off_path_actions: usize,
}

/// Stage equilibrium at one public state.
#[derive(Debug, Clone)]
pub struct StageSolution {
    pub prescription: Prescription,
    pub follower_values: Vec<f64>,
    pub leader_values: Vec<f64>,
    pub leader_objective: f64,
    pub evaluation: Evaluation,
    pub diagnostics: StageDiagnostics,
}

/// Best optimistic objective of one leader candidate.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub leader: DecisionRule,
    /// `None` when the best-response set is empty.
    pub best: Option<BestResponse>,
    pub br_set_size: usize,
}

/// Full search at one state: every leader candidate with its best-response
/// set, before selection.
#[derive(Debug, Clone)]
pub struct LeaderAnalysis {
    pub candidates: Vec<(DecisionRule, BrSearch)>,
}

impl LeaderAnalysis {
    pub fn run(ctx: &StageContext<'_>, pi: &[f64], z: &[f64], leaders: &[DecisionRule]) -> Result<Self> {
        let candidates = leaders
            .iter()
            .map(|l| Ok((l.clone(), follower_br_set(ctx, pi, z, l)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { candidates })
    }

    /// Optimistic best over the best-response set of each candidate.
    pub fn outcomes(&self) -> Vec<CandidateOutcome> {
        self.candidates
            .iter()
            .map(|(leader, search)| {
                let best = search
                    .responses
                    .iter()
                    .fold(None::<&BestResponse>, |acc, r| match acc {
                        Some(b) if b.evaluation.leader_objective >= r.evaluation.leader_objective => Some(b),
                        _ => Some(r),
                    })
                    .cloned();
                CandidateOutcome {
                    leader: leader.clone(),
                    best,
                    br_set_size: search.responses.len(),
                }
            })
            .collect()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.candidates
            .iter()
            .flat_map(|(_, s)| s.responses.iter().map(|r| r.evaluation.leader_objective))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }
}

/// Solves the stage fixed point at `(pi, z)`. Returns `Ok(None)` when no
/// leader candidate has a follower best response.
pub fn leader_optimize(
    ctx: &StageContext<'_>,
    pi: &[f64],
    z: &[f64],
    leaders: &[DecisionRule],
    point: Option<usize>,
) -> Result<Option<StageSolution>> {
    let analysis = LeaderAnalysis::run(ctx, pi, z, leaders)?;
    Ok(select(ctx, pi, z, point, &analysis))
}

pub(crate) fn select(
    ctx: &StageContext<'_>,
    pi: &[f64],
    z: &[f64],
    point: Option<usize>,
    analysis: &LeaderAnalysis,
) -> Option<StageSolution> {
    let mut diagnostics = StageDiagnostics {
        leader_candidates: analysis.candidates.len(),
        ..Default::default()
    };
    for (_, s) in &analysis.candidates {
        let pure = s.responses.iter().filter(|r| !r.mixed).count();
        diagnostics.pure_fixed_points += pure;
        diagnostics.largest_br_set = diagnostics.largest_br_set.max(s.responses.len());
        diagnostics.feasible_leader_candidates += !s.responses.is_empty() as usize;
        diagnostics.fallback_runs += s.fallback_used as usize;
        diagnostics.fallback_successes += (s.fallback_used && !s.responses.is_empty()) as usize;
        diagnostics.off_path_actions = diagnostics.off_path_actions.max(s.off_path_actions);
    }
    let best = analysis.best_objective()?;
    let optimal: Vec<(&DecisionRule, &BestResponse)> = analysis
        .candidates
        .iter()
        .flat_map(|(l, s)| s.responses.iter().map(move |r| (l, r)))
        .filter(|(_, r)| r.evaluation.leader_objective >= best - ctx.config.tie_tol)
        .collect();
    diagnostics.optimal_pairs = optimal.len();
    let pick = match &ctx.config.selection {
        SelectionRule::Optimistic => 0,
        SelectionRule::Custom(f) => {
            let offered: Vec<SelectionCandidate<'_>> = optimal
                .iter()
                .map(|(l, r)| SelectionCandidate {
                    leader: l,
                    follower: &r.follower,
                    objective: r.evaluation.leader_objective,
                })
                .collect();
            let sel = SelectionContext {
                stage: ctx.stage,
                point,
                belief: pi,
                mean_field: z,
            };
            let i = f(&sel, &offered);
            if i < optimal.len() {
                i
            } else {
                0
            }
        }
    };
    let (leader, response) = optimal[pick];
    diagnostics.selected_mixed_follower = response.mixed;
    let ev = response.evaluation.clone();
    Some(StageSolution {
        prescription: Prescription {
            leader: leader.clone(),
            follower: response.follower.clone(),
        },
        follower_values: ev.follower_values.clone(),
        leader_values: ev.leader_values.clone(),
        leader_objective: ev.leader_objective,
        evaluation: ev,
        diagnostics,
    })
}

/// Stage values of a given prescription at `(pi, z)`: follower value per
/// follower state and leader value per leader type.
pub fn stage_values(
    ctx: &StageContext<'_>,
    pi: &[f64],
    z: &[f64],
    gamma: &Prescription,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ev = evaluate(ctx, pi, z, &gamma.leader, &gamma.follower)?;
    Ok((ev.follower_values, ev.leader_values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Affine, GameConfig, ModelConfig, TableGame};
    use crate::games::InfectionParams;
    use crate::spec::{GameSpec, Horizon};

    fn zero_tables(spec: &GameSpec, config: &SolverConfig) -> (GridTable, GridTable) {
        let grid = config.grid(spec).unwrap();
        (
            GridTable::zeros(grid.clone(), spec.n_follower_states()),
            GridTable::zeros(grid, spec.n_leader_states()),
        )
    }

    /// Two follower states and actions, one leader, reward `a (2 z(1) - 1)`, identity kernel.
    fn sign_game(leader_actions: usize) -> GameSpec {
        let c = |v: f64| Affine::Constant(v);
        let reward = |a: usize| {
            if a == 0 {
                c(0.0)
            } else {
                Affine::Linear {
                    c: -1.0,
                    z: vec![0.0, 2.0],
                }
            }
        };
        let table = TableGame {
            follower_states: vec!["s0".into(), "s1".into()],
            leader_states: vec!["l".into()],
            follower_actions: vec!["a0".into(), "a1".into()],
            leader_actions: (0..leader_actions).map(|i| format!("b{i}")).collect(),
            discount: 0.9,
            follower_kernel: vec![vec![vec![vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]]]; 2]; leader_actions],
            leader_kernel: vec![vec![vec![c(1.0)]]; leader_actions],
            follower_reward: (0..leader_actions)
                .map(|_| (0..2).map(|a| vec![vec![reward(a), reward(a)]]).collect())
                .collect(),
            leader_reward: vec![vec![c(0.0)]; leader_actions],
            leader_population_reward: None,
            leader_welfare_weight: 0.0,
        };
        GameConfig {
            name: None,
            horizon: Horizon::Finite(1),
            initial_leader_belief: None,
            initial_mean_field: None,
            game: ModelConfig::Table(table),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn indifferent_followers_accept_every_pure_map() {
        let mut spec = sign_game(1);
        spec = spec.with_initial_state(vec![1.0], vec![0.5, 0.5]).unwrap();
        let config = SolverConfig::default();
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let br = follower_br_set(&ctx, &[1.0], &[0.5, 0.5], &DecisionRule::pure(&[0], 1)).unwrap();
        assert_eq!(br.responses.len(), 4);
    }

    #[test]
    fn sign_of_externality_decides() {
        let spec = sign_game(1);
        let config = SolverConfig::default();
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let br = follower_br_set(&ctx, &[1.0], &[0.25, 0.75], &DecisionRule::pure(&[0], 1)).unwrap();
        assert_eq!(br.responses.len(), 1);
        assert_eq!(br.responses[0].follower.as_pure().unwrap(), vec![1, 1]);
    }

    #[test]
    fn terminal_infection_followers_do_nothing_and_leader_takes_top_price() {
        let spec = InfectionParams::default().build(Horizon::Finite(1)).unwrap();
        let config = SolverConfig::default();
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let z = [0.6, 0.4];
        let leaders = leader_candidates(&spec, &config).unwrap();
        // positive price: unique BR is do-nothing everywhere
        let br = follower_br_set(&ctx, &[1.0], &z, &leaders[3]).unwrap();
        assert_eq!(br.responses.len(), 1);
        assert_eq!(br.responses[0].follower.as_pure().unwrap(), vec![0, 0]);

        let sol = leader_optimize(&ctx, &[1.0], &z, &leaders, None).unwrap().unwrap();
        // by hand: objective is -k z(1) + c_l - c when nobody repairs; the top grid price wins
        let hand = (0..21)
            .map(|i| -0.2 * 0.4 + (i as f64 / 20.0) - 0.2)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(sol.prescription.leader.as_pure().unwrap(), vec![20]);
        assert!((sol.leader_objective - hand).abs() < 1e-12);
        // terminal stage values are the expected one-stage rewards
        assert!((sol.follower_values[1] + 0.2).abs() < 1e-15);
        assert_eq!(sol.follower_values[0], 0.0);
    }

    #[test]
    fn single_leader_action_degenerates() {
        let spec = sign_game(1);
        let config = SolverConfig::default();
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let leaders = leader_candidates(&spec, &config).unwrap();
        assert_eq!(leaders.len(), 1);
        let sol = leader_optimize(&ctx, &[1.0], &[0.8, 0.2], &leaders, None).unwrap().unwrap();
        assert_eq!(sol.prescription.follower.as_pure().unwrap(), vec![0, 0]);
    }

    #[test]
    fn mixed_leader_grid_extends_pure_candidates() {
        let spec = sign_game(2);
        let config = SolverConfig {
            mixed_leader: true,
            ..Default::default()
        };
        let leaders = leader_candidates(&spec, &config).unwrap();
        assert_eq!(leaders.len(), 11);
        assert_eq!(leaders[0].as_pure().unwrap(), vec![0]);
        assert!(leaders[2..].iter().all(|l| l.as_pure().is_none()));
    }

    #[test]
    fn custom_selection_picks_among_ties() {
        let spec = sign_game(2);
        let pick_last: Selector = Arc::new(|_, c| c.len() - 1);
        let config = SolverConfig {
            selection: SelectionRule::Custom(pick_last),
            ..Default::default()
        };
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let leaders = leader_candidates(&spec, &config).unwrap();
        let sol = leader_optimize(&ctx, &[1.0], &[0.5, 0.5], &leaders, None).unwrap().unwrap();
        // flat leader reward, 2 leader actions times 4 follower maps
        assert_eq!(sol.diagnostics.optimal_pairs, 8);
        assert_eq!(sol.prescription.leader.as_pure().unwrap(), vec![1]);
        assert_eq!(sol.prescription.follower.as_pure().unwrap(), vec![1, 1]);
    }

    #[test]
    fn damped_fallback_is_tried_only_without_pure_points() {
        let spec = sign_game(1);
        let config = SolverConfig::default();
        let (vf, vl) = zero_tables(&spec, &config);
        let ctx = StageContext {
            spec: &spec,
            config: &config,
            follower_next: &vf,
            leader_next: &vl,
            stage: 1,
        };
        let br = follower_br_set(&ctx, &[1.0], &[0.9, 0.1], &DecisionRule::pure(&[0], 1)).unwrap();
        assert!(!br.fallback_used);
    }
}
