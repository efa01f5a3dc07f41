//! Backward recursion over stages, stationary value iteration, and the
//! forward pass that unrolls an equilibrium generator into trajectories.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{leader_action_distribution, mean_field_step, DecisionRule, Prescription};
use crate::error::{Error, FailedPoint, Result};
use crate::grid::{normalize_point, GridTable, JointGrid};
use crate::spec::{GameSpec, Horizon};
use crate::stage::{leader_candidates, select, LeaderAnalysis, SolverConfig, StageContext, StageSolution};

/// Stage solutions at every joint grid point.
#[derive(Debug, Clone)]
pub struct StagePolicy {
    pub solutions: Vec<StageSolution>,
}

impl StagePolicy {
    fn same_prescriptions(&self, other: &StagePolicy) -> bool {
        self.solutions.len() == other.solutions.len()
            && self
                .solutions
                .iter()
                .zip(&other.solutions)
                .all(|(a, b)| a.prescription == b.prescription)
    }
}

/// Map from public state to stage prescription, per stage or stationary.
#[derive(Debug, Clone)]
pub struct EquilibriumGenerator {
    grid: Arc<JointGrid>,
    stages: Vec<StagePolicy>,
    stationary: bool,
}

/// Result of looking a public state up in the generator.
#[derive(Debug, Clone, Copy)]
pub struct Lookup<'a> {
    pub point: usize,
    pub on_grid: bool,
    pub solution: &'a StageSolution,
}

impl EquilibriumGenerator {
    pub fn grid(&self) -> &Arc<JointGrid> {
        &self.grid
    }
    pub fn is_stationary(&self) -> bool {
        self.stationary
    }
    /// Number of stored stage policies (1 when stationary).
    pub fn len(&self) -> usize {
        self.stages.len()
    }
    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
    /// Policy used at 1-based stage `t`.
    pub fn stage(&self, t: usize) -> &StagePolicy {
        if self.stationary {
            &self.stages[0]
        } else {
            &self.stages[t - 1]
        }
    }
    pub fn stages(&self) -> &[StagePolicy] {
        &self.stages
    }

    /// Nearest-grid-point prescription at `(pi, z)`.
    pub fn lookup(&self, t: usize, pi: &[f64], z: &[f64]) -> Result<Lookup<'_>> {
        let point = self.grid.nearest(pi, z)?;
        let (gp, gz) = self.grid.point(point);
        let on_grid = max_abs_diff(gp, pi) <= ON_GRID_TOL && max_abs_diff(gz, z) <= ON_GRID_TOL;
        Ok(Lookup {
            point,
            on_grid,
            solution: &self.stage(t).solutions[point],
        })
    }
}

const ON_GRID_TOL: f64 = 1e-12;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves one stage at every grid point in parallel.
pub fn solve_stage(
    spec: &GameSpec,
    config: &SolverConfig,
    follower_next: &GridTable,
    leader_next: &GridTable,
    stage: usize,
    leaders: &[DecisionRule],
) -> Result<(StagePolicy, GridTable, GridTable)> {
    let grid = follower_next.grid().clone();
    let ctx = StageContext {
        spec,
        config,
        follower_next,
        leader_next,
        stage,
    };
    let results: Vec<Result<Option<StageSolution>>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let (pi, z) = grid.point(p);
            let analysis = LeaderAnalysis::run(&ctx, pi, z, leaders)?;
            Ok(select(&ctx, pi, z, Some(p), &analysis))
        })
        .collect();
    let mut solutions = Vec::with_capacity(grid.len());
    let mut failed = Vec::new();
    for (p, r) in results.into_iter().enumerate() {
        match r? {
            Some(s) => solutions.push(s),
            None => {
                let (pi, z) = grid.point(p);
                failed.push(FailedPoint {
                    stage,
                    belief: pi.to_vec(),
                    mean_field: z.to_vec(),
                });
            }
        }
    }
    if !failed.is_empty() {
        return Err(Error::NoEquilibrium(failed));
    }
    let mut vf = GridTable::zeros(grid.clone(), spec.n_follower_states());
    let mut vl = GridTable::zeros(grid, spec.n_leader_states());
    for (p, s) in solutions.iter().enumerate() {
        vf.set_node(p, &s.follower_values);
        vl.set_node(p, &s.leader_values);
    }
    Ok((StagePolicy { solutions }, vf, vl))
}

/// Value tables of a finite-horizon solve. Index `t - 1` holds stage `t`;
/// the last entry is the zero terminal table of stage `T + 1`.
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub follower: Vec<GridTable>,
    pub leader: Vec<GridTable>,
}

#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub generator: EquilibriumGenerator,
    pub tables: ValueTables,
}

/// Backward recursion from the zero terminal tables down to stage 1.
pub fn backward_pass(spec: &GameSpec, config: &SolverConfig) -> Result<BackwardSolution> {
    let horizon = match spec.horizon() {
        Horizon::Finite(t) if t >= 1 => t,
        h => return Err(Error::Config(format!("backward pass needs a finite horizon, got {h}"))),
    };
    config.check()?;
    let grid = config.grid(spec)?;
    let leaders = leader_candidates(spec, config)?;
    let mut follower = vec![GridTable::zeros(grid.clone(), spec.n_follower_states())];
    let mut leader = vec![GridTable::zeros(grid.clone(), spec.n_leader_states())];
    let mut stages = Vec::with_capacity(horizon);
    for t in (1..=horizon).rev() {
        let (policy, vf, vl) = solve_stage(spec, config, &follower[0], &leader[0], t, &leaders)?;
        log::info!("stage {t} solved at {} grid points", grid.len());
        stages.push(policy);
        follower.insert(0, vf);
        leader.insert(0, vl);
    }
    stages.reverse();
    Ok(BackwardSolution {
        generator: EquilibriumGenerator {
            grid,
            stages,
            stationary: false,
        },
        tables: ValueTables { follower, leader },
    })
}

/// Per-iteration record of value iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of the value tables (max over follower and leader).
    pub deltas: Vec<f64>,
    pub follower_deltas: Vec<f64>,
    pub leader_deltas: Vec<f64>,
    /// Whether the stage prescriptions differ from the previous iteration.
    /// The first entry is always true.
    pub policy_changed: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub generator: EquilibriumGenerator,
    pub follower: GridTable,
    pub leader: GridTable,
    pub report: ConvergenceReport,
}

/// Value iteration on the stage map until both tables move by less than
/// `config.value_tol`. `initial` replaces the zero starting tables.
pub fn solve_stationary(
    spec: &GameSpec,
    config: &SolverConfig,
    initial: Option<(GridTable, GridTable)>,
) -> Result<StationarySolution> {
    let d = spec.discount();
    if !(d < 1.0) {
        return Err(Error::Config("stationary solve needs a discount below 1".into()));
    }
    config.check()?;
    let grid = config.grid(spec)?;
    let leaders = leader_candidates(spec, config)?;
    let (mut vf, mut vl) = match initial {
        Some((f, l)) => {
            if f.grid().as_ref() != grid.as_ref() || l.grid().as_ref() != grid.as_ref() {
                return Err(Error::Config("initial tables are on a different grid".into()));
            }
            (f, l)
        }
        None => (
            GridTable::zeros(grid.clone(), spec.n_follower_states()),
            GridTable::zeros(grid.clone(), spec.n_leader_states()),
        ),
    };
    let mut report = ConvergenceReport::default();
    let mut previous: Option<StagePolicy> = None;
    for it in 1..=config.max_iter {
        let (policy, nf, nl) = solve_stage(spec, config, &vf, &vl, 0, &leaders)?;
        let df = nf.sup_distance(&vf);
        let dl = nl.sup_distance(&vl);
        let delta = df.max(dl);
        report.iterations = it;
        report.deltas.push(delta);
        report.follower_deltas.push(df);
        report.leader_deltas.push(dl);
        report
            .policy_changed
            .push(previous.as_ref().is_none_or(|p| !p.same_prescriptions(&policy)));
        log::debug!("value iteration {it}: delta {delta:e}");
        vf = nf;
        vl = nl;
        if delta < config.value_tol {
            report.converged = true;
            return Ok(StationarySolution {
                generator: EquilibriumGenerator {
                    grid,
                    stages: vec![policy],
                    stationary: true,
                },
                follower: vf,
                leader: vl,
                report,
            });
        }
        previous = Some(policy);
    }
    Err(Error::NonConvergence {
        history: report.deltas,
    })
}

/// Result of [`solve`] for either kind of horizon.
#[derive(Debug, Clone)]
pub enum Solution {
    Finite(BackwardSolution),
    Stationary(StationarySolution),
}

impl Solution {
    pub fn generator(&self) -> &EquilibriumGenerator {
        match self {
            Solution::Finite(s) => &s.generator,
            Solution::Stationary(s) => &s.generator,
        }
    }

    /// Value tables at the first stage (stationary: the fixed point).
    pub fn initial_tables(&self) -> (&GridTable, &GridTable) {
        match self {
            Solution::Finite(s) => (&s.tables.follower[0], &s.tables.leader[0]),
            Solution::Stationary(s) => (&s.follower, &s.leader),
        }
    }

    pub fn report(&self) -> Option<&ConvergenceReport> {
        match self {
            Solution::Finite(_) => None,
            Solution::Stationary(s) => Some(&s.report),
        }
    }
}

/// Backward pass or value iteration, depending on the horizon of `spec`.
pub fn solve(spec: &GameSpec, config: &SolverConfig) -> Result<Solution> {
    match spec.horizon() {
        Horizon::Finite(_) => backward_pass(spec, config).map(Solution::Finite),
        Horizon::Infinite => solve_stationary(spec, config, None).map(Solution::Stationary),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ForwardMode {
    /// Branch over leader actions with their probabilities.
    Expected,
    /// Draw one leader action per step.
    Sampled { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub mode: ForwardMode,
    /// Number of steps; required for stationary generators, defaults to the
    /// horizon otherwise.
    pub steps: Option<usize>,
    pub branch_cap: usize,
    pub bayes_epsilon: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            mode: ForwardMode::Expected,
            steps: None,
            branch_cap: 64,
            bayes_epsilon: crate::dynamics::BAYES_EPSILON,
        }
    }
}

/// One public state on the forward path.
#[derive(Debug, Clone)]
pub struct PathNode {
    /// 1-based step.
    pub t: usize,
    /// Probability of reaching this branch.
    pub weight: f64,
    /// Index of the parent branch at `t - 1`.
    pub parent: Option<usize>,
    /// Leader action taken on the edge from the parent.
    pub action_from_parent: Option<usize>,
    pub belief: Vec<f64>,
    pub mean_field: Vec<f64>,
    /// Joint grid point whose prescription is used.
    pub grid_point: usize,
    pub on_grid: bool,
    pub prescription: Prescription,
    pub action_probs: Vec<f64>,
    /// Expected instantaneous leader reward under the belief.
    pub leader_reward: f64,
    /// Expected instantaneous follower reward per follower state.
    pub follower_rewards: Vec<f64>,
    /// Population average of `follower_rewards`.
    pub population_reward: f64,
    /// Sampled leader action at this node (sampled mode only).
    pub sampled_action: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: ForwardMode,
    pub steps: Vec<Vec<PathNode>>,
    /// Probability mass dropped by the branch cap.
    pub lost_mass: f64,
    pub off_grid_lookups: usize,
    /// Expected discounted leader reward by starting leader type
    /// (expected mode; NaN for types of zero initial probability).
    pub leader_values: Option<Vec<f64>>,
    /// Expected discounted reward of a follower by starting follower state.
    pub follower_values: Option<Vec<f64>>,
}

impl Trajectory {
    /// `(pi_t, z_t)` of the heaviest branch at each step.
    pub fn main_path(&self) -> Vec<&PathNode> {
        self.steps
            .iter()
            .map(|nodes| {
                nodes
                    .iter()
                    .fold(&nodes[0], |best, n| if n.weight > best.weight { n } else { best })
            })
            .collect()
    }
}

struct Branch {
    weight: f64,
    parent: Option<usize>,
    action: Option<usize>,
    belief: Vec<f64>,
    mean_field: Vec<f64>,
    /// `[x0 * n_l + x]`: P(first leader type x0, current type x, branch).
    leader_joint: Vec<f64>,
    /// `[(x0 * n_l + x_l) * n_f + x_f]`: P(first follower state x0, current
    /// leader type, current follower state, branch).
    follower_joint: Vec<f64>,
}

fn key(pi: &[f64], z: &[f64]) -> Vec<u64> {
    pi.iter().chain(z).map(|v| v.to_bits()).collect()
}

/// Unrolls `generator` from `(pi_1, z_1)`.
pub fn forward_pass(
    spec: &GameSpec,
    generator: &EquilibriumGenerator,
    pi1: &[f64],
    z1: &[f64],
    options: &ForwardOptions,
) -> Result<Trajectory> {
    let (nf, nl, naf, nal) = (
        spec.n_follower_states(),
        spec.n_leader_states(),
        spec.n_follower_actions(),
        spec.n_leader_actions(),
    );
    let steps = match (options.steps, spec.horizon()) {
        (Some(s), _) => s,
        (None, Horizon::Finite(t)) => t,
        (None, Horizon::Infinite) => {
            return Err(Error::Config("forward pass of a stationary game needs a step count".into()))
        }
    };
    if !generator.stationary && steps > generator.stages.len() {
        return Err(Error::Config(format!(
            "generator has {} stages, {steps} requested",
            generator.stages.len()
        )));
    }
    let pi1 = normalize_point(pi1, nl)?;
    let z1 = normalize_point(z1, nf)?;
    let model = spec.model();
    let delta = spec.discount();
    let expected = options.mode == ForwardMode::Expected;
    let mut rng = match options.mode {
        ForwardMode::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ForwardMode::Expected => None,
    };

    let mut leader_joint = vec![0.0; nl * nl];
    for x in 0..nl {
        leader_joint[x * nl + x] = pi1[x];
    }
    let mut follower_joint = vec![0.0; nf * nl * nf];
    for x0 in 0..nf {
        for xl in 0..nl {
            follower_joint[(x0 * nl + xl) * nf + x0] = z1[x0] * pi1[xl];
        }
    }
    let mut branches = vec![Branch {
        weight: 1.0,
        parent: None,
        action: None,
        belief: pi1.clone(),
        mean_field: z1.clone(),
        leader_joint,
        follower_joint,
    }];
    let mut leader_acc = vec![0.0; nl];
    let mut follower_acc = vec![0.0; nf];
    let mut out_steps = Vec::with_capacity(steps);
    let mut lost_mass = 0.0;
    let mut off_grid_lookups = 0;
    let mut discount = 1.0;
    let mut row_l = vec![0.0; nl];
    let mut row_f = vec![0.0; nf];

    for t in 1..=steps {
        let mut nodes = Vec::with_capacity(branches.len());
        let mut children: Vec<Branch> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (bi, br) in branches.iter().enumerate() {
            let (pi, z) = (&br.belief, &br.mean_field);
            let found = generator.lookup(t, pi, z)?;
            if !found.on_grid {
                off_grid_lookups += 1;
                log::debug!("t={t}: off-grid state pi={pi:?} z={z:?}, using grid point {}", found.point);
            }
            let gamma = found.solution.prescription.clone();
            let action_probs = leader_action_distribution(pi, &gamma.leader);

            // instantaneous rewards
            let mut r_l_type = vec![0.0; nl];
            for (x, r) in r_l_type.iter_mut().enumerate() {
                for a in 0..nal {
                    let g = gamma.leader.prob(x, a);
                    if g > 0.0 {
                        *r += g * model.leader_reward(z, x, a, &gamma.follower);
                    }
                }
            }
            let mut r_f = vec![0.0; nl * nf];
            for xl in 0..nl {
                for xf in 0..nf {
                    let mut r = 0.0;
                    for a in 0..nal {
                        let g = gamma.leader.prob(xl, a);
                        if g == 0.0 {
                            continue;
                        }
                        for b in 0..naf {
                            let h = gamma.follower.prob(xf, b);
                            if h > 0.0 {
                                r += g * h * model.follower_reward(z, xl, xf, a, b);
                            }
                        }
                    }
                    r_f[xl * nf + xf] = r;
                }
            }
            let leader_reward: f64 = pi.iter().zip(&r_l_type).map(|(p, r)| p * r).sum();
            let follower_rewards: Vec<f64> = (0..nf)
                .map(|xf| (0..nl).map(|xl| pi[xl] * r_f[xl * nf + xf]).sum())
                .collect();
            let population_reward = z.iter().zip(&follower_rewards).map(|(a, b)| a * b).sum();

            if expected {
                for x0 in 0..nl {
                    for x in 0..nl {
                        leader_acc[x0] += discount * br.leader_joint[x0 * nl + x] * r_l_type[x];
                    }
                }
                for x0 in 0..nf {
                    for xl in 0..nl {
                        for xf in 0..nf {
                            follower_acc[x0] +=
                                discount * br.follower_joint[(x0 * nl + xl) * nf + xf] * r_f[xl * nf + xf];
                        }
                    }
                }
            }

            let z_next = mean_field_step(spec, pi, z, &gamma);
            let sampled = rng.as_mut().map(|r| sample_index(r, &action_probs));
            let actions: Vec<usize> = match sampled {
                Some(a) => vec![a],
                None => (0..nal).filter(|&a| action_probs[a] > options.bayes_epsilon).collect(),
            };
            for a in actions {
                let mut lj = vec![0.0; nl * nl];
                for x0 in 0..nl {
                    for x in 0..nl {
                        let w = br.leader_joint[x0 * nl + x] * gamma.leader.prob(x, a);
                        if w == 0.0 {
                            continue;
                        }
                        model.leader_transition(z, x, a, &mut row_l);
                        for (xn, p) in row_l.iter().enumerate() {
                            lj[x0 * nl + xn] += w * p;
                        }
                    }
                }
                let mut fj = vec![0.0; nf * nl * nf];
                for x0 in 0..nf {
                    for xl in 0..nl {
                        let gl = gamma.leader.prob(xl, a);
                        if gl == 0.0 {
                            continue;
                        }
                        model.leader_transition(z, xl, a, &mut row_l);
                        for xf in 0..nf {
                            let m = br.follower_joint[(x0 * nl + xl) * nf + xf] * gl;
                            if m == 0.0 {
                                continue;
                            }
                            for b in 0..naf {
                                let h = gamma.follower.prob(xf, b);
                                if h == 0.0 {
                                    continue;
                                }
                                model.follower_transition(z, xl, xf, a, b, &mut row_f);
                                for (xln, pl) in row_l.iter().enumerate() {
                                    if *pl == 0.0 {
                                        continue;
                                    }
                                    for (xfn, pf) in row_f.iter().enumerate() {
                                        fj[(x0 * nl + xln) * nf + xfn] += m * h * pl * pf;
                                    }
                                }
                            }
                        }
                    }
                }
                let (post, _) =
                    crate::dynamics::belief_step_or_prior(spec, pi, z, &gamma.leader, a, options.bayes_epsilon);
                let weight = if expected { br.weight * action_probs[a] } else { br.weight };
                let k = key(&post, &z_next);
                match index.get(&k) {
                    Some(&ci) => {
                        let c: &mut Branch = &mut children[ci];
                        c.weight += weight;
                        c.leader_joint.iter_mut().zip(&lj).for_each(|(u, v)| *u += v);
                        c.follower_joint.iter_mut().zip(&fj).for_each(|(u, v)| *u += v);
                    }
                    None => {
                        index.insert(k, children.len());
                        children.push(Branch {
                            weight,
                            parent: Some(bi),
                            action: Some(a),
                            belief: post,
                            mean_field: z_next.clone(),
                            leader_joint: lj,
                            follower_joint: fj,
                        });
                    }
                }
            }

            nodes.push(PathNode {
                t,
                weight: br.weight,
                parent: br.parent,
                action_from_parent: br.action,
                belief: pi.clone(),
                mean_field: z.clone(),
                grid_point: found.point,
                on_grid: found.on_grid,
                prescription: gamma,
                action_probs,
                leader_reward,
                follower_rewards,
                population_reward,
                sampled_action: sampled,
            });
        }
        out_steps.push(nodes);
        discount *= delta;

        if children.len() > options.branch_cap {
            let mut order: Vec<usize> = (0..children.len()).collect();
            order.sort_by(|&a, &b| children[b].weight.total_cmp(&children[a].weight).then(a.cmp(&b)));
            let keep: Vec<usize> = order[..options.branch_cap].to_vec();
            let kept: f64 = keep.iter().map(|&i| children[i].weight).sum();
            let total: f64 = children.iter().map(|c| c.weight).sum();
            let dropped = total - kept;
            lost_mass += dropped;
            log::warn!("t={t}: branch cap {} reached, dropping mass {dropped:e}", options.branch_cap);
            let mut sorted_keep = keep;
            sorted_keep.sort_unstable();
            let scale = total / kept;
            let mut retained = Vec::with_capacity(sorted_keep.len());
            let mut taken: Vec<Option<Branch>> = children.into_iter().map(Some).collect();
            for i in sorted_keep {
                let mut c = taken[i].take().unwrap();
                c.weight *= scale;
                c.leader_joint.iter_mut().for_each(|v| *v *= scale);
                c.follower_joint.iter_mut().for_each(|v| *v *= scale);
                retained.push(c);
            }
            children = retained;
        }
        branches = children;
    }

    let (leader_values, follower_values) = if expected {
        (
            Some(
                leader_acc
                    .iter()
                    .zip(&pi1)
                    .map(|(v, p)| if *p > 0.0 { v / p } else { f64::NAN })
                    .collect(),
            ),
            Some(
                follower_acc
                    .iter()
                    .zip(&z1)
                    .map(|(v, p)| if *p > 0.0 { v / p } else { f64::NAN })
                    .collect(),
            ),
        )
    } else {
        (None, None)
    };
    Ok(Trajectory {
        mode: options.mode,
        steps: out_steps,
        lost_mass,
        off_grid_lookups,
        leader_values,
        follower_values,
    })
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}
