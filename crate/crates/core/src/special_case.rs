//! Reference recursion for games whose leader has no private type.
//!
//! With a single leader type the belief is trivial, so the public state is
//! the mean field alone and a leader prescription is a single action. This
//! module recomputes the stage fixed point on the z grid directly from the
//! model, without going through the general stage solver. It exists as an
//! independent check of the general path.

use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use crate::spec::{GameSpec, Horizon};
use crate::stage::SolverConfig;

/// Choice at one z node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceChoice {
    pub leader_action: usize,
    /// Follower action probabilities, `[x_f][a_f]`.
    pub follower: Vec<Vec<f64>>,
}

/// Values per z node: follower `[node][x_f]` and leader `[node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTables {
    pub follower: Vec<Vec<f64>>,
    pub leader: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub grid: SimplexGrid,
    /// Finite horizon: one entry per stage `t = 1..=T` plus the zero terminal
    /// table. Stationary: the converged tables only.
    pub tables: Vec<ReferenceTables>,
    pub choices: Vec<Vec<ReferenceChoice>>,
    pub iterations: usize,
}

struct Outcome {
    follower_values: Vec<f64>,
    leader_value: f64,
    gap: f64,
}

struct Reference<'a> {
    spec: &'a GameSpec,
    config: &'a SolverConfig,
    grid: &'a SimplexGrid,
}

impl Reference<'_> {
    fn next_z(&self, z: &[f64], a: usize, follower: &[Vec<f64>]) -> Vec<f64> {
        let n = self.spec.n_follower_states();
        let model = self.spec.model();
        let mut out = vec![0.0; n];
        let mut row = vec![0.0; n];
        for x in 0..n {
            for (b, p) in follower[x].iter().enumerate() {
                let w = z[x] * p;
                if w == 0.0 {
                    continue;
                }
                model.follower_transition(z, 0, x, a, b, &mut row);
                for (o, r) in out.iter_mut().zip(&row) {
                    *o += w * r;
                }
            }
        }
        for v in out.iter_mut() {
            *v = v.max(0.0);
        }
        let s: f64 = out.iter().sum();
        if s > 0.0 && s != 1.0 {
            out.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    fn outcome(&self, next: &ReferenceTables, z: &[f64], a: usize, follower: &[Vec<f64>]) -> Result<Outcome> {
        let n = self.spec.n_follower_states();
        let naf = self.spec.n_follower_actions();
        let model = self.spec.model();
        let delta = self.spec.discount();
        let z_next = self.next_z(z, a, follower);
        let weights = self.grid.weights(&z_next)?;
        let cont_f: Vec<f64> = (0..n)
            .map(|x| weights.iter().map(|&(i, w)| w * next.follower[i][x]).sum())
            .collect();
        let cont_l: f64 = weights.iter().map(|&(i, w)| w * next.leader[i]).sum();

        let mut row = vec![0.0; n];
        let mut follower_values = vec![0.0; n];
        let mut gap = f64::NEG_INFINITY;
        for x in 0..n {
            let mut q = vec![0.0; naf];
            for (b, qb) in q.iter_mut().enumerate() {
                model.follower_transition(z, 0, x, a, b, &mut row);
                let c: f64 = row.iter().zip(&cont_f).map(|(p, v)| p * v).sum();
                *qb = model.follower_reward(z, 0, x, a, b) + delta * c;
            }
            let v: f64 = follower[x].iter().zip(&q).map(|(p, v)| p * v).sum();
            let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            follower_values[x] = v;
            gap = gap.max(best - v);
        }
        let rule = crate::dynamics::DecisionRule::from_rows(follower)?;
        let leader_value = model.leader_reward(z, 0, a, &rule) + delta * cont_l;
        Ok(Outcome {
            follower_values,
            leader_value,
            gap,
        })
    }

    fn damped(&self, next: &ReferenceTables, z: &[f64], a: usize) -> Result<Option<Vec<Vec<f64>>>> {
        let n = self.spec.n_follower_states();
        let naf = self.spec.n_follower_actions();
        let model = self.spec.model();
        let delta = self.spec.discount();
        let mut g = vec![vec![1.0 / naf as f64; naf]; n];
        let mut row = vec![0.0; n];
        for _ in 0..self.config.damped_max_iter {
            let z_next = self.next_z(z, a, &g);
            let weights = self.grid.weights(&z_next)?;
            let cont_f: Vec<f64> = (0..n)
                .map(|x| weights.iter().map(|&(i, w)| w * next.follower[i][x]).sum())
                .collect();
            let mut step: f64 = 0.0;
            let mut new = g.clone();
            for x in 0..n {
                let mut best = 0;
                let mut best_q = f64::NEG_INFINITY;
                for b in 0..naf {
                    model.follower_transition(z, 0, x, a, b, &mut row);
                    let c: f64 = row.iter().zip(&cont_f).map(|(p, v)| p * v).sum();
                    let q = model.follower_reward(z, 0, x, a, b) + delta * c;
                    if q > best_q {
                        best_q = q;
                        best = b;
                    }
                }
                for b in 0..naf {
                    let target = if b == best { 1.0 } else { 0.0 };
                    new[x][b] = (1.0 - self.config.damping) * g[x][b] + self.config.damping * target;
                    step = step.max((new[x][b] - g[x][b]).abs());
                }
            }
            g = new;
            if step < self.config.fixed_point_tol {
                let out = self.outcome(next, z, a, &g)?;
                return Ok((out.gap <= self.config.fixed_point_tol).then_some(g));
            }
        }
        Ok(None)
    }

    fn stage(&self, next: &ReferenceTables, stage: usize) -> Result<(ReferenceTables, Vec<ReferenceChoice>)> {
        let n = self.spec.n_follower_states();
        let naf = self.spec.n_follower_actions();
        let nal = self.spec.n_leader_actions();
        let mut tables = ReferenceTables {
            follower: Vec::with_capacity(self.grid.len()),
            leader: Vec::with_capacity(self.grid.len()),
        };
        let mut choices = Vec::with_capacity(self.grid.len());
        for node in 0..self.grid.len() {
            let z = self.grid.point(node);
            // (leader action, follower rule, follower values, leader value) in enumeration order
            let mut feasible: Vec<(usize, Vec<Vec<f64>>, Vec<f64>, f64)> = Vec::new();
            for a in 0..nal {
                let mut found = false;
                let total = naf.pow(n as u32);
                for code in 0..total {
                    // most significant digit is state 0
                    let mut rest = code;
                    let mut pure = vec![0usize; n];
                    for x in (0..n).rev() {
                        pure[x] = rest % naf;
                        rest /= naf;
                    }
                    let rule: Vec<Vec<f64>> = pure
                        .iter()
                        .map(|&b| (0..naf).map(|c| if c == b { 1.0 } else { 0.0 }).collect())
                        .collect();
                    let out = self.outcome(next, z, a, &rule)?;
                    if out.gap <= self.config.fixed_point_tol {
                        found = true;
                        feasible.push((a, rule, out.follower_values, out.leader_value));
                    }
                }
                if !found && self.config.damped_fallback {
                    if let Some(rule) = self.damped(next, z, a)? {
                        let out = self.outcome(next, z, a, &rule)?;
                        feasible.push((a, rule, out.follower_values, out.leader_value));
                    }
                }
            }
            let best = feasible
                .iter()
                .map(|f| f.3)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v))))
                .ok_or_else(|| {
                    Error::NoEquilibrium(vec![crate::error::FailedPoint {
                        stage,
                        belief: vec![1.0],
                        mean_field: z.to_vec(),
                    }])
                })?;
            let (a, rule, fv, lv) = feasible
                .into_iter()
                .find(|f| f.3 >= best - self.config.tie_tol)
                .expect("maximum is attained");
            tables.follower.push(fv);
            tables.leader.push(lv);
            choices.push(ReferenceChoice {
                leader_action: a,
                follower: rule,
            });
        }
        Ok((tables, choices))
    }
}

fn zero_tables(grid: &SimplexGrid, n: usize) -> ReferenceTables {
    ReferenceTables {
        follower: vec![vec![0.0; n]; grid.len()],
        leader: vec![0.0; grid.len()],
    }
}

fn sup(a: &ReferenceTables, b: &ReferenceTables) -> f64 {
    let f = a
        .follower
        .iter()
        .flatten()
        .zip(b.follower.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let l = a.leader.iter().zip(&b.leader).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    f.max(l)
}

/// Runs the reference recursion for the horizon of `spec`. Only pure leader
/// actions are searched, so `config.mixed_leader` is ignored.
pub fn solve_reference(spec: &GameSpec, config: &SolverConfig) -> Result<ReferenceSolution> {
    if spec.n_leader_states() != 1 {
        return Err(Error::Config("reference recursion needs a single leader type".into()));
    }
    let grid = SimplexGrid::build_with_cap(spec.n_follower_states(), config.z_resolution_for(spec), config.grid_cap)?;
    let n = spec.n_follower_states();
    let r = Reference {
        spec,
        config,
        grid: &grid,
    };
    match spec.horizon() {
        Horizon::Finite(t_max) => {
            let mut tables = vec![zero_tables(&grid, n)];
            let mut choices = Vec::new();
            for t in (1..=t_max).rev() {
                let (tab, ch) = r.stage(&tables[0], t)?;
                tables.insert(0, tab);
                choices.insert(0, ch);
            }
            Ok(ReferenceSolution {
                grid,
                tables,
                choices,
                iterations: t_max,
            })
        }
        Horizon::Infinite => {
            let mut current = zero_tables(&grid, n);
            let mut history = Vec::new();
            for it in 1..=config.max_iter {
                let (next, ch) = r.stage(&current, 0)?;
                let d = sup(&next, &current);
                history.push(d);
                current = next;
                if d < config.value_tol {
                    return Ok(ReferenceSolution {
                        grid,
                        tables: vec![current],
                        choices: vec![ch],
                        iterations: it,
                    });
                }
            }
            Err(Error::NonConvergence { history })
        }
    }
}
