//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smfe::dynamics::{belief_step, leader_action_distribution, mean_field_step, DecisionRule, Prescription};
use smfe::games::{InfectionParams, TechAdoptionParams};
use smfe::grid::GridTable;
use smfe::oracle::{Oracle, TinyGame};
use smfe::solver::{
    backward_pass, forward_pass, solve_stationary, ForwardOptions, StationarySolution, Trajectory, ValueTables,
};
use smfe::special_case::solve_reference;
use smfe::spec::{GameSpec, Horizon};
use smfe::stage::{evaluate, leader_candidates, LeaderAnalysis, SolverConfig, StageContext};
use smfe::Error;

const DEVIATION_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn m50() -> SolverConfig {
    SolverConfig {
        z_resolution: Some(50),
        value_tol: 1e-6,
        ..Default::default()
    }
}

struct StationaryRun {
    spec: GameSpec,
    config: SolverConfig,
    solution: StationarySolution,
    elapsed: Duration,
}

fn stationary(spec: GameSpec, config: SolverConfig) -> StationaryRun {
    let start = Instant::now();
    let solution = solve_stationary(&spec, &config, None).expect("stationary solve");
    StationaryRun {
        spec,
        config,
        solution,
        elapsed: start.elapsed(),
    }
}

fn infection(lambda: f64) -> &'static StationaryRun {
    static A: OnceLock<StationaryRun> = OnceLock::new();
    static B: OnceLock<StationaryRun> = OnceLock::new();
    let cell = if lambda == 0.2 { &A } else { &B };
    cell.get_or_init(|| {
        stationary(
            InfectionParams {
                lambda,
                ..Default::default()
            }
            .build(Horizon::Infinite)
            .unwrap(),
            m50(),
        )
    })
}

fn tech() -> &'static StationaryRun {
    static T: OnceLock<StationaryRun> = OnceLock::new();
    // At m = 50 (and 21) value iteration for this game settles into a cycle of
    // follower equilibrium switches and never converges; m = 40 converges.
    T.get_or_init(|| {
        let config = SolverConfig {
            z_resolution: Some(40),
            ..m50()
        };
        stationary(TechAdoptionParams::default().build(Horizon::Infinite).unwrap(), config)
    })
}

fn expected_path(spec: &GameSpec, run: &StationarySolution, steps: usize) -> Trajectory {
    let options = ForwardOptions {
        steps: Some(steps),
        ..Default::default()
    };
    forward_pass(
        spec,
        &run.generator,
        spec.initial_leader_belief(),
        spec.initial_mean_field(),
        &options,
    )
    .unwrap()
}

// 1 ------------------------------------------------------------------------

fn infection_end_state() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for lambda in [0.2, 0.21] {
        let run = infection(lambda);
        let path = expected_path(&run.spec, &run.solution, 200);
        let infected: Vec<f64> = path.main_path().iter().map(|n| n.mean_field[1]).collect();
        let hit = infected.iter().position(|&v| v < 0.01);
        let fast = run.elapsed < Duration::from_secs(300);
        if lambda == 0.2 {
            pass &= fast && run.solution.report.converged && hit.is_some();
        }
        parts.push(format!(
            "lambda={lambda}: converged in {} iterations ({:.1}s), infected < 0.01 from step {}",
            run.solution.report.iterations,
            run.elapsed.as_secs_f64(),
            hit.map_or("never".to_string(), |t| (t + 1).to_string()),
        ));
    }
    outcome(pass, parts.join("; "))
}

// 2 and tiny-game half of 3 -----------------------------------------------

struct TinyResult {
    games: usize,
    solved: usize,
    consistent_failures: usize,
    mismatches: Vec<String>,
    profiles: usize,
    recovered: usize,
    max_history_gain: f64,
}

fn tiny_games() -> Vec<TinyGame> {
    (0..8u64)
        .map(|seed| TinyGame::random(seed, 1 + (seed as usize % 2), 2).unwrap())
        .collect()
}

/// When the solver finds no stage equilibrium at a grid point, the oracle
/// must agree that the subgame starting there has no pure SMFE.
fn oracle_confirms_failure(game: &TinyGame, err: &Error) -> bool {
    let Error::NoEquilibrium(points) = err else {
        return false;
    };
    points.iter().all(|p| {
        let remaining = 2 - p.stage + 1;
        let sub = TinyGame::new(
            game.spec.with_horizon(Horizon::Finite(remaining)),
            vec![(p.belief.clone(), p.mean_field.clone())],
            game.belief_resolution,
            game.z_resolution,
        )
        .unwrap();
        let oracle = Oracle::new(&sub).unwrap();
        oracle
            .enumerate(&p.belief, &p.mean_field)
            .is_ok_and(|a| a.profiles.is_empty())
    })
}

fn tiny_results() -> &'static TinyResult {
    static R: OnceLock<TinyResult> = OnceLock::new();
    R.get_or_init(|| {
        let mut r = TinyResult {
            games: 0,
            solved: 0,
            consistent_failures: 0,
            mismatches: Vec::new(),
            profiles: 0,
            recovered: 0,
            max_history_gain: f64::NEG_INFINITY,
        };
        for game in tiny_games() {
            r.games += 1;
            let name = game.spec.name().to_string();
            let config = game.solver_config();
            let solved = match backward_pass(&game.spec, &config) {
                Ok(s) => s,
                Err(e) => {
                    if oracle_confirms_failure(&game, &e) {
                        r.consistent_failures += 1;
                    } else {
                        r.mismatches.push(format!("{name}: solver failed ({e}) where the oracle finds an SMFE"));
                    }
                    continue;
                }
            };
            r.solved += 1;
            let oracle = Oracle::new(&game).unwrap();
            for (pi, z) in &game.initial_points {
                let analysis = oracle.enumerate(pi, z).unwrap();
                let mine = oracle.profile_from_generator(&solved.generator, pi, z).unwrap();
                if !analysis.profiles.contains(&mine) {
                    r.mismatches.push(format!("{name} at pi={pi:?} z={z:?}: solver profile not in SMFE set"));
                }
                let (gain, _) = oracle.max_gains(&mine, pi, z).unwrap();
                r.max_history_gain = r.max_history_gain.max(gain);
                for profile in &analysis.profiles {
                    r.profiles += 1;
                    let forced = SolverConfig {
                        selection: oracle.forcing_selector(profile, analysis.point),
                        ..config.clone()
                    };
                    let got = backward_pass(&game.spec, &forced)
                        .and_then(|s| oracle.profile_from_generator(&s.generator, pi, z));
                    match got {
                        Ok(p) if p == *profile => r.recovered += 1,
                        _ => r.mismatches.push(format!("{name} at pi={pi:?} z={z:?}: SMFE not recovered by forcing")),
                    }
                }
            }
        }
        r
    })
}

fn oracle_equivalence() -> Outcome {
    let r = tiny_results();
    let pass = r.solved >= 5 && r.mismatches.is_empty() && r.recovered == r.profiles;
    let mut detail = format!(
        "{} games, {} solved, {} with no equilibrium confirmed by the oracle; {}/{} oracle SMFE recovered by forcing; {} mismatches",
        r.games,
        r.solved,
        r.consistent_failures,
        r.recovered,
        r.profiles,
        r.mismatches.len()
    );
    if let Some(m) = r.mismatches.first() {
        detail.push_str(&format!(" (first: {m})"));
    }
    outcome(pass, detail)
}

// 3 and 4 ------------------------------------------------------------------

enum Tables<'a> {
    Fixed(&'a GridTable, &'a GridTable),
    Stages(&'a ValueTables),
}

impl Tables<'_> {
    /// Continuation tables for stage `t` of a finite solve, or the fixed point.
    fn next(&self, t: usize) -> (&GridTable, &GridTable) {
        match self {
            Tables::Fixed(f, l) => (f, l),
            Tables::Stages(v) => (&v.follower[t], &v.leader[t]),
        }
    }
}

struct Solved<'a> {
    name: String,
    spec: GameSpec,
    config: SolverConfig,
    generator: &'a smfe::solver::EquilibriumGenerator,
    tables: Tables<'a>,
    path: Trajectory,
}

fn finite(spec: GameSpec, horizon: usize) -> &'static smfe::solver::BackwardSolution {
    Box::leak(Box::new(backward_pass(&spec.with_horizon(Horizon::Finite(horizon)), &m50()).unwrap()))
}

fn example_runs() -> Vec<Solved<'static>> {
    let mut out = Vec::new();
    for (name, run) in [("infection", infection(0.2)), ("infection l=0.21", infection(0.21)), ("tech m=40", tech())] {
        let s = &run.solution;
        out.push(Solved {
            name: format!("{name} stationary"),
            spec: run.spec.clone(),
            config: run.config.clone(),
            generator: &s.generator,
            tables: Tables::Fixed(&s.follower, &s.leader),
            path: expected_path(&run.spec, s, 200),
        });
    }
    for (name, spec) in [
        ("infection T=10", InfectionParams::default().build(Horizon::Finite(10)).unwrap()),
        ("tech T=10", TechAdoptionParams::default().build(Horizon::Finite(10)).unwrap()),
    ] {
        let b = finite(spec.clone(), 10);
        let path = forward_pass(
            &spec,
            &b.generator,
            spec.initial_leader_belief(),
            spec.initial_mean_field(),
            &ForwardOptions::default(),
        )
        .unwrap();
        out.push(Solved {
            name: name.into(),
            spec,
            config: m50(),
            generator: &b.generator,
            tables: Tables::Stages(&b.tables),
            path,
        });
    }
    out
}

fn runs() -> &'static Vec<Solved<'static>> {
    static R: OnceLock<Vec<Solved<'static>>> = OnceLock::new();
    R.get_or_init(example_runs)
}

/// `(stage, grid point)` pairs visited by a path, deduplicated.
fn visited(run: &Solved<'_>) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = run
        .path
        .steps
        .iter()
        .flatten()
        .map(|n| (if run.generator.is_stationary() { 0 } else { n.t }, n.grid_point))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn ctx<'a>(run: &'a Solved<'a>, stage: usize) -> StageContext<'a> {
    let (f, l) = run.tables.next(stage);
    StageContext {
        spec: &run.spec,
        config: &run.config,
        follower_next: f,
        leader_next: l,
        stage,
    }
}

fn follower_no_deviation() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut off_grid = 0;
    let mut parts = Vec::new();
    for run in runs() {
        let mut run_worst: f64 = f64::NEG_INFINITY;
        for nodes in &run.path.steps {
            for n in nodes {
                let stage = if run.generator.is_stationary() { 0 } else { n.t };
                let c = ctx(run, stage);
                // off-grid states are played with the nearest node's
                // prescription; the equilibrium is checked at that node
                let (pi, z) = if n.on_grid {
                    (n.belief.clone(), n.mean_field.clone())
                } else {
                    off_grid += 1;
                    let (b, zz) = run.generator.grid().point(n.grid_point);
                    (b.to_vec(), zz.to_vec())
                };
                let ev = evaluate(&c, &pi, &z, &n.prescription.leader, &n.prescription.follower).unwrap();
                run_worst = run_worst.max(ev.follower_gap());
            }
        }
        parts.push(format!("{} {:.1e}", run.name, run_worst.max(0.0)));
        worst = worst.max(run_worst);
    }
    let r = tiny_results();
    let pass = worst <= DEVIATION_TOL && r.max_history_gain <= ORACLE_TOL;
    outcome(
        pass,
        format!(
            "max single-stage gain {:.1e} [{}], {off_grid} off-grid nodes checked at their grid node; tiny games max history-dependent gain {:.1e}",
            worst.max(0.0),
            parts.join(", "),
            r.max_history_gain.max(0.0)
        ),
    )
}

fn leader_no_deviation() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut points = 0;
    for run in runs() {
        let leaders = leader_candidates(&run.spec, &run.config).unwrap();
        for (stage, point) in visited(run) {
            let c = ctx(run, stage);
            let (pi, z) = run.generator.grid().point(point);
            let chosen = &run.generator.stage(stage.max(1)).solutions[point].prescription;
            let own = evaluate(&c, pi, z, &chosen.leader, &chosen.follower).unwrap().leader_objective;
            let best = LeaderAnalysis::run(&c, pi, z, &leaders).unwrap().best_objective().unwrap();
            worst = worst.max(best - own);
            points += 1;
        }
    }
    // tiny games: the leader check at every info point of the solver profile
    let mut tiny_worst: f64 = f64::NEG_INFINITY;
    for game in tiny_games() {
        let Ok(solved) = backward_pass(&game.spec, &game.solver_config()) else {
            continue;
        };
        let oracle = Oracle::new(&game).unwrap();
        for (pi, z) in &game.initial_points {
            let p = oracle.profile_from_generator(&solved.generator, pi, z).unwrap();
            tiny_worst = tiny_worst.max(oracle.max_gains(&p, pi, z).unwrap().1);
        }
    }
    outcome(
        worst <= DEVIATION_TOL && tiny_worst <= ORACLE_TOL,
        format!(
            "max leader gain {:.1e} over {points} visited grid points; tiny games {:.1e}",
            worst.max(0.0),
            tiny_worst.max(0.0)
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // occasionally put mass on a face
    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn random_rule(rng: &mut ChaCha8Rng, states: usize, actions: usize) -> DecisionRule {
    let rows: Vec<Vec<f64>> = (0..states).map(|_| random_simplex(rng, actions)).collect();
    DecisionRule::from_rows(&rows).unwrap()
}

fn dynamics_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs: Vec<GameSpec> = vec![
        InfectionParams::default().build(Horizon::Infinite).unwrap(),
        TechAdoptionParams::default().build(Horizon::Infinite).unwrap(),
        TinyGame::random(11, 2, 2).unwrap().spec,
        TinyGame::random(12, 1, 2).unwrap().spec,
    ];
    let mut worst_mf: f64 = 0.0;
    let mut worst_belief: f64 = 0.0;
    for i in 0..10_000 {
        let spec = &specs[i % specs.len()];
        let pi = random_simplex(&mut rng, spec.n_leader_states());
        let z = random_simplex(&mut rng, spec.n_follower_states());
        let gamma = Prescription {
            leader: random_rule(&mut rng, spec.n_leader_states(), spec.n_leader_actions()),
            follower: random_rule(&mut rng, spec.n_follower_states(), spec.n_follower_actions()),
        };
        let next = mean_field_step(spec, &pi, &z, &gamma);
        worst_mf = worst_mf.max((next.iter().sum::<f64>() - 1.0).abs());
        let probs = leader_action_distribution(&pi, &gamma.leader);
        let a = probs.iter().enumerate().fold(0, |b, (k, p)| if *p > probs[b] { k } else { b });
        let post = belief_step(spec, &pi, &z, &gamma.leader, a, 1e-12).unwrap();
        worst_belief = worst_belief.max((post.iter().sum::<f64>() - 1.0).abs());
    }
    let mut worst_tech: f64 = 0.0;
    for _ in 0..1_000 {
        let p2 = rng.random_range(0.0..0.5);
        let p1 = rng.random_range(0.0..=p2);
        let spec = TechAdoptionParams {
            p1,
            p2,
            ..Default::default()
        }
        .build(Horizon::Infinite)
        .unwrap();
        let z = random_simplex(&mut rng, 2);
        let follower = random_rule(&mut rng, 2, 2);
        let gamma = Prescription {
            leader: DecisionRule::pure(&[rng.random_range(0..spec.n_leader_actions())], spec.n_leader_actions()),
            follower,
        };
        let next = mean_field_step(&spec, &[1.0], &z, &gamma);
        // index 0 is -1, index 1 is +1 for both states and actions
        let g = |a: usize, x: usize| gamma.follower.prob(x, a);
        let closed = 1.0
            - (z[1] * g(0, 1) * p2 + z[1] * g(1, 1) * p1 + z[0] * g(0, 0) * (1.0 - p1) + z[0] * g(1, 0) * (1.0 - p2));
        worst_tech = worst_tech.max((next[1] - closed).abs());
    }
    outcome(
        worst_mf <= 1e-12 && worst_belief <= 1e-12 && worst_tech <= 1e-12,
        format!(
            "10^4 calls: mean field sum error {worst_mf:.1e}, belief sum error {worst_belief:.1e}; tech closed form error {worst_tech:.1e} on 10^3 inputs"
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn special_case() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    let config = m50();
    for (name, spec) in [
        ("infection", InfectionParams::default().build(Horizon::Finite(10)).unwrap()),
        ("tech", TechAdoptionParams::default().build(Horizon::Finite(10)).unwrap()),
    ] {
        let general = backward_pass(&spec, &config).unwrap();
        let reference = solve_reference(&spec, &config).unwrap();
        let mut d: f64 = 0.0;
        for t in 0..=10 {
            for node in 0..reference.grid.len() {
                for (x, v) in reference.tables[t].follower[node].iter().enumerate() {
                    d = d.max((general.tables.follower[t].get(node, x) - v).abs());
                }
                d = d.max((general.tables.leader[t].get(node, 0) - reference.tables[t].leader[node]).abs());
            }
        }
        parts.push(format!("{name} T=10 {d:.1e}"));
        worst = worst.max(d);
    }
    for (name, run) in [("infection", infection(0.2)), ("tech m=40", tech())] {
        let reference = solve_reference(&run.spec, &run.config).unwrap();
        let mut d: f64 = 0.0;
        for node in 0..reference.grid.len() {
            for (x, v) in reference.tables[0].follower[node].iter().enumerate() {
                d = d.max((run.solution.follower.get(node, x) - v).abs());
            }
            d = d.max((run.solution.leader.get(node, 0) - reference.tables[0].leader[node]).abs());
        }
        parts.push(format!("{name} stationary {d:.1e}"));
        worst = worst.max(d);
    }
    outcome(worst <= 1e-10, format!("max table difference {worst:.1e} [{}]", parts.join(", ")))
}

// 7 ------------------------------------------------------------------------

fn value_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut games: Vec<TinyGame> = tiny_games();
    games.extend((20..24u64).map(|s| TinyGame::random(s, 2, 1).unwrap()));
    for game in &games {
        let Ok(solved) = backward_pass(&game.spec, &game.solver_config()) else {
            continue;
        };
        for (pi, z) in &game.initial_points {
            let path = forward_pass(&game.spec, &solved.generator, pi, z, &ForwardOptions::default()).unwrap();
            assert_eq!(path.off_grid_lookups, 0, "tiny games stay on the grid");
            let point = solved.generator.lookup(1, pi, z).unwrap().point;
            let vf = solved.tables.follower[0].node(point);
            let vl = solved.tables.leader[0].node(point);
            for (a, b) in path.follower_values.as_ref().unwrap().iter().zip(vf) {
                worst = worst.max((a - b).abs());
            }
            for ((a, b), p) in path.leader_values.as_ref().unwrap().iter().zip(vl).zip(pi) {
                if *p > 0.0 {
                    worst = worst.max((a - b).abs());
                }
            }
            checked += 1;
        }
    }
    outcome(
        worst <= 1e-8 && checked > 0,
        format!("{checked} initial states of grid-closed games, max |forward - V_1| {worst:.1e}"),
    )
}

// 8 ------------------------------------------------------------------------

fn contraction() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut parts = Vec::new();
    for (name, run) in [("infection", infection(0.2)), ("infection l=0.21", infection(0.21)), ("tech m=40", tech())] {
        let r = &run.solution.report;
        let delta = run.spec.discount();
        let mut w: f64 = 0.0;
        for j in 3..r.deltas.len() {
            let stable = !r.policy_changed[j - 2] && !r.policy_changed[j - 1] && !r.policy_changed[j];
            if stable && r.deltas[j - 1] > 0.0 {
                w = w.max(r.deltas[j] / r.deltas[j - 1]);
                checked += 1;
            }
        }
        parts.push(format!("{name} {w:.4}"));
        worst = worst.max(w);
        if worst > delta + 0.01 {
            return outcome(false, format!("ratio {worst:.4} exceeds {}", delta + 0.01));
        }
    }
    outcome(
        checked > 0,
        format!("max delta ratio {worst:.4} over {checked} stable iterations [{}], bound 0.91", parts.join(", ")),
    )
}

// 9 ------------------------------------------------------------------------

fn run_cli(args: &[&str], out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut full = vec!["smfe", "solve"];
    full.extend_from_slice(args);
    let out_s = out.to_str().unwrap().to_string();
    full.extend_from_slice(&["--out", &out_s]);
    assert_eq!(smfe::cli::run(full), 0);
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let cases: [&[&str]; 3] = [
        &["--game", "infection", "--infinite", "--z-resolution", "20", "--mode", "sampled", "--seed", "7", "--steps", "40"],
        &["--game", "tech", "--horizon", "6", "--z-resolution", "30"],
        &["--game-file", concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml"), "--belief-resolution", "4", "--z-resolution", "4"],
    ];
    let mut files = 0;
    for args in cases {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = run_cli(args, a.path());
        let fb = run_cli(args, b.path());
        if fa != fb {
            return outcome(false, format!("artifacts differ for {}", args.join(" ")));
        }
        files += fa.len();
    }
    outcome(true, format!("3 configurations run twice, {files} files byte-identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("infection end-state", infection_end_state),
        ("oracle equivalence", oracle_equivalence),
        ("follower no-deviation", follower_no_deviation),
        ("leader no-deviation", leader_no_deviation),
        ("dynamics conservation", dynamics_conservation),
        ("special-case equivalence", special_case),
        ("value consistency", value_consistency),
        ("stationary contraction", contraction),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|x| *x == id || name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += !result.pass as usize;
        println!(
            "acceptance {id} {name}: {} ({:.1}s) {}",
            if result.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
