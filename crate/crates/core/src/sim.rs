//! Episode simulation: trajectory rollouts under a behavior policy,
//! Monte-Carlo value estimates, and belief paths recorded from episodes.
//!
//! Every draw comes from a counter-based generator keyed by (seed, stream),
//! one stream per episode, so batches are reproducible bit-for-bit under
//! any thread count. Draw order within an episode: initial state before
//! initial mode (each only if unspecified), then per step the action (only
//! if the policy is random), the next state, and — only when the episode
//! continues — the next mode.

use rayon::prelude::*;

use crate::dp_markov::Policy;
use crate::dp_nonmarkov::BeliefTrajectory;
use crate::error::{Error, Result};
use crate::info::{belief_update, Belief, InfoState};
use crate::model::MdpModel;
use crate::rng::{Philox, GENERATOR};

/// One executed step: the state/mode the controller saw, the action it
/// took, and the reward it collected.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Step {
    pub k: usize,
    pub x: usize,
    pub s: usize,
    pub u: usize,
    pub r: f64,
}

/// Why an episode stopped.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    /// The state drawn for time `tau + 1` left the grid; `tau` is the last
    /// in-grid index (−1 by convention would mean an invalid start, which
    /// rollouts never produce).
    Exited { tau: i64 },
    /// The step budget ran out while still in the grid.
    Truncated,
}

/// Record of one episode.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EpisodeTrace {
    pub steps: Vec<Step>,
    pub stop: StopReason,
    pub seed: u64,
    pub stream: u64,
    pub policy_label: String,
    pub generator: String,
}

impl EpisodeTrace {
    /// Last in-grid index, if the episode exited.
    pub fn tau(&self) -> Option<i64> {
        match self.stop {
            StopReason::Exited { tau } => Some(tau),
            StopReason::Truncated => None,
        }
    }

    /// Σ γᵏ·r(k) over the recorded steps.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let mut disc = 1.0;
        for step in &self.steps {
            acc += disc * step.r;
            disc *= gamma;
        }
        acc
    }
}

/// What chooses actions during a rollout.
#[derive(Clone, Copy)]
pub enum BehaviorPolicy<'a> {
    /// Window-indexed deterministic policy; the rollout maintains the
    /// window it needs.
    Deterministic(&'a Policy),
    /// Every action equally likely at every step.
    UniformRandom,
}

impl BehaviorPolicy<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            BehaviorPolicy::Deterministic(_) => "deterministic",
            BehaviorPolicy::UniformRandom => "uniform-random",
        }
    }
}

/// Where an episode starts. `None` fields are drawn from the model's
/// initial distributions.
#[derive(Clone, Debug, Default)]
pub struct EpisodeInit {
    pub window: Option<InfoState>,
    pub mode: Option<usize>,
}

/// First index whose cumulative mass exceeds `v`, or None if `v` lands in
/// the remaining mass.
fn cdf_pick(v: f64, probs: impl Iterator<Item = f64>) -> Option<usize> {
    let mut acc = 0.0;
    for (i, p) in probs.enumerate() {
        acc += p;
        if v < acc {
            return Some(i);
        }
    }
    None
}

/// Largest index with positive mass; the landing spot when rounding pushes
/// a draw past the last cumulative step of an exhaustive distribution.
fn last_positive(probs: impl Iterator<Item = f64>) -> usize {
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last = i;
        }
    }
    last
}

/// Rolls out one episode for at most `max_steps` steps.
pub fn simulate_episode(
    model: &MdpModel,
    behavior: BehaviorPolicy<'_>,
    init: &EpisodeInit,
    seed: u64,
    stream: u64,
    max_steps: usize,
) -> Result<EpisodeTrace> {
    let g = model.num_points();
    let nu = model.num_actions();
    if let Some(w) = &init.window {
        for (t, &x) in w.window().iter().enumerate() {
            if x >= g {
                return Err(Error::Index {
                    context: format!("episode start window entry {t}"),
                    index: x,
                    len: g,
                });
            }
        }
    }
    if let Some(s) = init.mode {
        if s >= model.num_modes {
            return Err(Error::Index {
                context: "episode start mode".into(),
                index: s,
                len: model.num_modes,
            });
        }
    }
    let memory = match behavior {
        BehaviorPolicy::Deterministic(p) => {
            if p.space().num_grid() != g {
                return Err(Error::Shape {
                    context: "behavior policy grid".into(),
                    expected: format!("{g} grid points"),
                    actual: format!("{}", p.space().num_grid()),
                });
            }
            if p.num_actions() != nu {
                return Err(Error::Shape {
                    context: "behavior policy actions".into(),
                    expected: format!("{nu} actions"),
                    actual: format!("{}", p.num_actions()),
                });
            }
            if let Some(w) = &init.window {
                if w.memory() != p.space().memory() {
                    return Err(Error::Shape {
                        context: "episode start window".into(),
                        expected: format!("memory {}", p.space().memory()),
                        actual: format!("{}", w.memory()),
                    });
                }
            }
            p.space().memory()
        }
        BehaviorPolicy::UniformRandom => init.window.as_ref().map_or(0, |w| w.memory()),
    };

    let mut rng = Philox::new(seed, stream);
    let mut info = match &init.window {
        Some(w) => w.clone(),
        None => {
            let v = rng.next_f64();
            let x0 = cdf_pick(v, model.initial_x.iter().copied())
                .unwrap_or_else(|| last_positive(model.initial_x.iter().copied()));
            InfoState::repeated(x0, memory, g)?
        }
    };
    let mut s = match init.mode {
        Some(s) => s,
        None => {
            let v = rng.next_f64();
            cdf_pick(v, model.initial_s.weights().iter().copied())
                .unwrap_or_else(|| last_positive(model.initial_s.weights().iter().copied()))
        }
    };

    let mut steps = Vec::new();
    let mut stop = StopReason::Truncated;
    for k in 0..max_steps {
        let x = info.newest();
        let u = match behavior {
            BehaviorPolicy::Deterministic(p) => p.action(p.space().index_of(&info)?),
            BehaviorPolicy::UniformRandom => rng.next_index(nu),
        };
        steps.push(Step {
            k,
            x,
            s,
            u,
            r: model.reward.value(x, u),
        });

        let row = model.kernel.row(x, s, u);
        let v = rng.next_f64();
        let xn = match cdf_pick(v, row.iter().copied()) {
            Some(xn) => xn,
            None => {
                if model.kernel.exit(x, s, u) > 0.0 {
                    stop = StopReason::Exited { tau: k as i64 };
                    break;
                }
                last_positive(row.iter().copied())
            }
        };
        if k + 1 == max_steps {
            break;
        }
        let chain_row = model.chain.matrix_at(x)?;
        let v = rng.next_f64();
        s = cdf_pick(v, chain_row.row(s).iter().copied())
            .unwrap_or_else(|| last_positive(chain_row.row(s).iter().copied()));
        info = info.push_observation(xn, g)?;
    }

    Ok(EpisodeTrace {
        steps,
        stop,
        seed,
        stream,
        policy_label: behavior.label().into(),
        generator: GENERATOR.into(),
    })
}

/// Monte-Carlo estimate of the discounted return.
#[derive(Clone, Debug, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
    pub horizon: usize,
    /// Worst-case mass beyond the horizon: γᴴ·m/(1−γ).
    pub tail_bound: f64,
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for x in xs {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Averages discounted returns over episodes run on streams 0..episodes of
/// the given seed. Identical inputs give identical estimates under any
/// thread count: episodes are keyed by stream, reductions are sequential.
pub fn monte_carlo_value(
    model: &MdpModel,
    behavior: BehaviorPolicy<'_>,
    init: &EpisodeInit,
    seed: u64,
    episodes: usize,
    horizon: usize,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("no episodes requested".into()));
    }
    let returns = (0..episodes)
        .into_par_iter()
        .map(|e| {
            simulate_episode(model, behavior, init, seed, e as u64, horizon)
                .map(|t| t.discounted_return(model.gamma))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = kahan_sum(returns.iter().copied()) / n;
    let std_error = if returns.len() > 1 {
        let ss = kahan_sum(returns.iter().map(|r| (r - mean) * (r - mean)));
        (ss / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    let tail_bound = model.gamma.powi(horizon as i32) * model.reward.bound() / (1.0 - model.gamma);
    Ok(McEstimate {
        mean,
        std_error,
        episodes,
        horizon,
        tail_bound,
    })
}

/// Smallest horizon whose worst-case discounted tail γᴴ·m/(1−γ) is at most
/// `tail_tol`, capped at 10⁶ steps.
pub fn default_horizon(gamma: f64, bound_m: f64, tail_tol: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail tolerance {tail_tol} must be positive"
        )));
    }
    let mut h = 1usize;
    let mut tail = gamma * bound_m / (1.0 - gamma);
    while tail > tail_tol && h < 1_000_000 {
        tail *= gamma;
        h += 1;
    }
    Ok(h)
}

/// Belief path b(0), b(1), …, b(n) recorded along an episode with n steps:
/// b(0) is `prior` (the model's initial mode distribution when omitted) and
/// each step's realized state advances the belief through the chain.
pub fn belief_trajectory_from_episode(
    model: &MdpModel,
    trace: &EpisodeTrace,
    prior: Option<Belief>,
) -> Result<BeliefTrajectory> {
    let b0 = prior.unwrap_or_else(|| model.initial_s.clone());
    if b0.dim() != model.num_modes {
        return Err(Error::Shape {
            context: "episode belief prior".into(),
            expected: format!("{} modes", model.num_modes),
            actual: format!("{}", b0.dim()),
        });
    }
    let mut beliefs = Vec::with_capacity(trace.steps.len() + 1);
    beliefs.push(b0);
    for step in &trace.steps {
        let next = belief_update(beliefs.last().unwrap(), step.x, &model.chain)?;
        beliefs.push(next);
    }
    BeliefTrajectory::new(
        beliefs,
        format!(
            "episode(seed={}, stream={}, policy={})",
            trace.seed, trace.stream, trace.policy_label
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_markov::{policy_evaluation, InfoSpace, MixingWeights, Policy};
    use crate::model::{
        build_kernel, Action, ActionSet, BoundaryPolicy, ChainModel, DensitySpec, GridSpace,
        MdpModel, RewardModel,
    };
    use ndarray::{Array2, Array3};

    fn model_with(
        density: &DensitySpec,
        rows: &[[f64; 2]; 2],
        gamma: f64,
        initial_x: Vec<f64>,
    ) -> MdpModel {
        let g = 5;
        let grid = GridSpace::new(vec![(0.0, 1.0)], g).unwrap();
        let actions = ActionSet::new(vec![
            Action {
                label: "down".into(),
                payload: vec![-0.1],
            },
            Action {
                label: "up".into(),
                payload: vec![0.1],
            },
        ])
        .unwrap();
        let kernel = build_kernel(density, &grid, 2, &actions).unwrap();
        let chain =
            ChainModel::new(Array3::from_shape_fn((g, 2, 2), |(_, i, j)| rows[i][j])).unwrap();
        let reward = RewardModel::new(
            Array2::from_shape_fn((g, 2), |(x, u)| {
                0.1 + 0.2 * (x as f64 / 4.0) + 0.05 * u as f64
            }),
            1.0,
        )
        .unwrap();
        MdpModel {
            grid,
            num_modes: 2,
            actions,
            kernel,
            chain,
            reward,
            gamma,
            initial_x,
            initial_s: Belief::uniform(2),
        }
    }

    fn gaussian() -> DensitySpec {
        DensitySpec::Gaussian {
            drift: vec![vec![0.05], vec![-0.05]],
            gain: vec![vec![1.0], vec![1.0]],
            sigma: vec![0.2, 0.25],
            boundary: BoundaryPolicy::Exit,
        }
    }

    const ERGODIC: [[f64; 2]; 2] = [[0.9, 0.1], [0.2, 0.8]];

    fn point_mass(i: usize, g: usize) -> Vec<f64> {
        let mut v = vec![0.0; g];
        v[i] = 1.0;
        v
    }

    #[test]
    fn same_seed_and_stream_reproduce_the_trace() {
        let model = model_with(&gaussian(), &ERGODIC, 0.9, vec![0.2; 5]);
        let init = EpisodeInit::default();
        let a = simulate_episode(&model, BehaviorPolicy::UniformRandom, &init, 7, 3, 60).unwrap();
        let b = simulate_episode(&model, BehaviorPolicy::UniformRandom, &init, 7, 3, 60).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.stop, b.stop);
        assert_eq!(a.generator, "philox4x32-10");

        let c = simulate_episode(&model, BehaviorPolicy::UniformRandom, &init, 7, 4, 60).unwrap();
        assert_ne!(
            a.steps.iter().map(|s| s.x).collect::<Vec<_>>(),
            c.steps.iter().map(|s| s.x).collect::<Vec<_>>()
        );
    }

    #[test]
    fn identity_kernel_never_exits_and_matches_the_geometric_sum() {
        let model = model_with(
            &DensitySpec::Identity,
            &ERGODIC,
            0.9,
            point_mass(2, 5),
        );
        let space = InfoSpace::new(5, 0).unwrap();
        let policy = Policy::new(space, 2, vec![1; 5]).unwrap();
        let init = EpisodeInit::default();
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::Deterministic(&policy),
            &init,
            1,
            0,
            40,
        )
        .unwrap();
        assert_eq!(trace.stop, StopReason::Truncated);
        assert_eq!(trace.tau(), None);
        assert_eq!(trace.steps.len(), 40);
        assert!(trace.steps.iter().all(|s| s.x == 2 && s.u == 1));
        let r = model.reward.value(2, 1);
        let want = r * (1.0 - 0.9f64.powi(40)) / (1.0 - 0.9);
        assert!((trace.discounted_return(0.9) - want).abs() < 1e-12);
    }

    #[test]
    fn certain_exit_stops_after_one_step() {
        // Mean far outside a tight grid: the whole mass exits.
        let spec = DensitySpec::Gaussian {
            drift: vec![vec![50.0], vec![50.0]],
            gain: vec![vec![1.0], vec![1.0]],
            sigma: vec![0.1, 0.1],
            boundary: BoundaryPolicy::Exit,
        };
        let model = model_with(&spec, &ERGODIC, 0.9, point_mass(0, 5));
        let init = EpisodeInit {
            window: None,
            mode: Some(0),
        };
        let trace =
            simulate_episode(&model, BehaviorPolicy::UniformRandom, &init, 5, 0, 50).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.stop, StopReason::Exited { tau: 0 });
        assert_eq!(trace.tau(), Some(0));
        assert_eq!(
            trace.discounted_return(0.9),
            model.reward.value(0, trace.steps[0].u)
        );
    }

    #[test]
    fn fixed_init_pieces_are_respected() {
        let model = model_with(&gaussian(), &ERGODIC, 0.9, point_mass(3, 5));
        // Point-mass start: the drawn state is forced even when sampled.
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            11,
            0,
            5,
        )
        .unwrap();
        assert_eq!(trace.steps[0].x, 3);

        let init = EpisodeInit {
            window: Some(InfoState::new(vec![1, 4], 5).unwrap()),
            mode: Some(1),
        };
        let trace = simulate_episode(&model, BehaviorPolicy::UniformRandom, &init, 11, 0, 5)
            .unwrap();
        assert_eq!(trace.steps[0].x, 1);
        assert_eq!(trace.steps[0].s, 1);
    }

    #[test]
    fn deterministic_rollouts_follow_window_policies() {
        let spec = DensitySpec::Gaussian {
            drift: vec![vec![0.05], vec![-0.05]],
            gain: vec![vec![1.0], vec![1.0]],
            sigma: vec![0.2, 0.25],
            boundary: BoundaryPolicy::Truncate,
        };
        let model = model_with(&spec, &ERGODIC, 0.9, vec![0.2; 5]);
        let space = InfoSpace::new(5, 1).unwrap();
        // Act by the newest grid index's parity.
        let choices: Vec<usize> = (0..space.count()).map(|i| space.newest(i) % 2).collect();
        let policy = Policy::new(space, 2, choices).unwrap();
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::Deterministic(&policy),
            &EpisodeInit::default(),
            3,
            1,
            60,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 60);
        assert!(trace.steps.iter().all(|s| s.u == s.x % 2));

        // Mismatched start-window memory is refused.
        let bad = EpisodeInit {
            window: Some(InfoState::new(vec![0], 5).unwrap()),
            mode: None,
        };
        assert!(matches!(
            simulate_episode(&model, BehaviorPolicy::Deterministic(&policy), &bad, 3, 1, 5),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn degenerate_chain_mc_is_exact_with_zero_spread() {
        // Identity kernel, constant reward row: every episode returns the
        // same geometric sum regardless of the random mode path.
        let g = 5;
        let grid = GridSpace::new(vec![(0.0, 1.0)], g).unwrap();
        let actions = ActionSet::new(vec![Action {
            label: "hold".into(),
            payload: vec![0.0],
        }])
        .unwrap();
        let kernel = build_kernel(&DensitySpec::Identity, &grid, 2, &actions).unwrap();
        let chain = ChainModel::new(Array3::from_shape_fn((g, 2, 2), |(_, i, j)| {
            ERGODIC[i][j]
        }))
        .unwrap();
        let reward = RewardModel::new(Array2::from_elem((g, 1), 0.3), 1.0).unwrap();
        let model = MdpModel {
            grid,
            num_modes: 2,
            actions,
            kernel,
            chain,
            reward,
            gamma: 0.9,
            initial_x: point_mass(1, g),
            initial_s: Belief::uniform(2),
        };
        let est = monte_carlo_value(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            21,
            64,
            30,
        )
        .unwrap();
        let want = 0.3 * (1.0 - 0.9f64.powi(30)) / (1.0 - 0.9);
        assert!((est.mean - want).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
        assert!((est.tail_bound - 0.9f64.powi(30) * 10.0).abs() < 1e-12);
    }

    // Identical chain rows make the window mix exact for any start window,
    // so plain policy evaluation and rollouts must agree statistically.
    #[test]
    fn monte_carlo_agrees_with_policy_evaluation_on_identical_rows() {
        let mu = [[0.6, 0.4], [0.6, 0.4]];
        let model = model_with(&gaussian(), &mu, 0.9, point_mass(2, 5));
        let mut model = model;
        model.initial_s = Belief::new(vec![0.6, 0.4]).unwrap();

        let space = InfoSpace::new(5, 0).unwrap();
        let policy = Policy::new(space, 2, vec![0; 5]).unwrap();
        let w = MixingWeights::stationary(space, &model.chain).unwrap();
        let tol = 1e-10;
        let sol = policy_evaluation(&model, &w, &policy, tol, 10_000).unwrap();
        assert!(sol.trace.converged);
        let dp = sol.values.get(2);

        let horizon = default_horizon(0.9, 1.0, 1e-6).unwrap();
        let init = EpisodeInit {
            window: Some(InfoState::repeated(2, 0, 5).unwrap()),
            mode: None,
        };
        let est = monte_carlo_value(
            &model,
            BehaviorPolicy::Deterministic(&policy),
            &init,
            2024,
            4000,
            horizon,
        )
        .unwrap();
        let margin = 3.0 * est.std_error + est.tail_bound + 2.0 * tol;
        assert!(
            (est.mean - dp).abs() <= margin,
            "dp {dp} vs mc {} ± {margin}",
            est.mean
        );
        // The margin must be doing real work.
        assert!(est.std_error > 0.0);
    }

    #[test]
    fn horizon_is_the_smallest_with_tail_under_tolerance() {
        let h = default_horizon(0.9, 1.0, 1e-6).unwrap();
        let tail = |h: usize| 0.9f64.powi(h as i32) * 1.0 / 0.1;
        assert!(tail(h) <= 1e-6);
        assert!(tail(h - 1) > 1e-6);
        assert_eq!(default_horizon(0.0, 1.0, 1e-6).unwrap(), 1);
        assert!(default_horizon(1.0, 1.0, 1e-6).is_err());
        assert!(default_horizon(0.9, 1.0, 0.0).is_err());
    }

    #[test]
    fn episode_belief_path_follows_the_chain_updates() {
        let model = model_with(&gaussian(), &ERGODIC, 0.9, vec![0.2; 5]);
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            13,
            2,
            25,
        )
        .unwrap();
        let traj = belief_trajectory_from_episode(&model, &trace, None).unwrap();
        assert_eq!(traj.len(), trace.steps.len() + 1);
        assert_eq!(traj.belief(0).weights(), model.initial_s.weights());
        for (k, step) in trace.steps.iter().enumerate() {
            let want = belief_update(traj.belief(k), step.x, &model.chain).unwrap();
            assert_eq!(traj.belief(k + 1).weights(), want.weights());
        }
        assert!(traj.source().contains("seed=13"));

        // Identical rows collapse every updated belief onto the row.
        let mu = [[0.7, 0.3], [0.7, 0.3]];
        let model = model_with(&gaussian(), &mu, 0.9, vec![0.2; 5]);
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            13,
            2,
            25,
        )
        .unwrap();
        let traj = belief_trajectory_from_episode(&model, &trace, None).unwrap();
        for k in 1..traj.len() {
            assert!((traj.belief(k).weights()[0] - 0.7).abs() < 1e-12);
        }
    }

    // One long zero-exit rollout; each recorded (s, s′) pair is a draw from
    // the chain row, so empirical rows converge at the binomial rate.
    #[test]
    fn mode_transition_frequencies_match_the_chain_rows() {
        let spec = DensitySpec::Gaussian {
            drift: vec![vec![0.05], vec![-0.05]],
            gain: vec![vec![1.0], vec![1.0]],
            sigma: vec![0.2, 0.25],
            boundary: BoundaryPolicy::Truncate,
        };
        let model = model_with(&spec, &ERGODIC, 0.9, vec![0.2; 5]);
        let n = 100_000;
        let trace = simulate_episode(
            &model,
            BehaviorPolicy::UniformRandom,
            &EpisodeInit::default(),
            31,
            0,
            n,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), n);
        let mut counts = [[0usize; 2]; 2];
        for pair in trace.steps.windows(2) {
            counts[pair[0].s][pair[1].s] += 1;
        }
        for s in 0..2 {
            let total: usize = counts[s].iter().sum();
            assert!(total > 10_000, "mode {s} undersampled: {total}");
            for sn in 0..2 {
                let p = ERGODIC[s][sn];
                let freq = counts[s][sn] as f64 / total as f64;
                let sigma = (p * (1.0 - p) / total as f64).sqrt();
                assert!(
                    (freq - p).abs() <= 3.0 * sigma,
                    "P[{s}][{sn}]: freq {freq} vs {p} (3σ = {})",
                    3.0 * sigma
                );
            }
        }
    }

    // 10⁵ two-step rollouts pinned at (x, s, u) = (2, 0, 1) histogram the
    // successor draw; chi-square against the kernel row at the 1% level
    // (4 degrees of freedom → critical value 13.277).
    #[test]
    fn successor_histogram_passes_a_chi_square_check() {
        let spec = DensitySpec::Gaussian {
            drift: vec![vec![0.05], vec![-0.05]],
            gain: vec![vec![1.0], vec![1.0]],
            sigma: vec![0.2, 0.25],
            boundary: BoundaryPolicy::Truncate,
        };
        let mut model = model_with(&spec, &ERGODIC, 0.9, point_mass(2, 5));
        // Single action so every step uses the same kernel row.
        model.actions = ActionSet::new(vec![Action {
            label: "up".into(),
            payload: vec![0.1],
        }])
        .unwrap();
        model.kernel = build_kernel(&spec, &model.grid, 2, &model.actions).unwrap();
        model.reward = RewardModel::new(Array2::from_elem((5, 1), 0.5), 1.0).unwrap();

        let n = 100_000usize;
        let init = EpisodeInit {
            window: Some(InfoState::repeated(2, 0, 5).unwrap()),
            mode: Some(0),
        };
        let mut observed = [0usize; 5];
        for stream in 0..n {
            let trace = simulate_episode(
                &model,
                BehaviorPolicy::UniformRandom,
                &init,
                41,
                stream as u64,
                2,
            )
            .unwrap();
            observed[trace.steps[1].x] += 1;
        }
        let row = model.kernel.row(2, 0, 0);
        let mut chi2 = 0.0;
        for (xn, &o) in observed.iter().enumerate() {
            let e = row[xn] * n as f64;
            assert!(e > 5.0, "bin {xn} too thin for the test: {e}");
            chi2 += (o as f64 - e) * (o as f64 - e) / e;
        }
        assert!(chi2 < 13.277, "chi-square {chi2} over the 1% critical value");
    }

    #[test]
    fn exit_time_matches_the_recorded_step_count() {
        let model = model_with(&gaussian(), &ERGODIC, 0.9, vec![0.2; 5]);
        let mut exits = 0;
        for stream in 0..40 {
            let trace = simulate_episode(
                &model,
                BehaviorPolicy::UniformRandom,
                &EpisodeInit::default(),
                17,
                stream,
                200,
            )
            .unwrap();
            if let Some(tau) = trace.tau() {
                // Rewards run through index tau inclusive.
                assert_eq!(tau as usize, trace.steps.len() - 1);
                exits += 1;
            }
            let ret = trace.discounted_return(0.9);
            assert!((0.0..=10.0 + 1e-12).contains(&ret));
        }
        // The exit boundary makes long survival vanishingly unlikely.
        assert!(exits > 30, "only {exits} of 40 episodes exited");
    }
}
