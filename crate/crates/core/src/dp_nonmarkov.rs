//! Sweeps driven by a realized belief path, the window-mixing Lipschitz
//! constant, and the suboptimality bound assembled from both.
//!
//! A simulated episode induces a belief path b(0), b(1), …; sweeping the
//! window-indexed Q table with the mixing weights frozen at b(k) on sweep k
//! produces a sequence Q_k that need not converge, but stays within a
//! computable envelope of the belief-augmented fixed point. This module
//! builds that sequence, estimates the envelope's Lipschitz coefficient,
//! and checks the two against each other.

use ndarray::Array2;
use rayon::prelude::*;

use crate::dp_belief::{AugQTable, BeliefGrid};
use crate::dp_markov::{check_backup_input, check_model_space, InfoSpace, MixSource, QTable};
use crate::error::{Error, Result};
use crate::info::{window_belief, Belief};
use crate::model::{ChainModel, MdpModel};
use crate::rng::Philox;

/// Exact window enumeration is refused beyond this many windows.
pub const MAX_EXACT_WINDOWS: u128 = 1_000_000;

/// Exact direction enumeration is refused beyond this many modes.
pub const MAX_EXACT_MODES: usize = 4;

/// A realized belief path b(0), b(1), …, recorded from one episode under a
/// fixed behavior policy.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BeliefTrajectory {
    beliefs: Vec<Belief>,
    source: String,
}

impl BeliefTrajectory {
    /// `source` names the episode/policy the path was recorded from.
    pub fn new(beliefs: Vec<Belief>, source: impl Into<String>) -> Result<Self> {
        let first = beliefs
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty belief trajectory".into()))?;
        let dim = first.dim();
        for (k, b) in beliefs.iter().enumerate() {
            if b.dim() != dim {
                return Err(Error::Shape {
                    context: format!("belief trajectory entry {k}"),
                    expected: format!("{dim} modes"),
                    actual: format!("{}", b.dim()),
                });
            }
        }
        Ok(BeliefTrajectory {
            beliefs,
            source: source.into(),
        })
    }

    /// Constant path b(k) ≡ b; the sweep sequence then converges.
    pub fn constant(b: Belief, len: usize, source: impl Into<String>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("empty belief trajectory".into()));
        }
        Ok(BeliefTrajectory {
            beliefs: vec![b; len],
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn belief(&self, k: usize) -> &Belief {
        &self.beliefs[k]
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// One Q sweep with the mode mix frozen at `mix` for every window, instead
/// of a per-window weight table.
pub fn q_backup_with_belief(model: &MdpModel, mix: &Belief, q: &QTable) -> Result<QTable> {
    check_model_space(model, q.space())?;
    if mix.dim() != model.num_modes {
        return Err(Error::Shape {
            context: "q_backup_with_belief".into(),
            expected: format!("{} modes", model.num_modes),
            actual: format!("{}", mix.dim()),
        });
    }
    if q.num_actions() != model.num_actions() {
        return Err(Error::Shape {
            context: "q_backup_with_belief".into(),
            expected: format!("{} actions", model.num_actions()),
            actual: format!("{}", q.num_actions()),
        });
    }
    check_backup_input(q.values(), "q table")?;
    let minq = q.min_values();
    let values = crate::dp_markov::q_sweep(
        model,
        q.space(),
        &MixSource::Fixed(mix.weights()),
        minq.values(),
    );
    Ok(QTable::from_sweep(q.space(), q.num_actions(), values))
}

/// The sweep sequence Q_0 ≡ 0, Q_{k+1} = (backup with b(k)) Q_k, for
/// k < `sweeps`. Returns all `sweeps + 1` tables, oldest first. The path
/// must supply a belief for every sweep.
pub fn nonmarkov_q_sequence(
    model: &MdpModel,
    memory: usize,
    traj: &BeliefTrajectory,
    sweeps: usize,
) -> Result<Vec<QTable>> {
    if traj.len() < sweeps {
        return Err(Error::TrajectoryTooShort {
            have: traj.len(),
            need: sweeps,
        });
    }
    let space = InfoSpace::new(model.num_points(), memory)?;
    let mut seq = Vec::with_capacity(sweeps + 1);
    seq.push(QTable::zeros(space, model.num_actions())?);
    for k in 0..sweeps {
        let next = q_backup_with_belief(model, traj.belief(k), seq.last().unwrap())?;
        seq.push(next);
    }
    Ok(seq)
}

/// How a Lipschitz estimate explores the window space.
#[derive(Clone, Copy, Debug)]
pub enum LipschitzMode {
    /// Enumerate every window; refused above [`MAX_EXACT_WINDOWS`] windows
    /// or [`MAX_EXACT_MODES`] modes. A constant chain needs only a single
    /// window and skips the window gate.
    Exact,
    /// Draw `windows` windows uniformly at random; lower-bounds the sup
    /// over windows.
    Sampled { windows: usize, seed: u64 },
}

/// Estimated Lipschitz coefficient of the window-mixed belief as a function
/// of the prior, in the ∞-norm, uniform over windows.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub memory: usize,
    /// Enumeration descriptor, e.g. `exact(windows=441)`.
    pub method: String,
    pub is_exact: bool,
}

/// Largest ∞-norm gain of `a` over zero-sum directions: the maximum of
/// ‖a·d‖_∞ over {d : Σd = 0, ‖d‖_∞ ≤ 1}. Per output row the maximum puts
/// +1 on the k largest coefficients and −1 on the k smallest for the best
/// split size k, so sorted prefix sums solve it exactly.
fn zero_sum_gain(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    let mut best = 0.0f64;
    let mut row = vec![0.0f64; n];
    for r in a.rows() {
        for (dst, src) in row.iter_mut().zip(r.iter()) {
            *dst = *src;
        }
        row.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let mut gain = 0.0;
        for k in 1..=n / 2 {
            gain += row[k - 1] - row[n - k];
            if gain > best {
                best = gain;
            }
        }
    }
    best
}

/// Composed transition of the prior along one window, newest entry applied
/// last: P(x(0))ᵀ ⋯ P(x(−L))ᵀ.
fn window_matrix(chain: &ChainModel, window: &[usize]) -> Result<Array2<f64>> {
    let n = chain.num_modes();
    let mut acc = Array2::<f64>::eye(n);
    for &x in window.iter().rev() {
        acc = chain.matrix_at(x)?.t().dot(&acc);
    }
    Ok(acc)
}

/// Estimates the Lipschitz coefficient of the window-mixed belief for
/// windows of the given memory (window length `memory + 1`).
pub fn estimate_lipschitz(
    model: &MdpModel,
    memory: usize,
    mode: LipschitzMode,
) -> Result<LipschitzEstimate> {
    let chain = &model.chain;
    let g = model.num_points();
    match mode {
        LipschitzMode::Exact => {
            if model.num_modes > MAX_EXACT_MODES {
                return Err(Error::EnumerationGate(format!(
                    "exact direction enumeration supports at most {MAX_EXACT_MODES} modes, \
                     model has {}; use sampled mode",
                    model.num_modes
                )));
            }
            if chain.is_constant() {
                // Every window composes the same matrix.
                let value = zero_sum_gain(&window_matrix(chain, &vec![0; memory + 1])?);
                return Ok(LipschitzEstimate {
                    value,
                    memory,
                    method: "exact(constant-chain)".into(),
                    is_exact: true,
                });
            }
            let windows = (g as u128)
                .checked_pow(memory as u32 + 1)
                .filter(|&w| w <= MAX_EXACT_WINDOWS)
                .ok_or_else(|| {
                    Error::EnumerationGate(format!(
                        "exact mode enumerates {g}^{} windows, over the {MAX_EXACT_WINDOWS} \
                         ceiling; use sampled mode",
                        memory + 1
                    ))
                })?;
            let space = InfoSpace::new(g, memory)?;
            let gains = (0..space.count())
                .into_par_iter()
                .map(|i| window_matrix(chain, space.state(i).window()).map(|m| zero_sum_gain(&m)))
                .collect::<Result<Vec<f64>>>()?;
            let value = gains.into_iter().fold(0.0, f64::max);
            Ok(LipschitzEstimate {
                value,
                memory,
                method: format!("exact(windows={windows})"),
                is_exact: true,
            })
        }
        LipschitzMode::Sampled { windows, seed } => {
            if windows == 0 {
                return Err(Error::InvalidArgument(
                    "sampled mode needs at least one window".into(),
                ));
            }
            let mut rng = Philox::new(seed, 0);
            let drawn: Vec<Vec<usize>> = (0..windows)
                .map(|_| (0..=memory).map(|_| rng.next_index(g)).collect())
                .collect();
            let gains = drawn
                .par_iter()
                .map(|w| window_matrix(chain, w).map(|m| zero_sum_gain(&m)))
                .collect::<Result<Vec<f64>>>()?;
            let value = gains.into_iter().fold(0.0, f64::max);
            Ok(LipschitzEstimate {
                value,
                memory,
                method: format!("sampled(windows={windows}, seed={seed})"),
                is_exact: false,
            })
        }
    }
}

/// Worst-case gap between the k-th realized-path sweep and the
/// belief-augmented fixed point: γ(1−γᵏ)·m·|S|²·l/(1−γ)² + γᵏ·m/(1−γ).
/// `k = None` gives the k → ∞ limit γ·m·|S|²·l/(1−γ)².
pub fn suboptimality_bound(
    bound_m: f64,
    gamma: f64,
    num_modes: usize,
    l_star: f64,
    k: Option<u64>,
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    if !bound_m.is_finite() || bound_m < 0.0 || !l_star.is_finite() || l_star < 0.0 {
        return Err(Error::InvalidArgument(
            "reward bound and Lipschitz value must be finite and nonnegative".into(),
        ));
    }
    let s2 = (num_modes * num_modes) as f64;
    let limit = gamma * bound_m * s2 * l_star / ((1.0 - gamma) * (1.0 - gamma));
    Ok(match k {
        None => limit,
        Some(k) => {
            let gk = if k <= i32::MAX as u64 {
                gamma.powi(k as i32)
            } else {
                gamma.powf(k as f64)
            };
            (1.0 - gk) * limit + gk * bound_m / (1.0 - gamma)
        }
    })
}

/// Where a sup-error was attained: the window (newest first), the action,
/// and the prior belief it was probed with.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SupWitness {
    pub window: Vec<usize>,
    pub action: usize,
    pub belief: Vec<f64>,
}

/// Largest pointwise gap found between a window table and the interpolated
/// belief-augmented table, with the lattice-cell oscillation at the witness.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SupError {
    pub value: f64,
    /// Spread (max − min) of the reference table over the interpolation
    /// support at the witness; the honest allowance for lattice error.
    pub slack: f64,
    pub witness: SupWitness,
}

/// Measures sup over (window, action, prior) of |q(window, action) −
/// reference(x(0), mixed belief, action)|, probing priors from
/// `belief_samples` and evaluating the reference by simplex interpolation.
pub fn measure_sup_error(
    q: &QTable,
    reference: &AugQTable,
    bgrid: &BeliefGrid,
    model: &MdpModel,
    belief_samples: &[Belief],
) -> Result<SupError> {
    check_model_space(model, q.space())?;
    let nu = model.num_actions();
    if q.num_actions() != nu || reference.num_actions() != nu {
        return Err(Error::Shape {
            context: "measure_sup_error".into(),
            expected: format!("{nu} actions"),
            actual: format!("{} vs {}", q.num_actions(), reference.num_actions()),
        });
    }
    if reference.num_grid() != model.num_points() || reference.num_beliefs() != bgrid.len() {
        return Err(Error::Shape {
            context: "measure_sup_error".into(),
            expected: format!(
                "reference table [{} x {} x {nu}]",
                model.num_points(),
                bgrid.len()
            ),
            actual: format!(
                "[{} x {} x {}]",
                reference.num_grid(),
                reference.num_beliefs(),
                reference.num_actions()
            ),
        });
    }
    if bgrid.num_modes() != model.num_modes {
        return Err(Error::Shape {
            context: "measure_sup_error".into(),
            expected: format!("{} modes", model.num_modes),
            actual: format!("{}", bgrid.num_modes()),
        });
    }
    if belief_samples.is_empty() {
        return Err(Error::InvalidArgument("no belief samples".into()));
    }
    let space = q.space();

    // Per-window maxima in parallel; the argmax scan stays sequential so
    // ties break on the lowest (window, sample, action) triple.
    let per_window = (0..space.count())
        .into_par_iter()
        .map(|i| -> Result<(f64, usize, usize)> {
            let info = space.state(i);
            let x0 = space.newest(i);
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for (bi, prior) in belief_samples.iter().enumerate() {
                let mixed = window_belief(&info, prior, &model.chain)?;
                let support = bgrid.interpolate(&mixed)?;
                for u in 0..nu {
                    let interp: f64 = support
                        .iter()
                        .map(|&(v, w)| w * reference.get(x0, v, u))
                        .sum();
                    let diff = (q.get(i, u) - interp).abs();
                    if diff > best.0 {
                        best = (diff, bi, u);
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut value = f64::NEG_INFINITY;
    let mut at = (0usize, 0usize, 0usize); // (window, sample, action)
    for (i, &(d, bi, u)) in per_window.iter().enumerate() {
        if d > value {
            value = d;
            at = (i, bi, u);
        }
    }

    let (wi, bi, u) = at;
    let info = space.state(wi);
    let mixed = window_belief(&info, &belief_samples[bi], &model.chain)?;
    let support = bgrid.interpolate(&mixed)?;
    let x0 = space.newest(wi);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(v, _) in &support {
        let val = reference.get(x0, v, u);
        lo = lo.min(val);
        hi = hi.max(val);
    }
    Ok(SupError {
        value,
        slack: hi - lo,
        witness: SupWitness {
            window: info.window().to_vec(),
            action: u,
            belief: belief_samples[bi].weights().to_vec(),
        },
    })
}

/// One row of the per-sweep bound check.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundRow {
    pub k: usize,
    pub sup_error: f64,
    pub bound: f64,
    pub slack: f64,
    pub satisfied: bool,
    pub witness: SupWitness,
}

/// Per-sweep comparison of measured sup-errors against the suboptimality
/// bound, plus the k → ∞ limit.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub limit_bound: f64,
    pub lipschitz: LipschitzEstimate,
    /// The bound's hypotheses require episodes that never exit; a report
    /// over an exiting kernel is recorded but out of scope.
    pub exit_free: bool,
}

impl BoundReport {
    pub fn all_satisfied(&self) -> bool {
        self.rows.iter().all(|r| r.satisfied)
    }
}

/// Checks every table of a realized-path sweep sequence against the bound
/// at its sweep index. `q_seq[k]` is compared with bound(k).
pub fn bound_report(
    model: &MdpModel,
    q_seq: &[QTable],
    reference: &AugQTable,
    bgrid: &BeliefGrid,
    lipschitz: &LipschitzEstimate,
    belief_samples: &[Belief],
) -> Result<BoundReport> {
    if q_seq.is_empty() {
        return Err(Error::InvalidArgument("empty sweep sequence".into()));
    }
    let m = model.reward.bound();
    let mut rows = Vec::with_capacity(q_seq.len());
    for (k, q) in q_seq.iter().enumerate() {
        let sup = measure_sup_error(q, reference, bgrid, model, belief_samples)?;
        let bound = suboptimality_bound(
            m,
            model.gamma,
            model.num_modes,
            lipschitz.value,
            Some(k as u64),
        )?;
        rows.push(BoundRow {
            k,
            sup_error: sup.value,
            bound,
            slack: sup.slack,
            satisfied: sup.value <= bound + sup.slack,
            witness: sup.witness,
        });
    }
    let limit_bound =
        suboptimality_bound(m, model.gamma, model.num_modes, lipschitz.value, None)?;
    Ok(BoundReport {
        rows,
        limit_bound,
        lipschitz: lipschitz.clone(),
        exit_free: model.kernel.is_exit_free(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_belief::belief_q_iteration;
    use crate::dp_markov::{q_value_iteration, sup_distance, MixingWeights};
    use crate::model::{
        build_kernel, Action, ActionSet, ChainModel, DensitySpec, GridSpace, MdpModel, RewardModel,
    };
    use ndarray::{Array2, Array3};

    fn chain_from(rows: &[[f64; 2]; 2], g: usize) -> ChainModel {
        ChainModel::new(Array3::from_shape_fn((g, 2, 2), |(_, i, j)| rows[i][j])).unwrap()
    }

    fn toy_model(gamma: f64, rows: &[[f64; 2]; 2]) -> MdpModel {
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
        let kernel = build_kernel(
            &DensitySpec::Gaussian {
                drift: vec![vec![0.05], vec![-0.05]],
                gain: vec![vec![1.0], vec![1.0]],
                sigma: vec![0.2, 0.25],
                boundary: crate::model::BoundaryPolicy::Exit,
            },
            &grid,
            2,
            &actions,
        )
        .unwrap();
        let chain = chain_from(rows, g);
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
            initial_x: vec![0.2; g],
            initial_s: Belief::uniform(2),
        }
    }

    const ERGODIC: [[f64; 2]; 2] = [[0.9, 0.1], [0.2, 0.8]];

    #[test]
    fn backup_of_zeros_returns_rewards() {
        let model = toy_model(0.9, &ERGODIC);
        let space = InfoSpace::new(5, 1).unwrap();
        let q0 = QTable::zeros(space, 2).unwrap();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        let q1 = q_backup_with_belief(&model, &b, &q0).unwrap();
        for i in 0..space.count() {
            let x0 = space.newest(i);
            for u in 0..2 {
                assert!((q1.get(i, u) - model.reward.value(x0, u)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vertex_belief_uses_a_single_mode() {
        let model = toy_model(0.9, &ERGODIC);
        let space = InfoSpace::new(5, 0).unwrap();
        let mut q = QTable::zeros(space, 2).unwrap();
        // Seed with one plain sweep so the successor term is nonzero.
        q = q_backup_with_belief(&model, &Belief::uniform(2), &q).unwrap();

        let vertex = Belief::vertex(1, 2).unwrap();
        let got = q_backup_with_belief(&model, &vertex, &q).unwrap();

        // Same sweep through the per-window path with constant weights.
        let w = MixingWeights::from_fn(space, 2, |_| Belief::vertex(1, 2).unwrap()).unwrap();
        let via_weights = crate::dp_markov::bellman_q(&model, &w, &q).unwrap();
        assert_eq!(sup_distance(&got, &via_weights).unwrap(), 0.0);

        // And directly: only mode-1 kernel rows contribute.
        let minq = q.min_values();
        for x0 in 0..5 {
            for u in 0..2 {
                let row = model.kernel.row(x0, 1, u);
                let exp: f64 = (0..5).map(|xn| row[xn] * minq.get(xn)).sum();
                let want = model.reward.value(x0, u) + model.gamma * exp;
                assert!((got.get(x0, u) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mixed_belief_backup_matches_enumeration_oracle() {
        let model = toy_model(0.9, &ERGODIC);
        let space = InfoSpace::new(5, 1).unwrap();
        let mut q = QTable::zeros(space, 2).unwrap();
        q = q_backup_with_belief(&model, &Belief::uniform(2), &q).unwrap();
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        let got = q_backup_with_belief(&model, &b, &q).unwrap();

        // Oracle: direct nested-loop expansion of the mixed backup.
        for i in 0..space.count() {
            let info = space.state(i);
            let x0 = info.newest();
            for u in 0..2 {
                let mut exp = 0.0;
                for (s, &bs) in b.weights().iter().enumerate() {
                    let row = model.kernel.row(x0, s, u);
                    for xn in 0..5 {
                        let succ = info.push_observation(xn, 5).unwrap();
                        let si = space.index_of(&succ).unwrap();
                        let best = (0..2).map(|v| q.get(si, v)).fold(f64::INFINITY, f64::min);
                        exp += bs * row[xn] * best;
                    }
                }
                let want = model.reward.value(x0, u) + model.gamma * exp;
                assert!((got.get(i, u) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn sequence_starts_at_zero_and_first_sweep_is_reward() {
        let model = toy_model(0.9, &ERGODIC);
        let traj =
            BeliefTrajectory::constant(Belief::new(vec![0.6, 0.4]).unwrap(), 3, "test").unwrap();
        let seq = nonmarkov_q_sequence(&model, 1, &traj, 1).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq[0].values().iter().all(|&v| v == 0.0));
        let space = seq[1].space();
        for i in 0..space.count() {
            for u in 0..2 {
                let want = model.reward.value(space.newest(i), u);
                assert!((seq[1].get(i, u) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn short_trajectory_is_rejected_with_the_required_length() {
        let model = toy_model(0.9, &ERGODIC);
        let traj = BeliefTrajectory::constant(Belief::uniform(2), 4, "test").unwrap();
        match nonmarkov_q_sequence(&model, 0, &traj, 9) {
            Err(Error::TrajectoryTooShort { have, need }) => {
                assert_eq!((have, need), (4, 9));
            }
            other => panic!("expected TrajectoryTooShort, got {other:?}"),
        }
    }

    #[test]
    fn constant_path_converges_to_the_fixed_belief_fixed_point() {
        let model = toy_model(0.5, &ERGODIC);
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        let traj = BeliefTrajectory::constant(b.clone(), 64, "test").unwrap();
        let seq = nonmarkov_q_sequence(&model, 1, &traj, 64).unwrap();

        // Same operator through the per-window solver: weights ≡ b.
        let space = seq[0].space();
        let w = MixingWeights::from_fn(space, 2, |_| b.clone()).unwrap();
        let sol = q_value_iteration(&model, &w, 1e-13, 10_000).unwrap();
        assert!(sol.trace.converged);
        // 0.5^64 · M/(1 − γ) ≈ 1e-19.
        assert!(sup_distance(seq.last().unwrap(), &sol.q).unwrap() < 1e-12);
    }

    #[test]
    fn identity_chain_has_unit_lipschitz_value() {
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = chain_from(&[[1.0, 0.0], [0.0, 1.0]], 5);
        for memory in [0usize, 2] {
            let est = estimate_lipschitz(&model, memory, LipschitzMode::Exact).unwrap();
            assert!(est.is_exact);
            assert!((est.value - 1.0).abs() < 1e-15, "memory {memory}");
        }
    }

    #[test]
    fn identical_row_chain_has_zero_lipschitz_value() {
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = chain_from(&[[0.7, 0.3], [0.7, 0.3]], 5);
        for memory in [0usize, 1] {
            let est = estimate_lipschitz(&model, memory, LipschitzMode::Exact).unwrap();
            assert!(est.is_exact);
            assert_eq!(est.value, 0.0, "memory {memory}");
        }
    }

    // For a constant two-mode chain the zero-sum plane is one-dimensional
    // and each factor scales it by |1 − p01 − p10|, so the window value is
    // that factor to the (memory + 1)-th power.
    #[test]
    fn constant_two_mode_chain_matches_the_eigenvalue_power() {
        let model = toy_model(0.9, &ERGODIC);
        let lambda: f64 = 0.7;
        let mut last = f64::INFINITY;
        for memory in 0..=8 {
            let est = estimate_lipschitz(&model, memory, LipschitzMode::Exact).unwrap();
            let want = lambda.powi(memory as i32 + 1);
            assert!(
                (est.value - want).abs() < 1e-12,
                "memory {memory}: {} vs {want}",
                est.value
            );
            assert!(est.value < last);
            last = est.value;
            assert_eq!(est.method, "exact(constant-chain)");
        }
    }

    fn varied_chain(g: usize) -> ChainModel {
        // Point-dependent rows; mixes toward uniform faster at high x.
        ChainModel::new(Array3::from_shape_fn((g, 2, 2), |(x, i, j)| {
            let t = x as f64 / (g - 1) as f64;
            let rows = [
                [0.95 - 0.3 * t, 0.05 + 0.3 * t],
                [0.1 + 0.2 * t, 0.9 - 0.2 * t],
            ];
            rows[i][j]
        }))
        .unwrap()
    }

    #[test]
    fn sampled_estimates_lower_bound_the_exact_value() {
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = varied_chain(5);
        let exact = estimate_lipschitz(&model, 2, LipschitzMode::Exact).unwrap();
        assert!(exact.is_exact);
        for seed in [1u64, 7, 99] {
            let sampled = estimate_lipschitz(
                &model,
                2,
                LipschitzMode::Sampled {
                    windows: 200,
                    seed,
                },
            )
            .unwrap();
            assert!(!sampled.is_exact);
            assert!(sampled.value <= exact.value + 1e-15);
        }
        // Same seed, same estimate.
        let a = estimate_lipschitz(&model, 2, LipschitzMode::Sampled { windows: 50, seed: 3 })
            .unwrap();
        let b = estimate_lipschitz(&model, 2, LipschitzMode::Sampled { windows: 50, seed: 3 })
            .unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn window_value_is_submultiplicative_in_the_factors() {
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = varied_chain(5);
        let l0 = estimate_lipschitz(&model, 0, LipschitzMode::Exact).unwrap().value;
        for memory in 1..=3 {
            let l = estimate_lipschitz(&model, memory, LipschitzMode::Exact).unwrap().value;
            assert!(l <= l0.powi(memory as i32 + 1) + 1e-12, "memory {memory}");
        }
    }

    // Zero-sum directions can be stretched beyond 1 in the ∞-norm once
    // several modes collapse onto the same successor.
    #[test]
    fn four_mode_collapse_stretches_directions_beyond_one() {
        let g = 3;
        let grid = GridSpace::new(vec![(0.0, 1.0)], g).unwrap();
        let actions = ActionSet::new(vec![Action {
            label: "hold".into(),
            payload: vec![0.0],
        }])
        .unwrap();
        let kernel = build_kernel(&DensitySpec::Identity, &grid, 4, &actions).unwrap();
        let rows = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ];
        let chain =
            ChainModel::new(Array3::from_shape_fn((g, 4, 4), |(_, i, j)| rows[i][j])).unwrap();
        let reward = RewardModel::new(Array2::zeros((g, 1)), 1.0).unwrap();
        let model = MdpModel {
            grid,
            num_modes: 4,
            actions,
            kernel,
            chain,
            reward,
            gamma: 0.9,
            initial_x: vec![0.0; g],
            initial_s: Belief::uniform(4),
        };
        let est = estimate_lipschitz(&model, 0, LipschitzMode::Exact).unwrap();
        assert!((est.value - 2.0).abs() < 1e-15);
    }

    // Dense sampling of simplex pairs can only find ratios at or below the
    // enumerated value. Any zero-sum direction splits as d⁺ − d⁻ with equal
    // mass c, so b = d⁺/c and b′ = d⁻/c realize it as a simplex pair.
    #[test]
    fn pairwise_sampling_oracle_never_exceeds_the_exact_value() {
        let g = 5;
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = ChainModel::new(Array3::from_shape_fn((g, 3, 3), |(x, i, j)| {
            let t = x as f64 / (g - 1) as f64;
            let rows = [
                [0.8 - 0.2 * t, 0.1 + 0.2 * t, 0.1],
                [0.05, 0.9, 0.05],
                [0.3, 0.2 + 0.1 * t, 0.5 - 0.1 * t],
            ];
            rows[i][j]
        }))
        .unwrap();
        model.num_modes = 3;
        let memory = 1;
        let exact = estimate_lipschitz(&model, memory, LipschitzMode::Exact).unwrap();

        let space = InfoSpace::new(g, memory).unwrap();
        let mut rng = Philox::new(11, 0);
        let mut oracle = 0.0f64;
        for _ in 0..2000 {
            let i = rng.next_index(space.count());
            let info = space.state(i);
            let mut d: Vec<f64> = (0..3).map(|_| rng.next_f64() - 0.5).collect();
            let mean = d.iter().sum::<f64>() / 3.0;
            for v in d.iter_mut() {
                *v -= mean;
            }
            let c: f64 = d.iter().map(|v| v.max(0.0)).sum();
            if c < 1e-9 {
                continue;
            }
            let bp = Belief::new(d.iter().map(|v| v.max(0.0) / c).collect()).unwrap();
            let bm = Belief::new(d.iter().map(|v| (-v).max(0.0) / c).collect()).unwrap();
            let fp = window_belief(&info, &bp, &model.chain).unwrap();
            let fm = window_belief(&info, &bm, &model.chain).unwrap();
            let num = fp
                .weights()
                .iter()
                .zip(fm.weights())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let den = d.iter().map(|v| v.abs() / c).fold(0.0, f64::max);
            oracle = oracle.max(num / den);
        }
        assert!(oracle > 0.0);
        assert!(oracle <= exact.value + 1e-12);
    }

    #[test]
    fn enumeration_gates_reject_oversized_problems() {
        // Five modes: direction enumeration is refused outright.
        let g = 3;
        let grid = GridSpace::new(vec![(0.0, 1.0)], g).unwrap();
        let actions = ActionSet::new(vec![Action {
            label: "hold".into(),
            payload: vec![0.0],
        }])
        .unwrap();
        let kernel = build_kernel(&DensitySpec::Identity, &grid, 5, &actions).unwrap();
        let chain = ChainModel::new(Array3::from_shape_fn((g, 5, 5), |_| 0.2)).unwrap();
        let reward = RewardModel::new(Array2::zeros((g, 1)), 1.0).unwrap();
        let model = MdpModel {
            grid,
            num_modes: 5,
            actions,
            kernel,
            chain,
            reward,
            gamma: 0.9,
            initial_x: vec![0.0; g],
            initial_s: Belief::uniform(5),
        };
        assert!(matches!(
            estimate_lipschitz(&model, 0, LipschitzMode::Exact),
            Err(Error::EnumerationGate(_))
        ));

        // Non-constant chain with too many windows: 21^6 > 10^6.
        let g = 21;
        let grid = GridSpace::new(vec![(0.0, 1.0)], g).unwrap();
        let actions = ActionSet::new(vec![Action {
            label: "hold".into(),
            payload: vec![0.0],
        }])
        .unwrap();
        let kernel = build_kernel(&DensitySpec::Identity, &grid, 2, &actions).unwrap();
        let reward = RewardModel::new(Array2::zeros((g, 1)), 1.0).unwrap();
        let model = MdpModel {
            grid,
            num_modes: 2,
            actions,
            kernel,
            chain: varied_chain(g),
            reward,
            gamma: 0.9,
            initial_x: vec![0.0; g],
            initial_s: Belief::uniform(2),
        };
        assert!(matches!(
            estimate_lipschitz(&model, 5, LipschitzMode::Exact),
            Err(Error::EnumerationGate(_))
        ));
        // A constant chain at the same size sidesteps the window gate.
        let mut constant = model;
        constant.chain = chain_from(&ERGODIC, g);
        let est = estimate_lipschitz(&constant, 5, LipschitzMode::Exact).unwrap();
        assert!(est.is_exact);

        // Sampled mode needs samples.
        assert!(matches!(
            estimate_lipschitz(
                &constant,
                0,
                LipschitzMode::Sampled { windows: 0, seed: 1 }
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bound_formula_matches_hand_evaluations() {
        // k = 0 leaves only the tail term.
        let b0 = suboptimality_bound(1.0, 0.9, 2, 0.1, Some(0)).unwrap();
        assert!((b0 - 10.0).abs() < 1e-12);
        // Limit: γ·M·|S|²·l/(1−γ)² = 0.9·4·0.1/0.01.
        let lim = suboptimality_bound(1.0, 0.9, 2, 0.1, None).unwrap();
        assert!((lim - 36.0).abs() < 1e-9);
        // Zero Lipschitz value: the limit vanishes.
        assert_eq!(suboptimality_bound(1.0, 0.9, 2, 0.0, None).unwrap(), 0.0);
        // Large k approaches the limit.
        let far = suboptimality_bound(1.0, 0.9, 2, 0.1, Some(2000)).unwrap();
        assert!((far - lim).abs() < 1e-9);
        assert!(suboptimality_bound(1.0, 1.0, 2, 0.1, Some(1)).is_err());
        assert!(suboptimality_bound(-1.0, 0.9, 2, 0.1, Some(1)).is_err());
    }

    fn lattice_samples(bgrid: &BeliefGrid) -> Vec<Belief> {
        bgrid.points().to_vec()
    }

    #[test]
    fn zero_table_sup_error_stays_under_the_reward_tail() {
        let model = toy_model(0.9, &ERGODIC);
        let bgrid = BeliefGrid::new(2, 10).unwrap();
        let sol = belief_q_iteration(&model, &bgrid, 1e-10, 10_000).unwrap();
        let space = InfoSpace::new(5, 1).unwrap();
        let q0 = QTable::zeros(space, 2).unwrap();
        let sup =
            measure_sup_error(&q0, &sol.q, &bgrid, &model, &lattice_samples(&bgrid)).unwrap();
        // |0 − Q̂| = Q̂ ≤ M/(1 − γ); interpolation cannot escape the hull.
        assert!(sup.value > 0.0);
        assert!(sup.value <= 1.0 / (1.0 - 0.9) + 1e-9);
        assert!(sup.slack >= 0.0);
    }

    #[test]
    fn identical_row_chain_self_comparison_is_within_slack() {
        let mut model = toy_model(0.9, &ERGODIC);
        model.chain = chain_from(&[[0.7, 0.3], [0.7, 0.3]], 5);
        let bgrid = BeliefGrid::new(2, 10).unwrap();
        let sol = belief_q_iteration(&model, &bgrid, 1e-12, 10_000).unwrap();

        // Every window mixes to the same belief μ = (0.7, 0.3); copy the
        // reference at μ into a window table and compare it against itself.
        let mu = Belief::new(vec![0.7, 0.3]).unwrap();
        let support = bgrid.interpolate(&mu).unwrap();
        let space = InfoSpace::new(5, 1).unwrap();
        let mut values = vec![0.0; space.count() * 2];
        for i in 0..space.count() {
            let x0 = space.newest(i);
            for u in 0..2 {
                values[i * 2 + u] = support
                    .iter()
                    .map(|&(v, w)| w * sol.q.get(x0, v, u))
                    .sum();
            }
        }
        let q = QTable::from_sweep(space, 2, values);
        let sup = measure_sup_error(&q, &sol.q, &bgrid, &model, &lattice_samples(&bgrid)).unwrap();
        assert!(sup.value <= sup.slack + 1e-12);
    }

    #[test]
    fn bound_report_covers_a_constant_path_run() {
        // Fast-mixing chain so the limit term undercuts the k = 0 tail, and
        // its stationary point (0.5, 0.5) makes the constant path a genuine
        // realization. Zero-exit kernel keeps the check in scope.
        let mut model = toy_model(0.9, &[[0.55, 0.45], [0.45, 0.55]]);
        model.kernel = build_kernel(
            &DensitySpec::Gaussian {
                drift: vec![vec![0.05], vec![-0.05]],
                gain: vec![vec![1.0], vec![1.0]],
                sigma: vec![0.2, 0.25],
                boundary: crate::model::BoundaryPolicy::Truncate,
            },
            &model.grid,
            2,
            &model.actions,
        )
        .unwrap();
        let bgrid = BeliefGrid::new(2, 20).unwrap();
        let sol = belief_q_iteration(&model, &bgrid, 1e-10, 10_000).unwrap();
        let lip = estimate_lipschitz(&model, 1, LipschitzMode::Exact).unwrap();
        assert!((lip.value - 0.01).abs() < 1e-12);

        let traj = BeliefTrajectory::constant(Belief::uniform(2), 12, "test").unwrap();
        let seq = nonmarkov_q_sequence(&model, 1, &traj, 12).unwrap();
        let report =
            bound_report(&model, &seq, &sol.q, &bgrid, &lip, &lattice_samples(&bgrid)).unwrap();

        assert_eq!(report.rows.len(), 13);
        assert!(report.exit_free);
        assert!(report.all_satisfied(), "rows: {:#?}", report.rows);
        // Rows decay from the k = 0 tail toward the limit term.
        assert!((report.rows[0].bound - 10.0).abs() < 1e-12);
        assert!((report.limit_bound - 3.6).abs() < 1e-9);
        assert!(report.limit_bound < report.rows[0].bound);
        let last = report.rows.last().unwrap();
        assert!(last.bound < report.rows[0].bound);

        // The exiting kernel variant is flagged out of scope.
        let exiting = toy_model(0.9, &ERGODIC);
        let seq0 = nonmarkov_q_sequence(&exiting, 1, &traj, 2).unwrap();
        let sol0 = belief_q_iteration(&exiting, &bgrid, 1e-10, 10_000).unwrap();
        let report0 =
            bound_report(&exiting, &seq0, &sol0.q, &bgrid, &lip, &lattice_samples(&bgrid))
                .unwrap();
        assert!(!report0.exit_free);
    }
}
