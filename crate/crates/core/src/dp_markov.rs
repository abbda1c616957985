//! Dynamic programming over enumerated observation windows.
//!
//! A window with memory L over G grid points is encoded as an integer in
//! base G with the newest observation as the most significant digit, so the
//! table index of a successor window is one multiply and one divide. All
//! sweeps are Jacobi-style (next table computed from the previous one) and
//! parallelize over windows; results are bitwise independent of the thread
//! count because each output cell is written by exactly one task.
//!
//! The hidden mode enters through per-window mixing weights w(I): a sweep
//! mixes the per-mode kernel rows by w(I) at each window. Uniform weights,
//! the stationary distribution of a constant chain, and the open-loop
//! belief composed along the window are provided; anything else can be
//! built with [`MixingWeights::from_fn`].

use crate::error::{Error, Result};
use crate::info::{window_belief, Belief, InfoState};
use crate::model::MdpModel;
use rayon::prelude::*;

/// Hard ceiling on table allocations (elements, not bytes).
pub const MAX_TABLE_ELEMENTS: u128 = 1 << 28;

/// The set of all windows with a fixed memory over a fixed grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InfoSpace {
    num_grid: usize,
    memory: usize,
    count: usize,
    stride: usize, // num_grid^memory
}

impl InfoSpace {
    /// Fails before any allocation when G^(L+1) exceeds the table ceiling,
    /// reporting the exact required element count.
    pub fn new(num_grid: usize, memory: usize) -> Result<Self> {
        if num_grid == 0 {
            return Err(Error::InvalidArgument("grid has no points".into()));
        }
        let required = (num_grid as u128)
            .checked_pow(memory as u32 + 1)
            .ok_or(Error::TableTooLarge {
                required: u128::MAX,
                limit: MAX_TABLE_ELEMENTS,
            })?;
        if required > MAX_TABLE_ELEMENTS {
            return Err(Error::TableTooLarge {
                required,
                limit: MAX_TABLE_ELEMENTS,
            });
        }
        let count = required as usize;
        let stride = count / num_grid;
        Ok(InfoSpace {
            num_grid,
            memory,
            count,
            stride,
        })
    }

    pub fn num_grid(&self) -> usize {
        self.num_grid
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Number of windows, G^(L+1).
    pub fn count(&self) -> usize {
        self.count
    }

    /// Index of the window reached from `index` when `x_new` is observed.
    #[inline]
    pub fn successor(&self, index: usize, x_new: usize) -> usize {
        debug_assert!(index < self.count && x_new < self.num_grid);
        x_new * self.stride + index / self.num_grid
    }

    /// The newest observation of a window, without materializing it.
    #[inline]
    pub fn newest(&self, index: usize) -> usize {
        index / self.stride
    }

    pub fn state(&self, index: usize) -> InfoState {
        assert!(index < self.count, "window index {index} out of range");
        let mut window = vec![0usize; self.memory + 1];
        let mut rem = index;
        let mut p = self.stride;
        for w in window.iter_mut() {
            *w = rem / p;
            rem %= p;
            p = (p / self.num_grid).max(1);
        }
        InfoState::new(window, self.num_grid).expect("digits are in range")
    }

    pub fn index_of(&self, info: &InfoState) -> Result<usize> {
        if info.memory() != self.memory {
            return Err(Error::Shape {
                context: "InfoSpace::index_of".into(),
                expected: format!("memory {}", self.memory),
                actual: format!("memory {}", info.memory()),
            });
        }
        let mut idx = 0usize;
        for &x in info.window() {
            if x >= self.num_grid {
                return Err(Error::Index {
                    context: "InfoSpace::index_of".into(),
                    index: x,
                    len: self.num_grid,
                });
            }
            idx = idx * self.num_grid + x;
        }
        Ok(idx)
    }
}

fn check_alloc(elements: u128) -> Result<usize> {
    if elements > MAX_TABLE_ELEMENTS {
        return Err(Error::TableTooLarge {
            required: elements,
            limit: MAX_TABLE_ELEMENTS,
        });
    }
    Ok(elements as usize)
}

/// Anything that is a flat f64 table with a comparable shape.
pub trait Table {
    fn data(&self) -> &[f64];
    fn shape_desc(&self) -> String;
}

/// Sup-norm distance between two tables of identical shape.
pub fn sup_distance<T: Table>(a: &T, b: &T) -> Result<f64> {
    let (da, db) = (a.data(), b.data());
    if a.shape_desc() != b.shape_desc() || da.len() != db.len() {
        return Err(Error::Shape {
            context: "sup_distance".into(),
            expected: a.shape_desc(),
            actual: b.shape_desc(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in da.iter().zip(db) {
        let d = (x - y).abs();
        if !d.is_finite() {
            return Err(Error::InvalidArgument(
                "sup_distance over non-finite entries".into(),
            ));
        }
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

/// State values indexed by window.
#[derive(Clone, Debug)]
pub struct ValueTable {
    space: InfoSpace,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(space: InfoSpace) -> Result<Self> {
        let n = check_alloc(space.count as u128)?;
        Ok(ValueTable {
            space,
            values: vec![0.0; n],
        })
    }

    pub fn from_values(space: InfoSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.count {
            return Err(Error::Shape {
                context: "ValueTable::from_values".into(),
                expected: format!("{} entries", space.count),
                actual: format!("{}", values.len()),
            });
        }
        Ok(ValueTable { space, values })
    }

    pub fn space(&self) -> InfoSpace {
        self.space
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Table for ValueTable {
    fn data(&self) -> &[f64] {
        &self.values
    }
    fn shape_desc(&self) -> String {
        format!("values[G={}, L={}]", self.space.num_grid, self.space.memory)
    }
}

/// Action values indexed by (window, action), action fastest.
#[derive(Clone, Debug)]
pub struct QTable {
    space: InfoSpace,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    /// Wraps a sweep's output; callers guarantee `values` came from a sweep
    /// over `space` with `num_actions` columns.
    pub(crate) fn from_sweep(space: InfoSpace, num_actions: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), space.count * num_actions);
        QTable {
            space,
            num_actions,
            values,
        }
    }

    pub fn zeros(space: InfoSpace, num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidArgument("QTable with no actions".into()));
        }
        let n = check_alloc(space.count as u128 * num_actions as u128)?;
        Ok(QTable {
            space,
            num_actions,
            values: vec![0.0; n],
        })
    }

    /// Action-fastest layout, like the accessors.
    pub fn from_values(space: InfoSpace, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidArgument("QTable with no actions".into()));
        }
        if values.len() != space.count * num_actions {
            return Err(Error::Shape {
                context: "QTable::from_values".into(),
                expected: format!("{} entries", space.count * num_actions),
                actual: format!("{}", values.len()),
            });
        }
        Ok(QTable {
            space,
            num_actions,
            values,
        })
    }

    pub fn space(&self) -> InfoSpace {
        self.space
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, index: usize, u: usize) -> f64 {
        self.values[index * self.num_actions + u]
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.values[index * self.num_actions..(index + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// min over actions, per window.
    pub fn min_values(&self) -> ValueTable {
        let values: Vec<f64> = (0..self.space.count)
            .map(|i| self.row(i).iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        ValueTable {
            space: self.space,
            values,
        }
    }
}

impl Table for QTable {
    fn data(&self) -> &[f64] {
        &self.values
    }
    fn shape_desc(&self) -> String {
        format!(
            "q[G={}, L={}, U={}]",
            self.space.num_grid, self.space.memory, self.num_actions
        )
    }
}

/// A deterministic policy: one action index per window.
#[derive(Clone, Debug)]
pub struct Policy {
    space: InfoSpace,
    num_actions: usize,
    choice: Vec<usize>,
}

impl Policy {
    pub fn new(space: InfoSpace, num_actions: usize, choice: Vec<usize>) -> Result<Self> {
        if choice.len() != space.count {
            return Err(Error::Shape {
                context: "Policy::new".into(),
                expected: format!("{} entries", space.count),
                actual: format!("{}", choice.len()),
            });
        }
        if let Some((i, &u)) = choice.iter().enumerate().find(|(_, &u)| u >= num_actions) {
            return Err(Error::Index {
                context: format!("Policy choice[{i}]"),
                index: u,
                len: num_actions,
            });
        }
        Ok(Policy {
            space,
            num_actions,
            choice,
        })
    }

    pub fn space(&self) -> InfoSpace {
        self.space
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn action(&self, index: usize) -> usize {
        self.choice[index]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }
}

/// Per-window mode distributions w(I) used to mix kernel rows in sweeps.
#[derive(Clone, Debug)]
pub struct MixingWeights {
    space: InfoSpace,
    num_modes: usize,
    weights: Vec<f64>, // (window, mode), mode fastest
}

impl MixingWeights {
    pub fn uniform(space: InfoSpace, num_modes: usize) -> Result<Self> {
        let n = check_alloc(space.count as u128 * num_modes as u128)?;
        Ok(MixingWeights {
            space,
            num_modes,
            weights: vec![1.0 / num_modes as f64; n],
        })
    }

    /// The stationary distribution of a constant chain, at every window.
    /// Power iteration on P^T; chains with no unique limit fail honestly.
    pub fn stationary(space: InfoSpace, chain: &crate::model::ChainModel) -> Result<Self> {
        if !chain.is_constant() {
            return Err(Error::InvalidArgument(
                "stationary mixing weights need a constant chain".into(),
            ));
        }
        let p = chain.matrix_at(0)?;
        let s = chain.num_modes();
        let mut v = vec![1.0 / s as f64; s];
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..10_000 {
            let mut next = vec![0.0; s];
            for j in 0..s {
                let mut acc = 0.0;
                for i in 0..s {
                    acc += p[[i, j]] * v[i];
                }
                next[j] = acc;
            }
            residual = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            v = next;
            if residual <= 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConverged {
                iterations: 10_000,
                residual,
            });
        }
        Self::from_fn(space, s, |_| Belief::from_raw(v.clone()))
    }

    /// The open-loop belief composed along each window from a fixed prior
    /// at the window's oldest entry.
    pub fn composed(
        space: InfoSpace,
        chain: &crate::model::ChainModel,
        prior: &Belief,
    ) -> Result<Self> {
        if chain.num_points() != space.num_grid {
            return Err(Error::Shape {
                context: "MixingWeights::composed".into(),
                expected: format!("chain over {} points", space.num_grid),
                actual: format!("{}", chain.num_points()),
            });
        }
        let s = chain.num_modes();
        let n = check_alloc(space.count as u128 * s as u128)?;
        let mut weights = vec![0.0; n];
        let rows: Vec<Result<Vec<f64>>> = (0..space.count)
            .into_par_iter()
            .map(|i| {
                let info = space.state(i);
                Ok(window_belief(&info, prior, chain)?.weights().to_vec())
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            weights[i * s..(i + 1) * s].copy_from_slice(&row?);
        }
        Ok(MixingWeights {
            space,
            num_modes: s,
            weights,
        })
    }

    pub fn from_fn(
        space: InfoSpace,
        num_modes: usize,
        f: impl Fn(&InfoState) -> Belief,
    ) -> Result<Self> {
        let n = check_alloc(space.count as u128 * num_modes as u128)?;
        let mut weights = vec![0.0; n];
        for i in 0..space.count {
            let b = f(&space.state(i));
            if b.dim() != num_modes {
                return Err(Error::Shape {
                    context: "MixingWeights::from_fn".into(),
                    expected: format!("{num_modes} modes"),
                    actual: format!("{}", b.dim()),
                });
            }
            weights[i * num_modes..(i + 1) * num_modes].copy_from_slice(b.weights());
        }
        Ok(MixingWeights {
            space,
            num_modes,
            weights,
        })
    }

    pub fn space(&self) -> InfoSpace {
        self.space
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.weights[index * self.num_modes..(index + 1) * self.num_modes]
    }
}

/// Successors of one window under one action, mixed over modes by w(I).
#[derive(Clone, Debug)]
pub struct SuccessorDistribution {
    pub successors: Vec<(InfoState, f64)>,
    pub exit: f64,
}

pub fn info_successor_distribution(
    model: &MdpModel,
    w: &MixingWeights,
    info: &InfoState,
    u: usize,
) -> Result<SuccessorDistribution> {
    check_model_weights(model, w)?;
    if u >= model.num_actions() {
        return Err(Error::Index {
            context: "info_successor_distribution action".into(),
            index: u,
            len: model.num_actions(),
        });
    }
    let space = w.space;
    let i = space.index_of(info)?;
    let mix = w.row(i);
    let x0 = info.newest();
    let g = space.num_grid;

    let mut exit = 0.0;
    for (s, &ws) in mix.iter().enumerate() {
        exit += ws * model.kernel.exit(x0, s, u);
    }
    let mut successors = Vec::new();
    for xn in 0..g {
        let mut p = 0.0;
        for (s, &ws) in mix.iter().enumerate() {
            p += ws * model.kernel.row(x0, s, u)[xn];
        }
        if p > 0.0 {
            successors.push((info.push_observation(xn, g)?, p));
        }
    }
    Ok(SuccessorDistribution { successors, exit })
}

pub(crate) fn check_model_space(model: &MdpModel, space: InfoSpace) -> Result<()> {
    if model.num_points() != space.num_grid {
        return Err(Error::Shape {
            context: "model vs window space".into(),
            expected: format!("{} grid points", model.num_points()),
            actual: format!("{}", space.num_grid),
        });
    }
    Ok(())
}

fn check_model_weights(model: &MdpModel, w: &MixingWeights) -> Result<()> {
    check_model_space(model, w.space)?;
    if w.num_modes != model.num_modes {
        return Err(Error::Shape {
            context: "mixing weights".into(),
            expected: format!("{} modes", model.num_modes),
            actual: format!("{}", w.num_modes),
        });
    }
    Ok(())
}

pub(crate) fn check_backup_input(data: &[f64], what: &str) -> Result<()> {
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{what}[{i}] = {v}; backups take finite nonnegative tables"
            )));
        }
    }
    Ok(())
}

/// Successor values for window `i`: out[x'] = values[successor(i, x')].
#[inline]
fn gather(space: &InfoSpace, i: usize, values: &[f64], out: &mut [f64]) {
    let tail = i / space.num_grid;
    for (xn, slot) in out.iter_mut().enumerate() {
        *slot = values[xn * space.stride + tail];
    }
}

/// Backed-up value of (window, action): expected reward now plus gamma times
/// the mode-mixed expectation of `jv` over in-grid successors. Exit mass
/// contributes nothing.
#[inline]
fn backup_action(model: &MdpModel, x0: usize, mix: &[f64], jv: &[f64], u: usize) -> f64 {
    let mut exp = 0.0;
    for (s, &ws) in mix.iter().enumerate() {
        if ws == 0.0 {
            continue;
        }
        let row = model.kernel.row(x0, s, u);
        let mut dot = 0.0;
        for (p, v) in row.iter().zip(jv) {
            dot += p * v;
        }
        exp += ws * dot;
    }
    model.reward.value(x0, u) + model.gamma * exp
}

pub(crate) enum MixSource<'a> {
    PerWindow(&'a MixingWeights),
    Fixed(&'a [f64]),
}

impl<'a> MixSource<'a> {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        match self {
            MixSource::PerWindow(w) => w.row(i),
            MixSource::Fixed(b) => b,
        }
    }
}

/// One full Q sweep: out(I, u) for all windows and actions, with successor
/// values taken from `succ` (a per-window table).
pub(crate) fn q_sweep(
    model: &MdpModel,
    space: InfoSpace,
    mix: &MixSource<'_>,
    succ: &[f64],
) -> Vec<f64> {
    let g = space.num_grid;
    let nu = model.num_actions();
    let rows: Vec<Vec<f64>> = (0..space.count)
        .into_par_iter()
        .map_init(
            || vec![0.0; g],
            |jv, i| {
                gather(&space, i, succ, jv);
                let x0 = space.newest(i);
                let mix_row = mix.row(i);
                let mut out = Vec::with_capacity(nu);
                for u in 0..nu {
                    out.push(backup_action(model, x0, mix_row, jv, u));
                }
                out
            },
        )
        .collect();
    let mut values = Vec::with_capacity(space.count * nu);
    for row in rows {
        values.extend_from_slice(&row);
    }
    values
}

/// One optimality sweep: out(I) = min over u of the backed-up value.
pub fn bellman_optimality(
    model: &MdpModel,
    w: &MixingWeights,
    j: &ValueTable,
) -> Result<ValueTable> {
    check_model_weights(model, w)?;
    check_model_space(model, j.space)?;
    if w.space != j.space {
        return Err(Error::Shape {
            context: "bellman_optimality".into(),
            expected: w.shape_hint(),
            actual: j.shape_desc(),
        });
    }
    check_backup_input(&j.values, "value table")?;
    let space = j.space;
    let g = space.num_grid;
    let nu = model.num_actions();
    let values: Vec<f64> = (0..space.count)
        .into_par_iter()
        .map_init(
            || vec![0.0; g],
            |jv, i| {
                gather(&space, i, &j.values, jv);
                let x0 = space.newest(i);
                let mix_row = w.row(i);
                let mut best = f64::INFINITY;
                for u in 0..nu {
                    let v = backup_action(model, x0, mix_row, jv, u);
                    if v < best {
                        best = v;
                    }
                }
                best
            },
        )
        .collect();
    Ok(ValueTable { space, values })
}

/// One policy sweep: out(I) = backed-up value of the policy's action.
pub fn bellman_policy(
    model: &MdpModel,
    w: &MixingWeights,
    policy: &Policy,
    j: &ValueTable,
) -> Result<ValueTable> {
    check_model_weights(model, w)?;
    check_model_space(model, j.space)?;
    if w.space != j.space || policy.space != j.space {
        return Err(Error::Shape {
            context: "bellman_policy".into(),
            expected: j.shape_desc(),
            actual: "mismatched window spaces".into(),
        });
    }
    if policy.num_actions != model.num_actions() {
        return Err(Error::Shape {
            context: "bellman_policy".into(),
            expected: format!("{} actions", model.num_actions()),
            actual: format!("{}", policy.num_actions),
        });
    }
    check_backup_input(&j.values, "value table")?;
    let space = j.space;
    let g = space.num_grid;
    let values: Vec<f64> = (0..space.count)
        .into_par_iter()
        .map_init(
            || vec![0.0; g],
            |jv, i| {
                gather(&space, i, &j.values, jv);
                backup_action(model, space.newest(i), w.row(i), jv, policy.action(i))
            },
        )
        .collect();
    Ok(ValueTable { space, values })
}

/// One Q sweep: out(I, u) backs up min over u' of q at the successor.
pub fn bellman_q(model: &MdpModel, w: &MixingWeights, q: &QTable) -> Result<QTable> {
    check_model_weights(model, w)?;
    check_model_space(model, q.space)?;
    if w.space != q.space || q.num_actions != model.num_actions() {
        return Err(Error::Shape {
            context: "bellman_q".into(),
            expected: format!(
                "q over the weight space with {} actions",
                model.num_actions()
            ),
            actual: q.shape_desc(),
        });
    }
    check_backup_input(&q.values, "q table")?;
    let space = q.space;
    let minq = q.min_values();
    let values = q_sweep(model, space, &MixSource::PerWindow(w), &minq.values);
    Ok(QTable {
        space,
        num_actions: q.num_actions,
        values,
    })
}

impl MixingWeights {
    fn shape_hint(&self) -> String {
        format!(
            "weights[G={}, L={}, S={}]",
            self.space.num_grid, self.space.memory, self.num_modes
        )
    }
}

/// Convergence record of an iterative solve. `residuals[k]` is the sup
/// distance between sweeps k and k+1.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IterationTrace {
    pub residuals: Vec<f64>,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

#[derive(Clone, Debug)]
pub struct ValueSolution {
    pub values: ValueTable,
    pub trace: IterationTrace,
}

#[derive(Clone, Debug)]
pub struct QSolution {
    pub q: QTable,
    pub trace: IterationTrace,
}

/// Residual threshold certifying sup distance <= tol from the fixed point:
/// a gamma-contraction with residual r has error at most r * gamma/(1-gamma),
/// so stop at r <= tol * (1-gamma)/gamma. gamma = 0 converges in one sweep.
pub fn certified_residual_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma > 0.0 {
        tol * (1.0 - gamma) / gamma
    } else {
        f64::INFINITY
    }
}

pub(crate) fn iterate<T: Table>(
    mut cur: T,
    gamma: f64,
    tol: f64,
    max_iters: usize,
    mut step: impl FnMut(&T) -> Result<T>,
) -> Result<(T, IterationTrace)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let threshold = certified_residual_threshold(gamma, tol);
    let mut residuals = Vec::new();
    for _ in 0..max_iters {
        let next = step(&cur)?;
        let r = sup_distance(&next, &cur)?;
        residuals.push(r);
        cur = next;
        if r <= threshold {
            return Ok((
                cur,
                IterationTrace {
                    residuals,
                    converged: true,
                },
            ));
        }
    }
    Ok((
        cur,
        IterationTrace {
            residuals,
            converged: false,
        },
    ))
}

/// Value iteration from zero. Post on convergence: the result is within tol
/// (sup norm) of the unique fixed point.
pub fn value_iteration(
    model: &MdpModel,
    w: &MixingWeights,
    tol: f64,
    max_iters: usize,
) -> Result<ValueSolution> {
    check_model_weights(model, w)?;
    let init = ValueTable::zeros(w.space)?;
    let (values, trace) = iterate(init, model.gamma, tol, max_iters, |j| {
        bellman_optimality(model, w, j)
    })?;
    Ok(ValueSolution { values, trace })
}

/// Q-value iteration from zero; same certificate as value iteration.
pub fn q_value_iteration(
    model: &MdpModel,
    w: &MixingWeights,
    tol: f64,
    max_iters: usize,
) -> Result<QSolution> {
    check_model_weights(model, w)?;
    let init = QTable::zeros(w.space, model.num_actions())?;
    let (q, trace) = iterate(init, model.gamma, tol, max_iters, |q| bellman_q(model, w, q))?;
    Ok(QSolution { q, trace })
}

/// Evaluates a fixed policy by iterating its sweep from zero.
pub fn policy_evaluation(
    model: &MdpModel,
    w: &MixingWeights,
    policy: &Policy,
    tol: f64,
    max_iters: usize,
) -> Result<ValueSolution> {
    check_model_weights(model, w)?;
    let init = ValueTable::zeros(w.space)?;
    let (values, trace) = iterate(init, model.gamma, tol, max_iters, |j| {
        bellman_policy(model, w, policy, j)
    })?;
    Ok(ValueSolution { values, trace })
}

/// Greedy policy from a value table: one backup per (window, action), then
/// argmin with ties to the lowest action index.
pub fn greedy_policy_from_values(
    model: &MdpModel,
    w: &MixingWeights,
    j: &ValueTable,
) -> Result<Policy> {
    check_model_weights(model, w)?;
    check_model_space(model, j.space)?;
    if w.space != j.space {
        return Err(Error::Shape {
            context: "greedy_policy_from_values".into(),
            expected: w.shape_hint(),
            actual: j.shape_desc(),
        });
    }
    check_backup_input(&j.values, "value table")?;
    let space = j.space;
    let g = space.num_grid;
    let nu = model.num_actions();
    let choice: Vec<usize> = (0..space.count)
        .into_par_iter()
        .map_init(
            || vec![0.0; g],
            |jv, i| {
                gather(&space, i, &j.values, jv);
                let x0 = space.newest(i);
                let mix_row = w.row(i);
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for u in 0..nu {
                    let v = backup_action(model, x0, mix_row, jv, u);
                    if v < best {
                        best = v;
                        arg = u;
                    }
                }
                arg
            },
        )
        .collect();
    Policy::new(space, nu, choice)
}

/// Greedy policy straight from a Q table; needs no model evaluation.
pub fn greedy_policy_from_q(q: &QTable) -> Policy {
    let choice: Vec<usize> = (0..q.space.count)
        .map(|i| {
            let row = q.row(i);
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (u, &v) in row.iter().enumerate() {
                if v < best {
                    best = v;
                    arg = u;
                }
            }
            arg
        })
        .collect();
    Policy {
        space: q.space,
        num_actions: q.num_actions,
        choice,
    }
}
