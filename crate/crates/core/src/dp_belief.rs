//! The reference solver on the (x, belief) product space.
//!
//! Beliefs live on the regular simplex lattice with resolution m (all mode
//! distributions with entries in multiples of 1/m). Arbitrary beliefs are
//! written as convex combinations of at most |S| lattice points via
//! barycentric interpolation in cumulative coordinates: the map
//! y_i = m * sum_{j >= i} b_j sends the lattice to the integer staircases
//! m = y_0 >= y_1 >= ... >= y_{|S|-1} >= 0, where the containing simplex of
//! any y is found by sorting its fractional parts. The interpolation is
//! exact on lattice points and reproduces linear functions of b.

use crate::dp_markov::{iterate, IterationTrace, Table};
use crate::error::{Error, Result};
use crate::info::{belief_update, Belief};
use crate::model::MdpModel;
use rayon::prelude::*;
use std::collections::HashMap;

/// Interpolation weights below this are dropped (they multiply nothing
/// representable at f64 scale) and the rest renormalized.
const WEIGHT_CUTOFF: f64 = 1e-14;

/// All beliefs with entries in multiples of 1/resolution, plus an index for
/// interpolation lookups. Point order is lexicographic in the count vectors.
#[derive(Clone, Debug)]
pub struct BeliefGrid {
    num_modes: usize,
    resolution: usize,
    points: Vec<Belief>,
    counts: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl BeliefGrid {
    pub fn new(num_modes: usize, resolution: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::InvalidArgument("belief grid needs >= 1 mode".into()));
        }
        if resolution == 0 {
            return Err(Error::InvalidArgument(
                "belief grid resolution must be >= 1".into(),
            ));
        }
        let mut counts: Vec<Vec<u32>> = Vec::new();
        let mut stack = vec![0u32; num_modes];
        enumerate_counts(resolution as u32, 0, &mut stack, &mut counts);
        let points = counts
            .iter()
            .map(|c| {
                Belief::new(
                    c.iter()
                        .map(|&k| k as f64 / resolution as f64)
                        .collect::<Vec<_>>(),
                )
                .expect("lattice point is a distribution")
            })
            .collect();
        let index = counts
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        Ok(BeliefGrid {
            num_modes,
            resolution,
            points,
            counts,
            index,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Belief {
        &self.points[i]
    }

    pub fn points(&self) -> &[Belief] {
        &self.points
    }

    /// Lattice counts (numerators over the resolution) of point i.
    pub fn counts(&self, i: usize) -> &[u32] {
        &self.counts[i]
    }

    /// Convex weights over lattice points reconstructing `b`, sorted by
    /// point index. At most `num_modes` entries; weights are positive and
    /// sum to one.
    pub fn interpolate(&self, b: &Belief) -> Result<Vec<(usize, f64)>> {
        if b.dim() != self.num_modes {
            return Err(Error::Shape {
                context: "BeliefGrid::interpolate".into(),
                expected: format!("{} modes", self.num_modes),
                actual: format!("{}", b.dim()),
            });
        }
        let n = self.num_modes;
        if n == 1 {
            return Ok(vec![(0, 1.0)]);
        }
        let m = self.resolution as f64;

        // Cumulative coordinates, clamped onto the staircase domain.
        let mut y = vec![0.0; n];
        y[0] = m;
        let mut suffix = 0.0;
        for i in (1..n).rev() {
            suffix += b.weights()[i];
            y[i] = m * suffix;
        }
        for i in 1..n {
            let cap = y[i - 1];
            y[i] = y[i].clamp(0.0, cap);
        }

        let z: Vec<u32> = y.iter().map(|v| v.floor() as u32).collect();
        let d: Vec<f64> = y.iter().zip(&z).map(|(v, &k)| v - k as f64).collect();

        // Fractional indices by descending fraction, ties to lower index;
        // walking them adds one lattice step per vertex.
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap().then(a.cmp(&b)));

        let mut out: Vec<(usize, f64)> = Vec::with_capacity(n);
        let mut v = z.clone();
        let w0 = 1.0 - order.first().map(|&i| d[i]).unwrap_or(0.0);
        self.push_vertex(&mut out, &v, w0);
        for (t, &i) in order.iter().enumerate() {
            v[i] += 1;
            let w = d[i] - order.get(t + 1).map(|&j| d[j]).unwrap_or(0.0);
            self.push_vertex(&mut out, &v, w);
        }

        let total: f64 = out.iter().map(|(_, w)| w).sum();
        debug_assert!((total - 1.0).abs() < 1e-9);
        for e in out.iter_mut() {
            e.1 /= total;
        }
        out.sort_by_key(|e| e.0);
        Ok(out)
    }

    fn push_vertex(&self, out: &mut Vec<(usize, f64)>, staircase: &[u32], weight: f64) {
        if weight <= WEIGHT_CUTOFF {
            return;
        }
        let n = staircase.len();
        let mut counts = Vec::with_capacity(n);
        for i in 0..n {
            let next = if i + 1 < n { staircase[i + 1] } else { 0 };
            debug_assert!(staircase[i] >= next, "staircase out of order");
            counts.push(staircase[i] - next);
        }
        let idx = *self
            .index
            .get(&counts)
            .expect("interpolation vertex lies on the lattice");
        out.push((idx, weight));
    }
}

fn enumerate_counts(remaining: u32, pos: usize, stack: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == stack.len() - 1 {
        stack[pos] = remaining;
        out.push(stack.clone());
        return;
    }
    for k in 0..=remaining {
        stack[pos] = k;
        enumerate_counts(remaining - k, pos + 1, stack, out);
    }
}

/// Action values on (grid point, lattice belief, action), action fastest.
#[derive(Clone, Debug)]
pub struct AugQTable {
    num_grid: usize,
    num_beliefs: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl AugQTable {
    pub fn zeros(num_grid: usize, num_beliefs: usize, num_actions: usize) -> Result<Self> {
        if num_grid == 0 || num_beliefs == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("empty AugQTable axis".into()));
        }
        let required = num_grid as u128 * num_beliefs as u128 * num_actions as u128;
        if required > crate::dp_markov::MAX_TABLE_ELEMENTS {
            return Err(Error::TableTooLarge {
                required,
                limit: crate::dp_markov::MAX_TABLE_ELEMENTS,
            });
        }
        Ok(AugQTable {
            num_grid,
            num_beliefs,
            num_actions,
            values: vec![0.0; required as usize],
        })
    }

    /// Layout matches the accessors: belief index then action fastest.
    pub fn from_values(
        num_grid: usize,
        num_beliefs: usize,
        num_actions: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut table = Self::zeros(num_grid, num_beliefs, num_actions)?;
        if values.len() != table.values.len() {
            return Err(Error::Shape {
                context: "AugQTable::from_values".into(),
                expected: format!("{} entries", table.values.len()),
                actual: format!("{}", values.len()),
            });
        }
        table.values = values;
        Ok(table)
    }

    pub fn num_grid(&self) -> usize {
        self.num_grid
    }

    pub fn num_beliefs(&self) -> usize {
        self.num_beliefs
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, x: usize, b: usize, u: usize) -> f64 {
        self.values[(x * self.num_beliefs + b) * self.num_actions + u]
    }

    #[inline]
    fn set(&mut self, x: usize, b: usize, u: usize, v: f64) {
        self.values[(x * self.num_beliefs + b) * self.num_actions + u] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// min over actions at one (x, lattice belief).
    pub fn min_at(&self, x: usize, b: usize) -> f64 {
        let base = (x * self.num_beliefs + b) * self.num_actions;
        self.values[base..base + self.num_actions]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

impl Table for AugQTable {
    fn data(&self) -> &[f64] {
        &self.values
    }
    fn shape_desc(&self) -> String {
        format!(
            "augq[G={}, B={}, U={}]",
            self.num_grid, self.num_beliefs, self.num_actions
        )
    }
}

fn check_model_table(model: &MdpModel, grid: &BeliefGrid, q: &AugQTable) -> Result<()> {
    if grid.num_modes() != model.num_modes {
        return Err(Error::Shape {
            context: "belief grid".into(),
            expected: format!("{} modes", model.num_modes),
            actual: format!("{}", grid.num_modes()),
        });
    }
    if q.num_grid != model.num_points()
        || q.num_beliefs != grid.len()
        || q.num_actions != model.num_actions()
    {
        return Err(Error::Shape {
            context: "belief_q_backup".into(),
            expected: format!(
                "augq[G={}, B={}, U={}]",
                model.num_points(),
                grid.len(),
                model.num_actions()
            ),
            actual: q.shape_desc(),
        });
    }
    Ok(())
}

/// One sweep of the belief-space backup: for each (x, b, u),
/// reward now plus gamma times the b-mixed expectation over in-grid
/// successors x' of the interpolated min-Q at (x', P(x)^T b). Values of Q
/// at off-lattice successor beliefs are interpolated per action and then
/// minimized.
pub fn belief_q_backup(model: &MdpModel, grid: &BeliefGrid, q: &AugQTable) -> Result<AugQTable> {
    check_model_table(model, grid, q)?;
    for (i, &v) in q.values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "augq[{i}] = {v}; backups take finite nonnegative tables"
            )));
        }
    }
    let g = model.num_points();
    let nb = grid.len();
    let nu = model.num_actions();
    let gamma = model.gamma;

    let rows: Vec<Result<Vec<f64>>> = (0..g * nb)
        .into_par_iter()
        .map(|pair| {
            let x = pair / nb;
            let bi = pair % nb;
            let b = grid.point(bi);
            let b_next = belief_update(b, x, &model.chain)?;
            let omega = grid.interpolate(&b_next)?;

            // Interpolated min-Q at every successor grid point.
            let mut mvals = vec![0.0; g];
            for (xn, slot) in mvals.iter_mut().enumerate() {
                let mut best = f64::INFINITY;
                for u_next in 0..nu {
                    let mut acc = 0.0;
                    for &(v, w) in &omega {
                        acc += w * q.get(xn, v, u_next);
                    }
                    if acc < best {
                        best = acc;
                    }
                }
                *slot = best;
            }

            let bw = b.weights();
            let mut out = vec![0.0; nu];
            for (u, slot) in out.iter_mut().enumerate() {
                let mut exp = 0.0;
                for (si, &ws) in bw.iter().enumerate() {
                    if ws == 0.0 {
                        continue;
                    }
                    let row = model.kernel.row(x, si, u);
                    let mut dot = 0.0;
                    for (p, v) in row.iter().zip(&mvals) {
                        dot += p * v;
                    }
                    exp += ws * dot;
                }
                *slot = model.reward.value(x, u) + gamma * exp;
            }
            Ok(out)
        })
        .collect();

    let mut next = AugQTable::zeros(g, nb, nu)?;
    for (pair, row) in rows.into_iter().enumerate() {
        let row = row?;
        let (x, bi) = (pair / nb, pair % nb);
        for (u, &v) in row.iter().enumerate() {
            next.set(x, bi, u, v);
        }
    }
    Ok(next)
}

#[derive(Clone, Debug)]
pub struct AugQSolution {
    pub q: AugQTable,
    pub trace: IterationTrace,
}

/// Iterates the belief-space backup from zero to its fixed point. Post on
/// convergence: within tol (sup norm) of the unique fixed point.
pub fn belief_q_iteration(
    model: &MdpModel,
    grid: &BeliefGrid,
    tol: f64,
    max_iters: usize,
) -> Result<AugQSolution> {
    let init = AugQTable::zeros(model.num_points(), grid.len(), model.num_actions())?;
    check_model_table(model, grid, &init)?;
    let (q, trace) = iterate(init, model.gamma, tol, max_iters, |q| {
        belief_q_backup(model, grid, q)
    })?;
    Ok(AugQSolution { q, trace })
}

/// The greedy action at an arbitrary (x, belief), read off the solved table
/// by interpolation; ties break to the lowest action index.
pub fn greedy_action_at(
    q: &AugQTable,
    grid: &BeliefGrid,
    x: usize,
    b: &Belief,
) -> Result<usize> {
    if x >= q.num_grid {
        return Err(Error::Index {
            context: "greedy_action_at".into(),
            index: x,
            len: q.num_grid,
        });
    }
    let omega = grid.interpolate(b)?;
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for u in 0..q.num_actions {
        let mut acc = 0.0;
        for &(v, w) in &omega {
            acc += w * q.get(x, v, u);
        }
        if acc < best {
            best = acc;
            arg = u;
        }
    }
    Ok(arg)
}
