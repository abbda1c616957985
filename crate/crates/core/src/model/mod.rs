//! Model data: grid, actions, transition kernel, mode chain, rewards.
//!
//! A model couples a continuous state x, discretized on a rectangular grid
//! over a box X, with a hidden mode s in {0..S-1}. Per step: x moves by a
//! mode-dependent kernel (with explicit probability of leaving X), s moves
//! by a row-stochastic matrix P(x) evaluated at the current grid point, and
//! a reward in [0, M] accrues for each in-domain step.
//!
//! Constructors enforce structural shape only; numeric invariants (row sums,
//! reward bounds, ...) are checked by [`validate_model`], which reports
//! violations as data so that deliberately broken models can be inspected.

mod config;
mod kernel;

pub use config::ModelConfig;
pub use kernel::{build_kernel, BoundaryPolicy, DensitySpec};

use crate::error::{Error, Result};
use crate::info::Belief;
use ndarray::{Array2, Array3, Array4, ArrayView1, ArrayView2};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Tolerance for probability-conservation checks.
pub const CONSERVATION_TOL: f64 = 1e-12;

/// A uniform rectangular grid over a box, one coordinate per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpace {
    bounds: Vec<(f64, f64)>,
    points_per_axis: usize,
    num_points: usize,
    cell_volume: f64,
}

impl GridSpace {
    pub fn new(bounds: Vec<(f64, f64)>, points_per_axis: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("grid needs at least one axis".into()));
        }
        if points_per_axis < 2 {
            return Err(Error::Config(format!(
                "grid.points_per_axis must be >= 2, got {points_per_axis}"
            )));
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "grid.bounds[{i}]: need finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        let mut num_points: usize = 1;
        for _ in 0..bounds.len() {
            num_points = num_points
                .checked_mul(points_per_axis)
                .ok_or_else(|| Error::Config("grid point count overflows usize".into()))?;
        }
        let cell_volume = bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) / (points_per_axis - 1) as f64)
            .product();
        Ok(GridSpace {
            bounds,
            points_per_axis,
            num_points,
            cell_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Spacing along one axis.
    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.points_per_axis - 1) as f64
    }

    /// Volume of one grid cell (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Per-axis indices of a flat index (row-major, axis 0 slowest).
    pub fn coords(&self, index: usize) -> Vec<usize> {
        assert!(index < self.num_points, "grid index {index} out of range");
        let mut rem = index;
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = rem % self.points_per_axis;
            rem /= self.points_per_axis;
        }
        out
    }

    pub fn index_from_coords(&self, coords: &[usize]) -> usize {
        assert_eq!(coords.len(), self.dim());
        let mut idx = 0;
        for &c in coords {
            assert!(c < self.points_per_axis);
            idx = idx * self.points_per_axis + c;
        }
        idx
    }

    /// Coordinates of a grid point.
    pub fn point(&self, index: usize) -> Vec<f64> {
        self.coords(index)
            .iter()
            .enumerate()
            .map(|(axis, &c)| self.bounds[axis].0 + c as f64 * self.spacing(axis))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// A finite action with a label and a per-axis payload (e.g. a velocity).
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub label: String,
    pub payload: Vec<f64>,
}

/// Ordered action set; indices into it are the `u` everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    actions: Vec<Action>,
}

impl ActionSet {
    pub fn new(actions: Vec<Action>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Config("action set is empty".into()));
        }
        Ok(ActionSet { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, u: usize) -> &Action {
        &self.actions[u]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Action> {
        self.actions.iter()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.actions.iter().map(|a| a.label.as_str()).collect()
    }
}

/// Discretized transition law for x: `probs[x, s, u, x']` is the probability
/// of landing on grid point x', and `exit_mass[x, s, u]` the probability of
/// leaving the box. Conservation: row sum + exit = 1.
#[derive(Clone, Debug)]
pub struct TransitionKernel {
    probs: Array4<f64>,
    exit_mass: Array3<f64>,
}

impl TransitionKernel {
    pub fn new(probs: Array4<f64>, exit_mass: Array3<f64>) -> Result<Self> {
        let (g, s, u, g2) = probs.dim();
        if g != g2 {
            return Err(Error::Shape {
                context: "TransitionKernel".into(),
                expected: format!("({g}, {s}, {u}, {g})"),
                actual: format!("({g}, {s}, {u}, {g2})"),
            });
        }
        if exit_mass.dim() != (g, s, u) {
            return Err(Error::Shape {
                context: "TransitionKernel exit_mass".into(),
                expected: format!("({g}, {s}, {u})"),
                actual: format!("{:?}", exit_mass.dim()),
            });
        }
        Ok(TransitionKernel { probs, exit_mass })
    }

    pub fn num_points(&self) -> usize {
        self.probs.dim().0
    }

    pub fn num_modes(&self) -> usize {
        self.probs.dim().1
    }

    pub fn num_actions(&self) -> usize {
        self.probs.dim().2
    }

    /// Probabilities over destination grid points for one (x, s, u).
    pub fn row(&self, x: usize, s: usize, u: usize) -> ArrayView1<'_, f64> {
        self.probs.slice(ndarray::s![x, s, u, ..])
    }

    pub fn exit(&self, x: usize, s: usize, u: usize) -> f64 {
        self.exit_mass[[x, s, u]]
    }

    /// True when no (x, s, u) can leave the box (up to conservation noise).
    pub fn is_exit_free(&self) -> bool {
        self.exit_mass.iter().all(|&e| e.abs() <= CONSERVATION_TOL)
    }

    pub fn probs(&self) -> &Array4<f64> {
        &self.probs
    }

    pub fn exit_mass(&self) -> &Array3<f64> {
        &self.exit_mass
    }
}

/// Mode transition matrices, one row-stochastic S x S matrix per grid point.
#[derive(Clone, Debug)]
pub struct ChainModel {
    matrices: Array3<f64>,
}

impl ChainModel {
    pub fn new(matrices: Array3<f64>) -> Result<Self> {
        let (_, s, s2) = matrices.dim();
        if s != s2 {
            return Err(Error::Shape {
                context: "ChainModel".into(),
                expected: format!("(G, {s}, {s})"),
                actual: format!("{:?}", matrices.dim()),
            });
        }
        Ok(ChainModel { matrices })
    }

    pub fn num_points(&self) -> usize {
        self.matrices.dim().0
    }

    pub fn num_modes(&self) -> usize {
        self.matrices.dim().1
    }

    /// P(x) for a grid point, rows indexed by the current mode.
    pub fn matrix_at(&self, x: usize) -> Result<ArrayView2<'_, f64>> {
        if x >= self.num_points() {
            return Err(Error::Index {
                context: "ChainModel::matrix_at".into(),
                index: x,
                len: self.num_points(),
            });
        }
        Ok(self.matrices.slice(ndarray::s![x, .., ..]))
    }

    /// True when P(x) is the same matrix at every grid point.
    pub fn is_constant(&self) -> bool {
        let g = self.num_points();
        if g <= 1 {
            return true;
        }
        let first = self.matrices.slice(ndarray::s![0, .., ..]);
        (1..g).all(|x| self.matrices.slice(ndarray::s![x, .., ..]) == first)
    }

    pub fn matrices(&self) -> &Array3<f64> {
        &self.matrices
    }
}

/// Expected one-step reward `values[x, u]`, bounded in [0, bound_m].
#[derive(Clone, Debug)]
pub struct RewardModel {
    values: Array2<f64>,
    bound_m: f64,
}

impl RewardModel {
    pub fn new(values: Array2<f64>, bound_m: f64) -> Result<Self> {
        if !bound_m.is_finite() {
            return Err(Error::Config(format!("reward bound must be finite, got {bound_m}")));
        }
        Ok(RewardModel { values, bound_m })
    }

    pub fn value(&self, x: usize, u: usize) -> f64 {
        self.values[[x, u]]
    }

    /// The upper bound M on one-step rewards.
    pub fn bound(&self) -> f64 {
        self.bound_m
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// The full decision model.
#[derive(Clone, Debug)]
pub struct MdpModel {
    pub grid: GridSpace,
    pub num_modes: usize,
    pub actions: ActionSet,
    pub kernel: TransitionKernel,
    pub chain: ChainModel,
    pub reward: RewardModel,
    pub gamma: f64,
    /// Initial distribution over grid points.
    pub initial_x: Vec<f64>,
    /// Initial distribution over modes.
    pub initial_s: Belief,
}

impl MdpModel {
    pub fn num_points(&self) -> usize {
        self.grid.num_points()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Canonical JSON form of every table in the model. Field order and
    /// float formatting are stable, so the bytes are fit for golden files
    /// and content hashing.
    pub fn canonical_json(&self) -> Value {
        let g = self.num_points();
        let s = self.num_modes;
        let u = self.num_actions();
        json!({
            "schema": "hmdp-model-v1",
            "grid": {
                "dim": self.grid.dim(),
                "lo": self.grid.bounds().iter().map(|b| b.0).collect::<Vec<_>>(),
                "hi": self.grid.bounds().iter().map(|b| b.1).collect::<Vec<_>>(),
                "points_per_axis": self.grid.points_per_axis(),
                "num_points": g,
                "cell_volume": self.grid.cell_volume(),
            },
            "modes": s,
            "actions": self.actions.iter().map(|a| json!({
                "label": a.label,
                "payload": a.payload,
            })).collect::<Vec<_>>(),
            "kernel": {
                "shape": [g, s, u, g],
                "order": "row-major",
                "probs": self.kernel.probs().iter().copied().collect::<Vec<f64>>(),
                "exit_mass": {
                    "shape": [g, s, u],
                    "order": "row-major",
                    "data": self.kernel.exit_mass().iter().copied().collect::<Vec<f64>>(),
                },
            },
            "chain": {
                "shape": [g, s, s],
                "order": "row-major",
                "data": self.chain.matrices().iter().copied().collect::<Vec<f64>>(),
            },
            "reward": {
                "shape": [g, u],
                "order": "row-major",
                "data": self.reward.values().iter().copied().collect::<Vec<f64>>(),
                "bound": self.reward.bound(),
            },
            "gamma": self.gamma,
            "initial": {
                "x": self.initial_x,
                "s": self.initial_s.weights(),
            },
        })
    }

    /// SHA-256 of the canonical JSON bytes; identifies the model in manifests.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical_json()).expect("model json");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One failed invariant: where, what was required, what was found.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Violation {
    pub path: String,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: expected {}, got {}",
            self.path, self.expected, self.actual
        )
    }
}

fn check_simplex(out: &mut Vec<Violation>, path: &str, w: &[f64], tol: f64) {
    let mut sum = 0.0;
    for (i, &v) in w.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            out.push(Violation {
                path: format!("{path}[{i}]"),
                expected: "finite and >= 0".into(),
                actual: format!("{v}"),
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > tol {
        out.push(Violation {
            path: path.into(),
            expected: format!("sum = 1 within {tol:.0e}"),
            actual: format!("sum = {sum:.17}"),
        });
    }
}

/// Checks every numeric invariant of a structurally well-formed model and
/// returns the violations found (empty means valid).
pub fn validate_model(model: &MdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let g = model.num_points();
    let s = model.num_modes;
    let u = model.num_actions();

    if model.grid.cell_volume() <= 0.0 {
        out.push(Violation {
            path: "grid.cell_volume".into(),
            expected: "> 0".into(),
            actual: format!("{}", model.grid.cell_volume()),
        });
    }

    for (i, a) in model.actions.iter().enumerate() {
        if a.payload.len() != model.grid.dim() {
            out.push(Violation {
                path: format!("actions[{i}].payload"),
                expected: format!("len = grid dim ({})", model.grid.dim()),
                actual: format!("len = {}", a.payload.len()),
            });
        }
    }
    for i in 0..u {
        for j in (i + 1)..u {
            if model.actions.get(i).label == model.actions.get(j).label {
                out.push(Violation {
                    path: format!("actions[{j}].label"),
                    expected: "unique label".into(),
                    actual: format!("duplicate of actions[{i}] ({:?})", model.actions.get(i).label),
                });
            }
        }
    }

    if model.kernel.num_points() != g
        || model.kernel.num_modes() != s
        || model.kernel.num_actions() != u
    {
        out.push(Violation {
            path: "kernel".into(),
            expected: format!("shape ({g}, {s}, {u}, {g})"),
            actual: format!("{:?}", model.kernel.probs().dim()),
        });
        return out; // shape is broken; elementwise checks would index out of bounds
    }

    for x in 0..g {
        for m in 0..s {
            for a in 0..u {
                let mut sum = 0.0;
                for (xn, &p) in model.kernel.row(x, m, a).iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        out.push(Violation {
                            path: format!("kernel.probs[{x},{m},{a},{xn}]"),
                            expected: "finite and >= 0".into(),
                            actual: format!("{p}"),
                        });
                    }
                    sum += p;
                }
                let exit = model.kernel.exit(x, m, a);
                if !exit.is_finite() || !(-CONSERVATION_TOL..=1.0 + CONSERVATION_TOL).contains(&exit) {
                    out.push(Violation {
                        path: format!("kernel.exit_mass[{x},{m},{a}]"),
                        expected: "in [0, 1]".into(),
                        actual: format!("{exit}"),
                    });
                }
                if (sum + exit - 1.0).abs() > CONSERVATION_TOL {
                    out.push(Violation {
                        path: format!("kernel[{x},{m},{a}]"),
                        expected: format!("row sum + exit = 1 within {CONSERVATION_TOL:.0e}"),
                        actual: format!("{:.17}", sum + exit),
                    });
                }
            }
        }
    }

    if model.chain.num_points() != g || model.chain.num_modes() != s {
        out.push(Violation {
            path: "chain".into(),
            expected: format!("shape ({g}, {s}, {s})"),
            actual: format!("{:?}", model.chain.matrices().dim()),
        });
        return out;
    }
    for x in 0..g {
        let p = model.chain.matrix_at(x).expect("in range");
        for i in 0..s {
            let mut sum = 0.0;
            for j in 0..s {
                let v = p[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    out.push(Violation {
                        path: format!("chain[{x}].row[{i}][{j}]"),
                        expected: "finite and >= 0".into(),
                        actual: format!("{v}"),
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > CONSERVATION_TOL {
                out.push(Violation {
                    path: format!("chain[{x}].row[{i}]"),
                    expected: format!("row sum = 1 within {CONSERVATION_TOL:.0e}"),
                    actual: format!("sum = {sum:.17}"),
                });
            }
        }
    }

    let m_bound = model.reward.bound();
    if !(m_bound > 0.0) {
        out.push(Violation {
            path: "reward.bound".into(),
            expected: "> 0".into(),
            actual: format!("{m_bound}"),
        });
    }
    if model.reward.values().dim() != (g, u) {
        out.push(Violation {
            path: "reward.values".into(),
            expected: format!("shape ({g}, {u})"),
            actual: format!("{:?}", model.reward.values().dim()),
        });
        return out;
    }
    for x in 0..g {
        for a in 0..u {
            let v = model.reward.value(x, a);
            if !v.is_finite() || v < 0.0 || v > m_bound {
                out.push(Violation {
                    path: format!("reward.values[{x},{a}]"),
                    expected: format!("in [0, {m_bound}]"),
                    actual: format!("{v}"),
                });
            }
        }
    }

    if !(model.gamma >= 0.0 && model.gamma < 1.0) {
        out.push(Violation {
            path: "gamma".into(),
            expected: "in [0, 1)".into(),
            actual: format!("{}", model.gamma),
        });
    }

    if model.initial_x.len() != g {
        out.push(Violation {
            path: "initial.x".into(),
            expected: format!("len = {g}"),
            actual: format!("len = {}", model.initial_x.len()),
        });
    } else {
        check_simplex(&mut out, "initial.x", &model.initial_x, CONSERVATION_TOL);
    }
    if model.initial_s.dim() != s {
        out.push(Violation {
            path: "initial.s".into(),
            expected: format!("len = {s}"),
            actual: format!("len = {}", model.initial_s.dim()),
        });
    } else {
        check_simplex(&mut out, "initial.s", model.initial_s.weights(), CONSERVATION_TOL);
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn grid_indexing_round_trips() {
        let grid = GridSpace::new(vec![(0.0, 1.0), (-1.0, 1.0)], 5).unwrap();
        assert_eq!(grid.dim(), 2);
        assert_eq!(grid.num_points(), 25);
        assert!((grid.spacing(0) - 0.25).abs() < 1e-15);
        assert!((grid.spacing(1) - 0.5).abs() < 1e-15);
        assert!((grid.cell_volume() - 0.125).abs() < 1e-15);
        for idx in 0..grid.num_points() {
            let c = grid.coords(idx);
            assert_eq!(grid.index_from_coords(&c), idx);
            assert!(grid.contains(&grid.point(idx)));
        }
        let p = grid.point(grid.index_from_coords(&[1, 3]));
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_degenerate_axes() {
        assert!(GridSpace::new(vec![(0.0, 0.0)], 5).is_err());
        assert!(GridSpace::new(vec![(0.0, 1.0)], 1).is_err());
        assert!(GridSpace::new(vec![], 5).is_err());
    }

    fn tiny_model() -> MdpModel {
        // 3 points, 2 modes, 1 action, identity dynamics.
        let grid = GridSpace::new(vec![(0.0, 1.0)], 3).unwrap();
        let actions = ActionSet::new(vec![Action {
            label: "stay".into(),
            payload: vec![0.0],
        }])
        .unwrap();
        let kernel = build_kernel(&DensitySpec::Identity, &grid, 2, &actions).unwrap();
        let chain = ChainModel::new(Array::from_shape_fn((3, 2, 2), |(_, i, j)| {
            if i == j {
                0.9
            } else {
                0.1
            }
        }))
        .unwrap();
        let reward = RewardModel::new(Array2::from_elem((3, 1), 0.5), 1.0).unwrap();
        MdpModel {
            grid,
            num_modes: 2,
            actions,
            kernel,
            chain,
            reward,
            gamma: 0.9,
            initial_x: vec![1.0, 0.0, 0.0],
            initial_s: Belief::uniform(2),
        }
    }

    #[test]
    fn valid_model_has_no_violations() {
        assert!(validate_model(&tiny_model()).is_empty());
    }

    #[test]
    fn chain_row_off_by_one_percent_is_one_violation() {
        let mut model = tiny_model();
        let mut m = model.chain.matrices().clone();
        m[[1, 0, 0]] = 0.89; // row now sums to 0.99
        model.chain = ChainModel::new(m).unwrap();
        let violations = validate_model(&model);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].path, "chain[1].row[0]");
    }

    #[test]
    fn reward_above_bound_names_the_entry() {
        let mut model = tiny_model();
        let mut r = model.reward.values().clone();
        r[[2, 0]] = 1.5;
        model.reward = RewardModel::new(r, 1.0).unwrap();
        let violations = validate_model(&model);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].path, "reward.values[2,0]");
    }

    #[test]
    fn gamma_and_initial_checks_fire() {
        let mut model = tiny_model();
        model.gamma = 1.0;
        model.initial_x = vec![0.5, 0.0, 0.0];
        let violations = validate_model(&model);
        let paths: Vec<&str> = violations.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"gamma"));
        assert!(paths.contains(&"initial.x"));
    }

    #[test]
    fn matrix_at_rejects_out_of_range() {
        let model = tiny_model();
        assert!(model.chain.matrix_at(2).is_ok());
        assert!(model.chain.matrix_at(3).is_err());
    }

    #[test]
    fn content_hash_is_stable_and_sensitive()
    {
        let model = tiny_model();
        let h1 = model.content_hash();
        let h2 = model.content_hash();
        assert_eq!(h1, h2);
        let mut other = model.clone();
        other.gamma = 0.8;
        assert_ne!(h1, other.content_hash());
    }
}
