//! TOML model configuration.
//!
//! ```toml
//! [grid]
//! lo = [0.0]
//! hi = [1.0]
//! points_per_axis = 21
//!
//! [modes]
//! count = 2
//!
//! [[actions]]
//! label = "down"
//! payload = [-0.2]
//!
//! [[actions]]
//! label = "up"
//! payload = [0.2]
//!
//! [dynamics]
//! kind = "gaussian"            # identity | uniform | gaussian
//! sigma = [0.1, 0.1]           # per mode
//! drift = [[0.0], [0.0]]       # per mode, per axis (default 0)
//! gain = [[1.0], [1.0]]        # per mode, per axis (default 1)
//! boundary = "exit"            # exit | truncate
//!
//! [chain]
//! kind = "constant"            # constant | identical_rows | interpolated
//! matrix = [[0.9, 0.1], [0.2, 0.8]]
//!
//! [reward]
//! kind = "bump"                # constant | bump | table
//! center = [[0.3], [0.7]]      # per action
//! width = 0.2
//! amplitude = [1.0, 1.0]       # per action
//! bound = 1.0
//!
//! [gamma]
//! value = 0.9
//!
//! [initial]
//! x = "uniform"                # "uniform" | point index | explicit weights
//! s = [0.5, 0.5]               # "uniform" | explicit weights
//! ```

use super::kernel::{build_kernel, BoundaryPolicy, DensitySpec};
use super::{Action, ActionSet, ChainModel, GridSpace, MdpModel, RewardModel};
use crate::error::{Error, Result};
use crate::info::Belief;
use ndarray::{Array2, Array3};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    grid: GridSection,
    modes: ModesSection,
    actions: Vec<ActionSection>,
    dynamics: DynamicsSection,
    chain: ChainSection,
    reward: RewardSection,
    gamma: GammaSection,
    initial: InitialSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    lo: Vec<f64>,
    hi: Vec<f64>,
    points_per_axis: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModesSection {
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSection {
    label: String,
    payload: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    kind: String,
    sigma: Option<Vec<f64>>,
    drift: Option<Vec<Vec<f64>>>,
    gain: Option<Vec<Vec<f64>>>,
    boundary: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSection {
    kind: String,
    matrix: Option<Vec<Vec<f64>>>,
    row: Option<Vec<f64>>,
    at_lo: Option<Vec<Vec<f64>>>,
    at_hi: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardSection {
    kind: String,
    value: Option<f64>,
    center: Option<Vec<Vec<f64>>>,
    width: Option<f64>,
    amplitude: Option<Vec<f64>>,
    values: Option<Vec<Vec<f64>>>,
    bound: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaSection {
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    x: InitialDist,
    s: InitialDist,
}

/// "uniform", a single point index, or explicit weights.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InitialDist {
    Named(String),
    Point(usize),
    Weights(Vec<f64>),
}

impl InitialDist {
    fn resolve(&self, len: usize, path: &str) -> Result<Vec<f64>> {
        match self {
            InitialDist::Named(name) if name == "uniform" => {
                Ok(vec![1.0 / len as f64; len])
            }
            InitialDist::Named(other) => Err(Error::Config(format!(
                "{path}: unknown distribution {other:?} (only \"uniform\" is named)"
            ))),
            InitialDist::Point(i) => {
                if *i >= len {
                    return Err(Error::Config(format!(
                        "{path}: point index {i} out of range (len {len})"
                    )));
                }
                let mut w = vec![0.0; len];
                w[*i] = 1.0;
                Ok(w)
            }
            InitialDist::Weights(w) => {
                if w.len() != len {
                    return Err(Error::Config(format!(
                        "{path}: expected {len} weights, got {}",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
        }
    }
}

fn square_matrix(m: &[Vec<f64>], s: usize, path: &str) -> Result<()> {
    if m.len() != s || m.iter().any(|r| r.len() != s) {
        return Err(Error::Config(format!(
            "{path}: expected a {s}x{s} matrix"
        )));
    }
    Ok(())
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Assembles the full model; structural errors carry the field path.
    pub fn build(&self) -> Result<MdpModel> {
        if self.grid.lo.len() != self.grid.hi.len() {
            return Err(Error::Config(format!(
                "grid: lo has {} axes, hi has {}",
                self.grid.lo.len(),
                self.grid.hi.len()
            )));
        }
        let bounds: Vec<(f64, f64)> = self
            .grid
            .lo
            .iter()
            .zip(&self.grid.hi)
            .map(|(&lo, &hi)| (lo, hi))
            .collect();
        let grid = GridSpace::new(bounds, self.grid.points_per_axis)?;
        let dim = grid.dim();
        let g = grid.num_points();

        let s = self.modes.count;
        if s == 0 {
            return Err(Error::Config("modes.count must be >= 1".into()));
        }

        let actions = ActionSet::new(
            self.actions
                .iter()
                .map(|a| Action {
                    label: a.label.clone(),
                    payload: a.payload.clone(),
                })
                .collect(),
        )?;
        for (i, a) in actions.iter().enumerate() {
            if a.payload.len() != dim {
                return Err(Error::Config(format!(
                    "actions[{i}].payload: expected {dim} entries, got {}",
                    a.payload.len()
                )));
            }
        }

        let density = match self.dynamics.kind.as_str() {
            "identity" => DensitySpec::Identity,
            "uniform" => DensitySpec::Uniform,
            "gaussian" => {
                let sigma = self
                    .dynamics
                    .sigma
                    .clone()
                    .ok_or_else(|| Error::Config("dynamics.sigma is required for kind = \"gaussian\"".into()))?;
                let drift = self
                    .dynamics
                    .drift
                    .clone()
                    .unwrap_or_else(|| vec![vec![0.0; dim]; s]);
                let gain = self
                    .dynamics
                    .gain
                    .clone()
                    .unwrap_or_else(|| vec![vec![1.0; dim]; s]);
                let boundary = match self.dynamics.boundary.as_deref() {
                    None | Some("exit") => BoundaryPolicy::Exit,
                    Some("truncate") => BoundaryPolicy::Truncate,
                    Some(other) => {
                        return Err(Error::Config(format!(
                            "dynamics.boundary: expected \"exit\" or \"truncate\", got {other:?}"
                        )))
                    }
                };
                DensitySpec::Gaussian {
                    drift,
                    gain,
                    sigma,
                    boundary,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "dynamics.kind: expected identity | uniform | gaussian, got {other:?}"
                )))
            }
        };
        let kernel = build_kernel(&density, &grid, s, &actions)?;

        let chain = match self.chain.kind.as_str() {
            "constant" => {
                let m = self
                    .chain
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::Config("chain.matrix is required for kind = \"constant\"".into()))?;
                square_matrix(m, s, "chain.matrix")?;
                ChainModel::new(Array3::from_shape_fn((g, s, s), |(_, i, j)| m[i][j]))?
            }
            "identical_rows" => {
                let row = self
                    .chain
                    .row
                    .as_ref()
                    .ok_or_else(|| Error::Config("chain.row is required for kind = \"identical_rows\"".into()))?;
                if row.len() != s {
                    return Err(Error::Config(format!(
                        "chain.row: expected {s} entries, got {}",
                        row.len()
                    )));
                }
                ChainModel::new(Array3::from_shape_fn((g, s, s), |(_, _, j)| row[j]))?
            }
            "interpolated" => {
                let a = self
                    .chain
                    .at_lo
                    .as_ref()
                    .ok_or_else(|| Error::Config("chain.at_lo is required for kind = \"interpolated\"".into()))?;
                let b = self
                    .chain
                    .at_hi
                    .as_ref()
                    .ok_or_else(|| Error::Config("chain.at_hi is required for kind = \"interpolated\"".into()))?;
                square_matrix(a, s, "chain.at_lo")?;
                square_matrix(b, s, "chain.at_hi")?;
                // Blend by the mean normalized coordinate of the grid point.
                let mut m = Array3::zeros((g, s, s));
                for x in 0..g {
                    let p = grid.point(x);
                    let t: f64 = p
                        .iter()
                        .enumerate()
                        .map(|(axis, &v)| {
                            let (lo, hi) = grid.bounds()[axis];
                            (v - lo) / (hi - lo)
                        })
                        .sum::<f64>()
                        / dim as f64;
                    for i in 0..s {
                        for j in 0..s {
                            m[[x, i, j]] = (1.0 - t) * a[i][j] + t * b[i][j];
                        }
                    }
                }
                ChainModel::new(m)?
            }
            other => {
                return Err(Error::Config(format!(
                    "chain.kind: expected constant | identical_rows | interpolated, got {other:?}"
                )))
            }
        };

        let u = actions.len();
        let reward_values = match self.reward.kind.as_str() {
            "constant" => {
                let v = self
                    .reward
                    .value
                    .ok_or_else(|| Error::Config("reward.value is required for kind = \"constant\"".into()))?;
                Array2::from_elem((g, u), v)
            }
            "bump" => {
                let center = self
                    .reward
                    .center
                    .as_ref()
                    .ok_or_else(|| Error::Config("reward.center is required for kind = \"bump\"".into()))?;
                let width = self
                    .reward
                    .width
                    .ok_or_else(|| Error::Config("reward.width is required for kind = \"bump\"".into()))?;
                let amplitude = self
                    .reward
                    .amplitude
                    .as_ref()
                    .ok_or_else(|| Error::Config("reward.amplitude is required for kind = \"bump\"".into()))?;
                if center.len() != u || amplitude.len() != u {
                    return Err(Error::Config(format!(
                        "reward.center / reward.amplitude need one entry per action ({u})"
                    )));
                }
                if !(width > 0.0) {
                    return Err(Error::Config(format!("reward.width must be > 0, got {width}")));
                }
                for (a, c) in center.iter().enumerate() {
                    if c.len() != dim {
                        return Err(Error::Config(format!(
                            "reward.center[{a}]: expected {dim} entries, got {}",
                            c.len()
                        )));
                    }
                }
                Array2::from_shape_fn((g, u), |(x, a)| {
                    let p = grid.point(x);
                    let d2: f64 = p
                        .iter()
                        .zip(&center[a])
                        .map(|(v, c)| (v - c) * (v - c))
                        .sum();
                    amplitude[a] * (-d2 / (2.0 * width * width)).exp()
                })
            }
            "table" => {
                let values = self
                    .reward
                    .values
                    .as_ref()
                    .ok_or_else(|| Error::Config("reward.values is required for kind = \"table\"".into()))?;
                if values.len() != g || values.iter().any(|r| r.len() != u) {
                    return Err(Error::Config(format!(
                        "reward.values: expected {g} rows of {u} entries"
                    )));
                }
                Array2::from_shape_fn((g, u), |(x, a)| values[x][a])
            }
            other => {
                return Err(Error::Config(format!(
                    "reward.kind: expected constant | bump | table, got {other:?}"
                )))
            }
        };
        let reward = RewardModel::new(reward_values, self.reward.bound)?;

        let initial_x = self.initial.x.resolve(g, "initial.x")?;
        let initial_s = Belief::new(self.initial.s.resolve(s, "initial.s")?)?;

        Ok(MdpModel {
            grid,
            num_modes: s,
            actions,
            kernel,
            chain,
            reward,
            gamma: self.gamma.value,
            initial_x,
            initial_s,
        })
    }
}
