//! Observation windows and hidden-mode beliefs.
//!
//! A policy with memory L sees the window (x(0), x(-1), ..., x(-L)) of the
//! last L+1 grid points, newest first. Beliefs over the hidden mode evolve
//! open-loop along the observed x trajectory: b(k+1) = P(x(k))^T b(k). The
//! mode is never observed directly, so there is no measurement update.

use crate::error::{Error, Result};
use crate::model::ChainModel;
use serde::{Deserialize, Serialize};

/// Tolerance for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A window of grid-point observations, newest first. Memory L means L+1
/// entries; L = 0 is the plain current state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoState {
    window: Vec<usize>,
}

impl InfoState {
    pub fn new(window: Vec<usize>, num_grid_points: usize) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::InvalidArgument("empty observation window".into()));
        }
        for (t, &x) in window.iter().enumerate() {
            if x >= num_grid_points {
                return Err(Error::Index {
                    context: format!("InfoState window[{t}]"),
                    index: x,
                    len: num_grid_points,
                });
            }
        }
        Ok(InfoState { window })
    }

    /// The window (x0, x0, ..., x0): the natural start before any history.
    pub fn repeated(x0: usize, memory: usize, num_grid_points: usize) -> Result<Self> {
        Self::new(vec![x0; memory + 1], num_grid_points)
    }

    pub fn memory(&self) -> usize {
        self.window.len() - 1
    }

    /// Entries newest first: window()[0] = x(0), window()[L] = x(-L).
    pub fn window(&self) -> &[usize] {
        &self.window
    }

    pub fn newest(&self) -> usize {
        self.window[0]
    }

    pub fn oldest(&self) -> usize {
        *self.window.last().unwrap()
    }

    /// Shifts the window one step: the new observation enters at the front,
    /// the oldest entry falls off the back.
    pub fn push_observation(&self, x_new: usize, num_grid_points: usize) -> Result<InfoState> {
        if x_new >= num_grid_points {
            return Err(Error::Index {
                context: "push_observation".into(),
                index: x_new,
                len: num_grid_points,
            });
        }
        let mut window = Vec::with_capacity(self.window.len());
        window.push(x_new);
        window.extend_from_slice(&self.window[..self.window.len() - 1]);
        Ok(InfoState { window })
    }
}

/// A probability distribution over hidden modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    /// Validates and cleans: entries within -SIMPLEX_TOL of zero are clamped
    /// to zero, the total must be 1 within SIMPLEX_TOL, and the result is
    /// renormalized so downstream sums start from an exact simplex point.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Distribution("belief has no entries".into()));
        }
        let mut w = weights;
        let mut sum = 0.0;
        for (i, v) in w.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Distribution(format!("belief[{i}] = {v}")));
            }
            if *v < 0.0 {
                if *v < -SIMPLEX_TOL {
                    return Err(Error::Distribution(format!(
                        "belief[{i}] = {v} is negative beyond {SIMPLEX_TOL:.0e}"
                    )));
                }
                *v = 0.0;
            }
            sum += *v;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Distribution(format!(
                "belief sums to {sum:.17}, not 1 within {SIMPLEX_TOL:.0e}"
            )));
        }
        for v in w.iter_mut() {
            *v /= sum;
        }
        Ok(Belief { weights: w })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        Belief {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// All mass on one mode.
    pub fn vertex(mode: usize, n: usize) -> Result<Self> {
        if mode >= n {
            return Err(Error::Index {
                context: "Belief::vertex".into(),
                index: mode,
                len: n,
            });
        }
        let mut w = vec![0.0; n];
        w[mode] = 1.0;
        Ok(Belief { weights: w })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// For freshly computed nonnegative weights that sum to ~1.
    pub(crate) fn from_raw(mut w: Vec<f64>) -> Belief {
        let mut sum = 0.0;
        for v in w.iter_mut() {
            if *v < 0.0 {
                debug_assert!(*v > -SIMPLEX_TOL);
                *v = 0.0;
            }
            sum += *v;
        }
        debug_assert!((sum - 1.0).abs() < 1e-9, "raw belief sums to {sum}");
        for v in w.iter_mut() {
            *v /= sum;
        }
        Belief { weights: w }
    }
}

/// One open-loop step: the belief after a transition taken at grid point x,
/// i.e. P(x)^T b.
pub fn belief_update(b: &Belief, x: usize, chain: &ChainModel) -> Result<Belief> {
    if b.dim() != chain.num_modes() {
        return Err(Error::Shape {
            context: "belief_update".into(),
            expected: format!("belief dim {}", chain.num_modes()),
            actual: format!("{}", b.dim()),
        });
    }
    let p = chain.matrix_at(x)?;
    let s = b.dim();
    let mut out = vec![0.0; s];
    for j in 0..s {
        let mut acc = 0.0;
        for i in 0..s {
            acc += p[[i, j]] * b.weights[i];
        }
        out[j] = acc;
    }
    Ok(Belief::from_raw(out))
}

/// Pushes a belief from the oldest entry of a window through every chain
/// matrix along it (oldest applied first, L+1 factors in total): the belief
/// implied at the window's end when `prior` held at its start.
pub fn window_belief(info: &InfoState, prior: &Belief, chain: &ChainModel) -> Result<Belief> {
    let mut b = prior.clone();
    for &x in info.window().iter().rev() {
        b = belief_update(&b, x, chain)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn constant_chain(g: usize, p: [[f64; 2]; 2]) -> ChainModel {
        ChainModel::new(Array3::from_shape_fn((g, 2, 2), |(_, i, j)| p[i][j])).unwrap()
    }

    #[test]
    fn push_observation_shifts_the_window() {
        let i = InfoState::new(vec![3, 7], 10).unwrap();
        assert_eq!(i.memory(), 1);
        let next = i.push_observation(5, 10).unwrap();
        assert_eq!(next.window(), &[5, 3]);
        assert_eq!(next.newest(), 5);
        assert_eq!(next.oldest(), 3);
    }

    #[test]
    fn window_validation() {
        assert!(InfoState::new(vec![], 10).is_err());
        assert!(InfoState::new(vec![10], 10).is_err());
        assert!(InfoState::new(vec![9, 0], 10).is_ok());
        let i = InfoState::repeated(4, 2, 10).unwrap();
        assert_eq!(i.window(), &[4, 4, 4]);
        assert!(i.push_observation(10, 10).is_err());
    }

    #[test]
    fn belief_new_validates_and_cleans() {
        assert!(Belief::new(vec![0.5, 0.5]).is_ok());
        assert!(Belief::new(vec![0.6, 0.6]).is_err());
        assert!(Belief::new(vec![1.1, -0.1]).is_err());
        assert!(Belief::new(vec![]).is_err());
        // A tiny negative from rounding is clamped, not rejected.
        let b = Belief::new(vec![1.0 + 0.5e-12, -0.5e-12]).unwrap();
        assert_eq!(b.weights()[1], 0.0);
        assert!((b.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_step_update_matches_hand_computation() {
        let chain = constant_chain(3, [[0.9, 0.1], [0.2, 0.8]]);
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        let next = belief_update(&b, 0, &chain).unwrap();
        assert!((next.weights()[0] - 0.55).abs() < 1e-15);
        assert!((next.weights()[1] - 0.45).abs() < 1e-15);
    }

    // Oracle: the explicit two-step matrix product (P^T)^2 applied to the
    // vertex (1, 0), for the constant chain P = [[0.9, 0.1], [0.2, 0.8]]:
    //   P^T (1,0)^T           = (0.90, 0.10)
    //   P^T (0.90, 0.10)^T    = (0.83, 0.17)
    #[test]
    fn window_belief_is_the_ordered_matrix_product() {
        let chain = constant_chain(5, [[0.9, 0.1], [0.2, 0.8]]);
        let info = InfoState::new(vec![2, 4], 5).unwrap();
        let b = Belief::vertex(0, 2).unwrap();
        let out = window_belief(&info, &b, &chain).unwrap();
        assert!((out.weights()[0] - 0.83).abs() < 1e-15, "{:?}", out);
        assert!((out.weights()[1] - 0.17).abs() < 1e-15);
    }

    // With point-dependent matrices the factor order matters; apply the
    // oldest window entry first.
    #[test]
    fn window_belief_applies_oldest_factor_first() {
        let mut m = Array3::zeros((2, 2, 2));
        // P(0) = [[1, 0], [1, 0]] maps everything to mode 0.
        m[[0, 0, 0]] = 1.0;
        m[[0, 1, 0]] = 1.0;
        // P(1) = [[0, 1], [0, 1]] maps everything to mode 1.
        m[[1, 0, 1]] = 1.0;
        m[[1, 1, 1]] = 1.0;
        let chain = ChainModel::new(m).unwrap();
        let b = Belief::uniform(2);

        // Window (newest=0, oldest=1): apply P(1) then P(0) -> mode 0.
        let info = InfoState::new(vec![0, 1], 2).unwrap();
        let out = window_belief(&info, &b, &chain).unwrap();
        assert_eq!(out.weights(), &[1.0, 0.0]);

        // Reversed window -> mode 1.
        let info = InfoState::new(vec![1, 0], 2).unwrap();
        let out = window_belief(&info, &b, &chain).unwrap();
        assert_eq!(out.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn window_belief_composes_with_push() {
        let chain = constant_chain(6, [[0.7, 0.3], [0.4, 0.6]]);
        let prior = Belief::new(vec![0.3, 0.7]).unwrap();
        let info = InfoState::new(vec![1, 2, 3], 6).unwrap();
        // beta over the full window = one more update of beta over the tail.
        let tail = InfoState::new(vec![2, 3], 6).unwrap();
        let via_tail = belief_update(&window_belief(&tail, &prior, &chain).unwrap(), 1, &chain).unwrap();
        let direct = window_belief(&info, &prior, &chain).unwrap();
        for (a, b) in direct.weights().iter().zip(via_tail.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
