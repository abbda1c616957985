//! Discretization of continuous transition densities onto the grid.
//!
//! In-grid probabilities use the midpoint rule (density at the grid point
//! times cell volume); the probability of leaving the box is computed in
//! closed form from the density's CDF. The in-grid part is then rescaled so
//! that row sum + exit = 1 exactly up to rounding.

use crate::error::{Error, Result};
use crate::model::{ActionSet, GridSpace, TransitionKernel};
use ndarray::{Array3, Array4};
use statrs::function::erf::erf;

/// What happens to probability mass that falls outside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Outside mass becomes exit probability (the process can stop).
    Exit,
    /// The density is renormalized to the box; exit probability is zero.
    Truncate,
}

/// Families of transition densities for x' given (x, s, u).
#[derive(Clone, Debug)]
pub enum DensitySpec {
    /// x' = x with probability one.
    Identity,
    /// x' uniform over the grid, regardless of (x, s, u).
    Uniform,
    /// Per-axis independent Gaussian centred at
    /// `x + drift[s] + gain[s] * payload(u)` (componentwise) with a
    /// per-mode standard deviation.
    Gaussian {
        /// Per mode, per axis.
        drift: Vec<Vec<f64>>,
        /// Per mode, per axis; multiplies the action payload.
        gain: Vec<Vec<f64>>,
        /// Per mode.
        sigma: Vec<f64>,
        boundary: BoundaryPolicy,
    },
}

fn normal_pdf(v: f64, mean: f64, sigma: f64) -> f64 {
    let z = (v - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn normal_cdf(v: f64, mean: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + erf((v - mean) / (sigma * std::f64::consts::SQRT_2)))
}

/// Builds the transition kernel for a density family on a grid.
pub fn build_kernel(
    density: &DensitySpec,
    grid: &GridSpace,
    num_modes: usize,
    actions: &ActionSet,
) -> Result<TransitionKernel> {
    if num_modes == 0 {
        return Err(Error::Config("need at least one mode".into()));
    }
    for (i, a) in actions.iter().enumerate() {
        if a.payload.len() != grid.dim() {
            return Err(Error::Config(format!(
                "actions[{i}].payload has len {}, grid dim is {}",
                a.payload.len(),
                grid.dim()
            )));
        }
    }
    let g = grid.num_points();
    let u = actions.len();
    let mut probs = Array4::zeros((g, num_modes, u, g));
    let mut exit_mass = Array3::zeros((g, num_modes, u));

    match density {
        DensitySpec::Identity => {
            for x in 0..g {
                for s in 0..num_modes {
                    for a in 0..u {
                        probs[[x, s, a, x]] = 1.0;
                    }
                }
            }
        }
        DensitySpec::Uniform => {
            let p = 1.0 / g as f64;
            probs.fill(p);
        }
        DensitySpec::Gaussian {
            drift,
            gain,
            sigma,
            boundary,
        } => {
            let dim = grid.dim();
            let check_per_mode = |name: &str, v: &Vec<Vec<f64>>| -> Result<()> {
                if v.len() != num_modes {
                    return Err(Error::Config(format!(
                        "dynamics.{name} needs one entry per mode ({num_modes}), got {}",
                        v.len()
                    )));
                }
                for (s, row) in v.iter().enumerate() {
                    if row.len() != dim {
                        return Err(Error::Config(format!(
                            "dynamics.{name}[{s}] has len {}, grid dim is {dim}",
                            row.len()
                        )));
                    }
                }
                Ok(())
            };
            check_per_mode("drift", drift)?;
            check_per_mode("gain", gain)?;
            if sigma.len() != num_modes {
                return Err(Error::Config(format!(
                    "dynamics.sigma needs one entry per mode ({num_modes}), got {}",
                    sigma.len()
                )));
            }
            for (s, &sg) in sigma.iter().enumerate() {
                if !(sg.is_finite() && sg > 0.0) {
                    return Err(Error::Config(format!(
                        "dynamics.sigma[{s}] must be > 0, got {sg}"
                    )));
                }
            }

            let cell_volume = grid.cell_volume();
            for x in 0..g {
                let xc = grid.point(x);
                for s in 0..num_modes {
                    let sg = sigma[s];
                    for a in 0..u {
                        let payload = &actions.get(a).payload;
                        let mean: Vec<f64> = (0..dim)
                            .map(|i| xc[i] + drift[s][i] + gain[s][i] * payload[i])
                            .collect();

                        // Mass inside the box, in closed form per axis.
                        let mut inside = 1.0;
                        for (i, (lo, hi)) in grid.bounds().iter().enumerate() {
                            inside *= normal_cdf(*hi, mean[i], sg) - normal_cdf(*lo, mean[i], sg);
                        }

                        let mut raw_sum = 0.0;
                        for xn in 0..g {
                            let yc = grid.point(xn);
                            let mut dens = 1.0;
                            for i in 0..dim {
                                dens *= normal_pdf(yc[i], mean[i], sg);
                            }
                            if !dens.is_finite() || dens < 0.0 {
                                return Err(Error::Density {
                                    x,
                                    s,
                                    u: a,
                                    reason: format!("density at x'={xn} is {dens}"),
                                });
                            }
                            let p = dens * cell_volume;
                            probs[[x, s, a, xn]] = p;
                            raw_sum += p;
                        }

                        let target = match boundary {
                            BoundaryPolicy::Exit => {
                                exit_mass[[x, s, a]] = 1.0 - inside;
                                inside
                            }
                            BoundaryPolicy::Truncate => {
                                exit_mass[[x, s, a]] = 0.0;
                                1.0
                            }
                        };
                        if target > 0.0 {
                            if raw_sum <= 0.0 {
                                return Err(Error::Density {
                                    x,
                                    s,
                                    u: a,
                                    reason: "no probability mass on the grid".into(),
                                });
                            }
                            let scale = target / raw_sum;
                            for xn in 0..g {
                                probs[[x, s, a, xn]] *= scale;
                            }
                        }
                    }
                }
            }
        }
    }

    TransitionKernel::new(probs, exit_mass)
}
