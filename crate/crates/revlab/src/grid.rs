//! Signal discretisation: the uniform symmetric grid, Gaussian state
//! densities, the sufficient statistic, private posteriors, and the ex-ante
//! joint probability weights on the K=3 lattice.

use crate::numerics::{logistic, Scalar};
use crate::{Error, Real, Result};
use serde::{Deserialize, Serialize};

/// Uniform symmetric grid of centred signals on [-u_max, u_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGrid {
    pub size: usize,
    pub u_min: Real,
    pub u_max: Real,
    pub nodes: Vec<Real>,
}

impl SignalGrid {
    pub fn spacing(&self) -> Real {
        (self.u_max - self.u_min) / (self.size as Real - 1.0)
    }
}

/// make_grid(G, u_max): G ≥ 2 equally spaced nodes, symmetric about zero.
pub fn make_grid(size: usize, u_max: Real) -> Result<SignalGrid> {
    if size < 2 {
        return Err(Error::InvalidConfig(format!("grid size {size} < 2")));
    }
    if !(u_max > 0.0) {
        return Err(Error::InvalidConfig(format!("u_max {u_max} must be positive")));
    }
    let step = 2.0 * u_max / (size as Real - 1.0);
    let nodes = (0..size).map(|i| -u_max + step * i as Real).collect();
    Ok(SignalGrid { size, u_min: -u_max, u_max, nodes })
}

/// Log state-conditional signal density: ln f_v(u) for v ∈ {0,1},
/// f_v(u) = sqrt(τ/2π)·exp(−(τ/2)(u−v+½)²).
pub fn log_density<R: Scalar>(tau: R, v: u8, u: R) -> R {
    let half = R::c(0.5);
    let mean = if v == 1 { half } else { -half };
    let d = u - mean;
    half * (tau / R::c(core::f64::consts::TAU)).ln() - half * tau * d * d
}

/// State-conditional signal density f_v(u).
pub fn density<R: Scalar>(tau: R, v: u8, u: R) -> R {
    log_density(tau, v, u).exp()
}

/// Private log-likelihood ratio ln[f₁(u)/f₀(u)] = τ·u.
pub fn loglik_ratio<R: Scalar>(tau: R, u: R) -> R {
    tau * u
}

/// Bayesian sufficient statistic T⋆ = Σ τ_k u_k.
pub fn sufficient_statistic(taus: &[Real], us: &[Real]) -> Result<Real> {
    if taus.len() != us.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} precisions vs {} signals",
            taus.len(),
            us.len()
        )));
    }
    Ok(taus.iter().zip(us).map(|(t, u)| t * u).sum())
}

/// Private posterior μ = Λ(τu).
pub fn private_posterior<R: Scalar>(tau: R, u: R) -> R {
    logistic(loglik_ratio(tau, u))
}

/// Ex-ante joint probability weights on the G³ signal lattice: the
/// uniform-prior mixture ½·Π f₁ + ½·Π f₀ at the nodes, renormalised.
#[derive(Debug, Clone)]
pub struct JointWeightTensor {
    pub size: usize,
    /// w[i][j][l] flattened as i*G²+j*G+l, sums to one.
    pub w: Vec<Real>,
    /// State-conditional counterparts (same layout, each sums to one):
    /// w_v ∝ Π f_v. Used for conditioning on the realised state.
    pub w1: Vec<Real>,
    pub w0: Vec<Real>,
}

impl JointWeightTensor {
    #[inline]
    pub fn at(&self, i: usize, j: usize, l: usize) -> Real {
        self.w[(i * self.size + j) * self.size + l]
    }
}

/// joint_weights(grid, τ): K must be 3.
pub fn joint_weights(grid: &SignalGrid, taus: &[Real]) -> Result<JointWeightTensor> {
    if taus.len() != 3 {
        return Err(Error::InvalidInput(format!("need K=3 precisions, got {}", taus.len())));
    }
    let g = grid.size;
    let lf: Vec<[Vec<Real>; 2]> = taus
        .iter()
        .map(|&tau| {
            [
                grid.nodes.iter().map(|&u| log_density(tau, 0, u)).collect(),
                grid.nodes.iter().map(|&u| log_density(tau, 1, u)).collect(),
            ]
        })
        .collect();
    let mut w = vec![0.0; g * g * g];
    let mut w1 = vec![0.0; g * g * g];
    let mut w0 = vec![0.0; g * g * g];
    for i in 0..g {
        for j in 0..g {
            for l in 0..g {
                let l1 = lf[0][1][i] + lf[1][1][j] + lf[2][1][l];
                let l0 = lf[0][0][i] + lf[1][0][j] + lf[2][0][l];
                let idx = (i * g + j) * g + l;
                w1[idx] = l1.exp();
                w0[idx] = l0.exp();
                w[idx] = 0.5 * w1[idx] + 0.5 * w0[idx];
            }
        }
    }
    for v in [&mut w, &mut w1, &mut w0] {
        let s: Real = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    }
    Ok(JointWeightTensor { size: g, w, w1, w0 })
}

/// Marginal ex-ante weight of a single signal at the grid nodes,
/// ½(f₀+f₁) renormalised. Used as the u-direction PAVA weights.
pub fn marginal_weights(grid: &SignalGrid, tau: Real) -> Vec<Real> {
    let mut w: Vec<Real> = grid
        .nodes
        .iter()
        .map(|&u| 0.5 * density(tau, 0, u) + 0.5 * density(tau, 1, u))
        .collect();
    let s: Real = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::logit;
    use approx::assert_abs_diff_eq;

    #[test]
    fn make_grid_examples() {
        let g = make_grid(5, 2.0).unwrap();
        assert_eq!(g.nodes, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let g = make_grid(15, 4.0).unwrap();
        assert_abs_diff_eq!(g.spacing(), 8.0 / 14.0, epsilon = 1e-15);
        assert!(make_grid(1, 4.0).is_err());
        assert!(make_grid(10, -1.0).is_err());
    }

    #[test]
    fn loglik_ratio_examples() {
        assert_eq!(loglik_ratio(2.0, 1.0), 2.0);
        assert_eq!(loglik_ratio(2.0, 0.0), 0.0);
        assert_eq!(loglik_ratio(0.5, -3.0), -1.5);
    }

    #[test]
    fn loglik_matches_density_ratio() {
        for &(tau, u) in &[(0.5, 1.3), (2.0, -2.7), (4.0, 0.01)] {
            let direct = log_density(tau, 1, u) - log_density(tau, 0, u);
            assert_abs_diff_eq!(direct, loglik_ratio(tau, u), epsilon = 1e-12);
        }
    }

    #[test]
    fn sufficient_statistic_examples() {
        assert_eq!(sufficient_statistic(&[2.0, 2.0, 2.0], &[1.0, -1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(sufficient_statistic(&[2.0, 2.0, 2.0], &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            sufficient_statistic(&[1.0, 3.0, 10.0], &[1.0, 0.0, -0.2]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert!(sufficient_statistic(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn private_posterior_examples() {
        assert_abs_diff_eq!(private_posterior(2.0, 1.0), 0.8808, epsilon = 5e-5);
        assert_eq!(private_posterior(2.0, 0.0), 0.5);
        assert_abs_diff_eq!(private_posterior(2.0, -1.0), 0.1192, epsilon = 5e-5);
    }

    #[test]
    fn density_normalises_on_grid() {
        // trapezoid integral over [-4, 4] for τ ≥ 0.5 within [1-1e-6, 1]
        let g = make_grid(2001, 4.0).unwrap();
        // tail mass outside [-4,4]: ~7.4e-3 at tau=0.5, ~2.4e-4 at tau=1,
        // below 1e-6 from tau=2 on
        for &(tau, lo) in &[(0.5, 1.0 - 8e-3), (1.0, 1.0 - 3e-4), (2.0, 1.0 - 1e-6), (8.0, 1.0 - 1e-6)] {
            for v in [0u8, 1u8] {
                let h = g.spacing();
                let mut s = 0.0;
                for (i, &u) in g.nodes.iter().enumerate() {
                    let w = if i == 0 || i == g.size - 1 { 0.5 } else { 1.0 };
                    s += w * density(tau, v, u);
                }
                s *= h;
                assert!(s <= 1.0 + 1e-9 && s >= lo, "tau={tau} v={v} -> {s}");
            }
        }
    }

    #[test]
    fn joint_weights_normalised_and_symmetric() {
        let g = make_grid(9, 4.0).unwrap();
        let w = joint_weights(&g, &[2.0, 2.0, 2.0]).unwrap();
        let sum: Real = w.w.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        // homogeneous τ: invariant under the 6 index permutations
        for i in 0..9 {
            for j in 0..9 {
                for l in 0..9 {
                    let x = w.at(i, j, l);
                    for &(a, b, c) in &[(i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                        assert_abs_diff_eq!(x, w.at(a, b, c), epsilon = 1e-15);
                    }
                }
            }
        }
        // sign-flip symmetry of the binary-state mixture
        for i in 0..9 {
            for j in 0..9 {
                for l in 0..9 {
                    assert_abs_diff_eq!(
                        w.at(i, j, l),
                        w.at(8 - i, 8 - j, 8 - l),
                        epsilon = 1e-15
                    );
                }
            }
        }
        // all-zero-signal node carries the maximal interior weight for τ ≤ 2, G odd
        let center = w.at(4, 4, 4);
        let mut max_interior: Real = 0.0;
        for i in 1..8 {
            for j in 1..8 {
                for l in 1..8 {
                    max_interior = max_interior.max(w.at(i, j, l));
                }
            }
        }
        assert_abs_diff_eq!(center, max_interior, epsilon = 1e-15);
    }

    #[test]
    fn logit_logistic_identities() {
        for i in -26..=26 {
            let z = i as Real * 0.5;
            assert_abs_diff_eq!(logit(logistic(z)), z, epsilon = 1e-10);
        }
    }
}
