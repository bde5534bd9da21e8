//! No-learning equilibrium: market-clearing root finding for arbitrary
//! preference mixes, the CARA and log-utility closed forms, the deterministic
//! supply variant, and the Jensen-gap expansion.

use crate::grid::{private_posterior, SignalGrid};
use crate::numerics::{logistic, logit};
use crate::preferences::{demand, AgentGroup, Preference};
use crate::{Error, Real, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Logit-price search bracket for the root finder.
pub const LOGIT_BRACKET: Real = 40.0;

/// Market: K agent groups plus a deterministic asset supply z̄ ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub groups: Vec<AgentGroup>,
    pub supply: Real,
}

impl MarketConfig {
    pub fn new(groups: Vec<AgentGroup>) -> Self {
        MarketConfig { groups, supply: 0.0 }
    }

    pub fn homogeneous_crra(gamma: Real, tau: Real, k: usize) -> Self {
        MarketConfig::new(vec![AgentGroup::crra(gamma, tau); k])
    }

    pub fn homogeneous_cara(alpha: Real, tau: Real, k: usize) -> Self {
        MarketConfig::new(vec![AgentGroup::cara(alpha, tau); k])
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidConfig("need at least one agent group".into()));
        }
        if self.supply < 0.0 {
            return Err(Error::InvalidConfig(format!("supply {} < 0", self.supply)));
        }
        for g in &self.groups {
            let ok = g.tau > 0.0
                && g.wealth > 0.0
                && match g.pref {
                    Preference::Cara { alpha } => alpha > 0.0,
                    Preference::Crra { gamma } => gamma > 0.0 && gamma.is_finite(),
                };
            if !ok {
                return Err(Error::InvalidConfig(format!("bad agent group {g:?}")));
            }
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.groups.windows(2).all(|w| w[0] == w[1])
    }

    pub fn taus(&self) -> Vec<Real> {
        self.groups.iter().map(|g| g.tau).collect()
    }
}

/// Cleared market: price, per-group demands, clearing residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClearingResult {
    pub price: Real,
    pub demands: Vec<Real>,
    pub residual: Real,
    pub iterations: usize,
}

fn excess_demand(cfg: &MarketConfig, mus: &[Real], p: Real) -> Real {
    let mut z = -cfg.supply;
    for (g, &mu) in cfg.groups.iter().zip(mus) {
        z += demand(g, mu, p);
    }
    z
}

/// Unique no-learning clearing price given posteriors, by a bracketed hybrid
/// root finder on logit p over [-40, 40].
pub fn clear_market(cfg: &MarketConfig, mus: &[Real], tol: Real) -> Result<ClearingResult> {
    cfg.validate()?;
    if mus.len() != cfg.groups.len() {
        return Err(Error::InvalidInput(format!(
            "{} posteriors for {} groups",
            mus.len(),
            cfg.groups.len()
        )));
    }
    if mus.iter().any(|m| !(*m > 0.0 && *m < 1.0)) {
        return Err(Error::InvalidInput("posteriors must be interior to (0,1)".into()));
    }
    let f = |t: Real| excess_demand(cfg, mus, logistic(t));
    let (lo, hi) = (-LOGIT_BRACKET, LOGIT_BRACKET);
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return Err(Error::NoEquilibrium(format!(
            "excess demand does not change sign on the logit bracket (supply {})",
            cfg.supply
        )));
    }
    let mut iterations = 0usize;
    let t = crate::numerics::brent_decreasing(lo, hi, tol.min(1e-12), 300, |t| {
        iterations += 1;
        f(t)
    });
    let price = logistic(t);
    let demands: Vec<Real> = cfg.groups.iter().zip(mus).map(|(g, &mu)| demand(g, mu, price)).collect();
    let residual = (demands.iter().sum::<Real>() - cfg.supply).abs();
    Ok(ClearingResult { price, demands, residual, iterations })
}

/// CARA closed form: logit p = Σ w_k τ_k u_k with w_k ∝ 1/α_k. With supply
/// z̄ > 0 the whole log-odds shifts by −z̄/Σ α_j⁻¹.
pub fn cara_closed_form(alphas: &[Real], taus: &[Real], us: &[Real]) -> Result<Real> {
    cara_closed_form_with_supply(alphas, taus, us, 0.0)
}

pub fn cara_closed_form_with_supply(
    alphas: &[Real],
    taus: &[Real],
    us: &[Real],
    supply: Real,
) -> Result<Real> {
    if alphas.len() != taus.len() || taus.len() != us.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    let inv_sum: Real = alphas.iter().map(|a| 1.0 / a).sum();
    let num: Real = alphas.iter().zip(taus).zip(us).map(|((a, t), u)| t * u / a).sum();
    Ok(logistic((num - supply) / inv_sum))
}

/// Log-utility closed form: p = Σ w_k Λ(τ_k u_k), w_k = W_k / Σ W_j.
pub fn log_closed_form(wealths: &[Real], taus: &[Real], us: &[Real]) -> Result<Real> {
    if wealths.len() != taus.len() || taus.len() != us.len() {
        return Err(Error::InvalidInput("length mismatch".into()));
    }
    let wsum: Real = wealths.iter().sum();
    Ok(wealths
        .iter()
        .zip(taus)
        .zip(us)
        .map(|((w, t), u)| w * logistic(t * u))
        .sum::<Real>()
        / wsum)
}

/// Equilibrium price on the full G^K signal lattice (K = 3), pointwise
/// clearing at private posteriors. Cells fill in parallel, output order fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceTensor {
    pub size: usize,
    /// p[i][j][l] flattened as (i*G + j)*G + l.
    pub p: Vec<Real>,
}

impl PriceTensor {
    #[inline]
    pub fn at(&self, i: usize, j: usize, l: usize) -> Real {
        self.p[(i * self.size + j) * self.size + l]
    }
    #[inline]
    pub fn idx(&self, flat: usize) -> (usize, usize, usize) {
        let g = self.size;
        (flat / (g * g), (flat / g) % g, flat % g)
    }
    pub fn logits(&self) -> Vec<Real> {
        self.p.iter().map(|&x| logit(x)).collect()
    }
}

/// no_learning_price_tensor: P[i,j,l] clears the market at the private
/// posteriors Λ(τ_k u). General K is supported as a flat lattice of size G^K,
/// but the tensor accessor assumes K = 3.
pub fn no_learning_price_tensor(
    cfg: &MarketConfig,
    grid: &SignalGrid,
    tol: Real,
) -> Result<PriceTensor> {
    cfg.validate()?;
    if cfg.groups.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "tensor form needs K=3, got {}",
            cfg.groups.len()
        )));
    }
    let g = grid.size;
    let posts: Vec<Vec<Real>> = cfg
        .groups
        .iter()
        .map(|gr| grid.nodes.iter().map(|&u| private_posterior(gr.tau, u)).collect())
        .collect();
    let cells: Vec<Real> = (0..g * g * g)
        .into_par_iter()
        .map(|flat| {
            let (i, j, l) = ((flat / (g * g)), (flat / g) % g, flat % g);
            let mus = [posts[0][i], posts[1][j], posts[2][l]];
            clear_market(cfg, &mus, tol).map(|r| r.price)
        })
        .collect::<Result<Vec<Real>>>()?;
    Ok(PriceTensor { size: g, p: cells })
}

/// Exact Jensen gap and its third-order leading term at homogeneous log
/// utility: leading = −(τ³/48K)(U₃ − U₁³/K²).
pub fn jensen_gap(tau: Real, us: &[Real]) -> (Real, Real) {
    let k = us.len() as Real;
    let t_star: Real = us.iter().map(|u| tau * u).sum();
    let exact = us.iter().map(|&u| logistic(tau * u)).sum::<Real>() / k - logistic(t_star / k);
    let u1: Real = us.iter().sum();
    let u3: Real = us.iter().map(|u| u.powi(3)).sum();
    let leading = -(tau.powi(3) / (48.0 * k)) * (u3 - u1.powi(3) / (k * k));
    (exact, leading)
}

/// λ-mixed clearing: a fraction λ of each group trades on its private
/// posterior, the remaining mass stays at the uninformed prior ½. Demands are
/// mass-weighted on the continuum.
pub fn informed_share_clearing(
    cfg: &MarketConfig,
    lambda: Real,
    mus_informed: &[Real],
    tol: Real,
) -> Result<ClearingResult> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda {lambda} outside [0,1]")));
    }
    if mus_informed.len() != cfg.groups.len() {
        return Err(Error::InvalidInput("posterior count mismatch".into()));
    }
    let f = |t: Real| {
        let p = logistic(t);
        let mut z = -cfg.supply;
        for (g, &mu) in cfg.groups.iter().zip(mus_informed) {
            z += lambda * demand(g, mu, p) + (1.0 - lambda) * demand(g, 0.5, p);
        }
        z
    };
    let (lo, hi) = (-LOGIT_BRACKET, LOGIT_BRACKET);
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return Err(Error::NoEquilibrium("mixed market has no root on the bracket".into()));
    }
    let mut iterations = 0usize;
    let t = crate::numerics::brent_decreasing(lo, hi, tol.min(1e-12), 300, |t| {
        iterations += 1;
        f(t)
    });
    let price = logistic(t);
    let demands: Vec<Real> = cfg
        .groups
        .iter()
        .zip(mus_informed)
        .map(|(g, &mu)| lambda * demand(g, mu, price) + (1.0 - lambda) * demand(g, 0.5, price))
        .collect();
    let residual = (demands.iter().sum::<Real>() - cfg.supply).abs();
    Ok(ClearingResult { price, demands, residual, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_abs_diff_eq;

    const TOL: Real = 1e-12;

    #[test]
    fn clear_market_log_utility_mean() {
        let cfg = MarketConfig::homogeneous_crra(1.0, 2.0, 3);
        let mus = [0.8808, 0.1192, 0.8808];
        let r = clear_market(&cfg, &mus, TOL).unwrap();
        assert_abs_diff_eq!(r.price, 0.6269, epsilon = 5e-5);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn clear_market_cara_closed_form_agreement() {
        let cfg = MarketConfig::homogeneous_cara(1.0, 2.0, 3);
        let mus = [logistic(2.0), logistic(-2.0), logistic(2.0)];
        let r = clear_market(&cfg, &mus, TOL).unwrap();
        assert_abs_diff_eq!(r.price, logistic(2.0 / 3.0), epsilon = 1e-10);
    }

    #[test]
    fn clear_market_identical_posteriors() {
        for cfg in [
            MarketConfig::homogeneous_crra(0.5, 2.0, 3),
            MarketConfig::homogeneous_cara(2.0, 1.0, 4),
        ] {
            let mus = vec![0.73; cfg.groups.len()];
            let r = clear_market(&cfg, &mus, TOL).unwrap();
            assert_abs_diff_eq!(r.price, 0.73, epsilon = 1e-10);
            for x in r.demands {
                assert_abs_diff_eq!(x, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn cara_closed_form_examples() {
        let p = cara_closed_form(&[1.0; 3], &[2.0; 3], &[1.0, -1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(logit(p), 2.0 / 3.0, epsilon = 1e-12);
        let p = cara_closed_form(&[1.0, 2.0, 2.0], &[2.0; 3], &[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(logit(p), 1.0, epsilon = 1e-12);
        let p = cara_closed_form(&[0.7, 3.0, 1.1], &[2.0; 3], &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn log_closed_form_examples() {
        let p = log_closed_form(&[1.0; 3], &[1.0; 3], &[2.0, -1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(p, 0.4729, epsilon = 5e-5);
        assert!((p - 0.5).abs() > 1e-3, "partial revelation witness at T*=0");
        let p = log_closed_form(&[1.0; 3], &[1.0; 3], &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        // (δ,−δ,0) prices at exactly ½ by logistic point symmetry
        for &d in &[0.3, 1.0, 2.5] {
            let p = log_closed_form(&[1.0; 3], &[1.0; 3], &[d, -d, 0.0]).unwrap();
            assert_abs_diff_eq!(p, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn closed_forms_match_root_finder() {
        let grid = [0.9, -0.3, 1.7];
        let cara = MarketConfig::new(vec![
            AgentGroup::cara(0.8, 1.5),
            AgentGroup::cara(1.9, 0.7),
            AgentGroup::cara(0.4, 2.2),
        ]);
        let mus: Vec<Real> =
            cara.groups.iter().zip(grid).map(|(g, u)| private_posterior(g.tau, u)).collect();
        let root = clear_market(&cara, &mus, TOL).unwrap().price;
        let closed =
            cara_closed_form(&[0.8, 1.9, 0.4], &[1.5, 0.7, 2.2], &grid).unwrap();
        assert_abs_diff_eq!(root, closed, epsilon = 1e-10);

        let mut log_cfg = MarketConfig::homogeneous_crra(1.0, 1.2, 3);
        log_cfg.groups[0].wealth = 2.0;
        log_cfg.groups[2].wealth = 0.5;
        let mus: Vec<Real> =
            log_cfg.groups.iter().zip(grid).map(|(g, u)| private_posterior(g.tau, u)).collect();
        let root = clear_market(&log_cfg, &mus, TOL).unwrap().price;
        let closed = log_closed_form(&[2.0, 1.0, 0.5], &[1.2, 1.2, 1.2], &grid).unwrap();
        assert_abs_diff_eq!(root, closed, epsilon = 1e-10);
    }

    #[test]
    fn price_bounded_by_posteriors() {
        let cfg = MarketConfig::homogeneous_crra(0.5, 2.0, 3);
        let mus = [0.2, 0.9, 0.55];
        let r = clear_market(&cfg, &mus, TOL).unwrap();
        assert!(r.price >= 0.2 && r.price <= 0.9);
    }

    #[test]
    fn cara_supply_shift() {
        let cfg0 = MarketConfig::homogeneous_cara(1.4, 2.0, 3);
        let mut cfg1 = cfg0.clone();
        cfg1.supply = 0.9;
        let mus = [0.7, 0.4, 0.6];
        let p0 = clear_market(&cfg0, &mus, TOL).unwrap().price;
        let p1 = clear_market(&cfg1, &mus, TOL).unwrap().price;
        // logit shift = −α z̄ / K under homogeneous CARA
        assert_abs_diff_eq!(logit(p1) - logit(p0), -1.4 * 0.9 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn tensor_cara_matches_prop1_everywhere() {
        let grid = make_grid(9, 4.0).unwrap();
        let cfg = MarketConfig::homogeneous_cara(1.0, 2.0, 3);
        let t = no_learning_price_tensor(&cfg, &grid, TOL).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                for l in 0..9 {
                    let want =
                        logistic(2.0 / 3.0 * (grid.nodes[i] + grid.nodes[j] + grid.nodes[l]));
                    assert_abs_diff_eq!(t.at(i, j, l), want, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn tensor_symmetric_and_monotone() {
        let grid = make_grid(7, 4.0).unwrap();
        let cfg = MarketConfig::homogeneous_crra(0.5, 2.0, 3);
        let t = no_learning_price_tensor(&cfg, &grid, TOL).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                for l in 0..7 {
                    let x = t.at(i, j, l);
                    assert_abs_diff_eq!(x, t.at(j, i, l), epsilon = 1e-12);
                    assert_abs_diff_eq!(x, t.at(l, j, i), epsilon = 1e-12);
                    if i + 1 < 7 {
                        assert!(t.at(i + 1, j, l) > x);
                    }
                }
            }
        }
    }

    #[test]
    fn jensen_gap_examples() {
        let (_, lead) = jensen_gap(0.1, &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(lead, -0.1_f64.powi(3) * (8.0 / 9.0) / 144.0, epsilon = 1e-15);
        let (exact, lead) = jensen_gap(1.0, &[0.7, -0.7, 0.0]);
        assert_eq!(lead, 0.0);
        assert_abs_diff_eq!(exact, 0.0, epsilon = 1e-15);
        // O(τ^5) error scaling between τ=0.01 and τ=0.02
        let (e1, l1) = jensen_gap(0.01, &[1.0, 0.0, 0.0]);
        let (e2, l2) = jensen_gap(0.02, &[1.0, 0.0, 0.0]);
        let ratio = (e2 - l2).abs() / (e1 - l1).abs();
        assert!(ratio > 25.6 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn informed_share_examples() {
        let cfg = MarketConfig::homogeneous_crra(1.0, 2.0, 3);
        let mus = [0.8, 0.8, 0.8];
        let full = informed_share_clearing(&cfg, 1.0, &mus, TOL).unwrap();
        let direct = clear_market(&cfg, &mus, TOL).unwrap();
        assert_abs_diff_eq!(full.price, direct.price, epsilon = 1e-12);
        let none = informed_share_clearing(&cfg, 0.0, &mus, TOL).unwrap();
        assert_abs_diff_eq!(none.price, 0.5, epsilon = 1e-10);
        let half = informed_share_clearing(&cfg, 0.5, &mus, TOL).unwrap();
        assert_abs_diff_eq!(half.price, 0.65, epsilon = 1e-10);
    }

    #[test]
    fn uniqueness_cross_check_random() {
        // two bracket starts agree; light version of the acceptance property
        let cfg = MarketConfig::new(vec![
            AgentGroup::crra(0.6, 1.0),
            AgentGroup::cara(1.2, 2.0),
            AgentGroup::crra(2.5, 0.5),
        ]);
        let mus = [0.31, 0.72, 0.55];
        let a = clear_market(&cfg, &mus, 1e-13).unwrap().price;
        // rerun with a nested bisection on p-space as the second solver
        let f = |p: Real| {
            cfg.groups.iter().zip(mus).map(|(g, mu)| demand(g, mu, p)).sum::<Real>()
        };
        let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        assert_abs_diff_eq!(a, 0.5 * (lo + hi), epsilon = 1e-10);
    }
}
