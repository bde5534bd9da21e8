//! Demand functions on the binary asset for CARA and CRRA agents, the CARA
//! limit of CRRA, and the log-odds-linearity probe that separates the two.

use crate::numerics::{logit, saturates, Flagged, Scalar};
use crate::Real;
use serde::{Deserialize, Serialize};

/// Preference family of one agent group. CRRA with γ=1 is routed to the
/// log-utility closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Preference {
    /// Absolute risk aversion α > 0.
    Cara { alpha: Real },
    /// Relative risk aversion γ > 0.
    Crra { gamma: Real },
}

impl Preference {
    pub fn is_cara(&self) -> bool {
        matches!(self, Preference::Cara { .. })
    }
}

/// One agent group: preference, signal precision, initial wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentGroup {
    pub pref: Preference,
    pub tau: Real,
    pub wealth: Real,
}

impl AgentGroup {
    pub fn cara(alpha: Real, tau: Real) -> Self {
        AgentGroup { pref: Preference::Cara { alpha }, tau, wealth: 1.0 }
    }
    pub fn crra(gamma: Real, tau: Real) -> Self {
        AgentGroup { pref: Preference::Crra { gamma }, tau, wealth: 1.0 }
    }
}

/// CARA demand x = [logit μ − logit p]/α.
pub fn demand_cara<R: Scalar>(alpha: R, mu: R, p: R) -> R {
    (logit(mu) - logit(p)) / alpha
}

/// CRRA demand x = W(R−1)/[(1−p)+Rp], R = exp([logit μ − logit p]/γ).
/// γ=1 uses the log-utility form W(μ−p)/[p(1−p)].
pub fn demand_crra<R: Scalar>(gamma: R, wealth: R, mu: R, p: R) -> R {
    if gamma == R::one() {
        return wealth * (mu - p) / (p * (R::one() - p));
    }
    let z = logit(mu) - logit(p);
    demand_crra_z(gamma, wealth, z, p)
}

/// CRRA demand parametrised by the log-odds gap z = logit μ − logit p.
/// Shared with the solver layer, which carries logits directly.
pub fn demand_crra_z<R: Scalar>(gamma: R, wealth: R, z: R, p: R) -> R {
    let expo = (z / gamma).min(R::c(690.0)).max(R::c(-690.0));
    let r = expo.exp();
    wealth * (r - R::one()) / ((R::one() - p) + r * p)
}

/// Demand dispatch over the preference kind.
pub fn demand(group: &AgentGroup, mu: Real, p: Real) -> Real {
    match group.pref {
        Preference::Cara { alpha } => demand_cara(alpha, mu, p),
        Preference::Crra { gamma } => demand_crra(gamma, group.wealth, mu, p),
    }
}

/// Demand with a saturation flag when μ or p sits outside the logit clamp.
pub fn demand_checked(group: &AgentGroup, mu: Real, p: Real) -> Flagged<Real> {
    Flagged { value: demand(group, mu, p), saturated: saturates(mu) || saturates(p) }
}

/// Relative error of the rescaled CRRA demand against its CARA limit:
/// |γ·x/W − (logit μ − logit p)| / max(1, |logit μ − logit p|). O(1/γ).
pub fn cara_limit_check(gamma: Real, wealth: Real, mu: Real, p: Real) -> Real {
    let z = logit(mu) - logit(p);
    let x = demand_crra(gamma, wealth, mu, p);
    (gamma * x / wealth - z).abs() / z.abs().max(1.0)
}

/// First-order-condition residual of a candidate holding, relative scale.
/// μ(1−p)U′(W+(1−p)x) − (1−μ)pU′(W−px), divided by the sum of the two terms.
/// Used as the independent oracle for the closed-form demands.
pub fn foc_residual(group: &AgentGroup, mu: Real, p: Real, x: Real) -> Real {
    let w_up = group.wealth + (1.0 - p) * x;
    let w_dn = group.wealth - p * x;
    let (mu_term, nu_term) = match group.pref {
        Preference::Cara { alpha } => {
            // U'(w) = exp(-αw); factor exp(-αW) cancels, keep it for scale.
            (mu * (1.0 - p) * (-alpha * w_up).exp(), (1.0 - mu) * p * (-alpha * w_dn).exp())
        }
        Preference::Crra { gamma } => {
            (mu * (1.0 - p) * w_up.powf(-gamma), (1.0 - mu) * p * w_dn.powf(-gamma))
        }
    };
    (mu_term - nu_term).abs() / (mu_term + nu_term)
}

/// Curvature report from the linearity probe: max |second difference| of the
/// demand as a function of the log-odds gap z, over the probe grid.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureReport {
    pub max_second_difference: Real,
    /// Demand scale max|x| over the probe, for relative comparisons.
    pub scale: Real,
}

/// Probes x(z) on `z_grid` at fixed price p; CARA must come out affine, CRRA
/// with finite γ strictly curved away from its single inflection point.
pub fn linearity_probe(pref: &Preference, wealth: Real, p: Real, z_grid: &[Real]) -> CurvatureReport {
    let xs: Vec<Real> = z_grid
        .iter()
        .map(|&z| match *pref {
            Preference::Cara { alpha } => z / alpha,
            Preference::Crra { gamma } => demand_crra_z(gamma, wealth, z, p),
        })
        .collect();
    let mut max_dd: Real = 0.0;
    for i in 1..xs.len().saturating_sub(1) {
        let h1 = z_grid[i] - z_grid[i - 1];
        let h2 = z_grid[i + 1] - z_grid[i];
        let dd = ((xs[i + 1] - xs[i]) / h2 - (xs[i] - xs[i - 1]) / h1) / (0.5 * (h1 + h2));
        max_dd = max_dd.max(dd.abs());
    }
    let scale = xs.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1e-300);
    CurvatureReport { max_second_difference: max_dd, scale }
}
