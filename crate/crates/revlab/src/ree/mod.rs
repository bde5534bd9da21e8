//! Rational-expectations equilibrium by contour integration.
//!
//! The unknown is the agents' posterior function μ(u, p) on a (u, logit p)
//! lattice together with the equilibrium price tensor it induces. One map
//! application: (1) per-cell market clearing with posteriors read from the
//! tables at the previous cell price, (2) symmetrisation for homogeneous
//! groups, (3) a fresh contour-integration Bayes table traced from the new
//! tensor at the price-grid nodes, monotone-projected by PAVA. Damped Picard
//! with Anderson mixing drives the tensor to the fixed point; a Jacobian-free
//! Newton–Krylov phase polishes to the strict tolerance.
//!
//! Conditioning bandwidth: the contour Bayes step can pool levels under a
//! Gaussian kernel of width `band` (in logit-price units). A positive band is
//! the lattice analogue of vanishing supply noise and is annealed downward
//! during the Picard phase; the final band pins which equilibrium the solver
//! selects (see `SolverConfig::band_final`).

pub mod checkpoint;
mod solver;
mod trace;

pub use checkpoint::Checkpoint;
pub use trace::{contour_log_accumulators, trace_contour, ContourTrace, Crossing, SliceView, Sweep};

use crate::clearing::{MarketConfig, PriceTensor, LOGIT_BRACKET};
use crate::grid::{log_density, marginal_weights, SignalGrid};
use crate::metrics::{count_violations, DiagnosticsReport};
use crate::numerics::{brent_decreasing, logistic, logit, logsumexp, pava_nondecreasing};
use crate::preferences::{demand_crra_z, Preference};
use crate::{Error, Real, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hard cap on stored posterior logits (μ within [Λ(−34.5), Λ(34.5)]).
const LOGIT_CAP: Real = 34.5;

/// Gaussian kernel for banded level conditioning, standardised nodes.
const KERNEL_NODES: [Real; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Belief table μ(u, p) on the G_u × G_p lattice, stored as logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub u_nodes: Vec<Real>,
    pub p_logits: Vec<Real>,
    /// logit μ, indexed [i_u][i_p].
    pub logit_mu: Vec<Vec<Real>>,
    /// Cells whose contour trace met the activity rule.
    pub active: Vec<Vec<bool>>,
}

impl PosteriorTable {
    pub fn mu(&self, iu: usize, ip: usize) -> Real {
        logistic(self.logit_mu[iu][ip])
    }

    fn p_spacing(&self) -> Real {
        self.p_logits[1] - self.p_logits[0]
    }

    /// Linear interpolation of logit μ along the p axis at a grid u-node,
    /// extrapolating linearly beyond the grid with the edge slope.
    pub fn interp_at_node(&self, iu: usize, t: Real) -> Real {
        let gp = self.p_logits.len();
        let x = (t - self.p_logits[0]) / self.p_spacing();
        let i0 = (x.floor() as isize).clamp(0, gp as isize - 2) as usize;
        let fr = x - i0 as Real;
        let a = self.logit_mu[iu][i0];
        let b = self.logit_mu[iu][i0 + 1];
        (a + fr * (b - a)).clamp(-LOGIT_CAP, LOGIT_CAP)
    }

    /// Bilinear interpolation in (u, logit p), linear extrapolation in p and
    /// clamped in u.
    pub fn interp(&self, u: Real, t: Real) -> Real {
        let gu = self.u_nodes.len();
        let du = self.u_nodes[1] - self.u_nodes[0];
        let x = (u - self.u_nodes[0]) / du;
        let i0 = (x.floor() as isize).clamp(0, gu as isize - 2) as usize;
        let fr = (x - i0 as Real).clamp(0.0, 1.0);
        let a = self.interp_at_node(i0, t);
        let b = self.interp_at_node(i0 + 1, t);
        a + fr * (b - a)
    }

    /// Monotonicity violations in both directions (μ nondecreasing in u and p).
    pub fn violations(&self) -> usize {
        count_violations(&self.logit_mu, 1e-12)
    }
}

/// Price-grid spacing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceGridRule {
    UniformLogit,
    UniformProb,
}

/// Fixed-point solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Picard damping α ∈ (0, 1].
    pub damping: Real,
    /// Anderson memory window (0 disables mixing).
    pub anderson_memory: usize,
    /// Iteration cap for the Picard phase (all annealing stages combined).
    pub max_iter: usize,
    /// Residual level at which the Newton phase takes over.
    pub picard_tol: Real,
    /// Target residual for strict convergence.
    pub strict_tol: Real,
    /// Price grid size; defaults to the signal grid size when zero.
    pub price_grid_size: usize,
    pub price_grid_rule: PriceGridRule,
    /// Initial conditioning bandwidth, in p-grid spacings.
    pub band_init_spacings: Real,
    /// Final conditioning bandwidth in logit units; the equilibrium-selection
    /// parameter. Zero conditions on exact price levels.
    pub band_final: Real,
    pub newton_max_steps: usize,
    pub gmres_max_iters: usize,
    pub gmres_restart: usize,
    pub backtrack_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            damping: 0.25,
            anderson_memory: 6,
            max_iter: 600,
            picard_tol: 1e-4,
            strict_tol: 1e-12,
            price_grid_size: 0,
            price_grid_rule: PriceGridRule::UniformLogit,
            band_init_spacings: 2.0,
            band_final: 1.0,
            newton_max_steps: 60,
            gmres_max_iters: 80,
            gmres_restart: 40,
            backtrack_max: 8,
        }
    }
}

/// Seed for the fixed-point iteration.
#[derive(Debug, Clone)]
pub enum Seed {
    /// Start from the no-learning posteriors (the paper's default).
    NoLearning,
    /// Resume from a checkpoint.
    Custom(Checkpoint),
}

/// Converged (or best-effort) equilibrium.
#[derive(Debug, Clone)]
pub struct ReeSolution {
    pub tables: Vec<PosteriorTable>,
    pub tensor: PriceTensor,
    pub diagnostics: DiagnosticsReport,
    pub residual_history: Vec<Real>,
    pub iterations: usize,
    /// Bandwidth at which the returned fixed point was measured.
    pub band: Real,
}

/// All solver-side state that is fixed across iterations.
pub struct ReeProblem {
    pub cfg: MarketConfig,
    pub grid: SignalGrid,
    pub solver: SolverConfig,
    pub p_logits: Vec<Real>,
    homogeneous: bool,
    /// Per-agent u-direction PAVA weights (marginal ex-ante signal weights).
    u_weights: Vec<Vec<Real>>,
}

impl ReeProblem {
    pub fn new(cfg: MarketConfig, grid: SignalGrid, solver: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.groups.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "contour REE needs K=3, got {}",
                cfg.groups.len()
            )));
        }
        let nl = crate::clearing::no_learning_price_tensor(&cfg, &grid, 1e-13)?;
        let logits = nl.logits();
        let (mut lo, mut hi) = (Real::INFINITY, Real::NEG_INFINITY);
        for &t in &logits {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        let pad = 0.10 * (hi - lo) / 2.0;
        let gp = if solver.price_grid_size == 0 { grid.size } else { solver.price_grid_size };
        let p_logits: Vec<Real> = match solver.price_grid_rule {
            PriceGridRule::UniformLogit => {
                let (a, b) = (lo - pad, hi + pad);
                (0..gp).map(|i| a + (b - a) * i as Real / (gp as Real - 1.0)).collect()
            }
            PriceGridRule::UniformProb => {
                let (a, b) = (logistic(lo - pad), logistic(hi + pad));
                (0..gp).map(|i| logit(a + (b - a) * i as Real / (gp as Real - 1.0))).collect()
            }
        };
        let u_weights =
            cfg.groups.iter().map(|g| marginal_weights(&grid, g.tau)).collect();
        let homogeneous = cfg.is_homogeneous();
        Ok(ReeProblem { cfg, grid, solver, p_logits, homogeneous, u_weights })
    }

    fn g(&self) -> usize {
        self.grid.size
    }

    #[inline]
    fn flat(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.g() + j) * self.g() + l
    }

    /// No-learning seed: tensor from private posteriors, table logit μ = τu.
    pub fn seed_state(&self) -> Result<Vec<Real>> {
        let nl = crate::clearing::no_learning_price_tensor(&self.cfg, &self.grid, 1e-13)?;
        Ok(nl.logits())
    }

    /// Fresh posterior tables traced from `tensor_logits` at bandwidth `band`.
    pub fn bayes_tables(&self, tensor_logits: &[Real], band: Real) -> Vec<PosteriorTable> {
        let agents: &[usize] = if self.homogeneous { &[0] } else { &[0, 1, 2] };
        let tables: Vec<PosteriorTable> =
            agents.iter().map(|&k| self.bayes_table_for(k, tensor_logits, band)).collect();
        if self.homogeneous {
            vec![tables[0].clone(); 3]
        } else {
            tables
        }
    }

    /// Peer-axis precisions of agent k's slice, in slice order.
    fn peer_taus(&self, k: usize) -> (Real, Real) {
        let t = self.cfg.taus();
        match k {
            0 => (t[1], t[2]),
            1 => (t[0], t[2]),
            _ => (t[0], t[1]),
        }
    }

    fn slice_value(&self, tensor: &[Real], k: usize, own: usize, a: usize, b: usize) -> Real {
        match k {
            0 => tensor[self.flat(own, a, b)],
            1 => tensor[self.flat(a, own, b)],
            _ => tensor[self.flat(a, b, own)],
        }
    }

    fn bayes_table_for(&self, k: usize, tensor: &[Real], band: Real) -> PosteriorTable {
        let g = self.g();
        let gp = self.p_logits.len();
        let tau_own = self.cfg.groups[k].tau;
        let (tau_a, tau_b) = self.peer_taus(k);
        let rows: Vec<(Vec<Real>, Vec<bool>)> = (0..g)
            .into_par_iter()
            .map(|iu| {
                let getter = |a: usize, b: usize| self.slice_value(tensor, k, iu, a, b);
                let view = SliceView { get: &getter, size: g };
                let mut row = vec![Real::NAN; gp];
                let mut act = vec![false; gp];
                for ip in 0..gp {
                    if let Some((z, active)) =
                        self.banded_log_ratio(&view, self.p_logits[ip], band, tau_a, tau_b)
                    {
                        row[ip] = (tau_own * self.grid.nodes[iu] + z).clamp(-LOGIT_CAP, LOGIT_CAP);
                        act[ip] = active;
                    }
                }
                (row, act)
            })
            .collect();
        let mut table = PosteriorTable {
            u_nodes: self.grid.nodes.clone(),
            p_logits: self.p_logits.clone(),
            logit_mu: rows.iter().map(|r| r.0.clone()).collect(),
            active: rows.iter().map(|r| r.1.clone()).collect(),
        };
        self.fill_inactive(&mut table, k);
        self.project_monotone_weighted(&mut table, &self.u_weights[k]);
        table
    }

    /// Pooled log likelihood ratio at level `t`: contour accumulators of each
    /// kernel level combined under the Gaussian weights. None when no kernel
    /// level produced an active trace.
    fn banded_log_ratio(
        &self,
        view: &SliceView<'_>,
        t: Real,
        band: Real,
        tau_a: Real,
        tau_b: Real,
    ) -> Option<(Real, bool)> {
        let centre = trace_contour(view, &self.grid.nodes, t);
        if band <= 0.0 {
            return contour_log_accumulators(&centre, &self.grid.nodes, tau_a, tau_b)
                .map(|(l1, l0)| (l1 - l0, centre.is_active()));
        }
        // symmetric kernel pairs are kept only when both sides trace, so
        // range truncation stays second-order; the centre level must trace
        let mut acc1: Vec<Real> = Vec::with_capacity(KERNEL_NODES.len());
        let mut acc0: Vec<Real> = Vec::with_capacity(KERNEL_NODES.len());
        match contour_log_accumulators(&centre, &self.grid.nodes, tau_a, tau_b) {
            Some((l1, l0)) => {
                acc1.push(l1);
                acc0.push(l0);
            }
            None => return None,
        }
        for d in [1.0, 2.0] {
            let up = trace_contour(view, &self.grid.nodes, t + d * band);
            let dn = trace_contour(view, &self.grid.nodes, t - d * band);
            let a = contour_log_accumulators(&up, &self.grid.nodes, tau_a, tau_b);
            let b = contour_log_accumulators(&dn, &self.grid.nodes, tau_a, tau_b);
            if let (Some((u1, u0)), Some((d1, d0))) = (a, b) {
                let lw = -0.5 * d * d;
                acc1.push(lw + u1);
                acc0.push(lw + u0);
                acc1.push(lw + d1);
                acc0.push(lw + d0);
            }
        }
        Some((logsumexp(&acc1) - logsumexp(&acc0), centre.is_active()))
    }

    /// Inactive cells: interior gaps linearly interpolated, band edges
    /// extended with the active band's edge slope (keeps the table's response
    /// to price intact where traces ran out of the slice's range).
    fn fill_inactive(&self, table: &mut PosteriorTable, k: usize) {
        let gp = self.p_logits.len();
        let dt = table.p_spacing();
        let tau_own = self.cfg.groups[k].tau;
        for iu in 0..table.u_nodes.len() {
            let act: Vec<usize> = (0..gp).filter(|&ip| table.active[iu][ip]).collect();
            if act.is_empty() {
                for ip in 0..gp {
                    table.logit_mu[iu][ip] = tau_own * table.u_nodes[iu];
                }
                continue;
            }
            let (lo, hi) = (act[0], *act.last().unwrap());
            for ip in lo + 1..hi {
                if table.logit_mu[iu][ip].is_nan() {
                    let mut nxt = ip + 1;
                    while table.logit_mu[iu][nxt].is_nan() {
                        nxt += 1;
                    }
                    let a = table.logit_mu[iu][ip - 1];
                    let b = table.logit_mu[iu][nxt];
                    table.logit_mu[iu][ip] = a + (b - a) / (nxt - ip + 1) as Real;
                }
            }
            let (slope_lo, slope_hi) = if hi > lo {
                (
                    ((table.logit_mu[iu][lo + 1] - table.logit_mu[iu][lo]) / dt).max(0.0),
                    ((table.logit_mu[iu][hi] - table.logit_mu[iu][hi - 1]) / dt).max(0.0),
                )
            } else {
                (0.0, 0.0)
            };
            for ip in (0..lo).rev() {
                table.logit_mu[iu][ip] = (table.logit_mu[iu][lo]
                    + slope_lo * (self.p_logits[ip] - self.p_logits[lo]))
                    .clamp(-LOGIT_CAP, LOGIT_CAP);
            }
            for ip in hi + 1..gp {
                table.logit_mu[iu][ip] = (table.logit_mu[iu][hi]
                    + slope_hi * (self.p_logits[ip] - self.p_logits[hi]))
                    .clamp(-LOGIT_CAP, LOGIT_CAP);
            }
        }
    }

    /// Alternating PAVA in probability space: u-direction under the marginal
    /// signal weights, p-direction uniform, until both directions are clean.
    fn project_monotone_weighted(&self, table: &mut PosteriorTable, wu: &[Real]) {
        let gu = table.u_nodes.len();
        let gp = table.p_logits.len();
        let mut probs: Vec<Vec<Real>> = table
            .logit_mu
            .iter()
            .map(|row| row.iter().map(|&z| logistic(z)).collect())
            .collect();
        let ones = vec![1.0; gp];
        let mut col = vec![0.0; gu];
        for _ in 0..10 {
            for ip in 0..gp {
                for iu in 0..gu {
                    col[iu] = probs[iu][ip];
                }
                pava_nondecreasing(&mut col, wu);
                for iu in 0..gu {
                    probs[iu][ip] = col[iu];
                }
            }
            for iu in 0..gu {
                pava_nondecreasing(&mut probs[iu], &ones);
            }
            let clean = count_violations(&probs, 1e-15) == 0;
            if clean {
                break;
            }
        }
        for iu in 0..gu {
            for ip in 0..gp {
                table.logit_mu[iu][ip] = logit(probs[iu][ip]).clamp(-LOGIT_CAP, LOGIT_CAP);
            }
        }
    }

    /// project_monotone as a standalone operation on a table (uses agent-0
    /// marginal weights in the u direction).
    pub fn project_monotone(&self, table: &mut PosteriorTable) {
        self.project_monotone_weighted(table, &self.u_weights[0]);
    }

    /// Per-cell market clearing with posteriors frozen at the old cell price.
    /// Returns the new logit tensor and a flagged-cell count.
    pub fn clear_tensor(
        &self,
        tables: &[PosteriorTable],
        old_logits: &[Real],
    ) -> Result<Vec<Real>> {
        let g = self.g();
        let groups = &self.cfg.groups;
        let cells: Vec<(Real, bool)> = (0..g * g * g)
            .into_par_iter()
            .map(|flat| {
                let (i, j, l) = (flat / (g * g), (flat / g) % g, flat % g);
                let t_old = old_logits[flat];
                let zmus = [
                    tables[0].interp_at_node(i, t_old),
                    tables[1].interp_at_node(j, t_old),
                    tables[2].interp_at_node(l, t_old),
                ];
                let f = |t: Real| {
                    let p = logistic(t);
                    let mut z = -self.cfg.supply;
                    for (k, gr) in groups.iter().enumerate() {
                        z += match gr.pref {
                            Preference::Cara { alpha } => (zmus[k] - t) / alpha,
                            Preference::Crra { gamma } => {
                                demand_crra_z(gamma, gr.wealth, zmus[k] - t, p)
                            }
                        };
                    }
                    z
                };
                // expanding bracket around the warm start
                let mut half = 2.0;
                loop {
                    let (lo, hi) = (
                        (t_old - half).max(-LOGIT_BRACKET),
                        (t_old + half).min(LOGIT_BRACKET),
                    );
                    if f(lo) >= 0.0 && f(hi) <= 0.0 {
                        return (brent_decreasing(lo, hi, 1e-13, 300, f), false);
                    }
                    if lo <= -LOGIT_BRACKET && hi >= LOGIT_BRACKET {
                        return (t_old, true);
                    }
                    half *= 4.0;
                }
            })
            .collect();
        let flagged = cells.iter().filter(|c| c.1).count();
        if flagged * 20 > g * g * g {
            return Err(Error::AbortedIteration(format!(
                "{flagged} of {} cells failed to clear",
                g * g * g
            )));
        }
        let mut out: Vec<Real> = cells.into_iter().map(|c| c.0).collect();
        if self.homogeneous {
            out = symmetrise_logits(&out, g);
        }
        Ok(out)
    }

    /// One full map application at bandwidth `band`: fresh tables from the
    /// tensor, then cleared prices at the old levels. Returns the next tensor,
    /// the tables of the *input* tensor, and the active-cell mask.
    pub fn apply(&self, tensor: &[Real], band: Real) -> Result<(Vec<Real>, Vec<PosteriorTable>)> {
        let tables = self.bayes_tables(tensor, band);
        let next = self.clear_tensor(&tables, tensor)?;
        Ok((next, tables))
    }
}

/// Average a flattened G³ logit tensor over the six index permutations.
pub fn symmetrise_logits(t: &[Real], g: usize) -> Vec<Real> {
    let idx = |i: usize, j: usize, l: usize| (i * g + j) * g + l;
    let mut out = vec![0.0; t.len()];
    for i in 0..g {
        for j in 0..g {
            for l in 0..g {
                out[idx(i, j, l)] = (t[idx(i, j, l)]
                    + t[idx(i, l, j)]
                    + t[idx(j, i, l)]
                    + t[idx(j, l, i)]
                    + t[idx(l, i, j)]
                    + t[idx(l, j, i)])
                    / 6.0;
            }
        }
    }
    out
}

/// symmetrise as the spec's standalone tensor operation (probability space).
pub fn symmetrise(tensor: &PriceTensor, cfg: &MarketConfig) -> Result<PriceTensor> {
    if !cfg.is_homogeneous() {
        return Err(Error::InvalidConfig(
            "symmetrisation requires homogeneous agent groups".into(),
        ));
    }
    let logits = symmetrise_logits(&tensor.logits(), tensor.size);
    Ok(PriceTensor { size: tensor.size, p: logits.iter().map(|&t| logistic(t)).collect() })
}

/// Evaluate converged posteriors and the clearing price at a signal triple,
/// interpolating the tables; the price solves clearing self-consistently from
/// a trilinear warm start on the logit tensor.
pub fn posteriors_at(
    problem: &ReeProblem,
    solution: &ReeSolution,
    us: [Real; 3],
) -> ([Real; 3], Real) {
    let g = problem.g();
    let logits: Vec<Real> = solution.tensor.p.iter().map(|&p| logit(p)).collect();
    // trilinear interpolation of the logit tensor
    let du = problem.grid.nodes[1] - problem.grid.nodes[0];
    let coord = |u: Real| {
        let x = (u - problem.grid.nodes[0]) / du;
        let i0 = (x.floor() as isize).clamp(0, g as isize - 2) as usize;
        (i0, (x - i0 as Real).clamp(0.0, 1.0))
    };
    let (ci, cj, cl) = (coord(us[0]), coord(us[1]), coord(us[2]));
    let mut t = 0.0;
    for (a, wa) in [(0usize, 1.0 - ci.1), (1, ci.1)] {
        for (b, wb) in [(0usize, 1.0 - cj.1), (1, cj.1)] {
            for (c, wc) in [(0usize, 1.0 - cl.1), (1, cl.1)] {
                t += wa * wb * wc * logits[problem.flat(ci.0 + a, cj.0 + b, cl.0 + c)];
            }
        }
    }
    // frozen-posterior self-consistency loop (stationary under CARA identity)
    for _ in 0..80 {
        let zmus = [
            solution.tables[0].interp(us[0], t),
            solution.tables[1].interp(us[1], t),
            solution.tables[2].interp(us[2], t),
        ];
        let f = |tt: Real| {
            let p = logistic(tt);
            let mut z = -problem.cfg.supply;
            for (k, gr) in problem.cfg.groups.iter().enumerate() {
                z += match gr.pref {
                    Preference::Cara { alpha } => (zmus[k] - tt) / alpha,
                    Preference::Crra { gamma } => demand_crra_z(gamma, gr.wealth, zmus[k] - tt, p),
                };
            }
            z
        };
        let tn = brent_decreasing(-LOGIT_BRACKET, LOGIT_BRACKET, 1e-13, 300, f);
        let done = (tn - t).abs() < 1e-12;
        t = tn;
        if done {
            break;
        }
    }
    let mus = [
        logistic(solution.tables[0].interp(us[0], t)),
        logistic(solution.tables[1].interp(us[1], t)),
        logistic(solution.tables[2].interp(us[2], t)),
    ];
    (mus, logistic(t))
}

/// Sign summary of one traced level in the curvature report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureSign {
    Convex,
    Concave,
    Flat,
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelCurvature {
    pub level: Real,
    pub crossings: usize,
    pub max_abs_second_difference: Real,
    pub sign: CurvatureSign,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub levels: Vec<LevelCurvature>,
    /// Approximate level where the curvature sign flips, when it does.
    pub critical_level: Option<Real>,
}

/// contour_curvature_report: second differences of the traced u_b-vs-u_a
/// curve per level; levels with fewer than 3 row crossings are skipped.
pub fn contour_curvature_report(
    tensor: &PriceTensor,
    grid: &SignalGrid,
    own_index: usize,
    levels: &[Real],
) -> CurvatureReport {
    let g = grid.size;
    let logits: Vec<Real> = tensor.p.iter().map(|&p| logit(p)).collect();
    let getter = |a: usize, b: usize| logits[(own_index * g + a) * g + b];
    let view = SliceView { get: &getter, size: g };
    let mut out = Vec::new();
    for &p_level in levels {
        let tr = trace_contour(&view, &grid.nodes, logit(p_level));
        // one crossing per row, ordered by the row coordinate
        let mut pts: Vec<(Real, Real)> = tr
            .crossings
            .iter()
            .filter(|c| c.sweep == Sweep::Row)
            .map(|c| (grid.nodes[c.line], c.coord))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pts.len() < 3 {
            continue;
        }
        let mut max_dd: Real = 0.0;
        let (mut pos, mut neg) = (0usize, 0usize);
        for w in pts.windows(3) {
            let h1 = w[1].0 - w[0].0;
            let h2 = w[2].0 - w[1].0;
            let dd = ((w[2].1 - w[1].1) / h2 - (w[1].1 - w[0].1) / h1) / (0.5 * (h1 + h2));
            max_dd = max_dd.max(dd.abs());
            if dd > 1e-8 {
                pos += 1;
            } else if dd < -1e-8 {
                neg += 1;
            }
        }
        let sign = match (pos, neg) {
            (0, 0) => CurvatureSign::Flat,
            (_, 0) => CurvatureSign::Convex,
            (0, _) => CurvatureSign::Concave,
            _ => CurvatureSign::Mixed,
        };
        out.push(LevelCurvature {
            level: p_level,
            crossings: pts.len(),
            max_abs_second_difference: max_dd,
            sign,
        });
    }
    let mut critical = None;
    for w in out.windows(2) {
        let flip = matches!(
            (w[0].sign, w[1].sign),
            (CurvatureSign::Convex, CurvatureSign::Concave)
                | (CurvatureSign::Concave, CurvatureSign::Convex)
        );
        if flip {
            critical = Some(0.5 * (w[0].level + w[1].level));
        }
    }
    CurvatureReport { levels: out, critical_level: critical }
}

/// Solve the contour fixed point. See the module docs for the phases.
pub fn solve_ree(
    cfg: &MarketConfig,
    grid: &SignalGrid,
    solver: &SolverConfig,
    seed: Seed,
) -> Result<(ReeProblem, ReeSolution)> {
    let problem = ReeProblem::new(cfg.clone(), grid.clone(), solver.clone())?;
    let solution = solver::run(&problem, seed)?;
    Ok((problem, solution))
}

/// Log state-conditional density of an off-grid point, re-exported for the
/// welfare layer's level-surface conditioning.
pub fn peer_log_density(tau: Real, v: u8, u: Real) -> Real {
    log_density(tau, v, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn symmetrise_examples() {
        let g = make_grid(5, 2.0).unwrap();
        let cfg = MarketConfig::homogeneous_crra(1.0, 2.0, 3);
        // P[i,j,l] = Λ(u_i): symmetrised logit = (u_i+u_j+u_l)/3
        let mut p = vec![0.0; 125];
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..5 {
                    p[(i * 5 + j) * 5 + l] = logistic(g.nodes[i]);
                }
            }
        }
        let t = PriceTensor { size: 5, p };
        let s = symmetrise(&t, &cfg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..5 {
                    let want = (g.nodes[i] + g.nodes[j] + g.nodes[l]) / 3.0;
                    assert_abs_diff_eq!(logit(s.at(i, j, l)), want, epsilon = 1e-12);
                }
            }
        }
        let s2 = symmetrise(&s, &cfg).unwrap();
        for (a, b) in s.p.iter().zip(&s2.p) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        // heterogeneous groups are rejected
        let mut het = cfg.clone();
        het.groups[0].tau = 3.0;
        assert!(symmetrise(&t, &het).is_err());
    }

    #[test]
    fn posterior_table_interp_extrapolates_linearly() {
        let table = PosteriorTable {
            u_nodes: vec![-1.0, 0.0, 1.0],
            p_logits: vec![-2.0, 0.0, 2.0],
            logit_mu: vec![vec![-2.0, 0.0, 2.0]; 3], // identity in p
            active: vec![vec![true; 3]; 3],
        };
        assert_abs_diff_eq!(table.interp_at_node(1, 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(table.interp_at_node(1, 5.0), 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(table.interp_at_node(1, -7.0), -7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(table.interp(0.5, 1.2), 1.2, epsilon = 1e-14);
    }
}
