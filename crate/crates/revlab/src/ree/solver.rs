//! Fixed-point driver: bandwidth-annealed damped Picard with Anderson mixing,
//! then Jacobian-free Newton–Krylov polishing at the final bandwidth.

use super::{PosteriorTable, ReeProblem, ReeSolution, Seed};
use crate::clearing::PriceTensor;
use crate::metrics::diagnostics;
use crate::numerics::logistic;
use crate::{Real, Result};

/// Max |Λ(a) − Λ(b)| over two logit tensors.
fn prob_distance(a: &[Real], b: &[Real]) -> Real {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (logistic(x) - logistic(y)).abs())
        .fold(0.0, Real::max)
}

/// Residual between consecutive posterior tables over jointly active cells.
fn table_distance(prev: &[PosteriorTable], next: &[PosteriorTable]) -> Real {
    let mut d: Real = 0.0;
    for (tp, tn) in prev.iter().zip(next) {
        for iu in 0..tp.u_nodes.len() {
            for ip in 0..tp.p_logits.len() {
                if tp.active[iu][ip] && tn.active[iu][ip] {
                    d = d.max((tp.mu(iu, ip) - tn.mu(iu, ip)).abs());
                }
            }
        }
    }
    d
}

/// Dense least squares via ridge-stabilised normal equations; shapes are tiny
/// (Anderson memory or a GMRES restart window).
fn lstsq(cols: &[Vec<Real>], rhs: &[Real]) -> Vec<Real> {
    let m = cols.len();
    if m == 0 {
        return Vec::new();
    }
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        for j in i..m {
            let dot: Real = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
            a[i][j] = dot;
            a[j][i] = dot;
        }
        b[i] = cols[i].iter().zip(rhs).map(|(x, y)| x * y).sum();
        a[i][i] += 1e-12 * (1.0 + a[i][i]);
    }
    // Gaussian elimination with partial pivoting
    for p in 0..m {
        let mut best = p;
        for r in p + 1..m {
            if a[r][p].abs() > a[best][p].abs() {
                best = r;
            }
        }
        a.swap(p, best);
        b.swap(p, best);
        if a[p][p].abs() < 1e-300 {
            continue;
        }
        for r in p + 1..m {
            let f = a[r][p] / a[p][p];
            for c in p..m {
                a[r][c] -= f * a[p][c];
            }
            b[r] -= f * b[p];
        }
    }
    let mut x = vec![0.0; m];
    for p in (0..m).rev() {
        let mut s = b[p];
        for c in p + 1..m {
            s -= a[p][c] * x[c];
        }
        x[p] = if a[p][p].abs() < 1e-300 { 0.0 } else { s / a[p][p] };
    }
    x
}

struct Anderson {
    memory: usize,
    xs: Vec<Vec<Real>>,
    gs: Vec<Vec<Real>>,
}

impl Anderson {
    fn new(memory: usize) -> Self {
        Anderson { memory, xs: Vec::new(), gs: Vec::new() }
    }

    fn reset(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Push (x, g(x)) and return the mixed next iterate.
    fn step(&mut self, x: &[Real], g: &[Real]) -> Vec<Real> {
        if self.memory == 0 {
            return g.to_vec();
        }
        self.xs.push(x.to_vec());
        self.gs.push(g.to_vec());
        if self.xs.len() > self.memory + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let n = self.xs.len();
        if n < 3 {
            return g.to_vec();
        }
        let f: Vec<Vec<Real>> = self
            .xs
            .iter()
            .zip(&self.gs)
            .map(|(xi, gi)| xi.iter().zip(gi).map(|(a, b)| b - a).collect())
            .collect();
        let cols: Vec<Vec<Real>> = (0..n - 1)
            .map(|i| f[i + 1].iter().zip(&f[i]).map(|(a, b)| a - b).collect())
            .collect();
        let theta = lstsq(&cols, &f[n - 1]);
        let mut out = self.gs[n - 1].clone();
        for (i, &th) in theta.iter().enumerate() {
            for (o, (gi1, gi0)) in out.iter_mut().zip(self.gs[i + 1].iter().zip(&self.gs[i])) {
                *o -= th * (gi1 - gi0);
            }
        }
        out
    }
}

fn norm2(v: &[Real]) -> Real {
    v.iter().map(|x| x * x).sum::<Real>().sqrt()
}

/// GMRES(restart) for J·dx = rhs with a matrix-free operator.
fn gmres(
    matvec: &mut dyn FnMut(&[Real]) -> Vec<Real>,
    rhs: &[Real],
    restart: usize,
    max_iters: usize,
    rel_tol: Real,
) -> Vec<Real> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(rhs).max(1e-300);
    let mut used = 0;
    while used < max_iters {
        let ax = matvec(&x);
        let r: Vec<Real> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta / bnorm < rel_tol {
            break;
        }
        let m = restart.min(max_iters - used);
        let mut q: Vec<Vec<Real>> = Vec::with_capacity(m + 1);
        q.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cols_done = 0;
        for j in 0..m {
            let mut w = matvec(&q[j]);
            used += 1;
            for (i, qi) in q.iter().enumerate() {
                let dot: Real = qi.iter().zip(&w).map(|(a, b)| a * b).sum();
                h[i][j] = dot;
                for (wv, qv) in w.iter_mut().zip(qi) {
                    *wv -= dot * qv;
                }
            }
            let nrm = norm2(&w);
            h[j + 1][j] = nrm;
            cols_done = j + 1;
            if nrm < 1e-14 {
                break;
            }
            q.push(w.iter().map(|v| v / nrm).collect());
            if used >= max_iters {
                break;
            }
        }
        // solve min ‖βe₁ − H y‖ over the Krylov basis
        let rows = cols_done + 1;
        let cols: Vec<Vec<Real>> = (0..cols_done)
            .map(|j| (0..rows).map(|i| h[i][j]).collect())
            .collect();
        let mut e1 = vec![0.0; rows];
        e1[0] = beta;
        let y = lstsq(&cols, &e1);
        for (j, &yj) in y.iter().enumerate() {
            for (xi, qv) in x.iter_mut().zip(&q[j]) {
                *xi += yj * qv;
            }
        }
    }
    x
}

pub(super) fn run(problem: &ReeProblem, seed: Seed) -> Result<ReeSolution> {
    let s = &problem.solver;
    let dt = problem.p_logits[1] - problem.p_logits[0];
    let mut x: Vec<Real> = match &seed {
        Seed::NoLearning => problem.seed_state()?,
        Seed::Custom(ck) => ck.tensor_logits.clone(),
    };
    let mut history: Vec<Real> = Vec::new();
    let mut iterations = 0usize;
    let mut diverged = false;

    // annealing ladder down to the final bandwidth; the ladder floor is one
    // grid spacing — below that the banded map is indistinguishable from the
    // exact one at lattice resolution, so the solver jumps straight to the
    // final bandwidth and lets Newton take over
    let mut bands: Vec<Real> = Vec::new();
    if s.band_init_spacings > 0.0 {
        let floor = s.band_final.max(dt);
        let mut band = s.band_init_spacings * dt;
        while band > floor * 1.001 {
            bands.push(band);
            band *= 0.5;
        }
        if floor > s.band_final {
            bands.push(floor);
        }
    }
    bands.push(s.band_final);

    let mut prev_tables: Option<Vec<PosteriorTable>> = None;
    let mut best_x = x.clone();
    let mut best_res = Real::INFINITY;
    let n_stages = bands.len();

    for (stage, &band) in bands.iter().enumerate() {
        let last_stage = stage + 1 == n_stages;
        let stage_tol = if last_stage { s.picard_tol } else { s.picard_tol.max(1e-7) };
        let stage_cap = if last_stage {
            s.max_iter.saturating_sub(iterations)
        } else {
            (s.max_iter / (n_stages + 1)).max(40)
        };
        let mut anderson = Anderson::new(s.anderson_memory);
        let mut grow_streak = 0usize;
        let mut stage_best = Real::INFINITY;
        let mut stall = 0usize;
        for _ in 0..stage_cap {
            let (next, tables) = problem.apply(&x, band)?;
            iterations += 1;
            let res_p = prob_distance(&next, &x);
            let res_mu = prev_tables
                .as_ref()
                .map(|pt| table_distance(pt, &tables))
                .unwrap_or(Real::INFINITY);
            let res = res_p.max(if res_mu.is_finite() { res_mu } else { res_p });
            history.push(res);
            prev_tables = Some(tables);
            if last_stage {
                if res < best_res {
                    best_res = res;
                    best_x = x.clone();
                }
                if res > history[history.len().saturating_sub(2).max(0)] {
                    grow_streak += 1;
                    if grow_streak >= 5 && res > 10.0 * best_res {
                        diverged = true;
                        break;
                    }
                } else {
                    grow_streak = 0;
                }
            }
            if res < stage_tol {
                // damped move, then leave the stage
                let g: Vec<Real> =
                    x.iter().zip(&next).map(|(a, b)| a + s.damping * (b - a)).collect();
                x = g;
                break;
            }
            let g: Vec<Real> =
                x.iter().zip(&next).map(|(a, b)| a + s.damping * (b - a)).collect();
            let cand = anderson.step(&x, &g);
            if res > 50.0 * stage_best && stage_best.is_finite() {
                anderson.reset();
                x = g;
            } else {
                x = cand;
            }
            // stall detection: hand over to Newton once Picard stops making
            // headway on this stage
            if res > 0.98 * stage_best {
                stall += 1;
                if last_stage && stall >= 25 {
                    break;
                }
            } else {
                stall = 0;
            }
            stage_best = stage_best.min(res);
        }
        if diverged {
            break;
        }
    }

    // Newton phase at the final bandwidth
    let band = s.band_final;
    if !diverged {
        // residual of the delayed map in logit units, plus the next tensor
        let f_of = |xv: &[Real]| -> Result<(Vec<Real>, Vec<Real>)> {
            let (next, _) = problem.apply(xv, band)?;
            let f = xv.iter().zip(&next).map(|(a, b)| a - b).collect();
            Ok((f, next))
        };
        let (mut fx, mut next) = f_of(&x)?;
        let mut res = prob_distance(&next, &x);
        if res < best_res {
            best_res = res;
            best_x = x.clone();
        }
        for _ in 0..s.newton_max_steps {
            if res < s.strict_tol {
                break;
            }
            let fnorm = norm2(&fx);
            if fnorm == 0.0 {
                break;
            }
            let eps0 = 1e-7 * (1.0 + norm2(&x));
            let x_base = x.clone();
            let fx_base = fx.clone();
            let mut matvec = |v: &[Real]| -> Vec<Real> {
                let nv = norm2(v).max(1e-300);
                let eps = eps0 / nv;
                let xp: Vec<Real> = x_base.iter().zip(v).map(|(a, b)| a + eps * b).collect();
                match f_of(&xp) {
                    Ok((fp, _)) => fp.iter().zip(&fx_base).map(|(a, b)| (a - b) / eps).collect(),
                    Err(_) => v.to_vec(),
                }
            };
            let rhs: Vec<Real> = fx.iter().map(|v| -v).collect();
            let dx = gmres(&mut matvec, &rhs, s.gmres_restart, s.gmres_max_iters, 1e-4);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=s.backtrack_max {
                let xt: Vec<Real> = x.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
                if let Ok((ft, nt)) = f_of(&xt) {
                    iterations += 1;
                    if norm2(&ft) < (1.0 - 1e-4 * step) * fnorm {
                        x = xt;
                        fx = ft;
                        next = nt;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            res = prob_distance(&next, &x);
            history.push(res);
            if res < best_res {
                best_res = res;
                best_x = x.clone();
            }
        }
    }

    // final bookkeeping at the best iterate: fixed-point consistency residual
    let x = best_x;
    let tables = problem.bayes_tables(&x, band);
    let (next, _) = problem.apply(&x, band)?;
    let tables_next = problem.bayes_tables(&next, band);
    let residual_inf = table_distance(&tables, &tables_next).max(prob_distance(&next, &x));
    let violations: usize = tables.iter().map(|t| t.violations()).sum();
    let diag = diagnostics(residual_inf, violations, problem.solver.strict_tol, diverged);
    let tensor = PriceTensor {
        size: problem.grid.size,
        p: x.iter().map(|&t| logistic(t)).collect(),
    };
    Ok(ReeSolution {
        tables,
        tensor,
        diagnostics: diag,
        residual_history: history,
        iterations,
        band,
    })
}
