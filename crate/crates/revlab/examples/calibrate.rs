//! Scratch driver for solver experiments: deficits/slopes/posteriors across
//! bandwidths, grids and risk aversions.

use revlab::clearing::MarketConfig;
use revlab::grid::{joint_weights, make_grid};
use revlab::metrics::revelation_deficit;
use revlab::ree::{posteriors_at, solve_ree, Seed, SolverConfig};

fn run_one(gamma: f64, tau: f64, g: usize, band_final: f64, cara: bool) {
    let cfg = if cara {
        MarketConfig::homogeneous_cara(gamma, tau, 3)
    } else {
        MarketConfig::homogeneous_crra(gamma, tau, 3)
    };
    let grid = make_grid(g, 4.0).unwrap();
    let mut solver = SolverConfig { band_final, ..SolverConfig::default() };
    if let Ok(b) = std::env::var("REVLAB_BAND_INIT") {
        solver.band_init_spacings = b.parse().unwrap();
    }
    let t0 = std::time::Instant::now();
    match solve_ree(&cfg, &grid, &solver, Seed::NoLearning) {
        Ok((problem, sol)) => {
            let w = joint_weights(&grid, &cfg.taus()).unwrap();
            let rep = revelation_deficit(&sol.tensor, &grid, &cfg.taus(), &w).unwrap();
            let (mus, price) = posteriors_at(&problem, &sol, [1.0, -1.0, 1.0]);
            if std::env::var("REVLAB_DEBUG").is_ok() {
                let h = &sol.residual_history;
                let tail: Vec<String> = h.iter().rev().take(24).rev().map(|r| format!("{r:.2e}")).collect();
                println!("  history tail: {}", tail.join(" "));
            }
            println!(
                "g={g:2} gamma={gamma:4} tau={tau} band={band_final:5.3} {} | deficit={:.5} slope={:.4} res={:.2e} viol={} iters={} | mu=({:.4},{:.4},{:.4}) p={:.4} | {:?}",
                if cara { "cara" } else { "crra" },
                rep.deficit,
                rep.slope,
                sol.diagnostics.residual_inf,
                sol.diagnostics.mono_violations,
                sol.iterations,
                mus[0],
                mus[1],
                mus[2],
                price,
                t0.elapsed()
            );
        }
        Err(e) => println!("g={g} gamma={gamma} band={band_final}: ERROR {e}"),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("scan");
    match mode {
        // bandwidth scan at the canonical cell
        "scan" => {
            for band in [1.3, 1.1, 1.0, 0.9, 0.8, 0.6] {
                run_one(0.5, 2.0, 14, band, false);
            }
        }
        "g20" => {
            for band in [1.1, 1.0, 0.9] {
                run_one(0.5, 2.0, 20, band, false);
            }
        }
        "cara" => {
            run_one(1.0, 2.0, 14, 0.0, true);
            run_one(1.0, 2.0, 14, 1.0, true);
        }
        "zero" => {
            run_one(0.5, 2.0, 14, 0.0, false);
        }
        "one" => {
            let g: usize = args[2].parse().unwrap();
            let gamma: f64 = args[3].parse().unwrap();
            let band: f64 = args[4].parse().unwrap();
            let cara = args.get(5).map(|s| s == "cara").unwrap_or(false);
            run_one(gamma, 2.0, g, band, cara);
        }
        "ladder" => {
            use revlab::ree::{Checkpoint, ReeProblem, Seed};
            let gamma: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.5);
            let cfg = MarketConfig::homogeneous_crra(gamma, 2.0, 3);
            let mut solver = SolverConfig { band_final: 0.0, ..SolverConfig::default() };
            solver.band_init_spacings = 0.0;
            let mut prev: Option<(usize, Vec<f64>)> = None;
            for g in [10usize, 12, 14, 16, 18, 20] {
                let grid = make_grid(g, 4.0).unwrap();
                let seed = match &prev {
                    None => Seed::NoLearning,
                    Some((g0, logits)) => {
                        // trilinear prolongation of the logit tensor
                        let old = make_grid(*g0, 4.0).unwrap();
                        let du = old.spacing();
                        let mut t = vec![0.0; g * g * g];
                        let co = |u: f64| {
                            let x = (u - old.nodes[0]) / du;
                            let i0 = (x.floor() as isize).clamp(0, *g0 as isize - 2) as usize;
                            (i0, (x - i0 as f64).clamp(0.0, 1.0))
                        };
                        for i in 0..g {
                            for j in 0..g {
                                for l in 0..g {
                                    let (ci, cj, cl) =
                                        (co(grid.nodes[i]), co(grid.nodes[j]), co(grid.nodes[l]));
                                    let mut acc = 0.0;
                                    for (a, wa) in [(0, 1.0 - ci.1), (1, ci.1)] {
                                        for (b, wb) in [(0, 1.0 - cj.1), (1, cj.1)] {
                                            for (c, wc) in [(0, 1.0 - cl.1), (1, cl.1)] {
                                                acc += wa * wb * wc
                                                    * logits[((ci.0 + a) * g0 + cj.0 + b) * g0
                                                        + cl.0 + c];
                                            }
                                        }
                                    }
                                    t[(i * g + j) * g + l] = acc;
                                }
                            }
                        }
                        Seed::Custom(Checkpoint {
                            version: 1,
                            u_nodes: grid.nodes.clone(),
                            p_logits: vec![],
                            mu_tables: vec![],
                            tensor_logits: t,
                            iterations: 0,
                            residual_history: vec![],
                            band: 0.0,
                        })
                    }
                };
                let t0 = std::time::Instant::now();
                match solve_ree(&cfg, &grid, &solver, seed) {
                    Ok((problem, sol)) => {
                        let w = joint_weights(&grid, &cfg.taus()).unwrap();
                        let rep = revelation_deficit(&sol.tensor, &grid, &cfg.taus(), &w).unwrap();
                        let (mus, price) = posteriors_at(&problem, &sol, [1.0, -1.0, 1.0]);
                        println!(
                            "ladder g={g:2} deficit={:.5} slope={:.4} res={:.2e} mu2={:.4} p={:.4} {:?}",
                            rep.deficit, rep.slope, sol.diagnostics.residual_inf, mus[1], price,
                            t0.elapsed()
                        );
                        let logits: Vec<f64> =
                            sol.tensor.p.iter().map(|&p| revlab::numerics::logit(p)).collect();
                        prev = Some((g, logits));
                    }
                    Err(e) => {
                        println!("ladder g={g}: ERROR {e}");
                        break;
                    }
                }
            }
        }
        "ansatz" => {
            use revlab::ree::{Checkpoint, Seed};
            let g: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
            let gamma: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.5);
            let beta: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.52);
            let cfg = MarketConfig::homogeneous_crra(gamma, 2.0, 3);
            let grid = make_grid(g, 4.0).unwrap();
            let mut t = vec![0.0; g * g * g];
            for i in 0..g {
                for j in 0..g {
                    for l in 0..g {
                        let ts = 2.0 * (grid.nodes[i] + grid.nodes[j] + grid.nodes[l]);
                        t[(i * g + j) * g + l] = beta * ts;
                    }
                }
            }
            let seed = Seed::Custom(Checkpoint {
                version: 1,
                u_nodes: grid.nodes.clone(),
                p_logits: vec![],
                mu_tables: vec![],
                tensor_logits: t,
                iterations: 0,
                residual_history: vec![],
                band: 0.0,
            });
            let mut solver = SolverConfig { band_final: 0.0, ..SolverConfig::default() };
            solver.band_init_spacings = 0.0;
            solver.max_iter = 80;
            let t0 = std::time::Instant::now();
            match solve_ree(&cfg, &grid, &solver, seed) {
                Ok((problem, sol)) => {
                    let w = joint_weights(&grid, &cfg.taus()).unwrap();
                    let rep = revelation_deficit(&sol.tensor, &grid, &cfg.taus(), &w).unwrap();
                    let (mus, price) = posteriors_at(&problem, &sol, [1.0, -1.0, 1.0]);
                    println!(
                        "ansatz g={g} gamma={gamma} beta={beta}: deficit={:.5} slope={:.4} res={:.2e} mu=({:.4},{:.4},{:.4}) p={:.4} {:?}",
                        rep.deficit, rep.slope, sol.diagnostics.residual_inf,
                        mus[0], mus[1], mus[2], price, t0.elapsed()
                    );
                }
                Err(e) => println!("ansatz: ERROR {e}"),
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
