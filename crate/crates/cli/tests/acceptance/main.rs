//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails. `SNL_ACCEPTANCE=1,4,9` runs a subset.

mod oracle;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use snl_cli::config::{ExperimentConfig, MethodSettings, WarmStartSpec};
use snl_cli::experiments::{reach_analysis, run_comparison, run_early_termination_study, Start};
use snl_core::admm::{admm_persistent_lifted_per_sensor, init_cold_admm, run_admm_with_state};
use snl_core::design::{
    sinkhorn_knopp, sinkhorn_knopp_decentralized, two_block_params, validate_params, DEFAULT_SK_MAX_ITER,
};
use snl_core::instance::{build_adjacency, generate_instance};
use snl_core::prox::{build_g_prox_data, g_prox, psd_project, InnerSchedule};
use snl_core::solver::EarlyStopOptions;
use snl_core::splitting::{init_cold_with, persistent_lifted_per_sensor, run_with_state};
use snl_core::{DesignError, GeneratorConfig, LiftedPoint, Method, Mode, ProblemInstance, SolverOptions};

use oracle::{jacobi_eigenvalues, random_connected, random_orthogonal, ProxToy};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut min_lambda2 = f64::INFINITY;
    let mut failures = Vec::new();
    for g in 0..100 {
        let n = rng.random_range(4..=100);
        let extra = rng.random_range(0.0..0.15);
        let adj = random_connected(&mut rng, n, extra);
        let params = two_block_params(&adj, 1e-12).unwrap();
        let report = validate_params(&params, &adj, 1e-8);
        if !report.passed {
            failures.push(format!("graph {g}: {:?}", report.failures()));
        }

        let (z, w, l) = (params.z(), params.w(), params.l());
        let p = 2 * n;
        let ones = DVector::from_element(p, 1.0);
        let mut r = 0.0f64;
        r = r.max((z - z.transpose()).amax());
        r = r.max((w - w.transpose()).amax());
        r = r.max((w * &ones).amax());
        r = r.max((ones.dot(&(z * &ones))).abs());
        for i in 0..p {
            r = r.max((z[(i, i)] - 2.0).abs());
            for j in i..p {
                r = r.max(l[(i, j)].abs());
            }
        }
        r = r.max((DMatrix::identity(p, p) * 2.0 - l - l.transpose() - z).amax());
        let zw = jacobi_eigenvalues(&(z - w));
        r = r.max((-zw[0]).max(0.0));
        let we = jacobi_eigenvalues(w);
        r = r.max(we[0].abs());
        min_lambda2 = min_lambda2.min(we[1]);
        // Zero-pattern audit against the graph, all four blocks.
        for i in 0..n {
            for j in 0..n {
                if i != j && !adj.contains(i, j) {
                    for (a, b) in [(i, j), (i, j + n), (i + n, j), (i + n, j + n)] {
                        r = r.max(w[(a, b)].abs()).max(z[(a, b)].abs());
                    }
                }
            }
        }
        if r > 1e-8 || we[1] <= 1e-8 {
            failures.push(format!("graph {g}: independent residual {r:e}, lambda2 {:e}", we[1]));
        }
        worst = worst.max(r);
    }
    let el = start.elapsed();
    outcome(
        failures.is_empty() && within(el, 30),
        format!(
            "100 graphs, worst independent residual {worst:.2e}, min lambda2(W) {min_lambda2:.2e}, {} failures {:?}, {:.1}s",
            failures.len(),
            failures.first(),
            el.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut sum_dev = 0.0f64;
    let mut agree = 0.0f64;
    let mut ok = true;
    for _ in 0..20 {
        let n = rng.random_range(3..=60);
        let extra = rng.random_range(0.0..0.2);
        let adj = random_connected(&mut rng, n, extra);
        let api = adj.to_dense() + DMatrix::identity(n, n);
        let s = sinkhorn_knopp(&api, 1e-12, DEFAULT_SK_MAX_ITER).unwrap();
        for i in 0..n {
            sum_dev = sum_dev.max((s.row(i).sum() - 1.0).abs());
            sum_dev = sum_dev.max((s.column(i).sum() - 1.0).abs());
        }
        match sinkhorn_knopp_decentralized(&adj, DEFAULT_SK_MAX_ITER, 1e-12) {
            Ok(b) => agree = agree.max((b.assemble() - &s).amax()),
            Err(_) => ok = false,
        }
    }
    let mut zero_row = DMatrix::from_element(4, 4, 1.0);
    zero_row.row_mut(2).fill(0.0);
    let no_support = matches!(
        sinkhorn_knopp(&zero_row, 1e-10, DEFAULT_SK_MAX_ITER),
        Err(DesignError::NoSupport(_))
    );
    outcome(
        ok && sum_dev <= 1e-10 && agree <= 1e-8 && no_support,
        format!("max sum deviation {sum_dev:.2e}, decentralized vs centralized {agree:.2e}, NoSupport on zero row: {no_support}"),
    )
}

/// Single-sensor instance with sensor 0 linked to `nb` sensors and `na`
/// anchors.
fn toy_instance(rng: &mut ChaCha8Rng, nb: usize, na: usize) -> ProblemInstance {
    let pos = DMatrix::from_fn(1 + nb, 2, |_, _| rng.random_range(0.0..1.0));
    let anchors = DMatrix::from_fn(na, 2, |_, _| rng.random_range(0.0..1.0));
    let noisy = |d: f64, rng: &mut ChaCha8Rng| (d * (1.0 + rng.random_range(-0.1..0.1))).max(0.0);
    let mut sn = vec![(1..=nb).collect::<Vec<_>>()];
    let mut dss = vec![Vec::new()];
    for j in 1..=nb {
        let d = noisy((pos.row(0) - pos.row(j)).norm(), rng);
        dss[0].push(d);
        sn.push(vec![0]);
        dss.push(vec![d]);
    }
    let mut an = vec![(0..na).collect::<Vec<_>>()];
    let mut dsa = vec![(0..na)
        .map(|k| noisy((pos.row(0) - anchors.row(k)).norm(), rng))
        .collect::<Vec<_>>()];
    for _ in 1..=nb {
        an.push(Vec::new());
        dsa.push(Vec::new());
    }
    ProblemInstance::new(2, anchors, sn, an, dss, dsa, Some(pos)).unwrap()
}

fn prox_toy(inst: &ProblemInstance, pk: &LiftedPoint, alpha: f64) -> ProxToy {
    let nb = inst.sensor_neighbors(0).len();
    let k = 3 + 2 * nb;
    let mut z0 = DVector::zeros(k);
    let mut w = DVector::zeros(k);
    z0[0] = pk.x[(0, 0)];
    z0[1] = pk.x[(0, 1)];
    w[0] = 1.0;
    w[1] = 1.0;
    z0[2] = pk.y[(0, 0)];
    w[2] = 0.5;
    for (t, &j) in inst.sensor_neighbors(0).iter().enumerate() {
        z0[3 + t] = pk.y[(j, j)];
        w[3 + t] = 0.5;
        z0[3 + nb + t] = pk.y[(0, j)];
        w[3 + nb + t] = 1.0;
    }
    let mut g = Vec::new();
    let mut h = Vec::new();
    for (t, &d) in inst.dist_ss(0).iter().enumerate() {
        let mut row = DVector::zeros(k);
        row[2] = -1.0;
        row[3 + t] = -1.0;
        row[3 + nb + t] = 2.0;
        g.push(row);
        h.push(d * d);
    }
    for (&a, &d) in inst.anchor_neighbors(0).iter().zip(inst.dist_sa(0)) {
        let ak = inst.anchors().row(a);
        let mut row = DVector::zeros(k);
        row[0] = 2.0 * ak[0];
        row[1] = 2.0 * ak[1];
        row[2] = -1.0;
        g.push(row);
        h.push(d * d - ak.norm_squared());
    }
    ProxToy { alpha, g, h, w, z0 }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut toys = 0;
    while toys < 50 {
        let nb = rng.random_range(0..=2);
        let na = rng.random_range(0..=2);
        if nb + na == 0 {
            continue;
        }
        toys += 1;
        let inst = toy_instance(&mut rng, nb, na);
        let n = inst.n();
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let y0 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let pk = LiftedPoint {
            x,
            y: (&y0 + y0.transpose()) * 0.5,
        };
        let alpha = rng.random_range(0.1..5.0);
        let mut data = build_g_prox_data(&inst, 0, 1.0);
        let got = g_prox(&mut data, &pk, alpha, 1e-12, 1_000_000).unwrap().point;

        let z = prox_toy(&inst, &pk, alpha).solve();
        let mut expect = pk.clone();
        expect.x[(0, 0)] = z[0];
        expect.x[(0, 1)] = z[1];
        expect.y[(0, 0)] = z[2];
        for (t, &j) in inst.sensor_neighbors(0).iter().enumerate() {
            expect.y[(j, j)] = z[3 + t];
            expect.y[(0, j)] = z[3 + nb + t];
            expect.y[(j, 0)] = z[3 + nb + t];
        }
        let diff = got.sub(&expect);
        let err = (diff.y.norm_squared() + 2.0 * diff.x.norm_squared()).sqrt();
        worst = worst.max(err);
    }

    // PSD projection against hand-worked cases and Q diag(λ) Qᵀ with a known
    // eigenbasis.
    let mut psd_err = 0.0f64;
    let hand = [
        (
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]),
        ),
        (
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 1.5, 1.5, 1.5]),
        ),
        (DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]), DMatrix::zeros(2, 2)),
    ];
    for (a, b) in &hand {
        psd_err = psd_err.max((psd_project(a).unwrap() - b).amax());
    }
    for _ in 0..50 {
        let k = rng.random_range(1..=9);
        let q = random_orthogonal(&mut rng, k);
        let lam: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(lam.clone())) * q.transpose();
        let b = &q * DMatrix::from_diagonal(&DVector::from_iterator(k, lam.iter().map(|v| v.max(0.0)))) * q.transpose();
        psd_err = psd_err.max((psd_project(&a).unwrap() - b).amax());
    }
    outcome(
        worst <= 1e-3 && psd_err <= 1e-10,
        format!("50 prox toys, worst weighted distance to oracle {worst:.2e}; psd_project worst entry error {psd_err:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = GeneratorConfig {
        n: 10,
        m: 3,
        ..GeneratorConfig::default()
    };
    let inst = generate_instance(&cfg, 4).unwrap();
    let adj = build_adjacency(&inst);
    let params = two_block_params(&adj, 1e-12).unwrap();
    let mut opts = SolverOptions::splitting();
    opts.max_iter = 100;
    opts.fixed_point_tol = None;
    let run_split = |mode| {
        let o = SolverOptions { mode, ..opts.clone() };
        run_with_state(&inst, &params, &o, init_cold_with(&inst, &params, &o.inner).unwrap()).unwrap()
    };
    let (ts, ss) = run_split(Mode::Serial);
    let (td, sd) = run_split(Mode::Decentralized);
    let mut diff = (ts.estimate.clone() - &td.estimate).amax();
    for (a, b) in ss.v.iter().zip(&sd.v).chain(ss.x.iter().zip(&sd.x)) {
        diff = diff.max(a.max_abs_diff(b));
    }

    let mut aopts = SolverOptions::admm();
    aopts.max_iter = 100;
    aopts.fixed_point_tol = None;
    let run_admm = |mode| {
        let o = SolverOptions { mode, ..aopts.clone() };
        run_admm_with_state(&inst, &o, init_cold_admm(&inst, &o.inner)).unwrap()
    };
    let (tas, sas) = run_admm(Mode::Serial);
    let (tad, sad) = run_admm(Mode::Decentralized);
    diff = diff.max((tas.estimate.clone() - &tad.estimate).amax());
    for (a, b) in sas.u.iter().zip(&sad.u) {
        diff = diff.max(a.max_abs_diff(b));
    }

    let sl = td.network.as_ref().unwrap();
    let al = tad.network.as_ref().unwrap();
    let non_edge = sl.non_edge_pairs(&adj).len() + al.non_edge_pairs(&adj).len();
    let el = start.elapsed();
    outcome(
        diff <= 1e-12 && non_edge == 0 && sl.rounds == 200 && al.rounds == 100 && sl.bytes == al.bytes && within(el, 60),
        format!(
            "max serial/decentralized difference {diff:.1e}; non-edge messages {non_edge}; rounds per iteration {} vs {}; bytes {} vs {}; {:.1}s",
            sl.rounds as f64 / 100.0,
            al.rounds as f64 / 100.0,
            sl.bytes,
            al.bytes,
            el.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let results: Vec<(u64, f64, f64, usize)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let inst = generate_instance(&GeneratorConfig::default(), seed).unwrap();
            let params = two_block_params(&build_adjacency(&inst), 1e-12).unwrap();
            let mut opts = SolverOptions::splitting();
            opts.max_iter = 3000;
            let state = init_cold_with(&inst, &params, &opts.inner).unwrap();
            let (trace, _) = run_with_state(&inst, &params, &opts, state).unwrap();
            let c = &trace.certificate;
            (seed, c.consensus_relative, c.dual_sum_relative.unwrap_or(f64::INFINITY), trace.iterations)
        })
        .collect();
    let worst_c = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_d = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let el = start.elapsed();
    outcome(
        worst_c <= 1e-3 && worst_d <= 1e-2 && within(el, 600),
        format!(
            "10 seeds, worst consensus {worst_c:.2e} (<= 1e-3), worst dual sum {worst_d:.2e} (<= 1e-2), max iterations {}, {:.0}s",
            results.iter().map(|r| r.3).max().unwrap(),
            el.as_secs_f64()
        ),
    )
}

fn benchmark_config(trials: usize, iterations: usize) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        iterations,
        output_dir: None,
        ..ExperimentConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = benchmark_config(50, 200);
    let r = run_comparison(&cfg).unwrap();
    let s = r.summary(Method::Splitting, Start::Cold).unwrap();
    let a = r.summary(Method::Admm, Start::Cold).unwrap();
    let violations: Vec<usize> = (0..200).filter(|&k| s.median[k] > a.median[k]).map(|k| k + 1).collect();
    let ratio50 = s.median[49] / a.median[49];
    let worst = (0..200).map(|k| s.median[k] / a.median[k]).fold(0.0, f64::max);
    let el = start.elapsed();
    println!("INFO  criterion 6: ratio at 50 is {} one half", if ratio50 <= 0.5 { "at most" } else { "above" });
    outcome(
        violations.is_empty() && ratio50 <= 0.7 && r.failures.is_empty() && within(el, 1800),
        format!(
            "50 seeds, iterations where splitting median > ADMM median: {:?}; worst ratio {worst:.3}; ratio at 50 {ratio50:.3} (<= 0.7); {:.0}s",
            violations,
            el.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        warm_start: Some(WarmStartSpec { sd: 0.2 }),
        ..benchmark_config(20, 1000)
    };
    let r = run_comparison(&cfg).unwrap();
    let reach = reach_analysis(&r, cfg.plateau_window, cfg.reach_band).unwrap();
    let med = |m, s| reach.median(m, s).unwrap();
    let (sc, sw) = (med(Method::Splitting, Start::Cold), med(Method::Splitting, Start::Warm));
    let (ac, aw) = (med(Method::Admm, Start::Cold), med(Method::Admm, Start::Warm));
    outcome(
        sw < sc && aw < ac && r.failures.is_empty(),
        format!(
            "20 seeds, median iterations to within {}x of the cold plateau: splitting warm {sw} vs cold {sc}, ADMM warm {aw} vs cold {ac}; {:.0}s",
            cfg.reach_band,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        early_stop: EarlyStopOptions {
            patience: 100,
            halt: false,
        },
        splitting: MethodSettings {
            max_iter: Some(3000),
            ..MethodSettings::default()
        },
        ..benchmark_config(100, 200)
    };
    let s = run_early_termination_study(&cfg).unwrap();
    let fired = s.trials.iter().filter(|t| t.fired_at.is_some()).count();
    println!(
        "INFO  criterion 8: median centrality early {:.4} vs converged {:.4}; monitor fired in {fired} trials",
        s.median_centrality_early, s.median_centrality_converged
    );
    outcome(
        s.trials.len() == 100 && s.win_fraction >= 0.5 && s.median_distance_early <= s.median_distance_converged,
        format!(
            "100 seeds, early stop wins {} ({:.0}%, 95% CI {:.2}-{:.2}); median mean distance early {:.5} vs converged {:.5}; {:.0}s",
            s.wins,
            100.0 * s.win_fraction,
            s.interval.0,
            s.interval.1,
            s.median_distance_early,
            s.median_distance_converged,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_9() -> Outcome {
    let inst = generate_instance(&GeneratorConfig::default(), 9).unwrap();
    let params = two_block_params(&build_adjacency(&inst), 1e-12).unwrap();
    let inner = InnerSchedule::default();
    let split_state = init_cold_with(&inst, &params, &inner).unwrap();
    let admm_state = init_cold_admm(&inst, &inner);
    let (s, a) = (persistent_lifted_per_sensor(&split_state), admm_persistent_lifted_per_sensor(&admm_state));
    let mut opts = SolverOptions::splitting();
    opts.max_iter = 3;
    let (ts, _) = run_with_state(&inst, &params, &opts, split_state).unwrap();
    let mut aopts = SolverOptions::admm();
    aopts.max_iter = 3;
    let (ta, _) = run_admm_with_state(&inst, &aopts, admm_state).unwrap();
    let ms = ts.metadata["persistent_lifted_per_sensor"];
    let ma = ta.metadata["persistent_lifted_per_sensor"];
    outcome(
        s == 4 && a == 6 && ms == 4.0 && ma == 6.0,
        format!("persistent lifted variables per sensor: splitting {s} (trace {ms}), ADMM {a} (trace {ma})"),
    )
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("SNL_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "matrix validity", criterion_1),
        (2, "Sinkhorn-Knopp correctness", criterion_2),
        (3, "prox oracle equivalence", criterion_3),
        (4, "serial/decentralized equivalence", criterion_4),
        (5, "convergence certificate", criterion_5),
        (6, "cold-start comparison", criterion_6),
        (7, "warm start", criterion_7),
        (8, "early termination", criterion_8),
        (9, "state accounting", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let o = f();
        println!("{}  criterion {id} ({name}): {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("NOTE  criterion 10: iteration parity with an interior-point solution and SDP design timing are out of scope");
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
