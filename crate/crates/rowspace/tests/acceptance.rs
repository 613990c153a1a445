//! Acceptance gate. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{dmatrix, dvector};
use rand::Rng;
use rowspace::analysis::{detect_zigzag, largest_stable_rate};
use rowspace::experiment::{builtin_problem, layered_alpha, riemannian_alpha};
use rowspace_core::deep::{
    self, check_corollary14, gd_step_deep_mut, kernel_perturbed_init, lemma9_draw, lemma9_from_v, run_algorithm4_from,
    run_deep, stability_bound, stability_decompose, LayerStack,
};
use rowspace_core::flat::{controlled_init, predict_limit, run_gd};
use rowspace_core::hidden::{
    biopt_draw, biopt_from, biopt_init, check_bioptimality, check_theorem6, gd_step_hidden, run_algorithm3_from,
    run_hidden,
};
use rowspace_core::linalg::{orthogonality_defect, random_orthogonal_with, random_problem, spectral_norm};
use rowspace_core::riemannian::{range_distance, riemannian_init, riemannian_step, run_trials, StiefelPoint};
use rowspace_core::rng::{gaussian_matrix, gaussian_vector};
use rowspace_core::{GdConfig, IterateTrace, Matrix, ProblemInstance, RngSpec, Vector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: rowspace_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Random wide problem: `n ∈ [2, max_n]`, `n < d ≤ max_d`, condition number
/// log-uniform in `[1, max_cond]`.
fn random_case(seed: u64, max_n: usize, max_d: usize, max_cond: f64) -> ProblemInstance {
    let mut rng = RngSpec::new(seed).with_stream(100).rng();
    let n = rng.random_range(2..=max_n);
    let d = rng.random_range(n + 1..=max_d);
    let cond = max_cond.powf(rng.random::<f64>());
    random_problem(n, d, cond, &RngSpec::new(seed)).expect("random problem")
}

fn snapshots(trace: &IterateTrace) -> Vec<&Vector> {
    trace.records.iter().filter_map(|r| r.snapshot.as_ref()).collect()
}

fn max_snapshot_gap(a: &IterateTrace, b: &IterateTrace) -> Result<f64, String> {
    let (sa, sb) = (snapshots(a), snapshots(b));
    ensure(sa.len() == sb.len() && !sa.is_empty(), || {
        format!("snapshot counts differ: {} vs {}", sa.len(), sb.len())
    })?;
    Ok(sa.iter().zip(&sb).map(|(x, y)| (*x - *y).norm()).fold(0.0, f64::max))
}

fn closed_form_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let p = random_case(seed, 20, 100, 10.0);
        let y0 = gaussian_vector(&mut RngSpec::new(seed).with_stream(1).rng(), p.d());
        let cfg = GdConfig::for_problem(&p).with_max_iters(200_000);
        let (y, trace) = core(run_gd(&y0, &p, &cfg))?;
        let limit = core(predict_limit(&y0, &p, cfg.alpha))?;
        let err = (y - limit).norm() / (1.0 + y0.norm());
        ensure(err <= 1e-6, || {
            format!("seed {seed}: relative gap {err:e} ({})", trace.terminated_by)
        })?;
        worst = worst.max(err);
    }
    Ok(format!("100 problems, worst relative gap {worst:.1e}"))
}

fn controlled_convergence() -> Outcome {
    let p = core(ProblemInstance::new(dmatrix![1.0, 1.0], dvector![0.0]))?;
    let target = dvector![10.0, -10.0];
    let cfg = GdConfig::for_problem(&p);
    let y0 = core(controlled_init(&p, &target, &cfg))?;
    let (y, _) = core(run_gd(&y0, &p, &cfg))?;
    let toy = (y - &target).norm();
    ensure(toy <= 1e-6, || format!("x + y = 0: distance {toy:e}"))?;

    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(1000 + seed, 20, 100, 10.0);
        let mut rng = RngSpec::new(seed).with_stream(2).rng();
        let shift = p.kernel_component(&gaussian_vector(&mut rng, p.d()));
        let target = p.theta_star() + shift * 3.0;
        let cfg = GdConfig::for_problem(&p).with_max_iters(200_000);
        let y0 = core(controlled_init(&p, &target, &cfg))?;
        let (y, _) = core(run_gd(&y0, &p, &cfg))?;
        let err = (y - &target).norm();
        ensure(err <= 1e-5, || format!("seed {seed}: distance {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("toy {toy:.1e}, 20 random targets worst {worst:.1e}"))
}

fn min_norm_from_zero() -> Outcome {
    let (mut worst, mut cross): (f64, f64) = (0.0, 0.0);
    for seed in 0..100 {
        let p = random_case(2000 + seed, 20, 100, 10.0);
        let a = p.a();
        let oracle = a.clone().pseudo_inverse(1e-12).map_err(|e| e.to_string())? * p.b();
        let normal = a.transpose() * (a * a.transpose()).lu().solve(p.b()).ok_or("AAᵀ singular")?;
        let c = (&oracle - &normal).norm() / oracle.norm();
        ensure(c <= 1e-8, || {
            format!("seed {seed}: SVD and normal-equation oracles differ by {c:e}")
        })?;
        cross = cross.max(c);
        let cfg = GdConfig::for_problem(&p).with_max_iters(200_000);
        let (y, _) = core(run_gd(&Vector::zeros(p.d()), &p, &cfg))?;
        let err = (y - &oracle).norm() / oracle.norm();
        ensure(err <= 1e-6, || format!("seed {seed}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("100 problems, worst {worst:.1e}, oracle agreement {cross:.1e}"))
}

fn factor_conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(3000 + seed, 20, 100, 10.0);
        let mut s = biopt_init(&p, &RngSpec::new(seed).with_stream(1));
        let alpha = layered_alpha(&p, 1);
        for k in 0..=1000 {
            let r = core(check_theorem6(&s, &p))?.residual / s.w.norm();
            ensure(r <= 1e-8, || format!("seed {seed}, step {k}: relative residual {r:e}"))?;
            worst = worst.max(r);
            s = gd_step_hidden(&s, &p, alpha);
        }
    }
    Ok(format!("20 problems x 1000 steps, worst {worst:.1e}"))
}

fn bioptimality() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(4000 + seed, 20, 100, 10.0);
        let s0 = biopt_init(&p, &RngSpec::new(seed).with_stream(1));
        let cfg = GdConfig::new(layered_alpha(&p, 1)).with_max_iters(500_000);
        let (s, trace) = core(run_hidden(&s0, &p, &cfg))?;
        ensure(trace.converged(), || {
            format!("seed {seed}: stopped by {}", trace.terminated_by)
        })?;
        let report = core(check_bioptimality(&s, &p, 1e-6))?;
        ensure(report.all_passed(), || {
            format!("seed {seed}: residuals {:?}", report.residuals)
        })?;
        worst = report.residuals.iter().fold(worst, |m, r| m.max(*r));
    }
    Ok(format!("20 runs, worst residual {worst:.1e}"))
}

fn snapshot_cfg(alpha: f64) -> GdConfig {
    GdConfig::new(alpha)
        .with_max_iters(50)
        .with_tol_residual(0.0)
        .with_snapshot_every(1)
}

fn collapse_one_layer() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(5000 + seed, 20, 100, 10.0);
        let (v0, x0) = biopt_draw(&p, &RngSpec::new(seed).with_stream(1));
        let cfg = snapshot_cfg(layered_alpha(&p, 1));
        let (_, full) = core(run_hidden(&biopt_from(&p, &v0, &x0), &p, &cfg))?;
        let (_, compact) = core(run_algorithm3_from(&p, &v0, &cfg))?;
        let gap = max_snapshot_gap(&full, &compact)?;
        ensure(snapshots(&full).len() == 51, || "expected 51 snapshots".into())?;
        ensure(gap <= 1e-8, || format!("seed {seed}: gap {gap:e}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("20 problems x 50 steps, worst gap {worst:.1e}"))
}

fn collapse_two_layers() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(6000 + seed, 20, 100, 10.0);
        let v0 = lemma9_draw(&p, &RngSpec::new(seed).with_stream(1));
        let init = core(lemma9_from_v(&p, &v0))?;
        let alpha = layered_alpha(&p, 2);
        let (_, compact) = core(run_algorithm4_from(&p, &v0, &snapshot_cfg(alpha)))?;
        let compact = snapshots(&compact);
        ensure(compact.len() == 51, || {
            format!("seed {seed}: {} snapshots", compact.len())
        })?;
        let mut s = init.stack;
        for (k, theta) in compact.iter().enumerate() {
            let gap = (s.predictor() - *theta).norm();
            ensure(gap <= 1e-8, || format!("seed {seed}, step {k}: gap {gap:e}"))?;
            worst = worst.max(gap);
            check_sparsity(&s).map_err(|e| format!("seed {seed}, step {k}: {e}"))?;
            core(gd_step_deep_mut(&mut s, &p, alpha))?;
        }
    }
    Ok(format!("20 problems x 50 steps, worst gap {worst:.1e}, sparsity exact"))
}

/// `W₁` is zero outside its first column and `W₂` equals `e₁xᵀ`.
fn check_sparsity(s: &LayerStack) -> Result<(), String> {
    let (w1, w2) = (&s.weights[0], &s.weights[1]);
    let off = w1.columns(1, w1.ncols() - 1).norm();
    ensure(off == 0.0, || format!("W1 off-column mass {off:e}"))?;
    let mut e1x = Matrix::zeros(w2.nrows(), w2.ncols());
    e1x.set_row(0, &s.x.transpose());
    let dev = (w2 - e1x).norm();
    ensure(dev <= 1e-10 * s.x.norm(), || format!("‖W2 − e1xᵀ‖ = {dev:e}"))
}

fn two_layer_minimality() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = random_case(7000 + seed, 20, 100, 10.0);
        let init = core(deep::lemma9_init(&p, &RngSpec::new(seed).with_stream(1)))?;
        let cfg = GdConfig::new(layered_alpha(&p, 2)).with_max_iters(500_000);
        let (s, trace) = core(run_deep(&init.stack, &p, &cfg))?;
        ensure(trace.converged(), || {
            format!("seed {seed}: stopped by {}", trace.terminated_by)
        })?;
        let report = core(check_corollary14(&s, &p, 1e-6))?;
        ensure(report.all_passed(), || {
            format!("seed {seed}: residuals {:?}", report.residuals)
        })?;
        worst = report.residuals.iter().fold(worst, |m, r| m.max(*r));
    }
    Ok(format!("20 runs, worst residual {worst:.1e}"))
}

fn c_conservation() -> Outcome {
    let (mut drift, mut trials): (f64, usize) = (0.0, 0);
    let mut slack = f64::INFINITY;
    for h in [1, 2, 3, 5] {
        for seed in 0..5 {
            let p = random_case(8000 + 10 * h as u64 + seed, 8, 30, 10.0);
            let s0 = core(kernel_perturbed_init(&p, h, 1.0, &RngSpec::new(seed).with_stream(1)))?;
            let c0 = core(stability_decompose(&s0.weights[0], &p))?.c;
            let alpha = layered_alpha(&p, h);
            let mut s = s0.clone();
            for k in 1..=500 {
                core(gd_step_deep_mut(&mut s, &p, alpha))?;
                let c = core(stability_decompose(&s.weights[0], &p))?.c;
                let dc = (&c - &c0).norm();
                ensure(dc <= 1e-10, || format!("h={h}, seed {seed}, step {k}: drift {dc:e}"))?;
                drift = drift.max(dc);
            }
            let cfg = GdConfig::new(alpha).with_max_iters(500_000);
            let (s, trace) = core(run_deep(&s0, &p, &cfg))?;
            ensure(trace.converged(), || {
                format!("h={h}, seed {seed}: stopped by {}", trace.terminated_by)
            })?;
            // Row-space part of the limit; it equals θ* only up to the run's tolerance.
            let pk = core(stability_decompose(&s.weights[0], &p))?.p;
            let rest = LayerStack {
                weights: s.weights[1..].to_vec(),
                x: s.x.clone(),
            }
            .predictor();
            let row_gap = (p.a().tr_mul(&(pk * rest)) - p.theta_star()).norm();
            ensure(row_gap <= 1e-6, || {
                format!("h={h}, seed {seed}: row-space limit off by {row_gap:e}")
            })?;
            let actual = (s.predictor() - p.theta_star()).norm();
            let bound = stability_bound(&s, &c0);
            ensure(actual <= bound + row_gap, || {
                format!("h={h}, seed {seed}: distance {actual:e} exceeds bound {bound:e}")
            })?;
            slack = slack.min(bound - actual);
            trials += 1;
        }
    }
    Ok(format!(
        "{trials} trials, max drift {drift:.1e}, min bound slack {slack:.1e}"
    ))
}

fn range_distance_grid() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in 2..=50usize {
        for n in 1..d {
            let mut rng = RngSpec::new(d as u64).with_stream(n as u64).rng();
            for _ in 0..10 {
                let w = core(StiefelPoint::new(random_orthogonal_with(&mut rng, d)))?;
                let m = gaussian_matrix(&mut rng, d, n);
                let dist = core(range_distance(&w, &m))?;
                let err = (dist - ((d - n) as f64).sqrt()).abs();
                ensure(err <= 1e-10, || format!("d={d}, n={n}: error {err:e}"))?;
                worst = worst.max(err);
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} pairs, worst {worst:.1e}"))
}

fn riemannian_invariants() -> Outcome {
    let (mut defect, mut norm_dev): (f64, f64) = (0.0, 0.0);
    let mut problems = vec![builtin_problem()];
    problems.extend((0..4).map(|seed| random_case(9000 + seed, 6, 20, 10.0)));
    for (i, p) in problems.iter().enumerate() {
        for h in [1, 3, 6] {
            let mut s = riemannian_init(p.d(), h, &RngSpec::new(i as u64).with_stream(h as u64));
            let alpha = riemannian_alpha(p);
            for k in 0..=2000 {
                for w in &s.weights {
                    defect = defect.max(orthogonality_defect(w));
                }
                let prod: f64 = s.weights.iter().map(spectral_norm).product();
                norm_dev = norm_dev.max((prod - 1.0).abs());
                ensure(defect <= 1e-8 && norm_dev <= 1e-8, || {
                    format!("problem {i}, h={h}, step {k}: defect {defect:e}, norm product off by {norm_dev:e}")
                })?;
                s = core(riemannian_step(&s, p, alpha))?;
            }
        }
    }
    Ok(format!(
        "{} problems x 3 depths x 2000 steps, defect {defect:.1e}, norm product {norm_dev:.1e}",
        problems.len()
    ))
}

fn depth_effect() -> Outcome {
    let p = builtin_problem();
    let cfg = GdConfig::new(0.01).with_max_iters(3000);
    let stats = core(run_trials(&p, &[1, 3, 6], 2000, &cfg, &RngSpec::new(0)))?;
    let medians: Vec<f64> = stats.values().map(|s| s.percentiles.p50).collect();
    let within: Vec<String> = stats
        .iter()
        .map(|(h, s)| format!("h={h}: {:.3}", s.fraction_within(1e-3)))
        .collect();
    let shown = format!("medians {medians:.3?}; within 1e-3 {}", within.join(", "));
    ensure(medians.windows(2).all(|m| m[1] <= m[0]), || shown.clone())?;
    Ok(shown)
}

fn conditioned_race() -> Outcome {
    let (mut wins, mut fired) = (0, 0);
    let mut log = Vec::new();
    for seed in 0..20 {
        // ‖A‖² log-uniform on [10⁶, 2·10⁶): every problem shares the grid rate
        // 10⁻⁶ for plain descent, and the rate sits anywhere between critical
        // damping of the top mode and the stability edge.
        let base = core(random_problem(5, 20, 1e3, &RngSpec::new(seed)))?;
        let lift = 2f64.powf(RngSpec::new(seed).with_stream(3).rng().random::<f64>() / 2.0);
        let p = core(ProblemInstance::new(base.a() * lift, base.b().clone()))?;
        let race = |alpha: f64| {
            GdConfig::new(alpha)
                .with_max_iters(20_000_000)
                .with_tol_residual(1e-3)
                .with_record_every(1_000_000)
        };
        let gd = largest_stable_rate(|a| run_gd(&Vector::zeros(p.d()), &p, &race(a))).map_err(|e| e.to_string())?;
        let mut rng = RngSpec::new(seed).with_stream(1).rng();
        let v0 = gaussian_vector(&mut rng, p.n());
        let v0 = &v0 * (1e-2 * p.b_scale() / (p.a() * p.a().tr_mul(&v0)).norm());
        let alg3 = largest_stable_rate(|a| run_algorithm3_from(&p, &v0, &race(a))).map_err(|e| e.to_string())?;
        let (Some((a_gd, _, t_gd)), Some((a_3, _, t_3))) = (gd, alg3) else {
            return Err(format!("seed {seed}: no stable rate on the grid"));
        };
        let reached = |t: &IterateTrace| t.converged().then(|| t.iterations());
        let (k_gd, k_3) = (reached(&t_gd), reached(&t_3));
        if let Some(k3) = k_3 {
            if k_gd.is_none_or(|kg| k3 < kg) {
                wins += 1;
            }
        }
        log.push(format!("{seed}: gd {a_gd:e}/{k_gd:?} alg3 {a_3:e}/{k_3:?}"));
        let probe = GdConfig::new(a_3).with_max_iters(200_000).with_tol_residual(1e-3);
        let (_, trace) = core(run_algorithm3_from(&p, &v0, &probe))?;
        if detect_zigzag(&trace).map_err(|e| e.to_string())?.oscillating {
            fired += 1;
        }
    }
    let shown = format!("collapsed iteration faster in {wins}/20, zigzag on {fired}/20 collapsed traces");
    ensure(wins >= 15 && fired >= 1, || format!("{shown} [{}]", log.join("; ")))?;
    Ok(shown)
}

/// Comment-free contents of every CSV file under `dir`, by file name.
fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            let text = fs::read_to_string(&p).expect("csv readable");
            let body: String = text
                .lines()
                .filter(|l| !l.starts_with('#'))
                .map(|l| format!("{l}\n"))
                .collect();
            (p.file_name().unwrap().to_string_lossy().into_owned(), body)
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let fixture = format!("{}/tests/fixtures/x_plus_y.svm", env!("CARGO_MANIFEST_DIR"));
    let commands: &[&[&str]] = &[
        &["solve", "--init", "random"],
        &["control", "--target", "10,-10", "--data", &fixture],
        &["hidden"],
        &["compact1"],
        &["compact2"],
        &["deep", "--init", "he", "--depth", "3"],
        &["deep", "--init", "lemma9", "--depth", "2"],
        &["stability", "--depth", "3"],
        &["riemann", "--depth", "3", "--max-iters", "2000"],
        &["trials", "--h", "1,3", "--trials", "50"],
        &["project", "--snapshot-every", "10"],
        &["lrgrid", "--synthetic", "n=3,d=8,cond=100", "--max-iters", "2000"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    for (i, args) in commands.iter().enumerate() {
        let mut runs = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{i}_{rep}"));
            fs::create_dir(&out).map_err(|e| e.to_string())?;
            let status = Command::new(env!("CARGO_BIN_EXE_rowspace"))
                .args(*args)
                .args(["--seed", "42", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(matches!(status.status.code(), Some(0 | 2)), || {
                format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr))
            })?;
            runs.push(csv_bodies(&out));
        }
        ensure(!runs[0].is_empty() && runs[0] == runs[1], || {
            format!("{args:?}: outputs differ")
        })?;
        files += runs[0].len();
    }
    Ok(format!("{} commands, {files} CSV files identical", commands.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("closed-form limit", closed_form_limit),
        ("controlled convergence", controlled_convergence),
        ("min-norm from zero", min_norm_from_zero),
        ("one-layer factor conservation", factor_conservation),
        ("one-layer bi-optimality", bioptimality),
        ("collapse equivalence h=1", collapse_one_layer),
        ("collapse equivalence h=2", collapse_two_layers),
        ("two-layer minimality", two_layer_minimality),
        ("kernel part conservation", c_conservation),
        ("range distance", range_distance_grid),
        ("riemannian invariants", riemannian_invariants),
        ("statistical depth effect", depth_effect),
        ("ill-conditioned race", conditioned_race),
        ("cli determinism", determinism),
    ];
    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
