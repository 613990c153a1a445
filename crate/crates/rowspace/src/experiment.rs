//! Runs one configured experiment and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::dmatrix;
use nalgebra::dvector;
use rowspace_core::deep::{self, LayerStack};
use rowspace_core::linalg::{orthogonality_defect, random_problem, spectral_norm};
use rowspace_core::riemannian::{self, range_distance, StiefelPoint};
use rowspace_core::{flat, hidden, rng, GdConfig, IterateTrace, ProblemInstance, RngSpec, Termination, Vector};

use crate::analysis::{detect_zigzag, largest_stable_rate, project_paths};
use crate::config::{CommandArgs, ExperimentConfig, FlatInit, ProblemSource};
use crate::csvio::{self, fmt_f64, Summary};
use crate::error::{HarnessError, Result};
use crate::svmlight::load_svmlight;

/// RNG stream ids under the master seed. Trial streams start at `1 << 32`.
pub const PROBLEM_STREAM: u64 = 0;
pub const INIT_STREAM: u64 = 1;
pub const PROJECTION_STREAM: u64 = 2;

/// Tolerance for the minimality checks reported in summaries.
pub const MINIMALITY_TOL: f64 = 1e-6;

/// Default step for a network with `h` hidden layers: the end-to-end
/// curvature of a balanced depth-`h` factorization of `θ` is about
/// `(h + 1)·‖A‖²·‖θ‖^{2h/(h+1)}`. `h = 0` gives plain `1/‖A‖²`.
pub fn layered_alpha(p: &ProblemInstance, h: usize) -> f64 {
    let scale = p.theta_star().norm().max(1.0);
    let exponent = 2.0 * h as f64 / (h as f64 + 1.0);
    p.default_alpha() / ((h as f64 + 1.0) * scale.powf(exponent))
}

/// Default step for Riemannian runs: `1/(4‖A‖²)`. Orthogonal layers keep the
/// end-to-end map an isometry, so depth does not enter.
pub fn riemannian_alpha(p: &ProblemInstance) -> f64 {
    p.default_alpha() / 4.0
}

pub fn builtin_problem() -> ProblemInstance {
    ProblemInstance::new(dmatrix![5.0, -3.0, 1.0; 3.0, 1.0, -1.0], dvector![6.0, 4.0])
        .expect("built-in system has full row rank")
}

pub fn load_problem(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    match &cfg.source {
        ProblemSource::Builtin => Ok(builtin_problem()),
        ProblemSource::Synthetic { n, d, cond } => Ok(random_problem(
            *n,
            *d,
            *cond,
            &RngSpec::new(cfg.seed).with_stream(PROBLEM_STREAM),
        )?),
        ProblemSource::File { path, scale } => load_svmlight(path, *scale),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Summary,
    /// Methods whose run ended in divergence.
    pub diverged: Vec<String>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    p: ProblemInstance,
    base: GdConfig,
    comments: Vec<String>,
    report: RunReport,
}

impl<'a> Run<'a> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Iteration settings with `--alpha`, or `default` when it is absent.
    fn gd(&self, default: f64) -> GdConfig {
        GdConfig {
            alpha: self.cfg.alpha.unwrap_or(default),
            ..self.base.clone()
        }
    }

    fn init_spec(&self) -> RngSpec {
        RngSpec::new(self.cfg.seed).with_stream(INIT_STREAM)
    }

    /// Writes `trace_<method>.csv` and the standard summary rows.
    fn trace(&mut self, method: &str, trace: &IterateTrace, y: &Vector, alpha: f64) -> Result<()> {
        let path = self.path(&format!("trace_{method}.csv"));
        let mut comments = self.comments.clone();
        comments.push(format!("method: {method}"));
        comments.push(format!("alpha_used: {alpha:e}"));
        csvio::write_trace_file(&path, &comments, &trace.records)?;
        self.report.files.push(path);
        let s = &mut self.report.summary;
        s.push(method, "alpha", alpha);
        s.push_text(method, "iterations", trace.iterations());
        s.push_text(method, "terminated_by", trace.terminated_by);
        if trace.terminated_by == Termination::Diverged {
            self.report.diverged.push(method.to_string());
        } else {
            s.push(method, "residual", self.p.residual_norm(y));
            s.push(method, "loss", self.p.loss(y));
            s.push(method, "dist_theta_star", (y - self.p.theta_star()).norm());
        }
        Ok(())
    }

    fn minimality(&mut self, method: &str, report: rowspace_core::Result<hidden::BioptReport>) {
        match report {
            Ok(r) => {
                for (i, v) in r.residuals.iter().enumerate() {
                    self.report.summary.push(method, &format!("minimality_{i}"), *v);
                }
                self.report.summary.push_text(method, "minimal", r.all_passed());
            }
            Err(e) => self
                .report
                .summary
                .push_text(method, "minimal", format!("unchecked: {e}")),
        }
    }

    fn zigzag(&mut self, method: &str, trace: &IterateTrace) {
        if let Ok(z) = detect_zigzag(trace) {
            let onset = z.onset.map_or("none".to_string(), |k| k.to_string());
            self.report.summary.push_text(method, "zigzag_onset", onset);
        }
    }

    fn run(&mut self) -> Result<()> {
        let p = self.p.clone();
        let depth = self.cfg.depth;
        match &self.cfg.command {
            CommandArgs::Solve { init, .. } => {
                let gd = self.gd(layered_alpha(&p, 0));
                let y0 = match init {
                    FlatInit::Zero => Vector::zeros(p.d()),
                    FlatInit::Random => rng::gaussian_vector(&mut self.init_spec().rng(), p.d()),
                };
                let (y, t) = flat::run_gd(&y0, &p, &gd)?;
                self.trace("gd", &t, &y, gd.alpha)?;
            }
            CommandArgs::Control { target } => {
                let gd = self.gd(layered_alpha(&p, 0));
                let target = Vector::from_column_slice(target);
                let y0 = flat::controlled_init(&p, &target, &gd)?;
                let (y, t) = flat::run_gd(&y0, &p, &gd)?;
                self.trace("gd", &t, &y, gd.alpha)?;
                self.report.summary.push("gd", "dist_target", (y - target).norm());
            }
            CommandArgs::Hidden => {
                let gd = self.gd(layered_alpha(&p, 1));
                let s0 = hidden::biopt_init(&p, &self.init_spec());
                let (s, t) = hidden::run_hidden(&s0, &p, &gd)?;
                self.trace("hidden", &t, &s.predictor(), gd.alpha)?;
                self.minimality("hidden", hidden::check_bioptimality(&s, &p, MINIMALITY_TOL));
                let (s, t) = hidden::run_algorithm2(&p, &gd, &self.init_spec())?;
                self.trace("algorithm2", &t, &s.predictor(), gd.alpha)?;
            }
            CommandArgs::Compact1 => {
                let gd = self.gd(layered_alpha(&p, 1));
                let (y, t) = hidden::run_algorithm3(&p, &gd, &self.init_spec())?;
                self.trace("compact1", &t, &y, gd.alpha)?;
                self.zigzag("compact1", &t);
            }
            CommandArgs::Deep { init } => {
                let gd = self.gd(layered_alpha(&p, depth));
                let s0 = match init.baseline() {
                    Some(kind) => deep::baseline_init(p.d(), depth, kind, &self.init_spec()),
                    None => deep::lemma9_init(&p, &self.init_spec())?.stack,
                };
                let (s, t) = deep::run_deep(&s0, &p, &gd)?;
                self.trace("deep", &t, &s.predictor(), gd.alpha)?;
                if init.baseline().is_none() {
                    self.minimality("deep", deep::check_corollary14(&s, &p, MINIMALITY_TOL));
                }
            }
            CommandArgs::Compact2 => {
                let gd = self.gd(layered_alpha(&p, 2));
                let (y, t) = deep::run_algorithm4(&p, &gd, &self.init_spec())?;
                self.trace("compact2", &t, &y, gd.alpha)?;
                self.zigzag("compact2", &t);
            }
            CommandArgs::Stability { c_norm } => {
                let gd = self.gd(layered_alpha(&p, depth));
                let s0 = deep::kernel_perturbed_init(&p, depth, *c_norm, &self.init_spec())?;
                let c0 = deep::stability_decompose(&s0.weights[0], &p)?.c;
                let (s, t) = deep::run_deep(&s0, &p, &gd)?;
                self.trace("deep", &t, &s.predictor(), gd.alpha)?;
                if t.terminated_by != Termination::Diverged {
                    let c = deep::stability_decompose(&s.weights[0], &p)?.c;
                    let sum = &mut self.report.summary;
                    sum.push("deep", "c_norm", spectral_norm(&c0));
                    sum.push("deep", "c_drift", (&c - &c0).norm());
                    sum.push("deep", "bound", deep::stability_bound(&s, &c));
                }
            }
            CommandArgs::Riemann => {
                let gd = self.gd(riemannian_alpha(&p));
                let (s, t) = riemannian::run_riemannian(&p, depth, &gd, &self.init_spec())?;
                self.trace("riemann", &t, &s.predictor(), gd.alpha)?;
                self.stiefel_summary("riemann", &s)?;
            }
            CommandArgs::Trials { h_list } => self.trials(h_list)?,
            CommandArgs::Project => self.project()?,
            CommandArgs::Lrgrid => self.lrgrid()?,
        }
        Ok(())
    }

    fn stiefel_summary(&mut self, method: &str, s: &LayerStack) -> Result<()> {
        let defect = s.weights.iter().map(orthogonality_defect).fold(0.0, f64::max);
        let norms: f64 = s.weights.iter().map(spectral_norm).product();
        let w1 = StiefelPoint::new(s.weights[0].clone())?;
        let dist = range_distance(&w1, &self.p.a().transpose())?;
        let sum = &mut self.report.summary;
        sum.push(method, "orthogonality_defect", defect);
        sum.push(method, "spectral_norm_product", norms);
        sum.push(method, "w1_range_distance", dist);
        Ok(())
    }

    fn trials(&mut self, h_list: &[usize]) -> Result<()> {
        let spec = RngSpec::new(self.cfg.seed);
        let gd = self.gd(riemannian_alpha(&self.p));
        self.report.summary.push("trials", "alpha", gd.alpha);
        let stats = riemannian::run_trials(&self.p, h_list, self.cfg.trials, &gd, &spec)?;
        for (h, st) in &stats {
            let path = self.path(&format!("histogram_{h}.csv"));
            csvio::write_histogram(&path, &self.comments, st)?;
            self.report.files.push(path);
            let method = format!("h={h}");
            let sum = &mut self.report.summary;
            sum.push(&method, "p50", st.percentiles.p50);
            sum.push(&method, "within_1e-3", st.fraction_within(1e-3));
            sum.push_text(&method, "diverged", st.diverged);
            if st.diverged > 0 {
                self.report.diverged.push(method);
            }
        }
        let path = self.path("percentiles.csv");
        csvio::write_percentiles(&path, &self.comments, &stats)?;
        self.report.files.push(path);
        Ok(())
    }

    fn project(&mut self) -> Result<()> {
        let p = self.p.clone();
        let gd = self.gd(layered_alpha(&p, 0));
        let (y, t_gd) = flat::run_gd(&Vector::zeros(p.d()), &p, &gd)?;
        self.trace("gd", &t_gd, &y, gd.alpha)?;
        let gd = self.gd(layered_alpha(&p, 1));
        let (y, t_c1) = hidden::run_algorithm3(&p, &gd, &self.init_spec())?;
        self.trace("compact1", &t_c1, &y, gd.alpha)?;
        let gd = self.gd(layered_alpha(&p, 2));
        let (y, t_c2) = deep::run_algorithm4(&p, &gd, &self.init_spec())?;
        self.trace("compact2", &t_c2, &y, gd.alpha)?;

        let spec = RngSpec::new(self.cfg.seed).with_stream(PROJECTION_STREAM);
        let proj = project_paths(&[("gd", &t_gd), ("compact1", &t_c1), ("compact2", &t_c2)], p.d(), &spec)?;
        let target = &proj.basis * p.theta_star();
        self.report.summary.push("theta_star", "u", target[0]);
        self.report.summary.push("theta_star", "v", target[1]);
        for (method, path_pts) in &proj.points {
            let path = self.path(&format!("path_{method}.csv"));
            let mut w = csvio::create(&path, &self.comments)?;
            w.write_record(["iter", "u", "v"])?;
            for (k, pt) in path_pts {
                w.write_record([k.to_string(), fmt_f64(pt[0]), fmt_f64(pt[1])])?;
            }
            w.flush().map_err(|e| HarnessError::io(&path, e))?;
            self.report.files.push(path);
        }
        Ok(())
    }

    fn lrgrid(&mut self) -> Result<()> {
        let p = self.p.clone();
        let base = self.base.clone();
        let spec = self.init_spec();
        let with = |alpha: f64| GdConfig { alpha, ..base.clone() };

        let zero = Vector::zeros(p.d());
        let best = largest_stable_rate(|a| flat::run_gd(&zero, &p, &with(a)))?;
        self.grid_result("gd", best)?;
        let best = largest_stable_rate(|a| hidden::run_algorithm3(&p, &with(a), &spec))?;
        self.grid_result("compact1", best)?;
        let best = largest_stable_rate(|a| deep::run_algorithm4(&p, &with(a), &spec))?;
        self.grid_result("compact2", best)?;
        Ok(())
    }

    fn grid_result(&mut self, method: &str, best: Option<(f64, Vector, IterateTrace)>) -> Result<()> {
        match best {
            Some((alpha, y, t)) => self.trace(method, &t, &y, alpha),
            None => {
                self.report.summary.push_text(method, "alpha", "none");
                self.report.diverged.push(method.to_string());
                Ok(())
            }
        }
    }
}

/// Runs the experiment and writes its files; divergence is reported as an
/// error after all artifacts are on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let p = load_problem(cfg)?;
    let base = GdConfig::new(cfg.alpha.unwrap_or_else(|| p.default_alpha()))
        .with_max_iters(cfg.max_iters)
        .with_tol_residual(cfg.tol)
        .with_snapshot_every(cfg.snapshot_every)
        .with_record_every(cfg.record_every);
    create_dir(&cfg.out)?;
    let mut comments = cfg.describe();
    comments.push(format!("problem_shape: {}x{}", p.n(), p.d()));
    let mut run = Run {
        cfg,
        p,
        base,
        comments,
        report: RunReport {
            files: Vec::new(),
            summary: Summary::default(),
            diverged: Vec::new(),
        },
    };
    run.run()?;
    let path = run.path("summary.csv");
    run.report.summary.write(&path, &run.comments)?;
    run.report.files.push(path);
    if !run.report.diverged.is_empty() {
        return Err(HarnessError::Diverged {
            method: run.report.diverged.join(","),
        });
    }
    Ok(run.report)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}
