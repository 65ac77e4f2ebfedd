//! Convergence studies over a slow-fast family: for each timescale ratio,
//! solve the full chain, lump it, solve the effective dynamics, assemble the
//! certificate, and fit how the worst-case entropy distance scales with the
//! ratio.
//!
//! One log-Sobolev constant serves the whole sweep, estimated from the fast
//! blocks (or fixed by the caller), since the blocks do not change with the
//! ratio. Per-ratio pipelines are independent and run on a local thread
//! pool sized by the `CTMC_LUMPER_THREADS` environment variable; results
//! keep the configured ratio order, and a failure in one pipeline is
//! recorded instead of aborting the others. Emitted files use fixed names
//! and full-precision numbers, so identical configurations produce
//! byte-identical output.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chain::ProbabilityVector;
use crate::coarse_graining::push_forward;
use crate::dynamics::{
    push_forward_trajectory, solve_constant, tv_decay_fit, DecayFit, TimeGrid, Trajectory,
    DECAY_FIT_WINDOW,
};
use crate::error::{Error, Result};
use crate::error_bounds::{eps_bound_report, long_time_envelope, BoundReport, LongTimeEnvelope};
use crate::functionals::estimate_lsi_constant_with;
use crate::functionals::{LSI_DEFAULT_SEED, LSI_DEFAULT_STARTS};
use crate::io;
use crate::multiscale::{
    build_l_eps, effective_generator_eps, scenario, slow_map, MultiscaleSpec, Scenario,
};
use crate::scalar::{as_f64, real, Real};

/// Default timescale ratios, descending.
pub const DEFAULT_EPSILONS: [f64; 5] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];

/// Default time horizon.
pub const DEFAULT_T_END: f64 = 20.0;

/// Default number of fast states per block.
pub const DEFAULT_N: usize = 10;

/// Ratios below this are excluded from the default slope fit; at that size
/// the entropy distance sits at the solver floor and flattens.
pub const DEFAULT_FIT_MIN_EPS: f64 = 1e-3;

/// Certificate offset used by default for the preset whose initial datum is
/// not strictly positive.
pub const DEFAULT_S3_DELTA: f64 = 0.1;

/// Where the log-Sobolev constant entering the certificates comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode<T> {
    /// Estimate from the fast blocks and their stationary measures.
    Estimate,
    /// Use the given constant as is.
    Fixed(T),
}

/// Model family a study runs on.
#[derive(Debug, Clone)]
pub enum StudySource<T: Real> {
    /// Built-in preset, sized by the config's `n`.
    Preset(Scenario),
    /// Caller-supplied family and initial datum; the name labels reports.
    Custom {
        /// Label used in reports and filenames.
        name: String,
        /// Family at any timescale ratio (the sweep overrides it).
        spec: MultiscaleSpec<T>,
        /// Initial datum on the product space.
        mu0: ProbabilityVector<T>,
    },
}

/// Full description of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig<T: Real> {
    /// Model family to sweep.
    pub source: StudySource<T>,
    /// Fast states per block, for presets.
    pub n: usize,
    /// Timescale ratios, strictly descending.
    pub epsilons: Vec<T>,
    /// Time horizon for the default grid.
    pub t_end: T,
    /// Explicit grid; `None` uses the refined-near-zero default over
    /// `t_end`.
    pub grid: Option<TimeGrid<T>>,
    /// Source of the log-Sobolev constant.
    pub alpha: AlphaMode<T>,
    /// Certificate offset; vacuous bounds before this time.
    pub delta: Option<T>,
    /// Ratios included in the slope fit; `None` keeps those at or above
    /// [`DEFAULT_FIT_MIN_EPS`].
    pub fit_window: Option<Vec<T>>,
    /// Initial datum for the effective dynamics; `None` matches the lumped
    /// initial datum.
    pub eff0: Option<ProbabilityVector<T>>,
    /// Seed for the log-Sobolev estimate.
    pub seed: u64,
    /// Descent starts for the log-Sobolev estimate.
    pub starts: usize,
}

impl<T: Real> StudyConfig<T> {
    /// Defaults for a preset: 10 fast states, ratios 1 down to 1e-4,
    /// horizon 20, estimated constant, and the certificate offset for the
    /// concentrated-start preset.
    pub fn preset(id: Scenario) -> Self {
        StudyConfig {
            source: StudySource::Preset(id),
            n: DEFAULT_N,
            epsilons: DEFAULT_EPSILONS.iter().map(|&e| real(e)).collect(),
            t_end: real(DEFAULT_T_END),
            grid: None,
            alpha: AlphaMode::Estimate,
            delta: match id {
                Scenario::S3 => Some(real(DEFAULT_S3_DELTA)),
                _ => None,
            },
            fit_window: None,
            eff0: None,
            seed: LSI_DEFAULT_SEED,
            starts: LSI_DEFAULT_STARTS,
        }
    }

    /// Defaults around a caller-supplied family.
    pub fn custom(name: impl Into<String>, spec: MultiscaleSpec<T>, mu0: ProbabilityVector<T>) -> Self {
        let n = spec.n();
        StudyConfig {
            source: StudySource::Custom {
                name: name.into(),
                spec,
                mu0,
            },
            n,
            epsilons: DEFAULT_EPSILONS.iter().map(|&e| real(e)).collect(),
            t_end: real(DEFAULT_T_END),
            grid: None,
            alpha: AlphaMode::Estimate,
            delta: None,
            fit_window: None,
            eff0: None,
            seed: LSI_DEFAULT_SEED,
            starts: LSI_DEFAULT_STARTS,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::BadConfig {
                detail: "at least one timescale ratio is required".to_string(),
            });
        }
        for &eps in &self.epsilons {
            let e = as_f64(eps);
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::BadConfig {
                    detail: format!("timescale ratios must be positive, got {e}"),
                });
            }
        }
        for pair in self.epsilons.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::BadConfig {
                    detail: "timescale ratios must be strictly descending".to_string(),
                });
            }
        }
        if self.grid.is_none() {
            let t = as_f64(self.t_end);
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::BadConfig {
                    detail: format!("time horizon must be positive, got {t}"),
                });
            }
        }
        if let Some(d) = self.delta {
            let d = as_f64(d);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::BadConfig {
                    detail: format!("certificate offset must be nonnegative, got {d}"),
                });
            }
        }
        if let AlphaMode::Fixed(a) = self.alpha {
            let a = as_f64(a);
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::BadConfig {
                    detail: format!("fixed log-Sobolev constant must be positive, got {a}"),
                });
            }
        }
        if self.starts == 0 {
            return Err(Error::BadConfig {
                detail: "the log-Sobolev estimate needs at least one start".to_string(),
            });
        }
        Ok(())
    }
}

/// Per-ratio summary row of a convergence report.
#[derive(Debug, Clone, Copy)]
pub struct EpsRecord<T> {
    /// Timescale ratio.
    pub eps: T,
    /// Largest entropy distance over the grid.
    pub sup_entropy: T,
    /// Time of the largest entropy distance.
    pub t_argmax: T,
    /// Whether the certificate held at every grid point.
    pub verdict: bool,
}

/// Per-ratio failure row of a convergence report.
#[derive(Debug, Clone)]
pub struct EpsFailure<T> {
    /// Timescale ratio whose pipeline failed.
    pub eps: T,
    /// Rendered error.
    pub message: String,
}

/// Summary of a sweep: per-ratio records, failures, and the fitted
/// log-log slope of the worst-case entropy distance against the ratio.
#[derive(Debug, Clone)]
pub struct ConvergenceReport<T: Real> {
    /// Preset tag or custom family name.
    pub scenario: String,
    /// Fast states per block.
    pub n: usize,
    /// Horizon of the time grid.
    pub t_end: T,
    /// Log-Sobolev constant entering the certificates (before the
    /// per-ratio rescaling).
    pub alpha: T,
    /// `"estimate"` or `"fixed"`.
    pub alpha_method: String,
    /// Certificate offset, if one was used.
    pub delta: Option<T>,
    /// Successful ratios, in configured order.
    pub records: Vec<EpsRecord<T>>,
    /// Failed ratios, in configured order.
    pub failures: Vec<EpsFailure<T>>,
    /// Fitted slope, `None` when the fit is undefined.
    pub slope: Option<T>,
    /// Ratios the fit used.
    pub fit_window: Vec<T>,
    /// Remarks gathered while running.
    pub notes: Vec<String>,
}

/// Everything produced for one ratio.
#[derive(Debug, Clone)]
pub struct EpsRun<T: Real> {
    /// Timescale ratio.
    pub eps: T,
    /// Certificate for this run.
    pub bound: BoundReport<T>,
    /// Solution of the full chain.
    pub fine: Trajectory<T>,
    /// Lumped marginal of the full solution.
    pub lumped: Trajectory<T>,
    /// Solution of the effective dynamics.
    pub effective: Trajectory<T>,
    /// Exponential fit of the lumped marginal's convergence, if the decay
    /// window held enough points.
    pub fit_lumped: Option<DecayFit<T>>,
    /// Exponential fit of the effective solution's convergence.
    pub fit_effective: Option<DecayFit<T>>,
    /// Long-time envelope, when both fits are available.
    pub envelope: Option<LongTimeEnvelope<T>>,
}

/// A convergence report together with the per-ratio runs behind it.
#[derive(Debug, Clone)]
pub struct StudyOutput<T: Real> {
    /// Sweep summary.
    pub report: ConvergenceReport<T>,
    /// Successful runs, in configured ratio order.
    pub runs: Vec<EpsRun<T>>,
}

fn thread_count() -> usize {
    std::env::var("CTMC_LUMPER_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(usize::from)
                .unwrap_or(1)
        })
}

fn run_one<T: Real>(
    base: &MultiscaleSpec<T>,
    mu0: &ProbabilityVector<T>,
    grid: &TimeGrid<T>,
    eps: T,
    alpha: T,
    delta: Option<T>,
    eff0: Option<&ProbabilityVector<T>>,
) -> Result<EpsRun<T>> {
    let spec = base.with_epsilon(eps)?;
    let l = build_l_eps(&spec)?;
    let xi = slow_map(&spec);
    let fine = solve_constant(&l, mu0, grid)?;
    let lumped = push_forward_trajectory(&fine, &xi)?;
    let n_eps = effective_generator_eps(&spec)?;
    let eta0 = match eff0 {
        Some(v) => v.clone(),
        None => push_forward(mu0, &xi)?,
    };
    let effective = solve_constant(&n_eps, &eta0, grid)?;
    let bound = eps_bound_report(&spec, &fine, &lumped, &effective, alpha, delta)?;

    let rho = l.stationary_measure()?;
    let pi = push_forward(&rho, &xi)?;
    let fit_lumped = tv_decay_fit(&lumped, &pi, DECAY_FIT_WINDOW).ok();
    let fit_effective = tv_decay_fit(&effective, &pi, DECAY_FIT_WINDOW).ok();
    let envelope = match (&fit_lumped, &fit_effective) {
        (Some(fl), Some(fe)) => long_time_envelope(&bound, fl, fe).ok(),
        _ => None,
    };
    Ok(EpsRun {
        eps,
        bound,
        fine,
        lumped,
        effective,
        fit_lumped,
        fit_effective,
        envelope,
    })
}

/// Runs a sweep over the configured timescale ratios.
///
/// The constant for the certificates is resolved once, the ratios are
/// processed in parallel, and per-ratio failures become failure records
/// rather than aborting the study. The slope is fitted on
/// `(log ratio, log sup entropy)` over the configured window and reported
/// as undefined when fewer than two points qualify.
pub fn run_study<T: Real + Send + Sync>(config: &StudyConfig<T>) -> Result<StudyOutput<T>> {
    config.validate()?;
    let mut notes = Vec::new();

    let (name, base, mu0) = match &config.source {
        StudySource::Preset(id) => {
            let (spec, mu0) = scenario::<T>(*id, config.n)?;
            if *id == Scenario::S3 {
                notes.push(
                    "concentrated initial datum normalized to unit mass: weights 1 and 0.3 on \
                     the two corner states"
                        .to_string(),
                );
            }
            (id.tag().to_string(), spec, mu0)
        }
        StudySource::Custom { name, spec, mu0 } => {
            if mu0.space() != &spec.full_space() {
                return Err(Error::SpaceMismatch {
                    detail: "initial datum does not live on the family's product space"
                        .to_string(),
                });
            }
            (name.clone(), spec.clone(), mu0.clone())
        }
    };
    if let Some(eff0) = &config.eff0 {
        if eff0.space() != &base.slow_space() {
            return Err(Error::SpaceMismatch {
                detail: "effective initial datum does not live on the slow space".to_string(),
            });
        }
        notes.push("effective dynamics started from a caller-supplied datum".to_string());
    }

    let (alpha, alpha_method) = match config.alpha {
        AlphaMode::Fixed(a) => (a, "fixed"),
        AlphaMode::Estimate => {
            let rho0 = base.q0().stationary_measure()?;
            let est0 = estimate_lsi_constant_with(base.q0(), &rho0, config.starts, config.seed)?;
            let alpha = if base.q1() == base.q0() {
                notes.push(format!(
                    "log-Sobolev constant {:.6e} estimated by {} over {} samples; both fast \
                     blocks are identical",
                    as_f64(est0.alpha),
                    est0.method.tag(),
                    est0.samples
                ));
                est0.alpha
            } else {
                let rho1 = base.q1().stationary_measure()?;
                let est1 =
                    estimate_lsi_constant_with(base.q1(), &rho1, config.starts, config.seed)?;
                notes.push(format!(
                    "log-Sobolev constants {:.6e} and {:.6e} estimated per block; using the \
                     smaller",
                    as_f64(est0.alpha),
                    as_f64(est1.alpha)
                ));
                est0.alpha.min(est1.alpha)
            };
            (alpha, "estimate")
        }
    };

    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => TimeGrid::experiment_default(config.t_end)?,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::BadConfig {
            detail: format!("could not build the worker pool: {e}"),
        })?;
    let outcomes: Vec<(T, Result<EpsRun<T>>)> = pool.install(|| {
        config
            .epsilons
            .par_iter()
            .map(|&eps| {
                (
                    eps,
                    run_one(
                        &base,
                        &mu0,
                        &grid,
                        eps,
                        alpha,
                        config.delta,
                        config.eff0.as_ref(),
                    ),
                )
            })
            .collect()
    });

    let mut runs = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (eps, outcome) in outcomes {
        match outcome {
            Ok(run) => {
                records.push(EpsRecord {
                    eps,
                    sup_entropy: run.bound.sup_lhs(),
                    t_argmax: run.bound.t_argmax(),
                    verdict: run.bound.verdict(),
                });
                if run.fit_lumped.is_none() || run.fit_effective.is_none() {
                    notes.push(format!(
                        "eps = {:e}: no long-time envelope, the decay window held too few points",
                        as_f64(eps)
                    ));
                }
                runs.push(run);
            }
            Err(err) => failures.push(EpsFailure {
                eps,
                message: err.to_string(),
            }),
        }
    }

    let fit_window: Vec<T> = match &config.fit_window {
        Some(w) => w.clone(),
        None => config
            .epsilons
            .iter()
            .copied()
            .filter(|&e| as_f64(e) >= DEFAULT_FIT_MIN_EPS * (1.0 - 1e-9))
            .collect(),
    };
    let points: Vec<(T, T)> = records.iter().map(|r| (r.eps, r.sup_entropy)).collect();
    let slope = match fit_rate(&points, &fit_window) {
        Ok(s) => Some(s),
        Err(err) => {
            notes.push(format!("slope undefined: {err}"));
            None
        }
    };

    Ok(StudyOutput {
        report: ConvergenceReport {
            scenario: name,
            n: base.n(),
            t_end: grid.t_end(),
            alpha,
            alpha_method: alpha_method.to_string(),
            delta: config.delta,
            records,
            failures,
            slope,
            fit_window,
            notes,
        },
        runs,
    })
}

/// Least-squares slope of `log value` against `log eps`, over the points
/// whose ratio appears in `window`.
pub fn fit_rate<T: Real>(points: &[(T, T)], window: &[T]) -> Result<T> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(eps, value) in points {
        if !window.contains(&eps) {
            continue;
        }
        if !(as_f64(value) > 0.0) {
            return Err(Error::NonPositiveValue {
                value: as_f64(value),
            });
        }
        xs.push(eps.ln());
        ys.push(value.ln());
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientPoints {
            have: xs.len(),
            need: 2,
        });
    }
    let (slope, _) = crate::dynamics::least_squares_line(&xs, &ys);
    Ok(slope)
}

fn eps_tag(eps: f64) -> String {
    format!("{eps:e}")
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    written.push(path);
    Ok(())
}

/// Writes all study artifacts into `dir`, creating it if needed, and
/// returns the written paths in order.
///
/// Per ratio: an entropy-profile CSV (`t,relative_entropy`), the three
/// trajectory CSVs, and the certificate JSON. For the sweep: the
/// convergence report JSON and a `ratio, worst entropy` CSV.
pub fn emit(output: &StudyOutput<f64>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &output.runs {
        let tag = eps_tag(run.eps);
        let mut profile = String::from("t,relative_entropy\n");
        for (k, &h) in run.bound.lhs().iter().enumerate() {
            profile.push_str(&io::full_precision(run.bound.grid().t(k)));
            profile.push(',');
            profile.push_str(&io::full_precision(h));
            profile.push('\n');
        }
        write_file(dir, &format!("profile_eps_{tag}.csv"), &profile, &mut written)?;
        write_file(
            dir,
            &format!("full_eps_{tag}.csv"),
            &io::trajectory_csv(&run.fine),
            &mut written,
        )?;
        write_file(
            dir,
            &format!("cg_eps_{tag}.csv"),
            &io::trajectory_csv(&run.lumped),
            &mut written,
        )?;
        write_file(
            dir,
            &format!("eff_eps_{tag}.csv"),
            &io::trajectory_csv(&run.effective),
            &mut written,
        )?;
        let mut report_json = io::bound_report_json(&run.bound);
        report_json.push('\n');
        write_file(
            dir,
            &format!("bounds_eps_{tag}.json"),
            &report_json,
            &mut written,
        )?;
    }

    let mut convergence_json = io::convergence_report_json(&output.report);
    convergence_json.push('\n');
    write_file(dir, "convergence.json", &convergence_json, &mut written)?;

    let mut curve = String::from("eps,sup_entropy\n");
    for record in &output.report.records {
        curve.push_str(&io::full_precision(record.eps));
        curve.push(',');
        curve.push_str(&io::full_precision(record.sup_entropy));
        curve.push('\n');
    }
    write_file(dir, "convergence.csv", &curve, &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(epsilons: &[f64]) -> StudyConfig<f64> {
        let mut config = StudyConfig::preset(Scenario::S1);
        config.n = 4;
        config.epsilons = epsilons.to_vec();
        config.t_end = 2.0;
        config.grid = Some(TimeGrid::uniform(2.0, 80).unwrap());
        config.alpha = AlphaMode::Fixed(1.0);
        config
    }

    #[test]
    fn fit_rate_recovers_exact_power_laws() {
        let window = [1.0, 0.1, 0.01];
        let linear: Vec<(f64, f64)> = window.iter().map(|&e| (e, 3.0 * e)).collect();
        assert!((fit_rate(&linear, &window).unwrap() - 1.0).abs() < 1e-12);
        let quadratic: Vec<(f64, f64)> = window.iter().map(|&e| (e, 0.5 * e * e)).collect();
        assert!((fit_rate(&quadratic, &window).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_uses_only_the_window() {
        let points: [(f64, f64); 3] = [(1.0, 1.0), (0.1, 0.1), (0.01, 17.0)];
        let slope = fit_rate(&points, &[1.0, 0.1]).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_rate(&[(1.0, 1.0)], &[1.0]),
            Err(Error::InsufficientPoints { have: 1, need: 2 })
        ));
        assert!(matches!(
            fit_rate(&[(1.0, 0.0), (0.1, 0.1)], &[1.0, 0.1]),
            Err(Error::NonPositiveValue { .. })
        ));
    }

    #[test]
    fn single_ratio_study_reports_undefined_slope() {
        let config = quick_config(&[0.5]);
        let output = run_study(&config).unwrap();
        assert!(output.report.slope.is_none());
        assert!(output
            .report
            .notes
            .iter()
            .any(|n| n.contains("slope undefined")));
        assert_eq!(output.report.records.len(), 1);
        assert!(output.report.failures.is_empty());
    }

    #[test]
    fn study_records_keep_ratio_order_and_hold_verdicts() {
        let config = quick_config(&[1.0, 0.5]);
        let output = run_study(&config).unwrap();
        assert_eq!(output.report.records.len(), 2);
        assert_eq!(output.report.records[0].eps, 1.0);
        assert_eq!(output.report.records[1].eps, 0.5);
        for record in &output.report.records {
            assert!(record.verdict);
            assert!(record.sup_entropy > 0.0);
        }
        assert!(output.report.slope.is_some());
        assert_eq!(output.report.alpha_method, "fixed");
        assert_eq!(output.report.scenario, "S1");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = quick_config(&[]);
        assert!(matches!(
            run_study(&config),
            Err(Error::BadConfig { .. })
        ));
        config = quick_config(&[0.5, 1.0]);
        assert!(matches!(
            run_study(&config),
            Err(Error::BadConfig { .. })
        ));
        config = quick_config(&[1.0]);
        config.alpha = AlphaMode::Fixed(0.0);
        assert!(matches!(
            run_study(&config),
            Err(Error::BadConfig { .. })
        ));
    }

    #[test]
    fn emit_writes_the_expected_files_deterministically() {
        let config = quick_config(&[1.0, 0.5]);
        let output = run_study(&config).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let written_a = emit(&output, dir_a.path()).unwrap();
        let written_b = emit(&output, dir_b.path()).unwrap();
        assert_eq!(written_a.len(), 2 * 5 + 2);
        assert_eq!(written_a.len(), written_b.len());
        for (a, b) in written_a.iter().zip(&written_b) {
            assert_eq!(a.file_name(), b.file_name());
            let bytes_a = std::fs::read(a).unwrap();
            let bytes_b = std::fs::read(b).unwrap();
            assert_eq!(bytes_a, bytes_b, "{:?} differs between runs", a.file_name());
        }
        let names: Vec<String> = written_a
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect();
        assert!(names.contains(&"profile_eps_1e0.csv".to_string()));
        assert!(names.contains(&"bounds_eps_5e-1.json".to_string()));
        assert!(names.contains(&"convergence.json".to_string()));
        assert!(names.contains(&"convergence.csv".to_string()));
    }

    #[test]
    fn emit_handles_an_empty_study() {
        let output: StudyOutput<f64> = StudyOutput {
            report: ConvergenceReport {
                scenario: "empty".to_string(),
                n: 0,
                t_end: 0.0,
                alpha: 1.0,
                alpha_method: "fixed".to_string(),
                delta: None,
                records: Vec::new(),
                failures: Vec::new(),
                slope: None,
                fit_window: Vec::new(),
                notes: Vec::new(),
            },
            runs: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let written = emit(&output, dir.path()).unwrap();
        assert_eq!(written.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert_eq!(csv, "eps,sup_entropy\n");
        let json = std::fs::read_to_string(dir.path().join("convergence.json")).unwrap();
        let parsed = crate::io::parse_convergence_report(&json).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.slope.is_none());
    }

    #[test]
    fn custom_source_requires_matching_spaces() {
        let (spec, mu0) = scenario::<f64>(Scenario::S1, 4).unwrap();
        let wrong = ProbabilityVector::uniform(spec.fast_space().clone());
        let mut config = StudyConfig::custom("mine", spec.clone(), wrong);
        config.epsilons = vec![1.0];
        config.alpha = AlphaMode::Fixed(1.0);
        assert!(matches!(
            run_study(&config),
            Err(Error::SpaceMismatch { .. })
        ));

        let mut config = StudyConfig::custom("mine", spec, mu0);
        config.epsilons = vec![1.0];
        config.t_end = 1.0;
        config.grid = Some(TimeGrid::uniform(1.0, 40).unwrap());
        config.alpha = AlphaMode::Fixed(1.0);
        let output = run_study(&config).unwrap();
        assert_eq!(output.report.scenario, "mine");
        assert_eq!(output.runs.len(), 1);
    }
}
