//! File formats for the `f64` domain types: JSON for generators, probability
//! vectors, lumping maps, slow-fast specifications, log-Sobolev estimates,
//! certificate reports, and convergence reports; CSV for trajectories.
//!
//! Parsers validate through the domain constructors, so structural problems
//! surface as the same errors the constructors raise, and any non-finite
//! number is rejected. Writers print floats with 17 significant digits (CSV)
//! or shortest round-trip decimals (JSON), so reading a file back reproduces
//! the values bit for bit. A certificate's vacuous bound points, where the
//! right-hand side is infinite, serialize as JSON `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{Generator, ProbabilityVector, StateSpace};
use crate::coarse_graining::CoarseGrainingMap;
use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::error_bounds::BoundReport;
use crate::functionals::LsiEstimate;
use crate::study::{ConvergenceReport, EpsFailure, EpsRecord};

fn ensure_finite(value: f64, context: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput {
            context: context.to_string(),
        })
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<nalgebra::DMatrix<f64>> {
    if rows.len() != n {
        return Err(Error::Format {
            detail: format!("{what} has {} rows, expected {n}", rows.len()),
        });
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Format {
                detail: format!("{what} row {i} has {} entries, expected {n}", row.len()),
            });
        }
    }
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    states: Vec<String>,
    rates: Vec<Vec<f64>>,
}

/// Serializes a generator as `{ "states": [...], "rates": [[...]] }`.
pub fn generator_json(g: &Generator<f64>) -> String {
    let file = GeneratorFile {
        states: g.space().labels().to_vec(),
        rates: matrix_rows(g.rates()),
    };
    to_pretty(&file)
}

/// Parses a generator, validating labels, shape, sign structure, and row
/// sums through the domain constructor.
pub fn parse_generator(json: &str) -> Result<Generator<f64>> {
    let file: GeneratorFile = serde_json::from_str(json)?;
    let space = StateSpace::new(file.states)?;
    let rates = matrix_from_rows(&file.rates, space.size(), "rate matrix")?;
    Generator::validate(space, rates)
}

#[derive(Serialize, Deserialize)]
struct VectorFile {
    states: Vec<String>,
    mass: Vec<f64>,
}

/// Serializes a probability vector as `{ "states": [...], "mass": [...] }`.
pub fn probability_vector_json(v: &ProbabilityVector<f64>) -> String {
    let file = VectorFile {
        states: v.space().labels().to_vec(),
        mass: v.mass().iter().copied().collect(),
    };
    to_pretty(&file)
}

/// Parses a probability vector, validating nonnegativity and normalization.
pub fn parse_probability_vector(json: &str) -> Result<ProbabilityVector<f64>> {
    let file: VectorFile = serde_json::from_str(json)?;
    let space = StateSpace::new(file.states)?;
    ProbabilityVector::new(
        space,
        nalgebra::DVector::from_column_slice(&file.mass),
    )
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    fine: Vec<String>,
    coarse: Vec<String>,
    assignment: BTreeMap<String, String>,
}

/// Serializes a lumping map with the assignment as a label-to-label object.
pub fn coarse_graining_map_json(map: &CoarseGrainingMap) -> String {
    let assignment = (0..map.fine().size())
        .map(|x| {
            (
                map.fine().label(x).to_string(),
                map.coarse().label(map.image_of(x)).to_string(),
            )
        })
        .collect();
    let file = MapFile {
        fine: map.fine().labels().to_vec(),
        coarse: map.coarse().labels().to_vec(),
        assignment,
    };
    to_pretty(&file)
}

/// Parses a lumping map. Every fine label must be assigned to a coarse label
/// that exists, and the assignment may not mention unknown fine labels.
pub fn parse_coarse_graining_map(json: &str) -> Result<CoarseGrainingMap> {
    let file: MapFile = serde_json::from_str(json)?;
    let fine = StateSpace::new(file.fine)?;
    let coarse = StateSpace::new(file.coarse)?;
    for key in file.assignment.keys() {
        if fine.index_of(key).is_none() {
            return Err(Error::UnknownLabel { label: key.clone() });
        }
    }
    let mut assignment = Vec::with_capacity(fine.size());
    for x in 0..fine.size() {
        let label = fine.label(x);
        let target = file
            .assignment
            .get(label)
            .ok_or_else(|| Error::UnassignedState {
                label: label.to_string(),
            })?;
        let y = coarse.index_of(target).ok_or_else(|| Error::UnknownLabel {
            label: target.clone(),
        })?;
        assignment.push(y);
    }
    CoarseGrainingMap::new(fine, coarse, assignment)
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    n: usize,
    q0: Vec<Vec<f64>>,
    q1: Vec<Vec<f64>>,
    g01: Vec<Vec<f64>>,
    g10: Vec<Vec<f64>>,
}

/// Serializes a slow-fast specification. Fast states are indexed `0..n`;
/// the timescale ratio is supplied at run time, not stored.
pub fn multiscale_spec_json(spec: &crate::multiscale::MultiscaleSpec<f64>) -> String {
    let file = SpecFile {
        n: spec.n(),
        q0: matrix_rows(spec.q0().rates()),
        q1: matrix_rows(spec.q1().rates()),
        g01: matrix_rows(spec.g01()),
        g10: matrix_rows(spec.g10()),
    };
    to_pretty(&file)
}

/// Parses a slow-fast specification at timescale ratio 1.
pub fn parse_multiscale_spec(json: &str) -> Result<crate::multiscale::MultiscaleSpec<f64>> {
    let file: SpecFile = serde_json::from_str(json)?;
    let space = StateSpace::numbered(file.n)?;
    let q0 = Generator::validate(
        space.clone(),
        matrix_from_rows(&file.q0, file.n, "fast block q0")?,
    )?;
    let q1 = Generator::validate(space, matrix_from_rows(&file.q1, file.n, "fast block q1")?)?;
    crate::multiscale::MultiscaleSpec::new(
        q0,
        q1,
        matrix_from_rows(&file.g01, file.n, "coupling g01")?,
        matrix_from_rows(&file.g10, file.n, "coupling g10")?,
        1.0,
    )
}

#[derive(Serialize)]
struct LsiFile<'a> {
    alpha: f64,
    witness: Vec<f64>,
    method: &'a str,
    samples: usize,
}

/// Serializes a log-Sobolev estimate as
/// `{ "alpha": ..., "witness": [...], "method": ..., "samples": ... }`.
pub fn lsi_estimate_json(estimate: &LsiEstimate<f64>) -> String {
    let file = LsiFile {
        alpha: estimate.alpha,
        witness: estimate.argmin_witness.mass().iter().copied().collect(),
        method: estimate.method.tag(),
        samples: estimate.samples,
    };
    to_pretty(&file)
}

/// Flat form of a certificate report as stored on disk. Vacuous bound
/// points carry `None` in `rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRecord {
    /// Timescale ratio, when the report came from a slow-fast family.
    pub eps: Option<f64>,
    /// Time grid shared by all series.
    pub grid: Vec<f64>,
    /// Entropy of the lumped marginal relative to the effective one.
    pub lhs: Vec<f64>,
    /// Operative bound, `None` where it is vacuous.
    pub rhs: Vec<Option<f64>>,
    /// Marginal log-ratio functional.
    pub g: Vec<f64>,
    /// `L^2` norm of `g` over the grid.
    pub g_l2: f64,
    /// Log-Sobolev constant that entered the bound.
    pub alpha: f64,
    /// Largest entropy distance over the grid.
    pub sup_lhs: f64,
    /// Time of the largest entropy distance.
    pub t_argmax: f64,
    /// Whether the bound holds at every grid point.
    pub verdict: bool,
    /// Remarks recorded during assembly.
    pub notes: Vec<String>,
}

impl BoundRecord {
    /// Recomputes the pointwise comparison from the stored series, using
    /// the same roundoff slack as report assembly. Vacuous points pass.
    pub fn verdict_from_series(&self) -> bool {
        use crate::error_bounds::{VERDICT_ABS_SLACK, VERDICT_REL_SLACK};
        self.lhs.iter().zip(&self.rhs).all(|(&l, r)| match r {
            None => true,
            Some(r) => l <= r * (1.0 + VERDICT_REL_SLACK) + VERDICT_ABS_SLACK,
        })
    }
}

/// Flattens a report into its disk form.
pub fn bound_record(report: &BoundReport<f64>) -> BoundRecord {
    BoundRecord {
        eps: report.eps(),
        grid: report.grid().points().to_vec(),
        lhs: report.lhs().to_vec(),
        rhs: report
            .rhs()
            .iter()
            .map(|&r| if r.is_finite() { Some(r) } else { None })
            .collect(),
        g: report.g_values().to_vec(),
        g_l2: report.g_l2(),
        alpha: report.alpha_used(),
        sup_lhs: report.sup_lhs(),
        t_argmax: report.t_argmax(),
        verdict: report.verdict(),
        notes: report.notes().to_vec(),
    }
}

/// Serializes a certificate report.
pub fn bound_report_json(report: &BoundReport<f64>) -> String {
    to_pretty(&bound_record(report))
}

/// Parses a certificate report from disk, checking series lengths and
/// finiteness.
pub fn parse_bound_record(json: &str) -> Result<BoundRecord> {
    let record: BoundRecord = serde_json::from_str(json)?;
    for (len, what) in [
        (record.lhs.len(), "lhs"),
        (record.rhs.len(), "rhs"),
        (record.g.len(), "g"),
    ] {
        if len != record.grid.len() {
            return Err(Error::Format {
                detail: format!(
                    "{what} series has {len} entries but the grid has {}",
                    record.grid.len()
                ),
            });
        }
    }
    for (series, what) in [(&record.grid, "grid"), (&record.lhs, "lhs"), (&record.g, "g")] {
        for &v in series.iter() {
            ensure_finite(v, what)?;
        }
    }
    for r in record.rhs.iter().flatten() {
        ensure_finite(*r, "rhs")?;
    }
    if let Some(eps) = record.eps {
        ensure_finite(eps, "eps")?;
    }
    ensure_finite(record.g_l2, "g_l2")?;
    ensure_finite(record.alpha, "alpha")?;
    ensure_finite(record.sup_lhs, "sup_lhs")?;
    ensure_finite(record.t_argmax, "t_argmax")?;
    Ok(record)
}

#[derive(Serialize, Deserialize)]
struct ConvergenceFile {
    scenario: String,
    n: usize,
    t_end: f64,
    alpha: f64,
    alpha_method: String,
    delta: Option<f64>,
    records: Vec<RecordFile>,
    failures: Vec<FailureFile>,
    slope_defined: bool,
    slope: Option<f64>,
    fit_window: Vec<f64>,
    notes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    eps: f64,
    sup_entropy: f64,
    t_argmax: f64,
    verdict: bool,
}

#[derive(Serialize, Deserialize)]
struct FailureFile {
    eps: f64,
    message: String,
}

/// Serializes a convergence report, flagging an undefined slope explicitly
/// rather than writing a number.
pub fn convergence_report_json(report: &ConvergenceReport<f64>) -> String {
    let file = ConvergenceFile {
        scenario: report.scenario.clone(),
        n: report.n,
        t_end: report.t_end,
        alpha: report.alpha,
        alpha_method: report.alpha_method.clone(),
        delta: report.delta,
        records: report
            .records
            .iter()
            .map(|r| RecordFile {
                eps: r.eps,
                sup_entropy: r.sup_entropy,
                t_argmax: r.t_argmax,
                verdict: r.verdict,
            })
            .collect(),
        failures: report
            .failures
            .iter()
            .map(|f| FailureFile {
                eps: f.eps,
                message: f.message.clone(),
            })
            .collect(),
        slope_defined: report.slope.is_some(),
        slope: report.slope,
        fit_window: report.fit_window.clone(),
        notes: report.notes.clone(),
    };
    to_pretty(&file)
}

/// Parses a convergence report from disk.
pub fn parse_convergence_report(json: &str) -> Result<ConvergenceReport<f64>> {
    let file: ConvergenceFile = serde_json::from_str(json)?;
    ensure_finite(file.t_end, "t_end")?;
    ensure_finite(file.alpha, "alpha")?;
    if let Some(d) = file.delta {
        ensure_finite(d, "delta")?;
    }
    if file.slope_defined != file.slope.is_some() {
        return Err(Error::Format {
            detail: "slope_defined flag disagrees with the slope field".to_string(),
        });
    }
    if let Some(s) = file.slope {
        ensure_finite(s, "slope")?;
    }
    let mut records = Vec::with_capacity(file.records.len());
    for r in file.records {
        ensure_finite(r.eps, "record eps")?;
        ensure_finite(r.sup_entropy, "record sup_entropy")?;
        ensure_finite(r.t_argmax, "record t_argmax")?;
        records.push(EpsRecord {
            eps: r.eps,
            sup_entropy: r.sup_entropy,
            t_argmax: r.t_argmax,
            verdict: r.verdict,
        });
    }
    Ok(ConvergenceReport {
        scenario: file.scenario,
        n: file.n,
        t_end: file.t_end,
        alpha: file.alpha,
        alpha_method: file.alpha_method,
        delta: file.delta,
        records,
        failures: file
            .failures
            .into_iter()
            .map(|f| EpsFailure {
                eps: f.eps,
                message: f.message,
            })
            .collect(),
        slope: file.slope,
        fit_window: file.fit_window,
        notes: file.notes,
    })
}

/// Formats a float with 17 significant digits, enough to round-trip `f64`.
pub fn full_precision(value: f64) -> String {
    format!("{value:.16e}")
}

/// Renders a trajectory as CSV with header `t,<label1>,...` and one row per
/// grid point, at full precision.
pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let mut out = String::from("t");
    for label in traj.space().labels() {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for k in 0..traj.len() {
        out.push_str(&full_precision(traj.grid().t(k)));
        for i in 0..traj.space().size() {
            out.push(',');
            out.push_str(&full_precision(traj.value(k).get(i)));
        }
        out.push('\n');
    }
    out
}

/// Parses a trajectory CSV written by [`trajectory_csv`].
pub fn parse_trajectory_csv(csv: &str) -> Result<Trajectory<f64>> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Format {
        detail: "empty trajectory file".to_string(),
    })?;
    let mut columns = header.split(',');
    if columns.next() != Some("t") {
        return Err(Error::Format {
            detail: "trajectory header must start with \"t\"".to_string(),
        });
    }
    let labels: Vec<&str> = columns.collect();
    let space = StateSpace::new(labels.iter().map(|l| l.to_string()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != labels.len() + 1 {
            return Err(Error::Format {
                detail: format!(
                    "row {row} has {} fields, expected {}",
                    fields.len(),
                    labels.len() + 1
                ),
            });
        }
        let mut parsed = Vec::with_capacity(fields.len());
        for field in &fields {
            let value: f64 = field.parse().map_err(|_| Error::Format {
                detail: format!("row {row}: {field:?} is not a number"),
            })?;
            ensure_finite(value, &format!("row {row}"))?;
            parsed.push(value);
        }
        times.push(parsed[0]);
        values.push(ProbabilityVector::new(
            space.clone(),
            nalgebra::DVector::from_column_slice(&parsed[1..]),
        )?);
    }
    Trajectory::new(TimeGrid::from_points(times)?, values)
}

fn to_pretty<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("serialization of plain data cannot fail")
}
