//! Labeled finite state spaces, generators, probability vectors, and the
//! structural checks on them.
//!
//! Invariants enforced at construction:
//! - a [`Generator`] has nonnegative off-diagonal rates and rows summing to
//!   exactly zero; when the raw row sum is within tolerance the diagonal is
//!   recomputed as the negated off-diagonal sum, so downstream identities can
//!   rely on exact zero row sums;
//! - a [`ProbabilityVector`] is entrywise nonnegative (negative dust within
//!   tolerance is clamped to zero) and sums to one within tolerance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Default tolerance on raw generator row sums.
pub const TOL_ROW: f64 = 1e-10;
/// Default tolerance on probability-vector entries and normalization.
pub const TOL_PROB: f64 = 1e-12;
/// Default tolerance for the detailed-balance check.
pub const TOL_DETAILED_BALANCE: f64 = 1e-10;
/// Default bound on `‖Lᵀρ‖∞` accepted for a computed stationary measure.
pub const TOL_STATIONARY_RESIDUAL: f64 = 1e-10;

/// Ordered collection of distinct state labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    /// Builds a state space from distinct labels; at least one is required.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyStateSpace);
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::DuplicateLabel {
                    label: label.clone(),
                });
            }
        }
        Ok(Self { labels })
    }

    /// State space labeled `"0"`, `"1"`, ..., `"n-1"`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    /// Product space with labels `"a:b"` for `a` in `self`, `b` in `other`.
    ///
    /// The left factor ranges slowest, matching row-major block layouts.
    pub fn product(&self, other: &StateSpace) -> StateSpace {
        let labels = self
            .labels
            .iter()
            .flat_map(|a| other.labels.iter().map(move |b| format!("{a}:{b}")))
            .collect();
        StateSpace { labels }
    }

    /// Number of states.
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// All labels in order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label at position `i`.
    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Position of `label`, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

fn ensure_finite<T: Real>(value: T, context: &str) -> Result<()> {
    if as_f64(value).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput {
            context: context.to_string(),
        })
    }
}

/// Rate matrix of a continuous-time Markov chain over a labeled state space.
///
/// Entry `(from, to)` is the jump rate from state `from` to state `to`;
/// off-diagonal entries are nonnegative and every row sums to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T: Real> {
    space: StateSpace,
    rates: DMatrix<T>,
}

impl<T: Real> Generator<T> {
    /// Checks the generator invariants and repairs the diagonal.
    ///
    /// Off-diagonal entries must be nonnegative exactly; each raw row sum
    /// must vanish within [`TOL_ROW`], after which the diagonal is replaced
    /// by the negated off-diagonal sum so the row sums are exactly zero.
    pub fn validate(space: StateSpace, rates: DMatrix<T>) -> Result<Self> {
        Self::validate_with_tol(space, rates, real(TOL_ROW))
    }

    /// Same as [`Generator::validate`] with an explicit row-sum tolerance.
    pub fn validate_with_tol(space: StateSpace, mut rates: DMatrix<T>, tol_row: T) -> Result<Self> {
        let n = space.size();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::ShapeMismatch {
                rows: rates.nrows(),
                cols: rates.ncols(),
                states: n,
            });
        }
        for i in 0..n {
            for j in 0..n {
                ensure_finite(rates[(i, j)], &format!("rate ({i}, {j})"))?;
                if i != j && rates[(i, j)] < T::zero() {
                    return Err(Error::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: as_f64(rates[(i, j)]),
                    });
                }
            }
        }
        for i in 0..n {
            let mut off = T::zero();
            for j in 0..n {
                if j != i {
                    off += rates[(i, j)];
                }
            }
            let residual = off + rates[(i, i)];
            if residual.abs() > tol_row {
                return Err(Error::RowSumViolation {
                    row: i,
                    residual: as_f64(residual),
                    tol: as_f64(tol_row),
                });
            }
            rates[(i, i)] = -off;
        }
        Ok(Self { space, rates })
    }

    /// Builds a generator from the off-diagonal part of `rates`, discarding
    /// whatever diagonal it has and setting each diagonal entry to the
    /// negated off-diagonal row sum.
    pub fn from_off_diagonal(space: StateSpace, mut rates: DMatrix<T>) -> Result<Self> {
        let n = space.size();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::ShapeMismatch {
                rows: rates.nrows(),
                cols: rates.ncols(),
                states: n,
            });
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                ensure_finite(rates[(i, j)], &format!("rate ({i}, {j})"))?;
                if rates[(i, j)] < T::zero() {
                    return Err(Error::NegativeOffDiagonal {
                        row: i,
                        col: j,
                        value: as_f64(rates[(i, j)]),
                    });
                }
            }
        }
        for i in 0..n {
            let mut off = T::zero();
            for j in 0..n {
                if j != i {
                    off += rates[(i, j)];
                }
            }
            rates[(i, i)] = -off;
        }
        Ok(Self { space, rates })
    }

    /// The underlying state space.
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// The rate matrix.
    pub fn rates(&self) -> &DMatrix<T> {
        &self.rates
    }

    /// Single rate entry `(from, to)`.
    pub fn rate(&self, from: usize, to: usize) -> T {
        self.rates[(from, to)]
    }

    /// Number of states.
    pub fn size(&self) -> usize {
        self.space.size()
    }

    /// Supremum operator norm `max_i Σ_j |L(i, j)|`.
    pub fn sup_norm(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.size() {
            let mut row = T::zero();
            for j in 0..self.size() {
                row += self.rates[(i, j)].abs();
            }
            if row > best {
                best = row;
            }
        }
        best
    }

    /// Applies the transposed rate matrix: `Lᵀ v`.
    pub fn transpose_apply(&self, v: &DVector<T>) -> DVector<T> {
        self.rates.tr_mul(v)
    }

    /// `max_x |(Lᵀ ρ)(x)|`, the stationarity residual of `rho`.
    pub fn stationarity_residual(&self, rho: &ProbabilityVector<T>) -> Result<T> {
        if rho.space() != self.space() {
            return Err(Error::DimensionMismatch {
                left: self.size(),
                right: rho.len(),
            });
        }
        Ok(self.transpose_apply(rho.mass()).amax())
    }

    /// True iff every state reaches every other state through positive-rate
    /// edges (strong connectivity of the positive-rate digraph; rates are
    /// compared against zero exactly).
    pub fn is_irreducible(&self) -> bool {
        let n = self.size();
        let forward = |from: usize, to: usize| self.rates[(from, to)] > T::zero();
        let backward = |from: usize, to: usize| self.rates[(to, from)] > T::zero();
        reaches_all(n, forward) && reaches_all(n, backward)
    }

    /// Unique stationary measure `ρ` with `Lᵀρ = 0`, `ρ > 0`, `Σρ = 1`.
    ///
    /// Solves the rank-deficient system `Lᵀρ = 0` stacked with the
    /// normalization row `Σρ = 1` by least squares, refines the solution
    /// against the stacked residual, and checks the final residual against
    /// [`TOL_STATIONARY_RESIDUAL`].
    pub fn stationary_measure(&self) -> Result<ProbabilityVector<T>> {
        self.stationary_measure_with_tol(real(TOL_STATIONARY_RESIDUAL))
    }

    /// Same as [`Generator::stationary_measure`] with an explicit residual bound.
    pub fn stationary_measure_with_tol(&self, tol_residual: T) -> Result<ProbabilityVector<T>> {
        if !self.is_irreducible() {
            return Err(Error::NotIrreducible);
        }
        let n = self.size();
        let mut stacked = DMatrix::<T>::zeros(n + 1, n);
        for i in 0..n {
            for j in 0..n {
                stacked[(i, j)] = self.rates[(j, i)];
            }
        }
        for j in 0..n {
            stacked[(n, j)] = T::one();
        }
        let mut rhs = DVector::<T>::zeros(n + 1);
        rhs[n] = T::one();
        let svd = stacked.clone().svd(true, true);
        let solution = svd
            .solve(&rhs, real(1e-14))
            .map_err(|detail| Error::SolveFailure {
                detail: detail.to_string(),
            })?;
        let mut mass = solution.column(0).into_owned();
        for _ in 0..2 {
            let defect = &rhs - &stacked * &mass;
            match svd.solve(&defect, real(1e-14)) {
                Ok(update) => mass += update.column(0).into_owned(),
                Err(_) => break,
            }
        }
        let min = mass.min();
        if min <= T::zero() {
            return Err(Error::SolveFailure {
                detail: format!(
                    "stationary measure of an irreducible generator must be positive, got min {}",
                    as_f64(min)
                ),
            });
        }
        let sum = mass.sum();
        mass /= sum;
        let rho = ProbabilityVector::from_renormalized(self.space.clone(), mass);
        let residual = self.stationarity_residual(&rho)?;
        if residual > tol_residual {
            return Err(Error::SolveFailure {
                detail: format!(
                    "stationarity residual {} exceeds tolerance {}",
                    as_f64(residual),
                    as_f64(tol_residual)
                ),
            });
        }
        Ok(rho)
    }

    /// True iff `ρ(x) L(x, x') = ρ(x') L(x', x)` for all pairs, within
    /// [`TOL_DETAILED_BALANCE`].
    pub fn check_detailed_balance(&self, rho: &ProbabilityVector<T>) -> Result<bool> {
        self.check_detailed_balance_with_tol(rho, real(TOL_DETAILED_BALANCE))
    }

    /// Same as [`Generator::check_detailed_balance`] with an explicit tolerance.
    pub fn check_detailed_balance_with_tol(
        &self,
        rho: &ProbabilityVector<T>,
        tol: T,
    ) -> Result<bool> {
        if rho.len() != self.size() {
            return Err(Error::DimensionMismatch {
                left: self.size(),
                right: rho.len(),
            });
        }
        let n = self.size();
        for x1 in 0..n {
            for x2 in (x1 + 1)..n {
                let fwd = rho.get(x1) * self.rates[(x1, x2)];
                let bwd = rho.get(x2) * self.rates[(x2, x1)];
                if (fwd - bwd).abs() > tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Spectral gap `−max{Re λ : λ eigenvalue of L, λ ≠ 0}`.
    ///
    /// The structural zero eigenvalue is identified as the eigenvalue of
    /// smallest modulus; for an irreducible generator every other eigenvalue
    /// has strictly negative real part, so the gap is positive.
    pub fn spectral_gap(&self) -> Result<T> {
        if !self.is_irreducible() {
            return Err(Error::NotIrreducible);
        }
        let eigs = self.rates.clone().complex_eigenvalues();
        if eigs.len() < 2 {
            return Err(Error::EigenFailure {
                detail: "single-state chain has no nonzero eigenvalue".to_string(),
            });
        }
        let modulus_sq = |i: usize| eigs[i].re * eigs[i].re + eigs[i].im * eigs[i].im;
        let mut zero_idx = 0;
        for i in 1..eigs.len() {
            if modulus_sq(i) < modulus_sq(zero_idx) {
                zero_idx = i;
            }
        }
        let mut max_re: Option<T> = None;
        for i in 0..eigs.len() {
            if i == zero_idx {
                continue;
            }
            let re = eigs[i].re;
            if max_re.is_none_or(|m| re > m) {
                max_re = Some(re);
            }
        }
        let gap = -max_re.expect("at least one nonzero eigenvalue");
        if gap <= T::zero() {
            return Err(Error::EigenFailure {
                detail: format!("nonpositive spectral gap {}", as_f64(gap)),
            });
        }
        Ok(gap)
    }
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0_usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for (v, visited) in seen.iter_mut().enumerate() {
            if !*visited && edge(u, v) {
                *visited = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

/// Probability measure on a labeled state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector<T: Real> {
    space: StateSpace,
    mass: DVector<T>,
}

impl<T: Real> ProbabilityVector<T> {
    /// Checks nonnegativity and normalization within [`TOL_PROB`].
    ///
    /// Entries in `[-tol, 0)` are clamped to zero; more negative entries are
    /// rejected. The clamped vector must sum to one within the tolerance.
    pub fn new(space: StateSpace, mass: DVector<T>) -> Result<Self> {
        Self::new_with_tol(space, mass, real(TOL_PROB))
    }

    /// Same as [`ProbabilityVector::new`] with an explicit tolerance.
    pub fn new_with_tol(space: StateSpace, mut mass: DVector<T>, tol: T) -> Result<Self> {
        if mass.len() != space.size() {
            return Err(Error::ShapeMismatch {
                rows: mass.len(),
                cols: 1,
                states: space.size(),
            });
        }
        for i in 0..mass.len() {
            ensure_finite(mass[i], &format!("mass entry {i}"))?;
            if mass[i] < -tol {
                return Err(Error::NegativeMass {
                    index: i,
                    value: as_f64(mass[i]),
                });
            }
            if mass[i] < T::zero() {
                mass[i] = T::zero();
            }
        }
        let sum = mass.sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::MassNotNormalized {
                sum: as_f64(sum),
                tol: as_f64(tol),
            });
        }
        Ok(Self { space, mass })
    }

    /// Normalizes nonnegative weights (not all zero) into a probability vector.
    pub fn from_weights(space: StateSpace, weights: DVector<T>) -> Result<Self> {
        if weights.len() != space.size() {
            return Err(Error::ShapeMismatch {
                rows: weights.len(),
                cols: 1,
                states: space.size(),
            });
        }
        for i in 0..weights.len() {
            ensure_finite(weights[i], &format!("weight {i}"))?;
            if weights[i] < T::zero() {
                return Err(Error::NegativeMass {
                    index: i,
                    value: as_f64(weights[i]),
                });
            }
        }
        let sum = weights.sum();
        if sum <= T::zero() {
            return Err(Error::MassNotNormalized {
                sum: as_f64(sum),
                tol: 0.0,
            });
        }
        Ok(Self::from_renormalized(space, weights / sum))
    }

    /// Uniform distribution.
    pub fn uniform(space: StateSpace) -> Self {
        let n = space.size();
        let w = T::one() / real::<T>(n as f64);
        Self {
            space,
            mass: DVector::from_element(n, w),
        }
    }

    /// Point mass at `label`.
    pub fn dirac(space: StateSpace, label: &str) -> Result<Self> {
        let idx = space.index_of(label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_string(),
        })?;
        let mut mass = DVector::zeros(space.size());
        mass[idx] = T::one();
        Ok(Self { space, mass })
    }

    /// Internal constructor for vectors already scaled to total mass one.
    pub(crate) fn from_renormalized(space: StateSpace, mass: DVector<T>) -> Self {
        Self { space, mass }
    }

    /// The underlying state space.
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// The mass vector.
    pub fn mass(&self) -> &DVector<T> {
        &self.mass
    }

    /// Mass at position `i`.
    pub fn get(&self, i: usize) -> T {
        self.mass[i]
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    /// True when the space is empty (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.mass.len() == 0
    }

    /// Smallest entry.
    pub fn min_mass(&self) -> T {
        self.mass.min()
    }

    /// True iff every entry is strictly positive.
    pub fn is_positive(&self) -> bool {
        self.min_mass() > T::zero()
    }
}
