//! Slow-fast families with two macro-states: a slow binary variable coupled
//! to a fast chain whose internal rates are inflated by `1/epsilon`.
//!
//! The full generator lives on the product space `{0,1} x Z` with labels
//! `"y:z"`, the left factor ranging slowest. As `epsilon` shrinks, the fast
//! variable equilibrates within each block and the slow variable approaches
//! a two-state chain whose jump rates average the coupling against the block
//! stationary measures. This module builds the full generator, that averaged
//! limit, the ring presets used by the convergence study, and diagnostics
//! measuring the distance from the limit at finite `epsilon`.

use nalgebra::{DMatrix, DVector};

use crate::chain::{Generator, ProbabilityVector, StateSpace};
use crate::coarse_graining::{disintegrate, effective_generator, CoarseGrainingMap};
use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Two-block slow-fast model: fast generators for each value of the slow
/// variable, nonnegative coupling matrices for the two slow transitions, and
/// the timescale ratio `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleSpec<T: Real> {
    q0: Generator<T>,
    q1: Generator<T>,
    g01: DMatrix<T>,
    g10: DMatrix<T>,
    epsilon: T,
}

impl<T: Real> MultiscaleSpec<T> {
    /// Validates block shapes, coupling nonnegativity, and the timescale
    /// ratio. Both fast blocks must be irreducible so that they have unique
    /// stationary measures to average against.
    pub fn new(
        q0: Generator<T>,
        q1: Generator<T>,
        g01: DMatrix<T>,
        g10: DMatrix<T>,
        epsilon: T,
    ) -> Result<Self> {
        if q0.space() != q1.space() {
            return Err(Error::SpaceMismatch {
                detail: "fast blocks live on different state spaces".to_string(),
            });
        }
        for q in [&q0, &q1] {
            if !q.is_irreducible() {
                return Err(Error::NotIrreducible);
            }
        }
        let n = q0.size();
        for g in [&g01, &g10] {
            check_coupling(g, n)?;
        }
        check_epsilon(epsilon)?;
        Ok(Self {
            q0,
            q1,
            g01,
            g10,
            epsilon,
        })
    }

    /// Same blocks at a different timescale ratio.
    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        check_epsilon(epsilon)?;
        let mut spec = self.clone();
        spec.epsilon = epsilon;
        Ok(spec)
    }

    /// Number of fast states per block.
    pub fn n(&self) -> usize {
        self.q0.size()
    }

    /// Timescale ratio between the slow and fast variables.
    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Fast generator for slow state 0.
    pub fn q0(&self) -> &Generator<T> {
        &self.q0
    }

    /// Fast generator for slow state 1.
    pub fn q1(&self) -> &Generator<T> {
        &self.q1
    }

    /// Coupling rates for the slow jump 0 -> 1.
    pub fn g01(&self) -> &DMatrix<T> {
        &self.g01
    }

    /// Coupling rates for the slow jump 1 -> 0.
    pub fn g10(&self) -> &DMatrix<T> {
        &self.g10
    }

    /// Fast generator for slow state `y` (0 or 1).
    pub fn q_block(&self, y: usize) -> &Generator<T> {
        assert!(y < 2, "slow state index out of range");
        if y == 0 {
            &self.q0
        } else {
            &self.q1
        }
    }

    /// Coupling rates out of slow state `y` (0 or 1).
    pub fn g_block(&self, y: usize) -> &DMatrix<T> {
        assert!(y < 2, "slow state index out of range");
        if y == 0 {
            &self.g01
        } else {
            &self.g10
        }
    }

    /// State space of the fast variable.
    pub fn fast_space(&self) -> &StateSpace {
        self.q0.space()
    }

    /// Two-state space of the slow variable.
    pub fn slow_space(&self) -> StateSpace {
        StateSpace::numbered(2).expect("two states")
    }

    /// Product space of slow and fast variables, slow factor ranging slowest.
    pub fn full_space(&self) -> StateSpace {
        self.slow_space().product(self.fast_space())
    }
}

fn check_coupling<T: Real>(g: &DMatrix<T>, n: usize) -> Result<()> {
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::ShapeMismatch {
            rows: g.nrows(),
            cols: g.ncols(),
            states: n,
        });
    }
    for row in 0..n {
        for col in 0..n {
            let value = g[(row, col)];
            if !as_f64(value).is_finite() {
                return Err(Error::NonFiniteInput {
                    context: format!("coupling rate ({row}, {col})"),
                });
            }
            if value < T::zero() {
                return Err(Error::NegativeOffDiagonal {
                    row,
                    col,
                    value: as_f64(value),
                });
            }
        }
    }
    Ok(())
}

fn check_epsilon<T: Real>(epsilon: T) -> Result<()> {
    let e = as_f64(epsilon);
    if !e.is_finite() {
        return Err(Error::NonFiniteInput {
            context: "timescale ratio".to_string(),
        });
    }
    if e <= 0.0 {
        return Err(Error::NonPositiveValue { value: e });
    }
    Ok(())
}

/// Lumping map from the product space onto the slow variable.
pub fn slow_map<T: Real>(spec: &MultiscaleSpec<T>) -> CoarseGrainingMap {
    let n = spec.n();
    let assignment = (0..2 * n).map(|x| x / n).collect();
    CoarseGrainingMap::new(spec.full_space(), spec.slow_space(), assignment)
        .expect("every product state falls in one of the two blocks")
}

/// Assembles the full generator on the product space: fast rates scaled by
/// `1/epsilon` within each block, coupling rates across blocks, and diagonal
/// entries balancing both contributions.
pub fn build_l_eps<T: Real>(spec: &MultiscaleSpec<T>) -> Result<Generator<T>> {
    let n = spec.n();
    let inv_eps = T::one() / spec.epsilon();
    let mut rates = DMatrix::zeros(2 * n, 2 * n);
    for y in 0..2 {
        let q = spec.q_block(y).rates();
        let g = spec.g_block(y);
        for z1 in 0..n {
            for z2 in 0..n {
                if z1 != z2 {
                    rates[(y * n + z1, y * n + z2)] = inv_eps * q[(z1, z2)];
                }
                rates[(y * n + z1, (1 - y) * n + z2)] = g[(z1, z2)];
            }
        }
    }
    Generator::from_off_diagonal(spec.full_space(), rates)
}

/// Limit model for vanishing `epsilon`: block stationary measures, averaged
/// jump rates, and the resulting two-state generator on the slow variable.
#[derive(Debug, Clone)]
pub struct AveragedModel<T: Real> {
    lambda0: T,
    lambda1: T,
    generator: Generator<T>,
    block_stationaries: [ProbabilityVector<T>; 2],
}

impl<T: Real> AveragedModel<T> {
    /// Averaged jump rate out of slow state 0.
    pub fn lambda0(&self) -> T {
        self.lambda0
    }

    /// Averaged jump rate out of slow state 1.
    pub fn lambda1(&self) -> T {
        self.lambda1
    }

    /// Two-state generator with the averaged rates.
    pub fn generator(&self) -> &Generator<T> {
        &self.generator
    }

    /// Stationary measure of the fast block at slow state `y` (0 or 1).
    pub fn block_stationary(&self, y: usize) -> &ProbabilityVector<T> {
        assert!(y < 2, "slow state index out of range");
        &self.block_stationaries[y]
    }
}

/// Computes the averaged limit of a slow-fast family: each coupling matrix
/// is contracted against the stationary measure of its block, giving the
/// jump rates of a two-state chain for the slow variable.
pub fn averaged_model<T: Real>(spec: &MultiscaleSpec<T>) -> Result<AveragedModel<T>> {
    let rho0 = spec.q0().stationary_measure()?;
    let rho1 = spec.q1().stationary_measure()?;
    let lambda0 = averaged_rate(&rho0, spec.g01());
    let lambda1 = averaged_rate(&rho1, spec.g10());
    let mut rates = DMatrix::zeros(2, 2);
    rates[(0, 1)] = lambda0;
    rates[(1, 0)] = lambda1;
    let generator = Generator::from_off_diagonal(spec.slow_space(), rates)?;
    Ok(AveragedModel {
        lambda0,
        lambda1,
        generator,
        block_stationaries: [rho0, rho1],
    })
}

/// Contracts a coupling matrix against a measure on the departing block:
/// the total jump rate seen when the fast variable is distributed as `rho`.
pub fn averaged_rate<T: Real>(rho: &ProbabilityVector<T>, g: &DMatrix<T>) -> T {
    let mut total = T::zero();
    for z1 in 0..g.nrows() {
        let mut row = T::zero();
        for z2 in 0..g.ncols() {
            row += g[(z1, z2)];
        }
        total += rho.get(z1) * row;
    }
    total
}

/// Effective two-state generator of the full chain relative to its
/// stationary measure. The `1/epsilon` part has zero row sums within each
/// block, so the off-diagonal entries only see the coupling averaged against
/// the conditional stationary measures.
pub fn effective_generator_eps<T: Real>(spec: &MultiscaleSpec<T>) -> Result<Generator<T>> {
    let l = build_l_eps(spec)?;
    let rho = l.stationary_measure()?;
    effective_generator(&l, &rho, &slow_map(spec))
}

/// Total-variation distance between each block conditional of the full
/// chain's stationary measure and the stationary measure of that block's
/// fast generator, indexed by the slow state.
pub fn conditional_stationary_gap<T: Real>(spec: &MultiscaleSpec<T>) -> Result<[T; 2]> {
    let l = build_l_eps(spec)?;
    let rho = l.stationary_measure()?;
    let map = slow_map(spec);
    let parts = disintegrate(&rho, &map)?;
    let mut gaps = [T::zero(), T::zero()];
    for y in 0..2 {
        let conditional =
            parts.conditionals[y]
                .as_ref()
                .ok_or_else(|| Error::UndefinedConditional {
                    label: map.coarse().label(y).to_string(),
                })?;
        let block = spec.q_block(y).stationary_measure()?;
        let mut tv = T::zero();
        for z in 0..spec.n() {
            tv += (conditional.get(z) - block.get(z)).abs();
        }
        gaps[y] = tv;
    }
    Ok(gaps)
}

/// Circulant birth-death generator on a ring of `n` states: rate `r_plus`
/// clockwise and `r_minus` counterclockwise. For `n = 2` both directions
/// reach the same neighbor and the rates add.
pub fn birth_death_ring<T: Real>(n: usize, r_plus: T, r_minus: T) -> Result<Generator<T>> {
    if n < 2 {
        return Err(Error::InvalidSize { n, min: 2 });
    }
    for rate in [r_plus, r_minus] {
        let r = as_f64(rate);
        if !r.is_finite() {
            return Err(Error::NonFiniteInput {
                context: "ring rate".to_string(),
            });
        }
        if r <= 0.0 {
            return Err(Error::NonPositiveValue { value: r });
        }
    }
    let mut rates = DMatrix::zeros(n, n);
    for z in 0..n {
        rates[(z, (z + 1) % n)] += r_plus;
        rates[(z, (z + n - 1) % n)] += r_minus;
    }
    Generator::from_off_diagonal(StateSpace::numbered(n)?, rates)
}

/// Preset families for the convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Symmetric ring, spread-out initial datum.
    S1,
    /// Ring biased 10:1 clockwise, spread-out initial datum.
    S2,
    /// Symmetric ring, initial datum concentrated on two states.
    S3,
}

impl Scenario {
    /// All presets in declaration order.
    pub const ALL: [Scenario; 3] = [Scenario::S1, Scenario::S2, Scenario::S3];

    /// Short name used in filenames and reports.
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" | "s1" => Ok(Scenario::S1),
            "S2" | "s2" => Ok(Scenario::S2),
            "S3" | "s3" => Ok(Scenario::S3),
            other => Err(Error::BadConfig {
                detail: format!("unknown scenario {other:?}, expected S1, S2, or S3"),
            }),
        }
    }
}

/// Builds a preset family with `n` fast states per block at timescale ratio
/// 1, along with its initial datum on the product space.
///
/// Both blocks share one ring generator (symmetric for S1 and S3, biased for
/// S2) and both couplings put unit rate on the corner pairs `(n-1, 0)` and
/// `(0, n-1)`. S1 and S2 start from a spread-out measure weighting `(0,0)`
/// and `(1,0)` above a uniform background; S3 starts from mass on those two
/// states only.
pub fn scenario<T: Real>(
    id: Scenario,
    n: usize,
) -> Result<(MultiscaleSpec<T>, ProbabilityVector<T>)> {
    if n < 2 {
        return Err(Error::InvalidSize { n, min: 2 });
    }
    let r_minus = match id {
        Scenario::S2 => real::<T>(0.1),
        _ => T::one(),
    };
    let ring = birth_death_ring(n, T::one(), r_minus)?;
    let mut g = DMatrix::zeros(n, n);
    g[(n - 1, 0)] = T::one();
    g[(0, n - 1)] = T::one();
    let spec = MultiscaleSpec::new(ring.clone(), ring, g.clone(), g, T::one())?;
    let mu0 = initial_datum(id, &spec)?;
    Ok((spec, mu0))
}

fn initial_datum<T: Real>(id: Scenario, spec: &MultiscaleSpec<T>) -> Result<ProbabilityVector<T>> {
    let n = spec.n();
    let mut weights = DVector::zeros(2 * n);
    match id {
        Scenario::S1 | Scenario::S2 => {
            for x in 0..2 * n {
                weights[x] = real::<T>(0.1);
            }
            weights[0] += T::one();
            weights[n] += real::<T>(0.3);
        }
        Scenario::S3 => {
            weights[0] = T::one();
            weights[n] = real::<T>(0.3);
        }
    }
    ProbabilityVector::from_weights(spec.full_space(), weights)
}

/// Asymmetric variant whose effective rates genuinely depend on `epsilon`:
/// a biased ring in both blocks and single-entry couplings that are not
/// transposes of each other.
pub fn non_reversible_spec<T: Real>(n: usize) -> Result<MultiscaleSpec<T>> {
    if n < 2 {
        return Err(Error::InvalidSize { n, min: 2 });
    }
    let ring = birth_death_ring(n, T::one(), real::<T>(0.5))?;
    let mut g01 = DMatrix::zeros(n, n);
    g01[(n - 1, 0)] = T::one();
    let mut g10 = DMatrix::zeros(n, n);
    g10[(n / 2, 0)] = T::one();
    MultiscaleSpec::new(ring.clone(), ring, g01, g10, T::one())
}
