//! Time evolution of master equations: time grids, trajectories, a dense
//! matrix exponential, forward solves for constant generators, integration
//! of the lumped nonautonomous equation, and decay-rate fits.
//!
//! Solves propagate with matrix exponentials of the transposed generator,
//! so stiff rates cost extra squarings instead of extra steps. Propagators
//! are cached per distinct step size, which makes solves on refined grids
//! cheap: a handful of exponentials followed by matrix-vector products.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::chain::{Generator, ProbabilityVector, StateSpace};
use crate::coarse_graining::{cg_generator, push_forward, CoarseGrainingMap};
use crate::error::{Error, Result};
use crate::functionals::total_variation;
use crate::scalar::{as_f64, real, Real};

/// Largest tolerated deviation of total mass from one during a solve.
pub const MASS_DRIFT_LIMIT: f64 = 1e-9;
/// Default total-variation window for decay-rate fits.
pub const DECAY_FIT_WINDOW: (f64, f64) = (1e-9, 1e-2);
/// Minimum number of points for a decay-rate fit.
pub const DECAY_FIT_MIN_POINTS: usize = 5;

/// Shape of a time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind<T: Real> {
    /// Equal steps of the stored size.
    Uniform(T),
    /// Geometric refinement near zero followed by uniform steps.
    RefinedNearZero,
}

/// Strictly increasing sequence of times, starting at zero for the
/// constructors provided here.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T: Real> {
    points: Vec<T>,
    kind: GridKind<T>,
}

impl<T: Real> TimeGrid<T> {
    /// Uniform grid `0, h, 2h, …, t_end` with `steps` intervals.
    pub fn uniform(t_end: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::BadTimeGrid {
                detail: "uniform grid needs at least one step",
            });
        }
        if !(t_end > T::zero()) {
            return Err(Error::BadTimeGrid {
                detail: "end time must be positive",
            });
        }
        let h = t_end / real(steps as f64);
        let mut points = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            points.push(real::<T>(k as f64) * h);
        }
        points[steps] = t_end;
        Ok(Self {
            points,
            kind: GridKind::Uniform(h),
        })
    }

    /// Grid refined near zero: geometric points `first, first·ratio, …`
    /// until the local step reaches `h_uniform`, then uniform steps of that
    /// size up to `t_end` (the last step is shrunk to land exactly).
    pub fn refined(t_end: T, first: T, ratio: T, h_uniform: T) -> Result<Self> {
        if !(t_end > T::zero()) || !(first > T::zero()) || first >= t_end {
            return Err(Error::BadTimeGrid {
                detail: "need 0 < first point < end time",
            });
        }
        if !(ratio > T::one()) || !(h_uniform > T::zero()) {
            return Err(Error::BadTimeGrid {
                detail: "need ratio > 1 and a positive uniform step",
            });
        }
        let mut points = vec![T::zero(), first];
        let mut t = first;
        while t * (ratio - T::one()) < h_uniform && t * ratio < t_end {
            t *= ratio;
            points.push(t);
        }
        if t < t_end {
            let remaining = t_end - t;
            let count = as_f64(remaining / h_uniform).ceil().max(1.0) as usize;
            let h = remaining / real(count as f64);
            for k in 1..=count {
                points.push(t + real::<T>(k as f64) * h);
            }
            let last = points.len() - 1;
            points[last] = t_end;
        }
        let mut grid = Self::from_points(points)?;
        grid.kind = GridKind::RefinedNearZero;
        Ok(grid)
    }

    /// Default experiment grid: refined with first point `10⁻⁶ t_end`,
    /// ratio `1.2`, uniform step `t_end / 2000`.
    pub fn experiment_default(t_end: T) -> Result<Self> {
        Self::refined(
            t_end,
            t_end * real(1e-6),
            real(1.2),
            t_end / real(2000.0),
        )
    }

    /// Wraps an explicit list of times; must be finite, nonnegative, and
    /// strictly increasing, with at least two entries.
    pub fn from_points(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::BadTimeGrid {
                detail: "need at least two time points",
            });
        }
        if !points.iter().all(|t| as_f64(*t).is_finite()) || points[0] < T::zero() {
            return Err(Error::BadTimeGrid {
                detail: "times must be finite and nonnegative",
            });
        }
        for k in 1..points.len() {
            if points[k] <= points[k - 1] {
                return Err(Error::BadTimeGrid {
                    detail: "times must be strictly increasing",
                });
            }
        }
        let first = points[1] - points[0];
        let tol = first.abs() * real(1e-12);
        let uniform = points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - first).abs() <= tol);
        let kind = if uniform {
            GridKind::Uniform(first)
        } else {
            GridKind::RefinedNearZero
        };
        Ok(Self { points, kind })
    }

    /// Whether the grid is uniform or refined near zero.
    pub fn kind(&self) -> GridKind<T> {
        self.kind
    }

    /// The time points.
    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: grids have at least two points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Time at index `k`.
    pub fn t(&self, k: usize) -> T {
        self.points[k]
    }

    /// Final time.
    pub fn t_end(&self) -> T {
        *self.points.last().expect("grids are nonempty")
    }
}

/// A probability vector per grid point, all on one state space.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    grid: TimeGrid<T>,
    values: Vec<ProbabilityVector<T>>,
}

impl<T: Real> Trajectory<T> {
    /// Pairs a grid with values; lengths and state spaces must agree.
    pub fn new(grid: TimeGrid<T>, values: Vec<ProbabilityVector<T>>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: grid.len(),
                right: values.len(),
            });
        }
        let space = values[0].space();
        if values.iter().any(|v| v.space() != space) {
            return Err(Error::SpaceMismatch {
                detail: "trajectory values on differing state spaces".to_string(),
            });
        }
        Ok(Self { grid, values })
    }

    /// The time grid.
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    /// Common state space of the values.
    pub fn space(&self) -> &StateSpace {
        self.values[0].space()
    }

    /// All values in grid order.
    pub fn values(&self) -> &[ProbabilityVector<T>] {
        &self.values
    }

    /// Value at grid index `k`.
    pub fn value(&self, k: usize) -> &ProbabilityVector<T> {
        &self.values[k]
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

fn one_norm<T: Real>(a: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for j in 0..a.ncols() {
        let mut sum = T::zero();
        for i in 0..a.nrows() {
            sum += a[(i, j)].abs();
        }
        if sum > worst {
            worst = sum;
        }
    }
    worst
}

fn pade_low_order<T: Real>(a: &DMatrix<T>, coeffs: &[f64]) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut even = DMatrix::<T>::identity(n, n) * real::<T>(coeffs[0]);
    let mut odd = DMatrix::<T>::identity(n, n) * real::<T>(coeffs[1]);
    let mut power = DMatrix::<T>::identity(n, n);
    for k in 1..=(coeffs.len() - 1) / 2 {
        power *= &a2;
        even += &power * real::<T>(coeffs[2 * k]);
        if 2 * k + 1 < coeffs.len() {
            odd += &power * real::<T>(coeffs[2 * k + 1]);
        }
    }
    (a * odd, even)
}

fn pade_13<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.nrows();
    let b = PADE_13;
    let c = |k: usize| real::<T>(b[k]);
    let identity = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_high = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u = a * (&a6 * u_high + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &identity * c(1));
    let v_high = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = &a6 * v_high + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &identity * c(0);
    (u, v)
}

/// Dense matrix exponential by diagonal Padé approximation with scaling and
/// squaring, choosing the lowest adequate order from the matrix 1-norm.
pub fn expm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch {
            rows: a.nrows(),
            cols: a.ncols(),
            states: a.nrows(),
        });
    }
    if a.iter().any(|x| !as_f64(*x).is_finite()) {
        return Err(Error::ExpmFailure {
            detail: "matrix has non-finite entries".to_string(),
        });
    }
    let norm = as_f64(one_norm(a));
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low_order(a, &PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low_order(a, &PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low_order(a, &PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low_order(a, &PADE_9);
        (u, v, 0)
    } else {
        let s = ((norm / THETA_13).log2().ceil()).max(0.0) as u32;
        let scaled = a * real::<T>(0.5f64.powi(s as i32));
        let (u, v) = pade_13(&scaled);
        (u, v, s)
    };
    let numerator = &v + &u;
    let denominator = &v - &u;
    let mut x = denominator
        .lu()
        .solve(&numerator)
        .ok_or_else(|| Error::ExpmFailure {
            detail: "singular Padé denominator".to_string(),
        })?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    Ok(x)
}

/// Caches `exp(h Lᵀ)` per distinct step `h`, keyed by the step's bit
/// pattern after conversion to `f64`.
struct PropagatorCache<'a, T: Real> {
    transpose: DMatrix<T>,
    cache: HashMap<u64, DMatrix<T>>,
    _generator: &'a Generator<T>,
}

impl<'a, T: Real> PropagatorCache<'a, T> {
    fn new(l: &'a Generator<T>) -> Self {
        Self {
            transpose: l.rates().transpose(),
            cache: HashMap::new(),
            _generator: l,
        }
    }

    fn propagator(&mut self, h: T) -> Result<&DMatrix<T>> {
        let key = as_f64(h).to_bits();
        if !self.cache.contains_key(&key) {
            let p = expm(&(&self.transpose * h))?;
            self.cache.insert(key, p);
        }
        Ok(self.cache.get(&key).expect("inserted above"))
    }
}

/// Clamps solver output to a probability vector, tolerating only tiny
/// negative entries and tiny mass drift.
fn into_probability<T: Real>(
    space: StateSpace,
    mut mass: DVector<T>,
    t: T,
) -> Result<ProbabilityVector<T>> {
    let limit = real::<T>(MASS_DRIFT_LIMIT);
    for i in 0..mass.len() {
        if mass[i] < T::zero() {
            if mass[i] < -limit {
                return Err(Error::NegativeMass {
                    index: i,
                    value: as_f64(mass[i]),
                });
            }
            mass[i] = T::zero();
        }
    }
    let sum = mass.sum();
    let drift = (sum - T::one()).abs();
    if drift > limit {
        return Err(Error::MassDrift {
            t: as_f64(t),
            drift: as_f64(drift),
            limit: MASS_DRIFT_LIMIT,
        });
    }
    Ok(ProbabilityVector::from_renormalized(space, mass / sum))
}

/// Solves `∂_t μ_t = Lᵀ μ_t` on the grid with `μ` at the first grid point
/// equal to `mu0`, using cached matrix-exponential propagators.
pub fn solve_constant<T: Real>(
    l: &Generator<T>,
    mu0: &ProbabilityVector<T>,
    grid: &TimeGrid<T>,
) -> Result<Trajectory<T>> {
    if mu0.len() != l.size() {
        return Err(Error::DimensionMismatch {
            left: mu0.len(),
            right: l.size(),
        });
    }
    let mut cache = PropagatorCache::new(l);
    let mut values = Vec::with_capacity(grid.len());
    values.push(mu0.clone());
    let mut current = mu0.mass().clone();
    for k in 1..grid.len() {
        let h = grid.t(k) - grid.t(k - 1);
        let p = cache.propagator(h)?;
        current = p * current;
        let value = into_probability(mu0.space().clone(), current.clone(), grid.t(k))?;
        current = value.mass().clone();
        values.push(value);
    }
    Trajectory::new(grid.clone(), values)
}

/// Pushes every value of a fine trajectory forward under a lumping map.
pub fn push_forward_trajectory<T: Real>(
    traj: &Trajectory<T>,
    map: &CoarseGrainingMap,
) -> Result<Trajectory<T>> {
    let mut values = Vec::with_capacity(traj.len());
    for v in traj.values() {
        values.push(push_forward(v, map)?);
    }
    Trajectory::new(traj.grid().clone(), values)
}

/// Solves the full system and projects it: returns the fine trajectory
/// together with its push-forward under the lumping map.
pub fn solve_coarse_grained<T: Real>(
    l: &Generator<T>,
    map: &CoarseGrainingMap,
    mu0: &ProbabilityVector<T>,
    grid: &TimeGrid<T>,
) -> Result<(Trajectory<T>, Trajectory<T>)> {
    let full = solve_constant(l, mu0, grid)?;
    let cg = push_forward_trajectory(&full, map)?;
    Ok((full, cg))
}

const CG_ODE_MAX_STAGE_STEP: f64 = 0.05;

/// Solves the lumped nonautonomous equation `∂_t p_t = L̂_tᵀ p_t`, where
/// `L̂_t` is the coarse-grained generator of `l` relative to the fine
/// solution `μ_t` started from `mu0`.
///
/// The fine solution is advanced exactly (matrix exponentials) at Runge-
/// Kutta stage times; the coarse equation is integrated with classic
/// fourth-order steps no longer than `0.05 / (1 + ‖L̂₀‖∞)`. The fine
/// marginal must stay positive on every level set, otherwise the
/// coarse-grained generator is undefined and the solve fails.
pub fn solve_cg_ode<T: Real>(
    l: &Generator<T>,
    map: &CoarseGrainingMap,
    mu0: &ProbabilityVector<T>,
    grid: &TimeGrid<T>,
) -> Result<Trajectory<T>> {
    if mu0.len() != l.size() {
        return Err(Error::DimensionMismatch {
            left: mu0.len(),
            right: l.size(),
        });
    }
    let fine_space = mu0.space().clone();
    let coarse_space = map.coarse().clone();
    let lhat_of = |mass: &DVector<T>| -> Result<DMatrix<T>> {
        let mu = into_probability(fine_space.clone(), mass.clone(), T::zero())?;
        Ok(cg_generator(l, &mu, map)?.rates().transpose())
    };

    let marginal0 = push_forward(mu0, map)?;
    let degenerate = (0..marginal0.len()).any(|y| marginal0.get(y) == T::zero());

    let mut cache = PropagatorCache::new(l);
    let mut mu = mu0.mass().clone();
    let mut values = Vec::with_capacity(grid.len());
    values.push(marginal0.clone());

    // A vanishing initial marginal leaves the lumped generator undefined at
    // the first grid point. The fine solution is positive immediately
    // afterwards, so seed the integration with the exact projection at the
    // second grid point instead of a Runge-Kutta step from the first.
    let mut p;
    let start;
    if degenerate {
        let h0 = grid.t(1) - grid.t(0);
        let advanced = cache.propagator(h0)? * &mu;
        let mu1 = into_probability(fine_space.clone(), advanced, grid.t(1))?;
        mu = mu1.mass().clone();
        let m1 = push_forward(&mu1, map)?;
        for y in 0..m1.len() {
            if m1.get(y) == T::zero() {
                return Err(Error::UndefinedConditional {
                    label: map.coarse().label(y).to_string(),
                });
            }
        }
        p = m1.mass().clone();
        values.push(m1);
        start = 2;
    } else {
        p = marginal0.mass().clone();
        start = 1;
    }

    let lhat0 = lhat_of(&mu)?;
    let scale = as_f64(one_norm(&lhat0));
    let h_max = real::<T>(CG_ODE_MAX_STAGE_STEP / (1.0 + scale));

    for k in start..grid.len() {
        let interval = grid.t(k) - grid.t(k - 1);
        let substeps = as_f64(interval / h_max).ceil().max(1.0) as usize;
        let h = interval / real(substeps as f64);
        let half = cache.propagator(h / real(2.0))?.clone();
        for _ in 0..substeps {
            let mu_mid = &half * &mu;
            let mu_end = &half * &mu_mid;
            let l0 = lhat_of(&mu)?;
            let l_mid = lhat_of(&mu_mid)?;
            let l_end = lhat_of(&mu_end)?;
            let k1 = &l0 * &p;
            let k2 = &l_mid * (&p + &k1 * (h / real(2.0)));
            let k3 = &l_mid * (&p + &k2 * (h / real(2.0)));
            let k4 = &l_end * (&p + &k3 * h);
            p += (k1 + k2 * real::<T>(2.0) + k3 * real::<T>(2.0) + k4) * (h / real(6.0));
            mu = mu_end;
        }
        let value = into_probability(coarse_space.clone(), p.clone(), grid.t(k))?;
        p = value.mass().clone();
        values.push(value);
    }
    Trajectory::new(grid.clone(), values)
}

/// Least-squares fit of an exponential total-variation decay.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit<T: Real> {
    /// Decay rate (negated slope of `log TV` against `t`).
    pub rate: T,
    /// Intercept of the fit, so the fitted curve is
    /// `exp(log_intercept − rate · t)`.
    pub log_intercept: T,
    /// Number of grid points inside the fitting window.
    pub points: usize,
}

/// Fitted exponential decay rate of `TV(μ_t, target)` over the default
/// window [`DECAY_FIT_WINDOW`].
pub fn tv_decay_rate<T: Real>(
    traj: &Trajectory<T>,
    target: &ProbabilityVector<T>,
) -> Result<T> {
    Ok(tv_decay_fit(traj, target, DECAY_FIT_WINDOW)?.rate)
}

/// Fits `log TV(μ_t, target) ≈ log_intercept − rate · t` over the grid
/// points whose total variation lies in `window`, by least squares.
pub fn tv_decay_fit<T: Real>(
    traj: &Trajectory<T>,
    target: &ProbabilityVector<T>,
    window: (f64, f64),
) -> Result<DecayFit<T>> {
    let (lo, hi) = (real::<T>(window.0), real::<T>(window.1));
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for k in 0..traj.len() {
        let tv = total_variation(traj.value(k), target)?;
        if tv >= lo && tv <= hi {
            ts.push(traj.grid().t(k));
            logs.push(tv.ln());
        }
    }
    if ts.len() < DECAY_FIT_MIN_POINTS {
        return Err(Error::InsufficientDecay {
            points: ts.len(),
            need: DECAY_FIT_MIN_POINTS,
        });
    }
    let (slope, intercept) = least_squares_line(&ts, &logs);
    Ok(DecayFit {
        rate: -slope,
        log_intercept: intercept,
        points: ts.len(),
    })
}

/// Ordinary least-squares line `y ≈ slope · x + intercept`.
pub(crate) fn least_squares_line<T: Real>(xs: &[T], ys: &[T]) -> (T, T) {
    let n = real::<T>(xs.len() as f64);
    let mean_x = xs.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    let mean_y = ys.iter().fold(T::zero(), |acc, &y| acc + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}
