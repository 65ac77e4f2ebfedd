//! Information-theoretic functionals on probability vectors: relative
//! entropy, total variation, the Csiszár-Kullback-Pinsker gap, Fisher
//! information relative to a generator, entropy-dissipation residuals, and a
//! numerical estimator for the (modified) log-Sobolev constant.
//!
//! Conventions:
//! - total variation is the plain sum `Σ|ν − ζ|`; the halved variant is a
//!   separate helper, never mixed in;
//! - relative entropy uses `0·log 0 = 0` and signals `ν ⊄ supp ζ` with the
//!   scalar type's `+∞` rather than an error;
//! - Fisher information rejects non-positive inputs instead of extending by
//!   limits; callers that need boundary measures mix in an explicit floor.
//!
//! All comparisons are positional: vectors must have the same length, and
//! callers are responsible for aligning state spaces.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Generator, ProbabilityVector, StateSpace};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Candidates whose relative entropy to the reference is below this are
/// excluded from the log-Sobolev ratio search (the ratio degenerates to 0/0
/// at the reference measure).
pub const LSI_EXCLUSION_H: f64 = 1e-10;
/// Step of the exhaustive two-state search.
pub const LSI_GRID_RESOLUTION: f64 = 1e-5;
/// Number of descent starts used by default.
pub const LSI_DEFAULT_STARTS: usize = 50;
/// Seed used by default for the multistart descent.
pub const LSI_DEFAULT_SEED: u64 = 0x11_CE_5E_ED;

fn ensure_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Relative entropy `H(ν|ζ) = Σ ν(x) log(ν(x)/ζ(x))`.
///
/// Returns `+∞` when `ν` puts mass where `ζ` does not; terms with
/// `ν(x) = 0` contribute nothing.
pub fn relative_entropy<T: Real>(
    nu: &ProbabilityVector<T>,
    zeta: &ProbabilityVector<T>,
) -> Result<T> {
    ensure_same_len(nu.len(), zeta.len())?;
    let mut h = T::zero();
    for i in 0..nu.len() {
        let n = nu.get(i);
        if n == T::zero() {
            continue;
        }
        let z = zeta.get(i);
        if z == T::zero() {
            return Ok(real(f64::INFINITY));
        }
        h += n * (n / z).ln();
    }
    Ok(h)
}

/// Total variation `Σ |ν(x) − ζ(x)|`.
pub fn total_variation<T: Real>(
    nu: &ProbabilityVector<T>,
    zeta: &ProbabilityVector<T>,
) -> Result<T> {
    ensure_same_len(nu.len(), zeta.len())?;
    let mut tv = T::zero();
    for i in 0..nu.len() {
        tv += (nu.get(i) - zeta.get(i)).abs();
    }
    Ok(tv)
}

/// Halved total variation `½ Σ |ν(x) − ζ(x)|`, kept separate from
/// [`total_variation`] so the two conventions never mix.
pub fn total_variation_half<T: Real>(
    nu: &ProbabilityVector<T>,
    zeta: &ProbabilityVector<T>,
) -> Result<T> {
    Ok(total_variation(nu, zeta)? / real(2.0))
}

/// Slack in the Csiszár-Kullback-Pinsker inequality:
/// `√(2 H(ν|ζ)) − ‖ν − ζ‖_TV`, nonnegative for all probability vectors.
pub fn ckp_gap<T: Real>(nu: &ProbabilityVector<T>, zeta: &ProbabilityVector<T>) -> Result<T> {
    let h = relative_entropy(nu, zeta)?;
    let tv = total_variation(nu, zeta)?;
    Ok((real::<T>(2.0) * h).sqrt() - tv)
}

fn ensure_positive<T: Real>(v: &ProbabilityVector<T>) -> Result<()> {
    for i in 0..v.len() {
        if v.get(i) <= T::zero() {
            return Err(Error::NonPositiveMeasure {
                index: i,
                value: as_f64(v.get(i)),
            });
        }
    }
    Ok(())
}

/// `M`-Fisher information of `ν` relative to `ζ`:
/// `Σ_{x≠x'} M(x,x') ζ(x) ℓ(x) [ℓ(x')/ℓ(x) − 1 − log(ℓ(x')/ℓ(x))]` with
/// `ℓ = ν/ζ`.
///
/// Each summand is nonnegative, so the value is nonnegative for every
/// generator. Both measures must be strictly positive.
pub fn fisher_information<T: Real>(
    nu: &ProbabilityVector<T>,
    zeta: &ProbabilityVector<T>,
    m: &Generator<T>,
) -> Result<T> {
    fisher_information_matrix(nu, zeta, m.rates())
}

/// [`fisher_information`] over a raw square matrix with nonnegative
/// off-diagonal entries. Diagonal entries never contribute, so level-set
/// restrictions with nonzero row sums are admissible here.
pub fn fisher_information_matrix<T: Real>(
    nu: &ProbabilityVector<T>,
    zeta: &ProbabilityVector<T>,
    m: &DMatrix<T>,
) -> Result<T> {
    ensure_same_len(nu.len(), zeta.len())?;
    ensure_same_len(nu.len(), m.nrows())?;
    ensure_same_len(nu.len(), m.ncols())?;
    ensure_positive(nu)?;
    ensure_positive(zeta)?;
    let n = nu.len();
    let mut density = DVector::<T>::zeros(n);
    for i in 0..n {
        density[i] = nu.get(i) / zeta.get(i);
    }
    let mut r = T::zero();
    for x1 in 0..n {
        for x2 in 0..n {
            if x1 == x2 {
                continue;
            }
            let rate = m[(x1, x2)];
            if rate == T::zero() {
                continue;
            }
            if rate < T::zero() {
                return Err(Error::NegativeOffDiagonal {
                    row: x1,
                    col: x2,
                    value: as_f64(rate),
                });
            }
            let u = density[x2] / density[x1] - T::one();
            let bracket = (u - u.ln_1p()).max(T::zero());
            r += rate * zeta.get(x1) * density[x1] * bracket;
        }
    }
    Ok(r)
}

/// Maximum defect of the entropy-dissipation identity along a trajectory:
/// `max_k |d/dt H(μ_t|ρ) + R_L(μ_t|ρ)|` over interior grid points, with the
/// derivative taken by three-point finite differences on the stored grid.
///
/// Second-order accurate in the grid step; the trajectory is never re-solved.
pub fn entropy_dissipation_residual<T: Real>(
    l: &Generator<T>,
    mu_traj: &Trajectory<T>,
    rho: &ProbabilityVector<T>,
) -> Result<T> {
    let len = mu_traj.len();
    if len < 3 {
        return Err(Error::TrajectoryTooShort { len, need: 3 });
    }
    ensure_positive(rho)?;
    let mut entropy = Vec::with_capacity(len);
    for k in 0..len {
        entropy.push(relative_entropy(mu_traj.value(k), rho)?);
    }
    let t = mu_traj.grid().points();
    let mut worst = T::zero();
    for k in 1..len - 1 {
        let dh = three_point_derivative(
            t[k] - t[k - 1],
            t[k + 1] - t[k],
            entropy[k - 1],
            entropy[k],
            entropy[k + 1],
        );
        let dissipation = fisher_information(mu_traj.value(k), rho, l)?;
        let residual = (dh + dissipation).abs();
        if residual > worst {
            worst = residual;
        }
    }
    Ok(worst)
}

/// Three-point derivative at the middle node of a possibly nonuniform
/// stencil, exact for quadratics.
pub(crate) fn three_point_derivative<T: Real>(h1: T, h2: T, f0: T, f1: T, f2: T) -> T {
    let w0 = -h2 / (h1 * (h1 + h2));
    let w1 = (h2 - h1) / (h1 * h2);
    let w2 = h1 / (h2 * (h1 + h2));
    w0 * f0 + w1 * f1 + w2 * f2
}

/// How a log-Sobolev estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsiMethod {
    /// Exhaustive one-dimensional search (two-state spaces).
    Grid,
    /// Projected-gradient descent from many random starts.
    MultistartDescent,
}

impl LsiMethod {
    /// Stable tag used in serialized reports.
    pub fn tag(self) -> &'static str {
        match self {
            LsiMethod::Grid => "grid",
            LsiMethod::MultistartDescent => "multistart_descent",
        }
    }
}

/// Numerical estimate of a log-Sobolev constant
/// `α = inf_ν R_M(ν|ζ) / H(ν|ζ)`.
#[derive(Debug, Clone)]
pub struct LsiEstimate<T: Real> {
    /// Estimated constant (the smallest ratio found).
    pub alpha: T,
    /// Measure achieving the estimate.
    pub argmin_witness: ProbabilityVector<T>,
    /// Search strategy that produced the estimate.
    pub method: LsiMethod,
    /// Number of grid points or descent starts examined.
    pub samples: usize,
}

/// Estimates the log-Sobolev constant of `(M, ζ)` by minimizing the
/// Fisher-information-to-entropy ratio over the open probability simplex,
/// excluding a small entropy ball around `ζ` where the ratio degenerates.
///
/// Two-state problems are solved by exhaustive search at resolution
/// [`LSI_GRID_RESOLUTION`]; larger spaces use [`LSI_DEFAULT_STARTS`]
/// seeded descent starts. The result is an estimate of the infimum, not a
/// certificate.
pub fn estimate_lsi_constant<T: Real>(
    m: &Generator<T>,
    zeta: &ProbabilityVector<T>,
) -> Result<LsiEstimate<T>> {
    estimate_lsi_constant_with(m, zeta, LSI_DEFAULT_STARTS, LSI_DEFAULT_SEED)
}

/// Same as [`estimate_lsi_constant`] with explicit start count and seed.
pub fn estimate_lsi_constant_with<T: Real>(
    m: &Generator<T>,
    zeta: &ProbabilityVector<T>,
    starts: usize,
    seed: u64,
) -> Result<LsiEstimate<T>> {
    ensure_same_len(zeta.len(), m.size())?;
    ensure_positive(zeta)?;
    let n = zeta.len();
    let exclusion = real::<T>(LSI_EXCLUSION_H);
    let ratio = |mass: &DVector<T>| -> Result<Option<T>> {
        let candidate = ProbabilityVector::from_renormalized(space_of(zeta), mass.clone());
        let h = relative_entropy(&candidate, zeta)?;
        if h < exclusion {
            return Ok(None);
        }
        let r = fisher_information(&candidate, zeta, m)?;
        Ok(Some(r / h))
    };

    let mut best: Option<(T, DVector<T>)> = None;
    let mut samples = 0;

    if n == 2 {
        let step = LSI_GRID_RESOLUTION;
        let count = (1.0 / step).round() as usize;
        for k in 1..count {
            let p = real::<T>(k as f64 * step);
            let mass = DVector::from_column_slice(&[p, T::one() - p]);
            samples += 1;
            if let Some(value) = ratio(&mass)? {
                if best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, mass));
                }
            }
        }
        finish_estimate(best, zeta, LsiMethod::Grid, samples)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..starts {
            let start = dirichlet_sample(&mut rng, n);
            samples += 1;
            let candidate = descend_ratio(start, &ratio)?;
            if let Some((value, mass)) = candidate {
                if best.as_ref().is_none_or(|(b, _)| value < *b) {
                    best = Some((value, mass));
                }
            }
        }
        finish_estimate(best, zeta, LsiMethod::MultistartDescent, samples)
    }
}

fn space_of<T: Real>(v: &ProbabilityVector<T>) -> StateSpace {
    v.space().clone()
}

fn finish_estimate<T: Real>(
    best: Option<(T, DVector<T>)>,
    zeta: &ProbabilityVector<T>,
    method: LsiMethod,
    samples: usize,
) -> Result<LsiEstimate<T>> {
    let (alpha, mass) = best.ok_or(Error::DegenerateRatio {
        estimate: f64::NAN,
    })?;
    if alpha <= T::zero() {
        return Err(Error::DegenerateRatio {
            estimate: as_f64(alpha),
        });
    }
    let witness = ProbabilityVector::from_renormalized(space_of(zeta), mass);
    Ok(LsiEstimate {
        alpha,
        argmin_witness: witness,
        method,
        samples,
    })
}

/// Strictly positive sample from the flat Dirichlet distribution, drawn as
/// normalized unit-rate exponentials.
fn dirichlet_sample<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> DVector<T> {
    let mut v = DVector::<T>::zeros(n);
    let mut sum = T::zero();
    for i in 0..n {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let e = real::<T>(-u.ln());
        v[i] = e;
        sum += e;
    }
    v / sum
}

const DESCENT_MAX_ITERS: usize = 600;
const DESCENT_FLOOR: f64 = 1e-13;
const DESCENT_FD_STEP: f64 = 1e-7;

/// Projected-gradient descent of the entropy ratio from one start.
///
/// Gradients are taken by central differences in the simplex tangent space;
/// steps are projected back onto the simplex and floored away from the
/// boundary. Candidates falling inside the exclusion ball are rejected by
/// shrinking the step, so accepted iterates stay admissible.
fn descend_ratio<T: Real>(
    start: DVector<T>,
    ratio: &impl Fn(&DVector<T>) -> Result<Option<T>>,
) -> Result<Option<(T, DVector<T>)>> {
    let n = start.len();
    let floor = real::<T>(DESCENT_FLOOR);
    let mut x = clamp_to_open_simplex(start, floor);
    let mut fx = match ratio(&x)? {
        Some(v) => v,
        None => return Ok(None),
    };
    let mut step = real::<T>(0.1);
    let fd = real::<T>(DESCENT_FD_STEP);
    for _ in 0..DESCENT_MAX_ITERS {
        let mut grad = DVector::<T>::zeros(n);
        for i in 0..n {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += fd;
            minus[i] = (minus[i] - fd).max(floor);
            let denom = plus[i] - minus[i];
            let fp = ratio(&clamp_to_open_simplex(plus, floor))?;
            let fm = ratio(&clamp_to_open_simplex(minus, floor))?;
            grad[i] = match (fp, fm) {
                (Some(a), Some(b)) => (a - b) / denom,
                _ => T::zero(),
            };
        }
        let mean = grad.sum() / real::<T>(n as f64);
        grad.add_scalar_mut(-mean);
        let norm = grad.norm();
        if norm < real(1e-14) {
            break;
        }
        let mut advanced = false;
        for _ in 0..40 {
            let trial = clamp_to_open_simplex(project_to_simplex(&x - &grad * step), floor);
            match ratio(&trial)? {
                Some(ft) if ft < fx => {
                    x = trial;
                    fx = ft;
                    step *= real(1.5);
                    advanced = true;
                    break;
                }
                _ => {
                    step *= real(0.5);
                    if step < real(1e-15) {
                        break;
                    }
                }
            }
        }
        if !advanced && step < real(1e-15) {
            break;
        }
    }
    Ok(Some((fx, x)))
}

/// Euclidean projection onto the probability simplex.
fn project_to_simplex<T: Real>(v: DVector<T>) -> DVector<T> {
    let n = v.len();
    let mut sorted: Vec<T> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - T::one()) / real::<T>((k + 1) as f64);
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    let mut out = v;
    for i in 0..n {
        out[i] = (out[i] - theta).max(T::zero());
    }
    out
}

/// Clamps entries to a positive floor and renormalizes to total mass one.
fn clamp_to_open_simplex<T: Real>(mut v: DVector<T>, floor: T) -> DVector<T> {
    for i in 0..v.len() {
        if v[i] < floor {
            v[i] = floor;
        }
    }
    let sum = v.sum();
    v / sum
}
