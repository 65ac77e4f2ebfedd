#![allow(dead_code)]

use ctmc_lumper_core::chain::{Generator, ProbabilityVector, StateSpace};
use ctmc_lumper_core::multiscale::MultiscaleSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Classic fourth-order integration of the forward equation, independent of
/// the library's exponential propagator.
pub fn rk4_forward(l: &Generator<f64>, mu0: &DVector<f64>, t_end: f64, steps: usize) -> DVector<f64> {
    let lt = l.rates().transpose();
    let h = t_end / steps as f64;
    let mut mu = mu0.clone();
    for _ in 0..steps {
        let k1 = &lt * &mu;
        let k2 = &lt * (&mu + &k1 * (h / 2.0));
        let k3 = &lt * (&mu + &k2 * (h / 2.0));
        let k4 = &lt * (&mu + &k3 * h);
        mu += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    mu
}

/// Irreducibility oracle by matrix powers: `(I + L/m)^n` has a zero entry
/// exactly when some state cannot reach some other state.
pub fn power_positive(l: &Generator<f64>) -> bool {
    let n = l.size();
    let mut m: f64 = 1.0;
    for i in 0..n {
        m = m.max(-l.rate(i, i));
    }
    let b = DMatrix::identity(n, n) + l.rates() / (m + 1.0);
    let mut acc = DMatrix::<f64>::identity(n, n);
    for _ in 0..n {
        acc *= &b;
    }
    acc.iter().all(|&v| v > 0.0)
}

/// Fisher information in its direct form: `Σ_x [−ν(x)(M log ℓ)(x) +
/// ζ(x)(M ℓ)(x)]` with `ℓ = ν/ζ` and `M` applied to functions row-wise.
/// Diagonal entries participate, so this route only matches the bracket
/// form when the row sums of `M` vanish.
pub fn fisher_primary(
    nu: &ProbabilityVector<f64>,
    zeta: &ProbabilityVector<f64>,
    m: &DMatrix<f64>,
) -> f64 {
    let n = nu.len();
    let density: Vec<f64> = (0..n).map(|x| nu.get(x) / zeta.get(x)).collect();
    let mut total = 0.0;
    for x in 0..n {
        let mut m_log = 0.0;
        let mut m_density = 0.0;
        for x2 in 0..n {
            m_log += m[(x, x2)] * density[x2].ln();
            m_density += m[(x, x2)] * density[x2];
        }
        total += -nu.get(x) * m_log + zeta.get(x) * m_density;
    }
    total
}

/// Random generator with the given off-diagonal fill probability. Not
/// necessarily irreducible.
pub fn random_generator(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Generator<f64> {
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                rates[(i, j)] = rng.gen_range(0.1..1.0);
            }
        }
    }
    Generator::from_off_diagonal(StateSpace::numbered(n).unwrap(), rates).unwrap()
}

/// Random irreducible generator: moderate fill plus a ring closure so every
/// state reaches every other.
pub fn random_irreducible(rng: &mut ChaCha8Rng, n: usize) -> Generator<f64> {
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.6) {
                rates[(i, j)] = rng.gen_range(0.1..1.0);
            }
        }
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if rates[(i, j)] == 0.0 {
            rates[(i, j)] = rng.gen_range(0.1..1.0);
        }
    }
    Generator::from_off_diagonal(StateSpace::numbered(n).unwrap(), rates).unwrap()
}

/// Random reversible generator built from symmetric exchange rates and a
/// random positive weight vector: `L(x,y) = S(x,y)/π(x)` satisfies detailed
/// balance with respect to `π`.
pub fn random_reversible(rng: &mut ChaCha8Rng, n: usize) -> Generator<f64> {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = rng.gen_range(0.1..1.0);
            rates[(i, j)] = s / (weights[i] / total);
            rates[(j, i)] = s / (weights[j] / total);
        }
    }
    Generator::from_off_diagonal(StateSpace::numbered(n).unwrap(), rates).unwrap()
}

/// Random strictly positive probability vector with mass floor `floor` per
/// state before normalization.
pub fn random_probability(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> ProbabilityVector<f64> {
    let weights = DVector::from_fn(n, |_, _| rng.gen_range(floor..1.0));
    ProbabilityVector::from_weights(StateSpace::numbered(n).unwrap(), weights).unwrap()
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    sxy / sxx
}

/// Dense slow-fast generator assembled by direct index arithmetic, as an
/// oracle for the library's block construction. State `(y, z)` sits at row
/// `y * n + z`; within-block rates are `q_y / eps` and cross-block rates
/// come straight from the coupling matrices.
pub fn assemble_slow_fast_oracle(spec: &MultiscaleSpec<f64>) -> DMatrix<f64> {
    let n = spec.n();
    let inv_eps = 1.0 / spec.epsilon();
    let mut rates = DMatrix::<f64>::zeros(2 * n, 2 * n);
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
    for i in 0..2 * n {
        let mut sum = 0.0;
        for j in 0..2 * n {
            if j != i {
                sum += rates[(i, j)];
            }
        }
        rates[(i, i)] = -sum;
    }
    rates
}

/// Largest number of forward hops needed to reach any state from `start`.
pub fn graph_eccentricity(l: &Generator<f64>, start: usize) -> usize {
    let n = l.size();
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if v != u && l.rate(u, v) > 0.0 && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist.into_iter().max().unwrap()
}
