//! Lumping maps between state spaces and the induced operations: pushing
//! measures forward, disintegrating them over level sets, and building the
//! coarse-grained generator of a fine chain relative to a reference measure.
//!
//! A lumping map assigns every fine state to exactly one coarse state. Level
//! sets are precomputed at construction and kept in fine-space order, so all
//! induced operations are deterministic in the ordering of states.

use nalgebra::{DMatrix, DVector};

use crate::chain::{Generator, ProbabilityVector, StateSpace, TOL_STATIONARY_RESIDUAL};
use crate::error::{Error, Result};
use crate::scalar::{as_f64, real, Real};

/// Surjective assignment of fine states to coarse states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseGrainingMap {
    fine: StateSpace,
    coarse: StateSpace,
    assignment: Vec<usize>,
    level_sets: Vec<Vec<usize>>,
}

impl CoarseGrainingMap {
    /// Builds a map from an explicit assignment vector (`assignment[x]` is
    /// the coarse index of fine state `x`).
    ///
    /// Every fine state must map into the coarse space and every coarse
    /// state must have at least one preimage.
    pub fn new(fine: StateSpace, coarse: StateSpace, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != fine.size() {
            return Err(Error::LengthMismatch {
                left: assignment.len(),
                right: fine.size(),
            });
        }
        let mut level_sets = vec![Vec::new(); coarse.size()];
        for (x, &y) in assignment.iter().enumerate() {
            if y >= coarse.size() {
                return Err(Error::UnassignedState {
                    label: fine.label(x).to_string(),
                });
            }
            level_sets[y].push(x);
        }
        for (y, set) in level_sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::EmptyLevelSet {
                    label: coarse.label(y).to_string(),
                });
            }
        }
        Ok(Self {
            fine,
            coarse,
            assignment,
            level_sets,
        })
    }

    /// Builds a map by applying a label-level function to each fine state.
    /// The returned label must exist in the coarse space.
    pub fn from_fn(
        fine: StateSpace,
        coarse: StateSpace,
        f: impl Fn(&str) -> String,
    ) -> Result<Self> {
        let mut assignment = Vec::with_capacity(fine.size());
        for x in 0..fine.size() {
            let target = f(fine.label(x));
            let y = coarse
                .index_of(&target)
                .ok_or(Error::UnknownLabel { label: target })?;
            assignment.push(y);
        }
        Self::new(fine, coarse, assignment)
    }

    /// The identity map of a space onto itself.
    pub fn identity(space: StateSpace) -> Self {
        let n = space.size();
        Self {
            fine: space.clone(),
            coarse: space,
            assignment: (0..n).collect(),
            level_sets: (0..n).map(|x| vec![x]).collect(),
        }
    }

    /// Fine (domain) state space.
    pub fn fine(&self) -> &StateSpace {
        &self.fine
    }

    /// Coarse (codomain) state space.
    pub fn coarse(&self) -> &StateSpace {
        &self.coarse
    }

    /// Coarse index of each fine state.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Coarse index of fine state `x`.
    pub fn image_of(&self, x: usize) -> usize {
        self.assignment[x]
    }

    /// Fine indices mapping to coarse state `y`, in fine order.
    pub fn level_set(&self, y: usize) -> &[usize] {
        &self.level_sets[y]
    }

    /// All level sets, indexed by coarse state.
    pub fn level_sets(&self) -> &[Vec<usize>] {
        &self.level_sets
    }

    /// State space consisting of the fine labels in level set `y`, used for
    /// conditional measures.
    fn level_space(&self, y: usize) -> StateSpace {
        let labels: Vec<String> = self.level_sets[y]
            .iter()
            .map(|&x| self.fine.label(x).to_string())
            .collect();
        StateSpace::new(labels).expect("level-set labels inherit uniqueness from the fine space")
    }
}

/// Image measure `ξ#ν` of a fine measure under a lumping map.
pub fn push_forward<T: Real>(
    nu: &ProbabilityVector<T>,
    map: &CoarseGrainingMap,
) -> Result<ProbabilityVector<T>> {
    if nu.space() != map.fine() {
        return Err(Error::SpaceMismatch {
            detail: "measure is not on the map's fine space".to_string(),
        });
    }
    let mut mass = DVector::<T>::zeros(map.coarse().size());
    for x in 0..nu.len() {
        mass[map.image_of(x)] += nu.get(x);
    }
    Ok(ProbabilityVector::from_renormalized(
        map.coarse().clone(),
        mass,
    ))
}

/// A measure split into its image under a lumping map and conditional
/// measures on the level sets.
///
/// Conditionals are indexed by coarse state and live on the level-set
/// subspace (fine labels, fine order). A level set carrying zero mass has no
/// conditional.
#[derive(Debug, Clone)]
pub struct Disintegration<T: Real> {
    /// Image measure on the coarse space.
    pub marginal: ProbabilityVector<T>,
    /// Conditional measure for each coarse state, `None` where the marginal
    /// vanishes.
    pub conditionals: Vec<Option<ProbabilityVector<T>>>,
}

/// Splits `ν` into marginal and conditionals: `ν(x) = ν(x|y) ξ#ν(y)` for
/// `x` in the level set of `y`.
pub fn disintegrate<T: Real>(
    nu: &ProbabilityVector<T>,
    map: &CoarseGrainingMap,
) -> Result<Disintegration<T>> {
    let marginal = push_forward(nu, map)?;
    let mut conditionals = Vec::with_capacity(map.coarse().size());
    for y in 0..map.coarse().size() {
        let weight = marginal.get(y);
        if weight == T::zero() {
            conditionals.push(None);
            continue;
        }
        let set = map.level_set(y);
        let mut mass = DVector::<T>::zeros(set.len());
        for (i, &x) in set.iter().enumerate() {
            mass[i] = nu.get(x) / weight;
        }
        conditionals.push(Some(ProbabilityVector::from_renormalized(
            map.level_space(y),
            mass,
        )));
    }
    Ok(Disintegration {
        marginal,
        conditionals,
    })
}

/// Coarse-grained generator of `l` relative to `ν`:
/// `L̂(y₁,y₂) = Σ_{x₁∈Λ(y₁)} Σ_{x₂∈Λ(y₂)} L(x₁,x₂) ν(x₁|y₁)`.
///
/// Requires `ξ#ν > 0` everywhere so every conditional is defined. The result
/// is an exact generator: off-diagonal entries are sums of nonnegative
/// terms and the diagonal is rebuilt from row sums.
pub fn cg_generator<T: Real>(
    l: &Generator<T>,
    nu: &ProbabilityVector<T>,
    map: &CoarseGrainingMap,
) -> Result<Generator<T>> {
    if l.size() != map.fine().size() {
        return Err(Error::DimensionMismatch {
            left: l.size(),
            right: map.fine().size(),
        });
    }
    let split = disintegrate(nu, map)?;
    let m = map.coarse().size();
    let mut rates = DMatrix::<T>::zeros(m, m);
    for y1 in 0..m {
        let conditional = split.conditionals[y1]
            .as_ref()
            .ok_or_else(|| Error::UndefinedConditional {
                label: map.coarse().label(y1).to_string(),
            })?;
        for (i, &x1) in map.level_set(y1).iter().enumerate() {
            let w = conditional.get(i);
            if w == T::zero() {
                continue;
            }
            for y2 in 0..m {
                if y2 == y1 {
                    continue;
                }
                let mut flux = T::zero();
                for &x2 in map.level_set(y2) {
                    flux += l.rate(x1, x2);
                }
                rates[(y1, y2)] += w * flux;
            }
        }
    }
    Generator::from_off_diagonal(map.coarse().clone(), rates)
}

/// Coarse-grained generator relative to a stationary measure of `l`.
///
/// Verifies stationarity (`‖Lᵀρ‖∞` within tolerance) before delegating to
/// [`cg_generator`]; the image of a stationary measure is stationary for the
/// result.
pub fn effective_generator<T: Real>(
    l: &Generator<T>,
    rho: &ProbabilityVector<T>,
    map: &CoarseGrainingMap,
) -> Result<Generator<T>> {
    effective_generator_with_tol(l, rho, map, real(TOL_STATIONARY_RESIDUAL * 100.0))
}

/// [`effective_generator`] with an explicit stationarity tolerance.
pub fn effective_generator_with_tol<T: Real>(
    l: &Generator<T>,
    rho: &ProbabilityVector<T>,
    map: &CoarseGrainingMap,
    tol: T,
) -> Result<Generator<T>> {
    let residual = l.stationarity_residual(rho)?;
    if residual > tol {
        return Err(Error::NotStationary {
            residual: as_f64(residual),
        });
    }
    cg_generator(l, rho, map)
}

/// Restriction of `l` to the level set of coarse state `y`: the submatrix
/// over that level set, plus a flag telling whether the restriction is
/// itself a generator (no rate leaves the level set, so row sums vanish).
pub fn restrict<T: Real>(
    l: &Generator<T>,
    map: &CoarseGrainingMap,
    y: usize,
) -> Result<(DMatrix<T>, bool)> {
    if l.size() != map.fine().size() {
        return Err(Error::DimensionMismatch {
            left: l.size(),
            right: map.fine().size(),
        });
    }
    if y >= map.coarse().size() {
        return Err(Error::UnknownLabel {
            label: format!("coarse index {y}"),
        });
    }
    let set = map.level_set(y);
    let k = set.len();
    let mut block = DMatrix::<T>::zeros(k, k);
    for (i, &x1) in set.iter().enumerate() {
        for (j, &x2) in set.iter().enumerate() {
            block[(i, j)] = l.rate(x1, x2);
        }
    }
    let mut scale = T::one();
    let mut closed = true;
    for i in 0..k {
        let mut abs_sum = T::zero();
        for j in 0..k {
            abs_sum += block[(i, j)].abs();
        }
        if abs_sum > scale {
            scale = abs_sum;
        }
    }
    let tol = real::<T>(1e-10) * scale;
    for i in 0..k {
        let mut row_sum = T::zero();
        for j in 0..k {
            row_sum += block[(i, j)];
        }
        if row_sum.abs() > tol {
            closed = false;
            break;
        }
    }
    Ok((block, closed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> StateSpace {
        StateSpace::numbered(n).unwrap()
    }

    fn pv(values: &[f64]) -> ProbabilityVector<f64> {
        ProbabilityVector::new(space(values.len()), DVector::from_column_slice(values)).unwrap()
    }

    fn pair_map() -> CoarseGrainingMap {
        CoarseGrainingMap::new(space(4), space(2), vec![0, 0, 1, 1]).unwrap()
    }

    #[test]
    fn identity_push_forward_is_identity() {
        let v = pv(&[0.1, 0.2, 0.3, 0.4]);
        let map = CoarseGrainingMap::identity(space(4));
        let image = push_forward(&v, &map).unwrap();
        for i in 0..4 {
            assert_eq!(image.get(i), v.get(i));
        }
    }

    #[test]
    fn push_forward_sums_level_sets() {
        let image = push_forward(&pv(&[0.1, 0.2, 0.3, 0.4]), &pair_map()).unwrap();
        assert!((image.get(0) - 0.3).abs() < 1e-15);
        assert!((image.get(1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn disintegration_reconstructs_the_measure() {
        let map = pair_map();
        let v = pv(&[0.1, 0.2, 0.3, 0.4]);
        let split = disintegrate(&v, &map).unwrap();
        for y in 0..2 {
            let conditional = split.conditionals[y].as_ref().unwrap();
            for (i, &x) in map.level_set(y).iter().enumerate() {
                let product = conditional.get(i) * split.marginal.get(y);
                assert!((product - v.get(x)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_mass_level_set_has_no_conditional() {
        let split = disintegrate(&pv(&[0.5, 0.5, 0.0, 0.0]), &pair_map()).unwrap();
        assert!(split.conditionals[0].is_some());
        assert!(split.conditionals[1].is_none());
    }

    #[test]
    fn conditionals_live_on_level_set_labels() {
        let split = disintegrate(&pv(&[0.1, 0.2, 0.3, 0.4]), &pair_map()).unwrap();
        let c1 = split.conditionals[1].as_ref().unwrap();
        assert_eq!(c1.space().labels(), &["2".to_string(), "3".to_string()]);
    }

    fn block_hopping_generator() -> Generator<f64> {
        // Fast mixing inside {0,1} and {2,3}, slow symmetric hopping between
        // the blocks through states 1 and 2.
        let rates = DMatrix::from_row_slice(
            4,
            4,
            &[
                -5.0, 5.0, 0.0, 0.0, //
                5.0, -5.5, 0.5, 0.0, //
                0.0, 0.5, -5.5, 5.0, //
                0.0, 0.0, 5.0, -5.0,
            ],
        );
        Generator::validate(space(4), rates).unwrap()
    }

    #[test]
    fn cg_generator_with_uniform_conditionals() {
        let l = block_hopping_generator();
        let nu = pv(&[0.25, 0.25, 0.25, 0.25]);
        let lhat = cg_generator(&l, &nu, &pair_map()).unwrap();
        // Each block leaks 0.5 from one of its two states, averaged to 0.25.
        assert!((lhat.rate(0, 1) - 0.25).abs() < 1e-15);
        assert!((lhat.rate(1, 0) - 0.25).abs() < 1e-15);
        assert!((lhat.rate(0, 0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn cg_generator_requires_positive_marginals() {
        let l = block_hopping_generator();
        let err = cg_generator(&l, &pv(&[0.5, 0.5, 0.0, 0.0]), &pair_map()).unwrap_err();
        assert!(matches!(err, Error::UndefinedConditional { label } if label == "1"));
    }

    #[test]
    fn exactly_lumpable_chain_gives_measure_independent_result() {
        // Row sums of cross-block rates are constant inside each block, so
        // the coarse-grained generator cannot depend on the conditionals.
        let rates = DMatrix::from_row_slice(
            4,
            4,
            &[
                -3.0, 1.0, 1.0, 1.0, //
                2.0, -4.0, 1.0, 1.0, //
                1.5, 0.5, -3.0, 1.0, //
                0.5, 1.5, 1.0, -3.0,
            ],
        );
        let l = Generator::validate(space(4), rates).unwrap();
        let map = pair_map();
        let a = cg_generator(&l, &pv(&[0.4, 0.1, 0.3, 0.2]), &map).unwrap();
        let b = cg_generator(&l, &pv(&[0.05, 0.45, 0.1, 0.4]), &map).unwrap();
        for y1 in 0..2 {
            for y2 in 0..2 {
                assert!((a.rate(y1, y2) - b.rate(y1, y2)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn effective_generator_rejects_non_stationary_reference() {
        let l = block_hopping_generator();
        let err = effective_generator(&l, &pv(&[0.7, 0.1, 0.1, 0.1]), &pair_map()).unwrap_err();
        assert!(matches!(err, Error::NotStationary { .. }));
    }

    #[test]
    fn effective_generator_accepts_the_stationary_measure() {
        let l = block_hopping_generator();
        let rho = l.stationary_measure().unwrap();
        let lhat = effective_generator(&l, &rho, &pair_map()).unwrap();
        let image = push_forward(&rho, &pair_map()).unwrap();
        assert!(lhat.stationarity_residual(&image).unwrap() < 1e-12);
    }

    #[test]
    fn restriction_of_block_diagonal_chain_is_a_generator() {
        let rates = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 1.0, 0.0, 0.0, //
                2.0, -2.0, 0.0, 0.0, //
                0.0, 0.0, -3.0, 3.0, //
                0.0, 0.0, 4.0, -4.0,
            ],
        );
        let l = Generator::validate(space(4), rates).unwrap();
        let (block, closed) = restrict(&l, &pair_map(), 1).unwrap();
        assert!(closed);
        assert_eq!(block[(0, 1)], 3.0);
        let (_, coupled_closed) = restrict(&block_hopping_generator(), &pair_map(), 0).unwrap();
        assert!(!coupled_closed);
    }

    #[test]
    fn from_fn_maps_labels_and_rejects_unknown_targets() {
        let fine = StateSpace::product(&space(2), &space(2));
        let map = CoarseGrainingMap::from_fn(fine.clone(), space(2), |label| {
            label.split(':').next().unwrap().to_string()
        })
        .unwrap();
        assert_eq!(map.assignment(), &[0, 0, 1, 1]);
        let err = CoarseGrainingMap::from_fn(fine, space(2), |_| "9".to_string()).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { label } if label == "9"));
    }

    #[test]
    fn constructor_rejects_bad_assignments() {
        let err = CoarseGrainingMap::new(space(3), space(2), vec![0, 1, 5]).unwrap_err();
        assert!(matches!(err, Error::UnassignedState { label } if label == "2"));
        let err = CoarseGrainingMap::new(space(3), space(2), vec![0, 0, 0]).unwrap_err();
        assert!(matches!(err, Error::EmptyLevelSet { label } if label == "1"));
        let err = CoarseGrainingMap::new(space(3), space(2), vec![0, 1]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { left: 2, right: 3 }));
    }
}
