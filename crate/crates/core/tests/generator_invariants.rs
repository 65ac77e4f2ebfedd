mod support;

use ctmc_lumper_core::chain::{
    Generator, ProbabilityVector, StateSpace, TOL_STATIONARY_RESIDUAL,
};
use ctmc_lumper_core::multiscale::{birth_death_ring, build_l_eps, scenario, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn irreducibility_agrees_with_matrix_power_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut reducible_seen = 0;
    let mut irreducible_seen = 0;
    for n in 2..=7 {
        for _ in 0..8 {
            for density in [0.15, 0.4, 0.8] {
                let l = support::random_generator(&mut rng, n, density);
                let expected = support::power_positive(&l);
                assert_eq!(l.is_irreducible(), expected);
                if expected {
                    irreducible_seen += 1;
                } else {
                    reducible_seen += 1;
                }
            }
        }
    }
    assert!(reducible_seen > 10, "ensemble produced {reducible_seen} reducible cases");
    assert!(irreducible_seen > 10, "ensemble produced {irreducible_seen} irreducible cases");
}

#[test]
fn disconnected_blocks_are_reducible() {
    let mut rates = DMatrix::zeros(4, 4);
    rates[(0, 1)] = 1.0;
    rates[(1, 0)] = 2.0;
    rates[(2, 3)] = 0.5;
    rates[(3, 2)] = 0.5;
    let l = Generator::from_off_diagonal(StateSpace::numbered(4).unwrap(), rates).unwrap();
    assert!(!l.is_irreducible());
    assert!(!support::power_positive(&l));

    let mut cycle = DMatrix::zeros(5, 5);
    for z in 0..5 {
        cycle[(z, (z + 1) % 5)] = 1.0;
    }
    let ring = Generator::from_off_diagonal(StateSpace::numbered(5).unwrap(), cycle).unwrap();
    assert!(ring.is_irreducible());
    assert!(support::power_positive(&ring));

    for id in Scenario::ALL {
        let (base, _) = scenario::<f64>(id, 10).unwrap();
        let l = build_l_eps(&base.with_epsilon(1e-3).unwrap()).unwrap();
        assert!(l.is_irreducible());
        assert!(support::power_positive(&l));
    }
}

#[test]
fn stationary_measure_matches_long_time_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let l = support::random_irreducible(&mut rng, 5);
        let rho = l.stationary_measure().unwrap();
        assert!(rho.is_positive());
        assert!(l.stationarity_residual(&rho).unwrap() <= TOL_STATIONARY_RESIDUAL);

        let start = DVector::from_element(5, 0.2);
        let limit = support::rk4_forward(&l, &start, 1.0, 2000);
        let limit = support::rk4_forward(&l, &limit, 999.0, 4000);
        for i in 0..5 {
            assert!(
                (rho.get(i) - limit[i]).abs() <= 1e-8,
                "state {i}: stationary {} vs long-time {}",
                rho.get(i),
                limit[i]
            );
        }
    }
}

#[test]
fn detailed_balance_survives_time_change_and_fails_on_rings() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let l = support::random_reversible(&mut rng, 5);
        let rho = l.stationary_measure().unwrap();
        assert!(l.check_detailed_balance(&rho).unwrap());

        let scaled =
            Generator::from_off_diagonal(l.space().clone(), l.rates() * 7.3).unwrap();
        assert!(scaled.check_detailed_balance(&rho).unwrap());
    }

    let ring = birth_death_ring::<f64>(5, 1.0, 0.1).unwrap();
    let rho = ring.stationary_measure().unwrap();
    assert!(!ring.check_detailed_balance(&rho).unwrap());

    let symmetric = birth_death_ring::<f64>(5, 1.0, 1.0).unwrap();
    let rho = symmetric.stationary_measure().unwrap();
    assert!(symmetric.check_detailed_balance(&rho).unwrap());
}

#[test]
fn construction_zeroes_row_sums_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let l = support::random_generator(&mut rng, 6, 0.7);
        for i in 0..6 {
            let off: f64 = (0..6).filter(|&j| j != i).map(|j| l.rate(i, j)).sum();
            assert_eq!(off + l.rate(i, i), 0.0, "row {i} sums to {}", off + l.rate(i, i));
        }
    }

    let mut rates = DMatrix::zeros(2, 2);
    rates[(0, 0)] = -1.0 + 3e-11;
    rates[(0, 1)] = 1.0;
    rates[(1, 0)] = 2.0;
    rates[(1, 1)] = -2.0;
    let l = Generator::validate(StateSpace::numbered(2).unwrap(), rates).unwrap();
    let row: f64 = l.rate(0, 0) + l.rate(0, 1);
    assert_eq!(row, 0.0);
}

#[test]
fn spectral_gap_matches_closed_forms() {
    let mut rates = DMatrix::zeros(2, 2);
    rates[(0, 1)] = 1.0;
    rates[(1, 0)] = 2.0;
    let l = Generator::<f64>::from_off_diagonal(StateSpace::numbered(2).unwrap(), rates).unwrap();
    assert!((l.spectral_gap().unwrap() - 3.0).abs() <= 1e-12);

    let n = 10;
    let ring = birth_death_ring::<f64>(n, 1.0, 1.0).unwrap();
    let expected = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / n as f64).cos());
    assert!((ring.spectral_gap().unwrap() - expected).abs() <= 1e-10);
}

#[test]
fn probability_vector_constructors_enforce_the_simplex() {
    let space = StateSpace::numbered(3).unwrap();
    let uniform = ProbabilityVector::<f64>::uniform(space.clone());
    assert!((uniform.get(0) - 1.0 / 3.0).abs() <= 1e-16);

    let dirac: ProbabilityVector<f64> = ProbabilityVector::dirac(space.clone(), "1").unwrap();
    assert_eq!(dirac.get(1), 1.0);
    assert_eq!(dirac.get(0), 0.0);

    let bad = DVector::from_column_slice(&[0.5, 0.4, 0.2]);
    assert!(ProbabilityVector::<f64>::new(space.clone(), bad).is_err());

    let negative = DVector::from_column_slice(&[1.2, -0.1, -0.1]);
    assert!(ProbabilityVector::<f64>::new(space, negative).is_err());
}
