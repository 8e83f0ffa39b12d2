//! Desk-scale boundary behavior of the exact transport solvers: the largest
//! supported supports and weight denominators, and structural properties
//! that stay checkable where the brute-force oracle cannot reach.

use oodrisk_core::numkit::{RngState, Vector};
use oodrisk_core::transport::{
    tv_distance, wasserstein2, wasserstein_inf, DiscreteDistribution, TransportError,
    MAX_SUPPORT,
};

fn random_uniform_dist(rng: &mut RngState, dim: usize, atoms: usize) -> DiscreteDistribution {
    let pts: Vec<Vector> = (0..atoms)
        .map(|_| (0..dim).map(|_| rng.next_in_range(-1.0, 1.0)).collect())
        .collect();
    DiscreteDistribution::uniform(pts).unwrap()
}

#[test]
fn identity_at_the_support_cap() {
    let mut rng = RngState::new(1);
    let p = random_uniform_dist(&mut rng, 3, MAX_SUPPORT);
    assert!(wasserstein2(&p, &p).unwrap() < 1e-9);
    assert_eq!(tv_distance(&p, &p), 0.0);
}

#[test]
fn support_above_the_cap_is_rejected() {
    let mut rng = RngState::new(2);
    let p = random_uniform_dist(&mut rng, 2, MAX_SUPPORT + 1);
    let q = random_uniform_dist(&mut rng, 2, 4);
    assert!(matches!(
        wasserstein2(&p, &q),
        Err(TransportError::SupportTooLarge { .. })
    ));
    assert!(matches!(
        wasserstein_inf(&p, &q),
        Err(TransportError::SupportTooLarge { .. })
    ));
}

#[test]
fn triangle_inequality_beyond_oracle_range() {
    let mut rng = RngState::new(3);
    for _ in 0..10 {
        let a = random_uniform_dist(&mut rng, 2, 32);
        let b = random_uniform_dist(&mut rng, 2, 24);
        let c = random_uniform_dist(&mut rng, 2, 16);
        let ab = wasserstein2(&a, &b).unwrap();
        let bc = wasserstein2(&b, &c).unwrap();
        let ac = wasserstein2(&a, &c).unwrap();
        assert!(ac <= ab + bc + 1e-9);
    }
}

#[test]
fn atom_order_does_not_change_the_distance() {
    let mut rng = RngState::new(4);
    let p = random_uniform_dist(&mut rng, 2, 20);
    let q = random_uniform_dist(&mut rng, 2, 20);
    let reference = wasserstein2(&p, &q).unwrap();
    // Rotate the atom list; the measure is unchanged.
    let mut atoms = p.atoms().to_vec();
    atoms.rotate_left(7);
    let rotated = DiscreteDistribution::uniform(atoms).unwrap();
    let value = wasserstein2(&rotated, &q).unwrap();
    assert!((value - reference).abs() < 1e-9);
}

#[test]
fn bottleneck_handles_the_largest_denominator() {
    // Weights in 256ths, different on each side.
    let p = DiscreteDistribution::new(
        vec![vec![0.0], vec![1.0], vec![2.0]],
        vec![1.0 / 256.0, 200.0 / 256.0, 55.0 / 256.0],
    )
    .unwrap();
    let q = DiscreteDistribution::new(
        vec![vec![0.5], vec![1.5]],
        vec![128.0 / 256.0, 128.0 / 256.0],
    )
    .unwrap();
    let v = wasserstein_inf(&p, &q).unwrap();
    // Every admissible matching must move some of the mass at 1.0 down to
    // 0.5 (the mass at 0.0 and 2.0 cannot fill the 0.5 demand alone).
    assert_eq!(v, 0.5);
    // Thirds are fine (denominator 3); irrational weights are not — the best
    // rational approximation of 1/π under the denominator cap is off by ~5e-4.
    let thirds = DiscreteDistribution::new(
        vec![vec![0.0], vec![1.0]],
        vec![1.0 / 3.0, 2.0 / 3.0],
    )
    .unwrap();
    assert!(wasserstein_inf(&thirds, &q).is_ok());
    let irrational = DiscreteDistribution::new(
        vec![vec![0.0], vec![1.0]],
        vec![std::f64::consts::FRAC_1_PI, 1.0 - std::f64::consts::FRAC_1_PI],
    )
    .unwrap();
    assert!(matches!(
        wasserstein_inf(&irrational, &q),
        Err(TransportError::UnsupportedWeights { .. })
    ));
}

#[test]
fn incompatible_denominators_beyond_the_cap_are_rejected() {
    // 1/255 and 1/256 have least common denominator far above the cap.
    let p = DiscreteDistribution::new(
        vec![vec![0.0], vec![1.0]],
        vec![1.0 / 255.0, 254.0 / 255.0],
    )
    .unwrap();
    let q = DiscreteDistribution::new(
        vec![vec![0.0], vec![1.0]],
        vec![1.0 / 256.0, 255.0 / 256.0],
    )
    .unwrap();
    assert!(matches!(
        wasserstein_inf(&p, &q),
        Err(TransportError::UnsupportedWeights { .. })
    ));
}
