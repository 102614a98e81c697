//! Seeded random topologies and quadratic instances shared by the
//! integration tests.
#![allow(dead_code)]

use consensus_admm::objectives::ObjectiveOracle;
use consensus_admm::{ComponentStructure, DenseMatrix, ProblemInstance, Vector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The five-agent, three-component example: `{1,2}`, `{4,5}`, `{2,3,4}`.
pub fn three_components(dim: usize) -> ComponentStructure {
    ComponentStructure::new(5, dim, vec![vec![1, 2], vec![4, 5], vec![2, 3, 4]]).unwrap()
}

/// Random spanning tree plus a few extra edges.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 2..=n {
        let u = rng.random_range(1..v);
        edges.push((u, v));
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges
}

/// Chain of overlapping components of size 2 to 4 over a shuffled agent
/// order, plus a few random extra components. Connected by construction.
pub fn random_components(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut comps = Vec::new();
    let mut covered = 1;
    while covered < n {
        let fresh = rng.random_range(1..=3).min(n - covered);
        let anchor = order[rng.random_range(0..covered)];
        let mut c = vec![anchor];
        c.extend_from_slice(&order[covered..covered + fresh]);
        covered += fresh;
        comps.push(c);
    }
    for _ in 0..rng.random_range(0..=2) {
        let size = rng.random_range(2..=3.min(n));
        let mut pick = order.clone();
        pick.shuffle(rng);
        comps.push(pick[..size].to_vec());
    }
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Centralized,
    Ring,
    Edges,
    Components,
}

pub fn random_topology(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    shape: Shape,
) -> ComponentStructure {
    match shape {
        Shape::Centralized => ComponentStructure::centralized(n, dim).unwrap(),
        Shape::Ring => ComponentStructure::ring(n.max(3), dim).unwrap(),
        Shape::Edges => ComponentStructure::from_edges(&random_edges(rng, n), n, dim).unwrap(),
        Shape::Components => ComponentStructure::new(n, dim, random_components(rng, n)).unwrap(),
    }
}

/// Symmetric positive definite `Φ` with eigenvalues in about `[0.1, 10]`.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DenseMatrix {
    let a = DenseMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let scale = rng.random_range(0.1..10.0);
    (&a * a.transpose()) * (0.5 * scale) + DenseMatrix::identity(dim, dim) * (0.1 * scale)
}

/// Quadratic agents; roughly one in eight has zero curvature.
pub fn random_quadratics(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> ProblemInstance {
    let oracles = (0..n)
        .map(|i| {
            if i > 0 && rng.random_bool(0.125) {
                return ObjectiveOracle::zero(dim);
            }
            let phi = random_spd(rng, dim);
            let c = Vector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
            ObjectiveOracle::quadratic(phi, c, 0.0).unwrap()
        })
        .collect();
    ProblemInstance::new(oracles).unwrap()
}

/// A valid topology and quadratic instance with `3 ≤ N ≤ max_agents`.
pub struct RandomCase {
    pub seed: u64,
    pub topology: ComponentStructure,
    pub instance: ProblemInstance,
    pub rho: f64,
}

pub fn random_case(seed: u64, max_agents: usize, dims: &[usize]) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=max_agents);
    let dim = dims[rng.random_range(0..dims.len())];
    let shape = [
        Shape::Centralized,
        Shape::Ring,
        Shape::Edges,
        Shape::Components,
    ][rng.random_range(0..4)];
    let topology = random_topology(&mut rng, n, dim, shape);
    topology.ensure_valid().unwrap();
    let instance = random_quadratics(&mut rng, topology.n_agents(), dim);
    let rho = 10f64.powf(rng.random_range(-1.0..2.0));
    RandomCase {
        seed,
        topology,
        instance,
        rho,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
