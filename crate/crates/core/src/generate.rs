//! Seeded random networks, metrics and multipliers that respect the
//! locality rules. Used by property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metric::{MetricBlock, Multipliers, SumSeparableMetric};
use crate::network::{Graph, Network, NodeDynamics};
use crate::polyalg::{monomials_up_to, PolyMatrix, PolyVector, Polynomial};
use crate::sampling::BoxDomain;

/// Size limits for [`random_network`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkShape {
    pub max_nodes: usize,
    pub max_dim: usize,
    pub max_inputs: usize,
    pub max_degree: u32,
    /// Terms per polynomial entry.
    pub max_terms: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        NetworkShape {
            max_nodes: 3,
            max_dim: 3,
            max_inputs: 2,
            max_degree: 2,
            max_terms: 3,
        }
    }
}

fn random_poly(rng: &mut ChaCha8Rng, vars: &[usize], degree: u32, terms: usize, scale: f64) -> Polynomial {
    let basis = monomials_up_to(vars, degree);
    let k = rng.gen_range(1..=terms.max(1));
    Polynomial::from_terms(
        (0..k).map(|_| (basis.choose(rng).expect("basis has the constant").clone(), scale * rng.gen_range(-1.0..1.0))),
    )
}

/// A connected graph on at most `shape.max_nodes` nodes with node
/// dynamics drawn from neighborhood-local polynomials.
pub fn random_network(seed: u64, shape: &NetworkShape) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=shape.max_nodes.max(1));
    // A random spanning tree plus a few extra edges.
    let mut edges = Vec::new();
    for j in 1..count {
        edges.push((rng.gen_range(0..j), j));
    }
    for a in 0..count {
        for b in a + 1..count {
            if rng.gen_bool(0.3) {
                edges.push((a, b));
            }
        }
    }
    let graph = Graph::new(count, &edges).expect("spanning tree is connected");
    let dims: Vec<usize> = (0..count).map(|_| rng.gen_range(1..=shape.max_dim.max(1))).collect();
    let offsets: Vec<usize> = dims.iter().scan(0, |o, &d| {
        let r = *o;
        *o += d;
        Some(r)
    }).collect();
    let nodes = (0..count)
        .map(|i| {
            let own: Vec<usize> = (offsets[i]..offsets[i] + dims[i]).collect();
            let hood: Vec<usize> = graph
                .closed_neighborhood(i)
                .into_iter()
                .flat_map(|j| offsets[j]..offsets[j] + dims[j])
                .collect();
            let f = PolyVector::new(
                (0..dims[i]).map(|_| random_poly(&mut rng, &hood, shape.max_degree, shape.max_terms, 1.0)).collect(),
            );
            let m = rng.gen_range(1..=shape.max_inputs.max(1));
            let b = PolyMatrix::from_fn(dims[i], m, |_, _| {
                if rng.gen_bool(0.5) {
                    random_poly(&mut rng, &own, 1, 2, 1.0)
                } else {
                    Polynomial::zero()
                }
            });
            NodeDynamics::new(f, b).expect("shapes agree")
        })
        .collect();
    Network::new(graph, nodes).expect("generated dynamics are local")
}

/// `W_i = diagonal I + perturbation`, with the perturbation bounded so
/// that every block stays positive definite on `[-1, 1]ⁿ`.
pub fn random_metric(seed: u64, net: &Network, lambda: f64, degree: u32) -> (SumSeparableMetric, Multipliers) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::new();
    let mut rho = Vec::new();
    for i in 0..net.node_count() {
        let n = net.node(i).n();
        let own: Vec<usize> = net.node_vars(i).collect();
        // Each entry has at most two terms of magnitude below 0.1, so the
        // off-diagonal row sums stay below the diagonal shift.
        let shift = 1.0 + 0.2 * n as f64;
        let w = PolyMatrix::symmetric_from_upper(n, |r, c| {
            let p = random_poly(&mut rng, &own, degree, 2, 0.1);
            if r == c {
                &p + &Polynomial::constant(shift)
            } else {
                p
            }
        });
        blocks.push(MetricBlock::new(net.offset(i), w).expect("symmetric and local"));
        let hood = net.neighborhood_vars(i);
        rho.push(&random_poly(&mut rng, &hood, 2, 3, 0.5) + &Polynomial::constant(2.0));
    }
    let domain = BoxDomain::uniform(net.n(), -1.0, 1.0).expect("valid box");
    (
        SumSeparableMetric::new(blocks, lambda, domain).expect("blocks tile the state"),
        Multipliers { rho },
    )
}

/// A uniform point in `[-r, r]ⁿ`.
pub fn random_point(rng: &mut impl Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..=r)).collect()
}
