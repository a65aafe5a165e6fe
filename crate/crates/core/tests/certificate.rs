use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sepccm_core::generate::{random_metric, random_network, random_point, NetworkShape};
use sepccm_core::{
    assemble_t_blocks, assemble_t_full, builtin_example, check_killing, verify_on_box, MetricBlock, PolyMatrix,
    Polynomial, SamplerConfig, SumSeparableMetric,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn block_and_full_assembly_agree(seed in any::<u64>()) {
        let net = random_network(seed, &NetworkShape::default());
        let (metric, mult) = random_metric(seed ^ 1, &net, 0.3, 2);
        let tb = assemble_t_blocks(&net, &metric, &mult).unwrap();
        let tf = assemble_t_full(&net, &metric, &mult).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x = random_point(&mut rng, net.n(), 1.0);
            let d = (tb.eval(&x).unwrap() - tf.eval(&x).unwrap()).abs().max();
            prop_assert!(d <= 1e-10, "difference {d}");
        }
    }

    #[test]
    fn worst_eigenvalue_grows_with_lambda(seed in any::<u64>()) {
        let net = random_network(seed, &NetworkShape::default());
        let (metric, mult) = random_metric(seed ^ 2, &net, 0.0, 2);
        let sampler = SamplerConfig { grid_cap: 50, halton: 50, random: 50, seed, ..SamplerConfig::default() };
        let mut last = f64::NEG_INFINITY;
        for lambda in [0.0, 0.1, 0.5] {
            let m = metric.clone().with_lambda(lambda).unwrap();
            let t = assemble_t_full(&net, &m, &mult).unwrap();
            let c = verify_on_box(&t, m.domain(), &sampler, 1e-6).unwrap();
            prop_assert!(c.worst_eig >= last - 1e-12);
            last = c.worst_eig;
        }
    }

    #[test]
    fn metric_derivative_matches_finite_differences(seed in any::<u64>()) {
        let net = random_network(seed, &NetworkShape::default());
        let (metric, _) = random_metric(seed ^ 3, &net, 0.1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..net.node_count() {
            let n = net.node(i).n();
            let x = random_point(&mut rng, n, 0.8);
            let v = random_point(&mut rng, n, 1.0);
            let d = metric.derivative(i, &x, &v).unwrap();
            let h = 1e-5;
            let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fd = (metric.eval(i, &plus).unwrap().1 - metric.eval(i, &minus).unwrap().1) / (2.0 * h);
            prop_assert!((d - fd).abs().max() <= 1e-5);
        }
    }
}

#[test]
fn example_assemblies_agree() {
    let (net, metric, mult) = builtin_example();
    let tb = assemble_t_blocks(&net, &metric, &mult).unwrap();
    let tf = assemble_t_full(&net, &metric, &mult).unwrap();
    assert!(tb.max_coeff_diff(&tf).unwrap() < 1e-12);
}

#[test]
fn killing_on_the_published_metric() {
    let (net, metric, _) = builtin_example();
    assert!(check_killing(&net, &metric).unwrap().passed());

    // Adding z_0 to W_0[0,0] breaks invariance along the input direction.
    let b0 = metric.block(0);
    let w = PolyMatrix::symmetric_from_upper(3, |r, c| {
        let p = b0.w().get(r, c).clone();
        if (r, c) == (0, 0) {
            &p + &Polynomial::var(2).scale(0.5)
        } else {
            p
        }
    });
    let mut blocks = metric.blocks().to_vec();
    blocks[0] = MetricBlock::new(0, w).unwrap();
    let broken = SumSeparableMetric::new(blocks, metric.lambda(), metric.domain().clone()).unwrap();
    let rep = check_killing(&net, &broken).unwrap();
    let wit = rep.witness.expect("witness");
    assert_eq!((wit.node, wit.column, wit.row, wit.col), (0, 0, 0, 0));
    assert!((wit.residual.coeff(&sepccm_core::Monomial::one()) - 0.5).abs() < 1e-12);
}
