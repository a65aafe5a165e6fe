use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sepccm_core::generate::random_point;
use sepccm_core::{builtin_example, DistributedController, LocalView};

fn controller() -> DistributedController {
    let (net, metric, mult) = builtin_example();
    DistributedController::new(&net, &metric, &mult, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn on_the_reference_the_input_is_the_reference_input(seed in any::<u64>()) {
        let ctrl = controller();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = random_point(&mut rng, 9, 0.5);
        let us = random_point(&mut rng, 3, 1.0);
        let u: Vec<f64> = ctrl.control(&xs, &xs, &us).unwrap().into_iter().flat_map(|o| o.u).collect();
        prop_assert_eq!(u, us);
    }

    #[test]
    fn node_zero_ignores_node_two(seed in any::<u64>(), bump in -0.3f64..0.3) {
        let ctrl = controller();
        let net = ctrl.network();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&mut rng, 9, 0.3);
        let xs = random_point(&mut rng, 9, 0.3);
        let us = random_point(&mut rng, 3, 1.0);
        let mut y = x.clone();
        let mut ys = xs.clone();
        for v in 6..9 {
            y[v] += bump;
            ys[v] -= bump;
        }
        let a = ctrl.control_node(&LocalView::project(net, 0, &x, &xs, &us).unwrap()).unwrap();
        let b = ctrl.control_node(&LocalView::project(net, 0, &y, &ys, &us).unwrap()).unwrap();
        prop_assert_eq!(a.u[0].to_bits(), b.u[0].to_bits());
    }

    #[test]
    fn distributed_matches_monolithic(seed in any::<u64>()) {
        let ctrl = controller();
        let net = ctrl.network();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&mut rng, 9, 0.4);
        let xs = random_point(&mut rng, 9, 0.4);
        let us = random_point(&mut rng, 3, 1.0);
        let views: Vec<LocalView> = (0..3).map(|i| LocalView::project(net, i, &x, &xs, &us).unwrap()).collect();
        let dist: Vec<f64> = ctrl.distributed_control_step(&views).unwrap().into_iter().flat_map(|o| o.u).collect();
        let mono = ctrl.monolithic_control(&x, &xs, &us).unwrap();
        for (a, b) in dist.iter().zip(&mono) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn local_views_hold_only_the_neighborhood() {
    let ctrl = controller();
    let x: Vec<f64> = (0..9).map(|v| v as f64 / 10.0).collect();
    let view = LocalView::project(ctrl.network(), 0, &x, &[0.0; 9], &[0.0; 3]).unwrap();
    assert_eq!(view.nodes, vec![0, 1]);
    assert_eq!(view.own_state(), &x[0..3]);
    assert_eq!(view.states.concat(), x[0..6].to_vec());
}
