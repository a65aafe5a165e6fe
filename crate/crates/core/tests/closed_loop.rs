use sepccm_core::simulator::{integrate_closed_loop, measure_convergence};
use sepccm_core::{
    assemble_t_full, check_killing, verify_on_box, DistributedController, Network, ReferenceSignal, SamplerConfig,
    SimConfig, SumSeparableMetric,
};

fn chain_controller() -> DistributedController {
    let net = Network::parse(include_str!("data/chain_network.txt")).unwrap();
    let (metric, mult) = SumSeparableMetric::parse(include_str!("data/chain_metric.txt")).unwrap();
    DistributedController::new(&net, &metric, &mult, 8).unwrap()
}

fn run(x0: &[f64], hc: f64, horizon: f64) -> (sepccm_core::Trajectory, sepccm_core::ConvergenceReport) {
    let ctrl = chain_controller();
    let cfg = SimConfig { hc, horizon, segments: 8, ..SimConfig::default() };
    let reference = ReferenceSignal::origin(6);
    let (r, c) = integrate_closed_loop(&ctrl, &reference, x0, &cfg).unwrap();
    let rep = measure_convergence(&r, &c, &cfg).unwrap();
    (c, rep)
}

#[test]
fn chain_metric_is_a_certificate() {
    let ctrl = chain_controller();
    assert!(check_killing(ctrl.network(), ctrl.metric()).unwrap().passed());
    let t = assemble_t_full(ctrl.network(), ctrl.metric(), ctrl.multipliers()).unwrap();
    let cert = verify_on_box(&t, ctrl.metric().domain(), &SamplerConfig::default(), 1e-6).unwrap();
    assert!(cert.verified(), "{}", cert.report());
}

#[test]
fn starting_on_the_reference_stays_there() {
    let (_, rep) = run(&[0.0; 6], 1e-2, 2.0);
    assert!(rep.errors.iter().all(|&e| e <= 1e-9));
}

#[test]
fn geodesic_energy_does_not_grow() {
    let (traj, rep) = run(&[0.2, -0.1, 0.15, 0.1, -0.2, 0.05], 1e-2, 4.0);
    assert_eq!(traj.box_exits, 0);
    for w in traj.energies.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
    assert!(rep.final_error < 0.1 * rep.initial_error);
}

#[test]
fn halving_the_update_period_barely_moves_the_final_error() {
    let x0 = [0.2, -0.1, 0.15, 0.1, -0.2, 0.05];
    let (_, coarse) = run(&x0, 2e-2, 3.0);
    let (_, fine) = run(&x0, 1e-2, 3.0);
    let rel = (coarse.final_error - fine.final_error).abs() / fine.final_error;
    assert!(rel < 0.1, "{} vs {}", coarse.final_error, fine.final_error);
}
