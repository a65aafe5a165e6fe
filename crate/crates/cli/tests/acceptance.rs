//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sepccm_core::generate::{random_metric, random_network, random_point, NetworkShape};
use sepccm_core::geodesic::{discrete_energy, energy_gradient};
use sepccm_core::simulator::{integrate_closed_loop, integrate_reference, measure_convergence};
use sepccm_core::synthesis::import_metric;
use sepccm_core::{
    assemble_t_blocks, assemble_t_full, builtin_example, check_killing, solve_geodesic, verify_on_box,
    verify_on_set, BoxDomain, DiscreteCurve, DistributedController, GeodesicOptions, InputSignal, LocalView,
    MetricBlock, Network, PolyMatrix, Polynomial, ReferenceSignal, SampleSet, SamplerConfig, SimConfig,
    SumSeparableMetric, SynthesisOptions,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sepccm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sepccm")).args(args).output().expect("binary runs");
    let text = format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    (out.status.code().unwrap_or(-1), text)
}

fn criterion_1() -> Check {
    let shape = NetworkShape::default();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let net = random_network(seed, &shape);
        let (metric, mult) = random_metric(1000 + seed, &net, 0.1, 2);
        let tb = assemble_t_blocks(&net, &metric, &mult).map_err(|e| e.to_string())?;
        let tf = assemble_t_full(&net, &metric, &mult).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = random_point(&mut rng, net.n(), 1.0);
            let d = (tb.eval(&x).unwrap() - tf.eval(&x).unwrap()).abs().max();
            worst = worst.max(d);
        }
    }
    let (net, metric, mult) = builtin_example();
    let tb = assemble_t_blocks(&net, &metric, &mult).unwrap();
    let tf = assemble_t_full(&net, &metric, &mult).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let x = random_point(&mut rng, 9, 1.0);
        worst = worst.max((tb.eval(&x).unwrap() - tf.eval(&x).unwrap()).abs().max());
    }
    ensure(worst <= 1e-10, format!("max |T_blocks - T_full| = {worst:e}"))?;
    Ok(format!("max |T_blocks - T_full| = {worst:.2e} over 21 networks x 100 points"))
}

fn criterion_2() -> Check {
    let (net, metric, _) = builtin_example();
    let rep = check_killing(&net, &metric).map_err(|e| e.to_string())?;
    ensure(rep.passed(), format!("published metric fails: {rep}"))?;
    let b = metric.block(1);
    let w = PolyMatrix::symmetric_from_upper(3, |r, c| {
        let p = b.w().get(r, c).clone();
        if (r, c) == (1, 1) {
            &p + &Polynomial::var(5).scale(0.3)
        } else {
            p
        }
    });
    let mut blocks = metric.blocks().to_vec();
    blocks[1] = MetricBlock::new(3, w).unwrap();
    let broken = SumSeparableMetric::new(blocks, metric.lambda(), metric.domain().clone()).unwrap();
    let rep = check_killing(&net, &broken).map_err(|e| e.to_string())?;
    let wit = rep.witness.ok_or("injected z_1 term not detected")?;
    ensure(wit.node == 1, format!("witness at node {}", wit.node))?;
    Ok(format!("published metric passes; injected z_1 caught at node 1 entry ({}, {})", wit.row, wit.col))
}

fn criterion_3() -> Check {
    let (net, metric, mult) = builtin_example();
    let dom = BoxDomain::uniform(9, -0.5, 0.5).unwrap();
    let sampler = SamplerConfig { random: 4096, seed: 3, ..SamplerConfig::default() };
    let start = Instant::now();
    let mut worst = Vec::new();
    for lambda in [0.0, 0.05, 0.1] {
        let m = metric.clone().with_lambda(lambda).unwrap().with_domain(dom.clone()).unwrap();
        let t = assemble_t_full(&net, &m, &mult).unwrap();
        let a = verify_on_box(&t, &dom, &sampler, 1e-6).map_err(|e| e.to_string())?;
        let b = verify_on_box(&t, &dom, &sampler, 1e-6).map_err(|e| e.to_string())?;
        ensure(a.samples_checked >= 4096, format!("only {} samples", a.samples_checked))?;
        ensure(a.report() == b.report(), "reports differ between runs")?;
        worst.push(a.worst_eig);
    }
    let elapsed = start.elapsed();
    ensure(worst.windows(2).all(|w| w[1] >= w[0]), format!("worst_eig not monotone: {worst:?}"))?;
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!(
        "worst_eig at lambda 0/0.05/0.1 = {:.4}/{:.4}/{:.4}, deterministic, {:.1?}",
        worst[0], worst[1], worst[2], elapsed
    ))
}

fn criterion_4(dir: &Path) -> Check {
    let start = Instant::now();
    let out = dir.to_str().unwrap();
    let (code, text) = sepccm(&[
        "synth", "--lambda", "0.1", "--deg-w", "2", "--deg-rho", "2", "--box", "-1 1", "--out-dir", out,
    ]);
    let elapsed = start.elapsed();
    ensure(code == 0, format!("synth exited {code}: {}", text.trim()))?;
    let (metric, mult) = import_metric(&dir.join("metric.txt")).map_err(|e| e.to_string())?;
    // Re-audit the exported file on the tool's 4x audit set.
    let net = sepccm_core::builtin_network();
    let synthesis = std::fs::read_to_string(dir.join("synthesis.txt")).map_err(|e| e.to_string())?;
    let rounds: usize = synthesis
        .lines()
        .find_map(|l| l.strip_prefix("rounds = "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or("synthesis.txt lacks rounds")?;
    let opts = SynthesisOptions::default();
    ensure(opts.audit_factor == 4, "audit factor is not 4")?;
    let set = SampleSet::draw(metric.domain(), &opts.audit_sampler(rounds));
    let t = assemble_t_full(&net, &metric, &mult).map_err(|e| e.to_string())?;
    let cert = verify_on_set(&t, metric.domain(), &set, 1e-6).map_err(|e| e.to_string())?;
    ensure(cert.verified(), format!("audit fails: worst_eig {}", cert.worst_eig))?;
    ensure(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!(
        "feasible; 4x audit on {} samples worst_eig = {:.4} <= -1e-6; {:.0?}",
        cert.samples_checked, cert.worst_eig, elapsed
    ))
}

fn criterion_5() -> Check {
    let opts = GeodesicOptions::default();
    let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5]);
    let block = MetricBlock::new(0, PolyMatrix::from_constant(&w)).unwrap();
    let flat = SumSeparableMetric::new(vec![block], 0.1, BoxDomain::uniform(3, -2.0, 2.0).unwrap()).unwrap();
    let (a, b) = ([0.1, -0.2, 0.3], [-0.4, 0.5, 0.2]);
    let r = solve_geodesic(&flat, 0, &a, &b, 16, &opts).map_err(|e| e.to_string())?;
    let d = DVector::from_iterator(3, b.iter().zip(&a).map(|(x, y)| x - y));
    let exact = d.dot(&(w.clone().try_inverse().unwrap() * &d));
    let straight = DiscreteCurve::straight(0, &a, &b, 16);
    let dev = r
        .curve
        .waypoints
        .iter()
        .zip(&straight.waypoints)
        .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    ensure((r.energy - exact).abs() <= 1e-10 && dev <= 1e-10, format!("energy {} vs {exact}, bend {dev}", r.energy))?;

    let (_, metric, _) = builtin_example();
    let mut curve = DiscreteCurve::straight(1, &[0.0; 3], &[0.3, 0.3, 0.3], 8);
    for (k, p) in curve.waypoints.iter_mut().enumerate().take(8).skip(1) {
        p[1] += 0.03 * (k as f64).cos();
    }
    let (_, grad) = energy_gradient(&metric, &curve).unwrap();
    let h = 1e-6;
    let mut fd_err = 0.0f64;
    for k in 1..8 {
        for l in 0..3 {
            let (mut p, mut q) = (curve.clone(), curve.clone());
            p.waypoints[k][l] += h;
            q.waypoints[k][l] -= h;
            let fd = (discrete_energy(&metric, &p).unwrap() - discrete_energy(&metric, &q).unwrap()) / (2.0 * h);
            fd_err = fd_err.max((fd - grad[k][l]).abs() / grad[k][l].abs().max(1.0));
        }
    }
    ensure(fd_err <= 1e-6, format!("gradient mismatch {fd_err:e}"))?;

    let e: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&k| solve_geodesic(&metric, 1, &[0.0; 3], &[0.3, 0.3, 0.3], k, &opts).map(|r| r.energy))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(e[1] <= e[0] + 1e-6 && e[2] <= e[1] + 1e-6, format!("energies {e:?}"))?;
    Ok(format!(
        "flat energy error {:.1e}; gradient fd error {fd_err:.1e}; E(8,16,32) = {:.9}/{:.9}/{:.9}",
        (r.energy - exact).abs(),
        e[0],
        e[1],
        e[2]
    ))
}

fn criterion_6() -> Check {
    let (net, metric, mult) = builtin_example();
    let ctrl = DistributedController::new(&net, &metric, &mult, 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mono_err = 0.0f64;
    for _ in 0..10 {
        let xs = random_point(&mut rng, 9, 0.4);
        let us = random_point(&mut rng, 3, 1.0);
        let k: Vec<f64> = ctrl.control(&xs, &xs, &us).unwrap().into_iter().flat_map(|o| o.u).collect();
        ensure(k == us, "k(x*, x*) differs from u*")?;

        let x = random_point(&mut rng, 9, 0.4);
        let a = ctrl.control_node(&LocalView::project(&net, 0, &x, &xs, &us).unwrap()).unwrap();
        let mut y = x.clone();
        for v in &mut y[6..9] {
            *v += 0.25;
        }
        let b = ctrl.control_node(&LocalView::project(&net, 0, &y, &xs, &us).unwrap()).unwrap();
        ensure(a.u[0].to_bits() == b.u[0].to_bits(), "node 0 reacts to node 2")?;

        let views: Vec<LocalView> = (0..3).map(|i| LocalView::project(&net, i, &x, &xs, &us).unwrap()).collect();
        let dist: Vec<f64> = ctrl.distributed_control_step(&views).unwrap().into_iter().flat_map(|o| o.u).collect();
        let mono = ctrl.monolithic_control(&x, &xs, &us).unwrap();
        for (p, q) in dist.iter().zip(&mono) {
            mono_err = mono_err.max((p - q).abs());
        }
    }
    ensure(mono_err <= 1e-12, format!("distributed vs monolithic {mono_err:e}"))?;
    Ok(format!("k(x*) = u* exactly; node 0 bitwise local; distributed vs monolithic {mono_err:.1e}"))
}

fn criterion_7(metric_file: &Path) -> Check {
    let (metric, mult) = import_metric(metric_file).map_err(|e| e.to_string())?;
    let net = sepccm_core::builtin_network();
    let lambda = metric.lambda();
    let cfg = SimConfig { dt: 1e-3, hc: 1e-2, horizon: 20.0, ..SimConfig::default() };
    let start = Instant::now();
    let ctrl = DistributedController::new(&net, &metric, &mult, cfg.segments).map_err(|e| e.to_string())?;
    let (r, c) = integrate_closed_loop(&ctrl, &ReferenceSignal::origin(9), &[0.1; 9], &cfg).map_err(|e| e.to_string())?;
    let rep = measure_convergence(&r, &c, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(rep.lambda_fit >= 0.5 * lambda, format!("lambda_fit {} < {}", rep.lambda_fit, 0.5 * lambda))?;
    ensure(rep.bound_check >= 0.95, format!("envelope holds on {:.3}", rep.bound_check))?;
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!(
        "lambda_fit = {:.3} (design {lambda}), envelope on {:.1}% of steps, final error {:.1e}, {:.1?}",
        rep.lambda_fit,
        100.0 * rep.bound_check,
        rep.final_error,
        elapsed
    ))
}

fn criterion_8(dir: &Path) -> Check {
    let net = Network::parse("nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = -1 * v0\n").unwrap();
    let reference = ReferenceSignal { x_star0: vec![1.0], u_star: InputSignal::Zero };
    let err = |dt: f64| {
        let cfg = SimConfig { dt, hc: dt, horizon: 1.0, ..SimConfig::default() };
        let tr = integrate_reference(&net, &reference, &cfg).unwrap();
        (tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs()
    };
    let ratio = err(0.1) / err(0.05);
    ensure((12.0..=20.0).contains(&ratio), format!("order ratio {ratio}"))?;

    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        let (code, text) = sepccm(&["demo", "--seed", "11", "--out-dir", d.to_str().unwrap()]);
        ensure(code == 0, format!("demo exited {code}: {}", text.trim()))?;
    }
    for name in ["reference.csv", "closed_loop.csv", "inputs.csv", "convergence.csv", "metric.txt", "manifest.json"] {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(x == y, format!("{name} differs between runs"))?;
    }
    Ok(format!("RK4 error ratio {ratio:.2}; two seeded demos byte-identical"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let synth_dir = tmp.path().join("synth");
    let demo_dir = tmp.path().join("demo");
    let mut failed = 0;
    let mut report = |n: usize, r: Check| match r {
        Ok(msg) => println!("criterion {n}: PASS  {msg}"),
        Err(msg) => {
            failed += 1;
            println!("criterion {n}: FAIL  {msg}");
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    let c4 = criterion_4(&synth_dir);
    let synthesized = c4.is_ok();
    report(4, c4);
    report(5, criterion_5());
    report(6, criterion_6());
    if synthesized {
        report(7, criterion_7(&synth_dir.join("metric.txt")));
    } else {
        report(7, Err("no synthesized metric".into()));
    }
    report(8, criterion_8(&demo_dir));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
