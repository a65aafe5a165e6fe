//! Subcommands of the `sepccm` binary. Each writes its results and a
//! `manifest.json` into `--out-dir` and maps its outcome to an exit code:
//! 0 success, 1 negative result (not verified, infeasible, not converging),
//! 2 operational error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sepccm_core::controller::DistributedController;
use sepccm_core::geodesic::{solve_geodesic, GeodesicOptions};
use sepccm_core::simulator::{integrate_closed_loop, measure_convergence, ConvergenceReport, SimConfig};
use sepccm_core::synthesis::{solve_feasibility, SolverMethod, SynthesisOptions, SynthesisOutcome, SynthesisProblem};
use sepccm_core::{
    builtin_example, builtin_network, check_killing, verify_on_box, BoxDomain, Certificate, Multipliers, Network,
    ReferenceSignal, SamplerConfig, SumSeparableMetric,
};

/// Convergence thresholds used by `simulate` and `demo`.
pub const MIN_RATE_FRACTION: f64 = 0.5;
pub const MIN_ENVELOPE_FRACTION: f64 = 0.95;

#[derive(Parser, Debug)]
#[command(name = "sepccm", version, about = "Sum-separable contraction metrics for networked systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample T(x) on a box and report the worst eigenvalue.
    Verify(VerifyArgs),
    /// Search for a metric and multipliers, then audit them.
    Synth(SynthArgs),
    /// Solve one node's geodesic between two points.
    Geodesic(GeodesicArgs),
    /// Closed-loop run from a perturbed initial state.
    Simulate(SimulateArgs),
    /// The three-node example end to end.
    Demo(DemoArgs),
    /// Summarize the results found in an output directory.
    Report(ReportArgs),
}

/// Flags accepted by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Network file, or `example` for the bundled three-node network.
    #[arg(long, default_value = "example")]
    pub network: String,
    /// Metric file, `published` for the published metric or `identity`.
    #[arg(long)]
    pub metric: Option<String>,
    /// `"lo hi"` for every coordinate, or one comma-separated pair per coordinate.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub box_: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = sepccm_core::geodesic::DEFAULT_SEGMENTS)]
    pub k_segments: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub hc: f64,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
}

/// Template and budget of the metric search.
#[derive(Args, Debug, Clone)]
pub struct SynthKeys {
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub deg_w: i64,
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub deg_rho: i64,
    /// Uniform random training samples.
    #[arg(long, default_value_t = 2048)]
    pub samples: usize,
    /// Scenario refinement rounds.
    #[arg(long, default_value_t = 6)]
    pub rounds: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub m_lower: f64,
    /// `smoothed` or `polyak`.
    #[arg(long, default_value = "smoothed")]
    pub method: String,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Uniform random samples on top of the grid and Halton points.
    #[arg(long, default_value_t = 2048)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub synth: SynthKeys,
}

#[derive(Args, Debug)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0)]
    pub node: usize,
    /// Start point (node-local coordinates, comma separated); defaults to 0.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// End point (node-local coordinates, comma separated).
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial state, comma separated; defaults to the reference plus 0.1 in every coordinate.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub synth: SynthKeys,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Scientific outcome of a successful run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Negative,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Negative => 1,
        }
    }

    fn from_bool(ok: bool) -> Outcome {
        if ok {
            Outcome::Success
        } else {
            Outcome::Negative
        }
    }
}

/// An operational failure, tagged with the stage that raised it.
#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> Stage<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage,
            message: e.to_string(),
        })
    }
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Verify(a) => cmd_verify(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Geodesic(a) => cmd_geodesic(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Demo(a) => cmd_demo(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Parses `args` (including the program name) and runs them, returning the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(o) => o.code(),
        Err(e) => {
            eprintln!("error in {e}");
            2
        }
    }
}

struct OutDir {
    path: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(path: &Path) -> CliResult<OutDir> {
        std::fs::create_dir_all(path).stage("output")?;
        Ok(OutDir {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> CliResult<()> {
        std::fs::write(self.path.join(name), text).stage("output")?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    /// Writes `manifest.json`: the command, its full configuration and the
    /// files produced. The output directory itself is left out so that
    /// reruns elsewhere give identical manifests.
    fn finish(mut self, command: &str, config: Value, outcome: &str) -> CliResult<()> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        files.sort();
        let manifest = json!({
            "tool": "sepccm",
            "version": env!("CARGO_PKG_VERSION"),
            "format": 1,
            "command": command,
            "config": config,
            "outcome": outcome,
            "files": files,
        });
        let text = serde_json::to_string_pretty(&manifest).stage("output")? + "\n";
        self.write("manifest.json", &text)
    }
}

fn common_config(c: &Common) -> Value {
    json!({
        "network": c.network,
        "metric": c.metric,
        "box": c.box_,
        "lambda": c.lambda,
        "eps": c.eps,
        "seed": c.seed,
        "k_segments": c.k_segments,
        "dt": c.dt,
        "hc": c.hc,
        "horizon": c.horizon,
    })
}

fn synth_config(s: &SynthKeys) -> Value {
    json!({
        "deg_w": s.deg_w,
        "deg_rho": s.deg_rho,
        "samples": s.samples,
        "rounds": s.rounds,
        "m_lower": s.m_lower,
        "method": s.method,
    })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(am), Value::Object(bm)) = (a.as_object_mut(), b) {
        am.extend(bm);
    }
    a
}

fn load_network(spec: &str) -> CliResult<Network> {
    if spec == "example" {
        return Ok(builtin_network());
    }
    let text = std::fs::read_to_string(spec).map_err(|e| CliError {
        stage: "load network",
        message: format!("{spec}: {e}"),
    })?;
    Network::parse(&text).map_err(|e| CliError {
        stage: "load network",
        message: format!("{spec}: {e}"),
    })
}

fn load_metric(spec: Option<&str>, net: &Network, domain: &BoxDomain) -> CliResult<(SumSeparableMetric, Multipliers)> {
    let spec = spec.ok_or_else(|| CliError {
        stage: "load metric",
        message: "--metric is required (a file, 'published' or 'identity')".into(),
    })?;
    let (metric, mult) = match spec {
        "published" => {
            let (_, m, r) = builtin_example();
            (m, r)
        }
        "identity" => (
            SumSeparableMetric::identity(net, 0.0, domain.clone()).stage("load metric")?,
            Multipliers::constant(&vec![0.0; net.node_count()]),
        ),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError {
                stage: "load metric",
                message: format!("{path}: {e}"),
            })?;
            SumSeparableMetric::parse(&text).map_err(|e| CliError {
                stage: "load metric",
                message: format!("{path}: {e}"),
            })?
        }
    };
    metric.check_compatible(net, &mult).stage("load metric")?;
    Ok((metric, mult))
}

fn domain(c: &Common, n: usize, fallback: Option<&BoxDomain>) -> CliResult<BoxDomain> {
    match (&c.box_, fallback) {
        (Some(text), _) => BoxDomain::parse(text, n).stage("config"),
        (None, Some(d)) => Ok(d.clone()),
        (None, None) => BoxDomain::uniform(n, -1.0, 1.0).stage("config"),
    }
}

fn parse_point(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| CliError {
            stage: "config",
            message: format!("cannot parse {what} '{text}' as comma-separated numbers"),
        })
}

fn sim_config(c: &Common) -> CliResult<SimConfig> {
    let cfg = SimConfig {
        dt: c.dt,
        horizon: c.horizon,
        hc: c.hc,
        segments: c.k_segments,
        seed: c.seed,
        ..SimConfig::default()
    };
    cfg.validate().stage("config")?;
    Ok(cfg)
}

fn check_eps(c: &Common) -> CliResult<()> {
    if !(c.eps > 0.0 && c.eps.is_finite()) {
        return Err(CliError {
            stage: "config",
            message: format!("eps must be positive, got {}", c.eps),
        });
    }
    Ok(())
}

fn verify_sampler(seed: u64, samples: usize) -> SamplerConfig {
    SamplerConfig {
        random: samples,
        seed,
        ..SamplerConfig::default()
    }
}

fn synthesis_problem(net: &Network, c: &Common, s: &SynthKeys, domain: BoxDomain) -> CliResult<SynthesisProblem> {
    let method: SolverMethod = s.method.parse().stage("config")?;
    let options = SynthesisOptions {
        samples: s.samples,
        rounds: s.rounds,
        method,
        seed: c.seed,
        ..SynthesisOptions::default()
    };
    SynthesisProblem::new(net.clone(), c.lambda.unwrap_or(0.1), domain, s.deg_w, s.deg_rho)
        .and_then(|p| p.with_eps(c.eps))
        .and_then(|p| p.with_m_lower(s.m_lower))
        .and_then(|p| p.with_options(options))
        .stage("config")
}

/// `verify`: sampled certificate check plus the Killing identity.
pub fn cmd_verify(a: &VerifyArgs) -> CliResult<Outcome> {
    let c = &a.common;
    check_eps(c)?;
    let net = load_network(&c.network)?;
    let d0 = domain(c, net.n(), None)?;
    let (mut metric, mult) = load_metric(c.metric.as_deref(), &net, &d0)?;
    if let Some(l) = c.lambda {
        metric = metric.with_lambda(l).stage("config")?;
    }
    let dom = domain(c, net.n(), Some(metric.domain()))?;
    let mut out = OutDir::create(&c.out_dir)?;
    let killing = check_killing(&net, &metric).stage("killing")?;
    out.write("killing.txt", &format!("{killing}\n"))?;
    let t = sepccm_core::assemble_t_full(&net, &metric, &mult).stage("assemble")?;
    let cert = verify_on_box(&t, &dom, &verify_sampler(c.seed, a.samples), c.eps).stage("verify")?;
    out.write("certificate.txt", &cert.report())?;
    let ok = cert.verified() && killing.passed();
    println!("worst_eig = {:?} at sample {}", cert.worst_eig, cert.worst_index);
    println!("worst_point = {:?}", cert.worst_point);
    println!("verified = {}, killing = {}", cert.verified(), if killing.passed() { "pass" } else { "fail" });
    let config = merge(
        common_config(c),
        json!({ "samples": a.samples, "lambda_used": metric.lambda(), "box_used": dom.to_string() }),
    );
    out.finish("verify", config, if ok { "verified" } else { "not verified" })?;
    Ok(Outcome::from_bool(ok))
}

/// `synth`: metric search; writes `metric.txt` and `certificate.txt` when
/// feasible and `synthesis.txt` either way.
pub fn cmd_synth(a: &SynthArgs) -> CliResult<Outcome> {
    let c = &a.common;
    check_eps(c)?;
    let net = load_network(&c.network)?;
    let dom = domain(c, net.n(), None)?;
    let problem = synthesis_problem(&net, c, &a.synth, dom)?;
    let mut out = OutDir::create(&c.out_dir)?;
    let outcome = run_synthesis(&problem, &mut out)?;
    let config = merge(common_config(c), synth_config(&a.synth));
    let ok = outcome.is_some();
    out.finish("synth", config, if ok { "feasible" } else { "infeasible" })?;
    Ok(Outcome::from_bool(ok))
}

fn run_synthesis(
    problem: &SynthesisProblem,
    out: &mut OutDir,
) -> CliResult<Option<(SumSeparableMetric, Multipliers, Certificate)>> {
    match solve_feasibility(problem).stage("synthesis")? {
        SynthesisOutcome::Feasible(r) => {
            out.write("metric.txt", &r.metric.to_text(&r.mult))?;
            out.write("certificate.txt", &r.certificate.report())?;
            out.write("synthesis.txt", &r.report())?;
            println!(
                "feasible: audit worst_eig = {:?} over {} samples",
                r.certificate.worst_eig, r.certificate.samples_checked
            );
            if !r.certificate.verified() {
                return Ok(None);
            }
            Ok(Some((r.metric, r.mult, r.certificate)))
        }
        SynthesisOutcome::Infeasible(rep) => {
            out.write("synthesis.txt", &rep.to_string())?;
            println!("infeasible: worst constraint {} = {:?}", rep.training.kind, rep.training.value);
            Ok(None)
        }
    }
}

/// `geodesic`: one node's minimizing curve, written as a CSV of waypoints.
pub fn cmd_geodesic(a: &GeodesicArgs) -> CliResult<Outcome> {
    let c = &a.common;
    let net = load_network(&c.network)?;
    let d0 = domain(c, net.n(), None)?;
    let (metric, _) = load_metric(c.metric.as_deref(), &net, &d0)?;
    if a.node >= net.node_count() {
        return Err(CliError {
            stage: "config",
            message: format!("node {} does not exist (network has {})", a.node, net.node_count()),
        });
    }
    let n = net.node(a.node).n();
    let to = parse_point(&a.to, "--to")?;
    let from = match &a.from {
        Some(s) => parse_point(s, "--from")?,
        None => vec![0.0; n],
    };
    if from.len() != n || to.len() != n {
        return Err(CliError {
            stage: "config",
            message: format!("node {} has {n} coordinates; endpoints must match", a.node),
        });
    }
    let res = solve_geodesic(&metric, a.node, &from, &to, c.k_segments, &GeodesicOptions::default())
        .stage("geodesic")?;
    let mut out = OutDir::create(&c.out_dir)?;
    let mut csv = String::from("k");
    for j in 0..n {
        let _ = write!(csv, ",x_{j}");
    }
    csv.push('\n');
    for (k, p) in res.curve.waypoints.iter().enumerate() {
        let _ = write!(csv, "{k}");
        for v in p.iter() {
            let _ = write!(csv, ",{v:.16e}");
        }
        csv.push('\n');
    }
    out.write("geodesic.csv", &csv)?;
    let summary = format!(
        "energy = {:?}\nconverged = {}\niterations = {}\nresidual = {:?}\nleft_box = {}\nsegments = {}\n",
        res.energy,
        res.converged,
        res.iterations,
        res.residual,
        res.left_box,
        res.curve.segments()
    );
    out.write("geodesic.txt", &summary)?;
    println!("energy = {:?} (converged = {})", res.energy, res.converged);
    let config = merge(
        common_config(c),
        json!({ "node": a.node, "from": from, "to": to }),
    );
    out.finish("geodesic", config, if res.converged { "converged" } else { "not converged" })?;
    Ok(Outcome::from_bool(res.converged))
}

/// Whether a convergence report meets the rate and envelope thresholds.
pub fn convergence_ok(rep: &ConvergenceReport, lambda: f64) -> bool {
    rep.lambda_fit >= MIN_RATE_FRACTION * lambda && rep.bound_check >= MIN_ENVELOPE_FRACTION
}

fn simulate_into(
    out: &mut OutDir,
    net: &Network,
    metric: &SumSeparableMetric,
    mult: &Multipliers,
    x0: &[f64],
    cfg: &SimConfig,
) -> CliResult<ConvergenceReport> {
    let ctrl = DistributedController::new(net, metric, mult, cfg.segments).stage("controller")?;
    let reference = ReferenceSignal::origin(net.n());
    let (rt, ct) = integrate_closed_loop(&ctrl, &reference, x0, cfg).stage("simulation")?;
    out.write("reference.csv", &rt.states_csv())?;
    out.write("closed_loop.csv", &ct.states_csv())?;
    out.write("inputs.csv", &ct.inputs_csv())?;
    let rep = measure_convergence(&rt, &ct, cfg).stage("convergence")?;
    let mut csv = rep.to_csv();
    let _ = writeln!(csv, "box_exits,{}", ct.box_exits);
    out.write("convergence.csv", &csv)?;
    Ok(rep)
}

/// `simulate`: closed loop about the origin reference from `--x0`.
pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<Outcome> {
    let c = &a.common;
    let cfg = sim_config(c)?;
    let net = load_network(&c.network)?;
    let d0 = domain(c, net.n(), None)?;
    let (metric, mult) = load_metric(c.metric.as_deref(), &net, &d0)?;
    let x0 = match &a.x0 {
        Some(s) => parse_point(s, "--x0")?,
        None => vec![0.1; net.n()],
    };
    let mut out = OutDir::create(&c.out_dir)?;
    let rep = simulate_into(&mut out, &net, &metric, &mult, &x0, &cfg)?;
    let lambda = c.lambda.unwrap_or(metric.lambda());
    let ok = convergence_ok(&rep, lambda);
    println!(
        "lambda_fit = {:?}, bound_check = {:?}, final_error = {:?}",
        rep.lambda_fit, rep.bound_check, rep.final_error
    );
    let config = merge(common_config(c), json!({ "x0": x0, "lambda_design": lambda }));
    out.finish("simulate", config, if ok { "converged" } else { "not converged" })?;
    Ok(Outcome::from_bool(ok))
}

/// `demo`: Killing check and audit of the published metric, synthesis at
/// the design rate, closed loop with the synthesized metric.
pub fn cmd_demo(a: &DemoArgs) -> CliResult<Outcome> {
    let c = &a.common;
    check_eps(c)?;
    let cfg = sim_config(c)?;
    let (net, published, published_mult) = builtin_example();
    let dom = domain(c, net.n(), None)?;
    let problem = synthesis_problem(&net, c, &a.synth, dom.clone())?;
    let lambda = problem.lambda();
    let mut out = OutDir::create(&c.out_dir)?;
    let mut report = String::new();

    let killing = check_killing(&net, &published).stage("killing")?;
    out.write("killing.txt", &format!("{killing}\n"))?;
    let _ = writeln!(report, "published_killing = {}", if killing.passed() { "pass" } else { "fail" });

    let t = sepccm_core::assemble_t_full(&net, &published, &published_mult).stage("published audit")?;
    let published_cert =
        verify_on_box(&t, &dom, &verify_sampler(c.seed, 2048), c.eps).stage("published audit")?;
    out.write("published_certificate.txt", &published_cert.report())?;
    let _ = writeln!(report, "published_worst_eig = {:?}", published_cert.worst_eig);
    let _ = writeln!(report, "published_verified = {}", published_cert.verified());

    let config = merge(common_config(c), synth_config(&a.synth));
    let Some((metric, mult, cert)) = run_synthesis(&problem, &mut out)? else {
        let _ = writeln!(report, "synthesis = infeasible");
        out.write("report.txt", &report)?;
        out.finish("demo", config, "infeasible")?;
        return Ok(Outcome::Negative);
    };
    let _ = writeln!(report, "synthesis = feasible");
    let _ = writeln!(report, "audit_worst_eig = {:?}", cert.worst_eig);
    let _ = writeln!(report, "audit_samples = {}", cert.samples_checked);

    let x0 = vec![0.1; net.n()];
    let rep = simulate_into(&mut out, &net, &metric, &mult, &x0, &cfg)?;
    let conv = convergence_ok(&rep, lambda);
    let _ = writeln!(report, "lambda_design = {lambda:?}");
    let _ = writeln!(report, "lambda_fit = {:?}", rep.lambda_fit);
    let _ = writeln!(report, "c_fit = {:?}", rep.c_fit);
    let _ = writeln!(report, "bound_check = {:?}", rep.bound_check);
    let _ = writeln!(report, "initial_error = {:?}", rep.initial_error);
    let _ = writeln!(report, "final_error = {:?}", rep.final_error);
    let _ = writeln!(report, "convergence = {}", if conv { "pass" } else { "fail" });
    out.write("report.txt", &report)?;
    print!("{report}");
    let ok = cert.verified() && conv;
    out.finish("demo", config, if ok { "pass" } else { "fail" })?;
    Ok(Outcome::from_bool(ok))
}

/// `report`: prints the manifest and the result files of `--out-dir`.
pub fn cmd_report(a: &ReportArgs) -> CliResult<Outcome> {
    let dir = &a.common.out_dir;
    let manifest_text = std::fs::read_to_string(dir.join("manifest.json")).map_err(|e| CliError {
        stage: "report",
        message: format!("{}: {e}", dir.join("manifest.json").display()),
    })?;
    let manifest: Value = serde_json::from_str(&manifest_text).stage("report")?;
    let mut s = String::new();
    let _ = writeln!(s, "command = {}", manifest["command"].as_str().unwrap_or("?"));
    let _ = writeln!(s, "outcome = {}", manifest["outcome"].as_str().unwrap_or("?"));
    for name in ["report.txt", "certificate.txt", "synthesis.txt", "geodesic.txt", "convergence.csv", "killing.txt"] {
        if let Ok(text) = std::fs::read_to_string(dir.join(name)) {
            let _ = writeln!(s, "\n# {name}\n{}", text.trim_end());
        }
    }
    print!("{s}");
    let outcome = manifest["outcome"].as_str().unwrap_or("");
    let positive = matches!(outcome, "pass" | "verified" | "feasible" | "converged");
    Ok(Outcome::from_bool(positive))
}
