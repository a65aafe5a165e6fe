//! Fixed-step RK4 integration of reference and closed-loop runs, and the
//! exponential fit `|e(t)| ≈ C e^{-λt}` of the tracking error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::controller::DistributedController;
use crate::error::{Error, Result};
use crate::network::{Network, ReferenceSignal};

/// Errors below this value are treated as numerical noise by the fit.
pub const ERROR_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Controller update period; a whole multiple of `dt`.
    pub hc: f64,
    pub segments: usize,
    pub seed: u64,
    /// Fraction of the horizon skipped before the exponential fit.
    pub fit_skip: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 20.0,
            hc: 1e-2,
            segments: crate::geodesic::DEFAULT_SEGMENTS,
            seed: 0,
            fit_skip: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.hc >= self.dt) {
            return Err(Error::Config(format!("hc = {} must be at least dt = {}", self.hc, self.dt)));
        }
        let ratio = self.hc / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("hc = {} is not a multiple of dt = {}", self.hc, self.dt)));
        }
        if self.segments == 0 {
            return Err(Error::Config("segments must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.fit_skip) {
            return Err(Error::Config(format!("fit_skip must lie in [0, 1), got {}", self.fit_skip)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn hold_steps(&self) -> usize {
        (self.hc / self.dt).round() as usize
    }
}

/// States on the integration grid and inputs on the control grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub input_times: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    /// Summed geodesic energy at each control update (closed loop only).
    pub energies: Vec<f64>,
    /// Control updates whose geodesic left the metric's box.
    pub box_exits: usize,
}

impl Trajectory {
    fn push_state(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
    }

    /// `t,state_0,...` rows.
    pub fn states_csv(&self) -> String {
        let dim = self.states.first().map_or(0, Vec::len);
        csv_table("state", dim, &self.times, &self.states)
    }

    /// `t,u_0,...` rows.
    pub fn inputs_csv(&self) -> String {
        let dim = self.inputs.first().map_or(0, Vec::len);
        csv_table("u", dim, &self.input_times, &self.inputs)
    }
}

fn csv_table(prefix: &str, dim: usize, times: &[f64], rows: &[Vec<f64>]) -> String {
    let mut s = String::from("t");
    for k in 0..dim {
        let _ = write!(s, ",{prefix}_{k}");
    }
    s.push('\n');
    for (t, row) in times.iter().zip(rows) {
        let _ = write!(s, "{t:.16e}");
        for v in row {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

/// Writes `text` to `path`.
pub fn export_csv(text: &str, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Parses a table written by [`Trajectory::states_csv`] or
/// [`Trajectory::inputs_csv`] back into times and rows.
pub fn read_csv(text: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: k + 1,
                col: 1,
                msg: e.to_string(),
            })?;
        let (t, rest) = vals.split_first().ok_or_else(|| Error::Parse {
            line: k + 1,
            col: 1,
            msg: "empty row".into(),
        })?;
        times.push(*t);
        rows.push(rest.to_vec());
    }
    Ok((times, rows))
}

fn rk4_step(net: &Network, x: &[f64], t: f64, dt: f64, u: &dyn Fn(f64) -> Vec<f64>) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], h: f64, k: &[f64]| -> Vec<f64> { a.iter().zip(k).map(|(x, v)| x + h * v).collect() };
    let k1 = net.rhs(x, &u(t))?;
    let k2 = net.rhs(&axpy(x, 0.5 * dt, &k1), &u(t + 0.5 * dt))?;
    let k3 = net.rhs(&axpy(x, 0.5 * dt, &k2), &u(t + 0.5 * dt))?;
    let k4 = net.rhs(&axpy(x, dt, &k3), &u(t + dt))?;
    let out: Vec<f64> = (0..x.len())
        .map(|j| x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: t + dt });
    }
    Ok(out)
}

/// Open-loop run of `ẋ = f(x) + B(x) u*(t)` from `x*(0)`.
pub fn integrate_reference(net: &Network, reference: &ReferenceSignal, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    reference.validate(net)?;
    let m = net.m();
    let u = |t: f64| reference.u_star.eval(t, m);
    let mut traj = Trajectory::default();
    let mut x = reference.x_star0.clone();
    traj.push_state(0.0, &x);
    for s in 0..cfg.steps() {
        let t = s as f64 * cfg.dt;
        x = rk4_step(net, &x, t, cfg.dt, &u)?;
        traj.push_state((s + 1) as f64 * cfg.dt, &x);
    }
    Ok(traj)
}

/// Reference and plant integrated side by side. Every `hc` the controller
/// recomputes `k(t) - u*(t)` from the current snapshot; that correction is
/// held until the next update and added to `u*(t)`.
pub fn integrate_closed_loop(
    ctrl: &DistributedController,
    reference: &ReferenceSignal,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<(Trajectory, Trajectory)> {
    cfg.validate()?;
    let net = ctrl.network();
    reference.validate(net)?;
    net.check_point(x0)?;
    let m = net.m();
    let u_ref = |t: f64| reference.u_star.eval(t, m);
    let mut ref_traj = Trajectory::default();
    let mut cl = Trajectory::default();
    let mut xs = reference.x_star0.clone();
    let mut x = x0.to_vec();
    ref_traj.push_state(0.0, &xs);
    cl.push_state(0.0, &x);
    let hold = cfg.hold_steps();
    let mut correction = vec![0.0; m];
    for s in 0..cfg.steps() {
        let t = s as f64 * cfg.dt;
        if s % hold == 0 {
            let u_star = u_ref(t);
            let out = ctrl.control(&x, &xs, &u_star).map_err(|e| e.at_time(t))?;
            let u: Vec<f64> = out.iter().flat_map(|o| o.u.iter().copied()).collect();
            correction = u.iter().zip(&u_star).map(|(a, b)| a - b).collect();
            cl.input_times.push(t);
            cl.inputs.push(u);
            cl.energies.push(out.iter().map(|o| o.energy).sum());
            if out.iter().any(|o| o.left_box) {
                cl.box_exits += 1;
            }
        }
        let held = correction.clone();
        let u_plant = move |tt: f64| -> Vec<f64> {
            let mut u = reference.u_star.eval(tt, m);
            for (a, c) in u.iter_mut().zip(&held) {
                *a += c;
            }
            u
        };
        xs = rk4_step(net, &xs, t, cfg.dt, &u_ref)?;
        x = rk4_step(net, &x, t, cfg.dt, &u_plant)?;
        let t1 = (s + 1) as f64 * cfg.dt;
        ref_traj.push_state(t1, &xs);
        cl.push_state(t1, &x);
    }
    Ok((ref_traj, cl))
}

/// Fit of `log|e(t)| ≈ log C - λ t` over the window.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub errors: Vec<f64>,
    pub times: Vec<f64>,
    pub c_fit: f64,
    pub lambda_fit: f64,
    pub window: (usize, usize),
    /// Fraction of window steps with `|e(t)| ≤ 1.05 C e^{-λt}`.
    pub bound_check: f64,
    pub initial_error: f64,
    pub final_error: f64,
}

impl ConvergenceReport {
    /// `key,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        let _ = writeln!(s, "lambda_fit,{:.16e}", self.lambda_fit);
        let _ = writeln!(s, "c_fit,{:.16e}", self.c_fit);
        let _ = writeln!(s, "bound_check,{:.16e}", self.bound_check);
        let _ = writeln!(s, "initial_error,{:.16e}", self.initial_error);
        let _ = writeln!(s, "final_error,{:.16e}", self.final_error);
        let _ = writeln!(s, "window_start,{:.16e}", self.times.get(self.window.0).copied().unwrap_or(0.0));
        let _ = writeln!(s, "window_end,{:.16e}", self.times.get(self.window.1.saturating_sub(1)).copied().unwrap_or(0.0));
        let _ = writeln!(s, "window_steps,{}", self.window.1 - self.window.0);
        s
    }
}

/// Euclidean tracking error on the shared time grid.
pub fn error_series(reference: &Trajectory, closed: &Trajectory) -> Result<Vec<f64>> {
    if reference.times != closed.times {
        return Err(Error::Dimension("trajectories are on different time grids".into()));
    }
    Ok(reference
        .states
        .iter()
        .zip(&closed.states)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .collect())
}

pub fn measure_convergence(reference: &Trajectory, closed: &Trajectory, cfg: &SimConfig) -> Result<ConvergenceReport> {
    let errors = error_series(reference, closed)?;
    fit_exponential(&reference.times, &errors, cfg.fit_skip)
}

/// Least-squares fit of `log e` against `t` from the first time past
/// `skip · t_end` up to the first error below [`ERROR_FLOOR`].
pub fn fit_exponential(times: &[f64], errors: &[f64], skip: f64) -> Result<ConvergenceReport> {
    if times.len() != errors.len() || times.is_empty() {
        return Err(Error::Dimension("times and errors must be nonempty and equally long".into()));
    }
    let t_end = *times.last().unwrap();
    let start = times.iter().position(|&t| t >= skip * t_end).unwrap_or(times.len());
    let end = errors[start..]
        .iter()
        .position(|&e| e < ERROR_FLOOR)
        .map_or(times.len(), |p| start + p);
    let mut report = ConvergenceReport {
        errors: errors.to_vec(),
        times: times.to_vec(),
        c_fit: 0.0,
        lambda_fit: f64::INFINITY,
        window: (start, end),
        bound_check: 1.0,
        initial_error: errors[0],
        final_error: *errors.last().unwrap(),
    };
    if end < start + 2 {
        return Ok(report);
    }
    let n = (end - start) as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for k in start..end {
        let (t, y) = (times[k], errors[k].ln());
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let denom = n * stt - st * st;
    if denom <= 0.0 {
        return Ok(report);
    }
    let slope = (n * sty - st * sy) / denom;
    let intercept = (sy - slope * st) / n;
    report.c_fit = intercept.exp();
    report.lambda_fit = -slope;
    let ok = (start..end)
        .filter(|&k| errors[k] <= 1.05 * report.c_fit * (-report.lambda_fit * times[k]).exp())
        .count();
    report.bound_check = ok as f64 / n;
    Ok(report)
}
