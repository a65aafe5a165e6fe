//! Minimum-energy curves of the metric `M_i = W_i⁻¹`, one node at a time.
//!
//! A curve is a polyline with `K + 1` waypoints; its energy is the midpoint
//! rule `Σ_k K Δ_kᵀ M(mid_k) Δ_k` with `Δ_k = w_{k+1} - w_k`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::{invert_spd, SumSeparableMetric};

/// Default number of curve segments.
pub const DEFAULT_SEGMENTS: usize = 16;

/// Waypoints of a curve in node `node`'s local coordinates; the first and
/// last waypoints are the fixed endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCurve {
    pub node: usize,
    pub waypoints: Vec<Vec<f64>>,
}

impl DiscreteCurve {
    /// Uniformly spaced points on the segment from `a` to `b`.
    pub fn straight(node: usize, a: &[f64], b: &[f64], segments: usize) -> DiscreteCurve {
        let waypoints = (0..=segments)
            .map(|k| {
                let s = k as f64 / segments as f64;
                a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
            })
            .collect();
        let mut c = DiscreteCurve { node, waypoints };
        // Endpoints are copied, never interpolated.
        c.waypoints[0] = a.to_vec();
        c.waypoints[segments] = b.to_vec();
        c
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.waypoints[0]
    }

    pub fn end(&self) -> &[f64] {
        &self.waypoints[self.segments()]
    }

    pub fn reversed(&self) -> DiscreteCurve {
        let mut waypoints = self.waypoints.clone();
        waypoints.reverse();
        DiscreteCurve {
            node: self.node,
            waypoints,
        }
    }

    /// `Δ_k = w_{k+1} - w_k`.
    pub fn delta(&self, k: usize) -> Vec<f64> {
        self.waypoints[k + 1].iter().zip(&self.waypoints[k]).map(|(b, a)| b - a).collect()
    }

    /// Midpoint of segment `k`.
    pub fn midpoint(&self, k: usize) -> Vec<f64> {
        self.waypoints[k + 1]
            .iter()
            .zip(&self.waypoints[k])
            .map(|(b, a)| 0.5 * (a + b))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("a curve needs at least one segment".into()));
        }
        let d = self.dim();
        if self.waypoints.iter().any(|w| w.len() != d) {
            return Err(Error::Dimension("curve waypoints have different dimensions".into()));
        }
        Ok(())
    }
}

/// Midpoint-rule energy of `curve` under `M_i = W_i⁻¹`.
pub fn discrete_energy(metric: &SumSeparableMetric, curve: &DiscreteCurve) -> Result<f64> {
    curve.validate()?;
    let k_f = curve.segments() as f64;
    let mut e = 0.0;
    for k in 0..curve.segments() {
        let d = DVector::from_vec(curve.delta(k));
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (_, m) = metric.eval(curve.node, &curve.midpoint(k))?;
        e += k_f * d.dot(&(&m * &d));
    }
    Ok(e)
}

/// Energy and its gradient with respect to every waypoint. The endpoint
/// rows are returned as zero since they are fixed.
pub fn energy_gradient(metric: &SumSeparableMetric, curve: &DiscreteCurve) -> Result<(f64, Vec<DVector<f64>>)> {
    let parts = segment_terms(metric, curve)?;
    Ok((parts.energy, parts.grad))
}

struct SegmentTerms {
    energy: f64,
    grad: Vec<DVector<f64>>,
    /// `M` at each segment midpoint.
    m: Vec<DMatrix<f64>>,
}

fn segment_terms(metric: &SumSeparableMetric, curve: &DiscreteCurve) -> Result<SegmentTerms> {
    curve.validate()?;
    let kk = curve.segments();
    let k_f = kk as f64;
    let n = curve.dim();
    let mut grad = vec![DVector::zeros(n); kk + 1];
    let mut ms = Vec::with_capacity(kk);
    let mut energy = 0.0;
    for k in 0..kk {
        let mid = curve.midpoint(k);
        let (_, m) = metric.eval(curve.node, &mid)?;
        let d = DVector::from_vec(curve.delta(k));
        let a = &m * &d;
        energy += k_f * d.dot(&a);
        // ∂/∂mid of Δᵀ M Δ is -(MΔ)ᵀ ∂_l W (MΔ); each endpoint gets half.
        let dw = metric.eval_dw(curve.node, &mid)?;
        let q = DVector::from_iterator(n, dw.iter().map(|d_l| -0.5 * k_f * a.dot(&(d_l * &a))));
        grad[k + 1] += &a * (2.0 * k_f) + &q;
        grad[k] += &a * (-2.0 * k_f) + &q;
        ms.push(m);
    }
    grad[0].fill(0.0);
    grad[kk].fill(0.0);
    Ok(SegmentTerms { energy, grad, m: ms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicOptions {
    /// Stop when the gradient norm falls below `tol · (1 + |g_0|)`, or when
    /// the preconditioned decrement `gᵀH⁻¹g` drops to rounding level.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicResult {
    pub curve: DiscreteCurve,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean norm of the energy gradient at the returned curve.
    pub residual: f64,
    /// Whether some waypoint lies outside the metric's box.
    pub left_box: bool,
}

/// Minimizes the discrete energy between `x_star_i` and `x_i` for node `i`.
///
/// Starts from the straight segment. Each step solves with the
/// block-tridiagonal Hessian of the energy with `M` frozen at the current
/// midpoints, then backtracks until the energy decreases.
pub fn solve_geodesic(
    metric: &SumSeparableMetric,
    i: usize,
    x_star_i: &[f64],
    x_i: &[f64],
    segments: usize,
    opts: &GeodesicOptions,
) -> Result<GeodesicResult> {
    if segments == 0 {
        return Err(Error::Config("geodesic needs at least one segment".into()));
    }
    let n = metric.block(i).dim();
    if x_star_i.len() != n || x_i.len() != n {
        return Err(Error::Dimension(format!("node {i} endpoints must have {n} entries")));
    }
    let wrap = |e: Error| match e {
        Error::SingularMetric { .. } => e,
        e => e.at_node(i),
    };
    let mut curve = DiscreteCurve::straight(i, x_star_i, x_i, segments);
    if x_star_i == x_i {
        return Ok(finish(metric, curve, 0.0, 0, true, 0.0));
    }
    let mut terms = segment_terms(metric, &curve).map_err(wrap)?;
    let g0 = grad_norm(&terms.grad);
    let threshold = opts.tol * (1.0 + g0);
    let mut iterations = 0;
    let mut converged = g0 <= threshold;
    while !converged && iterations < opts.max_iter {
        let dir = precondition(&terms.m, &terms.grad, segments)?;
        let slope: f64 = dir.iter().zip(&terms.grad).map(|(d, g)| d.dot(g)).sum();
        if !(slope > 0.0) {
            break;
        }
        // Below this decrement no representable energy decrease is left.
        if slope <= 1e-15 * (1.0 + terms.energy) {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = curve.clone();
            for k in 1..segments {
                for (w, d) in trial.waypoints[k].iter_mut().zip(dir[k].iter()) {
                    *w -= step * d;
                }
            }
            // Singular trial points are treated as infinitely expensive.
            if let Ok(t) = segment_terms(metric, &trial) {
                if t.energy < terms.energy && t.energy <= terms.energy - 1e-4 * step * slope {
                    accepted = Some((trial, t));
                    break;
                }
                if t.energy < terms.energy && step < 1e-6 {
                    accepted = Some((trial, t));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((c, t)) = accepted else { break };
        curve = c;
        terms = t;
        iterations += 1;
        converged = grad_norm(&terms.grad) <= threshold;
    }
    let residual = grad_norm(&terms.grad);
    Ok(finish(metric, curve, terms.energy, iterations, converged, residual))
}

fn finish(
    metric: &SumSeparableMetric,
    curve: DiscreteCurve,
    energy: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
) -> GeodesicResult {
    let b = metric.block(curve.node);
    let local = metric.domain().project(b.offset()..b.offset() + b.dim());
    let left_box = curve.waypoints.iter().any(|w| !local.contains(w));
    GeodesicResult {
        curve,
        energy,
        iterations,
        converged,
        residual,
        left_box,
    }
}

fn grad_norm(g: &[DVector<f64>]) -> f64 {
    g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Solves `H d = g` on the interior waypoints, where `H` has diagonal blocks
/// `2K(M_{k-1} + M_k)` and off-diagonal blocks `-2K M_k` (block Thomas).
fn precondition(m: &[DMatrix<f64>], g: &[DVector<f64>], segments: usize) -> Result<Vec<DVector<f64>>> {
    let n = g[0].len();
    let k_f = segments as f64;
    let mut out = vec![DVector::zeros(n); segments + 1];
    if segments < 2 {
        return Ok(out);
    }
    let interior = segments - 1;
    let mut c_prime: Vec<DMatrix<f64>> = Vec::with_capacity(interior);
    let mut d_prime: Vec<DVector<f64>> = Vec::with_capacity(interior);
    for j in 0..interior {
        let k = j + 1;
        let diag = (&m[k - 1] + &m[k]) * (2.0 * k_f);
        let upper = &m[k] * (-2.0 * k_f);
        let (denom, rhs) = if j == 0 {
            (diag, g[k].clone())
        } else {
            let lower = &m[k - 1] * (-2.0 * k_f);
            (diag - &lower * &c_prime[j - 1], &g[k] - &lower * &d_prime[j - 1])
        };
        let lu = denom.lu();
        let cp = lu
            .solve(&upper)
            .ok_or_else(|| Error::Config("singular geodesic preconditioner".into()))?;
        let dp = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Config("singular geodesic preconditioner".into()))?;
        c_prime.push(cp);
        d_prime.push(dp);
    }
    out[interior] = d_prime[interior - 1].clone();
    for j in (0..interior - 1).rev() {
        out[j + 1] = &d_prime[j] - &c_prime[j] * &out[j + 2];
    }
    Ok(out)
}

/// Per-node geodesics between global states `x_star` and `x`. The total
/// energy is the sum of the returned energies.
pub fn solve_network_geodesic(
    metric: &SumSeparableMetric,
    x_star: &[f64],
    x: &[f64],
    segments: usize,
    opts: &GeodesicOptions,
) -> Result<Vec<GeodesicResult>> {
    if x_star.len() != metric.n() || x.len() != metric.n() {
        return Err(Error::Dimension(format!("states must have {} entries", metric.n())));
    }
    (0..metric.node_count())
        .into_par_iter()
        .map(|i| {
            let b = metric.block(i);
            let r = b.offset()..b.offset() + b.dim();
            solve_geodesic(metric, i, &x_star[r.clone()], &x[r], segments, opts)
        })
        .collect()
}

/// Sampled evidence that `λ_max(W_i(q)) ≤ |F q + G|²` for some `F, G`:
/// the entries have degree at most two, and `ratio` is the largest
/// observed `λ_max(W_i(q)) / (1 + |q|)²` along random rays.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    pub node: usize,
    pub max_degree: u32,
    pub ratio: f64,
    pub quadratic_growth: bool,
}

pub fn growth_diagnostic(metric: &SumSeparableMetric, rays: usize, radius: f64, seed: u64) -> Result<Vec<GrowthReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(metric.node_count());
    for i in 0..metric.node_count() {
        let b = metric.block(i);
        let n = b.dim();
        let max_degree = b.w_local().entries().iter().map(|p| p.degree()).max().unwrap_or(0);
        let mut ratio: f64 = 0.0;
        for _ in 0..rays {
            let mut d: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            d.iter_mut().for_each(|v| *v /= norm);
            for s in 0..=20 {
                let t = radius * s as f64 / 20.0;
                let q: Vec<f64> = d.iter().map(|v| v * t).collect();
                let e = nalgebra::SymmetricEigen::new(metric.eval_w(i, &q)?).eigenvalues.max();
                ratio = ratio.max(e / (1.0 + t).powi(2));
            }
        }
        out.push(GrowthReport {
            node: i,
            max_degree,
            ratio,
            quadratic_growth: max_degree <= 2,
        });
    }
    Ok(out)
}

/// `M = W⁻¹` for a numeric `W`, failing on singular or indefinite input.
pub fn inverse_metric(w: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    invert_spd(w).map_err(|cond| Error::SingularMetric { node, cond })
}
