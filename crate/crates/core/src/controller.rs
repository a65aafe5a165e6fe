//! The distributed feedback `k_i = u_i* - ∫ ½ ρ_i(c̃_i) B_iᵀ W_i(c_i)⁻¹ c_i' ds`,
//! evaluated on geodesics that each node computes from its neighbourhood.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{solve_geodesic, solve_network_geodesic, DiscreteCurve, GeodesicOptions};
use crate::metric::{Multipliers, SumSeparableMetric};
use crate::network::Network;
use crate::polyalg::{PolyMatrix, Polynomial};

/// What node `i` is allowed to see: the states and references of
/// `{i} ∪ 𝒩(i)` and its own reference input.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalView {
    pub node: usize,
    /// `{i} ∪ 𝒩(i)`, sorted; `states` and `refs` follow this order.
    pub nodes: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub refs: Vec<Vec<f64>>,
    pub u_star: Vec<f64>,
}

impl LocalView {
    /// Copies node `i`'s neighbourhood out of a global snapshot.
    pub fn project(net: &Network, i: usize, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<LocalView> {
        net.check_point(x)?;
        net.check_point(x_star)?;
        if u_star.len() != net.m() {
            return Err(Error::Dimension(format!("u* has {} entries, expected {}", u_star.len(), net.m())));
        }
        let nodes = net.graph().closed_neighborhood(i);
        Ok(LocalView {
            node: i,
            states: nodes.iter().map(|&j| x[net.node_vars(j)].to_vec()).collect(),
            refs: nodes.iter().map(|&j| x_star[net.node_vars(j)].to_vec()).collect(),
            u_star: u_star[net.input_range(i)].to_vec(),
            nodes,
        })
    }

    pub fn own_position(&self) -> usize {
        self.nodes.binary_search(&self.node).expect("view contains its own node")
    }

    pub fn own_state(&self) -> &[f64] {
        &self.states[self.own_position()]
    }

    pub fn own_ref(&self) -> &[f64] {
        &self.refs[self.own_position()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlOutput {
    pub u: Vec<f64>,
    /// Energy of the node's own geodesic.
    pub energy: f64,
    pub segments: usize,
    pub geodesic_converged: bool,
    pub left_box: bool,
}

/// Node-local data needed to evaluate the feedback.
#[derive(Clone, Debug)]
struct LocalData {
    b: PolyMatrix,
    /// `ρ_i` over the concatenated states of `{i} ∪ 𝒩(i)`.
    rho: Polynomial,
}

/// The feedback law for a network, metric and multipliers.
#[derive(Clone, Debug)]
pub struct DistributedController {
    net: Network,
    metric: SumSeparableMetric,
    mult: Multipliers,
    local: Vec<LocalData>,
    pub segments: usize,
    pub geodesic: GeodesicOptions,
}

impl DistributedController {
    pub fn new(net: &Network, metric: &SumSeparableMetric, mult: &Multipliers, segments: usize) -> Result<Self> {
        metric.check_compatible(net, mult)?;
        if segments == 0 {
            return Err(Error::Config("controller needs at least one curve segment".into()));
        }
        let local = (0..net.node_count())
            .map(|i| {
                let vars = net.neighborhood_vars(i);
                let off = net.offset(i);
                LocalData {
                    b: net.node(i).b.remap_vars(|v| v - off),
                    rho: mult.rho[i].remap_vars(|v| vars.binary_search(&v).expect("rho locality was checked")),
                }
            })
            .collect();
        Ok(DistributedController {
            net: net.clone(),
            metric: metric.clone(),
            mult: mult.clone(),
            local,
            segments,
            geodesic: GeodesicOptions::default(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn metric(&self) -> &SumSeparableMetric {
        &self.metric
    }

    pub fn multipliers(&self) -> &Multipliers {
        &self.mult
    }

    /// `-(ρ_i(x̃_i)/2) B_i(x_i)ᵀ W_i(x_i)⁻¹ δ`. `x_tilde` concatenates the
    /// states of `{i} ∪ 𝒩(i)` in node order.
    pub fn differential_feedback(&self, i: usize, x_tilde: &[f64], delta: &[f64]) -> Result<Vec<f64>> {
        let nodes = self.net.graph().closed_neighborhood(i);
        let mut start = 0;
        for &j in &nodes {
            if j == i {
                break;
            }
            start += self.net.node(j).n();
        }
        let n_i = self.net.node(i).n();
        if x_tilde.len() != self.net.neighborhood_vars(i).len() || delta.len() != n_i {
            return Err(Error::Dimension(format!("node {i}: point or tangent has the wrong size")));
        }
        let x_i = &x_tilde[start..start + n_i];
        let rho = self.local[i].rho.eval(x_tilde)?;
        let (_, m) = self.metric.eval(i, x_i).map_err(|e| e.at_node(i))?;
        let b = self.local[i].b.eval(x_i)?;
        let v = b.transpose() * (m * DVector::from_column_slice(delta));
        Ok(v.iter().map(|c| -0.5 * rho * c).collect())
    }

    /// Midpoint quadrature of the feedback integral along the curves of
    /// `{i} ∪ 𝒩(i)` (given in node order).
    pub fn integrate_feedback(&self, i: usize, curves: &[DiscreteCurve], u_star_i: &[f64]) -> Result<Vec<f64>> {
        let nodes = self.net.graph().closed_neighborhood(i);
        if curves.len() != nodes.len() || curves.iter().zip(&nodes).any(|(c, &j)| c.node != j) {
            return Err(Error::Config(format!("node {i}: curves must cover its neighbourhood in order")));
        }
        let segments = curves[0].segments();
        if curves.iter().any(|c| c.segments() != segments) {
            return Err(Error::Config(format!("node {i}: curves have different segment counts")));
        }
        let own = nodes.binary_search(&i).expect("neighbourhood contains the node");
        let m_i = self.net.node(i).m();
        if u_star_i.len() != m_i {
            return Err(Error::Dimension(format!("node {i}: u* has {} entries, expected {m_i}", u_star_i.len())));
        }
        let mut acc = DVector::<f64>::zeros(m_i);
        let mut tilde = Vec::with_capacity(self.net.neighborhood_vars(i).len());
        for k in 0..segments {
            let d = curves[own].delta(k);
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            tilde.clear();
            for c in curves {
                tilde.extend(c.midpoint(k));
            }
            let mid = curves[own].midpoint(k);
            let rho = self.local[i].rho.eval(&tilde)?;
            let (_, m) = self.metric.eval(i, &mid).map_err(|e| e.at_node(i))?;
            let b = self.local[i].b.eval(&mid)?;
            acc += (b.transpose() * (m * DVector::from_vec(d))) * (0.5 * rho);
        }
        Ok(u_star_i.iter().zip(acc.iter()).map(|(u, a)| u - a).collect())
    }

    /// Node `i`'s control from its view alone: it solves the geodesics of
    /// its whole neighbourhood and integrates its own feedback.
    pub fn control_node(&self, view: &LocalView) -> Result<ControlOutput> {
        let i = view.node;
        if view.nodes != self.net.graph().closed_neighborhood(i) {
            return Err(Error::Config(format!("view of node {i} does not match its neighbourhood")));
        }
        let results = view
            .nodes
            .iter()
            .zip(view.refs.iter().zip(&view.states))
            .map(|(&j, (r, s))| solve_geodesic(&self.metric, j, r, s, self.segments, &self.geodesic))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_node(i))?;
        let own = view.own_position();
        let curves: Vec<DiscreteCurve> = results.iter().map(|r| r.curve.clone()).collect();
        let u = self.integrate_feedback(i, &curves, &view.u_star)?;
        Ok(ControlOutput {
            u,
            energy: results[own].energy,
            segments: self.segments,
            geodesic_converged: results[own].converged,
            left_box: results[own].left_box,
        })
    }

    /// One control update for all nodes; output order is node order.
    pub fn distributed_control_step(&self, views: &[LocalView]) -> Result<Vec<ControlOutput>> {
        views.par_iter().map(|v| self.control_node(v)).collect()
    }

    /// Builds every node's view from a global snapshot and runs
    /// [`DistributedController::distributed_control_step`].
    pub fn control(&self, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<Vec<ControlOutput>> {
        let views = (0..self.net.node_count())
            .map(|i| LocalView::project(&self.net, i, x, x_star, u_star))
            .collect::<Result<Vec<_>>>()?;
        self.distributed_control_step(&views)
    }

    /// The same feedback computed globally: one geodesic for the whole
    /// network and the full `W(c)⁻¹`, with node `i`'s rows read off.
    pub fn monolithic_control(&self, x: &[f64], x_star: &[f64], u_star: &[f64]) -> Result<Vec<f64>> {
        let results = solve_network_geodesic(&self.metric, x_star, x, self.segments, &self.geodesic)?;
        let n = self.net.n();
        let segments = self.segments;
        let (_, b_full) = self.net.assemble_full();
        let w_full = self.metric.w_full();
        let mut u = u_star.to_vec();
        for k in 0..segments {
            let mut mid = vec![0.0; n];
            let mut delta = vec![0.0; n];
            for (i, r) in results.iter().enumerate() {
                let range = self.net.node_vars(i);
                mid[range.clone()].copy_from_slice(&r.curve.midpoint(k));
                delta[range].copy_from_slice(&r.curve.delta(k));
            }
            let w: DMatrix<f64> = w_full.eval(&mid)?;
            let m = w
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::SingularMetric { node: 0, cond: f64::INFINITY })?;
            let b = b_full.eval(&mid)?;
            let v = b.transpose() * (m * DVector::from_vec(delta));
            for i in 0..self.net.node_count() {
                let rho = self.mult.rho[i].eval(&mid)?;
                for c in self.net.input_range(i) {
                    u[c] -= 0.5 * rho * v[c];
                }
            }
        }
        Ok(u)
    }
}
