//! Offline search for a sum-separable metric: polynomial templates for
//! `W_i` and `ρ_i`, sampled constraints that are affine in the coefficients,
//! a feasibility solver for the worst sampled eigenvalue, and scenario
//! refinement against denser audit sets.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::Mutex;

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::{
    assemble_t_full, killing_residuals, verify_on_set, Certificate, MetricBlock, Multipliers, SumSeparableMetric,
};
use crate::network::Network;
use crate::polyalg::{monomials_up_to, Monomial, PolyMatrix, Polynomial, VarIndex};
use crate::sampling::{BoxDomain, SampleSet, SampleSource, SamplerConfig};

/// Smoothing parameters of the log-sum-exp continuation.
pub const BETA_SCHEDULE: [f64; 6] = [1.0, 3.0, 10.0, 30.0, 100.0, 300.0];

const CHUNK: usize = 64;
const NULL_TOLERANCE: f64 = 1e-10;
const TARGET_REACHED: &str = "target margin reached";

/// Descent method for the worst sampled eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// L-BFGS on a log-sum-exp smoothing of `Φ`, sharpened over [`BETA_SCHEDULE`].
    Smoothed,
    /// Projected subgradient steps with Polyak step sizes.
    Polyak,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMethod::Smoothed => "smoothed",
            SolverMethod::Polyak => "polyak",
        })
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<SolverMethod> {
        match s {
            "smoothed" => Ok(SolverMethod::Smoothed),
            "polyak" => Ok(SolverMethod::Polyak),
            _ => Err(Error::Config(format!("unknown solver method '{s}' (smoothed, polyak)"))),
        }
    }
}

/// Sample budget and iteration limits.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    /// Uniform random training points.
    pub samples: usize,
    /// Grid points per axis and the cap on the grid size.
    pub grid_per_axis: usize,
    pub grid_cap: usize,
    /// Refinement rounds after the first solve.
    pub rounds: usize,
    /// Audit violators appended to the training set per round.
    pub refine_points: usize,
    /// Audit density relative to training; at least 4.
    pub audit_factor: usize,
    /// L-BFGS iterations per smoothing stage, or total Polyak steps per round.
    pub max_iter: usize,
    /// The solver stops early once the training objective is below `-train_margin`.
    pub train_margin: f64,
    pub method: SolverMethod,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            samples: 2048,
            grid_per_axis: 3,
            grid_cap: 729,
            rounds: 6,
            refine_points: 400,
            audit_factor: 4,
            max_iter: 300,
            train_margin: 0.05,
            method: SolverMethod::Smoothed,
            seed: 0,
        }
    }
}

impl SynthesisOptions {
    pub fn training_sampler(&self) -> SamplerConfig {
        SamplerConfig {
            grid_per_axis: self.grid_per_axis,
            grid_cap: self.grid_cap,
            halton: 0,
            random: self.samples,
            seed: self.seed,
        }
    }

    /// A fresh audit sampler for refinement round `round`.
    pub fn audit_sampler(&self, round: usize) -> SamplerConfig {
        let seed = self.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(round as u64 + 1);
        self.training_sampler().denser(self.audit_factor, seed)
    }
}

/// What to search for: `T(x) ⪯ -eps I` and `W_i ⪰ m_lower I` on a box.
#[derive(Clone, Debug)]
pub struct SynthesisProblem {
    net: Network,
    lambda: f64,
    domain: BoxDomain,
    deg_w: u32,
    deg_rho: u32,
    eps: f64,
    m_lower: f64,
    pub options: SynthesisOptions,
}

impl SynthesisProblem {
    /// Degrees are signed so that negative requests are rejected here rather
    /// than wrapped.
    pub fn new(net: Network, lambda: f64, domain: BoxDomain, deg_w: i64, deg_rho: i64) -> Result<SynthesisProblem> {
        if deg_w < 0 || deg_rho < 0 {
            return Err(Error::Config(format!(
                "polynomial degrees must be nonnegative, got deg_W = {deg_w}, deg_rho = {deg_rho}"
            )));
        }
        if deg_w > 8 || deg_rho > 8 {
            return Err(Error::Config("polynomial degrees above 8 are not supported".into()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        if domain.dim() != net.n() {
            return Err(Error::Dimension(format!(
                "box has {} coordinates but the network has {} states",
                domain.dim(),
                net.n()
            )));
        }
        Ok(SynthesisProblem {
            net,
            lambda,
            domain,
            deg_w: deg_w as u32,
            deg_rho: deg_rho as u32,
            eps: 1e-6,
            m_lower: 1e-2,
            options: SynthesisOptions::default(),
        })
    }

    pub fn with_eps(mut self, eps: f64) -> Result<SynthesisProblem> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn with_m_lower(mut self, m_lower: f64) -> Result<SynthesisProblem> {
        if !(m_lower > 0.0 && m_lower.is_finite()) {
            return Err(Error::Config(format!("m_lower must be positive, got {m_lower}")));
        }
        self.m_lower = m_lower;
        Ok(self)
    }

    pub fn with_options(mut self, options: SynthesisOptions) -> Result<SynthesisProblem> {
        if options.audit_factor < 4 {
            return Err(Error::Config(format!(
                "audit density must be at least 4x training, got {}x",
                options.audit_factor
            )));
        }
        if options.samples == 0 && (options.grid_cap == 0 || options.grid_per_axis == 0) {
            return Err(Error::Config("synthesis needs at least one training sample".into()));
        }
        if !(options.train_margin >= 0.0) {
            return Err(Error::Config("train_margin must be nonnegative".into()));
        }
        self.options = options;
        Ok(self)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn deg_w(&self) -> u32 {
        self.deg_w
    }

    pub fn deg_rho(&self) -> u32 {
        self.deg_rho
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn m_lower(&self) -> f64 {
        self.m_lower
    }
}

/// One unknown coefficient.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Coefficient {
    /// Coefficient of `monomial` in `W_i[row, col]`, `row <= col`.
    W {
        node: usize,
        row: usize,
        col: usize,
        monomial: Monomial,
    },
    /// Coefficient of `monomial` in `ρ_i`.
    Rho { node: usize, monomial: Monomial },
}

#[derive(Clone, Debug)]
struct NodeTemplate {
    offset: usize,
    dim: usize,
    entries: Vec<(usize, usize)>,
    w_start: usize,
    w_monomials: Vec<Monomial>,
    rho_start: usize,
    rho_monomials: Vec<Monomial>,
    /// Global coordinates left out of `W_i` because they are input channels.
    excluded: Vec<usize>,
    /// Orthonormal basis of the `W_i` coefficients satisfying the Killing
    /// identity, when it is imposed by equality constraints.
    killing_basis: Option<DMatrix<f64>>,
}

impl NodeTemplate {
    fn w_len(&self) -> usize {
        self.entries.len() * self.w_monomials.len()
    }

    fn free_w_len(&self) -> usize {
        self.killing_basis.as_ref().map_or(self.w_len(), |b| b.ncols())
    }
}

/// Monomial bases for every `W_i` entry and `ρ_i`, and the index map from
/// flat decision-vector positions to coefficients.
#[derive(Clone, Debug)]
pub struct Template {
    nodes: Vec<NodeTemplate>,
    coefficients: Vec<Coefficient>,
    index: BTreeMap<Coefficient, usize>,
}

/// Flat coefficient vector laid out by a [`Template`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    pub values: Vec<f64>,
}

/// Builds the template and the starting point: `W_i = I`, `ρ_i = 0`.
pub fn parameterize(problem: &SynthesisProblem) -> Result<(Template, DecisionVector)> {
    let t = Template::new(problem)?;
    let dv = t.initial();
    Ok((t, dv))
}

impl Template {
    pub fn new(problem: &SynthesisProblem) -> Result<Template> {
        let net = &problem.net;
        let mut nodes = Vec::with_capacity(net.node_count());
        let mut coefficients = Vec::new();
        for i in 0..net.node_count() {
            let node = net.node(i);
            let offset = net.offset(i);
            let dim = node.n();
            let excluded = structural_exclusions(&node.b, offset);
            let own: Vec<usize> = match &excluded {
                Some(ex) => net.node_vars(i).filter(|v| !ex.contains(v)).collect(),
                None => net.node_vars(i).collect(),
            };
            let w_monomials = monomials_up_to(&own, problem.deg_w);
            let rho_monomials = monomials_up_to(&net.neighborhood_vars(i), problem.deg_rho);
            let entries: Vec<(usize, usize)> = (0..dim).flat_map(|r| (r..dim).map(move |c| (r, c))).collect();
            let w_start = coefficients.len();
            for &(row, col) in &entries {
                for m in &w_monomials {
                    coefficients.push(Coefficient::W {
                        node: i,
                        row,
                        col,
                        monomial: m.clone(),
                    });
                }
            }
            let rho_start = coefficients.len();
            for m in &rho_monomials {
                coefficients.push(Coefficient::Rho {
                    node: i,
                    monomial: m.clone(),
                });
            }
            let mut nt = NodeTemplate {
                offset,
                dim,
                entries,
                w_start,
                w_monomials,
                rho_start,
                rho_monomials,
                excluded: excluded.clone().unwrap_or_default(),
                killing_basis: None,
            };
            if excluded.is_none() {
                nt.killing_basis = Some(killing_null_space(&nt, &node.b, &net.node_var_indices(i))?);
            }
            nodes.push(nt);
        }
        let index = coefficients.iter().cloned().enumerate().map(|(k, c)| (c, k)).collect();
        Ok(Template {
            nodes,
            coefficients,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Number of free coordinates after the Killing equalities.
    pub fn free_len(&self) -> usize {
        self.nodes.iter().map(|n| n.free_w_len() + n.rho_monomials.len()).sum()
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coefficients
    }

    pub fn index_of(&self, c: &Coefficient) -> Option<usize> {
        self.index.get(c).copied()
    }

    /// Per node: the number of `W_i` and `ρ_i` coefficients.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        self.nodes.iter().map(|n| (n.w_len(), n.rho_monomials.len())).collect()
    }

    /// Coordinates excluded from `W_i` as input channels.
    pub fn excluded_vars(&self, node: usize) -> &[usize] {
        &self.nodes[node].excluded
    }

    /// Whether node `node` carries Killing equality constraints.
    pub fn has_killing_constraints(&self, node: usize) -> bool {
        self.nodes[node].killing_basis.is_some()
    }

    /// `W_i = I`, `ρ_i = 0`, projected onto the Killing subspace if needed.
    pub fn initial(&self) -> DecisionVector {
        let mut v = vec![0.0; self.len()];
        for n in &self.nodes {
            if let Some(k) = n.w_monomials.iter().position(Monomial::is_one) {
                for (e, &(r, c)) in n.entries.iter().enumerate() {
                    if r == c {
                        v[n.w_start + e * n.w_monomials.len() + k] = 1.0;
                    }
                }
            }
        }
        let z = self.reduce(&v);
        DecisionVector { values: self.expand(&z) }
    }

    /// Maps free coordinates to the full coefficient vector.
    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut p = 0;
        for n in &self.nodes {
            match &n.killing_basis {
                Some(b) => {
                    for k in 0..b.ncols() {
                        for r in 0..b.nrows() {
                            out[n.w_start + r] += b[(r, k)] * z[p + k];
                        }
                    }
                    p += b.ncols();
                }
                None => {
                    out[n.w_start..n.w_start + n.w_len()].copy_from_slice(&z[p..p + n.w_len()]);
                    p += n.w_len();
                }
            }
            let nr = n.rho_monomials.len();
            out[n.rho_start..n.rho_start + nr].copy_from_slice(&z[p..p + nr]);
            p += nr;
        }
        out
    }

    /// Transpose of [`Template::expand`]: pulls a full-space vector (a
    /// gradient, or a point to project) back to free coordinates.
    fn reduce(&self, g: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.free_len());
        for n in &self.nodes {
            let w = &g[n.w_start..n.w_start + n.w_len()];
            match &n.killing_basis {
                Some(b) => out.extend((0..b.ncols()).map(|k| (0..b.nrows()).map(|r| b[(r, k)] * w[r]).sum::<f64>())),
                None => out.extend_from_slice(w),
            }
            out.extend_from_slice(&g[n.rho_start..n.rho_start + n.rho_monomials.len()]);
        }
        out
    }

    /// Reads the coefficients of `metric` and `mult` into a decision vector.
    /// Fails if a term does not fit the template.
    pub fn decision_vector(&self, metric: &SumSeparableMetric, mult: &Multipliers) -> Result<DecisionVector> {
        if metric.node_count() != self.nodes.len() || mult.rho.len() != self.nodes.len() {
            return Err(Error::Dimension("metric does not match the template's node count".into()));
        }
        let mut v = vec![0.0; self.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let w = metric.block(i).w();
            if w.rows() != n.dim {
                return Err(Error::Dimension(format!("metric block {i} has the wrong size")));
            }
            for &(row, col) in &n.entries {
                for (m, c) in w.get(row, col).terms() {
                    let key = Coefficient::W {
                        node: i,
                        row,
                        col,
                        monomial: m.clone(),
                    };
                    let k = self.index_of(&key).ok_or_else(|| {
                        Error::Config(format!("W_{i}[{row},{col}] term {m:?} is outside the template"))
                    })?;
                    v[k] = c;
                }
            }
            for (m, c) in mult.rho[i].terms() {
                let key = Coefficient::Rho {
                    node: i,
                    monomial: m.clone(),
                };
                let k = self
                    .index_of(&key)
                    .ok_or_else(|| Error::Config(format!("rho_{i} term {m:?} is outside the template")))?;
                v[k] = c;
            }
        }
        Ok(DecisionVector { values: v })
    }

    /// Builds the metric and multipliers encoded by `dv`.
    pub fn to_metric(
        &self,
        dv: &DecisionVector,
        lambda: f64,
        domain: &BoxDomain,
    ) -> Result<(SumSeparableMetric, Multipliers)> {
        if dv.values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "decision vector has {} entries, template {}",
                dv.values.len(),
                self.len()
            )));
        }
        let mut blocks = Vec::with_capacity(self.nodes.len());
        let mut rho = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let nm = n.w_monomials.len();
            let mut upper = vec![Polynomial::zero(); n.dim * n.dim];
            for (e, &(r, c)) in n.entries.iter().enumerate() {
                let base = n.w_start + e * nm;
                upper[r * n.dim + c] =
                    Polynomial::from_terms(n.w_monomials.iter().cloned().zip(dv.values[base..base + nm].iter().copied()));
            }
            let w = PolyMatrix::symmetric_from_upper(n.dim, |r, c| upper[r * n.dim + c].clone());
            blocks.push(MetricBlock::new(n.offset, w)?);
            let nr = n.rho_monomials.len();
            rho.push(Polynomial::from_terms(
                n.rho_monomials.iter().cloned().zip(dv.values[n.rho_start..n.rho_start + nr].iter().copied()),
            ));
        }
        Ok((SumSeparableMetric::new(blocks, lambda, domain.clone())?, Multipliers { rho }))
    }
}

/// For a constant `B_i` whose nonzero columns are coordinate axes, the
/// coordinates those columns touch; `None` when the Killing identity has to
/// be imposed by equality constraints instead.
fn structural_exclusions(b: &PolyMatrix, offset: usize) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for c in 0..b.cols() {
        let mut nonzero = Vec::new();
        for r in 0..b.rows() {
            let p = b.get(r, c);
            if !p.is_zero() {
                if p.degree() > 0 {
                    return None;
                }
                nonzero.push(r);
            }
        }
        match nonzero.as_slice() {
            [] => {}
            [r] => out.push(offset + r),
            _ => return None,
        }
    }
    out.sort_unstable();
    out.dedup();
    Some(out)
}

/// Null space of the linear map from `W_i` coefficients to the coefficients
/// of the Killing residuals.
fn killing_null_space(n: &NodeTemplate, b: &PolyMatrix, vars: &[VarIndex]) -> Result<DMatrix<f64>> {
    let nm = n.w_monomials.len();
    let cols = n.w_len();
    let mut rows: BTreeMap<(usize, usize, usize, Monomial), Vec<(usize, f64)>> = BTreeMap::new();
    for (e, &(r, c)) in n.entries.iter().enumerate() {
        for (k, m) in n.w_monomials.iter().enumerate() {
            let unit = PolyMatrix::symmetric_from_upper(n.dim, |a, bb| {
                if (a, bb) == (r, c) {
                    Polynomial::monomial(m.clone(), 1.0)
                } else {
                    Polynomial::zero()
                }
            });
            for (col_b, res) in killing_residuals(&unit, b, vars)?.iter().enumerate() {
                for a in 0..n.dim {
                    for bb in a..n.dim {
                        for (mono, v) in res.get(a, bb).terms() {
                            rows.entry((col_b, a, bb, mono.clone())).or_default().push((e * nm + k, v));
                        }
                    }
                }
            }
        }
    }
    let mut gram = DMatrix::<f64>::zeros(cols, cols);
    for row in rows.values() {
        for &(p, vp) in row {
            for &(q, vq) in row {
                gram[(p, q)] += vp * vq;
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let mut keep: Vec<usize> = (0..cols).filter(|&k| eig.eigenvalues[k].abs() <= NULL_TOLERANCE * scale).collect();
    keep.sort_unstable();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (j, &k) in keep.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        // Fix the sign so that the basis does not depend on the eigensolver.
        let pivot = (0..cols).fold(0, |best, r| if v[r].abs() > v[best].abs() + 1e-12 { r } else { best });
        let s = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..cols {
            basis[(r, j)] = s * v[r];
        }
    }
    Ok(basis)
}

/// Which matrix inequality a sampled constraint encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `T(x_s) + eps I ⪯ 0`.
    Certificate,
    /// `m_lower I - W_i(x_s) ⪯ 0`.
    LowerBound { node: usize },
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::Certificate => f.write_str("T(x) + eps I <= 0"),
            ConstraintKind::LowerBound { node } => write!(f, "W_{node}(x) >= m_lower I"),
        }
    }
}

/// One sampled constraint matrix; feasible when negative semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    pub sample: usize,
    pub kind: ConstraintKind,
    pub matrix: DMatrix<f64>,
}

/// The constraint attaining `Φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstConstraint {
    pub sample: usize,
    pub point: Vec<f64>,
    pub kind: ConstraintKind,
    pub value: f64,
}

struct NodePoint {
    mu: Vec<f64>,
    dmu: Vec<f64>,
    bbt: DMatrix<f64>,
    nu: Vec<f64>,
}

struct PointData {
    a: DMatrix<f64>,
    nodes: Vec<NodePoint>,
}

/// Everything about the sample points that does not depend on the
/// coefficients, so that each constraint is a cheap affine function of them.
pub struct SampledConstraints<'a> {
    template: &'a Template,
    lambda: f64,
    eps: f64,
    m_lower: f64,
    n: usize,
    points: Vec<Vec<f64>>,
    data: Vec<PointData>,
}

struct Eigs {
    t: SymmetricEigen<f64, nalgebra::Dyn>,
    w: Vec<SymmetricEigen<f64, nalgebra::Dyn>>,
}

impl<'a> SampledConstraints<'a> {
    pub fn new(problem: &SynthesisProblem, template: &'a Template, set: &SampleSet) -> Result<SampledConstraints<'a>> {
        let net = &problem.net;
        let n = net.n();
        let (f, _) = net.assemble_full();
        let all: Vec<VarIndex> = (0..n).map(VarIndex).collect();
        let jac = f.jacobian(&all);
        let data = set
            .points
            .par_iter()
            .map(|x| {
                if x.len() != n {
                    return Err(Error::Dimension(format!("sample has {} coordinates, expected {n}", x.len())));
                }
                let fx = f.eval(x)?;
                let a = jac.eval(x)?;
                let nodes = template
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, nt)| {
                        let mut mu = Vec::with_capacity(nt.w_monomials.len());
                        let mut dmu = Vec::with_capacity(nt.w_monomials.len());
                        for m in &nt.w_monomials {
                            mu.push(m.eval(x)?);
                            let mut d = 0.0;
                            for &(v, _) in m.factors() {
                                if let Some((e, rest)) = m.diff(v) {
                                    d += e as f64 * rest.eval(x)? * fx[v];
                                }
                            }
                            dmu.push(d);
                        }
                        let b = net.node(i).b.eval(x)?;
                        let bbt = &b * b.transpose();
                        let nu = nt.rho_monomials.iter().map(|m| m.eval(x)).collect::<Result<Vec<_>>>()?;
                        Ok(NodePoint { mu, dmu, bbt, nu })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PointData { a, nodes })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampledConstraints {
            template,
            lambda: problem.lambda,
            eps: problem.eps,
            m_lower: problem.m_lower,
            n,
            points: set.points.clone(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check(&self, dv: &[f64]) -> Result<()> {
        if dv.len() != self.template.len() {
            return Err(Error::Dimension(format!(
                "decision vector has {} entries, template {}",
                dv.len(),
                self.template.len()
            )));
        }
        Ok(())
    }

    /// `(T(x_s) + eps I, [m_lower I - W_i(x_s)])` at sample `s`.
    fn matrices_at(&self, s: usize, dv: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let p = &self.data[s];
        let n = self.n;
        let mut w = DMatrix::zeros(n, n);
        let mut t = DMatrix::zeros(n, n);
        let mut lower = Vec::with_capacity(self.template.nodes.len());
        for (nt, np) in self.template.nodes.iter().zip(&p.nodes) {
            let o = nt.offset;
            let nm = nt.w_monomials.len();
            let mut wi = DMatrix::zeros(nt.dim, nt.dim);
            for (e, &(r, c)) in nt.entries.iter().enumerate() {
                let coef = &dv[nt.w_start + e * nm..nt.w_start + (e + 1) * nm];
                let val: f64 = coef.iter().zip(&np.mu).map(|(a, b)| a * b).sum();
                let dval: f64 = coef.iter().zip(&np.dmu).map(|(a, b)| a * b).sum();
                wi[(r, c)] = val;
                wi[(c, r)] = val;
                w[(o + r, o + c)] = val;
                w[(o + c, o + r)] = val;
                t[(o + r, o + c)] -= dval;
                if r != c {
                    t[(o + c, o + r)] -= dval;
                }
            }
            let nr = nt.rho_monomials.len();
            let rho: f64 = dv[nt.rho_start..nt.rho_start + nr].iter().zip(&np.nu).map(|(a, b)| a * b).sum();
            for r in 0..nt.dim {
                for c in 0..nt.dim {
                    t[(o + r, o + c)] -= rho * np.bbt[(r, c)];
                }
            }
            let mut li = -wi;
            for k in 0..nt.dim {
                li[(k, k)] += self.m_lower;
            }
            lower.push(li);
        }
        let aw = &p.a * &w;
        t += &aw + aw.transpose() + 2.0 * self.lambda * &w;
        for k in 0..n {
            t[(k, k)] += self.eps;
        }
        // Symmetrize exactly so that eigensolvers see identical halves.
        let t = (&t + t.transpose()) * 0.5;
        (t, lower)
    }

    /// All constraint matrices, sample by sample: the certificate first,
    /// then one lower-bound block per node.
    pub fn matrices(&self, dv: &DecisionVector) -> Result<Vec<ConstraintMatrix>> {
        self.check(&dv.values)?;
        let mut out = Vec::new();
        for s in 0..self.len() {
            let (t, lower) = self.matrices_at(s, &dv.values);
            out.push(ConstraintMatrix {
                sample: s,
                kind: ConstraintKind::Certificate,
                matrix: t,
            });
            for (node, m) in lower.into_iter().enumerate() {
                out.push(ConstraintMatrix {
                    sample: s,
                    kind: ConstraintKind::LowerBound { node },
                    matrix: m,
                });
            }
        }
        Ok(out)
    }

    fn eigs(&self, dv: &[f64]) -> Vec<Eigs> {
        (0..self.len())
            .into_par_iter()
            .map(|s| {
                let (t, lower) = self.matrices_at(s, dv);
                Eigs {
                    t: SymmetricEigen::new(t),
                    w: lower.into_iter().map(SymmetricEigen::new).collect(),
                }
            })
            .collect()
    }

    /// Largest constraint eigenvalue per sample, with the constraint kind.
    pub fn per_sample(&self, dv: &DecisionVector) -> Result<Vec<(f64, ConstraintKind)>> {
        self.check(&dv.values)?;
        Ok(self
            .eigs(&dv.values)
            .iter()
            .map(|e| {
                let mut best = (e.t.eigenvalues.max(), ConstraintKind::Certificate);
                for (node, w) in e.w.iter().enumerate() {
                    let v = w.eigenvalues.max();
                    if v > best.0 {
                        best = (v, ConstraintKind::LowerBound { node });
                    }
                }
                best
            })
            .collect())
    }

    /// `Φ(dv)`: the largest eigenvalue over all sampled constraints. Ties go
    /// to the lowest sample index.
    pub fn phi(&self, dv: &DecisionVector) -> Result<WorstConstraint> {
        let per = self.per_sample(dv)?;
        let mut best = 0;
        for (s, v) in per.iter().enumerate() {
            if v.0 > per[best].0 || v.0.is_nan() && !per[best].0.is_nan() {
                best = s;
            }
        }
        Ok(WorstConstraint {
            sample: best,
            point: self.points[best].clone(),
            kind: per[best].1,
            value: per[best].0,
        })
    }

    /// Adds `⟨G, ∂T/∂dv⟩` and `⟨U_i, ∂(m_lower I - W_i)/∂dv⟩` at sample `s`
    /// to `grad`, where `g` and `u` are symmetric weight matrices.
    fn accumulate(&self, s: usize, g: Option<&DMatrix<f64>>, u: &[Option<DMatrix<f64>>], grad: &mut [f64]) {
        let p = &self.data[s];
        let h = g.map(|g| p.a.transpose() * g);
        for ((nt, np), ui) in self.template.nodes.iter().zip(&p.nodes).zip(u) {
            let o = nt.offset;
            let nm = nt.w_monomials.len();
            for (e, &(r, c)) in nt.entries.iter().enumerate() {
                let base = nt.w_start + e * nm;
                if let (Some(g), Some(h)) = (g, &h) {
                    let (gr, gc) = (o + r, o + c);
                    let (q, rr) = if r == c {
                        (g[(gr, gr)], 2.0 * h[(gr, gr)])
                    } else {
                        (2.0 * g[(gr, gc)], 2.0 * (h[(gr, gc)] + h[(gc, gr)]))
                    };
                    let lin = rr + 2.0 * self.lambda * q;
                    for k in 0..nm {
                        grad[base + k] += lin * np.mu[k] - q * np.dmu[k];
                    }
                }
                if let Some(ui) = ui {
                    let q = if r == c { ui[(r, c)] } else { 2.0 * ui[(r, c)] };
                    for k in 0..nm {
                        grad[base + k] -= q * np.mu[k];
                    }
                }
            }
            if let Some(g) = g {
                let mut sbb = 0.0;
                for r in 0..nt.dim {
                    for c in 0..nt.dim {
                        sbb += g[(o + r, o + c)] * np.bbt[(r, c)];
                    }
                }
                let nr = nt.rho_monomials.len();
                for k in 0..nr {
                    grad[nt.rho_start + k] -= sbb * np.nu[k];
                }
            }
        }
    }

    /// Subgradient of `Φ` at `dv` from the top eigenvector of the worst
    /// constraint.
    pub fn subgradient(&self, dv: &DecisionVector) -> Result<(WorstConstraint, Vec<f64>)> {
        let worst = self.phi(dv)?;
        let (t, lower) = self.matrices_at(worst.sample, &dv.values);
        let mut grad = vec![0.0; self.template.len()];
        let top = |m: DMatrix<f64>| {
            let e = SymmetricEigen::new(m);
            let k = e.eigenvalues.imax();
            let v = e.eigenvectors.column(k).into_owned();
            &v * v.transpose()
        };
        match worst.kind {
            ConstraintKind::Certificate => {
                let none = vec![None; lower.len()];
                self.accumulate(worst.sample, Some(&top(t)), &none, &mut grad);
            }
            ConstraintKind::LowerBound { node } => {
                let mut u = vec![None; lower.len()];
                u[node] = Some(top(lower[node].clone()));
                self.accumulate(worst.sample, None, &u, &mut grad);
            }
        }
        Ok((worst, grad))
    }

    /// Log-sum-exp smoothing of `Φ` at temperature `1/beta`, its gradient,
    /// and the exact `Φ`.
    pub fn smoothed(&self, dv: &[f64], beta: f64) -> (f64, Vec<f64>, f64) {
        let eigs = self.eigs(dv);
        let mut c = f64::NEG_INFINITY;
        for e in &eigs {
            c = c.max(e.t.eigenvalues.max());
            for w in &e.w {
                c = c.max(w.eigenvalues.max());
            }
        }
        let mut z = 0.0;
        for e in &eigs {
            z += e.t.eigenvalues.iter().map(|&l| (beta * (l - c)).exp()).sum::<f64>();
            for w in &e.w {
                z += w.eigenvalues.iter().map(|&l| (beta * (l - c)).exp()).sum::<f64>();
            }
        }
        let value = c + z.ln() / beta;
        let weight = |l: f64| (beta * (l - c)).exp() / z;
        let weighted = |e: &SymmetricEigen<f64, nalgebra::Dyn>| -> Option<DMatrix<f64>> {
            let mut m: Option<DMatrix<f64>> = None;
            for (k, &l) in e.eigenvalues.iter().enumerate() {
                let wt = weight(l);
                if wt < 1e-18 {
                    continue;
                }
                let v = e.eigenvectors.column(k);
                let outer = wt * (v * v.transpose());
                m = Some(match m {
                    Some(acc) => acc + outer,
                    None => outer,
                });
            }
            m
        };
        let partial: Vec<Vec<f64>> = eigs
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut g = vec![0.0; self.template.len()];
                for (k, e) in chunk.iter().enumerate() {
                    let gt = weighted(&e.t);
                    let u: Vec<Option<DMatrix<f64>>> = e.w.iter().map(&weighted).collect();
                    if gt.is_some() || u.iter().any(Option::is_some) {
                        self.accumulate(ci * CHUNK + k, gt.as_ref(), &u, &mut g);
                    }
                }
                g
            })
            .collect();
        let mut grad = vec![0.0; self.template.len()];
        for g in partial {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        (value, grad, c)
    }
}

/// Why the search stopped without an audited certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibleReport {
    /// Worst constraint on the last training set.
    pub training: WorstConstraint,
    /// Worst constraint on the last audit set, if an audit ran.
    pub audit: Option<WorstConstraint>,
    pub iterations: usize,
    pub rounds: usize,
    pub suggestions: Vec<String>,
}

impl fmt::Display for InfeasibleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "feasible = false")?;
        writeln!(f, "objective = {:?}", self.training.value)?;
        writeln!(f, "worst_constraint = {}", self.training.kind)?;
        writeln!(f, "worst_sample = {}", self.training.sample)?;
        writeln!(f, "worst_point = {}", join(&self.training.point))?;
        if let Some(a) = &self.audit {
            writeln!(f, "audit_worst_value = {:?}", a.value)?;
            writeln!(f, "audit_worst_constraint = {}", a.kind)?;
            writeln!(f, "audit_worst_point = {}", join(&a.point))?;
        }
        writeln!(f, "iterations = {}", self.iterations)?;
        writeln!(f, "rounds = {}", self.rounds)?;
        for s in &self.suggestions {
            writeln!(f, "suggestion = {s}")?;
        }
        Ok(())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// An audited metric.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisResult {
    pub metric: SumSeparableMetric,
    pub mult: Multipliers,
    pub dv: DecisionVector,
    /// `Φ` on the final training set.
    pub objective: f64,
    pub iterations: usize,
    pub rounds: usize,
    pub training_samples: usize,
    pub certificate: Certificate,
}

impl SynthesisResult {
    /// `key = value` summary.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "feasible = true");
        let _ = writeln!(s, "objective = {:?}", self.objective);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s, "training_samples = {}", self.training_samples);
        for (i, b) in self.metric.blocks().iter().enumerate() {
            if let Some(bd) = b.bounds() {
                let _ = writeln!(s, "bounds_{i} = {:?} {:?}", bd.lower, bd.upper);
            }
        }
        s.push_str(&self.certificate.report());
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum SynthesisOutcome {
    Feasible(SynthesisResult),
    Infeasible(InfeasibleReport),
}

impl SynthesisOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SynthesisOutcome::Feasible(_))
    }

    pub fn feasible(self) -> Option<SynthesisResult> {
        match self {
            SynthesisOutcome::Feasible(r) => Some(r),
            SynthesisOutcome::Infeasible(_) => None,
        }
    }
}

/// Affine normalization `⟨a, z⟩ = level` that removes the scale freedom of
/// the homogeneous certificate.
struct Normalization {
    a: Vec<f64>,
    aa: f64,
    level: f64,
}

impl Normalization {
    fn new(template: &Template, z0: &[f64]) -> Option<Normalization> {
        let mut full = vec![0.0; template.len()];
        for n in &template.nodes {
            if let Some(k) = n.w_monomials.iter().position(Monomial::is_one) {
                for (e, &(r, c)) in n.entries.iter().enumerate() {
                    if r == c {
                        full[n.w_start + e * n.w_monomials.len() + k] = 1.0;
                    }
                }
            }
        }
        let a = template.reduce(&full);
        let aa: f64 = a.iter().map(|v| v * v).sum();
        if aa < 1e-12 {
            return None;
        }
        let level = a.iter().zip(z0).map(|(x, y)| x * y).sum();
        Some(Normalization { a, aa, level })
    }

    fn project_point(&self, z: &[f64]) -> Vec<f64> {
        let d = (self.a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>() - self.level) / self.aa;
        z.iter().zip(&self.a).map(|(v, a)| v - d * a).collect()
    }

    fn project_direction(&self, g: &mut [f64]) {
        let d = self.a.iter().zip(g.iter()).map(|(x, y)| x * y).sum::<f64>() / self.aa;
        for (v, a) in g.iter_mut().zip(&self.a) {
            *v -= d * a;
        }
    }
}

struct SmoothedCost<'c, 'a> {
    constraints: &'c SampledConstraints<'a>,
    template: &'a Template,
    norm: Option<&'c Normalization>,
    beta: f64,
    stop_below: f64,
    cache: Mutex<Cache>,
}

#[derive(Default)]
struct Cache {
    z: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    evaluations: usize,
    best: Option<(f64, Vec<f64>)>,
    reached: Option<Vec<f64>>,
}

impl SmoothedCost<'_, '_> {
    fn evaluate(&self, z: &[f64]) -> std::result::Result<(f64, Vec<f64>), argmin::core::Error> {
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.evaluations > 0 && cache.z == z {
            return Ok((cache.value, cache.grad.clone()));
        }
        let zp = match self.norm {
            Some(n) => n.project_point(z),
            None => z.to_vec(),
        };
        let dv = self.template.expand(&zp);
        let (value, g, phi) = self.constraints.smoothed(&dv, self.beta);
        let mut gz = self.template.reduce(&g);
        if let Some(n) = self.norm {
            n.project_direction(&mut gz);
        }
        cache.evaluations += 1;
        if cache.best.as_ref().is_none_or(|b| phi < b.0) {
            cache.best = Some((phi, zp.clone()));
        }
        cache.z = z.to_vec();
        cache.value = value;
        cache.grad = gz.clone();
        if phi < self.stop_below {
            cache.reached = Some(zp);
            return Err(argmin::core::Error::msg(TARGET_REACHED));
        }
        Ok((value, gz))
    }
}

/// Lets the executor own a handle while the cache stays with the caller.
struct CostRef<'r, 'c, 'a>(&'r SmoothedCost<'c, 'a>);

impl CostFunction for CostRef<'_, '_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.0.evaluate(z).map(|r| r.0)
    }
}

impl Gradient for CostRef<'_, '_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, z: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        self.0.evaluate(z).map(|r| r.1)
    }
}

/// Runs the selected method on one training set, starting from `z`.
/// Returns the new free coordinates and the number of evaluations.
fn descend(
    problem: &SynthesisProblem,
    template: &Template,
    constraints: &SampledConstraints<'_>,
    norm: Option<&Normalization>,
    z: Vec<f64>,
) -> Result<(Vec<f64>, usize)> {
    let opts = &problem.options;
    let target = -opts.train_margin;
    match opts.method {
        SolverMethod::Smoothed => {
            let mut z = z;
            let mut evaluations = 0;
            for &beta in &BETA_SCHEDULE {
                let cost = SmoothedCost {
                    constraints,
                    template,
                    norm,
                    beta,
                    stop_below: target,
                    cache: Mutex::new(Cache::default()),
                };
                let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
                    .with_tolerance_grad(1e-12)
                    .and_then(|s| s.with_tolerance_cost(1e-14))
                    .map_err(|e| Error::Config(e.to_string()))?;
                // Line-search failures end the stage; the best point seen so
                // far is kept either way.
                let _ = Executor::new(CostRef(&cost), solver)
                    .configure(|s| s.param(z.clone()).max_iters(opts.max_iter as u64))
                    .run();
                let cache = cost.cache.into_inner().expect("cache lock");
                evaluations += cache.evaluations;
                if let Some(zr) = cache.reached {
                    return Ok((zr, evaluations));
                }
                if let Some((_, zb)) = cache.best {
                    z = zb;
                }
            }
            Ok((z, evaluations))
        }
        SolverMethod::Polyak => {
            let mut z = match norm {
                Some(n) => n.project_point(&z),
                None => z,
            };
            for it in 0..opts.max_iter {
                let dv = DecisionVector {
                    values: template.expand(&z),
                };
                let (worst, g) = constraints.subgradient(&dv)?;
                if worst.value < target {
                    return Ok((z, it + 1));
                }
                let mut gz = template.reduce(&g);
                if let Some(n) = norm {
                    n.project_direction(&mut gz);
                }
                let gg: f64 = gz.iter().map(|v| v * v).sum();
                if gg < 1e-300 {
                    return Ok((z, it + 1));
                }
                let step = (worst.value - target) / gg;
                for (a, b) in z.iter_mut().zip(&gz) {
                    *a -= step * b;
                }
            }
            Ok((z, opts.max_iter))
        }
    }
}

/// Scenario-refined feasibility search. A metric is returned only if a
/// fresh audit set, denser than the training set, confirms every
/// constraint; otherwise an [`InfeasibleReport`] describes the worst one.
pub fn solve_feasibility(problem: &SynthesisProblem) -> Result<SynthesisOutcome> {
    let template = Template::new(problem)?;
    let opts = &problem.options;
    let mut training = SampleSet::draw(&problem.domain, &opts.training_sampler());
    let start = template.initial();
    let mut z = template.reduce(&start.values);
    let norm = Normalization::new(&template, &z);
    let mut iterations = 0;
    let mut last_audit = None;
    for round in 0..=opts.rounds {
        let constraints = SampledConstraints::new(problem, &template, &training)?;
        let (znew, evals) = descend(problem, &template, &constraints, norm.as_ref(), z)?;
        z = znew;
        iterations += evals;
        let dv = DecisionVector {
            values: template.expand(&z),
        };
        let train_worst = constraints.phi(&dv)?;
        if train_worst.value >= 0.0 {
            return Ok(SynthesisOutcome::Infeasible(InfeasibleReport {
                training: train_worst,
                audit: last_audit,
                iterations,
                rounds: round,
                suggestions: suggestions(problem),
            }));
        }
        let audit_set = SampleSet::draw(&problem.domain, &opts.audit_sampler(round));
        let audit = SampledConstraints::new(problem, &template, &audit_set)?;
        let per = audit.per_sample(&dv)?;
        let mut order: Vec<usize> = (0..per.len()).filter(|&s| per[s].0 >= 0.0).collect();
        if order.is_empty() {
            let (metric, mult) = template.to_metric(&dv, problem.lambda, &problem.domain)?;
            let bounds = metric.estimate_bounds(&audit_set)?;
            let metric = metric.with_bounds(&bounds);
            let t = assemble_t_full(&problem.net, &metric, &mult)?;
            let certificate = verify_on_set(&t, &problem.domain, &audit_set, problem.eps)?;
            return Ok(SynthesisOutcome::Feasible(SynthesisResult {
                metric,
                mult,
                dv,
                objective: train_worst.value,
                iterations,
                rounds: round,
                training_samples: training.len(),
                certificate,
            }));
        }
        order.sort_by(|&a, &b| per[b].0.total_cmp(&per[a].0).then(a.cmp(&b)));
        let w = order[0];
        last_audit = Some(WorstConstraint {
            sample: w,
            point: audit_set.points[w].clone(),
            kind: per[w].1,
            value: per[w].0,
        });
        for &s in order.iter().take(opts.refine_points) {
            training.push(audit_set.points[s].clone(), SampleSource::Extra);
        }
        if round == opts.rounds {
            return Ok(SynthesisOutcome::Infeasible(InfeasibleReport {
                training: train_worst,
                audit: last_audit,
                iterations,
                rounds: round,
                suggestions: suggestions(problem),
            }));
        }
    }
    unreachable!("the loop returns on its last round")
}

fn suggestions(problem: &SynthesisProblem) -> Vec<String> {
    vec![
        format!(
            "raise the polynomial degrees (deg_W = {}, deg_rho = {})",
            problem.deg_w, problem.deg_rho
        ),
        format!("shrink the box (currently {})", problem.domain),
        format!("lower lambda (currently {})", problem.lambda),
    ]
}

/// Writes the metric, multipliers and bounds of `result` to `path`.
pub fn export_metric(result: &SynthesisResult, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, result.metric.to_text(&result.mult))?;
    Ok(())
}

/// Reads a metric file written by [`export_metric`] (or by hand).
pub fn import_metric(path: &std::path::Path) -> Result<(SumSeparableMetric, Multipliers)> {
    SumSeparableMetric::parse(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::check_killing;
    use crate::network::builtin_example;

    fn scalar(f: &str, b: &str) -> Network {
        Network::parse(&format!("nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = {f}\nB[0,0] = {b}\n")).unwrap()
    }

    fn unit_box(n: usize) -> BoxDomain {
        BoxDomain::uniform(n, -1.0, 1.0).unwrap()
    }

    fn small_options() -> SynthesisOptions {
        SynthesisOptions {
            samples: 64,
            rounds: 2,
            max_iter: 100,
            ..SynthesisOptions::default()
        }
    }

    #[test]
    fn scalar_template_has_two_unknowns() {
        let p = SynthesisProblem::new(scalar("-1 * v0", "1"), 0.5, unit_box(1), 0, 0).unwrap();
        let (t, dv) = parameterize(&p).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(dv.values, vec![1.0, 0.0]);
        assert!(SynthesisProblem::new(scalar("-1 * v0", "1"), 0.5, unit_box(1), -1, 0).is_err());
        assert!(SynthesisProblem::new(scalar("-1 * v0", "1"), 0.5, unit_box(1), 0, -2).is_err());
    }

    #[test]
    fn example_template_counts() {
        let (net, _, _) = builtin_example();
        let p = SynthesisProblem::new(net, 0.1, unit_box(9), 2, 2).unwrap();
        let t = Template::new(&p).unwrap();
        // Six upper-triangle entries times the six monomials of degree <= 2 in
        // (x_i, y_i); ρ over 6, 9 and 6 neighborhood coordinates.
        assert_eq!(t.counts(), vec![(36, 28), (36, 55), (36, 28)]);
        assert_eq!(t.len(), 219);
        assert_eq!(t.free_len(), 219);
        for i in 0..3 {
            assert_eq!(t.excluded_vars(i), &[3 * i + 2]);
            assert!(!t.has_killing_constraints(i));
        }
    }

    #[test]
    fn scalar_constraint_by_hand() {
        let p = SynthesisProblem::new(scalar("-1 * v0", "1"), 0.0, unit_box(1), 0, 0).unwrap();
        let t = Template::new(&p).unwrap();
        let set = SampleSet::draw(&unit_box(1), &p.options.training_sampler());
        let c = SampledConstraints::new(&p, &t, &set).unwrap();
        let dv = DecisionVector { values: vec![1.5, 0.25] };
        let ms = c.matrices(&dv).unwrap();
        assert_eq!(ms.len(), 2 * set.len());
        for m in ms {
            let want = match m.kind {
                ConstraintKind::Certificate => -2.0 * 1.5 - 0.25 + p.eps(),
                ConstraintKind::LowerBound { .. } => p.m_lower() - 1.5,
            };
            assert!((m.matrix[(0, 0)] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn published_coefficients_reproduce_the_certificate() {
        let (net, metric, mult) = builtin_example();
        let p = SynthesisProblem::new(net.clone(), metric.lambda(), unit_box(9), 2, 2).unwrap();
        let t = Template::new(&p).unwrap();
        let dv = t.decision_vector(&metric, &mult).unwrap();
        let (m2, r2) = t.to_metric(&dv, metric.lambda(), metric.domain()).unwrap();
        assert_eq!(m2.to_text(&r2), metric.to_text(&mult));
        let set = SampleSet::draw(
            &unit_box(9),
            &SamplerConfig {
                grid_cap: 5,
                halton: 0,
                random: 20,
                ..SamplerConfig::default()
            },
        );
        let c = SampledConstraints::new(&p, &t, &set).unwrap();
        let tt = assemble_t_full(&net, &metric, &mult).unwrap();
        for m in c.matrices(&dv).unwrap() {
            let x = &set.points[m.sample];
            let want = match m.kind {
                ConstraintKind::Certificate => {
                    let mut v = tt.eval(x).unwrap();
                    for k in 0..9 {
                        v[(k, k)] += p.eps();
                    }
                    v
                }
                ConstraintKind::LowerBound { node } => {
                    let w = metric.eval_w(node, &x[3 * node..3 * node + 3]).unwrap();
                    DMatrix::identity(3, 3) * p.m_lower() - w
                }
            };
            assert!((m.matrix - want).abs().max() < 1e-10);
        }
    }

    #[test]
    fn subgradient_matches_finite_differences() {
        let (net, metric, mult) = builtin_example();
        let p = SynthesisProblem::new(net, 0.1, unit_box(9), 2, 2).unwrap();
        let t = Template::new(&p).unwrap();
        let dv = t.decision_vector(&metric, &mult).unwrap();
        let set = SampleSet::draw(
            &unit_box(9),
            &SamplerConfig {
                grid_cap: 0,
                halton: 0,
                random: 8,
                ..SamplerConfig::default()
            },
        );
        let c = SampledConstraints::new(&p, &t, &set).unwrap();
        let (f0, g, _) = c.smoothed(&dv.values, 3.0);
        let h = 1e-6;
        for k in [0, 7, 40, 100, 150, 200] {
            let mut v = dv.values.clone();
            v[k] += h;
            let (fp, _, _) = c.smoothed(&v, 3.0);
            v[k] -= 2.0 * h;
            let (fm, _, _) = c.smoothed(&v, 3.0);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "k={k}: {fd} vs {} (f={f0})", g[k]);
        }
    }

    #[test]
    fn scalar_stable_node_is_feasible() {
        let p = SynthesisProblem::new(scalar("-1 * v0", "1"), 0.5, unit_box(1), 0, 0)
            .unwrap()
            .with_options(small_options())
            .unwrap();
        let r = solve_feasibility(&p).unwrap().feasible().expect("feasible");
        assert!(r.certificate.verified());
        assert!(r.certificate.samples_checked >= 4 * 3);
    }

    #[test]
    fn uncontrollable_expansion_is_infeasible() {
        let p = SynthesisProblem::new(scalar("v0", "0"), 0.1, unit_box(1), 0, 0)
            .unwrap()
            .with_options(small_options())
            .unwrap();
        match solve_feasibility(&p).unwrap() {
            SynthesisOutcome::Infeasible(rep) => {
                assert!(rep.training.value >= 0.0);
                let text = rep.to_string();
                assert!(text.contains("raise the polynomial degrees"));
                assert!(text.contains("shrink the box"));
                assert!(text.contains("lower lambda"));
            }
            SynthesisOutcome::Feasible(_) => panic!("expanding node without input cannot contract"),
        }
    }

    #[test]
    fn polyak_solves_the_scalar_node() {
        let mut o = small_options();
        o.method = SolverMethod::Polyak;
        o.max_iter = 500;
        let p = SynthesisProblem::new(scalar("-1 * v0 + v0^3", "1"), 0.2, unit_box(1), 2, 2)
            .unwrap()
            .with_options(o)
            .unwrap();
        assert!(solve_feasibility(&p).unwrap().is_feasible());
    }

    #[test]
    fn state_dependent_input_gets_killing_constraints() {
        let net = Network::parse(
            "nodes = 1\n[node 0]\nn = 2\nm = 1\nf[0] = -1 * v0\nf[1] = -1 * v1 + v0^2\nB[0,0] = 1\nB[1,0] = v0\n",
        )
        .unwrap();
        let p = SynthesisProblem::new(net.clone(), 0.1, unit_box(2), 2, 1).unwrap();
        let t = Template::new(&p).unwrap();
        assert!(t.has_killing_constraints(0));
        assert!(t.free_len() < t.len());
        // Any point of the free subspace satisfies the identity exactly.
        let z: Vec<f64> = (0..t.free_len()).map(|k| ((k * 7 + 3) % 11) as f64 / 5.0 - 1.0).collect();
        let dv = DecisionVector { values: t.expand(&z) };
        let (metric, _) = t.to_metric(&dv, 0.1, &unit_box(2)).unwrap();
        let rep = check_killing(&net, &metric).unwrap();
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn export_import_round_trip() {
        let p = SynthesisProblem::new(scalar("-1 * v0", "1"), 0.5, unit_box(1), 0, 0)
            .unwrap()
            .with_options(small_options())
            .unwrap();
        let r = solve_feasibility(&p).unwrap().feasible().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        export_metric(&r, &a).unwrap();
        let (m, mult) = import_metric(&a).unwrap();
        std::fs::write(&b, m.to_text(&mult)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let p = SynthesisProblem::new(scalar("-1 * v0 + 0.5 * v0^2", "1"), 0.3, unit_box(1), 2, 2)
            .unwrap()
            .with_options(small_options())
            .unwrap();
        assert_eq!(solve_feasibility(&p).unwrap(), solve_feasibility(&p).unwrap());
    }
}
