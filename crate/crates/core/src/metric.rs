//! Sum-separable metrics `W = diag(W_1, ..., W_N)`, their multipliers `ρ_i`,
//! the contraction certificate `T(x)` and its sampled verification.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::polyalg::{PolyMatrix, PolyVector, Polynomial, VarIndex};
use crate::sampling::{BoxDomain, SampleSet, SampleSource, SamplerConfig};
use crate::textfmt::Document;

/// Largest condition number accepted by [`SumSeparableMetric::eval`].
pub const MAX_CONDITION: f64 = 1e12;

/// Coefficients below this magnitude count as zero in identity checks.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Eigenvalue bounds `m_lower I ⪯ W_i ⪯ m_upper I` on the metric's box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// One diagonal block `W_i(x_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricBlock {
    offset: usize,
    w: PolyMatrix,
    w_local: PolyMatrix,
    dw_local: Vec<PolyMatrix>,
    bounds: Option<Bounds>,
}

impl MetricBlock {
    /// `w` is written over global variables `v{offset} .. v{offset + n - 1}`.
    pub fn new(offset: usize, w: PolyMatrix) -> Result<MetricBlock> {
        let n = w.rows();
        if n == 0 || w.cols() != n {
            return Err(Error::Dimension(format!("metric block must be square, got {}x{}", n, w.cols())));
        }
        if !w.is_symmetric() {
            return Err(Error::Config(format!("metric block at offset {offset} is not symmetric")));
        }
        if let Some(v) = w.vars().into_iter().find(|v| !(offset..offset + n).contains(v)) {
            return Err(Error::Config(format!(
                "metric block at offset {offset} depends on v{v}, outside its own coordinates"
            )));
        }
        let w_local = w.remap_vars(|v| v - offset);
        let dw_local = (0..n).map(|k| w_local.diff(VarIndex(k))).collect();
        Ok(MetricBlock {
            offset,
            w,
            w_local,
            dw_local,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, bounds: Option<Bounds>) -> MetricBlock {
        self.bounds = bounds;
        self
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// `W_i` over global variables.
    pub fn w(&self) -> &PolyMatrix {
        &self.w
    }

    /// `W_i` over local variables `v0 .. v{n_i - 1}`.
    pub fn w_local(&self) -> &PolyMatrix {
        &self.w_local
    }

    pub fn bounds(&self) -> Option<Bounds> {
        self.bounds
    }
}

/// `W = diag(W_1, ..., W_N)` with rate `λ` and the box it is meant for.
#[derive(Clone, Debug, PartialEq)]
pub struct SumSeparableMetric {
    blocks: Vec<MetricBlock>,
    lambda: f64,
    domain: BoxDomain,
}

/// One multiplier `ρ_i` per node, over global variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub rho: Vec<Polynomial>,
}

impl Multipliers {
    pub fn constant(values: &[f64]) -> Multipliers {
        Multipliers {
            rho: values.iter().map(|&c| Polynomial::constant(c)).collect(),
        }
    }
}

impl SumSeparableMetric {
    /// Blocks must tile `0..n` contiguously in order.
    pub fn new(blocks: Vec<MetricBlock>, lambda: f64, domain: BoxDomain) -> Result<SumSeparableMetric> {
        if blocks.is_empty() {
            return Err(Error::Config("metric has no blocks".into()));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let mut next = 0;
        for (i, b) in blocks.iter().enumerate() {
            if b.offset != next {
                return Err(Error::Config(format!(
                    "metric block {i} starts at v{} but v{next} was expected",
                    b.offset
                )));
            }
            next += b.dim();
        }
        if domain.dim() != next {
            return Err(Error::Dimension(format!(
                "box has {} coordinates but the metric covers {next}",
                domain.dim()
            )));
        }
        Ok(SumSeparableMetric { blocks, lambda, domain })
    }

    /// `W_i = I` for each node of `net`.
    pub fn identity(net: &Network, lambda: f64, domain: BoxDomain) -> Result<SumSeparableMetric> {
        let blocks = (0..net.node_count())
            .map(|i| MetricBlock::new(net.offset(i), PolyMatrix::identity(net.node(i).n())))
            .collect::<Result<Vec<_>>>()?;
        SumSeparableMetric::new(blocks, lambda, domain)
    }

    pub fn blocks(&self) -> &[MetricBlock] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &MetricBlock {
        &self.blocks[i]
    }

    pub fn node_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(MetricBlock::dim).sum()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<SumSeparableMetric> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Result<SumSeparableMetric> {
        if domain.dim() != self.n() {
            return Err(Error::Dimension(format!(
                "box has {} coordinates but the metric covers {}",
                domain.dim(),
                self.n()
            )));
        }
        self.domain = domain;
        Ok(self)
    }

    /// Full block-diagonal `W` over global variables.
    pub fn w_full(&self) -> PolyMatrix {
        let blocks: Vec<PolyMatrix> = self.blocks.iter().map(|b| b.w.clone()).collect();
        PolyMatrix::block_diag(&blocks)
    }

    /// `(W_i(x_i), W_i(x_i)⁻¹)` at a local point `x_i`.
    pub fn eval(&self, i: usize, x_i: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let w = self.eval_w(i, x_i)?;
        let m = invert_spd(&w).map_err(|cond| Error::SingularMetric { node: i, cond })?;
        Ok((w, m))
    }

    /// `W_i(x_i)` only.
    pub fn eval_w(&self, i: usize, x_i: &[f64]) -> Result<DMatrix<f64>> {
        let b = &self.blocks[i];
        if x_i.len() != b.dim() {
            return Err(Error::Dimension(format!(
                "node {i} point has {} entries, expected {}",
                x_i.len(),
                b.dim()
            )));
        }
        b.w_local.eval(x_i)
    }

    /// `∂W_i/∂x_{i,k}` at `x_i` for every local coordinate `k`.
    pub fn eval_dw(&self, i: usize, x_i: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.blocks[i].dw_local.iter().map(|d| d.eval(x_i)).collect()
    }

    /// Derivative of `M_i = W_i⁻¹` along `v`: `-M (∂_v W) M`.
    pub fn derivative(&self, i: usize, x_i: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        let (_, m) = self.eval(i, x_i)?;
        if v.len() != x_i.len() {
            return Err(Error::Dimension(format!(
                "direction has {} entries, expected {}",
                v.len(),
                x_i.len()
            )));
        }
        let n = x_i.len();
        let mut dw = DMatrix::zeros(n, n);
        for (d, &vk) in self.eval_dw(i, x_i)?.iter().zip(v) {
            dw += d * vk;
        }
        Ok(-(&m * dw * &m))
    }

    /// Minimum and maximum eigenvalue of each `W_i` over the points of `set`.
    pub fn estimate_bounds(&self, set: &SampleSet) -> Result<Vec<Bounds>> {
        (0..self.node_count())
            .map(|i| {
                let b = &self.blocks[i];
                let r = b.offset..b.offset + b.dim();
                let eigs = set
                    .points
                    .par_iter()
                    .map(|p| {
                        let w = b.w_local.eval(&p[r.clone()])?;
                        let e = SymmetricEigen::new(w).eigenvalues;
                        Ok((e.min(), e.max()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let lower = eigs.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
                let upper = eigs.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
                Ok(Bounds { lower, upper })
            })
            .collect()
    }

    /// Replaces each block's bounds with the given values.
    pub fn with_bounds(mut self, bounds: &[Bounds]) -> SumSeparableMetric {
        for (b, &bd) in self.blocks.iter_mut().zip(bounds) {
            b.bounds = Some(bd);
        }
        self
    }

    /// Checks that `net` and `mult` fit this metric: same node structure,
    /// and `ρ_i` only reads variables of `{i} ∪ 𝒩(i)`.
    pub fn check_compatible(&self, net: &Network, mult: &Multipliers) -> Result<()> {
        if net.node_count() != self.node_count() || mult.rho.len() != self.node_count() {
            return Err(Error::Dimension(format!(
                "network has {} nodes, metric {}, multipliers {}",
                net.node_count(),
                self.node_count(),
                mult.rho.len()
            )));
        }
        for i in 0..net.node_count() {
            let b = &self.blocks[i];
            if b.offset != net.offset(i) || b.dim() != net.node(i).n() {
                return Err(Error::Dimension(format!(
                    "metric block {i} covers v{}..v{} but node {i} owns v{}..v{}",
                    b.offset,
                    b.offset + b.dim(),
                    net.offset(i),
                    net.offset(i) + net.node(i).n()
                )));
            }
            let allowed = net.neighborhood_vars(i);
            if let Some(v) = mult.rho[i].vars().into_iter().find(|v| allowed.binary_search(v).is_err()) {
                return Err(Error::Locality {
                    node: i,
                    what: "rho".into(),
                    var: v,
                });
            }
        }
        Ok(())
    }

    /// Parses the metric text format (see [`SumSeparableMetric::to_text`]).
    pub fn parse(text: &str) -> Result<(SumSeparableMetric, Multipliers)> {
        let doc = Document::parse(text)?;
        let lambda = doc
            .header_value("lambda")
            .ok_or_else(|| Error::Parse {
                line: 1,
                col: 1,
                msg: "missing 'lambda' header".into(),
            })?
            .float()?;
        for h in &doc.header {
            if h.key != "lambda" && h.key != "box" {
                return Err(h.err(format!("unknown header key '{}'", h.key)));
            }
        }
        let mut blocks = Vec::new();
        let mut rho = Vec::new();
        for (k, sec) in doc.sections.iter().enumerate() {
            if sec.kind != "node" || sec.id != k {
                return Err(Error::Parse {
                    line: sec.line,
                    col: 1,
                    msg: format!("expected section [node {k}]"),
                });
            }
            let offset = sec.require("offset")?.usize()?;
            let n = sec.require("n")?.usize()?;
            let mut upper: Vec<Option<(Polynomial, usize)>> = vec![None; n * n];
            let mut lower = Vec::new();
            let mut r = Polynomial::zero();
            let (mut lo, mut hi) = (None, None);
            for e in &sec.entries {
                match e.key.as_str() {
                    "offset" | "n" => {}
                    "W" => {
                        e.index_arity(2)?;
                        let (a, b) = (e.index[0], e.index[1]);
                        if a >= n || b >= n {
                            return Err(e.err(format!("W[{a},{b}] is outside {n}x{n}")));
                        }
                        if a <= b {
                            upper[a * n + b] = Some((e.poly()?, e.line));
                        } else {
                            lower.push((b, a, e.poly()?, e));
                        }
                    }
                    "rho" => r = e.poly()?,
                    "m_lower" => lo = Some(e.float()?),
                    "m_upper" => hi = Some(e.float()?),
                    other => return Err(e.err(format!("unknown key '{other}'"))),
                }
            }
            for (a, b, p, e) in lower {
                let mirror = upper[a * n + b].as_ref().map(|(q, _)| q.clone()).unwrap_or_default();
                if p != mirror {
                    return Err(e.err(format!("asymmetric W: W[{b},{a}] differs from W[{a},{b}]")));
                }
            }
            let w = PolyMatrix::symmetric_from_upper(n, |a, b| {
                upper[a * n + b].as_ref().map(|(p, _)| p.clone()).unwrap_or_default()
            });
            let bounds = match (lo, hi) {
                (Some(lower), Some(upper)) => Some(Bounds { lower, upper }),
                (None, None) => None,
                _ => {
                    return Err(Error::Parse {
                        line: sec.line,
                        col: 1,
                        msg: "m_lower and m_upper must be given together".into(),
                    })
                }
            };
            let block = MetricBlock::new(offset, w).map_err(|e| match e {
                Error::Config(msg) | Error::Dimension(msg) => Error::Parse {
                    line: sec.line,
                    col: 1,
                    msg,
                },
                e => e,
            })?;
            blocks.push(block.with_bounds(bounds));
            rho.push(r);
        }
        let n: usize = blocks.iter().map(MetricBlock::dim).sum();
        let domain = match doc.header_value("box") {
            Some(e) => BoxDomain::parse(&e.value, n).map_err(|err| e.err(err.to_string()))?,
            None => BoxDomain::uniform(n.max(1), -1.0, 1.0)?,
        };
        let metric = SumSeparableMetric::new(blocks, lambda, domain)?;
        Ok((metric, Multipliers { rho }))
    }

    /// Metric file text:
    ///
    /// ```text
    /// lambda = 0.1
    /// box = -1.0 1.0
    ///
    /// [node 0]
    /// offset = 0
    /// n = 2
    /// W[0,0] = 1.0
    /// W[0,1] = 0.5 * v0
    /// W[1,1] = 2.0
    /// rho = 3.0
    /// m_lower = 0.1
    /// m_upper = 2.5
    /// ```
    ///
    /// Only the upper triangle of `W` is written; `m_lower`/`m_upper` are
    /// optional. Floats are printed in shortest round-trip form, so
    /// `parse(to_text(..))` reproduces the same text.
    pub fn to_text(&self, mult: &Multipliers) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lambda = {:?}", self.lambda);
        let _ = writeln!(s, "box = {}", self.domain);
        for (i, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "\n[node {i}]\noffset = {}\nn = {}", b.offset, b.dim());
            for r in 0..b.dim() {
                for c in r..b.dim() {
                    let _ = writeln!(s, "W[{r},{c}] = {}", b.w.get(r, c));
                }
            }
            let rho = mult.rho.get(i).cloned().unwrap_or_default();
            let _ = writeln!(s, "rho = {rho}");
            if let Some(bd) = b.bounds {
                let _ = writeln!(s, "m_lower = {:?}\nm_upper = {:?}", bd.lower, bd.upper);
            }
        }
        s
    }
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
/// On failure returns the condition estimate (infinite when not positive).
pub(crate) fn invert_spd(w: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, f64> {
    let eig = SymmetricEigen::new(w.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(f64::INFINITY);
    }
    let cond = hi / lo;
    if cond > MAX_CONDITION {
        return Err(cond);
    }
    let n = w.nrows();
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        m += (v * v.transpose()) / eig.eigenvalues[k];
    }
    // Exact symmetry for downstream quadratic forms.
    for r in 0..n {
        for c in r + 1..n {
            let a = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = a;
            m[(c, r)] = a;
        }
    }
    Ok(m)
}

/// `T` assembled block by block:
/// `T_ii = -∂_{f_i}W_i + A_ii W_i + W_i A_iiᵀ - ρ_i B_i B_iᵀ + 2λW_i` and, for
/// neighbours, `T_ij = A_ij W_j + W_i A_jiᵀ` with `A_ij = ∂f_i/∂x_j`.
pub fn assemble_t_blocks(net: &Network, metric: &SumSeparableMetric, mult: &Multipliers) -> Result<PolyMatrix> {
    metric.check_compatible(net, mult)?;
    let jac = net.jacobian_blocks();
    let two_lambda = 2.0 * metric.lambda();
    let n = net.n();
    let mut t = PolyMatrix::zeros(n, n);
    for i in 0..net.node_count() {
        let node = net.node(i);
        let w = metric.block(i).w();
        let d = w.directional_derivative(&node.f, &net.node_var_indices(i))?;
        let s = jac.get(i, i).try_mul(w)?;
        let bbt = node.b.try_mul(&node.b.transpose())?.mul_poly(&mult.rho[i]);
        let tii = s
            .try_add(&s.transpose())?
            .try_sub(&d)?
            .try_sub(&bbt)?
            .try_add(&w.scale(two_lambda))?;
        t.set_block(net.offset(i), net.offset(i), &tii);
        for &j in net.graph().neighbors(i) {
            let tij = jac
                .get(i, j)
                .try_mul(metric.block(j).w())?
                .try_add(&w.try_mul(&jac.get(j, i).transpose())?)?;
            t.set_block(net.offset(i), net.offset(j), &tij);
        }
    }
    Ok(symmetrize_upper(&t))
}

/// `T = -∂_f W + (∂f/∂x) W + W (∂f/∂x)ᵀ - B R Bᵀ + 2λW` on the assembled network.
pub fn assemble_t_full(net: &Network, metric: &SumSeparableMetric, mult: &Multipliers) -> Result<PolyMatrix> {
    metric.check_compatible(net, mult)?;
    let (f, b) = net.assemble_full();
    let vars: Vec<VarIndex> = (0..net.n()).map(VarIndex).collect();
    let a = f.jacobian(&vars);
    let w = metric.w_full();
    let d = w.directional_derivative(&f, &vars)?;
    let r_diag: Vec<PolyMatrix> = (0..net.node_count())
        .map(|i| PolyMatrix::identity(net.node(i).m()).mul_poly(&mult.rho[i]))
        .collect();
    let r = PolyMatrix::block_diag(&r_diag);
    let brbt = b.try_mul(&r)?.try_mul(&b.transpose())?;
    let t = a
        .try_mul(&w)?
        .try_add(&w.try_mul(&a.transpose())?)?
        .try_sub(&d)?
        .try_sub(&brbt)?
        .try_add(&w.scale(2.0 * metric.lambda()))?;
    Ok(symmetrize_upper(&t))
}

fn symmetrize_upper(t: &PolyMatrix) -> PolyMatrix {
    PolyMatrix::symmetric_from_upper(t.rows(), |r, c| t.get(r, c).clone())
}

/// A nonzero entry of the Killing residual.
#[derive(Clone, Debug, PartialEq)]
pub struct KillingWitness {
    pub node: usize,
    pub column: usize,
    pub row: usize,
    pub col: usize,
    pub residual: Polynomial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KillingReport {
    pub witness: Option<KillingWitness>,
}

impl KillingReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

impl fmt::Display for KillingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.witness {
            None => write!(f, "killing = pass"),
            Some(w) => write!(
                f,
                "killing = fail\nwitness = node {} input column {} entry ({},{}): {}",
                w.node, w.column, w.row, w.col, w.residual
            ),
        }
    }
}

/// `∂_b W - (∂b/∂x) W - W (∂b/∂x)ᵀ` for each column `b` of `b_mat`.
pub(crate) fn killing_residuals(w: &PolyMatrix, b_mat: &PolyMatrix, vars: &[VarIndex]) -> Result<Vec<PolyMatrix>> {
    (0..b_mat.cols())
        .map(|k| {
            let col: PolyVector = b_mat.column(k);
            let j = col.jacobian(vars);
            let r = w
                .directional_derivative(&col, vars)?
                .try_sub(&j.try_mul(w)?)?
                .try_sub(&w.try_mul(&j.transpose())?)?;
            Ok(symmetrize_upper(&r))
        })
        .collect()
}

/// Checks the Killing identity node by node; the first nonzero residual
/// entry (node, input column, row-major position) is returned as witness.
pub fn check_killing(net: &Network, metric: &SumSeparableMetric) -> Result<KillingReport> {
    if net.node_count() != metric.node_count() {
        return Err(Error::Dimension("network and metric node counts differ".into()));
    }
    for i in 0..net.node_count() {
        let res = killing_residuals(metric.block(i).w(), &net.node(i).b, &net.node_var_indices(i))?;
        for (column, r) in res.iter().enumerate() {
            for row in 0..r.rows() {
                for col in 0..r.cols() {
                    let p = r.get(row, col);
                    if p.max_abs_coeff() >= IDENTITY_TOLERANCE {
                        return Ok(KillingReport {
                            witness: Some(KillingWitness {
                                node: i,
                                column,
                                row,
                                col,
                                residual: p.clone(),
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(KillingReport { witness: None })
}

/// Outcome of a sampled check of `T(x) ⪯ -eps I` on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub domain: BoxDomain,
    pub eps: f64,
    pub samples_checked: usize,
    pub grid: usize,
    pub halton: usize,
    pub random: usize,
    pub extra: usize,
    pub worst_index: usize,
    pub worst_point: Vec<f64>,
    pub worst_eig: f64,
}

impl Certificate {
    pub fn verified(&self) -> bool {
        self.worst_eig <= -self.eps
    }

    /// `key = value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verified = {}", self.verified());
        let _ = writeln!(s, "worst_eig = {:?}", self.worst_eig);
        let pt: Vec<String> = self.worst_point.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "worst_point = {}", pt.join(", "));
        let _ = writeln!(s, "worst_index = {}", self.worst_index);
        let _ = writeln!(s, "eps = {:?}", self.eps);
        let _ = writeln!(s, "box = {}", self.domain);
        let _ = writeln!(s, "samples = {}", self.samples_checked);
        let _ = writeln!(
            s,
            "samples_by_source = grid {}, halton {}, random {}, extra {}",
            self.grid, self.halton, self.random, self.extra
        );
        let _ = writeln!(
            s,
            "note = sampled check only; T may be positive between samples"
        );
        s
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Evaluates `T` at every point of `set` and records the largest eigenvalue.
/// Ties go to the lowest sample index.
pub fn verify_on_set(t: &PolyMatrix, domain: &BoxDomain, set: &SampleSet, eps: f64) -> Result<Certificate> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if set.is_empty() {
        return Err(Error::Config("no sample points".into()));
    }
    let eigs = set
        .points
        .par_iter()
        .map(|p| Ok(max_eigenvalue(t.eval(p)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mut worst = 0;
    for (k, &e) in eigs.iter().enumerate() {
        if e > eigs[worst] || e.is_nan() && !eigs[worst].is_nan() {
            worst = k;
        }
    }
    Ok(Certificate {
        domain: domain.clone(),
        eps,
        samples_checked: set.len(),
        grid: set.count(SampleSource::Grid),
        halton: set.count(SampleSource::Halton),
        random: set.count(SampleSource::Random),
        extra: set.count(SampleSource::Extra),
        worst_index: worst,
        worst_point: set.points[worst].clone(),
        worst_eig: eigs[worst],
    })
}

/// [`verify_on_set`] on points drawn from `domain` according to `sampler`.
pub fn verify_on_box(t: &PolyMatrix, domain: &BoxDomain, sampler: &SamplerConfig, eps: f64) -> Result<Certificate> {
    if domain.dim() != t.rows() {
        return Err(Error::Dimension(format!(
            "box has {} coordinates but T is {}x{}",
            domain.dim(),
            t.rows(),
            t.cols()
        )));
    }
    verify_on_set(t, domain, &SampleSet::draw(domain, sampler), eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Polynomial {
        s.parse().unwrap()
    }

    fn scalar_net(f: &str, b: &str) -> Network {
        Network::parse(&format!("nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = {f}\nB[0,0] = {b}\n")).unwrap()
    }

    fn scalar_metric(w: &str, lambda: f64) -> SumSeparableMetric {
        let block = MetricBlock::new(0, PolyMatrix::new(1, 1, vec![p(w)]).unwrap()).unwrap();
        SumSeparableMetric::new(vec![block], lambda, BoxDomain::uniform(1, -1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn scalar_certificate() {
        let net = scalar_net("-1 * v0", "1");
        let metric = scalar_metric("1", 0.1);
        let mult = Multipliers::constant(&[0.0]);
        let t = assemble_t_blocks(&net, &metric, &mult).unwrap();
        assert!((t.eval(&[0.3]).unwrap()[(0, 0)] + 1.8).abs() < 1e-15);
        let cert = verify_on_box(&t, metric.domain(), &SamplerConfig::default(), 1e-6).unwrap();
        assert!(cert.verified());
        assert!((cert.worst_eig + 1.8).abs() < 1e-12);
    }

    #[test]
    fn unit_metric_with_zero_dynamics() {
        let net = scalar_net("0", "0");
        let metric = scalar_metric("1", 1.0);
        let mult = Multipliers::constant(&[0.0]);
        let full = assemble_t_full(&net, &metric, &mult).unwrap();
        assert_eq!(full.get(0, 0), &Polynomial::constant(2.0));
    }

    #[test]
    fn sign_indefinite_t_is_not_verified() {
        let t = PolyMatrix::new(1, 1, vec![p("v0")]).unwrap();
        let domain = BoxDomain::uniform(1, -1.0, 1.0).unwrap();
        let cert = verify_on_box(&t, &domain, &SamplerConfig::default(), 1e-6).unwrap();
        assert!(!cert.verified());
        assert!(cert.worst_point[0] > 0.99);
        assert!(cert.report().contains("verified = false"));
    }

    #[test]
    fn killing_detects_input_direction_dependence() {
        let net = Network::parse("nodes = 1\n[node 0]\nn = 2\nm = 1\nf[0] = v1\nf[1] = 0\nB[1,0] = 1\n").unwrap();
        let domain = BoxDomain::uniform(2, -1.0, 1.0).unwrap();
        let ok = MetricBlock::new(0, PolyMatrix::symmetric_from_upper(2, |r, c| if r == c { p("1 + v0^2") } else { p("0") }))
            .unwrap();
        let metric = SumSeparableMetric::new(vec![ok], 0.0, domain.clone()).unwrap();
        assert!(check_killing(&net, &metric).unwrap().passed());
        let bad = MetricBlock::new(0, PolyMatrix::symmetric_from_upper(2, |r, c| if r == c { p("1 + v1^2") } else { p("0") }))
            .unwrap();
        let metric = SumSeparableMetric::new(vec![bad], 0.0, domain).unwrap();
        let w = check_killing(&net, &metric).unwrap().witness.unwrap();
        assert_eq!((w.node, w.column, w.row, w.col), (0, 0, 0, 0));
        assert_eq!(w.residual, p("2 * v1"));
    }

    #[test]
    fn killing_with_state_dependent_input() {
        // b = (x, 0): W = diag(x^2, 1) satisfies the identity exactly.
        let net = Network::parse("nodes = 1\n[node 0]\nn = 2\nm = 1\nB[0,0] = v0\n").unwrap();
        let domain = BoxDomain::uniform(2, -1.0, 1.0).unwrap();
        let w = PolyMatrix::symmetric_from_upper(2, |r, c| match (r, c) {
            (0, 0) => p("v0^2"),
            (1, 1) => p("1"),
            _ => p("0"),
        });
        let metric = SumSeparableMetric::new(vec![MetricBlock::new(0, w).unwrap()], 0.0, domain).unwrap();
        assert!(check_killing(&net, &metric).unwrap().passed());
    }

    #[test]
    fn eval_and_derivative() {
        let m = scalar_metric("2", 0.0);
        let (w, inv) = m.eval(0, &[0.4]).unwrap();
        assert_eq!(w[(0, 0)], 2.0);
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(m.derivative(0, &[0.4], &[1.0]).unwrap()[(0, 0)], 0.0);

        let m = scalar_metric("1 + v0", 0.0);
        assert!((m.derivative(0, &[0.0], &[1.0]).unwrap()[(0, 0)] + 1.0).abs() < 1e-15);

        let z = scalar_metric("0", 0.0);
        assert!(matches!(z.eval(0, &[0.0]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn metric_text_round_trip_and_asymmetry() {
        let text = "lambda = 0.25\nbox = -0.5 0.5\n[node 0]\noffset = 0\nn = 2\nW[0,0] = 1 + v0^2\nW[0,1] = 0.5 * v1\n\
                    W[1,0] = 0.5 * v1\nW[1,1] = 3\nrho = 2 + v0\n";
        let (m, r) = SumSeparableMetric::parse(text).unwrap();
        assert_eq!(m.lambda(), 0.25);
        let once = m.to_text(&r);
        let (m2, r2) = SumSeparableMetric::parse(&once).unwrap();
        assert_eq!(m2.to_text(&r2), once);
        let bad = text.replace("W[1,0] = 0.5 * v1", "W[1,0] = 0.4 * v1");
        match SumSeparableMetric::parse(&bad).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 8);
                assert!(msg.contains("asymmetric"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn rho_locality_is_checked() {
        let net = Network::parse(
            "nodes = 3\nedges = 0-1, 1-2\n[node 0]\nn = 1\nm = 1\nB[0,0] = 1\n[node 1]\nn = 1\nm = 1\nB[0,0] = 1\n\
             [node 2]\nn = 1\nm = 1\nB[0,0] = 1\n",
        )
        .unwrap();
        let m = SumSeparableMetric::identity(&net, 0.1, BoxDomain::uniform(3, -1.0, 1.0).unwrap()).unwrap();
        let mult = Multipliers {
            rho: vec![p("v2"), p("1"), p("1")],
        };
        assert!(matches!(m.check_compatible(&net, &mult), Err(Error::Locality { node: 0, var: 2, .. })));
    }
}
