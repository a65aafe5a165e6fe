//! Graph topology, per-node input-affine dynamics `ẋ_i = f_i(x_i, x̆_i) + B_i(x_i) u_i`
//! and their assembly into one network `ẋ = f(x) + B(x) u`.
//!
//! All polynomials are written over global state variables: node `i` owns
//! `v{offset_i} .. v{offset_i + n_i - 1}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::metric::{Multipliers, SumSeparableMetric};
use crate::polyalg::{PolyMatrix, PolyVector, Polynomial, VarIndex};
use crate::textfmt::Document;

/// An undirected, connected graph without self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Validates the edge list; duplicate edges and either orientation of
    /// the same pair are merged.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        if node_count == 0 {
            return Err(Error::Graph("a network needs at least one node".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::Graph(format!("self-loop at node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::Graph(format!(
                    "edge {a}-{b} references a node outside 0..{node_count}"
                )));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in &canon {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let g = Graph {
            node_count,
            edges: canon,
            neighbors,
        };
        if !g.is_connected() {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// A path `0 - 1 - ... - (n-1)`.
    pub fn path(node_count: usize) -> Result<Graph> {
        let edges: Vec<_> = (1..node_count).map(|k| (k - 1, k)).collect();
        Graph::new(node_count, &edges)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// `{i} ∪ 𝒩(i)`, sorted.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut v = self.neighbors[i].clone();
        v.push(i);
        v.sort_unstable();
        v
    }
}

/// One node's vector field and input matrix over global variables.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeDynamics {
    pub f: PolyVector,
    pub b: PolyMatrix,
}

impl NodeDynamics {
    pub fn new(f: PolyVector, b: PolyMatrix) -> Result<NodeDynamics> {
        if b.rows() != f.dim() {
            return Err(Error::Dimension(format!(
                "B has {} rows but f has {} entries",
                b.rows(),
                f.dim()
            )));
        }
        Ok(NodeDynamics { f, b })
    }

    pub fn n(&self) -> usize {
        self.f.dim()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }
}

/// A validated network: graph, node dynamics and index bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    graph: Graph,
    nodes: Vec<NodeDynamics>,
    offsets: Vec<usize>,
    input_offsets: Vec<usize>,
    n: usize,
    m: usize,
}

impl Network {
    /// Checks that `f_i` uses only variables of `{i} ∪ 𝒩(i)` and that `B_i`
    /// uses only variables of node `i`.
    pub fn new(graph: Graph, nodes: Vec<NodeDynamics>) -> Result<Network> {
        if nodes.len() != graph.node_count() {
            return Err(Error::Dimension(format!(
                "graph has {} nodes but {} node dynamics were given",
                graph.node_count(),
                nodes.len()
            )));
        }
        let mut offsets = Vec::with_capacity(nodes.len());
        let mut input_offsets = Vec::with_capacity(nodes.len());
        let (mut n, mut m) = (0, 0);
        for node in &nodes {
            if node.n() == 0 {
                return Err(Error::Dimension("node state dimension must be positive".into()));
            }
            offsets.push(n);
            input_offsets.push(m);
            n += node.n();
            m += node.m();
        }
        let net = Network {
            graph,
            nodes,
            offsets,
            input_offsets,
            n,
            m,
        };
        for i in 0..net.node_count() {
            let allowed = net.neighborhood_vars(i);
            let own = net.node_vars(i);
            let node = &net.nodes[i];
            for (k, p) in node.f.entries().iter().enumerate() {
                if let Some(v) = p.vars().into_iter().find(|v| allowed.binary_search(v).is_err()) {
                    return Err(Error::Locality {
                        node: i,
                        what: format!("f[{k}]"),
                        var: v,
                    });
                }
            }
            for r in 0..node.n() {
                for c in 0..node.m() {
                    if let Some(v) = node.b.get(r, c).vars().into_iter().find(|v| !own.contains(v)) {
                        return Err(Error::Locality {
                            node: i,
                            what: format!("B[{r},{c}]"),
                            var: v,
                        });
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> &NodeDynamics {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodeDynamics] {
        &self.nodes
    }

    /// Total state dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total input dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn input_offset(&self, i: usize) -> usize {
        self.input_offsets[i]
    }

    /// Global indices of node `i`'s state.
    pub fn node_vars(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.nodes[i].n()
    }

    pub fn node_var_indices(&self, i: usize) -> Vec<VarIndex> {
        self.node_vars(i).map(VarIndex).collect()
    }

    /// Global indices of node `i`'s inputs.
    pub fn input_range(&self, i: usize) -> Range<usize> {
        self.input_offsets[i]..self.input_offsets[i] + self.nodes[i].m()
    }

    /// Global indices of the states of `{i} ∪ 𝒩(i)`, sorted.
    pub fn neighborhood_vars(&self, i: usize) -> Vec<usize> {
        self.graph
            .closed_neighborhood(i)
            .into_iter()
            .flat_map(|j| self.node_vars(j))
            .collect()
    }

    /// Stacked `f` and block-diagonal `B`.
    pub fn assemble_full(&self) -> (PolyVector, PolyMatrix) {
        let f = PolyVector::new(self.nodes.iter().flat_map(|d| d.f.entries().iter().cloned()).collect());
        let blocks: Vec<PolyMatrix> = self.nodes.iter().map(|d| d.b.clone()).collect();
        (f, PolyMatrix::block_diag(&blocks))
    }

    /// `∂f_i/∂x_j` for every `j ∈ {i} ∪ 𝒩(i)`.
    pub fn jacobian_blocks(&self) -> JacobianBlocks {
        let mut blocks = BTreeMap::new();
        for i in 0..self.node_count() {
            for j in self.graph.closed_neighborhood(i) {
                blocks.insert((i, j), self.nodes[i].f.jacobian(&self.node_var_indices(j)));
            }
        }
        JacobianBlocks {
            dims: self.nodes.iter().map(NodeDynamics::n).collect(),
            blocks,
        }
    }

    /// `f(x) + B(x) u`, evaluated node by node.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        if u.len() != self.m {
            return Err(Error::Dimension(format!("input has {} entries, expected {}", u.len(), self.m)));
        }
        let mut out = Vec::with_capacity(self.n);
        for (i, node) in self.nodes.iter().enumerate() {
            let ui = &u[self.input_range(i)];
            for r in 0..node.n() {
                let mut v = node.f.get(r).eval(x)?;
                for (c, uc) in ui.iter().enumerate() {
                    let b = node.b.get(r, c);
                    if !b.is_zero() {
                        v += b.eval(x)? * uc;
                    }
                }
                out.push(v);
            }
        }
        Ok(out)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("state has {} entries, expected {}", x.len(), self.n)));
        }
        Ok(())
    }

    /// Parses the network text format:
    ///
    /// ```text
    /// nodes = 2
    /// edges = 0-1
    /// [node 0]
    /// n = 1
    /// m = 1
    /// f[0] = -1 * v0 + 0.5 * v1
    /// B[0,0] = 1
    /// ```
    ///
    /// Omitted `f` and `B` entries are zero.
    pub fn parse(text: &str) -> Result<Network> {
        let doc = Document::parse(text)?;
        let nodes_entry = doc.header_value("nodes").ok_or_else(|| Error::Parse {
            line: 1,
            col: 1,
            msg: "missing 'nodes = N' header".into(),
        })?;
        let count = nodes_entry.usize()?;
        let mut edges = Vec::new();
        if let Some(e) = doc.header_value("edges") {
            for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (a, b) = item
                    .split_once('-')
                    .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                    .ok_or_else(|| e.err(format!("malformed edge '{item}', expected 'a-b'")))?;
                edges.push((a, b));
            }
        }
        for h in &doc.header {
            if h.key != "nodes" && h.key != "edges" {
                return Err(h.err(format!("unknown header key '{}'", h.key)));
            }
        }
        let graph = Graph::new(count, &edges)?;
        let mut found: Vec<Option<NodeDynamics>> = vec![None; count];
        for sec in &doc.sections {
            if sec.kind != "node" {
                return Err(Error::Parse {
                    line: sec.line,
                    col: 1,
                    msg: format!("unknown section kind '{}'", sec.kind),
                });
            }
            if sec.id >= count || found[sec.id].is_some() {
                return Err(Error::Parse {
                    line: sec.line,
                    col: 1,
                    msg: format!("node id {} is out of range or repeated", sec.id),
                });
            }
            let n = sec.require("n")?.usize()?;
            let m = sec.require("m")?.usize()?;
            let mut f = vec![Polynomial::zero(); n];
            let mut b = vec![Polynomial::zero(); n * m];
            for e in &sec.entries {
                match e.key.as_str() {
                    "n" | "m" => {}
                    "f" => {
                        e.index_arity(1)?;
                        let k = e.index[0];
                        if k >= n {
                            return Err(e.err(format!("f[{k}] is outside n = {n}")));
                        }
                        f[k] = e.poly()?;
                    }
                    "B" => {
                        e.index_arity(2)?;
                        let (r, c) = (e.index[0], e.index[1]);
                        if r >= n || c >= m {
                            return Err(e.err(format!("B[{r},{c}] is outside {n}x{m}")));
                        }
                        b[r * m + c] = e.poly()?;
                    }
                    other => return Err(e.err(format!("unknown key '{other}'"))),
                }
            }
            found[sec.id] = Some(NodeDynamics::new(PolyVector::new(f), PolyMatrix::new(n, m, b)?)?);
        }
        let nodes = found
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                d.ok_or_else(|| Error::Parse {
                    line: 1,
                    col: 1,
                    msg: format!("missing [node {i}] section"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(graph, nodes)
    }

    /// Inverse of [`Network::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes = {}", self.node_count());
        let edges: Vec<String> = self.graph.edges().iter().map(|(a, b)| format!("{a}-{b}")).collect();
        let _ = writeln!(s, "edges = {}", edges.join(", "));
        for (i, d) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "\n[node {i}]\nn = {}\nm = {}", d.n(), d.m());
            for (k, p) in d.f.entries().iter().enumerate() {
                if !p.is_zero() {
                    let _ = writeln!(s, "f[{k}] = {p}");
                }
            }
            for r in 0..d.n() {
                for c in 0..d.m() {
                    let p = d.b.get(r, c);
                    if !p.is_zero() {
                        let _ = writeln!(s, "B[{r},{c}] = {p}");
                    }
                }
            }
        }
        s
    }
}

/// The blocks `A_ij = ∂f_i/∂x_j` of the drift Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBlocks {
    dims: Vec<usize>,
    blocks: BTreeMap<(usize, usize), PolyMatrix>,
}

impl JacobianBlocks {
    /// Block `(i, j)`; an exact zero matrix when `j` is not in `{i} ∪ 𝒩(i)`.
    pub fn get(&self, i: usize, j: usize) -> PolyMatrix {
        self.blocks
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| PolyMatrix::zeros(self.dims[i], self.dims[j]))
    }

    pub fn stored(&self) -> impl Iterator<Item = (&(usize, usize), &PolyMatrix)> {
        self.blocks.iter()
    }
}

/// A closed-form input signal `t ↦ u(t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSignal {
    Zero,
    Constant(Vec<f64>),
    /// `u_k(t) = amplitude_k · sin(2π·frequency·t + phase)`.
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: f64,
        phase: f64,
    },
}

impl InputSignal {
    pub fn eval(&self, t: f64, m: usize) -> Vec<f64> {
        match self {
            InputSignal::Zero => vec![0.0; m],
            InputSignal::Constant(c) => c.clone(),
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let s = (2.0 * PI * frequency * t + phase).sin();
                amplitude.iter().map(|a| a * s).collect()
            }
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            InputSignal::Zero => None,
            InputSignal::Constant(c) => Some(c.len()),
            InputSignal::Sinusoid { amplitude, .. } => Some(amplitude.len()),
        }
    }
}

/// Initial state and input of the trajectory to be tracked.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSignal {
    pub x_star0: Vec<f64>,
    pub u_star: InputSignal,
}

impl ReferenceSignal {
    /// `x* = 0`, `u* ≡ 0`.
    pub fn origin(n: usize) -> ReferenceSignal {
        ReferenceSignal {
            x_star0: vec![0.0; n],
            u_star: InputSignal::Zero,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        net.check_point(&self.x_star0)?;
        if let Some(m) = self.u_star.dim() {
            if m != net.m() {
                return Err(Error::Dimension(format!("reference input has {m} entries, expected {}", net.m())));
            }
        }
        Ok(())
    }
}

/// Network file text of the three-node example.
pub const EXAMPLE_NETWORK: &str = include_str!("../fixtures/example_network.txt");

/// Metric file text with the published `W_i` and `ρ_i` of the example.
pub const EXAMPLE_METRIC: &str = include_str!("../fixtures/example_metric.txt");

/// The three-node example: path graph `0 - 1 - 2`, each node
/// `ẋ = -x + z - 0.001(x - Σ x_j)`, `ẏ = x² - y³ - 2xz + z`, `ż = -y + u`.
pub fn builtin_network() -> Network {
    Network::parse(EXAMPLE_NETWORK).expect("bundled network fixture parses")
}

/// The example network with its published metric (at `λ = 0.1` on `[-1,1]⁹`)
/// and multipliers.
pub fn builtin_example() -> (Network, SumSeparableMetric, Multipliers) {
    let (metric, mult) = SumSeparableMetric::parse(EXAMPLE_METRIC).expect("bundled metric fixture parses");
    (builtin_network(), metric, mult)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = "nodes = 2\nedges = 0-1\n[node 0]\nn = 1\nm = 1\nf[0] = -1 * v0 + 0.5 * v1\nB[0,0] = 1\n\
                            [node 1]\nn = 1\nm = 1\nf[0] = -2 * v1 + v0^2\nB[0,0] = 1 + v1^2\n";

    #[test]
    fn graph_rejects_bad_input() {
        assert!(Graph::new(2, &[]).is_err());
        assert!(Graph::new(2, &[(0, 0), (0, 1)]).is_err());
        assert!(Graph::new(2, &[(0, 2)]).is_err());
        let g = Graph::new(3, &[(1, 0), (2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(!g.adjacent(0, 2));
    }

    #[test]
    fn parse_and_print_round_trip() {
        let net = Network::parse(TWO_NODE).unwrap();
        assert_eq!((net.n(), net.m()), (2, 2));
        let again = Network::parse(&net.to_text()).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn single_node_network() {
        let net = Network::parse("nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = -1 * v0\nB[0,0] = 1\n").unwrap();
        assert_eq!(net.n(), 1);
        let (f, b) = net.assemble_full();
        assert_eq!(f.get(0), &"-1 * v0".parse().unwrap());
        assert_eq!(b.get(0, 0), &Polynomial::constant(1.0));
    }

    #[test]
    fn locality_violations_name_node_and_variable() {
        let text = "nodes = 3\nedges = 0-1, 1-2\n[node 0]\nn = 1\nm = 0\nf[0] = v2\n\
                    [node 1]\nn = 1\nm = 0\n[node 2]\nn = 1\nm = 0\n";
        match Network::parse(text).unwrap_err() {
            Error::Locality { node, var, .. } => assert_eq!((node, var), (0, 2)),
            e => panic!("{e}"),
        }
        let text = "nodes = 2\nedges = 0-1\n[node 0]\nn = 1\nm = 1\nB[0,0] = v1\n[node 1]\nn = 1\nm = 0\n";
        assert!(matches!(Network::parse(text), Err(Error::Locality { node: 0, .. })));
    }

    #[test]
    fn parse_errors_report_lines() {
        let text = "nodes = 1\n[node 0]\nn = 1\nm = 1\nf[0] = -1 * * v0\n";
        match Network::parse(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            e => panic!("{e}"),
        }
        assert!(Network::parse("nodes = 2\n[node 0]\nn = 1\nm = 0\n[node 1]\nn = 1\nm = 0\n").is_err());
    }

    #[test]
    fn rhs_matches_assembly() {
        let net = Network::parse(TWO_NODE).unwrap();
        let x = [0.3, -0.7];
        let u = [0.2, -1.1];
        let (f, b) = net.assemble_full();
        let fx = f.eval(&x).unwrap();
        let bx = b.eval(&x).unwrap();
        let want: Vec<f64> = (0..2).map(|r| fx[r] + bx[(r, 0)] * u[0] + bx[(r, 1)] * u[1]).collect();
        let got = net.rhs(&x, &u).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_node_jacobian_is_its_matrix() {
        let net = Network::parse("nodes = 1\n[node 0]\nn = 2\nm = 0\nf[0] = 2 * v0 - 3 * v1\nf[1] = 0.5 * v1\n").unwrap();
        let a = net.jacobian_blocks().get(0, 0);
        let want = [[2.0, -3.0], [0.0, 0.5]];
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(a.get(r, c), &Polynomial::constant(want[r][c]));
            }
        }
    }

    #[test]
    fn sinusoid_input() {
        let s = InputSignal::Sinusoid {
            amplitude: vec![2.0],
            frequency: 0.25,
            phase: 0.0,
        };
        assert!((s.eval(1.0, 1)[0] - 2.0).abs() < 1e-15);
        assert_eq!(InputSignal::Zero.eval(3.0, 2), vec![0.0, 0.0]);
    }
}
