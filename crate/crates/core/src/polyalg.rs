//! Sparse multivariate polynomials and polynomial matrices over the global
//! state coordinates `v0, v1, ...`.
//!
//! Coefficients are `f64`. Terms are kept in graded lexicographic order and
//! any coefficient whose magnitude drops below [`ZERO_THRESHOLD`] after an
//! arithmetic operation is pruned, so two polynomials that print the same
//! compare equal term-for-term.
//!
//! Text syntax (used by the network and metric files):
//!
//! ```text
//! 0.22 * v0^2 + 0.05 * v0 + 2.61
//! -1.001 * v0 + v2 + 1e-3 * v3
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Coefficients below this magnitude are dropped after arithmetic.
pub const ZERO_THRESHOLD: f64 = 1e-14;

/// Index of one scalar coordinate of the global state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarIndex(pub usize);

impl fmt::Display for VarIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A power product `∏ v_k^{e_k}`, stored sparsely as `(var, exp)` pairs with
/// strictly increasing `var` and nonzero `exp`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: usize) -> Self {
        Monomial(vec![(v, 1)])
    }

    /// Builds a monomial from arbitrary `(var, exp)` factors; repeated
    /// variables are merged and zero exponents dropped.
    pub fn from_factors<I: IntoIterator<Item = (usize, u32)>>(factors: I) -> Self {
        let mut acc: BTreeMap<usize, u32> = BTreeMap::new();
        for (v, e) in factors {
            *acc.entry(v).or_insert(0) += e;
        }
        Monomial(acc.into_iter().filter(|&(_, e)| e > 0).collect())
    }

    pub fn factors(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: usize) -> u32 {
        self.0
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, e)| e)
            .unwrap_or(0)
    }

    pub fn max_var(&self) -> Option<usize> {
        self.0.last().map(|&(v, _)| v)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (va, ea) = self.0[i];
            let (vb, eb) = other.0[j];
            match va.cmp(&vb) {
                Ordering::Less => {
                    out.push((va, ea));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((vb, eb));
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((va, ea + eb));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Partial derivative with respect to `v`: returns the multiplicity and
    /// the reduced monomial, or `None` if `v` does not occur.
    pub fn diff(&self, v: usize) -> Option<(u32, Monomial)> {
        let pos = self.0.iter().position(|&(w, _)| w == v)?;
        let e = self.0[pos].1;
        let mut out = self.0.clone();
        if e == 1 {
            out.remove(pos);
        } else {
            out[pos].1 = e - 1;
        }
        Some((e, Monomial(out)))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 1.0;
        for &(v, e) in &self.0 {
            let xv = *x.get(v).ok_or(Error::VarOutOfRange {
                var: v,
                dim: x.len(),
            })?;
            acc *= xv.powi(e as i32);
        }
        Ok(acc)
    }

    fn remap(&self, f: &impl Fn(usize) -> usize) -> Monomial {
        Monomial::from_factors(self.0.iter().map(|&(v, e)| (f(v), e)))
    }
}

impl Ord for Monomial {
    /// Graded lexicographic order with `v0 > v1 > ...`.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        loop {
            match (self.0.get(i), other.0.get(j)) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&(va, ea)), Some(&(vb, eb))) => {
                    if va < vb {
                        return Ordering::Greater;
                    }
                    if vb < va {
                        return Ordering::Less;
                    }
                    match ea.cmp(&eb) {
                        Ordering::Equal => {
                            i += 1;
                            j += 1;
                        }
                        ord => return ord,
                    }
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials in `vars` of total degree at most `max_degree`, in
/// ascending graded lexicographic order.
pub fn monomials_up_to(vars: &[usize], max_degree: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier = vec![Monomial::one()];
    for _ in 0..max_degree {
        let mut next = BTreeSet::new();
        for m in &frontier {
            for &v in vars {
                next.insert(m.mul(&Monomial::var(v)));
            }
        }
        frontier = next.iter().cloned().collect();
        out.extend(next);
    }
    out.sort();
    out.dedup();
    out
}

/// A sparse multivariate polynomial with real coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Polynomial::default()
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::from_terms([(Monomial::one(), c)])
    }

    pub fn var(v: usize) -> Self {
        Polynomial::from_terms([(Monomial::var(v), 1.0)])
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        Polynomial::from_terms([(m, c)])
    }

    /// Sums the given terms, merging equal monomials and pruning zeros.
    pub fn from_terms<I: IntoIterator<Item = (Monomial, f64)>>(terms: I) -> Self {
        let mut map: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in terms {
            *map.entry(m).or_insert(0.0) += c;
        }
        let mut p = Polynomial { terms: map };
        p.prune();
        p
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() >= ZERO_THRESHOLD);
    }

    /// Terms in ascending graded lexicographic order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.keys().filter_map(Monomial::max_var).max()
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|&(v, _)| v))
            .collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// `Σ coeff · ∏ x_k^{e_k}`, summed in ascending term order.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            acc += c * m.eval(x)?;
        }
        Ok(acc)
    }

    /// Formal partial derivative with respect to `v`.
    pub fn diff(&self, v: VarIndex) -> Polynomial {
        Polynomial::from_terms(
            self.terms
                .iter()
                .filter_map(|(m, &c)| m.diff(v.0).map(|(e, dm)| (dm, c * e as f64))),
        )
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, &c)| (m.clone(), c * s)))
    }

    /// Renames every variable through `f`.
    pub fn remap_vars(&self, f: impl Fn(usize) -> usize) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, &c)| (m.remap(&f), c)))
    }

    /// Term-wise comparison: same monomials, coefficients within `tol`.
    pub fn approx_eq(&self, other: &Polynomial, tol: f64) -> bool {
        let diff = self - other;
        diff.max_abs_coeff() <= tol
    }

    /// Parses the text syntax, attributing errors to `line`.
    pub fn parse_at(text: &str, line: usize) -> Result<Polynomial> {
        Parser::new(text, line).parse()
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        let mut p = Polynomial { terms };
        p.prune();
        p
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut terms = self.terms.clone();
        for (m, c) in &rhs.terms {
            *terms.entry(m.clone()).or_insert(0.0) -= c;
        }
        let mut p = Polynomial { terms };
        p.prune();
        p
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial { terms };
        p.prune();
        p
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), -c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $f(self, rhs: Polynomial) -> Polynomial {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $f(self, rhs: &Polynomial) -> Polynomial {
                (&self).$f(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

impl fmt::Display for Polynomial {
    /// Highest-order term first; coefficients use the shortest
    /// representation that parses back to the same `f64`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let sign = if c < 0.0 { "-" } else { "+" };
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{:?}", c.abs())?;
            for &(v, e) in m.factors() {
                if e == 1 {
                    write!(f, " * v{v}")?;
                } else {
                    write!(f, " * v{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for Polynomial {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Polynomial::parse_at(s, 1)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            line,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Polynomial> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            None => return Err(self.err("empty polynomial")),
            _ => {}
        }
        loop {
            let (m, c) = self.term()?;
            terms.push((m, sign * c));
            match self.peek() {
                None => break,
                Some(b'+') => {
                    sign = 1.0;
                    self.pos += 1;
                }
                Some(b'-') => {
                    sign = -1.0;
                    self.pos += 1;
                }
                Some(ch) => return Err(self.err(format!("unexpected '{}'", ch as char))),
            }
        }
        Ok(Polynomial::from_terms(terms))
    }

    fn term(&mut self) -> Result<(Monomial, f64)> {
        let mut coeff = 1.0;
        let mut factors = Vec::new();
        loop {
            match self.peek() {
                Some(b'v') => {
                    self.pos += 1;
                    let v = self.integer()? as usize;
                    let e = if self.peek() == Some(b'^') {
                        self.pos += 1;
                        self.skip_ws();
                        self.integer()?
                    } else {
                        1
                    };
                    factors.push((v, e));
                }
                Some(ch) if ch.is_ascii_digit() || ch == b'.' => coeff *= self.number()?,
                Some(ch) => return Err(self.err(format!("expected a factor, found '{}'", ch as char))),
                None => return Err(self.err("expected a factor, found end of input")),
            }
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((Monomial::from_factors(factors), coeff))
    }

    fn integer(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse().map_err(|_| self.err(format!("integer '{s}' out of range")))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        let s = std::str::from_utf8(&bytes[start..i]).unwrap();
        s.parse::<f64>().map_err(|_| Error::Parse {
            line: self.line,
            col: start + 1,
            msg: format!("invalid number '{s}'"),
        })
    }
}

/// A column of polynomials, e.g. a vector field `f(x)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyVector {
    entries: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(entries: Vec<Polynomial>) -> Self {
        PolyVector { entries }
    }

    pub fn zeros(dim: usize) -> Self {
        PolyVector {
            entries: vec![Polynomial::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn get(&self, k: usize) -> &Polynomial {
        &self.entries[k]
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.entries.iter().map(|p| p.eval(x)).collect()
    }

    /// `∂f/∂x` restricted to the listed variables: a `dim × vars.len()` matrix.
    pub fn jacobian(&self, vars: &[VarIndex]) -> PolyMatrix {
        PolyMatrix::from_fn(self.dim(), vars.len(), |r, c| self.entries[r].diff(vars[c]))
    }

    pub fn remap_vars(&self, f: impl Fn(usize) -> usize + Copy) -> PolyVector {
        PolyVector::new(self.entries.iter().map(|p| p.remap_vars(f)).collect())
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        self.entries.iter().flat_map(|p| p.vars()).collect()
    }
}

/// A dense matrix of polynomials, stored row-major.
///
/// The `symmetric` flag is set only when entry `(i,j)` equals entry `(j,i)`
/// term-for-term; evaluation of a symmetric matrix computes the upper
/// triangle and mirrors it, so the numeric result is exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Polynomial>,
    symmetric: bool,
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Polynomial>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        let mut m = PolyMatrix {
            rows,
            cols,
            entries,
            symmetric: false,
        };
        m.symmetric = m.is_symmetric_exact();
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Polynomial) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        let mut m = PolyMatrix {
            rows,
            cols,
            entries,
            symmetric: false,
        };
        m.symmetric = m.is_symmetric_exact();
        m
    }

    /// Symmetric matrix built from its upper triangle (`r <= c`).
    pub fn symmetric_from_upper(n: usize, mut f: impl FnMut(usize, usize) -> Polynomial) -> Self {
        let mut entries = vec![Polynomial::zero(); n * n];
        for r in 0..n {
            for c in r..n {
                let p = f(r, c);
                if r != c {
                    entries[c * n + r] = p.clone();
                }
                entries[r * n + c] = p;
            }
        }
        PolyMatrix {
            rows: n,
            cols: n,
            entries,
            symmetric: true,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            entries: vec![Polynomial::zero(); rows * cols],
            symmetric: rows == cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        PolyMatrix::symmetric_from_upper(n, |r, c| {
            if r == c {
                Polynomial::constant(1.0)
            } else {
                Polynomial::zero()
            }
        })
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        PolyMatrix::from_fn(m.nrows(), m.ncols(), |r, c| Polynomial::constant(m[(r, c)]))
    }

    /// Block-diagonal matrix with the given square or rectangular blocks.
    pub fn block_diag(blocks: &[PolyMatrix]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = PolyMatrix::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            out.set_block(r0, c0, b);
            r0 += b.rows;
            c0 += b.cols;
        }
        out.symmetric = out.is_symmetric_exact();
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, r: usize, c: usize) -> &Polynomial {
        &self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    fn is_symmetric_exact(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|r| (r + 1..self.cols).all(|c| self.get(r, c) == self.get(c, r)))
    }

    pub(crate) fn set_block(&mut self, r0: usize, c0: usize, b: &PolyMatrix) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self.entries[(r0 + r) * self.cols + c0 + c] = b.get(r, c).clone();
            }
        }
        self.symmetric = false;
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> PolyMatrix {
        PolyMatrix::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c).clone())
    }

    pub fn column(&self, c: usize) -> PolyVector {
        PolyVector::new((0..self.rows).map(|r| self.get(r, c).clone()).collect())
    }

    /// Re-checks exact symmetry and sets the flag accordingly.
    pub fn with_symmetry_check(mut self) -> Self {
        self.symmetric = self.is_symmetric_exact();
        self
    }

    /// Numeric value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        if self.symmetric {
            for r in 0..self.rows {
                for c in r..self.cols {
                    let v = self.get(r, c).eval(x)?;
                    out[(r, c)] = v;
                    out[(c, r)] = v;
                }
            }
        } else {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    out[(r, c)] = self.get(r, c).eval(x)?;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> PolyMatrix {
        let mut m = PolyMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone());
        m.symmetric = self.symmetric;
        m
    }

    pub fn try_mul(&self, rhs: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(PolyMatrix::from_fn(self.rows, rhs.cols, |r, c| {
            let mut acc = Polynomial::zero();
            for k in 0..self.cols {
                let (a, b) = (self.get(r, k), rhs.get(k, c));
                if !a.is_zero() && !b.is_zero() {
                    acc = &acc + &(a * b);
                }
            }
            acc
        }))
    }

    fn zip_with(&self, rhs: &PolyMatrix, f: impl Fn(&Polynomial, &Polynomial) -> Polynomial) -> Result<PolyMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "shape {}x{} does not match {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut m = PolyMatrix::from_fn(self.rows, self.cols, |r, c| f(self.get(r, c), rhs.get(r, c)));
        if self.symmetric && rhs.symmetric {
            m.symmetric = true;
        }
        Ok(m)
    }

    pub fn try_add(&self, rhs: &PolyMatrix) -> Result<PolyMatrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &PolyMatrix) -> Result<PolyMatrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> PolyMatrix {
        let mut m = PolyMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).scale(s));
        m.symmetric = self.symmetric;
        m
    }

    pub fn mul_poly(&self, p: &Polynomial) -> PolyMatrix {
        let mut m = PolyMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) * p);
        m.symmetric = self.symmetric;
        m
    }

    /// Entrywise partial derivative.
    pub fn diff(&self, v: VarIndex) -> PolyMatrix {
        let mut m = PolyMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).diff(v));
        m.symmetric = self.symmetric;
        m
    }

    /// `∂_f M`: entry `(i,j)` is `Σ_k ∂M_ij/∂vars[k] · f_k`.
    pub fn directional_derivative(&self, fv: &PolyVector, vars: &[VarIndex]) -> Result<PolyMatrix> {
        if vars.len() != fv.dim() {
            return Err(Error::Dimension(format!(
                "direction has {} components but {} variables were given",
                fv.dim(),
                vars.len()
            )));
        }
        let one = |p: &Polynomial| {
            let mut acc = Polynomial::zero();
            for (k, &v) in vars.iter().enumerate() {
                if fv.get(k).is_zero() {
                    continue;
                }
                let d = p.diff(v);
                if !d.is_zero() {
                    acc = &acc + &(&d * fv.get(k));
                }
            }
            acc
        };
        let m = if self.symmetric {
            PolyMatrix::symmetric_from_upper(self.rows, |r, c| one(self.get(r, c)))
        } else {
            PolyMatrix::from_fn(self.rows, self.cols, |r, c| one(self.get(r, c)))
        };
        Ok(m)
    }

    pub fn remap_vars(&self, f: impl Fn(usize) -> usize + Copy) -> PolyMatrix {
        let mut m = PolyMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c).remap_vars(f));
        m.symmetric = self.symmetric;
        m
    }

    pub fn vars(&self) -> BTreeSet<usize> {
        self.entries.iter().flat_map(|p| p.vars()).collect()
    }

    /// Largest coefficient magnitude of `self - other` across all entries.
    pub fn max_coeff_diff(&self, other: &PolyMatrix) -> Result<f64> {
        let d = self.try_sub(other)?;
        Ok(d.entries.iter().fold(0.0, |a, p| a.max(p.max_abs_coeff())))
    }
}
