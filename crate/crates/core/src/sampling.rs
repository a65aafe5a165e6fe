//! Axis-aligned boxes and the deterministic point sets used to sample them:
//! a tensor grid, a Halton sequence and seeded uniform draws.

use std::fmt;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A product of closed intervals `[lo_k, hi_k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config(format!(
                "box bounds have {} lower and {} upper values",
                lo.len(),
                hi.len()
            )));
        }
        for (k, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::Config(format!("box interval {k} is [{a}, {b}]")));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    /// The coordinates `range` of this box.
    pub fn project(&self, range: std::ops::Range<usize>) -> BoxDomain {
        BoxDomain {
            lo: self.lo[range.clone()].to_vec(),
            hi: self.hi[range].to_vec(),
        }
    }

    fn affine(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(u, (a, b))| a + (b - a) * u)
            .collect()
    }

    /// Parses `"lo hi"` (applied to every coordinate) or a comma-separated
    /// list of `"lo hi"` pairs, one per coordinate.
    pub fn parse(text: &str, dim: usize) -> Result<BoxDomain> {
        let pairs: Vec<&str> = text.split(',').map(str::trim).collect();
        let parse_pair = |s: &str| -> Result<(f64, f64)> {
            let v: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("cannot parse box interval '{s}'")))?;
            match v.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::Config(format!("box interval '{s}' needs two numbers"))),
            }
        };
        if pairs.len() == 1 {
            let (a, b) = parse_pair(pairs[0])?;
            return BoxDomain::uniform(dim, a, b);
        }
        if pairs.len() != dim {
            return Err(Error::Config(format!(
                "box lists {} intervals for a {}-dimensional state",
                pairs.len(),
                dim
            )));
        }
        let (lo, hi) = pairs.iter().map(|s| parse_pair(s)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        BoxDomain::new(lo, hi)
    }
}

impl fmt::Display for BoxDomain {
    /// Inverse of [`BoxDomain::parse`]; collapses to one pair when uniform.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let uniform = self.lo.iter().all(|&a| a == self.lo[0]) && self.hi.iter().all(|&b| b == self.hi[0]);
        if uniform {
            return write!(f, "{:?} {:?}", self.lo[0], self.hi[0]);
        }
        for (k, (a, b)) in self.lo.iter().zip(&self.hi).enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a:?} {b:?}")?;
        }
        Ok(())
    }
}

/// How many points of each kind to draw from a box.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Grid points per axis (`>= 2` includes both faces).
    pub grid_per_axis: usize,
    /// Maximum number of grid points; larger grids are subsampled.
    pub grid_cap: usize,
    pub halton: usize,
    pub random: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            grid_per_axis: 3,
            grid_cap: 729,
            halton: 2048,
            random: 2048,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// Same composition with every count multiplied by `factor` and a
    /// different seed, for audits that must not reuse training points.
    pub fn denser(&self, factor: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            grid_per_axis: self.grid_per_axis,
            grid_cap: self.grid_cap * factor,
            halton: self.halton * factor,
            random: self.random * factor,
            seed,
        }
    }
}

/// Where a sample point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSource {
    Grid,
    Halton,
    Random,
    Extra,
}

#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub sources: Vec<SampleSource>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, source: SampleSource) -> usize {
        self.sources.iter().filter(|&&s| s == source).count()
    }

    pub fn push(&mut self, point: Vec<f64>, source: SampleSource) {
        self.points.push(point);
        self.sources.push(source);
    }

    /// Grid, then Halton, then uniform random points, in that order.
    pub fn draw(domain: &BoxDomain, cfg: &SamplerConfig) -> SampleSet {
        let mut set = SampleSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for p in grid_points(domain, cfg.grid_per_axis, cfg.grid_cap, &mut rng) {
            set.push(p, SampleSource::Grid);
        }
        // Skip the first Halton points, which cluster near the origin corner.
        let skip = 1 + (cfg.seed % 997) as usize;
        for k in 0..cfg.halton {
            set.push(domain.affine(&halton(k + skip, domain.dim())), SampleSource::Halton);
        }
        for _ in 0..cfg.random {
            let u: Vec<f64> = (0..domain.dim()).map(|_| rng.gen::<f64>()).collect();
            set.push(domain.affine(&u), SampleSource::Random);
        }
        set
    }
}

fn grid_points(domain: &BoxDomain, per_axis: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if per_axis == 0 || cap == 0 {
        return Vec::new();
    }
    let dim = domain.dim();
    let total = (per_axis as f64).powi(dim as i32);
    let levels: Vec<f64> = if per_axis == 1 {
        vec![0.5]
    } else {
        (0..per_axis).map(|k| k as f64 / (per_axis - 1) as f64).collect()
    };
    let decode = |mut idx: usize| -> Vec<f64> {
        let mut u = vec![0.0; dim];
        for slot in u.iter_mut() {
            *slot = levels[idx % per_axis];
            idx /= per_axis;
        }
        domain.affine(&u)
    };
    if total <= cap as f64 {
        (0..total as usize).map(decode).collect()
    } else if total <= usize::MAX as f64 / 2.0 {
        let mut idx = sample_indices(rng, total as usize, cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(decode).collect()
    } else {
        (0..cap)
            .map(|_| {
                let u: Vec<f64> = (0..dim).map(|_| levels[rng.gen_range(0..per_axis)]).collect();
                domain.affine(&u)
            })
            .collect()
    }
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131,
];

/// The `index`-th point of the Halton sequence in `[0,1)^dim`.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let base = if k < PRIMES.len() { PRIMES[k] } else { next_prime_after(k) };
            radical_inverse(index as u64, base)
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn next_prime_after(k: usize) -> u64 {
    let mut count = PRIMES.len();
    let mut c = PRIMES[PRIMES.len() - 1] + 2;
    loop {
        if (2..).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            if count == k {
                return c;
            }
            count += 1;
        }
        c += 2;
    }
}
