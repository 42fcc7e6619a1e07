//! Instances, allocations and price vectors.
//!
//! Every numeric quantity is an exact [`Rational`] backed by arbitrary
//! precision integers. Agents and chores are 0-based in memory and 1-based in
//! every file format and diagnostic.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Exact rational number in lowest terms with a positive denominator.
pub type Rational = num_rational::BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `a` or `a/b` (optionally signed). Returns `None` on malformed text
/// or a zero denominator.
pub fn parse_rational(tok: &str) -> Option<Rational> {
    let (num, den) = match tok.split_once('/') {
        Some((a, b)) => (a, b),
        None => (tok, "1"),
    };
    let num = BigInt::from_str(num.trim()).ok()?;
    let den = BigInt::from_str(den.trim()).ok()?;
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: malformed header, expected \"n m\"")]
    MalformedHeader { line: usize },
    #[error("line {line}, column {column}: cannot parse {token:?} as a rational")]
    BadRational {
        line: usize,
        column: usize,
        token: String,
    },
    #[error("row {row} (line {line}, column {column}): disutility must be positive")]
    NonPositiveDisutility {
        row: usize,
        line: usize,
        column: usize,
    },
    #[error("expected {expected} rows of {width} entries, found a mismatch at row {row}")]
    RowCountMismatch {
        expected: usize,
        width: usize,
        row: usize,
    },
    #[error("agent {0} out of range")]
    AgentOutOfRange(usize),
    #[error("chore {0} out of range")]
    ChoreOutOfRange(usize),
    #[error("price {index} must be positive")]
    NonPositivePrice { index: usize },
    #[error("expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// `n` agents, `m` chores and a strictly positive disutility matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    m: usize,
    d: Vec<Vec<Rational>>,
}

impl Instance {
    pub fn new(d: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        Self::with_shape(d.len(), d.first().map_or(0, Vec::len), d)
    }

    /// Like [`Instance::new`] but keeps `m` meaningful when `n` rows are
    /// all empty.
    pub fn with_shape(n: usize, m: usize, d: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        if n == 0 || d.len() != n {
            return Err(ModelError::RowCountMismatch {
                expected: n,
                width: m,
                row: d.len(),
            });
        }
        for (i, row) in d.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::RowCountMismatch {
                    expected: n,
                    width: m,
                    row: i + 1,
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_positive()) {
                return Err(ModelError::NonPositiveDisutility {
                    row: i + 1,
                    line: i + 2,
                    column: j + 1,
                });
            }
        }
        Ok(Instance { n, m, d })
    }

    pub fn from_ints(rows: &[&[i64]]) -> Result<Self, ModelError> {
        Self::new(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self, agent: usize, chore: usize) -> &Rational {
        &self.d[agent][chore]
    }

    pub fn row(&self, agent: usize) -> &[Rational] {
        &self.d[agent]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.d
    }

    /// Additive disutility `d_i(S)`; the empty set costs zero.
    pub fn bundle_disutility(&self, agent: usize, chores: &[usize]) -> Result<Rational, ModelError> {
        if agent >= self.n {
            return Err(ModelError::AgentOutOfRange(agent + 1));
        }
        if let Some(&j) = chores.iter().find(|&&j| j >= self.m) {
            return Err(ModelError::ChoreOutOfRange(j + 1));
        }
        Ok(self.cost(agent, chores))
    }

    /// Unchecked sum used on hot paths where indices are known valid.
    pub(crate) fn cost(&self, agent: usize, chores: &[usize]) -> Rational {
        let row = &self.d[agent];
        chores.iter().fold(Rational::zero(), |acc, &j| acc + &row[j])
    }

    /// Multiplies row `agent` by a positive factor.
    pub fn scale_row(&self, agent: usize, factor: &Rational) -> Instance {
        let mut d = self.d.clone();
        for v in d[agent].iter_mut() {
            *v = &*v * factor;
        }
        Instance { d, ..*self }
    }

    /// Restriction to a subset of chores, in the given order.
    pub fn restrict(&self, chores: &[usize]) -> Instance {
        let d = self
            .d
            .iter()
            .map(|row| chores.iter().map(|&j| row[j].clone()).collect())
            .collect();
        Instance {
            n: self.n,
            m: chores.len(),
            d,
        }
    }

    /// Returns `k` when every entry lies in `{a, a*k}` for some `a > 0`.
    pub fn bivalued_ratio(&self) -> Option<Rational> {
        let mut values: Vec<&Rational> = self.d.iter().flatten().collect();
        values.sort();
        values.dedup();
        match values.as_slice() {
            [] | [_] => Some(Rational::one()),
            [lo, hi] => Some(*hi / *lo),
            _ => None,
        }
    }

    /// The instance divided by its smallest entry, so that a bivalued
    /// instance has entries in `{1, k}`.
    pub fn normalized(&self) -> Instance {
        let Some(min) = self.d.iter().flatten().min().cloned() else {
            return self.clone();
        };
        let d = self
            .d
            .iter()
            .map(|row| row.iter().map(|v| v / &min).collect())
            .collect();
        Instance { d, ..*self }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m);
        for row in &self.d {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

impl FromStr for Instance {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_instance(text)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses the plain-text instance format: optional `#` comment lines, a
/// header `n m`, then `n` rows of `m` positive rationals.
pub fn parse_instance(text: &str) -> Result<Instance, ModelError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(ModelError::MalformedHeader { line: 1 })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| ModelError::MalformedHeader { line: hline })?;
    let [n, m] = dims[..] else {
        return Err(ModelError::MalformedHeader { line: hline });
    };
    if n == 0 {
        return Err(ModelError::MalformedHeader { line: hline });
    }
    if m == 0 {
        if let Some((line, _)) = lines.next() {
            return Err(ModelError::RowCountMismatch { expected: n, width: 0, row: line });
        }
        return Instance::with_shape(n, 0, vec![Vec::new(); n]);
    }
    let mut d = Vec::with_capacity(n);
    for (row, (line, text)) in lines.by_ref().take(n).enumerate() {
        let mut cells = Vec::with_capacity(m);
        for (col, tok) in text.split_whitespace().enumerate() {
            let v = parse_rational(tok).ok_or_else(|| ModelError::BadRational {
                line,
                column: col + 1,
                token: tok.to_string(),
            })?;
            if !v.is_positive() {
                return Err(ModelError::NonPositiveDisutility {
                    row: row + 1,
                    line,
                    column: col + 1,
                });
            }
            cells.push(v);
        }
        if cells.len() != m {
            return Err(ModelError::RowCountMismatch {
                expected: n,
                width: m,
                row: row + 1,
            });
        }
        d.push(cells);
    }
    if d.len() != n || lines.next().is_some() {
        return Err(ModelError::RowCountMismatch {
            expected: n,
            width: m,
            row: d.len() + 1,
        });
    }
    Instance::with_shape(n, m, d)
}

/// Integral (possibly partial) allocation stored as an owner vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Allocation {
    n: usize,
    owner: Vec<Option<usize>>,
}

impl Allocation {
    pub fn new(n: usize, owner: Vec<Option<usize>>) -> Result<Self, ModelError> {
        if let Some(a) = owner.iter().flatten().find(|&&a| a >= n) {
            return Err(ModelError::AgentOutOfRange(a + 1));
        }
        Ok(Allocation { n, owner })
    }

    pub fn unassigned(n: usize, m: usize) -> Self {
        Allocation {
            n,
            owner: vec![None; m],
        }
    }

    /// Complete allocation from a 0-based owner vector.
    pub fn from_owners(n: usize, owners: &[usize]) -> Result<Self, ModelError> {
        Self::new(n, owners.iter().map(|&a| Some(a)).collect())
    }

    /// Builds an allocation from explicit bundles over `m` chores.
    pub fn from_bundles(m: usize, bundles: &[Vec<usize>]) -> Result<Self, ModelError> {
        let mut owner = vec![None; m];
        for (i, b) in bundles.iter().enumerate() {
            for &j in b {
                match owner.get_mut(j) {
                    None => return Err(ModelError::ChoreOutOfRange(j + 1)),
                    Some(slot @ None) => *slot = Some(i),
                    Some(Some(_)) => return Err(ModelError::ChoreOutOfRange(j + 1)),
                }
            }
        }
        Ok(Allocation {
            n: bundles.len(),
            owner,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, chore: usize) -> Option<usize> {
        self.owner[chore]
    }

    pub fn owners(&self) -> &[Option<usize>] {
        &self.owner
    }

    pub fn is_complete(&self) -> bool {
        self.owner.iter().all(Option::is_some)
    }

    pub fn assign(&mut self, chore: usize, agent: usize) {
        self.owner[chore] = Some(agent);
    }

    /// Bundles `X_1..X_n`, chores in ascending index order.
    pub fn bundles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (j, o) in self.owner.iter().enumerate() {
            if let Some(a) = o {
                out[*a].push(j);
            }
        }
        out
    }

    pub fn bundle(&self, agent: usize) -> Vec<usize> {
        (0..self.owner.len())
            .filter(|&j| self.owner[j] == Some(agent))
            .collect()
    }

    /// One line of `m` entries, 1-based agents, `0` for unassigned.
    pub fn to_text(&self) -> String {
        let cells: Vec<String> = self
            .owner
            .iter()
            .map(|o| o.map_or(0, |a| a + 1).to_string())
            .collect();
        cells.join(" ") + "\n"
    }

    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self, ModelError> {
        let toks: Vec<&str> = content_lines(text).flat_map(|(_, l)| l.split_whitespace()).collect();
        if toks.len() != m {
            return Err(ModelError::LengthMismatch {
                expected: m,
                found: toks.len(),
            });
        }
        let mut owner = Vec::with_capacity(m);
        for (col, tok) in toks.iter().enumerate() {
            let a: usize = tok.parse().map_err(|_| ModelError::BadRational {
                line: 1,
                column: col + 1,
                token: tok.to_string(),
            })?;
            owner.push(match a {
                0 => None,
                a if a <= n => Some(a - 1),
                a => return Err(ModelError::AgentOutOfRange(a)),
            });
        }
        Ok(Allocation { n, owner })
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .bundles()
            .iter()
            .map(|b| {
                let c: Vec<String> = b.iter().map(|j| format!("c{}", j + 1)).collect();
                format!("{{{}}}", c.join(","))
            })
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Strictly positive price per chore.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceVector(Vec<Rational>);

impl PriceVector {
    pub fn new(p: Vec<Rational>) -> Result<Self, ModelError> {
        if let Some(index) = p.iter().position(|v| !v.is_positive()) {
            return Err(ModelError::NonPositivePrice { index: index + 1 });
        }
        Ok(PriceVector(p))
    }

    pub fn from_ints(p: &[i64]) -> Result<Self, ModelError> {
        Self::new(p.iter().map(|&v| int(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, chore: usize) -> &Rational {
        &self.0[chore]
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.0
    }

    pub fn total(&self, chores: &[usize]) -> Rational {
        chores.iter().fold(Rational::zero(), |acc, &j| acc + &self.0[j])
    }

    pub fn scaled(&self, c: &Rational) -> PriceVector {
        PriceVector(self.0.iter().map(|v| v * c).collect())
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        cells.join(" ") + "\n"
    }

    pub fn parse(text: &str, m: usize) -> Result<Self, ModelError> {
        let mut p = Vec::with_capacity(m);
        for (line, l) in content_lines(text) {
            for (col, tok) in l.split_whitespace().enumerate() {
                p.push(parse_rational(tok).ok_or_else(|| ModelError::BadRational {
                    line,
                    column: col + 1,
                    token: tok.to_string(),
                })?);
            }
        }
        if p.len() != m {
            return Err(ModelError::LengthMismatch {
                expected: m,
                found: p.len(),
            });
        }
        Self::new(p)
    }
}

/// Value distribution for random instances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// Integers drawn uniformly from `lo..=hi`.
    UniformInt { lo: i64, hi: i64 },
    /// Each entry is 1 or `k` with equal probability.
    Bivalued { k: i64 },
}

impl Distribution {
    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            Distribution::UniformInt { lo, hi } if lo < 1 || hi < lo => Err(
                ModelError::InvalidDistribution(format!("uniform-int:{lo}..{hi} needs 1 <= LO <= HI")),
            ),
            Distribution::Bivalued { k } if k < 1 => Err(ModelError::InvalidDistribution(format!(
                "bivalued:{k} needs k >= 1"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromStr for Distribution {
    type Err = ModelError;

    /// `uniform-int:LO..HI` or `bivalued:K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidDistribution(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let dist = match kind {
            "uniform-int" => {
                let (lo, hi) = arg.split_once("..").ok_or_else(bad)?;
                Distribution::UniformInt {
                    lo: lo.trim().parse().map_err(|_| bad())?,
                    hi: hi.trim().parse().map_err(|_| bad())?,
                }
            }
            "bivalued" => Distribution::Bivalued {
                k: arg.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::UniformInt { lo, hi } => write!(f, "uniform-int:{lo}..{hi}"),
            Distribution::Bivalued { k } => write!(f, "bivalued:{k}"),
        }
    }
}

/// Deterministic random instance for a fixed `(seed, n, m, dist)`.
pub fn generate_random(seed: u64, n: usize, m: usize, dist: &Distribution) -> Result<Instance, ModelError> {
    dist.validate()?;
    if n == 0 {
        return Err(ModelError::InvalidDistribution("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| match *dist {
                    Distribution::UniformInt { lo, hi } => int(rng.gen_range(lo..=hi)),
                    Distribution::Bivalued { k } => int(if rng.gen_bool(0.5) { 1 } else { k }),
                })
                .collect()
        })
        .collect();
    Instance::with_shape(n, m, d)
}
