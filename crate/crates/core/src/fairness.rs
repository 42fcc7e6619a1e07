//! Exact checkers for EFk, EFX, price-EFk/EFX and Pareto optimality.
//!
//! Conventions for an empty rival bundle: a zero numerator is satisfied
//! (contributes ratio 0), a positive numerator is violated (ratio infinite).

use std::cmp::Ordering;
use std::fmt;
use std::io;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{Allocation, Instance, ModelError, PriceVector, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FairnessError {
    #[error("allocation leaves chore {0} unassigned")]
    IncompleteAllocation(usize),
    #[error("price vector has {found} entries for {expected} chores")]
    PriceLengthMismatch { expected: usize, found: usize },
    #[error("allocation has {found} agents / chores, instance expects {expected}")]
    ShapeMismatch { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Smallest `λ` for which a predicate holds, or unbounded.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    Finite(Rational),
    Infinite,
}

impl Factor {
    pub fn zero() -> Self {
        Factor::Finite(Rational::zero())
    }

    /// `num / den` under the empty-bundle convention.
    pub fn of(num: Rational, den: &Rational) -> Self {
        if num.is_zero() {
            Factor::zero()
        } else if den.is_zero() {
            Factor::Infinite
        } else {
            Factor::Finite(num / den)
        }
    }

    pub fn at_most(&self, lambda: &Rational) -> bool {
        match self {
            Factor::Finite(v) => v <= lambda,
            Factor::Infinite => false,
        }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match self {
            Factor::Finite(v) => Some(v),
            Factor::Infinite => None,
        }
    }

    /// Decimal rendering with `digits` significant digits (presentation only).
    pub fn to_decimal(&self, digits: usize) -> String {
        match self {
            Factor::Finite(v) => decimal(v, digits),
            Factor::Infinite => "inf".into(),
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::Finite(v) => write!(f, "{v}"),
            Factor::Infinite => f.write_str("inf"),
        }
    }
}

/// Rounds half away from zero to `digits` significant digits.
pub fn decimal(v: &Rational, digits: usize) -> String {
    if v.is_zero() {
        return "0".into();
    }
    let neg = v.is_negative();
    let a = v.abs();
    let ten = BigInt::from(10);
    // exponent e with 10^e <= a < 10^(e+1)
    let mut e: i64 = a.to_integer().to_string().len() as i64 - 1;
    if a < Rational::from_integer(BigInt::from(1)) {
        e = -1;
        let mut scaled = a.clone() * Rational::from_integer(ten.clone());
        while scaled < Rational::from_integer(BigInt::from(1)) {
            scaled *= Rational::from_integer(ten.clone());
            e -= 1;
        }
    }
    let frac = (digits as i64 - 1 - e).max(0) as u32;
    let scaled = a * Rational::from_integer(ten.pow(frac));
    let half = Rational::new(BigInt::from(1), BigInt::from(2));
    let mut digits_str = (scaled + half).floor().to_integer().to_string();
    if frac > 0 {
        let frac = frac as usize;
        if digits_str.len() <= frac {
            digits_str = "0".repeat(frac + 1 - digits_str.len()) + &digits_str;
        }
        digits_str.insert(digits_str.len() - frac, '.');
    }
    if neg {
        digits_str.insert(0, '-');
    }
    digits_str
}

pub(crate) fn check_shape(inst: &Instance, x: &Allocation) -> Result<(), FairnessError> {
    if x.n() != inst.n() || x.m() != inst.m() {
        return Err(FairnessError::ShapeMismatch {
            expected: format!("{}x{}", inst.n(), inst.m()),
            found: format!("{}x{}", x.n(), x.m()),
        });
    }
    Ok(())
}

fn complete_bundles(inst: &Instance, x: &Allocation) -> Result<Vec<Vec<usize>>, FairnessError> {
    check_shape(inst, x)?;
    if let Some(j) = x.owners().iter().position(Option::is_none) {
        return Err(FairnessError::IncompleteAllocation(j + 1));
    }
    Ok(x.bundles())
}

fn check_prices(inst: &Instance, p: &PriceVector) -> Result<(), FairnessError> {
    if p.len() != inst.m() {
        return Err(FairnessError::PriceLengthMismatch {
            expected: inst.m(),
            found: p.len(),
        });
    }
    Ok(())
}

/// `d_i(S) - min_{j in S} d_ij`, zero for the empty set. Equals the worst
/// single-chore removal `max_j d_i(S \ {j})`.
pub fn hat_d(inst: &Instance, agent: usize, chores: &[usize]) -> Result<Rational, ModelError> {
    let total = inst.bundle_disutility(agent, chores)?;
    Ok(match chores.iter().map(|&j| inst.d(agent, j)).min() {
        Some(min) => total - min,
        None => total,
    })
}

pub(crate) fn hat_cost(inst: &Instance, agent: usize, chores: &[usize]) -> Rational {
    let total = inst.cost(agent, chores);
    match chores.iter().map(|&j| inst.d(agent, j)).min() {
        Some(min) => total - min,
        None => total,
    }
}

/// Sum of a bundle after dropping its `k` largest values.
fn drop_largest(mut values: Vec<&Rational>, k: usize) -> Rational {
    values.sort();
    let keep = values.len().saturating_sub(k);
    values[..keep].iter().fold(Rational::zero(), |acc, v| acc + *v)
}

/// Smallest `λ` such that `X` is λ-EFX.
pub fn efx_factor(inst: &Instance, x: &Allocation) -> Result<Factor, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    Ok(efx_factor_of(inst, &bundles))
}

pub(crate) fn efx_factor_of(inst: &Instance, bundles: &[Vec<usize>]) -> Factor {
    (0..inst.n())
        .map(|i| agent_efx_factor(inst, bundles, i))
        .max()
        .unwrap_or_else(Factor::zero)
}

/// Worst ratio of agent `i` against every other bundle.
pub(crate) fn agent_efx_factor(inst: &Instance, bundles: &[Vec<usize>], i: usize) -> Factor {
    let num = hat_cost(inst, i, &bundles[i]);
    if num.is_zero() {
        return Factor::zero();
    }
    (0..bundles.len())
        .filter(|&h| h != i)
        .map(|h| Factor::of(num.clone(), &inst.cost(i, &bundles[h])))
        .max()
        .unwrap_or_else(Factor::zero)
}

pub fn is_alpha_efx(inst: &Instance, x: &Allocation, alpha: &Rational) -> Result<bool, FairnessError> {
    Ok(efx_factor(inst, x)?.at_most(alpha))
}

/// λ-EFk: for all `i, h`, `d_i(X_i)` minus its `k` largest chores is at most
/// `α·d_i(X_h)`.
pub fn is_alpha_efk(inst: &Instance, x: &Allocation, alpha: &Rational, k: usize) -> Result<bool, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    for i in 0..inst.n() {
        let lhs = drop_largest(bundles[i].iter().map(|&j| inst.d(i, j)).collect(), k);
        for (h, b) in bundles.iter().enumerate() {
            if h != i && lhs > alpha * inst.cost(i, b) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `p_{-k}(X_i) <= α·p(X_h)` for all `i, h`.
pub fn is_pefk(inst: &Instance, x: &Allocation, p: &PriceVector, alpha: &Rational, k: usize) -> Result<bool, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    check_prices(inst, p)?;
    let earnings: Vec<Rational> = bundles.iter().map(|b| p.total(b)).collect();
    Ok(bundles.iter().enumerate().all(|(i, b)| {
        let lhs = drop_largest(b.iter().map(|&j| p.get(j)).collect(), k);
        earnings
            .iter()
            .enumerate()
            .all(|(h, e)| h == i || lhs <= alpha * e)
    }))
}

/// `p̂(X_i) <= α·p(X_h)` where `p̂` drops the cheapest chore.
pub fn is_pefx(inst: &Instance, x: &Allocation, p: &PriceVector, alpha: &Rational) -> Result<bool, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    check_prices(inst, p)?;
    let earnings: Vec<Rational> = bundles.iter().map(|b| p.total(b)).collect();
    Ok(bundles.iter().enumerate().all(|(i, b)| {
        let lhs = match b.iter().map(|&j| p.get(j)).min() {
            Some(min) => &earnings[i] - min,
            None => Rational::zero(),
        };
        earnings
            .iter()
            .enumerate()
            .all(|(h, e)| h == i || lhs <= alpha * e)
    }))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PoStatus {
    Po,
    Dominated(Allocation),
    BudgetExceeded,
}

/// Exhaustive Pareto-optimality check for desk-scale instances.
///
/// Allocations are visited in lexicographic owner-vector order; the first
/// dominating allocation is returned. A partial assignment is abandoned as
/// soon as some agent's cost exceeds its cost in `X`, which never discards a
/// dominating allocation since disutilities are positive.
pub fn is_po_bruteforce(inst: &Instance, x: &Allocation, budget: u64) -> Result<PoStatus, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    if !within_budget(inst.n(), inst.m(), budget) {
        return Ok(PoStatus::BudgetExceeded);
    }
    let target: Vec<Rational> = (0..inst.n()).map(|i| inst.cost(i, &bundles[i])).collect();
    let mut owner = vec![0usize; inst.m()];
    let mut costs = vec![Rational::zero(); inst.n()];
    Ok(match dominate_dfs(inst, &target, &mut owner, &mut costs, 0) {
        Some(y) => PoStatus::Dominated(Allocation::from_owners(inst.n(), &y)?),
        None => PoStatus::Po,
    })
}

fn dominate_dfs(
    inst: &Instance,
    target: &[Rational],
    owner: &mut [usize],
    costs: &mut [Rational],
    j: usize,
) -> Option<Vec<usize>> {
    if j == owner.len() {
        let strict = costs.iter().zip(target).any(|(c, t)| c.cmp(t) == Ordering::Less);
        return strict.then(|| owner.to_vec());
    }
    for a in 0..inst.n() {
        let next = &costs[a] + inst.d(a, j);
        if next > target[a] {
            continue;
        }
        let prev = std::mem::replace(&mut costs[a], next);
        owner[j] = a;
        if let Some(y) = dominate_dfs(inst, target, owner, costs, j + 1) {
            return Some(y);
        }
        costs[a] = prev;
    }
    None
}

/// `n^m <= budget`, computed without overflow.
pub fn within_budget(n: usize, m: usize, budget: u64) -> bool {
    let mut total: u64 = 1;
    for _ in 0..m {
        total = match total.checked_mul(n as u64) {
            Some(t) if t <= budget => t,
            _ => return false,
        };
    }
    total <= budget
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Notion {
    Efx,
    Efk(usize),
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Notion::Efx => f.write_str("efx"),
            Notion::Efk(k) => write!(f, "ef{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvyEntry {
    pub agent: usize,
    pub rival: usize,
    pub notion: Notion,
    pub numerator: Rational,
    pub denominator: Rational,
    pub ratio: Factor,
}

/// Pairwise envy quantities for every ordered pair of distinct agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvyReport {
    pub entries: Vec<EnvyEntry>,
}

impl EnvyReport {
    pub fn max_ratio(&self) -> Factor {
        self.entries
            .iter()
            .map(|e| e.ratio.clone())
            .max()
            .unwrap_or_else(Factor::zero)
    }

    /// CSV with header `i,h,notion,numerator,denominator,ratio`, 1-based.
    pub fn write_csv<W: io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "h", "notion", "numerator", "denominator", "ratio"])?;
        for e in &self.entries {
            out.write_record([
                (e.agent + 1).to_string(),
                (e.rival + 1).to_string(),
                e.notion.to_string(),
                e.numerator.to_string(),
                e.denominator.to_string(),
                e.ratio.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn envy_report(inst: &Instance, x: &Allocation, notion: Notion) -> Result<EnvyReport, FairnessError> {
    let bundles = complete_bundles(inst, x)?;
    let mut entries = Vec::new();
    for i in 0..inst.n() {
        let numerator = match notion {
            Notion::Efx => hat_cost(inst, i, &bundles[i]),
            Notion::Efk(k) => drop_largest(bundles[i].iter().map(|&j| inst.d(i, j)).collect(), k),
        };
        for h in (0..inst.n()).filter(|&h| h != i) {
            let denominator = inst.cost(i, &bundles[h]);
            entries.push(EnvyEntry {
                agent: i,
                rival: h,
                notion,
                ratio: Factor::of(numerator.clone(), &denominator),
                numerator: numerator.clone(),
                denominator,
            });
        }
    }
    Ok(EnvyReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, ratio};
    use proptest::prelude::*;

    fn i1() -> Instance {
        Instance::from_ints(&[&[1, 1, 10], &[1, 1, 10]]).unwrap()
    }

    fn alloc(n: usize, owners: &[usize]) -> Allocation {
        Allocation::from_owners(n, owners).unwrap()
    }

    /// Direct enumeration of every `(i, h, j)` triple.
    fn efx_brute(inst: &Instance, x: &Allocation) -> Factor {
        let b = x.bundles();
        let mut worst = Factor::zero();
        for i in 0..inst.n() {
            for h in 0..inst.n() {
                if h == i {
                    continue;
                }
                for &j in &b[i] {
                    let rest: Vec<usize> = b[i].iter().copied().filter(|&c| c != j).collect();
                    let f = Factor::of(inst.cost(i, &rest), &inst.cost(i, &b[h]));
                    worst = worst.max(f);
                }
            }
        }
        worst
    }

    #[test]
    fn efx_factor_examples() {
        let inst = i1();
        let x = alloc(2, &[0, 0, 1]);
        assert_eq!(efx_brute(&inst, &x), Factor::Finite(ratio(1, 10)));
        assert_eq!(efx_factor(&inst, &x).unwrap(), Factor::Finite(ratio(1, 10)));
        assert_eq!(efx_factor(&inst, &alloc(2, &[0, 0, 0])).unwrap(), Factor::Infinite);
        let singletons = Instance::from_ints(&[&[3, 1, 2], &[5, 5, 1], &[1, 1, 1]]).unwrap();
        assert_eq!(efx_factor(&singletons, &alloc(3, &[2, 0, 1])).unwrap(), Factor::zero());
    }

    #[test]
    fn efx_requires_complete() {
        let x = Allocation::new(2, vec![Some(0), None, Some(1)]).unwrap();
        assert_eq!(efx_factor(&i1(), &x), Err(FairnessError::IncompleteAllocation(2)));
    }

    #[test]
    fn efk_examples() {
        let inst = i1();
        assert!(is_alpha_efk(&inst, &alloc(2, &[0, 0, 1]), &int(1), 1).unwrap());
        assert!(!is_alpha_efk(&inst, &alloc(2, &[0, 0, 0]), &int(1), 1).unwrap());
        assert!(is_alpha_efk(&inst, &alloc(2, &[0, 0, 0]), &int(0), 3).unwrap());
    }

    #[test]
    fn price_examples() {
        let inst = i1();
        let x = alloc(2, &[0, 0, 1]);
        let p = PriceVector::from_ints(&[1, 1, 10]).unwrap();
        assert!(is_pefk(&inst, &x, &p, &int(1), 1).unwrap());
        assert!(is_pefx(&inst, &x, &p, &int(1)).unwrap());
        let singles = alloc(3, &[1, 2, 0]);
        assert!(is_pefk(&inst_3x3(), &singles, &PriceVector::from_ints(&[4, 1, 9]).unwrap(), &int(0), 1).unwrap());
        let short = PriceVector::from_ints(&[1, 1]).unwrap();
        assert!(matches!(is_pefx(&inst, &x, &short, &int(1)), Err(FairnessError::PriceLengthMismatch { .. })));
    }

    fn inst_3x3() -> Instance {
        Instance::from_ints(&[&[1, 2, 3], &[3, 2, 1], &[2, 2, 2]]).unwrap()
    }

    #[test]
    fn po_examples() {
        let inst = Instance::from_ints(&[&[1, 10], &[10, 1]]).unwrap();
        assert_eq!(
            is_po_bruteforce(&inst, &alloc(2, &[1, 0]), 1 << 20).unwrap(),
            PoStatus::Dominated(alloc(2, &[0, 1]))
        );
        let same = Instance::from_ints(&[&[1, 2], &[1, 2]]).unwrap();
        for owners in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert_eq!(is_po_bruteforce(&same, &alloc(2, &owners), 16).unwrap(), PoStatus::Po);
        }
        let one = Instance::from_ints(&[&[4, 5, 6]]).unwrap();
        assert_eq!(is_po_bruteforce(&one, &alloc(1, &[0, 0, 0]), 1).unwrap(), PoStatus::Po);
        assert_eq!(is_po_bruteforce(&same, &alloc(2, &[0, 1]), 3).unwrap(), PoStatus::BudgetExceeded);
    }

    #[test]
    fn hat_d_examples() {
        let inst = Instance::from_ints(&[&[1, 3, 1, 100]]).unwrap();
        assert_eq!(hat_d(&inst, 0, &[2, 3]).unwrap(), int(100));
        assert_eq!(hat_d(&inst, 0, &[1]).unwrap(), int(0));
        assert_eq!(hat_d(&inst, 0, &[]).unwrap(), int(0));
        assert_eq!(hat_d(&inst, 1, &[]), Err(ModelError::AgentOutOfRange(2)));
    }

    #[test]
    fn envy_report_csv() {
        let report = envy_report(&i1(), &alloc(2, &[0, 0, 1]), Notion::Efx).unwrap();
        assert_eq!(report.max_ratio(), Factor::Finite(ratio(1, 10)));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "i,h,notion,numerator,denominator,ratio\n1,2,efx,1,10,1/10\n2,1,efx,0,2,0\n"
        );
        let empty = envy_report(&i1(), &alloc(2, &[0, 0, 0]), Notion::Efk(1)).unwrap();
        assert_eq!(empty.entries[0].ratio, Factor::Infinite);
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal(&ratio(1, 10), 20), "0.10000000000000000000");
        assert_eq!(decimal(&ratio(2, 7), 20), "0.28571428571428571429");
        assert_eq!(decimal(&int(2), 5), "2.0000");
        assert_eq!(decimal(&ratio(5, 3), 3), "1.67");
        assert_eq!(decimal(&ratio(1, 1000), 2), "0.0010");
        assert_eq!(decimal(&int(0), 20), "0");
        assert_eq!(Factor::Infinite.to_decimal(20), "inf");
    }

    fn arb_case() -> impl Strategy<Value = (Instance, Allocation)> {
        (1usize..4, 0usize..7).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(proptest::collection::vec(1i64..30, m), n),
                proptest::collection::vec(0..n, m),
            )
                .prop_map(move |(rows, owners)| {
                    let d = rows.into_iter().map(|r| r.into_iter().map(int).collect()).collect();
                    (Instance::with_shape(n, m, d).unwrap(), Allocation::from_owners(n, &owners).unwrap())
                })
        })
    }

    /// Minimum over explicit removal sets of size at most `k`.
    fn efk_brute(inst: &Instance, x: &Allocation, alpha: &Rational, k: usize) -> bool {
        let b = x.bundles();
        (0..inst.n()).all(|i| {
            let best = (0u32..1 << b[i].len())
                .filter(|mask| mask.count_ones() as usize <= k)
                .map(|mask| {
                    let rest: Vec<usize> = (0..b[i].len()).filter(|t| mask >> t & 1 == 0).map(|t| b[i][t]).collect();
                    inst.cost(i, &rest)
                })
                .min()
                .unwrap();
            (0..inst.n()).all(|h| h == i || best <= alpha * inst.cost(i, &b[h]))
        })
    }

    proptest! {
        #[test]
        fn efx_factor_matches_triple_enumeration((inst, x) in arb_case()) {
            prop_assert_eq!(efx_factor(&inst, &x).unwrap(), efx_brute(&inst, &x));
        }

        #[test]
        fn factor_threshold_equivalence((inst, x) in arb_case(), a in 0i64..40, b in 1i64..10) {
            let lambda = ratio(a, b);
            let f = efx_factor(&inst, &x).unwrap();
            prop_assert_eq!(f.at_most(&lambda), efk_brute_efx(&inst, &x, &lambda));
        }

        #[test]
        fn efk_shortcut_matches_subsets((inst, x) in arb_case(), a in 0i64..6, b in 1i64..4, k in 0usize..4) {
            let alpha = ratio(a, b);
            prop_assert_eq!(is_alpha_efk(&inst, &x, &alpha, k).unwrap(), efk_brute(&inst, &x, &alpha, k));
        }

        #[test]
        fn po_witness_dominates((inst, x) in arb_case()) {
            if let PoStatus::Dominated(y) = is_po_bruteforce(&inst, &x, 1 << 16).unwrap() {
                let (bx, by) = (x.bundles(), y.bundles());
                let mut strict = false;
                for i in 0..inst.n() {
                    let (cx, cy) = (inst.cost(i, &bx[i]), inst.cost(i, &by[i]));
                    prop_assert!(cy <= cx);
                    strict |= cy < cx;
                }
                prop_assert!(strict);
            }
        }
    }

    /// The λ-EFX predicate stated pair by pair, without the factor.
    fn efk_brute_efx(inst: &Instance, x: &Allocation, lambda: &Rational) -> bool {
        let b = x.bundles();
        (0..inst.n()).all(|i| {
            b[i].iter().all(|&j| {
                let rest: Vec<usize> = b[i].iter().copied().filter(|&c| c != j).collect();
                (0..inst.n()).all(|h| h == i || inst.cost(i, &rest) <= lambda * inst.cost(i, &b[h]))
            })
        })
    }
}
