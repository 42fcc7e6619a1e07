//! Minimum-pain-per-buck machinery.
//!
//! An allocation is MPB-feasible when some positive prices put every chore on
//! its owner's MPB set. Inside a bundle the MPB equalities fix relative prices
//! (`p_j = β_i·d_ij` for a per-agent scalar `β_i`), so feasibility reduces to
//! pairwise constraints `β_h <= c·β_i` between agents, which
//! [`solve_ratio_system`] decides exactly.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::fairness::FairnessError;
use crate::model::{Allocation, Instance, PriceVector, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("price vector has {found} entries for {expected} chores")]
    PriceLengthMismatch { expected: usize, found: usize },
    #[error("agent {0} has an empty bundle")]
    EmptyBundle(usize),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

fn check_prices(inst: &Instance, p: &PriceVector) -> Result<(), MarketError> {
    if p.len() != inst.m() {
        return Err(MarketError::PriceLengthMismatch {
            expected: inst.m(),
            found: p.len(),
        });
    }
    Ok(())
}

/// Per-agent MPB ratio `α_i = min_j d_ij / p_j` and its argmin set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MpbView {
    pub alpha: Vec<Rational>,
    pub mpb_sets: Vec<Vec<usize>>,
}

pub fn mpb_view(inst: &Instance, p: &PriceVector) -> Result<MpbView, MarketError> {
    check_prices(inst, p)?;
    let mut alpha = Vec::with_capacity(inst.n());
    let mut mpb_sets = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let ratios: Vec<Rational> = (0..inst.m()).map(|j| inst.d(i, j) / p.get(j)).collect();
        match ratios.iter().min().cloned() {
            Some(a) => {
                mpb_sets.push((0..inst.m()).filter(|&j| ratios[j] == a).collect());
                alpha.push(a);
            }
            // no chores: every agent is vacuously on MPB
            None => {
                mpb_sets.push(Vec::new());
                alpha.push(Rational::zero());
            }
        }
    }
    Ok(MpbView { alpha, mpb_sets })
}

/// True iff every assigned chore sits in its owner's MPB set. A true result
/// certifies that the allocation is fractionally Pareto optimal.
pub fn is_mpb_allocation(inst: &Instance, x: &Allocation, p: &PriceVector) -> Result<bool, MarketError> {
    crate::fairness::check_shape(inst, x)?;
    let view = mpb_view(inst, p)?;
    Ok(x.owners()
        .iter()
        .enumerate()
        .all(|(j, o)| o.is_none_or(|i| inst.d(i, j) / p.get(j) == view.alpha[i])))
}

/// `value(upper) <= coeff · value(lower)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatioConstraint {
    pub upper: usize,
    pub lower: usize,
    pub coeff: Rational,
}

/// Positive unknowns linked by multiplicative constraints. Feasible iff every
/// directed cycle has coefficient product at least one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RatioConstraintSystem {
    pub variables: usize,
    pub constraints: Vec<RatioConstraint>,
}

impl RatioConstraintSystem {
    pub fn new(variables: usize) -> Self {
        RatioConstraintSystem {
            variables,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, upper: usize, lower: usize, coeff: Rational) {
        self.constraints.push(RatioConstraint { upper, lower, coeff });
    }

    /// Keeps only the tightest coefficient per `(upper, lower)` pair, sorted
    /// by that pair.
    pub fn normalize(&mut self) {
        self.constraints
            .sort_by(|a, b| (a.upper, a.lower, &a.coeff).cmp(&(b.upper, b.lower, &b.coeff)));
        self.constraints
            .dedup_by(|next, kept| next.upper == kept.upper && next.lower == kept.lower);
    }

    pub fn is_satisfied_by(&self, values: &[Rational]) -> bool {
        self.constraints
            .iter()
            .all(|c| values[c.upper] <= &c.coeff * &values[c.lower])
    }
}

/// A cycle of constraints whose coefficient product is below one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfeasibilityCycle {
    pub constraints: Vec<RatioConstraint>,
    pub product: Rational,
}

impl InfeasibilityCycle {
    /// Variables along the cycle, in order.
    pub fn variables(&self) -> Vec<usize> {
        self.constraints.iter().map(|c| c.upper).collect()
    }
}

/// Exact multiplicative Bellman–Ford.
///
/// Labels start at one (an implicit source reaches every variable with
/// coefficient one) and are lowered by `label[u] = min(label[u], c·label[v])`.
/// Stable labels after `V-1` rounds form a positive solution; otherwise a
/// predecessor walk exposes a cycle with product below one.
pub fn solve_ratio_system(sys: &RatioConstraintSystem) -> Result<Vec<Rational>, InfeasibilityCycle> {
    let v = sys.variables;
    let mut order: Vec<&RatioConstraint> = sys.constraints.iter().collect();
    order.sort_by_key(|c| (c.upper, c.lower));
    let mut label = vec![Rational::one(); v];
    let mut pred: Vec<Option<usize>> = vec![None; v];
    let mut last_relaxed = None;
    for _ in 0..=v {
        last_relaxed = None;
        for (idx, c) in order.iter().enumerate() {
            let cand = &c.coeff * &label[c.lower];
            if cand < label[c.upper] {
                label[c.upper] = cand;
                pred[c.upper] = Some(idx);
                last_relaxed = Some(c.upper);
            }
        }
        if last_relaxed.is_none() {
            return Ok(label);
        }
    }
    let Some(mut u) = last_relaxed else {
        return Ok(label);
    };
    // walk back far enough to land inside the predecessor cycle
    for _ in 0..v {
        u = order[pred[u].expect("relaxed vertex has a predecessor")].lower;
    }
    let start = u;
    let mut cycle = Vec::new();
    loop {
        let c = order[pred[u].expect("cycle vertex has a predecessor")];
        cycle.push(c.clone());
        u = c.lower;
        if u == start {
            break;
        }
    }
    let product = cycle.iter().fold(Rational::one(), |acc, c| acc * &c.coeff);
    debug_assert!(product < Rational::one());
    Err(InfeasibilityCycle {
        constraints: cycle,
        product,
    })
}

/// MPB constraints `β_h <= (d_ij/d_hj)·β_i` for every chore `j ∈ X_h` and
/// every other agent `i` with a nonempty bundle, merged to the tightest
/// coefficient per pair.
pub(crate) fn mpb_constraints(inst: &Instance, bundles: &[Vec<usize>]) -> RatioConstraintSystem {
    let mut sys = RatioConstraintSystem::new(inst.n());
    for (h, bh) in bundles.iter().enumerate() {
        for (i, bi) in bundles.iter().enumerate() {
            if i == h || bi.is_empty() {
                continue;
            }
            if let Some(c) = bh.iter().map(|&j| inst.d(i, j) / inst.d(h, j)).min() {
                sys.push(h, i, c);
            }
        }
    }
    sys
}

/// Prices `p_j = β_owner · d_owner,j`.
pub(crate) fn prices_from_scalars(inst: &Instance, x: &Allocation, beta: &[Rational]) -> PriceVector {
    let p = x
        .owners()
        .iter()
        .enumerate()
        .map(|(j, o)| {
            let i = o.expect("complete allocation");
            &beta[i] * inst.d(i, j)
        })
        .collect();
    PriceVector::new(p).expect("positive scalars give positive prices")
}

/// Finds prices making `(X, p)` an MPB allocation, or a cycle of agents
/// proving that none exist.
pub fn mpb_price_feasibility(inst: &Instance, x: &Allocation) -> Result<Result<PriceVector, InfeasibilityCycle>, MarketError> {
    crate::fairness::check_shape(inst, x)?;
    if let Some(j) = x.owners().iter().position(Option::is_none) {
        return Err(FairnessError::IncompleteAllocation(j + 1).into());
    }
    let bundles = x.bundles();
    if let Some(i) = bundles.iter().position(Vec::is_empty) {
        return Err(MarketError::EmptyBundle(i + 1));
    }
    let mut sys = mpb_constraints(inst, &bundles);
    sys.normalize();
    Ok(solve_ratio_system(&sys).map(|beta| prices_from_scalars(inst, x, &beta)))
}
