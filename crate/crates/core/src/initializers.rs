//! Pipelines that build a friendly starting allocation and hand it to the
//! swap algorithm: 2-EFX from a price-EF1 MPB allocation, (2-1/k)-EFX + PO
//! for `{1,k}` instances, exact EFX for `m <= 2n`, and 4-EFX from a rounded
//! earning-restricted equilibrium.

use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::fairness::{self, efx_factor_of, Factor, FairnessError};
use crate::framework::{
    self, round_robin, run_framework, validate_certificate, zero_factor_trace, CertificateMode, FrameworkError, FriendlyCertificate,
    SwapTrace, Validation,
};
use crate::market::{self, is_mpb_allocation, mpb_price_feasibility, mpb_view, MarketError, RatioConstraintSystem};
use crate::model::{int, ratio, Allocation, Instance, PriceVector, Rational};

/// Default enumeration cap (`2^22` allocations).
pub const DEFAULT_BUDGET: u64 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("enumeration of {n}^{m} allocations exceeds the budget of {budget}")]
    BudgetExceeded { n: usize, m: usize, budget: u64 },
    #[error("no price-EF1 MPB allocation found")]
    NotFound,
    #[error("instance is not bivalued")]
    NotBivalued,
    #[error("least earning {rho} is not below k = {k}")]
    RhoNotLessThanK { rho: Box<Rational>, k: Box<Rational> },
    #[error("{m} chores exceed twice the {n} agents")]
    TooManyChores { n: usize, m: usize },
    #[error("rounded input is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    RoundedInputInvalid(Vec<RoundedViolation>),
    #[error("no assignment of the high-chore bundles satisfies the coupling: {0}")]
    CouplingUnsatisfiable(String),
    #[error("solution fails its own invariants: {0}")]
    InvariantViolation(String),
    #[error("postcondition violated: {0}")]
    PostconditionViolated(String),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

/// MPB allocation that is price-EF1, with `rho` the least earning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pef1Solution {
    pub allocation: Allocation,
    pub prices: PriceVector,
    pub rho: Rational,
}

/// Which price vectors the search may return.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PriceRestriction {
    Any,
    /// Every price must be 1 or `k` (instance normalized to `{1, k}`).
    OneOrK(Rational),
}

struct Pef1Search<'a> {
    inst: &'a Instance,
    restriction: &'a PriceRestriction,
    /// `ratio[j][h][i] = d_ij / d_hj`
    ratio: Vec<Vec<Vec<Rational>>>,
    owner: Vec<usize>,
    bundles: Vec<Vec<usize>>,
    require_nonempty: bool,
}

impl Pef1Search<'_> {
    fn mpb_system(&self, tight: &[Vec<Option<Rational>>]) -> RatioConstraintSystem {
        let n = self.inst.n();
        let mut sys = RatioConstraintSystem::new(n);
        for h in 0..n {
            for i in 0..n {
                if let (Some(c), false) = (&tight[h][i], self.bundles[i].is_empty()) {
                    sys.push(h, i, c.clone());
                }
            }
        }
        sys
    }

    fn dfs(&mut self, j: usize, tight: &[Vec<Option<Rational>>]) -> Option<Vec<Rational>> {
        let (n, m) = (self.inst.n(), self.inst.m());
        if j == m {
            return self.leaf(tight);
        }
        for a in 0..n {
            let mut next = tight.to_vec();
            for i in (0..n).filter(|&i| i != a) {
                let r = &self.ratio[j][a][i];
                if next[a][i].as_ref().is_none_or(|c| r < c) {
                    next[a][i] = Some(r.clone());
                }
            }
            self.owner[j] = a;
            self.bundles[a].push(j);
            let empty = self.bundles.iter().filter(|b| b.is_empty()).count();
            let viable = !(self.require_nonempty && empty > m - j - 1)
                && market::solve_ratio_system(&self.mpb_system(&next)).is_ok();
            if viable {
                if let Some(beta) = self.dfs(j + 1, &next) {
                    return Some(beta);
                }
            }
            self.bundles[a].pop();
        }
        None
    }

    /// Adds the price-EF1 constraints `β_i·A_i <= β_h·B_h` where `A_i` drops
    /// the largest chore of `X_i` and `B_h = d_h(X_h)`.
    fn leaf(&self, tight: &[Vec<Option<Rational>>]) -> Option<Vec<Rational>> {
        let inst = self.inst;
        let n = inst.n();
        let mut sys = self.mpb_system(tight);
        for i in 0..n {
            let b = &self.bundles[i];
            let Some(max) = b.iter().map(|&j| inst.d(i, j)).max() else {
                continue;
            };
            let reduced = inst.cost(i, b) - max;
            if reduced.is_zero() {
                continue;
            }
            for h in (0..n).filter(|&h| h != i) {
                if self.bundles[h].is_empty() {
                    return None;
                }
                sys.push(i, h, inst.cost(h, &self.bundles[h]) / &reduced);
            }
        }
        match self.restriction {
            PriceRestriction::Any => {
                let mut beta = market::solve_ratio_system(&sys).ok()?;
                for (i, b) in beta.iter_mut().enumerate() {
                    if self.bundles[i].is_empty() {
                        *b = Rational::one();
                    }
                }
                Some(beta)
            }
            PriceRestriction::OneOrK(k) => self.restricted_scalars(&sys, k),
        }
    }

    /// Enumerates scalars that keep every price in `{1, k}`.
    fn restricted_scalars(&self, sys: &RatioConstraintSystem, k: &Rational) -> Option<Vec<Rational>> {
        let one = Rational::one();
        let options: Vec<Vec<Rational>> = (0..self.inst.n())
            .map(|i| {
                let b = &self.bundles[i];
                let has_one = b.iter().any(|&j| *self.inst.d(i, j) == one);
                let has_k = b.iter().any(|&j| self.inst.d(i, j) == k);
                match (has_one, has_k) {
                    _ if k == &one => vec![one.clone()],
                    (true, true) | (false, false) => vec![one.clone()],
                    (true, false) => vec![one.clone(), k.clone()],
                    (false, true) => vec![one.clone() / k, one.clone()],
                }
            })
            .collect();
        let mut pick = vec![0usize; options.len()];
        loop {
            let beta: Vec<Rational> = pick.iter().zip(&options).map(|(&t, o)| o[t].clone()).collect();
            if sys.is_satisfied_by(&beta) {
                return Some(beta);
            }
            let mut pos = options.len();
            loop {
                if pos == 0 {
                    return None;
                }
                pos -= 1;
                pick[pos] += 1;
                if pick[pos] < options[pos].len() {
                    break;
                }
                pick[pos] = 0;
            }
        }
    }
}

/// Exhaustive search for an MPB allocation that is price-EF1.
///
/// Allocations are visited in lexicographic owner-vector order and the first
/// hit is returned. Partial assignments whose MPB constraints already form a
/// cycle with product below one are cut, since adding chores only tightens
/// them. When `m >= n` every price-EF1 allocation has nonempty bundles, so
/// assignments that cannot fill every bundle are cut as well.
pub fn search_pef1_mpb_with(inst: &Instance, budget: u64, restriction: &PriceRestriction) -> Result<Pef1Solution, PipelineError> {
    let (n, m) = (inst.n(), inst.m());
    if !fairness::within_budget(n, m, budget) {
        return Err(PipelineError::BudgetExceeded { n, m, budget });
    }
    let ratio = (0..m)
        .map(|j| {
            (0..n)
                .map(|h| (0..n).map(|i| inst.d(i, j) / inst.d(h, j)).collect())
                .collect()
        })
        .collect();
    let mut search = Pef1Search {
        inst,
        restriction,
        ratio,
        owner: vec![0; m],
        bundles: vec![Vec::new(); n],
        require_nonempty: m >= n,
    };
    let tight = vec![vec![None; n]; n];
    let beta = search.dfs(0, &tight).ok_or(PipelineError::NotFound)?;
    let allocation = Allocation::from_owners(n, &search.owner).expect("owners in range");
    let prices = market::prices_from_scalars(inst, &allocation, &beta);
    let rho = allocation
        .bundles()
        .iter()
        .map(|b| prices.total(b))
        .min()
        .unwrap_or_else(Rational::zero);
    Ok(Pef1Solution { allocation, prices, rho })
}

pub fn search_pef1_mpb(inst: &Instance, budget: u64) -> Result<Pef1Solution, PipelineError> {
    search_pef1_mpb_with(inst, budget, &PriceRestriction::Any)
}

fn check_pef1(inst: &Instance, sol: &Pef1Solution) -> Result<(), PipelineError> {
    if !is_mpb_allocation(inst, &sol.allocation, &sol.prices)? {
        return Err(PipelineError::InvariantViolation("allocation is not on MPB".into()));
    }
    if !fairness::is_pefk(inst, &sol.allocation, &sol.prices, &Rational::one(), 1)? {
        return Err(PipelineError::InvariantViolation("allocation is not price-EF1".into()));
    }
    Ok(())
}

/// Rescales each row so that `d_ij = p_j` on held chores and builds the
/// strict 2-EFX-friendly certificate: agents whose most expensive chore costs
/// more than the least earning go to `N_H`.
pub fn certificate_from_pef1(inst: &Instance, sol: &Pef1Solution) -> Result<(Instance, FriendlyCertificate), PipelineError> {
    check_pef1(inst, sol)?;
    let bundles = sol.allocation.bundles();
    if let Some(i) = bundles.iter().position(Vec::is_empty) {
        return Err(FrameworkError::EmptyBundle(i + 1).into());
    }
    let view = mpb_view(inst, &sol.prices)?;
    let mut scaled = inst.clone();
    for (i, a) in view.alpha.iter().enumerate() {
        scaled = scaled.scale_row(i, &(Rational::one() / a));
    }
    let rho = bundles.iter().map(|b| sol.prices.total(b)).min().expect("n >= 1");
    let nh: Vec<usize> = (0..inst.n())
        .filter(|&i| {
            let j = framework::designated_chore(&scaled, i, &bundles[i]).expect("nonempty");
            *sol.prices.get(j) > rho
        })
        .collect();
    let cert = FriendlyCertificate::new(&scaled, &sol.allocation, int(2), &nh, CertificateMode::Strict)?;
    match validate_certificate(&scaled, &sol.allocation, &cert)? {
        Validation::Valid => Ok((scaled, cert)),
        Validation::Violations(v) => Err(PipelineError::InvariantViolation(format!(
            "2-EFX-friendly certificate from a price-EF1 allocation fails: {}",
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
        ))),
    }
}

/// Result of a pipeline. `factor` is always recomputed on the caller's
/// instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub allocation: Allocation,
    pub trace: SwapTrace,
    pub certificate: Option<FriendlyCertificate>,
    pub lambda: Rational,
    pub factor: Factor,
    /// MPB prices for the output, when the pipeline certifies fPO.
    pub prices: Option<PriceVector>,
    pub flags: Vec<String>,
}

impl PipelineOutput {
    pub fn swap_count(&self) -> usize {
        self.trace.swap_count()
    }

    pub fn cert_mode(&self) -> String {
        self.certificate.as_ref().map_or_else(|| "none".into(), |c| c.mode.to_string())
    }
}

fn finish(
    inst: &Instance,
    allocation: Allocation,
    trace: SwapTrace,
    certificate: Option<FriendlyCertificate>,
    lambda: Rational,
    prices: Option<PriceVector>,
    flags: Vec<String>,
) -> Result<PipelineOutput, PipelineError> {
    let factor = fairness::efx_factor(inst, &allocation)?;
    if !factor.at_most(&lambda) {
        return Err(PipelineError::PostconditionViolated(format!(
            "output factor {factor} exceeds {lambda}"
        )));
    }
    Ok(PipelineOutput {
        allocation,
        trace,
        certificate,
        lambda,
        factor,
        prices,
        flags,
    })
}

/// 2-EFX via price-EF1 + MPB search, certificate construction and swaps.
pub fn solve_2efx(inst: &Instance, budget: u64) -> Result<PipelineOutput, PipelineError> {
    let sol = search_pef1_mpb(inst, budget)?;
    let lambda = int(2);
    if sol.allocation.bundles().iter().any(Vec::is_empty) {
        // fewer chores than agents: price-EF1 forces at most one chore each
        let trace = zero_factor_trace(&lambda, &sol.allocation, inst);
        return finish(inst, sol.allocation, trace, None, lambda, Some(sol.prices), vec!["singletons".into()]);
    }
    let (scaled, cert) = certificate_from_pef1(inst, &sol)?;
    let run = run_framework(&scaled, &sol.allocation, &cert)?;
    let prices = mpb_price_feasibility(inst, &run.allocation)?.ok();
    finish(inst, run.allocation, run.trace, Some(cert), lambda, prices, Vec::new())
}

/// (2-1/k)-EFX and PO for instances with two distinct disutility values.
pub fn solve_bivalued(inst: &Instance, budget: u64) -> Result<PipelineOutput, PipelineError> {
    let k = inst.bivalued_ratio().ok_or(PipelineError::NotBivalued)?;
    let norm = inst.normalized();
    let lambda = int(2) - Rational::one() / &k;
    let mut flags = Vec::new();
    let sol = match search_pef1_mpb_with(&norm, budget, &PriceRestriction::OneOrK(k.clone())) {
        Ok(sol) => sol,
        Err(PipelineError::NotFound) => {
            flags.push("fallback-prices".to_string());
            search_pef1_mpb(&norm, budget)?
        }
        Err(e) => return Err(e),
    };
    check_pef1(&norm, &sol)?;
    let x = sol.allocation.clone();

    if efx_factor_of(&norm, &x.bundles()).at_most(&lambda) {
        flags.push("early-exit".into());
        let trace = zero_factor_trace(&lambda, &x, &norm);
        return finish(inst, x, trace, None, lambda, Some(sol.prices), flags);
    }
    if sol.rho >= k {
        return Err(PipelineError::RhoNotLessThanK { rho: Box::new(sol.rho), k: Box::new(k) });
    }
    let bundles = x.bundles();
    let nh: Vec<usize> = (0..norm.n())
        .filter(|&i| {
            framework::designated_chore(&norm, i, &bundles[i])
                .is_some_and(|j| *sol.prices.get(j) > sol.rho)
        })
        .collect();
    let cert = FriendlyCertificate::new(&norm, &x, lambda.clone(), &nh, CertificateMode::Weak { global_minimum: false })?;
    let run = run_framework(&norm, &x, &cert)?;

    let kept = run
        .trace
        .snapshots
        .iter()
        .skip(1)
        .map(|s| is_mpb_allocation(&norm, s, &sol.prices))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .all(|ok| ok);
    let prices = if kept {
        flags.push("mpb-kept".into());
        sol.prices
    } else {
        flags.push("mpb-recomputed".into());
        mpb_price_feasibility(&norm, &run.allocation)?
            .map_err(|c| PipelineError::PostconditionViolated(format!("output lost MPB feasibility (cycle product {})", c.product)))?
    };
    finish(inst, run.allocation, run.trace, Some(cert), lambda, Some(prices), flags)
}

/// Two-phase round robin giving the weakly 1-EFX-friendly start for
/// `n < m <= 2n`, or a plain singleton deal for `m <= n`.
pub fn small_m_start(inst: &Instance) -> Result<Allocation, PipelineError> {
    let (n, m) = (inst.n(), inst.m());
    if m > 2 * n {
        return Err(PipelineError::TooManyChores { n, m });
    }
    let mut x = Allocation::unassigned(n, m);
    let mut pool: Vec<usize> = (0..m).collect();
    let order: Vec<usize> = if m <= n {
        (0..m).collect()
    } else {
        let r = m - n;
        (0..r).rev().chain(0..n).collect()
    };
    for (a, j) in round_robin(inst, &order, &mut pool, &[]) {
        x.assign(j, a);
    }
    Ok(x)
}

/// Exact EFX when `m <= 2n`.
pub fn solve_small_m(inst: &Instance) -> Result<PipelineOutput, PipelineError> {
    let y = small_m_start(inst)?;
    let lambda = Rational::one();
    if inst.m() <= inst.n() {
        let trace = zero_factor_trace(&lambda, &y, inst);
        return finish(inst, y, trace, None, lambda, None, vec!["singletons".into()]);
    }
    let all: Vec<usize> = (0..inst.n()).collect();
    let cert = FriendlyCertificate::new(inst, &y, lambda.clone(), &all, CertificateMode::Weak { global_minimum: false })?;
    let run = run_framework(inst, &y, &cert)?;
    finish(inst, run.allocation, run.trace, Some(cert), lambda, None, Vec::new())
}

/// Rounded earning-restricted equilibrium that passed validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErRoundedInput {
    pub allocation: Allocation,
    pub prices: PriceVector,
    /// Chores priced above one half.
    pub high: Vec<usize>,
}

impl ErRoundedInput {
    pub const EARNING: i64 = 1;

    pub fn beta() -> Rational {
        ratio(1, 2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundedViolation {
    Incomplete,
    PriceLength,
    /// `|X_i ∩ H| <= 2`
    TooManyHigh { agent: usize, count: usize },
    /// Low part of a bundle exceeds its cap (property ii, iii or iv).
    LowPartTooLarge { agent: usize, high: usize, low: Rational, cap: Rational },
    /// `p(X_i) >= 1/2`
    EarningTooSmall { agent: usize, earning: Rational },
    NotMpb,
    /// `d_ij != p_j` on a held chore.
    NotScaled { agent: usize, chore: usize },
}

impl fmt::Display for RoundedViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundedViolation::Incomplete => f.write_str("allocation is incomplete"),
            RoundedViolation::PriceLength => f.write_str("price vector length mismatch"),
            RoundedViolation::TooManyHigh { agent, count } => {
                write!(f, "(i) agent {} holds {count} high chores", agent + 1)
            }
            RoundedViolation::LowPartTooLarge { agent, high, low, cap } => {
                let prop = match high {
                    2 => "(ii)",
                    1 => "(iii)",
                    _ => "(iv)",
                };
                write!(f, "{prop} agent {} low part {low} exceeds {cap}", agent + 1)
            }
            RoundedViolation::EarningTooSmall { agent, earning } => {
                write!(f, "(v) agent {} earns {earning} < 1/2", agent + 1)
            }
            RoundedViolation::NotMpb => f.write_str("allocation is not on MPB"),
            RoundedViolation::NotScaled { agent, chore } => {
                write!(f, "d[{}][{}] differs from its price", agent + 1, chore + 1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundedValidation {
    Valid(ErRoundedInput),
    Violations(Vec<RoundedViolation>),
}

/// Checks the five rounding properties, MPB, and the price scaling of held
/// chores.
pub fn validate_rounded_er(inst: &Instance, x: &Allocation, p: &PriceVector) -> RoundedValidation {
    let mut out = Vec::new();
    if x.n() != inst.n() || x.m() != inst.m() || !x.is_complete() {
        return RoundedValidation::Violations(vec![RoundedViolation::Incomplete]);
    }
    if p.len() != inst.m() {
        return RoundedValidation::Violations(vec![RoundedViolation::PriceLength]);
    }
    let half = ErRoundedInput::beta();
    let high: Vec<usize> = (0..inst.m()).filter(|&j| *p.get(j) > half).collect();
    for (i, b) in x.bundles().iter().enumerate() {
        let count = b.iter().filter(|j| high.contains(j)).count();
        if count > 2 {
            out.push(RoundedViolation::TooManyHigh { agent: i, count });
        }
        let low_part: Vec<usize> = b.iter().copied().filter(|j| !high.contains(j)).collect();
        let low = p.total(&low_part);
        let cap = match count {
            0 => ratio(3, 2),
            1 => int(1),
            _ => ratio(1, 2),
        };
        if count <= 2 && low > cap {
            out.push(RoundedViolation::LowPartTooLarge { agent: i, high: count, low, cap });
        }
        let earning = p.total(b);
        if earning < half {
            out.push(RoundedViolation::EarningTooSmall { agent: i, earning });
        }
        for &j in b {
            if inst.d(i, j) != p.get(j) {
                out.push(RoundedViolation::NotScaled { agent: i, chore: j });
            }
        }
    }
    if !is_mpb_allocation(inst, x, p).unwrap_or(false) {
        out.push(RoundedViolation::NotMpb);
    }
    if out.is_empty() {
        RoundedValidation::Valid(ErRoundedInput {
            allocation: x.clone(),
            prices: p.clone(),
            high,
        })
    } else {
        RoundedValidation::Violations(out)
    }
}

/// Lexicographic successor of a permutation.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Largest `n` for which the bundle-to-agent coupling search runs over all
/// permutations; above it only the identity is tried.
const COUPLING_SEARCH_MAX_AGENTS: usize = 8;

/// 4-EFX from a validated rounded earning-restricted equilibrium.
///
/// High chores are re-dealt by the small-m construction into `Z`; agents
/// receiving a single high chore form `N_H`. The assignment of `Z`'s bundles
/// to agents is searched (identity first) for one that keeps `Z` EFX, keeps
/// the low part of every agent with two or more high chores at most 1, and
/// yields a valid 4-EFX-friendly certificate.
pub fn solve_4efx(inst: &Instance, rounded: &ErRoundedInput) -> Result<PipelineOutput, PipelineError> {
    let input = match validate_rounded_er(inst, &rounded.allocation, &rounded.prices) {
        RoundedValidation::Valid(v) => v,
        RoundedValidation::Violations(v) => return Err(PipelineError::RoundedInputInvalid(v)),
    };
    let (n, m) = (inst.n(), inst.m());
    if m <= 2 * n {
        let mut out = solve_small_m(inst)?;
        out.flags.push("small-m".into());
        return Ok(out);
    }
    let high = &input.high;
    if high.len() > 2 * n {
        return Err(PipelineError::InvariantViolation(format!(
            "{} high chores exceed 2n = {}",
            high.len(),
            2 * n
        )));
    }
    let lambda = int(4);
    let sub = inst.restrict(high);
    let z = solve_small_m(&sub)?.allocation;
    let low_part: Vec<Vec<usize>> = input
        .allocation
        .bundles()
        .iter()
        .map(|b| b.iter().copied().filter(|j| !high.contains(j)).collect())
        .collect();

    // `owner[t]` receives high chore `high[t]`
    let attempt = |owner: &[usize]| -> Result<Result<(Allocation, FriendlyCertificate), String>, PipelineError> {
        let sub_x = Allocation::from_owners(n, owner).expect("owners in range");
        let sub_bundles = sub_x.bundles();
        if !efx_factor_of(&sub, &sub_bundles).at_most(&Rational::one()) {
            return Ok(Err("reassigned Z is not EFX".into()));
        }
        if (0..n).any(|i| sub_bundles[i].len() >= 2 && input.prices.total(&low_part[i]) > Rational::one()) {
            return Ok(Err("low part above 1 for an agent with two high chores".into()));
        }
        let mut y = input.allocation.clone();
        for (t, &i) in owner.iter().enumerate() {
            y.assign(high[t], i);
        }
        let nh: Vec<usize> = (0..n).filter(|&i| sub_bundles[i].len() == 1).collect();
        let cert = match FriendlyCertificate::new(inst, &y, lambda.clone(), &nh, CertificateMode::Strict) {
            Ok(c) => c,
            Err(e) => return Ok(Err(e.to_string())),
        };
        Ok(match validate_certificate(inst, &y, &cert)? {
            Validation::Valid => Ok((y, cert)),
            Validation::Violations(v) => Err(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")),
        })
    };

    let mut tried = 0usize;
    let mut last_reason = String::new();
    let mut found = None;
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        tried += 1;
        // agent i takes bundle perm[i] of Z
        let mut inverse = vec![0; n];
        for (i, &b) in perm.iter().enumerate() {
            inverse[b] = i;
        }
        let owner: Vec<usize> = (0..high.len()).map(|t| inverse[z.owner(t).expect("Z is complete")]).collect();
        match attempt(&owner)? {
            Ok(hit) => {
                found = Some((hit, if tried == 1 { "coupling-identity" } else { "coupling-permuted" }));
                break;
            }
            Err(reason) => last_reason = reason,
        }
        if n > COUPLING_SEARCH_MAX_AGENTS || !next_permutation(&mut perm) {
            break;
        }
    }
    if found.is_none() {
        // any EFX allocation of H may serve as Z
        if fairness::within_budget(n, high.len(), DEFAULT_BUDGET) {
            let mut owner = vec![0usize; high.len()];
            'outer: loop {
                tried += 1;
                match attempt(&owner)? {
                    Ok(hit) => {
                        found = Some((hit, "coupling-enumerated"));
                        break;
                    }
                    Err(reason) => last_reason = reason,
                }
                let mut k = owner.len();
                loop {
                    if k == 0 {
                        break 'outer;
                    }
                    k -= 1;
                    owner[k] += 1;
                    if owner[k] < n {
                        break;
                    }
                    owner[k] = 0;
                }
            }
        } else {
            last_reason += "; full enumeration of H exceeds the budget";
        }
    }
    let Some(((y, cert), how)) = found else {
        return Err(PipelineError::CouplingUnsatisfiable(format!(
            "{tried} assignment(s) tried; last failure: {last_reason}"
        )));
    };
    let run = run_framework(inst, &y, &cert)?;
    let mut flags = vec![how.to_string()];
    if cert.nh.len() == n {
        flags.push("all-single-high".into());
    }
    let prices = mpb_price_feasibility(inst, &run.allocation)?.ok();
    finish(inst, run.allocation, run.trace, Some(cert), lambda, prices, flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::{efx_factor, is_po_bruteforce, PoStatus};

    fn alloc(n: usize, owners: &[usize]) -> Allocation {
        Allocation::from_owners(n, owners).unwrap()
    }

    fn i1() -> Instance {
        Instance::from_ints(&[&[1, 1, 10], &[1, 1, 10]]).unwrap()
    }

    #[test]
    fn search_finds_i1_split() {
        let sol = search_pef1_mpb(&i1(), DEFAULT_BUDGET).unwrap();
        assert_eq!(sol.allocation, alloc(2, &[0, 0, 1]));
        assert_eq!(sol.prices, PriceVector::from_ints(&[1, 1, 10]).unwrap());
        assert_eq!(sol.rho, int(2));
    }

    #[test]
    fn search_single_agent() {
        let inst = Instance::from_ints(&[&[2, 3, 4]]).unwrap();
        let sol = search_pef1_mpb(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(sol.allocation, alloc(1, &[0, 0, 0]));
        assert!(is_mpb_allocation(&inst, &sol.allocation, &sol.prices).unwrap());
    }

    #[test]
    fn search_respects_budget() {
        let inst = Instance::from_ints(&[&[1; 5], &[1; 5]]).unwrap();
        assert_eq!(
            search_pef1_mpb(&inst, 31),
            Err(PipelineError::BudgetExceeded { n: 2, m: 5, budget: 31 })
        );
    }

    #[test]
    fn certificate_for_i1() {
        let inst = i1();
        let sol = search_pef1_mpb(&inst, DEFAULT_BUDGET).unwrap();
        let (scaled, cert) = certificate_from_pef1(&inst, &sol).unwrap();
        assert_eq!(scaled, inst);
        assert_eq!((cert.n0.clone(), cert.nh.clone()), (vec![0], vec![1]));
        assert_eq!(cert.designated, vec![0, 2]);
        assert_eq!(cert.lambda, int(2));
    }

    #[test]
    fn certificate_singletons_and_equal_prices() {
        let inst = Instance::from_ints(&[&[3, 3], &[3, 3]]).unwrap();
        let sol = Pef1Solution {
            allocation: alloc(2, &[0, 1]),
            prices: PriceVector::from_ints(&[3, 3]).unwrap(),
            rho: int(3),
        };
        let (_, cert) = certificate_from_pef1(&inst, &sol).unwrap();
        assert!(cert.nh.is_empty());

        let inst = Instance::from_ints(&[&[2, 2, 3], &[2, 2, 3]]).unwrap();
        let sol = Pef1Solution {
            allocation: alloc(2, &[1, 1, 0]),
            prices: PriceVector::from_ints(&[2, 2, 3]).unwrap(),
            rho: int(3),
        };
        let (_, cert) = certificate_from_pef1(&inst, &sol).unwrap();
        assert!(cert.nh.is_empty());
    }

    #[test]
    fn certificate_rejects_non_pef1() {
        let inst = i1();
        let sol = Pef1Solution {
            allocation: alloc(2, &[0, 0, 0]),
            prices: PriceVector::from_ints(&[1, 1, 10]).unwrap(),
            rho: int(0),
        };
        assert!(matches!(certificate_from_pef1(&inst, &sol), Err(PipelineError::InvariantViolation(_))));
    }

    #[test]
    fn certificate_rescales_rows() {
        // agent 2 values everything at twice agent 1
        let inst = Instance::from_ints(&[&[1, 1, 10], &[2, 2, 20]]).unwrap();
        let sol = search_pef1_mpb(&inst, DEFAULT_BUDGET).unwrap();
        let (scaled, _) = certificate_from_pef1(&inst, &sol).unwrap();
        for (j, o) in sol.allocation.owners().iter().enumerate() {
            assert_eq!(scaled.d(o.unwrap(), j), sol.prices.get(j));
        }
    }

    #[test]
    fn solve_2efx_i1() {
        let out = solve_2efx(&i1(), DEFAULT_BUDGET).unwrap();
        assert_eq!(out.factor, Factor::Finite(ratio(1, 10)));
        assert_eq!(out.swap_count(), 0);
    }

    #[test]
    fn solve_2efx_single_agent_and_few_chores() {
        let one = Instance::from_ints(&[&[5, 1, 2]]).unwrap();
        assert_eq!(solve_2efx(&one, DEFAULT_BUDGET).unwrap().factor, Factor::zero());
        let few = Instance::from_ints(&[&[5], &[1], &[2]]).unwrap();
        let out = solve_2efx(&few, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.factor, Factor::zero());
        assert!(out.flags.contains(&"singletons".to_string()));
    }

    #[test]
    fn bivalued_early_exit() {
        let inst = Instance::from_ints(&[&[1, 1, 2], &[1, 1, 2]]).unwrap();
        let out = solve_bivalued(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.lambda, ratio(3, 2));
        assert_eq!(out.swap_count(), 0);
        assert!(out.factor.at_most(&ratio(3, 2)));
        assert!(is_mpb_allocation(&inst, &out.allocation, out.prices.as_ref().unwrap()).unwrap());
        assert!(out.prices.unwrap().as_slice().iter().all(|p| *p == int(1) || *p == int(2)));
    }

    #[test]
    fn bivalued_k1_is_exact_efx() {
        let inst = Instance::from_ints(&[&[3, 3, 3, 3, 3], &[3, 3, 3, 3, 3]]).unwrap();
        let out = solve_bivalued(&inst, DEFAULT_BUDGET).unwrap();
        assert_eq!(out.lambda, int(1));
        assert!(out.factor.at_most(&int(1)));
    }

    #[test]
    fn bivalued_rejects_three_values() {
        let inst = Instance::from_ints(&[&[1, 2, 3]]).unwrap();
        assert_eq!(solve_bivalued(&inst, DEFAULT_BUDGET), Err(PipelineError::NotBivalued));
    }

    #[test]
    fn bivalued_output_is_po() {
        let inst = Instance::from_ints(&[&[1, 3, 3, 1, 3], &[3, 1, 3, 3, 1], &[1, 1, 3, 3, 3]]).unwrap();
        let out = solve_bivalued(&inst, DEFAULT_BUDGET).unwrap();
        assert!(out.factor.at_most(&ratio(5, 3)));
        assert_eq!(is_po_bruteforce(&inst, &out.allocation, 1 << 20).unwrap(), PoStatus::Po);
    }

    #[test]
    fn small_m_i2() {
        let inst = Instance::from_ints(&[&[1, 2, 3, 4], &[4, 3, 2, 1]]).unwrap();
        assert_eq!(small_m_start(&inst).unwrap(), alloc(2, &[0, 0, 1, 1]));
        let out = solve_small_m(&inst).unwrap();
        assert_eq!(out.factor, Factor::Finite(ratio(2, 7)));
        assert_eq!(out.swap_count(), 0);
    }

    #[test]
    fn small_m_edge_cases() {
        let sq = Instance::from_ints(&[&[4, 1, 2], &[1, 1, 1], &[3, 2, 1]]).unwrap();
        let out = solve_small_m(&sq).unwrap();
        assert_eq!(out.factor, Factor::zero());
        assert!(out.allocation.bundles().iter().all(|b| b.len() == 1));

        let flat = Instance::from_ints(&[&[1; 6], &[1; 6], &[1; 6]]).unwrap();
        let out = solve_small_m(&flat).unwrap();
        assert!(out.allocation.bundles().iter().all(|b| b.len() == 2));
        assert_eq!(out.factor, Factor::Finite(ratio(1, 2)));

        let wide = Instance::from_ints(&[&[1; 5], &[1; 5]]).unwrap();
        assert_eq!(solve_small_m(&wide), Err(PipelineError::TooManyChores { n: 2, m: 5 }));
    }

    /// Two agents; agent 1 holds two high chores, agent 2 holds low chores.
    fn rounded_fixture() -> (Instance, Allocation, PriceVector) {
        // chores: h1 h2 (3/4 each), l1..l3 (1/2 each)
        let p = PriceVector::new(vec![ratio(3, 4), ratio(3, 4), ratio(1, 2), ratio(1, 2), ratio(1, 2)]).unwrap();
        let inst = Instance::new(vec![
            vec![ratio(3, 4), ratio(3, 4), int(1), int(1), int(1)],
            vec![int(1), int(1), ratio(1, 2), ratio(1, 2), ratio(1, 2)],
        ])
        .unwrap();
        (inst, alloc(2, &[0, 0, 1, 1, 1]), p)
    }

    #[test]
    fn rounded_validation() {
        let (inst, x, p) = rounded_fixture();
        let RoundedValidation::Valid(input) = validate_rounded_er(&inst, &x, &p) else {
            panic!("fixture should be valid");
        };
        assert_eq!(input.high, vec![0, 1]);

        // two high chores with low part 3/5
        let row = vec![ratio(3, 4), ratio(3, 4), ratio(1, 2), ratio(1, 10)];
        let p2 = PriceVector::new(row.clone()).unwrap();
        let inst2 = Instance::new(vec![row]).unwrap();
        let RoundedValidation::Violations(v) = validate_rounded_er(&inst2, &alloc(1, &[0, 0, 0, 0]), &p2) else {
            panic!("expected violation");
        };
        assert!(v.iter().any(|v| matches!(v, RoundedViolation::LowPartTooLarge { high: 2, .. })));

        let p3 = PriceVector::new(vec![ratio(3, 4); 3]).unwrap();
        let inst3 = Instance::new(vec![vec![ratio(3, 4); 3]]).unwrap();
        let RoundedValidation::Violations(v) = validate_rounded_er(&inst3, &alloc(1, &[0, 0, 0]), &p3) else {
            panic!("expected violation");
        };
        assert!(v.contains(&RoundedViolation::TooManyHigh { agent: 0, count: 3 }));

        let singles = Instance::new(vec![vec![ratio(1, 2), int(2)], vec![int(1), ratio(3, 2)]]).unwrap();
        let ps = PriceVector::new(vec![ratio(1, 2), ratio(3, 2)]).unwrap();
        assert!(matches!(validate_rounded_er(&singles, &alloc(2, &[0, 1]), &ps), RoundedValidation::Valid(_)));
    }

    #[test]
    fn solve_4efx_fixture() {
        let (inst, x, p) = rounded_fixture();
        let RoundedValidation::Valid(input) = validate_rounded_er(&inst, &x, &p) else {
            panic!("fixture should be valid");
        };
        let out = solve_4efx(&inst, &input).unwrap();
        assert!(out.factor.at_most(&int(4)));
        assert_eq!(efx_factor(&inst, &out.allocation).unwrap(), out.factor);
    }

    #[test]
    fn solve_4efx_rejects_invalid_input() {
        let (inst, x, _) = rounded_fixture();
        let tiny = PriceVector::new(vec![ratio(3, 4), ratio(3, 4), ratio(1, 10), ratio(1, 10), ratio(1, 10)]).unwrap();
        let input = ErRoundedInput { allocation: x, prices: tiny, high: vec![0, 1] };
        assert!(matches!(solve_4efx(&inst, &input), Err(PipelineError::RoundedInputInvalid(_))));
    }

    #[test]
    fn permutations_are_lexicographic() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }
}
