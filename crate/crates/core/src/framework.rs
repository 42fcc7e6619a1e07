//! Friendly certificates, chore swaps and the two-phase swap algorithm.
//!
//! A certificate splits the agents into `N_0` and `N_H` and designates, for
//! each agent, a highest-disutility chore `j_i` of its bundle with residual
//! `S_i = X_i \ {j_i}`. The swap algorithm first re-allocates the designated
//! chores of `N_H` by round robin, then walks `N_H` in the same order and lets
//! every agent that is not λ-EFX swap with the bundle it envies most.

use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::fairness::{self, agent_efx_factor, efx_factor_of, hat_cost, Factor, FairnessError};
use crate::model::{parse_rational, Allocation, Instance, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameworkError {
    #[error("agent {0} has an empty bundle")]
    EmptyBundle(usize),
    #[error("N_0 and N_H must partition the agents")]
    NotPartition,
    #[error("lambda must be at least 1, got {0}")]
    InvalidLambda(Rational),
    #[error("certificate does not match the allocation: {0}")]
    CertificateMismatch(String),
    #[error("certificate is not valid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    CertificateInvalid(Vec<Violation>),
    #[error("agent {agent} does not hold chore {chore}")]
    ChoreNotHeld { agent: usize, chore: usize },
    #[error("agent {0} cannot swap with itself")]
    SelfSwap(usize),
    #[error("postcondition violated: {reason}")]
    PostconditionViolated { reason: String, trace: Box<SwapTrace> },
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CertificateMode {
    /// Plain disutilities on every left-hand side.
    Strict,
    /// `hat_d` on the left-hand sides. For agents in `N_H` with a nonempty
    /// residual, the cheapest chore of the bundle must lie in `S_i`; with
    /// `global_minimum` the residual must also contain one of the agent's
    /// globally cheapest chores.
    Weak { global_minimum: bool },
}

impl CertificateMode {
    pub fn is_weak(&self) -> bool {
        matches!(self, CertificateMode::Weak { .. })
    }
}

impl fmt::Display for CertificateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertificateMode::Strict => f.write_str("strict"),
            CertificateMode::Weak { global_minimum: false } => f.write_str("weak"),
            CertificateMode::Weak { global_minimum: true } => f.write_str("weak-global"),
        }
    }
}

/// Partition `N_0 ⊔ N_H` plus designated chores for a λ-EFX-friendly claim.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FriendlyCertificate {
    pub lambda: Rational,
    pub n0: Vec<usize>,
    pub nh: Vec<usize>,
    pub designated: Vec<usize>,
    pub residual: Vec<Vec<usize>>,
    pub mode: CertificateMode,
}

/// Highest-disutility chore of a nonempty bundle, lowest index on ties.
pub fn designated_chore(inst: &Instance, agent: usize, bundle: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in bundle {
        if best.is_none_or(|b| inst.d(agent, j) > inst.d(agent, b) || (inst.d(agent, j) == inst.d(agent, b) && j < b)) {
            best = Some(j);
        }
    }
    best
}

impl FriendlyCertificate {
    /// Derives designated chores and residuals from `y`; every agent not in
    /// `nh` goes to `N_0`.
    pub fn new(inst: &Instance, y: &Allocation, lambda: Rational, nh: &[usize], mode: CertificateMode) -> Result<Self, FrameworkError> {
        fairness::check_shape(inst, y)?;
        if lambda < Rational::one() {
            return Err(FrameworkError::InvalidLambda(lambda));
        }
        if let Some(j) = y.owners().iter().position(Option::is_none) {
            return Err(FairnessError::IncompleteAllocation(j + 1).into());
        }
        let mut nh: Vec<usize> = nh.to_vec();
        nh.sort_unstable();
        nh.dedup();
        if nh.iter().any(|&i| i >= inst.n()) {
            return Err(FrameworkError::NotPartition);
        }
        let n0 = (0..inst.n()).filter(|i| !nh.contains(i)).collect();
        let bundles = y.bundles();
        let mut designated = Vec::with_capacity(inst.n());
        let mut residual = Vec::with_capacity(inst.n());
        for (i, b) in bundles.iter().enumerate() {
            let j = designated_chore(inst, i, b).ok_or(FrameworkError::EmptyBundle(i + 1))?;
            designated.push(j);
            residual.push(b.iter().copied().filter(|&c| c != j).collect());
        }
        Ok(FriendlyCertificate {
            lambda,
            n0,
            nh,
            designated,
            residual,
            mode,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    /// `i ∈ N_0` against bundles of `N_0`.
    I,
    /// `i ∈ N_0` against designated chores of `N_H`.
    II,
    /// `i ∈ N_H` residual against bundles of `N_0`.
    III,
    /// `i ∈ N_H` residual against designated chores of `N_H`.
    IV,
    /// Cheapest chore of the bundle lies in the residual.
    BundleMinimum,
    /// Residual meets the agent's globally cheapest chores.
    GlobalMinimum,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::I => "(i)",
            Condition::II => "(ii)",
            Condition::III => "(iii)",
            Condition::IV => "(iv)",
            Condition::BundleMinimum => "bundle-minimum",
            Condition::GlobalMinimum => "global-minimum",
        })
    }
}

/// One failed inequality `lhs <= rhs`, agents 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub condition: Condition,
    pub agent: usize,
    pub other: Option<usize>,
    pub lhs: Rational,
    pub rhs: Rational,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "condition {} fails for agent {}", self.condition, self.agent + 1)?;
        if let Some(o) = self.other {
            write!(f, " vs {}", o + 1)?;
        }
        write!(f, ": {} <= {} is false", self.lhs, self.rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validation {
    Valid,
    Violations(Vec<Violation>),
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }
}

/// Checks every inequality of the (weakly) λ-EFX-friendly conditions exactly.
pub fn validate_certificate(inst: &Instance, x: &Allocation, cert: &FriendlyCertificate) -> Result<Validation, FrameworkError> {
    fairness::check_shape(inst, x)?;
    if let Some(j) = x.owners().iter().position(Option::is_none) {
        return Err(FairnessError::IncompleteAllocation(j + 1).into());
    }
    let n = inst.n();
    let mut seen = vec![0u8; n];
    for &i in cert.n0.iter().chain(&cert.nh) {
        match seen.get_mut(i) {
            Some(s) => *s += 1,
            None => return Err(FrameworkError::NotPartition),
        }
    }
    if seen.iter().any(|&s| s != 1) {
        return Err(FrameworkError::NotPartition);
    }
    if cert.lambda < Rational::one() {
        return Err(FrameworkError::InvalidLambda(cert.lambda.clone()));
    }
    let bundles = x.bundles();
    if cert.designated.len() != n || cert.residual.len() != n {
        return Err(FrameworkError::CertificateMismatch("wrong number of agents".into()));
    }
    if let Some(i) = bundles.iter().position(Vec::is_empty) {
        return Err(FrameworkError::EmptyBundle(i + 1));
    }
    for (i, b) in bundles.iter().enumerate() {
        let j = cert.designated[i];
        let mut expect: Vec<usize> = b.iter().copied().filter(|&c| c != j).collect();
        let mut got = cert.residual[i].clone();
        expect.sort_unstable();
        got.sort_unstable();
        let is_max = b.iter().all(|&c| inst.d(i, c) <= inst.d(i, j));
        if !b.contains(&j) || expect != got || !is_max {
            return Err(FrameworkError::CertificateMismatch(format!(
                "agent {} designated chore {} is not a largest chore of its bundle",
                i + 1,
                j + 1
            )));
        }
    }

    let lambda = &cert.lambda;
    let slack = lambda - Rational::one();
    let weak = cert.mode.is_weak();
    let lhs_of = |i: usize, chores: &[usize]| if weak { hat_cost(inst, i, chores) } else { inst.cost(i, chores) };
    let mut out = Vec::new();
    let mut check = |condition, agent, other, lhs: &Rational, rhs: Rational| {
        if *lhs > rhs {
            out.push(Violation {
                condition,
                agent,
                other: Some(other),
                lhs: lhs.clone(),
                rhs,
            });
        }
    };
    for &i in &cert.n0 {
        let lhs = lhs_of(i, &bundles[i]);
        for &k in &cert.n0 {
            check(Condition::I, i, k, &lhs, lambda * inst.cost(i, &bundles[k]));
        }
        for &h in &cert.nh {
            check(Condition::II, i, h, &lhs, lambda * inst.d(i, cert.designated[h]));
        }
    }
    for &i in &cert.nh {
        let lhs = lhs_of(i, &cert.residual[i]);
        for &k in &cert.n0 {
            check(Condition::III, i, k, &lhs, &slack * inst.cost(i, &bundles[k]));
        }
        for &h in &cert.nh {
            check(Condition::IV, i, h, &lhs, &slack * inst.d(i, cert.designated[h]));
        }
    }
    if let CertificateMode::Weak { global_minimum } = cert.mode {
        for &i in &cert.nh {
            let s = &cert.residual[i];
            if s.is_empty() {
                // singleton bundle, EFX regardless
                continue;
            }
            let bundle_min = bundles[i].iter().map(|&j| inst.d(i, j)).min().expect("nonempty");
            let s_min = s.iter().map(|&j| inst.d(i, j)).min().expect("nonempty");
            if s_min != bundle_min {
                out.push(Violation {
                    condition: Condition::BundleMinimum,
                    agent: i,
                    other: None,
                    lhs: s_min.clone(),
                    rhs: bundle_min.clone(),
                });
            }
            if global_minimum {
                let global = inst.row(i).iter().min().expect("m >= 1");
                if s_min != global {
                    out.push(Violation {
                        condition: Condition::GlobalMinimum,
                        agent: i,
                        other: None,
                        lhs: s_min.clone(),
                        rhs: global.clone(),
                    });
                }
            }
        }
    }
    Ok(if out.is_empty() {
        Validation::Valid
    } else {
        Validation::Violations(out)
    })
}

/// `(i, ℓ)` swap: `i` takes `X_ℓ` and hands `chore` to `ℓ`.
pub fn chore_swap(x: &Allocation, agent: usize, partner: usize, chore: usize) -> Result<Allocation, FrameworkError> {
    if agent == partner {
        return Err(FrameworkError::SelfSwap(agent + 1));
    }
    if chore >= x.m() || x.owner(chore) != Some(agent) {
        return Err(FrameworkError::ChoreNotHeld {
            agent: agent + 1,
            chore: chore + 1,
        });
    }
    let mut out = x.clone();
    for j in 0..x.m() {
        if x.owner(j) == Some(partner) {
            out.assign(j, agent);
        }
    }
    out.assign(chore, partner);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Invariant {
    /// Agents later in the order have not taken part in any swap yet.
    Untouched,
    /// After a swap the swapping agent is λ-EFX and bounded by its chore.
    SwapBound,
    /// `N_0` and every agent processed so far are λ-EFX.
    Settled,
}

impl Invariant {
    pub fn label(&self) -> &'static str {
        match self {
            Invariant::Untouched => "i",
            Invariant::SwapBound => "ii",
            Invariant::Settled => "iii",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "i" => Some(Invariant::Untouched),
            "ii" => Some(Invariant::SwapBound),
            "iii" => Some(Invariant::Settled),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantCheck {
    /// Agent whose iteration this is (0-based).
    pub agent: usize,
    pub invariant: Invariant,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapRecord {
    pub agent: usize,
    pub partner: usize,
    pub chore: usize,
}

/// Everything the swap algorithm did, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapTrace {
    pub lambda: Rational,
    /// `N_H` in processing order.
    pub order: Vec<usize>,
    /// Round-robin picks `(agent, chore)`.
    pub phase1_picks: Vec<(usize, usize)>,
    pub phase2_swaps: Vec<SwapRecord>,
    /// `X^0` after the round robin, then `X^t` after every iteration.
    pub snapshots: Vec<Allocation>,
    pub invariants: Vec<InvariantCheck>,
    pub final_factor: Factor,
}

impl SwapTrace {
    pub fn swap_count(&self) -> usize {
        self.phase2_swaps.len()
    }

    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|c| c.pass)
    }

    /// Line log: `PICK i j`, `SWAP i l j`, `INV i {i|ii|iii} PASS|FAIL` and a
    /// final `FACTOR a/b`, all indices 1-based.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for (a, j) in &self.phase1_picks {
            out += &format!("PICK {} {}\n", a + 1, j + 1);
        }
        let mut swaps = self.phase2_swaps.iter().peekable();
        for check in &self.invariants {
            if check.invariant == Invariant::SwapBound {
                if let Some(s) = swaps.next_if(|s| s.agent == check.agent) {
                    out += &format!("SWAP {} {} {}\n", s.agent + 1, s.partner + 1, s.chore + 1);
                }
            }
            let verdict = if check.pass { "PASS" } else { "FAIL" };
            out += &format!("INV {} {} {}\n", check.agent + 1, check.invariant.label(), verdict);
        }
        for s in swaps {
            out += &format!("SWAP {} {} {}\n", s.agent + 1, s.partner + 1, s.chore + 1);
        }
        out += &format!("FACTOR {}\n", self.final_factor);
        out
    }

    /// Parses [`SwapTrace::to_log`] output. Snapshots are not part of the log
    /// and come back empty; `lambda` must be supplied by the caller.
    pub fn from_log(text: &str, lambda: Rational) -> Result<Self, String> {
        let mut trace = SwapTrace {
            lambda,
            order: Vec::new(),
            phase1_picks: Vec::new(),
            phase2_swaps: Vec::new(),
            snapshots: Vec::new(),
            invariants: Vec::new(),
            final_factor: Factor::zero(),
        };
        let idx = |s: &str| -> Result<usize, String> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .map(|v| v - 1)
                .ok_or_else(|| format!("bad index {s:?}"))
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["PICK", a, j] => {
                    let a = idx(a)?;
                    trace.order.push(a);
                    trace.phase1_picks.push((a, idx(j)?));
                }
                ["SWAP", a, l, j] => trace.phase2_swaps.push(SwapRecord {
                    agent: idx(a)?,
                    partner: idx(l)?,
                    chore: idx(j)?,
                }),
                ["INV", a, which, verdict] => trace.invariants.push(InvariantCheck {
                    agent: idx(a)?,
                    invariant: Invariant::from_label(which).ok_or_else(|| format!("bad invariant {which:?}"))?,
                    pass: match *verdict {
                        "PASS" => true,
                        "FAIL" => false,
                        v => return Err(format!("bad verdict {v:?}")),
                    },
                }),
                ["FACTOR", "inf"] => trace.final_factor = Factor::Infinite,
                ["FACTOR", v] => {
                    trace.final_factor = Factor::Finite(parse_rational(v).ok_or_else(|| format!("bad factor {v:?}"))?)
                }
                _ => return Err(format!("unrecognised trace line {line:?}")),
            }
        }
        Ok(trace)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameworkRun {
    pub allocation: Allocation,
    pub trace: SwapTrace,
}

fn agent_ok(inst: &Instance, bundles: &[Vec<usize>], i: usize, lambda: &Rational) -> bool {
    agent_efx_factor(inst, bundles, i).at_most(lambda)
}

/// Round robin over `pool`: each agent of `order` takes its cheapest
/// remaining chore. Ties go to the agent's entry in `own` if it is among the
/// cheapest, then to the lowest index.
pub(crate) fn round_robin(inst: &Instance, order: &[usize], pool: &mut Vec<usize>, own: &[Option<usize>]) -> Vec<(usize, usize)> {
    let mut picks = Vec::with_capacity(order.len());
    for &a in order {
        let mine = own.get(a).copied().flatten();
        let Some(pos) = (0..pool.len()).min_by(|&x, &y| {
            inst.d(a, pool[x])
                .cmp(inst.d(a, pool[y]))
                .then((Some(pool[y]) == mine).cmp(&(Some(pool[x]) == mine)))
                .then(pool[x].cmp(&pool[y]))
        }) else {
            break;
        };
        picks.push((a, pool.remove(pos)));
    }
    picks
}

/// Turns a valid (weakly) λ-EFX-friendly allocation into a λ-EFX allocation.
///
/// The result is re-verified with the fairness checker and every monitored
/// invariant must pass; any failure is returned as
/// [`FrameworkError::PostconditionViolated`] carrying the full trace.
pub fn run_framework(inst: &Instance, y: &Allocation, cert: &FriendlyCertificate) -> Result<FrameworkRun, FrameworkError> {
    match validate_certificate(inst, y, cert)? {
        Validation::Valid => {}
        Validation::Violations(v) => return Err(FrameworkError::CertificateInvalid(v)),
    }
    let lambda = &cert.lambda;
    let order = cert.nh.clone();

    // Phase 1: set aside designated chores of N_H and re-deal them.
    let mut x = y.clone();
    let mut pool: Vec<usize> = order.iter().map(|&i| cert.designated[i]).collect();
    pool.sort_unstable();
    let own: Vec<Option<usize>> = (0..inst.n()).map(|i| Some(cert.designated[i])).collect();
    let picks = round_robin(inst, &order, &mut pool, &own);
    for &(a, j) in &picks {
        x.assign(j, a);
    }
    let picked: Vec<Option<usize>> = {
        let mut v = vec![None; inst.n()];
        for &(a, j) in &picks {
            v[a] = Some(j);
        }
        v
    };

    let mut trace = SwapTrace {
        lambda: lambda.clone(),
        order: order.clone(),
        phase1_picks: picks,
        phase2_swaps: Vec::new(),
        snapshots: vec![x.clone()],
        invariants: Vec::new(),
        final_factor: Factor::zero(),
    };

    // Phase 2: one pass over N_H in pick order.
    let mut participated = vec![false; inst.n()];
    for (t, &i) in order.iter().enumerate() {
        let untouched = order[t..].iter().all(|&h| !participated[h]);
        trace.invariants.push(InvariantCheck {
            agent: i,
            invariant: Invariant::Untouched,
            pass: untouched,
        });

        let bundles = x.bundles();
        let mut bound_ok = true;
        if !agent_ok(inst, &bundles, i, lambda) {
            let partner = (0..inst.n())
                .filter(|&h| h != i)
                .min_by(|&a, &b| inst.cost(i, &bundles[a]).cmp(&inst.cost(i, &bundles[b])).then(a.cmp(&b)))
                .expect("at least two agents when someone envies");
            let chore = picked[i].expect("every agent of N_H picked");
            x = match chore_swap(&x, i, partner, chore) {
                Ok(next) => next,
                Err(e) => {
                    return Err(FrameworkError::PostconditionViolated {
                        reason: format!("swap at agent {} impossible: {e}", i + 1),
                        trace: Box::new(trace),
                    })
                }
            };
            participated[i] = true;
            participated[partner] = true;
            trace.phase2_swaps.push(SwapRecord {
                agent: i,
                partner,
                chore,
            });
            let after = x.bundles();
            let own = if cert.mode.is_weak() {
                hat_cost(inst, i, &after[i])
            } else {
                inst.cost(i, &after[i])
            };
            bound_ok = agent_ok(inst, &after, i, lambda) && own <= lambda * inst.d(i, chore);
        }
        trace.invariants.push(InvariantCheck {
            agent: i,
            invariant: Invariant::SwapBound,
            pass: bound_ok,
        });

        let bundles = x.bundles();
        let settled = cert
            .n0
            .iter()
            .chain(&order[..=t])
            .all(|&h| agent_ok(inst, &bundles, h, lambda));
        trace.invariants.push(InvariantCheck {
            agent: i,
            invariant: Invariant::Settled,
            pass: settled,
        });
        trace.snapshots.push(x.clone());
    }

    trace.final_factor = efx_factor_of(inst, &x.bundles());
    if !trace.final_factor.at_most(lambda) {
        return Err(FrameworkError::PostconditionViolated {
            reason: format!("final EFX factor {} exceeds {}", trace.final_factor, lambda),
            trace: Box::new(trace),
        });
    }
    if let Some(bad) = trace.invariants.iter().find(|c| !c.pass) {
        return Err(FrameworkError::PostconditionViolated {
            reason: format!("invariant ({}) failed at agent {}", bad.invariant.label(), bad.agent + 1),
            trace: Box::new(trace),
        });
    }
    Ok(FrameworkRun { allocation: x, trace })
}

/// Searches the `2^n` partitions for one that makes `x` (weakly) λ-EFX
/// friendly; `N_H` sets are tried in increasing bitmask order.
pub fn find_certificate(inst: &Instance, x: &Allocation, lambda: &Rational, mode: CertificateMode) -> Result<Option<FriendlyCertificate>, FrameworkError> {
    let n = inst.n();
    if n >= usize::BITS as usize - 1 {
        return Ok(None);
    }
    for mask in 0usize..1 << n {
        let nh: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cert = FriendlyCertificate::new(inst, x, lambda.clone(), &nh, mode)?;
        if validate_certificate(inst, x, &cert)?.is_valid() {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

pub(crate) fn zero_factor_trace(lambda: &Rational, x: &Allocation, inst: &Instance) -> SwapTrace {
    SwapTrace {
        lambda: lambda.clone(),
        order: Vec::new(),
        phase1_picks: Vec::new(),
        phase2_swaps: Vec::new(),
        snapshots: vec![x.clone()],
        invariants: Vec::new(),
        final_factor: if x.is_complete() {
            efx_factor_of(inst, &x.bundles())
        } else {
            Factor::Finite(Rational::zero())
        },
    }
}
