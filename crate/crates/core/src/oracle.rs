//! Brute-force ground truth for desk-scale instances.
//!
//! Nothing here calls the fairness checker: envy ratios are recomputed from
//! scratch on integer-scaled rows so that solver and oracle can disagree.

use std::cmp::Ordering;
use std::io;
use std::ops::RangeInclusive;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fairness::Factor;
use crate::framework::{validate_certificate, CertificateMode, FriendlyCertificate, Invariant, SwapRecord, SwapTrace};
use crate::market::{solve_ratio_system, RatioConstraintSystem};
use crate::model::{int, Allocation, Instance, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration of {n}^{m} allocations exceeds the budget of {budget}")]
    BudgetExceeded { n: usize, m: usize, budget: u64 },
    #[error("no valid certificate after {0} attempts")]
    GenerationBudgetExceeded(usize),
    #[error("invalid generator bounds: {0}")]
    InvalidBounds(String),
    #[error("trace does not match replay: {0}")]
    TraceMismatch(String),
}

fn check_budget(n: usize, m: usize, budget: u64) -> Result<(), OracleError> {
    let mut total: u64 = 1;
    for _ in 0..m {
        total = total.saturating_mul(n as u64);
    }
    if total > budget {
        Err(OracleError::BudgetExceeded { n, m, budget })
    } else {
        Ok(())
    }
}

/// Owner vectors in lexicographic order, chore 0 most significant.
#[derive(Clone, Debug)]
pub struct EnumerationCursor {
    n: usize,
    owner: Vec<usize>,
    position: u64,
    done: bool,
}

impl EnumerationCursor {
    pub fn new(n: usize, m: usize) -> Self {
        EnumerationCursor {
            n,
            owner: vec![0; m],
            position: 0,
            done: n == 0 && m > 0,
        }
    }

    /// Number of owner vectors produced so far.
    pub fn position(&self) -> u64 {
        self.position
    }
}

impl Iterator for EnumerationCursor {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.owner.clone();
        self.position += 1;
        let mut k = self.owner.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.owner[k] += 1;
            if self.owner[k] < self.n {
                break;
            }
            self.owner[k] = 0;
        }
        Some(out)
    }
}

/// Nonnegative fraction or +inf, compared by cross-multiplication.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Frac {
    Val(BigInt, BigInt),
    Inf,
}

impl Frac {
    fn cmp(&self, other: &Frac) -> Ordering {
        match (self, other) {
            (Frac::Inf, Frac::Inf) => Ordering::Equal,
            (Frac::Inf, _) => Ordering::Greater,
            (_, Frac::Inf) => Ordering::Less,
            (Frac::Val(a, b), Frac::Val(c, d)) => (a * d).cmp(&(c * b)),
        }
    }

    fn to_factor(&self) -> Factor {
        match self {
            Frac::Inf => Factor::Infinite,
            Frac::Val(a, b) => Factor::Finite(Rational::new(a.clone(), b.clone())),
        }
    }
}

/// Rows multiplied by the lcm of their denominators.
fn integer_rows(inst: &Instance) -> Vec<Vec<BigInt>> {
    inst.rows()
        .iter()
        .map(|row| {
            let l = row.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
            row.iter().map(|v| v.numer() * (&l / v.denom())).collect()
        })
        .collect()
}

/// Worst EFX ratio of an owner vector, from integer rows.
fn efx_of_owners(rows: &[Vec<BigInt>], owner: &[usize]) -> Frac {
    let n = rows.len();
    let mut worst = Frac::Val(BigInt::zero(), BigInt::one());
    for i in 0..n {
        let mut own = BigInt::zero();
        let mut min: Option<&BigInt> = None;
        let mut seen = vec![BigInt::zero(); n];
        for (j, &o) in owner.iter().enumerate() {
            let v = &rows[i][j];
            seen[o] += v;
            if o == i {
                own += v;
                if min.is_none_or(|mv| v < mv) {
                    min = Some(v);
                }
            }
        }
        let hat = match min {
            Some(mv) => own - mv,
            None => continue,
        };
        if hat.is_zero() {
            continue;
        }
        for (h, other) in seen.iter().enumerate() {
            if h == i {
                continue;
            }
            let r = if other.is_zero() {
                Frac::Inf
            } else {
                Frac::Val(hat.clone(), other.clone())
            };
            if r.cmp(&worst) == Ordering::Greater {
                worst = r;
            }
        }
    }
    worst
}

/// Least EFX factor over all `n^m` complete allocations.
pub fn best_efx_factor(inst: &Instance, budget: u64) -> Result<Rational, OracleError> {
    let (n, m) = (inst.n(), inst.m());
    check_budget(n, m, budget)?;
    let rows = integer_rows(inst);
    if m == 0 || n == 0 {
        return Ok(Rational::zero());
    }
    let best = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut best = Frac::Inf;
            for rest in EnumerationCursor::new(n, m - 1) {
                let mut owner = Vec::with_capacity(m);
                owner.push(first);
                owner.extend(rest);
                let f = efx_of_owners(&rows, &owner);
                if f.cmp(&best) == Ordering::Less {
                    best = f;
                }
            }
            best
        })
        .reduce(|| Frac::Inf, |a, b| if b.cmp(&a) == Ordering::Less { b } else { a });
    match best {
        Frac::Val(a, b) => Ok(Rational::new(a, b)),
        Frac::Inf => unreachable!("a singleton-style allocation always has a finite factor"),
    }
}

/// Scalar system for "some prices make this owner vector MPB and price-EF1".
fn pef1_mpb_system(inst: &Instance, owner: &[usize]) -> Option<RatioConstraintSystem> {
    let n = inst.n();
    let mut bundles = vec![Vec::new(); n];
    for (j, &o) in owner.iter().enumerate() {
        bundles[o].push(j);
    }
    let mut sys = RatioConstraintSystem::new(n);
    for h in 0..n {
        for i in (0..n).filter(|&i| i != h && !bundles[i].is_empty()) {
            for &j in &bundles[h] {
                sys.push(h, i, inst.d(i, j) / inst.d(h, j));
            }
        }
    }
    for i in 0..n {
        let vals: Vec<&Rational> = bundles[i].iter().map(|&j| inst.d(i, j)).collect();
        let Some(max) = vals.iter().max() else { continue };
        let a: Rational = vals.iter().copied().sum::<Rational>() - *max;
        if a.is_zero() {
            continue;
        }
        for h in (0..n).filter(|&h| h != i) {
            if bundles[h].is_empty() {
                return None;
            }
            let b: Rational = bundles[h].iter().map(|&j| inst.d(h, j)).sum();
            sys.push(i, h, b / &a);
        }
    }
    Some(sys)
}

/// Whether some complete allocation admits MPB prices under which it is
/// price-EF1. Plain enumeration, no pruning.
pub fn pef1_mpb_exists(inst: &Instance, budget: u64) -> Result<bool, OracleError> {
    check_budget(inst.n(), inst.m(), budget)?;
    Ok(EnumerationCursor::new(inst.n(), inst.m())
        .any(|owner| pef1_mpb_system(inst, &owner).is_some_and(|sys| solve_ratio_system(&sys).is_ok())))
}

/// Shape of generated certificates.
#[derive(Clone, Debug)]
pub struct GeneratorBounds {
    pub n: RangeInclusive<usize>,
    pub max_m: usize,
    pub lambda: Rational,
    pub mode: CertificateMode,
    pub force_empty_nh: bool,
    pub max_attempts: usize,
}

impl GeneratorBounds {
    pub fn new(n: RangeInclusive<usize>, max_m: usize, lambda: Rational, mode: CertificateMode) -> Self {
        GeneratorBounds {
            n,
            max_m,
            lambda,
            mode,
            force_empty_nh: false,
            max_attempts: 64,
        }
    }
}

/// Instance, allocation and a certificate that validates.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCase {
    pub instance: Instance,
    pub allocation: Allocation,
    pub certificate: FriendlyCertificate,
}

/// Fully random draw; valid only by luck.
fn random_candidate(rng: &mut ChaCha8Rng, b: &GeneratorBounds) -> Option<(Instance, Allocation, Vec<usize>)> {
    let n = rng.gen_range(b.n.clone());
    let m = rng.gen_range(n..=b.max_m.max(n));
    let d: Vec<Vec<Rational>> = (0..n).map(|_| (0..m).map(|_| int(rng.gen_range(1..=20))).collect()).collect();
    let mut owners: Vec<usize> = (0..m).map(|j| if j < n { j } else { rng.gen_range(0..n) }).collect();
    owners.shuffle(rng);
    let nh = if b.force_empty_nh { Vec::new() } else { (0..n).filter(|_| rng.gen_bool(0.5)).collect() };
    Some((Instance::new(d).ok()?, Allocation::from_owners(n, &owners).ok()?, nh))
}

/// Planted draw: expensive designated chores for `N_H`, cheap residuals and
/// equal-size `N_0` bundles, then random row scaling and column shuffle.
fn planted_candidate(rng: &mut ChaCha8Rng, b: &GeneratorBounds) -> Result<(Instance, Allocation, Vec<usize>), OracleError> {
    let n = rng.gen_range(b.n.clone());
    if n == 0 || b.max_m < n {
        return Err(OracleError::InvalidBounds(format!("max_m {} below n {n}", b.max_m)));
    }
    let slack = &b.lambda - Rational::one();
    let nh: Vec<usize> = if b.force_empty_nh { Vec::new() } else { (0..n).filter(|_| rng.gen_bool(0.5)).collect() };
    let max_res = if slack.is_zero() {
        usize::from(b.mode.is_weak())
    } else if slack >= Rational::one() {
        3
    } else {
        2
    };
    let mut res_size: Vec<usize> = (0..n).map(|i| if nh.contains(&i) { rng.gen_range(0..=max_res) } else { 0 }).collect();
    let mut c = rng.gen_range(1..=3usize);
    let n0_count = n - nh.len();
    let total = |c: usize, r: &[usize]| nh.len() + r.iter().sum::<usize>() + n0_count * c;
    while total(c, &res_size) > b.max_m {
        if c > 1 && n0_count > 0 {
            c -= 1;
        } else if let Some(r) = res_size.iter_mut().find(|r| **r > 0) {
            *r -= 1;
        } else {
            break;
        }
    }
    let m = total(c, &res_size);

    // chore layout before shuffling: per agent, designated (if N_H) then residual or N_0 bundle
    let mut owners = Vec::with_capacity(m);
    let mut kind = Vec::with_capacity(m);
    for i in 0..n {
        if nh.contains(&i) {
            owners.push(i);
            kind.push(0u8);
            for t in 0..res_size[i] {
                owners.push(i);
                kind.push(if t == 0 { 2 } else { 1 });
            }
        } else {
            for _ in 0..c {
                owners.push(i);
                kind.push(3);
            }
        }
    }
    let jitter = b.lambda >= Rational::new(3.into(), 2.into());
    let mut d = vec![vec![Rational::zero(); m]; n];
    for (j, (&o, &k)) in owners.iter().zip(&kind).enumerate() {
        for (a, row) in d.iter_mut().enumerate() {
            let v: i64 = match k {
                0 => rng.gen_range(40..=80),
                // first residual chore is the owner's global minimum
                2 if a == o => 1,
                1 | 2 if a == o => rng.gen_range(1..=2),
                1 | 2 => rng.gen_range(1..=20),
                _ if a == o => {
                    if jitter {
                        rng.gen_range(12..=15)
                    } else {
                        12
                    }
                }
                _ => rng.gen_range(12..=30),
            };
            row[j] = int(v);
        }
    }
    for row in &mut d {
        let f = Rational::new(rng.gen_range(1..=4).into(), rng.gen_range(1..=4).into());
        for v in row.iter_mut() {
            *v *= &f;
        }
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let d: Vec<Vec<Rational>> = d.iter().map(|row| perm.iter().map(|&j| row[j].clone()).collect()).collect();
    let owners: Vec<usize> = perm.iter().map(|&j| owners[j]).collect();
    let inst = Instance::new(d).map_err(|e| OracleError::InvalidBounds(e.to_string()))?;
    let x = Allocation::from_owners(n, &owners).map_err(|e| OracleError::InvalidBounds(e.to_string()))?;
    Ok((inst, x, nh))
}

/// Random (instance, allocation, certificate) triple that passes
/// `validate_certificate`. Odd attempts are planted, even attempts are plain
/// rejection samples.
pub fn generate_valid_certificate(seed: u64, bounds: &GeneratorBounds) -> Result<GeneratedCase, OracleError> {
    if bounds.lambda < Rational::one() {
        return Err(OracleError::InvalidBounds(format!("lambda {} below 1", bounds.lambda)));
    }
    if bounds.n.is_empty() || *bounds.n.start() == 0 || bounds.max_m < *bounds.n.end() {
        return Err(OracleError::InvalidBounds(format!("n in {:?} with max_m {}", bounds.n, bounds.max_m)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..bounds.max_attempts {
        let candidate = if attempt % 2 == 0 {
            random_candidate(&mut rng, bounds)
        } else {
            Some(planted_candidate(&mut rng, bounds)?)
        };
        let Some((inst, x, nh)) = candidate else { continue };
        let Ok(cert) = FriendlyCertificate::new(&inst, &x, bounds.lambda.clone(), &nh, bounds.mode) else {
            continue;
        };
        if matches!(validate_certificate(&inst, &x, &cert), Ok(v) if v.is_valid()) {
            return Ok(GeneratedCase {
                instance: inst,
                allocation: x,
                certificate: cert,
            });
        }
    }
    Err(OracleError::GenerationBudgetExceeded(bounds.max_attempts))
}

fn bundle_cost(inst: &Instance, i: usize, owner: &[usize], h: usize) -> Rational {
    owner.iter().enumerate().filter(|(_, &o)| o == h).map(|(j, _)| inst.d(i, j)).sum()
}

fn hat_own(inst: &Instance, i: usize, owner: &[usize]) -> Rational {
    let vals: Vec<&Rational> = owner.iter().enumerate().filter(|(_, &o)| o == i).map(|(j, _)| inst.d(i, j)).collect();
    match vals.iter().min() {
        Some(min) => vals.iter().copied().sum::<Rational>() - *min,
        None => Rational::zero(),
    }
}

fn lambda_efx_for(inst: &Instance, owner: &[usize], i: usize, lambda: &Rational) -> bool {
    let hat = hat_own(inst, i, owner);
    (0..inst.n()).filter(|&h| h != i).all(|h| hat <= lambda * bundle_cost(inst, i, owner, h))
}

/// Replays the swap algorithm from `(y, cert)` and compares it with `trace`.
///
/// Returns `Err(TraceMismatch)` when the recorded picks, swaps or verdicts do
/// not match the replay, `Ok(false)` when they match but an invariant or the
/// final bound fails, and `Ok(true)` otherwise. Snapshots are compared when
/// present; traces read back from a log carry none.
pub fn verify_trace(inst: &Instance, y: &Allocation, cert: &FriendlyCertificate, trace: &SwapTrace) -> Result<bool, OracleError> {
    let mismatch = |s: String| Err(OracleError::TraceMismatch(s));
    let n = inst.n();
    let lambda = &cert.lambda;
    let mut order = cert.nh.clone();
    order.sort_unstable();
    if !trace.order.is_empty() && trace.order != order {
        return mismatch(format!("order {:?} differs from N_H {:?}", trace.order, order));
    }
    let mut owner: Vec<usize> = match y.owners().iter().copied().collect::<Option<Vec<usize>>>() {
        Some(o) => o,
        None => return mismatch("starting allocation is incomplete".into()),
    };

    let mut pool: Vec<usize> = order.iter().map(|&i| cert.designated[i]).collect();
    let mut picks = Vec::new();
    for &a in &order {
        let best = pool
            .iter()
            .copied()
            .min_by(|&x, &z| {
                let own = cert.designated[a];
                inst.d(a, x).cmp(inst.d(a, z)).then((z == own).cmp(&(x == own))).then(x.cmp(&z))
            })
            .expect("pool holds one chore per agent");
        pool.retain(|&j| j != best);
        picks.push((a, best));
        owner[best] = a;
    }
    if picks != trace.phase1_picks {
        return mismatch(format!("picks {:?} differ from replay {:?}", trace.phase1_picks, picks));
    }
    let mut sound = true;
    // earlier pickers weakly prefer their own pick
    for (t, &(a, ja)) in picks.iter().enumerate() {
        for &(_, jb) in &picks[t + 1..] {
            sound &= inst.d(a, ja) <= inst.d(a, jb);
        }
    }
    let snapshot = |owner: &[usize], k: usize| -> Result<(), OracleError> {
        if let Some(s) = trace.snapshots.get(k) {
            let got: Vec<Option<usize>> = owner.iter().map(|&o| Some(o)).collect();
            if s.owners() != got.as_slice() {
                return Err(OracleError::TraceMismatch(format!("snapshot {k} differs from replay")));
            }
        }
        Ok(())
    };
    snapshot(&owner, 0)?;

    let mut swaps = Vec::new();
    let mut verdicts = Vec::new();
    let mut participated = vec![false; n];
    for (t, &i) in order.iter().enumerate() {
        verdicts.push((i, Invariant::Untouched, order[t..].iter().all(|&h| !participated[h])));
        let mut bound = true;
        if !lambda_efx_for(inst, &owner, i, lambda) {
            let partner = (0..n)
                .filter(|&h| h != i)
                .min_by(|&a, &b| bundle_cost(inst, i, &owner, a).cmp(&bundle_cost(inst, i, &owner, b)).then(a.cmp(&b)))
                .expect("someone to envy");
            let chore = picks[t].1;
            sound &= cert.n0.contains(&partner) || order[..t].contains(&partner);
            for o in owner.iter_mut() {
                if *o == partner {
                    *o = i;
                }
            }
            owner[chore] = partner;
            participated[i] = true;
            participated[partner] = true;
            swaps.push(SwapRecord { agent: i, partner, chore });
            let own = if cert.mode.is_weak() {
                hat_own(inst, i, &owner)
            } else {
                bundle_cost(inst, i, &owner, i)
            };
            bound = lambda_efx_for(inst, &owner, i, lambda) && own <= lambda * inst.d(i, chore);
        }
        verdicts.push((i, Invariant::SwapBound, bound));
        let settled = cert.n0.iter().chain(&order[..=t]).all(|&h| lambda_efx_for(inst, &owner, h, lambda));
        verdicts.push((i, Invariant::Settled, settled));
        snapshot(&owner, t + 1)?;
    }
    if swaps != trace.phase2_swaps {
        return mismatch(format!("{} recorded swaps, replay has {}", trace.phase2_swaps.len(), swaps.len()));
    }
    let recorded: Vec<(usize, Invariant, bool)> = trace.invariants.iter().map(|c| (c.agent, c.invariant, c.pass)).collect();
    if recorded != verdicts {
        return mismatch("invariant verdicts differ from replay".into());
    }
    let rows = integer_rows(inst);
    let final_factor = efx_of_owners(&rows, &owner).to_factor();
    if final_factor != trace.final_factor {
        return mismatch(format!("final factor {} differs from replay {final_factor}", trace.final_factor));
    }
    sound &= swaps.len() <= order.len();
    Ok(sound && verdicts.iter().all(|v| v.2) && final_factor.at_most(lambda))
}

/// One `(instance, metric, value)` record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleRow {
    pub instance: String,
    pub metric: String,
    pub value: String,
}

pub fn write_oracle_csv<W: io::Write>(rows: &[OracleRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["instance", "metric", "value"])?;
    for r in rows {
        out.write_record([&r.instance, &r.metric, &r.value])?;
    }
    out.flush()?;
    Ok(())
}

/// Oracle metrics for one instance: best EFX factor and price-EF1 existence.
pub fn oracle_rows(id: &str, inst: &Instance, budget: u64) -> Result<Vec<OracleRow>, OracleError> {
    let row = |metric: &str, value: String| OracleRow {
        instance: id.to_string(),
        metric: metric.to_string(),
        value,
    };
    let best = best_efx_factor(inst, budget)?;
    debug_assert!(!best.is_negative());
    Ok(vec![
        row("best_efx_factor", best.to_string()),
        row("pef1_mpb_exists", pef1_mpb_exists(inst, budget)?.to_string()),
    ])
}
