//! Pattern probability under a distribution with an optional continuous
//! component.
//!
//! A distribution is identified with its multiset of discrete atom
//! probabilities plus the leftover continuous mass q; values never matter.
//! The probability it induces on a pattern is a sum over the ways the
//! pattern's symbols can be realized: every subset of the singleton symbols
//! may be drawn from the continuous part (each such draw is a fresh,
//! never-repeating value), and the remaining symbols map injectively onto
//! discrete atoms:
//!
//! ```text
//! P(ψ) = Σ_{I ⊆ singletons} q^|I| Σ_{f: [m]∖I ↪ atoms} Π_j p_{f(j)}^{μ_j}
//! ```
//!
//! The evaluator collapses this doubly exponential sum: atoms of equal
//! probability are grouped and counted through falling factorials, symbols
//! of equal multiplicity are grouped and counted through binomials, and the
//! subsets I enter only through their size. What remains is a small dynamic
//! program over atom-value groups whose state is the number of still
//! unassigned symbols of each multiplicity class. The same program run on
//! dual numbers yields the exact gradient with respect to every atom and q,
//! which also powers the exact EM E-step elsewhere in the crate.

use std::collections::HashMap;

use serde::Serialize;

use crate::patterns::{Pattern, Profile};
use crate::{Error, Result};

/// Sum of atoms may exceed 1 by at most this much at construction.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probabilities outside [0,1] by at most this much are clamped; larger
/// violations are internal errors.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// A distribution in the monotone simplex: discrete atom probabilities
/// sorted nonincreasing, each in (0,1], summing to at most 1. The deficit
/// 1 − Σpᵢ is the continuous mass q.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    atoms: Vec<f64>,
}

/// Total support size: the number of discrete atoms, or infinite as soon
/// as any continuous mass is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportSize {
    Finite(usize),
    Infinite,
}

impl Distribution {
    /// Builds a distribution from discrete atoms (any order; sorted
    /// internally). The continuous mass is the leftover 1 − Σpᵢ.
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        let mut atoms = atoms;
        let mut sum = 0.0;
        for &a in &atoms {
            if !a.is_finite() || a <= 0.0 || a > 1.0 + MASS_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "atom {a} outside (0, 1]"
                )));
            }
            sum += a;
        }
        if sum > 1.0 + MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "atoms sum to {sum} > 1"
            )));
        }
        atoms.sort_by(|a, b| b.partial_cmp(a).expect("finite atoms"));
        Ok(Self { atoms })
    }

    /// Builds a distribution from atoms and an explicit continuous mass,
    /// validating that the total is 1.
    pub fn with_continuous(atoms: Vec<f64>, q: f64) -> Result<Self> {
        if !q.is_finite() || !(-MASS_TOLERANCE..=1.0 + MASS_TOLERANCE).contains(&q) {
            return Err(Error::InvalidDistribution(format!(
                "continuous mass {q} outside [0, 1]"
            )));
        }
        let sum: f64 = atoms.iter().sum();
        if (sum + q - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "discrete mass {sum} plus continuous mass {q} is not 1"
            )));
        }
        Self::new(atoms)
    }

    /// The uniform distribution over k atoms.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "uniform distribution needs at least one atom");
        Self {
            atoms: vec![1.0 / k as f64; k],
        }
    }

    /// The purely continuous distribution `()`: no atoms, q = 1.
    pub fn continuous() -> Self {
        Self { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// Discrete size k.
    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    /// Total discrete mass p = Σpᵢ.
    pub fn discrete_mass(&self) -> f64 {
        self.atoms.iter().sum::<f64>().min(1.0)
    }

    /// Continuous mass q = 1 − p, clamped to [0, 1] and snapped to 0 when
    /// below the clamping tolerance.
    pub fn continuous_mass(&self) -> f64 {
        let q = (1.0 - self.atoms.iter().sum::<f64>()).clamp(0.0, 1.0);
        if q < CLAMP_TOLERANCE {
            0.0
        } else {
            q
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.continuous_mass() == 0.0
    }

    pub fn total_size(&self) -> SupportSize {
        if self.is_discrete() {
            SupportSize::Finite(self.k())
        } else {
            SupportSize::Infinite
        }
    }

    /// Number of distinct atom probabilities.
    pub fn distinct_values(&self) -> usize {
        distinct_count(&self.atoms, 0.0)
    }
}

/// Count distinct values in a descending-sorted slice, merging values
/// closer than `tol`.
pub(crate) fn distinct_count(sorted_desc: &[f64], tol: f64) -> usize {
    let mut count = 0;
    let mut last = f64::INFINITY;
    for &v in sorted_desc {
        if (last - v).abs() > tol {
            count += 1;
            last = v;
        }
    }
    count
}

/// How a pattern probability was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbMethod {
    ExactSum,
    UniformFastPath,
    BruteForceOracle,
}

/// A pattern probability with its natural log (the log survives underflow
/// for long patterns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternProbability {
    pub value: f64,
    pub ln_value: f64,
    pub method: ProbMethod,
}

impl PatternProbability {
    fn checked(value: f64, ln_value: f64, method: ProbMethod) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Internal(format!("non-finite probability {value}")));
        }
        if value < -CLAMP_TOLERANCE || value > 1.0 + CLAMP_TOLERANCE {
            return Err(Error::Internal(format!(
                "probability {value} outside [0, 1] beyond tolerance"
            )));
        }
        let value = value.clamp(0.0, 1.0);
        let ln_value = ln_value.min(0.0);
        Ok(Self {
            value,
            ln_value,
            method,
        })
    }

    /// Base-2 logarithm of the probability.
    pub fn log2_value(&self) -> f64 {
        self.ln_value / std::f64::consts::LN_2
    }
}

/// Work cap for a single probability evaluation. The guard compares both
/// the nominal injection count k^m̲ · 2^φ₁ and the actual dynamic-program
/// size against `max_work`.
#[derive(Debug, Clone, Copy)]
pub struct EvalBudget {
    pub max_work: f64,
}

impl Default for EvalBudget {
    fn default() -> Self {
        Self { max_work: 1e10 }
    }
}

impl EvalBudget {
    pub fn new(max_work: f64) -> Self {
        Self { max_work }
    }
}

/// Nominal injection count k^m̲ · 2^φ₁ of an evaluation, the quantity the
/// resource guard caps. Zero when no injection exists (m > k).
pub fn injection_work(k: u64, m: u64, phi1: u64) -> f64 {
    let fall = falling_power_f64(k, m);
    if fall == 0.0 {
        return 0.0;
    }
    fall * 2f64.powi(phi1.min(10_000) as i32)
}

/// Number of feasible latent assignments of m symbols (φ₁ of them
/// singletons) into k slots plus a continuous pool:
/// Σ_t C(φ₁,t)·k^{(m−t)}̲. Saturates to +infinity. Unlike the nominal
/// injection count this stays meaningful when m > k.
pub fn assignment_count(k: u64, m: u64, phi1: u64) -> f64 {
    let mut total = 0.0f64;
    for t in 0..=phi1.min(m) {
        total += choose_f64(phi1, t) * falling_power_f64(k, m - t);
        if !total.is_finite() {
            return f64::INFINITY;
        }
    }
    total
}

/// k·(k−1)···(k−l+1) in f64; 0 when l > k; may saturate to +infinity.
pub fn falling_power_f64(k: u64, l: u64) -> f64 {
    if l > k {
        return 0.0;
    }
    let mut out = 1.0f64;
    for i in 0..l {
        out *= (k - i) as f64;
    }
    out
}

/// ln of the falling power k^l̲ (requires l ≤ k).
pub fn ln_falling_power(k: u64, l: u64) -> f64 {
    debug_assert!(l <= k);
    (0..l).map(|i| ((k - i) as f64).ln()).sum()
}

fn choose_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut out = 1.0f64;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// v^e with the convention 0^0 = 1.
fn pow_u(v: f64, e: u64) -> f64 {
    if e == 0 {
        1.0
    } else if v == 0.0 {
        0.0
    } else if e <= i32::MAX as u64 {
        v.powi(e as i32)
    } else {
        v.powf(e as f64)
    }
}

/// Multiplicity classes of a profile: distinct multiplicities with their
/// prevalences, ascending, plus the index of the singleton class if any.
#[derive(Debug, Clone)]
struct Classes {
    mu: Vec<u64>,
    count: Vec<u64>,
    singleton: Option<usize>,
}

impl Classes {
    fn of(profile: &Profile) -> Self {
        let mut mu = Vec::new();
        let mut count = Vec::new();
        for (&m, &c) in profile.prevalences() {
            mu.push(m);
            count.push(c);
        }
        let singleton = mu.iter().position(|&m| m == 1);
        Self {
            mu,
            count,
            singleton,
        }
    }

    fn phi1(&self) -> u64 {
        self.singleton.map(|i| self.count[i]).unwrap_or(0)
    }

    fn m(&self) -> u64 {
        self.count.iter().sum()
    }
}

/// Mixed-radix state indexing over remaining-symbol counts per class.
struct StateSpace {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl StateSpace {
    fn new(classes: &Classes) -> Self {
        let dims: Vec<usize> = classes.count.iter().map(|&c| c as usize + 1).collect();
        let mut strides = vec![0usize; dims.len()];
        let mut acc = 1usize;
        for (i, &d) in dims.iter().enumerate() {
            strides[i] = acc;
            acc = acc.saturating_mul(d);
        }
        Self {
            dims,
            strides,
            total: acc.max(1),
        }
    }

    fn full_index(&self) -> usize {
        self.total - 1
    }

    fn decode(&self, mut index: usize) -> Vec<u64> {
        let mut rem = vec![0u64; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            rem[i] = (index / self.strides[i]) as u64;
            index %= self.strides[i];
        }
        rem
    }
}

/// Distinct atom values with their slot counts, plus the slot index list of
/// each group so per-slot gradients can be recovered.
struct Groups {
    value: Vec<f64>,
    count: Vec<u64>,
    slot_group: Vec<usize>,
}

impl Groups {
    fn of_slots(slots: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by(|&a, &b| slots[b].partial_cmp(&slots[a]).expect("finite slots"));
        let mut value = Vec::new();
        let mut count = Vec::new();
        let mut slot_group = vec![0usize; slots.len()];
        for &slot in &order {
            let v = slots[slot];
            if value.last().map(|&last: &f64| last == v).unwrap_or(false) {
                *count.last_mut().expect("nonempty") += 1;
            } else {
                value.push(v);
                count.push(0);
                *count.last_mut().expect("just pushed") += 1;
            }
            slot_group[slot] = value.len() - 1;
        }
        Self {
            value,
            count,
            slot_group,
        }
    }
}

fn guard(budget: &EvalBudget, k: u64, classes: &Classes, space: &StateSpace, group_counts: &[u64]) -> Result<()> {
    let nominal = injection_work(k, classes.m(), classes.phi1());
    // Actual dynamic-program size: per state, a group of capacity c fans
    // out to at most Π_d (min(c, d_d)+1) allocations. Grouping collapses
    // the nominal injection count, so the evaluation proceeds if either
    // measure fits.
    let states = space.total as f64;
    let mut fanout = 0.0f64;
    for &c in group_counts {
        let mut per_group = 1.0f64;
        for &dim in &space.dims {
            per_group *= (c.min(dim as u64 - 1) + 1) as f64;
        }
        fanout += per_group;
    }
    let dp_work = states * fanout.max(1.0);
    let cheapest = if nominal.is_finite() {
        nominal.min(dp_work)
    } else {
        dp_work
    };
    if cheapest > budget.max_work {
        return Err(Error::ResourceLimit {
            estimated: cheapest,
            cap: budget.max_work,
        });
    }
    Ok(())
}

/// Enumerates allocations `a` (per-class counts given to the current
/// group) with `a[d] ≤ rem[d]` and `Σa ≤ cap`, invoking `f(next_index,
/// ways, exponent)` for each, where `ways = Π C(rem[d], a[d]) · cap^Σa̲`
/// and `exponent = Σ a[d]·μ[d]`.
fn for_each_allocation<F: FnMut(usize, f64, u64)>(
    classes: &Classes,
    space: &StateSpace,
    state: usize,
    rem: &[u64],
    cap: u64,
    f: &mut F,
) {
    fn go<F: FnMut(usize, f64, u64)>(
        classes: &Classes,
        space: &StateSpace,
        rem: &[u64],
        cap: u64,
        d: usize,
        taken: u64,
        index: usize,
        ways: f64,
        exponent: u64,
        f: &mut F,
    ) {
        if d == classes.mu.len() {
            f(index, ways * falling_power_f64(cap, taken), exponent);
            return;
        }
        let max_a = rem[d].min(cap - taken);
        for a in 0..=max_a {
            go(
                classes,
                space,
                rem,
                cap,
                d + 1,
                taken + a,
                index - a as usize * space.strides[d],
                ways * choose_f64(rem[d], a),
                exponent + a * classes.mu[d],
                f,
            );
        }
    }
    go(classes, space, rem, cap, 0, 0, state, 1.0, 0, f);
}

/// Value-only linear-space evaluation. Returns the plain probability,
/// which may underflow for long patterns.
fn eval_linear(groups: &Groups, q: f64, classes: &Classes) -> f64 {
    let space = StateSpace::new(classes);
    let mut cur = vec![0.0f64; space.total];
    cur[space.full_index()] = 1.0;
    for (&v, &c) in groups.value.iter().zip(&groups.count) {
        let mut next = vec![0.0f64; space.total];
        for s in 0..space.total {
            let w = cur[s];
            if w == 0.0 {
                continue;
            }
            let rem = space.decode(s);
            for_each_allocation(classes, &space, s, &rem, c, &mut |idx, ways, e| {
                let factor = ways * pow_u(v, e);
                if factor != 0.0 {
                    next[idx] += w * factor;
                }
            });
        }
        cur = next;
    }
    // Only singleton symbols may remain; each leftover subset draws from
    // the continuous part.
    match classes.singleton {
        None => cur[0],
        Some(si) => {
            let stride = space.strides[si];
            let phi1 = classes.count[si];
            let mut total = cur[0];
            if q > 0.0 {
                for t in 1..=phi1 {
                    total += pow_u(q, t) * cur[t as usize * stride];
                }
            }
            total
        }
    }
}

/// Value-only log-space evaluation for patterns long enough to underflow.
fn eval_log(groups: &Groups, q: f64, classes: &Classes) -> f64 {
    let space = StateSpace::new(classes);
    let mut cur = vec![f64::NEG_INFINITY; space.total];
    cur[space.full_index()] = 0.0;
    for (&v, &c) in groups.value.iter().zip(&groups.count) {
        let ln_v = if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
        let mut next = vec![f64::NEG_INFINITY; space.total];
        for s in 0..space.total {
            let w = cur[s];
            if w == f64::NEG_INFINITY {
                continue;
            }
            let rem = space.decode(s);
            let mut go = |idx: usize, ln_factor: f64| {
                if ln_factor != f64::NEG_INFINITY {
                    next[idx] = log_add_exp(next[idx], w + ln_factor);
                }
            };
            // Re-derive the allocation weights in log space.
            for_each_allocation_log(classes, &space, s, &rem, c, ln_v, &mut go);
        }
        cur = next;
    }
    match classes.singleton {
        None => cur[0],
        Some(si) => {
            let stride = space.strides[si];
            let phi1 = classes.count[si];
            let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
            let mut total = cur[0];
            if ln_q != f64::NEG_INFINITY {
                for t in 1..=phi1 {
                    total = log_add_exp(total, t as f64 * ln_q + cur[t as usize * stride]);
                }
            }
            total
        }
    }
}

fn for_each_allocation_log<F: FnMut(usize, f64)>(
    classes: &Classes,
    space: &StateSpace,
    state: usize,
    rem: &[u64],
    cap: u64,
    ln_v: f64,
    f: &mut F,
) {
    fn go<F: FnMut(usize, f64)>(
        classes: &Classes,
        space: &StateSpace,
        rem: &[u64],
        cap: u64,
        ln_v: f64,
        d: usize,
        taken: u64,
        index: usize,
        ln_ways: f64,
        exponent: u64,
        f: &mut F,
    ) {
        if d == classes.mu.len() {
            let ln_fall = if taken <= cap {
                ln_falling_power(cap, taken)
            } else {
                f64::NEG_INFINITY
            };
            let ln_pow = if exponent == 0 {
                0.0
            } else {
                exponent as f64 * ln_v
            };
            f(index, ln_ways + ln_fall + ln_pow);
            return;
        }
        let max_a = rem[d].min(cap - taken);
        for a in 0..=max_a {
            go(
                classes,
                space,
                rem,
                cap,
                ln_v,
                d + 1,
                taken + a,
                index - a as usize * space.strides[d],
                ln_ways + ln_choose(rem[d], a),
                exponent + a * classes.mu[d],
                f,
            );
        }
    }
    go(classes, space, rem, cap, ln_v, 0, 0, state, 0.0, 0, f);
}

/// Value plus gradient with respect to each distinct slot value and q.
/// Linear space only; intended for the short profiles the numeric search
/// and the exact E-step handle.
struct EvalGrad {
    value: f64,
    grad_group: Vec<f64>,
    grad_q: f64,
}

fn eval_with_grad(groups: &Groups, q: f64, classes: &Classes) -> EvalGrad {
    let space = StateSpace::new(classes);
    let g_count = groups.value.len();
    let mut cur_v = vec![0.0f64; space.total];
    let mut cur_g = vec![vec![0.0f64; space.total]; g_count];
    cur_v[space.full_index()] = 1.0;
    for (gi, (&v, &c)) in groups.value.iter().zip(&groups.count).enumerate() {
        let mut next_v = vec![0.0f64; space.total];
        let mut next_g = vec![vec![0.0f64; space.total]; g_count];
        for s in 0..space.total {
            let w = cur_v[s];
            let any_grad = w != 0.0 || cur_g.iter().any(|g| g[s] != 0.0);
            if !any_grad {
                continue;
            }
            let rem = space.decode(s);
            for_each_allocation(classes, &space, s, &rem, c, &mut |idx, ways, e| {
                let factor = ways * pow_u(v, e);
                // d(v^e)/dv, with the v = 0, e = 1 case kept alive so the
                // ascent can sense currently-zero slots.
                let dfactor = if e == 0 { 0.0 } else { ways * e as f64 * pow_u(v, e - 1) };
                if factor != 0.0 {
                    next_v[idx] += w * factor;
                    for (j, g) in cur_g.iter().enumerate() {
                        if g[s] != 0.0 {
                            next_g[j][idx] += g[s] * factor;
                        }
                    }
                }
                if dfactor != 0.0 && w != 0.0 {
                    next_g[gi][idx] += w * dfactor;
                }
            });
        }
        cur_v = next_v;
        cur_g = next_g;
    }
    let (mut value, mut grad_q) = (0.0, 0.0);
    let mut grad_group = vec![0.0f64; g_count];
    let add_state = |index: usize, q_pow: f64, dq_pow: f64, grad_group: &mut [f64], value: &mut f64, grad_q: &mut f64| {
        *value += q_pow * cur_v[index];
        *grad_q += dq_pow * cur_v[index];
        for (j, g) in cur_g.iter().enumerate() {
            grad_group[j] += q_pow * g[index];
        }
    };
    match classes.singleton {
        None => add_state(0, 1.0, 0.0, &mut grad_group, &mut value, &mut grad_q),
        Some(si) => {
            let stride = space.strides[si];
            let phi1 = classes.count[si];
            for t in 0..=phi1 {
                let q_pow = pow_u(q, t);
                let dq_pow = if t == 0 { 0.0 } else { t as f64 * pow_u(q, t - 1) };
                if q_pow == 0.0 && dq_pow == 0.0 {
                    continue;
                }
                add_state(
                    t as usize * stride,
                    q_pow,
                    dq_pow,
                    &mut grad_group,
                    &mut value,
                    &mut grad_q,
                );
            }
        }
    }
    EvalGrad {
        value,
        grad_group,
        grad_q,
    }
}

/// Slot-level evaluation: the pattern probability plus ∂P/∂pᵢ for every
/// slot and ∂P/∂q. Drives the numeric search, the exact EM E-step, and
/// stationarity diagnostics (at a maximizer the partial derivatives of
/// the supported slots coincide).
pub struct SlotEval {
    pub value: f64,
    pub grad_slots: Vec<f64>,
    pub grad_q: f64,
}

/// Evaluates the pattern probability and its gradient for a raw slot
/// vector (zeros allowed, no ordering required) plus continuous mass q.
pub fn slot_prob_grad(
    slots: &[f64],
    q: f64,
    profile: &Profile,
    budget: &EvalBudget,
) -> Result<SlotEval> {
    let classes = Classes::of(profile);
    let groups = Groups::of_slots(slots);
    let space = StateSpace::new(&classes);
    guard(budget, slots.len() as u64, &classes, &space, &groups.count)?;
    let eval = eval_with_grad(&groups, q, &classes);
    // Equal-valued slots share a group; each slot owns an equal share of
    // the group derivative.
    let grad_slots = groups
        .slot_group
        .iter()
        .map(|&g| eval.grad_group[g] / groups.count[g] as f64)
        .collect();
    Ok(SlotEval {
        value: eval.value,
        grad_slots,
        grad_q: eval.grad_q,
    })
}

/// Value-only variant of [`slot_prob_grad`] for line searches.
pub(crate) fn slot_prob_value(
    slots: &[f64],
    q: f64,
    profile: &Profile,
    budget: &EvalBudget,
) -> Result<f64> {
    let classes = Classes::of(profile);
    let groups = Groups::of_slots(slots);
    let space = StateSpace::new(&classes);
    guard(budget, slots.len() as u64, &classes, &space, &groups.count)?;
    Ok(eval_linear(&groups, q, &classes))
}

/// Exact pattern probability of `p` under `d` (default work budget).
pub fn pattern_prob(d: &Distribution, p: &Pattern) -> Result<PatternProbability> {
    pattern_prob_with_budget(d, p, &EvalBudget::default())
}

pub fn pattern_prob_with_budget(
    d: &Distribution,
    p: &Pattern,
    budget: &EvalBudget,
) -> Result<PatternProbability> {
    profile_prob_with_budget(d, &crate::patterns::profile_of(p), budget)
}

/// Exact probability induced on (any pattern of) a profile. The pattern
/// probability depends on the pattern only through its profile.
pub fn profile_prob(d: &Distribution, f: &Profile) -> Result<PatternProbability> {
    profile_prob_with_budget(d, f, &EvalBudget::default())
}

pub fn profile_prob_with_budget(
    d: &Distribution,
    f: &Profile,
    budget: &EvalBudget,
) -> Result<PatternProbability> {
    let q = d.continuous_mass();
    if d.k() == 0 && q < 1.0 - MASS_TOLERANCE {
        return Err(Error::InvalidDistribution(
            "no atoms but continuous mass below 1".into(),
        ));
    }
    if f.n() == 0 {
        return PatternProbability::checked(1.0, 0.0, ProbMethod::ExactSum);
    }
    // Uniform fast path: under uniform(k) every pattern with m symbols and
    // length n has probability k^m̲ / k^n.
    if q == 0.0 && d.k() > 0 && d.atoms().iter().all(|&a| a == d.atoms()[0]) {
        let (value, ln_value) = uniform_prob_parts(d.k() as u64, f.m(), f.n());
        return PatternProbability::checked(value, ln_value, ProbMethod::UniformFastPath);
    }
    let classes = Classes::of(f);
    let groups = Groups::of_slots(d.atoms());
    let space = StateSpace::new(&classes);
    guard(budget, d.k() as u64, &classes, &space, &groups.count)?;
    let use_log = f.n() > 50;
    let (value, ln_value) = if use_log {
        let ln = eval_log(&groups, q, &classes);
        (ln.exp(), ln)
    } else {
        let v = eval_linear(&groups, q, &classes);
        if v > 0.0 && v < 1e-250 {
            // Underflow territory: recompute the log exactly.
            (v, eval_log(&groups, q, &classes))
        } else {
            (v, if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        }
    };
    PatternProbability::checked(value, ln_value, ProbMethod::ExactSum)
}

fn uniform_prob_parts(k: u64, m: u64, n: u64) -> (f64, f64) {
    if m > k {
        return (0.0, f64::NEG_INFINITY);
    }
    let kf = k as f64;
    let mut value = 1.0f64;
    for i in 0..m {
        value *= (k - i) as f64 / kf;
    }
    value *= (1.0 / kf).powi((n - m) as i32);
    let ln_value = ln_falling_power(k, m) - n as f64 * kf.ln();
    (value, ln_value)
}

/// Probability a uniform distribution over k atoms assigns to any pattern
/// with m symbols and length n: k^m̲ / k^n. Returns 0 when m > k.
pub fn pattern_prob_uniform(k: u64, m: u64, n: u64) -> Result<PatternProbability> {
    if k == 0 {
        return Err(Error::InvalidInput("uniform support size 0".into()));
    }
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "symbol count m={m} must satisfy 1 ≤ m ≤ n={n}"
        )));
    }
    let (value, ln_value) = uniform_prob_parts(k, m, n);
    PatternProbability::checked(value, ln_value, ProbMethod::UniformFastPath)
}

/// Independent brute-force oracle: enumerates every length-n sequence over
/// the discrete support and sums the probabilities of those whose pattern
/// equals `p`. Requires a discrete distribution and k^n ≤ 10⁷.
pub fn pattern_prob_oracle(d: &Distribution, p: &Pattern) -> Result<PatternProbability> {
    let map = oracle_pattern_distribution(d, p.len())?;
    let value = map.get(p).copied().unwrap_or(0.0);
    let ln = if value > 0.0 {
        value.ln()
    } else {
        f64::NEG_INFINITY
    };
    PatternProbability::checked(value, ln, ProbMethod::BruteForceOracle)
}

/// One exhaustive enumeration pass: the full pattern distribution of
/// length-n samples from a discrete distribution. Shared by the oracle and
/// the test sweeps (one pass covers every pattern of that length).
pub fn oracle_pattern_distribution(d: &Distribution, n: usize) -> Result<HashMap<Pattern, f64>> {
    const ORACLE_GUARD: f64 = 1e7;
    if !d.is_discrete() {
        return Err(Error::NotApplicable(
            "brute-force oracle requires a discrete distribution".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty pattern".into()));
    }
    let k = d.k();
    let total = (k as f64).powi(n as i32);
    if total > ORACLE_GUARD {
        return Err(Error::ResourceLimit {
            estimated: total,
            cap: ORACLE_GUARD,
        });
    }
    let atoms = d.atoms();
    let mut out: HashMap<Pattern, f64> = HashMap::new();
    let mut digits = vec![0usize; n];
    let mut first_index = vec![0u32; k];
    let mut indices = vec![0u32; n];
    loop {
        // pattern of the current sequence
        first_index.iter_mut().for_each(|x| *x = 0);
        let mut seen = 0u32;
        let mut prob = 1.0f64;
        for (pos, &dig) in digits.iter().enumerate() {
            if first_index[dig] == 0 {
                seen += 1;
                first_index[dig] = seen;
            }
            indices[pos] = first_index[dig];
            prob *= atoms[dig];
        }
        let pattern = Pattern::new(indices.clone()).expect("first-appearance indices are valid");
        *out.entry(pattern).or_insert(0.0) += prob;
        // odometer
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < k {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::profile_of;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    fn prob(d: &Distribution, p: &str) -> f64 {
        pattern_prob(d, &pat(p)).unwrap().value
    }

    #[test]
    fn paper_intro_examples() {
        let ml = Distribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((prob(&ml, "1 1 2") - 2.0 / 9.0).abs() < 1e-15);
        let half = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!((prob(&half, "1 1 2") - 0.25).abs() < 1e-15);
    }

    #[test]
    fn continuous_all_distinct() {
        let c = Distribution::continuous();
        assert_eq!(prob(&c, "1 2"), 1.0);
        assert_eq!(prob(&c, "1 2 3"), 1.0);
        assert_eq!(prob(&c, "1 1"), 0.0);
    }

    #[test]
    fn two_atom_repeat_pattern() {
        for p1 in [0.3, 0.5, 0.9] {
            let d = Distribution::new(vec![p1, 1.0 - p1]).unwrap();
            let expected = p1 * p1 + (1.0 - p1) * (1.0 - p1);
            assert!((prob(&d, "1 1") - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_distribution_matches_worked_example() {
        // (p1, p2, q): P(11) = p1² + p2², P(12) = 2p1p2 + 2p1q + 2p2q + q².
        let (p1, p2, q) = (0.3, 0.2, 0.5);
        let d = Distribution::with_continuous(vec![p1, p2], q).unwrap();
        assert!((prob(&d, "1 1") - (p1 * p1 + p2 * p2)).abs() < 1e-15);
        let expected12 = 2.0 * p1 * p2 + 2.0 * p1 * q + 2.0 * p2 * q + q * q;
        assert!((prob(&d, "1 2") - expected12).abs() < 1e-15);
        assert!((prob(&d, "1 2") - (1.0 - p1 * p1 - p2 * p2)).abs() < 1e-15);
    }

    #[test]
    fn missing_mass_is_rejected() {
        assert!(Distribution::with_continuous(vec![], 0.5).is_err());
        assert!(Distribution::with_continuous(vec![0.2], 0.5).is_err());
        assert!(Distribution::with_continuous(vec![0.5], 0.5).is_ok());
    }

    #[test]
    fn uniform_fast_path_and_formula_agree() {
        // k^m̲/k^n against the generic evaluator (grouped atoms).
        for (k, profile_pairs) in [
            (3u64, vec![(1u64, 2u64), (2, 1)]),
            (5, vec![(1, 3)]),
            (4, vec![(2, 2)]),
            (12, vec![(2, 10)]),
        ] {
            let f = Profile::new(profile_pairs.into_iter().collect()).unwrap();
            let d = Distribution::uniform(k as usize);
            let classes = Classes::of(&f);
            let groups = Groups::of_slots(d.atoms());
            let direct = eval_linear(&groups, 0.0, &classes);
            let fast = profile_prob(&d, &f).unwrap();
            assert_eq!(fast.method, ProbMethod::UniformFastPath);
            assert!(
                (direct - fast.value).abs() <= 1e-12 * fast.value.max(1e-300),
                "k={k} {f}: {direct} vs {}",
                fast.value
            );
        }
    }

    #[test]
    fn uniform_examples() {
        let p = pattern_prob_uniform(12, 10, 20).unwrap();
        let expected = falling_power_f64(12, 10) / 12f64.powi(20);
        assert!((p.value - expected).abs() < 1e-25);

        let p = pattern_prob_uniform(2, 2, 4).unwrap();
        assert!((p.value - 1.0 / 8.0).abs() < 1e-15);

        let p = pattern_prob_uniform(5, 3, 4).unwrap();
        assert!((p.value - 0.096).abs() < 1e-15);

        assert_eq!(pattern_prob_uniform(2, 3, 5).unwrap().value, 0.0);
        assert!(pattern_prob_uniform(3, 4, 3).is_err());
    }

    #[test]
    fn oracle_examples() {
        let d = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!((pattern_prob_oracle(&d, &pat("1 2")).unwrap().value - 0.5).abs() < 1e-15);
        let d = Distribution::new(vec![0.7, 0.3]).unwrap();
        assert!((pattern_prob_oracle(&d, &pat("1 1 2")).unwrap().value - 0.21).abs() < 1e-12);
        let d = Distribution::new(vec![1.0]).unwrap();
        assert_eq!(pattern_prob_oracle(&d, &pat("1 1")).unwrap().value, 1.0);
    }

    #[test]
    fn oracle_guard_trips() {
        let d = Distribution::uniform(10);
        match pattern_prob_oracle(&d, &Pattern::new(vec![1; 20]).unwrap()) {
            Err(Error::ResourceLimit { .. }) => {}
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn profile_sufficiency_small() {
        // P(112) = P(121) = P(122) for a non-uniform distribution.
        let d = Distribution::with_continuous(vec![0.4, 0.3], 0.3).unwrap();
        let a = prob(&d, "1 1 2");
        let b = prob(&d, "1 2 1");
        let c = prob(&d, "1 2 2");
        assert!((a - b).abs() < 1e-15);
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn normalization_small() {
        let d = Distribution::with_continuous(vec![0.35, 0.25, 0.15], 0.25).unwrap();
        for n in 1..=6usize {
            let total: f64 = crate::enumerate::patterns_of_length(n)
                .iter()
                .map(|p| prob_pattern(&d, p))
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: total={total}");
        }
    }

    fn prob_pattern(d: &Distribution, p: &Pattern) -> f64 {
        pattern_prob(d, p).unwrap().value
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let profile = profile_of(&pat("1 1 2 3 1 4"));
        let slots = [0.35, 0.2, 0.1, 0.05, 0.0];
        let q = 0.3;
        let budget = EvalBudget::default();
        let eval = slot_prob_grad(&slots, q, &profile, &budget).unwrap();
        let h = 1e-6;
        for i in 0..slots.len() {
            let mut up = slots.to_vec();
            let mut dn = slots.to_vec();
            up[i] += h;
            dn[i] -= h;
            // central difference; for the zero slot use a forward pair
            let (vp, vm, denom) = if slots[i] - h < 0.0 {
                let v0 = slot_prob_grad(&slots, q, &profile, &budget).unwrap().value;
                (
                    slot_prob_grad(&up, q, &profile, &budget).unwrap().value,
                    v0,
                    h,
                )
            } else {
                (
                    slot_prob_grad(&up, q, &profile, &budget).unwrap().value,
                    slot_prob_grad(&dn, q, &profile, &budget).unwrap().value,
                    2.0 * h,
                )
            };
            let fd = (vp - vm) / denom;
            let an = eval.grad_slots[i];
            assert!(
                (fd - an).abs() <= 1e-4 * an.abs().max(1e-6),
                "slot {i}: fd={fd} analytic={an}"
            );
        }
        let vq_up = slot_prob_grad(&slots, q + h, &profile, &budget).unwrap().value;
        let vq_dn = slot_prob_grad(&slots, q - h, &profile, &budget).unwrap().value;
        let fd_q = (vq_up - vq_dn) / (2.0 * h);
        assert!((fd_q - eval.grad_q).abs() <= 1e-4 * eval.grad_q.abs().max(1e-6));
    }

    #[test]
    fn zero_slot_gradient_sees_singletons() {
        // A zero atom still has positive derivative when a singleton could
        // land on it.
        let profile = profile_of(&pat("1 1 2"));
        let eval = slot_prob_grad(&[0.6, 0.4, 0.0], 0.0, &profile, &EvalBudget::default()).unwrap();
        assert!(eval.grad_slots[2] > 0.0);
    }

    #[test]
    fn log_space_matches_linear_when_both_work() {
        let d = Distribution::with_continuous(vec![0.4, 0.3, 0.2], 0.1).unwrap();
        let f = profile_of(&pat("1 1 2 2 3 4"));
        let classes = Classes::of(&f);
        let groups = Groups::of_slots(d.atoms());
        let lin = eval_linear(&groups, d.continuous_mass(), &classes);
        let log = eval_log(&groups, d.continuous_mass(), &classes);
        assert!((lin.ln() - log).abs() < 1e-10);
    }

    #[test]
    fn long_pattern_uses_log_space() {
        // 2^60: probability under (1/2,1/2) is 2^-119, far below underflow
        // risk but the linear value is still representable; push further
        // with uniform(2) over n=400.
        let f = Profile::new([(200u64, 2u64)].into_iter().collect()).unwrap();
        let d = Distribution::new(vec![0.5, 0.5]).unwrap();
        let p = profile_prob(&d, &f).unwrap();
        let expected_ln = (2.0f64).ln() - 400.0 * (2.0f64).ln();
        assert!((p.ln_value - expected_ln).abs() < 1e-9);
    }

    #[test]
    fn work_guard_trips_on_huge_injection_count() {
        let f = Profile::new([(2u64, 30u64)].into_iter().collect()).unwrap();
        let d = Distribution::with_continuous(
            (0..40).map(|i| (i as f64 + 1.0) * 0.5 / 820.0).collect(),
            0.5,
        )
        .unwrap();
        let tiny = EvalBudget::new(1e4);
        match profile_prob_with_budget(&d, &f, &tiny) {
            Err(Error::ResourceLimit { .. }) => {}
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn continuous_limit_of_spread_atoms() {
        // Replacing q with many equal atoms of total mass q converges to
        // the mixed-distribution probability.
        let q = 0.4;
        let base = Distribution::with_continuous(vec![0.35, 0.25], q).unwrap();
        for f in crate::enumerate::profiles_of_size(5) {
            let exact = profile_prob(&base, &f).unwrap().value;
            let spread = 10_000usize;
            let mut atoms = vec![0.35, 0.25];
            atoms.extend(std::iter::repeat(q / spread as f64).take(spread));
            let approx = profile_prob(&Distribution::new(atoms).unwrap(), &f)
                .unwrap()
                .value;
            assert!(
                (exact - approx).abs() < 1e-3,
                "{f}: exact {exact} vs spread {approx}"
            );
        }
    }

    #[test]
    fn atom_order_is_irrelevant() {
        let a = Distribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        let b = Distribution::new(vec![0.6, 0.3, 0.1]).unwrap();
        assert_eq!(a.atoms(), b.atoms());
    }
}
