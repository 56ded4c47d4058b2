//! The high-profile distribution of a profile, computed exactly.
//!
//! Closed forms exist for the constant and all-distinct profiles, for
//! two-symbol profiles (half-half or a polynomial root, depending on how
//! lopsided the counts are), and for uniform profiles r^m (uniform over a
//! computable k̂ ≥ m). Everything else goes through a bounded numeric
//! search: for every candidate support size inside the analytic bracket,
//! multi-start projected gradient ascent maximizes the pattern probability
//! over the monotone simplex, with the continuous mass as one extra
//! coordinate capped at φ₁/n.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::bounds::{Bound, BoundsReport};
use crate::patterns::{is_trivial, Profile};
use crate::probability::{
    distinct_count, profile_prob_with_budget, slot_prob_grad, slot_prob_value, Distribution,
    EvalBudget,
};
use crate::{Error, Result};

/// How a high-profile distribution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PmlMethod {
    Trivial,
    BinaryClosedForm,
    UniformProfile,
    NumericSearch,
    EmApprox,
}

/// A high-profile distribution together with the probability it attains
/// and the certificates it satisfies.
#[derive(Debug, Clone)]
pub struct PmlResult {
    pub distribution: Distribution,
    /// Pattern probability attained (may underflow to 0 for very long
    /// patterns; `ln_probability` stays finite).
    pub probability: f64,
    pub ln_probability: f64,
    pub method: PmlMethod,
    /// None only for trivial profiles, which admit no bounds.
    pub certificates: Option<BoundsReport>,
    pub converged: bool,
    pub candidates_examined: u64,
}

impl PmlResult {
    /// Base-2 log of the attained probability.
    pub fn log2_probability(&self) -> f64 {
        self.ln_probability / std::f64::consts::LN_2
    }

    /// Certificate violations of the returned distribution (empty for a
    /// sound result; also empty for trivial profiles).
    pub fn certificate_violations(&self) -> Vec<String> {
        self.certificates
            .as_ref()
            .map(|c| c.violations(&self.distribution))
            .unwrap_or_default()
    }
}

impl Serialize for PmlResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("PmlResult", 8)?;
        st.serialize_field("atoms", self.distribution.atoms())?;
        st.serialize_field("q", &self.distribution.continuous_mass())?;
        st.serialize_field("probability", &self.probability)?;
        st.serialize_field("log_probability", &self.log2_probability())?;
        st.serialize_field("method", &self.method)?;
        st.serialize_field("k", &self.distribution.k())?;
        st.serialize_field("certificates", &self.certificates)?;
        st.serialize_field("converged", &self.converged)?;
        st.end()
    }
}

/// Configuration of the numeric search.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Candidate support sizes to sweep. Setting this forces the numeric
    /// path even where a closed form applies, and it is required when the
    /// analytic upper bound is infinite (profiles with singletons).
    pub k_range_override: Option<RangeInclusive<u64>>,
    /// Random ascent starts per candidate k, in addition to the uniform
    /// and empirical points.
    pub starts: u32,
    pub max_iterations: u32,
    /// Stationarity requirement: atom partial derivatives at the optimum
    /// must agree to within this.
    pub gradient_tolerance: f64,
    pub seed: u64,
    /// Work cap forwarded to the pattern-probability evaluator.
    pub budget: EvalBudget,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_range_override: None,
            starts: 32,
            max_iterations: 5000,
            gradient_tolerance: 1e-8,
            seed: 0,
            budget: EvalBudget::default(),
        }
    }
}

/// Closed forms for the constant profile n¹ (distribution (1)), the
/// all-distinct profile 1ⁿ (the continuous distribution, probability 1),
/// and the trivial profiles (probability 1 under any distribution).
pub fn pml_trivial(f: &Profile) -> Result<PmlResult> {
    if is_trivial(f) {
        return Ok(PmlResult {
            distribution: Distribution::new(vec![1.0]).expect("valid"),
            probability: 1.0,
            ln_probability: 0.0,
            method: PmlMethod::Trivial,
            certificates: None,
            converged: true,
            candidates_examined: 1,
        });
    }
    let certificates = Some(BoundsReport::of(f)?);
    let m = f.m();
    let n = f.n();
    let distribution = if m == 1 {
        Distribution::new(vec![1.0]).expect("valid")
    } else if m == n {
        Distribution::continuous()
    } else {
        return Err(Error::NotApplicable(format!(
            "profile {f} is neither constant nor all-distinct"
        )));
    };
    Ok(PmlResult {
        distribution,
        probability: 1.0,
        ln_probability: 0.0,
        method: PmlMethod::Trivial,
        certificates,
        converged: true,
        candidates_examined: 1,
    })
}

/// Closed form for two-symbol profiles with counts n0 ≤ n1. Half-half when
/// (n1−n0)² ≤ n; otherwise (1/(1+p), p/(1+p)) where p is the unique root
/// in (0,1) of n0·p^{a+1} − n1·p^a + n1·p − n0 with a = n1 − n0.
pub fn pml_binary(n0: u64, n1: u64) -> Result<PmlResult> {
    if n0 < 1 || n0 > n1 {
        return Err(Error::InvalidInput(format!(
            "binary counts must satisfy 1 ≤ n0 ≤ n1, got ({n0}, {n1})"
        )));
    }
    if n0 == 1 && n1 == 1 {
        return Err(Error::NotApplicable(
            "profile 1^2 is all-distinct; its maximizer is the continuous distribution".into(),
        ));
    }
    let n = n0 + n1;
    let profile = Profile::from_multiplicities(&[n0, n1]);
    let certificates = Some(BoundsReport::of(&profile)?);
    let gap = n1 - n0;
    let (distribution, probability, ln_probability) = if gap * gap <= n {
        let prob = 0.5f64.powi((n - 1) as i32);
        let ln = -((n - 1) as f64) * std::f64::consts::LN_2;
        (Distribution::new(vec![0.5, 0.5]).expect("valid"), prob, ln)
    } else {
        let p = binary_root(n0, n)?;
        let d = Distribution::new(vec![1.0 / (1.0 + p), p / (1.0 + p)]).expect("valid");
        // (p^n0 + p^n1) / (1+p)^n, in logs to survive large n
        let ln = n0 as f64 * p.ln() + p.powi(gap as i32).ln_1p() - n as f64 * (1.0 + p).ln();
        (d, ln.exp(), ln)
    };
    Ok(PmlResult {
        distribution,
        probability,
        ln_probability,
        method: PmlMethod::BinaryClosedForm,
        certificates,
        converged: true,
        candidates_examined: 1,
    })
}

/// Unique root in (0,1) of n0·p^{a+1} − (n−n0)·p^a + (n−n0)·p − n0,
/// a = n − 2·n0, located by bisection.
fn binary_root(n0: u64, n: u64) -> Result<f64> {
    let n1 = n - n0;
    let a = (n1 - n0) as i32;
    let g =
        |p: f64| n0 as f64 * p.powi(a + 1) - n1 as f64 * p.powi(a) + n1 as f64 * p - n0 as f64;
    let lo0 = 1e-12;
    if g(lo0) >= 0.0 {
        return Err(Error::Internal("binary root not bracketed from below".into()));
    }
    // g(1) = 0 with g'(1) < 0 in this regime; back off from 1 until the
    // value turns positive.
    let mut delta = 1e-3;
    let mut hi = 1.0 - delta;
    while g(hi) <= 0.0 {
        delta *= 2.0;
        if delta >= 1.0 {
            return Err(Error::Internal("binary root not bracketed from above".into()));
        }
        hi = 1.0 - delta;
    }
    let mut lo = lo0;
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    if g(p).abs() > 1e-12 {
        return Err(Error::Internal(format!(
            "binary root residual {} too large",
            g(p)
        )));
    }
    Ok(p)
}

/// Closed form for uniform profiles r^m (every one of m symbols appears
/// r ≥ 2 times): uniform over k̂, where k̂ is the first k ≥ m at which
/// growing the support stops paying, with probability k̂^m̲ / k̂^{mr}.
pub fn pml_uniform_profile(r: u64, m: u64) -> Result<PmlResult> {
    if r < 2 || m < 1 {
        return Err(Error::InvalidInput(format!(
            "uniform profile needs r ≥ 2 and m ≥ 1, got r={r}, m={m}"
        )));
    }
    let profile = Profile::new([(r, m)].into_iter().collect()).expect("valid");
    let certificates = Some(BoundsReport::of(&profile)?);
    let k_hat = uniform_profile_k_hat(r, m)?;
    let prob = crate::probability::pattern_prob_uniform(k_hat, m, m * r)?;
    Ok(PmlResult {
        distribution: Distribution::uniform(k_hat as usize),
        probability: prob.value,
        ln_probability: prob.ln_value,
        method: PmlMethod::UniformProfile,
        certificates,
        converged: true,
        candidates_examined: k_hat - m + 1,
    })
}

/// k̂ = min{k ≥ m : (1 + 1/k)^{mr} (1 − m/(k+1)) > 1}.
fn uniform_profile_k_hat(r: u64, m: u64) -> Result<u64> {
    let mr = (m * r) as f64;
    let mut k = m;
    loop {
        let lhs = (mr * (1.0 / k as f64).ln_1p()).exp() * (1.0 - m as f64 / (k as f64 + 1.0));
        if lhs > 1.0 {
            return Ok(k);
        }
        k += 1;
        if k > 1_000_000_000 {
            return Err(Error::Internal(
                "uniform-profile support scan exceeded 1e9".into(),
            ));
        }
    }
}

/// Limit of k̂/m for uniform profiles r^m as m grows: the α > 1 solving
/// −α·ln(1 − 1/α) = r, by bisection to 1e−10.
pub fn pml_uniform_ratio_limit(r: u64) -> f64 {
    assert!(r >= 2, "the limit applies to uniform profiles with r ≥ 2");
    let f = |alpha: f64| -alpha * (1.0 - 1.0 / alpha).ln();
    let mut lo = 1.0 + 1e-14;
    let mut hi = 10.0;
    // f decreases from +inf toward 1, so f(lo) > r ≥ 2 > f(hi).
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > r as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// High-profile distribution of an arbitrary profile. Dispatches to the
/// closed forms when one applies; otherwise sweeps every candidate support
/// size in the analytic bracket (or the explicit override) and maximizes
/// the pattern probability by multi-start projected gradient ascent.
pub fn pml_search(f: &Profile, cfg: &SearchConfig) -> Result<PmlResult> {
    if is_trivial(f) {
        return pml_trivial(f);
    }
    if cfg.k_range_override.is_none() {
        let m = f.m();
        let n = f.n();
        if m == 1 || m == n {
            return pml_trivial(f);
        }
        if m == 2 {
            let mults = f.multiplicities_desc();
            return pml_binary(mults[1], mults[0]);
        }
        if f.prevalences().len() == 1 {
            let (&r, &prevalence) = f.prevalences().iter().next().expect("nonempty");
            if r >= 2 {
                return pml_uniform_profile(r, prevalence);
            }
        }
    }
    numeric_search(f, cfg)
}

/// [`pml_search`] with an automatic bracket for profiles whose analytic
/// upper bound is infinite: those fall back to sweeping support sizes
/// from the feasibility floor up to m + `extra`.
pub fn pml_search_bounded(f: &Profile, cfg: &SearchConfig, extra: u64) -> Result<PmlResult> {
    match pml_search(f, cfg) {
        Err(Error::UnboundedSearch(_)) => {
            let floor = f.m().saturating_sub(f.phi1()).max(1);
            let cfg = SearchConfig {
                k_range_override: Some(floor..=f.m() + extra),
                ..cfg.clone()
            };
            pml_search(f, &cfg)
        }
        other => other,
    }
}

struct Candidate {
    slots: Vec<f64>,
    q: f64,
    prob: f64,
}

fn numeric_search(f: &Profile, cfg: &SearchConfig) -> Result<PmlResult> {
    let report = BoundsReport::of(f)?;
    let m = f.m();
    let phi1 = f.phi1();
    let q_enabled = !report.discrete_forced && phi1 > 0;
    let q_cap = if q_enabled {
        report.continuous_cap.value()
    } else {
        0.0
    };
    // Symbols that cannot go continuous need discrete slots.
    let k_feasible_min = if q_enabled { (m - phi1).max(1) } else { m };
    let (k_lo, k_hi) = match &cfg.k_range_override {
        Some(range) => {
            let lo = (*range.start()).max(k_feasible_min);
            let hi = *range.end();
            if lo > hi {
                return Err(Error::InvalidInput(format!(
                    "override range {range:?} leaves no feasible support size (need k ≥ {k_feasible_min})"
                )));
            }
            (lo, hi)
        }
        None => {
            let hi = match report.support_upper {
                Bound::Finite(v) => v,
                Bound::Infinite => {
                    return Err(Error::UnboundedSearch(format!(
                        "profile {f} has singletons, so no finite support bound exists; \
                         supply an explicit k range"
                    )))
                }
            };
            let lo = match report.support_lower_ceil {
                Bound::Finite(v) => v.max(m),
                Bound::Infinite => {
                    return Err(Error::Internal(
                        "finite upper bound with infinite lower bound".into(),
                    ))
                }
            };
            if lo > hi {
                return Err(Error::Internal(format!(
                    "empty support bracket [{lo}, {hi}] for profile {f}"
                )));
            }
            (lo, hi)
        }
    };

    let mut best: Option<Candidate> = None;
    let mut candidates_examined = 0u64;
    for k in k_lo..=k_hi {
        for start in start_points(f, k, q_cap, cfg) {
            candidates_examined += 1;
            let cand = ascend(start, f, q_cap, q_enabled, cfg)?;
            best = Some(match best {
                None => cand,
                Some(prev) => {
                    if candidate_better(&cand, &prev) {
                        cand
                    } else {
                        prev
                    }
                }
            });
        }
    }
    let best = best.ok_or_else(|| Error::Internal("no candidates examined".into()))?;
    finalize(best, f, report, cfg, candidates_examined)
}

/// Tie-break order: probability first (1e−9 slack), then smaller effective
/// support, then the lexicographically larger monotone atom vector.
fn candidate_better(a: &Candidate, b: &Candidate) -> bool {
    const TIE: f64 = 1e-9;
    if a.prob > b.prob + TIE {
        return true;
    }
    if b.prob > a.prob + TIE {
        return false;
    }
    let (ka, kb) = (effective_atoms(&a.slots), effective_atoms(&b.slots));
    if ka.len() != kb.len() {
        return ka.len() < kb.len();
    }
    for (x, y) in ka.iter().zip(kb.iter()) {
        if x != y {
            return x > y;
        }
    }
    false
}

const STRIP_EPS: f64 = 1e-10;

fn effective_atoms(slots: &[f64]) -> Vec<f64> {
    let mut atoms: Vec<f64> = slots.iter().copied().filter(|&v| v > STRIP_EPS).collect();
    atoms.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    atoms
}

fn start_points(f: &Profile, k: u64, q_cap: f64, cfg: &SearchConfig) -> Vec<(Vec<f64>, f64)> {
    let k = k as usize;
    let mut starts = Vec::with_capacity(cfg.starts as usize + 2);
    // uniform point
    starts.push((vec![1.0 / k as f64; k], 0.0));
    // empirical point: top-k relative frequencies; mass of any truncated
    // symbols goes to the continuous coordinate while the cap allows
    let mults = f.multiplicities_desc();
    let n = f.n() as f64;
    let mut empirical: Vec<f64> = mults.iter().take(k).map(|&c| c as f64 / n).collect();
    empirical.resize(k, 0.0);
    let missing = 1.0 - empirical.iter().sum::<f64>();
    let q0 = missing.clamp(0.0, q_cap);
    let leftover = missing - q0;
    if leftover > 0.0 {
        for a in empirical.iter_mut() {
            *a += leftover / k as f64;
        }
    }
    starts.push((empirical, q0));
    for i in 0..cfg.starts {
        let mut rng = start_rng(cfg.seed, k as u64, i);
        let q = if q_cap > 0.0 {
            rng.gen_range(0.0..q_cap)
        } else {
            0.0
        };
        // symmetric Dirichlet(1) via normalized exponentials
        let mut atoms: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = atoms.iter().sum();
        for a in atoms.iter_mut() {
            *a *= (1.0 - q) / total;
        }
        starts.push((atoms, q));
    }
    starts
}

fn start_rng(seed: u64, k: u64, start: u32) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&k.to_le_bytes());
    bytes[16..20].copy_from_slice(&start.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Projected gradient ascent with backtracking halving from step 1.0.
fn ascend(
    start: (Vec<f64>, f64),
    f: &Profile,
    q_cap: f64,
    q_enabled: bool,
    cfg: &SearchConfig,
) -> Result<Candidate> {
    let (mut slots, mut q) = start;
    project(&mut slots, &mut q, q_cap, q_enabled);
    let mut eval = slot_prob_grad(&slots, q, f, &cfg.budget)?;
    let mut stall = 0u32;
    for _ in 0..cfg.max_iterations {
        let mut step = 1.0f64;
        let mut accepted = false;
        while step >= 1e-18 {
            let mut new_slots: Vec<f64> = slots
                .iter()
                .zip(&eval.grad_slots)
                .map(|(x, g)| x + step * g)
                .collect();
            let mut new_q = if q_enabled { q + step * eval.grad_q } else { 0.0 };
            project(&mut new_slots, &mut new_q, q_cap, q_enabled);
            let value = slot_prob_value(&new_slots, new_q, f, &cfg.budget)?;
            if value > eval.value {
                let improvement = value - eval.value;
                slots = new_slots;
                q = new_q;
                eval = slot_prob_grad(&slots, q, f, &cfg.budget)?;
                if improvement < 1e-16 * eval.value.max(1e-300) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || stall >= 3 {
            break;
        }
    }
    Ok(Candidate {
        slots,
        q,
        prob: eval.value,
    })
}

/// Euclidean projection onto {x ≥ 0, Σx + q = 1, 0 ≤ q ≤ q_cap}: clamp at
/// a common offset τ found by bisection.
fn project(slots: &mut [f64], q: &mut f64, q_cap: f64, q_enabled: bool) {
    let f = |tau: f64, slots: &[f64], q: f64| -> f64 {
        let mut total: f64 = slots.iter().map(|&y| (y - tau).max(0.0)).sum();
        if q_enabled {
            total += (q - tau).clamp(0.0, q_cap);
        }
        total
    };
    let hi0 = slots
        .iter()
        .copied()
        .fold(if q_enabled { *q } else { f64::NEG_INFINITY }, f64::max);
    let mut lo = hi0 - 1.5;
    let mut hi = hi0;
    // f is nonincreasing in tau, f(hi) = 0, and f(lo) ≥ 1 because every
    // slot contributes at least its distance from the maximum plus 1.5.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid, slots, *q) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    for x in slots.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
    *q = if q_enabled {
        (*q - tau).clamp(0.0, q_cap)
    } else {
        0.0
    };
    // push the bisection residual onto the largest atom
    let total = slots.iter().sum::<f64>() + *q;
    let residual = 1.0 - total;
    if let Some(largest) = slots
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        *largest = (*largest + residual).max(0.0);
    }
}

/// Atoms closer than this count as one value for the distinct-count
/// certificate; the ascent leaves equal-by-theory atoms equal only to
/// numerical precision.
const DISTINCT_MERGE_TOL: f64 = 1e-6;

fn finalize(
    best: Candidate,
    f: &Profile,
    report: BoundsReport,
    cfg: &SearchConfig,
    candidates_examined: u64,
) -> Result<PmlResult> {
    let mut atoms = effective_atoms(&best.slots);
    // return stripped dust to the largest atom so no mass leaks into q on
    // discrete-forced profiles
    let dust: f64 = best.slots.iter().filter(|&&v| v <= STRIP_EPS).sum();
    if let Some(first) = atoms.first_mut() {
        *first += dust;
    }
    let q = best.q;
    let distribution = if q > 0.0 {
        Distribution::with_continuous(atoms, q)?
    } else {
        Distribution::new(atoms)?
    };
    let prob = profile_prob_with_budget(&distribution, f, &cfg.budget)?;

    // Stationarity at the returned point: the partial derivatives of the
    // supported atoms must agree (their common value is the Lagrange
    // multiplier of the mass constraint).
    let eval = slot_prob_grad(distribution.atoms(), q, f, &cfg.budget)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in &eval.grad_slots {
        lo = lo.min(*g);
        hi = hi.max(*g);
    }
    let stationary = distribution.k() <= 1 || hi - lo <= cfg.gradient_tolerance;
    let distinct = distinct_count(distribution.atoms(), DISTINCT_MERGE_TOL) as u64;
    let distinct_ok = distinct <= report.distinct_values_cap;
    let violations = report.violations(&distribution);
    let converged = stationary && distinct_ok && violations.is_empty();

    Ok(PmlResult {
        distribution,
        probability: prob.value,
        ln_probability: prob.ln_value,
        method: PmlMethod::NumericSearch,
        certificates: Some(report),
        converged,
        candidates_examined,
    })
}
