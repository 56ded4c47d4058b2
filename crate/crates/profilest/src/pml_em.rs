//! EM approximation of the high-profile distribution for long patterns.
//!
//! The latent variable is the assignment of pattern symbols to support
//! slots: an injection from symbols into the k slots, where symbols that
//! appear once may instead be assigned to the continuous pool. The pattern
//! probability is exactly the sum of complete-data likelihoods
//! q^t · Π p_slot^μ over these assignments, so EM applies directly: the
//! E-step computes the posterior-expected number of observations landing
//! on each slot, the M-step divides by n.
//!
//! The E-step is computed exactly while the assignment space is small
//! (the expected counts fall out of the gradient of the pattern
//! probability: E[count_s] = p_s·∂P/∂p_s / P) and by Metropolis sampling
//! over assignments beyond that. Proposals either exchange the targets of
//! two symbols, relocate a symbol to a free slot, or move a singleton
//! between its slot and the continuous pool; all three are symmetric, so
//! plain likelihood-ratio acceptance is correct.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::BoundsReport;
use crate::patterns::{is_trivial, profile_of, Pattern};
use crate::pml_exact::{PmlMethod, PmlResult};
use crate::probability::{
    injection_work, profile_prob_with_budget, slot_prob_grad, Distribution, EvalBudget,
};
use crate::{Error, Result};

/// Minimum slot probability after an M-step, as a fraction of 1/k. A slot
/// at exactly zero could never be proposed again.
const SLOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Support size to fit.
    pub k: u64,
    /// Allow a continuous component (meaningful only with singletons).
    pub q_enabled: bool,
    pub iterations: u32,
    pub chains: u32,
    pub mcmc_steps_per_estep: u32,
    pub burn_in: u32,
    pub seed: u64,
    /// The E-step is exact while k^m̲·2^φ₁ stays at or below this.
    pub exact_estep_threshold: f64,
    pub budget: EvalBudget,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k: 1,
            q_enabled: false,
            iterations: 500,
            chains: 4,
            mcmc_steps_per_estep: 2000,
            burn_in: 500,
            seed: 0,
            exact_estep_threshold: 1e6,
            budget: EvalBudget::default(),
        }
    }
}

/// Fits a k-slot distribution to a pattern by EM over latent assignments.
pub fn em_pml(p: &Pattern, cfg: &EmConfig) -> Result<PmlResult> {
    em_pml_with_progress(p, cfg, None)
}

/// As [`em_pml`]; when `progress` is given, writes one tab-separated line
/// per iteration: iteration index, log₂-probability estimate, acceptance
/// rate (1 for exact E-steps).
pub fn em_pml_with_progress(
    p: &Pattern,
    cfg: &EmConfig,
    mut progress: Option<&mut dyn Write>,
) -> Result<PmlResult> {
    let profile = profile_of(p);
    if is_trivial(&profile) {
        return Err(Error::InvalidInput(
            "trivial pattern: probability is 1 under every distribution".into(),
        ));
    }
    let mults = profile.multiplicities_desc();
    let m = mults.len() as u64;
    let phi1 = profile.phi1();
    let q_active = cfg.q_enabled && phi1 > 0;
    if cfg.k < m && !q_active {
        return Err(Error::Infeasible(format!(
            "k={} slots cannot hold {m} symbols without a continuous pool",
            cfg.k
        )));
    }
    if cfg.k + phi1 < m {
        return Err(Error::Infeasible(format!(
            "k={} slots plus {phi1} continuous-eligible singletons cannot hold {m} symbols",
            cfg.k
        )));
    }
    let n = profile.n() as f64;
    let k = cfg.k as usize;

    // Initialization: empirical frequencies of the k most frequent
    // symbols, padded at the uniform count n/k, scaled around the
    // initial q.
    let mut q = if q_active {
        phi1 as f64 / (2.0 * n)
    } else {
        0.0
    };
    let mut slots: Vec<f64> = mults.iter().take(k).map(|&c| c as f64).collect();
    slots.resize(k, n / k.max(1) as f64);
    let total: f64 = slots.iter().sum();
    for s in slots.iter_mut() {
        *s *= (1.0 - q) / total;
    }

    // The nominal injection count reads 0 when m > k (discrete injections
    // alone cannot place every symbol); size the assignment space by the
    // feasible-count sum there instead.
    let nominal = if m <= cfg.k {
        injection_work(cfg.k, m, phi1)
    } else {
        crate::probability::assignment_count(cfg.k, m, phi1)
    };
    let exact = nominal <= cfg.exact_estep_threshold;
    let mut last_prob = f64::NEG_INFINITY;
    let mut early_stop = false;
    for iter in 0..cfg.iterations {
        let (counts, cont_count, prob_estimate, acceptance) = if exact {
            let eval = slot_prob_grad(&slots, q, &profile, &cfg.budget)?;
            if eval.value <= 0.0 {
                return Err(Error::Internal("EM reached a zero-probability state".into()));
            }
            let counts: Vec<f64> = slots
                .iter()
                .zip(&eval.grad_slots)
                .map(|(p_s, g)| p_s * g / eval.value)
                .collect();
            let cont = q * eval.grad_q / eval.value;
            (counts, cont, eval.value, 1.0)
        } else {
            sampled_estep(&mults, &slots, q, cfg, iter)?
        };

        if let Some(w) = progress.as_deref_mut() {
            let log2 = if prob_estimate > 0.0 {
                prob_estimate.log2()
            } else {
                f64::NEG_INFINITY
            };
            writeln!(w, "{iter}\t{log2}\t{acceptance}")
                .map_err(|e| Error::Internal(format!("progress stream: {e}")))?;
        }

        // M-step: expected counts over n, floored away from zero.
        let floor = SLOT_FLOOR / k.max(1) as f64;
        for (s, c) in slots.iter_mut().zip(&counts) {
            *s = (c / n).max(floor);
        }
        if q_active && q > 0.0 {
            q = (cont_count / n).max(floor);
        }
        let mass: f64 = slots.iter().sum::<f64>() + q;
        for s in slots.iter_mut() {
            *s /= mass;
        }
        q /= mass;

        if exact {
            // the exact E-step makes this true EM, so each iteration must
            // improve
            debug_assert!(
                prob_estimate >= last_prob - 1e-12 * prob_estimate.abs().max(1e-300),
                "exact EM decreased the probability: {last_prob} -> {prob_estimate}"
            );
            if iter > 0 && prob_estimate - last_prob < 1e-12 {
                early_stop = true;
                break;
            }
            last_prob = prob_estimate;
        }
    }

    // Dust at the floor is numerical zero; fold it into the largest slot
    // rather than the continuous mass.
    let mut atoms: Vec<f64> = slots
        .iter()
        .copied()
        .filter(|&v| v > 2.0 * SLOT_FLOOR)
        .collect();
    let dust: f64 = slots
        .iter()
        .copied()
        .filter(|&v| v <= 2.0 * SLOT_FLOOR)
        .sum();
    atoms.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    if let Some(first) = atoms.first_mut() {
        *first += dust;
    }
    if q <= 2.0 * SLOT_FLOOR {
        q = 0.0;
    }
    let distribution = if atoms.is_empty() {
        Distribution::continuous()
    } else if q > 0.0 {
        Distribution::with_continuous(atoms, q)?
    } else {
        Distribution::new(atoms)?
    };

    let certificates = BoundsReport::of(&profile)?;
    let (probability, ln_probability) =
        match profile_prob_with_budget(&distribution, &profile, &cfg.budget) {
            Ok(p) => (p.value, p.ln_value),
            Err(Error::ResourceLimit { .. }) => {
                // too large for the exact evaluator: report the sampled
                // estimate instead
                let est = em_probability_estimate(p, &distribution, cfg)?;
                let ln = if est.value > 0.0 {
                    est.value.ln()
                } else {
                    f64::NEG_INFINITY
                };
                (est.value, ln)
            }
            Err(e) => return Err(e),
        };
    let violations = certificates.violations(&distribution);
    let converged = violations.is_empty() && (!exact || early_stop);
    Ok(PmlResult {
        distribution,
        probability,
        ln_probability,
        method: PmlMethod::EmApprox,
        certificates: Some(certificates),
        converged,
        candidates_examined: cfg.iterations as u64,
    })
}

/// One latent assignment: each symbol occupies a slot or (singletons
/// only) the continuous pool.
struct Chain {
    /// target[j] = Some(slot) or None for continuous
    target: Vec<Option<usize>>,
    /// occupant[s] = Some(symbol)
    occupant: Vec<Option<usize>>,
    free_slots: Vec<usize>,
    /// position of each slot in free_slots (usize::MAX when occupied)
    free_pos: Vec<usize>,
    continuous_count: u64,
}

impl Chain {
    fn new(mults: &[u64], k: usize) -> Self {
        let m = mults.len();
        let mut target = vec![None; m];
        let mut occupant = vec![None; k];
        for j in 0..m.min(k) {
            target[j] = Some(j);
            occupant[j] = Some(j);
        }
        let mut free_slots = Vec::new();
        let mut free_pos = vec![usize::MAX; k];
        for s in m.min(k)..k {
            free_pos[s] = free_slots.len();
            free_slots.push(s);
        }
        let continuous_count = m.saturating_sub(k) as u64;
        Self {
            target,
            occupant,
            free_slots,
            free_pos,
            continuous_count,
        }
    }

    fn occupy(&mut self, slot: usize, symbol: usize) {
        debug_assert!(self.occupant[slot].is_none());
        let pos = self.free_pos[slot];
        let last = self.free_slots.len() - 1;
        self.free_slots.swap(pos, last);
        self.free_pos[self.free_slots[pos]] = pos;
        self.free_slots.pop();
        self.free_pos[slot] = usize::MAX;
        self.occupant[slot] = Some(symbol);
        self.target[symbol] = Some(slot);
    }

    fn vacate(&mut self, slot: usize) -> usize {
        let symbol = self.occupant[slot].expect("occupied");
        self.occupant[slot] = None;
        self.free_pos[slot] = self.free_slots.len();
        self.free_slots.push(slot);
        self.target[symbol] = None;
        symbol
    }
}

/// Metropolis-sampled E-step. Returns (expected slot counts, expected
/// continuous count, probability proxy for progress reporting, acceptance
/// rate).
fn sampled_estep(
    mults: &[u64],
    slots: &[f64],
    q: f64,
    cfg: &EmConfig,
    iteration: u32,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let m = mults.len();
    let k = slots.len();
    let ln_p: Vec<f64> = slots
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect();
    let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };

    let mut acc_counts = vec![0.0f64; k];
    let mut acc_cont = 0.0f64;
    let mut accepted = 0u64;
    let mut proposed = 0u64;
    let samples_per_chain = cfg.mcmc_steps_per_estep.max(1) as u64;

    for chain_id in 0..cfg.chains.max(1) {
        let mut rng = chain_rng(cfg.seed, chain_id, iteration);
        let mut chain = Chain::new(mults, k);
        let total_steps = cfg.burn_in as u64 + samples_per_chain;
        for step in 0..total_steps {
            proposed += 1;
            if propose(&mut chain, mults, &ln_p, ln_q, q, m, k, &mut rng) {
                accepted += 1;
            }
            if step >= cfg.burn_in as u64 {
                for (s, occ) in chain.occupant.iter().enumerate() {
                    if let Some(j) = occ {
                        acc_counts[s] += mults[*j] as f64;
                    }
                }
                acc_cont += chain.continuous_count as f64;
            }
        }
    }
    let total_samples = (cfg.chains.max(1) as u64 * samples_per_chain) as f64;
    for c in acc_counts.iter_mut() {
        *c /= total_samples;
    }
    acc_cont /= total_samples;
    // Progress proxy: complete-data log-likelihood at the expected counts.
    // The honest unbiased estimate is em_probability_estimate; this is
    // only for the per-iteration trace.
    let proxy = {
        let mut ln = 0.0;
        for (s, c) in acc_counts.iter().enumerate() {
            if *c > 0.0 && slots[s] > 0.0 {
                ln += c * slots[s].ln();
            }
        }
        if acc_cont > 0.0 && q > 0.0 {
            ln += acc_cont * q.ln();
        }
        ln.exp()
    };
    let acceptance = if proposed == 0 {
        0.0
    } else {
        accepted as f64 / proposed as f64
    };
    Ok((acc_counts, acc_cont, proxy, acceptance))
}

/// Sampler diagnostics: runs one Metropolis chain over assignments for a
/// fixed distribution and returns how often each assignment was visited
/// after burn-in. Keys are per-symbol targets (None = continuous),
/// symbols ordered by descending multiplicity.
pub fn sample_assignments(
    p: &Pattern,
    d: &Distribution,
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<std::collections::HashMap<Vec<Option<usize>>, u64>> {
    let profile = profile_of(p);
    let mults = profile.multiplicities_desc();
    let m = mults.len();
    let k = d.k();
    let q = d.continuous_mass();
    if (k as u64) + profile.phi1() < m as u64 || (q == 0.0 && k < m) {
        return Err(Error::Infeasible(format!(
            "no assignment of {m} symbols fits {k} slots"
        )));
    }
    let ln_p: Vec<f64> = d.atoms().iter().map(|&v| v.ln()).collect();
    let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
    let mut rng = chain_rng(seed, 0, 0);
    let mut chain = Chain::new(&mults, k);
    let mut histogram: std::collections::HashMap<Vec<Option<usize>>, u64> =
        std::collections::HashMap::new();
    for step in 0..burn_in + steps {
        propose(&mut chain, &mults, &ln_p, ln_q, q, m, k, &mut rng);
        if step >= burn_in {
            *histogram.entry(chain.target.clone()).or_insert(0) += 1;
        }
    }
    Ok(histogram)
}

#[allow(clippy::too_many_arguments)]
fn propose(
    chain: &mut Chain,
    mults: &[u64],
    ln_p: &[f64],
    ln_q: f64,
    q: f64,
    m: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    if rng.gen_bool(0.5) {
        // exchange move: symbol a against another symbol or a free slot
        let a = rng.gen_range(0..m);
        let candidates = m - 1 + chain.free_slots.len();
        if candidates == 0 {
            return false;
        }
        let pick = rng.gen_range(0..candidates);
        if pick < m - 1 {
            let b = if pick >= a { pick + 1 } else { pick };
            exchange_symbols(chain, mults, ln_p, a, b, rng)
        } else {
            // relocate a discrete symbol to a free slot (the continuous
            // count, and hence the free-slot count, is preserved, which
            // keeps the proposal symmetric)
            let free_ix = pick - (m - 1);
            let s_new = chain.free_slots[free_ix];
            let Some(s_old) = chain.target[a] else {
                return false; // continuous symbols leave via the singleton move
            };
            let delta = mults[a] as f64 * (ln_p[s_new] - ln_p[s_old]);
            if accept(delta, rng) {
                chain.vacate(s_old);
                chain.occupy(s_new, a);
                true
            } else {
                false
            }
        }
    } else {
        // singleton move between its slot and the continuous pool; the
        // slot is drawn uniformly and must match the current one on the
        // way out, mirroring the way in
        if ln_q == f64::NEG_INFINITY || q <= 0.0 {
            return false;
        }
        let singles: Vec<usize> = (0..m).filter(|&j| mults[j] == 1).collect();
        if singles.is_empty() || k == 0 {
            return false;
        }
        let j = singles[rng.gen_range(0..singles.len())];
        let s = rng.gen_range(0..k);
        match chain.target[j] {
            Some(cur) if cur == s => {
                let delta = ln_q - ln_p[s];
                if accept(delta, rng) {
                    chain.vacate(s);
                    chain.continuous_count += 1;
                    true
                } else {
                    false
                }
            }
            Some(_) => false,
            None => {
                if chain.occupant[s].is_some() {
                    return false;
                }
                let delta = ln_p[s] - ln_q;
                if accept(delta, rng) {
                    chain.occupy(s, j);
                    chain.continuous_count -= 1;
                    true
                } else {
                    false
                }
            }
        }
    }
}

fn exchange_symbols(
    chain: &mut Chain,
    mults: &[u64],
    ln_p: &[f64],
    a: usize,
    b: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    match (chain.target[a], chain.target[b]) {
        (Some(sa), Some(sb)) => {
            let delta = (mults[a] as f64 - mults[b] as f64) * (ln_p[sb] - ln_p[sa]);
            if accept(delta, rng) {
                chain.occupant[sa] = Some(b);
                chain.occupant[sb] = Some(a);
                chain.target[a] = Some(sb);
                chain.target[b] = Some(sa);
                true
            } else {
                false
            }
        }
        (Some(sa), None) => {
            // b sits in the continuous pool, so it is a singleton; a may
            // trade places only if a is a singleton too
            if mults[a] != 1 {
                return false;
            }
            chain.occupant[sa] = Some(b);
            chain.target[b] = Some(sa);
            chain.target[a] = None;
            true
        }
        (None, Some(_)) => exchange_symbols(chain, mults, ln_p, b, a, rng),
        (None, None) => true, // identical assignment
    }
}

fn accept(ln_ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    if ln_ratio >= 0.0 {
        return true;
    }
    if ln_ratio == f64::NEG_INFINITY {
        return false;
    }
    rng.gen::<f64>() < ln_ratio.exp()
}

fn chain_rng(seed: u64, chain: u32, iteration: u32) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..12].copy_from_slice(&chain.to_le_bytes());
    bytes[12..16].copy_from_slice(&iteration.to_le_bytes());
    bytes[16] = 0x5D;
    ChaCha8Rng::from_seed(bytes)
}

/// A sampled probability with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct SampledProb {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Unbiased estimate of the pattern probability under `d` by importance
/// sampling over latent assignments drawn uniformly: P equals the number
/// of feasible assignments times the mean complete-data likelihood.
pub fn em_probability_estimate(
    p: &Pattern,
    d: &Distribution,
    cfg: &EmConfig,
) -> Result<SampledProb> {
    let profile = profile_of(p);
    let mults = profile.multiplicities_desc();
    let m = mults.len() as u64;
    let phi1 = profile.phi1();
    let k = d.k() as u64;
    let q = d.continuous_mass();

    // Feasible-assignment count, stratified by how many singletons go
    // continuous. Strata without an injection weigh zero.
    let t_max = if q > 0.0 { phi1 } else { 0 };
    let mut weights = Vec::new();
    let mut n_valid = 0.0f64;
    for t in 0..=t_max {
        let w = choose_f64(phi1, t) * crate::probability::falling_power_f64(k, m - t);
        weights.push(w);
        n_valid += w;
    }
    if n_valid == 0.0 {
        return Ok(SampledProb {
            value: 0.0,
            std_error: 0.0,
            samples: 0,
        });
    }

    let samples = (cfg.chains.max(1) as u64) * (cfg.mcmc_steps_per_estep.max(1) as u64);
    let mut rng = estimate_rng(cfg.seed);
    let ln_q = if q > 0.0 { q.ln() } else { f64::NEG_INFINITY };
    let atoms = d.atoms();

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut slot_ids: Vec<usize> = (0..k as usize).collect();
    let mut single_ids: Vec<usize> = (0..mults.len()).filter(|&j| mults[j] == 1).collect();
    let mut is_continuous = vec![false; mults.len()];
    for _ in 0..samples {
        // stratum
        let mut pick = rng.gen::<f64>() * n_valid;
        let mut t = weights.len() as u64 - 1;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                t = i as u64;
                break;
            }
            pick -= w;
        }
        // which t singletons go continuous
        partial_shuffle(&mut single_ids, t as usize, &mut rng);
        is_continuous.iter_mut().for_each(|x| *x = false);
        for &j in &single_ids[..t as usize] {
            is_continuous[j] = true;
        }
        // uniform injection of the remaining m−t symbols into slots
        partial_shuffle(&mut slot_ids, (m - t) as usize, &mut rng);
        let mut ln_l = if t == 0 { 0.0 } else { t as f64 * ln_q };
        let mut next_slot = 0usize;
        for (j, &mu) in mults.iter().enumerate() {
            if is_continuous[j] {
                continue;
            }
            ln_l += mu as f64 * atoms[slot_ids[next_slot]].ln();
            next_slot += 1;
        }
        let l = ln_l.exp();
        sum += l;
        sum_sq += l * l;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    let se = n_valid * (var / samples as f64).sqrt();
    Ok(SampledProb {
        value: n_valid * mean,
        std_error: se,
        samples,
    })
}

fn estimate_rng(seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[16] = 0xE5;
    ChaCha8Rng::from_seed(bytes)
}

fn choose_f64(n: u64, r: u64) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut out = 1.0f64;
    for i in 0..r {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Puts a uniformly random selection of `count` items at the front.
fn partial_shuffle<T>(items: &mut [T], count: usize, rng: &mut ChaCha8Rng) {
    let len = items.len();
    for i in 0..count.min(len) {
        let j = rng.gen_range(i..len);
        items.swap(i, j);
    }
}
