//! Maximum-likelihood baseline, divergences, unseen-symbol prediction,
//! and the convergence experiment comparing the high-profile estimate to
//! the empirical one as the sample grows.

use crate::patterns::{Profile, TokenSequence};
use crate::pml_exact::{pml_search, SearchConfig};
use crate::probability::Distribution;
use crate::{Error, Result};

/// Empirical (maximum-likelihood) distribution of a sequence: relative
/// token frequencies, monotone sorted, no continuous part.
pub fn ml_distribution(seq: &TokenSequence) -> Distribution {
    let n = seq.len() as f64;
    let atoms = seq
        .multiplicities()
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    Distribution::new(atoms).expect("relative frequencies form a distribution")
}

fn require_discrete(d: &Distribution, what: &str) -> Result<()> {
    if !d.is_discrete() {
        return Err(Error::NotApplicable(format!(
            "{what} requires a discrete distribution (continuous mass {})",
            d.continuous_mass()
        )));
    }
    Ok(())
}

/// Shannon entropy in bits of a discrete distribution.
pub fn entropy(d: &Distribution) -> Result<f64> {
    require_discrete(d, "entropy")?;
    Ok(d.atoms().iter().map(|&p| -p * p.log2()).sum())
}

/// Kullback-Leibler divergence D(a‖b) in bits between two discrete
/// distributions, compared position-wise on the monotone-sorted atoms
/// (zero-padded). Infinite when a has mass where b has none; sorting both
/// descending attains the permutation minimum of this comparison.
pub fn kl_divergence(a: &Distribution, b: &Distribution) -> Result<f64> {
    require_discrete(a, "KL divergence")?;
    require_discrete(b, "KL divergence")?;
    let len = a.k().max(b.k());
    let mut d = 0.0f64;
    for i in 0..len {
        let ai = a.atoms().get(i).copied().unwrap_or(0.0);
        let bi = b.atoms().get(i).copied().unwrap_or(0.0);
        if ai == 0.0 {
            continue;
        }
        if bi == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += ai * (ai / bi).log2();
    }
    Ok(d.max(0.0))
}

/// ℓ₁ distance between distributions: position-wise over monotone-sorted
/// zero-padded atoms, plus the difference of continuous masses.
pub fn l1_distance(a: &Distribution, b: &Distribution) -> f64 {
    let len = a.k().max(b.k());
    let mut total = (a.continuous_mass() - b.continuous_mass()).abs();
    for i in 0..len {
        let ai = a.atoms().get(i).copied().unwrap_or(0.0);
        let bi = b.atoms().get(i).copied().unwrap_or(0.0);
        total += (ai - bi).abs();
    }
    total
}

/// Expected number of distinct never-before-seen symbol values in `t`
/// future draws from `d`, when the `observed_m` most probable atoms are
/// identified with the symbols already observed. Atoms beyond those
/// each surface with probability 1 − (1−pᵢ)^t; every continuous draw is
/// new.
pub fn expected_new_symbols(d: &Distribution, observed_m: usize, t: u64) -> f64 {
    let unseen: f64 = d
        .atoms()
        .iter()
        .skip(observed_m)
        .map(|&p| 1.0 - (1.0 - p).powi(t.min(i32::MAX as u64) as i32))
        .sum();
    unseen + d.continuous_mass() * t as f64
}

/// A sorted probability vector (α₁ ≥ … ≥ α_m > 0, Σαᵢ = 1) defining the
/// composition of the convergence-experiment samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    probs: Vec<f64>,
}

impl AlphaVector {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty alpha vector".into()));
        }
        if probs.iter().any(|&a| !a.is_finite() || a <= 0.0) {
            return Err(Error::InvalidInput("alpha entries must be positive".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "alpha entries sum to {sum}, not 1"
            )));
        }
        probs.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    /// The profile of a length-n sample in which symbol i appears αᵢ·n
    /// times. Every αᵢ·n must be an integer.
    pub fn profile_at(&self, n: u64) -> Result<Profile> {
        let mut mults = Vec::with_capacity(self.probs.len());
        for &a in &self.probs {
            let exact = a * n as f64;
            let rounded = exact.round();
            if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
                return Err(Error::InvalidInput(format!(
                    "alpha entry {a} times n={n} is not a positive integer"
                )));
            }
            mults.push(rounded as u64);
        }
        Ok(Profile::from_multiplicities(&mults))
    }

    fn distribution(&self) -> Distribution {
        Distribution::new(self.probs.clone()).expect("alpha vector is a distribution")
    }
}

/// One row of the convergence experiment.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: u64,
    pub k_hat: usize,
    pub q_hat: f64,
    pub d_bits: f64,
    pub l1: f64,
}

/// For each n, builds the profile of the α-composed sample, computes its
/// high-profile distribution, and reports the KL divergence and ℓ₁
/// distance from the true composition.
pub fn convergence_experiment(alpha: &AlphaVector, n_values: &[u64]) -> Result<Vec<ConvergenceRow>> {
    convergence_experiment_with(alpha, n_values, &SearchConfig::default())
}

pub fn convergence_experiment_with(
    alpha: &AlphaVector,
    n_values: &[u64],
    cfg: &SearchConfig,
) -> Result<Vec<ConvergenceRow>> {
    let truth = alpha.distribution();
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let profile = alpha.profile_at(n)?;
        let pml = pml_search(&profile, cfg)?;
        let d_bits = kl_divergence(&truth, &pml.distribution)?;
        let l1 = l1_distance(&truth, &pml.distribution);
        rows.push(ConvergenceRow {
            n,
            k_hat: pml.distribution.k(),
            q_hat: pml.distribution.continuous_mass(),
            d_bits,
            l1,
        });
    }
    Ok(rows)
}
