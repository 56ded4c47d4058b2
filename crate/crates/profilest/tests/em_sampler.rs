//! Validity of the Metropolis assignment sampler: its empirical visit
//! distribution must match the exactly enumerated posterior.

use std::collections::HashMap;

use profilest::patterns::Pattern;
use profilest::pml_em::sample_assignments;
use profilest::probability::Distribution;

/// Enumerates every feasible assignment of the pattern's symbols (sorted
/// by descending multiplicity) into the distribution's slots, singleton
/// symbols optionally continuous, weighted by the complete-data
/// likelihood.
fn exact_posterior(mults: &[u64], d: &Distribution) -> HashMap<Vec<Option<usize>>, f64> {
    let k = d.k();
    let q = d.continuous_mass();
    let mut out = HashMap::new();
    let mut target: Vec<Option<usize>> = vec![None; mults.len()];
    let mut used = vec![false; k];
    fn go(
        j: usize,
        mults: &[u64],
        atoms: &[f64],
        q: f64,
        weight: f64,
        target: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        out: &mut HashMap<Vec<Option<usize>>, f64>,
    ) {
        if j == mults.len() {
            if weight > 0.0 {
                *out.entry(target.clone()).or_insert(0.0) += weight;
            }
            return;
        }
        for s in 0..atoms.len() {
            if used[s] {
                continue;
            }
            used[s] = true;
            target[j] = Some(s);
            go(
                j + 1,
                mults,
                atoms,
                q,
                weight * atoms[s].powi(mults[j] as i32),
                target,
                used,
                out,
            );
            used[s] = false;
            target[j] = None;
        }
        if mults[j] == 1 && q > 0.0 {
            target[j] = None;
            go(j + 1, mults, atoms, q, weight * q, target, used, out);
        }
    }
    go(
        0,
        mults,
        d.atoms(),
        q,
        1.0,
        &mut target,
        &mut used,
        &mut out,
    );
    let total: f64 = out.values().sum();
    out.values_mut().for_each(|w| *w /= total);
    out
}

fn total_variation(
    exact: &HashMap<Vec<Option<usize>>, f64>,
    sampled: &HashMap<Vec<Option<usize>>, u64>,
) -> f64 {
    let n: u64 = sampled.values().sum();
    let mut tv = 0.0;
    for (state, &p) in exact {
        let emp = sampled.get(state).copied().unwrap_or(0) as f64 / n as f64;
        tv += (p - emp).abs();
    }
    for state in sampled.keys() {
        if !exact.contains_key(state) {
            tv += sampled[state] as f64 / n as f64;
        }
    }
    tv / 2.0
}

#[test]
fn chain_matches_uniform_posterior_on_1123() {
    // uniform(5) on pattern 1123: all 60 injections equally likely
    let pattern = Pattern::parse("1 1 2 3").unwrap();
    let d = Distribution::uniform(5);
    let exact = exact_posterior(&[2, 1, 1], &d);
    assert_eq!(exact.len(), 60);
    let sampled = sample_assignments(&pattern, &d, 300_000, 5_000, 90).unwrap();
    let tv = total_variation(&exact, &sampled);
    assert!(tv <= 0.02, "total variation {tv}");
}

#[test]
fn chain_matches_skewed_posterior() {
    let pattern = Pattern::parse("1 1 2 3").unwrap();
    let d = Distribution::new(vec![0.4, 0.3, 0.15, 0.1, 0.05]).unwrap();
    let exact = exact_posterior(&[2, 1, 1], &d);
    let sampled = sample_assignments(&pattern, &d, 400_000, 10_000, 17).unwrap();
    let tv = total_variation(&exact, &sampled);
    assert!(tv <= 0.02, "total variation {tv}");
}

#[test]
fn chain_matches_posterior_with_continuous_pool() {
    // mixed distribution: singletons may sit in the continuous pool
    let pattern = Pattern::parse("1 1 2 3").unwrap();
    let d = Distribution::with_continuous(vec![0.4, 0.3], 0.3).unwrap();
    let exact = exact_posterior(&[2, 1, 1], &d);
    let sampled = sample_assignments(&pattern, &d, 400_000, 10_000, 23).unwrap();
    let tv = total_variation(&exact, &sampled);
    assert!(tv <= 0.02, "total variation {tv}");
}
