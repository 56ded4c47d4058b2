//! The closed-form evaluator against the brute-force sequence-enumeration
//! oracle, across every pattern up to length 7 and a bank of seeded random
//! discrete distributions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use profilest::enumerate::patterns_of_length;
use profilest::patterns::{profile_of, Profile};
use profilest::probability::{
    oracle_pattern_distribution, pattern_prob, pattern_prob_uniform, Distribution,
};

fn random_discrete(rng: &mut ChaCha8Rng) -> Distribution {
    let k = rng.gen_range(1..=4);
    let mut atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = atoms.iter().sum();
    atoms.iter_mut().for_each(|a| *a /= total);
    Distribution::new(atoms).unwrap()
}

fn assert_rel_close(a: f64, b: f64, rel: f64, context: &str) {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        return;
    }
    assert!(
        (a - b).abs() <= rel * scale,
        "{context}: {a} vs {b} (rel {})",
        (a - b).abs() / scale
    );
}

#[test]
fn exact_sum_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    let patterns_by_n: Vec<Vec<_>> = (1..=7).map(patterns_of_length).collect();
    for trial in 0..30 {
        let d = random_discrete(&mut rng);
        for (n, patterns) in patterns_by_n.iter().enumerate() {
            let oracle = oracle_pattern_distribution(&d, n + 1).unwrap();
            for p in patterns {
                let fast = pattern_prob(&d, p).unwrap().value;
                let brute = oracle.get(p).copied().unwrap_or(0.0);
                assert_rel_close(fast, brute, 1e-9, &format!("trial {trial}, pattern {p}"));
            }
        }
    }
}

#[test]
fn oracle_mass_is_profile_blind_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(7_1234);
    for _ in 0..10 {
        let d = random_discrete(&mut rng);
        for n in 2..=6usize {
            let oracle = oracle_pattern_distribution(&d, n).unwrap();
            let total: f64 = oracle.values().sum();
            assert!((total - 1.0).abs() < 1e-12, "mass {total} at n={n}");
            // patterns sharing a profile receive identical mass
            let mut by_profile: HashMap<Profile, Vec<f64>> = HashMap::new();
            for p in patterns_of_length(n) {
                let mass = oracle.get(&p).copied().unwrap_or(0.0);
                by_profile.entry(profile_of(&p)).or_default().push(mass);
            }
            for (profile, masses) in by_profile {
                let lo = masses.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = masses.iter().cloned().fold(0.0f64, f64::max);
                assert!(
                    hi - lo <= 1e-12 * hi.max(1e-300),
                    "profile {profile}: spread {lo}..{hi}"
                );
            }
        }
    }
}

#[test]
fn normalization_holds_with_continuous_mass() {
    for d in [
        Distribution::with_continuous(vec![0.3, 0.2], 0.5).unwrap(),
        Distribution::with_continuous(vec![0.6], 0.4).unwrap(),
        Distribution::continuous(),
    ] {
        for n in 1..=6usize {
            let total: f64 = patterns_of_length(n)
                .iter()
                .map(|p| pattern_prob(&d, p).unwrap().value)
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}: total {total}");
        }
    }
}

#[test]
fn uniform_formula_matches_generic_evaluation() {
    // k^m̲/k^n equals the generic evaluator on every pattern with matching
    // (m, n); exercised through the oracle for small k.
    for k in 1..=4u64 {
        let d = Distribution::uniform(k as usize);
        for n in 1..=6usize {
            let oracle = oracle_pattern_distribution(&d, n).unwrap();
            for p in patterns_of_length(n) {
                let m = p.num_symbols() as u64;
                let formula = pattern_prob_uniform(k, m, n as u64).unwrap().value;
                let brute = oracle.get(&p).copied().unwrap_or(0.0);
                assert_rel_close(formula, brute, 1e-9, &format!("uniform({k}), {p}"));
            }
        }
    }
}
