//! Exhaustive enumeration helpers: integer partitions, the profiles they
//! induce, and all patterns of a given length. These drive the exhaustive
//! sweeps in the test suites and are cheap up to n ≈ 12.

use crate::patterns::{Pattern, Profile};

/// All integer partitions of `n` in nonincreasing part order, largest
/// first. `partitions(4)` yields `[4] [3,1] [2,2] [2,1,1] [1,1,1,1]`.
pub fn partitions(n: u64) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn go(remaining: u64, max_part: u64, current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        let mut part = remaining.min(max_part);
        while part >= 1 {
            current.push(part);
            go(remaining - part, part, current, out);
            current.pop();
            part -= 1;
        }
    }
    go(n, n, &mut current, &mut out);
    out
}

/// All profiles with sample size exactly `n` (one per integer partition of
/// `n`, the parts being the symbol multiplicities).
pub fn profiles_of_size(n: u64) -> Vec<Profile> {
    partitions(n)
        .iter()
        .map(|parts| Profile::from_multiplicities(parts))
        .collect()
}

/// All valid patterns of length `n` (sequences satisfying the index
/// property). There are Bell(n) of them; keep n ≤ 9 or so.
pub fn patterns_of_length(n: usize) -> Vec<Pattern> {
    let mut out = Vec::new();
    let mut current: Vec<u32> = Vec::with_capacity(n);
    fn go(n: usize, max_seen: u32, current: &mut Vec<u32>, out: &mut Vec<Pattern>) {
        if current.len() == n {
            out.push(Pattern::new(current.clone()).expect("index property holds"));
            return;
        }
        for ix in 1..=max_seen + 1 {
            current.push(ix);
            go(n, max_seen.max(ix), current, out);
            current.pop();
        }
    }
    go(n, 0, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::profile_of;

    #[test]
    fn partition_counts() {
        // p(n) for n = 1..=10
        let expected = [1, 2, 3, 5, 7, 11, 15, 22, 30, 42];
        for (i, &count) in expected.iter().enumerate() {
            assert_eq!(partitions(i as u64 + 1).len(), count);
        }
    }

    #[test]
    fn partitions_of_four() {
        assert_eq!(
            partitions(4),
            vec![
                vec![4],
                vec![3, 1],
                vec![2, 2],
                vec![2, 1, 1],
                vec![1, 1, 1, 1]
            ]
        );
    }

    #[test]
    fn pattern_counts_are_bell_numbers() {
        let bell = [1usize, 2, 5, 15, 52, 203, 877];
        for (i, &count) in bell.iter().enumerate() {
            assert_eq!(patterns_of_length(i + 1).len(), count);
        }
    }

    #[test]
    fn patterns_are_distinct_and_valid() {
        let pats = patterns_of_length(5);
        for w in pats.windows(2) {
            assert_ne!(w[0], w[1]);
        }
        // every profile of size 5 is hit by at least one pattern
        for f in profiles_of_size(5) {
            assert!(pats.iter().any(|p| profile_of(p) == f));
        }
    }
}
