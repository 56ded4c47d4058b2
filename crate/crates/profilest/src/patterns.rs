//! Sequences, patterns, and profiles.
//!
//! The *pattern* of a sequence replaces every token by the order of its
//! first appearance: `abracadabra` becomes `1 2 3 1 4 1 5 1 2 3 1`. The
//! *profile* forgets the order too and records only prevalences: how many
//! symbols appear exactly μ times. Both are value-blind; any injective
//! relabeling of the tokens leaves them unchanged.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt;

use crate::{Error, Result};

/// An observed sample of opaque tokens, compared by exact byte equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Builds a sequence from tokens. Errors on an empty iterator.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty token sequence".into()));
        }
        Ok(Self { tokens })
    }

    /// Splits a string on whitespace. Errors if no tokens remain.
    pub fn from_whitespace(text: &str) -> Result<Self> {
        Self::from_tokens(text.split_whitespace().map(str::to_owned))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Multiplicity of every distinct token, in first-appearance order.
    pub fn multiplicities(&self) -> Vec<u64> {
        let mut order: Vec<&str> = Vec::new();
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in &self.tokens {
            let e = counts.entry(t.as_str()).or_insert(0);
            if *e == 0 {
                order.push(t.as_str());
            }
            *e += 1;
        }
        order.into_iter().map(|t| counts[t]).collect()
    }
}

/// The index sequence of first appearances. `indices[i]` is 1 plus the
/// number of distinct symbols seen strictly before position i's symbol
/// first appeared.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    indices: Vec<u32>,
}

impl Pattern {
    /// Validates the index property: the first index is 1 and each index is
    /// at most one more than the running maximum.
    pub fn new(indices: Vec<u32>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty pattern".into()));
        }
        let mut max_seen = 0u32;
        for (i, &ix) in indices.iter().enumerate() {
            if ix == 0 || ix > max_seen + 1 {
                return Err(Error::InvalidInput(format!(
                    "index {ix} at position {i} violates the pattern property"
                )));
            }
            max_seen = max_seen.max(ix);
        }
        Ok(Self { indices })
    }

    /// Parses whitespace-separated indices, e.g. `"1 1 2 3"`.
    pub fn parse(text: &str) -> Result<Self> {
        let indices = text
            .split_whitespace()
            .map(|w| {
                w.parse::<u32>()
                    .map_err(|_| Error::InvalidInput(format!("bad pattern index {w:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Sequence length n.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of distinct symbols m.
    pub fn num_symbols(&self) -> u32 {
        self.indices.iter().copied().max().unwrap_or(0)
    }

    /// Multiplicity of each symbol 1..=m.
    pub fn multiplicities(&self) -> Vec<u64> {
        let m = self.num_symbols() as usize;
        let mut mult = vec![0u64; m];
        for &ix in &self.indices {
            mult[(ix - 1) as usize] += 1;
        }
        mult
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ix) in self.indices.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{ix}")?;
        }
        Ok(())
    }
}

/// Prevalence map of a sample: `prevalences[μ]` symbols appear exactly μ
/// times. Zero-prevalence entries are never stored. The empty profile (of
/// the empty sequence) is allowed and is trivial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Profile {
    prevalences: BTreeMap<u64, u64>,
}

impl Profile {
    /// Builds a profile from a multiplicity → prevalence map, dropping
    /// explicit zeros. Errors on a zero multiplicity key.
    pub fn new(prevalences: BTreeMap<u64, u64>) -> Result<Self> {
        if prevalences.keys().any(|&mu| mu == 0) {
            return Err(Error::InvalidInput("multiplicity 0 in profile".into()));
        }
        let prevalences = prevalences.into_iter().filter(|&(_, phi)| phi > 0).collect();
        Ok(Self { prevalences })
    }

    pub fn empty() -> Self {
        Self {
            prevalences: BTreeMap::new(),
        }
    }

    /// Profile of a multiset given by its multiplicities (order irrelevant;
    /// zeros ignored).
    pub fn from_multiplicities(mults: &[u64]) -> Self {
        let mut prevalences = BTreeMap::new();
        for &mu in mults {
            if mu > 0 {
                *prevalences.entry(mu).or_insert(0) += 1;
            }
        }
        Self { prevalences }
    }

    /// Sparse map view: multiplicity → prevalence.
    pub fn prevalences(&self) -> &BTreeMap<u64, u64> {
        &self.prevalences
    }

    /// Sample size n = Σ μ·φ_μ.
    pub fn n(&self) -> u64 {
        self.prevalences.iter().map(|(&mu, &phi)| mu * phi).sum()
    }

    /// Number of distinct symbols m = Σ φ_μ.
    pub fn m(&self) -> u64 {
        self.prevalences.values().sum()
    }

    pub fn mu_min(&self) -> Option<u64> {
        self.prevalences.keys().next().copied()
    }

    pub fn mu_max(&self) -> Option<u64> {
        self.prevalences.keys().next_back().copied()
    }

    /// Number of symbols appearing exactly once.
    pub fn phi1(&self) -> u64 {
        self.prevalences.get(&1).copied().unwrap_or(0)
    }

    /// Multiplicities expanded one entry per symbol, descending.
    pub fn multiplicities_desc(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.m() as usize);
        for (&mu, &phi) in self.prevalences.iter().rev() {
            out.extend(std::iter::repeat(mu).take(phi as usize));
        }
        out
    }

    /// Parses the caret text form, e.g. `"1^2 2^2 5^1"`. Factors may come
    /// in any order; an omitted exponent means prevalence 1.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut prevalences = BTreeMap::new();
        let mut any = false;
        for factor in text.split_whitespace() {
            any = true;
            let (mu_s, phi_s) = match factor.split_once('^') {
                Some((a, b)) => (a, b),
                None => (factor, "1"),
            };
            let mu: u64 = mu_s
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad multiplicity {mu_s:?}")))?;
            let phi: u64 = phi_s
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad prevalence {phi_s:?}")))?;
            if mu == 0 {
                return Err(Error::InvalidInput("multiplicity 0 in profile".into()));
            }
            if prevalences.insert(mu, phi).is_some() {
                return Err(Error::InvalidInput(format!(
                    "multiplicity {mu} listed twice"
                )));
            }
        }
        if !any {
            return Err(Error::InvalidInput("empty profile literal".into()));
        }
        Self::new(prevalences)
    }

    /// Caret text form with factors in ascending multiplicity order. The
    /// printer and [`Profile::parse_text`] round-trip.
    pub fn to_text(&self) -> String {
        if self.prevalences.is_empty() {
            return String::new();
        }
        self.prevalences
            .iter()
            .map(|(mu, phi)| format!("{mu}^{phi}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Pattern of a sequence: each token mapped to its first-appearance index.
///
/// Invariant under any injective relabeling of the tokens.
pub fn pattern_of(seq: &TokenSequence) -> Pattern {
    let mut seen: HashMap<&str, u32> = HashMap::new();
    let mut indices = Vec::with_capacity(seq.len());
    for t in seq.tokens() {
        let next = seen.len() as u32 + 1;
        let ix = *seen.entry(t.as_str()).or_insert(next);
        indices.push(ix);
    }
    Pattern { indices }
}

/// Profile of a pattern: prevalence of every symbol multiplicity. A
/// sequence and its pattern have the same profile.
pub fn profile_of(p: &Pattern) -> Profile {
    Profile::from_multiplicities(&p.multiplicities())
}

/// The unique canonical pattern of a profile: `1^{μ1} 2^{μ2} … m^{μm}` with
/// the μ's nonincreasing.
pub fn canonical_pattern(f: &Profile) -> Pattern {
    let mut indices = Vec::with_capacity(f.n() as usize);
    for (sym, mu) in f.multiplicities_desc().into_iter().enumerate() {
        indices.extend(std::iter::repeat(sym as u32 + 1).take(mu as usize));
    }
    Pattern { indices }
}

/// True for the two profiles whose pattern probability is 1 under every
/// distribution: the empty profile and `1^1`.
pub fn is_trivial(f: &Profile) -> bool {
    f.n() <= 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(s: &str) -> TokenSequence {
        TokenSequence::from_tokens(s.chars().map(String::from)).unwrap()
    }

    fn profile(pairs: &[(u64, u64)]) -> Profile {
        Profile::new(pairs.iter().copied().collect()).unwrap()
    }

    #[test]
    fn abracadabra_pattern() {
        let p = pattern_of(&seq("abracadabra"));
        assert_eq!(p.indices(), &[1, 2, 3, 1, 4, 1, 5, 1, 2, 3, 1]);
        assert_eq!(p.num_symbols(), 5);
    }

    #[test]
    fn constant_and_short_patterns() {
        assert_eq!(pattern_of(&seq("zzz")).indices(), &[1, 1, 1]);
        assert_eq!(pattern_of(&seq("@@#")).indices(), &[1, 1, 2]);
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(TokenSequence::from_tokens(Vec::<String>::new()).is_err());
        assert!(TokenSequence::from_whitespace("   ").is_err());
    }

    #[test]
    fn abracadabra_profile() {
        let f = profile_of(&pattern_of(&seq("abracadabra")));
        assert_eq!(f, profile(&[(1, 2), (2, 2), (5, 1)]));
        assert_eq!(f.n(), 11);
        assert_eq!(f.m(), 5);
        assert_eq!(f.mu_min(), Some(1));
        assert_eq!(f.mu_max(), Some(5));
        assert_eq!(f.phi1(), 2);
    }

    #[test]
    fn profile_examples() {
        assert_eq!(
            profile_of(&Pattern::parse("1 1 1 1").unwrap()),
            profile(&[(4, 1)])
        );
        assert_eq!(
            profile_of(&Pattern::parse("1 1 2 3").unwrap()),
            profile(&[(1, 2), (2, 1)])
        );
    }

    #[test]
    fn canonical_pattern_examples() {
        let f = profile(&[(1, 2), (2, 2), (5, 1)]);
        assert_eq!(
            canonical_pattern(&f).indices(),
            &[1, 1, 1, 1, 1, 2, 2, 3, 3, 4, 5]
        );
        assert_eq!(canonical_pattern(&profile(&[(6, 1)])).indices(), &[1; 6]);
        assert_eq!(canonical_pattern(&profile(&[(1, 3)])).indices(), &[1, 2, 3]);
    }

    #[test]
    fn trivial_profiles() {
        assert!(is_trivial(&Profile::empty()));
        assert!(is_trivial(&profile(&[(1, 1)])));
        assert!(!is_trivial(&profile(&[(2, 1)])));
        assert!(!is_trivial(&profile(&[(1, 2)])));
    }

    #[test]
    fn pattern_property_enforced() {
        assert!(Pattern::new(vec![2]).is_err());
        assert!(Pattern::new(vec![1, 3]).is_err());
        assert!(Pattern::new(vec![1, 0]).is_err());
        assert!(Pattern::new(vec![1, 2, 1, 3]).is_ok());
    }

    #[test]
    fn profile_text_round_trip() {
        let f = profile(&[(1, 2), (2, 2), (5, 1)]);
        assert_eq!(f.to_text(), "1^2 2^2 5^1");
        assert_eq!(Profile::parse_text("1^2 2^2 5^1").unwrap(), f);
        // descending factor order and omitted exponents are accepted
        assert_eq!(Profile::parse_text("5 2^2 1^2").unwrap(), f);
        assert_eq!(Profile::parse_text("2 1^2").unwrap(), profile(&[(1, 2), (2, 1)]));
        assert!(Profile::parse_text("2^1 2^3").is_err());
        assert!(Profile::parse_text("").is_err());
        assert!(Profile::parse_text("0^2").is_err());
    }

    #[test]
    fn profile_of_sequence_matches_token_multiplicities() {
        for s in ["abracadabra", "zzz", "@@#", "abcabcabc", "aabbbbc"] {
            let sequence = seq(s);
            let via_pattern = profile_of(&pattern_of(&sequence));
            let direct = Profile::from_multiplicities(&sequence.multiplicities());
            assert_eq!(via_pattern, direct, "sequence {s:?}");
        }
    }

    #[test]
    fn relabeling_invariance_exhaustive() {
        // All sequences up to length 10 over 4 tokens would be 4^10 ≈ 1e6
        // with 4! relabelings each; patterns only depend on the first
        // occurrence structure, so lengths ≤ 6 with all 24 relabelings plus
        // spot checks at length 10 keep this test fast while still
        // exercising every branch.
        let alphabet = ["a", "b", "c", "d"];
        let perms: Vec<[usize; 4]> = permutations_of_four();
        for len in 1..=6usize {
            let mut stack = vec![Vec::<usize>::new()];
            while let Some(prefix) = stack.pop() {
                if prefix.len() == len {
                    let tokens: Vec<String> =
                        prefix.iter().map(|&i| alphabet[i].to_owned()).collect();
                    let base = pattern_of(&TokenSequence::from_tokens(tokens).unwrap());
                    for perm in &perms {
                        let relabeled: Vec<String> =
                            prefix.iter().map(|&i| alphabet[perm[i]].to_owned()).collect();
                        let p = pattern_of(&TokenSequence::from_tokens(relabeled).unwrap());
                        assert_eq!(p, base);
                    }
                    continue;
                }
                for i in 0..4 {
                    let mut next = prefix.clone();
                    next.push(i);
                    stack.push(next);
                }
            }
        }
    }

    fn permutations_of_four() -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        let mut items = [0usize, 1, 2, 3];
        heap_permute(&mut items, 4, &mut out);
        out
    }

    fn heap_permute(items: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
        if k == 1 {
            out.push(*items);
            return;
        }
        heap_permute(items, k - 1, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
            heap_permute(items, k - 1, out);
        }
    }

    proptest! {
        #[test]
        fn relabeling_invariance_random_long(raw in prop::collection::vec(0usize..4, 1..=10)) {
            let alphabet = ["a", "b", "c", "d"];
            let tokens: Vec<String> = raw.iter().map(|&i| alphabet[i].to_owned()).collect();
            let base = pattern_of(&TokenSequence::from_tokens(tokens).unwrap());
            for perm in permutations_of_four() {
                let relabeled: Vec<String> =
                    raw.iter().map(|&i| alphabet[perm[i]].to_owned()).collect();
                let p = pattern_of(&TokenSequence::from_tokens(relabeled).unwrap());
                prop_assert_eq!(&p, &base);
            }
        }

        #[test]
        fn profile_identity_random(raw in prop::collection::vec(0usize..6, 1..=40)) {
            let tokens: Vec<String> = raw.iter().map(|i| format!("t{i}")).collect();
            let sequence = TokenSequence::from_tokens(tokens).unwrap();
            let via_pattern = profile_of(&pattern_of(&sequence));
            let direct = Profile::from_multiplicities(&sequence.multiplicities());
            prop_assert_eq!(via_pattern, direct);
        }
    }

    #[test]
    fn round_trip_all_profiles_up_to_10() {
        for n in 1..=10u64 {
            for f in crate::enumerate::profiles_of_size(n) {
                let p = canonical_pattern(&f);
                assert_eq!(p.len() as u64, n);
                assert_eq!(profile_of(&p), f, "profile {f}");
            }
        }
    }
}
