//! Relabeling invariance of patterns, exhaustively over all sequences up
//! to length 10 on a 4-token alphabet.

use profilest::patterns::{pattern_of, Pattern, TokenSequence};

const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];

fn to_sequence(digits: &[usize], relabel: &[usize; 4]) -> TokenSequence {
    TokenSequence::from_tokens(digits.iter().map(|&d| ALPHABET[relabel[d]].to_owned()))
        .expect("nonempty")
}

fn all_permutations() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    let mut items = [0usize, 1, 2, 3];
    fn heap(items: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
        if k == 1 {
            out.push(*items);
            return;
        }
        heap(items, k - 1, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                items.swap(i, k - 1);
            } else {
                items.swap(0, k - 1);
            }
            heap(items, k - 1, out);
        }
    }
    heap(&mut items, 4, &mut out);
    out
}

fn for_each_sequence(len: usize, mut f: impl FnMut(&[usize])) {
    let mut digits = vec![0usize; len];
    loop {
        f(&digits);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < 4 {
                break;
            }
            digits[pos] = 0;
        }
    }
}

#[test]
fn relabeling_invariance_all_permutations_short() {
    // every sequence up to length 7, every one of the 24 relabelings
    let identity = [0usize, 1, 2, 3];
    let perms = all_permutations();
    for len in 1..=7usize {
        for_each_sequence(len, |digits| {
            let base = pattern_of(&to_sequence(digits, &identity));
            for perm in &perms {
                let relabeled = pattern_of(&to_sequence(digits, perm));
                assert_eq!(relabeled, base, "digits {digits:?} perm {perm:?}");
            }
        });
    }
}

#[test]
fn relabeling_invariance_lengths_8_to_10() {
    // longer sequences exhaustively, against a fixed set of nontrivial
    // relabelings (a 4-cycle, a transposition, and their product)
    let identity = [0usize, 1, 2, 3];
    let relabelings = [[1usize, 2, 3, 0], [1usize, 0, 2, 3], [2usize, 0, 3, 1]];
    for len in 8..=10usize {
        for_each_sequence(len, |digits| {
            let base = pattern_of(&to_sequence(digits, &identity));
            for perm in &relabelings {
                let relabeled = pattern_of(&to_sequence(digits, perm));
                assert_eq!(relabeled, base, "digits {digits:?} perm {perm:?}");
            }
        });
    }
}

#[test]
fn patterns_satisfy_index_property_everywhere() {
    for len in 1..=8usize {
        for_each_sequence(len, |digits| {
            let p = pattern_of(&to_sequence(digits, &[0, 1, 2, 3]));
            // revalidation through the checked constructor
            Pattern::new(p.indices().to_vec()).expect("index property");
        });
    }
}
