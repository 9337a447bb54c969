//! Words over the alphabet {1..n}: indices of noncommutative monomials.

use smallvec::SmallVec;
use std::cmp::Ordering;

/// A finite word; the empty word indexes the constant term. Ordered
/// graded-lexicographically (by weight, then letter-wise), which fixes the
/// canonical iteration and serialization order everywhere.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(SmallVec<[u8; 16]>);

impl Word {
    pub fn empty() -> Self {
        Word(SmallVec::new())
    }

    pub fn from_letters(letters: &[u8]) -> Self {
        Word(SmallVec::from_slice(letters))
    }

    pub fn single(letter: u8) -> Self {
        Word(SmallVec::from_slice(&[letter]))
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// The weight of the monomial x^I.
    pub fn weight(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn push(&self, letter: u8) -> Word {
        let mut v = self.0.clone();
        v.push(letter);
        Word(v)
    }

    /// Letter multiplicities as a vector of length n (1-based letters).
    pub fn multiplicities(&self, n: usize) -> Vec<u32> {
        let mut m = vec![0u32; n];
        for &l in self.0.iter() {
            m[(l - 1) as usize] += 1;
        }
        m
    }

    /// All words of exactly the given weight, in lexicographic order.
    pub fn enumerate(n: u8, weight: usize) -> Vec<Word> {
        if weight == 0 {
            return vec![Word::empty()];
        }
        let mut out = Vec::new();
        let mut cur = vec![1u8; weight];
        loop {
            out.push(Word::from_letters(&cur));
            // Odometer increment.
            let mut i = weight;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if cur[i] < n {
                    cur[i] += 1;
                    for c in cur.iter_mut().skip(i + 1) {
                        *c = 1;
                    }
                    break;
                }
            }
        }
    }

    /// Basis of I/I^(m+1): all words of weight 1..=m in graded-lex order.
    pub fn graded_basis(n: u8, m: usize) -> Vec<Word> {
        let mut out = Vec::new();
        for w in 1..=m {
            out.extend(Word::enumerate(n, w));
        }
        out
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let mut words = vec![
            Word::from_letters(&[2, 1]),
            Word::from_letters(&[1]),
            Word::empty(),
            Word::from_letters(&[1, 2]),
            Word::from_letters(&[2]),
            Word::from_letters(&[1, 1, 1]),
        ];
        words.sort();
        let expect: Vec<Word> = vec![
            Word::empty(),
            Word::from_letters(&[1]),
            Word::from_letters(&[2]),
            Word::from_letters(&[1, 2]),
            Word::from_letters(&[2, 1]),
            Word::from_letters(&[1, 1, 1]),
        ];
        assert_eq!(words, expect);
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(Word::enumerate(2, 3).len(), 8);
        assert_eq!(Word::enumerate(3, 2).len(), 9);
        assert_eq!(Word::graded_basis(2, 4).len(), 2 + 4 + 8 + 16);
    }

    #[test]
    fn multiplicities() {
        let w = Word::from_letters(&[1, 2, 1, 3]);
        assert_eq!(w.multiplicities(3), vec![2, 1, 1]);
    }
}
