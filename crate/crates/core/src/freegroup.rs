//! Reduced-word arithmetic in the free group on `a`, `b` and Cayley balls.
//!
//! Words are written with `a`, `A` (= a⁻¹), `b`, `B` (= b⁻¹) and `e` for the
//! identity. Every [`GroupElement`] is stored freely reduced, so equality of
//! elements is equality of words.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest ball radius [`ball`] will build; `|ball(12)| = 1_062_881`.
pub const DEFAULT_RADIUS_CAP: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("ball radius {radius} exceeds cap {cap}")]
    RadiusTooLarge { radius: u32, cap: u32 },
    #[error("invalid word character {0:?} (expected one of a, A, b, B, e)")]
    BadWord(char),
}

/// One of the four letters; the derive order `a < A < b < B` is the shortlex
/// letter order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Generator {
    A = 0,
    AInv = 1,
    B = 2,
    BInv = 3,
}

impl Generator {
    pub const ALL: [Generator; 4] = [Generator::A, Generator::AInv, Generator::B, Generator::BInv];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Generator {
        Self::ALL[i & 3]
    }

    #[inline]
    pub fn inv(self) -> Generator {
        Self::from_index(self.index() ^ 1)
    }

    pub fn to_char(self) -> char {
        match self {
            Generator::A => 'a',
            Generator::AInv => 'A',
            Generator::B => 'b',
            Generator::BInv => 'B',
        }
    }

    pub fn from_char(c: char) -> Option<Generator> {
        match c {
            'a' => Some(Generator::A),
            'A' => Some(Generator::AInv),
            'b' => Some(Generator::B),
            'B' => Some(Generator::BInv),
            _ => None,
        }
    }
}

/// A freely reduced word.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct GroupElement {
    word: Vec<Generator>,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self { word: Vec::new() }
    }

    pub fn generator(s: Generator) -> Self {
        Self { word: vec![s] }
    }

    /// Free reduction by a single stack scan.
    pub fn reduce<I: IntoIterator<Item = Generator>>(letters: I) -> Self {
        let mut word: Vec<Generator> = Vec::new();
        for s in letters {
            if word.last() == Some(&s.inv()) {
                word.pop();
            } else {
                word.push(s);
            }
        }
        Self { word }
    }

    pub fn word(&self) -> &[Generator] {
        &self.word
    }

    /// Word length.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }

    pub fn last(&self) -> Option<Generator> {
        self.word.last().copied()
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        // cancel the overlap between our tail and the other's head
        let mut k = 0;
        let n = self.word.len();
        while k < n && k < other.word.len() && self.word[n - 1 - k] == other.word[k].inv() {
            k += 1;
        }
        let mut word = Vec::with_capacity(n - k + other.word.len() - k);
        word.extend_from_slice(&self.word[..n - k]);
        word.extend_from_slice(&other.word[k..]);
        GroupElement { word }
    }

    /// `self · s`.
    pub fn mul_gen(&self, s: Generator) -> GroupElement {
        let mut word = self.word.clone();
        if word.last() == Some(&s.inv()) {
            word.pop();
        } else {
            word.push(s);
        }
        GroupElement { word }
    }

    pub fn inv(&self) -> GroupElement {
        GroupElement { word: self.word.iter().rev().map(|s| s.inv()).collect() }
    }

    /// Reduced form of `self · s^k`.
    pub fn gen_power(&self, s: Generator, k: u32) -> GroupElement {
        let mut g = self.clone();
        for _ in 0..k {
            if g.word.last() == Some(&s.inv()) {
                g.word.pop();
            } else {
                g.word.push(s);
            }
        }
        g
    }

    /// `s^n` for a signed exponent.
    pub fn power(s: Generator, n: i64) -> GroupElement {
        let letter = if n >= 0 { s } else { s.inv() };
        GroupElement { word: vec![letter; n.unsigned_abs() as usize] }
    }

    /// If this element is `a^n`, returns `n`.
    pub fn as_a_power(&self) -> Option<i64> {
        match self.word.first() {
            None => Some(0),
            Some(&first @ (Generator::A | Generator::AInv)) => {
                if self.word.iter().all(|&s| s == first) {
                    let n = self.word.len() as i64;
                    Some(if first == Generator::A { n } else { -n })
                } else {
                    None
                }
            }
            Some(_) => None,
        }
    }

    /// A uniformly random reduced word with length drawn uniformly in `0..=max_len`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_len: usize) -> GroupElement {
        let len = rng.gen_range(0..=max_len);
        let mut word: Vec<Generator> = Vec::with_capacity(len);
        for _ in 0..len {
            let s = loop {
                let s = Generator::from_index(rng.gen_range(0..4));
                if word.last() != Some(&s.inv()) {
                    break s;
                }
            };
            word.push(s);
        }
        GroupElement { word }
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.word.len().cmp(&other.word.len()).then_with(|| self.word.cmp(&other.word))
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.word.is_empty() {
            return f.write_str("e");
        }
        for s in &self.word {
            write!(f, "{}", s.to_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for GroupElement {
    type Err = GroupError;

    /// Accepts any (not necessarily reduced) word; `e` may appear anywhere.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut letters = Vec::with_capacity(s.len());
        for c in s.trim().chars() {
            if c == 'e' {
                continue;
            }
            letters.push(Generator::from_char(c).ok_or(GroupError::BadWord(c))?);
        }
        Ok(GroupElement::reduce(letters))
    }
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A finite set of sites in shortlex order, with an index and a right-neighbour
/// table (`neighbor(i, s)` is the position of `sites[i]·s`, if present).
#[derive(Clone)]
pub struct SiteSet {
    sites: Vec<GroupElement>,
    index: HashMap<GroupElement, usize>,
    neighbors: Vec<[u32; 4]>,
}

const NO_NEIGHBOR: u32 = u32::MAX;

impl SiteSet {
    /// Builds a site set from arbitrary elements; duplicates are dropped and
    /// the result is sorted shortlex.
    pub fn new(mut sites: Vec<GroupElement>) -> SiteSet {
        sites.sort();
        sites.dedup();
        let index: HashMap<GroupElement, usize> =
            sites.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        let neighbors = sites
            .iter()
            .map(|g| {
                let mut row = [NO_NEIGHBOR; 4];
                for s in Generator::ALL {
                    if let Some(&j) = index.get(&g.mul_gen(s)) {
                        row[s.index()] = j as u32;
                    }
                }
                row
            })
            .collect();
        SiteSet { sites, index, neighbors }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[GroupElement] {
        &self.sites
    }

    pub fn get(&self, i: usize) -> &GroupElement {
        &self.sites[i]
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    #[inline]
    pub fn neighbor(&self, i: usize, s: Generator) -> Option<usize> {
        let j = self.neighbors[i][s.index()];
        (j != NO_NEIGHBOR).then_some(j as usize)
    }

    /// Longest word length among the sites.
    pub fn radius(&self) -> usize {
        self.sites.last().map_or(0, GroupElement::len)
    }

    /// `{g·f : f ∈ self}`.
    pub fn translate(&self, g: &GroupElement) -> SiteSet {
        SiteSet::new(self.sites.iter().map(|f| g.mul(f)).collect())
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.sites.iter().all(|g| other.contains(g))
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.sites).finish()
    }
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &Self) -> bool {
        self.sites == other.sites
    }
}

impl Eq for SiteSet {}

/// Number of sites in `ball(r)`.
pub fn ball_size(r: u32) -> usize {
    if r == 0 {
        1
    } else {
        2 * 3usize.pow(r) - 1
    }
}

/// All reduced words of length at most `r`, shortlex-ordered, with the default cap.
pub fn ball(r: u32) -> Result<SiteSet, GroupError> {
    ball_capped(r, DEFAULT_RADIUS_CAP)
}

pub fn ball_capped(r: u32, cap: u32) -> Result<SiteSet, GroupError> {
    if r > cap {
        return Err(GroupError::RadiusTooLarge { radius: r, cap });
    }
    Ok(SiteSet::new(ball_words(r)))
}

/// Ball words in shortlex order without building the neighbour table.
pub fn ball_words(r: u32) -> Vec<GroupElement> {
    let mut out = Vec::with_capacity(ball_size(r));
    out.push(GroupElement::identity());
    let mut layer_start = 0;
    for _ in 0..r {
        let layer_end = out.len();
        // extending a sorted layer letter by letter keeps shortlex order
        for i in layer_start..layer_end {
            for s in Generator::ALL {
                if out[i].last() != Some(s.inv()) {
                    let next = out[i].mul_gen(s);
                    out.push(next);
                }
            }
        }
        layer_start = layer_end;
    }
    out
}

/// Shared handle to a ball; balls are reused heavily by the verifiers.
pub fn shared_ball(r: u32) -> Result<Arc<SiteSet>, GroupError> {
    ball(r).map(Arc::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(s: &str) -> GroupElement {
        s.parse().unwrap()
    }

    /// Repeatedly removes the first cancelling pair until none is left.
    fn naive_reduce(mut v: Vec<Generator>) -> Vec<Generator> {
        loop {
            let pos = v.windows(2).position(|p| p[0] == p[1].inv());
            match pos {
                Some(i) => {
                    v.drain(i..i + 2);
                }
                None => return v,
            }
        }
    }

    fn letters(s: &str) -> Vec<Generator> {
        s.chars().map(|c| Generator::from_char(c).unwrap()).collect()
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(GroupElement::reduce(letters("aA")), GroupElement::identity());
        assert_eq!(GroupElement::reduce(letters("abBa")).to_string(), "aa");
        let input = letters("aBbbAa");
        assert_eq!(naive_reduce(input.clone()), letters("ab"));
        assert_eq!(GroupElement::reduce(input).to_string(), "ab");
    }

    #[test]
    fn mul_examples() {
        assert!(w("a").mul(&w("A")).is_identity());
        assert_eq!(GroupElement::identity().mul(&w("abAB")), w("abAB"));
        let oracle = naive_reduce(letters("abBa"));
        assert_eq!(w("ab").mul(&w("Ba")).word(), &oracle[..]);
        assert_eq!(w("ab").mul(&w("Ba")).to_string(), "aa");
    }

    #[test]
    fn inv_examples() {
        assert!(GroupElement::identity().inv().is_identity());
        assert_eq!(w("ab").inv().to_string(), "BA");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g = GroupElement::random(&mut rng, 10);
            assert_eq!(g.inv().inv(), g);
            assert!(g.mul(&g.inv()).is_identity());
        }
    }

    #[test]
    fn generator_inverse_is_involution() {
        for s in Generator::ALL {
            assert_eq!(s.inv().inv(), s);
            assert_ne!(s.inv(), s);
        }
    }

    #[test]
    fn ball_examples() {
        assert_eq!(ball(0).unwrap().sites(), &[GroupElement::identity()]);
        let b1: Vec<String> = ball(1).unwrap().sites().iter().map(|g| g.to_string()).collect();
        assert_eq!(b1, ["e", "a", "A", "b", "B"]);
        assert_eq!(ball(2).unwrap().len(), 17);
        assert_eq!(
            ball(13).unwrap_err(),
            GroupError::RadiusTooLarge { radius: 13, cap: DEFAULT_RADIUS_CAP }
        );
    }

    #[test]
    fn ball_sizes_and_order() {
        for r in 1..=8 {
            let words = ball_words(r);
            assert_eq!(words.len(), 2 * 3usize.pow(r) - 1);
            assert!(words.windows(2).all(|p| p[0] < p[1]), "not strictly shortlex at r={r}");
            let smaller = SiteSet::new(ball_words(r - 1));
            let bigger = SiteSet::new(words);
            assert!(smaller.is_subset(&bigger));
        }
    }

    #[test]
    fn gen_power_examples() {
        assert_eq!(GroupElement::identity().gen_power(Generator::A, 3).to_string(), "aaa");
        assert!(w("A").gen_power(Generator::A, 1).is_identity());
        let oracle = naive_reduce(letters("bAaa"));
        assert_eq!(w("bA").gen_power(Generator::A, 2).word(), &oracle[..]);
        assert_eq!(w("bA").gen_power(Generator::A, 2).to_string(), "ba");
    }

    #[test]
    fn associativity_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let g1 = GroupElement::random(&mut rng, 8);
            let g2 = GroupElement::random(&mut rng, 8);
            let g3 = GroupElement::random(&mut rng, 8);
            assert_eq!(g1.mul(&g2).mul(&g3), g1.mul(&g2.mul(&g3)));
        }
    }

    #[test]
    fn word_syntax() {
        assert_eq!(w("e").to_string(), "e");
        assert_eq!(w("abA").to_string(), "abA");
        assert_eq!(w("aAbe").to_string(), "b");
        assert_eq!("ax".parse::<GroupElement>().unwrap_err(), GroupError::BadWord('x'));
        let json = serde_json::to_string(&w("aBBa")).unwrap();
        assert_eq!(json, "\"aBBa\"");
        assert_eq!(serde_json::from_str::<GroupElement>("\"aA\"").unwrap(), GroupElement::identity());
    }

    #[test]
    fn a_power_detection() {
        assert_eq!(w("aaa").as_a_power(), Some(3));
        assert_eq!(w("AA").as_a_power(), Some(-2));
        assert_eq!(w("e").as_a_power(), Some(0));
        assert_eq!(w("ab").as_a_power(), None);
        assert_eq!(GroupElement::power(Generator::A, -3), w("AAA"));
    }

    #[test]
    fn neighbor_table_matches_multiplication() {
        let b = ball(3).unwrap();
        for (i, g) in b.sites().iter().enumerate() {
            for s in Generator::ALL {
                let expected = b.index_of(&g.mul_gen(s));
                assert_eq!(b.neighbor(i, s), expected);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word_strategy() -> impl Strategy<Value = Vec<Generator>> {
            proptest::collection::vec((0usize..4).prop_map(Generator::from_index), 0..24)
        }

        proptest! {
            #[test]
            fn reduce_is_idempotent(v in word_strategy()) {
                let once = GroupElement::reduce(v.clone());
                let twice = GroupElement::reduce(once.word().to_vec());
                prop_assert_eq!(&once, &twice);
                prop_assert_eq!(once.word(), &naive_reduce(v)[..]);
            }

            #[test]
            fn display_parse_round_trip(v in word_strategy()) {
                let g = GroupElement::reduce(v);
                prop_assert_eq!(g.to_string().parse::<GroupElement>().unwrap(), g);
            }
        }
    }
}
