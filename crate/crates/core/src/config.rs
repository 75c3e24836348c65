//! Alphabets, finite distributions and partial configurations over site sets.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::freegroup::{GroupElement, SiteSet};

/// Default cap on `size^|sites|` for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 24;

/// Symbol index into an [`Alphabet`].
pub type Symbol = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("enumeration of {size}^{sites} configurations exceeds cap {cap}")]
    EnumerationTooLarge { size: u32, sites: usize, cap: u64 },
    #[error("cannot parse alphabet {0:?} (expected plain:n, z2:m or star:m)")]
    BadAlphabet(String),
    #[error("symbol {symbol} out of range for alphabet {alphabet}")]
    SymbolOutOfRange { symbol: Symbol, alphabet: Alphabet },
    #[error("weights do not form a probability vector: {0}")]
    BadWeights(String),
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Group(#[from] crate::freegroup::GroupError),
}

/// A finite alphabet. Symbols are indices `0..size()`.
///
/// * `Plain(n)`: `U_n`, labelled `1..=n`.
/// * `Z2Product(m)`: `(Z/2)^m`; symbol `i` has bit-plane `k` equal to bit
///   `k - 1` of `i` (plane 1 is the least significant bit).
/// * `StarExtended(m)`: `(Z/2)^m` followed by one extra symbol `*` at index `2^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Alphabet {
    Plain(u32),
    Z2Product(u32),
    StarExtended(u32),
}

impl Alphabet {
    /// `U_2` as bit vectors of length 1.
    pub const U2: Alphabet = Alphabet::Z2Product(1);
    /// `{0, 1, *}`.
    pub const STAR1: Alphabet = Alphabet::StarExtended(1);

    pub fn size(&self) -> u32 {
        match *self {
            Alphabet::Plain(n) => n,
            Alphabet::Z2Product(m) => 1 << m,
            Alphabet::StarExtended(m) => (1 << m) + 1,
        }
    }

    pub fn planes(&self) -> Option<u32> {
        match *self {
            Alphabet::Plain(_) => None,
            Alphabet::Z2Product(m) | Alphabet::StarExtended(m) => Some(m),
        }
    }

    pub fn star(&self) -> Option<Symbol> {
        match *self {
            Alphabet::StarExtended(m) => Some(1 << m),
            _ => None,
        }
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s < self.size()
    }

    /// Bit-plane `plane` (1-based) of a bit-vector symbol.
    #[inline]
    pub fn plane_bit(s: Symbol, plane: u32) -> u32 {
        (s >> (plane - 1)) & 1
    }

    /// Bit-vector of a symbol, planes `1..=m` in order.
    pub fn to_bits(&self, s: Symbol) -> Option<Vec<u8>> {
        let m = self.planes()?;
        if Some(s) == self.star() || !self.contains(s) {
            return None;
        }
        Some((1..=m).map(|k| Self::plane_bit(s, k) as u8).collect())
    }

    pub fn from_bits(&self, bits: &[u8]) -> Option<Symbol> {
        let m = self.planes()?;
        if bits.len() != m as usize || bits.iter().any(|&b| b > 1) {
            return None;
        }
        Some(bits.iter().enumerate().map(|(k, &b)| (b as u32) << k).sum())
    }

    pub fn label(&self, s: Symbol) -> String {
        if Some(s) == self.star() {
            return "*".to_string();
        }
        match self {
            Alphabet::Plain(_) => (s + 1).to_string(),
            _ => self
                .to_bits(s)
                .map(|b| b.iter().map(|x| char::from(b'0' + x)).collect())
                .unwrap_or_else(|| "?".to_string()),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.size()).map(|s| self.label(s)).collect()
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alphabet::Plain(n) => write!(f, "plain:{n}"),
            Alphabet::Z2Product(m) => write!(f, "z2:{m}"),
            Alphabet::StarExtended(m) => write!(f, "star:{m}"),
        }
    }
}

impl FromStr for Alphabet {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadAlphabet(s.to_string());
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: u32 = n.parse().map_err(|_| bad())?;
        match kind {
            "plain" if n >= 1 => Ok(Alphabet::Plain(n)),
            "z2" if (1..=20).contains(&n) => Ok(Alphabet::Z2Product(n)),
            "star" if (1..=20).contains(&n) => Ok(Alphabet::StarExtended(n)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for Alphabet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A probability vector over an alphabet. Exact rational weights are kept
/// when the distribution was built from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    alphabet: Alphabet,
    weights: Vec<f64>,
    exact: Option<Vec<Ratio<u64>>>,
}

impl Distribution {
    pub fn new(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self, ConfigError> {
        if weights.len() != alphabet.size() as usize {
            return Err(ConfigError::LengthMismatch {
                what: "weights",
                expected: alphabet.size() as usize,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::BadWeights("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ConfigError::BadWeights(format!("weights sum to {total}")));
        }
        Ok(Self { alphabet, weights, exact: None })
    }

    pub fn from_ratios(alphabet: Alphabet, ratios: Vec<Ratio<u64>>) -> Result<Self, ConfigError> {
        if ratios.len() != alphabet.size() as usize {
            return Err(ConfigError::LengthMismatch {
                what: "weights",
                expected: alphabet.size() as usize,
                got: ratios.len(),
            });
        }
        let total = ratios.iter().fold(Ratio::from_integer(0), |acc, r| acc + r);
        if total != Ratio::from_integer(1) {
            return Err(ConfigError::BadWeights(format!("weights sum to {total}")));
        }
        let weights = ratios.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        Ok(Self { alphabet, weights, exact: Some(ratios) })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.size() as u64;
        Self::from_ratios(alphabet, vec![Ratio::new(1, n); n as usize]).expect("uniform weights")
    }

    pub fn point_mass(alphabet: Alphabet, s: Symbol) -> Result<Self, ConfigError> {
        if !alphabet.contains(s) {
            return Err(ConfigError::SymbolOutOfRange { symbol: s, alphabet });
        }
        let mut ratios = vec![Ratio::from_integer(0); alphabet.size() as usize];
        ratios[s as usize] = Ratio::from_integer(1);
        Self::from_ratios(alphabet, ratios)
    }

    /// `λ = (p, p, 1 − 2p)` on `{0, 1, *}`.
    pub fn star_input(p: f64) -> Result<Self, ConfigError> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(ConfigError::BadWeights(format!("star parameter p = {p} not in (0, 1/2]")));
        }
        Self::new(Alphabet::STAR1, vec![p, p, 1.0 - 2.0 * p])
    }

    /// `μ`: mass `p/2` on each of the four pairs and `1 − 2p` on `*`.
    pub fn star_output(p: f64) -> Result<Self, ConfigError> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(ConfigError::BadWeights(format!("star parameter p = {p} not in (0, 1/2]")));
        }
        let q = p / 2.0;
        Self::new(Alphabet::StarExtended(2), vec![q, q, q, q, 1.0 - 2.0 * p])
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_weights(&self) -> Option<&[Ratio<u64>]> {
        self.exact.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        match &self.exact {
            Some(r) => r.iter().all(|x| *x == r[0]),
            None => false,
        }
    }

    pub fn is_trivial(&self) -> bool {
        match &self.exact {
            Some(r) => r.iter().any(|x| *x == Ratio::from_integer(1)),
            None => self.weights.contains(&1.0),
        }
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("normalized weights")
    }
}

/// A partial assignment of symbols to a finite site set.
#[derive(Clone, PartialEq, Eq)]
pub struct Configuration {
    alphabet: Alphabet,
    sites: Arc<SiteSet>,
    values: Vec<Option<Symbol>>,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (g, v) in self.sites.sites().iter().zip(&self.values) {
            m.entry(g, &v.map(|s| self.alphabet.label(s)));
        }
        m.finish()
    }
}

impl Configuration {
    pub fn new(
        alphabet: Alphabet,
        sites: Arc<SiteSet>,
        values: Vec<Option<Symbol>>,
    ) -> Result<Self, ConfigError> {
        if values.len() != sites.len() {
            return Err(ConfigError::LengthMismatch {
                what: "values",
                expected: sites.len(),
                got: values.len(),
            });
        }
        if let Some(&bad) = values.iter().flatten().find(|s| !alphabet.contains(**s)) {
            return Err(ConfigError::SymbolOutOfRange { symbol: bad, alphabet });
        }
        Ok(Self { alphabet, sites, values })
    }

    /// Caller guarantees lengths match and symbols are in range.
    pub(crate) fn from_parts(
        alphabet: Alphabet,
        sites: Arc<SiteSet>,
        values: Vec<Option<Symbol>>,
    ) -> Self {
        debug_assert_eq!(values.len(), sites.len());
        Self { alphabet, sites, values }
    }

    pub fn constant(alphabet: Alphabet, sites: Arc<SiteSet>, s: Symbol) -> Self {
        let values = vec![Some(s); sites.len()];
        Self { alphabet, sites, values }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn sites(&self) -> &Arc<SiteSet> {
        &self.sites
    }

    pub fn values(&self) -> &[Option<Symbol>] {
        &self.values
    }

    pub fn value_at(&self, i: usize) -> Option<Symbol> {
        self.values[i]
    }

    pub fn get(&self, g: &GroupElement) -> Option<Symbol> {
        self.sites.index_of(g).and_then(|i| self.values[i])
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_total(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// `(g·x)(f) = x(g⁻¹f)`: the result lives on `g·sites(x)`.
    pub fn translate(&self, g: &GroupElement) -> Configuration {
        let sites = Arc::new(self.sites.translate(g));
        let mut values = vec![None; sites.len()];
        for (f, v) in self.sites.sites().iter().zip(&self.values) {
            let j = sites.index_of(&g.mul(f)).expect("translated site present");
            values[j] = *v;
        }
        Configuration { alphabet: self.alphabet, sites, values }
    }

    /// Values on `sub`; sites of `sub` outside `sites(self)` are undefined.
    pub fn restrict(&self, sub: &Arc<SiteSet>) -> Configuration {
        let values = sub.sites().iter().map(|g| self.get(g)).collect();
        Configuration { alphabet: self.alphabet, sites: Arc::clone(sub), values }
    }

    /// Sites where both configurations are defined but disagree. Sites present in
    /// only one of them are ignored. Returns `(compared, mismatched)`.
    pub fn compare_defined(&self, other: &Configuration) -> (usize, Option<GroupElement>) {
        let mut compared = 0;
        for (g, v) in self.sites.sites().iter().zip(&self.values) {
            let (Some(a), Some(b)) = (v, other.get(g)) else { continue };
            compared += 1;
            if *a != b {
                return (compared, Some(g.clone()));
            }
        }
        (compared, None)
    }

    /// Maps every defined symbol through `f` into a new alphabet.
    pub fn map_symbols(&self, alphabet: Alphabet, f: impl Fn(Symbol) -> Symbol) -> Configuration {
        let values = self.values.iter().map(|v| v.map(&f)).collect();
        Configuration { alphabet, sites: Arc::clone(&self.sites), values }
    }

    /// Bit-packs a total `U_2` configuration: site `j` is bit `j % 64` of word `j / 64`.
    pub fn pack_bits(&self) -> Option<Vec<u64>> {
        if self.alphabet != Alphabet::U2 {
            return None;
        }
        let mut words = vec![0u64; self.values.len().div_ceil(64)];
        for (j, v) in self.values.iter().enumerate() {
            if (*v)? == 1 {
                words[j / 64] |= 1 << (j % 64);
            }
        }
        Some(words)
    }

    pub fn from_packed_bits(sites: Arc<SiteSet>, words: &[u64]) -> Option<Configuration> {
        if words.len() != sites.len().div_ceil(64) {
            return None;
        }
        let values = (0..sites.len()).map(|j| Some(((words[j / 64] >> (j % 64)) & 1) as Symbol)).collect();
        Some(Configuration { alphabet: Alphabet::U2, sites, values })
    }

    pub fn to_dump(&self) -> ConfigDump {
        ConfigDump {
            alphabet: self.alphabet,
            sites: self.sites.sites().to_vec(),
            values: self.values.clone(),
        }
    }

    pub fn from_dump(dump: ConfigDump) -> Result<Configuration, ConfigError> {
        let n = dump.sites.len();
        let sites = Arc::new(SiteSet::new(dump.sites.clone()));
        if sites.len() != n {
            return Err(ConfigError::BadWeights("duplicate sites in dump".into()));
        }
        if dump.values.len() != n {
            return Err(ConfigError::LengthMismatch { what: "values", expected: n, got: dump.values.len() });
        }
        // dumps may list sites in any order
        let mut values = vec![None; n];
        for (g, v) in dump.sites.iter().zip(dump.values) {
            values[sites.index_of(g).expect("site present")] = v;
        }
        Configuration::new(dump.alphabet, sites, values)
    }
}

/// JSON form of a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDump {
    pub alphabet: Alphabet,
    pub sites: Vec<GroupElement>,
    pub values: Vec<Option<Symbol>>,
}

/// i.i.d. sample of `d` on every site, deterministic in `seed`.
pub fn sample(d: &Distribution, sites: &Arc<SiteSet>, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(d, sites, &mut rng)
}

pub fn sample_with<R: Rng + ?Sized>(d: &Distribution, sites: &Arc<SiteSet>, rng: &mut R) -> Configuration {
    let sampler = d.sampler();
    let values = (0..sites.len()).map(|_| Some(sampler.sample(rng) as Symbol)).collect();
    Configuration { alphabet: d.alphabet(), sites: Arc::clone(sites), values }
}

/// All total configurations on a site set, in index order: configuration `i`
/// assigns to site `j` the symbol `(i / size^j) mod size`.
#[derive(Clone, Debug)]
pub struct Enumeration {
    alphabet: Alphabet,
    sites: Arc<SiteSet>,
    total: u64,
}

pub fn enumerate(alphabet: Alphabet, sites: &Arc<SiteSet>) -> Result<Enumeration, ConfigError> {
    enumerate_capped(alphabet, sites, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_capped(alphabet: Alphabet, sites: &Arc<SiteSet>, cap: u64) -> Result<Enumeration, ConfigError> {
    let size = alphabet.size();
    let too_large = ConfigError::EnumerationTooLarge { size, sites: sites.len(), cap };
    let exp = u32::try_from(sites.len()).map_err(|_| too_large.clone())?;
    let total = (size as u64).checked_pow(exp).ok_or_else(|| too_large.clone())?;
    if total > cap {
        return Err(too_large);
    }
    Ok(Enumeration { alphabet, sites: Arc::clone(sites), total })
}

impl Enumeration {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn sites(&self) -> &Arc<SiteSet> {
        &self.sites
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn nth_config(&self, mut i: u64) -> Configuration {
        let size = self.alphabet.size() as u64;
        let values = (0..self.sites.len())
            .map(|_| {
                let s = (i % size) as Symbol;
                i /= size;
                Some(s)
            })
            .collect();
        Configuration { alphabet: self.alphabet, sites: Arc::clone(&self.sites), values }
    }

    /// The configurations with indices in `range`; each range is reproducible on its own.
    pub fn range(&self, range: std::ops::Range<u64>) -> impl Iterator<Item = Configuration> + '_ {
        let end = range.end.min(self.total);
        (range.start..end).map(move |i| self.nth_config(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        self.range(0..self.total)
    }
}
