//! Coinduced actions for the subgroup `H = ⟨a⟩ ≤ F`.
//!
//! A coset `gH` is represented by its section value `σ(gH)`: the reduced word
//! with every trailing `a^{±1}` stripped, so `σ(H) = e`. The cocycle
//! `α(g, c) = σ(c)⁻¹ g σ(g⁻¹c)` lies in `H ≅ Z` and is returned as an
//! `a`-exponent. `H`-valued coset data are configurations on the `H`-window
//! `{a^j : |j| ≤ w}`, and `H` acts on them by the Bernoulli shift.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Alphabet, ConfigError, Configuration, Symbol};
use crate::factormaps::Relabel;
use crate::freegroup::{GroupElement, Generator, SiteSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoinduceError {
    #[error("cocycle value {value} for g = {g}, c = {c} is not a power of a")]
    NotInSubgroup { g: GroupElement, c: GroupElement, value: GroupElement },
    #[error("alphabet mismatch: map expects {expected}, got {got}")]
    AlphabetMismatch { expected: Alphabet, got: Alphabet },
    #[error("coset data malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A left coset `gH`, stored as its section value.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coset(GroupElement);

impl Coset {
    /// The coset `H` itself.
    pub fn subgroup() -> Self {
        Coset(GroupElement::identity())
    }

    /// `σ(c)`.
    pub fn representative(&self) -> &GroupElement {
        &self.0
    }
}

impl fmt::Display for Coset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for Coset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}H", self.0)
    }
}

/// `gH` for `H = ⟨a⟩`: strip the maximal trailing `a`-power.
pub fn coset_of(g: &GroupElement) -> Coset {
    let word = g.word();
    let keep = word
        .iter()
        .rposition(|s| !matches!(s, Generator::A | Generator::AInv))
        .map_or(0, |i| i + 1);
    Coset(GroupElement::reduce(word[..keep].iter().copied()))
}

/// The subgroups with an implemented coset normal form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subgroup {
    /// `⟨a⟩`.
    PowersOfA,
    /// `F` itself: a single coset, `σ ≡ e`, `α(g, c) = g`.
    Whole,
}

impl Subgroup {
    pub fn coset_of(self, g: &GroupElement) -> Coset {
        match self {
            Subgroup::PowersOfA => coset_of(g),
            Subgroup::Whole => Coset::subgroup(),
        }
    }

    /// `α(g, c) = σ(c)⁻¹ g σ(g⁻¹c)` as a group element.
    pub fn cocycle_element(self, g: &GroupElement, c: &Coset) -> GroupElement {
        let moved = self.coset_of(&g.inv().mul(c.representative()));
        c.representative().inv().mul(g).mul(moved.representative())
    }
}

/// `α(g, c)` for `H = ⟨a⟩`, as the exponent `n` with `α(g, c) = a^n`.
pub fn cocycle(g: &GroupElement, c: &Coset) -> Result<i64, CoinduceError> {
    let value = Subgroup::PowersOfA.cocycle_element(g, c);
    value.as_a_power().ok_or_else(|| CoinduceError::NotInSubgroup {
        g: g.clone(),
        c: c.representative().clone(),
        value: value.clone(),
    })
}

/// A point of `(K^H)^{G/H}` restricted to finitely many cosets and to the
/// `H`-window `|j| ≤ window`.
#[derive(Clone, PartialEq, Eq)]
pub struct CosetConfiguration {
    alphabet: Alphabet,
    cosets: Vec<Coset>,
    index: HashMap<Coset, usize>,
    window: u32,
    values: Vec<Vec<Option<Symbol>>>,
}

impl fmt::Debug for CosetConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (c, v) in self.cosets.iter().zip(&self.values) {
            m.entry(c, v);
        }
        m.finish()
    }
}

impl CosetConfiguration {
    pub fn new(
        alphabet: Alphabet,
        mut entries: Vec<(Coset, Vec<Option<Symbol>>)>,
        window: u32,
    ) -> Result<Self, CoinduceError> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let width = 2 * window as usize + 1;
        for (i, (c, v)) in entries.iter().enumerate() {
            if i > 0 && entries[i - 1].0 == *c {
                return Err(CoinduceError::Malformed(format!("duplicate coset {c}")));
            }
            if coset_of(c.representative()) != *c {
                return Err(CoinduceError::Malformed(format!("{c} is not a section value")));
            }
            if v.len() != width {
                return Err(CoinduceError::Malformed(format!("coset {c} has {} slots, expected {width}", v.len())));
            }
            if let Some(&bad) = v.iter().flatten().find(|s| !alphabet.contains(**s)) {
                return Err(ConfigError::SymbolOutOfRange { symbol: bad, alphabet }.into());
            }
        }
        let (cosets, values): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index = cosets.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(Self { alphabet, cosets, index, window, values })
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn cosets(&self) -> &[Coset] {
        &self.cosets
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Per-coset window values, slot `j + window` holding `a^j`.
    pub fn values(&self) -> &[Vec<Option<Symbol>>] {
        &self.values
    }

    pub fn coset_values(&self, c: &Coset) -> Option<&[Option<Symbol>]> {
        self.index.get(c).map(|&i| self.values[i].as_slice())
    }

    /// Entry at coset `c`, position `a^j`.
    pub fn get(&self, c: &Coset, j: i64) -> Option<Symbol> {
        let w = self.window as i64;
        if j.abs() > w {
            return None;
        }
        self.coset_values(c).and_then(|v| v[(j + w) as usize])
    }

    pub fn defined_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    /// Compares entries present and defined in both. Returns the number of
    /// compared slots and the first disagreeing `(coset, j)`.
    pub fn compare_defined(&self, other: &CosetConfiguration) -> (usize, Option<(Coset, i64)>) {
        let w = self.window as i64;
        let mut compared = 0;
        for (c, v) in self.cosets.iter().zip(&self.values) {
            for j in -w..=w {
                let (Some(a), Some(b)) = (v[(j + w) as usize], other.get(c, j)) else { continue };
                compared += 1;
                if a != b {
                    return (compared, Some((c.clone(), j)));
                }
            }
        }
        (compared, None)
    }

    pub fn to_dump(&self) -> CosetDump {
        CosetDump {
            alphabet: self.alphabet,
            cosets: self.cosets.iter().map(|c| c.representative().clone()).collect(),
            window: self.window,
            values: self.values.clone(),
        }
    }

    pub fn from_dump(dump: CosetDump) -> Result<Self, CoinduceError> {
        if dump.cosets.len() != dump.values.len() {
            return Err(CoinduceError::Malformed("cosets and values differ in length".into()));
        }
        let entries = dump.cosets.into_iter().map(Coset).zip(dump.values).collect();
        Self::new(dump.alphabet, entries, dump.window)
    }
}

/// JSON form of a [`CosetConfiguration`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosetDump {
    pub alphabet: Alphabet,
    pub cosets: Vec<GroupElement>,
    pub window: u32,
    pub values: Vec<Vec<Option<Symbol>>>,
}

/// `(g·x)(c) = α(g, c)·x(g⁻¹c)`, with `a^n` acting on a window by
/// `(a^n·w)(a^j) = w(a^{j−n})`. Slots shifted in from outside the window,
/// and cosets whose preimage is not stored, become undefined.
pub fn coinduced_act(g: &GroupElement, x: &CosetConfiguration) -> Result<CosetConfiguration, CoinduceError> {
    let w = x.window as i64;
    let g_inv = g.inv();
    let mut values = Vec::with_capacity(x.cosets.len());
    for c in &x.cosets {
        let source = coset_of(&g_inv.mul(c.representative()));
        let shift = cocycle(g, c)?;
        let row = match x.coset_values(&source) {
            Some(src) => (-w..=w)
                .map(|j| {
                    let from = j - shift;
                    if from.abs() <= w {
                        src[(from + w) as usize]
                    } else {
                        None
                    }
                })
                .collect(),
            None => vec![None; x.values[0].len()],
        };
        values.push(row);
    }
    Ok(CosetConfiguration { values, ..x.clone() })
}

/// A shift-commuting map on `H`-window configurations (a sliding-block code
/// over `Z`): output slot `j` depends only on input slots near `j`, in the
/// same way for every `j`.
pub trait WindowMap: Send + Sync + fmt::Debug {
    fn input_alphabet(&self) -> Alphabet;
    fn output_alphabet(&self) -> Alphabet;
    fn apply_window(&self, input: &[Option<Symbol>]) -> Vec<Option<Symbol>>;
}

impl WindowMap for Relabel {
    fn input_alphabet(&self) -> Alphabet {
        self.input
    }
    fn output_alphabet(&self) -> Alphabet {
        self.output
    }
    fn apply_window(&self, input: &[Option<Symbol>]) -> Vec<Option<Symbol>> {
        input.iter().map(|v| v.map(|s| self.map_symbol(s))).collect()
    }
}

/// Sliding-block code: output at `a^j` is `table[code]` where `code` is the
/// mixed-radix index of the inputs at `a^{j + o}` for `o` in `offsets`
/// (first offset least significant).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlidingBlock {
    pub input: Alphabet,
    pub output: Alphabet,
    pub offsets: Vec<i64>,
    pub table: Vec<Symbol>,
}

impl SlidingBlock {
    pub fn new(input: Alphabet, output: Alphabet, offsets: Vec<i64>, table: Vec<Symbol>) -> Result<Self, CoinduceError> {
        let expected = (input.size() as usize).checked_pow(offsets.len() as u32);
        if offsets.is_empty() || expected != Some(table.len()) {
            return Err(CoinduceError::Malformed("sliding-block table size does not match offsets".into()));
        }
        if let Some(&bad) = table.iter().find(|s| !output.contains(**s)) {
            return Err(ConfigError::SymbolOutOfRange { symbol: bad, alphabet: output }.into());
        }
        Ok(Self { input, output, offsets, table })
    }

    /// `y(a^j) = x(a^j) + x(a^{j+1})` on `U_2`, the doubling rule along one axis.
    pub fn z2_difference() -> Self {
        Self::new(Alphabet::U2, Alphabet::U2, vec![0, 1], vec![0, 1, 1, 0]).expect("valid table")
    }
}

impl WindowMap for SlidingBlock {
    fn input_alphabet(&self) -> Alphabet {
        self.input
    }
    fn output_alphabet(&self) -> Alphabet {
        self.output
    }
    fn apply_window(&self, input: &[Option<Symbol>]) -> Vec<Option<Symbol>> {
        let size = self.input.size() as usize;
        let len = input.len() as i64;
        (0..len)
            .map(|j| {
                let mut code = 0usize;
                let mut radix = 1usize;
                for &o in &self.offsets {
                    let k = j + o;
                    if !(0..len).contains(&k) {
                        return None;
                    }
                    code += input[k as usize]? as usize * radix;
                    radix *= size;
                }
                Some(self.table[code])
            })
            .collect()
    }
}

/// `Φ(x)(c) = φ(x(c))`, coset by coset.
pub fn coinduce_factor(phi: &dyn WindowMap, x: &CosetConfiguration) -> Result<CosetConfiguration, CoinduceError> {
    if x.alphabet != phi.input_alphabet() {
        return Err(CoinduceError::AlphabetMismatch { expected: phi.input_alphabet(), got: x.alphabet });
    }
    let values = x.values.iter().map(|v| phi.apply_window(v)).collect();
    Ok(CosetConfiguration { alphabet: phi.output_alphabet(), values, ..x.clone() })
}

/// `J(x)(c)(a^j) = x(σ(c)·a^j)` with window `w`. Cosets are those met by the
/// sites of `x`; slots outside `x` are undefined.
pub fn conj_j(x: &Configuration, window: u32) -> CosetConfiguration {
    let mut cosets: Vec<Coset> = x.sites().sites().iter().map(coset_of).collect();
    cosets.sort();
    cosets.dedup();
    let w = window as i64;
    let values = cosets
        .iter()
        .map(|c| {
            (-w..=w)
                .map(|j| x.get(&c.representative().mul(&GroupElement::power(Generator::A, j))))
                .collect()
        })
        .collect();
    let index = cosets.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    CosetConfiguration { alphabet: x.alphabet(), cosets, index, window, values }
}

/// [`conj_j`] with the window set to the longest site word.
pub fn conj_j_default(x: &Configuration) -> CosetConfiguration {
    conj_j(x, x.sites().radius() as u32)
}

/// `J⁻¹(y)(g) = y(gH)(α(g, gH))` on the given sites.
pub fn conj_j_inv_on(y: &CosetConfiguration, sites: &Arc<SiteSet>) -> Result<Configuration, CoinduceError> {
    let values = sites
        .sites()
        .iter()
        .map(|g| {
            let c = coset_of(g);
            Ok(y.get(&c, cocycle(g, &c)?))
        })
        .collect::<Result<Vec<_>, CoinduceError>>()?;
    Ok(Configuration::new(y.alphabet, Arc::clone(sites), values)?)
}

/// `J⁻¹(y)` on every slot `σ(c)·a^j` of `y`.
pub fn conj_j_inv(y: &CosetConfiguration) -> Result<Configuration, CoinduceError> {
    let w = y.window as i64;
    let sites = y
        .cosets
        .iter()
        .flat_map(|c| (-w..=w).map(move |j| c.representative().mul(&GroupElement::power(Generator::A, j))))
        .collect();
    conj_j_inv_on(y, &Arc::new(SiteSet::new(sites)))
}

/// `J⁻¹ ∘ Φ ∘ J`: the factor map of `F`-shifts coinduced from a
/// sliding-block map over `⟨a⟩`, evaluated on the sites of `x`.
pub fn coinduce_chain_step(phi: &dyn WindowMap, x: &Configuration) -> Result<Configuration, CoinduceError> {
    let j = conj_j_default(x);
    let image = coinduce_factor(phi, &j)?;
    conj_j_inv_on(&image, x.sites())
}
