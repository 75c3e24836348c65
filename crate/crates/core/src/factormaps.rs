//! Windowed local rules: the doubling map `U_2 → U_4`, the iterated
//! bit-plane expansion `U_2 → U_{2^m}`, the star map on `{0, 1, *}`, plane
//! projections, single-site relabelings, and their composition.
//!
//! Every map reads its input only through right multiplication by
//! generators (`g ↦ g·a`, `g ↦ g·b`), which is what makes each rule commute
//! with the left translation action.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::config::{Alphabet, ConfigError, Configuration, Distribution, Symbol};
use crate::freegroup::{ball, ball_words, GroupElement, Generator, GroupError, SiteSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorMapError {
    #[error("alphabet mismatch{}: map expects {expected}, got {got}", stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
    AlphabetMismatch { stage: Option<usize>, expected: Alphabet, got: Alphabet },
    #[error("input radius too small: no output site is defined")]
    InsufficientRadius,
    #[error("invalid map spec {0:?}")]
    BadSpec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// How far a rule looks beyond the site it writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowCost {
    Bounded(u32),
    UnboundedLookahead,
}

impl WindowCost {
    pub fn bounded(self) -> Option<u32> {
        match self {
            WindowCost::Bounded(c) => Some(c),
            WindowCost::UnboundedLookahead => None,
        }
    }

    pub fn plus(self, other: WindowCost) -> WindowCost {
        match (self, other) {
            (WindowCost::Bounded(a), WindowCost::Bounded(b)) => WindowCost::Bounded(a + b),
            _ => WindowCost::UnboundedLookahead,
        }
    }
}

impl fmt::Display for WindowCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowCost::Bounded(c) => write!(f, "{c}"),
            WindowCost::UnboundedLookahead => f.write_str("unbounded_lookahead"),
        }
    }
}

impl Serialize for WindowCost {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            WindowCost::Bounded(c) => serializer.serialize_u32(*c),
            WindowCost::UnboundedLookahead => serializer.serialize_str("unbounded_lookahead"),
        }
    }
}

/// Result of applying a map: the output configuration (same site set as the
/// input) and the number of sites left undefined by lookahead truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct MapOutput {
    pub config: Configuration,
    pub truncated: usize,
}

/// A factor map between Bernoulli shifts, evaluated on finite windows.
pub trait FactorMap: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn input_alphabet(&self) -> Alphabet;
    fn output_alphabet(&self) -> Alphabet;
    fn window_cost(&self) -> WindowCost;

    /// Single-site law of the source shift.
    fn input_law(&self) -> Distribution;

    /// Single-site law the map pushes [`FactorMap::input_law`] onto.
    fn output_law(&self) -> Distribution;

    /// Applies the rule at every site of `x`. Alphabets are already checked.
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput;

    fn apply_counting(&self, x: &Configuration) -> Result<MapOutput, FactorMapError> {
        if x.alphabet() != self.input_alphabet() {
            return Err(FactorMapError::AlphabetMismatch {
                stage: None,
                expected: self.input_alphabet(),
                got: x.alphabet(),
            });
        }
        Ok(self.apply_unchecked(x))
    }

    fn apply(&self, x: &Configuration) -> Result<Configuration, FactorMapError> {
        self.apply_counting(x).map(|o| o.config)
    }

    /// Input sites that can influence the output on `ball(r_out)`, within
    /// `ball(r_in)`. Sampling i.i.d. on this region gives the same output law
    /// on `ball(r_out)` as sampling on all of `ball(r_in)`.
    fn input_region(&self, r_in: u32, r_out: u32) -> Result<SiteSet, FactorMapError> {
        let _ = r_out;
        Ok(ball(r_in)?)
    }
}

fn out_values(x: &Configuration, f: impl FnMut(usize) -> Option<Symbol>) -> Vec<Option<Symbol>> {
    (0..x.sites().len()).map(f).collect()
}

#[inline]
fn at(x: &Configuration, i: usize, s: Generator) -> Option<Symbol> {
    x.sites().neighbor(i, s).and_then(|j| x.value_at(j))
}

/// Expands the last of `n + 1` planes: planes `1..=n` are copied, planes
/// `n + 1` and `n + 2` become `(y(g) + y(ga), y(g) + y(gb))` where `y` is
/// plane `n + 1` of the input.
fn expand_last_plane(x: &Configuration, n: u32, out: Alphabet) -> Configuration {
    let keep_mask: Symbol = (1 << n) - 1;
    let values = out_values(x, |i| {
        let here = x.value_at(i)?;
        let along_a = at(x, i, Generator::A)?;
        let along_b = at(x, i, Generator::B)?;
        let y = Alphabet::plane_bit(here, n + 1);
        let first = y ^ Alphabet::plane_bit(along_a, n + 1);
        let second = y ^ Alphabet::plane_bit(along_b, n + 1);
        Some((here & keep_mask) | (first << n) | (second << (n + 1)))
    });
    Configuration::from_parts(out, Arc::clone(x.sites()), values)
}

/// `φ(x)(g) = (x(g) + x(ga), x(g) + x(gb))`, `U_2 → U_4 = Z/2 × Z/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OwMap;

impl FactorMap for OwMap {
    fn name(&self) -> String {
        "ow".into()
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::U2
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(2)
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::Bounded(1)
    }
    fn input_law(&self) -> Distribution {
        Distribution::uniform(Alphabet::U2)
    }
    fn output_law(&self) -> Distribution {
        Distribution::uniform(Alphabet::Z2Product(2))
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        MapOutput { config: expand_last_plane(x, 0, Alphabet::Z2Product(2)), truncated: 0 }
    }
}

/// One expansion stage `U_{2^{n+1}} → U_{2^{n+2}}`: the doubling map on the
/// last plane, identity on the others.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimarStage {
    pub n: u32,
}

impl FactorMap for TimarStage {
    fn name(&self) -> String {
        format!("stage:{}", self.n)
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(self.n + 1)
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(self.n + 2)
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::Bounded(1)
    }
    fn input_law(&self) -> Distribution {
        Distribution::uniform(self.input_alphabet())
    }
    fn output_law(&self) -> Distribution {
        Distribution::uniform(self.output_alphabet())
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        MapOutput { config: expand_last_plane(x, self.n, self.output_alphabet()), truncated: 0 }
    }
}

/// The first `m` stabilized bit-planes of the iterated expansion
/// `U_2 → U_{2^m}`. Plane `k` is final after `k` stages, so `m` stages are
/// run and the trailing unstable plane is dropped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimarBits {
    pub m: u32,
}

impl FactorMap for TimarBits {
    fn name(&self) -> String {
        format!("timar:{}", self.m)
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::U2
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(self.m)
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::Bounded(self.m)
    }
    fn input_law(&self) -> Distribution {
        Distribution::uniform(Alphabet::U2)
    }
    fn output_law(&self) -> Distribution {
        Distribution::uniform(self.output_alphabet())
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        let mut y = x.clone();
        for n in 0..self.m {
            y = expand_last_plane(&y, n, Alphabet::Z2Product(n + 2));
        }
        let mask = (1 << self.m) - 1;
        MapOutput { config: y.map_symbols(self.output_alphabet(), |s| s & mask), truncated: 0 }
    }
}

/// Convenience wrapper for [`TimarBits`]; errors when nothing survives the window.
pub fn timar_bits(x: &Configuration, m: u32) -> Result<Configuration, FactorMapError> {
    if m == 0 {
        return Err(FactorMapError::BadSpec("timar:0".into()));
    }
    let out = TimarBits { m }.apply(x)?;
    if out.defined_count() == 0 {
        return Err(FactorMapError::InsufficientRadius);
    }
    Ok(out)
}

/// The star map `{0, 1, *} → (Z/2 × Z/2) ⊔ {*}`.
///
/// At a non-`*` site the rule reads the first non-`*` symbol along `g·a^k`
/// and along `g·b^l` (`k, l ≥ 1`). A scan that leaves the defined region
/// first makes the output undefined and is counted as a truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StarMap {
    /// `λ = (p, p, 1 − 2p)`; only the declared laws depend on it.
    pub p: f64,
}

impl StarMap {
    pub fn new(p: f64) -> Result<Self, FactorMapError> {
        Distribution::star_input(p)?;
        Ok(Self { p })
    }
}

/// First non-`*` symbol strictly after site `i` along generator `s`.
fn scan_ray(x: &Configuration, mut i: usize, s: Generator, star: Symbol) -> Option<Symbol> {
    loop {
        i = x.sites().neighbor(i, s)?;
        match x.value_at(i)? {
            v if v == star => continue,
            v => return Some(v),
        }
    }
}

impl FactorMap for StarMap {
    fn name(&self) -> String {
        format!("star:{}", self.p)
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::STAR1
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::StarExtended(2)
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::UnboundedLookahead
    }
    fn input_law(&self) -> Distribution {
        Distribution::star_input(self.p).expect("validated p")
    }
    fn output_law(&self) -> Distribution {
        Distribution::star_output(self.p).expect("validated p")
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        let star_in = Alphabet::STAR1.star().unwrap();
        let star_out = Alphabet::StarExtended(2).star().unwrap();
        let mut truncated = 0;
        let values = out_values(x, |i| {
            let here = x.value_at(i)?;
            if here == star_in {
                return Some(star_out);
            }
            let pair = scan_ray(x, i, Generator::A, star_in)
                .zip(scan_ray(x, i, Generator::B, star_in))
                .map(|(va, vb)| (here ^ va) | ((here ^ vb) << 1));
            if pair.is_none() {
                truncated += 1;
            }
            pair
        });
        MapOutput { config: Configuration::from_parts(self.output_alphabet(), Arc::clone(x.sites()), values), truncated }
    }

    /// `ball(r_out)` plus its `a`- and `b`-rays, cut at `ball(r_in)`.
    fn input_region(&self, r_in: u32, r_out: u32) -> Result<SiteSet, FactorMapError> {
        if r_out > r_in {
            return Err(FactorMapError::InsufficientRadius);
        }
        let core = ball_words(r_out);
        let mut sites = core.clone();
        for g in &core {
            for s in [Generator::A, Generator::B] {
                let mut h = g.mul_gen(s);
                // lengths along a ray may dip near cancellations but never
                // come back below r_in once they exceed it
                while h.len() <= r_in as usize {
                    sites.push(h.clone());
                    h = h.mul_gen(s);
                }
            }
        }
        Ok(SiteSet::new(sites))
    }
}

/// Keeps bit-planes `1..=to` of `z2:from` (an independent-splitting projection).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneProjection {
    pub from: u32,
    pub to: u32,
}

impl FactorMap for PlaneProjection {
    fn name(&self) -> String {
        format!("planes:{}:{}", self.from, self.to)
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(self.from)
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::Z2Product(self.to)
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::Bounded(0)
    }
    fn input_law(&self) -> Distribution {
        Distribution::uniform(self.input_alphabet())
    }
    fn output_law(&self) -> Distribution {
        Distribution::uniform(self.output_alphabet())
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        let mask = (1 << self.to) - 1;
        MapOutput { config: x.map_symbols(self.output_alphabet(), |s| s & mask), truncated: 0 }
    }
}

/// A single-site map `K_1 → K_2` given by a table.
#[derive(Clone, Debug, PartialEq)]
pub struct Relabel {
    pub input: Alphabet,
    pub output: Alphabet,
    pub table: Vec<Symbol>,
}

impl Relabel {
    pub fn new(input: Alphabet, output: Alphabet, table: Vec<Symbol>) -> Result<Self, FactorMapError> {
        if table.len() != input.size() as usize {
            return Err(ConfigError::LengthMismatch {
                what: "relabel table",
                expected: input.size() as usize,
                got: table.len(),
            }
            .into());
        }
        if let Some(&bad) = table.iter().find(|s| !output.contains(**s)) {
            return Err(ConfigError::SymbolOutOfRange { symbol: bad, alphabet: output }.into());
        }
        Ok(Self { input, output, table })
    }

    pub fn identity(alphabet: Alphabet) -> Self {
        Self { input: alphabet, output: alphabet, table: (0..alphabet.size()).collect() }
    }

    /// `0 ↔ 1` on `U_2`.
    pub fn swap() -> Self {
        Self { input: Alphabet::U2, output: Alphabet::U2, table: vec![1, 0] }
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.output.size() as usize];
        self.input.size() == self.output.size()
            && self.table.iter().all(|&s| !std::mem::replace(&mut seen[s as usize], true))
    }

    pub fn inverse(&self) -> Option<Relabel> {
        if !self.is_permutation() {
            return None;
        }
        let mut table = vec![0; self.table.len()];
        for (i, &s) in self.table.iter().enumerate() {
            table[s as usize] = i as Symbol;
        }
        Some(Relabel { input: self.output, output: self.input, table })
    }

    #[inline]
    pub fn map_symbol(&self, s: Symbol) -> Symbol {
        self.table[s as usize]
    }
}

impl FactorMap for Relabel {
    fn name(&self) -> String {
        if *self == Relabel::swap() {
            return "swap".into();
        }
        if *self == Relabel::identity(self.input) {
            return format!("id:{}", self.input);
        }
        format!("relabel:{}>{}", self.input, self.output)
    }
    fn input_alphabet(&self) -> Alphabet {
        self.input
    }
    fn output_alphabet(&self) -> Alphabet {
        self.output
    }
    fn window_cost(&self) -> WindowCost {
        WindowCost::Bounded(0)
    }
    fn input_law(&self) -> Distribution {
        Distribution::uniform(self.input)
    }
    fn output_law(&self) -> Distribution {
        let n = self.input.size() as u64;
        let mut ratios = vec![Ratio::from_integer(0); self.output.size() as usize];
        for &s in &self.table {
            ratios[s as usize] += Ratio::new(1, n);
        }
        Distribution::from_ratios(self.output, ratios).expect("pushforward of a probability vector")
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        MapOutput { config: x.map_symbols(self.output, |s| self.map_symbol(s)), truncated: 0 }
    }
}

/// Sequential application, left to right.
#[derive(Clone, Debug, Default)]
pub struct Chain {
    pub maps: Vec<Arc<dyn FactorMap>>,
}

impl Chain {
    pub fn new(maps: Vec<Arc<dyn FactorMap>>) -> Result<Self, FactorMapError> {
        for (i, w) in maps.windows(2).enumerate() {
            if w[0].output_alphabet() != w[1].input_alphabet() {
                return Err(FactorMapError::AlphabetMismatch {
                    stage: Some(i + 1),
                    expected: w[1].input_alphabet(),
                    got: w[0].output_alphabet(),
                });
            }
        }
        Ok(Self { maps })
    }
}

impl FactorMap for Chain {
    fn name(&self) -> String {
        if self.maps.is_empty() {
            return "empty".into();
        }
        self.maps.iter().map(|m| m.name()).collect::<Vec<_>>().join(">")
    }
    fn input_alphabet(&self) -> Alphabet {
        self.maps.first().map_or(Alphabet::U2, |m| m.input_alphabet())
    }
    fn output_alphabet(&self) -> Alphabet {
        self.maps.last().map_or(Alphabet::U2, |m| m.output_alphabet())
    }
    fn window_cost(&self) -> WindowCost {
        self.maps.iter().fold(WindowCost::Bounded(0), |acc, m| acc.plus(m.window_cost()))
    }
    fn input_law(&self) -> Distribution {
        self.maps.first().map_or(Distribution::uniform(Alphabet::U2), |m| m.input_law())
    }
    fn output_law(&self) -> Distribution {
        self.maps.last().map_or(Distribution::uniform(Alphabet::U2), |m| m.output_law())
    }
    fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
        compose(&self.maps, x).expect("chain alphabets checked at construction")
    }
    fn apply_counting(&self, x: &Configuration) -> Result<MapOutput, FactorMapError> {
        compose(&self.maps, x)
    }
}

/// Applies `maps` left to right; truncation counts add up.
pub fn compose(maps: &[Arc<dyn FactorMap>], x: &Configuration) -> Result<MapOutput, FactorMapError> {
    let mut current = MapOutput { config: x.clone(), truncated: 0 };
    for (i, m) in maps.iter().enumerate() {
        if current.config.alphabet() != m.input_alphabet() {
            return Err(FactorMapError::AlphabetMismatch {
                stage: Some(i),
                expected: m.input_alphabet(),
                got: current.config.alphabet(),
            });
        }
        let next = m.apply_unchecked(&current.config);
        current = MapOutput { config: next.config, truncated: current.truncated + next.truncated };
    }
    Ok(current)
}

/// Serializable description of a built-in map. Textual forms: `ow`,
/// `timar:m`, `star:p`, `stage:n`, `planes:from:to`, `swap`, `id:<alphabet>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "lowercase")]
pub enum MapSpec {
    Ow,
    Timar { m: u32 },
    Star { p: f64 },
    Stage { n: u32 },
    Planes { from: u32, to: u32 },
    Swap,
    Identity { alphabet: Alphabet },
    Relabel { input: Alphabet, output: Alphabet, table: Vec<Symbol> },
}

impl MapSpec {
    pub fn build(&self) -> Result<Arc<dyn FactorMap>, FactorMapError> {
        Ok(match self {
            MapSpec::Ow => Arc::new(OwMap),
            MapSpec::Timar { m } if *m >= 1 && *m <= 20 => Arc::new(TimarBits { m: *m }),
            MapSpec::Star { p } => Arc::new(StarMap::new(*p)?),
            MapSpec::Stage { n } if *n <= 19 => Arc::new(TimarStage { n: *n }),
            MapSpec::Planes { from, to } if *to >= 1 && to <= from && *from <= 20 => {
                Arc::new(PlaneProjection { from: *from, to: *to })
            }
            MapSpec::Swap => Arc::new(Relabel::swap()),
            MapSpec::Identity { alphabet } => Arc::new(Relabel::identity(*alphabet)),
            MapSpec::Relabel { input, output, table } => Arc::new(Relabel::new(*input, *output, table.clone())?),
            other => return Err(FactorMapError::BadSpec(other.to_string())),
        })
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapSpec::Ow => f.write_str("ow"),
            MapSpec::Timar { m } => write!(f, "timar:{m}"),
            MapSpec::Star { p } => write!(f, "star:{p}"),
            MapSpec::Stage { n } => write!(f, "stage:{n}"),
            MapSpec::Planes { from, to } => write!(f, "planes:{from}:{to}"),
            MapSpec::Swap => f.write_str("swap"),
            MapSpec::Identity { alphabet } => write!(f, "id:{alphabet}"),
            MapSpec::Relabel { input, output, .. } => write!(f, "relabel:{input}>{output}"),
        }
    }
}

impl FromStr for MapSpec {
    type Err = FactorMapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FactorMapError::BadSpec(s.to_string());
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let spec = match (head, rest.as_slice()) {
            ("ow", []) => MapSpec::Ow,
            ("swap", []) => MapSpec::Swap,
            ("timar", [m]) => MapSpec::Timar { m: m.parse().map_err(|_| bad())? },
            ("star", [p]) => MapSpec::Star { p: p.parse().map_err(|_| bad())? },
            ("stage", [n]) => MapSpec::Stage { n: n.parse().map_err(|_| bad())? },
            ("planes", [from, to]) => MapSpec::Planes {
                from: from.parse().map_err(|_| bad())?,
                to: to.parse().map_err(|_| bad())?,
            },
            ("id", [kind, n]) => MapSpec::Identity { alphabet: format!("{kind}:{n}").parse().map_err(|_| bad())? },
            _ => return Err(bad()),
        };
        spec.build()?;
        Ok(spec)
    }
}

/// Summary of one map application, as emitted by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct MapReport {
    pub map: String,
    pub input_alphabet: Alphabet,
    pub output_alphabet: Alphabet,
    pub window_cost: WindowCost,
    pub input_sites: usize,
    pub input_defined: usize,
    pub output_defined: usize,
    pub truncated: usize,
}

impl MapReport {
    pub fn new(map: &dyn FactorMap, input: &Configuration, output: &MapOutput) -> Self {
        Self {
            map: map.name(),
            input_alphabet: map.input_alphabet(),
            output_alphabet: map.output_alphabet(),
            window_cost: map.window_cost(),
            input_sites: input.sites().len(),
            input_defined: input.defined_count(),
            output_defined: output.config.defined_count(),
            truncated: output.truncated,
        }
    }
}

/// Sites `g·w` for the right-multiplication cone `w ∈ {a, b}^{≤depth}`; the
/// bounded maps above read exactly this set.
pub fn forward_cone(g: &GroupElement, depth: u32) -> Vec<GroupElement> {
    let mut out = vec![g.clone()];
    let mut frontier = vec![g.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for h in &frontier {
            next.push(h.mul_gen(Generator::A));
            next.push(h.mul_gen(Generator::B));
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{enumerate, sample};
    use crate::freegroup::shared_ball;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn el(s: &str) -> GroupElement {
        s.parse().unwrap()
    }

    fn config_from(alphabet: Alphabet, assignments: &[(&str, Symbol)]) -> Configuration {
        let sites = Arc::new(SiteSet::new(assignments.iter().map(|(g, _)| el(g)).collect()));
        let mut values = vec![None; sites.len()];
        for (g, s) in assignments {
            values[sites.index_of(&el(g)).unwrap()] = Some(*s);
        }
        Configuration::new(alphabet, sites, values).unwrap()
    }

    /// `(plane 1, plane 2)` of a `z2:2`/`star:2` symbol.
    fn pair(s: Symbol) -> (u32, u32) {
        (s & 1, (s >> 1) & 1)
    }

    #[test]
    fn ow_zero_and_direct_examples() {
        let b2 = shared_ball(2).unwrap();
        let zero = Configuration::constant(Alphabet::U2, b2.clone(), 0);
        let out = OwMap.apply(&zero).unwrap();
        assert!(out.values().iter().flatten().all(|&s| s == 0));
        assert_eq!(out.defined_count(), 5, "defined exactly on ball(1)");

        let x = config_from(Alphabet::U2, &[("e", 1), ("a", 0), ("b", 1)]);
        let y = OwMap.apply(&x).unwrap();
        assert_eq!(pair(y.get(&GroupElement::identity()).unwrap()), (1, 0));
        assert_eq!(y.get(&el("a")), None);
    }

    #[test]
    fn ow_is_additive_over_ball2() {
        // exhaustive over all pairs would be 2^34; fix y over a seeded sample
        // and sweep x over all 2^17 configurations
        let b2 = shared_ball(2).unwrap();
        let en = enumerate(Alphabet::U2, &b2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let y_bits: u64 = rng.gen_range(0..en.total());
            let y = en.nth_config(y_bits);
            let oy = OwMap.apply(&y).unwrap();
            for i in 0..en.total() {
                let x = en.nth_config(i);
                let sum = en.nth_config(i ^ y_bits);
                let ox = OwMap.apply(&x).unwrap();
                let osum = OwMap.apply(&sum).unwrap();
                for j in 0..b2.len() {
                    let expected = ox.value_at(j).zip(oy.value_at(j)).map(|(a, b)| a ^ b);
                    assert_eq!(osum.value_at(j), expected);
                }
            }
        }
    }

    #[test]
    fn ow_window_is_forward_cone() {
        let b3 = shared_ball(3).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::U2), &b3, 1);
        let full = OwMap.apply(&x).unwrap();
        for g in ball_words(2) {
            let cone = Arc::new(SiteSet::new(forward_cone(&g, 1)));
            let local = OwMap.apply(&x.restrict(&cone)).unwrap();
            assert_eq!(local.get(&g), full.get(&g));
        }
    }

    #[test]
    fn stage_zero_is_ow() {
        let b3 = shared_ball(3).unwrap();
        for seed in 0..20 {
            let x = sample(&Distribution::uniform(Alphabet::U2), &b3, seed);
            assert_eq!(TimarStage { n: 0 }.apply(&x).unwrap(), OwMap.apply(&x).unwrap());
        }
    }

    #[test]
    fn stage_keeps_low_planes() {
        let b3 = shared_ball(3).unwrap();
        for n in 1..4 {
            for seed in 0..500 {
                let x = sample(&Distribution::uniform(Alphabet::Z2Product(n + 1)), &b3, seed);
                let y = TimarStage { n }.apply(&x).unwrap();
                let mask = (1 << n) - 1;
                for j in 0..b3.len() {
                    if let Some(v) = y.value_at(j) {
                        assert_eq!(v & mask, x.value_at(j).unwrap() & mask);
                    }
                }
            }
        }
    }

    #[test]
    fn stage_plane_one_unfolds_to_ow() {
        let b2 = shared_ball(2).unwrap();
        let en = enumerate(Alphabet::U2, &b2).unwrap();
        for x in en.iter() {
            let via_stage = TimarStage { n: 0 }.apply(&x).unwrap();
            let ow = OwMap.apply(&x).unwrap();
            for j in 0..b2.len() {
                assert_eq!(via_stage.value_at(j).map(|s| s & 1), ow.value_at(j).map(|s| s & 1));
            }
        }
    }

    #[test]
    fn timar_bits_plane_one_is_ow_plane_one() {
        let b4 = shared_ball(4).unwrap();
        for seed in 0..50 {
            let x = sample(&Distribution::uniform(Alphabet::U2), &b4, seed);
            let t = timar_bits(&x, 1).unwrap();
            let ow = OwMap.apply(&x).unwrap();
            for j in 0..b4.len() {
                assert_eq!(t.value_at(j), ow.value_at(j).map(|s| s & 1));
            }
        }
    }

    #[test]
    fn timar_bits_defined_region_and_errors() {
        let b4 = shared_ball(4).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::U2), &b4, 3);
        for m in 1..=4 {
            let t = timar_bits(&x, m).unwrap();
            assert_eq!(t.defined_count(), crate::freegroup::ball_size(4 - m));
        }
        assert_eq!(timar_bits(&x, 5), Err(FactorMapError::InsufficientRadius));
    }

    /// Closed form for the iterated expansion: with `y_0 = x` and
    /// `y_k(g) = y_{k-1}(g) + y_{k-1}(gb)`, plane `k` is `y_{k-1}(g) + y_{k-1}(ga)`.
    fn timar_plane_oracle(x: &Configuration, g: &GroupElement, k: u32) -> u32 {
        fn y(x: &Configuration, g: &GroupElement, k: u32) -> u32 {
            if k == 0 {
                return x.get(g).unwrap();
            }
            y(x, g, k - 1) ^ y(x, &g.mul_gen(Generator::B), k - 1)
        }
        y(x, g, k - 1) ^ y(x, &g.mul_gen(Generator::A), k - 1)
    }

    #[test]
    fn timar_bits_matches_closed_form() {
        let b5 = shared_ball(5).unwrap();
        for seed in 0..30 {
            let x = sample(&Distribution::uniform(Alphabet::U2), &b5, seed);
            let t = timar_bits(&x, 4).unwrap();
            for g in ball_words(1) {
                let v = t.get(&g).unwrap();
                for k in 1..=4 {
                    assert_eq!(Alphabet::plane_bit(v, k), timar_plane_oracle(&x, &g, k), "seed {seed} g {g} k {k}");
                }
            }
        }
    }

    #[test]
    fn timar_exact_pushforward_at_identity() {
        // output at e depends on ball(2) only; every (plane 1, plane 2) pair
        // is hit 2^17 / 4 times
        let b2 = shared_ball(2).unwrap();
        let en = enumerate(Alphabet::U2, &b2).unwrap();
        let mut counts = [0u64; 4];
        for x in en.iter() {
            counts[timar_bits(&x, 2).unwrap().get(&GroupElement::identity()).unwrap() as usize] += 1;
        }
        assert_eq!(counts, [32_768; 4]);
    }

    #[test]
    fn star_examples() {
        let x = config_from(Alphabet::STAR1, &[("e", 2), ("a", 1), ("b", 0)]);
        let y = StarMap::new(0.25).unwrap().apply(&x).unwrap();
        assert_eq!(y.get(&GroupElement::identity()), Some(4));

        let x = config_from(Alphabet::STAR1, &[("e", 1), ("a", 2), ("aa", 0), ("b", 1)]);
        let out = StarMap::new(0.25).unwrap().apply_counting(&x).unwrap();
        assert_eq!(pair(out.config.get(&GroupElement::identity()).unwrap()), (1, 0));
        // aa has nothing along b, b has nothing along a; a is * and absorbs
        assert_eq!(out.truncated, 2);
    }

    #[test]
    fn star_scan_uses_membership_not_length() {
        // from g = AA the a-ray passes through A and e before leaving
        let x = config_from(Alphabet::STAR1, &[("AA", 1), ("A", 2), ("e", 2), ("a", 1), ("AAb", 0)]);
        let y = StarMap::new(0.25).unwrap().apply(&x).unwrap();
        assert_eq!(pair(y.get(&el("AA")).unwrap()), (0, 1));
    }

    #[test]
    fn star_region_covers_rays() {
        let region = StarMap::new(0.25).unwrap().input_region(30, 0).unwrap();
        assert_eq!(region.len(), 61);
        let region1 = StarMap::new(0.25).unwrap().input_region(3, 1).unwrap();
        assert_eq!(region1.len(), 17);
        assert!(region1.contains(&el("Abb")) && region1.contains(&el("Baa")));
        assert!(!region1.contains(&el("AA")));
        assert!(StarMap::new(0.25).unwrap().input_region(1, 2).is_err());
    }

    #[test]
    fn star_region_agrees_with_full_ball() {
        let star = StarMap::new(0.3).unwrap();
        let b4 = shared_ball(4).unwrap();
        let region = Arc::new(star.input_region(4, 1).unwrap());
        let b1 = shared_ball(1).unwrap();
        for seed in 0..200 {
            let x = sample(&star.input_law(), &b4, seed);
            let full = star.apply(&x).unwrap().restrict(&b1);
            let local = star.apply(&x.restrict(&region)).unwrap().restrict(&b1);
            assert_eq!(full, local);
        }
    }

    #[test]
    fn alphabet_mismatch_reported() {
        let b1 = shared_ball(1).unwrap();
        let x = Configuration::constant(Alphabet::STAR1, b1, 0);
        assert!(matches!(OwMap.apply(&x), Err(FactorMapError::AlphabetMismatch { stage: None, .. })));
        let maps: Vec<Arc<dyn FactorMap>> = vec![Arc::new(StarMap::new(0.25).unwrap()), Arc::new(OwMap)];
        assert!(matches!(compose(&maps, &x), Err(FactorMapError::AlphabetMismatch { stage: Some(1), .. })));
        assert!(Chain::new(maps).is_err());
    }

    #[test]
    fn compose_examples() {
        let b3 = shared_ball(3).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::U2), &b3, 8);
        assert_eq!(compose(&[], &x).unwrap().config, x);
        let ow: Arc<dyn FactorMap> = Arc::new(OwMap);
        assert_eq!(compose(std::slice::from_ref(&ow), &x).unwrap().config, OwMap.apply(&x).unwrap());

        let two = Chain::new(vec![ow, Arc::new(TimarStage { n: 1 }), Arc::new(PlaneProjection { from: 3, to: 2 })]).unwrap();
        assert_eq!(two.window_cost(), WindowCost::Bounded(2));
        assert_eq!(two.apply(&x).unwrap(), timar_bits(&x, 2).unwrap());
    }

    #[test]
    fn compose_star_then_relabel() {
        let star = StarMap::new(0.2).unwrap();
        // collapse the four pairs to 0 and keep * as 1
        let collapse = Relabel::new(Alphabet::StarExtended(2), Alphabet::U2, vec![0, 0, 0, 0, 1]).unwrap();
        let maps: Vec<Arc<dyn FactorMap>> = vec![Arc::new(star), Arc::new(collapse.clone())];
        let b3 = shared_ball(3).unwrap();
        for seed in 0..100 {
            let x = sample(&star.input_law(), &b3, seed);
            let chained = compose(&maps, &x).unwrap();
            let first = star.apply_counting(&x).unwrap();
            let manual = collapse.apply(&first.config).unwrap();
            assert_eq!(chained.config, manual);
            assert_eq!(chained.truncated, first.truncated);
            for j in 0..b3.len() {
                let expected = first.config.value_at(j).map(|s| u32::from(s == 4));
                assert_eq!(chained.config.value_at(j), expected);
            }
        }
    }

    #[test]
    fn relabel_laws_and_inverse() {
        let collapse = Relabel::new(Alphabet::Plain(3), Alphabet::U2, vec![0, 1, 1]).unwrap();
        assert_eq!(collapse.output_law().weights(), &[1.0 / 3.0, 2.0 / 3.0]);
        assert!(collapse.inverse().is_none());
        let swap = Relabel::swap();
        assert_eq!(swap.inverse().unwrap(), swap);
        assert!(Relabel::new(Alphabet::U2, Alphabet::U2, vec![0, 2]).is_err());
    }

    #[test]
    fn spec_parsing() {
        for s in ["ow", "timar:3", "star:0.25", "stage:2", "planes:3:1", "swap", "id:z2:2"] {
            let spec: MapSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("timar:3".parse::<MapSpec>().unwrap().build().unwrap().window_cost(), WindowCost::Bounded(3));
        for bad in ["", "owl", "timar:0", "star:0.7", "star:x", "planes:1:2"] {
            assert!(bad.parse::<MapSpec>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&MapSpec::Star { p: 0.25 }).unwrap();
        assert_eq!(json, r#"{"map":"star","p":0.25}"#);
    }

    #[test]
    fn window_cost_serializes() {
        assert_eq!(serde_json::to_string(&WindowCost::Bounded(3)).unwrap(), "3");
        assert_eq!(serde_json::to_string(&WindowCost::UnboundedLookahead).unwrap(), "\"unbounded_lookahead\"");
    }
}
