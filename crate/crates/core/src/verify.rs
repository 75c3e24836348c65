//! Exact and Monte Carlo pushforward checks and property drivers.
//!
//! Exact mode enumerates every input on `ball(r_in)` under the uniform
//! product law and tallies output patterns on `ball(r_out)` with integer
//! counts. Monte Carlo mode samples `N` seeded inputs and compares the
//! empirical pattern law to the declared product law in total variation.
//!
//! Work is split into fixed-size chunks (index ranges for enumeration,
//! independent ChaCha streams for sampling) and tallies are merged by
//! addition, so results do not depend on the thread count.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Ratio;
use rand::distributions::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::coinduce::{coinduce_chain_step, coinduced_act, coset_of, cocycle, conj_j, conj_j_default, conj_j_inv_on, WindowMap};
use crate::config::{enumerate, sample_with, Alphabet, ConfigError, Configuration, Distribution, Symbol};
use crate::factormaps::{FactorMap, FactorMapError, WindowCost};
use crate::freegroup::{ball, ball_size, shared_ball, GroupElement, GroupError, SiteSet};

/// Inputs per enumeration chunk.
pub const ENUM_CHUNK: u64 = 1 << 13;
/// Samples per Monte Carlo chunk; chunk `c` draws from ChaCha stream `c`.
pub const MC_CHUNK: u64 = 1 << 12;
/// Below this many usable samples a Monte Carlo verdict is withheld.
pub const MC_MIN_SAMPLES: u64 = 1000;
/// Largest pattern space tallied densely in exact mode.
pub const MAX_EXACT_PATTERNS: u64 = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("window too small: r_out = {r_out} needs r_in >= {needed}, got {r_in}")]
    WindowTooSmall { r_in: u32, r_out: u32, needed: u32 },
    #[error("exact mode needs a bounded-window map")]
    UnboundedMap,
    #[error("exact mode needs a uniform input law")]
    NonUniformInput,
    #[error("output pattern space {0} too large")]
    TooManyPatterns(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] FactorMapError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Withheld,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternCount {
    /// Output symbols on the output sites, in site order.
    pub pattern: Vec<String>,
    pub count: u64,
    /// Exact mode: expected count. Monte Carlo: target probability.
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Deviation {
    Count(u64),
    TotalVariation(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PushforwardReport {
    pub map: String,
    pub mode: Mode,
    pub input_alphabet: Alphabet,
    pub output_alphabet: Alphabet,
    pub input_sites: Vec<GroupElement>,
    pub output_sites: Vec<GroupElement>,
    /// Inputs enumerated or samples drawn.
    pub total: u64,
    /// Inputs or samples whose output pattern was fully defined.
    pub used: u64,
    pub truncated: u64,
    pub truncation_rate: f64,
    pub pattern_space: u64,
    pub observed_patterns: usize,
    /// Exact: max |count − expected|. Monte Carlo: total-variation distance.
    pub max_deviation: Deviation,
    pub threshold: Option<f64>,
    pub threshold_rule: Option<String>,
    pub counts: Vec<PatternCount>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub failures: usize,
    /// Sites or slots actually compared, summed over trials.
    pub compared: usize,
    pub first_counterexample: Option<serde_json::Value>,
    pub verdict: Verdict,
}

impl PropertyReport {
    fn new(property: String, trials: usize) -> Self {
        Self { property, trials, failures: 0, compared: 0, first_counterexample: None, verdict: Verdict::Pass }
    }

    fn fail(&mut self, counterexample: serde_json::Value) {
        self.failures += 1;
        if self.first_counterexample.is_none() {
            self.first_counterexample = Some(counterexample);
        }
        self.verdict = Verdict::Fail;
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, VerifyError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| VerifyError::Threads(e.to_string()))?;
    Ok(pool.install(f))
}

fn pattern_space(k: u32, sites: usize) -> Option<u64> {
    (k as u64).checked_pow(u32::try_from(sites).ok()?)
}

fn decode_pattern(alphabet: Alphabet, mut code: u64, sites: usize) -> Vec<String> {
    let k = alphabet.size() as u64;
    (0..sites)
        .map(|_| {
            let s = (code % k) as Symbol;
            code /= k;
            alphabet.label(s)
        })
        .collect()
}

/// Mixed-radix code of the output on `positions`, or `None` if any is undefined.
fn encode_pattern(y: &Configuration, positions: &[usize]) -> Option<u64> {
    let k = y.alphabet().size() as u64;
    let mut code = 0u64;
    let mut radix = 1u64;
    for &i in positions {
        code += y.value_at(i)? as u64 * radix;
        radix = radix.wrapping_mul(k);
    }
    Some(code)
}

fn positions_in(region: &SiteSet, out: &SiteSet) -> Vec<usize> {
    out.sites().iter().map(|g| region.index_of(g).expect("output site inside input region")).collect()
}

/// Exhaustive pushforward check on `ball(r_in) → ball(r_out)`.
pub fn exact_pushforward(map: &dyn FactorMap, r_in: u32, r_out: u32, threads: usize) -> Result<PushforwardReport, VerifyError> {
    let cost = map.window_cost().bounded().ok_or(VerifyError::UnboundedMap)?;
    if r_out + cost > r_in {
        return Err(VerifyError::WindowTooSmall { r_in, r_out, needed: r_out + cost });
    }
    let input_law = map.input_law();
    if !input_law.is_uniform() {
        return Err(VerifyError::NonUniformInput);
    }
    let region = shared_ball(r_in)?;
    let out = ball(r_out)?;
    let en = enumerate(map.input_alphabet(), &region)?;
    let positions = positions_in(&region, &out);
    let out_alphabet = map.output_alphabet();
    let patterns = pattern_space(out_alphabet.size(), out.len())
        .filter(|&p| p <= MAX_EXACT_PATTERNS)
        .ok_or_else(|| VerifyError::TooManyPatterns(format!("{}^{}", out_alphabet.size(), out.len())))?;

    let chunks = en.total().div_ceil(ENUM_CHUNK);
    let tally = |c: u64| -> (Vec<u64>, u64) {
        let mut counts = vec![0u64; patterns as usize];
        let mut truncated = 0;
        for x in en.range(c * ENUM_CHUNK..(c + 1) * ENUM_CHUNK) {
            let y = map.apply_unchecked(&x).config;
            match encode_pattern(&y, &positions) {
                Some(code) => counts[code as usize] += 1,
                None => truncated += 1,
            }
        }
        (counts, truncated)
    };
    let merge = |mut a: (Vec<u64>, u64), b: (Vec<u64>, u64)| {
        a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
        (a.0, a.1 + b.1)
    };
    let (counts, truncated) = with_threads(threads, || {
        (0..chunks)
            .into_par_iter()
            .map(tally)
            .reduce(|| (vec![0u64; patterns as usize], 0), merge)
    })?;

    // expected count of each pattern: total · Π w(s_j), exact
    let weights: Vec<Ratio<u128>> = map
        .output_law()
        .exact_weights()
        .map(|w| w.iter().map(|r| Ratio::new(*r.numer() as u128, *r.denom() as u128)).collect())
        .ok_or(VerifyError::NonUniformInput)?;
    let k = out_alphabet.size() as u64;
    let mut max_dev = 0u64;
    let mut exact_match = true;
    let mut rows = Vec::with_capacity(patterns as usize);
    for (code, &count) in counts.iter().enumerate() {
        let mut expected = Ratio::from_integer(en.total() as u128);
        let mut c = code as u64;
        for _ in 0..out.len() {
            expected *= weights[(c % k) as usize];
            c /= k;
        }
        let expected_f = *expected.numer() as f64 / *expected.denom() as f64;
        if expected.is_integer() {
            max_dev = max_dev.max((count as i128 - expected.to_integer() as i128).unsigned_abs() as u64);
        } else {
            exact_match = false;
            max_dev = max_dev.max((count as f64 - expected_f).abs().ceil() as u64);
        }
        rows.push(PatternCount { pattern: decode_pattern(out_alphabet, code as u64, out.len()), count, expected: expected_f });
    }
    let verdict = if max_dev == 0 && exact_match && truncated == 0 { Verdict::Pass } else { Verdict::Fail };
    Ok(PushforwardReport {
        map: map.name(),
        mode: Mode::Exact,
        input_alphabet: map.input_alphabet(),
        output_alphabet: out_alphabet,
        input_sites: region.sites().to_vec(),
        output_sites: out.sites().to_vec(),
        total: en.total(),
        used: en.total() - truncated,
        truncated,
        truncation_rate: truncated as f64 / en.total() as f64,
        pattern_space: patterns,
        observed_patterns: counts.iter().filter(|&&c| c > 0).count(),
        max_deviation: Deviation::Count(max_dev),
        threshold: Some(0.0),
        threshold_rule: Some("exact: every count equals its expected value".into()),
        counts: rows,
        verdict,
    })
}

/// Monte Carlo run parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    /// Declared TV threshold; `None` uses the 4σ rule.
    pub threshold: Option<f64>,
    pub threads: usize,
}

/// `½ Σ 4σ_i` over cells, `σ_i = √(t_i(1 − t_i)/N)`; for large pattern
/// spaces the bound `2 Π_j Σ_s √w_s / √N` is used instead.
pub fn four_sigma_threshold(site_law: &[f64], sites: usize, samples: u64) -> (f64, String) {
    let n = samples.max(1) as f64;
    let k = site_law.len() as u64;
    match pattern_space(k as u32, sites).filter(|&p| p <= 1 << 16) {
        Some(p) => {
            let mut total = 0.0;
            for code in 0..p {
                let mut c = code;
                let mut t = 1.0;
                for _ in 0..sites {
                    t *= site_law[(c % k) as usize];
                    c /= k;
                }
                total += (t * (1.0 - t)).sqrt();
            }
            (2.0 * total / n.sqrt(), "4-sigma: 0.5 * sum_cells 4*sqrt(t(1-t)/N)".into())
        }
        None => {
            let per_site: f64 = site_law.iter().map(|w| w.sqrt()).sum();
            (2.0 * per_site.powi(sites as i32) / n.sqrt(), "4-sigma bound: 2 * prod_sites sum_s sqrt(w_s) / sqrt(N)".into())
        }
    }
}

/// Seeded Monte Carlo pushforward check against the product of the map's
/// declared output law. Samples with an undefined output are excluded and
/// counted as truncated.
pub fn mc_pushforward(map: &dyn FactorMap, r_in: u32, r_out: u32, cfg: &McConfig) -> Result<PushforwardReport, VerifyError> {
    if let WindowCost::Bounded(cost) = map.window_cost() {
        if r_out + cost > r_in {
            return Err(VerifyError::WindowTooSmall { r_in, r_out, needed: r_out + cost });
        }
    }
    let region = Arc::new(map.input_region(r_in, r_out)?);
    let out = ball(r_out)?;
    let positions = positions_in(&region, &out);
    let out_alphabet = map.output_alphabet();
    let patterns = pattern_space(out_alphabet.size(), out.len())
        .ok_or_else(|| VerifyError::TooManyPatterns(format!("{}^{}", out_alphabet.size(), out.len())))?;
    let input_law = map.input_law();
    let target = map.output_law();
    let sampler = input_law.sampler();

    let chunks = cfg.samples.div_ceil(MC_CHUNK);
    let tally = |c: u64| -> (BTreeMap<u64, u64>, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c);
        let mut counts = BTreeMap::new();
        let mut truncated = 0;
        let n = MC_CHUNK.min(cfg.samples - c * MC_CHUNK);
        for _ in 0..n {
            let values = (0..region.len()).map(|_| Some(sampler.sample(&mut rng) as Symbol)).collect();
            let x = Configuration::from_parts(input_law.alphabet(), Arc::clone(&region), values);
            let y = map.apply_unchecked(&x).config;
            match encode_pattern(&y, &positions) {
                Some(code) => *counts.entry(code).or_insert(0) += 1,
                None => truncated += 1,
            }
        }
        (counts, truncated)
    };
    let merge = |mut a: (BTreeMap<u64, u64>, u64), b: (BTreeMap<u64, u64>, u64)| {
        for (k, v) in b.0 {
            *a.0.entry(k).or_insert(0) += v;
        }
        (a.0, a.1 + b.1)
    };
    let (counts, truncated) = with_threads(cfg.threads, || {
        (0..chunks).into_par_iter().map(tally).reduce(|| (BTreeMap::new(), 0), merge)
    })?;

    let used = cfg.samples - truncated;
    let k = out_alphabet.size() as u64;
    let w = target.weights();
    let prob = |mut code: u64| {
        let mut t = 1.0;
        for _ in 0..out.len() {
            t *= w[(code % k) as usize];
            code /= k;
        }
        t
    };
    let mut abs_sum = 0.0;
    let mut observed_mass = 0.0;
    let mut rows = Vec::with_capacity(counts.len());
    for (&code, &count) in &counts {
        let t = prob(code);
        observed_mass += t;
        abs_sum += (count as f64 / used.max(1) as f64 - t).abs();
        rows.push(PatternCount { pattern: decode_pattern(out_alphabet, code, out.len()), count, expected: t });
    }
    let tv = 0.5 * (abs_sum + (1.0 - observed_mass).max(0.0));
    let (threshold, rule) = match cfg.threshold {
        Some(t) => (t, "declared".to_string()),
        None => four_sigma_threshold(w, out.len(), used),
    };
    let verdict = if used < MC_MIN_SAMPLES {
        Verdict::Withheld
    } else if tv <= threshold {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(PushforwardReport {
        map: map.name(),
        mode: Mode::MonteCarlo,
        input_alphabet: map.input_alphabet(),
        output_alphabet: out_alphabet,
        input_sites: region.sites().to_vec(),
        output_sites: out.sites().to_vec(),
        total: cfg.samples,
        used,
        truncated,
        truncation_rate: truncated as f64 / cfg.samples.max(1) as f64,
        pattern_space: patterns,
        observed_patterns: counts.len(),
        max_deviation: Deviation::TotalVariation(tv),
        threshold: Some(threshold),
        threshold_rule: Some(rule),
        counts: rows,
        verdict,
    })
}

fn random_ball2_element(rng: &mut ChaCha8Rng, b2: &SiteSet) -> GroupElement {
    b2.get(rng.gen_range(0..b2.len())).clone()
}

/// `M(g·x) = g·M(x)` on the sites where both sides are defined, for random
/// `g ∈ ball(2)` and random total `x` on `ball(r)` drawn from the map's input law.
pub fn check_equivariance(map: &dyn FactorMap, r: u32, trials: usize, seed: u64) -> Result<PropertyReport, VerifyError> {
    let b = shared_ball(r)?;
    let b2 = ball(2)?;
    let law = map.input_law();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new(format!("equivariance[{}]", map.name()), trials);
    for _ in 0..trials {
        let g = random_ball2_element(&mut rng, &b2);
        let x = sample_with(&law, &b, &mut rng);
        let lhs = map.apply(&x.translate(&g))?;
        let rhs = map.apply(&x)?.translate(&g);
        let (compared, bad) = lhs.compare_defined(&rhs);
        report.compared += compared;
        if let Some(site) = bad {
            report.fail(json!({ "g": g, "site": site, "x": x.to_dump() }));
        }
    }
    Ok(report)
}

/// `α(g₁g₂, c) = α(g₁, c) + α(g₂, g₁⁻¹c)` for random words of length ≤ 8.
pub fn check_cocycle(trials: usize, seed: u64) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("cocycle_identity".into(), trials);
    for _ in 0..trials {
        let g1 = GroupElement::random(&mut rng, 8);
        let g2 = GroupElement::random(&mut rng, 8);
        let c = coset_of(&GroupElement::random(&mut rng, 8));
        let moved = coset_of(&g1.inv().mul(c.representative()));
        let lhs = cocycle(&g1.mul(&g2), &c);
        let rhs = cocycle(&g1, &c).and_then(|x| cocycle(&g2, &moved).map(|y| x + y));
        report.compared += 1;
        match (lhs, rhs) {
            (Ok(l), Ok(r)) if l == r => {}
            (l, r) => report.fail(json!({
                "g1": g1, "g2": g2, "c": c.representative(),
                "lhs": l.map_err(|e| e.to_string()), "rhs": r.map_err(|e| e.to_string()),
            })),
        }
    }
    report
}

/// Round trip `J⁻¹(J(x)) = x` and equivariance `J(g·x) = g·J(x)` for random
/// `x` on `ball(r)` over a three-letter alphabet and random `g ∈ ball(2)`.
pub fn check_j_roundtrip(r: u32, trials: usize, seed: u64) -> Result<PropertyReport, VerifyError> {
    let b = shared_ball(r)?;
    let b2 = ball(2)?;
    let law = Distribution::uniform(Alphabet::Plain(3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("J_roundtrip_and_equivariance".into(), trials);
    for _ in 0..trials {
        let x = sample_with(&law, &b, &mut rng);
        let g = random_ball2_element(&mut rng, &b2);
        let back = conj_j_inv_on(&conj_j_default(&x), &b).map_err(|e| ConfigError::BadWeights(e.to_string()))?;
        report.compared += b.len();
        if back != x {
            report.fail(json!({ "check": "roundtrip", "x": x.to_dump() }));
            continue;
        }
        let w = r + 2;
        let lhs = conj_j(&x.translate(&g), w);
        let rhs = coinduced_act(&g, &conj_j(&x, w)).map_err(|e| ConfigError::BadWeights(e.to_string()))?;
        let (compared, bad) = lhs.compare_defined(&rhs);
        report.compared += compared;
        if let Some((c, j)) = bad {
            report.fail(json!({ "check": "equivariance", "g": g, "coset": c.representative(), "j": j, "x": x.to_dump() }));
        }
    }
    Ok(report)
}

/// Equivariance of `J⁻¹ ∘ Φ ∘ J` for a per-coset window map.
pub fn check_chain_step_equivariance(phi: &dyn WindowMap, r: u32, trials: usize, seed: u64) -> Result<PropertyReport, VerifyError> {
    let b = shared_ball(r)?;
    let b2 = ball(2)?;
    let law = Distribution::uniform(phi.input_alphabet());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new(format!("coinduced_equivariance[{phi:?}]"), trials);
    for _ in 0..trials {
        let g = random_ball2_element(&mut rng, &b2);
        let x = sample_with(&law, &b, &mut rng);
        let to_err = |e: crate::coinduce::CoinduceError| ConfigError::BadWeights(e.to_string());
        let lhs = coinduce_chain_step(phi, &x.translate(&g)).map_err(to_err)?;
        let rhs = coinduce_chain_step(phi, &x).map_err(to_err)?.translate(&g);
        let (compared, bad) = lhs.compare_defined(&rhs);
        report.compared += compared;
        if let Some(site) = bad {
            report.fail(json!({ "g": g, "site": site, "x": x.to_dump() }));
        }
    }
    Ok(report)
}

/// Exact law of `J(x)` on the first `slots` defined `(coset, a^j)` slots when
/// `x` runs over all of `U_2^{ball(r)}`; every joint pattern must occur
/// `2^{|ball(r)| − slots}` times.
pub fn exact_j_pushforward(r: u32, slots: Option<usize>) -> Result<PushforwardReport, VerifyError> {
    let b = shared_ball(r)?;
    let en = enumerate(Alphabet::U2, &b)?;
    let w = r;
    let reference = conj_j(&en.nth_config(0), w);
    let mut slot_list: Vec<(crate::coinduce::Coset, i64)> = Vec::new();
    for c in reference.cosets() {
        for j in -(w as i64)..=(w as i64) {
            if reference.get(c, j).is_some() {
                slot_list.push((c.clone(), j));
            }
        }
    }
    let k = slots.unwrap_or(slot_list.len()).min(slot_list.len());
    slot_list.truncate(k);
    let patterns = 1u64 << k;
    let mut counts = vec![0u64; patterns as usize];
    let mut undefined = 0u64;
    for x in en.iter() {
        let jx = conj_j(&x, w);
        let mut code = 0u64;
        let mut ok = true;
        for (bit, (c, j)) in slot_list.iter().enumerate() {
            match jx.get(c, *j) {
                Some(v) => code |= (v as u64) << bit,
                None => ok = false,
            }
        }
        if ok {
            counts[code as usize] += 1;
        } else {
            undefined += 1;
        }
    }
    let expected = en.total() / patterns;
    let max_dev = counts.iter().map(|&c| c.abs_diff(expected)).max().unwrap_or(0);
    let verdict = if max_dev == 0 && undefined == 0 { Verdict::Pass } else { Verdict::Fail };
    let output_sites = slot_list
        .iter()
        .map(|(c, j)| c.representative().mul(&GroupElement::power(crate::freegroup::Generator::A, *j)))
        .collect();
    Ok(PushforwardReport {
        map: "J".into(),
        mode: Mode::Exact,
        input_alphabet: Alphabet::U2,
        output_alphabet: Alphabet::U2,
        input_sites: b.sites().to_vec(),
        output_sites,
        total: en.total(),
        used: en.total() - undefined,
        truncated: undefined,
        truncation_rate: undefined as f64 / en.total() as f64,
        pattern_space: patterns,
        observed_patterns: counts.iter().filter(|&&c| c > 0).count(),
        max_deviation: Deviation::Count(max_dev),
        threshold: Some(0.0),
        threshold_rule: Some("exact: every count equals its expected value".into()),
        counts: counts
            .iter()
            .enumerate()
            .map(|(code, &count)| PatternCount {
                pattern: decode_pattern(Alphabet::U2, code as u64, k),
                count,
                expected: expected as f64,
            })
            .collect(),
        verdict,
    })
}

/// Sizes of `ball(r)` for `r ≤ r_in`, used by callers predicting defined regions.
pub fn predicted_defined(r_in: u32, cost: u32) -> usize {
    if cost > r_in {
        0
    } else {
        ball_size(r_in - cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coinduce::SlidingBlock;
    use crate::factormaps::{MapOutput, OwMap, Relabel, StarMap, TimarBits};

    #[test]
    fn ow_exact_small_window() {
        let r = exact_pushforward(&OwMap, 1, 0, 1).unwrap();
        assert_eq!(r.total, 32);
        assert_eq!(r.counts.len(), 4);
        assert!(r.counts.iter().all(|c| c.count == 8));
        assert_eq!(r.max_deviation, Deviation::Count(0));
        assert!(r.verdict.is_pass());
    }

    #[test]
    fn ow_exact_ball2() {
        let r = exact_pushforward(&OwMap, 2, 1, 2).unwrap();
        assert_eq!(r.total, 131_072);
        assert_eq!(r.pattern_space, 1024);
        assert!(r.counts.iter().all(|c| c.count == 128));
        assert!(r.verdict.is_pass());
    }

    #[test]
    fn identity_exact_is_uniform() {
        let r = exact_pushforward(&Relabel::identity(Alphabet::Plain(3)), 1, 1, 1).unwrap();
        assert!(r.verdict.is_pass());
        assert!(r.counts.iter().all(|c| c.count == 1));
    }

    #[test]
    fn timar_exact_planes_uniform() {
        for m in 1..=2 {
            let r = exact_pushforward(&TimarBits { m }, 2, 0, 1).unwrap();
            assert!(r.verdict.is_pass(), "m = {m}");
        }
    }

    #[test]
    fn non_surjective_relabel_fails_exact_uniformity_but_matches_its_law() {
        let collapse = Relabel::new(Alphabet::U2, Alphabet::U2, vec![0, 0]).unwrap();
        let r = exact_pushforward(&collapse, 1, 0, 1).unwrap();
        // declared output law is the point mass, which it matches
        assert!(r.verdict.is_pass());
        assert_eq!(r.counts[0].count, 32);
    }

    #[test]
    fn exact_mode_errors() {
        assert!(matches!(exact_pushforward(&OwMap, 1, 1, 1), Err(VerifyError::WindowTooSmall { needed: 2, .. })));
        assert_eq!(exact_pushforward(&StarMap::new(0.25).unwrap(), 2, 0, 1), Err(VerifyError::UnboundedMap));
        assert!(matches!(
            exact_pushforward(&OwMap, 3, 0, 1),
            Err(VerifyError::Config(ConfigError::EnumerationTooLarge { .. }))
        ));
    }

    #[test]
    fn exact_tallies_independent_of_threads() {
        let a = exact_pushforward(&OwMap, 2, 1, 1).unwrap();
        let b = exact_pushforward(&OwMap, 2, 1, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mc_smoke_run_withholds_verdict() {
        let cfg = McConfig { samples: 10, seed: 1, threshold: None, threads: 1 };
        let r = mc_pushforward(&OwMap, 2, 1, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Withheld);
        assert_eq!(r.total, 10);
        assert!(serde_json::to_string(&r).is_ok());
    }

    #[test]
    fn ow_mc_agrees_with_exact() {
        let cfg = McConfig { samples: 200_000, seed: 3, threshold: None, threads: 2 };
        let mc = mc_pushforward(&OwMap, 1, 0, &cfg).unwrap();
        let ex = exact_pushforward(&OwMap, 1, 0, 1).unwrap();
        assert_eq!(mc.verdict, ex.verdict);
    }

    #[test]
    fn mc_detects_wrong_law() {
        // a map that declares uniform output but always writes 0
        let lying = Relabel::new(Alphabet::U2, Alphabet::U2, vec![0, 0]).unwrap();
        #[derive(Debug)]
        struct Liar(Relabel);
        impl FactorMap for Liar {
            fn name(&self) -> String { "liar".into() }
            fn input_alphabet(&self) -> Alphabet { Alphabet::U2 }
            fn output_alphabet(&self) -> Alphabet { Alphabet::U2 }
            fn window_cost(&self) -> WindowCost { WindowCost::Bounded(0) }
            fn input_law(&self) -> Distribution { Distribution::uniform(Alphabet::U2) }
            fn output_law(&self) -> Distribution { Distribution::uniform(Alphabet::U2) }
            fn apply_unchecked(&self, x: &Configuration) -> MapOutput { self.0.apply_unchecked(x) }
        }
        let cfg = McConfig { samples: 5000, seed: 3, threshold: None, threads: 1 };
        let r = mc_pushforward(&Liar(lying.clone()), 0, 0, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.max_deviation, Deviation::TotalVariation(0.5));
        assert_eq!(exact_pushforward(&Liar(lying), 0, 0, 1).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn mc_is_reproducible_across_threads() {
        let star = StarMap::new(0.25).unwrap();
        let cfg1 = McConfig { samples: 50_000, seed: 9, threshold: None, threads: 1 };
        let cfg4 = McConfig { threads: 4, ..cfg1.clone() };
        let a = mc_pushforward(&star, 12, 0, &cfg1).unwrap();
        let b = mc_pushforward(&star, 12, 0, &cfg4).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn four_sigma_rule_for_star_law() {
        let (t, _) = four_sigma_threshold(&[0.125, 0.125, 0.125, 0.125, 0.5], 1, 1_000_000);
        let expected = 2.0 * (4.0 * (0.125f64 * 0.875).sqrt() + 0.5) / 1000.0;
        assert!((t - expected).abs() < 1e-15);
        assert!(t < 0.004);
    }

    #[test]
    fn equivariance_of_builtin_maps() {
        for map in [&OwMap as &dyn FactorMap, &TimarBits { m: 3 }, &StarMap::new(0.25).unwrap()] {
            let r = check_equivariance(map, 4, 200, 17).unwrap();
            assert_eq!(r.failures, 0, "{}", map.name());
            assert!(r.compared > 0);
        }
    }

    #[test]
    fn corrupted_rule_is_caught() {
        /// Adds the parity of the word length, which left translation does not preserve.
        #[derive(Debug)]
        struct LengthParity;
        impl FactorMap for LengthParity {
            fn name(&self) -> String { "length_parity".into() }
            fn input_alphabet(&self) -> Alphabet { Alphabet::U2 }
            fn output_alphabet(&self) -> Alphabet { Alphabet::U2 }
            fn window_cost(&self) -> WindowCost { WindowCost::Bounded(0) }
            fn input_law(&self) -> Distribution { Distribution::uniform(Alphabet::U2) }
            fn output_law(&self) -> Distribution { Distribution::uniform(Alphabet::U2) }
            fn apply_unchecked(&self, x: &Configuration) -> MapOutput {
                let values = x
                    .sites()
                    .sites()
                    .iter()
                    .zip(x.values())
                    .map(|(g, v)| v.map(|s| s ^ (g.len() as u32 & 1)))
                    .collect();
                MapOutput { config: Configuration::new(Alphabet::U2, Arc::clone(x.sites()), values).unwrap(), truncated: 0 }
            }
        }
        let r = check_equivariance(&LengthParity, 3, 100, 1).unwrap();
        assert!(r.failures > 0);
        assert_eq!(r.verdict, Verdict::Fail);
        let ce = r.first_counterexample.unwrap();
        assert!(ce.get("g").is_some() && ce.get("site").is_some());
    }

    #[test]
    fn cocycle_driver() {
        let r = check_cocycle(1000, 5);
        assert_eq!(r.failures, 0);
        assert_eq!(r.compared, 1000);
    }

    #[test]
    fn j_driver() {
        let r = check_j_roundtrip(3, 100, 5).unwrap();
        assert_eq!(r.failures, 0);
        assert!(r.compared > 0);
    }

    #[test]
    fn j_pushforward_counts() {
        let all = exact_j_pushforward(2, None).unwrap();
        assert_eq!(all.pattern_space, 1 << 17);
        assert!(all.verdict.is_pass());
        let some = exact_j_pushforward(2, Some(6)).unwrap();
        assert!(some.counts.iter().all(|c| c.count == 1 << 11));
    }

    #[test]
    fn chain_step_driver() {
        for phi in [&Relabel::swap() as &dyn WindowMap, &Relabel::identity(Alphabet::U2), &SlidingBlock::z2_difference()] {
            let r = check_chain_step_equivariance(phi, 3, 100, 2).unwrap();
            assert_eq!(r.failures, 0);
        }
    }
}
