//! Chains of factor maps with window and entropy bookkeeping.
//!
//! A plan is a list of stages. Constructive stages are [`MapSpec`]s. Stages
//! with no constructive realization here (conjugacies between Bernoulli
//! shifts of equal entropy, Sinai factors) are `external`: they carry a note,
//! keep the entropy fixed in the ledger, and can only be run if the user
//! supplies a concrete map in `resolved_by`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Alphabet, Configuration, Distribution};
use crate::entropy::{run_recursion, shannon, EntropyError, LN_2};
use crate::factormaps::{FactorMap, FactorMapError, MapSpec, WindowCost};
use crate::freegroup::ball_size;

pub use crate::coinduce::coinduce_chain_step;

/// Tolerance for entropy-ledger consistency.
pub const LEDGER_TOL: f64 = 1e-12;
/// Step cap used by [`plan_boost_chain`].
pub const MAX_BOOST_STEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("initial law must have the shape (p, p, 1 - 2p) on star:1")]
    NotStarShape,
    #[error("stage {stage}: expected input alphabet {expected}, previous stage produces {got}")]
    AlphabetMismatch { stage: usize, expected: Alphabet, got: Alphabet },
    #[error("stage {stage}: ledger predicts entropy {expected}, declared law has {got}")]
    LedgerInconsistent { stage: usize, expected: f64, got: f64 },
    #[error("stage {stage} is external ({note}) and has no resolving map")]
    ExternalStageUnresolved { stage: usize, note: String },
    #[error("input radius {radius} is smaller than the chain's window cost {needed}")]
    InsufficientRadius { radius: u32, needed: u32 },
    #[error("stage {stage}: {source}")]
    Map { stage: usize, source: FactorMapError },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExternalTag {
    #[default]
    External,
}

/// A stage with no constructive realization in this crate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalStage {
    pub map: ExternalTag,
    pub note: String,
    /// A concrete map standing in for the stage when running the chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_by: Option<MapSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageSpec {
    External(ExternalStage),
    Map(MapSpec),
}

impl StageSpec {
    pub fn external(note: &str) -> Self {
        StageSpec::External(ExternalStage { map: ExternalTag::External, note: note.into(), resolved_by: None })
    }

    pub fn name(&self) -> String {
        match self {
            StageSpec::Map(m) => m.to_string(),
            StageSpec::External(e) => format!("external({})", e.note),
        }
    }
}

/// Alphabet and weights of a declared law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawView {
    pub alphabet: Alphabet,
    pub weights: Vec<f64>,
}

impl From<&Distribution> for LawView {
    fn from(d: &Distribution) -> Self {
        Self { alphabet: d.alphabet(), weights: d.weights().to_vec() }
    }
}

/// Declared laws and costs of one stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageInfo {
    pub stage: String,
    pub constructive: bool,
    pub window_cost: WindowCost,
    pub input_law: LawView,
    pub output_law: LawView,
    pub entropy_in: f64,
    pub entropy_out: f64,
}

/// The on-disk plan format; derived fields are recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub stages: Vec<StageSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainPlan {
    pub stages: Vec<StageSpec>,
    pub total_window_cost: WindowCost,
    /// Declared entropy before the first stage, then after each stage.
    pub entropy_ledger: Vec<f64>,
    pub info: Vec<StageInfo>,
}

fn build(stage: usize, spec: &MapSpec) -> Result<Arc<dyn FactorMap>, PipelineError> {
    spec.build().map_err(|source| PipelineError::Map { stage, source })
}

impl ChainPlan {
    /// Validates alphabets and the entropy ledger.
    ///
    /// An external stage inherits its input law from the previous stage and
    /// its output law from the next one (or keeps its input law at the end of
    /// the chain); the ledger requires it to preserve entropy.
    pub fn new(stages: Vec<StageSpec>) -> Result<Self, PipelineError> {
        let built: Vec<Option<Arc<dyn FactorMap>>> = stages
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                StageSpec::Map(m) => build(i, m).map(Some),
                StageSpec::External(e) => e.resolved_by.as_ref().map(|m| build(i, m)).transpose(),
            })
            .collect::<Result<_, _>>()?;

        // alphabets across every adjacent pair with known ends
        for i in 1..stages.len() {
            if let (Some(prev), Some(next)) = (&built[i - 1], &built[i]) {
                if prev.output_alphabet() != next.input_alphabet() {
                    return Err(PipelineError::AlphabetMismatch {
                        stage: i,
                        expected: next.input_alphabet(),
                        got: prev.output_alphabet(),
                    });
                }
            }
        }

        let mut info: Vec<StageInfo> = Vec::with_capacity(stages.len());
        let mut total = WindowCost::Bounded(0);
        for (i, spec) in stages.iter().enumerate() {
            let (input_law, output_law, cost, constructive) = match (spec, &built[i]) {
                (StageSpec::Map(_), Some(m)) => (m.input_law(), m.output_law(), m.window_cost(), true),
                (StageSpec::External(_), resolved) => {
                    let input_law = match i {
                        0 => resolved.as_ref().map(|m| m.input_law()),
                        _ => built[i - 1].as_ref().map(|m| m.output_law()),
                    };
                    let next_law = stages
                        .get(i + 1)
                        .and_then(|_| built[i + 1].as_ref())
                        .map(|m| m.input_law());
                    let input_law = input_law.or_else(|| next_law.clone()).ok_or_else(|| {
                        PipelineError::ExternalStageUnresolved { stage: i, note: "no neighbouring law".into() }
                    })?;
                    let output_law = next_law.unwrap_or_else(|| input_law.clone());
                    let cost = resolved.as_ref().map_or(WindowCost::UnboundedLookahead, |m| m.window_cost());
                    (input_law, output_law, cost, false)
                }
                (StageSpec::Map(_), None) => unreachable!("map stages are always built"),
            };
            total = total.plus(cost);
            let (h_in, h_out) = (shannon(&input_law).nats(), shannon(&output_law).nats());
            if let Some(prev) = info.last() {
                if (prev.entropy_out - h_in).abs() > LEDGER_TOL {
                    return Err(PipelineError::LedgerInconsistent { stage: i, expected: prev.entropy_out, got: h_in });
                }
            }
            let predicted = match spec {
                StageSpec::Map(MapSpec::Star { p }) => h_in + 2.0 * p * LN_2,
                StageSpec::External(_) => h_in,
                StageSpec::Map(_) => h_out,
            };
            if (predicted - h_out).abs() > LEDGER_TOL {
                return Err(PipelineError::LedgerInconsistent { stage: i, expected: predicted, got: h_out });
            }
            info.push(StageInfo {
                stage: spec.name(),
                constructive,
                window_cost: cost,
                input_law: (&input_law).into(),
                output_law: (&output_law).into(),
                entropy_in: h_in,
                entropy_out: h_out,
            });
        }
        let mut entropy_ledger: Vec<f64> = info.first().map(|s| s.entropy_in).into_iter().collect();
        entropy_ledger.extend(info.iter().map(|s| s.entropy_out));
        Ok(Self { stages, total_window_cost: total, entropy_ledger, info })
    }

    pub fn from_file(file: PlanFile) -> Result<Self, PipelineError> {
        Self::new(file.stages)
    }

    pub fn to_file(&self) -> PlanFile {
        PlanFile { stages: self.stages.clone() }
    }

    pub fn final_entropy(&self) -> Option<f64> {
        self.entropy_ledger.last().copied()
    }

    pub fn star_stages(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, StageSpec::Map(MapSpec::Star { .. }))).count()
    }
}

/// Star-map boosting from `λ₀ = (p, p, 1 − 2p)` until the declared entropy
/// reaches `log 2`, with an external re-coding back to three-symbol shape
/// between consecutive star stages.
pub fn plan_boost_chain(lambda0: &Distribution) -> Result<ChainPlan, PipelineError> {
    let w = lambda0.weights();
    if lambda0.alphabet() != Alphabet::STAR1 || w[0] != w[1] || (w[2] - (1.0 - 2.0 * w[0])).abs() > 1e-12 {
        return Err(PipelineError::NotStarShape);
    }
    let h0 = shannon(lambda0).nats();
    if h0 >= LN_2 {
        return ChainPlan::new(Vec::new());
    }
    let trace = run_recursion(h0, MAX_BOOST_STEPS)?;
    let mut stages = Vec::with_capacity(2 * trace.steps);
    for (i, &p) in trace.p.iter().enumerate() {
        if i > 0 {
            stages.push(StageSpec::external("Stepin recode"));
        }
        // the first stage uses λ₀'s own parameter rather than the re-solved one
        let p = if i == 0 { w[0] } else { p };
        stages.push(StageSpec::Map(MapSpec::Star { p }));
    }
    ChainPlan::new(stages)
}

/// [`plan_boost_chain`] from the initial entropy alone.
pub fn plan_boost_chain_from_entropy(h0: f64) -> Result<ChainPlan, PipelineError> {
    if h0.is_finite() && h0 >= LN_2 {
        return ChainPlan::new(Vec::new());
    }
    let p = crate::entropy::solve_p(h0)?;
    let lambda0 = Distribution::star_input(p).map_err(|_| PipelineError::NotStarShape)?;
    plan_boost_chain(&lambda0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRun {
    pub stage: String,
    pub input_defined: usize,
    pub output_defined: usize,
    /// `|ball(r − C)|` when the input is total on `ball(r)` and the
    /// cumulative window cost `C` is bounded.
    pub predicted_defined: Option<usize>,
    pub truncated: usize,
}

#[derive(Clone, Debug)]
pub struct ChainRun {
    pub output: Configuration,
    pub stages: Vec<StageRun>,
}

impl ChainRun {
    pub fn matches_prediction(&self) -> bool {
        self.stages.iter().all(|s| s.predicted_defined.is_none_or(|p| p == s.output_defined))
    }
}

/// Runs the stages left to right on `x`.
pub fn run_chain(plan: &ChainPlan, x: &Configuration) -> Result<ChainRun, PipelineError> {
    let maps: Vec<Arc<dyn FactorMap>> = plan
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| match s {
            StageSpec::Map(m) => build(i, m),
            StageSpec::External(e) => match &e.resolved_by {
                Some(m) => build(i, m),
                None => Err(PipelineError::ExternalStageUnresolved { stage: i, note: e.note.clone() }),
            },
        })
        .collect::<Result<_, _>>()?;

    let radius = x.sites().radius() as u32;
    let is_ball = x.is_total() && x.sites().len() == ball_size(radius);
    if let WindowCost::Bounded(c) = plan.total_window_cost {
        if c > radius {
            return Err(PipelineError::InsufficientRadius { radius, needed: c });
        }
    }

    let mut current = x.clone();
    let mut cumulative = WindowCost::Bounded(0);
    let mut runs = Vec::with_capacity(maps.len());
    for (i, map) in maps.iter().enumerate() {
        let out = map.apply_counting(&current).map_err(|source| PipelineError::Map { stage: i, source })?;
        cumulative = cumulative.plus(map.window_cost());
        let predicted = match cumulative {
            WindowCost::Bounded(c) if is_ball && c <= radius => Some(ball_size(radius - c)),
            _ => None,
        };
        runs.push(StageRun {
            stage: map.name(),
            input_defined: current.defined_count(),
            output_defined: out.config.defined_count(),
            predicted_defined: predicted,
            truncated: out.truncated,
        });
        if out.config.defined_count() == 0 {
            return Err(PipelineError::InsufficientRadius { radius, needed: cumulative.bounded().unwrap_or(u32::MAX) });
        }
        current = out.config;
    }
    Ok(ChainRun { output: current, stages: runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::sample;
    use crate::factormaps::{timar_bits, OwMap};
    use crate::freegroup::shared_ball;

    #[test]
    fn boost_plan_from_half() {
        let plan = plan_boost_chain_from_entropy(0.5).unwrap();
        assert_eq!(plan.star_stages(), 2);
        assert_eq!(plan.stages.len(), 3);
        assert!(matches!(&plan.stages[1], StageSpec::External(e) if e.note == "Stepin recode"));
        let h = &plan.entropy_ledger;
        assert_eq!(h.len(), 4);
        // oracle values from a 40-digit bisection
        assert!((h[0] - 0.5).abs() < 1e-12);
        assert!((h[1] - 0.596_487_554_097_165_3).abs() < 1e-12);
        assert!((h[2] - h[1]).abs() < 1e-12);
        assert!((h[3] - 0.721_356_834_428_246_7).abs() < 1e-12);
        assert!(plan.final_entropy().unwrap() >= LN_2);
        assert_eq!(plan.total_window_cost, WindowCost::UnboundedLookahead);
    }

    #[test]
    fn star_stage_output_law_is_split_mass() {
        let plan = plan_boost_chain_from_entropy(0.3).unwrap();
        for (spec, info) in plan.stages.iter().zip(&plan.info) {
            if let StageSpec::Map(MapSpec::Star { p }) = spec {
                let w = &info.output_law.weights;
                assert_eq!(info.output_law.alphabet, Alphabet::StarExtended(2));
                assert!(w[..4].iter().all(|&x| (x - p / 2.0).abs() < 1e-15));
                assert!((w[4] - (1.0 - 2.0 * p)).abs() < 1e-15);
            }
        }
        let trace = run_recursion(0.3, MAX_BOOST_STEPS).unwrap();
        assert_eq!(plan.star_stages(), trace.steps);
    }

    #[test]
    fn high_entropy_gives_empty_chain() {
        assert!(plan_boost_chain_from_entropy(LN_2).unwrap().stages.is_empty());
        assert!(plan_boost_chain_from_entropy(1.0).unwrap().stages.is_empty());
        let third = Distribution::star_input(1.0 / 3.0 - 1e-9).unwrap();
        assert!(plan_boost_chain(&third).unwrap().stages.is_empty());
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(plan_boost_chain_from_entropy(0.0), Err(PipelineError::Entropy(_))));
        let bad = Distribution::new(Alphabet::STAR1, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(plan_boost_chain(&bad), Err(PipelineError::NotStarShape));
        let mismatch = ChainPlan::new(vec![StageSpec::Map(MapSpec::Ow), StageSpec::Map(MapSpec::Ow)]);
        assert!(matches!(mismatch, Err(PipelineError::AlphabetMismatch { stage: 1, .. })));
    }

    #[test]
    fn plan_file_round_trip() {
        let json = r#"{"stages":[{"map":"star","p":0.25},{"map":"external","note":"Stepin recode"},{"map":"star","p":0.25}]}"#;
        let file: PlanFile = serde_json::from_str(json).unwrap();
        assert!(matches!(file.stages[1], StageSpec::External(_)));
        assert_eq!(serde_json::to_string(&file).unwrap(), json);
        // a recode cannot lower entropy from H(μ(0.25)) to H(λ(0.25))
        assert!(matches!(ChainPlan::from_file(file), Err(PipelineError::LedgerInconsistent { stage: 1, .. })));

        let plan = plan_boost_chain_from_entropy(0.5).unwrap();
        let again = ChainPlan::from_file(serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap()).unwrap();
        assert_eq!(again, plan);
    }

    #[test]
    fn unresolved_external_is_rejected_at_run() {
        let plan = plan_boost_chain_from_entropy(0.5).unwrap();
        let x = sample(&Distribution::star_input(0.1).unwrap(), &shared_ball(4).unwrap(), 1);
        assert!(matches!(run_chain(&plan, &x), Err(PipelineError::ExternalStageUnresolved { stage: 1, .. })));
    }

    #[test]
    fn single_ow_chain_equals_ow() {
        let plan = ChainPlan::new(vec![StageSpec::Map(MapSpec::Ow)]).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::U2), &shared_ball(4).unwrap(), 3);
        let run = run_chain(&plan, &x).unwrap();
        assert_eq!(run.output, OwMap.apply(&x).unwrap());
        assert_eq!(run.stages[0].output_defined, ball_size(3));
        assert!(run.matches_prediction());
    }

    #[test]
    fn timar_tail_chain_matches_timar_bits() {
        let plan = ChainPlan::new(vec![
            StageSpec::Map(MapSpec::Ow),
            StageSpec::Map(MapSpec::Stage { n: 1 }),
            StageSpec::Map(MapSpec::Planes { from: 3, to: 2 }),
        ])
        .unwrap();
        assert_eq!(plan.total_window_cost, WindowCost::Bounded(2));
        let b = shared_ball(5).unwrap();
        for seed in 0..100 {
            let x = sample(&Distribution::uniform(Alphabet::U2), &b, seed);
            let run = run_chain(&plan, &x).unwrap();
            assert_eq!(run.output, timar_bits(&x, 2).unwrap());
            assert!(run.matches_prediction());
            assert_eq!(run.stages.iter().map(|s| s.output_defined).collect::<Vec<_>>(), [ball_size(4), ball_size(3), ball_size(3)]);
        }
    }

    #[test]
    fn empty_chain_is_identity() {
        let plan = ChainPlan::new(Vec::new()).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::Plain(5)), &shared_ball(2).unwrap(), 4);
        assert_eq!(run_chain(&plan, &x).unwrap().output, x);
        assert!(plan.entropy_ledger.is_empty());
    }

    #[test]
    fn insufficient_radius() {
        let plan = ChainPlan::new(vec![StageSpec::Map(MapSpec::Timar { m: 3 })]).unwrap();
        let x = sample(&Distribution::uniform(Alphabet::U2), &shared_ball(2).unwrap(), 4);
        assert_eq!(run_chain(&plan, &x).unwrap_err(), PipelineError::InsufficientRadius { radius: 2, needed: 3 });
    }

    #[test]
    fn resolved_external_runs() {
        let table = vec![0, 1, 0, 1, 2];
        let recode = MapSpec::Relabel { input: Alphabet::StarExtended(2), output: Alphabet::STAR1, table };
        let stages = vec![
            StageSpec::Map(MapSpec::Star { p: 0.2 }),
            StageSpec::External(ExternalStage { map: ExternalTag::External, note: "plane 1".into(), resolved_by: Some(recode) }),
        ];
        let plan = ChainPlan::new(stages).unwrap();
        let x = sample(&Distribution::star_input(0.2).unwrap(), &shared_ball(6).unwrap(), 8);
        let run = run_chain(&plan, &x).unwrap();
        assert_eq!(run.output.alphabet(), Alphabet::STAR1);
        assert_eq!(run.stages.len(), 2);
        assert_eq!(run.stages[1].input_defined, run.stages[1].output_defined);
    }

    #[test]
    fn ledger_matches_star_law_entropy() {
        let plan = plan_boost_chain_from_entropy(0.05).unwrap();
        for (spec, info) in plan.stages.iter().zip(&plan.info) {
            if let StageSpec::Map(MapSpec::Star { p }) = spec {
                let mu = Distribution::star_output(*p).unwrap();
                assert!((shannon(&mu).nats() - info.entropy_out).abs() < LEDGER_TOL);
                assert!((info.entropy_out - info.entropy_in - 2.0 * p * LN_2).abs() < LEDGER_TOL);
            }
        }
    }
}
