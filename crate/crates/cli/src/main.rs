mod args;

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, CoinduceCommand, Command, EntropyCommand, PipelineCommand, VerifyCommand, WindowMapKind};
use fshift_core::acceptance::run_all;
use fshift_core::coinduce::{
    coinduce_chain_step, coinduced_act, cocycle, conj_j, conj_j_inv, coset_of, CosetConfiguration, CosetDump,
    SlidingBlock, WindowMap,
};
use fshift_core::config::{sample, ConfigDump};
use fshift_core::entropy::{run_recursion, shannon_weights, solve_p, three_symbol_entropy};
use fshift_core::factormaps::{MapReport, Relabel};
use fshift_core::pipeline::{plan_boost_chain_from_entropy, run_chain, ChainPlan, PlanFile};
use fshift_core::verify::{
    check_chain_step_equivariance, check_cocycle, check_equivariance, check_j_roundtrip, exact_j_pushforward,
    exact_pushforward, mc_pushforward, McConfig, PushforwardReport, Verdict,
};
use fshift_core::{Alphabet, Configuration, GroupElement};

/// A usage or input error, reported as a JSON object with exit status 2.
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, e: impl std::fmt::Display) -> Self {
        Self { kind, message: e.to_string() }
    }
}

enum Outcome {
    Done(Value),
    Verdict(Value, bool),
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| Failure::new("io", e))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_input(path)?).map_err(|e| Failure::new("parse", e))
}

fn read_config(path: &Path) -> Result<Configuration, Failure> {
    Configuration::from_dump(read_json::<ConfigDump>(path)?).map_err(|e| Failure::new("input", e))
}

fn read_cosets(path: &Path) -> Result<CosetConfiguration, Failure> {
    CosetConfiguration::from_dump(read_json::<CosetDump>(path)?).map_err(|e| Failure::new("input", e))
}

fn element(s: &str) -> Result<GroupElement, Failure> {
    s.parse().map_err(|e| Failure::new("usage", e))
}

fn window_map(kind: WindowMapKind) -> Box<dyn WindowMap> {
    match kind {
        WindowMapKind::Identity => Box::new(Relabel::identity(Alphabet::U2)),
        WindowMapKind::Swap => Box::new(Relabel::swap()),
        WindowMapKind::Difference => Box::new(SlidingBlock::z2_difference()),
    }
}

fn pushforward(report: PushforwardReport, summary: bool) -> Outcome {
    let pass = report.verdict != Verdict::Fail;
    let mut value = to_value(&report);
    if summary {
        value.as_object_mut().expect("report is an object").remove("counts");
    }
    Outcome::Verdict(value, pass)
}

fn property(report: impl Serialize, failures: usize) -> Outcome {
    Outcome::Verdict(to_value(report), failures == 0)
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Map(a) => {
            let map = a.map.build().map_err(|e| Failure::new("usage", e))?;
            let x = match &a.input {
                Some(path) => read_config(path)?,
                None => {
                    let sites = fshift_core::freegroup::shared_ball(a.radius).map_err(|e| Failure::new("usage", e))?;
                    sample(&map.input_law(), &sites, a.seed)
                }
            };
            let out = map.apply_counting(&x).map_err(|e| Failure::new("input", e))?;
            Ok(Outcome::Done(json!({
                "report": MapReport::new(map.as_ref(), &x, &out),
                "input": x.to_dump(),
                "output": out.config.to_dump(),
            })))
        }
        Command::Verify(v) => match v {
            VerifyCommand::Exact(a) => {
                let map = a.map.build().map_err(|e| Failure::new("usage", e))?;
                let r = exact_pushforward(map.as_ref(), a.rin, a.rout, a.threads.into()).map_err(|e| Failure::new("usage", e))?;
                Ok(pushforward(r, a.summary))
            }
            VerifyCommand::Mc(a) => {
                let map = a.map.build().map_err(|e| Failure::new("usage", e))?;
                let cfg = McConfig { samples: a.samples, seed: a.seed, threshold: a.threshold, threads: a.threads.into() };
                let r = mc_pushforward(map.as_ref(), a.rin, a.rout, &cfg).map_err(|e| Failure::new("usage", e))?;
                Ok(pushforward(r, a.summary))
            }
            VerifyCommand::Equivariance(a) => {
                let map = a.map.build().map_err(|e| Failure::new("usage", e))?;
                let r = check_equivariance(map.as_ref(), a.radius, a.trials as usize, a.seed).map_err(|e| Failure::new("usage", e))?;
                Ok(property(&r, r.failures))
            }
            VerifyCommand::ChainStep(a) => {
                let phi = window_map(a.phi);
                let r = check_chain_step_equivariance(phi.as_ref(), a.radius, a.trials as usize, a.seed)
                    .map_err(|e| Failure::new("usage", e))?;
                Ok(property(&r, r.failures))
            }
            VerifyCommand::Cocycle(a) => {
                let r = check_cocycle(a.trials as usize, a.seed);
                Ok(property(&r, r.failures))
            }
            VerifyCommand::J(a) => {
                let trips = check_j_roundtrip(a.radius, a.trials as usize, a.seed).map_err(|e| Failure::new("usage", e))?;
                let push = if a.exact_radius > 0 {
                    let mut p = to_value(exact_j_pushforward(a.exact_radius, None).map_err(|e| Failure::new("usage", e))?);
                    p.as_object_mut().expect("report is an object").remove("counts");
                    Some(p)
                } else {
                    None
                };
                let push_ok = push.as_ref().is_none_or(|p| p["verdict"] == "pass");
                Ok(Outcome::Verdict(json!({ "roundtrip_equivariance": trips, "pushforward": push }), trips.failures == 0 && push_ok))
            }
        },
        Command::Entropy(e) => match e {
            EntropyCommand::Shannon { weights } => {
                let sum: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Failure::new("usage", format!("weights must be nonnegative and sum to 1 (sum = {sum})")));
                }
                Ok(Outcome::Done(json!({ "weights": weights, "entropy": shannon_weights(&weights).max(0.0) })))
            }
            EntropyCommand::SolveP { h } => {
                let p = solve_p(h).map_err(|e| Failure::new("usage", e))?;
                Ok(Outcome::Done(json!({ "H": h, "p": p, "residual": (three_symbol_entropy(p) - h).abs() })))
            }
            EntropyCommand::Recursion { h0, max_steps } => match run_recursion(h0, max_steps) {
                Ok(t) => Ok(Outcome::Done(to_value(t))),
                Err(fshift_core::entropy::EntropyError::StepLimitExceeded { trace }) => {
                    Ok(Outcome::Verdict(to_value(trace), false))
                }
                Err(e) => Err(Failure::new("usage", e)),
            },
        },
        Command::Coinduce(c) => match c {
            CoinduceCommand::Cocycle { g, c } => {
                let (g, c) = (element(&g)?, coset_of(&element(&c)?));
                let alpha = cocycle(&g, &c).map_err(|e| Failure::new("input", e))?;
                Ok(Outcome::Done(json!({ "g": g, "coset": c.representative(), "alpha": alpha })))
            }
            CoinduceCommand::Act { g, input } => {
                let y = read_cosets(&input)?;
                let out = coinduced_act(&element(&g)?, &y).map_err(|e| Failure::new("input", e))?;
                Ok(Outcome::Done(to_value(out.to_dump())))
            }
            CoinduceCommand::J { input, window } => {
                let x = read_config(&input)?;
                let w = window.unwrap_or(x.sites().radius() as u32);
                Ok(Outcome::Done(to_value(conj_j(&x, w).to_dump())))
            }
            CoinduceCommand::Jinv { input } => {
                let y = read_cosets(&input)?;
                let x = conj_j_inv(&y).map_err(|e| Failure::new("input", e))?;
                Ok(Outcome::Done(to_value(x.to_dump())))
            }
            CoinduceCommand::Step { phi, input } => {
                let x = read_config(&input)?;
                let y = coinduce_chain_step(window_map(phi).as_ref(), &x).map_err(|e| Failure::new("input", e))?;
                Ok(Outcome::Done(to_value(y.to_dump())))
            }
        },
        Command::Pipeline(p) => match p {
            PipelineCommand::Plan { h0 } => {
                let plan = plan_boost_chain_from_entropy(h0).map_err(|e| Failure::new("usage", e))?;
                Ok(Outcome::Done(to_value(plan)))
            }
            PipelineCommand::Run { plan, radius, seed, input, output } => {
                let plan = ChainPlan::from_file(read_json::<PlanFile>(&plan)?).map_err(|e| Failure::new("plan", e))?;
                let x = match &input {
                    Some(path) => read_config(path)?,
                    None => {
                        let law = plan
                            .info
                            .first()
                            .map(|s| s.input_law.clone())
                            .ok_or_else(|| Failure::new("plan", "empty plan needs --input"))?;
                        let law = fshift_core::Distribution::new(law.alphabet, law.weights).map_err(|e| Failure::new("plan", e))?;
                        let sites = fshift_core::freegroup::shared_ball(radius).map_err(|e| Failure::new("usage", e))?;
                        sample(&law, &sites, seed)
                    }
                };
                let run = run_chain(&plan, &x).map_err(|e| Failure::new("plan", e))?;
                let mut report = json!({
                    "stages": run.stages,
                    "matches_prediction": run.matches_prediction(),
                    "entropy_ledger": plan.entropy_ledger,
                    "total_window_cost": plan.total_window_cost,
                    "input_sites": x.sites().len(),
                    "output_defined": run.output.defined_count(),
                });
                if output {
                    report["output"] = to_value(run.output.to_dump());
                }
                Ok(Outcome::Done(report))
            }
        },
        Command::Selftest(a) => {
            let report = run_all(a.seed, a.threads.into());
            for c in &report.criteria {
                eprintln!("[{}] criterion {:>2}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.name);
            }
            let pass = report.all_pass;
            Ok(Outcome::Verdict(to_value(report), pass))
        }
    }
}

fn emit(v: &Value) {
    // a closed pipe downstream is not an error worth reporting
    let _ = writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json serializes"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            emit(&json!({ "error": "usage", "message": e.to_string().lines().next().unwrap_or_default() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(Outcome::Done(v)) => {
            emit(&v);
            ExitCode::SUCCESS
        }
        Ok(Outcome::Verdict(v, pass)) => {
            emit(&v);
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            emit(&json!({ "error": f.kind, "message": f.message }));
            ExitCode::from(2)
        }
    }
}
