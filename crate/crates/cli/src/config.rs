//! Run configuration: one JSON document per invocation.
//!
//! The outer document is `{command?, output_dir?, seed?, params}`. `params`
//! is decoded into the block of the selected command; unknown fields are
//! rejected at every level and reported with their path.

use std::path::PathBuf;

use ftem_core::aphid::{AphidModel, AphidOptions, AphidParams, AphidState};
use ftem_core::bifurcation::ExponentCoupling;
use ftem_core::ode::{GridSpec, IntegratorOptions};
use ftem_core::pde::{PdeConfig, Profile};
use ftem_core::{CompetitionParams, State2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Equilibria,
    Classify,
    SweepQ,
    SaddleNode,
    Pitchfork,
    Simulate,
    PhasePortrait,
    Separatrix,
    PdeRun,
    Aphid,
    Verify,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Equilibria,
        Command::Classify,
        Command::SweepQ,
        Command::SaddleNode,
        Command::Pitchfork,
        Command::Simulate,
        Command::PhasePortrait,
        Command::Separatrix,
        Command::PdeRun,
        Command::Aphid,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Equilibria => "equilibria",
            Command::Classify => "classify",
            Command::SweepQ => "sweep-q",
            Command::SaddleNode => "saddle-node",
            Command::Pitchfork => "pitchfork",
            Command::Simulate => "simulate",
            Command::PhasePortrait => "phase-portrait",
            Command::Separatrix => "separatrix",
            Command::PdeRun => "pde-run",
            Command::Aphid => "aphid",
            Command::Verify => "verify",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

/// The document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "empty_object")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledParams {
    pub label: String,
    pub params: CompetitionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaParams {
    pub cases: Vec<LabeledParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyParams {
    pub params: CompetitionParams,
    pub points: Vec<State2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepQParams {
    pub params: CompetitionParams,
    pub q_lo: f64,
    pub q_hi: f64,
    pub n: usize,
}

fn default_bracket() -> [f64; 2] {
    [0.5, 0.999]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleNodeParams {
    pub params: CompetitionParams,
    #[serde(default = "default_bracket")]
    pub bracket: [f64; 2],
    #[serde(default)]
    pub coupling: ExponentCoupling,
    /// Extra `q` values at which interior equilibria are counted.
    #[serde(default)]
    pub check_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchforkParams {
    pub params: CompetitionParams,
}

fn default_offset() -> f64 {
    0.01
}

/// Start pairs placed on both sides of the separatrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Straddle {
    pub pairs: usize,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimCase {
    pub label: String,
    pub params: CompetitionParams,
    #[serde(default)]
    pub initial: Vec<State2>,
    /// Uniform samples from the interior of the invariant rectangle.
    #[serde(default)]
    pub random_starts: usize,
    #[serde(default)]
    pub straddle: Option<Straddle>,
}

fn default_attractor_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default)]
    pub options: IntegratorOptions,
    /// End states within this distance of an equilibrium are attributed to it.
    #[serde(default = "default_attractor_tol")]
    pub attractor_tol: f64,
    pub cases: Vec<SimCase>,
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePortraitParams {
    pub params: CompetitionParams,
    /// Defaults to the whole invariant rectangle.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub options: IntegratorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparatrixParams {
    pub params: CompetitionParams,
    /// Defaults to the interior saddle of `params`.
    #[serde(default)]
    pub saddle: Option<State2>,
    /// Defaults to four times the half-perimeter of the invariant rectangle.
    #[serde(default)]
    pub arc_len: Option<f64>,
}

fn default_outcome_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeRunParams {
    pub config: PdeConfig,
    pub u0: Profile,
    pub v0: Profile,
    /// One run per exponent; empty means `config.p` only.
    #[serde(default)]
    pub p_values: Vec<f64>,
    #[serde(default = "default_outcome_tol")]
    pub outcome_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedState {
    pub name: String,
    pub state: AphidState,
}

fn default_aphid_t_end() -> f64 {
    120.0
}

fn default_models() -> Vec<AphidModel> {
    vec![AphidModel::Classic, AphidModel::Harvested]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AphidRunParams {
    pub params: AphidParams,
    #[serde(default = "default_aphid_t_end")]
    pub t_end: f64,
    #[serde(default = "default_models")]
    pub models: Vec<AphidModel>,
    pub initial_states: Vec<NamedState>,
    #[serde(default)]
    pub options: AphidOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    pub reduction_sets: usize,
    pub jacobian_points: usize,
    pub jacobian_tol: f64,
    pub root_sets: usize,
    pub mass_steps: usize,
    pub mass_tol: f64,
    pub fte_triples: usize,
    pub fte_tol: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            reduction_sets: 100,
            jacobian_points: 100,
            jacobian_tol: 1e-6,
            root_sets: 200,
            mass_steps: 50,
            mass_tol: 1e-12,
            fte_triples: 20,
            fte_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Equilibria(EquilibriaParams),
    Classify(ClassifyParams),
    SweepQ(SweepQParams),
    SaddleNode(SaddleNodeParams),
    Pitchfork(PitchforkParams),
    Simulate(SimulateParams),
    PhasePortrait(PhasePortraitParams),
    Separatrix(SeparatrixParams),
    PdeRun(PdeRunParams),
    Aphid(AphidRunParams),
    Verify(VerifyParams),
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(format!("params: {inner}"))
        } else {
            CliError::Config(format!("params.{path}: {inner}"))
        }
    })
}

impl Params {
    pub fn decode(cmd: Command, v: Value) -> Result<Params, CliError> {
        Ok(match cmd {
            Command::Equilibria => {
                // a bare parameter set is shorthand for a single case
                let v = match v {
                    Value::Object(ref m) if m.contains_key("a1") => {
                        serde_json::json!({ "cases": [{ "label": "default", "params": v }] })
                    }
                    other => other,
                };
                Params::Equilibria(decode(v)?)
            }
            Command::Classify => Params::Classify(decode(v)?),
            Command::SweepQ => Params::SweepQ(decode(v)?),
            Command::SaddleNode => Params::SaddleNode(decode(v)?),
            Command::Pitchfork => Params::Pitchfork(decode(v)?),
            Command::Simulate => Params::Simulate(decode(v)?),
            Command::PhasePortrait => Params::PhasePortrait(decode(v)?),
            Command::Separatrix => Params::Separatrix(decode(v)?),
            Command::PdeRun => Params::PdeRun(decode(v)?),
            Command::Aphid => Params::Aphid(decode(v)?),
            Command::Verify => Params::Verify(decode(v)?),
        })
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Params::Equilibria(p) => serde_json::to_value(p),
            Params::Classify(p) => serde_json::to_value(p),
            Params::SweepQ(p) => serde_json::to_value(p),
            Params::SaddleNode(p) => serde_json::to_value(p),
            Params::Pitchfork(p) => serde_json::to_value(p),
            Params::Simulate(p) => serde_json::to_value(p),
            Params::PhasePortrait(p) => serde_json::to_value(p),
            Params::Separatrix(p) => serde_json::to_value(p),
            Params::PdeRun(p) => serde_json::to_value(p),
            Params::Aphid(p) => serde_json::to_value(p),
            Params::Verify(p) => serde_json::to_value(p),
        };
        v.expect("config types serialize to JSON")
    }

    /// Checks that do not need any computation.
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match self {
            Params::Equilibria(p) => {
                if p.cases.is_empty() {
                    return bad("params.cases must not be empty".into());
                }
                for (i, c) in p.cases.iter().enumerate() {
                    c.params.validate().map_err(|e| CliError::Config(format!("params.cases[{i}].params: {e}")))?;
                }
            }
            Params::Classify(p) => p.params.validate()?,
            Params::SweepQ(p) => {
                p.params.validate()?;
                if !(0.0 < p.q_lo && p.q_lo < p.q_hi && p.q_hi <= 1.0 && p.n >= 2) {
                    return bad("sweep needs 0 < q_lo < q_hi <= 1 and n >= 2".into());
                }
            }
            Params::SaddleNode(p) => p.params.validate()?,
            Params::Pitchfork(p) => p.params.validate()?,
            Params::Simulate(p) => {
                p.options.validate()?;
                if !(p.attractor_tol > 0.0) {
                    return bad("attractor_tol must be positive".into());
                }
                for (i, c) in p.cases.iter().enumerate() {
                    c.params.validate().map_err(|e| CliError::Config(format!("params.cases[{i}].params: {e}")))?;
                    if let Some(s) = &c.straddle {
                        if !(s.offset > 0.0) {
                            return bad(format!("params.cases[{i}].straddle.offset must be positive"));
                        }
                    }
                }
            }
            Params::PhasePortrait(p) => {
                p.params.validate()?;
                p.options.validate()?;
            }
            Params::Separatrix(p) => {
                p.params.validate()?;
                if let Some(a) = p.arc_len {
                    if !(a > 0.0) {
                        return bad("arc_len must be positive".into());
                    }
                }
            }
            Params::PdeRun(p) => {
                let mut cfg = p.config.clone();
                cfg.validate()?;
                for &x in &p.p_values {
                    cfg.p = x;
                    cfg.validate()?;
                }
                if !(p.outcome_tol > 0.0) {
                    return bad("outcome_tol must be positive".into());
                }
            }
            Params::Aphid(p) => {
                p.params.validate()?;
                if !(p.t_end > 0.0) {
                    return bad("t_end must be positive".into());
                }
            }
            Params::Verify(_) => {}
        }
        Ok(())
    }
}

/// A parsed and validated configuration with all defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub command: Command,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub params: Params,
}

impl Resolved {
    pub fn to_run_config(&self) -> RunConfig {
        RunConfig {
            command: Some(self.command.name().to_string()),
            output_dir: Some(self.output_dir.clone()),
            seed: self.seed,
            params: self.params.to_value(),
        }
    }

    /// Canonical JSON of the resolved config (keys sorted).
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self.to_run_config()).expect("config serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical config with `output_dir` left out, so the
    /// hash identifies the computation rather than where it was written.
    pub fn hash(&self) -> String {
        let mut rc = self.to_run_config();
        rc.output_dir = None;
        let v = serde_json::to_value(rc).expect("config serializes");
        crate::output::sha256_hex(serde_json::to_string(&v).expect("value serializes").as_bytes())
    }
}

/// Parse a config document for `cmd`.
pub fn parse_config(cmd: Command, text: &str) -> Result<Resolved, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    de.end().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(c) = &raw.command {
        if c != cmd.name() {
            return Err(CliError::Config(format!("config is for command `{c}`, not `{}`", cmd.name())));
        }
    }
    let params = Params::decode(cmd, raw.params)?;
    params.validate()?;
    Ok(Resolved {
        command: cmd,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out").join(cmd.name())),
        seed: raw.seed,
        params,
    })
}
