//! Named scenario presets and TOML experiment configs.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::environment::{
    make_lower_bound_instance, AgentParams, ContextProcess, Environment, NoiseModel,
};
use crate::error::{Error, Result};
use crate::market::MarketConfig;
use crate::matching::ArmPreferenceProfile;
use crate::policy::ExplorationPlan;

pub const SCENARIO_NAMES: [&str; 6] = ["s1", "s2", "s3", "s4", "s5", "lower_bound"];

#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    /// Literal parameters, normalized to unit norm.
    Fixed(Vec<DVector<f64>>),
    /// Built from the exploration length once it is known.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub arm: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextSpec {
    Gaussian {
        means: Vec<DVector<f64>>,
        zeta: f64,
        normalize: bool,
        drift: Option<Drift>,
    },
    Uniform,
}

/// Exploration length reported alongside a noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLength {
    pub sigma: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub market: MarketConfig,
    pub agents: AgentSpec,
    pub contexts: ContextSpec,
    pub reference: Vec<ReferenceLength>,
}

fn unit(v: &[f64]) -> DVector<f64> {
    let v = DVector::from_column_slice(v);
    let n = v.norm();
    v / n
}

fn vectors(rows: &[&[f64]]) -> Vec<DVector<f64>> {
    rows.iter().map(|r| DVector::from_column_slice(r)).collect()
}

fn non_global_2x3() -> ArmPreferenceProfile {
    ArmPreferenceProfile::new(vec![vec![0, 1], vec![1, 0], vec![0, 1]]).expect("static lists")
}

fn market(
    agents: usize,
    arms: usize,
    dim: usize,
    horizon: usize,
    sigma: f64,
    margin: f64,
    arm_prefs: ArmPreferenceProfile,
) -> MarketConfig {
    MarketConfig {
        agents,
        arms,
        dim,
        horizon,
        lambda: vec![0.1; agents],
        sigma,
        margin: vec![margin; agents],
        x_max: vec![1.0; agents],
        arm_prefs,
        exploration_rounds: None,
    }
}

const S1_MEANS: [&[f64]; 3] = [&[0.667, 0.745], &[0.745, 0.667], &[0.994, 0.110]];
const S1_THETAS: [&[f64]; 2] = [&[0.530, 0.848], &[0.894, 0.447]];

const S4_THETAS: [&[f64]; 2] = [
    &[
        0.344, 0.505, 0.109, 0.459, 0.147, 0.512, 0.215, 0.125, 0.067, 0.234,
    ],
    &[
        0.193, 0.481, 0.153, 0.046, 0.117, 0.417, 0.138, 0.502, 0.481, 0.125,
    ],
];
const S4_MEANS: [&[f64]; 3] = [
    &[
        0.556, 0.391, 0.030, 0.523, 0.164, 0.474, 0.026, 0.005, 0.054, 0.092,
    ],
    &[
        0.309, 0.088, 0.036, 0.085, 0.199, 0.546, 0.372, 0.299, 0.565, 0.062,
    ],
    &[
        0.470, 0.002, 0.404, 0.525, 0.167, 0.075, 0.196, 0.294, 0.396, 0.161,
    ],
];

const S5_THETAS: [&[f64]; 5] = [
    &[0.261, 0.157, 0.716, 0.288, 0.558],
    &[0.459, 0.374, 0.743, 0.301, 0.084],
    &[0.744, 0.146, 0.129, 0.421, 0.481],
    &[0.382, 0.888, 0.051, 0.210, 0.139],
    &[0.051, 0.198, 0.432, 0.827, 0.297],
];
const S5_MEANS: [&[f64]; 5] = [
    &[0.001, 0.001, 0.658, 0.275, 0.701],
    &[0.513, 0.210, 0.624, 0.550, 0.001],
    &[0.776, 0.133, 0.241, 0.395, 0.408],
    &[0.823, 0.562, 0.084, 0.001, 0.001],
    &[0.001, 0.001, 0.420, 0.858, 0.296],
];

fn gaussian(means: &[&[f64]], drift: Option<Drift>) -> ContextSpec {
    ContextSpec::Gaussian {
        means: vectors(means),
        zeta: 0.01,
        normalize: true,
        drift,
    }
}

fn refs(pairs: &[(f64, usize)]) -> Vec<ReferenceLength> {
    pairs
        .iter()
        .map(|&(sigma, rounds)| ReferenceLength { sigma, rounds })
        .collect()
}

/// The preset called `name`.
pub fn preset(name: &str) -> Result<Scenario> {
    let s1_thetas = || AgentSpec::Fixed(S1_THETAS.iter().map(|t| unit(t)).collect());
    let drift = Some(Drift {
        arm: 0,
        rate: 0.005,
    });
    let scenario = match name {
        "s1" => Scenario {
            name: name.into(),
            market: market(2, 3, 2, 1000, 0.05, 0.2, non_global_2x3()),
            agents: s1_thetas(),
            contexts: gaussian(&S1_MEANS, None),
            reference: refs(&[(0.05, 312)]),
        },
        "s2" => Scenario {
            name: name.into(),
            market: market(2, 3, 2, 1000, 0.05, 0.2, non_global_2x3()),
            agents: s1_thetas(),
            contexts: gaussian(&S1_MEANS, drift),
            reference: refs(&[(0.01, 24), (0.02, 66), (0.05, 312)]),
        },
        "s3" => Scenario {
            name: name.into(),
            market: market(2, 3, 2, 5000, 0.05, 0.05, non_global_2x3()),
            agents: s1_thetas(),
            contexts: gaussian(&S1_MEANS, drift),
            reference: refs(&[(0.01, 264), (0.02, 876), (0.05, 4014)]),
        },
        "s4" => Scenario {
            name: name.into(),
            market: market(
                2,
                3,
                10,
                10_000,
                0.05,
                0.2,
                ArmPreferenceProfile::global(2, 3),
            ),
            agents: AgentSpec::Fixed(S4_THETAS.iter().map(|t| unit(t)).collect()),
            contexts: gaussian(&S4_MEANS, None),
            reference: refs(&[(0.05, 5856)]),
        },
        "s5" => Scenario {
            name: name.into(),
            market: market(
                5,
                5,
                5,
                15_000,
                0.05,
                0.1,
                ArmPreferenceProfile::global(5, 5),
            ),
            agents: AgentSpec::Fixed(S5_THETAS.iter().map(|t| unit(t)).collect()),
            contexts: gaussian(&S5_MEANS, None),
            reference: refs(&[(0.05, 1975)]),
        },
        "lower_bound" => Scenario {
            name: name.into(),
            market: market(2, 3, 3, 2000, 0.05, 0.2, ArmPreferenceProfile::global(2, 3)),
            agents: AgentSpec::LowerBound,
            contexts: ContextSpec::Uniform,
            reference: Vec::new(),
        },
        other => {
            return Err(Error::constraint(
                "scenario",
                format!("unknown scenario `{other}` (expected one of {SCENARIO_NAMES:?})"),
            ))
        }
    };
    Ok(scenario)
}

impl Scenario {
    pub fn zeta(&self) -> Option<f64> {
        match &self.contexts {
            ContextSpec::Gaussian { zeta, .. } => Some(*zeta),
            ContextSpec::Uniform => None,
        }
    }

    /// Ground truth for an episode; the lower-bound instance depends on `plan`.
    pub fn environment(&self, plan: &ExplorationPlan) -> Result<Environment> {
        let m = &self.market;
        let noise = NoiseModel::new(m.sigma)?;
        let (params, contexts) = match (&self.agents, &self.contexts) {
            (AgentSpec::LowerBound, _) => {
                if m.agents != 2 || m.arms != 3 {
                    return Err(Error::constraint(
                        "n",
                        "the lower-bound instance has exactly 2 agents and 3 arms",
                    ));
                }
                let (params, contexts, _) = make_lower_bound_instance(m.dim, plan.rounds, m.sigma)?;
                (params, contexts)
            }
            (AgentSpec::Fixed(thetas), spec) => {
                let params = AgentParams::new(thetas.clone())?;
                let contexts = match spec {
                    ContextSpec::Uniform => ContextProcess::uniform(m.arms, m.dim)?,
                    ContextSpec::Gaussian {
                        means,
                        zeta,
                        normalize,
                        drift: None,
                    } => ContextProcess::fixed_gaussian(means.clone(), *zeta, *normalize)?,
                    ContextSpec::Gaussian {
                        means,
                        zeta,
                        normalize,
                        drift: Some(d),
                    } => ContextProcess::angular_drift(
                        means.clone(),
                        *zeta,
                        d.arm,
                        d.rate,
                        *normalize,
                    )?,
                };
                (params, contexts)
            }
        };
        if params.agents() != m.agents {
            return Err(Error::constraint(
                "n",
                format!(
                    "scenario defines {} agents, config has {}",
                    params.agents(),
                    m.agents
                ),
            ));
        }
        if contexts.arms() != m.arms {
            return Err(Error::constraint(
                "k",
                format!(
                    "scenario defines {} arms, config has {}",
                    contexts.arms(),
                    m.arms
                ),
            ));
        }
        if params.dim() != m.dim || contexts.dim() != m.dim {
            return Err(Error::constraint(
                "d",
                format!(
                    "scenario has dimension {}, config has {}",
                    params.dim(),
                    m.dim
                ),
            ));
        }
        Environment::new(params, contexts, noise)
    }

    pub fn summary(&self) -> ScenarioSummary {
        let m = &self.market;
        let (contexts, zeta, normalize, drift) = match &self.contexts {
            ContextSpec::Gaussian {
                zeta,
                normalize,
                drift,
                ..
            } => (
                if drift.is_some() {
                    "angular_drift_mean"
                } else {
                    "fixed_gaussian_mean"
                },
                Some(*zeta),
                *normalize,
                *drift,
            ),
            ContextSpec::Uniform => ("uniform_iid", None, false, None),
        };
        ScenarioSummary {
            name: self.name.clone(),
            agents: m.agents,
            arms: m.arms,
            dim: m.dim,
            horizon: m.horizon,
            sigma: m.sigma,
            lambda: m.lambda.clone(),
            margin: m.margin.clone(),
            x_max: m.x_max.clone(),
            global_preference: m.arm_prefs.is_global(),
            arm_prefs: m.arm_prefs.lists().to_vec(),
            contexts: contexts.into(),
            zeta,
            normalize,
            drift,
            exploration_override: m.exploration_rounds,
            reference: self.reference.clone(),
            thetas: match &self.agents {
                AgentSpec::Fixed(t) => {
                    Some(t.iter().map(|v| v.iter().copied().collect()).collect())
                }
                AgentSpec::LowerBound => None,
            },
            means: match &self.contexts {
                ContextSpec::Gaussian { means, .. } => {
                    Some(means.iter().map(|v| v.iter().copied().collect()).collect())
                }
                ContextSpec::Uniform => None,
            },
        }
    }
}

/// Flat constant dump of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub agents: usize,
    pub arms: usize,
    pub dim: usize,
    pub horizon: usize,
    pub sigma: f64,
    pub lambda: Vec<f64>,
    pub margin: Vec<f64>,
    pub x_max: Vec<f64>,
    pub global_preference: bool,
    pub arm_prefs: Vec<Vec<usize>>,
    pub contexts: String,
    pub zeta: Option<f64>,
    pub normalize: bool,
    pub drift: Option<Drift>,
    pub exploration_override: Option<usize>,
    pub reference: Vec<ReferenceLength>,
    pub thetas: Option<Vec<Vec<f64>>>,
    pub means: Option<Vec<Vec<f64>>>,
}

impl ScenarioSummary {
    /// Human-readable parameter table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let prefs: Vec<String> = self
            .arm_prefs
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let order: Vec<String> = l.iter().map(|i| format!("p{}", i + 1)).collect();
                format!("a{}: {}", j + 1, order.join(">"))
            })
            .collect();
        let _ = writeln!(s, "[{}]", self.name);
        let _ = writeln!(
            s,
            "  N={} K={} d={} T={}",
            self.agents, self.arms, self.dim, self.horizon
        );
        let _ = writeln!(
            s,
            "  sigma={} lambda={:?} margin={:?} x_max={:?}",
            self.sigma, self.lambda, self.margin, self.x_max
        );
        let _ = writeln!(
            s,
            "  arm preferences ({}): {}",
            if self.global_preference {
                "global"
            } else {
                "non-global"
            },
            prefs.join(", ")
        );
        let _ = write!(s, "  contexts: {}", self.contexts);
        if let Some(z) = self.zeta {
            let _ = write!(s, ", zeta={z}, normalize={}", self.normalize);
        }
        if let Some(d) = self.drift {
            let _ = write!(s, ", drift a{} rate {}", d.arm + 1, d.rate);
        }
        let _ = writeln!(s);
        if let Some(h) = self.exploration_override {
            let _ = writeln!(s, "  exploration rounds (fixed): {h}");
        }
        if !self.reference.is_empty() {
            let refs: Vec<String> = self
                .reference
                .iter()
                .map(|r| format!("sigma={} -> {}", r.sigma, r.rounds))
                .collect();
            let _ = writeln!(s, "  reference exploration lengths: {}", refs.join(", "));
        }
        if let Some(t) = &self.thetas {
            for (i, v) in t.iter().enumerate() {
                let _ = writeln!(s, "  theta p{} = {}", i + 1, fmt_vec(v));
            }
        } else {
            let _ = writeln!(s, "  theta built from the exploration length");
        }
        if let Some(means) = &self.means {
            for (j, v) in means.iter().enumerate() {
                let _ = writeln!(s, "  mean a{} = {}", j + 1, fmt_vec(v));
            }
        }
        s
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

pub fn list_scenarios() -> Vec<ScenarioSummary> {
    SCENARIO_NAMES
        .iter()
        .map(|n| preset(n).expect("built-in preset").summary())
        .collect()
}

/// A scenario plus how many seeded replications to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: String,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    overrides: toml::Table,
}

fn default_replications() -> usize {
    100
}

pub const OVERRIDE_KEYS: [&str; 13] = [
    "n",
    "k",
    "d",
    "horizon",
    "sigma",
    "lambda",
    "margin",
    "zeta",
    "drift_rate",
    "x_max",
    "exploration_rounds",
    "arm_prefs",
    "normalize",
];

fn as_float(field: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::constraint(field, "expected a number")),
    }
}

fn as_count(field: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::constraint(field, "expected a non-negative integer")),
    }
}

/// A scalar applies to every agent; an array gives one value per agent.
fn per_agent(field: &str, v: &toml::Value) -> Result<PerAgent> {
    match v {
        toml::Value::Array(items) => Ok(PerAgent::Each(
            items
                .iter()
                .map(|x| as_float(field, x))
                .collect::<Result<_>>()?,
        )),
        other => Ok(PerAgent::All(as_float(field, other)?)),
    }
}

enum PerAgent {
    All(f64),
    Each(Vec<f64>),
}

impl PerAgent {
    fn resolve(self, agents: usize) -> Vec<f64> {
        match self {
            PerAgent::All(v) => vec![v; agents],
            PerAgent::Each(v) => v,
        }
    }
}

/// `"global"` or one list of one-based agent indices per arm.
fn parse_arm_prefs(v: &toml::Value, agents: usize, arms: usize) -> Result<ArmPreferenceProfile> {
    const FIELD: &str = "arm_prefs";
    match v {
        toml::Value::String(s) if s == "global" => Ok(ArmPreferenceProfile::global(agents, arms)),
        toml::Value::Array(lists) => {
            let lists = lists
                .iter()
                .map(|l| {
                    let l = l
                        .as_array()
                        .ok_or_else(|| Error::constraint(FIELD, "expected a list per arm"))?;
                    l.iter()
                        .map(|x| {
                            let i = as_count(FIELD, x)?;
                            i.checked_sub(1)
                                .ok_or_else(|| Error::constraint(FIELD, "agent indices start at 1"))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            ArmPreferenceProfile::new(lists).map_err(|e| Error::constraint(FIELD, e.to_string()))
        }
        _ => Err(Error::constraint(
            FIELD,
            "expected \"global\" or a list of lists",
        )),
    }
}

fn apply_overrides(scenario: &mut Scenario, overrides: &toml::Table) -> Result<()> {
    if let Some(key) = overrides
        .keys()
        .find(|k| !OVERRIDE_KEYS.contains(&k.as_str()))
    {
        return Err(Error::constraint(
            key.as_str(),
            format!("unknown override (expected one of {OVERRIDE_KEYS:?})"),
        ));
    }
    let get = |k: &str| overrides.get(k);
    let m = &mut scenario.market;
    if let Some(v) = get("n") {
        m.agents = as_count("n", v)?;
    }
    if let Some(v) = get("k") {
        m.arms = as_count("k", v)?;
    }
    if let Some(v) = get("d") {
        m.dim = as_count("d", v)?;
    }
    if let Some(v) = get("horizon") {
        m.horizon = as_count("horizon", v)?;
    }
    if let Some(v) = get("sigma") {
        m.sigma = as_float("sigma", v)?;
    }
    let agents = m.agents;
    for (key, target) in [
        ("lambda", &mut m.lambda),
        ("margin", &mut m.margin),
        ("x_max", &mut m.x_max),
    ] {
        match get(key) {
            Some(v) => *target = per_agent(key, v)?.resolve(agents),
            None if target.len() != agents => {
                let fill = target.first().copied().unwrap_or(0.0);
                *target = vec![fill; agents];
            }
            None => {}
        }
    }
    if let Some(v) = get("exploration_rounds") {
        m.exploration_rounds = match as_count("exploration_rounds", v)? {
            0 => None,
            h => Some(h),
        };
    }
    match get("arm_prefs") {
        Some(v) => m.arm_prefs = parse_arm_prefs(v, m.agents, m.arms)?,
        None if m.arm_prefs.is_global()
            && (m.arm_prefs.agents() != m.agents || m.arm_prefs.arms() != m.arms) =>
        {
            m.arm_prefs = ArmPreferenceProfile::global(m.agents, m.arms);
        }
        None => {}
    }
    match &mut scenario.contexts {
        ContextSpec::Gaussian {
            zeta,
            normalize,
            drift,
            ..
        } => {
            if let Some(v) = get("zeta") {
                *zeta = as_float("zeta", v)?;
                if !(*zeta >= 0.0) {
                    return Err(Error::constraint("zeta", "must be >= 0"));
                }
            }
            if let Some(v) = get("normalize") {
                *normalize = v
                    .as_bool()
                    .ok_or_else(|| Error::constraint("normalize", "expected a boolean"))?;
            }
            if let Some(v) = get("drift_rate") {
                let rate = as_float("drift_rate", v)?;
                *drift = Some(Drift {
                    arm: drift.map_or(0, |d| d.arm),
                    rate,
                });
            }
        }
        ContextSpec::Uniform => {
            for key in ["zeta", "normalize", "drift_rate"] {
                if get(key).is_some() {
                    return Err(Error::constraint(key, "not applicable to uniform contexts"));
                }
            }
        }
    }
    Ok(())
}

/// Parse a TOML config: preset defaults first, then overrides.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut scenario = preset(&raw.scenario)?;
    apply_overrides(&mut scenario, &raw.overrides)?;
    if raw.replications == 0 {
        return Err(Error::constraint("replications", "must be positive"));
    }
    scenario.market.validate()?;
    Ok(ExperimentConfig {
        scenario,
        replications: raw.replications,
        seed: raw.seed,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
