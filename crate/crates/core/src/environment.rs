//! Ground-truth market: agent parameters, arm context processes and score noise.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matching::Matching;
use crate::regret::gap_stats;

const NORM_TOL: f64 = 1e-9;

/// True linear score parameters `θ_{i,*}`, one per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    thetas: Vec<DVector<f64>>,
    positive_weights: bool,
    unit_norm: bool,
}

impl AgentParams {
    /// Parameters without extra constraints.
    pub fn new(thetas: Vec<DVector<f64>>) -> Result<Self> {
        Self::with_flags(thetas, false, false)
    }

    /// `positive_weights` requires every coordinate to be `> 0`;
    /// `unit_norm` requires `‖θ‖₂ = 1 ± 1e-9`.
    pub fn with_flags(
        thetas: Vec<DVector<f64>>,
        positive_weights: bool,
        unit_norm: bool,
    ) -> Result<Self> {
        let dim = thetas
            .first()
            .map(|t| t.len())
            .ok_or_else(|| Error::InvalidInput("no agent parameters".into()))?;
        for (i, theta) in thetas.iter().enumerate() {
            check_dim(dim, theta.len())?;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "θ of p{} is not finite",
                    i + 1
                )));
            }
            if positive_weights && theta.iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "θ of p{} has a non-positive weight",
                    i + 1
                )));
            }
            if unit_norm && (theta.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "θ of p{} has norm {} (expected 1)",
                    i + 1,
                    theta.norm()
                )));
            }
        }
        Ok(Self {
            thetas,
            positive_weights,
            unit_norm,
        })
    }

    pub fn agents(&self) -> usize {
        self.thetas.len()
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].len()
    }

    pub fn theta(&self, agent: usize) -> &DVector<f64> {
        &self.thetas[agent]
    }

    pub fn thetas(&self) -> &[DVector<f64>] {
        &self.thetas
    }

    pub fn positive_weights(&self) -> bool {
        self.positive_weights
    }

    pub fn unit_norm(&self) -> bool {
        self.unit_norm
    }

    /// True mean score `μ_{i,j}(t) = θ_{i,*}ᵀ x`.
    pub fn mean_score(&self, agent: usize, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.thetas[agent].dot(x))
    }

    /// Mean scores of `agent` for every arm's context.
    pub fn mean_scores(&self, agent: usize, contexts: &[DVector<f64>]) -> Result<Vec<f64>> {
        contexts.iter().map(|x| self.mean_score(agent, x)).collect()
    }
}

/// How arm contexts are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ContextKind {
    /// `x_j(t) ~ N(μ_j, ζI)`.
    FixedGaussianMean,
    /// As above, but the first coordinate of `μ_arm` is shifted by `rate · t`.
    AngularDriftMean { arm: usize, rate: f64 },
    /// Every coordinate i.i.d. `U(0, 1)`.
    UniformIid,
}

/// Per-arm, per-round context generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextProcess {
    kind: ContextKind,
    means: Vec<DVector<f64>>,
    zeta: f64,
    normalize: bool,
    dim: usize,
}

impl ContextProcess {
    pub fn fixed_gaussian(means: Vec<DVector<f64>>, zeta: f64, normalize: bool) -> Result<Self> {
        Self::gaussian(ContextKind::FixedGaussianMean, means, zeta, normalize)
    }

    pub fn angular_drift(
        means: Vec<DVector<f64>>,
        zeta: f64,
        arm: usize,
        rate: f64,
        normalize: bool,
    ) -> Result<Self> {
        if arm >= means.len() {
            return Err(Error::InvalidInput(format!(
                "drifting arm a{} does not exist",
                arm + 1
            )));
        }
        if !rate.is_finite() {
            return Err(Error::InvalidInput("drift rate must be finite".into()));
        }
        Self::gaussian(
            ContextKind::AngularDriftMean { arm, rate },
            means,
            zeta,
            normalize,
        )
    }

    pub fn uniform(arms: usize, dim: usize) -> Result<Self> {
        if arms == 0 || dim == 0 {
            return Err(Error::InvalidInput(
                "uniform contexts need arms and dimension".into(),
            ));
        }
        Ok(Self {
            kind: ContextKind::UniformIid,
            means: vec![DVector::from_element(dim, 0.5); arms],
            zeta: 0.0,
            normalize: false,
            dim,
        })
    }

    fn gaussian(
        kind: ContextKind,
        means: Vec<DVector<f64>>,
        zeta: f64,
        normalize: bool,
    ) -> Result<Self> {
        let dim = means
            .first()
            .map(|m| m.len())
            .ok_or_else(|| Error::InvalidInput("context process has no arms".into()))?;
        if dim == 0 {
            return Err(Error::InvalidInput(
                "context dimension must be positive".into(),
            ));
        }
        for m in &means {
            check_dim(dim, m.len())?;
        }
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fluctuation variance must be >= 0, got {zeta}"
            )));
        }
        Ok(Self {
            kind,
            means,
            zeta,
            normalize,
            dim,
        })
    }

    pub fn kind(&self) -> &ContextKind {
        &self.kind
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    /// Distribution mean of arm `arm` at round `t` (before normalization).
    pub fn mean_at(&self, arm: usize, t: usize) -> DVector<f64> {
        let mut mean = self.means[arm].clone();
        if let ContextKind::AngularDriftMean {
            arm: drifting,
            rate,
        } = self.kind
        {
            if drifting == arm {
                mean[0] += rate * t as f64;
            }
        }
        mean
    }

    /// Draw `x_arm(t)`. Gaussian kinds always consume `d` normal draws so
    /// streams stay aligned when `ζ = 0`.
    pub fn sample<R: Rng + ?Sized>(&self, arm: usize, t: usize, rng: &mut R) -> DVector<f64> {
        match self.kind {
            ContextKind::UniformIid => DVector::from_fn(self.dim, |_, _| rng.random::<f64>()),
            ContextKind::FixedGaussianMean | ContextKind::AngularDriftMean { .. } => {
                let sd = self.zeta.sqrt();
                let mut x = self.mean_at(arm, t);
                for v in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += sd * z;
                }
                if self.normalize {
                    let norm = x.norm();
                    if norm > 0.0 {
                        x /= norm;
                    }
                }
                x
            }
        }
    }
}

/// I.i.d. Gaussian score noise with standard deviation `sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sd: f64,
}

impl NoiseModel {
    pub fn new(sd: f64) -> Result<Self> {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise standard deviation must be >= 0, got {sd}"
            )));
        }
        Ok(Self { sd })
    }

    /// `μ + ε`, `ε ~ N(0, sd²)`. One normal draw is consumed even when `sd = 0`.
    pub fn sample_score<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if self.sd == 0.0 {
            mean
        } else {
            mean + self.sd * z
        }
    }
}

/// The ground truth a policy interacts with.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub params: AgentParams,
    pub contexts: ContextProcess,
    pub noise: NoiseModel,
}

impl Environment {
    pub fn new(params: AgentParams, contexts: ContextProcess, noise: NoiseModel) -> Result<Self> {
        check_dim(params.dim(), contexts.dim())?;
        Ok(Self {
            params,
            contexts,
            noise,
        })
    }

    pub fn agents(&self) -> usize {
        self.params.agents()
    }

    pub fn arms(&self) -> usize {
        self.contexts.arms()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }
}

/// Two-agent instance with uniform contexts:
/// `θ₁ = (√(1−1/h̄), 1/√h̄, 0, …)`, `θ₂ = (√(1−1/h̄), 0, 1/√h̄, 0, …)`.
pub fn make_lower_bound_instance(
    dim: usize,
    exploration_rounds: usize,
    noise_sd: f64,
) -> Result<(AgentParams, ContextProcess, NoiseModel)> {
    if dim < 3 {
        return Err(Error::InvalidInput(format!(
            "lower-bound instance needs d >= 3, got {dim}"
        )));
    }
    if exploration_rounds == 0 {
        return Err(Error::InvalidInput(
            "exploration length must be >= 1".into(),
        ));
    }
    let h = exploration_rounds as f64;
    let lead = (1.0 - 1.0 / h).sqrt();
    let side = 1.0 / h.sqrt();
    let mut theta1 = DVector::zeros(dim);
    theta1[0] = lead;
    theta1[1] = side;
    let mut theta2 = DVector::zeros(dim);
    theta2[0] = lead;
    theta2[2] = side;
    let params = AgentParams::with_flags(vec![theta1, theta2], false, true)?;
    Ok((
        params,
        ContextProcess::uniform(3, dim)?,
        NoiseModel::new(noise_sd)?,
    ))
}

/// Realized-margin summary of one episode for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMarginAudit {
    /// `min_t Δ̄_{i,min}(t)` over rounds with a non-empty sub-optimal set.
    pub min_gap: Option<f64>,
    /// Rounds where `Δ̄_{i,min}(t)` fell below the assumed margin.
    pub below_assumed: usize,
    /// Rounds where some other arm tied the oracle arm exactly.
    pub ties: usize,
}

/// Scan realized contexts against the assumed uniform margins.
pub fn audit_margin(
    params: &AgentParams,
    contexts: &[Vec<DVector<f64>>],
    oracle: &[Matching],
    assumed: &[f64],
) -> Result<Vec<AgentMarginAudit>> {
    if contexts.len() != oracle.len() {
        return Err(Error::LengthMismatch {
            expected: contexts.len(),
            actual: oracle.len(),
        });
    }
    check_dim(params.agents(), assumed.len())?;
    let mut audits = vec![
        AgentMarginAudit {
            min_gap: None,
            below_assumed: 0,
            ties: 0,
        };
        params.agents()
    ];
    for (ctx, m) in contexts.iter().zip(oracle) {
        let stats = gap_stats(params, ctx, m)?;
        for (i, (agent, audit)) in stats.agents.iter().zip(audits.iter_mut()).enumerate() {
            if let Some(gap) = agent.min_gap {
                audit.min_gap = Some(audit.min_gap.map_or(gap, |g: f64| g.min(gap)));
                if gap < assumed[i] {
                    audit.below_assumed += 1;
                }
            }
            if !agent.ties.is_empty() {
                audit.ties += 1;
            }
        }
    }
    Ok(audits)
}
