//! Closed-form regret bounds and the probability bounds behind them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::environment::AgentParams;
use crate::error::{check_dim, Error, Result};
use crate::market::MarketConfig;
use crate::policy::{EpisodeLog, Phase};
use crate::regret::gap_stats;

/// Scalar inputs shared by the upper-bound evaluators, for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub exploration_rounds: usize,
    pub lambda: f64,
    pub margin: f64,
    pub dim: usize,
    pub x_max: f64,
    pub sigma: f64,
    pub agents: usize,
    pub arms: usize,
}

impl BoundInputs {
    pub fn for_agent(config: &MarketConfig, agent: usize, exploration_rounds: usize) -> Self {
        Self {
            exploration_rounds,
            lambda: config.lambda[agent],
            margin: config.margin[agent],
            dim: config.dim,
            x_max: config.x_max[agent],
            sigma: config.sigma,
            agents: config.agents,
            arms: config.arms,
        }
    }

    /// `−h̄λ²Δ²/(2d²x²σ²) + ln 2d`.
    pub fn exponent(&self) -> f64 {
        let d = self.dim as f64;
        let rate = self.lambda.powi(2) * self.margin.powi(2)
            / (2.0 * d * d * self.x_max.powi(2) * self.sigma.powi(2));
        -(self.exploration_rounds as f64) * rate + (2.0 * d).ln()
    }
}

/// A probability bound as computed, plus its reportable form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub raw: f64,
    pub clamped: f64,
    pub vacuous: bool,
}

impl BoundValue {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            clamped: raw.clamp(0.0, 1.0),
            vacuous: !(0.0..=1.0).contains(&raw),
        }
    }
}

/// Both parts of the exploration/exploitation upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub exploration: f64,
    pub exploitation: f64,
}

impl UpperBound {
    pub fn total(&self) -> f64 {
        self.exploration + self.exploitation
    }
}

/// `exploration_gaps` are the realized gaps `Δ̄_{i,m_i(t)}(t)` for `t <= h̄`;
/// `max_gaps` are `Δ̄_{i,max}(t)` for `t > h̄`.
pub fn regret_upper_bound(
    inputs: &BoundInputs,
    exploration_gaps: &[f64],
    max_gaps: &[f64],
) -> UpperBound {
    let exploration = exploration_gaps.iter().sum();
    let tail: f64 = max_gaps.iter().sum();
    let exploitation = if tail == 0.0 {
        0.0
    } else {
        (inputs.agents * inputs.arms) as f64 * tail * inputs.exponent().exp()
    };
    UpperBound {
        exploration,
        exploitation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryConstants {
    pub c1: f64,
    pub c2: f64,
    pub max_gap: f64,
}

impl CorollaryConstants {
    /// `C1 · ln(C2 · T) + C1 + Δ̄_max`.
    pub fn bound(&self, horizon: f64) -> f64 {
        self.c1 * (self.c2 * horizon).ln() + self.c1 + self.max_gap
    }
}

/// `C1 = 2d²x²σ²Δ̄_max/(Δ̄²λ²)`, `C2 = NKλ²Δ̄²/(dx²σ²)`.
pub fn corollary_constants(inputs: &BoundInputs, max_gap: f64) -> CorollaryConstants {
    let d = inputs.dim as f64;
    let (l2, m2, x2, s2) = (
        inputs.lambda.powi(2),
        inputs.margin.powi(2),
        inputs.x_max.powi(2),
        inputs.sigma.powi(2),
    );
    CorollaryConstants {
        c1: 2.0 * d * d * x2 * s2 * max_gap / (m2 * l2),
        c2: (inputs.agents * inputs.arms) as f64 * l2 * m2 / (d * x2 * s2),
        max_gap,
    }
}

/// `K · exp(−h̄λ²Δ²/(2d²x²σ²) + ln 2d)`.
pub fn invalid_ranking_bound(inputs: &BoundInputs) -> BoundValue {
    BoundValue::new(inputs.arms as f64 * inputs.exponent().exp())
}

/// Standard normal density.
pub fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// `((1/t − 1/t³)φ(t), φ(t)/t)`, bracketing `P(Z >= t)`.
pub fn gaussian_tail_bounds(t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "tail bounds need finite t > 0, got {t}"
        )));
    }
    let pdf = std_normal_pdf(t);
    Ok(((1.0 / t - 1.0 / t.powi(3)) * pdf, pdf / t))
}

/// Conditional mean and covariance scale of the ridge estimate given the design.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMoments {
    /// `θ̄ = (XᵀX + λI)⁻¹ XᵀX θ*`.
    pub mean: DVector<f64>,
    /// `M = (XᵀX + λI)⁻¹ XᵀX (XᵀX + λI)⁻¹`; the covariance is `σ² M`.
    pub scale: DMatrix<f64>,
}

/// Moments from the design matrix `X` (one row per observation).
pub fn posterior_moments(
    design: &DMatrix<f64>,
    lambda: f64,
    theta: &DVector<f64>,
) -> Result<EstimatorMoments> {
    moments_from_gram(&(design.transpose() * design), lambda, theta)
}

/// Moments from `XᵀX` directly.
pub fn moments_from_gram(
    xtx: &DMatrix<f64>,
    lambda: f64,
    theta: &DVector<f64>,
) -> Result<EstimatorMoments> {
    let d = theta.len();
    check_dim(d, xtx.nrows())?;
    check_dim(d, xtx.ncols())?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ridge parameter must be positive, got {lambda}"
        )));
    }
    let chol = (xtx + DMatrix::identity(d, d) * lambda)
        .cholesky()
        .ok_or_else(|| Error::DegenerateCovariance("XᵀX + λI is not positive definite".into()))?;
    let a = chol.solve(xtx);
    let mean = &a * theta;
    let scale = chol.solve(&a.transpose());
    let scale = (&scale + scale.transpose()) * 0.5;
    Ok(EstimatorMoments { mean, scale })
}

/// How the mean difference is standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Divide by the standard deviation `√Σ`.
    #[default]
    SquareRoot,
    /// Divide by the variance term `Σ` itself.
    Variance,
}

impl Standardization {
    fn apply(self, numerator: f64, variance: f64) -> f64 {
        match self {
            Standardization::SquareRoot => numerator / variance.sqrt(),
            Standardization::Variance => numerator / variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairNu {
    pub pair: (usize, usize),
    /// `σ²[x_aᵀMx_a + x_bᵀMx_b]`.
    pub sigma: f64,
    /// `σ²[x_aᵀMx_a + x_bᵀMx_b − 2x_aᵀMx_b]`.
    pub sigma_tilde: f64,
    pub nu: f64,
    /// `None` when `Σ̃ <= 0`.
    pub nu_tilde: Option<f64>,
}

/// Pairs `(j1,j2)`, `(j1,j3)`, `(j2,j3)` in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventNus {
    pub pairs: [PairNu; 3],
}

impl EventNus {
    pub fn nus(&self) -> [f64; 3] {
        self.pairs.map(|p| p.nu)
    }

    /// `ν̃` for `(j1,j2)` and `(j2,j3)`.
    pub fn bad_pair_nus(&self) -> [Option<f64>; 2] {
        [self.pairs[0].nu_tilde, self.pairs[2].nu_tilde]
    }
}

pub fn event_nus(
    moments: &EstimatorMoments,
    contexts: &[DVector<f64>],
    sigma: f64,
    order: [usize; 3],
    standardization: Standardization,
) -> Result<EventNus> {
    let d = moments.mean.len();
    for &j in &order {
        let x = contexts
            .get(j)
            .ok_or_else(|| Error::InvalidInput(format!("arm a{} has no context", j + 1)))?;
        check_dim(d, x.len())?;
    }
    let s2 = sigma * sigma;
    let m = &moments.scale;
    let pair = |a: usize, b: usize| -> Result<PairNu> {
        let (xa, xb) = (&contexts[a], &contexts[b]);
        let (maa, mbb, mab) = (xa.dot(&(m * xa)), xb.dot(&(m * xb)), xa.dot(&(m * xb)));
        let sig = s2 * (maa + mbb);
        let sig_tilde = s2 * (maa + mbb - 2.0 * mab);
        if !(sig > 0.0) {
            return Err(Error::DegenerateCovariance(format!(
                "Σ for (a{}, a{}) is {sig}",
                a + 1,
                b + 1
            )));
        }
        let numerator = moments.mean.dot(&(xa - xb));
        Ok(PairNu {
            pair: (a, b),
            sigma: sig,
            sigma_tilde: sig_tilde,
            nu: standardization.apply(numerator, sig),
            nu_tilde: (sig_tilde > 0.0).then(|| standardization.apply(numerator, sig_tilde)),
        })
    };
    let [j1, j2, j3] = order;
    Ok(EventNus {
        pairs: [pair(j1, j2)?, pair(j1, j3)?, pair(j2, j3)?],
    })
}

/// `1 − Σ φ(ν)/ν`; may be negative.
pub fn good_event_lower_bound(nus: &[f64]) -> Result<f64> {
    let mut bound = 1.0;
    for &nu in nus {
        if !(nu > 0.0) {
            return Err(Error::OrderingViolated(format!(
                "good-event bound needs every ν > 0, got {nu}"
            )));
        }
        bound -= std_normal_pdf(nu) / nu;
    }
    Ok(bound)
}

/// `min over pairs of (1/ν̃ − 1/ν̃³)φ(ν̃)`; nonpositive when some `ν̃ <= 1`.
pub fn bad_event_lower_bound(nu_tildes: &[f64; 2]) -> Result<f64> {
    let a = gaussian_tail_bounds(nu_tildes[0])?.0;
    let b = gaussian_tail_bounds(nu_tildes[1])?.0;
    Ok(a.min(b))
}

/// Per-round ingredients of the lower-bound trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRound {
    /// `Δ̄_{1,min}(t)`.
    pub min_gap: f64,
    pub bad: [f64; 2],
    pub good: [f64; 2],
}

impl LowerBoundRound {
    /// `Δ̄_{1,min}(t) · (L₁ᵇL₂ᵇ + L₂ᵍL₁ᵇ)` with each factor clamped to `[0, 1]`.
    pub fn term(&self) -> f64 {
        let c = |v: f64| {
            if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let (b1, b2, g2) = (c(self.bad[0]), c(self.bad[1]), c(self.good[1]));
        self.min_gap * (b1 * b2 + g2 * b1)
    }
}

/// Exploration regret plus the per-round exploitation terms.
pub fn lower_bound_trajectory(exploration_regret: &[f64], rounds: &[LowerBoundRound]) -> f64 {
    exploration_regret.iter().sum::<f64>() + rounds.iter().map(LowerBoundRound::term).sum::<f64>()
}

/// Evaluate the good/bad event bounds of every exploitation round of a
/// two-agent, three-arm episode. Invalid orderings count as a zero bound.
pub fn lower_bound_rounds(
    log: &EpisodeLog,
    params: &AgentParams,
    sigma: f64,
    standardization: Standardization,
) -> Result<Vec<LowerBoundRound>> {
    if params.agents() != 2 {
        return Err(Error::InvalidInput(
            "lower-bound rounds need exactly 2 agents".into(),
        ));
    }
    let moments = log
        .ridge
        .iter()
        .enumerate()
        .map(|(i, r)| moments_from_gram(&r.design_gram(), r.lambda(), params.theta(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for round in log.rounds.iter().filter(|r| r.phase == Phase::Exploit) {
        if round.contexts.len() != 3 {
            return Err(Error::InvalidInput(
                "lower-bound rounds need exactly 3 arms".into(),
            ));
        }
        let stats = gap_stats(params, &round.contexts, &round.oracle)?;
        let mut good = [0.0; 2];
        let mut bad = [0.0; 2];
        for i in 0..2 {
            let means = params.mean_scores(i, &round.contexts)?;
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
            let nus = event_nus(&moments[i], &round.contexts, sigma, order, standardization)?;
            good[i] = good_event_lower_bound(&nus.nus()).unwrap_or(0.0);
            bad[i] = match nus.bad_pair_nus() {
                [Some(a), Some(b)] => bad_event_lower_bound(&[a, b]).unwrap_or(0.0),
                _ => 0.0,
            };
        }
        out.push(LowerBoundRound {
            min_gap: stats.agents[0].min_gap.unwrap_or(0.0),
            bad,
            good,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn s1_inputs(h: usize) -> BoundInputs {
        BoundInputs {
            exploration_rounds: h,
            lambda: 0.1,
            margin: 0.2,
            dim: 2,
            x_max: 1.0,
            sigma: 0.05,
            agents: 2,
            arms: 3,
        }
    }

    #[test]
    fn upper_bound_examples() {
        let inputs = s1_inputs(312);
        let only_explore = regret_upper_bound(&inputs, &[0.1, 0.2], &[]);
        assert_eq!(only_explore.exploitation, 0.0);
        assert!((only_explore.total() - 0.3).abs() < 1e-15);

        let ub = regret_upper_bound(&inputs, &[], &vec![1.0; 688]);
        let expected = 2.0 * 3.0 * 688.0 * (-6.24f64 + 4f64.ln()).exp();
        assert!((ub.exploitation - expected).abs() < 1e-9);
        assert!((ub.exploitation - 32.1).abs() < 0.15, "{}", ub.exploitation);

        let longer = regret_upper_bound(&s1_inputs(624), &[], &vec![1.0; 688]);
        assert!(longer.exploitation < ub.exploitation);
    }

    #[test]
    fn corollary_examples() {
        let unit = BoundInputs {
            exploration_rounds: 1,
            lambda: 1.0,
            margin: 1.0,
            dim: 1,
            x_max: 1.0,
            sigma: 1.0,
            agents: 1,
            arms: 1,
        };
        let c = corollary_constants(&unit, 1.0);
        assert_eq!((c.c1, c.c2), (2.0, 1.0));
        assert!((c.bound(std::f64::consts::E) - 5.0).abs() < 1e-12);

        let c = corollary_constants(&s1_inputs(312), 0.7);
        assert!((c.c1 - 50.0 * 0.7).abs() < 1e-9);
        let (a, b, e) = (c.bound(1000.0), c.bound(2000.0), c.bound(3000.0));
        assert!(a < b && b < e && (b - a) > (e - b));
    }

    #[test]
    fn invalid_ranking_examples() {
        let v = invalid_ranking_bound(&s1_inputs(312));
        assert!((v.raw - 3.0 * (-4.854f64).exp()).abs() < 1e-4);
        assert!((v.raw - 0.0235).abs() < 5e-4);
        assert!(!v.vacuous);
        assert!(invalid_ranking_bound(&s1_inputs(1_000_000)).raw < 1e-300);
        let small = invalid_ranking_bound(&s1_inputs(3));
        assert!(small.raw > 1.0 && small.vacuous && small.clamped == 1.0);
    }

    #[test]
    fn tail_examples() {
        let (lo, _) = gaussian_tail_bounds(1.0).unwrap();
        assert_eq!(lo, 0.0);
        let (lo, hi) = gaussian_tail_bounds(2.0).unwrap();
        assert!((lo - 0.02025).abs() < 1e-5);
        assert!((hi - 0.02700).abs() < 1e-5);
        assert!(gaussian_tail_bounds(0.0).is_err());
        assert!(gaussian_tail_bounds(-1.0).is_err());
    }

    #[test]
    fn identity_design_moments() {
        let theta = dvector![0.3, -0.8, 1.1];
        let m = posterior_moments(&DMatrix::identity(3, 3), 1.0, &theta).unwrap();
        assert!((&m.mean - &theta * 0.5).norm() < 1e-15);
        assert!((&m.scale - DMatrix::identity(3, 3) * 0.25).norm() < 1e-15);
    }

    #[test]
    fn vanishing_ridge_limits() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, 0.3, 0.9, 0.5, 0.5, 0.1, 0.7]);
        let theta = dvector![0.6, 0.8];
        let m = posterior_moments(&x, 1e-10, &theta).unwrap();
        assert!((&m.mean - &theta).norm() < 1e-8);
        let inv = (x.transpose() * &x).try_inverse().unwrap();
        assert!((&m.scale - inv).norm() < 1e-7);
    }

    #[test]
    fn nu_examples() {
        let moments = EstimatorMoments {
            mean: dvector![1.0, 0.0, 0.0],
            scale: DMatrix::identity(3, 3),
        };
        let ctx = vec![
            dvector![1.0, 0.0, 0.0],
            dvector![0.0, 1.0, 0.0],
            dvector![0.0, 0.0, 1.0],
        ];
        let nus = event_nus(&moments, &ctx, 1.0, [0, 1, 2], Standardization::SquareRoot).unwrap();
        let p = nus.pairs[0];
        assert_eq!((p.sigma, p.sigma_tilde), (2.0, 2.0));
        assert!((p.nu - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((p.nu_tilde.unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let literal = event_nus(&moments, &ctx, 1.0, [0, 1, 2], Standardization::Variance).unwrap();
        assert!((literal.pairs[0].nu - 0.5).abs() < 1e-15);

        let same = vec![dvector![0.3, 0.3, 0.3]; 3];
        let nus = event_nus(&moments, &same, 1.0, [0, 1, 2], Standardization::SquareRoot).unwrap();
        assert_eq!(nus.pairs[0].nu, 0.0);
        assert_eq!(nus.pairs[0].nu_tilde, None);
    }

    #[test]
    fn event_bound_examples() {
        let v = good_event_lower_bound(&[2.0; 3]).unwrap();
        assert!((v - 0.9190).abs() < 1e-4);
        assert!((good_event_lower_bound(&[40.0; 3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(good_event_lower_bound(&[2.0, 0.0, 1.0]).is_err());

        assert!((bad_event_lower_bound(&[2.0, 2.0]).unwrap() - 0.02025).abs() < 1e-5);
        assert_eq!(bad_event_lower_bound(&[1.0, 3.0]).unwrap(), 0.0);
        assert!(bad_event_lower_bound(&[0.5, 3.0]).unwrap() < 0.0);
    }

    #[test]
    fn trajectory_examples() {
        let vacuous = LowerBoundRound {
            min_gap: 0.3,
            bad: [0.0, 0.0],
            good: [0.9, 0.9],
        };
        assert_eq!(lower_bound_trajectory(&[0.5, 0.25], &[vacuous; 4]), 0.75);

        let round = LowerBoundRound {
            min_gap: 0.2,
            bad: [0.02, 0.02],
            good: [0.9, 0.9],
        };
        assert!((round.term() - 0.00368).abs() < 1e-15);

        let negative = LowerBoundRound {
            min_gap: 0.2,
            bad: [-0.1, 0.5],
            good: [-3.0, 1.5],
        };
        assert_eq!(negative.term(), 0.0);
    }
}
