//! Ground-truth oracles and regret accounting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bandit::rank_by_scores;
use crate::environment::AgentParams;
use crate::error::{check_dim, Error, Result};
use crate::matching::{gale_shapley, ArmPreferenceProfile, Matching, Ranking};

/// Gaps within this distance of zero count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Every agent's ranking of arms by true mean score.
pub fn true_rankings(params: &AgentParams, contexts: &[DVector<f64>]) -> Result<Vec<Ranking>> {
    (0..params.agents())
        .map(|i| rank_by_scores(&params.mean_scores(i, contexts)?))
        .collect()
}

/// Agent-optimal stable matching `m̄(t)` under true preferences.
pub fn oracle_matching(
    params: &AgentParams,
    contexts: &[DVector<f64>],
    arm_prefs: &ArmPreferenceProfile,
) -> Result<Matching> {
    gale_shapley(&true_rankings(params, contexts)?, arm_prefs)
}

/// `r_i(t) = μ_{i,m̄_i(t)}(t) − μ_{i,m_i(t)}(t)` for every agent.
pub fn instantaneous_regret(
    params: &AgentParams,
    contexts: &[DVector<f64>],
    assigned: &Matching,
    oracle: &Matching,
) -> Result<Vec<f64>> {
    check_dim(params.agents(), assigned.agents())?;
    check_dim(params.agents(), oracle.agents())?;
    (0..params.agents())
        .map(|i| {
            let best = params.mean_score(i, &contexts[oracle.arm_of(i)])?;
            let got = params.mean_score(i, &contexts[assigned.arm_of(i)])?;
            Ok(best - got)
        })
        .collect()
}

/// Gap structure of one agent at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGaps {
    pub oracle_arm: usize,
    /// `Δ̄_{i,j}(t) = μ_{i,m̄_i} − μ_{i,j}` for every arm.
    pub gaps: Vec<f64>,
    /// Arms with a positive gap.
    pub sub_optimal: Vec<usize>,
    /// Arms with a negative gap.
    pub super_optimal: Vec<usize>,
    /// Smallest positive gap, if any arm is sub-optimal.
    pub min_gap: Option<f64>,
    /// Largest gap over all arms (`0` when nothing is sub-optimal).
    pub max_gap: f64,
    /// `cos φ_{i,j}(t)`; `None` for the oracle arm and for arms whose
    /// context coincides with the oracle arm's.
    pub cos_phi: Vec<Option<f64>>,
    /// Arms other than the oracle arm that are indistinguishable from it:
    /// equal context or a gap within [`TIE_TOLERANCE`].
    pub ties: Vec<usize>,
}

impl AgentGaps {
    pub fn margin_violated(&self) -> bool {
        !self.ties.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub agents: Vec<AgentGaps>,
}

impl GapStats {
    /// Number of agents with at least one tie at this round.
    pub fn violations(&self) -> usize {
        self.agents.iter().filter(|a| a.margin_violated()).count()
    }
}

pub fn gap_stats(
    params: &AgentParams,
    contexts: &[DVector<f64>],
    oracle: &Matching,
) -> Result<GapStats> {
    check_dim(params.agents(), oracle.agents())?;
    let agents = (0..params.agents())
        .map(|i| {
            let theta = params.theta(i);
            let star = oracle.arm_of(i);
            let means = params.mean_scores(i, contexts)?;
            let gaps: Vec<f64> = means.iter().map(|m| means[star] - m).collect();
            let theta_norm = theta.norm();
            let mut cos_phi = vec![None; contexts.len()];
            let mut ties = Vec::new();
            for (j, x) in contexts.iter().enumerate() {
                if j == star {
                    continue;
                }
                let diff = &contexts[star] - x;
                let norm = diff.norm();
                if norm == 0.0 {
                    ties.push(j);
                    continue;
                }
                if theta_norm > 0.0 {
                    cos_phi[j] = Some(theta.dot(&diff) / (theta_norm * norm));
                }
                if gaps[j].abs() <= TIE_TOLERANCE {
                    ties.push(j);
                }
            }
            let sub_optimal: Vec<usize> = (0..gaps.len()).filter(|&j| gaps[j] > 0.0).collect();
            let super_optimal: Vec<usize> = (0..gaps.len()).filter(|&j| gaps[j] < 0.0).collect();
            let min_gap = sub_optimal.iter().map(|&j| gaps[j]).reduce(f64::min);
            let max_gap = gaps.iter().copied().fold(0.0, f64::max);
            Ok(AgentGaps {
                oracle_arm: star,
                gaps,
                sub_optimal,
                super_optimal,
                min_gap,
                max_gap,
                cos_phi,
                ties,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapStats { agents })
}

/// A ranking is valid when every arm placed above the oracle arm has a
/// strictly larger true mean than the oracle arm.
pub fn is_valid_ranking(ranking: &Ranking, true_means: &[f64], oracle_arm: usize) -> bool {
    let reference = true_means[oracle_arm];
    ranking
        .as_slice()
        .iter()
        .take_while(|&&j| j != oracle_arm)
        .all(|&j| true_means[j] > reference)
}

/// The six orderings agent 1 can submit in the two-agent, three-arm fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoByThreeCase {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl TwoByThreeCase {
    pub const ALL: [TwoByThreeCase; 6] = [
        TwoByThreeCase::C1,
        TwoByThreeCase::C2,
        TwoByThreeCase::C3,
        TwoByThreeCase::C4,
        TwoByThreeCase::C5,
        TwoByThreeCase::C6,
    ];

    /// The ranking agent 1 submits in this case.
    pub fn ranking(self) -> Ranking {
        let order = match self {
            TwoByThreeCase::C1 => [2, 0, 1],
            TwoByThreeCase::C2 => [2, 1, 0],
            TwoByThreeCase::C3 => [1, 2, 0],
            TwoByThreeCase::C4 => [1, 0, 2],
            TwoByThreeCase::C5 => [0, 2, 1],
            TwoByThreeCase::C6 => [0, 1, 2],
        };
        Ranking::new(order.to_vec()).expect("static permutation")
    }

    fn from_ranking(r: &Ranking) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.ranking() == *r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: TwoByThreeCase,
    pub matching: Matching,
    /// Whether each agent ends with an arm it truly ranks below its oracle arm.
    pub suffers: [bool; 2],
}

/// Run the fixture (true preferences `a1>a2>a3` and `a2>a1>a3`, every arm
/// preferring `p1`, agent 2 truthful) with agent 1 submitting `submitted`.
pub fn classify_two_by_three_case(submitted: &Ranking) -> Result<CaseOutcome> {
    if submitted.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "fixture ranking must cover 3 arms, got {}",
            submitted.len()
        )));
    }
    let case = TwoByThreeCase::from_ranking(submitted)
        .ok_or_else(|| Error::InvalidInput(format!("{submitted} is not a permutation of 3")))?;
    let truth = [Ranking::new(vec![0, 1, 2])?, Ranking::new(vec![1, 0, 2])?];
    let prefs = ArmPreferenceProfile::global(2, 3);
    let oracle = gale_shapley(&truth, &prefs)?;
    let matching = gale_shapley(&[submitted.clone(), truth[1].clone()], &prefs)?;
    let suffers =
        [0, 1].map(|i| truth[i].position(matching.arm_of(i)) > truth[i].position(oracle.arm_of(i)));
    Ok(CaseOutcome {
        case,
        matching,
        suffers,
    })
}

/// `flags[t]` is set iff the oracle at position `t` differs from `t − 1`.
pub fn optimal_change_flags(oracles: &[Matching]) -> Vec<bool> {
    let mut flags = vec![false; oracles.len()];
    for t in 1..oracles.len() {
        flags[t] = oracles[t] != oracles[t - 1];
    }
    flags
}

/// Per-agent instantaneous and cumulative regret over one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    /// `instant[i][t − 1] = r_i(t)`.
    pub instant: Vec<Vec<f64>>,
    /// `cumulative[i][t − 1] = R_i(t)`.
    pub cumulative: Vec<Vec<f64>>,
    pub optimal_changed: Vec<bool>,
}

impl RegretTrace {
    pub fn new(instant: Vec<Vec<f64>>, optimal_changed: Vec<bool>) -> Result<Self> {
        for row in &instant {
            if row.len() != optimal_changed.len() {
                return Err(Error::LengthMismatch {
                    expected: optimal_changed.len(),
                    actual: row.len(),
                });
            }
        }
        let cumulative = instant
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, r| {
                        *acc += r;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            instant,
            cumulative,
            optimal_changed,
        })
    }

    pub fn agents(&self) -> usize {
        self.instant.len()
    }

    pub fn rounds(&self) -> usize {
        self.optimal_changed.len()
    }
}

/// Pointwise min/mean/max bands of cumulative regret, per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretBands {
    pub min: Vec<Vec<f64>>,
    pub mean: Vec<Vec<f64>>,
    pub max: Vec<Vec<f64>>,
}

/// Values are sorted before summation, so the result does not depend on the
/// order of `traces`.
pub fn aggregate_replications(traces: &[RegretTrace]) -> Result<RegretBands> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidInput("no traces to aggregate".into()))?;
    let (agents, rounds) = (first.agents(), first.rounds());
    for tr in traces {
        if tr.agents() != agents {
            return Err(Error::LengthMismatch {
                expected: agents,
                actual: tr.agents(),
            });
        }
        if tr.rounds() != rounds {
            return Err(Error::LengthMismatch {
                expected: rounds,
                actual: tr.rounds(),
            });
        }
    }
    let n = traces.len() as f64;
    let mut bands = RegretBands {
        min: vec![vec![0.0; rounds]; agents],
        mean: vec![vec![0.0; rounds]; agents],
        max: vec![vec![0.0; rounds]; agents],
    };
    let mut column = Vec::with_capacity(traces.len());
    for i in 0..agents {
        for t in 0..rounds {
            column.clear();
            column.extend(traces.iter().map(|tr| tr.cumulative[i][t]));
            column.sort_by(f64::total_cmp);
            bands.min[i][t] = column[0];
            bands.max[i][t] = column[column.len() - 1];
            bands.mean[i][t] = column.iter().sum::<f64>() / n;
        }
    }
    Ok(bands)
}
