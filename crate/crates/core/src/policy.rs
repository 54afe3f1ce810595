//! The CC-ETC policy: cyclic exploration, one-shot ridge estimation, then
//! stable matching on estimated rankings.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bandit::{Estimate, RidgeState};
use crate::environment::Environment;
use crate::error::{check_dim, Error, Result};
use crate::market::MarketConfig;
use crate::matching::{gale_shapley, Matching, Ranking};
use crate::regret::{optimal_change_flags, oracle_matching, RegretTrace};
use crate::rng::EpisodeStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Formula,
    Override,
}

/// How long exploration lasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPlan {
    /// Number of exploration loops `h`.
    pub loops: usize,
    /// Total exploration rounds `h̄ = h · loop_len`.
    pub rounds: usize,
    /// `C(K, N)`.
    pub loop_len: usize,
    /// Unrounded formula value, maximised over agents.
    pub raw: f64,
    /// Some agent's logarithm argument was `<= 1`.
    pub fell_back: bool,
    pub source: PlanSource,
}

impl ExplorationPlan {
    /// A plan of exactly `rounds` rounds, which must be a multiple of `loop_len`.
    pub fn fixed(rounds: usize, loop_len: usize) -> Result<Self> {
        if loop_len == 0 || rounds == 0 || !rounds.is_multiple_of(loop_len) {
            return Err(Error::InvalidInput(format!(
                "{rounds} exploration rounds is not a positive multiple of {loop_len}"
            )));
        }
        Ok(Self {
            loops: rounds / loop_len,
            rounds,
            loop_len,
            raw: rounds as f64,
            fell_back: false,
            source: PlanSource::Override,
        })
    }
}

/// Largest per-agent formula value and whether any agent fell back to the floor.
fn formula_raw(config: &MarketConfig) -> Result<(f64, bool)> {
    let (n, k, d, t) = (
        config.agents as f64,
        config.arms as f64,
        config.dim as f64,
        config.horizon as f64,
    );
    let sigma2 = config.sigma * config.sigma;
    let mut raw = 0.0f64;
    let mut fell_back = false;
    for i in 0..config.agents {
        let (margin, lambda, x) = (config.margin[i], config.lambda[i], config.x_max[i]);
        if !(margin > 0.0) {
            return Err(Error::MarginAssumption {
                agent: i + 1,
                margin,
            });
        }
        if sigma2 == 0.0 {
            continue;
        }
        let (l2, m2, x2) = (lambda * lambda, margin * margin, x * x);
        let arg = t * n * k * l2 * m2 / (d * x2 * sigma2);
        if arg <= 1.0 {
            warn!(
                "exploration formula for p{}: log argument {arg:.4} <= 1, using the C(K,N) floor",
                i + 1
            );
            fell_back = true;
            continue;
        }
        raw = raw.max(2.0 * d * d * x2 * sigma2 / (m2 * l2) * arg.ln());
    }
    Ok((raw, fell_back))
}

/// Exploration length from the closed-form formula, rounded up to a multiple
/// of `C(K, N)` and floored at one loop.
pub fn exploration_length(config: &MarketConfig) -> Result<ExplorationPlan> {
    let loop_len = config.loop_len();
    let (raw, fell_back) = formula_raw(config)?;
    let target = raw.max(loop_len as f64);
    let loops = (target / loop_len as f64).ceil() as usize;
    let rounds = loops * loop_len;
    if rounds > config.horizon {
        return Err(Error::HorizonTooShort {
            exploration: rounds,
            horizon: config.horizon,
        });
    }
    Ok(ExplorationPlan {
        loops,
        rounds,
        loop_len,
        raw,
        fell_back,
        source: PlanSource::Formula,
    })
}

/// The configured override if present, otherwise [`exploration_length`].
pub fn plan_exploration(config: &MarketConfig) -> Result<ExplorationPlan> {
    match config.exploration_rounds {
        None => exploration_length(config),
        Some(rounds) => {
            if rounds > config.horizon {
                return Err(Error::HorizonTooShort {
                    exploration: rounds,
                    horizon: config.horizon,
                });
            }
            let mut plan = ExplorationPlan::fixed(rounds, config.loop_len())?;
            let (raw, fell_back) = formula_raw(config)?;
            plan.raw = raw;
            plan.fell_back = fell_back;
            Ok(plan)
        }
    }
}

/// Arm of agent `agent` (zero-based) at round `t` (one-based): `(t − 1 + agent) mod K`.
pub fn exploration_assignment(t: usize, agent: usize, arms: usize) -> usize {
    debug_assert!(t >= 1 && arms > 0);
    (t - 1 + agent) % arms
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub assigned: usize,
    /// Noisy score `y_i(t)`.
    pub score: f64,
    /// True mean of the assigned arm.
    pub mean: f64,
    pub oracle_arm: usize,
    /// True mean of the oracle arm.
    pub oracle_mean: f64,
}

impl AgentRecord {
    pub fn regret(&self) -> f64 {
        self.oracle_mean - self.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub phase: Phase,
    pub contexts: Vec<DVector<f64>>,
    pub assigned: Matching,
    pub oracle: Matching,
    pub agents: Vec<AgentRecord>,
    /// Rankings submitted to the platform (exploitation only).
    pub rankings: Option<Vec<Ranking>>,
}

/// One full episode, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub plan: ExplorationPlan,
    pub rounds: Vec<RoundRecord>,
    pub estimates: Vec<Estimate>,
    /// Ridge statistics frozen at the end of exploration.
    pub ridge: Vec<RidgeState>,
    pub optimal_changed: Vec<bool>,
}

impl EpisodeLog {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn oracles(&self) -> Vec<Matching> {
        self.rounds.iter().map(|r| r.oracle.clone()).collect()
    }

    pub fn regret_trace(&self) -> RegretTrace {
        let agents = self.rounds.first().map_or(0, |r| r.agents.len());
        let instant = (0..agents)
            .map(|i| self.rounds.iter().map(|r| r.agents[i].regret()).collect())
            .collect();
        RegretTrace::new(instant, self.optimal_changed.clone())
            .expect("every round records every agent")
    }
}

fn check_shapes(config: &MarketConfig, env: &Environment, streams: &EpisodeStreams) -> Result<()> {
    check_dim(config.agents, env.agents())?;
    check_dim(config.arms, env.arms())?;
    check_dim(config.dim, env.dim())?;
    check_dim(config.arms, streams.contexts.len())?;
    check_dim(config.agents, streams.noise.len())
}

/// Draw round-`t` contexts, score `assigned`, and record the oracle.
fn play_round(
    config: &MarketConfig,
    env: &Environment,
    t: usize,
    streams: &mut EpisodeStreams,
    choose: impl FnOnce(&[DVector<f64>]) -> Result<(Matching, Option<Vec<Ranking>>)>,
) -> Result<RoundRecord> {
    let contexts: Vec<DVector<f64>> = streams
        .contexts
        .iter_mut()
        .enumerate()
        .map(|(j, rng)| env.contexts.sample(j, t, rng))
        .collect();
    let (assigned, rankings) = choose(&contexts)?;
    let oracle = oracle_matching(&env.params, &contexts, &config.arm_prefs)?;
    let agents = (0..config.agents)
        .map(|i| {
            let arm = assigned.arm_of(i);
            let mean = env.params.mean_score(i, &contexts[arm])?;
            let score = env.noise.sample_score(mean, &mut streams.noise[i]);
            let oracle_arm = oracle.arm_of(i);
            Ok(AgentRecord {
                assigned: arm,
                score,
                mean,
                oracle_arm,
                oracle_mean: env.params.mean_score(i, &contexts[oracle_arm])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RoundRecord {
        t,
        phase: if rankings.is_some() {
            Phase::Exploit
        } else {
            Phase::Explore
        },
        contexts,
        assigned,
        oracle,
        agents,
        rankings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationOutput {
    pub estimates: Vec<Estimate>,
    pub ridge: Vec<RidgeState>,
    pub rounds: Vec<RoundRecord>,
}

/// Rounds `1..=h̄`: cyclic assignment, ridge updates, and one solve per agent.
pub fn run_exploration(
    config: &MarketConfig,
    env: &Environment,
    plan: &ExplorationPlan,
    streams: &mut EpisodeStreams,
) -> Result<ExplorationOutput> {
    check_shapes(config, env, streams)?;
    if plan.rounds > config.horizon {
        return Err(Error::HorizonTooShort {
            exploration: plan.rounds,
            horizon: config.horizon,
        });
    }
    let mut ridge = config
        .lambda
        .iter()
        .map(|&l| RidgeState::new(config.dim, l))
        .collect::<Result<Vec<_>>>()?;
    let mut rounds = Vec::with_capacity(plan.rounds);
    for t in 1..=plan.rounds {
        let record = play_round(config, env, t, streams, |_| {
            let arms = (0..config.agents)
                .map(|i| exploration_assignment(t, i, config.arms))
                .collect();
            Ok((Matching::new(arms, config.arms)?, None))
        })?;
        for (i, a) in record.agents.iter().enumerate() {
            ridge[i].update(&record.contexts[a.assigned], a.score)?;
        }
        rounds.push(record);
    }
    let estimates = ridge.iter().map(RidgeState::solve).collect();
    Ok(ExplorationOutput {
        estimates,
        ridge,
        rounds,
    })
}

/// Rounds `start..=T` with frozen estimates.
pub fn run_exploitation(
    config: &MarketConfig,
    env: &Environment,
    estimates: &[Estimate],
    start: usize,
    streams: &mut EpisodeStreams,
) -> Result<Vec<RoundRecord>> {
    check_shapes(config, env, streams)?;
    check_dim(config.agents, estimates.len())?;
    let mut rounds = Vec::with_capacity((config.horizon + 1).saturating_sub(start));
    for t in start..=config.horizon {
        rounds.push(play_round(config, env, t, streams, |contexts| {
            let rankings = estimates
                .iter()
                .map(|e| e.rank_arms(contexts))
                .collect::<Result<Vec<_>>>()?;
            let m = gale_shapley(&rankings, &config.arm_prefs)?;
            Ok((m, Some(rankings)))
        })?);
    }
    Ok(rounds)
}

/// A full seeded episode.
pub fn run_episode(
    config: &MarketConfig,
    env: &Environment,
    plan: &ExplorationPlan,
    master_seed: u64,
    replication: u64,
) -> Result<EpisodeLog> {
    let mut streams = EpisodeStreams::new(master_seed, replication, config.arms, config.agents);
    let explored = run_exploration(config, env, plan, &mut streams)?;
    let mut rounds = explored.rounds;
    rounds.extend(run_exploitation(
        config,
        env,
        &explored.estimates,
        plan.rounds + 1,
        &mut streams,
    )?);
    let oracles: Vec<Matching> = rounds.iter().map(|r| r.oracle.clone()).collect();
    Ok(EpisodeLog {
        plan: plan.clone(),
        optimal_changed: optimal_change_flags(&oracles),
        rounds,
        estimates: explored.estimates,
        ridge: explored.ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{AgentParams, ContextProcess, NoiseModel};
    use crate::matching::ArmPreferenceProfile;
    use nalgebra::dvector;

    fn s1_config(sigma: f64) -> MarketConfig {
        MarketConfig {
            agents: 2,
            arms: 3,
            dim: 2,
            horizon: 1000,
            lambda: vec![0.1; 2],
            sigma,
            margin: vec![0.2; 2],
            x_max: vec![1.0; 2],
            arm_prefs: ArmPreferenceProfile::new(vec![vec![0, 1], vec![1, 0], vec![0, 1]]).unwrap(),
            exploration_rounds: None,
        }
    }

    fn s1_env(zeta: f64, sigma: f64) -> Environment {
        Environment::new(
            AgentParams::new(vec![dvector![0.530, 0.848], dvector![0.894, 0.447]]).unwrap(),
            ContextProcess::fixed_gaussian(
                vec![
                    dvector![0.667, 0.745],
                    dvector![0.745, 0.667],
                    dvector![0.994, 0.110],
                ],
                zeta,
                true,
            )
            .unwrap(),
            NoiseModel::new(sigma).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn s1_exploration_length() {
        let plan = exploration_length(&s1_config(0.05)).unwrap();
        assert_eq!(plan.loop_len, 3);
        assert_eq!(plan.rounds % 3, 0);
        assert!(plan.rounds.abs_diff(312) <= 6, "{}", plan.rounds);
        assert!(!plan.fell_back);
    }

    #[test]
    fn exploration_length_grows_with_sigma() {
        let rounds: Vec<usize> = [0.01, 0.02, 0.05]
            .iter()
            .map(|&s| exploration_length(&s1_config(s)).unwrap().rounds)
            .collect();
        assert!(rounds[0] < rounds[1] && rounds[1] < rounds[2], "{rounds:?}");
    }

    #[test]
    fn exploration_length_floor_and_errors() {
        let mut c = s1_config(0.05);
        c.margin = vec![10.0; 2];
        assert_eq!(exploration_length(&c).unwrap().rounds, 3);

        c.margin = vec![0.2, 0.0];
        assert!(matches!(
            exploration_length(&c),
            Err(Error::MarginAssumption { agent: 2, .. })
        ));

        let mut c = s1_config(0.05);
        c.horizon = 100;
        assert!(matches!(
            exploration_length(&c),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn assignment_examples() {
        assert_eq!(exploration_assignment(1, 0, 3), 0);
        assert_eq!(exploration_assignment(1, 1, 3), 1);
        let visits: Vec<usize> = (1..=3).map(|t| exploration_assignment(t, 0, 3)).collect();
        assert_eq!(visits, vec![0, 1, 2]);
        for t in 1..=10 {
            let mut arms: Vec<usize> = (0..5).map(|i| exploration_assignment(t, i, 5)).collect();
            arms.sort_unstable();
            assert_eq!(arms, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn noiseless_exploration_recovers_shrunk_parameters() {
        let mut config = s1_config(0.0);
        config.exploration_rounds = Some(300);
        let env = s1_env(0.0, 0.0);
        let plan = plan_exploration(&config).unwrap();
        let mut streams = EpisodeStreams::new(3, 0, 3, 2);
        let out = run_exploration(&config, &env, &plan, &mut streams).unwrap();
        for i in 0..2 {
            let gram = out.ridge[i].gram();
            let xtx = out.ridge[i].design_gram();
            let theta = env.params.theta(i);
            let shrunk = gram.clone().cholesky().unwrap().solve(&(&xtx * theta));
            let est = out.estimates[i].theta();
            assert!((est - &shrunk).norm() < 1e-10);
            let lambda_min = gram.symmetric_eigenvalues().min();
            assert!((est - theta).norm() <= 0.1 * theta.norm() / lambda_min + 1e-12);
        }
    }

    #[test]
    fn exploration_coverage() {
        let config = s1_config(0.05);
        let env = s1_env(0.01, 0.05);
        let plan = ExplorationPlan::fixed(30, 3).unwrap();
        let mut streams = EpisodeStreams::new(1, 0, 3, 2);
        let out = run_exploration(&config, &env, &plan, &mut streams).unwrap();
        for i in 0..2 {
            let mut counts = [0usize; 3];
            for r in &out.rounds {
                counts[r.agents[i].assigned] += 1;
            }
            assert_eq!(counts, [10, 10, 10]);
        }
        assert!(out.rounds.iter().all(|r| r.phase == Phase::Explore));
    }

    #[test]
    fn perfect_estimates_match_the_oracle() {
        let config = s1_config(0.05);
        let env = s1_env(0.0, 0.05);
        let truth: Vec<Estimate> = env
            .params
            .thetas()
            .iter()
            .map(|t| Estimate::new(t.clone()).unwrap())
            .collect();
        let mut streams = EpisodeStreams::new(2, 0, 3, 2);
        let rounds = run_exploitation(&config, &env, &truth, 1, &mut streams).unwrap();
        assert_eq!(rounds.len(), 1000);
        for r in &rounds {
            assert_eq!(r.assigned.assignments(), &[0, 1]);
            assert_eq!(r.assigned, r.oracle);
        }
    }

    #[test]
    fn identical_estimates_resolve_by_arm_preference() {
        let config = s1_config(0.05);
        let env = Environment::new(
            AgentParams::new(vec![dvector![1.0, 0.0], dvector![1.0, 0.0]]).unwrap(),
            ContextProcess::fixed_gaussian(vec![dvector![0.5, 0.5]; 3], 0.0, false).unwrap(),
            NoiseModel::new(0.0).unwrap(),
        )
        .unwrap();
        let est = vec![Estimate::new(dvector![1.0, 1.0]).unwrap(); 2];
        let mut streams = EpisodeStreams::new(0, 0, 3, 2);
        let rounds = run_exploitation(&config, &env, &est, 1, &mut streams).unwrap();
        // both rank a1>a2>a3; a1 prefers p1, so p2 takes a2
        assert!(rounds.iter().all(|r| r.assigned.assignments() == [0, 1]));
    }

    #[test]
    fn one_flipped_agent_follows_the_case_table() {
        // non-global preferences; p1 believes a2>a1>a3 and p2 is correct
        let config = s1_config(0.05);
        let env = s1_env(0.0, 0.0);
        // ranks a2 > a1 > a3 on the normalized means
        let p1 = Estimate::new(dvector![1.0, 0.9]).unwrap();
        let est = vec![p1, Estimate::new(env.params.theta(1).clone()).unwrap()];
        let mut streams = EpisodeStreams::new(0, 0, 3, 2);
        let rounds = run_exploitation(&config, &env, &est, 1, &mut streams).unwrap();
        let r = &rounds[0];
        assert_eq!(r.rankings.as_ref().unwrap()[0].as_slice(), &[1, 0, 2]);
        assert_eq!(r.assigned.assignments(), &[0, 1]);
        assert!(r.agents.iter().all(|a| a.regret() == 0.0));

        // ranks a2 > a3 > a1: p1 loses a2 to p2 and falls to a3
        let est = vec![
            Estimate::new(dvector![1.0, 0.45]).unwrap(),
            Estimate::new(env.params.theta(1).clone()).unwrap(),
        ];
        let mut streams = EpisodeStreams::new(0, 0, 3, 2);
        let r = &run_exploitation(&config, &env, &est, 1, &mut streams).unwrap()[0];
        assert_eq!(r.rankings.as_ref().unwrap()[0].as_slice(), &[1, 2, 0]);
        assert_eq!(r.assigned.assignments(), &[2, 1]);
        assert!(r.agents[0].regret() > 0.0);
        assert_eq!(r.agents[1].regret(), 0.0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let mut config = s1_config(0.05);
        config.horizon = 400;
        let env = s1_env(0.01, 0.05);
        let plan = plan_exploration(&config).unwrap();
        let a = run_episode(&config, &env, &plan, 11, 4).unwrap();
        let b = run_episode(&config, &env, &plan, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.horizon(), 400);
        for r in &a.rounds {
            assert_eq!(r.phase == Phase::Explore, r.t <= plan.rounds);
        }

        config.horizon = plan.rounds;
        let short = run_episode(&config, &env, &plan, 11, 4).unwrap();
        assert!(short.rounds.iter().all(|r| r.phase == Phase::Explore));
    }
}
