//! Seeded replication sweeps, CSV traces and JSON diagnostics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    corollary_constants, invalid_ranking_bound, lower_bound_rounds, lower_bound_trajectory,
    regret_upper_bound, BoundInputs, BoundValue, CorollaryConstants, Standardization, UpperBound,
};
use crate::environment::{audit_margin, AgentMarginAudit, Environment};
use crate::error::Result;
use crate::market::MarketConfig;
use crate::policy::{plan_exploration, run_episode, EpisodeLog, ExplorationPlan, Phase};
use crate::regret::{
    aggregate_replications, gap_stats, is_valid_ranking, RegretBands, RegretTrace,
};
use crate::scenario::{AgentSpec, ExperimentConfig, ReferenceLength};

pub const CSV_HEADER: [&str; 9] = [
    "replication",
    "t",
    "agent",
    "phase",
    "assigned_arm",
    "oracle_arm",
    "regret_instant",
    "regret_cum",
    "optimal_changed",
];

/// Exploration plan and ground truth shared by every replication.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub plan: ExplorationPlan,
    pub env: Environment,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let plan = plan_exploration(&config.scenario.market)?;
    let env = config.scenario.environment(&plan)?;
    Ok(Prepared { plan, env })
}

/// Compact per-replication outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub replication: usize,
    pub trace: RegretTrace,
    /// `assigned[i][t − 1]`.
    pub assigned: Vec<Vec<usize>>,
    pub oracle: Vec<Vec<usize>>,
    pub exploitation_rounds: usize,
    /// Exploitation rounds whose matching equals the oracle matching.
    pub matched_rounds: usize,
    /// Per agent, whether the ranking submitted at `h̄ + 1` was invalid.
    pub first_exploit_invalid: Option<Vec<bool>>,
    pub margin: Vec<AgentMarginAudit>,
    pub upper_bound: Vec<UpperBound>,
    /// `max_t Δ̄_{i,max}(t)` over the whole episode.
    pub max_gap: Vec<f64>,
    /// Lower-bound trajectory for agent 1, on the lower-bound instance only.
    pub lower_bound: Option<f64>,
}

pub fn summarize(
    market: &MarketConfig,
    env: &Environment,
    log: &EpisodeLog,
    replication: usize,
    lower_bound: bool,
) -> Result<ReplicationSummary> {
    let agents = market.agents;
    let h = log.plan.rounds;
    let mut assigned = vec![Vec::with_capacity(log.horizon()); agents];
    let mut oracle = vec![Vec::with_capacity(log.horizon()); agents];
    let mut exploration_gaps = vec![Vec::with_capacity(h); agents];
    let mut max_gaps = vec![Vec::new(); agents];
    let mut max_gap = vec![0.0f64; agents];
    let mut matched_rounds = 0;
    let mut first_exploit_invalid = None;
    for round in &log.rounds {
        let stats = gap_stats(&env.params, &round.contexts, &round.oracle)?;
        for i in 0..agents {
            let rec = &round.agents[i];
            assigned[i].push(rec.assigned);
            oracle[i].push(rec.oracle_arm);
            max_gap[i] = max_gap[i].max(stats.agents[i].max_gap);
            match round.phase {
                Phase::Explore => exploration_gaps[i].push(rec.regret()),
                Phase::Exploit => max_gaps[i].push(stats.agents[i].max_gap),
            }
        }
        if round.phase == Phase::Exploit {
            if round.assigned == round.oracle {
                matched_rounds += 1;
            }
            if round.t == h + 1 {
                let rankings = round
                    .rankings
                    .as_ref()
                    .expect("exploitation rounds record rankings");
                let flags = (0..agents)
                    .map(|i| {
                        let means = env.params.mean_scores(i, &round.contexts)?;
                        Ok(!is_valid_ranking(
                            &rankings[i],
                            &means,
                            round.oracle.arm_of(i),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                first_exploit_invalid = Some(flags);
            }
        }
    }
    let contexts: Vec<_> = log.rounds.iter().map(|r| r.contexts.clone()).collect();
    let margin = audit_margin(&env.params, &contexts, &log.oracles(), &market.margin)?;
    let upper_bound = (0..agents)
        .map(|i| {
            let inputs = BoundInputs::for_agent(market, i, h);
            regret_upper_bound(&inputs, &exploration_gaps[i], &max_gaps[i])
        })
        .collect();
    let trace = log.regret_trace();
    let lower_bound = if lower_bound {
        let rounds =
            lower_bound_rounds(log, &env.params, market.sigma, Standardization::SquareRoot)?;
        Some(lower_bound_trajectory(&trace.instant[0][..h], &rounds))
    } else {
        None
    };
    Ok(ReplicationSummary {
        replication,
        trace,
        assigned,
        oracle,
        exploitation_rounds: log.horizon() - h,
        matched_rounds,
        first_exploit_invalid,
        margin,
        upper_bound,
        max_gap,
        lower_bound,
    })
}

/// One seeded replication, reduced to its summary.
pub fn run_replication(
    config: &ExperimentConfig,
    prepared: &Prepared,
    replication: usize,
) -> Result<ReplicationSummary> {
    let market = &config.scenario.market;
    let log = run_episode(
        market,
        &prepared.env,
        &prepared.plan,
        config.seed,
        replication as u64,
    )?;
    let lower = matches!(config.scenario.agents, AgentSpec::LowerBound);
    summarize(market, &prepared.env, &log, replication, lower)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentDiagnostics {
    pub agent: usize,
    pub invalid_ranking_bound: BoundValue,
    pub corollary: CorollaryConstants,
    pub corollary_bound_at_horizon: f64,
    /// Upper bound with realized gaps, averaged over replications.
    pub upper_bound_mean: UpperBound,
    pub mean_final_regret: f64,
    pub min_final_regret: f64,
    pub max_final_regret: f64,
    pub invalid_first_exploit_frequency: Option<f64>,
    pub margin_violation_rounds: usize,
    pub tie_rounds: usize,
    pub min_realized_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub scenario: String,
    pub replications: usize,
    pub seed: u64,
    pub market: MarketConfig,
    pub zeta: Option<f64>,
    pub exploration: ExplorationPlan,
    pub reference_exploration: Vec<ReferenceLength>,
    pub exploitation_match_rate: Option<f64>,
    pub optimal_changes: usize,
    pub agents: Vec<AgentDiagnostics>,
    pub lower_bound_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub diagnostics: Diagnostics,
    pub bands: RegretBands,
    pub traces: Vec<RegretTrace>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, s: &ReplicationSummary) -> Result<()> {
    let rounds = s.trace.rounds();
    let explore_until = rounds - s.exploitation_rounds;
    for t in 0..rounds {
        let phase = if t < explore_until {
            Phase::Explore
        } else {
            Phase::Exploit
        };
        for i in 0..s.trace.agents() {
            w.write_record(&[
                (s.replication + 1).to_string(),
                (t + 1).to_string(),
                (i + 1).to_string(),
                phase.as_str().to_string(),
                (s.assigned[i][t] + 1).to_string(),
                (s.oracle[i][t] + 1).to_string(),
                s.trace.instant[i][t].to_string(),
                s.trace.cumulative[i][t].to_string(),
                s.trace.optimal_changed[t].to_string(),
            ])?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentBoundReport {
    pub agent: usize,
    pub invalid_ranking_bound: BoundValue,
    /// `2 · x_max · ‖θ‖`, an a-priori cap on any gap.
    pub worst_case_gap: f64,
    pub corollary: CorollaryConstants,
    pub corollary_bound_at_horizon: f64,
}

/// Bounds that need no simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub scenario: String,
    pub market: MarketConfig,
    pub exploration: ExplorationPlan,
    pub reference_exploration: Vec<ReferenceLength>,
    pub agents: Vec<AgentBoundReport>,
}

pub fn bound_report(config: &ExperimentConfig) -> Result<BoundReport> {
    let prepared = prepare(config)?;
    let market = &config.scenario.market;
    let agents = (0..market.agents)
        .map(|i| {
            let inputs = BoundInputs::for_agent(market, i, prepared.plan.rounds);
            let worst_case_gap = 2.0 * market.x_max[i] * prepared.env.params.theta(i).norm();
            let corollary = corollary_constants(&inputs, worst_case_gap);
            AgentBoundReport {
                agent: i + 1,
                invalid_ranking_bound: invalid_ranking_bound(&inputs),
                worst_case_gap,
                corollary,
                corollary_bound_at_horizon: corollary.bound(market.horizon as f64),
            }
        })
        .collect();
    Ok(BoundReport {
        scenario: config.scenario.name.clone(),
        market: market.clone(),
        exploration: prepared.plan,
        reference_exploration: config.scenario.reference.clone(),
        agents,
    })
}

/// Run every replication and optionally write `regret.csv` and
/// `diagnostics.json` into `out_dir`. Replications run in parallel in
/// batches; results are consumed in replication order.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    let prepared = prepare(config)?;
    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w =
                csv::Writer::from_writer(BufWriter::new(File::create(dir.join("regret.csv"))?));
            w.write_record(CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let batch = (rayon::current_num_threads() * 2).max(1);
    let mut summaries: Vec<ReplicationSummary> = Vec::with_capacity(config.replications);
    for start in (0..config.replications).step_by(batch) {
        let end = (start + batch).min(config.replications);
        let mut chunk = (start..end)
            .into_par_iter()
            .map(|r| run_replication(config, &prepared, r))
            .collect::<Result<Vec<_>>>()?;
        for s in &mut chunk {
            if let Some(w) = writer.as_mut() {
                write_rows(w, s)?;
            }
            s.assigned = Vec::new();
            s.oracle = Vec::new();
        }
        summaries.extend(chunk);
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }

    let traces: Vec<RegretTrace> = summaries.iter().map(|s| s.trace.clone()).collect();
    let bands = aggregate_replications(&traces)?;
    let diagnostics = diagnose_summaries(config, &prepared, &summaries);
    if let Some(dir) = out_dir {
        let mut f = BufWriter::new(File::create(dir.join("diagnostics.json"))?);
        serde_json::to_writer_pretty(&mut f, &diagnostics)?;
        writeln!(f)?;
        f.flush()?;
    }
    Ok(ExperimentResult {
        diagnostics,
        bands,
        traces,
    })
}

pub fn diagnose_summaries(
    config: &ExperimentConfig,
    prepared: &Prepared,
    summaries: &[ReplicationSummary],
) -> Diagnostics {
    let market = &config.scenario.market;
    let exploit_total: usize = summaries.iter().map(|s| s.exploitation_rounds).sum();
    let matched: usize = summaries.iter().map(|s| s.matched_rounds).sum();
    let agents = (0..market.agents)
        .map(|i| {
            let inputs = BoundInputs::for_agent(market, i, prepared.plan.rounds);
            let max_gap = summaries.iter().map(|s| s.max_gap[i]).fold(0.0, f64::max);
            let corollary = corollary_constants(&inputs, max_gap);
            let finals: Vec<f64> = summaries
                .iter()
                .map(|s| s.trace.cumulative[i].last().copied().unwrap_or(0.0))
                .collect();
            let invalid: Vec<bool> = summaries
                .iter()
                .filter_map(|s| s.first_exploit_invalid.as_ref().map(|f| f[i]))
                .collect();
            AgentDiagnostics {
                agent: i + 1,
                invalid_ranking_bound: invalid_ranking_bound(&inputs),
                corollary,
                corollary_bound_at_horizon: corollary.bound(market.horizon as f64),
                upper_bound_mean: UpperBound {
                    exploration: mean(summaries.iter().map(|s| s.upper_bound[i].exploration)),
                    exploitation: mean(summaries.iter().map(|s| s.upper_bound[i].exploitation)),
                },
                mean_final_regret: mean(finals.iter().copied()),
                min_final_regret: finals.iter().copied().fold(f64::INFINITY, f64::min),
                max_final_regret: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                invalid_first_exploit_frequency: (!invalid.is_empty())
                    .then(|| invalid.iter().filter(|&&b| b).count() as f64 / invalid.len() as f64),
                margin_violation_rounds: summaries.iter().map(|s| s.margin[i].below_assumed).sum(),
                tie_rounds: summaries.iter().map(|s| s.margin[i].ties).sum(),
                min_realized_gap: summaries
                    .iter()
                    .filter_map(|s| s.margin[i].min_gap)
                    .reduce(f64::min),
            }
        })
        .collect();
    let lower: Vec<f64> = summaries.iter().filter_map(|s| s.lower_bound).collect();
    Diagnostics {
        scenario: config.scenario.name.clone(),
        replications: summaries.len(),
        seed: config.seed,
        market: market.clone(),
        zeta: config.scenario.zeta(),
        exploration: prepared.plan.clone(),
        reference_exploration: config.scenario.reference.clone(),
        exploitation_match_rate: (exploit_total > 0).then(|| matched as f64 / exploit_total as f64),
        optimal_changes: summaries
            .iter()
            .map(|s| s.trace.optimal_changed.iter().filter(|&&c| c).count())
            .sum(),
        agents,
        lower_bound_mean: (!lower.is_empty()).then(|| mean(lower.into_iter())),
    }
}
