//! One-to-one two-sided matching with complete, strict preference lists.
//!
//! Agents propose (deferred acceptance), arms hold a fixed and known
//! ranking over agents. All indices are zero-based: agent `i` is `p_{i+1}`
//! and arm `j` is `a_{j+1}` in the usual notation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest arm count accepted by [`enumerate_stable_matchings`].
pub const ENUMERATION_LIMIT: usize = 6;

fn check_permutation(order: &[usize], what: &str) -> Result<Vec<usize>> {
    let mut position = vec![usize::MAX; order.len()];
    for (rank, &item) in order.iter().enumerate() {
        if item >= order.len() {
            return Err(Error::InvalidInput(format!(
                "{what}: index {item} out of range 0..{}",
                order.len()
            )));
        }
        if position[item] != usize::MAX {
            return Err(Error::InvalidInput(format!(
                "{what}: index {item} repeated"
            )));
        }
        position[item] = rank;
    }
    Ok(position)
}

/// An agent's strict ordering of all arms, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ranking {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::InvalidInput(
                "ranking must contain at least one arm".into(),
            ));
        }
        let position = check_permutation(&order, "ranking")?;
        Ok(Self { order, position })
    }

    /// Ranking `0, 1, ..., k-1`.
    pub fn identity(k: usize) -> Self {
        Self::new((0..k).collect()).expect("identity permutation")
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn top(&self) -> usize {
        self.order[0]
    }

    /// Zero-based position of `arm` in this ranking.
    pub fn position(&self, arm: usize) -> usize {
        self.position[arm]
    }

    /// `true` iff `a` is ranked strictly above `b`.
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }
}

impl TryFrom<Vec<usize>> for Ranking {
    type Error = Error;

    fn try_from(order: Vec<usize>) -> Result<Self> {
        Ranking::new(order)
    }
}

impl From<Ranking> for Vec<usize> {
    fn from(r: Ranking) -> Self {
        r.order
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for arm in &self.order {
            if !first {
                write!(f, ">")?;
            }
            write!(f, "a{}", arm + 1)?;
            first = false;
        }
        Ok(())
    }
}

/// Every arm's fixed ranking over agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct ArmPreferenceProfile {
    lists: Vec<Vec<usize>>,
    ranks: Vec<Vec<usize>>,
}

impl ArmPreferenceProfile {
    /// `lists[j]` is arm `j`'s ordering of agents, most preferred first.
    pub fn new(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("arm preference profile has no arms".into()))?;
        if n == 0 {
            return Err(Error::InvalidInput("arm preference lists are empty".into()));
        }
        let mut ranks = Vec::with_capacity(lists.len());
        for (j, list) in lists.iter().enumerate() {
            if list.len() != n {
                return Err(Error::InvalidInput(format!(
                    "arm a{} ranks {} agents, expected {n}",
                    j + 1,
                    list.len()
                )));
            }
            ranks.push(check_permutation(
                list,
                &format!("preference of arm a{}", j + 1),
            )?);
        }
        Ok(Self { lists, ranks })
    }

    /// Every arm ranks agents `p1 > p2 > ... > pN`.
    pub fn global(agents: usize, arms: usize) -> Self {
        Self::new(vec![(0..agents).collect(); arms]).expect("global profile is well formed")
    }

    pub fn agents(&self) -> usize {
        self.lists[0].len()
    }

    pub fn arms(&self) -> usize {
        self.lists.len()
    }

    pub fn list(&self, arm: usize) -> &[usize] {
        &self.lists[arm]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// `true` iff `arm` strictly prefers agent `a` over agent `b`.
    pub fn prefers(&self, arm: usize, a: usize, b: usize) -> bool {
        self.ranks[arm][a] < self.ranks[arm][b]
    }

    /// All arms share one ordering of agents.
    pub fn is_global(&self) -> bool {
        self.lists.windows(2).all(|w| w[0] == w[1])
    }
}

impl TryFrom<Vec<Vec<usize>>> for ArmPreferenceProfile {
    type Error = Error;

    fn try_from(lists: Vec<Vec<usize>>) -> Result<Self> {
        ArmPreferenceProfile::new(lists)
    }
}

impl From<ArmPreferenceProfile> for Vec<Vec<usize>> {
    fn from(p: ArmPreferenceProfile) -> Self {
        p.lists
    }
}

/// Injective, total assignment of agents to arms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Matching {
    arm_of: Vec<usize>,
    arms: usize,
}

impl Matching {
    pub fn new(arm_of: Vec<usize>, arms: usize) -> Result<Self> {
        let mut taken = vec![false; arms];
        for (i, &arm) in arm_of.iter().enumerate() {
            if arm >= arms {
                return Err(Error::InvalidInput(format!(
                    "agent p{} assigned to arm {} but only {arms} arms exist",
                    i + 1,
                    arm + 1
                )));
            }
            if taken[arm] {
                return Err(Error::InvalidInput(format!(
                    "matching is not injective: arm a{} assigned twice",
                    arm + 1
                )));
            }
            taken[arm] = true;
        }
        Ok(Self { arm_of, arms })
    }

    pub fn arm_of(&self, agent: usize) -> usize {
        self.arm_of[agent]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.arm_of
    }

    pub fn agents(&self) -> usize {
        self.arm_of.len()
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    /// Agent holding `arm`, if any.
    pub fn partner_of(&self, arm: usize) -> Option<usize> {
        self.arm_of.iter().position(|&a| a == arm)
    }

    /// `(agent, arm)` pairs in agent order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arm_of.iter().copied().enumerate()
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, arm) in self.pairs() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "(p{}, a{})", i + 1, arm + 1)?;
        }
        write!(f, "}}")
    }
}

fn validate_market(rankings: &[Ranking], arm_prefs: &ArmPreferenceProfile) -> Result<()> {
    let n = rankings.len();
    let k = arm_prefs.arms();
    if n == 0 {
        return Err(Error::InvalidInput("no agents submitted rankings".into()));
    }
    if n != arm_prefs.agents() {
        return Err(Error::InvalidInput(format!(
            "{n} rankings submitted but arms rank {} agents",
            arm_prefs.agents()
        )));
    }
    if n > k {
        return Err(Error::InvalidInput(format!(
            "more agents ({n}) than arms ({k})"
        )));
    }
    for (i, r) in rankings.iter().enumerate() {
        if r.len() != k {
            return Err(Error::InvalidInput(format!(
                "ranking of p{} covers {} arms, expected {k}",
                i + 1,
                r.len()
            )));
        }
    }
    Ok(())
}

/// Agent-proposing deferred acceptance.
///
/// Free agents propose in ascending index order, one proposal per free agent
/// per sweep. The result is the agent-optimal stable matching for the
/// submitted rankings, which does not depend on proposal order.
pub fn gale_shapley(rankings: &[Ranking], arm_prefs: &ArmPreferenceProfile) -> Result<Matching> {
    validate_market(rankings, arm_prefs)?;
    let n = rankings.len();
    let k = arm_prefs.arms();

    let mut next_choice = vec![0usize; n];
    let mut holder: Vec<Option<usize>> = vec![None; k];
    let mut engaged: Vec<Option<usize>> = vec![None; n];

    loop {
        let mut proposed = false;
        for agent in 0..n {
            if engaged[agent].is_some() {
                continue;
            }
            // Complete lists with n <= k: a free agent never runs out of arms.
            let arm = rankings[agent].as_slice()[next_choice[agent]];
            next_choice[agent] += 1;
            proposed = true;
            match holder[arm] {
                None => {
                    holder[arm] = Some(agent);
                    engaged[agent] = Some(arm);
                }
                Some(current) if arm_prefs.prefers(arm, agent, current) => {
                    holder[arm] = Some(agent);
                    engaged[agent] = Some(arm);
                    engaged[current] = None;
                }
                Some(_) => {}
            }
        }
        if !proposed {
            break;
        }
    }

    let arm_of = engaged
        .into_iter()
        .map(|a| a.expect("every agent is matched when N <= K"))
        .collect();
    Matching::new(arm_of, k)
}

/// Pairs `(agent, arm)` that would both rather be matched to each other.
///
/// Returned sorted by agent, then by arm. Empty iff `m` is stable.
pub fn find_blocking_pairs(
    m: &Matching,
    rankings: &[Ranking],
    arm_prefs: &ArmPreferenceProfile,
) -> Result<Vec<(usize, usize)>> {
    validate_market(rankings, arm_prefs)?;
    if m.agents() != rankings.len() || m.arms() != arm_prefs.arms() {
        return Err(Error::InvalidInput(format!(
            "matching covers {} agents / {} arms, market has {} / {}",
            m.agents(),
            m.arms(),
            rankings.len(),
            arm_prefs.arms()
        )));
    }
    let mut holder = vec![None; arm_prefs.arms()];
    for (agent, arm) in m.pairs() {
        holder[arm] = Some(agent);
    }

    let mut blocking = Vec::new();
    for (agent, ranking) in rankings.iter().enumerate() {
        let current = m.arm_of(agent);
        let mut arms: Vec<usize> = ranking
            .as_slice()
            .iter()
            .copied()
            .take_while(|&arm| arm != current)
            .filter(|&arm| match holder[arm] {
                None => true,
                Some(other) => arm_prefs.prefers(arm, agent, other),
            })
            .collect();
        arms.sort_unstable();
        blocking.extend(arms.into_iter().map(|arm| (agent, arm)));
    }
    Ok(blocking)
}

/// Every stable matching, in lexicographic order of the agent-to-arm vector.
///
/// Exhaustive search over all injective maps; intended as a test oracle.
pub fn enumerate_stable_matchings(
    rankings: &[Ranking],
    arm_prefs: &ArmPreferenceProfile,
) -> Result<Vec<Matching>> {
    validate_market(rankings, arm_prefs)?;
    let k = arm_prefs.arms();
    if k > ENUMERATION_LIMIT {
        return Err(Error::Capacity {
            what: "arm count",
            value: k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let n = rankings.len();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; k];
    enumerate_into(n, k, &mut current, &mut used, &mut |assignment| {
        let m = Matching::new(assignment.to_vec(), k)?;
        if find_blocking_pairs(&m, rankings, arm_prefs)?.is_empty() {
            out.push(m);
        }
        Ok(())
    })?;
    Ok(out)
}

fn enumerate_into(
    n: usize,
    k: usize,
    current: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if current.len() == n {
        return visit(current);
    }
    for arm in 0..k {
        if used[arm] {
            continue;
        }
        used[arm] = true;
        current.push(arm);
        enumerate_into(n, k, current, used, visit)?;
        current.pop();
        used[arm] = false;
    }
    Ok(())
}
