//! Connection recommenders and feed rankers.
//!
//! The well-being-aware ranker is a two-level hierarchy: a rule cascade
//! (optionally overridden by an epsilon-greedy bandit) picks one objective
//! per user and step, and the objective's per-item scoring rule drives a
//! greedy selection under a predicted-satisfaction floor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::UserState;
use crate::content::{Aspect, ContentItem, DetectorParams, ItemId};
use crate::cwb::{opinion_bin, satisfaction};
use crate::error::{Error, Result};
use crate::network::{common_neighbors, sorted_intersection_len, SocialGraph, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    Random,
    Overlap,
    Diversified,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Random => "random",
            ConnectionKind::Overlap => "overlap",
            ConnectionKind::Diversified => "diversified",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConnectionRecommender {
    pub kind: ConnectionKind,
    /// Neighborhood order for [`ConnectionKind::Overlap`]; 2 = common friends.
    pub order: usize,
}

impl ConnectionRecommender {
    pub fn new(kind: ConnectionKind) -> Self {
        Self { kind, order: 2 }
    }

    pub fn recommend<R: Rng + ?Sized>(
        &self,
        g: &SocialGraph,
        u: UserId,
        opinions: &[f64],
        rng: &mut R,
    ) -> Result<Option<UserId>> {
        recommend_connection(g, u, self.kind, self.order, opinions, rng)
    }
}

/// Nodes within `radius` hops of `v`, excluding `v`, sorted.
fn ball(g: &SocialGraph, v: UserId, radius: usize) -> Vec<UserId> {
    let mut out: Vec<UserId> = g
        .bfs_distances(v)
        .into_iter()
        .enumerate()
        .filter_map(|(w, d)| d.filter(|&d| d >= 1 && d <= radius).map(|_| w))
        .collect();
    out.sort_unstable();
    out
}

/// Neighborhood overlap of order `order` between `a` and `b`.
pub fn neighborhood_overlap(g: &SocialGraph, a: UserId, b: UserId, order: usize) -> Result<usize> {
    if order <= 2 {
        return common_neighbors(g, a, b);
    }
    let radius = order - 1;
    let (ba, bb) = (ball(g, a, radius), ball(g, b, radius));
    let shared = sorted_intersection_len(&ba, &bb);
    // The endpoints themselves are not shared context.
    let endpoints = usize::from(bb.binary_search(&a).is_ok() && ba.binary_search(&a).is_ok())
        + usize::from(ba.binary_search(&b).is_ok() && bb.binary_search(&b).is_ok());
    Ok(shared - endpoints)
}

/// Proposes a new contact for `u` among users it is not yet connected to.
/// Deterministic kinds break ties toward the smallest id.
pub fn recommend_connection<R: Rng + ?Sized>(
    g: &SocialGraph,
    u: UserId,
    kind: ConnectionKind,
    order: usize,
    opinions: &[f64],
    rng: &mut R,
) -> Result<Option<UserId>> {
    if !g.contains(u) {
        return Err(Error::NotFound(format!("user {u}")));
    }
    if opinions.len() != g.node_count() {
        return Err(Error::InvalidInput(format!(
            "expected {} opinions, got {}",
            g.node_count(),
            opinions.len()
        )));
    }
    let neighbors = g.neighbors(u);
    let eligible: Vec<UserId> = (0..g.node_count())
        .filter(|&v| v != u && neighbors.binary_search(&v).is_err())
        .collect();
    if eligible.is_empty() {
        return Ok(None);
    }
    let pick = match kind {
        ConnectionKind::Random => eligible[rng.random_range(0..eligible.len())],
        ConnectionKind::Overlap => {
            let mut best = (0usize, eligible[0]);
            let mut first = true;
            for &v in &eligible {
                let score = neighborhood_overlap(g, u, v, order)?;
                if first || score > best.0 {
                    best = (score, v);
                    first = false;
                }
            }
            best.1
        }
        ConnectionKind::Diversified => {
            let ou = opinions[u];
            let mut best = (f64::NEG_INFINITY, eligible[0]);
            for &v in &eligible {
                let d = (opinions[v] - ou).abs();
                if d > best.0 {
                    best = (d, v);
                }
            }
            best.1
        }
    };
    Ok(Some(pick))
}

/// The `k` most recent items, newest step first, lower id first within a step.
pub fn rank_chronological<'a>(pool: &[&'a ContentItem], k: usize) -> Vec<&'a ContentItem> {
    let mut sorted = pool.to_vec();
    sorted.sort_by(|a, b| b.step.cmp(&a.step).then(a.id.cmp(&b.id)));
    sorted.truncate(k);
    sorted
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    ReduceExtremityExposure,
    IncreaseDiversity,
    MaintainEngagement,
}

impl Objective {
    pub const ALL: [Objective; 3] = [
        Objective::ReduceExtremityExposure,
        Objective::IncreaseDiversity,
        Objective::MaintainEngagement,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveThresholds {
    /// Windowed extremity exposure above which exposure is reduced.
    pub tau_ext: f64,
    /// Feed diversity below which diversity is increased.
    pub tau_div: f64,
}

impl Default for ObjectiveThresholds {
    fn default() -> Self {
        Self {
            tau_ext: 0.5,
            tau_div: 0.3,
        }
    }
}

/// Per-user signals the objective cascade reads.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveSignals {
    pub extremity_exposure: Option<f64>,
    pub diversity: Option<f64>,
}

impl ObjectiveSignals {
    pub fn from_user(u: &UserState, extremity_aspect: Option<usize>, window: usize) -> Self {
        Self {
            extremity_exposure: extremity_aspect.and_then(|a| u.ce_window.weighted_mean(a, window)),
            diversity: u.windowed_diversity(window),
        }
    }
}

pub fn select_objective(s: &ObjectiveSignals, t: &ObjectiveThresholds) -> Objective {
    let Some(ext) = s.extremity_exposure else {
        return Objective::MaintainEngagement;
    };
    if ext > t.tau_ext {
        return Objective::ReduceExtremityExposure;
    }
    match s.diversity {
        Some(d) if d < t.tau_div => Objective::IncreaseDiversity,
        _ => Objective::MaintainEngagement,
    }
}

/// What an objective's scoring rule needs to know about the user.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoringContext {
    pub opinion: f64,
    pub d_backfire: f64,
    pub bins: usize,
    /// Share of each opinion bin in the user's recent exposure, with the
    /// user's own opinion counted once.
    pub bin_share: Vec<f64>,
}

impl ScoringContext {
    pub fn new(opinion: f64, d_backfire: f64, bins: usize, recent_exposure: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0.0; bins];
        counts[opinion_bin(opinion, bins)] += 1.0;
        for o in recent_exposure {
            counts[opinion_bin(o, bins)] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        Self {
            opinion,
            d_backfire,
            bins,
            bin_share: counts.into_iter().map(|c| c / total).collect(),
        }
    }

    pub fn for_user(u: &UserState, d_backfire: f64, bins: usize, window: usize) -> Self {
        Self::new(u.opinion, d_backfire, bins, u.ce_window.events(window).map(|e| e.opinion))
    }

    /// Additive score of an item; `None` when the objective excludes it.
    pub fn score(&self, obj: Objective, item: &ContentItem, detectors: &DetectorParams) -> Option<f64> {
        let distance = (item.opinion - self.opinion).abs();
        match obj {
            Objective::ReduceExtremityExposure => {
                let ext = item
                    .perceived_score(&Aspect::extremity(), detectors)
                    .unwrap_or(item.opinion.abs());
                Some(1.0 - ext)
            }
            Objective::IncreaseDiversity => {
                (distance < self.d_backfire).then(|| 1.0 - self.bin_share[opinion_bin(item.opinion, self.bins)])
            }
            Objective::MaintainEngagement => Some(1.0 - distance / 2.0),
        }
    }
}

/// A scored candidate for greedy selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub id: ItemId,
    pub score: f64,
    pub opinion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Selected ids in pick order.
    pub ids: Vec<ItemId>,
    pub score: f64,
    /// The satisfaction floor could not be met by any non-empty feed.
    pub floor_infeasible: bool,
}

fn predicted_satisfaction(opinion: f64, feed: &[f64]) -> f64 {
    satisfaction(opinion, feed).map_or(1.0, |s| s.value)
}

/// Greedy forward selection of up to `k` candidates maximizing the summed
/// score, keeping predicted satisfaction at or above `floor` when given.
/// Ties go to the smaller id. If no single candidate meets the floor the
/// `k` most satisfying candidates are returned and the result is flagged.
pub fn greedy_select(candidates: &[Candidate], user_opinion: f64, k: usize, floor: Option<f64>) -> Selection {
    let mut remaining: Vec<Candidate> = candidates.to_vec();
    remaining.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let mut picked: Vec<Candidate> = Vec::with_capacity(k);
    let mut opinions: Vec<f64> = Vec::with_capacity(k);

    while picked.len() < k {
        let pos = remaining.iter().position(|c| match floor {
            None => true,
            Some(f) => {
                opinions.push(c.opinion);
                let ok = predicted_satisfaction(user_opinion, &opinions) >= f;
                opinions.pop();
                ok
            }
        });
        let Some(pos) = pos else { break };
        let c = remaining.remove(pos);
        opinions.push(c.opinion);
        picked.push(c);
    }

    if picked.is_empty() && !candidates.is_empty() && k > 0 {
        let mut by_closeness = candidates.to_vec();
        by_closeness.sort_by(|a, b| {
            (a.opinion - user_opinion)
                .abs()
                .total_cmp(&(b.opinion - user_opinion).abs())
                .then(a.id.cmp(&b.id))
        });
        by_closeness.truncate(k);
        return Selection {
            score: by_closeness.iter().map(|c| c.score).sum(),
            ids: by_closeness.iter().map(|c| c.id).collect(),
            floor_infeasible: true,
        };
    }

    Selection {
        score: picked.iter().map(|c| c.score).sum(),
        ids: picked.iter().map(|c| c.id).collect(),
        floor_infeasible: false,
    }
}

/// Well-being-aware re-ranking of a candidate pool for one user.
pub fn cwbrs_rerank<'a>(
    pool: &[&'a ContentItem],
    ctx: &ScoringContext,
    obj: Objective,
    k: usize,
    s_min: Option<f64>,
    detectors: &DetectorParams,
) -> (Vec<&'a ContentItem>, Selection) {
    let candidates: Vec<Candidate> = pool
        .iter()
        .filter_map(|it| {
            ctx.score(obj, it, detectors).map(|score| Candidate {
                id: it.id,
                score,
                opinion: it.opinion,
            })
        })
        .collect();
    let selection = greedy_select(&candidates, ctx.opinion, k, s_min);
    let feed = selection
        .ids
        .iter()
        .filter_map(|id| pool.iter().find(|it| it.id == *id).copied())
        .collect();
    (feed, selection)
}

/// Epsilon-greedy bandit over a fixed set of arms.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonGreedy {
    pub epsilon: f64,
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl EpsilonGreedy {
    pub fn new(arms: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if arms == 0 {
            return Err(Error::InvalidInput("bandit needs at least one arm".into()));
        }
        Ok(Self {
            epsilon,
            counts: vec![0; arms],
            means: vec![0.0; arms],
        })
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm]
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    /// With `epsilon = 0` the bandit is disabled and `default_arm` is
    /// returned unchanged. Otherwise explore uniformly with probability
    /// epsilon, else exploit: untried arms first, then the best mean. Ties
    /// are broken uniformly at random.
    pub fn select<R: Rng + ?Sized>(&self, default_arm: usize, rng: &mut R) -> usize {
        if self.epsilon == 0.0 {
            return default_arm;
        }
        if rng.random::<f64>() < self.epsilon {
            return rng.random_range(0..self.arms());
        }
        let untried: Vec<usize> = (0..self.arms()).filter(|&a| self.counts[a] == 0).collect();
        let tied = if untried.is_empty() {
            let best = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..self.arms()).filter(|&a| self.means[a] == best).collect()
        } else {
            untried
        };
        tied[rng.random_range(0..tied.len())]
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.means[arm] += (reward - self.means[arm]) / self.counts[arm] as f64;
    }
}

/// Bandit layer over the objective cascade.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveBandit(EpsilonGreedy);

impl ObjectiveBandit {
    pub fn new(epsilon: f64) -> Result<Self> {
        EpsilonGreedy::new(Objective::ALL.len(), epsilon).map(Self)
    }

    pub fn select<R: Rng + ?Sized>(&self, rule_choice: Objective, rng: &mut R) -> Objective {
        Objective::ALL[self.0.select(rule_choice.index(), rng)]
    }

    pub fn update(&mut self, objective: Objective, reward: f64) {
        self.0.update(objective.index(), reward);
    }

    pub fn stats(&self) -> &EpsilonGreedy {
        &self.0
    }
}

/// Running-mean update of the objective bandit with a realized one-step
/// CWB delta.
pub fn objective_bandit_update(stats: &mut ObjectiveBandit, objective: Objective, cwb_delta: f64) {
    stats.update(objective, cwb_delta);
}
