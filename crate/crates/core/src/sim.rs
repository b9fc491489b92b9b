//! Deterministic simulation engine.
//!
//! A step runs six phases in fixed order: posting, candidate-pool assembly,
//! feed ranking, opinion updates, connection recommendation, metric
//! recording. Every stochastic draw uses a stream keyed on
//! `(run seed, user or item, step, phase)`, and phases that read other
//! users' state read the snapshot taken at the start of the step, so the
//! committed state does not depend on the order users are visited in.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::agents::{accept_connection, apply_feed, generate_post, UserState};
use crate::config::{Arm, RankerKind, SimConfig};
use crate::content::{sample_toxicity, Aspect, ContentItem, ItemId, Polarity, Source, EXTREMITY};
use crate::cwb::{
    contact_creation, cwb_total, feed_diversity_entropy, satisfaction, shifted_mean, ContactParams, CwbInput, CwbReport, Event,
};
use crate::error::{Error, Result};
use crate::network::{generate_homophily_pa, NetworkMeasures, SocialGraph, UserId};
use crate::par::{self, Execution};
use crate::recommenders::{
    cwbrs_rerank, rank_chronological, select_objective, Objective, ObjectiveBandit, ObjectiveSignals, ScoringContext,
};
use crate::rng::{run_seed, stream, user_stream, Phase};

/// Metrics recorded once per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Satisfaction,
    RawDistance,
    Diversity,
    Edges,
    CwbTotal,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Satisfaction,
        Metric::RawDistance,
        Metric::Diversity,
        Metric::Edges,
        Metric::CwbTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Satisfaction => "satisfaction",
            Metric::RawDistance => "raw_distance",
            Metric::Diversity => "diversity",
            Metric::Edges => "edges",
            Metric::CwbTotal => "cwb_total",
        }
    }
}

/// Community-level metrics after one step. Undefined values are NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub satisfaction: f64,
    pub raw_distance: f64,
    pub diversity: f64,
    pub edges: usize,
    pub cwb_total: f64,
    /// Users whose feed could not meet the satisfaction floor.
    pub floor_infeasible: usize,
}

impl StepRecord {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Satisfaction => self.satisfaction,
            Metric::RawDistance => self.raw_distance,
            Metric::Diversity => self.diversity,
            Metric::Edges => self.edges as f64,
            Metric::CwbTotal => self.cwb_total,
        }
    }

    /// Exact equality that treats NaN as equal to NaN.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.step == other.step
            && self.edges == other.edges
            && self.floor_infeasible == other.floor_infeasible
            && Metric::ALL
                .iter()
                .all(|&m| self.get(m).to_bits() == other.get(m).to_bits())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.records.iter().zip(&other.records).all(|(a, b)| a.bit_eq(b))
    }
}

/// Full mutable state of one run.
#[derive(Clone, Debug)]
pub struct SimState {
    pub step: usize,
    pub graph: SocialGraph,
    pub users: Vec<UserState>,
    /// Item store; an item's id is its index.
    pub items: Vec<ContentItem>,
    /// Item ids shown to each user in the last step.
    pub feeds: Vec<Vec<ItemId>>,
    pub posts_emitted: usize,
    pub exogenous_injected: usize,
    /// Objective chosen for each user in the last step (well-being ranker).
    pub objectives: Vec<Option<Objective>>,
    pub last_report: Option<CwbReport>,
    run_seed: u64,
    /// Internal posts per author, newest last, as `(step, id)`.
    recent_posts: Vec<VecDeque<(usize, ItemId)>>,
    /// CC values per step over the metric window.
    contacts: VecDeque<Vec<f64>>,
    bandit: Option<ObjectiveBandit>,
    prev_user_cwb: Vec<Option<f64>>,
}

/// Double-buffered read view for one step.
struct Snapshot {
    graph: SocialGraph,
    opinions: Vec<f64>,
}

impl SimState {
    /// Draws opinions, resilience and the initial graph from `seed`.
    pub fn init(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.graph.n;
        let mut rng = stream(seed, &[Phase::Init as u64]);
        let opinions: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let resilience: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut grng = stream(seed, &[Phase::Graph as u64]);
        let graph = generate_homophily_pa(n, cfg.graph.m, &opinions, cfg.graph.h, &mut grng)?;
        let users = (0..n)
            .map(|i| UserState::new(i, opinions[i], resilience[i], cfg.cwb.window))
            .collect();
        let bandit = (cfg.feed.bandit_epsilon > 0.0)
            .then(|| ObjectiveBandit::new(cfg.feed.bandit_epsilon))
            .transpose()?;
        Ok(Self {
            step: 0,
            graph,
            users,
            items: Vec::new(),
            feeds: vec![Vec::new(); n],
            posts_emitted: 0,
            exogenous_injected: 0,
            objectives: vec![None; n],
            last_report: None,
            run_seed: seed,
            recent_posts: vec![VecDeque::new(); n],
            contacts: VecDeque::new(),
            bandit,
            prev_user_cwb: vec![None; n],
        })
    }

    pub fn opinions(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.opinion).collect()
    }

    pub fn resilience(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.resilience).collect()
    }

    pub fn bandit(&self) -> Option<&ObjectiveBandit> {
        self.bandit.as_ref()
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            graph: self.graph.clone(),
            opinions: self.opinions(),
        }
    }

    fn event_for(&self, item: &ContentItem, cfg: &SimConfig) -> Event {
        let scores = cfg
            .cwb
            .aspects
            .iter()
            .map(|a| {
                let aspect = Aspect::new(a.name.clone(), a.polarity);
                let s = if cfg.cwb.use_detected {
                    item.perceived_score(&aspect, &cfg.detectors)
                } else {
                    crate::content::true_aspect_score(item, &aspect)
                };
                s.unwrap_or(0.0)
            })
            .collect();
        let weight = if item.is_external() {
            cfg.cwb.exogenous_weight
        } else {
            1.0
        };
        Event {
            scores,
            weight,
            opinion: item.opinion,
        }
    }

    fn push_item(&mut self, mut item: ContentItem, cfg: &SimConfig) -> ItemId {
        let id = self.items.len() as ItemId;
        item.id = id;
        let mut rng = stream(self.run_seed, &[Phase::Detect as u64, id]);
        item.run_detectors(&cfg.detectors, &mut rng);
        self.items.push(item);
        id
    }

    /// Executes one step for `arm`.
    pub fn step(&mut self, cfg: &SimConfig, arm: &Arm) -> Result<StepRecord> {
        let t = self.step;
        let n = self.users.len();
        let seed = self.run_seed;
        let snap = self.snapshot();
        let dyn_p = &cfg.dynamics;

        // (1) posting and exogenous injection
        let mut shared: Vec<Vec<Event>> = vec![Vec::new(); n];
        for u in 0..n {
            let mut rng = user_stream(seed, u, t, Phase::Post);
            let post = generate_post(&self.users[u], dyn_p, 0, t, cfg.content.toxicity_prevalence, &mut rng);
            if let Some(item) = post {
                let id = self.push_item(item, cfg);
                self.posts_emitted += 1;
                self.recent_posts[u].push_back((t, id));
                shared[u].push(self.event_for(&self.items[id as usize], cfg));
            }
            let horizon = t.saturating_sub(cfg.content.pool_window - 1);
            while self.recent_posts[u].front().is_some_and(|&(s, _)| s < horizon) {
                self.recent_posts[u].pop_front();
            }
        }
        let mut exogenous: Vec<Vec<ItemId>> = vec![Vec::new(); n];
        if cfg.content.exogenous_per_user > 0 {
            let (lo, hi) = (cfg.content.exogenous_opinion_min, cfg.content.exogenous_opinion_max);
            for (u, pool) in exogenous.iter_mut().enumerate() {
                let mut rng = user_stream(seed, u, t, Phase::Exogenous);
                for _ in 0..cfg.content.exogenous_per_user {
                    let opinion = rng.random_range(lo..=hi);
                    let tox = sample_toxicity(cfg.content.exogenous_toxicity_prevalence, &mut rng);
                    let item = ContentItem::new(0, None, t, opinion, tox, Source::External);
                    pool.push(self.push_item(item, cfg));
                    self.exogenous_injected += 1;
                }
            }
        }
        for (u, events) in shared.into_iter().enumerate() {
            self.users[u].cs_window.push_step(t, events);
        }

        // (2) candidate pools from the phase-start graph
        let pools: Vec<Vec<ItemId>> = (0..n)
            .map(|u| {
                let mut pool: Vec<ItemId> = snap
                    .graph
                    .neighbors(u)
                    .iter()
                    .flat_map(|&v| self.recent_posts[v].iter().map(|&(_, id)| id))
                    .collect();
                pool.extend(&exogenous[u]);
                pool.sort_unstable();
                pool
            })
            .collect();

        // (3) ranking
        let ext_idx = cfg.cwb.aspect_index(EXTREMITY);
        let mut floor_infeasible = 0;
        let mut feeds: Vec<Vec<ItemId>> = Vec::with_capacity(n);
        for (u, pool_ids) in pools.iter().enumerate() {
            let pool: Vec<&ContentItem> = pool_ids.iter().map(|&id| &self.items[id as usize]).collect();
            let feed: Vec<ItemId> = match arm.ranker {
                RankerKind::Chronological => rank_chronological(&pool, cfg.feed.k).iter().map(|i| i.id).collect(),
                RankerKind::Cwbrs => {
                    let user = &self.users[u];
                    let signals = ObjectiveSignals::from_user(user, ext_idx, cfg.cwb.window);
                    let mut obj = select_objective(&signals, &cfg.feed.objectives);
                    if let Some(b) = &self.bandit {
                        let mut rng = user_stream(seed, u, t, Phase::Bandit);
                        obj = b.select(obj, &mut rng);
                    }
                    self.objectives[u] = Some(obj);
                    let ctx = ScoringContext::for_user(user, dyn_p.d_backfire, cfg.cwb.bins, cfg.cwb.window);
                    let (feed, sel) =
                        cwbrs_rerank(&pool, &ctx, obj, cfg.feed.k, Some(cfg.feed.s_min), &cfg.detectors);
                    floor_infeasible += usize::from(sel.floor_infeasible);
                    feed.iter().map(|i| i.id).collect()
                }
            };
            feeds.push(feed);
        }

        // (4) exposure and opinion updates, user id ascending
        let mut sat_sum = (0.0, 0.0, 0usize);
        let mut div_sum = (0.0, 0usize);
        let mut feed_opinions: Vec<Vec<f64>> = Vec::with_capacity(n);
        for u in 0..n {
            let ops: Vec<f64> = feeds[u].iter().map(|&id| self.items[id as usize].opinion).collect();
            let events: Vec<Event> = feeds[u]
                .iter()
                .map(|&id| self.event_for(&self.items[id as usize], cfg))
                .collect();
            let own = snap.opinions[u];
            let sat = satisfaction(own, &ops);
            let div = feed_diversity_entropy(ops.iter().copied(), cfg.cwb.bins);
            if let Some(s) = sat {
                sat_sum = (sat_sum.0 + s.value, sat_sum.1 + s.raw, sat_sum.2 + 1);
            }
            if let Some(d) = div {
                div_sum = (div_sum.0 + d, div_sum.1 + 1);
            }
            let user = &mut self.users[u];
            user.record_feed_metrics(sat, div);
            user.ce_window.push_step(t, events);
            user.opinion = apply_feed(own, ops.iter().copied(), dyn_p)?;
            feed_opinions.push(ops);
        }
        self.feeds = feeds;

        // (5) connection recommendation against the phase-start graph
        let opinions_now = self.opinions();
        let contact_params = ContactParams {
            d_backfire: dyn_p.d_backfire,
            rule: cfg.cwb.contact_rule,
            resilience_weighting: cfg.cwb.resilience_weighting,
            window: cfg.cwb.window,
        };
        let mut proposals: Vec<(UserId, UserId)> = Vec::new();
        for u in 0..n {
            let mut rng = user_stream(seed, u, t, Phase::Recommend);
            if rng.random::<f64>() >= cfg.recommender.p_rec {
                continue;
            }
            let Some(v) = arm.recommender.recommend(&snap.graph, u, &opinions_now, &mut rng)? else {
                continue;
            };
            let mut arng = user_stream(seed, u, t, Phase::Accept);
            if accept_connection(&self.users[u], opinions_now[v], dyn_p, &mut arng) {
                proposals.push((u, v));
            }
        }
        let mut step_contacts = Vec::new();
        for (u, v) in proposals {
            if self.graph.add_edge(u, v)? {
                step_contacts.push(contact_creation(&self.users[u], &self.users[v], &contact_params));
            }
        }
        self.contacts.push_back(step_contacts);
        while self.contacts.len() > cfg.cwb.window {
            self.contacts.pop_front();
        }

        // (6) metrics
        let contacts: Vec<f64> = self.contacts.iter().flatten().copied().collect();
        let report = cwb_total(
            &CwbInput {
                step: t + 1,
                users: &self.users,
                contacts: &contacts,
                feeds: Some(&feed_opinions),
                detectors: &cfg.detectors,
            },
            &cfg.cwb,
        )
        .ok();
        if let (Some(bandit), Some(r)) = (self.bandit.as_mut(), &report) {
            for u in 0..n {
                if let (Some(obj), Some(now), Some(before)) =
                    (self.objectives[u], r.per_user_cwb[u], self.prev_user_cwb[u])
                {
                    bandit.update(obj, now - before);
                }
            }
        }
        if let Some(r) = &report {
            self.prev_user_cwb = r.per_user_cwb.clone();
        }

        let mean = |s: f64, k: usize| if k > 0 { s / k as f64 } else { f64::NAN };
        let record = StepRecord {
            step: t + 1,
            satisfaction: mean(sat_sum.0, sat_sum.2),
            raw_distance: mean(sat_sum.1, sat_sum.2),
            diversity: mean(div_sum.0, div_sum.1),
            edges: self.graph.edge_count(),
            cwb_total: report.as_ref().map_or(f64::NAN, |r| r.cwb_total),
            floor_infeasible,
        };
        self.last_report = report;
        self.step += 1;
        Ok(record)
    }

    /// Network measures of the current graph, with per-user harmful
    /// exposure from the last report as threat scores.
    pub fn network_measures(&self, exec: Execution) -> NetworkMeasures {
        let threats: Vec<(String, Vec<f64>)> = self
            .last_report
            .iter()
            .flat_map(|r| r.aspects.iter())
            .filter(|a| a.polarity == Polarity::Harmful)
            .map(|a| (a.name.clone(), a.ce.iter().map(|c| c.unwrap_or(0.0)).collect()))
            .collect();
        NetworkMeasures::compute(&self.graph, &self.opinions(), &threats, exec)
    }
}

pub struct RunOutput {
    pub trace: RunTrace,
    pub state: SimState,
}

pub fn run_with_state(cfg: &SimConfig, arm: &Arm, seed: u64) -> Result<RunOutput> {
    let mut state = SimState::init(cfg, seed)?;
    let mut records = Vec::with_capacity(cfg.run.steps);
    for _ in 0..cfg.run.steps {
        records.push(state.step(cfg, arm)?);
    }
    Ok(RunOutput {
        trace: RunTrace { records },
        state,
    })
}

/// Runs `cfg.run.steps` steps from `seed`. Identical inputs give
/// bit-identical traces.
pub fn run(cfg: &SimConfig, arm: &Arm, seed: u64) -> Result<RunTrace> {
    run_with_state(cfg, arm, seed).map(|o| o.trace)
}

/// Per-step mean and sample standard deviation of one metric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSeries {
    pub metric: Metric,
    pub mean: Vec<f64>,
    /// `(R − 1)` denominator; 0 where fewer than two runs had a value.
    pub std: Vec<f64>,
    /// Runs with a finite value at each step.
    pub count: Vec<usize>,
}

impl MetricSeries {
    pub fn std_defined(&self, step_index: usize) -> bool {
        self.count[step_index] >= 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub runs: usize,
    pub steps: usize,
    pub series: Vec<MetricSeries>,
}

impl EnsembleStats {
    /// Aggregates traces of equal length.
    pub fn from_traces(traces: &[RunTrace]) -> Self {
        let steps = traces.first().map_or(0, RunTrace::len);
        let series = Metric::ALL
            .iter()
            .map(|&metric| {
                let mut mean = Vec::with_capacity(steps);
                let mut std = Vec::with_capacity(steps);
                let mut count = Vec::with_capacity(steps);
                for s in 0..steps {
                    let xs: Vec<f64> = traces
                        .iter()
                        .map(|t| t.records[s].get(metric))
                        .filter(|x| x.is_finite())
                        .collect();
                    let k = xs.len();
                    let m = if k > 0 { shifted_mean(&xs) } else { f64::NAN };
                    let sd = if k >= 2 {
                        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    mean.push(m);
                    std.push(sd);
                    count.push(k);
                }
                MetricSeries { metric, mean, std, count }
            })
            .collect();
        Self {
            runs: traces.len(),
            steps,
            series,
        }
    }

    pub fn series(&self, metric: Metric) -> &MetricSeries {
        self.series
            .iter()
            .find(|s| s.metric == metric)
            .expect("every metric is aggregated")
    }
}

/// Runs `runs` independent seeds derived from `master_seed` and aggregates
/// them. The result does not depend on `exec`.
pub fn run_ensemble(cfg: &SimConfig, arm: &Arm, master_seed: u64, runs: usize, exec: Execution) -> Result<EnsembleStats> {
    if runs == 0 {
        return Err(Error::config("run.runs", "must be >= 1"));
    }
    cfg.validate()?;
    let traces = par::map_indexed(runs, exec, |i| run(cfg, arm, run_seed(master_seed, i)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::from_traces(&traces))
}

/// One arm's ensemble together with the final state of its first run.
pub struct ArmResult {
    pub arm: Arm,
    pub stats: EnsembleStats,
    pub first_run: SimState,
}

/// Every arm of `cfg` over `cfg.run.runs` seeds. Arms share run seeds, so
/// they start from the same graphs and opinions.
pub fn run_experiment(cfg: &SimConfig, master_seed: u64, exec: Execution) -> Result<Vec<ArmResult>> {
    cfg.validate()?;
    let arms = cfg.arms();
    let runs = cfg.run.runs;
    let outputs = par::map_indexed(arms.len() * runs, exec, |job| {
        let (a, r) = (job / runs, job % runs);
        run_with_state(cfg, &arms[a], run_seed(master_seed, r))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut outputs = outputs.into_iter();
    let mut results = Vec::with_capacity(arms.len());
    for arm in arms {
        let chunk: Vec<RunOutput> = outputs.by_ref().take(runs).collect();
        let traces: Vec<RunTrace> = chunk.iter().map(|o| o.trace.clone()).collect();
        let first_run = chunk.into_iter().next().expect("runs >= 1").state;
        results.push(ArmResult {
            arm,
            stats: EnsembleStats::from_traces(&traces),
            first_run,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset_fig6;

    fn small() -> SimConfig {
        let mut cfg = preset_fig6();
        cfg.graph.n = 30;
        cfg.run.steps = 20;
        cfg.run.runs = 3;
        cfg
    }

    #[test]
    fn zero_steps_empty_trace() {
        let mut cfg = small();
        cfg.run.steps = 0;
        let arm = &cfg.arms()[0];
        assert!(run(&cfg, arm, 1).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = small();
        for arm in cfg.arms() {
            let a = run(&cfg, &arm, 42).unwrap();
            let b = run(&cfg, &arm, 42).unwrap();
            assert!(a.bit_eq(&b));
            assert_eq!(a.len(), cfg.run.steps);
        }
    }

    #[test]
    fn no_posts_no_movement() {
        let mut cfg = small();
        cfg.dynamics.p_post = 0.0;
        let arm = &cfg.arms()[0];
        let mut st = SimState::init(&cfg, 3).unwrap();
        let before = st.opinions();
        for _ in 0..5 {
            let rec = st.step(&cfg, arm).unwrap();
            assert!(rec.satisfaction.is_nan());
        }
        assert_eq!(st.opinions(), before);
        assert!(st.items.is_empty());
    }

    #[test]
    fn no_recommendations_constant_edges() {
        let mut cfg = small();
        cfg.recommender.p_rec = 0.0;
        for arm in cfg.arms() {
            let trace = run(&cfg, &arm, 5).unwrap();
            let e0 = trace.records[0].edges;
            assert!(trace.records.iter().all(|r| r.edges == e0));
        }
    }

    #[test]
    fn conservation_and_edge_monotonicity() {
        let mut cfg = small();
        cfg.content.exogenous_per_user = 2;
        cfg.feed.rankers = vec![RankerKind::Cwbrs];
        for arm in cfg.arms() {
            let out = run_with_state(&cfg, &arm, 9).unwrap();
            let st = &out.state;
            assert_eq!(st.items.len(), st.posts_emitted + st.exogenous_injected);
            assert_eq!(st.exogenous_injected, 2 * cfg.graph.n * cfg.run.steps);
            assert!(out.trace.records.windows(2).all(|w| w[0].edges <= w[1].edges));
        }
    }

    #[test]
    fn ensemble_single_run_std_undefined() {
        let cfg = small();
        let stats = run_ensemble(&cfg, &cfg.arms()[0], 1, 1, Execution::Sequential).unwrap();
        let s = stats.series(Metric::Satisfaction);
        assert!(s.std.iter().all(|&x| x == 0.0));
        assert!(!s.std_defined(0));
    }

    #[test]
    fn ensemble_constant_metric() {
        let rec = StepRecord {
            step: 1,
            satisfaction: 0.7,
            raw_distance: 0.6,
            diversity: 0.3,
            edges: 12,
            cwb_total: 0.5,
            floor_infeasible: 0,
        };
        let traces = vec![RunTrace { records: vec![rec; 4] }; 10];
        let stats = EnsembleStats::from_traces(&traces);
        for s in &stats.series {
            assert!(s.std.iter().all(|&x| x == 0.0));
            assert!(s.count.iter().all(|&c| c == 10));
        }
        assert_eq!(stats.series(Metric::Edges).mean, vec![12.0; 4]);
    }

    #[test]
    fn ensemble_is_execution_independent() {
        let cfg = small();
        let arm = &cfg.arms()[2];
        let a = run_ensemble(&cfg, arm, 7, 4, Execution::Sequential).unwrap();
        let b = run_ensemble(&cfg, arm, 7, 4, Execution::Parallel).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
