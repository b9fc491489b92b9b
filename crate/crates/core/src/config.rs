//! Experiment configuration: every tunable knob with its default, TOML
//! parsing with key-path errors, and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::DynamicsParams;
use crate::content::DetectorParams;
use crate::cwb::CwbConfig;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::recommenders::{ConnectionKind, ConnectionRecommender, ObjectiveThresholds};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub n: usize,
    /// Edges per arriving node.
    pub m: usize,
    /// Opinion-similarity bandwidth of the attachment kernel.
    pub h: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { n: 100, m: 6, h: 0.3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContentConfig {
    pub toxicity_prevalence: f64,
    /// Exogenous items injected into each user's candidate pool per step.
    pub exogenous_per_user: usize,
    pub exogenous_toxicity_prevalence: f64,
    pub exogenous_opinion_min: f64,
    pub exogenous_opinion_max: f64,
    /// Neighbor posts stay in candidate pools for this many steps.
    pub pool_window: usize,
}

impl Default for ContentConfig {
    fn default() -> Self {
        Self {
            toxicity_prevalence: 0.05,
            exogenous_per_user: 0,
            exogenous_toxicity_prevalence: 0.2,
            exogenous_opinion_min: -1.0,
            exogenous_opinion_max: 1.0,
            pool_window: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecommenderConfig {
    /// Connection recommenders compared side by side.
    pub kinds: Vec<ConnectionKind>,
    pub overlap_order: usize,
    /// Per-user probability of receiving a connection proposal each step.
    pub p_rec: f64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            kinds: vec![ConnectionKind::Random],
            overlap_order: 2,
            p_rec: 0.07,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerKind {
    Chronological,
    Cwbrs,
}

impl RankerKind {
    pub fn name(self) -> &'static str {
        match self {
            RankerKind::Chronological => "chronological",
            RankerKind::Cwbrs => "cwbrs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedConfig {
    pub rankers: Vec<RankerKind>,
    /// Items per user per step.
    pub k: usize,
    /// Predicted-satisfaction floor of the well-being-aware ranker.
    pub s_min: f64,
    pub objectives: ObjectiveThresholds,
    /// 0 disables the objective bandit.
    pub bandit_epsilon: f64,
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self {
            rankers: vec![RankerKind::Chronological],
            k: 10,
            s_min: 0.5,
            objectives: ObjectiveThresholds::default(),
            bandit_epsilon: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Steps per run (T).
    pub steps: usize,
    /// Runs per ensemble (R).
    pub runs: usize,
    pub master_seed: u64,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            runs: 10,
            master_seed: 0,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub graph: GraphConfig,
    pub dynamics: DynamicsParams,
    pub content: ContentConfig,
    pub detectors: DetectorParams,
    pub recommender: RecommenderConfig,
    pub feed: FeedConfig,
    pub cwb: CwbConfig,
    pub run: RunConfig,
}

/// One compared configuration: a connection recommender paired with a
/// feed ranker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arm {
    pub label: String,
    pub recommender: ConnectionRecommender,
    pub ranker: RankerKind,
}

fn unit(key: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(key, format!("{v} outside [0, 1]")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if g.m < 1 {
            return Err(Error::config("graph.m", "must be >= 1"));
        }
        if g.n <= g.m {
            return Err(Error::config("graph.n", format!("must exceed graph.m = {}", g.m)));
        }
        if !(g.h > 0.0 && g.h.is_finite()) {
            return Err(Error::config("graph.h", "must be positive"));
        }
        self.dynamics.validate()?;

        let c = &self.content;
        unit("content.toxicity_prevalence", c.toxicity_prevalence)?;
        unit("content.exogenous_toxicity_prevalence", c.exogenous_toxicity_prevalence)?;
        if !(-1.0 <= c.exogenous_opinion_min
            && c.exogenous_opinion_min <= c.exogenous_opinion_max
            && c.exogenous_opinion_max <= 1.0)
        {
            return Err(Error::config(
                "content.exogenous_opinion_min",
                "need -1 <= exogenous_opinion_min <= exogenous_opinion_max <= 1",
            ));
        }
        if c.pool_window < 1 {
            return Err(Error::config("content.pool_window", "must be >= 1"));
        }

        for (name, r) in [("extremity", &self.detectors.extremity), ("toxicity", &self.detectors.toxicity)] {
            unit(&format!("detectors.{name}.tpr"), r.tpr)?;
            unit(&format!("detectors.{name}.fpr"), r.fpr)?;
            unit(&format!("detectors.{name}.threshold"), r.threshold)?;
        }

        let r = &self.recommender;
        if r.kinds.is_empty() {
            return Err(Error::config("recommender.kinds", "must list at least one recommender"));
        }
        if r.overlap_order < 2 {
            return Err(Error::config("recommender.overlap_order", "must be >= 2"));
        }
        unit("recommender.p_rec", r.p_rec)?;

        let f = &self.feed;
        if f.rankers.is_empty() {
            return Err(Error::config("feed.rankers", "must list at least one ranker"));
        }
        if f.k < 1 {
            return Err(Error::config("feed.k", "must be >= 1"));
        }
        unit("feed.s_min", f.s_min)?;
        unit("feed.bandit_epsilon", f.bandit_epsilon)?;
        unit("feed.objectives.tau_ext", f.objectives.tau_ext)?;
        unit("feed.objectives.tau_div", f.objectives.tau_div)?;

        self.cwb.validate()?;

        if self.run.runs < 1 {
            return Err(Error::config("run.runs", "must be >= 1"));
        }
        Ok(())
    }

    /// Cartesian product of recommenders and rankers, in config order.
    pub fn arms(&self) -> Vec<Arm> {
        let multi_rec = self.recommender.kinds.len() > 1;
        let multi_rank = self.feed.rankers.len() > 1;
        let mut arms = Vec::new();
        for &kind in &self.recommender.kinds {
            for &ranker in &self.feed.rankers {
                let label = match (multi_rec, multi_rank) {
                    (_, false) => kind.name().to_string(),
                    (false, true) => ranker.name().to_string(),
                    (true, true) => format!("{}+{}", kind.name(), ranker.name()),
                };
                arms.push(Arm {
                    label,
                    recommender: ConnectionRecommender {
                        kind,
                        order: self.recommender.overlap_order,
                    },
                    ranker,
                });
            }
        }
        arms
    }

    /// Effective configuration as TOML; re-parses to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a config from TOML text. Missing keys take their
/// defaults; unknown keys are rejected.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let de = toml::Deserializer::parse(text)
        .map_err(|e| Error::config("<document>", e.to_string().trim().to_string()))?;
    let cfg: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_string() } else { path };
        Error::config(key, e.into_inner().message().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub const PRESET_NAMES: [&str; 3] = ["fig6", "cwbrs-vs-chrono", "sensitivity"];

/// The three-recommender comparison: 100 users, 10 runs, chronological
/// feeds built from internal content only.
pub fn preset_fig6() -> SimConfig {
    SimConfig {
        graph: GraphConfig {
            n: 100,
            ..GraphConfig::default()
        },
        recommender: RecommenderConfig {
            kinds: vec![
                ConnectionKind::Random,
                ConnectionKind::Overlap,
                ConnectionKind::Diversified,
            ],
            ..RecommenderConfig::default()
        },
        feed: FeedConfig {
            rankers: vec![RankerKind::Chronological],
            ..FeedConfig::default()
        },
        content: ContentConfig {
            exogenous_per_user: 0,
            ..ContentConfig::default()
        },
        run: RunConfig {
            runs: 10,
            ..RunConfig::default()
        },
        ..SimConfig::default()
    }
}

/// Feed-ranker comparison under an exogenous stream with elevated toxicity.
pub fn preset_cwbrs_vs_chrono() -> SimConfig {
    SimConfig {
        content: ContentConfig {
            exogenous_per_user: 3,
            exogenous_toxicity_prevalence: 0.2,
            ..ContentConfig::default()
        },
        recommender: RecommenderConfig {
            kinds: vec![ConnectionKind::Random],
            ..RecommenderConfig::default()
        },
        feed: FeedConfig {
            rankers: vec![RankerKind::Chronological, RankerKind::Cwbrs],
            ..FeedConfig::default()
        },
        ..SimConfig::default()
    }
}

/// Parameter grid around the three-recommender preset: backfire threshold
/// crossed with acceptance bandwidth, 5 runs each.
pub fn preset_sensitivity() -> Vec<(String, SimConfig)> {
    let mut out = Vec::new();
    for d_backfire in [0.8, 1.0, 1.2] {
        for h_accept in [0.25, 0.5, 1.0] {
            let mut cfg = preset_fig6();
            cfg.dynamics.d_backfire = d_backfire;
            cfg.dynamics.h_accept = h_accept;
            cfg.run.runs = 5;
            out.push((format!("d_backfire={d_backfire},h_accept={h_accept}"), cfg));
        }
    }
    out
}

/// Looks up a preset by name; `sensitivity` yields several configs.
pub fn preset(name: &str) -> Result<Vec<(String, SimConfig)>> {
    match name {
        "fig6" => Ok(vec![(name.to_string(), preset_fig6())]),
        "cwbrs-vs-chrono" => Ok(vec![(name.to_string(), preset_cwbrs_vs_chrono())]),
        "sensitivity" => Ok(preset_sensitivity()),
        _ => Err(Error::NotFound(format!(
            "preset `{name}` (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(parse_config_str("").unwrap(), SimConfig::default());
    }

    #[test]
    fn range_error_names_key() {
        let err = parse_config_str("[dynamics]\nmu = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("dynamics.mu"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse_config_str("[dynamics]\nnu = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("dynamics") && err.contains("nu"), "{err}");
        let err = parse_config_str("bogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = parse_config_str("[cwb]\nwindow = 0\n").unwrap_err().to_string();
        assert!(err.contains("cwb.window"), "{err}");
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            for (_, cfg) in preset(name).unwrap() {
                let text = cfg.to_toml();
                assert_eq!(parse_config_str(&text).unwrap(), cfg, "{name}");
            }
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn fig6_preset_values() {
        let p = preset_fig6();
        assert_eq!(p.graph.n, 100);
        assert_eq!(p.run.runs, 10);
        assert_eq!(
            p.recommender.kinds,
            vec![ConnectionKind::Random, ConnectionKind::Overlap, ConnectionKind::Diversified]
        );
        assert_eq!(p.feed.rankers, vec![RankerKind::Chronological]);
        assert_eq!(p.content.exogenous_per_user, 0);
        let labels: Vec<String> = p.arms().into_iter().map(|a| a.label).collect();
        assert_eq!(labels, ["random", "overlap", "diversified"]);
    }

    #[test]
    fn minimum_aggregation_survives_round_trip() {
        let cfg = parse_config_str("[cwb]\nq = -inf\n").unwrap();
        assert_eq!(cfg.cwb.q, f64::NEG_INFINITY);
        assert_eq!(parse_config_str(&cfg.to_toml()).unwrap(), cfg);
    }
}
