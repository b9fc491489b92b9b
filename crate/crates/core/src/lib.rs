//! Social-media dynamics simulator and collective well-being (CWB) metrics.
//!
//! * [`network`]: follow graph, homophilic preferential attachment, network measures.
//! * [`agents`]: opinion dynamics with assimilation and backfire bands.
//! * [`content`]: content items and simulated imperfect detectors.
//! * [`recommenders`]: connection recommenders and feed rankers.
//! * [`cwb`]: CS/CE/CC terms, satisfaction, entropy and aggregation.
//! * [`sim`]: deterministic step engine, runs and ensembles.
//! * [`config`] and [`report`]: experiment definition and output files.

pub mod agents;
pub mod config;
pub mod content;
pub mod cwb;
pub mod error;
pub mod network;
pub mod par;
pub mod recommenders;
pub mod report;
pub mod rng;
pub mod sim;

pub use config::{parse_config, parse_config_str, preset, Arm, RankerKind, SimConfig};
pub use error::{Error, Result};
pub use par::Execution;
pub use sim::{run, run_ensemble, run_experiment, EnsembleStats, Metric, RunTrace};
