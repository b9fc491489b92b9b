//! User state and behavior: bounded-confidence opinion updates with a
//! backfire band, posting, and connection acceptance.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::content::{sample_toxicity, ContentItem, ItemId, Source};
use crate::cwb::{EventWindow, Satisfaction};
use crate::error::{Error, Result};
use crate::network::UserId;

#[derive(Clone, Debug, PartialEq)]
pub struct UserState {
    pub id: UserId,
    pub opinion: f64,
    /// Drawn once at initialization.
    pub resilience: f64,
    pub cs_window: EventWindow,
    pub ce_window: EventWindow,
    pub satisfaction_trace: Vec<Option<f64>>,
    pub raw_distance_trace: Vec<Option<f64>>,
    pub diversity_trace: Vec<Option<f64>>,
}

impl UserState {
    pub fn new(id: UserId, opinion: f64, resilience: f64, window: usize) -> Self {
        Self {
            id,
            opinion: clip(opinion),
            resilience,
            cs_window: EventWindow::new(window),
            ce_window: EventWindow::new(window),
            satisfaction_trace: Vec::new(),
            raw_distance_trace: Vec::new(),
            diversity_trace: Vec::new(),
        }
    }

    pub fn record_feed_metrics(&mut self, sat: Option<Satisfaction>, diversity: Option<f64>) {
        self.satisfaction_trace.push(sat.map(|s| s.value));
        self.raw_distance_trace.push(sat.map(|s| s.raw));
        self.diversity_trace.push(diversity);
    }

    pub fn last_satisfaction(&self) -> Option<f64> {
        self.satisfaction_trace.last().copied().flatten()
    }

    /// Mean feed diversity over the last `window` steps with data.
    pub fn windowed_diversity(&self, window: usize) -> Option<f64> {
        let skip = self.diversity_trace.len().saturating_sub(window);
        let (sum, n) = self.diversity_trace[skip..]
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// Distances up to this pull the user toward the item.
    pub d_assim: f64,
    /// Distances from this on push the user away from the item.
    pub d_backfire: f64,
    pub mu: f64,
    pub lambda: f64,
    pub p_post: f64,
    pub post_noise: f64,
    pub h_accept: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            d_assim: 0.3,
            d_backfire: 1.0,
            mu: 0.05,
            lambda: 0.05,
            p_post: 0.5,
            post_noise: 0.05,
            h_accept: 0.5,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("dynamics.{k}");
        if !(self.d_assim > 0.0 && self.d_assim <= self.d_backfire && self.d_backfire <= 2.0) {
            return Err(Error::config(
                key("d_assim"),
                format!(
                    "need 0 < d_assim ({}) <= d_backfire ({}) <= 2",
                    self.d_assim, self.d_backfire
                ),
            ));
        }
        for (k, v) in [("mu", self.mu), ("lambda", self.lambda), ("p_post", self.p_post)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key(k), format!("{v} outside [0, 1]")));
            }
        }
        if !(self.post_noise >= 0.0 && self.post_noise.is_finite()) {
            return Err(Error::config(key("post_noise"), "must be finite and >= 0"));
        }
        if self.h_accept.is_nan() || self.h_accept <= 0.0 {
            return Err(Error::config(key("h_accept"), "must be positive"));
        }
        Ok(())
    }
}

/// Applies one feed item with opinion `item` to a user holding `opinion`.
pub fn update_opinion(opinion: f64, item: f64, p: &DynamicsParams) -> Result<f64> {
    if !opinion.is_finite() || !item.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite opinion update ({opinion}, {item})"
        )));
    }
    let delta = item - opinion;
    let next = if delta.abs() <= p.d_assim {
        opinion + p.mu * delta
    } else if delta.abs() >= p.d_backfire {
        opinion - p.lambda * delta
    } else {
        opinion
    };
    Ok(clip(next))
}

/// Applies a whole feed in order.
pub fn apply_feed(opinion: f64, items: impl IntoIterator<Item = f64>, p: &DynamicsParams) -> Result<f64> {
    items
        .into_iter()
        .try_fold(opinion, |o, c| update_opinion(o, c, p))
}

/// With probability `p_post`, the user posts an item near their opinion.
pub fn generate_post<R: Rng + ?Sized>(
    u: &UserState,
    p: &DynamicsParams,
    id: ItemId,
    step: usize,
    toxicity_prevalence: f64,
    rng: &mut R,
) -> Option<ContentItem> {
    if rng.random::<f64>() >= p.p_post {
        return None;
    }
    let jitter = if p.post_noise > 0.0 {
        Normal::new(0.0, p.post_noise)
            .expect("validated noise")
            .sample(rng)
    } else {
        0.0
    };
    let toxicity = sample_toxicity(toxicity_prevalence, rng);
    Some(ContentItem::new(
        id,
        Some(u.id),
        step,
        clip(u.opinion + jitter),
        toxicity,
        Source::Internal,
    ))
}

pub fn acceptance_probability(u: &UserState, candidate_opinion: f64, p: &DynamicsParams) -> f64 {
    (-(u.opinion - candidate_opinion).abs() / p.h_accept).exp()
}

pub fn accept_connection<R: Rng + ?Sized>(
    u: &UserState,
    candidate_opinion: f64,
    p: &DynamicsParams,
    rng: &mut R,
) -> bool {
    rng.random::<f64>() < acceptance_probability(u, candidate_opinion, p)
}
