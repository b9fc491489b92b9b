//! Collective well-being metric engine.
//!
//! Every user carries two rolling windows of scored events: what they shared
//! (CS) and what appeared in their feed (CE). Per-aspect event terms are
//! aggregated over time, then over users with a weighted power mean, then
//! across aspects together with a feed-diversity term and a contact-creation
//! term. All components stay in `[0, 1]` and missing data is carried as
//! `None` rather than zero.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agents::UserState;
use crate::content::{debias_prevalence, DetectorParams, Polarity};
use crate::error::{Error, Result};
use crate::network::NetworkMeasures;

/// A scored sharing or exposure event.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    /// One score per configured aspect, in config order.
    pub scores: Vec<f64>,
    pub weight: f64,
    pub opinion: f64,
}

/// Events of the last `capacity` steps, grouped by step.
#[derive(Clone, Debug, PartialEq)]
pub struct EventWindow {
    capacity: usize,
    steps: VecDeque<(usize, Vec<Event>)>,
}

impl EventWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            steps: VecDeque::new(),
        }
    }

    /// Records the events of `step`, evicting steps older than the capacity.
    pub fn push_step(&mut self, step: usize, events: Vec<Event>) {
        self.steps.push_back((step, events));
        while self.steps.len() > self.capacity {
            self.steps.pop_front();
        }
    }

    fn recent(&self, window: usize) -> impl Iterator<Item = &(usize, Vec<Event>)> {
        let skip = self.steps.len().saturating_sub(window);
        self.steps.iter().skip(skip)
    }

    /// Events of the most recent `window` steps, oldest first.
    pub fn events(&self, window: usize) -> impl Iterator<Item = &Event> {
        self.recent(window).flat_map(|(_, evs)| evs.iter())
    }

    /// Weighted mean score of `aspect` over the last `window` steps.
    pub fn weighted_mean(&self, aspect: usize, window: usize) -> Option<f64> {
        weighted_mean(self.events(window).map(|e| (e.scores[aspect], e.weight)))
    }

    /// Per-step weighted means of `aspect`; steps without events are skipped.
    pub fn step_means(&self, aspect: usize, window: usize) -> Vec<f64> {
        self.recent(window)
            .filter_map(|(_, evs)| weighted_mean(evs.iter().map(|e| (e.scores[aspect], e.weight))))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.iter().all(|(_, evs)| evs.is_empty())
    }
}

fn weighted_mean(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (num, den) = pairs.fold((0.0, 0.0), |(n, d), (x, w)| (n + x * w, d + w));
    (den > 0.0).then(|| num / den)
}

/// CS: mean aspect score of the user's own posts in the last `window` steps.
pub fn content_shared(u: &UserState, aspect: usize, window: usize) -> Option<f64> {
    u.cs_window.weighted_mean(aspect, window)
}

/// CE: weighted mean aspect score of the user's feed items in the last
/// `window` steps. Exogenous items carry the exogenous weight.
pub fn content_exposure(u: &UserState, aspect: usize, window: usize) -> Option<f64> {
    u.ce_window.weighted_mean(aspect, window)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactRule {
    /// Opinion distance, zeroed past the backfire threshold.
    OpinionBridge,
    /// Distance between the two users' shared-content profiles on the first
    /// configured aspect, with the same backfire guard.
    ContentProfile,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    pub d_backfire: f64,
    pub rule: ContactRule,
    pub resilience_weighting: bool,
    pub window: usize,
}

/// CC value of a newly created edge `a–b`.
pub fn contact_creation(a: &UserState, b: &UserState, p: &ContactParams) -> f64 {
    let distance = (a.opinion - b.opinion).abs();
    if distance >= p.d_backfire {
        return 0.0;
    }
    let bridge = match p.rule {
        ContactRule::OpinionBridge => distance / 2.0,
        ContactRule::ContentProfile => {
            match (content_shared(a, 0, p.window), content_shared(b, 0, p.window)) {
                (Some(x), Some(y)) => (x - y).abs(),
                _ => 0.0,
            }
        }
    };
    let support = if p.resilience_weighting {
        (a.resilience - b.resilience).abs()
    } else {
        1.0
    };
    bridge * support
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Satisfaction {
    /// Mean |item opinion − user opinion|, in `[0, 2]`.
    pub raw: f64,
    /// `1 − raw / 2`.
    pub value: f64,
}

pub fn satisfaction(opinion: f64, feed: &[f64]) -> Option<Satisfaction> {
    if feed.is_empty() {
        return None;
    }
    let raw = feed.iter().map(|c| (c - opinion).abs()).sum::<f64>() / feed.len() as f64;
    Some(Satisfaction {
        raw,
        value: 1.0 - raw / 2.0,
    })
}

/// Equal-width bin of an opinion in `[-1, 1]`.
#[inline]
pub fn opinion_bin(opinion: f64, bins: usize) -> usize {
    let x = ((opinion + 1.0) / 2.0 * bins as f64).floor();
    (x.max(0.0) as usize).min(bins - 1)
}

/// Shannon entropy of binned feed opinions divided by `ln bins`.
pub fn feed_diversity_entropy<I>(opinions: I, bins: usize) -> Option<f64>
where
    I: IntoIterator<Item = f64>,
{
    assert!(bins >= 2, "entropy needs at least two bins");
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for o in opinions {
        counts[opinion_bin(o, bins)] += 1;
        total += 1;
    }
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Some((h / (bins as f64).ln()).clamp(0.0, 1.0))
}

/// Exponent at or beyond which the power mean is computed as min/max.
pub const DEFAULT_Q_INF: f64 = 1e6;

/// Weighted power mean with exponent `q` over the finite entries of
/// `values`. `q ≤ -q_inf` is the minimum, `q ≥ q_inf` the maximum and
/// `q = 0` the geometric mean.
pub fn aggregate_users(values: &[Option<f64>], weights: &[f64], q: f64, q_inf: f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    if q.is_nan() {
        return Err(Error::InvalidInput("power-mean exponent is NaN".into()));
    }
    let pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter_map(|(v, &w)| v.filter(|x| x.is_finite()).map(|x| (x, w)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(Error::UndefinedMeasure(
            "no user with data and positive weight".into(),
        ));
    }
    if pairs.iter().any(|&(x, _)| x < 0.0) {
        return Err(Error::InvalidInput("power mean of negative values".into()));
    }
    let xs = pairs.iter().map(|&(x, _)| x);
    if q <= -q_inf {
        return Ok(xs.fold(f64::INFINITY, f64::min));
    }
    if q >= q_inf {
        return Ok(xs.fold(f64::NEG_INFINITY, f64::max));
    }
    let total_w: f64 = pairs.iter().map(|&(_, w)| w).sum();
    if q <= 0.0 && pairs.iter().any(|&(x, _)| x == 0.0) {
        return Ok(0.0);
    }
    let mean = if q == 0.0 {
        (pairs.iter().map(|&(x, w)| w * x.ln()).sum::<f64>() / total_w).exp()
    } else {
        (pairs.iter().map(|&(x, w)| w * x.powf(q)).sum::<f64>() / total_w).powf(1.0 / q)
    };
    // Keep round-off from stepping outside [min, max].
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    Ok(mean.clamp(lo, hi))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeAggregation {
    WindowedMean(usize),
    /// Exponential moving average seeded at the first value.
    Ema(f64),
}

pub fn aggregate_time(series: &[f64], mode: TimeAggregation) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::UndefinedMeasure("time aggregate of an empty series".into()));
    }
    Ok(match mode {
        TimeAggregation::WindowedMean(w) => {
            let tail = &series[series.len().saturating_sub(w.max(1))..];
            shifted_mean(tail)
        }
        TimeAggregation::Ema(alpha) => series[1..]
            .iter()
            .fold(series[0], |s, &x| alpha * x + (1.0 - alpha) * s),
    })
}

/// Mean computed as offsets from the first value, so constant input comes
/// back unchanged.
pub(crate) fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// Weighted mean over every event in the window.
    Pooled,
    /// Mean of per-step means over the window.
    WindowedMean,
    /// EMA of per-step means over the window.
    Ema,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectWeight {
    pub name: String,
    pub polarity: Polarity,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CwbConfig {
    pub aspects: Vec<AspectWeight>,
    pub diversity_weight: f64,
    pub connection_weight: f64,
    /// Window length W in steps.
    pub window: usize,
    /// User-aggregation exponent.
    pub q: f64,
    pub q_inf: f64,
    pub resilience_weighting: bool,
    /// Entropy bin count B.
    pub bins: usize,
    pub exogenous_weight: f64,
    /// Mix β between exposure (CE) and sharing (CS) terms.
    pub exposure_mix: f64,
    pub time_mode: TimeMode,
    pub ema_alpha: f64,
    /// Entropy of all feeds pooled instead of the per-user mean.
    pub pooled_diversity: bool,
    pub contact_rule: ContactRule,
    /// Score events with detector output instead of ground truth.
    pub use_detected: bool,
    /// Aspects whose CS/CE are de-biased with the detector's rates.
    pub debias: Vec<String>,
}

impl Default for CwbConfig {
    fn default() -> Self {
        Self {
            aspects: vec![
                AspectWeight {
                    name: crate::content::EXTREMITY.into(),
                    polarity: Polarity::Harmful,
                    weight: 0.25,
                },
                AspectWeight {
                    name: crate::content::TOXICITY.into(),
                    polarity: Polarity::Harmful,
                    weight: 0.25,
                },
            ],
            diversity_weight: 0.25,
            connection_weight: 0.25,
            window: 10,
            q: 1.0,
            q_inf: DEFAULT_Q_INF,
            resilience_weighting: false,
            bins: 5,
            exogenous_weight: 1.0,
            exposure_mix: 0.5,
            time_mode: TimeMode::Pooled,
            ema_alpha: 0.5,
            pooled_diversity: false,
            contact_rule: ContactRule::OpinionBridge,
            use_detected: true,
            debias: Vec::new(),
        }
    }
}

impl CwbConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("cwb.{k}");
        if self.window < 1 {
            return Err(Error::config(key("window"), "must be >= 1"));
        }
        if self.bins < 2 {
            return Err(Error::config(key("bins"), "must be >= 2"));
        }
        if self.q.is_nan() {
            return Err(Error::config(key("q"), "must be a number (use ±inf for min/max)"));
        }
        if self.q_inf.is_nan() || self.q_inf <= 0.0 {
            return Err(Error::config(key("q_inf"), "must be positive"));
        }
        for (k, v) in [("exposure_mix", self.exposure_mix), ("ema_alpha", self.ema_alpha)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key(k), format!("{v} outside [0, 1]")));
            }
        }
        if !(self.exogenous_weight >= 0.0 && self.exogenous_weight.is_finite()) {
            return Err(Error::config(key("exogenous_weight"), "must be finite and >= 0"));
        }
        let mut total = 0.0;
        for (i, a) in self.aspects.iter().enumerate() {
            if self.aspects[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::config(key("aspects"), format!("duplicate aspect `{}`", a.name)));
            }
            if !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::config(
                    format!("cwb.aspects.{}.weight", a.name),
                    "must be finite and >= 0",
                ));
            }
            total += a.weight;
        }
        if self.aspects.iter().map(|a| a.weight).sum::<f64>() <= 0.0 {
            return Err(Error::config(key("aspects"), "aspect weights must not all be zero"));
        }
        for (k, v) in [
            ("diversity_weight", self.diversity_weight),
            ("connection_weight", self.connection_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key(k), "must be finite and >= 0"));
            }
            total += v;
        }
        if total <= 0.0 {
            return Err(Error::config(key("aspects"), "all weights are zero"));
        }
        for name in &self.debias {
            if !self.aspects.iter().any(|a| &a.name == name) {
                return Err(Error::config(key("debias"), format!("unknown aspect `{name}`")));
            }
        }
        Ok(())
    }

    pub fn aspect_index(&self, name: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a.name == name)
    }

    fn time_aggregate(&self, window: &EventWindow, aspect: usize) -> Option<f64> {
        match self.time_mode {
            TimeMode::Pooled => window.weighted_mean(aspect, self.window),
            TimeMode::WindowedMean => {
                aggregate_time(&window.step_means(aspect, self.window), TimeAggregation::WindowedMean(self.window)).ok()
            }
            TimeMode::Ema => {
                aggregate_time(&window.step_means(aspect, self.window), TimeAggregation::Ema(self.ema_alpha)).ok()
            }
        }
    }
}

/// Everything [`cwb_total`] reads.
#[derive(Clone, Copy, Debug)]
pub struct CwbInput<'a> {
    pub step: usize,
    pub users: &'a [UserState],
    /// CC values of edges created during the window.
    pub contacts: &'a [f64],
    /// Feed opinions of the current step, for pooled diversity.
    pub feeds: Option<&'a [Vec<f64>]>,
    pub detectors: &'a DetectorParams,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AspectReport {
    pub name: String,
    pub polarity: Polarity,
    pub weight: f64,
    pub term: Option<f64>,
    pub cs: Vec<Option<f64>>,
    pub ce: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CwbReport {
    pub step: usize,
    pub aspects: Vec<AspectReport>,
    pub satisfaction: Vec<Option<f64>>,
    pub diversity: Vec<Option<f64>>,
    pub per_user_cwb: Vec<Option<f64>>,
    pub diversity_term: Option<f64>,
    pub connection_term: Option<f64>,
    pub cwb_total: f64,
    pub network: Option<NetworkMeasures>,
}

fn blend(mix: f64, exposure: Option<f64>, shared: Option<f64>) -> Option<f64> {
    match (exposure, shared) {
        (Some(e), Some(s)) => Some(mix * e + (1.0 - mix) * s),
        (e, s) => e.or(s),
    }
}

fn oriented(polarity: Polarity, x: f64) -> f64 {
    match polarity {
        Polarity::Harmful => 1.0 - x,
        Polarity::Beneficial => x,
    }
}

/// Weighted mean of the available components; `None` if none is available.
fn combine(parts: impl Iterator<Item = (f64, Option<f64>)>) -> Option<f64> {
    weighted_mean(parts.filter(|(w, _)| *w > 0.0).filter_map(|(w, v)| v.map(|v| (v, w))))
}

/// Assembles the community CWB report for one step.
pub fn cwb_total(input: &CwbInput<'_>, cfg: &CwbConfig) -> Result<CwbReport> {
    let users = input.users;
    let mut aspects = Vec::with_capacity(cfg.aspects.len());
    // Per user, per aspect: oriented blended value.
    let mut user_values = vec![Vec::with_capacity(cfg.aspects.len()); users.len()];

    for (ai, aspect) in cfg.aspects.iter().enumerate() {
        let debias = cfg.debias.contains(&aspect.name).then(|| input.detectors.rates(&aspect.name));
        let adjust = |x: Option<f64>| match (x, &debias) {
            (Some(x), Some(r)) => debias_prevalence(x, r).ok().map(|p| p.clamp(0.0, 1.0)),
            (x, _) => x,
        };
        let cs: Vec<Option<f64>> = users
            .iter()
            .map(|u| adjust(cfg.time_aggregate(&u.cs_window, ai)))
            .collect();
        let ce: Vec<Option<f64>> = users
            .iter()
            .map(|u| adjust(cfg.time_aggregate(&u.ce_window, ai)))
            .collect();
        let values: Vec<Option<f64>> = ce
            .iter()
            .zip(&cs)
            .map(|(e, s)| {
                blend(
                    cfg.exposure_mix,
                    e.map(|x| oriented(aspect.polarity, x)),
                    s.map(|x| oriented(aspect.polarity, x)),
                )
            })
            .collect();
        let weights: Vec<f64> = users
            .iter()
            .map(|u| match (cfg.resilience_weighting, aspect.polarity) {
                (true, Polarity::Harmful) => 1.0 - u.resilience,
                _ => 1.0,
            })
            .collect();
        let term = aggregate_users(&values, &weights, cfg.q, cfg.q_inf).ok();
        for (uv, v) in user_values.iter_mut().zip(&values) {
            uv.push(*v);
        }
        aspects.push(AspectReport {
            name: aspect.name.clone(),
            polarity: aspect.polarity,
            weight: aspect.weight,
            term,
            cs,
            ce,
        });
    }

    let diversity: Vec<Option<f64>> = users
        .iter()
        .map(|u| u.windowed_diversity(cfg.window))
        .collect();
    let diversity_term = if cfg.pooled_diversity {
        input
            .feeds
            .and_then(|f| feed_diversity_entropy(f.iter().flatten().copied(), cfg.bins))
    } else {
        weighted_mean(diversity.iter().flatten().map(|&d| (d, 1.0)))
    };
    let connection_term = weighted_mean(input.contacts.iter().map(|&c| (c, 1.0)));

    let cwb = combine(
        cfg.aspects
            .iter()
            .zip(&aspects)
            .map(|(a, r)| (a.weight, r.term))
            .chain([
                (cfg.diversity_weight, diversity_term),
                (cfg.connection_weight, connection_term),
            ]),
    )
    .ok_or_else(|| Error::UndefinedMeasure("no CWB component has data".into()))?;

    let per_user_cwb = user_values
        .iter()
        .zip(&diversity)
        .map(|(vals, d)| {
            combine(
                cfg.aspects
                    .iter()
                    .zip(vals)
                    .map(|(a, v)| (a.weight, *v))
                    .chain([(cfg.diversity_weight, *d)]),
            )
        })
        .collect();

    Ok(CwbReport {
        step: input.step,
        aspects,
        satisfaction: users.iter().map(|u| u.last_satisfaction()).collect(),
        diversity,
        per_user_cwb,
        diversity_term,
        connection_term,
        cwb_total: cwb,
        network: None,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl CwbReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long format, `step,aspect,term,value`; missing values are `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,aspect,term,value\n");
        let s = self.step;
        for a in &self.aspects {
            let _ = writeln!(out, "{s},{},term,{}", a.name, fmt_opt(a.term));
            for (u, (cs, ce)) in a.cs.iter().zip(&a.ce).enumerate() {
                let _ = writeln!(out, "{s},{},cs.user.{u},{}", a.name, fmt_opt(*cs));
                let _ = writeln!(out, "{s},{},ce.user.{u},{}", a.name, fmt_opt(*ce));
            }
        }
        for (u, (sat, div)) in self.satisfaction.iter().zip(&self.diversity).enumerate() {
            let _ = writeln!(out, "{s},*,satisfaction.user.{u},{}", fmt_opt(*sat));
            let _ = writeln!(out, "{s},*,diversity.user.{u},{}", fmt_opt(*div));
        }
        let _ = writeln!(out, "{s},*,diversity,{}", fmt_opt(self.diversity_term));
        let _ = writeln!(out, "{s},*,connection,{}", fmt_opt(self.connection_term));
        let _ = writeln!(out, "{s},*,cwb_total,{}", self.cwb_total);
        if let Some(net) = &self.network {
            let _ = writeln!(out, "{s},*,degree_gini,{}", fmt_opt(net.degree_gini));
            let _ = writeln!(out, "{s},*,homophily_index,{}", fmt_opt(net.homophily_index));
            for (name, v) in &net.centrality_weighted_threat {
                let _ = writeln!(out, "{s},{name},centrality_weighted_threat,{}", fmt_opt(*v));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user_with(ce: &[(f64, f64)], opinion: f64) -> UserState {
        let mut u = UserState::new(0, opinion, 0.5, 10);
        let events = ce
            .iter()
            .map(|&(s, w)| Event {
                scores: vec![s],
                weight: w,
                opinion: 0.0,
            })
            .collect();
        u.ce_window.push_step(0, events);
        u
    }

    #[test]
    fn shared_means() {
        let mut u = UserState::new(0, 0.0, 0.5, 10);
        assert_eq!(content_shared(&u, 0, 10), None);
        let ev = |s| Event { scores: vec![s], weight: 1.0, opinion: 0.0 };
        u.cs_window.push_step(0, vec![ev(0.2)]);
        assert_eq!(content_shared(&u, 0, 10), Some(0.2));
        u.cs_window.push_step(1, vec![ev(0.4)]);
        assert!((content_shared(&u, 0, 10).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(content_shared(&u, 0, 1), Some(0.4));
    }

    #[test]
    fn exposure_means() {
        assert_eq!(content_exposure(&user_with(&[(1.0, 1.0), (0.0, 1.0)], 0.0), 0, 10), Some(0.5));
        let v = content_exposure(&user_with(&[(1.0, 0.5), (0.0, 1.0)], 0.0), 0, 10).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(content_exposure(&user_with(&[], 0.0), 0, 10), None);
    }

    #[test]
    fn window_evicts_old_steps() {
        let mut w = EventWindow::new(2);
        for s in 0..4 {
            w.push_step(s, vec![Event { scores: vec![s as f64], weight: 1.0, opinion: 0.0 }]);
        }
        assert_eq!(w.step_means(0, 10), vec![2.0, 3.0]);
    }

    #[test]
    fn contact_cases() {
        let p = ContactParams {
            d_backfire: 0.8,
            rule: ContactRule::OpinionBridge,
            resilience_weighting: false,
            window: 10,
        };
        let a = UserState::new(0, 0.0, 0.2, 10);
        assert_eq!(contact_creation(&a, &UserState::new(1, 0.0, 0.9, 10), &p), 0.0);
        assert!((contact_creation(&a, &UserState::new(1, 0.6, 0.9, 10), &p) - 0.3).abs() < 1e-15);
        let far_a = UserState::new(0, -0.9, 0.2, 10);
        assert_eq!(contact_creation(&far_a, &UserState::new(1, 0.9, 0.9, 10), &p), 0.0);
        let weighted = ContactParams { resilience_weighting: true, ..p };
        let b = UserState::new(1, 0.6, 0.9, 10);
        assert!((contact_creation(&a, &b, &weighted) - 0.3 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn satisfaction_cases() {
        assert_eq!(satisfaction(0.3, &[0.3, 0.3]).unwrap().value, 1.0);
        let s = satisfaction(0.0, &[-1.0, 1.0]).unwrap();
        assert_eq!((s.raw, s.value), (1.0, 0.5));
        assert_eq!(satisfaction(0.0, &[]), None);
    }

    #[test]
    fn entropy_cases() {
        let one_per_bin: Vec<f64> = (0..10).map(|i| -0.9 + 0.2 * i as f64).collect();
        assert!((feed_diversity_entropy(one_per_bin, 10).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(feed_diversity_entropy([0.05; 7], 10), Some(0.0));
        let two = [-0.5; 5].into_iter().chain([0.5; 5]);
        let v = feed_diversity_entropy(two, 10).unwrap();
        assert!((v - 2f64.ln() / 10f64.ln()).abs() < 1e-9);
        assert_eq!(feed_diversity_entropy(std::iter::empty(), 10), None);
        assert_eq!(opinion_bin(-1.0, 10), 0);
        assert_eq!(opinion_bin(1.0, 10), 9);
    }

    #[test]
    fn power_mean_cases() {
        let v = [Some(0.2), Some(0.8)];
        let w = [1.0, 1.0];
        assert!((aggregate_users(&v, &w, 1.0, DEFAULT_Q_INF).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(aggregate_users(&v, &w, f64::NEG_INFINITY, DEFAULT_Q_INF).unwrap(), 0.2);
        assert_eq!(aggregate_users(&v, &w, f64::INFINITY, DEFAULT_Q_INF).unwrap(), 0.8);
        let expected = ((0.2f64.powi(-2) + 0.8f64.powi(-2)) / 2.0).powf(-0.5);
        let got = aggregate_users(&v, &w, -2.0, DEFAULT_Q_INF).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.2744).abs() < 1e-4);
        assert!((aggregate_users(&v, &w, 0.0, DEFAULT_Q_INF).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(aggregate_users(&[Some(0.0), Some(0.5)], &w, 0.0, DEFAULT_Q_INF).unwrap(), 0.0);
        assert_eq!(aggregate_users(&[None, Some(0.7)], &w, 1.0, DEFAULT_Q_INF).unwrap(), 0.7);
        assert!(matches!(
            aggregate_users(&[None, None], &w, 1.0, DEFAULT_Q_INF),
            Err(Error::UndefinedMeasure(_))
        ));
        assert!(aggregate_users(&v, &[0.0, 0.0], 1.0, DEFAULT_Q_INF).is_err());
    }

    #[test]
    fn time_aggregation_cases() {
        let c = [0.4; 5];
        assert_eq!(aggregate_time(&c, TimeAggregation::WindowedMean(3)).unwrap(), 0.4);
        assert!((aggregate_time(&c, TimeAggregation::Ema(0.3)).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(aggregate_time(&[0.0, 1.0], TimeAggregation::WindowedMean(2)).unwrap(), 0.5);
        assert_eq!(aggregate_time(&[0.0, 1.0], TimeAggregation::Ema(0.5)).unwrap(), 0.5);
        assert!(aggregate_time(&[], TimeAggregation::Ema(0.5)).is_err());
    }

    fn single_aspect_cfg(polarity: Polarity) -> CwbConfig {
        CwbConfig {
            aspects: vec![AspectWeight { name: "a".into(), polarity, weight: 1.0 }],
            diversity_weight: 0.0,
            connection_weight: 0.0,
            exposure_mix: 1.0,
            ..CwbConfig::default()
        }
    }

    fn input<'a>(users: &'a [UserState], det: &'a DetectorParams) -> CwbInput<'a> {
        CwbInput { step: 0, users, contacts: &[], feeds: None, detectors: det }
    }

    #[test]
    fn total_clean_user_full_diversity() {
        let det = DetectorParams::default();
        let cfg = CwbConfig {
            diversity_weight: 0.5,
            aspects: vec![AspectWeight { name: "a".into(), polarity: Polarity::Harmful, weight: 0.5 }],
            ..single_aspect_cfg(Polarity::Harmful)
        };
        let mut u = user_with(&[(0.0, 1.0)], 0.0);
        u.record_feed_metrics(None, Some(1.0));
        let r = cwb_total(&input(&[u], &det), &cfg).unwrap();
        assert_eq!(r.cwb_total, 1.0);
    }

    #[test]
    fn total_saturated_harm() {
        let det = DetectorParams::default();
        let cfg = single_aspect_cfg(Polarity::Harmful);
        let users = vec![user_with(&[(1.0, 1.0)], 0.0), user_with(&[(1.0, 1.0)], 0.5)];
        assert_eq!(cwb_total(&input(&users, &det), &cfg).unwrap().cwb_total, 0.0);
    }

    #[test]
    fn total_min_aggregation() {
        let det = DetectorParams::default();
        let cfg = CwbConfig { q: f64::NEG_INFINITY, ..single_aspect_cfg(Polarity::Beneficial) };
        let users = vec![user_with(&[(0.2, 1.0)], 0.0), user_with(&[(0.8, 1.0)], 0.0)];
        assert_eq!(cwb_total(&input(&users, &det), &cfg).unwrap().cwb_total, 0.2);
    }

    #[test]
    fn total_without_data_is_undefined() {
        let det = DetectorParams::default();
        let users = vec![UserState::new(0, 0.0, 0.5, 10)];
        assert!(matches!(
            cwb_total(&input(&users, &det), &CwbConfig::default()),
            Err(Error::UndefinedMeasure(_))
        ));
    }

    #[test]
    fn radical_minority_pathology() {
        // A few users steeped in harmful content versus many mildly exposed:
        // the arithmetic mean prefers the first community, the minimum the second.
        let det = DetectorParams::default();
        let mut radical: Vec<UserState> = (0..9).map(|_| user_with(&[(0.0, 1.0)], 0.0)).collect();
        radical.push(user_with(&[(1.0, 1.0)], 0.0));
        let mild: Vec<UserState> = (0..10).map(|_| user_with(&[(0.2, 1.0)], 0.0)).collect();
        let mean_cfg = single_aspect_cfg(Polarity::Harmful);
        let min_cfg = CwbConfig { q: f64::NEG_INFINITY, ..mean_cfg.clone() };
        let score = |users: &[UserState], cfg: &CwbConfig| cwb_total(&input(users, &det), cfg).unwrap().cwb_total;
        assert!(score(&radical, &mean_cfg) > score(&mild, &mean_cfg));
        assert!(score(&radical, &min_cfg) < score(&mild, &min_cfg));
    }

    #[test]
    fn report_csv_marks_missing() {
        let det = DetectorParams::default();
        let cfg = single_aspect_cfg(Polarity::Harmful);
        let users = vec![user_with(&[(0.5, 1.0)], 0.0), UserState::new(1, 0.0, 0.5, 10)];
        let r = cwb_total(&input(&users, &det), &cfg).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("step,aspect,term,value\n0,a,term,0.5\n"));
        assert!(csv.contains("0,a,ce.user.1,NA\n"));
        assert!(r.to_json().contains("\"cwb_total\": 0.5"));
    }
}
