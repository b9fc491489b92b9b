//! Content items, aspect ground truth and simulated imperfect detectors.
//!
//! A detector is characterized only by its confusion rates: an item whose
//! ground-truth score reaches `threshold` is flagged with probability `tpr`,
//! any other item with probability `fpr`. The measured prevalence over a
//! collection is then affine in the true prevalence,
//! `tpr·p + fpr·(1 − p)`, which [`debias_prevalence`] inverts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::UserId;

pub type ItemId = u64;

pub const EXTREMITY: &str = "extremity";
pub const TOXICITY: &str = "toxicity";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Harmful,
    Beneficial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub polarity: Polarity,
}

impl Aspect {
    pub fn new(name: impl Into<String>, polarity: Polarity) -> Self {
        Self {
            name: name.into(),
            polarity,
        }
    }

    pub fn extremity() -> Self {
        Self::new(EXTREMITY, Polarity::Harmful)
    }

    pub fn toxicity() -> Self {
        Self::new(TOXICITY, Polarity::Harmful)
    }

    fn builtin(&self) -> Option<Builtin> {
        match self.name.as_str() {
            EXTREMITY => Some(Builtin::Extremity),
            TOXICITY => Some(Builtin::Toxicity),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Builtin {
    Extremity = 0,
    Toxicity = 1,
}

/// Registry of aspects with unique names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AspectSet(Vec<Aspect>);

impl AspectSet {
    pub fn new(aspects: Vec<Aspect>) -> Result<Self> {
        for (i, a) in aspects.iter().enumerate() {
            if aspects[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidInput(format!("duplicate aspect `{}`", a.name)));
            }
        }
        Ok(Self(aspects))
    }

    pub fn builtin() -> Self {
        Self(vec![Aspect::extremity(), Aspect::toxicity()])
    }

    pub fn get(&self, name: &str) -> Result<&Aspect> {
        self.0
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::NotFound(format!("aspect `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Aspect> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Internal,
    External,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentItem {
    pub id: ItemId,
    /// `None` for exogenous items.
    pub author: Option<UserId>,
    pub step: usize,
    pub opinion: f64,
    /// Sampled toxicity ground truth (0 or 1).
    pub toxicity: f64,
    pub source: Source,
    /// Detector output per built-in aspect, once detection has run.
    detected: [Option<bool>; 2],
}

impl ContentItem {
    pub fn new(
        id: ItemId,
        author: Option<UserId>,
        step: usize,
        opinion: f64,
        toxicity: f64,
        source: Source,
    ) -> Self {
        Self {
            id,
            author,
            step,
            opinion,
            toxicity,
            source,
            detected: [None; 2],
        }
    }

    pub fn is_external(&self) -> bool {
        self.source == Source::External
    }

    pub fn detected(&self, aspect: &Aspect) -> Option<bool> {
        aspect.builtin().and_then(|b| self.detected[b as usize])
    }

    /// Runs every built-in detector once and stores the labels.
    pub fn run_detectors<R: Rng + ?Sized>(&mut self, params: &DetectorParams, rng: &mut R) {
        for aspect in [Aspect::extremity(), Aspect::toxicity()] {
            let rates = params.rates(&aspect.name);
            let flagged = noisy_detect(self, &aspect, &rates, rng).unwrap_or(false);
            if let Some(b) = aspect.builtin() {
                self.detected[b as usize] = Some(flagged);
            }
        }
    }

    /// Score the platform believes the item has. A correct detection keeps
    /// the true score; a false positive reads as 1 and a false negative as 0.
    /// Items never run through a detector report ground truth.
    pub fn perceived_score(&self, aspect: &Aspect, params: &DetectorParams) -> Result<f64> {
        let truth = true_aspect_score(self, aspect)?;
        let Some(flagged) = self.detected(aspect) else {
            return Ok(truth);
        };
        let positive = truth >= params.rates(&aspect.name).threshold;
        Ok(match (positive, flagged) {
            (p, f) if p == f => truth,
            (_, true) => 1.0,
            (_, false) => 0.0,
        })
    }
}

/// Ground-truth score of an item for a built-in aspect.
pub fn true_aspect_score(item: &ContentItem, aspect: &Aspect) -> Result<f64> {
    match aspect.builtin() {
        Some(Builtin::Extremity) => Ok(item.opinion.abs().min(1.0)),
        Some(Builtin::Toxicity) => Ok(item.toxicity),
        None => Err(Error::NotFound(format!("aspect `{}`", aspect.name))),
    }
}

/// Toxicity truth: 1 with probability `prevalence`, else 0.
pub fn sample_toxicity<R: Rng + ?Sized>(prevalence: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < prevalence {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorRates {
    pub tpr: f64,
    pub fpr: f64,
    pub threshold: f64,
}

impl Default for DetectorRates {
    fn default() -> Self {
        Self::noiseless(0.5)
    }
}

impl DetectorRates {
    pub fn new(tpr: f64, fpr: f64, threshold: f64) -> Result<Self> {
        let r = Self { tpr, fpr, threshold };
        r.validate()?;
        Ok(r)
    }

    pub fn noiseless(threshold: f64) -> Self {
        Self {
            tpr: 1.0,
            fpr: 0.0,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tpr", self.tpr), ("fpr", self.fpr), ("threshold", self.threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Confusion rates for the built-in detectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorParams {
    pub extremity: DetectorRates,
    pub toxicity: DetectorRates,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            extremity: DetectorRates::noiseless(0.7),
            toxicity: DetectorRates::noiseless(0.5),
        }
    }
}

impl DetectorParams {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// Rates for `aspect`; unknown aspects get a noiseless detector.
    pub fn rates(&self, aspect: &str) -> DetectorRates {
        match aspect {
            EXTREMITY => self.extremity,
            TOXICITY => self.toxicity,
            _ => DetectorRates::default(),
        }
    }
}

pub fn noisy_detect<R: Rng + ?Sized>(
    item: &ContentItem,
    aspect: &Aspect,
    rates: &DetectorRates,
    rng: &mut R,
) -> Result<bool> {
    let truth = true_aspect_score(item, aspect)?;
    let u: f64 = rng.random();
    Ok(if truth >= rates.threshold {
        u < rates.tpr
    } else {
        u < rates.fpr
    })
}

/// Fraction of `items` flagged by the detector.
pub fn measured_prevalence<'a, I, R>(
    items: I,
    aspect: &Aspect,
    rates: &DetectorRates,
    rng: &mut R,
) -> Result<f64>
where
    I: IntoIterator<Item = &'a ContentItem>,
    R: Rng + ?Sized,
{
    let (mut flagged, mut total) = (0usize, 0usize);
    for item in items {
        total += 1;
        flagged += usize::from(noisy_detect(item, aspect, rates, rng)?);
    }
    if total == 0 {
        return Err(Error::UndefinedMeasure("prevalence of an empty collection".into()));
    }
    Ok(flagged as f64 / total as f64)
}

/// Expected measured prevalence for true prevalence `p`.
pub fn expected_prevalence(p: f64, rates: &DetectorRates) -> f64 {
    rates.tpr * p + rates.fpr * (1.0 - p)
}

/// Inverts [`expected_prevalence`]: `(measured − fpr) / (tpr − fpr)`.
pub fn debias_prevalence(measured: f64, rates: &DetectorRates) -> Result<f64> {
    let gap = rates.tpr - rates.fpr;
    if gap == 0.0 {
        return Err(Error::UndefinedMeasure(
            "detector with tpr == fpr carries no information".into(),
        ));
    }
    Ok((measured - rates.fpr) / gap)
}
