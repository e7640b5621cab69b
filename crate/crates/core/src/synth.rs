//! Seeded generator of correlated, noisy base-classifier outputs.
//!
//! This is test-harness machinery for exercising fusion without trained
//! models; it makes no claim about how real classifiers behave.
//!
//! Error events. For each sample (and crop) one uniform `u` is drawn. With
//! error rates `e_k = 1 - accuracy_k` and overlap `ρ`, model `k` errs when
//! `u` falls in `[0, ρ·e_k)` (the shared region, nested across models) or in
//! a private interval of length `(1-ρ)·e_k` placed after `ρ·max(e)` and
//! disjoint from every other model's private interval. So each model errs with
//! probability exactly `e_k`, any two models err together with probability
//! `ρ·min(e_j, e_k)`, and for a fixed seed the set of samples on which all
//! models err only shrinks as `ρ` decreases. This needs
//! `ρ·max(e) + (1-ρ)·Σe ≤ 1`.
//!
//! Models erring in the shared region all predict the same wrong class, drawn
//! once per sample; a private error picks its own wrong class. Wrong classes
//! are uniform over the non-true classes.
//!
//! Decision vectors. A model puts mass `μ ∈ (1/2, 1]` on its predicted class.
//! A correct model spreads `1-μ` over the other classes with a flat Dirichlet
//! draw. A wrong model first gives the true class a near-miss share
//! `R·(1-μ)`, `R ~ Beta(a, 1)`, then spreads the rest the same way. `μ = (1 + B)/2` where
//! `B ~ Beta(a, 1)` for correct predictions and `B ~ Beta(1, a)` for errors,
//! with `a = confusion_concentration`: larger `a` makes correct outputs more
//! peaked and wrong outputs flatter.
//!
//! Error events and vector shapes come from separate ChaCha streams, so
//! changing a shape parameter never changes which samples are misclassified.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::PredictionDump;
use crate::error::{Error, Result};
use crate::fusion::{CrispLabel, DecisionProfile, DecisionVector, EnsembleSpec, LabelSpace};
use crate::inference::CropGroup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub class_count: usize,
    pub model_count: usize,
    /// Samples per class in each of the train and test splits.
    pub samples_per_class: usize,
    pub per_model_accuracy: Vec<f64>,
    pub confusion_concentration: f64,
    pub error_overlap: f64,
    /// Crops per sample; every crop gets independent error events.
    pub crops: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Eleven classes and two models at 90% and 93% accuracy.
    fn default() -> Self {
        Self {
            class_count: 11,
            model_count: 2,
            samples_per_class: 910,
            per_model_accuracy: vec![0.90, 0.93],
            confusion_concentration: 4.0,
            error_overlap: 0.3,
            crops: 1,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Check every field, reporting all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.class_count < 2 {
            problems.push(format!("class_count must be at least 2 (got {})", self.class_count));
        }
        if self.model_count < 1 {
            problems.push("model_count must be at least 1".to_string());
        }
        if self.per_model_accuracy.len() != self.model_count {
            problems.push(format!(
                "per_model_accuracy has {} entries, model_count is {}",
                self.per_model_accuracy.len(),
                self.model_count
            ));
        }
        for (k, &a) in self.per_model_accuracy.iter().enumerate() {
            if !(a > 0.0 && a < 1.0) {
                problems.push(format!("per_model_accuracy[{k}] = {a} must lie in (0, 1)"));
            }
        }
        if self.samples_per_class == 0 {
            problems.push("samples_per_class must be positive".to_string());
        }
        if !(self.confusion_concentration.is_finite() && self.confusion_concentration > 0.0) {
            problems.push(format!(
                "confusion_concentration = {} must be a positive finite number",
                self.confusion_concentration
            ));
        }
        if !(0.0..=1.0).contains(&self.error_overlap) {
            problems.push(format!("error_overlap = {} must lie in [0, 1]", self.error_overlap));
        }
        if self.crops == 0 {
            problems.push("crops must be positive".to_string());
        }
        if problems.is_empty() {
            let layout = ErrorLayout::new(&self.error_rates(), self.error_overlap);
            if layout.span > 1.0 + 1e-12 {
                problems.push(format!(
                    "error rates {:?} with error_overlap {} need {:.4} > 1 of the unit interval; \
                     raise accuracies or error_overlap",
                    self.error_rates(),
                    self.error_overlap,
                    layout.span
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid synthetic config: {}", problems.join("; "))))
        }
    }

    fn error_rates(&self) -> Vec<f64> {
        self.per_model_accuracy.iter().map(|a| 1.0 - a).collect()
    }
}

/// Where on the unit interval each model's error events sit.
struct ErrorLayout {
    shared: Vec<f64>,
    private: Vec<(f64, f64)>,
    span: f64,
}

impl ErrorLayout {
    fn new(rates: &[f64], overlap: f64) -> Self {
        let shared: Vec<f64> = rates.iter().map(|e| overlap * e).collect();
        let mut start = shared.iter().copied().fold(0.0, f64::max);
        let private = rates
            .iter()
            .map(|e| {
                let lo = start;
                start += (1.0 - overlap) * e;
                (lo, start)
            })
            .collect();
        Self { shared, private, span: start }
    }

    fn region(&self, model: usize, u: f64) -> Region {
        let (lo, hi) = self.private[model];
        if u < self.shared[model] {
            Region::Shared
        } else if lo <= u && u < hi {
            Region::Private
        } else {
            Region::Correct
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Correct,
    Shared,
    Private,
}

/// Uniform draw from the classes other than `truth`.
fn other_class(rng: &mut ChaCha8Rng, truth: usize, class_count: usize) -> usize {
    let r = rng.random_range(0..class_count - 1);
    if r >= truth { r + 1 } else { r }
}

/// One split of generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    pub dump: PredictionDump,
    pub labels: BTreeMap<String, CrispLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: SynthSplit,
    pub test: SynthSplit,
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    layout: ErrorLayout,
    events: ChaCha8Rng,
    shapes: ChaCha8Rng,
}

impl Generator<'_> {
    fn vector(&mut self, truth: usize, predicted: usize) -> Result<DecisionVector> {
        let c = self.cfg.class_count;
        let wrong = predicted != truth;
        let a = self.cfg.confusion_concentration;
        // inverse-CDF draws: Beta(a,1) = U^(1/a), Beta(1,a) = 1 - U^(1/a)
        let v: f64 = self.shapes.random::<f64>().powf(1.0 / a);
        let b = if wrong { 1.0 - v } else { v };
        let mu = 0.5 * (1.0 + b.max(f64::EPSILON));
        // a wrong prediction keeps the true class as a near miss
        let runner_up = if wrong { self.shapes.random::<f64>().powf(1.0 / a) } else { 0.0 };
        let rest = 1.0 - mu;
        let near_miss = rest * runner_up;
        let spread = rest - near_miss;
        let flat: Vec<usize> = (0..c).filter(|&i| i != predicted && !(wrong && i == truth)).collect();
        let weights: Vec<f64> = flat
            .iter()
            .map(|_| -(1.0 - self.shapes.random::<f64>()).ln())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut probs = vec![0.0; c];
        probs[predicted] = mu;
        if wrong {
            probs[truth] = near_miss;
        }
        for (&i, &w) in flat.iter().zip(&weights) {
            probs[i] = if total > 0.0 { spread * w / total } else { spread / flat.len() as f64 };
        }
        if flat.is_empty() && wrong {
            // two classes: nothing left to spread over
            probs[truth] = rest;
        }
        DecisionVector::new(probs)
    }

    fn split(&mut self, prefix: &str, ensemble: &EnsembleSpec, labels: &LabelSpace) -> Result<SynthSplit> {
        let (c, k) = (self.cfg.class_count, self.cfg.model_count);
        let n = c * self.cfg.samples_per_class;
        let width = n.to_string().len();
        let mut dump = PredictionDump::new(ensemble.clone(), labels.clone());
        let mut sample_labels = BTreeMap::new();
        for j in 0..n {
            let truth = j % c;
            let id = format!("{prefix}-{j:0width$}");
            let mut profiles = Vec::with_capacity(self.cfg.crops);
            for _ in 0..self.cfg.crops {
                let u: f64 = self.events.random();
                let confuser = other_class(&mut self.events, truth, c);
                let rows = (0..k)
                    .map(|m| {
                        let predicted = match self.layout.region(m, u) {
                            Region::Correct => truth,
                            Region::Shared => confuser,
                            Region::Private => other_class(&mut self.shapes, truth, c),
                        };
                        self.vector(truth, predicted)
                    })
                    .collect::<Result<Vec<_>>>()?;
                profiles.push(DecisionProfile::from_vectors(rows)?);
            }
            dump.insert(CropGroup::new(id.clone(), profiles)?)?;
            sample_labels.insert(id, CrispLabel::new(truth, labels)?);
        }
        Ok(SynthSplit { dump, labels: sample_labels })
    }
}

/// Generate disjoint train and test splits. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let labels = LabelSpace::indexed(cfg.class_count)?;
    let ensemble = EnsembleSpec::indexed(cfg.model_count)?;
    let mut events = ChaCha8Rng::seed_from_u64(cfg.seed);
    events.set_stream(0);
    let mut shapes = ChaCha8Rng::seed_from_u64(cfg.seed);
    shapes.set_stream(1);
    let mut generator = Generator {
        cfg,
        layout: ErrorLayout::new(&cfg.error_rates(), cfg.error_overlap),
        events,
        shapes,
    };
    let train = generator.split("train", &ensemble, &labels)?;
    let test = generator.split("test", &ensemble, &labels)?;
    Ok(SynthData { train, test })
}
