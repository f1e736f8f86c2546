//! Training loop, optimizer, and finite-difference gradient checking.

use std::io::Write;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::model::{CorefModel, Precision, RunMode};
use crate::params::{Component, ParamGrads, ParamGroup, ParamStore};
use crate::segment::{segment_document, truncate_document};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_encoder: f64,
    pub lr_task: f64,
    pub dropout: f64,
    /// Longest run of consecutive segments kept per training step; `None`
    /// trains on whole documents.
    #[serde(with = "crate::config::unbounded")]
    pub max_training_segments: Option<usize>,
    /// Draw a new truncation window every epoch instead of once per document.
    pub resample_truncation: bool,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    #[serde(with = "crate::config::unbounded")]
    pub clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr_encoder: 1e-5,
            lr_task: 2e-4,
            dropout: 0.3,
            max_training_segments: Some(11),
            resample_truncation: true,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        for (name, v) in [("lr_encoder", self.lr_encoder), ("lr_task", self.lr_task), ("weight_decay", self.weight_decay)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if self.max_training_segments == Some(0) {
            return Err(Error::config("max_training_segments must be at least 1"));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::config("clip_norm must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::config("adam betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }
}

/// Linearly decayed rate: `base * (1 - step / total)`.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    base_lr * (1.0 - step.min(total_steps) as f64 / total_steps as f64)
}

/// Adam with decoupled weight decay applied to the encoder group only.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    clip_norm: Option<f64>,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamStore, config: &TrainConfig) -> Self {
        let zeros = params.zero_grads().0;
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            clip_norm: config.clip_norm,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Applies one update; returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore, mut grads: ParamGrads, lr_encoder: f64, lr_task: f64) -> f64 {
        let norm = grads.global_norm();
        if let Some(max) = self.clip_norm {
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let (lr, decay) = match p.component.group() {
                ParamGroup::Encoder => (lr_encoder, self.weight_decay),
                ParamGroup::Task => (lr_task, 0.0),
            };
            let g = grads.0[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps) + decay * *w;
                *w -= lr * update;
            }
        }
        norm
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub doc_key: String,
    pub loss: f64,
    pub lr_encoder: f64,
    pub lr_task: f64,
    /// Segment window trained on.
    pub window: Range<usize>,
}

impl StepRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{:e}\t{:e}",
            self.step, self.epoch, self.doc_key, self.loss, self.lr_encoder, self.lr_task
        )
    }
}

pub const LOG_HEADER: &str = "step\tepoch\tdoc_key\tloss\tlr_encoder\tlr_task";

/// Trains `model` in place, one document per step. Returns the per-step
/// history; the same seed and inputs always give the same history.
pub fn train(
    documents: &[Document],
    model: &mut CorefModel,
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    if documents.is_empty() {
        return Err(Error::config("no training documents"));
    }
    let segmentations = documents
        .iter()
        .map(|d| segment_document(d, &model.config.segmentation))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adam::new(&model.params, config);
    let total = config.epochs * documents.len();
    let mut fixed_windows: Vec<Option<(Document, Range<usize>)>> = vec![None; documents.len()];
    let mut history = Vec::with_capacity(total);
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{LOG_HEADER}")?;
    }
    let mut order: Vec<usize> = (0..documents.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let step = history.len();
            let doc = &documents[i];
            let segments = &segmentations[i];
            let (view, window) = match config.max_training_segments {
                None => (doc.clone(), 0..segments.len()),
                Some(k) if config.resample_truncation => {
                    let t = truncate_document(doc, segments, k, &mut rng);
                    (t.document, t.window)
                }
                Some(k) => fixed_windows[i]
                    .get_or_insert_with(|| {
                        let t = truncate_document(doc, segments, k, &mut rng);
                        (t.document, t.window)
                    })
                    .clone(),
            };
            let mode = RunMode::Train {
                seed: rng.gen(),
                dropout: config.dropout,
            };
            let (loss, grads) = model.loss_and_gradients(&view, mode)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    doc_key: doc.doc_key.clone(),
                    loss,
                });
            }
            let lr_encoder = lr_schedule(step, total, config.lr_encoder);
            let lr_task = lr_schedule(step, total, config.lr_task);
            optimizer.step(&mut model.params, grads, lr_encoder, lr_task);
            let record = StepRecord {
                step,
                epoch,
                doc_key: doc.doc_key.clone(),
                loss,
                lr_encoder,
                lr_task,
                window,
            };
            log::debug!("{}", record.log_line());
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", record.log_line())?;
            }
            history.push(record);
        }
    }
    Ok(history)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    /// Checks at most this many evenly spaced entries per tensor.
    pub max_entries_per_param: Option<usize>,
    /// Test hook: perturbs the analytic gradient of one component.
    pub corrupt: Option<Component>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            max_entries_per_param: None,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentCheck {
    pub component: Component,
    pub entries_checked: usize,
    /// `max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-12)`
    /// over the component's checked entries.
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub tolerance: f64,
    pub components: Vec<ComponentCheck>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<Component> {
        self.components.iter().filter(|c| !c.passed).map(|c| c.component).collect()
    }

    pub fn get(&self, component: Component) -> Option<&ComponentCheck> {
        self.components.iter().find(|c| c.component == component)
    }

    pub fn table(&self) -> String {
        let mut out = String::from("component\tentries\tmax_rel_error\tmax_abs_grad\tstatus\n");
        for c in &self.components {
            out.push_str(&format!(
                "{}\t{}\t{:.3e}\t{:.3e}\t{}\n",
                c.component,
                c.entries_checked,
                c.max_relative_error,
                c.max_abs_gradient,
                if c.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Compares analytic loss gradients with central differences, per model
/// component, at 64-bit precision in eval mode.
pub fn gradient_check(model: &CorefModel, doc: &Document, options: GradCheckOptions) -> Result<GradientReport> {
    let mut probe = model.clone();
    probe.config.precision = Precision::F64;
    let (_, mut analytic) = probe.loss_and_gradients(doc, RunMode::Eval)?;
    if let Some(bad) = options.corrupt {
        for (id, p) in probe.params.iter() {
            if p.component == bad {
                for g in analytic.get_mut(id).data_mut() {
                    *g = *g * 1.5 + 0.1;
                }
            }
        }
    }
    let ids: Vec<_> = probe.params.iter().map(|(id, p)| (id, p.component)).collect();
    let mut components = Vec::new();
    for component in Component::ALL {
        let mut diffs = Vec::new();
        let mut scale: f64 = 0.0;
        for &(id, _) in ids.iter().filter(|(_, c)| *c == component) {
            let len = probe.params.get(id).data().len();
            let stride = options.max_entries_per_param.map_or(1, |k| len.div_ceil(k.max(1)));
            for j in (0..len).step_by(stride.max(1)) {
                let original = probe.params.get(id).data()[j];
                probe.params.get_mut(id).data_mut()[j] = original + options.step;
                let plus = probe.loss(doc, RunMode::Eval)?;
                probe.params.get_mut(id).data_mut()[j] = original - options.step;
                let minus = probe.loss(doc, RunMode::Eval)?;
                probe.params.get_mut(id).data_mut()[j] = original;
                let numeric = (plus - minus) / (2.0 * options.step);
                let a = analytic.get(id).data()[j];
                scale = scale.max(a.abs()).max(numeric.abs());
                diffs.push((a - numeric).abs());
            }
        }
        if diffs.is_empty() {
            continue;
        }
        let denom = scale.max(1e-12);
        let max_relative_error = diffs.iter().fold(0.0f64, |m, d| m.max(d / denom));
        components.push(ComponentCheck {
            component,
            entries_checked: diffs.len(),
            max_relative_error,
            max_abs_gradient: scale,
            passed: max_relative_error < options.tolerance,
        });
    }
    Ok(GradientReport {
        tolerance: options.tolerance,
        components,
    })
}
