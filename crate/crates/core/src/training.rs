//! Epoch loop, evaluation and sparsity reporting.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audit::{self, MulCounts};
use crate::backward::{self, compute_target_times, error_steps, StepParams};
use crate::datasets::EncodedDataset;
use crate::error::{Error, Result};
use crate::forward::{classify, count_active_synapses, run_forward};
use crate::network::{ModeKind, Network, NormalizationRule, NumericMode};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub gamma: u32,
    pub seed: u64,
    pub shuffle: bool,
    /// Evaluate the test set every N epochs (and always after the last).
    pub eval_every: usize,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: Option<f64>,
    pub backward_threshold_factor: f64,
    pub normalization: NormalizationRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 0.01,
            gamma: 1,
            seed: 0,
            shuffle: true,
            eval_every: 1,
            lr_decay: None,
            backward_threshold_factor: 1.0,
            normalization: NormalizationRule::MagnitudeSum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::usage("epochs must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::usage(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.gamma < 1 {
            return Err(Error::usage("gamma must be at least 1"));
        }
        if self.eval_every < 1 {
            return Err(Error::usage("eval_every must be at least 1"));
        }
        if let Some(d) = self.lr_decay {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::usage(format!("lr decay must be in (0, 1], got {d}")));
            }
        }
        Ok(())
    }
}

/// One row of training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the predictions made during the epoch, before each update.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Mean fraction of synapses active in the training forward passes.
    pub active_fraction: f64,
    pub mul_counts: MulCounts,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,loss,train_acc,test_acc,sparsity,mul_count,float_muls,int_scalar_products,seconds";

    /// `epoch,loss,train_acc,test_acc,sparsity,mul_count,...`; an epoch
    /// without evaluation leaves `test_acc` empty.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{},{:.6},{},{},{},{:.3}",
            self.epoch,
            self.train_loss,
            self.train_accuracy,
            self.test_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
            self.active_fraction,
            self.mul_counts.total(),
            self.mul_counts.float_muls,
            self.mul_counts.int_scalar_products,
            self.seconds
        )
    }
}

fn check_shapes<N: NumericMode>(net: &Network<N>, data: &EncodedDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::usage("dataset is empty"));
    }
    if data.input_size() != net.input_size() {
        return Err(Error::Dimension {
            context: "dataset input size",
            expected: net.input_size(),
            actual: data.input_size(),
        });
    }
    if data.classes > net.output_size() {
        return Err(Error::Dimension {
            context: "dataset classes vs output neurons",
            expected: net.output_size(),
            actual: data.classes,
        });
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= net.output_size()) {
        return Err(Error::usage(format!("label {bad} has no output neuron")));
    }
    Ok(())
}

/// Online training: one [`backward::train_step`] per sample, optionally
/// shuffled each epoch. Deterministic for a given seed.
pub fn train<N: NumericMode>(
    net: &mut Network<N>,
    train_set: &EncodedDataset,
    test_set: Option<&EncodedDataset>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    train_with(net, train_set, test_set, cfg, |_| {})
}

pub fn train_with<N: NumericMode>(
    net: &mut Network<N>,
    train_set: &EncodedDataset,
    test_set: Option<&EncodedDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    check_shapes(net, train_set)?;
    if let Some(t) = test_set {
        check_shapes(net, t)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let synapses = net.synapse_count() as f64;
    let mut lr = cfg.lr;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut params = StepParams::new(net, lr, cfg.gamma, cfg.backward_threshold_factor)?;
        params.rule = cfg.normalization;
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let before = audit::snapshot();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut active = 0u64;
        for &i in &order {
            let label = train_set.labels[i];
            let out = backward::train_step(net, &train_set.inputs[i], label, &params)?;
            if net.mode.kind() == ModeKind::Real && !out.loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss in epoch {epoch}")));
            }
            loss_sum += out.loss;
            correct += (classify(&out.forward) == label) as usize;
            active += count_active_synapses(&out.forward).total;
        }
        let mul_counts = audit::snapshot().since(before);
        let n = train_set.len() as f64;
        let test_accuracy = match test_set {
            Some(t) if epoch % cfg.eval_every == 0 || epoch == cfg.epochs => {
                Some(evaluate(net, t, cfg.gamma)?.accuracy)
            }
            _ => None,
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            test_accuracy,
            active_fraction: active as f64 / n / synapses,
            mul_counts,
            seconds: started.elapsed().as_secs_f64(),
        };
        if net.mode.kind() == ModeKind::Real && !metrics.train_loss.is_finite() {
            return Err(Error::Divergence(format!("mean loss is {} after epoch {epoch}", metrics.train_loss)));
        }
        if let Some(bad) = first_non_finite(net) {
            return Err(Error::Divergence(format!("weight overflow ({bad}) after epoch {epoch}")));
        }
        on_epoch(&metrics);
        history.push(metrics);
        if let Some(d) = cfg.lr_decay {
            lr *= d;
        }
    }
    Ok(history)
}

fn first_non_finite<N: NumericMode>(net: &Network<N>) -> Option<f64> {
    net.layers()
        .iter()
        .flat_map(|l| l.weights.as_slice().iter().chain(&l.thresholds))
        .map(|&v| net.mode.scalar_to_f64(v))
        .find(|v| !v.is_finite())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[label][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// Mean loss against the training targets for margin `gamma`.
    pub mean_loss: f64,
}

/// Read-only evaluation; samples are processed in parallel.
pub fn evaluate<N: NumericMode>(net: &Network<N>, data: &EncodedDataset, gamma: u32) -> Result<Evaluation> {
    check_shapes(net, data)?;
    let t_max = net.t_max;
    let per_sample = data
        .inputs
        .par_iter()
        .zip(&data.labels)
        .map(|(input, &label)| {
            let trace = run_forward(net, input)?;
            let outputs = trace.output_times();
            let targets = compute_target_times(outputs, label, gamma, t_max)?;
            let e: Vec<f64> = error_steps(outputs, &targets)
                .into_iter()
                .map(|d| d as f64 / t_max as f64)
                .collect();
            Ok((label, classify(&trace), backward::loss(&e)))
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = net.output_size();
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (label, predicted, l) in per_sample {
        confusion[label][predicted] += 1;
        correct += (label == predicted) as usize;
        loss += l;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        confusion,
        mean_loss: loss / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassActivity {
    pub class: usize,
    pub samples: usize,
    pub mean_active: f64,
    /// `mean_active` as a percentage of all synapses.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub total_synapses: u64,
    pub per_class: Vec<ClassActivity>,
    pub mean_active: f64,
    pub percentage: f64,
}

impl SparsityReport {
    /// Class with the lowest mean activity among classes that have samples.
    pub fn least_active_class(&self) -> Option<usize> {
        self.per_class
            .iter()
            .filter(|c| c.samples > 0)
            .min_by(|a, b| a.mean_active.total_cmp(&b.mean_active))
            .map(|c| c.class)
    }
}

/// Mean active synapses per class over `data`.
pub fn sparsity_report<N: NumericMode>(net: &Network<N>, data: &EncodedDataset) -> Result<SparsityReport> {
    check_shapes(net, data)?;
    let counts = data
        .inputs
        .par_iter()
        .map(|input| Ok(count_active_synapses(&run_forward(net, input)?).total))
        .collect::<Result<Vec<u64>>>()?;
    let total_synapses = net.synapse_count();
    let classes = net.output_size();
    let mut sums = vec![0u64; classes];
    let mut n = vec![0usize; classes];
    for (&c, &label) in counts.iter().zip(&data.labels) {
        sums[label] += c;
        n[label] += 1;
    }
    let pct = |mean: f64| 100.0 * mean / total_synapses as f64;
    let per_class = (0..classes)
        .map(|class| {
            let mean_active = if n[class] == 0 { 0.0 } else { sums[class] as f64 / n[class] as f64 };
            ClassActivity {
                class,
                samples: n[class],
                mean_active,
                percentage: pct(mean_active),
            }
        })
        .collect();
    let mean_active = counts.iter().sum::<u64>() as f64 / data.len() as f64;
    Ok(SparsityReport {
        total_synapses,
        per_class,
        mean_active,
        percentage: pct(mean_active),
    })
}
