//! Spike-time supervised learning.
//!
//! Output errors are differences between target and actual firing steps.
//! Output deltas are normalized and turned into signed backward spikes whose
//! latency encodes magnitude (earlier = larger). Hidden layers integrate those
//! spikes through the forward weights like IF neurons, and the normalized
//! backward potential becomes the hidden delta. Every weight update is gated
//! on the presynaptic spike strictly preceding the postsynaptic one.

use crate::encoding::SpikeTime;
use crate::error::{Error, Result};
use crate::forward::{run_forward, ForwardTrace};
use crate::network::{Matrix, Network, NormalizationRule, NumericMode, Polarity, Real};

/// Per-output target firing steps for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetTimes {
    pub targets: Vec<u32>,
    pub gamma: u32,
    /// Earliest output step (`t_max` when every output was silent).
    pub t_min: u32,
    pub all_silent: bool,
}

/// Target steps: the label neuron `gamma` steps before the earliest output,
/// competitors at least `gamma` steps after it. When every output is silent
/// the label neuron targets `t_max - gamma` and the rest `t_max`. Targets are
/// clamped to `[0, t_max]`.
pub fn compute_target_times(output_times: &[SpikeTime], label: usize, gamma: u32, t_max: u32) -> Result<TargetTimes> {
    if label >= output_times.len() {
        return Err(Error::usage(format!(
            "label {label} out of range for {} outputs",
            output_times.len()
        )));
    }
    if gamma < 1 {
        return Err(Error::usage("gamma must be at least one step"));
    }
    let all_silent = output_times.iter().all(|s| !s.fired);
    let clamp = |t: i64| t.clamp(0, t_max as i64) as u32;
    if all_silent {
        let targets = (0..output_times.len())
            .map(|j| {
                if j == label {
                    clamp(t_max as i64 - gamma as i64)
                } else {
                    t_max
                }
            })
            .collect();
        return Ok(TargetTimes {
            targets,
            gamma,
            t_min: t_max,
            all_silent,
        });
    }
    let t_min = output_times.iter().map(|s| s.step).min().expect("non-empty");
    let margin = t_min as i64 + gamma as i64;
    let targets = output_times
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if j == label {
                clamp(t_min as i64 - gamma as i64)
            } else if (s.step as i64) < margin {
                clamp(margin)
            } else {
                s.step
            }
        })
        .collect();
    Ok(TargetTimes {
        targets,
        gamma,
        t_min,
        all_silent,
    })
}

/// `T_j - t_j` in steps.
pub fn error_steps(actual: &[SpikeTime], targets: &TargetTimes) -> Vec<i64> {
    actual
        .iter()
        .zip(&targets.targets)
        .map(|(s, &t)| t as i64 - s.step as i64)
        .collect()
}

/// `e_j = (T_j - t_j) / t_max`.
pub fn compute_output_error(actual: &[SpikeTime], targets: &TargetTimes, t_max: u32) -> Vec<f64> {
    error_steps(actual, targets)
        .into_iter()
        .map(|d| d as f64 / t_max as f64)
        .collect()
}

/// Half the squared norm of the error vector.
pub fn loss(e: &[f64]) -> f64 {
    0.5 * e.iter().map(|v| v * v).sum::<f64>()
}

/// `δ_j = -e_j / t_max`.
pub fn output_deltas(e: &[f64], t_max: u32) -> Vec<f64> {
    e.iter().map(|v| -v / t_max as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Set when the deltas carry no signal and the backward pass can stop.
    pub skip_backward: bool,
}

/// Divides each delta by the sum of magnitudes.
pub fn normalize_deltas(deltas: &[f64]) -> Normalized {
    normalize_deltas_with(deltas, NormalizationRule::MagnitudeSum)
}

pub fn normalize_deltas_with(deltas: &[f64], rule: NormalizationRule) -> Normalized {
    match crate::network::normalize_real(deltas, rule) {
        Some(values) => Normalized {
            values,
            skip_backward: false,
        },
        None => Normalized {
            values: vec![0.0; deltas.len()],
            skip_backward: true,
        },
    }
}

/// A signed, timed gradient event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedBackwardSpike {
    pub neuron: usize,
    pub tau: u32,
    pub polarity: Polarity,
}

impl SignedBackwardSpike {
    /// Hardware 5-bit encoding: bit 4 is the sign (1 = negative), bits 0..4
    /// the backward step.
    pub fn encode_5bit(&self) -> Result<u8> {
        if self.tau > 15 {
            return Err(Error::usage(format!(
                "backward step {} does not fit a 4-bit timestamp",
                self.tau
            )));
        }
        let sign = match self.polarity {
            Polarity::Positive => 0,
            Polarity::Negative => 1 << 4,
        };
        Ok(sign | self.tau as u8)
    }

    pub fn decode_5bit(neuron: usize, code: u8) -> Result<Self> {
        if code >= 32 {
            return Err(Error::usage(format!("{code:#x} is not a 5-bit code")));
        }
        Ok(SignedBackwardSpike {
            neuron,
            tau: (code & 0xF) as u32,
            polarity: if code & 0x10 != 0 {
                Polarity::Negative
            } else {
                Polarity::Positive
            },
        })
    }
}

/// Maps `d = round(δ · t_max)` to a spike at `t_max - d` (positive) or
/// `t_max + d` (negative). `d == 0` emits nothing.
pub fn deltas_to_backward_spikes(normalized: &[f64], t_max: u32) -> Vec<SignedBackwardSpike> {
    spikes_from_deltas(&Real, normalized, t_max)
}

pub fn spikes_from_deltas<N: NumericMode>(mode: &N, deltas: &[N::Delta], t_max: u32) -> Vec<SignedBackwardSpike> {
    deltas
        .iter()
        .enumerate()
        .filter_map(|(neuron, &d)| {
            let d = mode.spike_offset(d, t_max).clamp(-(t_max as i64), t_max as i64);
            match d.signum() {
                1 => Some(SignedBackwardSpike {
                    neuron,
                    tau: (t_max as i64 - d) as u32,
                    polarity: Polarity::Positive,
                }),
                -1 => Some(SignedBackwardSpike {
                    neuron,
                    tau: (t_max as i64 + d) as u32,
                    polarity: Polarity::Negative,
                }),
                _ => None,
            }
        })
        .collect()
}

/// Backward IF integration for layer `l`.
///
/// `upper_weights` is `W^{l+1}` (rows: upper neurons, cols: layer `l`).
/// Over backward steps `0..=t_max`, neuron `i` adds `±W_ji` for each upper
/// spike arriving at that step, but only through synapses whose forward
/// spikes satisfy `t^l_i < t^{l+1}_j`. It fires one backward spike the first
/// time its potential exceeds `+θ_i` (positive) or drops below `-θ_i`
/// (negative). Returns the end-of-window potentials and the emitted spikes.
pub fn backward_layer<N: NumericMode>(
    mode: &N,
    upper_spikes: &[SignedBackwardSpike],
    upper_weights: &Matrix<N::Scalar>,
    forward_times_l: &[SpikeTime],
    forward_times_l1: &[SpikeTime],
    thresholds: &[N::Scalar],
    t_max: u32,
) -> Result<(Vec<N::Scalar>, Vec<SignedBackwardSpike>)> {
    let n = upper_weights.cols();
    for (context, expected, actual) in [
        ("backward layer times", n, forward_times_l.len()),
        ("backward layer thresholds", n, thresholds.len()),
        ("backward upper times", upper_weights.rows(), forward_times_l1.len()),
    ] {
        if expected != actual {
            return Err(Error::Dimension {
                context,
                expected,
                actual,
            });
        }
    }
    let mut by_step: Vec<Vec<&SignedBackwardSpike>> = vec![Vec::new(); t_max as usize + 1];
    for s in upper_spikes {
        if s.neuron >= upper_weights.rows() || s.tau > t_max {
            return Err(Error::usage(format!(
                "backward spike {s:?} outside layer of {} neurons / window {t_max}",
                upper_weights.rows()
            )));
        }
        by_step[s.tau as usize].push(s);
    }
    for bucket in &mut by_step {
        bucket.sort_by_key(|s| s.neuron);
    }

    let zero = N::Scalar::default();
    let mut potentials = vec![zero; n];
    let mut spikes = Vec::new();
    let mut spiked = vec![false; n];
    for (tau, bucket) in by_step.iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        for s in bucket {
            let t_upper = forward_times_l1[s.neuron].step;
            let row = upper_weights.row(s.neuron);
            for i in 0..n {
                if forward_times_l[i].step < t_upper {
                    potentials[i] = mode.accumulate_signed(potentials[i], row[i], s.polarity);
                }
            }
        }
        for i in 0..n {
            if spiked[i] {
                continue;
            }
            let theta = thresholds[i];
            let polarity = if potentials[i] > theta {
                Some(Polarity::Positive)
            } else if potentials[i] < mode.negate(theta) {
                Some(Polarity::Negative)
            } else {
                None
            };
            if let Some(polarity) = polarity {
                spiked[i] = true;
                spikes.push(SignedBackwardSpike {
                    neuron: i,
                    tau: tau as u32,
                    polarity,
                });
            }
        }
    }
    spikes.sort_by_key(|s| (s.tau, s.neuron));
    Ok((potentials, spikes))
}

/// Normalized final backward potentials, used as the hidden deltas.
pub fn effective_hidden_deltas(final_delta: &[f64]) -> Vec<f64> {
    normalize_deltas(final_delta).values
}

/// `W_ji += lr · δ_j` wherever `t_pre,i < t_post,j`. The increment is formed
/// once per postsynaptic neuron. Returns the number of updated synapses.
pub fn update_weights<N: NumericMode>(
    mode: &N,
    weights: &mut Matrix<N::Scalar>,
    deltas: &[N::Delta],
    pre_times: &[SpikeTime],
    post_times: &[SpikeTime],
    lr: N::Rate,
) -> Result<u64> {
    for (context, expected, actual) in [
        ("update deltas", weights.rows(), deltas.len()),
        ("update post times", weights.rows(), post_times.len()),
        ("update pre times", weights.cols(), pre_times.len()),
    ] {
        if expected != actual {
            return Err(Error::Dimension {
                context,
                expected,
                actual,
            });
        }
    }
    let zero_delta = N::Delta::default();
    let mut updated = 0;
    for (j, (&d, post)) in deltas.iter().zip(post_times).enumerate() {
        if d == zero_delta || !pre_times.iter().any(|p| p.step < post.step) {
            continue;
        }
        let inc = mode.weight_increment(d, lr);
        for (w, pre) in weights.row_mut(j).iter_mut().zip(pre_times) {
            if pre.step < post.step {
                *w = mode.apply_increment(*w, inc);
                updated += 1;
            }
        }
    }
    Ok(updated)
}

/// Dense weighted-sum hidden deltas,
/// `δ^l_j = Σ_k δ^{l+1}_k · W^{l+1}_kj · [t^l_j < t^{l+1}_k]`.
///
/// Reference computation for checking the spike-time path; training never
/// calls it.
pub mod oracle {
    use super::*;

    pub fn dense_delta_oracle(
        upper_deltas: &[f64],
        upper_weights: &Matrix<f64>,
        forward_times_l: &[SpikeTime],
        forward_times_l1: &[SpikeTime],
    ) -> Result<Vec<f64>> {
        if upper_deltas.len() != upper_weights.rows() || forward_times_l1.len() != upper_weights.rows() {
            return Err(Error::Dimension {
                context: "oracle upper layer",
                expected: upper_weights.rows(),
                actual: upper_deltas.len(),
            });
        }
        if forward_times_l.len() != upper_weights.cols() {
            return Err(Error::Dimension {
                context: "oracle lower layer",
                expected: upper_weights.cols(),
                actual: forward_times_l.len(),
            });
        }
        Ok((0..upper_weights.cols())
            .map(|j| {
                (0..upper_weights.rows())
                    .filter(|&k| forward_times_l[j].step < forward_times_l1[k].step)
                    .map(|k| upper_deltas[k] * upper_weights.get(k, j))
                    .sum()
            })
            .collect())
    }
}

pub use oracle::dense_delta_oracle;

/// Per-step learning parameters, already converted into the network's
/// numeric mode.
#[derive(Debug, Clone)]
pub struct StepParams<N: NumericMode> {
    pub lr: N::Rate,
    pub gamma: u32,
    /// Backward thresholds per hidden layer (excluding the output layer).
    pub backward_thresholds: Vec<Vec<N::Scalar>>,
    pub rule: NormalizationRule,
}

impl<N: NumericMode> StepParams<N> {
    /// Backward thresholds are the forward thresholds times `factor`.
    pub fn new(net: &Network<N>, lr: f64, gamma: u32, backward_threshold_factor: f64) -> Result<Self> {
        if gamma < 1 {
            return Err(Error::usage("gamma must be at least one step"));
        }
        if !(backward_threshold_factor > 0.0) {
            return Err(Error::usage("backward threshold factor must be positive"));
        }
        let layers = net.layers();
        let backward_thresholds = layers[..layers.len() - 1]
            .iter()
            .map(|l| {
                l.thresholds
                    .iter()
                    .map(|&t| {
                        if backward_threshold_factor == 1.0 {
                            t
                        } else {
                            let m = &net.mode;
                            m.scalar_from_f64(m.scalar_to_f64(t) * backward_threshold_factor)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(StepParams {
            lr: net.mode.rate_from_f64(lr)?,
            gamma,
            backward_thresholds,
            rule: NormalizationRule::MagnitudeSum,
        })
    }
}

/// Everything the backward pass computed for one sample.
#[derive(Debug, Clone)]
pub struct BackwardTrace<N: NumericMode> {
    pub targets: TargetTimes,
    pub error_steps: Vec<i64>,
    /// `e`, for reporting.
    pub output_errors: Vec<f64>,
    pub output_deltas: Vec<N::Delta>,
    /// Final backward potentials of hidden layers, `[l - 1]` for layer `l`.
    pub backward_potentials: Vec<Vec<N::Scalar>>,
    /// Backward spikes of every non-input layer, output last.
    pub backward_spikes: Vec<Vec<SignedBackwardSpike>>,
    /// Deltas used for the updates of every non-input layer, output last.
    pub effective_deltas: Vec<Vec<N::Delta>>,
    /// The output deltas were all zero; no backward spikes were produced.
    pub skipped_backward: bool,
    pub updated_synapses: u64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome<N: NumericMode> {
    pub forward: ForwardTrace<N::Scalar>,
    pub backward: BackwardTrace<N>,
    pub loss: f64,
}

/// One online learning step on a single sample.
///
/// Deltas for every layer are derived from the pre-update weights; updates
/// are then applied output layer first, hidden layers from deepest to
/// shallowest. The output layer is updated with the raw output deltas; the
/// normalized ones only drive spike conversion.
pub fn train_step<N: NumericMode>(
    net: &mut Network<N>,
    input_times: &[SpikeTime],
    label: usize,
    params: &StepParams<N>,
) -> Result<StepOutcome<N>> {
    let t_max = net.t_max;
    let forward = run_forward(net, input_times)?;
    let mode = net.mode.clone();
    let outputs = forward.output_times();
    let targets = compute_target_times(outputs, label, params.gamma, t_max)?;
    let steps = error_steps(outputs, &targets);
    let output_errors: Vec<f64> = steps.iter().map(|&d| d as f64 / t_max as f64).collect();
    // host-side diagnostic, not part of the learning datapath
    let step_loss = loss(&output_errors);
    let output_deltas: Vec<N::Delta> = steps.iter().map(|&d| mode.output_delta(d, t_max)).collect();

    let n_layers = net.layers().len();
    let hidden = n_layers - 1;
    let mut backward_spikes = vec![Vec::new(); n_layers];
    let mut backward_potentials: Vec<Vec<N::Scalar>> = net
        .layers()
        .iter()
        .take(hidden)
        .map(|l| vec![N::Scalar::default(); l.size()])
        .collect();
    let mut effective_deltas: Vec<Vec<N::Delta>> = net
        .layers()
        .iter()
        .map(|l| vec![N::Delta::default(); l.size()])
        .collect();
    effective_deltas[n_layers - 1] = output_deltas.clone();

    let normalized = mode.normalize_deltas(&output_deltas, params.rule);
    let skipped_backward = normalized.is_none();
    if let Some(norm) = normalized {
        backward_spikes[n_layers - 1] = spikes_from_deltas(&mode, &norm, t_max);
        // walk from the last hidden layer toward the first
        for h in (0..hidden).rev() {
            let upper = &net.layers()[h + 1];
            let (potentials, spikes) = backward_layer(
                &mode,
                &backward_spikes[h + 1],
                &upper.weights,
                &forward.spike_times[h + 1],
                &forward.spike_times[h + 2],
                &params.backward_thresholds[h],
                t_max,
            )?;
            if let Some(d) = mode.normalize_potentials(&potentials, params.rule) {
                effective_deltas[h] = d;
            }
            backward_potentials[h] = potentials;
            backward_spikes[h] = spikes;
        }
    }

    let mut updated_synapses = 0;
    for l in (0..n_layers).rev() {
        let layer = &mut net.layers_mut()[l];
        updated_synapses += update_weights(
            &mode,
            &mut layer.weights,
            &effective_deltas[l],
            &forward.spike_times[l],
            &forward.spike_times[l + 1],
            params.lr,
        )?;
    }

    Ok(StepOutcome {
        backward: BackwardTrace {
            targets,
            error_steps: steps,
            output_errors,
            output_deltas,
            backward_potentials,
            backward_spikes,
            effective_deltas,
            skipped_backward,
            updated_synapses,
        },
        forward,
        loss: step_loss,
    })
}
