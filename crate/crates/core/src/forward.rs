//! Event-driven forward pass of non-leaky integrate-and-fire layers.

use crate::encoding::{bucket_by_step, SpikeTime};
use crate::error::{Error, Result};
use crate::network::{Matrix, Network, NumericMode};

/// Spike times and end-of-window membrane potentials for one sample.
///
/// `spike_times[0]` is the input layer; `spike_times[l]` and
/// `final_potentials[l - 1]` belong to the `l`-th non-input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    pub spike_times: Vec<Vec<SpikeTime>>,
    pub final_potentials: Vec<Vec<S>>,
}

impl<S: Copy + PartialOrd> ForwardTrace<S> {
    pub fn output_times(&self) -> &[SpikeTime] {
        self.spike_times.last().expect("trace has an output layer")
    }

    pub fn output_potentials(&self) -> &[S] {
        self.final_potentials.last().expect("trace has an output layer")
    }
}

/// Runs one layer over the window `0..=t_max`.
///
/// At every step each neuron adds the weights of the inputs spiking at that
/// step (ascending presynaptic index), and fires once, at the first step its
/// potential reaches the threshold. Potentials keep integrating after the
/// spike. Neurons that never reach threshold get a placeholder at `t_max`.
pub fn simulate_layer<N: NumericMode>(
    mode: &N,
    weights: &Matrix<N::Scalar>,
    thresholds: &[N::Scalar],
    input_times: &[SpikeTime],
    t_max: u32,
) -> Result<(Vec<SpikeTime>, Vec<N::Scalar>)> {
    if input_times.len() != weights.cols() {
        return Err(Error::Dimension {
            context: "layer input",
            expected: weights.cols(),
            actual: input_times.len(),
        });
    }
    if thresholds.len() != weights.rows() {
        return Err(Error::Dimension {
            context: "layer thresholds",
            expected: weights.rows(),
            actual: thresholds.len(),
        });
    }
    if let Some(bad) = input_times.iter().find(|s| s.step > t_max) {
        return Err(Error::usage(format!(
            "input spike at step {} beyond t_max {t_max}",
            bad.step
        )));
    }
    let buckets = bucket_by_step(input_times, t_max);
    let mut times = Vec::with_capacity(weights.rows());
    let mut potentials = Vec::with_capacity(weights.rows());
    for (j, &theta) in thresholds.iter().enumerate() {
        let row = weights.row(j);
        let mut v = N::Scalar::default();
        let mut spike = None;
        for (t, bucket) in buckets.iter().enumerate() {
            for &i in bucket {
                v = mode.accumulate(v, row[i]);
            }
            if spike.is_none() && v >= theta {
                spike = Some(t as u32);
            }
        }
        times.push(spike.map_or(SpikeTime::placeholder(t_max), SpikeTime::fired));
        potentials.push(v);
    }
    Ok((times, potentials))
}

/// Chains [`simulate_layer`] through the network, starting from zeroed
/// potentials.
pub fn run_forward<N: NumericMode>(net: &Network<N>, input_times: &[SpikeTime]) -> Result<ForwardTrace<N::Scalar>> {
    if input_times.len() != net.input_size() {
        return Err(Error::Dimension {
            context: "network input",
            expected: net.input_size(),
            actual: input_times.len(),
        });
    }
    let mut spike_times = Vec::with_capacity(net.layers().len() + 1);
    let mut final_potentials = Vec::with_capacity(net.layers().len());
    spike_times.push(input_times.to_vec());
    for layer in net.layers() {
        let prev = spike_times.last().expect("non-empty");
        let (times, v) = simulate_layer(&net.mode, &layer.weights, &layer.thresholds, prev, net.t_max)?;
        spike_times.push(times);
        final_potentials.push(v);
    }
    Ok(ForwardTrace {
        spike_times,
        final_potentials,
    })
}

/// Earliest fired output neuron; if none fired, the one with the highest
/// final potential. Ties go to the lowest index.
pub fn classify<S: Copy + PartialOrd>(trace: &ForwardTrace<S>) -> usize {
    classify_outputs(trace.output_times(), trace.output_potentials())
}

pub fn classify_outputs<S: Copy + PartialOrd>(times: &[SpikeTime], potentials: &[S]) -> usize {
    let earliest = times
        .iter()
        .enumerate()
        .filter(|(_, s)| s.fired)
        .fold(None::<(usize, u32)>, |best, (i, s)| match best {
            Some((_, t)) if t <= s.step => best,
            _ => Some((i, s.step)),
        });
    if let Some((i, _)) = earliest {
        return i;
    }
    let mut best = 0;
    for (i, v) in potentials.iter().enumerate().skip(1) {
        if *v > potentials[best] {
            best = i;
        }
    }
    best
}

/// Active synapses per non-input layer for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSynapses {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

/// A synapse `i -> j` is active iff the presynaptic spike strictly precedes
/// the postsynaptic spike (or placeholder).
pub fn count_active_synapses<S>(trace: &ForwardTrace<S>) -> ActiveSynapses {
    let per_layer: Vec<u64> = trace
        .spike_times
        .windows(2)
        .map(|pair| count_precedences(&pair[0], &pair[1]))
        .collect();
    let total = per_layer.iter().sum();
    ActiveSynapses { per_layer, total }
}

/// Number of `(i, j)` pairs with `pre[i] < post[j]`, via a step histogram.
fn count_precedences(pre: &[SpikeTime], post: &[SpikeTime]) -> u64 {
    let max_step = pre
        .iter()
        .chain(post)
        .map(|s| s.step)
        .max()
        .unwrap_or(0) as usize;
    let mut histogram = vec![0u64; max_step + 2];
    for s in pre {
        histogram[s.step as usize + 1] += 1;
    }
    // histogram[t] becomes the count of presynaptic steps < t
    for t in 1..histogram.len() {
        histogram[t] += histogram[t - 1];
    }
    post.iter().map(|s| histogram[s.step as usize]).sum()
}
