//! Feedforward network storage and the two numeric execution modes.
//!
//! [`Real`] runs everything in `f64`. [`Fixed`] runs the bit-exact hardware
//! datapath: weights, thresholds and membrane potentials are raw
//! two's-complement integers sharing one fraction width, deltas live in a
//! separate 10-bit format, and the learning rate is a 10-bit constant.

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audit;
use crate::error::{Error, Result};
use crate::fixedpoint::{self, FixedPoint, QFormat, Rounding};

/// Row-major matrix; row `j` holds the incoming weights of postsynaptic
/// neuron `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    context: "matrix row",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Sign of a backward spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Real,
    Fixed,
}

/// How a vector of deltas is scaled before spike conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationRule {
    /// Divide by the sum of magnitudes; signs are preserved and values land
    /// in [-1, 1].
    #[default]
    MagnitudeSum,
    /// Divide by the plain signed sum. Can flip signs or divide by zero.
    SignedSum,
}

/// Arithmetic used by the forward and backward passes.
///
/// `Scalar` holds weights, thresholds and (backward) membrane potentials.
/// `Delta` holds error signals; `Rate` the learning rate.
pub trait NumericMode: Clone + Debug + Send + Sync + 'static {
    type Scalar: Copy + Debug + PartialEq + PartialOrd + Default + Send + Sync;
    type Delta: Copy + Debug + PartialEq + Default + Send + Sync;
    type Rate: Copy + Debug;

    fn kind(&self) -> ModeKind;

    /// Membrane accumulation `acc + w`.
    fn accumulate(&self, acc: Self::Scalar, w: Self::Scalar) -> Self::Scalar;

    /// `acc + w` or `acc - w` depending on the spike polarity.
    fn accumulate_signed(&self, acc: Self::Scalar, w: Self::Scalar, p: Polarity) -> Self::Scalar;

    fn negate(&self, v: Self::Scalar) -> Self::Scalar;

    fn scalar_from_f64(&self, v: f64) -> Self::Scalar;
    fn scalar_to_f64(&self, v: Self::Scalar) -> f64;
    fn delta_to_f64(&self, d: Self::Delta) -> f64;
    fn rate_from_f64(&self, lr: f64) -> Result<Self::Rate>;

    /// `δ = -e / t_max` with `e = error_steps / t_max`.
    fn output_delta(&self, error_steps: i64, t_max: u32) -> Self::Delta;

    /// Normalizes deltas; `None` when there is nothing to propagate.
    fn normalize_deltas(&self, deltas: &[Self::Delta], rule: NormalizationRule) -> Option<Vec<Self::Delta>>;

    /// Normalizes final backward potentials into deltas.
    fn normalize_potentials(&self, potentials: &[Self::Scalar], rule: NormalizationRule) -> Option<Vec<Self::Delta>>;

    /// `round(δ · t_max)`, rounding half away from zero.
    fn spike_offset(&self, d: Self::Delta, t_max: u32) -> i64;

    /// `lr · δ` expressed as a weight increment.
    fn weight_increment(&self, d: Self::Delta, lr: Self::Rate) -> Self::Scalar;

    /// Adds an increment to a stored weight.
    fn apply_increment(&self, w: Self::Scalar, inc: Self::Scalar) -> Self::Scalar;
}

/// Real-valued reference arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Real;

impl NumericMode for Real {
    type Scalar = f64;
    type Delta = f64;
    type Rate = f64;

    fn kind(&self) -> ModeKind {
        ModeKind::Real
    }

    #[inline]
    fn accumulate(&self, acc: f64, w: f64) -> f64 {
        acc + w
    }

    #[inline]
    fn accumulate_signed(&self, acc: f64, w: f64, p: Polarity) -> f64 {
        match p {
            Polarity::Positive => acc + w,
            Polarity::Negative => acc - w,
        }
    }

    fn negate(&self, v: f64) -> f64 {
        -v
    }

    fn scalar_from_f64(&self, v: f64) -> f64 {
        v
    }

    fn scalar_to_f64(&self, v: f64) -> f64 {
        v
    }

    fn delta_to_f64(&self, d: f64) -> f64 {
        d
    }

    fn rate_from_f64(&self, lr: f64) -> Result<f64> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::usage(format!("learning rate must be positive, got {lr}")));
        }
        Ok(lr)
    }

    fn output_delta(&self, error_steps: i64, t_max: u32) -> f64 {
        let e = error_steps as f64 / t_max as f64;
        -e / t_max as f64
    }

    fn normalize_deltas(&self, deltas: &[f64], rule: NormalizationRule) -> Option<Vec<f64>> {
        normalize_real(deltas, rule)
    }

    fn normalize_potentials(&self, potentials: &[f64], rule: NormalizationRule) -> Option<Vec<f64>> {
        normalize_real(potentials, rule)
    }

    fn spike_offset(&self, d: f64, t_max: u32) -> i64 {
        // f64::round is half away from zero
        audit::fmul(d, t_max as f64).round() as i64
    }

    fn weight_increment(&self, d: f64, lr: f64) -> f64 {
        audit::fmul(lr, d)
    }

    fn apply_increment(&self, w: f64, inc: f64) -> f64 {
        w + inc
    }
}

pub(crate) fn normalize_real(values: &[f64], rule: NormalizationRule) -> Option<Vec<f64>> {
    let denom = match rule {
        NormalizationRule::MagnitudeSum => values.iter().map(|v| v.abs()).sum::<f64>(),
        NormalizationRule::SignedSum => values.iter().sum::<f64>(),
    };
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| v / denom).collect())
}

/// Bit-exact hardware arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixed {
    /// Weight and threshold format (12-bit).
    pub weight: QFormat,
    /// Membrane-potential accumulator; same fraction width as `weight`.
    pub potential: QFormat,
    /// Delta format (10-bit).
    pub delta: QFormat,
    /// Learning-rate format (10-bit).
    pub rate: QFormat,
    pub rounding: Rounding,
}

impl Default for Fixed {
    fn default() -> Self {
        Fixed {
            weight: QFormat::Q5_7,
            potential: QFormat::new(9, 7).expect("static format"),
            delta: QFormat::Q1_9,
            rate: QFormat::new(5, 5).expect("static format"),
            rounding: Rounding::NearestEven,
        }
    }
}

impl Fixed {
    pub fn new(weight: QFormat, potential: QFormat, delta: QFormat, rate: QFormat) -> Result<Self> {
        if weight.frac_bits() != potential.frac_bits() {
            return Err(Error::usage(format!(
                "potential format {potential} must share the fraction width of weight format {weight}"
            )));
        }
        if potential.width() < weight.width() {
            return Err(Error::usage(format!(
                "potential format {potential} narrower than weight format {weight}"
            )));
        }
        Ok(Fixed {
            weight,
            potential,
            delta,
            rate,
            rounding: Rounding::NearestEven,
        })
    }

    fn normalize_raw(&self, values: &[i64], rule: NormalizationRule) -> Option<Vec<i32>> {
        let denom: i64 = match rule {
            NormalizationRule::MagnitudeSum => values.iter().map(|v| v.abs()).sum(),
            NormalizationRule::SignedSum => values.iter().sum(),
        };
        if denom == 0 {
            return None;
        }
        let (num_sign, denom) = if denom < 0 { (-1, -denom) } else { (1, denom) };
        let frac = self.delta.frac_bits();
        Some(
            values
                .iter()
                .map(|&v| {
                    let num = if num_sign < 0 { -v } else { v };
                    self.delta
                        .saturate(fixedpoint::div_round_half_away(num << frac, denom))
                })
                .collect(),
        )
    }
}

impl NumericMode for Fixed {
    type Scalar = i32;
    type Delta = i32;
    type Rate = i32;

    fn kind(&self) -> ModeKind {
        ModeKind::Fixed
    }

    #[inline]
    fn accumulate(&self, acc: i32, w: i32) -> i32 {
        fixedpoint::add_sat_raw(acc, w, self.potential)
    }

    #[inline]
    fn accumulate_signed(&self, acc: i32, w: i32, p: Polarity) -> i32 {
        match p {
            Polarity::Positive => fixedpoint::add_sat_raw(acc, w, self.potential),
            // two's-complement negation of the weight, then add
            Polarity::Negative => self.potential.saturate(acc as i64 - w as i64),
        }
    }

    fn negate(&self, v: i32) -> i32 {
        self.potential.saturate(-(v as i64))
    }

    fn scalar_from_f64(&self, v: f64) -> i32 {
        FixedPoint::from_real(v, self.weight, self.rounding).raw()
    }

    fn scalar_to_f64(&self, v: i32) -> f64 {
        v as f64 * self.weight.ulp()
    }

    fn delta_to_f64(&self, d: i32) -> f64 {
        d as f64 * self.delta.ulp()
    }

    /// Positive rates too small for the format become one ulp, so a decayed
    /// schedule never reaches zero.
    fn rate_from_f64(&self, lr: f64) -> Result<i32> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::usage(format!("learning rate must be positive, got {lr}")));
        }
        Ok(FixedPoint::from_real(lr, self.rate, self.rounding).raw().max(1))
    }

    fn output_delta(&self, error_steps: i64, t_max: u32) -> i32 {
        // -(T - t) / t_max^2 in the delta format: a shift and one division
        let denom = fixedpoint::mul_const_shift_add(t_max as i64, t_max);
        let num = -(error_steps << self.delta.frac_bits());
        self.delta
            .saturate(fixedpoint::div_round_half_away(num, denom))
    }

    fn normalize_deltas(&self, deltas: &[i32], rule: NormalizationRule) -> Option<Vec<i32>> {
        let wide: Vec<i64> = deltas.iter().map(|&d| d as i64).collect();
        self.normalize_raw(&wide, rule)
    }

    fn normalize_potentials(&self, potentials: &[i32], rule: NormalizationRule) -> Option<Vec<i32>> {
        let wide: Vec<i64> = potentials.iter().map(|&d| d as i64).collect();
        self.normalize_raw(&wide, rule)
    }

    fn spike_offset(&self, d: i32, t_max: u32) -> i64 {
        let scaled = fixedpoint::mul_const_shift_add(d as i64, t_max);
        fixedpoint::div_round_half_away(scaled, 1i64 << self.delta.frac_bits())
    }

    fn weight_increment(&self, d: i32, lr: i32) -> i32 {
        fixedpoint::scalar_mul_shift(
            FixedPoint::from_raw(d as i64, self.delta),
            FixedPoint::from_raw(lr as i64, self.rate),
            self.weight,
        )
        .raw()
    }

    fn apply_increment(&self, w: i32, inc: i32) -> i32 {
        fixedpoint::add_sat_raw(w, inc, self.weight)
    }
}

/// One non-input layer: incoming weights and per-neuron thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub weights: Matrix<S>,
    pub thresholds: Vec<S>,
}

impl<S: Copy> Layer<S> {
    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn size(&self) -> usize {
        self.weights.rows()
    }
}

/// Weight initialization: uniform in `[low, high]`, seeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl InitConfig {
    pub fn symmetric(w0: f64, seed: u64) -> Self {
        InitConfig {
            low: -w0,
            high: w0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<N: NumericMode> {
    pub mode: N,
    pub t_max: u32,
    input_size: usize,
    layers: Vec<Layer<N::Scalar>>,
}

pub type RealNetwork = Network<Real>;
pub type FixedNetwork = Network<Fixed>;

impl<N: NumericMode> Network<N> {
    pub fn from_layers(mode: N, t_max: u32, input_size: usize, layers: Vec<Layer<N::Scalar>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::usage("network needs at least one non-input layer"));
        }
        if t_max < 1 {
            return Err(Error::usage("t_max must be at least 1"));
        }
        let mut fan_in = input_size;
        let zero = N::Scalar::default();
        for layer in &layers {
            if layer.weights.cols() != fan_in {
                return Err(Error::Dimension {
                    context: "layer fan-in",
                    expected: fan_in,
                    actual: layer.weights.cols(),
                });
            }
            if layer.thresholds.len() != layer.weights.rows() {
                return Err(Error::Dimension {
                    context: "threshold count",
                    expected: layer.weights.rows(),
                    actual: layer.thresholds.len(),
                });
            }
            if layer.thresholds.iter().any(|t| !(*t > zero)) {
                return Err(Error::usage("thresholds must be positive"));
            }
            fan_in = layer.weights.rows();
        }
        Ok(Network {
            mode,
            t_max,
            input_size,
            layers,
        })
    }

    /// Builds a network with seeded uniform weights and one threshold per
    /// layer.
    pub fn init(mode: N, layer_sizes: &[usize], thresholds: &[f64], t_max: u32, init: InitConfig) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::usage("need at least input and output layer sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::usage("layer sizes must be positive"));
        }
        if thresholds.len() != layer_sizes.len() - 1 {
            return Err(Error::Dimension {
                context: "per-layer thresholds",
                expected: layer_sizes.len() - 1,
                actual: thresholds.len(),
            });
        }
        if !(init.low <= init.high) {
            return Err(Error::usage("init range low must not exceed high"));
        }
        if !(init.high - init.low).is_finite() {
            return Err(Error::usage("init range width must be finite"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let layers = layer_sizes
            .windows(2)
            .zip(thresholds)
            .map(|(pair, &theta)| {
                let (fan_in, size) = (pair[0], pair[1]);
                let data = (0..fan_in * size)
                    .map(|_| {
                        let w = if init.low == init.high {
                            init.low
                        } else {
                            rng.gen_range(init.low..=init.high)
                        };
                        mode.scalar_from_f64(w)
                    })
                    .collect();
                Layer {
                    weights: Matrix::from_vec(size, fan_in, data).expect("sized"),
                    thresholds: vec![mode.scalar_from_f64(theta); size],
                }
            })
            .collect();
        Self::from_layers(mode, t_max, layer_sizes[0], layers)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size)
            .chain(self.layers.iter().map(Layer::size))
            .collect()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, Layer::size)
    }

    pub fn layers(&self) -> &[Layer<N::Scalar>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<N::Scalar>] {
        &mut self.layers
    }

    pub fn synapse_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.fan_in() * l.size()) as u64)
            .sum()
    }
}

/// A network in either numeric mode.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyNetwork {
    Real(RealNetwork),
    Fixed(FixedNetwork),
}

impl AnyNetwork {
    pub fn kind(&self) -> ModeKind {
        match self {
            AnyNetwork::Real(_) => ModeKind::Real,
            AnyNetwork::Fixed(_) => ModeKind::Fixed,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        match self {
            AnyNetwork::Real(n) => n.layer_sizes(),
            AnyNetwork::Fixed(n) => n.layer_sizes(),
        }
    }

    pub fn t_max(&self) -> u32 {
        match self {
            AnyNetwork::Real(n) => n.t_max,
            AnyNetwork::Fixed(n) => n.t_max,
        }
    }
}

impl From<RealNetwork> for AnyNetwork {
    fn from(n: RealNetwork) -> Self {
        AnyNetwork::Real(n)
    }
}

impl From<FixedNetwork> for AnyNetwork {
    fn from(n: FixedNetwork) -> Self {
        AnyNetwork::Fixed(n)
    }
}
