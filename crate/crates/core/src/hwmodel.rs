//! Analytical model of the accelerator: cycle counts, throughput, weight
//! quantization and BRAM image export.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPoint, QFormat};
use crate::network::{Fixed, FixedNetwork, Layer, Network, RealNetwork};

/// Time window of one sample in steps (4-bit forward timestamps).
pub const TIME_WINDOW: u64 = 16;
pub const WEIGHTS_PER_WORD: usize = 4;
pub const WORD_BITS: u32 = 48;
pub const BRAM_MAGIC: &[u8; 8] = b"SNNBRAM1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwConfig {
    /// Synapses processed per cycle.
    pub parallelism: usize,
    pub fmax_hz: f64,
    pub forward_timestamp_bits: u32,
    /// Includes the sign bit.
    pub backward_timestamp_bits: u32,
    pub weight_format: QFormat,
}

impl Default for HwConfig {
    fn default() -> Self {
        HwConfig {
            parallelism: 4,
            fmax_hz: 142.45e6,
            forward_timestamp_bits: 4,
            backward_timestamp_bits: 5,
            weight_format: QFormat::Q5_7,
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism < 1 {
            return Err(Error::usage("parallelism must be at least 1"));
        }
        if !(self.fmax_hz.is_finite() && self.fmax_hz > 0.0) {
            return Err(Error::usage(format!("fmax must be positive, got {}", self.fmax_hz)));
        }
        Ok(())
    }
}

/// `ceil(fan_in / parallelism)`.
pub fn layer_cycles(fan_in: usize, parallelism: usize) -> Result<u64> {
    if fan_in < 1 || parallelism < 1 {
        return Err(Error::usage("fan_in and parallelism must be at least 1"));
    }
    Ok(fan_in.div_ceil(parallelism) as u64)
}

/// Forward cycles per time step summed over the non-input layers.
pub fn network_cycles(layer_sizes: &[usize], parallelism: usize) -> Result<u64> {
    if layer_sizes.len() < 2 {
        return Err(Error::usage("need at least two layer sizes"));
    }
    layer_sizes[..layer_sizes.len() - 1]
        .iter()
        .map(|&fan_in| layer_cycles(fan_in, parallelism))
        .sum()
}

/// Backward update cycles for one layer: `ceil(fan_in/4)` clamped to 3..=5.
pub fn backward_layer_cycles(fan_in: usize) -> Result<u64> {
    Ok(layer_cycles(fan_in, WEIGHTS_PER_WORD)?.clamp(3, 5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCycles {
    pub fan_in: usize,
    pub neurons: usize,
    pub forward: u64,
    pub backward: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub layer_sizes: Vec<usize>,
    pub hw: HwConfig,
    pub layers: Vec<LayerCycles>,
    pub cycles_per_sample: u64,
    pub samples_per_second: f64,
    pub feaps: f64,
    /// Backward cycles summed over layers (each in 3..=5).
    pub backward_cycles: u64,
}

pub fn throughput_report(layer_sizes: &[usize], hw: &HwConfig) -> Result<ThroughputReport> {
    hw.validate()?;
    let cycles_per_sample = network_cycles(layer_sizes, hw.parallelism)?;
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            Ok(LayerCycles {
                fan_in: w[0],
                neurons: w[1],
                forward: layer_cycles(w[0], hw.parallelism)?,
                backward: backward_layer_cycles(w[0])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let samples_per_second = hw.fmax_hz / (cycles_per_sample * TIME_WINDOW) as f64;
    Ok(ThroughputReport {
        layer_sizes: layer_sizes.to_vec(),
        hw: *hw,
        backward_cycles: layers.iter().map(|l| l.backward).sum(),
        layers,
        cycles_per_sample,
        samples_per_second,
        feaps: samples_per_second * layer_sizes[0] as f64,
    })
}

impl fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let arch: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        writeln!(
            f,
            "architecture {}  parallelism {}  fmax {:.2} MHz",
            arch.join("-"),
            self.hw.parallelism,
            self.hw.fmax_hz / 1e6
        )?;
        writeln!(f, "{:>6} {:>7} {:>8} {:>14} {:>15}", "layer", "fan_in", "neurons", "forward_cycles", "backward_cycles")?;
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(f, "{:>6} {:>7} {:>8} {:>14} {:>15}", i + 1, l.fan_in, l.neurons, l.forward, l.backward)?;
        }
        writeln!(f, "cycles/sample   {}  (sum of ceil(fan_in / parallelism))", self.cycles_per_sample)?;
        writeln!(
            f,
            "samples/s       {:.4e}  (fmax / (cycles/sample x {TIME_WINDOW} steps))",
            self.samples_per_second
        )?;
        writeln!(f, "FeaPS           {:.4e}  (samples/s x {} input features)", self.feaps, self.layer_sizes[0])?;
        write!(
            f,
            "backward cycles {}  (per layer ceil(fan_in / 4) clamped to 3..5)",
            self.backward_cycles
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantizationReport {
    pub values: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// Values outside the format's range, clamped to its limits.
    pub saturated: usize,
}

impl fmt::Display for QuantizationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} values, max |error| {:.3e}, mean |error| {:.3e}, {} saturated",
            self.values, self.max_abs_error, self.mean_abs_error, self.saturated
        )
    }
}

/// Converts a real-valued network to `mode` by nearest rounding. Thresholds
/// use the weight format too.
pub fn quantize_network(net: &RealNetwork, mode: Fixed) -> Result<(FixedNetwork, QuantizationReport)> {
    let fmt = mode.weight;
    let mut report = QuantizationReport::default();
    let mut err_sum = 0.0;
    let mut convert = |v: f64| {
        let q = FixedPoint::from_real(v, fmt, mode.rounding);
        if v > fmt.max_value() || v < fmt.min_value() {
            report.saturated += 1;
        } else {
            let e = (q.to_real() - v).abs();
            report.max_abs_error = report.max_abs_error.max(e);
            err_sum += e;
        }
        report.values += 1;
        q.raw()
    };
    let mut layers = Vec::with_capacity(net.layers().len());
    for l in net.layers() {
        let weights = l.weights.map(&mut convert);
        let thresholds = l.thresholds.iter().map(|&t| convert(t)).collect();
        layers.push(Layer { weights, thresholds });
    }
    let fixed = Network::from_layers(mode, net.t_max, net.input_size(), layers)?;
    if report.values > report.saturated {
        report.mean_abs_error = err_sum / (report.values - report.saturated) as f64;
    }
    Ok((fixed, report))
}

/// Words of one neuron's incoming weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BramImage {
    pub layer: u16,
    pub neuron: u16,
    /// 48-bit words in the low bits of each `u64`.
    pub words: Vec<u64>,
}

/// Packs raws four to a word, lowest index in the least-significant 12 bits.
/// The last word is zero-padded.
pub fn pack_weights(raws: &[i32], format: QFormat) -> Result<Vec<u64>> {
    let bits = format.width() as u32;
    if bits * WEIGHTS_PER_WORD as u32 > WORD_BITS {
        return Err(Error::usage(format!("{format} does not fit four to a {WORD_BITS}-bit word")));
    }
    let mask = (1u64 << bits) - 1;
    raws.chunks(WEIGHTS_PER_WORD)
        .map(|chunk| {
            let mut word = 0u64;
            for (k, &raw) in chunk.iter().enumerate() {
                if !format.contains_raw(raw as i64) {
                    return Err(Error::usage(format!("raw {raw} outside {format}")));
                }
                word |= (raw as i64 as u64 & mask) << (bits * k as u32);
            }
            Ok(word)
        })
        .collect()
}

/// Inverse of [`pack_weights`]; `count` drops the padding.
pub fn unpack_weights(words: &[u64], count: usize, format: QFormat) -> Result<Vec<i32>> {
    let bits = format.width() as u32;
    if count > words.len() * WEIGHTS_PER_WORD {
        return Err(Error::usage(format!("{count} weights requested from {} words", words.len())));
    }
    let mask = (1u64 << bits) - 1;
    let shift = 64 - bits;
    Ok((0..count)
        .map(|i| {
            let field = (words[i / WEIGHTS_PER_WORD] >> (bits * (i % WEIGHTS_PER_WORD) as u32)) & mask;
            // sign-extend the field
            (((field << shift) as i64) >> shift) as i32
        })
        .collect())
}

/// One image per neuron, layers numbered from 1.
pub fn export_bram(net: &FixedNetwork) -> Result<Vec<BramImage>> {
    let fmt = net.mode.weight;
    let mut images = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for j in 0..layer.size() {
            images.push(BramImage {
                layer: u16::try_from(l + 1).map_err(|_| Error::usage("too many layers"))?,
                neuron: u16::try_from(j).map_err(|_| Error::usage("too many neurons"))?,
                words: pack_weights(layer.weights.row(j), fmt)?,
            });
        }
    }
    Ok(images)
}

impl BramImage {
    /// 16-byte header (magic, layer u16, neuron u16, word count u32, all
    /// little-endian) followed by 6 little-endian bytes per word.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 6 * self.words.len());
        out.extend_from_slice(BRAM_MAGIC);
        out.extend_from_slice(&self.layer.to_le_bytes());
        out.extend_from_slice(&self.neuron.to_le_bytes());
        out.extend_from_slice(&(self.words.len() as u32).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes()[..6]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != BRAM_MAGIC {
            return Err(Error::parse(path, "missing SNNBRAM1 header"));
        }
        let layer = u16::from_le_bytes([bytes[8], bytes[9]]);
        let neuron = u16::from_le_bytes([bytes[10], bytes[11]]);
        let count = u32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as usize;
        let body = &bytes[16..];
        if body.len() != count * 6 {
            return Err(Error::parse(
                path,
                format!("header declares {count} words but body holds {} bytes", body.len()),
            ));
        }
        let words = body
            .chunks(6)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..6].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect();
        Ok(BramImage { layer, neuron, words })
    }

    /// One 12-digit hex word per line.
    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:012x}\n")).collect()
    }

    pub fn from_hex(text: &str, layer: u16, neuron: u16, path: &Path) -> Result<Self> {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(n, line)| {
                if line.len() != 12 {
                    return Err(Error::parse(path, format!("line {}: expected 12 hex digits", n + 1)));
                }
                u64::from_str_radix(line, 16)
                    .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BramImage { layer, neuron, words })
    }

    pub fn file_stem(&self) -> String {
        format!("layer{}_neuron{:03}", self.layer, self.neuron)
    }
}

/// Writes `<stem>.bin` and `<stem>.hex` per image; returns the written paths.
pub fn write_bram_files(images: &[BramImage], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(images.len() * 2);
    for img in images {
        let bin = dir.join(format!("{}.bin", img.file_stem()));
        fs::write(&bin, img.to_bytes())?;
        let hex = dir.join(format!("{}.hex", img.file_stem()));
        fs::File::create(&hex)?.write_all(img.to_hex().as_bytes())?;
        paths.push(bin);
        paths.push(hex);
    }
    Ok(paths)
}

/// Rebuilds weight matrices from binary images; thresholds are taken from
/// `template`, which also fixes the shape.
pub fn import_bram(images: &[BramImage], template: &FixedNetwork) -> Result<FixedNetwork> {
    let fmt = template.mode.weight;
    let mut layers: Vec<Layer<i32>> = template.layers().to_vec();
    let expected: usize = layers.iter().map(Layer::size).sum();
    if images.len() != expected {
        return Err(Error::Dimension {
            context: "BRAM image count",
            expected,
            actual: images.len(),
        });
    }
    for img in images {
        let l = (img.layer as usize)
            .checked_sub(1)
            .filter(|&l| l < layers.len())
            .ok_or_else(|| Error::usage(format!("image for unknown layer {}", img.layer)))?;
        let layer = &mut layers[l];
        let j = img.neuron as usize;
        if j >= layer.size() {
            return Err(Error::usage(format!("image for unknown neuron {} in layer {}", j, img.layer)));
        }
        let fan_in = layer.fan_in();
        if img.words.len() != fan_in.div_ceil(WEIGHTS_PER_WORD) {
            return Err(Error::Dimension {
                context: "BRAM words per neuron",
                expected: fan_in.div_ceil(WEIGHTS_PER_WORD),
                actual: img.words.len(),
            });
        }
        let raws = unpack_weights(&img.words, fan_in, fmt)?;
        layer.weights.row_mut(j).copy_from_slice(&raws);
    }
    Network::from_layers(template.mode, template.t_max, template.input_size(), layers)
}
