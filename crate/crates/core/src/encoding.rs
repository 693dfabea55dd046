//! Intensity-to-latency encoding: every input neuron fires exactly once, and
//! brighter pixels fire earlier.

use crate::error::{Error, Result};

/// Firing step of one neuron within a sample.
///
/// Silent neurons carry a placeholder at `t_max` with `fired == false` so the
/// learning rule still has a time to compute errors against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpikeTime {
    pub step: u32,
    pub fired: bool,
}

impl SpikeTime {
    pub const fn fired(step: u32) -> Self {
        SpikeTime { step, fired: true }
    }

    pub const fn placeholder(t_max: u32) -> Self {
        SpikeTime {
            step: t_max,
            fired: false,
        }
    }

    pub fn is_placeholder(self) -> bool {
        !self.fired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingConfig {
    pub i_max: u32,
    /// Last valid step; steps run `0..=t_max`.
    pub t_max: u32,
}

impl EncodingConfig {
    pub fn new(i_max: u32, t_max: u32) -> Result<Self> {
        if i_max < 1 || t_max < 1 {
            return Err(Error::usage(format!(
                "encoding needs i_max >= 1 and t_max >= 1 (got {i_max}, {t_max})"
            )));
        }
        Ok(EncodingConfig { i_max, t_max })
    }

    /// 4-bit hardware timestamps: a 16-step window.
    pub fn hardware(i_max: u32) -> Result<Self> {
        Self::new(i_max, 15)
    }
}

/// `t_i = floor((i_max - I_i) / i_max * t_max)`, evaluated exactly in integers.
pub fn encode_pixel(pixel: u32, cfg: EncodingConfig) -> Result<SpikeTime> {
    if pixel > cfg.i_max {
        return Err(Error::Input(format!(
            "pixel intensity {pixel} exceeds i_max {}",
            cfg.i_max
        )));
    }
    let step = (cfg.i_max - pixel) as u64 * cfg.t_max as u64 / cfg.i_max as u64;
    Ok(SpikeTime::fired(step as u32))
}

pub fn encode_image<P>(pixels: &[P], cfg: EncodingConfig) -> Result<Vec<SpikeTime>>
where
    P: Copy + Into<u32>,
{
    pixels
        .iter()
        .map(|&p| encode_pixel(p.into(), cfg))
        .collect()
}

/// Indices of the neurons spiking at step `t`, ascending.
pub fn decode_step_events(times: &[SpikeTime], t: u32) -> Vec<usize> {
    times
        .iter()
        .enumerate()
        .filter(|(_, s)| s.step == t)
        .map(|(i, _)| i)
        .collect()
}

/// Groups neuron indices by firing step (`0..=t_max`), ascending index order
/// within each step. Placeholders are skipped.
pub(crate) fn bucket_by_step(times: &[SpikeTime], t_max: u32) -> Vec<Vec<usize>> {
    let mut buckets = vec![Vec::new(); t_max as usize + 1];
    for (i, s) in times.iter().enumerate() {
        if s.fired && s.step <= t_max {
            buckets[s.step as usize].push(i);
        }
    }
    buckets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(v: &[SpikeTime]) -> Vec<u32> {
        v.iter().map(|s| s.step).collect()
    }

    #[test]
    fn encode_examples() {
        let cfg = EncodingConfig::new(15, 15).unwrap();
        assert_eq!(encode_pixel(15, cfg).unwrap(), SpikeTime::fired(0));
        assert_eq!(encode_pixel(0, cfg).unwrap(), SpikeTime::fired(15));
        assert_eq!(encode_pixel(7, cfg).unwrap(), SpikeTime::fired(8));
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let cfg = EncodingConfig::new(15, 15).unwrap();
        assert!(matches!(encode_image(&[3u8, 16], cfg), Err(Error::Input(_))));
    }

    #[test]
    fn encode_matches_float_formula_for_byte_images() {
        let cfg = EncodingConfig::new(255, 255).unwrap();
        for p in 0u32..=255 {
            let expect = ((255.0 - p as f64) / 255.0 * 255.0).floor() as u32;
            assert_eq!(encode_pixel(p, cfg).unwrap().step, expect);
        }
    }

    #[test]
    fn config_validation() {
        assert!(EncodingConfig::new(0, 15).is_err());
        assert!(EncodingConfig::new(15, 0).is_err());
        assert_eq!(EncodingConfig::hardware(15).unwrap().t_max, 15);
    }

    #[test]
    fn decode_examples() {
        let times: Vec<_> = [0, 15, 8].into_iter().map(SpikeTime::fired).collect();
        assert_eq!(decode_step_events(&times, 8), vec![2]);
        assert!(decode_step_events(&times, 3).is_empty());
        let same: Vec<_> = [5, 5, 5].into_iter().map(SpikeTime::fired).collect();
        assert_eq!(decode_step_events(&same, 5), vec![0, 1, 2]);
        assert_eq!(steps(&same), vec![5, 5, 5]);
    }

    #[test]
    fn buckets_skip_placeholders() {
        let times = [SpikeTime::fired(1), SpikeTime::placeholder(3), SpikeTime::fired(1)];
        let b = bucket_by_step(&times, 3);
        assert_eq!(b, vec![vec![], vec![0, 2], vec![], vec![]]);
    }
}
