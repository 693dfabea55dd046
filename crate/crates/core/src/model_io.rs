//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SNNMODEL"            8 bytes
//! version               u16 (currently 1)
//! mode                  u8  (0 real, 1 fixed)
//! rounding              u8  (0 nearest-even, 1 truncate)
//! t_max                 u32
//! formats               4 x (int_bits u8, frac_bits u8): weight, potential, delta, rate
//!                       (zeros in real mode)
//! layer count           u16, then that many u32 sizes (input first)
//! per layer             weights row-major, then thresholds
//!                       (f64 bits in real mode, i32 raws in fixed mode)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fixedpoint::{QFormat, Rounding};
use crate::network::{AnyNetwork, Fixed, Layer, Matrix, Network, Real};

pub const MAGIC: &[u8; 8] = b"SNNMODEL";
pub const VERSION: u16 = 1;

const MODE_REAL: u8 = 0;
const MODE_FIXED: u8 = 1;

pub fn to_bytes(net: &AnyNetwork) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (mode, rounding, formats) = match net {
        AnyNetwork::Real(_) => (MODE_REAL, 0u8, [None; 4]),
        AnyNetwork::Fixed(n) => {
            let m = n.mode;
            let r = match m.rounding {
                Rounding::NearestEven => 0,
                Rounding::Truncate => 1,
            };
            (MODE_FIXED, r, [Some(m.weight), Some(m.potential), Some(m.delta), Some(m.rate)])
        }
    };
    out.push(mode);
    out.push(rounding);
    out.extend_from_slice(&net.t_max().to_le_bytes());
    for f in formats {
        let (i, fr) = f.map_or((0, 0), |f| (f.int_bits() as u8, f.frac_bits() as u8));
        out.push(i);
        out.push(fr);
    }
    let sizes = net.layer_sizes();
    out.extend_from_slice(&(sizes.len() as u16).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&(*s as u32).to_le_bytes());
    }
    match net {
        AnyNetwork::Real(n) => {
            for l in n.layers() {
                for v in l.weights.as_slice().iter().chain(&l.thresholds) {
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        AnyNetwork::Fixed(n) => {
            for l in n.layers() {
                for v in l.weights.as_slice().iter().chain(&l.thresholds) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::parse(self.path, format!("truncated model file at byte {}", self.at)))?;
        self.at = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn bad(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, msg)
    }
}

fn read_layers<S: Copy>(
    r: &mut Reader<'_>,
    sizes: &[usize],
    mut read: impl FnMut(&mut Reader<'_>) -> Result<S>,
) -> Result<Vec<Layer<S>>> {
    sizes
        .windows(2)
        .map(|w| {
            let (fan_in, size) = (w[0], w[1]);
            let data = (0..fan_in * size).map(|_| read(r)).collect::<Result<Vec<S>>>()?;
            let thresholds = (0..size).map(|_| read(r)).collect::<Result<Vec<S>>>()?;
            Ok(Layer {
                weights: Matrix::from_vec(size, fan_in, data)?,
                thresholds,
            })
        })
        .collect()
}

/// `path` is only used in error messages.
pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<AnyNetwork> {
    let mut r = Reader { bytes, at: 0, path };
    if &r.take::<8>()? != MAGIC {
        return Err(r.bad("not a model file (bad magic)"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.bad(format!("unsupported model version {version}")));
    }
    let mode = r.u8()?;
    let rounding = match r.u8()? {
        0 => Rounding::NearestEven,
        1 => Rounding::Truncate,
        other => return Err(r.bad(format!("unknown rounding code {other}"))),
    };
    let t_max = r.u32()?;
    let mut formats = [(0u8, 0u8); 4];
    for f in &mut formats {
        *f = (r.u8()?, r.u8()?);
    }
    let count = r.u16()? as usize;
    if count < 2 {
        return Err(r.bad(format!("model declares {count} layer sizes")));
    }
    let sizes = (0..count)
        .map(|_| r.u32().map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    let per_value = if mode == MODE_REAL { 8 } else { 4 };
    let values: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    if bytes.len() - r.at != values * per_value {
        return Err(r.bad(format!(
            "body holds {} bytes, layer sizes {:?} need {}",
            bytes.len() - r.at,
            sizes,
            values * per_value
        )));
    }
    let as_model_error = |e: Error| match e {
        Error::Parse { .. } => e,
        other => Error::parse(path, other.to_string()),
    };
    match mode {
        MODE_REAL => {
            let layers = read_layers(&mut r, &sizes, |r| Ok(f64::from_bits(u64::from_le_bytes(r.take()?))))?;
            Network::from_layers(Real, t_max, sizes[0], layers)
                .map(AnyNetwork::Real)
                .map_err(as_model_error)
        }
        MODE_FIXED => {
            let q = |(i, f): (u8, u8)| QFormat::new(i, f).map_err(as_model_error);
            let mut fixed = Fixed::new(q(formats[0])?, q(formats[1])?, q(formats[2])?, q(formats[3])?)
                .map_err(as_model_error)?;
            fixed.rounding = rounding;
            let layers = read_layers(&mut r, &sizes, |r| Ok(i32::from_le_bytes(r.take()?)))?;
            for l in &layers {
                let fmt = fixed.weight;
                if let Some(bad) = l.weights.as_slice().iter().chain(&l.thresholds).find(|&&v| !fmt.contains_raw(v as i64)) {
                    return Err(Error::parse(path, format!("raw {bad} outside {fmt}")));
                }
            }
            Network::from_layers(fixed, t_max, sizes[0], layers)
                .map(AnyNetwork::Fixed)
                .map_err(as_model_error)
        }
        other => Err(Error::parse(path, format!("unknown mode code {other}"))),
    }
}

pub fn save_model(net: &AnyNetwork, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(net))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<AnyNetwork> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes, path)
}
