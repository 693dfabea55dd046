//! Two's-complement Q-format fixed-point arithmetic.
//!
//! Values are stored as a raw signed integer together with their format.
//! All arithmetic saturates at the format bounds. The only multiplication on
//! the learning datapath is [`scalar_mul_shift`], which is counted by the
//! [`audit`](crate::audit) module.

use std::fmt;

use crate::audit;
use crate::error::{Error, Result};

/// Fixed-point layout: `int_bits` (including the sign bit) + `frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QFormat {
    int_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    /// 12-bit weight format used by the forward datapath.
    pub const Q5_7: QFormat = QFormat { int_bits: 5, frac_bits: 7 };
    /// 10-bit delta / learning-rate format.
    pub const Q1_9: QFormat = QFormat { int_bits: 1, frac_bits: 9 };
    /// Alternative 12-bit weight format used by the output weight updater.
    pub const Q4_8: QFormat = QFormat { int_bits: 4, frac_bits: 8 };

    pub const MIN_WIDTH: u32 = 4;
    pub const MAX_WIDTH: u32 = 32;

    pub fn new(int_bits: u8, frac_bits: u8) -> Result<Self> {
        let width = int_bits as u32 + frac_bits as u32;
        if int_bits == 0 {
            return Err(Error::usage("Q format needs at least the sign bit"));
        }
        if !(Self::MIN_WIDTH..=Self::MAX_WIDTH).contains(&width) {
            return Err(Error::usage(format!(
                "Q{int_bits}.{frac_bits} has width {width}, outside {}..={}",
                Self::MIN_WIDTH,
                Self::MAX_WIDTH
            )));
        }
        Ok(QFormat { int_bits, frac_bits })
    }

    pub const fn int_bits(self) -> u32 {
        self.int_bits as u32
    }

    pub const fn frac_bits(self) -> u32 {
        self.frac_bits as u32
    }

    pub const fn width(self) -> u32 {
        self.int_bits as u32 + self.frac_bits as u32
    }

    pub const fn max_raw(self) -> i64 {
        (1i64 << (self.width() - 1)) - 1
    }

    pub const fn min_raw(self) -> i64 {
        -(1i64 << (self.width() - 1))
    }

    /// Smallest positive step, `2^-frac_bits`.
    pub fn ulp(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    #[inline]
    pub fn saturate(self, wide: i64) -> i32 {
        wide.clamp(self.min_raw(), self.max_raw()) as i32
    }

    pub fn contains_raw(self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

impl std::str::FromStr for QFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix('Q')
            .or_else(|| s.strip_prefix('q'))
            .ok_or_else(|| Error::usage(format!("bad Q format {s:?}, expected e.g. Q5.7")))?;
        let (i, f) = body
            .split_once('.')
            .ok_or_else(|| Error::usage(format!("bad Q format {s:?}, expected e.g. Q5.7")))?;
        let parse = |v: &str| {
            v.parse::<u8>()
                .map_err(|_| Error::usage(format!("bad Q format {s:?}")))
        };
        QFormat::new(parse(i)?, parse(f)?)
    }
}

/// Float to fixed conversion rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    NearestEven,
    /// Toward zero.
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPoint {
    raw: i32,
    format: QFormat,
}

impl FixedPoint {
    /// Builds a value from a raw integer, saturating it into range.
    pub fn from_raw(raw: i64, format: QFormat) -> Self {
        FixedPoint {
            raw: format.saturate(raw),
            format,
        }
    }

    pub fn zero(format: QFormat) -> Self {
        FixedPoint { raw: 0, format }
    }

    /// Quantizes `x`; out-of-range values saturate and NaN maps to zero.
    pub fn from_real(x: f64, format: QFormat, rounding: Rounding) -> Self {
        if x.is_nan() {
            return Self::zero(format);
        }
        // Scaling by a power of two is exact in binary floating point.
        let scaled = x * (format.frac_bits() as f64).exp2();
        let rounded = match rounding {
            Rounding::NearestEven => scaled.round_ties_even(),
            Rounding::Truncate => scaled.trunc(),
        };
        let raw = if rounded >= format.max_raw() as f64 {
            format.max_raw()
        } else if rounded <= format.min_raw() as f64 {
            format.min_raw()
        } else {
            rounded as i64
        };
        FixedPoint {
            raw: raw as i32,
            format,
        }
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    pub fn to_real(self) -> f64 {
        self.raw as f64 * self.format.ulp()
    }

    pub fn add_sat(self, other: FixedPoint) -> Result<FixedPoint> {
        if self.format != other.format {
            return Err(Error::FormatMismatch {
                left: self.format,
                right: other.format,
            });
        }
        Ok(FixedPoint {
            raw: add_sat_raw(self.raw, other.raw, self.format),
            format: self.format,
        })
    }

    pub fn neg_sat(self) -> FixedPoint {
        FixedPoint::from_raw(-(self.raw as i64), self.format)
    }

    /// Re-expresses the value in another format (arithmetic shift, saturating).
    pub fn convert(self, to: QFormat) -> FixedPoint {
        let shift = to.frac_bits() as i32 - self.format.frac_bits() as i32;
        FixedPoint::from_raw(shift_raw(self.raw as i64, shift), to)
    }
}

impl fmt::Display for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} raw {})", self.to_real(), self.format, self.raw)
    }
}

/// Saturating raw addition in `format`.
#[inline]
pub fn add_sat_raw(a: i32, b: i32, format: QFormat) -> i32 {
    format.saturate(a as i64 + b as i64)
}

/// Left shift for positive `shift`, arithmetic (floor) right shift for negative.
#[inline]
pub(crate) fn shift_raw(value: i64, shift: i32) -> i64 {
    if shift >= 0 {
        value.checked_shl(shift as u32).map_or_else(
            || if value < 0 { i64::MIN } else { i64::MAX },
            |v| {
                if (v >> shift) == value {
                    v
                } else if value < 0 {
                    i64::MIN
                } else {
                    i64::MAX
                }
            },
        )
    } else {
        value >> (-shift).min(63)
    }
}

/// `delta × lr`, downscaled into `out` by an arithmetic right shift.
///
/// The full-width integer product is shifted by
/// `delta.frac + lr.frac - out.frac` bits (floor) and saturated to `out`.
/// This is the single multiplication allowed in the learning datapath.
pub fn scalar_mul_shift(delta: FixedPoint, lr: FixedPoint, out: QFormat) -> FixedPoint {
    audit::record_int_scalar_product();
    let product = delta.raw as i64 * lr.raw as i64;
    let shift = out.frac_bits() as i32 - (delta.format.frac_bits() + lr.format.frac_bits()) as i32;
    FixedPoint::from_raw(shift_raw(product, shift), out)
}

/// Multiplies a raw value by a non-negative constant using shifts and adds
/// only (one add per set bit of `k`).
pub fn mul_const_shift_add(raw: i64, k: u32) -> i64 {
    let mut acc = 0i64;
    let mut bits = k;
    let mut shift = 0;
    while bits != 0 {
        if bits & 1 == 1 {
            acc += raw << shift;
        }
        bits >>= 1;
        shift += 1;
    }
    acc
}

/// Integer division rounding half away from zero. `den` must be positive.
pub(crate) fn div_round_half_away(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = num.abs() / den;
    let r = num.abs() % den;
    let q = if (r << 1) >= den { q + 1 } else { q };
    if num < 0 {
        -q
    } else {
        q
    }
}
