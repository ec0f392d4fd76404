//! Arbitrary-width binary fixed-point formats.
//!
//! A [`QFormat`] is written `s:INT.FRAC` or `u:INT.FRAC`. For signed formats
//! the integer bits include the sign bit, so `s:1.5` covers `[-1, 1 - 2^-5]`.
//! Every rounding in the crate is round-half-up (ties toward +inf) followed by
//! saturation to the target range; accumulators never saturate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest total bit-width a [`QFormat`] may declare.
pub const MAX_TOTAL_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("format {0} has {1} total bits, expected 1..={MAX_TOTAL_BITS}")]
    BadWidth(String, u32),
    #[error("signed format {0} needs at least one integer bit for the sign")]
    MissingSignBit(String),
    #[error("cannot parse fixed-point format `{0}` (expected s:INT.FRAC or u:INT.FRAC)")]
    Parse(String),
}

/// A binary fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QFormat {
    signed: bool,
    int_bits: u8,
    frac_bits: u8,
}

impl QFormat {
    pub fn new(signed: bool, int_bits: u8, frac_bits: u8) -> Result<Self, FormatError> {
        let total = int_bits as u32 + frac_bits as u32;
        let text = fmt_text(signed, int_bits, frac_bits);
        if total == 0 || total > MAX_TOTAL_BITS {
            return Err(FormatError::BadWidth(text, total));
        }
        if signed && int_bits == 0 {
            return Err(FormatError::MissingSignBit(text));
        }
        Ok(Self {
            signed,
            int_bits,
            frac_bits,
        })
    }

    pub fn signed(int_bits: u8, frac_bits: u8) -> Result<Self, FormatError> {
        Self::new(true, int_bits, frac_bits)
    }

    pub fn unsigned(int_bits: u8, frac_bits: u8) -> Result<Self, FormatError> {
        Self::new(false, int_bits, frac_bits)
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn int_bits(&self) -> u8 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    pub fn total_bits(&self) -> u32 {
        self.int_bits as u32 + self.frac_bits as u32
    }

    /// Value of one least-significant bit, `2^-frac_bits`.
    pub fn step(&self) -> f64 {
        pow2(-(self.frac_bits as i32))
    }

    pub fn min_code(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.total_bits() - 1))
        } else {
            0
        }
    }

    pub fn max_code(&self) -> i64 {
        if self.signed {
            (1i64 << (self.total_bits() - 1)) - 1
        } else {
            (1i64 << self.total_bits()) - 1
        }
    }

    pub fn min_value(&self) -> f64 {
        self.to_real(self.min_code())
    }

    pub fn max_value(&self) -> f64 {
        self.to_real(self.max_code())
    }

    pub fn contains_code(&self, code: i64) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    pub fn saturate(&self, code: i64) -> i64 {
        code.clamp(self.min_code(), self.max_code())
    }

    pub fn to_real(&self, code: i64) -> f64 {
        code as f64 * self.step()
    }

    /// Quantizes `x` with round-half-up and saturation, returning the code.
    pub fn quantize_code(&self, x: f64) -> i64 {
        debug_assert!(x.is_finite(), "quantize of non-finite value");
        let scaled = x * pow2(self.frac_bits as i32);
        let code = round_half_up(scaled);
        if code <= self.min_code() as f64 {
            self.min_code()
        } else if code >= self.max_code() as f64 {
            self.max_code()
        } else {
            code as i64
        }
    }

    /// Every code of the format in ascending order.
    pub fn codes(&self) -> impl Iterator<Item = i64> {
        self.min_code()..=self.max_code()
    }
}

fn fmt_text(signed: bool, int_bits: u8, frac_bits: u8) -> String {
    format!("{}:{}.{}", if signed { 's' } else { 'u' }, int_bits, frac_bits)
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_text(self.signed, self.int_bits, self.frac_bits))
    }
}

impl FromStr for QFormat {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FormatError::Parse(s.to_string());
        let (sign, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let signed = match sign {
            "s" => true,
            "u" => false,
            _ => return Err(bad()),
        };
        let (int, frac) = rest.split_once('.').ok_or_else(bad)?;
        let int_bits: u8 = int.parse().map_err(|_| bad())?;
        let frac_bits: u8 = frac.parse().map_err(|_| bad())?;
        QFormat::new(signed, int_bits, frac_bits)
    }
}

impl Serialize for QFormat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QFormat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// `2^e` for small exponents, exact.
pub fn pow2(e: i32) -> f64 {
    f64::powi(2.0, e)
}

/// Rounds to the nearest integer with ties toward +inf.
///
/// `floor(x + 0.5)` misrounds values just below one half, so the fractional
/// part is compared instead (exact for |x| < 2^52).
pub fn round_half_up(x: f64) -> f64 {
    let floor = x.floor();
    if x - floor >= 0.5 {
        floor + 1.0
    } else {
        floor
    }
}

/// Integer version of [`round_half_up`] for `value / 2^shift`.
pub fn shift_round_half_up(value: i128, shift: u32) -> i128 {
    if shift == 0 {
        return value;
    }
    let half = 1i128 << (shift - 1);
    (value + half) >> shift
}

/// Rescales an exact code from `from_frac` to `to_frac` fractional bits with
/// round-half-up. Widening is exact.
pub fn rescale(code: i128, from_frac: u32, to_frac: u32) -> i128 {
    if to_frac >= from_frac {
        code << (to_frac - from_frac)
    } else {
        shift_round_half_up(code, from_frac - to_frac)
    }
}

/// Requantizes an exact code at `frac` fractional bits into `fmt`.
pub fn requantize(code: i128, frac: u32, fmt: QFormat) -> i64 {
    let r = rescale(code, frac, fmt.frac_bits() as u32);
    r.clamp(fmt.min_code() as i128, fmt.max_code() as i128) as i64
}

/// An integer code tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedValue {
    code: i64,
    fmt: QFormat,
}

impl FixedValue {
    /// Wraps a code, saturating it into the format's range.
    pub fn from_code(code: i64, fmt: QFormat) -> Self {
        Self {
            code: fmt.saturate(code),
            fmt,
        }
    }

    pub fn code(&self) -> i64 {
        self.code
    }

    pub fn format(&self) -> QFormat {
        self.fmt
    }

    pub fn to_real(&self) -> f64 {
        self.fmt.to_real(self.code)
    }
}

impl fmt::Display for FixedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}#{})", self.to_real(), self.fmt, self.code)
    }
}

/// Rounding modes accepted by [`quantize`]. Only half-up exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    HalfUp,
}

/// Nearest representable value to `x` in `fmt`, saturating at the range ends.
pub fn quantize(x: f64, fmt: QFormat, rounding: Rounding) -> FixedValue {
    match rounding {
        Rounding::HalfUp => FixedValue {
            code: fmt.quantize_code(x),
            fmt,
        },
    }
}

/// Full-width product of `a` and `b`, requantized into `out_fmt`.
pub fn fx_mul(a: FixedValue, b: FixedValue, out_fmt: QFormat) -> FixedValue {
    let product = a.code as i128 * b.code as i128;
    let frac = a.fmt.frac_bits() as u32 + b.fmt.frac_bits() as u32;
    FixedValue {
        code: requantize(product, frac, out_fmt),
        fmt: out_fmt,
    }
}

/// Exact running sum of fixed-point codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulator {
    pub code: i64,
    pub frac_bits: u8,
    /// Register width that makes overflow impossible for this many terms.
    pub width_bits: u32,
}

impl Accumulator {
    pub fn to_real(&self) -> f64 {
        self.code as f64 * pow2(-(self.frac_bits as i32))
    }
}

/// Bits needed to hold `count` terms of `fmt` without overflow.
pub fn accumulator_width(fmt: QFormat, count: usize) -> u32 {
    let growth = if count <= 1 {
        0
    } else {
        usize::BITS - (count - 1).leading_zeros()
    };
    fmt.total_bits() + growth
}

/// Exact sum of values sharing one format. Panics if the formats differ.
pub fn fx_accumulate(values: &[FixedValue]) -> Option<Accumulator> {
    let fmt = values.first()?.fmt;
    let mut sum: i128 = 0;
    for v in values {
        assert_eq!(v.fmt, fmt, "fx_accumulate requires a shared format");
        sum += v.code as i128;
    }
    Some(Accumulator {
        code: i64::try_from(sum).expect("accumulator exceeds 64 bits"),
        frac_bits: fmt.frac_bits(),
        width_bits: accumulator_width(fmt, values.len()),
    })
}
