//! Custom low-precision floating-point formats and the per-configuration
//! memory model.
//!
//! A format has one sign bit, `exponent_bits` exponent bits and
//! `mantissa_bits` fraction bits. Every exponent code encodes finite values:
//! there are no infinity/NaN encodings and out-of-range magnitudes saturate.
//! Exponent code 0 is the subnormal band.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Largest exponent width accepted; keeps every representable value inside
/// the `f64` normal/subnormal range.
pub const MAX_EXPONENT_BITS: u32 = 10;
pub const MAX_MANTISSA_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FormatDescriptor", into = "FormatDescriptor")]
pub struct PrecisionFormat {
    exponent_bits: u32,
    mantissa_bits: u32,
    bias: i32,
}

/// JSON shape of a format: `{"exponent_bits": 3, "mantissa_bits": 4, "bias": 7}`
/// with `bias` optional.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FormatDescriptor {
    pub exponent_bits: u32,
    pub mantissa_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<i32>,
}

impl TryFrom<FormatDescriptor> for PrecisionFormat {
    type Error = Error;

    fn try_from(d: FormatDescriptor) -> Result<Self> {
        match d.bias {
            Some(b) => PrecisionFormat::with_bias(d.exponent_bits, d.mantissa_bits, b),
            None => PrecisionFormat::new(d.exponent_bits, d.mantissa_bits),
        }
    }
}

impl From<PrecisionFormat> for FormatDescriptor {
    fn from(f: PrecisionFormat) -> Self {
        FormatDescriptor {
            exponent_bits: f.exponent_bits,
            mantissa_bits: f.mantissa_bits,
            bias: Some(f.bias),
        }
    }
}

impl PrecisionFormat {
    /// Format with the default bias `2^exponent_bits - 1`.
    pub fn new(exponent_bits: u32, mantissa_bits: u32) -> Result<Self> {
        if exponent_bits == 0 || exponent_bits > MAX_EXPONENT_BITS {
            return Err(Error::Format(format!(
                "exponent_bits must be in 1..={MAX_EXPONENT_BITS}, got {exponent_bits}"
            )));
        }
        Self::with_bias(exponent_bits, mantissa_bits, (1i32 << exponent_bits) - 1)
    }

    pub fn with_bias(exponent_bits: u32, mantissa_bits: u32, bias: i32) -> Result<Self> {
        if exponent_bits == 0 || exponent_bits > MAX_EXPONENT_BITS {
            return Err(Error::Format(format!(
                "exponent_bits must be in 1..={MAX_EXPONENT_BITS}, got {exponent_bits}"
            )));
        }
        if mantissa_bits > MAX_MANTISSA_BITS {
            return Err(Error::Format(format!(
                "mantissa_bits must be at most {MAX_MANTISSA_BITS}, got {mantissa_bits}"
            )));
        }
        if bias < 0 {
            return Err(Error::Format(format!("bias must be >= 0, got {bias}")));
        }
        let fmt = PrecisionFormat {
            exponent_bits,
            mantissa_bits,
            bias,
        };
        // keep the whole representable range inside f64
        if fmt.max_unbiased_exponent() > 1023 || fmt.min_subnormal_exponent() < -1074 {
            return Err(Error::Format(format!(
                "bias {bias} puts the value range of {fmt} outside f64"
            )));
        }
        Ok(fmt)
    }

    /// IEEE-style bias `2^(exponent_bits-1) - 1`.
    pub fn ieee_like(exponent_bits: u32, mantissa_bits: u32) -> Result<Self> {
        let bias = if exponent_bits == 0 {
            0
        } else {
            (1i32 << (exponent_bits - 1)) - 1
        };
        Self::with_bias(exponent_bits, mantissa_bits, bias)
    }

    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn bias(&self) -> i32 {
        self.bias
    }

    /// Total width including the sign bit.
    pub fn width(&self) -> u32 {
        1 + self.exponent_bits + self.mantissa_bits
    }

    /// Number of distinct bit patterns.
    pub fn pattern_count(&self) -> u64 {
        1u64 << self.width()
    }

    fn max_exponent_code(&self) -> i32 {
        (1i32 << self.exponent_bits) - 1
    }

    fn max_unbiased_exponent(&self) -> i32 {
        self.max_exponent_code() - self.bias
    }

    fn min_normal_exponent(&self) -> i32 {
        1 - self.bias
    }

    fn min_subnormal_exponent(&self) -> i32 {
        self.min_normal_exponent() - self.mantissa_bits as i32
    }

    /// Largest finite magnitude.
    pub fn max_value(&self) -> f64 {
        let m = self.mantissa_bits as i32;
        pow2(self.max_unbiased_exponent()) * (2.0 - pow2(-m))
    }

    /// Smallest positive normal magnitude.
    pub fn min_normal(&self) -> f64 {
        pow2(self.min_normal_exponent())
    }

    /// Smallest positive (subnormal) magnitude, or the smallest normal when
    /// there are no fraction bits.
    pub fn min_positive(&self) -> f64 {
        if self.mantissa_bits == 0 {
            self.min_normal()
        } else {
            pow2(self.min_subnormal_exponent())
        }
    }

    /// Decodes an integer code whose low `width()` bits are the pattern
    /// `sign | exponent | mantissa` (sign in the most significant position).
    pub fn decode_code(&self, code: u64) -> Result<f64> {
        if code >= self.pattern_count() {
            return Err(Error::Format(format!(
                "code {code:#x} does not fit in {} bits",
                self.width()
            )));
        }
        let m_bits = self.mantissa_bits;
        let mantissa = code & ((1u64 << m_bits) - 1);
        let exponent = ((code >> m_bits) & ((1u64 << self.exponent_bits) - 1)) as i32;
        let sign = (code >> (m_bits + self.exponent_bits)) & 1;
        let frac = mantissa as f64 * pow2(-(m_bits as i32));
        let magnitude = if exponent == 0 {
            pow2(self.min_normal_exponent()) * frac
        } else {
            pow2(exponent - self.bias) * (1.0 + frac)
        };
        Ok(if sign == 1 { -magnitude } else { magnitude })
    }

    /// Decodes a bit pattern given most-significant bit first.
    pub fn decode_bits(&self, bits: &[bool]) -> Result<f64> {
        if bits.len() != self.width() as usize {
            return Err(Error::Format(format!(
                "pattern has {} bits, format {self} needs {}",
                bits.len(),
                self.width()
            )));
        }
        let code = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        self.decode_code(code)
    }

    /// Nearest representable value, ties to even, saturating at
    /// `±max_value()`.
    pub fn quantize<T: Real>(&self, x: T) -> Result<T> {
        let v = x.as_f64();
        if !v.is_finite() {
            return Err(Error::Domain(format!("cannot quantize non-finite value {v}")));
        }
        Ok(T::lit(self.quantize_f64(v)))
    }

    fn quantize_f64(&self, x: f64) -> f64 {
        let mag = x.abs();
        if mag == 0.0 {
            return 0.0;
        }
        let max = self.max_value();
        let q = if mag >= max {
            max
        } else {
            let ulp = self.ulp_at(mag);
            let steps = mag / ulp;
            let rounded = if self.mantissa_bits == 0 && mag >= self.min_normal() && steps.fract() == 0.5 {
                // no fraction bits: the code's last bit is the exponent's,
                // so the tie goes to the even exponent field
                let field = binary_exponent(mag) + self.bias;
                if field % 2 == 0 { steps.floor() } else { steps.ceil() }
            } else {
                steps.round_ties_even()
            };
            (rounded * ulp).min(max)
        };
        if x.is_sign_negative() {
            -q
        } else {
            q
        }
    }

    /// Spacing of the representable grid in the binade containing `mag`.
    pub fn ulp_at(&self, mag: f64) -> f64 {
        let m = self.mantissa_bits as i32;
        if mag < self.min_normal() {
            pow2(self.min_subnormal_exponent())
        } else {
            let e = binary_exponent(mag).min(self.max_unbiased_exponent());
            pow2(e - m)
        }
    }

    /// Code of the representable value nearest to `x` (ties to even).
    /// Negative zero is encoded as `+0`.
    pub fn encode_nearest(&self, x: f64) -> Result<u64> {
        let q = self.quantize(x)?;
        let m_bits = self.mantissa_bits;
        let mag = q.abs();
        let (exponent, mantissa) = if mag < self.min_normal() {
            (0u64, (mag / pow2(self.min_subnormal_exponent())) as u64)
        } else {
            let e = binary_exponent(mag);
            let frac = mag / pow2(e) - 1.0;
            ((e + self.bias) as u64, (frac * pow2(m_bits as i32)) as u64)
        };
        let sign = u64::from(q < 0.0);
        Ok((sign << (m_bits + self.exponent_bits)) | (exponent << m_bits) | mantissa)
    }
}

impl std::fmt::Display for PrecisionFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "fp{}(e{}m{},bias={})",
            self.width(),
            self.exponent_bits,
            self.mantissa_bits,
            self.bias
        )
    }
}

/// Parses a string of `0`/`1` characters; `|`, `_` and spaces are ignored.
pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .filter(|c| !matches!(c, '|' | '_' | ' '))
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Format(format!("invalid bit character {other:?}"))),
        })
        .collect()
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// `floor(log2(x))` for finite positive `x`, exact.
fn binary_exponent(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // f64 subnormal
        let mantissa = bits & ((1u64 << 52) - 1);
        -1022 - (mantissa.leading_zeros() as i32 - 11)
    } else {
        raw - 1023
    }
}

/// A (Format A, Format B) pair: Format A stores weights and activations,
/// Format B the optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub format_a: PrecisionFormat,
    pub format_b: PrecisionFormat,
    #[serde(default)]
    pub id: usize,
}

impl PrecisionConfig {
    pub fn new(id: usize, format_a: PrecisionFormat, format_b: PrecisionFormat) -> Self {
        PrecisionConfig {
            format_a,
            format_b,
            id,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "A{}e{}m_B{}e{}m",
            self.format_a.exponent_bits(),
            self.format_a.mantissa_bits(),
            self.format_b.exponent_bits(),
            self.format_b.mantissa_bits()
        )
    }
}

/// Configuration list as stored on disk: either the two format tables
/// (expanded as a cross product, Format A outer) or an explicit pair list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigList {
    Grid {
        format_a: Vec<PrecisionFormat>,
        format_b: Vec<PrecisionFormat>,
    },
    Pairs(Vec<ConfigPair>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigPair {
    pub format_a: PrecisionFormat,
    pub format_b: PrecisionFormat,
}

impl ConfigList {
    pub fn expand(&self) -> Vec<PrecisionConfig> {
        match self {
            ConfigList::Grid { format_a, format_b } => cross_product(format_a, format_b),
            ConfigList::Pairs(pairs) => pairs
                .iter()
                .enumerate()
                .map(|(id, p)| PrecisionConfig::new(id, p.format_a, p.format_b))
                .collect(),
        }
    }
}

pub fn cross_product(a: &[PrecisionFormat], b: &[PrecisionFormat]) -> Vec<PrecisionConfig> {
    a.iter()
        .flat_map(|fa| b.iter().map(move |fb| (*fa, *fb)))
        .enumerate()
        .map(|(id, (fa, fb))| PrecisionConfig::new(id, fa, fb))
        .collect()
}

/// (exponent, mantissa) pairs for the activation/weight formats, widths 5–9.
pub const FORMAT_A_TABLE: [(u32, u32); 11] = [
    (3, 1),
    (3, 2),
    (3, 3),
    (3, 4),
    (4, 1),
    (4, 2),
    (4, 3),
    (4, 4),
    (5, 1),
    (5, 2),
    (5, 3),
];

/// (exponent, mantissa) pairs for the optimizer formats, widths 14–20.
pub const FORMAT_B_TABLE: [(u32, u32); 9] = [
    (6, 7),
    (6, 9),
    (6, 11),
    (7, 7),
    (7, 9),
    (7, 11),
    (8, 7),
    (8, 9),
    (8, 11),
];

pub fn format_a_table() -> Vec<PrecisionFormat> {
    FORMAT_A_TABLE
        .iter()
        .map(|&(e, m)| PrecisionFormat::new(e, m).expect("table format is valid"))
        .collect()
}

pub fn format_b_table() -> Vec<PrecisionFormat> {
    FORMAT_B_TABLE
        .iter()
        .map(|&(e, m)| PrecisionFormat::new(e, m).expect("table format is valid"))
        .collect()
}

/// The 11 × 9 = 99 configuration grid.
pub fn default_config_grid() -> Vec<PrecisionConfig> {
    cross_product(&format_a_table(), &format_b_table())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub weight_count: u64,
    pub activation_elements_per_sample: u64,
    pub optimizer_state_multiplier: f64,
    pub batch_size: u64,
}

impl ArchitectureDescriptor {
    pub fn validate(&self) -> Result<()> {
        if !(self.optimizer_state_multiplier >= 0.0 && self.optimizer_state_multiplier.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "optimizer_state_multiplier must be finite and >= 0, got {}",
                self.optimizer_state_multiplier
            )));
        }
        Ok(())
    }
}

/// Per-component memory in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryBreakdown {
    pub weights: f64,
    pub activations: f64,
    pub optimizer: f64,
}

impl MemoryBreakdown {
    pub fn total(&self) -> f64 {
        self.weights + self.activations + self.optimizer
    }
}

/// Weights and activations are stored in Format A, optimizer state in
/// Format B.
pub fn memory_breakdown(config: &PrecisionConfig, arch: &ArchitectureDescriptor) -> MemoryBreakdown {
    let width_a = config.format_a.width() as f64;
    let width_b = config.format_b.width() as f64;
    let activations = arch.batch_size as f64 * arch.activation_elements_per_sample as f64;
    MemoryBreakdown {
        weights: width_a * arch.weight_count as f64 / 8.0,
        activations: width_a * activations / 8.0,
        optimizer: width_b * arch.optimizer_state_multiplier * arch.weight_count as f64 / 8.0,
    }
}

pub fn memory_bytes(config: &PrecisionConfig, arch: &ArchitectureDescriptor) -> f64 {
    memory_breakdown(config, arch).total()
}
