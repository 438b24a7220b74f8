//! Software FP8: E4M3 and E5M2 codecs, block-wise quantization, and delayed
//! scaling with an amax history window.
//!
//! The codecs implement the saturating variant: values beyond the largest
//! finite magnitude clamp to it instead of becoming infinity, and the NaN /
//! infinity codes are excluded from the representable value set. Rounding is
//! round-to-nearest-even on the format grid; subnormals are supported down
//! to the smallest step.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fp8Format {
    /// 1 sign, 4 exponent, 3 mantissa bits; bias 7; max finite 448.
    E4M3,
    /// 1 sign, 5 exponent, 2 mantissa bits; bias 15; max finite 57344.
    E5M2,
}

impl Fp8Format {
    pub fn exponent_bits(self) -> u32 {
        match self {
            Fp8Format::E4M3 => 4,
            Fp8Format::E5M2 => 5,
        }
    }

    pub fn mantissa_bits(self) -> u32 {
        match self {
            Fp8Format::E4M3 => 3,
            Fp8Format::E5M2 => 2,
        }
    }

    pub fn bias(self) -> i32 {
        match self {
            Fp8Format::E4M3 => 7,
            Fp8Format::E5M2 => 15,
        }
    }

    pub fn max_finite(self) -> f64 {
        match self {
            Fp8Format::E4M3 => 448.0,
            Fp8Format::E5M2 => 57344.0,
        }
    }

    pub fn min_subnormal(self) -> f64 {
        match self {
            Fp8Format::E4M3 => 2f64.powi(-9),
            Fp8Format::E5M2 => 2f64.powi(-16),
        }
    }

    /// Largest unbiased exponent of a finite normal value.
    fn max_normal_exp(self) -> i32 {
        match self {
            // E4M3 reuses the all-ones exponent field for values up to 448;
            // only mantissa 0b111 there is NaN.
            Fp8Format::E4M3 => 8,
            Fp8Format::E5M2 => 15,
        }
    }

    /// True when the code is a NaN (or, for E5M2, infinity) pattern that is
    /// outside the saturating value set.
    pub fn is_special(self, code: u8) -> bool {
        let mb = self.mantissa_bits();
        let exp_mask = (1u8 << self.exponent_bits()) - 1;
        let exp_field = (code >> mb) & exp_mask;
        let mant = code & ((1u8 << mb) - 1);
        match self {
            Fp8Format::E4M3 => exp_field == exp_mask && mant == (1 << mb) - 1,
            Fp8Format::E5M2 => exp_field == exp_mask,
        }
    }

    /// Grid spacing at magnitude `a` (the rounding quantum applied there).
    pub fn ulp_at(self, a: f64) -> f64 {
        let mb = self.mantissa_bits() as i32;
        let min_normal_exp = 1 - self.bias();
        let a = a.abs().min(self.max_finite());
        if a < 2f64.powi(min_normal_exp) {
            return 2f64.powi(min_normal_exp - mb);
        }
        let mut e = a.log2().floor() as i32;
        if 2f64.powi(e) > a {
            e -= 1;
        }
        if 2f64.powi(e + 1) <= a {
            e += 1;
        }
        2f64.powi(e.min(self.max_normal_exp()) - mb)
    }
}

/// Decode one code to its real value. NaN codes decode to NaN and E5M2
/// infinity codes to ±inf so the full 256-entry table can be enumerated;
/// [`fp8_encode`] never produces them.
pub fn fp8_decode(code: u8, fmt: Fp8Format) -> f64 {
    let mb = fmt.mantissa_bits();
    let exp_mask = (1u8 << fmt.exponent_bits()) - 1;
    let sign = if code & 0x80 != 0 { -1.0 } else { 1.0 };
    let exp_field = (code >> mb) & exp_mask;
    let mant = (code & ((1u8 << mb) - 1)) as f64;
    let scale = 2f64.powi(-(mb as i32));
    match fmt {
        Fp8Format::E4M3 => {
            if exp_field == exp_mask && mant as u8 == (1 << mb) - 1 {
                return f64::NAN;
            }
        }
        Fp8Format::E5M2 => {
            if exp_field == exp_mask {
                return if mant == 0.0 {
                    sign * f64::INFINITY
                } else {
                    f64::NAN
                };
            }
        }
    }
    let value = if exp_field == 0 {
        mant * scale * 2f64.powi(1 - fmt.bias())
    } else {
        (1.0 + mant * scale) * 2f64.powi(exp_field as i32 - fmt.bias())
    };
    sign * value
}

/// Encode a real to the nearest code, round-to-nearest-even, saturating at
/// the maximum finite magnitude. NaN input is an error.
pub fn fp8_encode(x: f64, fmt: Fp8Format) -> Result<u8> {
    if x.is_nan() {
        return Err(Error::InvalidArgument("fp8_encode: NaN input".into()));
    }
    let mb = fmt.mantissa_bits() as i32;
    let bias = fmt.bias();
    let sign_bit = if x.is_sign_negative() { 0x80u8 } else { 0 };
    let mut a = x.abs();
    if a > fmt.max_finite() {
        a = fmt.max_finite(); // saturate, never infinity
    }
    if a == 0.0 {
        return Ok(sign_bit);
    }

    let min_normal_exp = 1 - bias;
    if a < 2f64.powi(min_normal_exp) {
        // Subnormal grid: multiples of 2^(1-bias-mb).
        let quantum = 2f64.powi(min_normal_exp - mb);
        let steps = (a / quantum).round_ties_even();
        if steps == 0.0 {
            return Ok(sign_bit);
        }
        if steps >= 2f64.powi(mb) {
            // Rounded up into the smallest normal.
            return Ok(sign_bit | (1u8 << mb));
        }
        return Ok(sign_bit | steps as u8);
    }

    let mut e = a.log2().floor() as i32;
    if 2f64.powi(e) > a {
        e -= 1;
    }
    if 2f64.powi(e + 1) <= a {
        e += 1;
    }
    let mut steps = (a / 2f64.powi(e - mb)).round_ties_even();
    if steps >= 2f64.powi(mb + 1) {
        e += 1;
        steps = 2f64.powi(mb);
    }
    if e > fmt.max_normal_exp() {
        // Can only happen by rounding right at the top of the range.
        e = fmt.max_normal_exp();
        steps = 2f64.powi(mb + 1) - 1.0;
    }
    let mant = steps as u8 - (1u8 << mb);
    let exp_field = (e + bias) as u8;
    let code = sign_bit | (exp_field << mb) | mant;
    // The all-ones/all-ones pattern is NaN in E4M3; the clamp above keeps
    // magnitudes at or below 448 so this cannot be produced.
    debug_assert!(!fmt.is_special(code));
    Ok(code)
}

/// Block-quantized tensor data: one scale per block of codes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fp8Block {
    pub codes: Vec<u8>,
    pub scales: Vec<f64>,
    pub block_size: usize,
    pub format: Fp8Format,
}

impl Fp8Block {
    pub fn dequantize(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.codes.len());
        for (i, &code) in self.codes.iter().enumerate() {
            let scale = self.scales[i / self.block_size];
            out.push(if scale == 0.0 {
                0.0
            } else {
                fp8_decode(code, self.format) * scale
            });
        }
        out
    }
}

/// Block-wise E4M3 quantization: per block of 128 values, `scale = amax/448`
/// and the scaled entries are clamped then encoded. All-zero blocks get
/// scale 0 and round-trip exactly.
pub fn quantize_block_e4m3(values: &[f64], block_size: usize) -> Result<Fp8Block> {
    quantize_block(values, block_size, Fp8Format::E4M3)
}

pub fn quantize_block(values: &[f64], block_size: usize, fmt: Fp8Format) -> Result<Fp8Block> {
    if block_size == 0 {
        return Err(Error::InvalidArgument(
            "fp8: block_size must be >= 1".into(),
        ));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("fp8: NaN in input".into()));
    }
    let max = fmt.max_finite();
    let mut codes = Vec::with_capacity(values.len());
    let mut scales = Vec::with_capacity(values.len().div_ceil(block_size));
    for block in values.chunks(block_size) {
        let amax = block.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = amax / max;
        scales.push(scale);
        for &v in block {
            if scale == 0.0 {
                codes.push(0);
            } else {
                let z = (v / scale).clamp(-max, max);
                codes.push(fp8_encode(z, fmt)?);
            }
        }
    }
    Ok(Fp8Block {
        codes,
        scales,
        block_size,
        format: fmt,
    })
}

/// The coarse per-block error bound `amax/3584` for E4M3 (scale × 1/2³);
/// the full elementwise bound adds the rounding quantum at the value.
pub fn e4m3_coarse_error_bound(amax: f64) -> f64 {
    amax / 3584.0
}

/// Sliding window of recent per-tensor maxima; the quantization scale comes
/// from the window maximum, so a spike keeps the scale raised for exactly
/// `capacity` pushes and the scale never underestimates any amax still in
/// the window.
#[derive(Debug, Clone)]
pub struct AmaxHistory {
    buffer: Vec<f64>,
    cursor: usize,
    capacity: usize,
    format: Fp8Format,
}

pub const AMAX_HISTORY_LEN: usize = 32;

impl AmaxHistory {
    pub fn new(format: Fp8Format) -> Self {
        Self::with_capacity(format, AMAX_HISTORY_LEN)
    }

    pub fn with_capacity(format: Fp8Format, capacity: usize) -> Self {
        Self {
            buffer: Vec::with_capacity(capacity),
            cursor: 0,
            capacity,
            format,
        }
    }

    pub fn push(&mut self, amax: f64) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(amax);
        } else {
            self.buffer[self.cursor] = amax;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn scale(&self) -> f64 {
        let m = self.buffer.iter().fold(0.0f64, |a, &b| a.max(b));
        m / self.format.max_finite()
    }
}

/// Push the tensor's amax, derive the scale from the window, and quantize
/// with it. Returns `(codes, scale)`; the history is updated in place.
pub fn delayed_scale_update(history: &mut AmaxHistory, values: &[f64]) -> Result<(Vec<u8>, f64)> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("fp8: NaN in input".into()));
    }
    let amax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    history.push(amax);
    let scale = history.scale();
    let max = history.format.max_finite();
    let mut codes = Vec::with_capacity(values.len());
    for &v in values {
        if scale == 0.0 {
            codes.push(0);
        } else {
            codes.push(fp8_encode((v / scale).clamp(-max, max), history.format)?);
        }
    }
    Ok((codes, scale))
}

/// Quantization signal-to-noise ratio in dB: `6.02·mantissa_bits + 1.76`.
pub fn snr_db(fmt: Fp8Format) -> f64 {
    6.02 * fmt.mantissa_bits() as f64 + 1.76
}

/// Accumulated relative error of summing `n` independently-quantized terms:
/// `√n · ε`.
pub fn accum_error(n: usize, eps: f64) -> f64 {
    (n as f64).sqrt() * eps
}
