//! Sinusoidal positional encoding of sequence-normalized time.

/// Number of frequency bands; the encoding is `2 * BANDS` wide.
pub const TIME_ENCODING_BANDS: usize = 4;

/// Width of [`positional_encoding`]'s output.
pub const TIME_ENCODING_WIDTH: usize = 2 * TIME_ENCODING_BANDS;

/// Encode a time in [0, 1] as interleaved sinusoids at geometric
/// frequencies `2^k * pi`, k = 0..bands: `(sin, cos, sin, cos, ...)`.
pub fn positional_encoding(t: f64, bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * bands);
    for k in 0..bands {
        let freq = (1u64 << k) as f64 * std::f64::consts::PI;
        out.push((freq * t).sin());
        out.push((freq * t).cos());
    }
    out
}
