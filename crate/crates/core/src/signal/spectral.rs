use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use super::{RealSignal, Signal, C64};
use crate::error::{Error, Result};

/// Largest reduced denominator `resample` accepts for `new_rate / old_rate`.
pub const MAX_RATIO_DENOMINATOR: u64 = 1024;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT, in place.
pub fn fft(buf: &mut [C64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Inverse DFT including the `1/N` factor, in place.
pub fn ifft(buf: &mut [C64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let k = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|s| *s *= k);
}

/// Frequencies of the DFT bins, negative frequencies in the upper half
/// (bin `n/2` of an even-length record is reported as `-fs/2`).
pub fn fft_freqs(n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            if k <= (n - 1) / 2 {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            }
        })
        .collect()
}

/// Circular filtering by a transfer function evaluated on the bin frequencies.
pub fn fft_filter(x: &Signal, transfer_fn: impl Fn(f64) -> C64) -> Signal {
    let h: Vec<C64> = fft_freqs(x.len(), x.sample_rate())
        .into_iter()
        .map(transfer_fn)
        .collect();
    fft_filter_bins(x, &h)
}

/// Circular filtering by a transfer function given directly per DFT bin.
pub fn fft_filter_bins(x: &Signal, bins: &[C64]) -> Signal {
    assert_eq!(bins.len(), x.len(), "transfer function length mismatch");
    let mut buf = x.samples().to_vec();
    fft(&mut buf);
    buf.iter_mut().zip(bins).for_each(|(s, h)| *s *= h);
    ifft(&mut buf);
    Signal::from_parts(buf, x.sample_rate())
}

/// Hilbert transform `H{x}` so that `x + i H{x}` is the analytic signal.
///
/// Multiplies the spectrum by `-i sgn(f)`; the DC bin and, for even lengths,
/// the Nyquist bin are zeroed.
pub fn hilbert_imag(x: &RealSignal) -> RealSignal {
    let n = x.len();
    let mut buf: Vec<C64> = x.samples().iter().map(|&s| C64::new(s, 0.0)).collect();
    fft(&mut buf);
    buf[0] = C64::new(0.0, 0.0);
    for (k, s) in buf.iter_mut().enumerate().skip(1) {
        if 2 * k == n {
            *s = C64::new(0.0, 0.0);
        } else if 2 * k < n {
            *s = C64::new(s.im, -s.re);
        } else {
            *s = C64::new(-s.im, s.re);
        }
    }
    ifft(&mut buf);
    RealSignal::from_parts(buf.into_iter().map(|s| s.re).collect(), x.sample_rate())
}

/// Multiplies sample `n` by `exp(i 2 pi f_shift n / fs)`.
pub fn freq_shift(x: &Signal, f_shift: f64) -> Signal {
    if f_shift == 0.0 {
        return x.clone();
    }
    let w = 2.0 * PI * f_shift / x.sample_rate();
    Signal::from_parts(
        x.samples()
            .iter()
            .enumerate()
            .map(|(n, &s)| s * C64::from_polar(1.0, w * n as f64))
            .collect(),
        x.sample_rate(),
    )
}

/// Reduces `ratio` to `p/q` with `q <= max_den`, if such a fraction matches to
/// within a relative 1e-9.
fn rational_approx(ratio: f64, max_den: u64) -> Option<(u64, u64)> {
    // Continued-fraction convergents.
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor();
        if a > u32::MAX as f64 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - ratio).abs() <= 1e-9 * ratio {
            return Some((h1, k1));
        }
        let frac = x - a as f64;
        if frac < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

/// Moves the spectrum of `buf` (length `n_in`) onto a grid of `n_out` bins,
/// splitting or folding the Nyquist bin the way band-limited interpolation
/// requires. Returns the time-domain result with amplitude preserved.
fn spectral_resize(mut buf: Vec<C64>, n_out: usize) -> Vec<C64> {
    let n_in = buf.len();
    if n_in == n_out {
        return buf;
    }
    fft(&mut buf);
    let n = n_in.min(n_out);
    let mut y = vec![C64::new(0.0, 0.0); n_out];
    let pos = n / 2 + 1;
    let pos = pos.min(n);
    y[..pos].copy_from_slice(&buf[..pos]);
    let neg = n - pos;
    if neg > 0 {
        y[n_out - neg..].copy_from_slice(&buf[n_in - neg..]);
    }
    if n.is_multiple_of(2) {
        if n_out < n_in {
            y[n / 2] += buf[n_in - n / 2];
        } else {
            y[n / 2] *= 0.5;
            y[n_out - n / 2] = y[n / 2];
        }
    }
    let k = n_out as f64 / n_in as f64;
    y.iter_mut().for_each(|s| *s *= k);
    ifft(&mut y);
    y
}

fn resampled_len(len: usize, old_rate: f64, new_rate: f64) -> Result<usize> {
    if !(new_rate.is_finite() && new_rate > 0.0) {
        return Err(Error::invalid_input(format!(
            "target rate must be positive, got {new_rate}"
        )));
    }
    let ratio = new_rate / old_rate;
    if rational_approx(ratio, MAX_RATIO_DENOMINATOR).is_none() {
        return Err(Error::UnsupportedRatio {
            ratio,
            max_denominator: MAX_RATIO_DENOMINATOR,
        });
    }
    let m = (len as f64 * ratio).round() as usize;
    if m == 0 {
        return Err(Error::invalid_input("resampled record would be empty"));
    }
    Ok(m)
}

/// Band-limited resampling by DFT zero-padding or truncation.
pub fn resample(x: &Signal, new_rate: f64) -> Result<Signal> {
    let m = resampled_len(x.len(), x.sample_rate(), new_rate)?;
    Ok(Signal::from_parts(
        spectral_resize(x.samples().to_vec(), m),
        new_rate,
    ))
}

pub fn resample_real(x: &RealSignal, new_rate: f64) -> Result<RealSignal> {
    let m = resampled_len(x.len(), x.sample_rate(), new_rate)?;
    let buf = x.samples().iter().map(|&s| C64::new(s, 0.0)).collect();
    Ok(RealSignal::from_parts(
        spectral_resize(buf, m).into_iter().map(|s| s.re).collect(),
        new_rate,
    ))
}

/// Per-bin power with `sum(periodogram) == mean(|x|^2)`.
pub fn periodogram(x: &Signal) -> Vec<f64> {
    let mut buf = x.samples().to_vec();
    fft(&mut buf);
    let n2 = (x.len() as f64).powi(2);
    buf.into_iter().map(|s| s.norm_sqr() / n2).collect()
}

/// Root-raised-cosine amplitude response at `freq_hz`, unity in the passband.
pub fn rrc_response(freq_hz: f64, baud_hz: f64, rolloff: f64) -> f64 {
    let f = freq_hz.abs() / baud_hz;
    let f1 = 0.5 * (1.0 - rolloff);
    let f2 = 0.5 * (1.0 + rolloff);
    if f <= f1 {
        1.0
    } else if f > f2 {
        0.0
    } else {
        (0.5 * (1.0 + (PI / rolloff * (f - f1)).cos())).sqrt()
    }
}

/// Time-domain RRC impulse response with `span_symbols * sps + 1` taps,
/// symmetric about the centre tap and normalized to unit energy.
pub fn rrc_taps(
    rolloff: f64,
    span_symbols: usize,
    samples_per_symbol: usize,
) -> Result<RealSignal> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::invalid_input(format!(
            "roll-off must lie in [0, 1], got {rolloff}"
        )));
    }
    if span_symbols < 2 || samples_per_symbol < 2 {
        return Err(Error::invalid_input(
            "RRC needs span_symbols >= 2 and samples_per_symbol >= 2",
        ));
    }
    let half = (span_symbols * samples_per_symbol / 2) as isize;
    let b = rolloff;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let t = k as f64 / samples_per_symbol as f64;
            if k == 0 {
                1.0 - b + 4.0 * b / PI
            } else if b > 0.0 && ((4.0 * b * t).abs() - 1.0).abs() < 1e-12 {
                b / 2f64.sqrt()
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin()
                        + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    RealSignal::new(taps, samples_per_symbol as f64)
}
