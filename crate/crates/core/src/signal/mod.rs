//! Sampled waveforms and the spectral primitives every other stage is built on.
//!
//! All spectral operations treat a record as one period of a periodic signal:
//! filtering is circular convolution over the whole record and the FFT length
//! always equals the record length.

mod dump;
mod spectral;

pub use dump::{read_dump, read_dump_from, write_dump, write_dump_to, DUMP_MAGIC, DUMP_VERSION};
pub use spectral::{
    fft, fft_filter, fft_filter_bins, fft_freqs, freq_shift, hilbert_imag, ifft, periodogram,
    resample, resample_real, rrc_response, rrc_taps, MAX_RATIO_DENOMINATOR,
};

use crate::error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Uniformly sampled complex baseband waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    samples: Vec<C64>,
    sample_rate: f64,
}

/// Uniformly sampled real waveform (photocurrents, Stokes rails).
#[derive(Clone, Debug, PartialEq)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

fn check_rate(sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid_input(format!(
            "sample rate must be positive and finite, got {sample_rate}"
        )));
    }
    Ok(())
}

impl Signal {
    pub fn new(samples: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid_input(
                "signal must contain at least one sample",
            ));
        }
        check_rate(sample_rate)?;
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a signal whose invariants the caller has already established.
    pub(crate) fn from_parts(samples: Vec<C64>, sample_rate: f64) -> Self {
        debug_assert!(!samples.is_empty() && sample_rate > 0.0);
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); len], sample_rate)
    }

    /// `amplitude * exp(i 2 pi freq n / fs)`.
    pub fn tone(freq_hz: f64, amplitude: f64, len: usize, sample_rate: f64) -> Result<Self> {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
        Self::new(
            (0..len)
                .map(|n| C64::from_polar(amplitude, w * n as f64))
                .collect(),
            sample_rate,
        )
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Mean of `|x|^2`.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_parts(
            self.samples.iter().map(|s| s * k).collect(),
            self.sample_rate,
        )
    }

    pub fn map(&self, mut f: impl FnMut(C64) -> C64) -> Self {
        Self::from_parts(
            self.samples.iter().map(|&s| f(s)).collect(),
            self.sample_rate,
        )
    }

    pub fn map_indexed(&self, mut f: impl FnMut(usize, C64) -> C64) -> Self {
        Self::from_parts(
            self.samples
                .iter()
                .enumerate()
                .map(|(n, &s)| f(n, s))
                .collect(),
            self.sample_rate,
        )
    }

    /// Circular shift: output sample `n` is input sample `n - shift`.
    pub fn rotated(&self, shift: isize) -> Self {
        let n = self.len() as isize;
        let k = shift.rem_euclid(n) as usize;
        let mut v = self.samples.clone();
        v.rotate_right(k);
        Self::from_parts(v, self.sample_rate)
    }

    /// Copies out `range`, keeping the sample rate.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid_input(format!(
                "slice {range:?} out of bounds for signal of length {}",
                self.len()
            )));
        }
        Ok(Self::from_parts(
            self.samples[range].to_vec(),
            self.sample_rate,
        ))
    }

    pub fn real(&self) -> RealSignal {
        RealSignal::from_parts(
            self.samples.iter().map(|s| s.re).collect(),
            self.sample_rate,
        )
    }

    pub fn imag(&self) -> RealSignal {
        RealSignal::from_parts(
            self.samples.iter().map(|s| s.im).collect(),
            self.sample_rate,
        )
    }

    pub fn from_quadratures(i: &RealSignal, q: &RealSignal) -> Result<Self> {
        if i.len() != q.len() || i.sample_rate() != q.sample_rate() {
            return Err(Error::invalid_input(
                "I and Q rails differ in length or rate",
            ));
        }
        Ok(Self::from_parts(
            i.samples()
                .iter()
                .zip(q.samples())
                .map(|(&a, &b)| C64::new(a, b))
                .collect(),
            i.sample_rate(),
        ))
    }
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid_input(
                "signal must contain at least one sample",
            ));
        }
        check_rate(sample_rate)?;
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate: f64) -> Self {
        debug_assert!(!samples.is_empty() && sample_rate > 0.0);
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn to_complex(&self) -> Signal {
        Signal::from_parts(
            self.samples.iter().map(|&s| C64::new(s, 0.0)).collect(),
            self.sample_rate,
        )
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_parts(
            self.samples.iter().map(|&s| f(s)).collect(),
            self.sample_rate,
        )
    }

    pub fn rotated(&self, shift: isize) -> Self {
        let n = self.len() as isize;
        let k = shift.rem_euclid(n) as usize;
        let mut v = self.samples.clone();
        v.rotate_right(k);
        Self::from_parts(v, self.sample_rate)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid_input(format!(
                "slice {range:?} out of bounds for signal of length {}",
                self.len()
            )));
        }
        Ok(Self::from_parts(
            self.samples[range].to_vec(),
            self.sample_rate,
        ))
    }
}

/// Root-mean-square difference between two equal-length sample slices.
pub fn rms_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        / a.len() as f64)
        .sqrt()
}

pub fn rms_diff_real(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_bad_rate() {
        assert!(Signal::new(vec![], 1.0).is_err());
        assert!(Signal::new(vec![C64::new(1.0, 0.0)], 0.0).is_err());
        assert!(RealSignal::new(vec![1.0], f64::NAN).is_err());
        assert!(RealSignal::new(vec![], 1.0).is_err());
    }

    #[test]
    fn rotation_is_circular() {
        let s = Signal::new((0..5).map(|k| C64::new(k as f64, 0.0)).collect(), 1.0).unwrap();
        let r = s.rotated(2);
        let re: Vec<f64> = r.samples().iter().map(|c| c.re).collect();
        assert_eq!(re, vec![3.0, 4.0, 0.0, 1.0, 2.0]);
        assert_eq!(s.rotated(-2).rotated(2), s);
    }

    #[test]
    fn power_of_unit_tone() {
        let s = Signal::tone(3.0, 2.0, 64, 64.0).unwrap();
        assert!((s.power() - 4.0).abs() < 1e-12);
    }
}
