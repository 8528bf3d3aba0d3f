//! Kramers-Kronig field reconstruction from a detected power rail.
//!
//! For a field `E = A exp(i 2 pi f_c t) + s(t)` whose data band lies below the
//! carrier, `conj(E * exp(-i 2 pi f_c t))` is minimum phase with a one-sided
//! spectrum, so its phase is the Hilbert transform of `log |E|`. The
//! reconstruction therefore ends with a conjugation to return `s(t)` itself.

use crate::config::KkLowpass;
use crate::error::{Error, Result};
use crate::signal::{
    fft_filter, freq_shift, hilbert_imag, resample, resample_real, RealSignal, Signal, C64,
};
use crate::txdsp::matched_filter;
pub use crate::txdsp::min_phase_monitor;

#[derive(Clone, Debug, PartialEq)]
pub struct KKConfig {
    pub internal_oversampling: usize,
    pub carrier_freq_hz: f64,
    /// Clamp level as a fraction of the mean power.
    pub power_floor_rel: f64,
    pub baud_hz: f64,
    pub rolloff: f64,
    pub lowpass: KkLowpass,
}

impl KKConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.internal_oversampling) {
            return Err(Error::invalid_config(
                "KK internal oversampling must lie in [1, 8]",
            ));
        }
        if !(self.power_floor_rel > 0.0) {
            return Err(Error::invalid_config("KK power floor must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KkOutput {
    /// Estimated complex baseband data field at the input sample rate.
    pub field: Signal,
    /// Samples raised to the power floor before the logarithm.
    pub clamped: usize,
}

/// Runs the reconstruction and drops the diagnostics.
pub fn kk_reconstruct(power: &RealSignal, cfg: &KKConfig) -> Result<Signal> {
    kk_reconstruct_with_stats(power, cfg).map(|o| o.field)
}

pub fn kk_reconstruct_with_stats(power: &RealSignal, cfg: &KKConfig) -> Result<KkOutput> {
    cfg.validate()?;
    let fs = power.sample_rate();
    let mean = power.mean();
    if !(mean > 0.0) {
        return Err(Error::invalid_input("KK input power record is all zero"));
    }
    let up = if cfg.internal_oversampling > 1 {
        resample_real(power, fs * cfg.internal_oversampling as f64)?
    } else {
        power.clone()
    };
    let floor = cfg.power_floor_rel * mean;
    let mut clamped = 0usize;
    let p = up.map(|v| {
        if v < floor {
            clamped += 1;
            floor
        } else {
            v
        }
    });
    let half_log = p.map(|v| 0.5 * v.ln());
    let phase = hilbert_imag(&half_log);
    let mut field: Vec<C64> = p
        .samples()
        .iter()
        .zip(phase.samples())
        .map(|(&v, &phi)| C64::from_polar(v.sqrt(), phi))
        .collect();
    let n = field.len() as f64;
    let dc: C64 = field.iter().sum::<C64>() / n;
    for v in field.iter_mut() {
        *v -= dc;
    }
    let field = Signal::new(field, up.sample_rate())?;
    let bb = freq_shift(&field, -cfg.carrier_freq_hz).map(|v| v.conj());
    let bb = if cfg.internal_oversampling > 1 {
        resample(&bb, fs)?
    } else {
        bb
    };
    let out = match cfg.lowpass {
        KkLowpass::Rrc => matched_filter(&bb, cfg.rolloff, cfg.baud_hz),
        KkLowpass::Brickwall => {
            let edge = cfg.baud_hz * (1.0 + cfg.rolloff) / 2.0;
            fft_filter(&bb, |f| {
                C64::new(if f.abs() <= edge { 1.0 } else { 0.0 }, 0.0)
            })
        }
    };
    Ok(KkOutput {
        field: out,
        clamped,
    })
}
