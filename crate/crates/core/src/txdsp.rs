//! Transmitter DSP: QAM symbols, RRC pulse shaping, digital carrier insertion
//! and the dual-polarization frame with its Stokes training preamble.
//!
//! Per polarization a frame is laid out as
//!
//! ```text
//! | dark lead | slot 1 | slot 2 | slot 3 | slot 4 | guard | pilots | payload | guard |
//!   G symbols   L samples each (carrier off)        `------- carrier on -------'
//! ```
//!
//! The carrier-on part (the "data section") is pulse shaped as one circular
//! block. Its mean power is normalised to 1 per polarization, split between
//! data and carrier according to the CSPR, so the unit-amplitude training
//! slots and the payload sit at the same optical power.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_cd, CdDirection};
use crate::config::{CdCompArm, LinkConfig};
use crate::error::{Error, Result};
use crate::modulation::{map_bits, ModFormat};
use crate::seed::{stream_seed, Stream};
use crate::signal::{fft_filter, rrc_response, Signal, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct CarrierPlan {
    pub cspr_db: f64,
    pub guard_band_hz: f64,
    pub carrier_freq_hz: f64,
}

impl CarrierPlan {
    /// Carrier just above the upper signal edge `Rs (1 + beta) / 2`.
    pub fn new(baud_hz: f64, rolloff: f64, cspr_db: f64, guard_band_hz: f64) -> Self {
        Self {
            cspr_db,
            guard_band_hz,
            carrier_freq_hz: baud_hz * (1.0 + rolloff) / 2.0 + guard_band_hz,
        }
    }

    pub fn ratio(&self) -> f64 {
        10f64.powf(self.cspr_db / 10.0)
    }

    /// Carrier amplitude for a data waveform of mean power `signal_power`.
    pub fn amplitude(&self, signal_power: f64) -> f64 {
        (self.ratio() * signal_power).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameLayout {
    /// Discardable random symbols at each end of the data section; also the
    /// length of the dark lead-in.
    pub guard_symbols: usize,
    pub training_slot_samples: usize,
    /// Samples averaged at the centre of each training slot.
    pub averaging_window: usize,
    pub pilot_symbols: usize,
    pub payload_symbols: usize,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            guard_symbols: 256,
            training_slot_samples: 1024,
            averaging_window: 128,
            pilot_symbols: 1024,
            payload_symbols: 1 << 16,
        }
    }
}

pub const N_TRAINING_SLOTS: usize = 4;

/// Transmitted `(Ex, Ey)` per training slot.
pub fn training_fields() -> [(C64, C64); N_TRAINING_SLOTS] {
    let o = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [(o, z), (z, o), (o, o), (o, i)]
}

impl FrameLayout {
    pub fn validate(&self) -> Result<()> {
        if self.averaging_window == 0 || self.averaging_window > self.training_slot_samples {
            return Err(Error::invalid_config(format!(
                "frame.averaging_window ({}) must lie in 1..=training_slot_samples ({})",
                self.averaging_window, self.training_slot_samples
            )));
        }
        if self.guard_symbols < 8 {
            return Err(Error::invalid_config("frame.guard_symbols must be >= 8"));
        }
        if self.pilot_symbols == 0 || self.payload_symbols == 0 {
            return Err(Error::invalid_config(
                "frame.pilot_symbols and frame.payload_symbols must be > 0",
            ));
        }
        Ok(())
    }

    pub fn lead_samples(&self, sps: usize) -> usize {
        self.guard_symbols * sps
    }

    pub fn slot_start(&self, slot: usize, sps: usize) -> usize {
        self.lead_samples(sps) + slot * self.training_slot_samples
    }

    pub fn data_start(&self, sps: usize) -> usize {
        self.slot_start(N_TRAINING_SLOTS, sps)
    }

    /// Symbols in the carrier-on data section, guards included.
    pub fn data_symbols(&self) -> usize {
        2 * self.guard_symbols + self.pilot_symbols + self.payload_symbols
    }

    pub fn frame_len(&self, sps: usize) -> usize {
        self.data_start(sps) + self.data_symbols() * sps
    }

    /// Index of the first pilot within the data section, in symbols.
    pub fn first_pilot(&self) -> usize {
        self.guard_symbols
    }

    pub fn first_payload(&self) -> usize {
        self.guard_symbols + self.pilot_symbols
    }
}

/// Known and random content of one polarization tributary.
#[derive(Clone, Debug, PartialEq)]
pub struct Tributary {
    /// Every symbol of the data section (guards, pilots, payload).
    pub symbols: Vec<C64>,
    pub pilots: Vec<C64>,
    pub payload_bits: Vec<u8>,
    pub payload: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualPolFrame {
    pub x: Signal,
    pub y: Signal,
    pub layout: FrameLayout,
    pub sps: usize,
    pub baud_hz: f64,
    pub rolloff: f64,
    pub format: ModFormat,
    pub carrier: CarrierPlan,
    pub carrier_amplitude: f64,
    pub tributaries: [Tributary; 2],
    /// Fraction of data-section samples where `|data| >= A`.
    pub min_phase_violation: f64,
}

impl DualPolFrame {
    pub fn data_range(&self) -> std::ops::Range<usize> {
        self.layout.data_start(self.sps)..self.layout.frame_len(self.sps)
    }
}

/// Zero-insertion upsampling followed by RRC filtering applied as its exact
/// spectral response on the circular record. Gain is chosen so that an RRC
/// matched filter sampled at the symbol instants returns the symbols.
pub fn pulse_shape(symbols: &[C64], sps: usize, rolloff: f64, baud_hz: f64) -> Result<Signal> {
    if sps < 2 {
        return Err(Error::invalid_input("pulse shaping needs sps >= 2"));
    }
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::invalid_input(format!(
            "roll-off {rolloff} outside [0, 1]"
        )));
    }
    if symbols.is_empty() {
        return Err(Error::invalid_input("no symbols to shape"));
    }
    let mut up = vec![C64::new(0.0, 0.0); symbols.len() * sps];
    for (k, &s) in symbols.iter().enumerate() {
        up[k * sps] = s;
    }
    let fs = sps as f64 * baud_hz;
    let x = Signal::new(up, fs)?;
    let gain = sps as f64;
    Ok(fft_filter(&x, |f| {
        C64::new(gain * rrc_response(f, baud_hz, rolloff), 0.0)
    }))
}

/// RRC matched filter; the receive half of [`pulse_shape`].
pub fn matched_filter(x: &Signal, rolloff: f64, baud_hz: f64) -> Signal {
    fft_filter(x, |f| C64::new(rrc_response(f, baud_hz, rolloff), 0.0))
}

/// `x + A exp(i 2 pi f_c n / fs)` with `A^2 / power(x)` set by the CSPR.
pub fn insert_carrier(x: &Signal, plan: &CarrierPlan) -> Result<Signal> {
    insert_carrier_with_reference(x, plan, x.power())
}

/// As [`insert_carrier`], with the CSPR referenced to `signal_power`.
pub fn insert_carrier_with_reference(
    x: &Signal,
    plan: &CarrierPlan,
    signal_power: f64,
) -> Result<Signal> {
    let fs = x.sample_rate();
    if 2.0 * plan.carrier_freq_hz >= fs {
        return Err(Error::invalid_config(format!(
            "carrier at {:.4e} Hz is not below Nyquist ({:.4e} Hz)",
            plan.carrier_freq_hz,
            fs / 2.0
        )));
    }
    let a = plan.amplitude(signal_power);
    let w = 2.0 * PI * plan.carrier_freq_hz / fs;
    Ok(Signal::from_parts(
        x.samples()
            .iter()
            .enumerate()
            .map(|(n, &s)| s + C64::from_polar(a, w * n as f64))
            .collect(),
        fs,
    ))
}

/// CSPR in dB measured by projecting onto the carrier tone.
pub fn measure_cspr(x: &Signal, carrier_freq_hz: f64) -> f64 {
    let w = 2.0 * PI * carrier_freq_hz / x.sample_rate();
    let n = x.len() as f64;
    let a: C64 = x
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &s)| s * C64::from_polar(1.0, -w * k as f64))
        .sum::<C64>()
        / n;
    let carrier = a.norm_sqr();
    let rest = x.power() - carrier;
    10.0 * (carrier / rest).log10()
}

pub fn papr_db(x: &Signal) -> f64 {
    let peak = x.samples().iter().map(|s| s.norm_sqr()).fold(0.0, f64::max);
    10.0 * (peak / x.power()).log10()
}

/// Fraction of samples with `|x| >= carrier_amp`.
pub fn min_phase_monitor(signal_bb: &Signal, carrier_amp: f64) -> f64 {
    let hits = signal_bb
        .samples()
        .iter()
        .filter(|s| s.norm() >= carrier_amp)
        .count();
    hits as f64 / signal_bb.len() as f64
}

fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn build_tributary(rng: &mut impl Rng, fmt: ModFormat, layout: &FrameLayout) -> Result<Tributary> {
    let k = fmt.bits_per_symbol();
    let lead = map_bits(&random_bits(rng, layout.guard_symbols * k), fmt)?;
    let pilots = map_bits(&random_bits(rng, layout.pilot_symbols * k), fmt)?;
    let payload_bits = random_bits(rng, layout.payload_symbols * k);
    let payload = map_bits(&payload_bits, fmt)?;
    let tail = map_bits(&random_bits(rng, layout.guard_symbols * k), fmt)?;
    let mut symbols = Vec::with_capacity(layout.data_symbols());
    symbols.extend_from_slice(&lead);
    symbols.extend_from_slice(&pilots);
    symbols.extend_from_slice(&payload);
    symbols.extend_from_slice(&tail);
    Ok(Tributary {
        symbols,
        pilots,
        payload_bits,
        payload,
    })
}

/// Builds the full dual-polarization transmit frame; bit-identical for equal
/// `(cfg, rng_seed)`.
pub fn build_frame(cfg: &LinkConfig, rng_seed: u64) -> Result<DualPolFrame> {
    cfg.validate()?;
    let link = &cfg.link;
    let layout = &cfg.frame;
    let sps = link.samples_per_symbol;
    let fs = sps as f64 * link.baud_hz;
    let plan = CarrierPlan::new(link.baud_hz, link.rolloff, link.cspr_db, link.guard_band_hz);

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(rng_seed, Stream::Bits));
    let tributaries = [
        build_tributary(&mut rng, link.format, layout)?,
        build_tributary(&mut rng, link.format, layout)?,
    ];

    let r = plan.ratio();
    let data_power = 1.0 / (1.0 + r);
    let carrier_amplitude = (r / (1.0 + r)).sqrt();

    let mut violations = 0usize;
    let mut counted = 0usize;
    let mut pols = Vec::with_capacity(2);
    for trib in &tributaries {
        let mut shaped = pulse_shape(&trib.symbols, sps, link.rolloff, link.baud_hz)?;
        if cfg.equalizer.cd_comp == CdCompArm::Pre {
            shaped = apply_cd(&shaped, &cfg.fiber, CdDirection::Inverse);
        }
        let shaped = shaped.scaled((data_power / shaped.power()).sqrt());
        violations += shaped
            .samples()
            .iter()
            .filter(|s| s.norm() >= carrier_amplitude)
            .count();
        counted += shaped.len();
        pols.push(insert_carrier_with_reference(&shaped, &plan, data_power)?);
    }

    let fields = training_fields();
    let assemble = |pol: usize, data: &Signal| {
        let mut frame = vec![C64::new(0.0, 0.0); layout.frame_len(sps)];
        for (slot, f) in fields.iter().enumerate() {
            let v = if pol == 0 { f.0 } else { f.1 };
            let start = layout.slot_start(slot, sps);
            frame[start..start + layout.training_slot_samples].fill(v);
        }
        frame[layout.data_start(sps)..].copy_from_slice(data.samples());
        Signal::from_parts(frame, fs)
    };
    let x = assemble(0, &pols[0]);
    let y = assemble(1, &pols[1]);

    Ok(DualPolFrame {
        x,
        y,
        layout: layout.clone(),
        sps,
        baud_hz: link.baud_hz,
        rolloff: link.rolloff,
        format: link.format,
        carrier: plan,
        carrier_amplitude,
        tributaries,
        min_phase_violation: violations as f64 / counted as f64,
    })
}
