//! Fiber and front-end impairments: chromatic dispersion, polarization
//! rotation, ASE noise loading, converter bandwidth, quantization and IQ
//! imbalance.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fft_filter, fft_freqs, RealSignal, Signal, C64};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 3-dB angular frequency of the unit-delay 4th-order Bessel prototype.
const BESSEL4_W3DB: f64 = 2.113_917_674_904_216;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberParams {
    pub length_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub wavelength_nm: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            length_km: 80.0,
            dispersion_ps_nm_km: 17.0,
            wavelength_nm: 1550.12,
        }
    }
}

impl FiberParams {
    pub fn back_to_back() -> Self {
        Self {
            length_km: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km.is_finite() && self.length_km >= 0.0) {
            return Err(Error::invalid_config(format!(
                "fiber.length_km must be >= 0, got {}",
                self.length_km
            )));
        }
        if !(1260.0..=1650.0).contains(&self.wavelength_nm) {
            return Err(Error::invalid_config(format!(
                "fiber.wavelength_nm must lie in [1260, 1650], got {}",
                self.wavelength_nm
            )));
        }
        if !self.dispersion_ps_nm_km.is_finite() {
            return Err(Error::invalid_config(
                "fiber.dispersion_ps_nm_km must be finite",
            ));
        }
        Ok(())
    }

    /// Group-delay slope `lambda^2 D L / c` in seconds per hertz.
    pub fn delay_slope_s_per_hz(&self) -> f64 {
        let lambda = self.wavelength_nm * 1e-9;
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let l = self.length_km * 1e3;
        lambda * lambda * d * l / SPEED_OF_LIGHT
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdDirection {
    Forward,
    Inverse,
}

/// All-pass dispersion filter `exp(-/+ i pi lambda^2 D L f^2 / c)`.
///
/// Forward propagation delays positive frequencies (group delay `+K f`).
pub fn apply_cd(x: &Signal, fiber: &FiberParams, direction: CdDirection) -> Signal {
    let k = fiber.delay_slope_s_per_hz();
    if k == 0.0 {
        return x.clone();
    }
    let sign = match direction {
        CdDirection::Forward => -1.0,
        CdDirection::Inverse => 1.0,
    };
    fft_filter(x, |f| C64::from_polar(1.0, sign * PI * k * f * f))
}

/// Unitary 2x2 Jones matrix acting on `(Ex, Ey)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesRotation {
    m: [[C64; 2]; 2],
}

impl JonesRotation {
    pub fn new(m: [[C64; 2]; 2]) -> Result<Self> {
        let u = Self { m };
        let err = u.unitarity_error();
        if !(err <= 1e-12) {
            return Err(Error::invalid_input(format!(
                "Jones matrix is not unitary (|U^H U - I| = {err:.3e})"
            )));
        }
        Ok(u)
    }

    pub fn identity() -> Self {
        let o = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        Self {
            m: [[o, z], [z, o]],
        }
    }

    /// Real rotation by `theta` radians.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: [
                [C64::new(c, 0.0), C64::new(-s, 0.0)],
                [C64::new(s, 0.0), C64::new(c, 0.0)],
            ],
        }
    }

    /// Haar-distributed random unitary.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut g = [0.0f64; 4];
        for v in &mut g {
            *v = rng.sample(StandardNormal);
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a = C64::new(g[0], g[1]) / norm;
        let b = C64::new(g[2], g[3]) / norm;
        let phase = C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        Self {
            m: [
                [a * phase, b * phase],
                [-b.conj() * phase, a.conj() * phase],
            ],
        }
    }

    pub fn matrix(&self) -> [[C64; 2]; 2] {
        self.m
    }

    fn unitarity_error(&self) -> f64 {
        let m = &self.m;
        let mut err: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let v = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max((v - want).norm());
            }
        }
        err
    }
}

pub fn apply_rotation(x: &Signal, y: &Signal, u: &JonesRotation) -> Result<(Signal, Signal)> {
    if x.len() != y.len() || x.sample_rate() != y.sample_rate() {
        return Err(Error::invalid_input(
            "polarization tributaries differ in length or sample rate",
        ));
    }
    let m = u.matrix();
    let (ox, oy): (Vec<C64>, Vec<C64>) = x
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(&a, &b)| (m[0][0] * a + m[0][1] * b, m[1][0] * a + m[1][1] * b))
        .unzip();
    Ok((
        Signal::from_parts(ox, x.sample_rate()),
        Signal::from_parts(oy, x.sample_rate()),
    ))
}

/// Adds circular white Gaussian ASE to both polarizations so that the total
/// dual-polarization power over the noise power in `ref_bw_hz` equals
/// `osnr_db`. An infinite OSNR adds nothing.
pub fn load_ase(
    x: &Signal,
    y: &Signal,
    osnr_db: f64,
    ref_bw_hz: f64,
    rng: &mut impl Rng,
) -> Result<(Signal, Signal)> {
    load_ase_with_power(x, y, osnr_db, ref_bw_hz, x.power() + y.power(), rng)
}

/// As [`load_ase`] but against an explicit dual-polarization signal power.
pub fn load_ase_with_power(
    x: &Signal,
    y: &Signal,
    osnr_db: f64,
    ref_bw_hz: f64,
    signal_power: f64,
    rng: &mut impl Rng,
) -> Result<(Signal, Signal)> {
    if x.len() != y.len() || x.sample_rate() != y.sample_rate() {
        return Err(Error::invalid_input(
            "polarization tributaries differ in length or sample rate",
        ));
    }
    if osnr_db.is_nan() || osnr_db == f64::NEG_INFINITY {
        return Err(Error::invalid_input(format!(
            "OSNR must be finite or +inf, got {osnr_db}"
        )));
    }
    if osnr_db == f64::INFINITY {
        return Ok((x.clone(), y.clone()));
    }
    let sigma = ase_sigma_per_quadrature(signal_power, osnr_db, ref_bw_hz, x.sample_rate());
    let mut add = |s: &Signal| {
        s.map(|v| {
            let n: (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            v + C64::new(n.0, n.1) * sigma
        })
    };
    let nx = add(x);
    let ny = add(y);
    Ok((nx, ny))
}

/// Per-quadrature, per-polarization noise standard deviation at sample rate `fs`.
pub fn ase_sigma_per_quadrature(signal_power: f64, osnr_db: f64, ref_bw_hz: f64, fs: f64) -> f64 {
    let noise_in_ref = signal_power / 10f64.powf(osnr_db / 10.0);
    let psd = noise_in_ref / ref_bw_hz; // both polarizations
    (psd * fs / 4.0).sqrt()
}

/// Transmitter or receiver front-end impairments. Zero values switch a stage off.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpairmentSet {
    /// Quantizer resolution at DC.
    pub enob_bits: f64,
    /// Loss of effective resolution per GHz of offset from DC.
    pub enob_slope_bits_per_ghz: f64,
    pub bandwidth_3db_hz: f64,
    pub iq_gain_imbalance_db: f64,
    pub iq_phase_deg: f64,
    pub iq_skew_s: f64,
}

impl ImpairmentSet {
    pub fn validate(&self, section: &str) -> Result<()> {
        let fields = [
            ("enob_bits", self.enob_bits),
            ("enob_slope_bits_per_ghz", self.enob_slope_bits_per_ghz),
            ("bandwidth_3db_hz", self.bandwidth_3db_hz),
            ("iq_gain_imbalance_db", self.iq_gain_imbalance_db),
            ("iq_phase_deg", self.iq_phase_deg),
            ("iq_skew_s", self.iq_skew_s),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid_config(format!(
                    "{section}.{name} must be finite"
                )));
            }
        }
        if self.enob_bits < 0.0 || self.bandwidth_3db_hz < 0.0 || self.enob_slope_bits_per_ghz < 0.0
        {
            return Err(Error::invalid_config(format!(
                "{section}: enob_bits, enob_slope_bits_per_ghz and bandwidth_3db_hz must be >= 0"
            )));
        }
        Ok(())
    }

    pub fn has_iq_terms(&self) -> bool {
        self.iq_gain_imbalance_db != 0.0 || self.iq_phase_deg != 0.0 || self.iq_skew_s != 0.0
    }
}

/// Magnitude of the 4th-order Bessel low-pass at `f / f3db` (zero phase).
pub fn bessel4_magnitude(f_norm: f64) -> f64 {
    let w = BESSEL4_W3DB * f_norm;
    let s = C64::new(0.0, w);
    let s2 = s * s;
    let den = s2 * s2 + 10.0 * s2 * s + 45.0 * s2 + 105.0 * s + 105.0;
    (105.0 / den).norm()
}

fn lowpass(x: &Signal, f3db: f64) -> Signal {
    fft_filter(x, |f| C64::new(bessel4_magnitude(f / f3db), 0.0))
}

/// Delays a real rail by `tau` seconds via a linear-phase spectral shift.
fn fractional_delay(x: &[f64], tau: f64, fs: f64) -> Vec<f64> {
    let sig = Signal::from_parts(x.iter().map(|&v| C64::new(v, 0.0)).collect(), fs);
    let n = x.len();
    let freqs = fft_freqs(n, fs);
    let bins: Vec<C64> = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            // The Nyquist bin of an even record has no partner; keep it real.
            if n.is_multiple_of(2) && k == n / 2 {
                C64::new((PI * f * tau * 2.0).cos(), 0.0)
            } else {
                C64::from_polar(1.0, -2.0 * PI * f * tau)
            }
        })
        .collect();
    crate::signal::fft_filter_bins(&sig, &bins)
        .samples()
        .iter()
        .map(|s| s.re)
        .collect()
}

/// Midrise uniform quantizer with `2^bits` levels spanning `[lo, hi]`; values
/// outside clip to the end levels.
pub fn quantize(samples: &mut [f64], bits: f64, lo: f64, hi: f64) {
    let levels = 2f64.powf(bits);
    let step = (hi - lo) / levels;
    if !(step > 0.0) {
        return;
    }
    let top = levels.ceil() - 1.0;
    for v in samples.iter_mut() {
        let idx = ((*v - lo) / step).floor().clamp(0.0, top);
        *v = lo + (idx + 0.5) * step;
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Quantizes one real rail over mean +/- 4 sigma and, when a slope is set, adds
/// the extra converter noise that makes the effective resolution at offset
/// `f` equal `enob_bits - slope * |f|`. That excess noise passes through the
/// converter low-pass when a bandwidth is set.
fn digitize(rail: &mut [f64], fs: f64, imp: &ImpairmentSet, rng: &mut impl Rng) {
    if imp.enob_bits <= 0.0 {
        return;
    }
    let (m, sd) = mean_std(rail);
    if sd == 0.0 {
        return;
    }
    let (lo, hi) = (m - 4.0 * sd, m + 4.0 * sd);
    quantize(rail, imp.enob_bits, lo, hi);
    if imp.enob_slope_bits_per_ghz > 0.0 {
        let step = (hi - lo) / 2f64.powf(imp.enob_bits);
        let base_var = step * step / 12.0;
        let white = Signal::from_parts(
            (0..rail.len())
                .map(|_| C64::new(rng.sample(StandardNormal), 0.0))
                .collect(),
            fs,
        );
        let slope = imp.enob_slope_bits_per_ghz;
        let bw = imp.bandwidth_3db_hz;
        let shaped = fft_filter(&white, |f| {
            let excess = 4f64.powf(slope * f.abs() * 1e-9) - 1.0;
            let analog = if bw > 0.0 {
                bessel4_magnitude(f / bw)
            } else {
                1.0
            };
            C64::new((base_var * excess).sqrt() * analog, 0.0)
        });
        rail.iter_mut()
            .zip(shaped.samples())
            .for_each(|(v, n)| *v += n.re);
    }
}

/// Transmitter chain on a complex baseband tributary: IQ gain/phase/skew, then
/// the converter low-pass, then quantization of I and Q.
pub fn apply_impairments(x: &Signal, imp: &ImpairmentSet, rng: &mut impl Rng) -> Signal {
    apply_converter(&apply_iq_imbalance(x, imp), imp, rng)
}

/// `I' = I`, `Q' = g (Q cos phi - I sin phi)` delayed by the skew.
pub fn apply_iq_imbalance(x: &Signal, imp: &ImpairmentSet) -> Signal {
    if !imp.has_iq_terms() {
        return x.clone();
    }
    let fs = x.sample_rate();
    let g = 10f64.powf(imp.iq_gain_imbalance_db / 20.0);
    let (s, c) = imp.iq_phase_deg.to_radians().sin_cos();
    let i: Vec<f64> = x.samples().iter().map(|v| v.re).collect();
    let mut q: Vec<f64> = x
        .samples()
        .iter()
        .map(|v| g * (v.im * c - v.re * s))
        .collect();
    if imp.iq_skew_s != 0.0 {
        q = fractional_delay(&q, imp.iq_skew_s, fs);
    }
    Signal::from_parts(
        i.into_iter().zip(q).map(|(a, b)| C64::new(a, b)).collect(),
        fs,
    )
}

/// Converter low-pass followed by quantization of I and Q.
pub fn apply_converter(x: &Signal, imp: &ImpairmentSet, rng: &mut impl Rng) -> Signal {
    let fs = x.sample_rate();
    let mut out = x.clone();
    if imp.bandwidth_3db_hz > 0.0 {
        out = lowpass(&out, imp.bandwidth_3db_hz);
    }
    if imp.enob_bits > 0.0 {
        let mut i: Vec<f64> = out.samples().iter().map(|v| v.re).collect();
        let mut q: Vec<f64> = out.samples().iter().map(|v| v.im).collect();
        digitize(&mut i, fs, imp, rng);
        digitize(&mut q, fs, imp, rng);
        out = Signal::from_parts(
            i.into_iter().zip(q).map(|(a, b)| C64::new(a, b)).collect(),
            fs,
        );
    }
    out
}

/// Receiver digitization of one photodetected rail: low-pass then quantization.
pub fn apply_rail_impairments(
    x: &RealSignal,
    imp: &ImpairmentSet,
    rng: &mut impl Rng,
) -> RealSignal {
    let fs = x.sample_rate();
    let mut out = x.clone();
    if imp.bandwidth_3db_hz > 0.0 {
        out = lowpass(&out.to_complex(), imp.bandwidth_3db_hz).real();
    }
    if imp.enob_bits > 0.0 {
        digitize(out.samples_mut(), fs, imp, rng);
    }
    out
}
