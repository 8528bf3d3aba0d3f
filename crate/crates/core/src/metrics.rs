//! Decisions and quality metrics: hard-decision demapping, BER with Wilson
//! intervals, EVM-based SNR and a periodogram OSNR estimate.

use std::io::Write;

use crate::error::{Error, Result};
use crate::modulation::{map_bits, push_label_bits, ModFormat};
use crate::signal::{fft_freqs, periodogram, Signal, C64};

/// Report ceiling for SNR and OSNR estimates, in dB.
pub const REPORT_CEILING_DB: f64 = 60.0;

/// Nearest-point decisions as label bits; ties go to the lower label.
pub fn hard_decide(symbols: &[C64], fmt: ModFormat) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * fmt.bits_per_symbol());
    for &z in symbols {
        push_label_bits(fmt.nearest(z), fmt, &mut bits);
    }
    bits
}

pub fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Complex scalar `alpha` minimizing `sum |alpha * symbols - reference|^2`.
pub fn ls_alignment(symbols: &[C64], reference: &[C64]) -> C64 {
    let num: C64 = symbols
        .iter()
        .zip(reference)
        .map(|(s, r)| s.conj() * r)
        .sum();
    let den: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
    if den > 0.0 {
        num / den
    } else {
        C64::new(1.0, 0.0)
    }
}

/// SNR in dB from the EVM against a known reference, after one least-squares
/// complex-scalar alignment. Capped at [`REPORT_CEILING_DB`].
pub fn evm_snr(symbols: &[C64], reference: &[C64]) -> Result<f64> {
    if symbols.len() != reference.len() || symbols.is_empty() {
        return Err(Error::invalid_input("EVM needs equal, non-empty sequences"));
    }
    let p_ref = reference.iter().map(|r| r.norm_sqr()).sum::<f64>();
    if !(p_ref > 0.0) {
        return Err(Error::invalid_input("EVM reference has zero power"));
    }
    let a = ls_alignment(symbols, reference);
    let err: f64 = symbols
        .iter()
        .zip(reference)
        .map(|(s, r)| (a * s - r).norm_sqr())
        .sum();
    Ok(cap_db(-10.0 * (err / p_ref).log10()))
}

/// Decision-directed variant: the reference is the nearest constellation
/// point of each aligned symbol.
pub fn evm_snr_dd(symbols: &[C64], fmt: ModFormat) -> Result<f64> {
    if symbols.is_empty() {
        return Err(Error::invalid_input("EVM needs a non-empty sequence"));
    }
    let p: f64 = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / symbols.len() as f64;
    let k = if p > 0.0 { 1.0 / p.sqrt() } else { 1.0 };
    let scaled: Vec<C64> = symbols.iter().map(|s| s * k).collect();
    let reference: Vec<C64> = scaled
        .iter()
        .map(|&z| fmt.constellation()[fmt.nearest(z)])
        .collect();
    evm_snr(&scaled, &reference)
}

fn cap_db(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.min(REPORT_CEILING_DB)
    }
}

/// Wilson score interval at normal quantile `z` (1.96 for 95%).
pub fn wilson_interval(errors: u64, bits: u64, z: f64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 1.0);
    }
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolResult {
    pub errors: u64,
    pub bits: u64,
    pub snr_db: f64,
}

impl PolResult {
    pub fn ber(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkResult {
    pub ber: f64,
    pub snr_db: f64,
    pub bits_counted: u64,
    pub errors_counted: u64,
    pub per_pol: [PolResult; 2],
}

impl LinkResult {
    pub fn wilson95(&self) -> (f64, f64) {
        wilson_interval(self.errors_counted, self.bits_counted, 1.96)
    }
}

/// Aligns one tributary to its reference, decides and counts errors.
pub fn score_pol(
    symbols: &[C64],
    reference: &[C64],
    reference_bits: &[u8],
    fmt: ModFormat,
) -> Result<PolResult> {
    if reference_bits.len() != reference.len() * fmt.bits_per_symbol() {
        return Err(Error::invalid_input(
            "reference bits do not match reference symbols",
        ));
    }
    let snr_db = evm_snr(symbols, reference)?;
    // Decisions happen on the native grid, so align to the unscaled points.
    let native = map_bits(reference_bits, fmt)?;
    let a = ls_alignment(symbols, &native);
    let aligned: Vec<C64> = symbols.iter().map(|s| a * s).collect();
    let bits = hard_decide(&aligned, fmt);
    Ok(PolResult {
        errors: count_bit_errors(&bits, reference_bits),
        bits: bits.len() as u64,
        snr_db,
    })
}

/// Combines both polarizations. The link SNR is the mean of the per-pol
/// linear SNRs.
pub fn combine(per_pol: [PolResult; 2]) -> LinkResult {
    let errors: u64 = per_pol.iter().map(|p| p.errors).sum();
    let bits: u64 = per_pol.iter().map(|p| p.bits).sum();
    let lin = per_pol
        .iter()
        .map(|p| 10f64.powf(p.snr_db / 10.0))
        .sum::<f64>()
        / 2.0;
    LinkResult {
        ber: errors as f64 / bits as f64,
        snr_db: cap_db(10.0 * lin.log10()),
        bits_counted: bits,
        errors_counted: errors,
        per_pol,
    }
}

/// OSNR from the summed periodogram of both polarizations: the mean bin
/// power outside `signal_band` gives the noise floor, the in-band excess over
/// that floor gives the signal power.
pub fn estimate_osnr(
    x: &Signal,
    y: &Signal,
    signal_band: (f64, f64),
    ref_bw_hz: f64,
) -> Result<f64> {
    if x.len() != y.len() || x.sample_rate() != y.sample_rate() {
        return Err(Error::invalid_input(
            "polarization tributaries differ in length or rate",
        ));
    }
    let (lo, hi) = signal_band;
    let fs = x.sample_rate();
    let freqs = fft_freqs(x.len(), fs);
    let px = periodogram(x);
    let py = periodogram(y);
    let (mut in_pow, mut in_bins, mut out_pow, mut out_bins) = (0.0, 0usize, 0.0, 0usize);
    for ((f, a), b) in freqs.iter().zip(&px).zip(&py) {
        if *f >= lo && *f <= hi {
            in_pow += a + b;
            in_bins += 1;
        } else {
            out_pow += a + b;
            out_bins += 1;
        }
    }
    if out_bins == 0 {
        return Err(Error::EstimationUnavailable(
            "signal band covers the whole spectrum; no guard region for the noise floor".into(),
        ));
    }
    let floor = out_pow / out_bins as f64;
    let signal = in_pow - floor * in_bins as f64;
    let df = fs / x.len() as f64;
    let noise_ref = floor / df * ref_bw_hz;
    if !(noise_ref > 0.0) || signal / noise_ref > 10f64.powf(REPORT_CEILING_DB / 10.0) {
        return Ok(REPORT_CEILING_DB);
    }
    Ok(10.0 * (signal / noise_ref).log10())
}

/// Constellation dump: `re,im,pol,decided_index`.
pub fn write_constellation_csv(mut w: impl Write, pols: [&[C64]; 2], fmt: ModFormat) -> Result<()> {
    writeln!(w, "re,im,pol,decided_index")?;
    for (p, syms) in pols.iter().enumerate() {
        let name = if p == 0 { "x" } else { "y" };
        for z in syms.iter() {
            writeln!(w, "{:e},{:e},{},{}", z.re, z.im, name, fmt.nearest(*z))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::load_ase;
    use crate::modulation::ALL_FORMATS;
    use crate::txdsp::pulse_shape;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::function::erf::erfc;

    fn q(x: f64) -> f64 {
        0.5 * erfc(x / std::f64::consts::SQRT_2)
    }

    /// Exact Gray 16QAM bit error rate at symbol SNR `snr` (linear).
    fn ber_16qam(snr: f64) -> f64 {
        let a = (snr / 5.0).sqrt();
        (3.0 * q(a) + 2.0 * q(3.0 * a) - q(5.0 * a)) / 4.0
    }

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    fn awgn(s: &[C64], snr_db: f64, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (0.5 / 10f64.powf(snr_db / 10.0)).sqrt();
        s.iter()
            .map(|v| v + C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sd)
            .collect()
    }

    #[test]
    fn clean_symbols_decode_for_every_format() {
        for fmt in ALL_FORMATS {
            let bits = random_bits(fmt.bits_per_symbol() * 5000, 1);
            let syms = map_bits(&bits, fmt).unwrap();
            assert_eq!(hard_decide(&syms, fmt), bits, "{fmt}");
        }
    }

    #[test]
    fn midpoint_goes_to_lower_label() {
        let pts = ModFormat::Qam16.constellation();
        // Labels 0 and 1 are horizontal neighbours differing in the last Q bit.
        let (i, j) = (0usize, 1usize);
        let mid = (pts[i] + pts[j]) / 2.0;
        assert!(((pts[i] - mid).norm() - (pts[j] - mid).norm()).abs() < 1e-15);
        assert_eq!(ModFormat::Qam16.nearest(mid), i.min(j));
    }

    #[test]
    fn awgn_ber_matches_analytic_at_20db() {
        let n_sym = 10_000_000;
        let bits = random_bits(4 * n_sym, 2);
        let syms = map_bits(&bits, ModFormat::Qam16).unwrap();
        let rx = awgn(&syms, 20.0, 3);
        let errors = count_bit_errors(&hard_decide(&rx, ModFormat::Qam16), &bits);
        let ber = errors as f64 / bits.len() as f64;
        let want = ber_16qam(100.0);
        assert!(
            (ber / want - 1.0).abs() < 0.2,
            "ber {ber:e} analytic {want:e} ({errors} errors)"
        );
    }

    #[test]
    fn snr_and_ber_track_analytic_curve() {
        let n_sym = 200_000;
        let bits = random_bits(4 * n_sym, 4);
        let syms = map_bits(&bits, ModFormat::Qam16).unwrap();
        for (k, snr_db) in [12.0, 14.0, 16.0].into_iter().enumerate() {
            let rx = awgn(&syms, snr_db, 10 + k as u64);
            let measured = evm_snr(&rx, &syms).unwrap();
            let ber = count_bit_errors(&hard_decide(&rx, ModFormat::Qam16), &bits) as f64
                / bits.len() as f64;
            // SNR at which the analytic curve reaches the measured BER.
            let (mut lo, mut hi) = (0.0f64, 30.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if ber_16qam(10f64.powf(mid / 10.0)) > ber {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!((lo - measured).abs() < 0.5, "snr {measured} vs curve {lo}");
        }
    }

    #[test]
    fn evm_snr_cases() {
        let syms = map_bits(&random_bits(4 * 100_000, 5), ModFormat::Qam16).unwrap();
        assert_eq!(evm_snr(&syms, &syms).unwrap(), REPORT_CEILING_DB);
        let rx = awgn(&syms, 17.0, 6);
        let snr = evm_snr(&rx, &syms).unwrap();
        assert!((snr - 17.0).abs() < 0.1, "{snr}");
        let rotated: Vec<C64> = rx.iter().map(|v| v * C64::from_polar(2.5, 1.1)).collect();
        assert!((evm_snr(&rotated, &syms).unwrap() - snr).abs() < 1e-9);
        assert!(evm_snr(&syms, &vec![C64::new(0.0, 0.0); syms.len()]).is_err());
        let dd = evm_snr_dd(&rx, ModFormat::Qam16).unwrap();
        assert!((dd - snr).abs() < 0.5);
    }

    #[test]
    fn ber_invariant_under_common_scaling() {
        let bits = random_bits(4 * 20_000, 7);
        let syms = map_bits(&bits, ModFormat::Qam16).unwrap();
        let rx = awgn(&syms, 14.0, 8);
        let a = score_pol(&rx, &syms, &bits, ModFormat::Qam16).unwrap();
        let k = C64::from_polar(0.3, -2.0);
        let rx2: Vec<C64> = rx.iter().map(|v| v * k).collect();
        let ref2: Vec<C64> = syms.iter().map(|v| v * k).collect();
        let b = score_pol(&rx2, &ref2, &bits, ModFormat::Qam16).unwrap();
        assert_eq!(a.errors, b.errors);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(100, 100_000, 1.96);
        assert!(lo < 1e-3 && hi > 1e-3);
        // Reference values for 100 / 100000 at 95%.
        assert!((lo - 8.22e-4).abs() < 5e-6, "{lo}");
        assert!((hi - 1.216e-3).abs() < 5e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.005);
    }

    fn test_pair(n_sym: usize) -> (Signal, Signal) {
        let baud = 10e9;
        let sx = map_bits(&random_bits(4 * n_sym, 20), ModFormat::Qam16).unwrap();
        let sy = map_bits(&random_bits(4 * n_sym, 21), ModFormat::Qam16).unwrap();
        (
            pulse_shape(&sx, 4, 0.1, baud).unwrap(),
            pulse_shape(&sy, 4, 0.1, baud).unwrap(),
        )
    }

    #[test]
    fn osnr_estimate_closes_loop() {
        let (x, y) = test_pair(1 << 18);
        let band = (-5.6e9, 5.6e9);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (nx, ny) = load_ase(&x, &y, 30.0, 12.5e9, &mut rng).unwrap();
        let est = estimate_osnr(&nx, &ny, band, 12.5e9).unwrap();
        assert!((est - 30.0).abs() < 0.3, "{est}");
        let (nx, ny) = load_ase(&x, &y, 27.0, 12.5e9, &mut rng).unwrap();
        let est2 = estimate_osnr(&nx, &ny, band, 12.5e9).unwrap();
        assert!(((est - est2) - 3.0).abs() < 0.2, "{est} {est2}");
        assert!(estimate_osnr(&x, &y, band, 12.5e9).unwrap() >= REPORT_CEILING_DB);
        assert!(matches!(
            estimate_osnr(&x, &y, (-1e12, 1e12), 12.5e9),
            Err(Error::EstimationUnavailable(_))
        ));
    }

    #[test]
    fn constellation_csv_rows() {
        let s = [C64::new(0.3, 0.3), C64::new(-0.9, 0.3)];
        let mut buf = Vec::new();
        write_constellation_csv(&mut buf, [&s, &s[..1]], ModFormat::Qam16).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re,im,pol,decided_index");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",x,0"));
        assert!(lines[3].contains(",y,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn decode_inverts_map(seed in any::<u64>(), fmt_idx in 0usize..5) {
            let fmt = ALL_FORMATS[fmt_idx];
            let bits = random_bits(fmt.bits_per_symbol() * 257, seed);
            let syms = map_bits(&bits, fmt).unwrap();
            prop_assert_eq!(hard_decide(&syms, fmt), bits);
        }
    }
}
